use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nonlocal_core::properties::{
    energy_inequality_trial, markov_trial, merge_trials, scalar_lemma_suite, RobinParams,
};
use nonlocal_core::{
    assemble_p2_operator, balakrishnan_power, decay_report, default_tau, domination_trajectory_suite, elliptic_extension,
    exponents, linear_extension_explicit, run_flow, solve_elliptic, spectral_power, subordinated_form,
    subordinated_kernel, two_point_exact, CheckReport, EnergySpec, FlowConfig, Forcing, HolderExponents, Potential,
    Trajectory,
};
use rand::Rng;
use serde_json::{json, Value};

use crate::output::{check_json, fmt_f64, num, par_map, thread_cap, write_json, Table};
use crate::scenario::{exterior_vector, load_scenario, Built, CheckSpec, LoadedScenario, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A check reported `passed = false`.
    Failed,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub report: Value,
    pub checks: Vec<CheckReport>,
    pub out_dir: PathBuf,
}

/// 0 on success, 2 when a check failed, 1 on error.
pub fn exit_code(r: &Result<Outcome>) -> i32 {
    match r {
        Ok(o) if o.status == Status::Ok => 0,
        Ok(_) => 2,
        Err(_) => 1,
    }
}

/// Output directory: `out` if given, else the scenario's `out`, else `out/<name>`
/// next to the scenario file.
pub fn resolve_out(ls: &LoadedScenario, out: Option<&Path>) -> PathBuf {
    match (out, &ls.scenario.out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => ls.base.join(o),
        (None, None) => ls.base.join("out").join(&ls.name),
    }
}

pub fn run_file(path: &Path, out: Option<&Path>) -> Result<Outcome> {
    let ls = load_scenario(path)?;
    let dir = resolve_out(&ls, out);
    run_scenario(&ls, &dir)
}

/// Runs one scenario, writing `report.json` and the task's CSV files into `out_dir`.
/// On error a `report.json` with the error chain is still written when possible.
pub fn run_scenario(ls: &LoadedScenario, out_dir: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let started = std::time::Instant::now();
    let res = dispatch(ls, out_dir);
    log::info!("{}: finished in {:.3} s", ls.name, started.elapsed().as_secs_f64());
    match res {
        Ok((mut report, checks)) => {
            let status = if checks.iter().all(|c| c.passed) {
                Status::Ok
            } else {
                Status::Failed
            };
            report["name"] = json!(ls.name);
            report["status"] = json!(if status == Status::Ok { "ok" } else { "failed" });
            if !checks.is_empty() {
                report["checks"] = Value::Array(checks.iter().map(check_json).collect());
                let mut t = Table::new(&["name", "trials", "max_violation", "tolerance", "passed", "worst_case"]);
                for c in &checks {
                    t.push(vec![
                        c.name.clone(),
                        c.trials.to_string(),
                        fmt_f64(c.max_violation),
                        fmt_f64(c.tolerance),
                        c.passed.to_string(),
                        c.worst_case.clone(),
                    ]);
                }
                t.write(&out_dir.join("checks.csv"))?;
            }
            write_json(&out_dir.join("report.json"), &report)?;
            Ok(Outcome {
                status,
                report,
                checks,
                out_dir: out_dir.to_path_buf(),
            })
        }
        Err(e) => {
            let report = json!({"name": ls.name, "status": "error", "error": format!("{e:#}")});
            let _ = write_json(&out_dir.join("report.json"), &report);
            Err(e.context(format!("scenario `{}`", ls.name)))
        }
    }
}

type TaskResult = Result<(Value, Vec<CheckReport>)>;

fn dispatch(ls: &LoadedScenario, out: &Path) -> TaskResult {
    let task = ls.scenario.task;
    let mut report = json!({"task": format!("{task:?}").to_lowercase()});
    if task == Task::Exponents {
        return exponents_task(ls, out, report);
    }
    if let Some(CheckSpec::EnergyInequalities { .. } | CheckSpec::ScalarLemmas { .. }) = ls.scenario.check {
        return check_task(ls, None, None, out, report);
    }
    let built = ls.build_space()?;
    report["space"] = json!({
        "n_points": built.space.n_points(),
        "n_omega": built.thickness.n_omega,
        "n_exterior": built.thickness.n_exterior,
        "reachable": built.thickness.reachable,
        "unreachable_indices": built.thickness.unreachable_indices,
        "pairs": built.kernel.nnz(),
    });
    let spec = ls.energy_spec(&built)?;
    match task {
        Task::Solve => solve_task(ls, &spec, out, report),
        Task::Extend => extend_task(ls, &spec, out, report),
        Task::Flow => flow_task(ls, &spec, out, report),
        Task::Spectral => spectral_task(ls, &spec, out, report),
        Task::Check => check_task(ls, Some(&built), Some(&spec), out, report),
        Task::Exponents => unreachable!(),
    }
}

fn solve_json(r: &nonlocal_core::SolveReport) -> Value {
    json!({
        "converged": r.converged,
        "sweeps": r.sweeps,
        "final_residual": num(r.final_residual),
        "threshold": num(r.threshold),
        "energy": num(r.energy_value),
        "objective": num(r.objective),
        "objective_monotone": r.objective_monotone,
    })
}

fn full_table(spec: &EnergySpec, w: &[f64]) -> Table {
    let mut t = Table::new(&["index", "omega", "value"]);
    for (i, x) in w.iter().enumerate() {
        t.push(vec![i.to_string(), spec.space().is_omega(i).to_string(), fmt_f64(*x)]);
    }
    t
}

fn not_converged(r: &nonlocal_core::SolveReport) -> anyhow::Error {
    anyhow::anyhow!(
        "solver did not converge after {} sweeps (residual {:e}, threshold {:e})",
        r.sweeps,
        r.final_residual,
        r.threshold
    )
}

fn solve_task(ls: &LoadedScenario, spec: &EnergySpec, out: &Path, mut report: Value) -> TaskResult {
    let f = ls.scenario.forcing.as_ref().context("field `forcing` is required for solve")?;
    let (w, rep) = solve_elliptic(spec, f, &ls.solve_options()?)?;
    report["solver"] = solve_json(&rep);
    if !rep.converged {
        return Err(not_converged(&rep));
    }
    full_table(spec, &w).write(&out.join("solution.csv"))?;
    Ok((report, Vec::new()))
}

fn extend_task(ls: &LoadedScenario, spec: &EnergySpec, out: &Path, mut report: Value) -> TaskResult {
    let u = ls.scenario.u.as_ref().context("field `u` is required for extend")?;
    let (w, rep) = elliptic_extension(spec, u, &ls.solve_options()?)?;
    report["solver"] = solve_json(&rep);
    if !rep.converged {
        return Err(not_converged(&rep));
    }
    if let Ok(explicit) = linear_extension_explicit(spec, u) {
        let d = explicit.iter().zip(&w).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        report["explicit_extension_max_diff"] = num(d);
    }
    full_table(spec, &w).write(&out.join("extension.csv"))?;
    Ok((report, Vec::new()))
}

struct FlowParams {
    cfg: FlowConfig,
    t_final: f64,
}

fn flow_params(ls: &LoadedScenario, u0: &[f64], default_steps: Option<usize>) -> Result<FlowParams> {
    let s = &ls.scenario;
    let tau = s.tau.unwrap_or_else(|| default_tau(u0));
    if !(tau.is_finite() && tau > 0.0) {
        bail!("field `tau`: must be finite and > 0");
    }
    let n_steps = match (s.n_steps, s.t_end, default_steps) {
        (Some(n), _, _) => n,
        (None, Some(t), _) => (t / tau - 1e-9).ceil().max(0.0) as usize,
        (None, None, Some(n)) => n,
        (None, None, None) => bail!("one of `n_steps` and `t_end` is required"),
    };
    let mut cfg = FlowConfig::new(tau, n_steps);
    cfg.record_every = s.record_every.unwrap_or(1);
    if let Some(q) = s.q.map(|q| q.value()).filter(|q| q.is_finite()) {
        cfg.lq = q;
    }
    if let Some(f) = &s.forcing {
        cfg.forcing = Some(Forcing::Constant(f.clone()));
    }
    Ok(FlowParams {
        t_final: tau * n_steps as f64,
        cfg,
    })
}

fn trajectory_table(t: &Trajectory) -> Table {
    let mut tab = Table::new(&["step", "time", "energy", "mass", "linf", "l2", "lq"]);
    for k in 0..t.len() {
        tab.push(vec![
            t.steps[k].to_string(),
            fmt_f64(t.times[k]),
            fmt_f64(t.energies[k]),
            fmt_f64(t.mass[k]),
            fmt_f64(t.linf_norms[k]),
            fmt_f64(t.l2_norms[k]),
            fmt_f64(t.lq_norms[k]),
        ]);
    }
    tab
}

/// Exact solution when Omega is two coupled points with nothing else around.
fn two_point_reference(spec: &EnergySpec, u0: &[f64], t: f64, forced: bool) -> Option<[f64; 2]> {
    let space = spec.space();
    if forced || space.n_points() != 2 || space.n_omega() != 2 || !matches!(spec.potential(), Potential::Neumann) {
        return None;
    }
    let w = spec.kernel().weight(0, 1);
    if w == 0.0 {
        return None;
    }
    let mu = space.mu();
    Some(two_point_exact([mu[0], mu[1]], w, spec.p(), [u0[0], u0[1]], t))
}

fn flow_task(ls: &LoadedScenario, spec: &EnergySpec, out: &Path, mut report: Value) -> TaskResult {
    let n = spec.space().n_omega();
    let u0 = ls.initial(ls.scenario.u0.as_ref(), "u0", n, 0)?;
    let fp = flow_params(ls, &u0, None)?;
    let traj = run_flow(spec, &u0, &fp.cfg, &ls.solve_options()?)?;
    trajectory_table(&traj).write(&out.join("trajectory.csv"))?;
    if ls.scenario.dump_states {
        for (k, st) in traj.steps.iter().zip(&traj.states) {
            let mut t = Table::new(&["omega_index", "value"]);
            for (i, x) in st.iter().enumerate() {
                t.push(vec![i.to_string(), fmt_f64(*x)]);
            }
            t.write(&out.join(format!("state_{k}.csv")))?;
        }
    }
    report["flow"] = json!({
        "tau": num(fp.cfg.tau),
        "n_steps": fp.cfg.n_steps,
        "steps_completed": traj.steps_completed,
        "total_sweeps": traj.total_sweeps,
        "final_time": num(traj.times.last().copied().unwrap_or(0.0)),
    });
    if let Some(e) = &traj.failure {
        bail!("flow stopped after {} steps: {e}", traj.steps_completed);
    }
    if let (Some(exact), Some(last)) = (
        two_point_reference(spec, &u0, fp.t_final, fp.cfg.forcing.is_some()),
        traj.last_state(),
    ) {
        let err = (last[0] - exact[0]).abs().max((last[1] - exact[1]).abs());
        report["closed_form"] = json!({"exact_final": [num(exact[0]), num(exact[1])], "final_max_error": num(err)});
    }
    Ok((report, Vec::new()))
}

fn spectral_task(ls: &LoadedScenario, spec: &EnergySpec, out: &Path, mut report: Value) -> TaskResult {
    let op = assemble_p2_operator(spec)?;
    let mut t = Table::new(&["n", "lambda"]);
    for (k, l) in op.eigenvalues.iter().enumerate() {
        t.push(vec![k.to_string(), fmt_f64(*l)]);
    }
    t.write(&out.join("eigenvalues.csv"))?;
    report["spectral"] = json!({"dim": op.dim(), "zero_tol": num(op.zero_tol)});
    if let Some(theta) = ls.scenario.theta {
        let quad = ls.quadrature();
        let ker = subordinated_kernel(&op, theta, &quad)?;
        let mut kt = Table::new(&["i", "j", "k_theta"]);
        let d = op.dim();
        for a in 0..d {
            for b in a + 1..d {
                kt.push(vec![op.indices[a].to_string(), op.indices[b].to_string(), fmt_f64(ker.get(a, b))]);
            }
        }
        kt.write(&out.join("kernel.csv"))?;
        let mut kp = Table::new(&["i", "kappa_theta"]);
        for a in 0..d {
            kp.push(vec![op.indices[a].to_string(), fmt_f64(ker.kappa[a])]);
        }
        kp.write(&out.join("kappa.csv"))?;
        let mut rng = ls.rng(0);
        let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = spectral_power(&op, theta, &u)?;
        let (quadv, est) = balakrishnan_power(&op, theta, &u, &quad)?;
        let size = exact.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let gap = exact.iter().zip(&quadv).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let lhs = op.inner(&exact, &u);
        let rhs = subordinated_form(&op, &ker, &u)?;
        report["spectral"]["theta"] = num(theta);
        report["spectral"]["kernel_error_estimate"] = num(ker.error_estimate);
        report["spectral"]["balakrishnan_relative_gap"] = num(gap / size.max(f64::MIN_POSITIVE));
        report["spectral"]["balakrishnan_error_estimate"] = num(est);
        report["spectral"]["form_identity"] = json!({"spectral": num(lhs), "kernel": num(rhs)});
    }
    Ok((report, Vec::new()))
}

fn exponents_task(ls: &LoadedScenario, out: &Path, mut report: Value) -> TaskResult {
    let s = &ls.scenario;
    let dim = s.dim.context("field `N` is required for exponents")?;
    let theta = s.theta.context("field `theta` is required for exponents")?;
    let p = ls.p()?;
    let q = s.q.context("field `q` is required for exponents")?.value();
    let e = exponents(dim, theta, p, q)?;
    let mut t = Table::new(&["N", "theta", "p", "q", "alpha", "beta", "gamma", "regime"]);
    t.push(vec![
        dim.to_string(),
        fmt_f64(theta),
        fmt_f64(p),
        fmt_f64(q),
        fmt_f64(e.alpha),
        fmt_f64(e.beta),
        fmt_f64(e.gamma),
        e.regime.as_str().into(),
    ]);
    t.write(&out.join("exponents.csv"))?;
    report["exponents"] = exponents_json(&e);
    Ok((report, Vec::new()))
}

fn exponents_json(e: &HolderExponents) -> Value {
    json!({"alpha": num(e.alpha), "beta": num(e.beta), "gamma": num(e.gamma), "regime": e.regime.as_str()})
}

fn check_task(ls: &LoadedScenario, built: Option<&Built>, spec: Option<&EnergySpec>, out: &Path, mut report: Value) -> TaskResult {
    let check = ls.scenario.check.clone().context("field `check` is required for check")?;
    let opts = ls.solve_options()?;
    let threads = thread_cap();
    let seed = ls.seed();
    let spec = || spec.context("this check needs a space and an energy");
    let built = || built.context("this check needs a space");
    let mut checks = Vec::new();
    match check {
        CheckSpec::ScalarLemmas { samples } => {
            checks.extend(scalar_lemma_suite(seed, samples)?);
        }
        CheckSpec::EnergyInequalities { n_specs, n_states } => {
            let parts = par_map(n_specs, threads, |i| energy_inequality_trial(seed, i as u64, n_states, &opts));
            let parts = parts.into_iter().collect::<nonlocal_core::Result<Vec<_>>>()?;
            checks.extend(merge_trials(&parts));
        }
        CheckSpec::MarkovSuite { trials } => {
            checks.extend(markov(ls, spec()?, trials)?);
        }
        CheckSpec::Domination {
            kappa_exterior,
            robin_q,
        } => {
            checks.push(domination(ls, built()?, spec()?, kappa_exterior, robin_q)?);
        }
        CheckSpec::Decay => {
            let (c, v) = decay(ls, spec()?, out)?;
            checks.push(c);
            report["decay"] = v;
        }
        CheckSpec::TrajectorySuite {
            trials,
            kappa_exterior,
            robin_q,
        } => {
            let spec = spec()?;
            checks.extend(markov(ls, spec, trials)?);
            checks.push(domination(ls, built()?, spec, kappa_exterior, robin_q)?);
            let (c, v) = decay(ls, spec, out)?;
            checks.push(c);
            report["decay"] = v;
        }
    }
    Ok((report, checks))
}

const CHECK_TAU: f64 = 1e-2;
const CHECK_STEPS: usize = 100;

fn check_flow(ls: &LoadedScenario, u0: &[f64]) -> Result<FlowConfig> {
    let mut fp = flow_params(ls, u0, Some(CHECK_STEPS))?;
    if ls.scenario.tau.is_none() {
        fp.cfg.tau = CHECK_TAU;
    }
    Ok(fp.cfg)
}

fn markov(ls: &LoadedScenario, spec: &EnergySpec, trials: usize) -> Result<Vec<CheckReport>> {
    let opts = ls.solve_options()?;
    let cfg = check_flow(ls, &[1.0])?;
    let seed = ls.seed();
    let parts = par_map(trials, thread_cap(), |i| markov_trial(spec, &cfg, &opts, seed, i as u64).map(|r| r.to_vec()));
    let parts = parts.into_iter().collect::<nonlocal_core::Result<Vec<_>>>()?;
    Ok(merge_trials(&parts))
}

fn domination(ls: &LoadedScenario, b: &Built, spec: &EnergySpec, kappa_ext: f64, q: f64) -> Result<CheckReport> {
    let n = b.space.n_omega();
    let u0 = match &ls.scenario.u0 {
        Some(d) => ls.initial(Some(d), "u0", n, 0)?,
        None => {
            let mut rng = ls.rng(100);
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
    };
    let robin = RobinParams {
        kappa: exterior_vector(&b.space, kappa_ext),
        q,
        nu: ls.nu(b.space.n_points())?,
    };
    let cfg = check_flow(ls, &u0)?;
    Ok(domination_trajectory_suite(
        b.space.clone(),
        b.kernel.clone(),
        spec.p(),
        &robin,
        &cfg,
        &ls.solve_options()?,
        &u0,
    )?)
}

fn decay(ls: &LoadedScenario, spec: &EnergySpec, out: &Path) -> Result<(CheckReport, Value)> {
    let n = spec.space().n_omega();
    let pick = |d: Option<&crate::scenario::InitialData>, field: &str, stream: u64| -> Result<Vec<f64>> {
        match d {
            Some(d) => ls.initial(Some(d), field, n, stream),
            None => {
                let mut rng = ls.rng(stream);
                Ok((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            }
        }
    };
    let u0 = pick(ls.scenario.u0.as_ref(), "u0", 201)?;
    let v0 = pick(ls.scenario.v0.as_ref(), "v0", 202)?;
    let cfg = check_flow(ls, &u0)?;
    let opts = ls.solve_options()?;
    let mut runs = par_map(2, thread_cap(), |k| run_flow(spec, if k == 0 { &u0 } else { &v0 }, &cfg, &opts));
    let tv = runs.pop().unwrap()?;
    let tu = runs.pop().unwrap()?;
    for t in [&tu, &tv] {
        if let Some(e) = &t.failure {
            bail!("decay flow stopped after {} steps: {e}", t.steps_completed);
        }
    }
    let dim = ls
        .scenario
        .dim
        .or_else(|| spec.space().coords().map(|c| c.dim()))
        .unwrap_or(1);
    let theta = ls.scenario.theta.unwrap_or(0.5);
    let q = ls.scenario.q.map_or(2.0, |q| q.value());
    let ex = exponents(dim, theta, spec.p(), q)?;
    let rep = decay_report(&tu, &tv, &spec.space().omega_mu(), q, &ex, 100.0 * opts.tol)?;
    let mut t = Table::new(&["time", "distance", "fitted_c"]);
    for r in &rep.rows {
        t.push(vec![fmt_f64(r.time), fmt_f64(r.distance), fmt_f64(r.fitted_c)]);
    }
    t.write(&out.join("decay.csv"))?;
    let v = json!({
        "N": dim,
        "theta": num(theta),
        "q": num(q),
        "exponents": exponents_json(&ex),
        "degenerate": rep.degenerate,
        "c_ratio": num(rep.c_ratio),
        "loglog_slope": num(rep.loglog_slope),
        "exp_fit": {"c1": num(rep.exp_fit.0), "c2": num(rep.exp_fit.1)},
        "note": "fitted constants are diagnostics; only monotonicity of D(t) is asserted",
    });
    Ok((rep.monotone, v))
}

/// Runs every `*.json` in `dir` (sorted) on up to `jobs` workers. Each scenario
/// writes into `out/<file stem>`; a panic is reported as an error for that
/// scenario only.
pub fn run_batch(dir: &Path, out: &Path, jobs: usize) -> Result<Vec<(PathBuf, i32)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let codes = par_map(files.len(), jobs, |i| {
        let path = &files[i];
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        let target = out.join(stem);
        let res = std::panic::catch_unwind(|| run_file(path, Some(&target)));
        match res {
            Ok(r) => {
                if let Err(e) = &r {
                    log::error!("{}: {e:#}", path.display());
                }
                exit_code(&r)
            }
            Err(_) => {
                log::error!("{}: panicked", path.display());
                1
            }
        }
    });
    Ok(files.into_iter().zip(codes).collect())
}

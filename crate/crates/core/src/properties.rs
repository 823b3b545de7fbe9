//! Numerical checks of the qualitative statements: Beurling-Deny inequalities,
//! domination, the algebraic lemmas behind the smoothing estimates, and
//! trajectory-level order/contraction/domination/decay.
//!
//! Every check reports violations divided by a scale (`max(1, size of the
//! compared quantities)`), so one tolerance applies across trials.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::energy::{energy, EnergySpec, PointPotential, Potential};
use crate::error::{check_len, invalid, Error, Result};
use crate::exponents::{c_rp, HolderExponents};
use crate::flow::{l2_distance, run_flow, FlowConfig, Trajectory};
use crate::kernel::{KernelMatrix, PhiSpec};
use crate::math;
use crate::solver::{elliptic_extension, SolveOptions};
use crate::space::{graph_space, DiscreteSpace};

/// Normal contractions used by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContractionFn {
    /// `s -> s^+ / 2`
    HalfPositive,
    /// `s -> ((s + alpha)^+ - (s - alpha)^-) / 2`: identity on `[-alpha, alpha]`, slope 1/2 outside.
    PAlpha(f64),
    /// `s -> min(max(s, lo), hi)` with `lo <= 0 <= hi`.
    Clamp { lo: f64, hi: f64 },
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

impl ContractionFn {
    pub fn p_alpha(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid("alpha", "must be finite and > 0"));
        }
        Ok(ContractionFn::PAlpha(alpha))
    }

    pub fn clamp(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= 0.0 && hi >= 0.0) {
            return Err(invalid("clamp", "bounds must satisfy lo <= 0 <= hi"));
        }
        Ok(ContractionFn::Clamp { lo, hi })
    }

    pub fn apply(&self, s: f64) -> f64 {
        match *self {
            ContractionFn::HalfPositive => 0.5 * pos(s),
            ContractionFn::PAlpha(a) => 0.5 * (pos(s + a) - neg(s - a)),
            ContractionFn::Clamp { lo, hi } => s.max(lo).min(hi),
        }
    }

    /// Samples `n` points of `[-r, r]` and reports the worst breach of
    /// monotonicity, `c(0) = 0` and the 1-Lipschitz bound.
    pub fn certificate(&self, r: f64, n: usize) -> CheckReport {
        let mut t = Tracker::new("contraction_certificate", 0.0);
        t.observe(self.apply(0.0).abs(), || String::from("c(0)"));
        let h = 2.0 * r / n as f64;
        let mut prev_s = -r;
        let mut prev = self.apply(prev_s);
        for k in 1..=n {
            let s = -r + k as f64 * h;
            let v = self.apply(s);
            t.observe(prev - v, || format!("decreasing near {s}"));
            t.observe((v - prev).abs() - (s - prev_s).abs(), || format!("Lipschitz near {s}"));
            prev_s = s;
            prev = v;
        }
        t.trials = n;
        t.finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    /// Largest scaled violation; positive means the inequality was breached.
    pub max_violation: f64,
    pub tolerance: f64,
    pub worst_case: String,
    pub passed: bool,
}

impl CheckReport {
    /// Merges reports of the same check in the given order; ties keep the earlier one.
    pub fn merge(name: &str, parts: &[CheckReport]) -> CheckReport {
        let tolerance = parts.first().map_or(0.0, |r| r.tolerance);
        let mut out = CheckReport {
            name: String::from(name),
            trials: 0,
            max_violation: f64::NEG_INFINITY,
            tolerance,
            worst_case: String::new(),
            passed: true,
        };
        for r in parts {
            out.trials += r.trials;
            if r.max_violation > out.max_violation {
                out.max_violation = r.max_violation;
                out.worst_case = r.worst_case.clone();
            }
            out.passed &= r.passed;
        }
        out
    }
}

struct Tracker {
    name: String,
    tolerance: f64,
    trials: usize,
    max_violation: f64,
    worst: String,
    nan: bool,
}

impl Tracker {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: String::from(name),
            tolerance,
            trials: 0,
            max_violation: f64::NEG_INFINITY,
            worst: String::new(),
            nan: false,
        }
    }

    fn observe(&mut self, v: f64, what: impl FnOnce() -> String) {
        if v.is_nan() {
            if !self.nan {
                self.worst = what();
            }
            self.nan = true;
            return;
        }
        if v > self.max_violation {
            self.max_violation = v;
            if !self.nan {
                self.worst = what();
            }
        }
    }

    fn finish(self) -> CheckReport {
        let passed = !self.nan && self.max_violation <= self.tolerance;
        CheckReport {
            name: self.name,
            trials: self.trials,
            max_violation: if self.nan { f64::NAN } else { self.max_violation },
            tolerance: self.tolerance,
            worst_case: self.worst,
            passed,
        }
    }
}

fn scale_of(values: &[f64]) -> f64 {
    values.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// `E(u - c(u - v)) + E(v + c(u - v)) - E(u) - E(v)` on full states; `<= 0` expected.
pub fn normal_contraction_gap(spec: &EnergySpec, u_hat: &[f64], v_hat: &[f64], c: ContractionFn) -> Result<f64> {
    let d: Vec<f64> = u_hat.iter().zip(v_hat).map(|(a, b)| c.apply(a - b)).collect();
    let a: Vec<f64> = u_hat.iter().zip(&d).map(|(x, y)| x - y).collect();
    let b: Vec<f64> = v_hat.iter().zip(&d).map(|(x, y)| x + y).collect();
    Ok(energy(spec, &a)? + energy(spec, &b)? - energy(spec, u_hat)? - energy(spec, v_hat)?)
}

/// Energy of the minimal extension of a restricted state.
pub fn induced_energy(spec: &EnergySpec, u: &[f64], opts: &SolveOptions) -> Result<f64> {
    let (w, rep) = elliptic_extension(spec, u, opts)?;
    if !rep.converged {
        return Err(Error::NotConverged {
            sweeps: rep.sweeps,
            residual: rep.final_residual,
        });
    }
    energy(spec, &w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeurlingDenyGaps {
    /// `E(½(u + u∧v)) + E(½(v + u∨v)) - E(u) - E(v)`
    pub op_gap: f64,
    /// `E(v + p_alpha(u - v)) + E(u - p_alpha(u - v)) - E(u) - E(v)`
    pub linf_gap: f64,
    /// `max(1, E(u) + E(v))`
    pub scale: f64,
}

/// Both Beurling-Deny gaps for restricted states, evaluated on the induced energy.
pub fn beurling_deny_gaps(
    spec: &EnergySpec,
    u: &[f64],
    v: &[f64],
    alpha: f64,
    opts: &SolveOptions,
) -> Result<BeurlingDenyGaps> {
    let n = spec.space().n_omega();
    check_len("u", n, u.len())?;
    check_len("v", n, v.len())?;
    let pa = ContractionFn::p_alpha(alpha)?;
    let eu = induced_energy(spec, u, opts)?;
    let ev = induced_energy(spec, v, opts)?;
    let lo: Vec<f64> = u.iter().zip(v).map(|(a, b)| 0.5 * (a + a.min(*b))).collect();
    let hi: Vec<f64> = u.iter().zip(v).map(|(a, b)| 0.5 * (b + a.max(*b))).collect();
    let op_gap = induced_energy(spec, &lo, opts)? + induced_energy(spec, &hi, opts)? - eu - ev;
    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| pa.apply(a - b)).collect();
    let a: Vec<f64> = v.iter().zip(&d).map(|(x, y)| x + y).collect();
    let b: Vec<f64> = u.iter().zip(&d).map(|(x, y)| x - y).collect();
    let linf_gap = induced_energy(spec, &a, opts)? + induced_energy(spec, &b, opts)? - eu - ev;
    Ok(BeurlingDenyGaps {
        op_gap,
        linf_gap,
        scale: (eu + ev).max(1.0),
    })
}

/// Checks, point by point, the hypotheses under which the semigroup of `spec1`
/// is totally dominated by that of `spec2`: `nu2 B2(|s|) <= nu1 B1(s)` and
/// `nu1 B1 - nu2 B2` increasing on `[0, inf)` (both potentials are even).
pub fn check_domination_hypothesis(spec1: &EnergySpec, spec2: &EnergySpec) -> Result<()> {
    if spec1.space() != spec2.space() {
        return Err(Error::Precondition("specs must share the space".into()));
    }
    if spec1.kernel() != spec2.kernel() {
        return Err(Error::Precondition("specs must share the kernel".into()));
    }
    if spec1.p() != spec2.p() {
        return Err(Error::Precondition("specs must share the exponent p".into()));
    }
    for i in 0..spec1.n_points() {
        let b1 = spec1.point_potential(i);
        let b2 = spec2.point_potential(i);
        let reason = match (b1, b2) {
            (PointPotential::Pinned, _) | (_, PointPotential::Zero) => None,
            (PointPotential::Zero, _) => Some("first potential vanishes where the second does not"),
            (PointPotential::Power { .. }, PointPotential::Pinned) => Some("second potential is Dirichlet"),
            (PointPotential::Power { coeff: c1, q: q1 }, PointPotential::Power { coeff: c2, q: q2 }) => {
                if q1 != q2 {
                    Some("power potentials with different exponents are not ordered")
                } else if c2 > c1 {
                    Some("second power coefficient exceeds the first")
                } else {
                    None
                }
            }
        };
        if let Some(r) = reason {
            return Err(Error::DominationHypothesis {
                index: i,
                reason: r.into(),
            });
        }
    }
    Ok(())
}

/// `E1(½(|u| + |u|∧v)^+ sgn u) + E2(½(v + |u|∨v)^+) - E1(u) - E2(v)` on full states.
pub fn domination_functional_gap(spec1: &EnergySpec, spec2: &EnergySpec, u_hat: &[f64], v_hat: &[f64]) -> Result<f64> {
    check_domination_hypothesis(spec1, spec2)?;
    let a: Vec<f64> = u_hat
        .iter()
        .zip(v_hat)
        .map(|(&u, &v)| {
            let m = 0.5 * pos(u.abs() + u.abs().min(v));
            if u > 0.0 {
                m
            } else if u < 0.0 {
                -m
            } else {
                0.0
            }
        })
        .collect();
    let b: Vec<f64> = u_hat.iter().zip(v_hat).map(|(&u, &v)| 0.5 * pos(v + u.abs().max(v))).collect();
    Ok(energy(spec1, &a)? + energy(spec2, &b)? - energy(spec1, u_hat)? - energy(spec2, v_hat)?)
}

/// `-g(z, t)` with
/// `g = |z-t|^{p-2}(z-t)(|z|^{r-2}z - |t|^{r-2}t) - C_{r,p} ||z|^{(r-2)/p}z - |t|^{(r-2)/p}t|^p`.
pub fn lemma_g_gap(z: f64, t: f64, p: f64, r: f64) -> Result<f64> {
    Ok(-lemma_g_terms(z, t, p, r)?.0)
}

/// `(g, |first term| + |second term|)`.
fn lemma_g_terms(z: f64, t: f64, p: f64, r: f64) -> Result<(f64, f64)> {
    let c = c_rp(r, p)?;
    let first = math::signed_pow(z - t, p - 1.0) * (math::signed_pow(z, r - 1.0) - math::signed_pow(t, r - 1.0));
    let e = (r - 2.0) / p;
    let inner = math::signed_pow(z, e + 1.0) - math::signed_pow(t, e + 1.0);
    let second = c * math::powf(inner.abs(), p);
    Ok((first - second, first.abs() + second))
}

/// The constant `2^{2-r}` of `(a-b)(|a|^{r-2}a - |b|^{r-2}b) >= C |a-b|^r`.
pub fn monotonicity_constant(r: f64) -> f64 {
    math::powf(2.0, 2.0 - r)
}

/// With `d = c - (a - b)`: `C_p C_r |a-b|^{p+r-2} - F(a,b,c,d)`,
/// `F = (|a|^{p-2}a - |b|^{p-2}b)(|c|^{r-2}c - |d|^{r-2}d)`.
pub fn lemma_f_gap(a: f64, b: f64, c: f64, p: f64, r: f64) -> Result<f64> {
    Ok(lemma_f_terms(a, b, c, p, r)?.0)
}

fn lemma_f_terms(a: f64, b: f64, c: f64, p: f64, r: f64) -> Result<(f64, f64)> {
    if !(p >= 2.0 && r >= 2.0) {
        return Err(invalid("p, r", "both must be >= 2"));
    }
    let d = c - (a - b);
    let f = (math::signed_pow(a, p - 1.0) - math::signed_pow(b, p - 1.0))
        * (math::signed_pow(c, r - 1.0) - math::signed_pow(d, r - 1.0));
    let bound = monotonicity_constant(p) * monotonicity_constant(r) * math::powf((a - b).abs(), p + r - 2.0);
    Ok((bound - f, bound.abs() + f.abs()))
}

/// `sum_{i != j} w_ij |u_i - u_j|^{p-2}(u_i - u_j)(v_i - v_j)` (each pair twice).
pub fn kernel_pairing(kernel: &KernelMatrix, phi: PhiSpec, u: &[f64], v: &[f64]) -> f64 {
    2.0 * kernel
        .pairs()
        .iter()
        .map(|&(i, j, w)| w * phi.phi_prime(u[i] - u[j]) * (v[i] - v[j]))
        .sum::<f64>()
}

/// `C_{r,p} F(|u|^{(r-2)/p} u, same) - F(u, |u|^{r-2} u)`; `<= 0` expected.
pub fn comp_energy_gap(spec: &EnergySpec, u_hat: &[f64], r: f64) -> Result<f64> {
    Ok(comp_energy_terms(spec, u_hat, r)?.0)
}

fn comp_energy_terms(spec: &EnergySpec, u_hat: &[f64], r: f64) -> Result<(f64, f64)> {
    check_len("state", spec.n_points(), u_hat.len())?;
    let p = spec.p();
    let c = c_rp(r, p)?;
    let e = (r - 2.0) / p;
    let a: Vec<f64> = u_hat.iter().map(|&x| math::signed_pow(x, e + 1.0)).collect();
    let b: Vec<f64> = u_hat.iter().map(|&x| math::signed_pow(x, r - 1.0)).collect();
    let phi = spec.phi();
    let lhs = c * kernel_pairing(spec.kernel(), phi, &a, &a);
    let rhs = kernel_pairing(spec.kernel(), phi, u_hat, &b);
    Ok((lhs - rhs, lhs.abs() + rhs.abs()))
}

/// Scalar lemma suite: `samples` draws of `p, r in [2, 6]`, inputs in `[-10, 10]`.
pub fn scalar_lemma_suite(seed: u64, samples: usize) -> Result<[CheckReport; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Tracker::new("lemma_g", 1e-12);
    let mut f = Tracker::new("lemma_f", 1e-12);
    for k in 0..samples {
        let p = rng.gen_range(2.0..=6.0);
        let r = rng.gen_range(2.0..=6.0);
        let z = rng.gen_range(-10.0..=10.0);
        let t = rng.gen_range(-10.0..=10.0);
        let (gv, gs) = lemma_g_terms(z, t, p, r)?;
        g.observe(-gv / gs.max(1.0), || format!("sample={k} z={z} t={t} p={p} r={r}"));
        let c = rng.gen_range(-10.0..=10.0);
        let (fv, fs) = lemma_f_terms(z, t, c, p, r)?;
        f.observe(fv / fs.max(1.0), || format!("sample={k} a={z} b={t} c={c} p={p} r={r}"));
    }
    g.trials = samples;
    f.trials = samples;
    Ok([g.finish(), f.finish()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Neumann,
    Robin,
    Dirichlet,
}

/// Random sparse graph instances for the energy-level suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecSampler {
    pub min_points: usize,
    pub max_points: usize,
    /// Expected number of extra random edges per point, beyond a spanning path.
    pub extra_degree: f64,
    pub p_range: (f64, f64),
}

impl Default for SpecSampler {
    fn default() -> Self {
        Self {
            min_points: 4,
            max_points: 50,
            extra_degree: 1.5,
            p_range: (2.0, 6.0),
        }
    }
}

/// Space and kernel of a random connected graph; Omega is a random nonempty
/// subset containing at least half the points.
pub fn sample_graph<R: Rng + ?Sized>(rng: &mut R, s: &SpecSampler) -> (Arc<DiscreteSpace>, Arc<KernelMatrix>) {
    let n = rng.gen_range(s.min_points..=s.max_points);
    let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let n_omega = rng.gen_range((n + 1) / 2..=n);
    let omega: Vec<usize> = order[..n_omega].to_vec();
    let mut edges = Vec::new();
    for k in 1..n {
        edges.push((order[k - 1], order[k], rng.gen_range(0.1..2.0)));
    }
    let extra = (s.extra_degree * n as f64) as usize;
    for _ in 0..extra {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j && !edges.iter().any(|&(a, b, _)| (a, b) == (i, j) || (a, b) == (j, i)) {
            edges.push((i, j, rng.gen_range(0.1..2.0)));
        }
    }
    let (space, kernel) = graph_space(mu, &omega, edges).expect("sampled graph is valid");
    (Arc::new(space), Arc::new(kernel))
}

/// Robin weights supported on the exterior.
pub fn sample_robin<R: Rng + ?Sized>(rng: &mut R, space: &DiscreteSpace) -> Potential {
    let kappa = (0..space.n_points())
        .map(|i| if space.is_omega(i) { 0.0 } else { rng.gen_range(0.0..3.0) })
        .collect();
    Potential::PowerRobin {
        kappa,
        q: rng.gen_range(2.0..4.0),
    }
}

pub fn dirichlet_exterior(space: &DiscreteSpace) -> Potential {
    Potential::Dirichlet {
        mask: (0..space.n_points()).map(|i| !space.is_omega(i)).collect(),
    }
}

fn spec_with(
    space: &Arc<DiscreteSpace>,
    kernel: &Arc<KernelMatrix>,
    p: f64,
    potential: Potential,
) -> Result<EnergySpec> {
    let n = space.n_points();
    EnergySpec::new(space.clone(), kernel.clone(), PhiSpec::new(p)?, potential, alloc::vec![1.0; n])
}

fn sample_state<R: Rng + ?Sized>(rng: &mut R, spec: &EnergySpec) -> Vec<f64> {
    (0..spec.n_points())
        .map(|i| if spec.is_pinned(i) { 0.0 } else { rng.gen_range(-2.0..2.0) })
        .collect()
}

/// One random spec of the energy-inequality suite: `n_states` state pairs
/// against every gap. Returns one report per gap.
pub fn energy_inequality_trial(seed: u64, index: u64, n_states: usize, opts: &SolveOptions) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let sampler = SpecSampler::default();
    let (space, kernel) = sample_graph(&mut rng, &sampler);
    let p = rng.gen_range(sampler.p_range.0..=sampler.p_range.1);
    let robin = sample_robin(&mut rng, &space);
    let neumann = spec_with(&space, &kernel, p, Potential::Neumann)?;
    let robin = spec_with(&space, &kernel, p, robin)?;
    let dirichlet = spec_with(&space, &kernel, p, dirichlet_exterior(&space))?;
    let kind = rng.gen_range(0..3);
    let spec = [&neumann, &robin, &dirichlet][kind];
    let pair = rng.gen_range(0..4);
    let (s1, s2) = [(&dirichlet, &robin), (&robin, &neumann), (&dirichlet, &neumann), (&neumann, &neumann)][pair];

    let tol = 1e-10;
    let mut nc = Tracker::new("normal_contraction_gap", tol);
    let mut op = Tracker::new("beurling_deny_op_gap", tol);
    let mut li = Tracker::new("beurling_deny_linf_gap", tol);
    let mut ce = Tracker::new("comp_energy_gap", tol);
    let mut dm = Tracker::new("domination_functional_gap", tol);
    let tag = |k: usize, extra: &str| format!("spec={index} state={k} p={p} kind={kind} {extra}");

    for k in 0..n_states {
        let u = sample_state(&mut rng, spec);
        let v = sample_state(&mut rng, spec);
        let c = match rng.gen_range(0..3) {
            0 => ContractionFn::HalfPositive,
            1 => ContractionFn::PAlpha(rng.gen_range(0.05..3.0)),
            _ => ContractionFn::Clamp {
                lo: -rng.gen_range(0.0..2.0),
                hi: rng.gen_range(0.0..2.0),
            },
        };
        let e0 = energy(spec, &u)? + energy(spec, &v)?;
        let gap = normal_contraction_gap(spec, &u, &v, c)?;
        nc.observe(gap / e0.max(1.0), || tag(k, &format!("{c:?}")));

        let ur = spec.space().restrict(&u);
        let vr = spec.space().restrict(&v);
        let alpha = rng.gen_range(0.05..3.0);
        let bd = beurling_deny_gaps(spec, &ur, &vr, alpha, opts)?;
        op.observe(bd.op_gap / bd.scale, || tag(k, ""));
        li.observe(bd.linf_gap / bd.scale, || tag(k, &format!("alpha={alpha}")));

        let r = rng.gen_range(2.0..=6.0);
        let (g, s) = comp_energy_terms(spec, &u, r)?;
        ce.observe(g / s.max(1.0), || tag(k, &format!("r={r}")));

        let u1 = sample_state(&mut rng, s1);
        let v2 = sample_state(&mut rng, s2);
        let e = energy(s1, &u1)? + energy(s2, &v2)?;
        let gap = domination_functional_gap(s1, s2, &u1, &v2)?;
        dm.observe(gap / e.max(1.0), || tag(k, &format!("pair={pair}")));
    }
    let mut out = Vec::new();
    for mut t in [nc, op, li, ce, dm] {
        t.trials = n_states;
        out.push(t.finish());
    }
    Ok(out)
}

/// Merges per-spec results of [`energy_inequality_trial`] in index order.
pub fn merge_trials(trials: &[Vec<CheckReport>]) -> Vec<CheckReport> {
    let Some(first) = trials.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|k| {
            let parts: Vec<CheckReport> = trials.iter().map(|t| t[k].clone()).collect();
            CheckReport::merge(&first[k].name, &parts)
        })
        .collect()
}

pub fn energy_inequality_suite(seed: u64, n_specs: usize, n_states: usize, opts: &SolveOptions) -> Result<Vec<CheckReport>> {
    let trials = (0..n_specs)
        .map(|i| energy_inequality_trial(seed, i as u64, n_states, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_trials(&trials))
}

fn flow_checked(spec: &EnergySpec, u0: &[f64], cfg: &FlowConfig, opts: &SolveOptions) -> Result<Trajectory> {
    let t = run_flow(spec, u0, cfg, opts)?;
    match t.failure {
        Some(e) => Err(e),
        None => Ok(t),
    }
}

/// One trial of the Markov suite: random `u0 <= v0`, paired flows, and per
/// recorded step (a) order, (b) `L^inf` contraction, (c) `L^2(mu)` contraction.
/// Trial `0` uses `v0 = u0 + 1`.
pub fn markov_trial(
    spec: &EnergySpec,
    cfg: &FlowConfig,
    opts: &SolveOptions,
    seed: u64,
    index: u64,
) -> Result<[CheckReport; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = spec.space().n_omega();
    let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v0: Vec<f64> = if index == 0 {
        u0.iter().map(|x| x + 1.0).collect()
    } else {
        u0.iter().map(|x| x + rng.gen_range(0.0..1.0)).collect()
    };
    markov_pair(spec, cfg, opts, &u0, &v0, index)
}

/// Markov checks for explicit initial data with `u0 <= v0`.
pub fn markov_pair(
    spec: &EnergySpec,
    cfg: &FlowConfig,
    opts: &SolveOptions,
    u0: &[f64],
    v0: &[f64],
    index: u64,
) -> Result<[CheckReport; 3]> {
    let tol = 100.0 * opts.tol;
    let mu = spec.space().omega_mu();
    let scale = scale_of(u0).max(scale_of(v0));
    let tu = flow_checked(spec, u0, cfg, opts)?;
    let tv = flow_checked(spec, v0, cfg, opts)?;
    let linf0 = u0.iter().zip(v0).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let l20 = l2_distance(&mu, u0, v0);
    let mut order = Tracker::new("order_preservation", tol);
    let mut linf = Tracker::new("linf_contraction", tol);
    let mut l2 = Tracker::new("l2_contraction", tol);
    for k in 0..tu.len() {
        let (a, b) = (&tu.states[k], &tv.states[k]);
        let step = tu.steps[k];
        let mut worst = f64::NEG_INFINITY;
        let mut at = 0;
        for i in 0..a.len() {
            if a[i] - b[i] > worst {
                worst = a[i] - b[i];
                at = i;
            }
        }
        order.observe(worst / scale, || format!("trial={index} step={step} point={at}"));
        let d = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        linf.observe((d - linf0) / scale, || format!("trial={index} step={step}"));
        l2.observe((l2_distance(&mu, a, b) - l20) / scale, || format!("trial={index} step={step}"));
    }
    let mut out = [order.finish(), linf.finish(), l2.finish()];
    for r in &mut out {
        r.trials = 1;
    }
    Ok(out)
}

pub fn markov_suite(
    spec: &EnergySpec,
    cfg: &FlowConfig,
    opts: &SolveOptions,
    seed: u64,
    trials: usize,
) -> Result<Vec<CheckReport>> {
    let parts = (0..trials)
        .map(|i| markov_trial(spec, cfg, opts, seed, i as u64).map(|r| r.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_trials(&parts))
}

/// Robin data for the domination chain; `kappa` must vanish on Omega.
#[derive(Debug, Clone, PartialEq)]
pub struct RobinParams {
    pub kappa: Vec<f64>,
    pub q: f64,
    pub nu: Vec<f64>,
}

/// The Dirichlet (all exterior points pinned), Robin and Neumann specs of a chain.
pub fn domination_specs(
    space: Arc<DiscreteSpace>,
    kernel: Arc<KernelMatrix>,
    p: f64,
    robin: &RobinParams,
) -> Result<[EnergySpec; 3]> {
    let phi = PhiSpec::new(p)?;
    let n = space.n_points();
    let d = EnergySpec::new(space.clone(), kernel.clone(), phi, dirichlet_exterior(&space), robin.nu.clone())?;
    let b = EnergySpec::new(
        space.clone(),
        kernel.clone(),
        phi,
        Potential::PowerRobin {
            kappa: robin.kappa.clone(),
            q: robin.q,
        },
        robin.nu.clone(),
    )?;
    let nm = EnergySpec::new(space, kernel, phi, Potential::Neumann, alloc::vec![1.0; n])?;
    check_domination_hypothesis(&d, &b)?;
    check_domination_hypothesis(&b, &nm)?;
    Ok([d, b, nm])
}

/// `|S^D(t)u0| <= S^B(t)|u0| <= S^N(t)|u0|` at every recorded step.
pub fn domination_trajectory_suite(
    space: Arc<DiscreteSpace>,
    kernel: Arc<KernelMatrix>,
    p: f64,
    robin: &RobinParams,
    cfg: &FlowConfig,
    opts: &SolveOptions,
    u0: &[f64],
) -> Result<CheckReport> {
    let [d, b, nm] = domination_specs(space, kernel, p, robin)?;
    let abs0: Vec<f64> = u0.iter().map(|x| x.abs()).collect();
    let td = flow_checked(&d, u0, cfg, opts)?;
    let tb = flow_checked(&b, &abs0, cfg, opts)?;
    let tn = flow_checked(&nm, &abs0, cfg, opts)?;
    let scale = scale_of(u0);
    let mut t = Tracker::new("domination_chain", 100.0 * opts.tol);
    for k in 0..td.len() {
        let step = td.steps[k];
        for i in 0..u0.len() {
            let (x, y, z) = (td.states[k][i].abs(), tb.states[k][i], tn.states[k][i]);
            t.observe((x - y) / scale, || format!("step={step} point={i} D<=B"));
            t.observe((y - z) / scale, || format!("step={step} point={i} B<=N"));
        }
    }
    t.trials = td.len();
    Ok(t.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub time: f64,
    pub distance: f64,
    /// `D(t) t^beta / |u0 - v0|_q^gamma`.
    pub fitted_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// Hard check: `D(t) = |u(t) - v(t)|_inf` non-increasing.
    pub monotone: CheckReport,
    /// `D(0) = 0`: nothing to fit.
    pub degenerate: bool,
    pub rows: Vec<DecayRow>,
    /// `max C(t) / min C(t)` over the window (diagnostic).
    pub c_ratio: f64,
    /// Least-squares slope of `ln D` against `ln t` (diagnostic).
    pub loglog_slope: f64,
    /// `ln C(t) ~ ln c1 + c2 t`, the extra factor allowed for Neumann (diagnostic).
    pub exp_fit: (f64, f64),
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    (my - slope * mx, slope)
}

/// Decay diagnostics for two trajectories of the same spec and recording grid.
/// Only monotonicity of `D` is asserted; the fitted constants are reported.
pub fn decay_report(
    tu: &Trajectory,
    tv: &Trajectory,
    mu: &[f64],
    q: f64,
    exps: &HolderExponents,
    tol: f64,
) -> Result<DecayReport> {
    if tu.times != tv.times {
        return Err(Error::Precondition("trajectories must share their time grid".into()));
    }
    let d: Vec<f64> = tu
        .states
        .iter()
        .zip(&tv.states)
        .map(|(a, b)| a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())))
        .collect();
    let d0 = *d.first().ok_or_else(|| Error::EmptyWindow("no recorded states".into()))?;
    let mut mono = Tracker::new("decay_monotone", tol);
    let scale = d0.max(1.0);
    for k in 1..d.len() {
        mono.observe((d[k] - d[k - 1]) / scale, || format!("step={}", tu.steps[k]));
    }
    mono.trials = d.len().saturating_sub(1);
    if mono.trials == 0 {
        mono.max_violation = 0.0;
    }
    let monotone = mono.finish();
    if d0 == 0.0 {
        return Ok(DecayReport {
            monotone,
            degenerate: true,
            rows: Vec::new(),
            c_ratio: f64::NAN,
            loglog_slope: f64::NAN,
            exp_fit: (f64::NAN, f64::NAN),
        });
    }
    let u0 = &tu.states[0];
    let v0 = &tv.states[0];
    let qnorm = if q == f64::INFINITY {
        d0
    } else {
        math::powf(
            mu.iter().zip(u0.iter().zip(v0)).map(|(m, (a, b))| m * math::powf((a - b).abs(), q)).sum::<f64>(),
            1.0 / q,
        )
    };
    let denom = math::powf(qnorm, exps.gamma);
    let rows: Vec<DecayRow> = tu
        .times
        .iter()
        .zip(&d)
        .filter(|(&t, &dist)| t > 0.0 && dist > 0.0)
        .map(|(&t, &dist)| DecayRow {
            time: t,
            distance: dist,
            fitted_c: dist * math::powf(t, exps.beta) / denom,
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyWindow("no positive time with nonzero distance".into()));
    }
    let cmax = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.fitted_c));
    let cmin = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.fitted_c));
    let lt: Vec<f64> = rows.iter().map(|r| math::ln(r.time)).collect();
    let ld: Vec<f64> = rows.iter().map(|r| math::ln(r.distance)).collect();
    let (_, slope) = least_squares(&lt, &ld);
    let ts: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let lc: Vec<f64> = rows.iter().map(|r| math::ln(r.fitted_c)).collect();
    let (icpt, c2) = least_squares(&ts, &lc);
    Ok(DecayReport {
        monotone,
        degenerate: false,
        rows,
        c_ratio: cmax / cmin,
        loglog_slope: slope,
        exp_fit: (math::exp(icpt), c2),
    })
}

//! Implicit Euler for `u' + d_j E_{B,nu}(u) = f`.
//!
//! One step solves the anchored problem
//! `min E_{B,nu}(w) + (1/2 tau) |w|_Omega - u_n - tau f_n|^2_{L2(mu)}`, which is
//! [`minimize`] with center `u_n` and forcing `f_n`.

use alloc::vec::Vec;

use crate::energy::EnergySpec;
use crate::error::{check_finite, check_len, invalid, Error, Result};
use crate::math;
use crate::solver::{elliptic_extension, minimize, Anchor, Problem, SolveOptions, SolveReport};

/// Forcing sampled at the left endpoint of each step.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Constant(Vec<f64>),
    /// Entry `n` is used on step `n`; the last entry is held afterwards.
    Schedule(Vec<Vec<f64>>),
}

impl Forcing {
    pub fn at(&self, step: usize) -> &[f64] {
        match self {
            Forcing::Constant(f) => f,
            Forcing::Schedule(s) => &s[step.min(s.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub tau: f64,
    pub n_steps: usize,
    pub forcing: Option<Forcing>,
    pub record_every: usize,
    /// Exponent of the recorded `L^q(mu)` norm.
    pub lq: f64,
    pub keep_extensions: bool,
}

impl FlowConfig {
    pub fn new(tau: f64, n_steps: usize) -> Self {
        Self {
            tau,
            n_steps,
            forcing: None,
            record_every: 1,
            lq: 1.0,
            keep_extensions: false,
        }
    }

    fn validate(&self, n_omega: usize) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(invalid("tau", alloc::format!("must be finite and > 0, got {}", self.tau)));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be >= 1"));
        }
        if !(self.lq.is_finite() && self.lq >= 1.0) {
            return Err(invalid("lq", "norm exponent must be finite and >= 1"));
        }
        match &self.forcing {
            None => {}
            Some(Forcing::Constant(f)) => {
                check_len("forcing", n_omega, f.len())?;
                check_finite(f)?;
            }
            Some(Forcing::Schedule(s)) => {
                if s.is_empty() {
                    return Err(invalid("forcing", "schedule is empty"));
                }
                for f in s {
                    check_len("forcing", n_omega, f.len())?;
                    check_finite(f)?;
                }
            }
        }
        Ok(())
    }
}

/// `(data range) * 1e-2`, or `1e-2` for constant data.
pub fn default_tau(u: &[f64]) -> f64 {
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        range * 1e-2
    } else {
        1e-2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    pub extensions: Option<Vec<Vec<f64>>>,
    pub energies: Vec<f64>,
    pub linf_norms: Vec<f64>,
    pub l2_norms: Vec<f64>,
    pub lq_norms: Vec<f64>,
    pub lq: f64,
    /// `sum_{i in Omega} mu_i u_i`.
    pub mass: Vec<f64>,
    /// Set when the run stopped early; recorded data covers the completed steps.
    pub failure: Option<Error>,
    pub steps_completed: usize,
    pub total_sweeps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|v| v.as_slice())
    }
}

/// One implicit Euler step, warm-started from a previous extension when given.
pub fn proximal_step_from(
    spec: &EnergySpec,
    u: &[f64],
    tau: f64,
    f: Option<&[f64]>,
    warm: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, Vec<f64>, SolveReport)> {
    let prob = Problem {
        anchor: Some(Anchor { center: u, tau }),
        forcing: f,
        pinned: None,
        initial: warm,
    };
    let (w, rep) = minimize(spec, &prob, opts)?;
    if !rep.converged {
        return Err(Error::NotConverged {
            sweeps: rep.sweeps,
            residual: rep.final_residual,
        });
    }
    Ok((spec.space().restrict(&w), w, rep))
}

/// One implicit Euler step: `(u+, u_hat+)`.
pub fn proximal_step(
    spec: &EnergySpec,
    u: &[f64],
    tau: f64,
    f: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (u1, w, _) = proximal_step_from(spec, u, tau, f, None, opts)?;
    Ok((u1, w))
}

pub(crate) struct Norms {
    pub linf: f64,
    pub l2: f64,
    pub lq: f64,
    pub mass: f64,
}

pub(crate) fn norms(mu: &[f64], u: &[f64], q: f64) -> Norms {
    let mut l2 = 0.0;
    let mut lq = 0.0;
    let mut mass = 0.0;
    for (&m, &x) in mu.iter().zip(u) {
        l2 += m * x * x;
        lq += m * math::powf(x.abs(), q);
        mass += m * x;
    }
    Norms {
        linf: math::max_abs(u),
        l2: math::sqrt(l2),
        lq: math::powf(lq, 1.0 / q),
        mass,
    }
}

/// `|u - v|_{L2(mu)}` over Omega.
pub fn l2_distance(mu: &[f64], u: &[f64], v: &[f64]) -> f64 {
    math::sqrt(mu.iter().zip(u.iter().zip(v)).map(|(m, (a, b))| m * (a - b) * (a - b)).sum())
}

/// Runs `cfg.n_steps` implicit Euler steps from `u0`. Input errors are returned;
/// failures while stepping truncate the trajectory and set `failure`.
pub fn run_flow(spec: &EnergySpec, u0: &[f64], cfg: &FlowConfig, opts: &SolveOptions) -> Result<Trajectory> {
    let space = spec.space();
    check_len("initial state", space.n_omega(), u0.len())?;
    check_finite(u0)?;
    cfg.validate(space.n_omega())?;
    opts.validate()?;
    let mu = space.omega_mu();

    let (mut ext, rep0) = elliptic_extension(spec, u0, opts)?;
    if !rep0.converged {
        return Err(Error::NotConverged {
            sweeps: rep0.sweeps,
            residual: rep0.final_residual,
        });
    }
    let mut traj = Trajectory {
        times: Vec::new(),
        steps: Vec::new(),
        states: Vec::new(),
        extensions: cfg.keep_extensions.then(Vec::new),
        energies: Vec::new(),
        linf_norms: Vec::new(),
        l2_norms: Vec::new(),
        lq_norms: Vec::new(),
        lq: cfg.lq,
        mass: Vec::new(),
        failure: None,
        steps_completed: 0,
        total_sweeps: rep0.sweeps,
    };
    let mut u = u0.to_vec();
    let mut e = rep0.energy_value;
    record(&mut traj, &mu, 0, 0.0, &u, &ext, e);

    for n in 0..cfg.n_steps {
        let f = cfg.forcing.as_ref().map(|fc| fc.at(n));
        let (u1, w1, rep) = match proximal_step_from(spec, &u, cfg.tau, f, Some(&ext), opts) {
            Ok(r) => r,
            Err(err) => {
                traj.failure = Some(err);
                break;
            }
        };
        traj.total_sweeps += rep.sweeps;
        let e1 = rep.energy_value;
        if f.is_none() {
            let d = l2_distance(&mu, &u1, &u);
            let scale = 1.0_f64.max(e.abs()).max(math::max_abs(&u));
            let excess = e1 + d * d / (2.0 * cfg.tau) - e;
            if excess > 10.0 * opts.tol * scale {
                traj.failure = Some(Error::EnergyInequality { step: n + 1, excess });
                break;
            }
        }
        u = u1;
        ext = w1;
        e = e1;
        traj.steps_completed = n + 1;
        let step = n + 1;
        if step % cfg.record_every == 0 || step == cfg.n_steps {
            record(&mut traj, &mu, step, step as f64 * cfg.tau, &u, &ext, e);
        }
    }
    Ok(traj)
}

fn record(traj: &mut Trajectory, mu: &[f64], step: usize, t: f64, u: &[f64], ext: &[f64], e: f64) {
    let nm = norms(mu, u, traj.lq);
    traj.times.push(t);
    traj.steps.push(step);
    traj.states.push(u.to_vec());
    if let Some(x) = traj.extensions.as_mut() {
        x.push(ext.to_vec());
    }
    traj.energies.push(e);
    traj.linf_norms.push(nm.linf);
    traj.l2_norms.push(nm.l2);
    traj.lq_norms.push(nm.lq);
    traj.mass.push(nm.mass);
}

/// Exact flow of two coupled points, both in Omega: with `c = w(1/mu0 + 1/mu1)`,
/// `d = u0 - u1` solves `d' = -c |d|^{p-2} d` and the `mu`-mass is conserved.
pub fn two_point_exact(mu: [f64; 2], w: f64, p: f64, u0: [f64; 2], t: f64) -> [f64; 2] {
    let c = w * (1.0 / mu[0] + 1.0 / mu[1]);
    let d0 = u0[0] - u0[1];
    let d = if d0 == 0.0 {
        0.0
    } else if p == 2.0 {
        d0 * math::exp(-c * t)
    } else {
        let a = math::powf(d0.abs(), 2.0 - p) + (p - 2.0) * c * t;
        d0.signum() * math::powf(a, 1.0 / (2.0 - p))
    };
    let m = mu[0] * u0[0] + mu[1] * u0[1];
    let total = mu[0] + mu[1];
    [(m + mu[1] * d) / total, (m - mu[0] * d) / total]
}

//! Convex minimization behind stationary problems, elliptic extensions and
//! proximal steps.
//!
//! The objective is
//! `J(w) = E_{B,nu}(w) + sum_{i in Omega} mu_i/(2 tau) (w_i - c_i)^2 - sum_{i in Omega} mu_i f_i w_i`
//! over all non-pinned coordinates, minimized by cyclic nonlinear Gauss-Seidel.
//! Each coordinate derivative is strictly increasing, so every 1-D problem is a
//! bracketed root find.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use crate::energy::{energy_unchecked, flux_at, gradient_unchecked, EnergySpec, PointPotential, Potential};
use crate::error::{check_finite, check_len, invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Residual sup-norm threshold, relative to `max(1, data magnitude)`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Relative tolerance of each 1-D root find.
    pub onedim_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
            onedim_tol: 1e-14,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(invalid("tol", "must be finite and > 0"));
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps", "must be >= 1"));
        }
        if !(self.onedim_tol.is_finite() && self.onedim_tol > 0.0) {
            return Err(invalid("onedim_tol", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    pub sweeps: usize,
    /// Sup-norm of the stationarity residual over free coordinates.
    pub final_residual: f64,
    /// `tol * scale`, the target for `final_residual`.
    pub threshold: f64,
    /// `E_{B,nu}` at the returned point.
    pub energy_value: f64,
    /// Value of the full objective `J`.
    pub objective: f64,
    /// Whether `J` never increased from one sweep to the next.
    pub objective_monotone: bool,
}

/// Proximal anchor: the quadratic `mu_i/(2 tau) (w_i - c_i)^2` on Omega.
#[derive(Debug, Clone, Copy)]
pub struct Anchor<'a> {
    /// Restricted state (one value per Omega point).
    pub center: &'a [f64],
    pub tau: f64,
}

/// Data of one [`minimize`] call. Restricted vectors are indexed like
/// `DiscreteSpace::omega_indices`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Problem<'a> {
    pub anchor: Option<Anchor<'a>>,
    pub forcing: Option<&'a [f64]>,
    /// Coordinates held fixed, as `(point, value)`. Dirichlet-masked points are
    /// always pinned to 0.
    pub pinned: Option<&'a [(usize, f64)]>,
    /// Full starting point; free coordinates default to the anchor (or 0).
    pub initial: Option<&'a [f64]>,
}

struct Setup {
    pinned: Vec<bool>,
    /// Per point: anchor center on Omega when anchored.
    center: Vec<f64>,
    /// `mu_i / tau` on anchored Omega points, else 0.
    anchor_coeff: Vec<f64>,
    /// `mu_i f_i` on Omega.
    load: Vec<f64>,
    start: Vec<f64>,
    scale: f64,
    /// Free components with no coercive term, each with the points it contains.
    floating: Vec<Vec<usize>>,
}

fn build_setup(spec: &EnergySpec, prob: &Problem<'_>) -> Result<Setup> {
    let space = spec.space();
    let n = space.n_points();
    let n_omega = space.n_omega();
    let mu = space.mu();

    let mut pinned = alloc::vec![false; n];
    let mut start = alloc::vec![0.0; n];
    let mut scale: f64 = 1.0;
    for i in 0..n {
        if spec.is_pinned(i) {
            pinned[i] = true;
        }
    }
    if let Some(pins) = prob.pinned {
        for &(i, v) in pins {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
            if spec.is_pinned(i) && v != 0.0 {
                return Err(Error::DirichletViolated { index: i, value: v });
            }
            pinned[i] = true;
            start[i] = v;
            scale = scale.max(v.abs());
        }
    }

    let mut center = alloc::vec![0.0; n];
    let mut anchor_coeff = alloc::vec![0.0; n];
    if let Some(a) = prob.anchor {
        check_len("anchor center", n_omega, a.center.len())?;
        check_finite(a.center)?;
        if !(a.tau.is_finite() && a.tau > 0.0) {
            return Err(invalid("tau", format!("must be finite and > 0, got {}", a.tau)));
        }
        for (k, &i) in space.omega_indices().iter().enumerate() {
            center[i] = a.center[k];
            anchor_coeff[i] = mu[i] / a.tau;
            scale = scale.max(a.center[k].abs());
        }
    }
    let mut load = alloc::vec![0.0; n];
    if let Some(f) = prob.forcing {
        check_len("forcing", n_omega, f.len())?;
        check_finite(f)?;
        for (k, &i) in space.omega_indices().iter().enumerate() {
            load[i] = mu[i] * f[k];
            scale = scale.max(f[k].abs());
        }
    }

    match prob.initial {
        Some(init) => {
            check_len("initial guess", n, init.len())?;
            check_finite(init)?;
            for i in 0..n {
                if !pinned[i] {
                    start[i] = init[i];
                }
            }
        }
        None => {
            for i in 0..n {
                if !pinned[i] && anchor_coeff[i] > 0.0 {
                    start[i] = center[i];
                }
            }
        }
    }

    // Components of the free subgraph; a component floats when nothing in it
    // (anchor, potential, pinned neighbour) fixes the additive constant.
    let kernel = spec.kernel();
    let mut comp = alloc::vec![usize::MAX; n];
    let mut floating = Vec::new();
    let mut queue = VecDeque::new();
    for root in 0..n {
        if pinned[root] || comp[root] != usize::MAX {
            continue;
        }
        let mut members = Vec::new();
        let mut grounded = false;
        comp[root] = root;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            members.push(i);
            if anchor_coeff[i] > 0.0 || matches!(spec.point_potential(i), PointPotential::Power { .. }) {
                grounded = true;
            }
            for &(j, _) in kernel.neighbors(i) {
                if pinned[j] {
                    grounded = true;
                } else if comp[j] == usize::MAX {
                    comp[j] = root;
                    queue.push_back(j);
                }
            }
        }
        if grounded {
            continue;
        }
        let total: f64 = members.iter().map(|&i| load[i]).sum();
        let size: f64 = members.iter().map(|&i| load[i].abs()).sum();
        if total.abs() > 1e-9 * size {
            return Err(Error::UnboundedBelow(format!(
                "component containing point {root} has no coercive term and forcing with mu-weighted sum {total:e}"
            )));
        }
        // Project the admissible roundoff out so the slice problem is solvable.
        let omega_mu: f64 = members.iter().filter(|&&i| space.is_omega(i)).map(|&i| mu[i]).sum();
        if total != 0.0 && omega_mu > 0.0 {
            for &i in &members {
                if space.is_omega(i) {
                    load[i] -= total * mu[i] / omega_mu;
                }
            }
        }
        floating.push(members);
    }

    for &s in &start {
        scale = scale.max(s.abs());
    }
    Ok(Setup {
        pinned,
        center,
        anchor_coeff,
        load,
        start,
        scale,
        floating,
    })
}

struct Coord<'a> {
    spec: &'a EnergySpec,
    setup: &'a Setup,
}

impl Coord<'_> {
    /// Derivative of the objective in coordinate `i` at value `s`, its slope, and
    /// the sum of absolute terms (for the roundoff floor).
    fn eval(&self, w: &[f64], i: usize, s: f64) -> (f64, f64, f64) {
        let phi = self.spec.phi();
        let mut val = 0.0;
        let mut slope = 0.0;
        let mut mag = 0.0;
        for &(j, wij) in self.spec.kernel().neighbors(i) {
            let d = s - w[j];
            let t = wij * phi.phi_prime(d);
            val += t;
            mag += t.abs();
            slope += wij * phi.phi_second(d);
        }
        let b = self.spec.potential_derivative(i, s);
        val += b;
        mag += b.abs();
        slope += self.spec.potential_second(i, s);
        let a = self.setup.anchor_coeff[i];
        if a > 0.0 {
            let t = a * (s - self.setup.center[i]);
            val += t;
            mag += t.abs();
            slope += a;
        }
        let l = self.setup.load[i];
        val -= l;
        mag += l.abs();
        (val, slope, mag)
    }

    fn has_curvature(&self, i: usize) -> bool {
        !self.spec.kernel().neighbors(i).is_empty()
            || self.setup.anchor_coeff[i] > 0.0
            || matches!(self.spec.point_potential(i), PointPotential::Power { .. })
    }

    /// Root of the strictly increasing coordinate derivative, by safeguarded
    /// Newton inside a bisection bracket.
    fn solve(&self, w: &[f64], i: usize, tol: f64) -> f64 {
        let x0 = w[i];
        if !self.has_curvature(i) {
            return x0;
        }
        let (f0, d0, _) = self.eval(w, i, x0);
        if f0 == 0.0 {
            return x0;
        }
        let mut lo_v = x0;
        let mut hi_v = x0;
        for &(j, _) in self.spec.kernel().neighbors(i) {
            lo_v = lo_v.min(w[j]);
            hi_v = hi_v.max(w[j]);
        }
        if self.setup.anchor_coeff[i] > 0.0 {
            lo_v = lo_v.min(self.setup.center[i]);
            hi_v = hi_v.max(self.setup.center[i]);
        }
        let mut step = (hi_v - lo_v) + 1.0;
        let (mut lo, mut hi);
        if f0 > 0.0 {
            hi = x0;
            lo = x0 - step;
            loop {
                let f = self.eval(w, i, lo).0;
                if f <= 0.0 {
                    if f == 0.0 {
                        return lo;
                    }
                    break;
                }
                hi = lo;
                step *= 2.0;
                lo = x0 - step;
            }
        } else {
            lo = x0;
            hi = x0 + step;
            loop {
                let f = self.eval(w, i, hi).0;
                if f >= 0.0 {
                    if f == 0.0 {
                        return hi;
                    }
                    break;
                }
                lo = hi;
                step *= 2.0;
                hi = x0 + step;
            }
        }

        let mut x = x0;
        let (mut f, mut df) = (f0, d0);
        let mut dx_old = hi - lo;
        let mut dx = dx_old;
        for _ in 0..200 {
            let newton_ok = df.is_finite()
                && df > 0.0
                && ((x - hi) * df - f) * ((x - lo) * df - f) < 0.0
                && (2.0 * f).abs() <= (dx_old * df).abs();
            if newton_ok {
                dx_old = dx;
                dx = f / df;
                let prev = x;
                x -= dx;
                if prev == x {
                    return x;
                }
            } else {
                dx_old = dx;
                dx = 0.5 * (hi - lo);
                x = lo + dx;
                if x == lo || x == hi {
                    return x;
                }
            }
            if dx.abs() <= tol * x.abs().max(1.0) {
                return x;
            }
            let (fv, dv, _) = self.eval(w, i, x);
            f = fv;
            df = dv;
            if f == 0.0 {
                return x;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
        }
        x
    }
}

fn objective(spec: &EnergySpec, setup: &Setup, w: &[f64]) -> f64 {
    let mut j = energy_unchecked(spec, w);
    for i in 0..w.len() {
        let a = setup.anchor_coeff[i];
        if a > 0.0 {
            let d = w[i] - setup.center[i];
            j += 0.5 * a * d * d;
        }
        j -= setup.load[i] * w[i];
    }
    j
}

/// Sup-norm of the scaled residual over free coordinates, and whether every
/// coordinate is within `threshold` plus its roundoff floor.
fn residual_check(coord: &Coord<'_>, w: &[f64], threshold: f64) -> (f64, bool) {
    let mu = coord.spec.space().mu();
    let mut worst = 0.0_f64;
    let mut ok = true;
    for i in 0..w.len() {
        if coord.setup.pinned[i] {
            continue;
        }
        let (v, _, mag) = coord.eval(w, i, w[i]);
        let r = v.abs() / mu[i];
        worst = worst.max(r);
        if r > threshold + 64.0 * f64::EPSILON * mag / mu[i] {
            ok = false;
        }
    }
    (worst, ok)
}

/// Minimizes `J` with pinned coordinates held fixed. Non-convergence is reported
/// through `SolveReport::converged`, with the last iterate returned.
pub fn minimize(spec: &EnergySpec, prob: &Problem<'_>, opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    let setup = build_setup(spec, prob)?;
    let coord = Coord {
        spec,
        setup: &setup,
    };
    let threshold = opts.tol * setup.scale;
    let mut w = setup.start.clone();
    let free: Vec<usize> = (0..w.len()).filter(|&i| !setup.pinned[i]).collect();

    let mut obj = objective(spec, &setup, &w);
    let mut monotone = true;
    let (mut res, mut ok) = residual_check(&coord, &w, threshold);
    let mut sweeps = 0;
    while !ok && sweeps < opts.max_sweeps {
        for &i in &free {
            w[i] = coord.solve(&w, i, opts.onedim_tol);
        }
        sweeps += 1;
        let next = objective(spec, &setup, &w);
        if next > obj + 64.0 * f64::EPSILON * (obj.abs() + 1.0) {
            monotone = false;
        }
        obj = next;
        (res, ok) = residual_check(&coord, &w, threshold);
    }

    // Fix the free constant of floating components at the starting mean.
    for members in &setup.floating {
        let mu = spec.space().mu();
        let omega: Vec<usize> = members.iter().copied().filter(|&i| spec.space().is_omega(i)).collect();
        let pool = if omega.is_empty() { members } else { &omega };
        let m: f64 = pool.iter().map(|&i| mu[i]).sum();
        let shift: f64 = pool.iter().map(|&i| mu[i] * (setup.start[i] - w[i])).sum::<f64>() / m;
        if shift != 0.0 {
            for &i in members {
                w[i] += shift;
            }
        }
    }
    if !setup.floating.is_empty() {
        obj = objective(spec, &setup, &w);
        (res, ok) = residual_check(&coord, &w, threshold);
    }

    let report = SolveReport {
        converged: ok,
        sweeps,
        final_residual: res,
        threshold,
        energy_value: energy_unchecked(spec, &w),
        objective: obj,
        objective_monotone: monotone,
    };
    Ok((w, report))
}

/// Solves `(1/mu_i)(sum_j w_ij phi(u_i - u_j) + nu_i beta_i(u_i)) = f_i` on Omega
/// and `= 0` on the exterior (Dirichlet points pinned to 0).
pub fn solve_elliptic(spec: &EnergySpec, f: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    let prob = Problem {
        forcing: Some(f),
        ..Problem::default()
    };
    minimize(spec, &prob, opts)
}

/// Energy-minimal extension of a restricted state: Omega pinned to `u`, exterior free.
pub fn elliptic_extension(spec: &EnergySpec, u: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    let space = spec.space();
    check_len("restricted state", space.n_omega(), u.len())?;
    check_finite(u)?;
    let pins: Vec<(usize, f64)> = space.omega_indices().iter().copied().zip(u.iter().copied()).collect();
    let prob = Problem {
        pinned: Some(&pins),
        ..Problem::default()
    };
    minimize(spec, &prob, opts)
}

/// Closed-form extension for `p = 2` without exterior-exterior coupling:
/// `u_i = (sum_{j in Omega} w_ij u_j) / (sum_{j in Omega} w_ij + nu_i kappa_i)` off Omega.
pub fn linear_extension_explicit(spec: &EnergySpec, u: &[f64]) -> Result<Vec<f64>> {
    let space = spec.space();
    check_len("restricted state", space.n_omega(), u.len())?;
    check_finite(u)?;
    if spec.p() != 2.0 {
        return Err(Error::Precondition(format!("explicit extension needs p = 2, got {}", spec.p())));
    }
    match spec.potential() {
        Potential::Neumann => {}
        Potential::PowerRobin { q, .. } if *q == 2.0 => {}
        Potential::PowerRobin { q, .. } => {
            return Err(Error::Precondition(format!("explicit extension needs q = 2, got {q}")))
        }
        Potential::Dirichlet { .. } => {
            return Err(Error::Precondition("explicit extension is for Neumann or Robin potentials".into()))
        }
    }
    for &(i, j, _) in spec.kernel().pairs() {
        if !space.is_omega(i) && !space.is_omega(j) {
            return Err(Error::Precondition(format!("exterior points {i} and {j} interact")));
        }
    }
    let mut out = space.extend_with(u, 0.0);
    for i in space.exterior_indices() {
        let mut num = 0.0;
        let mut rho = 0.0;
        for &(j, w) in spec.kernel().neighbors(i) {
            num += w * out[j];
            rho += w;
        }
        let c = match spec.point_potential(i) {
            PointPotential::Power { coeff, .. } => coeff,
            _ => 0.0,
        };
        if rho + c == 0.0 {
            return Err(Error::Precondition(format!("exterior point {i} is isolated")));
        }
        out[i] = num / (rho + c);
    }
    Ok(out)
}

/// Per-point stationarity residual and which points are constrained.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub values: Vec<f64>,
    pub constrained: Vec<bool>,
}

impl Residual {
    /// Sup-norm over unconstrained points.
    pub fn free_sup(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.constrained)
            .filter(|(_, &c)| !c)
            .fold(0.0_f64, |m, (v, _)| m.max(v.abs()))
    }
}

/// `r_i = (1/mu_i)(sum_j w_ij phi(u_i - u_j) + nu_i beta_i(u_i)) - f_i [i in Omega]`.
/// Dirichlet points report the raw flux and are flagged constrained.
pub fn residual(spec: &EnergySpec, u_hat: &[f64], f: &[f64]) -> Result<Residual> {
    let space = spec.space();
    check_len("state", space.n_points(), u_hat.len())?;
    check_len("forcing", space.n_omega(), f.len())?;
    check_finite(u_hat)?;
    check_finite(f)?;
    let mu = space.mu();
    let mut g = gradient_unchecked(spec, u_hat);
    let mut constrained = alloc::vec![false; u_hat.len()];
    for i in 0..u_hat.len() {
        if spec.is_pinned(i) {
            constrained[i] = true;
            g[i] = flux_at(spec, u_hat, i);
        }
        g[i] /= mu[i];
    }
    for (k, &i) in space.omega_indices().iter().enumerate() {
        g[i] -= f[k];
    }
    Ok(Residual { values: g, constrained })
}

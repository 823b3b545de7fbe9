//! The linear (`p = 2`) operator, its fractional powers and subordinated kernel.
//!
//! `(A u)_i = (1/mu_i)(sum_j w_ij (u_i - u_j) + nu_i kappa_i u_i)` on the points
//! not masked by a Dirichlet potential. `A` is self-adjoint in `L2(mu)`; it is
//! diagonalized through the symmetric matrix `M^(1/2) A M^(-1/2)`.

use alloc::vec::Vec;

use crate::energy::{EnergySpec, PointPotential, Potential};
use crate::error::{check_finite, check_len, invalid, Error, Result};
use crate::linalg::symmetric_eigen;
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperatorRep {
    /// Point index of each free coordinate.
    pub indices: Vec<usize>,
    pub mu: Vec<f64>,
    /// Row-major `dim x dim` matrix of `A`.
    pub matrix: Vec<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `mu`-orthonormal, one per eigenvalue.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Eigenvalues at or below this are treated as exact zeros.
    pub zero_tol: f64,
}

impl LinearOperatorRep {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// `A u`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_len("state", n, u.len())?;
        Ok((0..n)
            .map(|i| (0..n).map(|j| self.matrix[i * n + j] * u[j]).sum())
            .collect())
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mu.iter().zip(u.iter().zip(v)).map(|(m, (a, b))| m * a * b).sum()
    }

    /// `<u, e_n>_mu` for every mode.
    pub fn coefficients(&self, u: &[f64]) -> Vec<f64> {
        self.eigenvectors.iter().map(|e| self.inner(u, e)).collect()
    }

    fn is_zero_mode(&self, lambda: f64) -> bool {
        lambda <= self.zero_tol
    }

    /// `sum_n g(lambda_n) <u, e_n> e_n`.
    fn modal(&self, u: &[f64], g: impl Fn(usize, f64) -> f64) -> Vec<f64> {
        let c = self.coefficients(u);
        let mut out = alloc::vec![0.0; self.dim()];
        for (n, e) in self.eigenvectors.iter().enumerate() {
            let a = g(n, self.eigenvalues[n]) * c[n];
            if a != 0.0 {
                for (o, x) in out.iter_mut().zip(e) {
                    *o += a * x;
                }
            }
        }
        out
    }

    /// `e^{-tA} u`.
    pub fn heat(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.dim(), u.len())?;
        Ok(self.modal(u, |_, l| if self.is_zero_mode(l) { 1.0 } else { math::exp(-l * t) }))
    }
}

/// Assembles `A` for a `p = 2` spec (Neumann, Robin with `q = 2`, or Dirichlet).
pub fn assemble_p2_operator(spec: &EnergySpec) -> Result<LinearOperatorRep> {
    if spec.p() != 2.0 {
        return Err(Error::Precondition(alloc::format!("linear operator needs p = 2, got {}", spec.p())));
    }
    if let Potential::PowerRobin { q, .. } = spec.potential() {
        if *q != 2.0 {
            return Err(Error::Precondition(alloc::format!("linear operator needs q = 2, got {q}")));
        }
    }
    let space = spec.space();
    let n_all = space.n_points();
    let indices: Vec<usize> = (0..n_all).filter(|&i| !spec.is_pinned(i)).collect();
    let mut pos = alloc::vec![usize::MAX; n_all];
    for (k, &i) in indices.iter().enumerate() {
        pos[i] = k;
    }
    let n = indices.len();
    let mu: Vec<f64> = indices.iter().map(|&i| space.mu()[i]).collect();
    let mut a = alloc::vec![0.0; n * n];
    for (k, &i) in indices.iter().enumerate() {
        let mut diag = match spec.point_potential(i) {
            PointPotential::Power { coeff, .. } => coeff,
            _ => 0.0,
        };
        for &(j, w) in spec.kernel().neighbors(i) {
            diag += w;
            if pos[j] != usize::MAX {
                a[k * n + pos[j]] -= w / mu[k];
            }
        }
        a[k * n + k] += diag / mu[k];
    }

    let sq: Vec<f64> = mu.iter().map(|&m| math::sqrt(m)).collect();
    let mut s = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = sq[i] * a[i * n + j] / sq[j];
        }
    }
    // Symmetrize away the roundoff of the two scalings.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[i * n + j] + s[j * n + i]);
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    let (eigenvalues, vs) = symmetric_eigen(&s, n);
    let eigenvectors = vs
        .into_iter()
        .map(|v| v.iter().zip(&sq).map(|(x, r)| x / r).collect())
        .collect();
    let norm = s.iter().fold(0.0_f64, |m, x| m.max(x.abs())) * n as f64;
    Ok(LinearOperatorRep {
        indices,
        mu,
        matrix: a,
        eigenvalues,
        eigenvectors,
        zero_tol: 1e-12 * norm.max(f64::MIN_POSITIVE),
    })
}

fn check_theta(theta: f64, allow_one: bool) -> Result<()> {
    let ok = theta > 0.0 && (theta < 1.0 || (allow_one && theta == 1.0));
    if !ok {
        return Err(invalid("theta", alloc::format!("out of range: {theta}")));
    }
    Ok(())
}

/// `A^theta u = sum_n lambda_n^theta <u, e_n> e_n`, with `0^theta = 0`.
/// `theta = 1` is accepted and returns `A u` modally.
pub fn spectral_power(op: &LinearOperatorRep, theta: f64, u: &[f64]) -> Result<Vec<f64>> {
    check_theta(theta, true)?;
    check_len("state", op.dim(), u.len())?;
    check_finite(u)?;
    Ok(op.modal(u, |_, l| if op.is_zero_mode(l) { 0.0 } else { math::powf(l, theta) }))
}

/// Quadrature on the log axis `t = e^s` for the subordination integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub panels: usize,
    pub order: usize,
    /// Relative tolerance on the error estimate.
    pub tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            panels: 40,
            order: 10,
            tol: 1e-8,
        }
    }
}

/// `(theta/Gamma(1-theta)) int_0^inf (1 - e^{-lambda t}) t^{-1-theta} dt` for each
/// mode, by quadrature; the closed value is `lambda^theta`.
///
/// The window `[1e-3/lambda_max, 50/lambda_min]` covers every mode; below it the
/// integrand is replaced by its Taylor series, above it by `t^{-1-theta}` with
/// the exponential remainder's leading term.
fn mode_integrals(op: &LinearOperatorRep, theta: f64, panels: usize, order: usize) -> Vec<f64> {
    let positive: Vec<f64> = op.eigenvalues.iter().copied().filter(|&l| !op.is_zero_mode(l)).collect();
    let (Some(&lmin), Some(&lmax)) = (positive.first(), positive.last()) else {
        return alloc::vec![0.0; op.dim()];
    };
    let t_lo = 1e-3 / lmax;
    let t_hi = 50.0 / lmin;
    let (nodes, weights) = math::composite_gl(math::ln(t_lo), math::ln(t_hi), panels, order);
    let pref = theta / math::gamma(1.0 - theta);
    op.eigenvalues
        .iter()
        .map(|&l| {
            if op.is_zero_mode(l) {
                return 0.0;
            }
            let body: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&s, &w)| {
                    let t = math::exp(s);
                    // (1 - e^{-lt}) t^{-theta}, the dt = t ds factor included
                    w * -libm::expm1(-l * t) * math::exp(-theta * s)
                })
                .sum();
            let a = t_lo;
            let head = l * math::powf(a, 1.0 - theta) / (1.0 - theta)
                - l * l * math::powf(a, 2.0 - theta) / (2.0 * (2.0 - theta))
                + l * l * l * math::powf(a, 3.0 - theta) / (6.0 * (3.0 - theta));
            let b = t_hi;
            let tail = math::powf(b, -theta) / theta - math::exp(-l * b) * math::powf(b, -1.0 - theta) / l;
            pref * (head + body + tail)
        })
        .collect()
}

fn mu_norm(mu: &[f64], v: &[f64]) -> f64 {
    math::sqrt(mu.iter().zip(v).map(|(m, x)| m * x * x).sum())
}

/// `A^theta u` from the subordination integral
/// `(theta/Gamma(1-theta)) int_0^inf (u - e^{-tA} u) t^{-1-theta} dt`.
/// Returns the value and an error estimate (difference against half the panels,
/// in the `L2(mu)` norm).
pub fn balakrishnan_power(
    op: &LinearOperatorRep,
    theta: f64,
    u: &[f64],
    quad: &QuadratureConfig,
) -> Result<(Vec<f64>, f64)> {
    check_theta(theta, false)?;
    check_len("state", op.dim(), u.len())?;
    check_finite(u)?;
    check_quad(quad)?;
    let fine = mode_integrals(op, theta, quad.panels, quad.order);
    let coarse = mode_integrals(op, theta, (quad.panels / 2).max(1), quad.order);
    let value = op.modal(u, |n, _| fine[n]);
    let other = op.modal(u, |n, _| coarse[n]);
    let diff: Vec<f64> = value.iter().zip(&other).map(|(a, b)| a - b).collect();
    let estimate = mu_norm(&op.mu, &diff);
    let size = mu_norm(&op.mu, &value);
    if estimate > quad.tol * size {
        return Err(Error::QuadratureTolerance {
            estimate,
            tolerance: quad.tol * size,
        });
    }
    Ok((value, estimate))
}

fn check_quad(quad: &QuadratureConfig) -> Result<()> {
    if quad.panels < 2 || quad.order == 0 {
        return Err(invalid("quadrature", "needs at least 2 panels and order >= 1"));
    }
    if !(quad.tol.is_finite() && quad.tol > 0.0) {
        return Err(invalid("quadrature", "tolerance must be finite and > 0"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatedKernel {
    /// Row-major `dim x dim`; diagonal entries are 0.
    pub k: Vec<f64>,
    pub kappa: Vec<f64>,
    pub error_estimate: f64,
}

impl SubordinatedKernel {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let n = self.kappa.len();
        self.k[i * n + j]
    }
}

/// `k_theta(i,j) = (theta/Gamma(1-theta)) int_0^inf G(t,i,j) t^{-1-theta} dt` for
/// `i != j` and `kappa_i = (A^theta 1)_i`.
///
/// Off the diagonal `sum_n e_n(i) e_n(j) = 0`, so `G = sum_n (e^{-lambda_n t} - 1) e_n(i) e_n(j)`,
/// whose mode integrals converge individually and vanish for zero modes.
pub fn subordinated_kernel(op: &LinearOperatorRep, theta: f64, quad: &QuadratureConfig) -> Result<SubordinatedKernel> {
    check_theta(theta, false)?;
    check_quad(quad)?;
    let n = op.dim();
    let fine = mode_integrals(op, theta, quad.panels, quad.order);
    let coarse = mode_integrals(op, theta, (quad.panels / 2).max(1), quad.order);
    let mut k = alloc::vec![0.0; n * n];
    let mut kc = alloc::vec![0.0; n * n];
    for (m, e) in op.eigenvectors.iter().enumerate() {
        if fine[m] == 0.0 && coarse[m] == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let p = e[i] * e[j];
                    k[i * n + j] -= fine[m] * p;
                    kc[i * n + j] -= coarse[m] * p;
                }
            }
        }
    }
    let ones = alloc::vec![1.0; n];
    let kappa = op.modal(&ones, |m, _| fine[m]);
    let kappa_c = op.modal(&ones, |m, _| coarse[m]);
    let mut estimate = 0.0_f64;
    let mut size = 0.0_f64;
    for i in 0..n * n {
        estimate = estimate.max((k[i] - kc[i]).abs());
        size = size.max(k[i].abs());
    }
    for i in 0..n {
        estimate = estimate.max((kappa[i] - kappa_c[i]).abs());
        size = size.max(kappa[i].abs());
    }
    if estimate > quad.tol * size {
        return Err(Error::QuadratureTolerance {
            estimate,
            tolerance: quad.tol * size,
        });
    }
    Ok(SubordinatedKernel {
        k,
        kappa,
        error_estimate: estimate,
    })
}

/// `0.5 sum_{i != j} k_ij mu_i mu_j (u_i - u_j)^2 + sum_i kappa_i u_i^2 mu_i`.
pub fn subordinated_form(op: &LinearOperatorRep, ker: &SubordinatedKernel, u: &[f64]) -> Result<f64> {
    let n = op.dim();
    check_len("state", n, u.len())?;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = u[i] - u[j];
                s += 0.5 * ker.k[i * n + j] * op.mu[i] * op.mu[j] * d * d;
            }
        }
        s += ker.kappa[i] * u[i] * u[i] * op.mu[i];
    }
    Ok(s)
}

/// `t^{-N/(2 theta)} (1 + r t^{-1/(2 theta)})^{-N - 2 theta}`.
pub fn frac_heat_kernel_rn(t: f64, r: f64, dim: usize, theta: f64) -> Result<f64> {
    check_theta(theta, false)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", "must be finite and > 0"));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(invalid("r", "must be finite and >= 0"));
    }
    if dim == 0 {
        return Err(invalid("N", "dimension must be at least 1"));
    }
    let n = dim as f64;
    Ok(math::powf(t, -n / (2.0 * theta)) * math::powf(1.0 + r * math::powf(t, -1.0 / (2.0 * theta)), -n - 2.0 * theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::PhiSpec;
    use crate::space::graph_space;
    use alloc::sync::Arc;

    fn path(n: usize, potential: Potential, mu: Vec<f64>) -> EnergySpec {
        let omega: Vec<usize> = (0..n).collect();
        let edges = (0..n - 1).map(|i| (i, i + 1, 1.0 + 0.25 * i as f64));
        let (space, kernel) = graph_space(mu, &omega[..n - 1], edges).unwrap();
        EnergySpec::new(
            Arc::new(space),
            Arc::new(kernel),
            PhiSpec::new(2.0).unwrap(),
            potential,
            alloc::vec![1.0; n],
        )
        .unwrap()
    }

    #[test]
    fn two_node_spectrum() {
        let spec = path(2, Potential::Neumann, alloc::vec![1.0, 1.0]);
        let op = assemble_p2_operator(&spec).unwrap();
        assert!(op.eigenvalues[0].abs() < 1e-14 && (op.eigenvalues[1] - 2.0).abs() < 1e-14);
        let e0 = &op.eigenvectors[0];
        assert!((e0[0] - e0[1]).abs() < 1e-14);
        // u = (1,0): A^{1/2} u = sqrt(2) <u,e1> e1 = sqrt(2)/2 (1,-1)
        let v = spectral_power(&op, 0.5, &[1.0, 0.0]).unwrap();
        let h = core::f64::consts::SQRT_2 / 2.0;
        assert!((v[0] - h).abs() < 1e-14 && (v[1] + h).abs() < 1e-14);
        assert!(spectral_power(&op, 0.5, &[1.0, 1.0]).unwrap().iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn dirichlet_gap_is_positive() {
        let spec = path(
            6,
            Potential::Dirichlet {
                mask: alloc::vec![false, false, false, false, false, true],
            },
            alloc::vec![1.0, 0.5, 2.0, 1.0, 1.5, 1.0],
        );
        let op = assemble_p2_operator(&spec).unwrap();
        assert_eq!(op.dim(), 5);
        assert!(op.eigenvalues[0] > 1e-3);
        for a in 0..5 {
            for b in 0..5 {
                let d = op.inner(&op.eigenvectors[a], &op.eigenvectors[b]);
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_nonlinear() {
        let (space, kernel) = graph_space(alloc::vec![1.0; 2], &[0, 1], [(0, 1, 1.0)]).unwrap();
        let spec = EnergySpec::neumann(Arc::new(space), Arc::new(kernel), PhiSpec::new(3.0).unwrap()).unwrap();
        assert!(assemble_p2_operator(&spec).is_err());
    }

    #[test]
    fn single_mode_integral() {
        let spec = path(2, Potential::Neumann, alloc::vec![1.0, 1.0]);
        let op = assemble_p2_operator(&spec).unwrap();
        let q = mode_integrals(&op, 0.5, 40, 10);
        assert!((q[1] - core::f64::consts::SQRT_2).abs() < 1e-12, "{q:?}");
        assert_eq!(q[0], 0.0);
    }

    #[test]
    fn balakrishnan_matches_modal() {
        let spec = path(
            12,
            Potential::PowerRobin {
                kappa: (0..12).map(|i| if i == 11 { 2.0 } else { 0.0 }).collect(),
                q: 2.0,
            },
            (0..12).map(|i| 0.5 + 0.1 * i as f64).collect(),
        );
        let op = assemble_p2_operator(&spec).unwrap();
        let u: Vec<f64> = (0..12).map(|i| libm::sin(i as f64)).collect();
        for theta in [0.25, 0.5, 0.75] {
            let exact = spectral_power(&op, theta, &u).unwrap();
            let (approx, est) = balakrishnan_power(&op, theta, &u, &QuadratureConfig::default()).unwrap();
            let gap: Vec<f64> = exact.iter().zip(&approx).map(|(a, b)| a - b).collect();
            assert!(mu_norm(&op.mu, &gap) <= 1e-10 * mu_norm(&op.mu, &exact), "theta={theta} est={est}");
        }
    }

    #[test]
    fn kernel_in_null_space_gives_zero() {
        let spec = path(5, Potential::Neumann, alloc::vec![1.0; 5]);
        let op = assemble_p2_operator(&spec).unwrap();
        let (v, _) = balakrishnan_power(&op, 0.5, &[2.0; 5], &QuadratureConfig::default()).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn subordinated_form_identity() {
        let spec = path(8, Potential::Neumann, (0..8).map(|i| 1.0 + 0.2 * i as f64).collect());
        let op = assemble_p2_operator(&spec).unwrap();
        let ker = subordinated_kernel(&op, 0.5, &QuadratureConfig::default()).unwrap();
        assert!(ker.kappa.iter().all(|k| k.abs() <= 1e-8));
        assert!(ker.k.iter().all(|&k| k >= -1e-10));
        let u: Vec<f64> = (0..8).map(|i| libm::cos(1.3 * i as f64)).collect();
        let lhs = op.inner(&spectral_power(&op, 0.5, &u).unwrap(), &u);
        let rhs = subordinated_form(&op, &ker, &u).unwrap();
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs());
    }

    #[test]
    fn power_semigroup() {
        let spec = path(7, Potential::Neumann, alloc::vec![1.0; 7]);
        let op = assemble_p2_operator(&spec).unwrap();
        let u: Vec<f64> = (0..7).map(|i| i as f64 * 0.3 - 1.0).collect();
        let a = spectral_power(&op, 0.4, &spectral_power(&op, 0.6, &u).unwrap()).unwrap();
        let b = op.apply(&u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_profile() {
        assert_eq!(frac_heat_kernel_rn(1.0, 1.0, 1, 0.5).unwrap(), 0.25);
        assert_eq!(frac_heat_kernel_rn(4.0, 0.0, 2, 0.5).unwrap(), 0.0625);
        assert!(frac_heat_kernel_rn(1e8, 1.0, 1, 0.5).unwrap() < 1e-7);
        assert!(frac_heat_kernel_rn(0.0, 1.0, 1, 0.5).is_err());
    }
}

//! The energies `E` and `E_{B,nu}`, their gradient and truncated principal values.
//!
//! `E(u) = (1/2p) sum_{i != j} w_ij |u_i - u_j|^p + sum_i nu_i B_i(u_i)`, each
//! unordered pair counted twice in the double sum. Pair sums run over the
//! stored pairs in their fixed order, so results are bit-reproducible.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{check_finite, check_len, invalid, Error, Result};
use crate::kernel::{KernelMatrix, PhiSpec};
use crate::math;
use crate::space::DiscreteSpace;

/// Exterior/boundary potential `B`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `B = 0`.
    Neumann,
    /// `B(x, s) = kappa(x) |s|^q / q`, `q >= 2`.
    PowerRobin { kappa: Vec<f64>, q: f64 },
    /// Values pinned to zero on the mask.
    Dirichlet { mask: Vec<bool> },
}

/// What the potential does at one point, after folding in `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointPotential {
    Zero,
    /// `coeff |s|^q / q` with `coeff = nu kappa > 0`.
    Power { coeff: f64, q: f64 },
    /// Value constrained to 0.
    Pinned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec {
    space: Arc<DiscreteSpace>,
    kernel: Arc<KernelMatrix>,
    phi: PhiSpec,
    potential: Potential,
    nu: Vec<f64>,
}

impl EnergySpec {
    pub fn new(
        space: Arc<DiscreteSpace>,
        kernel: Arc<KernelMatrix>,
        phi: PhiSpec,
        potential: Potential,
        nu: Vec<f64>,
    ) -> Result<Self> {
        Self::build(space, kernel, phi, potential, nu, false)
    }

    /// Like [`EnergySpec::new`] but accepts Dirichlet pins inside Omega (obstacles).
    pub fn with_interior_obstacles(
        space: Arc<DiscreteSpace>,
        kernel: Arc<KernelMatrix>,
        phi: PhiSpec,
        potential: Potential,
        nu: Vec<f64>,
    ) -> Result<Self> {
        Self::build(space, kernel, phi, potential, nu, true)
    }

    /// Neumann spec with `nu = 1`.
    pub fn neumann(space: Arc<DiscreteSpace>, kernel: Arc<KernelMatrix>, phi: PhiSpec) -> Result<Self> {
        let n = space.n_points();
        Self::new(space, kernel, phi, Potential::Neumann, alloc::vec![1.0; n])
    }

    fn build(
        space: Arc<DiscreteSpace>,
        kernel: Arc<KernelMatrix>,
        phi: PhiSpec,
        potential: Potential,
        nu: Vec<f64>,
        allow_interior: bool,
    ) -> Result<Self> {
        let n = space.n_points();
        check_len("kernel points", n, kernel.n_points())?;
        check_len("nu", n, nu.len())?;
        if nu.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("nu", "weights must be finite and >= 0"));
        }
        match &potential {
            Potential::Neumann => {}
            Potential::PowerRobin { kappa, q } => {
                check_len("kappa", n, kappa.len())?;
                if kappa.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid("kappa", "weights must be finite and >= 0"));
                }
                if !(q.is_finite() && *q >= 2.0) {
                    return Err(invalid("q", alloc::format!("Robin exponent must be >= 2, got {q}")));
                }
            }
            Potential::Dirichlet { mask } => {
                check_len("Dirichlet mask", n, mask.len())?;
                if !allow_interior {
                    if let Some(i) = (0..n).find(|&i| mask[i] && space.is_omega(i)) {
                        return Err(Error::InteriorDirichlet(i));
                    }
                }
            }
        }
        Ok(Self {
            space,
            kernel,
            phi,
            potential,
            nu,
        })
    }

    /// Same space, kernel and exponent with another potential and `nu`.
    pub fn with_potential(&self, potential: Potential, nu: Vec<f64>) -> Result<Self> {
        Self::new(self.space.clone(), self.kernel.clone(), self.phi, potential, nu)
    }

    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    pub fn space_arc(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn kernel_arc(&self) -> &Arc<KernelMatrix> {
        &self.kernel
    }

    pub fn phi(&self) -> PhiSpec {
        self.phi
    }

    pub fn p(&self) -> f64 {
        self.phi.p()
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn n_points(&self) -> usize {
        self.space.n_points()
    }

    pub fn point_potential(&self, i: usize) -> PointPotential {
        match &self.potential {
            Potential::Neumann => PointPotential::Zero,
            Potential::PowerRobin { kappa, q } => {
                let coeff = self.nu[i] * kappa[i];
                if coeff > 0.0 {
                    PointPotential::Power { coeff, q: *q }
                } else {
                    PointPotential::Zero
                }
            }
            Potential::Dirichlet { mask } => {
                if mask[i] {
                    PointPotential::Pinned
                } else {
                    PointPotential::Zero
                }
            }
        }
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        matches!(&self.potential, Potential::Dirichlet { mask } if mask[i])
    }

    /// `nu_i B_i(s)`; zero for pinned points (their value is constrained instead).
    pub fn potential_value(&self, i: usize, s: f64) -> f64 {
        match self.point_potential(i) {
            PointPotential::Power { coeff, q } => coeff * math::powf(s.abs(), q) / q,
            _ => 0.0,
        }
    }

    /// `nu_i beta_i(s)`, the derivative of [`EnergySpec::potential_value`].
    pub fn potential_derivative(&self, i: usize, s: f64) -> f64 {
        match self.point_potential(i) {
            PointPotential::Power { coeff, q } => {
                if q == 2.0 {
                    coeff * s
                } else {
                    coeff * math::signed_pow(s, q - 1.0)
                }
            }
            _ => 0.0,
        }
    }

    pub(crate) fn potential_second(&self, i: usize, s: f64) -> f64 {
        match self.point_potential(i) {
            PointPotential::Power { coeff, q } => {
                if q == 2.0 {
                    coeff
                } else {
                    coeff * (q - 1.0) * math::powf(s.abs(), q - 2.0)
                }
            }
            _ => 0.0,
        }
    }

    /// Checks length, finiteness and Dirichlet constraints of a full state.
    pub fn validate_state(&self, u_hat: &[f64]) -> Result<()> {
        check_len("state", self.n_points(), u_hat.len())?;
        check_finite(u_hat)?;
        if let Potential::Dirichlet { mask } = &self.potential {
            if let Some(i) = (0..u_hat.len()).find(|&i| mask[i] && u_hat[i] != 0.0) {
                return Err(Error::DirichletViolated {
                    index: i,
                    value: u_hat[i],
                });
            }
        }
        Ok(())
    }
}

/// `(1/2p) sum_{i != j} w_ij |u_i - u_j|^p`, no validation.
pub fn kernel_energy(kernel: &KernelMatrix, phi: PhiSpec, u_hat: &[f64]) -> f64 {
    kernel
        .pairs()
        .iter()
        .map(|&(i, j, w)| w * phi.phi(u_hat[i] - u_hat[j]))
        .sum()
}

pub(crate) fn energy_unchecked(spec: &EnergySpec, u_hat: &[f64]) -> f64 {
    let mut e = kernel_energy(spec.kernel(), spec.phi(), u_hat);
    if matches!(spec.potential, Potential::PowerRobin { .. }) {
        for (i, &v) in u_hat.iter().enumerate() {
            e += spec.potential_value(i, v);
        }
    }
    e
}

/// `E_{B,nu}(u_hat)`.
pub fn energy(spec: &EnergySpec, u_hat: &[f64]) -> Result<f64> {
    spec.validate_state(u_hat)?;
    Ok(energy_unchecked(spec, u_hat))
}

/// `sum_j w_ij phi(u_i - u_j)` at point `i`.
pub(crate) fn flux_at(spec: &EnergySpec, u_hat: &[f64], i: usize) -> f64 {
    let phi = spec.phi();
    let ui = u_hat[i];
    spec.kernel()
        .neighbors(i)
        .iter()
        .map(|&(j, w)| w * phi.phi_prime(ui - u_hat[j]))
        .sum()
}

/// `g_i = sum_j w_ij phi(u_i - u_j) + nu_i beta_i(u_i)`; 0 on pinned points.
pub fn gradient(spec: &EnergySpec, u_hat: &[f64]) -> Result<Vec<f64>> {
    spec.validate_state(u_hat)?;
    Ok(gradient_unchecked(spec, u_hat))
}

pub(crate) fn gradient_unchecked(spec: &EnergySpec, u_hat: &[f64]) -> Vec<f64> {
    (0..u_hat.len())
        .map(|i| {
            if spec.is_pinned(i) {
                0.0
            } else {
                flux_at(spec, u_hat, i) + spec.potential_derivative(i, u_hat[i])
            }
        })
        .collect()
}

/// Truncated principal values `(1/mu_i) sum_{|x_i - x_j| > eps} w_ij phi(u_i - u_j)`, one
/// vector per cut-off in `epsilons` (strictly decreasing, positive).
pub fn pv_apply(spec: &EnergySpec, u_hat: &[f64], epsilons: &[f64]) -> Result<Vec<Vec<f64>>> {
    spec.validate_state(u_hat)?;
    let coords = spec.space().coords().ok_or(Error::MissingCoordinates)?;
    if epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(invalid("epsilons", "cut-offs must be finite and positive"));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("epsilons", "cut-offs must be strictly decreasing"));
    }
    let phi = spec.phi();
    let mu = spec.space().mu();
    let out = epsilons
        .iter()
        .map(|&eps| {
            (0..u_hat.len())
                .map(|i| {
                    let s: f64 = spec
                        .kernel()
                        .neighbors(i)
                        .iter()
                        .filter(|&&(j, _)| coords.distance(i, j) > eps)
                        .map(|&(j, w)| w * phi.phi_prime(u_hat[i] - u_hat[j]))
                        .sum();
                    s / mu[i]
                })
                .collect()
        })
        .collect();
    Ok(out)
}

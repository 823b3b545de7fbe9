//! Pair kernels, normalization constants of the fractional (p-)Laplacian and the
//! power nonlinearity `Phi(s) = |s|^p / p` with derivative `phi(s) = |s|^(p-2) s`.
//!
//! On the normalization at `p = 2`: the two constants share the same Gamma
//! arguments, so `C_{N,theta,2} = C_{N,theta} / 2` exactly. The p-energy
//! prefactor `C_{N,theta,2} / (2p)` is therefore `C_{N,theta} / 8`, half of the
//! `C_{N,theta} / 4` that appears in the quadratic form of the fractional
//! Laplacian on the whole space. The two are kept as they are; no rescaling is
//! applied anywhere in this crate.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::math;

/// Symmetric nonnegative pair weights `w_ij`, `i < j` stored once.
///
/// Zero weights are never stored, so the stored pairs are exactly the
/// interaction set. Diagonal pairs are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n_points: usize,
    pairs: Vec<(usize, usize, f64)>,
    offsets: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
}

impl KernelMatrix {
    /// Builds a kernel from `(i, j, w)` triples in any orientation.
    ///
    /// Repeated pairs with identical weights collapse into one entry; zero
    /// weights are dropped.
    pub fn from_pairs(
        n_points: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in triples {
            for idx in [i, j] {
                if idx >= n_points {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        n: n_points,
                    });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeight { i, j, w });
            }
            if w == 0.0 {
                continue;
            }
            let key = (i.min(j), i.max(j));
            match map.get(&key) {
                Some(&prev) if prev != w => {
                    return Err(Error::ConflictingWeight {
                        i: key.0,
                        j: key.1,
                        first: prev,
                        second: w,
                    })
                }
                Some(_) => {}
                None => {
                    map.insert(key, w);
                }
            }
        }
        let pairs: Vec<(usize, usize, f64)> = map.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        Ok(Self::from_sorted_pairs(n_points, pairs))
    }

    /// Kernel with no interactions.
    pub fn empty(n_points: usize) -> Self {
        Self::from_sorted_pairs(n_points, Vec::new())
    }

    fn from_sorted_pairs(n_points: usize, pairs: Vec<(usize, usize, f64)>) -> Self {
        let mut degree = alloc::vec![0usize; n_points];
        for &(i, j, _) in &pairs {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = alloc::vec![0usize; n_points + 1];
        for i in 0..n_points {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = alloc::vec![(0usize, 0.0f64); offsets[n_points]];
        for &(i, j, w) in &pairs {
            neighbors[fill[i]] = (j, w);
            fill[i] += 1;
            neighbors[fill[j]] = (i, w);
            fill[j] += 1;
        }
        for i in 0..n_points {
            neighbors[offsets[i]..offsets[i + 1]].sort_by_key(|&(j, _)| j);
        }
        Self {
            n_points,
            pairs,
            offsets,
            neighbors,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Number of stored (unordered) pairs.
    pub fn nnz(&self) -> usize {
        self.pairs.len()
    }

    /// Stored pairs `(i, j, w)` with `i < j`, in lexicographic order.
    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    /// Neighbors of `i` with their weights, sorted by index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j || i >= self.n_points || j >= self.n_points {
            return 0.0;
        }
        let row = self.neighbors(i);
        match row.binary_search_by_key(&j, |&(k, _)| k) {
            Ok(pos) => row[pos].1,
            Err(_) => 0.0,
        }
    }

    /// `sum_j w_ij` for each point.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|i| self.neighbors(i).iter().map(|&(_, w)| w).sum())
            .collect()
    }
}

/// Exponent of the power nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSpec {
    p: f64,
}

impl PhiSpec {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(invalid("p", alloc::format!("must be finite and > 1, got {p}")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn phi(&self, s: f64) -> f64 {
        phi(*self, s)
    }

    pub fn phi_prime(&self, s: f64) -> f64 {
        phi_prime(*self, s)
    }

    /// Derivative of `phi_prime`, `(p-1)|s|^(p-2)`. Infinite at 0 when p < 2.
    pub fn phi_second(&self, s: f64) -> f64 {
        let p = self.p;
        if p == 2.0 {
            return 1.0;
        }
        if s == 0.0 {
            return if p > 2.0 { 0.0 } else { f64::INFINITY };
        }
        (p - 1.0) * math::powf(s.abs(), p - 2.0)
    }
}

/// `|s|^p / p`.
pub fn phi(spec: PhiSpec, s: f64) -> f64 {
    let p = spec.p;
    if p == 2.0 {
        return 0.5 * s * s;
    }
    math::powf(s.abs(), p) / p
}

/// `|s|^(p-2) s`, extended by 0 at the origin.
pub fn phi_prime(spec: PhiSpec, s: f64) -> f64 {
    let p = spec.p;
    if p == 2.0 {
        return s;
    }
    math::signed_pow(s, p - 1.0)
}

/// Which normalization constant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// `C_{N,theta}` of the fractional Laplacian.
    Linear,
    /// `C_{N,theta,p}` of the fractional p-Laplacian.
    PLaplace { p: f64 },
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", alloc::format!("must lie in ]0,1[, got {theta}")));
    }
    Ok(())
}

/// `C_{N,theta} = theta 2^(2 theta) Gamma((N+2theta)/2) / (pi^(N/2) Gamma(1-theta))` and
/// `C_{N,theta,p} = theta 2^(2theta-1) Gamma((p theta+p+N-2)/2) / (pi^(N/2) Gamma(1-theta))`.
pub fn normalization_constant(kind: Normalization, dim: usize, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if dim == 0 {
        return Err(invalid("N", "dimension must be at least 1"));
    }
    let n = dim as f64;
    let denom = math::powf(PI, n / 2.0) * math::gamma(1.0 - theta);
    match kind {
        Normalization::Linear => {
            Ok(theta * math::powf(2.0, 2.0 * theta) * math::gamma((n + 2.0 * theta) / 2.0) / denom)
        }
        Normalization::PLaplace { p } => {
            if !(p.is_finite() && p > 1.0) {
                return Err(invalid("p", alloc::format!("must be > 1, got {p}")));
            }
            Ok(theta
                * math::powf(2.0, 2.0 * theta - 1.0)
                * math::gamma((p * theta + p + n - 2.0) / 2.0)
                / denom)
        }
    }
}

/// Result of [`cn_integral_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnIntegralCheck {
    pub formula_value: f64,
    pub quadrature_value: f64,
    /// Relative change of the integral between two refinement levels.
    pub refinement_gap: f64,
    pub converged: bool,
}

impl CnIntegralCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.formula_value - self.quadrature_value).abs() / self.formula_value.abs()
    }
}

/// Compares `C_{1,theta}` with `1 / int_R (1 - cos x) / |x|^(1+2theta) dx` evaluated by quadrature.
pub fn cn_integral_check(theta: f64) -> Result<CnIntegralCheck> {
    check_theta(theta)?;
    let formula_value = normalization_constant(Normalization::Linear, 1, theta)?;
    let fine = cos_integral(theta, 2000, 24);
    let coarse = cos_integral(theta, 1000, 16);
    let refinement_gap = (fine - coarse).abs() / fine.abs();
    Ok(CnIntegralCheck {
        formula_value,
        quadrature_value: 1.0 / fine,
        refinement_gap,
        converged: refinement_gap <= 1e-9,
    })
}

/// `int_R (1 - cos x) |x|^(-1-2theta) dx`, split as series near 0, log-axis panels
/// on [delta, 1], per-period panels up to `2 pi periods`, asymptotic tail beyond.
fn cos_integral(theta: f64, periods: usize, order: usize) -> f64 {
    let a = 1.0 + 2.0 * theta;
    let delta = 1e-3;
    // (1 - cos x) = x^2/2 - x^4/24 + x^6/720 - ...
    let head = math::powf(delta, 2.0 - 2.0 * theta) / (2.0 * (2.0 - 2.0 * theta))
        - math::powf(delta, 4.0 - 2.0 * theta) / (24.0 * (4.0 - 2.0 * theta))
        + math::powf(delta, 6.0 - 2.0 * theta) / (720.0 * (6.0 - 2.0 * theta));

    let f = |x: f64| (1.0 - math::cos(x)) * math::powf(x, -a);
    // 1 - cos x loses digits for small x; use the half-angle form.
    let f_small = |x: f64| {
        let s = libm::sin(0.5 * x);
        2.0 * s * s * math::powf(x, -a)
    };
    let near = math::integrate(
        |s| {
            let x = math::exp(s);
            f_small(x) * x
        },
        math::ln(delta),
        0.0,
        12,
        order,
    );
    let two_pi = 2.0 * PI;
    let mut mid = math::integrate(f_small, 1.0, two_pi, 4, order);
    for k in 1..periods {
        let lo = two_pi * k as f64;
        mid += math::integrate(f, lo, lo + two_pi, 2, order);
    }
    let l = two_pi * periods as f64;
    // int_L^inf x^-a dx - int_L^inf cos(x) x^-a dx with sin L = 0, cos L = 1.
    let tail = math::powf(l, 1.0 - a) / (a - 1.0)
        - (a * math::powf(l, -a - 1.0) - a * (a + 1.0) * (a + 2.0) * math::powf(l, -a - 3.0));
    2.0 * (head + near + mid + tail)
}

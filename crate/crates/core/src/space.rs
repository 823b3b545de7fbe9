//! Finite measure spaces split into the interior set Omega and its exterior.
//!
//! Two constructions are provided: weighted graphs ([`graph_space`]) and
//! midpoint-rule samples of boxes in R^N ([`sample_euclidean`]). In both cases
//! a point's measure is `mu[i]` and the kernel weights are pair weights that
//! already contain the measures, so sums over pairs need no extra factors.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::kernel::{normalization_constant, KernelMatrix, Normalization};
use crate::math;

/// Point positions, `dim` reals per point, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Coords {
    dim: usize,
    data: Vec<f64>,
}

impl Coords {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("coords", "dimension must be >= 1"));
        }
        if data.len() % dim != 0 {
            return Err(invalid("coords", "length is not a multiple of the dimension"));
        }
        crate::error::check_finite(&data)?;
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.point(i), self.point(j));
        math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpace {
    mu: Vec<f64>,
    omega: Vec<bool>,
    omega_index: Vec<usize>,
    position: Vec<Option<usize>>,
    coords: Option<Coords>,
    labels: Option<Vec<String>>,
}

impl DiscreteSpace {
    pub fn new(mu: Vec<f64>, omega: Vec<bool>) -> Result<Self> {
        check_len("omega mask", mu.len(), omega.len())?;
        if let Some(i) = mu.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::NonPositiveMeasure(i));
        }
        if !omega.iter().any(|&b| b) {
            return Err(Error::EmptyOmega);
        }
        let omega_index: Vec<usize> = (0..mu.len()).filter(|&i| omega[i]).collect();
        let mut position = alloc::vec![None; mu.len()];
        for (k, &i) in omega_index.iter().enumerate() {
            position[i] = Some(k);
        }
        Ok(Self {
            mu,
            omega,
            omega_index,
            position,
            coords: None,
            labels: None,
        })
    }

    pub fn with_coords(mut self, coords: Coords) -> Result<Self> {
        check_len("coords", self.mu.len(), coords.len())?;
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len("labels", self.mu.len(), labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_points(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn omega_mask(&self) -> &[bool] {
        &self.omega
    }

    pub fn is_omega(&self, i: usize) -> bool {
        self.omega[i]
    }

    /// Indices of Omega in ascending order; this is the layout of restricted states.
    pub fn omega_indices(&self) -> &[usize] {
        &self.omega_index
    }

    /// Position of point `i` in a restricted state, if `i` lies in Omega.
    pub fn omega_position(&self, i: usize) -> Option<usize> {
        self.position[i]
    }

    pub fn exterior_indices(&self) -> Vec<usize> {
        (0..self.n_points()).filter(|&i| !self.omega[i]).collect()
    }

    pub fn n_omega(&self) -> usize {
        self.omega_index.len()
    }

    pub fn coords(&self) -> Option<&Coords> {
        self.coords.as_ref()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// `sum_{i in Omega} mu_i`.
    pub fn omega_measure(&self) -> f64 {
        self.omega_index.iter().map(|&i| self.mu[i]).sum()
    }

    /// Restriction of a full state to Omega.
    pub fn restrict(&self, u_hat: &[f64]) -> Vec<f64> {
        self.omega_index.iter().map(|&i| u_hat[i]).collect()
    }

    /// Full state equal to `u` on Omega and `fill` elsewhere.
    pub fn extend_with(&self, u: &[f64], fill: f64) -> Vec<f64> {
        let mut out = alloc::vec![fill; self.n_points()];
        for (k, &i) in self.omega_index.iter().enumerate() {
            out[i] = u[k];
        }
        out
    }

    /// Measures of the Omega points, in restricted layout.
    pub fn omega_mu(&self) -> Vec<f64> {
        self.omega_index.iter().map(|&i| self.mu[i]).collect()
    }
}

/// Outcome of [`check_thickness`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceBuildReport {
    pub n_omega: usize,
    pub n_exterior: usize,
    pub reachable: bool,
    pub unreachable_indices: Vec<usize>,
}

/// Breadth-first reachability from Omega along edges with positive weight.
pub fn check_thickness(space: &DiscreteSpace, kernel: &KernelMatrix) -> SpaceBuildReport {
    let n = space.n_points();
    let mut seen = alloc::vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &i in space.omega_indices() {
        seen[i] = true;
        queue.push_back(i);
    }
    while let Some(i) = queue.pop_front() {
        if i >= kernel.n_points() {
            continue;
        }
        for &(j, _) in kernel.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    let unreachable_indices: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
    SpaceBuildReport {
        n_omega: space.n_omega(),
        n_exterior: n - space.n_omega(),
        reachable: unreachable_indices.is_empty(),
        unreachable_indices,
    }
}

/// Space and kernel of a weighted graph: `mu = m`, `w_ij = b(i, j)`.
pub fn graph_space(
    vertex_weights: Vec<f64>,
    omega: &[usize],
    edges: impl IntoIterator<Item = (usize, usize, f64)>,
) -> Result<(DiscreteSpace, KernelMatrix)> {
    let n = vertex_weights.len();
    let mut mask = alloc::vec![false; n];
    for &i in omega {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        mask[i] = true;
    }
    let space = DiscreteSpace::new(vertex_weights, mask)?;
    let kernel = KernelMatrix::from_pairs(n, edges)?;
    Ok((space, kernel))
}

/// Axis-aligned box `[lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_len("box bounds", lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(invalid("box", "dimension must be >= 1"));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(invalid("box", alloc::format!("bad interval [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    fn contains_box(&self, other: &BoxDomain) -> bool {
        self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }
}

/// Which pairs interact in a Euclidean sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteractionRule {
    /// All pairs of the sampled domain.
    Full,
    /// Pairs with at least one point in Omega.
    Coupled,
    /// Pairs at distance at most `r`.
    RangeLimited(f64),
}

/// Midpoint-rule sample of a box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanSample {
    pub omega: BoxDomain,
    pub domain: BoxDomain,
    /// Cells per axis of the outer box.
    pub grid: Vec<usize>,
    pub theta: f64,
    pub p: f64,
    pub rule: InteractionRule,
}

/// Samples the outer box on a uniform grid of cell centers and assembles
/// `w_ij = C_{N,theta,p} |x_i - x_j|^-(N + theta p) mu_i mu_j` on the pairs the rule selects.
pub fn sample_euclidean(params: &EuclideanSample) -> Result<(DiscreteSpace, KernelMatrix)> {
    let dim = params.domain.dim();
    check_len("omega box dimension", dim, params.omega.dim())?;
    check_len("grid", dim, params.grid.len())?;
    if !params.domain.contains_box(&params.omega) {
        return Err(invalid("omega", "omega box must lie inside the sampled domain"));
    }
    if params.grid.iter().any(|&g| g < 2) {
        return Err(invalid("grid", "need at least 2 cells per axis"));
    }
    let p = params.p;
    if !(p.is_finite() && p > 1.0) {
        return Err(invalid("p", alloc::format!("must be > 1, got {p}")));
    }
    let c = normalization_constant(Normalization::PLaplace { p }, dim, params.theta)?;
    let h: Vec<f64> = (0..dim)
        .map(|k| (params.domain.hi[k] - params.domain.lo[k]) / params.grid[k] as f64)
        .collect();
    if let InteractionRule::RangeLimited(r) = params.rule {
        let spacing = h.iter().fold(0.0_f64, |m, v| m.max(*v));
        if !(r > spacing) {
            return Err(invalid(
                "range",
                alloc::format!("range {r} must exceed the grid spacing {spacing}"),
            ));
        }
    }

    let n: usize = params.grid.iter().product();
    let cell = h.iter().product::<f64>();
    let mut data = Vec::with_capacity(n * dim);
    let mut idx = alloc::vec![0usize; dim];
    for _ in 0..n {
        for k in 0..dim {
            data.push(params.domain.lo[k] + (idx[k] as f64 + 0.5) * h[k]);
        }
        // first axis varies slowest
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < params.grid[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    let coords = Coords::new(dim, data)?;
    let omega: Vec<bool> = (0..n)
        .map(|i| params.omega.contains_point(coords.point(i)))
        .collect();
    let mu = alloc::vec![cell; n];
    let space = DiscreteSpace::new(mu, omega)?.with_coords(coords)?;

    let exponent = dim as f64 + params.theta * p;
    let coords = space.coords().expect("coords set above");
    let mut triples = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = coords.distance(i, j);
            let keep = match params.rule {
                InteractionRule::Full => true,
                InteractionRule::Coupled => space.is_omega(i) || space.is_omega(j),
                InteractionRule::RangeLimited(r) => d <= r,
            };
            if keep {
                let w = c * math::powf(d, -exponent) * space.mu()[i] * space.mu()[j];
                triples.push((i, j, w));
            }
        }
    }
    let kernel = KernelMatrix::from_pairs(n, triples)?;
    Ok((space, kernel))
}

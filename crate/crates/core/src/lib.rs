//! Nonlocal p-Laplacian energies on discrete measure spaces, their implicit
//! gradient flows, fractional powers of the linear case, and numerical checks
//! of the semigroup properties (Markov, domination, decay).
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod energy;
pub mod error;
pub mod exponents;
pub mod flow;
pub mod kernel;
pub mod linalg;
pub mod math;
pub mod properties;
pub mod solver;
pub mod space;
pub mod spectral;

pub use energy::{energy, gradient, pv_apply, EnergySpec, PointPotential, Potential};
pub use error::{Error, Result};
pub use kernel::{
    cn_integral_check, normalization_constant, CnIntegralCheck, KernelMatrix, Normalization, PhiSpec,
};
pub use space::{
    check_thickness, graph_space, sample_euclidean, BoxDomain, Coords, DiscreteSpace, EuclideanSample,
    InteractionRule, SpaceBuildReport,
};
pub use solver::{
    elliptic_extension, linear_extension_explicit, minimize, residual, solve_elliptic, Anchor, Problem, Residual,
    SolveOptions, SolveReport,
};
pub use flow::{default_tau, proximal_step, run_flow, two_point_exact, FlowConfig, Forcing, Trajectory};
pub use spectral::{
    assemble_p2_operator, balakrishnan_power, frac_heat_kernel_rn, spectral_power, subordinated_form,
    subordinated_kernel, LinearOperatorRep, QuadratureConfig, SubordinatedKernel,
};
pub use exponents::{c_rp, exponents, int_p_check, HolderExponents, IntPCheck, Regime};
pub use properties::{
    beurling_deny_gaps, comp_energy_gap, decay_report, domination_functional_gap, domination_trajectory_suite,
    lemma_f_gap, lemma_g_gap, markov_suite, normal_contraction_gap, CheckReport, ContractionFn, DecayReport,
    RobinParams,
};

//! JSON scenario documents (`"schema": 1`).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use nonlocal_core::{
    check_thickness, sample_euclidean, BoxDomain, DiscreteSpace, EnergySpec, EuclideanSample, InteractionRule,
    KernelMatrix, PhiSpec, Potential, QuadratureConfig, SolveOptions, SpaceBuildReport,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::graph_io::load_graph_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Solve,
    Extend,
    Flow,
    Spectral,
    Exponents,
    Check,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceSource {
    /// Edge-list file, relative to the scenario file.
    Graph(String),
    Euclidean(EuclideanSpec),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EuclideanSpec {
    pub omega_lo: Vec<f64>,
    pub omega_hi: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub grid: Vec<usize>,
    #[serde(default = "default_rule")]
    pub rule: RuleSpec,
}

fn default_rule() -> RuleSpec {
    RuleSpec::Coupled
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum RuleSpec {
    Full,
    Coupled,
    Range(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSpec {
    Neumann,
    /// Per-point `kappa`, or `kappa_exterior` on every exterior point.
    Robin {
        #[serde(default)]
        kappa: Option<Vec<f64>>,
        #[serde(default)]
        kappa_exterior: Option<f64>,
        q: f64,
    },
    /// Explicit mask, default: every exterior point.
    Dirichlet {
        #[serde(default)]
        mask: Option<Vec<bool>>,
    },
}

/// A number, or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Real {
    Number(f64),
    Named(NamedReal),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum NamedReal {
    #[serde(rename = "inf")]
    Inf,
}

impl Real {
    pub fn value(self) -> f64 {
        match self {
            Real::Number(x) => x,
            Real::Named(NamedReal::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InitialData {
    Values(Vec<f64>),
    Rule(InitialRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialRule {
    /// Uniform in `[lo, hi]`, drawn from the scenario seed.
    Random([f64; 2]),
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_sweeps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    #[serde(default)]
    pub panels: Option<usize>,
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    MarkovSuite {
        #[serde(default = "default_trials")]
        trials: usize,
    },
    Domination {
        #[serde(default = "one")]
        kappa_exterior: f64,
        #[serde(default = "two")]
        robin_q: f64,
    },
    Decay,
    /// Markov suite, domination chain and decay diagnostics on one space.
    TrajectorySuite {
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default = "one")]
        kappa_exterior: f64,
        #[serde(default = "two")]
        robin_q: f64,
    },
    EnergyInequalities {
        #[serde(default = "hundred")]
        n_specs: usize,
        #[serde(default = "hundred")]
        n_states: usize,
    },
    ScalarLemmas {
        #[serde(default = "default_samples")]
        samples: usize,
    },
}

fn default_trials() -> usize {
    4
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn hundred() -> usize {
    100
}
fn default_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub task: Task,
    #[serde(default)]
    pub space: Option<SpaceSource>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default, rename = "N")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub q: Option<Real>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub nu: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    #[serde(default)]
    pub quadrature: Option<QuadSpec>,
    /// Per Omega point.
    #[serde(default)]
    pub forcing: Option<Vec<f64>>,
    /// Restricted state for `extend`.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub u0: Option<InitialData>,
    #[serde(default)]
    pub v0: Option<InitialData>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub dump_states: bool,
    #[serde(default)]
    pub check: Option<CheckSpec>,
    /// Output directory, relative to the scenario file; `--out` overrides it.
    #[serde(default)]
    pub out: Option<String>,
}

/// Scenario plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub base: PathBuf,
    pub name: String,
}

pub fn parse_scenario(text: &str, base: &Path, fallback_name: &str) -> Result<LoadedScenario> {
    let scenario: Scenario = serde_json::from_str(text).context("scenario does not match schema 1")?;
    if scenario.schema != 1 {
        bail!("field `schema`: unsupported version {}, expected 1", scenario.schema);
    }
    let name = scenario.name.clone().unwrap_or_else(|| fallback_name.to_string());
    Ok(LoadedScenario {
        scenario,
        base: base.to_path_buf(),
        name,
    })
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_scenario(&text, base, stem).with_context(|| format!("in {}", path.display()))
}

fn need<T: Copy>(v: Option<T>, field: &str) -> Result<T> {
    v.with_context(|| format!("field `{field}` is required for this task"))
}

pub struct Built {
    pub space: Arc<DiscreteSpace>,
    pub kernel: Arc<KernelMatrix>,
    pub thickness: SpaceBuildReport,
}

impl LoadedScenario {
    pub fn p(&self) -> Result<f64> {
        need(self.scenario.p, "p")
    }

    pub fn seed(&self) -> u64 {
        self.scenario.seed.unwrap_or(0)
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut r = ChaCha8Rng::seed_from_u64(self.seed());
        r.set_stream(stream);
        r
    }

    pub fn solve_options(&self) -> Result<SolveOptions> {
        let mut o = SolveOptions::default();
        if let Some(s) = self.scenario.solver {
            if let Some(t) = s.tol {
                o.tol = t;
            }
            if let Some(m) = s.max_sweeps {
                o.max_sweeps = m;
            }
        }
        o.validate().context("field `solver`")?;
        Ok(o)
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        let mut q = QuadratureConfig::default();
        if let Some(s) = self.scenario.quadrature {
            q.panels = s.panels.unwrap_or(q.panels);
            q.order = s.order.unwrap_or(q.order);
            q.tol = s.tol.unwrap_or(q.tol);
        }
        q
    }

    pub fn build_space(&self) -> Result<Built> {
        let src = self.scenario.space.as_ref().context("field `space` is required for this task")?;
        let (space, kernel) = match src {
            SpaceSource::Graph(file) => load_graph_file(&self.base.join(file))?,
            SpaceSource::Euclidean(e) => {
                let params = EuclideanSample {
                    omega: BoxDomain::new(e.omega_lo.clone(), e.omega_hi.clone()).context("field `space.euclidean`")?,
                    domain: BoxDomain::new(e.lo.clone(), e.hi.clone()).context("field `space.euclidean`")?,
                    grid: e.grid.clone(),
                    theta: need(self.scenario.theta, "theta")?,
                    p: self.p()?,
                    rule: match e.rule {
                        RuleSpec::Full => InteractionRule::Full,
                        RuleSpec::Coupled => InteractionRule::Coupled,
                        RuleSpec::Range(r) => InteractionRule::RangeLimited(r),
                    },
                };
                sample_euclidean(&params).context("field `space.euclidean`")?
            }
        };
        let thickness = check_thickness(&space, &kernel);
        if !thickness.reachable {
            log::warn!("{}: points {:?} are not reachable from omega", self.name, thickness.unreachable_indices);
        }
        Ok(Built {
            space: Arc::new(space),
            kernel: Arc::new(kernel),
            thickness,
        })
    }

    pub fn nu(&self, n: usize) -> Result<Vec<f64>> {
        match &self.scenario.nu {
            Some(v) if v.len() != n => bail!("field `nu`: expected {n} entries, got {}", v.len()),
            Some(v) => Ok(v.clone()),
            None => Ok(vec![1.0; n]),
        }
    }

    pub fn potential(&self, space: &DiscreteSpace) -> Result<Potential> {
        let n = space.n_points();
        Ok(match self.scenario.potential.as_ref().unwrap_or(&PotentialSpec::Neumann) {
            PotentialSpec::Neumann => Potential::Neumann,
            PotentialSpec::Robin {
                kappa,
                kappa_exterior,
                q,
            } => {
                let kappa = match (kappa, kappa_exterior) {
                    (Some(k), None) if k.len() == n => k.clone(),
                    (Some(k), None) => bail!("field `potential.kappa`: expected {n} entries, got {}", k.len()),
                    (None, Some(c)) => exterior_vector(space, *c),
                    _ => bail!("field `potential`: give exactly one of `kappa` and `kappa_exterior`"),
                };
                Potential::PowerRobin { kappa, q: *q }
            }
            PotentialSpec::Dirichlet { mask } => Potential::Dirichlet {
                mask: match mask {
                    Some(m) if m.len() == n => m.clone(),
                    Some(m) => bail!("field `potential.mask`: expected {n} entries, got {}", m.len()),
                    None => (0..n).map(|i| !space.is_omega(i)).collect(),
                },
            },
        })
    }

    pub fn energy_spec(&self, b: &Built) -> Result<EnergySpec> {
        let phi = PhiSpec::new(self.p()?).context("field `p`")?;
        let potential = self.potential(&b.space)?;
        let nu = self.nu(b.space.n_points())?;
        EnergySpec::new(b.space.clone(), b.kernel.clone(), phi, potential, nu).context("building the energy")
    }

    /// Resolves initial data on Omega; random draws use `stream`.
    pub fn initial(&self, data: Option<&InitialData>, field: &str, n: usize, stream: u64) -> Result<Vec<f64>> {
        match data.with_context(|| format!("field `{field}` is required for this task"))? {
            InitialData::Values(v) if v.len() == n => Ok(v.clone()),
            InitialData::Values(v) => bail!("field `{field}`: expected {n} entries (one per omega point), got {}", v.len()),
            InitialData::Rule(InitialRule::Constant(c)) => Ok(vec![*c; n]),
            InitialData::Rule(InitialRule::Random([lo, hi])) => {
                if !(lo < hi) {
                    bail!("field `{field}.random`: need lo < hi");
                }
                let mut rng = self.rng(stream);
                Ok((0..n).map(|_| rng.gen_range(*lo..*hi)).collect())
            }
        }
    }
}

pub fn exterior_vector(space: &DiscreteSpace, c: f64) -> Vec<f64> {
    (0..space.n_points()).map(|i| if space.is_omega(i) { 0.0 } else { c }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_exponents_example() {
        let s = parse_scenario(r#"{"schema":1,"task":"exponents","N":2,"theta":0.5,"p":4,"q":2}"#, Path::new("."), "x")
            .unwrap();
        assert_eq!(s.scenario.task, Task::Exponents);
        assert_eq!(s.scenario.q.unwrap().value(), 2.0);
        let inf = parse_scenario(r#"{"schema":1,"task":"exponents","q":"inf"}"#, Path::new("."), "x").unwrap();
        assert_eq!(inf.scenario.q.unwrap().value(), f64::INFINITY);
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        let e = parse_scenario(r#"{"schema":1,"task":"flow","tua":0.1}"#, Path::new("."), "x").unwrap_err();
        assert!(format!("{e:#}").contains("tua"), "{e:#}");
        assert!(format!("{e:#}").contains("line 1"), "{e:#}");
        assert!(parse_scenario(r#"{"schema":2,"task":"flow"}"#, Path::new("."), "x").is_err());
        assert!(parse_scenario(r#"{"schema":1,"task":"dance"}"#, Path::new("."), "x").is_err());
    }

    #[test]
    fn parses_nested_specs() {
        let text = r#"{
            "schema": 1, "task": "check", "p": 3, "theta": 0.5,
            "space": {"euclidean": {"omega_lo": [0], "omega_hi": [1], "lo": [-0.25], "hi": [1.25], "grid": [12], "rule": {"range": 0.5}}},
            "potential": {"kind": "robin", "kappa_exterior": 2.0, "q": 2},
            "u0": {"random": [-1, 1]}, "v0": [1, 2],
            "check": {"kind": "trajectory_suite", "trials": 2}
        }"#;
        let s = parse_scenario(text, Path::new("."), "x").unwrap().scenario;
        assert!(matches!(s.space, Some(SpaceSource::Euclidean(EuclideanSpec { rule: RuleSpec::Range(_), .. }))));
        assert!(matches!(s.u0, Some(InitialData::Rule(InitialRule::Random(_)))));
        assert!(matches!(s.v0, Some(InitialData::Values(_))));
        assert!(matches!(s.check, Some(CheckSpec::TrajectorySuite { trials: 2, .. })));
    }
}

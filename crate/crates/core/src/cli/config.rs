//! JSON run configuration.
//!
//! ```json
//! {
//!   "system": "paper_example",
//!   "steps": 100,
//!   "tol": 1e-10,
//!   "directions": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
//!   "x0": [1, 1, 0],
//!   "noise": { "kind": "harmonic", "fill": 0.9, "kernel_amplitude": 1.0 },
//!   "seed": 7,
//!   "output": "run.csv"
//! }
//! ```
//!
//! `system` is either a builtin name (`"paper_example"`, `"scalar"`), a
//! random system `{"random": {"n": 3, "m": 3, "p": 2}}` drawn from `seed`,
//! or an inline system with row-major matrices. Time-varying families are a
//! single matrix (constant) or `{"steps": [...], "repeat_last": true}`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::model::{
    paper_example_system, random_system, scalar_system, DescriptorSystem, Family, HarmonicNoise,
    RandomSystemSpec, Trajectory,
};

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_FILL: f64 = 0.9;
pub const DEFAULT_KERNEL_AMPLITUDE: f64 = 1.0;

pub type MatrixRows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySpec<T> {
    Steps {
        steps: Vec<T>,
        #[serde(default)]
        repeat_last: bool,
    },
    Constant(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSystem {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "F")]
    pub f: FamilySpec<MatrixRows>,
    #[serde(rename = "C")]
    pub c: FamilySpec<MatrixRows>,
    #[serde(rename = "H")]
    pub h: FamilySpec<MatrixRows>,
    #[serde(rename = "S")]
    pub s: MatrixRows,
    #[serde(rename = "S_seq")]
    pub s_seq: FamilySpec<MatrixRows>,
    #[serde(rename = "R_seq")]
    pub r_seq: FamilySpec<MatrixRows>,
    #[serde(default)]
    pub known_input: Option<FamilySpec<Vec<f64>>>,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSystemConfig {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(default)]
    pub unit_weights: bool,
    #[serde(default = "yes")]
    pub regular: bool,
    /// Bound on `‖F_{k+1}⁺ C_k‖₂`; `null` leaves `C_k` as drawn.
    #[serde(default = "default_contraction")]
    pub contraction: Option<f64>,
}

fn default_contraction() -> Option<f64> {
    Some(0.95)
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Builtin(String),
    Random { random: RandomSystemConfig },
    Inline(Box<InlineSystem>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Harmonic,
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    /// Explicit disturbance amplitude; with `amplitude_g` overrides `fill`.
    #[serde(default)]
    pub amplitude_f: Option<f64>,
    #[serde(default)]
    pub amplitude_g: Option<f64>,
    #[serde(default)]
    pub kernel_amplitude: Option<f64>,
    /// Fraction of the remaining uncertainty budget given to the noise.
    #[serde(default)]
    pub fill: Option<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::Harmonic,
            amplitude_f: None,
            amplitude_g: None,
            kernel_amplitude: None,
            fill: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub directions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A validated configuration with its system built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub system: DescriptorSystem,
    pub steps: usize,
    /// Relative rank tolerance, `0` for the default.
    pub tol: f64,
    pub directions: Vec<DVector<f64>>,
    pub x0: DVector<f64>,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text, path)
}

fn matrix(rows: &MatrixRows, what: &str) -> Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(format!("{what}: matrix must be nonempty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(format!(
            "{what}: row {i} has {} entries, expected {ncols}",
            rows[i].len()
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_family(spec: &FamilySpec<MatrixRows>, what: &str) -> Result<Family<DMatrix<f64>>, String> {
    Ok(match spec {
        FamilySpec::Constant(rows) => Family::Constant(matrix(rows, what)?),
        FamilySpec::Steps { steps, repeat_last } => {
            if steps.is_empty() {
                return Err(format!("{what}: \"steps\" must be nonempty"));
            }
            let items = steps
                .iter()
                .enumerate()
                .map(|(k, rows)| matrix(rows, &format!("{what}.steps[{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            Family::sequence(items, *repeat_last)
        }
    })
}

fn vector_family(spec: &FamilySpec<Vec<f64>>) -> Family<DVector<f64>> {
    match spec {
        FamilySpec::Constant(v) => Family::Constant(DVector::from_vec(v.clone())),
        FamilySpec::Steps { steps, repeat_last } => Family::sequence(
            steps.iter().map(|v| DVector::from_vec(v.clone())).collect(),
            *repeat_last,
        ),
    }
}

fn inline_system(spec: &InlineSystem) -> Result<DescriptorSystem, CliError> {
    let err = |message: String| CliError::Invalid { message };
    let mut sys = DescriptorSystem::new(
        spec.n,
        spec.m,
        spec.p,
        matrix_family(&spec.f, "F").map_err(err)?,
        matrix_family(&spec.c, "C").map_err(err)?,
        matrix_family(&spec.h, "H").map_err(err)?,
        matrix(&spec.s, "S").map_err(err)?,
        matrix_family(&spec.s_seq, "S_seq").map_err(err)?,
        matrix_family(&spec.r_seq, "R_seq").map_err(err)?,
    )?;
    if let Some(input) = &spec.known_input {
        sys = sys.with_known_input(vector_family(input))?;
    }
    if let Some(prior) = &spec.prior {
        sys = sys.with_prior(DVector::from_vec(prior.clone()))?;
    }
    Ok(sys)
}

impl RunConfig {
    pub fn resolve(&self, overrides: &Overrides) -> Result<Resolved, CliError> {
        let invalid = |message: String| CliError::Invalid { message };
        let steps = overrides.steps.or(self.steps).unwrap_or(DEFAULT_STEPS);
        let tol = overrides.tol.or(self.tol);
        if let Some(t) = tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid(format!("tol must be positive and finite, got {t}")));
            }
        }
        let seed = overrides.seed.or(self.seed).unwrap_or(0);

        let (name, system) = match &self.system {
            SystemSpec::Builtin(name) => match name.as_str() {
                "paper_example" => (name.clone(), paper_example_system()),
                "scalar" => (name.clone(), scalar_system()),
                other => {
                    return Err(invalid(format!(
                        "unknown builtin system \"{other}\" (expected \"paper_example\" or \"scalar\")"
                    )))
                }
            },
            SystemSpec::Random { random } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sys = random_system(
                    RandomSystemSpec {
                        n: random.n,
                        m: random.m,
                        p: random.p,
                        horizon: steps,
                        unit_weights: random.unit_weights,
                        regular: random.regular,
                        contraction: random.contraction,
                    },
                    &mut rng,
                );
                ("random".to_string(), sys)
            }
            SystemSpec::Inline(spec) => ("inline".to_string(), inline_system(spec)?),
        };
        system.validate(steps)?;
        let n = system.n();

        let directions = match &self.directions {
            None => (0..n).map(|i| DVector::from_fn(n, |j, _| f64::from(i == j))).collect(),
            Some(ds) => {
                if ds.is_empty() {
                    return Err(invalid("directions must be nonempty when given".into()));
                }
                ds.iter()
                    .enumerate()
                    .map(|(i, d)| {
                        if d.len() != n {
                            Err(invalid(format!("directions[{i}] has length {}, expected {n}", d.len())))
                        } else if d.iter().all(|&v| v == 0.0) {
                            Err(invalid(format!("directions[{i}] is the zero vector")))
                        } else {
                            Ok(DVector::from_vec(d.clone()))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };

        let x0 = match &self.x0 {
            Some(v) if v.len() != n => return Err(invalid(format!("x0 has length {}, expected {n}", v.len()))),
            Some(v) => DVector::from_vec(v.clone()),
            None if name == "paper_example" => DVector::from_vec(vec![1.0, 1.0, 0.0]),
            None => default_x0(&system)?,
        };

        if let Some(fill) = self.noise.fill {
            if !(0.0..=1.0).contains(&fill) {
                return Err(invalid(format!("noise.fill must lie in [0, 1], got {fill}")));
            }
        }

        Ok(Resolved {
            name,
            system,
            steps,
            tol: tol.unwrap_or(0.0),
            directions,
            x0,
            noise: self.noise.clone(),
            seed,
            output: overrides.out.clone().or_else(|| self.output.clone()),
        })
    }
}

/// `(1, ..., 1)` scaled down so that the initial-condition term uses at most
/// a tenth of the budget.
fn default_x0(sys: &DescriptorSystem) -> Result<DVector<f64>, CliError> {
    let ones = DVector::from_element(sys.n(), 1.0);
    let q = sys.f(0)? * &ones;
    let energy = sys.s().quad_form(&q);
    Ok(if energy > 0.1 { ones * (0.1 / energy).sqrt() } else { ones })
}

impl Resolved {
    pub fn output_path(&self) -> Result<&Path, CliError> {
        self.output.as_deref().ok_or_else(|| CliError::Invalid {
            message: "no output path: pass --out or set \"output\" in the config".into(),
        })
    }

    /// Simulates the configured plant under the configured noise.
    pub fn simulate(&self) -> Result<(Trajectory, NoiseSummary), CliError> {
        let sys = &self.system;
        let fill = self.noise.fill.unwrap_or(DEFAULT_FILL);
        match self.noise.kind {
            NoiseKind::Zero => {
                let t = HarmonicNoise::zero().simulate(sys, self.steps, &self.x0)?;
                Ok((t, NoiseSummary::new("zero", 0.0, 0.0, 0.0)))
            }
            NoiseKind::Harmonic => {
                let kernel = self.noise.kernel_amplitude.unwrap_or(DEFAULT_KERNEL_AMPLITUDE);
                let noise = match (self.noise.amplitude_f, self.noise.amplitude_g) {
                    (None, None) => HarmonicNoise::fitted_to_budget(sys, self.steps, &self.x0, fill, kernel)?,
                    (a, b) => HarmonicNoise {
                        amp_f: a.unwrap_or(0.0),
                        amp_g: b.unwrap_or(0.0),
                        amp_kernel: kernel,
                    },
                };
                let t = noise.simulate(sys, self.steps, &self.x0)?;
                Ok((t, NoiseSummary::new("harmonic", noise.amp_f, noise.amp_g, noise.amp_kernel)))
            }
            NoiseKind::Random => self.simulate_random(fill),
        }
    }

    fn simulate_random(&self, fill: f64) -> Result<(Trajectory, NoiseSummary), CliError> {
        use rand::Rng;
        let sys = &self.system;
        let (n, m, p) = (sys.n(), sys.m(), sys.p());
        // the system draw uses `seed`; the noise stream is offset from it
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        let f: Vec<DVector<f64>> = (0..self.steps)
            .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let g: Vec<DVector<f64>> = (0..=self.steps)
            .map(|_| DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let kernel_amp = self.noise.kernel_amplitude.unwrap_or(DEFAULT_KERNEL_AMPLITUDE);
        let z: Vec<DVector<f64>> = (0..self.steps)
            .map(|_| DVector::from_fn(n, |_, _| kernel_amp * rng.random_range(-1.0..1.0)))
            .collect();

        let unit = crate::model::simulate(sys, self.steps, &self.x0, &|k| f[k].clone(), &|k| g[k].clone(), None)?;
        let base = sys.s().quad_form(&(&unit.q - sys.prior()));
        let energy = unit.constraint_value - base;
        if base >= 1.0 {
            return Err(crate::Error::InfeasibleData { step: 0, beta: 1.0 - base }.into());
        }
        let amp = if energy > 0.0 {
            (fill * (1.0 - base) / energy).sqrt()
        } else {
            0.0
        };
        let free = |k: usize| z[k].clone();
        let t = crate::model::simulate(
            sys,
            self.steps,
            &self.x0,
            &|k| &f[k] * amp,
            &|k| &g[k] * amp,
            Some(&free),
        )?;
        Ok((t, NoiseSummary::new("random", amp, amp, kernel_amp)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSummary {
    pub kind: String,
    pub amplitude_f: f64,
    pub amplitude_g: f64,
    pub kernel_amplitude: f64,
}

impl NoiseSummary {
    fn new(kind: &str, f: f64, g: f64, k: f64) -> Self {
        NoiseSummary {
            kind: kind.into(),
            amplitude_f: f,
            amplitude_g: g,
            kernel_amplitude: k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        parse_config(text, Path::new("test.json"))
    }

    #[test]
    fn builtin_defaults() {
        let cfg = parse(r#"{"system": "paper_example"}"#).unwrap();
        let r = cfg.resolve(&Overrides::default()).unwrap();
        assert_eq!(r.steps, DEFAULT_STEPS);
        assert_eq!(r.directions.len(), 3);
        assert_eq!(r.directions[2], DVector::from_vec(vec![0.0, 0.0, 1.0]));
        assert_eq!(r.x0, DVector::from_vec(vec![1.0, 1.0, 0.0]));
        assert_eq!(r.tol, 0.0);
    }

    #[test]
    fn inline_scalar_system() {
        let cfg = parse(
            r#"{
              "system": {"n": 1, "m": 1, "p": 1, "F": [[1]], "C": [[1]],
                         "H": {"steps": [[[1]], [[2]]], "repeat_last": true},
                         "S": [[1]], "S_seq": [[1]], "R_seq": [[1]]},
              "steps": 3
            }"#,
        )
        .unwrap();
        let r = cfg.resolve(&Overrides::default()).unwrap();
        assert_eq!(r.system.h(3).unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn overrides_win() {
        let cfg = parse(r#"{"system": "scalar", "steps": 4, "seed": 1, "output": "a.csv"}"#).unwrap();
        let r = cfg
            .resolve(&Overrides {
                steps: Some(9),
                tol: Some(1e-6),
                seed: Some(2),
                out: Some("b.csv".into()),
            })
            .unwrap();
        assert_eq!((r.steps, r.tol, r.seed), (9, 1e-6, 2));
        assert_eq!(r.output_path().unwrap(), Path::new("b.csv"));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse("{\n  \"system\": \"scalar\",\n  \"steps\": -3\n}").unwrap_err();
        assert_eq!(err.code(), "E_CONFIG");
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn semantic_errors() {
        let cfg = parse(r#"{"system": "paper_example", "directions": [[1, 0]]}"#).unwrap();
        let err = cfg.resolve(&Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("directions[0]"), "{err}");

        let cfg = parse(r#"{"system": "nope"}"#).unwrap();
        assert_eq!(cfg.resolve(&Overrides::default()).unwrap_err().code(), "E_CONFIG");

        let cfg = parse(r#"{"system": "scalar", "tol": 0}"#).unwrap();
        assert_eq!(cfg.resolve(&Overrides::default()).unwrap_err().code(), "E_CONFIG");

        let cfg = parse(
            r#"{"system": {"n": 2, "m": 1, "p": 1, "F": [[1, 0]], "C": [[1]],
                "H": [[1, 0]], "S": [[1]], "S_seq": [[1]], "R_seq": [[1]]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.resolve(&Overrides::default()).unwrap_err().code(), "E_DIM");
    }

    #[test]
    fn random_system_is_seeded() {
        let cfg = parse(r#"{"system": {"random": {"n": 3, "m": 3, "p": 2}}, "steps": 5, "seed": 11}"#).unwrap();
        let a = cfg.resolve(&Overrides::default()).unwrap();
        let b = cfg.resolve(&Overrides::default()).unwrap();
        assert_eq!(a.system.f(2).unwrap(), b.system.f(2).unwrap());
        let c = cfg
            .resolve(&Overrides {
                seed: Some(12),
                ..Overrides::default()
            })
            .unwrap();
        assert_ne!(a.system.f(2).unwrap(), c.system.f(2).unwrap());
    }

    #[test]
    fn zero_noise_leaves_only_initial_term() {
        let cfg = parse(r#"{"system": "paper_example", "noise": {"kind": "zero"}, "steps": 5}"#).unwrap();
        let r = cfg.resolve(&Overrides::default()).unwrap();
        let (t, _) = r.simulate().unwrap();
        assert!((t.constraint_value - (1.0 / 60.0 + 1.0 / 120.0)).abs() < 1e-15);
    }
}

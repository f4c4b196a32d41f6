//! TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use weylctl::functionals::TargetSpec;
use weylctl::gate_io::parse_gate;
use weylctl::geometry::{canonical_gate, NamedClass, WeylPoint};
use weylctl::krotov::KrotovConfig;
use weylctl::models::{
    build_rydberg_grid, build_rydberg_internal, build_spinspin, pi_phase_gate,
    spinspin_diagonal_cnot, tanh_envelope_guess, ControlProblem, RydbergParams, SpinSpinParams,
};
use weylctl::propagation::PropagationMethod;
use weylctl::types::{ControlField, GateMatrix, ShapeFunction, TimeGrid};
use weylctl::units;

use crate::error::CliError;
use crate::pulse::read_pulse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// 4-level effective spin-spin model, time in μs.
    Spinspin,
    /// Two Rydberg atoms, internal levels only, time in ns.
    Rydberg,
    /// Two Rydberg atoms with the relative coordinate on a grid, time in ns.
    RydbergGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpinSpinSet {
    #[default]
    Cnot,
    Bgate,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpinSpinSection {
    #[serde(default)]
    pub params: SpinSpinSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_mhz: Option<[[f64; 4]; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_mhz: Option<[[f64; 4]; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RydbergSection {
    pub rabi_red_mhz: f64,
    pub rabi_blue_mhz: f64,
    pub detuning_red_mhz: f64,
    pub detuning_blue_mhz: f64,
    /// `C3` in `E_h a0³`.
    pub c3_atomic: f64,
    pub separation_um: f64,
    pub grid_half_width_um: f64,
    pub trap_width_um: f64,
    pub trap_depth_mk: f64,
    pub mass_amu: f64,
    pub decay_rate_per_ns: f64,
    pub trap_on: bool,
    pub grid_points: usize,
}

impl Default for RydbergSection {
    fn default() -> Self {
        Self {
            rabi_red_mhz: 260.0,
            rabi_blue_mhz: 260.0,
            detuning_red_mhz: 600.0,
            detuning_blue_mhz: 0.0,
            c3_atomic: 3.284e6,
            separation_um: 4.0,
            grid_half_width_um: 0.3,
            trap_width_um: 0.75,
            trap_depth_mk: 4.5,
            mass_amu: 87.0,
            decay_rate_per_ns: 0.0,
            trap_on: true,
            grid_points: 64,
        }
    }
}

impl RydbergSection {
    pub fn params(&self) -> RydbergParams {
        RydbergParams {
            rabi_red_peak: units::mhz_to_rad_per_ns(self.rabi_red_mhz),
            rabi_blue_peak: units::mhz_to_rad_per_ns(self.rabi_blue_mhz),
            detuning_red: units::mhz_to_rad_per_ns(self.detuning_red_mhz),
            detuning_blue: units::mhz_to_rad_per_ns(self.detuning_blue_mhz),
            c3_atomic: self.c3_atomic,
            separation_um: self.separation_um,
            grid_half_width_um: self.grid_half_width_um,
            trap_width_um: self.trap_width_um,
            trap_depth_mk: self.trap_depth_mk,
            mass_amu: self.mass_amu,
            decay_rate: self.decay_rate_per_ns,
            trap_on: self.trap_on,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    #[default]
    Auto,
    Expm,
    Chebychev,
}

impl From<Propagator> for PropagationMethod {
    fn from(p: Propagator) -> Self {
        match p {
            Propagator::Auto => PropagationMethod::Auto,
            Propagator::Expm => PropagationMethod::Expm,
            Propagator::Chebychev => PropagationMethod::Chebychev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default)]
    pub propagator: Propagator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spinspin: Option<SpinSpinSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rydberg: Option<RydbergSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    /// Gate duration in the model's time unit (μs or ns).
    pub t_final: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    LocalInvariants,
    Direct,
}

/// Gates known by name besides the table classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinGate {
    /// `−(1/√2) diag(1−i, 1+i, 1+i, 1−i)`
    SpinspinDiagonal,
    /// `diag(−1, 1, 1, 1)`
    PiPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub functional: Functional,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weyl: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<BuiltinGate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    #[default]
    Sin2,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrotovSection {
    /// Defaults depend on the model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_a: Option<f64>,
    pub lambda_b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Defaults to `−λ_b/(N T)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Pick `A` with the trial ladder before optimizing.
    pub estimate_a: bool,
    pub max_iters: usize,
    pub j_t_tol: f64,
    pub delta_j_tol: f64,
    pub stall_iters: usize,
    pub shape: ShapeKind,
}

impl Default for KrotovSection {
    fn default() -> Self {
        let k = KrotovConfig::default();
        Self {
            lambda_a: None,
            lambda_b: 0.0,
            a: None,
            c: None,
            estimate_a: false,
            max_iters: k.max_iters,
            j_t_tol: k.j_t_tol,
            delta_j_tol: k.delta_j_tol,
            stall_iters: k.stall_iters,
            shape: ShapeKind::Sin2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GuessKind {
    #[default]
    Sin2,
    Constant,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuessSection {
    pub kind: GuessKind,
    /// Peak of the tanh envelope `(tanh ε + 1)/2` for `sin2` guesses.
    pub peak: f64,
    /// Raw control value for `constant` guesses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for GuessSection {
    fn default() -> Self {
        Self {
            kind: GuessKind::Sin2,
            peak: 0.5,
            value: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub time: TimeSection,
    pub target: TargetSection,
    #[serde(default)]
    pub krotov: KrotovSection,
    #[serde(default)]
    pub guess: GuessSection,
}

fn field_err(path: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: msg.into(),
    }
}

/// Model defaults for `λ_a` and `A`.
fn default_lambda_a(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Spinspin => 7.0e3,
        ModelKind::Rydberg | ModelKind::RydbergGrid => 0.5,
    }
}

fn default_a(kind: ModelKind, functional: Functional) -> f64 {
    match (functional, kind) {
        (Functional::Direct, _) => 0.0,
        (Functional::LocalInvariants, ModelKind::Spinspin) => 5.0,
        (Functional::LocalInvariants, _) => 20.0,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Reads a config file; relative file references are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(f) = p.as_mut() {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        };
        resolve(&mut cfg.target.gate_file);
        resolve(&mut cfg.guess.file);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn n_controls(&self) -> usize {
        match self.model.kind {
            ModelKind::Spinspin => 1,
            _ => 2,
        }
    }

    /// Fills model-dependent defaults so the echo reproduces the run exactly.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        let kind = cfg.model.kind;
        match kind {
            ModelKind::Spinspin => {
                let ss = cfg.model.spinspin.get_or_insert_with(Default::default);
                if ss.params != SpinSpinSet::Custom {
                    let p = match ss.params {
                        SpinSpinSet::Bgate => SpinSpinParams::bgate_placeholder(),
                        _ => SpinSpinParams::cnot(),
                    };
                    ss.drift_mhz.get_or_insert(p.drift_mhz);
                    ss.control_mhz.get_or_insert(p.control_mhz);
                }
            }
            _ => {
                cfg.model.rydberg.get_or_insert_with(Default::default);
            }
        }
        let k = &mut cfg.krotov;
        k.lambda_a.get_or_insert(default_lambda_a(kind));
        k.a.get_or_insert(default_a(kind, cfg.target.functional));
        if k.c.is_none() {
            let n = 4.0;
            k.c = Some(if k.lambda_b > 0.0 {
                -k.lambda_b / (n * cfg.time.t_final)
            } else {
                0.0
            });
        }
        cfg
    }

    /// Field-level checks that do not need the model.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.time.t_final > 0.0 && self.time.t_final.is_finite()) {
            return Err(field_err("time.t_final", "must be positive"));
        }
        if self.time.n_steps < 2 {
            return Err(field_err("time.n_steps", "must be at least 2"));
        }
        let choices = [
            self.target.class.is_some(),
            self.target.weyl.is_some(),
            self.target.gate.is_some(),
            self.target.gate_file.is_some(),
        ];
        if choices.iter().filter(|&&x| x).count() != 1 {
            return Err(field_err(
                "target",
                "set exactly one of class, weyl, gate, gate_file",
            ));
        }
        if let Some(name) = &self.target.class {
            if NamedClass::from_name(name).is_none() {
                let known: Vec<&str> = NamedClass::ALL.iter().map(|c| c.name()).collect();
                return Err(field_err(
                    "target.class",
                    format!("unknown class '{name}', expected one of {}", known.join(", ")),
                ));
            }
        }
        if let Some(w) = self.target.weyl {
            if w.iter().any(|x| !x.is_finite()) {
                return Err(field_err("target.weyl", "coordinates must be finite"));
            }
        }
        if let Some(f) = &self.target.gate_file {
            if !f.is_file() {
                return Err(field_err(
                    "target.gate_file",
                    format!("{} does not exist", f.display()),
                ));
            }
        }
        match self.model.kind {
            ModelKind::Spinspin => {
                if self.model.rydberg.is_some() {
                    return Err(field_err("model.rydberg", "not used by the spinspin model"));
                }
                if let Some(ss) = &self.model.spinspin {
                    if ss.params == SpinSpinSet::Custom
                        && (ss.drift_mhz.is_none() || ss.control_mhz.is_none())
                    {
                        return Err(field_err(
                            "model.spinspin",
                            "custom params need drift_mhz and control_mhz",
                        ));
                    }
                }
            }
            _ => {
                if self.model.spinspin.is_some() {
                    return Err(field_err("model.spinspin", "not used by Rydberg models"));
                }
            }
        }
        match self.guess.kind {
            GuessKind::Sin2 => {
                if !(0.0..=1.0).contains(&self.guess.peak) {
                    return Err(field_err("guess.peak", "must lie in [0, 1]"));
                }
            }
            GuessKind::Constant => {
                if !self.guess.value.is_some_and(f64::is_finite) {
                    return Err(field_err("guess.value", "constant guess needs a finite value"));
                }
            }
            GuessKind::File => match &self.guess.file {
                Some(f) if f.is_file() => {}
                Some(f) => {
                    return Err(field_err("guess.file", format!("{} does not exist", f.display())))
                }
                None => return Err(field_err("guess.file", "file guess needs a path")),
            },
        }
        self.krotov_config()?;
        Ok(())
    }

    pub fn krotov_config(&self) -> Result<KrotovConfig, CliError> {
        let r = self.resolved();
        let k = &r.krotov;
        let cfg = KrotovConfig {
            lambda_a: k.lambda_a.unwrap(),
            lambda_b: k.lambda_b,
            sigma_a: k.a.unwrap(),
            sigma_c: k.c.unwrap(),
            max_iters: k.max_iters,
            j_t_tol: k.j_t_tol,
            delta_j_tol: k.delta_j_tol,
            stall_iters: k.stall_iters,
            shape: match k.shape {
                ShapeKind::Sin2 => ShapeFunction::SinSquared,
                ShapeKind::Flat => ShapeFunction::Flat,
            },
            check_monotonicity: true,
        };
        cfg.validate(4, self.time.t_final)
            .map_err(|e| field_err("krotov", e.to_string()))?;
        if k.lambda_b > 0.0 && self.model.kind == ModelKind::Spinspin {
            return Err(field_err("krotov.lambda_b", "the spinspin model has no avoided subspace"));
        }
        Ok(cfg)
    }

    pub fn target_gate(&self) -> Result<GateMatrix, CliError> {
        let t = &self.target;
        if let Some(name) = &t.class {
            let class = NamedClass::from_name(name)
                .ok_or_else(|| field_err("target.class", format!("unknown class '{name}'")))?;
            return Ok(class.gate());
        }
        if let Some([cx, cy, cz]) = t.weyl {
            return Ok(canonical_gate(WeylPoint::new(cx, cy, cz)));
        }
        if let Some(g) = t.gate {
            return Ok(match g {
                BuiltinGate::SpinspinDiagonal => spinspin_diagonal_cnot(),
                BuiltinGate::PiPhase => pi_phase_gate(),
            });
        }
        let path = t.gate_file.as_ref().ok_or_else(|| field_err("target", "no target"))?;
        let text = fs::read_to_string(path)
            .map_err(|e| field_err("target.gate_file", format!("{}: {e}", path.display())))?;
        parse_gate(&text).map_err(|e| field_err("target.gate_file", e.to_string()))
    }

    pub fn target_spec(&self) -> Result<TargetSpec, CliError> {
        let gate = self.target_gate()?;
        if gate.dim() != 4 {
            return Err(field_err("target", "target gate must be 4x4"));
        }
        let spec = match self.target.functional {
            Functional::Direct => TargetSpec::direct(gate),
            Functional::LocalInvariants => TargetSpec::class(gate),
        };
        spec.map_err(|e| field_err("target", e.to_string()))
    }

    /// Builds the control problem including the guess fields.
    pub fn problem(&self) -> Result<ControlProblem, CliError> {
        self.validate()?;
        let r = self.resolved();
        let target = self.target_spec()?;
        let (t, n) = (self.time.t_final, self.time.n_steps);
        let problem = match r.model.kind {
            ModelKind::Spinspin => {
                let ss = r.model.spinspin.as_ref().unwrap();
                let params = match ss.params {
                    SpinSpinSet::Cnot => SpinSpinParams::cnot(),
                    SpinSpinSet::Bgate => SpinSpinParams::bgate_placeholder(),
                    SpinSpinSet::Custom => {
                        SpinSpinParams::custom(ss.drift_mhz.unwrap(), ss.control_mhz.unwrap())
                            .map_err(|e| field_err("model.spinspin", e.to_string()))?
                    }
                };
                build_spinspin(&params, t, n, target)
            }
            ModelKind::Rydberg => {
                let p = r.model.rydberg.as_ref().unwrap().params();
                build_rydberg_internal(&p, t, n, target)
            }
            ModelKind::RydbergGrid => {
                let sec = r.model.rydberg.as_ref().unwrap();
                let p = sec.params();
                let grid = p
                    .fourier_grid(sec.grid_points)
                    .map_err(|e| field_err("model.rydberg.grid_points", e.to_string()))?;
                build_rydberg_grid(&p, t, n, grid, target)
            }
        }
        .map_err(|e| field_err("model", e.to_string()))?
        .with_method(r.model.propagator.into());
        let guess = self.guess_fields(problem.grid)?;
        problem
            .with_guess(guess)
            .map_err(|e| field_err("guess", e.to_string()))
    }

    fn guess_fields(&self, grid: TimeGrid) -> Result<Vec<ControlField>, CliError> {
        let n = self.n_controls();
        match self.guess.kind {
            GuessKind::Sin2 => (0..n)
                .map(|_| {
                    tanh_envelope_guess(grid, self.guess.peak)
                        .map_err(|e| field_err("guess.peak", e.to_string()))
                })
                .collect(),
            GuessKind::Constant => Ok(vec![
                ControlField::constant(grid, self.guess.value.unwrap());
                n
            ]),
            GuessKind::File => {
                let path = self.guess.file.as_ref().unwrap();
                let fields = read_pulse(path, grid)
                    .map_err(|e| field_err("guess.file", e.to_string()))?;
                if fields.len() != n {
                    return Err(field_err(
                        "guess.file",
                        format!("{} fields for a model with {n} controls", fields.len()),
                    ));
                }
                Ok(fields)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPINSPIN: &str = r#"
[model]
kind = "spinspin"

[time]
t_final = 1.0
n_steps = 100

[target]
functional = "local_invariants"
class = "CNOT"
"#;

    #[test]
    fn minimal_config_builds() {
        let cfg = RunConfig::from_toml(SPINSPIN).unwrap();
        let p = cfg.problem().unwrap();
        assert_eq!(p.model.dim(), 4);
        let k = cfg.krotov_config().unwrap();
        assert_eq!(k.sigma_a, 5.0);
        assert_eq!(k.lambda_a, 7.0e3);
    }

    #[test]
    fn resolved_echo_round_trips() {
        let cfg = RunConfig::from_toml(SPINSPIN).unwrap().resolved();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.resolved(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = SPINSPIN.replace("class = \"CNOT\"", "class = \"XYZ\"");
        let err = RunConfig::from_toml(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("target.class"), "{err}");

        let bad = SPINSPIN.replace("n_steps = 100", "n_steps = 1");
        let err = RunConfig::from_toml(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("time.n_steps"));

        let bad = format!("{SPINSPIN}\n[krotov]\nlambda_a = -1.0\n");
        let err = RunConfig::from_toml(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("krotov"));

        let bad = SPINSPIN.replace("kind = \"spinspin\"", "kind = \"spinspin\"\nbogus = 1");
        let err = RunConfig::from_toml(&bad).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");

        let two = SPINSPIN.replace("class = \"CNOT\"", "class = \"CNOT\"\nweyl = [0.1, 0.0, 0.0]");
        assert!(RunConfig::from_toml(&two).unwrap().validate().is_err());
    }

    #[test]
    fn rydberg_defaults_follow_paper_values() {
        let text = r#"
[model]
kind = "rydberg"

[time]
t_final = 10.0
n_steps = 100

[target]
functional = "local_invariants"
gate = "pi_phase"

[krotov]
lambda_b = 2.0
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        let k = cfg.krotov_config().unwrap();
        assert_eq!(k.sigma_a, 20.0);
        assert!((k.sigma_c + 2.0 / 40.0).abs() < 1e-15);
        let p = cfg.problem().unwrap();
        assert_eq!(p.model.dim(), 16);
        assert_eq!(p.guess.len(), 2);
    }
}

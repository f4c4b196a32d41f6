//! Ready-to-optimize control problems: the effective spin-spin model of two
//! polar molecules and the two-atom Rydberg gate (internal levels only, or with
//! the relative coordinate on a Fourier grid).

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::functionals::TargetSpec;
use crate::linalg::{c, from_real, CMatrix, C64};
use crate::propagation::{
    Coupling, ControlTerm, DenseModel, FourierGrid, GridModel, Hamiltonian, PropagationMethod,
};
use crate::types::{
    ControlField, EmbeddedBasis, GateMatrix, LogicalSubspace, StateVector, SubspaceProjector,
    TimeGrid,
};
use crate::units;

/// Raw guess values are clipped to `±GUESS_CLIP` so the tanh map stays responsive.
pub const GUESS_CLIP: f64 = 4.0;

/// Maximal off-diagonal weight accepted by [`nonlocal_phase`].
pub const OFF_DIAGONAL_TOL: f64 = 0.05;

/// Logical subspace of a [`ControlProblem`].
#[derive(Debug, Clone, PartialEq)]
pub enum Logical {
    Projector(SubspaceProjector),
    Embedded(EmbeddedBasis),
}

impl LogicalSubspace for Logical {
    fn full_dim(&self) -> usize {
        match self {
            Logical::Projector(p) => p.full_dim(),
            Logical::Embedded(b) => b.full_dim(),
        }
    }

    fn n_logical(&self) -> usize {
        match self {
            Logical::Projector(p) => p.n_logical(),
            Logical::Embedded(b) => b.n_logical(),
        }
    }

    fn amplitude(&self, j: usize, psi: &StateVector) -> C64 {
        match self {
            Logical::Projector(p) => p.amplitude(j, psi),
            Logical::Embedded(b) => b.amplitude(j, psi),
        }
    }

    fn embed(&self, coeffs: &[C64]) -> StateVector {
        match self {
            Logical::Projector(p) => p.embed(coeffs),
            Logical::Embedded(b) => b.embed(coeffs),
        }
    }
}

/// Everything the optimizer needs: dynamics, register, target and guess.
#[derive(Clone)]
pub struct ControlProblem {
    pub model: Arc<dyn Hamiltonian>,
    pub grid: TimeGrid,
    pub logical: Logical,
    /// States whose time-integrated population is penalized.
    pub avoid: Option<SubspaceProjector>,
    pub target: TargetSpec,
    pub guess: Vec<ControlField>,
    pub method: PropagationMethod,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("dim", &self.model.dim())
            .field("n_controls", &self.model.n_controls())
            .field("grid", &self.grid)
            .field("n_logical", &self.logical.n_logical())
            .field("target", &self.target.kind())
            .finish()
    }
}

impl ControlProblem {
    pub fn n_logical(&self) -> usize {
        self.logical.n_logical()
    }

    /// The logical basis states, propagated as `φ_k(0)`.
    pub fn initial_states(&self) -> Vec<StateVector> {
        (0..self.n_logical())
            .map(|k| self.logical.logical_state(k))
            .collect()
    }

    pub fn with_guess(mut self, guess: Vec<ControlField>) -> Result<Self> {
        if guess.len() != self.model.n_controls() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} controls, guess has {}",
                self.model.n_controls(),
                guess.len()
            )));
        }
        if guess.iter().any(|g| *g.grid() != self.grid) {
            return Err(Error::DimensionMismatch("guess field on a different time grid".into()));
        }
        self.guess = guess;
        Ok(self)
    }

    pub fn with_target(mut self, target: TargetSpec) -> Result<Self> {
        if target.gate().dim() != self.n_logical() {
            return Err(Error::DimensionMismatch(format!(
                "target dimension {} for {} logical states",
                target.gate().dim(),
                self.n_logical()
            )));
        }
        self.target = target;
        Ok(self)
    }

    pub fn with_method(mut self, method: PropagationMethod) -> Self {
        self.method = method;
        self
    }
}

/// Raw control `ε(t)` whose tanh envelope `(tanh ε + 1)/2` follows
/// `peak·sin²(πt/T)`, with `ε` clipped to `±GUESS_CLIP`.
pub fn tanh_envelope_guess(grid: TimeGrid, peak: f64) -> Result<ControlField> {
    if !(0.0..=1.0).contains(&peak) {
        return Err(Error::InvalidArgument(format!(
            "guess peak must lie in [0, 1], got {peak}"
        )));
    }
    let t_final = grid.t_final();
    ControlField::from_fn(grid, |t| {
        let s = peak * (PI * t / t_final).sin().powi(2);
        let x = (2.0 * s - 1.0).clamp(-1.0 + 1e-300, 1.0 - 1e-16);
        x.atanh().clamp(-GUESS_CLIP, GUESS_CLIP)
    })
}

fn real_matrix(rows: &[[f64; 4]; 4]) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| rows[i][j])
}

/// Which numeric parameter set a [`SpinSpinParams`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinSpinVariant {
    /// Field parameters used for the CNOT optimization; matrices exact.
    Cnot,
    /// Placeholder for the B-gate field parameters (not a published matrix).
    BGate,
    Custom,
}

/// Drift and control matrices of `H(t) = H0 + S(t) H1`, entries in MHz (`E/h`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSpinParams {
    pub drift_mhz: [[f64; 4]; 4],
    pub control_mhz: [[f64; 4]; 4],
    pub variant: SpinSpinVariant,
}

impl SpinSpinParams {
    pub const CNOT_DRIFT_MHZ: [[f64; 4]; 4] = [
        [5.711, 0.324, 0.324, 0.0],
        [0.324, -1.840, 1.054, 0.0],
        [0.324, 1.054, 1.840, 0.0],
        [0.0, 0.0, 0.0, -2.030],
    ];

    pub const CNOT_CONTROL_MHZ: [[f64; 4]; 4] = [
        [-153.65, 0.0, 0.0, 3.906],
        [0.0, 153.65, 16.085, 0.0],
        [0.0, 16.085, 153.65, 0.0],
        [3.906, 0.0, 0.0, -153.65],
    ];

    pub fn cnot() -> Self {
        Self {
            drift_mhz: Self::CNOT_DRIFT_MHZ,
            control_mhz: Self::CNOT_CONTROL_MHZ,
            variant: SpinSpinVariant::Cnot,
        }
    }

    /// Stand-in for the B-gate field parameters. The matrix structure is the
    /// same as for [`SpinSpinParams::cnot`]; the numbers are the CNOT ones, so
    /// this set is not exact for the B-gate case. Supply measured matrices via
    /// [`SpinSpinParams::custom`] when available.
    pub fn bgate_placeholder() -> Self {
        Self {
            variant: SpinSpinVariant::BGate,
            ..Self::cnot()
        }
    }

    pub fn custom(drift_mhz: [[f64; 4]; 4], control_mhz: [[f64; 4]; 4]) -> Result<Self> {
        let p = Self {
            drift_mhz,
            control_mhz,
            variant: SpinSpinVariant::Custom,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn is_exact(&self) -> bool {
        self.variant == SpinSpinVariant::Cnot
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("drift", &self.drift_mhz), ("control", &self.control_mhz)] {
            for i in 0..4 {
                for j in 0..4 {
                    if !m[i][j].is_finite() || m[i][j] != m[j][i] {
                        return Err(Error::InvalidArgument(format!(
                            "{name} matrix must be real symmetric (entry {i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `H0` in rad/μs.
    pub fn drift(&self) -> CMatrix {
        from_real(&real_matrix(&self.drift_mhz).map(units::mhz_to_rad_per_us))
    }

    /// `H1` in rad/μs.
    pub fn control(&self) -> CMatrix {
        from_real(&real_matrix(&self.control_mhz).map(units::mhz_to_rad_per_us))
    }
}

/// Spin-spin problem on the full 4-dim space, time in μs.
///
/// The envelope is `S = (tanh ε + 1)/2 ∈ [0, 1]`, so `∂H/∂ε = H1 (1 − tanh²ε)/2`.
/// The guess follows a sin² envelope with peak `1/2`.
pub fn build_spinspin(
    params: &SpinSpinParams,
    t_final: f64,
    n_steps: usize,
    target: TargetSpec,
) -> Result<ControlProblem> {
    params.validate()?;
    let grid = TimeGrid::new(t_final, n_steps)?;
    let model = DenseModel::new(
        params.drift(),
        vec![ControlTerm {
            operator: params.control(),
            control: 0,
            coupling: Coupling::TanhEnvelope { amplitude: 1.0 },
        }],
    )?;
    let guess = vec![tanh_envelope_guess(grid, 0.5)?];
    ControlProblem {
        model: Arc::new(model),
        grid,
        logical: Logical::Projector(SubspaceProjector::full(4)),
        avoid: None,
        target: TargetSpec::direct(GateMatrix::identity(4))?,
        guess,
        method: PropagationMethod::Auto,
    }
    .with_target(target)
}

/// The class member reached by the spin-spin CNOT-class optimum,
/// `−(1/√2) diag(1−i, 1+i, 1+i, 1−i)`.
pub fn spinspin_diagonal_cnot() -> GateMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    GateMatrix::from_diagonal(&[c(-s, s), c(-s, -s), c(-s, -s), c(-s, s)])
}

/// Fraction of `Σ|U_jk|²` on the diagonal; near 1 when a single diagonal
/// representative dominates the gate.
pub fn diagonal_weight(u: &GateMatrix) -> f64 {
    let total: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    (0..u.dim()).map(|j| u[(j, j)].norm_sqr()).sum::<f64>() / total
}

/// Per-atom levels, in basis order.
pub const ATOM_LEVELS: [&str; 4] = ["0", "1", "i", "r"];
const LEVEL_I: usize = 2;
const LEVEL_R: usize = 3;

/// Two-atom index of `|a b⟩`.
pub fn pair_index(a: usize, b: usize) -> usize {
    4 * a + b
}

/// `|00⟩, |01⟩, |10⟩, |11⟩` in the 16-dim two-atom space.
pub const RYDBERG_LOGICAL: [usize; 4] = [0, 1, 4, 5];

/// Two-atom states with at least one atom in the intermediate level.
pub fn rydberg_avoid_indices() -> Vec<usize> {
    (0..16)
        .filter(|&k| k / 4 == LEVEL_I || k % 4 == LEVEL_I)
        .collect()
}

/// Map `ε → Ω(ε) = Ω_0 (tanh ε + 1)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParametrization {
    pub peak: f64,
}

impl PulseParametrization {
    pub fn rabi(&self, eps: f64) -> f64 {
        self.coupling().value(eps)
    }

    pub fn d_rabi(&self, eps: f64) -> f64 {
        self.coupling().derivative(eps)
    }

    /// Inverse map, clipped to `±GUESS_CLIP`.
    pub fn control_for(&self, rabi: f64) -> f64 {
        let x = (2.0 * rabi / self.peak - 1.0).clamp(-1.0 + 1e-300, 1.0 - 1e-16);
        x.atanh().clamp(-GUESS_CLIP, GUESS_CLIP)
    }

    pub fn coupling(&self) -> Coupling {
        Coupling::TanhEnvelope { amplitude: self.peak }
    }
}

/// Two-atom Rydberg parameters. Angular frequencies in rad/ns, lengths in μm.
#[derive(Debug, Clone, PartialEq)]
pub struct RydbergParams {
    pub rabi_red_peak: f64,
    pub rabi_blue_peak: f64,
    pub detuning_red: f64,
    pub detuning_blue: f64,
    /// `C3` of the `|rr⟩` interaction in `E_h a0³`.
    pub c3_atomic: f64,
    pub separation_um: f64,
    pub grid_half_width_um: f64,
    pub trap_width_um: f64,
    /// Trap depth `|V_min|` in mK (times `k_B`).
    pub trap_depth_mk: f64,
    pub mass_amu: f64,
    /// Decay rate of the intermediate level in 1/ns; 0 disables decay.
    pub decay_rate: f64,
    pub trap_on: bool,
}

impl Default for RydbergParams {
    fn default() -> Self {
        let rabi = units::mhz_to_rad_per_ns(260.0);
        Self {
            rabi_red_peak: rabi,
            rabi_blue_peak: rabi,
            detuning_red: units::mhz_to_rad_per_ns(600.0),
            detuning_blue: 0.0,
            c3_atomic: 3.284e6,
            separation_um: 4.0,
            grid_half_width_um: 0.3,
            trap_width_um: 0.75,
            trap_depth_mk: 4.5,
            mass_amu: 87.0,
            decay_rate: 0.0,
            trap_on: true,
        }
    }
}

/// Radiative decay rate of the 5p₁/₂ level, `1/27.7 ns`.
pub const RB_5P_DECAY_RATE: f64 = 1.0 / 27.7;

impl RydbergParams {
    /// `(Ω_B0² − Ω_R0²) / (4 δ_R)`
    pub fn stark_detuning(&self) -> f64 {
        (self.rabi_blue_peak.powi(2) - self.rabi_red_peak.powi(2)) / (4.0 * self.detuning_red)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("rabi_red_peak", self.rabi_red_peak),
            ("rabi_blue_peak", self.rabi_blue_peak),
            ("detuning_red", self.detuning_red),
            ("detuning_blue", self.detuning_blue),
            ("c3_atomic", self.c3_atomic),
            ("decay_rate", self.decay_rate),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        let positive = [
            ("detuning_red", self.detuning_red),
            ("separation_um", self.separation_um),
            ("grid_half_width_um", self.grid_half_width_um),
            ("trap_width_um", self.trap_width_um),
            ("trap_depth_mk", self.trap_depth_mk),
            ("mass_amu", self.mass_amu),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grid_half_width_um >= self.separation_um {
            return Err(Error::InvalidArgument(
                "grid half width must be smaller than the separation".into(),
            ));
        }
        let stark = self.stark_detuning();
        if (stark - self.detuning_blue).abs() > 1e-9 * self.detuning_red {
            return Err(Error::InvalidArgument(format!(
                "detuning_blue = {} differs from the Stark relation value {stark}",
                self.detuning_blue
            )));
        }
        Ok(())
    }

    pub fn red(&self) -> PulseParametrization {
        PulseParametrization { peak: self.rabi_red_peak }
    }

    pub fn blue(&self) -> PulseParametrization {
        PulseParametrization { peak: self.rabi_blue_peak }
    }

    /// `C3 / r³` in rad/ns at a separation in μm.
    pub fn interaction_at(&self, r_um: f64) -> f64 {
        units::c3_interaction_rad_per_ns(self.c3_atomic, r_um)
    }

    /// Reduced mass of the relative coordinate in kg.
    pub fn reduced_mass(&self) -> f64 {
        0.5 * self.mass_amu * units::AMU
    }

    /// `ħ/(2μ)` in μm²/ns.
    pub fn kinetic_prefactor(&self) -> f64 {
        units::kinetic_prefactor_um2_per_ns(self.reduced_mass())
    }

    /// `|V_min|` in rad/ns.
    pub fn trap_depth(&self) -> f64 {
        units::joule_to_rad_per_ns(units::millikelvin_to_joule(self.trap_depth_mk))
    }

    /// Harmonic trap frequency `ω = √(|V_min| / (m σ²))` in rad/ns.
    pub fn trap_frequency(&self) -> f64 {
        let m = self.mass_amu * units::AMU;
        let sigma = self.trap_width_um * 1e-6;
        (units::BOLTZMANN * self.trap_depth_mk * 1e-3 / (m * sigma * sigma)).sqrt() * 1e-9
    }

    /// Width `√(ħ/(2μω))` of the relative-motion ground state in μm.
    pub fn ground_state_width(&self) -> f64 {
        (self.kinetic_prefactor() / self.trap_frequency()).sqrt()
    }

    /// Relative-coordinate potential from one trapped atom,
    /// `|V_min| (r − r0)² / (8σ²)`, in rad/ns.
    pub fn trap_potential_per_atom(&self, r_um: f64) -> f64 {
        let x = r_um - self.separation_um;
        self.trap_depth() * x * x / (8.0 * self.trap_width_um.powi(2))
    }

    /// Grid of `n_points` over `r0 ± half width`.
    pub fn fourier_grid(&self, n_points: usize) -> Result<FourierGrid> {
        FourierGrid::new(
            n_points,
            self.separation_um - self.grid_half_width_um,
            self.separation_um + self.grid_half_width_um,
            self.kinetic_prefactor(),
        )
    }
}

fn ladder_operator(from: usize, to: usize) -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(from, to)] = c(0.5, 0.0);
    m[(to, from)] = c(0.5, 0.0);
    m
}

fn two_atom(single: &CMatrix) -> CMatrix {
    let id = CMatrix::identity(4, 4);
    single.kronecker(&id) + id.kronecker(single)
}

/// Internal-level two-atom Hamiltonian without the `|rr⟩` shift; controls
/// `ε_R` (0) and `ε_B` (1).
fn rydberg_internal_model(params: &RydbergParams, rr_shift: f64) -> Result<DenseModel> {
    let mut single = CMatrix::zeros(4, 4);
    single[(LEVEL_I, LEVEL_I)] = c(0.5 * params.detuning_red, 0.0);
    single[(LEVEL_R, LEVEL_R)] = c(0.5 * params.detuning_blue, 0.0);
    let mut drift = two_atom(&single);
    let rr = pair_index(LEVEL_R, LEVEL_R);
    drift[(rr, rr)] += c(rr_shift, 0.0);
    let terms = vec![
        ControlTerm {
            operator: two_atom(&ladder_operator(0, LEVEL_I)),
            control: 0,
            coupling: params.red().coupling(),
        },
        ControlTerm {
            operator: two_atom(&ladder_operator(LEVEL_I, LEVEL_R)),
            control: 1,
            coupling: params.blue().coupling(),
        },
    ];
    DenseModel::new(drift, terms)
}

fn rydberg_guess(grid: TimeGrid) -> Result<Vec<ControlField>> {
    Ok(vec![tanh_envelope_guess(grid, 0.5)?, tanh_envelope_guess(grid, 0.5)?])
}

/// Two atoms, four internal levels each (16-dim), time in ns.
///
/// The motion is frozen at `r0`, so `|rr⟩` carries the fixed shift `C3/r0³`.
/// With `decay_rate > 0` the intermediate level decays as `−iγ/2` per atom.
pub fn build_rydberg_internal(
    params: &RydbergParams,
    t_final: f64,
    n_steps: usize,
    target: TargetSpec,
) -> Result<ControlProblem> {
    params.validate()?;
    let grid = TimeGrid::new(t_final, n_steps)?;
    let mut model = rydberg_internal_model(params, params.interaction_at(params.separation_um))?;
    if params.decay_rate > 0.0 {
        let rates = (0..16)
            .map(|k| {
                let n_i = [k / 4, k % 4].iter().filter(|&&a| a == LEVEL_I).count();
                params.decay_rate * n_i as f64
            })
            .collect();
        model = model.with_decay(rates)?;
    }
    ControlProblem {
        model: Arc::new(model),
        grid,
        logical: Logical::Projector(SubspaceProjector::new(16, RYDBERG_LOGICAL.to_vec())?),
        avoid: Some(SubspaceProjector::new(16, rydberg_avoid_indices())?),
        target: TargetSpec::direct(GateMatrix::identity(4))?,
        guess: rydberg_guess(grid)?,
        method: PropagationMethod::Auto,
    }
    .with_target(target)
}

/// Ground state of the relative motion with both atoms trapped, from the
/// dense grid Hamiltonian; real and positive at its maximum.
pub fn trap_ground_state(params: &RydbergParams, grid: &FourierGrid) -> Result<Vec<f64>> {
    let n = grid.n_points();
    let points = grid.points();
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![c(0.0, 0.0); n];
    for j in 0..n {
        e[j] = c(1.0, 0.0);
        let col = grid.kinetic_apply_slice(&e);
        for i in 0..n {
            h[(i, j)] = col[i].re;
        }
        e[j] = c(0.0, 0.0);
        h[(j, j)] += 2.0 * params.trap_potential_per_atom(points[j]);
    }
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let lowest = (0..n)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap();
    let mut v: Vec<f64> = eig.eigenvectors.column(lowest).iter().cloned().collect();
    let peak = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if peak < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(v)
}

/// Mass of the analytic trap ground state captured by the grid, by the
/// (spectrally accurate) grid sum of its Gaussian density.
fn ground_state_norm_on_grid(params: &RydbergParams, grid: &FourierGrid) -> f64 {
    let s = params.ground_state_width();
    let norm = 1.0 / ((2.0 * PI).sqrt() * s);
    grid.points()
        .iter()
        .map(|r| {
            let x = r - params.separation_um;
            norm * (-x * x / (2.0 * s * s)).exp() * grid.dr()
        })
        .sum()
}

/// Two atoms with the relative coordinate on `grid`, time in ns.
///
/// Traps act on `|0⟩, |1⟩` only and can be switched off for the gate; `φ0` is
/// always the ground state of the trap. `|rr⟩` carries `C3/r³` diagonal in
/// position. Decay is not supported here.
pub fn build_rydberg_grid(
    params: &RydbergParams,
    t_final: f64,
    n_steps: usize,
    grid: FourierGrid,
    target: TargetSpec,
) -> Result<ControlProblem> {
    params.validate()?;
    if params.decay_rate > 0.0 {
        return Err(Error::InvalidArgument("the grid model has no decay term".into()));
    }
    if grid.n_points() < 32 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 32 points, got {}",
            grid.n_points()
        )));
    }
    if (grid.kinetic_prefactor() - params.kinetic_prefactor()).abs()
        > 1e-12 * params.kinetic_prefactor()
    {
        return Err(Error::InvalidArgument(
            "grid kinetic prefactor does not match the atomic mass".into(),
        ));
    }
    let width = params.ground_state_width();
    if grid.dr() > width {
        return Err(Error::GridTooSmall(format!(
            "spacing {} μm does not resolve the ground state width {width} μm",
            grid.dr()
        )));
    }
    let captured = ground_state_norm_on_grid(params, &grid);
    if captured < 1.0 - 1e-6 {
        return Err(Error::GridTooSmall(format!(
            "grid holds {captured} of the trap ground state"
        )));
    }
    let phi0 = trap_ground_state(params, &grid)?;
    let points = grid.points();
    let n = grid.n_points();
    let potentials: Vec<Vec<f64>> = (0..16)
        .map(|k| {
            let (a, b) = (k / 4, k % 4);
            let n_trapped = [a, b].iter().filter(|&&l| l < LEVEL_I).count() as f64;
            points
                .iter()
                .map(|&r| {
                    let mut v = 0.0;
                    if params.trap_on {
                        v += n_trapped * params.trap_potential_per_atom(r);
                    }
                    if a == LEVEL_R && b == LEVEL_R {
                        v += params.interaction_at(r);
                    }
                    v
                })
                .collect()
        })
        .collect();
    let internal = rydberg_internal_model(params, 0.0)?;
    let model = GridModel::new(grid, internal, potentials)?;
    let dim = 16 * n;
    let logical_vectors = RYDBERG_LOGICAL
        .iter()
        .map(|&a| {
            let mut v = StateVector::zeros(dim);
            for j in 0..n {
                v[a * n + j] = c(phi0[j], 0.0);
            }
            v
        })
        .collect();
    let avoid: Vec<usize> = rydberg_avoid_indices()
        .into_iter()
        .flat_map(|a| (0..n).map(move |j| a * n + j))
        .collect();
    let time = TimeGrid::new(t_final, n_steps)?;
    ControlProblem {
        model: Arc::new(model),
        grid: time,
        logical: Logical::Embedded(EmbeddedBasis::new(logical_vectors)?),
        avoid: Some(SubspaceProjector::new(dim, avoid)?),
        target: TargetSpec::direct(GateMatrix::identity(4))?,
        guess: rydberg_guess(time)?,
        method: PropagationMethod::Auto,
    }
    .with_target(target)
}

/// The diagonal gate `diag(−1, 1, 1, 1)`.
pub fn pi_phase_gate() -> GateMatrix {
    GateMatrix::from_diagonal(&[c(-1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)])
}

/// `χ = φ00 − φ01 − φ10 + φ11` of an (approximately) diagonal gate, in `(−π, π]`.
pub fn nonlocal_phase(u: &GateMatrix) -> Result<f64> {
    if u.dim() != 4 {
        return Err(Error::DimensionMismatch(format!("expected 4x4 gate, got {}", u.dim())));
    }
    let total: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    let off = 1.0 - diagonal_weight(u);
    if total == 0.0 || off > OFF_DIAGONAL_TOL {
        return Err(Error::NotDiagonal(off));
    }
    let z = u[(0, 0)] * u[(3, 3)] * u[(1, 1)].conj() * u[(2, 2)].conj();
    let chi = z.arg();
    Ok(if chi <= -PI { chi + TAU } else { chi })
}

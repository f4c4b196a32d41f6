//! Time evolution: Hamiltonian models, single-step propagators and the forward
//! and backward propagation drivers.
//!
//! Units are whatever the model uses with `ħ = 1`: energies are angular
//! frequencies and a step applies `exp(−i H dt)`. The field is piecewise
//! constant, sample `n` acting on the interval `[t_n, t_{n+1}]`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64};
use crate::types::{ControlField, StateVector, TimeGrid};

/// Largest dimension for which dense matrix exponentials are used by default.
pub const DENSE_THRESHOLD: usize = 64;

/// Chebychev coefficients below this magnitude end the series.
pub const CHEBY_TRUNCATION: f64 = 1e-14;

const CHEBY_MAX_ORDER: usize = 20_000;

/// Map from a raw control value `ε` to the amplitude multiplying a control operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// amplitude = `ε`
    Linear,
    /// amplitude = `a (tanh ε + 1) / 2`, bounded to `[0, a]`
    TanhEnvelope { amplitude: f64 },
}

impl Coupling {
    pub fn value(&self, eps: f64) -> f64 {
        match *self {
            Coupling::Linear => eps,
            Coupling::TanhEnvelope { amplitude } => amplitude * 0.5 * (eps.tanh() + 1.0),
        }
    }

    pub fn derivative(&self, eps: f64) -> f64 {
        match *self {
            Coupling::Linear => 1.0,
            Coupling::TanhEnvelope { amplitude } => {
                let t = eps.tanh();
                amplitude * 0.5 * (1.0 - t * t)
            }
        }
    }
}

/// Control operator `H_c` driven by control `index` through `coupling`.
#[derive(Debug, Clone)]
pub struct ControlTerm {
    pub operator: CMatrix,
    pub control: usize,
    pub coupling: Coupling,
}

/// A (possibly non-Hermitian) Hamiltonian depending on a set of real controls.
pub trait Hamiltonian: Sync + Send {
    fn dim(&self) -> usize;

    fn n_controls(&self) -> usize;

    /// `H(ε) |ψ⟩`
    fn apply(&self, controls: &[f64], psi: &CVector) -> CVector;

    /// `H(ε)† |ψ⟩`
    fn apply_adjoint(&self, controls: &[f64], psi: &CVector) -> CVector;

    /// `∂H/∂ε_l |ψ⟩`
    fn apply_derivative(&self, l: usize, controls: &[f64], psi: &CVector) -> CVector;

    /// Bounds enclosing the spectrum of the Hermitian part of `H(ε)`.
    fn spectral_bounds(&self, controls: &[f64]) -> (f64, f64);

    fn is_hermitian(&self) -> bool;

    /// Dense matrix of `H(ε)`, built column by column from [`Hamiltonian::apply`].
    fn dense(&self, controls: &[f64]) -> CMatrix {
        let n = self.dim();
        let mut h = CMatrix::zeros(n, n);
        let mut e = CVector::zeros(n);
        for j in 0..n {
            e[j] = c(1.0, 0.0);
            h.set_column(j, &self.apply(controls, &e));
            e[j] = c(0.0, 0.0);
        }
        h
    }
}

/// Gershgorin bounds of the Hermitian part of a dense matrix.
fn gershgorin(h: &CMatrix) -> (f64, f64) {
    let n = h.nrows();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let d = h[(i, i)].re;
        let r: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| (0.5 * (h[(i, j)] + h[(j, i)].conj())).norm())
            .sum();
        lo = lo.min(d - r);
        hi = hi.max(d + r);
    }
    (lo, hi)
}

fn with_margin((lo, hi): (f64, f64)) -> (f64, f64) {
    let pad = 0.05 * (hi - lo).abs().max(1e-12);
    (lo - pad, hi + pad)
}

/// Dense model `H = H_0 + Σ_c f_c(ε_{l_c}) H_c − (i/2) diag(Γ)`.
#[derive(Debug, Clone)]
pub struct DenseModel {
    drift: CMatrix,
    terms: Vec<ControlTerm>,
    decay: Vec<f64>,
    n_controls: usize,
}

impl DenseModel {
    pub fn new(drift: CMatrix, terms: Vec<ControlTerm>) -> Result<Self> {
        let n = drift.nrows();
        if drift.ncols() != n {
            return Err(Error::DimensionMismatch("drift Hamiltonian is not square".into()));
        }
        check_hermitian(&drift, "drift Hamiltonian")?;
        for (i, t) in terms.iter().enumerate() {
            if t.operator.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "control operator {i} has shape {:?}, expected ({n}, {n})",
                    t.operator.shape()
                )));
            }
            check_hermitian(&t.operator, &format!("control operator {i}"))?;
        }
        let n_controls = terms.iter().map(|t| t.control + 1).max().unwrap_or(0);
        Ok(Self {
            drift,
            terms,
            decay: vec![0.0; n],
            n_controls,
        })
    }

    /// Attach decay rates `Γ_j ≥ 0` (population loss rate of basis state `j`).
    pub fn with_decay(mut self, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != self.drift.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} decay rates for dimension {}",
                rates.len(),
                self.drift.nrows()
            )));
        }
        if rates.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidArgument("decay rates must be nonnegative".into()));
        }
        self.decay = rates;
        Ok(self)
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    pub fn terms(&self) -> &[ControlTerm] {
        &self.terms
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// Hermitian part of `H(ε)`.
    pub fn hermitian_part(&self, controls: &[f64]) -> CMatrix {
        let mut h = self.drift.clone();
        for t in &self.terms {
            h += &t.operator * c(t.coupling.value(controls[t.control]), 0.0);
        }
        h
    }
}

fn check_hermitian(h: &CMatrix, what: &str) -> Result<()> {
    let err = linalg::max_abs_diff(h, &h.adjoint());
    if err > 1e-12 * h.norm().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "{what} is not Hermitian (deviation {err:.3e})"
        )));
    }
    Ok(())
}

impl Hamiltonian for DenseModel {
    fn dim(&self) -> usize {
        self.drift.nrows()
    }

    fn n_controls(&self) -> usize {
        self.n_controls
    }

    fn apply(&self, controls: &[f64], psi: &CVector) -> CVector {
        let mut out = self.hermitian_part(controls) * psi;
        for (j, g) in self.decay.iter().enumerate() {
            out[j] -= psi[j] * c(0.0, 0.5 * g);
        }
        out
    }

    fn apply_adjoint(&self, controls: &[f64], psi: &CVector) -> CVector {
        let mut out = self.hermitian_part(controls) * psi;
        for (j, g) in self.decay.iter().enumerate() {
            out[j] += psi[j] * c(0.0, 0.5 * g);
        }
        out
    }

    fn apply_derivative(&self, l: usize, controls: &[f64], psi: &CVector) -> CVector {
        let mut out = CVector::zeros(psi.len());
        for t in self.terms.iter().filter(|t| t.control == l) {
            out += (&t.operator * psi) * c(t.coupling.derivative(controls[l]), 0.0);
        }
        out
    }

    fn spectral_bounds(&self, controls: &[f64]) -> (f64, f64) {
        with_margin(gershgorin(&self.hermitian_part(controls)))
    }

    fn is_hermitian(&self) -> bool {
        self.decay.iter().all(|&g| g == 0.0)
    }

    fn dense(&self, controls: &[f64]) -> CMatrix {
        let mut h = self.hermitian_part(controls);
        for (j, g) in self.decay.iter().enumerate() {
            h[(j, j)] -= c(0.0, 0.5 * g);
        }
        h
    }
}

/// Periodic equidistant grid for a one-dimensional coordinate, with the kinetic
/// operator `−κ ∂²/∂r²` applied in momentum space (`κ = ħ/2μ` in model units).
#[derive(Clone)]
pub struct FourierGrid {
    n_points: usize,
    r_min: f64,
    r_max: f64,
    kinetic_prefactor: f64,
    k_squared: Arc<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierGrid")
            .field("n_points", &self.n_points)
            .field("r_min", &self.r_min)
            .field("r_max", &self.r_max)
            .field("kinetic_prefactor", &self.kinetic_prefactor)
            .finish()
    }
}

impl FourierGrid {
    /// Grid points `r_j = r_min + j Δr`, `Δr = (r_max − r_min)/n`, with periodic wrap.
    pub fn new(n_points: usize, r_min: f64, r_max: f64, kinetic_prefactor: f64) -> Result<Self> {
        if !n_points.is_power_of_two() || n_points < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid size must be a power of two ≥ 4, got {n_points}"
            )));
        }
        if !(r_max > r_min) {
            return Err(Error::InvalidArgument("grid needs r_max > r_min".into()));
        }
        if !(kinetic_prefactor.is_finite() && kinetic_prefactor >= 0.0) {
            return Err(Error::InvalidArgument("kinetic prefactor must be nonnegative".into()));
        }
        let length = r_max - r_min;
        let dk = 2.0 * std::f64::consts::PI / length;
        let k_squared = (0..n_points)
            .map(|j| {
                let m = if j < n_points / 2 {
                    j as f64
                } else {
                    j as f64 - n_points as f64
                };
                (m * dk).powi(2)
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_points,
            r_min,
            r_max,
            kinetic_prefactor,
            k_squared: Arc::new(k_squared),
            fft: planner.plan_fft_forward(n_points),
            ifft: planner.plan_fft_inverse(n_points),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / self.n_points as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.r_min + j as f64 * self.dr()).collect()
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn kinetic_prefactor(&self) -> f64 {
        self.kinetic_prefactor
    }

    /// Wave numbers `k_j`, in FFT order.
    pub fn wave_numbers(&self) -> Vec<f64> {
        let dk = 2.0 * std::f64::consts::PI / (self.r_max - self.r_min);
        (0..self.n_points)
            .map(|j| {
                if j < self.n_points / 2 {
                    j as f64 * dk
                } else {
                    (j as f64 - self.n_points as f64) * dk
                }
            })
            .collect()
    }

    /// Largest kinetic eigenvalue on the grid.
    pub fn kinetic_max(&self) -> f64 {
        self.kinetic_prefactor * self.k_squared.iter().cloned().fold(0.0, f64::max)
    }

    /// Apply the kinetic operator to a slice of grid amplitudes.
    pub fn kinetic_apply_slice(&self, psi: &[C64]) -> Vec<C64> {
        let mut buf = psi.to_vec();
        self.fft.process(&mut buf);
        let scale = self.kinetic_prefactor / self.n_points as f64;
        for (z, k2) in buf.iter_mut().zip(self.k_squared.iter()) {
            *z *= k2 * scale;
        }
        self.ifft.process(&mut buf);
        buf
    }
}

/// Apply the kinetic operator of `grid` to a state on that grid.
pub fn kinetic_apply(grid: &FourierGrid, psi: &StateVector) -> Result<StateVector> {
    if psi.len() != grid.n_points() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} entries, grid has {} points",
            psi.len(),
            grid.n_points()
        )));
    }
    Ok(CVector::from_vec(grid.kinetic_apply_slice(psi.as_slice())))
}

/// Internal levels ⊗ one motional coordinate on a [`FourierGrid`].
///
/// Amplitude layout: index `a · n_points + j` for internal level `a` and grid
/// point `j`. The Hamiltonian is
/// `Σ_a (T + V_a(r)) ⊗ |a⟩⟨a| + H_int(ε) ⊗ 1`. Decay is not supported.
#[derive(Debug, Clone)]
pub struct GridModel {
    grid: FourierGrid,
    internal: DenseModel,
    potentials: Vec<Vec<f64>>,
}

impl GridModel {
    pub fn new(grid: FourierGrid, internal: DenseModel, potentials: Vec<Vec<f64>>) -> Result<Self> {
        if !internal.is_hermitian() {
            return Err(Error::InvalidArgument(
                "grid models do not support decay terms".into(),
            ));
        }
        if potentials.len() != internal.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} potentials for {} internal levels",
                potentials.len(),
                internal.dim()
            )));
        }
        if potentials.iter().any(|v| v.len() != grid.n_points()) {
            return Err(Error::DimensionMismatch(
                "potential sampled on a different grid".into(),
            ));
        }
        Ok(Self {
            grid,
            internal,
            potentials,
        })
    }

    pub fn grid(&self) -> &FourierGrid {
        &self.grid
    }

    pub fn internal(&self) -> &DenseModel {
        &self.internal
    }

    pub fn potentials(&self) -> &[Vec<f64>] {
        &self.potentials
    }

    pub fn n_internal(&self) -> usize {
        self.internal.dim()
    }

    fn apply_internal(&self, h_int: &CMatrix, psi: &CVector, with_motion: bool) -> CVector {
        let n = self.grid.n_points();
        let d = self.n_internal();
        let mut out = CVector::zeros(n * d);
        for a in 0..d {
            let block = &psi.as_slice()[a * n..(a + 1) * n];
            if with_motion {
                let t = self.grid.kinetic_apply_slice(block);
                let v = &self.potentials[a];
                for j in 0..n {
                    out[a * n + j] += t[j] + block[j] * v[j];
                }
            }
            for b in 0..d {
                let hab = h_int[(b, a)];
                if hab == c(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out[b * n + j] += hab * block[j];
                }
            }
        }
        out
    }
}

impl Hamiltonian for GridModel {
    fn dim(&self) -> usize {
        self.grid.n_points() * self.n_internal()
    }

    fn n_controls(&self) -> usize {
        self.internal.n_controls()
    }

    fn apply(&self, controls: &[f64], psi: &CVector) -> CVector {
        self.apply_internal(&self.internal.hermitian_part(controls), psi, true)
    }

    fn apply_adjoint(&self, controls: &[f64], psi: &CVector) -> CVector {
        self.apply(controls, psi)
    }

    fn apply_derivative(&self, l: usize, controls: &[f64], psi: &CVector) -> CVector {
        let mut d = CMatrix::zeros(self.n_internal(), self.n_internal());
        for t in self.internal.terms().iter().filter(|t| t.control == l) {
            d += &t.operator * c(t.coupling.derivative(controls[l]), 0.0);
        }
        self.apply_internal(&d, psi, false)
    }

    fn spectral_bounds(&self, controls: &[f64]) -> (f64, f64) {
        let h = self.internal.hermitian_part(controls);
        let n = self.n_internal();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in 0..n {
            let r: f64 = (0..n).filter(|&b| b != a).map(|b| h[(a, b)].norm()).sum();
            let vmin = self.potentials[a].iter().cloned().fold(f64::INFINITY, f64::min);
            let vmax = self.potentials[a].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            lo = lo.min(h[(a, a)].re + vmin - r);
            hi = hi.max(h[(a, a)].re + vmax + r + self.grid.kinetic_max());
        }
        with_margin((lo, hi))
    }

    fn is_hermitian(&self) -> bool {
        true
    }
}

/// `J_n(x)` for `n = 0..=n_max` by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, n_max: usize) -> Vec<f64> {
    if x == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        return v;
    }
    let start = n_max + 20 + (40.0 * (n_max.max(x.abs() as usize) as f64)).sqrt() as usize
        + x.abs() as usize;
    let mut vals = vec![0.0; start + 2];
    let (mut j_next, mut j_cur) = (0.0_f64, 1e-300_f64);
    for n in (1..=start).rev() {
        let j_prev = 2.0 * n as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        vals[n - 1] = j_cur;
        if j_cur.abs() > 1e250 {
            for v in vals.iter_mut().skip(n - 1) {
                *v *= 1e-250;
            }
            j_cur *= 1e-250;
            j_next *= 1e-250;
        }
    }
    vals[start] = 0.0;
    // normalization J_0 + 2 Σ J_{2k} = 1
    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    vals.truncate(n_max + 1);
    vals.iter().map(|v| v / norm).collect()
}

/// Chebychev expansion coefficients `(2 − δ_{n0}) J_n(α)` of `exp(−i α x)` on
/// `x ∈ [−1, 1]`, truncated below [`CHEBY_TRUNCATION`] (the phase `(−i)^n` is
/// applied by the caller).
pub fn chebychev_coefficients(alpha: f64) -> Result<Vec<f64>> {
    let mut n_max = (alpha.abs() * 1.3) as usize + 40;
    loop {
        if n_max > CHEBY_MAX_ORDER {
            return Err(Error::SpectralBoundViolation(format!(
                "series for α = {alpha:.3e} needs more than {CHEBY_MAX_ORDER} terms"
            )));
        }
        let j = bessel_j_sequence(alpha, n_max);
        if let Some(last) = (alpha.abs() as usize..=n_max).find(|&n| j[n].abs() < 0.5 * CHEBY_TRUNCATION)
        {
            return Ok(j[..last]
                .iter()
                .enumerate()
                .map(|(n, v)| if n == 0 { *v } else { 2.0 * v })
                .collect());
        }
        n_max *= 2;
    }
}

/// `exp(−i H dt) |ψ⟩` for a dense `H`: eigendecomposition when Hermitian,
/// scaling and squaring otherwise.
pub fn step_expm(h: &CMatrix, psi: &StateVector, dt: f64) -> StateVector {
    expm_step_matrix(h, dt) * psi
}

fn expm_step_matrix(h: &CMatrix, dt: f64) -> CMatrix {
    if linalg::max_abs_diff(h, &h.adjoint()) <= 1e-14 * h.norm().max(1.0) {
        linalg::expm_hermitian(&((h + h.adjoint()) * c(0.5, 0.0)), dt)
    } else {
        linalg::expm_general(h, dt)
    }
}

/// Chebychev propagation `exp(∓i H dt) |ψ⟩` for Hermitian `H` given through
/// `apply`, with `bounds` enclosing its spectrum. `backward` selects the `+` sign.
pub fn step_chebychev(
    apply: impl Fn(&CVector) -> CVector,
    psi: &StateVector,
    dt: f64,
    bounds: (f64, f64),
    backward: bool,
) -> Result<StateVector> {
    let (lo, hi) = bounds;
    if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::SpectralBoundViolation(format!(
            "invalid spectral bounds [{lo}, {hi}]"
        )));
    }
    let center = 0.5 * (hi + lo);
    let radius = 0.5 * (hi - lo);
    let sgn = if backward { 1.0 } else { -1.0 };
    let global = C64::new(0.0, sgn * center * dt).exp();
    if radius == 0.0 {
        return Ok(psi * global);
    }
    let coeffs = chebychev_coefficients(radius * dt)?;
    let normalized = |v: &CVector| (apply(v) - v * c(center, 0.0)) / c(radius, 0.0);
    // (∓i)^n
    let phase = |n: usize| C64::new(0.0, sgn).powu(n as u32);

    let mut prev = psi.clone();
    let mut out = psi * c(coeffs[0], 0.0);
    if coeffs.len() > 1 {
        let mut cur = normalized(psi);
        out += &cur * (phase(1) * coeffs[1]);
        for (n, a) in coeffs.iter().enumerate().skip(2) {
            let next = normalized(&cur) * c(2.0, 0.0) - &prev;
            out += &next * (phase(n) * *a);
            prev = cur;
            cur = next;
        }
    }
    let out = out * global;
    let n_in = psi.norm();
    let n_out = out.norm();
    if !n_out.is_finite() || (n_out - n_in).abs() > 1e-8 * n_in.max(1e-300) + 1e-14 {
        return Err(Error::SpectralBoundViolation(format!(
            "norm changed from {n_in:.12e} to {n_out:.12e}; spectral bounds too tight"
        )));
    }
    Ok(out)
}

/// How single steps are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationMethod {
    /// Dense exponentials up to [`DENSE_THRESHOLD`], Chebychev above.
    #[default]
    Auto,
    Expm,
    Chebychev,
}

impl PropagationMethod {
    fn resolve(self, model: &dyn Hamiltonian) -> Result<PropagationMethod> {
        match self {
            PropagationMethod::Auto => {
                if model.dim() <= DENSE_THRESHOLD {
                    Ok(PropagationMethod::Expm)
                } else if model.is_hermitian() {
                    Ok(PropagationMethod::Chebychev)
                } else {
                    Ok(PropagationMethod::Expm)
                }
            }
            PropagationMethod::Chebychev if !model.is_hermitian() => Err(Error::InvalidArgument(
                "Chebychev propagation needs a Hermitian model".into(),
            )),
            m => Ok(m),
        }
    }
}

/// Propagator for one time step at fixed control values.
#[derive(Debug, Clone)]
pub enum StepPropagator {
    Dense(CMatrix),
    Chebychev {
        controls: Vec<f64>,
        bounds: (f64, f64),
        dt: f64,
    },
}

impl StepPropagator {
    pub fn new(
        model: &dyn Hamiltonian,
        controls: &[f64],
        dt: f64,
        method: PropagationMethod,
    ) -> Result<Self> {
        match method.resolve(model)? {
            PropagationMethod::Chebychev => Ok(StepPropagator::Chebychev {
                controls: controls.to_vec(),
                bounds: model.spectral_bounds(controls),
                dt,
            }),
            _ => Ok(StepPropagator::Dense(expm_step_matrix(&model.dense(controls), dt))),
        }
    }

    /// `exp(−i H dt) |ψ⟩`
    pub fn forward(&self, model: &dyn Hamiltonian, psi: &CVector) -> Result<CVector> {
        match self {
            StepPropagator::Dense(u) => Ok(u * psi),
            StepPropagator::Chebychev {
                controls,
                bounds,
                dt,
            } => step_chebychev(|v| model.apply(controls, v), psi, *dt, *bounds, false),
        }
    }

    /// Adjoint step `exp(−i H dt)† |ψ⟩`, i.e. backward in time with `H†`.
    pub fn backward(&self, model: &dyn Hamiltonian, psi: &CVector) -> Result<CVector> {
        match self {
            StepPropagator::Dense(u) => Ok(u.adjoint() * psi),
            StepPropagator::Chebychev {
                controls,
                bounds,
                dt,
            } => step_chebychev(|v| model.apply(controls, v), psi, *dt, *bounds, true),
        }
    }
}

/// States (or co-states) at every grid node, for each propagated trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    grid: TimeGrid,
    /// `states[k][n]`
    states: Vec<Vec<StateVector>>,
}

impl TrajectorySet {
    pub fn new(grid: TimeGrid, states: Vec<Vec<StateVector>>) -> Result<Self> {
        if states.iter().any(|s| s.len() != grid.n_nodes()) {
            return Err(Error::DimensionMismatch(format!(
                "each trajectory needs {} nodes",
                grid.n_nodes()
            )));
        }
        Ok(Self { grid, states })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, k: usize, n: usize) -> &StateVector {
        &self.states[k][n]
    }

    pub fn trajectory(&self, k: usize) -> &[StateVector] {
        &self.states[k]
    }

    /// All states at node `n`.
    pub fn at(&self, n: usize) -> Vec<StateVector> {
        self.states.iter().map(|s| s[n].clone()).collect()
    }

    pub fn final_states(&self) -> Vec<StateVector> {
        self.at(self.grid.n_steps())
    }

    /// Stored complex numbers, `N · (n_steps + 1) · dim`.
    pub fn storage_len(&self) -> usize {
        self.states
            .iter()
            .map(|s| s.iter().map(|v| v.len()).sum::<usize>())
            .sum()
    }
}

/// Control values of every field at sample `n`.
pub fn controls_at(fields: &[ControlField], n: usize) -> Vec<f64> {
    fields.iter().map(|f| f.values()[n]).collect()
}

fn check_fields(model: &dyn Hamiltonian, fields: &[ControlField]) -> Result<TimeGrid> {
    if fields.len() != model.n_controls() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} controls, got {} fields",
            model.n_controls(),
            fields.len()
        )));
    }
    let grid = *fields
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one control field required".into()))?
        .grid();
    if fields.iter().any(|f| *f.grid() != grid) {
        return Err(Error::DimensionMismatch("control fields on different grids".into()));
    }
    Ok(grid)
}

fn check_states(model: &dyn Hamiltonian, states: &[StateVector]) -> Result<()> {
    if let Some(s) = states.iter().find(|s| s.len() != model.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} for model of dimension {}",
            s.len(),
            model.dim()
        )));
    }
    Ok(())
}

/// Step propagators for every interval of the grid.
pub fn step_propagators(
    model: &dyn Hamiltonian,
    fields: &[ControlField],
    method: PropagationMethod,
) -> Result<Vec<StepPropagator>> {
    let grid = check_fields(model, fields)?;
    let dt = grid.dt();
    (0..grid.n_steps())
        .into_par_iter()
        .map(|n| StepPropagator::new(model, &controls_at(fields, n), dt, method))
        .collect()
}

/// Forward propagation of every initial state; also returns the step
/// propagators so a following backward sweep can reuse them.
pub fn propagate_forward_with_steps(
    model: &dyn Hamiltonian,
    fields: &[ControlField],
    initial: &[StateVector],
    method: PropagationMethod,
) -> Result<(TrajectorySet, Vec<StepPropagator>)> {
    let grid = check_fields(model, fields)?;
    check_states(model, initial)?;
    let steps = step_propagators(model, fields, method)?;
    let states = initial
        .par_iter()
        .map(|psi0| {
            let mut traj = Vec::with_capacity(grid.n_nodes());
            traj.push(psi0.clone());
            for step in &steps {
                let next = step.forward(model, traj.last().unwrap())?;
                traj.push(next);
            }
            Ok(traj)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((TrajectorySet::new(grid, states)?, steps))
}

pub fn propagate_forward(
    model: &dyn Hamiltonian,
    fields: &[ControlField],
    initial: &[StateVector],
    method: PropagationMethod,
) -> Result<TrajectorySet> {
    propagate_forward_with_steps(model, fields, initial, method).map(|(t, _)| t)
}

/// Source term `η_k(t_n)` of the backward equation.
pub type Inhomogeneity<'a> = dyn Fn(usize, usize) -> StateVector + Sync + 'a;

/// Backward propagation from `chi_final` at `T` to `0` with the adjoint generator.
///
/// With a source `η`, each step is
/// `χ_n = B_n χ_{n+1} + (dt/2) (B_n η_{n+1} + η_n)` where `B_n` is the adjoint
/// step propagator; for `H = 0` and constant `η` this gives `χ(t) = χ(T) + (T − t) η`.
/// `source(k, n)` must return `η_k(t_n)`; `steps` may carry propagators cached
/// from a forward sweep with the same fields.
pub fn propagate_backward(
    model: &dyn Hamiltonian,
    fields: &[ControlField],
    chi_final: &[StateVector],
    method: PropagationMethod,
    source: Option<&Inhomogeneity<'_>>,
    steps: Option<&[StepPropagator]>,
) -> Result<TrajectorySet> {
    let grid = check_fields(model, fields)?;
    check_states(model, chi_final)?;
    let owned;
    let steps = match steps {
        Some(s) => {
            if s.len() != grid.n_steps() {
                return Err(Error::DimensionMismatch("cached step count differs from grid".into()));
            }
            s
        }
        None => {
            owned = step_propagators(model, fields, method)?;
            &owned
        }
    };
    let half_dt = c(0.5 * grid.dt(), 0.0);
    let states = chi_final
        .par_iter()
        .enumerate()
        .map(|(k, chi_t)| {
            let n_nodes = grid.n_nodes();
            let mut traj: Vec<StateVector> = vec![CVector::zeros(0); n_nodes];
            traj[n_nodes - 1] = chi_t.clone();
            let mut eta_next = source.map(|s| s(k, n_nodes - 1));
            for n in (0..grid.n_steps()).rev() {
                let step = &steps[n];
                let mut chi = step.backward(model, &traj[n + 1])?;
                if let (Some(src), Some(en)) = (source, eta_next.as_ref()) {
                    let eta_n = src(k, n);
                    chi += (step.backward(model, en)? + &eta_n) * half_dt;
                    eta_next = Some(eta_n);
                }
                traj[n] = chi;
            }
            Ok(traj)
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectorySet::new(grid, states)
}

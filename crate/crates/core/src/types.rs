//! Time grids, control fields, shape functions, gates and subspace projectors.
//!
//! Field samples live on interval midpoints (`n_steps` samples), states live on
//! the `n_steps + 1` grid nodes.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector};

/// Default tolerance for unitarity checks.
pub const UNITARITY_TOL: f64 = 1e-9;

/// A state of the full Hilbert space.
pub type StateVector = CVector;

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 time steps, got {n_steps}"
            )));
        }
        Ok(Self { t_final, n_steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Time of node `i`, `0 ≤ i ≤ n_steps`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_final
        } else {
            self.t_final * i as f64 / self.n_steps as f64
        }
    }

    /// Midpoint of interval `i`, where field sample `i` lives.
    pub fn midpoint(&self, i: usize) -> f64 {
        self.t_final * (i as f64 + 0.5) / self.n_steps as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_steps).map(|i| self.midpoint(i)).collect()
    }

    /// Trapezoidal quadrature weight of node `i`.
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }
}

/// Real control field sampled on the midpoints of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ControlField {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} samples, grid has {} intervals",
                values.len(),
                grid.n_steps()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "field sample {i} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_steps()],
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.midpoints().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `∫ ε(t)² dt` by midpoint quadrature.
    pub fn fluence(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.dt()
    }
}

/// Update shape `S(t) ∈ [0, 1]`, switching the field on and off smoothly.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeFunction {
    /// `sin²(π t / T)`
    SinSquared,
    Flat,
    /// Explicit midpoint samples.
    Samples(Vec<f64>),
}

impl Default for ShapeFunction {
    fn default() -> Self {
        ShapeFunction::SinSquared
    }
}

impl ShapeFunction {
    pub fn samples(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let t_final = grid.t_final();
        match self {
            ShapeFunction::SinSquared => Ok(grid
                .midpoints()
                .into_iter()
                .map(|t| {
                    (std::f64::consts::PI * t / t_final)
                        .sin()
                        .powi(2)
                        .clamp(0.0, 1.0)
                })
                .collect()),
            ShapeFunction::Flat => Ok(vec![1.0; grid.n_steps()]),
            ShapeFunction::Samples(v) => {
                if v.len() != grid.n_steps() {
                    return Err(Error::DimensionMismatch(format!(
                        "shape has {} samples, grid has {} intervals",
                        v.len(),
                        grid.n_steps()
                    )));
                }
                if let Some(i) = v.iter().position(|s| !(0.0..=1.0).contains(s)) {
                    return Err(Error::InvalidArgument(format!(
                        "shape sample {i} = {} outside [0, 1]",
                        v[i]
                    )));
                }
                Ok(v.clone())
            }
        }
    }

    /// Value at an arbitrary time `t ∈ [0, T]` (not available for sampled shapes).
    pub fn value_at(&self, t: f64, t_final: f64) -> Option<f64> {
        match self {
            ShapeFunction::SinSquared => Some(
                (std::f64::consts::PI * t / t_final)
                    .sin()
                    .powi(2)
                    .clamp(0.0, 1.0),
            ),
            ShapeFunction::Flat => Some(1.0),
            ShapeFunction::Samples(_) => None,
        }
    }
}

/// Square complex matrix acting on the logical subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix(CMatrix);

impl GateMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "gate must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("gate has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[crate::linalg::C64]) -> Self {
        let n = d.len();
        Self(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                d[i]
            } else {
                c(0.0, 0.0)
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        crate::linalg::unitarity_error(&self.0) <= tol
    }
}

impl Deref for GateMatrix {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

impl DerefMut for GateMatrix {
    fn deref_mut(&mut self) -> &mut CMatrix {
        &mut self.0
    }
}

impl From<GateMatrix> for CMatrix {
    fn from(g: GateMatrix) -> Self {
        g.0
    }
}

/// Projector onto the span of selected basis states of a `dim`-dimensional space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspaceProjector {
    dim: usize,
    indices: Vec<usize>,
}

impl SubspaceProjector {
    pub fn new(dim: usize, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for dimension {dim}"
            )));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(Error::InvalidArgument("duplicate subspace index".into()));
        }
        Ok(Self { dim, indices })
    }

    /// Projector onto the whole space.
    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            indices: (0..dim).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let mut out = StateVector::zeros(psi.len());
        for &i in &self.indices {
            out[i] = psi[i];
        }
        out
    }

    /// `⟨ψ|P|ψ⟩`
    pub fn population(&self, psi: &StateVector) -> f64 {
        self.indices.iter().map(|&i| psi[i].norm_sqr()).sum()
    }

    /// Basis state `|indices[k]⟩` of the full space.
    pub fn basis_state(&self, k: usize) -> StateVector {
        let mut v = StateVector::zeros(self.dim);
        v[self.indices[k]] = c(1.0, 0.0);
        v
    }

    pub fn basis_states(&self) -> Vec<StateVector> {
        (0..self.rank()).map(|k| self.basis_state(k)).collect()
    }
}

/// The logical (qubit) subspace inside the full Hilbert space, described by an
/// orthonormal set of vectors `|b_j⟩`.
pub trait LogicalSubspace: Sync {
    /// Dimension of the full space.
    fn full_dim(&self) -> usize;

    /// Number of logical basis vectors `N`.
    fn n_logical(&self) -> usize;

    /// `⟨b_j|ψ⟩`
    fn amplitude(&self, j: usize, psi: &StateVector) -> crate::linalg::C64;

    /// `Σ_j coeffs_j |b_j⟩`
    fn embed(&self, coeffs: &[crate::linalg::C64]) -> StateVector;

    /// `|b_j⟩`
    fn logical_state(&self, j: usize) -> StateVector {
        let mut coeffs = vec![c(0.0, 0.0); self.n_logical()];
        coeffs[j] = c(1.0, 0.0);
        self.embed(&coeffs)
    }
}

impl LogicalSubspace for SubspaceProjector {
    fn full_dim(&self) -> usize {
        self.dim
    }

    fn n_logical(&self) -> usize {
        self.rank()
    }

    fn amplitude(&self, j: usize, psi: &StateVector) -> crate::linalg::C64 {
        psi[self.indices[j]]
    }

    fn embed(&self, coeffs: &[crate::linalg::C64]) -> StateVector {
        let mut v = StateVector::zeros(self.dim);
        for (&i, z) in self.indices.iter().zip(coeffs) {
            v[i] = *z;
        }
        v
    }
}

/// Logical subspace spanned by explicit orthonormal vectors, e.g. internal
/// qubit states times a motional ground state.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedBasis {
    vectors: Vec<StateVector>,
}

impl EmbeddedBasis {
    pub fn new(vectors: Vec<StateVector>) -> Result<Self> {
        let dim = vectors
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty logical basis".into()))?
            .len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch("logical basis vectors differ in length".into()));
        }
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (a.dotc(b) - c(expect, 0.0)).norm() > 1e-9 {
                    return Err(Error::InvalidArgument("logical basis is not orthonormal".into()));
                }
            }
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &[StateVector] {
        &self.vectors
    }
}

impl LogicalSubspace for EmbeddedBasis {
    fn full_dim(&self) -> usize {
        self.vectors[0].len()
    }

    fn n_logical(&self) -> usize {
        self.vectors.len()
    }

    fn amplitude(&self, j: usize, psi: &StateVector) -> crate::linalg::C64 {
        self.vectors[j].dotc(psi)
    }

    fn embed(&self, coeffs: &[crate::linalg::C64]) -> StateVector {
        let mut v = StateVector::zeros(self.full_dim());
        for (b, z) in self.vectors.iter().zip(coeffs) {
            v += b * *z;
        }
        v
    }
}

/// `(U_{T,N})_{jk} = ⟨b_j|φ_k(T)⟩` over the logical basis.
pub fn projected_gate<L: LogicalSubspace + ?Sized>(
    states: &[StateVector],
    logical: &L,
) -> Result<GateMatrix> {
    let n = logical.n_logical();
    if states.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected {n} propagated states, got {}",
            states.len()
        )));
    }
    if let Some(s) = states.iter().find(|s| s.len() != logical.full_dim()) {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} in a space of dimension {}",
            s.len(),
            logical.full_dim()
        )));
    }
    GateMatrix::new(CMatrix::from_fn(n, n, |j, k| logical.amplitude(j, &states[k])))
}

/// `1 − Tr(U U†)/N`, the population lost from the logical subspace.
pub fn unitarity_defect(u: &GateMatrix) -> f64 {
    let n = u.dim() as f64;
    1.0 - u.iter().map(|z| z.norm_sqr()).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, random_unitary};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_nodes_are_uniform() {
        let g = TimeGrid::new(3.0, 7).unwrap();
        let nodes = g.nodes();
        assert_eq!(nodes.len(), 8);
        assert_eq!(nodes[7], 3.0);
        for w in nodes.windows(2) {
            assert!((w[1] - w[0] - g.dt()).abs() < 1e-15);
        }
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
    }

    #[test]
    fn control_field_validation() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(ControlField::new(g, vec![0.0; 3]).is_err());
        assert!(ControlField::new(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        let f = ControlField::constant(g, 2.0);
        assert!((f.fluence() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn sin_squared_vanishes_at_ends() {
        let s = ShapeFunction::SinSquared;
        assert_eq!(s.value_at(0.0, 2.0), Some(0.0));
        assert!(s.value_at(2.0, 2.0).unwrap() < 1e-30);
        assert!((s.value_at(1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(ShapeFunction::Samples(vec![0.5, 1.5])
            .samples(&TimeGrid::new(1.0, 2).unwrap())
            .is_err());
    }

    #[test]
    fn projected_identity_evolution() {
        let p = SubspaceProjector::full(4);
        let u = projected_gate(&p.basis_states(), &p).unwrap();
        assert!(max_abs_diff(&u, &CMatrix::identity(4, 4)) < 1e-15);
        assert!(unitarity_defect(&u).abs() < 1e-15);
    }

    #[test]
    fn projected_diagonal_gate() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = [c(-s, s), c(-s, -s), c(-s, -s), c(-s, s)];
        let p = SubspaceProjector::full(4);
        let states: Vec<_> = (0..4).map(|k| p.basis_state(k) * d[k]).collect();
        let u = projected_gate(&states, &p).unwrap();
        let expected = GateMatrix::from_diagonal(&d);
        assert!(max_abs_diff(&u, &expected) < 1e-15);
    }

    #[test]
    fn projected_submatrix_of_random_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let big = random_unitary(8, &mut rng);
        let logical = SubspaceProjector::new(8, vec![0, 2, 5, 7]).unwrap();
        let states: Vec<StateVector> = logical.basis_states().iter().map(|b| &big * b).collect();
        let u = projected_gate(&states, &logical).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let bra = logical.basis_state(j);
                let overlap = bra.dotc(&states[k]);
                assert!((u[(j, k)] - overlap).norm() < 1e-15);
            }
        }
        let defect = unitarity_defect(&u);
        let direct = 1.0 - u.iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0;
        assert!((defect - direct).abs() < 1e-15);
        assert!(defect > 0.0 && defect < 1.0);
    }

    #[test]
    fn zeroed_column_loses_a_quarter() {
        let mut u = GateMatrix::identity(4);
        u[(3, 3)] = c(0.0, 0.0);
        assert!((unitarity_defect(&u) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn projector_errors() {
        assert!(SubspaceProjector::new(4, vec![0, 4]).is_err());
        assert!(SubspaceProjector::new(4, vec![1, 1]).is_err());
        let p = SubspaceProjector::full(4);
        assert!(projected_gate(&p.basis_states()[..3], &p).is_err());
    }

    proptest! {
        #[test]
        fn shape_samples_in_unit_interval(t in 0.01f64..100.0, n in 2usize..400) {
            let g = TimeGrid::new(t, n).unwrap();
            for shape in [ShapeFunction::SinSquared, ShapeFunction::Flat] {
                for s in shape.samples(&g).unwrap() {
                    prop_assert!((0.0..=1.0).contains(&s));
                }
            }
        }

        #[test]
        fn projected_gate_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let logical = SubspaceProjector::new(6, vec![0, 1, 3, 4]).unwrap();
            let x: Vec<StateVector> = (0..4).map(|_| random_unitary(6, &mut rng).column(0).into_owned()).collect();
            let y: Vec<StateVector> = (0..4).map(|_| random_unitary(6, &mut rng).column(1).into_owned()).collect();
            let z: Vec<StateVector> = x.iter().zip(&y).map(|(p, q)| p * c(a, 0.0) + q * c(0.0, b)).collect();
            let ux = projected_gate(&x, &logical).unwrap();
            let uy = projected_gate(&y, &logical).unwrap();
            let uz = projected_gate(&z, &logical).unwrap();
            let expected = ux.matrix() * c(a, 0.0) + uy.matrix() * c(0.0, b);
            prop_assert!(max_abs_diff(&uz, &expected) < 1e-13);
        }
    }
}

//! Optimization functionals and their gradients with respect to the propagated
//! states.
//!
//! Gradients follow the convention `∇_{⟨φ|} J = ∂J/∂⟨φ|`: for a real `J`,
//! `δJ = 2 Re Σ_k ⟨∇_k | δφ_k⟩`.

use crate::error::{Error, Result};
use crate::geometry::{self, bell_transform, class_distance, LocalInvariants};
use crate::linalg::{c, cofactor, CMatrix, CVector, C64};
use crate::propagation::TrajectorySet;
use crate::types::{
    projected_gate, unitarity_defect, ControlField, GateMatrix, LogicalSubspace, ShapeFunction,
    StateVector, SubspaceProjector,
};

/// What the final-time functional measures against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// A specific gate, phase sensitive.
    DirectGate,
    /// The local equivalence class of a gate.
    EquivalenceClass,
}

/// Target gate plus the constants `a0`, `b0` of its class.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    kind: TargetKind,
    gate: GateMatrix,
    a0: C64,
    b0: C64,
}

impl TargetSpec {
    pub fn direct(gate: GateMatrix) -> Result<Self> {
        if gate.nrows() != gate.ncols() {
            return Err(Error::DimensionMismatch("target gate is not square".into()));
        }
        Ok(Self {
            kind: TargetKind::DirectGate,
            gate,
            a0: c(0.0, 0.0),
            b0: c(0.0, 0.0),
        })
    }

    /// Class of a two-qubit gate: `a0 = Tr²(m_O) / (16 det O)`,
    /// `b0 = (Tr²(m_O) − Tr(m_O²)) / (4 det O)`.
    pub fn class(gate: GateMatrix) -> Result<Self> {
        let (tr, tr_sq) = m_traces(&gate)?;
        let det = gate.determinant();
        if det.norm() <= geometry::SINGULAR_DET {
            return Err(Error::NearSingularGate { det_abs: det.norm() });
        }
        Ok(Self {
            kind: TargetKind::EquivalenceClass,
            a0: tr * tr / (det * 16.0),
            b0: (tr * tr - tr_sq) / (det * 4.0),
            gate,
        })
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn gate(&self) -> &GateMatrix {
        &self.gate
    }

    pub fn a0(&self) -> C64 {
        self.a0
    }

    pub fn b0(&self) -> C64 {
        self.b0
    }

    /// Invariants of the target class (`g1 = Re a0`, `g2 = Im a0`, `g3 = Re b0`).
    pub fn invariants(&self) -> LocalInvariants {
        LocalInvariants::new(self.a0.re, self.a0.im, self.b0.re)
    }
}

fn m_traces(u: &GateMatrix) -> Result<(C64, C64)> {
    let m = geometry::m_matrix(u)?;
    Ok((m.trace(), (m.matrix() * m.matrix()).trace()))
}

/// Real and imaginary parts of a list of amplitude vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDecomposition {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

impl StateDecomposition {
    pub fn new(states: &[CVector]) -> Self {
        Self {
            alpha: states.iter().map(|s| s.iter().map(|z| z.re).collect()).collect(),
            beta: states.iter().map(|s| s.iter().map(|z| z.im).collect()).collect(),
        }
    }

    /// Columns of `Q† U Q` for `U = projected_gate(states, logical)`: the
    /// amplitudes on which the local-invariants polynomial is written.
    pub fn magic_basis<L: LogicalSubspace + ?Sized>(states: &[StateVector], logical: &L) -> Result<Self> {
        let u = projected_gate(states, logical)?;
        let q = bell_transform().into_matrix();
        let v = q.adjoint() * u.matrix() * &q;
        let cols: Vec<CVector> = v.column_iter().map(|col| col.into_owned()).collect();
        Ok(Self::new(&cols))
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn reassemble(&self) -> Vec<CVector> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| CVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| c(*x, *y))))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The four polynomial sums `S1..S4` subtracted in `f1..f4`.
///
/// With `aa_kl = α_k·α_l`, `bb_kl = β_k·β_l` and `ab_kl = α_k·β_l`, the sums
/// equal `Re Tr²m`, `Im Tr²m`, `Re (Tr²m − Tr m²)` and `Im (Tr²m − Tr m²)`.
pub fn invariant_sums(d: &StateDecomposition) -> [f64; 4] {
    let n = d.len();
    let aa = |k: usize, l: usize| dot(&d.alpha[k], &d.alpha[l]);
    let bb = |k: usize, l: usize| dot(&d.beta[k], &d.beta[l]);
    let ab = |k: usize, l: usize| dot(&d.alpha[k], &d.beta[l]);
    let mut s = [0.0; 4];
    for k in 0..n {
        for l in 0..n {
            let (aakk, aall) = (aa(k, k), aa(l, l));
            let (bbkk, bbll) = (bb(k, k), bb(l, l));
            let (abkk, abll) = (ab(k, k), ab(l, l));
            let (aakl, bbkl, abkl, ablk) = (aa(k, l), bb(k, l), ab(k, l), ab(l, k));
            let t1 = aakk * aall + bbkk * bbll - 2.0 * aakk * bbll - 4.0 * abkk * abll;
            let t2 = 4.0 * aakk * abll - 4.0 * bbkk * abll;
            s[0] += t1;
            s[1] += t2;
            s[2] += t1 - aakl * aakl - bbkl * bbkl
                + 2.0 * aakl * bbkl
                + 2.0 * abkl * abkl
                + 2.0 * abkl * ablk;
            s[3] += t2 - 4.0 * aakl * abkl + 4.0 * bbkl * abkl;
        }
    }
    s
}

/// `f1..f4` of the local-invariants functional, from the polynomial sums.
pub fn invariant_residuals(
    d: &StateDecomposition,
    det: C64,
    target: &TargetSpec,
) -> [f64; 4] {
    let s = invariant_sums(d);
    let ad = target.a0 * det;
    let bd = target.b0 * det;
    [
        ad.re - s[0] / 16.0,
        ad.im - s[1] / 16.0,
        bd.re - s[2] / 4.0,
        bd.im - s[3] / 4.0,
    ]
}

/// `J_T`, `g_a` and `g_b` of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValue {
    pub total: f64,
    pub j_t: f64,
    pub g_a: f64,
    pub g_b: f64,
}

impl FunctionalValue {
    pub fn new(j_t: f64, g_a: f64, g_b: f64) -> Self {
        Self {
            total: j_t + g_a + g_b,
            j_t,
            g_a,
            g_b,
        }
    }
}

fn check_target_dim<L: LogicalSubspace + ?Sized>(target: &GateMatrix, logical: &L) -> Result<()> {
    if target.dim() != logical.n_logical() {
        return Err(Error::DimensionMismatch(format!(
            "target is {}x{}, logical subspace has rank {}",
            target.dim(),
            target.dim(),
            logical.n_logical()
        )));
    }
    Ok(())
}

/// `1 − Re Tr(O† U) / N`
pub fn j_direct<L: LogicalSubspace + ?Sized>(
    states: &[StateVector],
    target: &GateMatrix,
    logical: &L,
) -> Result<f64> {
    check_target_dim(target, logical)?;
    let u = projected_gate(states, logical)?;
    let n = target.dim() as f64;
    Ok(1.0 - (target.adjoint() * u.matrix()).trace().re / n)
}

/// `λ_a ∫ (ε − ε_ref)² / S dt`, midpoint rule on the field samples.
pub fn j_fluence(
    field: &ControlField,
    reference: &ControlField,
    shape: &ShapeFunction,
    lambda_a: f64,
) -> Result<f64> {
    if field.grid() != reference.grid() {
        return Err(Error::DimensionMismatch("field and reference on different grids".into()));
    }
    if !(lambda_a > 0.0) {
        return Err(Error::InvalidArgument(format!("λ_a must be positive, got {lambda_a}")));
    }
    let s = shape.samples(field.grid())?;
    let dt = field.grid().dt();
    let mut sum = 0.0;
    for (i, ((e, r), si)) in field.values().iter().zip(reference.values()).zip(&s).enumerate() {
        let d = e - r;
        if d == 0.0 {
            continue;
        }
        if *si <= 0.0 {
            return Err(Error::DivisionByZeroShape { index: i });
        }
        sum += d * d / si;
    }
    Ok(lambda_a * sum * dt)
}

/// `(λ_b / N T) ∫ Σ_k ⟨φ_k|P_avoid|φ_k⟩ dt`, trapezoid rule on the nodes.
pub fn j_avoid(traj: &TrajectorySet, avoid: &SubspaceProjector, lambda_b: f64) -> f64 {
    if lambda_b == 0.0 || traj.n_states() == 0 {
        return 0.0;
    }
    let grid = traj.grid();
    let n = traj.n_states() as f64;
    let mut sum = 0.0;
    for i in 0..grid.n_nodes() {
        let pop: f64 = (0..traj.n_states()).map(|k| avoid.population(traj.state(k, i))).sum();
        sum += grid.trapezoid_weight(i) * pop;
    }
    lambda_b / (n * grid.t_final()) * sum
}

/// `∇_{⟨φ_m|} g_b = (λ_b / N T) P_avoid |φ_m⟩`
pub fn avoid_inhomogeneity(
    state: &StateVector,
    avoid: &SubspaceProjector,
    lambda_b: f64,
    n_states: usize,
    t_final: f64,
) -> StateVector {
    if lambda_b == 0.0 {
        return CVector::zeros(state.len());
    }
    avoid.apply(state) * c(lambda_b / (n_states as f64 * t_final), 0.0)
}

/// Local-invariants functional from the explicit polynomial in the states:
/// `f1² + f2² + f3² + f4² + 1 − Tr(U U†)/N`.
pub fn j_local_invariants<L: LogicalSubspace + ?Sized>(
    states: &[StateVector],
    target: &TargetSpec,
    logical: &L,
) -> Result<f64> {
    if target.kind != TargetKind::EquivalenceClass {
        return Err(Error::InvalidArgument(
            "local-invariants functional needs a class target".into(),
        ));
    }
    check_target_dim(&target.gate, logical)?;
    let u = projected_gate(states, logical)?;
    let det = u.determinant();
    if det.norm() <= geometry::SINGULAR_DET {
        return Err(Error::NearSingularGate { det_abs: det.norm() });
    }
    let d = StateDecomposition::magic_basis(states, logical)?;
    let f = invariant_residuals(&d, det, target);
    Ok(f.iter().map(|x| x * x).sum::<f64>() + unitarity_defect(&u))
}

/// Same functional through the invariants of `U`: `Σ Δg_i² + 1 − Tr(U U†)/N`.
///
/// Agrees with [`j_local_invariants`] for unitary `U`; used for reporting.
pub fn j_local_invariants_geometric(u: &GateMatrix, target: &TargetSpec) -> Result<f64> {
    let g = geometry::local_invariants(u)?;
    Ok(class_distance(&g, &target.invariants()) + unitarity_defect(u))
}

/// Final-time functional selected by the target kind.
pub fn j_final<L: LogicalSubspace + ?Sized>(
    states: &[StateVector],
    target: &TargetSpec,
    logical: &L,
) -> Result<f64> {
    match target.kind {
        TargetKind::DirectGate => j_direct(states, &target.gate, logical),
        TargetKind::EquivalenceClass => j_local_invariants(states, target, logical),
    }
}

/// `∂J/∂Ū` for the local-invariants functional, `U` the projected gate.
fn local_invariants_gate_gradient(u: &CMatrix, target: &TargetSpec) -> Result<CMatrix> {
    let det = u.determinant();
    if det.norm() <= geometry::SINGULAR_DET {
        return Err(Error::NearSingularGate { det_abs: det.norm() });
    }
    let q = bell_transform().into_matrix();
    let v = q.adjoint() * u * &q;
    let m = v.transpose() * &v;
    let tr = m.trace();
    let tr_sq = (&m * &m).trace();
    let n = u.nrows() as f64;
    // f1 + i f2 and f3 + i f4 as holomorphic functions of V
    let f12 = target.a0 * det - tr * tr / 16.0;
    let f34 = target.b0 * det - (tr * tr - tr_sq) / 4.0;
    let cof = cofactor(&v);
    let d12 = &cof * target.a0 - &v * (tr / 4.0);
    let d34 = &cof * target.b0 - &v * tr + &v * &m;
    let w = d12.map(|z| z.conj()) * f12 + d34.map(|z| z.conj()) * f34 - &v / c(n, 0.0);
    Ok(&q * w * q.adjoint())
}

/// Gradients `∇_{⟨φ_k|} J_T` at final time, one full-space vector per state.
///
/// For the direct functional this is `−(1/2N) O|k⟩`, independent of the states.
pub fn chi_boundary<L: LogicalSubspace + ?Sized>(
    states: &[StateVector],
    target: &TargetSpec,
    logical: &L,
) -> Result<Vec<StateVector>> {
    check_target_dim(&target.gate, logical)?;
    let n_logical = logical.n_logical();
    if states.len() != n_logical {
        return Err(Error::DimensionMismatch(format!(
            "{} states for a logical subspace of rank {n_logical}",
            states.len()
        )));
    }
    let g = match target.kind {
        TargetKind::DirectGate => target.gate.matrix() * c(-0.5 / n_logical as f64, 0.0),
        TargetKind::EquivalenceClass => {
            let u = projected_gate(states, logical)?;
            local_invariants_gate_gradient(u.matrix(), target)?
        }
    };
    Ok((0..n_logical)
        .map(|k| logical.embed(g.column(k).as_slice()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NamedClass;
    use crate::linalg::{random_local, random_unitary};
    use crate::types::TimeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn columns(u: &CMatrix) -> Vec<CVector> {
        u.column_iter().map(|c| c.into_owned()).collect()
    }

    fn ud() -> GateMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        GateMatrix::from_diagonal(&[c(-s, s), c(-s, -s), c(-s, -s), c(-s, s)])
    }

    #[test]
    fn target_constants() {
        let t = TargetSpec::class(NamedClass::Cnot.gate()).unwrap();
        assert!((t.a0() - c(0.0, 0.0)).norm() < 1e-14);
        assert!((t.b0() - c(1.0, 0.0)).norm() < 1e-14);
        let t = TargetSpec::class(NamedClass::Identity.gate()).unwrap();
        assert!((t.a0() - c(1.0, 0.0)).norm() < 1e-14);
        assert!((t.b0() - c(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn decomposition_reassembles() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let cols = columns(&random_unitary(6, &mut rng));
        let d = StateDecomposition::new(&cols);
        assert_eq!(d.reassemble(), cols);
    }

    #[test]
    fn direct_examples() {
        let full = SubspaceProjector::full(4);
        let cnot = NamedClass::Cnot.gate();
        assert!(j_direct(&columns(&cnot), &cnot, &full).unwrap().abs() < 1e-15);
        assert!((j_direct(&columns(&(cnot.matrix() * c(-1.0, 0.0))), &cnot, &full).unwrap() - 2.0).abs() < 1e-15);
        // Tr(CNOT† U_d) = U_d[0,0] + U_d[1,1] = −√2
        let expect = 1.0 + std::f64::consts::SQRT_2 / 4.0;
        assert!((j_direct(&columns(&ud()), &cnot, &full).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn fluence_examples() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let f = ControlField::constant(grid, 1.0);
        let r = ControlField::constant(grid, 0.0);
        assert_eq!(j_fluence(&f, &f, &ShapeFunction::SinSquared, 1.0).unwrap(), 0.0);
        assert!((j_fluence(&f, &r, &ShapeFunction::Flat, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let mut s = vec![1.0; 100];
        s[3] = 0.0;
        assert_eq!(
            j_fluence(&f, &r, &ShapeFunction::Samples(s), 1.0),
            Err(Error::DivisionByZeroShape { index: 3 })
        );
    }

    #[test]
    fn fluence_with_sin_squared_shape_converges() {
        // ε − ε_ref = 0.3 sin²(πt/T) (1 + t); refined grid as reference
        let value = |n: usize| {
            let grid = TimeGrid::new(2.0, n).unwrap();
            let s = ShapeFunction::SinSquared;
            let f = ControlField::from_fn(grid, |t| 0.3 * s.value_at(t, 2.0).unwrap() * (1.0 + t)).unwrap();
            let r = ControlField::constant(grid, 0.0);
            j_fluence(&f, &r, &s, 2.0).unwrap()
        };
        let fine = value(200_000);
        let coarse = value(2000);
        assert!((coarse - fine).abs() < 1e-6 * fine);
    }

    #[test]
    fn local_invariants_examples() {
        let full = SubspaceProjector::full(4);
        let cnot_class = TargetSpec::class(NamedClass::Cnot.gate()).unwrap();
        let cphase = NamedClass::Cphase.gate();
        assert!(j_local_invariants(&columns(&cphase), &cnot_class, &full).unwrap() <= 1e-12);
        let id = GateMatrix::identity(4);
        assert!((j_local_invariants(&columns(&id), &cnot_class, &full).unwrap() - 5.0).abs() < 1e-12);
        assert!(j_local_invariants(&columns(&ud()), &cnot_class, &full).unwrap() <= 1e-12);
        let direct = TargetSpec::direct(NamedClass::Cnot.gate()).unwrap();
        assert!(j_local_invariants(&columns(&id), &direct, &full).is_err());
    }

    #[test]
    fn polynomial_matches_geometric_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let full = SubspaceProjector::full(4);
        for i in 0..200 {
            let o = GateMatrix::new(random_unitary(4, &mut rng)).unwrap();
            let target = TargetSpec::class(o).unwrap();
            let u = GateMatrix::new(random_unitary(4, &mut rng)).unwrap();
            let poly = j_local_invariants(&columns(&u), &target, &full).unwrap();
            let geo = j_local_invariants_geometric(&u, &target).unwrap();
            assert!((poly - geo).abs() < 1e-9, "draw {i}: {poly} vs {geo}");
        }
    }

    /// The third residual with the cross term printed as `+4 (α_k·α_l)(β_k·β_l)`
    /// instead of `+2 (α_k·β_l)² + 2 (α_k·β_l)(α_l·β_k)`.
    fn third_residual_as_printed(d: &StateDecomposition, det: C64, target: &TargetSpec) -> f64 {
        let n = d.len();
        let mut s = 0.0;
        for k in 0..n {
            for l in 0..n {
                let aa = |a: usize, b: usize| dot(&d.alpha[a], &d.alpha[b]);
                let bb = |a: usize, b: usize| dot(&d.beta[a], &d.beta[b]);
                let ab = |a: usize, b: usize| dot(&d.alpha[a], &d.beta[b]);
                s += aa(k, k) * aa(l, l) + bb(k, k) * bb(l, l) - 2.0 * aa(k, k) * bb(l, l)
                    - 4.0 * ab(k, k) * ab(l, l)
                    - aa(k, l).powi(2)
                    - bb(k, l).powi(2)
                    + 2.0 * aa(k, l) * bb(k, l)
                    + 4.0 * aa(k, l) * bb(k, l);
            }
        }
        (target.b0() * det).re - s / 4.0
    }

    fn third_residual_from_matrix(u: &GateMatrix, target: &TargetSpec) -> f64 {
        let m = geometry::m_matrix(u).unwrap();
        let tr = m.trace();
        (target.b0() * u.determinant()).re - ((tr * tr - (m.matrix() * m.matrix()).trace()) / 4.0).re
    }

    #[test]
    fn printed_cross_term_only_holds_on_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let full = SubspaceProjector::full(4);
        let target = TargetSpec::class(NamedClass::Cnot.gate()).unwrap();
        let unitary = GateMatrix::new(random_unitary(4, &mut rng)).unwrap();
        let leaky = GateMatrix::new(
            unitary.matrix() * c(0.9, 0.0) + random_unitary(4, &mut rng) * c(0.1, 0.05),
        )
        .unwrap();
        for (u, agrees) in [(&unitary, true), (&leaky, false)] {
            let d = StateDecomposition::magic_basis(&columns(u), &full).unwrap();
            let det = u.determinant();
            let direct = third_residual_from_matrix(u, &target);
            assert!((invariant_residuals(&d, det, &target)[2] - direct).abs() < 1e-12);
            let printed = third_residual_as_printed(&d, det, &target);
            assert_eq!((printed - direct).abs() < 1e-12, agrees, "{printed} vs {direct}");
        }
    }

    fn perturb(states: &[CVector], dir: &[CVector], h: f64) -> Vec<CVector> {
        states.iter().zip(dir).map(|(s, d)| s + d * c(h, 0.0)).collect()
    }

    fn random_direction<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<CVector> {
        (0..n)
            .map(|_| {
                CVector::from_fn(dim, |_, _| {
                    c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
                })
            })
            .collect()
    }

    fn directional(grad: &[CVector], dir: &[CVector]) -> f64 {
        2.0 * grad.iter().zip(dir).map(|(g, d)| g.dotc(d).re).sum::<f64>()
    }

    #[test]
    fn local_invariants_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let logical = SubspaceProjector::new(6, vec![0, 1, 3, 4]).unwrap();
        let target = TargetSpec::class(NamedClass::Cnot.gate()).unwrap();
        let states: Vec<CVector> = columns(&random_unitary(6, &mut rng))
            .into_iter()
            .take(4)
            .collect();
        let grad = chi_boundary(&states, &target, &logical).unwrap();
        for _ in 0..50 {
            let dir = random_direction(&mut rng, 4, 6);
            let h = 1e-6;
            let jp = j_local_invariants(&perturb(&states, &dir, h), &target, &logical).unwrap();
            let jm = j_local_invariants(&perturb(&states, &dir, -h), &target, &logical).unwrap();
            let fd = (jp - jm) / (2.0 * h);
            let an = directional(&grad, &dir);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");
        }
    }

    #[test]
    fn direct_gradient_is_constant_and_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let full = SubspaceProjector::full(4);
        let target = TargetSpec::direct(NamedClass::Cnot.gate()).unwrap();
        let s1 = columns(&random_unitary(4, &mut rng));
        let s2 = columns(&random_unitary(4, &mut rng));
        let g1 = chi_boundary(&s1, &target, &full).unwrap();
        assert_eq!(g1, chi_boundary(&s2, &target, &full).unwrap());
        let dir = random_direction(&mut rng, 4, 4);
        let fd = (j_direct(&perturb(&s1, &dir, 1e-3), target.gate(), &full).unwrap()
            - j_direct(&perturb(&s1, &dir, -1e-3), target.gate(), &full).unwrap())
            / 2e-3;
        assert!((fd - directional(&g1, &dir)).abs() < 1e-10);
    }

    #[test]
    fn gradient_at_class_member_is_unitarity_part_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let full = SubspaceProjector::full(4);
        let target = TargetSpec::class(NamedClass::Cnot.gate()).unwrap();
        let u = random_local(&mut rng) * NamedClass::Cnot.gate().matrix() * random_local(&mut rng);
        let states = columns(&u);
        let grad = chi_boundary(&states, &target, &full).unwrap();
        for (g, s) in grad.iter().zip(&states) {
            assert!((g + s * c(0.25, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn avoid_functional() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let avoid = SubspaceProjector::new(3, vec![2]).unwrap();
        let inside = CVector::from_vec(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let outside = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let traj = TrajectorySet::new(
            grid,
            vec![
                vec![inside.clone(); 11],
                vec![outside.clone(); 11],
                vec![outside.clone(); 11],
                vec![outside.clone(); 11],
            ],
        )
        .unwrap();
        assert!((j_avoid(&traj, &avoid, 0.7) - 0.7 / 4.0).abs() < 1e-14);
        let none = TrajectorySet::new(grid, vec![vec![outside.clone(); 11]; 4]).unwrap();
        assert_eq!(j_avoid(&none, &avoid, 0.7), 0.0);
        assert_eq!(avoid_inhomogeneity(&inside, &avoid, 0.0, 4, 2.0), CVector::zeros(3));
        let eta = avoid_inhomogeneity(&inside, &avoid, 0.7, 4, 2.0);
        assert!((eta - &inside * c(0.7 / 8.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn functional_value_is_additive() {
        let v = FunctionalValue::new(0.1, 0.02, 0.003);
        assert!((v.total - (v.j_t + v.g_a + v.g_b)).abs() < 1e-12);
    }
}

//! Geometry of two-qubit gate classes.
//!
//! Two gates are locally equivalent when they differ only by single-qubit
//! operations before and after (and a global phase). Each class is labelled by
//! three Makhlin invariants `(g1, g2, g3)` or, equivalently, by a point
//! `(c_x, c_y, c_z)` of the Weyl chamber. Everything here is computed from the
//! gate written in the magic (Bell) basis, where local operations become real
//! orthogonal matrices and the canonical gate
//!
//! ```text
//! A(c) = exp[ (i/2) (c_x σx⊗σx + c_y σy⊗σy + c_z σz⊗σz) ]
//! ```
//!
//! is diagonal.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64, I};
use crate::types::GateMatrix;

/// `|det U|` below which a gate is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// Coordinates closer than this to a chamber face are snapped onto it.
const SNAP_TOL: f64 = 1e-10;

/// Makhlin invariants of a local equivalence class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalInvariants {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

impl LocalInvariants {
    pub const fn new(g1: f64, g2: f64, g3: f64) -> Self {
        Self { g1, g2, g3 }
    }

    /// Invariants of the canonical gate at `c`, by the closed trigonometric form.
    pub fn from_weyl(c: WeylPoint) -> Self {
        let (x, y, z) = (c.cx, c.cy, c.cz);
        let cc = x.cos().powi(2) * y.cos().powi(2) * z.cos().powi(2);
        let ss = x.sin().powi(2) * y.sin().powi(2) * z.sin().powi(2);
        Self {
            g1: cc - ss,
            g2: 0.25 * (2.0 * x).sin() * (2.0 * y).sin() * (2.0 * z).sin(),
            g3: 4.0 * cc - 4.0 * ss - (2.0 * x).cos() * (2.0 * y).cos() * (2.0 * z).cos(),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.g1, self.g2, self.g3]
    }
}

impl fmt::Display for LocalInvariants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            fmt_num(self.g1),
            fmt_num(self.g2),
            fmt_num(self.g3)
        )
    }
}

/// Point `(c_x, c_y, c_z)` in the cube `[0, π]³`, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylPoint {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
}

impl WeylPoint {
    pub const fn new(cx: f64, cy: f64, cz: f64) -> Self {
        Self { cx, cy, cz }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.cx, self.cy, self.cz]
    }

    /// Whether the point satisfies the canonical chamber inequalities.
    pub fn in_chamber(&self, tol: f64) -> bool {
        let Self { cx, cy, cz } = *self;
        cx <= PI + tol
            && cx >= cy - tol
            && cy >= cz - tol
            && cz >= -tol
            && cx + cy <= PI + tol
            && (cz > tol || cx <= FRAC_PI_2 + tol)
    }

    pub fn max_abs_diff(&self, other: &WeylPoint) -> f64 {
        (self.cx - other.cx)
            .abs()
            .max((self.cy - other.cy).abs())
            .max((self.cz - other.cz).abs())
    }
}

impl fmt::Display for WeylPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.4}, {:.4}, {:.4})",
            self.cx + 0.0,
            self.cy + 0.0,
            self.cz + 0.0
        )
    }
}

fn fmt_num(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

/// The magic-basis transformation `Q`.
///
/// Columns are `(|00⟩+|11⟩)/√2`, `i(|00⟩−|11⟩)/√2`, `i(|01⟩+|10⟩)/√2` and
/// `(|01⟩−|10⟩)/√2`.
pub fn bell_transform() -> GateMatrix {
    let s = FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let r = c(s, 0.0);
    let i = c(0.0, s);
    #[rustfmt::skip]
    let q = CMatrix::from_row_slice(4, 4, &[
        r,  i,  z,  z,
        z,  z,  i,  r,
        z,  z,  i, -r,
        r, -i,  z,  z,
    ]);
    GateMatrix::new(q).expect("constant matrix")
}

fn to_bell(u: &CMatrix) -> CMatrix {
    let q = bell_transform().into_matrix();
    q.adjoint() * u * q
}

fn from_bell(u: &CMatrix) -> CMatrix {
    let q = bell_transform().into_matrix();
    &q * u * q.adjoint()
}

fn check_two_qubit(u: &CMatrix) -> Result<()> {
    if u.shape() != (4, 4) {
        return Err(Error::DimensionMismatch(format!(
            "expected a 4x4 gate, got {}x{}",
            u.nrows(),
            u.ncols()
        )));
    }
    Ok(())
}

/// `m_U = U_Bᵀ U_B` with `U_B = Q† U Q`.
pub fn m_matrix(u: &GateMatrix) -> Result<GateMatrix> {
    check_two_qubit(u)?;
    let ub = to_bell(u);
    GateMatrix::new(ub.transpose() * ub)
}

/// Makhlin invariants with the determinant division, so they are insensitive to
/// a global phase.
pub fn local_invariants(u: &GateMatrix) -> Result<LocalInvariants> {
    check_two_qubit(u)?;
    let det = u.determinant();
    if det.norm() <= SINGULAR_DET {
        return Err(Error::NearSingularGate {
            det_abs: det.norm(),
        });
    }
    let m = m_matrix(u)?;
    let tr = m.trace();
    let tr_sq = (m.matrix() * m.matrix()).trace();
    let z = tr * tr / (det * 16.0);
    let w = (tr * tr - tr_sq) / (det * 4.0);
    Ok(LocalInvariants {
        g1: z.re,
        g2: z.im,
        g3: w.re,
    })
}

/// Phases `θ_k` of the canonical gate in the magic basis, `A = Q diag(e^{iθ}) Q†`.
fn canonical_phases(c: WeylPoint) -> [f64; 4] {
    let (x, y, z) = (c.cx, c.cy, c.cz);
    [
        0.5 * (x - y + z),
        0.5 * (-x + y + z),
        0.5 * (x + y - z),
        -0.5 * (x + y + z),
    ]
}

/// The canonical gate `A(c)`, built directly from its diagonal magic-basis form.
pub fn canonical_gate(c: WeylPoint) -> GateMatrix {
    let f = CMatrix::from_diagonal(&CVector::from_iterator(
        4,
        canonical_phases(c).iter().map(|&t| (I * t).exp()),
    ));
    GateMatrix::new(from_bell(&f)).expect("finite")
}

/// Map any triple onto the canonical representative inside the Weyl chamber.
///
/// Reduces each coordinate mod π, sorts descending, reflects
/// `(c_x, c_y) → (π − c_y, π − c_x)` when `c_x + c_y > π`, and on the base
/// `c_z = 0` maps `c_x → π − c_x` when `c_x > π/2`.
pub fn canonicalize(c: WeylPoint) -> WeylPoint {
    let reduce = |x: f64| {
        let r = x.rem_euclid(PI);
        if r < SNAP_TOL || PI - r < SNAP_TOL {
            0.0
        } else {
            r
        }
    };
    let mut v = [reduce(c.cx), reduce(c.cy), reduce(c.cz)];
    let sort = |v: &mut [f64; 3]| v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sort(&mut v);
    if v[0] + v[1] > PI + SNAP_TOL {
        let (a, b) = (PI - v[1], PI - v[0]);
        v[0] = a;
        v[1] = b;
        sort(&mut v);
    }
    if v[2] < SNAP_TOL {
        v[2] = 0.0;
        if v[0] > FRAC_PI_2 + SNAP_TOL {
            v[0] = PI - v[0];
            sort(&mut v);
        }
    }
    WeylPoint::new(v[0], v[1], v[2])
}

/// Spectral data of a unitary two-qubit gate normalized to `det = 1`:
/// `m = P diag(d) Pᵀ` with `P ∈ SO(4)`.
struct MagicSpectrum {
    /// `U / det(U)^{1/4}` in the magic basis.
    ub: CMatrix,
    p: DMatrix<f64>,
    d: CVector,
}

fn magic_spectrum(u: &CMatrix) -> Result<MagicSpectrum> {
    let det = u.determinant();
    if det.norm() <= SINGULAR_DET {
        return Err(Error::NearSingularGate {
            det_abs: det.norm(),
        });
    }
    let w = linalg::closest_unitary(u)?;
    let det_w = w.determinant();
    let phase = det_w.powf(0.25);
    let w = w / phase;
    let ub = to_bell(&w);
    let m = ub.transpose() * &ub;
    let (mut p, d) = linalg::diagonalize_symmetric_unitary(&m, 1e-11)?;
    if p.determinant() < 0.0 {
        p.column_mut(0).neg_mut();
    }
    Ok(MagicSpectrum { ub, p, d })
}

/// Weyl chamber coordinates of `U`, from the eigenphases of `m_U`.
///
/// An approximately unitary gate is first replaced by its closest unitary.
pub fn weyl_coordinates(u: &GateMatrix) -> Result<WeylPoint> {
    check_two_qubit(u)?;
    let spec = magic_spectrum(u)?;
    let mut lam: Vec<f64> = spec.d.iter().map(|z| z.arg()).collect();
    let total: f64 = lam.iter().sum();
    let winding = (total / (2.0 * PI)).round();
    lam[3] -= 2.0 * PI * winding;
    Ok(canonicalize(WeylPoint::new(
        0.5 * (lam[0] + lam[2]),
        0.5 * (lam[1] + lam[2]),
        0.5 * (lam[0] + lam[1]),
    )))
}

/// `d = Σ (g_i(a) − g_i(b))²`
pub fn class_distance(a: &LocalInvariants, b: &LocalInvariants) -> f64 {
    (a.g1 - b.g1).powi(2) + (a.g2 - b.g2).powi(2) + (a.g3 - b.g3).powi(2)
}

/// Named classes of the reference table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NamedClass {
    Identity,
    Cnot,
    Cphase,
    BGate,
    SqrtSwap,
    Swap,
}

impl NamedClass {
    pub const ALL: [NamedClass; 6] = [
        NamedClass::Identity,
        NamedClass::Cnot,
        NamedClass::Cphase,
        NamedClass::BGate,
        NamedClass::SqrtSwap,
        NamedClass::Swap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NamedClass::Identity => "Identity",
            NamedClass::Cnot => "CNOT",
            NamedClass::Cphase => "CPHASE",
            NamedClass::BGate => "B",
            NamedClass::SqrtSwap => "sqrtSWAP",
            NamedClass::Swap => "SWAP",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "");
        Some(match key.as_str() {
            "identity" | "id" | "1" => NamedClass::Identity,
            "cnot" | "cx" => NamedClass::Cnot,
            "cphase" | "cz" => NamedClass::Cphase,
            "b" | "bgate" => NamedClass::BGate,
            "sqrtswap" | "rootswap" => NamedClass::SqrtSwap,
            "swap" => NamedClass::Swap,
            _ => return None,
        })
    }

    /// Tabulated Weyl chamber point.
    pub fn weyl_point(&self) -> WeylPoint {
        match self {
            NamedClass::Identity => WeylPoint::new(0.0, 0.0, 0.0),
            NamedClass::Cnot | NamedClass::Cphase => WeylPoint::new(FRAC_PI_2, 0.0, 0.0),
            NamedClass::BGate => WeylPoint::new(FRAC_PI_2, FRAC_PI_4, 0.0),
            NamedClass::SqrtSwap => WeylPoint::new(FRAC_PI_4, FRAC_PI_4, FRAC_PI_4),
            NamedClass::Swap => WeylPoint::new(FRAC_PI_2, FRAC_PI_2, FRAC_PI_2),
        }
    }

    /// Tabulated invariants.
    pub fn invariants(&self) -> LocalInvariants {
        match self {
            NamedClass::Identity => LocalInvariants::new(1.0, 0.0, 3.0),
            NamedClass::Cnot | NamedClass::Cphase => LocalInvariants::new(0.0, 0.0, 1.0),
            NamedClass::BGate => LocalInvariants::new(0.0, 0.0, 0.0),
            NamedClass::SqrtSwap => LocalInvariants::new(0.0, 0.25, 0.0),
            NamedClass::Swap => LocalInvariants::new(-1.0, 0.0, -3.0),
        }
    }

    /// A representative gate of the class.
    ///
    /// Identity, CNOT, CPHASE and SWAP are the usual matrices. B and √SWAP are
    /// the canonical gates at the tabulated points; note that the √SWAP point
    /// `(π/4, π/4, π/4)` holds the square root of SWAP whose singlet eigenvalue
    /// is `−i`. The other root (singlet eigenvalue `+i`) has `g2 = −1/4` and sits
    /// at `(3π/4, π/4, π/4)`.
    pub fn gate(&self) -> GateMatrix {
        let o = c(0.0, 0.0);
        let l = c(1.0, 0.0);
        match self {
            NamedClass::Identity => GateMatrix::identity(4),
            #[rustfmt::skip]
            NamedClass::Cnot => GateMatrix::new(CMatrix::from_row_slice(4, 4, &[
                l, o, o, o,
                o, l, o, o,
                o, o, o, l,
                o, o, l, o,
            ])).unwrap(),
            NamedClass::Cphase => GateMatrix::from_diagonal(&[l, l, l, -l]),
            #[rustfmt::skip]
            NamedClass::Swap => GateMatrix::new(CMatrix::from_row_slice(4, 4, &[
                l, o, o, o,
                o, o, l, o,
                o, l, o, o,
                o, o, o, l,
            ])).unwrap(),
            NamedClass::BGate | NamedClass::SqrtSwap => canonical_gate(self.weyl_point()),
        }
    }
}

/// One row of the reference table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassEntry {
    pub class: NamedClass,
    pub weyl: WeylPoint,
    pub invariants: LocalInvariants,
}

/// Reference table of named local equivalence classes.
#[derive(Debug, Clone)]
pub struct EquivalenceClassTable {
    entries: Vec<ClassEntry>,
}

impl Default for EquivalenceClassTable {
    fn default() -> Self {
        Self::new()
    }
}

impl EquivalenceClassTable {
    pub fn new() -> Self {
        Self {
            entries: NamedClass::ALL
                .iter()
                .map(|&class| ClassEntry {
                    class,
                    weyl: class.weyl_point(),
                    invariants: class.invariants(),
                })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn get(&self, class: NamedClass) -> &ClassEntry {
        self.entries
            .iter()
            .find(|e| e.class == class)
            .expect("all classes tabulated")
    }

    /// Nearest tabulated class by [`class_distance`]; ties go to the first row.
    pub fn nearest(&self, g: &LocalInvariants) -> (NamedClass, f64) {
        self.entries
            .iter()
            .map(|e| (e.class, class_distance(g, &e.invariants)))
            .fold((NamedClass::Identity, f64::INFINITY), |best, cur| {
                if cur.1 < best.1 - 1e-15 {
                    cur
                } else {
                    best
                }
            })
    }
}

/// Result of [`extract_local_factors`]: `k1 · U · k2 ≈ O`.
#[derive(Debug, Clone)]
pub struct LocalFactorization {
    pub k1: GateMatrix,
    pub k2: GateMatrix,
    /// Canonical gate shared by the target and the implemented gate.
    pub canonical: GateMatrix,
    /// The `m`-spectrum had coinciding eigenphases (within 1e-8).
    pub degenerate: bool,
}

/// Default class-distance tolerance for [`extract_local_factors`].
pub const CLASS_MATCH_TOL: f64 = 1e-3;

/// Local operations `k1`, `k2` with `k1 · U · k2 ≈ O`.
///
/// Both `U` and `O` are brought to the canonical form by diagonalizing their
/// `m` matrices with real orthogonal eigenbases; the eigenvalues of `U` are
/// matched to those of `O` (over all orderings, and over the `±1` ambiguity of
/// the determinant normalization) before the factors are combined. The global
/// phase of `k1` is chosen so that `Tr(O† k1 U k2)` is real and positive.
pub fn extract_local_factors(
    u: &GateMatrix,
    o: &GateMatrix,
    tol: f64,
) -> Result<LocalFactorization> {
    check_two_qubit(u)?;
    check_two_qubit(o)?;
    let gu = local_invariants(u)?;
    let go = local_invariants(o)?;
    let distance = class_distance(&gu, &go);
    if distance > tol {
        return Err(Error::ClassMismatch {
            distance,
            tolerance: tol,
        });
    }
    let su = magic_spectrum(u)?;
    let so = magic_spectrum(o)?;

    let mut best: Option<(f64, f64, [usize; 4])> = None;
    for sign in [1.0, -1.0] {
        for perm in permutations4() {
            let err: f64 = (0..4)
                .map(|k| (su.d[perm[k]] * sign - so.d[k]).norm())
                .sum();
            if best.map_or(true, |b| err < b.0 - 1e-14) {
                best = Some((err, sign, perm));
            }
        }
    }
    let (_, sign, perm) = best.expect("24 permutations");

    let mut p_u = DMatrix::<f64>::zeros(4, 4);
    for k in 0..4 {
        p_u.set_column(k, &su.p.column(perm[k]));
    }
    if p_u.determinant() < 0.0 {
        p_u.column_mut(0).neg_mut();
    }
    let d_u: Vec<C64> = (0..4).map(|k| su.d[perm[k]] * sign).collect();
    // multiplying the normalized gate by i flips the sign of m
    let ub = if sign < 0.0 {
        &su.ub * I
    } else {
        su.ub.clone()
    };

    let mut f_o: Vec<C64> = so.d.iter().map(|z| z.sqrt()).collect();
    let mut f_u: Vec<C64> = d_u
        .iter()
        .zip(&f_o)
        .map(|(z, fo)| {
            let r = z.sqrt();
            if (r - fo).norm() <= (-r - fo).norm() {
                r
            } else {
                -r
            }
        })
        .collect();
    let det_f: C64 = f_o.iter().product();
    if det_f.re < 0.0 {
        f_o[0] = -f_o[0];
        f_u[0] = -f_u[0];
    }

    let degenerate = (0..4).any(|i| ((i + 1)..4).any(|j| (so.d[i] - so.d[j]).norm() < 1e-8));

    let diag = |f: &[C64]| CMatrix::from_diagonal(&CVector::from_column_slice(f));
    let pu = linalg::from_real(&p_u);
    let po = linalg::from_real(&so.p);
    let k1_u = &ub * &pu * diag(&f_u).adjoint();
    let k1_o = &so.ub * &po * diag(&f_o).adjoint();

    let k1_bell = k1_o * k1_u.transpose();
    let k2_bell = &pu * po.transpose();
    let mut k1 = from_bell(&k1_bell);
    let k2 = from_bell(&k2_bell);

    let tr = (o.adjoint() * &k1 * u.matrix() * &k2).trace();
    if tr.norm() > 0.0 {
        k1 *= tr.conj() / tr.norm();
    }
    Ok(LocalFactorization {
        k1: GateMatrix::new(k1)?,
        k2: GateMatrix::new(k2)?,
        canonical: GateMatrix::new(from_bell(&diag(&f_o)))?,
        degenerate,
    })
}

/// `E = 1 − Re Tr(O† k1 U k2) / N` (phase sensitive).
pub fn gate_error(u: &GateMatrix, o: &GateMatrix, k1: &GateMatrix, k2: &GateMatrix) -> f64 {
    let n = o.dim() as f64;
    1.0 - (o.adjoint() * k1.matrix() * u.matrix() * k2.matrix())
        .trace()
        .re
        / n
}

/// `E` after aligning the global phase of `k1 U k2` to `O`: `1 − |Tr(O† k1 U k2)| / N`.
pub fn gate_error_phase_aligned(
    u: &GateMatrix,
    o: &GateMatrix,
    k1: &GateMatrix,
    k2: &GateMatrix,
) -> f64 {
    let n = o.dim() as f64;
    1.0 - (o.adjoint() * k1.matrix() * u.matrix() * k2.matrix())
        .trace()
        .norm()
        / n
}

/// Frobenius distance of a 4×4 matrix from the nearest Kronecker product.
pub fn kronecker_residual(k: &GateMatrix) -> f64 {
    linalg::kronecker_factor(k).2
}

/// All 24 orderings of `0..4`.
fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    if p.iter().all(|&i| !std::mem::replace(&mut seen[i], true)) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

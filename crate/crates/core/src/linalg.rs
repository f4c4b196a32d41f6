//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn from_real(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| c(x, 0.0))
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `‖U†U − 1‖_max`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &CMatrix::identity(n, n))
}

/// Cofactor matrix `C` (transpose of the adjugate), so `∂ det(M)/∂M_jk = C_jk`.
///
/// Computed from minors so it stays well defined for singular `M`.
pub fn cofactor(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    if n == 1 {
        return CMatrix::from_element(1, 1, c(1.0, 0.0));
    }
    let mut out = CMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let minor = m.clone().remove_row(j).remove_column(k);
            let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
            out[(j, k)] = minor.determinant() * sign;
        }
    }
    out
}

/// Closest unitary in Frobenius norm (unitary factor of the polar decomposition).
pub fn closest_unitary(m: &CMatrix) -> Result<CMatrix> {
    let svd = m.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok(u * v_t),
        _ => Err(Error::Numerical("SVD failed".into())),
    }
}

/// `exp(−i H t)` for Hermitian `H` via its eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let eig = SymmetricEigen::new(h.clone());
    let phases = eig.eigenvalues.map(|e| (-I * (e * t)).exp());
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
        col *= *p;
    }
    scaled * v.adjoint()
}

/// `exp(−i H t)` for an arbitrary (possibly non-Hermitian) `H`, by scaling and squaring.
pub fn expm_general(h: &CMatrix, t: f64) -> CMatrix {
    (h * c(0.0, -t)).exp()
}

/// Haar-random `n × n` unitary (QR of a complex Ginibre matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) / std::f64::consts::SQRT_2
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            c(1.0, 0.0)
        };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}

/// Haar-random element of SU(n).
pub fn random_special_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let u = random_unitary(n, rng);
    let det = u.determinant();
    u * det.powf(-1.0 / n as f64)
}

/// Random local two-qubit operation `a ⊗ b` with `a, b ∈ SU(2)`.
pub fn random_local<R: Rng + ?Sized>(rng: &mut R) -> CMatrix {
    let a = random_special_unitary(2, rng);
    let b = random_special_unitary(2, rng);
    a.kronecker(&b)
}

/// Nearest Kronecker product `a ⊗ b` to a 4×4 matrix.
///
/// Uses the Van Loan rearrangement: `k_{(i1 i2),(j1 j2)} = a_{i1 j1} b_{i2 j2}`
/// becomes a rank-one 4×4 matrix whose leading singular pair gives `a` and `b`.
/// Returns `(a, b, ‖k − a⊗b‖_F)`.
pub fn kronecker_factor(k: &CMatrix) -> (CMatrix, CMatrix, f64) {
    assert_eq!(k.shape(), (4, 4));
    let mut r = CMatrix::zeros(4, 4);
    for i1 in 0..2 {
        for j1 in 0..2 {
            for i2 in 0..2 {
                for j2 in 0..2 {
                    r[(2 * i1 + j1, 2 * i2 + j2)] = k[(2 * i1 + i2, 2 * j1 + j2)];
                }
            }
        }
    }
    // leading singular pair from the Hermitian eigenproblem of R R†; the complex
    // SVD is unreliable when R is (nearly) rank one
    let eig = SymmetricEigen::new(&r * r.adjoint());
    let (imax, lmax) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc });
    let u = eig.eigenvectors.column(imax).into_owned();
    let s = lmax.max(0.0).sqrt().sqrt();
    let row = u.adjoint() * &r;
    let a = CMatrix::from_fn(2, 2, |i, j| u[2 * i + j] * s);
    let b = CMatrix::from_fn(2, 2, |i, j| if s > 0.0 { row[2 * i + j] / s } else { c(0.0, 0.0) });
    let residual = (k - a.kronecker(&b)).norm();
    (a, b, residual)
}

/// Diagonalize a complex-symmetric unitary matrix `m = P D Pᵀ` with real orthogonal `P`.
///
/// Real and imaginary parts of such an `m` are commuting real-symmetric matrices,
/// so a generic real combination of them shares their eigenbasis. Combinations are
/// drawn from a fixed sequence until the reconstruction closes to `tol`.
pub fn diagonalize_symmetric_unitary(m: &CMatrix, tol: f64) -> Result<(DMatrix<f64>, CVector)> {
    let n = m.nrows();
    let re = m.map(|z| z.re);
    let im = m.map(|z| z.im);
    let mut best: Option<(f64, DMatrix<f64>, CVector)> = None;
    for trial in 0..64 {
        let angle = 0.7853981633974483 * 0.37 + 1.234_567 * trial as f64;
        let (ca, sa) = (angle.cos(), angle.sin());
        let mix = &re * ca + &im * sa;
        let mix = (&mix + mix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(mix);
        let p = eig.eigenvectors;
        let pc = from_real(&p);
        let d_full = pc.transpose() * m * &pc;
        let d = d_full.diagonal();
        let mut recon = CMatrix::zeros(n, n);
        for k in 0..n {
            let col = pc.column(k);
            recon += col * col.transpose() * d[k];
        }
        let err = max_abs_diff(&recon, m);
        if err <= tol {
            return Ok((p, d));
        }
        if best.as_ref().map_or(true, |b| err < b.0) {
            best = Some((err, p, d));
        }
    }
    let (err, _, _) = best.expect("at least one trial");
    Err(Error::Numerical(format!(
        "could not diagonalize complex-symmetric matrix (residual {err:.3e})"
    )))
}

/// Euclidean inner product `⟨a|b⟩`.
#[inline]
pub fn braket(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

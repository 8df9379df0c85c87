//! Dense complex linear algebra for the small (M, N <= 16) matrices used
//! throughout the simulator.
//!
//! Everything here is a pure function of its inputs. Tolerances are stated
//! in Frobenius-relative terms.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used everywhere in the crate.
pub type C64 = Complex64;

/// Condition number above which a Hermitian positive definite matrix is
/// treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real_diagonal(&vec![1.0; n])
    }

    pub fn scaled_identity(n: usize, value: f64) -> Self {
        Self::from_real_diagonal(&vec![value; n])
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut out = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            out[(i, i)] = C64::new(d, 0.0);
        }
        out
    }

    /// Builds a matrix from row-major entries.
    ///
    /// # Panics
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows * cols");
        Self { rows, cols, data }
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self::from_vec(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector from entries.
    pub fn column(entries: &[C64]) -> Self {
        Self::from_vec(entries.len(), 1, entries.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate (Hermitian) transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Squared Euclidean norm of row `i`.
    pub fn row_norm_sqr(&self, i: usize) -> f64 {
        self.row(i).iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_complex(&self, factor: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// `self += factor * other`, in place.
    ///
    /// # Panics
    ///
    /// Panics on a shape mismatch.
    pub fn add_scaled(&mut self, factor: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * factor;
        }
    }

    /// `self += factor * other` for a complex factor, in place.
    pub fn add_scaled_complex(&mut self, factor: C64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_scaled_complex shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * factor;
        }
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_diagonal(&self, value: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += value;
        }
        out
    }

    /// Matrix product, checked.
    pub fn matmul(&self, rhs: &Self) -> Result<Self, MatrixError> {
        if self.cols != rhs.rows {
            return Err(MatrixError::DimensionMismatch {
                expected: format!("lhs cols {} == rhs rows", self.cols),
                got: format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lhs_row = self.row(i);
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (l, &a) in lhs_row.iter().enumerate() {
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = &rhs.data[l * rhs.cols..(l + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^H` without forming the adjoint.
    pub fn mul_adjoint(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "mul_adjoint inner dimension mismatch");
        Self::from_fn(self.rows, rhs.rows, |i, j| {
            self.row(i)
                .iter()
                .zip(rhs.row(j))
                .map(|(a, b)| a * b.conj())
                .sum()
        })
    }

    /// `self^H * rhs` without forming the adjoint.
    pub fn adjoint_mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "adjoint_mul inner dimension mismatch");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for l in 0..self.rows {
            let a_row = self.row(l);
            let b_row = rhs.row(l);
            for (i, a) in a_row.iter().enumerate() {
                let a = a.conj();
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Gram matrix `self * self^H`.
    pub fn gram(&self) -> Self {
        self.mul_adjoint(self)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `tr(self * rhs)` without forming the product.
    pub fn trace_of_product(&self, rhs: &Self) -> C64 {
        assert_eq!(self.cols, rhs.rows, "trace_of_product inner mismatch");
        assert_eq!(self.rows, rhs.cols, "trace_of_product outer mismatch");
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.rows {
            for (l, a) in self.row(i).iter().enumerate() {
                acc += a * rhs[(l, i)];
            }
        }
        acc
    }

    /// Relative Hermitian asymmetry `||A - A^H||_F / ||A||_F`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        let mut diff = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                diff += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        diff.sqrt() / norm
    }

    fn require_square(&self) -> Result<(), MatrixError> {
        if self.is_square() {
            Ok(())
        } else {
            Err(MatrixError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    /// Lower-triangular Cholesky factor `L` with `A = L L^H`.
    ///
    /// Only the lower triangle of `self` is read. Fails with
    /// [`MatrixError::Singular`] if a pivot is not strictly positive.
    pub fn cholesky(&self) -> Result<Self, MatrixError> {
        self.require_square()?;
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(MatrixError::Singular {
                    condition: f64::INFINITY,
                });
            }
            let d = d.sqrt();
            l[(j, j)] = C64::new(d, 0.0);
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Inverse of a Hermitian positive definite matrix through its Cholesky
    /// factor, with the exact 1-norm condition number `||A||_1 ||A^-1||_1`.
    ///
    /// No condition threshold is applied; callers decide.
    pub fn hermitian_pd_inverse_with_condition(&self) -> Result<(Self, f64), MatrixError> {
        let l = self.cholesky()?;
        let n = self.rows;
        // Columns of L^-1 by forward substitution, then A^-1 = L^-H L^-1.
        let mut l_inv = Self::zeros(n, n);
        for col in 0..n {
            for i in col..n {
                let mut s = if i == col {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
                for k in col..i {
                    s -= l[(i, k)] * l_inv[(k, col)];
                }
                l_inv[(i, col)] = s / l[(i, i)];
            }
        }
        let inv = l_inv.adjoint_mul(&l_inv);
        let condition = self.norm_one() * inv.norm_one();
        if !inv.is_finite() {
            return Err(MatrixError::Singular {
                condition: f64::INFINITY,
            });
        }
        Ok((inv, condition))
    }

    /// Inverse of a Hermitian positive definite matrix; rejects condition
    /// estimates above [`SINGULAR_CONDITION`].
    pub fn hermitian_pd_inverse(&self) -> Result<Self, MatrixError> {
        let (inv, condition) = self.hermitian_pd_inverse_with_condition()?;
        if condition > SINGULAR_CONDITION {
            return Err(MatrixError::Singular { condition });
        }
        Ok(inv)
    }

    /// Right pseudo-inverse `A^H (A A^H)^-1` of a wide (M <= N) matrix.
    pub fn pseudo_inverse(&self) -> Result<Self, MatrixError> {
        if self.rows > self.cols {
            return Err(MatrixError::DimensionMismatch {
                expected: "rows <= cols".into(),
                got: format!("{}x{}", self.rows, self.cols),
            });
        }
        let inv = self.gram().hermitian_pd_inverse()?;
        self.adjoint().matmul(&inv)
    }

    /// QR decomposition of a square matrix by Householder reflections.
    ///
    /// The diagonal of `R` is real and nonnegative, which makes `R` unique
    /// for full-rank input. Rank-deficient input yields zero diagonal
    /// entries.
    pub fn qr(&self) -> Result<QrDecomposition, MatrixError> {
        self.require_square()?;
        if !self.is_finite() {
            return Err(MatrixError::Singular {
                condition: f64::NAN,
            });
        }
        let n = self.rows;
        let mut r = self.clone();
        let mut q = Self::identity(n);

        for k in 0..n.saturating_sub(1) {
            let norm_x: f64 = (k..n).map(|i| r[(i, k)].norm_sqr()).sum::<f64>().sqrt();
            if norm_x == 0.0 {
                continue;
            }
            let x0 = r[(k, k)];
            let phase = if x0.norm() == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                x0 / x0.norm()
            };
            // v = x + phase * |x| e1, then H = I - 2 v v^H / (v^H v).
            let mut v: Vec<C64> = (k..n).map(|i| r[(i, k)]).collect();
            v[0] += phase * norm_x;
            let v_norm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if v_norm_sqr == 0.0 {
                continue;
            }
            let beta = 2.0 / v_norm_sqr;

            // R <- H R on rows k.., columns k..
            for j in k..n {
                let mut dot = C64::new(0.0, 0.0);
                for (idx, vi) in v.iter().enumerate() {
                    dot += vi.conj() * r[(k + idx, j)];
                }
                let dot = dot * beta;
                for (idx, vi) in v.iter().enumerate() {
                    r[(k + idx, j)] -= vi * dot;
                }
            }
            // Q <- Q H on all rows, columns k..
            for i in 0..n {
                let mut dot = C64::new(0.0, 0.0);
                for (idx, vi) in v.iter().enumerate() {
                    dot += q[(i, k + idx)] * vi;
                }
                let dot = dot * beta;
                for (idx, vi) in v.iter().enumerate() {
                    q[(i, k + idx)] -= dot * vi.conj();
                }
            }
            for i in k + 1..n {
                r[(i, k)] = C64::new(0.0, 0.0);
            }
        }

        // Rotate phases so diag(R) is real and nonnegative: R <- D^H R, Q <- Q D.
        for k in 0..n {
            let d = r[(k, k)];
            let mag = d.norm();
            if mag == 0.0 {
                continue;
            }
            let phase = d / mag;
            for j in k..n {
                r[(k, j)] *= phase.conj();
            }
            r[(k, k)] = C64::new(mag, 0.0);
            for i in 0..n {
                q[(i, k)] *= phase;
            }
        }
        Ok(QrDecomposition { q, r })
    }

    /// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
    ///
    /// Eigenvalues are returned in descending order with matching columns
    /// of the unitary factor.
    pub fn hermitian_eig(&self) -> Result<HermitianEigen, MatrixError> {
        self.require_square()?;
        let asymmetry = self.hermitian_asymmetry();
        if asymmetry > HERMITIAN_TOLERANCE {
            return Err(MatrixError::NotHermitian { asymmetry });
        }
        let n = self.rows;
        let mut a = self.clone();
        // Symmetrize away rounding noise before rotating.
        for i in 0..n {
            a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
            for j in i + 1..n {
                let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
                a[(i, j)] = avg;
                a[(j, i)] = avg.conj();
            }
        }
        let mut u = Self::identity(n);
        let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].norm_sqr())
                .sum::<f64>()
                .sqrt();
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let b = a[(p, q)];
                    let b_abs = b.norm();
                    if b_abs <= 1e-300 {
                        continue;
                    }
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let tau = (aqq - app) / (2.0 * b_abs);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let w = (b / b_abs).conj();
                    // V = diag(1, w) * [[c, s], [-s, c]] restricted to (p, q).
                    let v_pp = C64::new(c, 0.0);
                    let v_pq = C64::new(s, 0.0);
                    let v_qp = w * (-s);
                    let v_qq = w * c;

                    // A <- A V
                    for i in 0..n {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = aip * v_pp + aiq * v_qp;
                        a[(i, q)] = aip * v_pq + aiq * v_qq;
                    }
                    // A <- V^H A
                    for j in 0..n {
                        let apj = a[(p, j)];
                        let aqj = a[(q, j)];
                        a[(p, j)] = v_pp.conj() * apj + v_qp.conj() * aqj;
                        a[(q, j)] = v_pq.conj() * apj + v_qq.conj() * aqj;
                    }
                    a[(p, q)] = C64::new(0.0, 0.0);
                    a[(q, p)] = C64::new(0.0, 0.0);
                    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                    // U <- U V
                    for i in 0..n {
                        let uip = u[(i, p)];
                        let uiq = u[(i, q)];
                        u[(i, p)] = uip * v_pp + uiq * v_qp;
                        u[(i, q)] = uip * v_pq + uiq * v_qq;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
        let values = order.iter().map(|&i| a[(i, i)].re).collect();
        let vectors = Self::from_fn(n, n, |i, j| u[(i, order[j])]);
        Ok(HermitianEigen { values, vectors })
    }
}

/// Output of [`ComplexMatrix::qr`].
#[derive(Debug, Clone)]
pub struct QrDecomposition {
    /// Unitary factor.
    pub q: ComplexMatrix,
    /// Upper-triangular factor with real nonnegative diagonal.
    pub r: ComplexMatrix,
}

/// Output of [`ComplexMatrix::hermitian_eig`].
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Real eigenvalues, descending.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `U diag(lambda) U^H`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let scaled = ComplexMatrix::from_fn(self.vectors.rows(), self.vectors.cols(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        scaled.mul_adjoint(&self.vectors)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// # Panics
    ///
    /// Panics on an inner-dimension mismatch; use [`ComplexMatrix::matmul`]
    /// for the checked form.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        match self.matmul(rhs) {
            Ok(m) => m,
            Err(e) => panic!("{e}"),
        }
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn neg(self) -> ComplexMatrix {
        self.scale(-1.0)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    }

    fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        (a - b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn qr_identity() {
        let qr = ComplexMatrix::identity(4).qr().unwrap();
        assert!(rel_err(&qr.q, &ComplexMatrix::identity(4)) < 1e-15);
        assert!(rel_err(&qr.r, &ComplexMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn qr_sign_convention() {
        let a = ComplexMatrix::from_real_diagonal(&[-2.0, 3.0]);
        let qr = a.qr().unwrap();
        assert!(rel_err(&qr.q, &ComplexMatrix::from_real_diagonal(&[-1.0, 1.0])) < 1e-15);
        assert!(rel_err(&qr.r, &ComplexMatrix::from_real_diagonal(&[2.0, 3.0])) < 1e-15);
    }

    #[test]
    fn qr_random_reconstruction() {
        for seed in 0..20 {
            let a = random(4, 4, seed);
            let qr = a.qr().unwrap();
            assert!(rel_err(&(&qr.q * &qr.r), &a) < 1e-10);
            let qhq = qr.q.adjoint_mul(&qr.q);
            assert!((&qhq - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-10);
            for i in 0..4 {
                assert_eq!(qr.r[(i, i)].im, 0.0);
                assert!(qr.r[(i, i)].re >= 0.0);
                for j in 0..i {
                    assert_eq!(qr.r[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn qr_rank_deficient_gives_zero_diagonal() {
        let mut a = random(3, 3, 7);
        for i in 0..3 {
            let v = a[(i, 0)];
            a[(i, 1)] = v * 2.0;
        }
        let qr = a.qr().unwrap();
        assert!(qr.r[(1, 1)].re < 1e-12);
        assert!(rel_err(&(&qr.q * &qr.r), &a) < 1e-10);
    }

    #[test]
    fn qr_rejects_rectangular() {
        assert!(matches!(
            random(2, 3, 1).qr(),
            Err(MatrixError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn pseudo_inverse_cases() {
        let pinv = ComplexMatrix::identity(2).pseudo_inverse().unwrap();
        assert!(rel_err(&pinv, &ComplexMatrix::identity(2)) < 1e-15);

        let row = ComplexMatrix::from_real(1, 2, &[2.0, 0.0]);
        let pinv = row.pseudo_inverse().unwrap();
        assert_eq!(pinv.shape(), (2, 1));
        assert!((pinv[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(pinv[(1, 0)].norm() < 1e-15);

        let a = random(4, 6, 3);
        let pinv = a.pseudo_inverse().unwrap();
        assert!((&(&a * &pinv) - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-9);
        assert!(rel_err(&(&(&a * &pinv) * &a), &a) < 1e-8);
    }

    #[test]
    fn pseudo_inverse_rejects_singular() {
        let a = ComplexMatrix::from_real(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(a.pseudo_inverse(), Err(MatrixError::Singular { .. })));
        assert!(matches!(
            random(3, 2, 1).pseudo_inverse(),
            Err(MatrixError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn eig_diagonal_and_scalar() {
        let e = ComplexMatrix::from_real_diagonal(&[1.0, 3.0]).hermitian_eig().unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].norm() - 1.0).abs() < 1e-15);

        let e = ComplexMatrix::scaled_identity(5, 2.5).hermitian_eig().unwrap();
        assert!(e.values.iter().all(|&l| l == 2.5));
    }

    #[test]
    fn eig_wishart_reconstruction() {
        for seed in 0..20 {
            let g = random(4, 6, 100 + seed);
            let a = g.gram();
            let e = a.hermitian_eig().unwrap();
            assert!(e.values.iter().all(|&l| l > 0.0));
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            assert!(rel_err(&e.reconstruct(), &a) < 1e-9);
            let sum: f64 = e.values.iter().sum();
            assert!((sum - a.trace().re).abs() / a.trace().re < 1e-9);
            let uhu = e.vectors.adjoint_mul(&e.vectors);
            assert!((&uhu - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        assert!(matches!(
            random(3, 3, 9).hermitian_eig(),
            Err(MatrixError::NotHermitian { .. })
        ));
    }

    #[test]
    fn hermitian_inverse_matches_identity() {
        let a = random(4, 6, 11).gram().add_diagonal(0.5);
        let (inv, cond) = a.hermitian_pd_inverse_with_condition().unwrap();
        assert!((&(&a * &inv) - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-10);
        assert!(cond >= 1.0);
    }
}

//! Small dense complex linear algebra and the global tolerance policy.
//!
//! Everything here is sized for the handful-of-levels systems the rest of
//! the crate simulates: matrices are row-major `Vec<Complex64>` and the SVD
//! is a one-sided Jacobi sweep, which is accurate to a few ulps on inputs of
//! this size.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Unit-modulus complex number `e^{i angle}`.
#[inline]
pub fn phase(angle: f64) -> C64 {
    C64::from_polar(1.0, angle)
}

/// Numerical thresholds shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    pub tol_norm: f64,
    pub tol_ortho: f64,
    /// Allowed spread of singular values for a spectrum to count as flat.
    pub tol_flat: f64,
    pub tol_phase: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            tol_norm: 1e-10,
            tol_ortho: 1e-10,
            tol_flat: 1e-8,
            tol_phase: 1e-9,
        }
    }
}

impl TolerancePolicy {
    pub fn new(tol_norm: f64, tol_ortho: f64, tol_flat: f64, tol_phase: f64) -> Result<Self> {
        let policy = Self {
            tol_norm,
            tol_ortho,
            tol_flat,
            tol_phase,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("tol_norm", self.tol_norm),
            ("tol_ortho", self.tol_ortho),
            ("tol_flat", self.tol_flat),
            ("tol_phase", self.tol_phase),
        ] {
            if !(value > 0.0 && value < 1e-3) {
                return Err(Error::InvalidTolerance { name, value });
            }
        }
        Ok(())
    }
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("matrix"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).ok_or(Error::Empty("matrix"))?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    /// Stacks equally sized vectors as the columns of a matrix.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let rows = columns.first().map(Vec::len).ok_or(Error::Empty("matrix"))?;
        let mut m = Self::zeros(rows.max(1), columns.len());
        for (c, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    found: col.len(),
                });
            }
            for (r, &z) in col.iter().enumerate() {
                m[(r, c)] = z;
            }
        }
        if rows == 0 {
            return Err(Error::Empty("matrix"));
        }
        if m.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<C64>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] += a * rhs.data[k * rhs.cols + c];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Top-left `rows × cols` block.
    pub fn block(&self, rows: usize, cols: usize) -> Self {
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out[(r, c)] = self[(r, c)];
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        self.diagonal().into_iter().sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute entrywise difference; `INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |A†A - I|`, the deviation of the columns from orthonormality.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.adjoint().matmul(self).expect("A†A is always conformable");
        gram.max_abs_diff(&Self::identity(self.cols))
    }

    /// `max |U U† - I|` together with `max |U†U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let left = self.matmul(&self.adjoint()).expect("square");
        let right = self.adjoint().matmul(self).expect("square");
        let id = Self::identity(self.rows);
        left.max_abs_diff(&id).max(right.max_abs_diff(&id))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in addition");
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
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in subtraction");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("shape mismatch in multiplication")
    }
}

/// A vector of amplitudes with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    norm: f64,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Empty("state"));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        let norm = norm(&amplitudes);
        Ok(Self { amplitudes, norm })
    }

    /// Builds the state and rescales it to unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let state = Self::new(amplitudes)?;
        if state.norm == 0.0 {
            return Err(Error::NotNormalized { norm: 0.0 });
        }
        Ok(state.scaled(C64::new(1.0 / state.norm, 0.0)))
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// The computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index out of range");
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Self {
            amplitudes,
            norm: 1.0,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_normalized(&self, policy: &TolerancePolicy) -> bool {
        (self.norm - 1.0).abs() <= policy.tol_norm
    }

    pub fn require_normalized(&self, policy: &TolerancePolicy) -> Result<()> {
        if self.is_normalized(policy) {
            Ok(())
        } else {
            Err(Error::NotNormalized { norm: self.norm })
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(inner(&self.amplitudes, &other.amplitudes))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|z| z * factor).collect(),
            norm: self.norm * factor.norm(),
        }
    }

    pub fn transformed(&self, op: &ComplexMatrix) -> Result<Self> {
        Self::new(op.apply(&self.amplitudes)?)
    }

    /// Largest absolute amplitude difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `Σ conj(a_i) b_i`.
#[inline]
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Whether `orthonormalize` must keep every input direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// Drop dependent vectors silently.
    Numerical,
    /// Fail with `RankDeficient` if any input is dependent on earlier ones.
    Exact,
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
///
/// Returns an `N × r` matrix whose columns are orthonormal and span the
/// inputs; columns follow the order in which independent directions first
/// appear. A residual below `tol_ortho` times the largest input norm counts
/// as dependent.
pub fn orthonormalize(
    vectors: &[StateVector],
    policy: &TolerancePolicy,
    mode: RankMode,
) -> Result<ComplexMatrix> {
    let first = vectors.first().ok_or(Error::Empty("vector list"))?;
    let dim = first.dim();
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.dim(),
        });
    }
    let scale = vectors.iter().map(StateVector::norm).fold(0.0, f64::max);
    let threshold = policy.tol_ortho * scale;

    let mut basis: Vec<Vec<C64>> = Vec::new();
    for v in vectors {
        let mut w = v.amplitudes().to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c = inner(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let n = norm(&w);
        if n > threshold && n > 0.0 {
            w.iter_mut().for_each(|z| *z /= n);
            basis.push(w);
        }
    }

    if mode == RankMode::Exact && basis.len() < vectors.len() {
        return Err(Error::RankDeficient {
            rank: basis.len(),
            requested: vectors.len(),
        });
    }
    if basis.is_empty() {
        return Err(Error::RankDeficient {
            rank: 0,
            requested: vectors.len(),
        });
    }
    ComplexMatrix::from_columns(&basis)
}

/// Thin singular value decomposition `m = left · diag(values) · right†`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub left: ComplexMatrix,
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    pub right: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let sigma: Vec<C64> = self
            .singular_values
            .iter()
            .map(|&s| C64::new(s, 0.0))
            .collect();
        let ls = &self.left * &ComplexMatrix::from_diagonal(&sigma);
        &ls * &self.right.adjoint()
    }

    /// Number of singular values above `rel_tol` times the largest.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > rel_tol * top && s > 0.0)
            .count()
    }
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// For an `m × n` input with `p = min(m, n)` the result has `left: m × p`,
/// `right: n × p`, and `p` singular values.
pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if m.rows() < m.cols() {
        let t = svd_tall(&m.adjoint())?;
        return Ok(Svd {
            left: t.right,
            singular_values: t.singular_values,
            right: t.left,
        });
    }
    svd_tall(m)
}

fn svd_tall(m: &ComplexMatrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    let mut a = m.columns();
    let mut v = ComplexMatrix::identity(n).columns();

    // Columns below this squared norm are numerically zero; rotating them
    // against the rest only shuffles rounding noise and never settles.
    let negligible = {
        let total: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum();
        total * f64::EPSILON * f64::EPSILON
    };
    // A rotation itself leaves cosines of a few ulps behind, so demanding
    // less than that never terminates.
    let tol = f64::EPSILON * rows.max(2) as f64;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha: f64 = a[i].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = a[j].iter().map(|z| z.norm_sqr()).sum();
                let gamma = inner(&a[i], &a[j]);
                let g = gamma.norm();
                if g == 0.0
                    || g <= tol * (alpha * beta).sqrt()
                    || alpha.min(beta) <= negligible
                {
                    continue;
                }
                rotated = true;
                let chi = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // Right-multiply by [[c, s·χ], [-s·χ̄, c]] acting on columns (i, j).
                rotate(&mut a, i, j, c, s, chi);
                rotate(&mut v, i, j, c, s, chi);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<(f64, usize)> = a.iter().enumerate().map(|(i, col)| (norm(col), i)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let top = order.first().map(|o| o.0).unwrap_or(0.0);
    let floor = top * (rows.max(n) as f64) * f64::EPSILON;
    let mut left_cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut right_cols = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut deferred = Vec::new();
    for &(s, idx) in &order {
        values.push(s);
        right_cols.push(v[idx].clone());
        if s > floor && s > 0.0 {
            left_cols.push(a[idx].iter().map(|z| z / s).collect());
        } else {
            deferred.push(left_cols.len());
            left_cols.push(Vec::new());
        }
    }
    // Complete left vectors for (numerically) zero singular values.
    for slot in deferred {
        let known: Vec<Vec<C64>> = left_cols.iter().filter(|c| !c.is_empty()).cloned().collect();
        left_cols[slot] = complete_basis_vector(&known, rows);
    }

    Ok(Svd {
        left: ComplexMatrix::from_columns(&left_cols)?,
        singular_values: values,
        right: ComplexMatrix::from_columns(&right_cols)?,
    })
}

fn rotate(cols: &mut [Vec<C64>], i: usize, j: usize, c: f64, s: f64, chi: C64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (ci, cj) = (&mut lo[i], &mut hi[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = xi * c - yj * chi.conj() * s;
        *y = xi * chi * s + yj * c;
    }
}

/// A unit vector orthogonal to every vector in `known`.
fn complete_basis_vector(known: &[Vec<C64>], dim: usize) -> Vec<C64> {
    let mut best: Option<(f64, Vec<C64>)> = None;
    for e in 0..dim {
        let mut w = vec![ZERO; dim];
        w[e] = ONE;
        for _ in 0..2 {
            for q in known {
                let c = inner(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let n = norm(&w);
        if best.as_ref().is_none_or(|b| n > b.0) {
            best = Some((n, w));
        }
    }
    let (n, mut w) = best.expect("dim >= 1");
    w.iter_mut().for_each(|z| *z /= n);
    w
}

/// Complex vector with independent standard normal real and imaginary parts.
pub fn gaussian_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<C64> {
    (0..dim)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Haar-random normalized state.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    loop {
        if let Ok(s) = StateVector::normalized(gaussian_vector(dim, rng)) {
            return s;
        }
    }
}

/// Haar-random `n × n` unitary.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let policy = TolerancePolicy::default();
    loop {
        let vectors: Vec<StateVector> = (0..n)
            .map(|_| StateVector::new(gaussian_vector(n, rng)).expect("finite"))
            .collect();
        if let Ok(q) = orthonormalize(&vectors, &policy, RankMode::Exact) {
            return q;
        }
    }
}

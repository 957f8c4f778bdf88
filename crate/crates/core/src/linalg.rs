//! Dense complex linear algebra sized for few-qubit operators.
//!
//! Matrices are square, row-major `Vec<Complex64>` with explicit dimension.
//! The eigensolver is a cyclic Jacobi iteration specialized to Hermitian
//! input; for the dimensions this crate targets (at most 64) it is simple,
//! accurate, and has no external dependencies. The Pauli string basis is
//! generated in lexicographic label order (`I < X < Y < Z`, leftmost qubit
//! most significant) and carries a sparse one-entry-per-row table alongside
//! the dense matrices.

use num_complex::Complex;
use thiserror::Error;

pub type Complex64 = Complex<f64>;

/// Largest matrix dimension the eigensolver and Pauli helpers accept.
pub const MAX_DIM: usize = 64;

/// Most qubits a Pauli basis may span.
pub const MAX_QUBITS: usize = 6;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian: {0}")]
    Hermiticity(String),
    #[error("outside supported scope: {0}")]
    Scope(String),
}

/// Square complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from rows of complex entries. Panics if the rows do
    /// not form a square matrix.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "rows must form a square matrix");
            data.extend_from_slice(row);
        }
        Self { dim, data }
    }

    /// Builds a real-valued matrix from rows of `f64`.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "rows must form a square matrix");
            data.extend(row.iter().map(|&x| Complex64::new(x, 0.0)));
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_dim(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            dim: self.dim,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_dim(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            dim: self.dim,
            data,
        })
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.data[i * n + k];
                if aik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += aik * other.data[k * n + j];
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim {
            acc += self.data[i * self.dim + i];
        }
        acc
    }

    /// Squared Frobenius norm, the sum of squared entry magnitudes.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest entry magnitude of `self - self.dagger()`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = self.data[i * n + j] - self.data[j * n + i].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    fn check_same_dim(&self, other: &Self) -> Result<(), LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::Dimension(format!(
                "operands are {}x{} and {}x{}",
                self.dim, self.dim, other.dim, other.dim
            )));
        }
        Ok(())
    }
}

/// Kronecker product; the left factor is the most significant one.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim, b.dim);
    let n = na * nb;
    let mut out = ComplexMatrix::zeros(n);
    for ia in 0..na {
        for ja in 0..na {
            let f = a.get(ia, ja);
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for ib in 0..nb {
                for jb in 0..nb {
                    out.set(ia * nb + ib, ja * nb + jb, f * b.get(ib, jb));
                }
            }
        }
    }
    out
}

/// `[a, b] = a b - b a`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let ab = a.matmul(b)?;
    let ba = b.matmul(a)?;
    ab.sub(&ba)
}

/// Eigenvalues in ascending order with the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

const JACOBI_SWEEP_CAP: usize = 128;

fn off_diagonal_norm(m: &ComplexMatrix) -> f64 {
    let n = m.dim;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m.data[i * n + j].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Diagonalizes a Hermitian matrix by cyclic Jacobi rotations.
///
/// The input must be Hermitian to within `1e-10` in entry magnitude and no
/// larger than [`MAX_DIM`]. Iteration stops once the off-diagonal Frobenius
/// mass drops below `1e-14` times the Frobenius norm of the input. Columns of
/// the returned matrix are the eigenvectors, orthonormal to machine accuracy,
/// ordered by ascending eigenvalue.
pub fn hermitian_eigensystem(a: &ComplexMatrix) -> Result<Eigensystem, LinalgError> {
    let n = a.dim;
    if n > MAX_DIM {
        return Err(LinalgError::Scope(format!(
            "eigensolver supports dimension up to {MAX_DIM}, got {n}"
        )));
    }
    let deviation = a.hermiticity_deviation();
    if deviation > 1e-10 {
        return Err(LinalgError::Hermiticity(format!(
            "largest |a - a^dagger| entry is {deviation:.3e}"
        )));
    }

    // Work on the explicitly symmetrized copy so the tiny allowed deviation
    // cannot drift through the rotations.
    let mut w = ComplexMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let avg = 0.5 * (a.get(i, j) + a.get(j, i).conj());
            w.set(i, j, avg);
        }
    }
    let mut v = ComplexMatrix::identity(n);
    let target = 1e-14 * a.frobenius_norm_sq().sqrt();

    for _sweep in 0..JACOBI_SWEEP_CAP {
        if off_diagonal_norm(&w) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                let r = apq.norm();
                if r < 1e-300 {
                    continue;
                }
                let app = w.get(p, p).re;
                let aqq = w.get(q, q).re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sigma = apq * (s / r);

                // Column rotation on w and v, then the conjugate row rotation
                // on w; together they apply a unitary similarity transform
                // that zeroes the (p, q) pair.
                for k in 0..n {
                    let wkp = w.get(k, p);
                    let wkq = w.get(k, q);
                    w.set(k, p, wkp * c - wkq * sigma.conj());
                    w.set(k, q, wkp * sigma + wkq * c);
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * c - vkq * sigma.conj());
                    v.set(k, q, vkp * sigma + vkq * c);
                }
                for k in 0..n {
                    let wpk = w.get(p, k);
                    let wqk = w.get(q, k);
                    w.set(p, k, wpk * c - wqk * sigma);
                    w.set(q, k, wpk * sigma.conj() + wqk * c);
                }
                w.set(p, q, Complex64::new(0.0, 0.0));
                w.set(q, p, Complex64::new(0.0, 0.0));
                let wpp = w.get(p, p);
                let wqq = w.get(q, q);
                w.set(p, p, Complex64::new(wpp.re, 0.0));
                w.set(q, q, Complex64::new(wqq.re, 0.0));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        w.get(i, i)
            .re
            .partial_cmp(&w.get(j, j).re)
            .expect("eigenvalues are finite")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| w.get(i, i).re).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v.get(row, src));
        }
    }
    Ok(Eigensystem {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// One nonzero entry of a Pauli string row: the column index and the phase
/// exponent `e` meaning the entry value is `i^e`.
pub type SparseEntry = (usize, u8);

/// The `4^n` Pauli strings on `n` qubits.
///
/// Strings are ordered lexicographically by label with `I < X < Y < Z` and
/// the leftmost character acting on the most significant qubit, so for two
/// qubits the order runs `II, IX, IY, IZ, XI, ..., ZZ`. Each string is kept
/// both as a dense matrix and as a sparse table with exactly one entry per
/// row, the latter being what the loss evaluation uses.
#[derive(Debug, Clone)]
pub struct PauliBasis {
    n_qubits: usize,
    labels: Vec<String>,
    matrices: Vec<ComplexMatrix>,
    sites: Vec<Vec<SparseEntry>>,
}

impl PauliBasis {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrices(&self) -> &[ComplexMatrix] {
        &self.matrices
    }

    /// Sparse rows of string `k`: `sites()[k][row] = (col, phase_exponent)`.
    pub fn sites(&self) -> &[Vec<SparseEntry>] {
        &self.sites
    }
}

/// Materializes the phase `i^e`.
pub fn phase_value(exponent: u8) -> Complex64 {
    match exponent % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn single_qubit_pauli(which: usize) -> ComplexMatrix {
    let z = |re: f64, im: f64| Complex64::new(re, im);
    match which {
        0 => ComplexMatrix::from_rows(&[
            vec![z(1.0, 0.0), z(0.0, 0.0)],
            vec![z(0.0, 0.0), z(1.0, 0.0)],
        ]),
        1 => ComplexMatrix::from_rows(&[
            vec![z(0.0, 0.0), z(1.0, 0.0)],
            vec![z(1.0, 0.0), z(0.0, 0.0)],
        ]),
        2 => ComplexMatrix::from_rows(&[
            vec![z(0.0, 0.0), z(0.0, -1.0)],
            vec![z(0.0, 1.0), z(0.0, 0.0)],
        ]),
        _ => ComplexMatrix::from_rows(&[
            vec![z(1.0, 0.0), z(0.0, 0.0)],
            vec![z(0.0, 0.0), z(-1.0, 0.0)],
        ]),
    }
}

/// Builds the Pauli basis on `n_qubits` qubits, supported for 1 through
/// [`MAX_QUBITS`].
pub fn pauli_basis(n_qubits: usize) -> Result<PauliBasis, LinalgError> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(LinalgError::Scope(format!(
            "pauli_basis supports 1 to {MAX_QUBITS} qubits, got {n_qubits}"
        )));
    }
    let count = 1usize << (2 * n_qubits);
    let dim = 1usize << n_qubits;
    let singles: Vec<ComplexMatrix> = (0..4).map(single_qubit_pauli).collect();
    let letters = ['I', 'X', 'Y', 'Z'];

    let mut labels = Vec::with_capacity(count);
    let mut matrices = Vec::with_capacity(count);
    let mut sites = Vec::with_capacity(count);
    for code in 0..count {
        let mut digits = vec![0usize; n_qubits];
        let mut rest = code;
        for slot in (0..n_qubits).rev() {
            digits[slot] = rest % 4;
            rest /= 4;
        }
        labels.push(digits.iter().map(|&d| letters[d]).collect::<String>());

        let mut dense = single_qubit_pauli(digits[0]);
        for &d in &digits[1..] {
            dense = kron(&dense, &singles[d]);
        }
        matrices.push(dense);

        // Every string has exactly one nonzero per row; track its column and
        // phase exponent directly from the per-qubit action.
        let mut rows = Vec::with_capacity(dim);
        for row in 0..dim {
            let mut col = 0usize;
            let mut exponent = 0u8;
            for (slot, &d) in digits.iter().enumerate() {
                let bit = (row >> (n_qubits - 1 - slot)) & 1;
                let (col_bit, e) = match d {
                    0 => (bit, 0),
                    1 => (1 - bit, 0),
                    2 => (1 - bit, if bit == 0 { 3 } else { 1 }),
                    _ => (bit, if bit == 0 { 0 } else { 2 }),
                };
                col = (col << 1) | col_bit;
                exponent = (exponent + e) % 4;
            }
            rows.push((col, exponent));
        }
        sites.push(rows);
    }
    Ok(PauliBasis {
        n_qubits,
        labels,
        matrices,
        sites,
    })
}

/// Projects a matrix onto the Pauli basis: `c_k = Tr(P_k m) / 2^n`.
///
/// The expansion is exact for every complex matrix of the right dimension;
/// Hermitian input yields real coefficients up to round-off.
pub fn pauli_decompose(
    m: &ComplexMatrix,
    basis: &PauliBasis,
) -> Result<Vec<Complex64>, LinalgError> {
    if m.dim() != basis.dim() {
        return Err(LinalgError::Dimension(format!(
            "matrix is {}x{} but the basis acts on dimension {}",
            m.dim(),
            m.dim(),
            basis.dim()
        )));
    }
    let dim = basis.dim();
    let norm = 1.0 / dim as f64;
    let mut coefficients = Vec::with_capacity(basis.len());
    for rows in basis.sites() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (row, &(col, exponent)) in rows.iter().enumerate() {
            // Tr(P m) picks up P[row][col] * m[col][row].
            acc += phase_value(exponent) * m.get(col, row);
        }
        coefficients.push(acc * norm);
    }
    Ok(coefficients)
}

/// Rebuilds the matrix `sum_k c_k P_k` from Pauli coefficients.
pub fn pauli_reconstruct(
    coefficients: &[Complex64],
    basis: &PauliBasis,
) -> Result<ComplexMatrix, LinalgError> {
    if coefficients.len() != basis.len() {
        return Err(LinalgError::Dimension(format!(
            "got {} coefficients for a basis of {} strings",
            coefficients.len(),
            basis.len()
        )));
    }
    let dim = basis.dim();
    let mut out = ComplexMatrix::zeros(dim);
    for (c, rows) in coefficients.iter().zip(basis.sites()) {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (row, &(col, exponent)) in rows.iter().enumerate() {
            let cur = out.get(row, col);
            out.set(row, col, cur + c * phase_value(exponent));
        }
    }
    Ok(out)
}

//! Dense complex linear algebra for few-qubit systems.
//!
//! Basis ordering is fixed throughout the crate: qubit 0 is the leftmost
//! tensor factor and the most significant bit of a basis index. Registers
//! of a multi-copy state are laid out left to right, with the control qubit
//! (when present) in front of register 0.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest register (in qubits) any dense operator may act on.
pub const MAX_QUBITS: usize = 12;
/// Tolerance for algebraic identities (Hermiticity, trace, unitarity).
pub const ALGEBRA_TOL: f64 = 1e-10;
/// Slack allowed below zero for eigenvalues and probabilities.
pub const PSD_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Bit of `qubit` in a basis index over `n_qubits` qubits.
#[inline]
pub fn bit_of(index: usize, n_qubits: usize, qubit: usize) -> u8 {
    ((index >> (n_qubits - 1 - qubit)) & 1) as u8
}

/// Basis index from bits listed qubit 0 first.
pub fn index_of(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
}

fn log2_exact(dim: usize) -> Option<usize> {
    (dim.is_power_of_two()).then(|| dim.trailing_zeros() as usize)
}

/// Square dense complex matrix, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|col| {
                    let z = self[(r, col)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, col): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + col]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, col): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + col]
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        ComplexMatrix { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "{} entries cannot form a {dim}x{dim} matrix",
                data.len()
            )));
        }
        Ok(ComplexMatrix { dim, data })
    }

    pub fn from_real(dim: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(dim, data.iter().map(|&x| c(x, 0.0)).collect())
    }

    /// Outer product |ψ⟩⟨φ|.
    pub fn outer(psi: &[C64], phi: &[C64]) -> Self {
        let dim = psi.len();
        assert_eq!(dim, phi.len(), "outer product of mismatched vectors");
        let mut m = Self::zeros(dim);
        for (r, a) in psi.iter().enumerate() {
            for (col, b) in phi.iter().enumerate() {
                m[(r, col)] = a * b.conj();
            }
        }
        m
    }

    pub fn projector(psi: &[C64]) -> Self {
        Self::outer(psi, psi)
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// Number of qubits when the dimension is a power of two.
    pub fn n_qubits(&self) -> Option<usize> {
        log2_exact(self.dim)
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for r in 0..self.dim {
            for col in 0..self.dim {
                m[(col, r)] = self[(r, col)].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        ComplexMatrix { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, other.dim, "matmul of mismatched dimensions");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            let row = &self.data[r * n..(r + 1) * n];
            let dst = &mut out[r * n..(r + 1) * n];
            for (k, a) in row.iter().enumerate() {
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let src = &other.data[k * n..(k + 1) * n];
                for (d, b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        ComplexMatrix { dim: n, data: out }
    }

    /// Kronecker product with `self` as the left (more significant) factor.
    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let (da, db) = (self.dim, other.dim);
        let dim = da * db;
        let mut m = Self::zeros(dim);
        for ar in 0..da {
            for ac in 0..da {
                let a = self[(ar, ac)];
                if a == ZERO {
                    continue;
                }
                for br in 0..db {
                    for bc in 0..db {
                        m[(ar * db + br, ac * db + bc)] = a * other[(br, bc)];
                    }
                }
            }
        }
        m
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim, "vector length does not match matrix");
        (0..self.dim)
            .map(|r| self.data[r * self.dim..(r + 1) * self.dim].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for col in r..self.dim {
                worst = worst.max((self[(r, col)] - self[(col, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// max |G†G − I|.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.dim))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// (A + A†)/2; removes round-off anti-Hermitian residue.
    pub fn hermitian_part(&self) -> Self {
        let mut m = self.clone();
        for r in 0..self.dim {
            for col in r..self.dim {
                let avg = (self[(r, col)] + self[(col, r)].conj()) * 0.5;
                m[(r, col)] = avg;
                m[(col, r)] = avg.conj();
            }
        }
        m
    }

    /// Whether all eigenvalues of this Hermitian matrix are ≥ `-slack`.
    ///
    /// Runs a Cholesky factorisation of `A + slack·I`; any non-positive
    /// pivot means an eigenvalue below `-slack`.
    pub fn is_psd(&self, slack: f64) -> bool {
        let n = self.dim;
        let mut l = vec![ZERO; n * n];
        for j in 0..n {
            let mut d = self[(j, j)].re + slack;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if d <= 0.0 || !d.is_finite() {
                return false;
            }
            let pivot = d.sqrt();
            l[j * n + j] = c(pivot, 0.0);
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / pivot;
            }
        }
        true
    }

    /// Conjugate by a single-qubit unitary on `qubit`: ρ ↦ UρU† with
    /// U = I ⊗ … ⊗ u ⊗ … ⊗ I. Costs O(dim²).
    pub fn conjugate_local(&mut self, qubit: usize, u: &Mat2) {
        let n = self.n_qubits().expect("local conjugation needs a qubit register");
        let stride = 1usize << (n - 1 - qubit);
        let dim = self.dim;
        let [u00, u01, u10, u11] = u.0;
        // left multiply
        for col in 0..dim {
            for i0 in (0..dim).filter(|i| i & stride == 0) {
                let i1 = i0 | stride;
                let (a, b) = (self[(i0, col)], self[(i1, col)]);
                self[(i0, col)] = u00 * a + u01 * b;
                self[(i1, col)] = u10 * a + u11 * b;
            }
        }
        // right multiply by U†
        let (c00, c01, c10, c11) = (u00.conj(), u01.conj(), u10.conj(), u11.conj());
        for r in 0..dim {
            for j0 in (0..dim).filter(|j| j & stride == 0) {
                let j1 = j0 | stride;
                let (a, b) = (self[(r, j0)], self[(r, j1)]);
                self[(r, j0)] = a * c00 + b * c01;
                self[(r, j1)] = a * c10 + b * c11;
            }
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

/// Kronecker product; qubit 0 of the result is qubit 0 of `a`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

/// Stack-allocated 2×2 complex matrix, row-major `[m00, m01, m10, m11]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([ONE, ZERO, ZERO, ONE]);

    pub const fn new(m00: C64, m01: C64, m10: C64, m11: C64) -> Self {
        Mat2([m00, m01, m10, m11])
    }

    pub fn real(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Mat2([c(m00, 0.0), c(m01, 0.0), c(m10, 0.0), c(m11, 0.0)])
    }

    #[inline]
    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    pub fn adjoint(&self) -> Mat2 {
        let [a, b, cc, d] = self.0;
        Mat2([a.conj(), cc.conj(), b.conj(), d.conj()])
    }

    pub fn scale(&self, s: C64) -> Mat2 {
        Mat2(self.0.map(|z| z * s))
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        ComplexMatrix { dim: 2, data: self.0.to_vec() }
    }

    pub fn from_matrix(m: &ComplexMatrix) -> Result<Mat2> {
        if m.dim() != 2 {
            return Err(Error::Dimension(format!("expected 2x2, got {0}x{0}", m.dim())));
        }
        Ok(Mat2([m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]))
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [self.0[0] * v[0] + self.0[1] * v[1], self.0[2] * v[0] + self.0[3] * v[1]]
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, rhs: Mat2) -> Mat2 {
        let [a, b, cc, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Mat2([a * e + b * g, a * f + b * h, cc * e + d * g, cc * f + d * h])
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2], self.0[3] + rhs.0[3]])
    }
}

pub mod gates {
    use super::*;

    pub fn pauli_x() -> Mat2 {
        Mat2::real(0.0, 1.0, 1.0, 0.0)
    }

    pub fn pauli_y() -> Mat2 {
        Mat2::new(ZERO, -I, I, ZERO)
    }

    pub fn pauli_z() -> Mat2 {
        Mat2::real(1.0, 0.0, 0.0, -1.0)
    }

    pub fn hadamard() -> Mat2 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Mat2::real(s, s, s, -s)
    }

    pub fn s_dagger() -> Mat2 {
        Mat2::new(ONE, ZERO, ZERO, -I)
    }

    /// Phase gate e^{-iθZ/2}.
    pub fn phase(theta: f64) -> Mat2 {
        Mat2::new(C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0))
    }

    /// Tensor product of single-qubit operators, qubit 0 first.
    pub fn product(ops: &[Mat2]) -> ComplexMatrix {
        ops.iter().fold(ComplexMatrix::identity(1), |acc, op| acc.kron(&op.to_matrix()))
    }
}

/// Computational basis vector |index⟩ on `n_qubits` qubits.
pub fn ket(index: usize, n_qubits: usize) -> Vec<C64> {
    let mut v = vec![ZERO; 1 << n_qubits];
    v[index] = ONE;
    v
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

fn check_register(qubits: usize) -> Result<()> {
    if qubits > MAX_QUBITS {
        return Err(Error::RegisterTooLarge { qubits, max: MAX_QUBITS });
    }
    Ok(())
}

fn shifted_index(index: usize, k: usize, qubits_per_register: usize) -> usize {
    // register j moves to register j+1 (mod k); register 0 is most significant
    let mask = (1usize << qubits_per_register) - 1;
    let mut out = 0;
    for j in 0..k {
        let src_shift = (k - 1 - j) * qubits_per_register;
        let content = (index >> src_shift) & mask;
        let dst = (j + 1) % k;
        out |= content << ((k - 1 - dst) * qubits_per_register);
    }
    out
}

/// Cyclic SHIFT permutation on `k` registers: the content of register j
/// moves to register j+1 (mod k). With this direction
/// Tr[S (A₁⊗…⊗A_k)] = Tr[A_k ⋯ A₁].
pub fn shift_operator(k: usize, qubits_per_register: usize) -> Result<ComplexMatrix> {
    if k == 0 || qubits_per_register == 0 {
        return Err(Error::Config("shift needs k ≥ 1 and at least one qubit per register".into()));
    }
    check_register(k * qubits_per_register)?;
    let dim = 1usize << (k * qubits_per_register);
    let mut m = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        m[(shifted_index(i, k, qubits_per_register), i)] = ONE;
    }
    Ok(m)
}

/// |0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ S_k with the control as qubit 0. For k = 2 on
/// single-qubit registers this is the Fredkin gate.
pub fn controlled_shift(k: usize, qubits_per_register: usize) -> Result<ComplexMatrix> {
    if k == 0 || qubits_per_register == 0 {
        return Err(Error::Config("shift needs k ≥ 1 and at least one qubit per register".into()));
    }
    check_register(k * qubits_per_register + 1)?;
    let half = 1usize << (k * qubits_per_register);
    let mut m = ComplexMatrix::zeros(2 * half);
    for i in 0..half {
        m[(i, i)] = ONE;
        m[(half + shifted_index(i, k, qubits_per_register), half + i)] = ONE;
    }
    Ok(m)
}

/// Hermitian, PSD, unit-trace matrix over `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    n_qubits: usize,
}

impl DensityMatrix {
    /// Validates Hermiticity and trace (1e-10) and eigenvalues (≥ −1e-9).
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let n_qubits = matrix
            .n_qubits()
            .ok_or_else(|| Error::InvalidState(format!("dimension {} is not a power of two", matrix.dim())))?;
        check_register(n_qubits)?;
        let herm = matrix.hermiticity_defect();
        if herm > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:.3e})")));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!("trace is {:.12}", tr.re)));
        }
        if !matrix.is_psd(PSD_TOL) {
            return Err(Error::InvalidState("has an eigenvalue below -1e-9".into()));
        }
        Ok(DensityMatrix { matrix: matrix.hermitian_part(), n_qubits })
    }

    /// For matrices produced by trace-preserving maps of valid states.
    pub(crate) fn from_trusted(matrix: ComplexMatrix) -> Self {
        let n_qubits = matrix.n_qubits().expect("trusted state has power-of-two dimension");
        DensityMatrix { matrix: matrix.hermitian_part(), n_qubits }
    }

    /// |ψ⟩⟨ψ|; ψ must be normalised within 1e-10.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!("state vector has norm² {norm:.12}")));
        }
        Self::new(ComplexMatrix::projector(psi))
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self::from_trusted(ComplexMatrix::identity(dim).scale(c(1.0 / dim as f64, 0.0)))
    }

    /// Convex combination Σ wᵢ ρᵢ; weights must be non-negative and sum to 1.
    pub fn mixture(terms: &[(f64, DensityMatrix)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::InvalidState("empty mixture".into()))?;
        let dim = first.1.dim();
        let mut acc = ComplexMatrix::zeros(dim);
        let mut total = 0.0;
        for (w, rho) in terms {
            if *w < 0.0 || rho.dim() != dim {
                return Err(Error::InvalidState("mixture weights must be ≥ 0 over equal dimensions".into()));
            }
            total += w;
            acc = &acc + &rho.matrix.scale(c(*w, 0.0));
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("mixture weights sum to {total}")));
        }
        Self::new(acc)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        check_register(self.n_qubits + other.n_qubits)?;
        Ok(Self::from_trusted(self.matrix.kron(&other.matrix)))
    }

    pub fn tensor_power(&self, k: usize) -> Result<DensityMatrix> {
        check_register(self.n_qubits * k)?;
        let mut acc = self.clone();
        for _ in 1..k {
            acc = acc.tensor(self)?;
        }
        Ok(acc)
    }

    /// Re Tr[O ρ].
    pub fn expectation(&self, observable: &ComplexMatrix) -> f64 {
        assert_eq!(observable.dim(), self.dim(), "observable dimension mismatch");
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += observable[(i, j)] * self.matrix[(j, i)];
            }
        }
        acc.re
    }

    /// ρ^L as a plain matrix.
    pub fn power(&self, l: usize) -> ComplexMatrix {
        let mut acc = ComplexMatrix::identity(self.dim());
        for _ in 0..l {
            acc = acc.matmul(&self.matrix);
        }
        acc
    }

    /// Tr ρ^L.
    pub fn moment(&self, l: usize) -> f64 {
        self.power(l).trace().re
    }

    /// Re Tr[O ρ^L].
    pub fn observable_moment(&self, observable: &ComplexMatrix, l: usize) -> f64 {
        observable.matmul(&self.power(l)).trace().re
    }

    /// Reduced state on the qubits in `keep` (in the given order).
    pub fn marginal(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let n = self.n_qubits;
        if keep.iter().any(|&q| q >= n) || keep.is_empty() {
            return Err(Error::Dimension(format!("cannot keep qubits {keep:?} of {n}")));
        }
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let m = keep.len();
        let mut out = ComplexMatrix::zeros(1 << m);
        let compose = |kept: usize, env: usize| -> usize {
            let mut idx = 0usize;
            for (pos, &q) in keep.iter().enumerate() {
                idx |= (bit_of(kept, m, pos) as usize) << (n - 1 - q);
            }
            for (pos, &q) in traced.iter().enumerate() {
                idx |= (bit_of(env, traced.len(), pos) as usize) << (n - 1 - q);
            }
            idx
        };
        for a in 0..(1 << m) {
            for b in 0..(1 << m) {
                let mut s = ZERO;
                for e in 0..(1usize << traced.len()) {
                    s += self.matrix[(compose(a, e), compose(b, e))];
                }
                out[(a, b)] = s;
            }
        }
        Ok(Self::from_trusted(out))
    }

    /// Conjugate by single-qubit unitaries, one per qubit.
    pub fn rotate_local(&self, unitaries: &[Mat2]) -> DensityMatrix {
        assert_eq!(unitaries.len(), self.n_qubits, "one rotation per qubit");
        let mut m = self.matrix.clone();
        for (q, u) in unitaries.iter().enumerate() {
            if *u != Mat2::IDENTITY {
                m.conjugate_local(q, u);
            }
        }
        Self::from_trusted(m)
    }

    /// Computational-basis outcome probabilities, validated.
    pub fn diagonal_probabilities(&self) -> Result<Vec<f64>> {
        checked_probabilities((0..self.dim()).map(|i| self.matrix[(i, i)].re).collect())
    }
}

fn checked_probabilities(mut probs: Vec<f64>) -> Result<Vec<f64>> {
    let mut total = 0.0;
    for p in probs.iter_mut() {
        if *p < -PSD_TOL {
            return Err(Error::NegativeProbability(*p));
        }
        *p = p.max(0.0);
        total += *p;
    }
    if (total - 1.0).abs() > ALGEBRA_TOL {
        return Err(Error::Unnormalized(total));
    }
    Ok(probs)
}

/// Gate noise applied after an ideal unitary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseChannel {
    #[default]
    None,
    /// ρ ↦ (1−p)ρ + p·I/dim.
    Depolarizing { p: f64 },
}

impl NoiseChannel {
    pub fn depolarizing(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("depolarizing strength {p} outside [0, 1]")));
        }
        Ok(if p == 0.0 { NoiseChannel::None } else { NoiseChannel::Depolarizing { p } })
    }

    pub fn strength(&self) -> f64 {
        match self {
            NoiseChannel::None => 0.0,
            NoiseChannel::Depolarizing { p } => *p,
        }
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        match *self {
            NoiseChannel::None => rho.clone(),
            NoiseChannel::Depolarizing { p } => {
                let dim = rho.dim();
                let mixed = ComplexMatrix::identity(dim).scale(c(p * rho.trace().re / dim as f64, 0.0));
                &rho.scale(c(1.0 - p, 0.0)) + &mixed
            }
        }
    }
}

/// Unitary gate followed by the noise channel.
pub fn apply_channel(state: &DensityMatrix, gate: &ComplexMatrix, noise: NoiseChannel) -> Result<DensityMatrix> {
    if gate.dim() != state.dim() {
        return Err(Error::Dimension(format!("gate {} vs state {}", gate.dim(), state.dim())));
    }
    let defect = gate.unitarity_defect();
    if defect > ALGEBRA_TOL {
        return Err(Error::NotUnitary(defect));
    }
    let evolved = gate.matmul(state.matrix()).matmul(&gate.adjoint());
    Ok(DensityMatrix::from_trusted(noise.apply(&evolved)))
}

/// Outcome distribution ⟨b|UρU†|b⟩ for a measurement after `basis_unitary`.
pub fn born_probabilities(state: &DensityMatrix, basis_unitary: &ComplexMatrix) -> Result<Vec<f64>> {
    if basis_unitary.dim() != state.dim() {
        return Err(Error::Dimension(format!("basis {} vs state {}", basis_unitary.dim(), state.dim())));
    }
    let d = state.dim();
    let rho = state.matrix();
    let mut probs = Vec::with_capacity(d);
    for b in 0..d {
        let row = &basis_unitary.data()[b * d..(b + 1) * d];
        let mut p = ZERO;
        for j in 0..d {
            let mut t = ZERO;
            for i in 0..d {
                t += row[i] * rho[(i, j)];
            }
            p += t * row[j].conj();
        }
        probs.push(p.re);
    }
    checked_probabilities(probs)
}

/// Draw an index from a validated probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Measure in the basis rotated by `basis_unitary`; returns the outcome index.
pub fn born_sample<R: Rng + ?Sized>(state: &DensityMatrix, basis_unitary: &ComplexMatrix, rng: &mut R) -> Result<usize> {
    let probs = born_probabilities(state, basis_unitary)?;
    Ok(sample_index(&probs, rng))
}

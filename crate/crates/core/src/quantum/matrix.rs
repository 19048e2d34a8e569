use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::QuantumError;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Entrywise tolerance used by [`ComplexMatrix::is_hermitian`] callers.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Frobenius tolerance for projector checks.
pub const PROJECTOR_TOL: f64 = 1e-10;

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from a row-major buffer of length `dim * dim`.
    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self, QuantumError> {
        if dim == 0 || data.len() != dim * dim {
            return Err(QuantumError::Shape(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[&[C64]]) -> Result<Self, QuantumError> {
        let dim = rows.len();
        let data: Vec<C64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(dim, data)
    }

    /// Real diagonal matrix.
    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// The rank-one operator `|ket><bra|`.
    pub fn outer(ket: &[C64], bra: &[C64]) -> Self {
        assert_eq!(ket.len(), bra.len(), "outer product of mismatched vectors");
        let d = ket.len();
        Self::from_fn(d, |i, j| ket[i] * bra[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// `Tr(self * other)` in O(dim²).
    pub fn trace_product(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut acc = ZERO;
        for i in 0..d {
            let row = self.row(i);
            for (k, a) in row.iter().enumerate() {
                acc += a * other.data[k * d + i];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        (self - other).frobenius_norm()
    }

    /// Entrywise check of `M = M†`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        for i in 0..self.dim {
            for j in i..self.dim {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// `P = P†` and `P² = P`, both within Frobenius distance `tol`.
    pub fn is_projector(&self, tol: f64) -> bool {
        if self.frobenius_distance(&self.adjoint()) > tol {
            return false;
        }
        (self * self).frobenius_distance(self) <= tol
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Real part of `<v|M|v>`.
    pub fn expectation(&self, v: &[C64]) -> f64 {
        let mv = self.apply(v);
        v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum::<C64>().re
    }

    /// `U M U†`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        &(u * self) * &u.adjoint()
    }

    /// `P M P`.
    pub fn sandwich(&self, p: &Self) -> Self {
        &(p * self) * p
    }

    /// Replaces `M` by `(M + M†)/2`, removing rounding asymmetry.
    pub fn hermitize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            self.data[i * d + i].im = 0.0;
            for j in i + 1..d {
                let avg = (self.data[i * d + j] + self.data[j * d + i].conj()) * 0.5;
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg.conj();
            }
        }
    }

    pub fn kron(&self, other: &Self) -> Self {
        kron(self, other)
    }
}

/// Tensor (Kronecker) product `a ⊗ b`; `a` is the more significant factor.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim, b.dim);
    let d = da * db;
    let mut out = ComplexMatrix::zeros(d);
    for ia in 0..da {
        for ja in 0..da {
            let s = a[(ia, ja)];
            if s == ZERO {
                continue;
            }
            for ib in 0..db {
                let row = (ia * db + ib) * d + ja * db;
                for jb in 0..db {
                    out.data[row + jb] = s * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Kronecker product of a list of factors, leftmost most significant.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(ComplexMatrix::identity(1), |acc, f| kron(&acc, f))
}

/// Kronecker product of state vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix product of mismatched dimensions");
        let d = self.dim;
        let mut out = ComplexMatrix::zeros(d);
        for i in 0..d {
            let out_row = &mut out.data[i * d..(i + 1) * d];
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * d..(k + 1) * d];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self + &rhs
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self * &rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::pauli::{pauli, Pauli};
    use proptest::prelude::*;

    fn random_matrix(dim: usize, seed: u64) -> ComplexMatrix {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, &[dim as u64]);
        ComplexMatrix::from_fn(dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn identity_kron_identity() {
        let id2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&id2, &id2), ComplexMatrix::identity(4));
    }

    #[test]
    fn zz_on_01_is_minus_one() {
        let zz = kron(&pauli(Pauli::Z), &pauli(Pauli::Z));
        let ket01 = [ZERO, ONE, ZERO, ZERO];
        let out = zz.apply(&ket01);
        assert_eq!(out, vec![ZERO, -ONE, ZERO, ZERO]);
    }

    #[test]
    fn xx_corner_element() {
        // X⊗X swaps |00> <-> |11> and |01> <-> |10>; by hand the matrix is the
        // anti-diagonal of ones.
        let xx = kron(&pauli(Pauli::X), &pauli(Pauli::X));
        assert_eq!(xx[(0, 3)], ONE);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i + j == 3 { ONE } else { ZERO };
                assert_eq!(xx[(i, j)], expect);
            }
        }
    }

    #[test]
    fn projector_check() {
        let p = (&ComplexMatrix::identity(2) + &pauli(Pauli::Z)).scale(0.5);
        assert!(p.is_projector(PROJECTOR_TOL));
        assert!(!pauli(Pauli::Z).is_projector(PROJECTOR_TOL));
    }

    #[test]
    fn trace_product_matches_full_product() {
        let a = random_matrix(5, 1);
        let b = random_matrix(5, 2);
        assert!((a.trace_product(&b) - (&a * &b).trace()).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn mixed_product_identity(s1 in 0u64..1000, s2 in 0u64..1000) {
            let a = random_matrix(2, s1);
            let b = random_matrix(3, s2);
            let c = random_matrix(2, s1 + 7);
            let d = random_matrix(3, s2 + 11);
            let lhs = &kron(&a, &b) * &kron(&c, &d);
            let rhs = kron(&(&a * &c), &(&b * &d));
            prop_assert!(lhs.frobenius_distance(&rhs) < 1e-10);
        }

        #[test]
        fn kron_associative(s in 0u64..1000) {
            let a = random_matrix(2, s);
            let b = random_matrix(2, s + 1);
            let c = random_matrix(3, s + 2);
            let lhs = kron(&kron(&a, &b), &c);
            let rhs = kron(&a, &kron(&b, &c));
            prop_assert_eq!(lhs.dim(), 12);
            prop_assert!(lhs.frobenius_distance(&rhs) < 1e-10);
        }

        #[test]
        fn kron_bilinear(s in 0u64..1000, k in -3.0f64..3.0) {
            let a = random_matrix(2, s);
            let a2 = random_matrix(2, s + 5);
            let b = random_matrix(2, s + 9);
            let lhs = kron(&(&a + &a2.scale(k)), &b);
            let rhs = &kron(&a, &b) + &kron(&a2, &b).scale(k);
            prop_assert!(lhs.frobenius_distance(&rhs) < 1e-10);
        }
    }
}

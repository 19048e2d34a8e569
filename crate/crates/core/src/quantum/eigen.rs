//! Cyclic Jacobi eigensolver for small dense Hermitian matrices.

use super::matrix::{ComplexMatrix, C64, HERMITIAN_TOL, ONE, ZERO};
use super::QuantumError;

const MAX_SWEEPS: usize = 100;
const REL_OFF_DIAGONAL_TOL: f64 = 1e-12;

/// One eigenvalue with a unit-norm eigenvector.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<C64>,
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
///
/// Eigenvectors inside a degenerate cluster form an orthonormal basis of the
/// cluster with no canonical order.
pub fn hermitian_eigensystem(m: &ComplexMatrix) -> Result<Vec<EigenPair>, QuantumError> {
    let d = m.dim();
    let scale = m.as_slice().iter().map(|z| z.norm()).fold(1.0, f64::max);
    if !m.is_hermitian(HERMITIAN_TOL * scale) {
        let (i, j, dev) = worst_asymmetry(m);
        return Err(QuantumError::NotHermitian { row: i, col: j, deviation: dev });
    }

    let mut a = m.clone();
    a.hermitize();
    let mut v = ComplexMatrix::identity(d);
    let norm = a.frobenius_norm();

    if norm > 0.0 {
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&a) < REL_OFF_DIAGONAL_TOL * norm {
                converged = true;
                break;
            }
            for p in 0..d {
                for q in p + 1..d {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
        if !converged && off_diagonal_norm(&a) >= REL_OFF_DIAGONAL_TOL * norm {
            return Err(QuantumError::NoConvergence(MAX_SWEEPS));
        }
    }

    let mut pairs: Vec<EigenPair> = (0..d)
        .map(|k| EigenPair {
            value: a[(k, k)].re,
            vector: (0..d).map(|i| v[(i, k)]).collect(),
        })
        .collect();
    pairs.sort_by(|x, y| y.value.total_cmp(&x.value));
    Ok(pairs)
}

/// Eigenvalues only, descending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>, QuantumError> {
    Ok(hermitian_eigensystem(m)?.into_iter().map(|p| p.value).collect())
}

/// `Σ λ v v†` from an eigensystem.
pub fn reconstruct(pairs: &[EigenPair]) -> ComplexMatrix {
    let d = pairs.first().map_or(0, |p| p.vector.len());
    let mut out = ComplexMatrix::zeros(d);
    for p in pairs {
        for i in 0..d {
            let vi = p.vector[i] * p.value;
            for j in 0..d {
                out[(i, j)] += vi * p.vector[j].conj();
            }
        }
    }
    out
}

fn worst_asymmetry(m: &ComplexMatrix) -> (usize, usize, f64) {
    let mut worst = (0, 0, 0.0);
    for i in 0..m.dim() {
        for j in i..m.dim() {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
            if dev > worst.2 {
                worst = (i, j, dev);
            }
        }
    }
    worst
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let d = a.dim();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Annihilates `a[p][q]` with the unitary `U = D R`, where `D` removes the
/// phase of `a[p][q]` and `R` is the real Jacobi rotation.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Skip entries already negligible next to both diagonals.
    if mag < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[(p, q)] = ZERO;
        a[(q, p)] = ZERO;
        return;
    }
    let phase = apq / mag;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let u_pp = ONE * c;
    let u_pq = ONE * s;
    let u_qp = phase.conj() * (-s);
    let u_qq = phase.conj() * c;

    let d = a.dim();
    // A <- A U (columns p, q)
    for k in 0..d {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u_pp + akq * u_qp;
        a[(k, q)] = akp * u_pq + akq * u_qq;
    }
    // A <- U† A (rows p, q)
    for k in 0..d {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
    // V <- V U
    for k in 0..d {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

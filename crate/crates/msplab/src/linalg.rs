//! Dense symmetric matrices and a cyclic Jacobi eigensolver.

use crate::error::{check_size, invalid, Result};

/// Largest order accepted by the eigensolver.
pub const MAX_EIGEN_ORDER: usize = 256;

/// Square matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return invalid("matrix rows must all have length equal to the row count");
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Matrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
/// `1e-12` times the matrix norm (or to the floating point floor).
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    let n = a.n();
    check_size("matrix order", n, MAX_EIGEN_ORDER)?;
    let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if a.asymmetry() > 1e-12 * scale.max(1.0) {
        return invalid(format!("matrix is not symmetric (asymmetry {:.3e})", a.asymmetry()));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let frob: f64 = m.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-12 * frob;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += 2.0 * m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() <= tol.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v.get(k, i)).collect()).collect();
    Ok(SymEigen { values, vectors })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(a: &Matrix) -> Result<f64> {
    Ok(sym_eigen(a)?.values.first().copied().unwrap_or(0.0))
}

/// Spectral norm of a symmetric matrix.
pub fn op_norm_sym(a: &Matrix) -> Result<f64> {
    let e = sym_eigen(a)?;
    Ok(e.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_identity() {
        assert_eq!(lambda_min(&Matrix::identity(4)).unwrap(), 1.0);
        let d = Matrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(lambda_min(&d).unwrap(), 1.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(sym_eigen(&a).is_err());
    }
}

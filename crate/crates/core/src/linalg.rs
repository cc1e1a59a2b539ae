//! Small dense linear algebra: enough for explicit-solve oracles, game
//! Hessians and Gaussian Fréchet distances. Dimensions stay in the hundreds,
//! so plain row-major loops are the right tool.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "matvec: {}x{} * {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect())
    }

    pub fn scale(&self, k: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| k * v).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("matrix add".into()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("matrix sub".into()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Solve `a x = b` by LU decomposition with partial pivoting. `a` is consumed
/// as the workspace. Used as the explicit dense oracle against closed-form
/// updates; never on dimensions beyond a few hundred.
pub fn lu_solve(mut a: Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(Error::DimensionMismatch(
            "lu_solve expects square system".into(),
        ));
    }
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        // pivot
        let mut pivot = col;
        let mut best = a.get(col, col).abs();
        for r in (col + 1)..n {
            let v = a.get(r, col).abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best < 1e-300 {
            return Err(Error::Singular(best, col));
        }
        if pivot != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(pivot, j));
                a.set(pivot, j, tmp);
            }
            x.swap(col, pivot);
        }
        let d = a.get(col, col);
        for r in (col + 1)..n {
            let f = a.get(r, col) / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a.get(r, j) - f * a.get(col, j);
                a.set(r, j, v);
            }
            x[r] -= f * x[col];
        }
    }
    // back substitution
    for col in (0..n).rev() {
        x[col] /= a.get(col, col);
        for r in 0..col {
            x[r] -= a.get(r, col) * x[col];
        }
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn jacobi_eigh(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = m.rows;
    if m.cols != n {
        return Err(Error::DimensionMismatch(
            "jacobi_eigh expects square".into(),
        ));
    }
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.max_abs()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
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
    let eigvals = (0..n).map(|i| a.get(i, i)).collect();
    Ok((eigvals, v))
}

/// Symmetric PSD square root via eigendecomposition, clamping tiny negative
/// eigenvalues produced by finite-sample covariances.
pub fn sqrt_psd(m: &Matrix, clamp_tol: f64) -> Result<Matrix> {
    let (vals, vecs) = jacobi_eigh(m)?;
    let n = m.rows;
    for &l in &vals {
        if l < -clamp_tol {
            return Err(Error::DimensionMismatch(format!(
                "matrix is not PSD (eigenvalue {l:.3e})"
            )));
        }
    }
    let mut scaled = Matrix::zeros(n, n);
    for (j, lam) in vals.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..n {
            scaled.set(i, j, vecs.get(i, j) * s);
        }
    }
    scaled.matmul(&vecs.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn lu_solves_known_system() {
        let a = Matrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = lu_solve(a.clone(), &[5.0, 10.0]).unwrap();
        let back = a.matvec(&x).unwrap();
        assert!((back[0] - 5.0).abs() < 1e-12);
        assert!((back[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            lu_solve(a, &[1.0, 1.0]),
            Err(Error::Singular(_, _))
        ));
    }

    #[test]
    fn jacobi_recovers_diagonal() {
        let m = Matrix::from_rows(vec![vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (mut vals, _) = jacobi_eigh(&m).unwrap();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric() {
        let mut rng = Rng::seed_from(9);
        let n = 8;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.uniform_in(-1.0, 1.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let (vals, vecs) = jacobi_eigh(&m).unwrap();
        // V diag(vals) V^T == M
        let mut lam = Matrix::zeros(n, n);
        for (i, v) in vals.iter().enumerate() {
            lam.set(i, i, *v);
        }
        let rebuilt = vecs
            .matmul(&lam)
            .unwrap()
            .matmul(&vecs.transpose())
            .unwrap();
        assert!(rebuilt.sub(&m).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = Matrix::from_rows(vec![vec![4.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let r = sqrt_psd(&m, 1e-10).unwrap();
        let sq = r.matmul(&r).unwrap();
        assert!(sq.sub(&m).unwrap().max_abs() < 1e-10);
    }
}

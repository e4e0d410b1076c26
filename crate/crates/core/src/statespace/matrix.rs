use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::StateVector;
use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot below `PIVOT_TOLERANCE · ‖A‖∞` marks the matrix singular.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("matrix dimensions must be positive".into()));
        }
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                expected: c,
                found: bad.len(),
            });
        }
        Self::new(r, c, rows.concat())
    }

    /// Builds the matrix column by column from a linear map sampled on the unit basis.
    pub fn from_columns_of(
        dim: usize,
        mut map: impl FnMut(&StateVector) -> Result<StateVector>,
    ) -> Result<Self> {
        let mut m = Self::zeros(dim, dim);
        for c in 0..dim {
            let col = map(&StateVector::basis(dim, c))?;
            col.expect_dim(dim)?;
            for r in 0..dim {
                m[(r, c)] = col[r];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_1(&self) -> f64 {
        self.transpose().norm_inf()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_diagonal(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| (0..self.cols).all(|c| r == c || self[(r, c)] == 0.0))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.norm_inf().max(1.0);
        self.is_square()
            && (0..self.rows)
                .all(|r| (0..r).all(|c| (self[(r, c)] - self[(c, r)]).abs() <= tol * scale))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &StateVector) -> Result<StateVector> {
        v.expect_dim(self.cols)?;
        Ok(StateVector::from_fn(self.rows, |r| {
            self.row(r).iter().zip(v.iter()).map(|(a, b)| a * b).sum()
        }))
    }

    /// Partial-pivoting LU factorization.
    pub fn lu(&self) -> Result<LuFactors> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        let n = self.rows;
        let threshold = PIVOT_TOLERANCE * self.norm_inf();
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, lu[(r, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pmax > threshold) {
                return Err(Error::SingularMatrix {
                    column: k,
                    pivot: pmax,
                    threshold,
                });
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for r in (k + 1)..n {
                let factor = lu[(r, k)] / pivot;
                lu[(r, k)] = factor;
                if factor == 0.0 {
                    continue;
                }
                for c in (k + 1)..n {
                    let v = lu[(k, c)];
                    lu[(r, c)] -= factor * v;
                }
            }
        }
        Ok(LuFactors { lu, perm, sign })
    }

    pub fn determinant(&self) -> Result<f64> {
        match self.lu() {
            Ok(f) => Ok(f.determinant()),
            Err(Error::SingularMatrix { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// `e^{A}` by eigen-decomposition for symmetric input, scaling-and-squaring
    /// with the degree-13 Padé approximant otherwise.
    pub fn expm(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        let out = if self.is_diagonal() {
            Self::from_diagonal(&(0..self.rows).map(|i| self[(i, i)].exp()).collect::<Vec<_>>())
        } else if self.is_symmetric(0.0) {
            SymmetricDecomposition::new(self).exp_scaled(1.0)
        } else {
            pade13(self)?
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::Overflow(format!(
                "matrix exponential of a {}x{} matrix with norm {:e}",
                self.rows,
                self.cols,
                self.norm_inf()
            )))
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
    sign: f64,
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &StateVector) -> Result<StateVector> {
        let n = self.dim();
        b.expect_dim(n)?;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let row = self.lu.row(r);
            let s: f64 = row[..r].iter().zip(&x[..r]).map(|(l, y)| l * y).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let row = self.lu.row(r);
            let s: f64 = row[r + 1..].iter().zip(&x[r + 1..]).map(|(u, y)| u * y).sum();
            x[r] = (x[r] - s) / row[r];
        }
        Ok(StateVector::new(x))
    }

    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.dim();
        if b.rows != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.rows,
            });
        }
        let mut out = DenseMatrix::zeros(n, b.cols);
        for c in 0..b.cols {
            let col = StateVector::from_fn(n, |r| b[(r, c)]);
            let x = self.solve(&col)?;
            for r in 0..n {
                out[(r, c)] = x[r];
            }
        }
        Ok(out)
    }

    pub fn determinant(&self) -> f64 {
        (0..self.dim()).map(|i| self.lu[(i, i)]).product::<f64>() * self.sign
    }
}

/// Solves `A x = b` with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &StateVector) -> Result<StateVector> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: a.cols,
        });
    }
    b.expect_dim(a.rows)?;
    a.lu()?.solve(b)
}

/// `e^{tA} v`.
pub fn expm_apply(a: &DenseMatrix, t: f64, v: &StateVector) -> Result<StateVector> {
    v.expect_dim(a.cols())?;
    if t == 0.0 {
        return Ok(v.clone());
    }
    let out = a.scaled(t).expm()?.mul_vec(v)?;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Overflow(format!("e^(tA)v at t = {t}")))
    }
}

/// Orthogonal eigen-decomposition `A = Q Λ Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricDecomposition {
    eigenvalues: Vec<f64>,
    vectors: DenseMatrix,
}

impl SymmetricDecomposition {
    pub fn new(a: &DenseMatrix) -> Self {
        let n = a.rows;
        let m = DMatrix::from_row_slice(n, n, &a.data);
        let eig = SymmetricEigen::new(m);
        let mut vectors = DenseMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                vectors[(r, c)] = eig.eigenvectors[(r, c)];
            }
        }
        Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            vectors,
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `e^{tA}` as a matrix.
    pub fn exp_scaled(&self, t: f64) -> DenseMatrix {
        let n = self.eigenvalues.len();
        let mut out = DenseMatrix::zeros(n, n);
        let w: Vec<f64> = self.eigenvalues.iter().map(|l| (t * l).exp()).collect();
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] = (0..n)
                    .map(|k| self.vectors[(r, k)] * w[k] * self.vectors[(c, k)])
                    .sum();
            }
        }
        out
    }

    /// `e^{tA} v` without forming the exponential.
    pub fn exp_apply(&self, t: f64, v: &StateVector) -> StateVector {
        let n = self.eigenvalues.len();
        let coeffs: Vec<f64> = (0..n)
            .map(|k| {
                let proj: f64 = (0..n).map(|r| self.vectors[(r, k)] * v[r]).sum();
                proj * (t * self.eigenvalues[k]).exp()
            })
            .collect();
        StateVector::from_fn(n, |r| (0..n).map(|k| self.vectors[(r, k)] * coeffs[k]).sum())
    }
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

fn lincomb(terms: &[(f64, &DenseMatrix)], n: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(n, n);
    for (c, m) in terms {
        for (o, v) in out.data.iter_mut().zip(&m.data) {
            *o += c * v;
        }
    }
    out
}

fn pade13(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows;
    let norm = a.norm_1();
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scaled(0.5f64.powi(squarings));
    let b = &PADE13;
    let id = DenseMatrix::identity(n);
    let a2 = a.matmul(&a)?;
    let a4 = a2.matmul(&a2)?;
    let a6 = a4.matmul(&a2)?;
    let inner_u = a6.matmul(&lincomb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n))?;
    let u = a.matmul(&inner_u.add(&lincomb(
        &[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &id)],
        n,
    ))?)?;
    let inner_v = a6.matmul(&lincomb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n))?;
    let v = inner_v.add(&lincomb(
        &[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &id)],
        n,
    ))?;
    let mut r = v.sub(&u)?.lu()?.solve_matrix(&v.add(&u)?)?;
    for _ in 0..squarings {
        r = r.matmul(&r)?;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_identity_and_diagonal() {
        let x = lu_solve(&DenseMatrix::identity(3), &StateVector::new(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0]);
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let x = lu_solve(&a, &StateVector::new(vec![2.0, 8.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn lu_detects_singularity() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            lu_solve(&a, &StateVector::new(vec![1.0, 1.0])),
            Err(Error::SingularMatrix { .. })
        ));
        assert_eq!(a.determinant().unwrap(), 0.0);
    }

    #[test]
    fn lu_rejects_bad_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(lu_solve(&a, &StateVector::zeros(2)).is_err());
        let b = DenseMatrix::identity(2);
        assert!(lu_solve(&b, &StateVector::zeros(3)).is_err());
    }

    #[test]
    fn determinant_sign() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((a.determinant().unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn expm_zero_and_diagonal() {
        let v = StateVector::new(vec![3.0, -1.0]);
        assert_eq!(expm_apply(&DenseMatrix::zeros(2, 2), 1.7, &v).unwrap(), v);
        let a = DenseMatrix::from_diagonal(&[1.0, -1.0]);
        let out = expm_apply(&a, 2f64.ln(), &StateVector::new(vec![1.0, 1.0])).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-14);
        assert!((out[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn expm_nilpotent_and_rotation() {
        // e^{[[0,1],[0,0]]} = [[1,1],[0,1]]
        let n = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let e = n.expm().unwrap();
        assert!((e[(0, 1)] - 1.0).abs() < 1e-14 && (e[(0, 0)] - 1.0).abs() < 1e-14);
        // rotation generator with a large angle forces several squarings
        let theta = 20.0;
        let r = DenseMatrix::from_rows(&[vec![0.0, -theta], vec![theta, 0.0]]).unwrap();
        let e = r.expm().unwrap();
        assert!((e[(0, 0)] - theta.cos()).abs() < 1e-11);
        assert!((e[(1, 0)] - theta.sin()).abs() < 1e-11);
    }

    #[test]
    fn expm_overflow() {
        let a = DenseMatrix::from_rows(&[vec![800.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(a.expm(), Err(Error::Overflow(_))));
    }
}

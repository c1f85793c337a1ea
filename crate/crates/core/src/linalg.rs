//! Exact rational row reduction and a small floating-point least-squares fit.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Vec<BigRational>>,
}

/// Reduced row echelon form together with its pivot columns.
#[derive(Debug, Clone)]
pub struct Rref {
    pub matrix: RationalMatrix,
    pub pivots: Vec<usize>,
}

impl RationalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RationalMatrix {
            rows,
            cols,
            data: vec![vec![BigRational::zero(); cols]; rows],
        }
    }

    pub fn from_rows(cols: usize, rows: Vec<Vec<BigRational>>) -> Self {
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        RationalMatrix {
            rows: rows.len(),
            cols,
            data: rows,
        }
    }

    pub fn from_i64(rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_rows(
            cols,
            rows.iter()
                .map(|r| r.iter().map(|&v| BigRational::from_integer(v.into())).collect())
                .collect(),
        )
    }

    /// Builds a matrix from sparse rows (column → value). Empty rows are
    /// dropped since they constrain nothing.
    pub fn from_sparse_rows(cols: usize, rows: Vec<BTreeMap<usize, BigRational>>) -> Self {
        let data = rows
            .into_iter()
            .filter(|r| r.values().any(|v| !v.is_zero()))
            .map(|r| {
                let mut dense = vec![BigRational::zero(); cols];
                for (c, v) in r {
                    dense[c] = v;
                }
                dense
            })
            .collect::<Vec<_>>();
        RationalMatrix {
            rows: data.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &BigRational {
        &self.data[r][c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: BigRational) {
        self.data[r][c] = v;
    }

    pub fn mul_vec(&self, v: &[BigRational]) -> Vec<BigRational> {
        assert_eq!(v.len(), self.cols);
        self.data
            .iter()
            .map(|row| {
                row.iter()
                    .zip(v)
                    .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                    .fold(BigRational::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    pub fn rref(&self) -> Rref {
        let mut m = self.data.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| !m[i][c].is_zero()) else {
                continue;
            };
            m.swap(r, p);
            let inv = m[r][c].recip();
            let nonzero: Vec<usize> = (c..self.cols).filter(|&j| !m[r][j].is_zero()).collect();
            for &j in &nonzero {
                m[r][j] = &m[r][j] * &inv;
            }
            let pivot_row = m[r].clone();
            for (i, row) in m.iter_mut().enumerate() {
                if i == r || row[c].is_zero() {
                    continue;
                }
                let factor = row[c].clone();
                for &j in &nonzero {
                    row[j] -= &factor * &pivot_row[j];
                }
            }
            pivots.push(c);
            r += 1;
        }
        Rref {
            matrix: RationalMatrix {
                rows: self.rows,
                cols: self.cols,
                data: m,
            },
            pivots,
        }
    }

    pub fn rank(&self) -> usize {
        self.rref().pivots.len()
    }

    /// Basis of the kernel, one vector per free column. Each vector has a 1
    /// in its free column, zeros in the other free columns, so its last
    /// nonzero entry is 1.
    pub fn null_space(&self) -> Vec<Vec<BigRational>> {
        let Rref { matrix, pivots } = self.rref();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        (0..self.cols)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut v = vec![BigRational::zero(); self.cols];
                v[f] = BigRational::one();
                for (row, &pc) in pivots.iter().enumerate() {
                    v[pc] = -matrix.data[row][f].clone();
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// `‖A x − b‖₂`.
    pub residual_norm: f64,
}

fn column_scales(a: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter().map(|c| c.norm()).collect()
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Invalid("ragged least-squares matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Minimizes `‖A x − b‖₂` through the normal equations after scaling every
/// column of `A` to unit norm.
pub fn lstsq(rows: &[Vec<f64>], b: &[f64]) -> Result<LeastSquares> {
    let a = to_matrix(rows)?;
    if b.len() != a.nrows() {
        return Err(Error::Invalid("right-hand side length differs from row count".into()));
    }
    let scales = column_scales(&a);
    if scales.contains(&0.0) {
        return Err(Error::RankDeficient);
    }
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let rhs = DVector::from_column_slice(b);
    let normal = scaled.transpose() * &scaled;
    let chol = normal.cholesky().ok_or(Error::RankDeficient)?;
    let y = chol.solve(&(scaled.transpose() * &rhs));
    let x = DVector::from_iterator(y.len(), y.iter().zip(&scales).map(|(v, s)| v / s));
    let residual_norm = (&a * &x - rhs).norm();
    Ok(LeastSquares {
        coefficients: x.iter().copied().collect(),
        residual_norm,
    })
}

/// Smallest singular value of `A` after column normalization.
pub fn min_singular_value(rows: &[Vec<f64>]) -> Result<f64> {
    let mut a = to_matrix(rows)?;
    for j in 0..a.ncols() {
        let s = a.column(j).norm();
        if s == 0.0 {
            return Ok(0.0);
        }
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let sv = a.singular_values();
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Numerical rank: singular values above `tol` times the largest.
pub fn numerical_rank(rows: &[Vec<f64>], tol: f64) -> Result<usize> {
    let a = to_matrix(rows)?;
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    Ok(sv.iter().filter(|&&s| s > tol * max).count())
}

//! Small dense linear algebra: row-major square matrices, Cholesky and LU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SquareMatrix { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::dim(n, r.len()));
        }
        Ok(SquareMatrix { n, data: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Leading `k`x`k` principal sub-matrix.
    pub fn leading(&self, k: usize) -> SquareMatrix {
        SquareMatrix::from_fn(k, |i, j| self[(i, j)])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x)).collect()
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        (0..self.n).map(|j| (0..self.n).map(|i| self[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: SquareMatrix,
}

impl Cholesky {
    /// Fails with [`Error::Singular`] when a pivot is not strictly positive.
    pub fn new(a: &SquareMatrix) -> Result<Self> {
        let n = a.n;
        let mut l = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular(format!("non-positive pivot {d:.3e} at column {j}")));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor(&self) -> &SquareMatrix {
        &self.l
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }
}

/// LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: SquareMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &SquareMatrix) -> Result<Self> {
        let n = a.n;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.norm1().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let p =
                (k..n).max_by(|&i, &j| lu[(i, k)].abs().total_cmp(&lu[(j, k)].abs())).expect("non-empty pivot range");
            if lu[(p, k)].abs() <= 1e-14 * scale {
                return Err(Error::Singular(format!("zero pivot at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = f;
                for j in k + 1..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> SquareMatrix {
        let n = self.lu.n;
        let mut inv = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// 1-norm condition number computed from the explicit inverse. Intended for
/// the small matrices used here; returns infinity for singular input.
pub fn condition_number(a: &SquareMatrix) -> f64 {
    match Lu::new(a) {
        Ok(lu) => a.norm1() * lu.inverse().norm1(),
        Err(_) => f64::INFINITY,
    }
}

/// Least-squares solve of `A w = b` for a tall row-major `A` (rows >= cols) by
/// Householder QR. Returns `None` when `A` is numerically rank deficient.
pub fn lstsq_qr(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    if rows < cols || cols == 0 {
        return None;
    }
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut y = b.to_vec();
    for k in 0..cols {
        let norm = (k..rows).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if r[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..cols {
                let s: f64 = (k..rows).map(|i| v[i - k] * r[i][j]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..rows {
                    r[i][j] -= s * v[i - k];
                }
            }
            let s: f64 = (k..rows).map(|i| v[i - k] * y[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..rows {
                y[i] -= s * v[i - k];
            }
        }
    }
    let rmax = (0..cols).map(|i| r[i][i].abs()).fold(0.0, f64::max);
    if (0..cols).any(|i| r[i][i].abs() <= 1e-10 * rmax) {
        return None;
    }
    let mut w = vec![0.0; cols];
    for i in (0..cols).rev() {
        let s: f64 = (i + 1..cols).map(|j| r[i][j] * w[j]).sum();
        w[i] = (y[i] - s) / r[i][i];
    }
    Some(w)
}

use serde::{Deserialize, Serialize};

/// Square real matrix, row-major. Weight matrices in attention layers are
/// always `d x d`, so a dedicated square type keeps shape checks trivial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1);
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, a: f64) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = a;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(n >= 1 && rows.iter().all(|r| r.len() == n));
        Matrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn scale(&self, a: f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    /// `x^T M` for a row vector `x`.
    pub fn row_vec_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (b, &xb) in x.iter().enumerate() {
            if xb == 0.0 {
                continue;
            }
            let row = &self.data[b * self.n..(b + 1) * self.n];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xb * w;
            }
        }
        out
    }

    /// True when the matrix equals `a * I` for some scalar `a` (within `tol`).
    pub fn scalar_identity_factor(&self, tol: f64) -> Option<f64> {
        let a = self.get(0, 0);
        for i in 0..self.n {
            for j in 0..self.n {
                let want = if i == j { a } else { 0.0 };
                if (self.get(i, j) - want).abs() > tol {
                    return None;
                }
            }
        }
        Some(a)
    }
}

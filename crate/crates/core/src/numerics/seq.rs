use super::{Filter, Matrix, NumericsError, EPSILON_NORM};
use serde::{Deserialize, Serialize};

/// `L x d` real matrix of token embeddings; the universal sequence carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSeq {
    data: Vec<f64>,
    len: usize,
    dim: usize,
}

impl EmbeddedSeq {
    pub fn zeros(len: usize, dim: usize) -> Self {
        assert!(len >= 1 && dim >= 1);
        EmbeddedSeq {
            data: vec![0.0; len * dim],
            len,
            dim,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty());
        let dim = rows[0].len();
        assert!(dim >= 1 && rows.iter().all(|r| r.len() == dim));
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        assert!(data.iter().all(|x| x.is_finite()), "entries must be finite");
        EmbeddedSeq {
            data,
            len: rows.len(),
            dim,
        }
    }

    pub fn from_flat(data: Vec<f64>, len: usize, dim: usize) -> Self {
        assert_eq!(data.len(), len * dim);
        assert!(len >= 1 && dim >= 1);
        EmbeddedSeq { data, len, dim }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Right-multiplies every row by `w`.
    pub fn matmul(&self, w: &Matrix) -> EmbeddedSeq {
        assert_eq!(w.dim(), self.dim, "weight matrix must match embedding dim");
        let mut out = EmbeddedSeq::zeros(self.len, self.dim);
        for i in 0..self.len {
            let y = w.row_vec_mul(self.row(i));
            out.row_mut(i).copy_from_slice(&y);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &EmbeddedSeq) -> f64 {
        assert_eq!(self.len, other.len);
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Convolves a sequence with a filter. Out-of-range indices contribute zero on
/// both ends, so a strictly delaying filter leaves an all-zero prefix and a
/// look-ahead filter an all-zero suffix.
pub fn convolve(x: &EmbeddedSeq, f: &Filter) -> EmbeddedSeq {
    let (l, d) = (x.len(), x.dim());
    let mut out = EmbeddedSeq::zeros(l, d);
    for (offset, tap) in f.iter_taps() {
        if tap == 0.0 {
            continue;
        }
        for i in 0..l {
            let src = i as i64 - offset;
            if src < 0 || src >= l as i64 {
                continue;
            }
            let src_row = x.row(src as usize);
            let dst = out.row_mut(i);
            for (o, &v) in dst.iter_mut().zip(src_row) {
                *o += tap * v;
            }
        }
    }
    out
}

/// Normalizes each row to unit l2 norm, with the default norm floor.
pub fn row_normalize(x: &EmbeddedSeq) -> Result<EmbeddedSeq, NumericsError> {
    row_normalize_with(x, EPSILON_NORM)
}

/// Normalizes each row to unit l2 norm; rows with norm below `floor` are an
/// error because they signal a degenerate convolved token.
pub fn row_normalize_with(x: &EmbeddedSeq, floor: f64) -> Result<EmbeddedSeq, NumericsError> {
    let mut out = x.clone();
    for i in 0..x.len() {
        let norm = l2(x.row(i));
        if norm < floor {
            return Err(NumericsError::ZeroRow(i));
        }
        for v in out.row_mut(i) {
            *v /= norm;
        }
    }
    Ok(out)
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

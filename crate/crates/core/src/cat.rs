//! The CAT layer forward pass: convolutional filters on the key/query/value
//! embeddings followed by (optionally masked) softmax attention. Exposes both
//! the output vector and the attention map, plus the head-mixing multi-head
//! convolution.

use crate::numerics::{
    attention_weights, convolve, row_normalize, AttnMode, EmbeddedSeq, Filter, Matrix,
    NumericsError,
};
use serde::{Deserialize, Serialize};

/// One forward-pass evaluable CAT layer.
///
/// Each projection is `maybe-normalize(x * f) . w`. The key path additionally
/// supports a second filter applied after normalization (`f_k_post`): delaying
/// unit-norm keys by one step must happen after the rows are normalized,
/// otherwise the all-zero first row cannot be normalized at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatModel {
    pub f_k: Filter,
    pub f_q: Filter,
    pub f_v: Filter,
    pub f_k_post: Option<Filter>,
    pub w_k: Matrix,
    pub w_q: Matrix,
    pub w_v: Matrix,
    pub normalize_k: bool,
    pub normalize_q: bool,
    pub normalize_v: bool,
    pub attn_mode: AttnMode,
    pub causal_mask: bool,
}

impl CatModel {
    /// Degenerate CAT: identity filters and weights, i.e. plain attention.
    pub fn plain_attention(d: usize, attn_mode: AttnMode, causal_mask: bool) -> Self {
        CatModel {
            f_k: Filter::delay(0),
            f_q: Filter::delay(0),
            f_v: Filter::delay(0),
            f_k_post: None,
            w_k: Matrix::identity(d),
            w_q: Matrix::identity(d),
            w_v: Matrix::identity(d),
            normalize_k: false,
            normalize_q: false,
            normalize_v: false,
            attn_mode,
            causal_mask,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_k.dim()
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        let d = self.w_k.dim();
        if self.w_q.dim() != d || self.w_v.dim() != d {
            return Err(NumericsError::DimMismatch(
                "weight matrices must share one dimension".into(),
            ));
        }
        Ok(())
    }

    fn key_seq(&self, x: &EmbeddedSeq) -> Result<EmbeddedSeq, NumericsError> {
        let mut k = convolve(x, &self.f_k);
        if self.normalize_k {
            k = row_normalize(&k)?;
        }
        if let Some(post) = &self.f_k_post {
            k = convolve(&k, post);
        }
        Ok(k.matmul(&self.w_k))
    }

    fn query_seq(&self, x: &EmbeddedSeq) -> Result<EmbeddedSeq, NumericsError> {
        let mut q = convolve(x, &self.f_q);
        if self.normalize_q {
            q = row_normalize(&q)?;
        }
        Ok(q.matmul(&self.w_q))
    }

    fn value_seq(&self, x: &EmbeddedSeq) -> Result<EmbeddedSeq, NumericsError> {
        let mut v = convolve(x, &self.f_v);
        if self.normalize_v {
            v = row_normalize(&v)?;
        }
        Ok(v.matmul(&self.w_v))
    }
}

fn weights_at(
    keys: &EmbeddedSeq,
    query_row: &[f64],
    m: &CatModel,
    query_index: usize,
) -> Vec<f64> {
    let horizon = if m.causal_mask {
        query_index + 1
    } else {
        keys.len()
    };
    let scores: Vec<f64> = (0..horizon)
        .map(|i| {
            keys.row(i)
                .iter()
                .zip(query_row)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    let mut w = attention_weights(&scores, m.attn_mode);
    w.resize(keys.len(), 0.0);
    w
}

fn aggregate(values: &EmbeddedSeq, weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.dim()];
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(values.row(i)) {
            *o += w * v;
        }
    }
    out
}

/// Evaluates the layer for the query at `query_index`, returning the output
/// embedding.
pub fn cat_forward(
    x: &EmbeddedSeq,
    m: &CatModel,
    query_index: usize,
) -> Result<Vec<f64>, NumericsError> {
    m.validate()?;
    assert!(query_index < x.len(), "query index out of range");
    let keys = m.key_seq(x)?;
    let queries = m.query_seq(x)?;
    let values = m.value_seq(x)?;
    let w = weights_at(&keys, queries.row(query_index), m, query_index);
    Ok(aggregate(&values, &w))
}

/// The attention map for the query at `query_index`: a probability vector over
/// all `L` positions (masked positions carry weight zero).
pub fn cat_attention_map(
    x: &EmbeddedSeq,
    m: &CatModel,
    query_index: usize,
) -> Result<Vec<f64>, NumericsError> {
    m.validate()?;
    assert!(query_index < x.len(), "query index out of range");
    let keys = m.key_seq(x)?;
    let queries = m.query_seq(x)?;
    Ok(weights_at(&keys, queries.row(query_index), m, query_index))
}

/// Multi-query evaluation: row `t` of the result equals
/// `cat_forward(x, m, t)`. Requires the causal mask so that each row only
/// depends on the prefix.
pub fn cat_forward_all(x: &EmbeddedSeq, m: &CatModel) -> Result<EmbeddedSeq, NumericsError> {
    m.validate()?;
    assert!(m.causal_mask, "multi-query evaluation requires the causal mask");
    let keys = m.key_seq(x)?;
    let queries = m.query_seq(x)?;
    let values = m.value_seq(x)?;
    let mut out = EmbeddedSeq::zeros(x.len(), values.dim());
    for t in 0..x.len() {
        let w = weights_at(&keys, queries.row(t), m, t);
        out.row_mut(t).copy_from_slice(&aggregate(&values, &w));
    }
    Ok(out)
}

/// Head-mixing convolution weights: a `W x H x H` tap tensor indexed as
/// time x out-head x in-head, causal in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadConv {
    taps: Vec<f64>,
    window: usize,
    heads: usize,
}

impl MultiHeadConv {
    pub fn new(taps: Vec<f64>, window: usize, heads: usize) -> Self {
        assert!(window >= 1 && heads >= 1);
        assert_eq!(taps.len(), window * heads * heads);
        MultiHeadConv { taps, window, heads }
    }

    /// Unit tap at time offset 0 on the diagonal: leaves the input unchanged.
    pub fn identity(heads: usize) -> Self {
        let mut taps = vec![0.0; heads * heads];
        for h in 0..heads {
            taps[h * heads + h] = 1.0;
        }
        MultiHeadConv::new(taps, 1, heads)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn tap(&self, j: usize, out_head: usize, in_head: usize) -> f64 {
        self.taps[(j * self.heads + out_head) * self.heads + in_head]
    }
}

/// `L x d x H` stack of per-head sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadedSeq {
    data: Vec<f64>,
    len: usize,
    dim: usize,
    heads: usize,
}

impl HeadedSeq {
    pub fn zeros(len: usize, dim: usize, heads: usize) -> Self {
        assert!(len >= 1 && dim >= 1 && heads >= 1);
        HeadedSeq {
            data: vec![0.0; len * dim * heads],
            len,
            dim,
            heads,
        }
    }

    pub fn from_heads(heads: &[EmbeddedSeq]) -> Self {
        assert!(!heads.is_empty());
        let (l, d) = (heads[0].len(), heads[0].dim());
        assert!(heads.iter().all(|h| h.len() == l && h.dim() == d));
        let mut out = HeadedSeq::zeros(l, d, heads.len());
        for (h, seq) in heads.iter().enumerate() {
            for i in 0..l {
                for c in 0..d {
                    *out.at_mut(i, c, h) = seq.row(i)[c];
                }
            }
        }
        out
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

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn at(&self, i: usize, c: usize, h: usize) -> f64 {
        self.data[(i * self.dim + c) * self.heads + h]
    }

    pub fn at_mut(&mut self, i: usize, c: usize, h: usize) -> &mut f64 {
        &mut self.data[(i * self.dim + c) * self.heads + h]
    }

    pub fn head(&self, h: usize) -> EmbeddedSeq {
        let mut out = EmbeddedSeq::zeros(self.len, self.dim);
        for i in 0..self.len {
            for c in 0..self.dim {
                out.row_mut(i)[c] = self.at(i, c, h);
            }
        }
        out
    }
}

/// Mixes heads through convolution: out-head `h` at time `i` is
/// `sum_j sum_g taps[j][h][g] * xbar[i-j][:, g]`, zero-padded in time.
pub fn multihead_convolve(xbar: &HeadedSeq, f: &MultiHeadConv) -> HeadedSeq {
    assert_eq!(xbar.heads(), f.heads(), "head counts must agree");
    let (l, d, nh) = (xbar.len(), xbar.dim(), xbar.heads());
    let mut out = HeadedSeq::zeros(l, d, nh);
    for j in 0..f.window() {
        for i in j..l {
            let src = i - j;
            for out_h in 0..nh {
                for in_h in 0..nh {
                    let tap = f.tap(j, out_h, in_h);
                    if tap == 0.0 {
                        continue;
                    }
                    for c in 0..d {
                        *out.at_mut(i, c, out_h) += tap * xbar.at(src, c, in_h);
                    }
                }
            }
        }
    }
    out
}

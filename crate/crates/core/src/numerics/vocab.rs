use super::seq::{dot, l2};
use super::{EmbeddedSeq, NumericsError};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Token embeddings for a contiguous id range `0..size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    dim: usize,
    embeddings: Vec<f64>,
}

impl Vocab {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty());
        let dim = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == dim && r.iter().all(|x| x.is_finite())));
        Vocab {
            dim,
            embeddings: rows.iter().flatten().copied().collect(),
        }
    }

    /// Standard-basis embeddings; requires `d >= n`.
    pub fn orthonormal(n: usize, d: usize) -> Self {
        assert!(d >= n, "orthonormal vocab needs d >= |V|");
        let mut rows = vec![vec![0.0; d]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Vocab::from_rows(&rows)
    }

    /// Random unit embeddings with pairwise |cos| at most `max_abs_cos`,
    /// enforced by rejection so the minimum embedding distance stays positive.
    pub fn random_unit<R: Rng>(n: usize, d: usize, max_abs_cos: f64, rng: &mut R) -> Self {
        assert!(n >= 1 && d >= 1);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        'outer: while rows.len() < n {
            for _ in 0..10_000 {
                let mut v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = l2(&v);
                if norm < 1e-6 {
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= norm);
                if rows.iter().all(|r| dot(r, &v).abs() <= max_abs_cos) {
                    rows.push(v);
                    continue 'outer;
                }
            }
            panic!("could not place {} unit vectors in dim {} with |cos| <= {}", n, d, max_abs_cos);
        }
        Vocab::from_rows(&rows)
    }

    pub fn size(&self) -> usize {
        self.embeddings.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedding(&self, id: usize) -> &[f64] {
        &self.embeddings[id * self.dim..(id + 1) * self.dim]
    }

    pub fn is_unit_norm(&self) -> bool {
        (0..self.size()).all(|i| (l2(self.embedding(i)) - 1.0).abs() <= 1e-9)
    }

    /// Embeds a token-id sequence as an `L x d` matrix.
    pub fn embed(&self, tokens: &[u32]) -> EmbeddedSeq {
        assert!(!tokens.is_empty());
        let mut out = EmbeddedSeq::zeros(tokens.len(), self.dim);
        for (i, &t) in tokens.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.embedding(t as usize));
        }
        out
    }
}

/// Nearest token id under Euclidean distance; ties break to the smallest id.
pub fn nearest_token(v: &[f64], vocab: &Vocab) -> Result<usize, NumericsError> {
    if vocab.size() == 0 {
        return Err(NumericsError::EmptyVocab);
    }
    if v.len() != vocab.dim() {
        return Err(NumericsError::DimMismatch(format!(
            "query dim {} vs vocab dim {}",
            v.len(),
            vocab.dim()
        )));
    }
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for id in 0..vocab.size() {
        let e = vocab.embedding(id);
        let d2: f64 = v.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = id;
        }
    }
    Ok(best)
}

/// Minimum embedding distance `(1 - max_{a != b} (a.b)^2)^(1/2)`.
///
/// Computed by exact pairwise enumeration; requires a unit-norm vocabulary of
/// at least two tokens.
pub fn min_embedding_distance(vocab: &Vocab) -> f64 {
    assert!(vocab.size() >= 2, "need at least two tokens");
    debug_assert!(vocab.is_unit_norm(), "vocab must be unit norm");
    let mut max_sq = 0.0f64;
    for a in 0..vocab.size() {
        for b in (a + 1)..vocab.size() {
            let c = dot(vocab.embedding(a), vocab.embedding(b));
            max_sq = max_sq.max(c * c);
        }
    }
    (1.0 - max_sq).max(0.0).sqrt()
}

/// Gram-Schmidt gap: runs the process in the given order and returns the
/// minimum diagonal projection coefficient, which equals each step's residual
/// norm. Returns 0 when a vector is numerically in the span of its
/// predecessors (residual below 1e-9).
pub fn gram_schmidt_delta(tokens: &[Vec<f64>]) -> f64 {
    assert!(!tokens.is_empty());
    let d = tokens[0].len();
    assert!(tokens.iter().all(|t| t.len() == d));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(tokens.len());
    let mut delta = f64::INFINITY;
    for t in tokens {
        debug_assert!((l2(t) - 1.0).abs() <= 1e-9, "tokens must be unit norm");
        let mut r = t.clone();
        for u in &basis {
            let c = dot(&r, u);
            for (ri, ui) in r.iter_mut().zip(u) {
                *ri -= c * ui;
            }
        }
        let norm = l2(&r);
        if norm < 1e-9 {
            return 0.0;
        }
        r.iter_mut().for_each(|x| *x /= norm);
        // beta_jj = b_j . u_j = residual norm before normalization
        delta = delta.min(dot(t, &r).abs());
        basis.push(r);
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_token_exact_and_mixed() {
        let v = Vocab::orthonormal(8, 8);
        assert_eq!(nearest_token(v.embedding(7), &v).unwrap(), 7);
        // 0.9 e3 + 0.1 e5 decodes to 3
        let mut q = vec![0.0; 8];
        q[3] = 0.9;
        q[5] = 0.1;
        assert_eq!(nearest_token(&q, &v).unwrap(), 3);
    }

    #[test]
    fn nearest_token_tie_breaks_to_smallest_id() {
        let v = Vocab::orthonormal(8, 8);
        let mut q = vec![0.0; 8];
        q[2] = 0.5;
        q[4] = 0.5;
        assert_eq!(nearest_token(&q, &v).unwrap(), 2);
    }

    #[test]
    fn min_distance_examples() {
        let v = Vocab::orthonormal(4, 4);
        assert!((min_embedding_distance(&v) - 1.0).abs() < 1e-12);

        // two tokens with a.b = 0.6 -> Delta = 0.8
        let a = vec![1.0, 0.0];
        let b = vec![0.6, 0.8];
        let v2 = Vocab::from_rows(&[a, b]);
        assert!((min_embedding_distance(&v2) - 0.8).abs() < 1e-12);

        // antipodal pair -> Delta = 0
        let v3 = Vocab::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert!(min_embedding_distance(&v3).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_examples() {
        let v = Vocab::orthonormal(3, 3);
        let toks: Vec<Vec<f64>> = (0..3).map(|i| v.embedding(i).to_vec()).collect();
        assert!((gram_schmidt_delta(&toks) - 1.0).abs() < 1e-12);

        // two unit vectors at 60 degrees -> delta = sin 60
        let t = vec![vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]];
        assert!((gram_schmidt_delta(&t) - (3f64.sqrt() / 2.0)).abs() < 1e-12);

        // repeated vector -> 0
        let r = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(gram_schmidt_delta(&r), 0.0);
    }

    #[test]
    fn random_unit_respects_cos_cap() {
        let mut rng = crate::seeding::rng_from(3);
        let v = Vocab::random_unit(16, 24, 0.5, &mut rng);
        assert!(v.is_unit_norm());
        for a in 0..16 {
            for b in (a + 1)..16 {
                assert!(dot(v.embedding(a), v.embedding(b)).abs() <= 0.5 + 1e-12);
            }
        }
    }
}

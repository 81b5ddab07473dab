//! Suite evaluation: runs a CAT model over generated task instances and
//! scores exact-token-match accuracy via nearest-neighbor decoding.

use crate::cat::{cat_forward, cat_forward_all, CatModel};
use crate::numerics::{nearest_token, NumericsError, Vocab};
use crate::tasks::{verify, TaskInstance, TokenId};
use rayon::prelude::*;

/// Decodes each query of one instance with the model.
pub fn predict(
    m: &CatModel,
    vocab: &Vocab,
    inst: &TaskInstance,
) -> Result<Vec<TokenId>, NumericsError> {
    let x = vocab.embed(&inst.tokens);
    if inst.queries.len() == 1 {
        let out = cat_forward(&x, m, inst.queries[0].position)?;
        return Ok(vec![nearest_token(&out, vocab)? as TokenId]);
    }
    let all = cat_forward_all(&x, m)?;
    inst.queries
        .iter()
        .map(|q| Ok(nearest_token(all.row(q.position), vocab)? as TokenId))
        .collect()
}

/// Mean exact-match accuracy of the model over a suite.
pub fn suite_accuracy(m: &CatModel, vocab: &Vocab, suite: &[TaskInstance]) -> f64 {
    assert!(!suite.is_empty());
    let total: f64 = suite
        .par_iter()
        .map(|inst| match predict(m, vocab, inst) {
            Ok(pred) => verify(inst, &pred).unwrap_or(0.0),
            Err(_) => 0.0,
        })
        .sum();
    total / suite.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::build_ar_1d;
    use crate::numerics::AttnMode;
    use crate::tasks::gen_ar;

    #[test]
    fn exact_model_scores_one_on_small_suite() {
        let vocab = Vocab::orthonormal(16, 16);
        let m = build_ar_1d(AttnMode::Hard, 16);
        let suite: Vec<_> = (0..20).map(|s| gen_ar(24, 16, s).unwrap()).collect();
        assert_eq!(suite_accuracy(&m, &vocab, &suite), 1.0);
    }
}

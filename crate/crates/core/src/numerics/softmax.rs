use serde::{Deserialize, Serialize};

/// Attention temperature mode. `Soft(c)` scales scores by the inverse
/// temperature `c` before the softmax; `Hard` realizes the `c -> infinity`
/// limit, splitting mass uniformly over the score maximizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttnMode {
    Soft(f64),
    Hard,
}

/// Turns a score vector into a probability vector.
///
/// Ties in `Hard` mode split equally; this is what gives the golden attention
/// map its exact 1/2-1/2 shape when a query token occurs twice.
pub fn attention_weights(scores: &[f64], mode: AttnMode) -> Vec<f64> {
    assert!(!scores.is_empty());
    assert!(scores.iter().all(|s| s.is_finite()), "scores must be finite");
    match mode {
        AttnMode::Soft(c) => {
            assert!(c > 0.0, "inverse temperature must be positive");
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|&s| (c * (s - m)).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.iter().map(|e| e / z).collect()
        }
        AttnMode::Hard => {
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ties = scores.iter().filter(|&&s| s == m).count();
            let w = 1.0 / ties as f64;
            scores.iter().map(|&s| if s == m { w } else { 0.0 }).collect()
        }
    }
}

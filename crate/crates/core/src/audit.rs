//! Loss-landscape auditor for length generalization. Given a model of the
//! single-filter recall family `f(X) = X_v^T softmax(X W x_{L-1})`, it
//! measures the worst-case recall error at one length and checks the three
//! certified consequences: the value filter is close to the unit backward
//! delay, the attention map is close to the golden map, and the error grows
//! at most linearly with evaluation length.

use crate::cat::{cat_attention_map, cat_forward, CatModel};
use crate::eval::predict;
use crate::numerics::{min_embedding_distance, Filter, NumericsError, Vocab};
use crate::seeding::derive_seed;
use crate::tasks::{gen_ar, TaskInstance};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("model is not in the auditable family: {0}")]
    StructureViolation(String),
    #[error("degenerate vocabulary: {0}")]
    DegenerateVocab(String),
    #[error("numerics: {0}")]
    Numerics(#[from] NumericsError),
    #[error("task generation failed: {0}")]
    Task(String),
}

/// Gate for the small-error regime: the certified consequences hold once
/// `eps0 <= R0 / L`.
pub const R0: f64 = 0.125;

/// Golden attention map of a single-query recall instance: probability 1/2 at
/// each of the two occurrences of the final token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenMap {
    pub weights: Vec<f64>,
}

impl GoldenMap {
    pub fn of_instance(inst: &TaskInstance) -> Self {
        let toks = &inst.tokens;
        let q = *toks.last().unwrap();
        let mut weights = vec![0.0; toks.len()];
        let occ: Vec<usize> = (0..toks.len()).filter(|&i| toks[i] == q).collect();
        for i in &occ {
            weights[*i] = 1.0 / occ.len() as f64;
        }
        GoldenMap { weights }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Worst-case output error at the audited length.
    pub epsilon: f64,
    /// Normalized error `epsilon / Delta`.
    pub epsilon0: f64,
    /// `|F_v - D_{-1}|_1` in value-filter units (the weight matrix carries
    /// the factor of two).
    pub filter_l1_to_delay: f64,
    /// Worst golden-map l1 distance over the audit suite.
    pub map_l1_max: f64,
    /// Evaluation length -> worst output error.
    pub lengen_errors: Vec<(usize, f64)>,
    /// Evaluation length -> suite accuracy under nearest-token decoding.
    pub lengen_accuracy: Vec<(usize, f64)>,
    /// Fitted scaling constant: max over lengths of error / (L' eps0).
    pub r_hat: Option<f64>,
    /// Length the model was audited at.
    pub build_length: usize,
    /// True when `epsilon0 <= R0`, the small-error regime the filter and map
    /// guarantees assume.
    pub in_regime: bool,
}

/// Rejects models outside the auditable family: identity key/query filters,
/// no normalization, a nonnegative two-sided value filter, and a value weight
/// that is a nonnegative multiple of the identity.
pub fn validate_auditable_form(m: &CatModel) -> Result<(), AuditError> {
    let id = Filter::delay(0);
    if m.f_k != id || m.f_q != id || m.f_k_post.is_some() {
        return Err(AuditError::StructureViolation(
            "key and query filters must be the identity".into(),
        ));
    }
    if m.normalize_k || m.normalize_q || m.normalize_v {
        return Err(AuditError::StructureViolation(
            "the audited family carries no row normalization".into(),
        ));
    }
    if m.f_v.taps().iter().any(|&t| t < 0.0) {
        return Err(AuditError::StructureViolation(
            "value filter must have nonnegative taps".into(),
        ));
    }
    match m.w_v.scalar_identity_factor(1e-12) {
        Some(a) if a >= 0.0 => {}
        _ => {
            return Err(AuditError::StructureViolation(
                "value weight must be a nonnegative multiple of the identity".into(),
            ));
        }
    }
    Ok(())
}

fn output_error(m: &CatModel, vocab: &Vocab, inst: &TaskInstance) -> Result<f64, AuditError> {
    let x = vocab.embed(&inst.tokens);
    let out = cat_forward(&x, m, inst.tokens.len() - 1)?;
    let y = vocab.embedding(inst.answers[0] as usize);
    Ok(out
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// The structured adversarial family: the query token at one varying position,
/// a single repeated filler everywhere else. For each query token the filler
/// is the token with the highest key-query similarity under the model's own
/// weights; this family drives the worst case.
fn adversarial_instances(m: &CatModel, vocab: &Vocab, l: usize) -> Vec<TaskInstance> {
    let mut out = Vec::new();
    for q in 0..vocab.size() {
        let wq = m.w_q.row_vec_mul(vocab.embedding(q));
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for x in 0..vocab.size() {
            if x == q {
                continue;
            }
            let kx = m.w_k.row_vec_mul(vocab.embedding(x));
            let s: f64 = kx.iter().zip(&wq).map(|(a, b)| a * b).sum();
            if s > best_score {
                best_score = s;
                best = x;
            }
        }
        let v = best as u32;
        for i in 0..l - 1 {
            let mut tokens = vec![v; l];
            tokens[i] = q as u32;
            tokens[l - 1] = q as u32;
            let answer = if i == l - 2 { q as u32 } else { v };
            out.push(TaskInstance {
                kind: crate::tasks::TaskKind::Ar,
                tokens,
                queries: vec![crate::tasks::Query {
                    position: l - 1,
                    n_gram_len: 1,
                }],
                answers: vec![answer],
                seed: 0,
            });
        }
    }
    out
}

fn random_suite(
    l: usize,
    vocab: &Vocab,
    suite_size: usize,
    seed: u64,
) -> Result<Vec<TaskInstance>, AuditError> {
    (0..suite_size)
        .map(|i| {
            gen_ar(l, vocab.size() as u32, derive_seed(seed, 0xa0d1, i as u64))
                .map_err(|e| AuditError::Task(e.to_string()))
        })
        .collect()
}

/// Worst-case output error of the model over random recall instances plus,
/// by default, the structured adversarial family.
pub fn measure_epsilon(
    m: &CatModel,
    vocab: &Vocab,
    l: usize,
    suite_size: usize,
    include_adversarial: bool,
    seed: u64,
) -> Result<f64, AuditError> {
    validate_auditable_form(m)?;
    let mut suite = random_suite(l, vocab, suite_size, seed)?;
    if include_adversarial {
        suite.extend(adversarial_instances(m, vocab, l));
    }
    let errs: Result<Vec<f64>, AuditError> = suite
        .par_iter()
        .map(|inst| output_error(m, vocab, inst))
        .collect();
    Ok(errs?.into_iter().fold(0.0, f64::max))
}

/// l1 distance between the model's attention map and the golden map of a
/// single-query recall instance.
pub fn golden_map_distance(
    m: &CatModel,
    vocab: &Vocab,
    inst: &TaskInstance,
) -> Result<f64, AuditError> {
    let x = vocab.embed(&inst.tokens);
    let map = cat_attention_map(&x, m, inst.tokens.len() - 1)?;
    let golden = GoldenMap::of_instance(inst);
    Ok(map
        .iter()
        .zip(&golden.weights)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Worst golden-map distance over a random suite plus the adversarial family.
pub fn golden_map_distance_max(
    m: &CatModel,
    vocab: &Vocab,
    l: usize,
    suite_size: usize,
    seed: u64,
) -> Result<f64, AuditError> {
    let mut suite = random_suite(l, vocab, suite_size, seed)?;
    suite.extend(adversarial_instances(m, vocab, l));
    let ds: Result<Vec<f64>, AuditError> = suite
        .par_iter()
        .map(|inst| golden_map_distance(m, vocab, inst))
        .collect();
    Ok(ds?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthGenCurve {
    /// (L', max error, accuracy) per evaluation length.
    pub rows: Vec<(usize, f64, f64)>,
    /// Max over lengths of error / (L' eps0); absent when eps0 = 0.
    pub r_hat: Option<f64>,
}

/// Evaluates worst-case error and decode accuracy at each length, using the
/// normalized error `eps0` measured at the build length to fit the scaling
/// constant.
pub fn length_gen_curve(
    m: &CatModel,
    vocab: &Vocab,
    lengths: &[usize],
    suite_size: usize,
    eps0: f64,
    seed: u64,
) -> Result<LengthGenCurve, AuditError> {
    let mut rows = Vec::with_capacity(lengths.len());
    let mut r_hat: Option<f64> = None;
    for (li, &lp) in lengths.iter().enumerate() {
        let err = measure_epsilon(m, vocab, lp, suite_size, true, derive_seed(seed, 0x9a, li as u64))?;
        let suite = random_suite(lp, vocab, suite_size, derive_seed(seed, 0x9b, li as u64))?;
        let hits: usize = suite
            .par_iter()
            .map(|inst| match predict(m, vocab, inst) {
                Ok(p) => usize::from(p == inst.answers),
                Err(_) => 0,
            })
            .sum();
        let acc = hits as f64 / suite.len() as f64;
        rows.push((lp, err, acc));
        if eps0 > 0.0 {
            let r = err / (lp as f64 * eps0);
            r_hat = Some(r_hat.map_or(r, |cur: f64| cur.max(r)));
        }
    }
    Ok(LengthGenCurve { rows, r_hat })
}

impl LengthGenCurve {
    /// CSV with columns `L_prime,max_error,accuracy`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "L_prime,max_error,accuracy")?;
        for (lp, err, acc) in &self.rows {
            writeln!(w, "{lp},{err},{acc}")?;
        }
        Ok(())
    }
}

/// Full audit: measures epsilon at `l`, derives `eps0`, and gathers the
/// filter distance, worst map distance, and the length-generalization curve.
pub fn run_audit(
    m: &CatModel,
    vocab: &Vocab,
    l: usize,
    lengths: &[usize],
    suite_size: usize,
    seed: u64,
) -> Result<AuditReport, AuditError> {
    let epsilon = measure_epsilon(m, vocab, l, suite_size, true, seed)?;
    let delta = min_embedding_distance(vocab);
    if delta <= 0.0 {
        return Err(AuditError::DegenerateVocab(
            "minimum embedding distance is zero".into(),
        ));
    }
    let epsilon0 = epsilon / delta;
    let filter_l1_to_delay = m.f_v.l1_distance(&Filter::delay(-1));
    let map_l1_max = golden_map_distance_max(m, vocab, l, suite_size, derive_seed(seed, 0x90, 1))?;
    let curve = length_gen_curve(m, vocab, lengths, suite_size, epsilon0, derive_seed(seed, 0x90, 2))?;
    Ok(AuditReport {
        epsilon,
        epsilon0,
        filter_l1_to_delay,
        map_l1_max,
        lengen_errors: curve.rows.iter().map(|&(l, e, _)| (l, e)).collect(),
        lengen_accuracy: curve.rows.iter().map(|&(l, _, a)| (l, a)).collect(),
        r_hat: curve.r_hat,
        build_length: l,
        in_regime: epsilon0 <= R0,
    })
}

/// The certified filter bound: `|F_v - D_{-1}|_1 <= L * eps0`.
pub fn check_filter_bound(report: &AuditReport) -> bool {
    report.filter_l1_to_delay <= report.build_length as f64 * report.epsilon0
}

/// Which normalization maps raw error to `eps0`.
pub enum NormalizationAssumption<'a> {
    /// Positive minimum embedding distance: `eps0 = eps / Delta`.
    EmbeddingGap,
    /// Linear independence of any `2N` tokens: `eps0 = eps e^(2N/delta) / delta`
    /// with `delta` the Gram-Schmidt gap of the given token subset.
    LinearIndependence { n: usize, tokens: &'a [Vec<f64>] },
}

/// Normalized error under either assumption.
pub fn epsilon0(
    eps: f64,
    vocab: &Vocab,
    assumption: NormalizationAssumption<'_>,
) -> Result<f64, AuditError> {
    match assumption {
        NormalizationAssumption::EmbeddingGap => {
            let delta = min_embedding_distance(vocab);
            if delta <= 0.0 {
                return Err(AuditError::DegenerateVocab(
                    "minimum embedding distance is zero".into(),
                ));
            }
            Ok(eps / delta)
        }
        NormalizationAssumption::LinearIndependence { n, tokens } => {
            assert!(tokens.len() <= 2 * n, "subset may hold at most 2N tokens");
            let delta = crate::numerics::gram_schmidt_delta(tokens);
            if delta <= 0.0 {
                return Err(AuditError::DegenerateVocab(
                    "token subset is linearly dependent".into(),
                ));
            }
            Ok(eps * (2.0 * n as f64 / delta).exp() / delta)
        }
    }
}

/// The recall family used in perturbation sweeps: identity key/query paths,
/// value filter `D_{-1} + eta D_0`, value weight `2 I`.
pub fn perturbed_value_delay(eta: f64, mode: crate::numerics::AttnMode, d: usize) -> CatModel {
    let mut m = crate::constructions::build_nar_value_delay(&Filter::delay(0), mode, d);
    m.normalize_k = false;
    m.normalize_q = false;
    m.f_v = Filter::new(vec![1.0, eta], -1);
    m
}

/// Negative control: the value path reads the key itself instead of its
/// successor, so recall retrieves the query token.
pub fn corrupted_value_model(mode: crate::numerics::AttnMode, d: usize) -> CatModel {
    let mut m = perturbed_value_delay(0.0, mode, d);
    m.f_v = Filter::delay(0);
    m
}

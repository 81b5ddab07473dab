//! Landmark CAT: a long convolution summarizes each block of the context into
//! a landmark token, hard attention over landmarks picks the block to read,
//! and dense local attention over the retrieved plus final blocks recovers the
//! value. Trials run under the random context model in two modes: `Full`
//! materializes the context and executes the pipeline; `Reduced` samples only
//! the sufficient statistics of the same success event.

use crate::numerics::EmbeddedSeq;
use crate::seeding::{derive_rng, derive_seed};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LcatError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bisection bracket failed after widening twice (rate not monotone in d?)")]
    NonMonotone,
}

/// Landmark construction: block sums, or exponential smoothing over the whole
/// prefix sampled at block ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    BlockMean,
    ExpSmoothing { rho: f64 },
}

impl FilterKind {
    /// Smoothing with the canonical decay `rho = e^(-1/B)`, so one block of
    /// history attenuates by `e^(-1)`.
    pub fn exp_smoothing_default(b: usize) -> FilterKind {
        FilterKind::ExpSmoothing {
            rho: (-1.0 / b as f64).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcatConfig {
    /// Context length.
    pub l: usize,
    /// Block size.
    pub b: usize,
    /// Embedding dimension.
    pub d: usize,
    /// Per-token noise variance; entries are N(0, sigma2/d).
    pub sigma2: f64,
    pub filter_kind: FilterKind,
    pub sim_mode: SimMode,
}

/// Full mode materializes an `L x d` context per trial.
pub const FULL_MODE_MAX_L: usize = 1 << 16;

impl LcatConfig {
    pub fn n_blocks(&self) -> usize {
        self.l.div_ceil(self.b)
    }

    pub fn validate(&self) -> Result<(), LcatError> {
        if self.b < 1 || self.d < 1 {
            return Err(LcatError::InvalidConfig("need B >= 1 and d >= 1".into()));
        }
        if self.b > self.l {
            return Err(LcatError::InvalidConfig("block size exceeds context".into()));
        }
        if self.n_blocks() < 2 {
            return Err(LcatError::InvalidConfig("need at least two blocks".into()));
        }
        if !self.sigma2.is_finite() || self.sigma2 <= 0.0 {
            return Err(LcatError::InvalidConfig("sigma2 must be positive".into()));
        }
        if self.sim_mode == SimMode::Full && self.l > FULL_MODE_MAX_L {
            return Err(LcatError::InvalidConfig(format!(
                "full mode is limited to L <= {FULL_MODE_MAX_L}; use reduced mode"
            )));
        }
        if self.sim_mode == SimMode::Reduced && !self.l.is_multiple_of(self.b) {
            return Err(LcatError::InvalidConfig(
                "reduced-mode statistics assume B divides L".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Hard attention over landmarks picked the planted block.
    pub block_correct: bool,
    /// The retrieved output equals the value embedding.
    pub value_correct: bool,
    pub seed: u64,
}

/// Draws the planted copy's location: a uniformly random position outside the
/// final block. The draw order is independent of `d`, so trials share noise
/// across dimensions (common random numbers make the success event monotone
/// in `d` trial by trial).
fn sample_planted_position(cfg: &LcatConfig, rng: &mut ChaCha8Rng) -> usize {
    let beta = rng.gen_range(0..cfg.n_blocks() - 1);
    let offset = rng.gen_range(0..cfg.b);
    beta * cfg.b + offset
}

/// Random context: the query is a fixed unit vector occurring at the planted
/// position and at the final position; every other token has iid N(0,
/// sigma2/d) entries. Returns the context, the query position, and the
/// planted position.
pub fn sample_random_context(cfg: &LcatConfig, seed: u64) -> (EmbeddedSeq, usize, usize) {
    let mut rng = derive_rng(seed, 0x1ca7, 0);
    let planted = sample_planted_position(cfg, &mut rng);
    let scale = (cfg.sigma2 / cfg.d as f64).sqrt();
    let mut x = EmbeddedSeq::zeros(cfg.l, cfg.d);
    for i in 0..cfg.l {
        let row = x.row_mut(i);
        if i == planted || i == cfg.l - 1 {
            row[0] = 1.0;
        } else {
            for v in row.iter_mut() {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    (x, cfg.l - 1, planted)
}

/// Landmarks: the key convolution sampled at every block end.
pub fn build_landmarks(x: &EmbeddedSeq, cfg: &LcatConfig) -> EmbeddedSeq {
    let lbar = cfg.n_blocks();
    let d = x.dim();
    let mut out = EmbeddedSeq::zeros(lbar, d);
    match cfg.filter_kind {
        FilterKind::BlockMean => {
            for i in 0..lbar {
                let start = i * cfg.b;
                let end = ((i + 1) * cfg.b).min(x.len());
                let row = out.row_mut(i);
                for t in start..end {
                    for (o, &v) in row.iter_mut().zip(x.row(t)) {
                        *o += v;
                    }
                }
            }
        }
        FilterKind::ExpSmoothing { rho } => {
            let mut state = vec![0.0; d];
            for t in 0..x.len() {
                for (s, &v) in state.iter_mut().zip(x.row(t)) {
                    *s = rho * *s + v;
                }
                if (t + 1) % cfg.b == 0 || t + 1 == x.len() {
                    let i = t / cfg.b;
                    out.row_mut(i).copy_from_slice(&state);
                }
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One full-pipeline trial over a materialized context. `macs` counts the
/// multiply-accumulates of the score and aggregation stages when provided.
fn full_trial_core(
    x: &EmbeddedSeq,
    cfg: &LcatConfig,
    query: &[f64],
    planted: usize,
    macs: Option<&mut u64>,
) -> (bool, bool) {
    let lbar = cfg.n_blocks();
    let final_block = (cfg.l - 1) / cfg.b;
    let landmarks = build_landmarks(x, cfg);
    let mut mac_count = 0u64;

    // Hard attention over landmarks, excluding the query's own block; ties
    // break to the lowest block index.
    let mut best_block = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for j in 0..lbar {
        if j == final_block {
            continue;
        }
        let s = dot(landmarks.row(j), query);
        mac_count += cfg.d as u64;
        if s > best_score {
            best_score = s;
            best_block = j;
        }
    }
    let block_correct = best_block == planted / cfg.b;

    // Dense local attention over the retrieved block and the final block in
    // the infinite-temperature limit: argmax set with equal tie weights.
    let mut positions: Vec<usize> = Vec::with_capacity(2 * cfg.b);
    let sel_start = best_block * cfg.b;
    positions.extend(sel_start..((best_block + 1) * cfg.b).min(cfg.l));
    let fin_start = final_block * cfg.b;
    positions.extend(fin_start..cfg.l);
    let scores: Vec<f64> = positions
        .iter()
        .map(|&p| {
            mac_count += cfg.d as u64;
            dot(x.row(p), query)
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = positions
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == max)
        .map(|(&p, _)| p)
        .collect();
    // Value path: backward delay with weight two, zero past the end.
    let mut out = vec![0.0; cfg.d];
    let w = 1.0 / ties.len() as f64;
    for &p in &ties {
        if p + 1 < cfg.l {
            for (o, &v) in out.iter_mut().zip(x.row(p + 1)) {
                *o += w * 2.0 * v;
            }
        }
        mac_count += cfg.d as u64;
    }
    let value = x.row(planted + 1);
    let err2: f64 = out
        .iter()
        .zip(value)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let value_correct = err2.sqrt() <= 1e-6;
    if let Some(m) = macs {
        *m = mac_count;
    }
    (block_correct, value_correct)
}

fn run_trial_full(cfg: &LcatConfig, seed: u64) -> TrialOutcome {
    let (x, qpos, planted) = sample_random_context(cfg, seed);
    let query = x.row(qpos).to_vec();
    let (block_correct, value_correct) = full_trial_core(&x, cfg, &query, planted, None);
    TrialOutcome {
        block_correct,
        value_correct: block_correct && value_correct,
        seed,
    }
}

/// Reduced-form trial: samples the landmark correlations and the local
/// max-correlation statistic directly.
///
/// Block-mean landmarks are independent across blocks. Smoothed landmarks are
/// not: each block-end state is `rho^B` times the previous one plus a fresh
/// block contribution, so the correlations follow the same first-order
/// recurrence with independent per-block innovations.
fn run_trial_reduced(cfg: &LcatConfig, seed: u64) -> TrialOutcome {
    let mut rng = derive_rng(seed, 0x1ca7, 0);
    let planted = sample_planted_position(cfg, &mut rng);
    let beta = planted / cfg.b;
    let lbar = cfg.n_blocks();
    let sigma = cfg.sigma2.sqrt();
    let db = (cfg.d as f64 / cfg.b as f64).sqrt();

    // Correlations g_i = <landmark_i, q> * sqrt(d/B) for nonfinal blocks.
    let mut g = vec![0.0f64; lbar - 1];
    match cfg.filter_kind {
        FilterKind::BlockMean => {
            for (i, gi) in g.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                if i == beta {
                    *gi = db + sigma * (1.0 - 1.0 / cfg.b as f64).sqrt() * z;
                } else {
                    *gi = sigma * z;
                }
            }
        }
        FilterKind::ExpSmoothing { rho } => {
            // Raw correlations follow h_i = rho^B h_{i-1} + w_i with
            // independent per-block innovations. One block contributes
            // variance sigma2/d * sum_{k<B} rho^{2k}; in the planted block
            // the planted token's slot is deterministic (mean rho^lag) and
            // its variance share is removed. Scaling by sqrt(d/B) gives g_i.
            let r2 = rho * rho;
            let sum_b = if (1.0 - r2).abs() < 1e-15 {
                cfg.b as f64
            } else {
                (1.0 - r2.powi(cfg.b as i32)) / (1.0 - r2)
            };
            let carry = rho.powi(cfg.b as i32);
            let unit = cfg.sigma2 / cfg.d as f64;
            let mut h = 0.0f64;
            for (i, gi) in g.iter_mut().enumerate() {
                let block_end = (i + 1) * cfg.b - 1;
                let mut mean = 0.0;
                let mut var = unit * sum_b;
                if i == beta {
                    let lag = (block_end - planted) as i32;
                    mean = rho.powi(lag);
                    var -= unit * r2.powi(lag);
                }
                let z: f64 = rng.sample(StandardNormal);
                h = carry * h + mean + var.max(0.0).sqrt() * z;
                *gi = db * h;
            }
        }
    }

    let g_beta = g[beta];
    let g_max_other = g
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != beta)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let block_correct = g_beta > g_max_other;

    // Local attention succeeds when every noise correlation in the two
    // selected blocks stays below the query's unit self-correlation.
    let n_noise = 2 * cfg.b - 2;
    let noise_scale = sigma / (cfg.d as f64).sqrt();
    let mut local_ok = true;
    for _ in 0..n_noise {
        let z: f64 = rng.sample(StandardNormal);
        if noise_scale * z >= 1.0 {
            local_ok = false;
        }
    }
    TrialOutcome {
        block_correct,
        value_correct: block_correct && local_ok,
        seed,
    }
}

/// Runs one trial in the configured mode.
pub fn run_trial(cfg: &LcatConfig, seed: u64) -> TrialOutcome {
    debug_assert!(cfg.validate().is_ok());
    match cfg.sim_mode {
        SimMode::Full => run_trial_full(cfg, seed),
        SimMode::Reduced => run_trial_reduced(cfg, seed),
    }
}

/// Full-pipeline trial that also reports the multiply-accumulate count of the
/// attention stages; used to cross-check `complexity_count`.
pub fn run_trial_counting(cfg: &LcatConfig, seed: u64) -> (TrialOutcome, u64) {
    let (x, qpos, planted) = sample_random_context(cfg, seed);
    let query = x.row(qpos).to_vec();
    let mut macs = 0u64;
    let (block_correct, value_correct) = full_trial_core(&x, cfg, &query, planted, Some(&mut macs));
    (
        TrialOutcome {
            block_correct,
            value_correct: block_correct && value_correct,
            seed,
        },
        macs,
    )
}

/// Success counts over `trials` trials; parallel, order-independent.
pub fn success_counts(cfg: &LcatConfig, trials: usize, seed: u64) -> (u64, u64) {
    let (block, value) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = run_trial(cfg, derive_seed(seed, 0x7214, i as u64));
            (u64::from(t.block_correct), u64::from(t.value_correct))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (block, value)
}

/// Empirical end-to-end success rate.
pub fn success_rate(cfg: &LcatConfig, trials: usize, seed: u64) -> f64 {
    let (_, value) = success_counts(cfg, trials, seed);
    value as f64 / trials as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdKind {
    /// Recall succeeds w.h.p. above `2 sigma2 B (sqrt(log Lbar) + t)^2`.
    Sufficient,
    /// Recall fails w.h.p. below `2 sigma2 B (sqrt((1-eps) log Lbar) - t)^2`.
    Converse { eps: f64 },
    /// Uniform recall over an `r`-dimensional query subspace:
    /// `2 sigma2 B (sqrt(log Lbar) + sqrt(r) + t)^2`.
    Uniform { r: usize },
    /// Exponential smoothing: `50 sigma2 B (sqrt(log Lbar) + t)^2`.
    ExpSmoothing,
}

/// The detection-threshold formulas, rounded up to an integer dimension.
pub fn theoretical_threshold(cfg: &LcatConfig, t: f64, kind: ThresholdKind) -> usize {
    let lbar = cfg.n_blocks() as f64;
    assert!(lbar >= 2.0);
    let log_lbar = lbar.ln();
    let b = cfg.b as f64;
    let v = match kind {
        ThresholdKind::Sufficient => 2.0 * cfg.sigma2 * b * (log_lbar.sqrt() + t).powi(2),
        ThresholdKind::Converse { eps } => {
            let base = ((1.0 - eps) * log_lbar).sqrt() - t;
            2.0 * cfg.sigma2 * b * base.max(0.0).powi(2)
        }
        ThresholdKind::Uniform { r } => {
            2.0 * cfg.sigma2 * b * (log_lbar.sqrt() + (r as f64).sqrt() + t).powi(2)
        }
        ThresholdKind::ExpSmoothing => 50.0 * cfg.sigma2 * b * (log_lbar.sqrt() + t).powi(2),
    };
    v.ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub b: usize,
    pub l: usize,
    pub sigma2: f64,
    pub filter_kind: FilterKind,
    /// Smallest d reaching each target rate.
    pub d_at_targets: Vec<(f64, usize)>,
    pub d_theory: usize,
    pub trials: usize,
    pub non_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with one row per block size:
    /// `B,L,sigma2,filter_kind,d_10,d_50,d_90,d_theory,trials`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "B,L,sigma2,filter_kind,d_10,d_50,d_90,d_theory,trials")?;
        for r in &self.rows {
            let kind = match r.filter_kind {
                FilterKind::BlockMean => "block_mean".to_string(),
                FilterKind::ExpSmoothing { rho } => format!("exp_smoothing(rho={rho})"),
            };
            let d_of = |t: f64| {
                r.d_at_targets
                    .iter()
                    .find(|(tt, _)| (tt - t).abs() < 1e-12)
                    .map(|&(_, d)| d.to_string())
                    .unwrap_or_default()
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.b,
                r.l,
                r.sigma2,
                kind,
                d_of(0.1),
                d_of(0.5),
                d_of(0.9),
                r.d_theory,
                r.trials
            )?;
        }
        Ok(())
    }
}

/// Locates, for each block size, the smallest embedding dimension reaching
/// each target success rate by integer bisection. Trials reuse the same
/// random streams across `d` (the per-trial success event is monotone in `d`
/// under common random numbers), so the empirical rate is exactly monotone
/// and bisection is well posed.
pub fn phase_transition(
    template: &LcatConfig,
    b_grid: &[usize],
    targets: &[f64],
    trials: usize,
    seed: u64,
) -> Result<SweepResult, LcatError> {
    let mut rows = Vec::with_capacity(b_grid.len());
    for (bi, &b) in b_grid.iter().enumerate() {
        let mk = |d: usize| LcatConfig {
            b,
            d,
            ..*template
        };
        mk(1).validate()?;
        let d_theory = theoretical_threshold(&mk(1), 0.0, match template.filter_kind {
            FilterKind::BlockMean => ThresholdKind::Sufficient,
            FilterKind::ExpSmoothing { .. } => ThresholdKind::ExpSmoothing,
        });
        let point_seed = derive_seed(seed, 0xb15e, bi as u64);
        let rate = |d: usize| success_rate(&mk(d), trials, point_seed);

        let mut non_monotone = false;
        let mut d_at_targets = Vec::with_capacity(targets.len());
        for &target in targets {
            let mut lo = 0usize; // rate(0) treated as 0: no embedding, no recall
            let mut hi = (4 * d_theory).max(2);
            let mut widenings = 0;
            while rate(hi) < target {
                widenings += 1;
                if widenings > 2 {
                    non_monotone = true;
                    break;
                }
                hi *= 2;
            }
            if non_monotone {
                d_at_targets.push((target, 0));
                continue;
            }
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if mid == 0 || rate(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            d_at_targets.push((target, hi));
        }
        rows.push(SweepRow {
            b,
            l: template.l,
            sigma2: template.sigma2,
            filter_kind: template.filter_kind,
            d_at_targets,
            d_theory,
            trials,
            non_monotone,
        });
    }
    Ok(SweepResult { rows })
}

/// Uniform recall over an `r`-dimensional query subspace, lower-bounded by an
/// intersection over `m` sampled queries per context: the noise context and
/// the planted position are fixed, each sampled query is planted there in
/// turn, and the trial succeeds only if every query is retrieved.
pub fn uniform_query_rate(
    cfg: &LcatConfig,
    r: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, LcatError> {
    cfg.validate()?;
    if r > cfg.d {
        return Err(LcatError::InvalidConfig("subspace dim exceeds d".into()));
    }
    if cfg.l > FULL_MODE_MAX_L {
        return Err(LcatError::InvalidConfig(
            "uniform-query testing runs the full pipeline; keep L moderate".into(),
        ));
    }
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|i| {
            let trial_seed = derive_seed(seed, 0x0857, i as u64);
            let mut rng = derive_rng(trial_seed, 0x0857, 0);
            let planted = sample_planted_position(cfg, &mut rng);
            let scale = (cfg.sigma2 / cfg.d as f64).sqrt();
            let mut x = EmbeddedSeq::zeros(cfg.l, cfg.d);
            for t in 0..cfg.l {
                if t == planted || t == cfg.l - 1 {
                    continue;
                }
                for v in x.row_mut(t).iter_mut() {
                    *v = scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
            // Nested query stream: the first m queries of a longer run are a
            // prefix, so the all-m success event shrinks as m grows.
            let mut ok = true;
            for _ in 0..m {
                let q = if r == 0 {
                    let mut q = vec![0.0; cfg.d];
                    q[0] = 1.0;
                    q
                } else {
                    let mut q = vec![0.0; cfg.d];
                    let mut norm2 = 0.0;
                    for qv in q.iter_mut().take(r) {
                        let z: f64 = rng.sample(StandardNormal);
                        *qv = z;
                        norm2 += z * z;
                    }
                    let norm = norm2.sqrt().max(1e-300);
                    q.iter_mut().for_each(|v| *v /= norm);
                    q
                };
                x.row_mut(planted).copy_from_slice(&q);
                x.row_mut(cfg.l - 1).copy_from_slice(&q);
                let (bc, vc) = full_trial_core(&x, cfg, &q, planted, None);
                if !(bc && vc) {
                    ok = false;
                    break;
                }
            }
            u64::from(ok)
        })
        .sum();
    Ok(successes as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCount {
    /// Multiply-accumulates for one query: landmark scores, local scores, and
    /// the two-row hard aggregation.
    pub lcat_ops: u64,
    /// Dense attention for one query: scores over L plus the golden two-row
    /// aggregation.
    pub dense_ops: u64,
    /// Recall capacity `d * Lbar`.
    pub recall_capacity: u64,
    /// Required memory `L`.
    pub required_memory: u64,
}

impl ComplexityCount {
    pub fn capacity_ok(&self) -> bool {
        self.recall_capacity >= self.required_memory
    }
}

/// Exact operation counts of the implemented pipeline for one query.
pub fn complexity_count(cfg: &LcatConfig) -> ComplexityCount {
    let lbar = cfg.n_blocks() as u64;
    let d = cfg.d as u64;
    let local = 2 * cfg.b.min(cfg.l) as u64;
    ComplexityCount {
        lcat_ops: d * (lbar - 1) + d * local + 2 * d,
        dense_ops: d * cfg.l as u64 + 2 * d,
        recall_capacity: d * lbar,
        required_memory: cfg.l as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(l: usize, b: usize, d: usize, kind: FilterKind, mode: SimMode) -> LcatConfig {
        LcatConfig {
            l,
            b,
            d,
            sigma2: 1.0,
            filter_kind: kind,
            sim_mode: mode,
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(64, 8, 4, FilterKind::BlockMean, SimMode::Full).validate().is_ok());
        assert!(cfg(8, 16, 4, FilterKind::BlockMean, SimMode::Full).validate().is_err());
        assert!(cfg(8, 8, 4, FilterKind::BlockMean, SimMode::Full).validate().is_err());
        let big = cfg(1 << 20, 1 << 5, 4, FilterKind::BlockMean, SimMode::Full);
        assert!(big.validate().is_err());
        let big_reduced = LcatConfig {
            sim_mode: SimMode::Reduced,
            ..big
        };
        assert!(big_reduced.validate().is_ok());
    }

    #[test]
    fn planted_position_avoids_the_final_block() {
        let c = cfg(64, 8, 4, FilterKind::BlockMean, SimMode::Full);
        for seed in 0..10_000 {
            let (_, qpos, planted) = sample_random_context(&c, seed);
            assert_eq!(qpos, 63);
            assert!(planted / c.b < c.n_blocks() - 1, "seed {seed}");
        }
    }

    #[test]
    fn uniform_rate_with_single_fixed_query_matches_plain_trials() {
        let c = cfg(512, 8, 72, FilterKind::BlockMean, SimMode::Full);
        let trials = 2000;
        let uni = uniform_query_rate(&c, 0, 1, trials, 21).unwrap();
        let plain = success_rate(&c, trials, 22);
        let pool = (uni + plain) / 2.0;
        let se = (pool * (1.0 - pool) * 2.0 / trials as f64).sqrt();
        assert!(
            (uni - plain).abs() <= 2.0 * se.max(1e-3),
            "uniform {uni} vs plain {plain} (se {se})"
        );
    }

    #[test]
    fn uniform_rate_meets_the_subspace_threshold() {
        let base = cfg(1 << 10, 16, 1, FilterKind::BlockMean, SimMode::Full);
        let r = 4;
        let d = theoretical_threshold(&base, 2.0, ThresholdKind::Uniform { r });
        let rate = uniform_query_rate(&LcatConfig { d, ..base }, r, 64, 300, 23).unwrap();
        assert!(rate >= 0.9, "rate {rate} at d = {d}");
    }

    #[test]
    fn noise_variance_matches_the_model() {
        // Per-entry variance of noise tokens is sigma2/d within 3 standard
        // errors of the sample estimate.
        let c = cfg(32, 8, 16, FilterKind::BlockMean, SimMode::Full);
        let mut sum2 = 0.0;
        let mut count = 0usize;
        for seed in 0..400 {
            let (x, qpos, planted) = sample_random_context(&c, seed);
            for i in 0..c.l {
                if i == qpos || i == planted {
                    continue;
                }
                for &v in x.row(i) {
                    sum2 += v * v;
                    count += 1;
                }
            }
        }
        let want = c.sigma2 / c.d as f64;
        let got = sum2 / count as f64;
        // Var of v^2 is 2 want^2 for Gaussians.
        let se = (2.0 * want * want / count as f64).sqrt();
        assert!((got - want).abs() <= 3.0 * se, "got {got}, want {want}");
    }

    #[test]
    fn block_mean_landmark_edges() {
        // B = 1: landmarks are the tokens.
        let c1 = cfg(8, 1, 4, FilterKind::BlockMean, SimMode::Full);
        let (x, _, _) = sample_random_context(&c1, 3);
        let lm = build_landmarks(&x, &c1);
        assert_eq!(lm, x);

        // B = L: a single landmark holding the column sums.
        let cl = LcatConfig {
            b: 8,
            l: 8,
            ..c1
        };
        let lm1 = build_landmarks(&x, &cl);
        assert_eq!(lm1.len(), 1);
        for c in 0..4 {
            let want: f64 = (0..8).map(|i| x.row(i)[c]).sum();
            assert!((lm1.row(0)[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_recurrence_equals_materialized_taps() {
        let c = cfg(64, 8, 6, FilterKind::exp_smoothing_default(8), SimMode::Full);
        let FilterKind::ExpSmoothing { rho } = c.filter_kind else {
            unreachable!()
        };
        let (x, _, _) = sample_random_context(&c, 9);
        let lm = build_landmarks(&x, &c);
        for i in 0..c.n_blocks() {
            let end = (i + 1) * c.b - 1;
            for col in 0..c.d {
                let want: f64 = (0..=end)
                    .map(|t| rho.powi((end - t) as i32) * x.row(t)[col])
                    .sum();
                assert!(
                    (lm.row(i)[col] - want).abs() < 1e-9,
                    "block {i} col {col}"
                );
            }
        }
    }

    #[test]
    fn noiseless_limit_always_succeeds() {
        for kind in [FilterKind::BlockMean, FilterKind::exp_smoothing_default(8)] {
            for mode in [SimMode::Full, SimMode::Reduced] {
                let c = LcatConfig {
                    l: 64,
                    b: 8,
                    d: 4,
                    sigma2: 1e-6,
                    filter_kind: kind,
                    sim_mode: mode,
                };
                let rate = success_rate(&c, 200, 0);
                assert!(rate > 0.99, "kind {kind:?} mode {mode:?} rate {rate}");
            }
        }
    }

    #[test]
    fn value_correct_implies_block_correct() {
        let c = cfg(128, 16, 24, FilterKind::BlockMean, SimMode::Full);
        for seed in 0..300 {
            let t = run_trial(&c, seed);
            assert!(!t.value_correct || t.block_correct);
        }
    }

    #[test]
    fn far_below_threshold_recall_fails() {
        // d = B at many blocks: success should be well under one half.
        let c = cfg(1 << 13, 8, 8, FilterKind::BlockMean, SimMode::Reduced);
        let rate = success_rate(&c, 400, 1);
        assert!(rate < 0.5, "rate {rate}");
    }

    #[test]
    fn threshold_formulas() {
        // B=1024, Lbar=1024, sigma2=1, t=0: ceil(2*1024*ln 1024) = 14196.
        let c = cfg(1 << 20, 1 << 10, 4, FilterKind::BlockMean, SimMode::Reduced);
        assert_eq!(theoretical_threshold(&c, 0.0, ThresholdKind::Sufficient), 14196);

        // B=1, Lbar=2: ceil(2 ln 2) = 2.
        let c2 = cfg(2, 1, 4, FilterKind::BlockMean, SimMode::Reduced);
        assert_eq!(theoretical_threshold(&c2, 0.0, ThresholdKind::Sufficient), 2);

        // Uniform(r) exceeds sufficient by the (sqrt(log)+sqrt(r)+t)^2 ratio.
        let s = theoretical_threshold(&c, 2.0, ThresholdKind::Sufficient) as f64;
        let u = theoretical_threshold(&c, 2.0, ThresholdKind::Uniform { r: 4 }) as f64;
        let log_lbar = 1024f64.ln();
        let expect = (log_lbar.sqrt() + 2.0 + 2.0).powi(2) / (log_lbar.sqrt() + 2.0).powi(2);
        assert!((u / s - expect).abs() < 1e-3);
    }

    #[test]
    fn counting_matches_formula_on_a_clean_trial() {
        let c = LcatConfig {
            l: 256,
            b: 16,
            d: 8,
            sigma2: 1e-6,
            filter_kind: FilterKind::BlockMean,
            sim_mode: SimMode::Full,
        };
        let (outcome, macs) = run_trial_counting(&c, 4);
        assert!(outcome.value_correct);
        assert_eq!(macs, complexity_count(&c).lcat_ops);
    }

    #[test]
    fn ops_are_minimized_at_sqrt_l_and_b1_saves_nothing() {
        let l = 1 << 12;
        let grid: Vec<usize> = (0..=12).map(|k| 1usize << k).collect();
        let ops: Vec<u64> = grid
            .iter()
            .map(|&b| {
                complexity_count(&cfg(l, b, 64, FilterKind::BlockMean, SimMode::Reduced)).lcat_ops
            })
            .collect();
        let min = *ops.iter().min().unwrap();
        let sqrt_l = (l as f64).sqrt() as usize;
        let at_sqrt = ops[grid.iter().position(|&b| b == sqrt_l).unwrap()];
        assert_eq!(at_sqrt, min, "sqrt(L) should attain the grid minimum");

        let c1 = complexity_count(&cfg(l, 1, 64, FilterKind::BlockMean, SimMode::Reduced));
        assert!(c1.lcat_ops >= c1.dense_ops, "B=1 should save nothing");
        assert!(c1.capacity_ok());
    }

    #[test]
    fn capacity_check_reflects_d_lbar_vs_l() {
        let ok = complexity_count(&cfg(1 << 10, 1 << 5, 64, FilterKind::BlockMean, SimMode::Reduced));
        assert!(ok.capacity_ok()); // 64 * 32 = 2048 >= 1024
        let bad = complexity_count(&cfg(1 << 10, 1 << 5, 8, FilterKind::BlockMean, SimMode::Reduced));
        assert!(!bad.capacity_ok()); // 8 * 32 = 256 < 1024
    }
}

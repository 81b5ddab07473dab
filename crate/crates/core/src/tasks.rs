//! Seeded generators and verifiers for the mechanistic recall and copying
//! tasks. Generators are pure functions of `(spec, seed)` and never emit an
//! instance their own brute-force verifier would reject.

use crate::seeding::derive_rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TaskKind {
    Ar,
    Nar { n: usize },
    MqAr,
    MqNar { n: usize },
    /// Selective copying; signal ids are `0..signal_vocab`, the boundary token
    /// is `signal_vocab`, and noise ids follow it.
    Sc { signal_vocab: u32 },
}

impl TaskKind {
    pub fn ngram_len(&self) -> usize {
        match self {
            TaskKind::Ar | TaskKind::MqAr => 1,
            TaskKind::Nar { n } | TaskKind::MqNar { n } => *n,
            TaskKind::Sc { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub position: usize,
    pub n_gram_len: usize,
}

/// A discrete token sequence with query positions and expected answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub tokens: Vec<TokenId>,
    pub queries: Vec<Query>,
    pub answers: Vec<TokenId>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("infeasible task spec: {0}")]
    InfeasibleSpec(String),
    #[error("predicted answers have length {got}, expected {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Sentinel answer id for unmatched multi-query probes: one past the vocab.
pub fn no_match_sentinel(vocab_size: u32) -> TokenId {
    vocab_size
}

const MAX_RETRIES: usize = 10_000;

fn random_token_not<R: Rng>(rng: &mut R, vocab: u32, avoid: &[TokenId]) -> TokenId {
    loop {
        let t = rng.gen_range(0..vocab);
        if !avoid.contains(&t) {
            return t;
        }
    }
}

/// Single-query associative recall: the last token repeats exactly once
/// earlier; the answer is the successor of that occurrence.
pub fn gen_ar(l: usize, vocab: u32, seed: u64) -> Result<TaskInstance, TaskError> {
    if vocab < 3 {
        return Err(TaskError::InfeasibleSpec("AR needs vocab >= 3".into()));
    }
    if l < 3 {
        return Err(TaskError::InfeasibleSpec("AR needs L >= 3".into()));
    }
    let mut rng = derive_rng(seed, 0x41, 0);
    let q = rng.gen_range(0..vocab);
    let alpha = rng.gen_range(0..=(l - 3));
    let mut tokens = vec![0u32; l];
    for (j, t) in tokens.iter_mut().enumerate() {
        if j == alpha || j == l - 1 {
            *t = q;
        } else {
            *t = random_token_not(&mut rng, vocab, &[q]);
        }
    }
    let inst = TaskInstance {
        kind: TaskKind::Ar,
        answers: vec![tokens[alpha + 1]],
        queries: vec![Query {
            position: l - 1,
            n_gram_len: 1,
        }],
        tokens,
        seed,
    };
    debug_assert!(verify_well_formed(&inst));
    Ok(inst)
}

fn gram_at(tokens: &[TokenId], end: usize, n: usize) -> &[TokenId] {
    &tokens[end + 1 - n..=end]
}

/// Number of windows ending strictly before `before` that equal `gram`.
fn count_occurrences(tokens: &[TokenId], gram: &[TokenId], before: usize) -> usize {
    let n = gram.len();
    (n - 1..before)
        .filter(|&end| gram_at(tokens, end, n) == gram)
        .count()
}

fn sample_ngram<R: Rng>(rng: &mut R, vocab: u32, n: usize) -> Vec<TokenId> {
    loop {
        let g: Vec<TokenId> = (0..n).map(|_| rng.gen_range(0..vocab)).collect();
        // Constant N-grams are excluded for N >= 2: under zero padding, a
        // matching constant prefix at the sequence start yields a partial
        // convolution window parallel to the N-gram's signature, which breaks
        // exact retrieval at the boundary.
        if n == 1 || g.iter().any(|&t| t != g[0]) {
            return g;
        }
    }
}

/// N-gram associative recall: the terminal N-gram occurs exactly once earlier;
/// the answer is the token following that occurrence.
pub fn gen_nar(n: usize, l: usize, vocab: u32, seed: u64) -> Result<TaskInstance, TaskError> {
    if n < 1 {
        return Err(TaskError::InfeasibleSpec("N must be >= 1".into()));
    }
    if vocab < 3 {
        return Err(TaskError::InfeasibleSpec("NAR needs vocab >= 3".into()));
    }
    if l < 2 * n + 1 {
        return Err(TaskError::InfeasibleSpec(format!(
            "NAR needs L >= 2N+1 = {}",
            2 * n + 1
        )));
    }
    let mut rng = derive_rng(seed, 0x4e, 0);
    for _ in 0..MAX_RETRIES {
        let gram = sample_ngram(&mut rng, vocab, n);
        let plant = rng.gen_range(0..=(l - 2 * n - 1));
        // For n = 1 a blind fill almost surely repeats the query token at
        // long lengths, so keep the query out of the filler alphabet; for
        // longer grams accidental matches are rare and rejection is cheap.
        let mut tokens: Vec<TokenId> = if n == 1 {
            (0..l)
                .map(|_| random_token_not(&mut rng, vocab, &gram))
                .collect()
        } else {
            (0..l).map(|_| rng.gen_range(0..vocab)).collect()
        };
        tokens[plant..plant + n].copy_from_slice(&gram);
        tokens[l - n..].copy_from_slice(&gram);
        // The planted window must be the single earlier occurrence.
        if count_occurrences(&tokens, &gram, l - 1) != 1 {
            continue;
        }
        let inst = TaskInstance {
            kind: if n == 1 { TaskKind::Ar } else { TaskKind::Nar { n } },
            answers: vec![tokens[plant + n]],
            queries: vec![Query {
                position: l - 1,
                n_gram_len: n,
            }],
            tokens,
            seed,
        };
        debug_assert!(verify_well_formed(&inst));
        return Ok(inst);
    }
    Err(TaskError::InfeasibleSpec(
        "could not place a unique N-gram; vocab too small for L".into(),
    ))
}

/// Multi-query (N-gram) associative recall following the key/value recipe:
/// `k` unique keys with values drawn from the remaining vocabulary, shuffled,
/// then one query per key at the tail of the sequence.
///
/// `no_match_fraction` of the queries (rounded down) probe unplanted keys and
/// are answered by the reserved sentinel id `vocab`.
pub fn gen_mq(
    n: usize,
    l: usize,
    k: usize,
    vocab: u32,
    no_match_fraction: f64,
    seed: u64,
) -> Result<TaskInstance, TaskError> {
    if n < 1 || k < 1 {
        return Err(TaskError::InfeasibleSpec("need N >= 1 and k >= 1".into()));
    }
    if (vocab as usize) < 2 * k {
        return Err(TaskError::InfeasibleSpec("MQ needs vocab >= 2k".into()));
    }
    if k * (2 * n + 1) > l {
        return Err(TaskError::InfeasibleSpec(format!(
            "k(2N+1) = {} exceeds L = {}",
            k * (2 * n + 1),
            l
        )));
    }
    let n_unmatched = ((k as f64) * no_match_fraction).floor() as usize;
    // For N = 1, unmatched probes need tokens that occur nowhere else.
    let probe_reserve = if n == 1 { n_unmatched } else { 0 };
    let filler_len = l - k * (2 * n + 1);
    if (vocab as usize) < 2 * k + probe_reserve + usize::from(filler_len > 0) {
        return Err(TaskError::InfeasibleSpec(
            "vocab too small for keys, values, probes, and filler".into(),
        ));
    }
    let mut rng = derive_rng(seed, 0x4d, 0);

    'attempt: for _ in 0..MAX_RETRIES {
        // Keys: distinct N-grams over a token alphabet reserved for keys.
        let mut pool: Vec<TokenId> = (0..vocab).collect();
        pool.shuffle(&mut rng);
        let key_tokens: Vec<TokenId> = pool[..k].to_vec();
        let values: Vec<TokenId> = pool[k..2 * k].to_vec();
        let probe_pool: Vec<TokenId> = pool[2 * k..2 * k + probe_reserve].to_vec();
        let filler_pool: Vec<TokenId> = pool[2 * k + probe_reserve..].to_vec();
        let mut keys: Vec<Vec<TokenId>> = Vec::with_capacity(k);
        if n == 1 {
            keys.extend(key_tokens.iter().map(|&t| vec![t]));
        } else {
            let mut tries = 0;
            while keys.len() < k {
                let g: Vec<TokenId> = (0..n)
                    .map(|_| key_tokens[rng.gen_range(0..key_tokens.len())])
                    .collect();
                if g.iter().all(|&t| t == g[0]) || keys.contains(&g) {
                    tries += 1;
                    if tries > MAX_RETRIES {
                        continue 'attempt;
                    }
                    continue;
                }
                keys.push(g);
            }
        }

        // Pair region: shuffled (key, value) blocks.
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut tokens: Vec<TokenId> = Vec::with_capacity(l);
        for &i in &order {
            tokens.extend_from_slice(&keys[i]);
            tokens.push(values[i]);
        }

        // Filler up to the query region, drawn outside the key alphabet so no
        // filler window can spell a key.
        for _ in 0..filler_len {
            tokens.push(filler_pool[rng.gen_range(0..filler_pool.len())]);
        }

        // Queries: every key once, shuffled; optionally some probes for keys
        // that were never planted.
        let mut query_ids: Vec<usize> = (0..k).collect();
        query_ids.shuffle(&mut rng);
        let mut queries = Vec::with_capacity(k);
        let mut answers = Vec::with_capacity(k);
        let mut probe_grams: Vec<Vec<TokenId>> = Vec::new();
        let sentinel = no_match_sentinel(vocab);
        for (qi, &i) in query_ids.iter().enumerate() {
            let matched = qi >= n_unmatched;
            let gram: Vec<TokenId> = if matched {
                keys[i].clone()
            } else if n == 1 {
                vec![probe_pool[qi]]
            } else {
                // A fresh gram over the key alphabet that matches no planted key.
                let mut tries = 0;
                loop {
                    let g: Vec<TokenId> = (0..n)
                        .map(|_| key_tokens[rng.gen_range(0..key_tokens.len())])
                        .collect();
                    if g.iter().any(|&t| t != g[0])
                        && !keys.contains(&g)
                        && !probe_grams.contains(&g)
                    {
                        probe_grams.push(g.clone());
                        break g;
                    }
                    tries += 1;
                    if tries > MAX_RETRIES {
                        continue 'attempt;
                    }
                }
            };
            tokens.extend_from_slice(&gram);
            queries.push(Query {
                position: tokens.len() - 1,
                n_gram_len: n,
            });
            answers.push(if matched { values[i] } else { sentinel });
        }
        debug_assert_eq!(tokens.len(), l);

        let kind = if n == 1 { TaskKind::MqAr } else { TaskKind::MqNar { n } };
        let inst = TaskInstance {
            kind,
            tokens,
            queries,
            answers,
            seed,
        };
        if mq_is_valid(&inst, vocab) {
            return Ok(inst);
        }
    }
    Err(TaskError::InfeasibleSpec(
        "could not lay out unique multi-query keys".into(),
    ))
}

/// Every matched query's gram occurs exactly once before the query position;
/// unmatched probes occur zero times.
fn mq_is_valid(inst: &TaskInstance, vocab: u32) -> bool {
    let sentinel = no_match_sentinel(vocab);
    inst.queries.iter().zip(&inst.answers).all(|(q, &a)| {
        let gram = gram_at(&inst.tokens, q.position, q.n_gram_len).to_vec();
        let hits = count_occurrences(&inst.tokens, &gram, q.position);
        if a == sentinel {
            hits == 0
        } else {
            hits == 1
        }
    })
}

/// Selective copying: `n_signal` distinct signal tokens interleaved with noise,
/// a boundary token appended, and the ordered signal subsequence as the answer.
pub fn gen_sc(
    n_signal: usize,
    n_noise: usize,
    signal_vocab: u32,
    noise_vocab: u32,
    seed: u64,
) -> Result<TaskInstance, TaskError> {
    if n_signal > signal_vocab as usize {
        return Err(TaskError::InfeasibleSpec(
            "unique selective copy needs n_signal <= |S|".into(),
        ));
    }
    if signal_vocab == 0 || noise_vocab == 0 {
        return Err(TaskError::InfeasibleSpec("empty vocabulary".into()));
    }
    if n_signal + n_noise == 0 {
        return Err(TaskError::InfeasibleSpec("empty sequence".into()));
    }
    let mut rng = derive_rng(seed, 0x53, 0);
    let bot = signal_vocab;
    let mut ids: Vec<TokenId> = (0..signal_vocab).collect();
    ids.shuffle(&mut rng);
    let signals: Vec<TokenId> = ids[..n_signal].to_vec();

    // Slots: which positions carry signal.
    let l = n_signal + n_noise;
    let mut slots: Vec<bool> = (0..l).map(|i| i < n_signal).collect();
    slots.shuffle(&mut rng);
    let mut tokens = Vec::with_capacity(l + 1);
    let mut next_signal = 0;
    let mut answers = Vec::with_capacity(n_signal);
    for carries_signal in slots {
        if carries_signal {
            tokens.push(signals[next_signal]);
            answers.push(signals[next_signal]);
            next_signal += 1;
        } else {
            tokens.push(bot + 1 + rng.gen_range(0..noise_vocab));
        }
    }
    tokens.push(bot);
    let inst = TaskInstance {
        kind: TaskKind::Sc { signal_vocab },
        queries: vec![Query {
            position: tokens.len() - 1,
            n_gram_len: 0,
        }],
        tokens,
        answers,
        seed,
    };
    debug_assert!(verify_well_formed(&inst));
    Ok(inst)
}

/// A whole generation run: kind, shape, count, and the suite seed. Instances
/// derive per-index seeds, so suites can generate in parallel and still come
/// out identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSuiteSpec {
    pub kind: TaskKind,
    pub l: usize,
    /// Key/value pair count for the multi-query kinds; ignored otherwise.
    pub k: usize,
    pub vocab_size: u32,
    pub n_instances: usize,
    pub seed: u64,
    #[serde(default)]
    pub no_match_fraction: f64,
}

impl TaskSuiteSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.n_instances == 0 {
            return Err(TaskError::InfeasibleSpec("empty suite".into()));
        }
        match self.kind {
            TaskKind::MqAr | TaskKind::MqNar { .. } => {
                let n = self.kind.ngram_len();
                if self.k * (2 * n + 1) > self.l {
                    return Err(TaskError::InfeasibleSpec(
                        "k pairs plus k queries do not fit in L".into(),
                    ));
                }
                if (self.vocab_size as usize) < 2 * self.k {
                    return Err(TaskError::InfeasibleSpec("need vocab >= 2k".into()));
                }
                Ok(())
            }
            TaskKind::Ar | TaskKind::Nar { .. } => Ok(()),
            TaskKind::Sc { .. } => Err(TaskError::InfeasibleSpec(
                "selective-copy suites are shaped by gen_sc parameters".into(),
            )),
        }
    }

    pub fn generate(&self) -> Result<Vec<TaskInstance>, TaskError> {
        use rayon::prelude::*;
        self.validate()?;
        (0..self.n_instances)
            .into_par_iter()
            .map(|i| {
                let seed = crate::seeding::derive_seed(self.seed, 0x517e, i as u64);
                match self.kind {
                    TaskKind::Ar => gen_ar(self.l, self.vocab_size, seed),
                    TaskKind::Nar { n } => gen_nar(n, self.l, self.vocab_size, seed),
                    TaskKind::MqAr => {
                        gen_mq(1, self.l, self.k, self.vocab_size, self.no_match_fraction, seed)
                    }
                    TaskKind::MqNar { n } => {
                        gen_mq(n, self.l, self.k, self.vocab_size, self.no_match_fraction, seed)
                    }
                    TaskKind::Sc { .. } => unreachable!("rejected by validate"),
                }
            })
            .collect()
    }
}

/// Exact-token-match accuracy of `predicted` against the instance's answers.
pub fn verify(inst: &TaskInstance, predicted: &[TokenId]) -> Result<f64, TaskError> {
    if predicted.len() != inst.answers.len() {
        return Err(TaskError::LengthMismatch {
            got: predicted.len(),
            want: inst.answers.len(),
        });
    }
    if inst.answers.is_empty() {
        return Ok(1.0);
    }
    let hits = inst
        .answers
        .iter()
        .zip(predicted)
        .filter(|(a, p)| a == p)
        .count();
    Ok(hits as f64 / inst.answers.len() as f64)
}

/// Independent brute-force validity scan: uniqueness and answer correctness
/// straight from the task definitions, with no shared code path with the
/// generators' placement logic.
pub fn verify_well_formed(inst: &TaskInstance) -> bool {
    let toks = &inst.tokens;
    match inst.kind {
        TaskKind::Ar | TaskKind::Nar { .. } => {
            let n = inst.kind.ngram_len();
            let l = toks.len();
            if l < 2 * n + 1 || inst.queries.len() != 1 || inst.answers.len() != 1 {
                return false;
            }
            let gram = gram_at(toks, l - 1, n).to_vec();
            let hits: Vec<usize> = (n - 1..l - 1)
                .filter(|&end| gram_at(toks, end, n) == gram.as_slice())
                .collect();
            hits.len() == 1 && inst.answers[0] == toks[hits[0] + 1]
        }
        TaskKind::MqAr | TaskKind::MqNar { .. } => {
            let n = inst.kind.ngram_len();
            inst.queries.len() == inst.answers.len()
                && inst.queries.iter().zip(&inst.answers).all(|(q, &a)| {
                    let gram = gram_at(toks, q.position, n).to_vec();
                    let hits: Vec<usize> = (n - 1..q.position)
                        .filter(|&end| gram_at(toks, end, n) == gram.as_slice())
                        .collect();
                    match hits.as_slice() {
                        [j] => a == toks[j + 1],
                        [] => a > *toks.iter().max().unwrap(),
                        _ => false,
                    }
                })
        }
        TaskKind::Sc { signal_vocab } => {
            let bot = signal_vocab;
            if *toks.last().unwrap() != bot {
                return false;
            }
            let expected: Vec<TokenId> = toks[..toks.len() - 1]
                .iter()
                .copied()
                .filter(|&t| t < signal_vocab)
                .collect();
            let mut seen = std::collections::HashSet::new();
            expected.iter().all(|t| seen.insert(*t)) && expected == inst.answers
        }
    }
}

/// Writes instances as JSONL, one instance per line.
pub fn write_jsonl<W: Write>(w: &mut W, instances: &[TaskInstance]) -> Result<(), TaskError> {
    for inst in instances {
        let line = serde_json::to_string(inst).map_err(|e| TaskError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| TaskError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TaskInstance>, TaskError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| TaskError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TaskError::Io(e.to_string()))?);
    }
    Ok(out)
}

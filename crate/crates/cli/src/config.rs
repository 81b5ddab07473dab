//! Run configuration: one human-readable TOML document per run, with a
//! `[command]`-specific table. Unknown fields are rejected so stale configs
//! fail loudly.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Global seed; `--seed` and `CATLAB_SEED` override it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output path; `--out` overrides it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; `--jobs` overrides it. Results never depend on it.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub verify_constructions: VerifyConstructionsConfig,
    #[serde(default)]
    pub lengen_sweep: LengenSweepConfig,
    #[serde(default)]
    pub lcat_phase: LcatPhaseConfig,
    #[serde(default)]
    pub gen_tasks: GenTasksConfig,
    #[serde(default)]
    pub sc_demo: ScDemoConfig,
    #[serde(default)]
    pub audit: AuditConfig,
}

fn default_seed() -> u64 {
    42
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config must parse")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConstructionsConfig {
    /// N-gram length for the recall constructions.
    pub n: usize,
    /// Causal query-filter taps (length must equal `n`).
    pub f_q: Vec<f64>,
    pub vocab_size: u32,
    pub lengths: Vec<usize>,
    pub instances: usize,
    /// Selective-copy suite: signal vocabulary, max signals, max noise.
    pub sc_signal_vocab: u32,
    pub sc_max_signals: usize,
    pub sc_max_noise: usize,
    pub sc_instances: usize,
}

impl Default for VerifyConstructionsConfig {
    fn default() -> Self {
        VerifyConstructionsConfig {
            n: 2,
            f_q: vec![2.0, 1.0],
            vocab_size: 64,
            lengths: vec![16, 64, 128],
            instances: 200,
            sc_signal_vocab: 8,
            sc_max_signals: 8,
            sc_max_noise: 64,
            sc_instances: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengenSweepConfig {
    /// Length the model is instantiated for.
    pub build_length: usize,
    pub lengths: Vec<usize>,
    pub vocab_size: u32,
    pub suite_size: usize,
    /// `exact`, `soft`, or `corrupted`.
    pub model: String,
    /// Target normalized error for the soft model's temperature schedule.
    pub soft_eps0: f64,
    /// Value-filter perturbation toward the identity tap.
    pub eta: f64,
}

impl Default for LengenSweepConfig {
    fn default() -> Self {
        LengenSweepConfig {
            build_length: 128,
            lengths: vec![32, 128, 512, 1024],
            vocab_size: 64,
            suite_size: 100,
            model: "exact".into(),
            soft_eps0: 1e-3,
            eta: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcatPhaseConfig {
    pub l: usize,
    pub b_grid: Vec<usize>,
    pub sigma2: f64,
    /// `block_mean` or `exp_smoothing` (decay defaults to `e^{-1/B}`).
    pub filter: String,
    pub targets: Vec<f64>,
    pub trials: usize,
}

impl Default for LcatPhaseConfig {
    fn default() -> Self {
        LcatPhaseConfig {
            l: 1 << 16,
            b_grid: vec![16, 32, 64, 128, 256],
            sigma2: 1.0,
            filter: "block_mean".into(),
            targets: vec![0.1, 0.5, 0.9],
            trials: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenTasksConfig {
    /// A named preset (see `PRESETS`) or `custom`.
    pub preset: String,
    /// Overrides for `custom`; ignored by named presets except `count`.
    pub kind: String,
    pub n: usize,
    pub l: usize,
    pub k: usize,
    pub vocab_size: u32,
    pub no_match_fraction: f64,
    /// Instance count; 0 means the preset's own train+test split.
    pub count: usize,
}

impl Default for GenTasksConfig {
    fn default() -> Self {
        GenTasksConfig {
            preset: "mqar-L64".into(),
            kind: "mqar".into(),
            n: 1,
            l: 64,
            k: 16,
            vocab_size: 8092,
            no_match_fraction: 0.0,
            count: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScDemoConfig {
    pub signal_vocab: u32,
    pub n_signal: usize,
    pub n_noise: usize,
    /// `infinite` or `window`.
    pub variant: String,
    pub window: usize,
}

impl Default for ScDemoConfig {
    fn default() -> Self {
        ScDemoConfig {
            signal_vocab: 12,
            n_signal: 6,
            n_noise: 20,
            variant: "infinite".into(),
            window: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub build_length: usize,
    pub lengths: Vec<usize>,
    pub vocab_size: u32,
    pub suite_size: usize,
    pub eta: f64,
    /// Inverse temperature; 0 selects hard attention.
    pub temperature: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            build_length: 128,
            lengths: vec![128, 256, 512, 1024, 2048],
            vocab_size: 16,
            suite_size: 60,
            eta: 0.0,
            temperature: 5000f64.ln(),
        }
    }
}

/// Named multi-query presets: `(name, n, l, k, train, test)`.
/// Vocabulary size is 8,092 for all of them.
pub const PRESETS: &[(&str, usize, usize, usize, usize, usize)] = &[
    ("mqar-L64", 1, 64, 16, 100_000, 3_000),
    ("mqar-L128", 1, 128, 32, 100_000, 3_000),
    ("mqar-L256", 1, 256, 64, 100_000, 3_000),
    ("mqar-L512", 1, 512, 128, 100_000, 3_000),
    ("mqnar2-L64", 2, 64, 10, 200_000, 3_000),
    ("mqnar2-L128", 2, 128, 20, 200_000, 3_000),
    ("mqnar2-L256", 2, 256, 40, 200_000, 3_000),
];

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            let cfg: ExperimentConfig =
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            Ok(cfg)
        }
    }
}

/// Seed precedence: `--seed` flag, then `CATLAB_SEED`, then the config file.
pub fn resolve_seed(flag: Option<u64>, cfg: &ExperimentConfig) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(env) = std::env::var("CATLAB_SEED") {
        let parsed: u64 = env
            .parse()
            .with_context(|| format!("CATLAB_SEED must be an integer, got {env:?}"))?;
        return Ok(parsed);
    }
    Ok(cfg.seed)
}

pub fn resolve_out(flag: Option<PathBuf>, cfg: &ExperimentConfig, default_name: &str) -> PathBuf {
    flag.or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(default_name))
}

pub fn require_nonempty(label: &str, len: usize) -> Result<()> {
    if len == 0 {
        bail!("invalid config: {label} must not be empty");
    }
    Ok(())
}

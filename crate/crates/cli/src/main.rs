//! Experiment runner: builds the exact recall/copy models, audits length
//! generalization, sweeps the landmark-attention phase diagram, and generates
//! task datasets — all seeded and byte-reproducible.

mod config;
mod manifest;

use anyhow::{bail, Context, Result};
use catlab_core::audit::{corrupted_value_model, length_gen_curve, perturbed_value_delay, run_audit};
use catlab_core::constructions::{
    build_nar_key_delay_checked, build_nar_value_delay_checked, build_sc_model, decode_sc,
    temperature_for, ConstructionError, ScVariant,
};
use catlab_core::eval::suite_accuracy;
use catlab_core::lcat::{phase_transition, FilterKind, LcatConfig, SimMode};
use catlab_core::numerics::{AttnMode, Filter, Vocab};
use catlab_core::seeding::derive_seed;
use catlab_core::tasks::{gen_nar, gen_sc, write_jsonl, TaskInstance, TaskKind, TaskSuiteSpec};
use clap::{Parser, Subcommand};
use config::{load_config, resolve_out, resolve_seed, ExperimentConfig, PRESETS};
use manifest::RunManifest;
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "catlab", version, about = "Convolution-augmented attention lab")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed (CATLAB_SEED also overrides it).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results are identical for any value.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exactness suites for the recall and copying constructions.
    VerifyConstructions,
    /// Evaluate a recall model across lengths and write the error/accuracy CSV.
    LengenSweep,
    /// Locate the landmark-attention phase transition over a block-size grid.
    LcatPhase,
    /// Generate task instances as JSONL (named presets or custom shapes).
    GenTasks,
    /// Decode one selective-copy instance and print the trace.
    ScDemo,
    /// Audit a recall model: epsilon, filter bound, golden map, length curve.
    Audit,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &cfg)?;
    let jobs = cli.jobs.or(cfg.jobs);
    if let Some(j) = jobs {
        if j == 0 {
            bail!("invalid config: jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("initializing the worker pool")?;
    }
    match cli.command {
        Command::VerifyConstructions => cmd_verify_constructions(&cfg, seed, cli.out),
        Command::LengenSweep => cmd_lengen_sweep(&cfg, seed, cli.out),
        Command::LcatPhase => cmd_lcat_phase(&cfg, seed, cli.out),
        Command::GenTasks => cmd_gen_tasks(&cfg, seed, cli.out),
        Command::ScDemo => cmd_sc_demo(&cfg, seed, cli.out),
        Command::Audit => cmd_audit(&cfg, seed, cli.out),
    }
}

fn config_snapshot(cfg: &ExperimentConfig, seed: u64) -> String {
    let mut effective = cfg.clone();
    effective.seed = seed;
    toml::to_string_pretty(&effective).unwrap_or_default()
}

#[derive(Serialize)]
struct SuiteReport {
    name: String,
    accuracy: f64,
    instances: usize,
}

fn cmd_verify_constructions(
    cfg: &ExperimentConfig,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let t0 = Instant::now();
    let vc = &cfg.verify_constructions;
    if vc.instances == 0 || vc.lengths.is_empty() || vc.sc_instances == 0 {
        bail!("invalid config: empty suite (instances and lengths must be positive)");
    }
    if vc.f_q.len() != vc.n {
        bail!("invalid config: f_q must have exactly n = {} taps", vc.n);
    }
    let vocab = Vocab::orthonormal(vc.vocab_size as usize, vc.vocab_size as usize);
    let f_q = Filter::causal(vc.f_q.clone());
    let value_delay = match build_nar_value_delay_checked(&f_q, AttnMode::Hard, &vocab, vc.n) {
        Ok(m) => m,
        Err(ConstructionError::SignatureNotUnique) => {
            bail!(
                "SignatureNotUnique: filter {:?} does not separate all {}-gram signatures \
                 over a {}-token vocabulary",
                vc.f_q,
                vc.n,
                vc.vocab_size
            )
        }
        Err(e) => return Err(e.into()),
    };
    let key_delay = build_nar_key_delay_checked(&f_q, AttnMode::Hard, &vocab, vc.n)?;
    let ar_model = catlab_core::constructions::build_ar_1d(AttnMode::Hard, vocab.dim());

    let mut reports = Vec::new();
    for &l in &vc.lengths {
        let suite: Vec<TaskInstance> = (0..vc.instances)
            .map(|i| gen_nar(vc.n, l, vc.vocab_size, derive_seed(seed, l as u64, i as u64)))
            .collect::<Result<_, _>>()?;
        for (name, m) in [("value-delay", &value_delay), ("key-delay", &key_delay)] {
            reports.push(SuiteReport {
                name: format!("nar-{name}-L{l}"),
                accuracy: suite_accuracy(m, &vocab, &suite),
                instances: suite.len(),
            });
        }
        let ar_suite: Vec<TaskInstance> = (0..vc.instances)
            .map(|i| {
                catlab_core::tasks::gen_ar(l, vc.vocab_size, derive_seed(seed, 7 + l as u64, i as u64))
            })
            .collect::<Result<_, _>>()?;
        reports.push(SuiteReport {
            name: format!("ar-1d-L{l}"),
            accuracy: suite_accuracy(&ar_model, &vocab, &ar_suite),
            instances: ar_suite.len(),
        });
    }

    // Selective copying, both variants.
    for (vname, variant) in [
        ("infinite", ScVariant::InfiniteNoPe),
        ("window", ScVariant::WindowWithPe { window: vc.sc_max_signals.max(1) }),
    ] {
        let mut hits = 0usize;
        for i in 0..vc.sc_instances {
            let s = derive_seed(seed, 0x5c, i as u64);
            let n_signal =
                1 + (derive_seed(s, 1, 0) as usize) % vc.sc_max_signals.min(vc.sc_signal_vocab as usize);
            let n_noise = (derive_seed(s, 2, 0) as usize) % (vc.sc_max_noise + 1);
            let inst = gen_sc(n_signal, n_noise, vc.sc_signal_vocab, 8, s)?;
            let t = inst.tokens.len() + n_signal + 1;
            let m = build_sc_model(vc.sc_signal_vocab, 1, variant, t);
            if decode_sc(&m, &inst).map(|o| o == inst.answers).unwrap_or(false) {
                hits += 1;
            }
        }
        reports.push(SuiteReport {
            name: format!("selective-copy-{vname}"),
            accuracy: hits as f64 / vc.sc_instances as f64,
            instances: vc.sc_instances,
        });
    }

    let out_path = resolve_out(out, cfg, "verify_report.json");
    std::fs::write(&out_path, serde_json::to_string_pretty(&reports)?)?;
    let mut manifest = RunManifest::new("verify-constructions", seed, config_snapshot(cfg, seed));
    manifest.record_output(&out_path)?;
    manifest.wall_clock_secs = t0.elapsed().as_secs_f64();
    manifest.write_next_to(&out_path)?;

    let mut ok = true;
    for r in &reports {
        println!("{:30} accuracy {:.4} over {} instances", r.name, r.accuracy, r.instances);
        ok &= r.accuracy == 1.0;
    }
    if !ok {
        bail!("verification failed: at least one suite below accuracy 1.0");
    }
    println!("all construction suites exact ({:.1}s)", t0.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_lengen_sweep(cfg: &ExperimentConfig, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let t0 = Instant::now();
    let lg = &cfg.lengen_sweep;
    if lg.lengths.is_empty() || lg.suite_size == 0 {
        bail!("invalid config: lengths and suite_size must be positive");
    }
    let d = lg.vocab_size as usize;
    let vocab = Vocab::orthonormal(d, d);
    let model = match lg.model.as_str() {
        "exact" => perturbed_value_delay(lg.eta, AttnMode::Hard, d),
        "soft" => {
            let c = temperature_for(1.0, lg.build_length, lg.soft_eps0);
            perturbed_value_delay(lg.eta, AttnMode::Soft(c), d)
        }
        "corrupted" => corrupted_value_model(AttnMode::Hard, d),
        other => bail!("invalid config: unknown model {other:?} (exact|soft|corrupted)"),
    };
    let eps = catlab_core::audit::measure_epsilon(
        &model,
        &vocab,
        lg.build_length,
        lg.suite_size,
        true,
        derive_seed(seed, 0xe0, 0),
    )?;
    let delta = catlab_core::numerics::min_embedding_distance(&vocab);
    let curve = length_gen_curve(
        &model,
        &vocab,
        &lg.lengths,
        lg.suite_size,
        eps / delta,
        derive_seed(seed, 0xe1, 0),
    )?;
    let out_path = resolve_out(out, cfg, "lengen_sweep.csv");
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    std::fs::write(&out_path, &buf)?;
    let mut manifest = RunManifest::new("lengen-sweep", seed, config_snapshot(cfg, seed));
    manifest.record_output(&out_path)?;
    manifest.wall_clock_secs = t0.elapsed().as_secs_f64();
    manifest.write_next_to(&out_path)?;
    for (l, e, a) in &curve.rows {
        println!("L'={l:6}  max_error={e:.6}  accuracy={a:.4}");
    }
    println!(
        "epsilon={eps:.6} at build length {}; wrote {}",
        lg.build_length,
        out_path.display()
    );
    Ok(())
}

fn cmd_lcat_phase(cfg: &ExperimentConfig, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let t0 = Instant::now();
    let pc = &cfg.lcat_phase;
    config::require_nonempty("b_grid", pc.b_grid.len())?;
    config::require_nonempty("targets", pc.targets.len())?;
    if pc.trials == 0 {
        bail!("invalid config: trials must be positive");
    }
    for &b in &pc.b_grid {
        if b > pc.l {
            bail!("invalid config: block size {b} exceeds context length {}", pc.l);
        }
    }
    let filter_kind = match pc.filter.as_str() {
        "block_mean" => FilterKind::BlockMean,
        "exp_smoothing" => FilterKind::exp_smoothing_default(pc.b_grid[0]),
        other => bail!("invalid config: unknown filter {other:?} (block_mean|exp_smoothing)"),
    };
    let template = LcatConfig {
        l: pc.l,
        b: pc.b_grid[0],
        d: 1,
        sigma2: pc.sigma2,
        filter_kind,
        sim_mode: SimMode::Reduced,
    };
    let sweep = phase_transition(&template, &pc.b_grid, &pc.targets, pc.trials, seed)?;
    let out_path = resolve_out(out, cfg, "lcat_phase.csv");
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf)?;
    std::fs::write(&out_path, &buf)?;
    let mut manifest = RunManifest::new("lcat-phase", seed, config_snapshot(cfg, seed));
    manifest.record_output(&out_path)?;
    manifest.wall_clock_secs = t0.elapsed().as_secs_f64();
    manifest.write_next_to(&out_path)?;
    for row in &sweep.rows {
        println!(
            "B={:5}  d@targets={:?}  d_theory={}{}",
            row.b,
            row.d_at_targets,
            row.d_theory,
            if row.non_monotone { "  [non-monotone bracket]" } else { "" }
        );
        if row.non_monotone {
            bail!("bisection bracket failed for B={}", row.b);
        }
    }
    println!("wrote {} ({:.1}s)", out_path.display(), t0.elapsed().as_secs_f64());
    Ok(())
}

fn mq_suite(kind: TaskKind, l: usize, k: usize, vocab: u32, no_match: f64) -> TaskSuiteSpec {
    TaskSuiteSpec {
        kind,
        l,
        k,
        vocab_size: vocab,
        n_instances: 0,
        seed: 0,
        no_match_fraction: no_match,
    }
}

fn generate_suite(spec: &TaskSuiteSpec, count: usize, seed: u64, stream: u64) -> Result<Vec<TaskInstance>> {
    let spec = TaskSuiteSpec {
        n_instances: count,
        seed: derive_seed(seed, stream, 0),
        ..spec.clone()
    };
    spec.generate().map_err(Into::into)
}

fn cmd_gen_tasks(cfg: &ExperimentConfig, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let t0 = Instant::now();
    let gt = &cfg.gen_tasks;
    let out_path = resolve_out(out, cfg, "tasks.jsonl");
    let mut manifest = RunManifest::new("gen-tasks", seed, config_snapshot(cfg, seed));

    if gt.preset != "custom" {
        let Some(&(_, n, l, k, train, test)) = PRESETS.iter().find(|(name, ..)| *name == gt.preset)
        else {
            bail!(
                "invalid config: unknown preset {:?}; known: {:?} or custom",
                gt.preset,
                PRESETS.iter().map(|p| p.0).collect::<Vec<_>>()
            );
        };
        let kind = if n == 1 { TaskKind::MqAr } else { TaskKind::MqNar { n } };
        let shape = mq_suite(kind, l, k, 8092, 0.0);
        if gt.count > 0 {
            let insts = generate_suite(&shape, gt.count, seed, 1)?;
            write_instances(&out_path, &insts)?;
            manifest.record_output(&out_path)?;
        } else {
            let train_path = with_suffix(&out_path, "train");
            let test_path = with_suffix(&out_path, "test");
            let train_insts = generate_suite(&shape, train, seed, 1)?;
            write_instances(&train_path, &train_insts)?;
            let test_insts = generate_suite(&shape, test, seed, 2)?;
            write_instances(&test_path, &test_insts)?;
            manifest.record_output(&train_path)?;
            manifest.record_output(&test_path)?;
            println!(
                "preset {}: {} train + {} test instances",
                gt.preset,
                train_insts.len(),
                test_insts.len()
            );
        }
    } else {
        if gt.count == 0 {
            bail!("invalid config: custom generation needs count > 0");
        }
        let insts: Vec<TaskInstance> = match gt.kind.as_str() {
            "mqar" | "mqnar" => {
                let kind = if gt.n == 1 { TaskKind::MqAr } else { TaskKind::MqNar { n: gt.n } };
                generate_suite(
                    &mq_suite(kind, gt.l, gt.k, gt.vocab_size, gt.no_match_fraction),
                    gt.count,
                    seed,
                    1,
                )?
            }
            "ar" => (0..gt.count)
                .map(|i| catlab_core::tasks::gen_ar(gt.l, gt.vocab_size, derive_seed(seed, 1, i as u64)))
                .collect::<Result<_, _>>()?,
            "nar" => (0..gt.count)
                .map(|i| gen_nar(gt.n, gt.l, gt.vocab_size, derive_seed(seed, 1, i as u64)))
                .collect::<Result<_, _>>()?,
            other => bail!("invalid config: unknown kind {other:?} (ar|nar|mqar|mqnar)"),
        };
        write_instances(&out_path, &insts)?;
        manifest.record_output(&out_path)?;
    }
    manifest.wall_clock_secs = t0.elapsed().as_secs_f64();
    manifest.write_next_to(&out_path)?;
    println!("wrote {} ({:.1}s)", out_path.display(), t0.elapsed().as_secs_f64());
    Ok(())
}

fn with_suffix(path: &std::path::Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}{ext}"))
}

fn write_instances(path: &std::path::Path, insts: &[TaskInstance]) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, insts)?;
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_sc_demo(cfg: &ExperimentConfig, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let t0 = Instant::now();
    let sc = &cfg.sc_demo;
    let variant = match sc.variant.as_str() {
        "infinite" => ScVariant::InfiniteNoPe,
        "window" => ScVariant::WindowWithPe { window: sc.window },
        other => bail!("invalid config: unknown variant {other:?} (infinite|window)"),
    };
    let inst = gen_sc(sc.n_signal, sc.n_noise, sc.signal_vocab, 8, seed)?;
    let t = inst.tokens.len() + sc.n_signal + 1;
    let model = build_sc_model(sc.signal_vocab, 1, variant, t);
    let decoded = decode_sc(&model, &inst)?;
    println!("input:   {:?}", inst.tokens);
    println!("expect:  {:?}", inst.answers);
    println!("decoded: {:?}", decoded);
    let exact = decoded == inst.answers;
    println!("exact:   {exact}");

    #[derive(Serialize)]
    struct Demo {
        tokens: Vec<u32>,
        expect: Vec<u32>,
        decoded: Vec<u32>,
        exact: bool,
        model: catlab_core::constructions::ScModel,
    }
    let out_path = resolve_out(out, cfg, "sc_demo.json");
    std::fs::write(
        &out_path,
        serde_json::to_string_pretty(&Demo {
            tokens: inst.tokens.clone(),
            expect: inst.answers.clone(),
            decoded: decoded.clone(),
            exact,
            model,
        })?,
    )?;
    let mut manifest = RunManifest::new("sc-demo", seed, config_snapshot(cfg, seed));
    manifest.record_output(&out_path)?;
    manifest.wall_clock_secs = t0.elapsed().as_secs_f64();
    manifest.write_next_to(&out_path)?;
    if !exact {
        bail!("selective-copy decode did not match the expected subsequence");
    }
    Ok(())
}

fn cmd_audit(cfg: &ExperimentConfig, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let t0 = Instant::now();
    let au = &cfg.audit;
    let d = au.vocab_size as usize;
    let vocab = Vocab::orthonormal(d, d);
    let mode = if au.temperature > 0.0 {
        AttnMode::Soft(au.temperature)
    } else {
        AttnMode::Hard
    };
    let model = perturbed_value_delay(au.eta, mode, d);
    let report = run_audit(&model, &vocab, au.build_length, &au.lengths, au.suite_size, seed)?;
    let out_path = resolve_out(out, cfg, "audit_report.json");
    std::fs::write(&out_path, serde_json::to_string_pretty(&report)?)?;
    let mut manifest = RunManifest::new("audit", seed, config_snapshot(cfg, seed));
    manifest.record_output(&out_path)?;
    manifest.wall_clock_secs = t0.elapsed().as_secs_f64();
    manifest.write_next_to(&out_path)?;
    println!(
        "epsilon={:.6} eps0={:.6} filter_l1={:.6} map_l1_max={:.6} in_regime={} r_hat={:?}",
        report.epsilon,
        report.epsilon0,
        report.filter_l1_to_delay,
        report.map_l1_max,
        report.in_regime,
        report.r_hat
    );
    let filter_ok = catlab_core::audit::check_filter_bound(&report);
    println!("filter bound holds: {filter_ok}");
    if !filter_ok {
        bail!("filter bound violated");
    }
    println!("wrote {} ({:.1}s)", out_path.display(), t0.elapsed().as_secs_f64());
    Ok(())
}

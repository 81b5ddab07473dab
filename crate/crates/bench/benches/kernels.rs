use catlab_core::audit::perturbed_value_delay;
use catlab_core::cat::cat_forward;
use catlab_core::constructions::{build_nar_value_delay, check_signature_uniqueness};
use catlab_core::lcat::{run_trial, FilterKind, LcatConfig, SimMode};
use catlab_core::numerics::{convolve, AttnMode, Filter, Vocab};
use catlab_core::tasks::gen_nar;
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn bench_convolve(c: &mut Criterion) {
    let vocab = Vocab::orthonormal(64, 64);
    let ids: Vec<u32> = (0..512).map(|i| (i % 64) as u32).collect();
    let x = vocab.embed(&ids);
    let f = Filter::causal(vec![4.0, 2.0, 1.0]);
    c.bench_function("convolve_512x64_3tap", |b| {
        b.iter(|| black_box(convolve(black_box(&x), &f)))
    });
}

fn bench_cat_forward(c: &mut Criterion) {
    let vocab = Vocab::orthonormal(64, 64);
    let inst = gen_nar(2, 512, 64, 7).unwrap();
    let x = vocab.embed(&inst.tokens);
    let m = build_nar_value_delay(&Filter::causal(vec![2.0, 1.0]), AttnMode::Hard, 64);
    c.bench_function("cat_forward_nar_L512", |b| {
        b.iter(|| black_box(cat_forward(black_box(&x), &m, 511).unwrap()))
    });
    let plain = perturbed_value_delay(0.0, AttnMode::Soft(10.0), 64);
    c.bench_function("cat_forward_plain_L512", |b| {
        b.iter(|| black_box(cat_forward(black_box(&x), &plain, 511).unwrap()))
    });
}

fn bench_lcat_trials(c: &mut Criterion) {
    let reduced = LcatConfig {
        l: 1 << 16,
        b: 64,
        d: 2048,
        sigma2: 1.0,
        filter_kind: FilterKind::BlockMean,
        sim_mode: SimMode::Reduced,
    };
    c.bench_function("lcat_reduced_trial_L65536_B64", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(run_trial(&reduced, seed))
        })
    });
    let smooth = LcatConfig {
        filter_kind: FilterKind::exp_smoothing_default(64),
        ..reduced
    };
    c.bench_function("lcat_smoothed_trial_L65536_B64", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(run_trial(&smooth, seed))
        })
    });
    let full = LcatConfig {
        l: 1 << 12,
        d: 256,
        sim_mode: SimMode::Full,
        ..reduced
    };
    c.bench_function("lcat_full_trial_L4096_B64", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(run_trial(&full, seed))
        })
    });
}

fn bench_signature_check(c: &mut Criterion) {
    let vocab = Vocab::orthonormal(32, 32);
    let f = Filter::causal(vec![4.0, 2.0, 1.0]);
    c.bench_function("signature_uniqueness_32vocab_3gram", |b| {
        b.iter(|| black_box(check_signature_uniqueness(&f, &vocab, 3).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_convolve,
    bench_cat_forward,
    bench_lcat_trials,
    bench_signature_check
);
criterion_main!(benches);

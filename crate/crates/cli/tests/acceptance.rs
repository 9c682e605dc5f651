//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use privcode_core::accountant::{
    calibrate_noise, default_orders, prv_epsilon, rdp_epsilon, subsampled_gaussian_pld, epsilon_from_pld, PldOptions,
    PrivacyConfig,
};
use privcode_core::datagen::{
    filter_and_split, generate_corpus, prepare_corpus, preprocess_text, CorpusSpec, Ethnicity, Gender,
    PreprocessOptions, RawRecord,
};
use privcode_core::experiment::{ReproduceReport, REPORT_JSON};
use privcode_core::fairness::GroupReport;
use privcode_core::metrics::ConfusionCounts;
use privcode_core::model::{backward, forward, loss, ModelDims, ModelParams};
use privcode_core::privatizer::{
    clip_flat, clip_grouped, ghost_norm_embedding, ghost_norm_linear, ClipConfig, ClipMode, GradientSet,
    GroupShape, ParamGroupSpec,
};
use privcode_core::trainer::{train, DpSettings, OptimizerConfig, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

// ---------------------------------------------------------------- 1

fn params_loss(params: &ModelParams, dims: &ModelDims, tokens: &[usize], labels: &[u8]) -> f64 {
    loss(&forward(params, dims, tokens).unwrap(), labels).unwrap()
}

fn criterion_1() -> Outcome {
    const STEP: f64 = 1e-5;
    let start = Instant::now();
    let dims = ModelDims {
        vocab_size: 50,
        embed_dim: 8,
        hidden_dim: 8,
        attention_dim: 6,
        num_labels: 5,
        segment_len: 8,
        max_len: 64,
    };
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let params = ModelParams::init(&dims, &mut rng);
        let tokens: Vec<usize> = (0..20).map(|_| rng.random_range(0..dims.vocab_size)).collect();
        let labels: Vec<u8> = (0..dims.num_labels).map(|_| rng.random_range(0..2u8)).collect();
        let cache = forward(&params, &dims, &tokens).unwrap();
        let analytic = backward(&params, &dims, &cache, &labels).unwrap();

        let mut work = params.clone();
        for (b, block) in analytic.blocks.iter().enumerate() {
            for (i, &a) in block.iter().enumerate() {
                let orig = work.blocks()[b][i];
                work.blocks_mut()[b][i] = orig + STEP;
                let up = params_loss(&work, &dims, &tokens, &labels);
                work.blocks_mut()[b][i] = orig - STEP;
                let down = params_loss(&work, &dims, &tokens, &labels);
                work.blocks_mut()[b][i] = orig;
                let n = (up - down) / (2.0 * STEP);
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-4));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-6 && secs < 60.0,
        format!("max relative error {worst:.2e} over 20 seeds in {secs:.1}s"),
        format!("max relative error {worst:.2e}, runtime {secs:.1}s"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    let mut below = 0;
    for case in 0..1000 {
        let k = rng.random_range(1..7usize);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..20)).collect();
        let scale = 10f64.powf(rng.random_range(-4.0..4.0));
        let c = rng.random_range(0.01..10.0);
        let blocks: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&n| (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let spec = ParamGroupSpec::new(
            sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| GroupShape {
                    name: format!("g{i}"),
                    shape: vec![n],
                })
                .collect(),
        )
        .unwrap();
        let g = GradientSet::from_blocks(blocks);

        let flat = clip_flat(&g, c);
        if flat.norm() > c * (1.0 + 1e-12) {
            failures.push(format!("case {case}: flat norm {}", flat.norm()));
        }
        if g.norm() <= c {
            below += 1;
            let same = flat
                .blocks
                .iter()
                .flatten()
                .zip(g.blocks.iter().flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                failures.push(format!("case {case}: sub-threshold gradient changed"));
            }
        }

        let grouped = clip_grouped(&g, c, &spec);
        let per_group = c / (k as f64).sqrt();
        for (sq_out, sq_in) in grouped.group_sq_norms().iter().zip(g.group_sq_norms()) {
            if sq_out.sqrt() > per_group * (1.0 + 1e-12) {
                failures.push(format!("case {case}: group norm {} above {per_group}", sq_out.sqrt()));
            }
            if sq_in.sqrt() <= per_group && sq_out.to_bits() != sq_in.to_bits() {
                failures.push(format!("case {case}: sub-threshold group changed"));
            }
        }
        if grouped.norm() > c * (1.0 + 1e-12) {
            failures.push(format!("case {case}: grouped total {}", grouped.norm()));
        }
    }
    check(
        failures.is_empty(),
        format!("1000 gradients, {below} below threshold, all invariants hold"),
        format!("{} violations, first: {}", failures.len(), failures.first().cloned().unwrap_or_default()),
    )
}

// ---------------------------------------------------------------- 3

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let batch = rng.random_range(1..4);
        let seq = rng.random_range(1..64);

        let (d_in, d_out) = (rng.random_range(1..40), rng.random_range(1..40));
        let inputs: Vec<_> = (0..batch).map(|_| random_matrix(&mut rng, seq, d_in)).collect();
        let grads: Vec<_> = (0..batch).map(|_| random_matrix(&mut rng, seq, d_out)).collect();
        let ghost = ghost_norm_linear(&inputs, &grads).unwrap();
        for ((a, s), g) in inputs.iter().zip(&grads).zip(ghost) {
            let naive: f64 = s.t().dot(a).iter().map(|x| x * x).sum();
            worst = worst.max((g - naive).abs() / naive);
        }

        let (vocab, width) = (rng.random_range(1..40), rng.random_range(1..16));
        let ids: Vec<Vec<usize>> = (0..batch)
            .map(|_| (0..seq).map(|_| rng.random_range(0..vocab)).collect())
            .collect();
        let grads: Vec<_> = (0..batch).map(|_| random_matrix(&mut rng, seq, width)).collect();
        let ghost = ghost_norm_embedding(&ids, &grads, vocab).unwrap();
        for ((tok, s), g) in ids.iter().zip(&grads).zip(ghost) {
            let mut table = Array2::<f64>::zeros((vocab, width));
            for (&id, row) in tok.iter().zip(s.rows()) {
                let mut dst = table.row_mut(id);
                dst += &row;
            }
            let naive: f64 = table.iter().map(|x| x * x).sum();
            worst = worst.max((g - naive).abs() / naive);
        }
    }
    check(
        worst <= 1e-10,
        format!("200 shape draws, max relative difference {worst:.2e}"),
        format!("max relative difference {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- 4

/// δ(ε) of the Gaussian mechanism with sensitivity 1 and noise std ρ.
fn gaussian_delta(eps: f64, rho: f64) -> f64 {
    let phi = Normal::new(0.0, 1.0).unwrap();
    phi.cdf(-eps * rho + 0.5 / rho) - eps.exp() * phi.cdf(-eps * rho - 0.5 / rho)
}

fn bisect_gaussian_epsilon(rho: f64, delta: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gaussian_delta(mid, rho) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn prv(rho: f64, q: f64, t: u64, delta: f64) -> f64 {
    prv_epsilon(&PrivacyConfig::new(rho, q, t, delta).unwrap(), &PldOptions::default())
        .unwrap()
        .epsilon
}

fn rdp(rho: f64, q: f64, t: u64, delta: f64) -> f64 {
    rdp_epsilon(rho, q, t, delta, &default_orders()).unwrap().epsilon
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    // (a) full batch, one step.
    let mut worst_a = 0.0f64;
    for rho in [0.7, 1.0, 2.0] {
        let pld = subsampled_gaussian_pld(rho, 1.0, &PldOptions::default()).unwrap();
        let eps = epsilon_from_pld(&pld, 1e-5).unwrap().epsilon;
        worst_a = worst_a.max((eps - bisect_gaussian_epsilon(rho, 1e-5)).abs());
    }
    ok &= worst_a < 2e-3;
    notes.push(format!("(a) max |PRV - bisection| {worst_a:.1e}"));

    // (b) PRV against RDP.
    let mut above = Vec::new();
    let mut outside = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for rho in [0.5, 1.0, 2.0] {
        for q in [0.004, 0.01] {
            for t in [100u64, 5000] {
                let p = prv(rho, q, t, 1e-5);
                let r = rdp(rho, q, t, 1e-5);
                min_ratio = min_ratio.min(p / r);
                if p > r + 1e-6 {
                    above.push(format!("rho={rho} q={q} T={t}"));
                }
                if (r - p).abs() > 0.1 * r {
                    outside.push(format!("rho={rho} q={q} T={t}: {p:.3} vs {r:.3}"));
                }
            }
        }
    }
    ok &= above.is_empty() && outside.is_empty();
    notes.push(format!(
        "(b) PRV above RDP at {} points, outside 10% at {} of 12 (min PRV/RDP {min_ratio:.2}{})",
        above.len(),
        outside.len(),
        outside.first().map(|s| format!(", e.g. {s}")).unwrap_or_default()
    ));

    // (c) monotone in T, q, ρ and δ.
    let mut violations = 0;
    let base = |rho: f64, q: f64, t: u64, d: f64| prv(rho, q, t, d);
    let rhos = [0.6, 1.0, 2.0];
    let qs = [0.004, 0.01, 0.05];
    let ts = [10u64, 100, 1000];
    let deltas = [1e-7, 1e-5, 1e-3];
    for &rho in &rhos {
        for &q in &qs {
            let e: Vec<f64> = ts.iter().map(|&t| base(rho, q, t, 1e-5)).collect();
            violations += e.windows(2).filter(|w| w[1] < w[0]).count();
            let e: Vec<f64> = deltas.iter().map(|&d| base(rho, q, 100, d)).collect();
            violations += e.windows(2).filter(|w| w[1] > w[0]).count();
        }
        for &t in &ts {
            let e: Vec<f64> = qs.iter().map(|&q| base(rho, q, t, 1e-5)).collect();
            violations += e.windows(2).filter(|w| w[1] < w[0]).count();
        }
    }
    for &q in &qs {
        for &t in &ts {
            let e: Vec<f64> = rhos.iter().map(|&r| base(r, q, t, 1e-5)).collect();
            violations += e.windows(2).filter(|w| w[1] > w[0]).count();
        }
    }
    ok &= violations == 0;
    notes.push(format!("(c) {violations} monotonicity violations"));

    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    notes.push(format!("{secs:.1}s"));
    check(ok, notes.join("; "), notes.join("; "))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let q = 32.0 / 8066.0;
    let delta = 1.0 / 8066.0;
    let rho = calibrate_noise(8.0, q, 5040, delta, &PldOptions::default()).map_err(|e| e.to_string())?;
    let eps = prv(rho, q, 5040, delta);
    check(
        (7.92..=8.0).contains(&eps) && eps <= 10.0,
        format!("rho {rho:.4} accounts to epsilon {eps:.4}"),
        format!("rho {rho:.4} accounts to epsilon {eps:.4}"),
    )
}

// ---------------------------------------------------------------- 6

fn small_corpus() -> (Vec<privcode_core::LabeledNote>, Vec<privcode_core::LabeledNote>, usize, usize) {
    let spec = CorpusSpec {
        num_patients: 240,
        num_labels: 4,
        tail_codes: 2,
        background_vocab: 60,
        min_background_tokens: 8,
        max_background_tokens: 16,
        seed: 6,
        ..CorpusSpec::default()
    };
    let opts = PreprocessOptions {
        top_k: 4,
        ..PreprocessOptions::default()
    };
    let p = prepare_corpus(generate_corpus(&spec).unwrap(), &opts, 6).unwrap();
    let [train_set, validation, _] = p.splits;
    (train_set, validation, p.vocabulary.len(), p.label_space.len())
}

fn criterion_6() -> Outcome {
    let (train_set, validation, v, l) = small_corpus();
    let b = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let schedule: Vec<Vec<usize>> = (0..10)
        .map(|_| (0..b).map(|_| rng.random_range(0..train_set.len())).collect())
        .collect();
    let plain = RunConfig {
        dims: ModelDims {
            vocab_size: v,
            embed_dim: 8,
            hidden_dim: 8,
            attention_dim: 8,
            num_labels: l,
            segment_len: 16,
            max_len: 64,
        },
        optimizer: OptimizerConfig {
            base_lr: 0.01,
            warmup_steps: 2,
            batch_size: b,
            max_epochs: Some(1),
            ..OptimizerConfig::default()
        },
        privacy: None,
        threshold: 0.5,
        seed: 1,
        schedule: Some(schedule),
    };
    let private = RunConfig {
        privacy: Some(DpSettings {
            clip: ClipConfig {
                clip_norm: 1e9,
                mode: ClipMode::Flat,
                noise_multiplier: 0.0,
                rng_seed: 4,
            },
            delta: 1e-5,
            pld: PldOptions::default(),
        }),
        ..plain.clone()
    };
    let a = train(&plain, &train_set, &validation).map_err(|e| e.to_string())?;
    let d = train(&private, &train_set, &validation).map_err(|e| e.to_string())?;
    let diff = a
        .last
        .blocks()
        .iter()
        .flat_map(|x| x.iter())
        .zip(d.last.blocks().iter().flat_map(|x| x.iter()))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    check(
        a.steps == 10 && d.steps == 10 && diff <= 1e-9,
        format!("10 steps, max parameter difference {diff:.1e}"),
        format!("steps {}/{}, max parameter difference {diff:.1e}", a.steps, d.steps),
    )
}

// ---------------------------------------------------------------- 7

fn run_reproduce(out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_privcode"))
        .args(["reproduce", "--seed", "7", "--output-dir"])
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("reproduce exited with {status}"));
    }
    Ok(start.elapsed())
}

fn criterion_7(out: &Path, elapsed: Duration) -> Outcome {
    let report: ReproduceReport =
        serde_json::from_slice(&fs::read(out.join(REPORT_JSON)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = report.corpus.train >= 2000 && report.corpus.labels == 20 && elapsed.as_secs() < 15 * 60;
    for m in &report.models {
        let eps = m.dp.epsilon.as_ref().map(|e| e.prv).unwrap_or(f64::NAN);
        ok &= m.non_dp.validation_micro_f1 >= 0.80;
        ok &= m.dp.test.micro_f1 < m.non_dp.test.micro_f1;
        ok &= m.f1_drop == m.non_dp.test.micro_f1 - m.dp.test.micro_f1;
        lines.push(format!(
            "{} val {:.3}, test {:.3} -> {:.3} at eps {eps:.2}",
            m.model, m.non_dp.validation_micro_f1, m.non_dp.test.micro_f1, m.dp.test.micro_f1
        ));
    }
    let detail = format!(
        "train {} notes, K={}, {}; {:.0}s",
        report.corpus.train,
        report.corpus.labels,
        lines.join("; "),
        elapsed.as_secs_f64()
    );
    check(ok, detail.clone(), detail)
}

// ---------------------------------------------------------------- 8

/// Confusion counts whose F1, parity and recall are exactly f, p and r
/// hundredths.
fn counts_for(f: u64, p: u64, r: u64) -> ConfusionCounts {
    let k = p;
    let tp = r * f * k;
    let fn_ = f * k * (100 - r);
    let fp = k * (200 * r - r * f - 100 * f);
    let total = (tp + fp) * 100 / p;
    ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: total - tp - fp - fn_,
    }
}

type Row = (&'static str, u64, u64, u64);

const TABLES: [&[Row]; 8] = [
    &[("male", 29, 5, 20), ("female", 25, 4, 16)],
    &[("male", 74, 12, 72), ("female", 73, 11, 72)],
    &[("male", 32, 17, 37), ("female", 29, 16, 34)],
    &[("male", 68, 13, 68), ("female", 67, 12, 67)],
    &[("white", 29, 5, 20), ("black", 25, 4, 17), ("hispanic", 25, 4, 17), ("asian", 22, 4, 15)],
    &[("white", 74, 12, 73), ("black", 74, 11, 72), ("hispanic", 72, 11, 71), ("asian", 74, 11, 77)],
    &[("white", 30, 17, 35), ("black", 31, 15, 35), ("hispanic", 32, 14, 36), ("asian", 30, 15, 37)],
    &[("white", 67, 13, 68), ("black", 68, 12, 69), ("hispanic", 68, 10, 64), ("asian", 63, 12, 67)],
];

fn table_report(rows: &[Row]) -> GroupReport {
    let groups: Vec<(String, Option<(ConfusionCounts, usize)>)> = rows
        .iter()
        .map(|&(g, f, p, r)| (g.to_owned(), Some((counts_for(f, p, r), 100))))
        .collect();
    GroupReport::from_counts("group", &groups, None)
}

fn criterion_8() -> Outcome {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for rows in TABLES {
        let rep = table_report(rows);
        for (mi, metric) in ["f1", "parity", "recall"].iter().enumerate() {
            for a in rows {
                let va = [a.1, a.2, a.3][mi];
                for b in rows {
                    let vb = [b.1, b.2, b.3][mi];
                    let expected = va.abs_diff(vb) as f64 / 100.0;
                    checked += 1;
                    let ab = rep.gap(metric, a.0, b.0);
                    if ab != Some(expected) || ab != rep.gap(metric, b.0, a.0) {
                        mismatches.push(format!("{metric} {} {}: {ab:?} vs {expected}", a.0, b.0));
                    }
                }
            }
        }
    }
    let dp = table_report(TABLES[0]);
    let plain = table_report(TABLES[1]);
    let headline = (
        dp.groups["male"].recall,
        dp.groups["female"].recall,
        dp.gap("recall", "male", "female"),
        plain.gap("f1", "male", "female"),
    );
    check(
        mismatches.is_empty() && headline == (0.20, 0.16, Some(0.04), Some(0.01)),
        format!("{checked} gaps exact and symmetric; DP gender recall 0.20 vs 0.16 gap 0.04, non-DP F1 gap 0.01"),
        format!("{} mismatches, headline {headline:?}", mismatches.len()),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let tokens = preprocess_text("Patient took 120mg; BP 700!");
    let expected: Vec<String> = ["patient", "took", "120mg", "bp"].iter().map(|s| s.to_string()).collect();
    if tokens != expected {
        return Err(format!("dosage example gave {tokens:?}"));
    }
    let single: Vec<RawRecord> = (0..100)
        .map(|i| RawRecord {
            admission_id: 1000 + i,
            patient_id: i,
            text: "x".into(),
            codes: vec!["a".into()],
            gender: Gender::Female,
            ethnicity: Ethnicity::White,
        })
        .collect();
    let s = filter_and_split(single, &["a".to_string()], [0.7, 0.15, 0.15], 3).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = s.parts.iter().map(Vec::len).collect();
    if sizes != [70, 15, 15] {
        return Err(format!("100 patients split as {sizes:?}"));
    }

    let opts = PreprocessOptions {
        top_k: 20,
        ..PreprocessOptions::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let spec = CorpusSpec {
            num_patients: 600,
            seed,
            ..CorpusSpec::default()
        };
        let p = prepare_corpus(generate_corpus(&spec).unwrap(), &opts, seed).map_err(|e| e.to_string())?;
        let mut owner: BTreeMap<u64, usize> = BTreeMap::new();
        for (i, split) in p.splits.iter().enumerate() {
            for n in split {
                if *owner.entry(n.patient_id).or_insert(i) != i {
                    return Err(format!("seed {seed}: patient {} in two splits", n.patient_id));
                }
            }
        }
        let total: usize = p.splits.iter().map(Vec::len).sum();
        for (split, target) in p.splits.iter().zip(opts.ratios) {
            worst = worst.max((split.len() as f64 / total as f64 - target).abs());
        }
    }
    check(
        worst <= 0.02,
        format!("dosage example exact, no leakage, max share deviation {worst:.4} over 10 seeds"),
        format!("max share deviation {worst:.4}"),
    )
}

// ---------------------------------------------------------------- 10

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_10(a: &Path, b: &Path) -> Outcome {
    let ta = tree_bytes(a);
    let tb = tree_bytes(b);
    let differing: Vec<&String> = ta.keys().filter(|k| tb.get(*k) != ta.get(*k)).collect();
    let kinds = ["manifest.json", "checkpoint.bin", "report.json", "report.txt"];
    let covered = kinds.iter().all(|k| ta.keys().any(|p| p.ends_with(k)));
    check(
        ta.len() == tb.len() && differing.is_empty() && covered,
        format!("{} files byte-identical across two runs", ta.len()),
        format!("{} vs {} files, differing: {differing:?}", ta.len(), tb.len()),
    )
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");

    let mut results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
    ];
    match run_reproduce(&first) {
        Ok(elapsed) => results.push((7, criterion_7(&first, elapsed))),
        Err(e) => results.push((7, Err(e))),
    }
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    let tenth = run_reproduce(&second).and_then(|_| criterion_10(&first, &second));
    results.push((10, tenth));

    let mut failed = Vec::new();
    println!();
    for (n, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n}: PASS {detail}"),
            Err(detail) => {
                println!("criterion {n}: FAIL {detail}");
                failed.push(*n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

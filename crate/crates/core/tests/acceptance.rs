//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;

use muki_core::data::{load_jsonl, LabelSpace, TaggingSpec};
use muki_core::harness::{
    compute_ece, run_experiment, run_tagging, selection_accuracy, ExperimentConfig, MetricsReport, TaggingExperiment,
    Workspace,
};
use muki_core::integration::{
    integrate_hard, integrate_soft, normalized_uncertainty, pad, select_teacher, teacher_weights, Strategy,
    TeacherEstimate, UncertaintyReport,
};
use muki_core::math::{
    batch_gradient, batch_loss, entropy, kl_divergence, mix, softmax, Distribution, Example, Layer, LossTarget,
    MlpModel, RngStream,
};
use muki_core::student::instance_stream;
use muki_core::teacher::TeacherModel;

const SIMPLEX_TOL: f64 = 1e-9;
const FAST_BUDGET: Duration = Duration::from_secs(5);
const SYNTHETIC_BUDGET: Duration = Duration::from_secs(120);
const SCALING_BUDGET: Duration = Duration::from_secs(300);
const GRAD_H: f64 = 1e-4;
const GRAD_REL_TOL: f64 = 1e-4;
const HARD_SOFT_TAU: f64 = 1e-3;
const HARD_SOFT_TOL: f64 = 1e-6;
/// Smallest top-two confidence gap for which τ = 1e-3 can push the runner-up
/// weight below 1e-6 (needs gap > τ·ln 1e6 ≈ 0.0138).
const MIN_CONFIDENCE_GAP: f64 = 0.02;
const WORKED_TOL: f64 = 1e-6;
const KD_SLACK: f64 = 0.01;
const SELECTION_FLOOR: f64 = 0.85;
const ABLATION_SLACK: f64 = 0.005;

const SYNTHETIC: &str = include_str!("../../../configs/synthetic.toml");

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_dist(rng: &mut RngStream, n: usize, scale: f64) -> Distribution {
    let logits: Vec<f64> = (0..n).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
    softmax(&logits, 1.0).unwrap()
}

fn simplex_error(d: &Distribution) -> f64 {
    let p = d.probs();
    let below = p.iter().fold(0.0f64, |m, &v| m.max(-v));
    (p.iter().sum::<f64>() - 1.0).abs().max(below)
}

fn contiguous_space(sizes: &[usize]) -> LabelSpace {
    let total: usize = sizes.iter().sum();
    let labels = (0..total).map(|i| format!("c{i}")).collect();
    let mut start = 0;
    let subsets = sizes
        .iter()
        .map(|&s| {
            let v: Vec<usize> = (start..start + s).collect();
            start += s;
            v
        })
        .collect();
    LabelSpace::new(labels, subsets).unwrap()
}

fn criterion_1() -> Check {
    let t = Instant::now();
    let mut rng = RngStream::new(1, 0);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let n = rng.random_range(1..12);
        let logits: Vec<f64> = (0..n).map(|_| 100.0 * (rng.random::<f64>() - 0.5)).collect();
        let temp = 0.05 + 5.0 * rng.random::<f64>();
        worst = worst.max(simplex_error(&ok(softmax(&logits, temp))?));
    }
    ensure!(worst <= SIMPLEX_TOL, "softmax off simplex by {worst:e}");

    for _ in 0..500 {
        let sizes: Vec<usize> = (0..rng.random_range(2..5)).map(|_| rng.random_range(2..6)).collect();
        let space = contiguous_space(&sizes);
        let i = rng.random_range(0..sizes.len());
        let local = random_dist(&mut rng, sizes[i], 10.0);
        let padded = ok(pad(&local, &space, i))?;
        worst = worst.max(simplex_error(&padded));
        let outside: f64 = (0..space.num_labels())
            .filter(|g| space.subset_of(*g) != i)
            .map(|g| padded.probs()[g])
            .sum();
        ensure!(outside == 0.0, "pad leaked mass {outside} outside its subset");

        let k = rng.random_range(1..5);
        let dists: Vec<Distribution> = (0..k).map(|_| random_dist(&mut rng, 6, 8.0)).collect();
        let w = random_dist(&mut rng, k, 4.0);
        worst = worst.max(simplex_error(&ok(mix(w.probs(), &dists))?));
    }
    ensure!(worst <= SIMPLEX_TOL, "pad/mix off simplex by {worst:e}");

    for n in 1..20 {
        let h = entropy(&Distribution::uniform(n));
        ensure!((h - (n as f64).ln()).abs() < 1e-12, "uniform entropy {h} for n = {n}");
        let d = random_dist(&mut rng, n, 20.0);
        let h = entropy(&d);
        ensure!(
            (-1e-12..=(n as f64).ln() + 1e-12).contains(&h),
            "entropy {h} outside [0, ln {n}]"
        );
        ensure!(
            entropy(&ok(Distribution::one_hot(n, n - 1))?) == 0.0,
            "one-hot entropy nonzero"
        );
    }

    let mut min_kl = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(2..10);
        let p = random_dist(&mut rng, n, 12.0);
        let q = random_dist(&mut rng, n, 12.0);
        min_kl = min_kl.min(ok(kl_divergence(&p, &q))?);
        ensure!(ok(kl_divergence(&p, &p))?.abs() < 1e-12, "KL(p‖p) nonzero");
    }
    ensure!(min_kl >= 0.0, "negative KL {min_kl:e}");
    let elapsed = t.elapsed();
    ensure!(elapsed < FAST_BUDGET, "took {elapsed:?}");
    Ok(format!(
        "max simplex error {worst:.1e}, min KL over 1000 pairs {min_kl:.2e}, {elapsed:.2?}"
    ))
}

fn with_param(model: &MlpModel, tensor: usize, index: usize, delta: f64) -> MlpModel {
    let mut layers: Vec<Layer> = model.layers().to_vec();
    let layer = &mut layers[tensor / 2];
    if tensor.is_multiple_of(2) {
        layer.weights.as_mut_slice()[index] += delta;
    } else {
        layer.bias[index] += delta;
    }
    MlpModel::from_layers(layers, model.dropout_rate(), model.activation()).unwrap()
}

fn criterion_2() -> Check {
    let t = Instant::now();
    let model = ok(MlpModel::new(&[4, 2, 3], 0.0, &mut RngStream::new(7, 0)))?;
    let mut rng = RngStream::new(7, 1);
    let inputs: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..4).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect())
        .collect();
    let targets: Vec<LossTarget> = (0..6)
        .map(|_| LossTarget::Full(random_dist(&mut rng, 3, 4.0)))
        .collect();
    let weights: Vec<f64> = (0..6).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
    let batch: Vec<Example> = (0..6)
        .map(|j| Example {
            features: &inputs[j],
            target: &targets[j],
            weight: weights[j],
        })
        .collect();
    let stream = RngStream::new(7, 2);
    let (_, grads) = ok(batch_gradient(&model, &batch, &stream))?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (tensor, g) in grads.tensors().iter().enumerate() {
        for (index, &analytic) in g.iter().enumerate() {
            let plus = ok(batch_loss(&with_param(&model, tensor, index, GRAD_H), &batch, &stream))?;
            let minus = ok(batch_loss(&with_param(&model, tensor, index, -GRAD_H), &batch, &stream))?;
            let numeric = (plus - minus) / (2.0 * GRAD_H);
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale == 0.0 {
                0.0
            } else {
                (analytic - numeric).abs() / scale
            };
            ensure!(
                rel <= GRAD_REL_TOL,
                "tensor {tensor}[{index}]: analytic {analytic:e}, numeric {numeric:e}, rel {rel:e}"
            );
            worst = worst.max(rel);
            checked += 1;
        }
    }
    ensure!(
        checked == model.param_count(),
        "checked {checked} of {} parameters",
        model.param_count()
    );
    let elapsed = t.elapsed();
    ensure!(elapsed < FAST_BUDGET, "took {elapsed:?}");
    Ok(format!(
        "{checked} parameters, max relative error {worst:.2e}, {elapsed:.2?}"
    ))
}

fn criterion_3() -> Check {
    let mut rng = RngStream::new(3, 0);
    let mut accepted = 0;
    let mut worst = 0.0f64;
    while accepted < 200 {
        let sizes: Vec<usize> = (0..rng.random_range(2..5)).map(|_| rng.random_range(2..6)).collect();
        let space = contiguous_space(&sizes);
        let dists = sizes.iter().map(|&s| random_dist(&mut rng, s, 10.0)).collect();
        let report = ok(UncertaintyReport::from_distributions(dists))?;
        let mut c = report.confidences();
        c.sort_by(|a, b| b.total_cmp(a));
        if c[0] - c[1] < MIN_CONFIDENCE_GAP {
            continue;
        }
        accepted += 1;
        let hard = ok(integrate_hard(&report, &space))?;
        let soft = ok(integrate_soft(&report, &space, HARD_SOFT_TAU))?;
        let linf = hard
            .target
            .probs()
            .iter()
            .zip(soft.target.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(linf);
        ensure!(hard.weight == soft.weight, "weights differ");
    }
    ensure!(worst <= HARD_SOFT_TOL, "L∞ {worst:e}");
    Ok(format!("200 reports, max L∞ {worst:.2e}"))
}

fn criterion_4() -> Check {
    // Scalar oracle: softmax([0.9, 0.4] / 0.2) = [1, e^-2.5] / (1 + e^-2.5).
    let e = (-2.5f64).exp();
    let oracle = [1.0 / (1.0 + e), e / (1.0 + e)];
    ensure!((oracle[0] - 0.924142).abs() < WORKED_TOL, "oracle drifted: {oracle:?}");
    let est = |c: f64| TeacherEstimate {
        mean_dist: Distribution::uniform(2),
        uncertainty: (1.0 - c) * 2f64.ln(),
        normalized: 1.0 - c,
        confidence: c,
    };
    let report = ok(UncertaintyReport::from_estimates(vec![est(0.9), est(0.4)]))?;
    let w = ok(teacher_weights(&report, 0.2))?;
    for (got, want) in w.probs().iter().zip([0.924142, 0.075858]) {
        ensure!((got - want).abs() < WORKED_TOL, "weights {:?}", w.probs());
    }

    // u = [0.6, 0.9] over [2, 4] labels: 0.6/ln 2 ≈ 0.866 > 0.9/ln 4 ≈ 0.649.
    let n = [ok(normalized_uncertainty(0.6, 2))?, ok(normalized_uncertainty(0.9, 4))?];
    ensure!(
        select_teacher(&[0.6, 0.9]) == 0,
        "raw entropies should prefer teacher 0"
    );
    let flipped = select_teacher(&n);
    ensure!(flipped == 1, "normalized selection picked {flipped}");
    ensure!(
        (n[0] - 0.6 / 2f64.ln()).abs() < 1e-12 && (n[1] - 0.9 / 4f64.ln()).abs() < 1e-12,
        "n = {n:?}"
    );

    // Both confidences fall in [0.5, 1]: accuracy 0.5, mean confidence 0.75.
    let ece = ok(compute_ece(&[0.9, 0.6], &[true, false], 2))?;
    ensure!(ece == 0.25, "ECE {ece}");
    Ok(format!(
        "weights {:.6?}, n = [{:.4}, {:.4}] → i* = 1, ECE {ece}",
        w.probs(),
        n[0],
        n[1]
    ))
}

struct Run {
    report: MetricsReport,
    elapsed: Duration,
    _dir: tempfile::TempDir,
    cfg: ExperimentConfig,
}

fn run(cfg: ExperimentConfig) -> Result<Run, String> {
    let dir = ok(tempfile::tempdir())?;
    let cfg = ExperimentConfig {
        out_dir: dir.path().join("run"),
        ..cfg
    };
    let t = Instant::now();
    let report = ok(run_experiment(&cfg))?;
    Ok(Run {
        report,
        elapsed: t.elapsed(),
        _dir: dir,
        cfg,
    })
}

fn synthetic() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(SYNTHETIC).expect("benchmark config parses")
}

fn mean(report: &MetricsReport, m: &str) -> Result<f64, String> {
    report
        .mean_accuracy(m)
        .ok_or_else(|| format!("no `{m}` rows in report"))
}

fn criterion_5(main: &Run) -> Check {
    let r = &main.report;
    let [hard, soft, kd, uhc, sup, ens] =
        ["hard", "soft", "vanilla_kd", "uhc", "supervised", "ensemble"].map(|m| mean(r, m).unwrap_or(f64::NAN));
    for (name, v) in [("hard", hard), ("soft", soft)] {
        ensure!(v >= ens, "{name} {v:.4} < ensemble {ens:.4}");
        ensure!(v >= kd - KD_SLACK, "{name} {v:.4} < vanilla_kd {kd:.4} − {KD_SLACK}");
    }
    for (name, v) in [("hard", hard), ("soft", soft), ("vanilla_kd", kd), ("uhc", uhc)] {
        ensure!(sup >= v, "supervised {sup:.4} < {name} {v:.4}");
    }
    let teachers: Vec<f64> = r
        .aggregates
        .iter()
        .filter(|a| a.method.starts_with("teacher_"))
        .map(|a| a.mean)
        .collect();
    ensure!(teachers.len() == 2, "expected 2 single-teacher rows");
    for a in &r.aggregates {
        if ["hard", "soft", "vanilla_kd", "uhc", "supervised"].contains(&a.method.as_str()) {
            ensure!(a.runs == 3 && a.std.is_some(), "{} lacks 3-seed mean ± std", a.method);
        }
    }
    ensure!(main.elapsed < SYNTHETIC_BUDGET, "took {:?}", main.elapsed);
    Ok(format!(
        "supervised {sup:.4} | hard {hard:.4} soft {soft:.4} | vanilla_kd {kd:.4} uhc {uhc:.4} | ensemble {ens:.4} | teachers {teachers:.4?} | {:.2?}",
        main.elapsed
    ))
}

fn criterion_6(main: &Run) -> Check {
    let d = main.report.diagnostics.as_ref().ok_or("diagnostics missing")?;
    let soft = d
        .supervision_quality
        .iter()
        .find(|q| q.strategy == Strategy::Soft)
        .ok_or("no soft supervision quality")?;
    let kd = d
        .supervision_quality
        .iter()
        .find(|q| q.strategy == Strategy::VanillaKd)
        .ok_or("no vanilla_kd supervision quality")?;
    let (high, low) = (
        soft.high_margin.ok_or("no margins")?,
        soft.low_margin.ok_or("no margins")?,
    );
    let (h, l) = (
        high.mean_kl.ok_or("empty v ≥ 0.5 group")?,
        low.mean_kl.ok_or("empty v < 0.5 group")?,
    );
    let kd_kl = kd.overall.mean_kl.ok_or("empty vanilla_kd")?;
    ensure!(h < l, "v ≥ 0.5 KL {h:.4} not below v < 0.5 KL {l:.4}");
    ensure!(h < kd_kl, "v ≥ 0.5 KL {h:.4} not below vanilla_kd KL {kd_kl:.4}");
    Ok(format!(
        "soft KL v≥0.5 {h:.4} (n={}) < v<0.5 {l:.4} (n={}); vanilla_kd {kd_kl:.4}",
        high.count, low.count
    ))
}

/// Brute force: average K dropout passes, normalise each entropy by the
/// subset size, pick the lowest, and check it owns the label.
fn brute_force_selection(
    teachers: &[TeacherModel],
    space: &LabelSpace,
    x: &[f64],
    y: usize,
    k: usize,
    seed: u64,
    id: usize,
) -> bool {
    let rng = instance_stream(seed, id);
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, t) in teachers.iter().enumerate() {
        let p = t.mc_predict(x, k, &rng.substream(i as u64)).unwrap();
        let h: f64 = p.probs().iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
        let n = (h / (p.len() as f64).ln()).clamp(0.0, 1.0);
        if n < best.0 {
            best = (n, i);
        }
    }
    space.subset_of(y) == best.1
}

fn criterion_7(main: &Run) -> Check {
    let ws = Workspace::new(&main.cfg.out_dir);
    let space = main.report.label_space.clone();
    let teachers: Vec<TeacherModel> = (0..space.num_subsets())
        .map(|i| TeacherModel::load(&ws.teacher_stem(i)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let train = ok(load_jsonl(&ws.train()))?;
    let k = main.cfg.k;
    let seeds = [0u64, 1, 2];
    let (mut mc, mut single) = (0.0, 0.0);
    for &s in &seeds {
        mc += ok(selection_accuracy(&teachers, &space, &train, Some(k), s))? / 3.0;
        single += ok(selection_accuracy(&teachers, &space, &train, Some(1), s))? / 3.0;
    }
    let labels = train.labels().ok_or("train pool unlabeled")?;
    let brute = train
        .features()
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(id, (x, &y))| brute_force_selection(&teachers, &space, x, y, k, 0, *id))
        .count() as f64
        / train.len() as f64;
    let lib = ok(selection_accuracy(&teachers, &space, &train, Some(k), 0))?;
    ensure!((brute - lib).abs() < 1e-12, "brute force {brute} ≠ library {lib}");
    let (sep, spread) = match &main.cfg.data {
        muki_core::harness::DataSource::Mixture { separation, spread, .. } => (*separation, *spread),
        _ => return Err("benchmark is not a mixture".into()),
    };
    ensure!(sep >= 4.0 * spread, "separation {sep} below 4 spreads");
    ensure!(mc >= single, "K={k} selection {mc:.4} < K=1 {single:.4}");
    ensure!(mc >= SELECTION_FLOOR, "K={k} selection {mc:.4} < {SELECTION_FLOOR}");
    Ok(format!(
        "selection accuracy K={k} {mc:.4} ≥ K=1 {single:.4}; brute-force check {brute:.4}"
    ))
}

fn criterion_8() -> Check {
    let mut cfg = synthetic();
    cfg.teachers = 5;
    cfg.diagnostics = false;
    if let muki_core::harness::DataSource::Mixture {
        classes, feature_dim, ..
    } = &mut cfg.data
    {
        *classes = 10;
        *feature_dim = 16;
    }
    let r = run(cfg)?;
    let mut sizes: Vec<usize> = r.report.label_space.subsets().iter().map(Vec::len).collect();
    sizes.sort();
    ensure!(sizes == [2; 5], "subset sizes {sizes:?}");
    let [hard, soft, kd] = ["hard", "soft", "vanilla_kd"].map(|m| mean(&r.report, m).unwrap_or(f64::NAN));
    ensure!(
        hard >= kd && soft >= kd,
        "hard {hard:.4} soft {soft:.4} vs vanilla_kd {kd:.4}"
    );
    ensure!(r.elapsed < SCALING_BUDGET, "took {:?}", r.elapsed);
    Ok(format!(
        "sizes {sizes:?}: hard {hard:.4} soft {soft:.4} ≥ vanilla_kd {kd:.4}, {:.2?}",
        r.elapsed
    ))
}

fn criterion_9(main: &Run) -> Check {
    let ablate = |k: Option<usize>, reweight: bool| -> Result<MetricsReport, String> {
        let mut cfg = synthetic();
        cfg.diagnostics = false;
        cfg.strategies = vec![Strategy::Hard, Strategy::Soft];
        cfg.reweight = reweight;
        if let Some(k) = k {
            cfg.k = k;
        }
        Ok(run(cfg)?.report)
    };
    let single_pass = ablate(Some(1), true)?;
    let unweighted = ablate(None, false)?;
    let mut lines = Vec::new();
    for m in ["hard", "soft"] {
        let full = mean(&main.report, m)?;
        let k1 = mean(&single_pass, m)?;
        let v1 = mean(&unweighted, m)?;
        ensure!(
            k1 <= full + ABLATION_SLACK,
            "{m}: K=1 {k1:.4} > full {full:.4} + {ABLATION_SLACK}"
        );
        ensure!(
            v1 <= full + ABLATION_SLACK,
            "{m}: v≡1 {v1:.4} > full {full:.4} + {ABLATION_SLACK}"
        );
        lines.push(format!("{m} full {full:.4} K=1 {k1:.4} v≡1 {v1:.4}"));
    }
    Ok(lines.join("; "))
}

fn criterion_10() -> Check {
    let spec = TaggingSpec {
        entity_types: vec!["LOC".into(), "PER".into()],
        groups: vec![vec![0], vec![1]],
        feature_dim: 8,
        separation: 4.0,
        spread: 1.0,
        sentences: 300,
        sentence_len: 12,
        entity_rate: 0.15,
        max_entity_len: 3,
        seed: 0,
    };
    let mut exp = TaggingExperiment::new(spec, 100);
    exp.teacher.epochs = 20;
    exp.student.epochs = 20;
    let mut lines = Vec::new();
    for strategy in [Strategy::Hard, Strategy::Soft] {
        exp.strategy = strategy;
        let r = ok(run_tagging(&exp))?;
        ensure!(
            r.max_simplex_error <= SIMPLEX_TOL,
            "{strategy}: targets off simplex by {:e}",
            r.max_simplex_error
        );
        for (i, t) in r.teachers.iter().enumerate() {
            ensure!(
                r.student.f1 >= t.f1,
                "{strategy}: student F1 {:.4} < tagger {i} F1 {:.4}",
                r.student.f1,
                t.f1
            );
        }
        lines.push(format!(
            "{strategy}: student F1 {:.4} vs taggers {:.4?}",
            r.student.f1,
            r.teachers.iter().map(|t| t.f1).collect::<Vec<_>>()
        ));
    }
    Ok(lines.join("; "))
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let names = [
        "distribution, entropy and KL invariants",
        "backprop matches central differences",
        "soft at τ=1e-3 matches hard",
        "worked values",
        "synthetic end-to-end ordering",
        "supervision quality by margin",
        "MC-Dropout teacher selection",
        "five-teacher scaling",
        "ablations do not beat the full method",
        "token-level integration",
    ];
    let mut results: Vec<Check> = vec![
        guarded(criterion_1),
        guarded(criterion_2),
        guarded(criterion_3),
        guarded(criterion_4),
    ];
    let main_run = run(synthetic());
    match &main_run {
        Ok(m) => {
            results.push(guarded(|| criterion_5(m)));
            results.push(guarded(|| criterion_6(m)));
            results.push(guarded(|| criterion_7(m)));
        }
        Err(e) => results.extend((0..3).map(|_| Err(format!("benchmark run failed: {e}")))),
    }
    results.push(guarded(criterion_8));
    match &main_run {
        Ok(m) => results.push(guarded(|| criterion_9(m))),
        Err(e) => results.push(Err(format!("benchmark run failed: {e}"))),
    }
    results.push(guarded(criterion_10));

    let mut failed = 0;
    for (i, (name, r)) in names.iter().zip(&results).enumerate() {
        match r {
            Ok(detail) => println!("PASS  [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

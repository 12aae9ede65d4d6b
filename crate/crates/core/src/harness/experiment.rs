//! End-to-end pipeline over an on-disk workspace.
//!
//! Every stage reads its inputs from the workspace and writes its outputs
//! back, so the CLI can run stages one at a time and a full run leaves behind
//! everything needed to recompute the report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use super::diagnostics::{
    selection_error_report, supervision_quality, teacher_calibration, uncertainty_separation, MarginKl,
    SelectionErrorReport, SeparationReport, TeacherCalibration,
};
use crate::data::{
    generate_mixture, load_jsonl, save_jsonl, split_validation, vectorize_text_jsonl, Dataset, LabelSpace, MixtureSpec,
};
use crate::error::{Error, Result, StageContext};
use crate::integration::{Strategy, SupervisionCache};
use crate::student::{
    build_target_cache, evaluate_accuracy, train_student, Ensemble, EvalResult, SingleTeacher, StudentModel,
    TrainingLog,
};
use crate::teacher::{train_teachers, TeacherModel};

/// File layout under an experiment's output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("data/labels.json")
    }

    /// Labeled pool the teachers are trained on.
    pub fn train(&self) -> PathBuf {
        self.root.join("data/train.jsonl")
    }

    /// The same instances as [`Workspace::train`], stripped of labels.
    pub fn unlabeled(&self) -> PathBuf {
        self.root.join("data/unlabeled.jsonl")
    }

    pub fn validation(&self) -> PathBuf {
        self.root.join("data/validation.jsonl")
    }

    pub fn test(&self) -> PathBuf {
        self.root.join("data/test.jsonl")
    }

    pub fn teacher_stem(&self, i: usize) -> PathBuf {
        self.root.join(format!("teachers/teacher_{i}"))
    }

    pub fn cache(&self, strategy: Strategy) -> PathBuf {
        self.root.join(format!("caches/{strategy}.jsonl"))
    }

    pub fn student_stem(&self, strategy: Strategy, seed: u64) -> PathBuf {
        self.root.join(format!("students/{strategy}_seed{seed}"))
    }

    pub fn oracle_stem(&self) -> PathBuf {
        self.root.join("students/oracle")
    }

    pub fn training_log(&self, strategy: Strategy, seed: u64) -> PathBuf {
        self.root.join(format!("logs/{strategy}_seed{seed}.csv"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn diagnostics(&self) -> PathBuf {
        self.root.join("diagnostics.json")
    }

    pub fn tau_sweep(&self) -> PathBuf {
        self.root.join("tau_sweep.json")
    }

    pub fn config_copy(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    fn ensure_dirs(&self) -> Result<()> {
        for d in ["data", "teachers", "caches", "students", "logs"] {
            let p = self.root.join(d);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn load_source(cfg: &ExperimentConfig, space: &LabelSpace) -> Result<(Dataset, Dataset)> {
    let (pool, test) = match &cfg.data {
        DataSource::Mixture {
            classes,
            feature_dim,
            separation,
            spread,
            train_per_class,
            test_per_class,
            ..
        } => {
            let spec = MixtureSpec::orthogonal(
                *classes,
                *feature_dim,
                *separation,
                *spread,
                *train_per_class,
                cfg.seeds.data,
            )?;
            let test_spec = spec.resampled(*test_per_class, cfg.seeds.data.wrapping_add(1));
            (generate_mixture(&spec)?, generate_mixture(&test_spec)?)
        }
        DataSource::Jsonl { train, test, .. } => (load_jsonl(train)?, load_jsonl(test)?),
        DataSource::Text {
            train,
            test,
            labels,
            hash_dim,
        } => (
            vectorize_text_jsonl(train, *hash_dim, labels)?,
            vectorize_text_jsonl(test, *hash_dim, labels)?,
        ),
    };
    for ds in [&pool, &test] {
        ds.require_labels("the training pool and test set")?;
        ds.check_labels(space.num_labels())?;
    }
    if pool.feature_dim() != test.feature_dim() {
        return Err(Error::Schema(format!(
            "train has {} features, test has {}",
            pool.feature_dim(),
            test.feature_dim()
        )));
    }
    Ok((pool, test))
}

/// Loads or generates the data, splits off validation, and writes the
/// `data/` directory together with a copy of the config.
pub fn generate_data(cfg: &ExperimentConfig) -> Result<()> {
    let run = || -> Result<()> {
        cfg.validate()?;
        let ws = Workspace::new(&cfg.out_dir);
        ws.ensure_dirs()?;
        let space = cfg.label_space()?;
        let (pool, test) = load_source(cfg, &space)?;
        let (train, validation) = split_validation(&pool, cfg.validation_fraction, cfg.seeds.data)?;
        save_jsonl(&train, &ws.train())?;
        save_jsonl(&train.without_labels(), &ws.unlabeled())?;
        save_jsonl(&validation, &ws.validation())?;
        save_jsonl(&test, &ws.test())?;
        write_json(&space, &ws.labels())?;
        fs::write(ws.config_copy(), cfg.to_toml_string()).map_err(|e| Error::io(ws.config_copy(), e))?;
        info!(
            "data: {} train, {} validation, {} test, {} labels in {} subsets",
            train.len(),
            validation.len(),
            test.len(),
            space.num_labels(),
            space.num_subsets()
        );
        Ok(())
    };
    run().stage("gen-data")
}

fn load_space(ws: &Workspace) -> Result<LabelSpace> {
    read_json(&ws.labels())
}

fn load_teachers(ws: &Workspace, space: &LabelSpace) -> Result<Vec<TeacherModel>> {
    (0..space.num_subsets())
        .map(|i| TeacherModel::load(&ws.teacher_stem(i)))
        .collect()
}

/// Trains and saves one teacher per label subset.
pub fn fit_teachers(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let run = || -> Result<Vec<PathBuf>> {
        let ws = Workspace::new(&cfg.out_dir);
        ws.ensure_dirs()?;
        let space = load_space(&ws)?;
        let train = load_jsonl(&ws.train())?;
        let teachers = train_teachers(&train, &space, &cfg.teacher_config())?;
        let mut paths = Vec::new();
        for (i, t) in teachers.iter().enumerate() {
            let stem = ws.teacher_stem(i);
            t.save(&stem)?;
            paths.push(stem.with_extension("ckpt"));
        }
        info!("teachers: trained {}", teachers.len());
        Ok(paths)
    };
    run().stage("train-teachers")
}

fn build_cache(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    space: &LabelSpace,
    teachers: &[TeacherModel],
    strategy: Strategy,
) -> Result<SupervisionCache> {
    // Only the supervised upper bound may see labels.
    let ds = if strategy.needs_labels() {
        load_jsonl(&ws.train())?
    } else {
        load_jsonl(&ws.unlabeled())?
    };
    build_target_cache(
        &ds,
        teachers,
        space,
        strategy,
        &cfg.integration_options(),
        cfg.seeds.integration,
    )
}

/// Builds and saves the supervision cache of each strategy.
pub fn integrate(cfg: &ExperimentConfig, strategies: &[Strategy]) -> Result<Vec<PathBuf>> {
    let run = || -> Result<Vec<PathBuf>> {
        let ws = Workspace::new(&cfg.out_dir);
        ws.ensure_dirs()?;
        let space = load_space(&ws)?;
        let teachers = load_teachers(&ws, &space)?;
        strategies
            .iter()
            .map(|&s| {
                let cache = build_cache(cfg, &ws, &space, &teachers, s)?;
                let path = ws.cache(s);
                cache.save(&path)?;
                info!("integrate: {s} cache with {} entries", cache.len());
                Ok(path)
            })
            .collect()
    };
    run().stage("integrate")
}

/// Trains one student per strategy and seed from the saved caches.
pub fn fit_students(cfg: &ExperimentConfig, strategies: &[Strategy], seeds: &[u64]) -> Result<Vec<PathBuf>> {
    let run = || -> Result<Vec<PathBuf>> {
        let ws = Workspace::new(&cfg.out_dir);
        ws.ensure_dirs()?;
        let space = load_space(&ws)?;
        let unlabeled = load_jsonl(&ws.unlabeled())?;
        let validation = load_jsonl(&ws.validation())?;
        let caches = strategies
            .iter()
            .map(|&s| Ok((s, SupervisionCache::load(&ws.cache(s))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let jobs: Vec<(Strategy, u64)> = strategies
            .iter()
            .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
            .collect();
        jobs.par_iter()
            .map(|&(s, seed)| {
                let config = crate::student::TrainConfig {
                    strategy: s,
                    ..cfg.train_config(seed)
                };
                let (student, log) = train_student(&unlabeled, &caches[&s], &space, Some(&validation), &config)?;
                let stem = ws.student_stem(s, seed);
                student.save(&stem)?;
                log.write_csv(&ws.training_log(s, seed))?;
                info!(
                    "student {s} seed {seed}: best validation accuracy {:?}",
                    log.best_val_accuracy
                );
                Ok(stem.with_extension("ckpt"))
            })
            .collect()
    };
    run().stage("train-student")
}

/// Accuracy of one method on the test set. Teacher-only baselines carry no
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub seed: Option<u64>,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
}

/// Mean over seeds; the standard deviation needs at least two seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub runs: usize,
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub oracle_accuracy: f64,
    pub selection_errors: SelectionErrorReport,
    pub separation: SeparationReport,
    /// Soft and vanilla-KD targets against the oracle.
    pub supervision_quality: Vec<MarginKl>,
    pub teacher_calibration: Vec<TeacherCalibration>,
    pub mean_ood_ece: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label_space: LabelSpace,
    pub results: Vec<MethodResult>,
    pub aggregates: Vec<Aggregate>,
    #[serde(default)]
    pub diagnostics: Option<Diagnostics>,
    /// Artifact name → path.
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl MetricsReport {
    pub fn aggregate(&self, method: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    pub fn mean_accuracy(&self, method: &str) -> Option<f64> {
        self.aggregate(method).map(|a| a.mean)
    }

    pub fn results_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a MethodResult> + 'a {
        self.results.iter().filter(move |r| r.method == method)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        w.write_record(["method", "seed", "accuracy"])
            .map_err(|e| Error::io(path, e.into()))?;
        for r in &self.results {
            w.write_record([
                r.method.clone(),
                r.seed.map(|s| s.to_string()).unwrap_or_default(),
                r.accuracy.to_string(),
            ])
            .map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

fn result(method: String, seed: Option<u64>, r: EvalResult) -> MethodResult {
    MethodResult {
        method,
        seed,
        accuracy: r.accuracy,
        per_class_accuracy: r.per_class_accuracy,
    }
}

fn aggregate(results: &[MethodResult]) -> Vec<Aggregate> {
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|m| {
            let acc: Vec<f64> = results.iter().filter(|r| r.method == m).map(|r| r.accuracy).collect();
            let (mean, std) = mean_std(&acc);
            Aggregate {
                method: m.to_string(),
                runs: acc.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Scores every saved student of the configured strategies and seeds, the
/// teacher ensemble and each padded teacher on the test set, then writes
/// `report.json` and `metrics.csv`.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let run = || -> Result<MetricsReport> {
        let ws = Workspace::new(&cfg.out_dir);
        let space = load_space(&ws)?;
        let test = load_jsonl(&ws.test())?;
        let teachers = load_teachers(&ws, &space)?;
        let mut artifacts = BTreeMap::new();
        let mut results = Vec::new();
        for &s in &cfg.strategies {
            artifacts.insert(format!("cache/{s}"), ws.cache(s));
            for &seed in &cfg.seeds.students {
                let stem = ws.student_stem(s, seed);
                let student = StudentModel::load(&stem)?;
                results.push(result(s.to_string(), Some(seed), evaluate_accuracy(&student, &test)?));
                artifacts.insert(format!("student/{s}/seed{seed}"), stem.with_extension("ckpt"));
                artifacts.insert(format!("log/{s}/seed{seed}"), ws.training_log(s, seed));
            }
        }
        let ensemble = Ensemble {
            teachers: &teachers,
            space: &space,
        };
        results.push(result("ensemble".into(), None, evaluate_accuracy(&ensemble, &test)?));
        for (i, t) in teachers.iter().enumerate() {
            let single = SingleTeacher {
                teacher: t,
                space: &space,
            };
            results.push(result(format!("teacher_{i}"), None, evaluate_accuracy(&single, &test)?));
            artifacts.insert(format!("teacher/{i}"), ws.teacher_stem(i).with_extension("ckpt"));
        }
        for (name, path) in [
            ("data/train", ws.train()),
            ("data/unlabeled", ws.unlabeled()),
            ("data/validation", ws.validation()),
            ("data/test", ws.test()),
            ("data/labels", ws.labels()),
            ("config", ws.config_copy()),
            ("metrics", ws.metrics_csv()),
            ("report", ws.report()),
        ] {
            artifacts.insert(name.to_string(), path);
        }
        let report = MetricsReport {
            label_space: space,
            aggregates: aggregate(&results),
            results,
            diagnostics: None,
            artifacts,
        };
        write_json(&report, &ws.report())?;
        report.write_csv(&ws.metrics_csv())?;
        Ok(report)
    };
    run().stage("evaluate")
}

fn cache_or_build(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    space: &LabelSpace,
    teachers: &[TeacherModel],
    strategy: Strategy,
) -> Result<SupervisionCache> {
    let path = ws.cache(strategy);
    if path.exists() {
        SupervisionCache::load(&path)
    } else {
        build_cache(cfg, ws, space, teachers, strategy)
    }
}

/// Supervised model over the labeled pool, used as the diagnostics oracle.
pub fn fit_oracle(cfg: &ExperimentConfig) -> Result<(StudentModel, TrainingLog)> {
    let ws = Workspace::new(&cfg.out_dir);
    let space = load_space(&ws)?;
    let train = load_jsonl(&ws.train())?;
    let validation = load_jsonl(&ws.validation())?;
    let cache = build_cache(cfg, &ws, &space, &[], Strategy::Supervised)?;
    let seed = cfg.seeds.students[0];
    train_student(&train, &cache, &space, Some(&validation), &cfg.train_config(seed))
}

/// Diagnostic mode: reads labels of the transfer set to score teacher
/// selection, supervision quality and teacher calibration. Writes
/// `diagnostics.json` and saves the oracle.
pub fn analyze(cfg: &ExperimentConfig) -> Result<Diagnostics> {
    let run = || -> Result<Diagnostics> {
        let ws = Workspace::new(&cfg.out_dir);
        ws.ensure_dirs()?;
        let space = load_space(&ws)?;
        let train = load_jsonl(&ws.train())?;
        let test = load_jsonl(&ws.test())?;
        let teachers = load_teachers(&ws, &space)?;
        let (oracle, _) = fit_oracle(cfg)?;
        oracle.save(&ws.oracle_stem())?;
        let oracle_accuracy = evaluate_accuracy(&oracle, &test)?.accuracy;
        let seed = cfg.seeds.integration;
        let selection_errors = selection_error_report(&teachers, &space, &train, cfg.k, seed, Some((&oracle, &test)))?;
        let separation = uncertainty_separation(&teachers, &space, &train, cfg.k, seed)?;
        let supervision_quality = [Strategy::Soft, Strategy::VanillaKd]
            .into_iter()
            .map(|s| {
                let cache = cache_or_build(cfg, &ws, &space, &teachers, s)?;
                supervision_quality(&oracle, &train, &cache)
            })
            .collect::<Result<Vec<_>>>()?;
        let teacher_calibration = teachers
            .iter()
            .map(|t| teacher_calibration(t, &space, &test, cfg.ece_bins))
            .collect::<Result<Vec<_>>>()?;
        let ood: Vec<f64> = teacher_calibration
            .iter()
            .filter_map(|c| c.out_of_distribution)
            .collect();
        let diagnostics = Diagnostics {
            oracle_accuracy,
            selection_errors,
            separation,
            supervision_quality,
            teacher_calibration,
            mean_ood_ece: (!ood.is_empty()).then(|| ood.iter().sum::<f64>() / ood.len() as f64),
        };
        write_json(&diagnostics, &ws.diagnostics())?;
        info!(
            "analyze: selection error rate {:.4}, oracle accuracy {:.4}",
            diagnostics.selection_errors.rate, oracle_accuracy
        );
        Ok(diagnostics)
    };
    run().stage("analyze")
}

/// Full pipeline: data, teachers, caches, students, evaluation and, when
/// enabled, diagnostics. The report is also written to `report.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    generate_data(cfg)?;
    fit_teachers(cfg)?;
    integrate(cfg, &cfg.strategies)?;
    fit_students(cfg, &cfg.strategies, &cfg.seeds.students)?;
    let mut report = evaluate(cfg)?;
    if cfg.diagnostics {
        report.diagnostics = Some(analyze(cfg)?);
        let ws = Workspace::new(&cfg.out_dir);
        report.artifacts.insert("diagnostics".into(), ws.diagnostics());
        report
            .artifacts
            .insert("oracle".into(), ws.oracle_stem().with_extension("ckpt"));
        write_json(&report, &ws.report()).stage("evaluate")?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub tau: f64,
    pub accuracy: f64,
}

/// Test accuracy of a soft-target student per temperature, reusing the
/// workspace's data and teachers. Also written to `tau_sweep.json`.
pub fn tau_sweep(cfg: &ExperimentConfig, taus: &[f64], seed: u64) -> Result<Vec<TauPoint>> {
    let run = || -> Result<Vec<TauPoint>> {
        let ws = Workspace::new(&cfg.out_dir);
        let space = load_space(&ws)?;
        let teachers = load_teachers(&ws, &space)?;
        let unlabeled = load_jsonl(&ws.unlabeled())?;
        let validation = load_jsonl(&ws.validation())?;
        let test = load_jsonl(&ws.test())?;
        let points = taus
            .par_iter()
            .map(|&tau| {
                let options = crate::student::IntegrationOptions {
                    tau,
                    ..cfg.integration_options()
                };
                let cache = build_target_cache(
                    &unlabeled,
                    &teachers,
                    &space,
                    Strategy::Soft,
                    &options,
                    cfg.seeds.integration,
                )?;
                let config = crate::student::TrainConfig {
                    strategy: Strategy::Soft,
                    ..cfg.train_config(seed)
                };
                let (student, _) = train_student(&unlabeled, &cache, &space, Some(&validation), &config)?;
                Ok(TauPoint {
                    tau,
                    accuracy: evaluate_accuracy(&student, &test)?.accuracy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_json(&points, &ws.tau_sweep())?;
        Ok(points)
    };
    run().stage("analyze")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[0.8, 0.9, 1.0]);
        assert!((m - 0.9).abs() < 1e-12);
        assert!((s.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(mean_std(&[0.7]), (0.7, None));
    }

    #[test]
    fn aggregates_keep_first_seen_order() {
        let r = |m: &str, a| MethodResult {
            method: m.into(),
            seed: None,
            accuracy: a,
            per_class_accuracy: vec![],
        };
        let agg = aggregate(&[r("hard", 0.5), r("soft", 0.7), r("hard", 0.7)]);
        assert_eq!(agg[0].method, "hard");
        assert_eq!(agg[0].runs, 2);
        assert!((agg[0].mean - 0.6).abs() < 1e-12);
        assert_eq!(agg[1].std, None);
    }
}

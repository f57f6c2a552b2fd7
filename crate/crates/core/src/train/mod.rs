//! Bound-regularized training: a synthetic regression task and a small
//! dense classifier, with per-epoch logs of the generalization gap against
//! the regularizer and the bound.

pub mod autodiff;
pub mod data;
pub mod models;
pub mod optim;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::bounds::{bound_thm4, BoundConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::stream;

pub use data::{build_glyph_task, build_synthetic_task, synthetic_target, GlyphTask, SyntheticTask};
pub use optim::{Optimizer, OptimizerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SyntheticRegression,
    DenseClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub experiment: Experiment,
    pub sample_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub regularizer_weight: f64,
    pub data_seed: u64,
    pub init_seed: u64,
    /// Hidden widths of the classifier; ignored by the synthetic task.
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
}

fn default_widths() -> Vec<usize> {
    vec![64, 128, 128]
}

/// Every field optional; missing ones fall back to the experiment default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    experiment: Option<Experiment>,
    sample_size: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    optimizer: Option<OptimizerSpec>,
    regularizer_weight: Option<f64>,
    data_seed: Option<u64>,
    init_seed: Option<u64>,
    widths: Option<Vec<usize>>,
}

impl TrainConfig {
    /// SGD at 0.001, `λ = 0.1`, 200 epochs.
    pub fn synthetic() -> Self {
        Self {
            experiment: Experiment::SyntheticRegression,
            sample_size: 1000,
            epochs: 200,
            batch_size: 32,
            optimizer: OptimizerSpec::Sgd { lr: 0.001 },
            regularizer_weight: 0.1,
            data_seed: 0,
            init_seed: 0,
            widths: default_widths(),
        }
    }

    /// Adam at 0.001, `λ = 0.01`, widths 64/128/128 on 8x8 glyphs.
    pub fn dense_classifier() -> Self {
        Self {
            experiment: Experiment::DenseClassifier,
            epochs: 30,
            optimizer: OptimizerSpec::adam(0.001),
            regularizer_weight: 0.01,
            ..Self::synthetic()
        }
    }

    pub fn default_for(experiment: Experiment) -> Self {
        match experiment {
            Experiment::SyntheticRegression => Self::synthetic(),
            Experiment::DenseClassifier => Self::dense_classifier(),
        }
    }

    /// Reads the `train` section of a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let section = doc.get("train").ok_or_else(|| Error::Config("missing `train` section".into()))?;
        let s: TrainSection = serde_json::from_value(section.clone())?;
        let experiment = s.experiment.ok_or_else(|| Error::Config("train.experiment is required".into()))?;
        let d = Self::default_for(experiment);
        let cfg = Self {
            experiment,
            sample_size: s.sample_size.unwrap_or(d.sample_size),
            epochs: s.epochs.unwrap_or(d.epochs),
            batch_size: s.batch_size.unwrap_or(d.batch_size),
            optimizer: s.optimizer.unwrap_or(d.optimizer),
            regularizer_weight: s.regularizer_weight.unwrap_or(d.regularizer_weight),
            data_seed: s.data_seed.unwrap_or(d.data_seed),
            init_seed: s.init_seed.unwrap_or(d.init_seed),
            widths: s.widths.unwrap_or(d.widths),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_size == 0 || self.batch_size == 0 {
            return Err(Error::Config("sample_size and batch_size must be at least 1".into()));
        }
        if !(self.regularizer_weight >= 0.0) || !self.regularizer_weight.is_finite() {
            return Err(Error::Config(format!("regularizer_weight must be ≥ 0, got {}", self.regularizer_weight)));
        }
        let lr = match self.optimizer {
            OptimizerSpec::Sgd { lr } | OptimizerSpec::Adam { lr, .. } => lr,
        };
        if !(lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.experiment == Experiment::DenseClassifier && self.widths.len() < 2 {
            return Err(Error::Config("the classifier needs at least two hidden widths".into()));
        }
        Ok(())
    }

    /// Seeds for run `k` of a batch.
    pub fn for_run(&self, k: usize) -> Self {
        Self { data_seed: self.data_seed + k as u64, init_seed: self.init_seed + k as u64, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    pub regularizer: f64,
    /// The bound for the synthetic model; its `log10` for the classifier,
    /// whose bound overflows `f64`.
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn column(&self, f: impl Fn(&LogRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

fn check_finite(row: &LogRow) -> Result<()> {
    let vals = [row.train_loss, row.test_loss, row.regularizer, row.bound];
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { epoch: row.epoch })
    }
}

fn minibatches(n: usize, batch: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch).map(|c| c.to_vec()).collect()
}

/// Bound of the current model: the rank-general theorem with `α = 1` and
/// `S` training samples, or its `log10` when `log10` is set.
fn log_bound(spec: crate::Result<crate::network::NetworkSpec>, sample_size: usize, log10: bool) -> f64 {
    spec.and_then(|s| bound_thm4(&s, &BoundConfig::new(sample_size).with_mc_samples(4096)))
        .map(|r| if log10 { r.log10_value() } else { r.value })
        .unwrap_or_else(|e| {
            log::warn!("bound not available: {e}");
            f64::NAN
        })
}

fn synthetic_row(task: &SyntheticTask, params: &[Matrix], epoch: usize, s: usize) -> Result<LogRow> {
    let train = models::synthetic_graph(params, &task.train.x, &task.train.t, 0.0)?;
    let test = models::synthetic_graph(params, &task.test.x, &task.test.t, 0.0)?;
    let row = LogRow {
        epoch,
        train_loss: train.loss(),
        test_loss: test.loss(),
        gap: test.loss() - train.loss(),
        regularizer: train.reg(),
        bound: log_bound(models::synthetic_spec(params), s, false),
        test_accuracy: None,
    };
    check_finite(&row)?;
    Ok(row)
}

/// Trains the synthetic regression model, appending to `log` as it goes
/// so that a divergence leaves the completed epochs behind.
pub fn run_synthetic_into(cfg: &TrainConfig, log: &mut TrainLog) -> Result<Vec<Matrix>> {
    cfg.validate()?;
    if cfg.experiment != Experiment::SyntheticRegression {
        return Err(Error::Config("run_synthetic needs experiment = synthetic_regression".into()));
    }
    let task = data::build_synthetic_task_sized(cfg.data_seed, cfg.sample_size, cfg.sample_size);
    let mut params = models::synthetic_init(&mut stream(cfg.init_seed, "synthetic/init"));
    let mut opt = Optimizer::new(cfg.optimizer, &params);
    let mut order = stream(cfg.init_seed, "synthetic/batches");
    log.rows.push(synthetic_row(&task, &params, 0, cfg.sample_size)?);
    for epoch in 1..=cfg.epochs {
        for idx in minibatches(cfg.sample_size, cfg.batch_size, &mut order) {
            let x = models::select_rows(&task.train.x, &idx);
            let t: Vec<f64> = idx.iter().map(|&i| task.train.t[i]).collect();
            let g = models::synthetic_graph(&params, &x, &t, cfg.regularizer_weight)?;
            if !g.total().is_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt.step(&mut params, &synthetic_step_gradients(&g));
            check_params(&params, epoch)?;
        }
        log.rows.push(synthetic_row(&task, &params, epoch, cfg.sample_size)?);
    }
    if cfg.regularizer_weight > 0.0 {
        warn_if_regularizer_rises(log);
    }
    Ok(params)
}

fn check_params(params: &[Matrix], epoch: usize) -> Result<()> {
    if params.iter().all(|p| p.as_slice().iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(Error::Diverged { epoch })
    }
}

/// Soft check: `r` should not increase over the second half of training.
fn warn_if_regularizer_rises(log: &TrainLog) {
    let tail = &log.rows[log.rows.len() / 2..];
    let rises = tail.windows(2).filter(|w| w[1].regularizer > w[0].regularizer).count();
    if rises > 0 {
        log::warn!("regularizer rose in {rises} of the last {} epochs", tail.len().saturating_sub(1));
    }
}

fn synthetic_step_gradients(g: &models::Graph) -> Vec<Matrix> {
    let mut grads = g.gradients();
    for k in models::SYNTHETIC_FROZEN {
        grads[k] = Matrix::zeros(grads[k].rows(), grads[k].cols());
    }
    grads
}

pub fn run_synthetic(cfg: &TrainConfig) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    run_synthetic_into(cfg, &mut log)?;
    Ok(log)
}

fn classifier_row(task: &GlyphTask, params: &[Matrix], epoch: usize, s: usize) -> Result<LogRow> {
    let train = models::classifier_graph(params, &task.train.x, &task.train.labels, 0.0)?;
    let test = models::classifier_graph(params, &task.test.x, &task.test.labels, 0.0)?;
    let row = LogRow {
        epoch,
        train_loss: train.loss(),
        test_loss: test.loss(),
        gap: test.loss() - train.loss(),
        regularizer: train.reg(),
        bound: log_bound(models::classifier_spec(params, 0), s, true),
        test_accuracy: Some(models::accuracy(test.tape.value(test.output), &task.test.labels)),
    };
    check_finite(&row)?;
    Ok(row)
}

pub fn run_dense_classifier_into(cfg: &TrainConfig, log: &mut TrainLog) -> Result<Vec<Matrix>> {
    cfg.validate()?;
    if cfg.experiment != Experiment::DenseClassifier {
        return Err(Error::Config("run_dense_classifier needs experiment = dense_classifier".into()));
    }
    let task = build_glyph_task(cfg.data_seed, cfg.sample_size, cfg.sample_size);
    let input = data::GLYPH_SIDE * data::GLYPH_SIDE;
    let mut params =
        models::classifier_init(input, &cfg.widths, data::GLYPH_CLASSES, &mut stream(cfg.init_seed, "classifier/init"));
    let mut opt = Optimizer::new(cfg.optimizer, &params);
    let mut order = stream(cfg.init_seed, "classifier/batches");
    log.rows.push(classifier_row(&task, &params, 0, cfg.sample_size)?);
    for epoch in 1..=cfg.epochs {
        for idx in minibatches(cfg.sample_size, cfg.batch_size, &mut order) {
            let x = models::select_rows(&task.train.x, &idx);
            let y: Vec<usize> = idx.iter().map(|&i| task.train.labels[i]).collect();
            let g = models::classifier_graph(&params, &x, &y, cfg.regularizer_weight)?;
            if !g.total().is_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt.step(&mut params, &g.gradients());
            check_params(&params, epoch)?;
        }
        log.rows.push(classifier_row(&task, &params, epoch, cfg.sample_size)?);
    }
    Ok(params)
}

pub fn run_dense_classifier(cfg: &TrainConfig) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    run_dense_classifier_into(cfg, &mut log)?;
    Ok(log)
}

/// The regularized arm and the `λ = 0` control on identical seeds.
pub fn run_classifier_arms(cfg: &TrainConfig) -> Result<(TrainLog, TrainLog)> {
    let control = TrainConfig { regularizer_weight: 0.0, ..cfg.clone() };
    Ok((run_dense_classifier(cfg)?, run_dense_classifier(&control)?))
}

pub const CSV_HEADER: [&str; 6] = ["epoch", "train_loss", "test_loss", "gap", "regularizer", "bound"];

/// Writes `epoch,train_loss,test_loss,gap,regularizer,bound` with 17
/// significant digits.
pub fn emit_plot_data(log: &TrainLog, path: &Path) -> Result<()> {
    if log.rows.is_empty() {
        return Err(Error::Config("cannot write an empty training log".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in &log.rows {
        let vals = [r.train_loss, r.test_loss, r.gap, r.regularizer, r.bound].map(|v| format!("{v:.16e}"));
        w.write_record(std::iter::once(r.epoch.to_string()).chain(vals))?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`emit_plot_data`]; accuracies are not stored.
pub fn read_plot_data(path: &Path) -> Result<TrainLog> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("{}: unexpected CSV header", path.display())));
    }
    let mut log = TrainLog::default();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Config(format!("bad number `{}`", &rec[i])))
        };
        log.rows.push(LogRow {
            epoch: rec[0].parse().map_err(|_| Error::Config(format!("bad epoch `{}`", &rec[0])))?,
            train_loss: f(1)?,
            test_loss: f(2)?,
            gap: f(3)?,
            regularizer: f(4)?,
            bound: f(5)?,
            test_accuracy: None,
        });
    }
    Ok(log)
}

/// `stem_0.csv`, `stem_1.csv`, ... next to `base`.
pub fn run_paths(base: &Path, runs: usize) -> Vec<PathBuf> {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let dir = base.parent().unwrap_or(Path::new(""));
    (0..runs).map(|k| dir.join(format!("{stem}_{k}.csv"))).collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates where the one-sided differences disagree.
    pub kinks: usize,
}

/// Central differences against `grad` on `count` random coordinates.
///
/// The relative error is `|g - fd| / max(|g|, |fd|, floor)`; the floor
/// keeps near-zero entries from reporting roundoff as error. Where the
/// one-sided differences disagree the objective has a kink (a corner
/// switch in a sup over a box, or a tie in `‖·‖_∞`), and `g` only has to
/// lie between them.
pub fn grad_check<F>(params: &[Matrix], grad: &[Matrix], f: F, h: f64, count: usize, seed: u64) -> Result<GradCheck>
where
    F: Fn(&[Matrix]) -> Result<f64>,
{
    let floor = 1e-6;
    let sizes: Vec<usize> = params.iter().map(|p| p.as_slice().len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = stream(seed, "grad_check");
    let mut coords: Vec<usize> = (0..total).collect();
    coords.shuffle(&mut rng);
    coords.truncate(count.min(total));
    let mut worst = 0.0_f64;
    let mut kinks = 0;
    let mut work = params.to_vec();
    let f0 = f(&work)?;
    for flat in &coords {
        let (mut k, mut i) = (0, *flat);
        while i >= sizes[k] {
            i -= sizes[k];
            k += 1;
        }
        let x0 = work[k].as_slice()[i];
        work[k].as_mut_slice()[i] = x0 + h;
        let up = f(&work)?;
        work[k].as_mut_slice()[i] = x0 - h;
        let down = f(&work)?;
        work[k].as_mut_slice()[i] = x0;
        let (left, right) = ((f0 - down) / h, (up - f0) / h);
        let g = grad[k].as_slice()[i];
        let scale = |a: f64, b: f64| a.abs().max(b.abs()).max(floor);
        let err = if (left - right).abs() > 1e-2 * scale(left, right) {
            kinks += 1;
            let (lo, hi) = (left.min(right), left.max(right));
            (lo - g).max(g - hi).max(0.0) / scale(lo, hi)
        } else {
            let fd = (up - down) / (2.0 * h);
            (g - fd).abs() / scale(g, fd)
        };
        worst = worst.max(err);
    }
    Ok(GradCheck { max_rel_error: worst, checked: coords.len(), kinks })
}

/// Gradient check of the full training objective (loss plus `λ r`) on a
/// batch of `batch` training samples, after `steps` optimizer steps.
pub fn grad_check_experiment(cfg: &TrainConfig, steps: usize, batch: usize, h: f64, count: usize) -> Result<GradCheck> {
    let mut order = stream(cfg.init_seed, "grad_check/batches");
    match cfg.experiment {
        Experiment::SyntheticRegression => {
            let task = data::build_synthetic_task_sized(cfg.data_seed, cfg.sample_size, 1);
            let mut params = models::synthetic_init(&mut stream(cfg.init_seed, "synthetic/init"));
            let mut opt = Optimizer::new(cfg.optimizer, &params);
            let pick = |idx: &[usize]| {
                (models::select_rows(&task.train.x, idx), idx.iter().map(|&i| task.train.t[i]).collect::<Vec<_>>())
            };
            for _ in 0..steps {
                let idx = &minibatches(cfg.sample_size, cfg.batch_size, &mut order)[0];
                let (x, t) = pick(idx);
                let g = models::synthetic_graph(&params, &x, &t, cfg.regularizer_weight)?;
                opt.step(&mut params, &synthetic_step_gradients(&g));
            }
            let idx: Vec<usize> = (0..batch.min(cfg.sample_size)).collect();
            let (x, t) = pick(&idx);
            let g = models::synthetic_graph(&params, &x, &t, cfg.regularizer_weight)?;
            let f = |p: &[Matrix]| models::synthetic_graph(p, &x, &t, cfg.regularizer_weight).map(|g| g.total());
            grad_check(&params, &g.gradients(), f, h, count, cfg.init_seed)
        }
        Experiment::DenseClassifier => {
            let task = build_glyph_task(cfg.data_seed, cfg.sample_size, 1);
            let input = data::GLYPH_SIDE * data::GLYPH_SIDE;
            let mut params = models::classifier_init(
                input,
                &cfg.widths,
                data::GLYPH_CLASSES,
                &mut stream(cfg.init_seed, "classifier/init"),
            );
            let mut opt = Optimizer::new(cfg.optimizer, &params);
            let pick = |idx: &[usize]| {
                (models::select_rows(&task.train.x, idx), idx.iter().map(|&i| task.train.labels[i]).collect::<Vec<_>>())
            };
            for _ in 0..steps {
                let idx = &minibatches(cfg.sample_size, cfg.batch_size, &mut order)[0];
                let (x, y) = pick(idx);
                let g = models::classifier_graph(&params, &x, &y, cfg.regularizer_weight)?;
                opt.step(&mut params, &g.gradients());
            }
            let idx: Vec<usize> = (0..batch.min(cfg.sample_size)).collect();
            let (x, y) = pick(&idx);
            let g = models::classifier_graph(&params, &x, &y, cfg.regularizer_weight)?;
            let f = |p: &[Matrix]| models::classifier_graph(p, &x, &y, cfg.regularizer_weight).map(|g| g.total());
            grad_check(&params, &g.gradients(), f, h, count, cfg.init_seed)
        }
    }
}

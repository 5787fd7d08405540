//! Batch experiments: scripted data collection, model fitting, Viterbi
//! relabeling and closed-loop evaluation, with deterministic outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_regressor, PixelCount, PixelCountRegressor};
use crate::closed_loop::{run_pour, Estimator, LikelihoodModel, ModelBased, PourRun, PourSetup};
use crate::config::ExperimentConfig;
use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::filter::{fit_transition, viterbi, HistogramSpec, TransitionModel, VolumeHistogram};
use crate::observation::{likelihood_profile, ConfusionTable, ExpectedLabelCache, ViewGeometry};
use crate::pourlog::{read_observations, write_observations, PourLog};
use crate::simulator::{derive_seed, NoiseSpec, PourSimState, SourceModel};

const COLLECT_STREAM: u64 = 0x0C01_1EC7;
const EVAL_STREAM: u64 = 0xE7A1;
const SPLIT_STREAM: u64 = 0x5B117;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RELABEL_REPORT_FILE: &str = "relabel_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    ModelBased,
    PixelCount,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::ModelBased => "model-based",
            EstimatorKind::PixelCount => "pixel-count",
        })
    }
}

/// One target container with its camera, precomputed.
#[derive(Debug)]
pub struct Rig {
    pub name: String,
    pub view: Arc<ViewGeometry>,
    pub cache: Arc<ExpectedLabelCache>,
}

/// Everything needed to run pours, built once from a config.
#[derive(Debug)]
pub struct Lab {
    pub config: ExperimentConfig,
    pub spec: HistogramSpec,
    pub source: SourceModel,
    pub controller: ControllerConfig,
    pub noise: ConfusionTable,
    pub likelihood: ConfusionTable,
    pub rigs: Vec<Rig>,
}

impl Lab {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.spec()?;
        let rigs = (0..config.targets.len())
            .map(|i| {
                let mesh = config.target_mesh(i)?;
                let camera = config.targets[i].camera.camera()?;
                let view = Arc::new(ViewGeometry::new(&camera, &mesh));
                let cache = Arc::new(ExpectedLabelCache::build(view.clone(), spec.clone())?);
                Ok(Rig {
                    name: config.targets[i].name.clone(),
                    view,
                    cache,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            source: config.source_model()?,
            controller: config.controller.to_controller()?,
            noise: config.noise.table()?,
            likelihood: config.likelihood.table()?,
            rigs,
            config,
        })
    }

    pub fn rig(&self, name: &str) -> Result<&Rig> {
        self.rigs
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown target container '{name}'")))
    }

    pub fn bootstrap_transition(&self) -> TransitionModel {
        TransitionModel::bootstrap(self.spec.clone(), self.config.protocol.bootstrap_stay)
    }

    pub fn model_based(&self, rig: &Rig) -> ModelBased {
        ModelBased::new(rig.cache.clone(), self.likelihood)
    }

    /// Runs one planned pour to completion.
    pub fn run(
        &self,
        plan: &PourPlan,
        trans: &TransitionModel,
        likelihood: &dyn LikelihoodModel,
        record_frames: bool,
    ) -> Result<PourRun> {
        let rig = self.rig(&plan.container)?;
        let setup = PourSetup {
            source: &self.source,
            view: &rig.view,
            noise: NoiseSpec::new(self.noise, plan.seed)?,
            controller: self.controller,
            duration_s: self.config.protocol.duration_s,
            dt: self.config.protocol.dt(),
            record_frames,
        };
        let mut estimator = Estimator::new(trans.clone(), likelihood)?;
        run_pour(PourSimState::new(plan.source_ml), &mut estimator, &setup, plan.target_ml)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PourPlan {
    pub index: usize,
    pub container: String,
    pub source_ml: f64,
    pub target_ml: f64,
    /// Seed of this pour's label noise.
    pub seed: u64,
}

/// All (source, target) pairs with at least `headroom` ml left in the source.
pub fn feasible_pairs(sources: &[f64], targets: &[f64], headroom: f64) -> Vec<(f64, f64)> {
    targets
        .iter()
        .flat_map(|&t| sources.iter().filter(move |&&s| s - t >= headroom).map(move |&s| (s, t)))
        .collect()
}

fn plan_pours(
    config: &ExperimentConfig,
    targets: &[f64],
    stream: u64,
    containers: impl Iterator<Item = usize>,
) -> Result<Vec<PourPlan>> {
    let p = &config.protocol;
    let pairs = feasible_pairs(&p.source_volumes_ml, targets, p.min_headroom_ml);
    let mut feasible_targets: Vec<f64> = pairs.iter().map(|&(_, t)| t).collect();
    feasible_targets.dedup();
    if feasible_targets.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no source volume in {:?} leaves {} ml after pouring any target in {:?}",
            p.source_volumes_ml, p.min_headroom_ml, targets
        )));
    }
    let base = derive_seed(config.seed, stream);
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    Ok(containers
        .enumerate()
        .map(|(index, c)| {
            let target = *feasible_targets.choose(&mut rng).expect("non-empty");
            let sources: Vec<f64> = pairs.iter().filter(|&&(_, t)| t == target).map(|&(s, _)| s).collect();
            let source = *sources.choose(&mut rng).expect("target is feasible");
            PourPlan {
                index,
                container: config.targets[c].name.clone(),
                source_ml: source,
                target_ml: target,
                seed: derive_seed(base, index as u64),
            }
        })
        .collect())
}

/// Data-collection pours, spread evenly over the target containers.
pub fn collection_plan(config: &ExperimentConfig) -> Result<Vec<PourPlan>> {
    let n = config.targets.len();
    let p = &config.protocol;
    plan_pours(config, &p.collect_targets_ml, COLLECT_STREAM, (0..p.collect_pours).map(|k| k % n))
}

/// Evaluation pours: a block of pours per container.
pub fn evaluation_plan(config: &ExperimentConfig) -> Result<Vec<PourPlan>> {
    let n = config.targets.len();
    let per = config.protocol.eval_pours_per_container;
    plan_pours(config, &config.protocol.eval_targets_ml, EVAL_STREAM, (0..n * per).map(|k| k / per))
}

/// Indices of the training pours: a seeded shuffle, the first
/// `round(fraction * n)` of which train.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM)));
    let n_train = (fraction * n as f64).round() as usize;
    let (mut train, mut eval) = (idx[..n_train].to_vec(), idx[n_train..].to_vec());
    train.sort_unstable();
    eval.sort_unstable();
    (train, eval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    #[serde(flatten)]
    pub plan: PourPlan,
    pub split: Split,
    /// Relative to the dataset directory.
    pub csv: PathBuf,
    pub observations: PathBuf,
    pub final_ml: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub ticks: usize,
    pub dt_s: f64,
    pub source_mesh: String,
    pub target_meshes: BTreeMap<String, String>,
    /// Number of pours per container.
    pub containers: BTreeMap<String, usize>,
    pub train: usize,
    pub eval: usize,
    pub config: ExperimentConfig,
    pub pours: Vec<DatasetEntry>,
}

impl Manifest {
    pub fn load(dataset: impl AsRef<Path>) -> Result<Self> {
        let path = dataset.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.pours.iter().filter(move |e| e.split == split)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {jobs} worker threads: {e}")))
}

/// Runs the collection protocol with the model-based estimator and the
/// transition prior, writing one CSV and one observation file per pour.
pub fn collect(lab: &Lab, dataset: &Path, jobs: usize) -> Result<Manifest> {
    let plans = collection_plan(&lab.config)?;
    let (train, _) = split_indices(plans.len(), lab.config.protocol.train_fraction, lab.config.seed);
    let trans = lab.bootstrap_transition();
    for dir in ["train", "eval"] {
        create_dir(&dataset.join(dir))?;
    }

    let entries = thread_pool(jobs)?.install(|| {
        plans
            .par_iter()
            .map(|plan| {
                let rig = lab.rig(&plan.container)?;
                let run = lab.run(plan, &trans, &lab.model_based(rig), true)?;
                let split = if train.binary_search(&plan.index).is_ok() {
                    Split::Train
                } else {
                    Split::Eval
                };
                let sub = if split == Split::Train { "train" } else { "eval" };
                let csv = PathBuf::from(format!("{sub}/pour_{:04}.csv", plan.index));
                let observations = csv.with_extension("obs");
                run.log.write_csv(dataset.join(&csv))?;
                write_observations(dataset.join(&observations), rig.view.mask(), &run.frames)?;
                Ok(DatasetEntry {
                    plan: plan.clone(),
                    split,
                    csv,
                    observations,
                    final_ml: run.final_ml(),
                    aborted: run.log.aborted.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let cfg = &lab.config;
    let mut containers: BTreeMap<String, usize> = cfg.targets.iter().map(|t| (t.name.clone(), 0)).collect();
    for e in &entries {
        *containers.entry(e.plan.container.clone()).or_default() += 1;
    }
    let manifest = Manifest {
        seed: cfg.seed,
        ticks: cfg.protocol.ticks(),
        dt_s: cfg.protocol.dt(),
        source_mesh: lab.source.mesh().name().to_string(),
        target_meshes: cfg
            .targets
            .iter()
            .map(|t| (t.name.clone(), t.mesh.display().to_string()))
            .collect(),
        containers,
        train: train.len(),
        eval: entries.len() - train.len(),
        config: cfg.clone(),
        pours: entries,
    };
    write_json(&dataset.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Pour logs of one split, in manifest order.
pub fn load_logs(dataset: &Path, manifest: &Manifest, split: Split) -> Result<Vec<(DatasetEntry, PourLog)>> {
    manifest
        .entries(split)
        .map(|e| Ok((e.clone(), PourLog::read_csv(dataset.join(&e.csv))?)))
        .collect()
}

/// Fits the transition matrix on the training split.
pub fn fit_transition_on(dataset: &Path, spec: &HistogramSpec, smoothing: f64) -> Result<TransitionModel> {
    let manifest = Manifest::load(dataset)?;
    let logs: Vec<PourLog> = load_logs(dataset, &manifest, Split::Train)?
        .into_iter()
        .map(|(_, l)| l)
        .collect();
    fit_transition(&logs, spec, smoothing)
}

/// Fits one pixel-count regressor per container on the training split.
pub fn fit_regressors_on(dataset: &Path) -> Result<BTreeMap<String, PixelCountRegressor>> {
    let manifest = Manifest::load(dataset)?;
    let mut by_container: BTreeMap<String, Vec<PourLog>> = BTreeMap::new();
    for (e, log) in load_logs(dataset, &manifest, Split::Train)? {
        by_container.entry(e.plan.container).or_default().push(log);
    }
    if by_container.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if let Some(c) = manifest.containers.keys().find(|c| !by_container.contains_key(*c)) {
        return Err(Error::InsufficientData(format!("no training pours for container {c}")));
    }
    by_container
        .into_iter()
        .map(|(name, logs)| Ok((name, fit_regressor(&logs)?)))
        .collect()
}

pub fn regressor_path(dir: &Path, container: &str) -> PathBuf {
    dir.join(format!("regressor_{container}.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub csv: PathBuf,
    pub container: String,
    pub ticks: usize,
    /// RMSE between relabeled and simulator volume, ml.
    pub rmse_ml: f64,
    /// Ticks whose relabeled bin equals the bin of the simulator volume.
    pub exact_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelReport {
    pub sequences: Vec<SequenceReport>,
    pub mean_rmse_ml: f64,
    pub max_rmse_ml: f64,
    pub exact_fraction: f64,
}

/// Viterbi-decodes every sequence of the dataset from its stored
/// observations and writes the path (bin centers) as the `gt_ml` column.
pub fn relabel(lab: &Lab, dataset: &Path, trans: &TransitionModel, jobs: usize) -> Result<RelabelReport> {
    let manifest = Manifest::load(dataset)?;
    if manifest.pours.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let spec = &lab.spec;
    let init = VolumeHistogram::point_mass(spec.clone(), 0);
    let sequences = thread_pool(jobs)?.install(|| {
        manifest
            .pours
            .par_iter()
            .map(|e| {
                let rig = lab.rig(&e.plan.container)?;
                let csv = dataset.join(&e.csv);
                let mut log = PourLog::read_csv(&csv)?;
                let frames = read_observations(dataset.join(&e.observations), rig.view.mask().clone())?;
                if frames.len() != log.len() {
                    return Err(Error::format(&csv, format!("{} rows but {} frames", log.len(), frames.len())));
                }
                let profiles = frames
                    .iter()
                    .map(|f| likelihood_profile(f, &rig.cache, &lab.likelihood))
                    .collect::<Result<Vec<_>>>()?;
                let path = viterbi(&profiles, trans, &init)?;
                let mut sse = 0.0;
                let mut exact_bins = 0;
                for (r, &bin) in log.records.iter_mut().zip(&path) {
                    let gt = spec.center(bin);
                    sse += (gt - r.tgt_ml).powi(2);
                    exact_bins += usize::from(bin == spec.bin_of(r.tgt_ml));
                    r.gt_ml = Some(gt);
                }
                log.write_csv(&csv)?;
                Ok(SequenceReport {
                    csv: e.csv.clone(),
                    container: e.plan.container.clone(),
                    ticks: path.len(),
                    rmse_ml: (sse / path.len().max(1) as f64).sqrt(),
                    exact_bins,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = sequences.len() as f64;
    let ticks: usize = sequences.iter().map(|s| s.ticks).sum();
    let report = RelabelReport {
        mean_rmse_ml: sequences.iter().map(|s| s.rmse_ml).sum::<f64>() / n,
        max_rmse_ml: sequences.iter().map(|s| s.rmse_ml).fold(0.0, f64::max),
        exact_fraction: sequences.iter().map(|s| s.exact_bins).sum::<usize>() as f64 / ticks.max(1) as f64,
        sequences,
    };
    write_json(&dataset.join(RELABEL_REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub target_ml: f64,
    pub final_ml: f64,
    pub abs_err_ml: f64,
    pub container: String,
    pub estimator: EstimatorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub estimator: EstimatorKind,
    pub pours: usize,
    pub mean_abs_err_ml: f64,
    pub max_abs_err_ml: f64,
    pub within_50_ml: usize,
    pub within_75_ml: usize,
    pub aborted: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub summary: EvalSummary,
    pub logs: Vec<PourLog>,
}

fn round_tenth(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Runs the evaluation protocol with the chosen estimator. `regressors` is
/// required for the pixel-count estimator and keyed by container.
pub fn evaluate(
    lab: &Lab,
    trans: &TransitionModel,
    estimator: EstimatorKind,
    regressors: Option<&BTreeMap<String, PixelCountRegressor>>,
    jobs: usize,
) -> Result<Evaluation> {
    let plans = evaluation_plan(&lab.config)?;
    let likelihoods: Vec<Box<dyn LikelihoodModel>> = lab
        .rigs
        .iter()
        .map(|rig| -> Result<Box<dyn LikelihoodModel>> {
            Ok(match estimator {
                EstimatorKind::ModelBased => Box::new(lab.model_based(rig)),
                EstimatorKind::PixelCount => {
                    let reg = regressors
                        .and_then(|m| m.get(&rig.name))
                        .ok_or_else(|| Error::InsufficientData(format!("no regressor for container '{}'", rig.name)))?;
                    Box::new(PixelCount::new(reg.clone(), lab.spec.clone()))
                }
            })
        })
        .collect::<Result<_>>()?;

    let runs = thread_pool(jobs)?.install(|| {
        plans
            .par_iter()
            .map(|plan| {
                let k = lab.rigs.iter().position(|r| r.name == plan.container).expect("planned from config");
                lab.run(plan, trans, likelihoods[k].as_ref(), false)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let rows: Vec<EvalRow> = plans
        .iter()
        .zip(&runs)
        .map(|(p, r)| EvalRow {
            target_ml: p.target_ml,
            final_ml: r.final_ml(),
            abs_err_ml: (r.final_ml() - p.target_ml).abs(),
            container: p.container.clone(),
            estimator,
        })
        .collect();
    let n = rows.len();
    let errs = rows.iter().map(|r| r.abs_err_ml);
    let summary = EvalSummary {
        estimator,
        pours: n,
        mean_abs_err_ml: round_tenth(errs.clone().sum::<f64>() / n.max(1) as f64),
        max_abs_err_ml: round_tenth(errs.clone().fold(0.0, f64::max)),
        within_50_ml: errs.clone().filter(|&e| e <= 50.0).count(),
        within_75_ml: errs.filter(|&e| e <= 75.0).count(),
        aborted: runs.iter().filter(|r| r.log.aborted.is_some()).count(),
    };
    Ok(Evaluation {
        rows,
        summary,
        logs: runs.into_iter().map(|r| r.log).collect(),
    })
}

/// Writes `results.csv`, `summary.json` and per-pour logs under `dir`.
pub fn write_evaluation(eval: &Evaluation, dir: &Path) -> Result<()> {
    let logs = dir.join("logs");
    create_dir(&logs)?;
    let path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::format(&path, e.to_string()))?;
    for row in &eval.rows {
        w.serialize(row).map_err(|e| Error::format(&path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join("summary.json"), &eval.summary)?;
    for (i, log) in eval.logs.iter().enumerate() {
        log.write_csv(logs.join(format!("pour_{i:04}.csv")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")).unwrap()
    }

    #[test]
    fn plans_respect_headroom_and_counts() {
        let cfg = config();
        let eval = evaluation_plan(&cfg).unwrap();
        assert_eq!(eval.len(), 30);
        for name in ["cylinder", "tapered", "box"] {
            assert_eq!(eval.iter().filter(|p| p.container == name).count(), 10);
        }
        let collect = collection_plan(&cfg).unwrap();
        assert_eq!(collect.len(), 60);
        for p in eval.iter().chain(&collect) {
            assert!(p.source_ml - p.target_ml >= 100.0);
            assert!([300.0, 350.0, 400.0].contains(&p.source_ml));
            assert!([100.0, 150.0, 200.0, 250.0, 300.0].contains(&p.target_ml));
        }
        assert_eq!(evaluation_plan(&cfg).unwrap(), eval);
    }

    #[test]
    fn infeasible_protocol_is_a_config_error() {
        let mut cfg = config();
        cfg.protocol.min_headroom_ml = 500.0;
        assert!(matches!(evaluation_plan(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn split_rule() {
        let (train, eval) = split_indices(4, 0.75, 1);
        assert_eq!((train.len(), eval.len()), (3, 1));
        let (train, eval) = split_indices(60, 0.75, 9);
        assert_eq!((train.len(), eval.len()), (45, 15));
        let mut all: Vec<usize> = train.iter().chain(&eval).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
        assert_eq!(split_indices(60, 0.75, 9), (train, eval));
    }

    #[test]
    fn feasible_pairs_filter() {
        let pairs = feasible_pairs(&[300.0, 350.0, 400.0], &[250.0, 300.0], 100.0);
        assert_eq!(pairs, vec![(350.0, 250.0), (400.0, 250.0), (400.0, 300.0)]);
    }
}

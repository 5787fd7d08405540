//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.
//!
//! `cargo test -p pourkit-validation --test acceptance`

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pourkit::baseline::{spearman, PixelCountRegressor};
use pourkit::config::ExperimentConfig;
use pourkit::controller::DerivativeBasis;
use pourkit::experiment::{self, EstimatorKind, Evaluation, Lab, Manifest, Split};
use pourkit::filter::{forward, viterbi, HistogramSpec, TransitionModel, VolumeHistogram};
use pourkit::geometry::{fill_height, load_obj, mesh_volume, shapes, volume_below_plane, TriMesh, M3_PER_ML};
use pourkit::observation::{likelihood_profile, ConfusionTable, ExpectedLabelCache, ViewGeometry};
use pourkit::pourlog::{read_observations, PourLog};
use pourkit::simulator::{render_observation, NoiseSpec, PourSimState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn default_config() -> ExperimentConfig {
    ExperimentConfig::load(configs().join("default.toml")).expect("bundled config")
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

// ---------------------------------------------------------------- 1

fn geometry_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst_exact: f64 = 0.0;
    for (mesh, want) in [
        (shapes::cube(1.0), 1.0),
        (shapes::cube(0.1), 1e-3),
        (shapes::tetrahedron(), 1.0 / 6.0),
        (shapes::prism(), 0.5),
    ] {
        worst_exact = worst_exact.max(rel_err(mesh_volume(&mesh), want));
    }

    let bundled_cylinder = load_obj(configs().join("meshes/cylinder.obj")).unwrap();
    let (r, h) = (0.04, 0.12);
    let sphere = shapes::icosphere(0.05, 4);
    let smooth = [
        ("cylinder", rel_err(mesh_volume(&bundled_cylinder), PI * r * r * h)),
        ("sphere", rel_err(mesh_volume(&sphere), 4.0 / 3.0 * PI * 0.05f64.powi(3))),
    ];
    let worst_smooth = smooth.iter().map(|s| s.1).fold(0.0, f64::max);

    let mut fixtures: Vec<TriMesh> = vec![shapes::cube(0.1), shapes::tetrahedron(), shapes::prism(), sphere];
    for name in ["cylinder", "tapered", "box", "source_cup"] {
        fixtures.push(load_obj(configs().join(format!("meshes/{name}.obj"))).unwrap());
    }
    let mut worst_trip_ml: f64 = 0.0;
    for mesh in &fixtures {
        let cap = mesh.volume();
        for k in 0..50 {
            let v = cap * (k as f64 + 0.5) / 50.0;
            let h = fill_height(mesh, v, pourkit::geometry::DEFAULT_FILL_TOL).unwrap();
            worst_trip_ml = worst_trip_ml.max((volume_below_plane(mesh, h) - v).abs() / M3_PER_ML);
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst_exact <= 1e-12 && worst_smooth <= 0.01 && worst_trip_ml <= 0.1 && elapsed < Duration::from_secs(5),
        format!(
            "analytic rel err {worst_exact:.1e} (<= 1e-12), cylinder {:.3}% sphere {:.3}% (<= 1%), \
             fill round trip {worst_trip_ml:.2e} ml (<= 0.1) over {} meshes, {:.2} s (< 5)",
            smooth[0].1 * 100.0,
            smooth[1].1 * 100.0,
            fixtures.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn random_instance(rng: &mut ChaCha8Rng) -> (VolumeHistogram, TransitionModel, Vec<Vec<f64>>) {
    let n = rng.random_range(1..=5);
    let steps = rng.random_range(1..=6);
    let spec = HistogramSpec::new(n, 100.0).unwrap();
    let init = VolumeHistogram::normalized(spec.clone(), (0..n).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap();
    let rows = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let trans = TransitionModel::new(spec, rows).unwrap();
    let logliks = (0..steps).map(|_| (0..n).map(|_| rng.random_range(-6.0..0.0)).collect()).collect();
    (init, trans, logliks)
}

/// Every state path of length `steps` over `n` bins.
fn all_paths(n: usize, steps: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![vec![]];
    for _ in 0..steps {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |b| {
                    let mut q = p.clone();
                    q.push(b);
                    q
                })
            })
            .collect();
    }
    paths
}

fn joint(path: &[usize], init: &VolumeHistogram, trans: &TransitionModel, ll: &[Vec<f64>]) -> f64 {
    let mut p = init.masses()[path[0]] * ll[0][path[0]].exp();
    for t in 1..path.len() {
        p *= trans.rows()[path[t - 1]][path[t]] * ll[t][path[t]].exp();
    }
    p
}

fn filter_vs_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF11);
    let mut worst: f64 = 0.0;
    let mut viterbi_mismatch = 0;
    for _ in 0..200 {
        let (init, trans, ll) = random_instance(&mut rng);
        let n = init.len();
        let marginals = forward(&init, &trans, &ll).unwrap();
        for t in 0..ll.len() {
            let mut m = vec![0.0; n];
            for p in all_paths(n, t + 1) {
                m[p[t]] += joint(&p, &init, &trans, &ll[..=t]);
            }
            let z: f64 = m.iter().sum();
            for (got, want) in marginals[t].masses().iter().zip(&m) {
                worst = worst.max(rel_err(*got, want / z));
            }
        }
        let best = all_paths(n, ll.len())
            .into_iter()
            .map(|p| (joint(&p, &init, &trans, &ll), p))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1;
        if viterbi(&ll, &trans, &init).unwrap() != best {
            viterbi_mismatch += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst <= 1e-9 && viterbi_mismatch == 0 && elapsed < Duration::from_secs(10),
        format!(
            "200 instances: forward rel err {worst:.1e} (<= 1e-9), viterbi mismatches {viterbi_mismatch}, {:.2} s (< 10)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn cylinder_view(config: &ExperimentConfig) -> Arc<ViewGeometry> {
    let i = config.targets.iter().position(|t| t.name == "cylinder").expect("cylinder target");
    let camera = config.targets[i].camera.camera().unwrap();
    Arc::new(ViewGeometry::new(&camera, &config.target_mesh(i).unwrap()))
}

fn observation_self_consistency() -> Outcome {
    let start = Instant::now();
    let config = default_config();
    let spec = HistogramSpec::new(100, 400.0).unwrap();
    let view = cylinder_view(&config);
    let cache = ExpectedLabelCache::build(view.clone(), spec.clone()).unwrap();
    let table = config.likelihood.table().unwrap();
    let mut wrong = Vec::new();
    for bin in 0..spec.bins() {
        let mut state = PourSimState::new(0.0);
        state.target_ml = spec.center(bin);
        let obs = render_observation(&state, &view, &NoiseSpec::noiseless(0)).unwrap();
        let ll = likelihood_profile(&obs, &cache, &table).unwrap();
        let argmax = (0..ll.len()).fold(0, |b, i| if ll[i] > ll[b] { i } else { b });
        if argmax != bin {
            wrong.push((bin, argmax));
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        wrong.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} of 100 bins recovered ({} inner pixels), {:.2} s (< 60){}",
            100 - wrong.len(),
            view.inner_count(),
            elapsed.as_secs_f64(),
            if wrong.is_empty() { String::new() } else { format!(", wrong (bin, argmax): {wrong:?}") }
        ),
    )
}

// ---------------------------------------------------------------- 4

fn noise_calibration() -> Outcome {
    let config = default_config();
    let view = cylinder_view(&config);
    let table = ConfusionTable::thermal();
    let noise = NoiseSpec::new(table, 0x5EED).unwrap();
    let mut state = PourSimState::new(0.0);
    state.target_ml = 150.0;
    let surface = view.surface_height(state.target_ml).unwrap();
    let expected: Vec<(usize, bool)> = view.inner_labels_at_height(surface).collect();

    // counts[expected][observed]
    let mut counts = [[0u64; 2]; 2];
    while counts[0].iter().sum::<u64>() < 100_000 || counts[1].iter().sum::<u64>() < 100_000 {
        let obs = render_observation(&state, &view, &noise).unwrap();
        for &(i, e) in &expected {
            counts[usize::from(e)][usize::from(obs.labels()[i])] += 1;
        }
        state.tick += 1;
    }
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for e in [true, false] {
        let n = counts[usize::from(e)].iter().sum::<u64>() as f64;
        for o in [true, false] {
            let got = counts[usize::from(e)][usize::from(o)] as f64 / n;
            worst = worst.max((got - table.prob(o, e)).abs());
            cells.push(format!("{got:.4}"));
        }
    }
    let draws: u64 = counts.iter().flatten().sum();
    Outcome::new(
        worst <= 0.01,
        format!(
            "{draws} draws, P(obs|liquid) {}/{} P(obs|not) {}/{} vs 0.90/0.10/0.20/0.80, max dev {worst:.4} (<= 0.01)",
            cells[0], cells[1], cells[2], cells[3]
        ),
    )
}

// ---------------------------------------------------------------- 5-8

struct Pipeline {
    _dir: tempfile::TempDir,
    root: PathBuf,
    dataset: PathBuf,
    config: ExperimentConfig,
    lab: Lab,
    trans: TransitionModel,
    eval: Evaluation,
    protocol_time: Duration,
}

impl Pipeline {
    fn run() -> Self {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = default_config();
        let lab = Lab::new(config.clone()).unwrap();
        let dataset = root.join("dataset");
        experiment::collect(&lab, &dataset, 0).unwrap();
        let trans = experiment::fit_transition_on(&dataset, &lab.spec, config.protocol.transition_smoothing).unwrap();
        let eval = experiment::evaluate(&lab, &trans, EstimatorKind::ModelBased, None, 0).unwrap();
        experiment::write_evaluation(&eval, &root.join("eval_a")).unwrap();
        Self {
            _dir: dir,
            root,
            dataset,
            config,
            lab,
            trans,
            eval,
            protocol_time: start.elapsed(),
        }
    }

    fn variant(&self, edit: impl FnOnce(&mut ExperimentConfig)) -> Lab {
        let mut config = self.config.clone();
        edit(&mut config);
        Lab::new(config).unwrap()
    }
}

fn noise_free(config: &mut ExperimentConfig) {
    config.noise.liquid_given_liquid = 1.0;
    config.noise.liquid_given_not = 0.0;
}

fn closed_loop_accuracy(p: &Pipeline) -> Outcome {
    let s = &p.eval.summary;
    let quiet = p.variant(noise_free);
    let control = experiment::evaluate(&quiet, &p.trans, EstimatorKind::ModelBased, None, 0).unwrap();
    let c = &control.summary;

    let per_second = p.variant(|c| c.controller.derivative = DerivativeBasis::PerSecond);
    let info = experiment::evaluate(&per_second, &p.trans, EstimatorKind::ModelBased, None, 0).unwrap();

    let within_75 = s.within_75_ml as f64 / s.pours as f64;
    Outcome::new(
        s.pours == 30
            && s.mean_abs_err_ml <= 50.0
            && within_75 >= 0.8
            && c.mean_abs_err_ml <= 20.0
            && p.protocol_time < Duration::from_secs(300),
        format!(
            "table noise: {} pours mean {:.1} ml (<= 50) max {:.1} ml, {}/{} within 75 ml (>= 80%), {} within 50 ml; \
             noise-free mean {:.1} ml (<= 20); protocol {:.1} s (< 300)\n    \
             info: per-second derivative gains give mean {:.1} ml, max {:.1} ml",
            s.pours,
            s.mean_abs_err_ml,
            s.max_abs_err_ml,
            s.within_75_ml,
            s.pours,
            s.within_50_ml,
            c.mean_abs_err_ml,
            p.protocol_time.as_secs_f64(),
            info.summary.mean_abs_err_ml,
            info.summary.max_abs_err_ml
        ),
    )
}

fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Counts noise-free frames for which a neighboring bin's template is at
/// least as close as the frame's own bin's template. No per-frame likelihood
/// can favor the truth bin on those. Returns (frames, ambiguous, exact among
/// the rest).
fn ambiguity(lab: &Lab, dataset: &Path) -> (usize, usize, usize) {
    let manifest = Manifest::load(dataset).unwrap();
    let (mut frames, mut ambiguous, mut exact_rest) = (0, 0, 0);
    for e in &manifest.pours {
        let rig = lab.rig(&e.plan.container).unwrap();
        let templates: Vec<_> = (0..lab.spec.bins()).map(|b| rig.cache.expected_map(b)).collect();
        let log = PourLog::read_csv(dataset.join(&e.csv)).unwrap();
        let obs = read_observations(dataset.join(&e.observations), rig.view.mask().clone()).unwrap();
        for (r, o) in log.records.iter().zip(&obs) {
            let bin = lab.spec.bin_of(r.tgt_ml);
            let own = hamming(o.labels(), templates[bin].labels());
            let neighbors = [bin.checked_sub(1), Some(bin + 1).filter(|&b| b < templates.len())];
            frames += 1;
            if neighbors.iter().flatten().any(|&b| hamming(o.labels(), templates[b].labels()) <= own) {
                ambiguous += 1;
            } else {
                exact_rest += usize::from(lab.spec.bin_of(r.gt_ml.unwrap()) == bin);
            }
        }
    }
    (frames, ambiguous, exact_rest)
}

fn relabeling(p: &Pipeline) -> Outcome {
    let noisy = experiment::relabel(&p.lab, &p.dataset, &p.trans, 0).unwrap();

    let quiet = p.variant(noise_free);
    let clean = p.root.join("dataset_noise_free");
    experiment::collect(&quiet, &clean, 0).unwrap();
    let trans = experiment::fit_transition_on(&clean, &quiet.spec, p.config.protocol.transition_smoothing).unwrap();
    let exact = experiment::relabel(&quiet, &clean, &trans, 0).unwrap();
    let (frames, ambiguous, exact_rest) = ambiguity(&quiet, &clean);

    let bound = 2.0 * p.lab.spec.width();
    Outcome::new(
        exact.exact_fraction == 1.0 && noisy.max_rmse_ml <= bound,
        format!(
            "noise-free exact bin recovery {:.4} (== 1); table noise rmse mean {:.2} ml max {:.2} ml (<= {bound})\n    \
             noise-free frames where a neighboring bin's template is at least as close as their own: \
             {ambiguous}/{frames} ({:.1}%); exact recovery on the remaining frames {:.4}",
            exact.exact_fraction,
            noisy.mean_rmse_ml,
            noisy.max_rmse_ml,
            100.0 * ambiguous as f64 / frames as f64,
            exact_rest as f64 / (frames - ambiguous).max(1) as f64
        ),
    )
}

fn determinism(p: &Pipeline) -> Outcome {
    let lab = Lab::new(default_config()).unwrap();
    let again = experiment::evaluate(&lab, &p.trans, EstimatorKind::ModelBased, None, 1).unwrap();
    experiment::write_evaluation(&again, &p.root.join("eval_b")).unwrap();
    let a = std::fs::read(p.root.join("eval_a/results.csv")).unwrap();
    let b = std::fs::read(p.root.join("eval_b/results.csv")).unwrap();
    Outcome::new(
        a == b,
        format!("results.csv {} bytes, identical across runs (all cores vs one thread): {}", a.len(), a == b),
    )
}

fn substitutability(p: &Pipeline) -> Outcome {
    let regs: BTreeMap<String, PixelCountRegressor> = experiment::fit_regressors_on(&p.dataset).unwrap();
    let eval = experiment::evaluate(&p.lab, &p.trans, EstimatorKind::PixelCount, Some(&regs), 0).unwrap();
    let s = &eval.summary;

    let manifest = Manifest::load(&p.dataset).unwrap();
    let (mut raw, mut truth) = (Vec::new(), Vec::new());
    for (e, log) in experiment::load_logs(&p.dataset, &manifest, Split::Eval).unwrap() {
        let reg = &regs[&e.plan.container];
        for r in &log.records {
            raw.push(reg.predict(r.liq_px as f64));
            truth.push(r.tgt_ml);
        }
    }
    let rho = spearman(&raw, &truth).unwrap_or(f64::NAN);
    Outcome::new(
        s.pours == 30 && rho >= 0.9,
        format!(
            "pixel-count ran {} pours: mean {:.1} ml max {:.1} ml, {} within 50 ml; \
             spearman of raw estimates vs truth on {} held-out frames {rho:.4} (>= 0.9)",
            s.pours,
            s.mean_abs_err_ml,
            s.max_abs_err_ml,
            s.within_50_ml,
            raw.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, o: Outcome| {
        println!("criterion {n} {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    report(1, "geometry exactness", geometry_exactness());
    report(2, "filter vs oracle", filter_vs_oracle());
    report(3, "observation self-consistency", observation_self_consistency());
    report(4, "noise calibration", noise_calibration());
    let p = Pipeline::run();
    report(5, "closed-loop accuracy", closed_loop_accuracy(&p));
    report(6, "ground-truth relabeling", relabeling(&p));
    report(7, "determinism", determinism(&p));
    report(8, "estimator substitutability", substitutability(&p));
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

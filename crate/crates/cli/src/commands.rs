//! Command bodies, independent of argument parsing.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use gp4pc::pipeline::{PermutationMode, SolverPath, SolverVariant};
use gp4pc::robust::{self, HypothesisKind, RansacConfig, RansacError};
use gp4pc::synthbench::{self, SceneRecipe, StabilityRow};
use serde::Serialize;

use crate::format::{self, Diagnostics, ResultFile, SceneFile, TransformRecord, RESULT_VERSION};

/// Exit status contract: 0 success, 1 input error, 2 estimation failure.
#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Estimation(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "input error: {e:#}"),
            CliError::Estimation(e) => write!(f, "estimation failed: {e}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Input(e)
    }
}

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub scene: PathBuf,
    pub out: Option<PathBuf>,
    pub config: RansacConfig,
}

/// `<scene stem>.result.json` beside the scene file.
pub fn default_result_path(scene: &Path) -> PathBuf {
    let stem = scene.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scene".into());
    scene.with_file_name(format!("{stem}.result.json"))
}

fn variant_name(v: &SolverVariant) -> &'static str {
    match v.alignment {
        gp4pc::pipeline::AlignmentKind::PlusS => "plus-s",
        gp4pc::pipeline::AlignmentKind::PlusA => "plus-a",
    }
}

fn permutation_count(v: &SolverVariant) -> u8 {
    match v.permutations {
        PermutationMode::OneP => 1,
        PermutationMode::SixP => 6,
    }
}

pub fn solve(args: &SolveArgs) -> Result<PathBuf, CliError> {
    let doc: SceneFile = format::read_json(&args.scene)?;
    let scene = doc.to_scene()?;
    let start = Instant::now();
    let r = match robust::estimate(&scene.correspondences, &scene.rig, &args.config) {
        Ok(r) => r,
        Err(RansacError::EstimationFailure) => {
            return Err(CliError::Estimation(RansacError::EstimationFailure.to_string()))
        }
        Err(e) => return Err(CliError::Input(e.into())),
    };
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let residuals_px = scene
        .correspondences
        .iter()
        .map(|c| Some(robust::reprojection_error(&r.transform, c, &scene.rig)).filter(|e| e.is_finite()))
        .collect();
    let result = ResultFile {
        version: RESULT_VERSION,
        transform: TransformRecord::from_similarity(&r.transform),
        inlier_indices: r.inlier_indices.clone(),
        residuals_px,
        diagnostics: Diagnostics {
            variant: variant_name(&args.config.variant).into(),
            permutations: permutation_count(&args.config.variant),
            iterations: r.iterations_run,
            threshold_px: args.config.inlier_threshold_px,
            seed: args.config.seed,
            best_iteration: r.best_iteration,
            best_hypothesis_kind: match r.best_hypothesis_kind {
                HypothesisKind::Similarity => "similarity",
                HypothesisKind::Affine => "affine",
            }
            .into(),
            best_path: match r.best_hypothesis.path {
                SolverPath::Coplanar => "coplanar",
                SolverPath::General => "general",
            }
            .into(),
            hypotheses_scored: r.hypotheses_scored,
            failed_samples: r.failed_samples,
            coplanar_samples: r.coplanar_samples,
            elapsed_ms,
        },
    };
    let out = args.out.clone().unwrap_or_else(|| default_result_path(&args.scene));
    format::write_json(&out, &result)?;
    Ok(out)
}

pub fn generate(recipe: &SceneRecipe, out: &Path) -> Result<PathBuf, CliError> {
    let problem = synthbench::generate(recipe).map_err(anyhow::Error::from)?;
    format::write_json(out, &SceneFile::from_problem(&problem))?;
    Ok(out.to_path_buf())
}

/// Settings shared by the benchmark subcommands.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BenchSettings {
    pub recipe: SceneRecipe,
    pub seed: u64,
    pub variant: &'static str,
    pub permutations: u8,
}

#[derive(Debug, Clone)]
pub enum Bench {
    Stability { trials: usize },
    Noise { levels: Vec<f64>, runs: usize },
    Ransac { runs: usize },
    Coplanar { trials: usize },
    Timing { trials: usize },
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub bench: Bench,
    pub recipe: SceneRecipe,
    pub config: RansacConfig,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct StabilitySummary {
    settings: BenchSettings,
    trials: usize,
    fraction_depth_rmse_le_1e_2: f64,
    fraction_rotation_le_0_1_deg: f64,
    fraction_no_hypothesis: f64,
    mean_hypotheses: f64,
    depth_rmse_quantiles: Quantiles,
}

#[derive(Serialize)]
struct Quantiles {
    p10: f64,
    p50: f64,
    p90: f64,
    p99: f64,
}

fn quantiles(sorted: &[f64]) -> Quantiles {
    let q = |p: f64| {
        if sorted.is_empty() {
            f64::NAN
        } else {
            sorted[((sorted.len() - 1) as f64 * p).round() as usize]
        }
    };
    Quantiles { p10: q(0.1), p50: q(0.5), p90: q(0.9), p99: q(0.99) }
}

#[derive(Serialize)]
struct RansacBenchSummary {
    settings: BenchSettings,
    iterations: usize,
    threshold_px: f64,
    #[serde(flatten)]
    summary: synthbench::RansacSummary,
}

#[derive(Serialize)]
struct NoiseSummary {
    settings: BenchSettings,
    iterations: usize,
    threshold_px: f64,
    levels: Vec<synthbench::NoiseRow>,
}

#[derive(Serialize)]
struct CoplanarSummary {
    settings: BenchSettings,
    trials: usize,
    fraction_exact: f64,
    mean_hypotheses: f64,
}

#[derive(Serialize)]
struct CoplanarTiming {
    speedup_ratio: Option<f64>,
    timing: synthbench::TimingReport,
}

#[derive(Serialize)]
struct TimingRow {
    path: &'static str,
    samples: usize,
    mean_us: f64,
    median_us: f64,
    min_us: f64,
}

#[derive(Serialize)]
struct TimingCounts {
    settings: BenchSettings,
    trials: usize,
    counts: synthbench::OperationCounts,
}

/// Coplanar recovery tolerances: rotation in degrees, relative scale,
/// translation relative to scene scale.
pub const COPLANAR_EXACT: (f64, f64, f64) = (1e-4, 1e-6, 1e-6);

pub fn coplanar_exact(r: &StabilityRow) -> bool {
    r.rotation_error_deg <= COPLANAR_EXACT.0
        && r.scale_error_rel <= COPLANAR_EXACT.1
        && r.translation_error_scene <= COPLANAR_EXACT.2
}

/// Runs one benchmark and returns the files written. Files whose name
/// contains `timing` hold wall-clock measurements; everything else is a
/// pure function of the flags.
pub fn bench(args: &BenchArgs) -> Result<Vec<PathBuf>, CliError> {
    args.recipe.validate().map_err(anyhow::Error::from)?;
    let settings = BenchSettings {
        recipe: args.recipe,
        seed: args.seed,
        variant: variant_name(&args.config.variant),
        permutations: permutation_count(&args.config.variant),
    };
    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    let mut put_csv = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = out.join(name);
        f(&p)?;
        written.push(p);
        Ok(())
    };
    match &args.bench {
        Bench::Stability { trials } => {
            let t = synthbench::run_stability(*trials, &args.recipe, &args.config.variant, args.seed);
            put_csv("stability.csv", &|p| format::write_csv(p, &t.rows))?;
            let s = StabilitySummary {
                settings,
                trials: *trials,
                fraction_depth_rmse_le_1e_2: t.fraction(|r| r.depth_rmse <= 1e-2),
                fraction_rotation_le_0_1_deg: t.fraction(|r| r.rotation_error_deg <= 0.1),
                fraction_no_hypothesis: t.fraction(|r| r.num_hypotheses == 0),
                mean_hypotheses: t.mean_hypotheses(),
                depth_rmse_quantiles: quantiles(&t.depth_rmse_cdf),
            };
            put_csv("stability_summary.json", &|p| format::write_json(p, &s))?;
        }
        Bench::Noise { levels, runs } => {
            let rows = synthbench::run_noise_sweep(levels, &args.recipe, *runs, &args.config, args.seed);
            put_csv("noise.csv", &|p| format::write_csv(p, &rows))?;
            let s = NoiseSummary {
                settings,
                iterations: args.config.iterations,
                threshold_px: args.config.inlier_threshold_px,
                levels: rows.clone(),
            };
            put_csv("noise_summary.json", &|p| format::write_json(p, &s))?;
        }
        Bench::Ransac { runs } => {
            let b = synthbench::run_ransac_bench(*runs, &args.recipe, &args.config, args.seed);
            put_csv("ransac.csv", &|p| format::write_csv(p, &b.rows))?;
            let s = RansacBenchSummary {
                settings,
                iterations: args.config.iterations,
                threshold_px: args.config.inlier_threshold_px,
                summary: b.summary,
            };
            put_csv("ransac_summary.json", &|p| format::write_json(p, &s))?;
        }
        Bench::Coplanar { trials } => {
            let b = synthbench::run_coplanar_bench(*trials, &args.recipe, args.seed);
            put_csv("coplanar.csv", &|p| format::write_csv(p, &b.stability.rows))?;
            let s = CoplanarSummary {
                settings,
                trials: *trials,
                fraction_exact: b.stability.fraction(coplanar_exact),
                mean_hypotheses: b.stability.mean_hypotheses(),
            };
            put_csv("coplanar_summary.json", &|p| format::write_json(p, &s))?;
            let t = CoplanarTiming { speedup_ratio: b.timing.speedup, timing: b.timing };
            put_csv("coplanar_timing.json", &|p| format::write_json(p, &t))?;
        }
        Bench::Timing { trials } => {
            let r = synthbench::run_timing(&args.recipe, *trials, args.seed);
            let rows: Vec<TimingRow> = [("general", r.general), ("coplanar", r.coplanar)]
                .into_iter()
                .filter_map(|(path, s)| {
                    s.map(|s| TimingRow { path, samples: s.samples, mean_us: s.mean_us, median_us: s.median_us, min_us: s.min_us })
                })
                .collect();
            put_csv("timing.csv", &|p| format::write_csv(p, &rows))?;
            let c = TimingCounts { settings, trials: *trials, counts: r.counts };
            put_csv("timing_counts.json", &|p| format::write_json(p, &c))?;
        }
    }
    Ok(written)
}

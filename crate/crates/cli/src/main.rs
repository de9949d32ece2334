use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gp4pc::pipeline::{AlignmentKind, PermutationMode, SolverVariant};
use gp4pc::robust::{RansacConfig, DEFAULT_ITERATIONS, DEFAULT_THRESHOLD_PX};
use gp4pc::synthbench::{SceneRecipe, TransformKind};
use gp4pc_cli::commands::{self, Bench, BenchArgs, CliError, SolveArgs};
use gp4pc_cli::THREADS_ENV;

#[derive(Parser)]
#[command(name = "gp4pc", version, about = "Generalized camera pose-and-scale from 4-point congruences")]
struct Cli {
    /// Worker threads (default: $GP4PC_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the world-to-rig similarity of a scene file with RANSAC.
    Solve {
        scene: PathBuf,
        /// Result path (default: <scene>.result.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        ransac: RansacFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a synthetic benchmark and write CSV and JSON into --out.
    Bench {
        #[command(subcommand)]
        bench: BenchCommand,
    },
    /// Write a synthetic scene file.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        recipe: RecipeFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const STABILITY_COLUMNS: &str = "stability.csv columns: trial, num_hypotheses, depth_rmse, rotation_error_deg, \
translation_error_rel, translation_error_scene, scale_error_rel, coplanar_path";
const RANSAC_COLUMNS: &str = "ransac.csv columns: run, success, rotation_error_deg, translation_error_rel, \
scale_error_rel, depth_rmse, mean_reprojection_px, inliers, true_inliers, inlier_recall, inlier_precision, \
best_iteration, hypotheses_scored";
const NOISE_COLUMNS: &str = "noise.csv columns: sigma_px, runs, ransac_successes, mean_rotation_error_deg, \
mean_translation_error_rel, mean_scale_error_rel, mean_reprojection_px, mean_inlier_recall, minimal_successes, \
minimal_mean_depth_rmse, minimal_mean_rotation_error_deg";
const TIMING_COLUMNS: &str = "timing.csv columns: path, samples, mean_us, median_us, min_us";

#[derive(Subcommand)]
enum BenchCommand {
    /// Noise-free minimal solves: depth RMSE and transform errors per trial.
    #[command(after_help = STABILITY_COLUMNS)]
    Stability {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Run 100000 trials.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        common: BenchFlags,
    },
    /// RANSAC and raw minimal solves across pixel noise levels.
    #[command(after_help = NOISE_COLUMNS)]
    Noise {
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2,2.5")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[command(flatten)]
        common: BenchFlags,
    },
    /// Repeated RANSAC runs at one operating point.
    #[command(after_help = RANSAC_COLUMNS)]
    Ransac {
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[command(flatten)]
        common: BenchFlags,
    },
    /// Closed-form accuracy on coplanar scenes and speed against the quartic path.
    #[command(after_help = STABILITY_COLUMNS)]
    Coplanar {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[command(flatten)]
        common: BenchFlags,
    },
    /// Per-problem solve times of the coplanar and general paths.
    #[command(after_help = TIMING_COLUMNS)]
    Timing {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[command(flatten)]
        common: BenchFlags,
    },
}

#[derive(Args)]
struct BenchFlags {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    recipe: RecipeFlags,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    ransac: RansacFlags,
}

#[derive(Args)]
struct RecipeFlags {
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 10)]
    cameras: usize,
    /// Pixel noise standard deviation per axis.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Fraction of correspondences replaced by random pixels.
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    #[arg(long, default_value_t = 1000.0)]
    focal: f64,
    /// Ground-truth transform (default: identity for stability, random otherwise).
    #[arg(long, value_enum)]
    transform: Option<TransformArg>,
    /// Place all points on one plane.
    #[arg(long)]
    coplanar: bool,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long, value_enum, default_value_t = VariantArg::PlusS)]
    variant: VariantArg,
    /// Orderings of each sample to solve: 1 or 6.
    #[arg(long, default_value_t = 1, value_parser = parse_permutations)]
    permutations: u8,
}

fn parse_permutations(s: &str) -> Result<u8, String> {
    match s {
        "1" => Ok(1),
        "6" => Ok(6),
        _ => Err(format!("expected 1 or 6, got {s:?}")),
    }
}

#[derive(Args)]
struct RansacFlags {
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_PX)]
    threshold_px: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    PlusS,
    PlusA,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Identity,
    Random,
}

impl RecipeFlags {
    fn recipe(&self, seed: u64, default_transform: TransformKind) -> SceneRecipe {
        SceneRecipe {
            num_points: self.points,
            num_cameras: self.cameras,
            noise_sigma_px: self.noise,
            outlier_fraction: self.outliers,
            focal_length: self.focal,
            transform: match self.transform {
                Some(TransformArg::Identity) => TransformKind::Identity,
                Some(TransformArg::Random) => TransformKind::RandomSimilarity,
                None => default_transform,
            },
            coplanar: self.coplanar,
            seed,
            ..SceneRecipe::default()
        }
    }
}

impl SolverFlags {
    fn variant(&self) -> SolverVariant {
        let alignment = match self.variant {
            VariantArg::PlusS => AlignmentKind::PlusS,
            VariantArg::PlusA => AlignmentKind::PlusA,
        };
        let perms = if self.permutations == 6 { PermutationMode::SixP } else { PermutationMode::OneP };
        SolverVariant::new(alignment, perms)
    }
}

fn ransac_config(solver: &SolverFlags, ransac: &RansacFlags, seed: u64) -> RansacConfig {
    RansacConfig {
        iterations: ransac.iterations,
        inlier_threshold_px: ransac.threshold_px,
        seed,
        variant: solver.variant(),
        record_history: false,
    }
}

fn bench_args(bench: Bench, common: &BenchFlags, default_transform: TransformKind) -> BenchArgs {
    BenchArgs {
        bench,
        recipe: common.recipe.recipe(common.seed, default_transform),
        config: ransac_config(&common.solver, &common.ransac, common.seed),
        seed: common.seed,
        out: common.out.clone(),
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let from_env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
            CliError::Input(anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got {v:?}"))
        })?),
        Err(_) => None,
    };
    if let Some(n) = flag.or(from_env).filter(|n| *n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(anyhow::anyhow!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Solve { scene, out, solver, ransac, seed } => {
            let args = SolveArgs { scene, out, config: ransac_config(&solver, &ransac, seed) };
            commands::solve(&args).map(|p| vec![p])
        }
        Command::Generate { out, recipe, seed } => {
            commands::generate(&recipe.recipe(seed, TransformKind::RandomSimilarity), &out).map(|p| vec![p])
        }
        Command::Bench { bench } => {
            let args = match bench {
                BenchCommand::Stability { trials, full, common } => {
                    let trials = if full { 100_000 } else { trials };
                    bench_args(Bench::Stability { trials }, &common, TransformKind::Identity)
                }
                BenchCommand::Noise { levels, runs, common } => {
                    bench_args(Bench::Noise { levels, runs }, &common, TransformKind::RandomSimilarity)
                }
                BenchCommand::Ransac { runs, common } => {
                    bench_args(Bench::Ransac { runs }, &common, TransformKind::RandomSimilarity)
                }
                BenchCommand::Coplanar { trials, common } => {
                    bench_args(Bench::Coplanar { trials }, &common, TransformKind::RandomSimilarity)
                }
                BenchCommand::Timing { trials, common } => {
                    bench_args(Bench::Timing { trials }, &common, TransformKind::RandomSimilarity)
                }
            };
            commands::bench(&args)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gp4pc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

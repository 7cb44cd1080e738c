//! Command-line surface: schedule inspection, perturbation, training,
//! sampling, handedness-reference building, evaluation, and report
//! emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use scorefold_core::conditioning::{assemble, ConditioningBundle, DEFAULT_POSENC_WIDTH};
use scorefold_core::geometry::{sequence_from_str, Structure};
use scorefold_core::metrics::{gdt_ts, lddt_ca, rmsd, MetricParams};
use scorefold_core::noise::{geometric_schedule, NoiseSchedule};
use scorefold_core::rng::{ChaCha8Rng, SeedableRng};
use scorefold_core::sampler::{
    build_reference_histogram, step_size, AnnealRun, SamplerConfig, Snapshot,
};
use scorefold_core::score::{
    net_score, oracle_score, train_with_validation, CoordinateScore, NetConfig, PairwiseScoreNet,
    TrainConfig,
};
use scorefold_core::Error as CoreError;

use crate::io::{self, Field, Split};

/// Exit status contract: 0 success, 2 usage/input error, 3 numerical
/// failure.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(e) | CliError::Numerical(e) => format!("{e:#}"),
        }
    }
}

fn classify(err: anyhow::Error) -> CliError {
    let numerical = err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<CoreError>(),
            Some(CoreError::TrainingFailure { .. }) | Some(CoreError::SamplingFailure { .. })
        )
    });
    if numerical {
        CliError::Numerical(err)
    } else {
        CliError::Usage(err)
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "scorefold",
    about = "Protein Cα-trace optimization by annealed Langevin dynamics over learned distance-matrix scores",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the noise schedule and per-stage step sizes.
    Schedule(ScheduleArgs),
    /// Perturb a Cα trace with Gaussian noise.
    Perturb(PerturbArgs),
    /// Train the pairwise score network on a dataset manifest.
    Train(TrainArgs),
    /// Generate decoys by annealed Langevin sampling.
    Sample(SampleArgs),
    /// Build a handedness reference histogram from a manifest.
    HirmRef(HirmRefArgs),
    /// Score decoys against a native structure.
    Eval(EvalArgs),
    /// Per-stage quality and timing report for a sampling trajectory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 10.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 32)]
    pub levels: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda0: f64,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub pdb: PathBuf,
    #[arg(long, default_value_t = 'A')]
    pub chain: char,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Contiguous crop window; 0 disables cropping.
    #[arg(long, default_value_t = 32)]
    pub crop: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 10.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 32)]
    pub levels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_model: PathBuf,
    /// Loss curve CSV path (default: next to the model).
    #[arg(long)]
    pub out_losses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Trained checkpoint; mutually exclusive with --oracle-pdb.
    #[arg(long, conflicts_with = "oracle_pdb")]
    pub model: Option<PathBuf>,
    /// Use the analytic oracle around this native structure.
    #[arg(long)]
    pub oracle_pdb: Option<PathBuf>,
    /// Target sequence (one-letter); alternative to --pdb.
    #[arg(long, conflicts_with = "pdb")]
    pub seq: Option<String>,
    /// Take the target sequence from this PDB file.
    #[arg(long)]
    pub pdb: Option<PathBuf>,
    #[arg(long, default_value_t = 'A')]
    pub chain: char,
    /// Prediction tensor with distance/orientation channels.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// "orientation" zeroes the ω/γ/φ channels (distance-only ablation).
    #[arg(long)]
    pub predictions_mask: Option<String>,
    #[arg(long, default_value_t = 128)]
    pub decoys: usize,
    #[arg(long = "stages-T", default_value_t = 64)]
    pub stages_t: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 32)]
    pub levels: usize,
    /// Reference histogram enabling handedness resolution.
    #[arg(long)]
    pub hirm_ref: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Intra-stage snapshot stride (0 = stage ends only).
    #[arg(long, default_value_t = 0)]
    pub snapshot_stride: usize,
    /// Worker threads for decoy parallelism (default: SCOREFOLD_JOBS or
    /// all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Skip writing stage-end trajectory files.
    #[arg(long, default_value_t = false)]
    pub no_trajectory: bool,
}

#[derive(Debug, Args)]
pub struct HirmRefArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 36)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub native: PathBuf,
    #[arg(long, default_value_t = 'A')]
    pub chain: char,
    /// Comma-separated subset of lddt,gdt,rmsd.
    #[arg(long, default_value = "lddt,gdt,rmsd")]
    pub metrics: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub trajectory_dir: PathBuf,
    #[arg(long)]
    pub native: PathBuf,
    #[arg(long, default_value_t = 'A')]
    pub chain: char,
    #[arg(long)]
    pub out: PathBuf,
}

/// Entry point used by both `main` and the tests.
pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Schedule(args) => cmd_schedule(&args),
        Command::Perturb(args) => cmd_perturb(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Sample(args) => cmd_sample(&args),
        Command::HirmRef(args) => cmd_hirm_ref(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

/// Echo the effective parameters of a run next to its outputs.
fn write_config_echo(path: &Path, entries: &BTreeMap<String, String>) -> anyhow::Result<()> {
    let mut text = String::new();
    for (key, value) in entries {
        text.push_str(&format!("{key}={value}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing config echo {}", path.display()))
}

macro_rules! echo_entries {
    ($($key:ident = $value:expr),* $(,)?) => {{
        let mut map = BTreeMap::new();
        $(map.insert(stringify!($key).to_string(), $value.to_string());)*
        map
    }};
}

fn cmd_schedule(args: &ScheduleArgs) -> CliResult {
    let schedule = geometric_schedule(args.sigma_max, args.sigma_min, args.levels)
        .map_err(|e| CliError::Usage(e.into()))?;
    if !(args.lambda0 > 0.0) {
        return Err(CliError::Usage(anyhow!(
            "reference step size must be positive, got {}",
            args.lambda0
        )));
    }
    println!(
        "# sigma_max={} sigma_min={} levels={} lambda0={}",
        args.sigma_max, args.sigma_min, args.levels, args.lambda0
    );
    println!("stage,sigma,lambda");
    for stage in 0..schedule.levels() {
        let sigma = schedule.sigma(stage).expect("in range");
        let lambda = step_size(&schedule, stage, args.lambda0).expect("in range");
        println!(
            "{},{},{}",
            stage + 1,
            io::format_float(sigma),
            io::format_float(lambda)
        );
    }
    Ok(())
}

fn cmd_perturb(args: &PerturbArgs) -> CliResult {
    let run = || -> anyhow::Result<()> {
        if !(args.sigma > 0.0) {
            bail!("sigma must be positive, got {}", args.sigma);
        }
        let parsed = io::parse_pdb_ca(&args.pdb, args.chain)?;
        if parsed.residues_missing_ca > 0 {
            eprintln!(
                "warning: {} residue(s) in chain {} had no CA atom",
                parsed.residues_missing_ca, args.chain
            );
        }
        let structure = parsed.structure;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let perturbed = scorefold_core::noise::perturb(structure.coords(), args.sigma, &mut rng);

        // Unsuperposed RMSD of the applied noise.
        let mut acc = 0.0;
        for (a, b) in structure.coords().iter().zip(perturbed.iter()) {
            acc += scorefold_core::geometry::squared_distance(*a, *b);
        }
        let moved = (acc / structure.len() as f64).sqrt();
        io::write_ca_pdb(structure.sequence(), &perturbed, &args.out)?;
        write_config_echo(
            &args.out.with_extension("config.txt"),
            &echo_entries!(
                command = "perturb",
                pdb = args.pdb.display(),
                chain = args.chain,
                sigma = args.sigma,
                seed = args.seed,
                out = args.out.display(),
            ),
        )?;
        println!("unsuperposed_rmsd={}", io::format_float(moved));
        Ok(())
    };
    run().map_err(classify)
}

/// Load one manifest entry as a (structure, bundle) pair.
fn load_entry(entry: &io::ManifestEntry) -> anyhow::Result<(Structure, ConditioningBundle)> {
    let parsed = io::parse_pdb_ca(&entry.pdb, entry.chain)
        .with_context(|| format!("target {}", entry.id))?;
    let predictions = match &entry.predictions {
        Some(path) => {
            Some(io::load_predictions(path).with_context(|| format!("target {}", entry.id))?)
        }
        None => None,
    };
    let bundle = assemble(
        parsed.structure.sequence(),
        DEFAULT_POSENC_WIDTH,
        predictions,
    )?;
    Ok((parsed.structure, bundle))
}

fn cmd_train(args: &TrainArgs) -> CliResult {
    let run = || -> anyhow::Result<()> {
        let entries = io::load_manifest(&args.manifest)?;
        let mut train_set = Vec::new();
        let mut valid_set = Vec::new();
        for entry in &entries {
            match entry.split {
                Split::Train => train_set.push(load_entry(entry)?),
                Split::Valid => valid_set.push(load_entry(entry)?),
                Split::Test => {}
            }
        }
        if train_set.is_empty() {
            bail!("manifest has no train-split entries");
        }
        let schedule = geometric_schedule(args.sigma_max, args.sigma_min, args.levels)?;
        let mut net = PairwiseScoreNet::new(
            NetConfig {
                channels: train_set[0].1.channels(),
                width: args.width,
                blocks: args.blocks,
            },
            &schedule,
            args.seed,
        );
        let config = TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch,
            learning_rate: args.lr,
            crop: if args.crop == 0 {
                None
            } else {
                Some(args.crop)
            },
            seed: args.seed,
        };
        let validation = if valid_set.is_empty() {
            None
        } else {
            Some(&valid_set[..])
        };
        let report = train_with_validation(&mut net, &train_set, validation, &schedule, &config)?;

        io::save_checkpoint(&args.out_model, &net)?;
        let losses_path = args
            .out_losses
            .clone()
            .unwrap_or_else(|| args.out_model.with_extension("losses.csv"));
        let mut rows = Vec::new();
        for (epoch, &loss) in report.losses.iter().enumerate() {
            let valid = report.valid_losses.get(epoch).copied();
            rows.push(vec![
                Field::from(epoch),
                Field::from(loss),
                match valid {
                    Some(v) => Field::from(v),
                    None => Field::from(""),
                },
            ]);
        }
        io::emit_csv(&["epoch", "train_loss", "valid_loss"], &rows, &losses_path)?;
        write_config_echo(
            &args.out_model.with_extension("config.txt"),
            &echo_entries!(
                command = "train",
                manifest = args.manifest.display(),
                epochs = args.epochs,
                batch = args.batch,
                lr = args.lr,
                crop = args.crop,
                width = args.width,
                blocks = args.blocks,
                sigma_max = args.sigma_max,
                sigma_min = args.sigma_min,
                levels = args.levels,
                seed = args.seed,
                out_model = args.out_model.display(),
                out_losses = losses_path.display(),
            ),
        )?;
        if let Some(best) = report.best_epoch {
            println!("best_valid_epoch={best}");
        }
        println!(
            "initial_loss={} final_loss={}",
            io::format_float(report.losses[0]),
            io::format_float(*report.losses.last().unwrap())
        );
        Ok(())
    };
    run().map_err(classify)
}

fn decoy_seed(seed: u64, decoy: usize) -> u64 {
    seed ^ ((decoy as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct DecoyOutput {
    decoy: usize,
    structure: Structure,
    stage_ends: Vec<Vec<scorefold_core::geometry::Vec3>>,
    snapshots: Vec<Snapshot>,
    stage_seconds: Vec<f64>,
    stage_sigmas: Vec<f64>,
    stage_lambdas: Vec<f64>,
}

fn cmd_sample(args: &SampleArgs) -> CliResult {
    let run = || -> anyhow::Result<()> {
        fs::create_dir_all(&args.out_dir)
            .with_context(|| format!("creating {}", args.out_dir.display()))?;

        // Model + schedule + target sequence.
        enum Model {
            Oracle(scorefold_core::score::OracleScore),
            Net(scorefold_core::score::NetScore),
        }
        impl CoordinateScore for Model {
            fn evaluate(
                &self,
                coords: &[scorefold_core::geometry::Vec3],
                bundle: &ConditioningBundle,
                level: usize,
            ) -> scorefold_core::Result<Vec<scorefold_core::geometry::Vec3>> {
                match self {
                    Model::Oracle(m) => m.evaluate(coords, bundle, level),
                    Model::Net(m) => m.evaluate(coords, bundle, level),
                }
            }
            fn levels(&self) -> usize {
                match self {
                    Model::Oracle(m) => m.levels(),
                    Model::Net(m) => m.levels(),
                }
            }
        }

        let (model, schedule, sequence) = if let Some(oracle_pdb) = &args.oracle_pdb {
            let schedule = geometric_schedule(args.sigma_max, args.sigma_min, args.levels)?;
            let native = io::parse_pdb_ca(oracle_pdb, args.chain)?.structure;
            let sequence = match (&args.seq, &args.pdb) {
                (Some(s), _) => sequence_from_str(s),
                (None, Some(pdb)) => io::parse_pdb_ca(pdb, args.chain)?
                    .structure
                    .sequence()
                    .to_vec(),
                (None, None) => native.sequence().to_vec(),
            };
            if sequence.len() != native.len() {
                bail!(
                    "target length {} does not match the oracle native length {}",
                    sequence.len(),
                    native.len()
                );
            }
            (
                Model::Oracle(oracle_score(native, schedule.clone())),
                schedule,
                sequence,
            )
        } else if let Some(model_path) = &args.model {
            let net = io::load_checkpoint(model_path)?;
            let schedule = NoiseSchedule::new(net.sigmas().to_vec())?;
            let sequence = match (&args.seq, &args.pdb) {
                (Some(s), _) => sequence_from_str(s),
                (None, Some(pdb)) => io::parse_pdb_ca(pdb, args.chain)?
                    .structure
                    .sequence()
                    .to_vec(),
                (None, None) => bail!("--model runs need --seq or --pdb for the target"),
            };
            (Model::Net(net_score(net)), schedule, sequence)
        } else {
            bail!("pass either --model or --oracle-pdb");
        };

        let predictions = match &args.predictions {
            Some(path) => {
                let mut p = io::load_predictions(path)?;
                if !p.normalized() {
                    eprintln!("warning: prediction bins are not normalized");
                }
                match args.predictions_mask.as_deref() {
                    Some("orientation") => p.mask_orientation(),
                    Some(other) => bail!("unknown --predictions-mask '{other}'"),
                    None => {}
                }
                Some(p)
            }
            None => {
                if args.predictions_mask.is_some() {
                    bail!("--predictions-mask needs --predictions");
                }
                None
            }
        };
        let bundle = assemble(&sequence, DEFAULT_POSENC_WIDTH, predictions)?;

        let hirm_reference = match &args.hirm_ref {
            Some(path) => Some(io::load_histogram(path)?),
            None => None,
        };

        let base_config = SamplerConfig {
            schedule: schedule.clone(),
            iterations_per_stage: args.stages_t,
            reference_step: args.lambda0,
            decoys: args.decoys.max(1),
            seed: args.seed,
            hirm_enabled: hirm_reference.is_some(),
            snapshot_stride: args.snapshot_stride,
        };
        base_config.validate()?;
        if args.decoys == 0 {
            bail!("need at least one decoy");
        }

        let jobs = args
            .jobs
            .or_else(|| {
                std::env::var("SCOREFOLD_JOBS")
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?;

        let sample_one = |decoy: usize| -> anyhow::Result<DecoyOutput> {
            let mut config = base_config.clone();
            config.seed = decoy_seed(args.seed, decoy);
            let mut run = AnnealRun::new(&model, &bundle, &config, hirm_reference.as_ref())?;
            let mut snapshots = Vec::new();
            let mut stage_ends = Vec::new();
            let mut stage_seconds = Vec::new();
            let mut stage_sigmas = Vec::new();
            let mut stage_lambdas = Vec::new();
            while !run.finished() {
                let stage = run.stage();
                let start = Instant::now();
                run.run_stage(&mut snapshots)?;
                stage_seconds.push(start.elapsed().as_secs_f64());
                stage_ends.push(run.coords().to_vec());
                stage_sigmas.push(schedule.sigma(stage)?);
                stage_lambdas.push(step_size(&schedule, stage, args.lambda0)?);
            }
            let structure = Structure::new(sequence.clone(), run.coords().to_vec())?;
            Ok(DecoyOutput {
                decoy,
                structure,
                stage_ends,
                snapshots,
                stage_seconds,
                stage_sigmas,
                stage_lambdas,
            })
        };

        let results: Vec<anyhow::Result<DecoyOutput>> = pool.install(|| {
            use rayon::prelude::*;
            (0..args.decoys).into_par_iter().map(sample_one).collect()
        });

        let traj_dir = args.out_dir.join("traj");
        if !args.no_trajectory {
            fs::create_dir_all(&traj_dir)?;
        }

        let mut stats_rows = Vec::new();
        let mut traj_rows = Vec::new();
        let mut timing_rows = Vec::new();
        for result in results {
            let output = result?;
            let decoy = output.decoy;
            let decoy_path = args.out_dir.join(format!("decoy_{decoy:03}.pdb"));
            io::write_ca_pdb(
                output.structure.sequence(),
                output.structure.coords(),
                &decoy_path,
            )?;
            for (stage, coords) in output.stage_ends.iter().enumerate() {
                let rg = radius_of_gyration(coords);
                stats_rows.push(vec![
                    Field::from(decoy),
                    Field::from(stage + 1),
                    Field::from(output.stage_sigmas[stage]),
                    Field::from(output.stage_lambdas[stage]),
                    Field::from(rg),
                ]);
                timing_rows.push(vec![
                    Field::from(decoy),
                    Field::from(stage + 1),
                    Field::from(output.stage_seconds[stage]),
                ]);
                if !args.no_trajectory {
                    let file = format!("traj/decoy_{decoy:03}_stage_{:02}.pdb", stage + 1);
                    io::write_ca_pdb(
                        output.structure.sequence(),
                        coords,
                        &args.out_dir.join(&file),
                    )?;
                    traj_rows.push(vec![
                        Field::from(decoy),
                        Field::from(stage + 1),
                        Field::from(base_config.iterations_per_stage),
                        Field::from(file),
                    ]);
                }
            }
            if !args.no_trajectory {
                for snapshot in &output.snapshots {
                    let file = format!(
                        "traj/decoy_{decoy:03}_stage_{:02}_iter_{:04}.pdb",
                        snapshot.stage + 1,
                        snapshot.iteration
                    );
                    io::write_ca_pdb(
                        output.structure.sequence(),
                        &snapshot.coords,
                        &args.out_dir.join(&file),
                    )?;
                    traj_rows.push(vec![
                        Field::from(decoy),
                        Field::from(snapshot.stage + 1),
                        Field::from(snapshot.iteration),
                        Field::from(file),
                    ]);
                }
            }
        }
        io::emit_csv(
            &["decoy", "stage", "sigma", "lambda", "radius_of_gyration"],
            &stats_rows,
            &args.out_dir.join("stats.csv"),
        )?;
        if !args.no_trajectory {
            io::emit_csv(
                &["decoy", "stage", "iteration", "file"],
                &traj_rows,
                &args.out_dir.join("trajectory.csv"),
            )?;
        }
        // Wall-clock timings live apart from the bit-reproducible outputs.
        io::emit_csv(
            &["decoy", "stage", "seconds"],
            &timing_rows,
            &args.out_dir.join("timings.csv"),
        )?;
        write_config_echo(
            &args.out_dir.join("run_config.txt"),
            &echo_entries!(
                command = "sample",
                model = args
                    .model
                    .as_ref()
                    .map_or("oracle".to_string(), |p| p.display().to_string()),
                oracle_pdb = args
                    .oracle_pdb
                    .as_ref()
                    .map_or(String::new(), |p| p.display().to_string()),
                decoys = args.decoys,
                stages_t = args.stages_t,
                lambda0 = args.lambda0,
                sigma_max = args.sigma_max,
                sigma_min = args.sigma_min,
                levels = schedule.levels(),
                hirm = args
                    .hirm_ref
                    .as_ref()
                    .map_or(String::new(), |p| p.display().to_string()),
                seed = args.seed,
                snapshot_stride = args.snapshot_stride,
                out_dir = args.out_dir.display(),
            ),
        )?;
        println!("decoys={} out_dir={}", args.decoys, args.out_dir.display());
        Ok(())
    };
    run().map_err(classify)
}

fn radius_of_gyration(coords: &[scorefold_core::geometry::Vec3]) -> f64 {
    let centered = scorefold_core::geometry::center(coords);
    let acc: f64 = centered
        .iter()
        .map(|p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
        .sum();
    (acc / coords.len() as f64).sqrt()
}

fn cmd_hirm_ref(args: &HirmRefArgs) -> CliResult {
    let run = || -> anyhow::Result<()> {
        let entries = io::load_manifest(&args.manifest)?;
        let mut structures = Vec::new();
        for entry in entries.iter().filter(|e| e.split == Split::Train) {
            structures.push(io::parse_pdb_ca(&entry.pdb, entry.chain)?.structure);
        }
        if structures.is_empty() {
            bail!("manifest has no train-split entries to pool");
        }
        let histogram = build_reference_histogram(&structures, args.bins)?;
        io::save_histogram(&args.out, &histogram)?;
        write_config_echo(
            &args.out.with_extension("config.txt"),
            &echo_entries!(
                command = "hirm-ref",
                manifest = args.manifest.display(),
                bins = args.bins,
                structures = structures.len(),
                out = args.out.display(),
            ),
        )?;
        println!("bins={} structures={}", args.bins, structures.len());
        Ok(())
    };
    run().map_err(classify)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Metric {
    Lddt,
    Gdt,
    Rmsd,
}

fn parse_metrics(spec: &str) -> anyhow::Result<Vec<Metric>> {
    let mut out = Vec::new();
    for token in spec.split(',') {
        match token.trim() {
            "lddt" => out.push(Metric::Lddt),
            "gdt" => out.push(Metric::Gdt),
            "rmsd" => out.push(Metric::Rmsd),
            other => bail!("unknown metric '{other}' (expected lddt, gdt, rmsd)"),
        }
    }
    if out.is_empty() {
        bail!("empty metric list");
    }
    Ok(out)
}

fn metric_name(metric: Metric) -> &'static str {
    match metric {
        Metric::Lddt => "lddt_ca",
        Metric::Gdt => "gdt_ts",
        Metric::Rmsd => "rmsd",
    }
}

fn list_decoys(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut decoys: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("decoy_") && n.ends_with(".pdb"))
        })
        .collect();
    decoys.sort();
    Ok(decoys)
}

fn cmd_eval(args: &EvalArgs) -> CliResult {
    let run = || -> anyhow::Result<()> {
        let metrics = parse_metrics(&args.metrics)?;
        let native = io::parse_pdb_ca(&args.native, args.chain)?.structure;
        let decoys = list_decoys(&args.pred_dir)?;
        if decoys.is_empty() {
            bail!("no decoy_*.pdb files in {}", args.pred_dir.display());
        }
        let params = MetricParams::default();

        let mut header: Vec<&str> = vec!["decoy"];
        header.extend(metrics.iter().map(|&m| metric_name(m)));
        let mut rows = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); metrics.len()];
        for path in &decoys {
            let decoy = io::parse_pdb_ca(path, 'A')?.structure;
            let name = path
                .file_stem()
                .and_then(|n| n.to_str())
                .unwrap_or("decoy")
                .to_string();
            let mut row = vec![Field::from(name)];
            for (slot, &metric) in metrics.iter().enumerate() {
                let value = match metric {
                    Metric::Lddt => lddt_ca(decoy.coords(), native.coords(), &params)?,
                    Metric::Gdt => gdt_ts(decoy.coords(), native.coords(), &params)?,
                    Metric::Rmsd => rmsd(decoy.coords(), native.coords())?,
                };
                columns[slot].push(value);
                row.push(Field::from(value));
            }
            rows.push(row);
        }
        // Summary rows: mean and max per metric.
        let mut mean_row = vec![Field::from("mean")];
        let mut max_row = vec![Field::from("max")];
        for column in &columns {
            let mean = column.iter().sum::<f64>() / column.len() as f64;
            let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mean_row.push(Field::from(mean));
            max_row.push(Field::from(max));
        }
        rows.push(mean_row.clone());
        rows.push(max_row.clone());
        io::emit_csv(&header, &rows, &args.out)?;

        // Table-1-style single-row summary.
        let mut summary_header = Vec::new();
        let mut summary_row = Vec::new();
        for (slot, &metric) in metrics.iter().enumerate() {
            let label = match metric {
                Metric::Lddt => "lDDT-Ca",
                Metric::Gdt => "GDT-TS",
                Metric::Rmsd => "RMSD",
            };
            summary_header.push(format!("{label}-Avg"));
            summary_header.push(format!("{label}-Max"));
            let mean = columns[slot].iter().sum::<f64>() / columns[slot].len() as f64;
            let max = columns[slot]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            summary_row.push(Field::from(mean));
            summary_row.push(Field::from(max));
        }
        let summary_path = summary_sibling(&args.out);
        let header_refs: Vec<&str> = summary_header.iter().map(String::as_str).collect();
        io::emit_csv(&header_refs, &[summary_row], &summary_path)?;

        write_config_echo(
            &args.out.with_extension("config.txt"),
            &echo_entries!(
                command = "eval",
                pred_dir = args.pred_dir.display(),
                native = args.native.display(),
                chain = args.chain,
                metrics = args.metrics,
                decoys = decoys.len(),
                out = args.out.display(),
                summary = summary_path.display(),
            ),
        )?;
        println!("decoys={} out={}", decoys.len(), args.out.display());
        Ok(())
    };
    run().map_err(classify)
}

fn summary_sibling(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("eval");
    out.with_file_name(format!("{stem}_summary.csv"))
}

fn cmd_report(args: &ReportArgs) -> CliResult {
    let run = || -> anyhow::Result<()> {
        let native = io::parse_pdb_ca(&args.native, args.chain)?.structure;
        let traj_csv = args.trajectory_dir.join("trajectory.csv");
        let timings_csv = args.trajectory_dir.join("timings.csv");
        if !traj_csv.is_file() {
            bail!("missing {}", traj_csv.display());
        }
        let (_, traj_rows) = io::read_csv(&traj_csv)?;
        let mut seconds: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        if timings_csv.is_file() {
            let (_, timing_rows) = io::read_csv(&timings_csv)?;
            for row in timing_rows {
                if row.len() >= 3 {
                    if let (Ok(d), Ok(s), Ok(t)) =
                        (row[0].parse(), row[1].parse(), row[2].parse::<f64>())
                    {
                        seconds.insert((d, s), t);
                    }
                }
            }
        }

        let params = MetricParams::default();
        // Stage-end files only: four columns (decoy, stage, iteration, file)
        // where the file name carries no "_iter_" infix.
        let mut rows = Vec::new();
        let mut per_stage: BTreeMap<usize, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for row in &traj_rows {
            if row.len() < 4 || row[3].contains("_iter_") {
                continue;
            }
            let decoy: usize = row[0].parse().context("decoy column")?;
            let stage: usize = row[1].parse().context("stage column")?;
            let path = args.trajectory_dir.join(&row[3]);
            let coords = io::parse_pdb_ca(&path, 'A')?.structure;
            let lddt = lddt_ca(coords.coords(), native.coords(), &params)?;
            let gdt = gdt_ts(coords.coords(), native.coords(), &params)?;
            let secs = seconds.get(&(decoy, stage)).copied().unwrap_or(f64::NAN);
            rows.push(vec![
                Field::from(decoy),
                Field::from(stage),
                Field::from(lddt),
                Field::from(gdt),
                Field::from(secs),
            ]);
            let entry = per_stage.entry(stage).or_default();
            entry.0.push(lddt);
            entry.1.push(gdt);
            if secs.is_finite() {
                entry.2.push(secs);
            }
        }
        if rows.is_empty() {
            bail!("no stage-end snapshots recorded in {}", traj_csv.display());
        }
        io::emit_csv(
            &["decoy", "stage", "lddt_ca", "gdt_ts", "seconds"],
            &rows,
            &args.out,
        )?;

        let median = |values: &mut Vec<f64>| -> f64 {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values[values.len() / 2]
        };
        let mut summary_rows = Vec::new();
        for (stage, (mut lddt, mut gdt, secs)) in per_stage {
            let mean_secs = if secs.is_empty() {
                f64::NAN
            } else {
                secs.iter().sum::<f64>() / secs.len() as f64
            };
            summary_rows.push(vec![
                Field::from(stage),
                Field::from(median(&mut lddt)),
                Field::from(median(&mut gdt)),
                Field::from(mean_secs),
            ]);
        }
        io::emit_csv(
            &["stage", "median_lddt_ca", "median_gdt_ts", "mean_seconds"],
            &summary_rows,
            &summary_sibling(&args.out),
        )?;
        write_config_echo(
            &args.out.with_extension("config.txt"),
            &echo_entries!(
                command = "report",
                trajectory_dir = args.trajectory_dir.display(),
                native = args.native.display(),
                chain = args.chain,
                out = args.out.display(),
            ),
        )?;
        println!("rows={} out={}", rows.len(), args.out.display());
        Ok(())
    };
    run().map_err(classify)
}

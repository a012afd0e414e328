mod config;
mod render;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actgen::data::{
    apply_normalization, denormalize, load_dataset, normalize, save_dataset, synthesize_dataset,
    write_trajectory_csv, ActionSequence, ClassSpec, Dataset, LabelDistribution, NormStats,
};
use actgen::eval::{evaluate_sets, KernelConfig, SequenceClassifier};
use actgen::generator::mix_labels;
use actgen::training::{
    load_checkpoint, pretrain_decoder, save_checkpoint, train, write_log, write_pretrain_log,
    ModelState, TrainingConfig,
};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{RunConfig, TrainFlags};
use render::{render_svg, Topology};

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

/// Stochastic skeleton-action generation: data synthesis, decoder
/// pretraining, bi-GAN training, sampling, evaluation and rendering.
#[derive(Parser, Debug)]
#[command(name = "actgen", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic multi-class dataset of joint trajectories.
    SynthData(SynthArgs),
    /// Pretrain the shared decoder as a conditional WGAN-GP generator.
    Pretrain(TrainArgs),
    /// Run the alternating bi-GAN training loop.
    Train(TrainArgs),
    /// Sample sequences from a checkpoint.
    Generate(GenerateArgs),
    /// Score generated sequences against a real test set.
    Evaluate(EvaluateArgs),
    /// Draw one sequence as an SVG strip of stick figures plus a CSV.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    /// Frames per sequence.
    #[arg(long = "T", default_value_t = 16)]
    length: usize,
    /// Pose dimension (must be even).
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the additive noise.
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Start from this checkpoint (its config is the base for the flags).
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Class index to condition on.
    #[arg(long, conflicts_with = "mix", required_unless_present = "mix")]
    label: Option<usize>,
    /// Comma-separated class weights, e.g. 0.5,0.5,0.
    #[arg(long, value_delimiter = ',')]
    mix: Option<Vec<f64>>,
    /// Frames per sequence [default: the training length].
    #[arg(long = "T")]
    length: Option<usize>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Model to sample from; its classifier is also scored.
    #[arg(long, required_unless_present = "generated")]
    checkpoint: Option<PathBuf>,
    /// Pre-generated sequences to score instead of sampling.
    #[arg(long)]
    generated: Option<PathBuf>,
    /// Real test set.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 100)]
    samples_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Length sequences are resampled to [default: the test set's most common length].
    #[arg(long = "T")]
    length: Option<usize>,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON bone list: `[[a,b],...]` or `{"joints":J,"bones":[[a,b],...]}`.
    #[arg(long)]
    topology: PathBuf,
    /// Record to draw.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// SVG output.
    #[arg(short = 'o', long)]
    output: PathBuf,
    /// Trajectory CSV [default: the SVG path with a .csv extension].
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Pretrain(a) => run_pretrain(a),
        Command::Train(a) => run_train(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Render(a) => render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn synth_data(a: SynthArgs) -> CliResult {
    let specs = ClassSpec::family(a.classes);
    let dataset = synthesize_dataset(&specs, a.per_class, a.length, a.dim, a.noise, a.seed)?;
    save_dataset(&dataset, &a.output)?;
    Ok(())
}

/// Stored files without normalization statistics are standardized here,
/// with the given statistics when a checkpoint supplies them.
fn prepare(raw: Dataset, stats: Option<&NormStats>) -> CliResult<Dataset> {
    Ok(match (&raw.stats, stats) {
        (Some(_), _) => raw,
        (None, Some(s)) => apply_normalization(&raw, s)?,
        (None, None) => normalize(&raw)?.0,
    })
}

fn check_shapes(state: &ModelState<f32>, data: &Dataset) -> CliResult {
    if state.classes() != data.classes() || state.pose_dim() != data.dim() {
        return Err(format!(
            "checkpoint expects {} classes × {} coordinates, dataset has {} × {}",
            state.classes(),
            state.pose_dim(),
            data.classes(),
            data.dim()
        )
        .into());
    }
    Ok(())
}

/// Fields that fix tensor shapes; a checkpoint cannot change them.
fn shape_key(c: &TrainingConfig) -> [usize; 6] {
    [
        c.noise_dim,
        c.latent_dim,
        c.generator_hidden,
        c.decoder_hidden,
        c.critic_hidden,
        c.critic_dense,
    ]
}

/// Resolved config, training data and starting state.
fn setup(a: &TrainArgs) -> CliResult<(RunConfig, Dataset, ModelState<f32>)> {
    let init = a.init.clone();
    let mut run = a.flags.resolve()?;
    let init = init.or(run.init.clone());
    let data_path = run
        .data
        .clone()
        .ok_or("no dataset: pass --data or set `data` in the config")?;
    let raw = load_dataset(&data_path)?;
    let state = match &init {
        Some(path) => {
            let mut state = load_checkpoint::<f32>(path)?;
            if a.flags.config.is_none() {
                let mut c = state.config.clone();
                a.flags.apply(&mut c);
                if let Some(name) = &run.ablation {
                    c = c.with_ablation(name.parse()?);
                }
                c.validate()?;
                run.training = c;
            }
            if shape_key(&run.training) != shape_key(&state.config)
                || run.training.latent_mode != state.config.latent_mode
            {
                return Err("network sizes differ from the initial checkpoint".into());
            }
            check_shapes(&state, &raw)?;
            state.config = run.training.clone();
            state
        }
        None => ModelState::for_dataset(run.training.clone(), &prepare(raw.clone(), None)?)?,
    };
    let data = prepare(raw, state.stats.as_ref())?;
    let mut state = state;
    if state.stats.is_none() {
        state.stats = data.stats.clone();
    }
    Ok((run, data, state))
}

fn out_dir(run: &RunConfig) -> CliResult<PathBuf> {
    let dir = run
        .out_dir
        .clone()
        .ok_or("no output directory: pass -o or set `out_dir`")?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_pretrain(a: TrainArgs) -> CliResult {
    let (run, data, mut state) = setup(&a)?;
    let dir = out_dir(&run)?;
    let decoder = state.generator.decoder.clone();
    let (decoder, log) = pretrain_decoder(&data, &state.config, decoder, state.config.seed)?;
    state.generator.decoder = decoder;
    save_checkpoint(&state, dir.join("checkpoint.json"))?;
    let mut w = create(&dir.join("pretrain_log.csv"))?;
    write_pretrain_log(&log, &mut w)?;
    w.flush()?;
    if let Some(last) = log.last() {
        println!(
            "pretrained {} iterations: critic {:.4}, decoder {:.4}, penalty {:.4}",
            log.len(),
            last.critic_loss,
            last.generator_loss,
            last.penalty
        );
    }
    Ok(())
}

fn run_train(a: TrainArgs) -> CliResult {
    let (run, data, state) = setup(&a)?;
    let dir = out_dir(&run)?;
    let periodic = (run.training.checkpoint_every > 0).then_some(dir.as_path());
    let outcome = train(&data, state, periodic)?;
    save_checkpoint(&outcome.state, dir.join("checkpoint.json"))?;
    let mut w = create(&dir.join("log.csv"))?;
    write_log(&outcome.log, &mut w)?;
    w.flush()?;
    if let Some(last) = outcome.log.last() {
        println!(
            "trained to iteration {}: loss_D {:.4}, generator total {:.4}",
            outcome.state.iteration, last.loss_d, last.breakdown.total
        );
    }
    Ok(())
}

fn label_of(
    state: &ModelState<f32>,
    label: Option<usize>,
    mix: Option<&[f64]>,
) -> CliResult<LabelDistribution> {
    let classes = state.classes();
    let label = match (label, mix) {
        (Some(c), _) => LabelDistribution::one_hot(c, classes)?,
        (None, Some(w)) => {
            if w.len() != classes {
                return Err(format!(
                    "--mix has {} weights, the model has {classes} classes",
                    w.len()
                )
                .into());
            }
            mix_labels(w)?
        }
        (None, None) => return Err("pass --label or --mix".into()),
    };
    Ok(label)
}

/// `count` sequences per label in normalized space, noise drawn in order.
fn sample(
    state: &ModelState<f32>,
    labels: &[LabelDistribution],
    length: usize,
    seed: u64,
) -> CliResult<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Dataset::new(state.classes(), state.pose_dim(), state.names.clone())?;
    for (label, (seq, _)) in labels
        .iter()
        .zip(state.generator.generate_batch(labels, length, &mut rng)?)
    {
        out.push(seq, label.clone())?;
    }
    Ok(out)
}

fn generate(a: GenerateArgs) -> CliResult {
    let state = load_checkpoint::<f32>(&a.checkpoint)?;
    let label = label_of(&state, a.label, a.mix.as_deref())?;
    let length = a.length.unwrap_or(state.sequence_length);
    let labels = vec![label; a.count];
    let generated = sample(&state, &labels, length, a.seed)?;
    let out = match &state.stats {
        Some(stats) => {
            let mut raw = generated.empty_like();
            for r in generated.records() {
                let frames = r.sequence.frames().map(|f| denormalize(f, stats)).collect();
                raw.push(ActionSequence::new(frames)?, r.label.clone())?;
            }
            raw
        }
        None => generated,
    };
    save_dataset(&out, &a.output)?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    let state = a
        .checkpoint
        .as_ref()
        .map(load_checkpoint::<f32>)
        .transpose()?;
    let stats = state.as_ref().and_then(|s| s.stats.clone());
    let mut test = load_dataset(&a.test)?;
    let to_space = |d: Dataset| -> CliResult<Dataset> {
        Ok(match (&stats, &d.stats) {
            (Some(s), None) => apply_normalization(&d, s)?,
            _ => d,
        })
    };
    test = to_space(test)?;
    if let Some(state) = &state {
        if state.classes() != test.classes() {
            return Err(format!(
                "checkpoint has {} classes, test set has {}",
                state.classes(),
                test.classes()
            )
            .into());
        }
    }
    let generated = match (&a.generated, &state) {
        (Some(path), _) => to_space(load_dataset(path)?)?,
        (None, Some(state)) => {
            let mut labels = Vec::new();
            for c in 0..state.classes() {
                labels.extend(std::iter::repeat_n(
                    LabelDistribution::one_hot(c, state.classes())?,
                    a.samples_per_class,
                ));
            }
            let length = a.length.unwrap_or(state.sequence_length);
            sample(state, &labels, length, a.seed)?
        }
        (None, None) => return Err("pass --checkpoint or --generated".into()),
    };
    let length = match a.length {
        Some(t) => t,
        None => test.reference_length().ok_or("empty test set")?,
    };
    let classifier = state
        .as_ref()
        .map(|s| &s.classifier as &dyn SequenceClassifier);
    let report = evaluate_sets(
        &generated,
        &test,
        classifier,
        length,
        &KernelConfig::default(),
        a.seed,
    )?;
    let mut w = create(&a.output)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    println!(
        "mmd_avg {:.5} mmd_seq {:.5}",
        report.mmd_avg, report.mmd_seq
    );
    Ok(())
}

fn render(a: RenderArgs) -> CliResult {
    let data = load_dataset(&a.data)?;
    let topology: Topology = serde_json::from_str(&std::fs::read_to_string(&a.topology)?)
        .map_err(|e| format!("{}: {e}", a.topology.display()))?;
    let record = data
        .records()
        .get(a.index)
        .ok_or_else(|| format!("record {} out of range ({} records)", a.index, data.len()))?;
    let svg = render_svg(&record.sequence, &topology)?;
    std::fs::write(&a.output, svg)?;
    let csv_path = a.csv.unwrap_or_else(|| a.output.with_extension("csv"));
    let mut w = create(&csv_path)?;
    write_trajectory_csv(&record.sequence, &mut w)?;
    w.flush()?;
    Ok(())
}

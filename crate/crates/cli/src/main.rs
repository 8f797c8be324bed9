use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use poseflow::config::PipelineConfig;
use poseflow::cot::{evaluate, train_cot_head};
use poseflow::dataset::{cot_records, flow_samples};
use poseflow::flow::train;
use poseflow::graph::build_graph;
use poseflow::infer::{bench, init_cot, init_expert, init_gnn, run_inference_loop, FrameOutput, InferenceSchedule, Models};
use poseflow::io::{
    cot_dataset_to_jsonl, csv, episode_files, episode_to_jsonl, read_episode, write_text, CotRecord, WeightsFile,
};
use poseflow::selfcheck::run_selfcheck;
use poseflow::sim::{gen_episode, scenario_by_name, Episode};
use poseflow::{Error, SeededRng};

#[derive(Parser)]
#[command(name = "poseflow", version, about = "Pose-object graph pipeline: data generation, training, inference")]
struct Cli {
    /// Pipeline configuration (JSON). Defaults apply when absent.
    #[arg(long, global = true, env = "PIPELINE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gnn,
    Expert,
    Cot,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Graph encoder weights; seeded init when absent.
    #[arg(long)]
    gnn: Option<PathBuf>,
    /// Action expert weights; seeded init when absent.
    #[arg(long)]
    expert: Option<PathBuf>,
    /// Reasoning head weights; seeded init when absent.
    #[arg(long)]
    cot: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ScheduleArgs {
    /// Also generate reasoning every N frames.
    #[arg(long)]
    cot_period: Option<usize>,
    /// Skip reasoning on frame 0.
    #[arg(long)]
    no_first_cot: bool,
    #[arg(long, default_value_t = 10.0)]
    rate_hz: f64,
    /// Hold the loop to --rate-hz with wall-clock sleeps.
    #[arg(long)]
    pace: bool,
}

impl ScheduleArgs {
    fn schedule(&self) -> InferenceSchedule {
        InferenceSchedule {
            cot_on_first_frame: !self.no_first_cot,
            cot_period: self.cot_period,
            rate_budget_hz: self.rate_hz,
            pacing: self.pace,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic episodes to JSONL files.
    Gen {
        #[arg(long)]
        scenario: String,
        /// Availability row, 0-based.
        #[arg(long)]
        variant: usize,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one graph JSON per frame of an episode.
    Graph {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// End-effector nodes only and object-to-end-effector edges only.
        #[arg(long)]
        paper_literal: bool,
    },
    /// Write seeded random weights.
    InitWeights {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the action expert on a directory of episodes.
    TrainExpert {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// Defaults to the configured rate.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        gnn: Option<PathBuf>,
        /// Use every Nth frame as a sample.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
        /// Loss CSV; defaults to the output path with a .csv extension.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train the reasoning head on labels generated from a directory of episodes.
    TrainCot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        gnn: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write the generated dataset as JSONL.
        #[arg(long)]
        dataset_out: Option<PathBuf>,
    },
    /// Run the hybrid-reasoning loop over an episode.
    Infer {
        #[arg(long)]
        episode: PathBuf,
        #[command(flatten)]
        models: ModelArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the loop and print per-stage statistics.
    Bench {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeat: usize,
        #[command(flatten)]
        models: ModelArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle suite.
    Selfcheck,
}

enum Failure {
    Pipeline(Error),
    Oracle(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Pipeline(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Pipeline(Error::Io(_) | Error::ArtifactLoad(_)) => 3,
            Failure::Pipeline(_) => 2,
            Failure::Oracle(_) => 4,
        }
    }

    fn report(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            code: u8,
            message: String,
        }
        let (kind, message) = match self {
            Failure::Pipeline(e @ (Error::Io(_) | Error::ArtifactLoad(_))) => ("io", e.to_string()),
            Failure::Pipeline(e) => ("validation", e.to_string()),
            Failure::Oracle(names) => ("oracle", format!("failed checks: {}", names.join(", "))),
        };
        serde_json::to_string(&Report { error: kind, code: self.code(), message }).unwrap_or_default()
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Error> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("plain data serializes");
    s.push('\n');
    s
}

/// Episode files are self-describing; their camera model wins over the config.
fn load_episode(path: &Path, cfg: &PipelineConfig) -> Result<(PipelineConfig, Episode), Error> {
    let (header, ep) = read_episode(path, cfg)?;
    let mut cfg = cfg.clone();
    cfg.intrinsics = header.intrinsics;
    cfg.extrinsics = header.extrinsics;
    Ok((cfg, ep))
}

fn load_episodes(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<Episode>, Error> {
    let files = episode_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDataset);
    }
    files.iter().map(|f| load_episode(f, cfg).map(|(_, e)| e)).collect()
}

fn load_models(cfg: &PipelineConfig, m: &ModelArgs, seed: u64) -> Result<Models, Error> {
    Ok(Models {
        gnn: m.gnn.as_deref().map_or_else(|| Ok(init_gnn(cfg, seed)), WeightsFile::load_gnn)?,
        expert: m.expert.as_deref().map_or_else(|| Ok(init_expert(cfg, seed)), WeightsFile::load_expert)?,
        cot: m.cot.as_deref().map_or_else(|| Ok(init_cot(cfg, seed)), WeightsFile::load_cot)?,
    })
}

fn log_path(out: &Path, log: Option<PathBuf>) -> PathBuf {
    log.unwrap_or_else(|| out.with_extension("csv"))
}

#[derive(Serialize)]
struct InferenceOutput<'a> {
    scenario: &'a str,
    variant: usize,
    seed: u64,
    frames: Vec<FrameOutput>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Gen { scenario, variant, episodes, frames, seed, out } => {
            let sc = scenario_by_name(&scenario)?;
            sc.variant(variant)?;
            let root = SeededRng::new(seed);
            for i in 0..episodes {
                let ep = gen_episode(&cfg, &sc, variant, frames, &root.derive(i as u64))?;
                let text = episode_to_jsonl(&ep, &cfg.intrinsics, &cfg.extrinsics);
                write_text(&out.join(format!("episode_{}_{variant}_{i:04}.jsonl", sc.name)), &text)?;
            }
        }
        Command::Graph { episode, out, paper_literal } => {
            let (mut cfg, ep) = load_episode(&episode, &cfg)?;
            if paper_literal {
                cfg.graph = poseflow::GraphOptions { depth_window: cfg.graph.depth_window, ..poseflow::GraphOptions::paper_literal() };
            }
            for (k, f) in ep.frames.iter().enumerate() {
                let (g, _) = build_graph(f, &cfg.intrinsics, &cfg.extrinsics, &cfg.chains, &cfg.graph)?;
                write_text(&out.join(format!("frame_{k:04}.json")), &(g.to_json() + "\n"))?;
            }
        }
        Command::InitWeights { kind, seed, out } => {
            let w = match kind {
                Kind::Gnn => WeightsFile::Gnn(init_gnn(&cfg, seed)),
                Kind::Expert => WeightsFile::Expert(init_expert(&cfg, seed)),
                Kind::Cot => WeightsFile::Cot(init_cot(&cfg, seed)),
            };
            write_text(&out, &(w.to_json() + "\n"))?;
        }
        Command::TrainExpert { data, steps, lr, seed, gnn, stride, out, log } => {
            let episodes = load_episodes(&data, &cfg)?;
            let gnn = gnn.as_deref().map_or_else(|| Ok(init_gnn(&cfg, seed)), WeightsFile::load_gnn)?;
            let samples = flow_samples(&cfg, &gnn, &episodes, stride)?;
            let mut expert = init_expert(&cfg, seed);
            if let Some(lr) = lr {
                expert.lr = lr;
            }
            let mut rng = SeededRng::new(seed).derive(1);
            let curve = train(&mut expert, &samples, steps, cfg.flow.batch_size, &mut rng)?;
            write_text(&out, &(WeightsFile::Expert(expert).to_json() + "\n"))?;
            let rows = curve.iter().enumerate().map(|(k, &l)| (k, [l]));
            write_text(&log_path(&out, log), &csv(&["step", "loss"], rows))?;
        }
        Command::TrainCot { data, epochs, lr, seed, gnn, out, log, dataset_out } => {
            let episodes = load_episodes(&data, &cfg)?;
            let gnn = gnn.as_deref().map_or_else(|| Ok(init_gnn(&cfg, seed)), WeightsFile::load_gnn)?;
            let mut art = init_cot(&cfg, seed);
            let records: Vec<CotRecord> = cot_records(&cfg, &gnn, &art.vocab, &episodes)?;
            if let Some(p) = dataset_out {
                write_text(&p, &cot_dataset_to_jsonl(&records))?;
            }
            let pairs: Vec<(Vec<f64>, Vec<usize>)> = records.into_iter().map(|r| (r.context, r.tokens)).collect();
            let initial = evaluate(&art.head, &pairs)?;
            let curve = train_cot_head(&mut art.head, &pairs, lr, epochs, &mut SeededRng::new(seed).derive(1))?;
            write_text(&out, &(WeightsFile::Cot(art).to_json() + "\n"))?;
            let rows = std::iter::once((0, [initial.sequence_loss, initial.token_loss]))
                .chain(curve.iter().map(|e| (e.epoch + 1, [e.sequence_loss, e.token_loss])));
            write_text(&log_path(&out, log), &csv(&["epoch", "sequence_loss", "token_loss"], rows))?;
        }
        Command::Infer { episode, models, schedule, seed, out } => {
            let (cfg, ep) = load_episode(&episode, &cfg)?;
            let models = load_models(&cfg, &models, seed)?;
            let (frames, _) = run_inference_loop(&cfg, &ep, &models, &schedule.schedule(), seed)?;
            let doc = InferenceOutput { scenario: &ep.scenario.name, variant: ep.variant, seed, frames };
            write_text(&out, &json_line(&doc))?;
        }
        Command::Bench { episode, repeat, models, schedule, seed, out } => {
            let (cfg, ep) = load_episode(&episode, &cfg)?;
            let models = load_models(&cfg, &models, seed)?;
            let report = bench(&cfg, &ep, &models, &schedule.schedule(), seed, repeat)?;
            match out {
                Some(p) => write_text(&p, &json_line(&report))?,
                None => print!("{}", json_line(&report)),
            }
        }
        Command::Selfcheck => {
            let results = run_selfcheck();
            for r in &results {
                print!("{}", json_line(r));
            }
            let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.name.to_string()).collect();
            if !failed.is_empty() {
                return Err(Failure::Oracle(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.report());
            ExitCode::from(f.code())
        }
    }
}

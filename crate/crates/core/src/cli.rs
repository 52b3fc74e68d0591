//! The `abstain` command line.
//!
//! Exit codes: 0 success, 1 internal failure, 2 invalid configuration,
//! 3 missing or malformed data, 4 incompatible model, 5 a failed verify suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::decode::{decode, DecodeError};
use crate::experiments::{
    star_pipeline, sweep_abstention, synth_dataset, synth_reviews, ExperimentError, Review, Sample, SentenceDecoder,
};
use crate::hexgraph::{HexGraph, PredictionSpace};
use crate::io::{self, IoError, ModelFile};
use crate::losses::{LossKind, LossSpec};
use crate::surrogate::{fit_ridge, SurrogateError, TrainedSurrogate};
use crate::verify::{self, Status, VerifyConfig};

const DEFAULT_OUT: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "abstain", version, about = "Hierarchical structured prediction with abstention")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Decode without abstention.
    #[arg(long, global = true)]
    pub no_abstention: bool,
    /// Use the strict hierarchy rule.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output directory; defaults to the configured one, then `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the graph and synthetic train/test data (and reviews, if configured).
    Gen,
    /// Fit the surrogate and write `model.json`.
    Train,
    /// Decode every row of an input file into `predictions.csv`.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Abstention curves over the `(K_A, K_Ac)` grid into `curves.csv`.
    Sweep {
        /// Reuse a trained model instead of fitting one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Star-rating MAE for the three sentence representations.
    Pipeline,
    /// Run the self-check suites; exits 5 if any fails.
    Verify,
}

#[derive(Debug)]
pub enum CliError {
    Internal(String),
    Config(String),
    Data(String),
    Model(String),
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Model(_) => 4,
            CliError::Verify(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Internal(m) | CliError::Config(m) | CliError::Data(m) | CliError::Model(m) | CliError::Verify(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(m) => CliError::Config(m),
            ConfigError::Data(m) => CliError::Data(m),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn surrogate_error(e: SurrogateError) -> CliError {
    match e {
        SurrogateError::Lambda(_) | SurrogateError::Gamma(_) => CliError::Config(e.to_string()),
        SurrogateError::Dimension { .. } | SurrogateError::Format(_) => CliError::Model(e.to_string()),
        SurrogateError::Empty | SurrogateError::NonFinite(_) | SurrogateError::Factorization => {
            CliError::Data(e.to_string())
        }
    }
}

fn decode_error(e: DecodeError) -> CliError {
    match e {
        DecodeError::Surrogate(s) => surrogate_error(s),
        DecodeError::Dimension { .. } => CliError::Model(e.to_string()),
        DecodeError::Graph(_) | DecodeError::Loss(_) | DecodeError::Infeasible => CliError::Config(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    }
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Surrogate(s) => surrogate_error(s),
        ExperimentError::Decode(d) => decode_error(d),
        ExperimentError::Dimension { .. } => CliError::Model(e.to_string()),
        ExperimentError::Empty(_) => CliError::Data(e.to_string()),
        ExperimentError::Graph(_) | ExperimentError::Loss(_) | ExperimentError::Config(_) => {
            CliError::Config(e.to_string())
        }
    }
}

/// Parses `std::env::args`, runs the command and reports errors on stderr.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

/// A loaded configuration with everything derived from it.
struct Context {
    cfg: RunConfig,
    raw: String,
    g: HexGraph,
    spec: LossSpec,
    space: PredictionSpace,
    out: PathBuf,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, CliError> {
        let (mut cfg, raw) = match &cli.config {
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new("."));
                let cfg = RunConfig::from_toml(&raw, base)
                    .map_err(|e| CliError::Config(format!("{}: {}", path.display(), msg(e))))?;
                (cfg, raw)
            }
            None => return Err(CliError::Config("--config is required".into())),
        };
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
            if let Some(s) = cfg.synthetic.as_mut() {
                s.seed = seed;
            }
        }
        cfg.validate()?;
        let g = cfg.build_graph()?;
        let spec = cfg.build_spec(&g)?;
        let space = cfg.build_space(&g, cli.strict, cli.no_abstention)?;
        if let Some(s) = &cfg.synthetic {
            s.validate(g.d()).map_err(experiment_error)?;
        }
        let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Ok(Self { cfg, raw, g, spec, space, out })
    }

    fn train_samples(&self) -> Result<Vec<Sample>, CliError> {
        if let Some(data) = &self.cfg.data {
            return check_labels(io::read_dataset(&data.train)?, self.g.d(), &data.train);
        }
        Ok(self.synthetic()?.0)
    }

    fn test_samples(&self) -> Result<Vec<Sample>, CliError> {
        if let Some(test) = self.cfg.data.as_ref().and_then(|d| d.test.as_ref()) {
            return check_labels(io::read_dataset(test)?, self.g.d(), test);
        }
        Ok(self.synthetic()?.1)
    }

    fn synthetic(&self) -> Result<(Vec<Sample>, Vec<Sample>), CliError> {
        let s = self
            .cfg
            .synthetic
            .as_ref()
            .ok_or_else(|| CliError::Config("no [data] files and no [synthetic] section".into()))?;
        synth_dataset(&self.g, s).map_err(experiment_error)
    }

    fn fit(&self, samples: &[Sample]) -> Result<TrainedSurrogate, CliError> {
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
        let psi = samples
            .iter()
            .map(|s| self.spec.psi_wa(&s.y))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(e.to_string()))?;
        if xs.is_empty() {
            return Err(CliError::Data("training set is empty".into()));
        }
        fit_ridge(self.cfg.kernel, &xs, &psi, self.cfg.lambda).map_err(surrogate_error)
    }

    fn load_model(&self, path: &Path) -> Result<TrainedSurrogate, CliError> {
        let file = ModelFile::read(path).map_err(|e| match e {
            IoError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Model(e.to_string()),
        })?;
        let kind = self.cfg.loss.kind;
        if file.loss != kind || file.d != self.g.d() || file.q != self.spec.q() {
            return Err(CliError::Model(format!(
                "{}: model is for {} with d={} q={}, configuration has {} with d={} q={}",
                path.display(),
                file.loss.name(),
                file.d,
                file.q,
                kind.name(),
                self.g.d(),
                self.spec.q()
            )));
        }
        let model = TrainedSurrogate::from_dump(&file.model).map_err(|e| CliError::Model(e.to_string()))?;
        if model.q() != self.spec.q() {
            return Err(CliError::Model(format!("{}: model output size {} != {}", path.display(), model.q(), self.spec.q())));
        }
        Ok(model)
    }

    /// The configuration text, echoed into every output directory.
    fn echo_config(&self) -> Result<(), CliError> {
        write(&self.out.join("config.toml"), &self.raw)
    }
}

fn msg(e: ConfigError) -> String {
    match e {
        ConfigError::Invalid(m) | ConfigError::Data(m) => m,
    }
}

fn check_labels(samples: Vec<Sample>, d: usize, path: &Path) -> Result<Vec<Sample>, CliError> {
    if let Some(s) = samples.iter().find(|s| s.y.len() != d) {
        return Err(CliError::Data(format!("{}: {} labels per row, graph has {d} nodes", path.display(), s.y.len())));
    }
    Ok(samples)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    io::write_atomic(path, contents).map_err(|e| CliError::Internal(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match &cli.command {
        Command::Verify => run_verify(cli),
        Command::Gen => run_gen(cli),
        Command::Train => run_train(cli),
        Command::Decode { model, input } => run_decode(cli, model, input),
        Command::Sweep { model } => run_sweep(cli, model.as_deref()),
        Command::Pipeline => run_pipeline(cli),
    }
}

fn run_verify(cli: &Cli) -> Result<(), CliError> {
    let ctx = match &cli.config {
        Some(_) => Some(Context::load(cli)?),
        None => None,
    };
    let (vcfg, cap, seed, out) = match &ctx {
        Some(ctx) => (ctx.cfg.verify.clone(), ctx.cfg.caps.prediction_space, ctx.cfg.seed, ctx.out.clone()),
        None => (
            VerifyConfig::default(),
            crate::hexgraph::DEFAULT_PREDICTION_SPACE_CAP,
            cli.seed.unwrap_or(0),
            cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        ),
    };
    let outcomes = verify::run_all(&vcfg, cap, seed);
    let report = verify::render_report(&outcomes);
    print!("{report}");
    if let Some(ctx) = &ctx {
        ctx.echo_config()?;
    }
    write(&out.join("verify_report.txt"), &report)?;
    let failed: Vec<&str> = outcomes.iter().filter(|o| o.status == Status::Fail).map(|o| o.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!("failed suites: {}", failed.join(", "))))
    }
}

fn run_gen(cli: &Cli) -> Result<(), CliError> {
    let ctx = Context::load(cli)?;
    let (train, test) = ctx.synthetic()?;
    let reviews = match &ctx.cfg.pipeline {
        Some(_) => Some(reviews(&ctx)?),
        None => None,
    };
    ctx.echo_config()?;
    write(&ctx.out.join("graph.txt"), &ctx.g.to_text())?;
    write(&ctx.out.join("train.txt"), &io::format_dataset(&train))?;
    write(&ctx.out.join("test.txt"), &io::format_dataset(&test))?;
    if let Some((train_r, test_r)) = reviews {
        for (name, set) in [("train", &train_r), ("test", &test_r)] {
            let (sentences, ratings) = io::format_reviews(set);
            write(&ctx.out.join(format!("reviews_{name}.txt")), &sentences)?;
            write(&ctx.out.join(format!("ratings_{name}.csv")), &ratings)?;
        }
    }
    println!("wrote {} train and {} test samples to {}", train.len(), test.len(), ctx.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    loss: LossKind,
    d: usize,
    q: usize,
    n: usize,
    m: usize,
    lambda: f64,
    mean_training_loss: f64,
}

fn run_train(cli: &Cli) -> Result<(), CliError> {
    let ctx = Context::load(cli)?;
    let samples = ctx.train_samples()?;
    let model = ctx.fit(&samples)?;
    let file = ModelFile { loss: ctx.cfg.loss.kind, d: ctx.g.d(), q: model.q(), model: model.to_dump() };
    let summary = TrainSummary {
        loss: file.loss,
        d: file.d,
        q: file.q,
        n: model.n(),
        m: model.m(),
        lambda: ctx.cfg.lambda,
        mean_training_loss: model.training_loss(),
    };
    ctx.echo_config()?;
    write(&ctx.out.join("model.json"), &file.to_json())?;
    write(&ctx.out.join("train_summary.json"), &to_json(&summary))?;
    println!("trained on {} samples (q = {}); model written to {}", summary.n, summary.q, ctx.out.join("model.json").display());
    Ok(())
}

fn run_decode(cli: &Cli, model_path: &Path, input: &Path) -> Result<(), CliError> {
    let ctx = Context::load(cli)?;
    let model = ctx.load_model(model_path)?;
    let text = io::read_to_string(input)?;
    let rows = io::parse_rows(input, &text, false)?;
    if rows[0].0.len() != model.m() {
        return Err(CliError::Model(format!(
            "{}: inputs have {} features, model expects {}",
            input.display(),
            rows[0].0.len(),
            model.m()
        )));
    }
    let reports = rows
        .iter()
        .map(|(x, _)| decode(&model, &ctx.spec, &ctx.g, x, &ctx.space))
        .collect::<Result<Vec<_>, _>>()
        .map_err(decode_error)?;
    let csv = io::format_predictions(&reports);
    ctx.echo_config()?;
    write(&ctx.out.join("predictions.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn run_sweep(cli: &Cli, model_path: Option<&Path>) -> Result<(), CliError> {
    let ctx = Context::load(cli)?;
    if ctx.cfg.loss.kind != LossKind::HaLoss {
        return Err(CliError::Config(format!("sweep needs loss.kind = \"ha_loss\", got \"{}\"", ctx.cfg.loss.kind.name())));
    }
    let model = match model_path {
        Some(p) => ctx.load_model(p)?,
        None => ctx.fit(&ctx.train_samples()?)?,
    };
    let test = ctx.test_samples()?;
    let c = ctx.cfg.weights(&ctx.g)?;
    let result = sweep_abstention(&model, &ctx.g, &c, &test, &ctx.cfg.sweep, &ctx.space).map_err(experiment_error)?;
    let csv = result.to_csv();
    ctx.echo_config()?;
    write(&ctx.out.join("curves.csv"), &csv)?;
    write(&ctx.out.join("sweep_summary.json"), &to_json(&result))?;
    print!("{csv}");
    Ok(())
}

fn reviews(ctx: &Context) -> Result<(Vec<Review>, Vec<Review>), CliError> {
    let p = ctx.cfg.pipeline.as_ref().ok_or_else(|| CliError::Config("no [pipeline] section".into()))?;
    if let (Some(ts), Some(tr), Some(es), Some(er)) = (&p.train_sentences, &p.train_ratings, &p.test_sentences, &p.test_ratings)
    {
        let train = io::read_reviews(ts, tr)?;
        let test = io::read_reviews(es, er)?;
        for (r, path) in train.iter().map(|r| (r, ts)).chain(test.iter().map(|r| (r, es))) {
            check_labels(r.sentences.clone(), ctx.g.d(), path)?;
        }
        return Ok((train, test));
    }
    let tree = ctx
        .cfg
        .graph
        .opinion_tree
        .as_ref()
        .ok_or_else(|| CliError::Config("synthetic reviews need graph.opinion_tree".into()))?;
    let sentence = ctx
        .cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("synthetic reviews need a [synthetic] section".into()))?;
    p.reviews.validate(tree.aspects).map_err(experiment_error)?;
    synth_reviews(&ctx.g, tree.aspects, tree.polarities, sentence, &p.reviews).map_err(experiment_error)
}

fn run_pipeline(cli: &Cli) -> Result<(), CliError> {
    let ctx = Context::load(cli)?;
    let rating_lambda = ctx
        .cfg
        .pipeline
        .as_ref()
        .ok_or_else(|| CliError::Config("no [pipeline] section".into()))?
        .rating_lambda;
    let (train, test) = reviews(&ctx)?;
    let sentences: Vec<Sample> = train.iter().flat_map(|r| r.sentences.iter().cloned()).collect();
    let model = ctx.fit(&sentences)?;
    let decoder = SentenceDecoder { model: &model, spec: &ctx.spec, g: &ctx.g, space: &ctx.space };
    let report = star_pipeline(&train, &test, &decoder, rating_lambda).map_err(experiment_error)?;
    let json = to_json(&report);
    ctx.echo_config()?;
    write(&ctx.out.join("pipeline.json"), &json)?;
    println!(
        "macro MAE: oracle {:.4}, predicted {:.4}, abstention-aware {:.4} (mean abstentions {:.3})",
        report.oracle.macro_mae, report.predicted.macro_mae, report.abstention_aware.macro_mae, report.mean_abstentions
    );
    Ok(())
}

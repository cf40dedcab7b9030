//! `topk`: evaluate losses, query optimal reports, scan consistency regions,
//! audit distributions, and run the sweep and training experiments.
//!
//! Exit codes: 0 success, 1 domain or validation failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use topk_surrogates::consistency::{self, Predicate, ScanInput};
use topk_surrogates::embeddings::{self, RepresentativeSet};
use topk_surrogates::error::Error;
use topk_surrogates::experiments::{self, emit_csv, write_csv, SweepConfig, TrainConfig};
use topk_surrogates::format_sig12;
use topk_surrogates::losses::{self, LossId};
use topk_surrogates::properties;
use topk_surrogates::simplex::{argmax_link, LabelSpace, ProbVector, ScoreVector, TopKSet};

#[derive(Parser)]
#[command(
    name = "topk",
    version,
    about = "Top-k losses, polyhedral surrogates, and their consistency experiments"
)]
struct Cli {
    /// Seed for randomized subcommands (region; overrides the config seed of
    /// sweep and train).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path for CSV-emitting subcommands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON experiment config for sweep and train.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// The three global flags, resolved per subcommand.
struct Globals {
    seed: Option<u64>,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one loss at one report and outcome.
    Eval(EvalArgs),
    /// Optimal reports of a loss under a label distribution.
    Prop(PropArgs),
    /// Scan a consistency predicate against the audit over many distributions.
    Region(RegionArgs),
    /// Audit one distribution: does surrogate minimization link consistently?
    Audit(AuditArgs),
    /// Exact risk/regret sweep over Dirichlet-drawn distributions (CSV out).
    Sweep(SweepArgs),
    /// Train linear models on each surrogate and report test top-k loss (CSV out).
    Train(TrainArgs),
}

#[derive(Args)]
struct SpaceArgs {
    /// Number of labels.
    #[arg(long)]
    n: usize,
    /// Report-set size.
    #[arg(long)]
    k: usize,
}

impl SpaceArgs {
    fn space(&self) -> Result<LabelSpace, Error> {
        LabelSpace::new(self.n, self.k)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// One of topk|l2|l3|l4|lk.
    #[arg(long)]
    loss: LossId,
    #[command(flatten)]
    space: SpaceArgs,
    /// Score vector, comma-separated decimals (surrogate losses).
    #[arg(long)]
    u: Option<String>,
    /// Label set, comma-separated 1-based indices (topk loss).
    #[arg(long)]
    set: Option<String>,
    /// Realized label, 1-based.
    #[arg(long)]
    y: usize,
}

#[derive(Args)]
struct PropArgs {
    #[arg(long)]
    loss: LossId,
    #[command(flatten)]
    space: SpaceArgs,
    /// Label distribution, comma-separated decimals.
    #[arg(long)]
    p: String,
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    loss: LossId,
    /// One of p2|p3|p4|none.
    #[arg(long)]
    predicate: Predicate,
    #[command(flatten)]
    space: SpaceArgs,
    /// Number of Dirichlet(1,...,1) samples to audit.
    #[arg(long, conflicts_with = "grid")]
    samples: Option<usize>,
    /// Audit the simplex lattice with this many steps instead of sampling.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    loss: LossId,
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long)]
    p: String,
}

#[derive(Args)]
struct SweepArgs {}

#[derive(Args)]
struct TrainArgs {}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("{what}: cannot parse {tok:?} as a number")))
        })
        .collect()
}

fn parse_labels(text: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("label set: cannot parse {tok:?} as an index")))
        })
        .collect()
}

/// Users may pass distributions that miss unit mass by rounding; renormalize
/// within 1e-6 with a warning, reject anything farther off.
fn parse_prob(text: &str, n: usize) -> Result<ProbVector, Error> {
    let values = parse_floats(text, "probability vector")?;
    if values.len() != n {
        return Err(Error::Domain(format!(
            "probability vector has {} entries, expected n={n}",
            values.len()
        )));
    }
    let (p, adjusted) = ProbVector::normalized(values, 1e-6)?;
    if adjusted {
        eprintln!("warning: probabilities renormalized onto the simplex");
    }
    Ok(p)
}

fn optima_json(reps: &RepresentativeSet, value: &properties::PropertyValue) -> serde_json::Value {
    let optima: Vec<serde_json::Value> = value
        .optima
        .iter()
        .map(|&i| {
            let entry = &reps.entries[i];
            json!({
                "report": entry.report(),
                "embed": entry.embed,
            })
        })
        .collect();
    json!(optima)
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let space = args.space.space()?;
    let value = match (args.loss, &args.u, &args.set) {
        (LossId::Topk, None, Some(set)) => {
            let set = TopKSet::new(parse_labels(set)?, space)?;
            losses::topk_loss(&set, args.y, space)?
        }
        (loss, Some(u), None) if loss.is_surrogate() => {
            let u = ScoreVector::new(parse_floats(u, "score vector")?)?;
            if u.len() != space.n() {
                return Err(Error::Domain(format!(
                    "score vector has {} entries, expected n={}",
                    u.len(),
                    space.n()
                )));
            }
            losses::surrogate_loss(loss, &u, args.y, space)?
        }
        (LossId::Topk, _, _) => {
            return Err(Error::Usage("topk takes --set, not --u".into()));
        }
        _ => {
            return Err(Error::Usage("surrogate losses take --u, not --set".into()));
        }
    };
    println!("{}", format_sig12(value));
    Ok(())
}

fn cmd_prop(args: PropArgs) -> Result<(), Error> {
    let space = args.space.space()?;
    let p = parse_prob(&args.p, space.n())?;
    let output = if args.loss == LossId::Topk {
        let sets = properties::prop_topk(&p, space)?;
        let min_value = losses::bayes_risk_topk(&p, space)?;
        json!({
            "loss": args.loss,
            "min_value": min_value,
            "optima": sets,
            "link": sets[0],
        })
    } else {
        let reps = embeddings::enumerate(args.loss, space)?;
        let value = properties::prop_over_reps(&reps, &p, properties::ARGMIN_TOL)?;
        let chosen = value
            .optima
            .iter()
            .map(|&i| &reps.entries[i].embed)
            .min_by(|a, b| a.lex_cmp(b))
            .expect("optima are non-empty");
        let link = argmax_link(chosen, space)?;
        json!({
            "loss": args.loss,
            "min_value": value.min_value,
            "optima": optima_json(&reps, &value),
            "link": link,
        })
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&output).expect("serializable")
    );
    Ok(())
}

fn cmd_region(args: RegionArgs, globals: &Globals) -> Result<(), Error> {
    let space = args.space.space()?;
    let input = match (args.samples, args.grid) {
        (Some(count), None) => ScanInput::Samples(count),
        (None, Some(resolution)) => ScanInput::Grid(resolution),
        (None, None) => ScanInput::Samples(1000),
        (Some(_), Some(_)) => unreachable!("clap rejects conflicting flags"),
    };
    let seed = globals.seed.unwrap_or(0);
    let (records, summary) =
        consistency::region_scan(args.loss, args.predicate, input, space, seed)?;
    match &globals.out {
        Some(path) => emit_csv(&records, path)?,
        None => write_csv(&records, std::io::stdout().lock())?,
    }
    eprintln!(
        "scanned {} distributions: predicate true on {}, link-consistent {}, implication rate {}",
        summary.total,
        summary.predicate_true,
        summary.link_consistent_count,
        summary
            .implication_rate
            .map(format_sig12)
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<(), Error> {
    let space = args.space.space()?;
    let p = parse_prob(&args.p, space.n())?;
    let verdict = consistency::audit(args.loss, space, &p)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&verdict).expect("serializable")
    );
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn require_out<'a>(globals: &'a Globals, what: &str) -> Result<&'a PathBuf, Error> {
    globals
        .out
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("{what} needs --out <file.csv>")))
}

fn cmd_sweep(globals: &Globals) -> Result<(), Error> {
    let out = require_out(globals, "sweep")?;
    let mut cfg: SweepConfig = match &globals.config {
        Some(path) => read_config(path)?,
        None => SweepConfig::default_sweep(),
    };
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let records = experiments::regret_sweep(&cfg)?;
    emit_csv(&records, out)?;
    eprintln!(
        "wrote {} rows ({} alphas x {} losses) to {}",
        records.len(),
        cfg.alphas.len(),
        cfg.losses.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(globals: &Globals) -> Result<(), Error> {
    let out = require_out(globals, "train")?;
    let mut cfg: TrainConfig = match &globals.config {
        Some(path) => read_config(path)?,
        None => TrainConfig::default_train(),
    };
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let outcome = experiments::train_and_eval(&cfg)?;
    emit_csv(&outcome.records, out)?;
    let summary: Vec<String> = outcome
        .final_test
        .iter()
        .map(|(loss, value)| format!("{loss}={}", format_sig12(*value)))
        .collect();
    eprintln!(
        "wrote {} rows to {}; final test top-k loss: {}",
        outcome.records.len(),
        out.display(),
        summary.join(" ")
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let globals = Globals {
        seed: cli.seed,
        out: cli.out,
        config: cli.config,
    };
    match cli.command {
        Command::Eval(args) => cmd_eval(args),
        Command::Prop(args) => cmd_prop(args),
        Command::Region(args) => cmd_region(args, &globals),
        Command::Audit(args) => cmd_audit(args),
        Command::Sweep(SweepArgs {}) => cmd_sweep(&globals),
        Command::Train(TrainArgs {}) => cmd_train(&globals),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

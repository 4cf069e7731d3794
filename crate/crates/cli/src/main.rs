use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgAction, Args, Parser, Subcommand};

use ford::backend::AgentParams;
use ford::campaign::{load_campaign, run_configured, CampaignResult};
use ford::config::CampaignConfig;
use ford::dataset::{read_examples, validate_dataset, Dataset, FormatHint};
use ford::eval::run_eval;
use ford::prompting::PromptingMode;
use ford::report::{emit_report, ReportStyle};
use ford::simulate::{run_simulation, Simulation};

/// Formal multi-model debate: evaluation, debate campaigns, simulation and reports.
#[derive(Debug, Parser)]
#[command(name = "ford", version)]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

/// Settings that override the configuration file. Flags win over the
/// environment, which wins over the file.
#[derive(Debug, Args)]
struct Globals {
    /// Campaign configuration file (TOML).
    #[arg(long, global = true, env = "FORD_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "FORD_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Campaign seed, required for synthetic agents.
    #[arg(long, global = true, env = "FORD_SEED")]
    seed: Option<u64>,
    /// Serve every request from the cache and fail on a miss.
    #[arg(long, global = true, env = "FORD_REPLAY_ONLY", action = ArgAction::SetTrue)]
    replay_only: bool,
    /// Maximum number of examples in flight.
    #[arg(long, global = true, env = "FORD_MAX_IN_FLIGHT")]
    max_in_flight: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a dataset file and report every violation.
    Validate {
        data: PathBuf,
    },
    /// Step-1 answers of one profile, scored against gold.
    Eval {
        /// Profile name from the configuration.
        #[arg(long)]
        profile: String,
        #[arg(long, value_parser = parse_mode, default_value = "zero_shot_chat")]
        mode: PromptingMode,
        /// Dataset overriding the configured one.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run or resume the debate campaign of the configuration.
    Debate,
    /// Synthetic campaign over a generated two-option dataset.
    Simulate {
        /// Agent parameters as CAPABILITY,STUBBORNNESS, in speaking order.
        #[arg(long = "agent", value_parser = parse_agent, required = true, num_args = 1)]
        agents: Vec<AgentParams>,
        #[arg(long, default_value_t = 1000)]
        examples: usize,
        #[arg(long, default_value_t = 6)]
        max_rounds: usize,
    },
    /// Regenerate reports from a campaign directory.
    Report {
        campaign_dir: PathBuf,
        #[arg(long, value_parser = parse_style)]
        style: ReportStyle,
        /// Where to write; defaults to `reports` inside the campaign directory.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<PromptingMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown mode {s:?}, expected zero_shot_chat or few_shot_cot_text"))
}

fn parse_style(s: &str) -> Result<ReportStyle, String> {
    s.parse().map_err(|e: ford::report::ReportError| e.to_string())
}

fn parse_agent(s: &str) -> Result<AgentParams, String> {
    let (c, st) = s.split_once(',').ok_or("expected CAPABILITY,STUBBORNNESS")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let p = AgentParams::new(num(c)?, num(st)?, 0);
    p.validate()?;
    Ok(p)
}

enum Failure {
    /// Bad invocation, exit 2.
    Usage(String),
    /// The work itself failed, exit 1.
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

type Outcome = Result<(), Failure>;

impl Globals {
    /// The configuration file merged with environment and flags.
    fn campaign_config(&self) -> Result<CampaignConfig, Failure> {
        let path = self.config.as_deref().ok_or_else(|| Failure::Usage("this command needs --config".into()))?;
        let mut cfg = CampaignConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(d) = &self.out_dir {
            cfg.out_dir = Some(d.clone());
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.replay_only {
            cfg.replay_only = true;
        }
        if let Some(n) = self.max_in_flight {
            cfg.max_in_flight = n;
        }
        if cfg.max_in_flight == 0 {
            return Err(Failure::Usage("--max-in-flight must be at least 1".into()));
        }
        Ok(cfg)
    }
}

fn validate(data: &Path) -> Outcome {
    let records = read_examples(data, FormatHint::Auto).map_err(|e| anyhow!("{}: {e}", data.display()))?;
    let lines: Vec<usize> = records.iter().map(|(l, _)| *l).collect();
    let declared = records.first().map(|(_, e)| e.option_count()).unwrap_or(0);
    let name = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ds = Dataset { name, examples: records.into_iter().map(|(_, e)| e).collect(), declared_option_count: declared };
    let report = validate_dataset(&ds);
    let histogram: Vec<String> = report.option_histogram.iter().map(|(k, v)| format!("{v} with {k} options")).collect();
    println!("{}: {} examples ({})", data.display(), report.count, histogram.join(", "));
    for v in &report.violations {
        match lines.get(v.position.wrapping_sub(1)) {
            Some(line) => println!("line {line} ({}): {}", v.example_id, v.message),
            None => println!("{}: {}", data.display(), v.message),
        }
    }
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Domain(anyhow!("{} violations", report.violations.len())))
    }
}

fn eval(g: &Globals, profile: &str, mode: PromptingMode, dataset: Option<&Path>) -> Outcome {
    let mut cfg = g.campaign_config()?;
    if let Some(d) = dataset {
        cfg.dataset = d.to_path_buf();
    }
    let dir = match &g.out_dir {
        Some(d) => d.clone(),
        None => cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs")).join(format!("eval-{profile}-{}", mode_name(mode))),
    };
    let res = run_eval(&cfg, profile, mode, &dir)?;
    let s = &res.summary;
    println!("predictions: {}", res.predictions_path.display());
    println!("accuracy {}% ({} of {}, {} unparsed)", s.accuracy, s.correct, s.examples, s.unparsed);
    Ok(())
}

fn mode_name(mode: PromptingMode) -> String {
    serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn report_failures(res: &CampaignResult) -> Outcome {
    for (id, e) in &res.failures {
        eprintln!("example {id} failed: {e}");
    }
    if res.partial() {
        Err(Failure::Domain(anyhow!("{} of {} examples failed", res.failures.len(), res.records.len())))
    } else {
        Ok(())
    }
}

fn debate(g: &Globals) -> Outcome {
    let cfg = g.campaign_config()?;
    let dir = match &cfg.out_dir {
        Some(d) => d.clone(),
        None => {
            let digest = ford::dataset::file_digest(&cfg.dataset)?;
            PathBuf::from("runs").join(cfg.campaign_id(&digest))
        }
    };
    let res = run_configured(&cfg, &dir)?;
    let paths = emit_report(&res, ReportStyle::SummaryTable, &dir.join(ford::store::REPORTS))?;
    println!("campaign {} in {}", res.campaign_id, dir.display());
    for p in paths {
        println!("{}", p.display());
    }
    report_failures(&res)
}

fn simulate(g: &Globals, agents: Vec<AgentParams>, examples: usize, max_rounds: usize) -> Outcome {
    let seed = g.seed.ok_or_else(|| Failure::Usage("simulate needs --seed".into()))?;
    let sim = Simulation { agents, examples, seed, max_rounds, max_in_flight: g.max_in_flight.unwrap_or(4) };
    sim.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs").join(format!("simulate-{seed}")));
    let run = run_simulation(&sim, &dir)?;
    println!("{}", serde_json::to_string_pretty(&run.summary).expect("summary serializes"));
    for p in &run.reports {
        eprintln!("wrote {}", p.display());
    }
    report_failures(&run.result)
}

fn report(dir: &Path, style: ReportStyle, dest: Option<&Path>) -> Outcome {
    let res = load_campaign(dir).with_context(|| format!("loading campaign {}", dir.display()))?;
    let dest = dest.map(Path::to_path_buf).unwrap_or_else(|| dir.join(ford::store::REPORTS));
    for p in emit_report(&res, style, &dest)? {
        println!("{}", p.display());
    }
    if res.partial() {
        println!("partial: {} of {} examples incomplete", res.failures.len(), res.records.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.globals;
    let outcome = match cli.command {
        Command::Validate { data } => validate(&data),
        Command::Eval { profile, mode, dataset } => eval(g, &profile, mode, dataset.as_deref()),
        Command::Debate => debate(g),
        Command::Simulate { agents, examples, max_rounds } => simulate(g, agents, examples, max_rounds),
        Command::Report { campaign_dir, style, dest } => report(&campaign_dir, style, dest.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tailor::backend::{self, GenerationBackend, MockBackend};
use tailor::config::{BackendConfig, EngineConfig};
use tailor::engine::{Engine, EngineOptions, ExplainRequest};
use tailor::pipeline::{self, ReferencePlanner};
use tailor::records::{ContextChange, FeedbackInput, PlanIngest, ProblemIngest, Trigger};
use tailor::scenario::{self, Script};
use tailor::{json, server};
use tailor_core::{ObservationVector, OptionId, PlanList, PlannerInput, ProfileId, Verdict};

type CliResult = Result<(), Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "tailor", version, about = "Adaptive explanation engine for task plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EngineArgs {
    /// Engine configuration (engine.json).
    #[arg(long)]
    config: PathBuf,
    /// Directory holding the event logs; omit for an in-memory engine.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Cross-check every solve with value iteration.
    #[arg(long)]
    verify: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Re-synthesise policies as soon as a trigger arrives.
        #[arg(long)]
        eager: bool,
    },
    /// Print the current policy of a profile.
    Solve {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        profile: Option<u32>,
    },
    /// Generate one explanation.
    Explain {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        profile: Option<u32>,
        /// Predicted levels, e.g. `3,3`.
        #[arg(long)]
        obs: Option<ObservationVector>,
        /// Problem description to ingest first.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Planner input to ingest first; plans are computed with the reference planner.
        #[arg(long)]
        planner_input: Option<PathBuf>,
        /// Plan list for `--planner-input`, instead of planning.
        #[arg(long, requires = "planner_input")]
        plans: Option<PathBuf>,
        #[arg(long)]
        plan_id: Option<String>,
    },
    /// Record an accept or reject verdict.
    Feedback {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum)]
        verdict: VerdictArg,
        /// Explanation the verdict is about.
        #[arg(long, conflicts_with_all = ["profile", "shown"])]
        explanation: Option<String>,
        #[arg(long, requires = "shown")]
        profile: Option<u32>,
        /// Shown options, e.g. `p1_q1,p2_q1,p3_q2`.
        #[arg(long, value_delimiter = ',')]
        shown: Vec<OptionId>,
    },
    /// Print per-profile acceptance counts.
    Counts {
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Replay a trigger script and print the policy timeline.
    Scenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the model of a profile in the PRISM language.
    ExportPrism {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        profile: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Translate a natural-language problem into a planner input.
    GenProblem {
        #[arg(long)]
        h1: PathBuf,
        #[arg(long)]
        example: PathBuf,
        #[arg(long)]
        instructions: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendArg::Mock)]
        backend: BackendArg,
        /// Configuration supplying the HTTP backend settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a planner input is parsable, processable and feasible.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Compute the plan list of a planner input.
    Plan {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerdictArg {
    Accepted,
    Rejected,
}

impl From<VerdictArg> for Verdict {
    fn from(v: VerdictArg) -> Self {
        match v {
            VerdictArg::Accepted => Verdict::Accepted,
            VerdictArg::Rejected => Verdict::Rejected,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

fn read(path: &Path) -> Result<String, Box<dyn std::error::Error>> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn open_engine(args: &EngineArgs, eager: bool) -> Result<Engine, Box<dyn std::error::Error>> {
    let config = EngineConfig::load(&args.config)?;
    let backend: Arc<dyn GenerationBackend> = Arc::from(backend::from_config(&config.backend));
    let options = EngineOptions { eager, verify: args.verify, ..EngineOptions::default() };
    Ok(match &args.data {
        Some(dir) => Engine::open(config, dir, backend, options)?,
        None => Engine::new(config, backend, options)?,
    })
}

fn profile_or_active(engine: &Engine, profile: Option<u32>) -> ProfileId {
    profile.map(ProfileId).unwrap_or_else(|| engine.active_profile())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Serve { engine, addr, eager } => {
            let engine = open_engine(&engine, eager)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(server::serve(engine, &addr))?;
        }
        Command::Solve { engine, profile } => {
            let mut engine = open_engine(&engine, false)?;
            let profile = profile_or_active(&engine, profile);
            let policy = engine.policy(profile)?;
            print!("{}", json::canonical(&policy.snapshot));
        }
        Command::Explain { engine, profile, obs, problem, planner_input, plans, plan_id } => {
            let mut engine = open_engine(&engine, false)?;
            if let Some(path) = problem {
                let text = read(&path)?;
                engine.handle(Trigger::Context(ContextChange::Problem(ProblemIngest { id: None, text })))?;
            }
            let mut plan_id = plan_id;
            if let Some(path) = planner_input {
                let planner_input: PlannerInput = json::parse(&read(&path)?)?;
                let plans: Option<PlanList> = match plans {
                    Some(p) => Some(json::parse(&read(&p)?)?),
                    None => None,
                };
                let ingest = PlanIngest { id: None, problem_id: None, planner_input, plans };
                let outcome = engine.handle(Trigger::Context(ContextChange::Plan(ingest)))?;
                plan_id = plan_id.or(outcome.stored_id);
            }
            let request = ExplainRequest { profile: profile.map(ProfileId), observation: obs, plan_id };
            let record = engine.explain(&request)?;
            print!("{}", json::canonical(&record));
        }
        Command::Feedback { engine, verdict, explanation, profile, shown } => {
            let mut engine = open_engine(&engine, false)?;
            let event = match explanation {
                Some(id) => engine.feedback_on(&id, verdict.into())?,
                None => {
                    let input = FeedbackInput {
                        profile: profile_or_active(&engine, profile),
                        shown,
                        verdict: verdict.into(),
                        explanation_id: None,
                    };
                    engine.handle(Trigger::Feedback(input))?.feedback.expect("feedback outcome carries its event")
                }
            };
            print!("{}", json::canonical(&event));
        }
        Command::Counts { engine } => {
            let engine = open_engine(&engine, false)?;
            print!("{}", json::canonical(&engine.counts().counts));
        }
        Command::Scenario { config, script, out } => {
            let config = EngineConfig::load(&config)?;
            let script: Script = json::parse(&read(&script)?)?;
            let timeline = scenario::run_scenario(config, &script)?;
            write_or_print(out.as_deref(), &json::canonical(&timeline))?;
        }
        Command::ExportPrism { engine, profile, out } => {
            let engine = open_engine(&engine, false)?;
            let profile = profile_or_active(&engine, profile);
            write_or_print(out.as_deref(), &engine.export_prism(profile)?)?;
        }
        Command::GenProblem { h1, example, instructions, backend, config, out } => {
            let problem = read(&h1)?;
            let example = read(&example)?;
            let instructions = read(&instructions)?;
            let generator: Box<dyn GenerationBackend> = match backend {
                // Offline runs echo the example so the pipeline is exercised end to end.
                BackendArg::Mock => Box::new(MockBackend::canned(example.clone())),
                BackendArg::Http => {
                    let path = config.ok_or("--backend http needs --config with an http backend")?;
                    let config = EngineConfig::load(&path)?;
                    if !matches!(config.backend, BackendConfig::Http { .. }) {
                        return Err(format!("{}: backend is not http", path.display()).into());
                    }
                    backend::from_config(&config.backend)
                }
            };
            let generated =
                pipeline::generate_planner_input(&problem, &example, &instructions, generator.as_ref(), &ReferencePlanner)?;
            write_or_print(out.as_deref(), &json::canonical(&generated))?;
        }
        Command::Validate { input } => {
            let (_, report) = pipeline::validate(&read(&input)?, &ReferencePlanner);
            print!("{}", json::canonical(&report));
            if !report.feasible {
                return Err("planner input rejected".into());
            }
        }
        Command::Plan { input, out } => {
            let input: PlannerInput = json::parse(&read(&input)?)?;
            let plans = PlanList { version: 1, plans: tailor_core::planner::reference_plan(&input)? };
            write_or_print(out.as_deref(), &json::canonical(&plans))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

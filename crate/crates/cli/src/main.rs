//! `senscomp`: batch and scripting front end to the composition engine.
//!
//! Exit status is 0 on success, 1 on a domain error (invalid KB, unknown
//! task, nothing to rank, ...) and 2 on a usage error. A task without
//! solutions is not an error for `compose`: it prints recommendations.

mod describe;
mod render;

use std::io::{IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{ArgGroup, Parser, Subcommand};
use senscomp_core::composer::{compose, ComposeLimits};
use senscomp_core::context::discover;
use senscomp_core::cost::{parse_weights, rank, WeightVector};
use senscomp_core::kb::{from_document, load_kb, parse_document, resolve_kind, validate_kb, KindRef};
use senscomp_core::qa::{matching_tasks, parse_answer, QaSession};
use senscomp_core::{emit_plan, generate_plan, ConstraintSet, KnowledgeBase, Solution};

#[derive(Parser)]
#[command(name = "senscomp", version, about = "Discover, compose and rank sensor configurations")]
struct Cli {
    /// Machine readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct LimitArgs {
    #[arg(long, default_value_t = ComposeLimits::default().max_solutions)]
    max_solutions: usize,
    #[arg(long, default_value_t = ComposeLimits::default().max_depth)]
    max_depth: usize,
    /// Let each consumer pick its own producer instead of sharing one per kind.
    #[arg(long)]
    unshared: bool,
}

impl LimitArgs {
    fn limits(&self) -> ComposeLimits {
        ComposeLimits {
            max_solutions: self.max_solutions,
            max_depth: self.max_depth,
            allow_shared_subtrees: !self.unshared,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a knowledge base file; exits 1 when it has violations.
    Validate { kb: PathBuf },
    /// List the tasks matching a set of answers.
    Tasks {
        kb: PathBuf,
        /// `question=answer`, repeatable.
        #[arg(long = "answer", value_name = "Q=A", value_parser = answer_arg)]
        answers: Vec<(String, String)>,
    },
    /// Enumerate the solutions for a task, or recommend sensors when there are none.
    Compose {
        kb: PathBuf,
        #[arg(long)]
        task: String,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// List the kinds the active sensors can deliver, directly or through DPCs.
    Context { kb: PathBuf },
    /// Score the solutions for a task under attribute weights.
    Rank {
        kb: PathBuf,
        #[arg(long)]
        task: String,
        /// `name=weight,...`; equal weights when omitted.
        #[arg(long, value_parser = weights_arg)]
        weights: Option<WeightVector>,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Emit the deployment plan for one solution.
    Plan {
        kb: PathBuf,
        #[arg(long)]
        task: String,
        /// Solution hash or a unique prefix of it.
        #[arg(long)]
        solution: String,
        /// Extra kind label to add to the output stream, repeatable.
        #[arg(long = "extra", value_name = "KIND")]
        extras: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Describe a new entity at the prompt and add it to the KB file.
    #[command(group(ArgGroup::new("entity").required(true)))]
    Describe {
        kb: PathBuf,
        #[arg(long, group = "entity")]
        sensor: bool,
        #[arg(long, group = "entity")]
        dpc: bool,
        #[arg(long, group = "entity")]
        task: bool,
        #[arg(long, group = "entity")]
        question: bool,
        /// Write the updated KB here instead of overwriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        kb: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Idle session lifetime in seconds.
        #[arg(long, default_value_t = 3600)]
        session_ttl: u64,
        #[arg(long, env = "SENSCOMP_TOKEN", hide_env_values = true)]
        token: Option<String>,
        /// Built web UI to serve for non-API paths.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
    },
}

fn answer_arg(s: &str) -> Result<(String, String), String> {
    parse_answer(s).map_err(|e| e.to_string())
}

fn weights_arg(s: &str) -> Result<WeightVector, String> {
    parse_weights(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s
}

fn load(path: &Path) -> Result<KnowledgeBase> {
    load_kb(path).with_context(|| format!("loading {}", path.display()))
}

fn composed(kb: &KnowledgeBase, task: &str, limits: &LimitArgs) -> Result<senscomp_core::ComposeOutcome> {
    Ok(compose(kb, task, &limits.limits())?)
}

fn pick<'a>(solutions: &'a [Solution], prefix: &str) -> Result<&'a Solution> {
    let hits: Vec<_> = solutions
        .iter()
        .filter(|s| s.canonical_hash().starts_with(prefix))
        .collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => bail!("no solution hash starts with `{prefix}`"),
        _ => bail!("`{prefix}` matches {} solutions; give more digits", hits.len()),
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Validate { kb } => {
            let text = std::fs::read_to_string(kb).with_context(|| format!("reading {}", kb.display()))?;
            let kb = from_document(parse_document(&text)?);
            let report = validate_kb(&kb);
            emit(&if cli.json {
                json(&render::ValidationView::new(&kb, &report))
            } else {
                render::validation(&kb, &report)
            })?;
            Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Tasks { kb, answers } => {
            let kb = load(kb)?;
            let constraints = ConstraintSet::from_pairs(answers.iter().cloned())?;
            let tasks = matching_tasks(&kb, &constraints)?;
            let mut session = QaSession::new(std::sync::Arc::new(kb.clone()));
            for (q, a) in answers {
                session = session.apply_answer(q, a)?;
            }
            let questions = session.available_questions();
            emit(&if cli.json {
                json(&serde_json::json!({
                    "constraints": constraints,
                    "tasks": tasks,
                    "questions": questions,
                }))
            } else {
                render::tasks(&tasks, &questions)
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compose { kb, task, limits } => {
            let kb = load(kb)?;
            let outcome = composed(&kb, task, limits)?;
            emit(&if cli.json {
                json(&render::ComposeView::new(task, &outcome))
            } else {
                render::composition(task, &outcome)
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Context { kb } => {
            let kb = load(kb)?;
            let entries = discover(&kb).entries();
            emit(&if cli.json {
                json(&serde_json::json!({ "available": entries }))
            } else {
                render::context(&entries)
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Rank {
            kb,
            task,
            weights,
            limits,
        } => {
            let kb = load(kb)?;
            let outcome = composed(&kb, task, limits)?;
            if outcome.solutions.is_empty() {
                bail!("task `{task}` has no solutions to rank; run `compose` for recommendations");
            }
            let weights = weights.clone().unwrap_or_else(|| WeightVector::equal(&kb));
            let ranking = rank(&kb, &outcome.solutions, &weights)?;
            emit(&if cli.json {
                json(&ranking)
            } else {
                render::ranking(&ranking, &outcome.solutions)
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan {
            kb,
            task,
            solution,
            extras,
            out,
            limits,
        } => {
            let kb = load(kb)?;
            let outcome = composed(&kb, task, limits)?;
            let chosen = pick(&outcome.solutions, solution)?;
            let extras = extras
                .iter()
                .map(|label| {
                    resolve_kind(&kb, &KindRef::Label(label.clone()))
                        .ok_or_else(|| anyhow!("unknown kind `{label}`"))
                })
                .collect::<Result<Vec<_>>>()?;
            let text = emit_plan(&generate_plan(&kb, chosen, &extras)?);
            match out {
                Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
                None => emit(&text)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Describe {
            kb: path,
            sensor,
            dpc,
            task,
            question: _,
            out,
        } => {
            let kb = load(path)?;
            let kind = if *sensor {
                describe::Kind::Sensor
            } else if *dpc {
                describe::Kind::Dpc
            } else if *task {
                describe::Kind::Task
            } else {
                describe::Kind::Question
            };
            let stdin = std::io::stdin();
            let (doc, next) = describe::run(&kb, kind, &mut stdin.lock(), &mut std::io::stderr())?;
            let target = out.as_ref().unwrap_or(path);
            senscomp_core::kb::save_kb(&next, target)?;
            let (ty, id) = describe::label(&doc);
            emit(&if cli.json {
                json(&serde_json::json!({"type": ty, "id": id, "kb_version": next.version_hash()}))
            } else {
                format!("added {ty} {id}; kb version {}\n", next.version_hash())
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            kb: path,
            listen,
            session_ttl,
            token,
            static_dir,
            limits,
        } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .with_writer(std::io::stderr)
                .with_ansi(std::io::stderr().is_terminal())
                .init();
            let kb = load(path)?;
            let config = senscomp_service::Config {
                kb_path: Some(path.clone()),
                session_ttl: Duration::from_secs(*session_ttl),
                limits: limits.limits(),
                token: token.clone(),
                static_dir: static_dir.clone(),
            };
            let state = senscomp_service::AppState::new(config, kb);
            tokio::runtime::Runtime::new()?.block_on(senscomp_service::serve(state, *listen))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

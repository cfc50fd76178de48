use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tptest_core::analysis::{
    check_dieou, describe_plan, find_covering_plan, find_witness, goal_from_criterion, parse_reach, Criterion,
    Goal, ResetInfo,
};
use tptest_core::format::{
    export_dot_graph, export_dot_net, export_suite, import_suite, parse_net_with_warnings, serialize_net,
};
use tptest_core::harness::{
    bounded_tioco_check, mutate, report, run_suite, Mutation, Outcome, TiocoResult, DEFAULT_TIOCO_LIMIT,
};
use tptest_core::scheduler::{fastest_schedule, feasibility_system, parse_support};
use tptest_core::sscg::build_sscg;
use tptest_core::testgen::{describe_suite, generate_with_graph, GenerateOptions, ObserverOptions, Optimize};
use tptest_core::time::fmt_rat;
use tptest_core::{compose_with, parse_rat, ComposeOptions, ComposedSystem, Limits, Marking, Net, PriorityMode, Rat};

#[derive(Parser)]
#[command(name = "tptest", version, about = "Time-optimal conformance test generation for time Petri nets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a net, print it in canonical form.
    Parse { net: PathBuf },
    /// Compose a SUT with an environment and list synchronizations.
    Compose(SystemArgs),
    /// Build the state class graph of a composed system.
    Sscg {
        #[command(flatten)]
        system: SystemArgs,
        /// Emit the graph in DOT instead of a summary.
        #[arg(long)]
        dot: bool,
    },
    /// Check reachability, coverability or the testability conditions.
    Check(CheckArgs),
    /// Fastest schedule of a support given as whitespace-separated move names.
    Plan {
        #[command(flatten)]
        system: SystemArgs,
        /// e.g. "t8+s0 t7+s3"
        #[arg(long)]
        support: String,
        /// Print the constraint system of all schedules as well.
        #[arg(long)]
        all: bool,
    },
    /// Generate a test suite for a purpose or a coverage criterion.
    Gentest(GentestArgs),
    /// Run a test suite against a SUT net.
    Run { suite: PathBuf, sut: PathBuf },
    /// Apply a mutation (shift:t:dl:du, flip:low:high, swap:t1:t2, drop:t:p) to a net.
    Mutate { net: PathBuf, mutation: String },
    /// Bounded grid check that the implementation's timed traces are traces of the spec.
    TiocoBounded {
        spec: PathBuf,
        implementation: PathBuf,
        #[arg(long, default_value = "40")]
        horizon: String,
        #[arg(long)]
        granularity: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TIOCO_LIMIT)]
        limit: usize,
    },
    /// DOT export of a net, or of the class graph when an environment is given.
    Dot { net: PathBuf, env: Option<PathBuf> },
}

#[derive(Args)]
struct SystemArgs {
    sut: PathBuf,
    env: PathBuf,
    /// Allow internal transitions in the environment.
    #[arg(long)]
    lenient: bool,
    /// Preempt on any higher-priority transition with 0 in its interval.
    #[arg(long)]
    naive_priority: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// place=NAME, event=LABEL or transition=NAME
    #[arg(long, group = "property")]
    reach: Option<String>,
    /// transitions, statements, places, markings or classes
    #[arg(long, group = "property")]
    cover: Option<String>,
    #[arg(long, group = "property")]
    dieou: bool,
    #[command(flatten)]
    reset: ResetArgs,
}

#[derive(Args)]
struct ResetArgs {
    /// Allow resets of this duration between segments.
    #[arg(long)]
    reset_tr: Option<String>,
    /// SUT marking from which a reset is allowed, e.g. "p0,p1(2)"; repeatable.
    #[arg(long = "reset-marking", requires = "reset_tr")]
    reset_markings: Vec<String>,
}

#[derive(Args)]
struct GentestArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// reach:place=NAME, reach:event=LABEL or cover:CRITERION
    #[arg(long, group = "target")]
    purpose: Option<String>,
    #[arg(long, group = "target")]
    criterion: Option<String>,
    /// fastest or shortest-then-fastest
    #[arg(long, default_value = "fastest")]
    optimize: String,
    #[command(flatten)]
    reset: ResetArgs,
    /// Extra time granted to each expected observation before failing.
    #[arg(long, default_value = "0")]
    timeout_slack: String,
    /// Widen observation windows by this much on both sides.
    #[arg(long, default_value = "0")]
    window: String,
    /// Write the suite JSON here instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_net(path: &Path) -> Result<Net> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (net, warnings) = parse_net_with_warnings(&text).with_context(|| format!("parsing {}", path.display()))?;
    for w in warnings {
        eprintln!("{}: {w}", path.display());
    }
    Ok(net)
}

fn read_system(args: &SystemArgs) -> Result<ComposedSystem> {
    let sut = read_net(&args.sut)?;
    let env = read_net(&args.env)?;
    let priority = if args.naive_priority { PriorityMode::Naive } else { PriorityMode::Dischargeable };
    let options = ComposeOptions { lenient: args.lenient, priority };
    Ok(compose_with(&sut, &env, options)?)
}

fn rational(text: &str, what: &str) -> Result<Rat> {
    parse_rat(text).with_context(|| format!("invalid {what} {text:?}"))
}

/// `p0,p1(2)`, optionally in braces.
fn parse_marking(text: &str) -> Result<Marking> {
    let inner = text.trim().trim_start_matches('{').trim_end_matches('}');
    let mut m = Marking::new();
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (place, n) = match part.split_once('(') {
            Some((p, rest)) => {
                let n = rest.strip_suffix(')').ok_or_else(|| anyhow!("bad marking entry {part:?}"))?;
                (p.trim(), n.trim().parse::<u32>().with_context(|| format!("bad token count in {part:?}"))?)
            }
            None => (part, 1),
        };
        m.set(place, m.get(place) + n);
    }
    Ok(m)
}

fn reset_info(args: &ResetArgs) -> Result<Option<ResetInfo>> {
    let Some(tr) = &args.reset_tr else { return Ok(None) };
    let tr = rational(tr, "reset duration")?;
    let markings = args.reset_markings.iter().map(|m| parse_marking(m)).collect::<Result<Vec<_>>>()?;
    Ok(Some(ResetInfo { markings, tr }))
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn goal_for(sys: &ComposedSystem, purpose: &str, g: &tptest_core::ClassGraph) -> Result<Goal> {
    match purpose.split_once(':') {
        Some(("reach", rest)) => Ok(parse_reach(sys, rest)?),
        Some(("cover", rest)) => Ok(goal_from_criterion(sys, rest.parse::<Criterion>()?, g)?),
        _ => bail!("purpose must be reach:<goal> or cover:<criterion>, got {purpose:?}"),
    }
}

/// `Ok(true)` maps to exit 0, `Ok(false)` to exit 1.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Parse { net } => {
            let net = read_net(&net)?;
            emit(&serialize_net(&net))?;
            Ok(true)
        }
        Command::Compose(args) => {
            let sys = read_system(&args)?;
            emit(&sys.to_string())?;
            Ok(true)
        }
        Command::Sscg { system, dot } => {
            let sys = read_system(&system)?;
            let g = build_sscg(&sys, Limits::from_env());
            if dot {
                emit(&export_dot_graph(&sys, &g))?;
            } else {
                emit(&g.to_string())?;
            }
            if g.truncated {
                eprintln!("warning: class graph truncated, raise TPTEST_CLASS_LIMIT");
            }
            Ok(!g.truncated)
        }
        Command::Check(args) => check(args),
        Command::Plan { system, support, all } => {
            let sys = read_system(&system)?;
            let moves = parse_support(&sys, &support)?;
            let f = fastest_schedule(&sys, &moves)?;
            emit(&f.schedule.render(&sys))?;
            let note = if f.unattained { " (infimum not attained)" } else { "" };
            emit(&format!("accumulated {}{note}", fmt_rat(&f.accumulated())))?;
            if all {
                emit(&feasibility_system(&sys, &moves)?.render())?;
            }
            Ok(true)
        }
        Command::Gentest(args) => gentest(args),
        Command::Run { suite, sut } => {
            let text = fs::read_to_string(&suite).with_context(|| format!("reading {}", suite.display()))?;
            let suite = import_suite(&text)?;
            let sut = read_net(&sut)?;
            let verdicts = run_suite(&suite, &sut)?;
            emit(&report(&verdicts))?;
            Ok(verdicts.iter().all(|(_, v)| v.outcome == Outcome::Pass))
        }
        Command::Mutate { net, mutation } => {
            let net = read_net(&net)?;
            let m: Mutation = mutation.parse().map_err(|e| anyhow!("{e}"))?;
            emit(&serialize_net(&mutate(&net, &m)?))?;
            Ok(true)
        }
        Command::TiocoBounded { spec, implementation, horizon, granularity, limit } => {
            let spec = read_net(&spec)?;
            let imp = read_net(&implementation)?;
            let horizon = rational(&horizon, "horizon")?;
            let granularity = granularity.map(|g| rational(&g, "granularity")).transpose()?;
            match bounded_tioco_check(&spec, &imp, horizon, granularity, limit)? {
                TiocoResult::Consistent => {
                    emit(&format!("consistent up to {}", fmt_rat(&horizon)))?;
                    Ok(true)
                }
                TiocoResult::Counterexample(trace) => {
                    emit(&format!("counterexample: {trace}"))?;
                    Ok(false)
                }
            }
        }
        Command::Dot { net, env } => {
            let sut = read_net(&net)?;
            match env {
                None => emit(&export_dot_net(&sut))?,
                Some(env) => {
                    let sys = compose_with(&sut, &read_net(&env)?, ComposeOptions::default())?;
                    emit(&export_dot_graph(&sys, &build_sscg(&sys, Limits::from_env())))?;
                }
            }
            Ok(true)
        }
    }
}

fn check(args: CheckArgs) -> Result<bool> {
    let sys = read_system(&args.system)?;
    let g = build_sscg(&sys, Limits::from_env());
    if args.dieou {
        let report = check_dieou(&sys, &g)?;
        emit(&report.render(&sys))?;
        return Ok(report.passes());
    }
    if let Some(reach) = &args.reach {
        let goal = parse_reach(&sys, reach)?;
        return match find_witness(&sys, &g, &goal) {
            Some(w) => {
                let names: Vec<String> = w.moves.iter().map(|m| m.name(&sys)).collect();
                emit(&format!("reachable: {}", names.join(" ")))?;
                Ok(true)
            }
            None if g.truncated => bail!("unreachable within the truncated class graph"),
            None => {
                emit(&format!("unreachable: {}", goal.describe(&sys)))?;
                Ok(false)
            }
        };
    }
    if let Some(cover) = &args.cover {
        let goal = goal_from_criterion(&sys, cover.parse::<Criterion>()?, &g)?;
        let reset = reset_info(&args.reset)?;
        return match find_covering_plan(&sys, &g, &goal, reset.as_ref()) {
            Ok(plan) => {
                emit(&format!("covered: {}", describe_plan(&sys, &plan)))?;
                Ok(true)
            }
            Err(tptest_core::analysis::AnalysisError::Uncoverable(rest)) => {
                emit(&format!("uncoverable: {}", rest.join(", ")))?;
                Ok(false)
            }
            Err(e) => Err(e.into()),
        };
    }
    bail!("one of --reach, --cover or --dieou is required")
}

fn gentest(args: GentestArgs) -> Result<bool> {
    let sys = read_system(&args.system)?;
    let optimize: Optimize = args.optimize.parse().map_err(|e: String| anyhow!(e))?;
    let g = build_sscg(&sys, Limits::from_env());
    let goal = match (&args.purpose, &args.criterion) {
        (Some(p), _) => goal_for(&sys, p, &g)?,
        (None, Some(c)) => goal_from_criterion(&sys, c.parse::<Criterion>()?, &g)?,
        (None, None) => bail!("one of --purpose or --criterion is required"),
    };
    let options = GenerateOptions {
        optimize,
        reset: reset_info(&args.reset)?,
        observer: ObserverOptions {
            timeout_slack: rational(&args.timeout_slack, "timeout slack")?,
            window: rational(&args.window, "window")?,
        },
        ..Default::default()
    };
    let suite = generate_with_graph(&sys, &goal, &options, &g)?;
    eprint!("{}", describe_suite(&suite));
    let json = export_suite(&suite);
    match &args.output {
        Some(path) => fs::write(path, json.as_bytes()).with_context(|| format!("writing {}", path.display()))?,
        None => emit(&json)?,
    }
    Ok(true)
}

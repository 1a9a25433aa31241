//! `cmg`: solve masking games, run sweeps and reproduce the case study.

/// `println!` that tolerates a closed stdout (e.g. piping into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod args;
mod output;

use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use cmg_core::experiment::{run_method, run_sweep, CaseStudySummary, Method, MethodRun, ResultRow, Sweep};
use cmg_core::fixtures::{fixture, FIXTURE_NAMES};
use cmg_core::game::{
    generate_binary_instance, generate_structured_instance, load_game_spec, structured_roles, to_json_string,
    BinaryParams, StructuredParams,
};
use cmg_core::{CmgError, GameSpec};

use args::{CaseStudyArgs, Cli, Command, ExperimentArgs, FixturesArgs, GameArgs, InstanceKind, SolveArgs};

/// Exit statuses.
const EXIT_USAGE: u8 = 2;
const EXIT_SPEC: u8 = 3;
const EXIT_SOLVER: u8 = 4;

/// An error paired with the exit status it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn spec(err: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_SPEC,
            err: err.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = match err.downcast_ref::<CmgError>() {
            Some(e) => exit_code(e),
            None => 1,
        };
        Failure { code, err }
    }
}

impl From<CmgError> for Failure {
    fn from(err: CmgError) -> Self {
        Failure {
            code: exit_code(&err),
            err: err.into(),
        }
    }
}

fn exit_code(err: &CmgError) -> u8 {
    match err {
        CmgError::Argument(_) => EXIT_USAGE,
        CmgError::Schema(_) | CmgError::Spec { .. } | CmgError::Domain(_) | CmgError::Configuration(_) => EXIT_SPEC,
        CmgError::Capacity(_)
        | CmgError::Infeasible
        | CmgError::Unbounded
        | CmgError::PivotLimit(_)
        | CmgError::IterationLimit { .. }
        | CmgError::Numeric(_)
        | CmgError::Training { .. } => EXIT_SOLVER,
        CmgError::Io(_) | CmgError::Json(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Experiment(a) => experiment(a),
        Command::CaseStudy(a) => case_study(a),
        Command::Fixtures(a) => fixtures(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn load_game(args: &GameArgs) -> Result<GameSpec, Failure> {
    if let Some(path) = &args.spec {
        return load_game_spec(path)
            .with_context(|| format!("loading game spec {}", path.display()))
            .map_err(Failure::spec);
    }
    if let Some(name) = &args.fixture {
        return Ok(fixture(name)?);
    }
    let n = args.n.expect("clap requires one game source");
    let num_exploits = args.num_exploits.unwrap_or(n);
    let kind = match args.instance {
        InstanceKind::Auto if structured_roles(n).is_ok() => InstanceKind::Structured,
        InstanceKind::Auto => InstanceKind::Binary,
        k => k,
    };
    let game = match kind {
        InstanceKind::Structured => generate_structured_instance(&StructuredParams {
            n,
            m: args.m,
            num_exploits,
            max_version: args.max_version,
            cost: args.cost,
            seed: args.instance_seed,
        }),
        _ => generate_binary_instance(&BinaryParams {
            n,
            m: args.m,
            num_exploits,
            cost: args.cost,
            seed: args.instance_seed,
        }),
    };
    game.map_err(Failure::spec)
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let game = load_game(&a.game)?;
    // OS / app / port games train with the larger structured batches
    let cfg = a.tuning.run_config(game.schema.roles().is_some());
    let seeds = a.seeds.list();
    let out = a.out.prepare()?;

    let mut rows = Vec::with_capacity(seeds.len());
    let mut failure = None;
    for seed in seeds {
        match run_method(&game, a.method, seed, &cfg) {
            Ok(run) => {
                print_run(&run);
                output::write_strategy(out, &game, &run)?;
                rows.push(ResultRow::from_run(&game, &run));
            }
            Err(e) => {
                eprintln!("seed {seed}: {} failed: {e}", a.method);
                rows.push(ResultRow::failed(&game, a.method, seed, &e));
                failure.get_or_insert(e);
            }
        }
    }
    output::write_rows(&out.join("results.csv"), &rows)?;
    output::print_summary(&rows);
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn print_run(run: &MethodRun) {
    let r = &run.report;
    say!(
        "seed {}: {} defender loss {:.4} (attack {:.4} + cost {:.4}), {:.2}s",
        run.seed,
        run.method,
        r.defender_loss,
        r.attack_value,
        r.cost_term,
        run.runtime_seconds
    );
    if let cmg_core::experiment::Artifact::Table(dump) = &run.artifact {
        say!(
            "  lp objective {:.4}, gap {:.2e}, {} rounds",
            dump.defender_loss,
            dump.gap,
            dump.iterations
        );
    }
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let base = StructuredParams {
        n: a.n,
        m: a.m,
        num_exploits: a.num_exploits,
        max_version: a.max_version,
        cost: a.cost,
        seed: 0,
    };
    let sweep = Sweep {
        base,
        axis: a.axis,
        values: a.values,
        methods: a.methods,
        seeds: a.seeds.list(),
    };
    let cfg = a.tuning.run_config(true);
    let out = a.out.prepare()?;
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = run_sweep(&sweep, &cfg, workers)?;
    output::write_rows(&out.join("results.csv"), &rows)?;
    output::print_sweep(&sweep, &rows);
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see the status column", rows.len());
    }
    Ok(())
}

fn case_study(a: CaseStudyArgs) -> Result<(), Failure> {
    let game = fixture("case-study")?;
    let cfg = a.tuning.run_config(true);
    let out = a.out.prepare()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for seed in a.seeds.list() {
        let run = run_method(&game, Method::Gam, seed, &cfg)?;
        print_run(&run);
        output::write_strategy(out, &game, &run)?;
        rows.push(ResultRow::from_run(&game, &run));
        summaries.push(CaseStudySummary::from_report(seed, &run.report));
    }
    output::write_rows(&out.join("results.csv"), &rows)?;
    output::write_json(&out.join("case-study.json"), &summaries)?;
    output::print_case_study(&game, &summaries);
    Ok(())
}

fn fixtures(a: FixturesArgs) -> Result<(), Failure> {
    match a.show {
        Some(name) => say!("{}", to_json_string(&fixture(&name)?)?),
        None => {
            for name in FIXTURE_NAMES {
                let g = fixture(name)?;
                say!("{name}\tn={} m={} exploits={}", g.n(), g.m, g.num_exploits());
            }
        }
    }
    Ok(())
}

/// Directory that receives a command's artifacts.
pub(crate) fn ensure_dir(dir: &Path) -> Result<&Path, Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

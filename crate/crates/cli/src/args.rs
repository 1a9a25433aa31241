use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmg_core::experiment::{Method, RunConfig, SweepAxis};

use crate::{ensure_dir, Failure};

#[derive(Parser, Debug)]
#[command(
    name = "cmg",
    version,
    about = "Solvers and experiments for combinatorial masking games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one game with one method for each seed.
    Solve(SolveArgs),
    /// Sweep one parameter of generated OS / app / port instances.
    Experiment(ExperimentArgs),
    /// Train GAM on the bundled 20-attribute case study and summarise it.
    CaseStudy(CaseStudyArgs),
    /// List the bundled games, or print one as a game-spec document.
    Fixtures(FixturesArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InstanceKind {
    /// Structured when `n` can hold the OS / app / port layout, binary otherwise.
    Auto,
    Structured,
    Binary,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "source")]
pub struct GameSource {
    /// Game-spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Bundled game (see `cmg fixtures`).
    #[arg(long)]
    pub fixture: Option<String>,
    /// Generate an instance with this many attributes per device.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GameArgs {
    #[command(flatten)]
    pub source: GameSource,
    /// Kind of generated instance.
    #[arg(long, value_enum, default_value_t = InstanceKind::Auto)]
    pub instance: InstanceKind,
    /// Devices per generated instance.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Exploits in a generated instance [default: n].
    #[arg(long)]
    pub num_exploits: Option<usize>,
    /// Per-attribute masking cost of a generated instance.
    #[arg(long, default_value_t = 0.01)]
    pub cost: f64,
    /// Largest version number V of a structured instance.
    #[arg(long, default_value_t = 3)]
    pub max_version: i32,
    /// Seed of the instance generator.
    #[arg(long, default_value_t = 0)]
    pub instance_seed: u64,
}

impl std::ops::Deref for GameArgs {
    type Target = GameSource;

    fn deref(&self) -> &GameSource {
        &self.source
    }
}

#[derive(Args, Debug)]
pub struct SeedArgs {
    /// Run seeds 0..K.
    #[arg(long, value_name = "K", conflicts_with = "seed_list")]
    pub seeds: Option<u64>,
    /// Run exactly these seeds.
    #[arg(long, value_delimiter = ',', value_name = "A,B,...")]
    pub seed_list: Option<Vec<u64>>,
}

impl SeedArgs {
    pub fn list(&self) -> Vec<u64> {
        match (&self.seed_list, self.seeds) {
            (Some(list), _) => list.clone(),
            (None, Some(k)) => (0..k).collect(),
            (None, None) => vec![0],
        }
    }
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Directory for results.csv and per-seed artifacts.
    #[arg(long, default_value = "cmg-out")]
    pub out: PathBuf,
}

impl OutArgs {
    pub fn prepare(&self) -> Result<&Path, Failure> {
        ensure_dir(&self.out)
    }
}

/// Overrides of solver, training and evaluation settings.
#[derive(Args, Debug)]
pub struct TuningArgs {
    /// Constraint-generation tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Constraint-generation round limit.
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Training samples per GAM iteration.
    #[arg(long)]
    pub batch: Option<usize>,
    /// GAM outer iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Attacker ascent steps per GAM iteration.
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub lr_defender: Option<f64>,
    #[arg(long)]
    pub lr_attacker: Option<f64>,
    /// Threshold masks on every k-th GAM iteration.
    #[arg(long, value_name = "K")]
    pub snap_every: Option<usize>,
    /// Entropy bonus of the attacker net.
    #[arg(long)]
    pub attacker_entropy: Option<f64>,
    /// Held-out draws for GAM snapshot selection; 0 keeps the last iterate.
    #[arg(long)]
    pub validation: Option<usize>,
    /// Hidden layer widths of both nets.
    #[arg(long, value_delimiter = ',', value_name = "W1,W2,...")]
    pub hidden: Option<Vec<usize>>,
    /// Draws used to evaluate each strategy.
    #[arg(long)]
    pub eval_samples: Option<usize>,
    /// Draws shared by greedy's candidate evaluations.
    #[arg(long)]
    pub greedy_budget: Option<usize>,
}

impl TuningArgs {
    /// Defaults for the game kind with every given flag applied.
    pub fn run_config(&self, structured: bool) -> RunConfig {
        let mut cfg = if structured {
            RunConfig::structured()
        } else {
            RunConfig::default()
        };
        let t = &mut cfg.train;
        set(&mut cfg.cg.eps, self.eps);
        set(&mut cfg.cg.max_rounds, self.max_rounds);
        set(&mut t.batch, self.batch);
        set(&mut t.iters, self.iters);
        set(&mut t.inner_steps, self.inner_steps);
        set(&mut t.lr_defender, self.lr_defender);
        set(&mut t.lr_attacker, self.lr_attacker);
        set(&mut t.snap_every, self.snap_every);
        set(&mut t.attacker_entropy, self.attacker_entropy);
        set(&mut t.validation, self.validation);
        if let Some(h) = &self.hidden {
            t.hidden = Some(h.clone());
        }
        set(&mut cfg.eval_samples, self.eval_samples);
        set(&mut cfg.greedy_budget, self.greedy_budget);
        cfg
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: cmg_core::CmgError| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse().map_err(|e: cmg_core::CmgError| e.to_string())
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// lp-cg, gam, unconditional, greedy or random.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Parameter to vary: n, num_exploits, c or m.
    #[arg(long, value_parser = parse_axis)]
    pub axis: SweepAxis,
    /// Values taken by the axis.
    #[arg(long, value_delimiter = ',', required = true, value_name = "V1,V2,...")]
    pub values: Vec<f64>,
    /// Methods to compare.
    #[arg(long = "method", value_delimiter = ',', value_parser = parse_method, default_value = "gam,unconditional,greedy,random")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long, default_value_t = 20)]
    pub num_exploits: usize,
    #[arg(long, default_value_t = 0.01)]
    pub cost: f64,
    #[arg(long, default_value_t = 3)]
    pub max_version: i32,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Args, Debug)]
pub struct CaseStudyArgs {
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Args, Debug)]
pub struct FixturesArgs {
    /// Print this fixture as a game-spec document.
    #[arg(long, value_name = "NAME")]
    pub show: Option<String>,
}

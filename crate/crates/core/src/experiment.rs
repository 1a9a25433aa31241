//! Method dispatch, result rows and parameter sweeps shared by the CLI and
//! the acceptance suite.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_mask, random_mask};
use crate::error::{CmgError, Result};
use crate::eval::{evaluate, DefenderSampler, EvalReport, FixedMaskSampler, GeneratorSampler, TableSampler};
use crate::exact::{solve_lp_cg, CgOptions, StrategyDump};
use crate::gam::{train_gam, train_unconditional, GamResult, TrainConfig};
use crate::game::{generate_structured_instance, GameSpec, StructuredParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LpCg,
    Gam,
    Unconditional,
    Greedy,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::LpCg,
        Method::Gam,
        Method::Unconditional,
        Method::Greedy,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LpCg => "lp-cg",
            Method::Gam => "gam",
            Method::Unconditional => "unconditional",
            Method::Greedy => "greedy",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CmgError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
            CmgError::Argument(format!("unknown method `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Solver and evaluation settings for one method run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub cg: CgOptions,
    pub train: TrainConfig,
    /// Draws used to evaluate every strategy against the empirical best response.
    pub eval_samples: usize,
    /// Draws shared by all candidate masks inside greedy. Smaller budgets
    /// leave most observation groups with a single draw, which hides the
    /// benefit of masking any one attribute.
    pub greedy_budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cg: CgOptions::default(),
            train: TrainConfig::default(),
            eval_samples: 100_000,
            greedy_budget: 100_000,
        }
    }
}

impl RunConfig {
    /// Defaults for generated OS / app / port instances.
    pub fn structured() -> Self {
        RunConfig {
            train: TrainConfig::structured(),
            ..Self::default()
        }
    }
}

/// Seed of the evaluation stream for a run seed; kept apart from the
/// training stream so evaluation never reuses training draws.
pub fn eval_seed(seed: u64) -> u64 {
    seed ^ 0x6576_616c_7561_7465
}

/// What a method produced, beyond its evaluation.
#[derive(Clone, Debug)]
pub enum Artifact {
    Table(Box<StrategyDump>),
    Generator(Box<GamResult>),
    /// A configuration-independent mask (1 = visible); `masked` lists the
    /// attributes in the order greedy chose them.
    FixedMask {
        mask: Vec<u8>,
        masked: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
pub struct MethodRun {
    pub method: Method,
    pub seed: u64,
    pub report: EvalReport,
    /// Time spent solving or training, excluding evaluation.
    pub runtime_seconds: f64,
    pub artifact: Artifact,
}

/// Runs `method` on `game` with `seed` and evaluates the resulting defender
/// strategy against the empirical best response.
pub fn run_method(game: &GameSpec, method: Method, seed: u64, cfg: &RunConfig) -> Result<MethodRun> {
    game.validate()?;
    let start = Instant::now();
    let es = eval_seed(seed);
    let (report, runtime_seconds, artifact) = match method {
        Method::LpCg => {
            let opts = CgOptions { seed, ..cfg.cg.clone() };
            let eq = solve_lp_cg(game, &opts)?;
            let runtime = start.elapsed().as_secs_f64();
            let sampler = TableSampler::new(game, &eq.defender)?;
            let report = evaluate(&sampler, game, cfg.eval_samples, es)?;
            (report, runtime, Artifact::Table(Box::new(StrategyDump::from(&eq))))
        }
        Method::Gam | Method::Unconditional => {
            let train = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let result = if method == Method::Gam {
                train_gam(game, &train)?
            } else {
                train_unconditional(game, &train)?
            };
            let runtime = start.elapsed().as_secs_f64();
            let sampler = GeneratorSampler::new(game, &result.generator)?;
            let report = evaluate(&sampler, game, cfg.eval_samples, es)?;
            (report, runtime, Artifact::Generator(Box::new(result)))
        }
        Method::Greedy => {
            let state = greedy_mask(game, cfg.greedy_budget, seed)?;
            let runtime = start.elapsed().as_secs_f64();
            let report = fixed_mask_report(game, &state.mask.0, cfg, es)?;
            let artifact = Artifact::FixedMask {
                mask: state.mask.0,
                masked: state.masked,
            };
            (report, runtime, artifact)
        }
        Method::Random => {
            let mask = random_mask(game.n(), game.m, seed);
            let runtime = start.elapsed().as_secs_f64();
            let report = fixed_mask_report(game, &mask.0, cfg, es)?;
            let masked = (0..mask.len()).filter(|&j| mask.0[j] == 0).collect();
            (report, runtime, Artifact::FixedMask { mask: mask.0, masked })
        }
    };
    Ok(MethodRun {
        method,
        seed,
        report,
        runtime_seconds,
        artifact,
    })
}

fn fixed_mask_report(game: &GameSpec, mask: &[u8], cfg: &RunConfig, seed: u64) -> Result<EvalReport> {
    let sampler = FixedMaskSampler::new(game, &crate::game::Mask(mask.to_vec()))?;
    evaluate(&sampler as &dyn DefenderSampler, game, cfg.eval_samples, seed)
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub num_exploits: usize,
    /// Mean per-attribute masking cost.
    pub c: f64,
    /// Largest attribute value in the schema.
    #[serde(rename = "V")]
    pub max_value: i64,
    pub defender_loss: Option<f64>,
    pub attack_value: Option<f64>,
    pub cost_term: Option<f64>,
    pub runtime_seconds: Option<f64>,
    /// `ok`, or `error: <message>` for a failed cell.
    pub status: String,
}

impl ResultRow {
    fn skeleton(game_shape: Shape, method: Method, seed: u64) -> Self {
        ResultRow {
            seed,
            method: method.name().into(),
            n: game_shape.n,
            m: game_shape.m,
            num_exploits: game_shape.num_exploits,
            c: game_shape.c,
            max_value: game_shape.max_value,
            defender_loss: None,
            attack_value: None,
            cost_term: None,
            runtime_seconds: None,
            status: "ok".into(),
        }
    }

    pub fn from_run(game: &GameSpec, run: &MethodRun) -> Self {
        ResultRow {
            defender_loss: Some(run.report.defender_loss),
            attack_value: Some(run.report.attack_value),
            cost_term: Some(run.report.cost_term),
            runtime_seconds: Some(run.runtime_seconds),
            ..Self::skeleton(Shape::of(game), run.method, run.seed)
        }
    }

    pub fn failed(game: &GameSpec, method: Method, seed: u64, err: &CmgError) -> Self {
        Self::failed_shape(Shape::of(game), method, seed, err)
    }

    fn failed_shape(shape: Shape, method: Method, seed: u64, err: &CmgError) -> Self {
        ResultRow {
            status: format!("error: {err}"),
            ..Self::skeleton(shape, method, seed)
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Copy, Debug)]
struct Shape {
    n: usize,
    m: usize,
    num_exploits: usize,
    c: f64,
    max_value: i64,
}

impl Shape {
    fn of(game: &GameSpec) -> Self {
        Shape {
            n: game.n(),
            m: game.m,
            num_exploits: game.num_exploits(),
            c: game.cost.mean(),
            max_value: game.schema.max_value().into(),
        }
    }

    fn of_params(p: &StructuredParams) -> Self {
        Shape {
            n: p.n,
            m: p.m,
            num_exploits: p.num_exploits,
            c: p.cost,
            max_value: p.max_version.into(),
        }
    }
}

/// The structured-instance parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    NumExploits,
    Cost,
    M,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::NumExploits => "num_exploits",
            SweepAxis::Cost => "c",
            SweepAxis::M => "m",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &StructuredParams, value: f64) -> Result<StructuredParams> {
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(CmgError::Argument(format!(
                    "axis {} needs a non-negative integer, got {value}",
                    self.name()
                )))
            }
        };
        let mut p = base.clone();
        match self {
            SweepAxis::N => p.n = count()?,
            SweepAxis::NumExploits => p.num_exploits = count()?,
            SweepAxis::M => p.m = count()?,
            SweepAxis::Cost => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(CmgError::Argument(format!(
                        "axis c needs a non-negative cost, got {value}"
                    )));
                }
                p.cost = value;
            }
        }
        Ok(p)
    }
}

impl FromStr for SweepAxis {
    type Err = CmgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepAxis::N),
            "num_exploits" | "num-exploits" | "exploits" => Ok(SweepAxis::NumExploits),
            "c" | "cost" => Ok(SweepAxis::Cost),
            "m" => Ok(SweepAxis::M),
            _ => Err(CmgError::Argument(format!(
                "unknown sweep axis `{s}` (expected n, num_exploits, c or m)"
            ))),
        }
    }
}

/// Cross product of axis values, methods and seeds over generated
/// instances. The instance for a cell is generated from the cell's seed, so
/// methods are compared on the same games.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub base: StructuredParams,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
}

impl Sweep {
    pub fn cells(&self) -> Vec<(usize, Method, u64)> {
        let mut cells = Vec::with_capacity(self.values.len() * self.methods.len() * self.seeds.len());
        for v in 0..self.values.len() {
            for &method in &self.methods {
                for &seed in &self.seeds {
                    cells.push((v, method, seed));
                }
            }
        }
        cells
    }
}

/// Runs every cell of `sweep` on `workers` threads. Failed cells become rows
/// with an error status. Rows come back sorted by axis value, method and seed
/// whatever order the cells finished in.
pub fn run_sweep(sweep: &Sweep, cfg: &RunConfig, workers: usize) -> Result<Vec<ResultRow>> {
    let params = sweep
        .values
        .iter()
        .map(|&v| sweep.axis.apply(&sweep.base, v))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = sweep.cells();
    cells.sort_by(|a, b| {
        sweep.values[a.0]
            .total_cmp(&sweep.values[b.0])
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<ResultRow>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(v, method, seed)) = cells.get(i) else { break };
                let row = run_cell(&params[v], method, seed, cfg);
                rows.lock().expect("no worker panics while holding the lock")[i] = Some(row);
            });
        }
    });
    Ok(rows
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect())
}

fn run_cell(params: &StructuredParams, method: Method, seed: u64, cfg: &RunConfig) -> ResultRow {
    let params = StructuredParams { seed, ..params.clone() };
    let game = match generate_structured_instance(&params) {
        Ok(g) => g,
        Err(e) => return ResultRow::failed_shape(Shape::of_params(&params), method, seed, &e),
    };
    match run_method(&game, method, seed, cfg) {
        Ok(run) => ResultRow::from_run(&game, &run),
        Err(e) => ResultRow::failed(&game, method, seed, &e),
    }
}

/// Case-study statistics of one evaluated defender strategy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseStudySummary {
    pub seed: u64,
    pub defender_loss: f64,
    /// Probability that each attribute is masked.
    pub masked_probability: Vec<f64>,
    /// Average probability of choosing each exploit, numbered from 1.
    pub exploit_frequencies: Vec<(usize, f64)>,
    /// 1-based number of the most frequently chosen exploit.
    pub top_exploit: usize,
}

impl CaseStudySummary {
    pub fn from_report(seed: u64, report: &EvalReport) -> Self {
        let freqs: Vec<(usize, f64)> = report
            .exploit_frequencies
            .iter()
            .enumerate()
            .map(|(i, &f)| (i + 1, f))
            .collect();
        // first maximum wins
        let top_exploit = freqs
            .iter()
            .fold(None, |best: Option<(usize, f64)>, &(i, f)| match best {
                Some((_, b)) if b >= f => best,
                _ => Some((i, f)),
            })
            .map_or(0, |(i, _)| i);
        CaseStudySummary {
            seed,
            defender_loss: report.defender_loss,
            masked_probability: report.mask_support.masked_probability.clone(),
            exploit_frequencies: freqs,
            top_exploit,
        }
    }
}

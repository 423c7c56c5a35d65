use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problems::{
    LinearLossProblem, Loss, ParrotProblem, SlatesProblem, ThermostatProblem, XorProblem,
};
use super::ucb::{linspace, ucb_baseline, MAX_ARMS};
use super::FlattenedOracle;
use crate::base::{Hyperparams, RngStream};
use crate::error::{Error, Result};
use crate::learners::{
    learn_in_rounds_with, Control, Learner, Model, RewardOracle, RoundTrace, StopRule, Template,
    TreeInit, MAX_TREE_HEIGHT,
};
use crate::tree::AnnealSchedule;

pub const CSV_HEADER: &str = "problem,template,seed,rounds,queries,final_reward,solved,wall_ms";

/// Monte-Carlo sample size for problems without a finite evaluation set.
const EVAL_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    Linear {
        d: usize,
        #[serde(default)]
        n: Option<usize>,
        loss: Loss,
    },
    Xor,
    Slates,
    Parrot,
    Thermostat {
        #[serde(default = "default_thermostat_inputs")]
        inputs: usize,
    },
}

fn default_thermostat_inputs() -> usize {
    ThermostatProblem::NUM_INPUTS
}

impl ProblemKind {
    pub fn id(&self) -> String {
        match self {
            ProblemKind::Linear { d, loss, .. } => format!("linear_d{d}_{}", loss.name()),
            ProblemKind::Xor => "xor".into(),
            ProblemKind::Slates => "slates".into(),
            ProblemKind::Parrot => "parrot".into(),
            ProblemKind::Thermostat { .. } => "thermostat".into(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            ProblemKind::Linear { d, .. } => *d,
            ProblemKind::Xor | ProblemKind::Slates => 2,
            ProblemKind::Parrot => ParrotProblem::P,
            ProblemKind::Thermostat { .. } => 0,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            ProblemKind::Thermostat { .. } => 3,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ProblemKind::Linear { d: 0, .. } => {
                Err(Error::InvalidArgument("linear problem needs d >= 1".into()))
            }
            ProblemKind::Linear { n: Some(0), .. } => {
                Err(Error::InvalidArgument("linear problem needs n >= 1".into()))
            }
            ProblemKind::Thermostat { inputs: 0 } => Err(Error::InvalidArgument(
                "thermostat needs at least one input".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Builds the instance for `seed`; every method sees the same instance.
    pub fn build(&self, seed: u64) -> Problem {
        let mut rng = RngStream::new(seed).fork(0x5EED);
        match *self {
            ProblemKind::Linear { d, n, loss } => Problem::Linear(LinearLossProblem::random(
                d,
                n.unwrap_or(2 * d),
                loss,
                &mut rng,
            )),
            ProblemKind::Xor => Problem::Xor(XorProblem::new(rng)),
            ProblemKind::Slates => Problem::Slates(SlatesProblem::new(rng)),
            ProblemKind::Parrot => Problem::Parrot(ParrotProblem::new(rng)),
            ProblemKind::Thermostat { inputs } => {
                Problem::Thermostat(ThermostatProblem::new(&mut rng, inputs))
            }
        }
    }
}

/// A built problem instance.
#[derive(Debug, Clone)]
pub enum Problem {
    Linear(LinearLossProblem),
    Xor(XorProblem),
    Slates(SlatesProblem),
    Parrot(ParrotProblem),
    Thermostat(ThermostatProblem),
}

macro_rules! each_problem {
    ($self:expr, $o:ident => $body:expr) => {
        match $self {
            Problem::Linear($o) => $body,
            Problem::Xor($o) => $body,
            Problem::Slates($o) => $body,
            Problem::Parrot($o) => $body,
            Problem::Thermostat($o) => $body,
        }
    };
}

impl RewardOracle for Problem {
    fn observe(&mut self) -> Vec<f64> {
        each_problem!(self, o => o.observe())
    }

    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        each_problem!(self, o => o.query(decision))
    }

    fn query_count(&self) -> u64 {
        each_problem!(self, o => o.query_count())
    }

    fn best_value(&self) -> Option<f64> {
        each_problem!(self, o => o.best_value())
    }
}

impl Problem {
    /// Final reward of `model` and whether it counts as solved:
    /// exact `w*` recovery for linear problems, median relative error at
    /// most 60% for Parrot, mean error at most 5 for the thermostat, and
    /// expected reward within 0.05 of optimal for XOR and Slates.
    pub fn evaluate(&self, model: &Model, seed: u64) -> (f64, bool) {
        let eval_seed = RngStream::new(seed).fork(0xE7A1).seed();
        match self {
            Problem::Linear(p) => {
                let solved = matches!(model, Model::Linear { .. }) && p.is_solved(&model.flat());
                (p.expected_reward(model), solved)
            }
            Problem::Xor(_) => {
                let r = XorProblem::expected_reward(model, EVAL_SAMPLES, eval_seed);
                (r, r >= -0.05)
            }
            Problem::Slates(_) => {
                let r = SlatesProblem::expected_reward(model, EVAL_SAMPLES, eval_seed);
                (r, r >= -0.05)
            }
            Problem::Parrot(p) => {
                let mut errs = p.relative_errors(model);
                (p.expected_reward(model), median(&mut errs) <= 0.6)
            }
            Problem::Thermostat(p) => {
                let a = model.flat();
                (-p.mean_loss(&a), p.expected_error(&a) <= 5.0)
            }
        }
    }

    /// Starting point for constants learners, where the problem has one.
    fn default_init(&self, seed: u64) -> Option<Vec<f64>> {
        match self {
            Problem::Thermostat(_) => {
                let mut rng = RngStream::new(seed).fork(0x1417);
                Some(vec![
                    rng.uniform_range(0.0, 10.0),
                    rng.uniform_range(-10.0, 0.0),
                    rng.uniform_range(0.0, 10.0),
                ])
            }
            _ => None,
        }
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Const,
    Linear,
    Tree {
        height: usize,
    },
    /// Constants learner over the flattened parameters of `template`.
    Flattened {
        template: Template,
    },
    /// UCB1 over `bins` values in `[lo, hi]` per decision coordinate.
    Ucb {
        lo: f64,
        hi: f64,
        bins: usize,
    },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Const => "const".into(),
            Method::Linear => "linear".into(),
            Method::Tree { height } => format!("tree{height}"),
            Method::Flattened { template } => format!("flat-{}", template.name()),
            Method::Ucb { bins, .. } => format!("ucb{bins}"),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        let height_ok = |h: usize| {
            if h > MAX_TREE_HEIGHT {
                Err(Error::HeightCap {
                    height: h,
                    cap: MAX_TREE_HEIGHT,
                })
            } else {
                Ok(())
            }
        };
        match self {
            Method::Tree { height }
            | Method::Flattened {
                template: Template::Tree { height },
            } => height_ok(*height),
            Method::Ucb { lo, hi, bins } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) || *bins == 0 {
                    return Err(Error::InvalidArgument(
                        "ucb needs finite lo <= hi and bins >= 1".into(),
                    ));
                }
                let arms = (0..m).try_fold(1usize, |acc, _| acc.checked_mul(*bins));
                match arms {
                    Some(a) if a <= MAX_ARMS => Ok(()),
                    _ => Err(Error::InvalidArgument(format!(
                        "ucb grid {bins}^{m} exceeds {MAX_ARMS} arms"
                    ))),
                }
            }
            _ => Ok(()),
        }
    }
}

/// Optional overrides of [`Hyperparams::defaults`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpSpec {
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub radius: Option<f64>,
    pub two_point: Option<bool>,
    pub max_rounds: Option<u64>,
}

impl HpSpec {
    pub fn resolve(&self, m: usize, seed: u64) -> Hyperparams {
        let mut hp = Hyperparams::defaults(m);
        hp.delta = self.delta.unwrap_or(hp.delta);
        hp.eta = self.eta.unwrap_or(hp.eta);
        hp.radius = self.radius.unwrap_or(hp.radius);
        hp.two_point = self.two_point.unwrap_or(hp.two_point);
        hp.max_rounds = self.max_rounds.unwrap_or(hp.max_rounds);
        hp.seed = seed;
        hp
    }
}

/// One (problem, method) pairing, run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub problem: ProblemKind,
    pub method: Method,
    #[serde(default)]
    pub hyperparams: HpSpec,
    #[serde(default)]
    pub schedule: Option<AnnealSchedule>,
    #[serde(default)]
    pub init: Option<TreeInit>,
    /// Apply the plateau stop rule.
    #[serde(default)]
    pub stop_rule: bool,
    /// End the run as soon as the current model counts as solved
    /// (linear problems only; checked every round).
    #[serde(default)]
    pub stop_when_solved: bool,
    /// Overrides the suite-level seed list.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

fn yes() -> bool {
    true
}

/// Declarative benchmark description, read from TOML.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// When false every `wall_ms` is written as 0, making output
    /// byte-reproducible.
    #[serde(default = "yes")]
    pub record_time: bool,
    #[serde(default = "yes")]
    pub curves: bool,
    /// Default output directory, relative to the working directory.
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default, rename = "cell")]
    pub cells: Vec<CellSpec>,
}

impl SuiteSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SuiteSpec = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, cell) in self.cells.iter().enumerate() {
            let ctx = |e: Error| Error::InvalidArgument(format!("cell {i}: {e}"));
            cell.problem.validate().map_err(ctx)?;
            cell.method.validate(cell.problem.m()).map_err(ctx)?;
            cell.hyperparams
                .resolve(cell.problem.m(), 0)
                .validate()
                .map_err(ctx)?;
            if let Some(s) = &cell.schedule {
                s.validate().map_err(ctx)?;
            }
        }
        Ok(())
    }

    /// Every (cell index, seed) pair in output order.
    pub fn jobs(&self) -> Vec<(usize, u64)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(i, c)| {
                c.seeds
                    .as_ref()
                    .unwrap_or(&self.seeds)
                    .iter()
                    .map(move |&s| (i, s))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub problem: String,
    pub template: String,
    pub seed: u64,
    pub rounds: u64,
    pub queries: u64,
    pub final_reward: f64,
    pub solved: bool,
    pub wall_ms: u64,
    /// Reward of every query, in order.
    pub curve: Vec<f64>,
    pub model: Option<Model>,
    pub error: Option<String>,
}

fn curve_of(trace: &RoundTrace) -> Vec<f64> {
    trace
        .records
        .iter()
        .flat_map(|r| r.rewards.iter().copied())
        .collect()
}

/// Runs the driver, stopping early once `solved` holds. Oracle failures
/// keep the partial run.
fn drive(
    learner: Learner,
    oracle: &mut impl RewardOracle,
    stop: Option<StopRule>,
    solved: impl Fn(&Learner) -> bool,
) -> (Learner, RoundTrace, Option<Error>) {
    let control = |l: &Learner, _: &_| {
        if solved(l) {
            Control::Stop
        } else {
            Control::Continue
        }
    };
    match learn_in_rounds_with(learner, oracle, stop, control) {
        Ok(out) => (out.learner, out.trace, None),
        Err(aborted) => (
            aborted.outcome.learner,
            aborted.outcome.trace,
            Some(aborted.error),
        ),
    }
}

fn build_learner(
    cell: &CellSpec,
    problem: &Problem,
    hp: Hyperparams,
    seed: u64,
) -> Result<Learner> {
    let (p, m) = (cell.problem.p(), cell.problem.m());
    match &cell.method {
        Method::Const => match problem.default_init(seed) {
            Some(init) => Learner::with_init(Template::Const, p, m, hp, &init),
            None => Learner::new(Template::Const, p, m, hp),
        },
        Method::Linear => Learner::new(Template::Linear, p, m, hp),
        Method::Tree { height } => Learner::tree(
            *height,
            p,
            m,
            hp,
            cell.init.unwrap_or_default(),
            cell.schedule.clone().unwrap_or_default(),
        ),
        Method::Flattened { template } => {
            let d = template.num_params(p, m);
            let radius = cell.hyperparams.radius.unwrap_or(100.0 * d as f64);
            Learner::new(Template::Const, 0, d, Hyperparams { radius, ..hp })
        }
        Method::Ucb { .. } => unreachable!("ucb has no learner"),
    }
}

/// Runs one cell for one seed. Failures are reported in
/// [`BenchResult::error`] rather than returned.
pub fn run_cell(cell: &CellSpec, seed: u64, record_time: bool) -> BenchResult {
    let start = Instant::now();
    let mut res = BenchResult {
        problem: cell.problem.id(),
        template: cell.method.name(),
        seed,
        rounds: 0,
        queries: 0,
        final_reward: f64::NAN,
        solved: false,
        wall_ms: 0,
        curve: Vec::new(),
        model: None,
        error: None,
    };
    let (p, m) = (cell.problem.p(), cell.problem.m());
    let mut problem = cell.problem.build(seed);
    let hp = cell.hyperparams.resolve(m, seed);
    let stop = cell.stop_rule.then(StopRule::default);
    let target = match (&problem, cell.stop_when_solved) {
        (Problem::Linear(lp), true) => Some(lp.clone()),
        _ => None,
    };
    let solved_at = |flat: &[f64]| target.as_ref().is_some_and(|t| t.is_solved(flat));

    let outcome: Result<Model> = match &cell.method {
        Method::Ucb { lo, hi, bins } => {
            let grid = vec![linspace(*lo, *hi, *bins); m];
            ucb_baseline(&mut problem, &grid, hp.max_rounds).map(|u| {
                let best = u
                    .best_arm()
                    .map_or_else(|| vec![0.0; m], |a| super::ucb::arm_decision(&grid, a));
                res.rounds = u.curve.len() as u64;
                res.curve = u.curve;
                Model::Const { values: best }
            })
        }
        method => build_learner(cell, &problem, hp, seed).and_then(|learner| {
            let (learner, trace, err) = match method {
                Method::Flattened { template } => {
                    let linear = *template == Template::Linear;
                    let mut flat = FlattenedOracle::new(&mut problem, *template, p, m);
                    drive(learner, &mut flat, stop, |l| {
                        linear && solved_at(&l.params())
                    })
                }
                _ => {
                    let linear = *method == Method::Linear;
                    drive(learner, &mut problem, stop, |l| {
                        linear && solved_at(&l.params())
                    })
                }
            };
            res.rounds = trace.len() as u64;
            res.curve = curve_of(&trace);
            match err {
                Some(e) => Err(e),
                None => match method {
                    Method::Flattened { template } => {
                        Model::from_flat(template, p, m, &learner.params())
                    }
                    _ => Ok(learner.model()),
                },
            }
        }),
    };
    match outcome {
        Ok(model) => {
            let (reward, solved) = problem.evaluate(&model, seed);
            res.final_reward = reward;
            res.solved = solved;
            res.model = Some(model);
        }
        Err(e) => res.error = Some(e.to_string()),
    }
    res.queries = problem.query_count();
    if record_time {
        res.wall_ms = start.elapsed().as_millis() as u64;
    }
    res
}

fn write_results(path: &Path, results: &[BenchResult]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(CSV_HEADER.split(',')).map_err(io)?;
    for r in results {
        w.write_record([
            r.problem.clone(),
            r.template.clone(),
            r.seed.to_string(),
            r.rounds.to_string(),
            r.queries.to_string(),
            r.final_reward.to_string(),
            r.solved.to_string(),
            r.wall_ms.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn write_curve(path: &Path, curve: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(curve.len() * 16 + 16);
    out.push_str("query,reward\n");
    for (i, r) in curve.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, r));
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Runs every cell of `spec`, writing `results.csv` and (optionally)
/// `curves/<template>/curve_<problem>_<seed>.csv` under `out_dir`.
/// Cells run in parallel on `jobs` threads (all cores when `None`); output
/// order is always the suite order.
pub fn run_benchmark(
    spec: &SuiteSpec,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<Vec<BenchResult>> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let jobs = spec.jobs();
    let results: Vec<BenchResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, seed)| run_cell(&spec.cells[cell], seed, spec.record_time))
            .collect()
    });
    write_results(&out_dir.join("results.csv"), &results)?;
    if spec.curves {
        for r in &results {
            let dir = out_dir.join("curves").join(&r.template);
            fs::create_dir_all(&dir)?;
            write_curve(
                &dir.join(format!("curve_{}_{}.csv", r.problem, r.seed)),
                &r.curve,
            )?;
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "small"
seeds = [0, 1]
record_time = false

[[cell]]
problem = { kind = "linear", d = 2, loss = "sq" }
method = { kind = "linear" }
hyperparams = { eta = 5e-4, two_point = true, max_rounds = 3000 }
stop_when_solved = true

[[cell]]
problem = { kind = "xor" }
method = { kind = "ucb", lo = -0.5, hi = 1.5, bins = 9 }
hyperparams = { max_rounds = 50 }

[[cell]]
problem = { kind = "linear", d = 2, loss = "abs" }
method = { kind = "flattened", template = { kind = "linear" } }
hyperparams = { max_rounds = 20 }
seeds = [3]
"#;

    #[test]
    fn parses_and_runs() {
        let spec = SuiteSpec::from_toml_str(SMALL).unwrap();
        assert_eq!(spec.jobs(), vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 3)]);
        let dir = tempfile::tempdir().unwrap();
        let res = run_benchmark(&spec, dir.path(), Some(2)).unwrap();
        assert_eq!(res.len(), 5);
        assert!(res[0].solved && res[1].solved);
        assert!(res.iter().all(|r| r.error.is_none()));
        assert!(res.iter().all(|r| r.curve.len() as u64 == r.queries));
        assert_eq!(res[4].template, "flat-linear");
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with(CSV_HEADER));
        let curve = fs::read_to_string(dir.path().join("curves/ucb9/curve_xor_1.csv")).unwrap();
        assert_eq!(curve.lines().count(), 51);
        assert!(curve.starts_with("query,reward\n1,"));
    }

    #[test]
    fn empty_suite_writes_header_only() {
        let spec = SuiteSpec::from_toml_str("").unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(run_benchmark(&spec, dir.path(), None).unwrap().is_empty());
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let spec = SuiteSpec::from_toml_str(SMALL).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_benchmark(&spec, a.path(), Some(1)).unwrap();
        run_benchmark(&spec, b.path(), Some(3)).unwrap();
        for f in ["results.csv", "curves/linear/curve_linear_d2_sq_1.csv"] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SuiteSpec::from_toml_str("[[cell]]\nproblem = { kind = \"nope\" }").is_err());
        let tall =
            "[[cell]]\nproblem = { kind = \"xor\" }\nmethod = { kind = \"tree\", height = 13 }";
        assert!(matches!(
            SuiteSpec::from_toml_str(tall),
            Err(Error::InvalidArgument(m)) if m.contains("cap")
        ));
        let bad_eta = "[[cell]]\nproblem = { kind = \"xor\" }\nmethod = { kind = \"const\" }\nhyperparams = { eta = -1.0 }";
        assert!(SuiteSpec::from_toml_str(bad_eta).is_err());
        assert!(SuiteSpec::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn failing_cell_is_recorded() {
        let cell = CellSpec {
            problem: ProblemKind::Linear {
                d: 2,
                n: None,
                loss: Loss::Sq,
            },
            method: Method::Const,
            hyperparams: HpSpec {
                max_rounds: Some(5),
                ..Default::default()
            },
            schedule: None,
            init: None,
            stop_rule: false,
            stop_when_solved: false,
            seeds: None,
        };
        let r = run_cell(&cell, 0, false);
        assert!(r.error.is_none());
        assert_eq!(r.rounds, 5);
        let mut thermo = cell.clone();
        thermo.problem = ProblemKind::Thermostat { inputs: 10 };
        thermo.method = Method::Linear;
        assert_eq!(run_cell(&thermo, 0, false).rounds, 5);
    }

    #[test]
    fn median_handles_parity() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}

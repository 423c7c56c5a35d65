use crate::base::RngStream;
use crate::error::{Error, Result};
use crate::learners::{Model, RewardOracle};

fn expect_dim(decision: &[f64], m: usize) -> Result<()> {
    if decision.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: decision.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Sq,
    Abs,
}

impl Loss {
    pub fn eval(self, y: f64, target: f64) -> f64 {
        match self {
            Loss::Sq => (y - target) * (y - target),
            Loss::Abs => (y - target).abs(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Sq => "sq",
            Loss::Abs => "abs",
        }
    }
}

/// Integer linear regression under bandit feedback: recover `w* ∈ {0..10}^d`
/// from rewards `−ℓ(y − w*·x)` over `n` fixed integer feature vectors,
/// visited in a fixed cycle.
#[derive(Debug, Clone)]
pub struct LinearLossProblem {
    pub w_star: Vec<i64>,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub loss: Loss,
    next: usize,
    current: usize,
    count: u64,
}

impl LinearLossProblem {
    /// `w*` uniform over `{0..10}^d`, features uniform integers in `[-10, 10]`.
    pub fn random(d: usize, n: usize, loss: Loss, rng: &mut RngStream) -> Self {
        let w_star: Vec<i64> = (0..d).map(|_| rng.int_range(0, 10)).collect();
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.int_range(-10, 10) as f64).collect())
            .collect();
        Self::from_parts(w_star, features, loss)
    }

    pub fn from_parts(w_star: Vec<i64>, features: Vec<Vec<f64>>, loss: Loss) -> Self {
        let targets = features
            .iter()
            .map(|x| x.iter().zip(&w_star).map(|(a, w)| a * *w as f64).sum())
            .collect();
        Self {
            w_star,
            features,
            targets,
            loss,
            next: 0,
            current: 0,
            count: 0,
        }
    }

    pub fn d(&self) -> usize {
        self.w_star.len()
    }

    /// Exact expected reward of `model` over the example set.
    pub fn expected_reward(&self, model: &Model) -> f64 {
        let total: f64 = self
            .features
            .iter()
            .zip(&self.targets)
            .map(|(x, t)| -self.loss.eval(model.eval(x)[0], *t))
            .sum();
        total / self.features.len() as f64
    }

    /// Whether the first `d` weights round to `w*` (the bias column is an
    /// artifact of feature augmentation and is not compared).
    pub fn is_solved(&self, weights: &[f64]) -> bool {
        self.w_star
            .iter()
            .zip(weights)
            .all(|(w, v)| v.round() as i64 == *w)
    }
}

impl RewardOracle for LinearLossProblem {
    fn observe(&mut self) -> Vec<f64> {
        self.current = self.next;
        self.next = (self.next + 1) % self.features.len();
        self.features[self.current].clone()
    }

    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        expect_dim(decision, 1)?;
        self.count += 1;
        Ok(-self.loss.eval(decision[0], self.targets[self.current]))
    }

    fn query_count(&self) -> u64 {
        self.count
    }

    fn best_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Two features uniform on `[-1, 1]²`; the target is 1 when they share a
/// sign and 0 otherwise. Reward is the negative squared error.
#[derive(Debug, Clone)]
pub struct XorProblem {
    rng: RngStream,
    current: [f64; 2],
    count: u64,
}

impl XorProblem {
    pub fn new(rng: RngStream) -> Self {
        Self {
            rng,
            current: [0.0; 2],
            count: 0,
        }
    }

    pub fn target(x: &[f64]) -> f64 {
        if (x[0] > 0.0) == (x[1] > 0.0) {
            1.0
        } else {
            0.0
        }
    }

    /// Monte-Carlo expected reward of `model` on `n` fresh points from `seed`.
    pub fn expected_reward(model: &Model, n: usize, seed: u64) -> f64 {
        let mut rng = RngStream::new(seed);
        let mut total = 0.0;
        for _ in 0..n {
            let x = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
            let e = model.eval(&x)[0] - Self::target(&x);
            total -= e * e;
        }
        total / n as f64
    }
}

impl RewardOracle for XorProblem {
    fn observe(&mut self) -> Vec<f64> {
        self.current = [
            self.rng.uniform_range(-1.0, 1.0),
            self.rng.uniform_range(-1.0, 1.0),
        ];
        self.current.to_vec()
    }

    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        expect_dim(decision, 1)?;
        self.count += 1;
        let e = decision[0] - Self::target(&self.current);
        Ok(-e * e)
    }

    fn query_count(&self) -> u64 {
        self.count
    }

    fn best_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Piece-wise constant threshold map over `[-3, 3]²`, realized by a fixed
/// height-3 axis-aligned tree with six distinct leaf values.
#[derive(Debug, Clone)]
pub struct SlatesProblem {
    rng: RngStream,
    current: [f64; 2],
    count: u64,
}

impl SlatesProblem {
    pub const RANGE: f64 = 3.0;

    pub fn new(rng: RngStream) -> Self {
        Self {
            rng,
            current: [0.0; 2],
            count: 0,
        }
    }

    /// Ground truth. Split positions are fixed constants of this benchmark.
    pub fn target(x: &[f64]) -> f64 {
        let (x, y) = (x[0], x[1]);
        if x > 0.0 {
            if x > 1.5 {
                if x > 2.25 {
                    0.5
                } else {
                    0.1
                }
            } else {
                0.81
            }
        } else if y > -1.0 {
            if y > 1.0 {
                0.3
            } else {
                0.0
            }
        } else {
            1.0
        }
    }

    pub fn expected_reward(model: &Model, n: usize, seed: u64) -> f64 {
        let mut rng = RngStream::new(seed);
        let mut total = 0.0;
        for _ in 0..n {
            let x = [
                rng.uniform_range(-Self::RANGE, Self::RANGE),
                rng.uniform_range(-Self::RANGE, Self::RANGE),
            ];
            let e = model.eval(&x)[0] - Self::target(&x);
            total -= e * e;
        }
        total / n as f64
    }
}

impl RewardOracle for SlatesProblem {
    fn observe(&mut self) -> Vec<f64> {
        self.current = [
            self.rng.uniform_range(-Self::RANGE, Self::RANGE),
            self.rng.uniform_range(-Self::RANGE, Self::RANGE),
        ];
        self.current.to_vec()
    }

    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        expect_dim(decision, 1)?;
        self.count += 1;
        let e = decision[0] - Self::target(&self.current);
        Ok(-e * e)
    }

    fn query_count(&self) -> u64 {
        self.count
    }

    fn best_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Two-link inverse kinematics target (`None` where undefined).
pub fn inversek2j(x: f64, y: f64) -> Option<f64> {
    let r2 = x * x + y * y;
    let c = (r2 - 0.5) / 0.5;
    if r2 == 0.0 || !(-1.0..=1.0).contains(&c) {
        return None;
    }
    let th2 = c.acos();
    let s = (y * (0.5 + 0.5 * th2.cos()) - 0.5 * x * th2.sin()) / r2;
    if !(-1.0..=1.0).contains(&s) {
        return None;
    }
    Some(s.asin())
}

/// The 16 monomials `x^i·y^j`, `0 ≤ i, j ≤ 3`, `i`-major (so `x⁰y⁰` first).
pub fn monomials(x: f64, y: f64) -> [f64; 16] {
    let mut out = [0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            out[i * 4 + j] = x.powi(i as i32) * y.powi(j as i32);
        }
    }
    out
}

/// Piece-wise polynomial approximation of [`inversek2j`] over 100 valid
/// sample points. The feature stream carries the 15 non-constant monomials;
/// feature augmentation supplies the constant one.
#[derive(Debug, Clone)]
pub struct ParrotProblem {
    pub points: Vec<(f64, f64)>,
    pub targets: Vec<f64>,
    rng: RngStream,
    current: usize,
    count: u64,
}

impl ParrotProblem {
    pub const NUM_POINTS: usize = 100;
    pub const P: usize = 15;

    pub fn new(mut rng: RngStream) -> Self {
        let mut points = Vec::with_capacity(Self::NUM_POINTS);
        let mut targets = Vec::with_capacity(Self::NUM_POINTS);
        while points.len() < Self::NUM_POINTS {
            let (x, y) = (rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0));
            if let Some(t) = inversek2j(x, y) {
                points.push((x, y));
                targets.push(t);
            }
        }
        Self {
            points,
            targets,
            rng,
            current: 0,
            count: 0,
        }
    }

    pub fn features(x: f64, y: f64) -> Vec<f64> {
        monomials(x, y)[1..].to_vec()
    }

    /// Per-point relative errors `|f(x) − t| / |t|` on the sample set.
    pub fn relative_errors(&self, model: &Model) -> Vec<f64> {
        self.points
            .iter()
            .zip(&self.targets)
            .map(|(&(x, y), t)| (model.eval(&Self::features(x, y))[0] - t).abs() / t.abs())
            .collect()
    }

    pub fn expected_reward(&self, model: &Model) -> f64 {
        let total: f64 = self
            .points
            .iter()
            .zip(&self.targets)
            .map(|(&(x, y), t)| {
                let e = model.eval(&Self::features(x, y))[0] - t;
                -e * e
            })
            .sum();
        total / self.points.len() as f64
    }
}

impl RewardOracle for ParrotProblem {
    fn observe(&mut self) -> Vec<f64> {
        self.current = self.rng.index(self.points.len());
        let (x, y) = self.points[self.current];
        Self::features(x, y)
    }

    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        expect_dim(decision, 1)?;
        self.count += 1;
        let e = decision[0] - self.targets[self.current];
        Ok(-e * e)
    }

    fn query_count(&self) -> u64 {
        self.count
    }

    fn best_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Outcome of one thermostat simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermostatRun {
    pub error: f64,
    pub violations: u32,
}

/// Thermostat controller tuning: decisions are `(heat, on-offset,
/// off-offset)`; each query simulates 40 steps on every pre-sampled input
/// and returns the negative mean of squared final error plus 1000 per
/// violated assertion.
#[derive(Debug, Clone)]
pub struct ThermostatProblem {
    pub inputs: Vec<(f64, f64)>,
    count: u64,
}

impl ThermostatProblem {
    pub const PENALTY: f64 = 1000.0;
    pub const STEPS: usize = 40;
    pub const K: f64 = 0.1;
    pub const NUM_INPUTS: usize = 10_000;

    /// `lin ~ U[65, 75]`, `ltarget ~ U[75, 90]`.
    pub fn new(rng: &mut RngStream, n: usize) -> Self {
        let inputs = (0..n)
            .map(|_| (rng.uniform_range(65.0, 75.0), rng.uniform_range(75.0, 90.0)))
            .collect();
        Self { inputs, count: 0 }
    }

    /// Runs the controller once. Each of the four assertions counts at most
    /// once per run.
    pub fn simulate(a: &[f64], lin: f64, ltarget: f64) -> ThermostatRun {
        let h = a[0];
        let t_on = ltarget + a[1];
        let t_off = ltarget + a[2];
        let mut violations =
            u32::from(!(t_on < t_off)) + u32::from(!(h > 0.0)) + u32::from(!(h < 20.0));
        let mut is_on = false;
        let mut cur = lin;
        let mut overheated = false;
        for _ in 0..Self::STEPS {
            if is_on {
                cur += h - Self::K * (cur - lin);
                if cur > t_off {
                    is_on = false;
                }
            } else {
                cur -= Self::K * (cur - lin);
                if cur < t_on {
                    is_on = true;
                }
            }
            overheated |= !(cur < 120.0);
        }
        violations += u32::from(overheated);
        ThermostatRun {
            error: (cur - ltarget).abs(),
            violations,
        }
    }

    pub fn mean_loss(&self, a: &[f64]) -> f64 {
        let total: f64 = self
            .inputs
            .iter()
            .map(|&(lin, lt)| {
                let run = Self::simulate(a, lin, lt);
                run.error * run.error + Self::PENALTY * run.violations as f64
            })
            .sum();
        total / self.inputs.len() as f64
    }

    /// Mean absolute final error, the quantity reported as "error".
    pub fn expected_error(&self, a: &[f64]) -> f64 {
        let total: f64 = self
            .inputs
            .iter()
            .map(|&(lin, lt)| Self::simulate(a, lin, lt).error)
            .sum();
        total / self.inputs.len() as f64
    }
}

impl RewardOracle for ThermostatProblem {
    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        expect_dim(decision, 3)?;
        self.count += 1;
        Ok(-self.mean_loss(decision))
    }

    fn query_count(&self) -> u64 {
        self.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_instance_target() {
        let mut p = LinearLossProblem::from_parts(
            vec![1, 2],
            vec![vec![-2.0, 3.0], vec![-3.0, -1.0]],
            Loss::Abs,
        );
        assert_eq!(p.targets, vec![4.0, -5.0]);
        assert_eq!(p.observe(), vec![-2.0, 3.0]);
        assert_eq!(p.query(&[4.0]).unwrap(), 0.0);
        assert_eq!(p.query(&[1.0]).unwrap(), -3.0);
        assert_eq!(p.observe(), vec![-3.0, -1.0]);
        assert_eq!(p.observe(), vec![-2.0, 3.0]);
        let mut sq = LinearLossProblem::from_parts(vec![1, 2], vec![vec![-2.0, 3.0]], Loss::Sq);
        sq.observe();
        assert_eq!(sq.query(&[5.0]).unwrap(), -1.0);
        assert_eq!(sq.query_count(), 1);
    }

    #[test]
    fn random_instance_ranges() {
        let mut rng = RngStream::new(4);
        let p = LinearLossProblem::random(6, 12, Loss::Sq, &mut rng);
        assert_eq!(p.features.len(), 12);
        assert!(p.w_star.iter().all(|w| (0..=10).contains(w)));
        assert!(p
            .features
            .iter()
            .flatten()
            .all(|v| v.fract() == 0.0 && v.abs() <= 10.0));
    }

    #[test]
    fn xor_targets() {
        assert_eq!(XorProblem::target(&[0.5, 0.5]), 1.0);
        assert_eq!(XorProblem::target(&[0.5, -0.5]), 0.0);
        assert_eq!(XorProblem::target(&[-0.5, -0.5]), 1.0);
        let mut p = XorProblem::new(RngStream::new(1));
        let x = p.observe();
        assert_eq!(p.query(&[XorProblem::target(&x)]).unwrap(), 0.0);
    }

    #[test]
    fn slates_has_six_values_and_positive_variance() {
        let mut values: Vec<f64> = Vec::new();
        for i in 0..100 {
            for j in 0..100 {
                let x = -3.0 + 6.0 * (i as f64 + 0.5) / 100.0;
                let y = -3.0 + 6.0 * (j as f64 + 0.5) / 100.0;
                let v = SlatesProblem::target(&[x, y]);
                if !values.contains(&v) {
                    values.push(v);
                }
            }
        }
        assert_eq!(values.len(), 6);
        let allowed = [0.0, 0.1, 0.3, 0.47, 0.5, 0.81, 1.0];
        assert!(values.iter().all(|v| allowed.contains(v)));
        // best constant predictor still has strictly negative reward
        let mean: f64 = {
            let mut rng = RngStream::new(3);
            let n = 20_000;
            (0..n)
                .map(|_| {
                    SlatesProblem::target(&[
                        rng.uniform_range(-3.0, 3.0),
                        rng.uniform_range(-3.0, 3.0),
                    ])
                })
                .sum::<f64>()
                / n as f64
        };
        let r = SlatesProblem::expected_reward(&Model::Const { values: vec![mean] }, 20_000, 9);
        assert!(r < -0.05);
    }

    #[test]
    fn inversek2j_examples() {
        assert!(inversek2j(0.5, 0.5).unwrap().abs() < 1e-15);
        assert!(inversek2j(0.0, 0.0).is_none());
        assert!(inversek2j(1.0, 1.0).is_none());
        assert_eq!(monomials(1.0, 1.0), [1.0; 16]);
        let m = monomials(2.0, 3.0);
        assert_eq!(m[0], 1.0);
        assert_eq!(m[1], 3.0);
        assert_eq!(m[4], 2.0);
        assert_eq!(m[15], 8.0 * 27.0);
    }

    #[test]
    fn parrot_sampling() {
        let p = ParrotProblem::new(RngStream::new(2));
        assert_eq!(p.points.len(), 100);
        for (&(x, y), t) in p.points.iter().zip(&p.targets) {
            assert_eq!(inversek2j(x, y), Some(*t));
        }
        assert_eq!(ParrotProblem::features(0.3, 0.2).len(), ParrotProblem::P);
    }

    #[test]
    fn thermostat_penalties() {
        let mut rng = RngStream::new(8);
        let mut p = ThermostatProblem::new(&mut rng, 100);
        // on-threshold above off-threshold
        assert!(p.query(&[5.0, 1.0, 0.5]).unwrap() <= -1000.0);
        // no heat
        assert!(p.query(&[0.0, -1.0, 1.0]).unwrap() <= -1000.0);
        let a = [3.0, -1.0, 1.0];
        assert_eq!(
            ThermostatProblem::simulate(&a, 70.0, 80.0),
            ThermostatProblem::simulate(&a, 70.0, 80.0)
        );
        assert_eq!(ThermostatProblem::simulate(&a, 70.0, 80.0).violations, 0);
    }
}

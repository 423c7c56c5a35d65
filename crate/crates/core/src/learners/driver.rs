use std::collections::VecDeque;

use crate::error::Error;

use super::{Learner, Model, RewardOracle, RoundRecord, RoundTrace};

/// Convergence rule: stop once the best windowed mean reward has not
/// improved for `patience` consecutive rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub window: usize,
    pub patience: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            window: 25,
            patience: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxRounds,
    Converged,
    Callback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub model: Model,
    pub learner: Learner,
    pub trace: RoundTrace,
    pub reason: StopReason,
}

/// An oracle failure, with everything learned up to that point.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    pub outcome: Outcome,
}

struct Plateau {
    rule: StopRule,
    recent: VecDeque<f64>,
    sum: f64,
    best: f64,
    since_best: u64,
}

impl Plateau {
    fn new(rule: StopRule) -> Self {
        Self {
            rule,
            recent: VecDeque::new(),
            sum: 0.0,
            best: f64::NEG_INFINITY,
            since_best: 0,
        }
    }

    /// Returns true once the rule fires.
    fn observe(&mut self, reward: f64) -> bool {
        self.recent.push_back(reward);
        self.sum += reward;
        if self.recent.len() > self.rule.window {
            self.sum -= self.recent.pop_front().expect("non-empty");
        }
        if self.recent.len() < self.rule.window {
            return false;
        }
        let smoothed = self.sum / self.rule.window as f64;
        if smoothed > self.best {
            self.best = smoothed;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best >= self.rule.patience
    }
}

/// Runs observe → decide → query → update until `max_rounds` or the stop
/// rule fires.
pub fn learn_in_rounds(
    learner: Learner,
    oracle: &mut impl RewardOracle,
    stop: Option<StopRule>,
) -> Result<Outcome, Box<Aborted>> {
    learn_in_rounds_with(learner, oracle, stop, |_, _| Control::Continue)
}

/// [`learn_in_rounds`] with a per-round callback that may end the run early.
pub fn learn_in_rounds_with(
    mut learner: Learner,
    oracle: &mut impl RewardOracle,
    stop: Option<StopRule>,
    mut callback: impl FnMut(&Learner, &RoundRecord) -> Control,
) -> Result<Outcome, Box<Aborted>> {
    let mut trace = RoundTrace::default();
    let mut plateau = stop.map(Plateau::new);
    let max_rounds = learner.hyperparams().max_rounds;
    let mut reason = StopReason::MaxRounds;
    for _ in 0..max_rounds {
        let x = oracle.observe();
        let rec = match learner.step(&x, oracle) {
            Ok(rec) => rec,
            Err(error) => {
                let outcome = Outcome {
                    model: learner.model(),
                    learner,
                    trace,
                    reason,
                };
                return Err(Box::new(Aborted { error, outcome }));
            }
        };
        let converged = plateau
            .as_mut()
            .is_some_and(|p| p.observe(rec.played_reward()));
        let control = callback(&learner, &rec);
        trace.push(rec);
        if converged {
            reason = StopReason::Converged;
            break;
        }
        if control == Control::Stop {
            reason = StopReason::Callback;
            break;
        }
    }
    Ok(Outcome {
        model: learner.model(),
        learner,
        trace,
        reason,
    })
}

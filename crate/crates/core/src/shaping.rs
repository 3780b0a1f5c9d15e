//! Step-reward shaping for the constrained formulations: the un-augmented
//! budget reward, the Saute reference with an explicit budget variable, the
//! fixed-weight Lagrangian relaxation, and the pure reward / pure KL modes.

use crate::divergence::DivergenceKind;
use crate::env::Trajectory;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_BUDGET: f64 = 0.35;
pub const DEFAULT_PENALTY: f64 = 20.0;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const LAMBDA_GRID: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];

/// Which formulation turns a trajectory into step rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mode {
    /// Budget reconstructed from history; penalty `-(n + phi)` once exhausted.
    Unaugmented,
    /// Reference with an explicit remaining-budget variable; penalty `-n`.
    Saute,
    /// `R - lambda * C` at every step.
    Lagrangian(f64),
    RewardOnly,
    /// `-C` per step with single-step credit.
    KlOnly,
    /// `-C` per step with return-to-go credit.
    KlLongHorizon,
}

impl Mode {
    pub fn validate(&self) -> Result<()> {
        if let Mode::Lagrangian(l) = self {
            if !(*l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lagrangian weight must be finite and >= 0, got {l}")));
            }
        }
        Ok(())
    }

    /// Whether the likelihood-ratio term credits each action with only its own step reward.
    pub fn single_step_credit(&self) -> bool {
        matches!(self, Mode::KlOnly)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Unaugmented => f.write_str("unaugmented"),
            Mode::Saute => f.write_str("saute"),
            Mode::Lagrangian(l) => write!(f, "lagrangian({l})"),
            Mode::RewardOnly => f.write_str("reward-only"),
            Mode::KlOnly => f.write_str("kl-only"),
            Mode::KlLongHorizon => f.write_str("kl-long-horizon"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mode = match s {
            "unaugmented" => Mode::Unaugmented,
            "saute" => Mode::Saute,
            "reward-only" => Mode::RewardOnly,
            "kl-only" => Mode::KlOnly,
            "kl-long-horizon" => Mode::KlLongHorizon,
            _ => {
                let inner = s
                    .strip_prefix("lagrangian(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))?;
                let l: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad lagrangian weight in '{s}'")))?;
                Mode::Lagrangian(l)
            }
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl TryFrom<String> for Mode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstrainedRewardSpec {
    /// Budget `d` on the summed per-state cost.
    pub budget: f64,
    /// Violation penalty `n`.
    pub penalty: f64,
    /// Boundary tolerance of the explicit-dependence indicator.
    pub epsilon: f64,
    pub cost_kind: DivergenceKind,
    pub phi_kind: DivergenceKind,
    pub mode: Mode,
    pub gamma: f64,
}

impl Default for ConstrainedRewardSpec {
    fn default() -> Self {
        ConstrainedRewardSpec {
            budget: DEFAULT_BUDGET,
            penalty: DEFAULT_PENALTY,
            epsilon: DEFAULT_EPSILON,
            cost_kind: DivergenceKind::ReverseKl,
            phi_kind: DivergenceKind::ReverseKl,
            mode: Mode::Unaugmented,
            gamma: 1.0,
        }
    }
}

impl ConstrainedRewardSpec {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0) {
            return Err(Error::Config(format!("budget must be > 0, got {}", self.budget)));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::Config(format!("penalty must be finite and > 0, got {}", self.penalty)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        self.mode.validate()
    }

    /// Shaped step rewards for this spec's mode.
    pub fn shape(&self, traj: &Trajectory) -> Vec<f64> {
        match self.mode {
            Mode::Unaugmented => unaug_reward(traj, self),
            Mode::Saute => saute_reward(traj, self),
            Mode::Lagrangian(l) => lagrangian_step_reward(traj, l),
            Mode::RewardOnly => traj.steps.iter().map(|s| s.task_reward).collect(),
            Mode::KlOnly | Mode::KlLongHorizon => traj.steps.iter().map(|s| -s.cost).collect(),
        }
    }

    /// Discounted sum of [`shape`](Self::shape).
    pub fn shaped_return(&self, traj: &Trajectory) -> f64 {
        discounted_sum(&self.shape(traj), self.gamma)
    }
}

pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut g = 1.0;
    for r in rewards {
        acc += g * r;
        g *= gamma;
    }
    acc
}

/// Cost accumulated over a trajectory prefix against the budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetLedger {
    pub budget: f64,
    pub cumulative_cost: f64,
}

impl BudgetLedger {
    pub fn new(budget: f64) -> Self {
        BudgetLedger {
            budget,
            cumulative_cost: 0.0,
        }
    }

    /// Ledger after charging every cost in `costs`.
    pub fn from_costs(budget: f64, costs: &[f64]) -> Self {
        let mut l = BudgetLedger::new(budget);
        costs.iter().for_each(|&c| l.charge(c));
        l
    }

    pub fn charge(&mut self, cost: f64) {
        self.cumulative_cost += cost;
    }

    pub fn remaining(&self) -> f64 {
        self.budget - self.cumulative_cost
    }
}

/// True while the budget net of all costs charged so far is nonnegative.
/// The ledger must hold only the costs of steps strictly before the current one.
pub fn feasible_at(ledger: &BudgetLedger) -> bool {
    ledger.remaining() >= 0.0
}

/// Un-augmented constrained reward: the task reward while the budget
/// reconstructed from the history is nonnegative, `-(n + phi(s_T))` otherwise.
pub fn unaug_reward(traj: &Trajectory, spec: &ConstrainedRewardSpec) -> Vec<f64> {
    let mut ledger = BudgetLedger::new(spec.budget);
    traj.steps
        .iter()
        .map(|step| {
            let r = if feasible_at(&ledger) {
                step.task_reward
            } else {
                -(spec.penalty + step.phi)
            };
            ledger.charge(step.cost);
            r
        })
        .collect()
}

/// Saute reference: explicit budget variable `z_{t+1} = z_t - C(s_t)`, `z_0 = d`,
/// paying the task reward while `z_t >= 0` and `-n` otherwise.
pub fn saute_reward(traj: &Trajectory, spec: &ConstrainedRewardSpec) -> Vec<f64> {
    saute_budget_trace(traj, spec.budget)
        .iter()
        .zip(&traj.steps)
        .map(|(&z, step)| if z >= 0.0 { step.task_reward } else { -spec.penalty })
        .collect()
}

/// `z_t` before each step, by the recursion.
pub fn saute_budget_trace(traj: &Trajectory, budget: f64) -> Vec<f64> {
    let mut z = budget;
    traj.steps
        .iter()
        .map(|step| {
            let cur = z;
            z -= step.cost;
            cur
        })
        .collect()
}

/// `R(s_t, a_t) - lambda * C(s_t)`.
pub fn lagrangian_step_reward(traj: &Trajectory, lambda: f64) -> Vec<f64> {
    traj.steps
        .iter()
        .map(|s| s.task_reward - lambda * s.cost)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Step;
    use proptest::prelude::*;

    fn traj(costs: &[f64], phis: &[f64], final_reward: f64) -> Trajectory {
        let n = costs.len();
        Trajectory {
            steps: (0..n)
                .map(|t| Step {
                    state: t,
                    token: 0,
                    task_reward: if t + 1 == n { final_reward } else { 0.0 },
                    cost: costs[t],
                    phi: phis[t],
                })
                .collect(),
            terminated: true,
            truncated: false,
        }
    }

    #[test]
    fn ledger_feasibility_examples() {
        let l = BudgetLedger::from_costs(0.35, &[0.1, 0.2]);
        assert!((l.remaining() - 0.05).abs() < 1e-12);
        assert!(feasible_at(&l));
        let l = BudgetLedger::from_costs(0.35, &[0.2, 0.2]);
        assert!((l.remaining() + 0.05).abs() < 1e-12);
        assert!(!feasible_at(&l));
        assert!(feasible_at(&BudgetLedger::new(1e-9)));
    }

    #[test]
    fn feasible_path_pays_task_reward() {
        let t = traj(&[0.0; 4], &[0.0; 4], 1.0);
        let spec = ConstrainedRewardSpec::default();
        assert_eq!(unaug_reward(&t, &spec), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(saute_reward(&t, &spec), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn violation_at_step_two_pays_n_plus_phi() {
        // Costs through step 1 sum to 0.4 > 0.35, so step 2 is the first infeasible step.
        let t = traj(&[0.2, 0.2, 0.1, 0.0], &[0.0, 0.0, 0.4, 0.1], 1.0);
        let spec = ConstrainedRewardSpec::default();
        let r = unaug_reward(&t, &spec);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[1], 0.0);
        assert!((r[2] + 20.4).abs() < 1e-12);
        // Infeasibility absorbs the rest of the episode.
        assert!((r[3] + 20.1).abs() < 1e-12);
        let s = saute_reward(&t, &spec);
        assert_eq!(s, vec![0.0, 0.0, -20.0, -20.0]);
    }

    #[test]
    fn saute_single_violation_pays_minus_n() {
        let t = traj(&[0.3, 0.1], &[0.0, 0.0], 1.0);
        let spec = ConstrainedRewardSpec::default();
        assert_eq!(saute_reward(&t, &spec), vec![0.0, 1.0]);
        let t = traj(&[0.3, 0.1, 0.0], &[0.0; 3], 1.0);
        assert_eq!(saute_reward(&t, &spec), vec![0.0, 0.0, -20.0]);
    }

    #[test]
    fn lagrangian_examples() {
        let t = traj(&[0.1, 0.3], &[0.0, 0.0], 1.0);
        assert_eq!(lagrangian_step_reward(&t, 0.0), vec![0.0, 1.0]);
        let r = lagrangian_step_reward(&t, 1.0);
        assert!((r[0] + 0.1).abs() < 1e-15);
        for l in LAMBDA_GRID {
            let m: Mode = format!("lagrangian({l})").parse().unwrap();
            assert_eq!(m, Mode::Lagrangian(l));
        }
        assert!("lagrangian(-1)".parse::<Mode>().is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            Mode::Unaugmented,
            Mode::Saute,
            Mode::Lagrangian(0.01),
            Mode::RewardOnly,
            Mode::KlOnly,
            Mode::KlLongHorizon,
        ] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("grpo".parse::<Mode>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ConstrainedRewardSpec::default().validate().is_ok());
        assert!(ConstrainedRewardSpec::default().with_budget(0.0).validate().is_err());
        assert!(ConstrainedRewardSpec::default().with_penalty(-1.0).validate().is_err());
        assert!(ConstrainedRewardSpec::default().with_budget(f64::INFINITY).validate().is_ok());
    }

    fn arb_traj() -> impl Strategy<Value = Trajectory> {
        (1usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..0.3, n),
                proptest::collection::vec(0.0f64..2.0, n),
                prop_oneof![Just(0.0), Just(1.0)],
            )
                .prop_map(|(c, p, r)| traj(&c, &p, r))
        })
    }

    proptest! {
        #[test]
        fn saute_trace_telescopes(t in arb_traj(), d in 0.01f64..2.0) {
            let z = saute_budget_trace(&t, d);
            let mut prefix = 0.0;
            for (k, zk) in z.iter().enumerate() {
                prop_assert!((zk - (d - prefix)).abs() < 1e-12);
                prefix += t.steps[k].cost;
            }
        }

        #[test]
        fn feasible_branch_agrees(t in arb_traj()) {
            let spec = ConstrainedRewardSpec::default().with_budget(f64::INFINITY);
            let raw: Vec<f64> = t.steps.iter().map(|s| s.task_reward).collect();
            prop_assert_eq!(unaug_reward(&t, &spec), raw.clone());
            prop_assert_eq!(saute_reward(&t, &spec), raw);
        }

        #[test]
        fn harsher_penalty_never_pays_more(t in arb_traj(), n in 0.1f64..50.0, extra in 0.0f64..100.0) {
            let lo = ConstrainedRewardSpec::default().with_penalty(n);
            let hi = ConstrainedRewardSpec::default().with_penalty(n + extra);
            let a = unaug_reward(&t, &hi);
            let b = unaug_reward(&t, &lo);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(x <= y);
            }
            prop_assert!(discounted_sum(&a, 1.0) <= discounted_sum(&b, 1.0));
        }

        #[test]
        fn infeasibility_absorbs(t in arb_traj(), d in 0.01f64..1.0) {
            let mut ledger = BudgetLedger::new(d);
            let mut seen_infeasible = false;
            for s in &t.steps {
                let f = feasible_at(&ledger);
                prop_assert!(!(seen_infeasible && f));
                seen_infeasible |= !f;
                ledger.charge(s.cost);
            }
        }
    }
}

//! Finite token MDPs with deterministic transitions, episodic rollout under a
//! student policy, and exhaustive trajectory enumeration.

use crate::divergence::DivergenceKind;
use crate::error::{Error, Result};
use crate::policy::{SoftmaxPolicy, Table, TeacherPolicy};
use crate::shaping::ConstrainedRewardSpec;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_HORIZON: usize = 8;
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// Episodic environment whose actions are tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenMdp {
    num_states: usize,
    vocab_size: usize,
    transition: Vec<usize>,
    initial_state: usize,
    terminal: Vec<bool>,
    task_reward: Vec<f64>,
    horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub task_reward: f64,
    pub terminal: bool,
}

impl TokenMdp {
    /// `transitions[s][a]` is the successor of `s` under token `a`;
    /// `terminals` lists `(state, reward)` pairs with binary rewards.
    pub fn new(
        transitions: Vec<Vec<usize>>,
        initial_state: usize,
        terminals: &[(usize, f64)],
        horizon: usize,
    ) -> Result<Self> {
        let num_states = transitions.len();
        if num_states == 0 {
            return Err(Error::Input("mdp needs at least one state".into()));
        }
        let vocab_size = transitions[0].len();
        if vocab_size == 0 {
            return Err(Error::Input("mdp needs at least one token".into()));
        }
        if horizon == 0 {
            return Err(Error::Input("horizon must be positive".into()));
        }
        let mut flat = Vec::with_capacity(num_states * vocab_size);
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != vocab_size {
                return Err(Error::Input(format!(
                    "transition row {s} has {} entries, expected {vocab_size}",
                    row.len()
                )));
            }
            for (a, &next) in row.iter().enumerate() {
                if next >= num_states {
                    return Err(Error::Input(format!(
                        "transition ({s}, {a}) -> {next} is out of range"
                    )));
                }
            }
            flat.extend_from_slice(row);
        }
        let mut terminal = vec![false; num_states];
        let mut task_reward = vec![0.0; num_states];
        for &(s, r) in terminals {
            if s >= num_states {
                return Err(Error::Input(format!("terminal state {s} is out of range")));
            }
            if r != 0.0 && r != 1.0 {
                return Err(Error::Input(format!(
                    "terminal reward at state {s} must be 0 or 1, got {r}"
                )));
            }
            if terminal[s] {
                return Err(Error::Input(format!("terminal state {s} listed twice")));
            }
            terminal[s] = true;
            task_reward[s] = r;
        }
        if initial_state >= num_states {
            return Err(Error::Input(format!("initial state {initial_state} is out of range")));
        }
        if terminal[initial_state] {
            return Err(Error::Input("initial state must not be terminal".into()));
        }
        Ok(TokenMdp {
            num_states,
            vocab_size,
            transition: flat,
            initial_state,
            terminal,
            task_reward,
            horizon,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Input("horizon must be positive".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn terminal_reward(&self, state: usize) -> f64 {
        self.task_reward[state]
    }

    pub fn next_state(&self, state: usize, token: usize) -> usize {
        self.transition[state * self.vocab_size + token]
    }

    pub fn step(&self, state: usize, token: usize) -> Result<StepOutcome> {
        if state >= self.num_states {
            return Err(Error::Input(format!("state {state} is out of range")));
        }
        if token >= self.vocab_size {
            return Err(Error::Input(format!("token {token} is out of range")));
        }
        let next = self.next_state(state, token);
        let terminal = self.terminal[next];
        Ok(StepOutcome {
            next_state: next,
            task_reward: if terminal { self.task_reward[next] } else { 0.0 },
            terminal,
        })
    }

    /// Number of distinct trajectories from the initial state, saturating at `u64::MAX`.
    pub fn trajectory_count(&self) -> u64 {
        // leaves[s] for the remaining-steps budget being iterated.
        let mut leaves = vec![1u64; self.num_states];
        for _ in 0..self.horizon {
            let mut next = vec![0u64; self.num_states];
            for s in 0..self.num_states {
                next[s] = if self.terminal[s] {
                    1
                } else {
                    (0..self.vocab_size)
                        .map(|a| leaves[self.next_state(s, a)])
                        .fold(0u64, |acc, c| acc.saturating_add(c))
                };
            }
            leaves = next;
        }
        leaves[self.initial_state]
    }

    pub(crate) fn check_policies(&self, student: &SoftmaxPolicy, teacher: &TeacherPolicy) -> Result<()> {
        let want = (self.num_states, self.vocab_size);
        let got_s = (student.num_states(), student.vocab_size());
        let got_t = (teacher.num_states(), teacher.vocab_size());
        if got_s != want || got_t != want {
            return Err(Error::Input(format!(
                "policy shapes student {got_s:?} / teacher {got_t:?} do not match mdp {want:?}"
            )));
        }
        Ok(())
    }
}

/// One decision: the state the token was drawn in, the task reward of the
/// transition, and the divergence cost and penalty discrepancy of that state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub token: usize,
    pub task_reward: f64,
    pub cost: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminated: bool,
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn task_return(&self) -> f64 {
        self.steps.iter().map(|s| s.task_reward).sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }

    /// Whether the summed cost of the whole episode stays within `budget`.
    pub fn within_budget(&self, budget: f64) -> bool {
        self.total_cost() <= budget
    }

    /// Copy with every penalty discrepancy set to zero.
    pub fn without_phi(&self) -> Trajectory {
        let mut t = self.clone();
        t.steps.iter_mut().for_each(|s| s.phi = 0.0);
        t
    }
}

/// Per-state cost and penalty discrepancy for a fixed (student, teacher) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCosts {
    pub cost: Vec<f64>,
    pub phi: Vec<f64>,
}

impl StateCosts {
    pub fn new(
        student: &SoftmaxPolicy,
        teacher: &TeacherPolicy,
        cost_kind: DivergenceKind,
        phi_kind: DivergenceKind,
    ) -> Self {
        let n = student.num_states();
        let mut cost = Vec::with_capacity(n);
        let mut phi = Vec::with_capacity(n);
        for s in 0..n {
            let p = student.action_probs(s);
            let q = teacher.probs(s);
            let c = cost_kind.eval(&p, q);
            cost.push(c);
            phi.push(if phi_kind == cost_kind { c } else { phi_kind.eval(&p, q) });
        }
        StateCosts { cost, phi }
    }
}

/// Everything needed to sample or enumerate episodes for one policy snapshot.
#[derive(Debug, Clone)]
pub struct EpisodeModel<'a> {
    mdp: &'a TokenMdp,
    probs: Table,
    costs: StateCosts,
}

impl<'a> EpisodeModel<'a> {
    pub fn new(
        mdp: &'a TokenMdp,
        student: &SoftmaxPolicy,
        teacher: &TeacherPolicy,
        spec: &ConstrainedRewardSpec,
    ) -> Result<Self> {
        mdp.check_policies(student, teacher)?;
        Ok(EpisodeModel {
            mdp,
            probs: student.prob_table(),
            costs: StateCosts::new(student, teacher, spec.cost_kind, spec.phi_kind),
        })
    }

    pub fn mdp(&self) -> &TokenMdp {
        self.mdp
    }

    pub fn costs(&self) -> &StateCosts {
        &self.costs
    }

    pub fn probs(&self) -> &Table {
        &self.probs
    }

    fn make_step(&self, state: usize, token: usize) -> (Step, StepOutcome) {
        let next = self.mdp.next_state(state, token);
        let terminal = self.mdp.is_terminal(next);
        let outcome = StepOutcome {
            next_state: next,
            task_reward: if terminal { self.mdp.terminal_reward(next) } else { 0.0 },
            terminal,
        };
        let step = Step {
            state,
            token,
            task_reward: outcome.task_reward,
            cost: self.costs.cost[state],
            phi: self.costs.phi[state],
        };
        (step, outcome)
    }

    /// Samples one episode under the student.
    pub fn rollout<R: Rng + ?Sized>(&self, rng: &mut R) -> Trajectory {
        let mut traj = Trajectory {
            steps: Vec::with_capacity(self.mdp.horizon),
            ..Default::default()
        };
        let mut state = self.mdp.initial_state;
        for _ in 0..self.mdp.horizon {
            let token = sample_index(self.probs.row(state), rng);
            let (step, outcome) = self.make_step(state, token);
            traj.steps.push(step);
            state = outcome.next_state;
            if outcome.terminal {
                traj.terminated = true;
                return traj;
            }
        }
        traj.truncated = true;
        traj
    }

    /// Visits every trajectory with its probability under the student.
    pub fn for_each_trajectory<F>(&self, cap: usize, mut visit: F) -> Result<()>
    where
        F: FnMut(&Trajectory, f64),
    {
        if self.mdp.trajectory_count() > cap as u64 {
            return Err(Error::EnumerationCap { cap });
        }
        let mut buf = Trajectory {
            steps: Vec::with_capacity(self.mdp.horizon),
            ..Default::default()
        };
        self.descend(self.mdp.initial_state, 1.0, &mut buf, &mut visit);
        Ok(())
    }

    fn descend<F>(&self, state: usize, prob: f64, buf: &mut Trajectory, visit: &mut F)
    where
        F: FnMut(&Trajectory, f64),
    {
        for token in 0..self.mdp.vocab_size {
            let p = prob * self.probs.get(state, token);
            let (step, outcome) = self.make_step(state, token);
            buf.steps.push(step);
            if outcome.terminal {
                buf.terminated = true;
                buf.truncated = false;
                visit(buf, p);
            } else if buf.steps.len() == self.mdp.horizon {
                buf.terminated = false;
                buf.truncated = true;
                visit(buf, p);
            } else {
                self.descend(outcome.next_state, p, buf, visit);
            }
            buf.steps.pop();
        }
    }

    pub fn enumerate(&self, cap: usize) -> Result<Vec<(Trajectory, f64)>> {
        let mut out = Vec::new();
        self.for_each_trajectory(cap, |t, p| out.push((t.clone(), p)))?;
        Ok(out)
    }
}

/// Inverse-CDF draw from a probability row.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn rollout<R: Rng + ?Sized>(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    Ok(EpisodeModel::new(mdp, student, teacher, spec)?.rollout(rng))
}

/// Every trajectory of the episode tree paired with its probability.
pub fn enumerate_trajectories(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    cap: usize,
) -> Result<Vec<(Trajectory, f64)>> {
    EpisodeModel::new(mdp, student, teacher, spec)?.enumerate(cap)
}

/// Human-readable task description: states, transitions, terminal rewards,
/// and optionally the teacher table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDefinition {
    pub initial_state: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// One row per state; entry `a` is the successor under token `a`.
    pub transitions: Vec<Vec<usize>>,
    pub terminals: Vec<TerminalSpec>,
    /// One probability row per state.
    #[serde(default)]
    pub teacher: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSpec {
    pub state: usize,
    pub reward: f64,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

impl TaskDefinition {
    pub fn to_mdp(&self) -> Result<TokenMdp> {
        let terminals: Vec<(usize, f64)> = self.terminals.iter().map(|t| (t.state, t.reward)).collect();
        TokenMdp::new(self.transitions.clone(), self.initial_state, &terminals, self.horizon)
    }

    pub fn to_teacher(&self, floor: f64) -> Result<Option<TeacherPolicy>> {
        let Some(rows) = &self.teacher else {
            return Ok(None);
        };
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Input("teacher rows must all have the same length".into()));
        }
        let table = Table::from_vec(rows.len(), cols, rows.concat())?;
        TeacherPolicy::from_probs(table, floor).map(Some)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::DEFAULT_FLOOR;
    use crate::rng::RunSeed;
    use crate::tasks;

    fn spec() -> ConstrainedRewardSpec {
        ConstrainedRewardSpec::default()
    }

    #[test]
    fn chain_steps() {
        let mdp = tasks::chain(3, 8).unwrap();
        let out = mdp.step(0, tasks::ADVANCE).unwrap();
        assert_eq!(out, StepOutcome { next_state: 1, task_reward: 0.0, terminal: false });
        let out = mdp.step(2, tasks::ADVANCE).unwrap();
        assert_eq!(out.task_reward, 1.0);
        assert!(out.terminal);
        assert_eq!(out.next_state, tasks::chain_goal(3));
        let out = mdp.step(2, tasks::WRONG).unwrap();
        assert_eq!(out, StepOutcome { next_state: tasks::chain_sink(3), task_reward: 0.0, terminal: true });
        assert!(matches!(mdp.step(99, 0), Err(Error::Input(_))));
        assert!(matches!(mdp.step(0, 7), Err(Error::Input(_))));
    }

    #[test]
    fn rejects_malformed_mdps() {
        assert!(TokenMdp::new(vec![vec![0, 5]], 0, &[], 3).is_err());
        assert!(TokenMdp::new(vec![vec![0, 1], vec![1, 1]], 0, &[(1, 0.5)], 3).is_err());
        assert!(TokenMdp::new(vec![vec![0, 1], vec![1]], 0, &[(1, 1.0)], 3).is_err());
        assert!(TokenMdp::new(vec![vec![0, 1], vec![1, 1]], 1, &[(1, 1.0)], 3).is_err());
        assert!(TokenMdp::new(vec![vec![0, 1], vec![1, 1]], 0, &[(1, 1.0)], 0).is_err());
    }

    #[test]
    fn identical_student_and_teacher_cost_nothing() {
        let mdp = tasks::chain(3, 8).unwrap();
        let student = SoftmaxPolicy::uniform(mdp.num_states(), mdp.vocab_size(), DEFAULT_FLOOR);
        let teacher = TeacherPolicy::copy_of(&student);
        let mut rng = RunSeed(1).stream(&[]);
        for _ in 0..50 {
            let t = rollout(&mdp, &student, &teacher, &spec(), &mut rng).unwrap();
            assert!(t.steps.iter().all(|s| s.cost == 0.0));
        }
    }

    #[test]
    fn deterministic_student_walks_the_chain() {
        let mdp = tasks::chain(3, 8).unwrap();
        let mut student = SoftmaxPolicy::uniform(mdp.num_states(), mdp.vocab_size(), DEFAULT_FLOOR);
        for s in 0..mdp.num_states() {
            student.logits_mut().set(s, tasks::ADVANCE, 40.0);
        }
        let teacher = tasks::chain_teacher(&mdp, 0.8, DEFAULT_FLOOR).unwrap();
        let t = rollout(&mdp, &student, &teacher, &spec(), &mut RunSeed(3).stream(&[])).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.terminated && !t.truncated);
        assert_eq!(t.task_return(), 1.0);
        // Oracle: direct KL sum over the visited rows.
        let mut expected = 0.0;
        for s in 0..3 {
            let p = student.action_probs(s);
            let q = teacher.probs(s);
            let kl_s: f64 = p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum();
            assert!((t.steps[s].cost - kl_s).abs() < 1e-12);
            expected += kl_s;
        }
        assert!((t.total_cost() - expected).abs() < 1e-12);
    }

    #[test]
    fn horizon_truncates() {
        let mdp = tasks::chain(5, 2).unwrap();
        let mut student = SoftmaxPolicy::uniform(mdp.num_states(), mdp.vocab_size(), DEFAULT_FLOOR);
        for s in 0..mdp.num_states() {
            student.logits_mut().set(s, tasks::ADVANCE, 40.0);
        }
        let teacher = TeacherPolicy::copy_of(&student);
        let t = rollout(&mdp, &student, &teacher, &spec(), &mut RunSeed(0).stream(&[])).unwrap();
        assert!(t.truncated);
        assert_eq!(t.len(), 2);
        assert_eq!(t.task_return(), 0.0);
    }

    #[test]
    fn enumeration_is_normalized() {
        let mdp = TokenMdp::new(vec![vec![0, 0], vec![1, 1]], 0, &[(1, 1.0)], 3).unwrap();
        let student = SoftmaxPolicy::uniform(2, 2, DEFAULT_FLOOR);
        let teacher = TeacherPolicy::copy_of(&student);
        let all = enumerate_trajectories(&mdp, &student, &teacher, &spec(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(all.len() <= 8);
        let total: f64 = all.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_single_step_splits_evenly() {
        let mdp = TokenMdp::new(vec![vec![1, 2], vec![1, 1], vec![2, 2]], 0, &[(1, 1.0), (2, 0.0)], 1).unwrap();
        let student = SoftmaxPolicy::uniform(3, 2, DEFAULT_FLOOR);
        let teacher = TeacherPolicy::copy_of(&student);
        let all = enumerate_trajectories(&mdp, &student, &teacher, &spec(), 10).unwrap();
        assert_eq!(all.len(), 2);
        for (_, p) in &all {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let mdp = TokenMdp::new(vec![vec![0, 0, 0]], 0, &[], 8).unwrap();
        assert_eq!(mdp.trajectory_count(), 3u64.pow(8));
        let student = SoftmaxPolicy::uniform(1, 3, DEFAULT_FLOOR);
        let teacher = TeacherPolicy::copy_of(&student);
        let r = enumerate_trajectories(&mdp, &student, &teacher, &spec(), 1000);
        assert!(matches!(r, Err(Error::EnumerationCap { cap: 1000 })));
    }

    #[test]
    fn task_definition_parses_from_toml() {
        let text = r#"
            initial_state = 0
            horizon = 4
            transitions = [[1, 2], [3, 2], [2, 2], [3, 3]]
            terminals = [{ state = 2, reward = 0.0 }, { state = 3, reward = 1.0 }]
            teacher = [[0.9, 0.1], [0.8, 0.2], [0.5, 0.5], [0.5, 0.5]]
        "#;
        let def = TaskDefinition::from_toml(text).unwrap();
        let mdp = def.to_mdp().unwrap();
        assert_eq!(mdp.horizon(), 4);
        assert_eq!(mdp.step(1, 0).unwrap().task_reward, 1.0);
        let teacher = def.to_teacher(DEFAULT_FLOOR).unwrap().unwrap();
        assert!((teacher.probs(0)[0] - 0.9).abs() < 1e-7);
        assert!(TaskDefinition::from_toml("initial_state = 0\nbogus = 1\ntransitions=[[0]]\nterminals=[]").is_err());
    }
}

//! Built-in task families: the plain chain, a one-decision task, the
//! chain-with-distractors tension task, and random small instances.

use crate::error::{Error, Result};
use crate::env::TokenMdp;
use crate::policy::{SoftmaxPolicy, Table, TeacherPolicy};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const ADVANCE: usize = 0;
pub const WRONG: usize = 1;
/// Third token of the tension task: stays in the current reasoning state.
pub const REPEAT: usize = 2;

/// Chain of `length` decision states. `ADVANCE` moves forward (from the last
/// state into the goal), `WRONG` drops into the sink.
pub fn chain(length: usize, horizon: usize) -> Result<TokenMdp> {
    if length == 0 {
        return Err(Error::Config("chain length must be positive".into()));
    }
    let goal = chain_goal(length);
    let sink = chain_sink(length);
    let mut transitions = Vec::with_capacity(length + 2);
    for s in 0..length {
        let next = if s + 1 == length { goal } else { s + 1 };
        transitions.push(vec![next, sink]);
    }
    transitions.push(vec![goal, goal]);
    transitions.push(vec![sink, sink]);
    TokenMdp::new(transitions, 0, &[(goal, 1.0), (sink, 0.0)], horizon)
}

pub fn chain_goal(length: usize) -> usize {
    length
}

pub fn chain_sink(length: usize) -> usize {
    length + 1
}

/// Teacher putting `p_advance` on `ADVANCE` and spreading the rest evenly;
/// terminal rows are uniform.
pub fn chain_teacher(mdp: &TokenMdp, p_advance: f64, floor: f64) -> Result<TeacherPolicy> {
    if !(0.0..=1.0).contains(&p_advance) {
        return Err(Error::Config(format!("advance probability {p_advance} outside [0, 1]")));
    }
    let (n, v) = (mdp.num_states(), mdp.vocab_size());
    let mut t = Table::zeros(n, v);
    for s in 0..n {
        let row = t.row_mut(s);
        if mdp.is_terminal(s) || v == 1 {
            row.fill(1.0 / v as f64);
        } else {
            row.fill((1.0 - p_advance) / (v - 1) as f64);
            row[ADVANCE] = p_advance;
        }
    }
    TeacherPolicy::from_probs(t, floor)
}

/// One decision: token 0 reaches the goal, every other token the sink.
pub fn single_step(vocab_size: usize) -> Result<TokenMdp> {
    if vocab_size < 2 {
        return Err(Error::Config("single-step task needs at least two tokens".into()));
    }
    let mut first = vec![2; vocab_size];
    first[0] = 1;
    TokenMdp::new(vec![first, vec![1; vocab_size], vec![2; vocab_size]], 0, &[(1, 1.0), (2, 0.0)], 1)
}

/// Teacher for [`single_step`]: `p_correct` on token 0, the rest spread
/// evenly; uniform at the terminal states.
pub fn single_step_teacher(mdp: &TokenMdp, p_correct: f64, floor: f64) -> Result<TeacherPolicy> {
    if !(0.0..=1.0).contains(&p_correct) {
        return Err(Error::Config(format!("teacher probability must lie in [0, 1], got {p_correct}")));
    }
    let v = mdp.vocab_size();
    let mut t = Table::zeros(mdp.num_states(), v);
    for s in 0..mdp.num_states() {
        let row = t.row_mut(s);
        if s == mdp.initial_state() {
            row.fill((1.0 - p_correct) / (v - 1) as f64);
            row[0] = p_correct;
        } else {
            row.fill(1.0 / v as f64);
        }
    }
    TeacherPolicy::from_probs(t, floor)
}

/// Chain-with-distractors parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TensionParams {
    /// Number of reasoning states on the goal path.
    pub length: usize,
    /// Teacher mass on the distractor token at each reasoning state.
    pub teacher_wrong: f64,
    /// Teacher mass on the repeat token at each reasoning state.
    pub teacher_repeat: f64,
    /// Teacher mass on the first token at the two emit states.
    pub emit_peak: f64,
    pub horizon: usize,
}

impl Default for TensionParams {
    fn default() -> Self {
        TensionParams {
            length: 5,
            teacher_wrong: 0.07,
            teacher_repeat: 0.0,
            emit_peak: 0.99,
            horizon: 8,
        }
    }
}

/// State layout of the tension task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensionLayout {
    pub length: usize,
}

impl TensionLayout {
    pub fn emit_good(&self) -> usize {
        self.length
    }
    pub fn emit_bad(&self) -> usize {
        self.length + 1
    }
    pub fn goal(&self) -> usize {
        self.length + 2
    }
    pub fn sink(&self) -> usize {
        self.length + 3
    }
}

/// Chain of reasoning states where `ADVANCE` moves on, `WRONG` commits to a
/// wrong answer and `REPEAT` dwells in the same state. Every answer is emitted
/// through one more state before the episode ends, so the whole path's
/// divergence is on the books when the answer is paid.
pub fn tension(params: &TensionParams, floor: f64) -> Result<(TokenMdp, TeacherPolicy)> {
    let TensionParams {
        length,
        teacher_wrong,
        teacher_repeat,
        emit_peak,
        horizon,
    } = *params;
    if length == 0 {
        return Err(Error::Config("tension length must be positive".into()));
    }
    let advance = 1.0 - teacher_wrong - teacher_repeat;
    if !(teacher_wrong >= 0.0 && teacher_repeat >= 0.0 && advance > 0.0) {
        return Err(Error::Config("tension teacher masses must be >= 0 and leave room to advance".into()));
    }
    if !(emit_peak > 0.0 && emit_peak <= 1.0) {
        return Err(Error::Config(format!("emit peak {emit_peak} outside (0, 1]")));
    }
    let lay = TensionLayout { length };
    let v = if teacher_repeat > 0.0 { 3 } else { 2 };
    let mut transitions = Vec::with_capacity(length + 4);
    for s in 0..length {
        let next = if s + 1 == length { lay.emit_good() } else { s + 1 };
        let mut row = vec![next, lay.emit_bad(), s];
        row.truncate(v);
        transitions.push(row);
    }
    transitions.push(vec![lay.goal(); v]);
    transitions.push(vec![lay.sink(); v]);
    transitions.push(vec![lay.goal(); v]);
    transitions.push(vec![lay.sink(); v]);
    let mdp = TokenMdp::new(transitions, 0, &[(lay.goal(), 1.0), (lay.sink(), 0.0)], horizon)?;

    let mut probs = Table::zeros(length + 4, v);
    for s in 0..length {
        probs.row_mut(s).copy_from_slice(&[advance, teacher_wrong, teacher_repeat][..v]);
    }
    let rest = (1.0 - emit_peak) / (v - 1) as f64;
    for s in [lay.emit_good(), lay.emit_bad()] {
        let row = probs.row_mut(s);
        row.fill(rest);
        row[0] = emit_peak;
    }
    for s in [lay.goal(), lay.sink()] {
        probs.row_mut(s).fill(1.0 / v as f64);
    }
    Ok((mdp, TeacherPolicy::from_probs(probs, floor)?))
}

/// A random small instance with a random student and teacher.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub mdp: TokenMdp,
    pub student: SoftmaxPolicy,
    pub teacher: TeacherPolicy,
}

/// At most 6 states, 2 to 4 tokens, horizon 1 to 5; state 0 starts and at
/// least one other state is terminal.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, floor: f64) -> Result<RandomInstance> {
    let n = rng.random_range(2..=6usize);
    let v = rng.random_range(2..=4usize);
    let h = rng.random_range(1..=5usize);
    let mut terminals = Vec::new();
    for s in 1..n {
        if terminals.is_empty() && s + 1 == n || rng.random_bool(0.4) {
            terminals.push((s, if rng.random_bool(0.5) { 1.0 } else { 0.0 }));
        }
    }
    let transitions = (0..n)
        .map(|_| (0..v).map(|_| rng.random_range(0..n)).collect())
        .collect();
    let mdp = TokenMdp::new(transitions, 0, &terminals, h)?;
    let logits = (0..n * v).map(|_| rng.random_range(-3.0..3.0)).collect();
    let student = SoftmaxPolicy::from_logits(Table::from_vec(n, v, logits)?, floor)?;
    let mut probs = Table::zeros(n, v);
    for s in 0..n {
        let row = probs.row_mut(s);
        row.iter_mut().for_each(|x| *x = rng.random_range(0.05..1.0f64).powi(2));
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= z);
    }
    let teacher = TeacherPolicy::from_probs(probs, floor)?;
    Ok(RandomInstance { mdp, student, teacher })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::DEFAULT_FLOOR;
    use crate::rng::RunSeed;

    #[test]
    fn chain_layout() {
        let mdp = chain(3, 8).unwrap();
        assert_eq!(mdp.num_states(), 5);
        assert_eq!(mdp.trajectory_count(), 4);
        assert!(mdp.is_terminal(chain_goal(3)) && mdp.is_terminal(chain_sink(3)));
    }

    #[test]
    fn tension_paths() {
        let p = TensionParams { teacher_repeat: 0.1, ..TensionParams::default() };
        let (mdp, teacher) = tension(&p, DEFAULT_FLOOR).unwrap();
        let lay = TensionLayout { length: p.length };
        let mut s = 0;
        for _ in 0..p.length {
            s = mdp.step(s, ADVANCE).unwrap().next_state;
        }
        assert_eq!(s, lay.emit_good());
        let out = mdp.step(s, 1).unwrap();
        assert_eq!((out.next_state, out.task_reward, out.terminal), (lay.goal(), 1.0, true));
        assert_eq!(mdp.step(2, WRONG).unwrap().next_state, lay.emit_bad());
        assert_eq!(mdp.step(1, REPEAT).unwrap().next_state, 1);
        assert!((teacher.probs(0)[WRONG] - 0.07).abs() < 1e-7);
        let (plain, _) = tension(&TensionParams::default(), DEFAULT_FLOOR).unwrap();
        assert_eq!(plain.vocab_size(), 2);
    }

    #[test]
    fn random_instances_respect_bounds() {
        for i in 0..200 {
            let inst = random_instance(&mut RunSeed(5).stream(&[i]), DEFAULT_FLOOR).unwrap();
            assert!(inst.mdp.num_states() <= 6);
            assert!((2..=4).contains(&inst.mdp.vocab_size()));
            assert!(inst.mdp.horizon() <= 5);
            assert!(inst.mdp.trajectory_count() <= 4u64.pow(5));
        }
    }
}

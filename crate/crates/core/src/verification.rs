//! Executable checks of the formulation's guarantees on small instances, all
//! decided by exact enumeration.

use crate::divergence::{divergence_gradient_row, kl_upper_bound, DivergenceKind};
use crate::env::{EpisodeModel, StateCosts, TokenMdp, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::gradient::objective;
use crate::policy::{SoftmaxPolicy, Table, TeacherPolicy};
use crate::rng::RunSeed;
use crate::shaping::{saute_reward, unaug_reward, ConstrainedRewardSpec, Mode};
use crate::solvers::hits_penalty_branch;
use crate::tasks::random_instance;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const RETURN_EQUIVALENCE: &str = "return-equivalence";
pub const MONOTONE_IN_PENALTY: &str = "monotone-in-penalty";
pub const PENALTY_STABILIZATION: &str = "penalty-stabilization";
pub const BELLMAN_RESIDUAL: &str = "bellman-residual";
pub const CONSTRAINT_SATISFACTION: &str = "constraint-satisfaction";
pub const VIOLATION_TREND: &str = "violation-trend";
pub const ASSUMPTION_FINITENESS: &str = "assumption-finiteness";
pub const ASSUMPTION_FEASIBILITY: &str = "assumption-feasibility";

pub const DEFAULT_PENALTY_GRID: [f64; 5] = [1.0, 5.0, 20.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub instances: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seeds: Vec<u64>,
}

impl TheoremReport {
    fn new(theorem: &str, instances: usize, max_deviation: f64, tolerance: f64, seeds: Vec<u64>) -> Self {
        TheoremReport {
            theorem: theorem.to_string(),
            instances,
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
            seeds,
        }
    }
}

/// Budget drawn per instance: mostly moderate, sometimes unreachable or
/// infinite so both degenerate branches are exercised.
fn random_budget<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    match rng.random_range(0..10) {
        0 => f64::INFINITY,
        1 => 1e-9,
        _ => rng.random_range(0.05..3.0),
    }
}

/// Trajectory-wise agreement of the Saute and un-augmented returns with the
/// discrepancy term zeroed, over random instances.
pub fn check_return_equivalence(instances: usize, seed: RunSeed) -> Result<TheoremReport> {
    let devs: Vec<Result<f64>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.stream(&[i as u64]);
            let inst = random_instance(&mut rng, 1e-8)?;
            let spec = ConstrainedRewardSpec::default()
                .with_budget(random_budget(&mut rng))
                .with_penalty(rng.random_range(0.5..50.0));
            let gamma = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.5..1.0) };
            let spec = ConstrainedRewardSpec { gamma, ..spec };
            let model = EpisodeModel::new(&inst.mdp, &inst.student, &inst.teacher, &spec)?;
            let mut dev: f64 = 0.0;
            model.for_each_trajectory(DEFAULT_ENUMERATION_CAP, |traj, _| {
                let t = traj.without_phi();
                let a = crate::shaping::discounted_sum(&saute_reward(&t, &spec), gamma);
                let b = crate::shaping::discounted_sum(&unaug_reward(&t, &spec), gamma);
                dev = dev.max((a - b).abs());
            })?;
            Ok(dev)
        })
        .collect();
    let mut max = 0.0f64;
    for d in devs {
        max = max.max(d?);
    }
    Ok(TheoremReport::new(RETURN_EQUIVALENCE, instances, max, 1e-12, vec![seed.0]))
}

/// Exact un-augmented values of each policy at each penalty of `n_grid`.
pub fn penalty_values(
    mdp: &TokenMdp,
    teacher: &TeacherPolicy,
    policies: &[SoftmaxPolicy],
    spec: &ConstrainedRewardSpec,
    n_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    policies
        .par_iter()
        .map(|p| {
            n_grid
                .iter()
                .map(|&n| {
                    let s = spec.with_mode(Mode::Unaugmented).with_penalty(n);
                    objective(mdp, p, teacher, &s, DEFAULT_ENUMERATION_CAP)
                })
                .collect()
        })
        .collect()
}

/// Probability that some step of an episode lands on the penalty branch.
pub fn penalty_branch_probability(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
) -> Result<f64> {
    let model = EpisodeModel::new(mdp, student, teacher, spec)?;
    let mut mass = 0.0;
    model.for_each_trajectory(DEFAULT_ENUMERATION_CAP, |t, p| {
        if hits_penalty_branch(t, spec.budget) {
            mass += p;
        }
    })?;
    Ok(mass)
}

/// Values must not increase along an ascending penalty grid. Returns the
/// monotonicity report and, for policies that never reach the penalty
/// branch, a report that the values agree across the last two penalties.
pub fn check_monotone_in_n(
    mdp: &TokenMdp,
    teacher: &TeacherPolicy,
    policies: &[SoftmaxPolicy],
    spec: &ConstrainedRewardSpec,
    n_grid: &[f64],
    seed: RunSeed,
) -> Result<(TheoremReport, TheoremReport)> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("penalty grid must hold at least two ascending values".into()));
    }
    let values = penalty_values(mdp, teacher, policies, spec, n_grid)?;
    let mut rise: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let mut feasible = 0;
    for (p, v) in policies.iter().zip(&values) {
        for w in v.windows(2) {
            rise = rise.max(w[1] - w[0]);
        }
        if penalty_branch_probability(mdp, p, teacher, spec)? == 0.0 {
            feasible += 1;
            let k = v.len();
            drift = drift.max((v[k - 1] - v[k - 2]).abs());
        }
    }
    let mono = TheoremReport::new(MONOTONE_IN_PENALTY, policies.len(), rise.max(0.0), 1e-12, vec![seed.0]);
    let stable = TheoremReport::new(PENALTY_STABILIZATION, feasible, drift, 1e-9, vec![seed.0]);
    Ok((mono, stable))
}

/// An environment, its teacher, the reward parameters, and policies to probe.
pub type PolicySet = (TokenMdp, TeacherPolicy, ConstrainedRewardSpec, Vec<SoftmaxPolicy>);

/// Random instances paired with random policies, for the penalty checks.
pub fn random_policy_battery(
    instances: usize,
    policies_per_instance: usize,
    seed: RunSeed,
) -> Result<Vec<PolicySet>> {
    (0..instances)
        .map(|i| {
            let mut rng = seed.stream(&[i as u64]);
            let inst = random_instance(&mut rng, 1e-8)?;
            let spec = ConstrainedRewardSpec::default().with_budget(rng.random_range(0.1..4.0));
            let (n, v) = (inst.mdp.num_states(), inst.mdp.vocab_size());
            let mut policies = vec![inst.student, SoftmaxPolicy::imitating(&inst.teacher, 1e-8)];
            while policies.len() < policies_per_instance {
                let scale = rng.random_range(0.1..4.0);
                let logits = (0..n * v).map(|_| rng.random_range(-scale..scale)).collect();
                policies.push(SoftmaxPolicy::from_logits(Table::from_vec(n, v, logits)?, 1e-8)?);
            }
            policies.truncate(policies_per_instance);
            Ok((inst.mdp, inst.teacher, spec, policies))
        })
        .collect()
}

/// Exact probability that an episode's summed cost exceeds the budget, with a
/// report that passes when it is at most `threshold`.
pub fn check_constraint_satisfaction(
    policy: &SoftmaxPolicy,
    mdp: &TokenMdp,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    threshold: f64,
) -> Result<(f64, TheoremReport)> {
    let p = violation_probability(mdp, policy, teacher, spec, DEFAULT_ENUMERATION_CAP)?;
    Ok((p, TheoremReport::new(CONSTRAINT_SATISFACTION, 1, p, threshold, Vec::new())))
}

pub fn violation_probability(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    cap: usize,
) -> Result<f64> {
    let model = EpisodeModel::new(mdp, student, teacher, spec)?;
    let mut mass = 0.0;
    model.for_each_trajectory(cap, |t, p| {
        if !t.within_budget(spec.budget) {
            mass += p;
        }
    })?;
    Ok(mass)
}

/// Violation probabilities of policies trained at ascending penalties must not
/// increase, and the last must be at most `threshold`. The deviation reported
/// is the larger of the worst increase and the excess over the threshold.
pub fn check_violation_trend(n_grid: &[f64], probabilities: &[f64], threshold: f64, seeds: Vec<u64>) -> TheoremReport {
    let rise = probabilities
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    let excess = probabilities.last().map_or(0.0, |p| (p - threshold).max(0.0));
    let mut r = TheoremReport::new(VIOLATION_TREND, n_grid.len(), rise.max(excess), 0.0, seeds);
    r.passed = n_grid.len() == probabilities.len() && rise <= 0.0 && excess <= 0.0;
    r
}

/// Finiteness probe: the discrepancy and its score gradient stay finite and
/// under the floored bound at random parameters. Feasibility probe: some
/// candidate policy (the teacher copy or any deterministic policy) keeps every
/// episode within budget.
pub fn check_assumptions(
    mdp: &TokenMdp,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    samples: usize,
    floor: f64,
    seed: RunSeed,
) -> Result<(TheoremReport, TheoremReport)> {
    let (n, v) = (mdp.num_states(), mdp.vocab_size());
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let mut rng = seed.stream(&[i as u64]);
        let logits = (0..n * v).map(|_| rng.random_range(-10.0..10.0)).collect();
        let student = SoftmaxPolicy::from_logits(Table::from_vec(n, v, logits)?, floor)?;
        for s in 0..n {
            let phi = spec.phi_kind.eval(&student.action_probs(s), teacher.probs(s));
            let grad = divergence_gradient_row(&student, teacher, s, spec.phi_kind);
            let bound = match spec.phi_kind {
                DivergenceKind::ReverseKl => kl_upper_bound(teacher.probs(s)),
                DivergenceKind::JensenShannon => std::f64::consts::LN_2,
            };
            if !phi.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                worst = f64::INFINITY;
            } else {
                worst = worst.max(phi - bound);
            }
        }
    }
    let finite = TheoremReport::new(ASSUMPTION_FINITENESS, samples, worst.max(0.0), 1e-12, vec![seed.0]);

    let copy = SoftmaxPolicy::imitating(teacher, 0.0);
    let mut feasible = all_within_budget(mdp, &copy, teacher, spec)?;
    if !feasible && (v as f64).powi(n as i32) <= 1e5 {
        let mut choice = vec![0usize; n];
        'outer: loop {
            let mut logits = Table::zeros(n, v);
            for (s, &a) in choice.iter().enumerate() {
                logits.set(s, a, 800.0);
            }
            let det = SoftmaxPolicy::from_logits(logits, 0.0)?;
            if all_within_budget(mdp, &det, teacher, spec)? {
                feasible = true;
                break;
            }
            for slot in choice.iter_mut() {
                *slot += 1;
                if *slot < v {
                    continue 'outer;
                }
                *slot = 0;
            }
            break;
        }
    }
    let cert = TheoremReport::new(ASSUMPTION_FEASIBILITY, 1, if feasible { 0.0 } else { 1.0 }, 0.0, vec![seed.0]);
    Ok((finite, cert))
}

fn all_within_budget(mdp: &TokenMdp, student: &SoftmaxPolicy, teacher: &TeacherPolicy, spec: &ConstrainedRewardSpec) -> Result<bool> {
    let model = EpisodeModel::new(mdp, student, teacher, spec)?;
    let mut ok = true;
    model.for_each_trajectory(DEFAULT_ENUMERATION_CAP, |t, p| {
        if p > 0.0 && !t.within_budget(spec.budget) {
            ok = false;
        }
    })?;
    Ok(ok)
}

/// Node of the un-augmented model: environment state, steps taken, and the
/// budget remaining before the next decision, which the history determines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Node {
    state: usize,
    depth: usize,
    remaining_bits: u64,
}

/// Value iteration on the un-augmented model with the policy-dependent costs
/// frozen. Reports the larger of the fixed-point residual and the gap between
/// the root value and the enumerated expected return.
pub fn check_bellman_residual(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
) -> Result<TheoremReport> {
    let spec = spec.with_mode(Mode::Unaugmented);
    mdp.check_policies(student, teacher)?;
    let costs = StateCosts::new(student, teacher, spec.cost_kind, spec.phi_kind);
    let probs = student.prob_table();

    // Reachable nodes and, per node, (prob, reward, child) for every token.
    type Edge = (f64, f64, Option<usize>);
    let mut index: HashMap<Node, usize> = HashMap::new();
    let mut edges: Vec<Vec<Edge>> = Vec::new();
    let root = Node { state: mdp.initial_state(), depth: 0, remaining_bits: spec.budget.to_bits() };
    let mut stack = vec![root];
    index.insert(root, 0);
    edges.push(Vec::new());
    while let Some(node) = stack.pop() {
        let id = index[&node];
        let remaining = f64::from_bits(node.remaining_bits);
        let mut out = Vec::with_capacity(mdp.vocab_size());
        for a in 0..mdp.vocab_size() {
            let step = mdp.step(node.state, a)?;
            let reward = if remaining >= 0.0 {
                step.task_reward
            } else {
                -(spec.penalty + costs.phi[node.state])
            };
            let child = if step.terminal || node.depth + 1 == mdp.horizon() {
                None
            } else {
                let c = Node {
                    state: step.next_state,
                    depth: node.depth + 1,
                    remaining_bits: (remaining - costs.cost[node.state]).to_bits(),
                };
                let next = index.len();
                let cid = *index.entry(c).or_insert_with(|| {
                    stack.push(c);
                    next
                });
                if cid == edges.len() {
                    edges.push(Vec::new());
                }
                Some(cid)
            };
            out.push((probs.get(node.state, a), reward, child));
        }
        edges[id] = out;
    }

    let backup = |values: &[f64], e: &[Edge]| -> f64 {
        e.iter()
            .map(|&(p, r, c)| p * (r + spec.gamma * c.map_or(0.0, |c| values[c])))
            .sum()
    };
    let mut values = vec![0.0; edges.len()];
    for _ in 0..=mdp.horizon() {
        values = edges.iter().map(|e| backup(&values, e)).collect();
    }
    let residual = edges
        .iter()
        .zip(&values)
        .map(|(e, v)| (backup(&values, e) - v).abs())
        .fold(0.0f64, f64::max);
    let enumerated = objective(mdp, student, teacher, &spec, DEFAULT_ENUMERATION_CAP)?;
    let gap = (values[0] - enumerated).abs();
    Ok(TheoremReport::new(BELLMAN_RESIDUAL, 1, residual.max(gap), 1e-10, Vec::new()))
}

/// Runs the Bellman residual check over random instances.
pub fn check_bellman_battery(instances: usize, seed: RunSeed) -> Result<TheoremReport> {
    let devs: Vec<Result<f64>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.stream(&[i as u64]);
            let inst = random_instance(&mut rng, 1e-8)?;
            let spec = ConstrainedRewardSpec::default().with_budget(random_budget(&mut rng));
            Ok(check_bellman_residual(&inst.mdp, &inst.student, &inst.teacher, &spec)?.max_deviation)
        })
        .collect();
    let mut max = 0.0f64;
    for d in devs {
        max = max.max(d?);
    }
    Ok(TheoremReport::new(BELLMAN_RESIDUAL, instances, max, 1e-10, vec![seed.0]))
}

/// The randomized battery behind the `verify` command.
pub fn run_battery(instances: usize, seed: RunSeed) -> Result<Vec<TheoremReport>> {
    let mut reports = vec![check_return_equivalence(instances, seed.child(&[1]))?];
    let battery = random_policy_battery(instances.div_ceil(10).max(1), 10, seed.child(&[2]))?;
    let mut mono: Vec<TheoremReport> = Vec::new();
    for (mdp, teacher, spec, policies) in &battery {
        let (m, s) = check_monotone_in_n(mdp, teacher, policies, spec, &DEFAULT_PENALTY_GRID, seed.child(&[2]))?;
        mono.push(m);
        mono.push(s);
    }
    reports.extend(merge_reports(&mono));
    reports.push(check_bellman_battery(instances, seed.child(&[3]))?);
    let mut assumptions = Vec::new();
    for (i, (mdp, teacher, spec, _)) in battery.iter().enumerate() {
        let (f, c) = check_assumptions(mdp, teacher, spec, 20, 1e-8, seed.child(&[4, i as u64]))?;
        assumptions.push(f);
        assumptions.push(c);
    }
    reports.extend(merge_reports(&assumptions));
    Ok(reports)
}

/// Combines reports of the same theorem: instance counts add, deviations take
/// the maximum, and the merged report passes only if every part passed.
pub fn merge_reports(reports: &[TheoremReport]) -> Vec<TheoremReport> {
    let mut out: Vec<TheoremReport> = Vec::new();
    for r in reports {
        if let Some(m) = out.iter_mut().find(|m| m.theorem == r.theorem) {
            m.instances += r.instances;
            m.max_deviation = m.max_deviation.max(r.max_deviation);
            m.tolerance = m.tolerance.min(r.tolerance);
            m.passed &= r.passed;
            for s in &r.seeds {
                if !m.seeds.contains(s) {
                    m.seeds.push(*s);
                }
            }
        } else {
            out.push(r.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::DEFAULT_FLOOR;
    use crate::tasks;

    #[test]
    fn equivalence_holds_on_random_instances() {
        let r = check_return_equivalence(30, RunSeed(11)).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.instances, 30);
    }

    #[test]
    fn nothing_feasible_still_agrees() {
        let mdp = tasks::chain(3, 5).unwrap();
        let student = SoftmaxPolicy::uniform(5, 2, DEFAULT_FLOOR);
        let teacher = tasks::chain_teacher(&mdp, 0.99, DEFAULT_FLOOR).unwrap();
        let spec = ConstrainedRewardSpec::default().with_budget(1e-9);
        for (t, _) in crate::env::enumerate_trajectories(&mdp, &student, &teacher, &spec, 100).unwrap() {
            let t = t.without_phi();
            assert_eq!(saute_reward(&t, &spec), unaug_reward(&t, &spec));
        }
    }

    #[test]
    fn infinite_budget_pays_task_rewards() {
        let inst = random_instance(&mut RunSeed(3).stream(&[]), DEFAULT_FLOOR).unwrap();
        let spec = ConstrainedRewardSpec::default().with_budget(f64::INFINITY);
        for (t, _) in crate::env::enumerate_trajectories(&inst.mdp, &inst.student, &inst.teacher, &spec, 10_000).unwrap() {
            let raw: Vec<f64> = t.steps.iter().map(|s| s.task_reward).collect();
            assert_eq!(saute_reward(&t, &spec), raw);
            assert_eq!(unaug_reward(&t, &spec), raw);
        }
    }

    #[test]
    fn monotone_in_penalty_on_battery() {
        for (mdp, teacher, spec, policies) in random_policy_battery(5, 10, RunSeed(4)).unwrap() {
            let (m, s) = check_monotone_in_n(&mdp, &teacher, &policies, &spec, &DEFAULT_PENALTY_GRID, RunSeed(4)).unwrap();
            assert!(m.passed && s.passed, "{m:?} {s:?}");
        }
    }

    #[test]
    fn feasible_policy_value_is_constant_in_penalty() {
        let mdp = tasks::chain(3, 5).unwrap();
        let teacher = tasks::chain_teacher(&mdp, 0.7, DEFAULT_FLOOR).unwrap();
        let copy = SoftmaxPolicy::imitating(&teacher, DEFAULT_FLOOR);
        let spec = ConstrainedRewardSpec::default();
        let v = penalty_values(&mdp, &teacher, &[copy], &spec, &DEFAULT_PENALTY_GRID).unwrap();
        assert!(v[0].windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-12));
    }

    #[test]
    fn violating_policy_loses_value_with_penalty() {
        let mdp = tasks::chain(3, 5).unwrap();
        let teacher = tasks::chain_teacher(&mdp, 0.7, DEFAULT_FLOOR).unwrap();
        let student = SoftmaxPolicy::uniform(5, 2, DEFAULT_FLOOR);
        let spec = ConstrainedRewardSpec::default().with_budget(0.05);
        let v = penalty_values(&mdp, &teacher, &[student], &spec, &[1.0, 1000.0]).unwrap();
        assert!(v[0][0] - v[0][1] > 0.0);
    }

    #[test]
    fn teacher_copy_never_violates() {
        let mdp = tasks::chain(4, 6).unwrap();
        let teacher = tasks::chain_teacher(&mdp, 0.6, DEFAULT_FLOOR).unwrap();
        let copy = SoftmaxPolicy::imitating(&teacher, 0.0);
        let (p, r) = check_constraint_satisfaction(&copy, &mdp, &teacher, &ConstrainedRewardSpec::default(), 0.0).unwrap();
        assert!(p == 0.0 && r.passed);
    }

    #[test]
    fn violation_trend_logic() {
        assert!(check_violation_trend(&[1.0, 5.0, 20.0], &[0.4, 0.1, 0.01], 0.05, vec![]).passed);
        assert!(!check_violation_trend(&[1.0, 5.0, 20.0], &[0.4, 0.5, 0.01], 0.05, vec![]).passed);
        assert!(!check_violation_trend(&[1.0, 5.0, 20.0], &[0.4, 0.2, 0.1], 0.05, vec![]).passed);
    }

    #[test]
    fn assumptions_hold_with_floor() {
        let mdp = tasks::chain(3, 5).unwrap();
        let teacher = tasks::chain_teacher(&mdp, 0.9, DEFAULT_FLOOR).unwrap();
        let (f, c) = check_assumptions(&mdp, &teacher, &ConstrainedRewardSpec::default(), 20, DEFAULT_FLOOR, RunSeed(1)).unwrap();
        assert!(f.passed && c.passed, "{f:?} {c:?}");
    }

    #[test]
    fn zero_floor_with_disjoint_support_is_flagged() {
        let mdp = tasks::chain(2, 4).unwrap();
        let teacher = tasks::chain_teacher(&mdp, 1.0, 0.0).unwrap();
        let (f, _) = check_assumptions(&mdp, &teacher, &ConstrainedRewardSpec::default(), 5, 0.0, RunSeed(2)).unwrap();
        assert!(!f.passed);
        assert!(f.max_deviation.is_infinite());
    }

    #[test]
    fn bellman_fixed_point_matches_enumeration() {
        let r = check_bellman_battery(20, RunSeed(8)).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn merge_takes_worst_case() {
        let a = TheoremReport::new("t", 2, 0.1, 1.0, vec![1]);
        let b = TheoremReport::new("t", 3, 2.0, 1.0, vec![2]);
        let m = merge_reports(&[a, b]);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].instances, m[0].max_deviation, m[0].passed), (5, 2.0, false));
        assert_eq!(m[0].seeds, vec![1, 2]);
    }
}

//! Policy-gradient estimator for the shaped objective, split into the
//! likelihood-ratio term and the explicit-dependence term, plus the exact
//! expectation of that estimator computed by enumeration.

use crate::divergence::{divergence_gradient_row, DivergenceKind};
use crate::env::{EpisodeModel, TokenMdp, Trajectory};
use crate::error::{Error, Result};
use crate::policy::{SoftmaxPolicy, Table, TeacherPolicy};
use crate::shaping::{ConstrainedRewardSpec, Mode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Trajectories per parallel work unit; fixed so reductions do not depend on thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    None,
    /// Leave-one-out group mean of shaped returns.
    #[default]
    Group,
    /// Leave-one-out group mean, divided by the group's standard deviation.
    GroupNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub table: Table,
    pub term_i: Table,
    pub term_ii: Table,
    pub num_trajectories: usize,
}

/// A sampled batch: consecutive runs of `group_size` trajectories form a group.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub trajectories: Vec<Trajectory>,
    pub group_size: usize,
}

impl Batch {
    pub fn new(trajectories: Vec<Trajectory>, group_size: usize) -> Result<Self> {
        if group_size == 0 || !trajectories.len().is_multiple_of(group_size) {
            return Err(Error::Config(format!(
                "batch of {} trajectories cannot be split into groups of {group_size}",
                trajectories.len()
            )));
        }
        Ok(Batch {
            trajectories,
            group_size,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Per-step credit `G_t`: the discounted return-to-go of the shaped rewards,
/// or the step's own reward under single-step credit.
pub fn credits(shaped: &[f64], gamma: f64, single_step: bool) -> Vec<f64> {
    if single_step {
        return shaped.to_vec();
    }
    let mut out = vec![0.0; shaped.len()];
    let mut acc = 0.0;
    for t in (0..shaped.len()).rev() {
        acc = shaped[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Per-trajectory baseline and scale, computed group by group from shaped returns.
fn baselines(returns: &[f64], group_size: usize, mode: BaselineMode) -> Result<Vec<(f64, f64)>> {
    if mode == BaselineMode::None {
        return Ok(vec![(0.0, 1.0); returns.len()]);
    }
    if group_size < 2 {
        return Err(Error::Config("group baseline needs at least 2 rollouts per group".into()));
    }
    let mut out = Vec::with_capacity(returns.len());
    for group in returns.chunks(group_size) {
        let k = group.len() as f64;
        let sum: f64 = group.iter().sum();
        let scale = if mode == BaselineMode::GroupNormalized {
            let mean = sum / k;
            let var = group.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / k;
            1.0 / (var.sqrt() + 1e-8)
        } else {
            1.0
        };
        for &r in group {
            out.push(((sum - r) / (k - 1.0), scale));
        }
    }
    Ok(out)
}

/// `(1/N) sum_i sum_t grad log pi(a_t|s_t) (G_t - b_i)`.
pub fn likelihood_ratio_term(
    student: &SoftmaxPolicy,
    batch: &Batch,
    shaped: &[Vec<f64>],
    spec: &ConstrainedRewardSpec,
    baseline: BaselineMode,
) -> Result<Table> {
    if shaped.len() != batch.len() {
        return Err(Error::Input("one shaped-reward list per trajectory is required".into()));
    }
    let single = spec.mode.single_step_credit();
    let returns: Vec<f64> = shaped
        .iter()
        .map(|r| credits(r, spec.gamma, single).first().copied().unwrap_or(0.0))
        .collect();
    let base = baselines(&returns, batch.group_size, baseline)?;
    let scores = ScoreCache::new(student);
    let (rows, cols) = (student.num_states(), student.vocab_size());
    let idx: Vec<usize> = (0..batch.len()).collect();
    let mut total = chunked_sum(&idx, rows, cols, |i, acc| {
        let (b, scale) = base[i];
        let g = credits(&shaped[i], spec.gamma, single);
        for (step, gt) in batch.trajectories[i].steps.iter().zip(g) {
            let adv = (gt - b) * scale;
            if adv != 0.0 {
                add_row(acc, step.state, scores.row(step.state, step.token), adv);
            }
        }
    });
    if !batch.is_empty() {
        total.scale(1.0 / batch.len() as f64);
    }
    Ok(total)
}

/// Which divergence, with what weight, enters the explicit term at each step.
fn explicit_weights(traj: &Trajectory, spec: &ConstrainedRewardSpec) -> (Option<DivergenceKind>, Vec<f64>) {
    let n = traj.len();
    let mut disc = 1.0;
    let mut w = Vec::with_capacity(n);
    match spec.mode {
        Mode::Unaugmented => {
            let mut spent = 0.0;
            for step in &traj.steps {
                let remaining = spec.budget - spent;
                w.push(if remaining <= spec.epsilon { -disc } else { 0.0 });
                spent += step.cost;
                disc *= spec.gamma;
            }
            (Some(spec.phi_kind), w)
        }
        Mode::Lagrangian(l) if l > 0.0 => {
            for _ in 0..n {
                w.push(-l * disc);
                disc *= spec.gamma;
            }
            (Some(spec.cost_kind), w)
        }
        Mode::KlOnly | Mode::KlLongHorizon => {
            for _ in 0..n {
                w.push(-disc);
                disc *= spec.gamma;
            }
            (Some(spec.cost_kind), w)
        }
        _ => (None, vec![0.0; n]),
    }
}

/// `(1/N) sum_i sum_t gamma^t dR/dtheta`: for the un-augmented reward this is
/// `-1{d - sum_{u<t} C(s_u) <= eps} grad phi(s_t)`; the Lagrangian and KL
/// modes differentiate their `-lambda C` / `-C` step rewards.
pub fn explicit_dependence_term(
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    trajectories: &[Trajectory],
    spec: &ConstrainedRewardSpec,
) -> Table {
    let (rows, cols) = (student.num_states(), student.vocab_size());
    let mut state_weight = vec![0.0; rows];
    let mut kind = None;
    for traj in trajectories {
        let (k, w) = explicit_weights(traj, spec);
        kind = kind.or(k);
        for (step, wt) in traj.steps.iter().zip(w) {
            state_weight[step.state] += wt;
        }
    }
    let mut out = Table::zeros(rows, cols);
    let Some(kind) = kind else {
        return out;
    };
    let n = trajectories.len().max(1) as f64;
    for (s, &w) in state_weight.iter().enumerate() {
        if w != 0.0 {
            let g = divergence_gradient_row(student, teacher, s, kind);
            add_row(&mut out, s, &g, w / n);
        }
    }
    out
}

/// Estimator on a sampled batch: likelihood-ratio term plus explicit-dependence term.
pub fn total_gradient(
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    batch: &Batch,
    spec: &ConstrainedRewardSpec,
    baseline: BaselineMode,
) -> Result<GradientEstimate> {
    let shaped: Vec<Vec<f64>> = batch.trajectories.iter().map(|t| spec.shape(t)).collect();
    let term_i = likelihood_ratio_term(student, batch, &shaped, spec, baseline)?;
    let term_ii = explicit_dependence_term(student, teacher, &batch.trajectories, spec);
    let mut table = term_i.clone();
    table.add_scaled(&term_ii, 1.0);
    Ok(GradientEstimate {
        table,
        term_i,
        term_ii,
        num_trajectories: batch.len(),
    })
}

/// Expectation of the estimator without baseline, by enumerating every trajectory.
/// Away from the boundary band this is the gradient of [`objective`].
pub fn exact_gradient(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    cap: usize,
) -> Result<Table> {
    let model = EpisodeModel::new(mdp, student, teacher, spec)?;
    let scores = ScoreCache::new(student);
    let (rows, cols) = (student.num_states(), student.vocab_size());
    let single = spec.mode.single_step_credit();
    let mut term_i = Table::zeros(rows, cols);
    let mut state_weight = vec![0.0; rows];
    let mut kind = None;
    model.for_each_trajectory(cap, |traj, p| {
        let g = credits(&spec.shape(traj), spec.gamma, single);
        for (step, gt) in traj.steps.iter().zip(g) {
            add_row(&mut term_i, step.state, scores.row(step.state, step.token), p * gt);
        }
        let (k, w) = explicit_weights(traj, spec);
        kind = kind.or(k);
        for (step, wt) in traj.steps.iter().zip(w) {
            state_weight[step.state] += p * wt;
        }
    })?;
    if let Some(kind) = kind {
        for (s, &w) in state_weight.iter().enumerate() {
            if w != 0.0 {
                add_row(&mut term_i, s, &divergence_gradient_row(student, teacher, s, kind), w);
            }
        }
    }
    Ok(term_i)
}

/// Expected discounted shaped return, by enumeration.
pub fn objective(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    cap: usize,
) -> Result<f64> {
    let model = EpisodeModel::new(mdp, student, teacher, spec)?;
    let mut j = 0.0;
    model.for_each_trajectory(cap, |traj, p| j += p * spec.shaped_return(traj))?;
    Ok(j)
}

/// Smallest `|d - sum_{u<t} C(s_u)|` over steps of trajectories with positive
/// probability; gradients are only smooth when this exceeds the boundary band.
pub fn boundary_margin(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    cap: usize,
) -> Result<f64> {
    let model = EpisodeModel::new(mdp, student, teacher, spec)?;
    let mut margin = f64::INFINITY;
    model.for_each_trajectory(cap, |traj, p| {
        if p <= 0.0 {
            return;
        }
        let mut spent = 0.0;
        for step in &traj.steps {
            margin = margin.min((spec.budget - spent).abs());
            spent += step.cost;
        }
    })?;
    Ok(margin)
}

/// Score rows `grad log pi(a|s)` for every (state, token).
struct ScoreCache {
    vocab: usize,
    rows: Vec<f64>,
}

impl ScoreCache {
    fn new(student: &SoftmaxPolicy) -> Self {
        let (n, v) = (student.num_states(), student.vocab_size());
        let mut rows = Vec::with_capacity(n * v * v);
        for s in 0..n {
            for a in 0..v {
                rows.extend(student.score_row(s, a));
            }
        }
        ScoreCache { vocab: v, rows }
    }

    fn row(&self, state: usize, token: usize) -> &[f64] {
        let off = (state * self.vocab + token) * self.vocab;
        &self.rows[off..off + self.vocab]
    }
}

fn add_row(t: &mut Table, state: usize, row: &[f64], w: f64) {
    for (x, r) in t.row_mut(state).iter_mut().zip(row) {
        *x += w * r;
    }
}

/// Sums per-item contributions in parallel over fixed-size chunks, then
/// reduces the chunk partials in index order.
fn chunked_sum<F>(items: &[usize], rows: usize, cols: usize, f: F) -> Table
where
    F: Fn(usize, &mut Table) + Sync,
{
    let partials: Vec<Table> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Table::zeros(rows, cols);
            for &i in chunk {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = Table::zeros(rows, cols);
    for p in &partials {
        total.add_scaled(p, 1.0);
    }
    total
}

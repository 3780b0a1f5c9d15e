//! Per-state divergences between student and teacher rows, and their exact
//! gradients with respect to the student's logits.

use crate::policy::{SoftmaxPolicy, Table, TeacherPolicy};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceKind {
    /// `KL(student || teacher)`.
    #[default]
    ReverseKl,
    JensenShannon,
}

impl DivergenceKind {
    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::ReverseKl => "reverse-kl",
            DivergenceKind::JensenShannon => "jensen-shannon",
        }
    }

    pub fn eval(self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            DivergenceKind::ReverseKl => kl(p, q),
            DivergenceKind::JensenShannon => js(p, q),
        }
    }

    /// Partial derivatives of the divergence with respect to each `p_k`.
    fn dp(self, p: &[f64], q: &[f64]) -> Vec<f64> {
        match self {
            DivergenceKind::ReverseKl => p
                .iter()
                .zip(q)
                .map(|(&pk, &qk)| 1.0 + pk.ln() - qk.ln())
                .collect(),
            DivergenceKind::JensenShannon => p
                .iter()
                .zip(q)
                .map(|(&pk, &qk)| 0.5 * (pk / (0.5 * (pk + qk))).ln())
                .collect(),
        }
    }
}

/// `sum_a p(a) ln(p(a)/q(a))`, summed over the full support of `p`.
/// Infinite when `p` puts mass where `q` has none.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must have the same length");
    let mut acc = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk > 0.0 {
            if qk <= 0.0 {
                return f64::INFINITY;
            }
            acc += pk * (pk / qk).ln();
        }
    }
    // Rounding can leave tiny negatives for identical rows.
    acc.max(0.0)
}

/// Jensen-Shannon divergence in nats; bounded by ln 2.
pub fn js(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must have the same length");
    let mut acc = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        let m = 0.5 * (pk + qk);
        if pk > 0.0 {
            acc += 0.5 * pk * (pk / m).ln();
        }
        if qk > 0.0 {
            acc += 0.5 * qk * (qk / m).ln();
        }
    }
    acc.clamp(0.0, LN_2)
}

/// Upper bound on `KL(p || q)` for any `p`: `ln(1 / min_a q(a))`.
pub fn kl_upper_bound(q: &[f64]) -> f64 {
    let min = q.iter().cloned().fold(f64::INFINITY, f64::min);
    -min.ln()
}

/// Cost charged against the budget at `state`.
pub fn per_state_cost(
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    state: usize,
    kind: DivergenceKind,
) -> f64 {
    kind.eval(&student.action_probs(state), teacher.probs(state))
}

/// Discrepancy added to the violation penalty at `state`.
pub fn phi(student: &SoftmaxPolicy, teacher: &TeacherPolicy, state: usize, kind: DivergenceKind) -> f64 {
    per_state_cost(student, teacher, state, kind)
}

/// Gradient of the divergence at `state` with respect to the logit row of `state`,
/// written as an exact expectation over the vocabulary of
/// `score(a) * p(a) * dD/dp(a)`.
pub fn divergence_gradient_row(
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    state: usize,
    kind: DivergenceKind,
) -> Vec<f64> {
    let p = student.action_probs(state);
    let q = teacher.probs(state);
    let dp = kind.dp(&p, q);
    let v = p.len();
    let mut g = vec![0.0; v];
    for a in 0..v {
        if p[a] <= 0.0 {
            continue;
        }
        let w = p[a] * dp[a];
        for (gj, sj) in g.iter_mut().zip(student.score_row(state, a)) {
            *gj += w * sj;
        }
    }
    g
}

/// Score-function gradient of `KL(pi(.|s) || mu(.|s))`:
/// `E_{a~pi}[grad log pi(a|s) (1 + log pi(a|s) - log mu(a|s))]`, nonzero only in row `state`.
pub fn kl_score_gradient(student: &SoftmaxPolicy, teacher: &TeacherPolicy, state: usize) -> Table {
    divergence_gradient(student, teacher, state, DivergenceKind::ReverseKl)
}

pub fn divergence_gradient(
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    state: usize,
    kind: DivergenceKind,
) -> Table {
    let mut t = Table::zeros(student.num_states(), student.vocab_size());
    t.row_mut(state)
        .copy_from_slice(&divergence_gradient_row(student, teacher, state, kind));
    t
}

//! Tabular softmax student policies and frozen teacher tables.
//!
//! Both policies are floored by mixing with the uniform distribution,
//! `p <- (p + floor) / (1 + V * floor)`, which keeps every row on the simplex
//! and every log-ratio finite.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major table indexed by (state, token).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Table {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Input(format!(
                "table of {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Table { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Table, scale: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub const DEFAULT_FLOOR: f64 = 1e-8;

/// Trainable student: one logit per (state, token).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    logits: Table,
    floor: f64,
}

impl SoftmaxPolicy {
    /// Uniform policy (all-zero logits).
    pub fn uniform(num_states: usize, vocab_size: usize, floor: f64) -> Self {
        SoftmaxPolicy {
            logits: Table::zeros(num_states, vocab_size),
            floor,
        }
    }

    pub fn from_logits(logits: Table, floor: f64) -> Result<Self> {
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(Error::Input(format!("floor must be finite and >= 0, got {floor}")));
        }
        if logits.rows() == 0 || logits.cols() == 0 {
            return Err(Error::Input("policy table must be non-empty".into()));
        }
        Ok(SoftmaxPolicy { logits, floor })
    }

    /// Logits whose floored softmax reproduces `probs` as closely as the floor allows.
    pub fn imitating(teacher: &TeacherPolicy, floor: f64) -> Self {
        let (rows, cols) = teacher.probs.shape();
        let data = teacher.probs.as_slice().iter().map(|p| p.max(1e-300).ln()).collect();
        SoftmaxPolicy {
            logits: Table { rows, cols, data },
            floor,
        }
    }

    pub fn num_states(&self) -> usize {
        self.logits.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.logits.cols()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn logits(&self) -> &Table {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut Table {
        &mut self.logits
    }

    /// Unfloored softmax of a logit row.
    pub fn softmax_row(&self, state: usize) -> Vec<f64> {
        softmax(self.logits.row(state))
    }

    /// Floored, renormalized action distribution at `state`.
    pub fn action_probs(&self, state: usize) -> Vec<f64> {
        let mut p = self.softmax_row(state);
        apply_floor(&mut p, self.floor);
        p
    }

    /// All action distributions, one row per state.
    pub fn prob_table(&self) -> Table {
        let mut t = Table::zeros(self.num_states(), self.vocab_size());
        for s in 0..self.num_states() {
            t.row_mut(s).copy_from_slice(&self.action_probs(s));
        }
        t
    }

    /// Gradient of `log pi(token | state)` with respect to the logit row of `state`.
    ///
    /// For the floored distribution the exact derivative is
    /// `q_k (1{k=token} - q_j)` scaled by `q_token / (q_token + floor)` where `q` is the raw softmax;
    /// with `floor = 0` this is the textbook `1{a=token} - pi(a|state)`.
    pub fn score_row(&self, state: usize, token: usize) -> Vec<f64> {
        let q = self.softmax_row(state);
        let factor = if self.floor == 0.0 {
            1.0
        } else {
            q[token] / (q[token] + self.floor)
        };
        q.iter()
            .enumerate()
            .map(|(a, &qa)| factor * (if a == token { 1.0 } else { 0.0 } - qa))
            .collect()
    }

    /// Full-table form of [`score_row`](Self::score_row).
    pub fn grad_log_prob(&self, state: usize, token: usize) -> Table {
        let mut g = Table::zeros(self.num_states(), self.vocab_size());
        g.row_mut(state).copy_from_slice(&self.score_row(state, token));
        g
    }

    pub fn log_prob(&self, state: usize, token: usize) -> f64 {
        self.action_probs(state)[token].ln()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_table(POLICY_MAGIC, self.floor, &self.logits)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (floor, logits, _) = decode_table(POLICY_MAGIC, bytes)?;
        SoftmaxPolicy::from_logits(logits, floor)
    }
}

/// Frozen teacher distribution table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherPolicy {
    probs: Table,
    floor: f64,
}

impl TeacherPolicy {
    /// Validates that rows lie on the simplex, then applies the floor.
    pub fn from_probs(mut probs: Table, floor: f64) -> Result<Self> {
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(Error::Input(format!("floor must be finite and >= 0, got {floor}")));
        }
        for s in 0..probs.rows() {
            let row = probs.row_mut(s);
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Input(format!("teacher row {s} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Input(format!("teacher row {s} sums to {sum}, expected 1")));
            }
            row.iter_mut().for_each(|p| *p /= sum);
            apply_floor(row, floor);
        }
        Ok(TeacherPolicy { probs, floor })
    }

    /// Teacher that reproduces the student's floored distribution exactly.
    pub fn copy_of(student: &SoftmaxPolicy) -> Self {
        TeacherPolicy {
            probs: student.prob_table(),
            floor: 0.0,
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.cols()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn probs(&self, state: usize) -> &[f64] {
        self.probs.row(state)
    }

    pub fn table(&self) -> &Table {
        &self.probs
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_table(TEACHER_MAGIC, self.floor, &self.probs)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (floor, probs, _) = decode_table(TEACHER_MAGIC, bytes)?;
        Ok(TeacherPolicy { probs, floor })
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

pub fn apply_floor(p: &mut [f64], floor: f64) {
    if floor == 0.0 {
        return;
    }
    let denom = 1.0 + p.len() as f64 * floor;
    p.iter_mut().for_each(|v| *v = (*v + floor) / denom);
}

const POLICY_MAGIC: [u8; 4] = *b"BDSP";
const TEACHER_MAGIC: [u8; 4] = *b"BDTP";
const TABLE_FORMAT_VERSION: u32 = 1;
pub(crate) const TABLE_HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

/// Layout (all little-endian): magic[4], version u32, rows u32, cols u32,
/// floor f64, then rows*cols f64 values in row-major order.
pub(crate) fn encode_table(magic: [u8; 4], floor: f64, table: &Table) -> Vec<u8> {
    let mut out = Vec::with_capacity(TABLE_HEADER_LEN + 8 * table.data.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&TABLE_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(table.rows as u32).to_le_bytes());
    out.extend_from_slice(&(table.cols as u32).to_le_bytes());
    out.extend_from_slice(&floor.to_le_bytes());
    for v in &table.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_table`]; returns the number of bytes consumed.
pub(crate) fn decode_table(magic: [u8; 4], bytes: &[u8]) -> Result<(f64, Table, usize)> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != magic {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != TABLE_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported table version {version}")));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let floor = r.f64()?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(r.f64()?);
    }
    Ok((floor, Table { rows, cols, data }, r.pos))
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated data".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

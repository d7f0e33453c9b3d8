//! Community-level contrastive term.
//!
//! Each node's topology representation `V_p(:,i)` is the anchor, its
//! attribute representation `H_m(:,i)` the positive, and topology
//! representations of nodes with a different pseudo label the negatives.
//! Similarities are cosines between projections through a shared two-layer
//! head `g`, scaled by `1/τ`:
//!
//! ```text
//! l_i = log( e^{θ(v_i,h_i)/τ} / (e^{θ(v_i,h_i)/τ} + Σ_{k∈Ñ_i} e^{θ(v_i,v_k)/τ}) )
//! L_cl = −(1/n) Σ_i l_i
//! ```

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, DenseMatrix};
use crate::model::ModelState;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabels {
    pub labels: Vec<usize>,
    /// Number of label values, i.e. the rank `r` of the representation.
    pub num_labels: usize,
    pub epoch_computed: usize,
}

/// Column-wise argmax of an `r × n` representation; ties go to the lowest row.
pub fn pseudo_labels(v_p: &DenseMatrix) -> PseudoLabels {
    pseudo_labels_at(v_p, 0)
}

pub fn pseudo_labels_at(v_p: &DenseMatrix, epoch: usize) -> PseudoLabels {
    PseudoLabels {
        labels: (0..v_p.cols()).map(|j| v_p.column_argmax(j)).collect(),
        num_labels: v_p.rows(),
        epoch_computed: epoch,
    }
}

/// Per-node negative sets `Ñ_i = {k : c_k ≠ c_i}`, optionally subsampled.
#[derive(Clone, Debug)]
pub struct NegativeSets {
    labels: PseudoLabels,
    kind: NegKind,
}

#[derive(Clone, Debug)]
enum NegKind {
    /// Nodes grouped by pseudo label, ascending within each group.
    Full { members: Vec<Vec<usize>> },
    /// Explicit lists plus the reverse relation `k ↦ {i : k ∈ Ñ_i}`.
    Sampled {
        lists: Vec<Vec<usize>>,
        reverse: Vec<Vec<usize>>,
    },
}

pub fn debiased_negatives(labels: &PseudoLabels, cap: Option<usize>, seed: u64) -> NegativeSets {
    let n = labels.labels.len();
    let groups = labels
        .labels
        .iter()
        .copied()
        .max()
        .map_or(labels.num_labels, |m| (m + 1).max(labels.num_labels));
    let mut members = vec![Vec::new(); groups];
    for (i, &c) in labels.labels.iter().enumerate() {
        members[c].push(i);
    }
    let kind = match cap {
        None => NegKind::Full { members },
        Some(cap) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lists = Vec::with_capacity(n);
            for &c in &labels.labels {
                let full = n - members[c].len();
                let take = cap.min(full);
                let mut picked: Vec<usize> = index::sample(&mut rng, full, take)
                    .into_iter()
                    .map(|pos| nth_outside(&members, c, pos))
                    .collect();
                picked.sort_unstable();
                lists.push(picked);
            }
            let mut reverse = vec![Vec::new(); n];
            for (i, list) in lists.iter().enumerate() {
                for &k in list {
                    reverse[k].push(i);
                }
            }
            NegKind::Sampled { lists, reverse }
        }
    };
    NegativeSets {
        labels: labels.clone(),
        kind,
    }
}

/// The `pos`-th node of the concatenation of all groups except `skip`.
fn nth_outside(members: &[Vec<usize>], skip: usize, mut pos: usize) -> usize {
    for (c, group) in members.iter().enumerate() {
        if c == skip {
            continue;
        }
        if pos < group.len() {
            return group[pos];
        }
        pos -= group.len();
    }
    unreachable!("sample position beyond the negative set")
}

impl NegativeSets {
    pub fn labels(&self) -> &PseudoLabels {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.labels.labels.len()
    }

    pub fn is_full(&self) -> bool {
        matches!(self.kind, NegKind::Full { .. })
    }

    /// Negatives of node `i`.
    pub fn of(&self, i: usize) -> NegIter<'_> {
        match &self.kind {
            NegKind::Full { members } => NegIter::Groups {
                members,
                skip: self.labels.labels[i],
                group: 0,
                pos: 0,
            },
            NegKind::Sampled { lists, .. } => NegIter::List(lists[i].iter()),
        }
    }

    /// Anchors whose negative set contains `k`.
    pub fn anchors_of(&self, k: usize) -> NegIter<'_> {
        match &self.kind {
            // the full relation is symmetric
            NegKind::Full { .. } => self.of(k),
            NegKind::Sampled { reverse, .. } => NegIter::List(reverse[k].iter()),
        }
    }

    pub fn len_of(&self, i: usize) -> usize {
        match &self.kind {
            NegKind::Full { members } => self.n() - members[self.labels.labels[i]].len(),
            NegKind::Sampled { lists, .. } => lists[i].len(),
        }
    }

    /// Sorted negative set of node `i`.
    pub fn to_vec(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.of(i).collect();
        v.sort_unstable();
        v
    }
}

pub enum NegIter<'a> {
    Groups {
        members: &'a [Vec<usize>],
        skip: usize,
        group: usize,
        pos: usize,
    },
    List(std::slice::Iter<'a, usize>),
}

impl Iterator for NegIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            NegIter::List(it) => it.next().copied(),
            NegIter::Groups {
                members,
                skip,
                group,
                pos,
            } => loop {
                if *group >= members.len() {
                    return None;
                }
                if *group == *skip || *pos >= members[*group].len() {
                    *group += 1;
                    *pos = 0;
                    continue;
                }
                let k = members[*group][*pos];
                *pos += 1;
                return Some(k);
            },
        }
    }
}

/// Two-layer perceptron `g(x) = W₂·relu(W₁x + b₁) + b₂`, shared by both views.
/// Biases are stored as single-column matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub w1: DenseMatrix,
    pub b1: DenseMatrix,
    pub w2: DenseMatrix,
    pub b2: DenseMatrix,
}

impl ProjectionHead {
    /// Glorot-uniform weights, zero biases.
    pub fn new(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
        };
        let w1 = glorot(hidden, input);
        let w2 = glorot(output, hidden);
        Self {
            w1,
            b1: DenseMatrix::zeros(hidden, 1),
            w2,
            b2: DenseMatrix::zeros(output, 1),
        }
    }

    /// Default head for `r` communities: hidden `max(2r, 16)`, output `r`.
    pub fn for_rank(r: usize, hidden: Option<usize>, seed: u64) -> Self {
        Self::new(r, hidden.unwrap_or((2 * r).max(16)), r, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, r) = self.w1.shape();
        let (o, h2) = self.w2.shape();
        if h == 0 || o == 0 || h2 != h || self.b1.shape() != (h, 1) || self.b2.shape() != (o, 1) {
            return Err(Error::Shape(format!(
                "inconsistent projection head: w1 {:?}, b1 {:?}, w2 {:?}, b2 {:?}",
                self.w1.shape(),
                self.b1.shape(),
                self.w2.shape(),
                self.b2.shape()
            )));
        }
        let _ = r;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: DenseMatrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: DenseMatrix::zeros(self.b1.rows(), 1),
            w2: DenseMatrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: DenseMatrix::zeros(self.b2.rows(), 1),
        }
    }

    pub fn parameters(&self) -> [&DenseMatrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn parameter_slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }

    /// Projects every column of an `r × n` matrix.
    pub fn forward(&self, x: &DenseMatrix) -> Result<HeadActivations> {
        let mut pre = self.w1.matmul(x)?;
        add_bias(&mut pre, &self.b1);
        let act = pre.map(|v| v.max(0.0));
        let mut out = self.w2.matmul(&act)?;
        add_bias(&mut out, &self.b2);
        Ok(HeadActivations { pre, act, out })
    }

    /// Backpropagates `d_out` (`output × n`) through a cached forward pass.
    /// Parameter gradients are added into `grad`; returns the input gradient.
    pub fn backward(
        &self,
        x: &DenseMatrix,
        cache: &HeadActivations,
        d_out: &DenseMatrix,
        grad: &mut ProjectionHead,
    ) -> Result<DenseMatrix> {
        grad.w2.add_scaled(&d_out.matmul_nt(&cache.act)?, 1.0)?;
        add_row_sums(&mut grad.b2, d_out);
        let mut d_pre = self.w2.matmul_tn(d_out)?;
        for (d, &p) in d_pre.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        grad.w1.add_scaled(&d_pre.matmul_nt(x)?, 1.0)?;
        add_row_sums(&mut grad.b1, &d_pre);
        self.w1.matmul_tn(&d_pre)
    }
}

pub struct HeadActivations {
    pub pre: DenseMatrix,
    pub act: DenseMatrix,
    pub out: DenseMatrix,
}

fn add_bias(m: &mut DenseMatrix, bias: &DenseMatrix) {
    for i in 0..m.rows() {
        let b = bias.get(i, 0);
        m.row_mut(i).iter_mut().for_each(|v| *v += b);
    }
}

fn add_row_sums(target: &mut DenseMatrix, m: &DenseMatrix) {
    for i in 0..m.rows() {
        let s: f64 = m.row(i).iter().sum();
        target.set(i, 0, target.get(i, 0) + s);
    }
}

/// Projects a single column vector through the head.
pub fn project(head: &ProjectionHead, col: &[f64]) -> Result<Vec<f64>> {
    if col.len() != head.input_dim() {
        return Err(Error::Shape(format!(
            "head expects {} inputs, got {}",
            head.input_dim(),
            col.len()
        )));
    }
    let hidden: Vec<f64> = (0..head.w1.rows())
        .map(|i| (dot(head.w1.row(i), col) + head.b1.get(i, 0)).max(0.0))
        .collect();
    Ok((0..head.w2.rows())
        .map(|i| dot(head.w2.row(i), &hidden) + head.b2.get(i, 0))
        .collect())
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// `log(e^{x_0} / Σ_j e^{x_j})` with a max shift, for `x_0 = positive`.
fn log_softmax_first(positive: f64, others: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = others.clone().fold(positive, f64::max);
    let sum: f64 = (positive - max).exp() + others.map(|x| (x - max).exp()).sum::<f64>();
    positive - (max + sum.ln())
}

fn views(state: &ModelState) -> Result<(&DenseMatrix, &DenseMatrix)> {
    match (&state.topo, &state.attr) {
        (Some(t), Some(a)) => Ok((t.representation(), a.representation())),
        _ => Err(Error::Config("the contrastive term needs both views".into())),
    }
}

/// Per-pair term `l(V_p(:,i), H_m(:,i))`, evaluated directly from single
/// projected columns. Always ≤ 0; exactly 0 when `Ñ_i` is empty.
pub fn contrastive_pair_loss(
    state: &ModelState,
    head: &ProjectionHead,
    i: usize,
    negs: &NegativeSets,
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    let (v, h) = views(state)?;
    let anchor = project(head, &v.column(i))?;
    let positive = project(head, &h.column(i))?;
    let pos = cosine(&anchor, &positive) / tau;
    let negatives: Vec<f64> = negs
        .of(i)
        .map(|k| project(head, &v.column(k)).map(|z| cosine(&anchor, &z) / tau))
        .collect::<Result<_>>()?;
    Ok(log_softmax_first(pos, negatives.iter().copied()))
}

/// Mean contrastive loss `L_cl = −(1/n) Σ_i l_i`.
pub fn loss_contrastive(
    state: &ModelState,
    head: &ProjectionHead,
    negs: &NegativeSets,
    tau: f64,
) -> Result<f64> {
    let (v, h) = views(state)?;
    Ok(contrastive_term(v, h, head, negs, tau, false)?.loss)
}

pub struct ContrastiveOutput {
    pub loss: f64,
    /// Gradients with respect to `V_p`, `H_m` and the head, when requested.
    pub grad: Option<ContrastiveGrad>,
}

pub struct ContrastiveGrad {
    pub topo: DenseMatrix,
    pub attr: DenseMatrix,
    pub head: ProjectionHead,
}

/// Row-per-node unit vectors; zero rows where the projection vanished.
struct Normalized {
    unit: DenseMatrix,
    norms: Vec<f64>,
}

fn normalize_columns(z: &DenseMatrix) -> Normalized {
    let mut unit = z.transpose();
    let mut norms = Vec::with_capacity(unit.rows());
    let mut zero = 0usize;
    for i in 0..unit.rows() {
        let row = unit.row_mut(i);
        let norm = dot(row, row).sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        } else {
            zero += 1;
        }
        norms.push(norm);
    }
    if zero > 0 {
        log::warn!("{zero} projected vectors have zero norm; their similarities are set to 0");
    }
    Normalized { unit, norms }
}

/// Gradient through `ẑ = z/‖z‖` for row-per-node buffers, returned as `out × n`.
fn unnormalize_grad(d_unit: &DenseMatrix, nz: &Normalized) -> DenseMatrix {
    let mut d = d_unit.clone();
    for i in 0..d.rows() {
        let norm = nz.norms[i];
        let u = nz.unit.row(i);
        let row = d.row_mut(i);
        if norm == 0.0 {
            row.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let proj = dot(row, u);
        for (r, &ui) in row.iter_mut().zip(u) {
            *r = (*r - proj * ui) / norm;
        }
    }
    d.transpose()
}

/// Batched contrastive loss over all nodes and, optionally, its gradient.
///
/// Pseudo labels inside `negs` are treated as constants. Gradients flow
/// through both sides of every cosine, including anchors appearing as
/// negatives of other nodes.
pub fn contrastive_term(
    v: &DenseMatrix,
    h: &DenseMatrix,
    head: &ProjectionHead,
    negs: &NegativeSets,
    tau: f64,
    with_grad: bool,
) -> Result<ContrastiveOutput> {
    if tau <= 0.0 {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    let n = v.cols();
    if h.cols() != n || negs.n() != n {
        return Err(Error::Shape(format!(
            "contrastive views have {} and {} columns, negatives cover {}",
            n,
            h.cols(),
            negs.n()
        )));
    }
    if n == 0 {
        return Ok(ContrastiveOutput { loss: 0.0, grad: None });
    }
    let fv = head.forward(v)?;
    let fh = head.forward(h)?;
    let zv = normalize_columns(&fv.out);
    let zh = normalize_columns(&fh.out);
    let inv_tau = 1.0 / tau;

    // (positive logit, log-normalizer) per anchor
    let stats: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ui = zv.unit.row(i);
            let pos = dot(ui, zh.unit.row(i)) * inv_tau;
            let max = negs
                .of(i)
                .map(|k| dot(ui, zv.unit.row(k)) * inv_tau)
                .fold(pos, f64::max);
            let sum = (pos - max).exp()
                + negs
                    .of(i)
                    .map(|k| (dot(ui, zv.unit.row(k)) * inv_tau - max).exp())
                    .sum::<f64>();
            (pos, max + sum.ln())
        })
        .collect();
    let sum_l: f64 = stats.iter().map(|(pos, lse)| pos - lse).sum();
    let loss = -sum_l / n as f64;
    if !with_grad {
        return Ok(ContrastiveOutput { loss, grad: None });
    }

    let scale = inv_tau / n as f64;
    let out_dim = head.output_dim();
    // Anchor-side and positive contributions, one row per node.
    let mut d_uv = DenseMatrix::zeros(n, out_dim);
    let mut d_uh = DenseMatrix::zeros(n, out_dim);
    d_uv.as_mut_slice()
        .par_chunks_mut(out_dim)
        .zip(d_uh.as_mut_slice().par_chunks_mut(out_dim))
        .enumerate()
        .for_each(|(i, (gv, gh))| {
            let (pos, lse) = stats[i];
            let ui = zv.unit.row(i);
            let hi = zh.unit.row(i);
            let d_pos = -scale * (1.0 - (pos - lse).exp());
            axpy(gv, d_pos, hi);
            axpy(gh, d_pos, ui);
            for k in negs.of(i) {
                let uk = zv.unit.row(k);
                let w = scale * (dot(ui, uk) * inv_tau - lse).exp();
                axpy(gv, w, uk);
            }
            // node i appearing as a negative of other anchors
            for a in negs.anchors_of(i) {
                let ua = zv.unit.row(a);
                let w = scale * (dot(ua, ui) * inv_tau - stats[a].1).exp();
                axpy(gv, w, ua);
            }
        });

    let d_zv = unnormalize_grad(&d_uv, &zv);
    let d_zh = unnormalize_grad(&d_uh, &zh);
    let mut head_grad = head.zeros_like();
    let d_v = head.backward(v, &fv, &d_zv, &mut head_grad)?;
    let d_h = head.backward(h, &fh, &d_zh, &mut head_grad)?;
    Ok(ContrastiveOutput {
        loss,
        grad: Some(ContrastiveGrad {
            topo: d_v,
            attr: d_h,
            head: head_grad,
        }),
    })
}

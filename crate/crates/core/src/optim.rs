//! Total objective, its analytic gradient, plain gradient descent, and a
//! central-difference gradient checker.
//!
//! Reconstruction gradients never form the dense residual `T − F·V`.
//! With `F = U_1…U_p`, `L_i = U_1…U_{i−1}` and `R_i = U_{i+1}…U_p V`:
//!
//! ```text
//! ∂/∂U_i = L_iᵀ (−2 T R_iᵀ + 2 F (V R_iᵀ))
//! ∂/∂V   = −2 Fᵀ T + 2 (FᵀF) V
//! ```
//!
//! so sparse adjacency targets only ever touch their nonzeros.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{contrastive_term, NegativeSets, ProjectionHead};
use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, DenseMatrix, SparseMatrix};
use crate::model::{loss_dnmf, loss_reg, negative_part, FactorStack, ModelState};

/// The two factorization targets: adjacency `A` (n×n) and features `X` (d×n).
#[derive(Clone, Debug)]
pub struct ViewTargets {
    pub topology: DataMatrix,
    pub attributes: DataMatrix,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dnmf: f64,
    pub reg: f64,
    pub cl: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("L_DNMF", self.dnmf),
            ("L_reg", self.reg),
            ("L_cl", self.cl),
            ("total loss", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

/// One gradient per parameter matrix, shape-matched.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    /// Factors then representation, as in `FactorStack::parameters`.
    pub topo: Option<Vec<DenseMatrix>>,
    pub attr: Option<Vec<DenseMatrix>>,
    pub head: ProjectionHead,
}

impl GradientBundle {
    /// All gradient matrices in parameter order: topology, attributes, head.
    pub fn matrices(&self) -> Vec<&DenseMatrix> {
        self.topo
            .iter()
            .flatten()
            .chain(self.attr.iter().flatten())
            .chain(self.head.parameters())
            .collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.matrices().iter().map(|m| m.frobenius_sq()).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.all_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerMode {
    #[default]
    FullBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Rescale the gradient to at most this global norm before stepping.
    pub grad_clip: Option<f64>,
    /// Stop after this many epochs without a new best total loss.
    pub patience: Option<usize>,
    pub mode: OptimizerMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 50,
            grad_clip: Some(5.0),
            patience: Some(10),
            mode: OptimizerMode::FullBatch,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

fn contrastive_active(state: &ModelState) -> bool {
    state.hyper.gamma > 0.0 && state.topo.is_some() && state.attr.is_some()
}

fn require_negs<'a>(state: &ModelState, negs: Option<&'a NegativeSets>) -> Result<Option<&'a NegativeSets>> {
    if contrastive_active(state) {
        negs.map(Some)
            .ok_or_else(|| Error::Config("negative sets are required when gamma > 0".into()))
    } else {
        Ok(None)
    }
}

/// `L_DNMF + β·L_reg + γ·L_cl`, term by term.
pub fn loss_breakdown(
    state: &ModelState,
    head: &ProjectionHead,
    negs: Option<&NegativeSets>,
    data: &ViewTargets,
) -> Result<LossBreakdown> {
    let negs = require_negs(state, negs)?;
    let dnmf = loss_dnmf(state, &data.topology, &data.attributes)?;
    let reg = loss_reg(state)?;
    let cl = match (negs, &state.topo, &state.attr) {
        (Some(negs), Some(t), Some(a)) => {
            contrastive_term(t.representation(), a.representation(), head, negs, state.hyper.tau, false)?.loss
        }
        _ => 0.0,
    };
    let h = &state.hyper;
    let total = if contrastive_active(state) {
        dnmf + h.beta * reg + h.gamma * cl
    } else {
        dnmf + h.beta * reg
    };
    Ok(LossBreakdown { dnmf, reg, cl, total })
}

pub fn total_loss(
    state: &ModelState,
    head: &ProjectionHead,
    negs: Option<&NegativeSets>,
    data: &ViewTargets,
) -> Result<f64> {
    Ok(loss_breakdown(state, head, negs, data)?.total)
}

/// Gradient of the reconstruction-plus-penalty loss of one view.
pub fn stack_gradients(stack: &FactorStack, target: &DataMatrix, alpha: f64) -> Result<Vec<DenseMatrix>> {
    let factors = stack.factors();
    let v = stack.representation();
    let p = factors.len();

    // prefixes[i] = U_1…U_i (prefixes[0] is the identity, left implicit)
    let mut prefixes: Vec<DenseMatrix> = Vec::with_capacity(p);
    prefixes.push(factors[0].clone());
    for f in &factors[1..] {
        let next = prefixes.last().expect("nonempty").matmul(f)?;
        prefixes.push(next);
    }
    let basis = &prefixes[p - 1];

    // suffixes[i] = U_{i+2}…U_p V, i.e. R_{i+1} for factor index i
    let mut suffixes: Vec<DenseMatrix> = vec![DenseMatrix::zeros(0, 0); p];
    suffixes[p - 1] = v.clone();
    for i in (0..p - 1).rev() {
        suffixes[i] = factors[i + 1].matmul(&suffixes[i + 1])?;
    }

    let mut grads = Vec::with_capacity(p + 1);
    for i in 0..p {
        let r = &suffixes[i];
        // G Rᵀ = −2 T Rᵀ + 2 F (V Rᵀ)
        let mut g_rt = target.mul_t(r)?;
        g_rt.scale(-2.0);
        let fv_rt = basis.matmul(&v.matmul_nt(r)?)?;
        g_rt.add_scaled(&fv_rt, 2.0)?;
        let mut g = if i == 0 {
            g_rt
        } else {
            prefixes[i - 1].matmul_tn(&g_rt)?
        };
        g.add_scaled(&negative_part(&factors[i]), 2.0 * alpha)?;
        grads.push(g);
    }

    let mut gv = target.t_mul(basis)?.transpose();
    gv.scale(-2.0);
    gv.add_scaled(&basis.matmul_tn(basis)?.matmul(v)?, 2.0)?;
    gv.add_scaled(&negative_part(v), 2.0 * alpha)?;
    grads.push(gv);
    Ok(grads)
}

/// `∂ tr(V L Vᵀ) / ∂V = 2 V L` for symmetric `L`.
fn reg_gradient(v: &DenseMatrix, laplacian: &SparseMatrix) -> Result<DenseMatrix> {
    let mut g = laplacian.spmm(&v.transpose())?.transpose();
    g.scale(2.0);
    Ok(g)
}

/// Loss terms and the exact gradient of the total objective. Pseudo labels
/// (inside `negs`) are constants.
pub fn loss_and_gradients(
    state: &ModelState,
    head: &ProjectionHead,
    negs: Option<&NegativeSets>,
    data: &ViewTargets,
) -> Result<(LossBreakdown, GradientBundle)> {
    let negs = require_negs(state, negs)?;
    let h = &state.hyper;

    let mut topo = state
        .topo
        .as_ref()
        .map(|s| stack_gradients(s, &data.topology, h.alpha))
        .transpose()?;
    let mut attr = state
        .attr
        .as_ref()
        .map(|s| stack_gradients(s, &data.attributes, h.alpha))
        .transpose()?;

    for (stack, grads) in [(&state.topo, &mut topo), (&state.attr, &mut attr)] {
        if let (Some(stack), Some(grads)) = (stack, grads.as_mut()) {
            let g = reg_gradient(stack.representation(), &state.laplacian)?;
            grads.last_mut().expect("representation gradient").add_scaled(&g, h.beta)?;
        }
    }

    let mut head_grad = head.zeros_like();
    let mut cl = 0.0;
    if let (Some(negs), Some(t), Some(a)) = (negs, &state.topo, &state.attr) {
        let out = contrastive_term(t.representation(), a.representation(), head, negs, h.tau, true)?;
        cl = out.loss;
        if let Some(g) = out.grad {
        if let Some(tg) = topo.as_mut() {
            tg.last_mut().expect("representation").add_scaled(&g.topo, h.gamma)?;
        }
        if let Some(ag) = attr.as_mut() {
            ag.last_mut().expect("representation").add_scaled(&g.attr, h.gamma)?;
        }
        for (dst, src) in head_grad
            .parameter_slices_mut()
            .into_iter()
            .zip(g.head.parameters())
        {
            dst.iter_mut()
                .zip(src.as_slice())
                .for_each(|(d, s)| *d = h.gamma * s);
        }
        }
    }

    let dnmf = loss_dnmf(state, &data.topology, &data.attributes)?;
    let reg = loss_reg(state)?;
    let total = dnmf + h.beta * reg + if negs.is_some() { h.gamma * cl } else { 0.0 };
    let bundle = GradientBundle {
        topo,
        attr,
        head: head_grad,
    };
    if !bundle.all_finite() {
        let term = if !bundle.head.parameters().iter().all(|m| m.all_finite()) {
            "contrastive gradient"
        } else {
            "factor gradient"
        };
        return Err(Error::NonFinite {
            term: term.into(),
            epoch: None,
        });
    }
    Ok((LossBreakdown { dnmf, reg, cl, total }, bundle))
}

pub fn gradients(
    state: &ModelState,
    head: &ProjectionHead,
    negs: Option<&NegativeSets>,
    data: &ViewTargets,
) -> Result<GradientBundle> {
    Ok(loss_and_gradients(state, head, negs, data)?.1)
}

/// Mutable parameter buffers in gradient order, each flagged with whether
/// it carries the nonnegativity penalty.
fn parameter_slices<'a>(
    state: &'a mut ModelState,
    head: &'a mut ProjectionHead,
) -> Vec<(&'a mut [f64], bool)> {
    let mut out: Vec<(&mut [f64], bool)> = Vec::new();
    if let Some(t) = state.topo.as_mut() {
        out.extend(t.parameter_slices_mut().into_iter().map(|s| (s, true)));
    }
    if let Some(a) = state.attr.as_mut() {
        out.extend(a.parameter_slices_mut().into_iter().map(|s| (s, true)));
    }
    out.extend(head.parameter_slices_mut().into_iter().map(|s| (s, false)));
    out
}

/// `P ← P − lr·∇P`, after optional global-norm clipping. Returns the
/// gradient norm before clipping.
pub fn sgd_step(
    state: &mut ModelState,
    head: &mut ProjectionHead,
    grads: &GradientBundle,
    config: &OptimizerConfig,
) -> Result<f64> {
    let norm = grads.global_norm();
    let scale = match config.grad_clip {
        Some(clip) if norm > clip => clip / norm,
        _ => 1.0,
    };
    let step = config.lr * scale;
    let grad_mats = grads.matrices();
    let params = parameter_slices(state, head);
    if params.len() != grad_mats.len() {
        return Err(Error::Shape(format!(
            "{} parameter matrices but {} gradients",
            params.len(),
            grad_mats.len()
        )));
    }
    for ((p, _), g) in params.into_iter().zip(grad_mats) {
        if p.len() != g.as_slice().len() {
            return Err(Error::Shape("gradient does not match its parameter".into()));
        }
        for (x, &d) in p.iter_mut().zip(g.as_slice()) {
            *x -= step * d;
        }
    }
    Ok(norm)
}

/// Relative error floor: `|a − f| / max(|a|, |f|, FD_FLOOR)`.
pub const FD_FLOOR: f64 = 1e-3;

/// Compares analytic partials against central differences on `samples`
/// random coordinates and returns the worst relative error. Penalized
/// coordinates within `2h` of the kink at zero are skipped.
pub fn fd_check(
    state: &ModelState,
    head: &ProjectionHead,
    negs: Option<&NegativeSets>,
    data: &ViewTargets,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Domain(format!("step must be positive, got {h}")));
    }
    let grads = gradients(state, head, negs, data)?;
    let grad_flat: Vec<&[f64]> = grads.matrices().into_iter().map(DenseMatrix::as_slice).collect();

    let mut state = state.clone();
    let mut head = head.clone();
    let sizes: Vec<usize> = grad_flat.iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < samples && attempts < samples * 100 {
        attempts += 1;
        let mut flat = rng.gen_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let (value, penalized) = {
            let params = parameter_slices(&mut state, &mut head);
            (params[which].0[flat], params[which].1)
        };
        if penalized && value.abs() <= 2.0 * h {
            continue;
        }
        let mut eval_at = |x: f64| -> Result<f64> {
            parameter_slices(&mut state, &mut head)[which].0[flat] = x;
            total_loss(&state, &head, negs, data)
        };
        let plus = eval_at(value + h)?;
        let minus = eval_at(value - h)?;
        eval_at(value)?;
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grad_flat[which][flat];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max(rel);
        checked += 1;
    }
    Ok(worst)
}

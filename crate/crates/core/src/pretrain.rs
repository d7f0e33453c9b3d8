//! Shallow NMF with Frobenius multiplicative updates, and the layerwise
//! pretraining that stacks it into a deep factorization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, DenseMatrix};
use crate::model::FactorStack;

/// Denominator guard for the multiplicative updates.
pub const MU_EPSILON: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NmfResult {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    pub final_error: f64,
    pub iterations_run: usize,
    /// Reconstruction error at initialization followed by one value per iteration.
    pub error_trace: Vec<f64>,
}

/// Stepwise multiplicative-update solver for `M ≈ U·V`.
pub struct MultiplicativeNmf<'a> {
    target: &'a DataMatrix,
    u: DenseMatrix,
    v: DenseMatrix,
    // Gram matrices of the current factors, kept between the update and
    // the error evaluation
    utu: Option<DenseMatrix>,
    vvt: Option<DenseMatrix>,
}

impl<'a> MultiplicativeNmf<'a> {
    pub fn new(target: &'a DataMatrix, k: usize, seed: u64) -> Result<Self> {
        let (a, b) = target.shape();
        if k == 0 || k > a.min(b) {
            return Err(Error::Shape(format!(
                "rank {k} out of range for a {a}x{b} matrix"
            )));
        }
        if !target.is_nonnegative() {
            return Err(Error::Domain("NMF target has negative entries".into()));
        }
        let mean = target.mean();
        let scale = if mean > 0.0 {
            (mean / k as f64).sqrt()
        } else {
            1.0 / (k as f64).sqrt()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // 1 - U[0,1) lies in (0, 1]
        let u = DenseMatrix::from_fn(a, k, |_, _| (1.0 - rng.gen::<f64>()) * scale);
        let v = DenseMatrix::from_fn(k, b, |_, _| (1.0 - rng.gen::<f64>()) * scale);
        Ok(Self {
            target,
            u,
            v,
            utu: None,
            vvt: None,
        })
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn error(&mut self) -> Result<f64> {
        if let DataMatrix::Dense(_) = self.target {
            return self.target.residual_sq(&self.u, &self.v);
        }
        let utu = take_or(&mut self.utu, || self.u.matmul_tn(&self.u))?;
        let vvt = take_or(&mut self.vvt, || self.v.matmul_nt(&self.v))?;
        let err = self.target.residual_sq_with(&self.u, &self.v, Some((&utu, &vvt)));
        self.utu = Some(utu);
        self.vvt = Some(vvt);
        err
    }

    /// One sweep: `U ← U ⊙ MVᵀ ⊘ (UVVᵀ + ε)` then `V ← V ⊙ UᵀM ⊘ (UᵀUV + ε)`.
    pub fn step(&mut self) -> Result<()> {
        let vvt = take_or(&mut self.vvt, || self.v.matmul_nt(&self.v))?;
        let numer = self.target.mul_t(&self.v)?;
        let denom = self.u.matmul(&vvt)?;
        apply_update(&mut self.u, &numer, &denom);

        let utu = self.u.matmul_tn(&self.u)?;
        let numer = self.target.t_mul(&self.u)?.transpose();
        let denom = utu.matmul(&self.v)?;
        apply_update(&mut self.v, &numer, &denom);
        self.utu = Some(utu);
        self.vvt = None;
        Ok(())
    }

    pub fn into_factors(self) -> (DenseMatrix, DenseMatrix) {
        (self.u, self.v)
    }
}

fn take_or(
    slot: &mut Option<DenseMatrix>,
    compute: impl FnOnce() -> Result<DenseMatrix>,
) -> Result<DenseMatrix> {
    match slot.take() {
        Some(m) => Ok(m),
        None => compute(),
    }
}

fn apply_update(base: &mut DenseMatrix, numer: &DenseMatrix, denom: &DenseMatrix) {
    for ((b, &n), &d) in base
        .as_mut_slice()
        .iter_mut()
        .zip(numer.as_slice())
        .zip(denom.as_slice())
    {
        *b *= n / (d + MU_EPSILON);
    }
}

/// Factorizes `m ≈ u·v` with rank `k`. Stops after `max_iters` sweeps or
/// once the relative change in error drops below `tol`.
pub fn nmf(m: &DataMatrix, k: usize, max_iters: usize, tol: f64, seed: u64) -> Result<NmfResult> {
    let mut solver = MultiplicativeNmf::new(m, k, seed)?;
    let mut prev = solver.error()?;
    let mut trace = vec![prev];
    let mut iterations = 0;
    while iterations < max_iters {
        solver.step()?;
        iterations += 1;
        let err = solver.error()?;
        trace.push(err);
        let change = (prev - err).abs() / prev.max(f64::MIN_POSITIVE);
        prev = err;
        if change < tol {
            break;
        }
    }
    let (u, v) = solver.into_factors();
    Ok(NmfResult {
        u,
        v,
        final_error: prev,
        iterations_run: iterations,
        error_trace: trace,
    })
}

/// Seed used for layer `layer` of a stack pretrained with `seed`.
/// Layer 0 uses `seed` itself.
pub fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_add((layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Layerwise pretraining: `(U_1, V_1) = NMF(m, r_1)`, then
/// `(U_i, V_i) = NMF(V_{i-1}, r_i)`. Returns `U_1..U_p` and `V_p`.
pub fn pretrain_stack(
    m: &DataMatrix,
    widths: &[usize],
    config: PretrainConfig,
    seed: u64,
) -> Result<FactorStack> {
    if widths.is_empty() {
        return Err(Error::Shape("at least one layer width is required".into()));
    }
    if widths.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Shape(format!("layer widths {widths:?} must be non-increasing")));
    }
    let mut factors = Vec::with_capacity(widths.len());
    let mut current: DataMatrix = m.clone();
    for (layer, &k) in widths.iter().enumerate() {
        let result = nmf(&current, k, config.max_iters, config.tol, layer_seed(seed, layer))?;
        log::debug!(
            "pretrain layer {} (rank {k}): error {:.6e} after {} iterations",
            layer + 1,
            result.final_error,
            result.iterations_run
        );
        factors.push(result.u);
        current = DataMatrix::Dense(result.v);
    }
    let DataMatrix::Dense(representation) = current else {
        unreachable!("the last layer always yields a dense representation")
    };
    FactorStack::new(factors, representation)
}

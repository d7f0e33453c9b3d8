//! Two-view deep factorization state and its loss terms.
//!
//! The topology view factorizes the adjacency `A ≈ U_1…U_p V_p`, the
//! attribute view the feature matrix `X ≈ W_1…W_m H_m`. Nonnegativity is
//! soft: every factor pays `α‖f(B)‖²_F` where `f` keeps only negative
//! entries. Both representations are smoothed over the graph with the
//! Laplacian `L = D − A`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chain_product, trace_quadratic, DataMatrix, DenseMatrix, SparseMatrix};

/// Factors `U_1..U_p` (shapes `r_{i-1} × r_i`) and the `r × n` representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StackRepr")]
pub struct FactorStack {
    factors: Vec<DenseMatrix>,
    representation: DenseMatrix,
}

#[derive(Deserialize)]
struct StackRepr {
    factors: Vec<DenseMatrix>,
    representation: DenseMatrix,
}

impl TryFrom<StackRepr> for FactorStack {
    type Error = Error;

    fn try_from(r: StackRepr) -> Result<Self> {
        FactorStack::new(r.factors, r.representation)
    }
}

impl FactorStack {
    pub fn new(factors: Vec<DenseMatrix>, representation: DenseMatrix) -> Result<Self> {
        let last = factors
            .last()
            .ok_or_else(|| Error::Shape("a factor stack needs at least one factor".into()))?;
        for (i, pair) in factors.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::Shape(format!(
                    "factor {} is {:?} but factor {} is {:?}",
                    i + 1,
                    pair[0].shape(),
                    i + 2,
                    pair[1].shape()
                )));
            }
        }
        if last.cols() != representation.rows() {
            return Err(Error::Shape(format!(
                "last factor is {:?} but representation is {:?}",
                last.shape(),
                representation.shape()
            )));
        }
        let mut widths = vec![factors[0].rows()];
        widths.extend(factors.iter().map(|f| f.cols()));
        if widths.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Shape(format!(
                "layer widths {widths:?} must be non-increasing"
            )));
        }
        Ok(Self {
            factors,
            representation,
        })
    }

    pub fn factors(&self) -> &[DenseMatrix] {
        &self.factors
    }

    pub fn representation(&self) -> &DenseMatrix {
        &self.representation
    }

    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    /// Row dimension of the factorized target.
    pub fn input_dim(&self) -> usize {
        self.factors[0].rows()
    }

    /// Number of communities `r`.
    pub fn rank(&self) -> usize {
        self.representation.rows()
    }

    pub fn n(&self) -> usize {
        self.representation.cols()
    }

    /// Total mapping `U_1 U_2 … U_p`.
    pub fn basis(&self) -> Result<DenseMatrix> {
        let refs: Vec<&DenseMatrix> = self.factors.iter().collect();
        chain_product(&refs)
    }

    /// The reconstruction `U_1…U_p V_p`, evaluated right to left.
    pub fn reconstruction(&self) -> Result<DenseMatrix> {
        let mut refs: Vec<&DenseMatrix> = self.factors.iter().collect();
        refs.push(&self.representation);
        chain_product(&refs)
    }

    /// All parameter matrices: factors first, representation last.
    pub fn parameters(&self) -> Vec<&DenseMatrix> {
        self.factors
            .iter()
            .chain(std::iter::once(&self.representation))
            .collect()
    }

    /// Mutable views of the parameter buffers, in `parameters()` order.
    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.factors
            .iter_mut()
            .chain(std::iter::once(&mut self.representation))
            .map(DenseMatrix::as_mut_slice)
            .collect()
    }

    /// Projects every entry onto `[0, ∞)`.
    pub fn clamp_nonnegative(&mut self) {
        for s in self.parameter_slices_mut() {
            s.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    pub fn all_finite(&self) -> bool {
        self.parameters().iter().all(|m| m.all_finite())
    }
}

/// How many negatives each anchor sees in the contrastive term.
/// Serialized as `"auto"`, `"full"` or a count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "NegCapRepr", try_from = "NegCapRepr")]
pub enum NegCap {
    /// Full set up to `AUTO_CAP_NODES` nodes, `AUTO_CAP` above.
    #[default]
    Auto,
    /// Always the full debiased set.
    Full,
    /// Seeded uniform subsample of at most this many negatives per node.
    Cap(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NegCapRepr {
    Count(usize),
    Name(String),
}

impl From<NegCap> for NegCapRepr {
    fn from(c: NegCap) -> Self {
        match c {
            NegCap::Auto => NegCapRepr::Name("auto".into()),
            NegCap::Full => NegCapRepr::Name("full".into()),
            NegCap::Cap(n) => NegCapRepr::Count(n),
        }
    }
}

impl TryFrom<NegCapRepr> for NegCap {
    type Error = Error;

    fn try_from(r: NegCapRepr) -> Result<Self> {
        match r {
            NegCapRepr::Count(n) => Ok(NegCap::Cap(n)),
            NegCapRepr::Name(s) => s.parse(),
        }
    }
}

impl NegCap {
    pub const AUTO_CAP: usize = 256;
    pub const AUTO_CAP_NODES: usize = 5000;

    /// Effective cap for a graph of `n` nodes; `None` means the full set.
    pub fn resolve(self, n: usize) -> Option<usize> {
        match self {
            NegCap::Full => None,
            NegCap::Cap(c) => Some(c),
            NegCap::Auto => (n > Self::AUTO_CAP_NODES).then_some(Self::AUTO_CAP),
        }
    }
}

impl std::str::FromStr for NegCap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(NegCap::Auto),
            "full" => Ok(NegCap::Full),
            other => other
                .parse::<usize>()
                .map(NegCap::Cap)
                .map_err(|_| Error::Config(format!("neg_cap must be auto, full or a count, got `{other}`"))),
        }
    }
}

/// Objective weights and architecture choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Nonnegativity penalty weight.
    pub alpha: f64,
    /// Graph regularization weight.
    pub beta: f64,
    /// Contrastive weight; 0 removes the contrastive term.
    pub gamma: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Layer widths ending at the community count. `None` means
    /// `[256, 64, r]`, clamped per view to the target's dimensions.
    #[serde(default)]
    pub widths: Option<Vec<usize>>,
    #[serde(default)]
    pub neg_cap: NegCap,
    /// Hidden width of the projection head; `None` means `max(2r, 16)`.
    #[serde(default)]
    pub head_hidden: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self::cora()
    }
}

impl HyperParams {
    pub const DEFAULT_HIDDEN_WIDTHS: [usize; 2] = [256, 64];

    fn preset(alpha: f64, beta: f64, gamma: f64, tau: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            tau,
            widths: None,
            neg_cap: NegCap::Auto,
            head_hidden: None,
        }
    }

    pub fn cora() -> Self {
        Self::preset(150.0, 2.0, 5.0, 1.4)
    }

    pub fn citeseer() -> Self {
        Self::preset(1000.0, 2.0, 5.0, 0.5)
    }

    pub fn pubmed() -> Self {
        Self::preset(200.0, 10.0, 5.0, 1.4)
    }

    pub fn for_dataset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cora" => Some(Self::cora()),
            "citeseer" => Some(Self::citeseer()),
            "pubmed" => Some(Self::pubmed()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("tau", self.tau)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if let Some(w) = &self.widths {
            if w.is_empty() || w.contains(&0) {
                return Err(Error::Config("widths must be nonempty and positive".into()));
            }
            if w.windows(2).any(|p| p[1] > p[0]) {
                return Err(Error::Config(format!("widths {w:?} must be non-increasing")));
            }
        }
        if self.head_hidden == Some(0) {
            return Err(Error::Config("head_hidden must be at least 1".into()));
        }
        Ok(())
    }

    /// Layer widths for a view whose target is `input_dim × n`, with `r`
    /// communities. Each width is clamped to `min(input_dim, n)` and kept ≥ r.
    pub fn view_widths(&self, input_dim: usize, n: usize, r: usize) -> Result<Vec<usize>> {
        let limit = input_dim.min(n);
        if r == 0 || r > limit {
            return Err(Error::Config(format!(
                "{r} communities cannot be extracted from a {input_dim}x{n} view"
            )));
        }
        let widths = match &self.widths {
            Some(w) => {
                if w.last() != Some(&r) {
                    return Err(Error::Config(format!(
                        "widths {w:?} must end at the community count {r}"
                    )));
                }
                w.clone()
            }
            None => {
                let mut w: Vec<usize> = Self::DEFAULT_HIDDEN_WIDTHS.to_vec();
                w.push(r);
                w
            }
        };
        Ok(widths.into_iter().map(|w| w.min(limit).max(r)).collect())
    }
}

/// Both factor stacks plus the graph Laplacian. Single-view ablations
/// leave the other stack out.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub topo: Option<FactorStack>,
    pub attr: Option<FactorStack>,
    pub laplacian: SparseMatrix,
    pub hyper: HyperParams,
}

impl ModelState {
    pub fn new(
        topo: Option<FactorStack>,
        attr: Option<FactorStack>,
        laplacian: SparseMatrix,
        hyper: HyperParams,
    ) -> Result<Self> {
        let n = laplacian.rows();
        if laplacian.cols() != n {
            return Err(Error::Shape("laplacian must be square".into()));
        }
        let views: Vec<&FactorStack> = topo.iter().chain(attr.iter()).collect();
        if views.is_empty() {
            return Err(Error::Config("at least one view is required".into()));
        }
        for v in &views {
            if v.n() != n {
                return Err(Error::Shape(format!(
                    "representation has {} columns for {n} nodes",
                    v.n()
                )));
            }
        }
        if let (Some(t), Some(a)) = (&topo, &attr) {
            if t.rank() != a.rank() {
                return Err(Error::Shape(format!(
                    "views end at different ranks {} and {}",
                    t.rank(),
                    a.rank()
                )));
            }
        }
        Ok(Self {
            topo,
            attr,
            laplacian,
            hyper,
        })
    }

    pub fn n(&self) -> usize {
        self.laplacian.rows()
    }

    pub fn rank(&self) -> usize {
        self.topo
            .as_ref()
            .or(self.attr.as_ref())
            .map(FactorStack::rank)
            .expect("a state always has one view")
    }

    /// Representation used for pseudo labels and predictions: `V_p` when
    /// the topology view exists, otherwise `H_m`.
    pub fn primary_representation(&self) -> &DenseMatrix {
        self.topo
            .as_ref()
            .or(self.attr.as_ref())
            .map(FactorStack::representation)
            .expect("a state always has one view")
    }

    pub fn stacks_mut(&mut self) -> impl Iterator<Item = &mut FactorStack> {
        self.topo.iter_mut().chain(self.attr.iter_mut())
    }
}

/// Entrywise negative part: keeps `b_ij` when `b_ij < 0`, else 0.
pub fn negative_part(b: &DenseMatrix) -> DenseMatrix {
    b.map(|v| if v < 0.0 { v } else { 0.0 })
}

/// `‖f(b)‖²_F`, the nonnegativity penalty of one matrix.
pub fn penalty(b: &DenseMatrix) -> f64 {
    b.as_slice()
        .iter()
        .filter(|v| **v < 0.0)
        .map(|v| v * v)
        .sum()
}

/// Reconstruction error plus `α` times the penalty on every factor and
/// the representation.
pub fn loss_recon(stack: &FactorStack, target: &DataMatrix, alpha: f64) -> Result<f64> {
    if target.shape() != (stack.input_dim(), stack.n()) {
        return Err(Error::Shape(format!(
            "stack reconstructs {}x{} but target is {:?}",
            stack.input_dim(),
            stack.n(),
            target.shape()
        )));
    }
    let basis = stack.basis()?;
    let recon = target.residual_sq(&basis, stack.representation())?;
    let pen: f64 = stack.parameters().into_iter().map(penalty).sum();
    Ok(recon + alpha * pen)
}

/// Sum of the per-view reconstruction losses.
pub fn loss_dnmf(state: &ModelState, a: &DataMatrix, x: &DataMatrix) -> Result<f64> {
    let alpha = state.hyper.alpha;
    let mut total = 0.0;
    if let Some(t) = &state.topo {
        total += loss_recon(t, a, alpha)?;
    }
    if let Some(h) = &state.attr {
        total += loss_recon(h, x, alpha)?;
    }
    Ok(total)
}

/// `tr(V_p L V_pᵀ) + tr(H_m L H_mᵀ)` over the views present.
pub fn loss_reg(state: &ModelState) -> Result<f64> {
    let mut total = 0.0;
    for stack in state.topo.iter().chain(state.attr.iter()) {
        total += trace_quadratic(stack.representation(), &state.laplacian)?;
    }
    Ok(total)
}

/// `L = D − A` for a symmetric adjacency with nonnegative weights.
pub fn build_laplacian(a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.rows() != a.cols() || !a.is_symmetric() {
        return Err(Error::Domain("laplacian needs a symmetric adjacency".into()));
    }
    if !a.is_nonnegative() {
        return Err(Error::Domain("laplacian needs nonnegative edge weights".into()));
    }
    let degrees = a.row_sums();
    let mut t: Vec<(usize, usize, f64)> = a.entries().iter().map(|&(i, j, w)| (i, j, -w)).collect();
    t.extend(degrees.iter().enumerate().map(|(i, &d)| (i, i, d)));
    SparseMatrix::from_triplets(a.rows(), a.cols(), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, lo: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..1.0))
    }

    fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    let w = rng.gen_range(0.5..2.0);
                    t.push((i, j, w));
                    t.push((j, i, w));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn negative_part_cases() {
        let m = DenseMatrix::from_rows(&[[-1.0, 2.0], [3.0, -4.0]]).unwrap();
        assert_eq!(
            negative_part(&m),
            DenseMatrix::from_rows(&[[-1.0, 0.0], [0.0, -4.0]]).unwrap()
        );
        let pos = DenseMatrix::from_rows(&[[0.0, 2.0]]).unwrap();
        assert_eq!(negative_part(&pos), DenseMatrix::zeros(1, 2));
        let neg = m.map(|v| -v.abs());
        assert_eq!(negative_part(&neg), neg);
        assert_eq!(negative_part(&negative_part(&m)), negative_part(&m));
        assert_eq!(penalty(&m), 17.0);
        assert_eq!(negative_part(&m).frobenius_sq(), penalty(&m));
    }

    #[test]
    fn perfect_nonnegative_fit_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u1 = random(6, 4, 0.0, &mut rng);
        let u2 = random(4, 2, 0.0, &mut rng);
        let v = random(2, 6, 0.0, &mut rng);
        let stack = FactorStack::new(vec![u1, u2], v).unwrap();
        let target: DataMatrix = stack.reconstruction().unwrap().into();
        assert!(loss_recon(&stack, &target, 150.0).unwrap() < 1e-20);
    }

    #[test]
    fn penalty_vanishes_on_nonnegative_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = FactorStack::new(vec![random(5, 2, 0.0, &mut rng)], random(2, 5, 0.0, &mut rng)).unwrap();
        let target: DataMatrix = random(5, 5, 0.0, &mut rng).into();
        let plain = target.residual_sq(&stack.basis().unwrap(), stack.representation()).unwrap();
        assert_eq!(loss_recon(&stack, &target, 1000.0).unwrap(), plain);
    }

    #[test]
    fn forced_negative_entry_adds_alpha_c_squared() {
        // Negate one factor entry and compensate in the target so the
        // reconstruction residual is unchanged; only the penalty moves.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random(4, 2, 0.1, &mut rng);
        let v = random(2, 4, 0.1, &mut rng);
        let base_target = random(4, 4, 0.0, &mut rng);
        let c = 0.7;
        let mut u_neg = u.clone();
        u_neg.set(1, 0, -c);
        let mut u_clamped = u.clone();
        u_clamped.set(1, 0, 0.0);
        let shift = |uu: &DenseMatrix| {
            let mut t = base_target.clone();
            t.add_scaled(&uu.matmul(&v).unwrap(), 1.0).unwrap();
            t
        };
        let alpha = 150.0;
        let neg = FactorStack::new(vec![u_neg.clone()], v.clone()).unwrap();
        let clamped = FactorStack::new(vec![u_clamped.clone()], v.clone()).unwrap();
        let l_neg = loss_recon(&neg, &shift(&u_neg).into(), alpha).unwrap();
        let l_clamped = loss_recon(&clamped, &shift(&u_clamped).into(), alpha).unwrap();
        assert!((l_neg - l_clamped - alpha * c * c).abs() < 1e-9);
    }

    #[test]
    fn loss_dnmf_is_sum_of_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let adj = random_graph(6, 0.5, &mut rng);
        let lap = build_laplacian(&adj).unwrap();
        let topo = FactorStack::new(vec![random(6, 3, -0.5, &mut rng), random(3, 2, -0.5, &mut rng)], random(2, 6, -0.5, &mut rng)).unwrap();
        let attr = FactorStack::new(vec![random(5, 2, -0.5, &mut rng)], random(2, 6, -0.5, &mut rng)).unwrap();
        let a: DataMatrix = adj.clone().into();
        let x: DataMatrix = random(5, 6, 0.0, &mut rng).into();
        let state = ModelState::new(Some(topo.clone()), Some(attr.clone()), lap, HyperParams::cora()).unwrap();
        let total = loss_dnmf(&state, &a, &x).unwrap();
        let parts = loss_recon(&topo, &a, 150.0).unwrap() + loss_recon(&attr, &x, 150.0).unwrap();
        assert_eq!(total, parts);

        // reassemble from kernels
        let oracle = |s: &FactorStack, t: &DataMatrix| {
            let r = t.to_dense().sub(&s.reconstruction().unwrap()).unwrap();
            let pen: f64 = s.parameters().iter().map(|m| negative_part(m).frobenius_sq()).sum();
            r.frobenius_sq() + 150.0 * pen
        };
        let expected = oracle(&topo, &a) + oracle(&attr, &x);
        assert!((total - expected).abs() <= 1e-10 * expected.max(1.0));
    }

    #[test]
    fn laplacian_cases() {
        let edge = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let l = build_laplacian(&edge).unwrap();
        assert_eq!(
            l.densify(),
            DenseMatrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap()
        );
        let tri = SparseMatrix::from_triplets(
            3,
            3,
            vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0), (0, 2, 1.0), (2, 0, 1.0)],
        )
        .unwrap();
        let l = build_laplacian(&tri).unwrap().densify();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), if i == j { 2.0 } else { -1.0 });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_graph(15, 0.3, &mut rng);
        let l = build_laplacian(&g).unwrap();
        assert!(l.row_sums().iter().all(|s| s.abs() < 1e-12));
        assert!(l.is_symmetric());
        let asym = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0)]).unwrap();
        assert!(matches!(build_laplacian(&asym), Err(Error::Domain(_))));
    }

    #[test]
    fn loss_reg_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 7;
        let stack = |rng: &mut ChaCha8Rng| {
            FactorStack::new(vec![random(n, 2, -1.0, rng)], random(2, n, -1.0, rng)).unwrap()
        };
        let empty = ModelState::new(Some(stack(&mut rng)), Some(stack(&mut rng)), SparseMatrix::empty(n, n), HyperParams::cora()).unwrap();
        assert_eq!(loss_reg(&empty).unwrap(), 0.0);

        let adj = random_graph(n, 0.5, &mut rng);
        let lap = build_laplacian(&adj).unwrap();
        let constant = FactorStack::new(vec![random(n, 2, 0.0, &mut rng)], DenseMatrix::from_fn(2, n, |i, _| i as f64 + 0.5)).unwrap();
        let state = ModelState::new(Some(constant.clone()), Some(constant), lap.clone(), HyperParams::cora()).unwrap();
        assert!(loss_reg(&state).unwrap().abs() < 1e-12);

        let (t, a) = (stack(&mut rng), stack(&mut rng));
        let state = ModelState::new(Some(t.clone()), Some(a.clone()), lap, HyperParams::cora()).unwrap();
        let pairwise = |v: &DenseMatrix| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let d: f64 = (0..v.rows()).map(|k| (v.get(k, i) - v.get(k, j)).powi(2)).sum();
                    s += adj.get(i, j) * d;
                }
            }
            0.5 * s
        };
        let expected = pairwise(t.representation()) + pairwise(a.representation());
        let got = loss_reg(&state).unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        assert!(got >= -1e-9);
    }

    #[test]
    fn stack_rejects_broken_chain() {
        assert!(FactorStack::new(vec![DenseMatrix::zeros(4, 2), DenseMatrix::zeros(3, 2)], DenseMatrix::zeros(2, 4)).is_err());
        assert!(FactorStack::new(vec![DenseMatrix::zeros(2, 3)], DenseMatrix::zeros(3, 4)).is_err());
        assert!(FactorStack::new(vec![], DenseMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn view_widths_defaults_and_clamping() {
        let h = HyperParams::cora();
        assert_eq!(h.view_widths(2708, 2708, 7).unwrap(), vec![256, 64, 7]);
        assert_eq!(h.view_widths(4, 100, 2).unwrap(), vec![4, 4, 2]);
        let mut custom = h.clone();
        custom.widths = Some(vec![8, 3]);
        assert!(custom.view_widths(10, 10, 2).is_err());
    }

    #[test]
    fn neg_cap_parsing_and_resolution() {
        assert_eq!("full".parse::<NegCap>().unwrap().resolve(10_000), None);
        assert_eq!("auto".parse::<NegCap>().unwrap().resolve(10_000), Some(256));
        assert_eq!("auto".parse::<NegCap>().unwrap().resolve(2708), None);
        assert_eq!("12".parse::<NegCap>().unwrap().resolve(5), Some(12));
        assert!("x".parse::<NegCap>().is_err());
        let json = serde_json::to_string(&NegCap::Full).unwrap();
        assert_eq!(json, "\"full\"");
        assert_eq!(serde_json::from_str::<NegCap>("64").unwrap(), NegCap::Cap(64));
    }

    #[test]
    fn hyper_presets() {
        let c = HyperParams::citeseer();
        assert_eq!((c.alpha, c.beta, c.gamma, c.tau), (1000.0, 2.0, 5.0, 0.5));
        let p = HyperParams::for_dataset("PubMed").unwrap();
        assert_eq!((p.alpha, p.beta, p.gamma, p.tau), (200.0, 10.0, 5.0, 1.4));
        let mut bad = HyperParams::cora();
        bad.tau = 0.0;
        assert!(bad.validate().is_err());
        let unknown = r#"{"alpha":1,"beta":1,"gamma":0,"tau":1,"gama":2}"#;
        assert!(serde_json::from_str::<HyperParams>(unknown).is_err());
    }
}

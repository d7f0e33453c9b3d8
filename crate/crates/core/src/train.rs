//! End-to-end training: layerwise pretraining of both views, then joint
//! fine-tuning by full-batch gradient descent with per-epoch pseudo labels.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrastive::{debiased_negatives, pseudo_labels_at, NegativeSets, ProjectionHead};
use crate::datasets::{write_file, AttributedGraph};
use crate::error::{Error, Result};
use crate::linalg::DataMatrix;
use crate::model::{build_laplacian, FactorStack, HyperParams, ModelState};
use crate::optim::{loss_and_gradients, sgd_step, OptimizerConfig, ViewTargets};
use crate::pretrain::{pretrain_stack, PretrainConfig};

/// Which factorizations take part in training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Views {
    #[default]
    Both,
    TopologyOnly,
    AttributesOnly,
}

impl Views {
    pub fn topology(self) -> bool {
        self != Views::AttributesOnly
    }

    pub fn attributes(self) -> bool {
        self != Views::TopologyOnly
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: HyperParams,
    pub optimizer: OptimizerConfig,
    pub pretrain: PretrainConfig,
    pub views: Views,
    /// Community count; taken from the ground-truth labels when absent.
    pub communities: Option<usize>,
    /// Clamp every factor to be nonnegative after fine-tuning.
    pub clamp_output: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.optimizer.validate()
    }

    fn rank(&self, graph: &AttributedGraph) -> Result<usize> {
        self.communities
            .or_else(|| graph.num_communities())
            .ok_or_else(|| Error::Config("community count unknown: no labels and no `communities` set".into()))
    }
}

/// Independent seed for one random stream of a run.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over (seed, stream)
    let mut z = seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_TOPOLOGY: u64 = 1;
const STREAM_ATTRIBUTES: u64 = 2;
const STREAM_HEAD: u64 = 3;
const STREAM_NEGATIVES: u64 = 1 << 32;

/// Pretrained factors and the initial projection head: everything needed
/// to start fine-tuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub topo: Option<FactorStack>,
    pub attr: Option<FactorStack>,
    pub head: ProjectionHead,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cp: Checkpoint = serde_json::from_str(&text)?;
        cp.head.validate()?;
        Ok(cp)
    }
}

pub fn targets(graph: &AttributedGraph) -> ViewTargets {
    ViewTargets {
        topology: DataMatrix::Sparse(graph.adjacency().clone()),
        attributes: graph.features().clone(),
    }
}

/// Layerwise pretraining of the enabled views and a fresh projection head.
pub fn pretrain(graph: &AttributedGraph, config: &TrainConfig, seed: u64) -> Result<Checkpoint> {
    config.validate()?;
    let r = config.rank(graph)?;
    let n = graph.n();
    let data = targets(graph);
    let topo = if config.views.topology() {
        let widths = config.hyper.view_widths(n, n, r)?;
        log::info!("pretraining topology view with widths {widths:?}");
        Some(pretrain_stack(&data.topology, &widths, config.pretrain, stream_seed(seed, STREAM_TOPOLOGY))?)
    } else {
        None
    };
    let attr = if config.views.attributes() {
        let widths = config.hyper.view_widths(graph.feature_dim(), n, r)?;
        log::info!("pretraining attribute view with widths {widths:?}");
        Some(pretrain_stack(&data.attributes, &widths, config.pretrain, stream_seed(seed, STREAM_ATTRIBUTES))?)
    } else {
        None
    };
    let head = ProjectionHead::for_rank(r, config.hyper.head_hidden, stream_seed(seed, STREAM_HEAD));
    Ok(Checkpoint { seed, topo, attr, head })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub dnmf: f64,
    pub reg: f64,
    pub cl: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub head: ProjectionHead,
    /// Community per node: argmax over the columns of the primary representation.
    pub predictions: Vec<usize>,
    /// Losses evaluated at the start of each epoch, before its update.
    pub trace: Vec<EpochLoss>,
    pub stopped_early: bool,
}

/// What an observer sees at the start of every epoch, after the pseudo
/// labels and negatives have been refreshed.
pub struct EpochView<'a> {
    pub epoch: usize,
    pub state: &'a ModelState,
    pub negatives: Option<&'a NegativeSets>,
}

pub fn fine_tune(graph: &AttributedGraph, config: &TrainConfig, checkpoint: Checkpoint) -> Result<TrainOutcome> {
    fine_tune_observed(graph, config, checkpoint, |_| {})
}

pub fn fine_tune_observed(
    graph: &AttributedGraph,
    config: &TrainConfig,
    checkpoint: Checkpoint,
    mut observer: impl FnMut(&EpochView<'_>),
) -> Result<TrainOutcome> {
    config.validate()?;
    let Checkpoint { seed, topo, attr, mut head } = checkpoint;
    let topo = topo.filter(|_| config.views.topology());
    let attr = attr.filter(|_| config.views.attributes());
    let laplacian = build_laplacian(graph.adjacency())?;
    let mut state = ModelState::new(topo, attr, laplacian, config.hyper.clone())?;
    let data = targets(graph);
    let contrastive = state.hyper.gamma > 0.0 && state.topo.is_some() && state.attr.is_some();
    let cap = state.hyper.neg_cap.resolve(state.n());

    let mut trace = Vec::with_capacity(config.optimizer.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    for epoch in 0..config.optimizer.epochs {
        let labels = pseudo_labels_at(state.primary_representation(), epoch);
        let negs = contrastive
            .then(|| debiased_negatives(&labels, cap, stream_seed(seed, STREAM_NEGATIVES + epoch as u64)));
        observer(&EpochView {
            epoch,
            state: &state,
            negatives: negs.as_ref(),
        });
        let (loss, grads) = loss_and_gradients(&state, &head, negs.as_ref(), &data).map_err(|e| match e {
            Error::NonFinite { term, .. } => Error::NonFinite {
                term,
                epoch: Some(epoch),
            },
            other => other,
        })?;
        if let Some(term) = loss.non_finite_term() {
            return Err(Error::NonFinite {
                term: term.into(),
                epoch: Some(epoch),
            });
        }
        log::debug!(
            "epoch {epoch}: L_DNMF {:.6e} L_reg {:.6e} L_cl {:.6e} total {:.6e}",
            loss.dnmf,
            loss.reg,
            loss.cl,
            loss.total
        );
        trace.push(EpochLoss {
            epoch,
            dnmf: loss.dnmf,
            reg: loss.reg,
            cl: loss.cl,
            total: loss.total,
        });
        if loss.total < best {
            best = loss.total;
            since_best = 0;
        } else {
            since_best += 1;
            if config.optimizer.patience.is_some_and(|p| since_best >= p) {
                log::info!("early stop at epoch {epoch}: no improvement for {since_best} epochs");
                stopped_early = true;
                break;
            }
        }
        sgd_step(&mut state, &mut head, &grads, &config.optimizer)?;
    }

    if config.clamp_output {
        for s in state.stacks_mut() {
            s.clamp_nonnegative();
        }
    }
    let v = state.primary_representation();
    let predictions = (0..v.cols()).map(|j| v.column_argmax(j)).collect();
    Ok(TrainOutcome {
        state,
        head,
        predictions,
        trace,
        stopped_early,
    })
}

/// Pretraining followed by fine-tuning.
pub fn train(graph: &AttributedGraph, config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let checkpoint = pretrain(graph, config, seed)?;
    fine_tune(graph, config, checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_sbm, SbmSpec};

    fn small_graph() -> AttributedGraph {
        generate_sbm(&SbmSpec {
            block_sizes: vec![10, 10],
            p_in: 0.5,
            p_out: 0.05,
            feature_dim: 4,
            feature_noise: 0.2,
            seed: 1,
        })
        .unwrap()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            hyper: HyperParams {
                widths: Some(vec![8, 4, 2]),
                ..HyperParams::cora()
            },
            optimizer: OptimizerConfig {
                epochs: 5,
                ..OptimizerConfig::default()
            },
            pretrain: PretrainConfig { max_iters: 30, tol: 1e-4 },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(0, 1), stream_seed(0, 2));
        assert_ne!(stream_seed(0, 1), stream_seed(1, 1));
    }

    #[test]
    fn single_epoch_has_single_trace_row() {
        let g = small_graph();
        let mut cfg = quick_config();
        cfg.optimizer.epochs = 1;
        let out = train(&g, &cfg, 0).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.predictions.len(), 20);
    }

    #[test]
    fn runs_are_deterministic() {
        let g = small_graph();
        let a = train(&g, &quick_config(), 3).unwrap();
        let b = train(&g, &quick_config(), 3).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn ablations_keep_one_view() {
        let g = small_graph();
        let mut cfg = quick_config();
        cfg.views = Views::AttributesOnly;
        let out = train(&g, &cfg, 0).unwrap();
        assert!(out.state.topo.is_none() && out.state.attr.is_some());
        assert!(out.trace.iter().all(|t| t.cl == 0.0));
    }

    #[test]
    fn missing_rank_is_a_config_error() {
        let g = small_graph();
        let unlabeled = AttributedGraph::new(
            g.adjacency().clone(),
            g.features().clone(),
            None,
            Vec::new(),
            g.node_ids().to_vec(),
        )
        .unwrap();
        assert!(matches!(pretrain(&unlabeled, &quick_config(), 0), Err(Error::Config(_))));
    }

    #[test]
    fn observer_sees_every_epoch() {
        let g = small_graph();
        let mut seen = Vec::new();
        let cfg = TrainConfig {
            optimizer: OptimizerConfig {
                patience: None,
                ..quick_config().optimizer
            },
            ..quick_config()
        };
        let cp = pretrain(&g, &cfg, 0).unwrap();
        fine_tune_observed(&g, &cfg, cp, |v| seen.push((v.epoch, v.negatives.is_some()))).unwrap();
        assert_eq!(seen, (0..5).map(|e| (e, true)).collect::<Vec<_>>());
    }
}

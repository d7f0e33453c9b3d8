//! Run orchestration behind the command-line tool: dataset resolution,
//! multi-seed training, ablations, benchmarks, loss traces and result files.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{
    content_lines, generate_sbm, load_graph_with, load_linqs, parse_err, read, write_file, AttributedGraph,
    FeatureOptions, SbmSpec, EDGES_FILE, FEATURES_FILE, LABELS_FILE,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::HyperParams;
use crate::optim::OptimizerConfig;
use crate::pretrain::PretrainConfig;
use crate::train::{fine_tune, pretrain, Checkpoint, EpochLoss, TrainConfig, Views};

/// Environment variable naming the directory that holds builtin datasets.
pub const DATA_ROOT_ENV: &str = "CDNMF_DATA_ROOT";

pub const BUILTIN_DATASETS: [&str; 3] = ["cora", "citeseer", "pubmed"];

/// Where the graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// `cora`, `citeseer` or `pubmed`, looked up under the data root.
    Builtin(String),
    Files {
        edges: PathBuf,
        features: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
    },
    Linqs {
        content: PathBuf,
        cites: PathBuf,
    },
    Sbm(SbmSpec),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Topology view alone, no contrastive term.
    TopoOnly,
    /// Attribute view alone, no contrastive term.
    AttrOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::None, Ablation::TopoOnly, Ablation::AttrOnly];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::None => "full",
            Ablation::TopoOnly => "topo-only",
            Ablation::AttrOnly => "attr-only",
        }
    }

    fn views(self) -> Views {
        match self {
            Ablation::None => Views::Both,
            Ablation::TopoOnly => Views::TopologyOnly,
            Ablation::AttrOnly => Views::AttributesOnly,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    /// Label used in tables; derived from the dataset when absent.
    #[serde(default)]
    pub name: Option<String>,
    /// Defaults to the preset of a builtin dataset, otherwise the Cora preset.
    #[serde(default)]
    pub hyper: Option<HyperParams>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub features: FeatureOptions,
    /// Overrides the `CDNMF_DATA_ROOT` environment variable.
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub communities: Option<usize>,
    #[serde(default)]
    pub clamp_output: bool,
    /// Write `pretrained_seed<s>.json` into `out_dir` after pretraining.
    #[serde(default)]
    pub save_checkpoints: bool,
    /// Directory of `pretrained_seed<s>.json` files to fine-tune from
    /// instead of pretraining.
    #[serde(default)]
    pub resume_from: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            name: None,
            hyper: None,
            optimizer: OptimizerConfig::default(),
            pretrain: PretrainConfig::default(),
            features: FeatureOptions::default(),
            data_root: None,
            out_dir: None,
            seeds: default_seeds(),
            ablation: Ablation::None,
            communities: None,
            clamp_output: false,
            save_checkpoints: false,
            resume_from: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if let DatasetSource::Builtin(name) = &self.dataset {
            if !BUILTIN_DATASETS.contains(&name.to_ascii_lowercase().as_str()) {
                return Err(Error::Config(format!(
                    "unknown builtin dataset `{name}` (expected one of {BUILTIN_DATASETS:?})"
                )));
            }
        }
        self.train_config().validate()
    }

    pub fn display_name(&self) -> String {
        let base = self.name.clone().unwrap_or_else(|| match &self.dataset {
            DatasetSource::Builtin(n) => n.to_ascii_lowercase(),
            DatasetSource::Files { features, .. } => features
                .parent()
                .and_then(Path::file_name)
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "files".into()),
            DatasetSource::Linqs { content, .. } => content
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "linqs".into()),
            DatasetSource::Sbm(_) => "sbm".into(),
        });
        match self.ablation {
            Ablation::None => base,
            a => format!("{base} ({})", a.label()),
        }
    }

    /// Configured hyperparameters, or the dataset preset.
    pub fn base_hyper(&self) -> HyperParams {
        self.hyper.clone().unwrap_or_else(|| match &self.dataset {
            DatasetSource::Builtin(n) => HyperParams::for_dataset(n).unwrap_or_default(),
            _ => HyperParams::default(),
        })
    }

    /// Hyperparameters after presets and ablation forcing.
    pub fn effective_hyper(&self) -> HyperParams {
        let mut h = self.base_hyper();
        if self.ablation != Ablation::None {
            h.gamma = 0.0;
        }
        h
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hyper: self.effective_hyper(),
            optimizer: self.optimizer.clone(),
            pretrain: self.pretrain,
            views: self.ablation.views(),
            communities: self.communities,
            clamp_output: self.clamp_output,
        }
    }

    fn data_root(&self) -> Option<PathBuf> {
        self.data_root
            .clone()
            .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
    }

    pub fn load_dataset(&self) -> Result<AttributedGraph> {
        match &self.dataset {
            DatasetSource::Builtin(name) => {
                let root = self.data_root().ok_or_else(|| {
                    Error::Config(format!(
                        "builtin dataset `{name}` needs a data root (set {DATA_ROOT_ENV} or --data-root)"
                    ))
                })?;
                load_builtin(&root, name, self.features)
            }
            DatasetSource::Files { edges, features, labels } => {
                load_graph_with(edges, features, labels.as_deref(), self.features)
            }
            DatasetSource::Linqs { content, cites } => load_linqs(content, cites),
            DatasetSource::Sbm(spec) => generate_sbm(spec),
        }
    }
}

/// Finds `<root>/<name>/{edges,features,labels}.tsv`, falling back to the
/// LINQS files `<root>/<name>/<name>.{content,cites}`.
pub fn load_builtin(root: &Path, name: &str, features: FeatureOptions) -> Result<AttributedGraph> {
    let name = name.to_ascii_lowercase();
    let dir = root.join(&name);
    let edges = dir.join(EDGES_FILE);
    let feats = dir.join(FEATURES_FILE);
    if edges.is_file() && feats.is_file() {
        let labels = dir.join(LABELS_FILE);
        return load_graph_with(&edges, &feats, labels.is_file().then_some(labels.as_path()), features);
    }
    let content = dir.join(format!("{name}.content"));
    let cites = dir.join(format!("{name}.cites"));
    if content.is_file() && cites.is_file() {
        return load_linqs(&content, &cites);
    }
    Err(Error::io(
        &dir,
        std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no {EDGES_FILE}/{FEATURES_FILE} or {name}.content/{name}.cites found"),
        ),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Absent when the dataset has no ground truth.
    pub report: Option<EvalReport>,
    pub trace: Vec<EpochLoss>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub predictions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub acc_mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
}

impl Summary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> Option<Self> {
        let (acc, nmi): (Vec<f64>, Vec<f64>) = reports.into_iter().map(|r| (r.acc, r.nmi)).unzip();
        if acc.is_empty() {
            return None;
        }
        let (acc_mean, acc_std) = mean_std(&acc);
        let (nmi_mean, nmi_std) = mean_std(&nmi);
        Some(Self {
            acc_mean,
            acc_std,
            nmi_mean,
            nmi_std,
        })
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub per_seed_seconds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub config: RunConfig,
    pub hyper: HyperParams,
    pub node_ids: Vec<String>,
    pub seeds: Vec<SeedResult>,
    pub summary: Option<Summary>,
    /// Wall-clock only; everything else is reproducible from the config.
    pub timing: Timing,
}

impl RunResult {
    /// The result as JSON with the wall-clock block removed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("pretrained_seed{seed}.json"))
}

/// Loads the seed's checkpoint from `resume_from` or pretrains it, saving
/// it when `save_checkpoints` is set.
fn obtain_checkpoint(config: &RunConfig, graph: &AttributedGraph, train_cfg: &TrainConfig, seed: u64) -> Result<Checkpoint> {
    let checkpoint = match &config.resume_from {
        Some(dir) => {
            let cp = Checkpoint::load(&checkpoint_path(dir, seed))?;
            if cp.seed != seed {
                return Err(Error::Config(format!("checkpoint for seed {} used as seed {seed}", cp.seed)));
            }
            cp
        }
        None => pretrain(graph, train_cfg, seed)?,
    };
    if config.save_checkpoints {
        let dir = config
            .out_dir
            .as_ref()
            .ok_or_else(|| Error::Config("save_checkpoints needs out_dir".into()))?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint.save(&checkpoint_path(dir, seed))?;
    }
    Ok(checkpoint)
}

/// Runs every seed; `shared` supplies pretrained checkpoints in seed order.
fn run_on_graph(config: &RunConfig, graph: &AttributedGraph, shared: Option<&[Checkpoint]>) -> Result<RunResult> {
    let train_cfg = config.train_config();
    let start = Instant::now();
    let mut seeds = Vec::with_capacity(config.seeds.len());
    let mut per_seed = Vec::with_capacity(config.seeds.len());
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (idx, &seed) in config.seeds.iter().enumerate() {
        let t = Instant::now();
        let checkpoint = match shared {
            Some(cps) => cps[idx].clone(),
            None => obtain_checkpoint(config, graph, &train_cfg, seed)?,
        };
        let outcome = fine_tune(graph, &train_cfg, checkpoint)?;
        let report = graph.labels().map(|t| evaluate(&outcome.predictions, t)).transpose()?;
        if let Some(r) = &report {
            log::info!("{} seed {seed}: ACC {:.4} NMI {:.4}", config.display_name(), r.acc, r.nmi);
        }
        per_seed.push(t.elapsed().as_secs_f64());
        seeds.push(SeedResult {
            seed,
            report,
            epochs_run: outcome.trace.len(),
            stopped_early: outcome.stopped_early,
            trace: outcome.trace,
            predictions: outcome.predictions,
        });
    }
    let summary = Summary::from_reports(seeds.iter().filter_map(|s| s.report.as_ref()));
    let result = RunResult {
        name: config.display_name(),
        config: config.clone(),
        hyper: train_cfg.hyper,
        node_ids: graph.node_ids().to_vec(),
        seeds,
        summary,
        timing: Timing {
            total_seconds: start.elapsed().as_secs_f64(),
            per_seed_seconds: per_seed,
        },
    };
    if let Some(dir) = &config.out_dir {
        write_result(&result, dir)?;
    }
    Ok(result)
}

/// Writes `result.json` and one `assignments_seed<s>.csv` per seed.
pub fn write_result(result: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("result.json"), &serde_json::to_string_pretty(result)?)?;
    for s in &result.seeds {
        write_file(
            &dir.join(format!("assignments_seed{}.csv", s.seed)),
            &assignments_csv(&result.node_ids, &s.predictions),
        )?;
    }
    Ok(())
}

pub fn assignments_csv(node_ids: &[String], predictions: &[usize]) -> String {
    let mut out = String::from("node_id,predicted_community\n");
    for (id, p) in node_ids.iter().zip(predictions) {
        let _ = writeln!(out, "{id},{p}");
    }
    out
}

pub fn trace_csv(trace: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,L_DNMF,L_reg,L_cl,total\n");
    for e in trace {
        let _ = writeln!(out, "{},{},{},{},{}", e.epoch, e.dnmf, e.reg, e.cl, e.total);
    }
    out
}

/// Trains every seed of `config` and evaluates against ground truth when present.
pub fn cmd_train(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let graph = config.load_dataset()?;
    run_on_graph(config, &graph, None)
}

/// Like `cmd_train`, additionally writing `trace_seed<s>.csv` per seed.
pub fn cmd_trace(config: &RunConfig) -> Result<RunResult> {
    let result = cmd_train(config)?;
    if let Some(dir) = &config.out_dir {
        for s in &result.seeds {
            write_file(&dir.join(format!("trace_seed{}.csv", s.seed)), &trace_csv(&s.trace))?;
        }
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub full: RunResult,
    pub topo_only: RunResult,
    pub attr_only: RunResult,
}

impl AblationResult {
    pub fn runs(&self) -> [&RunResult; 3] {
        [&self.full, &self.topo_only, &self.attr_only]
    }

    pub fn markdown(&self) -> String {
        let mut out = String::from("| variant | ACC | NMI |\n|---|---|---|\n");
        for (a, r) in Ablation::ALL.iter().zip(self.runs()) {
            let _ = writeln!(out, "| {} | {} |", a.label(), summary_cells(r.summary.as_ref(), " | "));
        }
        out
    }
}

fn summary_cells(s: Option<&Summary>, sep: &str) -> String {
    match s {
        Some(s) => format!(
            "{:.4} ± {:.4}{sep}{:.4} ± {:.4}",
            s.acc_mean, s.acc_std, s.nmi_mean, s.nmi_std
        ),
        None => format!("n/a{sep}n/a"),
    }
}

/// Full model, topology-only and attribute-only variants on the same graph.
/// Each seed is pretrained once and all three variants fine-tune from that
/// checkpoint. Results land in `<out_dir>/<variant>/` and `<out_dir>/ablation.md`.
pub fn cmd_ablate(config: &RunConfig) -> Result<AblationResult> {
    config.validate()?;
    let graph = config.load_dataset()?;
    let full = RunConfig {
        ablation: Ablation::None,
        ..config.clone()
    };
    let full_cfg = full.train_config();
    let checkpoints = config
        .seeds
        .iter()
        .map(|&seed| obtain_checkpoint(&full, &graph, &full_cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(3);
    for ablation in Ablation::ALL {
        let variant = RunConfig {
            ablation,
            out_dir: config.out_dir.as_ref().map(|d| d.join(ablation.label())),
            save_checkpoints: false,
            ..config.clone()
        };
        runs.push(run_on_graph(&variant, &graph, Some(&checkpoints))?);
    }
    let mut runs = runs.into_iter();
    let result = AblationResult {
        full: runs.next().expect("three runs"),
        topo_only: runs.next().expect("three runs"),
        attr_only: runs.next().expect("three runs"),
    };
    if let Some(dir) = &config.out_dir {
        write_file(&dir.join("ablation.md"), &result.markdown())?;
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub name: String,
    pub seeds: usize,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkResult {
    pub fn markdown(&self) -> String {
        let mut out = String::from("| run | seeds | ACC | NMI | status |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            let status = r.error.as_deref().unwrap_or("ok").replace('|', "/");
            let _ = writeln!(
                out,
                "| {} | {} | {} | {status} |",
                r.name,
                r.seeds,
                summary_cells(r.summary.as_ref(), " | ")
            );
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("run,seeds,acc_mean,acc_std,nmi_mean,nmi_std,error\n");
        for r in &self.rows {
            let stats = match &r.summary {
                Some(s) => format!("{},{},{},{}", s.acc_mean, s.acc_std, s.nmi_mean, s.nmi_std),
                None => ",,,".into(),
            };
            let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(out, "{},{},{stats},{error}", r.name.replace(',', ";"), r.seeds);
        }
        out
    }
}

/// Runs each config in turn. A failing run becomes a row carrying its error.
pub fn cmd_benchmark(configs: &[RunConfig]) -> BenchmarkResult {
    let rows = configs
        .iter()
        .map(|c| match cmd_train(c) {
            Ok(r) => BenchmarkRow {
                name: r.name,
                seeds: r.seeds.len(),
                summary: r.summary,
                error: None,
            },
            Err(e) => {
                log::error!("{}: {e}", c.display_name());
                BenchmarkRow {
                    name: c.display_name(),
                    seeds: c.seeds.len(),
                    summary: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    BenchmarkResult { rows }
}

/// Scores an assignment CSV (`node_id,predicted_community`, with header)
/// against a `node_id label` file. Every labelled node needs a prediction.
pub fn cmd_eval(assignments: &Path, labels: &Path) -> Result<EvalReport> {
    let text = read(assignments)?;
    let mut predicted: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in content_lines(&text) {
        if lineno == 1 && line.starts_with("node_id") {
            continue;
        }
        let (id, community) = line
            .split_once(',')
            .ok_or_else(|| parse_err(assignments, lineno, "expected `node_id,predicted_community`"))?;
        let community: usize = community
            .trim()
            .parse()
            .map_err(|_| parse_err(assignments, lineno, format!("bad community `{}`", community.trim())))?;
        if predicted.insert(id.trim().to_string(), community).is_some() {
            return Err(Error::DuplicateNode {
                path: assignments.to_path_buf(),
                line: lineno,
                id: id.trim().to_string(),
            });
        }
    }

    let text = read(labels)?;
    let mut names: BTreeMap<String, usize> = BTreeMap::new();
    let mut pairs = Vec::new();
    for (lineno, line) in content_lines(&text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(parse_err(labels, lineno, "expected `node_id label`"));
        }
        let p = *predicted.get(tokens[0]).ok_or_else(|| Error::UnknownNode {
            path: labels.to_path_buf(),
            line: lineno,
            id: tokens[0].to_string(),
        })?;
        names.insert(tokens[1].to_string(), 0);
        pairs.push((p, tokens[1]));
    }
    for (i, v) in names.values_mut().enumerate() {
        *v = i;
    }
    let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().map(|(p, l)| (p, names[l])).unzip();
    evaluate(&pred, &truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sbm_config() -> RunConfig {
        let mut c = RunConfig::new(DatasetSource::Sbm(SbmSpec {
            block_sizes: vec![12, 12],
            p_in: 0.5,
            p_out: 0.02,
            feature_dim: 3,
            feature_noise: 0.2,
            seed: 4,
        }));
        c.seeds = vec![0];
        c.optimizer.epochs = 3;
        c.pretrain.max_iters = 30;
        c
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"dataset": {"builtin": "cora"}, "hyper": {"alpha": 1, "beta": 1, "gama": 1, "tau": 1}}"#);
        assert!(matches!(err, Err(Error::Config(m)) if m.contains("gama")));
        let err = RunConfig::from_json(r#"{"dataset": {"builtin": "cora"}, "sedes": [1]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn config_parsing_and_presets() {
        let c = RunConfig::from_json(r#"{"dataset": {"builtin": "citeseer"}, "ablation": "topo-only"}"#).unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        let h = c.effective_hyper();
        assert_eq!((h.alpha, h.gamma, h.tau), (1000.0, 0.0, 0.5));
        assert!(RunConfig::from_json(r#"{"dataset": {"builtin": "karate"}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"dataset": {"builtin": "cora"}, "seeds": []}"#).is_err());
    }

    #[test]
    fn builtin_without_root_is_a_config_error() {
        let mut c = RunConfig::new(DatasetSource::Builtin("cora".into()));
        c.data_root = Some(PathBuf::from("/nonexistent-data-root"));
        let err = c.load_dataset().unwrap_err();
        assert!(err.is_data_error());
    }

    #[test]
    fn mean_std_cases() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trace_csv_layout() {
        let csv = trace_csv(&[EpochLoss {
            epoch: 0,
            dnmf: 1.5,
            reg: 0.25,
            cl: -2.0,
            total: 0.0,
        }]);
        assert_eq!(csv, "epoch,L_DNMF,L_reg,L_cl,total\n0,1.5,0.25,-2,0\n");
    }

    #[test]
    fn train_writes_outputs_and_eval_reads_them() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = sbm_config();
        c.out_dir = Some(dir.path().to_path_buf());
        let r = cmd_trace(&c).unwrap();
        assert!(dir.path().join("result.json").is_file());
        assert!(dir.path().join("trace_seed0.csv").is_file());

        let graph = c.load_dataset().unwrap();
        crate::datasets::write_graph(&graph, dir.path()).unwrap();
        let report = cmd_eval(&dir.path().join("assignments_seed0.csv"), &dir.path().join(LABELS_FILE)).unwrap();
        assert_eq!(Some(&report), r.seeds[0].report.as_ref());
    }

    #[test]
    fn benchmark_records_failures_and_continues() {
        let mut bad = RunConfig::new(DatasetSource::Builtin("cora".into()));
        bad.data_root = Some(PathBuf::from("/nonexistent-data-root"));
        let b = cmd_benchmark(&[bad, sbm_config()]);
        assert_eq!(b.rows.len(), 2);
        assert!(b.rows[0].error.is_some());
        assert!(b.rows[1].summary.is_some());
        assert_eq!(b.markdown().lines().count(), 4);
        assert_eq!(b.csv().lines().count(), 3);
    }

    #[test]
    fn ablation_variants_never_depend_on_tau() {
        let mut c = sbm_config();
        let a = cmd_ablate(&c).unwrap();
        c.hyper = Some(HyperParams {
            tau: 0.1,
            ..HyperParams::cora()
        });
        let b = cmd_ablate(&c).unwrap();
        assert_eq!(a.topo_only.seeds, b.topo_only.seeds);
        assert_eq!(a.attr_only.seeds, b.attr_only.seeds);
        assert_eq!(a.markdown().lines().count(), 5);
    }
}

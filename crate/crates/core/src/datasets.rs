//! Attributed graphs: loading from text files, writing them back, and
//! generating planted-partition (stochastic block model) fixtures.
//!
//! File formats, all UTF-8 and whitespace separated, `#` starts a comment line:
//!
//! * edges: `src dst [weight]`, one edge per line. Edges are symmetrized and
//!   self-loops dropped.
//! * features: `node_id v1 v2 ...` (dense) or `node_id idx:val ...` (sparse,
//!   zero-based indices). The order of this file fixes node indices.
//! * labels: `node_id label`. Label strings map to `0..r` in sorted order.
//!
//! Features are held as a `d × n` matrix, one column per node.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, DenseMatrix, SparseMatrix};

/// Features denser than this are stored as a dense matrix.
const DENSE_FEATURE_THRESHOLD: f64 = 0.5;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";

#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    adjacency: SparseMatrix,
    features: DataMatrix,
    labels: Option<Vec<usize>>,
    label_names: Vec<String>,
    node_ids: Vec<String>,
}

impl AttributedGraph {
    /// Checks every structural invariant: symmetric adjacency with an empty
    /// diagonal, `features.cols == n`, labels in range.
    pub fn new(
        adjacency: SparseMatrix,
        features: DataMatrix,
        labels: Option<Vec<usize>>,
        label_names: Vec<String>,
        node_ids: Vec<String>,
    ) -> Result<Self> {
        let n = node_ids.len();
        if adjacency.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "adjacency is {}x{} for {n} nodes",
                adjacency.rows(),
                adjacency.cols()
            )));
        }
        if features.cols() != n {
            return Err(Error::Shape(format!(
                "features have {} columns for {n} nodes",
                features.cols()
            )));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::Domain("adjacency is not symmetric".into()));
        }
        if adjacency.entries().iter().any(|&(i, j, _)| i == j) {
            return Err(Error::Domain("adjacency has self-loops".into()));
        }
        if !adjacency.is_nonnegative() {
            return Err(Error::Domain("adjacency has negative weights".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Shape(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
                return Err(Error::Domain(format!(
                    "label {bad} out of range for {} communities",
                    label_names.len()
                )));
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            label_names,
            node_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &DataMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.rows()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of ground-truth communities, when labels are present.
    pub fn num_communities(&self) -> Option<usize> {
        self.labels.as_ref().map(|_| self.label_names.len())
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }
}

/// Optional feature preprocessing. Both are off by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureOptions {
    /// Replace every nonzero feature by 1.
    pub binarize: bool,
    /// Scale each node's feature vector to unit Euclidean norm.
    pub normalize_columns: bool,
}

pub fn load_graph(
    edges_path: &Path,
    features_path: &Path,
    labels_path: Option<&Path>,
) -> Result<AttributedGraph> {
    load_graph_with(edges_path, features_path, labels_path, FeatureOptions::default())
}

pub fn load_graph_with(
    edges_path: &Path,
    features_path: &Path,
    labels_path: Option<&Path>,
    options: FeatureOptions,
) -> Result<AttributedGraph> {
    let features_text = read(features_path)?;
    let (node_ids, triplets, dim) = parse_features(features_path, &features_text)?;
    let index: HashMap<&str, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let edges_text = read(edges_path)?;
    let adjacency = parse_edges(edges_path, &edges_text, &index, false)?;

    let (labels, label_names) = match labels_path {
        Some(p) => {
            let (labels, names) = parse_labels(p, &read(p)?, &index)?;
            (Some(labels), names)
        }
        None => (None, Vec::new()),
    };

    let features = build_features(dim, node_ids.len(), triplets, options)?;
    AttributedGraph::new(adjacency, features, labels, label_names, node_ids)
}

/// Loads the LINQS citation layout: `<name>.content` holds
/// `paper_id feature... class_label` and `<name>.cites` holds
/// `cited_id citing_id`. Citations to papers missing from the content file
/// are skipped with a warning (the public Citeseer release has a few).
pub fn load_linqs(content_path: &Path, cites_path: &Path) -> Result<AttributedGraph> {
    let text = read(content_path)?;
    let mut node_ids = Vec::new();
    let mut raw_labels = Vec::new();
    let mut triplets = Vec::new();
    let mut dim = None;
    let mut seen = HashMap::new();
    for (lineno, line) in content_lines(&text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(parse_err(content_path, lineno, "expected id, features and label"));
        }
        let id = tokens[0];
        let label = tokens[tokens.len() - 1];
        let values = &tokens[1..tokens.len() - 1];
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(
                    content_path,
                    lineno,
                    format!("expected {d} feature values, found {}", values.len()),
                ))
            }
            _ => {}
        }
        let node = node_ids.len();
        if seen.insert(id.to_string(), node).is_some() {
            return Err(Error::DuplicateNode {
                path: content_path.to_path_buf(),
                line: lineno,
                id: id.to_string(),
            });
        }
        for (k, tok) in values.iter().enumerate() {
            let v = parse_value(content_path, lineno, tok)?;
            if v != 0.0 {
                triplets.push((k, node, v));
            }
        }
        node_ids.push(id.to_string());
        raw_labels.push(label.to_string());
    }
    let index: HashMap<&str, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let adjacency = parse_edges(cites_path, &read(cites_path)?, &index, true)?;
    let label_names: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels = raw_labels
        .iter()
        .map(|l| label_names.binary_search(l).expect("label collected above"))
        .collect();
    let features = build_features(dim.unwrap_or(0), node_ids.len(), triplets, FeatureOptions::default())?;
    AttributedGraph::new(adjacency, features, Some(labels), label_names, node_ids)
}

/// Writes `edges.tsv`, `features.tsv` and (when labelled) `labels.tsv`
/// into `dir` in the formats `load_graph` reads.
pub fn write_graph(graph: &AttributedGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ids = graph.node_ids();

    let mut edges = String::new();
    for &(i, j, w) in graph.adjacency().entries() {
        if i < j {
            if w == 1.0 {
                edges.push_str(&format!("{}\t{}\n", ids[i], ids[j]));
            } else {
                edges.push_str(&format!("{}\t{}\t{w}\n", ids[i], ids[j]));
            }
        }
    }
    write_file(&dir.join(EDGES_FILE), &edges)?;

    let mut features = String::new();
    match graph.features() {
        DataMatrix::Sparse(x) => {
            let xt = x.transpose();
            for (node, id) in ids.iter().enumerate() {
                features.push_str(id);
                for &(_, k, v) in xt.row_entries(node) {
                    features.push_str(&format!("\t{k}:{v}"));
                }
                features.push('\n');
            }
        }
        DataMatrix::Dense(x) => {
            for (node, id) in ids.iter().enumerate() {
                features.push_str(id);
                for k in 0..x.rows() {
                    features.push_str(&format!("\t{}", x.get(k, node)));
                }
                features.push('\n');
            }
        }
    }
    write_file(&dir.join(FEATURES_FILE), &features)?;

    if let Some(labels) = graph.labels() {
        let mut out = String::new();
        for (id, &l) in ids.iter().zip(labels) {
            out.push_str(&format!("{id}\t{}\n", graph.label_names()[l]));
        }
        write_file(&dir.join(LABELS_FILE), &out)?;
    }
    Ok(())
}

/// Planted-partition graph description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    /// Width of each block's indicator; total feature dimension is
    /// `feature_dim × blocks`.
    pub feature_dim: usize,
    /// Amplitude of uniform `[0, feature_noise)` noise added to every feature.
    pub feature_noise: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(Error::Config("block_sizes must be nonempty and positive".into()));
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= p_out < p_in <= 1, got p_in = {}, p_out = {}",
                self.p_in, self.p_out
            )));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::Config("feature_noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn generate_sbm(spec: &SbmSpec) -> Result<AttributedGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blocks: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = blocks.len();

    let mut triplets = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if blocks[i] == blocks[j] { spec.p_in } else { spec.p_out };
            if rng.gen::<f64>() < p {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;

    let d = spec.feature_dim * spec.block_sizes.len();
    let mut x = DenseMatrix::zeros(d, n);
    for (node, &b) in blocks.iter().enumerate() {
        for k in 0..d {
            let indicator = if k / spec.feature_dim.max(1) == b { 1.0 } else { 0.0 };
            let noise = if spec.feature_noise > 0.0 {
                rng.gen::<f64>() * spec.feature_noise
            } else {
                0.0
            };
            x.set(k, node, indicator + noise);
        }
    }
    let features = store_features(x);

    let width = spec.block_sizes.len().saturating_sub(1).to_string().len();
    let label_names = (0..spec.block_sizes.len())
        .map(|b| format!("block{b:0width$}"))
        .collect();
    let node_ids = (0..n).map(|i| i.to_string()).collect();
    AttributedGraph::new(adjacency, features, Some(blocks), label_names, node_ids)
}

fn store_features(x: DenseMatrix) -> DataMatrix {
    let total = x.rows() * x.cols();
    let nnz = x.as_slice().iter().filter(|v| **v != 0.0).count();
    if total > 0 && (nnz as f64) <= DENSE_FEATURE_THRESHOLD * total as f64 {
        DataMatrix::Sparse(SparseMatrix::from_dense(&x))
    } else {
        DataMatrix::Dense(x)
    }
}

fn build_features(
    dim: usize,
    n: usize,
    mut triplets: Vec<(usize, usize, f64)>,
    options: FeatureOptions,
) -> Result<DataMatrix> {
    if options.binarize {
        for t in &mut triplets {
            t.2 = 1.0;
        }
    }
    if options.normalize_columns {
        let mut norms = vec![0.0f64; n];
        for &(_, node, v) in &triplets {
            norms[node] += v * v;
        }
        for t in &mut triplets {
            let norm = norms[t.1].sqrt();
            if norm > 0.0 {
                t.2 /= norm;
            }
        }
    }
    let total = dim * n;
    if total > 0 && (triplets.len() as f64) > DENSE_FEATURE_THRESHOLD * total as f64 {
        let mut x = DenseMatrix::zeros(dim, n);
        for (k, node, v) in triplets {
            x.set(k, node, x.get(k, node) + v);
        }
        Ok(DataMatrix::Dense(x))
    } else {
        Ok(DataMatrix::Sparse(SparseMatrix::from_triplets(dim, n, triplets)?))
    }
}

type FeatureParse = (Vec<String>, Vec<(usize, usize, f64)>, usize);

fn parse_features(path: &Path, text: &str) -> Result<FeatureParse> {
    let mut node_ids = Vec::new();
    let mut seen = HashMap::new();
    let mut triplets = Vec::new();
    // None until the first line with values decides the layout.
    let mut sparse: Option<bool> = None;
    let mut dense_dim: Option<usize> = None;
    let mut max_index = 0usize;
    let mut bare_lines = Vec::new();

    for (lineno, line) in content_lines(text) {
        let mut tokens = line.split_whitespace();
        let id = tokens.next().expect("content lines are nonempty");
        let node = node_ids.len();
        if seen.insert(id.to_string(), lineno).is_some() {
            return Err(Error::DuplicateNode {
                path: path.to_path_buf(),
                line: lineno,
                id: id.to_string(),
            });
        }
        node_ids.push(id.to_string());
        let values: Vec<&str> = tokens.collect();
        if values.is_empty() {
            bare_lines.push(lineno);
            continue;
        }
        let is_sparse = values[0].contains(':');
        match sparse {
            None => sparse = Some(is_sparse),
            Some(s) if s != is_sparse => {
                return Err(parse_err(path, lineno, "mixed dense and sparse feature rows"))
            }
            _ => {}
        }
        if is_sparse {
            for tok in values {
                let (idx, val) = tok
                    .split_once(':')
                    .ok_or_else(|| parse_err(path, lineno, format!("expected idx:val, got `{tok}`")))?;
                let idx: usize = idx
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad feature index `{idx}`")))?;
                let val = parse_value(path, lineno, val)?;
                max_index = max_index.max(idx + 1);
                if val != 0.0 {
                    triplets.push((idx, node, val));
                }
            }
        } else {
            match dense_dim {
                None => dense_dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("expected {d} feature values, found {}", values.len()),
                    ))
                }
                _ => {}
            }
            for (k, tok) in values.iter().enumerate() {
                let v = parse_value(path, lineno, tok)?;
                if v != 0.0 {
                    triplets.push((k, node, v));
                }
            }
        }
    }
    let dim = match sparse {
        Some(false) => {
            if let Some(&line) = bare_lines.first() {
                return Err(parse_err(path, line, "dense feature row has no values"));
            }
            dense_dim.unwrap_or(0)
        }
        _ => max_index,
    };
    Ok((node_ids, triplets, dim))
}

fn parse_edges(
    path: &Path,
    text: &str,
    index: &HashMap<&str, usize>,
    skip_unknown: bool,
) -> Result<SparseMatrix> {
    let n = index.len();
    let mut weights: HashMap<(usize, usize), f64> = HashMap::new();
    let mut skipped = 0usize;
    for (lineno, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 && tokens.len() != 3 {
            return Err(parse_err(path, lineno, "expected `src dst [weight]`"));
        }
        let lookup = |id: &str| -> Result<Option<usize>> {
            match index.get(id) {
                Some(&i) => Ok(Some(i)),
                None if skip_unknown => Ok(None),
                None => Err(Error::UnknownNode {
                    path: path.to_path_buf(),
                    line: lineno,
                    id: id.to_string(),
                }),
            }
        };
        let (Some(a), Some(b)) = (lookup(tokens[0])?, lookup(tokens[1])?) else {
            skipped += 1;
            continue;
        };
        let w = match tokens.get(2) {
            Some(tok) => parse_value(path, lineno, tok)?,
            None => 1.0,
        };
        if w <= 0.0 {
            return Err(parse_err(path, lineno, "edge weights must be positive"));
        }
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        let entry = weights.entry(key).or_insert(w);
        *entry = entry.max(w);
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} edges with unknown endpoints", path.display());
    }
    let mut triplets = Vec::with_capacity(weights.len() * 2);
    for ((a, b), w) in weights {
        triplets.push((a, b, w));
        triplets.push((b, a, w));
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

fn parse_labels(
    path: &Path,
    text: &str,
    index: &HashMap<&str, usize>,
) -> Result<(Vec<usize>, Vec<String>)> {
    let mut raw: Vec<Option<String>> = vec![None; index.len()];
    for (lineno, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(parse_err(path, lineno, "expected `node_id label`"));
        }
        let node = *index.get(tokens[0]).ok_or_else(|| Error::UnknownNode {
            path: path.to_path_buf(),
            line: lineno,
            id: tokens[0].to_string(),
        })?;
        if raw[node].replace(tokens[1].to_string()).is_some() {
            return Err(Error::DuplicateNode {
                path: path.to_path_buf(),
                line: lineno,
                id: tokens[0].to_string(),
            });
        }
    }
    if let Some(missing) = raw.iter().position(Option::is_none) {
        let id = index
            .iter()
            .find(|(_, &i)| i == missing)
            .map(|(id, _)| id.to_string())
            .unwrap_or_default();
        return Err(Error::Domain(format!(
            "{}: node `{id}` has no label",
            path.display()
        )));
    }
    let raw: Vec<String> = raw.into_iter().map(Option::unwrap).collect();
    let names: Vec<String> = raw.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw
        .iter()
        .map(|l| names.binary_search(l).expect("name collected above"))
        .collect();
    Ok((labels, names))
}

pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_value(path: &Path, line: usize, tok: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(path, line, format!("bad numeric value `{tok}`"))),
    }
}

pub(crate) fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames it into place.
pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    let tmp: PathBuf = {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".tmp");
        path.with_file_name(name)
    };
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

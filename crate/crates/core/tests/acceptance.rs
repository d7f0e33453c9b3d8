//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! Criteria on Cora, Citeseer and PubMed read the datasets from
//! `$CDNMF_DATA_ROOT/<name>/` (edge-list layout or LINQS `.content`/`.cites`).

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use cdnmf::contrastive::{debiased_negatives, pseudo_labels};
use cdnmf::linalg::trace_quadratic;
use cdnmf::model::HyperParams;
use cdnmf::optim::{fd_check, ViewTargets};
use cdnmf::pretrain::nmf;
use cdnmf::runner::{cmd_ablate, cmd_trace, AblationResult, DatasetSource, RunConfig, DATA_ROOT_ENV};
use cdnmf::train::{fine_tune_observed, pretrain, TrainConfig};
use cdnmf::{
    accuracy, build_laplacian, evaluate, generate_sbm, nmi, train, DenseMatrix, FactorStack, ModelState, NegCap,
    ProjectionHead, SbmSpec, SparseMatrix,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
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

fn random_stack(input: usize, n: usize, r: usize, depth: usize, rng: &mut ChaCha8Rng) -> FactorStack {
    let mut widths = vec![input];
    for layer in 0..depth {
        let prev = *widths.last().unwrap();
        let w = if layer + 1 == depth { r } else { rng.gen_range(r..=prev) };
        widths.push(w);
    }
    let mut m = |rows, cols| DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-0.5..1.0));
    let factors = widths.windows(2).map(|w| m(w[0], w[1])).collect();
    FactorStack::new(factors, m(r, n)).unwrap()
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let n = rng.gen_range(3..=10);
        let r = rng.gen_range(1..=3usize.min(n));
        let depth = rng.gen_range(1..=2);
        let d = rng.gen_range(r..=8);
        let hyper = HyperParams {
            alpha: rng.gen_range(150.0..=1000.0),
            beta: rng.gen_range(2.0..=10.0),
            gamma: 5.0,
            tau: rng.gen_range(0.5..=1.4),
            ..HyperParams::cora()
        };
        let adj = random_graph(n, 0.4, &mut rng);
        let topo = random_stack(n, n, r, depth, &mut rng);
        let attr = random_stack(d, n, r, depth, &mut rng);
        let x = DenseMatrix::from_fn(d, n, |_, _| rng.gen::<f64>());
        let state = ModelState::new(Some(topo), Some(attr), build_laplacian(&adj).unwrap(), hyper).unwrap();
        let mut head = ProjectionHead::for_rank(r, None, instance);
        head.b1 = DenseMatrix::from_fn(head.b1.rows(), 1, |_, _| rng.gen_range(0.0..0.5));
        let negs = debiased_negatives(&pseudo_labels(state.topo.as_ref().unwrap().representation()), None, instance);
        let data = ViewTargets {
            topology: adj.into(),
            attributes: x.into(),
        };
        let err = fd_check(&state, &head, Some(&negs), &data, 1e-5, 300, instance).unwrap();
        worst = worst.max(err);
    }
    outcome(worst < 1e-4, format!("worst relative error {worst:.3e} over 20 instances (< 1e-4)"))
}

fn trace_identity() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + case);
        let n = rng.gen_range(2..=30);
        let r = rng.gen_range(1..=5);
        let a = random_graph(n, 0.3, &mut rng);
        let v = DenseMatrix::from_fn(r, n, |_, _| rng.gen_range(-2.0..2.0));
        let lhs = trace_quadratic(&v, &build_laplacian(&a).unwrap()).unwrap();
        let mut rhs = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = a.get(i, j);
                if w != 0.0 {
                    let dist: f64 = (0..r).map(|k| (v.get(k, i) - v.get(k, j)).powi(2)).sum();
                    rhs += 0.5 * w * dist;
                }
            }
        }
        let rel = if rhs == 0.0 { lhs.abs() } else { (lhs - rhs).abs() / rhs.abs() };
        worst = worst.max(rel);
    }
    outcome(worst < 1e-9, format!("worst relative error {worst:.3e} over 50 pairs (< 1e-9)"))
}

fn nmf_monotone() -> Outcome {
    let mut violations = 0;
    let mut worst_rise = 0.0f64;
    for case in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + case);
        let rows = rng.gen_range(4..=30);
        let cols = rng.gen_range(4..=30);
        let k = rng.gen_range(1..=rows.min(cols));
        let m = DenseMatrix::from_fn(rows, cols, |_, _| rng.gen::<f64>());
        let res = nmf(&m.into(), k, 200, 0.0, case).unwrap();
        for w in res.error_trace.windows(2) {
            let rise = w[1] - w[0];
            if rise > 1e-10 {
                violations += 1;
            }
            worst_rise = worst_rise.max(rise);
        }
    }
    outcome(
        violations == 0,
        format!("{violations} increases over 20 runs, largest step change {worst_rise:.3e} (slack 1e-10)"),
    )
}

fn debiasing_exact() -> Outcome {
    let graph = generate_sbm(&SbmSpec {
        block_sizes: vec![30, 30, 30],
        p_in: 0.3,
        p_out: 0.02,
        feature_dim: 5,
        feature_noise: 0.5,
        seed: 7,
    })
    .unwrap();
    let mut config = TrainConfig::default();
    config.optimizer.epochs = 5;
    config.optimizer.patience = None;
    let checkpoint = pretrain(&graph, &config, 0).unwrap();
    let mut epochs = 0;
    let mut bad = 0;
    fine_tune_observed(&graph, &config, checkpoint, |view| {
        epochs += 1;
        let labels = pseudo_labels(view.state.primary_representation()).labels;
        let negs = view.negatives.expect("contrastive run");
        for i in 0..labels.len() {
            let set = negs.to_vec(i);
            let clean = set.iter().all(|&k| labels[k] != labels[i]);
            let others: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] != labels[i]).collect();
            let mut sorted = set.clone();
            sorted.sort_unstable();
            if !clean || sorted != others {
                bad += 1;
            }
        }
    })
    .unwrap();
    outcome(
        epochs == 5 && bad == 0,
        format!("{epochs} epochs observed, {bad} anchors with a same-label negative or a non-partition set"),
    )
}

fn sbm_recovery() -> Outcome {
    let mut accs = Vec::new();
    let mut nmis = Vec::new();
    for seed in 0..5u64 {
        let graph = generate_sbm(&SbmSpec {
            block_sizes: vec![50, 50],
            p_in: 0.3,
            p_out: 0.01,
            feature_dim: 10,
            feature_noise: 0.5,
            seed,
        })
        .unwrap();
        let out = train(&graph, &TrainConfig::default(), seed).unwrap();
        let r = evaluate(&out.predictions, graph.labels().unwrap()).unwrap();
        accs.push(r.acc);
        nmis.push(r.nmi);
    }
    let min_acc = accs.iter().copied().fold(f64::INFINITY, f64::min);
    let min_nmi = nmis.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        min_acc >= 0.95 && min_nmi >= 0.8,
        format!("per-seed ACC {accs:.3?} (>= 0.95), NMI {nmis:.3?} (>= 0.8)"),
    )
}

fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}

fn builtin_config(name: &str, seeds: Vec<u64>) -> RunConfig {
    let mut c = RunConfig::new(DatasetSource::Builtin(name.into()));
    c.seeds = seeds;
    c
}

fn unavailable(name: &str) -> String {
    match data_root() {
        None => format!("{name} unavailable: {DATA_ROOT_ENV} is not set"),
        Some(root) => format!("{name} unavailable under {}", root.display()),
    }
}

fn cora_ablation() -> &'static Result<AblationResult, String> {
    static CELL: OnceLock<Result<AblationResult, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        if data_root().is_none() {
            return Err(unavailable("cora"));
        }
        cmd_ablate(&builtin_config("cora", (0..5).collect())).map_err(|e| format!("{}: {e}", unavailable("cora")))
    })
}

fn cora_reproduction() -> Outcome {
    match cora_ablation() {
        Err(e) => outcome(false, e.clone()),
        Ok(a) => {
            let s = a.full.summary.as_ref().expect("cora has labels");
            outcome(
                s.acc_mean >= 0.55 && s.nmi_mean >= 0.35,
                format!(
                    "mean ACC {:.4} (>= 0.55, target 0.6081 ± 0.05), NMI {:.4} (>= 0.35, target 0.4006 ± 0.05)",
                    s.acc_mean, s.nmi_mean
                ),
            )
        }
    }
}

fn citeseer_reproduction() -> Outcome {
    if data_root().is_none() {
        return outcome(false, unavailable("citeseer"));
    }
    match cdnmf::cmd_train(&builtin_config("citeseer", (0..5).collect())) {
        Err(e) => outcome(false, format!("{}: {e}", unavailable("citeseer"))),
        Ok(r) => {
            let s = r.summary.expect("citeseer has labels");
            outcome(
                s.acc_mean >= 0.42 && s.nmi_mean >= 0.18,
                format!("mean ACC {:.4} (>= 0.42), NMI {:.4} (>= 0.18)", s.acc_mean, s.nmi_mean),
            )
        }
    }
}

fn ablation_ordering() -> Outcome {
    match cora_ablation() {
        Err(e) => outcome(false, e.clone()),
        Ok(a) => {
            let [full, topo, attr] = a.runs().map(|r| r.summary.clone().expect("cora has labels"));
            outcome(
                full.acc_mean > topo.acc_mean
                    && topo.acc_mean > attr.acc_mean
                    && full.nmi_mean > topo.nmi_mean
                    && full.nmi_mean > attr.nmi_mean,
                format!(
                    "ACC full {:.4} > topo-only {:.4} > attr-only {:.4}; NMI full {:.4} vs {:.4}, {:.4}",
                    full.acc_mean, topo.acc_mean, attr.acc_mean, full.nmi_mean, topo.nmi_mean, attr.nmi_mean
                ),
            )
        }
    }
}

fn convergence_shape() -> Outcome {
    if data_root().is_none() {
        return outcome(false, unavailable("cora"));
    }
    let mut config = builtin_config("cora", vec![0]);
    config.optimizer.epochs = 50;
    config.optimizer.patience = None;
    match cmd_trace(&config) {
        Err(e) => outcome(false, format!("{}: {e}", unavailable("cora"))),
        Ok(r) => {
            let trace = &r.seeds[0].trace;
            let min = trace.iter().map(|e| e.total).fold(f64::INFINITY, f64::min);
            match trace.iter().find(|e| e.epoch == 30) {
                None => outcome(false, format!("trace has only {} epochs", trace.len())),
                Some(e) => {
                    let gap = (e.total - min) / min.abs();
                    outcome(
                        gap <= 0.02,
                        format!("epoch-30 total {:.6e}, minimum {min:.6e}, gap {:.3}% (<= 2%)", e.total, 100.0 * gap),
                    )
                }
            }
        }
    }
}

fn metric_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut perm_failures = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..60);
        let k = rng.gen_range(1..6);
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let mut names: Vec<usize> = (0..k).collect();
        names.shuffle(&mut rng);
        let renamed: Vec<usize> = pred.iter().map(|&p| names[p]).collect();
        if accuracy(&pred, &truth).unwrap().0 != accuracy(&renamed, &truth).unwrap().0 {
            perm_failures += 1;
        }
    }
    let mut nmi_failures = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..60);
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let x = nmi(&a, &b).unwrap();
        let y = nmi(&b, &a).unwrap();
        if (x - y).abs() > 1e-12 || !(0.0..=1.0).contains(&x) {
            nmi_failures += 1;
        }
    }
    let example = accuracy(&[0, 0, 1, 1, 1], &[1, 1, 0, 0, 1]).unwrap().0;
    outcome(
        perm_failures == 0 && nmi_failures == 0 && example == 0.8,
        format!(
            "{perm_failures}/100 relabelings changed ACC, {nmi_failures}/100 NMI pairs asymmetric or out of range, example ACC {example}"
        ),
    )
}

/// Optional: reported but never counted as a failure.
fn pubmed_optional() -> Option<Outcome> {
    let root = data_root()?;
    if !root.join("pubmed").is_dir() {
        return None;
    }
    let mut config = builtin_config("pubmed", vec![0, 1, 2]);
    let mut hyper = HyperParams::pubmed();
    hyper.neg_cap = NegCap::Cap(256);
    config.hyper = Some(hyper);
    Some(match cdnmf::cmd_train(&config) {
        Err(e) => outcome(false, e.to_string()),
        Ok(r) => {
            let s = r.summary.expect("pubmed has labels");
            outcome(
                s.acc_mean >= 0.58,
                format!("mean ACC {:.4} (>= 0.58, neg_cap 256), NMI {:.4}", s.acc_mean, s.nmi_mean),
            )
        }
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 gradient correctness", gradient_check),
        ("2 laplacian trace identity", trace_identity),
        ("3 pretraining monotonicity", nmf_monotone),
        ("4 debiased sampling exactness", debiasing_exact),
        ("5 sbm recovery", sbm_recovery),
        ("6 cora reproduction", cora_reproduction),
        ("7 citeseer reproduction", citeseer_reproduction),
        ("8 ablation ordering", ablation_ordering),
        ("9 convergence shape", convergence_shape),
        ("10 metric correctness", metric_correctness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        println!("[{}] {name}: {} ({secs:.1}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    match pubmed_optional() {
        Some(o) => println!("[{}] optional pubmed: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail),
        None => println!("[SKIP] optional pubmed: dataset not present"),
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

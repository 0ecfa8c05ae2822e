//! Runtime scaling over replicated trees.
//!
//! A sequence of base trees is copied `s` times per tree, so the internal
//! node count grows exactly linearly in `s`. Each sequence is solved with
//! the local-search path and only the trailing trees are timed.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use topicflow::dcm::DcmParams;
use topicflow::ingest::{link_trees, LinkParams};
use topicflow::model::{DocumentStore, Focus, FocusSet, NodeRef, TopicTree, TreeCut, TreeMapping};
use topicflow::synth::{populate, replicate_mapping, replicate_tree, shape_with_internal, TreeShape};
use topicflow::treecut::{solve_heuristic, CutParams, CutProblem};

use crate::CliError;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub ms: Vec<usize>,
    pub repeats: usize,
    pub base_trees: usize,
    /// Trees before this index are solved but not timed.
    pub timed_from: usize,
    pub internal: usize,
    pub max_children: usize,
    pub dim: usize,
    pub docs: usize,
    pub seed: u64,
    pub alpha: f64,
    pub cut: CutParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1, 3, 5, 7, 9, 11, 13, 15],
            ms: vec![1, 3, 5],
            repeats: 1,
            base_trees: 10,
            timed_from: 5,
            internal: 118,
            max_children: 3,
            dim: 200,
            docs: 400,
            seed: 0,
            alpha: 0.01,
            cut: CutParams::default(),
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    #[serde(rename = "I_num")]
    pub i_num: usize,
    pub m: usize,
    #[serde(rename = "P_num")]
    pub p_num: usize,
    /// Mean wall time per timed tree.
    pub seconds: f64,
    pub normalized_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchMeta {
    pub solver: String,
    pub base_trees: usize,
    pub timed_trees: Vec<usize>,
    /// Internal nodes of one base tree; the `I_avg` of the normalization.
    pub base_internal: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Log-log slope of seconds against I_num with one intercept per m.
    pub slope: Option<f64>,
    pub slopes_by_m: Vec<(usize, Option<f64>)>,
    /// Wall time of every solve in a sequence, timed or not.
    pub sequence_seconds: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub meta: BenchMeta,
}

impl BenchReport {
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
        }
        if self.records.is_empty() {
            w.write_record(["I_num", "m", "P_num", "seconds", "normalized_seconds"])
                .map_err(|e| CliError::Input(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// `real · (I_avg / I_cur)²`.
pub fn normalized_seconds(real: f64, i_avg: f64, i_cur: f64) -> f64 {
    real * (i_avg / i_cur).powi(2)
}

/// Least-squares slope of `ln y` on `ln x`, pooled over groups that each
/// keep their own intercept. `None` without two distinct x in some group.
pub fn loglog_slope(groups: &[Vec<(f64, f64)>]) -> Option<f64> {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for g in groups {
        if g.is_empty() {
            continue;
        }
        let pts: Vec<(f64, f64)> = g.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        for (x, y) in pts {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
    }
    (sxx > 0.0 && sxy.is_finite()).then(|| sxy / sxx)
}

/// Trees, mappings and their documents.
#[derive(Clone)]
pub struct TreeSet {
    pub store: DocumentStore,
    pub trees: Vec<TopicTree>,
    pub mappings: Vec<TreeMapping>,
}

/// Seeded base sequence: every tree has exactly `internal` internal nodes.
pub fn base_set(cfg: &BenchConfig) -> Result<TreeSet, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = TreeShape { dim: cfg.dim, docs: cfg.docs, max_children: cfg.max_children, ..TreeShape::default() };
    let mut store = DocumentStore::new(cfg.dim);
    let mut trees = Vec::with_capacity(cfg.base_trees);
    for t in 0..cfg.base_trees {
        let children = shape_with_internal(&mut rng, cfg.internal, cfg.max_children);
        let s = TreeShape { time_index: t, ..shape.clone() };
        trees.push(populate(&mut rng, &children, &s, &[], &format!("d{t}_"), &mut store));
    }
    let link = LinkParams::default();
    let mappings = trees.windows(2).map(|w| link_trees(&w[0], &w[1], &store, &link)).collect();
    Ok(TreeSet { store, trees, mappings })
}

/// Copies every tree `s` times.
pub fn replicate(base: &TreeSet, s: usize) -> Result<TreeSet, CliError> {
    let mut store = base.store.clone();
    let mut trees = Vec::with_capacity(base.trees.len());
    for t in &base.trees {
        let (big, docs) = replicate_tree(t, &base.store, s);
        for d in docs {
            store.insert(d)?;
        }
        trees.push(big);
    }
    let mappings = base.mappings.iter().map(|m| replicate_mapping(m, s)).collect();
    Ok(TreeSet { store, trees, mappings })
}

/// `m` distinct non-root nodes drawn from the untimed prefix.
pub fn random_foci(rng: &mut ChaCha8Rng, trees: &[TopicTree], m: usize) -> Result<FocusSet, CliError> {
    let pool: Vec<(usize, &str)> = trees
        .iter()
        .flat_map(|t| t.nodes().iter().skip(1).map(move |n| (t.time_index(), n.id.as_str())))
        .collect();
    let picks: Vec<Focus> = pool
        .choose_multiple(rng, m)
        .map(|&(t, id)| {
            let tree = trees.iter().find(|x| x.time_index() == t).expect("pool comes from trees");
            Focus {
                node: NodeRef { time_index: t, node_id: id.to_string() },
                doc_ids: tree.get(id).expect("pool comes from trees").doc_ids.clone(),
            }
        })
        .collect();
    Ok(FocusSet::new(picks)?)
}

/// Solves the sequence in order; returns per-tree seconds for every tree.
pub fn time_sequence(set: &TreeSet, foci: &FocusSet, dcm: &DcmParams, cut: &CutParams) -> Result<Vec<f64>, CliError> {
    let mut prev: Option<TreeCut> = None;
    let mut times = Vec::with_capacity(set.trees.len());
    for (t, tree) in set.trees.iter().enumerate() {
        let problem = CutProblem {
            tree,
            prev: prev.as_ref().map(|c| (c, &set.mappings[t - 1])),
            foci,
            store: &set.store,
            dcm,
            params: cut,
        };
        let start = Instant::now();
        let outcome = solve_heuristic(&problem)?;
        times.push(start.elapsed().as_secs_f64());
        prev = Some(outcome.cut);
    }
    Ok(times)
}

/// Runs every (size, m) point; `progress` sees each record as it lands.
pub fn run_bench(cfg: &BenchConfig, progress: &mut dyn FnMut(&BenchRecord)) -> Result<BenchReport, CliError> {
    if cfg.timed_from >= cfg.base_trees {
        return Err(CliError::Input("no trees left to time".into()));
    }
    if cfg.sizes.iter().collect::<std::collections::BTreeSet<_>>().len() < 2 {
        return Err(CliError::Input("bench needs at least two distinct sizes".into()));
    }
    let base = base_set(cfg)?;
    let dcm = DcmParams::symmetric(cfg.dim, cfg.alpha)?;
    let i_avg = base.trees.iter().map(|t| t.internal_count()).sum::<usize>() as f64 / base.trees.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut records = Vec::new();
    let mut sequence_seconds = Vec::new();
    for &s in &cfg.sizes {
        let set = replicate(&base, s)?;
        let timed = &set.trees[cfg.timed_from..];
        let i_cur = timed.iter().map(|t| t.internal_count()).sum::<usize>() as f64 / timed.len() as f64;
        for &m in &cfg.ms {
            let mut per_tree = Vec::new();
            let mut total = 0.0;
            for _ in 0..cfg.repeats.max(1) {
                let foci = random_foci(&mut rng, &set.trees[..cfg.timed_from], m)?;
                let times = time_sequence(&set, &foci, &dcm, &cfg.cut)?;
                total += times.iter().sum::<f64>();
                per_tree.extend_from_slice(&times[cfg.timed_from..]);
            }
            let seconds = per_tree.iter().sum::<f64>() / per_tree.len() as f64;
            let record = BenchRecord {
                i_num: set.trees[0].internal_count(),
                m,
                p_num: per_tree.len(),
                seconds,
                normalized_seconds: normalized_seconds(seconds, i_avg, i_cur),
            };
            progress(&record);
            records.push(record);
            sequence_seconds.push((s, m, total / cfg.repeats.max(1) as f64));
        }
    }
    let by_m: Vec<(usize, Vec<(f64, f64)>)> = cfg
        .ms
        .iter()
        .map(|&m| (m, records.iter().filter(|r| r.m == m).map(|r| (r.i_num as f64, r.seconds)).collect()))
        .collect();
    let groups: Vec<Vec<(f64, f64)>> = by_m.iter().map(|(_, g)| g.clone()).collect();
    let meta = BenchMeta {
        solver: "heuristic".into(),
        base_trees: cfg.base_trees,
        timed_trees: (cfg.timed_from + 1..=cfg.base_trees).collect(),
        base_internal: cfg.internal,
        repeats: cfg.repeats.max(1),
        seed: cfg.seed,
        slope: loglog_slope(&groups),
        slopes_by_m: by_m.iter().map(|(m, g)| (*m, loglog_slope(std::slice::from_ref(g)))).collect(),
        sequence_seconds,
    };
    Ok(BenchReport { records, meta })
}

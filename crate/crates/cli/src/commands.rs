use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use topicflow::ingest::{build_corpus, load_corpus, slice_documents, LinkParams, RawDocument, VocabParams};
use topicflow::layout::{build_scene, to_svg, LayoutParams, LayoutStep};
use topicflow::metrics::{evaluate, DoiParams, MetricMeans};
use topicflow::model::FocusSet;
use topicflow::postprocess::focus_centroids;
use topicflow::synth::{drifting_corpus, DriftParams};
use topicflow::treecut::CutRecord;
use topicflow_service::{AppState, SessionConfig};

use crate::args::{Command, Common};
use crate::bench::{run_bench, BenchConfig};
use crate::files::{self, groups_from_records, read_json, write_json, write_text, CutsFile, Loaded, TreeBundle};
use crate::pipeline::{doi_cuts, parse_focus, stream_cuts};
use crate::CliError;

pub fn execute(common: &Common, command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { corpus } => {
            let slices = load_corpus(&corpus, common.window_secs())?;
            ingest(common, &slices)
        }
        Command::Cut { trees, focus } => cut(common, &load(&trees)?, &focus),
        Command::Metrics { trees, cuts, baseline } => metrics(common, &load(&trees)?, &read_json(&cuts)?, baseline),
        Command::Bench { sizes, ms, repeats } => bench(common, sizes, ms, repeats),
        Command::Layout { trees, cuts } => layout(common, &load(&trees)?, &read_json(&cuts)?),
        Command::Serve { addr, demo } => serve(common, addr, demo),
        Command::Demo => demo(common),
    }
}

fn load(path: &Path) -> Result<Loaded, CliError> {
    read_json::<TreeBundle>(path)?.load()
}

fn ingest(common: &Common, slices: &[topicflow::ingest::CorpusSlice]) -> Result<(), CliError> {
    let corpus = build_corpus(slices, &VocabParams::default(), &common.build_params(), &LinkParams::default(), common.alpha())?;
    write_json(&common.out, files::TREES_FILE, &TreeBundle::from_corpus(&corpus, common.alpha()))?;
    eprintln!("{} slices, {} terms -> {}", corpus.trees.len(), corpus.vocabulary.size(), common.out.join(files::TREES_FILE).display());
    Ok(())
}

fn cut(common: &Common, data: &Loaded, focus: &str) -> Result<(), CliError> {
    let post = common.post_params();
    let refs = parse_focus(focus, &data.trees, &post)?;
    let foci = FocusSet::from_refs(&refs, &data.trees)?;
    let steps = stream_cuts(&data.trees, &data.mappings, &foci, &data.store, &data.dcm()?, &common.cut_params(), &post)?;
    let cuts = steps.iter().map(|s| CutRecord::new(&s.cut, s.score).with_groups(&s.groups)).collect();
    let file = CutsFile { foci: refs, solver: "stream".into(), cuts };
    write_json(&common.out, files::CUTS_FILE, &file)?;
    eprintln!("{} cuts -> {}", file.cuts.len(), common.out.join(files::CUTS_FILE).display());
    Ok(())
}

#[derive(Serialize)]
struct MeansOut {
    f: Option<f64>,
    s_map: Option<f64>,
    s_nmi_1: Option<f64>,
    s_dist_1: Option<f64>,
}

impl From<MetricMeans> for MeansOut {
    fn from(m: MetricMeans) -> Self {
        Self { f: m.f, s_map: m.s_map, s_nmi_1: m.s_nmi_1, s_dist_1: m.s_dist_1 }
    }
}

#[derive(Serialize)]
struct MetricSummary {
    stream: MeansOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<MeansOut>,
}

fn metrics(common: &Common, data: &Loaded, cuts: &CutsFile, baseline: bool) -> Result<(), CliError> {
    let foci = FocusSet::from_refs(&cuts.foci, &data.trees)?;
    let tree_cuts = cuts.tree_cuts(&data.trees)?;
    let dcm = data.dcm()?;
    let params = common.cut_params();
    let report = evaluate(&data.trees, &tree_cuts, &data.mappings, &foci, &data.store, &dcm, &params)?;
    write_text(&common.out, "metrics.csv", &report.to_csv()?)?;
    let mut summary = MetricSummary { stream: report.means().into(), baseline: None };
    if baseline {
        let focus_vectors = focus_centroids(&foci, &data.store)?;
        let doi = doi_cuts(&data.trees, &data.mappings, &focus_vectors, &DoiParams::default(), &params)?;
        let base = evaluate(&data.trees, &doi, &data.mappings, &foci, &data.store, &dcm, &params)?;
        write_text(&common.out, "baseline_metrics.csv", &base.to_csv()?)?;
        summary.baseline = Some(base.means().into());
    }
    write_json(&common.out, "metrics_summary.json", &summary)
}

fn bench(common: &Common, sizes: Vec<usize>, ms: Vec<usize>, repeats: usize) -> Result<(), CliError> {
    let cfg = BenchConfig {
        sizes,
        ms,
        repeats,
        seed: common.seed,
        alpha: common.alpha(),
        cut: common.cut_params(),
        ..BenchConfig::default()
    };
    let report = run_bench(&cfg, &mut |r| {
        eprintln!("I_num={} m={} per-tree {:.3}s normalized {:.3}s", r.i_num, r.m, r.seconds, r.normalized_seconds)
    })?;
    write_text(&common.out, "bench.csv", &report.to_csv()?)?;
    write_json(&common.out, "bench.json", &report.meta)?;
    if let Some(slope) = report.meta.slope {
        eprintln!("log-log slope {slope:.3}");
    }
    Ok(())
}

fn layout(common: &Common, data: &Loaded, cuts: &CutsFile) -> Result<(), CliError> {
    let tree_cuts = cuts.tree_cuts(&data.trees)?;
    let mut groups = Vec::with_capacity(tree_cuts.len());
    for ((tree, cut), record) in data.trees.iter().zip(&tree_cuts).zip(&cuts.cuts) {
        groups.push(match &record.groups {
            Some(g) => groups_from_records(tree, g)?,
            None => cut.cut_nodes.iter().map(|id| groups_from_records(tree, &[single(id)])).collect::<Result<Vec<_>, _>>()?.concat(),
        });
    }
    let steps: Vec<LayoutStep<'_>> = data
        .trees
        .iter()
        .zip(&tree_cuts)
        .zip(&groups)
        .map(|((tree, cut), groups)| LayoutStep { tree, cut, groups })
        .collect();
    let scene = build_scene(&steps, &data.mappings, &data.store, &LayoutParams::default(), common.viewport, true)?;
    write_text(&common.out, "scene.json", &scene.to_json()?)?;
    write_text(&common.out, "scene.svg", &to_svg(&scene))
}

fn single(id: &str) -> topicflow::postprocess::GroupRecord {
    topicflow::postprocess::GroupRecord { members: vec![id.to_string()], carried_from: None }
}

fn session_config(common: &Common) -> SessionConfig {
    SessionConfig {
        seed: common.seed,
        alpha: common.alpha(),
        cut: common.cut_params(),
        post: common.post_params(),
        build: common.build_params(),
        viewport: common.viewport,
        ..SessionConfig::default()
    }
}

fn demo_corpus(common: &Common) -> Vec<RawDocument> {
    let p = DriftParams { window_secs: common.window_secs(), ..DriftParams::default() };
    drifting_corpus(&mut ChaCha8Rng::seed_from_u64(common.seed), &p)
}

fn serve(common: &Common, addr: std::net::SocketAddr, demo: bool) -> Result<(), CliError> {
    let state = Arc::new(AppState::default());
    if demo {
        let id = state.create(session_config(common))?;
        let entry = state.get(&id)?;
        for slice in slice_documents(demo_corpus(common), common.window_secs())? {
            let raw = slice.documents.into_iter().map(RawDocument::from).collect();
            entry.write(|s, sink| s.ingest_batch(raw, sink))?;
        }
        eprintln!("demo session {id} ready");
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io("tokio runtime".into(), e))?;
    eprintln!("listening on http://{addr}");
    runtime.block_on(topicflow_service::serve(addr, state)).map_err(|e| CliError::Io(addr.to_string(), e))
}

fn demo(common: &Common) -> Result<(), CliError> {
    let raw = demo_corpus(common);
    let mut jsonl = String::new();
    for d in &raw {
        jsonl.push_str(&serde_json::to_string(d).map_err(|e| CliError::Input(e.to_string()))?);
        jsonl.push('\n');
    }
    write_text(&common.out, "corpus.jsonl", &jsonl)?;
    let slices = slice_documents(raw, common.window_secs())?;
    ingest(common, &slices)?;
    let data = load(&common.out.join(files::TREES_FILE))?;
    cut(common, &data, "auto")?;
    let cuts: CutsFile = read_json(&common.out.join(files::CUTS_FILE))?;
    metrics(common, &data, &cuts, true)?;
    layout(common, &data, &cuts)
}

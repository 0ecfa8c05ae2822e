//! River scene geometry: region partition, bar and stripe placement,
//! edge routing around bars, and stripe packing.

mod order;
mod packing;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::map_node;
use crate::model::{DocumentStore, TopicTree, TreeCut, TreeMapping};
use crate::postprocess::DisplayGroup;

pub use order::{base_order, crossings, order_nodes, siblings_contiguous};
pub use packing::{initial_x, max_overlap, pack_stripe, PackItem, PackParams, Packing, Shape, StripeProfile, PACK_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub river_step_width: f64,
    pub stack_step_width: f64,
    pub archive_bar_width: f64,
    /// Steps older than this many recent steps fold into the archive bar.
    pub archive_threshold: usize,
    /// Bar height per document.
    pub bar_unit: f64,
    pub depth_offset: f64,
    pub vgap: f64,
    pub sweeps: usize,
    pub streaming_width: f64,
    pub bar_width: f64,
    #[serde(flatten)]
    pub pack: PackParams,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            river_step_width: 120.0,
            stack_step_width: 40.0,
            archive_bar_width: 24.0,
            archive_threshold: 8,
            bar_unit: 1.5,
            depth_offset: 6.0,
            vgap: 10.0,
            sweeps: 4,
            streaming_width: 160.0,
            bar_width: 6.0,
            pack: PackParams::default(),
        }
    }
}

impl LayoutParams {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("river_step_width", self.river_step_width),
            ("stack_step_width", self.stack_step_width),
            ("archive_bar_width", self.archive_bar_width),
            ("bar_unit", self.bar_unit),
            ("bar_width", self.bar_width),
            ("streaming_width", self.streaming_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::BadParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.stack_step_width < self.river_step_width) {
            return Err(Error::BadParams("stack_step_width must be below river_step_width".into()));
        }
        if !(self.vgap >= 0.0 && self.depth_offset >= self.bar_width) {
            return Err(Error::BadParams("vgap must be >= 0 and depth_offset >= bar_width".into()));
        }
        if self.archive_threshold == 0 {
            return Err(Error::BadParams("archive_threshold must be >= 1".into()));
        }
        self.pack.check()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: f64,
    pub height: f64,
}

impl FromStr for Viewport {
    type Err = Error;

    /// Parses `WIDTHxHEIGHT`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadParams(format!("viewport must look like 1600x900, got {s:?}"));
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let width: f64 = w.trim().parse().map_err(|_| bad())?;
        let height: f64 = h.trim().parse().map_err(|_| bad())?;
        if !(width > 0.0 && height > 0.0) {
            return Err(bad());
        }
        Ok(Self { width, height })
    }
}

impl Default for Viewport {
    fn default() -> Self {
        Self { width: 1600.0, height: 900.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Archive,
    Stack,
    River,
    Streaming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub x1: f64,
    pub steps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regions {
    pub archive: Region,
    pub stack: Region,
    pub river: Region,
    pub streaming: Region,
}

impl Regions {
    pub fn kind_of_step(&self, t: usize) -> Option<RegionKind> {
        [(RegionKind::Archive, &self.archive), (RegionKind::Stack, &self.stack), (RegionKind::River, &self.river)]
            .into_iter()
            .find(|(_, r)| r.steps.contains(&t))
            .map(|(k, _)| k)
    }
}

/// Splits the viewport width into archive, stack, river and streaming
/// extents for steps `0..=current_step`. The river holds as many recent
/// steps as fit and absorbs any leftover width.
pub fn partition_regions(
    num_steps: usize,
    current_step: usize,
    params: &LayoutParams,
    viewport_width: f64,
) -> Result<Regions> {
    if num_steps == 0 || current_step >= num_steps {
        return Err(Error::BadParams(format!("current step {current_step} outside 0..{num_steps}")));
    }
    let visible = current_step + 1;
    let recent = visible.min(params.archive_threshold);
    let archived = visible - recent;
    let archive_w = if archived > 0 { params.archive_bar_width } else { 0.0 };
    let avail = viewport_width - params.streaming_width - archive_w;
    let fits = |r: usize| r as f64 * params.river_step_width + (recent - r) as f64 * params.stack_step_width <= avail + 1e-9;
    let river_n = (1..=recent).rev().find(|&r| fits(r)).ok_or_else(|| {
        Error::ViewportTooSmall(format!(
            "width {viewport_width} cannot hold one river step plus {} stacked steps",
            recent - 1
        ))
    })?;
    let stack_n = recent - river_n;
    let stack_x1 = archive_w + stack_n as f64 * params.stack_step_width;
    let stream_x0 = viewport_width - params.streaming_width;
    Ok(Regions {
        archive: Region { x0: 0.0, x1: archive_w, steps: (0..archived).collect() },
        stack: Region { x0: archive_w, x1: stack_x1, steps: (archived..archived + stack_n).collect() },
        river: Region { x0: stack_x1, x1: stream_x0, steps: (archived + stack_n..visible).collect() },
        streaming: Region { x0: stream_x0, x1: viewport_width, steps: Vec::new() },
    })
}

/// One time step of the river: its tree, cut and display groups.
#[derive(Clone, Copy, Debug)]
pub struct LayoutStep<'a> {
    pub tree: &'a TopicTree,
    pub cut: &'a TreeCut,
    pub groups: &'a [DisplayGroup],
}

/// Document pairs between a cut node at `t` and a cut node at `t + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub from: String,
    pub to: String,
    pub from_docs: Vec<String>,
    pub to_docs: BTreeSet<String>,
}

fn membership<'t>(step: &LayoutStep<'t>) -> BTreeMap<&'t str, &'t str> {
    let mut out = BTreeMap::new();
    for id in &step.cut.cut_nodes {
        if let Some(node) = step.tree.get(id) {
            for d in &node.doc_ids {
                out.insert(d.as_str(), node.id.as_str());
            }
        }
    }
    out
}

/// Links between consecutive steps, sorted by `(from, to)`.
pub fn links_between(a: &LayoutStep<'_>, b: &LayoutStep<'_>, mapping: &TreeMapping) -> Vec<Link> {
    let (ma, mb) = (membership(a), membership(b));
    let mut acc: BTreeMap<(&str, &str), (Vec<String>, BTreeSet<String>)> = BTreeMap::new();
    for p in &mapping.doc_pairs {
        if let (Some(&x), Some(&y)) = (ma.get(p.from.as_str()), mb.get(p.to.as_str())) {
            let e = acc.entry((x, y)).or_default();
            e.0.push(p.from.clone());
            e.1.insert(p.to.clone());
        }
    }
    acc.into_iter()
        .map(|((f, t), (mut fd, td))| {
            fd.sort();
            fd.dedup();
            Link { from: f.to_string(), to: t.to_string(), from_docs: fd, to_docs: td }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub time_index: usize,
    pub node: String,
    pub group: String,
    pub region: RegionKind,
    pub depth: usize,
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    pub dark_top: f64,
    pub dark_height: f64,
    pub doc_count: usize,
}

impl Bar {
    /// Strict interior test.
    pub fn contains_interior(&self, x: f64, y: f64) -> bool {
        let e = 1e-9;
        x > self.x + e && x < self.x + self.width - e && y > self.y + e && y < self.y + self.height - e
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stripe {
    pub from_bar: usize,
    pub to_bar: usize,
    pub pairs: usize,
    pub left_width: f64,
    pub right_width: f64,
    /// Top of the stripe at the source and destination bar faces.
    pub left_top: f64,
    pub right_top: f64,
    /// Points the center line passes through. Consecutive points are joined
    /// by cubic curves with horizontal tangents.
    pub control_points: Vec<[f64; 2]>,
    /// SVG path data of the center line.
    pub path: String,
    /// Bars the center line was routed around.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub avoided: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveItem {
    /// Cut node of the newest step this item merges into, or `None` for
    /// documents that do not trace forward.
    pub node: Option<String>,
    pub docs: usize,
    pub y: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveBar {
    pub x: f64,
    pub width: f64,
    pub steps: Vec<usize>,
    pub items: Vec<ArchiveItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutScene {
    pub viewport: Viewport,
    pub regions: Regions,
    pub orders: Vec<Vec<String>>,
    pub bars: Vec<Bar>,
    pub stripes: Vec<Stripe>,
    pub archive: Option<ArchiveBar>,
    /// Packings keyed by stripe index.
    pub packings: BTreeMap<usize, Packing>,
}

/// Vertical band of a display group at the newest step, and the x of the
/// bar face incoming tokens settle against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicBand {
    pub group: String,
    pub y0: f64,
    pub y1: f64,
    pub face_x: f64,
}

impl LayoutScene {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn bar_index(&self, t: usize, node: &str) -> Option<usize> {
        self.bars.iter().position(|b| b.time_index == t && b.node == node)
    }

    /// Bands of the newest step, top to bottom. Each band spans from the
    /// midpoint of the gap above its first bar to the midpoint of the gap
    /// below its last one, so bands tile without overlapping.
    pub fn bands(&self) -> Vec<TopicBand> {
        let Some(newest) = self.bars.iter().map(|b| b.time_index).max() else {
            return Vec::new();
        };
        let mut bars: Vec<&Bar> = self.bars.iter().filter(|b| b.time_index == newest).collect();
        bars.sort_by(|a, b| a.y.total_cmp(&b.y));
        let mut bands: Vec<TopicBand> = Vec::new();
        for b in bars {
            match bands.last_mut() {
                Some(last) if last.group == b.group => {
                    last.y1 = b.y + b.height;
                    last.face_x = last.face_x.max(b.x + b.width);
                }
                _ => bands.push(TopicBand { group: b.group.clone(), y0: b.y, y1: b.y + b.height, face_x: b.x + b.width }),
            }
        }
        let h = self.viewport.height;
        let n = bands.len();
        let cuts: Vec<f64> = (1..n).map(|i| (bands[i - 1].y1 + bands[i].y0) / 2.0).collect();
        for (i, band) in bands.iter_mut().enumerate() {
            band.y0 = if i == 0 { 0.0 } else { cuts[i - 1] };
            band.y1 = if i + 1 == n { h } else { cuts[i] };
        }
        bands
    }
}

fn stack_vertically(heights: &[f64], gap: f64, viewport_h: f64, what: &str) -> Result<Vec<f64>> {
    let total: f64 = heights.iter().sum::<f64>() + gap * heights.len().saturating_sub(1) as f64;
    if total > viewport_h + 1e-9 {
        return Err(Error::ViewportTooSmall(format!("{what} need height {total:.1} > {viewport_h}")));
    }
    let mut y = (viewport_h - total) / 2.0;
    Ok(heights
        .iter()
        .map(|h| {
            let top = y;
            y += h + gap;
            top
        })
        .collect())
}

/// Places bars, stripes and the archive bar. `orders[t]` lists the cut
/// nodes of step `t` top to bottom; `links[t]` joins steps `t` and `t + 1`.
pub fn compute_geometry(
    steps: &[LayoutStep<'_>],
    orders: &[Vec<String>],
    links: &[Vec<Link>],
    mappings: &[TreeMapping],
    params: &LayoutParams,
    viewport: Viewport,
) -> Result<LayoutScene> {
    params.check()?;
    let n = steps.len();
    if n == 0 || orders.len() != n || links.len() + 1 != n || mappings.len() + 1 < n {
        return Err(Error::BadParams(format!(
            "{n} steps need as many orders and {} links and mappings",
            n.saturating_sub(1)
        )));
    }
    let regions = partition_regions(n, n - 1, params, viewport.width)?;
    let newest = n - 1;

    let anchor = |t: usize| -> Option<f64> {
        if regions.river.steps.contains(&t) {
            Some(regions.river.x1 - (newest + 1 - t) as f64 * params.river_step_width)
        } else if regions.stack.steps.contains(&t) {
            Some(regions.stack.x0 + (t - regions.stack.steps[0]) as f64 * params.stack_step_width)
        } else {
            None
        }
    };

    // Documents mapped in from the previous step and out to the next.
    let mapped_in: Vec<BTreeSet<&str>> = (0..n)
        .map(|t| if t == 0 { BTreeSet::new() } else { mappings[t - 1].doc_pairs.iter().map(|p| p.to.as_str()).collect() })
        .collect();
    let mapped_out: Vec<BTreeSet<&str>> = (0..n)
        .map(|t| if t + 1 == n { BTreeSet::new() } else { mappings[t].doc_pairs.iter().map(|p| p.from.as_str()).collect() })
        .collect();

    let mut bars = Vec::new();
    let mut bar_at: BTreeMap<(usize, String), usize> = BTreeMap::new();
    for (t, step) in steps.iter().enumerate() {
        let Some(x0) = anchor(t) else { continue };
        let region = regions.kind_of_step(t).expect("anchored steps have a region");
        let group_of: BTreeMap<&str, &str> = step
            .groups
            .iter()
            .flat_map(|g| g.member_cut_nodes.iter().map(move |m| (m.as_str(), g.id.as_str())))
            .collect();
        let nodes: Vec<_> = orders[t].iter().map(|id| step.tree.get(id).ok_or_else(|| Error::UnknownNode(id.clone()))).collect::<Result<_>>()?;
        let heights: Vec<f64> = nodes.iter().map(|nd| params.bar_unit * nd.doc_ids.len() as f64).collect();
        if heights.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Domain(format!("step {t} has a cut node without documents")));
        }
        let ys = stack_vertically(&heights, params.vgap, viewport.height, &format!("bars of step {t}"))?;
        for ((nd, h), y) in nodes.iter().zip(heights).zip(ys) {
            let dark = nd.doc_ids.iter().filter(|d| mapped_in[t].contains(d.as_str()) && mapped_out[t].contains(d.as_str())).count();
            let dark_height = params.bar_unit * dark as f64;
            bar_at.insert((t, nd.id.clone()), bars.len());
            bars.push(Bar {
                time_index: t,
                node: nd.id.clone(),
                group: group_of.get(nd.id.as_str()).copied().unwrap_or(&nd.id).to_string(),
                region,
                depth: nd.depth,
                x: x0 + nd.depth as f64 * params.depth_offset,
                y,
                width: params.bar_width,
                height: h,
                dark_top: y + (h - dark_height) / 2.0,
                dark_height,
                doc_count: nd.doc_ids.len(),
            });
        }
    }

    let mut stripes = Vec::new();
    for t in 0..n - 1 {
        if anchor(t).is_none() {
            continue;
        }
        let mut kept: Vec<&Link> = links[t].iter().collect();
        if regions.stack.steps.contains(&t) {
            // Mainstream only: the largest outgoing link per source bar.
            let mut best: BTreeMap<&str, &Link> = BTreeMap::new();
            for l in &links[t] {
                let e = best.entry(l.from.as_str()).or_insert(l);
                if l.from_docs.len() > e.from_docs.len() {
                    *e = l;
                }
            }
            kept = best.into_values().collect();
        }
        let mut local: Vec<(usize, usize, &Link)> = kept
            .into_iter()
            .filter_map(|l| Some((*bar_at.get(&(t, l.from.clone()))?, *bar_at.get(&(t + 1, l.to.clone()))?, l)))
            .collect();
        local.sort_by_key(|&(a, b, _)| (a, b));

        // Right widths shrink proportionally if a bar receives more than its height.
        let mut incoming: BTreeMap<usize, f64> = BTreeMap::new();
        for &(_, b, l) in &local {
            *incoming.entry(b).or_default() += params.bar_unit * l.to_docs.len() as f64;
        }
        let scale = |b: usize| {
            let s = incoming[&b];
            if s > bars[b].height { bars[b].height / s } else { 1.0 }
        };

        // Stripe anchors follow the order of the bars at the other end.
        let mut left_off: BTreeMap<usize, f64> = BTreeMap::new();
        let mut by_dst = local.clone();
        by_dst.sort_by(|x, y| bars[x.1].y.total_cmp(&bars[y.1].y).then(x.0.cmp(&y.0)));
        let mut tops_left = BTreeMap::new();
        for &(a, b, l) in &by_dst {
            let off = left_off.entry(a).or_insert(0.0);
            tops_left.insert((a, b), bars[a].y + *off);
            *off += params.bar_unit * l.from_docs.len() as f64;
        }
        let mut right_off: BTreeMap<usize, f64> = BTreeMap::new();
        let mut by_src = local.clone();
        by_src.sort_by(|x, y| bars[x.0].y.total_cmp(&bars[y.0].y).then(x.1.cmp(&y.1)));
        let mut tops_right = BTreeMap::new();
        for &(a, b, l) in &by_src {
            let off = right_off.entry(b).or_insert(0.0);
            tops_right.insert((a, b), bars[b].y + *off);
            *off += params.bar_unit * l.to_docs.len() as f64 * scale(b);
        }

        for &(a, b, l) in &local {
            let lw = params.bar_unit * l.from_docs.len() as f64;
            let rw = params.bar_unit * l.to_docs.len() as f64 * scale(b);
            let (lt, rt) = (tops_left[&(a, b)], tops_right[&(a, b)]);
            let p0 = [bars[a].x + bars[a].width, lt + lw / 2.0];
            let p1 = [bars[b].x, rt + rw / 2.0];
            stripes.push(Stripe {
                from_bar: a,
                to_bar: b,
                pairs: l.from_docs.len(),
                left_width: lw,
                right_width: rw,
                left_top: lt,
                right_top: rt,
                control_points: vec![p0, p1],
                path: svg_path(&[p0, p1]),
                avoided: Vec::new(),
            });
        }
    }

    let archive = archive_bar(steps, orders, mappings, &regions, params, viewport)?;
    Ok(LayoutScene { viewport, regions, orders: orders.to_vec(), bars, stripes, archive, packings: BTreeMap::new() })
}

/// Cut node of `step` that covers tree node `id`: itself, its cut
/// ancestor, or the first cut node of its subtree in `order`.
fn covering_cut_node(step: &LayoutStep<'_>, order: &[String], id: &str) -> Option<String> {
    let tree = step.tree;
    let v = tree.index_of(id)?;
    if step.cut.contains(id) {
        return Some(id.to_string());
    }
    if let Some(a) = tree.ancestors(v).find(|&a| step.cut.contains(&tree.node(a).id)) {
        return Some(tree.node(a).id.clone());
    }
    order.iter().find(|c| tree.index_of(c).is_some_and(|ci| tree.is_ancestor(v, ci))).cloned()
}

fn archive_bar(
    steps: &[LayoutStep<'_>],
    orders: &[Vec<String>],
    mappings: &[TreeMapping],
    regions: &Regions,
    params: &LayoutParams,
    viewport: Viewport,
) -> Result<Option<ArchiveBar>> {
    if regions.archive.steps.is_empty() {
        return Ok(None);
    }
    let newest = steps.len() - 1;
    let mut docs: BTreeMap<Option<String>, usize> = BTreeMap::new();
    for &t in &regions.archive.steps {
        let chain: Vec<&TreeMapping> = mappings[t..newest].iter().collect();
        for id in &steps[t].cut.cut_nodes {
            let count = steps[t].tree.get(id).map_or(0, |nd| nd.doc_ids.len());
            let target = map_node(id, &chain, true).and_then(|m| covering_cut_node(&steps[newest], &orders[newest], &m));
            *docs.entry(target).or_default() += count;
        }
    }
    let k = regions.archive.steps.len() as f64;
    let mut items: Vec<ArchiveItem> = orders[newest]
        .iter()
        .filter_map(|id| docs.get(&Some(id.clone())).map(|&c| (Some(id.clone()), c)))
        .chain(docs.get(&None).map(|&c| (None, c)))
        .filter(|&(_, c)| c > 0)
        .map(|(node, c)| ArchiveItem { node, docs: c, y: 0.0, height: params.bar_unit * c as f64 / k })
        .collect();
    let heights: Vec<f64> = items.iter().map(|i| i.height).collect();
    let ys = stack_vertically(&heights, 0.0, viewport.height, "archive items")?;
    for (it, y) in items.iter_mut().zip(ys) {
        it.y = y;
    }
    Ok(Some(ArchiveBar {
        x: regions.archive.x0,
        width: params.archive_bar_width,
        steps: regions.archive.steps.clone(),
        items,
    }))
}

/// Cubic segment from `a` to `b` with horizontal end tangents.
fn segment_controls(a: [f64; 2], b: [f64; 2]) -> [[f64; 2]; 4] {
    let mx = (a[0] + b[0]) / 2.0;
    [a, [mx, a[1]], [mx, b[1]], b]
}

fn cubic(c: &[[f64; 2]; 4], t: f64) -> [f64; 2] {
    let u = 1.0 - t;
    let (w0, w1, w2, w3) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
    [
        w0 * c[0][0] + w1 * c[1][0] + w2 * c[2][0] + w3 * c[3][0],
        w0 * c[0][1] + w1 * c[1][1] + w2 * c[2][1] + w3 * c[3][1],
    ]
}

/// Samples the curve through `points`.
pub fn sample_path(points: &[[f64; 2]], per_segment: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let c = segment_controls(w[0], w[1]);
        for i in 0..=per_segment {
            out.push(cubic(&c, i as f64 / per_segment as f64));
        }
    }
    out
}

fn svg_path(points: &[[f64; 2]]) -> String {
    let mut d = format!("M{:.3} {:.3}", points[0][0], points[0][1]);
    for w in points.windows(2) {
        let c = segment_controls(w[0], w[1]);
        let _ = write!(d, " C{:.3} {:.3} {:.3} {:.3} {:.3} {:.3}", c[1][0], c[1][1], c[2][0], c[2][1], c[3][0], c[3][1]);
    }
    d
}

const ROUTE_SAMPLES: usize = 64;

fn segment_hits(a: [f64; 2], b: [f64; 2], bar: &Bar) -> bool {
    let (lo_y, hi_y) = (a[1].min(b[1]), a[1].max(b[1]));
    if b[0] <= bar.x || a[0] >= bar.x + bar.width || hi_y <= bar.y || lo_y >= bar.y + bar.height {
        return false;
    }
    let c = segment_controls(a, b);
    (0..=ROUTE_SAMPLES).any(|i| {
        let p = cubic(&c, i as f64 / ROUTE_SAMPLES as f64);
        bar.contains_interior(p[0], p[1])
    })
}

/// Inserts two points around every bar a stripe's center line would pass
/// through: at the bar's left and right edges, half a gap above or below it.
pub fn route_edges(scene: &mut LayoutScene, vgap: f64) {
    let bars = &scene.bars;
    for stripe in &mut scene.stripes {
        let mut pts = stripe.control_points.clone();
        let mut avoided: Vec<usize> = Vec::new();
        loop {
            let mut hit: Option<(usize, usize)> = None;
            'seg: for i in 0..pts.len() - 1 {
                let (a, b) = (pts[i], pts[i + 1]);
                let mut cands: Vec<usize> = (0..bars.len())
                    .filter(|&k| k != stripe.from_bar && k != stripe.to_bar && !avoided.contains(&k))
                    .filter(|&k| bars[k].x >= a[0] - 1e-9 && bars[k].x + bars[k].width <= b[0] + 1e-9)
                    .filter(|&k| segment_hits(a, b, &bars[k]))
                    .collect();
                cands.sort_by(|&p, &q| bars[p].x.total_cmp(&bars[q].x).then(bars[p].y.total_cmp(&bars[q].y)));
                if let Some(&k) = cands.first() {
                    hit = Some((i, k));
                    break 'seg;
                }
            }
            let Some((i, k)) = hit else { break };
            let bar = &bars[k];
            let (a, b) = (pts[i], pts[i + 1]);
            let cx = bar.x + bar.width / 2.0;
            let frac = if b[0] > a[0] { (cx - a[0]) / (b[0] - a[0]) } else { 0.5 };
            let y_line = a[1] + frac * (b[1] - a[1]);
            let above = bar.y - vgap / 2.0;
            let below = bar.y + bar.height + vgap / 2.0;
            let yd = if (y_line - above).abs() <= (below - y_line).abs() { above } else { below };
            pts.insert(i + 1, [bar.x + bar.width, yd]);
            pts.insert(i + 1, [bar.x, yd]);
            avoided.push(k);
        }
        stripe.path = svg_path(&pts);
        stripe.control_points = pts;
        avoided.sort_unstable();
        stripe.avoided = avoided;
    }
}

/// Documents of a stripe's source bar that map into its destination bar,
/// in arrival order.
fn stripe_docs<'s>(link: &Link, store: &'s DocumentStore) -> Result<Vec<&'s crate::model::Document>> {
    let mut docs: Vec<&crate::model::Document> = link.from_docs.iter().map(|d| store.require(d)).collect::<Result<_>>()?;
    docs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.id.cmp(&b.id)));
    Ok(docs)
}

/// Packs the documents of the given stripes.
pub fn pack_stripes(
    scene: &mut LayoutScene,
    links: &[Vec<Link>],
    store: &DocumentStore,
    which: &[usize],
    params: &LayoutParams,
) -> Result<()> {
    for &s in which {
        let stripe = scene.stripes.get(s).ok_or_else(|| Error::BadParams(format!("no stripe {s}")))?;
        let (a, b) = (&scene.bars[stripe.from_bar], &scene.bars[stripe.to_bar]);
        let link = links[a.time_index]
            .iter()
            .find(|l| l.from == a.node && l.to == b.node)
            .ok_or_else(|| Error::Domain(format!("stripe {s} has no link")))?;
        let length = (b.x - (a.x + a.width)).max(1e-6);
        let profile = StripeProfile::tapered(length, stripe.left_width, stripe.right_width, params.pack.segments);
        let packing = pack_stripe(&profile, &stripe_docs(link, store)?, &params.pack)?;
        scene.packings.insert(s, packing);
    }
    Ok(())
}

/// Orders, places and routes a scene; packs every river stripe when
/// `pack_river` is set.
pub fn build_scene(
    steps: &[LayoutStep<'_>],
    mappings: &[TreeMapping],
    store: &DocumentStore,
    params: &LayoutParams,
    viewport: Viewport,
    pack_river: bool,
) -> Result<LayoutScene> {
    params.check()?;
    if steps.is_empty() {
        return Err(Error::BadParams("layout needs at least one step".into()));
    }
    if mappings.len() + 1 < steps.len() {
        return Err(Error::BadParams(format!("{} steps need {} mappings", steps.len(), steps.len() - 1)));
    }
    let links: Vec<Vec<Link>> = (0..steps.len() - 1).map(|t| links_between(&steps[t], &steps[t + 1], &mappings[t])).collect();
    let orders = order_nodes(steps, &links, params.sweeps);
    let mut scene = compute_geometry(steps, &orders, &links, mappings, params, viewport)?;
    route_edges(&mut scene, params.vgap);
    if pack_river {
        let river: Vec<usize> = (0..scene.stripes.len())
            .filter(|&s| scene.bars[scene.stripes[s].from_bar].region == RegionKind::River)
            .collect();
        pack_stripes(&mut scene, &links, store, &river, params)?;
    }
    Ok(scene)
}

/// Minimal SVG rendering of a scene.
pub fn to_svg(scene: &LayoutScene) -> String {
    let (w, h) = (scene.viewport.width, scene.viewport.height);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
    for (name, r) in [
        ("archive", &scene.regions.archive),
        ("stack", &scene.regions.stack),
        ("river", &scene.regions.river),
        ("streaming", &scene.regions.streaming),
    ] {
        let _ = writeln!(
            s,
            "  <rect class=\"region {name}\" x=\"{:.2}\" y=\"0\" width=\"{:.2}\" height=\"{h}\" fill=\"none\" stroke=\"#ccc\"/>",
            r.x0,
            r.x1 - r.x0
        );
    }
    for st in &scene.stripes {
        let width = (st.left_width + st.right_width) / 2.0;
        let _ = writeln!(
            s,
            "  <path class=\"stripe\" d=\"{}\" fill=\"none\" stroke=\"#7aa6c2\" stroke-opacity=\"0.6\" stroke-width=\"{:.2}\"/>",
            st.path, width
        );
    }
    for b in &scene.bars {
        let _ = writeln!(
            s,
            "  <rect class=\"bar\" data-node=\"{}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#4a6d8c\"/>",
            b.node, b.x, b.y, b.width, b.height
        );
        if b.dark_height > 0.0 {
            let _ = writeln!(
                s,
                "  <rect class=\"dark\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#1d2f3f\"/>",
                b.x, b.dark_top, b.width, b.dark_height
            );
        }
    }
    if let Some(a) = &scene.archive {
        for it in &a.items {
            let _ = writeln!(
                s,
                "  <rect class=\"archive-item\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#9bb0c1\" stroke=\"#fff\"/>",
                a.x, it.y, a.width, it.height
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

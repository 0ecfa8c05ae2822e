//! Sedimentation of incoming documents: tokens enter from the right,
//! fall toward their topic bar under gravity and attraction to settled
//! tokens, settle on contact, decay and resolve into stripe growth.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::spherical_kmeans;
use crate::error::{Error, Result};
use crate::layout::TopicBand;
use crate::model::Document;
use crate::vecmath::{dense_unit, dot, unit_mean};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SedimentParams {
    /// Constant leftward acceleration.
    pub g: f64,
    pub dt: f64,
    /// Fraction of radius lost per tick once settled.
    pub decay: f64,
    /// Fraction of radius lost per tick while moving.
    pub suspend_shrink: f64,
    /// Settled tokens below this radius resolve.
    pub r_min: f64,
    /// Target documents per token.
    pub cluster_size: usize,
    /// Floor on the attraction distance.
    pub eps: f64,
    /// Token radius per square root of its document count.
    pub radius_scale: f64,
    pub kmeans_iters: usize,
}

impl Default for SedimentParams {
    fn default() -> Self {
        Self {
            g: 0.2,
            dt: 1.0,
            decay: 0.02,
            suspend_shrink: 0.002,
            r_min: 0.5,
            cluster_size: 20,
            eps: 0.1,
            radius_scale: 1.0,
            kmeans_iters: 50,
        }
    }
}

impl SedimentParams {
    pub fn check(&self) -> Result<()> {
        if !(self.g > 0.0 && self.dt > 0.0 && self.r_min > 0.0 && self.eps > 0.0 && self.radius_scale > 0.0) {
            return Err(Error::BadParams("g, dt, r_min, eps and radius_scale must be > 0".into()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) || !(0.0..1.0).contains(&self.suspend_shrink) {
            return Err(Error::BadParams("decay must lie in (0, 1) and suspend_shrink in [0, 1)".into()));
        }
        if self.cluster_size == 0 {
            return Err(Error::BadParams("cluster_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenState {
    Entering,
    Suspended,
    Settled,
    Resolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub id: u64,
    pub doc_ids: Vec<String>,
    pub n: usize,
    pub x: f64,
    pub y: f64,
    /// Leftward speed.
    pub speed: f64,
    pub radius: f64,
    pub topic: String,
    pub state: TokenState,
    pub vector: Vec<f64>,
}

impl Token {
    fn moving(&self) -> bool {
        matches!(self.state, TokenState::Entering | TokenState::Suspended)
    }
}

/// Topic centroid used to color tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicCentroid {
    pub group: String,
    pub center: Vec<f64>,
}

/// Token topic: highest cosine to a group centroid, ties to the smaller id.
pub fn nearest_topic(v: &[f64], topics: &[TopicCentroid]) -> Option<String> {
    let mut best: Option<(f64, &str)> = None;
    for t in topics {
        let s = dot(v, &t.center);
        let better = match best {
            None => true,
            Some((bs, bid)) => s > bs || (s == bs && t.group.as_str() < bid),
        };
        if better {
            best = Some((s, t.group.as_str()));
        }
    }
    best.map(|(_, g)| g.to_string())
}

/// Groups a batch into `ceil(|docs| / cluster_size)` tokens by seeded
/// k-means. Ids, positions and speeds are assigned on entry.
pub fn cluster_batch(docs: &[&Document], dim: usize, topics: &[TopicCentroid], params: &SedimentParams, seed: u64) -> Result<Vec<Token>> {
    params.check()?;
    if docs.is_empty() {
        return Err(Error::Domain("cannot cluster an empty batch".into()));
    }
    if topics.is_empty() {
        return Err(Error::Domain("no topics to assign tokens to".into()));
    }
    let points: Vec<Vec<f64>> = docs.iter().map(|d| dense_unit(&d.vector, dim)).collect();
    let k = docs.len().div_ceil(params.cluster_size);
    let clustering = spherical_kmeans(&points, k, seed, params.kmeans_iters);
    let mut tokens = Vec::new();
    for members in clustering.members() {
        if members.is_empty() {
            continue;
        }
        let vector = unit_mean(members.iter().map(|&i| points[i].as_slice()), dim);
        let topic = nearest_topic(&vector, topics).expect("topics is nonempty");
        let mut doc_ids: Vec<String> = members.iter().map(|&i| docs[i].id.clone()).collect();
        doc_ids.sort();
        let n = doc_ids.len();
        tokens.push(Token {
            id: 0,
            doc_ids,
            n,
            x: 0.0,
            y: 0.0,
            speed: 0.0,
            radius: params.radius_scale * (n as f64).sqrt(),
            topic,
            state: TokenState::Entering,
            vector,
        });
    }
    Ok(tokens)
}

/// Leftward acceleration of a moving token: gravity plus attraction to
/// each settled token, with distances floored at `eps`.
pub fn acceleration<'a, I>(token: &Token, settled: I, params: &SedimentParams) -> f64
where
    I: IntoIterator<Item = &'a Token>,
{
    let mut a = params.g;
    for s in settled {
        let d = (s.x - token.x).hypot(s.y - token.y).max(params.eps);
        a += dot(&s.vector, &token.vector) * s.n as f64 / (d * d);
    }
    a
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripeDelta {
    pub group: String,
    pub added_docs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenView {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub topic: String,
    pub state: TokenState,
    pub n: usize,
}

/// Payload of one `tick` event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickSnapshot {
    pub tick: u64,
    pub tokens: Vec<TokenView>,
    pub stripe_deltas: Vec<StripeDelta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SedimentState {
    pub tick: u64,
    pub tokens: Vec<Token>,
    pub bands: Vec<TopicBand>,
    /// Right edge of the streaming region, where tokens enter.
    pub entry_x: f64,
    pub entered: usize,
    pub resolved: usize,
    /// Resolved documents per group not yet absorbed into a layout.
    pub pending: BTreeMap<String, usize>,
    next_id: u64,
    deltas: Vec<StripeDelta>,
}

impl SedimentState {
    pub fn new(bands: Vec<TopicBand>, entry_x: f64) -> Self {
        Self {
            tick: 0,
            tokens: Vec::new(),
            bands,
            entry_x,
            entered: 0,
            resolved: 0,
            pending: BTreeMap::new(),
            next_id: 0,
            deltas: Vec::new(),
        }
    }

    pub fn alive(&self) -> usize {
        self.tokens.iter().map(|t| t.n).sum()
    }

    pub fn is_idle(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn band(&self, group: &str) -> Option<&TopicBand> {
        self.bands.iter().find(|b| b.group == group)
    }

    /// Vertical range a token center may occupy in its band.
    fn y_range(band: &TopicBand, r: f64) -> (f64, f64) {
        if band.y1 - band.y0 >= 2.0 * r {
            (band.y0 + r, band.y1 - r)
        } else {
            let mid = (band.y0 + band.y1) / 2.0;
            (mid, mid)
        }
    }

    /// Adds tokens at the entry edge, spread over their bands. Tokens whose
    /// topic has no band resolve at once.
    pub fn enter(&mut self, tokens: Vec<Token>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ self.tick.rotate_left(32));
        let mut queued: BTreeMap<String, f64> = BTreeMap::new();
        for mut t in tokens {
            t.id = self.next_id;
            self.next_id += 1;
            self.entered += t.n;
            let Some(band) = self.band(&t.topic).cloned() else {
                self.resolve(t);
                continue;
            };
            let (lo, hi) = Self::y_range(&band, t.radius);
            t.y = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let offset = queued.entry(t.topic.clone()).or_insert(0.0);
            t.x = self.entry_x + t.radius + *offset;
            *offset += 2.0 * t.radius;
            t.speed = 0.0;
            t.state = TokenState::Entering;
            self.tokens.push(t);
        }
    }

    fn resolve(&mut self, t: Token) {
        self.resolved += t.n;
        *self.pending.entry(t.topic.clone()).or_default() += t.n;
        match self.deltas.iter_mut().find(|d| d.group == t.topic) {
            Some(d) => d.added_docs += t.n,
            None => self.deltas.push(StripeDelta { group: t.topic, added_docs: t.n }),
        }
    }

    /// Replaces the bands; tokens whose topic disappeared resolve.
    pub fn set_bands(&mut self, bands: Vec<TopicBand>, entry_x: f64) {
        self.bands = bands;
        self.entry_x = entry_x;
        let tokens = std::mem::take(&mut self.tokens);
        for mut t in tokens {
            match self.band(&t.topic).cloned() {
                Some(b) => {
                    let (lo, hi) = Self::y_range(&b, t.radius);
                    t.y = t.y.clamp(lo, hi);
                    self.tokens.push(t);
                }
                None => self.resolve(t),
            }
        }
    }

    /// Moves every entering or suspended token one tick.
    pub fn step(&mut self, params: &SedimentParams) {
        let settled: Vec<Token> = self.tokens.iter().filter(|t| t.state == TokenState::Settled).cloned().collect();
        let bands = self.bands.clone();
        for t in self.tokens.iter_mut().filter(|t| t.moving()) {
            let a = acceleration(t, &settled, params);
            t.speed += a * params.dt;
            t.x -= t.speed * params.dt;
            if t.state == TokenState::Suspended {
                t.radius = (t.radius * (1.0 - params.suspend_shrink)).max(params.r_min);
            }
            if t.state == TokenState::Entering && t.x + t.radius <= self.entry_x {
                t.state = TokenState::Suspended;
            }
            if let Some(b) = bands.iter().find(|b| b.group == t.topic) {
                let (lo, hi) = Self::y_range(b, t.radius);
                t.y = t.y.clamp(lo, hi);
            }
        }
    }

    /// Settles tokens that touch their bar face or a settled token, decays
    /// tokens settled earlier and resolves those below `r_min`.
    pub fn settle_and_aggrade(&mut self, params: &SedimentParams) {
        let was_settled: Vec<bool> = self.tokens.iter().map(|t| t.state == TokenState::Settled).collect();
        for i in 0..self.tokens.len() {
            if !self.tokens[i].moving() {
                continue;
            }
            let face = self.band(&self.tokens[i].topic).map(|b| b.face_x);
            let t = &self.tokens[i];
            let on_face = face.is_some_and(|f| t.x - t.radius <= f);
            let on_token = self.tokens.iter().enumerate().any(|(j, s)| {
                j != i && s.state == TokenState::Settled && (s.x - t.x).hypot(s.y - t.y) <= s.radius + t.radius
            });
            if on_face || on_token {
                let t = &mut self.tokens[i];
                if let Some(f) = face.filter(|_| on_face) {
                    t.x = f + t.radius;
                }
                t.state = TokenState::Settled;
                t.speed = 0.0;
            }
        }
        let mut keep = Vec::with_capacity(self.tokens.len());
        for (t, was) in std::mem::take(&mut self.tokens).into_iter().zip(was_settled) {
            let mut t = t;
            if was {
                t.radius *= 1.0 - params.decay;
                if t.radius < params.r_min {
                    t.state = TokenState::Resolved;
                    self.resolve(t);
                    continue;
                }
            }
            keep.push(t);
        }
        self.tokens = keep;
    }

    /// One full tick; returns its snapshot.
    pub fn tick(&mut self, params: &SedimentParams) -> TickSnapshot {
        self.deltas.clear();
        self.step(params);
        self.settle_and_aggrade(params);
        self.tick += 1;
        self.snapshot()
    }

    /// Snapshot of the current tick including the deltas since the last tick.
    pub fn snapshot(&self) -> TickSnapshot {
        TickSnapshot {
            tick: self.tick,
            tokens: self
                .tokens
                .iter()
                .map(|t| TokenView { id: t.id, x: t.x, y: t.y, radius: t.radius, topic: t.topic.clone(), state: t.state, n: t.n })
                .collect(),
            stripe_deltas: self.deltas.clone(),
        }
    }

    /// Clears and returns resolved counts per group.
    pub fn take_pending(&mut self) -> BTreeMap<String, usize> {
        std::mem::take(&mut self.pending)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Source, TermCounts};

    fn doc(id: &str, term: u32) -> Document {
        Document {
            id: id.into(),
            timestamp: 0,
            source: Source::News,
            title: String::new(),
            text: String::new(),
            vector: TermCounts::from_pairs([(term, 1)]),
        }
    }

    fn topics() -> Vec<TopicCentroid> {
        vec![
            TopicCentroid { group: "g0".into(), center: vec![1.0, 0.0, 0.0, 0.0] },
            TopicCentroid { group: "g1".into(), center: vec![0.0, 1.0, 0.0, 0.0] },
        ]
    }

    fn bands() -> Vec<TopicBand> {
        vec![
            TopicBand { group: "g0".into(), y0: 0.0, y1: 50.0, face_x: 100.0 },
            TopicBand { group: "g1".into(), y0: 50.0, y1: 100.0, face_x: 100.0 },
        ]
    }

    fn token(n: usize, x: f64, y: f64, v: Vec<f64>, state: TokenState) -> Token {
        Token { id: 0, doc_ids: Vec::new(), n, x, y, speed: 0.0, radius: 1.0, topic: "g0".into(), state, vector: v }
    }

    #[test]
    fn one_token_holds_the_batch() {
        let docs: Vec<Document> = (0..7).map(|i| doc(&format!("d{i}"), 0)).collect();
        let refs: Vec<&Document> = docs.iter().collect();
        let t = cluster_batch(&refs, 4, &topics(), &SedimentParams::default(), 1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].n, 7);
        assert_eq!(t[0].topic, "g0");
    }

    #[test]
    fn orthogonal_groups_make_pure_tokens() {
        let docs: Vec<Document> = (0..6).map(|i| doc(&format!("d{i}"), if i < 3 { 0 } else { 1 })).collect();
        let refs: Vec<&Document> = docs.iter().collect();
        let p = SedimentParams { cluster_size: 3, ..Default::default() };
        let mut t = cluster_batch(&refs, 4, &topics(), &p, 3).unwrap();
        t.sort_by(|a, b| a.topic.cmp(&b.topic));
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].doc_ids, vec!["d0", "d1", "d2"]);
        assert_eq!(t[1].doc_ids, vec!["d3", "d4", "d5"]);
        assert_eq!((t[0].topic.as_str(), t[1].topic.as_str()), ("g0", "g1"));
    }

    #[test]
    fn topic_ties_go_to_smaller_id() {
        let topics = vec![
            TopicCentroid { group: "b".into(), center: vec![1.0, 0.0] },
            TopicCentroid { group: "a".into(), center: vec![0.0, 1.0] },
        ];
        let h = 0.5f64.sqrt();
        assert_eq!(nearest_topic(&[h, h], &topics).as_deref(), Some("a"));
    }

    #[test]
    fn acceleration_cases() {
        let p = SedimentParams::default();
        let h = 0.5f64.sqrt();
        let moving = token(1, 2.0, 0.0, vec![1.0, 0.0], TokenState::Suspended);
        assert_eq!(acceleration(&moving, &[], &p), 0.2);
        // Cosine 0.5 between the two unit vectors.
        let settled = token(4, 0.0, 0.0, vec![0.5, 3f64.sqrt() / 2.0], TokenState::Settled);
        assert!((acceleration(&moving, [&settled], &p) - 0.7).abs() < 1e-12);
        let close = token(4, 2.05, 0.0, vec![h, h], TokenState::Settled);
        assert!((acceleration(&moving, [&close], &p) - (0.2 + h * 4.0 / 0.01)).abs() < 1e-9);
    }

    #[test]
    fn contact_and_decay() {
        let p = SedimentParams::default();
        let mut s = SedimentState::new(bands(), 160.0);
        let mut t = token(3, 100.5, 10.0, vec![1.0, 0.0, 0.0, 0.0], TokenState::Suspended);
        t.radius = 1.0;
        s.tokens.push(t);
        s.entered = 3;
        s.settle_and_aggrade(&p);
        assert_eq!(s.tokens[0].state, TokenState::Settled);
        assert_eq!(s.tokens[0].radius, 1.0);
        s.settle_and_aggrade(&p);
        assert!((s.tokens[0].radius - 0.98).abs() < 1e-15);
    }

    #[test]
    fn resolution_feeds_pending_stripes() {
        let p = SedimentParams::default();
        let mut s = SedimentState::new(bands(), 160.0);
        let docs: Vec<Document> = (0..30).map(|i| doc(&format!("d{i:02}"), (i % 2) as u32)).collect();
        let refs: Vec<&Document> = docs.iter().collect();
        s.enter(cluster_batch(&refs, 4, &topics(), &p, 9).unwrap(), 9);
        let mut added = 0;
        for _ in 0..2000 {
            let snap = s.tick(&p);
            added += snap.stripe_deltas.iter().map(|d| d.added_docs).sum::<usize>();
            assert_eq!(s.entered, s.resolved + s.alive());
            if s.is_idle() {
                break;
            }
        }
        assert!(s.is_idle());
        assert_eq!(added, 30);
        assert_eq!(s.take_pending().values().sum::<usize>(), 30);
    }

    #[test]
    fn uniform_fall_preserves_entry_order() {
        let p = SedimentParams::default();
        let far = vec![TopicBand { group: "g0".into(), y0: 0.0, y1: 100.0, face_x: -1e9 }];
        let mut s = SedimentState::new(far, 160.0);
        for k in 0..5 {
            let t = token(1, 0.0, 0.0, vec![1.0, 0.0], TokenState::Entering);
            s.enter(vec![t], k);
            s.tick(&p);
        }
        for _ in 0..20 {
            s.tick(&p);
        }
        let xs: Vec<f64> = s.tokens.iter().map(|t| t.x).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "{xs:?}");
    }

    #[test]
    fn snapshot_schema() {
        let mut s = SedimentState::new(bands(), 160.0);
        s.enter(vec![token(2, 0.0, 0.0, vec![1.0, 0.0, 0.0, 0.0], TokenState::Entering)], 0);
        let v = serde_json::to_value(s.tick(&SedimentParams::default())).unwrap();
        assert_eq!(v["tick"], 1);
        let t = &v["tokens"][0];
        for key in ["id", "x", "y", "radius", "topic", "state", "n"] {
            assert!(t.get(key).is_some(), "{key}");
        }
        assert_eq!(t["state"], "entering");
        assert!(v["stripe_deltas"].as_array().unwrap().is_empty());
    }
}

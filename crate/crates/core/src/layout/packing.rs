//! Document packing on a straightened stripe: area-matched initial x
//! targets, greedy tangent placement and a relaxation pass toward targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Document, Source};

/// Allowed overlap between proxy circles and slack on band containment.
pub const PACK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
}

/// Stripe straightened along x: `heights[k]` is the band height of the
/// k-th of equally wide segments covering `[0, length]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripeProfile {
    pub length: f64,
    pub heights: Vec<f64>,
}

impl StripeProfile {
    /// Linear taper from `left` to `right` sampled at segment centers.
    pub fn tapered(length: f64, left: f64, right: f64, segments: usize) -> Self {
        let n = segments.max(1);
        let heights = (0..n).map(|k| left + (right - left) * (k as f64 + 0.5) / n as f64).collect();
        Self { length, heights }
    }

    pub fn segment_width(&self) -> f64 {
        self.length / self.heights.len() as f64
    }

    /// Band half-height at `x`; the end segments extend past the stripe.
    pub fn half_height(&self, x: f64) -> f64 {
        let w = self.segment_width();
        let k = if w > 0.0 { (x / w).floor() } else { 0.0 };
        let k = (k.max(0.0) as usize).min(self.heights.len() - 1);
        self.heights[k] / 2.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        y.abs() <= self.half_height(x) + PACK_TOL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackItem {
    pub doc_id: String,
    pub shape: Shape,
    pub target_x: f64,
    pub x: f64,
    pub y: f64,
    /// Radius of the circle used for placement; for squares this is the proxy.
    pub radius: f64,
    /// Side length of a square.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packing {
    pub profile: StripeProfile,
    pub items: Vec<PackItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackParams {
    /// Square proxy factor, within `[1/√2, 1]`.
    pub beta: f64,
    /// News circle radius per square root of the document's term count.
    pub circle_scale: f64,
    pub square_side: f64,
    pub segments: usize,
    pub relax_passes: usize,
}

impl Default for PackParams {
    fn default() -> Self {
        Self { beta: 0.85, circle_scale: 0.5, square_side: 2.0, segments: 16, relax_passes: 3 }
    }
}

impl PackParams {
    pub fn check(&self) -> Result<()> {
        let lo = std::f64::consts::FRAC_1_SQRT_2;
        if !(self.beta >= lo - 1e-15 && self.beta <= 1.0) {
            return Err(Error::BadParams(format!("beta must lie in [1/sqrt 2, 1], got {}", self.beta)));
        }
        if !(self.circle_scale > 0.0 && self.square_side > 0.0) {
            return Err(Error::BadParams("circle_scale and square_side must be > 0".into()));
        }
        if self.segments == 0 {
            return Err(Error::BadParams("segments must be >= 1".into()));
        }
        Ok(())
    }

    /// Radius of the circle standing in for a square of side `b`.
    pub fn proxy_radius(&self, b: f64) -> f64 {
        self.beta * std::f64::consts::SQRT_2 * b
    }
}

/// Maps each element to the mean center of the stripe segments its
/// cumulative-area interval overlaps, after scaling both area lines to
/// the same total.
pub fn initial_x(areas: &[f64], heights: &[f64], segment_width: f64) -> Result<Vec<f64>> {
    if areas.iter().any(|a| !(*a > 0.0)) || heights.iter().any(|h| !(*h > 0.0)) || !(segment_width > 0.0) {
        return Err(Error::Domain("initial_x needs positive areas, heights and segment width".into()));
    }
    if heights.is_empty() {
        return Err(Error::Domain("initial_x needs at least one segment".into()));
    }
    let total_a: f64 = areas.iter().sum();
    let total_s: f64 = heights.iter().map(|h| h * segment_width).sum();
    let mut seg = Vec::with_capacity(heights.len());
    let mut acc = 0.0;
    for h in heights {
        let lo = acc;
        acc += h * segment_width;
        seg.push((lo / total_s, acc / total_s));
    }
    let eps = 1e-12;
    let mut out = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in areas {
        let lo = acc / total_a;
        acc += a;
        let hi = acc / total_a;
        let (mut sum, mut n) = (0.0, 0usize);
        for (k, &(s_lo, s_hi)) in seg.iter().enumerate() {
            if s_lo < hi - eps && s_hi > lo + eps {
                sum += (k as f64 + 0.5) * segment_width;
                n += 1;
            }
        }
        if n == 0 {
            // Interval thinner than eps: take the segment holding its midpoint.
            let mid = (lo + hi) / 2.0;
            let k = seg.iter().position(|&(_, s_hi)| s_hi >= mid).unwrap_or(seg.len() - 1);
            sum = (k as f64 + 0.5) * segment_width;
            n = 1;
        }
        out.push(sum / n as f64);
    }
    Ok(out)
}

#[derive(Clone, Copy)]
struct Disk {
    x: f64,
    y: f64,
    r: f64,
}

fn feasible(profile: &StripeProfile, placed: &[Disk], skip: Option<usize>, x: f64, y: f64, r: f64) -> bool {
    if !profile.contains(x, y) {
        return false;
    }
    placed.iter().enumerate().all(|(j, d)| Some(j) == skip || (d.x - x).hypot(d.y - y) >= d.r + r - PACK_TOL)
}

/// Centers at distance `ra` from `a` and `rb` from `b`.
fn tangent_points(a: Disk, ra: f64, b: Disk, rb: f64) -> Vec<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let d = dx.hypot(dy);
    if d == 0.0 || d > ra + rb || d < (ra - rb).abs() {
        return Vec::new();
    }
    let along = (ra * ra - rb * rb + d * d) / (2.0 * d);
    let h = (ra * ra - along * along).max(0.0).sqrt();
    let (mx, my) = (a.x + along * dx / d, a.y + along * dy / d);
    vec![(mx - h * dy / d, my + h * dx / d), (mx + h * dy / d, my - h * dx / d)]
}

/// Feasible position for a disk of radius `r` closest to `(tx, 0)`.
fn place(profile: &StripeProfile, placed: &[Disk], tx: f64, r: f64, r_max: f64) -> (f64, f64) {
    let key = |p: &(f64, f64)| ((p.0 - tx).hypot(p.1), p.0, p.1);
    let mut window = 4.0 * (r + r_max);
    let span = placed.iter().map(|d| (d.x - tx).abs()).fold(0.0, f64::max);
    loop {
        let near: Vec<Disk> = placed.iter().copied().filter(|d| (d.x - tx).abs() <= window).collect();
        let mut cands = vec![(tx, 0.0)];
        for (i, &a) in near.iter().enumerate() {
            let ra = a.r + r;
            let (vx, vy) = (tx - a.x, -a.y);
            let len = vx.hypot(vy);
            let (ux, uy) = if len > 0.0 { (vx / len, vy / len) } else { (1.0, 0.0) };
            cands.push((a.x + ra * ux, a.y + ra * uy));
            if a.y.abs() <= ra {
                let dx = (ra * ra - a.y * a.y).sqrt();
                cands.push((a.x - dx, 0.0));
                cands.push((a.x + dx, 0.0));
            }
            for &b in &near[i + 1..] {
                cands.extend(tangent_points(a, ra, b, b.r + r));
            }
        }
        let best = cands
            .into_iter()
            .filter(|&(x, y)| feasible(profile, placed, None, x, y, r))
            .min_by(|p, q| key(p).partial_cmp(&key(q)).expect("finite candidates"));
        if let Some(p) = best {
            return p;
        }
        if window > span {
            break;
        }
        window *= 2.0;
    }
    // Past the right end of everything placed so far; always free.
    let right = placed.iter().map(|d| d.x + d.r).fold(f64::NEG_INFINITY, f64::max);
    (right + r, 0.0)
}

/// Packs documents, given in arrival order, onto the stripe.
pub fn pack_stripe(profile: &StripeProfile, docs: &[&Document], params: &PackParams) -> Result<Packing> {
    params.check()?;
    if !(profile.length > 0.0) || profile.heights.is_empty() || profile.heights.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Domain("stripe profile needs positive length and heights".into()));
    }
    if docs.is_empty() {
        return Ok(Packing { profile: profile.clone(), items: Vec::new() });
    }
    let shapes: Vec<(Shape, f64, Option<f64>)> = docs
        .iter()
        .map(|d| match d.source {
            Source::News => (Shape::Circle, params.circle_scale * (d.vector.total().max(1) as f64).sqrt(), None),
            Source::Tweet => (Shape::Square, params.proxy_radius(params.square_side), Some(params.square_side)),
        })
        .collect();
    let areas: Vec<f64> = shapes.iter().map(|s| std::f64::consts::PI * s.1 * s.1).collect();
    let targets = initial_x(&areas, &profile.heights, profile.segment_width())?;
    let r_max = shapes.iter().map(|s| s.1).fold(0.0, f64::max);

    let mut placed: Vec<Disk> = Vec::with_capacity(docs.len());
    for (i, &(_, r, _)) in shapes.iter().enumerate() {
        let (x, y) = if i == 1 {
            // Tangent to the first element on the side of the target.
            let a = placed[0];
            let side = if targets[1] >= a.x { 1.0 } else { -1.0 };
            let p = (a.x + side * (a.r + r), a.y);
            if feasible(profile, &placed, None, p.0, p.1, r) {
                p
            } else {
                place(profile, &placed, targets[i], r, r_max)
            }
        } else {
            place(profile, &placed, targets[i], r, r_max)
        };
        placed.push(Disk { x, y, r });
    }

    for _ in 0..params.relax_passes {
        for i in 0..placed.len() {
            let d = placed[i];
            let (gx, gy) = (targets[i] - d.x, -d.y);
            if gx.hypot(gy) < PACK_TOL {
                continue;
            }
            for frac in [1.0, 0.5, 0.25, 0.125] {
                let (x, y) = (d.x + frac * gx, d.y + frac * gy);
                if feasible(profile, &placed, Some(i), x, y, d.r) {
                    placed[i].x = x;
                    placed[i].y = y;
                    break;
                }
            }
        }
    }

    let items = docs
        .iter()
        .zip(&shapes)
        .zip(placed.iter().zip(&targets))
        .map(|((doc, &(shape, r, side)), (d, &tx))| PackItem {
            doc_id: doc.id.clone(),
            shape,
            target_x: tx,
            x: d.x,
            y: d.y,
            radius: r,
            side,
        })
        .collect();
    Ok(Packing { profile: profile.clone(), items })
}

/// Largest pairwise overlap `r_i + r_j − dist` among placement circles.
pub fn max_overlap(packing: &Packing) -> f64 {
    let it = &packing.items;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..it.len() {
        for j in i + 1..it.len() {
            let d = (it[i].x - it[j].x).hypot(it[i].y - it[j].y);
            worst = worst.max(it[i].radius + it[j].radius - d);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TermCounts;

    fn doc(id: &str, source: Source, terms: u32) -> Document {
        Document {
            id: id.into(),
            timestamp: 0,
            source,
            title: String::new(),
            text: String::new(),
            vector: TermCounts::from_pairs([(0, terms)]),
        }
    }

    #[test]
    fn proxy_radius_values() {
        let p = PackParams::default();
        assert!((p.proxy_radius(2.0) - 0.85 * 2f64.sqrt() * 2.0).abs() < 1e-12);
        assert!((p.proxy_radius(2.0) - 2.4042).abs() < 1e-4);
        let low = PackParams { beta: std::f64::consts::FRAC_1_SQRT_2, ..Default::default() };
        assert!((low.proxy_radius(2.0) - 2.0).abs() < 1e-12);
        assert!(PackParams { beta: 0.5, ..Default::default() }.check().is_err());
    }

    #[test]
    fn initial_x_cases() {
        let x = initial_x(&[2.0; 4], &[1.0; 4], 2.0).unwrap();
        assert_eq!(x, vec![1.0, 3.0, 5.0, 7.0]);
        // One element spanning segments 1..=3 of five.
        let x = initial_x(&[1.0, 3.0, 1.0], &[1.0; 5], 1.0).unwrap();
        assert!((x[1] - (1.5 + 2.5 + 3.5) / 3.0).abs() < 1e-12);
        let x = initial_x(&[1.0, 5.0, 0.5], &[3.0], 4.0).unwrap();
        assert_eq!(x, vec![2.0; 3]);
        assert!(initial_x(&[0.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn initial_x_monotone_on_constant_profile() {
        let areas = [0.3, 1.7, 0.2, 0.9, 2.5, 0.1, 1.1];
        let x = initial_x(&areas, &[2.0; 9], 1.5).unwrap();
        assert!(x.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }

    #[test]
    fn two_circles_touch() {
        let profile = StripeProfile { length: 20.0, heights: vec![10.0; 4] };
        let (a, b) = (doc("a", Source::News, 4), doc("b", Source::News, 4));
        let p = pack_stripe(&profile, &[&a, &b], &PackParams { relax_passes: 0, ..Default::default() }).unwrap();
        let (i, j) = (&p.items[0], &p.items[1]);
        assert!(((i.x - j.x).hypot(i.y - j.y) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn packing_respects_band_and_overlap() {
        let profile = StripeProfile::tapered(30.0, 6.0, 3.0, 8);
        let docs: Vec<Document> = (0..40)
            .map(|i| doc(&format!("d{i:02}"), if i % 3 == 0 { Source::Tweet } else { Source::News }, 1 + i % 7))
            .collect();
        let refs: Vec<&Document> = docs.iter().collect();
        let p = pack_stripe(&profile, &refs, &PackParams::default()).unwrap();
        assert_eq!(p.items.len(), 40);
        assert!(max_overlap(&p) <= 1e-6);
        assert!(p.items.iter().all(|it| profile.contains(it.x, it.y)));
        assert!(p.items.iter().filter(|it| it.shape == Shape::Square).all(|it| it.side == Some(2.0)));
    }
}

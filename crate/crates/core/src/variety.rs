//! Sampling Z(P) ∩ B(0,1), nearest-point projection, and enumeration of the
//! lines that spend length at least `c` in the δ-neighborhood of Z.

use nalgebra::Matrix4;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{canonicalize_direction, DirectionNet, Line};
use crate::par;
use crate::poly::{LinePowers, Polynomial4, UniPoly, Vec4};
use crate::tolerances::Tolerances;

/// Newton projections are accepted once `|P|/|∇P|` drops below this, even if
/// the tighter `newton_residual` target is out of reach in floating point.
const NEWTON_ACCEPT: f64 = 1e-10;

/// Projects `x` onto Z(P) by Newton steps along the gradient.
pub fn newton_project(p: &Polynomial4, x: &Vec4, tol: &Tolerances) -> Option<Vec4> {
    let mut z = *x;
    let mut last = f64::INFINITY;
    for _ in 0..tol.newton_max_iter {
        let (v, g) = p.eval_grad(&z);
        let g2 = g.norm_squared();
        if !(g2 > 0.0) {
            return None;
        }
        let res = v.abs() / g2.sqrt();
        if res <= tol.newton_residual {
            return Some(z);
        }
        if res >= last && res <= NEWTON_ACCEPT {
            return Some(z);
        }
        last = res;
        z -= g * (v / g2);
        if !z.iter().all(|c| c.is_finite()) {
            return None;
        }
    }
    let (v, g) = p.eval_grad(&z);
    (v.abs() <= NEWTON_ACCEPT * g.norm()).then_some(z)
}

/// A point of Z(P) with its gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    #[serde(with = "crate::vec4_serde")]
    pub z: Vec4,
    #[serde(with = "crate::vec4_serde")]
    pub grad: Vec4,
}

/// Restricts sampling to part of B(0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeedRegion {
    Ball,
    /// Slabs `|x1 - k·spacing| <= halfwidth`.
    Slices { spacing: f64, halfwidth: f64 },
}

impl SeedRegion {
    /// Slices fine enough that any line with a hit run of length `c / (D+1)`
    /// crosses one of them.
    pub fn slices_for(degree: usize, c: f64, delta: f64) -> Self {
        SeedRegion::Slices { spacing: 0.9 * c / (degree.max(1) + 1) as f64, halfwidth: delta }
    }

    fn meets(&self, lo: f64, hi: f64) -> bool {
        match *self {
            SeedRegion::Ball => true,
            SeedRegion::Slices { spacing, halfwidth } => {
                let k = ((lo - halfwidth) / spacing).ceil();
                k * spacing <= hi + halfwidth
            }
        }
    }

    fn contains_x1(&self, x1: f64, slack: f64) -> bool {
        self.meets(x1 - slack, x1 + slack)
    }
}

/// δ/2-separated points of Z(P) ∩ B(0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub delta: f64,
    pub points: Vec<SurfacePoint>,
}

impl SurfaceSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Orthonormal tangent frame at sample `i`.
    pub fn frame(&self, i: usize) -> [Vec4; 3] {
        let g = self.points[i].grad;
        let f = crate::curvature::phi_frame(&g).expect("samples have nonzero gradient");
        [f[1] / g.norm(), f[2] / g.norm(), f[3] / g.norm()]
    }
}

pub fn sample_surface(p: &Polynomial4, delta: f64, tol: &Tolerances) -> Result<SurfaceSample> {
    sample_surface_in(p, delta, SeedRegion::Ball, tol)
}

/// Box subdivision down to side δ/2, pruning boxes that cannot meet Z(P),
/// Newton projection of the leaf centers, then greedy thinning at δ/2.
pub fn sample_surface_in(p: &Polynomial4, delta: f64, region: SeedRegion, tol: &Tolerances) -> Result<SurfaceSample> {
    sample_impl(p, delta, region, None, tol)
}

/// Seeds for [`enumerate_lines`]: like [`sample_surface_in`], but drops points
/// whose unit normal is so close to ±e1 that no direction within `cap` of e1
/// passes the first-order tangency filter there.
pub fn sample_line_seeds(p: &Polynomial4, delta: f64, region: SeedRegion, cap: f64, tol: &Tolerances) -> Result<SurfaceSample> {
    let chord = 2.0 * (0.5 * cap).sin();
    sample_impl(p, delta, region, Some(chord + tol.prefilter_k1 * delta), tol)
}

fn sample_impl(p: &Polynomial4, delta: f64, region: SeedRegion, max_normal_e1: Option<f64>, tol: &Tolerances) -> Result<SurfaceSample> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta = {delta} must lie in (0,1)")));
    }
    let m2 = p.hessian_bound(2.0);
    let mut depth = 0u32;
    while 2.0 / f64::from(1u32 << depth) > 0.5 * delta {
        depth += 1;
    }
    let may_meet = |c: &Vec4, a: f64| -> bool {
        let r = 2.0 * a;
        if c.norm() - r > 1.0 + delta || !region.meets(c[0] - a, c[0] + a) {
            return false;
        }
        let (v, g) = p.eval_grad(c);
        if let Some(limit) = max_normal_e1 {
            let slack = m2 * r;
            if g[0].abs() - slack > limit * (g.norm() + slack) {
                return false;
            }
        }
        v.abs() <= g.norm() * r + 0.5 * m2 * r * r
    };

    // Breadth-first to a modest level, then parallel depth-first below it.
    let mut frontier = vec![(Vec4::zeros(), 1.0f64)];
    let split_level = depth.min(3);
    for _ in 0..split_level {
        frontier = frontier
            .into_iter()
            .flat_map(|(c, a)| children(&c, a))
            .filter(|(c, a)| may_meet(c, *a))
            .collect();
    }
    let leaves: Vec<Vec<Vec4>> = par::map(&frontier, |(c, a)| {
        let mut out = Vec::new();
        let mut stack = vec![(*c, *a, split_level)];
        while let Some((c, a, d)) = stack.pop() {
            if d == depth {
                out.push(c);
                continue;
            }
            // Reverse push keeps the output in child order.
            for (cc, ca) in children(&c, a).into_iter().rev() {
                if may_meet(&cc, ca) {
                    stack.push((cc, ca, d + 1));
                }
            }
        }
        out
    });
    let leaves: Vec<Vec4> = leaves.into_iter().flatten().collect();
    let projected: Vec<Option<SurfacePoint>> = par::map(&leaves, |c| {
        let z = newton_project(p, c, tol)?;
        if z.norm() > 1.0 || (z - c).norm() > delta || !region.contains_x1(z[0], delta) {
            return None;
        }
        let grad = p.gradient(&z);
        if max_normal_e1.is_some_and(|limit| grad[0].abs() > limit * grad.norm()) {
            return None;
        }
        (grad.norm() >= tol.grad_floor).then_some(SurfacePoint { z, grad })
    });
    let cands: Vec<SurfacePoint> = projected.into_iter().flatten().collect();
    let pts: Vec<Vec<f64>> = cands.iter().map(|s| s.z.iter().copied().collect()).collect();
    let keep = crate::geometry::greedy_net_indices(&pts, 0.5 * delta);
    Ok(SurfaceSample { delta, points: keep.into_iter().map(|i| cands[i]).collect() })
}

fn children(c: &Vec4, a: f64) -> Vec<(Vec4, f64)> {
    let h = 0.5 * a;
    (0..16)
        .map(|m| {
            let off = Vec4::from_fn(|k, _| if m >> k & 1 == 1 { h } else { -h });
            (c + off, h)
        })
        .collect()
}

/// The sample point closest to `x`; ties go to the lexicographically smaller
/// point.
pub fn nearest_point(sample: &SurfaceSample, x: &Vec4) -> Result<Vec4> {
    let mut best: Option<(f64, Vec4)> = None;
    for s in &sample.points {
        let d = (s.z - x).norm();
        let better = match &best {
            None => true,
            Some((bd, bz)) => d < *bd || (d == *bd && lex_less(&s.z, bz)),
        };
        if better {
            best = Some((d, s.z));
        }
    }
    let limit = 10.0 * sample.delta;
    match best {
        Some((d, z)) if d <= limit => Ok(z),
        Some((d, _)) => Err(Error::NotNearVariety { distance: d, limit }),
        None => Err(Error::NotNearVariety { distance: f64::INFINITY, limit }),
    }
}

fn lex_less(a: &Vec4, b: &Vec4) -> bool {
    for k in 0..4 {
        if a[k] != b[k] {
            return a[k] < b[k];
        }
    }
    false
}

/// Parameter of sample `k` of `n_t` on `[-1, 1]` (cell midpoints).
#[inline]
pub fn t_sample(k: usize, n_t: usize) -> f64 {
    -1.0 + (2.0 * k as f64 + 1.0) / n_t as f64
}

/// Per-line neighborhood tester with cached partial derivatives.
#[derive(Debug, Clone)]
pub struct LineMeasurer<'a> {
    p: &'a Polynomial4,
    partials: [Polynomial4; 4],
    m2: f64,
    /// `(sup |grad P| + m2 δ) δ` on the slightly enlarged ball.
    reject_level: f64,
    pub delta: f64,
    pub n_t: usize,
    tol: Tolerances,
}

/// Hit pattern of one line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineHits {
    pub hits: usize,
    pub mask: Vec<u64>,
}

impl LineHits {
    pub fn measure(&self, n_t: usize) -> f64 {
        2.0 * self.hits as f64 / n_t as f64
    }

    pub fn is_hit(&self, k: usize) -> bool {
        self.mask[k / 64] >> (k % 64) & 1 == 1
    }
}

pub fn partial_derivative(p: &Polynomial4, k: usize) -> Polynomial4 {
    let terms = p.terms().iter().filter(|(idx, _)| idx[k] > 0).map(|(idx, c)| {
        let mut j = *idx;
        j[k] -= 1;
        (j, c * f64::from(idx[k]))
    });
    Polynomial4::new(p.degree_bound(), terms).expect("derivative lowers degree")
}

impl<'a> LineMeasurer<'a> {
    pub fn new(p: &'a Polynomial4, delta: f64, n_t: usize, tol: &Tolerances) -> Result<Self> {
        if n_t < 256 {
            return Err(invalid(format!("n_t = {n_t} below 256")));
        }
        Ok(Self {
            p,
            partials: [0, 1, 2, 3].map(|k| partial_derivative(p, k)),
            m2: p.hessian_bound(1.0 + 2.0 * delta),
            reject_level: (p.gradient_bound(1.0 + 2.0 * delta) + p.hessian_bound(1.0 + 2.0 * delta) * delta) * delta,
            delta,
            n_t,
            tol: *tol,
        })
    }

    pub fn words(&self) -> usize {
        self.n_t.div_ceil(64)
    }

    /// Tests every sample. `need` enables early exit: `Some(n)` stops once `n`
    /// hits are impossible; with `stop_at_need` it also stops once reached.
    pub fn measure(&self, line: &Line, need: Option<usize>, stop_at_need: bool) -> LineHits {
        let n_t = self.n_t;
        let mut mask = vec![0u64; self.words()];
        let a = line.anchor;
        let v = line.dir;
        let lp = LinePowers::new(&a, &v, self.p.degree_bound());
        let q = self.p.restrict_on(&lp);
        let d = self.delta;
        let in_ball = |t: f64| (a + v * t).norm_squared() <= (1.0 + d) * (1.0 + d);
        // Cheap pass on P alone: every hit needs |P| below the global level.
        // It stops as soon as it can no longer rule the line out.
        if let Some(n) = need {
            let mut possible = 0;
            for k in 0..n_t {
                if possible >= n {
                    break;
                }
                if possible + (n_t - k) < n {
                    return LineHits { hits: 0, mask };
                }
                let t = t_sample(k, n_t);
                if in_ball(t) && q.eval(t).abs() <= self.reject_level {
                    possible += 1;
                }
            }
        }
        let mut dq: Option<[UniPoly; 4]> = None;
        // Samples passing the local test: within distance d of x, |P| differs
        // from its value at x by at most |grad P| d + m2 d^2 / 2.
        // The full gradient is evaluated only where the bound carried from the
        // last evaluated sample of the block, |g(t)| <= |g(s)| + m2 |t - s|,
        // cannot already rule the sample out.
        const BLOCK: usize = 16;
        let slack = 0.5 * self.m2 * d;
        let mut cand: Vec<(usize, f64, f64)> = Vec::with_capacity(n_t);
        let mut known: Option<(f64, f64)> = None;
        for k in 0..n_t {
            if need.is_some_and(|n| cand.len() + (n_t - k) < n) {
                return LineHits { hits: 0, mask };
            }
            if k % BLOCK == 0 {
                known = None;
            }
            let t = t_sample(k, n_t);
            if !in_ball(t) {
                continue;
            }
            let val = q.eval(t).abs();
            if val > self.reject_level {
                continue;
            }
            if let Some((s, gs)) = known {
                if val > (gs + self.m2 * (t - s).abs() + slack) * d {
                    continue;
                }
            }
            let dq = dq.get_or_insert_with(|| [0, 1, 2, 3].map(|k| self.partials[k].restrict_on(&lp)));
            let gn = Vec4::new(dq[0].eval(t), dq[1].eval(t), dq[2].eval(t), dq[3].eval(t)).norm();
            known = Some((t, gn));
            if val <= (gn + slack) * d {
                cand.push((k, val, gn));
            }
        }
        let mut hits = 0;
        for (m, &(k, val, gn)) in cand.iter().enumerate() {
            if let Some(n) = need {
                if hits + (cand.len() - m) < n {
                    break;
                }
                if stop_at_need && hits >= n {
                    break;
                }
            }
            let x = a + v * t_sample(k, n_t);
            let xn = x.norm();
            let certified = zero_within(val, gn, self.m2).is_some_and(|r| r <= d && xn + r <= 1.0);
            let hit = certified
                || match newton_project(self.p, &x, &self.tol) {
                    Some(z) => (z - x).norm() <= d && z.norm() <= 1.0,
                    None => false,
                };
            if hit {
                hits += 1;
                mask[k / 64] |= 1 << (k % 64);
            }
        }
        LineHits { hits, mask }
    }
}

/// Radius within which a zero is guaranteed along the gradient ray, given
/// `|P(x)| = val`, `|grad P(x)| = gn` and a Hessian bound `m2`.
#[inline]
fn zero_within(val: f64, gn: f64, m2: f64) -> Option<f64> {
    if !(gn > 0.0) {
        return None;
    }
    if m2 == 0.0 {
        return Some(val / gn);
    }
    let disc = gn * gn - 2.0 * m2 * val;
    // Stable form of (gn - sqrt(disc)) / m2.
    (disc >= 0.0).then(|| 2.0 * val / (gn + disc.sqrt()))
}

/// Estimated measure of `{t ∈ [-1,1] : dist(ℓ(t), Z) <= δ}`.
pub fn line_neighborhood_measure(p: &Polynomial4, line: &Line, delta: f64, n_t: usize, tol: &Tolerances) -> Result<f64> {
    let m = LineMeasurer::new(p, delta, n_t, tol)?;
    Ok(m.measure(line, None, false).measure(n_t))
}

/// An incidence `(x, ℓ)` with `x` on line `line_id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidencePair {
    #[serde(with = "crate::vec4_serde")]
    pub x: Vec4,
    pub line_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnumerationMode {
    /// Every line with measure at least `c`.
    Full,
    /// Stops at the first qualifying line per net direction.
    DirectionsOnly,
}

/// Enumerated line set Σ̂ with its incidence table Γ̂ stored as hit masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub delta: f64,
    pub c: f64,
    pub n_t: usize,
    pub lines: Vec<Line>,
    /// Net index of each line's direction.
    pub dir_index: Vec<u32>,
    masks: Vec<u64>,
    pub candidates_tested: u64,
}

impl Enumeration {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn words(&self) -> usize {
        self.n_t.div_ceil(64)
    }

    pub fn mask(&self, i: usize) -> &[u64] {
        let w = self.words();
        &self.masks[i * w..(i + 1) * w]
    }

    pub fn hit_samples(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let m = self.mask(i);
        (0..self.n_t).filter(move |&k| m[k / 64] >> (k % 64) & 1 == 1)
    }

    pub fn measure(&self, i: usize) -> f64 {
        let h: u32 = self.mask(i).iter().map(|w| w.count_ones()).sum();
        2.0 * f64::from(h) / self.n_t as f64
    }

    /// Γ̂ as explicit pairs.
    pub fn incidences(&self) -> impl Iterator<Item = IncidencePair> + '_ {
        (0..self.lines.len()).flat_map(move |i| {
            self.hit_samples(i).map(move |k| IncidencePair {
                x: self.lines[i].point(t_sample(k, self.n_t)),
                line_id: i,
            })
        })
    }

    pub fn directions(&self) -> Vec<Vec4> {
        self.lines.iter().map(|l| l.dir).collect()
    }

    /// Distinct net directions that carry at least one line.
    pub fn distinct_dir_indices(&self) -> Vec<u32> {
        let mut d = self.dir_index.clone();
        d.sort_unstable();
        d.dedup();
        d
    }
}

struct Seed {
    z: Vec4,
    ghat: Vec4,
    gnorm: f64,
    hess: [f64; 10],
}

#[inline]
fn quad_form(h: &[f64; 10], v: &Vec4) -> f64 {
    let [h00, h01, h02, h03, h11, h12, h13, h22, h23, h33] = *h;
    h00 * v[0] * v[0]
        + h11 * v[1] * v[1]
        + h22 * v[2] * v[2]
        + h33 * v[3] * v[3]
        + 2.0 * (h01 * v[0] * v[1] + h02 * v[0] * v[2] + h03 * v[0] * v[3] + h12 * v[1] * v[2] + h13 * v[1] * v[3] + h23 * v[2] * v[3])
}

fn pack_hess(h: &Matrix4<f64>) -> [f64; 10] {
    [h[(0, 0)], h[(0, 1)], h[(0, 2)], h[(0, 3)], h[(1, 1)], h[(1, 2)], h[(1, 3)], h[(2, 2)], h[(2, 3)], h[(3, 3)]]
}

/// Seeds bucketed by unit normal, so whole buckets fail the tangency filter
/// at once.
struct Bucket {
    center: Vec4,
    radius: f64,
    seeds: Vec<u32>,
}

fn bucket_seeds(seeds: &[Seed], cell: f64) -> Vec<Bucket> {
    let mut map: FxHashMap<u64, Vec<u32>> = FxHashMap::default();
    for (i, s) in seeds.iter().enumerate() {
        map.entry(crate::pack4(crate::cell4(&s.ghat, cell))).or_default().push(i as u32);
    }
    let mut keys: Vec<u64> = map.keys().copied().collect();
    keys.sort_unstable();
    keys.into_iter()
        .map(|k| {
            let ids = map.remove(&k).unwrap_or_default();
            let mean = ids.iter().fold(Vec4::zeros(), |a, &i| a + seeds[i as usize].ghat) / ids.len() as f64;
            let radius = ids.iter().map(|&i| (seeds[i as usize].ghat - mean).norm()).fold(0.0, f64::max);
            Bucket { center: mean, radius, seeds: ids }
        })
        .collect()
}

/// Enumerates Σ̂_{δ,c}: lines through sample points along net directions that
/// pass the first- and second-order tangency filters and have measure ≥ c.
pub fn enumerate_lines(
    p: &Polynomial4,
    sample: &SurfaceSample,
    net: &DirectionNet,
    delta: f64,
    c: f64,
    tol: &Tolerances,
    mode: EnumerationMode,
) -> Result<Enumeration> {
    if !(delta > 0.0 && delta < c && c <= 2.0) {
        return Err(invalid(format!("need 0 < delta < c <= 2, got delta={delta}, c={c}")));
    }
    let measurer = LineMeasurer::new(p, delta, tol.n_t, tol)?;
    let n_t = tol.n_t;
    let need = (c * n_t as f64 / 2.0 - 1e-9).ceil() as usize;
    let seeds: Vec<Seed> = par::map(&sample.points, |s| {
        let gnorm = s.grad.norm();
        Seed {
            z: s.z,
            ghat: canonicalize_direction(&s.grad).unwrap_or(s.grad / gnorm),
            gnorm,
            hess: pack_hess(&p.hessian(&s.z)),
        }
    });
    let buckets = bucket_seeds(&seeds, 0.05);
    let k1 = tol.prefilter_k1 * delta;
    let k2 = tol.prefilter_k2 * delta;
    let reach = (1.0 + delta) * (1.0 + delta) - 0.25 * c * c;

    let per_dir: Vec<(Vec<(Line, Vec<u64>)>, u64)> = par::map_range(net.len(), |di| {
        let v = net.points[di];
        let mut seen: FxHashSet<[i32; 4]> = FxHashSet::default();
        let mut out = Vec::new();
        let mut tested = 0u64;
        'buckets: for b in &buckets {
            if v.dot(&b.center).abs() - b.radius > k1 {
                continue;
            }
            for &si in &b.seeds {
                let s = &seeds[si as usize];
                if v.dot(&s.ghat).abs() > k1 || quad_form(&s.hess, &v).abs() > k2 * s.gnorm {
                    continue;
                }
                let foot = s.z - v * s.z.dot(&v);
                if foot.norm_squared() > reach {
                    continue;
                }
                if !seen.insert(crate::cell4(&foot, delta)) {
                    continue;
                }
                tested += 1;
                let line = Line { anchor: foot, dir: v };
                let stop = mode == EnumerationMode::DirectionsOnly;
                let h = measurer.measure(&line, Some(need), stop);
                if h.hits >= need {
                    out.push((line, h.mask));
                    if stop {
                        break 'buckets;
                    }
                }
            }
        }
        (out, tested)
    });

    let mut lines = Vec::new();
    let mut dir_index = Vec::new();
    let mut masks = Vec::new();
    let mut candidates_tested = 0;
    for (di, (found, tested)) in per_dir.into_iter().enumerate() {
        candidates_tested += tested;
        for (l, m) in found {
            lines.push(l);
            dir_index.push(di as u32);
            masks.extend(m);
        }
    }
    Ok(Enumeration { delta, c, n_t, lines, dir_index, masks, candidates_tested })
}

/// A rescaled piece `P_j = (P - w_j) / m_j` on the sample points whose
/// gradient magnitude lies in `[m_j, 2 m_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicPiece {
    pub poly: Polynomial4,
    pub region: Vec<usize>,
    pub level: i32,
    pub scale_m: f64,
    pub offset_w: f64,
}

/// Dyadic level of a gradient magnitude, `floor(log2 |g|)`.
pub fn dyadic_level(gnorm: f64) -> i32 {
    gnorm.log2().floor() as i32
}

pub fn gradient_dyadic_decomposition(p: &Polynomial4, sample: &SurfaceSample, delta: f64) -> Result<Vec<DyadicPiece>> {
    if sample.is_empty() {
        return Err(invalid("gradient-dyadic decomposition needs a nonempty sample"));
    }
    let mut bins: std::collections::BTreeMap<i32, Vec<usize>> = Default::default();
    for (i, s) in sample.points.iter().enumerate() {
        bins.entry(dyadic_level(s.grad.norm())).or_default().push(i);
    }
    let mut pieces = Vec::new();
    for (level, region) in bins {
        let m = 2f64.powi(level);
        // Offset: median of P over the center and the axis points of each δ-ball.
        let mut vals: Vec<f64> = Vec::with_capacity(region.len() * 9);
        for &i in &region {
            let z = sample.points[i].z;
            vals.push(p.eval(&z));
            for k in 0..4 {
                for sgn in [-0.5, 0.5] {
                    let mut y = z;
                    y[k] += sgn * delta;
                    vals.push(p.eval(&y));
                }
            }
        }
        vals.sort_by(f64::total_cmp);
        let w = vals[vals.len() / 2];
        let poly = p.plus_constant(-w).scaled(1.0 / m);
        pieces.push(DyadicPiece { poly, region, level, scale_m: m, offset_w: w });
    }
    Ok(pieces)
}

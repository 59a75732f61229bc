//! δ-tubes with shadings on a shared voxel grid: union volumes, the
//! maximal-function norm, two-ends, robust transversality, the linear Wolff
//! axioms, and hairbrushes.
//!
//! Voxel centers sit at integer multiples of the spacing `h` (δ/2 by default).
//! Volumes and norms are accumulated one x1-layer at a time so that memory
//! stays proportional to a single layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{canonicalize_direction, line_angle, DirectionNet};
use crate::par;
use crate::poly::Vec4;

/// The exponent of the maximal-function estimate.
pub const KAKEYA_P: f64 = 3.0 + 1.0 / 28.0;

/// Dual exponent `p/(p-1)`.
pub fn dual_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Voxel centers `h·(i1..i4)` with every index in `[-n, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub h: f64,
    pub n: i32,
}

impl VoxelGrid {
    /// Grid of spacing `h` covering `[-(1+2δ), 1+2δ]^4`.
    pub fn new(delta: f64, h: f64) -> Result<Self> {
        if !(delta > 0.0 && h > 0.0) {
            return Err(invalid(format!("bad grid delta={delta}, h={h}")));
        }
        let n = ((1.0 + 2.0 * delta) / h).ceil() as i32;
        if n >= 511 {
            return Err(invalid(format!("grid of {} voxels per side is too fine", 2 * n + 1)));
        }
        Ok(Self { h, n })
    }

    pub fn voxel_volume(&self) -> f64 {
        self.h.powi(4)
    }

    pub fn center(&self, idx: [i32; 4]) -> Vec4 {
        Vec4::from_fn(|k, _| f64::from(idx[k]) * self.h)
    }

    #[inline]
    fn key3(&self, j: i32, k: i32, l: i32) -> u32 {
        let off = 511;
        ((j + off) as u32) << 20 | ((k + off) as u32) << 10 | (l + off) as u32
    }

    fn unkey3(&self, key: u32) -> [i32; 3] {
        let off = 511;
        [(key >> 20) as i32 - off, ((key >> 10) & 1023) as i32 - off, (key & 1023) as i32 - off]
    }
}

/// The marked subset Y(T) of a tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shading {
    Full,
    /// Tube voxels within `radius` of `center`.
    Ball { center: [f64; 4], radius: f64 },
    /// Explicit voxel indices, sorted.
    Voxels(Vec<[i32; 4]>),
}

/// The δ-neighborhood of the unit segment `center ± dir/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    #[serde(with = "crate::vec4_serde")]
    pub center: Vec4,
    #[serde(with = "crate::vec4_serde")]
    pub dir: Vec4,
    pub shading: Shading,
}

fn seg_point_dist2(c: &Vec4, v: &Vec4, x: &Vec4) -> f64 {
    let d = x - c;
    let t = d.dot(v).clamp(-0.5, 0.5);
    (d - v * t).norm_squared()
}

/// Squared distance between the unit segments of two tubes.
fn seg_seg_dist2(a: &Tube, b: &Tube) -> f64 {
    let (p, u) = (a.center, a.dir);
    let (q, v) = (b.center, b.dir);
    let w = p - q;
    let (uu, uv, vv, uw, vw) = (u.dot(&u), u.dot(&v), v.dot(&v), u.dot(&w), v.dot(&w));
    let den = uu * vv - uv * uv;
    let mut s = if den > 1e-14 { ((uv * vw - vv * uw) / den).clamp(-0.5, 0.5) } else { 0.0 };
    let mut t = ((uv * s + vw) / vv).clamp(-0.5, 0.5);
    s = ((uv * t - uw) / uu).clamp(-0.5, 0.5);
    t = ((uv * s + vw) / vv).clamp(-0.5, 0.5);
    (w + u * s - v * t).norm_squared()
}

impl Tube {
    pub fn new(center: Vec4, dir: Vec4) -> Result<Self> {
        Ok(Self { center, dir: canonicalize_direction(&dir)?, shading: Shading::Full })
    }

    pub fn with_shading(mut self, shading: Shading) -> Self {
        self.shading = shading;
        self
    }

    pub fn endpoints(&self) -> (Vec4, Vec4) {
        (self.center - self.dir * 0.5, self.center + self.dir * 0.5)
    }

    fn x1_range(&self, delta: f64) -> (f64, f64) {
        let (a, b) = self.endpoints();
        (a[0].min(b[0]) - delta, a[0].max(b[0]) + delta)
    }

    fn shaded(&self, x: &Vec4, idx: &[i32; 4]) -> bool {
        match &self.shading {
            Shading::Full => true,
            Shading::Ball { center, radius } => (x - Vec4::from(*center)).norm() <= *radius,
            Shading::Voxels(v) => v.binary_search(idx).is_ok(),
        }
    }

    /// Voxels of the tube (or of its shading) in layer `i` (x1 = i·h).
    fn layer_voxels(&self, grid: &VoxelGrid, delta: f64, i: i32, use_shading: bool, mut emit: impl FnMut(u32)) {
        let h = grid.h;
        let x1 = f64::from(i) * h;
        let (c, v) = (self.center, self.dir);
        let (mut lo, mut hi) = (-0.5f64, 0.5f64);
        if v[0].abs() > 1e-12 {
            let a = (x1 - c[0] - delta) / v[0];
            let b = (x1 - c[0] + delta) / v[0];
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
            if lo > hi {
                return;
            }
        } else if (c[0] - x1).abs() > delta {
            return;
        }
        let r2 = (delta * (1.0 + 1e-9)).powi(2);
        let mut range = [(0i32, 0i32); 3];
        for k in 1..4 {
            let (p, q) = (c[k] + v[k] * lo, c[k] + v[k] * hi);
            let a = ((p.min(q) - delta) / h).ceil() as i32;
            let b = ((p.max(q) + delta) / h).floor() as i32;
            range[k - 1] = (a.max(-grid.n), b.min(grid.n));
        }
        for j in range[0].0..=range[0].1 {
            for k in range[1].0..=range[1].1 {
                for l in range[2].0..=range[2].1 {
                    let idx = [i, j, k, l];
                    let x = grid.center(idx);
                    if seg_point_dist2(&c, &v, &x) <= r2 && (!use_shading || self.shaded(&x, &idx)) {
                        emit(grid.key3(j, k, l));
                    }
                }
            }
        }
    }

    /// All voxels of the tube or its shading.
    pub fn voxels(&self, grid: &VoxelGrid, delta: f64, use_shading: bool) -> Vec<[i32; 4]> {
        let (a, b) = self.x1_range(delta);
        let (ia, ib) = (((a / grid.h).ceil() as i32).max(-grid.n), ((b / grid.h).floor() as i32).min(grid.n));
        let mut out = Vec::new();
        for i in ia..=ib {
            let mut keys = Vec::new();
            self.layer_voxels(grid, delta, i, use_shading, |k| keys.push(k));
            keys.sort_unstable();
            out.extend(keys.into_iter().map(|k| {
                let [j, k, l] = grid.unkey3(k);
                [i, j, k, l]
            }));
        }
        out
    }
}

/// Tubes of one radius on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSet {
    pub delta: f64,
    pub grid: VoxelGrid,
    pub tubes: Vec<Tube>,
}

/// How tube centers are placed in [`build_direction_separated`].
#[derive(Debug, Clone, PartialEq)]
pub enum AnchorRule {
    /// Every tube centered at the origin.
    Bush,
    /// Centers uniform in `B(0, radius)`.
    Translated { radius: f64 },
    /// Centers at evenly spaced points of the stem segment `center ± dir/2`.
    Hairbrush { center: Vec4, dir: Vec4 },
}

impl TubeSet {
    pub fn new(delta: f64, tubes: Vec<Tube>) -> Result<Self> {
        Self::with_spacing(delta, 0.5 * delta, tubes)
    }

    pub fn with_spacing(delta: f64, h: f64, tubes: Vec<Tube>) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("tube radius {delta} not in (0,1)")));
        }
        Ok(Self { delta, grid: VoxelGrid::new(delta, h)?, tubes })
    }

    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    /// Same tubes on a grid of spacing `h`.
    pub fn regridded(&self, h: f64) -> Result<Self> {
        Self::with_spacing(self.delta, h, self.tubes.clone())
    }

    pub fn shaded(mut self, shading: Shading) -> Self {
        for t in &mut self.tubes {
            t.shading = shading.clone();
        }
        self
    }

    /// No two cores within δ in both direction and center offset.
    pub fn essentially_distinct(&self) -> bool {
        let d = self.delta;
        let net = DirectionNet::from_points(d, std::f64::consts::FRAC_PI_2, self.tubes.iter().map(|t| t.dir).collect());
        self.tubes.iter().enumerate().all(|(i, t)| {
            net.within(&t.dir, d)
                .into_iter()
                .all(|j| j == i || (self.tubes[j].center - t.center).norm() > d || line_angle(&self.tubes[j].dir, &t.dir) > d)
        })
    }

    /// Per layer, the sorted `(voxel key, tube id)` pairs of that layer, fed to
    /// `f`; results come back in layer order.
    fn layers<R: Send>(&self, use_shading: bool, f: impl Fn(&[(u32, u32)]) -> R + Sync + Send) -> Vec<R> {
        let g = self.grid;
        let ranges: Vec<(i32, i32)> = self
            .tubes
            .iter()
            .map(|t| {
                let (a, b) = t.x1_range(self.delta);
                ((a / g.h).ceil() as i32, (b / g.h).floor() as i32)
            })
            .collect();
        par::map_range((2 * g.n + 1) as usize, |li| {
            let i = li as i32 - g.n;
            let mut pairs: Vec<(u32, u32)> = Vec::new();
            for (ti, t) in self.tubes.iter().enumerate() {
                if i < ranges[ti].0 || i > ranges[ti].1 {
                    continue;
                }
                t.layer_voxels(&g, self.delta, i, use_shading, |k| pairs.push((k, ti as u32)));
            }
            pairs.sort_unstable();
            f(&pairs)
        })
    }

    /// Run lengths of equal voxel keys, in order.
    fn runs(pairs: &[(u32, u32)]) -> impl Iterator<Item = &[(u32, u32)]> {
        pairs.chunk_by(|a, b| a.0 == b.0)
    }
}

pub fn build_direction_separated(net: &DirectionNet, rule: &AnchorRule, delta: f64, seed: u64) -> Result<TubeSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.len();
    let tubes = net
        .points
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let center = match rule {
                AnchorRule::Bush => Vec4::zeros(),
                AnchorRule::Translated { radius } => loop {
                    let x = Vec4::from_fn(|_, _| rng.random_range(-1.0..1.0));
                    if x.norm() <= 1.0 {
                        break x * *radius;
                    }
                },
                AnchorRule::Hairbrush { center, dir } => {
                    let s = if n > 1 { -0.5 + i as f64 / (n - 1) as f64 } else { 0.0 };
                    center + dir.normalize() * s
                }
            };
            Tube::new(center, *v)
        })
        .collect::<Result<Vec<_>>>()?;
    TubeSet::new(delta, tubes)
}

/// Direction cap used for the translated test families.
pub const FAMILY_CAP: f64 = 0.4;

/// δ-separated directions within `cap` of e1, centers uniform in B(0, δ/4).
pub fn translated_family(delta: f64, cap: f64, seed: u64) -> Result<TubeSet> {
    let net = DirectionNet::build(delta, cap, seed)?.thinned(delta);
    build_direction_separated(&net, &AnchorRule::Translated { radius: 0.25 * delta }, delta, seed ^ 0x5eed)
}

/// Shading by the voxels within δ/2 of the origin. Every tube whose core
/// passes within δ/2 of the origin contains all of them.
pub fn hub_shading(delta: f64) -> Shading {
    Shading::Ball { center: [0.0; 4], radius: 0.5 * delta }
}

/// `h^4 ·` number of distinct voxels in the union.
pub fn union_volume(ts: &TubeSet, use_shading: bool) -> f64 {
    let counts = ts.layers(use_shading, |pairs| TubeSet::runs(pairs).count());
    counts.iter().sum::<usize>() as f64 * ts.grid.voxel_volume()
}

/// Grid quadrature of `‖Σ_T χ_T‖_{p'}` with `p' = p/(p-1)`.
pub fn kakeya_norm(ts: &TubeSet, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid(format!("p = {p} must exceed 1")));
    }
    Ok(norm_dual(ts, dual_exponent(p)))
}

/// `(Σ_voxels count^q · h^4)^{1/q}` over full tubes.
pub fn norm_dual(ts: &TubeSet, q: f64) -> f64 {
    let sums = ts.layers(false, |pairs| TubeSet::runs(pairs).map(|r| (r.len() as f64).powf(q)).sum::<f64>());
    (sums.iter().sum::<f64>() * ts.grid.voxel_volume()).powf(1.0 / q)
}

/// Multiplicity histogram of `Σ_T χ_T` (index = count).
pub fn multiplicity_histogram(ts: &TubeSet, use_shading: bool) -> Vec<u64> {
    let parts = ts.layers(use_shading, |pairs| {
        let mut h: Vec<u64> = Vec::new();
        for r in TubeSet::runs(pairs) {
            if h.len() <= r.len() {
                h.resize(r.len() + 1, 0);
            }
            h[r.len()] += 1;
        }
        h
    });
    let mut out: Vec<u64> = Vec::new();
    for h in parts {
        if out.len() < h.len() {
            out.resize(h.len(), 0);
        }
        for (o, x) in out.iter_mut().zip(h) {
            *o += x;
        }
    }
    out
}

/// `|Y ∩ B(x,r)| ≤ α r^ρ |Y|` for centers `x` on the core at spacing δ and
/// radii `2^-1 .. 2^-r_samples`.
pub fn two_ends_check(ts: &TubeSet, tube: usize, rho: f64, alpha: f64, r_samples: u32) -> Result<bool> {
    let t = ts.tubes.get(tube).ok_or_else(|| invalid(format!("no tube {tube}")))?;
    let y: Vec<Vec4> = t.voxels(&ts.grid, ts.delta, true).into_iter().map(|i| ts.grid.center(i)).collect();
    if y.is_empty() {
        return Err(Error::EmptyShading);
    }
    let total = y.len() as f64;
    let steps = (1.0 / ts.delta).round().max(1.0) as usize;
    for k in 0..=steps {
        let x = t.center + t.dir * (-0.5 + k as f64 / steps as f64);
        for e in 1..=r_samples.max(1) {
            let r = 0.5f64.powi(e as i32);
            let inside = y.iter().filter(|p| (*p - x).norm() <= r).count() as f64;
            if inside > alpha * r.powf(rho) * total {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Verdict of a voxel in the robust transversality test.
fn voxel_transversal(dirs: &[Vec4], beta: f64) -> bool {
    let m = dirs.len();
    // A cap around any member already holds one tube.
    if 100 > m {
        return false;
    }
    let limit = m as f64 / 100.0;
    let index = DirectionNet::from_points(beta, std::f64::consts::FRAC_PI_2, dirs.to_vec());
    // Any β-cap holding a member lies inside the 2β-cap around that member.
    let upper = dirs.iter().map(|v| index.within(v, 2.0 * beta).len()).max().unwrap_or(0);
    if upper as f64 <= limit {
        return true;
    }
    let lower = dirs.iter().map(|v| index.within(v, beta).len()).max().unwrap_or(0);
    if lower as f64 > limit {
        return false;
    }
    // Undecided: test cap centers on a β/2 grid around each member.
    for v in dirs {
        let basis = crate::sphere_fit::Subspace::<4>::spanned_by(&[*v], 4).basis;
        for a in -4..=4 {
            for b in -4..=4 {
                for c in -4..=4 {
                    let off = basis[1] * f64::from(a) + basis[2] * f64::from(b) + basis[3] * f64::from(c);
                    if off.norm() > 4.0 {
                        continue;
                    }
                    let w = (v + off * (0.5 * beta)).normalize();
                    if index.within(&w, beta).len() as f64 > limit {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// At every voxel of the union of shadings, no β-cap of directions holds more
/// than 1/100 of the shading-tubes through that voxel.
pub fn robust_transversality_check(ts: &TubeSet, beta: f64) -> Result<bool> {
    if !(beta > 0.0) {
        return Err(invalid(format!("beta = {beta} must be positive")));
    }
    let verdicts = ts.layers(true, |pairs| {
        TubeSet::runs(pairs).all(|r| {
            let dirs: Vec<Vec4> = r.iter().map(|&(_, ti)| ts.tubes[ti as usize].dir).collect();
            voxel_transversal(&dirs, beta)
        })
    });
    Ok(verdicts.into_iter().all(|x| x))
}

/// A prism of full side lengths `1 × t1 × t2 × t3`.
#[derive(Debug, Clone, PartialEq)]
pub struct WolffPrism {
    pub center: Vec4,
    pub axes: [Vec4; 4],
    pub t: [f64; 3],
}

impl WolffPrism {
    /// Core inside the prism, with slack δ along the long axis only.
    pub fn contains(&self, tube: &Tube, delta: f64) -> bool {
        let (a, b) = tube.endpoints();
        [a, b].iter().all(|e| {
            let d = e - self.center;
            self.axes[0].dot(&d).abs() <= 0.5 + delta
                && (0..3).all(|k| self.axes[k + 1].dot(&d).abs() <= 0.5 * self.t[k] * (1.0 + 1e-12))
        })
    }

    pub fn allowance(&self, delta: f64) -> f64 {
        100.0 * self.t[0] * self.t[1] * self.t[2] / delta.powi(3)
    }
}

fn orthonormal_completion(first: &Vec4, rng: &mut ChaCha8Rng) -> [Vec4; 4] {
    let hints: Vec<Vec4> = (0..3).map(|_| Vec4::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
    let mut vs = vec![*first];
    vs.extend(hints);
    let b = crate::sphere_fit::Subspace::<4>::spanned_by(&vs, 4).basis;
    [b[0], b[1], b[2], b[3]]
}

/// Randomized falsifier of the linear Wolff axioms. Returns the first
/// violating prism, if any, among `n_prisms` random dyadic prisms aligned with
/// random tubes and `n_prisms` prisms circumscribing random tube triples.
pub fn linear_wolff_violation(ts: &TubeSet, n_prisms: usize, seed: u64) -> Option<(WolffPrism, usize)> {
    if ts.is_empty() {
        return None;
    }
    let d = ts.delta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = ((1.0 / d).log2().floor() as i32).max(0);
    let mut prisms = Vec::with_capacity(2 * n_prisms);
    for _ in 0..n_prisms {
        let t0 = &ts.tubes[rng.random_range(0..ts.len())];
        let mut t = [0.0; 3];
        for x in t.iter_mut() {
            *x = 0.5f64.powi(rng.random_range(0..=levels)).max(d);
        }
        t.sort_by(|a, b| b.total_cmp(a));
        prisms.push(WolffPrism { center: t0.center, axes: orthonormal_completion(&t0.dir, &mut rng), t });
    }
    for _ in 0..n_prisms {
        let ids: Vec<usize> = (0..3).map(|_| rng.random_range(0..ts.len())).collect();
        let first = ts.tubes[ids[0]].dir;
        let mean = ids.iter().fold(Vec4::zeros(), |a, &i| {
            let v = ts.tubes[i].dir;
            a + if v.dot(&first) < 0.0 { -v } else { v }
        });
        let a0 = mean.normalize();
        let ends: Vec<Vec4> = ids
            .iter()
            .flat_map(|&i| {
                let (p, q) = ts.tubes[i].endpoints();
                [p, q]
            })
            .collect();
        let center = ends.iter().fold(Vec4::zeros(), |a, e| a + e) / ends.len() as f64;
        let axes = orthonormal_completion(&a0, &mut rng);
        let mut t = [0.0; 3];
        for k in 0..3 {
            let ext = ends.iter().map(|e| axes[k + 1].dot(&(e - center)).abs()).fold(0.0, f64::max);
            t[k] = (2.0 * ext).max(d);
        }
        prisms.push(WolffPrism { center, axes, t });
    }
    let counts: Vec<usize> = par::map(&prisms, |r| ts.tubes.iter().filter(|t| r.contains(t, d)).count());
    prisms
        .into_iter()
        .zip(counts)
        .find(|(r, c)| *c as f64 > r.allowance(d))
}

pub fn linear_wolff_check(ts: &TubeSet, n_prisms: usize, seed: u64) -> bool {
    linear_wolff_violation(ts, n_prisms, seed).is_none()
}

/// `H(T0)` and the volume of its union of shadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hairbrush {
    pub stem: usize,
    pub members: Vec<usize>,
    pub volume: f64,
}

pub fn hairbrush(ts: &TubeSet, stem: usize) -> Result<Hairbrush> {
    let t0 = ts.tubes.get(stem).ok_or_else(|| invalid(format!("no tube {stem}")))?;
    let y0: FxHashSet<[i32; 4]> = t0.voxels(&ts.grid, ts.delta, true).into_iter().collect();
    if y0.is_empty() {
        return Err(Error::EmptyShading);
    }
    let reach = (2.0 * ts.delta + ts.grid.h).powi(2);
    let member: Vec<bool> = par::map_range(ts.len(), |i| {
        i == stem
            || (seg_seg_dist2(t0, &ts.tubes[i]) <= reach
                && ts.tubes[i].voxels(&ts.grid, ts.delta, true).iter().any(|v| y0.contains(v)))
    });
    let members: Vec<usize> = (0..ts.len()).filter(|&i| member[i]).collect();
    let sub = TubeSet { delta: ts.delta, grid: ts.grid, tubes: members.iter().map(|&i| ts.tubes[i].clone()).collect() };
    Ok(Hairbrush { stem, volume: union_volume(&sub, true), members })
}

/// Which cone the hairbrush bristles follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BrushKind {
    /// Rulings of `x4 = x1² + x2² - x3²` through a stem on that surface.
    Nondegenerate,
    /// Rulings of `x4 = x1 x2` through the x3-axis: two planes per point.
    Planar,
}

/// Tubes along surface rulings through the points of a stem ruling, at
/// direction spacing about δ. Tube 0 is the stem.
pub fn ruled_hairbrush(kind: BrushKind, delta: f64) -> Result<TubeSet> {
    let steps = (1.0 / delta).round() as i32;
    let stem_pts: Vec<f64> = (0..=steps).map(|k| -0.5 + f64::from(k) * delta).filter(|s| *s <= 0.5 + 1e-12).collect();
    let mut tubes = Vec::new();
    match kind {
        BrushKind::Nondegenerate => {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            tubes.push(Tube::new(Vec4::zeros(), Vec4::new(r, 0.0, r, 0.0))?);
            let n_phi = (std::f64::consts::TAU / (delta * std::f64::consts::SQRT_2)).ceil() as usize;
            for &s in &stem_pts {
                let p = Vec4::new(s * r, 0.0, s * r, 0.0);
                for k in 0..n_phi {
                    let phi = std::f64::consts::TAU * k as f64 / n_phi as f64;
                    let v = Vec4::new(phi.cos(), phi.sin(), 1.0, std::f64::consts::SQRT_2 * s * (phi.cos() - 1.0));
                    tubes.push(Tube::new(p, v)?);
                }
            }
        }
        BrushKind::Planar => {
            tubes.push(Tube::new(Vec4::zeros(), Vec4::new(0.0, 0.0, 1.0, 0.0))?);
            let n_th = (std::f64::consts::PI / delta).ceil() as usize;
            for &s in &stem_pts {
                let p = Vec4::new(0.0, 0.0, s, 0.0);
                for k in 0..n_th {
                    let th = std::f64::consts::PI * k as f64 / n_th as f64;
                    tubes.push(Tube::new(p, Vec4::new(0.0, th.cos(), th.sin(), 0.0))?);
                    tubes.push(Tube::new(p, Vec4::new(th.cos(), 0.0, th.sin(), 0.0))?);
                }
            }
        }
    }
    TubeSet::new(delta, tubes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact volume of the δ-neighborhood of a unit segment in R^4.
    fn tube_volume(delta: f64) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * delta.powi(3) + std::f64::consts::PI.powi(2) / 2.0 * delta.powi(4)
    }

    fn e(k: usize) -> Vec4 {
        Vec4::from_fn(|i, _| if i == k { 1.0 } else { 0.0 })
    }

    fn single(delta: f64, c: Vec4, v: Vec4) -> TubeSet {
        TubeSet::new(delta, vec![Tube::new(c, v).unwrap()]).unwrap()
    }

    #[test]
    fn tube_voxels_lie_within_delta() {
        let d = 0.125;
        let ts = single(d, Vec4::new(0.1, -0.05, 0.0, 0.02), Vec4::new(1.0, 0.3, -0.2, 0.1));
        let t = &ts.tubes[0];
        let vox = t.voxels(&ts.grid, d, true);
        assert!(!vox.is_empty());
        for v in vox {
            let x = ts.grid.center(v);
            assert!(seg_point_dist2(&t.center, &t.dir, &x).sqrt() <= d * (1.0 + 1e-6));
        }
    }

    #[test]
    fn union_volume_examples() {
        let d = 0.125;
        let one = union_volume(&single(d, Vec4::zeros(), e(0)), false);
        let exact = tube_volume(d);
        assert!((one / exact - 1.0).abs() <= 0.15, "{one} vs {exact}");

        let two = TubeSet::new(d, vec![Tube::new(Vec4::zeros(), e(0)).unwrap(), Tube::new(Vec4::new(0.0, 0.5, 0.0, 0.0), e(0)).unwrap()]).unwrap();
        assert!((union_volume(&two, false) / (2.0 * one) - 1.0).abs() <= 0.15);

        let same = TubeSet::new(d, vec![Tube::new(Vec4::zeros(), e(0)).unwrap(); 2]).unwrap();
        assert_eq!(union_volume(&same, false), one);
    }

    /// Oracle: Monte Carlo volume of the δ-neighborhood of a segment.
    #[test]
    fn union_volume_matches_monte_carlo() {
        let d = 0.1;
        let ts = single(d, Vec4::new(0.05, 0.0, 0.1, 0.0), Vec4::new(1.0, 0.5, 0.2, -0.3));
        let t = &ts.tubes[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 400_000;
        let half = Vec4::from_fn(|k, _| 0.5 * t.dir[k].abs() + d);
        let mut hit = 0;
        for _ in 0..n {
            let x = t.center + Vec4::from_fn(|k, _| rng.random_range(-half[k]..half[k]));
            if seg_point_dist2(&t.center, &t.dir, &x) <= d * d {
                hit += 1;
            }
        }
        let box_vol: f64 = (0..4).map(|k| 2.0 * half[k]).product();
        let mc = box_vol * hit as f64 / n as f64;
        let grid = union_volume(&ts, false);
        assert!((grid / mc - 1.0).abs() <= 0.15, "{grid} vs {mc}");
    }

    #[test]
    fn norm_examples() {
        let d = 0.125;
        let p = KAKEYA_P;
        let q = dual_exponent(p);
        let ts = single(d, Vec4::zeros(), e(0));
        let vol = union_volume(&ts, false);
        assert!((kakeya_norm(&ts, p).unwrap() - vol.powf(1.0 / q)).abs() < 1e-12);

        let tubes: Vec<Tube> = (0..5).map(|k| Tube::new(Vec4::new(0.0, 0.4 * k as f64 - 0.8, 0.0, 0.0), e(0)).unwrap()).collect();
        let ts = TubeSet::new(d, tubes).unwrap();
        let vol = union_volume(&ts, false);
        assert!((kakeya_norm(&ts, p).unwrap() - vol.powf(1.0 / q)).abs() < 1e-12);
        assert!(kakeya_norm(&ts, 1.0).is_err());
    }

    #[test]
    fn norm_matches_fine_grid() {
        let d = 0.125;
        let net = DirectionNet::build(d, 0.35, 1).unwrap().thinned(d);
        let bush = build_direction_separated(&net, &AnchorRule::Bush, d, 1).unwrap();
        let coarse = kakeya_norm(&bush, KAKEYA_P).unwrap();
        let fine = kakeya_norm(&bush.regridded(d / 8.0).unwrap(), KAKEYA_P).unwrap();
        assert!((coarse / fine - 1.0).abs() <= 0.25, "{coarse} vs {fine}");
    }

    #[test]
    fn norm_interpolation_sanity() {
        let d = 0.125;
        let ts = translated_family(d, FAMILY_CAP, 3).unwrap();
        let mass: f64 = ts.tubes.iter().map(|t| t.voxels(&ts.grid, d, false).len() as f64).sum::<f64>() * ts.grid.voxel_volume();
        assert_eq!(norm_dual(&ts, 1.0), mass);
        let hist = multiplicity_histogram(&ts, false);
        let top = (hist.len() - 1) as f64;
        let normalized = |q: f64| -> f64 { hist.iter().enumerate().map(|(c, &n)| n as f64 * (c as f64 / top).powf(q)).sum() };
        let mut last = f64::INFINITY;
        for q in [1.0, 1.25, 1.5, 2.0, 3.0] {
            let v = normalized(q);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn builders() {
        let d = 0.125;
        let net = DirectionNet::build(d, 0.35, 2).unwrap().thinned(d);
        let bush = build_direction_separated(&net, &AnchorRule::Bush, d, 1).unwrap();
        assert_eq!(bush.len(), net.len());
        for t in &bush.tubes {
            assert!(t.voxels(&bush.grid, d, false).contains(&[0, 0, 0, 0]));
        }
        let tr = translated_family(d, FAMILY_CAP, 1).unwrap();
        assert!(tr.len() >= 100, "{}", tr.len());
        for (i, a) in tr.tubes.iter().enumerate() {
            for b in &tr.tubes[i + 1..] {
                assert!(line_angle(&a.dir, &b.dir) >= d / 2.0);
            }
        }
        assert!(tr.essentially_distinct());
        let stem_c = Vec4::zeros();
        let hb = build_direction_separated(&net, &AnchorRule::Hairbrush { center: stem_c, dir: e(1) }, d, 1).unwrap();
        let stem = Tube::new(stem_c, e(1)).unwrap();
        for t in &hb.tubes {
            assert!(seg_seg_dist2(&stem, t).sqrt() <= d);
        }
    }

    #[test]
    fn two_ends_examples() {
        let d = 0.125;
        let ts = single(d, Vec4::zeros(), e(0));
        assert!(two_ends_check(&ts, 0, 0.1, 2.0, 6).unwrap());
        assert!(two_ends_check(&ts, 0, 0.1, 1e6, 6).unwrap());
        let ball = ts.clone().shaded(Shading::Ball { center: [0.0; 4], radius: d });
        // All of Y sits in one δ-ball: at r = 2^-6 the bound is α·0.66·|Y|.
        assert!(!two_ends_check(&ball, 0, 0.1, 1.0, 6).unwrap());
        assert!(two_ends_check(&ball, 0, 0.1, 2.0, 6).unwrap());
        assert!(two_ends_check(&ball, 0, 0.1, 1e6, 6).unwrap());
        let empty = ts.shaded(Shading::Voxels(vec![]));
        assert!(matches!(two_ends_check(&empty, 0, 0.1, 2.0, 6), Err(Error::EmptyShading)));
    }

    /// At least `n` directions within `cap` of e1, pairwise ≥ `sep` apart.
    fn spread_dirs(n: usize, cap: f64, sep: f64, seed: u64) -> Vec<Vec4> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<Vec4> = Vec::new();
        let mut tries = 0;
        while out.len() < n && tries < 200_000 {
            tries += 1;
            let w = Vec4::new(0.0, rng.random_range(-cap..cap), rng.random_range(-cap..cap), rng.random_range(-cap..cap));
            if w.norm() > cap {
                continue;
            }
            let v = canonicalize_direction(&(e(0) + w)).unwrap();
            if out.iter().all(|u| line_angle(u, &v) >= sep) {
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn transversality_examples() {
        let d = 0.0625;
        let dirs = spread_dirs(220, 1.0, 2.5 * d, 1);
        assert!(dirs.len() >= 200);
        let bush = TubeSet::new(d, dirs.iter().map(|v| Tube::new(Vec4::zeros(), *v).unwrap()).collect()).unwrap().shaded(hub_shading(d));
        assert!(robust_transversality_check(&bush, d).unwrap());

        let near: Vec<Tube> = (0..10).map(|k| Tube::new(Vec4::zeros(), Vec4::new(1.0, 0.001 * k as f64, 0.0, 0.0)).unwrap()).collect();
        assert!(!robust_transversality_check(&TubeSet::new(d, near).unwrap(), 0.1).unwrap());
        assert!(!robust_transversality_check(&single(d, Vec4::zeros(), e(0)), 0.1).unwrap());
    }

    /// Oracle: the decided verdict agrees with a brute-force cap scan.
    #[test]
    fn voxel_transversal_matches_brute_force() {
        let beta = 0.05;
        for (seed, clump) in [(1u64, 0usize), (2, 3), (3, 40)] {
            let mut dirs = spread_dirs(150, 0.8, 0.12, seed);
            for k in 0..clump {
                dirs.push(canonicalize_direction(&(dirs[0] + Vec4::new(0.0, 0.002 * k as f64, 0.0, 0.0))).unwrap());
            }
            let limit = dirs.len() as f64 / 100.0;
            let worst = dirs
                .iter()
                .map(|v| dirs.iter().filter(|w| line_angle(v, w) <= beta).count())
                .max()
                .unwrap();
            let verdict = voxel_transversal(&dirs, beta);
            if worst as f64 > limit {
                assert!(!verdict);
            }
            if clump == 0 {
                assert!(verdict);
            }
        }
    }

    #[test]
    fn linear_wolff_examples() {
        let d = 0.125;
        let tr = translated_family(d, FAMILY_CAP, 5).unwrap();
        assert!(linear_wolff_check(&tr, 200, 1));
        assert!(linear_wolff_check(&single(d, Vec4::zeros(), e(0)), 50, 1));
        let pile = TubeSet::new(d, vec![Tube::new(Vec4::zeros(), e(0)).unwrap(); 200]).unwrap();
        let (r, count) = linear_wolff_violation(&pile, 50, 1).unwrap();
        assert_eq!(count, 200);
        assert!(count as f64 > r.allowance(d));
    }

    #[test]
    fn hairbrush_examples() {
        let d = 0.125;
        let net = DirectionNet::build(d, 0.35, 2).unwrap().thinned(d);
        let bush = build_direction_separated(&net, &AnchorRule::Bush, d, 1).unwrap();
        let h = hairbrush(&bush, 3).unwrap();
        assert_eq!(h.members.len(), bush.len());

        let apart: Vec<Tube> = (0..4).map(|k| Tube::new(Vec4::new(0.0, 0.5 * k as f64 - 0.75, 0.0, 0.0), e(0)).unwrap()).collect();
        let h = hairbrush(&TubeSet::new(d, apart).unwrap(), 1).unwrap();
        assert_eq!(h.members, vec![1]);
    }

    #[test]
    fn ruled_brushes_follow_their_surfaces() {
        let d = 0.0625;
        let nd = ruled_hairbrush(BrushKind::Nondegenerate, d).unwrap();
        for t in &nd.tubes {
            for s in [-0.5, 0.0, 0.5] {
                let x = t.center + t.dir * s;
                assert!((x[3] - x[0] * x[0] - x[1] * x[1] + x[2] * x[2]).abs() < 1e-12);
            }
        }
        let pl = ruled_hairbrush(BrushKind::Planar, d).unwrap();
        for t in &pl.tubes {
            let x = t.center + t.dir * 0.3;
            assert!((x[3] - x[0] * x[1]).abs() < 1e-12);
        }
        let hn = hairbrush(&nd, 0).unwrap();
        let hp = hairbrush(&pl, 0).unwrap();
        assert_eq!(hn.members.len(), nd.len());
        assert!(hn.volume > 2.0 * hp.volume, "{} vs {}", hn.volume, hp.volume);
    }
}

//! Lines, canonical directions, prisms, direction nets and covering numbers.

use nalgebra::{Matrix4, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::poly::Vec4;

pub fn e1() -> Vec4 {
    Vec4::new(1.0, 0.0, 0.0, 0.0)
}

/// Returns `±v/|v|` with the first nonzero of `(v1, v2, v3)` positive, or
/// `(0,0,0,1)` when those vanish.
pub fn canonicalize_direction(v: &Vec4) -> Result<Vec4> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("cannot canonicalize a zero or non-finite vector"));
    }
    let u = v / n;
    let lead = (0..3).map(|k| u[k]).find(|c| *c != 0.0).unwrap_or(u[3]);
    Ok(if lead < 0.0 { -u } else { u })
}

/// Angle between the lines spanned by two unit vectors, in `[0, π/2]`.
#[inline]
pub fn line_angle(a: &Vec4, b: &Vec4) -> f64 {
    // asin of the chord is better conditioned than acos near zero.
    let d = (a - b).norm().min((a + b).norm());
    2.0 * (0.5 * d).min(1.0).asin()
}

#[inline]
fn chord_for_angle(theta: f64) -> f64 {
    2.0 * (0.5 * theta.min(std::f64::consts::PI)).sin()
}

/// An affine line `anchor + t·dir` with canonical unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    #[serde(with = "crate::vec4_serde")]
    pub anchor: Vec4,
    #[serde(with = "crate::vec4_serde")]
    pub dir: Vec4,
}

impl Line {
    pub fn new(anchor: Vec4, dir: Vec4) -> Result<Self> {
        if anchor.norm() > 2.0 + 1e-12 {
            return Err(invalid(format!("anchor norm {} exceeds 2", anchor.norm())));
        }
        Ok(Self { anchor, dir: canonicalize_direction(&dir)? })
    }

    /// The line through `p` with direction `dir`, re-anchored at its point
    /// closest to the origin.
    pub fn through(p: &Vec4, dir: &Vec4) -> Result<Self> {
        let dir = canonicalize_direction(dir)?;
        let anchor = p - dir * p.dot(&dir);
        Ok(Self { anchor, dir })
    }

    #[inline]
    pub fn point(&self, t: f64) -> Vec4 {
        self.anchor + self.dir * t
    }

    /// Point of the line closest to the origin.
    #[inline]
    pub fn foot(&self) -> Vec4 {
        self.anchor - self.dir * self.anchor.dot(&self.dir)
    }

    /// Angle with the e1 axis.
    pub fn angle_to_e1(&self) -> f64 {
        line_angle(&self.dir, &e1())
    }

    /// Distance from `x` to the line.
    pub fn distance_to_point(&self, x: &Vec4) -> f64 {
        let r = x - self.anchor;
        (r - self.dir * r.dot(&self.dir)).norm()
    }
}

/// Line-to-line distance: offset between the feet plus the angle between the
/// directions. Symmetric, and zero exactly for identical lines.
pub fn line_distance(a: &Line, b: &Line) -> f64 {
    (a.foot() - b.foot()).norm() + line_angle(&a.dir, &b.dir)
}

/// Oriented rectangular box with half-lengths sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prism {
    #[serde(with = "crate::vec4_serde")]
    pub center: Vec4,
    pub axes: [[f64; 4]; 4],
    pub half_lengths: [f64; 4],
}

impl Prism {
    pub fn new(center: Vec4, axes: [Vec4; 4], half_lengths: [f64; 4]) -> Result<Self> {
        for (i, a) in axes.iter().enumerate() {
            if (a.norm() - 1.0).abs() > 1e-10 {
                return Err(invalid(format!("prism axis {i} is not unit length")));
            }
            for b in axes.iter().skip(i + 1) {
                if a.dot(b).abs() > 1e-10 {
                    return Err(invalid("prism axes are not orthogonal"));
                }
            }
        }
        if half_lengths.iter().any(|h| !(*h > 0.0)) {
            return Err(invalid("prism half-lengths must be positive"));
        }
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&i, &j| half_lengths[j].total_cmp(&half_lengths[i]));
        Ok(Self {
            center,
            axes: order.map(|i| [axes[i][0], axes[i][1], axes[i][2], axes[i][3]]),
            half_lengths: order.map(|i| half_lengths[i]),
        })
    }

    pub fn axis(&self, k: usize) -> Vec4 {
        Vec4::from(self.axes[k])
    }

    /// Length of the intersection of an infinite line with the prism.
    pub fn chord(&self, line: &Line) -> f64 {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let rel = line.anchor - self.center;
        for k in 0..4 {
            let a = self.axis(k);
            let s = a.dot(&rel);
            let r = a.dot(&line.dir);
            let h = self.half_lengths[k];
            if r.abs() < 1e-300 {
                if s.abs() > h {
                    return 0.0;
                }
                continue;
            }
            let (t0, t1) = ((-h - s) / r, (h - s) / r);
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
        (hi - lo).max(0.0)
    }

    pub fn contains(&self, x: &Vec4, slack: f64) -> bool {
        let rel = x - self.center;
        (0..4).all(|k| self.axis(k).dot(&rel).abs() <= self.half_lengths[k] + slack)
    }
}

/// True iff the line meets the prism in a segment of length at least `2 - tol`.
pub fn line_covered_by_prism(line: &Line, prism: &Prism, tol: f64) -> bool {
    prism.chord(line) >= 2.0 - tol
}

/// Unit vectors orthogonal to `fixed` and to each other, completing it to an
/// orthonormal basis. `hints` are tried first, in order.
fn complete_basis(fixed: &[Vec4], hints: &[Vec4]) -> Vec<Vec4> {
    let mut basis: Vec<Vec4> = fixed.to_vec();
    let std = [
        Vec4::new(1.0, 0.0, 0.0, 0.0),
        Vec4::new(0.0, 1.0, 0.0, 0.0),
        Vec4::new(0.0, 0.0, 1.0, 0.0),
        Vec4::new(0.0, 0.0, 0.0, 1.0),
    ];
    for cand in hints.iter().chain(std.iter()) {
        if basis.len() == 4 {
            break;
        }
        let mut w = *cand;
        // Two Gram-Schmidt passes keep orthogonality at 1e-15.
        for _ in 0..2 {
            for b in &basis {
                w -= b * b.dot(&w);
            }
        }
        let n = w.norm();
        if n > 1e-6 {
            basis.push(w / n);
        }
    }
    basis
}

/// Principal directions of `pts` (already centred), largest variance first.
fn principal_axes(pts: &[Vec4]) -> Vec<Vec4> {
    let mut cov = Matrix4::<f64>::zeros();
    for p in pts {
        cov += p * p.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    idx.into_iter().map(|i| eig.eigenvectors.column(i).into_owned()).collect()
}

/// A greedy prism cover with the covering prism index for every input line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrismCover {
    pub prisms: Vec<Prism>,
    pub assignment: Vec<usize>,
}

/// Covers `lines` by prisms with `long_axes` half-lengths equal to 1 and the
/// remaining half-lengths equal to `t`.
pub fn greedy_prism_cover(lines: &[Line], long_axes: usize, t: f64, tol: f64) -> Result<Vec<Prism>> {
    Ok(greedy_prism_cover_assigned(lines, long_axes, t, tol)?.prisms)
}

pub fn greedy_prism_cover_assigned(lines: &[Line], long_axes: usize, t: f64, tol: f64) -> Result<PrismCover> {
    if !(1..=3).contains(&long_axes) {
        return Err(invalid(format!("long axis count {long_axes} not in 1..=3")));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid(format!("short half-length {t} not in (0,1)")));
    }
    let feet: Vec<Vec4> = lines.iter().map(Line::foot).collect();
    let mut assignment = vec![usize::MAX; lines.len()];
    let mut prisms = Vec::new();
    let mut uncovered: Vec<usize> = (0..lines.len()).collect();
    let half = |k: usize| if k < long_axes { 1.0 } else { t };
    // Neighborhood used to estimate the long directions of a cluster.
    let reach = 0.5f64.max(4.0 * t);

    while let Some(&seed) = uncovered.first() {
        let l = &lines[seed];
        let f0 = feet[seed];
        let near: Vec<usize> = uncovered
            .iter()
            .copied()
            .filter(|&i| line_angle(&lines[i].dir, &l.dir) <= t && (feet[i] - f0).norm() <= reach)
            .collect();
        let mut prism = None;
        if long_axes > 1 && near.len() > 1 {
            let mean = near.iter().fold(Vec4::zeros(), |a, &i| a + feet[i]) / near.len() as f64;
            let centred: Vec<Vec4> = near
                .iter()
                .map(|&i| {
                    let d = feet[i] - mean;
                    d - l.dir * d.dot(&l.dir)
                })
                .collect();
            let pcs = principal_axes(&centred);
            let basis = complete_basis(&[l.dir], &pcs);
            let axes = [basis[0], basis[1], basis[2], basis[3]];
            // Long coordinates from the cluster centroid, short ones from the seed.
            let mut center = Vec4::zeros();
            for (k, a) in axes.iter().enumerate() {
                let src = if k < long_axes { mean } else { f0 };
                center += a * a.dot(&src);
            }
            let p = Prism::new(center, axes, [0, 1, 2, 3].map(half))?;
            if line_covered_by_prism(l, &p, tol) {
                prism = Some(p);
            }
        }
        let prism = match prism {
            Some(p) => p,
            None => {
                let basis = complete_basis(&[l.dir], &[]);
                Prism::new(f0, [basis[0], basis[1], basis[2], basis[3]], [0, 1, 2, 3].map(half))?
            }
        };
        let id = prisms.len();
        uncovered.retain(|&i| {
            if line_covered_by_prism(&lines[i], &prism, tol) {
                assignment[i] = id;
                false
            } else {
                true
            }
        });
        debug_assert_eq!(assignment[seed], id);
        prisms.push(prism);
    }
    Ok(PrismCover { prisms, assignment })
}

/// Affine map `x -> L (x - center)`: rotate the prism's axes onto the standard
/// frame, then stretch the short coordinates by `1/t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub linear: Matrix4<f64>,
    pub center: Vec4,
}

impl AffineMap {
    pub fn apply(&self, x: &Vec4) -> Vec4 {
        self.linear * (x - self.center)
    }

    pub fn inverse(&self) -> AffineInverse {
        AffineInverse {
            linear: self.linear.try_inverse().expect("rescaling maps are invertible"),
            center: self.center,
        }
    }

    /// Image of a line, re-canonicalized.
    pub fn apply_line(&self, l: &Line) -> Result<Line> {
        Line::through(&self.apply(&l.anchor), &(self.linear * l.dir))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineInverse {
    pub linear: Matrix4<f64>,
    pub center: Vec4,
}

impl AffineInverse {
    pub fn apply(&self, y: &Vec4) -> Vec4 {
        self.linear * y + self.center
    }
}

pub fn prism_rescale_map(r: &Prism) -> Result<AffineMap> {
    let long = r.half_lengths.iter().filter(|h| **h >= 1.0 - 1e-9).count();
    let mut linear = Matrix4::zeros();
    for k in 0..4 {
        let h = r.half_lengths[k];
        if !(h > 0.0) {
            return Err(invalid("degenerate prism half-length"));
        }
        let scale = if k < long { 1.0 } else { 1.0 / h };
        for j in 0..4 {
            linear[(k, j)] = scale * r.axes[k][j];
        }
    }
    Ok(AffineMap { linear, center: r.center })
}

/// Hash grid over points in R^4 with a fixed cell size.
struct Grid {
    cell: f64,
    map: FxHashMap<u64, Vec<u32>>,
}

impl Grid {
    fn new(cell: f64) -> Self {
        Self { cell, map: FxHashMap::default() }
    }

    fn key(&self, x: &[f64; 4]) -> [i32; 4] {
        x.map(|c| (c / self.cell).floor() as i32)
    }

    fn insert(&mut self, x: &[f64; 4], id: u32) {
        let k = crate::pack4(self.key(x));
        self.map.entry(k).or_default().push(id);
    }

    fn for_neighbors(&self, x: &[f64; 4], mut f: impl FnMut(u32) -> bool) -> bool {
        let c = self.key(x);
        for a in -1..=1 {
            for b in -1..=1 {
                for d in -1..=1 {
                    for e in -1..=1 {
                        let k = crate::pack4([c[0] + a, c[1] + b, c[2] + d, c[3] + e]);
                        if let Some(ids) = self.map.get(&k) {
                            for &id in ids {
                                if f(id) {
                                    return true;
                                }
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

fn pad(p: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, v) in out.iter_mut().zip(p) {
        *o = *v;
    }
    out
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Indices kept by the greedy net: a point is kept iff it is at distance at
/// least `delta` from every previously kept point.
pub fn greedy_net_indices(points: &[Vec<f64>], delta: f64) -> Vec<usize> {
    if points.iter().any(|p| p.len() > 4) {
        let mut kept: Vec<usize> = Vec::new();
        for (i, p) in points.iter().enumerate() {
            if kept.iter().all(|&j| euclid(p, &points[j]) >= delta) {
                kept.push(i);
            }
        }
        return kept;
    }
    let mut grid = Grid::new(delta);
    let mut kept = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let x = pad(p);
        let close = grid.for_neighbors(&x, |j| euclid(p, &points[j as usize]) < delta);
        if !close {
            grid.insert(&x, i as u32);
            kept.push(i);
        }
    }
    kept
}

/// Greedy δ-net size of a point set in R^n (Euclidean metric).
pub fn covering_number(points: &[Vec<f64>], delta: f64) -> usize {
    greedy_net_indices(points, delta).len()
}

/// Greedy net of line directions under the angle metric; `v` and `-v` are the
/// same point.
pub fn greedy_direction_net(dirs: &[Vec4], delta: f64) -> Vec<usize> {
    let chord = chord_for_angle(delta);
    let mut grid = Grid::new(chord.max(1e-9));
    let mut kept = Vec::new();
    for (i, v) in dirs.iter().enumerate() {
        let close = [*v, -v].iter().any(|w| {
            let x = [w[0], w[1], w[2], w[3]];
            grid.for_neighbors(&x, |j| line_angle(v, &dirs[j as usize]) < delta)
        });
        if !close {
            grid.insert(&[v[0], v[1], v[2], v[3]], i as u32);
            kept.push(i);
        }
    }
    kept
}

/// `E_δ` of a set of line directions on S^3.
pub fn direction_covering_number(dirs: &[Vec4], delta: f64) -> usize {
    greedy_direction_net(dirs, delta).len()
}

/// A δ/2-separated net of unit directions within angle `cap` of e1, with a
/// nearest-point index.
#[derive(Debug, Clone)]
pub struct DirectionNet {
    pub delta: f64,
    pub cap: f64,
    pub points: Vec<Vec4>,
    index: DirIndex,
}

#[derive(Debug, Clone)]
struct DirIndex {
    cell: f64,
    map: FxHashMap<u64, Vec<u32>>,
}

impl DirIndex {
    fn build(points: &[Vec4], cell: f64) -> Self {
        let mut map: FxHashMap<u64, Vec<u32>> = FxHashMap::default();
        for (i, v) in points.iter().enumerate() {
            let k = crate::pack4(crate::cell4(v, cell));
            map.entry(k).or_default().push(i as u32);
        }
        Self { cell, map }
    }

    /// Calls `f` for every point in the cells around `v` and `-v`, expanding
    /// the search by `rings` cells.
    fn scan(&self, v: &Vec4, rings: i32, mut f: impl FnMut(u32)) {
        for w in [*v, -v] {
            let c = crate::cell4(&w, self.cell);
            for a in -rings..=rings {
                for b in -rings..=rings {
                    for d in -rings..=rings {
                        for e in -rings..=rings {
                            let k = crate::pack4([c[0] + a, c[1] + b, c[2] + d, c[3] + e]);
                            if let Some(ids) = self.map.get(&k) {
                                ids.iter().for_each(|&i| f(i));
                            }
                        }
                    }
                }
            }
        }
    }
}

impl DirectionNet {
    /// Jittered grid in exponential coordinates around e1 (cell δ/4), greedily
    /// thinned to δ/2 separation. Covering radius is below δ.
    pub fn build(delta: f64, cap: f64, seed: u64) -> Result<Self> {
        Self::build_separated(delta, cap, seed, 0.5 * delta)
    }

    /// Like [`DirectionNet::build`] with an explicit separation (at least δ/2).
    pub fn build_separated(delta: f64, cap: f64, seed: u64, separation: f64) -> Result<Self> {
        if !(delta > 0.0) || !(cap > 0.0 && cap <= std::f64::consts::FRAC_PI_2) {
            return Err(invalid(format!("bad net parameters delta={delta}, cap={cap}")));
        }
        let h = 0.25 * delta;
        let n = (cap / h).ceil() as i64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cand = Vec::new();
        for i in -n..n {
            for j in -n..n {
                for k in -n..n {
                    let w = [
                        (i as f64 + rng.random::<f64>()) * h,
                        (j as f64 + rng.random::<f64>()) * h,
                        (k as f64 + rng.random::<f64>()) * h,
                    ];
                    let r = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                    if r > cap {
                        continue;
                    }
                    let s = if r > 0.0 { r.sin() / r } else { 1.0 };
                    let v = Vec4::new(r.cos(), s * w[0], s * w[1], s * w[2]);
                    cand.push(canonicalize_direction(&v)?);
                }
            }
        }
        let keep = greedy_direction_net(&cand, separation);
        let points: Vec<Vec4> = keep.into_iter().map(|i| cand[i]).collect();
        Ok(Self::from_points(delta, cap, points))
    }

    pub fn from_points(delta: f64, cap: f64, points: Vec<Vec4>) -> Self {
        let index = DirIndex::build(&points, delta.max(1e-6));
        Self { delta, cap, points, index }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the net point nearest to `v` (as a line direction).
    pub fn nearest(&self, v: &Vec4) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let u = v.normalize();
        let mut best: Option<(f64, u32)> = None;
        let mut rings = 1;
        loop {
            self.index.scan(&u, rings, |i| {
                let a = line_angle(&u, &self.points[i as usize]);
                if best.is_none_or(|(b, j)| a < b || (a == b && i < j)) {
                    best = Some((a, i));
                }
            });
            // A hit within `rings` cells is exact once its angle fits inside them.
            if let Some((a, _)) = best {
                if chord_for_angle(a) <= rings as f64 * self.index.cell {
                    break;
                }
            }
            if rings > 8 {
                for (i, p) in self.points.iter().enumerate() {
                    let a = line_angle(&u, p);
                    if best.is_none_or(|(b, j)| a < b || (a == b && (i as u32) < j)) {
                        best = Some((a, i as u32));
                    }
                }
                break;
            }
            rings += 1;
        }
        best.map(|(_, i)| i as usize)
    }

    /// Indices of net points within angle `r` of `v`, ascending.
    pub fn within(&self, v: &Vec4, r: f64) -> Vec<usize> {
        let u = v.normalize();
        let rings = (chord_for_angle(r) / self.index.cell).ceil().max(1.0) as i32;
        let mut out = Vec::new();
        self.index.scan(&u, rings, |i| {
            if line_angle(&u, &self.points[i as usize]) <= r {
                out.push(i as usize);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Greedy subset at separation `sep`, re-indexed at scale `sep`.
    pub fn thinned(&self, sep: f64) -> Self {
        let keep = greedy_direction_net(&self.points, sep);
        Self::from_points(sep, self.cap, keep.into_iter().map(|i| self.points[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_examples() {
        let c = |v: [f64; 4]| canonicalize_direction(&Vec4::from(v)).unwrap();
        assert_eq!(c([0.0, 0.0, 0.0, -1.0]), Vec4::new(0.0, 0.0, 0.0, 1.0));
        assert_eq!(c([-2.0, 0.0, 0.0, 0.0]), Vec4::new(1.0, 0.0, 0.0, 0.0));
        let v = c([0.0, -0.6, 0.8, 0.0]);
        assert!((v - Vec4::new(0.0, 0.6, -0.8, 0.0)).norm() < 1e-15);
        assert_eq!(c([0.3, -0.2, 0.1, 0.5]), c([-0.3, 0.2, -0.1, -0.5]));
        let once = c([0.0, 0.0, -3.0, 2.0]);
        assert_eq!(canonicalize_direction(&once).unwrap(), once);
        assert!(canonicalize_direction(&Vec4::zeros()).is_err());
    }

    #[test]
    fn covering_examples() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(covering_number(&pts, 0.5), 3);
        assert_eq!(covering_number(&[], 0.5), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let circle: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                vec![a.cos(), a.sin()]
            })
            .collect();
        let n = covering_number(&circle, 0.1);
        assert!((32..=63).contains(&n), "{n}");
        // Oracle: quadratic greedy on the same order.
        let mut kept: Vec<&Vec<f64>> = Vec::new();
        for p in &circle {
            if kept.iter().all(|q| euclid(p, q) >= 0.1) {
                kept.push(p);
            }
        }
        assert_eq!(n, kept.len());
    }

    #[test]
    fn covering_monotone_in_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..3000).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let a = covering_number(&pts, 0.1);
        let b = covering_number(&pts, 0.2);
        let c = covering_number(&pts, 0.4);
        assert!(a >= b && b >= c, "{a} {b} {c}");
    }

    fn axis_prism(s: f64) -> Prism {
        let id = Matrix4::<f64>::identity();
        let ax = [0, 1, 2, 3].map(|k| id.column(k).into_owned());
        Prism::new(Vec4::zeros(), ax, [1.0, s, s, s]).unwrap()
    }

    #[test]
    fn covered_examples() {
        let s = 0.1;
        let r = axis_prism(s);
        let axis = Line::new(Vec4::zeros(), e1()).unwrap();
        assert!(line_covered_by_prism(&axis, &r, 1e-6));
        let tilted = Line::new(Vec4::zeros(), Vec4::new(0.5f64.cos(), 0.5f64.sin(), 0.0, 0.0)).unwrap();
        assert!(!line_covered_by_prism(&tilted, &r, 1e-6));
        let off = Line::new(Vec4::new(0.0, 2.0 * s, 0.0, 0.0), e1()).unwrap();
        assert!(!line_covered_by_prism(&off, &r, 1e-6));
    }

    #[test]
    fn cover_examples() {
        let l = Line::new(Vec4::new(0.0, 0.3, -0.1, 0.2), Vec4::new(1.0, 0.05, 0.0, 0.02)).unwrap();
        let lines = vec![l; 100];
        let cover = greedy_prism_cover(&lines, 1, 0.05, 1e-6).unwrap();
        assert_eq!(cover.len(), 1);
        assert!(greedy_prism_cover(&[], 2, 0.1, 1e-6).unwrap().is_empty());

        let t = 0.05;
        let plane: Vec<Line> = (-18..=18)
            .map(|j| Line::new(Vec4::new(0.0, j as f64 * t, 0.0, 0.0), e1()).unwrap())
            .collect();
        let c = greedy_prism_cover_assigned(&plane, 2, t, 1e-6).unwrap();
        assert!(c.prisms.len() <= 4, "{}", c.prisms.len());
        for (l, &a) in plane.iter().zip(&c.assignment) {
            assert!(line_covered_by_prism(l, &c.prisms[a], 1e-6));
        }
    }

    #[test]
    fn rescale_examples() {
        let id = Matrix4::<f64>::identity();
        let ax = [0, 1, 2, 3].map(|k| id.column(k).into_owned());
        let r = Prism::new(Vec4::zeros(), ax, [1.0, 1.0, 1.0, 0.25]).unwrap();
        let m = prism_rescale_map(&r).unwrap();
        assert_eq!(m.linear, Matrix4::from_diagonal(&Vec4::new(1.0, 1.0, 1.0, 4.0)));
        let unit = Prism::new(Vec4::zeros(), ax, [1.0; 4]).unwrap();
        assert_eq!(prism_rescale_map(&unit).unwrap().linear, id);
        let l = Line::new(Vec4::new(0.0, 0.1, 0.0, 0.05), e1()).unwrap();
        assert!((m.apply_line(&l).unwrap().dir - e1()).norm() < 1e-15);
        let x = Vec4::new(0.3, -0.2, 0.7, 0.1);
        assert!((m.inverse().apply(&m.apply(&x)) - x).norm() < 1e-10);
    }

    #[test]
    fn rescale_separates_directions() {
        // Directions inside a slab of width t that differ by δ spread to ~δ/t.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let id = Matrix4::<f64>::identity();
        let ax = [0, 1, 2, 3].map(|k| id.column(k).into_owned());
        let t = 0.125;
        let r = Prism::new(Vec4::zeros(), ax, [1.0, 1.0, t, t]).unwrap();
        let m = prism_rescale_map(&r).unwrap();
        let delta = 1.0 / 64.0;
        for _ in 0..200 {
            let v = canonicalize_direction(&Vec4::new(1.0, rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))).unwrap();
            let mut w = v;
            w[2] += delta;
            let w = canonicalize_direction(&w).unwrap();
            let a = Line::new(Vec4::zeros(), v).unwrap();
            let b = Line::new(Vec4::zeros(), w).unwrap();
            let da = line_angle(&m.apply_line(&a).unwrap().dir, &m.apply_line(&b).unwrap().dir);
            assert!(da >= 0.5 * delta / t, "{da}");
        }
    }

    #[test]
    fn net_separation_and_coverage() {
        let delta = 1.0 / 16.0;
        let net = DirectionNet::build(delta, 0.3, 9).unwrap();
        for i in 0..net.len() {
            for j in i + 1..net.len() {
                assert!(line_angle(&net.points[i], &net.points[j]) >= delta / 2.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let w = Vec4::new(0.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let r: f64 = rng.random_range(0.0..0.3);
            let v = canonicalize_direction(&(e1() * r.cos() + w.normalize() * r.sin())).unwrap();
            let i = net.nearest(&v).unwrap();
            let brute = net
                .points
                .iter()
                .map(|p| line_angle(p, &v))
                .fold(f64::INFINITY, f64::min);
            assert!((line_angle(&net.points[i], &v) - brute).abs() < 1e-15);
            assert!(brute <= delta);
        }
    }

    #[test]
    fn net_size_scales_cubically() {
        // Frozen regression band for |net| δ^3 on the 0.1-cap.
        for k in 4..=6 {
            let delta = 2f64.powi(-k);
            let n = DirectionNet::build(delta, 0.1, 1).unwrap().len() as f64;
            let c = n * delta.powi(3);
            assert!((0.02..0.2).contains(&c), "delta={delta} n={n} c={c}");
        }
    }
}

//! Splitting an enumerated line set into prism-covered classes 1-3 and a
//! quadric-adjacent class 4.
//!
//! Cells of side δ stand in for points of Z. Each cell visited by some line
//! gets a representative on Z, a curvature size, and (when curved) the set of
//! line directions through it, which the broadness cascade labels. Lines vote
//! with the labels of the cells they cross.

use nalgebra::DMatrix;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::broadness::{classify_directions, BroadParams, DirectionSet, Label};
use crate::curvature::{second_form_from, QuadraticCone};
use crate::error::{invalid, Error, Result};
use crate::geometry::{
    direction_covering_number, greedy_prism_cover_assigned, line_covered_by_prism, line_distance, DirectionNet, Line, Prism,
};
use crate::par;
use crate::poly::{MultiIndex, Polynomial4, Vec4};
use crate::tolerances::Tolerances;
use crate::variety::{
    enumerate_lines, gradient_dyadic_decomposition, newton_project, sample_line_seeds, t_sample, Enumeration, EnumerationMode,
    SeedRegion,
};

/// Width parameters of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionParams {
    pub s: f64,
    pub u: f64,
    pub kappa: f64,
    pub c: f64,
}

impl Default for DecompositionParams {
    fn default() -> Self {
        Self { s: 0.15, u: 0.1, kappa: 0.5, c: 1.0 }
    }
}

impl DecompositionParams {
    /// Narrowness width of the two-circle test.
    pub fn w(&self) -> f64 {
        self.u * self.s * self.kappa * self.c
    }

    pub fn validate(&self, delta: f64) -> Result<()> {
        let ok = 0.0 < delta && delta < self.u && self.u < self.s && self.s < 1.0 && delta < self.kappa && self.kappa < 1.0;
        if !ok {
            return Err(invalid(format!(
                "need 0 < delta < u < s < 1 and delta < kappa < 1, got delta={delta}, u={}, s={}, kappa={}",
                self.u, self.s, self.kappa
            )));
        }
        if !(self.c > delta && self.c <= 2.0) {
            return Err(invalid(format!("c={} must lie in (delta, 2]", self.c)));
        }
        Ok(())
    }

    fn broad(&self) -> BroadParams {
        BroadParams { kappa: self.kappa, s: self.s, u: self.u, w: self.w() }
    }
}

/// A least-squares quadric through a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadricFit {
    pub q: Polynomial4,
    pub residual: f64,
    pub rank: usize,
    pub points_used: usize,
}

impl QuadricFit {
    pub fn is_unique(&self) -> bool {
        self.rank == 14
    }
}

fn quadric_monomials() -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(15);
    for deg in 0..=2u8 {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                for c in (0..=deg - a - b).rev() {
                    out.push([a, b, c, deg - a - b - c]);
                }
            }
        }
    }
    out
}

fn monomial(idx: &MultiIndex, x: &Vec4) -> f64 {
    (0..4).map(|k| x[k].powi(i32::from(idx[k]))).product()
}

/// Smallest right singular vector of the 15-column monomial design matrix,
/// scaled to unit largest coefficient (that coefficient positive).
pub fn fit_quadric(points: &[Vec4], tol: &Tolerances) -> Result<QuadricFit> {
    if points.len() < 14 {
        return Err(Error::InsufficientPoints { needed: 14, got: points.len() });
    }
    let mons = quadric_monomials();
    let a = DMatrix::from_fn(points.len().max(15), 15, |i, j| if i < points.len() { monomial(&mons[j], &points[i]) } else { 0.0 });
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&x| x > tol.rank_rel * smax).count();
    let kmin = sv.imin();
    let coeffs: Vec<f64> = (0..15).map(|j| v_t[(kmin, j)]).collect();
    let (imax, _) = coeffs
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, c)| if c.abs() > acc.1 + 1e-12 { (i, c.abs()) } else { acc });
    let scale = coeffs[imax];
    let q = Polynomial4::new(2, mons.iter().zip(&coeffs).map(|(m, c)| (*m, c / scale)))?;
    let residual = points.iter().map(|x| q.eval(x).abs()).fold(0.0, f64::max);
    Ok(QuadricFit { q, residual, rank, points_used: points.len() })
}

/// Distance from one line to the nearest line found inside Z(Q).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma4Match {
    pub line_id: usize,
    /// `None` when no start produced a line of Z(Q) meeting the unit ball.
    pub distance: Option<f64>,
    pub passed: bool,
}

/// The line of Z(Q) through `z` whose direction is the cone projection of
/// `target.dir`, with its distance to `target`. For a quadric a line through a
/// zero along a cone direction lies in Z(Q) exactly.
fn quadric_line_at(q: &Polynomial4, z: &Vec4, target: &Line, tol: &Tolerances) -> Option<(Line, f64)> {
    let (_, g, h) = q.eval_grad_hess(z);
    if g.norm() < tol.grad_floor {
        return None;
    }
    let v = QuadraticCone { base: *z, linear: g, quad: h }.project(&target.dir)?;
    let l = Line::through(z, &v).ok()?;
    if l.foot().norm() > 1.0 {
        return None;
    }
    Some((l, line_distance(&l, target)))
}

/// Nearest line of Z(Q) to `target`. Starts from projections of points of
/// `target` onto Z(Q), then pattern-searches the anchor along the tangent
/// frame, re-projecting onto Z(Q) after each move.
pub fn nearest_quadric_line(q: &Polynomial4, target: &Line, starts: usize, tol: &Tolerances) -> Option<(Line, f64)> {
    search_quadric_line(q, target, starts, 0.0, tol)
}

/// Like [`nearest_quadric_line`], but returns as soon as some line is within
/// `stop_below`.
fn search_quadric_line(q: &Polynomial4, target: &Line, starts: usize, stop_below: f64, tol: &Tolerances) -> Option<(Line, f64)> {
    const MAX_MOVES: usize = 400;
    let mut best: Option<(Line, f64)> = None;
    for k in 0..starts {
        let x = target.point(t_sample(k, starts));
        let Some(mut z) = newton_project(q, &x, tol) else { continue };
        let Some(mut cur) = quadric_line_at(q, &z, target, tol) else { continue };
        let mut h = 0.1;
        let mut moves = 0;
        while h > 1e-7 && cur.1 > stop_below && moves < MAX_MOVES {
            moves += 1;
            let g = q.gradient(&z);
            let Ok(frame) = crate::curvature::phi_frame(&g) else { break };
            let mut moved = false;
            for f in &frame[1..] {
                for sgn in [1.0, -1.0] {
                    let y = z + f * (sgn * h / g.norm());
                    let Some(z2) = newton_project(q, &y, tol) else { continue };
                    if let Some(c) = quadric_line_at(q, &z2, target, tol) {
                        if c.1 < cur.1 {
                            cur = c;
                            z = z2;
                            moved = true;
                        }
                    }
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|b| cur.1 < b.1) {
            best = Some(cur);
        }
        if best.as_ref().is_some_and(|b| b.1 <= stop_below) {
            break;
        }
    }
    best
}

pub fn verify_sigma4(
    lines: &[(usize, Line)],
    quadric: &QuadricFit,
    tol_factor: f64,
    delta: f64,
    tol: &Tolerances,
) -> Result<Vec<Sigma4Match>> {
    if !quadric.is_unique() {
        return Err(Error::DegenerateQuadric { rank: quadric.rank });
    }
    Ok(par::map(lines, |(id, l)| {
        let d = search_quadric_line(&quadric.q, l, 8, tol_factor * delta, tol).map(|(_, d)| d);
        Sigma4Match { line_id: *id, distance: d, passed: d.is_some_and(|d| d <= tol_factor * delta) }
    }))
}

/// `E_δ` of the set of line directions (exact duplicates collapse first).
pub fn direction_count(lines: &[Line], delta: f64) -> usize {
    let mut seen = rustc_hash::FxHashSet::default();
    let dirs: Vec<Vec4> = lines
        .iter()
        .filter(|l| seen.insert(l.dir.map(f64::to_bits).data.0))
        .map(|l| l.dir)
        .collect();
    direction_covering_number(&dirs, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    /// Representative not found or gradient below the floor; does not vote.
    Singular,
    Labeled(Label),
}

/// Counts of cells by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub total: usize,
    pub singular: usize,
    pub flat: usize,
    pub narrow1: usize,
    pub narrow22: usize,
    pub broad: usize,
}

/// One class's prism cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCover {
    pub class: u8,
    pub long_axes: usize,
    pub short_half_length: f64,
    pub prisms: Vec<Prism>,
    /// Prism index for each line of the class, in line order.
    pub assignment: Vec<u32>,
    /// Lines of the class not covered by their assigned prism.
    pub uncovered: usize,
    /// `|cover| / (shape · log2(1/δ))` with shape `s⁻²`, `u⁻¹`, `1`.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicSummary {
    pub level: i32,
    pub sample_points: usize,
    pub lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub delta: f64,
    pub params: DecompositionParams,
    pub w: f64,
    pub n_lines: usize,
    /// Class 1..=4 per line id.
    pub class_of: Vec<u8>,
    pub class_counts: [usize; 4],
    pub covers: Vec<ClassCover>,
    pub cells: CellStats,
    pub dyadic: Vec<DyadicSummary>,
    pub quadric: Option<QuadricFit>,
    /// Verified class-4 lines (an evenly strided subset when class 4 is large).
    pub sigma4: Vec<Sigma4Match>,
    pub sigma4_matched_fraction: Option<f64>,
    pub direction_count: usize,
}

impl DecompositionReport {
    pub fn cover_sound(&self) -> bool {
        self.covers.iter().all(|c| c.uncovered == 0)
    }

    pub fn partition_total(&self) -> bool {
        self.class_of.len() == self.n_lines
            && self.class_of.iter().all(|c| (1..=4).contains(c))
            && self.class_counts.iter().sum::<usize>() == self.n_lines
    }
}

/// Caps on the work spent on class 4.
const QUADRIC_POINTS: usize = 4000;
const SIGMA4_LINES: usize = 2000;

fn stride_of(delta: f64, n_t: usize) -> usize {
    ((delta * n_t as f64 / 4.0).floor() as usize).max(1)
}

/// Cell keys crossed by line `i`, consecutive repeats removed.
fn line_cells(e: &Enumeration, i: usize, stride: usize, out: &mut Vec<u64>) {
    out.clear();
    let l = &e.lines[i];
    let mut last = None;
    for (n, k) in e.hit_samples(i).enumerate() {
        if n % stride != 0 {
            continue;
        }
        let key = crate::pack4(crate::cell4(&l.point(t_sample(k, e.n_t)), e.delta));
        if last != Some(key) {
            out.push(key);
            last = Some(key);
        }
    }
}

fn chunks(n: usize, size: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(size)).map(|c| (c * size, ((c + 1) * size).min(n))).collect()
}

fn unpack4(key: u64) -> [i32; 4] {
    let mut c = [0i32; 4];
    for (j, slot) in c.iter_mut().enumerate() {
        *slot = ((key >> (16 * (3 - j))) & 0xffff) as i32 - 32768;
    }
    c
}

struct CellInfo {
    rep: Option<Vec4>,
    ii: f64,
    gnorm: f64,
}

/// Runs the decomposition on an existing enumeration.
pub fn decompose_enumeration(
    p: &Polynomial4,
    e: &Enumeration,
    net: &DirectionNet,
    params: &DecompositionParams,
    seed: u64,
    tol: &Tolerances,
) -> Result<DecompositionReport> {
    let delta = e.delta;
    params.validate(delta)?;
    let stride = stride_of(delta, e.n_t);
    let line_chunks = chunks(e.len(), 4096);

    // Pass 1: distinct cells.
    let parts: Vec<Vec<u64>> = par::map(&line_chunks, |&(a, b)| {
        let mut buf = Vec::new();
        let mut acc = Vec::new();
        for i in a..b {
            line_cells(e, i, stride, &mut buf);
            acc.extend_from_slice(&buf);
        }
        acc.sort_unstable();
        acc.dedup();
        acc
    });
    let mut keys: Vec<u64> = parts.into_iter().flatten().collect();
    keys.sort_unstable();
    keys.dedup();
    let index: FxHashMap<u64, u32> = keys.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();

    let info: Vec<CellInfo> = par::map(&keys, |&k| {
        let c = unpack4(k);
        let center = Vec4::from_fn(|j, _| (f64::from(c[j]) + 0.5) * delta);
        let rep = newton_project(p, &center, tol).filter(|z| (z - center).norm() <= 2.0 * delta);
        match rep {
            Some(z) => {
                let (_, g, h) = p.eval_grad_hess(&z);
                let gnorm = g.norm();
                let ii = if gnorm >= tol.grad_floor { second_form_from(&z, &g, &h).inf_norm() } else { f64::NAN };
                CellInfo { rep: Some(z), ii, gnorm }
            }
            None => CellInfo { rep: None, ii: f64::NAN, gnorm: 0.0 },
        }
    });
    let curved: Vec<bool> = info.iter().map(|c| c.rep.is_some() && c.ii > params.kappa).collect();

    // Pass 2: direction sets of curved cells, as (cell, net direction) pairs.
    let pair_parts: Vec<Vec<u64>> = par::map(&line_chunks, |&(a, b)| {
        let mut buf = Vec::new();
        let mut acc = Vec::new();
        for i in a..b {
            line_cells(e, i, stride, &mut buf);
            for key in &buf {
                let ci = index[key];
                if curved[ci as usize] {
                    acc.push(u64::from(ci) << 32 | u64::from(e.dir_index[i]));
                }
            }
        }
        acc.sort_unstable();
        acc.dedup();
        acc
    });
    let mut pairs: Vec<u64> = pair_parts.into_iter().flatten().collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut groups: Vec<(u32, std::ops::Range<usize>)> = Vec::new();
    let mut start = 0;
    for i in 1..=pairs.len() {
        if i == pairs.len() || pairs[i] >> 32 != pairs[start] >> 32 {
            groups.push(((pairs[start] >> 32) as u32, start..i));
            start = i;
        }
    }
    drop(index);

    let bp = params.broad();
    let curved_labels: Vec<(u32, Label)> = par::map(&groups, |(ci, range)| {
        let cell = &info[*ci as usize];
        let dirs: Vec<Vec4> = pairs[range.clone()].iter().map(|&x| net.points[(x & 0xffff_ffff) as usize]).collect();
        let v = DirectionSet::new(cell.rep.unwrap_or_else(Vec4::zeros), dirs, delta);
        let cell_seed = seed ^ (u64::from(*ci)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        (*ci, classify_directions(cell.ii, &v, &bp, cell_seed, tol).label)
    });
    let mut kind: Vec<CellKind> = info
        .iter()
        .map(|c| if c.rep.is_none() || c.ii.is_nan() { CellKind::Singular } else { CellKind::Labeled(Label::Flat) })
        .collect();
    for (ci, l) in curved_labels {
        kind[ci as usize] = CellKind::Labeled(l);
    }
    let mut cells = CellStats { total: kind.len(), ..Default::default() };
    for k in &kind {
        match k {
            CellKind::Singular => cells.singular += 1,
            CellKind::Labeled(Label::Flat) => cells.flat += 1,
            CellKind::Labeled(Label::Narrow1) => cells.narrow1 += 1,
            CellKind::Labeled(Label::Narrow22) => cells.narrow22 += 1,
            CellKind::Labeled(Label::Broad) => cells.broad += 1,
        }
    }

    // Pass 3: votes.
    let keys_ref = &keys;
    let votes: Vec<Vec<(u8, Option<u32>)>> = par::map(&line_chunks, |&(a, b)| {
        let mut buf = Vec::new();
        (a..b)
            .map(|i| {
                line_cells(e, i, stride, &mut buf);
                let mut n = [0usize; 4];
                let mut first_voter = None;
                for key in &buf {
                    let ci = keys_ref.binary_search(key).expect("cell from pass 1") as u32;
                    if let CellKind::Labeled(l) = kind[ci as usize] {
                        n[l as usize] += 1;
                        first_voter.get_or_insert(ci);
                    }
                }
                let total: usize = n.iter().sum();
                let third = |x: usize| total > 0 && 3 * x >= total;
                let class = if third(n[Label::Flat as usize]) {
                    3
                } else if third(n[Label::Narrow1 as usize]) {
                    1
                } else if third(n[Label::Narrow22 as usize]) {
                    2
                } else {
                    4
                };
                (class, first_voter)
            })
            .collect()
    });
    let votes: Vec<(u8, Option<u32>)> = votes.into_iter().flatten().collect();
    let class_of: Vec<u8> = votes.iter().map(|v| v.0).collect();
    let mut class_counts = [0usize; 4];
    for &c in &class_of {
        class_counts[c as usize - 1] += 1;
    }

    // Covers.
    let log = (1.0 / delta).log2();
    let mut covers = Vec::new();
    for (class, long_axes, half, shape) in [
        (1u8, 1usize, params.s / 2.0, params.s.powi(-2)),
        (2, 2, params.u / 2.0, 1.0 / params.u),
        (3, 3, params.kappa / 2.0, 1.0),
    ] {
        let members: Vec<Line> = e.lines.iter().zip(&class_of).filter(|(_, &c)| c == class).map(|(l, _)| *l).collect();
        let cover = greedy_prism_cover_assigned(&members, long_axes, half, tol.cover)?;
        let checks: Vec<bool> = par::map_range(members.len(), |i| {
            line_covered_by_prism(&members[i], &cover.prisms[cover.assignment[i]], tol.cover)
        });
        covers.push(ClassCover {
            class,
            long_axes,
            short_half_length: half,
            constant: cover.prisms.len() as f64 / (shape * log),
            uncovered: checks.iter().filter(|ok| !**ok).count(),
            assignment: cover.assignment.iter().map(|&a| a as u32).collect(),
            prisms: cover.prisms,
        });
    }

    // Gradient-dyadic pieces: lines go to the level of their first voting cell.
    let mut dyadic: Vec<DyadicSummary> = Vec::new();
    let mut level_of = FxHashMap::default();
    for ci in votes.iter().filter_map(|v| v.1) {
        let lvl = crate::variety::dyadic_level(info[ci as usize].gnorm);
        *level_of.entry(lvl).or_insert(0usize) += 1;
    }
    let reps: Vec<crate::variety::SurfacePoint> = info
        .iter()
        .filter_map(|c| c.rep.filter(|_| c.gnorm >= tol.grad_floor).map(|z| crate::variety::SurfacePoint { z, grad: p.gradient(&z) }))
        .collect();
    if !reps.is_empty() {
        let sample = crate::variety::SurfaceSample { delta, points: reps };
        for piece in gradient_dyadic_decomposition(p, &sample, delta)? {
            dyadic.push(DyadicSummary {
                level: piece.level,
                sample_points: piece.region.len(),
                lines: level_of.get(&piece.level).copied().unwrap_or(0),
            });
        }
    }

    // Class 4: quadric through the representatives of cells its lines cross.
    let class4: Vec<usize> = (0..e.len()).filter(|&i| class_of[i] == 4).collect();
    let mut q_cells: Vec<u32> = Vec::new();
    {
        let mut buf = Vec::new();
        for &i in &class4 {
            line_cells(e, i, stride, &mut buf);
            for key in &buf {
                let ci = keys.binary_search(key).expect("cell from pass 1") as u32;
                if matches!(kind[ci as usize], CellKind::Labeled(_)) {
                    q_cells.push(ci);
                }
            }
        }
    }
    q_cells.sort_unstable();
    q_cells.dedup();
    let step = q_cells.len().div_ceil(QUADRIC_POINTS).max(1);
    let q_points: Vec<Vec4> = q_cells.iter().step_by(step).filter_map(|&ci| info[ci as usize].rep).collect();
    let quadric = if q_points.len() >= 14 { Some(fit_quadric(&q_points, tol)?) } else { None };
    let mut sigma4 = Vec::new();
    if let Some(qf) = quadric.as_ref().filter(|q| q.is_unique()) {
        let step = class4.len().div_ceil(SIGMA4_LINES).max(1);
        let chosen: Vec<(usize, Line)> = class4.iter().step_by(step).map(|&i| (i, e.lines[i])).collect();
        sigma4 = verify_sigma4(&chosen, qf, 10.0, delta, tol)?;
    }
    let sigma4_matched_fraction =
        (!sigma4.is_empty()).then(|| sigma4.iter().filter(|m| m.passed).count() as f64 / sigma4.len() as f64);

    Ok(DecompositionReport {
        delta,
        params: *params,
        w: params.w(),
        n_lines: e.len(),
        class_of,
        class_counts,
        covers,
        cells,
        dyadic,
        quadric,
        sigma4,
        sigma4_matched_fraction,
        direction_count: direction_count(&e.lines, delta),
    })
}

/// Samples Z(P), enumerates Σ̂ at `(δ, c)`, and decomposes it.
pub fn severi_decompose(
    p: &Polynomial4,
    delta: f64,
    params: &DecompositionParams,
    seed: u64,
    tol: &Tolerances,
) -> Result<(Enumeration, DecompositionReport)> {
    params.validate(delta)?;
    let region = SeedRegion::slices_for(p.degree(), params.c, delta);
    let sample = sample_line_seeds(p, delta, region, tol.cap_angle, tol)?;
    let net = DirectionNet::build(delta, tol.cap_angle, seed)?;
    let e = enumerate_lines(p, &sample, &net, delta, params.c, tol, EnumerationMode::Full)?;
    let report = decompose_enumeration(p, &e, &net, params, seed, tol)?;
    Ok((e, report))
}

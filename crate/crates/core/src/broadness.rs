//! Narrow/broad labels for the direction set at a surface point.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::curvature::second_fundamental_form;
use crate::error::{invalid, Result};
use crate::geometry::{line_angle, DirectionNet};
use crate::poly::{Polynomial4, Vec4};
use crate::sphere_fit::{fit_great_subspaces, Subspace};
use crate::tolerances::Tolerances;

/// Canonical directions of lines through (near) `base`, at net scale `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub base: Vec4,
    pub dirs: Vec<Vec4>,
    pub delta: f64,
}

impl DirectionSet {
    pub fn new(base: Vec4, dirs: Vec<Vec4>, delta: f64) -> Self {
        Self { base, dirs, delta }
    }
}

/// A great m-sphere of S³: the unit vectors of an (m+1)-dimensional subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreatSphere {
    pub basis: Vec<[f64; 4]>,
}

impl GreatSphere {
    fn from_subspace(s: &Subspace<4>) -> Self {
        Self { basis: s.basis.iter().map(|b| [b[0], b[1], b[2], b[3]]).collect() }
    }

    pub fn angle(&self, v: &Vec4) -> f64 {
        let s = Subspace::<4> { basis: self.basis.iter().map(|b| Vector4::from(*b)).collect() };
        s.angle(&v.normalize())
    }
}

/// Covers `V.dirs` by `a` great `m`-spheres within angle `u`, or `None`.
pub fn narrow_fit(v: &DirectionSet, m: usize, a: usize, u: f64, seed: u64, tol: &Tolerances) -> Result<Option<Vec<GreatSphere>>> {
    if !(1..=2).contains(&m) || !(1..=3).contains(&a) {
        return Err(invalid(format!("narrow fit needs m in 1..=2 and A in 1..=3, got m={m}, A={a}")));
    }
    if !(u > v.delta) {
        return Err(invalid(format!("narrow width u={u} must exceed the net scale {}", v.delta)));
    }
    Ok(narrow_fit_unchecked(&v.dirs, m, a, u, seed, tol))
}

fn narrow_fit_unchecked(dirs: &[Vec4], m: usize, a: usize, u: f64, seed: u64, tol: &Tolerances) -> Option<Vec<GreatSphere>> {
    let fit = fit_great_subspaces(dirs, a, m + 1, tol.fit_restarts, seed, u);
    (fit.max_angle <= u).then(|| fit.subspaces.iter().map(GreatSphere::from_subspace).collect())
}

/// Connected components of the adjacency graph (angle ≤ `radius`), as index lists.
pub fn direction_components(dirs: &[Vec4], radius: f64) -> Vec<Vec<usize>> {
    let n = dirs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let index = DirectionNet::from_points(radius, std::f64::consts::FRAC_PI_2, dirs.to_vec());
    for i in 0..n {
        for j in index.within(&dirs[i], radius) {
            if j > i {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn diameter_at_least(dirs: &[Vec4], comp: &[usize], s: f64) -> bool {
    let a = &dirs[comp[0]];
    let far = comp.iter().map(|&j| line_angle(a, &dirs[j])).fold(0.0, f64::max);
    if far >= s {
        return true;
    }
    if 2.0 * far < s {
        return false;
    }
    comp.iter()
        .enumerate()
        .any(|(k, &i)| comp[k + 1..].iter().any(|&j| line_angle(&dirs[i], &dirs[j]) >= s))
}

fn diameter(dirs: &[Vec4], comp: &[usize]) -> f64 {
    let mut d = 0.0f64;
    for (k, &i) in comp.iter().enumerate() {
        for &j in &comp[k + 1..] {
            d = d.max(line_angle(&dirs[i], &dirs[j]));
        }
    }
    d
}

/// Largest angular diameter over the adjacency components at radius
/// `factor · delta`.
pub fn component_diameter(v: &DirectionSet, factor: f64) -> f64 {
    direction_components(&v.dirs, factor * v.delta)
        .iter()
        .map(|c| diameter(&v.dirs, c))
        .fold(0.0, f64::max)
}

/// True iff some adjacency component (edges at angle ≤ 3δ) has diameter ≥ `s`.
pub fn sbroad_test(v: &DirectionSet, s: f64, tol: &Tolerances) -> Result<bool> {
    if !(s > 2.0 * v.delta) {
        return Err(invalid(format!("s={s} must exceed twice the net scale {}", v.delta)));
    }
    Ok(sbroad_unchecked(v, s, tol))
}

fn sbroad_unchecked(v: &DirectionSet, s: f64, tol: &Tolerances) -> bool {
    direction_components(&v.dirs, tol.adjacency_factor * v.delta)
        .iter()
        .any(|c| diameter_at_least(&v.dirs, c, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BroadParams {
    pub kappa: f64,
    pub s: f64,
    pub u: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Flat,
    Narrow1,
    Narrow22,
    Broad,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Flat => "flat",
            Label::Narrow1 => "narrow1",
            Label::Narrow22 => "narrow22",
            Label::Broad => "broad",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadLabel {
    pub label: Label,
    pub ii_inf_norm: f64,
    /// Number of adjacency components (the A of a (1,A)-narrow label).
    pub components: usize,
    pub component_diameter: f64,
    /// The two fitted circles of a Narrow22 label.
    pub circles: Option<Vec<GreatSphere>>,
    pub params: BroadParams,
}

/// The cascade Flat → Narrow1 → Narrow22 → Broad given `‖II‖∞` at the point.
///
/// The Narrow22 step fits two great circles (m = 1): every direction set lies
/// in the tangent hyperplane already, so two great 2-spheres would always fit.
/// When `w` does not exceed the net scale no cover that thin can be certified
/// and the step is skipped.
pub fn classify_directions(ii_inf_norm: f64, v: &DirectionSet, params: &BroadParams, seed: u64, tol: &Tolerances) -> BroadLabel {
    let mut out = BroadLabel {
        label: Label::Flat,
        ii_inf_norm,
        components: 0,
        component_diameter: 0.0,
        circles: None,
        params: *params,
    };
    if ii_inf_norm <= params.kappa {
        return out;
    }
    let comps = direction_components(&v.dirs, tol.adjacency_factor * v.delta);
    out.components = comps.len();
    let broad1 = comps.iter().any(|c| diameter_at_least(&v.dirs, c, params.s));
    if !broad1 {
        out.label = Label::Narrow1;
        out.component_diameter = comps.iter().map(|c| diameter(&v.dirs, c)).fold(0.0, f64::max);
        return out;
    }
    out.component_diameter = params.s;
    if params.w > v.delta {
        if let Some(c) = narrow_fit_unchecked(&v.dirs, 1, 2, params.w, seed, tol) {
            out.label = Label::Narrow22;
            out.circles = Some(c);
            return out;
        }
    }
    out.label = Label::Broad;
    out
}

pub fn classify_point(
    p: &Polynomial4,
    z: &Vec4,
    v: &DirectionSet,
    params: &BroadParams,
    seed: u64,
    tol: &Tolerances,
) -> Result<BroadLabel> {
    if v.dirs.is_empty() {
        return Err(invalid("empty direction set"));
    }
    let ii = second_fundamental_form(p, z, tol)?;
    Ok(classify_directions(ii.inf_norm(), v, params, seed, tol))
}

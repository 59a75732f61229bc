//! The φ-frame, the second fundamental form, quadratic cones, and the
//! degeneracy dichotomy for ternary quadratic forms.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::canonicalize_direction;
use crate::poly::{Polynomial4, Vec4};
use crate::sphere_fit::fit_great_subspaces;
use crate::tolerances::Tolerances;

/// `(φ0, φ1, φ2, φ3)(g)`: `g` and three signed coordinate permutations of it,
/// pairwise orthogonal with equal norms.
pub fn phi_frame(g: &Vec4) -> Result<[Vec4; 4]> {
    if !(g.norm() > 0.0) {
        return Err(invalid("phi frame of the zero vector"));
    }
    let [x1, x2, x3, x4] = [g[0], g[1], g[2], g[3]];
    Ok([
        *g,
        Vec4::new(-x2, x1, -x4, x3),
        Vec4::new(-x3, x4, x1, -x2),
        Vec4::new(-x4, -x3, x2, x1),
    ])
}

/// II(z) in the normalized φ-frame of ∇P(z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondForm {
    #[serde(with = "crate::vec4_serde")]
    pub base: Vec4,
    pub matrix: [[f64; 3]; 3],
    pub frame: [[f64; 4]; 3],
}

impl SecondForm {
    /// Largest entry magnitude.
    pub fn inf_norm(&self) -> f64 {
        self.matrix.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn as_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.matrix[i][j])
    }
}

fn check_grad(g: &Vec4, tol: &Tolerances) -> Result<()> {
    let n = g.norm();
    if n < tol.grad_floor {
        return Err(Error::SingularPoint { grad_norm: n, floor: tol.grad_floor });
    }
    Ok(())
}

/// `a_ij = (φ_i·∇)(φ_j·∇)P(z)` with the φ_i frozen at `∇P(z)`, divided by
/// `|∇P(z)|^3`. Constant-coefficient directional derivatives compose to the
/// Hessian form, so `a_ij = φ_iᵀ H φ_j`.
pub fn second_fundamental_form(p: &Polynomial4, z: &Vec4, tol: &Tolerances) -> Result<SecondForm> {
    let (_, g, h) = p.eval_grad_hess(z);
    check_grad(&g, tol)?;
    Ok(second_form_from(z, &g, &h))
}

pub(crate) fn second_form_from(z: &Vec4, g: &Vec4, h: &Matrix4<f64>) -> SecondForm {
    let phi = phi_frame(g).expect("gradient checked nonzero");
    let n = g.norm();
    let n3 = n * n * n;
    let mut matrix = [[0.0; 3]; 3];
    for i in 0..3 {
        let hp = h * phi[i + 1];
        for j in 0..3 {
            matrix[i][j] = phi[j + 1].dot(&hp) / n3;
        }
    }
    // Exact symmetry; the two products differ only by rounding.
    for i in 0..3 {
        for j in i + 1..3 {
            let m = 0.5 * (matrix[i][j] + matrix[j][i]);
            matrix[i][j] = m;
            matrix[j][i] = m;
        }
    }
    let frame = [1, 2, 3].map(|k| {
        let f = phi[k] / n;
        [f[0], f[1], f[2], f[3]]
    });
    SecondForm { base: *z, matrix, frame }
}

/// `{v : v·∇P(z) = 0, vᵀ H v = 0}` at a regular point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCone {
    pub base: Vec4,
    pub linear: Vec4,
    pub quad: Matrix4<f64>,
}

pub fn quadratic_cone(p: &Polynomial4, z: &Vec4, tol: &Tolerances) -> Result<QuadraticCone> {
    let (_, g, h) = p.eval_grad_hess(z);
    check_grad(&g, tol)?;
    Ok(QuadraticCone { base: *z, linear: g, quad: h })
}

impl QuadraticCone {
    /// Orthonormal tangent frame (the normalized φ-frame).
    pub fn frame(&self) -> [Vec4; 3] {
        let phi = phi_frame(&self.linear).expect("regular point");
        let n = self.linear.norm();
        [phi[1] / n, phi[2] / n, phi[3] / n]
    }

    /// The second constraint restricted to the tangent space, in frame coordinates.
    pub fn tangent_form(&self) -> QuadForm3 {
        let f = self.frame();
        QuadForm3 { m: Matrix3::from_fn(|i, j| f[i].dot(&(self.quad * f[j]))) }
    }

    /// Both constraints at a unit vector, scale-free: `(|v·ĝ|, |vᵀHv| / ‖H‖)`.
    pub fn residuals(&self, v: &Vec4) -> (f64, f64) {
        let hn = self.quad.norm();
        let q = (v.transpose() * self.quad * v)[0];
        (v.dot(&self.linear).abs() / self.linear.norm(), if hn > 0.0 { q.abs() / hn } else { 0.0 })
    }

    pub fn contains(&self, v: &Vec4, tol_cone: f64) -> bool {
        let u = v.normalize();
        let (a, b) = self.residuals(&u);
        a <= tol_cone && b <= tol_cone
    }

    /// Unit cone directions (canonical) at spherical resolution `res`.
    pub fn samples(&self, res: f64) -> Vec<Vec4> {
        let f = self.frame();
        self.tangent_form()
            .zero_set_on_sphere(res)
            .into_iter()
            .filter_map(|u| canonicalize_direction(&(f[0] * u[0] + f[1] * u[1] + f[2] * u[2])).ok())
            .collect()
    }

    /// Local projection of `v` onto the cone: drop the normal component, then
    /// Newton on `vᵀHv` within the tangent sphere.
    pub fn project(&self, v: &Vec4) -> Option<Vec4> {
        let f = self.frame();
        let u = Vector3::new(f[0].dot(v), f[1].dot(v), f[2].dot(v));
        if u.norm() < 1e-12 {
            return None;
        }
        let a = self.tangent_form();
        let u = a.project_to_zero_set(&u.normalize())?;
        Some(f[0] * u[0] + f[1] * u[1] + f[2] * u[2])
    }

    /// Angle from `v` to its local cone projection (π/2 when none exists).
    pub fn angular_distance(&self, v: &Vec4) -> f64 {
        match self.project(v) {
            Some(w) => crate::geometry::line_angle(&v.normalize(), &w),
            None => std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Homogeneous quadratic form `xᵀ m x` on R^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadForm3 {
    pub m: Matrix3<f64>,
}

impl QuadForm3 {
    /// From monomial coefficients of `x1², x2², x3², x1x2, x1x3, x2x3`.
    pub fn from_coeffs(c: [f64; 6]) -> Self {
        let [a11, a22, a33, a12, a13, a23] = c;
        Self { m: Matrix3::new(a11, a12 / 2.0, a13 / 2.0, a12 / 2.0, a22, a23 / 2.0, a13 / 2.0, a23 / 2.0, a33) }
    }

    pub fn coeffs(&self) -> [f64; 6] {
        let m = &self.m;
        [m[(0, 0)], m[(1, 1)], m[(2, 2)], 2.0 * m[(0, 1)], 2.0 * m[(0, 2)], 2.0 * m[(1, 2)]]
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs().iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn normalized(&self) -> Self {
        let s = self.max_abs_coeff();
        if s == 0.0 {
            *self
        } else {
            Self { m: self.m / s }
        }
    }

    #[inline]
    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        (x.transpose() * self.m * x)[0]
    }

    /// Newton within the unit sphere toward `Q = 0`.
    pub fn project_to_zero_set(&self, x: &Vector3<f64>) -> Option<Vector3<f64>> {
        let scale = self.m.norm();
        if scale == 0.0 {
            return Some(x.normalize());
        }
        let mut u = x.normalize();
        for _ in 0..60 {
            let q = self.eval(&u);
            if q.abs() <= 1e-15 * scale {
                return Some(u);
            }
            let g = self.m * u * 2.0;
            let gt = g - u * g.dot(&u);
            let n2 = gt.norm_squared();
            if n2 < 1e-24 * scale * scale {
                return None;
            }
            u = (u - gt * (q / n2)).normalize();
        }
        (self.eval(&u).abs() <= 1e-12 * scale).then_some(u)
    }

    /// Points of `Z(Q) ∩ S²`, roughly `res` apart. The whole sphere for `Q ≡ 0`.
    pub fn zero_set_on_sphere(&self, res: f64) -> Vec<Vector3<f64>> {
        let n = ((4.0 * std::f64::consts::PI) / (res * res)).ceil() as usize;
        let grid = fibonacci_sphere(n.max(8));
        let scale = self.m.norm();
        if scale == 0.0 {
            return grid;
        }
        let mut pts: Vec<Vector3<f64>> = Vec::new();
        for x in &grid {
            let q = self.eval(x);
            let g = self.m * x * 2.0;
            let gt = (g - x * g.dot(x)).norm();
            if q.abs() > 2.0 * res * gt + 4.0 * scale * res * res {
                continue;
            }
            if let Some(u) = self.project_to_zero_set(x) {
                if (u - x).norm() <= 3.0 * res {
                    pts.push(u);
                }
            }
        }
        let flat: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0], p[1], p[2]]).collect();
        crate::geometry::greedy_net_indices(&flat, 0.5 * res)
            .into_iter()
            .map(|i| pts[i])
            .collect()
    }
}

/// Fibonacci lattice on S².
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            Vector3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

/// A line through the origin of R², `{x : normal · x = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneLine {
    pub normal: [f64; 2],
}

impl PlaneLine {
    fn from(n: [f64; 2]) -> Self {
        let l = (n[0] * n[0] + n[1] * n[1]).sqrt();
        Self { normal: [n[0] / l, n[1] / l] }
    }

    pub fn distance(&self, x: [f64; 2]) -> f64 {
        (self.normal[0] * x[0] + self.normal[1] * x[1]).abs()
    }
}

/// The two lines `S1, S2` whose neighborhoods contain the sublevel sets of
/// `Q = a11 x1² + a12 x1x2 + a22 x2²`.
///
/// Generic case: normals `(a12 ± Re√(a12² - 4 a11 a22), 2 a22)`. With `a22 = 0`
/// that formula collapses, and `Q = x1 (a11 x1 + a12 x2)` is factored directly.
pub fn quadratic_curve_neighborhood(a11: f64, a12: f64, a22: f64) -> Result<[PlaneLine; 2]> {
    let m = a11.abs().max(a12.abs()).max(a22.abs());
    if m == 0.0 {
        return Err(invalid("quadratic curve of the zero form"));
    }
    if (m - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("largest coefficient magnitude is {m}, expected 1")));
    }
    if a22 != 0.0 {
        let disc = a12 * a12 - 4.0 * a11 * a22;
        let root = if disc > 0.0 { disc.sqrt() } else { 0.0 };
        return Ok([PlaneLine::from([a12 + root, 2.0 * a22]), PlaneLine::from([a12 - root, 2.0 * a22])]);
    }
    let second = if a12 != 0.0 || a11 != 0.0 { [a11, a12] } else { [1.0, 0.0] };
    Ok([PlaneLine::from([1.0, 0.0]), PlaneLine::from(second)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DegeneracyVerdict {
    /// The zero set on S² lies within `w` of two great circles, given by normals.
    Degenerate { circles: [[f64; 3]; 2], witness_w: f64 },
    NonDegenerate { witness_w: f64 },
}

impl DegeneracyVerdict {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, DegeneracyVerdict::Degenerate { .. })
    }

    pub fn witness(&self) -> f64 {
        match self {
            DegeneracyVerdict::Degenerate { witness_w, .. } | DegeneracyVerdict::NonDegenerate { witness_w } => *witness_w,
        }
    }
}

fn check_unit(q: &QuadForm3) -> Result<()> {
    let m = q.max_abs_coeff();
    if (m - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("largest coefficient magnitude is {m}, expected 1")));
    }
    Ok(())
}

/// Best two great circles for `Z(Q) ∩ S²` sampled at resolution `w/8`.
pub fn fit_two_circles(samples: &[Vector3<f64>], restarts: usize, seed: u64) -> ([Vector3<f64>; 2], f64) {
    if samples.is_empty() {
        return ([Vector3::x(), Vector3::x()], 0.0);
    }
    let fit = fit_great_subspaces(samples, 2, 2, restarts, seed, 0.0);
    ([fit.subspaces[0].normal(), fit.subspaces[1].normal()], fit.max_angle)
}

pub fn degeneracy_test(q: &QuadForm3, w: f64, seed: u64, tol: &Tolerances) -> Result<DegeneracyVerdict> {
    check_unit(q)?;
    if !(w > 0.0 && w < 0.5) {
        return Err(invalid(format!("w = {w} not in (0, 1/2)")));
    }
    let samples = q.zero_set_on_sphere(w / 8.0);
    let (n, worst) = fit_two_circles(&samples, tol.fit_restarts, seed);
    Ok(if worst <= w {
        DegeneracyVerdict::Degenerate { circles: n.map(|v| [v[0], v[1], v[2]]), witness_w: worst }
    } else {
        DegeneracyVerdict::NonDegenerate { witness_w: worst }
    })
}

/// Largest constants for which each branch of the dichotomy holds for `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyConstants {
    pub degenerate: bool,
    /// `min |Q|/w²` over sphere points farther than `w` from the circles.
    pub c_degenerate: Option<f64>,
    /// `min |Q(x)| / (w² dist(x, Z))` over sphere points.
    pub c_regular: f64,
}

impl DichotomyConstants {
    pub fn holds(&self, c: f64) -> bool {
        self.c_degenerate.is_some_and(|a| c <= a) || c <= self.c_regular
    }

    pub fn best(&self) -> f64 {
        self.c_degenerate.unwrap_or(0.0).max(self.c_regular)
    }
}

pub fn dichotomy_constants(q: &QuadForm3, w: f64, seed: u64, tol: &Tolerances) -> Result<DichotomyConstants> {
    let verdict = degeneracy_test(q, w, seed, tol)?;
    let res = w / 8.0;
    let zeros = q.zero_set_on_sphere(res);
    let grid = fibonacci_sphere(((4.0 * std::f64::consts::PI) / (w * w / 16.0)).ceil() as usize);
    let dist_z = |x: &Vector3<f64>| -> f64 {
        zeros
            .iter()
            .map(|z| 2.0 * (0.5 * (x - z).norm()).min(1.0).asin())
            .fold(f64::INFINITY, f64::min)
    };
    let w2 = w * w;
    let mut c_regular = f64::INFINITY;
    for x in &grid {
        let d = dist_z(x);
        if d < res {
            continue;
        }
        c_regular = c_regular.min(q.eval(x).abs() / (w2 * d));
    }
    let c_degenerate = match &verdict {
        DegeneracyVerdict::Degenerate { circles, .. } => {
            let ns = circles.map(Vector3::from);
            let mut c = f64::INFINITY;
            for x in &grid {
                let d = ns.iter().map(|n| n.dot(x).abs().min(1.0).asin()).fold(f64::INFINITY, f64::min);
                if d > w {
                    c = c.min(q.eval(x).abs() / w2);
                }
            }
            Some(c)
        }
        DegeneracyVerdict::NonDegenerate { .. } => None,
    };
    Ok(DichotomyConstants { degenerate: verdict.is_degenerate(), c_degenerate, c_regular })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn phi_frame_examples() {
        let f = phi_frame(&Vec4::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(f[1], Vec4::new(0.0, 0.0, -1.0, 0.0));
        assert_eq!(f[2], Vec4::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(f[3], Vec4::new(-1.0, 0.0, 0.0, 0.0));
        assert_eq!(phi_frame(&Vec4::new(1.0, 0.0, 0.0, 0.0)).unwrap()[1][1], 1.0);
        let g = Vec4::new(0.3, -1.2, 0.7, 2.0);
        let f = phi_frame(&g).unwrap();
        for i in 0..4 {
            assert!((f[i].norm() - g.norm()).abs() < 1e-12);
            for j in i + 1..4 {
                assert!(f[i].dot(&f[j]).abs() < 1e-12);
            }
        }
        assert!(phi_frame(&Vec4::zeros()).is_err());
    }

    #[test]
    fn second_form_examples() {
        let t = tol();
        let z = Vec4::zeros();
        let ii = second_fundamental_form(&Polynomial4::coordinate(3), &Vec4::new(0.2, 0.1, 0.0, 0.0), &t).unwrap();
        assert_eq!(ii.inf_norm(), 0.0);

        // Graph of f = |x'|²/2. The φ-frame at e4 maps (φ1, φ2, φ3) to
        // (-e3, e2, -e1), and II = -Sᵀ Hess f S = -I for this f.
        let p = poly4!(2; [0,0,0,1] => 1, [2,0,0,0] => -0.5, [0,2,0,0] => -0.5, [0,0,2,0] => -0.5);
        let ii = second_fundamental_form(&p, &z, &t).unwrap();
        assert_eq!(ii.as_matrix(), -Matrix3::identity());

        let p = poly4!(2; [0,0,0,1] => 1, [1,1,0,0] => -1);
        let ii = second_fundamental_form(&p, &z, &t).unwrap();
        assert_eq!(ii.matrix, [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
        assert_eq!(ii.inf_norm(), 1.0);

        let sing = poly4!(2; [2,0,0,0] => 1, [0,2,0,0] => -1);
        assert!(matches!(second_fundamental_form(&sing, &z, &t), Err(Error::SingularPoint { .. })));
    }

    #[test]
    fn second_form_scale_invariant() {
        let t = tol();
        let p = poly4!(3; [0,0,0,1] => 1, [2,1,0,0] => 0.7, [0,0,2,0] => -0.4, [1,0,1,0] => 0.3);
        let z = Vec4::new(0.1, 0.2, -0.3, 0.05);
        let base = second_fundamental_form(&p, &z, &t).unwrap().as_matrix();
        for s in [1e-3, 1.0, 1e3] {
            let m = second_fundamental_form(&p.scaled(s), &z, &t).unwrap().as_matrix();
            assert!((m - base).abs().max() <= 1e-8);
        }
    }

    #[test]
    fn cone_examples() {
        let t = tol();
        let c = quadratic_cone(&Polynomial4::coordinate(3), &Vec4::new(0.1, 0.0, 0.0, 0.0), &t).unwrap();
        let s = c.samples(0.1);
        assert!(s.len() > 500);
        assert!(s.iter().all(|v| v[3].abs() < 1e-12));

        let p = poly4!(2; [1,1,0,0] => 1, [0,0,1,1] => -1);
        let c = quadratic_cone(&p, &Vec4::new(1.0, 0.0, 0.0, 0.0), &t).unwrap();
        let s = c.samples(0.02);
        assert!(!s.is_empty());
        for v in &s {
            assert!(v[1].abs() < 1e-12 && (v[2] * v[3]).abs() < 1e-9);
            assert!(c.contains(v, t.cone));
        }

        let p = poly4!(2; [0,0,0,1] => 1, [2,0,0,0] => -1, [0,2,0,0] => -1, [0,0,2,0] => 1);
        let c = quadratic_cone(&p, &Vec4::zeros(), &t).unwrap();
        for v in c.samples(0.02) {
            assert!(v[3].abs() < 1e-12);
            assert!((v[2] * v[2] - v[0] * v[0] - v[1] * v[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn cone_projection_lands_on_cone() {
        let t = tol();
        let p = poly4!(2; [0,0,0,1] => 1, [2,0,0,0] => -1, [0,2,0,0] => -1, [0,0,2,0] => 1);
        let c = quadratic_cone(&p, &Vec4::zeros(), &t).unwrap();
        let w = c.project(&Vec4::new(0.8, 0.1, 0.6, 0.05)).unwrap();
        assert!(c.contains(&w, t.cone));
        assert!(c.angular_distance(&w) < 1e-9);
    }

    #[test]
    fn curve_neighborhood_examples() {
        let s = quadratic_curve_neighborhood(1.0, 0.0, -1.0).unwrap();
        let on = |l: &PlaneLine, x: [f64; 2]| l.distance(x) < 1e-12;
        assert!(s.iter().any(|l| on(l, [1.0, 1.0])) && s.iter().any(|l| on(l, [1.0, -1.0])));
        let s = quadratic_curve_neighborhood(1.0, 0.0, 1.0).unwrap();
        assert_eq!(s[0], s[1]);
        let s = quadratic_curve_neighborhood(0.0, 1.0, 0.0).unwrap();
        assert!(s.iter().any(|l| on(l, [0.0, 1.0])) && s.iter().any(|l| on(l, [1.0, 0.0])));
        assert!(quadratic_curve_neighborhood(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn curve_neighborhood_contains_sublevel_sets() {
        // Frozen constant: {|Q| ≤ t} ∩ unit disk ⊂ N_{C√t}(S1 ∪ S2) with C = 3.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let mut c: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let m = c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            c.iter_mut().for_each(|x| *x /= m);
            let s = quadratic_curve_neighborhood(c[0], c[1], c[2]).unwrap();
            for _ in 0..500 {
                let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let q = (c[0] * x[0] * x[0] + c[1] * x[0] * x[1] + c[2] * x[1] * x[1]).abs();
                for t in [1e-3, 1e-2, 1e-1] {
                    if q <= t {
                        let d = s[0].distance(x).min(s[1].distance(x));
                        worst = worst.max(d / t.sqrt());
                    }
                }
            }
        }
        assert!(worst <= 3.0, "{worst}");
    }

    #[test]
    fn degeneracy_examples() {
        let t = tol();
        let v = degeneracy_test(&QuadForm3::from_coeffs([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.1, 1, &t).unwrap();
        let DegeneracyVerdict::Degenerate { circles, .. } = v else { panic!("{v:?}") };
        for n in circles {
            assert!((n[0].abs() - 1.0).abs() < 1e-6);
        }
        let v = degeneracy_test(&QuadForm3::from_coeffs([1.0, -1.0, 0.0, 0.0, 0.0, 0.0]), 0.05, 2, &t).unwrap();
        let DegeneracyVerdict::Degenerate { circles, .. } = v else { panic!("{v:?}") };
        for n in circles {
            assert!(n[2].abs() < 1e-6 && (n[0].abs() - n[1].abs()).abs() < 1e-6);
        }
        for w in [0.1, 0.2, 0.3] {
            let v = degeneracy_test(&QuadForm3::from_coeffs([1.0, 1.0, -1.0, 0.0, 0.0, 0.0]), w, 3, &t).unwrap();
            assert!(!v.is_degenerate(), "w={w}: {v:?}");
        }
        assert!(degeneracy_test(&QuadForm3::from_coeffs([2.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.1, 1, &t).is_err());
    }

    /// Oracle: brute-force search over a grid of great-circle pairs.
    #[test]
    fn nondegenerate_by_brute_force() {
        let q = QuadForm3::from_coeffs([1.0, 1.0, -1.0, 0.0, 0.0, 0.0]);
        let zs = q.zero_set_on_sphere(0.05);
        let normals = fibonacci_sphere(400);
        let dist = |n: &Vector3<f64>, x: &Vector3<f64>| n.dot(x).abs().asin();
        let mut best = f64::INFINITY;
        for (i, a) in normals.iter().enumerate() {
            for b in normals.iter().skip(i) {
                let worst = zs.iter().map(|x| dist(a, x).min(dist(b, x))).fold(0.0, f64::max);
                best = best.min(worst);
            }
        }
        assert!(best > 0.3, "{best}");
    }

    #[test]
    fn flat_sample_lies_near_hyperplane() {
        // Frozen constant: TLS hyperplane contains the sample within 2κ.
        let t = tol();
        for kappa in [0.05, 0.1, 0.2] {
            let p = poly4!(2; [0,0,0,1] => 1, [2,0,0,0] => -kappa / 2.0, [0,2,0,0] => -kappa / 2.0, [1,0,1,0] => kappa / 4.0);
            let s = crate::variety::sample_surface(&p, 0.125, &t).unwrap();
            // Entries of II are bounded by the spectral norm of the graph Hessian.
            let hf = Matrix3::new(kappa, 0.0, -kappa / 4.0, 0.0, kappa, 0.0, -kappa / 4.0, 0.0, 0.0);
            let bound = hf.symmetric_eigenvalues().abs().max();
            let ii = s.points.iter().map(|q| second_fundamental_form(&p, &q.z, &t).unwrap().inf_norm()).fold(0.0, f64::max);
            assert!(ii <= bound * (1.0 + 1e-9), "{ii} > {bound}");
            let mean = s.points.iter().fold(Vec4::zeros(), |a, q| a + q.z) / s.len() as f64;
            let mut cov = Matrix4::zeros();
            for q in &s.points {
                let d = q.z - mean;
                cov += d * d.transpose();
            }
            let eig = nalgebra::SymmetricEigen::new(cov);
            let n = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
            let worst = s.points.iter().map(|q| (q.z - mean).dot(&n).abs()).fold(0.0, f64::max);
            assert!(worst <= 2.0 * kappa, "kappa={kappa}: {worst}");
        }
    }

    #[test]
    fn curved_escape_volume() {
        // |N_a(Z) ∩ N_b(H)| ≤ C a (b/κ)^{1/2} for Z = {x4 = κ|x'|²/2}, H = {x4 = 0}.
        // Membership uses the vertical distance, which bounds the true one.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = 0.02;
        for (kappa, b) in [(1.0, 0.01), (1.0, 0.04), (2.0, 0.02)] {
            let n = 400_000;
            let mut hit = 0usize;
            for _ in 0..n {
                let x = Vec4::from_fn(|_, _| rng.random_range(-1.0..1.0));
                if x.norm() > 1.0 {
                    continue;
                }
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                if (x[3] - 0.5 * kappa * r2).abs() <= a && x[3].abs() <= b {
                    hit += 1;
                }
            }
            let vol = 16.0 * hit as f64 / n as f64;
            assert!(vol <= 10.0 * a * (b / kappa).sqrt(), "{vol}");
        }
    }
}

//! Dense real polynomials in four variables and their univariate restrictions.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

pub type Vec4 = Vector4<f64>;

/// Exponent vector `(i1, i2, i3, i4)`.
pub type MultiIndex = [u8; 4];

fn total_degree(idx: &MultiIndex) -> usize {
    idx.iter().map(|&e| e as usize).sum()
}

/// A real polynomial in `x1..x4` with total degree at most `degree_bound`.
///
/// Coefficients are stored keyed by multi-index; zero coefficients are never
/// stored. A flattened copy of the terms is kept for fast evaluation.
#[derive(Clone, PartialEq)]
pub struct Polynomial4 {
    coeffs: BTreeMap<MultiIndex, f64>,
    degree_bound: usize,
    terms: Vec<(MultiIndex, f64)>,
}

impl fmt::Debug for Polynomial4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial4(deg<={}; {})", self.degree_bound, self)
    }
}

impl fmt::Display for Polynomial4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (idx, c)) in self.terms.iter().enumerate() {
            match (k, c.is_sign_negative()) {
                (0, _) => write!(f, "{c}")?,
                (_, true) => write!(f, " - {}", -c)?,
                (_, false) => write!(f, " + {c}")?,
            }
            for (var, &e) in idx.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", var + 1)?,
                    _ => write!(f, "*x{}^{}", var + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

impl Polynomial4 {
    /// Builds a polynomial from `(multi-index, coefficient)` pairs. Repeated
    /// indices are summed.
    pub fn new(degree_bound: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        if degree_bound < 1 {
            return Err(invalid("degree bound must be at least 1"));
        }
        let mut coeffs = BTreeMap::new();
        for (idx, c) in terms {
            if total_degree(&idx) > degree_bound {
                return Err(invalid(format!(
                    "monomial {idx:?} exceeds degree bound {degree_bound}"
                )));
            }
            if !c.is_finite() {
                return Err(invalid(format!("non-finite coefficient for {idx:?}")));
            }
            *coeffs.entry(idx).or_insert(0.0) += c;
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(Self::from_map(coeffs, degree_bound))
    }

    fn from_map(coeffs: BTreeMap<MultiIndex, f64>, degree_bound: usize) -> Self {
        let terms = coeffs.iter().map(|(k, v)| (*k, *v)).collect();
        Self { coeffs, degree_bound, terms }
    }

    /// The coordinate function `x_{k+1}` (k is zero-based).
    pub fn coordinate(k: usize) -> Self {
        let mut idx = [0u8; 4];
        idx[k] = 1;
        Self::new(1, [(idx, 1.0)]).expect("valid monomial")
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    /// Largest total degree among stored monomials (0 for constants).
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(i, _)| total_degree(i)).max().unwrap_or(0)
    }

    pub fn terms(&self) -> &[(MultiIndex, f64)] {
        &self.terms
    }

    pub fn coeff(&self, idx: MultiIndex) -> f64 {
        self.coeffs.get(&idx).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, (_, c)| m.max(c.abs()))
    }

    /// Divides by the largest coefficient magnitude, so that the largest
    /// coefficient becomes exactly `+-1`.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs_coeff();
        if m == 0.0 {
            return self.clone();
        }
        self.scaled(1.0 / m).with_exact_unit_max(m, self)
    }

    fn with_exact_unit_max(mut self, m: f64, orig: &Self) -> Self {
        // Pin the maximal coefficients to exactly +-1 regardless of rounding.
        for (idx, c) in orig.coeffs.iter() {
            if c.abs() == m {
                self.coeffs.insert(*idx, c.signum());
            }
        }
        Self::from_map(self.coeffs, self.degree_bound)
    }

    pub fn scaled(&self, t: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, c)| (*k, c * t))
            .filter(|(_, c)| *c != 0.0)
            .collect();
        Self::from_map(coeffs, self.degree_bound)
    }

    /// `self + constant`.
    pub fn plus_constant(&self, w: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        *coeffs.entry([0; 4]).or_insert(0.0) += w;
        coeffs.retain(|_, c| *c != 0.0);
        Self::from_map(coeffs, self.degree_bound)
    }

    /// Evaluates at `x`. Monomials are assembled from a table of powers, so
    /// integer inputs at integer points evaluate exactly within f64 range.
    pub fn eval(&self, x: &Vec4) -> f64 {
        let pw = powers(x, self.degree_bound);
        self.terms
            .iter()
            .map(|(idx, c)| c * pw[0][idx[0] as usize] * pw[1][idx[1] as usize] * pw[2][idx[2] as usize] * pw[3][idx[3] as usize])
            .sum()
    }

    /// Value and gradient in one pass.
    pub fn eval_grad(&self, x: &Vec4) -> (f64, Vec4) {
        let pw = powers(x, self.degree_bound);
        let mut val = 0.0;
        let mut g = Vec4::zeros();
        for (idx, c) in &self.terms {
            let f = [
                pw[0][idx[0] as usize],
                pw[1][idx[1] as usize],
                pw[2][idx[2] as usize],
                pw[3][idx[3] as usize],
            ];
            val += c * f[0] * f[1] * f[2] * f[3];
            for k in 0..4 {
                let e = idx[k] as usize;
                if e == 0 {
                    continue;
                }
                let mut prod = c * e as f64 * pw[k][e - 1];
                for (j, fj) in f.iter().enumerate() {
                    if j != k {
                        prod *= fj;
                    }
                }
                g[k] += prod;
            }
        }
        (val, g)
    }

    pub fn gradient(&self, x: &Vec4) -> Vec4 {
        self.eval_grad(x).1
    }

    /// Value, gradient and Hessian.
    pub fn eval_grad_hess(&self, x: &Vec4) -> (f64, Vec4, Matrix4<f64>) {
        let pw = powers(x, self.degree_bound);
        let mut val = 0.0;
        let mut g = Vec4::zeros();
        let mut h = Matrix4::zeros();
        for (idx, c) in &self.terms {
            let e: [usize; 4] = [idx[0] as usize, idx[1] as usize, idx[2] as usize, idx[3] as usize];
            // d^a/dx^a of x^e, for a in {0,1,2}.
            let d = |k: usize, a: usize| -> f64 {
                match a {
                    0 => pw[k][e[k]],
                    1 if e[k] >= 1 => e[k] as f64 * pw[k][e[k] - 1],
                    2 if e[k] >= 2 => (e[k] * (e[k] - 1)) as f64 * pw[k][e[k] - 2],
                    _ => 0.0,
                }
            };
            let base = [d(0, 0), d(1, 0), d(2, 0), d(3, 0)];
            val += c * base[0] * base[1] * base[2] * base[3];
            for k in 0..4 {
                if e[k] == 0 {
                    continue;
                }
                let mut p = c * d(k, 1);
                for j in 0..4 {
                    if j != k {
                        p *= base[j];
                    }
                }
                g[k] += p;
                for l in k..4 {
                    let mut q = *c;
                    if l == k {
                        q *= d(k, 2);
                        for j in 0..4 {
                            if j != k {
                                q *= base[j];
                            }
                        }
                    } else {
                        if e[l] == 0 {
                            continue;
                        }
                        q *= d(k, 1) * d(l, 1);
                        for j in 0..4 {
                            if j != k && j != l {
                                q *= base[j];
                            }
                        }
                    }
                    h[(k, l)] += q;
                    if l != k {
                        h[(l, k)] += q;
                    }
                }
            }
        }
        (val, g, h)
    }

    pub fn hessian(&self, x: &Vec4) -> Matrix4<f64> {
        self.eval_grad_hess(x).2
    }

    /// `(v . grad)^j P (x)` for `j` in 1..=3.
    ///
    /// Computed exactly from the Taylor coefficients of `t -> P(x + t v)`:
    /// the degree-`j` derivative tensor contracted with `v` j times equals
    /// `j!` times the `t^j` coefficient.
    pub fn directional_derivative(&self, x: &Vec4, v: &Vec4, order: usize) -> Result<f64> {
        if !(1..=3).contains(&order) {
            return Err(invalid(format!("derivative order {order} not in 1..=3")));
        }
        let q = self.restrict(x, v);
        let factorial = [1.0, 1.0, 2.0, 6.0][order];
        Ok(factorial * q.coeffs.get(order).copied().unwrap_or(0.0))
    }

    /// The univariate polynomial `t -> P(anchor + t dir)`.
    pub fn restrict(&self, anchor: &Vec4, dir: &Vec4) -> UniPoly {
        self.restrict_on(&LinePowers::new(anchor, dir, self.degree_bound))
    }

    /// `restrict` with the coordinate powers precomputed; `lp` must cover
    /// this polynomial's degree bound.
    pub(crate) fn restrict_on(&self, lp: &LinePowers) -> UniPoly {
        debug_assert!(lp.degree >= self.degree_bound);
        let d = self.degree_bound;
        let mut out = [0.0; POW_N];
        for (idx, c) in &self.terms {
            let mut buf = [0.0; POW_N];
            buf[0] = *c;
            let mut deg = 0;
            for k in 0..4 {
                let e = idx[k] as usize;
                if e == 0 {
                    continue;
                }
                let f = &lp.lin[k][e];
                let mut tmp = [0.0; POW_N];
                for i in 0..=deg {
                    if buf[i] == 0.0 {
                        continue;
                    }
                    for j in 0..=e {
                        tmp[i + j] += buf[i] * f[j];
                    }
                }
                deg += e;
                buf = tmp;
            }
            for i in 0..=deg {
                out[i] += buf[i];
            }
        }
        UniPoly { coeffs: out[..=d].to_vec() }
    }

    /// Upper bound for `|grad P|` on the ball of radius `r`, from the
    /// coefficient magnitudes.
    pub fn gradient_bound(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|(idx, c)| {
                let n = total_degree(idx);
                if n == 0 {
                    0.0
                } else {
                    c.abs() * n as f64 * r.powi(n as i32 - 1)
                }
            })
            .sum()
    }

    /// Upper bound for the operator norm of the Hessian on the ball of radius `r`.
    pub fn hessian_bound(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|(idx, c)| {
                let n = total_degree(idx);
                if n < 2 {
                    0.0
                } else {
                    c.abs() * (n * (n - 1)) as f64 * r.powi(n as i32 - 2)
                }
            })
            .sum()
    }

    /// Monte-Carlo estimate of `|{x in omega : |P(x)| <= lambda sup_omega |P|}|`.
    ///
    /// The supremum is estimated from the same sample.
    pub fn sublevel_measure<R: Rng>(
        &self,
        omega: &AxisBox,
        lambda: f64,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<MeasureEstimate> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid(format!("lambda = {lambda} must lie in (0, 1)")));
        }
        if n_samples < 10_000 {
            return Err(invalid("sublevel_measure needs at least 10^4 samples"));
        }
        let vol = omega.volume();
        if !(vol > 0.0) {
            return Err(invalid("empty box"));
        }
        let vals: Vec<f64> = (0..n_samples)
            .map(|_| {
                let x = omega.sample(rng);
                self.eval(&x).abs()
            })
            .collect();
        let sup = vals.iter().cloned().fold(0.0, f64::max);
        let thresh = lambda * sup;
        let hits = vals.iter().filter(|&&v| v <= thresh).count() as f64;
        let p = hits / n_samples as f64;
        Ok(MeasureEstimate {
            value: p * vol,
            std_err: vol * (p * (1.0 - p) / n_samples as f64).sqrt(),
        })
    }
}

fn powers(x: &Vec4, d: usize) -> [[f64; 8]; 4] {
    // Degree is capped at 6 by the scenario loader; 8 leaves headroom.
    debug_assert!(d < 8, "degree bound {d} exceeds the power table");
    let mut pw = [[1.0; 8]; 4];
    for k in 0..4 {
        for e in 1..=d.min(7) {
            pw[k][e] = pw[k][e - 1] * x[k];
        }
    }
    pw
}

/// Maximum supported degree bound.
pub const MAX_DEGREE: usize = 7;

const POW_N: usize = MAX_DEGREE + 1;

/// Coefficients of `(a_k + t v_k)^e` for every coordinate `k` and `e <= degree`.
pub(crate) struct LinePowers {
    lin: [[[f64; POW_N]; POW_N]; 4],
    degree: usize,
}

impl LinePowers {
    pub(crate) fn new(anchor: &Vec4, dir: &Vec4, degree: usize) -> Self {
        let mut lin = [[[0.0; POW_N]; POW_N]; 4];
        for k in 0..4 {
            lin[k][0][0] = 1.0;
            for e in 1..=degree {
                for i in 0..e {
                    let p = lin[k][e - 1][i];
                    lin[k][e][i] += p * anchor[k];
                    lin[k][e][i + 1] += p * dir[k];
                }
            }
        }
        Self { lin, degree }
    }
}

/// Axis-aligned box in R^4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl AxisBox {
    pub fn cube(half: f64) -> Self {
        Self { lo: [-half; 4], hi: [half; 4] }
    }

    pub fn volume(&self) -> f64 {
        (0..4).map(|k| (self.hi[k] - self.lo[k]).max(0.0)).product()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec4 {
        Vec4::from_fn(|k, _| rng.random_range(self.lo[k]..self.hi[k]))
    }
}

/// A Monte-Carlo measure with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Univariate polynomial in ascending-degree order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniPoly {
    pub coeffs: Vec<f64>,
}

impl UniPoly {
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// Index of the highest nonzero coefficient, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| *c != 0.0)
    }
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    idx: [u8; 4],
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    degree: usize,
    terms: Vec<TermRepr>,
}

impl Serialize for Polynomial4 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyRepr {
            degree: self.degree_bound,
            terms: self.terms.iter().map(|(idx, c)| TermRepr { idx: *idx, c: *c }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial4 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PolyRepr::deserialize(d)?;
        if r.degree > MAX_DEGREE {
            return Err(serde::de::Error::custom(format!(
                "degree {} exceeds the supported maximum {MAX_DEGREE}",
                r.degree
            )));
        }
        Polynomial4::new(r.degree, r.terms.into_iter().map(|t| (t.idx, t.c)))
            .map_err(serde::de::Error::custom)
    }
}

/// Shorthand for building test and builtin polynomials.
#[macro_export]
macro_rules! poly4 {
    ($deg:expr; $( [$a:expr, $b:expr, $c:expr, $d:expr] => $coef:expr ),* $(,)?) => {
        $crate::poly::Polynomial4::new($deg, vec![$( ([$a, $b, $c, $d], $coef as f64) ),*])
            .expect("valid polynomial literal")
    };
}

//! Scenario files, the builtin surface library, and report emission.
//!
//! A scenario names a surface, a decreasing list of δ values, decomposition
//! parameters, and the experiments to run at each δ. Running one writes
//! `report.json` plus `directions.csv`, `decomposition.csv` and `kakeya.csv`.
//! Reports carry no timings, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{decompose_enumeration, DecompositionParams, DecompositionReport};
use crate::error::{invalid, Error, Result};
use crate::geometry::DirectionNet;
use crate::kakeya::{
    hairbrush, hub_shading, kakeya_norm, linear_wolff_check, robust_transversality_check, ruled_hairbrush,
    translated_family, union_volume, BrushKind, FAMILY_CAP, KAKEYA_P,
};
use crate::poly::{MultiIndex, Polynomial4, MAX_DEGREE};
use crate::scaling::{fit_scaling, ScalingFit};
use crate::tolerances::Tolerances;
use crate::variety::{enumerate_lines, sample_line_seeds, EnumerationMode, SeedRegion};

/// Highest degree a scenario polynomial may have.
pub const SCENARIO_MAX_DEGREE: usize = 6;

// ---------------------------------------------------------------------------
// Polynomial expressions

type Terms = BTreeMap<MultiIndex, f64>;

fn mul(a: &Terms, b: &Terms) -> std::result::Result<Terms, String> {
    let mut out = Terms::new();
    for (i, x) in a {
        for (j, y) in b {
            let mut k = [0u8; 4];
            for v in 0..4 {
                let e = u16::from(i[v]) + u16::from(j[v]);
                if e as usize > MAX_DEGREE {
                    return Err(format!("exponent above {MAX_DEGREE}"));
                }
                k[v] = e as u8;
            }
            *out.entry(k).or_insert(0.0) += x * y;
        }
    }
    Ok(out)
}

fn constant(c: f64) -> Terms {
    Terms::from([([0u8; 4], c)])
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    delta: f64,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn err(&self, msg: &str) -> String {
        format!("{msg} at column {}", self.pos + 1)
    }

    fn expr(&mut self) -> std::result::Result<Terms, String> {
        let mut sign = 1.0;
        if let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            sign = if c == b'-' { -1.0 } else { 1.0 };
        }
        let mut acc = mul(&constant(sign), &self.term()?)?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let t = self.term()?;
            let f = if c == b'-' { -1.0 } else { 1.0 };
            for (k, v) in t {
                *acc.entry(k).or_insert(0.0) += f * v;
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> std::result::Result<Terms, String> {
        let mut acc = self.power()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            acc = mul(&acc, &self.power()?)?;
        }
        Ok(acc)
    }

    fn power(&mut self) -> std::result::Result<Terms, String> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let e: u32 = std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("expected an integer exponent"))?;
        // Powers of constants are folded numerically, so `delta^100` is fine.
        if base.len() <= 1 && base.keys().all(|k| *k == [0u8; 4]) {
            let c = base.values().next().copied().unwrap_or(0.0);
            return Ok(constant(c.powi(e as i32)));
        }
        let mut acc = constant(1.0);
        for _ in 0..e {
            acc = mul(&acc, &base)?;
        }
        Ok(acc)
    }

    fn atom(&mut self) -> std::result::Result<Terms, String> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'x') => {
                self.pos += 1;
                let v = self.s.get(self.pos).copied().filter(|c| (b'1'..=b'4').contains(c)).ok_or_else(|| self.err("expected x1..x4"))?;
                self.pos += 1;
                let mut k = [0u8; 4];
                k[(v - b'1') as usize] = 1;
                Ok(Terms::from([(k, 1.0)]))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphabetic() {
                    self.pos += 1;
                }
                match &self.s[start..self.pos] {
                    b"delta" => Ok(constant(self.delta)),
                    _ => {
                        self.pos = start;
                        Err(self.err("unknown identifier"))
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let c = self.s[self.pos];
                    let exp_sign = (c == b'+' || c == b'-') && matches!(self.s[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let t = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                t.parse::<f64>().map(constant).map_err(|_| self.err("bad number"))
            }
            _ => Err(self.err("expected a number, x1..x4, delta or '('")),
        }
    }
}

/// Parses an expression such as `x1*x2 - x3*x4 + delta^100`. `delta` is
/// replaced by the given value.
pub fn parse_polynomial(src: &str, delta: f64) -> std::result::Result<Polynomial4, String> {
    let mut p = Parser { s: src.as_bytes(), pos: 0, delta };
    let terms = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("unexpected trailing input"));
    }
    let degree = terms.iter().filter(|(_, c)| **c != 0.0).map(|(k, _)| k.iter().map(|&e| e as usize).sum::<usize>()).max().unwrap_or(0);
    if degree > SCENARIO_MAX_DEGREE {
        return Err(format!("degree {degree} exceeds {SCENARIO_MAX_DEGREE}"));
    }
    Polynomial4::new(degree.max(1), terms).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Scenarios

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Enumerate,
    Directions,
    Decompose,
    Kakeya,
    Hairbrush,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Enumerate => "enumerate",
            Experiment::Directions => "directions",
            Experiment::Decompose => "decompose",
            Experiment::Kakeya => "kakeya",
            Experiment::Hairbrush => "hairbrush",
        }
    }
}

/// Where the surface comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolySource {
    /// Expression, possibly mentioning `delta`.
    Expr(String),
    /// Dense cubic with ±1 coefficients drawn from the scenario seed.
    RandomCubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub polynomial: PolySource,
    pub deltas: Vec<f64>,
    pub params: DecompositionParams,
    pub experiments: Vec<Experiment>,
    /// Optional per-experiment δ subsets; missing entries run at every δ.
    pub experiment_deltas: BTreeMap<String, Vec<f64>>,
    pub seed: u64,
}

/// Names accepted by [`Scenario::builtin`].
pub const BUILTINS: [&str; 6] =
    ["hyperplane", "ruled-quadric", "signature-quadric", "paraboloid", "perturbed-product", "random-cubic"];

/// δ values of the direction-count sweep.
pub const SWEEP_DELTAS: [f64; 4] = [0.125, 0.0625, 0.03125, 0.015625];

impl Scenario {
    pub fn builtin(name: &str) -> Option<Self> {
        let expr = match name {
            "hyperplane" => "x4",
            "ruled-quadric" => "x1*x2 - x3*x4",
            "signature-quadric" => "x1^2 + x2^2 - x3^2 - x4^2",
            "paraboloid" => "x4 - (x1^2 + x2^2 + x3^2)",
            "perturbed-product" => "x1*x2 + delta^100",
            "random-cubic" => "",
            _ => return None,
        };
        let polynomial = if expr.is_empty() { PolySource::RandomCubic } else { PolySource::Expr(expr.into()) };
        Some(Self {
            name: name.into(),
            polynomial,
            deltas: SWEEP_DELTAS.to_vec(),
            params: DecompositionParams::default(),
            experiments: vec![Experiment::Directions, Experiment::Decompose],
            experiment_deltas: BTreeMap::from([("decompose".into(), vec![0.0625, 0.03125])]),
            seed: 1,
        })
    }

    /// Loads a builtin name or a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some(s) = Self::builtin(name_or_path) {
            return Ok(s);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{name_or_path}: not a builtin scenario and not readable ({e})")))?;
        Self::from_toml(&text, path.parent())
    }

    /// Parses a scenario file. Relative `polynomial_file` paths resolve
    /// against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            Error::Config { line, message: e.message().to_string() }
        })?;
        let key_line = |key: &str| -> usize {
            text.lines().position(|l| l.trim_start().starts_with(key)).map(|i| i + 1).unwrap_or(0)
        };
        let polynomial = match (raw.polynomial, raw.polynomial_file, raw.builtin) {
            (Some(e), None, None) => PolySource::Expr(e),
            (None, Some(f), None) => {
                let p = base.map(|b| b.join(&f)).unwrap_or_else(|| PathBuf::from(&f));
                let e = std::fs::read_to_string(&p).map_err(|e| Error::Config {
                    line: key_line("polynomial_file"),
                    message: format!("cannot read {}: {e}", p.display()),
                })?;
                PolySource::Expr(e.trim().to_string())
            }
            (None, None, Some(b)) => Scenario::builtin(&b)
                .ok_or_else(|| Error::Config { line: key_line("builtin"), message: format!("unknown builtin {b}") })?
                .polynomial,
            _ => {
                return Err(Error::Config {
                    line: 0,
                    message: "give exactly one of polynomial, polynomial_file, builtin".into(),
                })
            }
        };
        if let PolySource::Expr(e) = &polynomial {
            parse_polynomial(e, 0.5).map_err(|m| Error::Config { line: key_line("polynomial"), message: m })?;
        }
        let s = Self {
            name: raw.name,
            polynomial,
            deltas: raw.deltas,
            params: raw.params.unwrap_or_default(),
            experiments: raw.experiments,
            experiment_deltas: raw.experiment_deltas.unwrap_or_default(),
            seed: raw.seed.unwrap_or(1),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() {
            return Err(invalid("no delta values"));
        }
        if self.deltas.windows(2).any(|w| !(w[0] > w[1])) || self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(invalid(format!("deltas must lie in (0,1) and strictly decrease: {:?}", self.deltas)));
        }
        if self.experiments.contains(&Experiment::Decompose) {
            for d in self.deltas_for(Experiment::Decompose) {
                self.params.validate(d)?;
            }
        }
        for key in self.experiment_deltas.keys() {
            if !self.experiments.iter().any(|e| e.as_str() == key) {
                return Err(invalid(format!("experiment_deltas names {key}, which is not run")));
            }
        }
        Ok(())
    }

    /// Replaces the δ list; per-experiment subsets are dropped.
    pub fn with_deltas(mut self, deltas: Vec<f64>) -> Result<Self> {
        self.deltas = deltas;
        self.experiment_deltas.clear();
        self.validate()?;
        Ok(self)
    }

    pub fn deltas_for(&self, e: Experiment) -> Vec<f64> {
        match self.experiment_deltas.get(e.as_str()) {
            Some(sub) => self.deltas.iter().copied().filter(|d| sub.iter().any(|s| (s - d).abs() <= 1e-12 * d)).collect(),
            None => self.deltas.clone(),
        }
    }

    /// The surface at scale `delta`.
    pub fn polynomial_at(&self, delta: f64) -> Result<Polynomial4> {
        match &self.polynomial {
            PolySource::Expr(e) => parse_polynomial(e, delta).map_err(|m| Error::Config { line: 0, message: m }),
            PolySource::RandomCubic => Ok(random_cubic(self.seed)),
        }
    }
}

/// All 35 monomials of degree ≤ 3 with independent ±1 coefficients.
pub fn random_cubic(seed: u64) -> Polynomial4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0b1c);
    let mut terms = Vec::new();
    for a in 0..=3u8 {
        for b in 0..=3 - a {
            for c in 0..=3 - a - b {
                for d in 0..=3 - a - b - c {
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    terms.push(([a, b, c, d], s));
                }
            }
        }
    }
    Polynomial4::new(3, terms).expect("cubic terms")
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    polynomial: Option<String>,
    polynomial_file: Option<String>,
    builtin: Option<String>,
    deltas: Vec<f64>,
    params: Option<DecompositionParams>,
    experiments: Vec<Experiment>,
    experiment_deltas: Option<BTreeMap<String, Vec<f64>>>,
    seed: Option<u64>,
}

// ---------------------------------------------------------------------------
// Running

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationSummary {
    pub lines: usize,
    pub distinct_net_directions: usize,
    pub direction_count: usize,
    pub incidences: usize,
    pub candidates_tested: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSummary {
    pub net_size: usize,
    pub directions_with_lines: usize,
    pub e_delta_dir: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSummary {
    pub class: u8,
    pub prisms: usize,
    pub uncovered: usize,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub n_lines: usize,
    pub class_counts: [usize; 4],
    pub partition_total: bool,
    pub cover_sound: bool,
    pub covers: Vec<CoverSummary>,
    pub quadric: Option<String>,
    pub quadric_rank: Option<usize>,
    pub quadric_residual: Option<f64>,
    pub sigma4_checked: usize,
    pub sigma4_matched_fraction: Option<f64>,
    pub direction_count: usize,
}

impl DecompositionSummary {
    pub fn from_report(r: &DecompositionReport) -> Self {
        Self {
            n_lines: r.n_lines,
            class_counts: r.class_counts,
            partition_total: r.partition_total(),
            cover_sound: r.cover_sound(),
            covers: r
                .covers
                .iter()
                .map(|c| CoverSummary { class: c.class, prisms: c.prisms.len(), uncovered: c.uncovered, constant: c.constant })
                .collect(),
            quadric: r.quadric.as_ref().map(|q| q.q.to_string()),
            quadric_rank: r.quadric.as_ref().map(|q| q.rank),
            quadric_residual: r.quadric.as_ref().map(|q| q.residual),
            sigma4_checked: r.sigma4.len(),
            sigma4_matched_fraction: r.sigma4_matched_fraction,
            direction_count: r.direction_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KakeyaSummary {
    pub tubes: usize,
    pub union_volume: f64,
    pub kakeya_norm: f64,
    pub linear_wolff: bool,
    pub robust_transversality: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HairbrushSummary {
    pub nondegenerate_volume: f64,
    pub planar_volume: f64,
    pub nondegenerate_members: usize,
    pub planar_members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    pub delta: f64,
    pub polynomial: String,
    pub enumerate: Option<EnumerationSummary>,
    pub directions: Option<DirectionSummary>,
    pub decompose: Option<DecompositionSummary>,
    pub kakeya: Option<KakeyaSummary>,
    pub hairbrush: Option<HairbrushSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub tolerances: Tolerances,
    pub results: Vec<DeltaResult>,
    /// Fit of the direction counts, when at least three are positive.
    pub direction_fit: Option<ScalingFit>,
    pub kakeya_fit: Option<ScalingFit>,
}

/// Counts `E_δ(Dir(Σ̂))` without enumerating every line.
pub fn direction_summary(p: &Polynomial4, delta: f64, c: f64, seed: u64, tol: &Tolerances) -> Result<DirectionSummary> {
    let sample = sample_line_seeds(p, delta, SeedRegion::slices_for(p.degree(), c, delta), tol.cap_angle, tol)?;
    let net = DirectionNet::build(delta, tol.cap_angle, seed)?;
    let e = enumerate_lines(p, &sample, &net, delta, c, tol, EnumerationMode::DirectionsOnly)?;
    Ok(DirectionSummary {
        net_size: net.len(),
        directions_with_lines: e.len(),
        e_delta_dir: crate::decomposition::direction_count(&e.lines, delta),
    })
}

pub fn kakeya_summary(delta: f64, seed: u64) -> Result<KakeyaSummary> {
    let ts = translated_family(delta, FAMILY_CAP, seed)?;
    let hub = ts.clone().shaded(hub_shading(delta));
    Ok(KakeyaSummary {
        tubes: ts.len(),
        union_volume: union_volume(&ts, false),
        kakeya_norm: kakeya_norm(&ts, KAKEYA_P)?,
        linear_wolff: linear_wolff_check(&ts, 200, seed),
        robust_transversality: robust_transversality_check(&hub, 0.25 * delta)?,
    })
}

pub fn hairbrush_summary(delta: f64) -> Result<HairbrushSummary> {
    let nd = hairbrush(&ruled_hairbrush(BrushKind::Nondegenerate, delta)?, 0)?;
    let pl = hairbrush(&ruled_hairbrush(BrushKind::Planar, delta)?, 0)?;
    Ok(HairbrushSummary {
        nondegenerate_volume: nd.volume,
        planar_volume: pl.volume,
        nondegenerate_members: nd.members.len(),
        planar_members: pl.members.len(),
    })
}

fn positive_fit(pairs: Vec<(f64, f64)>) -> Option<ScalingFit> {
    let pairs: Vec<_> = pairs.into_iter().filter(|p| p.1 > 0.0).collect();
    fit_scaling(&pairs).ok()
}

/// Runs every requested experiment at every δ, in order.
pub fn run_scenario(s: &Scenario, tol: &Tolerances) -> Result<ScenarioReport> {
    s.validate()?;
    let mut results = Vec::with_capacity(s.deltas.len());
    for (k, &delta) in s.deltas.iter().enumerate() {
        let p = s.polynomial_at(delta)?;
        if p.degree() > SCENARIO_MAX_DEGREE {
            return Err(invalid(format!("degree {} exceeds {SCENARIO_MAX_DEGREE}", p.degree())));
        }
        let seed = s.seed.wrapping_add(k as u64);
        let runs = |e: Experiment| s.experiments.contains(&e) && s.deltas_for(e).contains(&delta);
        let mut r = DeltaResult {
            delta,
            polynomial: p.to_string(),
            enumerate: None,
            directions: None,
            decompose: None,
            kakeya: None,
            hairbrush: None,
        };
        if runs(Experiment::Directions) {
            r.directions = Some(direction_summary(&p, delta, s.params.c, seed, tol)?);
        }
        if runs(Experiment::Enumerate) || runs(Experiment::Decompose) {
            let c = s.params.c;
            if !(delta < c && c <= 2.0) {
                return Err(invalid(format!("c = {c} must lie in (delta, 2]")));
            }
            let sample = sample_line_seeds(&p, delta, SeedRegion::slices_for(p.degree(), c, delta), tol.cap_angle, tol)?;
            let net = DirectionNet::build(delta, tol.cap_angle, seed)?;
            let e = enumerate_lines(&p, &sample, &net, delta, c, tol, EnumerationMode::Full)?;
            if runs(Experiment::Enumerate) {
                r.enumerate = Some(EnumerationSummary {
                    lines: e.len(),
                    distinct_net_directions: e.distinct_dir_indices().len(),
                    direction_count: crate::decomposition::direction_count(&e.lines, delta),
                    incidences: (0..e.len()).map(|i| e.hit_samples(i).count()).sum(),
                    candidates_tested: e.candidates_tested,
                });
            }
            if runs(Experiment::Decompose) {
                let rep = decompose_enumeration(&p, &e, &net, &s.params, seed, tol)?;
                r.decompose = Some(DecompositionSummary::from_report(&rep));
            }
        }
        if runs(Experiment::Kakeya) {
            r.kakeya = Some(kakeya_summary(delta, seed)?);
        }
        if runs(Experiment::Hairbrush) {
            r.hairbrush = Some(hairbrush_summary(delta)?);
        }
        results.push(r);
    }
    let direction_fit =
        positive_fit(results.iter().filter_map(|r| r.directions.as_ref().map(|d| (r.delta, d.e_delta_dir as f64))).collect());
    let kakeya_fit = positive_fit(results.iter().filter_map(|r| r.kakeya.as_ref().map(|k| (r.delta, k.kakeya_norm))).collect());
    Ok(ScenarioReport { scenario: s.clone(), tolerances: *tol, results, direction_fit, kakeya_fit })
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl ScenarioReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid(e.to_string()))
    }

    pub fn directions_csv(&self) -> String {
        let mut out = String::from("delta,net_size,directions_with_lines,e_delta_dir\n");
        for r in &self.results {
            if let Some(d) = &r.directions {
                let _ = writeln!(out, "{},{},{},{}", r.delta, d.net_size, d.directions_with_lines, d.e_delta_dir);
            }
        }
        out
    }

    pub fn decomposition_csv(&self) -> String {
        let mut out = String::from(
            "delta,n_lines,class1,class2,class3,class4,partition_total,cover_sound,\
             cover1_prisms,cover1_constant,cover2_prisms,cover2_constant,cover3_prisms,cover3_constant,\
             quadric_rank,quadric_residual,sigma4_matched_fraction\n",
        );
        for r in &self.results {
            let Some(d) = &r.decompose else { continue };
            let cover = |class: u8| d.covers.iter().find(|c| c.class == class);
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.delta, d.n_lines, d.class_counts[0], d.class_counts[1], d.class_counts[2], d.class_counts[3], d.partition_total, d.cover_sound
            );
            for class in 1..=3 {
                let _ = write!(out, ",{},{}", opt(cover(class).map(|c| c.prisms)), opt(cover(class).map(|c| c.constant)));
            }
            let _ = writeln!(out, ",{},{},{}", opt(d.quadric_rank), opt(d.quadric_residual), opt(d.sigma4_matched_fraction));
        }
        out
    }

    pub fn kakeya_csv(&self) -> String {
        let mut out = String::from(
            "delta,tubes,union_volume,kakeya_norm,linear_wolff,robust_transversality,hairbrush_nondegenerate,hairbrush_planar\n",
        );
        for r in &self.results {
            if r.kakeya.is_none() && r.hairbrush.is_none() {
                continue;
            }
            let k = r.kakeya.as_ref();
            let h = r.hairbrush.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.delta,
                opt(k.map(|k| k.tubes)),
                opt(k.map(|k| k.union_volume)),
                opt(k.map(|k| k.kakeya_norm)),
                opt(k.map(|k| k.linear_wolff)),
                opt(k.map(|k| k.robust_transversality)),
                opt(h.map(|h| h.nondegenerate_volume)),
                opt(h.map(|h| h.planar_volume)),
            );
        }
        out
    }

    /// Writes the JSON report and the three CSV tables into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()? + "\n")?;
        std::fs::write(dir.join("directions.csv"), self.directions_csv())?;
        std::fs::write(dir.join("decomposition.csv"), self.decomposition_csv())?;
        std::fs::write(dir.join("kakeya.csv"), self.kakeya_csv())?;
        Ok(())
    }
}

/// Reads two named numeric columns from a CSV file with a header row.
pub fn read_pairs(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Config { line: 1, message: format!("no column {name}") })
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config { line: n + 2, message: e.to_string() })?;
        let num = |i: usize| -> Result<Option<f64>> {
            let f = rec.get(i).unwrap_or("").trim();
            if f.is_empty() {
                return Ok(None);
            }
            f.parse().map(Some).map_err(|_| Error::Config { line: n + 2, message: format!("not a number: {f}") })
        };
        if let (Some(a), Some(b)) = (num(ix)?, num(iy)?) {
            out.push((a, b));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_expressions() {
        let p = parse_polynomial("x1*x2 - x3*x4", 0.1).unwrap();
        assert_eq!(p.coeff([1, 1, 0, 0]), 1.0);
        assert_eq!(p.coeff([0, 0, 1, 1]), -1.0);
        let q = parse_polynomial("x4 - (x1^2 + x2^2 + x3^2)", 0.1).unwrap();
        assert_eq!(q.coeff([2, 0, 0, 0]), -1.0);
        assert_eq!(q.degree(), 2);
        let r = parse_polynomial("2.5e-1*x1^3 + delta^2", 0.5).unwrap();
        assert_eq!(r.coeff([3, 0, 0, 0]), 0.25);
        assert_eq!(r.coeff([0, 0, 0, 0]), 0.25);
        let s = parse_polynomial("(x1 + x2)^2", 0.1).unwrap();
        assert_eq!(s.coeff([1, 1, 0, 0]), 2.0);
        let tiny = parse_polynomial("x1*x2 + delta^100", 0.125).unwrap();
        assert_eq!(tiny.coeff([0, 0, 0, 0]), 0.125f64.powi(100));
        for bad in ["x5", "x1 +", "x1^", "foo", "x1^7", "(x1"] {
            assert!(parse_polynomial(bad, 0.1).is_err(), "{bad}");
        }
    }

    #[test]
    fn builtins_load() {
        for b in BUILTINS {
            let s = Scenario::builtin(b).unwrap();
            s.validate().unwrap();
            let p = s.polynomial_at(0.0625).unwrap();
            assert!(p.degree() >= 1 && p.degree() <= 3);
        }
        let cubic = random_cubic(1);
        assert_eq!(cubic.terms().len(), 35);
        assert!(cubic.terms().iter().all(|(_, c)| c.abs() == 1.0));
        assert_eq!(random_cubic(1), cubic);
    }

    #[test]
    fn toml_round_trip_and_errors() {
        let text = "name = \"t\"\npolynomial = \"x4\"\ndeltas = [0.25, 0.125]\nexperiments = [\"directions\"]\nseed = 3\n";
        let s = Scenario::from_toml(text, None).unwrap();
        assert_eq!(s.deltas, vec![0.25, 0.125]);
        assert_eq!(s.seed, 3);

        let bad = "name = \"t\"\npolynomial = \"x4\"\ndeltas = [0.25, 0.125\nexperiments = []\n";
        assert!(matches!(Scenario::from_toml(bad, None), Err(Error::Config { line, .. }) if line >= 3));
        let bad_poly = "name = \"t\"\ndeltas = [0.25]\npolynomial = \"x9\"\nexperiments = []\n";
        assert!(matches!(Scenario::from_toml(bad_poly, None), Err(Error::Config { line: 3, .. })));
        let unordered = "name = \"t\"\npolynomial = \"x4\"\ndeltas = [0.125, 0.25]\nexperiments = []\n";
        assert!(matches!(Scenario::from_toml(unordered, None), Err(Error::InvalidArgument(_))));
        let bad_params =
            "name = \"t\"\npolynomial = \"x4\"\ndeltas = [0.125]\nexperiments = [\"decompose\"]\n[params]\ns = 0.1\nu = 0.2\nkappa = 0.5\nc = 1.0\n";
        assert!(matches!(Scenario::from_toml(bad_params, None), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn polynomial_file_resolves_relative_to_scenario() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.txt"), "x1*x2 - x3*x4\n").unwrap();
        let text = "name = \"f\"\npolynomial_file = \"p.txt\"\ndeltas = [0.125]\nexperiments = [\"directions\"]\n";
        std::fs::write(dir.path().join("s.toml"), text).unwrap();
        let s = Scenario::load(dir.path().join("s.toml").to_str().unwrap()).unwrap();
        assert_eq!(s.polynomial_at(0.125).unwrap().coeff([0, 0, 1, 1]), -1.0);
    }

    #[test]
    fn paraboloid_has_no_lines_at_fine_scale() {
        let s = Scenario::builtin("paraboloid").unwrap();
        let tol = Tolerances::default();
        let d = 0.03125;
        let p = s.polynomial_at(d).unwrap();
        let sum = direction_summary(&p, d, 1.0, 1, &tol).unwrap();
        assert_eq!(sum.directions_with_lines, 0);
    }

    #[test]
    fn small_run_is_deterministic() {
        let mut s = Scenario::builtin("ruled-quadric").unwrap();
        s.experiments = vec![Experiment::Enumerate, Experiment::Directions, Experiment::Kakeya];
        let s = s.with_deltas(vec![0.125, 0.0625]).unwrap();
        let tol = Tolerances::default();
        let a = run_scenario(&s, &tol).unwrap();
        let b = run_scenario(&s, &tol).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.kakeya_csv(), b.kakeya_csv());
        assert!(a.results.iter().all(|r| r.enumerate.is_some() && r.decompose.is_none()));
        let dir = tempfile::tempdir().unwrap();
        a.write_to(dir.path()).unwrap();
        let pairs = read_pairs(&dir.path().join("directions.csv"), "delta", "e_delta_dir").unwrap();
        assert_eq!(pairs.len(), 2);
    }
}

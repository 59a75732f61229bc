//! Log-log least-squares exponent fits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// OLS fit of `log value = intercept + slope · log(1/δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl ScalingFit {
    pub fn predict(&self, delta: f64) -> f64 {
        (self.intercept + self.slope * (1.0 / delta).ln()).exp()
    }
}

pub fn fit_scaling(pairs: &[(f64, f64)]) -> Result<ScalingFit> {
    if pairs.len() < 3 {
        return Err(invalid(format!("need at least 3 (delta, value) pairs, got {}", pairs.len())));
    }
    for &(d, v) in pairs {
        if !(d > 0.0) || !(v > 0.0) {
            return Err(invalid(format!("nonpositive pair ({d}, {v})")));
        }
    }
    let xs: Vec<f64> = pairs.iter().map(|p| (1.0 / p.0).ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("all deltas are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(ScalingFit { pairs: pairs.to_vec(), slope, intercept, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DELTAS: [f64; 4] = [0.125, 0.0625, 0.03125, 0.015625];

    #[test]
    fn exact_power_law() {
        let pairs: Vec<_> = DELTAS.iter().map(|&d| (d, 3.5 * d.powi(-2))).collect();
        let f = fit_scaling(&pairs).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!((f.predict(0.01) - 3.5e4).abs() < 1e-6);
    }

    #[test]
    fn constant_values() {
        let pairs: Vec<_> = DELTAS.iter().map(|&d| (d, 7.0)).collect();
        let f = fit_scaling(&pairs).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_scaling(&[(0.1, 1.0), (0.05, 2.0)]).is_err());
        assert!(fit_scaling(&[(0.1, 1.0), (0.05, 0.0), (0.02, 3.0)]).is_err());
    }

    #[test]
    fn hyperplane_net_counts() {
        // Oracle: greedy nets of dense samples of the 2-sphere cap {v4 = 0, angle(v, e1) <= 0.1}.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let dirs: Vec<crate::Vec4> = (0..200_000)
            .filter_map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                let r = (a * a + b * b).sqrt();
                (r <= 0.1).then(|| crate::Vec4::new(r.cos(), a * r.sin() / r, b * r.sin() / r, 0.0))
            })
            .collect();
        let pairs: Vec<_> =
            DELTAS.iter().map(|&d| (d, crate::geometry::direction_covering_number(&dirs, d) as f64)).collect();
        let f = fit_scaling(&pairs).unwrap();
        assert!((1.5..=2.3).contains(&f.slope), "{:?}", f);
    }
}

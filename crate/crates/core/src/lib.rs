//! Discretized line–variety incidence geometry in R^4.
//!
//! The crate enumerates unit line segments that stay in the δ-neighborhood of
//! an algebraic hypersurface, splits them into prism-covered and
//! quadric-adjacent classes, and runs Kakeya-type tube experiments on a shared
//! voxel grid. Everything is deterministic given a seed; the `parallel`
//! feature (on by default) only changes wall time, never results.

pub mod broadness;
pub mod curvature;
pub mod decomposition;
pub mod error;
pub mod geometry;
pub mod kakeya;
pub mod par;
pub mod poly;
pub mod scaling;
pub mod scenario;
pub mod sphere_fit;
pub mod tolerances;
pub mod variety;

pub use error::{Error, Result};
pub use poly::{Polynomial4, UniPoly, Vec4};
pub use tolerances::Tolerances;

pub(crate) mod vec4_serde {
    use super::Vec4;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec4, s: S) -> Result<S::Ok, S::Error> {
        [v[0], v[1], v[2], v[3]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec4, D::Error> {
        let a = <[f64; 4]>::deserialize(d)?;
        Ok(Vec4::from(a))
    }
}

/// Packs a 4D integer cell index into one key. Each coordinate must lie in
/// `[-2^15, 2^15)`.
#[inline]
pub(crate) fn pack4(c: [i32; 4]) -> u64 {
    let mut k = 0u64;
    for &x in &c {
        k = (k << 16) | ((x + 32768) as u64 & 0xffff);
    }
    k
}

#[inline]
pub(crate) fn cell4(x: &Vec4, h: f64) -> [i32; 4] {
    [
        (x[0] / h).floor() as i32,
        (x[1] / h).floor() as i32,
        (x[2] / h).floor() as i32,
        (x[3] / h).floor() as i32,
    ]
}

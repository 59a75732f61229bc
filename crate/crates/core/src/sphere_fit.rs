//! Covering unit vectors by a few great subspheres (linear subspaces through
//! the origin) by alternating assignment and eigenvector refits.

use nalgebra::{DMatrix, SMatrix, SVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Const-generic eigen needs dimension bounds nalgebra cannot express for a
// free `N`; the matrices are tiny, so go through the dynamic form.
fn eigen<const N: usize>(m: &SMatrix<f64, N, N>) -> (nalgebra::DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(DMatrix::from_fn(N, N, |i, j| m[(i, j)]));
    (eig.eigenvalues, eig.eigenvectors)
}

/// Orthonormal basis of a `dim`-dimensional subspace of R^N.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<const N: usize> {
    pub basis: Vec<SVector<f64, N>>,
}

impl<const N: usize> Subspace<N> {
    /// Angle between a unit vector and the subspace.
    pub fn angle(&self, v: &SVector<f64, N>) -> f64 {
        let mut r = *v;
        for b in &self.basis {
            r -= b * b.dot(v);
        }
        r.norm().min(1.0).asin()
    }

    /// Unit normal of a hyperplane (only for `dim = N - 1`).
    pub fn normal(&self) -> SVector<f64, N> {
        let mut scatter = SMatrix::<f64, N, N>::zeros();
        for b in &self.basis {
            scatter += b * b.transpose();
        }
        let (vals, vecs) = eigen(&scatter);
        let i = vals.imin();
        SVector::from_iterator(vecs.column(i).iter().copied())
    }

    fn fit(points: &[SVector<f64, N>], members: &[usize], dim: usize) -> Option<Self> {
        if members.is_empty() {
            return None;
        }
        let mut scatter = SMatrix::<f64, N, N>::zeros();
        for &i in members {
            scatter += points[i] * points[i].transpose();
        }
        let (vals, vecs) = eigen(&scatter);
        let mut idx: Vec<usize> = (0..N).collect();
        idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        Some(Self { basis: idx[..dim].iter().map(|&i| SVector::from_iterator(vecs.column(i).iter().copied())).collect() })
    }

    /// Span of the given vectors (Gram-Schmidt), padded with coordinate axes.
    pub fn spanned_by(vs: &[SVector<f64, N>], dim: usize) -> Self {
        let mut basis: Vec<SVector<f64, N>> = Vec::with_capacity(dim);
        let axes = (0..N).map(|k| {
            let mut e = SVector::<f64, N>::zeros();
            e[k] = 1.0;
            e
        });
        for cand in vs.iter().copied().chain(axes) {
            if basis.len() == dim {
                break;
            }
            let mut w = cand;
            for _ in 0..2 {
                for b in &basis {
                    w -= b * b.dot(&w);
                }
            }
            let n = w.norm();
            if n > 1e-9 {
                basis.push(w / n);
            }
        }
        Self { basis }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceFit<const N: usize> {
    pub subspaces: Vec<Subspace<N>>,
    pub assignment: Vec<usize>,
    /// Largest angle from a point to its assigned subspace.
    pub max_angle: f64,
}

fn assign<const N: usize>(points: &[SVector<f64, N>], subs: &[Subspace<N>]) -> (Vec<usize>, f64) {
    let mut worst = 0.0f64;
    let asg = points
        .iter()
        .map(|p| {
            let (j, a) = subs
                .iter()
                .enumerate()
                .map(|(j, s)| (j, s.angle(p)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            worst = worst.max(a);
            j
        })
        .collect();
    (asg, worst)
}

/// Fits `count` subspaces of dimension `dim` to unit vectors, minimizing the
/// largest residual angle over `restarts` seeded starts. Stops early once the
/// residual is at most `good_enough`.
pub fn fit_great_subspaces<const N: usize>(
    points: &[SVector<f64, N>],
    count: usize,
    dim: usize,
    restarts: usize,
    seed: u64,
    good_enough: f64,
) -> SubspaceFit<N> {
    assert!(count >= 1 && dim >= 1 && dim < N, "bad subspace fit shape");
    if points.is_empty() {
        return SubspaceFit {
            subspaces: vec![Subspace::spanned_by(&[], dim); count],
            assignment: vec![],
            max_angle: 0.0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<SubspaceFit<N>> = None;
    for r in 0..restarts.max(1) {
        // Each subspace starts as the span of `dim` random data points; the
        // first restart uses a deterministic farthest-point spread instead.
        let mut subs: Vec<Subspace<N>> = Vec::with_capacity(count);
        if r == 0 {
            let mut chosen = vec![0usize];
            while chosen.len() < count * dim && chosen.len() < points.len() {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = chosen.iter().map(|&c| points[a].dot(&points[c]).abs()).fold(0.0, f64::max);
                        let db = chosen.iter().map(|&c| points[b].dot(&points[c]).abs()).fold(0.0, f64::max);
                        db.total_cmp(&da)
                    })
                    .unwrap_or(0);
                chosen.push(far);
            }
            for j in 0..count {
                let vs: Vec<_> = chosen.iter().skip(j * dim).take(dim).map(|&i| points[i]).collect();
                subs.push(Subspace::spanned_by(&vs, dim));
            }
        } else {
            for _ in 0..count {
                let k = dim.min(points.len());
                let vs: Vec<_> = sample(&mut rng, points.len(), k).into_iter().map(|i| points[i]).collect();
                subs.push(Subspace::spanned_by(&vs, dim));
            }
        }
        let (mut asg, mut worst) = assign(points, &subs);
        for _ in 0..30 {
            let mut next = subs.clone();
            for (j, slot) in next.iter_mut().enumerate() {
                let members: Vec<usize> = (0..points.len()).filter(|&i| asg[i] == j).collect();
                if let Some(s) = Subspace::fit(points, &members, dim) {
                    *slot = s;
                }
            }
            let (na, nw) = assign(points, &next);
            let stable = na == asg;
            if nw <= worst {
                subs = next;
                worst = nw;
            }
            asg = na;
            if stable {
                break;
            }
        }
        let (asg, worst) = assign(points, &subs);
        if best.as_ref().is_none_or(|b| worst < b.max_angle) {
            best = Some(SubspaceFit { subspaces: subs, assignment: asg, max_angle: worst });
        }
        if worst <= good_enough {
            break;
        }
    }
    best.expect("at least one restart")
}

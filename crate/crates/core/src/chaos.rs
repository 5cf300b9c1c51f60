//! Distances between particle marginals and the limit density.
//!
//! Everything here works on [`SampleSet`]s: finite clouds of points in
//! dimension 2 or 3 drawn either from pooled particles or from a grid
//! density. Randomness enters only through explicit seeds, so each metric is
//! a deterministic function of its inputs.

use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit::{second_moments, DensityField};
use crate::linalg::Dim;
use crate::particle::ParticleState;
use crate::rng::replica_rng;

/// Default neighbour rank of [`knn_kl`].
pub const DEFAULT_K: usize = 5;
/// Distances below this are clamped so duplicate points stay finite.
pub const DISTANCE_FLOOR: f64 = 1e-12;
pub const MIN_PROJECTIONS: usize = 32;
const MIN_ACCEPTANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Particles,
    Limit,
}

/// m ≥ 2 finite points stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    d: Dim,
    points: Vec<f64>,
    source: SampleSource,
    acceptance: Option<f64>,
}

impl SampleSet {
    pub fn new(d: Dim, points: Vec<f64>, source: SampleSource) -> Result<Self> {
        let dd = d.get();
        if points.len() % dd != 0 {
            return Err(Error::Index(format!("{} coordinates do not split into {dd}-vectors", points.len())));
        }
        if points.len() / dd < 2 {
            return Err(Error::Insufficient("a sample set needs at least two points".into()));
        }
        if let Some(k) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite coordinate in point {}", k / dd)));
        }
        Ok(SampleSet { d, points, source, acceptance: None })
    }

    /// The velocity of particle `index` in every state: the pooled 1-marginal.
    pub fn pool_particle(states: &[ParticleState], index: usize) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::Insufficient("no particle states to pool".into()))?;
        let d = first.dim();
        let mut points = Vec::with_capacity(states.len() * d.get());
        for st in states {
            if st.dim() != d {
                return Err(Error::Dimension(st.dim().get()));
            }
            if index >= st.n() {
                return Err(Error::Index(format!("particle {index} of {}", st.n())));
            }
            points.extend_from_slice(st.velocity(index).as_slice());
        }
        Self::new(d, points, SampleSource::Particles)
    }

    /// Every particle of every state. Particles of one replica are dependent,
    /// so this pool is larger but correlated.
    pub fn pool_all(states: &[ParticleState]) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::Insufficient("no particle states to pool".into()))?;
        let d = first.dim();
        let mut points = Vec::new();
        for st in states {
            if st.dim() != d {
                return Err(Error::Dimension(st.dim().get()));
            }
            points.extend_from_slice(st.velocities());
        }
        Self::new(d, points, SampleSource::Particles)
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.d
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len() / self.d.get()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.d.get();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn source(&self) -> SampleSource {
        self.source
    }

    /// Acceptance rate of the rejection sampler that produced the set.
    pub fn acceptance(&self) -> Option<f64> {
        self.acceptance
    }

    /// The points with indices in `keep`, in that order.
    pub fn subset(&self, keep: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut points = Vec::new();
        for i in keep {
            if i >= self.len() {
                return Err(Error::Index(format!("point {i} of {}", self.len())));
            }
            points.extend_from_slice(self.point(i));
        }
        Self::new(self.d, points, self.source)
    }
}

/// Draws m points from the bilinear interpolant of `field`.
///
/// The proposal is a Gaussian with the field's mean and covariance, widened
/// by 1.5 in standard deviation. The envelope constant bounds the ratio on
/// every grid cell: the interpolant never exceeds its largest corner, and a
/// Gaussian attains its minimum over a rectangle at a corner.
pub fn sample_from_field<R: Rng + ?Sized>(field: &DensityField, m: usize, rng: &mut R) -> Result<SampleSet> {
    if m < 2 {
        return Err(Error::Insufficient("a sample set needs at least two points".into()));
    }
    let grid = *field.grid();
    let c = crate::limit::conserved_quantities(field);
    if !(c.mass > 0.0) {
        return Err(Error::NonPositive(c.mass));
    }
    let mean = [c.momentum[0] / c.mass, c.momentum[1] / c.mass];
    let e = second_moments(field);
    let widen = 1.5 * 1.5;
    let s11 = widen * (e[0][0] / c.mass - mean[0] * mean[0]);
    let s12 = widen * (e[0][1] / c.mass - mean[0] * mean[1]);
    let s22 = widen * (e[1][1] / c.mass - mean[1] * mean[1]);
    // Cholesky factor of the proposal covariance.
    if !(s11 > 0.0) {
        return Err(Error::Degenerate(s11));
    }
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let r = s22 - l21 * l21;
    if !(r > 0.0) {
        return Err(Error::Degenerate(r));
    }
    let l22 = r.sqrt();
    let det = s11 * s22 - s12 * s12;
    let log_g = |x: f64, y: f64| {
        let (dx, dy) = (x - mean[0], y - mean[1]);
        let q = (s22 * dx * dx - 2.0 * s12 * dx * dy + s11 * dy * dy) / det;
        -0.5 * q - (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln()
    };

    let n = grid.n();
    let mut log_bound = f64::NEG_INFINITY;
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let fmax = field.at(i, j).max(field.at(i + 1, j)).max(field.at(i, j + 1)).max(field.at(i + 1, j + 1));
            if fmax <= 0.0 {
                continue;
            }
            let gmin = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
                .iter()
                .map(|&(a, b)| log_g(grid.coord(a), grid.coord(b)))
                .fold(f64::INFINITY, f64::min);
            log_bound = log_bound.max(fmax.ln() - gmin);
        }
    }

    let mut points = Vec::with_capacity(2 * m);
    let mut proposed = 0usize;
    let budget = m.saturating_mul(100).max(1000);
    while points.len() < 2 * m {
        if proposed >= budget {
            return Err(Error::LowAcceptance((points.len() / 2) as f64 / proposed as f64));
        }
        proposed += 1;
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let x = mean[0] + l11 * z1;
        let y = mean[1] + l21 * z1 + l22 * z2;
        let f = field.interpolate(&crate::linalg::VecD::from_slice_unchecked(&[x, y], Dim::TWO));
        if f > 0.0 && u.ln() < f.ln() - log_g(x, y) - log_bound {
            points.push(x);
            points.push(y);
        }
    }
    let acceptance = m as f64 / proposed as f64;
    if acceptance < MIN_ACCEPTANCE {
        return Err(Error::LowAcceptance(acceptance));
    }
    let mut set = SampleSet::new(Dim::TWO, points, SampleSource::Limit)?;
    set.acceptance = Some(acceptance);
    Ok(set)
}

/// Squared W₂ between the empirical laws of two sorted samples.
///
/// The quantile functions are step functions with jumps at i/m and j/n; the
/// integral of their squared difference is evaluated exactly by merging the
/// breakpoints. For m = n this is the sorted matching.
pub fn w2_squared_1d(a: &[f64], b: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    if m == n {
        return a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / m as f64;
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0f64;
    let mut total = 0.0;
    while i < m && j < n {
        let next_a = (i + 1) as f64 / m as f64;
        let next_b = (j + 1) as f64 / n as f64;
        let next = next_a.min(next_b);
        let diff = a[i] - b[j];
        total += (next - u) * diff * diff;
        u = next;
        // Advance both on a shared breakpoint, compared in exact integers.
        let (ka, kb) = ((i + 1) * n, (j + 1) * m);
        if ka <= kb {
            i += 1;
        }
        if kb <= ka {
            j += 1;
        }
    }
    total
}

fn random_direction(d: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = replica_rng(seed, index);
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn project(set: &SampleSet, theta: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = (0..set.len())
        .map(|i| set.point(i).iter().zip(theta).map(|(x, t)| x * t).sum())
        .collect();
    out.sort_unstable_by(f64::total_cmp);
    out
}

/// Per-direction squared 1D W₂ distances, direction p drawn from
/// `replica_rng(seed, p)`.
pub fn sliced_w2_projections(a: &SampleSet, b: &SampleSet, n_proj: usize, seed: u64) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(b.dim().get()));
    }
    if n_proj < MIN_PROJECTIONS {
        return Err(Error::Config(format!("sliced W2 needs at least {MIN_PROJECTIONS} projections, got {n_proj}")));
    }
    let d = a.dim().get();
    Ok((0..n_proj as u64)
        .map(|p| {
            let theta = random_direction(d, seed, p);
            w2_squared_1d(&project(a, &theta), &project(b, &theta))
        })
        .collect())
}

/// Root-mean over random directions of the squared 1D W₂ distance.
pub fn sliced_w2(a: &SampleSet, b: &SampleSet, n_proj: usize, seed: u64) -> Result<f64> {
    let per = sliced_w2_projections(a, b, n_proj, seed)?;
    Ok((per.iter().sum::<f64>() / per.len() as f64).sqrt())
}

fn kth_distances<const K: usize>(tree_pts: &[f64], query_pts: &[f64], rank: usize) -> Result<Vec<f64>> {
    let to_arrays = |flat: &[f64]| -> Vec<[f64; K]> {
        flat.chunks_exact(K).map(|c| std::array::from_fn(|a| c[a])).collect()
    };
    let entries = to_arrays(tree_pts);
    let tree: ImmutableKdTree<f64, K> =
        ImmutableKdTree::new_from_slice(&entries).map_err(|e| Error::Format(format!("k-d tree: {e:?}")))?;
    let rank_nz = NonZero::new(rank).ok_or_else(|| Error::Config("neighbour rank must be positive".into()))?;
    Ok(to_arrays(query_pts)
        .iter()
        .map(|q| {
            let hits = tree.query(q).nearest_n::<SquaredEuclidean<f64>>(rank_nz).execute();
            hits.last().map_or(f64::INFINITY, |h| h.distance.sqrt()).max(DISTANCE_FLOOR)
        })
        .collect())
}

/// k-nearest-neighbour estimate of KL(P ‖ Q):
/// (d/n) Σ ln(ν_k(i)/ρ_k(i)) + ln(m/(n−1)), where ρ_k is the k-th neighbour
/// distance of P's i-th point within P and ν_k its k-th neighbour distance
/// in Q. Close distributions may give slightly negative values, which are
/// returned as is.
pub fn knn_kl(p: &SampleSet, q: &SampleSet, k: usize) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension(q.dim().get()));
    }
    if k == 0 {
        return Err(Error::Config("neighbour rank must be positive".into()));
    }
    let (n, m) = (p.len(), q.len());
    if n < k + 1 || m < k {
        return Err(Error::Insufficient(format!("knn_kl with k = {k} needs |P| > k and |Q| >= k")));
    }
    // Within P the query point is its own nearest neighbour, so rank k + 1.
    let (rho, nu) = match p.dim().get() {
        2 => (kth_distances::<2>(p.points(), p.points(), k + 1)?, kth_distances::<2>(q.points(), p.points(), k)?),
        3 => (kth_distances::<3>(p.points(), p.points(), k + 1)?, kth_distances::<3>(q.points(), p.points(), k)?),
        d => return Err(Error::Dimension(d)),
    };
    let d = p.dim().as_f64();
    let sum: f64 = rho.iter().zip(&nu).map(|(r, v)| (v / r).ln()).sum();
    Ok(d * sum / n as f64 + (m as f64 / (n as f64 - 1.0)).ln())
}

/// √(2k · max(kl, 0)) − l1. Negative values beyond the combined estimator
/// error mean the two estimates cannot both be right.
pub fn ckp_check(kl_est: f64, l1_est: f64, k: usize) -> f64 {
    (2.0 * k as f64 * kl_est.max(0.0)).sqrt() - l1_est
}

/// L¹ distance between the histograms of two sample sets on the cube
/// [−L, L]^d with `bins` cells per axis. Mass outside the cube falls in one
/// overflow cell.
pub fn histogram_l1(a: &SampleSet, b: &SampleSet, bins: usize, half_width: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(b.dim().get()));
    }
    if bins == 0 || !(half_width > 0.0) {
        return Err(Error::Config("histogram needs bins >= 1 and a positive half width".into()));
    }
    let d = a.dim().get();
    let cells = bins.pow(d as u32);
    let width = 2.0 * half_width / bins as f64;
    let hist = |s: &SampleSet| {
        let mut h = vec![0.0; cells + 1];
        let w = 1.0 / s.len() as f64;
        for i in 0..s.len() {
            let mut idx = 0usize;
            let mut inside = true;
            for &x in s.point(i) {
                let c = ((x + half_width) / width).floor();
                if !(c >= 0.0 && c < bins as f64) {
                    inside = false;
                    break;
                }
                idx = idx * bins + c as usize;
            }
            h[if inside { idx } else { cells }] += w;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    Ok(ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum())
}

/// Delete-a-group jackknife: the statistic on the full set and its
/// standard error from `groups` leave-one-group-out evaluations.
pub fn jackknife<F>(set: &SampleSet, groups: usize, stat: F) -> Result<(f64, f64)>
where
    F: Fn(&SampleSet) -> Result<f64>,
{
    if groups < 2 || groups > set.len() / 2 {
        return Err(Error::Insufficient(format!("cannot split {} points into {groups} jackknife groups", set.len())));
    }
    let full = stat(set)?;
    let n = set.len();
    let mut leave_out = Vec::with_capacity(groups);
    for g in 0..groups {
        let keep = (0..n).filter(|i| i * groups / n != g);
        leave_out.push(stat(&set.subset(keep)?)?);
    }
    let gf = groups as f64;
    let mean = leave_out.iter().sum::<f64>() / gf;
    let var = (gf - 1.0) / gf * leave_out.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    Ok((full, var.sqrt()))
}

/// Ordinary least squares fit of ln(value) against ln(N).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn convergence_slope(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Insufficient(format!("a rate fit needs at least 3 points, got {}", points.len())));
    }
    for &(n, v) in points {
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NonPositive(n));
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive(v));
        }
    }
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    if ns.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Insufficient("rate fit needs distinct N values".into()));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n.ln(), v.ln())).collect();
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit { slope, intercept, r_squared, points: points.to_vec() })
}

//! Particle-level functionals: moments, directional temperatures, the Law of
//! Large Numbers functional and the mixed-moment hierarchy.
//!
//! Every functional runs in O(N) for fixed d. Sums over distinct index
//! tuples are expanded into power sums by Möbius inversion over set
//! partitions; [`brute`] holds explicit loop versions for testing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Dim;
use crate::moments::MomentState;
use crate::particle::{diffusion_matrix_fast, ParticleState, SchemeKind, SufficientStats};

/// (1/N) Σ_i |v^i|^p for even p ≥ 2.
///
/// For p = 2 the value is assembled from the directional temperatures, so
/// that Σ_α Ψ_α equals it exactly.
pub fn empirical_moment(state: &ParticleState, p: u32) -> Result<f64> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::Config(format!("moment order must be even and at least 2, got {p}")));
    }
    if p == 2 {
        return Ok(directional_temperatures(state).iter().sum());
    }
    let half = (p / 2) as i32;
    let sum: f64 = state.iter().map(|v| v.norm_sq().powi(half)).sum();
    Ok(sum / state.n() as f64)
}

/// Ψ_α = (1/N) Σ_i (v^i_α)², zero-based α.
pub fn directional_temperature_emp(state: &ParticleState, alpha: usize) -> Result<f64> {
    let d = state.dim().get();
    if alpha >= d {
        return Err(Error::Index(format!("direction {alpha} out of range for d = {d}")));
    }
    let sum: f64 = state.iter().map(|v| v[alpha] * v[alpha]).sum();
    Ok(sum / state.n() as f64)
}

fn directional_temperatures(state: &ParticleState) -> Vec<f64> {
    (0..state.dim().get())
        .map(|a| directional_temperature_emp(state, a).expect("index in range"))
        .collect()
}

/// (1/N) Σ_i v^i_α v^i_β for α < β, in lexicographic pair order.
pub fn cross_moments(state: &ParticleState) -> Vec<f64> {
    let inv_n = 1.0 / state.n() as f64;
    state
        .dim()
        .pair_indices()
        .map(|(a, b)| state.iter().map(|v| v[a] * v[b]).sum::<f64>() * inv_n)
        .collect()
}

/// (1/N) Σ_i |ā(t, v^i) − (1/N) Σ_j a(v^i − v^j)|²_F with ā from the
/// closed-form moment layer.
pub fn lln_functional(state: &ParticleState, t: f64, moments: &MomentState) -> Result<f64> {
    if moments.dim() != state.dim() {
        return Err(Error::Dimension(moments.dim().get()));
    }
    let stats = SufficientStats::from_state(state);
    let sum: f64 = state
        .iter()
        .map(|v| (moments.abar(&v, t) - diffusion_matrix_fast(&stats, &v)).frobenius_sq())
        .sum();
    Ok(sum / state.n() as f64)
}

/// Σ over pairwise distinct (i_1, …, i_k) of Π_t cols[t][i_t], for k ≤ 4.
///
/// Möbius inversion on the partition lattice:
/// Σ_distinct = Σ_π Π_{B∈π} (−1)^{|B|−1} (|B|−1)! Σ_i Π_{t∈B} cols[t][i].
pub fn distinct_sum(cols: &[&[f64]]) -> f64 {
    let k = cols.len();
    assert!((1..=4).contains(&k), "distinct sums support 1 to 4 factors");
    let n = cols[0].len();
    assert!(cols.iter().all(|c| c.len() == n));
    if n < k {
        return 0.0;
    }
    let mut block = [0.0f64; 16];
    for (mask, slot) in block.iter_mut().enumerate().skip(1).take((1 << k) - 1) {
        let mut s = 0.0;
        for i in 0..n {
            let mut prod = 1.0;
            for (t, col) in cols.iter().enumerate() {
                if mask & (1 << t) != 0 {
                    prod *= col[i];
                }
            }
            s += prod;
        }
        *slot = s;
    }
    let mut total = 0.0;
    // Restricted growth strings enumerate set partitions of {0..k}.
    let mut rgs = [0usize; 4];
    loop {
        let nblocks = rgs[..k].iter().max().unwrap() + 1;
        let mut term = 1.0;
        for b in 0..nblocks {
            let mut mask = 0;
            let mut size = 0;
            for t in 0..k {
                if rgs[t] == b {
                    mask |= 1 << t;
                    size += 1;
                }
            }
            let sign = if size % 2 == 1 { 1.0 } else { -1.0 };
            let fact = (1..size).product::<usize>() as f64;
            term *= sign * fact * block[mask];
        }
        total += term;
        // Next restricted growth string.
        let mut pos = k;
        loop {
            if pos <= 1 {
                return total;
            }
            pos -= 1;
            let bound = rgs[..pos].iter().max().unwrap() + 1;
            if rgs[pos] < bound {
                rgs[pos] += 1;
                for r in rgs.iter_mut().take(k).skip(pos + 1) {
                    *r = 0;
                }
                break;
            }
        }
    }
}

struct Columns {
    comp: Vec<Vec<f64>>,
    sq: Vec<Vec<f64>>,
    energy: Vec<f64>,
    prod: Vec<Vec<f64>>,
}

impl Columns {
    fn new(state: &ParticleState) -> Self {
        let d = state.dim().get();
        let comp: Vec<Vec<f64>> = (0..d).map(|a| state.iter().map(|v| v[a]).collect()).collect();
        let sq = comp.iter().map(|c| c.iter().map(|x| x * x).collect()).collect();
        let energy = state.iter().map(|v| v.norm_sq()).collect();
        let prod = state
            .dim()
            .pair_indices()
            .map(|(a, b)| comp[a].iter().zip(&comp[b]).map(|(x, y)| x * y).collect())
            .collect();
        Columns { comp, sq, energy, prod }
    }
}

fn pair_label(a: usize, b: usize) -> String {
    format!("{}{}", a + 1, b + 1)
}

/// Named mixed-moment functionals of the empirical measure.
///
/// Pair sums carry 1/N², triple sums 1/N³ and quadruple sums 1/N⁴; all run
/// over pairwise distinct indices. Directions in the names are one-based.
///
/// * `cross` = Σ v^i·v^j, `alpha_cross_α` = Σ v^i_α v^j_α
/// * `energy_energy` = Σ |v^i|²|v^j|², `dir_dir_α` = Σ (v^i_α)²(v^j_α)²
/// * `energy_dir_α` = Σ |v^i|²(v^j_α)², `ab_cross_αβ` = Σ v^i_α v^i_β v^j_α v^j_β
/// * `cross_energy` = Σ (v^i·v^j)|v^k|², `alpha_cross_energy_α` = Σ v^i_α v^j_α |v^k|²
/// * `alpha_cross_dir_αβ` = Σ v^i_α v^j_α (v^k_β)²
/// * `ab_mixed_αβ` = Σ v^i_α v^i_β v^j_α v^k_β
/// * `cross_quad` = Σ (v^i·v^j)(v^k·v^l), `ab_quad_αβ` = Σ v^i_α v^j_β v^k_α v^l_β
pub fn mixed_moment_functionals(state: &ParticleState) -> BTreeMap<String, f64> {
    let d = state.dim().get();
    let nf = state.n() as f64;
    let (n2, n3, n4) = (nf * nf, nf * nf * nf, nf * nf * nf * nf);
    let c = Columns::new(state);
    let pairs: Vec<(usize, usize)> = state.dim().pair_indices().collect();
    let mut out = BTreeMap::new();

    let alpha_cross: Vec<f64> = (0..d).map(|a| distinct_sum(&[&c.comp[a], &c.comp[a]])).collect();
    out.insert("cross".to_string(), alpha_cross.iter().sum::<f64>() / n2);
    out.insert("energy_energy".to_string(), distinct_sum(&[&c.energy, &c.energy]) / n2);
    let alpha_cross_energy: Vec<f64> =
        (0..d).map(|a| distinct_sum(&[&c.comp[a], &c.comp[a], &c.energy])).collect();
    out.insert("cross_energy".to_string(), alpha_cross_energy.iter().sum::<f64>() / n3);
    let mut cross_quad = 0.0;
    for a in 0..d {
        for b in 0..d {
            cross_quad += distinct_sum(&[&c.comp[a], &c.comp[a], &c.comp[b], &c.comp[b]]);
        }
    }
    out.insert("cross_quad".to_string(), cross_quad / n4);

    for a in 0..d {
        let l = a + 1;
        out.insert(format!("alpha_cross_{l}"), alpha_cross[a] / n2);
        out.insert(format!("dir_dir_{l}"), distinct_sum(&[&c.sq[a], &c.sq[a]]) / n2);
        out.insert(format!("energy_dir_{l}"), distinct_sum(&[&c.energy, &c.sq[a]]) / n2);
        out.insert(format!("alpha_cross_energy_{l}"), alpha_cross_energy[a] / n3);
        for b in 0..d {
            let v = distinct_sum(&[&c.comp[a], &c.comp[a], &c.sq[b]]);
            out.insert(format!("alpha_cross_dir_{}", pair_label(a, b)), v / n3);
        }
    }
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let lab = pair_label(a, b);
        out.insert(format!("ab_cross_{lab}"), distinct_sum(&[&c.prod[p], &c.prod[p]]) / n2);
        out.insert(
            format!("ab_mixed_{lab}"),
            distinct_sum(&[&c.prod[p], &c.comp[a], &c.comp[b]]) / n3,
        );
        out.insert(
            format!("ab_quad_{lab}"),
            distinct_sum(&[&c.comp[a], &c.comp[b], &c.comp[a], &c.comp[b]]) / n4,
        );
    }
    out
}

/// M_p(0) ((p + d − 3)/(d − 1))^{p/2} e^{p(p−2)t/N}.
pub fn moment_bound(mp0: f64, p: u32, d: Dim, n: usize, t: f64) -> Result<f64> {
    if p <= 2 {
        return Err(Error::Config(format!("moment bound needs p > 2, got {p}")));
    }
    if n == 0 {
        return Err(Error::Config("particle count must be at least 1".into()));
    }
    let (pf, df) = (p as f64, d.as_f64());
    let growth = ((pf + df - 3.0) / (df - 1.0)).powf(pf / 2.0);
    Ok(mp0 * growth * (pf * (pf - 2.0) * t / n as f64).exp())
}

/// bound − M_p(t); a negative margin flags a violation.
pub fn moment_bound_check(mp_t: f64, mp0: f64, p: u32, d: Dim, n: usize, t: f64) -> Result<f64> {
    Ok(moment_bound(mp0, p, d, n, t)? - mp_t)
}

/// All tracked functionals of one replica at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRecord {
    pub time: f64,
    pub m2: f64,
    pub m4: f64,
    /// Order p of the extra moment column.
    pub p: u32,
    pub mp: f64,
    pub psi: Vec<f64>,
    pub cross_moments: Vec<f64>,
    pub lln_value: f64,
    pub hierarchy: BTreeMap<String, f64>,
    pub replica_id: u64,
    pub scheme: SchemeKind,
}

impl StatRecord {
    pub fn compute(
        state: &ParticleState,
        moments: &MomentState,
        p: u32,
        replica_id: u64,
        scheme: SchemeKind,
    ) -> Result<Self> {
        let psi = directional_temperatures(state);
        Ok(StatRecord {
            time: state.time(),
            m2: psi.iter().sum(),
            m4: empirical_moment(state, 4)?,
            p,
            mp: empirical_moment(state, p)?,
            cross_moments: cross_moments(state),
            lln_value: lln_functional(state, state.time(), moments)?,
            hierarchy: mixed_moment_functionals(state),
            psi,
            replica_id,
            scheme,
        })
    }

    pub fn dim(&self) -> Result<Dim> {
        Dim::new(self.psi.len())
    }

    pub fn is_finite(&self) -> bool {
        [self.time, self.m2, self.m4, self.mp, self.lln_value]
            .iter()
            .chain(&self.psi)
            .chain(&self.cross_moments)
            .chain(self.hierarchy.values())
            .all(|x| x.is_finite())
    }
}

/// Brute-force loop evaluations used as test oracles.
pub mod brute {
    use super::*;
    use crate::kernels::coeff_a;
    use crate::linalg::MatD;

    /// A loop-evaluated sum together with the sum of absolute summands, the
    /// natural scale for judging cancellation error.
    #[derive(Clone, Copy, Debug, Default, PartialEq)]
    pub struct Oracle {
        pub value: f64,
        pub magnitude: f64,
    }

    impl Oracle {
        fn add(&mut self, x: f64) {
            self.value += x;
            self.magnitude += x.abs();
        }

        /// Adds a summand whose own absolute scale exceeds |x|, as when the
        /// value is closed by subtracting from a full sum.
        fn add_scaled(&mut self, x: f64, scale: f64) {
            self.value += x;
            self.magnitude += scale;
        }

        fn scaled(self, s: f64) -> Oracle {
            Oracle { value: self.value * s, magnitude: self.magnitude * s }
        }

        /// |x − value| ≤ rel · max(|value|, magnitude, tiny).
        pub fn agrees(&self, x: f64, rel: f64) -> bool {
            (x - self.value).abs() <= rel * self.value.abs().max(self.magnitude).max(1e-300)
        }
    }

    /// Double loop over pairs with a(v^i − v^j) formed explicitly.
    pub fn lln_functional(state: &ParticleState, t: f64, moments: &MomentState) -> f64 {
        let n = state.n();
        let mut total = 0.0;
        for i in 0..n {
            let vi = state.velocity(i);
            let mut acc = MatD::zeros(state.dim());
            for j in 0..n {
                acc = acc + coeff_a(&(vi - state.velocity(j)));
            }
            let diff = moments.abar(&vi, t) - acc.scale(1.0 / n as f64);
            total += diff.frobenius_sq();
        }
        total / n as f64
    }

    /// Same names as [`super::mixed_moment_functionals`], by explicit loops.
    ///
    /// Pairs and triples are looped over directly. Quadruple sums loop over
    /// distinct (i, j, k) and close the last index by subtracting the three
    /// excluded terms from the full sum, giving O(N³) overall.
    pub fn mixed_moment_functionals(state: &ParticleState) -> BTreeMap<String, Oracle> {
        let dim = state.dim();
        let d = dim.get();
        let n = state.n();
        let nf = n as f64;
        let vs: Vec<_> = state.iter().collect();
        let pairs: Vec<(usize, usize)> = dim.pair_indices().collect();
        let mut out: BTreeMap<String, Oracle> = BTreeMap::new();
        let mut put = |name: String, o: Oracle| {
            out.insert(name, o);
        };

        let mut cross = Oracle::default();
        let mut ee = Oracle::default();
        let mut ac = vec![Oracle::default(); d];
        let mut dd = vec![Oracle::default(); d];
        let mut ed = vec![Oracle::default(); d];
        let mut abc = vec![Oracle::default(); pairs.len()];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (x, y) = (&vs[i], &vs[j]);
                cross.add(x.dot(y));
                ee.add(x.norm_sq() * y.norm_sq());
                for a in 0..d {
                    ac[a].add(x[a] * y[a]);
                    dd[a].add(x[a] * x[a] * y[a] * y[a]);
                    ed[a].add(x.norm_sq() * y[a] * y[a]);
                }
                for (p, &(a, b)) in pairs.iter().enumerate() {
                    abc[p].add(x[a] * x[b] * y[a] * y[b]);
                }
            }
        }

        let col_sum = |a: usize| vs.iter().map(|v| v[a]).sum::<f64>();
        let totals: Vec<f64> = (0..d).map(col_sum).collect();
        let abs_totals: Vec<f64> = (0..d).map(|a| vs.iter().map(|v| v[a].abs()).sum()).collect();
        let mut ce = Oracle::default();
        let mut ace = vec![Oracle::default(); d];
        let mut acd = vec![vec![Oracle::default(); d]; d];
        let mut abm = vec![Oracle::default(); pairs.len()];
        let mut cq = Oracle::default();
        let mut abq = vec![Oracle::default(); pairs.len()];
        for i in 0..n {
            for j in 0..n {
                if j == i {
                    continue;
                }
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let (x, y, z) = (&vs[i], &vs[j], &vs[k]);
                    ce.add(x.dot(y) * z.norm_sq());
                    for a in 0..d {
                        ace[a].add(x[a] * y[a] * z.norm_sq());
                        for b in 0..d {
                            acd[a][b].add(x[a] * y[a] * z[b] * z[b]);
                        }
                    }
                    let rest = |b: usize| totals[b] - x[b] - y[b] - z[b];
                    // (v^i·v^j)(v^k·v^l) = Σ_ab v^i_a v^j_a v^k_b v^l_b.
                    for a in 0..d {
                        for b in 0..d {
                            let head = x[a] * y[a] * z[b];
                            cq.add_scaled(head * rest(b), (head * abs_totals[b]).abs());
                        }
                    }
                    for (p, &(a, b)) in pairs.iter().enumerate() {
                        abm[p].add(x[a] * x[b] * y[a] * z[b]);
                        let head = x[a] * y[b] * z[a];
                        abq[p].add_scaled(head * rest(b), (head * abs_totals[b]).abs());
                    }
                }
            }
        }

        let (s2, s3, s4) = (1.0 / (nf * nf), 1.0 / (nf * nf * nf), 1.0 / (nf * nf * nf * nf));
        put("cross".into(), cross.scaled(s2));
        put("energy_energy".into(), ee.scaled(s2));
        put("cross_energy".into(), ce.scaled(s3));
        put("cross_quad".into(), cq.scaled(s4));
        for a in 0..d {
            let l = a + 1;
            put(format!("alpha_cross_{l}"), ac[a].scaled(s2));
            put(format!("dir_dir_{l}"), dd[a].scaled(s2));
            put(format!("energy_dir_{l}"), ed[a].scaled(s2));
            put(format!("alpha_cross_energy_{l}"), ace[a].scaled(s3));
            for b in 0..d {
                put(format!("alpha_cross_dir_{}", pair_label(a, b)), acd[a][b].scaled(s3));
            }
        }
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let lab = pair_label(a, b);
            put(format!("ab_cross_{lab}"), abc[p].scaled(s2));
            put(format!("ab_mixed_{lab}"), abm[p].scaled(s3));
            put(format!("ab_quad_{lab}"), abq[p].scaled(s4));
        }
        out
    }
}

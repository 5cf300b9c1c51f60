//! Initial laws and i.i.d. sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ParticleState;
use crate::error::{Error, Result};
use crate::linalg::{Dim, VecD};
use crate::moments::MomentState;

const LAW_TOL: f64 = 1e-12;

/// Law of the i.i.d. initial velocities.
///
/// Every admissible law has unit mass, zero mean, energy d and a diagonal
/// second-moment matrix whose entries E_α(0) lie strictly inside (0, d).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    /// Centered Gaussian with covariance diag(variances).
    AnisotropicGaussian { variances: Vec<f64> },
    /// Σ_k w_k N(c_k, diag(σ²_k)).
    GaussianMixture {
        weights: Vec<f64>,
        centers: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
}

impl InitialLaw {
    pub fn isotropic(d: Dim) -> Self {
        InitialLaw::AnisotropicGaussian { variances: vec![1.0; d.get()] }
    }

    pub fn anisotropic(variances: &[f64]) -> Result<Self> {
        let law = InitialLaw::AnisotropicGaussian { variances: variances.to_vec() };
        law.validate()?;
        Ok(law)
    }

    /// Two equal-weight lobes at ±e₁. E(0) = (1.5, 0.5) in d = 2 and
    /// (1.5, 0.75, 0.75) in d = 3.
    pub fn bimodal(d: Dim) -> Self {
        let (c, s): (Vec<f64>, Vec<f64>) = match d.get() {
            2 => (vec![1.0, 0.0], vec![0.5, 0.5]),
            _ => (vec![1.0, 0.0, 0.0], vec![0.5, 0.75, 0.75]),
        };
        let neg: Vec<f64> = c.iter().map(|x| -x).collect();
        InitialLaw::GaussianMixture {
            weights: vec![0.5, 0.5],
            centers: vec![c, neg],
            variances: vec![s.clone(), s],
        }
    }

    pub fn dim(&self) -> Result<Dim> {
        let d = match self {
            InitialLaw::AnisotropicGaussian { variances } => variances.len(),
            InitialLaw::GaussianMixture { variances, .. } => variances.first().map_or(0, Vec::len),
        };
        Dim::new(d)
    }

    /// Checks the normalization and ellipticity constraints and returns the
    /// diagonal of the second-moment matrix.
    pub fn validate(&self) -> Result<Vec<f64>> {
        let d = self.dim()?.get();
        let e = match self {
            InitialLaw::AnisotropicGaussian { variances } => {
                if let Some(v) = variances.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                    return Err(Error::Config(format!("variance {v} must be positive")));
                }
                variances.clone()
            }
            InitialLaw::GaussianMixture { weights, centers, variances } => {
                let k = weights.len();
                if k == 0 || centers.len() != k || variances.len() != k {
                    return Err(Error::Config(
                        "mixture needs equally many weights, centers and variances".into(),
                    ));
                }
                if centers.iter().chain(variances).any(|c| c.len() != d) {
                    return Err(Error::Config(format!("mixture components must be {d}-dimensional")));
                }
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return Err(Error::Config("mixture weights must be positive".into()));
                }
                if variances.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::Config("mixture variances must be positive".into()));
                }
                let wsum: f64 = weights.iter().sum();
                if (wsum - 1.0).abs() > LAW_TOL {
                    return Err(Error::Config(format!("mixture weights sum to {wsum}, not 1")));
                }
                for a in 0..d {
                    let mean: f64 = weights.iter().zip(centers).map(|(w, c)| w * c[a]).sum();
                    if mean.abs() > LAW_TOL {
                        return Err(Error::Config(format!("mixture mean component {a} is {mean}, not 0")));
                    }
                    for b in a + 1..d {
                        let cross: f64 = weights.iter().zip(centers).map(|(w, c)| w * c[a] * c[b]).sum();
                        if cross.abs() > LAW_TOL {
                            return Err(Error::Config(format!(
                                "mixture second moment has off-diagonal entry {cross} at ({a}, {b})"
                            )));
                        }
                    }
                }
                (0..d)
                    .map(|a| {
                        weights
                            .iter()
                            .zip(centers.iter().zip(variances))
                            .map(|(w, (c, s))| w * (c[a] * c[a] + s[a]))
                            .sum()
                    })
                    .collect()
            }
        };
        let total: f64 = e.iter().sum();
        if (total - d as f64).abs() > LAW_TOL {
            return Err(Error::Config(format!("initial energy is {total}, expected {d}")));
        }
        if let Some(x) = e.iter().find(|x| !(**x > 0.0 && **x < d as f64)) {
            return Err(Error::Config(format!(
                "directional temperature {x} outside the open interval (0, {d})"
            )));
        }
        Ok(e)
    }

    /// Anisotropy D_αα = E_α(0) − 1 and the derived ellipticity margin.
    pub fn moment_state(&self) -> Result<MomentState> {
        let e = self.validate()?;
        MomentState::new(e.iter().map(|x| x - 1.0).collect())
    }

    /// Probability density at `v`.
    pub fn density(&self, v: &VecD) -> f64 {
        fn gauss(v: &VecD, c: Option<&[f64]>, s: &[f64]) -> f64 {
            let mut q = 0.0;
            let mut norm = 1.0;
            for a in 0..s.len() {
                let x = v[a] - c.map_or(0.0, |c| c[a]);
                q += x * x / s[a];
                norm *= 2.0 * std::f64::consts::PI * s[a];
            }
            (-0.5 * q).exp() / norm.sqrt()
        }
        match self {
            InitialLaw::AnisotropicGaussian { variances } => gauss(v, None, variances),
            InitialLaw::GaussianMixture { weights, centers, variances } => weights
                .iter()
                .zip(centers.iter().zip(variances))
                .map(|(w, (c, s))| w * gauss(v, Some(c), s))
                .sum(),
        }
    }

    /// E|v|⁴ under the law.
    pub fn fourth_moment(&self) -> f64 {
        // For N(c, diag(s)): E|v|⁴ = (|c|² + Σs)² + 2Σs² + 4Σ c_a² s_a.
        fn gauss4(c: &[f64], s: &[f64]) -> f64 {
            let c2: f64 = c.iter().map(|x| x * x).sum();
            let tr: f64 = s.iter().sum();
            let s2: f64 = s.iter().map(|x| x * x).sum();
            let cs: f64 = c.iter().zip(s).map(|(c, s)| c * c * s).sum();
            (c2 + tr).powi(2) + 2.0 * s2 + 4.0 * cs
        }
        match self {
            InitialLaw::AnisotropicGaussian { variances } => gauss4(&vec![0.0; variances.len()], variances),
            InitialLaw::GaussianMixture { weights, centers, variances } => weights
                .iter()
                .zip(centers.iter().zip(variances))
                .map(|(w, (c, s))| w * gauss4(c, s))
                .sum(),
        }
    }
}

/// Draws N i.i.d. velocities from `law`. With `exact_center` the empirical
/// mean is subtracted afterwards; this removes momentum noise at the cost of
/// coupling the particles.
pub fn sample_initial<R: Rng + ?Sized>(
    law: &InitialLaw,
    n: usize,
    rng: &mut R,
    exact_center: bool,
) -> Result<ParticleState> {
    law.validate()?;
    if n == 0 {
        return Err(Error::Config("particle count must be at least 1".into()));
    }
    let d = law.dim()?;
    let dd = d.get();
    let mut flat = Vec::with_capacity(n * dd);
    match law {
        InitialLaw::AnisotropicGaussian { variances } => {
            for _ in 0..n {
                for s in variances {
                    let g: f64 = rng.sample(StandardNormal);
                    flat.push(s.sqrt() * g);
                }
            }
        }
        InitialLaw::GaussianMixture { weights, centers, variances } => {
            for _ in 0..n {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = weights.len() - 1;
                for (idx, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = idx;
                        break;
                    }
                }
                for a in 0..dd {
                    let g: f64 = rng.sample(StandardNormal);
                    flat.push(centers[k][a] + variances[k][a].sqrt() * g);
                }
            }
        }
    }
    let mut state = ParticleState::new(d, flat, 0.0)?;
    if exact_center {
        state.center();
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::SufficientStats;
    use crate::rng::replica_rng;

    #[test]
    fn presets_are_admissible() {
        for d in [Dim::TWO, Dim::THREE] {
            assert_eq!(InitialLaw::isotropic(d).validate().unwrap(), vec![1.0; d.get()]);
            let e = InitialLaw::bimodal(d).validate().unwrap();
            assert!((e.iter().sum::<f64>() - d.as_f64()).abs() < 1e-12);
            assert!(InitialLaw::bimodal(d).moment_state().unwrap().eta() > 0.0);
        }
        assert_eq!(InitialLaw::bimodal(Dim::TWO).validate().unwrap(), vec![1.5, 0.5]);
    }

    #[test]
    fn rejects_inadmissible_laws() {
        assert!(InitialLaw::anisotropic(&[1.0, 1.5]).is_err());
        assert!(InitialLaw::anisotropic(&[2.0, 0.0]).is_err());
        assert!(InitialLaw::anisotropic(&[1.0]).is_err());
        let shifted = InitialLaw::GaussianMixture {
            weights: vec![1.0],
            centers: vec![vec![0.5, 0.0]],
            variances: vec![vec![0.75, 1.0]],
        };
        assert!(shifted.validate().is_err());
        let tilted = InitialLaw::GaussianMixture {
            weights: vec![0.5, 0.5],
            centers: vec![vec![0.5, 0.5], vec![-0.5, -0.5]],
            variances: vec![vec![0.75, 0.75]; 2],
        };
        assert!(tilted.validate().is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        for law in [InitialLaw::anisotropic(&[1.5, 0.5]).unwrap(), InitialLaw::bimodal(Dim::TWO)] {
            let h = 0.05;
            let mut mass = 0.0;
            let mut e1 = 0.0;
            for i in -200..=200 {
                for j in -200..=200 {
                    let v = VecD::from_slice(&[i as f64 * h, j as f64 * h]).unwrap();
                    let f = law.density(&v);
                    mass += f * h * h;
                    e1 += v[0] * v[0] * f * h * h;
                }
            }
            assert!((mass - 1.0).abs() < 1e-8);
            assert!((e1 - 1.5).abs() < 1e-8);
        }
    }

    #[test]
    fn fourth_moment_matches_quadrature() {
        let law = InitialLaw::bimodal(Dim::TWO);
        let h = 0.05;
        let mut m4 = 0.0;
        for i in -240..=240 {
            for j in -240..=240 {
                let v = VecD::from_slice(&[i as f64 * h, j as f64 * h]).unwrap();
                m4 += v.norm_sq().powi(2) * law.density(&v) * h * h;
            }
        }
        assert!((m4 - law.fourth_moment()).abs() < 1e-6);
        // Standard Gaussian: d(d + 2).
        assert!((InitialLaw::isotropic(Dim::THREE).fourth_moment() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn anisotropic_sample_variances() {
        let n = 40_000;
        let law = InitialLaw::anisotropic(&[1.5, 0.5]).unwrap();
        let st = sample_initial(&law, n, &mut replica_rng(11, 0), false).unwrap();
        let s = SufficientStats::from_state(&st);
        let tol = 4.0 / (n as f64).sqrt();
        assert!((s.second.get(0, 0) - 1.5).abs() < tol);
        assert!((s.second.get(1, 1) - 0.5).abs() < tol);
    }

    #[test]
    fn mixture_sample_mean_and_energy() {
        let n = 40_000;
        for d in [Dim::TWO, Dim::THREE] {
            let law = InitialLaw::bimodal(d);
            let st = sample_initial(&law, n, &mut replica_rng(12, 0), false).unwrap();
            let s = SufficientStats::from_state(&st);
            let rn = (n as f64).sqrt();
            assert!(s.mean.norm() < 4.0 * d.as_f64().sqrt() / rn);
            let sd = (law.fourth_moment() - d.as_f64().powi(2)).sqrt();
            assert!((s.energy - d.as_f64()).abs() < 4.0 * sd / rn);
        }
    }

    #[test]
    fn exact_center_removes_mean() {
        let law = InitialLaw::isotropic(Dim::THREE);
        let st = sample_initial(&law, 500, &mut replica_rng(1, 0), true).unwrap();
        assert!(SufficientStats::from_state(&st).mean.norm() < 1e-14);
    }
}

//! Coefficient fields of the Landau operator for Maxwellian molecules.
//!
//! With z ∈ R^d the collision kernel is a(z) = |z|² Id − z ⊗ z, its
//! divergence b(z) = −(d−1) z and the divergence of b is the constant
//! c = −d(d−1). The environmental-noise fields ξ_{αβ} satisfy
//! Σ_{α<β} ξ_{αβ}(z) ⊗ ξ_{αβ}(z) = a(z).

use crate::error::{Error, Result};
use crate::linalg::{MatD, VecD};

/// Default tolerance for [`psd_sqrt`].
pub const PSD_TOL: f64 = 1e-10;

/// a(z) = |z|² Id − z ⊗ z. Total: a(0) = 0.
#[inline]
pub fn coeff_a(z: &VecD) -> MatD {
    let d = z.dim().get();
    let r2 = z.norm_sq();
    let mut m = MatD::zeros(z.dim());
    for a in 0..d {
        for b in 0..d {
            let delta = if a == b { r2 } else { 0.0 };
            m.set(a, b, delta - z[a] * z[b]);
        }
    }
    m
}

/// b(z) = −(d−1) z.
#[inline]
pub fn coeff_b(z: &VecD) -> VecD {
    z.scale(-(z.dim().get() as f64 - 1.0))
}

/// c = −d(d−1).
pub fn coeff_c(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Dimension(d));
    }
    Ok(-((d * (d - 1)) as f64))
}

/// ξ_{αβ}(z): −z_β in slot α, z_α in slot β, zero elsewhere. Indices are
/// zero-based and must satisfy α < β < d.
pub fn xi_field(z: &VecD, alpha: usize, beta: usize) -> Result<VecD> {
    let d = z.dim().get();
    if alpha >= beta || beta >= d {
        return Err(Error::Index(format!(
            "xi field needs alpha < beta < {d}, got ({alpha}, {beta})"
        )));
    }
    let mut out = VecD::zeros(z.dim());
    out[alpha] = -z[beta];
    out[beta] = z[alpha];
    Ok(out)
}

/// Symmetric square root of a symmetric positive semidefinite matrix.
///
/// `tol` is applied on the Frobenius scale of `m`: the asymmetry and any
/// negative eigenvalue are compared against `tol * max(1, |m|_F)`.
/// Eigenvalues in `[-tol, 0)` are clamped to zero before rooting, as are
/// positive eigenvalues at round-off level.
pub fn psd_sqrt(m: &MatD, tol: f64) -> Result<MatD> {
    let norm = m.frobenius();
    let scale = tol * norm.max(1.0);
    let roundoff = 64.0 * f64::EPSILON * norm;
    let asym = m.asymmetry();
    if asym > scale {
        return Err(Error::Asymmetric { asymmetry: asym, tol: scale });
    }
    let (vals, vecs) = m.symmetric_eigen();
    let d = m.dim().get();
    let mut out = MatD::zeros(m.dim());
    for k in 0..d {
        let lam = vals[k];
        if lam < -scale {
            return Err(Error::NegativeEigenvalue { eigenvalue: lam, tol: scale });
        }
        let root = if lam <= roundoff { 0.0 } else { lam.sqrt() };
        if root == 0.0 {
            continue;
        }
        for a in 0..d {
            for b in a..d {
                let v = out.get(a, b) + root * vecs.get(a, k) * vecs.get(b, k);
                out.set(a, b, v);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            out.set(a, b, out.get(b, a));
        }
    }
    Ok(out)
}

/// a(z)^{1/2} = |z| Π(z), applied to a vector g without forming the matrix.
#[inline]
pub fn sqrt_a_apply(z: &VecD, g: &VecD) -> VecD {
    let r = z.norm();
    if r == 0.0 {
        return VecD::zeros(z.dim());
    }
    let proj = z.dot(g) / r;
    g.scale(r) - z.scale(proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Dim;
    use proptest::prelude::*;

    fn v(s: &[f64]) -> VecD {
        VecD::from_slice(s).unwrap()
    }

    #[test]
    fn coeff_a_examples() {
        let a = coeff_a(&v(&[1.0, 0.0]));
        assert_eq!(a, MatD::from_rows(&[&[0.0, 0.0], &[0.0, 1.0]]).unwrap());
        assert_eq!(coeff_a(&v(&[0.0, 0.0])), MatD::zeros(Dim::TWO));
        let z = v(&[3.0, 4.0]);
        let a = coeff_a(&z);
        assert_eq!(a, MatD::from_rows(&[&[16.0, -12.0], &[-12.0, 9.0]]).unwrap());
        assert_eq!(a.mul_vec(&z), VecD::zeros(Dim::TWO));
    }

    #[test]
    fn coeff_b_and_c_examples() {
        assert_eq!(coeff_b(&v(&[1.0, 2.0])), v(&[-1.0, -2.0]));
        assert_eq!(coeff_b(&v(&[1.0, 2.0, 3.0])), v(&[-2.0, -4.0, -6.0]));
        assert_eq!(coeff_b(&v(&[0.0, 0.0])), v(&[0.0, 0.0]));
        assert_eq!(coeff_c(2).unwrap(), -2.0);
        assert_eq!(coeff_c(3).unwrap(), -6.0);
        assert!(coeff_c(1).is_err());
    }

    #[test]
    fn xi_examples() {
        let z = v(&[1.0, 2.0, 3.0]);
        assert_eq!(xi_field(&z, 0, 1).unwrap(), v(&[-2.0, 1.0, 0.0]));
        assert_eq!(xi_field(&z, 0, 2).unwrap(), v(&[-3.0, 0.0, 1.0]));
        assert!(xi_field(&z, 1, 1).is_err());
        assert!(xi_field(&z, 2, 1).is_err());
        assert!(xi_field(&z, 1, 3).is_err());
    }

    #[test]
    fn psd_sqrt_examples() {
        let id = MatD::identity(Dim::TWO);
        assert!((psd_sqrt(&id, PSD_TOL).unwrap() - id).frobenius() < 1e-15);
        let m = MatD::diag(&[4.0, 9.0]).unwrap();
        let s = psd_sqrt(&m, PSD_TOL).unwrap();
        assert!((s - MatD::diag(&[2.0, 3.0]).unwrap()).frobenius() < 1e-14);
    }

    #[test]
    fn psd_sqrt_rejects_bad_input() {
        let asym = MatD::from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]).unwrap();
        assert!(matches!(psd_sqrt(&asym, PSD_TOL), Err(Error::Asymmetric { .. })));
        let neg = MatD::diag(&[1.0, -0.1]).unwrap();
        assert!(matches!(psd_sqrt(&neg, PSD_TOL), Err(Error::NegativeEigenvalue { .. })));
        // Tiny negative eigenvalues are clamped.
        let near = MatD::diag(&[1.0, -1e-13]).unwrap();
        let s = psd_sqrt(&near, PSD_TOL).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
    }

    /// Central-difference divergence of the columns of a reproduces b, and of b
    /// reproduces c.
    #[test]
    fn divergence_consistency() {
        for d in [2usize, 3] {
            let dim = Dim::new(d).unwrap();
            let z0 = VecD::from_slice(&[0.7, -1.3, 0.4][..d]).unwrap();
            let h = 1e-4;
            let mut div_a = VecD::zeros(dim);
            let mut div_b = 0.0;
            for beta in 0..d {
                let mut zp = z0;
                let mut zm = z0;
                zp[beta] += h;
                zm[beta] -= h;
                let (ap, am) = (coeff_a(&zp), coeff_a(&zm));
                for alpha in 0..d {
                    div_a[alpha] += (ap.get(alpha, beta) - am.get(alpha, beta)) / (2.0 * h);
                }
                div_b += (coeff_b(&zp)[beta] - coeff_b(&zm)[beta]) / (2.0 * h);
            }
            assert!((div_a - coeff_b(&z0)).norm() < 1e-6);
            assert!((div_b - coeff_c(d).unwrap()).abs() < 1e-6);
        }
    }

    fn arb_vec(d: usize) -> impl Strategy<Value = VecD> {
        proptest::collection::vec(-10.0f64..10.0, d).prop_map(|c| VecD::from_slice(&c).unwrap())
    }

    proptest! {
        #[test]
        fn coeff_a_structure(z in prop_oneof![arb_vec(2), arb_vec(3)]) {
            let a = coeff_a(&z);
            let d = z.dim().get() as f64;
            prop_assert_eq!(a.asymmetry(), 0.0);
            let scale = 1.0 + z.norm_sq();
            prop_assert!(a.mul_vec(&z).norm() <= 1e-12 * scale * z.norm().max(1.0));
            prop_assert!((a.trace() - (d - 1.0) * z.norm_sq()).abs() <= 1e-12 * scale);
            let (vals, _) = a.symmetric_eigen();
            prop_assert!(vals[0] >= -1e-12 * scale);
        }

        #[test]
        fn xi_quadratic_variation(z in prop_oneof![arb_vec(2), arb_vec(3)]) {
            let dim = z.dim();
            let mut sum = MatD::zeros(dim);
            for (a, b) in dim.pair_indices() {
                let x = xi_field(&z, a, b).unwrap();
                sum = sum + x.outer(&x);
            }
            prop_assert!((sum - coeff_a(&z)).max_abs() <= 1e-12 * (1.0 + z.norm_sq()));
        }

        #[test]
        fn sqrt_of_kernel_is_scaled_projection(z in prop_oneof![arb_vec(2), arb_vec(3)]) {
            let a = coeff_a(&z);
            let s = psd_sqrt(&a, PSD_TOL).unwrap();
            let r = z.norm();
            let expected = if r == 0.0 {
                MatD::zeros(z.dim())
            } else {
                MatD::identity(z.dim()).scale(r) - z.outer(&z).scale(1.0 / r)
            };
            let scale = 1.0 + a.frobenius();
            prop_assert!((s - expected).frobenius() <= PSD_TOL * scale);
            prop_assert!((s.matmul(&s) - a).frobenius() <= 10.0 * PSD_TOL * scale);
            // Matrix-free application agrees.
            let g = VecD::from_slice(&[0.3, -1.1, 0.8][..z.dim().get()]).unwrap();
            prop_assert!((sqrt_a_apply(&z, &g) - expected.mul_vec(&g)).norm() <= 1e-10 * scale);
        }

        #[test]
        fn psd_sqrt_squares_back(
            entries in proptest::collection::vec(-3.0f64..3.0, 9),
            d in 2usize..=3,
        ) {
            // G Gᵀ is PSD by construction.
            let dim = Dim::new(d).unwrap();
            let mut g = MatD::zeros(dim);
            for a in 0..d { for b in 0..d { g.set(a, b, entries[3 * a + b]); } }
            let m = g.matmul(&g.transpose());
            let s = psd_sqrt(&m, PSD_TOL).unwrap();
            prop_assert!(s.asymmetry() == 0.0);
            prop_assert!((s.matmul(&s) - m).frobenius() <= 10.0 * PSD_TOL * m.frobenius().max(1.0));
        }
    }
}

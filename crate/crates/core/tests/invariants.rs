use landau_core::particle::{diffusion_matrix_fast, interaction_drift_fast, run};
use landau_core::statistics::{lln_functional, mixed_moment_functionals};
use landau_core::{Dim, InitialLaw, MomentState, ParticleState, SchemeKind, SimConfig, SufficientStats, VecD};
use proptest::prelude::*;

fn state() -> impl Strategy<Value = ParticleState> {
    (2usize..=3, 2usize..40).prop_flat_map(|(d, n)| {
        prop::collection::vec(-4.0f64..4.0, n * d)
            .prop_map(move |vs| ParticleState::new(Dim::new(d).unwrap(), vs, 0.0).unwrap())
    })
}

fn scale(st: &ParticleState) -> f64 {
    st.velocities().iter().map(|x| x * x).sum::<f64>().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // Pairwise forces are odd in v^i − v^j, so the total drift vanishes.
    #[test]
    fn total_drift_is_zero(st in state()) {
        let stats = SufficientStats::from_state(&st);
        let mut total = VecD::zeros(st.dim());
        for v in st.iter() {
            total = total + interaction_drift_fast(&stats, &v);
        }
        prop_assert!(total.norm() <= 1e-12 * scale(&st));
    }

    #[test]
    fn diffusion_matrices_are_symmetric_psd(st in state()) {
        let stats = SufficientStats::from_state(&st);
        for v in st.iter() {
            let a = diffusion_matrix_fast(&stats, &v);
            let tol = 1e-12 * a.max_abs().max(1.0);
            prop_assert!(a.asymmetry() <= tol);
            let (eig, _) = a.symmetric_eigen();
            prop_assert!(eig[..st.dim().get()].iter().all(|&l| l >= -tol));
        }
    }

    #[test]
    fn functionals_ignore_particle_order(st in state()) {
        let d = st.dim().get();
        let mut rev = Vec::with_capacity(st.velocities().len());
        for chunk in st.velocities().chunks(d).rev() {
            rev.extend_from_slice(chunk);
        }
        let flipped = ParticleState::new(st.dim(), rev, 0.0).unwrap();
        let a = mixed_moment_functionals(&st);
        let b = mixed_moment_functionals(&flipped);
        let s = scale(&st).powi(2);
        for (k, x) in &a {
            prop_assert!((x - b[k]).abs() <= 1e-10 * s, "{k}: {x} vs {}", b[k]);
        }
        let m = MomentState::isotropic(st.dim());
        let (x, y) = (lln_functional(&st, 0.3, &m).unwrap(), lln_functional(&flipped, 0.3, &m).unwrap());
        prop_assert!(x >= 0.0);
        prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
    }

    // The temperatures relax to 1 while their sum stays d.
    #[test]
    fn temperatures_keep_their_trace(t in 0.0f64..3.0, a in 0.1f64..0.9) {
        let m = InitialLaw::anisotropic(&[1.0 + a, 1.0 - a / 2.0, 1.0 - a / 2.0]).unwrap().moment_state().unwrap();
        let e = m.temperatures(t);
        prop_assert!((e.iter().sum::<f64>() - 3.0).abs() <= 1e-12);
        prop_assert!((e[0] - 1.0).abs() <= a * (-12.0 * t).exp() + 1e-12);
    }
}

#[test]
fn replicas_are_reproducible_and_distinct() {
    let mut cfg = SimConfig::new(Dim::TWO, 64, 0.01, 0.2, SchemeKind::Fournier, 17);
    cfg.record_every = 5;
    let a = run(&cfg, 3).unwrap();
    let b = run(&cfg, 3).unwrap();
    let c = run(&cfg, 4).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_state.velocities(), b.final_state.velocities());
    assert_ne!(a.final_state.velocities(), c.final_state.velocities());
    assert_eq!(a.records.len(), 5);
}

#[test]
fn every_scheme_runs_to_completion() {
    for scheme in [SchemeKind::Fournier, SchemeKind::Fgm, SchemeKind::Environmental] {
        let mut cfg = SimConfig::new(Dim::THREE, 24, 0.01, 0.1, scheme, 5);
        cfg.initial = InitialLaw::bimodal(Dim::THREE);
        let out = run(&cfg, 0).unwrap();
        assert!(out.blow_up.is_none(), "{scheme:?}");
        assert!(out.records.iter().all(|r| r.is_finite()), "{scheme:?}");
        assert_eq!(out.records.last().unwrap().scheme, scheme);
    }
}

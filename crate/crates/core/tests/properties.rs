//! Randomized invariants: the scattering identity and its symmetries, the
//! closed-form block spectra against direct diagonalization, unit freedom of
//! the pair correlation, exact Hermiticity for real scatterers, and the
//! emptied idle ladder behind a closed scattering direction.

use std::f64::consts::PI;

use nhblockade_core::analytics::{g2_analytic_damped, weak_drive_amplitudes};
use nhblockade_core::hilbert::FockLayout;
use nhblockade_core::liouville::{steady_by_eigen, SolveOptions};
use nhblockade_core::model::{
    effective_hamiltonian, hermitian_split, scattering_rates, ModelParams,
};
use nhblockade_core::observables::{g2_zero, subspace_spectrum, SpectralSubspace};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn params(
    lambda1: C64,
    lambda2: C64,
    m: u32,
    mu: f64,
    delta: f64,
    u: f64,
    drive: f64,
) -> ModelParams {
    ModelParams {
        lambda1,
        lambda2,
        m,
        mu,
        delta,
        u,
        gamma: 1.0,
        drive,
        omega_m: None,
        g: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scattering_product_follows_the_two_scatterer_identity(
        re1 in -2.0f64..2.0, im1 in -1.0f64..1.0,
        re2 in -2.0f64..2.0, im2 in -1.0f64..1.0,
        m in 1u32..=6, mu in -PI..PI,
    ) {
        let p = params(C64::new(re1, im1), C64::new(re2, im2), m, mu, 0.0, 0.0, 0.0);
        let rates = scattering_rates(&p);
        let identity = p.lambda1 * p.lambda1
            + p.lambda2 * p.lambda2
            + p.lambda1 * p.lambda2 * 2.0 * (2.0 * f64::from(m) * mu).cos();
        prop_assert!(
            (rates.product() - identity).norm() <= 1e-12 * (1.0 + identity.norm()),
            "𝓔₁𝓔₂ = {} but λ₁² + λ₂² + 2λ₁λ₂cos(2mμ) = {identity}",
            rates.product()
        );
    }

    #[test]
    fn rates_repeat_with_the_scatterer_period_and_swap_under_reflection(
        re1 in -2.0f64..2.0, im1 in -1.0f64..1.0,
        re2 in -2.0f64..2.0, im2 in -1.0f64..1.0,
        m in 1u32..=6, mu in 0.0f64..PI,
    ) {
        let p = params(C64::new(re1, im1), C64::new(re2, im2), m, mu, 0.0, 0.0, 0.0);
        let here = scattering_rates(&p);
        let scale = 1.0 + p.lambda1.norm() + p.lambda2.norm();

        let mut shifted = p.clone();
        shifted.mu = mu + PI / f64::from(m);
        let there = scattering_rates(&shifted);
        prop_assert!((here.e1 - there.e1).norm() <= 1e-12 * scale);
        prop_assert!((here.e2 - there.e2).norm() <= 1e-12 * scale);

        let mut reflected = p.clone();
        reflected.mu = -mu;
        let mirror = scattering_rates(&reflected);
        prop_assert!(
            (here.e1 - mirror.e2).norm() <= 1e-12 * scale
                && (here.e2 - mirror.e1).norm() <= 1e-12 * scale,
            "reflection must swap the directions: 𝓔₁ = {}, mirrored 𝓔₂ = {}",
            here.e1,
            mirror.e2
        );
    }

    #[test]
    fn closed_spectra_match_numeric_diagonalization(
        re1 in -2.0f64..2.0, im1 in -1.0f64..1.0,
        re2 in -2.0f64..2.0, im2 in -1.0f64..1.0,
        m in 1u32..=4, mu in 0.0f64..PI,
        delta in -3.0f64..3.0, u in 0.0f64..3.0,
    ) {
        let p = params(C64::new(re1, im1), C64::new(re2, im2), m, mu, delta, u, 0.1);
        for subspace in [SpectralSubspace::SingleExcitation, SpectralSubspace::TwoExcitation] {
            let report = subspace_spectrum(&p, subspace).unwrap();
            for (closed, numeric) in report.eigenvalues.iter().zip(&report.numeric_eigenvalues) {
                prop_assert!(
                    (closed - numeric).norm() < 1e-10,
                    "closed {closed} vs diagonalized {numeric}"
                );
            }
        }
    }

    #[test]
    fn pair_correlation_carries_no_absolute_scale(
        re1 in -2.0f64..2.0, im1 in -1.0f64..1.0,
        re2 in -2.0f64..2.0, im2 in -1.0f64..1.0,
        m in 1u32..=4, mu in 0.0f64..PI,
        delta in -3.0f64..3.0, u in 0.0f64..3.0,
        width in 0.05f64..2.0,
    ) {
        let p = params(C64::new(re1, im1), C64::new(re2, im2), m, mu, delta, u, 0.1);
        // Stay clear of the coalescence shortcut threshold, which is an
        // absolute cut on |𝓔₁𝓔₂| and may flip branch under rescaling.
        prop_assume!(scattering_rates(&p).product().norm() > 1e-8);
        let g2 = g2_analytic_damped(&p, width).unwrap();

        // Doubling every rate and the width expresses the same physics in a
        // unit half as large; powers of two keep the rescaling exact.
        let mut doubled = p.clone();
        doubled.lambda1 *= 2.0;
        doubled.lambda2 *= 2.0;
        doubled.delta *= 2.0;
        doubled.u *= 2.0;
        doubled.gamma *= 2.0;
        doubled.drive *= 2.0;
        let g2_doubled = g2_analytic_damped(&doubled, 2.0 * width).unwrap();
        prop_assert!(
            (g2 - g2_doubled).abs() <= 1e-12 * g2.abs().max(1e-300),
            "g² = {g2} in one unit but {g2_doubled} in half the unit"
        );
    }

    #[test]
    fn real_scatterers_build_a_hermitian_hamiltonian(
        l1 in -2.0f64..2.0, l2 in -2.0f64..2.0,
        m in 1u32..=4, mu in 0.0f64..PI,
        delta in -3.0f64..3.0, u in 0.0f64..3.0,
        drive in 0.0f64..0.5,
    ) {
        let p = params(C64::new(l1, 0.0), C64::new(l2, 0.0), m, mu, delta, u, drive);
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let pair = hermitian_split(&effective_hamiltonian(&p, &layout).unwrap());
        let worst = pair
            .h_minus
            .entries()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        prop_assert!(
            worst < 1e-12,
            "real scatterers give 𝓔₂ = 𝓔₁*, yet the anti-Hermitian part reaches {worst:.1e}"
        );
    }

    #[test]
    fn closed_scattering_direction_empties_the_idle_ladder(
        re1 in 0.3f64..2.0, im1 in -1.0f64..1.0,
        theta in 0.0f64..(2.0 * PI),
        m in 1u32..=4,
        u in 0.5f64..3.0, delta1 in -3.0f64..3.0,
    ) {
        prop_assume!(delta1.abs() > 0.05);
        prop_assume!((delta1 - u).abs() > 0.05);
        let lambda1 = C64::new(re1, im1);
        let lambda2 = C64::from_polar(lambda1.norm(), theta);
        let mu = (PI - (lambda1 / lambda2).arg()) / (2.0 * f64::from(m));
        let p = params(lambda1, lambda2, m, mu, u + delta1, u, 0.1);
        let amps = weak_drive_amplitudes(&p).unwrap();
        prop_assert!(amps.c01.norm() < 1e-12, "|C₀₁| = {:.1e}", amps.c01.norm());
        prop_assert!(amps.c11.norm() < 1e-12, "|C₁₁| = {:.1e}", amps.c11.norm());
        prop_assert!(amps.c02.norm() < 1e-12, "|C₀₂| = {:.1e}", amps.c02.norm());
        let pin = amps.c20 * 2.0f64.sqrt() * delta1 * (delta1 - u) / (p.drive * p.drive) - 1.0;
        prop_assert!(
            pin.norm() < 1e-6,
            "|C₂₀| strays from F²/(√2|δ₁δ₂|) by {:.1e}",
            pin.norm()
        );
    }
}

/// The blockade working point must not care whether the ladder is cut at
/// four or five photons; anything else would mean the depth is a truncation
/// artifact.
#[test]
fn blockade_depth_is_stable_against_truncation() {
    let phase = (C64::new(1.5, -0.355) / C64::new(1.4, -0.645)).arg();
    let p = ModelParams {
        lambda1: C64::new(1.5, -0.355),
        lambda2: C64::new(1.4, -0.645),
        m: 4,
        mu: (PI - phase) / 8.0,
        delta: 2.0,
        u: 2.0,
        gamma: 1.0,
        drive: 0.1,
        omega_m: None,
        g: None,
    };
    let opts = SolveOptions {
        dissipator_rate: Some(0.1418),
        ..SolveOptions::default()
    };
    let g2_at = |dims: &[usize]| {
        let layout = FockLayout::new(dims).unwrap();
        g2_zero(&steady_by_eigen(&p, &layout, &opts).unwrap().rho, 0).unwrap()
    };
    let four = g2_at(&[4, 4]);
    let five = g2_at(&[5, 5]);
    let change = (four - five).abs() / five;
    assert!(
        change < 5e-3,
        "g²(0) moves by {change:.1e} between four- and five-photon cutoffs ({four} vs {five})"
    );
}

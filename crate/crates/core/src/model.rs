//! Physical parameters and Hamiltonian builders for the scatterer-coupled
//! two-mode resonator.
//!
//! Two nanoparticles sitting on the rim of a whispering-gallery resonator at
//! relative angle μ scatter the clockwise (mode 0) and counterclockwise
//! (mode 1) traveling waves into each other with complex rates
//! 𝓔₁ = λ₁ + λ₂e^{+2imμ} and 𝓔₂ = λ₁ + λ₂e^{−2imμ}, where λⱼ is the complex
//! frequency splitting a single scatterer would cause and m is the azimuthal
//! mode number. Whenever |𝓔₁| ≠ |𝓔₂| the coupling is nonreciprocal, and
//! 𝓔₁𝓔₂ = 0 marks an exceptional point: the single- and two-excitation
//! eigensystems coalesce instead of merely crossing.
//!
//! Radiation pressure on the mechanical breathing mode (mode 2, when present)
//! produces, after a polaron displacement of the phonons, the Kerr
//! interaction −U(n̂₁+n̂₂)² with U = g²/ω_m. Both the full optomechanical
//! Hamiltonian and its effective Kerr reduction are built here; everything is
//! expressed in the frame rotating at the laser frequency, so the real
//! detuning Δ is the only frequency left on the photonic diagonal and all
//! rates are in units of the decay scale γ.

use crate::hilbert::{FockLayout, Operator};
use crate::{C64, Error, Result};

/// All physical inputs of the model, rates in units of `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Complex frequency splitting induced by the first scatterer alone.
    pub lambda1: C64,
    /// Complex frequency splitting induced by the second scatterer alone.
    pub lambda2: C64,
    /// Azimuthal mode number of the traveling waves.
    pub m: u32,
    /// Relative angular position of the two scatterers, radians.
    pub mu: f64,
    /// Real laser detuning Δ in the rotating frame.
    pub delta: f64,
    /// Kerr strength U, nonnegative.
    pub u: f64,
    /// Effective decay scale γ, the unit all other rates are quoted in.
    pub gamma: f64,
    /// Drive amplitude F on the clockwise mode, nonnegative.
    pub drive: f64,
    /// Mechanical frequency ω_m, present only for the full model.
    pub omega_m: Option<f64>,
    /// Optomechanical coupling g, present only for the full model.
    pub g: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            lambda1: C64::new(0.0, 0.0),
            lambda2: C64::new(0.0, 0.0),
            m: 1,
            mu: 0.0,
            delta: 0.0,
            u: 0.0,
            gamma: 1.0,
            drive: 0.0,
            omega_m: None,
            g: None,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if self.m < 1 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        if self.drive < 0.0 || !self.drive.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "drive must be nonnegative and finite, got {}",
                self.drive
            )));
        }
        if self.u < 0.0 || !self.u.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "u must be nonnegative and finite, got {}",
                self.u
            )));
        }
        for (name, v) in [("mu", self.mu), ("delta", self.delta)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, z) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {z}")));
            }
        }
        match (self.omega_m, self.g) {
            (None, None) => {}
            (Some(omega_m), Some(g)) => {
                if omega_m <= 0.0 || !omega_m.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "omega_m must be positive and finite, got {omega_m}"
                    )));
                }
                if g < 0.0 || !g.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "g must be nonnegative and finite, got {g}"
                    )));
                }
                if g / omega_m >= 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "g/omega_m = {} leaves the weak-coupling regime",
                        g / omega_m
                    )));
                }
            }
            (Some(_), None) => {
                return Err(Error::MissingMechanical(
                    "omega_m is set but g is missing".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::MissingMechanical(
                    "g is set but omega_m is missing".into(),
                ))
            }
        }
        Ok(())
    }

    /// Ratio g/ω_m when the mechanical sector is configured. The polaron
    /// reduction is trustworthy well below 1; callers may warn above 0.5.
    pub fn weak_coupling_ratio(&self) -> Option<f64> {
        match (self.g, self.omega_m) {
            (Some(g), Some(omega_m)) => Some(g / omega_m),
            _ => None,
        }
    }

    /// Kerr strength implied by the mechanical sector, U = g²/ω_m.
    pub fn kerr_from_mechanics(&self) -> Option<f64> {
        match (self.g, self.omega_m) {
            (Some(g), Some(omega_m)) => Some(g * g / omega_m),
            _ => None,
        }
    }
}

/// Inter-mode scattering rates produced by the two-scatterer interference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringRates {
    /// 𝓔₁, scattering from the counterclockwise into the clockwise mode.
    pub e1: C64,
    /// 𝓔₂, scattering from the clockwise into the counterclockwise mode.
    pub e2: C64,
}

impl ScatteringRates {
    /// Product 𝓔₁𝓔₂, the quantity controlling eigenvalue splitting.
    pub fn product(&self) -> C64 {
        self.e1 * self.e2
    }
}

/// 𝓔₁ = λ₁ + λ₂e^{+2imμ}, 𝓔₂ = λ₁ + λ₂e^{−2imμ}.
pub fn scattering_rates(params: &ModelParams) -> ScatteringRates {
    let phase = C64::new(0.0, 2.0 * f64::from(params.m) * params.mu).exp();
    ScatteringRates {
        e1: params.lambda1 + params.lambda2 * phase,
        e2: params.lambda1 + params.lambda2 * phase.conj(),
    }
}

/// Hermitian/anti-Hermitian split of a (generally non-Hermitian) Hamiltonian.
#[derive(Debug, Clone)]
pub struct HamiltonianPair {
    /// H₊ = (H + H†)/2, generates unitary motion.
    pub h_plus: Operator,
    /// H₋ = (H − H†)/2, generates the norm-bending anticommutator flow.
    pub h_minus: Operator,
}

/// Effective Kerr Hamiltonian on a two-mode photonic layout:
/// Δ(n̂₁+n̂₂) + 𝓔₁â₁†â₂ + 𝓔₂â₂†â₁ − U(n̂₁+n̂₂)² + F(â₁†+â₁).
pub fn effective_hamiltonian(params: &ModelParams, layout: &FockLayout) -> Result<Operator> {
    params.validate()?;
    if layout.n_modes() != 2 {
        return Err(Error::LayoutMismatch(format!(
            "effective Hamiltonian needs exactly 2 photonic modes, layout has {}",
            layout.n_modes()
        )));
    }
    let rates = scattering_rates(params);
    let a1 = Operator::destroy(layout.clone(), 0)?;
    let a2 = Operator::destroy(layout.clone(), 1)?;
    let n_tot = &Operator::number(layout.clone(), 0)? + &Operator::number(layout.clone(), 1)?;

    let mut h = n_tot.scale(C64::new(params.delta, 0.0));
    h = &h + &(&a1.adjoint() * &a2).scale(rates.e1);
    h = &h + &(&a2.adjoint() * &a1).scale(rates.e2);
    h = &h - &(&n_tot * &n_tot).scale(C64::new(params.u, 0.0));
    h = &h + &(&a1.adjoint() + &a1).scale(C64::new(params.drive, 0.0));
    Ok(h)
}

/// Full optomechanical Hamiltonian on a (CW, CCW, mechanical) layout:
/// Δ(n̂₁+n̂₂) + ω_m b̂†b̂ + 𝓔₁â₁†â₂ + 𝓔₂â₂†â₁ − g(b̂†+b̂)(n̂₁+n̂₂) + F(â₁†+â₁).
pub fn total_hamiltonian(params: &ModelParams, layout: &FockLayout) -> Result<Operator> {
    params.validate()?;
    if layout.n_modes() != 3 {
        return Err(Error::LayoutMismatch(format!(
            "total Hamiltonian needs exactly 3 modes (CW, CCW, mechanical), layout has {}",
            layout.n_modes()
        )));
    }
    let (omega_m, g) = match (params.omega_m, params.g) {
        (Some(omega_m), Some(g)) => (omega_m, g),
        _ => {
            return Err(Error::MissingMechanical(
                "total Hamiltonian needs omega_m and g".into(),
            ))
        }
    };
    let rates = scattering_rates(params);
    let a1 = Operator::destroy(layout.clone(), 0)?;
    let a2 = Operator::destroy(layout.clone(), 1)?;
    let b = Operator::destroy(layout.clone(), 2)?;
    let n_tot = &Operator::number(layout.clone(), 0)? + &Operator::number(layout.clone(), 1)?;

    let mut h = n_tot.scale(C64::new(params.delta, 0.0));
    h = &h + &Operator::number(layout.clone(), 2)?.scale(C64::new(omega_m, 0.0));
    h = &h + &(&a1.adjoint() * &a2).scale(rates.e1);
    h = &h + &(&a2.adjoint() * &a1).scale(rates.e2);
    h = &h - &(&(&b.adjoint() + &b) * &n_tot).scale(C64::new(g, 0.0));
    h = &h + &(&a1.adjoint() + &a1).scale(C64::new(params.drive, 0.0));
    Ok(h)
}

/// H₊ = (H + H†)/2 and H₋ = (H − H†)/2; their sum reconstructs H exactly.
pub fn hermitian_split(h: &Operator) -> HamiltonianPair {
    let adj = h.adjoint();
    let half = C64::new(0.5, 0.0);
    HamiltonianPair {
        h_plus: (h + &adj).scale(half),
        h_minus: (h - &adj).scale(half),
    }
}

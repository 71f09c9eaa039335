//! Closed-form weak-drive amplitudes and the interference conditions behind
//! both photon-blockade mechanisms.
//!
//! At weak drive the stationary state holds at most two excitations and the
//! amplitudes obey a finite linear hierarchy. With C₀₀ = 1, δ₁ = Δ − U,
//! δ₂ = Δ − 2U and ηⱼ = 𝓔₁𝓔₂ − δⱼ²:
//!
//!   C₁₀ = Fδ₁/η₁,
//!   C₂₀ = F²(2δ₁δ₂² + 𝓔₁𝓔₂δ₂ − 𝓔₁𝓔₂δ₁)/(2√2 δ₂η₁η₂),
//!
//! and g²(0) = 2|C₂₀|²/|C₁₀|⁴ follows in closed form. Its zeros are the two
//! blockade mechanisms. The conventional one empties the two-photon rung
//! through the spectrum: Δ = U at an exceptional point, where the coalesced
//! ladder leaves a single anharmonically shifted path, or the hybridized
//! resonances Δ = U ∓ Re√(𝓔₁𝓔₂) when the coupling product is real but
//! nonzero. The unconventional one is the interference null C₂₀ = 0 between
//! the direct drive ladder and the detour through the counter-propagating
//! mode, which requires Im(𝓔₁𝓔₂) = 0 and a real root of
//! 2(Δ−U)(Δ−2U)² = U·Re(𝓔₁𝓔₂), and is impossible once one scattering
//! direction closes.
//!
//! Everything here is algebra on the model parameters; the density-matrix
//! numerics in [`crate::liouville`] are the independent counterpart these
//! forms are checked against.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use ndarray::{array, Array1, Array2};
use ndarray_linalg::Solve;

use crate::model::{scattering_rates, ModelParams};
use crate::{C64, Error, Result};

/// Rates with magnitude below this (γ or γ², by context) count as zero.
const RESONANCE_TOL: f64 = 1e-12;
/// |𝓔₁𝓔₂| below this counts as an exceptional point.
const EP_PRODUCT_TOL: f64 = 1e-10;
/// ||λ₁| − |λ₂|| beyond this rules out exact zeros of a scattering rate.
const MAGNITUDE_TOL: f64 = 1e-6;
/// |𝓔ⱼ| below this counts as a closed scattering channel.
const CHANNEL_TOL: f64 = 1e-9;

/// Stationary amplitudes of the two-excitation hierarchy at C₀₀ = 1.
#[derive(Debug, Clone)]
pub struct WeakDriveAmplitudes {
    pub c10: C64,
    pub c01: C64,
    pub c20: C64,
    pub c11: C64,
    pub c02: C64,
    /// δ₁ = Δ − U.
    pub delta1: f64,
    /// δ₂ = Δ − 2U.
    pub delta2: f64,
    /// η₁ = 𝓔₁𝓔₂ − δ₁².
    pub eta1: C64,
    /// η₂ = 𝓔₁𝓔₂ − δ₂².
    pub eta2: C64,
}

/// Which optimal condition a [`ConditionSolution`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    /// Angles where one scattering rate vanishes.
    EpLocus,
    /// Conventional blockade on a coalesced ladder: EP angles with Δ = U.
    CpbAtEp,
    /// Conventional blockade at real nonzero 𝓔₁𝓔₂: Δ = U ∓ Re√(𝓔₁𝓔₂).
    CpbNonEp,
    /// Interference null of the two-photon amplitude.
    Upb,
}

/// Angles and detunings satisfying one optimal condition.
#[derive(Debug, Clone)]
pub struct ConditionSolution {
    pub kind: ConditionKind,
    /// Radians; sorted ascending, paired entrywise with `delta_values`.
    pub mu_values: Vec<f64>,
    /// Units of γ; empty for the bare EP locus.
    pub delta_values: Vec<f64>,
    /// Residual of each point in its defining equation, natural units.
    pub diagnostics: Vec<f64>,
    /// Branch labels, degeneracy warnings, rejected roots.
    pub notes: Vec<String>,
}

impl ConditionSolution {
    fn empty(kind: ConditionKind) -> Self {
        ConditionSolution {
            kind,
            mu_values: Vec::new(),
            delta_values: Vec::new(),
            diagnostics: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Stationary few-photon amplitudes of the driven two-mode system.
///
/// Solves the five-amplitude hierarchy with the vacuum amplitude pinned to
/// one and the weak-drive feedback of the two-photon amplitudes onto the
/// one-photon rows dropped, which is the order at which the closed forms
/// above hold. Resonant denominators are reported instead of being returned
/// as huge floats: η₁ → 0 blows up C₁₀ and breaks the amplitude hierarchy,
/// δ₂ → 0 or η₂ → 0 blow up the two-photon amplitudes.
pub fn weak_drive_amplitudes(params: &ModelParams) -> Result<WeakDriveAmplitudes> {
    params.validate()?;
    if params.drive <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "amplitudes scale with the drive, F must be positive, got {}",
            params.drive
        )));
    }
    let p = scattering_rates(params).product();
    let delta1 = params.delta - params.u;
    let delta2 = params.delta - 2.0 * params.u;
    let eta1 = p - C64::new(delta1 * delta1, 0.0);
    let eta2 = p - C64::new(delta2 * delta2, 0.0);
    if eta1.norm() < RESONANCE_TOL {
        return Err(Error::DivergentCorrelation(format!(
            "single-excitation resonance η₁ = {eta1}: C₁₀ diverges and the amplitude hierarchy breaks"
        )));
    }
    if delta2.abs() < RESONANCE_TOL || eta2.norm() < RESONANCE_TOL {
        return Err(Error::DivergentCorrelation(format!(
            "two-photon resonance (δ₂ = {delta2}, η₂ = {eta2}): the pair amplitudes diverge"
        )));
    }
    let (a, b) = hierarchy_system(params);
    let x = a.solve_into(b)?;
    Ok(WeakDriveAmplitudes {
        c10: x[0],
        c01: x[1],
        c20: x[2],
        c11: x[3],
        c02: x[4],
        delta1,
        delta2,
        eta1,
        eta2,
    })
}

/// Matrix and right-hand side of the truncated amplitude hierarchy in the
/// unknowns (C₁₀, C₀₁, C₂₀, C₁₁, C₀₂).
fn hierarchy_system(params: &ModelParams) -> (Array2<C64>, Array1<C64>) {
    let rates = scattering_rates(params);
    let (e1, e2) = (rates.e1, rates.e2);
    let f = C64::new(params.drive, 0.0);
    let d1 = C64::new(params.delta - params.u, 0.0);
    let d2 = C64::new(2.0 * (params.delta - 2.0 * params.u), 0.0);
    let z = C64::new(0.0, 0.0);
    let rt2 = C64::new(std::f64::consts::SQRT_2, 0.0);
    let a = array![
        [d1, e1, z, z, z],
        [e2, d1, z, z, z],
        [rt2 * f, z, d2, rt2 * e1, z],
        [z, f, rt2 * e2, d2, rt2 * e1],
        [z, z, z, rt2 * e2, d2],
    ];
    let b = array![-f, z, z, z, z];
    (a, b)
}

/// Weak-drive g²(0) of the driven mode, g² = 2|C₂₀|²/|C₁₀|⁴ in closed form.
///
/// At an exceptional point the expression collapses to δ₁²/δ₂², which runs
/// to zero at Δ = U: the conventional blockade on the coalesced ladder.
/// Away from one, δ₁ → 0 makes the correlation diverge and is reported as
/// an error rather than a large float.
pub fn g2_analytic(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let p = scattering_rates(params).product();
    g2_from_detunings(
        C64::new(params.delta - params.u, 0.0),
        C64::new(params.delta - 2.0 * params.u, 0.0),
        p,
    )
}

/// Weak-drive g²(0) with each detuning complexified by the mode loss width,
/// δⱼ → δⱼ − iw.
///
/// The widths regularize every resonant denominator, so this variant is the
/// one to overlay on master-equation numerics, which always carry the loss;
/// the undamped form is the w → 0 limit and diverges at δ₁ = 0 off the
/// exceptional points.
pub fn g2_analytic_damped(params: &ModelParams, width: f64) -> Result<f64> {
    params.validate()?;
    if width <= 0.0 || !width.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "loss width must be positive and finite, got {width}"
        )));
    }
    let p = scattering_rates(params).product();
    let shift = C64::new(0.0, -width);
    g2_from_detunings(
        C64::new(params.delta - params.u, 0.0) + shift,
        C64::new(params.delta - 2.0 * params.u, 0.0) + shift,
        p,
    )
}

fn g2_from_detunings(d1: C64, d2: C64, p: C64) -> Result<f64> {
    if d2.norm() < RESONANCE_TOL {
        return Err(Error::DivergentCorrelation(
            "two-photon resonance δ₂ = 0: the pair amplitude diverges".into(),
        ));
    }
    if p.norm() < EP_PRODUCT_TOL {
        return Ok((d1.norm() / d2.norm()).powi(2));
    }
    if d1.norm() < RESONANCE_TOL {
        return Err(Error::DivergentCorrelation(
            "Δ = U away from an exceptional point: g²(0) diverges as 1/δ₁⁴".into(),
        ));
    }
    let eta1 = p - d1 * d1;
    let eta2 = p - d2 * d2;
    if eta2.norm() < RESONANCE_TOL {
        return Err(Error::DivergentCorrelation(
            "two-excitation resonance η₂ = 0: the pair amplitude diverges".into(),
        ));
    }
    let numerator = eta1 * (2.0 * d1 * d2 * d2 + p * d2 - p * d1);
    let denominator = d1 * d1 * d2 * eta2;
    Ok(numerator.norm_sqr() / (4.0 * denominator.norm_sqr()))
}

/// Angles where one scattering rate vanishes exactly.
///
/// 𝓔₁ = 0 or 𝓔₂ = 0 needs e^{±2imμ} = −λ₁/λ₂ with |λ₁| = |λ₂|, giving
/// μ = [nπ ± arg(λ₁/λ₂)]/(2m) for odd n; the + branch closes 𝓔₁ and the
/// − branch closes 𝓔₂. When the magnitudes differ no rate can vanish and
/// the solution comes back empty, carrying the closest approach
/// min |𝓔₁𝓔₂| over one angle period as a diagnostic.
pub fn find_eps(
    lambda1: C64,
    lambda2: C64,
    m: u32,
    n_range: RangeInclusive<i32>,
) -> Result<ConditionSolution> {
    if m == 0 {
        return Err(Error::InvalidParameter(
            "azimuthal mode number m must be positive".into(),
        ));
    }
    if lambda2.norm() < RESONANCE_TOL {
        return Err(Error::InvalidParameter(
            "a single scatterer couples the modes reciprocally at every angle; \
             the locus needs λ₂ ≠ 0"
                .into(),
        ));
    }
    let mut solution = ConditionSolution::empty(ConditionKind::EpLocus);
    let mismatch = (lambda1.norm() - lambda2.norm()).abs();
    if mismatch > MAGNITUDE_TOL {
        let period = PI / f64::from(m);
        let closest = (0..20_000)
            .map(|k| {
                let mu = period * k as f64 / 20_000.0;
                rates_at(lambda1, lambda2, m, mu).0
            })
            .fold(f64::INFINITY, f64::min);
        solution.diagnostics.push(closest);
        solution.notes.push(format!(
            "no exact zeros: ||λ₁| − |λ₂|| = {mismatch:.3e}γ, closest approach \
             min|𝓔₁𝓔₂| = {closest:.3e}γ² over one period"
        ));
        return Ok(solution);
    }
    let phi = (lambda1 / lambda2).arg();
    let mut found: Vec<(f64, f64, String)> = Vec::new();
    for n in n_range {
        if n.rem_euclid(2) != 1 {
            continue;
        }
        for (sign, vanishing) in [(1.0, "𝓔₁ = 0"), (-1.0, "𝓔₂ = 0")] {
            let mu = (f64::from(n) * PI + sign * phi) / (2.0 * f64::from(m));
            let (_, e1_mag, e2_mag) = rates_at(lambda1, lambda2, m, mu);
            let residual = if sign > 0.0 { e1_mag } else { e2_mag };
            found.push((mu, residual, vanishing.to_string()));
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (mu, residual, label) in found {
        if let Some(last) = solution.mu_values.last() {
            if (mu - last).abs() < 1e-12 {
                let note = solution.notes.last_mut().expect("one note per angle");
                *note = "𝓔₁ = 0 and 𝓔₂ = 0 together: the modes decouple".into();
                continue;
            }
        }
        solution.mu_values.push(mu);
        solution.diagnostics.push(residual);
        solution.notes.push(label);
    }
    Ok(solution)
}

/// Conventional-blockade condition on the coalesced ladder: EP angles with
/// Δ = U.
///
/// The anharmonicity sets the working detuning but not the locus, so the
/// angles are exactly those of [`find_eps`]; U = 0 leaves no anharmonic
/// shift to block the second photon and is flagged as degenerate.
pub fn cpb_at_ep(params: &ModelParams) -> Result<ConditionSolution> {
    params.validate()?;
    let n_max = 2 * params.m as i32 - 1;
    let mut solution = find_eps(params.lambda1, params.lambda2, params.m, 1..=n_max)?;
    solution.kind = ConditionKind::CpbAtEp;
    solution.delta_values = vec![params.u; solution.mu_values.len()];
    if params.u == 0.0 {
        solution.notes.push(
            "degenerate: U = 0 leaves no anharmonicity, the condition collapses to bare \
             resonance Δ = 0 and no blockade is expected"
                .into(),
        );
    }
    Ok(solution)
}

/// Conventional-blockade condition away from the exceptional points.
///
/// A real splitting needs Im(𝓔₁𝓔₂) = 0, solved for the angle through
/// cos(2mμ) = −Im(λ₁² + λ₂²)/(2 Im(λ₁λ₂)); the blockade detunings are then
/// the hybridized single-excitation resonances Δ = U ∓ Re√(𝓔₁𝓔₂). Both
/// angle branches in one period are returned, each paired with both
/// detunings. The equivalent polar form of the angle equation reads
/// cos(2mμ) = −[|λ₁|²sin2θ₁ + |λ₂|²sin2θ₂]/[2|λ₁||λ₂|sin(θ₁+θ₂)] with
/// θⱼ = arg λⱼ.
pub fn cpb_non_ep(params: &ModelParams) -> Result<ConditionSolution> {
    params.validate()?;
    let mut solution = ConditionSolution::empty(ConditionKind::CpbNonEp);
    let (angles, product) = match real_product_angles(params) {
        RealProductAngles::Discrete { angles, product } => (angles, product),
        RealProductAngles::Everywhere => {
            solution.notes.push(
                "real couplings keep 𝓔₁𝓔₂ real at every angle; no discrete condition".into(),
            );
            return Ok(solution);
        }
        RealProductAngles::None(reason) => return Err(Error::NoSolution(reason)),
    };
    if product <= 0.0 {
        return Err(Error::NoSolution(format!(
            "the splitting is not real: Re(𝓔₁𝓔₂) = {product:.3e} ≤ 0 where its imaginary \
             part vanishes"
        )));
    }
    let r = product.sqrt();
    for mu in angles {
        let p = rates_product(params, mu);
        for delta in [params.u - r, params.u + r] {
            let d1 = delta - params.u;
            let eta1 = p - C64::new(d1 * d1, 0.0);
            solution.mu_values.push(mu);
            solution.delta_values.push(delta);
            solution.diagnostics.push(eta1.norm());
        }
    }
    Ok(solution)
}

/// Interference-null condition for the unconventional blockade.
///
/// C₂₀ = 0 needs a real coupling product, which fixes the angle exactly as
/// in [`cpb_non_ep`], and then a real root of
/// 2(Δ−U)(Δ−2U)² = U·Re(𝓔₁𝓔₂), solved by bracketing on Δ ∈ [0, 3U] with
/// the root nearest U selected and every other real root noted. A Cardano
/// evaluation of the same cubic rides along as a cross-check, its branch
/// picked by proximity to the bracketed root. Where Re(𝓔₁𝓔₂) = 0 the
/// angle is an exceptional point, the null degenerates to δ₁ = 0 and the
/// blockade there is conventional, which is reported instead of returned.
pub fn upb_conditions(params: &ModelParams) -> Result<ConditionSolution> {
    params.validate()?;
    let mut solution = ConditionSolution::empty(ConditionKind::Upb);
    if params.u <= 0.0 {
        return Err(Error::NoSolution(format!(
            "the null needs the anharmonic shift: U = {} leaves 2δ₁δ₂² = 0, whose only \
             roots sit on the divergent resonances",
            params.u
        )));
    }
    let angles = match real_product_angles(params) {
        RealProductAngles::Discrete { angles, .. } => angles,
        RealProductAngles::Everywhere => {
            solution.notes.push(
                "real couplings keep 𝓔₁𝓔₂ real at every angle; no discrete condition".into(),
            );
            return Ok(solution);
        }
        RealProductAngles::None(reason) => return Err(Error::NoSolution(reason)),
    };
    for mu in angles {
        let p = rates_product(params, mu).re;
        if p.abs() < EP_PRODUCT_TOL {
            solution.notes.push(format!(
                "μ = {:.6}π is an exceptional point (Re 𝓔₁𝓔₂ = {p:.3e}): the detour path \
                 carries no amplitude, the null collapses to the conventional condition Δ = U",
                mu / PI
            ));
            continue;
        }
        let cubic = |delta: f64| {
            2.0 * (delta - params.u) * (delta - 2.0 * params.u).powi(2) - params.u * p
        };
        let roots = bracketed_roots(&cubic, 0.0, 3.0 * params.u, 3000);
        let Some(&delta) = roots
            .iter()
            .min_by(|a, b| (*a - params.u).abs().total_cmp(&(*b - params.u).abs()))
        else {
            solution.notes.push(format!(
                "μ = {:.6}π: no real root of the null cubic inside [0, 3U]; \
                 Cardano candidates {:?}",
                mu / PI,
                closed_form_roots(params.u, p)
            ));
            continue;
        };
        if (delta - params.u).abs() < 1e-9 {
            solution.notes.push(format!(
                "μ = {:.6}π: the root sits on δ₁ = 0, where the correlation diverges \
                 instead of vanishing",
                mu / PI
            ));
            continue;
        }
        for &other in roots.iter().filter(|&&r| r != delta) {
            solution.notes.push(format!(
                "μ = {:.6}π: additional real root Δ = {other:.9}γ further from U",
                mu / PI
            ));
        }
        let closed = closed_form_roots(params.u, p);
        if let Some(&best) = closed
            .iter()
            .min_by(|a, b| (*a - delta).abs().total_cmp(&(*b - delta).abs()))
        {
            if (best - delta).abs() > 1e-6 {
                solution.notes.push(format!(
                    "μ = {:.6}π: Cardano evaluation {best:.9} disagrees with the bracketed \
                     root {delta:.9} beyond 1e−6γ",
                    mu / PI
                ));
            }
        }
        solution.mu_values.push(mu);
        solution.delta_values.push(delta);
        solution.diagnostics.push(cubic(delta).abs());
    }
    Ok(solution)
}

/// Scattering channel of a few-photon transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Coherent drive on the clockwise mode.
    Drive,
    /// 𝓔₂: clockwise photon scatters into the counterclockwise mode.
    CwToCcw,
    /// 𝓔₁: counterclockwise photon scatters back.
    CcwToCw,
}

/// One arrow of the few-photon level diagram.
#[derive(Debug, Clone)]
pub struct Transition {
    pub from: [usize; 2],
    pub to: [usize; 2],
    pub channel: Channel,
    pub open: bool,
}

/// Which excitation routes into the two-photon state remain open.
#[derive(Debug, Clone)]
pub struct PathwayReport {
    pub e1_closed: bool,
    pub e2_closed: bool,
    pub transitions: Vec<Transition>,
    /// Two distinct open routes reach |2,0⟩, so their amplitudes can cancel.
    pub interference_possible: bool,
    pub note: String,
}

/// Classifies the few-photon transitions as open or blocked.
///
/// |2,0⟩ fills along two routes: the direct ladder |0,0⟩ → |1,0⟩ → |2,0⟩,
/// and the detour |1,0⟩ → |0,1⟩ → |1,1⟩ → |2,0⟩ that needs both scattering
/// directions. Closing 𝓔₁ dead-ends the detour at |1,1⟩; closing 𝓔₂ never
/// populates the counter-propagating mode at all, so in either case a
/// single route survives and no interference null can form.
pub fn pathway_report(params: &ModelParams) -> Result<PathwayReport> {
    params.validate()?;
    let rates = scattering_rates(params);
    let e1_closed = rates.e1.norm() < CHANNEL_TOL;
    let e2_closed = rates.e2.norm() < CHANNEL_TOL;
    let driven = params.drive > 0.0;
    let transitions = vec![
        Transition { from: [0, 0], to: [1, 0], channel: Channel::Drive, open: driven },
        Transition { from: [1, 0], to: [2, 0], channel: Channel::Drive, open: driven },
        Transition { from: [0, 1], to: [1, 1], channel: Channel::Drive, open: driven },
        Transition { from: [1, 0], to: [0, 1], channel: Channel::CwToCcw, open: !e2_closed },
        Transition { from: [2, 0], to: [1, 1], channel: Channel::CwToCcw, open: !e2_closed },
        Transition { from: [1, 1], to: [0, 2], channel: Channel::CwToCcw, open: !e2_closed },
        Transition { from: [0, 1], to: [1, 0], channel: Channel::CcwToCw, open: !e1_closed },
        Transition { from: [1, 1], to: [2, 0], channel: Channel::CcwToCw, open: !e1_closed },
        Transition { from: [0, 2], to: [1, 1], channel: Channel::CcwToCw, open: !e1_closed },
    ];
    let interference_possible = driven && !e1_closed && !e2_closed;
    let note = if e2_closed {
        "𝓔₂ = 0: the counter-propagating mode never populates (C₀₁ = C₀₂ = C₁₁ = 0) and \
         |2,0⟩ fills only through the direct drive ladder"
            .to_string()
    } else if e1_closed {
        "𝓔₁ = 0: the detour dead-ends, |1,1⟩ cannot scatter into |2,0⟩, leaving the direct \
         ladder alone"
            .to_string()
    } else {
        "both scattering directions are open: the direct ladder and the detour through \
         |0,1⟩ and |1,1⟩ interfere at |2,0⟩"
            .to_string()
    };
    Ok(PathwayReport {
        e1_closed,
        e2_closed,
        transitions,
        interference_possible,
        note,
    })
}

/// Outcome of solving Im 𝓔₁𝓔₂ = 0 for the angle.
enum RealProductAngles {
    /// Isolated angles in one period [0, π/m), with Re 𝓔₁𝓔₂ there.
    Discrete { angles: Vec<f64>, product: f64 },
    /// The product is real at every angle.
    Everywhere,
    /// No angle exists; carries the reason.
    None(String),
}

fn real_product_angles(params: &ModelParams) -> RealProductAngles {
    let (l1, l2, m) = (params.lambda1, params.lambda2, f64::from(params.m));
    let numerator = (l1 * l1 + l2 * l2).im;
    let denominator = 2.0 * (l1 * l2).im;
    if denominator.abs() < RESONANCE_TOL {
        if numerator.abs() < RESONANCE_TOL {
            return RealProductAngles::Everywhere;
        }
        return RealProductAngles::None(
            "the angle equation degenerates: Im(λ₁λ₂) = 0 while Im(λ₁² + λ₂²) ≠ 0".into(),
        );
    }
    let c = -numerator / denominator;
    if c.abs() > 1.0 + 1e-9 {
        return RealProductAngles::None(format!(
            "no angle makes 𝓔₁𝓔₂ real: cos(2mμ) would have to be {c:.6}"
        ));
    }
    let base = c.clamp(-1.0, 1.0).acos();
    let mut angles = vec![base / (2.0 * m)];
    let alternate = (2.0 * PI - base) / (2.0 * m);
    if (alternate - angles[0]).abs() > 1e-12 && alternate < PI / m {
        angles.push(alternate);
    }
    let product = (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c.clamp(-1.0, 1.0)).re;
    RealProductAngles::Discrete { angles, product }
}

/// (|𝓔₁𝓔₂|, |𝓔₁|, |𝓔₂|) at a probe angle.
fn rates_at(lambda1: C64, lambda2: C64, m: u32, mu: f64) -> (f64, f64, f64) {
    let phase = C64::new(0.0, 2.0 * f64::from(m) * mu).exp();
    let e1 = lambda1 + lambda2 * phase;
    let e2 = lambda1 + lambda2 * phase.conj();
    ((e1 * e2).norm(), e1.norm(), e2.norm())
}

fn rates_product(params: &ModelParams, mu: f64) -> C64 {
    let mut probe = params.clone();
    probe.mu = mu;
    scattering_rates(&probe).product()
}

/// All sign changes of `f` on `[lo, hi]`, refined by bisection.
fn bracketed_roots(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let step = (hi - lo) / intervals as f64;
    let mut a = lo;
    let mut fa = f(a);
    for k in 1..=intervals {
        let b = lo + step * k as f64;
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            while x1 - x0 > 1e-14 {
                let mid = 0.5 * (x0 + x1);
                let fm = f(mid);
                if f0 * fm <= 0.0 {
                    x1 = mid;
                } else {
                    x0 = mid;
                    f0 = fm;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Real Cardano evaluations of the null cubic 2(Δ−U)(Δ−2U)² = U·p.
///
/// The radical shell is
/// Δ = [(−2)^{4/3}U² + (−2)^{2/3}M² + 10UM]/(6M) with
/// M = [3(√(1344U⁶ + 660U³q + 81q²) − 9q) − 110U³]^{1/3}, where
/// q = −4U³ − U·p/2 is the constant term of the cubic in monic form. Every
/// branch of the two fractional powers and of M is evaluated and the real
/// results are returned; the caller matches them against the bracketed
/// root.
fn closed_form_roots(u: f64, p: f64) -> Vec<f64> {
    let q = -4.0 * u.powi(3) - u * p / 2.0;
    let inner = C64::new(
        1344.0 * u.powi(6) + 660.0 * u.powi(3) * q + 81.0 * q * q,
        0.0,
    );
    let root = inner.sqrt();
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        let radicand = 3.0 * (sign * root - C64::new(9.0 * q, 0.0)) - C64::new(110.0 * u.powi(3), 0.0);
        for m in cbrt_branches(radicand) {
            if m.norm() < RESONANCE_TOL {
                continue;
            }
            for t in cbrt_branches(C64::new(4.0, 0.0)) {
                let delta = (t * t * u * u + t * m * m + 10.0 * u * m) / (6.0 * m);
                if delta.im.abs() < 1e-9 {
                    out.push(delta.re);
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

fn cbrt_branches(z: C64) -> [C64; 3] {
    let r = z.norm().cbrt();
    let theta = z.arg() / 3.0;
    let branch = |k: f64| C64::from_polar(r, theta + 2.0 * PI * k / 3.0);
    [branch(0.0), branch(1.0), branch(2.0)]
}

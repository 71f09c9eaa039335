//! Trace-preserving nonlinear master equation and its steady-state solvers.
//!
//! The non-Hermitian Hamiltonian Ĥ splits into Ĥ₊ = (Ĥ+Ĥ†)/2 and
//! Ĥ₋ = (Ĥ−Ĥ†)/2, and the density matrix obeys
//!
//!   dρ/dt = −i[Ĥ₊, ρ] − i{Ĥ₋, ρ} + Σⱼ cⱼ 𝒟(ρ, âⱼ) + 2i Tr(ρĤ₋) ρ,
//!
//! with 𝒟(ρ, ô) = 2ôρô† − ô†ôρ − ρô†ô and one dissipator per photonic
//! mode. The anticommutator bends the norm and the last term restores it,
//! so the flow preserves Tr ρ = 1 exactly.
//!
//! Dropping the restoring term leaves a linear generator ℒ whose flow the
//! nonlinear one reproduces after trace normalization: ρ(t) = σ(t)/Tr σ(t)
//! with dσ/dt = ℒσ. Steady states are therefore unit-trace eigenmatrices
//! of ℒ, and the physical branch belongs to the eigenvalue with the
//! largest real part. Two independent routes exploit this:
//! [`evolve_to_steady`] integrates the nonlinear equation in time, while
//! [`steady_by_eigen`] diagonalizes the vectorized ℒ. Their agreement is a
//! nontrivial cross-check because they share no numerics beyond the
//! Hamiltonian itself.
//!
//! [`validate_full_vs_effective`] runs the same comparison one level up,
//! checking the Kerr model on two photonic modes against the three-mode
//! optomechanical model it approximates after the polaron transform.

use ndarray::{Array2, Zip};
use ndarray_linalg::{Eig, EigValsh, UPLO};

use crate::hilbert::{kron, FockLayout, Operator};
use crate::model::{
    effective_hamiltonian, hermitian_split, total_hamiltonian, HamiltonianPair, ModelParams,
};
use crate::{C64, Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Hermiticity and trace tolerance for a state to count as physical.
const STATE_TOL: f64 = 1e-10;
/// Eigenvalues of a state may undershoot zero by at most this much.
const POSITIVITY_FLOOR: f64 = -1e-8;
/// Two rightmost generator eigenvalues closer than this (times γ) count as one.
const DEGENERACY_TOL: f64 = 1e-8;
/// Residual norms above this (times γ) abort the integration as divergent.
const DIVERGENCE_CEILING: f64 = 1e9;
/// Largest photonic dimension the eigenvector route will vectorize.
const EIGEN_DIM_LIMIT: usize = 64;

/// Validated density matrix on a Fock layout.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    layout: FockLayout,
    entries: Array2<C64>,
}

impl DensityMatrix {
    /// All modes in their ground state.
    pub fn vacuum(layout: FockLayout) -> Self {
        let d = layout.total_dim();
        let mut entries = Array2::zeros((d, d));
        entries[[0, 0]] = C64::new(1.0, 0.0);
        DensityMatrix { layout, entries }
    }

    /// Identity divided by the total dimension.
    pub fn maximally_mixed(layout: FockLayout) -> Self {
        let d = layout.total_dim();
        let entries = Array2::eye(d) * C64::new(1.0 / d as f64, 0.0);
        DensityMatrix { layout, entries }
    }

    /// Wraps a matrix after checking Hermiticity, unit trace, and positivity.
    pub fn from_entries(layout: FockLayout, entries: Array2<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if entries.dim() != (d, d) {
            return Err(Error::LayoutMismatch(format!(
                "state is {:?} but the layout needs {d}x{d}",
                entries.dim()
            )));
        }
        let mut herm_dev: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                herm_dev = herm_dev.max((entries[[i, j]] - entries[[j, i]].conj()).norm());
            }
        }
        if herm_dev > STATE_TOL {
            return Err(Error::InvalidParameter(format!(
                "state deviates from Hermiticity by {herm_dev:.3e}"
            )));
        }
        let trace: C64 = entries.diag().sum();
        if (trace - C64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::InvalidParameter(format!(
                "state trace {trace} is not one"
            )));
        }
        let eigs = entries.eigvalsh(UPLO::Lower)?;
        let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < POSITIVITY_FLOOR {
            return Err(Error::PositivityViolation {
                min_eigenvalue: min_eig,
            });
        }
        Ok(DensityMatrix { layout, entries })
    }

    pub fn layout(&self) -> &FockLayout {
        &self.layout
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<C64> {
        self.entries
    }

    /// ⟨Ô⟩ = Tr(ρÔ).
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.layout() != &self.layout {
            return Err(Error::LayoutMismatch(
                "operator and state live on different layouts".into(),
            ));
        }
        let o = op.entries();
        let mut sum = ZERO;
        for i in 0..self.layout.total_dim() {
            for k in 0..self.layout.total_dim() {
                sum += self.entries[[i, k]] * o[[k, i]];
            }
        }
        Ok(sum)
    }
}

/// Numerical controls, times in units of 1/γ and the tolerance in units of γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Fixed integration step.
    pub dt: f64,
    /// Integration horizon before giving up on convergence.
    pub t_max: f64,
    /// The state counts as steady once ‖dρ/dt‖_F falls below this.
    pub tol: f64,
    /// Dissipator coefficient cⱼ shared by both photonic modes.
    /// `None` uses the decay scale γ itself.
    pub dissipator_rate: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dt: 0.01,
            t_max: 200.0,
            tol: 1e-8,
            dissipator_rate: None,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_max.is_finite() && self.t_max >= self.dt) {
            return Err(Error::InvalidParameter(format!(
                "horizon must cover at least one step, got {}",
                self.t_max
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if let Some(c) = self.dissipator_rate {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "dissipator rate must be nonnegative, got {c}"
                )));
            }
        }
        Ok(())
    }

    fn rate(&self, params: &ModelParams) -> f64 {
        self.dissipator_rate.unwrap_or(params.gamma)
    }
}

/// Which route produced a steady state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyStateMethod {
    /// Fixed-step integration of the nonlinear flow from the vacuum.
    TimeEvolution,
    /// Rightmost eigenmatrix of the vectorized linear generator.
    LiouvillianEigen,
}

/// A steady state together with the evidence that it is one.
#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub rho: DensityMatrix,
    pub method: SteadyStateMethod,
    /// ‖dρ/dt‖_F at the reported state, absolute units.
    pub residual: f64,
    /// Integration steps taken, zero for the eigenvector route.
    pub steps: usize,
    /// Generator eigenvalue of the physical branch, eigenvector route only.
    pub rightmost_eigenvalue: Option<C64>,
}

/// Side-by-side steady g²(0) of the Kerr model and the optomechanical model.
#[derive(Debug, Clone, Copy)]
pub struct FullModelComparison {
    /// Two-mode Kerr model with U read off the mechanical sector.
    pub effective_g2: f64,
    /// Three-mode model at the requested mechanical truncation.
    pub full_g2: f64,
    /// Three-mode model with the mechanical dimension doubled.
    pub doubled_g2: f64,
    /// |full − effective| / |effective|.
    pub relative_deviation: f64,
    /// |full − doubled| / |full|, the truncation convergence measure.
    pub doubling_rel_change: f64,
    pub mech_dim: usize,
    /// U = g²/ω_m actually used on the Kerr side.
    pub kerr_from_mechanics: f64,
}

/// Right-hand side of the nonlinear master equation, reference form.
///
/// Written exactly as the equation reads, dense matrix products throughout.
/// The integrator uses a sparse equivalent; their agreement is pinned by a
/// test. `decay_rates` holds one coefficient per dissipative mode, leading
/// modes first, so a three-mode layout with two rates leaves the mechanical
/// mode closed.
pub fn master_rhs(
    rho: &DensityMatrix,
    pair: &HamiltonianPair,
    decay_rates: &[f64],
) -> Result<Array2<C64>> {
    let layout = rho.layout();
    if pair.h_plus.layout() != layout || pair.h_minus.layout() != layout {
        return Err(Error::LayoutMismatch(
            "Hamiltonian pair and state live on different layouts".into(),
        ));
    }
    if decay_rates.len() > layout.n_modes() {
        return Err(Error::LayoutMismatch(format!(
            "{} decay rates for {} modes",
            decay_rates.len(),
            layout.n_modes()
        )));
    }
    for &c in decay_rates {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "decay rates must be nonnegative, got {c}"
            )));
        }
    }
    let r = rho.entries();
    let hp = pair.h_plus.entries();
    let hm = pair.h_minus.entries();
    let minus_i = C64::new(0.0, -1.0);

    let mut rhs = (hp.dot(r) - r.dot(hp)) * minus_i;
    rhs = rhs + (hm.dot(r) + r.dot(hm)) * minus_i;
    for (mode, &c) in decay_rates.iter().enumerate() {
        let a = Operator::destroy(layout.clone(), mode)?;
        let adag = a.adjoint();
        let n = Operator::number(layout.clone(), mode)?;
        let sandwich = a.entries().dot(r).dot(adag.entries());
        let leak = n.entries().dot(r) + r.dot(n.entries());
        rhs = rhs + (sandwich * C64::new(2.0, 0.0) - leak) * C64::new(c, 0.0);
    }
    let trace_hm: C64 = r.dot(hm).diag().sum();
    rhs = rhs + r * (C64::new(0.0, 2.0) * trace_hm);
    Ok(rhs)
}

/// Steady state by integrating the nonlinear flow from the vacuum.
///
/// Classical fixed-step 4th-order stepping; every step rehermitizes and
/// renormalizes the state so roundoff cannot accumulate into the invariants.
/// Works on the two-mode Kerr layout and on the three-mode optomechanical
/// layout, with dissipators attached to the photonic modes only. On three
/// modes the step shrinks as needed to keep the fastest mechanical
/// coherence inside the stability region of the stepper.
pub fn evolve_to_steady(
    params: &ModelParams,
    layout: &FockLayout,
    opts: &SolveOptions,
) -> Result<SteadyStateReport> {
    params.validate()?;
    opts.validate()?;
    let h = hamiltonian_for(params, layout)?;
    let c = opts.rate(params);
    let stepper = Stepper::new(&h, &[c, c]);
    let mut ws = Workspace::new(layout.total_dim());
    let mut rho = DensityMatrix::vacuum(layout.clone()).into_entries();

    let dt = if layout.n_modes() == 3 {
        opts.dt.min(stable_dt(&h, &[c, c], params.gamma))
    } else {
        opts.dt
    };
    let dt_abs = dt / params.gamma;
    let tol_abs = opts.tol * params.gamma;
    let ceiling = DIVERGENCE_CEILING * params.gamma;
    let max_steps = (opts.t_max / dt).ceil() as usize;

    let mut residual = f64::INFINITY;
    for step in 0..=max_steps {
        stepper.rhs_into(&rho, &mut ws.k1, &mut ws.m, &mut ws.b);
        residual = frobenius(&ws.k1);
        let t = step as f64 * dt;
        if !residual.is_finite() || residual > ceiling {
            return Err(Error::Diverged { t, norm: residual });
        }
        if residual < tol_abs {
            let rho = DensityMatrix::from_entries(layout.clone(), rho)?;
            return Ok(SteadyStateReport {
                rho,
                method: SteadyStateMethod::TimeEvolution,
                residual,
                steps: step,
                rightmost_eigenvalue: None,
            });
        }
        if step == max_steps {
            break;
        }
        let trace = rk4_advance(&stepper, &mut rho, dt_abs, &mut ws);
        if !(trace.is_finite() && trace > 1e-12) {
            return Err(Error::Diverged { t, norm: trace });
        }
    }
    Err(Error::NonConvergence {
        t_final: opts.t_max,
        residual,
        tol: tol_abs,
    })
}

/// Steady state as the rightmost unit-trace eigenmatrix of the linear
/// generator, two-mode layouts only.
///
/// The reported residual is the norm of the full nonlinear right-hand side
/// evaluated at the eigenmatrix, so this route is checked against the same
/// equation the integrator solves, not against its own linear algebra.
pub fn steady_by_eigen(
    params: &ModelParams,
    layout: &FockLayout,
    opts: &SolveOptions,
) -> Result<SteadyStateReport> {
    params.validate()?;
    opts.validate()?;
    if layout.n_modes() != 2 {
        return Err(Error::LayoutMismatch(format!(
            "eigenvector route vectorizes the two-mode layout, got {} modes",
            layout.n_modes()
        )));
    }
    let d = layout.total_dim();
    if d > EIGEN_DIM_LIMIT {
        return Err(Error::EigenGuard {
            got: d,
            limit: EIGEN_DIM_LIMIT,
        });
    }
    let h = effective_hamiltonian(params, layout)?;
    let c = opts.rate(params);
    let generator = linear_superoperator(&h, &[c, c], layout)?;
    let (eigenvalues, eigenvectors) = generator.eig()?;

    let max_re = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let cluster: Vec<usize> = (0..eigenvalues.len())
        .filter(|&i| eigenvalues[i].re > max_re - DEGENERACY_TOL * params.gamma)
        .collect();
    if cluster.len() != 1 {
        return Err(Error::DegenerateSteadyState {
            multiplicity: cluster.len(),
        });
    }
    let rightmost = eigenvalues[cluster[0]];
    let column = eigenvectors.column(cluster[0]);
    let mut rho = Array2::from_shape_vec((d, d), column.to_vec())
        .expect("eigenvector length is the squared dimension");

    let trace: C64 = rho.diag().sum();
    if trace.norm() < 1e-10 * frobenius(&rho) {
        return Err(Error::NoSolution(
            "rightmost eigenmatrix carries no trace, so no normalizable steady state".into(),
        ));
    }
    rho.mapv_inplace(|z| z / trace);
    hermitize(&mut rho);
    renormalize(&mut rho);

    let stepper = Stepper::new(&h, &[c, c]);
    let mut ws = Workspace::new(d);
    stepper.rhs_into(&rho, &mut ws.k1, &mut ws.m, &mut ws.b);
    let residual = frobenius(&ws.k1);
    let tol_abs = opts.tol * params.gamma;
    if residual > tol_abs {
        return Err(Error::NonConvergence {
            t_final: 0.0,
            residual,
            tol: tol_abs,
        });
    }
    let rho = DensityMatrix::from_entries(layout.clone(), rho)?;
    Ok(SteadyStateReport {
        rho,
        method: SteadyStateMethod::LiouvillianEigen,
        residual,
        steps: 0,
        rightmost_eigenvalue: Some(rightmost),
    })
}

/// Checks the two-mode Kerr model against the three-mode optomechanical
/// model that generates it, at matched parameters.
///
/// The Kerr side runs with U = g²/ω_m read off the mechanical sector, so
/// the comparison probes the polaron reduction and nothing else. The
/// supplied `params.u` must already agree with that value to within
/// 10⁻³ γ. The three-mode run is repeated at twice the mechanical
/// truncation and the change must stay below one percent.
pub fn validate_full_vs_effective(
    params: &ModelParams,
    photonic_layout: &FockLayout,
    mech_dim: usize,
    opts: &SolveOptions,
) -> Result<FullModelComparison> {
    params.validate()?;
    opts.validate()?;
    if photonic_layout.n_modes() != 2 {
        return Err(Error::LayoutMismatch(format!(
            "photonic layout needs exactly 2 modes, got {}",
            photonic_layout.n_modes()
        )));
    }
    if mech_dim < 2 {
        return Err(Error::InvalidLayout(format!(
            "mechanical dimension must be at least 2, got {mech_dim}"
        )));
    }
    let u_eff = params.kerr_from_mechanics().ok_or_else(|| {
        Error::MissingMechanical("comparison needs omega_m and g".into())
    })?;
    let gate = 1e-3 * params.gamma;
    if (params.u - u_eff).abs() > gate {
        return Err(Error::KerrMismatch {
            u: params.u,
            derived: u_eff,
            tol: gate,
        });
    }

    let mut effective = params.clone();
    effective.u = u_eff;
    effective.omega_m = None;
    effective.g = None;
    let report = if photonic_layout.total_dim() <= EIGEN_DIM_LIMIT {
        steady_by_eigen(&effective, photonic_layout, opts)?
    } else {
        evolve_to_steady(&effective, photonic_layout, opts)?
    };
    let occs = mode_occupations(photonic_layout, 0);
    let effective_g2 = g2_from_diagonal(report.rho.entries(), &occs)?;

    let full_g2 = full_model_g2(params, photonic_layout, mech_dim, opts)?;
    let doubled_g2 = full_model_g2(params, photonic_layout, 2 * mech_dim, opts)?;
    let doubling_rel_change = (full_g2 - doubled_g2).abs() / full_g2.abs().max(f64::MIN_POSITIVE);
    if doubling_rel_change > 0.01 {
        return Err(Error::TruncationNotConverged {
            rel_change: doubling_rel_change,
            tol: 0.01,
        });
    }
    let relative_deviation =
        (full_g2 - effective_g2).abs() / effective_g2.abs().max(f64::MIN_POSITIVE);
    Ok(FullModelComparison {
        effective_g2,
        full_g2,
        doubled_g2,
        relative_deviation,
        doubling_rel_change,
        mech_dim,
        kerr_from_mechanics: u_eff,
    })
}

/// Sampling cadence for the three-mode g²(0) trace, units of 1/γ.
const FULL_SAMPLE_INTERVAL: f64 = 0.1;
/// Samples before this time never enter the stabilization windows.
const FULL_T_MIN: f64 = 40.0;
/// Averaging window length, in samples, for the stopping rule.
const FULL_WINDOW: usize = 100;
/// Relative drift between consecutive window means that counts as steady.
const FULL_DRIFT_TOL: f64 = 1e-3;

/// Steady g²(0) of the driven mode in the three-mode model.
///
/// The mechanical mode carries no dissipator, so the drive leaves a
/// persistent ringing at ω_m in the photonic populations and the state is
/// quasi-periodic rather than stationary. The reported value is therefore
/// the g²(0) averaged over a trailing window of 10/γ, and the integration
/// stops once two consecutive window averages agree. The step size shrinks
/// as needed to resolve the fastest mechanical coherence at the requested
/// truncation.
fn full_model_g2(
    params: &ModelParams,
    photonic_layout: &FockLayout,
    mech_dim: usize,
    opts: &SolveOptions,
) -> Result<f64> {
    let mut dims = photonic_layout.dims().to_vec();
    dims.push(mech_dim);
    let layout = FockLayout::new(&dims)?;
    let h = total_hamiltonian(params, &layout)?;
    let c = opts.rate(params);
    let stepper = Stepper::new(&h, &[c, c]);
    let mut ws = Workspace::new(layout.total_dim());
    let mut rho = DensityMatrix::vacuum(layout.clone()).into_entries();
    let occs = mode_occupations(&layout, 0);

    let dt = opts.dt.min(stable_dt(&h, &[c, c], params.gamma));
    let dt_abs = dt / params.gamma;
    let ceiling = DIVERGENCE_CEILING * params.gamma;
    let sample_every = (FULL_SAMPLE_INTERVAL / dt).round().max(1.0) as usize;
    let max_steps = (opts.t_max / dt).ceil() as usize;

    let mut samples: Vec<f64> = Vec::new();
    let mut drift = f64::INFINITY;
    for step in 0..max_steps {
        stepper.rhs_into(&rho, &mut ws.k1, &mut ws.m, &mut ws.b);
        let norm = frobenius(&ws.k1);
        let t = step as f64 * dt;
        if !norm.is_finite() || norm > ceiling {
            return Err(Error::Diverged { t, norm });
        }
        let trace = rk4_advance(&stepper, &mut rho, dt_abs, &mut ws);
        if !(trace.is_finite() && trace > 1e-12) {
            return Err(Error::Diverged { t, norm: trace });
        }
        if step % sample_every == 0 && t > 1.0 {
            samples.push(g2_from_diagonal(&rho, &occs)?);
            if t >= FULL_T_MIN && samples.len() >= 2 * FULL_WINDOW {
                let recent = mean(&samples[samples.len() - FULL_WINDOW..]);
                let previous =
                    mean(&samples[samples.len() - 2 * FULL_WINDOW..samples.len() - FULL_WINDOW]);
                drift = (recent - previous).abs() / recent.abs().max(f64::MIN_POSITIVE);
                if drift < FULL_DRIFT_TOL {
                    return Ok(recent);
                }
            }
        }
    }
    Err(Error::NonConvergence {
        t_final: opts.t_max,
        residual: drift,
        tol: FULL_DRIFT_TOL,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Largest step, in units of 1/γ, the 4th-order stepper tolerates.
///
/// The generator rotates coherences at the difference of two Hamiltonian
/// eigenvalues, so its spectral radius is below twice the Gershgorin bound
/// of Ĥ plus the dissipative contraction, and the stepper is stable while
/// the step times that stays under about 2.8.
fn stable_dt(h: &Operator, decay_rates: &[f64], gamma: f64) -> f64 {
    let entries = h.entries();
    let mut row_bound: f64 = 0.0;
    for row in entries.rows() {
        row_bound = row_bound.max(row.iter().map(|z| z.norm()).sum());
    }
    let dims = h.layout().dims();
    let contraction: f64 = decay_rates
        .iter()
        .zip(dims)
        .map(|(&c, &dim)| 4.0 * c * (dim as f64 - 1.0))
        .sum();
    2.5 * gamma / (2.0 * row_bound + contraction)
}

/// g²(0) of one mode from the diagonal of the density matrix.
///
/// Number operators are diagonal in the Fock basis, so ⟨n̂(n̂−1)⟩ and ⟨n̂⟩
/// come from populations alone. The trace factor keeps the ratio invariant
/// under global rescaling of ρ.
pub(crate) fn g2_from_diagonal(rho: &Array2<C64>, occs: &[f64]) -> Result<f64> {
    let mut trace = 0.0;
    let mut mean = 0.0;
    let mut pairs = 0.0;
    for (i, &n) in occs.iter().enumerate() {
        let p = rho[[i, i]].re;
        trace += p;
        mean += n * p;
        pairs += n * (n - 1.0) * p;
    }
    if mean <= 1e-14 * trace.max(1.0) {
        return Err(Error::ZeroOccupation { occupation: mean });
    }
    Ok(pairs * trace / (mean * mean))
}

pub(crate) fn mode_occupations(layout: &FockLayout, mode: usize) -> Vec<f64> {
    (0..layout.total_dim())
        .map(|i| layout.occupations(i)[mode] as f64)
        .collect()
}

fn hamiltonian_for(params: &ModelParams, layout: &FockLayout) -> Result<Operator> {
    match layout.n_modes() {
        2 => effective_hamiltonian(params, layout),
        3 => total_hamiltonian(params, layout),
        n => Err(Error::LayoutMismatch(format!(
            "steady-state solvers handle 2 or 3 modes, got {n}"
        ))),
    }
}

/// Vectorized linear generator, row-major convention vec(AρB) = (A⊗Bᵀ)vec(ρ).
fn linear_superoperator(
    h: &Operator,
    decay_rates: &[f64],
    layout: &FockLayout,
) -> Result<Array2<C64>> {
    let d = layout.total_dim();
    let id = Array2::<C64>::eye(d);
    let hm = h.entries();
    let minus_i = C64::new(0.0, -1.0);
    let plus_i = C64::new(0.0, 1.0);

    let mut gen = kron(hm, &id) * minus_i;
    gen = gen + kron(&id, &hm.mapv(|z| z.conj())) * plus_i;
    for (mode, &c) in decay_rates.iter().enumerate() {
        let a = Operator::destroy(layout.clone(), mode)?;
        let n = Operator::number(layout.clone(), mode)?;
        let a_conj = a.entries().mapv(|z| z.conj());
        gen = gen + kron(a.entries(), &a_conj) * C64::new(2.0 * c, 0.0);
        gen = gen - kron(n.entries(), &id) * C64::new(c, 0.0);
        gen = gen - kron(&id, n.entries()) * C64::new(c, 0.0);
    }
    Ok(gen)
}

/// Sparse matrix in triplet form, enough structure for the stepper.
struct SparseOp {
    triplets: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(m: &Array2<C64>) -> Self {
        let mut triplets = Vec::new();
        for ((r, c), &v) in m.indexed_iter() {
            if v != ZERO {
                triplets.push((r, c, v));
            }
        }
        SparseOp { triplets }
    }

    /// out += M·ρ, one row update per stored entry.
    fn accumulate_left(&self, rho: &Array2<C64>, out: &mut Array2<C64>) {
        for &(r, c, v) in &self.triplets {
            out.row_mut(r).scaled_add(v, &rho.row(c));
        }
    }

    /// Tr(ρ·M) without forming the product.
    fn trace_with(&self, rho: &Array2<C64>) -> C64 {
        let mut sum = ZERO;
        for &(r, c, v) in &self.triplets {
            sum += rho[[c, r]] * v;
        }
        sum
    }
}

/// Fast right-hand side in the form Gρ + ρG† + Σⱼ 2cⱼâⱼρâⱼ† + 2iTr(ρĤ₋)ρ
/// with G = −iĤ − Σⱼ cⱼn̂ⱼ. Valid for Hermitian ρ, where ρG† = (Gρ)†.
struct Stepper {
    dim: usize,
    g: SparseOp,
    h_minus: SparseOp,
    jumps: Vec<(f64, SparseOp)>,
}

impl Stepper {
    fn new(h: &Operator, decay_rates: &[f64]) -> Self {
        let layout = h.layout().clone();
        let d = layout.total_dim();
        let minus_i = C64::new(0.0, -1.0);
        let mut g_dense = h.entries() * minus_i;
        let mut jumps = Vec::new();
        for (mode, &c) in decay_rates.iter().enumerate() {
            let n = Operator::number(layout.clone(), mode)
                .expect("decay rate count never exceeds the mode count");
            g_dense = g_dense - n.entries() * C64::new(c, 0.0);
            let a = Operator::destroy(layout.clone(), mode)
                .expect("decay rate count never exceeds the mode count");
            jumps.push((c, SparseOp::from_dense(a.entries())));
        }
        let pair = hermitian_split(h);
        Stepper {
            dim: d,
            g: SparseOp::from_dense(&g_dense),
            h_minus: SparseOp::from_dense(pair.h_minus.entries()),
            jumps,
        }
    }

    /// Writes the full nonlinear right-hand side into `out`.
    /// `m` and `b` are scratch space of the same shape.
    fn rhs_into(
        &self,
        rho: &Array2<C64>,
        out: &mut Array2<C64>,
        m: &mut Array2<C64>,
        b: &mut Array2<C64>,
    ) {
        let d = self.dim;
        m.fill(ZERO);
        self.g.accumulate_left(rho, m);
        for i in 0..d {
            for j in 0..d {
                out[[i, j]] = m[[i, j]] + m[[j, i]].conj();
            }
        }
        for (c, a) in &self.jumps {
            b.fill(ZERO);
            a.accumulate_left(rho, b);
            for &(r, col, v) in &a.triplets {
                let w = v.conj() * (2.0 * c);
                out.column_mut(r).scaled_add(w, &b.column(col));
            }
        }
        let norm_rate = self.h_minus.trace_with(rho) * C64::new(0.0, 2.0);
        Zip::from(out).and(rho).for_each(|o, &r| *o += norm_rate * r);
    }
}

struct Workspace {
    k1: Array2<C64>,
    k2: Array2<C64>,
    k3: Array2<C64>,
    k4: Array2<C64>,
    stage: Array2<C64>,
    m: Array2<C64>,
    b: Array2<C64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        let zeros = || Array2::<C64>::zeros((d, d));
        Workspace {
            k1: zeros(),
            k2: zeros(),
            k3: zeros(),
            k4: zeros(),
            stage: zeros(),
            m: zeros(),
            b: zeros(),
        }
    }
}

/// One 4th-order step; expects `ws.k1` to hold the slope at `rho` already.
/// Rehermitizes, then returns the pre-normalization trace.
fn rk4_advance(stepper: &Stepper, rho: &mut Array2<C64>, dt: f64, ws: &mut Workspace) -> f64 {
    let half = 0.5 * dt;
    Zip::from(&mut ws.stage)
        .and(&*rho)
        .and(&ws.k1)
        .for_each(|s, &r, &k| *s = r + k * half);
    stepper.rhs_into(&ws.stage, &mut ws.k2, &mut ws.m, &mut ws.b);
    Zip::from(&mut ws.stage)
        .and(&*rho)
        .and(&ws.k2)
        .for_each(|s, &r, &k| *s = r + k * half);
    stepper.rhs_into(&ws.stage, &mut ws.k3, &mut ws.m, &mut ws.b);
    Zip::from(&mut ws.stage)
        .and(&*rho)
        .and(&ws.k3)
        .for_each(|s, &r, &k| *s = r + k * dt);
    stepper.rhs_into(&ws.stage, &mut ws.k4, &mut ws.m, &mut ws.b);
    let sixth = dt / 6.0;
    Zip::from(&mut *rho)
        .and(&ws.k1)
        .and(&ws.k2)
        .and(&ws.k3)
        .and(&ws.k4)
        .for_each(|r, &k1, &k2, &k3, &k4| *r += (k1 + (k2 + k3) * 2.0 + k4) * sixth);
    hermitize(rho);
    renormalize(rho)
}

fn hermitize(m: &mut Array2<C64>) {
    let d = m.nrows();
    for i in 0..d {
        m[[i, i]] = C64::new(m[[i, i]].re, 0.0);
        for j in (i + 1)..d {
            let avg = (m[[i, j]] + m[[j, i]].conj()) * 0.5;
            m[[i, j]] = avg;
            m[[j, i]] = avg.conj();
        }
    }
}

/// Divides by the (real) trace when it is usable; returns the trace found.
fn renormalize(m: &mut Array2<C64>) -> f64 {
    let trace: f64 = m.diag().iter().map(|z| z.re).sum();
    if trace.is_finite() && trace.abs() > 1e-12 {
        m.mapv_inplace(|z| z / trace);
    }
    trace
}

fn frobenius(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ep_params() -> ModelParams {
        ModelParams {
            lambda1: C64::new(1.5, -0.355),
            lambda2: C64::new(1.4, -0.645),
            m: 4,
            mu: 0.1170686206 * PI,
            delta: 2.0,
            u: 2.0,
            drive: 0.1,
            ..ModelParams::default()
        }
    }

    fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn random_state(layout: &FockLayout, seed: u64) -> DensityMatrix {
        let d = layout.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Array2::from_shape_fn((d, d), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let gdag = g.mapv(|z| z.conj()).reversed_axes();
        let mut rho = g.dot(&gdag);
        let trace: f64 = rho.diag().iter().map(|z| z.re).sum();
        rho.mapv_inplace(|z| z / trace);
        DensityMatrix::from_entries(layout.clone(), rho).expect("GG† is a valid state")
    }

    fn random_hamiltonian(layout: &FockLayout, seed: u64) -> Operator {
        let d = layout.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = Array2::from_shape_fn((d, d), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        Operator::from_entries(layout.clone(), entries).expect("square matrix fits the layout")
    }

    #[test]
    fn pure_decay_drains_a_single_photon_at_twice_the_rate() {
        let layout = FockLayout::new(&[3]).unwrap();
        let h = Operator::zeros(layout.clone());
        let pair = hermitian_split(&h);
        let mut one = Array2::<C64>::zeros((3, 3));
        one[[1, 1]] = C64::new(1.0, 0.0);
        let rho = DensityMatrix::from_entries(layout, one).unwrap();
        let rhs = master_rhs(&rho, &pair, &[0.7]).unwrap();
        assert!(
            (rhs[[0, 0]] - C64::new(1.4, 0.0)).norm() < 1e-15,
            "vacuum should refill at 2c, got {}",
            rhs[[0, 0]]
        );
        assert!(
            (rhs[[1, 1]] + C64::new(1.4, 0.0)).norm() < 1e-15,
            "the photon should drain at 2c, got {}",
            rhs[[1, 1]]
        );
        assert!(
            rhs[[2, 2]].norm() < 1e-15,
            "the empty two-photon level should stay empty"
        );
    }

    #[test]
    fn master_rhs_preserves_the_trace_on_random_states() {
        let layout = FockLayout::new(&[3, 2]).unwrap();
        for seed in 0..8 {
            let rho = random_state(&layout, seed);
            let h = random_hamiltonian(&layout, 100 + seed);
            let pair = hermitian_split(&h);
            let rhs = master_rhs(&rho, &pair, &[0.3, 0.9]).unwrap();
            let trace: C64 = rhs.diag().sum();
            assert!(
                trace.norm() < 1e-12,
                "norm bending and its restoring term must cancel, seed {seed} left {trace}"
            );
        }
    }

    #[test]
    fn dense_reference_and_sparse_stepper_agree() {
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let h = effective_hamiltonian(&ep_params(), &layout).unwrap();
        let pair = hermitian_split(&h);
        let stepper = Stepper::new(&h, &[1.0, 1.0]);
        let mut ws = Workspace::new(layout.total_dim());
        for seed in 0..4 {
            let rho = random_state(&layout, 20 + seed);
            let dense = master_rhs(&rho, &pair, &[1.0, 1.0]).unwrap();
            stepper.rhs_into(rho.entries(), &mut ws.k1, &mut ws.m, &mut ws.b);
            let dev = max_abs_diff(&dense, &ws.k1);
            assert!(dev < 1e-12, "stepper drifted from the reference by {dev}");
        }
    }

    #[test]
    fn vectorized_generator_matches_the_linear_flow() {
        let layout = FockLayout::new(&[3, 2]).unwrap();
        let params = ep_params();
        let h = effective_hamiltonian(&params, &layout).unwrap();
        let pair = hermitian_split(&h);
        let rates = [0.8, 0.8];
        let gen = linear_superoperator(&h, &rates, &layout).unwrap();
        let d = layout.total_dim();
        for seed in 0..4 {
            let rho = random_state(&layout, 40 + seed);
            let full = master_rhs(&rho, &pair, &rates).unwrap();
            let trace_hm: C64 = rho
                .entries()
                .dot(pair.h_minus.entries())
                .diag()
                .sum();
            let linear = full - rho.entries() * (C64::new(0.0, 2.0) * trace_hm);
            let vec_rho: Vec<C64> = rho.entries().iter().copied().collect();
            let flat = gen.dot(&ndarray::Array1::from(vec_rho));
            let reshaped = Array2::from_shape_vec((d, d), flat.to_vec()).unwrap();
            let dev = max_abs_diff(&linear, &reshaped);
            assert!(dev < 1e-12, "superoperator and direct products differ by {dev}");
        }
    }

    #[test]
    fn undriven_cavity_settles_into_vacuum() {
        let mut params = ep_params();
        params.drive = 0.0;
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let report = evolve_to_steady(&params, &layout, &SolveOptions::default()).unwrap();
        assert!(report.residual < 1e-8, "residual {}", report.residual);
        assert!(
            (report.rho.entries()[[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-8,
            "without drive every photon leaks out"
        );
    }

    #[test]
    fn eigen_route_finds_the_vacuum_dark_state() {
        let mut params = ep_params();
        params.drive = 0.0;
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let report = steady_by_eigen(&params, &layout, &SolveOptions::default()).unwrap();
        let rightmost = report.rightmost_eigenvalue.unwrap();
        assert!(
            rightmost.norm() < 1e-10,
            "vacuum neither decays nor bends the norm, got {rightmost}"
        );
        assert!(
            (report.rho.entries()[[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-10,
            "steady state should be the vacuum"
        );
    }

    #[test]
    fn hermitian_coupling_gives_a_zero_rightmost_eigenvalue() {
        let params = ModelParams {
            lambda1: C64::new(0.3, 0.0),
            lambda2: C64::new(0.2, 0.0),
            m: 2,
            mu: 0.3,
            delta: 1.0,
            u: 0.5,
            drive: 0.3,
            ..ModelParams::default()
        };
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let report = steady_by_eigen(&params, &layout, &SolveOptions::default()).unwrap();
        let rightmost = report.rightmost_eigenvalue.unwrap();
        assert!(
            rightmost.norm() < 1e-8,
            "a Hermitian Hamiltonian leaves a trace-preserving generator, got {rightmost}"
        );
        let n0 = Operator::number(layout, 0).unwrap();
        let occupation = report.rho.expectation(&n0).unwrap().re;
        assert!(occupation > 1e-3, "the drive should populate the cavity");
    }

    #[test]
    fn time_evolution_and_eigenvector_routes_agree() {
        let params = ep_params();
        let layout = FockLayout::new(&[4, 4]).unwrap();
        let opts = SolveOptions::default();
        let evolved = evolve_to_steady(&params, &layout, &opts).unwrap();
        let eigen = steady_by_eigen(&params, &layout, &opts).unwrap();
        let dev = max_abs_diff(evolved.rho.entries(), eigen.rho.entries());
        assert!(
            dev < 1e-6,
            "independent routes disagree by {dev} in matrix entries"
        );
        assert!(evolved.residual < opts.tol * params.gamma);
        assert!(eigen.residual < opts.tol * params.gamma);
    }

    #[test]
    fn steady_state_forgets_the_initial_condition() {
        let params = ep_params();
        let layout = FockLayout::new(&[4, 4]).unwrap();
        let opts = SolveOptions::default();
        let from_vacuum = evolve_to_steady(&params, &layout, &opts).unwrap();

        let h = effective_hamiltonian(&params, &layout).unwrap();
        let stepper = Stepper::new(&h, &[1.0, 1.0]);
        let mut ws = Workspace::new(layout.total_dim());
        let mut rho = DensityMatrix::maximally_mixed(layout.clone()).into_entries();
        let steps = (opts.t_max / opts.dt) as usize;
        for _ in 0..steps {
            stepper.rhs_into(&rho, &mut ws.k1, &mut ws.m, &mut ws.b);
            if frobenius(&ws.k1) < opts.tol {
                break;
            }
            rk4_advance(&stepper, &mut rho, opts.dt, &mut ws);
        }
        let dev = max_abs_diff(from_vacuum.rho.entries(), &rho);
        assert!(
            dev < 1e-6,
            "vacuum and maximally mixed starts should meet, differ by {dev}"
        );
    }

    #[test]
    fn rightmost_eigenvalue_equals_the_norm_flow_rate() {
        let params = ep_params();
        let layout = FockLayout::new(&[4, 4]).unwrap();
        let report = steady_by_eigen(&params, &layout, &SolveOptions::default()).unwrap();
        let h = effective_hamiltonian(&params, &layout).unwrap();
        let pair = hermitian_split(&h);
        let trace_hm: C64 = report
            .rho
            .entries()
            .dot(pair.h_minus.entries())
            .diag()
            .sum();
        let predicted = C64::new(0.0, -2.0) * trace_hm;
        let rightmost = report.rightmost_eigenvalue.unwrap();
        assert!(
            (rightmost - predicted).norm() < 1e-8,
            "the steady branch must sit at −2iTr(ρĤ₋), got {rightmost} vs {predicted}"
        );
        assert!(
            rightmost.im.abs() < 1e-9,
            "the physical branch carries a real rate, got {rightmost}"
        );
    }

    /// At μ = 0.125π this λ pair couples the modes with Im√(𝓔₁𝓔₂) larger
    /// than a weakened dissipator, so the linearized spectrum has growing
    /// branches. The trace-normalized flow still lands on the positive
    /// eigenmatrix of the semigroup.
    #[test]
    fn amplified_backscattering_still_reaches_a_physical_state() {
        let mut params = ep_params();
        params.mu = 0.125 * PI;
        let layout = FockLayout::new(&[4, 4]).unwrap();
        let opts = SolveOptions {
            dissipator_rate: Some(0.2),
            ..SolveOptions::default()
        };
        let report = steady_by_eigen(&params, &layout, &opts).unwrap();
        let n0 = Operator::number(layout.clone(), 0).unwrap();
        let n1 = Operator::number(layout, 1).unwrap();
        let total = report.rho.expectation(&n0).unwrap().re
            + report.rho.expectation(&n1).unwrap().re;
        assert!(
            total.is_finite() && total > 0.0,
            "occupation should be finite and positive, got {total}"
        );
        assert!(
            total < 6.0,
            "occupation {total} presses against the truncation"
        );
    }

    #[test]
    fn dissipation_free_generator_reports_degeneracy() {
        let params = ModelParams {
            lambda1: C64::new(0.3, 0.0),
            lambda2: C64::new(0.2, 0.0),
            m: 2,
            mu: 0.3,
            delta: 1.0,
            ..ModelParams::default()
        };
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let opts = SolveOptions {
            dissipator_rate: Some(0.0),
            ..SolveOptions::default()
        };
        match steady_by_eigen(&params, &layout, &opts) {
            Err(Error::DegenerateSteadyState { multiplicity }) => {
                assert!(multiplicity > 1, "closed unitary motion conserves every level");
            }
            other => panic!("expected a degeneracy report, got {other:?}"),
        }
    }

    #[test]
    fn eigen_guard_rejects_oversized_photonic_spaces() {
        let params = ep_params();
        let layout = FockLayout::new(&[9, 9]).unwrap();
        match steady_by_eigen(&params, &layout, &SolveOptions::default()) {
            Err(Error::EigenGuard { got, limit }) => {
                assert_eq!(got, 81);
                assert_eq!(limit, 64);
            }
            other => panic!("expected the dimension guard, got {other:?}"),
        }
    }

    #[test]
    fn density_matrix_constructors_validate_their_invariants() {
        let layout = FockLayout::new(&[2, 2]).unwrap();
        let vac = DensityMatrix::vacuum(layout.clone());
        assert!((vac.entries().diag().sum() - C64::new(1.0, 0.0)).norm() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(layout.clone());
        assert!((mixed.entries()[[3, 3]] - C64::new(0.25, 0.0)).norm() < 1e-15);

        let mut negative = Array2::<C64>::zeros((4, 4));
        negative[[0, 0]] = C64::new(1.5, 0.0);
        negative[[1, 1]] = C64::new(-0.5, 0.0);
        match DensityMatrix::from_entries(layout.clone(), negative) {
            Err(Error::PositivityViolation { min_eigenvalue }) => {
                assert!((min_eigenvalue + 0.5).abs() < 1e-12);
            }
            other => panic!("expected a positivity violation, got {other:?}"),
        }

        let mut off_trace = Array2::<C64>::zeros((4, 4));
        off_trace[[0, 0]] = C64::new(0.5, 0.0);
        assert!(
            DensityMatrix::from_entries(layout.clone(), off_trace).is_err(),
            "trace one half must be rejected"
        );

        let mut skew = Array2::<C64>::zeros((4, 4));
        skew[[0, 0]] = C64::new(1.0, 0.0);
        skew[[0, 1]] = C64::new(0.3, 0.0);
        assert!(
            DensityMatrix::from_entries(layout, skew).is_err(),
            "a one-sided coherence is not Hermitian"
        );
    }

    #[test]
    fn blockade_survives_the_optomechanical_upgrade() {
        let mut params = ep_params();
        params.omega_m = Some(30.0);
        params.g = Some(7.745966692414834);
        params.u = 2.0;
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let comparison =
            validate_full_vs_effective(&params, &layout, 6, &SolveOptions::default()).unwrap();
        assert!(
            comparison.relative_deviation < 0.15,
            "polaron reduction off by {:.1}% (effective {:.4}, full {:.4})",
            100.0 * comparison.relative_deviation,
            comparison.effective_g2,
            comparison.full_g2
        );
        assert!(
            comparison.doubling_rel_change < 0.01,
            "mechanical truncation unconverged: {:.3e}",
            comparison.doubling_rel_change
        );
    }

    #[test]
    fn mechanical_checks_demand_consistent_parameters() {
        let params = ep_params();
        let layout = FockLayout::new(&[3, 3]).unwrap();
        match validate_full_vs_effective(&params, &layout, 4, &SolveOptions::default()) {
            Err(Error::MissingMechanical(_)) => {}
            other => panic!("expected a missing-mechanics report, got {other:?}"),
        }
        let mut skewed = ep_params();
        skewed.omega_m = Some(30.0);
        skewed.g = Some(7.745966692414834);
        skewed.u = 2.5;
        match validate_full_vs_effective(&skewed, &layout, 4, &SolveOptions::default()) {
            Err(Error::KerrMismatch { u, derived, .. }) => {
                assert!((u - 2.5).abs() < 1e-12);
                assert!((derived - 2.0).abs() < 1e-9);
            }
            other => panic!("expected a Kerr mismatch, got {other:?}"),
        }
    }

    #[test]
    fn solver_rejects_nonsense_numerics() {
        let params = ep_params();
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let bad_dt = SolveOptions {
            dt: 0.0,
            ..SolveOptions::default()
        };
        assert!(matches!(
            evolve_to_steady(&params, &layout, &bad_dt),
            Err(Error::InvalidParameter(_))
        ));
        let bad_tol = SolveOptions {
            tol: -1.0,
            ..SolveOptions::default()
        };
        assert!(matches!(
            evolve_to_steady(&params, &layout, &bad_tol),
            Err(Error::InvalidParameter(_))
        ));
        let short = SolveOptions {
            t_max: 0.05,
            ..SolveOptions::default()
        };
        assert!(matches!(
            evolve_to_steady(&params, &layout, &short),
            Err(Error::NonConvergence { .. })
        ));
    }
}

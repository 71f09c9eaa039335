//! Observables of the scatterer-coupled resonator: few-excitation spectra,
//! photon correlations, and number distributions.
//!
//! Without the drive the effective Hamiltonian conserves total photon
//! number, so its spectrum splits into finite blocks. On span{|1,0⟩, |0,1⟩}
//! the eigenvalues are Δ − U ± s with s = √(𝓔₁𝓔₂) and right eigenvectors
//! √𝓔₁|1,0⟩ ± √𝓔₂|0,1⟩; on span{|2,0⟩, |1,1⟩, |0,2⟩} they are
//! 2Δ − 4U + {+2s, 0, −2s} with eigenvectors 𝓔₁|2,0⟩ ± √2s|1,1⟩ + 𝓔₂|0,2⟩
//! and 𝓔₁|2,0⟩ − 𝓔₂|0,2⟩. Both splittings are proportional to s, so an
//! exceptional point closes the one- and the two-photon ladder at once,
//! and the eigenvector overlap rising to one tells that coalescence apart
//! from an ordinary level crossing, where the eigenvectors stay distinct.
//!
//! Steady states feed the statistical side: g²(0) from the populations of
//! one mode, its marginal photon distribution against a Poisson reference
//! of equal mean, and the few-photon populations along a detuning grid.

use ndarray::Array2;
use ndarray_linalg::Eig;

use crate::hilbert::FockLayout;
use crate::liouville::{
    evolve_to_steady, g2_from_diagonal, mode_occupations, steady_by_eigen, DensityMatrix,
    SolveOptions,
};
use crate::model::{effective_hamiltonian, scattering_rates, ModelParams};
use crate::{C64, Error, Result};

/// Below this |𝓔₁𝓔₂| (times γ²) the block is treated as coalesced.
const COALESCENCE_TOL: f64 = 1e-10;
/// Poisson reference weights below this count as underflowed.
const POISSON_FLOOR: f64 = 1e-300;

/// Fixed-photon-number block of the drive-free Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralSubspace {
    /// span{|1,0⟩, |0,1⟩}
    SingleExcitation,
    /// span{|2,0⟩, |1,1⟩, |0,2⟩}
    TwoExcitation,
}

/// Eigensystem of one few-photon block, closed form beside a numeric check.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub subspace: SpectralSubspace,
    /// Closed-form eigenvalues in units of γ, listed with multiplicity.
    pub eigenvalues: Vec<C64>,
    /// Unit right eigenvectors in the number basis of the block; a single
    /// entry when the block is defective.
    pub eigenvectors: Vec<Vec<C64>>,
    /// E₊ − E₋ on one excitation, E₊ − E₀ on two, units of γ.
    pub splitting: C64,
    /// |⟨ψ₊|ψ₋⟩| (one excitation) or |⟨ψ₊|ψ₀⟩| (two) of the unit vectors.
    pub overlap: f64,
    /// Eigenvalues of the numerically projected Hamiltonian, matched one to
    /// one against `eigenvalues`.
    pub numeric_eigenvalues: Vec<C64>,
}

/// Eigenvalues, eigenvectors, splitting, and overlap of one block.
///
/// The drive is ignored: amplitudes of different photon number only mix
/// through F. Closed forms come from the scattering rates; an independent
/// numeric diagonalization of the projected Hamiltonian rides along in
/// `numeric_eigenvalues`. At a coalescence (|𝓔₁𝓔₂| < 1e−10 γ²) the repeated
/// eigenvalue is listed with its multiplicity, a single eigenvector is
/// returned, and the overlap is exactly one.
pub fn subspace_spectrum(
    params: &ModelParams,
    subspace: SpectralSubspace,
) -> Result<SpectralReport> {
    params.validate()?;
    let rates = scattering_rates(params);
    let (e1, e2) = (rates.e1, rates.e2);
    let s = rates.product().sqrt();
    let coalesced = rates.product().norm() < COALESCENCE_TOL;
    let numeric = projected_eigenvalues(params, subspace)?;

    let report = match subspace {
        SpectralSubspace::SingleExcitation => {
            let base = C64::new(params.delta - params.u, 0.0);
            let plus = vec![e1.sqrt(), e2.sqrt()];
            let minus = vec![e1.sqrt(), -e2.sqrt()];
            if coalesced {
                SpectralReport {
                    subspace,
                    eigenvalues: vec![base, base],
                    eigenvectors: vec![unit_or_first(plus)],
                    splitting: 2.0 * s,
                    overlap: 1.0,
                    numeric_eigenvalues: Vec::new(),
                }
            } else {
                let plus = unit_or_first(plus);
                let minus = unit_or_first(minus);
                let overlap = inner_magnitude(&plus, &minus);
                SpectralReport {
                    subspace,
                    eigenvalues: vec![base + s, base - s],
                    eigenvectors: vec![plus, minus],
                    splitting: 2.0 * s,
                    overlap,
                    numeric_eigenvalues: Vec::new(),
                }
            }
        }
        SpectralSubspace::TwoExcitation => {
            let base = C64::new(2.0 * params.delta - 4.0 * params.u, 0.0);
            let root2 = C64::new(std::f64::consts::SQRT_2, 0.0);
            let plus = vec![e1, root2 * s, e2];
            let zero = vec![e1, C64::new(0.0, 0.0), -e2];
            if coalesced {
                SpectralReport {
                    subspace,
                    eigenvalues: vec![base, base, base],
                    eigenvectors: vec![unit_or_first(zero)],
                    splitting: 2.0 * s,
                    overlap: 1.0,
                    numeric_eigenvalues: Vec::new(),
                }
            } else {
                let plus = unit_or_first(plus);
                let zero = unit_or_first(zero);
                let overlap = inner_magnitude(&plus, &zero);
                SpectralReport {
                    subspace,
                    eigenvalues: vec![base + 2.0 * s, base, base - 2.0 * s],
                    eigenvectors: vec![plus, unit_or_first(vec![e1, -root2 * s, e2])],
                    splitting: 2.0 * s,
                    overlap,
                    numeric_eigenvalues: Vec::new(),
                }
            }
        }
    };
    Ok(SpectralReport {
        numeric_eigenvalues: match_nearest(&report.eigenvalues, numeric),
        ..report
    })
}

/// One row of [`splitting_scan`].
#[derive(Debug, Clone)]
pub struct SplittingSample {
    pub mu: f64,
    pub splitting: C64,
    pub overlap: f64,
}

/// Splitting and overlap of one block along a grid of scatterer angles.
///
/// Rows come back in grid order. Exceptional points show up as angles where
/// |splitting| collapses while the overlap rises to one; at an ordinary
/// crossing only the imaginary or real part of the splitting vanishes.
pub fn splitting_scan(
    params: &ModelParams,
    mu_grid: &[f64],
    subspace: SpectralSubspace,
) -> Result<Vec<SplittingSample>> {
    if mu_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "splitting scan needs a non-empty angle grid".into(),
        ));
    }
    mu_grid
        .iter()
        .map(|&mu| {
            let mut p = params.clone();
            p.mu = mu;
            let report = subspace_spectrum(&p, subspace)?;
            Ok(SplittingSample {
                mu,
                splitting: report.splitting,
                overlap: report.overlap,
            })
        })
        .collect()
}

/// Equal-time second-order correlation g²(0) = ⟨â†â†ââ⟩/⟨â†â⟩² of one mode.
///
/// Both operators are diagonal in the number basis, so only populations
/// enter; the ratio is invariant under rescaling of ρ. A mode with mean
/// occupation at roundoff level has no defined pair correlation and is
/// reported as such rather than as 0/0.
pub fn g2_zero(rho: &DensityMatrix, mode: usize) -> Result<f64> {
    let layout = rho.layout();
    if mode >= layout.n_modes() {
        return Err(Error::ModeOutOfRange {
            mode,
            n_modes: layout.n_modes(),
        });
    }
    let occs = mode_occupations(layout, mode);
    g2_from_diagonal(rho.entries(), &occs)
}

/// Marginal photon-number statistics of one mode beside a Poisson reference.
#[derive(Debug, Clone)]
pub struct PhotonDistribution {
    /// P(n), marginal over every other mode.
    pub probabilities: Vec<f64>,
    /// ⟨n̂⟩ of the marginal.
    pub mean: f64,
    /// 𝒫(n) = e^{−⟨n̂⟩}⟨n̂⟩ⁿ/n!, same mean as the state.
    pub poisson_reference: Vec<f64>,
    /// R(n) = P(n)/𝒫(n) − 1; absent where the reference underflows.
    pub relative: Vec<Option<f64>>,
}

/// Photon distribution of one mode and its deviation from Poisson.
///
/// Sub-Poissonian light shows R(1) > 0 with R(n ≥ 2) < 0: the one-photon
/// rung is enhanced and the higher rungs are suppressed relative to
/// coherent light of the same brightness. R(2) > 0 is a bunching tail.
pub fn photon_distribution(rho: &DensityMatrix, mode: usize) -> Result<PhotonDistribution> {
    let layout = rho.layout();
    if mode >= layout.n_modes() {
        return Err(Error::ModeOutOfRange {
            mode,
            n_modes: layout.n_modes(),
        });
    }
    let dim = layout.dims()[mode];
    let mut probabilities = vec![0.0; dim];
    for i in 0..layout.total_dim() {
        probabilities[layout.occupations(i)[mode]] += rho.entries()[[i, i]].re;
    }
    let mean: f64 = probabilities
        .iter()
        .enumerate()
        .map(|(n, &p)| n as f64 * p)
        .sum();
    let mut poisson_reference = Vec::with_capacity(dim);
    let mut weight = (-mean).exp();
    for n in 0..dim {
        if n > 0 {
            weight *= mean / n as f64;
        }
        poisson_reference.push(weight);
    }
    let relative = probabilities
        .iter()
        .zip(&poisson_reference)
        .map(|(&p, &q)| (q > POISSON_FLOOR).then(|| p / q - 1.0))
        .collect();
    Ok(PhotonDistribution {
        probabilities,
        mean,
        poisson_reference,
        relative,
    })
}

/// Populations of the lowest Fock states at one detuning.
#[derive(Debug, Clone)]
pub struct ProbabilityTraceRow {
    pub delta: f64,
    /// |C₁₀|², one photon in the driven mode.
    pub p10: f64,
    /// |C₀₁|², one photon in the scattered mode.
    pub p01: f64,
    /// |C₂₀|², the photon pair behind two-photon interference features.
    pub p20: f64,
    pub p11: f64,
    pub p02: f64,
}

/// Few-photon steady-state populations along a detuning grid.
///
/// Each grid point is solved through the generator spectrum, falling back
/// to time evolution when the rightmost eigenvalue is degenerate. Meant for
/// weak drives, where the populations approximate |C_{n₁n₂}|² of the
/// stationary amplitudes and can sit directly beside the closed forms.
pub fn probability_trace(
    params: &ModelParams,
    delta_grid: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<ProbabilityTraceRow>> {
    if delta_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "probability trace needs a non-empty detuning grid".into(),
        ));
    }
    let layout = FockLayout::new(&[4, 4])?;
    delta_grid
        .iter()
        .map(|&delta| {
            let mut p = params.clone();
            p.delta = delta;
            let report = match steady_by_eigen(&p, &layout, opts) {
                Ok(report) => report,
                Err(Error::DegenerateSteadyState { .. }) => evolve_to_steady(&p, &layout, opts)?,
                Err(e) => return Err(e),
            };
            let rho = report.rho.entries();
            let pop = |occ: &[usize]| rho[[layout.flat_index(occ), layout.flat_index(occ)]].re;
            Ok(ProbabilityTraceRow {
                delta,
                p10: pop(&[1, 0]),
                p01: pop(&[0, 1]),
                p20: pop(&[2, 0]),
                p11: pop(&[1, 1]),
                p02: pop(&[0, 2]),
            })
        })
        .collect()
}

/// Eigenvalues of the drive-free Hamiltonian projected onto one block.
fn projected_eigenvalues(params: &ModelParams, subspace: SpectralSubspace) -> Result<Vec<C64>> {
    let layout = FockLayout::new(&[3, 3])?;
    let mut p = params.clone();
    p.drive = 0.0;
    let h = effective_hamiltonian(&p, &layout)?;
    let basis: Vec<usize> = match subspace {
        SpectralSubspace::SingleExcitation => vec![
            layout.flat_index(&[1, 0]),
            layout.flat_index(&[0, 1]),
        ],
        SpectralSubspace::TwoExcitation => vec![
            layout.flat_index(&[2, 0]),
            layout.flat_index(&[1, 1]),
            layout.flat_index(&[0, 2]),
        ],
    };
    let k = basis.len();
    let mut block = Array2::zeros((k, k));
    for (r, &i) in basis.iter().enumerate() {
        for (c, &j) in basis.iter().enumerate() {
            block[[r, c]] = h.entries()[[i, j]];
        }
    }
    let (values, _) = block.eig()?;
    Ok(values.to_vec())
}

/// Pairs each closed-form eigenvalue with its nearest unused numeric one.
fn match_nearest(closed: &[C64], mut numeric: Vec<C64>) -> Vec<C64> {
    closed
        .iter()
        .map(|&c| {
            let j = numeric
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - c).norm().total_cmp(&(b.1 - c).norm()))
                .map(|(j, _)| j)
                .expect("projected block has as many eigenvalues as the closed form");
            numeric.swap_remove(j)
        })
        .collect()
}

fn inner_magnitude(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum::<C64>()
        .norm()
}

/// Unit vector along `v`, or the first basis vector if `v` vanishes.
fn unit_or_first(mut v: Vec<C64>) -> Vec<C64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-14 {
        v.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        v[0] = C64::new(1.0, 0.0);
    } else {
        let inv = C64::new(1.0 / norm, 0.0);
        v.iter_mut().for_each(|z| *z *= inv);
    }
    v
}

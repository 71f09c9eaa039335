//! Truncated Fock spaces and dense mode operators.
//!
//! A [`FockLayout`] fixes an ordered list of mode cutoffs; mode 0 varies
//! slowest in the flattened index, matching a left-to-right Kronecker
//! product.  Throughout the crate the photonic modes come first (clockwise,
//! then counterclockwise) with an optional mechanical mode last.
//!
//! Operators are dense complex matrices.  The largest layout this crate
//! solves is a few hundred states total, where sparse bookkeeping would cost
//! more than it saves.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::Error;
use crate::{Result, C64};

/// Ordered Fock-space cutoffs, one per mode.
///
/// `dims[k]` counts the retained number states of mode `k`, so occupations
/// run `0..dims[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockLayout {
    dims: Vec<usize>,
}

impl FockLayout {
    /// Validates cutoffs: at least one mode, each keeping vacuum plus one photon.
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidLayout("no modes".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidLayout(format!(
                "mode dimension {d} < 2 cannot hold vacuum and one photon"
            )));
        }
        Ok(FockLayout { dims: dims.to_vec() })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    /// Product of all cutoffs: the dimension of the joint space.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Flat index of a joint number state; mode 0 varies slowest.
    pub fn flat_index(&self, occupations: &[usize]) -> usize {
        debug_assert_eq!(occupations.len(), self.dims.len());
        occupations
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&n, &d)| {
                debug_assert!(n < d);
                acc * d + n
            })
    }

    /// Joint occupations encoded by a flat index.
    pub fn occupations(&self, mut flat: usize) -> Vec<usize> {
        let mut occ = vec![0; self.dims.len()];
        for (k, &d) in self.dims.iter().enumerate().rev() {
            occ[k] = flat % d;
            flat /= d;
        }
        occ
    }
}

/// Dense operator tied to a [`FockLayout`].
#[derive(Debug, Clone)]
pub struct Operator {
    layout: FockLayout,
    entries: Array2<C64>,
}

impl Operator {
    /// Wraps an explicit matrix; its size must match the layout.
    pub fn from_entries(layout: FockLayout, entries: Array2<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if entries.shape() != [d, d] {
            return Err(Error::LayoutMismatch(format!(
                "matrix is {:?}, layout wants [{d}, {d}]",
                entries.shape()
            )));
        }
        Ok(Operator { layout, entries })
    }

    pub fn zeros(layout: FockLayout) -> Self {
        let d = layout.total_dim();
        Operator { layout, entries: Array2::zeros((d, d)) }
    }

    pub fn identity(layout: FockLayout) -> Self {
        let d = layout.total_dim();
        Operator { layout, entries: Array2::eye(d) }
    }

    /// Annihilation operator of one mode, placed by Kronecker products:
    /// identities on every other mode, `a` on `mode`.
    pub fn destroy(layout: FockLayout, mode: usize) -> Result<Self> {
        if mode >= layout.n_modes() {
            return Err(Error::ModeOutOfRange { mode, n_modes: layout.n_modes() });
        }
        let mut entries = Array2::from_elem((1, 1), Complex64::new(1.0, 0.0));
        for (k, &d) in layout.dims.iter().enumerate() {
            let factor = if k == mode { destroy_single(d) } else { Array2::eye(d) };
            entries = kron(&entries, &factor);
        }
        Ok(Operator { layout, entries })
    }

    /// Creation operator of one mode.
    pub fn create(layout: FockLayout, mode: usize) -> Result<Self> {
        Ok(Self::destroy(layout, mode)?.adjoint())
    }

    /// Number operator of one mode.
    pub fn number(layout: FockLayout, mode: usize) -> Result<Self> {
        let a = Self::destroy(layout, mode)?;
        Ok(&a.adjoint() * &a)
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

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let entries = self.entries.t().mapv(|z| z.conj());
        Operator { layout: self.layout.clone(), entries }
    }

    pub fn scale(&self, z: C64) -> Self {
        Operator { layout: self.layout.clone(), entries: self.entries.mapv(|e| e * z) }
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    fn assert_same_layout(&self, other: &Self) {
        assert_eq!(
            self.layout, other.layout,
            "operators combined across different Fock layouts"
        );
    }
}

impl std::ops::Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.assert_same_layout(rhs);
        Operator { layout: self.layout.clone(), entries: &self.entries + &rhs.entries }
    }
}

impl std::ops::Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.assert_same_layout(rhs);
        Operator { layout: self.layout.clone(), entries: &self.entries - &rhs.entries }
    }
}

/// Operator product (matrix multiplication).
impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.assert_same_layout(rhs);
        Operator { layout: self.layout.clone(), entries: self.entries.dot(&rhs.entries) }
    }
}

/// Single-mode annihilation matrix: `a|n> = sqrt(n)|n-1>`.
pub(crate) fn destroy_single(dim: usize) -> Array2<C64> {
    let mut a = Array2::zeros((dim, dim));
    for n in 1..dim {
        a[[n - 1, n]] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Kronecker product with the left factor's indices varying slowest.
pub(crate) fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for ia in 0..ra {
        for ja in 0..ca {
            let f = a[[ia, ja]];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for ib in 0..rb {
                for jb in 0..cb {
                    out[[ia * rb + ib, ja * cb + jb]] = f * b[[ib, jb]];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn layout_rejects_degenerate_dims() {
        assert!(FockLayout::new(&[]).is_err());
        assert!(FockLayout::new(&[3, 1]).is_err());
        assert!(FockLayout::new(&[2, 2]).is_ok());
    }

    #[test]
    fn flat_index_roundtrips_with_mode_zero_slowest() {
        let layout = FockLayout::new(&[3, 4, 2]).unwrap();
        assert_eq!(layout.flat_index(&[0, 0, 0]), 0);
        assert_eq!(layout.flat_index(&[0, 0, 1]), 1);
        assert_eq!(layout.flat_index(&[0, 1, 0]), 2);
        assert_eq!(layout.flat_index(&[1, 0, 0]), 8);
        for flat in 0..layout.total_dim() {
            assert_eq!(layout.flat_index(&layout.occupations(flat)), flat);
        }
    }

    #[test]
    fn destroy_lowers_number_states() {
        let a = destroy_single(4);
        assert_eq!(a[[0, 1]], c(1.0));
        assert_eq!(a[[1, 2]], c(2.0_f64.sqrt()));
        assert_eq!(a[[2, 3]], c(3.0_f64.sqrt()));
        assert_eq!(a[[3, 3]], c(0.0));
    }

    #[test]
    fn mode_placement_matches_explicit_index_arithmetic() {
        // Two modes, three levels each: the mode-1 annihilator must act as
        // <n1', n2'| a2 |n1, n2> = sqrt(n2) delta(n1', n1) delta(n2', n2 - 1).
        let layout = FockLayout::new(&[3, 3]).unwrap();
        let a2 = Operator::destroy(layout.clone(), 1).unwrap();
        let mut expected = Array2::<C64>::zeros((9, 9));
        for n1 in 0..3 {
            for n2 in 1..3 {
                let row = layout.flat_index(&[n1, n2 - 1]);
                let col = layout.flat_index(&[n1, n2]);
                expected[[row, col]] = c((n2 as f64).sqrt());
            }
        }
        assert_eq!(a2.entries(), &expected);

        // Same check via the kron identity it should equal.
        let explicit = kron(&Array2::eye(3), &destroy_single(3));
        assert_eq!(a2.entries(), &explicit);
    }

    #[test]
    fn commutator_is_identity_below_the_cutoff() {
        // [a, a+] = 1 holds exactly on states that cannot reach the cutoff;
        // the top state absorbs the truncation error.
        let layout = FockLayout::new(&[5]).unwrap();
        let a = Operator::destroy(layout.clone(), 0).unwrap();
        let ad = a.adjoint();
        let comm = &(&a * &ad) - &(&ad * &a);
        for n in 0..4 {
            assert!((comm.entries()[[n, n]] - c(1.0)).norm() < 1e-14);
        }
        // Truncated corner: a a+ annihilates |4>, so the commutator holds -4.
        assert!((comm.entries()[[4, 4]] - c(-4.0)).norm() < 1e-14);
    }

    #[test]
    fn number_operator_is_diagonal_in_occupation() {
        let layout = FockLayout::new(&[3, 2]).unwrap();
        let n1 = Operator::number(layout.clone(), 0).unwrap();
        for flat in 0..layout.total_dim() {
            let occ = layout.occupations(flat);
            assert!((n1.entries()[[flat, flat]] - c(occ[0] as f64)).norm() < 1e-14);
        }
    }

    #[test]
    fn out_of_range_mode_is_reported() {
        let layout = FockLayout::new(&[3, 3]).unwrap();
        assert!(matches!(
            Operator::destroy(layout, 2),
            Err(Error::ModeOutOfRange { mode: 2, n_modes: 2 })
        ));
    }
}

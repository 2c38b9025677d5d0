//! Truncated spin-OAM Hilbert space: basis indexing, state vectors and
//! transfer operators.
//!
//! The canonical basis is polarization-major with the OAM order ascending:
//!
//! ```text
//! index(pol, l) = pol_index * (2 * l_max + 1) + (l + l_max)
//! ```
//!
//! so for `l_max = 1` the order is `(H,-1) (H,0) (H,1) (V,-1) (V,0) (V,1)`.
//! Golden files and CSV reports depend on this ordering.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default truncation bound; covers the widest measured mode range `[-10, 10]`.
pub const DEFAULT_L_MAX: u32 = 10;

/// Tolerance for algebraic identities (max-entry norm).
pub const ALGEBRA_TOL: f64 = 1e-12;

/// Tolerance for composed chains of operators (max-entry norm).
pub const CHAIN_TOL: f64 = 1e-10;

pub type Jones = Matrix2<Complex64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const ALL: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }

    pub fn orthogonal(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => write!(f, "H"),
            Polarization::V => write!(f, "V"),
        }
    }
}

/// An OAM order checked against a truncation bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex(i32);

impl ModeIndex {
    pub fn new(l: i32, l_max: u32) -> Result<Self> {
        if l.unsigned_abs() > l_max {
            return Err(Error::ModeOutOfRange { l, l_max });
        }
        Ok(ModeIndex(l))
    }

    pub fn get(self) -> i32 {
        self.0
    }
}

/// Number of OAM modes kept for a truncation bound.
pub fn mode_count(l_max: u32) -> usize {
    2 * l_max as usize + 1
}

/// Dimension of the hybrid space for a truncation bound.
pub fn hybrid_dim(l_max: u32) -> usize {
    2 * mode_count(l_max)
}

/// Canonical index of `(pol, l)`. The caller guarantees `|l| <= l_max`.
pub fn basis_index(l_max: u32, pol: Polarization, l: i32) -> usize {
    debug_assert!(l.unsigned_abs() <= l_max);
    pol.index() * mode_count(l_max) + (l + l_max as i32) as usize
}

/// All OAM orders of a truncation bound, ascending.
pub fn modes(l_max: u32) -> impl Iterator<Item = i32> {
    let l_max = l_max as i32;
    -l_max..=l_max
}

fn check_mode(l: i32, l_max: u32) -> Result<()> {
    ModeIndex::new(l, l_max).map(|_| ())
}

/// A pure spin-OAM state: complex amplitudes over `{H, V} x {-l_max..l_max}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridState {
    l_max: u32,
    amplitudes: DVector<Complex64>,
}

impl HybridState {
    pub fn zeros(l_max: u32) -> Self {
        HybridState {
            l_max,
            amplitudes: DVector::zeros(hybrid_dim(l_max)),
        }
    }

    /// Single basis vector `|pol>|l>`.
    pub fn basis(l_max: u32, pol: Polarization, l: i32) -> Result<Self> {
        check_mode(l, l_max)?;
        let mut s = Self::zeros(l_max);
        s.amplitudes[basis_index(l_max, pol, l)] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Builds a state from `(pol, l, amplitude)` entries. Repeated keys add up;
    /// the result is not normalized.
    pub fn from_entries(l_max: u32, entries: &[(Polarization, i32, Complex64)]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyEntries);
        }
        let mut s = Self::zeros(l_max);
        for &(pol, l, amp) in entries {
            check_mode(l, l_max)?;
            s.amplitudes[basis_index(l_max, pol, l)] += amp;
        }
        Ok(s)
    }

    /// Product state `(polarization) (x) (sum_l c_l |l>)`.
    pub fn product(l_max: u32, polarization: [Complex64; 2], oam: &[(i32, Complex64)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(2 * oam.len());
        for pol in Polarization::ALL {
            for &(l, c) in oam {
                entries.push((pol, l, polarization[pol.index()] * c));
            }
        }
        Self::from_entries(l_max, &entries)
    }

    pub fn from_vector(l_max: u32, amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.len() != hybrid_dim(l_max) {
            return Err(Error::DimensionMismatch {
                expected: hybrid_dim(l_max),
                found: amplitudes.len(),
            });
        }
        Ok(HybridState { l_max, amplitudes })
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn into_vector(self) -> DVector<Complex64> {
        self.amplitudes
    }

    pub fn amplitude(&self, pol: Polarization, l: i32) -> Complex64 {
        if l.unsigned_abs() > self.l_max {
            return Complex64::new(0.0, 0.0);
        }
        self.amplitudes[basis_index(self.l_max, pol, l)]
    }

    /// `(l, amplitude)` pairs of one polarization channel, ascending in `l`.
    pub fn oam_amplitudes(&self, pol: Polarization) -> Vec<(i32, Complex64)> {
        modes(self.l_max).map(|l| (l, self.amplitude(pol, l))).collect()
    }

    /// Polarization vector `(H, V)` carried by mode `l`.
    pub fn polarization_at(&self, l: i32) -> [Complex64; 2] {
        [self.amplitude(Polarization::H, l), self.amplitude(Polarization::V, l)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Intensity carried by one polarization channel.
    pub fn channel_intensity(&self, pol: Polarization) -> f64 {
        modes(self.l_max).map(|l| self.amplitude(pol, l).norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= ALGEBRA_TOL
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(HybridState {
            l_max: self.l_max,
            amplitudes: self.amplitudes.unscale(n),
        })
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &HybridState) -> Result<Complex64> {
        same_truncation(self.l_max, other.l_max)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn scale(&self, c: Complex64) -> HybridState {
        HybridState {
            l_max: self.l_max,
            amplitudes: &self.amplitudes * c,
        }
    }

    pub fn add(&self, other: &HybridState) -> Result<HybridState> {
        same_truncation(self.l_max, other.l_max)?;
        Ok(HybridState {
            l_max: self.l_max,
            amplitudes: &self.amplitudes + &other.amplitudes,
        })
    }

    /// Max-entry distance to another state of the same truncation.
    pub fn max_distance(&self, other: &HybridState) -> Result<f64> {
        same_truncation(self.l_max, other.l_max)?;
        Ok((&self.amplitudes - &other.amplitudes)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max))
    }

    /// Re-expresses the state under a wider bound. Never loses amplitude.
    pub fn embed(&self, l_max: u32) -> Result<HybridState> {
        if l_max < self.l_max {
            return self.truncate(l_max);
        }
        let mut out = HybridState::zeros(l_max);
        for pol in Polarization::ALL {
            for l in modes(self.l_max) {
                out.amplitudes[basis_index(l_max, pol, l)] = self.amplitude(pol, l);
            }
        }
        Ok(out)
    }

    /// Narrows the bound; fails if any dropped amplitude exceeds the
    /// algebra tolerance.
    pub fn truncate(&self, l_max: u32) -> Result<HybridState> {
        if l_max >= self.l_max {
            return self.embed(l_max);
        }
        let mut out = HybridState::zeros(l_max);
        for pol in Polarization::ALL {
            for l in modes(self.l_max) {
                let a = self.amplitude(pol, l);
                if l.unsigned_abs() > l_max {
                    if a.norm() > ALGEBRA_TOL {
                        return Err(Error::AmplitudeLoss { l, amplitude: a.norm() });
                    }
                } else {
                    out.amplitudes[basis_index(l_max, pol, l)] = a;
                }
            }
        }
        Ok(out)
    }
}

fn same_truncation(left: u32, right: u32) -> Result<()> {
    if left != right {
        return Err(Error::TruncationMismatch { left, right });
    }
    Ok(())
}

/// A linear map on the hybrid space: an element, a sub-circuit or a whole module.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferOperator {
    l_max: u32,
    matrix: DMatrix<Complex64>,
}

impl TransferOperator {
    pub fn identity(l_max: u32) -> Self {
        let d = hybrid_dim(l_max);
        TransferOperator {
            l_max,
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn zeros(l_max: u32) -> Self {
        let d = hybrid_dim(l_max);
        TransferOperator {
            l_max,
            matrix: DMatrix::zeros(d, d),
        }
    }

    pub fn from_matrix(l_max: u32, matrix: DMatrix<Complex64>) -> Result<Self> {
        let d = hybrid_dim(l_max);
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(TransferOperator { l_max, matrix })
    }

    /// Block-diagonal operator in `l`: mode `l` gets the 2x2 polarization
    /// matrix `block(l)`, OAM order is preserved.
    pub fn from_mode_blocks(l_max: u32, mut block: impl FnMut(i32) -> Jones) -> Self {
        let mut op = Self::zeros(l_max);
        for l in modes(l_max) {
            let b = block(l);
            for (r, pr) in Polarization::ALL.into_iter().enumerate() {
                for (c, pc) in Polarization::ALL.into_iter().enumerate() {
                    op.matrix[(basis_index(l_max, pr, l), basis_index(l_max, pc, l))] = b[(r, c)];
                }
            }
        }
        op
    }

    /// l-independent polarization-only operator `jones (x) I_oam`.
    pub fn from_polarization(l_max: u32, jones: Jones) -> Self {
        Self::from_mode_blocks(l_max, |_| jones)
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// The 2x2 polarization block of mode `l` (rows and columns `(H,l),(V,l)`).
    pub fn mode_block(&self, l: i32) -> Result<Jones> {
        check_mode(l, self.l_max)?;
        let h = basis_index(self.l_max, Polarization::H, l);
        let v = basis_index(self.l_max, Polarization::V, l);
        Ok(Jones::new(
            self.matrix[(h, h)],
            self.matrix[(h, v)],
            self.matrix[(v, h)],
            self.matrix[(v, v)],
        ))
    }

    /// Matrix restricted to the subspace `{H, V} x modes`, ordered
    /// polarization-major in the order `modes` is given.
    pub fn restrict(&self, modes: &[i32]) -> Result<DMatrix<Complex64>> {
        let mut idx = Vec::with_capacity(2 * modes.len());
        for pol in Polarization::ALL {
            for &l in modes {
                check_mode(l, self.l_max)?;
                idx.push(basis_index(self.l_max, pol, l));
            }
        }
        let n = idx.len();
        Ok(DMatrix::from_fn(n, n, |r, c| self.matrix[(idx[r], idx[c])]))
    }

    pub fn apply(&self, state: &HybridState) -> Result<HybridState> {
        same_truncation(self.l_max, state.l_max)?;
        Ok(HybridState {
            l_max: self.l_max,
            amplitudes: &self.matrix * &state.amplitudes,
        })
    }

    /// `next` acting after `self`.
    pub fn then(&self, next: &TransferOperator) -> Result<TransferOperator> {
        same_truncation(self.l_max, next.l_max)?;
        Ok(TransferOperator {
            l_max: self.l_max,
            matrix: &next.matrix * &self.matrix,
        })
    }

    pub fn add(&self, other: &TransferOperator) -> Result<TransferOperator> {
        same_truncation(self.l_max, other.l_max)?;
        Ok(TransferOperator {
            l_max: self.l_max,
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn scale(&self, c: Complex64) -> TransferOperator {
        TransferOperator {
            l_max: self.l_max,
            matrix: &self.matrix * c,
        }
    }

    pub fn adjoint(&self) -> TransferOperator {
        TransferOperator {
            l_max: self.l_max,
            matrix: self.matrix.adjoint(),
        }
    }

    /// `max |(U^dagger U - I)_ij|`.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim();
        let g = self.matrix.adjoint() * &self.matrix - DMatrix::<Complex64>::identity(d, d);
        g.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.matrix.clone().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Largest singular value (operator 2-norm).
    pub fn max_singular_value(&self) -> f64 {
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    pub fn max_distance(&self, other: &TransferOperator) -> Result<f64> {
        same_truncation(self.l_max, other.l_max)?;
        Ok((&self.matrix - &other.matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max))
    }
}

/// Composes operators in propagation order: the first element acts first.
/// An empty list composes to the identity of `l_max`.
pub fn compose(l_max: u32, ops: &[TransferOperator]) -> Result<TransferOperator> {
    let mut acc = TransferOperator::identity(l_max);
    for op in ops {
        acc = acc.then(op)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_vector_lands_on_canonical_index() {
        let s = HybridState::from_entries(1, &[(Polarization::H, 1, c(1.0, 0.0))]).unwrap();
        assert_eq!(s.amplitudes().len(), 6);
        assert_eq!(s.amplitudes()[2], c(1.0, 0.0));
        assert_eq!(s.norm_sqr(), 1.0);
        let v = HybridState::basis(1, Polarization::V, -1).unwrap();
        assert_eq!(v.amplitudes()[3], c(1.0, 0.0));
    }

    #[test]
    fn fig3_a2_input_before_normalization() {
        let one = c(1.0, 0.0);
        let s = HybridState::from_entries(
            2,
            &[
                (Polarization::H, 2, one),
                (Polarization::H, -2, one),
                (Polarization::V, 2, one),
                (Polarization::V, -2, one),
            ],
        )
        .unwrap();
        assert_eq!(s.norm_sqr(), 4.0);
        for (pol, l) in [(Polarization::H, 2), (Polarization::H, -2), (Polarization::V, 2), (Polarization::V, -2)] {
            assert_eq!(s.amplitude(pol, l), one);
        }
        assert_eq!(s.amplitude(Polarization::H, 0), c(0.0, 0.0));
    }

    #[test]
    fn out_of_range_and_empty_entries_are_rejected() {
        assert!(matches!(
            HybridState::from_entries(1, &[(Polarization::H, 2, c(1.0, 0.0))]),
            Err(Error::ModeOutOfRange { l: 2, l_max: 1 })
        ));
        assert!(matches!(HybridState::from_entries(1, &[]), Err(Error::EmptyEntries)));
        assert!(ModeIndex::new(-11, 10).is_err());
        assert_eq!(ModeIndex::new(-10, 10).unwrap().get(), -10);
    }

    #[test]
    fn repeated_keys_accumulate() {
        let s = HybridState::from_entries(
            1,
            &[(Polarization::V, 0, c(0.5, 0.0)), (Polarization::V, 0, c(0.0, 0.5))],
        )
        .unwrap();
        assert_eq!(s.amplitude(Polarization::V, 0), c(0.5, 0.5));
    }

    #[test]
    fn normalize_scales_by_positive_real() {
        let s = HybridState::from_entries(1, &[(Polarization::H, -1, c(2.0, 0.0))]).unwrap();
        let n = s.normalize().unwrap();
        assert_eq!(n.amplitude(Polarization::H, -1), c(1.0, 0.0));
        assert!(n.is_normalized());

        let one = c(1.0, 0.0);
        let fig3 = HybridState::product(1, [one, one], &[(1, one), (-1, one)]).unwrap();
        let n = fig3.normalize().unwrap();
        for pol in Polarization::ALL {
            for l in [1, -1] {
                assert!((n.amplitude(pol, l) - c(0.5, 0.0)).norm() < 1e-15);
            }
        }
        assert!(matches!(HybridState::zeros(2).normalize(), Err(Error::ZeroNorm)));
    }

    #[test]
    fn inner_products() {
        let h1 = HybridState::basis(1, Polarization::H, 1).unwrap();
        let v1 = HybridState::basis(1, Polarization::V, 1).unwrap();
        assert_eq!(h1.inner(&h1).unwrap(), c(1.0, 0.0));
        assert_eq!(h1.inner(&v1).unwrap(), c(0.0, 0.0));

        let one = c(1.0, 0.0);
        let plus = HybridState::from_entries(1, &[(Polarization::H, 1, one), (Polarization::H, -1, one)]).unwrap();
        let minus = HybridState::from_entries(1, &[(Polarization::H, 1, one), (Polarization::H, -1, -one)]).unwrap();
        assert_eq!(plus.inner(&minus).unwrap(), c(0.0, 0.0));

        let a = HybridState::from_entries(1, &[(Polarization::H, 0, c(0.0, 1.0))]).unwrap();
        let b = HybridState::from_entries(1, &[(Polarization::H, 0, c(1.0, 0.0))]).unwrap();
        // conjugate-linear in the first slot
        assert_eq!(a.inner(&b).unwrap(), c(0.0, -1.0));

        let wide = HybridState::basis(2, Polarization::H, 1).unwrap();
        assert!(matches!(h1.inner(&wide), Err(Error::TruncationMismatch { .. })));
    }

    #[test]
    fn identity_and_zero_operators() {
        let s = HybridState::from_entries(2, &[(Polarization::V, -2, c(0.3, -0.4)), (Polarization::H, 1, c(0.1, 0.0))])
            .unwrap();
        assert_eq!(TransferOperator::identity(2).apply(&s).unwrap(), s);
        assert_eq!(TransferOperator::zeros(2).apply(&s).unwrap(), HybridState::zeros(2));
        assert!(TransferOperator::identity(1).apply(&s).is_err());
    }

    #[test]
    fn compose_edge_cases() {
        let a = TransferOperator::from_polarization(1, Jones::new(c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)));
        let i = TransferOperator::identity(1);
        assert_eq!(compose(1, &[]).unwrap(), i);
        assert_eq!(compose(1, std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(compose(1, &[i.clone(), a.clone(), i]).unwrap(), a);
        assert!(compose(2, &[a]).is_err());
    }

    #[test]
    fn embed_and_truncate() {
        let s = HybridState::basis(1, Polarization::V, -1).unwrap();
        let wide = s.embed(3).unwrap();
        assert_eq!(wide.amplitude(Polarization::V, -1), c(1.0, 0.0));
        assert_eq!(wide.truncate(1).unwrap(), s);
        let far = HybridState::basis(3, Polarization::H, 3).unwrap();
        assert!(matches!(far.truncate(2), Err(Error::AmplitudeLoss { l: 3, .. })));
    }

    #[test]
    fn restrict_picks_requested_modes() {
        let op = TransferOperator::from_mode_blocks(2, |l| Jones::identity() * c(l as f64, 0.0));
        let r = op.restrict(&[0, 1, 2]).unwrap();
        assert_eq!(r.nrows(), 6);
        assert_eq!(r[(1, 1)], c(1.0, 0.0));
        assert_eq!(r[(5, 5)], c(2.0, 0.0));
        assert_eq!(r[(0, 3)], c(0.0, 0.0));
        assert!(op.restrict(&[3]).is_err());
    }
}

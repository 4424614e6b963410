//! Subspaces, their projectors, principal angles, and the isometry test.
//!
//! A projector is identified with its +1 eigenspace and stored as an
//! orthonormal basis. Two equal-rank subspaces are related by an isometry
//! when the overlap matrix `B_target† · B_source` has a flat singular-value
//! spectrum strictly inside (0, 1): every source direction then survives
//! the projection with the same probability `t²`, the subspaces share no
//! eigenvector, and they are not orthogonal.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    gaussian_vector, orthonormalize, svd, ComplexMatrix, RankMode, StateVector, TolerancePolicy,
    C64, ONE,
};

/// A `k`-dimensional subspace of `C^N` held as an `N × k` orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: ComplexMatrix,
}

impl Subspace {
    /// Wraps a basis after checking its columns are orthonormal.
    pub fn from_basis(basis: ComplexMatrix, policy: &TolerancePolicy) -> Result<Self> {
        if basis.cols() > basis.rows() {
            return Err(Error::DimensionMismatch {
                expected: basis.rows(),
                found: basis.cols(),
            });
        }
        let deviation = basis.orthonormality_error();
        if deviation > policy.tol_ortho {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self { basis })
    }

    /// Span of the given (not necessarily orthonormal) vectors, which must be
    /// linearly independent.
    pub fn span(vectors: &[StateVector], policy: &TolerancePolicy) -> Result<Self> {
        let basis = orthonormalize(vectors, policy, RankMode::Exact)?;
        Ok(Self { basis })
    }

    /// Span of raw amplitude vectors.
    pub fn span_of(vectors: Vec<Vec<C64>>, policy: &TolerancePolicy) -> Result<Self> {
        let states = vectors
            .into_iter()
            .map(StateVector::new)
            .collect::<Result<Vec<_>>>()?;
        Self::span(&states, policy)
    }

    /// Span of computational basis vectors `|i⟩` for `i` in `indices`.
    pub fn coordinate(ambient_dim: usize, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("index list"));
        }
        let mut basis = ComplexMatrix::zeros(ambient_dim, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            if i >= ambient_dim {
                return Err(Error::BadIndex {
                    index: i,
                    max: ambient_dim - 1,
                });
            }
            basis[(i, c)] = ONE;
        }
        Self::from_basis(basis, &TolerancePolicy::default())
    }

    /// Random `rank`-dimensional subspace drawn from the unitarily invariant
    /// measure.
    pub fn random<R: Rng + ?Sized>(ambient_dim: usize, rank: usize, rng: &mut R) -> Self {
        assert!(rank >= 1 && rank <= ambient_dim, "need 1 <= rank <= ambient_dim");
        let policy = TolerancePolicy::default();
        loop {
            let vectors: Vec<StateVector> = (0..rank)
                .map(|_| StateVector::new(gaussian_vector(ambient_dim, rng)).expect("finite"))
                .collect();
            if let Ok(s) = Self::span(&vectors, &policy) {
                return s;
            }
        }
    }

    #[inline]
    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    #[inline]
    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    /// Coordinates `B†ψ` of a vector in this subspace's basis.
    pub fn coordinates(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.basis.adjoint().apply(v)
    }

    /// Whether `other` spans the same subspace.
    pub fn same_span(&self, other: &Self, policy: &TolerancePolicy) -> bool {
        self.ambient_dim() == other.ambient_dim()
            && self.rank() == other.rank()
            && projector_matrix(self).max_abs_diff(&projector_matrix(other)) <= policy.tol_ortho
    }

    /// Squared norm of the component of `v` inside the subspace.
    pub fn weight(&self, v: &[C64]) -> Result<f64> {
        Ok(self.coordinates(v)?.iter().map(|z| z.norm_sqr()).sum())
    }
}

/// The orthogonal projector `P = B·B†`.
pub fn projector_matrix(s: &Subspace) -> ComplexMatrix {
    s.basis() * &s.basis().adjoint()
}

/// The orthogonal complement, whose projector is `I - P`.
pub fn complement(s: &Subspace) -> Result<Subspace> {
    let n = s.ambient_dim();
    if s.rank() == n {
        return Err(Error::FullSpace);
    }
    let residual = &ComplexMatrix::identity(n) - &projector_matrix(s);
    let columns: Vec<StateVector> = residual
        .columns()
        .into_iter()
        .map(StateVector::new)
        .collect::<Result<_>>()?;
    // The residual has exact rank N - k; keep the best-conditioned directions.
    let policy = TolerancePolicy {
        tol_ortho: 1e-6,
        ..TolerancePolicy::default()
    };
    let mut basis = orthonormalize(&columns, &policy, RankMode::Numerical)?;
    if basis.cols() != n - s.rank() {
        let decomposition = svd(&residual)?;
        basis = decomposition.left.block(n, n - s.rank());
    }
    Ok(Subspace { basis })
}

fn check_ambient(a: &Subspace, b: &Subspace) -> Result<()> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.ambient_dim(),
            found: b.ambient_dim(),
        });
    }
    Ok(())
}

/// Singular values of `basis_b† · basis_a`, i.e. the cosines of the
/// principal angles, in descending order and clamped to `[0, 1]`.
pub fn overlap_cosines(a: &Subspace, b: &Subspace) -> Result<Vec<f64>> {
    check_ambient(a, b)?;
    let overlap = &b.basis().adjoint() * a.basis();
    Ok(svd(&overlap)?
        .singular_values
        .into_iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect())
}

/// Principal angles between two subspaces, ascending, `min(k0, k1)` of them.
pub fn principal_angles(s0: &Subspace, s1: &Subspace) -> Result<Vec<f64>> {
    Ok(overlap_cosines(s0, s1)?.into_iter().map(f64::acos).collect())
}

/// Why a pair failed the isometry test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IsometryFailure {
    RankMismatch,
    /// Source and target coincide; the projection does nothing.
    TrivialIdentity,
    /// Ambient space smaller than twice the rank, forcing a shared direction.
    AmbientTooSmall,
    SharedDirections,
    OrthogonalDirections,
    NonFlatSpectrum,
}

impl IsometryFailure {
    pub fn reason(&self) -> &'static str {
        match self {
            Self::RankMismatch => "rank mismatch",
            Self::TrivialIdentity => "trivial_identity",
            Self::AmbientTooSmall => "ambient < 2k",
            Self::SharedDirections => "shared eigenvectors",
            Self::OrthogonalDirections => "orthogonal directions",
            Self::NonFlatSpectrum => "non-flat overlap spectrum",
        }
    }
}

/// Verdict and diagnostics for whether projecting onto `target` acts as a
/// scaled isometry on `source`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsometryReport {
    pub is_isometry: bool,
    /// Common overlap singular value `t`; the mean when the spectrum is not flat.
    pub scale: f64,
    pub principal_angles: Vec<f64>,
    /// Cosines of the principal angles, descending.
    pub cosines: Vec<f64>,
    pub shared_dim: usize,
    pub required_min_ambient: usize,
    pub trivial_identity: bool,
    pub failure: Option<IsometryFailure>,
}

impl IsometryReport {
    /// Transition probability `t²` for any source state, if the pair is an isometry.
    pub fn transition_probability(&self) -> Option<f64> {
        self.is_isometry.then_some(self.scale * self.scale)
    }

    pub fn reason(&self) -> &'static str {
        self.failure.map_or("isometry", |f| f.reason())
    }
}

/// Decides whether `target` induces an isometry on `source`.
pub fn isometry_report(
    source: &Subspace,
    target: &Subspace,
    policy: &TolerancePolicy,
) -> Result<IsometryReport> {
    check_ambient(source, target)?;
    let k = source.rank();
    let cosines = overlap_cosines(source, target)?;
    let mut angles: Vec<f64> = cosines.iter().map(|&c| c.acos()).collect();
    angles.sort_by(f64::total_cmp);
    let tol = policy.tol_flat;
    let shared_dim = cosines.iter().filter(|&&c| c >= 1.0 - tol).count();
    let orthogonal = cosines.iter().any(|&c| c <= tol);
    let spread = cosines.first().unwrap_or(&0.0) - cosines.last().unwrap_or(&0.0);
    let scale = cosines.iter().sum::<f64>() / cosines.len().max(1) as f64;

    let trivial_identity = source.rank() == target.rank() && shared_dim == k;
    let failure = if source.rank() != target.rank() {
        Some(IsometryFailure::RankMismatch)
    } else if trivial_identity {
        Some(IsometryFailure::TrivialIdentity)
    } else if shared_dim > 0 && source.ambient_dim() < 2 * k {
        Some(IsometryFailure::AmbientTooSmall)
    } else if shared_dim > 0 {
        Some(IsometryFailure::SharedDirections)
    } else if orthogonal {
        Some(IsometryFailure::OrthogonalDirections)
    } else if spread > tol {
        Some(IsometryFailure::NonFlatSpectrum)
    } else {
        None
    };

    Ok(IsometryReport {
        is_isometry: failure.is_none(),
        scale,
        principal_angles: angles,
        cosines,
        shared_dim,
        required_min_ambient: 2 * k,
        trivial_identity,
        failure,
    })
}

/// `⟨ψ|P|ψ⟩` for the projector onto `s`.
pub fn transition_probability(state: &StateVector, s: &Subspace) -> Result<f64> {
    if state.dim() != s.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: s.ambient_dim(),
            found: state.dim(),
        });
    }
    s.weight(state.amplitudes())
}

/// A random normalized state lying inside `s`.
pub fn random_state_in<R: Rng + ?Sized>(s: &Subspace, rng: &mut R) -> StateVector {
    let coords = crate::numerics::random_state(s.rank(), rng);
    StateVector::new(s.basis().apply(coords.amplitudes()).expect("rank-sized coordinates"))
        .expect("finite")
}

/// Builds `span{cos θ_j |m_j⟩ + e^{iχ_j} sin θ_j |n_j⟩}` where `m` are the
/// columns of `source_basis` and `n` the columns of `escape_basis`, which
/// must be orthogonal to the source.
pub fn rotated_subspace(
    source_basis: &ComplexMatrix,
    escape_basis: &ComplexMatrix,
    angles: &[f64],
    phases: &[f64],
    policy: &TolerancePolicy,
) -> Result<Subspace> {
    let k = source_basis.cols();
    if escape_basis.cols() < k || angles.len() != k || phases.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: escape_basis.cols().min(angles.len()).min(phases.len()),
        });
    }
    let n = source_basis.rows();
    let mut basis = ComplexMatrix::zeros(n, k);
    for j in 0..k {
        let (s, c) = angles[j].sin_cos();
        let p = crate::numerics::phase(phases[j]);
        for r in 0..n {
            basis[(r, j)] = source_basis[(r, j)] * c + escape_basis[(r, j)] * p * s;
        }
    }
    Subspace::from_basis(basis, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{phase, ZERO};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    /// `span{cos θ|0⟩ + e^{iφ} sin θ|2⟩, cos θ|1⟩ + e^{iφ'} sin θ|3⟩}`.
    fn qubit_pi1(theta: f64, phi: f64, phi_prime: f64) -> Subspace {
        let (s, c) = theta.sin_cos();
        let p = TolerancePolicy::default();
        Subspace::span_of(
            vec![
                vec![re(c), ZERO, phase(phi) * s, ZERO],
                vec![ZERO, re(c), ZERO, phase(phi_prime) * s],
            ],
            &p,
        )
        .unwrap()
    }

    #[test]
    fn projector_examples() {
        let p = TolerancePolicy::default();
        let e0 = Subspace::coordinate(2, &[0]).unwrap();
        let expected = ComplexMatrix::from_diagonal(&[ONE, ZERO]);
        assert!(projector_matrix(&e0).max_abs_diff(&expected) < 1e-15);

        let plus = Subspace::span_of(vec![vec![re(FRAC_1_SQRT_2), re(FRAC_1_SQRT_2)]], &p).unwrap();
        let half = ComplexMatrix::from_row_major(2, 2, vec![re(0.5); 4]).unwrap();
        assert!(projector_matrix(&plus).max_abs_diff(&half) < 1e-15);

        let s = Subspace::coordinate(4, &[0, 1]).unwrap();
        let expected = ComplexMatrix::from_diagonal(&[ONE, ONE, ZERO, ZERO]);
        let proj = projector_matrix(&s);
        assert!(proj.max_abs_diff(&expected) < 1e-15);
        assert!((proj.trace() - re(2.0)).norm() < 1e-15);
    }

    #[test]
    fn complement_examples() {
        let p = TolerancePolicy::default();
        let e0 = Subspace::coordinate(2, &[0]).unwrap();
        let e1 = Subspace::coordinate(2, &[1]).unwrap();
        assert!(complement(&e0).unwrap().same_span(&e1, &p));

        let theta = 0.7;
        let pi1 = qubit_pi1(theta, 0.0, 0.0);
        let (s, c) = theta.sin_cos();
        let expected = Subspace::span_of(
            vec![
                vec![re(s), ZERO, re(-c), ZERO],
                vec![ZERO, re(s), ZERO, re(-c)],
            ],
            &p,
        )
        .unwrap();
        let comp = complement(&pi1).unwrap();
        assert_eq!(comp.rank(), 2);
        assert!(comp.same_span(&expected, &p));
        assert!(complement(&comp).unwrap().same_span(&pi1, &p));
    }

    #[test]
    fn complement_of_full_space_fails() {
        let s = Subspace::coordinate(3, &[0, 1, 2]).unwrap();
        assert_eq!(complement(&s), Err(Error::FullSpace));
    }

    #[test]
    fn principal_angle_examples() {
        let p = TolerancePolicy::default();
        let s = Subspace::coordinate(4, &[0, 1]).unwrap();
        for a in principal_angles(&s, &s).unwrap() {
            assert!(a.abs() < 1e-7);
        }
        let angles = principal_angles(&s, &qubit_pi1(FRAC_PI_3, 0.3, 1.1)).unwrap();
        for a in angles {
            assert!((a - FRAC_PI_3).abs() < 1e-12);
        }

        let s3 = Subspace::coordinate(3, &[0, 1]).unwrap();
        let t3 = Subspace::span_of(
            vec![
                vec![ONE, ZERO, ZERO],
                vec![ZERO, re(FRAC_1_SQRT_2), re(FRAC_1_SQRT_2)],
            ],
            &p,
        )
        .unwrap();
        let angles = principal_angles(&s3, &t3).unwrap();
        assert!(angles[0].abs() < 1e-7);
        assert!((angles[1] - FRAC_PI_4).abs() < 1e-12);

        let other = Subspace::coordinate(3, &[0]).unwrap();
        assert!(principal_angles(&s, &other).is_err());
    }

    #[test]
    fn isometry_examples() {
        let p = TolerancePolicy::default();
        let s = Subspace::coordinate(4, &[0, 1]).unwrap();
        let r = isometry_report(&s, &qubit_pi1(FRAC_PI_4, 0.4, -2.0), &p).unwrap();
        assert!(r.is_isometry);
        assert!((r.scale - FRAC_PI_4.cos()).abs() < 1e-12);
        assert_eq!(r.required_min_ambient, 4);
        for a in &r.principal_angles {
            assert!((a - FRAC_PI_4).abs() < 1e-12);
        }

        let s3 = Subspace::coordinate(3, &[0, 1]).unwrap();
        let t3 = Subspace::span_of(
            vec![
                vec![ONE, ZERO, ZERO],
                vec![ZERO, re(FRAC_1_SQRT_2), re(FRAC_1_SQRT_2)],
            ],
            &p,
        )
        .unwrap();
        let r = isometry_report(&s3, &t3, &p).unwrap();
        assert!(!r.is_isometry);
        assert_eq!(r.shared_dim, 1);
        assert_eq!(r.reason(), "ambient < 2k");

        let r = isometry_report(&s, &s, &p).unwrap();
        assert!(!r.is_isometry);
        assert!(r.trivial_identity);
        assert_eq!(r.failure, Some(IsometryFailure::TrivialIdentity));
    }

    #[test]
    fn isometry_rejects_orthogonal_and_unequal_rank() {
        let p = TolerancePolicy::default();
        let s = Subspace::coordinate(4, &[0, 1]).unwrap();
        let c = Subspace::coordinate(4, &[2, 3]).unwrap();
        let r = isometry_report(&s, &c, &p).unwrap();
        assert_eq!(r.failure, Some(IsometryFailure::OrthogonalDirections));

        let one = Subspace::coordinate(4, &[0]).unwrap();
        let r = isometry_report(&s, &one, &p).unwrap();
        assert!(!r.is_isometry);
        assert_eq!(r.failure, Some(IsometryFailure::RankMismatch));
    }

    #[test]
    fn isometry_rejects_non_flat_spectrum() {
        let p = TolerancePolicy::default();
        let s = Subspace::coordinate(4, &[0, 1]).unwrap();
        let escape = Subspace::coordinate(4, &[2, 3]).unwrap();
        let t = rotated_subspace(s.basis(), escape.basis(), &[0.3, 0.9], &[0.0, 0.0], &p).unwrap();
        let r = isometry_report(&s, &t, &p).unwrap();
        assert_eq!(r.failure, Some(IsometryFailure::NonFlatSpectrum));
    }

    #[test]
    fn complement_of_isometric_target_is_isometric() {
        let p = TolerancePolicy::default();
        let s = Subspace::coordinate(4, &[0, 1]).unwrap();
        for theta in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
            let pi1 = qubit_pi1(theta, 0.2, 0.9);
            let r1 = isometry_report(&s, &pi1, &p).unwrap();
            let r2 = isometry_report(&s, &complement(&pi1).unwrap(), &p).unwrap();
            assert!(r1.is_isometry && r2.is_isometry);
            assert!((r1.scale.powi(2) + r2.scale.powi(2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_subspace_projector_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = TolerancePolicy::default();
        for _ in 0..200 {
            let n = rng.random_range(1..=8);
            let k = rng.random_range(1..=n);
            let s = Subspace::random(n, k, &mut rng);
            let proj = projector_matrix(&s);
            assert!((&proj * &proj).max_abs_diff(&proj) < p.tol_ortho);
            assert!(proj.adjoint().max_abs_diff(&proj) < p.tol_ortho);
            if k < n {
                let comp = projector_matrix(&complement(&s).unwrap());
                let sum = &proj + &comp;
                assert!(sum.max_abs_diff(&ComplexMatrix::identity(n)) < p.tol_ortho);
                let psi = crate::numerics::random_state(n, &mut rng);
                let total = transition_probability(&psi, &s).unwrap()
                    + transition_probability(&psi, &complement(&s).unwrap()).unwrap();
                assert!((total - 1.0).abs() < p.tol_norm);
            }
        }
    }
}

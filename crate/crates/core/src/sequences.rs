//! Conditional dynamics under sequences of degenerate projections and the
//! single-ancilla geometric-phase construction.
//!
//! Steps are stored in temporal order: `steps[0]` is measured first and the
//! cumulative operator is `Γ = Π_n ··· Π_1 Π_0`.
//!
//! The phase loop for component `m` works in the two-level block spanned by
//! `|ψ_m⟩` and the auxiliary level `|ψ_a⟩`, leaving every other logical
//! direction projected onto itself. Viewed on the Bloch sphere of that
//! block the loop runs from the pole `|ψ_m⟩` down the meridian at longitude
//! `φ` to `|ψ_a⟩` and back up the meridian at longitude 0. The lune it
//! encloses has solid angle `2φ`, so the loop amplitude is
//! `t = cos(π/4n)^{4n} · e^{iφ}` when each quarter arc is cut into `n`
//! geodesic steps.

use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::numerics::{
    phase, ComplexMatrix, StateVector, TolerancePolicy, C64, ONE, ZERO,
};
use crate::subspaces::{projector_matrix, Subspace};

/// An ordered list of subspaces in a common ambient space.
#[derive(Debug, Clone)]
pub struct ProjectionSequence {
    steps: Vec<Subspace>,
    cyclic: bool,
}

impl ProjectionSequence {
    pub fn new(steps: Vec<Subspace>, policy: &TolerancePolicy) -> Result<Self> {
        let first = steps.first().ok_or(Error::Empty("projection sequence"))?;
        let dim = first.ambient_dim();
        if let Some(s) = steps.iter().find(|s| s.ambient_dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.ambient_dim(),
            });
        }
        let cyclic = steps.len() > 1 && first.same_span(steps.last().expect("nonempty"), policy);
        Ok(Self { steps, cyclic })
    }

    pub fn ambient_dim(&self) -> usize {
        self.steps[0].ambient_dim()
    }

    pub fn steps(&self) -> &[Subspace] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// First and last subspaces coincide.
    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    /// `other` runs after `self`. A shared boundary subspace is kept once,
    /// which leaves the cumulative operator unchanged since `Π² = Π`.
    pub fn then(&self, other: &Self, policy: &TolerancePolicy) -> Result<Self> {
        let mut steps = self.steps.clone();
        let skip = usize::from(
            self.steps
                .last()
                .zip(other.steps.first())
                .is_some_and(|(a, b)| a.same_span(b, policy)),
        );
        steps.extend(other.steps.iter().skip(skip).cloned());
        Self::new(steps, policy)
    }
}

/// Projects `state` onto `s` and renormalizes.
///
/// Returns the conditional state and the outcome probability `⟨ψ|P|ψ⟩`.
pub fn apply_projection(
    state: &StateVector,
    s: &Subspace,
    policy: &TolerancePolicy,
) -> Result<(StateVector, f64)> {
    if state.dim() != s.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: s.ambient_dim(),
            found: state.dim(),
        });
    }
    state.require_normalized(policy)?;
    let coords = s.coordinates(state.amplitudes())?;
    let probability: f64 = coords.iter().map(|z| z.norm_sqr()).sum();
    if probability < policy.tol_norm * policy.tol_norm {
        return Err(Error::OrthogonalOutcome { probability });
    }
    let projected = s.basis().apply(&coords)?;
    let conditional = StateVector::normalized(projected)?;
    Ok((conditional, probability.min(1.0)))
}

/// `Γ = Π_n ··· Π_0`.
pub fn cumulative_operator(seq: &ProjectionSequence) -> ComplexMatrix {
    let mut steps = seq.steps().iter();
    let first = steps.next().expect("sequences are nonempty");
    steps.fold(projector_matrix(first), |acc, s| &projector_matrix(s) * &acc)
}

/// `p_f = ⟨ψ|Γ†Γ|ψ⟩`.
pub fn survival_probability(
    gamma: &ComplexMatrix,
    state: &StateVector,
    policy: &TolerancePolicy,
) -> Result<f64> {
    if gamma.cols() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: gamma.cols(),
            found: state.dim(),
        });
    }
    state.require_normalized(policy)?;
    let out = gamma.apply(state.amplitudes())?;
    Ok(out.iter().map(|z| z.norm_sqr()).sum())
}

/// One geometric-phase loop on logical component `m` (1-based) of a
/// `k`-dimensional subspace with a single auxiliary level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLoopSpec {
    pub k: usize,
    pub m: usize,
    pub phi: f64,
    /// Geodesic steps per quarter arc; the loop has `4 · refinement` steps.
    pub refinement: usize,
}

impl PhaseLoopSpec {
    pub fn new(k: usize, m: usize, phi: f64, refinement: usize) -> Result<Self> {
        let spec = Self {
            k,
            m,
            phi,
            refinement,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Empty("logical subspace"));
        }
        if self.m == 0 || self.m > self.k {
            return Err(Error::BadIndex {
                index: self.m,
                max: self.k,
            });
        }
        if self.refinement == 0 {
            return Err(Error::Empty("refinement"));
        }
        if !self.phi.is_finite() {
            return Err(Error::NonFinite("phase"));
        }
        Ok(())
    }

    /// `k + 1`: the logical levels plus one auxiliary level.
    pub fn ambient_dim(&self) -> usize {
        self.k + 1
    }

    pub fn loop_len(&self) -> usize {
        4 * self.refinement
    }

    /// Index of the auxiliary level `|ψ_a⟩`.
    pub fn ancilla(&self) -> usize {
        self.k
    }
}

/// Bloch coordinates `(α, χ)` of the `l`-th loop state
/// `cos α |ψ_m⟩ + e^{iχ} sin α |ψ_a⟩`.
fn loop_point(spec: &PhaseLoopSpec, l: usize) -> (f64, f64) {
    let n = spec.refinement;
    let step = FRAC_PI_4 / n as f64;
    if l <= 2 * n {
        (l as f64 * step, spec.phi)
    } else {
        ((4 * n - l) as f64 * step, 0.0)
    }
}

/// The moving two-level states `|ψ_m^l⟩` in temporal order, `l = 0 … 4n`,
/// embedded in the `k + 1` dimensional space.
pub fn loop_states(spec: &PhaseLoopSpec) -> Result<Vec<StateVector>> {
    spec.validate()?;
    let dim = spec.ambient_dim();
    (0..=spec.loop_len())
        .map(|l| {
            let (alpha, chi) = loop_point(spec, l);
            let mut amps = vec![ZERO; dim];
            // Exact poles keep the endpoint states free of rounding.
            let (s, c) = match l {
                0 => (0.0, 1.0),
                _ if l == 2 * spec.refinement => (1.0, 0.0),
                _ if l == spec.loop_len() => (0.0, 1.0),
                _ => alpha.sin_cos(),
            };
            amps[spec.m - 1] = C64::new(c, 0.0);
            amps[spec.ancilla()] = phase(chi) * s;
            StateVector::new(amps)
        })
        .collect()
}

/// Builds the cyclic projection sequence that imprints `e^{iφ}` on
/// component `m`.
///
/// Each step projects onto `Σ_{j≠m} |ψ_j⟩⟨ψ_j| + |ψ_m^l⟩⟨ψ_m^l|`.
pub fn build_phase_loop(
    spec: &PhaseLoopSpec,
    policy: &TolerancePolicy,
) -> Result<ProjectionSequence> {
    let states = loop_states(spec)?;
    let dim = spec.ambient_dim();
    let steps = states
        .iter()
        .map(|moving| {
            let mut basis = ComplexMatrix::zeros(dim, spec.k);
            for j in 0..spec.k {
                if j == spec.m - 1 {
                    for (r, &z) in moving.amplitudes().iter().enumerate() {
                        basis[(r, j)] = z;
                    }
                } else {
                    basis[(j, j)] = ONE;
                }
            }
            Subspace::from_basis(basis, policy)
        })
        .collect::<Result<Vec<_>>>()?;
    ProjectionSequence::new(steps, policy)
}

/// Cyclic product of overlaps `⟨ψ⁰|ψ^N⟩⟨ψ^N|ψ^{N-1}⟩ ··· ⟨ψ¹|ψ⁰⟩` for a loop
/// given in temporal order with `ψ^N` equal to `ψ⁰` up to phase.
///
/// Equals `tr(P_N ··· P_1 P_0)` for the rank-one projectors of the loop.
pub fn bargmann_invariant(states: &[StateVector], policy: &TolerancePolicy) -> Result<C64> {
    if states.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "a loop needs at least 3 states, got {}",
            states.len()
        )));
    }
    for s in states {
        s.require_normalized(policy)?;
    }
    let n = states.len() - 1;
    let closure = states[0].inner(&states[n])?;
    if (closure.norm() - 1.0).abs() > policy.tol_ortho.sqrt() {
        return Err(Error::DegeneratePolygon(
            "first and last states differ".to_string(),
        ));
    }
    let mut product = closure;
    for l in 0..n {
        let overlap = states[l + 1].inner(&states[l])?;
        if overlap.norm() < policy.tol_norm {
            return Err(Error::DegenerateLoop {
                index: l,
                next: l + 1,
            });
        }
        product *= overlap;
    }
    Ok(product)
}

/// Bloch vector of the two-level state `a|0⟩ + b|1⟩`.
pub fn bloch_vector(a: C64, b: C64) -> [f64; 3] {
    let n = a.norm_sqr() + b.norm_sqr();
    let ab = a.conj() * b;
    [2.0 * ab.re / n, 2.0 * ab.im / n, (a.norm_sqr() - b.norm_sqr()) / n]
}

/// A two-level state `(cos(θ/2), e^{iφ} sin(θ/2))` with the given Bloch vector.
pub fn state_from_bloch(v: [f64; 3]) -> StateVector {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
    let azimuth = v[1].atan2(v[0]);
    let (s, c) = (theta / 2.0).sin_cos();
    StateVector::new(vec![C64::new(c, 0.0), phase(azimuth) * s]).expect("finite")
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Signed solid angle of the geodesic triangle `a → b → c`, positive when
/// the circuit turns right-handed about the outward normal.
fn triangle_solid_angle(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let numerator = dot(a, &cross(b, c));
    let denominator = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    2.0 * numerator.atan2(denominator)
}

/// Signed solid angle enclosed by a closed geodesic polygon on the unit
/// sphere.
///
/// The sign is positive for circuits that run clockwise when viewed from
/// outside the sphere. With that orientation the Bargmann invariant of
/// the corresponding state loop has argument `Ω/2`. The result is defined
/// modulo `4π`. A repeated closing vertex is accepted and ignored.
pub fn solid_angle(loop_points: &[[f64; 3]]) -> Result<f64> {
    let mut vertices: Vec<[f64; 3]> = loop_points.to_vec();
    for v in &vertices {
        let r = dot(v, v).sqrt();
        if !r.is_finite() || (r - 1.0).abs() > 1e-9 {
            return Err(Error::DegeneratePolygon(format!(
                "vertex {v:?} is not on the unit sphere"
            )));
        }
    }
    if vertices.len() > 1 {
        let (first, last) = (vertices[0], vertices[vertices.len() - 1]);
        if dot(&first, &last) > 1.0 - 1e-12 {
            vertices.pop();
        }
    }
    if vertices.len() < 2 {
        return Err(Error::DegeneratePolygon(
            "need at least two distinct vertices".to_string(),
        ));
    }
    let count = vertices.len();
    for i in 0..count {
        let (a, b) = (&vertices[i], &vertices[(i + 1) % count]);
        if dot(a, b) < -1.0 + 1e-12 {
            return Err(Error::DegeneratePolygon(format!(
                "vertices {i} and {} are antipodal",
                (i + 1) % count
            )));
        }
    }

    // Fan from an apex kept well away from every vertex's antipode.
    let candidates = [
        [0.267_261_241_912_424_4, 0.534_522_483_824_848_8, 0.801_783_725_737_273_2],
        [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8, 0.577_350_269_189_625_8],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, -1.0],
    ];
    let apex = candidates
        .iter()
        .max_by(|p, q| {
            let clearance = |x: &[f64; 3]| {
                vertices
                    .iter()
                    .map(|v| 1.0 + dot(x, v))
                    .fold(f64::INFINITY, f64::min)
            };
            clearance(p).total_cmp(&clearance(q))
        })
        .expect("nonempty candidates");

    let right_handed: f64 = (0..count)
        .map(|i| triangle_solid_angle(apex, &vertices[i], &vertices[(i + 1) % count]))
        .sum();
    Ok(-right_handed)
}

/// Diagonal Kraus filter in the logical basis that equalizes loop
/// amplitudes to the smallest magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOperator {
    diagonal: Vec<C64>,
}

impl FilterOperator {
    pub fn diagonal(&self) -> &[C64] {
        &self.diagonal
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.diagonal.iter().all(|d| (d - ONE).norm() <= tol)
    }

    /// Filtered amplitudes `d_m t_m`.
    pub fn apply(&self, t_values: &[C64]) -> Result<Vec<C64>> {
        if t_values.len() != self.diagonal.len() {
            return Err(Error::DimensionMismatch {
                expected: self.diagonal.len(),
                found: t_values.len(),
            });
        }
        Ok(self.diagonal.iter().zip(t_values).map(|(d, t)| d * t).collect())
    }

    /// The filter as an operator on the full space; auxiliary levels are
    /// annihilated.
    pub fn matrix(&self, ambient_dim: usize) -> ComplexMatrix {
        let mut diag = self.diagonal.clone();
        diag.resize(ambient_dim.max(diag.len()), ZERO);
        ComplexMatrix::from_diagonal(&diag)
    }
}

/// `d_m = min|t| / |t_m|`.
pub fn equalization_filter(t_values: &[C64]) -> Result<FilterOperator> {
    if t_values.is_empty() {
        return Err(Error::Empty("amplitude list"));
    }
    if let Some(index) = t_values.iter().position(|t| t.norm() == 0.0 || !t.norm().is_finite()) {
        return Err(Error::ZeroAmplitude { index });
    }
    let floor = t_values.iter().map(|t| t.norm()).fold(f64::INFINITY, f64::min);
    Ok(FilterOperator {
        diagonal: t_values
            .iter()
            .map(|t| C64::new((floor / t.norm()).min(1.0), 0.0))
            .collect(),
    })
}

/// Concatenates phase loops that share the same logical dimension.
pub fn compose_loops(specs: &[PhaseLoopSpec], policy: &TolerancePolicy) -> Result<ProjectionSequence> {
    let first = specs.first().ok_or(Error::Empty("loop list"))?;
    let mut seq = build_phase_loop(first, policy)?;
    for spec in &specs[1..] {
        if spec.k != first.k {
            return Err(Error::DimensionMismatch {
                expected: first.k,
                found: spec.k,
            });
        }
        seq = seq.then(&build_phase_loop(spec, policy)?, policy)?;
    }
    Ok(seq)
}

/// Diagonal of the logical `k × k` block of `gamma`.
pub fn logical_amplitudes(gamma: &ComplexMatrix, k: usize) -> Vec<C64> {
    (0..k).map(|i| gamma[(i, i)]).collect()
}

/// Runs one loop per logical component so that `Γ` restricted to the
/// logical subspace is `t · diag(e^{iφ_m})`.
///
/// Returns `Γ` on the full `k + 1` dimensional space and the common
/// magnitude `t` measured from it.
pub fn compose_diag_unitary(
    phases: &[f64],
    refinement: usize,
    policy: &TolerancePolicy,
) -> Result<(ComplexMatrix, f64)> {
    let k = phases.len();
    let specs = phases
        .iter()
        .enumerate()
        .map(|(i, &phi)| PhaseLoopSpec::new(k, i + 1, phi, refinement))
        .collect::<Result<Vec<_>>>()?;
    let gamma = cumulative_operator(&compose_loops(&specs, policy)?);
    let t = logical_amplitudes(&gamma, k);
    let scale = t.iter().map(|z| z.norm()).sum::<f64>() / k as f64;
    Ok((gamma, scale))
}

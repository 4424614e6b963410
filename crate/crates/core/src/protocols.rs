//! Repeat-until-success measurement graphs.
//!
//! Every node of a graph is a subspace that holds the logical information,
//! and every node carries a two-outcome measurement `{P, I - P}` whose two
//! branches each map the node's subspace isometrically onto a successor.
//! Because each branch is an isometry its probability does not depend on
//! the state, so the walk through the graph is a Markov chain on nodes and
//! the logical state picks up a unitary when it comes back to the start.
//!
//! The standard graph (`build_general_rus_graph`) on `k` logical levels
//! `|j⟩` and `k` auxiliary levels `|j̄⟩` has six nodes:
//!
//! ```text
//!   S  = span{|j⟩}                      start
//!   A± = span{|j⟩ ± |j̄⟩}                after measurement 1
//!   C  = span{|j̄⟩}                      checkpoint
//!   B± = span{e^{iφ_j}|j⟩ ± |j̄⟩}        after measurement 3
//! ```
//!
//! with `S → A±`, `A± → S (retry) | C`, `C → B±`, `B± → C (retry) | S (done)`,
//! every branch taken with probability ½.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{phase, ComplexMatrix, StateVector, TolerancePolicy, C64, ZERO};
use crate::sequences::apply_projection;
use crate::subspaces::{isometry_report, overlap_cosines, projector_matrix, IsometryReport, Subspace};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    /// The initial subspace, which is also the goal.
    Start,
    Intermediate,
    Checkpoint,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub label: String,
    pub role: NodeRole,
    pub subspace: Subspace,
}

/// One outcome of a node's measurement.
#[derive(Debug, Clone)]
pub struct Branch {
    pub target: Subspace,
    pub successor: NodeId,
    /// Taking this branch finishes a traversal.
    pub completes: bool,
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub branches: [Branch; 2],
}

/// Directed graph of subspaces joined by two-outcome measurements.
#[derive(Debug, Clone)]
pub struct MeasurementGraph {
    ambient_dim: usize,
    nodes: Vec<Node>,
    measurements: Vec<Option<Measurement>>,
    start: NodeId,
    target: Option<ComplexMatrix>,
}

impl MeasurementGraph {
    /// Checks the structural invariants: consistent dimensions, branch
    /// targets equal to their successor's subspace, outcome probabilities
    /// summing to one on every node, and at least one completing branch.
    ///
    /// Stepwise isometry is checked separately by [`Self::edge_reports`].
    pub fn new(
        nodes: Vec<Node>,
        measurements: Vec<Option<Measurement>>,
        start: NodeId,
        target: Option<ComplexMatrix>,
        policy: &TolerancePolicy,
    ) -> Result<Self> {
        let ambient_dim = nodes
            .first()
            .ok_or(Error::Empty("graph nodes"))?
            .subspace
            .ambient_dim();
        if measurements.len() != nodes.len() {
            return Err(Error::InvalidGraph(format!(
                "{} nodes but {} measurement slots",
                nodes.len(),
                measurements.len()
            )));
        }
        if start >= nodes.len() {
            return Err(Error::InvalidGraph(format!("start node {start} does not exist")));
        }
        for node in &nodes {
            if node.subspace.ambient_dim() != ambient_dim {
                return Err(Error::DimensionMismatch {
                    expected: ambient_dim,
                    found: node.subspace.ambient_dim(),
                });
            }
        }
        let k = nodes[start].subspace.rank();
        if let Some(t) = &target {
            if t.shape() != (k, k) {
                return Err(Error::ShapeMismatch {
                    left: t.shape(),
                    right: (k, k),
                });
            }
        }
        let mut any_completion = false;
        for (id, slot) in measurements.iter().enumerate() {
            let Some(m) = slot else { continue };
            let node = &nodes[id].subspace;
            let mut covered = ComplexMatrix::zeros(node.rank(), node.rank());
            for branch in &m.branches {
                let successor = nodes.get(branch.successor).ok_or_else(|| {
                    Error::InvalidGraph(format!(
                        "node {id} branches to missing node {}",
                        branch.successor
                    ))
                })?;
                if !branch.target.same_span(&successor.subspace, policy) {
                    return Err(Error::InvalidGraph(format!(
                        "branch target from node {id} differs from node {}",
                        branch.successor
                    )));
                }
                any_completion |= branch.completes;
                let restricted = &(&node.basis().adjoint() * &projector_matrix(&branch.target))
                    * node.basis();
                covered = &covered + &restricted;
            }
            let deviation = covered.max_abs_diff(&ComplexMatrix::identity(node.rank()));
            if deviation > policy.tol_ortho.sqrt() {
                return Err(Error::InvalidGraph(format!(
                    "outcomes at node {id} do not resolve the identity (deviation {deviation:e})"
                )));
            }
        }
        if measurements[start].is_none() {
            return Err(Error::InvalidGraph("start node has no measurement".to_string()));
        }
        if !any_completion {
            return Err(Error::NonAbsorbing);
        }
        Ok(Self {
            ambient_dim,
            nodes,
            measurements,
            start,
            target,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn measurement(&self, id: NodeId) -> Option<&Measurement> {
        self.measurements[id].as_ref()
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn start_subspace(&self) -> &Subspace {
        &self.nodes[self.start].subspace
    }

    /// Logical dimension `k`.
    pub fn logical_dim(&self) -> usize {
        self.start_subspace().rank()
    }

    /// Intended holonomy on the start subspace, in its basis.
    pub fn target(&self) -> Option<&ComplexMatrix> {
        self.target.as_ref()
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.label == label)
    }

    /// Isometry report for every branch, as `(node, outcome, report)`.
    pub fn edge_reports(&self, policy: &TolerancePolicy) -> Result<Vec<(NodeId, usize, IsometryReport)>> {
        let mut out = Vec::new();
        for (id, slot) in self.measurements.iter().enumerate() {
            let Some(m) = slot else { continue };
            for (outcome, branch) in m.branches.iter().enumerate() {
                let report = isometry_report(&self.nodes[id].subspace, &branch.target, policy)?;
                out.push((id, outcome, report));
            }
        }
        Ok(out)
    }

    /// Every branch is a scaled isometry of its source node.
    pub fn is_stepwise_isometric(&self, policy: &TolerancePolicy) -> Result<bool> {
        Ok(self.edge_reports(policy)?.iter().all(|(_, _, r)| r.is_isometry))
    }

    /// State-independent branch probabilities `[p0, p1]` for a node.
    ///
    /// Fails with `StateDependent` if either branch has a non-flat overlap
    /// spectrum.
    pub fn branch_probabilities(&self, id: NodeId, policy: &TolerancePolicy) -> Result<Option<[f64; 2]>> {
        let Some(m) = self.measurement(id) else {
            return Ok(None);
        };
        let source = &self.nodes[id].subspace;
        let mut probs = [0.0; 2];
        for (b, branch) in m.branches.iter().enumerate() {
            let cosines = overlap_cosines(source, &branch.target)?;
            let squares: Vec<f64> = cosines.iter().map(|c| c * c).collect();
            let hi = squares.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = squares.iter().copied().fold(f64::INFINITY, f64::min);
            if hi - lo > policy.tol_flat {
                return Err(Error::StateDependent { node: id });
            }
            probs[b] = squares.iter().sum::<f64>() / squares.len() as f64;
        }
        Ok(Some(probs))
    }
}

fn branch(target: &Subspace, successor: NodeId, completes: bool) -> Branch {
    Branch {
        target: target.clone(),
        successor,
        completes,
    }
}

/// Node ids of the six-node graph.
pub mod roles {
    use super::NodeId;
    pub const S: NodeId = 0;
    pub const A_PLUS: NodeId = 1;
    pub const A_MINUS: NodeId = 2;
    pub const C: NodeId = 3;
    pub const B_PLUS: NodeId = 4;
    pub const B_MINUS: NodeId = 5;
}

/// The six-node graph for `diag(e^{iφ_j})` on `k = phases.len()` levels.
///
/// Outcome 0 is always the `+` / retry branch, outcome 1 the `−` / forward
/// branch, so the path `[1, 1, 1, 1]` is the direct route `S → A− → C → B− → S`.
pub fn build_general_rus_graph(phases: &[f64], policy: &TolerancePolicy) -> Result<MeasurementGraph> {
    build_gauged_rus_graph(phases, &vec![0.0; phases.len()], policy)
}

/// As [`build_general_rus_graph`] with the first measurement's auxiliary
/// components carrying extra phases: `A± = span{|j⟩ ± e^{iγ_j}|j̄⟩}`.
///
/// The target recorded on the graph is `diag(e^{iφ_j})`; a completed run
/// realizes `diag(e^{i(φ_j + γ_j)})` up to sign, so only a uniform gauge
/// `γ_j = γ` leaves the holonomy unchanged up to a global phase.
pub fn build_gauged_rus_graph(
    phases: &[f64],
    gauge: &[f64],
    policy: &TolerancePolicy,
) -> Result<MeasurementGraph> {
    let k = phases.len();
    if k == 0 {
        return Err(Error::Empty("phase list"));
    }
    if gauge.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: gauge.len(),
        });
    }
    let n = 2 * k;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let with_phases = |logical: &dyn Fn(usize) -> C64, auxiliary: &dyn Fn(usize) -> C64| -> Result<Subspace> {
        let basis: Vec<Vec<C64>> = (0..k)
            .map(|j| {
                let mut v = vec![ZERO; n];
                v[j] = logical(j) * h;
                v[k + j] = auxiliary(j) * h;
                v
            })
            .collect();
        Subspace::span_of(basis, policy)
    };

    let s = Subspace::coordinate(n, &(0..k).collect::<Vec<_>>())?;
    let c = Subspace::coordinate(n, &(k..n).collect::<Vec<_>>())?;
    let a_plus = with_phases(&|_| C64::new(1.0, 0.0), &|j| phase(gauge[j]))?;
    let a_minus = with_phases(&|_| C64::new(1.0, 0.0), &|j| -phase(gauge[j]))?;
    let b_plus = with_phases(&|j| phase(phases[j]), &|_| C64::new(1.0, 0.0))?;
    let b_minus = with_phases(&|j| phase(phases[j]), &|_| C64::new(-1.0, 0.0))?;

    use roles::*;
    let nodes = vec![
        Node { label: "S".into(), role: NodeRole::Start, subspace: s.clone() },
        Node { label: "A+".into(), role: NodeRole::Intermediate, subspace: a_plus.clone() },
        Node { label: "A-".into(), role: NodeRole::Intermediate, subspace: a_minus.clone() },
        Node { label: "C".into(), role: NodeRole::Checkpoint, subspace: c.clone() },
        Node { label: "B+".into(), role: NodeRole::Intermediate, subspace: b_plus.clone() },
        Node { label: "B-".into(), role: NodeRole::Intermediate, subspace: b_minus.clone() },
    ];
    let measure_a = Measurement {
        branches: [branch(&s, S, false), branch(&c, C, false)],
    };
    let measure_b = Measurement {
        branches: [branch(&c, C, false), branch(&s, S, true)],
    };
    let measurements = vec![
        Some(Measurement {
            branches: [branch(&a_plus, A_PLUS, false), branch(&a_minus, A_MINUS, false)],
        }),
        Some(measure_a.clone()),
        Some(measure_a),
        Some(Measurement {
            branches: [branch(&b_plus, B_PLUS, false), branch(&b_minus, B_MINUS, false)],
        }),
        Some(measure_b.clone()),
        Some(measure_b),
    ];
    let target = ComplexMatrix::from_diagonal(&phases.iter().map(|&p| phase(p)).collect::<Vec<_>>());
    MeasurementGraph::new(nodes, measurements, S, Some(target), policy)
}

/// The four-level qubit graph realizing `diag(1, e^{iφ})` on `span{|0⟩, |1⟩}`
/// with auxiliary levels `|2⟩, |3⟩`.
pub fn build_qubit_rus_graph(phi: f64, policy: &TolerancePolicy) -> Result<MeasurementGraph> {
    build_general_rus_graph(&[0.0, phi], policy)
}

/// The qubit measurement pair
/// `Π₁ = span{cos θ|0⟩ + e^{iφ} sin θ|2⟩, cos θ|1⟩ + e^{iφ'} sin θ|3⟩}` and
/// `Π̃₁ = span{sin θ|0⟩ − e^{iφ} cos θ|2⟩, sin θ|1⟩ − e^{iφ'} cos θ|3⟩}`.
pub fn qubit_measurement_pair(
    theta: f64,
    phi: f64,
    phi_prime: f64,
    policy: &TolerancePolicy,
) -> Result<(Subspace, Subspace)> {
    let (s, c) = theta.sin_cos();
    let re = |x: f64| C64::new(x, 0.0);
    let pi1 = Subspace::span_of(
        vec![
            vec![re(c), ZERO, phase(phi) * s, ZERO],
            vec![ZERO, re(c), ZERO, phase(phi_prime) * s],
        ],
        policy,
    )?;
    let pi1_tilde = Subspace::span_of(
        vec![
            vec![re(s), ZERO, -phase(phi) * c, ZERO],
            vec![ZERO, re(s), ZERO, -phase(phi_prime) * c],
        ],
        policy,
    )?;
    Ok((pi1, pi1_tilde))
}

/// Sign of a completed run's holonomy relative to the graph's target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseClass {
    Plus,
    Minus,
    Unknown,
}

impl PhaseClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Plus => "+1",
            Self::Minus => "-1",
            Self::Unknown => "unknown",
        }
    }
}

impl Serialize for PhaseClass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct TraceStep {
    pub node: NodeId,
    pub outcome: usize,
    pub probability: f64,
    /// Conditional state after the outcome.
    pub state: StateVector,
}

/// One run through a measurement graph.
#[derive(Debug, Clone)]
pub struct TraversalTrace {
    pub initial_state: StateVector,
    pub steps: Vec<TraceStep>,
    pub step_count: usize,
    pub final_state: StateVector,
    pub final_node: NodeId,
    pub completed: bool,
    pub holonomy_phase_class: PhaseClass,
}

fn check_supported(graph: &MeasurementGraph, state: &StateVector, policy: &TolerancePolicy) -> Result<()> {
    if state.dim() != graph.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: graph.ambient_dim(),
            found: state.dim(),
        });
    }
    state.require_normalized(policy)?;
    let inside = graph.start_subspace().weight(state.amplitudes())?;
    let outside = (state.norm() * state.norm() - inside).max(0.0);
    if outside > policy.tol_norm {
        return Err(Error::UnsupportedState { weight: outside });
    }
    Ok(())
}

/// Walks the graph choosing each outcome with `choose(probabilities)`.
fn traverse<F>(
    graph: &MeasurementGraph,
    state: &StateVector,
    max_steps: usize,
    policy: &TolerancePolicy,
    mut choose: F,
) -> Result<TraversalTrace>
where
    F: FnMut(usize, [f64; 2]) -> Result<usize>,
{
    check_supported(graph, state, policy)?;
    let mut node = graph.start();
    let mut current = state.clone();
    let mut steps = Vec::new();
    let mut completed = false;
    while steps.len() < max_steps {
        let m = graph.measurement(node).ok_or_else(|| {
            Error::InvalidGraph(format!("node {node} has no measurement"))
        })?;
        let probs = [
            m.branches[0].target.weight(current.amplitudes())?,
            m.branches[1].target.weight(current.amplitudes())?,
        ];
        let outcome = choose(steps.len(), probs)?;
        let branch = &m.branches[outcome];
        let (next, probability) = apply_projection(&current, &branch.target, policy)?;
        // Renormalize exactly so rounding does not accumulate over long runs.
        current = StateVector::normalized(next.into_amplitudes())?;
        steps.push(TraceStep {
            node,
            outcome,
            probability,
            state: current.clone(),
        });
        node = branch.successor;
        if branch.completes {
            completed = true;
            break;
        }
    }
    let holonomy_phase_class = if completed {
        classify_phase(graph, state, &current, policy)?
    } else {
        PhaseClass::Unknown
    };
    Ok(TraversalTrace {
        initial_state: state.clone(),
        step_count: steps.len(),
        steps,
        final_state: current,
        final_node: node,
        completed,
        holonomy_phase_class,
    })
}

fn classify_phase(
    graph: &MeasurementGraph,
    initial: &StateVector,
    last: &StateVector,
    policy: &TolerancePolicy,
) -> Result<PhaseClass> {
    let Some(target) = graph.target() else {
        return Ok(PhaseClass::Unknown);
    };
    let start = graph.start_subspace();
    let expected = target.apply(&start.coordinates(initial.amplitudes())?)?;
    let got = start.coordinates(last.amplitudes())?;
    let overlap: C64 = expected.iter().zip(&got).map(|(a, b)| a.conj() * b).sum();
    Ok(if (overlap - 1.0).norm() < policy.tol_phase {
        PhaseClass::Plus
    } else if (overlap + 1.0).norm() < policy.tol_phase {
        PhaseClass::Minus
    } else {
        PhaseClass::Unknown
    })
}

/// Samples a run with a ChaCha8 stream seeded from `seed`.
pub fn run_protocol(
    graph: &MeasurementGraph,
    state: &StateVector,
    seed: u64,
    max_steps: usize,
    policy: &TolerancePolicy,
) -> Result<TraversalTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_with_rng(graph, state, &mut rng, max_steps, policy)
}

pub fn run_with_rng<R: Rng + ?Sized>(
    graph: &MeasurementGraph,
    state: &StateVector,
    rng: &mut R,
    max_steps: usize,
    policy: &TolerancePolicy,
) -> Result<TraversalTrace> {
    traverse(graph, state, max_steps, policy, |_, probs| {
        let u: f64 = rng.random();
        Ok(if u * (probs[0] + probs[1]) < probs[0] { 0 } else { 1 })
    })
}

/// Replays a run along prescribed outcomes; stops early on completion.
pub fn run_path(
    graph: &MeasurementGraph,
    state: &StateVector,
    outcomes: &[usize],
    policy: &TolerancePolicy,
) -> Result<TraversalTrace> {
    traverse(graph, state, outcomes.len(), policy, |i, _| {
        let o = outcomes[i];
        if o > 1 {
            return Err(Error::BadIndex { index: o, max: 1 });
        }
        Ok(o)
    })
}

/// Holonomy read off a completed trace.
#[derive(Debug, Clone)]
pub struct HolonomyResult {
    /// The `k × k` map on the start subspace, in its basis.
    pub unitary: ComplexMatrix,
    /// `|tr(T† U)| / k` against the graph's target `T`.
    pub fidelity_to_target: f64,
    /// `tr(T† U) / |tr(T† U)|`.
    pub global_phase: C64,
}

/// Reconstructs the logical map from the projections along the trace.
///
/// The product of branch projectors restricted to the start subspace is
/// divided by `∏ √p` over the recorded step probabilities; stepwise
/// isometry makes the result unitary.
pub fn extract_holonomy(graph: &MeasurementGraph, trace: &TraversalTrace) -> Result<HolonomyResult> {
    if !trace.completed {
        return Err(Error::IncompleteTrace);
    }
    let target = graph.target().ok_or(Error::MissingTarget)?;
    let start = graph.start_subspace();
    let mut gamma = projector_matrix(start);
    let mut weight = 1.0;
    for step in &trace.steps {
        let m = graph
            .measurement(step.node)
            .ok_or_else(|| Error::InvalidGraph(format!("node {} has no measurement", step.node)))?;
        gamma = &projector_matrix(&m.branches[step.outcome].target) * &gamma;
        weight *= step.probability.sqrt();
    }
    let restricted = &(&start.basis().adjoint() * &gamma) * start.basis();
    let unitary = restricted.scale(C64::new(1.0 / weight, 0.0));
    let overlap = (&target.adjoint() * &unitary).trace() / unitary.rows() as f64;
    let fidelity = overlap.norm();
    Ok(HolonomyResult {
        unitary,
        fidelity_to_target: fidelity.min(1.0),
        global_phase: if fidelity > 0.0 { overlap / fidelity } else { C64::new(1.0, 0.0) },
    })
}

/// True iff `‖u − c·v‖_max < tol` for some `c` in `allowed`.
pub fn equal_up_to_phase(
    u: &ComplexMatrix,
    v: &ComplexMatrix,
    allowed: &[C64],
    tol: f64,
) -> Result<bool> {
    if u.shape() != v.shape() || !u.is_square() {
        return Err(Error::ShapeMismatch {
            left: u.shape(),
            right: v.shape(),
        });
    }
    Ok(allowed.iter().any(|&c| u.max_abs_diff(&v.scale(c)) < tol))
}

/// The phases `{+1, −1}`.
pub const SIGNS: [C64; 2] = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0)];

/// Node-level chain: transition matrix among nodes excluding completing
/// branches, and the set of nodes reachable from start.
struct NodeChain {
    transient: Vec<NodeId>,
    q: Vec<Vec<f64>>,
}

fn node_chain(graph: &MeasurementGraph, policy: &TolerancePolicy) -> Result<NodeChain> {
    let n = graph.nodes().len();
    let mut probs = vec![[0.0; 2]; n];
    for (id, slot) in probs.iter_mut().enumerate() {
        if let Some(p) = graph.branch_probabilities(id, policy)? {
            *slot = p;
        }
    }
    // Forward reachability from start along positive-probability branches.
    let mut reachable = vec![false; n];
    let mut stack = vec![graph.start()];
    reachable[graph.start()] = true;
    while let Some(id) = stack.pop() {
        if let Some(m) = graph.measurement(id) {
            for (b, br) in m.branches.iter().enumerate() {
                if probs[id][b] > 0.0 && !br.completes && !reachable[br.successor] {
                    reachable[br.successor] = true;
                    stack.push(br.successor);
                }
            }
        }
    }
    // Every reachable node must be able to reach a completing branch.
    let mut can_finish = vec![false; n];
    loop {
        let mut changed = false;
        for id in 0..n {
            if can_finish[id] {
                continue;
            }
            if let Some(m) = graph.measurement(id) {
                let finishes = m.branches.iter().enumerate().any(|(b, br)| {
                    probs[id][b] > 0.0 && (br.completes || can_finish[br.successor])
                });
                if finishes {
                    can_finish[id] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if (0..n).any(|id| reachable[id] && !can_finish[id]) {
        return Err(Error::NonAbsorbing);
    }
    let transient: Vec<NodeId> = (0..n).filter(|&id| reachable[id]).collect();
    let index = |id: NodeId| transient.iter().position(|&t| t == id);
    let mut q = vec![vec![0.0; transient.len()]; transient.len()];
    for (i, &id) in transient.iter().enumerate() {
        if let Some(m) = graph.measurement(id) {
            for (b, br) in m.branches.iter().enumerate() {
                if !br.completes {
                    if let Some(j) = index(br.successor) {
                        q[i][j] += probs[id][b];
                    }
                }
            }
        }
    }
    Ok(NodeChain { transient, q })
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (x, y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * y;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Mean and variance of the number of measurements until completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Exact transit-time moments from the absorbing chain's fundamental matrix
/// `N = (I − Q)⁻¹`: `t = N·1` and `E[T²] = (2N − I)·t`.
pub fn transit_moments(graph: &MeasurementGraph, policy: &TolerancePolicy) -> Result<TransitMoments> {
    let chain = node_chain(graph, policy)?;
    let n = chain.transient.len();
    let i_minus_q: Vec<Vec<f64>> = chain
        .q
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, q)| f64::from(u8::from(i == j)) - q).collect())
        .collect();
    let t = solve(i_minus_q.clone(), vec![1.0; n]).ok_or(Error::NonAbsorbing)?;
    // (2N − I) t = 2 N t − t, with N t solved as one more linear system.
    let nt = solve(i_minus_q, t.clone()).ok_or(Error::NonAbsorbing)?;
    let s = chain
        .transient
        .iter()
        .position(|&id| id == graph.start())
        .expect("start is reachable");
    let second = 2.0 * nt[s] - t[s];
    Ok(TransitMoments {
        mean: t[s],
        variance: second - t[s] * t[s],
    })
}

/// Expected number of measurements from start to completion.
pub fn expected_steps(graph: &MeasurementGraph, policy: &TolerancePolicy) -> Result<f64> {
    Ok(transit_moments(graph, policy)?.mean)
}

/// `P(T = s)` for `s = 1 … max_steps`, by propagating the node distribution.
pub fn step_distribution(
    graph: &MeasurementGraph,
    max_steps: usize,
    policy: &TolerancePolicy,
) -> Result<Vec<f64>> {
    let n = graph.nodes().len();
    let mut probs = vec![[0.0; 2]; n];
    for (id, slot) in probs.iter_mut().enumerate() {
        if let Some(p) = graph.branch_probabilities(id, policy)? {
            *slot = p;
        }
    }
    let mut mass = vec![0.0; n];
    mass[graph.start()] = 1.0;
    let mut pmf = Vec::with_capacity(max_steps);
    for _ in 0..max_steps {
        let mut next = vec![0.0; n];
        let mut done = 0.0;
        for id in 0..n {
            if mass[id] == 0.0 {
                continue;
            }
            if let Some(m) = graph.measurement(id) {
                for (b, br) in m.branches.iter().enumerate() {
                    let w = mass[id] * probs[id][b];
                    if br.completes {
                        done += w;
                    } else {
                        next[br.successor] += w;
                    }
                }
            }
        }
        pmf.push(done);
        mass = next;
    }
    Ok(pmf)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of shot `index` under `master`: the `index`-th output of a
/// SplitMix64 generator started at `master`, i.e.
/// `splitmix64(master + index · 0x9E3779B97F4A7C15)`.
pub fn shot_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Per-shot outcome of a batch run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShotRecord {
    pub shot: u64,
    pub steps: usize,
    pub completed: bool,
    pub phase_class: PhaseClass,
    /// Worst entrywise deviation from the target up to the realized sign,
    /// for completed shots.
    pub holonomy_error: Option<f64>,
}

/// Runs `shots` independent traversals in parallel; shot `i` uses
/// `shot_seed(master_seed, i)`, so results do not depend on scheduling.
pub fn run_shots(
    graph: &MeasurementGraph,
    state: &StateVector,
    master_seed: u64,
    shots: u64,
    max_steps: usize,
    policy: &TolerancePolicy,
) -> Result<Vec<ShotRecord>> {
    check_supported(graph, state, policy)?;
    (0..shots)
        .into_par_iter()
        .map(|i| {
            let trace = run_protocol(graph, state, shot_seed(master_seed, i), max_steps, policy)?;
            let holonomy_error = if trace.completed {
                let h = extract_holonomy(graph, &trace)?;
                let target = graph.target().ok_or(Error::MissingTarget)?;
                let sign = if h.global_phase.re >= 0.0 { 1.0 } else { -1.0 };
                Some(h.unitary.max_abs_diff(&target.scale(C64::new(sign, 0.0))))
            } else {
                None
            };
            Ok(ShotRecord {
                shot: i,
                steps: trace.step_count,
                completed: trace.completed,
                phase_class: trace.holonomy_phase_class,
                holonomy_error,
            })
        })
        .collect()
}

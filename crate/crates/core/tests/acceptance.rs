//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines appear in plain
//! `cargo test` output; exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI, TAU};
use std::process::Command;

use holonomy::numerics::{phase, random_state, random_unitary, ComplexMatrix, StateVector, TolerancePolicy, C64, ZERO};
use holonomy::protocols::{
    build_qubit_rus_graph, equal_up_to_phase, expected_steps, extract_holonomy, qubit_measurement_pair,
    run_path, run_protocol, run_shots, shot_seed, SIGNS,
};
use holonomy::sequences::{
    bargmann_invariant, build_phase_loop, compose_diag_unitary, cumulative_operator, solid_angle, state_from_bloch,
    survival_probability, PhaseLoopSpec,
};
use holonomy::subspaces::{isometry_report, random_state_in, rotated_subspace, transition_probability, Subspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn policy() -> TolerancePolicy {
    TolerancePolicy::default()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Distance between two angles on the circle.
fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU).abs();
    d.min(TAU - d)
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

fn single_loop_amplitude() -> Outcome {
    let p = policy();
    let mut worst_p: f64 = 0.0;
    let mut worst_arg: f64 = 0.0;
    for phi in [0.0, FRAC_PI_4, FRAC_PI_2, PI, 3.0 * FRAC_PI_2] {
        let spec = PhaseLoopSpec::new(1, 1, phi, 1).map_err(err)?;
        let gamma = cumulative_operator(&build_phase_loop(&spec, &p).map_err(err)?);
        let logical = StateVector::basis(2, 0);
        let survival = survival_probability(&gamma, &logical, &p).map_err(err)?;
        worst_p = worst_p.max((survival - 1.0 / 16.0).abs());
        worst_arg = worst_arg.max(angle_gap(gamma[(0, 0)].arg(), phi));
    }
    check(
        worst_p <= 1e-12 && worst_arg <= 1e-9,
        format!("max |p - 1/16| = {worst_p:.1e}, max |arg t - phi| = {worst_arg:.1e}"),
    )
}

fn composite_diagonal_unitary() -> Outcome {
    let p = policy();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let phases: Vec<f64> = (0..3).map(|_| rng.random_range(-PI..PI)).collect();
    let (gamma, scale) = compose_diag_unitary(&phases, 1, &p).map_err(err)?;
    let block = gamma.block(3, 3).scale(C64::new(1.0 / scale, 0.0));
    let unitarity = block.unitarity_error();
    let target = ComplexMatrix::from_diagonal(&phases.iter().map(|&x| phase(x)).collect::<Vec<_>>());
    let deviation = block.max_abs_diff(&target);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..100 {
        let amps: Vec<C64> = random_state(3, &mut rng).into_amplitudes().into_iter().chain([ZERO]).collect();
        let psi = StateVector::new(amps).map_err(err)?;
        let s = survival_probability(&gamma, &psi, &p).map_err(err)?;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let spread = hi - lo;
    check(
        unitarity <= 1e-8 && deviation <= 1e-9 && spread <= 1e-10,
        format!("unitarity {unitarity:.1e}, |U - diag| {deviation:.1e}, survival spread {spread:.1e}"),
    )
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let r = dot(v, v).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

/// Signed area of a geodesic triangle from its side lengths (L'Huilier),
/// positive for right-handed circuits.
fn lhuilier(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let side = |u: [f64; 3], v: [f64; 3]| dot(u, v).clamp(-1.0, 1.0).acos();
    let (x, y, z) = (side(b, c), side(c, a), side(a, b));
    let s = 0.5 * (x + y + z);
    let t = (s / 2.0).tan() * ((s - x) / 2.0).tan() * ((s - y) / 2.0).tan() * ((s - z) / 2.0).tan();
    let excess = 4.0 * t.max(0.0).sqrt().atan();
    excess * dot(a, cross(b, c)).signum()
}

/// Geodesic polygon in a hemisphere, each edge cut into several geodesic
/// steps.
fn random_geodesic_loop(rng: &mut ChaCha8Rng) -> (Vec<[f64; 3]>, [f64; 3]) {
    let axis = unit([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
    let corners: Vec<[f64; 3]> = (0..rng.random_range(3..=6))
        .map(|_| loop {
            let v = unit([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            if dot(v, axis) > 0.2 {
                break v;
            }
        })
        .collect();
    let mut points = Vec::new();
    for (i, &a) in corners.iter().enumerate() {
        let b = corners[(i + 1) % corners.len()];
        let cuts = rng.random_range(1..=4);
        for j in 0..cuts {
            let t = j as f64 / cuts as f64;
            points.push(unit([
                a[0] * (1.0 - t) + b[0] * t,
                a[1] * (1.0 - t) + b[1] * t,
                a[2] * (1.0 - t) + b[2] * t,
            ]));
        }
    }
    (points, axis)
}

fn geometric_phase_law() -> Outcome {
    let p = policy();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..50 {
        let (points, apex) = random_geodesic_loop(&mut rng);
        let mut states: Vec<StateVector> = points.iter().map(|&v| state_from_bloch(v)).collect();
        states.push(states[0].clone());
        let b = bargmann_invariant(&states, &p).map_err(err)?;
        let omega = solid_angle(&points).map_err(err)?;
        // Clockwise-positive, fanned from the hemisphere's centre.
        let oracle: f64 = -(0..points.len())
            .map(|i| lhuilier(apex, points[i], points[(i + 1) % points.len()]))
            .sum::<f64>();
        worst_oracle = worst_oracle.max(angle_gap(omega, oracle));
        worst = worst.max(angle_gap(b.arg(), oracle / 2.0));
    }
    check(
        worst <= 1e-6 && worst_oracle <= 1e-6,
        format!("max |arg B - Omega/2| = {worst:.1e} over 50 loops, solid-angle oracle gap {worst_oracle:.1e}"),
    )
}

fn zeno_refinement() -> Outcome {
    let p = policy();
    let mut previous = 0.0;
    let mut increasing = true;
    let mut worst: f64 = 0.0;
    let mut last = 0.0;
    for n in [1usize, 2, 4, 8, 16, 32, 64] {
        let spec = PhaseLoopSpec::new(1, 1, 0.7, n).map_err(err)?;
        let gamma = cumulative_operator(&build_phase_loop(&spec, &p).map_err(err)?);
        let scale = gamma[(0, 0)].norm();
        let closed = (PI / (4 * n) as f64).cos().powi(4 * n as i32);
        worst = worst.max((scale - closed).abs());
        increasing &= scale > previous;
        previous = scale;
        last = scale;
    }
    check(
        worst <= 1e-12 && increasing && (last - 0.98091).abs() < 5e-6,
        format!("max |scale - cos^4n| = {worst:.1e}, increasing = {increasing}, scale(64) = {last:.6}"),
    )
}

fn worked_example() -> Outcome {
    let p = policy();
    let phi = 1.1;
    let g = build_qubit_rus_graph(phi, &p).map_err(err)?;
    let (alpha, beta) = (C64::new(0.48, -0.36), C64::new(0.0, 0.8));
    let psi = StateVector::new(vec![alpha, beta, ZERO, ZERO]).map_err(err)?;
    let trace = run_path(&g, &psi, &[1, 1, 1, 1], &p).map_err(err)?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let e = phase(phi);
    let expected = [
        [alpha * h, beta * h, -alpha * h, -beta * h],
        [ZERO, ZERO, -alpha, -beta],
        [alpha * h, e * beta * h, -alpha * h, -beta * h],
        [alpha, e * beta, ZERO, ZERO],
    ];
    if trace.steps.len() != 4 || !trace.completed {
        return Err(format!("{} steps, completed = {}", trace.steps.len(), trace.completed));
    }
    let worst = trace
        .steps
        .iter()
        .zip(expected)
        .flat_map(|(s, e)| s.state.amplitudes().iter().zip(e).map(|(a, b)| (a - b).norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let final_gap = trace
        .final_state
        .amplitudes()
        .iter()
        .zip(expected[3])
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    check(
        worst < 1e-12 && final_gap < 1e-12,
        format!("max amplitude error {worst:.1e} over psi_1..psi_4, final state error {final_gap:.1e}"),
    )
}

fn expected_transit() -> Outcome {
    let p = policy();
    let g = build_qubit_rus_graph(FRAC_PI_2, &p).map_err(err)?;
    let exact = expected_steps(&g, &p).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let psi = random_state_in(g.start_subspace(), &mut rng);
    let shots = run_shots(&g, &psi, 2024, 100_000, 100_000, &p).map_err(err)?;
    let steps: Vec<f64> = shots.iter().filter(|s| s.completed).map(|s| s.steps as f64).collect();
    let n = steps.len() as f64;
    let mean = steps.iter().sum::<f64>() / n;
    let var = steps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    check(
        (exact - 8.0).abs() <= 1e-12 && steps.len() == 100_000 && (mean - 8.0).abs() <= 3.0 * se,
        format!("fundamental-matrix E[steps] = {exact:.15}, MC mean {mean:.4} +- {se:.4} over {} shots", steps.len()),
    )
}

fn phase_classes() -> Outcome {
    let p = policy();
    let phi = 2.2;
    let g = build_qubit_rus_graph(phi, &p).map_err(err)?;
    let target = g.target().expect("qubit graph has a target").clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let psi = random_state_in(g.start_subspace(), &mut rng);
    let (mut plus, mut minus, mut completed, mut mismatched) = (0usize, 0usize, 0usize, 0usize);
    let mut shot = 0u64;
    while completed < 10_000 {
        let trace = run_protocol(&g, &psi, shot_seed(5, shot), 10_000, &p).map_err(err)?;
        shot += 1;
        if !trace.completed {
            continue;
        }
        completed += 1;
        let h = extract_holonomy(&g, &trace).map_err(err)?;
        if !equal_up_to_phase(&h.unitary, &target, &SIGNS, 1e-9).map_err(err)? {
            mismatched += 1;
        } else if h.unitary.max_abs_diff(&target) < 1e-9 {
            plus += 1;
        } else {
            minus += 1;
        }
    }
    check(
        mismatched == 0 && plus > 0 && minus > 0,
        format!("{completed} traces: +1 x {plus}, -1 x {minus}, other {mismatched}"),
    )
}

/// `max − min` of the transition probability over random states of `a`.
fn probability_spread(a: &Subspace, b: &Subspace, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..32 {
        let psi = random_state_in(a, rng);
        let w = transition_probability(&psi, b).map_err(err)?;
        lo = lo.min(w);
        hi = hi.max(w);
    }
    Ok(hi - lo)
}

fn split_frame(n: usize, k: usize, rng: &mut ChaCha8Rng) -> (ComplexMatrix, ComplexMatrix) {
    let u = random_unitary(n, rng);
    let source = ComplexMatrix::from_columns(&(0..k).map(|j| u.column(j)).collect::<Vec<_>>()).unwrap();
    let escape = ComplexMatrix::from_columns(&(k..n).map(|j| u.column(j)).collect::<Vec<_>>()).unwrap();
    (source, escape)
}

fn isometry_matches_behavior() -> Outcome {
    let p = policy();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut agree, mut total) = (0usize, 0usize);
    let mut flat_worst: f64 = 0.0;
    let mut unequal_best = f64::INFINITY;
    for flat in [true, false] {
        for _ in 0..100 {
            let k = if flat { rng.random_range(1..=4) } else { rng.random_range(2..=4) };
            let n = rng.random_range(2 * k..=8);
            let (source, escape) = split_frame(n, k, &mut rng);
            let angles: Vec<f64> = if flat {
                vec![rng.random_range(0.1..1.45); k]
            } else {
                // Distinct angles with cos² gaps of at least ~0.05.
                let mut a: Vec<f64> = (0..k).map(|j| 0.15 + 0.3 * j as f64 + rng.random_range(0.0..0.1)).collect();
                a.rotate_left(rng.random_range(0..k));
                a
            };
            let phases: Vec<f64> = (0..k).map(|_| rng.random_range(-PI..PI)).collect();
            let a = Subspace::from_basis(source.clone(), &p).map_err(err)?;
            let b = rotated_subspace(&source, &escape, &angles, &phases, &p).map_err(err)?;
            let report = isometry_report(&a, &b, &p).map_err(err)?;
            let spread = probability_spread(&a, &b, &mut rng)?;
            if flat {
                flat_worst = flat_worst.max(spread);
            } else {
                unequal_best = unequal_best.min(spread);
            }
            let independent = spread < 1e-8;
            let dependent = spread >= 1e-3;
            total += 1;
            if (report.is_isometry && independent && flat) || (!report.is_isometry && dependent && !flat) {
                agree += 1;
            }
        }
    }
    check(
        agree == total,
        format!("{agree}/{total} verdicts match; flat spread <= {flat_worst:.1e}, unequal spread >= {unequal_best:.1e}"),
    )
}

fn dimension_doubling() -> Outcome {
    let p = policy();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut hits = 0usize;
    for trial in 0..10_000 {
        let k = rng.random_range(2..=7);
        let n = rng.random_range(k..=(2 * k - 1).min(7));
        let (a, b) = if trial % 2 == 0 {
            (Subspace::random(n, k, &mut rng), Subspace::random(n, k, &mut rng))
        } else {
            // Best effort at a flat rotation: only n − k directions can move.
            let u = random_unitary(n, &mut rng);
            let source = ComplexMatrix::from_columns(&(0..k).map(|j| u.column(j)).collect::<Vec<_>>()).unwrap();
            let theta: f64 = rng.random_range(0.1..1.45);
            let mut target = source.clone();
            for j in 0..n - k {
                for r in 0..n {
                    target[(r, j)] = u[(r, j)] * theta.cos() + u[(r, k + j)] * theta.sin();
                }
            }
            let a = Subspace::from_basis(source, &p).map_err(err)?;
            let b = Subspace::from_basis(target, &p).map_err(err)?;
            (a, b)
        };
        if isometry_report(&a, &b, &p).map_err(err)?.is_isometry {
            hits += 1;
        }
    }
    check(hits == 0, format!("{hits} isometry verdicts in 10000 pairs with N < 2k"))
}

fn complement_isometry() -> Outcome {
    let p = policy();
    let start = Subspace::coordinate(4, &[0, 1]).map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut all = true;
    for theta in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
        let (pi1, pi1_tilde) = qubit_measurement_pair(theta, 0.4, -1.3, &p).map_err(err)?;
        let r = isometry_report(&start, &pi1, &p).map_err(err)?;
        let rt = isometry_report(&start, &pi1_tilde, &p).map_err(err)?;
        all &= r.is_isometry && rt.is_isometry;
        worst = worst
            .max((r.scale * r.scale - theta.cos().powi(2)).abs())
            .max((rt.scale * rt.scale - theta.sin().powi(2)).abs());
    }
    check(all && worst <= 1e-12, format!("both outcomes isometric = {all}, max scale^2 error {worst:.1e}"))
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_holonomy");
    let runs: &[&[&str]] = &[
        &["rus-run", "--phi", "1.5707963", "--shots", "20000", "--seed", "42", "--csv"],
        &["compose", "--phases", "0.3,1.7,-2.4", "--seed", "42"],
        &["isometry-check", "--k", "2", "--ambient", "4", "--seed", "42", "--shots", "500"],
    ];
    for args in runs {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(err)?;
            let status = Command::new(bin).args(*args).arg("--output").arg(dir.path()).output().map_err(err)?;
            if !status.status.success() {
                return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            let report = std::fs::read(dir.path().join("report.json")).map_err(err)?;
            let csv = std::fs::read(dir.path().join("shots.csv")).unwrap_or_default();
            outputs.push((report, csv));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{args:?} produced different bytes"));
        }
    }
    check(true, format!("{} configurations byte-identical across two invocations", runs.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("single-loop amplitude", single_loop_amplitude),
        ("composite diagonal unitary", composite_diagonal_unitary),
        ("geometric-phase law", geometric_phase_law),
        ("Zeno refinement", zeno_refinement),
        ("worked example", worked_example),
        ("expected transit", expected_transit),
        ("+-1 phase classes", phase_classes),
        ("isometry criterion vs behavior", isometry_matches_behavior),
        ("dimension doubling", dimension_doubling),
        ("complement isometry", complement_isometry),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {}: {name} — {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {}: {name} — {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

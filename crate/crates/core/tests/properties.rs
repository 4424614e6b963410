use holonomy::numerics::{
    orthonormalize, random_state, svd, ComplexMatrix, RankMode, StateVector, TolerancePolicy, C64,
};
use holonomy::protocols::{build_general_rus_graph, extract_holonomy, run_path, run_protocol};
use holonomy::sequences::{apply_projection, cumulative_operator, survival_probability, ProjectionSequence};
use holonomy::subspaces::{complement, projector_matrix, random_state_in, Subspace};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn policy() -> TolerancePolicy {
    TolerancePolicy::default()
}

fn complex_matrix(max_dim: usize) -> impl Strategy<Value = ComplexMatrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), r * c).prop_map(move |v| {
            ComplexMatrix::from_row_major(r, c, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap()
        })
    })
}

fn vectors(m: &ComplexMatrix) -> Vec<StateVector> {
    m.columns().into_iter().map(|c| StateVector::new(c).unwrap()).collect()
}

fn rng_seed() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(m in complex_matrix(8)) {
        let s = svd(&m).unwrap();
        prop_assert!(s.reconstruct().max_abs_diff(&m) < 1e-9);
        prop_assert!(s.left.orthonormality_error() < 1e-9);
        prop_assert!(s.right.orthonormality_error() < 1e-9);
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.singular_values.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn orthonormalize_is_idempotent(m in complex_matrix(6)) {
        let p = policy();
        let q = orthonormalize(&vectors(&m), &p, RankMode::Numerical).unwrap();
        prop_assert!(q.orthonormality_error() < 1e-10);
        prop_assert!(q.cols() <= m.cols().min(m.rows()));
        let again = orthonormalize(&vectors(&q), &p, RankMode::Numerical).unwrap();
        prop_assert!(again.max_abs_diff(&q) < 1e-10);
    }

    #[test]
    fn projector_and_complement_resolve_identity(seed in rng_seed(), n in 2usize..=7, k_frac in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + ((n - 1) as f64 * k_frac) as usize % (n - 1);
        let s = Subspace::random(n, k, &mut rng);
        let c = complement(&s).unwrap();
        prop_assert_eq!(c.rank(), n - k);
        let total = &projector_matrix(&s) + &projector_matrix(&c);
        prop_assert!(total.max_abs_diff(&ComplexMatrix::identity(n)) < 1e-10);
        let p = projector_matrix(&s);
        prop_assert!((&p * &p).max_abs_diff(&p) < 1e-12);
        prop_assert!(p.adjoint().max_abs_diff(&p) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// `Γ` is a contraction and conditional steps conserve probability.
    #[test]
    fn projection_sequences_contract(seed in rng_seed(), n in 2usize..=6, len in 1usize..=10) {
        let p = policy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps: Vec<Subspace> = (0..len)
            .map(|i| Subspace::random(n, 1 + (seed as usize + i) % (n - 1), &mut rng))
            .collect();
        let seq = ProjectionSequence::new(steps, &p).unwrap();
        let gamma = cumulative_operator(&seq);
        let psi = random_state(n, &mut rng);
        let survival = survival_probability(&gamma, &psi, &p).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&survival));

        // The product of step probabilities equals the survival probability.
        let mut state = psi.clone();
        let mut product = 1.0;
        for s in seq.steps() {
            match apply_projection(&state, s, &p) {
                Ok((next, prob)) => {
                    let outside = 1.0 - prob;
                    let c = complement(s).unwrap();
                    let other = c.weight(state.amplitudes()).unwrap();
                    prop_assert!((outside - other).abs() < 1e-10);
                    product *= prob;
                    state = next;
                }
                Err(_) => { product = 0.0; break; }
            }
        }
        prop_assert!((product - survival).abs() < 1e-9);
    }
}

#[test]
fn general_graph_preserves_information() {
    let p = policy();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 1..=3 {
        let phases: Vec<f64> = (0..k).map(|j| 0.4 + 0.9 * j as f64).collect();
        let g = build_general_rus_graph(&phases, &p).unwrap();
        assert!(g.is_stepwise_isometric(&p).unwrap());
        let target = g.target().unwrap().clone();
        for trial in 0..20 {
            let psi = random_state_in(g.start_subspace(), &mut rng);
            let trace = run_protocol(&g, &psi, trial, 500, &p).unwrap();
            assert!(trace.completed);
            let h = extract_holonomy(&g, &trace).unwrap();
            assert!(h.unitary.unitarity_error() < 1e-10);
            // The same unitary, up to sign, acts on the logical coordinates.
            let coords = g.start_subspace().coordinates(psi.amplitudes()).unwrap();
            let out = g.start_subspace().coordinates(trace.final_state.amplitudes()).unwrap();
            let expected = target.apply(&coords).unwrap();
            let overlap: C64 = expected.iter().zip(&out).map(|(a, b)| a.conj() * b).sum();
            assert!((overlap.norm() - 1.0).abs() < 1e-10, "k={k} trial={trial}");
        }
    }
}

#[test]
fn forced_paths_are_state_independent() {
    let p = policy();
    let g = build_general_rus_graph(&[0.3, -1.1], &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let path = [0, 0, 1, 0, 1, 1, 0, 1, 1];
    let mut reference: Option<Vec<f64>> = None;
    for _ in 0..50 {
        let psi = random_state_in(g.start_subspace(), &mut rng);
        let trace = run_path(&g, &psi, &path, &p).unwrap();
        let probs: Vec<f64> = trace.steps.iter().map(|s| s.probability).collect();
        for s in &trace.steps {
            assert!(s.state.is_normalized(&p));
        }
        match &reference {
            None => reference = Some(probs),
            Some(r) => {
                for (a, b) in r.iter().zip(&probs) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn state_vectors_reject_bad_input() {
    assert!(StateVector::new(vec![]).is_err());
    assert!(StateVector::new(vec![C64::new(f64::NAN, 0.0)]).is_err());
    assert!(StateVector::normalized(vec![C64::new(0.0, 0.0); 3]).is_err());
}

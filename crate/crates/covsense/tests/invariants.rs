use covsense::covert_exponent::{
    achievability_kernel, build_input_law, covertness_bound, design_pmf, exact_covertness, optimize_exponent,
    DccTable, ExponentOptions,
};
use covsense::discriminate::{helstrom, pgm, POVM_COMPLETENESS_TOL, POVM_PSD_TOL};
use covsense::divergence::{chernoff, conditional_chernoff, eta, ns_embed, rel_entropy};
use covsense::qmat::{self, eig_hermitian, mat_power, partial_trace, random, trace_norm, DensityOperator};
use covsense::rng::task_rng;
use covsense::scenario::{check_assumptions, zero_equivalent_pairs};
use covsense::CqScenario;
use proptest::prelude::*;

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Two parameters, three symbols, qubit Bob and Willie; the innocent Bob
/// state is shared so the pair is zero-equivalent.
fn random_scenario(seed: u64) -> CqScenario {
    let mut rng = task_rng(seed, 0);
    let innocent = random::density(2, 2, &mut rng);
    let bob: Vec<Vec<DensityOperator>> = (0..2)
        .map(|_| {
            let mut row = vec![innocent.clone()];
            row.extend((0..2).map(|_| random::density(2, 2, &mut rng)));
            row
        })
        .collect();
    let willie_row: Vec<DensityOperator> = (0..3).map(|_| random::density(2, 2, &mut rng)).collect();
    CqScenario::new(names("t", 2), names("u", 3), bob, vec![willie_row.clone(), willie_row]).unwrap()
}

fn min_eig(m: &qmat::CMatrix) -> f64 {
    eig_hermitian(&qmat::symmetrize(m), 1e-8).unwrap().eigenvalues[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eig_reconstructs(seed in any::<u64>(), d in 1usize..=16) {
        let h = random::hermitian(d, &mut task_rng(seed, 0));
        let es = eig_hermitian(&h, 1e-8).unwrap();
        prop_assert!((es.reconstruct() - &h).norm() <= 1e-8 * (1.0 + h.norm()));
    }

    #[test]
    fn trace_norm_of_state_difference_in_range(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = task_rng(seed, 0);
        let a = random::density(d, 1 + (seed as usize) % d, &mut rng);
        let b = random::density(d, d, &mut rng);
        let t = trace_norm(&(a.matrix() - b.matrix())).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&t));
        prop_assert!(trace_norm(&(a.matrix() - a.matrix())).unwrap() == 0.0);
    }

    #[test]
    fn pinsker(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = task_rng(seed, 0);
        let a = random::density(d, d, &mut rng);
        let b = random::density(d, d, &mut rng);
        let t = trace_norm(&(a.matrix() - b.matrix())).unwrap();
        prop_assert!(rel_entropy(&a, &b).unwrap() >= 0.5 * t * t - 1e-12);
    }

    #[test]
    fn chernoff_is_symmetric(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = task_rng(seed, 0);
        let a = random::density(d, d, &mut rng);
        let b = random::density(d, 1 + (seed as usize) % d, &mut rng);
        let ab = chernoff(&a, &b).unwrap().value;
        let ba = chernoff(&b, &a).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-8, "{} vs {}", ab, ba);
    }

    #[test]
    fn eta_is_nonnegative(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = task_rng(seed, 0);
        let a = random::density(d, 1 + (seed as usize) % d, &mut rng);
        let b = random::density(d, d, &mut rng);
        prop_assert!(eta(&a, &b).unwrap() >= -1e-12);
    }

    #[test]
    fn eta_is_chi_square_for_commuting_inputs(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = task_rng(seed, 0);
        let p = random::diagonal_state(d, &mut rng);
        let q = random::diagonal_state(d, &mut rng);
        let chi: f64 = (0..d)
            .map(|i| {
                let (a, b) = (p.matrix()[(i, i)].re, q.matrix()[(i, i)].re);
                (a - b).powi(2) / b
            })
            .sum();
        // rotate both by one unitary: η is unitarily invariant
        let u = random::unitary(d, &mut rng);
        let rot = |s: &DensityOperator| DensityOperator::new(&u * s.matrix() * u.adjoint()).unwrap();
        let e = eta(&rot(&p), &rot(&q)).unwrap();
        prop_assert!((e - chi).abs() <= 1e-8 * (1.0 + chi), "{} vs {}", e, chi);
    }

    #[test]
    fn ns_inequality(seed in any::<u64>()) {
        let mut rng = task_rng(seed, 0);
        let a = random::density(2, 1 + (seed as usize) % 2, &mut rng);
        let b = random::density(2, 2, &mut rng);
        let (q, qp) = ns_embed(&a, &b).unwrap();
        let lhs = 1.0 - qmat::trace_distance(&a, &b).unwrap();
        prop_assert!(lhs >= 0.5 * (1.0 - 0.5 * q.l1_distance(&qp)) - 1e-12);
    }

    #[test]
    fn helstrom_matches_trace_distance(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = task_rng(seed, 0);
        let a = random::density(d, 1 + (seed as usize) % d, &mut rng);
        let b = random::density(d, d, &mut rng);
        let (povm, h) = helstrom(&a, &b).unwrap();
        prop_assert!(povm.check().is_ok());
        let want = 0.5 * (1.0 - qmat::trace_distance(&a, &b).unwrap());
        prop_assert!((h.average() - want).abs() <= 1e-10);
        let (_, g) = pgm(&[&a, &b]).unwrap();
        prop_assert!(g.average() <= 2.0 * h.average() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mat_power_one_is_identity_map(seed in any::<u64>(), d in 1usize..=4) {
        let rho = random::density(d, d, &mut task_rng(seed, 0));
        prop_assert!(qmat::max_abs(&(mat_power(&rho, 1.0) - rho.matrix())) <= 1e-12);
    }

    #[test]
    fn partial_trace_inverts_tensor(seed in any::<u64>(), da in 1usize..=3, db in 1usize..=3) {
        let mut rng = task_rng(seed, 0);
        let a = random::density(da, da, &mut rng);
        let b = random::density(db, db, &mut rng);
        let ab = qmat::tensor(a.matrix(), b.matrix());
        let back = partial_trace(&ab, &[da, db], &[0]).unwrap();
        prop_assert!(qmat::max_abs(&(back - a.matrix())) <= 1e-12);
    }

    #[test]
    fn pgm_is_a_povm(seed in any::<u64>(), k in 2usize..=4, d in 2usize..=4) {
        let mut rng = task_rng(seed, 0);
        let states: Vec<DensityOperator> = (0..k).map(|i| random::density(d, 1 + i % d, &mut rng)).collect();
        let refs: Vec<&DensityOperator> = states.iter().collect();
        let (povm, _) = pgm(&refs).unwrap();
        let mut total = qmat::CMatrix::zeros(d, d);
        for e in &povm.elements {
            prop_assert!(min_eig(e) >= -POVM_PSD_TOL);
            total += e;
        }
        prop_assert!(qmat::max_abs(&(total - qmat::identity(d))) <= POVM_COMPLETENESS_TOL);
    }

    #[test]
    fn conditional_chernoff_of_one_symbol_is_plain_chernoff(seed in any::<u64>()) {
        let scen = random_scenario(seed);
        let cc = conditional_chernoff(0, 1, &[0.0, 1.0, 0.0], &scen).unwrap().value;
        let plain = chernoff(scen.bob(0, 1), scen.bob(1, 1)).unwrap().value;
        prop_assert!((cc - plain).abs() <= 1e-8);
    }

    #[test]
    fn assumptions_survive_relabelling(seed in any::<u64>()) {
        let scen = random_scenario(seed);
        let a = check_assumptions(&scen, 1e-9).unwrap();
        let b = check_assumptions(&scen.relabel(&[1, 0], &[2, 1]).unwrap(), 1e-9).unwrap();
        prop_assert_eq!(a.flag_indistinguishable.holds, b.flag_indistinguishable.holds);
        prop_assert_eq!(a.flag_non_simulable.holds, b.flag_non_simulable.holds);
        prop_assert_eq!(a.flag_support.holds, b.flag_support.holds);
        prop_assert_eq!(a.zero_equiv_pairs.len(), b.zero_equiv_pairs.len());
    }

    #[test]
    fn kernel_lies_between_type_extremes(seed in any::<u64>(), n in 2usize..=10, alpha in 0.1f64..0.6) {
        let scen = random_scenario(seed);
        let p = design_pmf(&[0.5, 0.5], alpha);
        let law = match build_input_law(&p, alpha, 1.0, n) {
            Ok(l) => l,
            Err(_) => return Ok(()),
        };
        let table = DccTable::new(&scen, vec![(0, 1)]).unwrap();
        let nf = n as f64;
        let dccs: Vec<f64> = (0..law.types_q.len()).map(|t| table.dcc(0, &law.type_pmf(t)).value).collect();
        let lo_d = dccs.iter().cloned().fold(f64::INFINITY, f64::min);
        let (best, _) = (0..law.types_q.len())
            .map(|t| (law.type_probability(t), t))
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
        let hi_d = dccs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let k = achievability_kernel(&scen, &law).unwrap()[0].kernel;
        prop_assert!(k <= -nf * lo_d + 1e-9);
        prop_assert!(k >= -nf * hi_d + best.ln() - 1e-9);
    }

    #[test]
    fn exact_covertness_below_bound(seed in any::<u64>(), n in 2usize..=6, alpha in 0.1f64..0.5) {
        let scen = random_scenario(seed);
        let p = design_pmf(&[0.3, 0.7], alpha);
        let law = match build_input_law(&p, alpha, 1.0, n) {
            Ok(l) => l,
            Err(_) => return Ok(()),
        };
        let exact = exact_covertness(&scen, &law).unwrap();
        let bound = covertness_bound(&scen, &law).unwrap().value;
        prop_assert!(exact <= bound + 1e-9, "{} > {}", exact, bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exponent_is_invariant_under_symbol_permutation(seed in any::<u64>()) {
        let scen = random_scenario(seed);
        prop_assume!(check_assumptions(&scen, 1e-9).unwrap().all_hold());
        prop_assume!(!zero_equivalent_pairs(&scen, 1e-9).is_empty());
        let opts = ExponentOptions { seed, ..Default::default() };
        let a = optimize_exponent(&scen, &opts).unwrap().achievable_rate;
        let b = optimize_exponent(&scen.relabel(&[0, 1], &[2, 1]).unwrap(), &opts).unwrap().achievable_rate;
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a), "{} vs {}", a, b);
    }
}

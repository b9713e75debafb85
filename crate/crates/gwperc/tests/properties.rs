use gwperc::offspring::{OffspringKind, OffspringSpec};
use gwperc::percolation::{
    brute_force_reference, factorial_moments_exact, survival_exact,
};
use gwperc::stats::{exp_cdf, ks_distance};
use gwperc::tree::GwTree;
use proptest::prelude::*;

/// Random supercritical pmfs on {1, ..., K}.
fn arb_pmf() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..1.0, 2..6).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        // Push mass to the top so the mean always exceeds 1.
        let k = p.len();
        let shift = p[0] * 0.9;
        p[0] -= shift;
        p[k - 1] += shift;
        p
    })
}

fn supercritical(p: Vec<f64>) -> Option<OffspringSpec> {
    OffspringSpec::new(OffspringKind::FinitePmf(p)).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_routes_agree(p in arb_pmf()) {
        if let Some(sp) = supercritical(p) {
            let params = sp.derive_params(4).unwrap();
            let alt = 2.0 * params.mu * params.mu / params.phi2;
            prop_assert!((params.lambda - alt).abs() < 1e-12 * params.lambda.abs());
            prop_assert!((params.pc * params.mu - 1.0).abs() < 1e-14);
            prop_assert!((params.m_factorial(1) - params.mu).abs() < 1e-12);
        }
    }

    #[test]
    fn composition_top_coefficient_closed_form(p in arb_pmf()) {
        if let Some(sp) = supercritical(p) {
            let params = sp.derive_params(4).unwrap();
            for k in 2..=4usize {
                let closed = (k - 1) as f64 * params.pc * params.pc * params.phi2 / 2.0;
                prop_assert!((params.comp_coeff(k, k - 1) - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn annealed_law_is_critical(p in arb_pmf()) {
        if let Some(sp) = supercritical(p) {
            let a = sp.annealed();
            prop_assert!((a.mean() - 1.0).abs() < 1e-12);
            let total: f64 = a.pmf().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(a.pmf()[0] > 0.0);
        }
    }

    #[test]
    fn deepen_matches_direct_generation(seed in any::<u64>(), split in 1usize..5) {
        let sp: OffspringSpec = "unif:1:3".parse().unwrap();
        let full = GwTree::generate(sp.clone(), seed, 6).unwrap();
        let mut grown = GwTree::generate(sp, seed, split).unwrap();
        grown.deepen(6).unwrap();
        prop_assert_eq!(full.z_table(), grown.z_table());
        prop_assert_eq!(full.vertex_count(), grown.vertex_count());
    }

    #[test]
    fn tree_file_round_trip(seed in any::<u64>(), depth in 0usize..6) {
        let sp: OffspringSpec = "unif:1:3".parse().unwrap();
        let t = GwTree::generate(sp, seed, depth).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = GwTree::read_from(&mut buf.as_slice()).unwrap();
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn survival_curve_monotone_and_moments_positive(seed in any::<u64>()) {
        let sp: OffspringSpec = "unif:1:3".parse().unwrap();
        let t = GwTree::generate(sp, seed, 6).unwrap();
        let curve = survival_exact(&t, 6).unwrap();
        for j in 1..curve.q.len() {
            prop_assert!(curve.q[j] <= curve.q[j - 1] + 1e-15);
            prop_assert!(curve.q[j] > 0.0);
        }
        let table = factorial_moments_exact(&t, 4, 3).unwrap();
        for j in 0..=4 {
            prop_assert!((table.entry(j, 1) - t.w(j)).abs() < 1e-10);
            for i in 0..=3 {
                prop_assert!(table.entry(j, i) >= 0.0);
            }
        }
    }

    #[test]
    fn dp_agrees_with_enumeration_on_tiny_trees(seed in any::<u64>()) {
        let sp: OffspringSpec = "unif:1:3".parse().unwrap();
        let t = GwTree::generate(sp, seed, 2).unwrap();
        if t.level(2).end - 1 <= 12 {
            let (q_ref, m_ref) = brute_force_reference(&t, 2, 2).unwrap();
            let q = survival_exact(&t, 2).unwrap().q[2];
            let table = factorial_moments_exact(&t, 2, 2).unwrap();
            prop_assert!((q - q_ref).abs() < 1e-12);
            for i in 0..=2 {
                prop_assert!((table.entry(2, i) - m_ref[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ks_distance_within_unit_interval(sample in proptest::collection::vec(0.0f64..10.0, 1..200)) {
        let cdf = exp_cdf(1.5).unwrap();
        let d = ks_distance(&sample, cdf).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }
}

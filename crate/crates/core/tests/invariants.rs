use equisteer::capsules::{capsule, FiberSpec, CATALOG_IDS};
use equisteer::field::FeatureField;
use equisteer::group::{Dihedral, Isometry, TorusGrid};
use equisteer::induction::steer;
use equisteer::intertwiner::{assemble_filter_bank, BasisCatalog, FilterBankParams};
use equisteer::net::correlate;
use equisteer::rep::{decompose_type, direct_sum};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn element() -> impl Strategy<Value = Dihedral> {
    (0usize..8).prop_map(Dihedral::from_index)
}

fn isometry(n: usize) -> impl Strategy<Value = Isometry> {
    let grid = TorusGrid::new(n).unwrap();
    (element(), 0..n as i64, 0..n as i64).prop_map(move |(h, a, b)| Isometry::new(h, [a, b], grid))
}

fn capsule_id() -> impl Strategy<Value = &'static str> {
    (0..CATALOG_IDS.len()).prop_map(|i| CATALOG_IDS[i])
}

proptest! {
    #[test]
    fn point_group_axioms(a in element(), b in element(), c in element()) {
        prop_assert_eq!(a.compose(b).compose(c), a.compose(b.compose(c)));
        prop_assert_eq!(a.compose(a.inverse()), Dihedral::identity());
        let v = [3, -2];
        prop_assert_eq!(a.compose(b).apply(v), a.apply(b.apply(v)));
    }

    #[test]
    fn isometries_act_as_a_group(g in isometry(7), h in isometry(7), x in 0usize..7, y in 0usize..7) {
        let gh = g.compose(&h).unwrap();
        prop_assert_eq!(gh.act([x, y]), g.act(h.act([x, y])));
        prop_assert_eq!(g.inverse().act(g.act([x, y])), [x, y]);
    }

    #[test]
    fn direct_sums_add_types(a in capsule_id(), b in capsule_id()) {
        let (ra, rb) = (&capsule(a).unwrap().rep, &capsule(b).unwrap().rep);
        let sum = direct_sum(&[ra.clone(), rb.clone()]).unwrap();
        prop_assert!(sum.is_representation(1e-12));
        let (ta, tb, ts) = (
            decompose_type(ra).unwrap(),
            decompose_type(rb).unwrap(),
            decompose_type(&sum).unwrap(),
        );
        for i in 0..5 {
            prop_assert_eq!(ts.0[i], ta.0[i] + tb.0[i]);
        }
    }

    #[test]
    fn fiber_specs_round_trip(a in capsule_id(), m in 1usize..4, b in capsule_id(), k in 1usize..4) {
        let spec = FiberSpec::new(&[(a, m), (b, k)]);
        let text = serde_json::to_string(&spec).unwrap();
        prop_assert_eq!(serde_json::from_str::<FiberSpec>(&text).unwrap(), spec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steering_is_a_homomorphism(cap in capsule_id(), g in isometry(5), h in isometry(5), seed in any::<u64>()) {
        let grid = TorusGrid::new(5).unwrap();
        let f = FeatureField::<f64>::random(grid, FiberSpec::single(cap, 1), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let lhs = steer(&g.compose(&h).unwrap(), &f).unwrap();
        let rhs = steer(&g, &steer(&h, &f).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
    }

    #[test]
    fn random_filter_banks_commute_with_steering(a in capsule_id(), b in capsule_id(), g in isometry(7), seed in any::<u64>()) {
        let catalog = BasisCatalog::global();
        let grid = TorusGrid::new(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fa, fb) = (FiberSpec::single(a, 1), FiberSpec::single(b, 1));
        let params = FilterBankParams::random(&fa, &fb, 3, catalog, &mut rng).unwrap();
        let bank = assemble_filter_bank(&fa, &fb, 3, &params, catalog).unwrap();
        let f = FeatureField::<f64>::random(grid, fa, &mut rng).unwrap();
        let lhs = correlate(&steer(&g, &f).unwrap(), &bank).unwrap();
        let rhs = steer(&g, &correlate(&f, &bank).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10 * (1.0 + rhs.norm()));
    }
}

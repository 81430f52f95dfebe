use gradmap_core::kahler::induced_field;
use gradmap_core::lie_core::exp_lie;
use gradmap_core::linalg::sample_rng;
use gradmap_core::scenarios::{sampled_tangent_rank, Scenario, ScenarioName};
use proptest::prelude::*;

const NAMES: [ScenarioName; 5] = [
    ScenarioName::P1Toy,
    ScenarioName::RealGrassmannian,
    ScenarioName::ComplexGrassmannian,
    ScenarioName::PaperGraphExample,
    ScenarioName::IndependentProduct,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn action_is_a_group_action(seed in any::<u64>(), which in 0usize..5) {
        let s = Scenario::named(NAMES[which]).unwrap();
        let x = s.sample_at(seed, 0).unwrap();
        let mut rng = sample_rng(seed, 1);
        let g = s.spec.random_g(0.5, &mut rng);
        let h = s.spec.random_g(0.5, &mut rng);
        let lhs = x.act_group(&s.spec, &g.compose(&h)).unwrap();
        let rhs = x.act_group(&s.spec, &h).unwrap().act_group(&s.spec, &g).unwrap();
        prop_assert!(lhs.chordal(&rhs) <= 1e-10);
    }

    #[test]
    fn induced_field_differentiates_the_action(seed in any::<u64>(), which in 0usize..5) {
        let s = Scenario::named(NAMES[which]).unwrap();
        let x = s.sample_at(seed, 0).unwrap();
        let mut rng = sample_rng(seed, 2);
        let beta = s.spec.random_unit_p(&mut rng);
        let field = induced_field(&s.spec, None, Some(&beta), &x);
        let mut errs = Vec::new();
        for h in [1e-3, 5e-4] {
            let fwd = x.act_group(&s.spec, &exp_lie(&beta, h).unwrap()).unwrap();
            let bwd = x.act_group(&s.spec, &exp_lie(&beta, -h).unwrap()).unwrap();
            let mut e: f64 = 0.0;
            for ((pf, pb), v) in fwd.factors().iter().zip(bwd.factors()).zip(field.values()) {
                let fd = (pf.projection() - pb.projection()) / gradmap_core::linalg::real(2.0 * h);
                e = e.max((fd - v).norm());
            }
            errs.push(e);
        }
        // central differences: halving h quarters the error
        prop_assert!(errs[1] <= 1e-6 || errs[1] <= 0.3 * errs[0], "{errs:?}");
        prop_assert!(errs[0] <= 1e-4);
    }

    #[test]
    fn produced_tangents_satisfy_the_invariants(seed in any::<u64>(), which in 0usize..5) {
        let s = Scenario::named(NAMES[which]).unwrap();
        let x = s.sample_at(seed, 3).unwrap();
        let mut rng = sample_rng(seed, 3);
        let v = x.random_tangent(&mut rng);
        prop_assert!(v.invariant_residual() <= 1e-10);
        let xi = s.spec.random_u(&mut rng);
        let w = induced_field(&s.spec, Some(&xi), None, &x);
        prop_assert!(w.invariant_residual() <= 1e-10);
        let moved = x.along(&v, 0.1).unwrap();
        prop_assert!(moved.invariant_residual() <= 1e-10);
    }
}

#[test]
fn graph_has_half_dimension() {
    let s = Scenario::named(ScenarioName::PaperGraphExample).unwrap();
    for i in 0..4 {
        let x = s.sample_at(11, i).unwrap();
        assert_eq!(sampled_tangent_rank(&s, &x, i).unwrap(), 32);
    }
}

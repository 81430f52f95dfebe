use gradmap_core::flows::{negative_flow, FlowOptions, FlowStatus};
use gradmap_core::scenarios::{Scenario, ScenarioName};
use gradmap_core::stability::{classify, ClassifyOptions, Verdict};
use gradmap_core::strata::{strata_survey, stratum_of, StrataOptions};
use proptest::prelude::*;

const NAMES: [ScenarioName; 4] = [
    ScenarioName::P1Toy,
    ScenarioName::RealGrassmannian,
    ScenarioName::ComplexGrassmannian,
    ScenarioName::PaperGraphExample,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flow_and_analytic_criteria_agree(seed in any::<u64>(), which in 0usize..4) {
        let s = Scenario::named(NAMES[which]).unwrap();
        let x = s.sample_at(seed, 0).unwrap();
        let v = classify(&s.spec, &x, &ClassifyOptions { seed, ..Default::default() }).unwrap();
        if v.verdict != Verdict::Undetermined {
            prop_assert_eq!(v.flow_semistable, v.analytic_semistable);
        }
    }

    #[test]
    fn stratum_is_constant_along_the_flow(seed in any::<u64>(), which in 0usize..4) {
        let s = Scenario::named(NAMES[which]).unwrap();
        let x = s.sample_at(seed, 0).unwrap();
        let opts = StrataOptions::default();
        let a = stratum_of(&s.spec, &x, &opts).unwrap();
        let half = FlowOptions { t_max: 0.5, ..opts.flow };
        let mid = negative_flow(&s.spec, &x, &half).unwrap();
        let b = stratum_of(&s.spec, &mid.limit, &opts).unwrap();
        prop_assert_eq!(a.flow_status, FlowStatus::Converged);
        let (pa, pb) = (a.beta_plus.unwrap(), b.beta_plus.unwrap());
        let d: f64 = pa.iter().zip(&pb).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d <= 1e-4, "{pa:?} vs {pb:?}");
    }
}

#[test]
fn zero_label_exists_iff_some_sample_is_semistable() {
    for name in NAMES {
        let s = Scenario::named(name).unwrap();
        let census = strata_survey(&s, 30, 3, &StrataOptions::default()).unwrap();
        let any_semistable = (0..30).any(|i| {
            let x = s.sample_at(3, i).unwrap();
            classify(&s.spec, &x, &ClassifyOptions { seed: 3, point_id: i, ..Default::default() })
                .unwrap()
                .verdict
                .is_semistable()
        });
        assert_eq!(census.has_zero_label, any_semistable, "{name:?}");
    }
}

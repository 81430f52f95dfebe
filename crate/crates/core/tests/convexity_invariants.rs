use gradmap_core::convexity::{chamber_image, shifted_distance};
use gradmap_core::linalg::sample_rng;
use gradmap_core::moment::mu_p;
use gradmap_core::scenarios::{Scenario, ScenarioName};
use proptest::prelude::*;
use rand::Rng;

const NAMES: [ScenarioName; 4] = [
    ScenarioName::P1Toy,
    ScenarioName::RealGrassmannian,
    ScenarioName::ComplexGrassmannian,
    ScenarioName::PaperGraphExample,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn chamber_images_lie_in_the_closed_chamber(seed in any::<u64>(), which in 0usize..4) {
        let s = Scenario::named(NAMES[which]).unwrap();
        let x = s.sample_at(seed, 0).unwrap();
        let c = chamber_image(&s.spec, &x).unwrap();
        prop_assert!(c.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(c.iter().sum::<f64>().abs() <= 1e-10);
    }

    #[test]
    fn shifted_distance_bounds(seed in any::<u64>(), which in 0usize..4) {
        let s = Scenario::named(NAMES[which]).unwrap();
        let x = s.sample_at(seed, 0).unwrap();
        let mut rng = sample_rng(seed, 9);
        let mut beta: Vec<f64> = (0..s.spec.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = beta.iter().sum::<f64>() / beta.len() as f64;
        beta.iter_mut().for_each(|b| *b -= mean);
        beta.sort_by(|a, b| b.total_cmp(a));
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        let d = shifted_distance(&s.spec, &x, &beta).unwrap();
        prop_assert!(d <= mu_p(&s.spec, &x).norm() + norm + 1e-12);
        let own = chamber_image(&s.spec, &x).unwrap();
        prop_assert!(shifted_distance(&s.spec, &x, &own).unwrap() <= 1e-9);
    }
}

use proptest::prelude::*;
use wavegap::config;
use wavegap::report::{format_f64, to_json_string};
use wavegap::stochastic::{wilson_interval, wilson_standard_error, NoiseModel};

fn nodes(n: usize) -> Vec<f64> {
    (0..n).map(|i| -10.0 + 20.0 * i as f64 / (n - 1) as f64).collect()
}

proptest! {
    #[test]
    fn noise_increment_is_bilinear(
        k in 1usize..12,
        sigma in 0.0f64..2.0,
        v in prop::collection::vec(-3.0f64..3.0, 64),
        dw in prop::collection::vec(-2.0f64..2.0, 12),
        s in -4.0f64..4.0,
    ) {
        let noise = NoiseModel::bumps(&nodes(64), k, sigma).unwrap();
        let dw = &dw[..k];
        let base = noise.increment(&v, dw);
        let sv: Vec<f64> = v.iter().map(|x| s * x).collect();
        let sdw: Vec<f64> = dw.iter().map(|x| s * x).collect();
        for (a, (b, c)) in base.iter().zip(noise.increment(&sv, dw).iter().zip(noise.increment(&v, &sdw))) {
            prop_assert!((s * a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!((s * a - c).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn hilbert_schmidt_norm_is_bounded_by_budget(
        k in 1usize..40,
        sigma in 0.0f64..2.0,
        v in prop::collection::vec(-3.0f64..3.0, 80),
        weight in prop::collection::vec(0.01f64..10.0, 80),
    ) {
        let x = nodes(80);
        let h = x[1] - x[0];
        let noise = NoiseModel::bumps(&x, k, sigma).unwrap();
        prop_assert!(noise.weight_budget() <= 1.0 + 1e-12);
        let hs = noise.hilbert_schmidt_sq(&v, &weight, h);
        let norm: f64 = h * v.iter().zip(&weight).map(|(v, w)| w * v * v).sum::<f64>();
        prop_assert!(hs <= sigma * sigma * noise.weight_budget() * norm * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn wilson_interval_brackets_the_frequency(n in 1usize..5000, frac in 0.0f64..=1.0, z in 0.5f64..4.0) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, n, z);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-15 && p <= hi + 1e-15 && hi <= 1.0);
        let (lo2, hi2) = wilson_interval(k, n, 2.0 * z);
        prop_assert!(lo2 <= lo + 1e-15 && hi <= hi2 + 1e-15);
        prop_assert!(wilson_standard_error(k, n) <= 0.5 / (n as f64).sqrt() + 1e-12);
    }

    #[test]
    fn json_floats_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let text = to_json_string(&vec![v]).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back[0].to_bits(), v.to_bits());
        prop_assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn config_round_trips_through_toml(
        beta in 1.0f64..40.0,
        theta in 0.05f64..0.95,
        scale in 0.1f64..5.0,
        nodes in 64usize..4096,
        seed in any::<u64>(),
    ) {
        let text = format!(
            "name = \"p\"\n[model]\nkernel = {{ family = \"exponential\", scale = {scale:?} }}\n\
             nonlinearity = {{ kind = \"neural_field\", steepness = {beta:?}, threshold = {theta:?} }}\n\
             [grid]\nhalf_width = 20.0\nnodes = {nodes}\n"
        );
        let mut a = config::parse(&text).unwrap();
        a.config.override_seed(seed);
        let b = config::parse(&toml::to_string(&a.config).unwrap()).unwrap();
        prop_assert_eq!(a.config, b.config);
    }
}

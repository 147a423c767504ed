mod common;

use common::{normal_cdf, rel};
use proptest::prelude::*;
use stable_tv_lab::distance::{ks_critical, ks_one_sample, ks_two_sample};
use stable_tv_lab::sampling::*;
use stable_tv_lab::{LabError, RngStream};

const N: usize = 100_000;

#[test]
fn sym_stable_characteristic_function() {
    for (k, alpha) in [0.8, 1.2, 1.5, 1.8, 2.0].into_iter().enumerate() {
        for t in [0.5, 1.0, 3.0] {
            let s = SampleSet::sym_stable(StableSpec::new(alpha, t).unwrap(), N, 11, k as u64).unwrap();
            for xi in [0.5f64, 1.0, 2.0] {
                let est = empirical_char_fn(&s, &[xi]).unwrap();
                let target = (-t * xi.powf(alpha) / 2.0).exp();
                assert!(
                    est.abs_diff(target, 0.0) < 4.0 * est.std_error,
                    "alpha {alpha} t {t} xi {xi}"
                );
            }
        }
    }
}

#[test]
fn gaussian_and_cauchy_endpoints() {
    let g = SampleSet::sym_stable(StableSpec::new(2.0, 3.0).unwrap(), N, 5, 0).unwrap();
    let d = ks_one_sample(g.values(), |x| normal_cdf(x, 3f64.sqrt()));
    assert!(d < ks_critical(0.01, N, None), "Gaussian KS {d}");

    // alpha = 1, t = 2: Cauchy with scale t/2 = 1
    let c = SampleSet::sym_stable(StableSpec::new(1.0, 2.0).unwrap(), N, 5, 1).unwrap();
    let d = ks_one_sample(c.values(), |x| 0.5 + x.atan() / std::f64::consts::PI);
    assert!(d < ks_critical(0.01, N, None), "Cauchy KS {d}");
}

#[test]
fn levy_subordinator_law() {
    // alpha = 1, t = 1: S = 1 / (4 Z^2)
    let s = SampleSet::subordinator(SubordinatorSpec::new(1.0, 1.0).unwrap(), N, 6, 0).unwrap();
    let cdf = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            2.0 * (1.0 - normal_cdf(1.0 / (2.0 * x.sqrt()), 1.0))
        }
    };
    let d = ks_one_sample(s.values(), cdf);
    assert!(d < ks_critical(0.01, N, None), "Levy KS {d}");
    assert!(s.values().iter().all(|v| *v > 0.0));
}

#[test]
fn subordinator_laplace_transform() {
    let cases = [(1.0, 1.0, 1.0, 0.493068691395240), (1.5, 2.0, 1.0, 0.186040138435915)];
    for (k, (alpha, t, r, frozen)) in cases.into_iter().enumerate() {
        let spec = SubordinatorSpec::new(alpha, t).unwrap();
        assert!(rel(spec.laplace(r), frozen) < 1e-13);
        let s = SampleSet::subordinator(spec, N, 7, k as u64).unwrap();
        let est = s.values().iter().map(|v| (-r * v).exp()).sum::<f64>() / N as f64;
        assert!((est - frozen).abs() < 3.0 / (N as f64).sqrt(), "alpha {alpha}: {est}");
    }
}

#[test]
fn subordinated_vector_matches_stable_law() {
    for (k, alpha) in [1.2, 1.5, 1.8].into_iter().enumerate() {
        let s = SampleSet::stable_vector(alpha, 1.0, 1, N, 8, k as u64).unwrap();
        for xi in [0.5f64, 1.0, 2.0] {
            let est = empirical_char_fn(&s, &[xi]).unwrap();
            assert!(est.abs_diff((-xi.powf(alpha) / 2.0).exp(), 0.0) < 3.0 / (N as f64).sqrt());
        }
    }
}

#[test]
fn stable_vector_is_isotropic() {
    let s = SampleSet::stable_vector(1.5, 2.0, 3, 50_000, 9, 0).unwrap();
    let target = (-2.0f64 / 2.0).exp();
    let r = 1.0 / 3f64.sqrt();
    for xi in [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [r, r, r], [0.6, -0.8, 0.0]] {
        let est = empirical_char_fn(&s, &xi).unwrap();
        assert!(est.abs_diff(target, 0.0) < 4.0 * est.std_error, "{xi:?}");
    }
}

#[test]
fn scaling_law() {
    for (k, alpha) in [1.3, 1.7].into_iter().enumerate() {
        let t: f64 = 4.0;
        let a = SampleSet::sym_stable(StableSpec::new(alpha, t).unwrap(), N, 10, 2 * k as u64).unwrap();
        let b = SampleSet::sym_stable(StableSpec::new(alpha, 1.0).unwrap(), N, 10, 2 * k as u64 + 1).unwrap();
        let scaled: Vec<f64> = b.values().iter().map(|v| v * t.powf(1.0 / alpha)).collect();
        let d = ks_two_sample(a.values(), &scaled);
        assert!(d < ks_critical(0.01, N, Some(N)), "alpha {alpha}: {d}");
    }
}

#[test]
fn inverse_moment_of_subordinator() {
    let s = SampleSet::subordinator(SubordinatorSpec::new(1.5, 1.0).unwrap(), 1_000_000, 12, 0).unwrap();
    let inv: Vec<f64> = s.values().iter().map(|v| 1.0 / v).collect();
    let m = robust_mean(&inv, DEFAULT_BLOCKS).unwrap();
    assert!(rel(m, 1.50011157833459) < 0.02, "{m}");
}

#[test]
fn robust_mean_behaviour() {
    assert_eq!(robust_mean(&[2.5; 100], 8).unwrap(), 2.5);
    assert!(matches!(robust_mean(&[], 8), Err(LabError::Empty(_))));
    assert!(robust_mean(&[1.0], 0).is_err());
    // Pareto(1.5) has mean 3 and infinite variance
    let mut rng = RngStream::new(13, 0);
    let v: Vec<f64> = (0..400_000).map(|_| rng.uniform_open().powf(-1.0 / 1.5)).collect();
    let r = robust_mean_with_error(&v, 32).unwrap();
    assert!((r.estimate - 3.0).abs() < 0.1, "{r:?}");
}

#[test]
fn domain_errors() {
    assert!(StableSpec::new(0.0, 1.0).is_err());
    assert!(StableSpec::new(2.1, 1.0).is_err());
    assert!(StableSpec::new(1.5, 0.0).is_err());
    assert!(SubordinatorSpec::new(2.0, 1.0).is_err());
    assert!(SampleSet::sym_stable(StableSpec::new(1.5, 1.0).unwrap(), 0, 1, 0).is_err());
}

#[test]
fn serialization_round_trip_and_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let s = SampleSet::stable_vector(1.4, 0.7, 2, 1000, 21, 3).unwrap();
    s.write(dir.path(), "draws").unwrap();
    let back = SampleSet::read(dir.path(), "draws").unwrap();
    assert_eq!(back.values(), s.values());
    assert_eq!(back.meta(), s.meta());
    assert_eq!(SampleSet::regenerate(s.meta()).unwrap().values(), s.values());
    let text = std::fs::read_to_string(dir.path().join("draws.csv")).unwrap();
    assert!(text.starts_with("v1,v2"));
}

#[test]
fn worker_count_does_not_matter() {
    let gen = || SampleSet::sym_stable(StableSpec::new(1.6, 1.0).unwrap(), 20_000, 4, 2).unwrap();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(gen);
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(5)
        .build()
        .unwrap()
        .install(gen);
    assert_eq!(one.values(), many.values());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_key_same_draws(seed in any::<u64>(), stream in 0u64..1000, alpha in 1.01f64..2.0) {
        let spec = StableSpec::new(alpha, 1.0).unwrap();
        let a = SampleSet::sym_stable(spec, 64, seed, stream).unwrap();
        let b = SampleSet::sym_stable(spec, 64, seed, stream).unwrap();
        prop_assert_eq!(a.values(), b.values());
        let c = SampleSet::sym_stable(spec, 64, seed, stream + 1).unwrap();
        prop_assert_ne!(a.values(), c.values());
    }

    #[test]
    fn subordinator_draws_are_positive(seed in any::<u64>(), alpha in 0.2f64..1.99, t in 1e-4f64..10.0) {
        let s = SampleSet::subordinator(SubordinatorSpec::new(alpha, t).unwrap(), 256, seed, 0).unwrap();
        prop_assert!(s.values().iter().all(|v| *v > 0.0 && v.is_finite()));
    }
}

//! Property tests for the structural invariants.

use cooploc::crlb::{fisher_static, schur_complement, StaticNetwork};
use cooploc::filter::{effective_sample_size, init_filter, FilterConfig};
use cooploc::geom::{wrap_coord, wrap_delta, PlaneMetric, Vec2};
use cooploc::noise::{ComponentDistribution, LosMarkov, MixtureNoiseModel};
use cooploc::scalar::logsumexp;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #[test]
    fn markov_chain_is_stationary_by_construction(
        alpha in 0.02f64..0.98,
        stay in 0.0f64..1.0,
    ) {
        // Feasibility: p(N->L) = alpha (1 - stay) / (1 - alpha) <= 1.
        prop_assume!(alpha * (1.0 - stay) <= 1.0 - alpha);
        let chain = LosMarkov::new(alpha, stay).unwrap();
        prop_assert!(chain.stationarity_residual() < 1e-12);
        for row in chain.p {
            prop_assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn wrap_functions_stay_in_range(x in -1e4f64..1e4, period in 0.1f64..1e3) {
        let d = wrap_delta(x, period);
        prop_assert!(d > -period / 2.0 - 1e-9 && d <= period / 2.0 + 1e-9);
        let c = wrap_coord(x, period);
        prop_assert!((0.0..period).contains(&c));
        // Wrapping is idempotent.
        prop_assert!((wrap_coord(c, period) - c).abs() < 1e-12);
    }

    #[test]
    fn mixture_log_pdf_brackets_components(
        x in -30.0f64..30.0,
        alpha in 0.05f64..0.95,
        nlos_mean in 0.0f64..10.0,
    ) {
        let m = MixtureNoiseModel::new(
            alpha,
            ComponentDistribution::gaussian(0.0, 1.0),
            ComponentDistribution::gaussian(nlos_mean, 5.0),
        ).unwrap();
        let lp = m.log_pdf(x, None);
        let lo = m.log_pdf(x, Some(true)).min(m.log_pdf(x, Some(false)));
        let hi = m.log_pdf(x, Some(true)).max(m.log_pdf(x, Some(false)));
        // The mixture density lies between the component densities.
        prop_assert!(lp <= hi + 1e-12 && lp >= lo - 1e-12);
    }

    #[test]
    fn separation_principle_is_exact(g in 0.01f64..100.0, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..6);
        let agents: Vec<Vec2<f64>> = (0..n)
            .map(|_| Vec2::new(rng.gen::<f64>() * 50.0, rng.gen::<f64>() * 50.0))
            .collect();
        let anchors = vec![Vec2::new(-10.0, -10.0), Vec2::new(60.0, 55.0)];
        let net = StaticNetwork::connect_by_radius(agents, anchors, 1e4, PlaneMetric::Euclidean);
        let unit = fisher_static(&net, 1.0).unwrap();
        let scaled = fisher_static(&net, g).unwrap();
        let diff = (&scaled.matrix - &(&unit.matrix * g)).amax();
        prop_assert!(diff <= 1e-12 * unit.matrix.amax().max(1.0) * g.max(1.0));
    }

    #[test]
    fn schur_complement_matches_full_inverse(seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(4..10usize);
        let trailing = rng.gen_range(1..n - 1);
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let spd = &a * a.transpose() + DMatrix::identity(n, n);
        let s = schur_complement(&spd, trailing).unwrap();
        let lead = n - trailing;
        let full_inv = spd.clone().try_inverse().unwrap();
        let s_inv = s.try_inverse().unwrap();
        let want = full_inv.view((0, 0), (lead, lead)).into_owned();
        prop_assert!((&s_inv - &want).amax() < 1e-9 * want.amax().max(1e-12));
    }

    #[test]
    fn ess_stays_within_one_and_k(seed in 0u64..300, k in 1usize..200) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = FilterConfig {
            particles: k,
            ess_threshold: 1.0,
            distinct_floor: 1,
            reseed_spread_factor: 2.0,
            reseed_spread_min: 1.0,
            sigma_ins: 1.0,
            epoch_period: 0.1,
            vehicle_noise: MixtureNoiseModel::new(
                0.5,
                ComponentDistribution::gaussian(0.0, 1.0),
                ComponentDistribution::gaussian(5.0, 5.0),
            ).unwrap(),
            sat_noise: MixtureNoiseModel::new(
                0.5,
                ComponentDistribution::gaussian(0.0, 10.0),
                ComponentDistribution::gaussian(5.0, 5.0),
            ).unwrap(),
            chain: LosMarkov::new(0.5, 0.5).unwrap(),
            metric: PlaneMetric::Euclidean,
        };
        let mut cloud = init_filter(0, Vec2::new(0.0, 0.0), 1.0, &cfg, &mut rng).unwrap();
        // Random normalized log-weights.
        let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * -20.0).collect();
        let norm = logsumexp(&raw);
        cloud.log_weights = raw.iter().map(|w| w - norm).collect();
        let ess = effective_sample_size(&cloud);
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= k as f64 + 1e-9, "ESS {ess} for k = {k}");
    }
}

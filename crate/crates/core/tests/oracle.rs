use omc_core::oracle::{
    compare_probe, compare_transverse, fraction_within, simulate_bounded, simulate_unbounded,
    OracleConfig,
};
use omc_core::{travel_parameter, ChannelParams, Error, SpacePoint};

fn cfg(n: usize) -> OracleConfig {
    OracleConfig {
        n_particles: n,
        ..OracleConfig::default()
    }
}

#[test]
fn duct_histogram_follows_the_transverse_profile() {
    let params = ChannelParams::table1_bounded();
    let r = travel_parameter(&params, 1.1).unwrap();
    let cloud = simulate_bounded(&params, &cfg(200_000), r).unwrap();
    assert!(cloud.all_inside_walls());
    let bins = compare_transverse(&cloud, r, 20).unwrap();
    let total: f64 = bins.iter().map(|b| b.analytic).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(fraction_within(&bins) >= 0.95, "{bins:#?}");
}

#[test]
fn late_duct_ensemble_is_nearly_uniform() {
    let params = ChannelParams::table1_bounded();
    let r = omc_core::TravelParameter::new(0.05).unwrap();
    let cloud = simulate_bounded(&params, &cfg(100_000), r).unwrap();
    let bins = compare_transverse(&cloud, r, 10).unwrap();
    for b in &bins {
        assert!((b.analytic - 0.1).abs() < 0.02);
    }
    assert!(fraction_within(&bins) >= 0.9);
}

#[test]
fn open_air_cloud_matches_the_puff_at_matched_points() {
    let params = ChannelParams::table1_unbounded();
    for t in [0.15, 0.22, 0.35] {
        let cloud = simulate_unbounded(&params, &cfg(300_000), t).unwrap();
        let probe = SpacePoint::new(params.flow_speed * t, 0.0, 0.0);
        let cmp = compare_probe(&cloud, probe, 0.03).unwrap();
        assert!(cmp.within_band, "t = {t}: {cmp:?}");
        assert!(cmp.analytic > 0.0);
    }
}

#[test]
fn open_air_cloud_is_centred_on_the_advected_release() {
    let params = ChannelParams::table1_unbounded();
    let t = 0.22;
    let cloud = simulate_unbounded(&params, &cfg(100_000), t).unwrap();
    let m = cloud.mean_position();
    let sigma = (2.0 * params.diffusivity * t).sqrt();
    assert!((m[0] - params.flow_speed * t).abs() < 4.0 * sigma / (1e5f64).sqrt());
    assert!(m[1].abs() < 4.0 * sigma / (1e5f64).sqrt());
    // the ground plane pushes the vertical mean upward
    assert!(m[2] > 0.0);
    assert!(cloud.positions().all(|p| p[2] >= -0.125));
}

#[test]
fn lanes_make_results_independent_of_thread_count() {
    let params = ChannelParams::table1_bounded();
    let r = travel_parameter(&params, 0.5).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                simulate_bounded(&params, &cfg(20_000), r)
                    .unwrap()
                    .positions()
                    .collect::<Vec<_>>()
            })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn pure_advection_moves_every_particle_exactly() {
    let mut params = ChannelParams::table1_unbounded();
    params.diffusivity = 0.0;
    let cloud = simulate_unbounded(&params, &cfg(10_000), 0.22).unwrap();
    assert!(cloud.is_pure_advection());
    assert!(cloud.positions().all(|p| p == [1.1, 0.0, 0.0]));
}

#[test]
fn coarse_steps_in_a_narrow_duct_are_refused() {
    let mut params = ChannelParams::table1_bounded();
    params.diffusivity = 5.0;
    let c = OracleConfig {
        dt: 1e-2,
        ..cfg(10_000)
    };
    let r = travel_parameter(&params, 1.1).unwrap();
    assert!(matches!(
        simulate_bounded(&params, &c, r),
        Err(Error::InvalidParameter { .. })
    ));
}

mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;

use common::{band_scenario, north_wind};
use sensoralloc::aopt::{
    anneal_layout, isotropic_prior_factor, linear_gaussian_risk, posterior, posterior_identity_residual, posterior_precision,
    risk_over_winds, wind_samples,
};
use sensoralloc::linalg::Mat;
use sensoralloc::plume::forward_matrix;
use sensoralloc::{AnnealConfig, SensorLayout, WindVector};

fn small_anneal() -> AnnealConfig {
    AnnealConfig { iterations: 150, restarts: 3, mc_wind_samples: 8, ..AnnealConfig::default() }
}

#[test]
fn scalar_risk_matches_closed_form() {
    // one source, one sensor: Γ = 1/(a²/σ² + 1/s²); risk = Γ²/s² + Γ² a²/σ² = Γ
    let f = Mat::from_row_major(1, 1, vec![0.7]).unwrap();
    let (sigma, s) = (0.2f64, 3.0f64);
    let gamma = 1.0 / (0.49 / (sigma * sigma) + 1.0 / (s * s));
    let risk = linear_gaussian_risk(&f, sigma, &isotropic_prior_factor(1, s)).unwrap();
    assert_relative_eq!(risk, gamma, max_relative = 1e-13);
}

#[test]
fn posterior_satisfies_its_identity() {
    let sc = band_scenario(0.1);
    let wind = WindVector::new([0.2, -1.4]).unwrap();
    let layout = SensorLayout::new(vec![[-4.0, -3.0], [1.0, -5.0]]).unwrap();
    let p = posterior(&sc, &wind, &layout, Some(&[0.5, 1.5])).unwrap();
    let f = forward_matrix(&sc, &wind, &layout).unwrap();
    let precision = posterior_precision(&f, 0.1, &isotropic_prior_factor(3, 3.0));
    assert!(posterior_identity_residual(&p.gamma_post, &precision, &sc.prior_mean) <= 1e-8);
    assert!(p.mu_post.is_some());
    assert!(posterior(&sc, &wind, &layout, Some(&[0.5])).is_err());
}

#[test]
fn data_never_increases_posterior_variance() {
    let sc = band_scenario(0.1);
    let layout = SensorLayout::new(vec![[-4.0, -3.0], [1.0, -5.0], [6.0, -1.0]]).unwrap();
    for wind in wind_samples(&north_wind(), 6, 2).unwrap() {
        let p = posterior(&sc, &wind, &layout, None).unwrap();
        let gap = Mat::identity(3).scale(9.0).add(&p.gamma_post.scale(-1.0));
        assert!(gap.symmetric_eigenvalues().iter().all(|&e| e >= -1e-8));
        assert!(p.gamma_post.asymmetry() <= 1e-12);
    }
}

#[test]
fn annealing_never_ends_above_its_starts() {
    let sc = band_scenario(0.1);
    let res = anneal_layout(&sc, &north_wind(), 3, &small_anneal(), 5).unwrap();
    assert_eq!(res.start_risks.len(), 3);
    assert!(res.start_risks.iter().all(|&r| res.risk <= r));
    assert!(sc.layout_feasible(&res.layout));
    assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    let winds = wind_samples(&north_wind(), 8, 5).unwrap();
    assert_relative_eq!(risk_over_winds(&sc, &winds, &res.layout).unwrap(), res.risk, max_relative = 1e-12);
}

#[test]
fn annealing_is_reproducible() {
    let sc = band_scenario(0.1);
    let a = anneal_layout(&sc, &north_wind(), 2, &small_anneal(), 1).unwrap();
    let b = anneal_layout(&sc, &north_wind(), 2, &small_anneal(), 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bad_configs_are_rejected() {
    let sc = band_scenario(0.1);
    assert!(anneal_layout(&sc, &north_wind(), 0, &small_anneal(), 0).is_err());
    let hot = AnnealConfig { cooling: 1.0, ..small_anneal() };
    assert!(anneal_layout(&sc, &north_wind(), 2, &hot, 0).is_err());
}

fn sensor() -> impl Strategy<Value = [f64; 2]> {
    (-15.0f64..15.0, -15.0f64..0.0).prop_map(|(x, y)| [x, y])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_ignores_sensor_order(pts in prop::collection::vec(sensor(), 2..5), rot in 1usize..4) {
        let sc = band_scenario(0.1);
        let winds = wind_samples(&north_wind(), 4, 0).unwrap();
        let mut shuffled = pts.clone();
        shuffled.rotate_left(rot % pts.len());
        let a = risk_over_winds(&sc, &winds, &SensorLayout::new(pts).unwrap()).unwrap();
        let b = risk_over_winds(&sc, &winds, &SensorLayout::new(shuffled).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn another_sensor_never_raises_risk(pts in prop::collection::vec(sensor(), 1..4), extra in sensor()) {
        let sc = band_scenario(0.1);
        let winds = wind_samples(&north_wind(), 4, 0).unwrap();
        let before = risk_over_winds(&sc, &winds, &SensorLayout::new(pts.clone()).unwrap()).unwrap();
        let mut more = pts;
        more.push(extra);
        let after = risk_over_winds(&sc, &winds, &SensorLayout::new(more).unwrap()).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-10));
    }

    #[test]
    fn risk_is_bounded_by_the_prior(pts in prop::collection::vec(sensor(), 1..4)) {
        let sc = band_scenario(0.1);
        let winds = wind_samples(&north_wind(), 4, 0).unwrap();
        let risk = risk_over_winds(&sc, &winds, &SensorLayout::new(pts).unwrap()).unwrap();
        // N_p σ_Pr² with no data
        prop_assert!(risk > 0.0 && risk <= 27.0 * (1.0 + 1e-12));
    }
}

#![allow(dead_code)]

use sensoralloc::{Scenario, SourceSpec, WindModel};

pub fn source(x: f64, y: f64, h: f64) -> SourceSpec {
    SourceSpec::new([x, y], h).unwrap()
}

/// Three sources north of a sensor band, wind blowing toward −y.
pub fn band_scenario(noise_sigma: f64) -> Scenario {
    let sc = Scenario {
        sources: vec![source(-4.0, 6.0, 1.0), source(0.0, 4.0, 0.5), source(5.0, 7.0, 1.0)],
        diffusivity: 1.0,
        noise_sigma,
        domain_lo: [-20.0, -20.0],
        domain_hi: [20.0, 20.0],
        sensor_lo: [-15.0, -15.0],
        sensor_hi: [15.0, 0.0],
        prior_mean: vec![8.0, 10.0, 9.0],
        prior_sigma: 3.0,
        elastic_l2: 0.01,
        elastic_l1: 0.01,
        wind_speed_factor: true,
    };
    sc.validate().unwrap();
    sc
}

pub fn north_wind() -> WindModel {
    WindModel::new((1.0, 2.0), (-0.5, 0.5)).unwrap()
}

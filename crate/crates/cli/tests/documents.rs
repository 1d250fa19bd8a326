use proptest::prelude::*;

use sensoralloc_cli::config::config_preset;
use sensoralloc_cli::scenario::{preset, BoxSection, ElasticSection, PriorMean, PriorSection, SourceEntry, WindSection};
use sensoralloc_cli::{parse_scenario, CliError, RunConfig, ScenarioError, ScenarioFile};

const SMALL: &str = r#"
diffusivity = 0.5
noise_sigma = 0.1
kernel_wind_speed_factor = true

[prior]
mean = 4.0
sigma = 2.0

[elastic]
l1 = 0.01
l2 = 0.02

[domain]
lo = [-10.0, -10.0]
hi = [10.0, 10.0]

[wind]
speed = [1.0, 2.0]
direction_deg = [-90.0, 90.0]

[[sources]]
x = 1.0
y = 2.0
height = 0.5
"#;

#[test]
fn minimal_document_converts() {
    let (sc, wind) = parse_scenario(SMALL).unwrap();
    assert_eq!(sc.prior_mean, vec![4.0]);
    assert_eq!(sc.sensor_lo, [-10.0, -10.0]);
    assert_eq!(sc.elastic_l1, 0.01);
    assert_eq!(sc.elastic_l2, 0.02);
    assert!((wind.dir_hi - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
}

#[test]
fn missing_field_is_named() {
    let text = SMALL.replace("noise_sigma = 0.1\n", "");
    let err = ScenarioFile::parse(&text).unwrap_err();
    assert!(matches!(err, ScenarioError::Syntax(_)));
    assert!(err.to_string().contains("noise_sigma"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let text = SMALL.replace("diffusivity = 0.5", "diffusivity = 0.5\nturbulence = 3");
    let err = ScenarioFile::parse(&text).unwrap_err();
    assert!(err.to_string().contains("turbulence"), "{err}");
}

#[test]
fn constraint_violations_are_reported() {
    for (from, to) in [
        ("x = 1.0", "x = 11.0"),
        ("diffusivity = 0.5", "diffusivity = 0.0"),
        ("mean = 4.0", "mean = [4.0, 5.0]"),
        ("speed = [1.0, 2.0]", "speed = [2.0, 1.0]"),
        ("l2 = 0.02", "l2 = 0.0"),
    ] {
        let err = parse_scenario(&SMALL.replace(from, to)).unwrap_err();
        assert!(matches!(err, ScenarioError::Constraint(_)), "{from} -> {to}: {err}");
        assert_eq!(CliError::from(err).exit_code(), 2);
    }
}

#[test]
fn example2_preset_contents() {
    let file = ScenarioFile::parse(preset("example2.scenario").unwrap()).unwrap();
    let locations: Vec<(f64, f64)> = file.sources.iter().map(|s| (s.x, s.y)).collect();
    assert_eq!(
        locations,
        vec![(-15.0, 17.0), (-10.0, -5.0), (-9.0, 22.0), (-5.0, 10.0), (5.0, 18.0), (5.0, 0.0), (8.0, -10.0), (10.0, 19.0), (15.0, -10.0), (20.0, 5.0)]
    );
    assert_eq!(file.prior.mean, PriorMean::PerSource(vec![8.0, 10.0, 9.0, 8.0, 10.0, 9.0, 8.0, 10.0, 9.0, 10.0]));
    assert_eq!(file.prior.sigma, 20.0);
    assert_eq!(file.noise_sigma, 0.01);
    assert_eq!((file.elastic.l1, file.elastic.l2), (0.01, 0.01));
    let (sc, wind) = file.to_domain().unwrap();
    assert_eq!(sc.num_sources(), 10);
    assert_eq!((wind.speed_lo, wind.speed_hi), (1.0, 2.0));
    assert!((wind.dir_hi - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
}

#[test]
fn every_preset_parses_and_has_settings() {
    for name in ["example1", "example2", "validation20"] {
        parse_scenario(preset(name).unwrap()).unwrap();
        RunConfig::parse(config_preset(name).unwrap()).unwrap();
    }
    assert!(preset("nope").is_none());
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(RunConfig::parse("sensors = 2\nbogus = 1\n").is_err());
    assert!(RunConfig::parse("[outer]\nschedule = \"sometimes\"\n").is_err());
    let cfg = RunConfig::parse("").unwrap();
    assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
}

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

fn document() -> impl Strategy<Value = ScenarioFile> {
    let sources = prop::collection::vec((finite(-9.0, 9.0), finite(-9.0, 9.0), finite(0.0, 3.0)), 1..6);
    (sources, finite(0.01, 5.0), finite(0.0, 1.0), any::<bool>(), finite(0.0, 20.0), finite(0.0, 10.0), any::<bool>(), any::<bool>()).prop_map(
        |(src, k, noise, factor, mean, sigma, shared, boxed)| {
            let n = src.len();
            ScenarioFile {
                diffusivity: k,
                noise_sigma: noise,
                kernel_wind_speed_factor: factor,
                prior: PriorSection {
                    mean: if shared { PriorMean::Shared(mean) } else { PriorMean::PerSource((0..n).map(|j| mean + j as f64).collect()) },
                    sigma,
                },
                elastic: ElasticSection { l1: 0.01, l2: 0.5 * k },
                domain: BoxSection { lo: [-10.0, -10.0], hi: [10.0, 10.0] },
                sensor_box: boxed.then_some(BoxSection { lo: [-10.0, -10.0], hi: [10.0, -1.0] }),
                wind: WindSection { speed: [1.0, 1.0 + k], direction_deg: [-mean, mean] },
                sources: src.into_iter().map(|(x, y, height)| SourceEntry { x, y, height }).collect(),
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_round_trips(doc in document()) {
        let text = doc.to_toml();
        let back = ScenarioFile::parse(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.hash(), doc.hash());
        prop_assert!(doc.to_domain().is_ok());
    }
}

//! Every bundled fixture parses, validates, and survives a byte-exact
//! round trip; tabular writers agree with independent oracles.

mod common;

use std::path::{Path, PathBuf};

use copula_forge::bernstein::{bernstein_density_eval, delta_tensor};
use copula_forge::copula::{BernsteinCopula, CopulaModel};
use copula_forge::io::{
    load_ranks, load_skeleton, render_report_json, save_skeleton, write_density_grid,
    write_samples_csv, RankInput,
};
use copula_forge::risk::{self, MarginalModel, PortfolioSpec};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn all_bundled_fixtures_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let loaded = load_skeleton(&path).unwrap();
                // Exact fixtures must be admissible; rounded ones close.
                if loaded.file.rounded {
                    assert!(loaded.admissibility.max_deviation < 1e-3, "{path:?}");
                } else {
                    assert!(loaded.admissibility.admissible, "{path:?}");
                }
            }
            Some("csv") => {
                load_ranks(&path, RankInput::Ranks).unwrap();
            }
            other => panic!("unexpected fixture type {other:?} at {path:?}"),
        }
        seen += 1;
    }
    assert!(seen >= 5, "expected the bundled fixtures, found {seen}");
}

#[test]
fn rank_fixtures_have_the_documented_shape() {
    let demo = load_ranks(&fixture("demo_ranks_n5.csv"), RankInput::Ranks).unwrap();
    assert_eq!(demo.ranks.dimension(), 2);
    assert_eq!(demo.ranks.observations(), 5);

    let windstorm =
        load_ranks(&fixture("windstorm_flooding_ranks.csv"), RankInput::Ranks).unwrap();
    assert_eq!(windstorm.names, ["windstorm", "flooding"]);
    assert_eq!(windstorm.ranks.dimension(), 2);
    assert_eq!(windstorm.ranks.observations(), 34);
    // Observation 19 (1-based) carries the smallest flooding loss.
    assert_eq!(windstorm.ranks.rank(1, 18), 1);
    assert_eq!(windstorm.ranks.rank(0, 18), 19);
}

#[test]
fn skeleton_fixtures_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "demo_grid3x4.skeleton.json",
        "windstorm_flooding_grid10.skeleton.json",
        "windstorm_flooding_leastsq_grid10.skeleton.json",
    ] {
        let path = fixture(name);
        let loaded = load_skeleton(&path).unwrap();
        let copy = dir.path().join(name);
        save_skeleton(&loaded.file, &copy).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&copy).unwrap(),
            "{name} did not round-trip"
        );
    }
}

#[test]
fn rounded_fixture_is_admissible_up_to_its_rounding() {
    let loaded =
        load_skeleton(&fixture("windstorm_flooding_leastsq_grid10.skeleton.json")).unwrap();
    assert!(loaded.file.rounded);
    assert!(!loaded.admissibility.admissible);
    // Four-decimal masses: each of the ten marginal levels can be off by
    // at most a few rounding units.
    assert!(loaded.admissibility.max_deviation <= 5e-4);
    // The counts carry the rounding excess over the nominal denominator.
    assert_eq!(loaded.file.skeleton.total_count(), 10_005);
    assert_eq!(loaded.file.skeleton.denominator(), 10_000);
}

#[test]
fn density_grid_matches_the_tensor_evaluation_oracle() {
    let loaded = load_skeleton(&fixture("windstorm_flooding_grid10.skeleton.json")).unwrap();
    let skeleton = loaded.file.skeleton.clone();
    let copula = BernsteinCopula::new(loaded.file.skeleton).unwrap();
    let model = CopulaModel::Bernstein(copula);

    let resolution = 101usize;
    let mut out = Vec::new();
    write_density_grid(&mut out, &model, resolution).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "u1,u2,density");

    // Independent route: dense delta tensor of the rescaled CDF through
    // the generic mixture evaluator.
    let coefficients = delta_tensor(|x| skeleton.rescaled_cdf(x), skeleton.grid());

    let mut rows = 0usize;
    let mut file_max = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut oracle_max = (f64::NEG_INFINITY, 0.0, 0.0);
    for line in lines {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let (x, y, value) = (fields[0], fields[1], fields[2]);
        assert!(value.is_finite() && value >= 0.0);
        let oracle = bernstein_density_eval(&coefficients, &[x, y]).unwrap();
        assert!(
            (value - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
            "at ({x}, {y}): file {value} vs oracle {oracle}"
        );
        if value > file_max.0 {
            file_max = (value, x, y);
        }
        if oracle > oracle_max.0 {
            oracle_max = (oracle, x, y);
        }
        rows += 1;
    }
    assert_eq!(rows, resolution * resolution);
    assert_eq!((file_max.1, file_max.2), (oracle_max.1, oracle_max.2));
}

#[test]
fn sample_csv_reparses_to_the_exact_floats() {
    let loaded = load_skeleton(&fixture("demo_grid3x4.skeleton.json")).unwrap();
    let model = CopulaModel::Bernstein(BernsteinCopula::new(loaded.file.skeleton).unwrap());
    let batch = model.sample(257, 11).unwrap();
    let mut out = Vec::new();
    write_samples_csv(&mut out, &batch).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut rows = text.lines().skip(1);
    for original in batch.rows() {
        let line = rows.next().unwrap();
        let parsed: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(parsed, original, "shortest round-trip decimals must reparse exactly");
    }
    assert!(rows.next().is_none());
}

#[test]
fn reports_render_identically_across_runs_and_execution_modes() {
    let loaded = load_skeleton(&fixture("demo_grid3x4.skeleton.json")).unwrap();
    let spec = PortfolioSpec {
        label: "render-twice".into(),
        copula: CopulaModel::Bernstein(BernsteinCopula::new(loaded.file.skeleton).unwrap()),
        marginals: vec![
            MarginalModel::Lognormal { mu: 0.0, sigma: 1.0 },
            MarginalModel::Gamma { shape: 2.0, scale: 0.5 },
        ],
        draws: 4_000,
        seed: 3,
        alpha: 0.01,
        bins: 24,
        bootstrap_resamples: 40,
    };
    let a = render_report_json(&risk::simulate_portfolio(&spec).unwrap());
    let b = render_report_json(&risk::simulate_portfolio(&spec).unwrap());
    let c = render_report_json(&risk::simulate_portfolio_seq(&spec).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
}

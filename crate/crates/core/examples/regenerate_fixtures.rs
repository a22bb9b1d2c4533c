//! Rebuilds the derived fixtures under `fixtures/` from the rank tables
//! checked in next to them. Run after changing skeleton serialization:
//!
//! ```text
//! cargo run -p copula-forge --example regenerate_fixtures
//! ```
//!
//! Output is deterministic, so an unchanged pipeline reproduces the
//! files byte for byte (`git diff` stays empty).

use std::path::Path;

use copula_forge::bernstein::GridSpec;
use copula_forge::io::{
    file_sha256, load_ranks, save_skeleton, Provenance, RankInput, SkeletonFile,
};
use copula_forge::skeleton::{adaptive_pipeline, DiscreteSkeleton, SkeletonPoint};

/// Least-squares reduction of the windstorm/flooding data to a 10x10
/// grid, known only as masses rounded to 4 decimals; stored scaled by
/// 10^4 with the `rounded` flag. Row order: level j = 9 down to 0, as
/// commonly tabulated; each row lists i = 0..9.
const LEASTSQ_BY_DESCENDING_J: [[u64; 10]; 10] = [
    [32, 0, 22, 0, 32, 266, 320, 274, 28, 28],
    [318, 0, 14, 0, 24, 0, 312, 0, 20, 314],
    [0, 0, 0, 0, 0, 0, 0, 204, 251, 545],
    [32, 275, 22, 0, 32, 265, 26, 0, 322, 28],
    [3, 246, 287, 215, 3, 0, 0, 246, 0, 0],
    [34, 278, 24, 246, 34, 0, 29, 0, 324, 30],
    [266, 0, 0, 0, 266, 206, 261, 0, 0, 0],
    [34, 0, 25, 540, 34, 0, 29, 277, 31, 31],
    [252, 201, 0, 0, 546, 0, 0, 0, 0, 0],
    [29, 0, 607, 0, 29, 263, 23, 0, 25, 25],
];

fn reduced_fixture(
    fixtures: &Path,
    ranks_csv: &str,
    grid: Vec<usize>,
    multiplier: u64,
    out: &str,
) {
    let ranks_path = fixtures.join(ranks_csv);
    let loaded = load_ranks(&ranks_path, RankInput::Ranks).expect("fixture rank table");
    let grid = GridSpec::new(grid).unwrap();
    let skeleton =
        adaptive_pipeline(&loaded.ranks, &grid, Some(multiplier)).expect("valid multiplier");
    let file = SkeletonFile {
        skeleton,
        rounded: false,
        provenance: Some(Provenance {
            source: ranks_csv.to_string(),
            ranks_sha256: Some(file_sha256(&ranks_path).unwrap()),
            multiplier: Some(multiplier),
            created: None,
        }),
    };
    save_skeleton(&file, &fixtures.join(out)).expect("write fixture");
    println!("wrote {out}: {} support points", file.skeleton.support_size());
}

fn leastsq_fixture(fixtures: &Path) {
    let mut points = Vec::new();
    for (row, counts) in LEASTSQ_BY_DESCENDING_J.iter().enumerate() {
        let j = 9 - row;
        for (i, &count) in counts.iter().enumerate() {
            if count > 0 {
                points.push(SkeletonPoint { index: vec![i, j], count });
            }
        }
    }
    let skeleton = DiscreteSkeleton::from_parts_rounded(
        GridSpec::new(vec![10, 10]).unwrap(),
        10_000,
        points,
    )
    .expect("well-formed support");
    let file = SkeletonFile {
        skeleton,
        rounded: true,
        provenance: Some(Provenance {
            source: "least-squares 10x10 reduction of windstorm_flooding_ranks.csv".into(),
            ranks_sha256: None,
            multiplier: None,
            created: None,
        }),
    };
    let out = "windstorm_flooding_leastsq_grid10.skeleton.json";
    save_skeleton(&file, &fixtures.join(out)).expect("write fixture");
    println!("wrote {out}: {} support points", file.skeleton.support_size());
}

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    reduced_fixture(
        &fixtures,
        "demo_ranks_n5.csv",
        vec![3, 4],
        12,
        "demo_grid3x4.skeleton.json",
    );
    reduced_fixture(
        &fixtures,
        "windstorm_flooding_ranks.csv",
        vec![10, 10],
        5,
        "windstorm_flooding_grid10.skeleton.json",
    );
    leastsq_fixture(&fixtures);
}

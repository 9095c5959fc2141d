//! The committed demo fixtures under `fixtures/demo` are the deterministic
//! output of the synthetic generator at a frozen seed. `regenerate` rewrites
//! them (run with `--ignored` after changing the generator); the default
//! test verifies the checked-in files still match the generator, and the
//! quickstart test runs the full demo pipeline from the committed config.

use std::path::{Path, PathBuf};

use litfield_core::synthetic::{gen_fixture_corpus, write_fixture_corpus, FixtureSpec};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .and_then(|p| p.parent())
        .expect("workspace root")
        .to_path_buf()
}

fn demo_spec() -> FixtureSpec {
    FixtureSpec {
        seed: 7,
        fields: vec!["Geometry".into(), "Dynamics".into()],
        records_per_field: 60,
        dim: 16,
        invalid_fraction: 0.05,
        start_year: 1998,
        end_year: 2022,
    }
}

#[test]
#[ignore = "rewrites the committed fixtures; run explicitly after generator changes"]
fn regenerate() {
    let root = repo_root();
    let corpus = gen_fixture_corpus(&demo_spec());
    write_fixture_corpus(
        &corpus,
        &root.join("fixtures/demo/payloads"),
        &root.join("fixtures/demo/wordsim.emb"),
    )
    .unwrap();
    println!("centers: {:?}", corpus.centers);
}

#[test]
fn committed_fixtures_match_generator() {
    let root = repo_root();
    let payload_dir = root.join("fixtures/demo/payloads");
    if !payload_dir.is_dir() {
        panic!("fixtures/demo missing; run the ignored `regenerate` test");
    }
    let corpus = gen_fixture_corpus(&demo_spec());
    for (id, json) in &corpus.payloads {
        let committed = std::fs::read_to_string(payload_dir.join(format!("{id}.json")))
            .unwrap_or_else(|e| panic!("fixture {id}: {e}"));
        assert_eq!(&committed, json, "fixture {id} drifted from the generator");
    }
    assert_eq!(corpus.centers["Geometry"], "geometry-0000");
    assert_eq!(corpus.centers["Dynamics"], "dynamics-0000");
}

#[test]
fn demo_quickstart_runs_end_to_end() {
    let root = repo_root();
    let binary = env!("CARGO_BIN_EXE_litfield");
    let out = tempfile::tempdir().unwrap();
    for command in ["ingest", "embed", "expand", "metrics", "fit", "classify", "report"] {
        let output = std::process::Command::new(binary)
            .arg(command)
            .args(["--config"])
            .arg(root.join("configs/demo.toml"))
            .args(["--out"])
            .arg(out.path())
            .output()
            .unwrap();
        assert_eq!(
            output.status.code(),
            Some(0),
            "{command} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        // Evaluate needs fit first; run it with the table flag right after.
        if command == "fit" {
            let output = std::process::Command::new(binary)
                .args(["evaluate", "--table1", "--config"])
                .arg(root.join("configs/demo.toml"))
                .args(["--out"])
                .arg(out.path())
                .output()
                .unwrap();
            assert_eq!(
                output.status.code(),
                Some(0),
                "evaluate failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
        }
    }
    assert!(out.path().join("evaluate/table1.csv").exists());
    assert!(out.path().join("report/fig_effect_sizes.csv").exists());
}

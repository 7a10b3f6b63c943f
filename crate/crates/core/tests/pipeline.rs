use std::fs;
use std::path::Path;

use bclearer::fixture::{generate_fixture, FixtureSpec, CONFIG_FILE};
use bclearer::pipeline::{
    load_config, run_pipeline, verify_workspace, BUnitRegistry, PipelineError, RunOptions, RunReport, Workspace,
};

fn run(dir: &Path, spec: &FixtureSpec, options: &RunOptions) -> RunReport {
    let fixture_dir = dir.join("fixture");
    if !fixture_dir.exists() {
        generate_fixture(spec, &fixture_dir).unwrap();
    }
    let config = load_config(&fixture_dir.join(CONFIG_FILE), &options.registry).unwrap();
    run_pipeline(&config, &Workspace::new(dir.join("ws")), options).unwrap()
}

#[test]
fn fixture_run_passes_every_gate() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(dir.path(), &FixtureSpec::default(), &RunOptions::default());
    for g in report.failed_gates() {
        eprintln!("{}: {:?}", g.name(), g.actions.iter().flat_map(|a| a.failures()).collect::<Vec<_>>());
    }
    assert!(report.passed());
    assert!(report.model.is_some());
    let check = verify_workspace(&Workspace::new(dir.path().join("ws")), None).unwrap();
    assert!(check.passed(), "{check:?}");
}

#[test]
fn reruns_and_parallel_runs_share_the_run_root() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), &FixtureSpec::default(), &RunOptions::default());
    let b = run(dir.path(), &FixtureSpec::default(), &RunOptions::default());
    let c = run(
        dir.path(),
        &FixtureSpec::default(),
        &RunOptions {
            parallel_slices: true,
            registry: BUnitRegistry::standard(),
        },
    );
    assert_eq!(a.run_root, b.run_root);
    assert_eq!(a.run_root, c.run_root);
    assert_eq!(a.run_id, b.run_id);
}

#[test]
fn missing_source_names_the_slice() {
    let dir = tempfile::tempdir().unwrap();
    let fixture_dir = dir.path().join("fixture");
    generate_fixture(&FixtureSpec::default(), &fixture_dir).unwrap();
    fs::remove_file(fixture_dir.join("AAS/postings.csv")).unwrap();
    let config = load_config(&fixture_dir.join(CONFIG_FILE), &BUnitRegistry::standard()).unwrap();
    match run_pipeline(&config, &Workspace::new(dir.path().join("ws")), &RunOptions::default()) {
        Err(PipelineError::MissingSource { slice, pattern }) => {
            assert_eq!(slice, "accounting");
            assert_eq!(pattern, "AAS/postings.csv");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_pair_fixture_runs_without_merges() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        intercompany_pairs: 0,
        ..FixtureSpec::default()
    };
    let report = run(dir.path(), &spec, &RunOptions::default());
    assert!(report.passed());
    let merge = report.bunits.iter().find(|b| b.kind == "identity_merge").unwrap();
    assert_eq!(merge.detail["merged"].as_array().unwrap().len(), 0);
    let dere = report.bunits.iter().find(|b| b.kind == "dere_transform").unwrap();
    assert_eq!(dere.input_graph, dere.output_graph);
    assert!(dere.no_change);
}

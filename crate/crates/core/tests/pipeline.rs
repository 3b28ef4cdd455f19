use std::path::Path;

use brainet::graph::import_json;
use brainet::pipeline::{render_report, run_pipeline, sha256_hex, EstimatorChoice, Manifest, PipelineConfig};
use brainet::synth::{generate_cohort, BlockSpec, InformativeSpec, SynthSpec};
use brainet::{Error, ErrorClass};

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_per_group: 40,
        blocks: vec![
            BlockSpec::uniform(4, 0.8),
            BlockSpec {
                members: 3,
                rho_case: 0.8,
                rho_control: 0.0,
            },
        ],
        informative: vec![InformativeSpec { feature: 0, effect: 1.5 }],
        noise_features: 3,
        missing_rate: 0.03,
        confound: None,
        microgram_features: vec![2],
        seed,
    }
}

fn config_for(dir: &Path, spec: &SynthSpec) -> PipelineConfig {
    generate_cohort(spec).unwrap().write(dir).unwrap();
    let mut cfg = PipelineConfig::demo();
    cfg.paths.input = dir.join("cohort.csv");
    cfg.paths.schema = dir.join("schema.json");
    cfg.paths.output = dir.join("out");
    cfg.attribution.top_n = 5;
    cfg.attribution.background_size = 10;
    cfg.attribution.estimator = EstimatorChoice::Sampled;
    cfg.attribution.n_coalitions = 32;
    cfg.evaluation.bootstrap_iterations = 2;
    cfg.evaluation.hoist_grid_search = true;
    cfg
}

#[test]
fn writes_every_promised_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_for(tmp.path(), &small_spec(1));
    let summary = run_pipeline(&cfg, 2).unwrap();
    let out = &summary.output;
    let mut expected = vec![
        "metrics.csv".to_string(),
        "summary.json".into(),
        "importance_elastic_net_logistic.csv".into(),
        "importance_gradient_boosted_trees.csv".into(),
        "importance_shallow_mlp.csv".into(),
        "pool.json".into(),
        "degree_table.csv".into(),
        "degree_distribution.csv".into(),
        "diff.json".into(),
        "manifest.json".into(),
    ];
    for group in ["combined", "case", "control"] {
        for ext in ["graphml", "dot", "json"] {
            expected.push(format!("graph_{group}.{ext}"));
        }
    }
    for f in &expected {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join("partial").exists());
    // Union of three top-5 sets.
    assert!((5..=15).contains(&summary.pool.len()), "{:?}", summary.pool);
    let pool: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("pool.json")).unwrap()).unwrap();
    for top in pool["per_model_top"].as_array().unwrap() {
        assert_eq!(top["features"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn manifest_checksums_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_for(tmp.path(), &small_spec(2));
    run_pipeline(&cfg, 1).unwrap();
    let out = tmp.path().join("out");
    let manifest = Manifest::load(&out.join("manifest.json")).unwrap();
    for (name, sum) in &manifest.checksums {
        assert_eq!(&sha256_hex(&std::fs::read(out.join(name)).unwrap()), sum, "{name}");
    }
    assert_eq!(manifest.inputs["input"], sha256_hex(&std::fs::read(&cfg.paths.input).unwrap()));
    assert_eq!(manifest.base_seed, cfg.base_seed);
    let staged: usize = manifest.stages.iter().map(|(_, f)| f.len()).sum();
    assert_eq!(staged, manifest.checksums.len());
}

#[test]
fn same_config_same_checksums_any_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_for(tmp.path(), &small_spec(3));
    let a = run_pipeline(&cfg, 1).unwrap().manifest;
    let b = run_pipeline(&cfg, 4).unwrap().manifest;
    assert_eq!(a, b);
}

#[test]
fn seed_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config_for(tmp.path(), &small_spec(4));
    let a = run_pipeline(&cfg, 2).unwrap().manifest;
    cfg.base_seed += 1;
    let b = run_pipeline(&cfg, 2).unwrap().manifest;
    assert_ne!(a.config_sha256, b.config_sha256);
    assert_ne!(a.checksums["metrics.csv"], b.checksums["metrics.csv"]);
    assert_eq!(a.checksums["matrix.csv"], b.checksums["matrix.csv"]);
}

#[test]
fn near_one_alpha_gives_empty_graphs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = small_spec(5);
    spec.blocks = vec![BlockSpec::uniform(3, 0.3)];
    spec.informative = vec![InformativeSpec { feature: 0, effect: 2.0 }];
    spec.microgram_features.clear();
    let mut cfg = config_for(tmp.path(), &spec);
    cfg.graph.alpha = 0.99;
    let summary = run_pipeline(&cfg, 2).unwrap();
    for group in ["combined", "case", "control"] {
        let text = std::fs::read_to_string(summary.output.join(format!("graph_{group}.json"))).unwrap();
        let g = import_json(&text).unwrap();
        assert!(g.edges.is_empty() && g.nodes.is_empty(), "{group}: {g:?}");
        assert!(summary.component_sizes[group].is_empty());
    }
}

#[test]
fn failing_stage_is_named_and_partial_outputs_kept() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config_for(tmp.path(), &small_spec(6));
    // Forty rows per class cannot fill 50 folds.
    cfg.evaluation.folds = 50;
    cfg.evaluation.hoist_grid_search = false;
    let err = run_pipeline(&cfg, 2).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "evaluation"), "{err}");
    assert_eq!(err.class(), ErrorClass::Data);
    let partial = tmp.path().join("out/partial");
    assert!(partial.join("matrix.csv").is_file());
    assert!(!tmp.path().join("out/manifest.json").exists());
}

#[test]
fn report_mentions_every_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_for(tmp.path(), &small_spec(7));
    run_pipeline(&cfg, 2).unwrap();
    let text = render_report(&tmp.path().join("out")).unwrap();
    for kind in ["elastic_net_logistic", "gradient_boosted_trees", "shallow_mlp"] {
        assert!(text.contains(kind), "{kind} missing from report");
    }
    assert!(text.contains("config sha256"));
}

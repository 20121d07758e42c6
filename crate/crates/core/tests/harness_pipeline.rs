// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use concept_circuits::harness::*;
use concept_circuits::lm::TrainConfig;
use concept_circuits::Error;
use sha2::{Digest, Sha256};

fn tiny_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out_dir: out.to_string_lossy().into_owned(),
        workers: 2,
        ..ExperimentConfig::default()
    };
    cfg.data = DataConfig {
        max_concepts: 12,
        resamples: 3,
        test_concepts: 4,
        templates_per_relation: 10,
        bio_people: 5,
        ..DataConfig::default()
    };
    cfg.model = ModelShape {
        n_layers: 1,
        n_heads: 2,
        d_model: 8,
        d_mlp: 16,
        context_len: 32,
    };
    let stage = |seed| TrainConfig {
        lr: 1e-2,
        batch_size: 8,
        steps: 4,
        checkpoint_every: 2,
        seed,
        probe_size: 4,
        ..TrainConfig::default()
    };
    cfg.stage1 = stage(1);
    cfg.stage2 = stage(2);
    cfg.analysis.k = 3;
    cfg.interference.targets = 4;
    cfg
}

/// Independent walk of the output directory.
fn scan(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                out.insert(rel, hex::encode(digest));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn default_config_is_valid_and_round_trips() {
    let cfg = ExperimentConfig::default();
    assert_eq!(validate_config(&cfg), vec![]);
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    // Every field has a default: an empty document is the default config.
    assert_eq!(ExperimentConfig::from_toml("").unwrap(), cfg);
    let partial = ExperimentConfig::from_toml("[circuit]\nthreshold = 0.8\n").unwrap();
    assert_eq!(partial.circuit.extract.threshold, 0.8);
    assert_eq!(partial.circuit.extract.m, cfg.circuit.extract.m);
    assert!(ExperimentConfig::from_toml("[model]\nn_layers = \"four\"\n").is_err());
}

#[test]
fn validation_examples() {
    let mut cfg = ExperimentConfig::default();
    cfg.analysis.k = 100;
    cfg.data.max_concepts = 50;
    let v = validate_config(&cfg);
    assert!(
        v.iter()
            .any(|x| x.fields.contains(&"analysis.k".to_string()) && x.fields.contains(&"data.max_concepts".to_string())),
        "{v:?}"
    );

    let mut cfg = ExperimentConfig::default();
    cfg.circuit.extract.threshold = 1.5;
    let v = validate_config(&cfg);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].fields, vec!["circuit.threshold"]);

    let mut cfg = ExperimentConfig::default();
    cfg.model.n_heads = 3;
    cfg.stage2.lr = -1.0;
    cfg.interference.groups = vec!["close".into()];
    cfg.data.test_template_fraction = 0.0;
    let fields: Vec<String> = validate_config(&cfg).into_iter().flat_map(|v| v.fields).collect();
    for f in ["model.n_heads", "stage2.lr", "interference.groups", "data.test_template_fraction"] {
        assert!(fields.contains(&f.to_string()), "{f} missing from {fields:?}");
    }
}

#[test]
fn identity_training_gives_zero_degrees() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.stage1.steps = 0;
    cfg.stage2.steps = 0;
    run_pipeline(&cfg).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("degrees.csv")).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[3].parse::<f64>().unwrap(), 0.0);
        n += 1;
    }
    // learning and forgetting, logit and logprob, four concepts
    assert_eq!(n, 16);
    let s: RunSummary = serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(s.mean_learning_logit, Some(0.0));
    assert_eq!(s.mean_forgetting_logit, Some(0.0));
}

#[test]
fn manifest_lists_every_file_and_replays_identically() {
    let a = tempfile::tempdir().unwrap();
    let cfg = tiny_config(a.path());
    let manifest = run_pipeline(&cfg).unwrap();
    let mut on_disk = scan(a.path());
    on_disk.remove(MANIFEST_FILE);
    assert_eq!(manifest.files, on_disk);
    for required in ["config.toml", "metrics.csv", "degrees.csv", "correlations.csv", "trajectories.csv", "summary.json"] {
        assert!(manifest.files.contains_key(required), "{required}");
    }
    assert!(manifest.files.keys().any(|k| k.starts_with("checkpoints/") && k.ends_with(".ckpt")));
    assert!(manifest.files.keys().any(|k| k.starts_with("circuits/pi1/")));
    assert_eq!(RunManifest::load(&a.path().join(MANIFEST_FILE)).unwrap(), manifest);

    // Replay from the config stored in the manifest into another directory.
    let b = tempfile::tempdir().unwrap();
    let mut replay = manifest.config.clone();
    replay.out_dir = b.path().to_string_lossy().into_owned();
    let second = run_pipeline(&replay).unwrap();
    let strip = |m: &BTreeMap<String, String>| {
        let mut m = m.clone();
        m.remove(CONFIG_FILE);
        m
    };
    assert_eq!(strip(&manifest.files), strip(&second.files));
    // The stored config differs only in `out_dir`.
    let back = ExperimentConfig::load(&b.path().join(CONFIG_FILE)).unwrap();
    assert_eq!(back, replay);
}

#[test]
fn failing_step_is_named_and_keeps_finished_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let manifest = run_pipeline(&cfg).unwrap();

    let mut broken = cfg.clone();
    broken.data.kb_path = dir.path().join("missing.tsv").to_string_lossy().into_owned();
    match run_pipeline(&broken) {
        Err(Error::Step { step, .. }) => assert_eq!(step, "gen-data"),
        other => panic!("expected a step error, got {other:?}"),
    }
    let after = scan(dir.path());
    for (path, digest) in &manifest.files {
        if path.starts_with("checkpoints/") || path.starts_with("circuits/") {
            assert_eq!(after.get(path), Some(digest), "{path} changed");
        }
    }

    let mut short = tiny_config(&dir.path().join("short"));
    short.model.context_len = 4;
    match run_pipeline(&short) {
        Err(Error::Step { step, source }) => {
            assert_eq!(step, "gen-data");
            assert!(source.to_string().contains("context_len"));
        }
        other => panic!("expected a step error, got {other:?}"),
    }
    assert!(dir.path().join("short").join(CONFIG_FILE).exists());

    let mut invalid = tiny_config(&dir.path().join("invalid"));
    invalid.circuit.extract.threshold = 2.0;
    assert!(matches!(run_pipeline(&invalid), Err(Error::Config(_))));
}

#[test]
fn prepared_data_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = prepare_data(&cfg.data, &cfg.seeds, cfg.model.context_len).unwrap();
    data.save(dir.path()).unwrap();
    assert_eq!(PreparedData::load(dir.path()).unwrap(), data);
    assert_eq!(data.kb.concepts.len(), 12);
    assert_eq!(data.kb.test_concepts(), data.dataset.test_concepts);
    assert_eq!(data.dataset.train.len(), 3 * data.kb.triples.len());
}

#[test]
fn subset_keeps_prefix_concepts() {
    let kb = load_kb(&DataConfig {
        max_concepts: 0,
        ..DataConfig::default()
    })
    .unwrap();
    let sub = subset_concepts(&kb, 10);
    assert_eq!(sub.concepts.len(), 10);
    assert_eq!(sub.triples.len(), kb.triples.iter().filter(|t| t.subject < 10).count());
    assert!(sub.triples.iter().enumerate().all(|(i, t)| t.id == i && t.subject < 10));
}

#[test]
fn interference_suite_covers_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.analysis.seeds = vec![0, 5];
    cfg.interference.train.steps = 2;
    cfg.interference.train.batch_size = 4;
    let data = prepare_data(&cfg.data, &cfg.seeds, cfg.model.context_len).unwrap();
    let rows = run_interference_suite(&cfg, &data).unwrap();
    assert_eq!(rows.len(), 2 * 4 * 3);
    let means = group_means(&rows);
    assert_eq!(means.len(), 6);
    assert!(means.iter().all(|m| m.n == 4 && m.mean_prob > 0.0 && m.mean_prob < 1.0));
    assert_eq!(run_interference_suite(&cfg, &data).unwrap(), rows);
}

//! Full pipeline on a miniature configuration: every stage runs, artifacts
//! land where the layout says, and reruns refuse to overwrite.

use std::path::Path;

use earmark_cli::config::{ExperimentConfig, Head, TrainSettings};
use earmark_cli::run::{
    cmd_attribute, cmd_evaluate, cmd_report, cmd_sweep, cmd_synth, cmd_train, RunPaths,
};
use earmark_core::error::Error;
use earmark_core::scenegen::dataset::SplitSizes;

fn smoke_config(seed: u64, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(seed);
    cfg.out_dir = out.to_path_buf();
    cfg.dataset.split_sizes = SplitSizes { train: 48, val: 8, test: 8 };
    cfg.train = TrainSettings { epochs: 40, patience: 40, lr: 1e-3, batch_size: 8 };
    cfg.attribution.steps = 4;
    cfg
}

#[test]
fn full_pipeline_produces_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = smoke_config(17, &tmp.path().join("run"));
    let run = RunPaths::new(cfg.out_dir.clone());

    let manifest = cmd_synth(&cfg, &run).unwrap();
    assert_eq!(manifest.split("train").unwrap().clips.len(), 48);
    assert_eq!(manifest.split("test").unwrap().clips.len(), 8);
    assert!(run.config().exists());
    assert!(run.dataset().join("manifest.json").exists());
    // Runs are append-only.
    let err = cmd_synth(&cfg, &run).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)), "got {err:?}");

    for head in Head::all() {
        cmd_train(&cfg, &run, head).unwrap();
        assert!(run.checkpoint(head).exists());
        assert!(run.train_log(head).exists());
    }
    // Clip and fw-ws share objective and seed: identical parameter bytes.
    let clip_bytes = std::fs::read(run.checkpoint(Head::Clip)).unwrap();
    let fw_ws_bytes = std::fs::read(run.checkpoint(Head::FwWs)).unwrap();
    assert_eq!(clip_bytes, fw_ws_bytes);
    let err = cmd_train(&cfg, &run, Head::Clip).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));

    let logs = cmd_attribute(&cfg, &run, &cfg.attribution.methods, cfg.attribution.steps).unwrap();
    assert_eq!(logs.len(), 6); // 3 methods x 2 splits
    // The baselines dump one map per ground-truth (clip, class) instance.
    let test_instances: usize = {
        let anns = earmark_core::scenegen::dataset::load_annotations(&run.dataset()).unwrap();
        let test_ids: std::collections::HashSet<_> = manifest
            .split("test")
            .unwrap()
            .clips
            .iter()
            .map(|c| c.clip_id.clone())
            .collect();
        let mut pairs = std::collections::HashSet::new();
        for a in anns.iter().filter(|a| test_ids.contains(&a.clip_id)) {
            pairs.insert((a.clip_id.clone(), a.class_id));
        }
        pairs.len()
    };
    for log in &logs {
        if log.split == "test" && log.method != earmark_core::attrib::Method::Ig {
            assert_eq!(log.n_dumps, test_instances, "{:?}", log.method);
        }
        if log.method == earmark_core::attrib::Method::Ig {
            assert_eq!(log.steps, 4);
        }
    }
    let err =
        cmd_attribute(&cfg, &run, &cfg.attribution.methods, cfg.attribution.steps).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));

    let chosen = cmd_sweep(&cfg, &run).unwrap();
    assert_eq!(chosen.len(), 5);
    assert!(chosen.values().all(|t| (1..=99).contains(t)));
    let sweep = std::fs::read_to_string(run.sweep_csv()).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 99 * 5);
    assert!(cmd_sweep(&cfg, &run).is_err());

    let report = cmd_evaluate(&cfg, &run, None).unwrap();
    assert_eq!(report.summary.len(), 5);
    for s in &report.summary {
        assert_eq!(Some(&s.tau), chosen.get(s.method.as_str()));
        assert!(s.macro_iou.is_finite());
    }
    assert!(run.detection_csv().exists());
    assert!(run.classification_csv().exists());
    assert!(run.report_json().exists());
    assert!(cmd_evaluate(&cfg, &run, None).is_err());

    let text = cmd_report(&run).unwrap();
    assert!(text.contains("Temporal detection"));
    assert!(text.contains("fw-ss"));
    assert!(text.contains("macro F1"));
}

#[test]
fn stages_demand_their_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = smoke_config(3, &tmp.path().join("empty"));
    let run = RunPaths::new(cfg.out_dir.clone());

    // Training without a dataset points at synth; exit code class is data.
    let err = cmd_train(&cfg, &run, Head::Clip).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("synth"), "{err}");

    let err = cmd_attribute(&cfg, &run, &cfg.attribution.methods, 8).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    let err = cmd_report(&run).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("evaluate"), "{err}");
}

#[test]
fn evaluate_requires_sweep_when_validation_optimal() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke_config(5, &tmp.path().join("run"));
    cfg.dataset.split_sizes = SplitSizes { train: 6, val: 3, test: 3 };
    cfg.train = TrainSettings { epochs: 1, patience: 1, lr: 1e-3, batch_size: 8 };
    let run = RunPaths::new(cfg.out_dir.clone());
    cmd_synth(&cfg, &run).unwrap();
    for head in Head::all() {
        cmd_train(&cfg, &run, head).unwrap();
    }
    cmd_attribute(&cfg, &run, &cfg.attribution.methods, 2).unwrap();
    let err = cmd_evaluate(&cfg, &run, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("sweep"), "{err}");
}

use polypscan::eval::manifest::load_manifest;
use polypscan::eval::report::write_reports;
use polypscan::eval::{evaluate, EvaluateOptions};
use polypscan::exec::Execution;
use polypscan::params::StudyParam;
use polypscan::synth::{generate_dataset, manifest_path, DatasetCounts};
use polypscan::{Label, PipelineParams};

fn small() -> DatasetCounts {
    DatasetCounts {
        sequences: 4,
        frames_per_sequence: 3,
        normals: 12,
    }
}

#[test]
fn counts_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let counts = DatasetCounts {
        sequences: 16,
        frames_per_sequence: 10,
        normals: 400,
    };
    let records = generate_dataset(counts, 64, 9, dir.path(), Execution::Parallel).unwrap();
    let polyps = records.iter().filter(|r| r.label == Label::Polyp).count();
    assert_eq!((polyps, records.len() - polyps), (160, 400));
    let sequences: std::collections::BTreeSet<_> = records.iter().filter_map(|r| r.sequence.clone()).collect();
    assert_eq!(sequences.len(), 16);
    assert_eq!(load_manifest(manifest_path(dir.path())).unwrap(), records);
}

#[test]
fn generation_is_deterministic_across_execution_modes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = generate_dataset(small(), 128, 5, a.path(), Execution::Sequential).unwrap();
    let rb = generate_dataset(small(), 128, 5, b.path(), Execution::Parallel).unwrap();
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x.frame_id, y.frame_id);
        assert_eq!(std::fs::read(&x.path).unwrap(), std::fs::read(&y.path).unwrap());
    }
    let manifest = |d: &std::path::Path| std::fs::read_to_string(manifest_path(d)).unwrap();
    assert_eq!(manifest(a.path()), manifest(b.path()));
}

#[test]
fn evaluation_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let records = generate_dataset(small(), 256, 17, &dir.path().join("data"), Execution::Parallel).unwrap();
    let mut opts = EvaluateOptions::new("1", 90.0);
    opts.study = vec![StudyParam::Sigma2, StudyParam::EMax];
    let params = PipelineParams::default();
    let (report, run) = evaluate(&records, &params, &opts).unwrap();
    assert_eq!(run.scores.len(), records.len());
    assert_eq!(report.sequences.len(), 4);
    let study = report.sensitivity.as_ref().unwrap();
    assert_eq!(study.rows.len(), 2);
    assert_eq!(study.base, report.overall);
    assert!(study.rows.iter().flat_map(|r| [r.delta_spec, r.delta_sens_frame, r.delta_sens_polyp]).flatten().all(|d| d >= 0.0));

    let out = dir.path().join("out");
    write_reports(&report, &out).unwrap();
    for name in ["report.json", "roc_frame.csv", "roc_polyp.csv", "roc.svg"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let csv = std::fs::read_to_string(out.join("roc_frame.csv")).unwrap();
    assert!(csv.starts_with("r_p,fpr,tpr\n1,"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["params_hash"], params.hash());
}

#[test]
fn shuffled_records_give_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let records = generate_dataset(small(), 256, 23, dir.path(), Execution::Parallel).unwrap();
    let opts = EvaluateOptions::new("2", 80.0);
    let params = PipelineParams::default();
    let (a, _) = evaluate(&records, &params, &opts).unwrap();
    let mut shuffled = records.clone();
    shuffled.reverse();
    shuffled.rotate_left(5);
    let (b, _) = evaluate(&shuffled, &params, &opts).unwrap();
    assert_eq!(a.r_p, b.r_p);
    assert_eq!((a.training, a.held_out, a.overall), (b.training, b.held_out, b.overall));
    assert_eq!(a.roc_frame, b.roc_frame);
    assert_eq!(a.roc_polyp, b.roc_polyp);
    assert_eq!(a.per_patient, b.per_patient);
    assert_eq!(a.sequences, b.sequences);
}

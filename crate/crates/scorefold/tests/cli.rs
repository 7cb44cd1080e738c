//! End-to-end CLI tests through the built binary: flag surfaces, file
//! outputs, exit codes, and the train → sample → eval → report pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scorefold::io;
use scorefold::synth;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scorefold"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("spawn scorefold");
    assert!(
        output.status.success(),
        "scorefold {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn write_fold(path: &Path, len: usize) {
    let s = synth::helix_hairpin(len, 'A').unwrap();
    io::write_ca_pdb(s.sequence(), s.coords(), path).unwrap();
}

#[test]
fn schedule_prints_default_table() {
    let output = run_ok(&["schedule"]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    let rows: Vec<&str> = stdout
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("stage"))
        .collect();
    assert_eq!(rows.len(), 32);
    let first: Vec<&str> = rows[0].split(',').collect();
    let last: Vec<&str> = rows[31].split(',').collect();
    assert_eq!(first[0], "1");
    assert_eq!(first[1], "10");
    assert_eq!(first[2], "10");
    assert_eq!(last[1].parse::<f64>().unwrap(), 0.01);
    assert!((last[2].parse::<f64>().unwrap() - 1e-5).abs() < 1e-12);

    // Constant ratio between consecutive sigmas.
    let sigmas: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let expected = (0.001f64).powf(1.0 / 31.0);
    for pair in sigmas.windows(2) {
        assert!((pair[1] / pair[0] - expected).abs() < 1e-5);
    }
}

#[test]
fn schedule_rejects_single_level() {
    let output = bin().args(["schedule", "--levels", "1"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn perturb_reports_sqrt3_sigma_rmsd() {
    let dir = tempfile::tempdir().unwrap();
    let pdb = dir.path().join("native.pdb");
    write_fold(&pdb, 100);
    let out = dir.path().join("perturbed.pdb");
    let output = run_ok(&[
        "perturb",
        "--pdb",
        pdb.to_str().unwrap(),
        "--sigma",
        "2",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    let reported: f64 = stdout
        .trim()
        .strip_prefix("unsuperposed_rmsd=")
        .unwrap()
        .parse()
        .unwrap();
    let expected = 3.0f64.sqrt() * 2.0;
    assert!(
        (reported - expected).abs() / expected < 0.10,
        "rmsd {reported} vs {expected}"
    );
    assert!(out.is_file());
    assert!(dir.path().join("perturbed.config.txt").is_file());

    // Tiny sigma leaves the structure unchanged within column precision.
    let out2 = dir.path().join("tiny.pdb");
    run_ok(&[
        "perturb",
        "--pdb",
        pdb.to_str().unwrap(),
        "--sigma",
        "1e-12",
        "--seed",
        "5",
        "--out",
        out2.to_str().unwrap(),
    ]);
    let orig = io::parse_pdb_ca(&pdb, 'A').unwrap().structure;
    let moved = io::parse_pdb_ca(&out2, 'A').unwrap().structure;
    for (a, b) in orig.coords().iter().zip(moved.coords()) {
        for axis in 0..3 {
            assert!((a[axis] - b[axis]).abs() <= 0.001);
        }
    }

    // Same seed twice: byte-identical output.
    let out3 = dir.path().join("again.pdb");
    run_ok(&[
        "perturb",
        "--pdb",
        pdb.to_str().unwrap(),
        "--sigma",
        "2",
        "--seed",
        "5",
        "--out",
        out3.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out3).unwrap());
}

#[test]
fn perturb_missing_file_exits_2() {
    let output = bin()
        .args([
            "perturb",
            "--pdb",
            "/nonexistent/file.pdb",
            "--sigma",
            "1",
            "--out",
            "/tmp/unused_scorefold_test.pdb",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

/// Write a toy manifest: helices/hairpins as train, one helix as valid.
fn write_toy_manifest(dir: &Path) -> PathBuf {
    let mut rows = vec!["id,pdb,chain,predictions,split".to_string()];
    for (i, s) in synth::toy_training_set().into_iter().enumerate() {
        let name = format!("toy_{i}.pdb");
        io::write_ca_pdb(s.sequence(), s.coords(), &dir.join(&name)).unwrap();
        rows.push(format!("toy_{i},{name},A,,train"));
    }
    let valid = synth::ideal_helix(16, 'S').unwrap();
    io::write_ca_pdb(valid.sequence(), valid.coords(), &dir.join("valid.pdb")).unwrap();
    rows.push("valid_0,valid.pdb,A,,valid".to_string());
    let manifest = dir.join("manifest.csv");
    fs::write(&manifest, rows.join("\n") + "\n").unwrap();
    manifest
}

fn train_args<'a>(
    manifest: &'a str,
    model: &'a str,
    epochs: &'a str,
    lr: &'a str,
    seed: &'a str,
) -> Vec<&'a str> {
    vec![
        "train",
        "--manifest",
        manifest,
        "--epochs",
        epochs,
        "--batch",
        "1",
        "--lr",
        lr,
        "--crop",
        "0",
        "--width",
        "8",
        "--blocks",
        "1",
        "--sigma-max",
        "5",
        "--sigma-min",
        "0.2",
        "--levels",
        "6",
        "--seed",
        seed,
        "--out-model",
        model,
    ]
}

#[test]
fn train_sample_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_toy_manifest(dir.path());
    let model = dir.path().join("model.sft");

    // Short training run with validation split.
    let output = run_ok(&train_args(
        manifest.to_str().unwrap(),
        model.to_str().unwrap(),
        "4",
        "3e-3",
        "9",
    ));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("best_valid_epoch="), "stdout: {stdout}");
    assert!(model.is_file());
    let losses = model.with_extension("losses.csv");
    let (header, rows) = io::read_csv(&losses).unwrap();
    assert_eq!(header, vec!["epoch", "train_loss", "valid_loss"]);
    assert_eq!(rows.len(), 5); // epoch 0 + 4 epochs
    assert!(!rows[0][2].is_empty(), "valid loss column filled");

    // Identical seeds → identical checkpoints, byte for byte.
    let model2 = dir.path().join("model2.sft");
    run_ok(&train_args(
        manifest.to_str().unwrap(),
        model2.to_str().unwrap(),
        "4",
        "3e-3",
        "9",
    ));
    assert_eq!(fs::read(&model).unwrap(), fs::read(&model2).unwrap());

    // Zero learning rate → flat loss curve.
    let model3 = dir.path().join("model3.sft");
    run_ok(&train_args(
        manifest.to_str().unwrap(),
        model3.to_str().unwrap(),
        "3",
        "0",
        "9",
    ));
    let (_, flat_rows) = io::read_csv(&model3.with_extension("losses.csv")).unwrap();
    let first = &flat_rows[0][1];
    assert!(flat_rows.iter().all(|r| &r[1] == first), "{flat_rows:?}");

    // Sample with the trained model against one toy target.
    let sample_dir = dir.path().join("decoys");
    let target = dir.path().join("toy_0.pdb");
    run_ok(&[
        "sample",
        "--model",
        model.to_str().unwrap(),
        "--pdb",
        target.to_str().unwrap(),
        "--decoys",
        "2",
        "--stages-T",
        "8",
        "--seed",
        "3",
        "--jobs",
        "1",
        "--out-dir",
        sample_dir.to_str().unwrap(),
    ]);
    assert!(sample_dir.join("decoy_000.pdb").is_file());
    assert!(sample_dir.join("decoy_001.pdb").is_file());
    assert!(sample_dir.join("stats.csv").is_file());
    assert!(sample_dir.join("timings.csv").is_file());
    assert!(sample_dir.join("run_config.txt").is_file());

    // Evaluate the decoys.
    let eval_csv = dir.path().join("eval.csv");
    run_ok(&[
        "eval",
        "--pred-dir",
        sample_dir.to_str().unwrap(),
        "--native",
        target.to_str().unwrap(),
        "--out",
        eval_csv.to_str().unwrap(),
    ]);
    let (header, rows) = io::read_csv(&eval_csv).unwrap();
    assert_eq!(header, vec!["decoy", "lddt_ca", "gdt_ts", "rmsd"]);
    assert_eq!(rows.len(), 4); // 2 decoys + mean + max
    let mean_row = rows.iter().find(|r| r[0] == "mean").unwrap();
    let decoy_lddt: Vec<f64> = rows
        .iter()
        .filter(|r| r[0].starts_with("decoy"))
        .map(|r| r[1].parse().unwrap())
        .collect();
    let mean_expected = decoy_lddt.iter().sum::<f64>() / decoy_lddt.len() as f64;
    let mean_reported: f64 = mean_row[1].parse().unwrap();
    assert!(
        (mean_reported - mean_expected).abs() < 1e-4,
        "{mean_reported} vs {mean_expected}"
    );
    assert!(dir.path().join("eval_summary.csv").is_file());

    // Report over the stage-end trajectory.
    let report_csv = dir.path().join("report.csv");
    run_ok(&[
        "report",
        "--trajectory-dir",
        sample_dir.to_str().unwrap(),
        "--native",
        target.to_str().unwrap(),
        "--out",
        report_csv.to_str().unwrap(),
    ]);
    let (header, rows) = io::read_csv(&report_csv).unwrap();
    assert_eq!(
        header,
        vec!["decoy", "stage", "lddt_ca", "gdt_ts", "seconds"]
    );
    assert_eq!(rows.len(), 2 * 6); // 2 decoys × 6 stages
}

#[test]
fn train_divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_toy_manifest(dir.path());
    let model = dir.path().join("model.sft");
    let output = bin()
        .args(train_args(
            manifest.to_str().unwrap(),
            model.to_str().unwrap(),
            "2",
            "1e200",
            "1",
        ))
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn eval_native_against_itself_and_mirror() {
    let dir = tempfile::tempdir().unwrap();
    let native = synth::helix_hairpin(20, 'K').unwrap();
    let native_path = dir.path().join("native.pdb");
    io::write_ca_pdb(native.sequence(), native.coords(), &native_path).unwrap();

    let decoy_dir = dir.path().join("decoys");
    fs::create_dir_all(&decoy_dir).unwrap();
    io::write_ca_pdb(
        native.sequence(),
        native.coords(),
        &decoy_dir.join("decoy_000.pdb"),
    )
    .unwrap();
    let mirrored = scorefold_core::geometry::mirror(native.coords());
    io::write_ca_pdb(
        native.sequence(),
        &mirrored,
        &decoy_dir.join("decoy_001.pdb"),
    )
    .unwrap();

    let eval_csv = dir.path().join("eval.csv");
    run_ok(&[
        "eval",
        "--pred-dir",
        decoy_dir.to_str().unwrap(),
        "--native",
        native_path.to_str().unwrap(),
        "--out",
        eval_csv.to_str().unwrap(),
    ]);
    let (_, rows) = io::read_csv(&eval_csv).unwrap();
    let self_row = &rows[0];
    assert_eq!(self_row[1].parse::<f64>().unwrap(), 1.0); // lDDT
    assert_eq!(self_row[2].parse::<f64>().unwrap(), 1.0); // GDT-TS
    assert!(self_row[3].parse::<f64>().unwrap() < 1e-6); // RMSD

    let mirror_row = &rows[1];
    // Column precision costs a little lDDT but mirror invariance holds
    // to threshold scale; GDT-TS must drop well below 1.
    assert!(mirror_row[1].parse::<f64>().unwrap() > 0.99);
    assert!(mirror_row[2].parse::<f64>().unwrap() < 0.95);
}

#[test]
fn eval_empty_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let native = dir.path().join("native.pdb");
    write_fold(&native, 16);
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let output = bin()
        .args([
            "eval",
            "--pred-dir",
            empty.to_str().unwrap(),
            "--native",
            native.to_str().unwrap(),
            "--out",
            dir.path().join("x.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn hirm_ref_helix_manifest_peaks_near_fifty_degrees() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = vec!["id,pdb,chain,predictions,split".to_string()];
    for i in 0..6 {
        let s = synth::ideal_helix(16 + 2 * i, 'A').unwrap();
        let name = format!("h{i}.pdb");
        io::write_ca_pdb(s.sequence(), s.coords(), &dir.path().join(&name)).unwrap();
        rows.push(format!("h{i},{name},A,,train"));
    }
    let manifest = dir.path().join("helices.csv");
    fs::write(&manifest, rows.join("\n") + "\n").unwrap();

    let out = dir.path().join("reference.sft");
    run_ok(&[
        "hirm-ref",
        "--manifest",
        manifest.to_str().unwrap(),
        "--bins",
        "36",
        "--out",
        out.to_str().unwrap(),
    ]);
    let hist = io::load_histogram(&out).unwrap();
    assert_eq!(hist.bins(), 36);
    let total: f64 = hist.frequencies().iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    let peak = hist
        .frequencies()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    // +50° sits in bin 23 of 36 (10° bins starting at −180°).
    assert_eq!(peak, 23);

    // Bit-exact file round trip.
    let bytes = fs::read(&out).unwrap();
    io::save_histogram(&out, &hist).unwrap();
    assert_eq!(bytes, fs::read(&out).unwrap());

    // The reference drives handedness resolution during sampling.
    let target = dir.path().join("h0.pdb");
    let sample_dir = dir.path().join("hirm_decoys");
    run_ok(&[
        "sample",
        "--oracle-pdb",
        target.to_str().unwrap(),
        "--decoys",
        "1",
        "--stages-T",
        "8",
        "--levels",
        "6",
        "--sigma-min",
        "0.05",
        "--hirm-ref",
        out.to_str().unwrap(),
        "--seed",
        "2",
        "--out-dir",
        sample_dir.to_str().unwrap(),
    ]);
    assert!(sample_dir.join("decoy_000.pdb").is_file());
}

#[test]
fn sample_stages_t_zero_returns_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("native.pdb");
    write_fold(&target, 12);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "sample",
            "--oracle-pdb",
            target.to_str().unwrap(),
            "--decoys",
            "1",
            "--stages-T",
            "0",
            "--levels",
            "4",
            "--seed",
            "8",
            "--no-trajectory",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
    }
    // Deterministic and equal to the prior draw: both runs agree.
    assert_eq!(
        fs::read(out_a.join("decoy_000.pdb")).unwrap(),
        fs::read(out_b.join("decoy_000.pdb")).unwrap()
    );
    // The decoy is noise at unit scale, nothing like the native.
    let decoy = io::parse_pdb_ca(&out_a.join("decoy_000.pdb"), 'A')
        .unwrap()
        .structure;
    let spread = decoy
        .coords()
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(
        spread < 6.0,
        "initialization should be N(0,1) scale, got {spread}"
    );
}

#[test]
fn sample_defaults_match_protocol() {
    use clap::Parser;
    let cli = scorefold::cli::Cli::try_parse_from([
        "scorefold",
        "sample",
        "--oracle-pdb",
        "x.pdb",
        "--out-dir",
        "out",
    ])
    .unwrap();
    match cli.command {
        scorefold::cli::Command::Sample(args) => {
            assert_eq!(args.decoys, 128);
            assert_eq!(args.stages_t, 64);
            assert_eq!(args.lambda0, 0.1);
            assert_eq!(args.levels, 32);
            assert_eq!(args.sigma_max, 10.0);
            assert_eq!(args.sigma_min, 0.01);
        }
        other => panic!("parsed into {other:?}"),
    }
}

#[test]
fn jobs_env_var_and_flag_agree() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("native.pdb");
    write_fold(&target, 12);
    let out_flag = dir.path().join("flag");
    let out_env = dir.path().join("env");
    let common = |out: &Path| {
        vec![
            "sample".to_string(),
            "--oracle-pdb".into(),
            target.to_str().unwrap().into(),
            "--decoys".into(),
            "3".into(),
            "--stages-T".into(),
            "4".into(),
            "--levels".into(),
            "4".into(),
            "--seed".into(),
            "6".into(),
            "--no-trajectory".into(),
            "--out-dir".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let mut with_flag = common(&out_flag);
    with_flag.push("--jobs".into());
    with_flag.push("2".into());
    assert!(bin().args(&with_flag).output().unwrap().status.success());
    assert!(bin()
        .args(&common(&out_env))
        .env("SCOREFOLD_JOBS", "1")
        .output()
        .unwrap()
        .status
        .success());
    // Worker count never changes the decoys.
    for i in 0..3 {
        let name = format!("decoy_{i:03}.pdb");
        assert_eq!(
            fs::read(out_flag.join(&name)).unwrap(),
            fs::read(out_env.join(&name)).unwrap()
        );
    }
}

#[test]
fn sample_divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("native.pdb");
    write_fold(&target, 12);
    let output = bin()
        .args([
            "sample",
            "--oracle-pdb",
            target.to_str().unwrap(),
            "--decoys",
            "1",
            "--stages-T",
            "64",
            "--levels",
            "4",
            "--lambda0",
            "1e30",
            "--seed",
            "1",
            "--out-dir",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn report_without_trajectory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let native = dir.path().join("native.pdb");
    write_fold(&native, 12);
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let output = bin()
        .args([
            "report",
            "--trajectory-dir",
            empty.to_str().unwrap(),
            "--native",
            native.to_str().unwrap(),
            "--out",
            dir.path().join("r.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn report_oracle_run_lddt_non_decreasing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("native.pdb");
    write_fold(&target, 24);
    let sample_dir = dir.path().join("run");
    run_ok(&[
        "sample",
        "--oracle-pdb",
        target.to_str().unwrap(),
        "--decoys",
        "3",
        "--stages-T",
        "32",
        "--levels",
        "9",
        "--seed",
        "5",
        "--out-dir",
        sample_dir.to_str().unwrap(),
    ]);
    let report_csv = dir.path().join("report.csv");
    run_ok(&[
        "report",
        "--trajectory-dir",
        sample_dir.to_str().unwrap(),
        "--native",
        target.to_str().unwrap(),
        "--out",
        report_csv.to_str().unwrap(),
    ]);
    let summary = dir.path().join("report_summary.csv");
    let (_, rows) = io::read_csv(&summary).unwrap();
    assert_eq!(rows.len(), 9);
    let medians: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    // Median lDDT non-decreasing over the first 2/3 of the stages.
    for k in 0..5 {
        assert!(
            medians[k + 1] >= medians[k] - 1e-9,
            "stage {k}: {} → {}",
            medians[k],
            medians[k + 1]
        );
    }
    // Timing column is populated.
    let (_, detail) = io::read_csv(&report_csv).unwrap();
    assert!(detail
        .iter()
        .all(|r| r[4].parse::<f64>().map(|v| v >= 0.0).unwrap_or(false)));
}

#[test]
fn sample_with_predictions_and_orientation_mask() {
    let dir = tempfile::tempdir().unwrap();
    let native = synth::ideal_helix(12, 'A').unwrap();
    let target = dir.path().join("native.pdb");
    io::write_ca_pdb(native.sequence(), native.coords(), &target).unwrap();

    // Uniform, normalized prediction tensor.
    let len = native.len();
    let mut data = vec![0.0f32; len * len * 100];
    for cell in 0..len * len {
        let base = cell * 100;
        let mut offset = 0;
        for width in [37usize, 25, 25, 13] {
            for k in 0..width {
                data[base + offset + k] = 1.0 / width as f32;
            }
            offset += width;
        }
    }
    let map = scorefold_core::conditioning::PairFeatureMap::from_data(len, 100, data).unwrap();
    let predictions = scorefold_core::conditioning::PredictionMaps::new(map).unwrap();
    let pred_path = dir.path().join("pred.sft");
    io::save_predictions(&pred_path, &predictions).unwrap();

    for (tag, mask) in [("plain", None), ("masked", Some("orientation"))] {
        let out = dir.path().join(tag);
        let mut args = vec![
            "sample".to_string(),
            "--oracle-pdb".into(),
            target.to_str().unwrap().into(),
            "--predictions".into(),
            pred_path.to_str().unwrap().into(),
            "--decoys".into(),
            "1".into(),
            "--stages-T".into(),
            "4".into(),
            "--levels".into(),
            "4".into(),
            "--seed".into(),
            "1".into(),
            "--no-trajectory".into(),
            "--out-dir".into(),
            out.to_str().unwrap().into(),
        ];
        if let Some(m) = mask {
            args.push("--predictions-mask".into());
            args.push(m.into());
        }
        let output = bin().args(&args).output().unwrap();
        assert!(
            output.status.success(),
            "{tag}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
}

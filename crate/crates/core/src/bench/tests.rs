use std::collections::BTreeMap;

use super::*;
use crate::datasets::{write_idx_images, write_idx_labels};
use crate::networks::load_model;
use crate::objectives::Term;
use crate::trainer::StepKind;

fn tiny(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.apply([
        ("epochs", "2"),
        ("points", "64"),
        ("latent_dim", "3"),
        ("encoder_hidden", "8"),
        ("classifier_hidden", "8"),
        ("task_disc_hidden", "8"),
        ("prior_disc_hidden", "8"),
        ("domain_disc_hidden", "8"),
        ("seeds", "0,1,2,3,4"),
    ])
    .unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn config_text_skips_comments_and_blank_lines() {
    let pairs = parse_config_text("# header\n\nlambda_q = 0.5  # trailing\n  seeds=1,2\n").unwrap();
    assert_eq!(
        pairs,
        vec![("lambda_q".into(), "0.5".into()), ("seeds".into(), "1,2".into())]
    );
    let err = parse_config_text("lambda_q 0.5").unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let mut cfg = ExperimentConfig::default();
    let err = cfg.set("lamda_q", "1").unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("lamda_q")), "{err}");
    assert!(cfg.set("lambda_q", "not-a-number").is_err());
}

#[test]
fn entries_round_trip() {
    let mut cfg = ExperimentConfig::default();
    cfg.apply([
        ("generator", "gaussian_mixture"),
        ("rotation_deg", "20"),
        ("translation", "0.5,-1"),
        ("scaling", "1,2"),
        ("seeds", "3,9"),
        ("lambda_q", "0.25"),
        ("discriminator", "binary"),
        ("export_embeddings", "on"),
        ("source_images", "/data/a.idx"),
    ])
    .unwrap();
    let mut back = ExperimentConfig::default();
    back.apply(cfg.entries()).unwrap();
    assert_eq!(back.entries(), cfg.entries());
    assert_eq!(back.seeds, vec![3, 9]);
    assert_eq!(back.data.source_images.as_deref(), Some(Path::new("/data/a.idx")));
}

#[test]
fn validate_rejects_empty_seed_list_and_missing_idx_paths() {
    let mut cfg = ExperimentConfig::default();
    cfg.seeds.clear();
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::default();
    cfg.set("generator", "idx").unwrap();
    assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("source_images")));
}

#[test]
fn mean_and_sample_std() {
    let (m, s) = mean_std(&[0.9, 1.0]);
    assert!((m - 0.95).abs() < 1e-15);
    assert!((s - 0.05f64.hypot(0.05)).abs() < 1e-12);
    assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
}

#[test]
fn arm_labels() {
    let ablation: Vec<&str> = Arm::ABLATION.iter().map(|a| a.label()).collect();
    assert_eq!(ablation, ["full", "wo-s", "wo-t", "wo-st"]);
    let disc: Vec<&str> = Arm::DISCRIMINATORS.iter().map(|a| a.label()).collect();
    assert_eq!(disc, ["task-d", "adv-d"]);
}

fn diff(a: &ExperimentConfig, b: &ExperimentConfig) -> BTreeMap<&'static str, (String, String)> {
    a.entries()
        .into_iter()
        .zip(b.entries())
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, y)| (x.0, (x.1, y.1)))
        .collect()
}

#[test]
fn arms_differ_only_in_their_switches() {
    let base = ExperimentConfig::default();
    let expect: [(Arm, &[&str]); 7] = [
        (Arm::Full, &[]),
        (Arm::WithoutSource, &["source_reg"]),
        (Arm::WithoutTarget, &["target_reg"]),
        (Arm::WithoutBoth, &["source_reg", "target_reg"]),
        (Arm::TaskDisc, &[]),
        (Arm::AdvDisc, &["discriminator"]),
        (Arm::SourceOnly, &["discriminator", "source_reg", "target_reg"]),
    ];
    for (arm, keys) in expect {
        let mut cfg = arm_config(&base, arm);
        assert_eq!(cfg.out_dir, base.out_dir.join(arm.label()));
        cfg.out_dir = base.out_dir.clone();
        let changed: Vec<&str> = diff(&base, &cfg).into_keys().collect();
        assert_eq!(changed, keys, "{}", arm.label());
    }
}

#[test]
fn experiment_writes_one_history_per_seed_and_one_summary_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.seeds, vec![0, 1, 2, 3, 4]);
    assert_eq!(summary.target_acc.len(), 5);
    for s in 0..5 {
        let csv = read(&dir.path().join(format!("history_seed{s}.csv")));
        assert!(csv.contains("# seeds = "), "config echo missing");
        assert!(csv.lines().any(|l| l.starts_with("kind,step,epoch,")));
        let sidecar = read(&dir.path().join(format!("history_seed{s}.config")));
        assert!(sidecar.lines().any(|l| l == format!("seeds = {s}")));
    }
    let text = read(&dir.path().join("summary.csv"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], ArmSummary::HEADER);
    assert!(rows[1].starts_with("train,0 1 2 3 4,"));

    let again = tempfile::tempdir().unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.out_dir = again.path().to_path_buf();
    assert_eq!(run_experiment(&cfg2).unwrap(), summary);
    for s in 0..5 {
        let name = format!("history_seed{s}.csv");
        let strip = |t: String| t.lines().filter(|l| !l.starts_with("# out")).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(read(&dir.path().join(&name))), strip(read(&again.path().join(&name))));
    }
}

#[test]
fn sidecar_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.seeds = vec![7];
    let first = run_seeds(&cfg).unwrap().remove(0);
    write_seed_artifacts(&first, dir.path()).unwrap();
    let back = ExperimentConfig::from_file(&dir.path().join("history_seed7.config")).unwrap();
    let second = run_seeds(&back).unwrap().remove(0);
    assert_eq!(first.history, second.history);
    assert_eq!(first.model, second.model);
}

#[test]
fn trainer_errors_carry_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.seeds = vec![4];
    cfg.set("learning_rate", "1e300").unwrap();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::Seed { seed: 4, .. }), "{err}");
    assert!(matches!(err.root(), Error::Diverged { .. }), "{err}");
    assert!(err.to_string().starts_with("seed 4: "));
}

#[test]
fn embeddings_have_p_plus_three_columns_and_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.seeds = vec![1];
    cfg.export_embeddings = true;
    cfg.save_model = true;
    run_experiment(&cfg).unwrap();
    let path = dir.path().join("embeddings_seed1.csv");
    let text = read(&path);
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "z0,z1,z2,domain,label,pred");
    assert_eq!(body.len(), 1 + 64 + 64);
    assert!(body.iter().all(|l| l.split(',').count() == 3 + 3));
    assert!(body[1].contains(",source,"));
    assert!(body[body.len() - 1].contains(",target,"));

    let model = load_model(&dir.path().join("model_seed1.ckpt")).unwrap();
    let (s, t) = build_domains(&cfg.data, 1).unwrap();
    let again = dir.path().join("again.csv");
    export_embeddings(&model, &[&s, &t], &again, &cfg.for_seed(1)).unwrap();
    assert_eq!(read(&again), text);
}

#[test]
fn ablation_suite_writes_one_row_per_arm() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.seeds = vec![0, 1];
    let rows = run_ablation_suite(&cfg).unwrap();
    let arms: Vec<&str> = rows.iter().map(|r| r.arm.as_str()).collect();
    assert_eq!(arms, ["full", "wo-s", "wo-t", "wo-st"]);
    for arm in arms {
        assert!(dir.path().join(arm).join("history_seed1.csv").exists());
    }
    let text = read(&dir.path().join("summary.csv"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);

    let wo_st = read(&dir.path().join("wo-st/history_seed0.csv"));
    let header: Vec<&str> = wo_st.lines().find(|l| l.starts_with("kind,")).unwrap().split(',').collect();
    for col in ["Q.adv_encoder", "h.entropic", "h.smooth", "F.adv_prior"] {
        let j = header.iter().position(|h| *h == col).unwrap();
        let nonempty = wo_st
            .lines()
            .filter(|l| l.starts_with("step,"))
            .any(|l| !l.split(',').nth(j).unwrap().is_empty());
        assert!(!nonempty, "{col} recorded in wo-st");
    }
}

#[test]
fn discriminator_arms_share_data_and_batches() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = tiny(dir.path());
    base.seeds = vec![2];
    let task = run_seeds(&arm_config(&base, Arm::TaskDisc)).unwrap().remove(0);
    let adv = run_seeds(&arm_config(&base, Arm::AdvDisc)).unwrap().remove(0);
    assert_eq!(task.source, adv.source);
    assert_eq!(task.target, adv.target);
    // The encoder is untouched before its own sub-step, so the first
    // classification loss only depends on the batch and the noise.
    let first = |r: &SeedRun| r.history.steps[0].get(StepKind::Encoder, Term::Class);
    assert_eq!(first(&task), first(&adv));
    assert!(first(&task).is_some());

    let rows = run_discriminator_comparison(&base).unwrap();
    let arms: Vec<&str> = rows.iter().map(|r| r.arm.as_str()).collect();
    assert_eq!(arms, ["task-d", "adv-d"]);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let mut cfg = tiny(&blocker.join("sub"));
    cfg.seeds = vec![0];
    assert!(matches!(run_experiment(&cfg), Err(Error::Io { .. })));
}

#[test]
fn gaussian_mixture_domains() {
    let mut cfg = ExperimentConfig::default();
    cfg.apply([("generator", "gaussian_mixture"), ("points", "20"), ("classes", "4")])
        .unwrap();
    let (s, t) = build_domains(&cfg.data, 3).unwrap();
    assert_eq!(s.label_counts(), vec![20; 4]);
    assert_eq!(t.len(), 80);
    assert!(t.labels().is_none());
    assert_eq!(t.eval_labels().unwrap(), s.labels().unwrap());
    assert!(s.inputs().iter().chain(t.inputs()).all(|v| v.abs() <= 1.0));
}

fn write_digits(dir: &Path, prefix: &str, n: usize, side: usize, seed: u8) -> (std::path::PathBuf, std::path::PathBuf) {
    let pixels: Vec<u8> = (0..n * side * side)
        .map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed))
        .collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let (img, lab) = (dir.join(format!("{prefix}-images")), dir.join(format!("{prefix}-labels")));
    write_idx_images(&img, n, side, side, &pixels).unwrap();
    write_idx_labels(&lab, &labels).unwrap();
    (img, lab)
}

#[test]
fn idx_domains_are_subsampled_and_brought_to_16x16() {
    let dir = tempfile::tempdir().unwrap();
    let (si, sl) = write_digits(dir.path(), "src", 30, 28, 0);
    let (ti, tl) = write_digits(dir.path(), "tgt", 25, 16, 5);
    let mut cfg = ExperimentConfig::default();
    cfg.apply([
        ("generator", "idx"),
        ("source_images", si.to_str().unwrap()),
        ("source_labels", sl.to_str().unwrap()),
        ("target_images", ti.to_str().unwrap()),
        ("target_labels", tl.to_str().unwrap()),
        ("idx_max_images", "20"),
    ])
    .unwrap();
    cfg.validate().unwrap();
    let (s, t) = build_domains(&cfg.data, 0).unwrap();
    assert_eq!((s.len(), s.dim()), (20, 256));
    assert_eq!((t.len(), t.dim()), (20, 256));
    assert_eq!((s.classes(), t.classes()), (10, 10));
    assert!(t.is_held_out() && t.labels().is_none());
    assert!(s.inputs().iter().all(|v| (-1.0..=1.0).contains(v)));

    cfg.data.target_labels = None;
    let (_, t) = build_domains(&cfg.data, 0).unwrap();
    assert!(t.eval_labels().is_none());
}

#[test]
fn desk_resolution_rejects_odd_sizes() {
    let data = DomainDataset::new(ndarray::Array2::zeros((2, 20)), Some(vec![0, 1]), 2, Domain::Source, "t").unwrap();
    assert!(to_desk_resolution(&data).is_err());
    let big = DomainDataset::new(ndarray::Array2::ones((1, 1024)), None, 0, Domain::Target, "t").unwrap();
    let small = to_desk_resolution(&big).unwrap();
    assert_eq!(small.dim(), 256);
    assert!(small.inputs().iter().all(|&v| v == 1.0));
}

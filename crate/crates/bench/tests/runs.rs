use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use flowcycle::flowmodel::{save_checkpoint, VelocityNet};
use flowcycle_bench::report::{METRICS_HEADER, PROBE_HEADER};
use flowcycle_bench::{
    ablate, compare_editors, corruption_probe, emit_probe, emit_report, make_task, probe_experiment, train_net,
    transfer_experiment, AblationParam, BenchError, EditorKind, RunConfig,
};

const TINY: &str = "
world.dataset_size = 512
train.steps = 60
train.batch_size = 64
cycle.opt_steps = 4
edit.steps = 4
edit.t_corrupt = 0.5
task_count = 3
";

fn tiny() -> RunConfig {
    RunConfig::from_str_config(TINY).unwrap()
}

fn net() -> &'static VelocityNet {
    static NET: OnceLock<VelocityNet> = OnceLock::new();
    NET.get_or_init(|| train_net(&tiny()).unwrap().0)
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn single_editor_has_one_row_per_task() {
    let mut cfg = tiny();
    cfg.editors = vec![EditorKind::Sdedit];
    let r = compare_editors(&cfg, net()).unwrap();
    assert_eq!(r.rows.len(), cfg.task_count);
    assert!(r.rows.iter().all(|r| r.editor == "sdedit" && r.l_rec.is_none()));
}

#[test]
fn one_row_per_seed_task_and_editor() {
    let mut cfg = tiny();
    cfg.seeds = vec![5, 9];
    let r = compare_editors(&cfg, net()).unwrap();
    assert_eq!(r.rows.len(), 2 * cfg.task_count * 4);
    let mut keys: Vec<_> = r.rows.iter().map(|r| (r.seed, r.task_id, r.editor.clone())).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), r.rows.len());
}

#[test]
fn rerun_reproduces_metrics_bytes() {
    let cfg = tiny();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&compare_editors(&cfg, net()).unwrap(), a.path()).unwrap();
    emit_report(&compare_editors(&cfg, net()).unwrap(), b.path()).unwrap();
    for f in ["metrics.csv", "summary.csv", "tradeoff.svg", "config.txt"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn metrics_csv_parses_back_exactly() {
    let cfg = tiny();
    let report = compare_editors(&cfg, net()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.join(","), METRICS_HEADER);
    let records: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), report.rows.len());
    let float = |s: &str| -> Option<f64> { (!s.is_empty()).then(|| s.parse().unwrap()) };
    for (rec, row) in records.iter().zip(&report.rows) {
        assert_eq!(rec[0].parse::<usize>().unwrap(), row.task_id);
        assert_eq!(&rec[1], row.editor);
        assert_eq!(rec[2].parse::<u64>().unwrap(), row.seed);
        assert_eq!(float(&rec[3]), Some(row.lambda));
        assert_eq!(rec[4].parse::<usize>().unwrap(), row.opt_steps);
        assert_eq!(float(&rec[7]), row.consistency);
        assert_eq!(float(&rec[8]), row.alignment);
        assert_eq!(float(&rec[9]), row.l_rec);
        assert_eq!(float(&rec[10]), row.l_align);
        assert_eq!(&rec[11], "");
    }
    let cfg_text = read(&dir.path().join("config.txt"));
    assert!(cfg_text.starts_with(&format!("# config hash {}", cfg.hash())));
    assert_eq!(RunConfig::from_str_config(&cfg_text).unwrap(), cfg);
}

#[test]
fn svg_has_one_marker_per_scored_row() {
    let report = compare_editors(&tiny(), net()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let text = read(&dir.path().join("tradeoff.svg"));
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let markers = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("marker"))
        .count();
    let scored = report.rows.iter().filter(|r| r.consistency.is_some()).count();
    assert_eq!(markers, scored);
    assert_eq!(scored, report.rows.len());
}

#[test]
fn transfer_optimized_matches_flowcycle() {
    let cfg = tiny();
    let t = transfer_experiment(&cfg, net()).unwrap();
    assert_eq!(t.rows.len(), 4 * cfg.task_count);
    assert_eq!(t.editors(), ["optimized", "match", "mismatch", "random"]);
    let mut cmp_cfg = cfg.clone();
    cmp_cfg.editors = vec![EditorKind::FlowCycle];
    let c = compare_editors(&cmp_cfg, net()).unwrap();
    let optimized: Vec<_> = t.rows.iter().filter(|r| r.editor == "optimized").collect();
    for (o, f) in optimized.iter().zip(&c.rows) {
        assert_eq!(o.task_id, f.task_id);
        assert_eq!(o.consistency.unwrap().to_bits(), f.consistency.unwrap().to_bits());
        assert_eq!(o.alignment.unwrap().to_bits(), f.alignment.unwrap().to_bits());
    }
}

#[test]
fn ablation_changes_one_parameter() {
    let cfg = tiny();
    let grid = vec!["0.5".to_string()];
    let reports = ablate(&cfg, net(), AblationParam::Lambda, &grid).unwrap();
    assert_eq!(reports.len(), 1);
    assert!(reports[0].1.rows.iter().all(|r| r.lambda == 0.5));
    let changed = AblationParam::Lambda.apply(&cfg, "0.5").unwrap();
    assert_eq!(cfg.diff(&changed), vec!["cycle.lambda"]);
    let cfg_scales = AblationParam::Cfg.apply(&cfg, "2:7").unwrap();
    assert_eq!(cfg.diff(&cfg_scales), vec!["cycle.src_guidance", "cycle.tar_guidance"]);
    assert_eq!((cfg_scales.cycle.src_guidance, cfg_scales.cycle.tar_guidance), (2.0, 7.0));
}

#[test]
fn bad_grid_value_fails_before_running() {
    let grid = vec!["0.1".to_string(), "oops".to_string()];
    let err = ablate(&tiny(), net(), AblationParam::Steps, &grid).unwrap_err();
    assert!(matches!(err, BenchError::Config(_)), "{err}");
    assert!(ablate(&tiny(), net(), AblationParam::Lambda, &[]).is_err());
}

#[test]
fn probe_reports_four_numbers_per_task() {
    let cfg = tiny();
    let p = probe_experiment(&cfg, net()).unwrap();
    assert_eq!(p.rows.len(), cfg.task_count);
    let dir = tempfile::tempdir().unwrap();
    emit_probe(&p, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("probe.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>().join(","), PROBE_HEADER);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), 6);
        for v in rec.iter().skip(2) {
            assert!(v.parse::<f64>().unwrap() >= 0.0);
        }
    }
}

#[test]
fn noiseless_probe_is_finite() {
    let cfg = tiny();
    let world = cfg.world_spec().unwrap();
    let task = make_task(&cfg, &world, 0, 0).unwrap();
    let (rel, irr) = corruption_probe(&world, &task, net(), &vec![0.0; world.dim()]).unwrap();
    assert!(rel.is_finite() && irr.is_finite());
}

#[test]
fn checkpoint_mismatch_is_a_config_error() {
    let mut cfg = tiny();
    cfg.world.k_a = 3;
    let err = compare_editors(&cfg, net()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn cli(args: &[&str], dir: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_flowcycle"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_checkpoint(net(), &d.join("net.fck")).unwrap();
    std::fs::write(d.join("ok.cfg"), format!("{TINY}\nnet.checkpoint = net.fck\neditors = sdedit\n")).unwrap();
    std::fs::write(d.join("missing.cfg"), "net.checkpoint = nowhere.fck\n").unwrap();
    std::fs::write(d.join("typo.cfg"), "cycle.lamda = 0.2\n").unwrap();
    std::fs::write(d.join("diverge.cfg"), format!("{TINY}\ntrain.lr = 1e200\n")).unwrap();

    assert_eq!(cli(&["compare", "--config", "ok.cfg", "--out", "run"], d), 0);
    assert!(d.join("run/metrics.csv").exists());
    assert_eq!(cli(&["compare", "--config", "typo.cfg"], d), 2);
    assert_eq!(cli(&["compare", "--config", "missing.cfg"], d), 2);
    assert_eq!(cli(&["ablate", "--config", "ok.cfg", "--param", "lambda", "--grid", "-1"], d), 2);
    assert_eq!(cli(&["ablate", "--config", "ok.cfg", "--param", "warmth", "--grid", "1"], d), 2);
    assert_eq!(cli(&["train", "--config", "diverge.cfg", "--out", "t"], d), 3);
    std::fs::write(d.join("blocker"), "").unwrap();
    assert_eq!(cli(&["compare", "--config", "ok.cfg", "--out", "blocker/sub"], d), 4);
}

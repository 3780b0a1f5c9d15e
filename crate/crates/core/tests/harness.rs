use budgetdistill::harness::{
    emit_reports, load_records, metrics_csv, pareto_front, read_metrics_csv, run_experiment, Axis, ExperimentConfig,
    Metric, MetricsRow, METRICS_COLUMNS,
};
use budgetdistill::Error;
use proptest::prelude::*;

fn small_config(out: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        r#"
schema_version = 1
seeds = [0, 1, 2]
warm_start_epochs = 1
output_dir = "{}"

[task]
family = "single-step"
vocab_size = 3
teacher_correct = 0.6

[training]
epochs = 4
batches_per_epoch = 2

[reward]
budget = 0.2

[[methods]]
method = "reward-only"

[[methods]]
method = "kl-only"

[[methods]]
method = "lagrangian"
lambdas = [0.0, 1.0]

[[methods]]
method = "unaugmented"
penalty = 5.0
label = "unaugmented-n5"

[report]
verification_instances = 5
"#,
        out.display()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

#[test]
fn full_run_emits_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small_config(&out);
    let summary = run_experiment(&cfg, false).unwrap();
    assert!(summary.failures.is_empty());
    assert_eq!(summary.records.len(), 15);

    let rows = read_metrics_csv(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 15);
    assert_eq!(rows[0].method, "reward-only");
    assert_eq!(rows[3].method, "kl-only");
    assert_eq!(rows[14].method, "unaugmented-n5");
    for r in &rows {
        assert!((r.constraint_satisfaction + r.violation_probability - 1.0).abs() <= 1e-12);
        assert!((0.0..=1.0).contains(&r.task_success_rate) && r.mean_kl >= 0.0);
    }
    let header = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), METRICS_COLUMNS.join(","));

    let pareto = std::fs::read_to_string(out.join("pareto.csv")).unwrap();
    assert_eq!(pareto.lines().count(), 6);
    assert!(pareto.contains(",true"));
    let theorems = std::fs::read_to_string(out.join("theorems.csv")).unwrap();
    assert!(theorems.lines().skip(1).all(|l| l.ends_with(",true")), "{theorems}");
    let svg = std::fs::read_to_string(out.join("scatter.svg")).unwrap();
    assert_eq!(svg.matches("class=\"marker\"").count(), 15);

    for cell in cfg.cells().unwrap() {
        let d = cell.dir(&out);
        assert!(d.join("policy.bin").exists() && d.join("log.jsonl").exists());
    }
    let l0 = cfg.cells().unwrap().into_iter().find(|c| c.label == "lagrangian(0)").unwrap();
    let r0 = cfg.cells().unwrap().into_iter().find(|c| c.label == "reward-only").unwrap();
    assert_eq!(
        std::fs::read(l0.dir(&out).join("log.jsonl")).unwrap(),
        std::fs::read(r0.dir(&out).join("log.jsonl")).unwrap()
    );
}

#[test]
fn rerun_requires_force_and_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small_config(&out);
    run_experiment(&cfg, false).unwrap();
    let first = std::fs::read(out.join("metrics.csv")).unwrap();
    assert!(matches!(run_experiment(&cfg, false), Err(Error::OutputExists(_))));
    run_experiment(&cfg, true).unwrap();
    assert_eq!(std::fs::read(out.join("metrics.csv")).unwrap(), first);
}

#[test]
fn missing_cells_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small_config(&out);
    run_experiment(&cfg, false).unwrap();
    let cells = cfg.cells().unwrap();
    std::fs::remove_dir_all(cells[4].dir(&out)).unwrap();
    match emit_reports(&out) {
        Err(Error::Incomplete(missing)) => assert_eq!(missing, vec![format!("kl-only seed {}", cells[4].seed)]),
        other => panic!("{other:?}"),
    }
    assert!(load_records(&out).is_err());
}

#[test]
fn metrics_csv_round_trips() {
    let rows = vec![MetricsRow {
        method: "a,b".into(),
        seed: 3,
        task_success_rate: 0.25,
        mean_kl: 1e-9,
        constraint_satisfaction: 0.875,
        violation_probability: 0.125,
    }];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    std::fs::write(&path, metrics_csv(&rows).unwrap()).unwrap();
    assert_eq!(read_metrics_csv(&path).unwrap(), rows);
}

fn arb_rows() -> impl Strategy<Value = Vec<MetricsRow>> {
    proptest::collection::vec((0u8..6, 0u8..6), 1..30).prop_map(|pts| {
        pts.into_iter()
            .enumerate()
            .map(|(i, (x, y))| {
                let cs = y as f64 / 5.0;
                MetricsRow {
                    method: format!("m{i}"),
                    seed: 0,
                    task_success_rate: x as f64 / 5.0,
                    mean_kl: 0.0,
                    constraint_satisfaction: cs,
                    violation_probability: 1.0 - cs,
                }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn front_is_exactly_the_undominated_rows(rows in arb_rows()) {
        let (x, y) = (Axis::new(Metric::TaskSuccessRate), Axis::new(Metric::ConstraintSatisfaction));
        let front = pareto_front(&rows, x, y);
        prop_assert!(!front.is_empty());
        prop_assert!(front.windows(2).all(|w| w[0] < w[1]));
        let dominates = |a: &MetricsRow, b: &MetricsRow| {
            a.task_success_rate >= b.task_success_rate
                && a.constraint_satisfaction >= b.constraint_satisfaction
                && (a.task_success_rate > b.task_success_rate || a.constraint_satisfaction > b.constraint_satisfaction)
        };
        for (i, r) in rows.iter().enumerate() {
            let dominated = rows.iter().any(|o| dominates(o, r));
            prop_assert_eq!(front.contains(&i), !dominated);
        }
        let mut dup = rows.clone();
        dup.push(rows[front[0]].clone());
        let again = pareto_front(&dup, x, y);
        let names = |ix: &[usize], rs: &[MetricsRow]| {
            let mut v: Vec<String> = ix.iter().map(|&i| rs[i].method.clone()).collect();
            v.sort();
            v.dedup();
            v
        };
        prop_assert_eq!(names(&front, &rows), names(&again, &dup));
    }

    #[test]
    fn smaller_is_better_axis_mirrors_larger(rows in arb_rows()) {
        let x = Axis::new(Metric::TaskSuccessRate);
        let a = pareto_front(&rows, x, Axis::new(Metric::ConstraintSatisfaction));
        let b = pareto_front(&rows, x, Axis::new(Metric::ViolationProbability));
        prop_assert_eq!(a, b);
    }
}

use proptest::prelude::*;
use vqprobe::metrics::{AccuracyTable, CurvePoint, MetricsReport};
use vqprobe::report::{
    accuracy_csv, accuracy_rows, curve_csv, curve_svg, fewshot_svg, rows_from_csv, write_run, write_sweep, AccuracyRow,
};
use vqprobe::HarnessError;
use vqprobe_core::question::{Answer, AnswerType, QuestionFamily};

fn table(correct: &[usize], total: &[usize]) -> AccuracyTable {
    let mut families = Vec::new();
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    let yes = (AnswerType::Binary, Answer::Bool(true));
    let no = (AnswerType::Binary, Answer::Bool(false));
    for (i, f) in QuestionFamily::ALL.iter().enumerate() {
        for k in 0..total[i] {
            families.push(*f);
            truth.push(yes);
            predicted.push(if k < correct[i] { yes } else { no });
        }
    }
    let given: Vec<Answer> = predicted.iter().map(|p| p.1).collect();
    AccuracyTable::tally(&families, &truth, &predicted, &given)
}

fn report(encoder: &str, fraction: f64, val: AccuracyTable, curve: Vec<CurvePoint>) -> MetricsReport {
    MetricsReport {
        encoder: encoder.into(),
        budget: 100,
        fraction,
        seed: 0,
        train_scenes: 10,
        train_questions: 100,
        epochs: 1,
        iterations: 10,
        val,
        val_loss: Some(0.5),
        best_epoch: Some(1),
        best_val_accuracy: Some(0.5),
        curve,
    }
}

fn point(iteration: u64, train: Option<f64>, val: Option<f64>) -> CurvePoint {
    CurvePoint { iteration, epoch: 0, train_loss: train, val_loss: val, val_accuracy: val.map(|_| 0.5) }
}

fn vertex_counts(svg: &str) -> Vec<usize> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(|l| {
            let pts = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
            pts.split_whitespace().count()
        })
        .collect()
}

#[test]
fn two_curve_points_give_two_vertices_per_series() {
    let curve = vec![
        point(100, Some(1.0), None),
        point(150, None, Some(0.9)),
        point(200, Some(0.8), None),
        point(300, None, Some(0.7)),
    ];
    assert_eq!(vertex_counts(&curve_svg(&curve).unwrap()), vec![2, 2]);
}

#[test]
fn empty_fraction_list_is_an_error() {
    assert!(matches!(fewshot_svg(&[]), Err(HarnessError::Data(_))));
    let dir = tempfile::tempdir().unwrap();
    assert!(write_sweep(dir.path(), &[]).is_err());
    assert!(!dir.path().join("fewshot.svg").exists());
}

#[test]
fn fewshot_plot_has_one_vertex_per_fraction() {
    let t = table(&[1, 2, 3, 4, 5], &[5, 5, 5, 5, 5]);
    let reports: Vec<MetricsReport> = [0.05, 0.2, 1.0].iter().map(|&f| report("gt", f, t.clone(), vec![])).collect();
    assert_eq!(vertex_counts(&fewshot_svg(&reports).unwrap()), vec![3]);
}

#[test]
fn run_directory_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let r = report("gt", 1.0, table(&[1, 1, 1, 1, 1], &[2, 2, 2, 2, 2]), vec![point(1, Some(2.0), None), point(2, None, Some(1.0))]);
    write_run(dir.path(), &r).unwrap();
    for f in ["metrics.json", "accuracy.csv", "accuracy.txt", "curve.csv", "curve.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let loaded = vqprobe::report::load_reports(&dir.path().join("metrics.json")).unwrap();
    assert_eq!(loaded, vec![r]);
    std::fs::write(dir.path().join("bad.json"), "{").unwrap();
    assert!(vqprobe::report::load_reports(&dir.path().join("bad.json")).is_err());
}

#[test]
fn curve_csv_round_trips() {
    let curve = vec![point(100, Some(0.1 + 0.2), None), point(313, None, Some(1.0 / 3.0))];
    let parsed: Vec<CurvePoint> = rows_from_csv(&curve_csv(&curve).unwrap()).unwrap();
    assert_eq!(parsed, curve);
}

proptest! {
    #[test]
    fn accuracy_csv_round_trips(
        counts in proptest::collection::vec((0usize..50, 1usize..50), 5),
        fraction in 0.001f64..=1.0,
    ) {
        let total: Vec<usize> = counts.iter().map(|c| c.1).collect();
        let correct: Vec<usize> = counts.iter().map(|c| c.0.min(c.1)).collect();
        let r = report("gt", fraction, table(&correct, &total), vec![]);
        let parsed: Vec<AccuracyRow> = rows_from_csv(&accuracy_csv(std::slice::from_ref(&r)).unwrap()).unwrap();
        prop_assert_eq!(parsed, accuracy_rows(&[r]));
    }

    #[test]
    fn overall_is_the_weighted_family_mean(
        counts in proptest::collection::vec((0usize..200, 0usize..200), 5),
    ) {
        let total: Vec<usize> = counts.iter().map(|c| c.1).collect();
        prop_assume!(total.iter().sum::<usize>() > 0);
        let correct: Vec<usize> = counts.iter().map(|c| c.0.min(c.1)).collect();
        let t = table(&correct, &total);
        let weighted: f64 = t.families.iter().map(|f| f.accuracy * f.total as f64).sum::<f64>() / t.questions as f64;
        prop_assert!((weighted - t.overall).abs() <= 1e-9);
    }
}

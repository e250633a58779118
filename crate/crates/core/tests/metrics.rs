use collusion_core::metrics::{detection_f1, f1, mitigation_f1, DetectionOutcome, MetricRow};
use collusion_core::mitigation::report::{ClassificationReport, ReportStage};
use collusion_core::model::{SimTime, WorkerClass, WorkerId};
use collusion_core::sim::{run, Scheme};
use collusion_core::config::ScenarioConfig;
use proptest::prelude::*;

fn report(colluding: Vec<u32>, honest: Vec<u32>) -> ClassificationReport {
    ClassificationReport {
        honest: honest.into_iter().map(WorkerId).collect(),
        colluding: colluding.into_iter().map(WorkerId).collect(),
        malicious: Vec::new(),
        end_time: SimTime::ZERO,
        stage: ReportStage::Verified,
        inconclusive: false,
        reduced_confidence: false,
    }
}

fn roster_10_10() -> Vec<WorkerClass> {
    let mut r = vec![WorkerClass::Honest; 10];
    r.extend(vec![WorkerClass::Colluding; 10]);
    r
}

#[test]
fn detection_f1_examples() {
    let tp = DetectionOutcome::TruePositive { delay_s: 1.0, epochs: 1 };
    let mut rows = vec![tp; 98];
    rows.extend([DetectionOutcome::Missed; 2]);
    assert!((detection_f1(&rows).unwrap() - 0.98990).abs() < 1e-4);
    assert_eq!(detection_f1(&[tp; 5]), Some(1.0));
    assert_eq!(detection_f1(&[DetectionOutcome::Missed; 5]), Some(0.0));
    assert_eq!(detection_f1(&[DetectionOutcome::TrueNegative]), None);
}

#[test]
fn mitigation_f1_examples() {
    let roster = roster_10_10();
    let perfect = report((10..20).collect(), (0..10).collect());
    assert_eq!(mitigation_f1(Some(&perfect), &roster), (1.0, false));
    let one_off = report((9..20).collect(), (0..9).collect());
    assert!((mitigation_f1(Some(&one_off), &roster).0 - 0.952).abs() < 1e-3);
    let inverted = report((0..10).collect(), (10..20).collect());
    assert_eq!(mitigation_f1(Some(&inverted), &roster).0, 0.0);
    assert_eq!(mitigation_f1(None, &roster), (0.0, true));
}

proptest! {
    #[test]
    fn mitigation_f1_matches_recount(labels in proptest::collection::vec((any::<bool>(), 0u8..3), 1..30)) {
        let roster: Vec<WorkerClass> = labels.iter()
            .map(|&(c, _)| if c { WorkerClass::Colluding } else { WorkerClass::Honest })
            .collect();
        let mut r = report(Vec::new(), Vec::new());
        for (i, &(_, pred)) in labels.iter().enumerate() {
            let w = WorkerId(i as u32);
            match pred {
                0 => r.honest.push(w),
                1 => r.colluding.push(w),
                _ => r.malicious.push(w),
            }
        }
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for (&(truth, pred), _) in labels.iter().zip(&roster) {
            match (truth, pred) {
                (_, 2) => {}
                (true, 1) => tp += 1,
                (false, 1) => fp += 1,
                (true, _) => fneg += 1,
                _ => {}
            }
        }
        let expect = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64 };
        prop_assert_eq!(mitigation_f1(Some(&r), &roster).0, expect);
        prop_assert_eq!(f1(tp, fp, fneg), expect);
    }
}

#[test]
fn metric_rows_agree_with_traces() {
    let cfg = ScenarioConfig { colluding_fraction: 0.5, p_collude: 0.5, ..ScenarioConfig::default() };
    let t = run(&cfg, Scheme::Serene, 11).unwrap();
    let row = MetricRow::from_trace(&t, 0.5, 0.5, 5, 12);
    let a = t.activation.unwrap().as_secs();
    match t.first_detection() {
        Some(d) => {
            assert!(row.detected);
            assert!((row.detection_delay_s.unwrap() - (d.time.as_secs() - a)).abs() < 1e-9);
        }
        None => assert!(row.delay_or_inf().is_none() || row.delay_or_inf() == Some(f64::INFINITY)),
    }
    assert!((0.0..=1.0).contains(&row.mitigation_f1));
    assert_eq!(row.mitigation_f1, mitigation_f1(t.report.as_ref(), &t.roster).0);
}

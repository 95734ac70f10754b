mod common;

use common::{sample_sd, sigma_mean_scan, threshold_mean_scan};
use metroqkd_core::jinan::{self, FIELD_RECORDS};
use metroqkd_core::pipeline::{parse_log, AuthMode, LogRecord, RoundAction};
use metroqkd_core::stats::{
    build_report, daily_key_rates, daily_series, eliminate_3sigma, mean_qber_with_threshold,
    mean_with_3sigma_elimination, parse_report_csv, render_daily_csv, render_report_csv,
    ReportOptions, SigmaPolicy, StatsError,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn record(t: f64, conn: &str, route: &str, bits: u64, qber: f64, action: RoundAction) -> LogRecord {
    LogRecord {
        timestamp_s: t,
        connection: conn.parse().unwrap(),
        route: route.into(),
        qber,
        key_bits_out: bits,
        leaked_bits: 100,
        action,
        auth_mode: AuthMode::Pqc,
    }
}

#[test]
fn spike_example_matches_scan() {
    let v = [10.0, 10.0, 10.0, 10.0, 1000.0];
    assert!(close(
        mean_with_3sigma_elimination(&v).unwrap(),
        sigma_mean_scan(&v)
    ));
    // Five points cannot put one beyond 3 sample sigma, so the spike stays.
    assert!(close(mean_with_3sigma_elimination(&v).unwrap(), 208.0));
    let mut long = vec![10.0; 40];
    long.push(1000.0);
    assert!(close(mean_with_3sigma_elimination(&long).unwrap(), 10.0));
    assert_eq!(mean_with_3sigma_elimination(&[]), Err(StatsError::Empty));
}

#[test]
fn rules_match_scans_on_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..10_000 {
        let n = rng.random_range(1..60);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..50.0)).collect();
        if rng.random_bool(0.3) {
            let k = rng.random_range(0..n);
            v[k] *= rng.random_range(10.0..1000.0);
        }
        assert!(close(
            mean_with_3sigma_elimination(&v).unwrap(),
            sigma_mean_scan(&v)
        ));
        let q: Vec<f64> = v.iter().map(|x| x / 1000.0).collect();
        let got = mean_qber_with_threshold(&q, 0.03125).unwrap();
        match (got, threshold_mean_scan(&q, 0.03125)) {
            (Some(a), Some(b)) => assert!(close(a, b)),
            (a, b) => assert_eq!(a, b),
        }
    }
}

#[test]
fn iterated_policy_reaches_fixpoint() {
    let mut v = vec![10.0; 200];
    v.extend([11.0, 9.0, 60.0, 400.0]);
    let policy = SigmaPolicy {
        sample_sd: true,
        iterate: true,
    };
    let kept = eliminate_3sigma(&v, &policy).unwrap();
    assert_eq!(
        eliminate_3sigma(&kept, &SigmaPolicy::default()).unwrap(),
        kept
    );
    assert!(!kept.contains(&60.0));
}

proptest! {
    #[test]
    fn scale_equivariance(v in prop::collection::vec(0.0f64..100.0, 1..50), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let a = mean_with_3sigma_elimination(&scaled).unwrap();
        let b = c * mean_with_3sigma_elimination(&v).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }

    #[test]
    fn survivors_within_own_spread_are_stable(v in prop::collection::vec(5.0f64..6.0, 12..80)) {
        let kept = eliminate_3sigma(&v, &SigmaPolicy::default()).unwrap();
        let m = kept.iter().sum::<f64>() / kept.len() as f64;
        let sd = sample_sd(&kept);
        prop_assume!(kept.iter().all(|x| (x - m).abs() <= 3.0 * sd));
        prop_assert_eq!(eliminate_3sigma(&kept, &SigmaPolicy::default()).unwrap(), kept);
    }

    #[test]
    fn threshold_mean_bounded_by_max_kept(v in prop::collection::vec(0.0f64..0.1, 1..50)) {
        if let Some(m) = mean_qber_with_threshold(&v, 0.03125).unwrap() {
            let max = v.iter().copied().filter(|q| *q <= 0.03125).fold(f64::MIN, f64::max);
            prop_assert!(m <= max + 1e-15);
        }
    }
}

#[test]
fn daily_series_identity_and_order_independence() {
    let day = 86_400.0;
    let samples: Vec<(f64, f64)> = (0..36)
        .map(|d| (d as f64 * day + 10.0, d as f64 + 0.5))
        .collect();
    let s = daily_series(&samples, day, 36, &SigmaPolicy::default());
    assert_eq!(s.len(), 36);
    for (d, v) in s.iter().enumerate() {
        assert_eq!(*v, Some(d as f64 + 0.5));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let many: Vec<(f64, f64)> = (0..2000)
        .map(|_| {
            (
                rng.random_range(0.0..36.0 * day),
                rng.random_range(0.0..40.0),
            )
        })
        .collect();
    let base = daily_series(&many, day, 36, &SigmaPolicy::default());
    for _ in 0..20 {
        let mut shuffled = many.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(
            daily_series(&shuffled, day, 36, &SigmaPolicy::default()),
            base
        );
    }
    let sparse = daily_series(&samples[..3], day, 36, &SigmaPolicy::default());
    assert_eq!(sparse.iter().filter(|v| v.is_none()).count(), 33);
}

#[test]
fn empty_log_gives_empty_report() {
    let rows = build_report(&[], &jinan::topology(), &ReportOptions::default()).unwrap();
    assert!(rows.is_empty());
    assert_eq!(
        render_report_csv(&rows).trim(),
        "connection,route,length_km,loss_db,pairing_count,key_rate_kbps,qber"
    );
}

#[test]
fn two_epochs_count_twice_and_rates_follow_definition() {
    let route = "U4->X1->U3";
    let recs = vec![
        record(0.0, "U4-U3", route, 30_000, 0.01, RoundAction::Keep),
        record(1.0, "U4-U3", route, 0, 0.04, RoundAction::Discard),
        record(2.0, "U4-U3", route, 0, 0.0, RoundAction::AuthFailed),
        record(1800.0, "U4-U3", route, 20_000, 0.02, RoundAction::Keep),
    ];
    let rows = build_report(&recs, &jinan::topology(), &ReportOptions::default()).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(r.pairing_count, 2);
    // Epoch rates 10 and 20 kbps.
    assert!(close(r.key_rate_kbps.unwrap(), 15.0));
    // The auth-failed round carries no measurement, the 0.04 is over threshold.
    assert!(close(r.qber.unwrap(), 0.015));
    assert!((r.loss_db - 4.8).abs() < 0.01);
}

#[test]
fn jinan_log_reproduces_loss_column_and_round_trips() {
    let mut recs = Vec::new();
    for (i, f) in FIELD_RECORDS.iter().enumerate() {
        let conn = format!("{}-{}", f.transmitter, f.receiver);
        for k in 0..4 {
            let t = (k * 1800 + i) as f64;
            recs.push(record(
                t,
                &conn,
                f.route,
                1000 + i as u64,
                f.qber,
                RoundAction::Keep,
            ));
        }
    }
    let rows = build_report(&recs, &jinan::topology(), &ReportOptions::default()).unwrap();
    assert_eq!(rows.len(), 30);
    for f in &FIELD_RECORDS {
        let r = rows
            .iter()
            .find(|r| r.connection == f.connection())
            .unwrap();
        assert!(
            (r.loss_db - f.loss_db).abs() <= 0.01,
            "{}: {} vs {}",
            f.route,
            r.loss_db,
            f.loss_db
        );
        assert_eq!(r.pairing_count, 4);
        assert!(r.length_km.is_some());
    }
    let csv = render_report_csv(&rows);
    let parsed = parse_report_csv(&csv).unwrap();
    assert_eq!(render_report_csv(&parsed), csv);
    assert_eq!(
        parse_report_csv(&render_report_csv(&parsed)).unwrap(),
        parsed
    );

    let daily = daily_key_rates(&recs, &ReportOptions::default(), 36);
    assert_eq!(daily.len(), 30 * 36);
    let text = render_daily_csv(&daily);
    assert!(text.starts_with("day,connection,key_rate_kbps\n"));
    assert!(text.contains("\n1,U2-U1,\n"));
}

#[test]
fn malformed_inputs_report_line_numbers() {
    let log =
        "0.000 U4-U3 U4->X1->U3 0.01 1 1 keep pqc\n0.000 U4-U3 U4->X1->U3 zero 1 1 keep pqc\n";
    assert_eq!(parse_log(log).unwrap_err().line, 2);
    let csv = "connection,route,length_km,loss_db,pairing_count,key_rate_kbps,qber\n\
               U4-U3,U4->X1->U3,2.5,4.80,3,29.9,0.006\nU2-U1,U2->X1->U1,,x,1,,\n";
    match parse_report_csv(csv) {
        Err(StatsError::Csv { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

use std::collections::BTreeSet;

use metroqkd_core::jinan::{self, FIELD_RECORDS};
use metroqkd_core::topology::{
    classify_connections, derive_segment_losses, feasible_connections, min_loss_route,
    min_switch_routes, path_loss, ConnectionId, ConnectionStatus, FeasibilityPolicy, NodeId,
    NodeKind, Route, Topology, MAX_FIT_RESIDUAL_DB,
};
use proptest::prelude::*;

// Independent oracle: every simple path through switches only, found by
// brute-force enumeration of node permutations of increasing length.
fn all_switch_paths(t: &Topology, tx: &str, rx: &str) -> Vec<Vec<String>> {
    let switches: Vec<String> = t
        .nodes_of_kind(NodeKind::Switch)
        .iter()
        .map(|n| n.to_string())
        .collect();
    let mut out = Vec::new();
    let mut stack: Vec<Vec<String>> = vec![vec![]];
    while let Some(interior) = stack.pop() {
        let mut hops = vec![tx.to_string()];
        hops.extend(interior.iter().cloned());
        hops.push(rx.to_string());
        let connected = hops.windows(2).all(|w| {
            t.segment(&NodeId::new(&w[0]), &NodeId::new(&w[1]))
                .is_some()
        });
        if connected {
            out.push(hops);
        }
        for s in &switches {
            if !interior.contains(s) {
                let mut next = interior.clone();
                next.push(s.clone());
                stack.push(next);
            }
        }
    }
    out
}

fn oracle_loss(t: &Topology, hops: &[String]) -> f64 {
    let fiber: f64 = hops
        .windows(2)
        .map(|w| {
            t.segment(&NodeId::new(&w[0]), &NodeId::new(&w[1]))
                .unwrap()
                .loss_db
        })
        .sum();
    fiber + 1.5 * (hops.len() - 2) as f64
}

#[test]
fn shipped_topology_shape() {
    let t = jinan::topology();
    assert_eq!(t.nodes().len(), 19);
    assert_eq!(t.nodes_of_kind(NodeKind::Switch).len(), 5);
    assert_eq!(t.transmitters().len(), 7);
    assert_eq!(t.receivers().len(), 7);
    assert_eq!(t.route_count(), 30);
}

#[test]
fn shipped_routes_match_field_records() {
    let t = jinan::topology();
    for rec in &FIELD_RECORDS {
        let declared = t.declared_route(&rec.connection()).expect("declared");
        assert_eq!(declared, &Route::parse(rec.route).unwrap(), "{}", rec.route);
        let l = path_loss(&t, declared).unwrap();
        assert!(
            (l.total_db - rec.loss_db).abs() <= 0.01,
            "{}: {} vs {}",
            rec.route,
            l.total_db,
            rec.loss_db
        );
        assert_eq!(l.total_db, l.fiber_db + l.switch_db);
    }
}

#[test]
fn path_loss_examples() {
    let t = jinan::topology();
    let l = path_loss(&t, &Route::parse("U2->X1->U1").unwrap()).unwrap();
    assert!((l.total_db - 4.1).abs() < 1e-9);
    let l = path_loss(&t, &Route::parse("U4->X1->X3->U14").unwrap()).unwrap();
    assert!((l.total_db - 11.0).abs() < 1e-9);
    assert!(path_loss(&t, &Route::parse("U2->U1").unwrap()).is_err());
}

#[test]
fn every_measured_cell_is_reproduced() {
    let t = jinan::topology();
    let m = jinan::loss_matrix();
    assert_eq!(m.total_cells(), 49);
    assert_eq!(m.cells.len(), 41);
    for (conn, &cell) in &m.cells {
        let route = match t.declared_route(conn) {
            Some(r) => r.clone(),
            None => min_switch_routes(&t, &conn.transmitter, &conn.receiver)
                .into_iter()
                .next()
                .unwrap(),
        };
        let l = path_loss(&t, &route).unwrap();
        assert!(
            (l.total_db - cell).abs() <= 0.01,
            "{conn}: {} vs {cell}",
            l.total_db
        );
    }
}

// Kaczmarz row-action iteration from zero converges to the minimum-norm
// solution of a consistent system; used to check the SVD-based fit.
#[test]
fn fit_agrees_with_kaczmarz_oracle() {
    let t = jinan::topology();
    let m = jinan::loss_matrix();
    let fit = derive_segment_losses(&t, &m).unwrap();
    assert!(fit.rank_deficient());
    assert_eq!(fit.unknowns, 20);
    assert_eq!(fit.rank, 17);
    assert!(fit.max_residual_db() <= MAX_FIT_RESIDUAL_DB);

    let keys: Vec<_> = fit.losses.keys().cloned().collect();
    let rows: Vec<(Vec<usize>, f64)> = fit
        .routes
        .iter()
        .map(|(conn, route)| {
            let cols = route
                .segments()
                .map(|k| keys.iter().position(|x| x == &k).unwrap())
                .collect();
            (cols, m.cells[conn] - 1.5 * route.switch_count() as f64)
        })
        .collect();
    let mut x = vec![0.0f64; keys.len()];
    for _ in 0..20_000 {
        for (cols, rhs) in &rows {
            let dot: f64 = cols.iter().map(|&j| x[j]).sum();
            let step = (rhs - dot) / cols.len() as f64;
            for &j in cols {
                x[j] += step;
            }
        }
    }
    for (k, xk) in keys.iter().zip(&x) {
        assert!(
            (fit.losses[k] - xk).abs() < 1e-6,
            "{k:?}: {} vs {xk}",
            fit.losses[k]
        );
    }

    // Non-negative refinement reproduces the shipped config.
    let nn = fit.nonnegative.as_ref().expect("non-negative point exists");
    for seg in t.segments() {
        assert!((nn[&seg.key] - seg.loss_db).abs() < 1e-3, "{:?}", seg.key);
    }
}

#[test]
fn gauge_direction_shows_in_fit() {
    // U4-column cells sit 1 dB below U2-column cells in every row.
    let t = jinan::topology();
    let fit = derive_segment_losses(&t, &jinan::loss_matrix()).unwrap();
    for losses in [&fit.losses, fit.preferred()] {
        let u2 = losses
            .iter()
            .find(|(k, _)| format!("{k:?}") == "U2~X1")
            .unwrap()
            .1;
        let u4 = losses
            .iter()
            .find(|(k, _)| format!("{k:?}") == "U4~X1")
            .unwrap()
            .1;
        assert!((u2 - u4 - 1.0).abs() < 1e-9);
    }
}

#[test]
fn default_policy_gives_thirty_connections() {
    let t = jinan::topology();
    let p = FeasibilityPolicy::default();
    let feasible = feasible_connections(&t, &p);
    let expected: BTreeSet<ConnectionId> = FIELD_RECORDS.iter().map(|r| r.connection()).collect();
    assert_eq!(feasible, expected);

    let classes = classify_connections(&t, &p);
    let by_loss: BTreeSet<String> = classes
        .iter()
        .filter(|c| matches!(c.status, ConnectionStatus::ExcludedByLoss { .. }))
        .map(|c| c.connection.to_string())
        .collect();
    let want: BTreeSet<String> = [
        "U11-U1", "U12-U1", "U11-U3", "U12-U3", "U7-U6", "U11-U6", "U12-U6", "U5-U9", "U11-U9",
        "U12-U9", "U5-U14",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    assert_eq!(by_loss, want);

    let by_switch: BTreeSet<String> = classes
        .iter()
        .filter(|c| c.status == ConnectionStatus::ExcludedBySwitches)
        .map(|c| c.connection.to_string())
        .collect();
    let mut want = BTreeSet::new();
    for tx in ["U7", "U8", "U11", "U12"] {
        for rx in ["U13", "U14"] {
            want.insert(format!("{tx}-{rx}"));
        }
    }
    assert_eq!(by_switch, want);
}

#[test]
fn min_loss_route_matches_exhaustive_oracle() {
    let t = jinan::topology();
    let p = FeasibilityPolicy::default();
    for tx in t.transmitters() {
        for rx in t.receivers() {
            let best = all_switch_paths(&t, tx.as_str(), rx.as_str())
                .into_iter()
                .filter(|h| h.len() - 2 <= p.max_switches_per_path)
                .map(|h| (oracle_loss(&t, &h), h))
                .filter(|(l, _)| *l <= p.max_loss_db)
                .min_by(|a, b| {
                    if (a.0 - b.0).abs() <= 1e-9 {
                        a.1.len().cmp(&b.1.len()).then_with(|| a.1.cmp(&b.1))
                    } else {
                        a.0.total_cmp(&b.0)
                    }
                });
            let got = min_loss_route(&t, &tx, &rx, &p);
            match (best, got) {
                (None, None) => {}
                (Some((_, h)), Some(r)) => {
                    let names: Vec<String> = r.hops().iter().map(|n| n.to_string()).collect();
                    assert_eq!(names, h);
                }
                (b, g) => panic!("{tx}-{rx}: oracle {b:?} vs {g:?}"),
            }
        }
    }
    let r = min_loss_route(&t, &"U2".into(), &"U9".into(), &p).unwrap();
    assert_eq!(r.to_string(), "U2->X1->X4->U9");
    assert!(min_loss_route(&t, &"U7".into(), &"U13".into(), &p).is_none());
    // U7 reaches U13 only through three switches.
    let shortest = min_switch_routes(&t, &"U7".into(), &"U13".into());
    assert!(shortest.iter().all(|r| r.switch_count() == 3));
}

#[test]
fn relaxed_switch_limit_admits_three_switch_paths() {
    let t = jinan::topology();
    let p = FeasibilityPolicy {
        max_switches_per_path: 3,
        max_loss_db: 100.0,
    };
    assert_eq!(feasible_connections(&t, &p).len(), 49);
}

fn random_losses(t: &Topology, seed_losses: &[f64]) -> Topology {
    let mut i = 0;
    t.map_losses(|_, _| {
        let v = seed_losses[i % seed_losses.len()];
        i += 1;
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_loss_is_additive_at_interior_switches(losses in prop::collection::vec(0.0f64..10.0, 20)) {
        let t = random_losses(&jinan::topology(), &losses);
        for route in t.routes() {
            let whole = path_loss(&t, route).unwrap();
            let hops = route.hops();
            for cut in 1..hops.len() - 1 {
                let fiber = |hs: &[NodeId]| -> f64 {
                    hs.windows(2).map(|w| t.segment(&w[0], &w[1]).unwrap().loss_db).sum()
                };
                let split = fiber(&hops[..=cut]) + fiber(&hops[cut..]) + 1.5 * route.switch_count() as f64;
                prop_assert!((whole.total_db - split).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn raising_a_segment_loss_never_grows_the_feasible_set(
        losses in prop::collection::vec(0.0f64..8.0, 20),
        which in 0usize..20,
        extra in 0.0f64..10.0,
    ) {
        let p = FeasibilityPolicy::default();
        let base = random_losses(&jinan::topology(), &losses);
        let before = feasible_connections(&base, &p);
        let mut i = 0;
        let raised = base.map_losses(|_, l| {
            let v = if i == which { l + extra } else { l };
            i += 1;
            v
        });
        let after = feasible_connections(&raised, &p);
        prop_assert!(after.is_subset(&before));
    }

    #[test]
    fn renaming_nodes_permutes_feasibility(shift in 1u32..50) {
        let t = jinan::topology();
        let rename = |n: &NodeId| NodeId::new(format!("N{}_{}", n.as_str(), shift));
        let renamed = t.renamed(rename).unwrap();
        let p = FeasibilityPolicy::default();
        let a: BTreeSet<String> = classify_connections(&t, &p)
            .into_iter()
            .filter_map(|c| match c.status {
                ConnectionStatus::Feasible { loss, .. } => Some(format!(
                    "N{}_{shift}-N{}_{shift}:{:.6}",
                    c.connection.transmitter, c.connection.receiver, loss.total_db
                )),
                _ => None,
            })
            .collect();
        let b: BTreeSet<String> = classify_connections(&renamed, &p)
            .into_iter()
            .filter_map(|c| match c.status {
                ConnectionStatus::Feasible { loss, .. } => Some(format!("{}:{:.6}", c.connection, loss.total_db)),
                _ => None,
            })
            .collect();
        prop_assert_eq!(a.len(), 30);
        prop_assert_eq!(a, b);
    }
}

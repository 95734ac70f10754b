//! Recover per-segment losses from a measured end-to-end loss matrix.
//!
//! Each measured cell gives one linear equation: the fiber losses along the
//! pair's route sum to the cell minus the switch insertion losses. The
//! system is usually rank-deficient (a transmitter-side and receiver-side
//! segment meeting at the same switch can trade loss freely), so the
//! minimum-norm least-squares solution is reported together with its rank.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{
    min_switch_routes, ConnectionId, LossMatrix, NodeKind, Route, SegmentKey, Topology,
    TopologyError, SWITCH_INSERTION_LOSS_DB,
};

/// Largest per-equation residual accepted from a fit.
pub const MAX_FIT_RESIDUAL_DB: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct SegmentFit {
    /// Minimum-norm least-squares losses. May contain small negative values.
    pub losses: BTreeMap<SegmentKey, f64>,
    /// Closest point to `losses` that also satisfies loss >= 0, if one
    /// exists within tolerance.
    pub nonnegative: Option<BTreeMap<SegmentKey, f64>>,
    pub rank: usize,
    pub unknowns: usize,
    /// Route used for each equation.
    pub routes: BTreeMap<ConnectionId, Route>,
    /// Signed residual (fitted minus measured) per equation.
    pub residuals: BTreeMap<ConnectionId, f64>,
}

impl SegmentFit {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.unknowns
    }

    pub fn max_residual_db(&self) -> f64 {
        self.residuals.values().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Losses to ship: the non-negative refinement when available.
    pub fn preferred(&self) -> &BTreeMap<SegmentKey, f64> {
        self.nonnegative.as_ref().unwrap_or(&self.losses)
    }

    /// Copy of `topology` carrying the preferred losses on fitted segments.
    pub fn apply(&self, topology: &Topology) -> Topology {
        let losses = self.preferred();
        topology.map_losses(|k, old| losses.get(k).copied().unwrap_or(old).max(0.0))
    }
}

fn equation_route(topology: &Topology, conn: &ConnectionId) -> Result<Route, TopologyError> {
    if let Some(r) = topology.declared_route(conn) {
        return Ok(r.clone());
    }
    min_switch_routes(topology, &conn.transmitter, &conn.receiver)
        .into_iter()
        .next()
        .ok_or_else(|| TopologyError::NoRoute(conn.to_string()))
}

/// Fits segment losses to every known cell of `matrix`. Declared routes are
/// used where present; other cells use a fewest-switch route.
pub fn derive_segment_losses(
    topology: &Topology,
    matrix: &LossMatrix,
) -> Result<SegmentFit, TopologyError> {
    let keys: Vec<SegmentKey> = topology.segments().map(|s| s.key.clone()).collect();
    let col: BTreeMap<&SegmentKey, usize> = keys.iter().enumerate().map(|(i, k)| (k, i)).collect();

    let mut routes = BTreeMap::new();
    let mut rows: Vec<(ConnectionId, Vec<usize>, f64)> = Vec::new();
    for (conn, &cell) in &matrix.cells {
        let route = equation_route(topology, conn)?;
        let switches = route
            .interior()
            .iter()
            .filter(|h| topology.kind(h) == Some(NodeKind::Switch))
            .count();
        let cols = route
            .segments()
            .map(|k| {
                col.get(&k).copied().ok_or_else(|| {
                    let (a, b) = k.endpoints();
                    TopologyError::MissingSegment(a.to_string(), b.to_string())
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((
            conn.clone(),
            cols,
            cell - SWITCH_INSERTION_LOSS_DB * switches as f64,
        ));
        routes.insert(conn.clone(), route);
    }

    let (m, n) = (rows.len(), keys.len());
    let mut a = DMatrix::<f64>::zeros(m, n);
    let mut b = DVector::<f64>::zeros(m);
    for (i, (_, cols, rhs)) in rows.iter().enumerate() {
        for &j in cols {
            a[(i, j)] += 1.0;
        }
        b[i] = *rhs;
    }

    let (x, rank, pinv) = min_norm_solve(&a, &b);

    let residual = &a * &x - &b;
    let mut residuals = BTreeMap::new();
    for (i, (conn, _, _)) in rows.iter().enumerate() {
        residuals.insert(conn.clone(), residual[i]);
    }
    if let Some((conn, r)) = residuals
        .iter()
        .find(|(_, r)| r.abs() > MAX_FIT_RESIDUAL_DB)
    {
        return Err(TopologyError::InconsistentFit {
            connection: conn.to_string(),
            residual_db: *r,
        });
    }

    let nonnegative = project_nonnegative(&a, &b, &pinv, &x).map(|v| {
        keys.iter()
            .cloned()
            .zip(v.iter().copied())
            .collect::<BTreeMap<_, _>>()
    });
    let losses = keys.iter().cloned().zip(x.iter().copied()).collect();

    Ok(SegmentFit {
        losses,
        nonnegative,
        rank,
        unknowns: n,
        routes,
        residuals,
    })
}

/// Minimum-norm least-squares solution, numerical rank and pseudo-inverse.
fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize, DMatrix<f64>) {
    let (m, n) = a.shape();
    let svd = a.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s));
    let tol = (smax * 1e-10 * (m.max(n) as f64)).max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let pinv = svd
        .pseudo_inverse(tol)
        .expect("SVD computed with both factors");
    (&pinv * b, rank, pinv)
}

/// Dykstra's alternating projections between the solution set {x : Ax = Ax0}
/// and the non-negative orthant, started at the minimum-norm solution.
fn project_nonnegative(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    pinv: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Option<DVector<f64>> {
    if x0.iter().all(|&v| v >= 0.0) {
        return Some(x0.clone());
    }
    let target = a * x0;
    let affine = |y: &DVector<f64>| y - pinv * (a * y - &target);
    let mut x = x0.clone();
    let mut p = DVector::zeros(x.len());
    let mut q = DVector::zeros(x.len());
    for _ in 0..200_000 {
        let y = (&x + &p).map(|v| v.max(0.0));
        p = &x + &p - &y;
        let next = affine(&(&y + &q));
        q = &y + &q - &next;
        let moved = (&next - &x).amax();
        x = next;
        if moved < 1e-13 {
            break;
        }
    }
    let x = x.map(|v| if v.abs() < 1e-9 { 0.0 } else { v });
    let worst = (a * &x - b).amax();
    (x.iter().all(|&v| v >= 0.0) && worst <= MAX_FIT_RESIDUAL_DB).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_equation_system_has_the_obvious_solution() {
        // a + b = 2, b = 1
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 1.0]);
        let (x, rank, _) = min_norm_solve(&a, &b);
        assert_eq!(rank, 2);
        assert!(
            (x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12,
            "{x}"
        );
    }

    fn star() -> Topology {
        Topology::builder()
            .node("T1", NodeKind::Transmitter)
            .node("T2", NodeKind::Transmitter)
            .node("R", NodeKind::Receiver)
            .node("X", NodeKind::Switch)
            .segment("T1", "X", 0.0, None)
            .segment("T2", "X", 0.0, None)
            .segment("X", "R", 0.0, None)
            .build()
            .unwrap()
    }

    fn matrix(cells: &[(&str, f64)]) -> LossMatrix {
        LossMatrix {
            transmitters: vec!["T1".into(), "T2".into()],
            receivers: vec!["R".into()],
            cells: cells
                .iter()
                .map(|(tx, v)| (ConnectionId::new(*tx, "R"), *v))
                .collect(),
        }
    }

    #[test]
    fn underdetermined_star_is_flagged_and_exact() {
        let fit = derive_segment_losses(&star(), &matrix(&[("T1", 3.5), ("T2", 4.5)])).unwrap();
        assert_eq!(fit.rank, 2);
        assert!(fit.rank_deficient());
        assert!(fit.max_residual_db() < 1e-9);
        let nn = fit.preferred();
        assert!(nn.values().all(|&v| v >= 0.0));
    }

    #[test]
    fn negative_min_norm_component_is_repaired() {
        // T1 path 0.5 dB of fiber, T2 path 4 dB: min-norm puts X-R at 1.5
        // and T1-X at -1.0; the repair shifts loss onto the shared segment.
        let fit = derive_segment_losses(&star(), &matrix(&[("T1", 2.0), ("T2", 5.5)])).unwrap();
        assert!(fit.losses.values().any(|&v| v < 0.0));
        let nn = fit.nonnegative.as_ref().expect("feasible");
        assert!(nn.values().all(|&v| v >= 0.0));
        let applied = fit.apply(&star());
        let r = Route::parse("T1->X->R").unwrap();
        let l = super::super::path_loss(&applied, &r).unwrap();
        assert!((l.total_db - 2.0).abs() < 1e-6, "{l:?}");
    }
}

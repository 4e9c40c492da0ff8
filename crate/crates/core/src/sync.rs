//! Weighted least-squares fusion of pairwise CFO/TO measurements over the
//! anchor graph, and propagation to non-anchor APs.
//!
//! A record `(i, j)` holds the measurement taken at receiver `i` of a burst
//! sent by `j`: `dDelta = Delta_j - Delta_i + z`, `dMu = mu_j - mu_i + w`,
//! with weights `beta = beta_{j,i}` and `gamma = gamma_{j,i}`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ofdm::{normalized_offsets, NodeClock, OfdmParams};
use crate::topology::{AnchorSet, NetworkGraph};

/// Relative singular-value threshold for the rank test.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("measurement {tx} -> {rx} has no reverse direction")]
    UnpairedMeasurement { rx: usize, tx: usize },
    #[error("anchor measurement graph is disconnected")]
    DisconnectedAnchorGraph,
    #[error("reduced Laplacian has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("non-anchor node {0} has no measurement from an anchor")]
    NoAnchorNeighbor(usize),
    #[error("measurement {tx} -> {rx} has a non-positive or non-finite weight")]
    InvalidWeight { rx: usize, tx: usize },
    #[error("duplicate measurement {tx} -> {rx}")]
    DuplicateMeasurement { rx: usize, tx: usize },
    #[error("reference node {0} is not an anchor")]
    UnknownReference(usize),
    #[error("measurement CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// One directed measurement, receiver `i`, transmitter `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "dDelta")]
    pub d_delta: f64,
    #[serde(rename = "dMu")]
    pub d_mu: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSet {
    records: Vec<MeasurementRecord>,
    index: BTreeMap<(usize, usize), usize>,
}

impl MeasurementSet {
    pub fn new(records: Vec<MeasurementRecord>) -> Result<Self, SyncError> {
        let mut index = BTreeMap::new();
        for (k, r) in records.iter().enumerate() {
            if !(r.beta > 0.0 && r.gamma > 0.0 && r.beta.is_finite() && r.gamma.is_finite()) {
                return Err(SyncError::InvalidWeight { rx: r.i, tx: r.j });
            }
            if index.insert((r.i, r.j), k).is_some() {
                return Err(SyncError::DuplicateMeasurement { rx: r.i, tx: r.j });
            }
        }
        Ok(MeasurementSet { records, index })
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    /// Measurement at `rx` of the burst from `tx`.
    pub fn get(&self, rx: usize, tx: usize) -> Option<&MeasurementRecord> {
        self.index.get(&(rx, tx)).map(|&k| &self.records[k])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SyncError> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads records; lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, SyncError> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let records = rd.deserialize().collect::<Result<Vec<MeasurementRecord>, _>>()?;
        Self::new(records)
    }
}

/// Exact measurements for the given directed links, `(rx, tx)` pairs.
pub fn noiseless_measurements(
    clocks: &[NodeClock],
    links: impl IntoIterator<Item = (usize, usize)>,
    params: &OfdmParams,
) -> MeasurementSet {
    let off: Vec<_> = clocks.iter().map(|c| normalized_offsets(c, params)).collect();
    let records = links
        .into_iter()
        .map(|(i, j)| MeasurementRecord {
            i,
            j,
            d_delta: off[j].big_delta - off[i].big_delta,
            d_mu: off[j].mu - off[i].mu,
            beta: 0.5,
            gamma: 0.5,
        })
        .collect();
    MeasurementSet::new(records).expect("uniform weights, unique links")
}

/// Which measured quantity a Laplacian system is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `dDelta` with weights `beta`.
    Frequency,
    /// `dMu` with weights `gamma`.
    Timing,
}

impl Quantity {
    fn pick(self, r: &MeasurementRecord) -> (f64, f64) {
        match self {
            Quantity::Frequency => (r.d_delta, r.beta),
            Quantity::Timing => (r.d_mu, r.gamma),
        }
    }
}

/// Weighted Laplacian `L` and right-hand side `u`, indexed by position in
/// the anchor list.
pub fn build_weighted_laplacian(
    measurements: &MeasurementSet,
    anchors: &AnchorSet,
    quantity: Quantity,
) -> Result<(DMatrix<f64>, DVector<f64>), SyncError> {
    let n = anchors.len();
    let mut l = DMatrix::zeros(n, n);
    let mut u = DVector::zeros(n);
    let mut seen = BTreeSet::new();
    for &(a, b) in anchors.induced_edges() {
        if a > b || !seen.insert((a, b)) {
            continue;
        }
        // Record (b, a): a transmits, b receives; and the reverse.
        let ab = measurements.get(b, a).ok_or(SyncError::UnpairedMeasurement { rx: b, tx: a })?;
        let ba = measurements.get(a, b).ok_or(SyncError::UnpairedMeasurement { rx: a, tx: b })?;
        let (m_ab, w_ab) = quantity.pick(ab);
        let (m_ba, w_ba) = quantity.pick(ba);
        let (ia, ib) = (anchors.index_of(a).expect("anchor"), anchors.index_of(b).expect("anchor"));
        let w = w_ab + w_ba;
        l[(ia, ia)] += w;
        l[(ib, ib)] += w;
        l[(ia, ib)] -= w;
        l[(ib, ia)] -= w;
        u[ia] += w_ab * m_ab - w_ba * m_ba;
        u[ib] += w_ba * m_ba - w_ab * m_ab;
    }
    if !laplacian_connected(&l) {
        return Err(SyncError::DisconnectedAnchorGraph);
    }
    Ok((l, u))
}

fn laplacian_connected(l: &DMatrix<f64>) -> bool {
    let n = l.nrows();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for w in 0..n {
            if w != v && l[(v, w)] != 0.0 && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Least-squares solution of `L x = u` with `x[reference] = 0`, obtained
/// from the reduced matrix `L1` (reference column dropped) via SVD.
pub fn solve_corrections(l: &DMatrix<f64>, u: &DVector<f64>, reference: usize) -> Result<Vec<f64>, SyncError> {
    let n = l.nrows();
    if reference >= n {
        return Err(SyncError::UnknownReference(reference));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let l1 = l.clone().remove_column(reference);
    let svd = l1.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count();
    if rank < n - 1 {
        return Err(SyncError::RankDeficient { rank, expected: n - 1 });
    }
    let xi = svd.solve(u, RANK_TOL * smax).map_err(|_| SyncError::RankDeficient { rank, expected: n - 1 })?;
    let mut out = Vec::with_capacity(n);
    let mut it = xi.iter();
    for k in 0..n {
        out.push(if k == reference { 0.0 } else { *it.next().expect("n - 1 unknowns") });
    }
    Ok(out)
}

/// Weighted LS cost of a candidate solution over the anchor records.
pub fn ls_cost(measurements: &MeasurementSet, anchors: &AnchorSet, quantity: Quantity, x: &[f64]) -> f64 {
    anchors
        .induced_edges()
        .iter()
        .filter_map(|&(tx, rx)| measurements.get(rx, tx))
        .map(|r| {
            let (m, w) = quantity.pick(r);
            let (ti, ri) = (anchors.index_of(r.j).expect("anchor"), anchors.index_of(r.i).expect("anchor"));
            w * (m - (x[ti] - x[ri])).powi(2)
        })
        .sum()
}

/// Per-anchor corrections relative to the reference anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncSolution {
    pub anchors: Vec<usize>,
    pub reference: usize,
    /// `Delta_i^corr`, aligned with `anchors`.
    pub delta_corr: Vec<f64>,
    /// `mu_i^corr`, aligned with `anchors`.
    pub mu_corr: Vec<f64>,
}

impl SyncSolution {
    pub fn delta_of(&self, node: usize) -> Option<f64> {
        self.anchors.iter().position(|&a| a == node).map(|k| self.delta_corr[k])
    }

    pub fn mu_of(&self, node: usize) -> Option<f64> {
        self.anchors.iter().position(|&a| a == node).map(|k| self.mu_corr[k])
    }
}

fn reference_index(anchors: &AnchorSet, reference: usize) -> Result<usize, SyncError> {
    anchors.index_of(reference).ok_or(SyncError::UnknownReference(reference))
}

pub fn solve_frequency(measurements: &MeasurementSet, anchors: &AnchorSet, reference: usize) -> Result<Vec<f64>, SyncError> {
    let (l, u) = build_weighted_laplacian(measurements, anchors, Quantity::Frequency)?;
    solve_corrections(&l, &u, reference_index(anchors, reference)?)
}

pub fn solve_timing(measurements: &MeasurementSet, anchors: &AnchorSet, reference: usize) -> Result<Vec<f64>, SyncError> {
    let (l, u) = build_weighted_laplacian(measurements, anchors, Quantity::Timing)?;
    solve_corrections(&l, &u, reference_index(anchors, reference)?)
}

/// Frequency and timing corrections for all anchors.
pub fn synchronize(measurements: &MeasurementSet, anchors: &AnchorSet, reference: usize) -> Result<SyncSolution, SyncError> {
    Ok(SyncSolution {
        anchors: anchors.anchors().to_vec(),
        reference,
        delta_corr: solve_frequency(measurements, anchors, reference)?,
        mu_corr: solve_timing(measurements, anchors, reference)?,
    })
}

/// Corrections for every AP in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCorrections {
    pub delta_corr: Vec<f64>,
    pub mu_corr: Vec<f64>,
}

/// Each non-anchor listens to its anchor neighbors: from the record at
/// `n` of anchor `a`, `dDelta = Delta_a - Delta_n`, so the implied
/// correction is `corr_a - dDelta`. Several anchors are combined by a
/// weighted average (weights `beta`, `gamma`).
pub fn propagate_to_nonanchors(
    solution: &SyncSolution,
    graph: &NetworkGraph,
    anchors: &AnchorSet,
    measurements: &MeasurementSet,
) -> Result<NetworkCorrections, SyncError> {
    let n = graph.node_count();
    let mut delta_corr = vec![0.0; n];
    let mut mu_corr = vec![0.0; n];
    for (k, &a) in solution.anchors.iter().enumerate() {
        delta_corr[a] = solution.delta_corr[k];
        mu_corr[a] = solution.mu_corr[k];
    }
    for node in (0..n).filter(|&v| !anchors.is_anchor(v)) {
        let (mut sd, mut wd, mut sm, mut wm) = (0.0, 0.0, 0.0, 0.0);
        for &a in graph.neighbors(node).iter().filter(|&&a| anchors.is_anchor(a)) {
            let Some(r) = measurements.get(node, a) else { continue };
            let (da, ma) = (solution.delta_of(a).expect("anchor"), solution.mu_of(a).expect("anchor"));
            sd += r.beta * (da - r.d_delta);
            wd += r.beta;
            sm += r.gamma * (ma - r.d_mu);
            wm += r.gamma;
        }
        if wd == 0.0 {
            return Err(SyncError::NoAnchorNeighbor(node));
        }
        delta_corr[node] = sd / wd;
        mu_corr[node] = sm / wm;
    }
    Ok(NetworkCorrections { delta_corr, mu_corr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::validate_anchor_cover;

    fn rec(i: usize, j: usize, d: f64, beta: f64) -> MeasurementRecord {
        MeasurementRecord { i, j, d_delta: d, d_mu: d, beta, gamma: beta }
    }

    #[test]
    fn two_anchor_laplacian() {
        let g = NetworkGraph::from_edge_list(2, &[(0, 1)]).unwrap();
        let a = validate_anchor_cover(&g, &[0, 1]).unwrap();
        let m = MeasurementSet::new(vec![rec(0, 1, 0.3, 1.0), rec(1, 0, -0.3, 1.0)]).unwrap();
        let (l, _) = build_weighted_laplacian(&m, &a, Quantity::Frequency).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
    }

    #[test]
    fn uniform_weights_give_graph_laplacian() {
        let g = NetworkGraph::from_edge_list(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        let a = validate_anchor_cover(&g, &[0, 1, 2, 3]).unwrap();
        let clocks: Vec<_> = (0..4).map(|k| NodeClock::new(0.0, 100.0 * k as f64)).collect();
        let m = noiseless_measurements(&clocks, g.directed_edges().map(|(i, j)| (j, i)), &OfdmParams::default());
        let (l, _) = build_weighted_laplacian(&m, &a, Quantity::Frequency).unwrap();
        for i in 0..4 {
            assert_eq!(l[(i, i)], g.degree(i) as f64);
            for j in 0..4 {
                if i != j {
                    assert_eq!(l[(i, j)], if g.has_edge(i, j) { -1.0 } else { 0.0 });
                }
            }
            assert_eq!(l.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn two_node_noisy_closed_form() {
        // xi_1 = (dDelta_{1->0} - dDelta_{0->1}) / 2 with equal weights.
        let g = NetworkGraph::from_edge_list(2, &[(0, 1)]).unwrap();
        let a = validate_anchor_cover(&g, &[0, 1]).unwrap();
        let m = MeasurementSet::new(vec![rec(0, 1, 0.31, 0.5), rec(1, 0, -0.27, 0.5)]).unwrap();
        let x = solve_frequency(&m, &a, 0).unwrap();
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 0.29).abs() < 1e-14, "{}", x[1]);
    }

    #[test]
    fn unpaired_and_disconnected_rejected() {
        let g = NetworkGraph::from_edge_list(3, &[(0, 1), (1, 2)]).unwrap();
        let a = validate_anchor_cover(&g, &[0, 1, 2]).unwrap();
        let m = MeasurementSet::new(vec![rec(0, 1, 0.0, 0.5), rec(1, 0, 0.0, 0.5), rec(2, 1, 0.0, 0.5)]).unwrap();
        assert!(matches!(
            build_weighted_laplacian(&m, &a, Quantity::Frequency),
            Err(SyncError::UnpairedMeasurement { rx: 1, tx: 2 })
        ));
        let l = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            solve_corrections(&l, &DVector::zeros(3), 0),
            Err(SyncError::RankDeficient { rank: 1, expected: 2 })
        ));
        assert!(MeasurementSet::new(vec![rec(0, 1, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn propagation_cases() {
        // 0-1 anchors, 2 hears both, 3 hears only 1.
        let g = NetworkGraph::from_edge_list(4, &[(0, 1), (0, 2), (1, 2), (1, 3)]).unwrap();
        let a = validate_anchor_cover(&g, &[0, 1]).unwrap();
        let params = OfdmParams::default();
        let clocks: Vec<_> = [0.0, 300.0, -150.0, 720.0].iter().map(|&e| NodeClock::new(0.0, e)).collect();
        let mut links: Vec<_> = vec![(0, 1), (1, 0), (2, 0), (2, 1), (3, 1)];
        let m = noiseless_measurements(&clocks, links.drain(..), &params);
        let sol = synchronize(&m, &a, 0).unwrap();
        let full = propagate_to_nonanchors(&sol, &g, &a, &m).unwrap();
        let big = |k: usize| normalized_offsets(&clocks[k], &params).big_delta;
        for k in 0..4 {
            assert!((full.delta_corr[k] - (big(k) - big(0))).abs() < 1e-12);
        }
        assert_eq!(full.delta_corr[1], sol.delta_corr[1]);

        // Inconsistent measurements at node 2: mean of the two implied values.
        let mut recs = m.records().to_vec();
        for r in recs.iter_mut().filter(|r| r.i == 2) {
            r.d_delta += if r.j == 0 { 0.01 } else { -0.03 };
        }
        let m2 = MeasurementSet::new(recs).unwrap();
        let full2 = propagate_to_nonanchors(&sol, &g, &a, &m2).unwrap();
        assert!((full2.delta_corr[2] - (big(2) - big(0) + 0.01)).abs() < 1e-12);

        let lonely = MeasurementSet::new(m.records().iter().copied().filter(|r| r.i != 3).collect()).unwrap();
        assert!(matches!(propagate_to_nonanchors(&sol, &g, &a, &lonely), Err(SyncError::NoAnchorNeighbor(3))));
    }

    #[test]
    fn csv_round_trip() {
        let m = MeasurementSet::new(vec![rec(0, 1, 0.125, 0.5), rec(1, 0, -0.125, 2.0)]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,dDelta,dMu,beta,gamma\n"));
        let back = MeasurementSet::read_csv(format!("# comment\n{text}").as_bytes()).unwrap();
        assert_eq!(back, m);
    }
}

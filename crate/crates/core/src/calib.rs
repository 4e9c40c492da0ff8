//! TDD reciprocity calibration from bidirectional AP-AP pilot exchanges.
//!
//! Observation on edge `(i, j)`: `Y_{j->i} = T_j B_{j->i} R_i + Z` with a
//! unit pilot. The relative coefficients `c_i = R_i / T_i` satisfy
//! `c_j Y_{j->i} = c_i Y_{i->j}` in the noiseless case.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelRealization, HardwareCoeffs};
use crate::linalg::{complex_gaussian, hermitian_eigen, CMatrix};
use crate::topology::CalibrationSubgraph;

/// Default relative eigen-gap below which the LS solution is not unique.
pub const DEFAULT_EIGEN_GAP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("smallest eigenvalues are not separated (relative gap {gap:e})")]
    DegenerateNullspace { gap: f64 },
    #[error("observation from node {0} to the star center is below the floor")]
    ZeroDenominator(usize),
    #[error("no observation on edge ({0}, {1})")]
    MissingEdge(usize, usize),
    #[error("dimension mismatch: got {got}, expected {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("calibration CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Both directions of one undirected edge, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeObservation {
    pub i: usize,
    pub j: usize,
    /// `Y_{j->i}`, received at `i`.
    pub y_ji: Complex64,
    /// `Y_{i->j}`, received at `j`.
    pub y_ij: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationObservations {
    n_ap: usize,
    edges: Vec<EdgeObservation>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    i: usize,
    j: usize,
    y_ji_re: f64,
    y_ji_im: f64,
    y_ij_re: f64,
    y_ij_im: f64,
}

impl CalibrationObservations {
    pub fn new(n_ap: usize, mut edges: Vec<EdgeObservation>) -> Self {
        for e in edges.iter_mut() {
            if e.i > e.j {
                *e = EdgeObservation { i: e.j, j: e.i, y_ji: e.y_ij, y_ij: e.y_ji };
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        CalibrationObservations { n_ap, edges }
    }

    pub fn n_ap(&self) -> usize {
        self.n_ap
    }

    pub fn edges(&self) -> &[EdgeObservation] {
        &self.edges
    }

    /// `Y_{tx->rx}` if the edge was observed.
    pub fn y(&self, tx: usize, rx: usize) -> Option<Complex64> {
        let (a, b) = if tx < rx { (tx, rx) } else { (rx, tx) };
        let e = self.edges.iter().find(|e| e.i == a && e.j == b)?;
        Some(if tx == e.j { e.y_ji } else { e.y_ij })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CalibError> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.edges {
            wr.serialize(EdgeRow {
                i: e.i,
                j: e.j,
                y_ji_re: e.y_ji.re,
                y_ji_im: e.y_ji.im,
                y_ij_re: e.y_ij.re,
                y_ij_im: e.y_ij.im,
            })?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(n_ap: usize, r: R) -> Result<Self, CalibError> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let mut edges = Vec::new();
        for row in rd.deserialize() {
            let row: EdgeRow = row?;
            if row.i >= n_ap || row.j >= n_ap {
                return Err(CalibError::DimensionMismatch { got: row.i.max(row.j) + 1, want: n_ap });
            }
            edges.push(EdgeObservation {
                i: row.i,
                j: row.j,
                y_ji: Complex64::new(row.y_ji_re, row.y_ji_im),
                y_ij: Complex64::new(row.y_ij_re, row.y_ij_im),
            });
        }
        Ok(Self::new(n_ap, edges))
    }
}

/// Observations over `subgraph` with propagation coefficients from
/// `coupling(i, j)`, which must be symmetric.
pub fn gather_observations_with<R: Rng + ?Sized>(
    coupling: impl Fn(usize, usize) -> Complex64,
    hardware: &HardwareCoeffs,
    subgraph: &CalibrationSubgraph,
    n0: f64,
    rng: &mut R,
) -> CalibrationObservations {
    let noise = |rng: &mut R| if n0 > 0.0 { complex_gaussian(rng, n0) } else { Complex64::new(0.0, 0.0) };
    let edges = subgraph
        .undirected_edges()
        .map(|(i, j)| {
            let b = coupling(i, j);
            let y_ji = hardware.ap_tx[j] * b * hardware.ap_rx[i] + noise(rng);
            let y_ij = hardware.ap_tx[i] * b * hardware.ap_rx[j] + noise(rng);
            EdgeObservation { i, j, y_ji, y_ij }
        })
        .collect();
    CalibrationObservations::new(subgraph.node_count(), edges)
}

/// Observations on subcarrier `nu` of a channel realization.
pub fn gather_observations<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    nu: usize,
    hardware: &HardwareCoeffs,
    subgraph: &CalibrationSubgraph,
    n0: f64,
    rng: &mut R,
) -> CalibrationObservations {
    gather_observations_with(|i, j| channel.ap_ap(i, j, nu), hardware, subgraph, n0, rng)
}

/// Hermitian matrix `A` with `J_cal(c) = c^H A c`.
pub fn build_a(obs: &CalibrationObservations) -> CMatrix {
    let n = obs.n_ap();
    let mut a = CMatrix::zeros(n, n);
    for e in obs.edges() {
        let (i, j) = (e.i, e.j);
        a[(i, i)] += Complex64::new(e.y_ij.norm_sqr(), 0.0);
        a[(j, j)] += Complex64::new(e.y_ji.norm_sqr(), 0.0);
        let off = -(e.y_ij.conj() * e.y_ji);
        a[(i, j)] = off;
        a[(j, i)] = off.conj();
    }
    a
}

/// `sum over edges |c_j Y_{j->i} - c_i Y_{i->j}|^2`.
pub fn j_cal(obs: &CalibrationObservations, c: &[Complex64]) -> f64 {
    obs.edges().iter().map(|e| (c[e.j] * e.y_ji - c[e.i] * e.y_ij).norm_sqr()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibMethod {
    Ls,
    Argos,
    Genie,
}

impl std::fmt::Display for CalibMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CalibMethod::Ls => "ls",
            CalibMethod::Argos => "argos",
            CalibMethod::Genie => "genie",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSolution {
    pub c: Vec<Complex64>,
    pub method: CalibMethod,
    /// `J_cal(c)` on the observations used (0 for genie).
    pub residual: f64,
}

#[derive(Serialize, Deserialize)]
struct CoeffRow {
    node: usize,
    method: CalibMethod,
    re: f64,
    im: f64,
}

impl CalibrationSolution {
    /// Copy rescaled to unit norm with the first entry real-positive.
    pub fn gauge_fixed(&self) -> Vec<Complex64> {
        gauge_fix(&self.c)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CalibError> {
        let mut wr = csv::Writer::from_writer(w);
        for (node, z) in self.c.iter().enumerate() {
            wr.serialize(CoeffRow { node, method: self.method, re: z.re, im: z.im })?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, CalibError> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let mut rows: Vec<CoeffRow> = rd.deserialize().collect::<Result<_, _>>()?;
        rows.sort_by_key(|r| r.node);
        let method = rows.first().map(|r| r.method).unwrap_or(CalibMethod::Ls);
        for (k, r) in rows.iter().enumerate() {
            if r.node != k {
                return Err(CalibError::DimensionMismatch { got: r.node, want: k });
            }
        }
        Ok(CalibrationSolution { c: rows.iter().map(|r| Complex64::new(r.re, r.im)).collect(), method, residual: 0.0 })
    }
}

/// Unit norm, first non-zero entry real-positive.
pub fn gauge_fix(c: &[Complex64]) -> Vec<Complex64> {
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return c.to_vec();
    }
    let anchor = c.iter().find(|z| z.norm() > 0.0).copied().unwrap_or(Complex64::new(1.0, 0.0));
    let rot = anchor.conj() / anchor.norm();
    c.iter().map(|z| z * rot / norm).collect()
}

/// `|<a, b>| / (|a| |b|)`.
pub fn alignment(a: &[Complex64], b: &[Complex64]) -> f64 {
    let dot: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    dot.norm() / (na * nb)
}

/// Unit-norm eigenvector of the smallest eigenvalue of `A`.
pub fn solve_ls_calibration(a: &CMatrix, min_rel_gap: f64) -> Result<CalibrationSolution, CalibError> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(CalibError::DimensionMismatch { got: a.ncols(), want: n });
    }
    let (vals, vecs) = hermitian_eigen(a);
    if n >= 2 {
        let scale = vals[n - 1].abs().max(f64::MIN_POSITIVE);
        let gap = (vals[1] - vals[0]) / scale;
        if gap <= min_rel_gap {
            return Err(CalibError::DegenerateNullspace { gap });
        }
    }
    let c: Vec<Complex64> = vecs.column(0).iter().copied().collect();
    Ok(CalibrationSolution { c: gauge_fix(&c), method: CalibMethod::Ls, residual: vals[0].max(0.0) })
}

/// Star calibration around `center`: `c_center = 1`,
/// `c_j = Y_{center->j} / Y_{j->center}`.
pub fn argos_calibration(obs: &CalibrationObservations, center: usize, floor: f64) -> Result<CalibrationSolution, CalibError> {
    let n = obs.n_ap();
    if center >= n {
        return Err(CalibError::DimensionMismatch { got: center, want: n });
    }
    let mut c = vec![Complex64::new(1.0, 0.0); n];
    for (j, cj) in c.iter_mut().enumerate().filter(|(j, _)| *j != center) {
        let fwd = obs.y(center, j).ok_or(CalibError::MissingEdge(center, j))?;
        let back = obs.y(j, center).ok_or(CalibError::MissingEdge(j, center))?;
        if !(back.norm() > floor) {
            return Err(CalibError::ZeroDenominator(j));
        }
        *cj = fwd / back;
    }
    let residual = j_cal(obs, &c);
    Ok(CalibrationSolution { c, method: CalibMethod::Argos, residual })
}

/// True `R_i / T_i`, gauge-fixed.
pub fn genie_calibration(hardware: &HardwareCoeffs) -> CalibrationSolution {
    CalibrationSolution { c: gauge_fix(&hardware.true_calibration()), method: CalibMethod::Genie, residual: 0.0 }
}

/// Element-wise multiplication of per-AP transmit samples by `c`.
pub fn apply_calibration(tx: &[Complex64], c: &[Complex64]) -> Result<Vec<Complex64>, CalibError> {
    if tx.len() != c.len() {
        return Err(CalibError::DimensionMismatch { got: tx.len(), want: c.len() });
    }
    Ok(tx.iter().zip(c).map(|(x, k)| x * k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_hardware_coeffs;
    use crate::topology::{build_calibration_subgraph, NetworkGraph, SubgraphStrategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clique(n: usize) -> NetworkGraph {
        let e: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        NetworkGraph::from_edge_list(n, &e).unwrap()
    }

    fn coupling(seed: u64) -> impl Fn(usize, usize) -> Complex64 {
        move |i, j| {
            let (a, b) = (i.min(j), i.max(j));
            let mut r = ChaCha8Rng::seed_from_u64(seed ^ ((a as u64) << 32 | b as u64));
            complex_gaussian(&mut r, 1.0)
        }
    }

    #[test]
    fn two_ap_matrix() {
        let obs = CalibrationObservations::new(
            2,
            vec![EdgeObservation { i: 0, j: 1, y_ji: Complex64::new(1.0, 0.0), y_ij: Complex64::new(1.0, 0.0) }],
        );
        let a = build_a(&obs);
        let want = CMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0].map(|x| Complex64::new(x, 0.0)));
        assert_eq!(a, want);
    }

    #[test]
    fn ideal_hardware_is_reciprocal() {
        let g = clique(4);
        let f = build_calibration_subgraph(&g, SubgraphStrategy::Full).unwrap();
        let hw = HardwareCoeffs::ideal(4, 0);
        let obs = gather_observations_with(coupling(1), &hw, &f, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        for e in obs.edges() {
            assert_eq!(e.y_ji, e.y_ij);
        }
    }

    #[test]
    fn noiseless_ls_recovers_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = clique(6);
        let f = build_calibration_subgraph(&g, SubgraphStrategy::Full).unwrap();
        let hw = sample_hardware_coeffs(&mut rng, 6, 0, 0.2);
        let obs = gather_observations_with(coupling(2), &hw, &f, 0.0, &mut rng);
        let c_true = hw.true_calibration();
        for e in obs.edges() {
            assert!((c_true[e.j] * e.y_ji - c_true[e.i] * e.y_ij).norm() < 1e-12);
        }
        let a = build_a(&obs);
        assert_eq!(a, a.adjoint());
        let ac = &a * crate::linalg::CVector::from_column_slice(&c_true);
        assert!(ac.norm() < 1e-12);
        let sol = solve_ls_calibration(&a, DEFAULT_EIGEN_GAP).unwrap();
        assert!(alignment(&sol.c, &c_true) > 1.0 - 1e-12);
        let trace: f64 = (0..6).map(|k| a[(k, k)].re).sum();
        assert!(sol.residual <= 1e-12 * trace);
        assert!((sol.c.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sol.c[0].im == 0.0 && sol.c[0].re > 0.0);
        let genie = genie_calibration(&hw);
        assert!(alignment(&sol.c, &genie.c) > 1.0 - 1e-9);
    }

    #[test]
    fn j_cal_scales_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = clique(5);
        let f = build_calibration_subgraph(&g, SubgraphStrategy::Full).unwrap();
        let hw = sample_hardware_coeffs(&mut rng, 5, 0, 0.2);
        let obs = gather_observations_with(coupling(5), &hw, &f, 0.1, &mut rng);
        let c: Vec<Complex64> = (0..5).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let alpha = Complex64::new(0.7, -1.3);
        let scaled: Vec<_> = c.iter().map(|z| z * alpha).collect();
        let (j1, j2) = (j_cal(&obs, &c), j_cal(&obs, &scaled));
        assert!((j2 - alpha.norm_sqr() * j1).abs() < 1e-10 * j2);
        let a = build_a(&obs);
        let v = crate::linalg::CVector::from_column_slice(&c);
        assert!((v.dotc(&(&a * &v)).re - j1).abs() < 1e-10 * j1);
    }

    #[test]
    fn argos_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = clique(5);
        let star = build_calibration_subgraph(&g, SubgraphStrategy::Star { center: 1 }).unwrap();
        let hw = sample_hardware_coeffs(&mut rng, 5, 0, 0.2);
        let obs = gather_observations_with(coupling(7), &hw, &star, 0.0, &mut rng);
        let sol = argos_calibration(&obs, 1, 0.0).unwrap();
        assert_eq!(sol.c[1], Complex64::new(1.0, 0.0));
        assert!(alignment(&sol.c, &hw.true_calibration()) > 1.0 - 1e-12);

        let ideal = gather_observations_with(coupling(7), &HardwareCoeffs::ideal(5, 0), &star, 0.0, &mut rng);
        let ones = argos_calibration(&ideal, 1, 0.0).unwrap();
        assert!(ones.c.iter().all(|z| (z - 1.0).norm() < 1e-12));

        let dead = gather_observations_with(|_, _| Complex64::new(0.0, 0.0), &hw, &star, 0.0, &mut rng);
        assert!(matches!(argos_calibration(&dead, 1, 1e-30), Err(CalibError::ZeroDenominator(_))));
        let path = CalibrationSubgraph::from_undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let obs_path = gather_observations_with(coupling(7), &hw, &path, 0.0, &mut rng);
        assert!(matches!(argos_calibration(&obs_path, 0, 0.0), Err(CalibError::MissingEdge(..))));
    }

    #[test]
    fn degenerate_nullspace_detected() {
        // Two disjoint components leave a two-dimensional nullspace.
        let obs = CalibrationObservations::new(
            4,
            vec![
                EdgeObservation { i: 0, j: 1, y_ji: Complex64::new(1.0, 0.0), y_ij: Complex64::new(1.0, 0.0) },
                EdgeObservation { i: 2, j: 3, y_ji: Complex64::new(1.0, 0.0), y_ij: Complex64::new(1.0, 0.0) },
            ],
        );
        assert!(matches!(solve_ls_calibration(&build_a(&obs), DEFAULT_EIGEN_GAP), Err(CalibError::DegenerateNullspace { .. })));
    }

    #[test]
    fn genie_and_apply() {
        let hw = HardwareCoeffs::ideal(4, 0);
        let g = genie_calibration(&hw);
        assert!(g.c.iter().all(|z| (z - 0.5).norm() < 1e-15));
        let x = vec![Complex64::new(1.0, 2.0); 4];
        assert_eq!(apply_calibration(&x, &[Complex64::new(1.0, 0.0); 4]).unwrap(), x);
        assert!(apply_calibration(&x, &g.c[..3]).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = clique(3);
        let f = build_calibration_subgraph(&g, SubgraphStrategy::Full).unwrap();
        let hw = sample_hardware_coeffs(&mut rng, 3, 0, 0.2);
        let obs = gather_observations_with(coupling(9), &hw, &f, 0.01, &mut rng);
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        assert_eq!(CalibrationObservations::read_csv(3, buf.as_slice()).unwrap(), obs);
        let sol = genie_calibration(&hw);
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let back = CalibrationSolution::read_csv(buf.as_slice()).unwrap();
        assert_eq!((back.c, back.method), (sol.c, CalibMethod::Genie));
    }
}

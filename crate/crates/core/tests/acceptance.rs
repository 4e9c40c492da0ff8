//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Failing criteria are reported but do not abort the run; set
//! `ACCEPTANCE_STRICT=1` to turn any failure into a nonzero exit.

mod common;

use std::time::{Duration, Instant};

use dmimo_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, ResultTable};
use dmimo_core::linalg::real_rank;
use dmimo_core::mumimo::{leakage_ratios, zfbf};
use dmimo_core::ofdm::OfdmParams;
use dmimo_core::sync::{build_weighted_laplacian, noiseless_measurements, Quantity};
use dmimo_core::topology::{check_pilot_assignment, l11_coloring, validate_anchor_cover, NetworkGraph, PilotAssignment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(id: &str, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_time = elapsed < budget;
    let pass = o.pass && in_time;
    let timing = format!("{:.1}s of {}s", elapsed.as_secs_f64(), budget.as_secs());
    let late = if in_time { "" } else { " [over budget]" };
    println!("{} {id:>3} {name}: {} ({timing}){late}", if pass { "PASS" } else { "FAIL" }, o.detail);
    pass
}

fn all_anchors(g: &NetworkGraph) -> dmimo_core::topology::AnchorSet {
    let all: Vec<usize> = (0..g.node_count()).collect();
    validate_anchor_cover(g, &all).expect("every node is an anchor")
}

fn experiment(kind: ExperimentKind, f: impl FnOnce(&mut ExperimentConfig)) -> ResultTable {
    let mut cfg = ExperimentConfig::for_experiment(kind);
    cfg.seed = 7;
    f(&mut cfg);
    run_experiment(&cfg, None).expect("experiment runs")
}

fn c1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(5..=30);
        worst = worst.max(common::noiseless_sync_error(n, &mut rng));
    }
    outcome(worst <= 1e-9, format!("200 graphs, worst relative error {worst:.2e} (<= 1e-9)"))
}

fn c2() -> Outcome {
    let params = OfdmParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut max_row, mut bad_rank) = (0.0_f64, 0);
    for _ in 0..100 {
        let n = rng.random_range(2..=40);
        let g = common::random_connected(n, rng.random_range(0.0..0.5), &mut rng);
        let a = all_anchors(&g);
        let clocks = common::random_clocks(n, &params, &mut rng);
        let meas = noiseless_measurements(&clocks, g.directed_edges(), &params);
        for q in [Quantity::Frequency, Quantity::Timing] {
            let (l, _) = build_weighted_laplacian(&meas, &a, q).expect("connected");
            max_row = max_row.max(l.row_sum().amax());
            if real_rank(&l, 1e-10) != n - 1 {
                bad_rank += 1;
            }
        }
    }
    outcome(max_row == 0.0 && bad_rank == 0, format!("100 graphs, max |L1| = {max_row:e}, rank deficits {bad_rank}"))
}

fn c3() -> Outcome {
    let t = experiment(ExperimentKind::Fig9, |c| {
        c.trials = Some(2000);
        c.fig9.snr_db = vec![0.0, 10.0, 20.0, 30.0];
        c.fig9.pilot_len = 256;
        c.fig9.include_single_path = false;
    });
    let mut pass = true;
    let mut parts = Vec::new();
    for snr in [10.0, 20.0, 30.0] {
        let rx = t.aggregate("snr_db", snr, "multipath.ratio_dxi").unwrap();
        let rm = t.aggregate("snr_db", snr, "multipath.ratio_dmu").unwrap();
        pass &= (0.5..=2.0).contains(&rx) && (0.5..=2.0).contains(&rm);
        parts.push(format!("{snr} dB MSE/CRB {rx:.2}/{rm:.2}"));
    }
    let sx = t.aggregate("all", 0.0, "multipath.crb_slope_dxi").unwrap();
    let sm = t.aggregate("all", 0.0, "multipath.crb_slope_dmu").unwrap();
    pass &= (sx + 1.0).abs() <= 0.05 && (sm + 1.0).abs() <= 0.05;
    parts.push(format!("CRB slopes {sx:.3}/{sm:.3}"));
    outcome(pass, parts.join(", "))
}

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (mut worst_align, mut worst_eig) = (1.0_f64, 0.0_f64);
    for _ in 0..40 {
        let n = rng.random_range(10..=64);
        let (a, e) = common::noiseless_calibration(n, &mut rng);
        worst_align = worst_align.min(a);
        worst_eig = worst_eig.max(e);
    }
    outcome(
        worst_align >= 1.0 - 1e-9 && worst_eig <= 1e-12,
        format!("40 graphs, min alignment 1 - {:.1e}, max lambda_min/tr(A) {worst_eig:.1e}", 1.0 - worst_align),
    )
}

fn c5() -> Outcome {
    let t = experiment(ExperimentKind::GridCdf, |c| {
        c.trials = Some(200);
        c.grid_cdf.side = 8;
        c.grid_cdf.n_ut = 16;
        c.grid_cdf.draws = 50;
    });
    let mut pass = true;
    let mut parts = Vec::new();
    for p in ["zfbf", "conjugate"] {
        let gap = t.aggregate("all", 0.0, &format!("ls_vs_genie_rel_gap_{p}")).unwrap();
        let pv = t.aggregate("all", 0.0, &format!("p_argos_below_ls_{p}")).unwrap();
        let ls = t.aggregate("all", 0.0, &format!("ls_{p}_mean_rate")).unwrap();
        let argos = t.aggregate("all", 0.0, &format!("argos_{p}_mean_rate")).unwrap();
        pass &= gap <= 0.05 && pv < 0.01 && argos < ls;
        parts.push(format!("{p}: |LS-genie| {:.2}%, Argos {argos:.3} < LS {ls:.3} (p = {pv:.1e})", 100.0 * gap));
    }
    outcome(pass, parts.join("; "))
}

fn c6a() -> Outcome {
    let t = experiment(ExperimentKind::Fig2, |c| {
        c.fig2.snr_db = vec![30.0];
    });
    let rz = t.aggregate("snr_db", 30.0, "ratio_zfbf").unwrap();
    let rc = t.aggregate("snr_db", 30.0, "ratio_conjugate").unwrap();
    outcome(rz < 0.5 && rc > rz, format!("free-running ZFBF/ideal {rz:.3} (< 0.5), conjugate/ideal {rc:.3} (> ZFBF)"))
}

fn c6b() -> Outcome {
    let t = experiment(ExperimentKind::Fig5, |c| {
        c.trials = Some(200);
        c.fig5.ap_ap_snr_db = vec![30.0];
        c.fig5.pilot_len = 1024;
        c.fig5.pilot_len_sweep = vec![];
    });
    let rel = t.aggregate("ap_ap_snr_db", 30.0, "rel_rate_m01000").unwrap();
    let res = t.aggregate("ap_ap_snr_db", 30.0, "residual_cfo_rms").unwrap();
    outcome(rel >= 0.85, format!("rate(m=1000)/rate(m=0) = {rel:.3} (>= 0.85), residual CFO rms {res:.2e} cycles/symbol"))
}

fn c7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        for (n_ap, n_ut) in [(4, 4), (64, 16)] {
            let h = common::gaussian_matrix(n_ap, n_ut, &mut rng);
            let g = zfbf(&h).expect("full rank");
            worst = leakage_ratios(&(g.matrix() * &h)).into_iter().fold(worst, f64::max);
        }
    }
    outcome(worst <= 1e-18, format!("500 draws each of 4x4 and 16x64, worst leakage {worst:.2e} (<= 1e-18)"))
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let checks: Vec<(f64, common::ModelCheck)> = [0.01, 0.003, 0.001].iter().map(|&f| (f, common::model_check(f, &mut rng))).collect();
    let phase = checks.iter().map(|c| c.1.phase_err).fold(0.0, f64::max);
    let amp = checks.iter().map(|c| c.1.amp_err).fold(0.0, f64::max);
    let ici: Vec<f64> = checks.iter().map(|c| c.1.ici).collect();
    let monotone = ici.windows(2).all(|w| w[1] < w[0]);
    let ici_db: Vec<String> = ici.iter().map(|x| format!("{:.1}", 10.0 * x.log10())).collect();
    outcome(
        phase < 1e-3 && amp < 0.01 && monotone,
        format!("phase {phase:.1e} rad, amplitude {amp:.1e}, ICI dB at 1/0.3/0.1% = {}", ici_db.join("/")),
    )
}

fn c9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut invalid = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=40);
        let g = common::random_connected(n, rng.random_range(0.0..0.5), &mut rng);
        let a = all_anchors(&g);
        if check_pilot_assignment(&a, &l11_coloring(&a)).is_err() {
            invalid += 1;
        }
    }
    let cliques_ok = (1..=16).all(|k| {
        let e: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
        l11_coloring(&all_anchors(&NetworkGraph::from_edge_list(k, &e).unwrap())).num_colors == k
    });
    let cycle: Vec<(usize, usize)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
    let c6 = all_anchors(&NetworkGraph::from_edge_list(6, &cycle).unwrap());
    let three = PilotAssignment { color_of: (0..6).map(|i| (i, i % 3)).collect(), num_colors: 3 };
    let cycle_ok = check_pilot_assignment(&c6, &three).is_ok();
    outcome(
        invalid == 0 && cliques_ok && cycle_ok,
        format!("{invalid}/200 invalid, cliques 1..16 exact: {cliques_ok}, 6-cycle 3-coloring accepted: {cycle_ok}"),
    )
}

fn c10() -> Outcome {
    let kinds =
        [ExperimentKind::Fig2, ExperimentKind::Fig5, ExperimentKind::Fig9, ExperimentKind::GridCdf, ExperimentKind::Custom];
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in kinds {
        let cfg = common::small_config(kind);
        let t0 = Instant::now();
        let a = run_experiment(&cfg, Some(1)).expect("runs").to_csv_string();
        let base = t0.elapsed();
        let mut same = true;
        let mut slowest = Duration::ZERO;
        for threads in [2, 4] {
            let t1 = Instant::now();
            same &= run_experiment(&cfg, Some(threads)).expect("runs").to_csv_string() == a;
            slowest = slowest.max(t1.elapsed());
        }
        // Sub-millisecond runs are dominated by thread-pool start-up.
        let in_time = slowest < 2 * base.max(Duration::from_millis(50));
        pass &= same && in_time;
        parts.push(format!("{}: {}", kind.name(), if same && in_time { "identical" } else if same { "slow" } else { "DIFFERS" }));
    }
    outcome(pass, format!("threads 1/2/4, {}", parts.join(", ")))
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        run("1", "noiseless sync exactness", secs(10), c1),
        run("2", "Laplacian structure", secs(10), c2),
        run("3", "ML estimator vs CRB", secs(600), c3),
        run("4", "noiseless calibration exactness", secs(30), c4),
        run("5", "calibration ordering", secs(1200), c5),
        run("6a", "free-running rate loss", secs(600), c6a),
        run("6b", "compensated rate retention", secs(600), c6b),
        run("7", "ZFBF leakage", secs(10), c7),
        run("8", "time-domain model consistency", secs(60), c8),
        run("9", "pilot coloring validity", secs(5), c9),
        run("10", "determinism across thread counts", secs(600), c10),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed < results.len() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

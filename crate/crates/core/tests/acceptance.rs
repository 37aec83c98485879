//! Acceptance criteria, one printed PASS/FAIL line each.
//!
//! Fast criteria run with every `cargo test`. Long-running ones are
//! `#[ignore]`d; run them with
//! `cargo test --release -p cardiac-si --test acceptance -- --ignored --nocapture --test-threads=1`.

use std::path::Path;
use std::time::{Duration, Instant};

use cardiac_si::calibration::{
    calibrate, measure_cv, sigma_vector, Axis, CvObjective, CvProtocol, EMI_TARGET_CV,
};
use cardiac_si::cell::{CellModel, GateScheme};
use cardiac_si::chi::compute_chi;
use cardiac_si::config::{parse_config, RunConfig, TissueConfig};
use cardiac_si::fem::{BidomainParams, GapForm, LinearSystem};
use cardiac_si::geometry::{build_bidomain_mesh, BoxSpec, EmiCellLayout};
use cardiac_si::io::write_si_curve;
use cardiac_si::protocol::{rrp_transition, Experiment, Mechanism, SiCurve};
use cardiac_si::stepping::{run, Model, ProbeSet, RunOptions, SteppingConfig, Stimulus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, passed: bool, what: &str, detail: String, elapsed: Duration) -> bool {
    println!(
        "CRITERION {criterion:<4} {} {what} | {detail} | {:.1} s",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    passed
}

fn finish(results: &[bool]) {
    let failed = results.iter().filter(|r| !**r).count();
    assert_eq!(failed, 0, "{failed} criterion check(s) failed; see CRITERION lines above");
}

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

#[test]
fn criterion_01_rest_stability() {
    let t = Instant::now();
    let cell = CellModel::default();
    let v0 = cell.rest().v;
    let mut s = cell.params.steady_state(-83.0);
    let mut worst = 0.0f64;
    for _ in 0..5000 {
        cell.integrate(&mut s, 0.0, 0.1, 100, GateScheme::ForwardEuler).unwrap();
        worst = worst.max((s.v - v0).abs());
    }
    let elapsed = t.elapsed();
    let ok = worst < 0.01 && elapsed < Duration::from_secs(1);
    finish(&[report("1", ok, "rest drift over 500 ms < 0.01 mV, < 1 s", format!("drift {worst:.3e} mV"), elapsed)]);
}

#[test]
fn criterion_02_rush_larsen_exactness() {
    let t = Instant::now();
    let cell = CellModel::default();
    let p = cell.params;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let v: f64 = rng.random_range(-90.0..40.0);
        let dt: f64 = rng.random_range(0.001..0.5);
        let mut s = p.steady_state(-83.0);
        s.v = v;
        let (next, _) = cell.substep(s, 0.0, dt, GateScheme::RushLarsen).unwrap();
        // closed-form solution of g' = (g_inf - g)/tau at frozen V
        let m = p.m_inf(v) - (p.m_inf(v) - s.m) * (-dt / p.tau_m(v)).exp();
        let h = p.h_inf(v) - (p.h_inf(v) - s.h) * (-dt / p.tau_h(v)).exp();
        worst = worst.max(((next.m - m) / m).abs()).max(((next.h - h) / h).abs());
    }
    let elapsed = t.elapsed();
    let ok = worst <= 1e-12 && elapsed < Duration::from_secs(1);
    finish(&[report("2", ok, "Rush-Larsen gate update vs exponential <= 1e-12", format!("max rel. err {worst:.3e}"), elapsed)]);
}

/// Potentials at `t_end` on a stimulated strip for one step size.
fn strip_solution(dt: f64, t_end: f64) -> Vec<f64> {
    let mesh = build_bidomain_mesh(BoxSpec::with_extents([0.5, 0.1, 0.025]).unwrap(), 0.025).unwrap();
    let model = Model::bidomain(mesh, &BidomainParams::default(), CellModel::default(), dt).unwrap();
    let electrode = BoxSpec::with_extents([0.1, 0.1, 0.025]).unwrap();
    let stim = [Stimulus { sites: model.sites_in(&electrode), amplitude: 150.0, onset: 0.0, duration: 2.0 }];
    let cfg = SteppingConfig { dt, substeps: 100, t0: 0.0, t_end, force_rl: false };
    let probes = ProbeSet::quadrants(&model.mesh().bounds);
    run(&model, &stim, &cfg, &probes, RunOptions::default()).unwrap().final_state.potentials()
}

#[test]
fn criterion_03_splitting_order() {
    let t = Instant::now();
    let t_end = 3.0;
    // dt = 0.1 and 0.05 are pre-asymptotic for the upstroke; the order is
    // measured on the next three levels and the coarse value is printed.
    let dts = [0.1, 0.05, 0.025, 0.0125, 0.00625];
    let levels: Vec<Vec<f64>> = dts.iter().map(|&dt| strip_solution(dt, t_end)).collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let diffs: Vec<f64> = levels.windows(2).map(|w| diff(&w[0], &w[1])).collect();
    let orders: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders[2];
    let elapsed = t.elapsed();
    println!("INFO      3    observed orders from successive dt triples starting at 0.1 ms: {orders:.3?}");
    let ok = (order - 1.0).abs() <= 0.2 && elapsed < Duration::from_secs(60);
    finish(&[report(
        "3",
        ok,
        "Richardson order of Godunov splitting 1.0 +/- 0.2 (dt 0.025/0.0125/0.00625 ms)",
        format!("order {order:.3} (differences {:.3e}, {:.3e} mV)", diffs[2], diffs[3]),
        elapsed,
    )]);
}

/// `(asymmetry, ‖x - x_true‖ / ‖x_true‖)` for `b = A x_true`.
fn round_trip(system: &LinearSystem) -> (f64, f64) {
    let a = system.matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x_true: Vec<f64> = (0..a.n).map(|_| rng.random_range(-1.0..1.0)).collect();
    x_true[system.dofs.pinned] = 0.0;
    let x = system.solve(&a.mul_vec(&x_true)).unwrap();
    let err = x.iter().zip(&x_true).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let norm = x_true.iter().map(|q| q * q).sum::<f64>().sqrt();
    (a.asymmetry(), err / norm)
}

#[test]
fn criterion_04_linear_system_health() {
    let t = Instant::now();
    let mut results = Vec::new();
    for name in ["bidomain_reduced.cfg", "emi_reduced.cfg"] {
        let cfg = config(name);
        let model = cfg.build_model().unwrap();
        let system = match &model {
            Model::Bidomain(m) => &m.disc.system,
            Model::Emi(m) => &m.disc.system,
        };
        let (asym, err) = round_trip(system);
        results.push((name, asym, err));
    }
    let elapsed = t.elapsed();
    let ok = results.iter().all(|r| r.1 <= 1e-12 && r.2 <= 1e-10) && elapsed < Duration::from_secs(60);
    let detail = results
        .iter()
        .map(|(n, a, e)| format!("{n}: asymmetry {a:.1e}, round-trip {e:.1e}"))
        .collect::<Vec<_>>()
        .join("; ");
    finish(&[report("4", ok, "symmetric to 1e-12, solve round trip <= 1e-10", detail, elapsed)]);
}

fn emi_cvs(cfg: &RunConfig) -> [f64; 2] {
    let TissueConfig::Emi { layout, .. } = &cfg.tissue else { panic!("EMI config expected") };
    let model = cfg.build_model().unwrap();
    [Axis::Longitudinal, Axis::Transverse].map(|axis| {
        let protocol = CvProtocol {
            amplitude: cfg.calibration.cv_amplitude,
            horizon: cfg.calibration.cv_horizon,
            ..CvProtocol::emi(layout, axis).unwrap()
        };
        measure_cv(&model, &protocol, &cfg.stepping).map_or(f64::NAN, |m| m.cv)
    })
}

#[test]
fn criterion_05_emi_cv_reduced() {
    let t = Instant::now();
    let cfg = config("emi_reduced.cfg");
    let [long, trans] = emi_cvs(&cfg);
    let elapsed = t.elapsed();
    let ok = (long - 61.0).abs() <= 7.0 && (trans - 22.0).abs() <= 5.0 && elapsed <= Duration::from_secs(600);
    let r = report(
        "5",
        ok,
        "reduced EMI CVs in 61 +/- 7 and 22 +/- 5 cm/s",
        format!("longitudinal {long:.2}, transverse {trans:.2} cm/s"),
        elapsed,
    );
    // informational: the alternative junction form, not part of the verdict
    let t = Instant::now();
    let mut alt = cfg.clone();
    if let TissueConfig::Emi { params, .. } = &mut alt.tissue {
        params.gap_form = GapForm::Dimensional;
    }
    let [l2, t2] = emi_cvs(&alt);
    println!(
        "INFO      5    dimensional junction form: longitudinal {l2:.2}, transverse {t2:.2} cm/s | {:.1} s",
        t.elapsed().as_secs_f64()
    );
    finish(&[r]);
}

#[test]
#[ignore = "full-scale EMI mesh needs far more memory than a workstation"]
fn criterion_05_emi_cv_full_scale() {
    let t = Instant::now();
    let [long, trans] = emi_cvs(&config("emi_paper.cfg"));
    let ok = within(long, EMI_TARGET_CV[0], 0.05) && within(trans, EMI_TARGET_CV[1], 0.05);
    finish(&[report(
        "5",
        ok,
        "full-scale EMI CVs within 5% of 61.12 / 22.08 cm/s",
        format!("longitudinal {long:.2}, transverse {trans:.2} cm/s"),
        t.elapsed(),
    )]);
}

#[test]
#[ignore = "long-running: about 50 bidomain CV evaluations"]
fn criterion_06_bidomain_calibration() {
    let t = Instant::now();
    let cfg = config("bidomain_paper.cfg");
    let TissueConfig::Bidomain { bounds, h, params } = &cfg.tissue else { unreachable!() };
    let mut objective = CvObjective::new(*bounds, *h, *params, cfg.stepping, EMI_TARGET_CV).unwrap();
    objective.cell = cfg.cell_model();
    let c = &cfg.calibration;
    let result = calibrate(&objective, c.lower, c.upper, 50, c.seed).unwrap();
    let best = result.history.iter().min_by(|a, b| a.objective.total_cmp(&b.objective)).unwrap();
    let [cl, ct] = best.cv.map(|v| v.unwrap_or(f64::NAN));
    let elapsed = t.elapsed();
    let cv_ok = within(cl, EMI_TARGET_CV[0], 0.02) && within(ct, EMI_TARGET_CV[1], 0.02) && elapsed <= Duration::from_secs(3600);
    let table = sigma_vector(&BidomainParams::default());
    let found = sigma_vector(&result.params);
    let sigma_ok = found.iter().zip(&table).all(|(f, t)| within(*f, *t, 0.25));
    let r1 = report(
        "6",
        cv_ok,
        "calibrated CVs within 2% of 61.12 / 22.08 cm/s (budget 50, <= 1 h)",
        format!("{cl:.2} / {ct:.2} cm/s after {} evaluations", result.evaluations),
        elapsed,
    );
    let r2 = report(
        "6b",
        sigma_ok,
        "recovered conductivities within 25% of the tabulated values",
        format!("found {found:.4?} vs {table:?} mS/mm"),
        elapsed,
    );
    finish(&[r1, r2]);
}

#[test]
#[ignore = "long-running: resting threshold search plus the full bidomain SI curve"]
fn criteria_07_08_10_12_bidomain_full_scale() {
    let mut results = Vec::new();
    let cfg = config("bidomain_paper.cfg");
    let model = cfg.build_model().unwrap();
    let exp = cfg.experiment(&model).unwrap();

    // 7: resting threshold; find_resting_threshold re-runs T and T - 1
    let t = Instant::now();
    let rest = exp.find_resting_threshold(1.0);
    let elapsed = t.elapsed();
    let threshold = match &rest {
        Ok(s) => s.threshold,
        Err(e) => panic!("resting threshold search failed: {e}"),
    };
    results.push(report(
        "7",
        within(threshold, 120.0, 0.15) && elapsed <= Duration::from_secs(900),
        "resting threshold within 120 +/- 15% uA/uF, bracketing confirmed",
        format!("{threshold} uA/uF ({} trials)", rest.as_ref().map_or(0, |s| s.trials.len())),
        elapsed,
    ));

    // 8: SI curve over 142..157
    let t = Instant::now();
    let protocol = cfg.protocol.s1s2(threshold);
    let curve = exp.build_si_curve(&protocol).unwrap();
    let elapsed = t.elapsed();
    for p in &curve.points {
        println!("  SI {} ms: {} uA/uF, {}", p.interval, p.threshold, p.mechanism.as_str());
    }
    let at = |i: f64| curve.points.iter().find(|p| p.interval == i).map(|p| p.threshold).unwrap_or(f64::NAN);
    let expected = [(145.0, 218.0), (148.0, 136.0), (150.0, 124.0)];
    let values_ok = expected.iter().all(|&(i, v)| within(at(i), v, 0.15));
    results.push(report(
        "8",
        values_ok,
        "thresholds at 145/148/150 ms within 15% of 218/136/124",
        format!("{} / {} / {} uA/uF", at(145.0), at(148.0), at(150.0)),
        elapsed,
    ));
    results.push(report("8b", curve.is_monotone(), "SI curve non-increasing over 142..157 ms", String::new(), elapsed));
    let floor = at(157.0);
    results.push(report(
        "8c",
        (floor - threshold).abs() <= protocol.resolution,
        "threshold at 157 ms equals resting within one resolution unit",
        format!("{floor} vs {threshold} uA/uF"),
        elapsed,
    ));
    results.push(report("8d", elapsed <= Duration::from_secs(4 * 3600), "SI curve runtime <= 4 h", String::new(), elapsed));

    // 10: make/break
    let mech = |i: f64| curve.points.iter().find(|p| p.interval == i).map(|p| p.mechanism);
    let labels: Vec<(f64, Mechanism)> = curve.points.iter().map(|p| (p.interval, p.mechanism)).collect();
    let transition = rrp_transition(&labels);
    let ok = mech(150.0) == Some(Mechanism::Make)
        && mech(145.0) == Some(Mechanism::Break)
        && transition.is_some_and(|x| (147.0..=151.0).contains(&x));
    results.push(report(
        "10",
        ok,
        "150 ms make, 145 ms break, transition in [147, 151] ms",
        format!("150: {:?}, 145: {:?}, transition {transition:?}", mech(150.0), mech(145.0)),
        elapsed,
    ));

    // 12: determinism of the shortest interval, CSV bytes compared
    let t = Instant::now();
    let first = cfg.protocol.intervals[0];
    let one = cardiac_si::protocol::S1S2Protocol { intervals: vec![first], ..protocol.clone() };
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let c: SiCurve = exp.build_si_curve(&one).unwrap();
        let path = dir.path().join(format!("run{k}.csv"));
        write_si_curve(&path, &cfg.hash(), &c).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    let reference = SiCurve { resting_threshold: threshold, points: vec![curve.points[0].clone()] };
    let path = dir.path().join("full.csv");
    write_si_curve(&path, &cfg.hash(), &reference).unwrap();
    let full = std::fs::read(&path).unwrap();
    results.push(report(
        "12",
        bytes[0] == bytes[1] && bytes[0] == full,
        "repeated SI runs give byte-identical CSVs",
        format!("{} bytes, interval {first} ms", bytes[0].len()),
        t.elapsed(),
    ));
    finish(&results);
}

fn reduced_curve(name: &str) -> (SiCurve, Duration) {
    let t = Instant::now();
    let cfg = config(name);
    let model = cfg.build_model().unwrap();
    let exp: Experiment = cfg.experiment(&model).unwrap();
    let rest = exp.find_resting_threshold(cfg.protocol.resolution).unwrap();
    let curve = exp.build_si_curve(&cfg.protocol.s1s2(rest.threshold)).unwrap();
    for p in &curve.points {
        println!("  {name} {} ms: {} uA/uF, {}", p.interval, p.threshold, p.mechanism.as_str());
    }
    println!("  {name} resting threshold {} uA/uF", rest.threshold);
    (curve, t.elapsed())
}

#[test]
#[ignore = "long-running: reduced EMI strength-interval curve"]
fn criterion_09_emi_reduced_refractoriness() {
    let (emi, emi_time) = reduced_curve("emi_reduced.cfg");
    let (bido, bido_time) = reduced_curve("bidomain_reduced.cfg");
    let elapsed = emi_time + bido_time;
    let mut results = vec![
        report("9", emi.resting_threshold > 0.0, "reduced EMI resting threshold exists", format!("{} uA/uF", emi.resting_threshold), emi_time),
        report("9b", emi.is_monotone(), "reduced EMI SI curve non-increasing over 6 intervals", String::new(), emi_time),
    ];
    let (e, b) = (emi.normalize(), bido.normalize());
    let (ei, ev, _) = e.points[0];
    let bv = b.points.iter().find(|p| p.0 == ei).map_or(f64::NAN, |p| p.1);
    results.push(report(
        "9c",
        ev > bv,
        "EMI normalized threshold exceeds bidomain at the shortest interval",
        format!("{ei} ms: EMI {ev:.3} vs bidomain {bv:.3}"),
        elapsed,
    ));
    results.push(report("9d", elapsed <= Duration::from_secs(2 * 3600), "runtime <= 2 h", String::new(), elapsed));
    finish(&results);
}

#[test]
fn criterion_11_chi_derivation() {
    let t = Instant::now();
    let domain = BoxSpec::with_extents([4.0, 0.625, 0.025]).unwrap();
    let r = compute_chi(&EmiCellLayout::default(), &domain, 10.0);
    let elapsed = t.elapsed();
    let ok = (r.chi_raw - 154.0).abs() <= 1.0 && r.chi_rounded == 150.0 && elapsed < Duration::from_secs(1);
    finish(&[report(
        "11",
        ok,
        "chi_raw 154 +/- 1 and chi_rounded 150 1/mm",
        format!("raw {:.4}, rounded {}", r.chi_raw, r.chi_rounded),
        elapsed,
    )]);
}

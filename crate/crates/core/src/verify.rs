//! Fast self-checks of the numerical building blocks, run by the `verify`
//! subcommand. Each check reports a pass flag and the measured quantity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cell::{CellModel, GateScheme};
use crate::chi::compute_chi;
use crate::config::{default_bidomain, default_emi, parse_config};
use crate::fem::{assemble_bidomain, assemble_emi, BidomainParams, EmiParams, LinearSystem};
use crate::geometry::{build_bidomain_mesh, build_emi_mesh, BoxSpec, EmiCellLayout, SurfaceTag, VolumeTag};
use crate::protocol::{bracket_threshold, MAX_AMPLITUDE};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Largest |ΔV| (mV) over `duration` ms of unstimulated stepping from rest.
pub fn rest_drift(cell: &CellModel, duration: f64, dt: f64, substeps: usize) -> f64 {
    let v0 = cell.rest().v;
    let mut s = cell.rest();
    let mut worst = 0.0f64;
    let steps = (duration / dt).round() as usize;
    for _ in 0..steps {
        if cell.integrate(&mut s, 0.0, dt, substeps, GateScheme::ForwardEuler).is_err() {
            return f64::INFINITY;
        }
        worst = worst.max((s.v - v0).abs());
    }
    worst
}

/// Worst relative error of one Rush–Larsen substep against the closed-form
/// gate solution at frozen V, over `pairs` random (V, dt) draws.
pub fn rush_larsen_error(cell: &CellModel, pairs: usize, seed: u64) -> f64 {
    let p = &cell.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let v = rng.random_range(-100.0..60.0);
        let dt = rng.random_range(1e-4..1.0);
        let mut s = p.steady_state(v);
        s.m = rng.random_range(0.0..1.0);
        s.h = rng.random_range(0.0..1.0);
        let (next, _) = match cell.substep(s, 0.0, dt, GateScheme::RushLarsen) {
            Ok(r) => r,
            Err(_) => return f64::INFINITY,
        };
        let m = p.m_inf(v) + (s.m - p.m_inf(v)) * (-dt / p.tau_m(v)).exp();
        let h = p.h_inf(v) + (s.h - p.h_inf(v)) * (-dt / p.tau_h(v)).exp();
        for (got, want) in [(next.m, m), (next.h, h)] {
            let scale = want.abs().max(f64::MIN_POSITIVE);
            worst = worst.max((got - want).abs() / scale);
        }
    }
    worst
}

/// `(asymmetry, round-trip residual)` of a factorized system against a
/// smooth right-hand side.
pub fn system_health(system: &LinearSystem) -> (f64, f64) {
    let a = system.matrix();
    let n = a.n;
    let mut x_true: Vec<f64> = (0..n).map(|i| (0.3 + i as f64 * 0.017).sin()).collect();
    if let Some(x) = x_true.get_mut(system.dofs.pinned) {
        *x = 0.0;
    }
    let b = a.mul_vec(&x_true);
    let residual = match system.solve(&b) {
        Ok(x) => {
            let r = a.mul_vec(&x);
            let num: f64 = r.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let den: f64 = b.iter().map(|q| q * q).sum::<f64>().sqrt();
            num / den
        }
        Err(_) => f64::INFINITY,
    };
    (a.asymmetry(), residual)
}

/// Runs every check. Completes in a few seconds.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let cell = CellModel::default();

    let drift = rest_drift(&cell, 500.0, 0.1, 100);
    out.push(check("cell rest stability (500 ms drift < 0.01 mV)", drift < 0.01, format!("drift {drift:.3e} mV")));

    let rl = rush_larsen_error(&cell, 20, 7);
    out.push(check("Rush-Larsen gate update exact (rel. err <= 1e-12)", rl <= 1e-12, format!("max rel. err {rl:.3e}")));

    match BoxSpec::with_extents([0.5, 0.1, 0.025])
        .map_err(|e| e.to_string())
        .and_then(|b| build_bidomain_mesh(b, 0.025).map_err(|e| e.to_string()))
        .and_then(|m| assemble_bidomain(&m, &BidomainParams::default(), 0.1).map_err(|e| e.to_string()))
    {
        Ok(d) => {
            let (asym, res) = system_health(&d.system);
            out.push(check(
                "bidomain system symmetric (<= 1e-12) and solvable (<= 1e-10)",
                asym <= 1e-12 && res <= 1e-10,
                format!("asymmetry {asym:.2e}, residual {res:.2e}"),
            ));
        }
        Err(e) => out.push(check("bidomain system symmetric (<= 1e-12) and solvable (<= 1e-10)", false, e)),
    }

    let layout = EmiCellLayout::with_cells(2, 2);
    match build_emi_mesh(layout, 0.005) {
        Ok(mesh) => {
            let components_ok = (1..=layout.n_cells() as u32).all(|k| mesh.components(VolumeTag::Intracellular(k)) == 1);
            let gaps = mesh.count_facets(|t| matches!(t, SurfaceTag::Gap(..)));
            out.push(check(
                "EMI mesh: one component per cell, junctions present",
                components_ok && gaps > 0,
                format!("{} tets, {gaps} gap facets", mesh.tets.len()),
            ));
            match assemble_emi(&mesh, &EmiParams::default(), 0.1) {
                Ok(d) => {
                    let (asym, res) = system_health(&d.system);
                    out.push(check(
                        "EMI system symmetric (<= 1e-12) and solvable (<= 1e-10)",
                        asym <= 1e-12 && res <= 1e-10,
                        format!("asymmetry {asym:.2e}, residual {res:.2e}"),
                    ));
                }
                Err(e) => out.push(check("EMI system symmetric (<= 1e-12) and solvable (<= 1e-10)", false, e.to_string())),
            }
        }
        Err(e) => out.push(check("EMI mesh: one component per cell, junctions present", false, e.to_string())),
    }

    let domain = BoxSpec::with_extents([4.0, 0.625, 0.025]).expect("positive extents");
    let chi = compute_chi(&EmiCellLayout::default(), &domain, 10.0);
    out.push(check(
        "chi derivation (154 raw, 150 rounded)",
        (chi.chi_raw - 154.0).abs() <= 1.0 && chi.chi_rounded == 150.0,
        format!("raw {:.3}, rounded {}", chi.chi_raw, chi.chi_rounded),
    ));

    let round_trip = [default_bidomain(), default_emi()]
        .iter()
        .all(|c| parse_config(&c.to_text()).as_ref() == Ok(c));
    out.push(check("config print/parse round trip", round_trip, String::new()));

    let hidden = 137.3;
    let search = bracket_threshold(1.0, 1.0, MAX_AMPLITUDE, |a| Ok(a >= hidden));
    let detail = search.as_ref().map_or_else(|e| e.to_string(), |s| format!("threshold {} in {} trials", s.threshold, s.trials.len()));
    out.push(check(
        "threshold bracketing on a step response",
        search.is_ok_and(|s| s.threshold == 138.0 && !s.non_monotone),
        detail,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}

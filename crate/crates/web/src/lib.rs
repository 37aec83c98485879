//! Browser demo: single-cell action potential, surface-to-volume ratio of a
//! cell layout, and a small bidomain strip activation map.
//!
//! Plain functions carry the logic and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert arguments and results.

use cardiac_si::cell::{CellModel, GateScheme};
use cardiac_si::chi::compute_chi;
use cardiac_si::fem::BidomainParams;
use cardiac_si::geometry::{build_bidomain_mesh, BoxSpec, EmiCellLayout};
use cardiac_si::stepping::{run, Model, ProbeSet, RunOptions, SteppingConfig, Stimulus};
use wasm_bindgen::prelude::*;

/// Membrane potential (mV) every `dt` ms of one cell stimulated at t = 0.
pub fn action_potential(amplitude: f64, duration: f64, t_end: f64, dt: f64) -> Result<Vec<f64>, String> {
    if !(dt > 0.0 && t_end > 0.0 && duration >= 0.0) {
        return Err("dt and t_end must be positive, duration non-negative".into());
    }
    let cell = CellModel::default();
    let mut s = cell.rest();
    let steps = (t_end / dt).round() as usize;
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(s.v);
    for k in 0..steps {
        let t = k as f64 * dt;
        let on = t < duration - 1e-9;
        let scheme = if on { GateScheme::RushLarsen } else { GateScheme::ForwardEuler };
        cell.integrate(&mut s, if on { amplitude } else { 0.0 }, dt, 100, scheme)
            .map_err(|e| e.to_string())?;
        trace.push(s.v);
    }
    Ok(trace)
}

/// `[chi_raw, chi_rounded]` (1/mm) of an `nx` by `ny` layout with the
/// given pericell pitch and body height (mm).
pub fn chi_for(nx: usize, ny: usize, pitch_x: f64, pitch_y: f64, height: f64, rounding: f64) -> Result<[f64; 2], String> {
    let mut layout = EmiCellLayout::with_cells(nx, ny);
    layout.pericell_box = [pitch_x, pitch_y, layout.pericell_box[2].max(height)];
    layout.body_extents[2] = height;
    if rounding.is_nan() || rounding <= 0.0 {
        return Err("rounding must be positive".into());
    }
    let domain = BoxSpec::with_extents([nx as f64 * pitch_x, ny as f64 * pitch_y, layout.pericell_box[2]])
        .map_err(|e| e.to_string())?;
    let r = compute_chi(&layout, &domain, rounding);
    Ok([r.chi_raw, r.chi_rounded])
}

/// Activation time (ms, NaN if never) of each node on the x axis centre line
/// of a 1.0 x 0.1 x 0.025 mm bidomain strip stimulated at its left end.
pub fn strip_activation(amplitude: f64, sigma_scale: f64, t_end: f64) -> Result<Vec<f64>, String> {
    let bounds = BoxSpec::with_extents([1.0, 0.1, 0.025]).map_err(|e| e.to_string())?;
    let mesh = build_bidomain_mesh(bounds, 0.025).map_err(|e| e.to_string())?;
    let base = BidomainParams::default();
    let params = BidomainParams {
        sigma_i: base.sigma_i.map(|s| s * sigma_scale),
        sigma_e: base.sigma_e.map(|s| s * sigma_scale),
        ..base
    };
    let model = Model::bidomain(mesh, &params, CellModel::default(), 0.1).map_err(|e| e.to_string())?;
    let electrode = BoxSpec::with_extents([0.1, 0.1, 0.025]).map_err(|e| e.to_string())?;
    let stim = [Stimulus { sites: model.sites_in(&electrode), amplitude, onset: 0.0, duration: 2.0 }];
    let cfg = SteppingConfig { t_end, ..Default::default() };
    let opts = RunOptions { watch_from: Some(0.0), ..Default::default() };
    let record = run(&model, &stim, &cfg, &ProbeSet::quadrants(&bounds), opts).map_err(|e| e.to_string())?;
    let tracker = record.tracker.expect("tracking was requested");
    let line: Vec<f64> = (0..=40)
        .map(|i| {
            let site = model.nearest_site(&[i as f64 * 0.025, 0.05, 0.0125]);
            tracker.crossing[site].unwrap_or(f64::NAN)
        })
        .collect();
    Ok(line)
}

#[wasm_bindgen(js_name = actionPotential)]
pub fn action_potential_js(amplitude: f64, duration: f64, t_end: f64, dt: f64) -> Result<Vec<f64>, JsError> {
    action_potential(amplitude, duration, t_end, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = chiFor)]
pub fn chi_for_js(nx: usize, ny: usize, pitch_x: f64, pitch_y: f64, height: f64, rounding: f64) -> Result<Vec<f64>, JsError> {
    chi_for(nx, ny, pitch_x, pitch_y, height, rounding).map(Vec::from).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = stripActivation)]
pub fn strip_activation_js(amplitude: f64, sigma_scale: f64, t_end: f64) -> Result<Vec<f64>, JsError> {
    strip_activation(amplitude, sigma_scale, t_end).map_err(|e| JsError::new(&e))
}

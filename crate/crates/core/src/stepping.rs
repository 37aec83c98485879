//! Godunov operator splitting for both tissue models.
//!
//! Each step of length `dt` first advances every cell-model site through
//! `substeps` reaction substeps, then performs one Backward-Euler diffusion
//! solve and writes the new membrane potentials back into the cell states.
//! Probes and trackers sample the state after the step.

use thiserror::Error;

use crate::cell::{CellError, CellModel, CellState, GateScheme};
use crate::fem::{
    assemble_bidomain, assemble_emi, BidomainDiscretization, BidomainParams, EmiDiscretization, EmiParams,
    FemError,
};
use crate::geometry::{distance2, BoxSpec, Point3, TaggedMesh};

/// Tolerance (ms) for matching stimulus windows and snapshot times to steps.
pub const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("reaction step failed at t = {time} ms: {source}")]
    Reaction { time: f64, source: CellError },
    #[error("diffusion solve failed at t = {time} ms: {source}")]
    Diffusion { time: f64, source: FemError },
    #[error("non-finite membrane potential at t = {time} ms, site {site}")]
    NonFinite { time: f64, site: usize },
    #[error("step would pass the end time: t = {time} ms, t_end = {t_end} ms")]
    PastEnd { time: f64, t_end: f64 },
    #[error("invalid stepping configuration: {0}")]
    Config(String),
    #[error("stimulus region {0:?} contains no cell-model site")]
    EmptyStimulus(BoxSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteppingConfig {
    /// ms
    pub dt: f64,
    pub substeps: usize,
    pub t0: f64,
    pub t_end: f64,
    /// Use Rush–Larsen gates even without an active stimulus.
    pub force_rl: bool,
}

impl Default for SteppingConfig {
    fn default() -> Self {
        Self { dt: 0.1, substeps: 100, t0: 0.0, t_end: 10.0, force_rl: false }
    }
}

impl SteppingConfig {
    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt > 0.0) {
            return Err(StepError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.substeps == 0 {
            return Err(StepError::Config("substeps must be at least 1".into()));
        }
        if !(self.t0 < self.t_end) {
            return Err(StepError::Config(format!("t0 = {} must precede t_end = {}", self.t0, self.t_end)));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt).round() as usize
    }

    pub fn time_of(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }
}

/// A current pulse delivered to a fixed set of cell-model sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub sites: Vec<usize>,
    /// µA/µF, positive depolarizes.
    pub amplitude: f64,
    pub onset: f64,
    pub duration: f64,
}

impl Stimulus {
    /// Whether `[t, t + dt)` overlaps `[onset, onset + duration)`.
    pub fn active_during(&self, t: f64, dt: f64) -> bool {
        t < self.onset + self.duration - TIME_TOL && t + dt > self.onset + TIME_TOL
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Discretized tissue with its factorized implicit operator.
#[derive(Debug)]
pub enum Model {
    Bidomain(BidomainModel),
    Emi(EmiModel),
}

#[derive(Debug)]
pub struct BidomainModel {
    pub mesh: TaggedMesh,
    pub disc: BidomainDiscretization,
    pub cell: CellModel,
}

#[derive(Debug)]
pub struct EmiModel {
    pub mesh: TaggedMesh,
    pub disc: EmiDiscretization,
    pub cell: CellModel,
}

/// Model-specific unknowns other than the membrane potential.
#[derive(Debug, Clone, PartialEq)]
pub enum Fields {
    Bidomain { u_e: Vec<f64> },
    Emi { u: Vec<f64>, w: Vec<f64> },
}

/// Complete state at one time level. `cells[i].v` is the membrane potential
/// of site `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub time: f64,
    pub step: usize,
    pub cells: Vec<CellState>,
    pub fields: Fields,
    pub gate_clamps: u64,
}

impl ModelState {
    pub fn potentials(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.v).collect()
    }
}

impl Model {
    pub fn bidomain(mesh: TaggedMesh, params: &BidomainParams, cell: CellModel, dt: f64) -> Result<Self, FemError> {
        let disc = assemble_bidomain(&mesh, params, dt)?;
        Ok(Model::Bidomain(BidomainModel { mesh, disc, cell }))
    }

    pub fn emi(mesh: TaggedMesh, params: &EmiParams, cell: CellModel, dt: f64) -> Result<Self, FemError> {
        let disc = assemble_emi(&mesh, params, dt)?;
        Ok(Model::Emi(EmiModel { mesh, disc, cell }))
    }

    pub fn mesh(&self) -> &TaggedMesh {
        match self {
            Model::Bidomain(m) => &m.mesh,
            Model::Emi(m) => &m.mesh,
        }
    }

    pub fn cell(&self) -> &CellModel {
        match self {
            Model::Bidomain(m) => &m.cell,
            Model::Emi(m) => &m.cell,
        }
    }

    /// Time step the implicit operator was assembled for.
    pub fn dt(&self) -> f64 {
        match self {
            Model::Bidomain(m) => m.disc.dt,
            Model::Emi(m) => m.disc.dt,
        }
    }

    /// Number of cell-model sites: mesh nodes (bidomain) or membrane
    /// unknowns (EMI).
    pub fn n_sites(&self) -> usize {
        match self {
            Model::Bidomain(m) => m.mesh.vertices.len(),
            Model::Emi(m) => m.disc.dofs.membrane.len(),
        }
    }

    pub fn site_position(&self, site: usize) -> Point3 {
        match self {
            Model::Bidomain(m) => m.mesh.vertices[site],
            Model::Emi(m) => m.mesh.vertices[m.disc.dofs.membrane[site].0 as usize],
        }
    }

    pub fn sites_in(&self, region: &BoxSpec) -> Vec<usize> {
        (0..self.n_sites()).filter(|&s| region.contains(&self.site_position(s))).collect()
    }

    /// Site closest to `p`; ties go to the lowest index.
    pub fn nearest_site(&self, p: &Point3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for s in 0..self.n_sites() {
            let d = distance2(&self.site_position(s), p);
            if d < best.0 - 1e-15 {
                best = (d, s);
            }
        }
        best.1
    }

    /// Uniform rest: gates at steady state, potentials consistent with it.
    pub fn rest_state(&self, t0: f64) -> ModelState {
        let cell = self.cell().rest();
        let cells = vec![cell; self.n_sites()];
        let fields = match self {
            Model::Bidomain(m) => Fields::Bidomain { u_e: vec![0.0; m.disc.n_nodes] },
            Model::Emi(m) => {
                let mut u = vec![0.0; m.disc.dofs.n_tets];
                for (t, tag) in m.mesh.tet_tags.iter().enumerate() {
                    if matches!(tag, crate::geometry::VolumeTag::Intracellular(_)) {
                        u[t] = cell.v;
                    }
                }
                Fields::Emi { u, w: vec![0.0; m.disc.dofs.gap.len()] }
            }
        };
        ModelState { time: t0, step: 0, cells, fields, gate_clamps: 0 }
    }

    /// Implicit solve from `ṽ`, then write-back of the new potentials.
    fn diffuse(&self, state: &mut ModelState) -> Result<(), FemError> {
        let v_tilde = state.potentials();
        let v_new = match (self, &mut state.fields) {
            (Model::Bidomain(m), Fields::Bidomain { u_e }) => {
                let (v, ue) = m.disc.step(&v_tilde)?;
                *u_e = ue;
                v
            }
            (Model::Emi(m), Fields::Emi { u, w }) => {
                let sol = m.disc.step(&v_tilde, w)?;
                *u = sol.u;
                *w = sol.w;
                sol.v
            }
            _ => unreachable!("state does not belong to this model"),
        };
        for (c, v) in state.cells.iter_mut().zip(v_new) {
            c.v = v;
        }
        Ok(())
    }
}

/// Advances `state` by one step of `cfg.dt` under `stimuli`.
pub fn godunov_step(
    model: &Model,
    state: &mut ModelState,
    stimuli: &[Stimulus],
    cfg: &SteppingConfig,
) -> Result<(), StepError> {
    let t = cfg.time_of(state.step);
    if t + cfg.dt > cfg.t_end + TIME_TOL {
        return Err(StepError::PastEnd { time: t, t_end: cfg.t_end });
    }
    let active: Vec<&Stimulus> = stimuli.iter().filter(|s| s.active_during(t, cfg.dt)).collect();
    let scheme = if cfg.force_rl || !active.is_empty() { GateScheme::RushLarsen } else { GateScheme::ForwardEuler };
    let mut current = vec![0.0; state.cells.len()];
    for s in &active {
        for &site in &s.sites {
            current[site] += s.amplitude;
        }
    }
    let cell = model.cell();
    for (c, &i_stim) in state.cells.iter_mut().zip(&current) {
        state.gate_clamps += cell
            .integrate(c, i_stim, cfg.dt, cfg.substeps, scheme)
            .map_err(|source| StepError::Reaction { time: t, source })? as u64;
    }
    model.diffuse(state).map_err(|source| StepError::Diffusion { time: t, source })?;
    if let Some(site) = state.cells.iter().position(|c| !c.v.is_finite()) {
        return Err(StepError::NonFinite { time: t + cfg.dt, site });
    }
    state.step += 1;
    state.time = cfg.time_of(state.step);
    Ok(())
}

/// Four sample points and the sites they snap to.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub points: [Point3; 4],
}

impl ProbeSet {
    /// Quadrant centres at the z mid-plane: x at 25%/75%, y at 25%/75%.
    pub fn quadrants(bounds: &BoxSpec) -> Self {
        let [x0, y0, z0] = bounds.origin;
        let [ex, ey, ez] = bounds.extents;
        let p = |fx: f64, fy: f64| [x0 + fx * ex, y0 + fy * ey, z0 + 0.5 * ez];
        Self { points: [p(0.25, 0.25), p(0.75, 0.25), p(0.25, 0.75), p(0.75, 0.75)] }
    }

    pub fn sites(&self, model: &Model) -> [usize; 4] {
        self.points.map(|p| model.nearest_site(&p))
    }
}

/// Per-site peak potential and first upward 0 mV crossing after `from`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTracker {
    pub from: f64,
    pub peak: Vec<f64>,
    pub crossing: Vec<Option<f64>>,
    armed: Vec<bool>,
    last: Vec<(f64, f64)>,
}

/// Activation threshold (mV) for peaks and crossings.
pub const ACTIVATION_MV: f64 = 0.0;

impl SiteTracker {
    pub fn new(from: f64, n_sites: usize) -> Self {
        Self {
            from,
            peak: vec![f64::NEG_INFINITY; n_sites],
            crossing: vec![None; n_sites],
            armed: vec![false; n_sites],
            last: vec![(f64::NAN, f64::NAN); n_sites],
        }
    }

    pub fn observe(&mut self, time: f64, state: &ModelState) {
        if time < self.from - TIME_TOL {
            return;
        }
        for (i, c) in state.cells.iter().enumerate() {
            let v = c.v;
            self.peak[i] = self.peak[i].max(v);
            if self.crossing[i].is_none() {
                if self.armed[i] && v > ACTIVATION_MV {
                    let (t0, v0) = self.last[i];
                    let frac = (ACTIVATION_MV - v0) / (v - v0);
                    self.crossing[i] = Some(t0 + frac * (time - t0));
                } else if v <= ACTIVATION_MV {
                    self.armed[i] = true;
                }
            }
            self.last[i] = (time, v);
        }
    }

    pub fn fraction_above(&self, threshold: f64) -> f64 {
        if self.peak.is_empty() {
            return 0.0;
        }
        self.peak.iter().filter(|&&p| p > threshold).count() as f64 / self.peak.len() as f64
    }
}

/// Full-field snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub times: Vec<f64>,
    pub probe_sites: [usize; 4],
    /// `probes[k][j]`: potential at probe `j` after step `k`; entry 0 is the
    /// initial state.
    pub probes: Vec<[f64; 4]>,
    pub frames: Vec<Frame>,
    pub tracker: Option<SiteTracker>,
    pub final_state: ModelState,
    /// Early-exit time, when the run stopped at full propagation.
    pub stopped_early: Option<f64>,
    /// States captured at the requested checkpoint times.
    pub checkpoints: Vec<ModelState>,
}

/// Early termination once the propagation verdict can no longer change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopWhenPropagated {
    pub fraction: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub snapshot_every: Option<f64>,
    pub watch_from: Option<f64>,
    pub stop_when_propagated: Option<StopWhenPropagated>,
    pub initial: Option<ModelState>,
    pub checkpoint_times: Vec<f64>,
    /// Stop once every listed site has crossed 0 mV (needs `watch_from`).
    pub stop_when_crossed: Vec<usize>,
}

/// Runs the time loop from `opts.initial` (or rest at `cfg.t0`) to `cfg.t_end`.
pub fn run(
    model: &Model,
    schedule: &[Stimulus],
    cfg: &SteppingConfig,
    probes: &ProbeSet,
    opts: RunOptions,
) -> Result<SimulationRecord, StepError> {
    cfg.validate()?;
    if (cfg.dt - model.dt()).abs() > 1e-12 {
        return Err(StepError::Config(format!(
            "dt {} differs from the {} ms the implicit operator was assembled for",
            cfg.dt,
            model.dt()
        )));
    }
    let mut state = opts.initial.unwrap_or_else(|| model.rest_state(cfg.t0));
    let probe_sites = probes.sites(model);
    let sample = |s: &ModelState| probe_sites.map(|i| s.cells[i].v);
    let mut record_times = vec![state.time];
    let mut record_probes = vec![sample(&state)];
    let mut frames = Vec::new();
    let mut tracker = opts.watch_from.map(|from| SiteTracker::new(from, model.n_sites()));
    if let Some(tr) = tracker.as_mut() {
        tr.observe(state.time, &state);
    }
    let mut checkpoints = Vec::new();
    let mut pending: Vec<f64> = opts.checkpoint_times.clone();
    pending.sort_by(f64::total_cmp);
    let take_checkpoints = |state: &ModelState, pending: &mut Vec<f64>, out: &mut Vec<ModelState>| {
        while let Some(&t) = pending.first() {
            if (state.time - t).abs() <= TIME_TOL + 0.5 * cfg.dt && state.time <= t + TIME_TOL {
                out.push(state.clone());
                pending.remove(0);
            } else if t < state.time {
                pending.remove(0);
            } else {
                break;
            }
        }
    };
    take_checkpoints(&state, &mut pending, &mut checkpoints);
    let is_frame_time = |t: f64| match opts.snapshot_every {
        Some(every) if every > 0.0 => {
            let k = ((t - cfg.t0) / every).round();
            (cfg.t0 + k * every - t).abs() <= TIME_TOL * (1.0 + t.abs()) || (t - cfg.t_end).abs() <= TIME_TOL
        }
        _ => false,
    };
    if is_frame_time(state.time) {
        frames.push(Frame { time: state.time, v: state.potentials() });
    }

    let mut stopped_early = None;
    while state.time + cfg.dt <= cfg.t_end + TIME_TOL {
        godunov_step(model, &mut state, schedule, cfg)?;
        record_times.push(state.time);
        record_probes.push(sample(&state));
        if let Some(tr) = tracker.as_mut() {
            tr.observe(state.time, &state);
        }
        take_checkpoints(&state, &mut pending, &mut checkpoints);
        if is_frame_time(state.time) {
            frames.push(Frame { time: state.time, v: state.potentials() });
        }
        if let Some(tr) = tracker.as_ref() {
            if !opts.stop_when_crossed.is_empty() && opts.stop_when_crossed.iter().all(|&s| tr.crossing[s].is_some()) {
                stopped_early = Some(state.time);
                break;
            }
        }
        if let (Some(stop), Some(tr)) = (opts.stop_when_propagated, tracker.as_ref()) {
            let probes_fired = probe_sites.iter().all(|&s| tr.peak[s] > ACTIVATION_MV);
            let all_stimuli_over = schedule.iter().all(|s| s.end() <= state.time + TIME_TOL);
            if probes_fired && all_stimuli_over && tr.fraction_above(ACTIVATION_MV) >= stop.fraction {
                stopped_early = Some(state.time);
                break;
            }
        }
    }
    Ok(SimulationRecord {
        times: record_times,
        probe_sites,
        probes: record_probes,
        frames,
        tracker,
        final_state: state,
        stopped_early,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_bidomain_mesh, RegionTarget};

    fn strip_model(dt: f64) -> Model {
        let mesh = build_bidomain_mesh(BoxSpec::with_extents([0.5, 0.1, 0.025]).unwrap(), 0.025).unwrap();
        Model::bidomain(mesh, &BidomainParams::default(), CellModel::default(), dt).unwrap()
    }

    fn cfg(dt: f64, t_end: f64) -> SteppingConfig {
        SteppingConfig { dt, t_end, ..Default::default() }
    }

    #[test]
    fn twenty_active_steps_for_two_ms_pulse() {
        let s = Stimulus { sites: vec![], amplitude: 1.0, onset: 5.0, duration: 2.0 };
        let c = cfg(0.1, 100.0);
        let n = (0..1000).filter(|&k| s.active_during(c.time_of(k), c.dt)).count();
        assert_eq!(n, 20);
    }

    #[test]
    fn rest_is_stationary() {
        let model = strip_model(0.1);
        let c = cfg(0.1, 10.0);
        let probes = ProbeSet::quadrants(&model.mesh().bounds);
        let rec = run(&model, &[], &c, &probes, RunOptions::default()).unwrap();
        assert_eq!(rec.times.len(), 101);
        let v0 = model.cell().rest().v;
        for p in &rec.probes {
            assert!(p.iter().all(|v| (v - v0).abs() < 1e-3));
        }
        for w in rec.probes.windows(2) {
            for j in 0..4 {
                assert!((w[1][j] - w[0][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn snapshot_at_end_gives_two_frames() {
        let model = strip_model(0.1);
        let c = cfg(0.1, 2.0);
        let probes = ProbeSet::quadrants(&model.mesh().bounds);
        let opts = RunOptions { snapshot_every: Some(2.0), ..Default::default() };
        let rec = run(&model, &[], &c, &probes, opts).unwrap();
        assert_eq!(rec.frames.len(), 2);
        assert_eq!(rec.frames[0].time, 0.0);
        assert!((rec.frames[1].time - 2.0).abs() < 1e-12);
    }

    #[test]
    fn strong_stimulus_propagates_and_is_deterministic() {
        let model = strip_model(0.1);
        let region = BoxSpec::new([0.0, 0.0, 0.0], [0.05, 0.1, 0.025]).unwrap();
        let sites = crate::geometry::region_select(model.mesh(), &region, RegionTarget::VolumeNodes)
            .unwrap()
            .indices;
        let stim = Stimulus { sites, amplitude: 200.0, onset: 0.0, duration: 2.0 };
        let c = cfg(0.1, 12.0);
        let probes = ProbeSet::quadrants(&model.mesh().bounds);
        let opts = || RunOptions { watch_from: Some(0.0), ..Default::default() };
        let a = run(&model, std::slice::from_ref(&stim), &c, &probes, opts()).unwrap();
        let b = run(&model, std::slice::from_ref(&stim), &c, &probes, opts()).unwrap();
        assert_eq!(a.probes, b.probes);
        let tr = a.tracker.unwrap();
        assert!(tr.fraction_above(0.0) > 0.99);
        let near = tr.crossing[probes.sites(&model)[0]].unwrap();
        let far = tr.crossing[probes.sites(&model)[1]].unwrap();
        assert!(far > near);
    }

    #[test]
    fn checkpoint_resume_matches_straight_run() {
        let model = strip_model(0.1);
        let region = BoxSpec::new([0.0, 0.0, 0.0], [0.05, 0.1, 0.025]).unwrap();
        let sites = model.sites_in(&region);
        let stim = vec![Stimulus { sites, amplitude: 150.0, onset: 0.0, duration: 2.0 }];
        let probes = ProbeSet::quadrants(&model.mesh().bounds);
        let full = run(&model, &stim, &cfg(0.1, 6.0), &probes, RunOptions::default()).unwrap();
        let prefix = run(
            &model,
            &stim,
            &cfg(0.1, 3.0),
            &probes,
            RunOptions { checkpoint_times: vec![3.0], ..Default::default() },
        )
        .unwrap();
        let resumed = run(
            &model,
            &stim,
            &cfg(0.1, 6.0),
            &probes,
            RunOptions { initial: Some(prefix.checkpoints[0].clone()), ..Default::default() },
        )
        .unwrap();
        assert_eq!(resumed.final_state, full.final_state);
    }

    #[test]
    fn past_end_is_rejected() {
        let model = strip_model(0.1);
        let c = cfg(0.1, 0.1);
        let mut s = model.rest_state(0.0);
        godunov_step(&model, &mut s, &[], &c).unwrap();
        assert!(matches!(godunov_step(&model, &mut s, &[], &c), Err(StepError::PastEnd { .. })));
    }

    /// Linear autonomous harness: y' = (A + B) y with A applied exactly and
    /// B by Backward Euler, against the exact matrix exponential.
    #[test]
    fn linear_godunov_is_first_order() {
        let a = [[-1.0, 0.5], [0.2, -2.0]];
        let b = [[-3.0, 3.0], [3.0, -3.0]];
        let sum = [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]];
        let y0 = [1.0, 0.0];
        let t_end = 1.0;
        let exact = expm_apply(&sum, t_end, &y0);
        let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&dt| {
                let n = (t_end / dt).round() as usize;
                let mut y = y0;
                for _ in 0..n {
                    y = expm_apply(&a, dt, &y);
                    // (I - dt B) y_new = y
                    let m = [[1.0 - dt * b[0][0], -dt * b[0][1]], [-dt * b[1][0], 1.0 - dt * b[1][1]]];
                    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                    y = [(m[1][1] * y[0] - m[0][1] * y[1]) / det, (-m[1][0] * y[0] + m[0][0] * y[1]) / det];
                }
                ((y[0] - exact[0]).powi(2) + (y[1] - exact[1]).powi(2)).sqrt()
            })
            .collect();
        // least-squares slope of log(err) against log(dt)
        let xs: Vec<f64> = [0.1f64, 0.05, 0.025, 0.0125].iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - 1.0).abs() <= 0.2, "slope {slope}");
    }

    /// exp(tM) y for 2x2 M by scaling and squaring of a Taylor series.
    fn expm_apply(m: &[[f64; 2]; 2], t: f64, y: &[f64; 2]) -> [f64; 2] {
        let s = 10;
        let h = t / (1 << s) as f64;
        let mut e = [[1.0, 0.0], [0.0, 1.0]];
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        for k in 1..20 {
            term = mul(&term, &[[m[0][0] * h, m[0][1] * h], [m[1][0] * h, m[1][1] * h]]);
            term = term.map(|r| r.map(|x| x / k as f64));
            for i in 0..2 {
                for j in 0..2 {
                    e[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..s {
            e = mul(&e, &e);
        }
        [e[0][0] * y[0] + e[0][1] * y[1], e[1][0] * y[0] + e[1][1] * y[1]]
    }

    fn mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    }
}

//! Conduction-velocity measurement and surrogate-based fitting of bidomain
//! conductivities to target velocities.

use faer::linalg::solvers::Solve;
use faer::Mat;
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cell::CellModel;
use crate::fem::{BidomainParams, FemError};
use crate::geometry::{build_bidomain_mesh, BoxSpec, EmiCellLayout, GeometryError, Point3, TaggedMesh};
use crate::stepping::{run, Model, ProbeSet, RunOptions, StepError, SteppingConfig, Stimulus};

/// Objective value assigned to candidates that fail to conduct.
pub const FAILURE_PENALTY: f64 = 1e6;

/// Literature velocities (cm/s), longitudinal then transverse.
pub const EMI_TARGET_CV: [f64; 2] = [61.12, 22.08];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("wave did not reach sample {sample} within {horizon} ms")]
    NoArrival { sample: usize, horizon: f64 },
    #[error("activation times are not increasing along the axis: {0:?}")]
    NotIncreasing([f64; 5]),
    #[error("stimulus slab {0:?} contains no cell-model site")]
    EmptySlab(BoxSpec),
    #[error("every one of the {0} evaluations failed to propagate")]
    AllPenalized(usize),
    #[error("invalid calibration setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Longitudinal,
    Transverse,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::Longitudinal => 0,
            Axis::Transverse => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Longitudinal => "x",
            Axis::Transverse => "y",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "x" | "longitudinal" => Ok(Axis::Longitudinal),
            "y" | "transverse" => Ok(Axis::Transverse),
            other => Err(format!("unknown direction '{other}' (expected x or y)")),
        }
    }
}

/// Stimulus slab, sample points and run limits for one CV measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct CvProtocol {
    pub axis: Axis,
    pub slab: BoxSpec,
    pub samples: [Point3; 5],
    /// µA/µF
    pub amplitude: f64,
    /// ms
    pub duration: f64,
    /// Longest simulated time (ms) before giving up.
    pub horizon: f64,
}

/// Default pulse for CV runs (µA/µF).
pub const CV_STIMULUS: f64 = 250.0;

impl CvProtocol {
    fn slab(bounds: &BoxSpec, axis: Axis, fraction: f64) -> BoxSpec {
        let mut extents = bounds.extents;
        extents[axis.index()] *= fraction;
        BoxSpec { origin: bounds.origin, extents }
    }

    /// Five equidistant points between 25% and 75% of the domain along `axis`,
    /// centred in the other two directions.
    pub fn bidomain(bounds: &BoxSpec, axis: Axis) -> Self {
        let a = axis.index();
        let samples = std::array::from_fn(|k| {
            let mut p = bounds.center();
            p[a] = bounds.origin[a] + bounds.extents[a] * (0.25 + 0.125 * k as f64);
            p
        });
        Self {
            axis,
            slab: Self::slab(bounds, axis, 0.1),
            samples,
            amplitude: CV_STIMULUS,
            duration: 2.0,
            horizon: 40.0,
        }
    }

    /// Five cells of the middle row (or column), evenly spaced by
    /// `max(1, n / 6)` cells, each sampled on the membrane at the centre of
    /// its downstream end face. Sampling whole cells avoids timing the
    /// near-instant spread inside one cell.
    pub fn emi(layout: &EmiCellLayout, axis: Axis) -> Result<Self, CalibrationError> {
        let n = match axis {
            Axis::Longitudinal => layout.nx,
            Axis::Transverse => layout.ny,
        };
        if n < 5 {
            return Err(CalibrationError::Invalid(format!("need at least 5 cells along {}, have {n}", axis.as_str())));
        }
        let step = (n / 6).max(1);
        let a = axis.index();
        let samples = std::array::from_fn(|k| {
            let i = step * (k + 1) - 1;
            let body = match axis {
                Axis::Longitudinal => layout.body_box(i, layout.ny / 2),
                Axis::Transverse => layout.body_box(layout.nx / 2, i),
            };
            let mut p = body.center();
            p[a] = body.upper()[a];
            p
        });
        Ok(Self {
            axis,
            slab: Self::slab(&layout.bounds(), axis, 0.1),
            samples,
            amplitude: CV_STIMULUS,
            duration: 2.0,
            horizon: 40.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvMeasurement {
    pub axis: Axis,
    /// Positions of the sites actually sampled (mm).
    pub sample_positions: [Point3; 5],
    /// ms
    pub activation_times: [f64; 5],
    /// cm/s
    pub cv: f64,
}

/// Mean of the pairwise speeds between consecutive samples, in cm/s
/// (1 mm/ms = 100 cm/s).
pub fn velocity_from_times(positions: &[Point3; 5], times: &[f64; 5], axis: Axis) -> Result<f64, CalibrationError> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CalibrationError::NotIncreasing(*times));
    }
    let a = axis.index();
    let speeds: f64 = (0..4).map(|k| (positions[k + 1][a] - positions[k][a]).abs() / (times[k + 1] - times[k])).sum();
    Ok(100.0 * speeds / 4.0)
}

/// Stimulates the slab at t = 0 from rest and times the first 0 mV crossing
/// at each sample.
pub fn measure_cv(model: &Model, protocol: &CvProtocol, stepping: &SteppingConfig) -> Result<CvMeasurement, CalibrationError> {
    let slab_sites = model.sites_in(&protocol.slab);
    if slab_sites.is_empty() {
        return Err(CalibrationError::EmptySlab(protocol.slab));
    }
    let sites: [usize; 5] = protocol.samples.map(|p| model.nearest_site(&p));
    let stim = [Stimulus { sites: slab_sites, amplitude: protocol.amplitude, onset: 0.0, duration: protocol.duration }];
    let cfg = SteppingConfig { t0: 0.0, t_end: protocol.horizon, ..*stepping };
    let probes = ProbeSet::quadrants(&model.mesh().bounds);
    let opts = RunOptions { watch_from: Some(0.0), stop_when_crossed: sites.to_vec(), ..Default::default() };
    let record = run(model, &stim, &cfg, &probes, opts)?;
    let tracker = record.tracker.expect("tracking was requested");
    let mut times = [0.0; 5];
    for (k, &s) in sites.iter().enumerate() {
        times[k] = tracker.crossing[s].ok_or(CalibrationError::NoArrival { sample: k, horizon: protocol.horizon })?;
    }
    let positions = sites.map(|s| model.site_position(s));
    let cv = velocity_from_times(&positions, &times, protocol.axis)?;
    Ok(CvMeasurement { axis: protocol.axis, sample_positions: positions, activation_times: times, cv })
}

/// Bidomain conductivities with equal y and z components, as
/// `[σ_i,l, σ_i,t, σ_e,l, σ_e,t]`.
pub type SigmaVector = [f64; 4];

pub fn sigma_vector(p: &BidomainParams) -> SigmaVector {
    [p.sigma_i[0], p.sigma_i[1], p.sigma_e[0], p.sigma_e[1]]
}

pub fn with_sigma(base: &BidomainParams, s: &SigmaVector) -> BidomainParams {
    BidomainParams { sigma_i: [s[0], s[1], s[1]], sigma_e: [s[2], s[3], s[3]], ..*base }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub sigma: SigmaVector,
    /// cm/s; `None` when the wave failed to reach every sample.
    pub cv: [Option<f64>; 2],
    pub objective: f64,
}

/// Bidomain CV runs on a fixed mesh for candidate conductivities.
pub struct CvObjective {
    pub mesh: TaggedMesh,
    pub base: BidomainParams,
    pub cell: CellModel,
    pub stepping: SteppingConfig,
    pub targets: [f64; 2],
    pub amplitude: f64,
    pub horizon: f64,
}

impl CvObjective {
    pub fn new(bounds: BoxSpec, h: f64, base: BidomainParams, stepping: SteppingConfig, targets: [f64; 2]) -> Result<Self, CalibrationError> {
        Ok(Self {
            mesh: build_bidomain_mesh(bounds, h)?,
            base,
            cell: CellModel::new(Default::default(), base.capacitance),
            stepping,
            targets,
            amplitude: CV_STIMULUS,
            horizon: 40.0,
        })
    }

    pub fn measure(&self, sigma: &SigmaVector, axis: Axis) -> Result<CvMeasurement, CalibrationError> {
        let params = with_sigma(&self.base, sigma);
        params.validate()?;
        let model = Model::bidomain(self.mesh.clone(), &params, self.cell, self.stepping.dt)?;
        let protocol = CvProtocol { amplitude: self.amplitude, horizon: self.horizon, ..CvProtocol::bidomain(&self.mesh.bounds, axis) };
        measure_cv(&model, &protocol, &self.stepping)
    }

    /// Sum of squared CV misfits; propagation failures cost [`FAILURE_PENALTY`].
    pub fn evaluate(&self, sigma: &SigmaVector) -> Result<Evaluation, CalibrationError> {
        let mut cv = [None; 2];
        for axis in [Axis::Longitudinal, Axis::Transverse] {
            match self.measure(sigma, axis) {
                Ok(m) => cv[axis.index()] = Some(m.cv),
                Err(CalibrationError::NoArrival { .. } | CalibrationError::NotIncreasing(_)) => {
                    warn!("candidate {sigma:?} failed to conduct along {}", axis.as_str());
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Evaluation { sigma: *sigma, cv, objective: cv_misfit(&cv, &self.targets) })
    }
}

pub fn cv_misfit(cv: &[Option<f64>; 2], targets: &[f64; 2]) -> f64 {
    match cv {
        [Some(l), Some(t)] => (l - targets[0]).powi(2) + (t - targets[1]).powi(2),
        _ => FAILURE_PENALTY,
    }
}

/// Box-constrained derivative-free minimizer: cubic radial-basis surrogate
/// with a linear tail, fitted in the unit cube, proposing the candidate that
/// best trades predicted value against distance to evaluated points.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfSearch {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub budget: usize,
    pub seed: u64,
    /// Search in log-space (for strictly positive bounds).
    pub log_scale: bool,
    pub candidates_per_round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchPoint {
    pub x: Vec<f64>,
    pub value: f64,
}

impl RbfSearch {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, budget: usize, seed: u64) -> Result<Self, CalibrationError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(CalibrationError::Invalid("bounds must be non-empty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(CalibrationError::Invalid(format!("empty bounds {lower:?}..{upper:?}")));
        }
        let log_scale = lower.iter().all(|&l| l > 0.0);
        Ok(Self { lower, upper, budget, seed, log_scale, candidates_per_round: 400 })
    }

    fn bounds_to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (l, u) = (self.lower[i], self.upper[i]);
                let t = if self.log_scale { (v.ln() - l.ln()) / (u.ln() - l.ln()) } else { (v - l) / (u - l) };
                t.clamp(0.0, 1.0)
            })
            .collect()
    }

    fn unit_to_bounds(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (l, u) = (self.lower[i], self.upper[i]);
                if self.log_scale {
                    (l.ln() + v * (u.ln() - l.ln())).exp()
                } else {
                    l + v * (u - l)
                }
            })
            .collect()
    }

    /// Evaluates `f` at most `budget` times and returns every evaluation in
    /// order. `start`, when given, is evaluated first.
    pub fn minimize<F, E>(&self, start: Option<&[f64]>, mut f: F) -> Result<Vec<SearchPoint>, E>
    where
        F: FnMut(&[f64]) -> Result<f64, E>,
    {
        let d = self.lower.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut unit: Vec<Vec<f64>> = Vec::new();
        let mut history: Vec<SearchPoint> = Vec::new();
        let mut evaluate = |t: Vec<f64>, unit: &mut Vec<Vec<f64>>, history: &mut Vec<SearchPoint>| -> Result<(), E> {
            let x = self.unit_to_bounds(&t);
            let value = f(&x)?;
            info!("evaluation {}: {x:?} -> {value}", history.len() + 1);
            unit.push(t);
            history.push(SearchPoint { x, value });
            Ok(())
        };
        if let Some(s) = start {
            evaluate(self.bounds_to_unit(s), &mut unit, &mut history)?;
        }
        // Latin hypercube for the initial design.
        let n_init = (2 * d + 1).min(self.budget.saturating_sub(history.len()));
        let strata: Vec<Vec<usize>> = (0..d)
            .map(|_| {
                let mut p: Vec<usize> = (0..n_init).collect();
                for i in (1..p.len()).rev() {
                    p.swap(i, rng.random_range(0..=i));
                }
                p
            })
            .collect();
        for k in 0..n_init {
            let t: Vec<f64> = (0..d).map(|i| (strata[i][k] as f64 + rng.random::<f64>()) / n_init as f64).collect();
            evaluate(t, &mut unit, &mut history)?;
        }
        let weights = [0.3, 0.5, 0.8, 0.95];
        let mut round = 0;
        while history.len() < self.budget {
            let values: Vec<f64> = history.iter().map(|h| h.value).collect();
            let best = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("non-empty history");
            let surrogate = Rbf::fit(&unit, &transform_values(&values));
            let progress = history.len() as f64 / self.budget as f64;
            let sigma = 0.2 * (1.0 - progress) + 0.01;
            let mut cands: Vec<Vec<f64>> = Vec::with_capacity(self.candidates_per_round);
            for c in 0..self.candidates_per_round {
                if c % 2 == 0 {
                    cands.push(
                        unit[best].iter().map(|&v| (v + sigma * standard_normal(&mut rng)).clamp(0.0, 1.0)).collect(),
                    );
                } else {
                    cands.push((0..d).map(|_| rng.random::<f64>()).collect());
                }
            }
            let pred: Vec<f64> = cands.iter().map(|c| surrogate.as_ref().map_or(0.0, |s| s.eval(c))).collect();
            let dist: Vec<f64> = cands
                .iter()
                .map(|c| unit.iter().map(|u| dist(c, u)).fold(f64::INFINITY, f64::min))
                .collect();
            let w = weights[round % weights.len()];
            round += 1;
            let score = scaled_scores(&pred, &dist, w);
            let pick = (0..cands.len())
                .filter(|&i| dist[i] > 1e-6)
                .min_by(|&a, &b| score[a].total_cmp(&score[b]));
            let t = match pick {
                Some(i) => cands[i].clone(),
                None => (0..d).map(|_| rng.random::<f64>()).collect(),
            };
            evaluate(t, &mut unit, &mut history)?;
        }
        Ok(history)
    }
}

/// Penalized values would flatten the surrogate; cap them at the worst
/// regular value plus its spread.
fn transform_values(values: &[f64]) -> Vec<f64> {
    let regular: Vec<f64> = values.iter().copied().filter(|&v| v < FAILURE_PENALTY).collect();
    if regular.is_empty() {
        return values.to_vec();
    }
    let lo = regular.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = regular.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().map(|&v| v.min(hi + (hi - lo))).collect()
}

fn scaled_scores(pred: &[f64], dist: &[f64], w: f64) -> Vec<f64> {
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (plo, pr) = range(pred);
    let (dlo, dr) = range(dist);
    pred.iter()
        .zip(dist)
        .map(|(p, q)| w * (p - plo) / pr + (1.0 - w) * (1.0 - (q - dlo) / dr))
        .collect()
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cubic RBF interpolant `s(x) = Σ λ_j |x - x_j|³ + c_0 + c·x`.
struct Rbf {
    centres: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    tail: Vec<f64>,
}

impl Rbf {
    fn fit(centres: &[Vec<f64>], values: &[f64]) -> Option<Self> {
        let n = centres.len();
        let d = centres.first()?.len();
        if n < d + 1 {
            return None;
        }
        let m = n + d + 1;
        let a = Mat::<f64>::from_fn(m, m, |i, j| match (i < n, j < n) {
            (true, true) => dist(&centres[i], &centres[j]).powi(3),
            (true, false) => poly(&centres[i], j - n),
            (false, true) => poly(&centres[j], i - n),
            (false, false) => 0.0,
        });
        let mut rhs = Mat::<f64>::from_fn(m, 1, |i, _| if i < n { values[i] } else { 0.0 });
        a.as_ref().full_piv_lu().solve_in_place(rhs.as_mut());
        let coef: Vec<f64> = (0..m).map(|i| rhs[(i, 0)]).collect();
        if coef.iter().any(|c| !c.is_finite()) {
            return None;
        }
        Some(Self { centres: centres.to_vec(), lambda: coef[..n].to_vec(), tail: coef[n..].to_vec() })
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let s: f64 = self.centres.iter().zip(&self.lambda).map(|(c, l)| l * dist(x, c).powi(3)).sum();
        s + (0..self.tail.len()).map(|k| self.tail[k] * poly(x, k)).sum::<f64>()
    }
}

fn poly(x: &[f64], k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        x[k - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub params: BidomainParams,
    pub objective: f64,
    pub evaluations: usize,
    pub history: Vec<Evaluation>,
}

/// Searches conductivities within `[lower, upper]` starting from
/// `objective.base`.
pub fn calibrate(
    objective: &CvObjective,
    lower: SigmaVector,
    upper: SigmaVector,
    budget: usize,
    seed: u64,
) -> Result<CalibrationResult, CalibrationError> {
    if budget < 10 {
        return Err(CalibrationError::Invalid(format!("budget must be at least 10, got {budget}")));
    }
    let search = RbfSearch::new(lower.to_vec(), upper.to_vec(), budget, seed)?;
    let start = sigma_vector(&objective.base);
    let mut history = Vec::new();
    search.minimize(Some(&start), |x| {
        let s: SigmaVector = [x[0], x[1], x[2], x[3]];
        let e = objective.evaluate(&s)?;
        let v = e.objective;
        history.push(e);
        Ok::<_, CalibrationError>(v)
    })?;
    if history.iter().all(|e| e.objective >= FAILURE_PENALTY) {
        return Err(CalibrationError::AllPenalized(history.len()));
    }
    let best = history
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("budget is at least 10");
    Ok(CalibrationResult {
        params: with_sigma(&objective.base, &best.sigma),
        objective: best.objective,
        evaluations: history.len(),
        history,
    })
}

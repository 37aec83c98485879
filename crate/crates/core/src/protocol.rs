//! S1-S2 stimulation experiments: propagation verdicts, threshold searches,
//! make/break classification and strength-interval curves.
//!
//! A trial propagates when every probe peaks above 0 mV after the test pulse
//! onset and at least `cutoff` of all cell-model sites do as well. Threshold
//! searches work on the grid of multiples of the resolution, expand a
//! doubling bracket and then bisect it.

use std::collections::BTreeMap;

use log::{debug, warn};
use thiserror::Error;

use crate::geometry::BoxSpec;
use crate::stepping::{
    run, Model, ModelState, ProbeSet, RunOptions, SimulationRecord, SiteTracker, StepError, SteppingConfig, Stimulus,
    StopWhenPropagated, ACTIVATION_MV, TIME_TOL,
};

/// Largest amplitude (µA/µF) tried before declaring the tissue unexcitable.
pub const MAX_AMPLITUDE: f64 = 65536.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("no propagation up to {max} µA/µF")]
    Unexcitable { max: f64 },
    #[error("record has no tracking data from t = {0} ms")]
    MissingTrace(f64),
    #[error("no activation outside the electrode after t = {0} ms")]
    NoActivation(f64),
    #[error("electrode {0:?} contains no cell-model site")]
    EmptyElectrode(BoxSpec),
    #[error("invalid protocol: {0}")]
    Invalid(String),
    #[error("bracketing check failed at {amplitude} µA/µF: expected propagated = {expected}")]
    Bracketing { amplitude: f64, expected: bool },
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct S1S2Protocol {
    /// S1 amplitude (µA/µF), normally the resting threshold.
    pub s1_amplitude: f64,
    /// S1-S2 intervals (ms), ascending.
    pub intervals: Vec<f64>,
    /// µA/µF
    pub resolution: f64,
    pub electrode: BoxSpec,
    /// Pulse duration (ms) for both stimuli.
    pub duration: f64,
}

impl S1S2Protocol {
    pub fn default_intervals() -> Vec<f64> {
        (142..=157).map(f64::from).collect()
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.resolution > 0.0) {
            return Err(ProtocolError::Invalid(format!("resolution must be positive, got {}", self.resolution)));
        }
        if !(self.duration > 0.0) {
            return Err(ProtocolError::Invalid(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.s1_amplitude >= 0.0) {
            return Err(ProtocolError::Invalid(format!("S1 amplitude must be non-negative, got {}", self.s1_amplitude)));
        }
        if self.intervals.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProtocolError::Invalid("intervals must be strictly ascending".into()));
        }
        Ok(())
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationVerdict {
    pub propagated: bool,
    pub probe_peaks: [f64; 4],
    pub depolarized_fraction: f64,
    pub cutoff: f64,
}

/// Verdict for a record whose tracker started at `s2_onset`.
pub fn detect_propagation(
    record: &SimulationRecord,
    s2_onset: f64,
    cutoff: f64,
) -> Result<PropagationVerdict, ProtocolError> {
    let tracker = record.tracker.as_ref().ok_or(ProtocolError::MissingTrace(s2_onset))?;
    if (tracker.from - s2_onset).abs() > TIME_TOL {
        return Err(ProtocolError::MissingTrace(s2_onset));
    }
    Ok(verdict_from(tracker, record.probe_sites, cutoff))
}

pub fn verdict_from(tracker: &SiteTracker, probe_sites: [usize; 4], cutoff: f64) -> PropagationVerdict {
    let probe_peaks = probe_sites.map(|s| tracker.peak[s]);
    let depolarized_fraction = tracker.fraction_above(ACTIVATION_MV);
    let propagated = probe_peaks.iter().all(|&p| p > ACTIVATION_MV) && depolarized_fraction >= cutoff;
    PropagationVerdict { propagated, probe_peaks, depolarized_fraction, cutoff }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Make,
    Break,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Make => "make",
            Mechanism::Break => "break",
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "make" => Ok(Mechanism::Make),
            "break" => Ok(Mechanism::Break),
            other => Err(format!("unknown mechanism '{other}'")),
        }
    }
}

/// Make when the first activation outside the electrode precedes the end of
/// the pulse; an activation exactly at the end counts as break.
pub fn classify_by_time(first_activation: f64, pulse_end: f64) -> Mechanism {
    if first_activation < pulse_end - TIME_TOL {
        Mechanism::Make
    } else {
        Mechanism::Break
    }
}

/// Earliest upward 0 mV crossing among sites not in `electrode_sites`.
pub fn first_activation_outside(tracker: &SiteTracker, electrode_sites: &[usize]) -> Option<f64> {
    let mut inside = vec![false; tracker.crossing.len()];
    for &s in electrode_sites {
        inside[s] = true;
    }
    tracker
        .crossing
        .iter()
        .zip(&inside)
        .filter_map(|(c, &i)| if i { None } else { *c })
        .min_by(f64::total_cmp)
}

pub fn classify_excitation(
    record: &SimulationRecord,
    electrode_sites: &[usize],
    s2_onset: f64,
    duration: f64,
) -> Result<Mechanism, ProtocolError> {
    let tracker = record.tracker.as_ref().ok_or(ProtocolError::MissingTrace(s2_onset))?;
    let first = first_activation_outside(tracker, electrode_sites).ok_or(ProtocolError::NoActivation(s2_onset))?;
    Ok(classify_by_time(first, s2_onset + duration))
}

/// Result of a bracketing search on the amplitude grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub threshold: f64,
    /// Every amplitude simulated and whether it propagated, in order.
    pub trials: Vec<(f64, bool)>,
    pub non_monotone: bool,
}

/// Smallest grid amplitude `k·resolution` that propagates while
/// `(k-1)·resolution` does not. The bracket grows by doubling from `start`
/// (upwards while failing, downwards while propagating) and is then bisected.
pub fn bracket_threshold<F>(start: f64, resolution: f64, max: f64, mut propagates: F) -> Result<ThresholdSearch, ProtocolError>
where
    F: FnMut(f64) -> Result<bool, ProtocolError>,
{
    if !(resolution > 0.0) {
        return Err(ProtocolError::Invalid(format!("resolution must be positive, got {resolution}")));
    }
    let mut memo: BTreeMap<u64, bool> = BTreeMap::new();
    let mut trials = Vec::new();
    let mut eval = |k: u64, memo: &mut BTreeMap<u64, bool>| -> Result<bool, ProtocolError> {
        if k == 0 {
            return Ok(false);
        }
        if let Some(&p) = memo.get(&k) {
            return Ok(p);
        }
        let amp = k as f64 * resolution;
        let p = propagates(amp)?;
        debug!("trial {amp} µA/µF -> {}", if p { "propagated" } else { "failed" });
        memo.insert(k, p);
        trials.push((amp, p));
        Ok(p)
    };
    let k_max = (max / resolution).floor().max(1.0) as u64;
    let mut k = ((start / resolution).ceil().max(1.0) as u64).min(k_max);
    let (mut lo, mut hi);
    if eval(k, &mut memo)? {
        hi = k;
        loop {
            k /= 2;
            if !eval(k, &mut memo)? {
                lo = k;
                break;
            }
            hi = k;
        }
    } else {
        lo = k;
        loop {
            if k >= k_max {
                return Err(ProtocolError::Unexcitable { max });
            }
            k = (2 * k).min(k_max);
            if eval(k, &mut memo)? {
                hi = k;
                break;
            }
            lo = k;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid, &mut memo)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let non_monotone = is_non_monotone(&memo);
    if non_monotone {
        warn!("non-monotone trial verdicts around {} µA/µF: {:?}", hi as f64 * resolution, memo);
    }
    Ok(ThresholdSearch { threshold: hi as f64 * resolution, trials, non_monotone })
}

/// Whether a propagating amplitude lies below a failing one.
fn is_non_monotone(verdicts: &BTreeMap<u64, bool>) -> bool {
    verdicts.iter().any(|(&a, &pa)| pa && verdicts.range(a + 1..).any(|(_, &pb)| !pb))
}

/// Tunables shared by all trials of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    /// Simulated time (ms) after S1 for resting-threshold trials.
    pub resting_horizon: f64,
    /// Simulated time (ms) after S2 onset for S2 trials.
    pub s2_horizon: f64,
    pub depolarized_cutoff: f64,
    /// Stop a trial as soon as its verdict can no longer change.
    pub early_exit: bool,
    /// Re-run `T` and `T - resolution` after each search.
    pub confirm: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self { resting_horizon: 40.0, s2_horizon: 60.0, depolarized_cutoff: 0.95, early_exit: true, confirm: true }
    }
}

/// One point of a strength-interval curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SiPoint {
    pub interval: f64,
    pub threshold: f64,
    pub mechanism: Mechanism,
    pub first_activation: f64,
    pub trials: usize,
    pub non_monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiCurve {
    pub resting_threshold: f64,
    pub points: Vec<SiPoint>,
}

/// Thresholds divided by the resting threshold. Only obtainable from a raw
/// [`SiCurve`], so a curve cannot be normalized twice.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSiCurve {
    pub resting_threshold: f64,
    pub points: Vec<(f64, f64, Mechanism)>,
}

impl SiCurve {
    pub fn normalize(&self) -> NormalizedSiCurve {
        NormalizedSiCurve {
            resting_threshold: self.resting_threshold,
            points: self
                .points
                .iter()
                .map(|p| (p.interval, p.threshold / self.resting_threshold, p.mechanism))
                .collect(),
        }
    }

    /// Whether thresholds never increase with the interval.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].threshold <= w[0].threshold)
    }
}

/// Smallest interval labelled make whose predecessor is labelled break.
pub fn rrp_transition(points: &[(f64, Mechanism)]) -> Option<f64> {
    points
        .windows(2)
        .find(|w| w[0].1 == Mechanism::Break && w[1].1 == Mechanism::Make)
        .map(|w| w[1].0)
}

/// A model plus electrode, probes and stepping configuration.
pub struct Experiment<'a> {
    pub model: &'a Model,
    pub electrode: BoxSpec,
    pub electrode_sites: Vec<usize>,
    pub probes: ProbeSet,
    pub stepping: SteppingConfig,
    pub settings: SearchSettings,
    pub duration: f64,
}

/// A trial's verdict plus the earliest activation outside the electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub amplitude: f64,
    pub verdict: PropagationVerdict,
    pub first_activation: Option<f64>,
    pub end_time: f64,
}

impl<'a> Experiment<'a> {
    pub fn new(
        model: &'a Model,
        electrode: BoxSpec,
        probes: ProbeSet,
        stepping: SteppingConfig,
        settings: SearchSettings,
    ) -> Result<Self, ProtocolError> {
        let electrode_sites = model.sites_in(&electrode);
        if electrode_sites.is_empty() {
            return Err(ProtocolError::EmptyElectrode(electrode));
        }
        Ok(Self { model, electrode, electrode_sites, probes, stepping, settings, duration: 2.0 })
    }

    fn pulse(&self, amplitude: f64, onset: f64) -> Stimulus {
        Stimulus { sites: self.electrode_sites.clone(), amplitude, onset, duration: self.duration }
    }

    fn options(&self, watch_from: f64, initial: Option<ModelState>) -> RunOptions {
        RunOptions {
            watch_from: Some(watch_from),
            stop_when_propagated: self
                .settings
                .early_exit
                .then_some(StopWhenPropagated { fraction: self.settings.depolarized_cutoff }),
            initial,
            ..Default::default()
        }
    }

    fn outcome(&self, amplitude: f64, record: &SimulationRecord, onset: f64) -> Result<TrialOutcome, ProtocolError> {
        let verdict = detect_propagation(record, onset, self.settings.depolarized_cutoff)?;
        let tracker = record.tracker.as_ref().ok_or(ProtocolError::MissingTrace(onset))?;
        Ok(TrialOutcome {
            amplitude,
            verdict,
            first_activation: first_activation_outside(tracker, &self.electrode_sites),
            end_time: record.final_state.time,
        })
    }

    /// S1 at t = 0 from uniform rest.
    pub fn resting_trial(&self, amplitude: f64) -> Result<TrialOutcome, ProtocolError> {
        let cfg = SteppingConfig { t0: 0.0, t_end: self.settings.resting_horizon, ..self.stepping };
        let schedule = [self.pulse(amplitude, 0.0)];
        let record = run(self.model, &schedule, &cfg, &self.probes, self.options(0.0, None))?;
        self.outcome(amplitude, &record, 0.0)
    }

    pub fn find_resting_threshold(&self, resolution: f64) -> Result<ThresholdSearch, ProtocolError> {
        let search = bracket_threshold(1.0, resolution, MAX_AMPLITUDE, |a| Ok(self.resting_trial(a)?.verdict.propagated))?;
        if self.settings.confirm {
            self.confirm(search.threshold, resolution, |a| Ok(self.resting_trial(a)?.verdict.propagated))?;
        }
        Ok(search)
    }

    /// States at each S1-S2 onset, from one S1 run. `intervals` ascending.
    pub fn s1_checkpoints(&self, s1_amplitude: f64, intervals: &[f64]) -> Result<Vec<ModelState>, ProtocolError> {
        let Some(&last) = intervals.last() else {
            return Ok(Vec::new());
        };
        let cfg = SteppingConfig { t0: 0.0, t_end: last, ..self.stepping };
        let schedule = [self.pulse(s1_amplitude, 0.0)];
        let opts = RunOptions { checkpoint_times: intervals.to_vec(), ..Default::default() };
        let record = run(self.model, &schedule, &cfg, &self.probes, opts)?;
        if record.checkpoints.len() != intervals.len() {
            return Err(ProtocolError::Invalid(format!(
                "intervals {intervals:?} do not fall on the {} ms step grid",
                self.stepping.dt
            )));
        }
        Ok(record.checkpoints)
    }

    /// S2 of `amplitude` at `interval`, continuing from the S1 state there.
    pub fn s2_trial(&self, at_onset: &ModelState, s1_amplitude: f64, interval: f64, amplitude: f64) -> Result<TrialOutcome, ProtocolError> {
        let cfg = SteppingConfig { t0: 0.0, t_end: interval + self.settings.s2_horizon, ..self.stepping };
        let schedule = [self.pulse(s1_amplitude, 0.0), self.pulse(amplitude, interval)];
        let record = run(self.model, &schedule, &cfg, &self.probes, self.options(interval, Some(at_onset.clone())))?;
        self.outcome(amplitude, &record, interval)
    }

    /// Threshold, mechanism and search log for one interval.
    pub fn find_s2_threshold(
        &self,
        at_onset: &ModelState,
        protocol: &S1S2Protocol,
        interval: f64,
    ) -> Result<SiPoint, ProtocolError> {
        let s1 = protocol.s1_amplitude;
        let mut outcomes: BTreeMap<u64, TrialOutcome> = BTreeMap::new();
        let mut trial = |a: f64| -> Result<bool, ProtocolError> {
            let o = self.s2_trial(at_onset, s1, interval, a)?;
            let p = o.verdict.propagated;
            outcomes.insert(a.to_bits(), o);
            Ok(p)
        };
        let search = bracket_threshold(s1.max(protocol.resolution), protocol.resolution, MAX_AMPLITUDE, &mut trial)?;
        let at_threshold = if self.settings.confirm {
            let mut last = None;
            self.confirm(search.threshold, protocol.resolution, |a| {
                let o = self.s2_trial(at_onset, s1, interval, a)?;
                let p = o.verdict.propagated;
                last.get_or_insert(o);
                Ok(p)
            })?;
            last.expect("confirmation simulates the threshold first")
        } else {
            outcomes.remove(&search.threshold.to_bits()).expect("threshold amplitude was simulated")
        };
        let first = at_threshold.first_activation.ok_or(ProtocolError::NoActivation(interval))?;
        Ok(SiPoint {
            interval,
            threshold: search.threshold,
            mechanism: classify_by_time(first, interval + self.duration),
            first_activation: first,
            trials: search.trials.len() + if self.settings.confirm { 2 } else { 0 },
            non_monotone: search.non_monotone,
        })
    }

    /// Full curve, one interval after another.
    pub fn build_si_curve(&self, protocol: &S1S2Protocol) -> Result<SiCurve, ProtocolError> {
        protocol.validate()?;
        let states = self.s1_checkpoints(protocol.s1_amplitude, &protocol.intervals)?;
        let points = protocol
            .intervals
            .iter()
            .zip(&states)
            .map(|(&i, s)| self.find_s2_threshold(s, protocol, i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SiCurve { resting_threshold: protocol.s1_amplitude, points })
    }

    fn confirm<F>(&self, threshold: f64, resolution: f64, mut propagates: F) -> Result<(), ProtocolError>
    where
        F: FnMut(f64) -> Result<bool, ProtocolError>,
    {
        if !propagates(threshold)? {
            return Err(ProtocolError::Bracketing { amplitude: threshold, expected: true });
        }
        let below = threshold - resolution;
        if below > 0.0 && propagates(below)? {
            return Err(ProtocolError::Bracketing { amplitude: below, expected: false });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepping::Frame;

    fn tracker_with(peaks: Vec<f64>, crossings: Vec<Option<f64>>) -> SiteTracker {
        let mut t = SiteTracker::new(150.0, peaks.len());
        t.peak = peaks;
        t.crossing = crossings;
        t
    }

    fn record(tracker: SiteTracker) -> SimulationRecord {
        let state = ModelState {
            time: 0.0,
            step: 0,
            cells: vec![],
            fields: crate::stepping::Fields::Bidomain { u_e: vec![] },
            gate_clamps: 0,
        };
        SimulationRecord {
            times: vec![],
            probe_sites: [0, 1, 2, 3],
            probes: vec![],
            frames: Vec::<Frame>::new(),
            tracker: Some(tracker),
            final_state: state,
            stopped_early: None,
            checkpoints: vec![],
        }
    }

    #[test]
    fn all_probes_high_propagates() {
        let r = record(tracker_with(vec![20.0; 10], vec![None; 10]));
        let v = detect_propagation(&r, 150.0, 0.95).unwrap();
        assert!(v.propagated);
        assert_eq!(v.depolarized_fraction, 1.0);
    }

    #[test]
    fn one_low_probe_fails() {
        let mut peaks = vec![20.0; 10];
        peaks[2] = -40.0;
        let v = detect_propagation(&record(tracker_with(peaks, vec![None; 10])), 150.0, 0.95).unwrap();
        assert!(!v.propagated);
    }

    #[test]
    fn partial_domain_firing_fails() {
        let peaks: Vec<f64> = (0..10).map(|i| if i < 6 { 20.0 } else { -70.0 }).collect();
        let v = detect_propagation(&record(tracker_with(peaks, vec![None; 10])), 150.0, 0.95).unwrap();
        assert!(v.verdict_consistent());
        assert!(!v.propagated);
        assert!((v.depolarized_fraction - 0.6).abs() < 1e-12);
    }

    impl PropagationVerdict {
        fn verdict_consistent(&self) -> bool {
            !self.propagated || self.probe_peaks.iter().all(|&p| p > 0.0)
        }
    }

    #[test]
    fn tracker_start_must_match_onset() {
        let r = record(tracker_with(vec![20.0; 4], vec![None; 4]));
        assert!(matches!(detect_propagation(&r, 145.0, 0.95), Err(ProtocolError::MissingTrace(_))));
    }

    #[test]
    fn activation_at_pulse_end_is_break() {
        assert_eq!(classify_by_time(152.0, 152.0), Mechanism::Break);
        assert_eq!(classify_by_time(151.9, 152.0), Mechanism::Make);
        assert_eq!(classify_by_time(153.0, 152.0), Mechanism::Break);
    }

    #[test]
    fn classification_ignores_electrode_sites() {
        let t = tracker_with(vec![20.0; 4], vec![Some(150.5), Some(153.0), Some(154.0), None]);
        let r = record(t);
        assert_eq!(classify_excitation(&r, &[0], 150.0, 2.0).unwrap(), Mechanism::Break);
        assert_eq!(classify_excitation(&r, &[], 150.0, 2.0).unwrap(), Mechanism::Make);
        let silent = record(tracker_with(vec![-80.0; 2], vec![None; 2]));
        assert!(matches!(classify_excitation(&silent, &[], 150.0, 2.0), Err(ProtocolError::NoActivation(_))));
    }

    #[test]
    fn search_finds_step_threshold() {
        let s = bracket_threshold(1.0, 1.0, MAX_AMPLITUDE, |a| Ok(a >= 120.0)).unwrap();
        assert_eq!(s.threshold, 120.0);
        assert!(!s.non_monotone);
        assert!(s.trials.len() <= 16, "{}", s.trials.len());
    }

    #[test]
    fn search_from_above_walks_down() {
        let s = bracket_threshold(120.0, 1.0, MAX_AMPLITUDE, |a| Ok(a >= 37.0)).unwrap();
        assert_eq!(s.threshold, 37.0);
    }

    #[test]
    fn coarse_resolution_returns_grid_multiple() {
        let s = bracket_threshold(1.0, 4.0, MAX_AMPLITUDE, |a| Ok(a >= 118.5)).unwrap();
        assert_eq!(s.threshold, 120.0);
        assert_eq!(s.threshold % 4.0, 0.0);
    }

    #[test]
    fn unexcitable_is_reported() {
        let e = bracket_threshold(1.0, 1.0, MAX_AMPLITUDE, |_| Ok(false)).unwrap_err();
        assert_eq!(e, ProtocolError::Unexcitable { max: MAX_AMPLITUDE });
    }

    #[test]
    fn non_monotone_verdicts_are_flagged() {
        let m: BTreeMap<u64, bool> = [(10, false), (20, true), (30, false), (40, true)].into();
        assert!(is_non_monotone(&m));
        let m: BTreeMap<u64, bool> = [(10, false), (20, false), (30, true)].into();
        assert!(!is_non_monotone(&m));
    }

    #[test]
    fn normalization() {
        let mk = |interval, threshold| SiPoint {
            interval,
            threshold,
            mechanism: Mechanism::Make,
            first_activation: 0.0,
            trials: 0,
            non_monotone: false,
        };
        let curve = SiCurve { resting_threshold: 120.0, points: vec![mk(150.0, 124.0), mk(157.0, 120.0)] };
        let n = curve.normalize();
        assert!((n.points[0].1 - 124.0 / 120.0).abs() < 1e-15);
        assert_eq!(n.points[1].1, 1.0);
        let scaled = SiCurve {
            resting_threshold: 360.0,
            points: curve.points.iter().map(|p| SiPoint { threshold: 3.0 * p.threshold, ..p.clone() }).collect(),
        };
        assert_eq!(scaled.normalize().points, n.points);
    }

    #[test]
    fn transition_detection() {
        use Mechanism::*;
        let pts = [(147.0, Break), (148.0, Break), (149.0, Make), (150.0, Make)];
        assert_eq!(rrp_transition(&pts), Some(149.0));
        assert_eq!(rrp_transition(&[(150.0, Make), (151.0, Make)]), None);
        assert_eq!(rrp_transition(&[(150.0, Break)]), None);
    }

    #[test]
    fn default_intervals_span_refractory_range() {
        let i = S1S2Protocol::default_intervals();
        assert_eq!(i.len(), 16);
        assert_eq!((i[0], i[15]), (142.0, 157.0));
    }
}

//! Parsimonious rabbit ventricular action-potential model.
//!
//! Three state variables: membrane potential `V` (mV), sodium activation `m`
//! and sodium inactivation `h`. With `C` the membrane capacitance per area:
//!
//! ```text
//! dV/dt = -(I_Na + I_K) / C + I_stim
//! I_Na  = g_Na m^3 h (V - E_Na)
//! I_K   = g_K exp(-(V - E_K) / k_r) (V - E_K)
//! dm/dt = (m_inf(V) - m) / tau_m
//! dh/dt = (h_inf(V) - h) / tau_h(V)
//! m_inf = 1 / (1 + exp(-(V - E_m) / k_m))
//! h_inf = 1 / (1 + exp((V - E_h) / k_h))
//! tau_h = 2 tau_h0 exp(delta_h (V - E_h) / k_h) / (1 + exp((V - E_h) / k_h))
//! ```
//!
//! `tau_m` is constant. The stimulus is given per unit capacitance
//! (µA/µF = mV/ms) and is positive when depolarizing.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error("cell integration produced a non-finite state {0:?}")]
    Blowup(CellState),
    #[error("invalid cell parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
}

/// Model constants. Potentials in mV, conductances in mS/mm², times in ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub resting_potential: f64,
    pub sodium_conductance: f64,
    pub sodium_reversal: f64,
    pub potassium_reversal: f64,
    pub inactivation_midpoint: f64,
    pub activation_midpoint: f64,
    pub activation_slope: f64,
    pub rectification_slope: f64,
    pub inactivation_slope: f64,
    pub activation_time_constant: f64,
    pub inactivation_time_scale: f64,
    pub inactivation_asymmetry: f64,
    pub potassium_conductance: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        Self {
            resting_potential: -83.0,
            sodium_conductance: 0.11,
            sodium_reversal: 65.0,
            potassium_reversal: -83.0,
            inactivation_midpoint: -74.7,
            activation_midpoint: -41.0,
            activation_slope: 4.0,
            rectification_slope: 21.28,
            inactivation_slope: 4.4,
            activation_time_constant: 0.12,
            inactivation_time_scale: 6.80738,
            inactivation_asymmetry: 0.799163,
            potassium_conductance: 0.003,
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<(), CellError> {
        let positive = [
            ("sodium_conductance", self.sodium_conductance),
            ("potassium_conductance", self.potassium_conductance),
            ("activation_slope", self.activation_slope),
            ("rectification_slope", self.rectification_slope),
            ("inactivation_slope", self.inactivation_slope),
            ("activation_time_constant", self.activation_time_constant),
            ("inactivation_time_scale", self.inactivation_time_scale),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(CellError::InvalidParameter { name, value, reason: "must be positive" });
            }
        }
        let finite = [
            ("resting_potential", self.resting_potential),
            ("sodium_reversal", self.sodium_reversal),
            ("potassium_reversal", self.potassium_reversal),
            ("inactivation_midpoint", self.inactivation_midpoint),
            ("activation_midpoint", self.activation_midpoint),
            ("inactivation_asymmetry", self.inactivation_asymmetry),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(CellError::InvalidParameter { name, value, reason: "must be finite" });
            }
        }
        Ok(())
    }

    pub fn m_inf(&self, v: f64) -> f64 {
        1.0 / (1.0 + (-(v - self.activation_midpoint) / self.activation_slope).exp())
    }

    pub fn h_inf(&self, v: f64) -> f64 {
        1.0 / (1.0 + ((v - self.inactivation_midpoint) / self.inactivation_slope).exp())
    }

    pub fn tau_m(&self, _v: f64) -> f64 {
        self.activation_time_constant
    }

    pub fn tau_h(&self, v: f64) -> f64 {
        let x = (v - self.inactivation_midpoint) / self.inactivation_slope;
        2.0 * self.inactivation_time_scale * (self.inactivation_asymmetry * x).exp() / (1.0 + x.exp())
    }

    /// `(m_inf, h_inf, tau_h)` sharing the exponential of the inactivation
    /// argument between `h_inf` and `tau_h`.
    #[inline]
    fn gate_rates(&self, v: f64) -> (f64, f64, f64) {
        let x = (v - self.inactivation_midpoint) / self.inactivation_slope;
        let ex = x.exp();
        let h_inf = 1.0 / (1.0 + ex);
        let tau_h = 2.0 * self.inactivation_time_scale * (self.inactivation_asymmetry * x).exp() * h_inf;
        (self.m_inf(v), h_inf, tau_h)
    }

    pub fn sodium_current(&self, s: &CellState) -> f64 {
        self.sodium_conductance * s.m.powi(3) * s.h * (s.v - self.sodium_reversal)
    }

    pub fn potassium_current(&self, v: f64) -> f64 {
        let dv = v - self.potassium_reversal;
        self.potassium_conductance * (-dv / self.rectification_slope).exp() * dv
    }

    /// Total ionic current density (µA/mm²); positive repolarizes.
    pub fn ionic_current(&self, s: &CellState) -> f64 {
        self.sodium_current(s) + self.potassium_current(s.v)
    }

    /// Gates at their voltage-clamped fixed point.
    pub fn steady_state(&self, v: f64) -> CellState {
        CellState { v, m: self.m_inf(v), h: self.h_inf(v) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub v: f64,
    pub m: f64,
    pub h: f64,
}

impl CellState {
    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.m.is_finite() && self.h.is_finite()
    }
}

/// Gate integrator used inside one reaction substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateScheme {
    ForwardEuler,
    RushLarsen,
}

/// Parameters plus the membrane capacitance (µF/mm²) that scales the current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellModel {
    pub params: CellParams,
    pub capacitance: f64,
}

impl CellModel {
    pub fn new(params: CellParams, capacitance: f64) -> Self {
        Self { params, capacitance }
    }

    pub fn rest(&self) -> CellState {
        self.params.steady_state(self.params.resting_potential)
    }

    /// dV/dt (mV/ms) at `s` under stimulus `stim` (µA/µF).
    pub fn voltage_rate(&self, s: &CellState, stim: f64) -> f64 {
        -self.params.ionic_current(s) / self.capacitance + stim
    }

    /// One substep; returns the new state and the number of gate clamps
    /// applied (always 0 for Rush–Larsen).
    #[inline]
    pub fn substep(
        &self,
        s: CellState,
        stim: f64,
        dt: f64,
        scheme: GateScheme,
    ) -> Result<(CellState, u32), CellError> {
        if dt == 0.0 {
            return Ok((s, 0));
        }
        let p = &self.params;
        let v = s.v + dt * self.voltage_rate(&s, stim);
        let (m_inf, h_inf, tau_h) = p.gate_rates(s.v);
        let tau_m = p.tau_m(s.v);
        let mut clamps = 0;
        let (m, h) = match scheme {
            GateScheme::ForwardEuler => {
                let mut m = s.m + dt * (m_inf - s.m) / tau_m;
                let mut h = s.h + dt * (h_inf - s.h) / tau_h;
                for g in [&mut m, &mut h] {
                    if *g < 0.0 || *g > 1.0 {
                        *g = g.clamp(0.0, 1.0);
                        clamps += 1;
                    }
                }
                (m, h)
            }
            GateScheme::RushLarsen => (
                m_inf + (s.m - m_inf) * (-dt / tau_m).exp(),
                h_inf + (s.h - h_inf) * (-dt / tau_h).exp(),
            ),
        };
        let out = CellState { v, m, h };
        if !out.is_finite() {
            return Err(CellError::Blowup(out));
        }
        Ok((out, clamps))
    }

    pub fn reaction_substep_fe(&self, s: CellState, stim: f64, dt: f64) -> Result<CellState, CellError> {
        self.substep(s, stim, dt, GateScheme::ForwardEuler).map(|r| r.0)
    }

    pub fn reaction_substep_rl(&self, s: CellState, stim: f64, dt: f64) -> Result<CellState, CellError> {
        self.substep(s, stim, dt, GateScheme::RushLarsen).map(|r| r.0)
    }

    /// `substeps` equal substeps covering `dt`; returns the clamp count.
    pub fn integrate(
        &self,
        s: &mut CellState,
        stim: f64,
        dt: f64,
        substeps: usize,
        scheme: GateScheme,
    ) -> Result<u32, CellError> {
        let dt_sub = dt / substeps as f64;
        let mut clamps = 0;
        for _ in 0..substeps {
            let (next, c) = self.substep(*s, stim, dt_sub, scheme)?;
            *s = next;
            clamps += c;
        }
        Ok(clamps)
    }
}

impl Default for CellModel {
    fn default() -> Self {
        Self::new(CellParams::default(), 0.01)
    }
}

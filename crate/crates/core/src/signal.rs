// SPDX-License-Identifier: Apache-2.0
//! Signal strength of the emitted echo train and its bounds.

use std::fmt::Write as _;

use crate::cavity::EchoEnvelope;
use crate::error::{invalid, Result};
use crate::model::SystemParams;
use crate::scalar::Real;

/// Effective number of revivals `N_eff = ¼ + Σ_{n≥1} |Ḡ_n C̃(nτ)|²`.
pub fn n_eff(envelope: &EchoEnvelope) -> f64 {
    let mut sum = 0.25;
    for n in 1..=envelope.echoes() {
        let term = (envelope.weights[n] * envelope.values[n].norm()).powi(2);
        sum += term;
        if term < 1e-12 * sum {
            break;
        }
    }
    sum
}

/// Signal strength summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalReport {
    pub n_eff: f64,
    /// `[|⟨σ_x⟩₀|² π (gT2*)² (κ₂/κ) N_eff]^{1/2}` before clipping.
    pub raw: f64,
    /// Signal clipped at the bound `√(κ₂/κ)`.
    pub signal: f64,
    /// Set when the raw value exceeded the bound, signalling a regime violation.
    pub clipped: bool,
}

impl SignalReport {
    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_eff={:.16e}", self.n_eff);
        let _ = writeln!(out, "signal_raw={:.16e}", self.raw);
        let _ = writeln!(out, "signal={:.16e}", self.signal);
        let _ = writeln!(out, "clipped={}", self.clipped);
        out
    }
}

/// Signal strength `S` for an echo train.
pub fn signal_strength(params: &SystemParams<f64>, envelope: &EchoEnvelope, sigma_x0: f64) -> SignalReport {
    let ratio = params.kappa_out / params.kappa;
    let n = n_eff(envelope);
    let raw = (sigma_x0 * sigma_x0 * std::f64::consts::PI * (params.coupling * params.t2star).powi(2) * ratio * n).sqrt();
    let bound = ratio.sqrt();
    SignalReport { n_eff: n, raw, signal: raw.min(bound), clipped: raw > bound }
}

/// Closed-form bounds on the signal strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalBounds<T> {
    /// Hahn echo, `(√(5π)/2) g T2* √(κ₂/κ)`.
    pub hahn: T,
    /// Optimised CPMG, `(2√π/3) √((κ₂/κ)/(κτ))`.
    pub cpmg: T,
    /// Absolute bound `√(κ₂/κ)`.
    pub max: T,
}

/// Signal bounds for pulse spacing `tau`.
pub fn signal_bounds<T: Real>(params: &SystemParams<T>, tau: T) -> SignalBounds<T> {
    let ratio = params.kappa_out / params.kappa;
    let pi = T::PI();
    SignalBounds {
        hahn: (T::lit(5.0) * pi).sqrt() / T::lit(2.0) * params.coupling * params.t2star * ratio.sqrt(),
        cpmg: T::lit(2.0) * pi.sqrt() / T::lit(3.0) * (ratio / (params.kappa * tau)).sqrt(),
        max: ratio.sqrt(),
    }
}

/// Pulsed-coupling result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsedSignal<T> {
    pub n_eff: T,
    pub signal: T,
}

/// Signal when the coupling is switched on for `t_on` around each echo:
/// `N_eff = ¼ + Σ_{n≥1} [1 − (g t_on)²]ⁿ` and `S = [(g t_on)² (κ₂/κ) N_eff]^{1/2}`.
pub fn pulsed_coupling_signal<T: Real>(params: &SystemParams<T>, t_on: T) -> Result<PulsedSignal<T>> {
    let x = params.coupling * t_on;
    let x2 = x * x;
    if !(x2 > T::zero()) || x2 >= T::one() {
        return Err(invalid("t_on", "requires 0 < g·t_on < 1"));
    }
    let r = T::one() - x2;
    let n_eff = T::lit(0.25) + r / x2;
    let signal = (x2 * params.kappa_out / params.kappa * n_eff).sqrt();
    Ok(PulsedSignal { n_eff, signal })
}

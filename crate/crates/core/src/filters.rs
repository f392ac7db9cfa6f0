// SPDX-License-Identifier: Apache-2.0
//! Classical and quantum filter functions of a pulse sequence, and the
//! resulting attenuation, phase and echo envelope.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{balanced_integral, PulseSequence};
use crate::noise::{SpectralDensity, SpectralShape};
use crate::quad::{gauss_legendre, Tolerance};
use crate::scalar::Real;

fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}

/// `(1 − sinc x) / x²`, evaluated without cancellation near zero.
fn one_minus_sinc_over_sq<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-2) {
        let x2 = x * x;
        T::one() / T::lit(6.0) - x2 / T::lit(120.0) + x2 * x2 / T::lit(5040.0)
    } else {
        (T::one() - x.sin() / x) / (x * x)
    }
}

/// Real and imaginary parts of `∫₀ᵗ e^{iωt′} s(t′) dt′`.
pub fn sign_transform<T: Real>(seq: &PulseSequence<T>, t: T, omega: T) -> (T, T) {
    let half = T::lit(0.5);
    let mut re = T::zero();
    let mut im = T::zero();
    for (a, b, s) in seq.segments(t) {
        let len = b - a;
        let mid = half * (a + b);
        let amp = s * len * sinc(omega * len * half);
        re = re + amp * (omega * mid).cos();
        im = im + amp * (omega * mid).sin();
    }
    (re, im)
}

/// `F_c(ω, t)/ω² = ½|∫₀ᵗ e^{iωt′} s(t′) dt′|²`.
pub fn classical_filter_over_sq<T: Real>(seq: &PulseSequence<T>, t: T, omega: T) -> T {
    let (re, im) = sign_transform(seq, t, omega);
    T::lit(0.5) * (re * re + im * im)
}

/// Classical filter function `F_c(ω, t) = (ω²/2)|∫₀ᵗ e^{iωt′} s(t′) dt′|²`.
pub fn classical_filter<T: Real>(seq: &PulseSequence<T>, t: T, omega: T) -> T {
    omega * omega * classical_filter_over_sq(seq, t, omega)
}

/// `F_q(ω, t)/ω² = ω⁻¹ ∫₀ᵗ sin(ωt′) s(t′) dt′`, finite at `ω = 0`.
pub fn quantum_filter_over_sq<T: Real>(seq: &PulseSequence<T>, t: T, omega: T) -> T {
    let half = T::lit(0.5);
    seq.segments(t).into_iter().fold(T::zero(), |acc, (a, b, s)| {
        let len = b - a;
        let mid = half * (a + b);
        acc + s * mid * len * sinc(omega * mid) * sinc(omega * len * half)
    })
}

/// Quantum filter function `F_q(ω, t) = ω ∫₀ᵗ sin(ωt′) s(t′) dt′`.
pub fn quantum_filter<T: Real>(seq: &PulseSequence<T>, t: T, omega: T) -> T {
    omega * omega * quantum_filter_over_sq(seq, t, omega)
}

/// `∫₀ᵗ s(t′) (1 − cos ω₀t′)/ω₀ dt′`, the phase from a unit sine correlator.
pub fn sine_line_phase<T: Real>(seq: &PulseSequence<T>, t: T, omega0: T) -> T {
    let cum = |x: T| omega0 * x * x * x * one_minus_sinc_over_sq(omega0 * x);
    seq.segments(t)
        .into_iter()
        .fold(T::zero(), |acc, (a, b, s)| acc + s * (cum(b) - cum(a)))
}

fn require_echo(seq: &PulseSequence<f64>, t: f64) -> Result<()> {
    seq.check_order()?;
    let integral = balanced_integral(seq, t);
    if integral.abs() > 1e-9 * t.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NonEcho { t, integral });
    }
    Ok(())
}

fn tolerance() -> Tolerance {
    Tolerance { rel: 1e-11, abs: 1e-300, max_panels: 40_000 }
}

/// Classical attenuation `χ(t) = ∫ dω/2π F_c S_c / ω²` at an echo time.
pub fn chi(seq: &PulseSequence<f64>, t: f64, s: &SpectralDensity) -> Result<f64> {
    require_echo(seq, t)?;
    s.validate()?;
    let mut total = 0.0;
    for shape in &s.classical {
        total += match shape {
            SpectralShape::Lorentzian { variance, rate } => lorentzian_chi(seq, t, *variance, *rate),
            _ => shape.integrate_even(|w| classical_filter_over_sq(seq, t, w), t, tolerance())? / (2.0 * PI),
        };
    }
    for line in &s.classical_lines {
        total += line.weight * classical_filter_over_sq(seq, t, line.omega);
    }
    Ok(total)
}

/// Quantum phase `Φ_q(t) = ∫ dω/2π F_q S_q / ω²` at an echo time.
pub fn quantum_phase(seq: &PulseSequence<f64>, t: f64, s: &SpectralDensity) -> Result<f64> {
    require_echo(seq, t)?;
    s.validate()?;
    let mut total = 0.0;
    for shape in &s.quantum {
        total += shape.integrate_even(|w| quantum_filter_over_sq(seq, t, w), t, tolerance())? / (2.0 * PI);
    }
    for line in &s.quantum_lines {
        total += line.weight * quantum_filter_over_sq(seq, t, line.omega);
    }
    for line in &s.sine_lines {
        total += line.amplitude * sine_line_phase(seq, t, line.omega);
    }
    Ok(total)
}

/// `χ(t)` for the correlator `v e^{−γ|u|}`, exact over the piecewise-constant
/// sign function in a single pass over its segments.
fn lorentzian_chi(seq: &PulseSequence<f64>, t: f64, variance: f64, rate: f64) -> f64 {
    let g = rate;
    // `∫₀ᴸ e^{−γu} du` and `∫∫_{[0,L]²} e^{−γ|u−v|}`.
    let edge = |l: f64| if g * l < 1e-8 { l * (1.0 - 0.5 * g * l) } else { -(-g * l).exp_m1() / g };
    let square = |l: f64| {
        let x = g * l;
        if x < 1e-4 {
            l * l * (1.0 - x / 3.0 + x * x / 12.0)
        } else {
            2.0 * (x + (-x).exp_m1()) / (g * g)
        }
    };
    let mut diagonal = 0.0;
    let mut cross = 0.0;
    // Running `Σ_{i<j} s_i ∫_{seg i} e^{−γ(a_j − t₁)} dt₁`.
    let mut tail = 0.0;
    let mut last_end = 0.0;
    for (a, b, s) in seq.segments(t) {
        let l = b - a;
        tail *= (-g * (a - last_end)).exp();
        diagonal += square(l);
        cross += s * tail * edge(l);
        tail = tail * (-g * l).exp() + s * edge(l);
        last_end = b;
    }
    0.5 * variance * (diagonal + 2.0 * cross)
}

/// Echo envelope `C̃₀(t) = e^{−γ_φ t − iΦ_q − χ}` without cavity backaction.
pub fn envelope_c0(seq: &PulseSequence<f64>, t: f64, s: &SpectralDensity, dephasing: f64) -> Result<Complex64> {
    let chi = chi(seq, t, s)?;
    let phi = quantum_phase(seq, t, s)?;
    Ok(Complex64::from_polar((-dephasing * t - chi).exp(), -phi))
}

fn segment_nodes(seq: &PulseSequence<f64>, t: f64, order: usize) -> Vec<(f64, f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let mut out = Vec::new();
    for (a, b, s) in seq.segments(t) {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        for (xi, wi) in x.iter().zip(&w) {
            out.push((c + h * xi, h * wi, s));
        }
    }
    out
}

/// Attenuation from the classical correlator in the time domain,
/// `½ ∫∫ s(t₁) s(t₂) c(t₁ − t₂) dt₁ dt₂`, by Gauss–Legendre on each segment.
pub fn chi_time_domain<C: Fn(f64) -> f64>(seq: &PulseSequence<f64>, t: f64, correlator: C, order: usize) -> f64 {
    let nodes = segment_nodes(seq, t, order);
    let mut acc = 0.0;
    for &(t1, w1, s1) in &nodes {
        for &(t2, w2, s2) in &nodes {
            acc += w1 * w2 * s1 * s2 * correlator(t1 - t2);
        }
    }
    0.5 * acc
}

/// Quantum phase in the time domain, `∫₀ᵗ s(t′) Q(t′) dt′`, where `Q` is the
/// running integral of the quantum correlator.
pub fn quantum_phase_time_domain<Q: Fn(f64) -> f64>(seq: &PulseSequence<f64>, t: f64, big_q: Q, order: usize) -> f64 {
    segment_nodes(seq, t, order)
        .into_iter()
        .map(|(x, w, s)| w * s * big_q(x))
        .sum()
}

// SPDX-License-Identifier: Apache-2.0
//! Qubit coupled to a single nuclear spin-½: echo envelope modulation,
//! exact conditional propagation, noise spectra and cavity transmission.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::{PulseSequence, SystemParams};
use crate::noise::{gaussian_average_adaptive, DeltaLine, SineLine, SpectralDensity};
use crate::quad::Tolerance;
use crate::scalar::Real;

/// Nuclear-spin environment: hyperfine coupling `A` and the nuclear Zeeman
/// terms `γB_x`, `γB_z`, all as angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuclearSpinEnv<T> {
    pub hyperfine: T,
    pub field_x: T,
    pub field_z: T,
}

impl<T: Real> NuclearSpinEnv<T> {
    /// Precession vector `Ω_± = (γB_x, 0, γB_z ± A/2)` of the nuclear spin
    /// while the qubit is excited (`+`) or in its ground state (`−`).
    pub fn precession(&self, excited: bool) -> [T; 3] {
        let half = self.hyperfine * T::lit(0.5);
        let z = if excited { self.field_z + half } else { self.field_z - half };
        [self.field_x, T::zero(), z]
    }
}

fn norm3<T: Real>(v: [T; 3]) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Nuclear precession frequencies `(ω₊, ω₋) = (|Ω₊|, |Ω₋|)`.
pub fn spin_frequencies<T: Real>(env: &NuclearSpinEnv<T>) -> (T, T) {
    (norm3(env.precession(true)), norm3(env.precession(false)))
}

/// `sin²Δφ`, with `Δφ` the angle between `Ω₊` and `Ω₋`.
pub fn mixing<T: Real>(env: &NuclearSpinEnv<T>) -> T {
    let a = env.precession(true);
    let b = env.precession(false);
    let (wp, wm) = spin_frequencies(env);
    if wp == T::zero() || wm == T::zero() {
        return T::zero();
    }
    let c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (wp * wm);
    let s2 = T::one() - c * c;
    if s2 < T::zero() {
        T::zero()
    } else {
        s2
    }
}

/// Hahn-echo envelope for an unpolarised spin,
/// `e^{−γ_φτ} [1 − 2 sin²Δφ sin²(ω₊τ/4) sin²(ω₋τ/4)]`.
pub fn eseem_envelope<T: Real>(tau: T, env: &NuclearSpinEnv<T>, dephasing: T) -> T {
    let (wp, wm) = spin_frequencies(env);
    let q = T::lit(0.25) * tau;
    let sp = (wp * q).sin();
    let sm = (wm * q).sin();
    (-dephasing * tau).exp() * (T::one() - T::lit(2.0) * mixing(env) * sp * sp * sm * sm)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `exp(−i Ω·I t)` for a spin-½.
fn precession_propagator(omega: [f64; 3], t: f64) -> Matrix2<Complex64> {
    let w = norm3(omega);
    let (cs, sn) = ((0.5 * w * t).cos(), (0.5 * w * t).sin());
    if w == 0.0 {
        return Matrix2::identity();
    }
    let (nx, ny, nz) = (omega[0] / w, omega[1] / w, omega[2] / w);
    let mi = Complex64::new(0.0, -sn);
    Matrix2::new(
        c(cs) + mi * nz,
        mi * Complex64::new(nx, -ny),
        mi * Complex64::new(nx, ny),
        c(cs) - mi * nz,
    )
}

/// Polarisation axis `n̂ = Ω₋/|Ω₋|` of the initial nuclear state.
pub fn polarization_axis(env: &NuclearSpinEnv<f64>) -> [f64; 3] {
    let o = env.precession(false);
    let w = norm3(o);
    if w == 0.0 {
        [0.0, 0.0, 1.0]
    } else {
        [o[0] / w, o[1] / w, o[2] / w]
    }
}

fn initial_state(env: &NuclearSpinEnv<f64>, polarization: f64) -> Matrix2<Complex64> {
    let n = polarization_axis(env);
    let h = 0.5 * polarization;
    Matrix2::new(
        c(0.5 + h * n[2]),
        Complex64::new(h * n[0], -h * n[1]),
        Complex64::new(h * n[0], h * n[1]),
        c(0.5 - h * n[2]),
    )
}

/// Exact echo envelope `e^{−γ_φ t} Tr{U₋† U₊ ρ̄_E}` for any pulse sequence,
/// where `U_±` propagate the spin along the two qubit branches.
pub fn exact_envelope(
    seq: &PulseSequence<f64>,
    t: f64,
    env: &NuclearSpinEnv<f64>,
    polarization: f64,
    dephasing: f64,
) -> Result<Complex64> {
    seq.check_order()?;
    if !(-1.0..=1.0).contains(&polarization) {
        return Err(invalid("polarization", "must lie in [-1, 1]"));
    }
    let mut up = Matrix2::<Complex64>::identity();
    let mut um = Matrix2::<Complex64>::identity();
    for (a, b, s) in seq.segments(t) {
        let excited = s > 0.0;
        up = precession_propagator(env.precession(excited), b - a) * up;
        um = precession_propagator(env.precession(!excited), b - a) * um;
    }
    let rho = initial_state(env, polarization);
    Ok((um.adjoint() * up * rho).trace() * (-dephasing * t).exp())
}

/// Hahn-echo special case of [`exact_envelope`].
pub fn exact_hahn_envelope(tau: f64, env: &NuclearSpinEnv<f64>, polarization: f64, dephasing: f64) -> Result<Complex64> {
    exact_envelope(&PulseSequence::Hahn { tau }, tau, env, polarization, dephasing)
}

/// Noise spectrum generated by the spin through `h = A I_z`: static and
/// precession lines in the classical part and a principal-value line in the
/// quantum part.
pub fn spin_spectral_density(env: &NuclearSpinEnv<f64>, polarization: f64) -> SpectralDensity {
    let n = polarization_axis(env);
    let w = norm3(env.precession(false));
    let a2 = env.hyperfine * env.hyperfine;
    let nz2 = n[2] * n[2];
    SpectralDensity {
        classical_lines: vec![
            DeltaLine { omega: 0.0, weight: 0.25 * a2 * nz2 },
            DeltaLine { omega: w, weight: 0.25 * a2 * (1.0 - nz2) },
        ],
        sine_lines: vec![SineLine { omega: w, amplitude: 0.25 * a2 * polarization * (1.0 - nz2) }],
        ..SpectralDensity::default()
    }
}

/// Qubit transitions `(strength, offset)` entering the susceptibility:
/// strength `(p_{en} − p_{gm}) |⟨g,m|e,n⟩|²` and offset `ε_{gm} − ε_{en}`.
pub fn transitions(env: &NuclearSpinEnv<f64>, polarization: f64) -> Vec<(f64, f64)> {
    let eig = |excited: bool| {
        let o = env.precession(excited);
        let w = norm3(o);
        let theta = o[0].atan2(o[2]);
        let (ch, sh) = ((0.5 * theta).cos(), (0.5 * theta).sin());
        [(0.5 * w, [ch, sh]), (-0.5 * w, [-sh, ch])]
    };
    let ground = eig(false);
    let excited = eig(true);
    let pops = [0.5 * (1.0 + polarization), 0.5 * (1.0 - polarization)];
    let mut out = Vec::with_capacity(4);
    for (m, (eg, vg)) in ground.iter().enumerate() {
        for (ee, ve) in excited.iter() {
            let overlap = (vg[0] * ve[0] + vg[1] * ve[1]).powi(2);
            out.push((-pops[m] * overlap, eg - ee));
        }
    }
    out
}

/// Qubit susceptibility at fixed static detuning `η`,
/// `χ_η(ω) = i Σ (p_{en} − p_{gm}) |⟨g,m|e,n⟩|² / [i(Δ − ω + η − (ε_{gm} − ε_{en})) + γ_φ]`.
pub fn qubit_susceptibility(
    omega: f64,
    eta: f64,
    env: &NuclearSpinEnv<f64>,
    polarization: f64,
    params: &SystemParams<f64>,
) -> Complex64 {
    susceptibility_from(&transitions(env, polarization), params.qubit_splitting - omega, eta, params.dephasing)
}

fn susceptibility_from(lines: &[(f64, f64)], splitting_offset: f64, eta: f64, dephasing: f64) -> Complex64 {
    lines
        .iter()
        .map(|&(strength, offset)| {
            Complex64::new(0.0, strength) / Complex64::new(dephasing, splitting_offset + eta - offset)
        })
        .sum()
}

/// Cavity transmission
/// `A_T(ω) = ⟨⟨−√(κ₁κ₂) / [i(ω_c − ω) + ig²χ_η(ω) + κ/2]⟩⟩`.
pub fn transmission(omega: f64, env: &NuclearSpinEnv<f64>, polarization: f64, params: &SystemParams<f64>) -> Result<Complex64> {
    transmission_with(&transitions(env, polarization), omega, params)
}

fn transmission_with(lines: &[(f64, f64)], omega: f64, params: &SystemParams<f64>) -> Result<Complex64> {
    let offset = params.qubit_splitting - omega;
    let cavity = params.cavity_freq() - omega;
    let g2 = params.coupling * params.coupling;
    let num = -(params.kappa_in * params.kappa_out).sqrt();
    let breaks: Vec<f64> = lines.iter().map(|&(_, d)| d - offset).collect();
    gaussian_average_adaptive(
        params.t2star,
        |eta| {
            let chi = susceptibility_from(lines, offset, eta, params.dephasing);
            num / (Complex64::new(0.5 * params.kappa, cavity) + Complex64::new(0.0, g2) * chi)
        },
        &breaks,
        Tolerance { rel: 1e-9, abs: 1e-14, max_panels: 20_000 },
    )
}

/// Transmission sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionSpectrum {
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl TransmissionSpectrum {
    /// Number of resolved features: one plus the number of interior local
    /// minima of `|A_T|` lying below 95 % of its maximum.
    pub fn feature_count(&self) -> usize {
        let mag: Vec<f64> = self.values.iter().map(|v| v.norm()).collect();
        let max = mag.iter().cloned().fold(0.0, f64::max);
        1 + mag
            .windows(3)
            .filter(|w| w[1] < w[0] && w[1] <= w[2] && w[1] < 0.95 * max)
            .count()
    }

    /// CSV with columns `omega,re,im,abs`.
    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out.push_str("omega,re,im,abs\n");
        for (w, v) in self.omega.iter().zip(&self.values) {
            let _ = writeln!(out, "{w:.16e},{:.16e},{:.16e},{:.16e}", v.re, v.im, v.norm());
        }
        out
    }
}

/// Default grid `ω_c ± (4/T2* + 3|A|)`.
pub fn default_transmission_grid(env: &NuclearSpinEnv<f64>, params: &SystemParams<f64>, points: usize) -> Vec<f64> {
    let half = 4.0 / params.t2star + 3.0 * env.hyperfine.abs();
    let wc = params.cavity_freq();
    crate::backaction::uniform_grid(wc - half, wc + half, points)
}

/// Transmission over a frequency grid, evaluated in parallel.
pub fn transmission_spectrum(
    omega: &[f64],
    env: &NuclearSpinEnv<f64>,
    polarization: f64,
    params: &SystemParams<f64>,
) -> Result<TransmissionSpectrum> {
    let lines = transitions(env, polarization);
    let values = omega
        .par_iter()
        .map(|&w| transmission_with(&lines, w, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransmissionSpectrum { omega: omega.to_vec(), values })
}

/// Angular frequency from a cyclic frequency.
pub fn angular(cyclic: f64) -> f64 {
    2.0 * PI * cyclic
}

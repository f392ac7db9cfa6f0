// SPDX-License-Identifier: Apache-2.0
//! Cavity response: susceptibility, fields radiated by the qubit coherence,
//! revival wavepackets, spectral peaks and inversion of the echo envelope.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::backaction::{revival_shape, uniform_grid, BackactionMode, RevivalShape};
use crate::error::{invalid, Error, Result};
use crate::model::SystemParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Echo amplitudes `C̃(nτ)` and revival weights `Ḡ_n` for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoEnvelope {
    pub tau: f64,
    pub qubit_splitting: f64,
    pub values: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl EchoEnvelope {
    /// Number of echoes `N`.
    pub fn echoes(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Reduced splitting `δ_Δ = Δ mod 2π/τ`, in `[0, 2π/τ)`.
    pub fn reduced_splitting(&self) -> f64 {
        self.qubit_splitting.rem_euclid(2.0 * PI / self.tau)
    }

    /// `e^{iΔnτ}`, evaluated through the reduced splitting.
    pub fn splitting_phase(&self, n: usize) -> Complex64 {
        let phase = (self.reduced_splitting() * self.tau).rem_euclid(2.0 * PI) * n as f64;
        Complex64::from_polar(1.0, phase.rem_euclid(2.0 * PI))
    }

    /// Revival amplitude `Ḡ_n 𝒦ⁿ C̃(nτ)`, conjugated for odd `n`.
    pub fn revival_amplitude(&self, n: usize) -> Complex64 {
        let v = if n % 2 == 1 { self.values[n].conj() } else { self.values[n] };
        v * self.weights[n]
    }
}

/// Whether a trace is sampled in time or in frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Time,
    Frequency,
}

/// Reference frame of a field trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Rotating at the qubit splitting `Δ`.
    Rotating,
    Lab,
}

/// Complex field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrace {
    pub domain: Domain,
    pub frame: Frame,
    pub grid: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl FieldTrace {
    /// Time-domain trace in the rotating frame.
    pub fn rotating(grid: Vec<f64>, values: Vec<Complex64>) -> Self {
        Self { domain: Domain::Time, frame: Frame::Rotating, grid, values }
    }

    /// Converts a time-domain trace to the lab frame, multiplying by `e^{−iΔt}`.
    pub fn to_lab(&self, qubit_splitting: f64) -> Result<FieldTrace> {
        self.shift_frame(Frame::Lab, -qubit_splitting)
    }

    /// Converts a time-domain trace to the rotating frame, multiplying by `e^{iΔt}`.
    pub fn to_rotating(&self, qubit_splitting: f64) -> Result<FieldTrace> {
        self.shift_frame(Frame::Rotating, qubit_splitting)
    }

    fn shift_frame(&self, target: Frame, rate: f64) -> Result<FieldTrace> {
        if self.domain != Domain::Time {
            return Err(Error::Unsupported("frame changes are defined for time-domain traces".into()));
        }
        if self.frame == target {
            return Ok(self.clone());
        }
        let values = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| v * Complex64::from_polar(1.0, (rate * t).rem_euclid(2.0 * PI)))
            .collect();
        Ok(FieldTrace { domain: self.domain, frame: target, grid: self.grid.clone(), values })
    }

    /// CSV with `#` metadata lines, one header line and 17 significant digits.
    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "# frame = {}", if self.frame == Frame::Lab { "lab" } else { "rotating" });
        let axis = if self.domain == Domain::Time { "t" } else { "omega" };
        let _ = writeln!(out, "{axis},re,im");
        for (x, v) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{x:.16e},{:.16e},{:.16e}", v.re, v.im);
        }
        out
    }

    /// Parses the CSV produced by [`FieldTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<FieldTrace> {
        let mut frame = Frame::Rotating;
        let mut domain = None;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if meta.trim() == "frame = lab" {
                    frame = Frame::Lab;
                }
                continue;
            }
            if domain.is_none() {
                domain = Some(match line {
                    "t,re,im" => Domain::Time,
                    "omega,re,im" => Domain::Frequency,
                    _ => return Err(Error::Parse { line: i + 1, message: format!("unexpected header `{line}`") }),
                });
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            if cols.len() != 3 {
                return Err(Error::Parse { line: i + 1, message: "expected three columns".into() });
            }
            grid.push(cols[0]);
            values.push(Complex64::new(cols[1], cols[2]));
        }
        let domain = domain.ok_or(Error::Parse { line: 0, message: "missing header".into() })?;
        Ok(FieldTrace { domain, frame, grid, values })
    }
}

/// Cavity response `χ_c(t) = e^{−iδt − κt/2} Θ(t)` (rotating frame).
pub fn susceptibility_time(t: f64, params: &SystemParams<f64>) -> Complex64 {
    if t < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar((-0.5 * params.kappa * t).exp(), -params.detuning * t)
}

/// Cavity response `χ_c(ω) = 1 / [i(δ − ω) + κ/2]`.
pub fn susceptibility_freq(omega: f64, params: &SystemParams<f64>) -> Complex64 {
    1.0 / Complex64::new(0.5 * params.kappa, params.detuning - omega)
}

/// Weights `(φ₁, φ₂)` for the exact response to a linear ramp over one step:
/// `∫₀ʰ e^{−λ(h−s)} (c₀ + (c₁ − c₀) s/h) ds = c₀φ₁ + (c₁ − c₀)φ₂`.
fn ramp_weights(lambda: Complex64, h: f64) -> (Complex64, Complex64) {
    let z = lambda * h;
    if z.norm() < 1e-3 {
        let phi1 = h * (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0);
        let phi2 = h * (0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0);
        (phi1, phi2)
    } else {
        let e = (-z).exp();
        let phi1 = (1.0 - e) / lambda;
        let phi2 = (1.0 - phi1 / h) / lambda;
        (phi1, phi2)
    }
}

/// Drives the cavity with a piecewise-linear coherence and returns
/// `−ig ∫ χ_c(t − t′) c(t′) dt′` at the requested times; the cavity is empty
/// before the first sample and the coherence vanishes after the last.
fn drive_cavity(grid: &[f64], coherence: &[Complex64], params: &SystemParams<f64>, at: &[f64]) -> Vec<Complex64> {
    let lambda = Complex64::new(0.5 * params.kappa, params.detuning);
    let drive = -I * params.coupling;
    let mut out = Vec::with_capacity(at.len());
    let mut state = Complex64::new(0.0, 0.0);
    let mut k = 0;
    for &t in at {
        if t < grid[0] {
            out.push(Complex64::new(0.0, 0.0));
            continue;
        }
        while k + 1 < grid.len() && grid[k + 1] <= t {
            let h = grid[k + 1] - grid[k];
            let (p1, p2) = ramp_weights(lambda, h);
            state = state * (-lambda * h).exp() + drive * (coherence[k] * p1 + (coherence[k + 1] - coherence[k]) * p2);
            k += 1;
        }
        let s = t - grid[k];
        if k + 1 < grid.len() && s > 0.0 {
            let h = grid[k + 1] - grid[k];
            let c_at = coherence[k] + (coherence[k + 1] - coherence[k]) * (s / h);
            let (p1, p2) = ramp_weights(lambda, s);
            out.push(state * (-lambda * s).exp() + drive * (coherence[k] * p1 + (c_at - coherence[k]) * p2));
        } else {
            out.push(state * (-lambda * s).exp());
        }
    }
    out
}

/// Cavity field `⟨ã⟩_t = −ig (χ_c ⋆ C)(t)` driven by a uniformly sampled
/// rotating-frame coherence trace.
pub fn field_from_coherence(coherence: &FieldTrace, params: &SystemParams<f64>) -> Result<FieldTrace> {
    if coherence.domain != Domain::Time || coherence.frame != Frame::Rotating {
        return Err(invalid("coherence", "expected a rotating-frame time-domain trace"));
    }
    if coherence.grid.len() < 2 || coherence.grid.len() != coherence.values.len() {
        return Err(invalid("coherence", "trace needs at least two samples"));
    }
    let h = coherence.grid[1] - coherence.grid[0];
    let uniform = coherence
        .grid
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    if !(h > 0.0) || !uniform {
        return Err(invalid("coherence", "time grid must be uniform and increasing"));
    }
    let rate = params.kappa + params.detuning.abs();
    if rate * h > 0.5 {
        return Err(Error::Undersampled(format!(
            "time step {h:e} is coarse compared with the cavity response time {:e}",
            1.0 / rate
        )));
    }
    let values = drive_cavity(&coherence.grid, &coherence.values, params, &coherence.grid);
    Ok(FieldTrace::rotating(coherence.grid.clone(), values))
}

/// Evaluation of the revival wavepackets `f_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavepacketForm {
    /// `f_n(t) ≈ −i√π g T2* Ḡ_n χ_c(t)`.
    Simplified,
    /// Convolution of `χ_c` with the sampled revival shape `G_n`.
    Exact,
}

/// Simplified wavepacket `−i√π g T2* Ḡ_n χ_c(t)`.
pub fn wavepacket_simplified(weight: f64, t: f64, params: &SystemParams<f64>) -> Complex64 {
    -I * (PI.sqrt() * params.coupling * params.t2star * weight) * susceptibility_time(t, params)
}

/// Exact wavepacket `−ig ∫ χ_c(t − t′) G_n(t′) dt′` from a sampled shape
/// covering the support of `G_n`.
pub fn wavepacket_exact(shape: &RevivalShape, times: &[f64], params: &SystemParams<f64>) -> Vec<Complex64> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let vals = drive_cavity(&shape.t, &shape.values, params, &sorted);
    let mut out = vec![Complex64::new(0.0, 0.0); times.len()];
    for (slot, v) in order.into_iter().zip(vals) {
        out[slot] = v;
    }
    out
}

/// Sampling window for an exact revival: fine steps across `±6T2*` and
/// coarser steps out to `10/κ` beyond, where the Purcell hole still
/// contributes; one sided for the free-induction decay.
fn revival_window(one_sided: bool, params: &SystemParams<f64>) -> Vec<f64> {
    let core = 6.0 * params.t2star;
    let reach = core + 10.0 / params.kappa;
    let coarse = 0.02 / params.kappa;
    let mut right = uniform_grid(0.0, core, 601);
    let extra = ((reach - core) / coarse).ceil().max(1.0) as usize;
    right.extend(uniform_grid(core, reach, extra + 1).into_iter().skip(1));
    if one_sided {
        return right;
    }
    let mut grid: Vec<f64> = right.iter().rev().map(|t| -t).collect();
    grid.extend(right.into_iter().skip(1));
    grid
}

/// Time-domain train of revival wavepackets,
/// `½⟨σ_x⟩₀ [½ f₀(t) + Σ_{n≥1} f_n(t − nτ) e^{iΔnτ} 𝒦ⁿ C̃(nτ)]`.
///
/// The exact form drives the cavity with the one-sided decay `G₀(t)`,
/// `t ≥ 0`, in place of the factor ½ on the free-induction packet.
pub fn revival_train(
    envelope: &EchoEnvelope,
    params: &SystemParams<f64>,
    sigma_x0: f64,
    times: &[f64],
    form: WavepacketForm,
) -> Result<FieldTrace> {
    let mut values = vec![Complex64::new(0.0, 0.0); times.len()];
    for n in 0..=envelope.echoes() {
        let amp = if n == 0 {
            match form {
                WavepacketForm::Simplified => 0.5 * envelope.values[0],
                WavepacketForm::Exact => envelope.values[0],
            }
        } else {
            let v = if n % 2 == 1 { envelope.values[n].conj() } else { envelope.values[n] };
            v * envelope.splitting_phase(n)
        };
        let t0 = n as f64 * envelope.tau;
        let shifted: Vec<f64> = times.iter().map(|&t| t - t0).collect();
        let packet: Vec<Complex64> = match form {
            WavepacketForm::Simplified => shifted
                .iter()
                .map(|&t| wavepacket_simplified(envelope.weights[n], t, params))
                .collect(),
            WavepacketForm::Exact => {
                let grid = revival_window(n == 0, params);
                let shape = revival_shape(n, envelope.tau, &grid, params, BackactionMode::Exact)?;
                wavepacket_exact(&shape, &shifted, params)
            }
        };
        for (v, p) in values.iter_mut().zip(packet) {
            *v += 0.5 * sigma_x0 * amp * p;
        }
    }
    Ok(FieldTrace::rotating(times.to_vec(), values))
}

/// Discrete Fourier transform of the revival amplitudes,
/// `C̃_{N,τ}(ω) = Σ_n e^{inωτ} [e^{inδ_Δτ} Ḡ_n 𝒦ⁿ C̃(nτ)]`.
pub fn dft_envelope(envelope: &EchoEnvelope, omega: f64) -> Complex64 {
    (0..=envelope.echoes())
        .map(|n| {
            let phase = (omega * envelope.tau * n as f64).rem_euclid(2.0 * PI);
            Complex64::from_polar(1.0, phase) * envelope.splitting_phase(n) * envelope.revival_amplitude(n)
        })
        .sum()
}

/// Steady-state field spectrum
/// `−i(⟨σ_x⟩₀/2)√π g T2* χ_c(ω) [C̃_{N,τ}(ω) − ½ Ḡ₀C̃(0)]`.
pub fn field_spectrum(omega: f64, envelope: &EchoEnvelope, params: &SystemParams<f64>, sigma_x0: f64) -> Complex64 {
    let offset = 0.5 * envelope.revival_amplitude(0);
    -I * (0.5 * sigma_x0 * PI.sqrt() * params.coupling * params.t2star)
        * susceptibility_freq(omega, params)
        * (dft_envelope(envelope, omega) - offset)
}

/// Field spectrum at the cavity frequency, `ω = δ`.
pub fn field_spectrum_peak(envelope: &EchoEnvelope, params: &SystemParams<f64>, sigma_x0: f64) -> Complex64 {
    field_spectrum(params.detuning, envelope, params, sigma_x0)
}

/// Result of inverting a detuning sweep of spectral peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    /// Recovered `C̃(nτ)`, `None` where `Ḡ_n` is below threshold.
    pub values: Vec<Option<Complex64>>,
}

/// Recovers `C̃(nτ)` from spectral peaks measured at equally spaced
/// detunings `δ_j = δ₀ + 2πj/(Mτ)`, `j = 0..M`, with `M ≥ N + 1`.
pub fn invert_dft(
    detunings: &[f64],
    peaks: &[Complex64],
    params: &SystemParams<f64>,
    tau: f64,
    weights: &[f64],
    sigma_x0: f64,
    threshold: f64,
) -> Result<Inversion> {
    let m = detunings.len();
    let n_max = weights.len().saturating_sub(1);
    if peaks.len() != m || m < n_max + 1 || weights.is_empty() {
        return Err(invalid("detunings", format!("need at least {} sweep points matching the peaks", n_max + 1)));
    }
    let step = 2.0 * PI / (m as f64 * tau);
    let spaced = detunings
        .iter()
        .enumerate()
        .all(|(j, &d)| (d - detunings[0] - step * j as f64).abs() <= 1e-9 * (step * m as f64));
    if !spaced {
        return Err(invalid("detunings", "sweep must be equally spaced over one period 2π/τ"));
    }
    let scale = -I * (0.5 * sigma_x0 * PI.sqrt() * params.coupling * params.t2star * 2.0 / params.kappa);
    if scale.norm() == 0.0 {
        return Err(invalid("coupling", "a vanishing prefactor cannot be inverted"));
    }
    let mut buf: Vec<Complex64> = peaks.iter().map(|&p| p / scale + 0.5 * weights[0]).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let reduced = EchoEnvelope {
        tau,
        qubit_splitting: params.qubit_splitting,
        values: Vec::new(),
        weights: Vec::new(),
    };
    let values = (0..=n_max)
        .map(|n| {
            if weights[n] < threshold {
                return None;
            }
            let shift = Complex64::from_polar(1.0, -(detunings[0] * tau * n as f64).rem_euclid(2.0 * PI));
            let b = buf[n] / m as f64 * shift;
            let v = b * reduced.splitting_phase(n).conj() / weights[n];
            Some(if n % 2 == 1 { v.conj() } else { v })
        })
        .collect();
    Ok(Inversion { values })
}

/// Output-port field `r_out,2(t) = −i√κ₂ e^{−iΔt} ⟨ã⟩_t` in the lab frame.
pub fn output_field(field: &FieldTrace, params: &SystemParams<f64>) -> Result<FieldTrace> {
    let lab = field.to_lab(params.qubit_splitting)?;
    let factor = -I * params.kappa_out.sqrt();
    Ok(FieldTrace { values: lab.values.iter().map(|&v| factor * v).collect(), ..lab })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> SystemParams<f64> {
        SystemParams::weak_coupling_reference()
    }

    #[test]
    fn susceptibility_transform_pair() {
        let p = SystemParams { detuning: 0.7, ..reference() };
        for &w in &[-1.0, 0.0, 0.7, 2.5] {
            let h = 1e-3;
            let mut acc = Complex64::new(0.0, 0.0);
            let n = 40_000;
            for k in 0..=n {
                let t = k as f64 * h;
                let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
                acc += susceptibility_time(t, &p) * Complex64::from_polar(1.0, w * t) * (wgt * h);
            }
            assert!((acc - susceptibility_freq(w, &p)).norm() < 1e-6);
        }
    }

    #[test]
    fn ramp_response_matches_closed_form() {
        let p = SystemParams { detuning: 0.3, ..reference() };
        let grid = uniform_grid(0.0, 5.0, 501);
        let coh = FieldTrace::rotating(grid.clone(), vec![Complex64::new(1.0, 0.0); grid.len()]);
        let field = field_from_coherence(&coh, &p).unwrap();
        let lambda = Complex64::new(0.5 * p.kappa, p.detuning);
        for (t, v) in grid.iter().zip(&field.values) {
            let expect = -I * p.coupling * (1.0 - (-lambda * *t).exp()) / lambda;
            assert!((v - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn undersampled_coherence_rejected() {
        let p = reference();
        let grid = uniform_grid(0.0, 10.0, 5);
        let coh = FieldTrace::rotating(grid.clone(), vec![Complex64::new(1.0, 0.0); 5]);
        assert!(matches!(field_from_coherence(&coh, &p), Err(Error::Undersampled(_))));
    }

    #[test]
    fn exact_and_simplified_fid_packets_agree() {
        let p = reference();
        let grid = uniform_grid(-6.0 * p.t2star, 6.0 * p.t2star, 1201);
        let shape = revival_shape(0, 10.0, &grid, &p, BackactionMode::Exact).unwrap();
        let times: Vec<f64> = (0..50).map(|k| 3.0 * p.t2star + 0.1 * k as f64).collect();
        let exact = wavepacket_exact(&shape, &times, &p);
        for (t, e) in times.iter().zip(exact) {
            let s = wavepacket_simplified(shape.weight, *t, &p);
            assert!((e - s).norm() <= 0.05 * s.norm(), "t={t}: {e} vs {s}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let trace = FieldTrace::rotating(vec![0.0, 0.5], vec![Complex64::new(1.0 / 3.0, -2.0), Complex64::new(0.0, 1e-300)]);
        let csv = trace.to_csv(&[("kind".into(), "test".into())]);
        assert_eq!(FieldTrace::from_csv(&csv).unwrap(), trace);
    }

    #[test]
    fn frame_round_trip() {
        let trace = FieldTrace::rotating(vec![0.0, 0.25, 1.0], vec![Complex64::new(1.0, 0.5); 3]);
        let back = trace.to_lab(12.5).unwrap().to_rotating(12.5).unwrap();
        for (a, b) in back.values.iter().zip(&trace.values) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn inversion_recovers_synthetic_envelope() {
        let p = SystemParams { qubit_splitting: 123.4, ..reference() };
        let tau = 10.0;
        let n = 6;
        let values: Vec<Complex64> = (0..=n)
            .map(|k| if k == 0 { Complex64::new(1.0, 0.0) } else { Complex64::from_polar(0.9f64.powi(k), 0.3 * k as f64) })
            .collect();
        let weights: Vec<f64> = (0..=n).map(|k| 0.95f64.powi(k)).collect();
        let env = EchoEnvelope { tau, qubit_splitting: p.qubit_splitting, values: values.clone(), weights: weights.clone() };
        let m = n + 1;
        let detunings: Vec<f64> = (0..m).map(|j| -0.2 + 2.0 * PI * j as f64 / (m as f64 * tau)).collect();
        let peaks: Vec<Complex64> = detunings.iter().map(|&d| field_spectrum_peak(&env, &p.with_detuning(d), 1.0)).collect();
        let inv = invert_dft(&detunings, &peaks, &p, tau, &weights, 1.0, 1e-6).unwrap();
        for (got, want) in inv.values.iter().zip(&values) {
            assert!((got.unwrap() - want).norm() < 1e-12);
        }
    }
}

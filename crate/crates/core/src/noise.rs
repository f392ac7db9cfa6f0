// SPDX-License-Identifier: Apache-2.0
//! Noise spectral densities, Gaussian averages over the static detuning and
//! stochastic trajectory synthesis.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::quad::{self, GaussHermite, QuadValue, Tolerance};

/// Symmetric pair of spectral lines at `±omega` carrying total variance
/// `weight`; at `omega = 0` a single static line of the same variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaLine {
    pub omega: f64,
    pub weight: f64,
}

/// Principal-value line `b · P[2ω₀ / (ω₀² − ω²)]` produced by a quantum
/// correlator `b sin(ω₀ u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineLine {
    pub omega: f64,
    pub amplitude: f64,
}

/// One-sided tabulated spectrum, linearly interpolated and zero beyond the
/// last node; evaluated at `|ω|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    omega: Vec<f64>,
    value: Vec<f64>,
}

impl Table {
    /// Builds a table from strictly increasing non-negative frequencies.
    pub fn new(omega: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        if omega.len() != value.len() || omega.len() < 2 {
            return Err(invalid("spectrum", "table needs at least two matching rows"));
        }
        if omega[0] < 0.0 || omega.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("spectrum", "table frequencies must be non-negative and strictly increasing"));
        }
        if value.iter().chain(&omega).any(|v| !v.is_finite()) {
            return Err(invalid("spectrum", "table entries must be finite"));
        }
        Ok(Self { omega, value })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    fn eval(&self, w: f64) -> f64 {
        let w = w.abs();
        let n = self.omega.len();
        if w < self.omega[0] || w > self.omega[n - 1] {
            return 0.0;
        }
        let i = self.omega.partition_point(|&x| x <= w).clamp(1, n - 1);
        let (x0, x1) = (self.omega[i - 1], self.omega[i]);
        let (y0, y1) = (self.value[i - 1], self.value[i]);
        y0 + (y1 - y0) * (w - x0) / (x1 - x0)
    }
}

/// Even continuous spectral shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralShape {
    /// `level` for `|ω| ≤ half_width`, zero outside.
    Flat { level: f64, half_width: f64 },
    /// `variance · 2γ / (γ² + ω²)`, the spectrum of `variance · e^{−γ|u|}`.
    Lorentzian { variance: f64, rate: f64 },
    /// Gaussian of standard deviation `width` and total variance `variance`.
    Gaussian { variance: f64, width: f64 },
    /// Tabulated one-sided spectrum.
    Tabulated(Table),
}

impl SpectralShape {
    /// Spectral density at `ω`.
    pub fn value(&self, w: f64) -> f64 {
        match self {
            SpectralShape::Flat { level, half_width } => {
                if w.abs() <= *half_width {
                    *level
                } else {
                    0.0
                }
            }
            SpectralShape::Lorentzian { variance, rate } => variance * 2.0 * rate / (rate * rate + w * w),
            SpectralShape::Gaussian { variance, width } => {
                variance * (2.0 * PI).sqrt() / width * (-0.5 * (w / width).powi(2)).exp()
            }
            SpectralShape::Tabulated(t) => t.eval(w),
        }
    }

    /// Variance `(2π)⁻¹ ∫ S(ω) dω`.
    pub fn variance(&self) -> f64 {
        match self {
            SpectralShape::Flat { level, half_width } => level * half_width / PI,
            SpectralShape::Lorentzian { variance, .. } | SpectralShape::Gaussian { variance, .. } => *variance,
            SpectralShape::Tabulated(t) => {
                let area: f64 = t
                    .omega
                    .windows(2)
                    .zip(t.value.windows(2))
                    .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
                    .sum();
                area / PI
            }
        }
    }

    fn is_non_negative(&self) -> bool {
        match self {
            SpectralShape::Flat { level, half_width } => *level >= 0.0 && *half_width >= 0.0,
            SpectralShape::Lorentzian { variance, rate } => *variance >= 0.0 && *rate > 0.0,
            SpectralShape::Gaussian { variance, width } => *variance >= 0.0 && *width > 0.0,
            SpectralShape::Tabulated(t) => t.value.iter().all(|&v| v >= 0.0),
        }
    }

    fn is_well_formed(&self) -> bool {
        match self {
            SpectralShape::Flat { half_width, .. } => *half_width >= 0.0,
            SpectralShape::Lorentzian { rate, .. } => *rate > 0.0,
            SpectralShape::Gaussian { width, .. } => *width > 0.0,
            SpectralShape::Tabulated(_) => true,
        }
    }

    /// `∫_{−∞}^{∞} g(ω) S(ω) dω` for an even weight `g` whose oscillations
    /// have period about `2π / period_hint`.
    pub fn integrate_even<F: Fn(f64) -> f64>(&self, g: F, period_hint: f64, tol: Tolerance) -> Result<f64> {
        let integrand = |w: f64| g(w) * self.value(w);
        let ripple = |end: f64| -> Vec<f64> {
            if period_hint <= 0.0 {
                return Vec::new();
            }
            let step = 2.0 * PI / period_hint;
            let count = ((end / step) as usize).min(400);
            (1..=count).map(|k| k as f64 * step).collect()
        };
        let half = match self {
            SpectralShape::Flat { half_width, .. } => {
                quad::integrate(integrand, 0.0, *half_width, &ripple(*half_width), tol)?
            }
            SpectralShape::Lorentzian { rate, .. } => {
                let scale = 50.0 * rate;
                let mut br = ripple(scale);
                br.push(*rate);
                quad::integrate_to_infinity(integrand, 0.0, scale, &br, tol)?
            }
            SpectralShape::Gaussian { width, .. } => {
                let end = 14.0 * width;
                quad::integrate(integrand, 0.0, end, &ripple(end), tol)?
            }
            SpectralShape::Tabulated(t) => {
                let end = *t.omega.last().expect("table has rows");
                let mut br = t.omega.clone();
                br.extend(ripple(end));
                quad::integrate(integrand, t.omega[0], end, &br, tol)?
            }
        };
        Ok(2.0 * half)
    }
}

/// Classical and quantum parts of the environment noise spectrum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralDensity {
    pub classical: Vec<SpectralShape>,
    pub classical_lines: Vec<DeltaLine>,
    pub quantum: Vec<SpectralShape>,
    pub quantum_lines: Vec<DeltaLine>,
    pub sine_lines: Vec<SineLine>,
}

impl SpectralDensity {
    /// Purely static classical noise giving dephasing time `t2star`.
    pub fn static_only(t2star: f64) -> Self {
        Self {
            classical_lines: vec![DeltaLine { omega: 0.0, weight: 2.0 / (t2star * t2star) }],
            ..Self::default()
        }
    }

    /// Checks non-negativity of the classical part and finiteness of all parts.
    pub fn validate(&self) -> Result<()> {
        if !self.classical.iter().all(SpectralShape::is_non_negative)
            || self.classical_lines.iter().any(|l| l.weight < 0.0)
        {
            return Err(invalid("spectrum", "classical spectral density must be non-negative"));
        }
        if !self.quantum.iter().all(SpectralShape::is_well_formed) {
            return Err(invalid("spectrum", "quantum spectral shape has non-positive width"));
        }
        let finite = self
            .classical_lines
            .iter()
            .chain(&self.quantum_lines)
            .all(|l| l.omega.is_finite() && l.weight.is_finite())
            && self.sine_lines.iter().all(|l| l.omega.is_finite() && l.amplitude.is_finite());
        if !finite {
            return Err(invalid("spectrum", "line parameters must be finite"));
        }
        Ok(())
    }

    /// Continuous classical spectral density at `ω`.
    pub fn classical_value(&self, w: f64) -> f64 {
        self.classical.iter().map(|s| s.value(w)).sum()
    }

    /// Total classical variance `(2π)⁻¹ ∫ S_c dω`.
    pub fn classical_variance(&self) -> f64 {
        self.classical.iter().map(SpectralShape::variance).sum::<f64>()
            + self.classical_lines.iter().map(|l| l.weight).sum::<f64>()
    }
}

/// Inhomogeneous dephasing time from `2/T2*² = (2π)⁻¹ ∫ S_c dω`.
pub fn t2star_from_spectrum(s: &SpectralDensity) -> Result<f64> {
    s.validate()?;
    let v = s.classical_variance();
    if !(v > 0.0) {
        return Err(invalid("spectrum", "classical spectrum has zero weight"));
    }
    Ok((2.0 / v).sqrt())
}

/// Probability density of the static detuning `η` for dephasing time `t2star`.
pub fn eta_density(eta: f64, t2star: f64) -> f64 {
    t2star / (4.0 * PI).sqrt() * (-0.25 * (eta * t2star).powi(2)).exp()
}

/// Draws a static detuning `η ~ N(0, 2/T2*²)`.
pub fn sample_static_eta<R: Rng + ?Sized>(t2star: f64, rng: &mut R) -> f64 {
    Normal::new(0.0, 2f64.sqrt() / t2star).expect("positive deviation").sample(rng)
}

/// Settings for the Gauss–Hermite average over `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageOptions {
    /// Starting quadrature order.
    pub order: usize,
    /// Largest order tried before reporting non-convergence.
    pub max_order: usize,
    /// Relative agreement required between successive orders.
    pub rel_tol: f64,
}

impl Default for AverageOptions {
    fn default() -> Self {
        Self { order: 200, max_order: 6400, rel_tol: 1e-9 }
    }
}

/// `⟨⟨f(η)⟩⟩` with a Gauss–Hermite rule of fixed order.
pub fn gaussian_average_fixed<V: QuadValue, F: Fn(f64) -> V>(t2star: f64, order: usize, f: F) -> V {
    let rule = GaussHermite::get(order);
    let scale = 2.0 / t2star;
    let norm = 1.0 / PI.sqrt();
    let mut acc = V::zero();
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        if *w > 0.0 {
            acc = acc + f(scale * x) * (w * norm);
        }
    }
    acc
}

/// Mean of `|f(η)|` under the same rule, used as an absolute error scale.
fn gaussian_abs_mean<V: QuadValue, F: Fn(f64) -> V>(t2star: f64, order: usize, f: &F) -> f64 {
    gaussian_average_fixed(t2star, order, |eta| f(eta).magnitude())
}

/// `⟨⟨f(η)⟩⟩`, doubling the Gauss–Hermite order until successive results agree.
pub fn gaussian_average<V: QuadValue, F: Fn(f64) -> V>(t2star: f64, f: F, opts: AverageOptions) -> Result<V> {
    if !(t2star > 0.0) {
        return Err(invalid("t2star", "must be positive"));
    }
    let mut order = opts.order.max(1);
    let mut prev = gaussian_average_fixed(t2star, order, &f);
    let floor = 1e-14 * gaussian_abs_mean(t2star, order, &f);
    while order < opts.max_order {
        order *= 2;
        let next = gaussian_average_fixed(t2star, order, &f);
        if (next - prev).magnitude() <= opts.rel_tol * next.magnitude() + floor {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NotConverged(format!(
        "Gaussian average did not reach relative agreement {:e} by order {}",
        opts.rel_tol, opts.max_order
    )))
}

/// `⟨⟨f(η)⟩⟩` by adaptive Gauss–Kronrod on `|η| ≤ 12σ`, splitting at
/// the supplied points where `f` has narrow structure.
pub fn gaussian_average_adaptive<V: QuadValue, F: Fn(f64) -> V>(
    t2star: f64,
    f: F,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<V> {
    if !(t2star > 0.0) {
        return Err(invalid("t2star", "must be positive"));
    }
    let edge = 12.0 * 2f64.sqrt() / t2star;
    quad::integrate(|eta| f(eta) * eta_density(eta, t2star), -edge, edge, breaks, tol)
}

/// Samples a stationary Gaussian trajectory `η(t_k)`, `t_k = k·dt`, from the
/// classical spectrum by spectral synthesis.
pub fn sample_trajectory<R: Rng + ?Sized>(
    s: &SpectralDensity,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    s.validate()?;
    if !(dt > 0.0) || n_steps == 0 {
        return Err(invalid("dt", "time step and length must be positive"));
    }
    let nyquist = PI / dt;
    let total = s.classical_variance();
    let mut above = 0.0;
    for shape in &s.classical {
        let tail = shape.integrate_even(|w| if w.abs() > nyquist { 1.0 } else { 0.0 }, 0.0, Tolerance::default())?;
        above += tail / (2.0 * PI);
    }
    for line in &s.classical_lines {
        if line.omega.abs() > nyquist {
            above += line.weight;
        }
    }
    if above > 1e-2 * total {
        return Err(Error::Undersampled(format!(
            "{:.3e} of the noise variance lies above the Nyquist frequency {nyquist:.6e}",
            above / total
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = vec![0.0; n_steps];
    for line in &s.classical_lines {
        let sd = line.weight.sqrt();
        let a = sd * normal.sample(rng);
        let b = sd * normal.sample(rng);
        for (k, v) in out.iter_mut().enumerate() {
            let ph = line.omega * k as f64 * dt;
            *v += a * ph.cos() + b * ph.sin();
        }
    }
    if !s.classical.is_empty() {
        let m = (2 * n_steps).next_power_of_two();
        let dw = 2.0 * PI / (m as f64 * dt);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (j, slot) in buf.iter_mut().enumerate().take(m / 2).skip(1) {
            let w = j as f64 * dw;
            let amp = (2.0 * s.classical_value(w) * dw / (2.0 * PI)).sqrt();
            *slot = Complex64::new(amp * normal.sample(rng), -amp * normal.sample(rng));
        }
        FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
        for (v, c) in out.iter_mut().zip(&buf) {
            *v += c.re;
        }
    }
    Ok(out)
}

/// Parses a two-column `(ω, value)` table; blank lines and `#` comments are
/// skipped and columns may be separated by whitespace or commas.
pub fn parse_spectrum_table(text: &str) -> Result<Table> {
    let mut omega = Vec::new();
    let mut value = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        if fields.len() != 2 {
            return Err(Error::Parse { line: i + 1, message: format!("expected two columns, found {}", fields.len()) });
        }
        let parse = |f: &str| {
            f.parse::<f64>()
                .map_err(|_| Error::Parse { line: i + 1, message: format!("`{f}` is not a number") })
        };
        let w = parse(fields[0])?;
        let v = parse(fields[1])?;
        if let Some(&last) = omega.last() {
            if !(w > last) {
                return Err(Error::Parse { line: i + 1, message: "frequencies must be strictly increasing".into() });
            }
        }
        omega.push(w);
        value.push(v);
    }
    Table::new(omega, value)
}

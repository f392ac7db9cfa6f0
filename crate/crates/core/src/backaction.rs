// SPDX-License-Identifier: Apache-2.0
//! Purcell backaction of the cavity on the echo: rates, revival shapes and
//! the stretched-exponential envelope factor.

use num_complex::Complex64;

use crate::cavity::EchoEnvelope;
use crate::error::{invalid, Result};
use crate::filters::envelope_c0;
use crate::model::{PulseSequence, SystemParams};
use crate::noise::{gaussian_average_adaptive, SpectralDensity};
use crate::quad::{QuadValue, Tolerance};
use crate::scalar::Real;

/// Purcell rate `Γ_P(η) = g²κ / [(η − δ)² + (κ/2)²]`.
pub fn purcell_rate<T: Real>(eta: T, params: &SystemParams<T>) -> T {
    let d = eta - params.detuning;
    let half = params.kappa * T::lit(0.5);
    params.coupling * params.coupling * params.kappa / (d * d + half * half)
}

/// Dispersive shift `Δω(η) = g²(η − δ) / [(η − δ)² + (κ/2)²]`.
pub fn dispersive_shift<T: Real>(eta: T, params: &SystemParams<T>) -> T {
    let d = eta - params.detuning;
    let half = params.kappa * T::lit(0.5);
    params.coupling * params.coupling * d / (d * d + half * half)
}

/// Stretched-exponential rate `γ_P = (gT2*)² κ / 2`.
pub fn gamma_p<T: Real>(params: &SystemParams<T>) -> T {
    let gt = params.coupling * params.t2star;
    gt * gt * params.kappa * T::lit(0.5)
}

/// Whether the `γ_P` shortcut applies, i.e. `T2*|δ| < 0.3`.
pub fn gamma_p_shortcut_holds<T: Real>(params: &SystemParams<T>) -> bool {
    params.t2star * params.detuning.abs() < T::lit(0.3)
}

/// How the Purcell envelope factor is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackactionMode {
    /// Gaussian average `⟨⟨e^{−Γ_P(η) nτ/2}⟩⟩` by quadrature.
    #[default]
    Exact,
    /// Closed form `e^{(κT2*/4)²} e^{−√(γ_P nτ)}` valid for `κτ ≫ 1`, `κT2* ≪ 1`.
    Asymptotic,
}

/// Purcell factor multiplying the bare echo envelope at `t = nτ`.
pub fn purcell_envelope_factor(n: usize, tau: f64, params: &SystemParams<f64>, mode: BackactionMode) -> Result<f64> {
    let t = n as f64 * tau;
    match mode {
        BackactionMode::Exact => resonant_average(params, |eta| (-0.5 * purcell_rate(eta, params) * t).exp()),
        BackactionMode::Asymptotic => {
            if n == 0 {
                return Ok(1.0);
            }
            let pre = (0.25 * params.kappa * params.t2star).powi(2);
            Ok((pre - (gamma_p(params) * t).sqrt()).exp())
        }
    }
}

/// Average over `η` split at the cavity resonance, where the Purcell
/// factor develops a narrow hole.
fn resonant_average<V: QuadValue, F: Fn(f64) -> V>(params: &SystemParams<f64>, f: F) -> Result<V> {
    resonant_average_with(params, Tolerance { rel: 1e-12, abs: 1e-15, max_panels: 20_000 }, f)
}

fn resonant_average_with<V: QuadValue, F: Fn(f64) -> V>(params: &SystemParams<f64>, tol: Tolerance, f: F) -> Result<V> {
    let k = params.kappa;
    let d = params.detuning;
    let breaks: Vec<f64> = [-64.0, -16.0, -4.0, -1.0, 0.0, 1.0, 4.0, 16.0, 64.0]
        .iter()
        .map(|m| d + m * k)
        .collect();
    gaussian_average_adaptive(params.t2star, f, &breaks, tol)
}

/// Revival weight `Ḡ_n`: the Fourier component of the normalised revival
/// shape at the cavity frequency, divided by `√π T2*`.
pub fn revival_weight(n: usize, tau: f64, params: &SystemParams<f64>, mode: BackactionMode) -> Result<f64> {
    let t = n as f64 * tau;
    let norm = purcell_envelope_factor(n, tau, params, mode)?;
    let d = params.detuning;
    let at_cavity = (-0.25 * (d * params.t2star).powi(2)).exp() * (-0.5 * purcell_rate(d, params) * t).exp();
    Ok(at_cavity / norm)
}

/// Large-`γ_P nτ` form `2 e^{−2√(γ_P nτ)}` of the weight obtained by
/// integrating the asymptotic revival profile over all times.
pub fn revival_weight_asymptote(x: f64) -> f64 {
    2.0 * (-2.0 * x.sqrt()).exp()
}

/// Large-`γ_P nτ` revival profile `e^{−(t/2T2*)²} cos[√2 (γ_P nτ)^{1/4} t/T2*]`.
pub fn revival_shape_asymptote(t: f64, x: f64, t2star: f64) -> f64 {
    let u = t / t2star;
    (-0.25 * u * u).exp() * (2f64.sqrt() * x.powf(0.25) * u).cos()
}

/// Revival shape `G_n(t)` sampled on a time grid, with its weight `Ḡ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RevivalShape {
    pub n: usize,
    pub t: Vec<f64>,
    pub values: Vec<Complex64>,
    pub weight: f64,
}

/// Default sampling grid `[−5T2*, 5T2*]` with 501 points.
pub fn default_revival_grid(t2star: f64) -> Vec<f64> {
    uniform_grid(-5.0 * t2star, 5.0 * t2star, 501)
}

pub(crate) fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| a + h * k as f64).collect()
}

/// `G_n(t) = ⟨⟨e^{−Γ_P(η) nτ/2} e^{−iηt}⟩⟩` divided by the Purcell factor of
/// the chosen mode, so that `G_n · C̃(nτ)` is mode independent.
///
/// Evaluated as the free decay `e^{−(t/T2*)²}` minus the Purcell hole
/// `⟨⟨(1 − e^{−Γ_P nτ/2}) e^{−iηt}⟩⟩`, which lasts for a time of order `1/κ`.
pub fn revival_shape(
    n: usize,
    tau: f64,
    t_grid: &[f64],
    params: &SystemParams<f64>,
    mode: BackactionMode,
) -> Result<RevivalShape> {
    let t_rev = n as f64 * tau;
    let norm = purcell_envelope_factor(n, tau, params, mode)?;
    let tol = Tolerance { rel: 1e-10, abs: 1e-14, max_panels: 20_000 };
    let mut values = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let hole: Complex64 = resonant_average_with(params, tol, |eta| {
            Complex64::from_polar(-(-0.5 * purcell_rate(eta, params) * t_rev).exp_m1(), -eta * t)
        })?;
        let free = (-(t / params.t2star).powi(2)).exp();
        values.push((free - hole) / norm);
    }
    Ok(RevivalShape { n, t: t_grid.to_vec(), values, weight: revival_weight(n, tau, params, mode)? })
}

/// Echo envelope of a CPMG (or Hahn) sequence including cavity backaction.
pub fn full_envelope(
    seq: &PulseSequence<f64>,
    params: &SystemParams<f64>,
    spectrum: &SpectralDensity,
    mode: BackactionMode,
) -> Result<EchoEnvelope> {
    let (n_echo, tau) = match seq {
        PulseSequence::Hahn { tau } => (1, *tau),
        PulseSequence::Cpmg { n, tau } => (*n, *tau),
        _ => return Err(invalid("sequence", "echo envelopes need a Hahn or CPMG sequence")),
    };
    crate::model::validate(params, seq)?;
    let mut values = vec![Complex64::new(1.0, 0.0)];
    let mut weights = vec![revival_weight(0, tau, params, mode)?];
    for n in 1..=n_echo {
        let t = n as f64 * tau;
        let partial = PulseSequence::Cpmg { n, tau };
        let bare = envelope_c0(&partial, t, spectrum, params.dephasing)?;
        values.push(bare * purcell_envelope_factor(n, tau, params, mode)?);
        weights.push(revival_weight(n, tau, params, mode)?);
    }
    Ok(EchoEnvelope { tau, qubit_splitting: params.qubit_splitting, values, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> SystemParams<f64> {
        SystemParams::weak_coupling_reference()
    }

    #[test]
    fn purcell_peak_rate() {
        let p = reference();
        assert!((purcell_rate(0.0, &p) - 4.0 * p.coupling.powi(2) / p.kappa).abs() < 1e-15);
        assert_eq!(dispersive_shift(0.0, &p), 0.0);
    }

    #[test]
    fn gamma_p_reference_value() {
        assert!((gamma_p(&reference()) - 5e-5).abs() < 1e-18);
        assert!((gamma_p(&SystemParams::<f32>::weak_coupling_reference()) - 5e-5).abs() < 1e-9);
    }

    #[test]
    fn exact_factor_approaches_stretched_exponential() {
        let p = reference();
        let tau = 10.0;
        let gp = gamma_p(&p);
        for &x in &[1.0, 4.0, 16.0] {
            let n = (x / (gp * tau)).round() as usize;
            let exact = purcell_envelope_factor(n, tau, &p, BackactionMode::Exact).unwrap();
            let asym = purcell_envelope_factor(n, tau, &p, BackactionMode::Asymptotic).unwrap();
            assert!((exact / asym - 1.0).abs() < 0.02, "x={x}: {exact} vs {asym}");
        }
    }

    #[test]
    fn revival_shape_is_normalised_at_zero() {
        let p = reference();
        let shape = revival_shape(50, 10.0, &[0.0], &p, BackactionMode::Exact).unwrap();
        assert!((shape.values[0].re - 1.0).abs() < 1e-12 && shape.values[0].im.abs() < 1e-12);
    }

    #[test]
    fn weight_equals_time_integral_of_fid_shape() {
        let p = reference();
        let grid = uniform_grid(-8.0 * p.t2star, 8.0 * p.t2star, 4001);
        let shape = revival_shape(0, 10.0, &grid, &p, BackactionMode::Exact).unwrap();
        let h = grid[1] - grid[0];
        let area: f64 = shape.values.iter().map(|v| v.re).sum::<f64>() * h;
        let weight = area / (std::f64::consts::PI.sqrt() * p.t2star);
        assert!((weight - shape.weight).abs() < 1e-9, "{weight} vs {}", shape.weight);
    }

    #[test]
    fn weight_matches_regularised_time_integral() {
        use crate::noise::gaussian_average_adaptive;
        use crate::quad::Tolerance;
        let p = reference();
        let tau = 10.0;
        let eps = 1e-6 * p.kappa;
        for &n in &[3usize, 20] {
            let t = n as f64 * tau;
            let norm = purcell_envelope_factor(n, tau, &p, BackactionMode::Exact).unwrap();
            let regularised = gaussian_average_adaptive(
                p.t2star,
                |eta| (-0.5 * purcell_rate(eta, &p) * t).exp() * 2.0 * eps / (eps * eps + eta * eta),
                &[-10.0 * eps, 0.0, 10.0 * eps],
                Tolerance { rel: 1e-10, abs: 0.0, max_panels: 20_000 },
            )
            .unwrap();
            let weight = regularised / norm / (std::f64::consts::PI.sqrt() * p.t2star);
            let expect = revival_weight(n, tau, &p, BackactionMode::Exact).unwrap();
            assert!((weight / expect - 1.0).abs() < 1e-3, "n={n}: {weight} vs {expect}");
        }
    }

    #[test]
    fn asymptotic_profile_integrates_to_asymptotic_weight() {
        let t2 = 0.1;
        for &x in &[4.0, 9.0] {
            let grid = uniform_grid(-12.0 * t2, 12.0 * t2, 20_001);
            let h = grid[1] - grid[0];
            let area: f64 = grid.iter().map(|&t| revival_shape_asymptote(t, x, t2)).sum::<f64>() * h;
            let w = area / (std::f64::consts::PI.sqrt() * t2);
            assert!((w / revival_weight_asymptote(x) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn full_envelope_starts_at_one() {
        let p = reference();
        let s = SpectralDensity::static_only(p.t2star);
        let env = full_envelope(&PulseSequence::Cpmg { n: 5, tau: 10.0 }, &p, &s, BackactionMode::Exact).unwrap();
        assert_eq!(env.values.len(), 6);
        assert_eq!(env.values[0], Complex64::new(1.0, 0.0));
        assert!(env.values.iter().all(|v| v.norm() <= 1.0 + 1e-12));
    }
}

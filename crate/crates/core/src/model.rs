// SPDX-License-Identifier: Apache-2.0
//! System parameters, pulse sequences and the echo sign function.

use num_traits::Num;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Physical parameters of one inhomogeneous qubit coupled to a lossy cavity.
///
/// Frequencies and rates share one unit system; times use its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams<T> {
    /// Mean qubit splitting `Δ`.
    pub qubit_splitting: T,
    /// Cavity–qubit detuning `δ = ω_c − Δ`.
    pub detuning: T,
    /// Vacuum coupling `g`.
    pub coupling: T,
    /// Total cavity loss rate `κ`.
    pub kappa: T,
    /// Input-port loss rate `κ₁`.
    pub kappa_in: T,
    /// Output-port loss rate `κ₂`.
    pub kappa_out: T,
    /// Loss rate into unmonitored channels.
    pub kappa_ext: T,
    /// Intrinsic dephasing rate `γ_φ`.
    pub dephasing: T,
    /// Inhomogeneous dephasing time `T2*`.
    pub t2star: T,
}

impl<T: Real> SystemParams<T> {
    /// Cavity frequency `ω_c = Δ + δ`.
    pub fn cavity_freq(&self) -> T {
        self.qubit_splitting + self.detuning
    }

    /// Returns a copy with the cavity retuned to detuning `δ`.
    pub fn with_detuning(mut self, detuning: T) -> Self {
        self.detuning = detuning;
        self
    }

    /// Parameters in units of `κ`: weak coupling `g = 0.1κ`, `κT2* = 0.1`,
    /// all loss through the output port.
    pub fn weak_coupling_reference() -> Self {
        let one = T::one();
        let tenth = T::lit(0.1);
        Self {
            qubit_splitting: T::zero(),
            detuning: T::zero(),
            coupling: tenth,
            kappa: one,
            kappa_in: T::zero(),
            kappa_out: one,
            kappa_ext: T::zero(),
            dephasing: T::zero(),
            t2star: tenth,
        }
    }
}

/// Dynamical-decoupling sequence of ideal instantaneous π pulses.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseSequence<T> {
    /// Free induction decay, no refocusing pulses.
    Fid,
    /// Single π pulse at `τ/2`, echo at `τ`.
    Hahn { tau: T },
    /// `n` π pulses at `(k − ½)τ`, echoes at `kτ`.
    Cpmg { n: usize, tau: T },
    /// Arbitrary ordered pulse times.
    Custom { times: Vec<T> },
}

impl<T: Num + Copy + PartialOrd> PulseSequence<T> {
    /// Pulse times in increasing order.
    pub fn pulse_times(&self) -> Vec<T> {
        let two = T::one() + T::one();
        match self {
            PulseSequence::Fid => Vec::new(),
            PulseSequence::Hahn { tau } => vec![*tau / two],
            PulseSequence::Cpmg { n, tau } => {
                let mut out = Vec::with_capacity(*n);
                let mut k = T::one();
                for _ in 0..*n {
                    out.push((k + k - T::one()) * *tau / two);
                    k = k + T::one();
                }
                out
            }
            PulseSequence::Custom { times } => times.clone(),
        }
    }

    /// Nominal echo times `kτ` for Hahn and CPMG sequences.
    pub fn echo_times(&self) -> Vec<T> {
        match self {
            PulseSequence::Fid | PulseSequence::Custom { .. } => Vec::new(),
            PulseSequence::Hahn { tau } => vec![*tau],
            PulseSequence::Cpmg { n, tau } => {
                let mut out = Vec::with_capacity(*n);
                let mut t = *tau;
                for _ in 0..*n {
                    out.push(t);
                    t = t + *tau;
                }
                out
            }
        }
    }

    /// Number of π pulses.
    pub fn pulse_count(&self) -> usize {
        match self {
            PulseSequence::Fid => 0,
            PulseSequence::Hahn { .. } => 1,
            PulseSequence::Cpmg { n, .. } => *n,
            PulseSequence::Custom { times } => times.len(),
        }
    }

    /// Checks that pulse times are non-negative and strictly increasing.
    pub fn check_order(&self) -> Result<()> {
        let times = self.pulse_times();
        if times.iter().any(|&t| t < T::zero()) || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::UnorderedPulses);
        }
        Ok(())
    }

    /// Constant-sign segments `(start, end, sign)` covering `[0, t]`.
    pub fn segments(&self, t: T) -> Vec<(T, T, T)> {
        let mut out = Vec::new();
        let mut start = T::zero();
        let mut sign = T::one();
        for p in self.pulse_times() {
            if !(p < t) {
                break;
            }
            if start < p {
                out.push((start, p, sign));
            }
            start = p;
            sign = T::zero() - sign;
        }
        if start < t {
            out.push((start, t, sign));
        }
        out
    }
}

/// Echo sign function `s(t) = (−1)^{#pulses ≤ t}`, right-continuous at pulses.
pub fn sign_function<T: Num + Copy + PartialOrd>(seq: &PulseSequence<T>, t: T) -> T {
    let flips = seq.pulse_times().into_iter().filter(|&p| !(t < p)).count();
    if flips % 2 == 0 {
        T::one()
    } else {
        T::zero() - T::one()
    }
}

/// Exact integral `∫₀ᵗ s(t′) dt′`; zero exactly at echo times.
pub fn balanced_integral<T: Num + Copy + PartialOrd>(seq: &PulseSequence<T>, t: T) -> T {
    seq.segments(t)
        .into_iter()
        .fold(T::zero(), |acc, (a, b, s)| acc + s * (b - a))
}

/// Parameter regimes in which the closed-form results apply.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegimeReport {
    /// `κ ≪ Δ`, taken as `10κ ≤ |Δ|`.
    pub high_q: bool,
    /// `κτ ≫ 1`, taken as `κτ ≥ 10`.
    pub slow_pulsing: bool,
    /// `κT2* < 1`.
    pub narrow_distribution: bool,
    /// Human-readable warnings about marginal regimes.
    pub warnings: Vec<String>,
}

/// Validates parameters and a pulse sequence, returning regime flags.
pub fn validate<T: Real>(params: &SystemParams<T>, seq: &PulseSequence<T>) -> Result<RegimeReport> {
    let p = params;
    let positive = |name: &'static str, v: T| -> Result<()> {
        if v.is_finite() && v > T::zero() {
            Ok(())
        } else {
            Err(invalid(name, format!("must be positive and finite, got {v}")))
        }
    };
    let non_negative = |name: &'static str, v: T| -> Result<()> {
        if v.is_finite() && v >= T::zero() {
            Ok(())
        } else {
            Err(invalid(name, format!("must be non-negative and finite, got {v}")))
        }
    };
    positive("kappa", p.kappa)?;
    positive("t2star", p.t2star)?;
    non_negative("coupling", p.coupling)?;
    non_negative("kappa_in", p.kappa_in)?;
    non_negative("kappa_out", p.kappa_out)?;
    non_negative("kappa_ext", p.kappa_ext)?;
    non_negative("dephasing", p.dephasing)?;
    if !p.qubit_splitting.is_finite() {
        return Err(invalid("qubit_splitting", "must be finite"));
    }
    if !p.detuning.is_finite() {
        return Err(invalid("detuning", "must be finite"));
    }
    let sum = p.kappa_in + p.kappa_out + p.kappa_ext;
    if (sum - p.kappa).abs() > T::lit(1e-9) * p.kappa {
        return Err(Error::KappaPartition {
            kappa: p.kappa.to_f64().unwrap_or(f64::NAN),
            sum: sum.to_f64().unwrap_or(f64::NAN),
        });
    }
    seq.check_order()?;
    let tau = match seq {
        PulseSequence::Hahn { tau } | PulseSequence::Cpmg { tau, .. } => {
            positive("tau", *tau)?;
            Some(*tau)
        }
        _ => None,
    };
    let ten = T::lit(10.0);
    let mut report = RegimeReport {
        high_q: p.qubit_splitting.abs() >= ten * p.kappa,
        slow_pulsing: tau.map(|t| p.kappa * t >= ten).unwrap_or(false),
        narrow_distribution: p.kappa * p.t2star < T::one(),
        warnings: Vec::new(),
    };
    if !report.high_q {
        report.warnings.push("rotating-wave treatment assumes kappa << qubit splitting".into());
    }
    if tau.is_some() && !report.slow_pulsing {
        report.warnings.push("revival closed forms assume kappa * tau >> 1".into());
    }
    if !report.narrow_distribution {
        report.warnings.push("closed forms assume kappa * T2* < 1".into());
    }
    if p.coupling >= p.kappa {
        report.warnings.push("coupling is not weak compared with kappa".into());
    }
    if p.t2star * p.detuning.abs() >= T::lit(0.3) {
        report.warnings.push("detuning is not small compared with 1/T2*".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn cpmg_pulse_positions() {
        let seq = PulseSequence::Cpmg { n: 3, tau: 2.0 };
        assert_eq!(seq.pulse_times(), vec![1.0, 3.0, 5.0]);
        assert_eq!(seq.echo_times(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn hahn_is_single_cpmg() {
        let h = PulseSequence::Hahn { tau: 3.0 };
        let c = PulseSequence::Cpmg { n: 1, tau: 3.0 };
        assert_eq!(h.pulse_times(), c.pulse_times());
    }

    #[test]
    fn sign_is_right_continuous() {
        let seq = PulseSequence::Cpmg { n: 2, tau: 1.0 };
        assert_eq!(sign_function(&seq, 0.0), 1.0);
        assert_eq!(sign_function(&seq, 0.5), -1.0);
        assert_eq!(sign_function(&seq, 1.5), 1.0);
    }

    #[test]
    fn rational_balance_is_exact() {
        let tau = Rational64::new(7, 3);
        for n in 1..12 {
            let seq = PulseSequence::Cpmg { n, tau };
            for k in 1..=n as i64 {
                let t = tau * Rational64::from_integer(k);
                assert_eq!(balanced_integral(&seq, t), Rational64::from_integer(0));
            }
            let off = tau * Rational64::new(1, 4);
            assert_eq!(balanced_integral(&seq, off), off);
        }
    }

    #[test]
    fn fid_is_unbalanced() {
        let seq: PulseSequence<f64> = PulseSequence::Fid;
        assert_eq!(balanced_integral(&seq, 2.5), 2.5);
    }

    #[test]
    fn reference_regime_flags() {
        let p = SystemParams::<f64>::weak_coupling_reference();
        let r = validate(&p, &PulseSequence::Cpmg { n: 4, tau: 10.0 }).unwrap();
        assert!(r.slow_pulsing && r.narrow_distribution && !r.high_q);
    }

    #[test]
    fn kappa_partition_is_enforced() {
        let mut p = SystemParams::<f64>::weak_coupling_reference();
        p.kappa_out = 2.0;
        assert!(matches!(validate(&p, &PulseSequence::Fid), Err(Error::KappaPartition { .. })));
    }

    #[test]
    fn unordered_custom_rejected() {
        let p = SystemParams::<f64>::weak_coupling_reference();
        let seq = PulseSequence::Custom { times: vec![1.0, 0.5] };
        assert_eq!(validate(&p, &seq), Err(Error::UnorderedPulses));
    }

    #[test]
    fn single_precision_validation() {
        let p = SystemParams::<f32>::weak_coupling_reference();
        assert!(validate(&p, &PulseSequence::Hahn { tau: 10.0f32 }).is_ok());
    }
}

// SPDX-License-Identifier: Apache-2.0
//! State-vector simulation of the qubit, cavity and output line restricted to
//! at most one photon, with ideal π pulses and a static detuning `η`.
//!
//! All amplitudes live in the frame rotating at the mean qubit splitting `Δ`;
//! the splitting itself never enters, so pulses are pure `g ↔ e` swaps.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::backaction::{full_envelope, revival_shape, BackactionMode};
use crate::cavity::{revival_train, EchoEnvelope, WavepacketForm};
use crate::error::{invalid, Error, Result};
use crate::model::{PulseSequence, SystemParams};
use crate::noise::{eta_density, SpectralDensity};
use crate::quad::{gauss_legendre, GaussHermite};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Longest piece, in units of `1/κ`, over which a Markovian step is taken.
const MAX_STEP_KAPPA: f64 = 2.0;
/// Allowed norm drift per unit `1/κ` of evolved time.
const NORM_DRIFT_RATE: f64 = 1e-8;
/// Number of `η` nodes summed sequentially before partial sums are combined.
const CHUNK: usize = 8;

/// Treatment of the transmission line fed by the cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineMode {
    /// Non-Hermitian photon decay at `κ/2`; the emitted photon is kept as a
    /// qubit density matrix conditioned on emission.
    Markovian,
    /// Explicit line modes equally spaced over `ω_c ± half_width`, coupled to
    /// the cavity with strength `√(κ Δω / 2π)`.
    Discretized { modes: usize, half_width: f64 },
}

impl LineMode {
    /// 512 modes spanning `ω_c ± 20κ`.
    pub fn discretized_default(kappa: f64) -> Self {
        LineMode::Discretized { modes: 512, half_width: 20.0 * kappa }
    }
}

/// Line part of an [`OracleState`].
#[derive(Debug, Clone, PartialEq)]
pub enum LineState {
    /// Qubit density matrix, basis `(e, g)`, accumulated from emitted photons.
    Emitted([[Complex64; 2]; 2]),
    /// Amplitudes `α_{g,k}` and `α_{e,k}` of one photon in line mode `k`.
    Modes { frequencies: Vec<f64>, ground: Vec<Complex64>, excited: Vec<Complex64> },
}

/// Amplitudes over `{|g,0⟩, |e,0⟩, |g,1⟩, |e,1⟩}` plus the line.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    pub time: f64,
    pub amp_g0: Complex64,
    pub amp_e0: Complex64,
    pub amp_g1: Complex64,
    pub amp_e1: Complex64,
    pub line: LineState,
}

impl OracleState {
    /// Total probability including the line.
    pub fn norm(&self) -> f64 {
        let cavity = self.cavity_norm();
        cavity
            + match &self.line {
                LineState::Emitted(rho) => rho[0][0].re + rho[1][1].re,
                LineState::Modes { ground, excited, .. } => {
                    ground.iter().chain(excited).map(|a| a.norm_sqr()).sum::<f64>()
                }
            }
    }

    /// Probability held by the four qubit–cavity states.
    pub fn cavity_norm(&self) -> f64 {
        self.amp_g0.norm_sqr() + self.amp_e0.norm_sqr() + self.amp_g1.norm_sqr() + self.amp_e1.norm_sqr()
    }

    /// Qubit coherence `⟨σ₋⟩`.
    pub fn coherence(&self) -> Complex64 {
        let local = self.amp_e0 * self.amp_g0.conj() + self.amp_e1 * self.amp_g1.conj();
        local
            + match &self.line {
                LineState::Emitted(rho) => rho[0][1],
                LineState::Modes { ground, excited, .. } => {
                    excited.iter().zip(ground).map(|(e, g)| e * g.conj()).sum::<Complex64>()
                }
            }
    }

    /// Cavity field `⟨ã⟩ = Σ_σ α*_{σ0} α_{σ1}`.
    pub fn field(&self) -> Complex64 {
        self.amp_g0.conj() * self.amp_g1 + self.amp_e0.conj() * self.amp_e1
    }

    /// Cavity photon number.
    pub fn photons(&self) -> f64 {
        self.amp_g1.norm_sqr() + self.amp_e1.norm_sqr()
    }

    /// Line-mode fields `⟨b_k⟩`; empty in the Markovian mode.
    pub fn line_field(&self) -> Vec<Complex64> {
        match &self.line {
            LineState::Emitted(_) => Vec::new(),
            LineState::Modes { ground, excited, .. } => ground
                .iter()
                .zip(excited)
                .map(|(g, e)| self.amp_g0.conj() * g + self.amp_e0.conj() * e)
                .collect(),
        }
    }
}

/// States of one fixed-`η` run at the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eta: f64,
    pub states: Vec<OracleState>,
}

impl Trajectory {
    /// CSV with columns `t`, real and imaginary parts of the four amplitudes,
    /// `n_c` and the cavity field.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# eta = {:.16e}", self.eta);
        out.push_str("t,re_g0,im_g0,re_e0,im_e0,re_g1,im_g1,re_e1,im_e1,n_c,re_field,im_field\n");
        for s in &self.states {
            let f = s.field();
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.time,
                s.amp_g0.re,
                s.amp_g0.im,
                s.amp_e0.re,
                s.amp_e0.im,
                s.amp_g1.re,
                s.amp_g1.im,
                s.amp_e1.re,
                s.amp_e1.im,
                s.photons(),
                f.re,
                f.im
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Observation {
    coherence: Complex64,
    field: Complex64,
    photons: f64,
    norm: f64,
}

trait Evolver {
    fn advance(&mut self, h: f64);
    fn flip(&mut self);
    fn observe(&self) -> Observation;
    fn snapshot(&self, time: f64) -> OracleState;
}

/// Propagator pieces of one Markovian step of length `h`.
struct MarkovStep {
    g0: Complex64,
    e1: Complex64,
    block: Matrix2<Complex64>,
    cross: Matrix2<Complex64>,
    eg_phase: Complex64,
}

impl MarkovStep {
    fn new(eta: f64, params: &SystemParams<f64>, h: f64) -> Self {
        let g = params.coupling;
        let k = params.kappa;
        let d = params.detuning;
        let m = Matrix2::new(
            -I * (0.5 * eta),
            -I * g,
            -I * g,
            -I * (d - 0.5 * eta) - 0.5 * k,
        );
        let block = (m * Complex64::from(h)).exp();
        let mu = I * (0.5 * eta - d) - 0.5 * k;
        let b = m.map(|z| z.conj()) + Matrix2::identity() * mu;
        let mut aug = Matrix4::<Complex64>::zeros();
        aug.fixed_view_mut::<2, 2>(0, 0).copy_from(&(b * Complex64::from(h)));
        aug[(0, 2)] = Complex64::from(h);
        aug[(1, 3)] = Complex64::from(h);
        let cross = aug.exp().fixed_view::<2, 2>(0, 2).into_owned();
        Self {
            g0: (I * (0.5 * eta * h)).exp(),
            e1: (Complex64::new(-0.5 * k, -(0.5 * eta + d)) * h).exp(),
            block,
            cross,
            eg_phase: (-I * (eta * h)).exp(),
        }
    }
}

struct MarkovEvolver<'a> {
    eta: f64,
    params: &'a SystemParams<f64>,
    g0: Complex64,
    x: Vector2<Complex64>,
    e1: Complex64,
    lost: [[Complex64; 2]; 2],
    cache: HashMap<u64, MarkovStep>,
}

impl<'a> MarkovEvolver<'a> {
    fn new(eta: f64, params: &'a SystemParams<f64>) -> Self {
        let a = Complex64::from(0.5f64.sqrt());
        Self {
            eta,
            params,
            g0: a,
            x: Vector2::new(a, ZERO),
            e1: ZERO,
            lost: [[ZERO; 2]; 2],
            cache: HashMap::new(),
        }
    }

    fn piece(&mut self, h: f64) {
        if self.cache.len() > 4096 {
            self.cache.clear();
        }
        let (eta, params) = (self.eta, self.params);
        let step = self.cache.entry(h.to_bits()).or_insert_with(|| MarkovStep::new(eta, params, h));
        let x0 = self.x;
        let e0 = self.e1;
        let x1 = step.block * x0;
        let e1 = e0 * step.e1;
        let conj = x0.map(|z| z.conj());
        let emitted = (step.cross * conj)[1];
        self.lost[0][0] += Complex64::from(e0.norm_sqr() - e1.norm_sqr());
        self.lost[1][1] += Complex64::from(x0.norm_squared() - x1.norm_squared());
        self.lost[0][1] = step.eg_phase * (self.lost[0][1] + e0 * emitted * params.kappa);
        self.lost[1][0] = self.lost[0][1].conj();
        self.g0 *= step.g0;
        self.x = x1;
        self.e1 = e1;
    }
}

impl Evolver for MarkovEvolver<'_> {
    fn advance(&mut self, h: f64) {
        if h <= 0.0 {
            return;
        }
        let pieces = (h * self.params.kappa / MAX_STEP_KAPPA).ceil().max(1.0) as usize;
        let hp = h / pieces as f64;
        for _ in 0..pieces {
            self.piece(hp);
        }
    }

    fn flip(&mut self) {
        std::mem::swap(&mut self.g0, &mut self.x[0]);
        std::mem::swap(&mut self.x[1], &mut self.e1);
        let l = self.lost;
        self.lost = [[l[1][1], l[1][0]], [l[0][1], l[0][0]]];
    }

    fn observe(&self) -> Observation {
        let (g0, e0, g1, e1) = (self.g0, self.x[0], self.x[1], self.e1);
        Observation {
            coherence: e0 * g0.conj() + e1 * g1.conj() + self.lost[0][1],
            field: g0.conj() * g1 + e0.conj() * e1,
            photons: g1.norm_sqr() + e1.norm_sqr(),
            norm: g0.norm_sqr() + e0.norm_sqr() + g1.norm_sqr() + e1.norm_sqr() + self.lost[0][0].re + self.lost[1][1].re,
        }
    }

    fn snapshot(&self, time: f64) -> OracleState {
        OracleState {
            time,
            amp_g0: self.g0,
            amp_e0: self.x[0],
            amp_g1: self.x[1],
            amp_e1: self.e1,
            line: LineState::Emitted(self.lost),
        }
    }
}

/// Eigen-decomposition of the arrowhead matrix `[[apex, zᵀ], [z, diag(d)]]`
/// with strictly increasing `d`. Eigenvalues are returned in increasing
/// order; index 0 of each eigenvector is the apex component.
fn arrowhead(apex: f64, z: &[f64], d: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = d.len();
    if d.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NotConverged("arrowhead poles are not strictly increasing".into()));
    }
    let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = d.iter().fold(apex.abs().max(znorm), |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let active: Vec<usize> = (0..m).filter(|&j| z[j].abs() > 1e-15 * scale).collect();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(m + 1);
    for j in (0..m).filter(|j| !active.contains(j)) {
        let mut v = vec![0.0; m + 1];
        v[j + 1] = 1.0;
        pairs.push((d[j], v));
    }
    let dd: Vec<f64> = active.iter().map(|&j| d[j]).collect();
    let zz: Vec<f64> = active.iter().map(|&j| z[j]).collect();
    let p = dd.len();
    if p == 0 {
        let mut v = vec![0.0; m + 1];
        v[0] = 1.0;
        pairs.push((apex, v));
    } else {
        let lo = apex.min(dd[0]) - znorm;
        let hi = apex.max(dd[p - 1]) + znorm;
        let secular = |o: usize, mu: f64| -> (f64, f64) {
            let mut f = dd[o] + mu - apex;
            let mut fp = 1.0;
            for l in 0..p {
                let gap = mu + (dd[o] - dd[l]);
                let r = zz[l] / gap;
                f -= zz[l] * r;
                fp += r * r;
            }
            (f, fp)
        };
        for r in 0..=p {
            let (o, mut a, mut b) = if r == 0 {
                (0, (lo - dd[0]).min(-f64::MIN_POSITIVE), 0.0)
            } else if r == p {
                (p - 1, 0.0, (hi - dd[p - 1]).max(f64::MIN_POSITIVE))
            } else {
                let half = 0.5 * (dd[r] - dd[r - 1]);
                if secular(r - 1, half).0 >= 0.0 {
                    (r - 1, 0.0, half)
                } else {
                    (r, -half, 0.0)
                }
            };
            let mut mu = 0.5 * (a + b);
            for _ in 0..400 {
                let (f, fp) = secular(o, mu);
                if f == 0.0 {
                    break;
                }
                if f > 0.0 {
                    b = mu;
                } else {
                    a = mu;
                }
                let mut next = mu - f / fp;
                if !(next > a && next < b) {
                    next = 0.5 * (a + b);
                }
                let settled = (next - mu).abs() <= 2.0 * f64::EPSILON * mu.abs() || next == a || next == b;
                mu = next;
                if settled {
                    break;
                }
            }
            let mut v = vec![0.0; m + 1];
            v[0] = 1.0;
            for (l, &j) in active.iter().enumerate() {
                v[j + 1] = zz[l] / (mu + (dd[o] - dd[l]));
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            pairs.push((dd[o] + mu, v));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = DMatrix::from_fn(m + 1, m + 1, |i, j| pairs[j].1[i]);
    Ok((values, vectors))
}

/// Cavity plus discretized line, diagonalized once per run.
struct DressedLine {
    frequencies: Vec<f64>,
    /// Dressed energies `ε_j`.
    energies: Vec<f64>,
    /// Columns are dressed states; row 0 is the cavity, rows `1..` the modes.
    vectors: DMatrix<f64>,
    recurrence: f64,
}

impl DressedLine {
    fn new(params: &SystemParams<f64>, modes: usize, half_width: f64) -> Result<Self> {
        if modes < 2 {
            return Err(invalid("modes", "need at least two line modes"));
        }
        if !(half_width > 0.0) {
            return Err(invalid("half_width", "must be positive"));
        }
        let spacing = 2.0 * half_width / modes as f64;
        let frequencies: Vec<f64> = (0..modes)
            .map(|k| params.detuning - half_width + spacing * (k as f64 + 0.5))
            .collect();
        let lambda = (params.kappa * spacing / (2.0 * PI)).sqrt();
        let z = vec![lambda; modes];
        let (energies, vectors) = arrowhead(params.detuning, &z, &frequencies)?;
        Ok(Self { frequencies, energies, vectors, recurrence: 2.0 * PI / spacing })
    }
}

struct DiscreteEvolver<'a> {
    eta: f64,
    line: &'a DressedLine,
    /// Dressed eigenvalues and eigenvectors of the `{e0, dressed}` block.
    block_values: Vec<f64>,
    block_vectors: DMatrix<f64>,
    g0: Complex64,
    /// `e0` followed by dressed amplitudes with the qubit in `g`.
    a: DVector<Complex64>,
    /// Dressed amplitudes with the qubit in `e`.
    b: DVector<Complex64>,
}

impl<'a> DiscreteEvolver<'a> {
    fn new(eta: f64, params: &SystemParams<f64>, line: &'a DressedLine) -> Result<Self> {
        let z: Vec<f64> = line.vectors.row(0).iter().map(|u| params.coupling * u).collect();
        let (block_values, block_vectors) = arrowhead(eta, &z, &line.energies)?;
        let m = line.energies.len();
        let amp = Complex64::from(0.5f64.sqrt());
        let mut a = DVector::from_element(m + 1, ZERO);
        a[0] = amp;
        Ok(Self { eta, line, block_values, block_vectors, g0: amp, a, b: DVector::from_element(m, ZERO) })
    }

    fn cavity_amplitudes(&self) -> (Complex64, Complex64) {
        let row = self.line.vectors.row(0);
        let mut g1 = ZERO;
        let mut e1 = ZERO;
        for j in 0..self.b.len() {
            g1 += self.a[j + 1] * row[j];
            e1 += self.b[j] * row[j];
        }
        (g1, e1)
    }

    fn bare_line(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let u = &self.line.vectors;
        let m = self.b.len();
        let mut ground = vec![ZERO; m - 1];
        let mut excited = vec![ZERO; m - 1];
        for j in 0..m {
            let (aj, bj) = (self.a[j + 1], self.b[j]);
            for k in 1..m {
                let w = u[(k, j)];
                ground[k - 1] += aj * w;
                excited[k - 1] += bj * w;
            }
        }
        (ground, excited)
    }
}

fn real_matvec(mat: &DMatrix<f64>, v: &DVector<Complex64>, transpose: bool) -> DVector<Complex64> {
    let re = DVector::from_iterator(v.len(), v.iter().map(|z| z.re));
    let im = DVector::from_iterator(v.len(), v.iter().map(|z| z.im));
    let (r, i) = if transpose { (mat.tr_mul(&re), mat.tr_mul(&im)) } else { (mat * re, mat * im) };
    DVector::from_iterator(r.len(), r.iter().zip(i.iter()).map(|(a, b)| Complex64::new(*a, *b)))
}

impl Evolver for DiscreteEvolver<'_> {
    fn advance(&mut self, h: f64) {
        if h <= 0.0 {
            return;
        }
        let half = 0.5 * self.eta;
        self.g0 *= (I * (half * h)).exp();
        for (bj, e) in self.b.iter_mut().zip(&self.line.energies) {
            *bj *= (-I * ((e + half) * h)).exp();
        }
        let mut y = real_matvec(&self.block_vectors, &self.a, true);
        for (yi, w) in y.iter_mut().zip(&self.block_values) {
            *yi *= (-I * ((w - half) * h)).exp();
        }
        self.a = real_matvec(&self.block_vectors, &y, false);
    }

    fn flip(&mut self) {
        std::mem::swap(&mut self.g0, &mut self.a[0]);
        for j in 0..self.b.len() {
            std::mem::swap(&mut self.a[j + 1], &mut self.b[j]);
        }
    }

    fn observe(&self) -> Observation {
        let (g1, e1) = self.cavity_amplitudes();
        let e0 = self.a[0];
        let line: Complex64 = (0..self.b.len()).map(|j| self.b[j] * self.a[j + 1].conj()).sum();
        Observation {
            coherence: e0 * self.g0.conj() + line,
            field: self.g0.conj() * g1 + e0.conj() * e1,
            photons: g1.norm_sqr() + e1.norm_sqr(),
            norm: self.g0.norm_sqr() + self.a.norm_squared() + self.b.norm_squared(),
        }
    }

    fn snapshot(&self, time: f64) -> OracleState {
        let (g1, e1) = self.cavity_amplitudes();
        let (ground, excited) = self.bare_line();
        OracleState {
            time,
            amp_g0: self.g0,
            amp_e0: self.a[0],
            amp_g1: g1,
            amp_e1: e1,
            line: LineState::Modes { frequencies: self.line.frequencies.clone(), ground, excited },
        }
    }
}

fn check_inputs(params: &SystemParams<f64>, seq: &PulseSequence<f64>, times: &[f64]) -> Result<Vec<f64>> {
    if params.dephasing != 0.0 {
        return Err(Error::Unsupported("the oracle evolves without intrinsic dephasing".into()));
    }
    if !(params.kappa > 0.0) || !(params.coupling >= 0.0) {
        return Err(invalid("params", "need κ > 0 and g ≥ 0"));
    }
    seq.check_order()?;
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("t_grid", "times must be finite, non-negative and sorted"));
    }
    let pulses = seq.pulse_times();
    if pulses.iter().any(|t| *t < 0.0) {
        return Err(invalid("seq", "pulses must follow the preparation at t = 0"));
    }
    Ok(pulses)
}

fn check_line(params: &SystemParams<f64>, line: &DressedLine, times: &[f64]) -> Result<()> {
    if (params.kappa_out - params.kappa).abs() > 1e-9 * params.kappa {
        return Err(Error::Unsupported("the discretized line needs all loss through the output port".into()));
    }
    if times.last().copied().unwrap_or(0.0) >= line.recurrence {
        return Err(Error::Unsupported(format!(
            "run length exceeds the line recurrence time {:e}; use more modes",
            line.recurrence
        )));
    }
    Ok(())
}

/// Runs the evolver through the pulses and output times, calling `visit`
/// after the state reaches each output time with the number of pulses applied.
fn drive<E: Evolver>(
    ev: &mut E,
    pulses: &[f64],
    times: &[f64],
    kappa: f64,
    mut visit: impl FnMut(usize, &E, usize),
) -> Result<()> {
    let mut now = 0.0;
    let mut p = 0;
    for (i, &t) in times.iter().enumerate() {
        while p < pulses.len() && pulses[p] <= t {
            ev.advance(pulses[p] - now);
            ev.flip();
            now = pulses[p];
            p += 1;
        }
        ev.advance(t - now);
        now = t;
        let drift = (ev.observe().norm - 1.0).abs();
        if drift > NORM_DRIFT_RATE * (1.0 + kappa * t) {
            return Err(Error::NotConverged(format!("norm drifted by {drift:e} at t = {t:e}")));
        }
        visit(i, ev, p);
    }
    Ok(())
}

/// Evolves one qubit with static detuning `η` and records its state at each
/// time of `t_grid` (sorted, non-negative; pulses at a sample time are
/// applied before sampling).
pub fn evolve_fixed_eta(
    params: &SystemParams<f64>,
    eta: f64,
    seq: &PulseSequence<f64>,
    t_grid: &[f64],
    line: LineMode,
) -> Result<Trajectory> {
    let pulses = check_inputs(params, seq, t_grid)?;
    let mut states = Vec::with_capacity(t_grid.len());
    match line {
        LineMode::Markovian => {
            let mut ev = MarkovEvolver::new(eta, params);
            drive(&mut ev, &pulses, t_grid, params.kappa, |i, e, _| states.push(e.snapshot(t_grid[i])))?;
        }
        LineMode::Discretized { modes, half_width } => {
            let dressed = DressedLine::new(params, modes, half_width)?;
            check_line(params, &dressed, t_grid)?;
            let mut ev = DiscreteEvolver::new(eta, params, &dressed)?;
            drive(&mut ev, &pulses, t_grid, params.kappa, |i, e, _| states.push(e.snapshot(t_grid[i])))?;
        }
    }
    Ok(Trajectory { eta, states })
}

/// Quadrature rule for averages over the static detuning distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaQuadrature {
    pub nodes: Vec<f64>,
    /// Positive weights summing to one.
    pub weights: Vec<f64>,
}

impl EtaQuadrature {
    /// Gauss–Hermite rule of the given order.
    pub fn gauss_hermite(t2star: f64, order: usize) -> Result<Self> {
        if !(t2star > 0.0) || order == 0 {
            return Err(invalid("quadrature", "need T2* > 0 and a positive order"));
        }
        let rule = GaussHermite::get(order);
        let pairs: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| (2.0 * x / t2star, *w))
            .collect();
        Ok(Self::normalized(pairs))
    }

    /// Composite Gauss–Legendre rule: uniform panels no wider than `κ` (or
    /// half the distribution width) within `64κ` of the cavity resonance,
    /// then panels doubling in width out to `|η| = 12σ`.
    pub fn resonant(params: &SystemParams<f64>, panel_order: usize) -> Result<Self> {
        if !(params.t2star > 0.0) || !(params.kappa > 0.0) || panel_order == 0 {
            return Err(invalid("quadrature", "need T2* > 0, κ > 0 and a positive order"));
        }
        let sigma = 2f64.sqrt() / params.t2star;
        let edge = 12.0 * sigma;
        let d = params.detuning;
        let width = params.kappa.min(0.5 * sigma);
        let reach = 64.0 * params.kappa;
        let mut cuts = vec![-edge, edge];
        let steps = (reach / width).ceil() as i64;
        cuts.extend((-steps..=steps).map(|k| d + width * k as f64));
        let mut w = 2.0 * steps as f64 * width;
        while w < 2.0 * edge {
            cuts.push(d - w);
            cuts.push(d + w);
            w *= 2.0;
        }
        cuts.retain(|c| c.abs() <= edge);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let (x, wx) = gauss_legendre(panel_order);
        let mut pairs = Vec::with_capacity(panel_order * cuts.len());
        for pan in cuts.windows(2) {
            let (a, b) = (pan[0], pan[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(&wx) {
                let eta = mid + half * xi;
                pairs.push((eta, half * wi * eta_density(eta, params.t2star)));
            }
        }
        Ok(Self::normalized(pairs))
    }

    fn normalized(pairs: Vec<(f64, f64)>) -> Self {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1 / total).collect() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Settings for [`averaged_observables`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    pub line: LineMode,
    pub quadrature: EtaQuadrature,
}

impl OracleOptions {
    /// Markovian line with an 8-point resonant composite rule.
    pub fn markovian(params: &SystemParams<f64>) -> Result<Self> {
        Ok(Self { line: LineMode::Markovian, quadrature: EtaQuadrature::resonant(params, 8)? })
    }
}

/// Ensemble averages over the static detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedObservables {
    pub t: Vec<f64>,
    /// `C(t) = ⟨σ₋⟩_t / ⟨σ₋⟩₀`.
    pub coherence: Vec<Complex64>,
    /// `⟨ã⟩_t`.
    pub field: Vec<Complex64>,
    /// `⟨n_c⟩_t`.
    pub photons: Vec<f64>,
    /// Echo times `nτ`, `n ≥ 1`, of the sequence.
    pub echo_times: Vec<f64>,
    /// `C̃(nτ) = 𝒦ⁿ C(nτ)`, with `𝒦` conjugating after an odd pulse count.
    pub echo_envelope: Vec<Complex64>,
    /// Line frequencies of the discretized mode (empty otherwise).
    pub line_frequencies: Vec<f64>,
    /// Averaged `⟨b_k⟩` after the last time of the grid.
    pub line_field: Vec<Complex64>,
    /// Largest `|norm − 1|` met over all nodes and times.
    pub max_norm_drift: f64,
}

impl AveragedObservables {
    /// Signal `S = 2 [Σ_k |⟨b_k⟩|²]^{1/2}` carried by the line modes.
    pub fn line_signal(&self) -> Option<f64> {
        if self.line_field.is_empty() {
            return None;
        }
        Some(2.0 * self.line_field.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt())
    }

    /// Largest excess `|⟨ã⟩|² − ⟨n_c⟩(1 − ⟨n_c⟩)` over the grid.
    pub fn positivity_excess(&self) -> f64 {
        self.field
            .iter()
            .zip(&self.photons)
            .map(|(a, n)| a.norm_sqr() - n * (1.0 - n))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Accum {
    coherence: Vec<Complex64>,
    field: Vec<Complex64>,
    photons: Vec<f64>,
    line: Vec<Complex64>,
    drift: f64,
}

impl Accum {
    fn zeros(n: usize, modes: usize) -> Self {
        Self {
            coherence: vec![ZERO; n],
            field: vec![ZERO; n],
            photons: vec![0.0; n],
            line: vec![ZERO; modes],
            drift: 0.0,
        }
    }

    fn add(&mut self, other: &Accum) {
        for (a, b) in self.coherence.iter_mut().zip(&other.coherence) {
            *a += b;
        }
        for (a, b) in self.field.iter_mut().zip(&other.field) {
            *a += b;
        }
        for (a, b) in self.photons.iter_mut().zip(&other.photons) {
            *a += b;
        }
        for (a, b) in self.line.iter_mut().zip(&other.line) {
            *a += b;
        }
        self.drift = self.drift.max(other.drift);
    }
}

fn sample_node<E: Evolver>(
    ev: &mut E,
    pulses: &[f64],
    times: &[f64],
    kappa: f64,
    weight: f64,
    acc: &mut Accum,
) -> Result<()> {
    drive(ev, pulses, times, kappa, |i, e, _| {
        let o = e.observe();
        acc.coherence[i] += o.coherence * weight;
        acc.field[i] += o.field * weight;
        acc.photons[i] += o.photons * weight;
        acc.drift = acc.drift.max((o.norm - 1.0).abs());
    })
}

/// Averages the oracle over the `η` rule on `t_grid` and at the echo times.
/// Nodes run in parallel; partial sums are combined in a fixed order, so
/// results do not depend on the thread count.
pub fn averaged_observables(
    params: &SystemParams<f64>,
    seq: &PulseSequence<f64>,
    t_grid: &[f64],
    options: &OracleOptions,
) -> Result<AveragedObservables> {
    check_inputs(params, seq, t_grid)?;
    let pulses = seq.pulse_times();
    let echo_times = seq.echo_times();
    let mut times: Vec<f64> = t_grid.iter().chain(&echo_times).copied().chain([0.0]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let index = |t: f64| times.binary_search_by(|x| x.total_cmp(&t)).expect("merged time");
    let dressed = match options.line {
        LineMode::Markovian => None,
        LineMode::Discretized { modes, half_width } => {
            let d = DressedLine::new(params, modes, half_width)?;
            check_line(params, &d, &times)?;
            Some(Arc::new(d))
        }
    };
    let modes = dressed.as_ref().map_or(0, |d| d.frequencies.len());
    let quad = &options.quadrature;
    let partial: Vec<Accum> = quad
        .nodes
        .par_chunks(CHUNK)
        .zip(quad.weights.par_chunks(CHUNK))
        .map(|(nodes, weights)| -> Result<Accum> {
            let mut acc = Accum::zeros(times.len(), modes);
            for (&eta, &w) in nodes.iter().zip(weights) {
                match &dressed {
                    None => {
                        let mut ev = MarkovEvolver::new(eta, params);
                        sample_node(&mut ev, &pulses, &times, params.kappa, w, &mut acc)?;
                    }
                    Some(line) => {
                        let mut ev = DiscreteEvolver::new(eta, params, line)?;
                        sample_node(&mut ev, &pulses, &times, params.kappa, w, &mut acc)?;
                        let last = times.last().copied().unwrap_or(0.0);
                        let state = ev.snapshot(last);
                        for (a, b) in acc.line.iter_mut().zip(state.line_field()) {
                            *a += b * w;
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Accum::zeros(times.len(), modes);
    for p in &partial {
        total.add(p);
    }
    let c0 = total.coherence[index(0.0)];
    let pick = |t: f64| index(t);
    let coherence: Vec<Complex64> = t_grid.iter().map(|&t| total.coherence[pick(t)] / c0).collect();
    let echo_envelope = echo_times
        .iter()
        .map(|&t| {
            let c = total.coherence[pick(t)] / c0;
            let flips = pulses.iter().filter(|&&p| p <= t).count();
            if flips % 2 == 1 {
                c.conj()
            } else {
                c
            }
        })
        .collect();
    Ok(AveragedObservables {
        t: t_grid.to_vec(),
        coherence,
        field: t_grid.iter().map(|&t| total.field[pick(t)]).collect(),
        photons: t_grid.iter().map(|&t| total.photons[pick(t)]).collect(),
        echo_times,
        echo_envelope,
        line_frequencies: dressed.as_ref().map_or(Vec::new(), |d| d.frequencies.clone()),
        line_field: total.line,
        max_norm_drift: total.drift,
    })
}

/// Closed-form predictions on the oracle's grid, in the oracle's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForms {
    pub envelope: EchoEnvelope,
    pub t: Vec<f64>,
    /// `C(t) = Σ_n G_n(t − nτ) 𝒦ⁿ C̃(nτ)` using the revival nearest to `t`.
    pub coherence: Vec<Complex64>,
    /// Revival train of the cavity field for `⟨σ_x⟩₀ = 1`.
    pub field: Vec<Complex64>,
}

/// Builds the closed-form envelope, coherence and field for a Hahn or CPMG
/// run with static noise only, dropping the splitting phases as the oracle does.
pub fn closed_forms(
    params: &SystemParams<f64>,
    seq: &PulseSequence<f64>,
    t_grid: &[f64],
    mode: BackactionMode,
) -> Result<ClosedForms> {
    let frame = SystemParams { qubit_splitting: 0.0, ..*params };
    let spectrum = SpectralDensity::static_only(params.t2star);
    let envelope = full_envelope(seq, &frame, &spectrum, mode)?;
    let tau = envelope.tau;
    let n_max = envelope.echoes();
    let mut coherence = vec![ZERO; t_grid.len()];
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_max + 1];
    for (i, &t) in t_grid.iter().enumerate() {
        let n = ((t / tau).round().max(0.0) as usize).min(n_max);
        groups[n].push(i);
    }
    for (n, idx) in groups.iter().enumerate().filter(|(_, g)| !g.is_empty()) {
        let shifted: Vec<f64> = idx.iter().map(|&i| t_grid[i] - n as f64 * tau).collect();
        let shape = revival_shape(n, tau, &shifted, &frame, mode)?;
        let amp = if n % 2 == 1 { envelope.values[n].conj() } else { envelope.values[n] };
        for (&i, v) in idx.iter().zip(&shape.values) {
            coherence[i] = v * amp;
        }
    }
    let field = revival_train(&envelope, &frame, 1.0, t_grid, WavepacketForm::Exact)?.values;
    Ok(ClosedForms { envelope, t: t_grid.to_vec(), coherence, field })
}

/// Maximum and mean relative deviation of one observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub observable: String,
    pub max: f64,
    pub mean: f64,
    pub samples: usize,
}

/// Oracle-versus-closed-form deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub deviations: Vec<Deviation>,
}

impl ComparisonReport {
    pub fn get(&self, observable: &str) -> Option<&Deviation> {
        self.deviations.iter().find(|d| d.observable == observable)
    }

    /// CSV with columns `observable,max,mean,samples`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("observable,max,mean,samples\n");
        for d in &self.deviations {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{}", d.observable, d.max, d.mean, d.samples);
        }
        out
    }
}

fn deviation(name: &str, errors: impl Iterator<Item = f64>) -> Deviation {
    let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for e in errors {
        max = max.max(e);
        sum += e;
        n += 1;
    }
    Deviation { observable: name.to_string(), max, mean: if n > 0 { sum / n as f64 } else { 0.0 }, samples: n }
}

fn peak_relative(name: &str, oracle: &[Complex64], analytic: &[Complex64]) -> Deviation {
    let peak = analytic.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    deviation(name, oracle.iter().zip(analytic).map(|(o, a)| (o - a).norm() / peak))
}

/// Relative deviations: the echo envelope per echo, the coherence and the
/// cavity field relative to their peak magnitudes.
pub fn compare_to_closed_forms(oracle: &AveragedObservables, analytic: &ClosedForms) -> ComparisonReport {
    let n = oracle.echo_envelope.len().min(analytic.envelope.echoes());
    let envelope = deviation(
        "envelope",
        (1..=n).map(|k| {
            let a = analytic.envelope.values[k];
            (oracle.echo_envelope[k - 1] - a).norm() / a.norm().max(f64::MIN_POSITIVE)
        }),
    );
    let m = oracle.t.len().min(analytic.t.len());
    ComparisonReport {
        deviations: vec![
            envelope,
            peak_relative("coherence", &oracle.coherence[..m], &analytic.coherence[..m]),
            peak_relative("field", &oracle.field[..m], &analytic.field[..m]),
        ],
    }
}

// SPDX-License-Identifier: Apache-2.0
//! Quadrature rules: adaptive Gauss–Kronrod on intervals and Gauss–Hermite
//! rules for Gaussian weights.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be accumulated by the quadrature routines.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<V: QuadValue, F: Fn(f64) -> V>(f: &F, a: f64, b: f64) -> (V, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron = kron + s * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + s * WG[j / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).magnitude())
}

struct Panel<V> {
    a: f64,
    b: f64,
    value: V,
    err: f64,
}

impl<V> PartialEq for Panel<V> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<V> Eq for Panel<V> {}
impl<V> PartialOrd for Panel<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Panel<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-11, abs: 1e-300, max_panels: 20_000 }
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration over `[a, b]`,
/// with the interval first split at the supplied breakpoints.
pub fn integrate<V: QuadValue, F: Fn(f64) -> V>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<V> {
    if a == b {
        return Ok(V::zero());
    }
    let mut cuts: Vec<f64> = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut heap = BinaryHeap::new();
    let mut total = V::zero();
    let mut total_err = 0.0;
    for w in cuts.windows(2) {
        let (value, err) = gk15(&f, w[0], w[1]);
        total = total + value;
        total_err += err;
        heap.push(Panel { a: w[0], b: w[1], value, err });
    }
    while total_err > tol.abs.max(tol.rel * total.magnitude()) {
        if heap.len() >= tol.max_panels {
            return Err(Error::NotConverged(format!(
                "adaptive quadrature on [{a}, {b}] reached {} panels with error {total_err:e}",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (lv, le) = gk15(&f, worst.a, mid);
        let (rv, re) = gk15(&f, mid, worst.b);
        total = total - worst.value + lv + rv;
        total_err += le + re - worst.err;
        heap.push(Panel { a: worst.a, b: mid, value: lv, err: le });
        heap.push(Panel { a: mid, b: worst.b, value: rv, err: re });
    }
    let mut sum = V::zero();
    for p in heap.iter() {
        sum = sum + p.value;
    }
    Ok(sum)
}

/// Integral over `[a, ∞)` using the split `[a, a + scale]` plus the map
/// `ω = a + scale / u` on the tail.
pub fn integrate_to_infinity<V: QuadValue, F: Fn(f64) -> V>(
    f: F,
    a: f64,
    scale: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<V> {
    let head = integrate(&f, a, a + scale, breaks, tol)?;
    let tail_tol = Tolerance { abs: tol.abs.max(tol.rel * head.magnitude()), ..tol };
    let tail = integrate(
        |u: f64| {
            if u <= 0.0 {
                V::zero()
            } else {
                f(a + scale / u) * (scale / (u * u))
            }
        },
        0.0,
        1.0,
        &[],
        tail_tol,
    )?;
    Ok(head + tail)
}

/// Gauss–Hermite rule for the weight `exp(-x²)` on the real line.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds (or fetches from the process-wide cache) the rule of the given order.
    pub fn get(order: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("cache lock").get(&order) {
            return rule.clone();
        }
        let rule = Arc::new(Self::compute(order));
        cache.lock().expect("cache lock").insert(order, rule.clone());
        rule
    }

    fn compute(n: usize) -> GaussHermite {
        assert!(n >= 1, "Gauss–Hermite order must be positive");
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let scale_step = 1e150_f64;
        let log_step = scale_step.ln();
        let m = n.div_ceil(2);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut log_w = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                let mut exponent = 0.0;
                for j in 1..=n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                    if p1.abs() > scale_step {
                        p1 /= scale_step;
                        p2 /= scale_step;
                        exponent += log_step;
                    }
                }
                let pp = (2.0 * nf).sqrt() * p2;
                let deflation: f64 = x[..i].iter().map(|&r| 1.0 / (z - r) + 1.0 / (z + r)).sum();
                let z1 = z;
                z = z1 - p1 / (pp - p1 * deflation);
                log_w = 2f64.ln() - 2.0 * (pp.abs().ln() + exponent);
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = log_w.exp();
            w[n - 1 - i] = w[i];
        }
        GaussHermite { nodes: x, weights: w }
    }
}


/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for &n in &[1usize, 2, 7, 200, 1600] {
            let r = GaussHermite::get(n);
            let m0: f64 = r.weights.iter().sum();
            let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
            let sp = std::f64::consts::PI.sqrt();
            assert!((m0 - sp).abs() < 1e-12, "order {n}: {m0}");
            if n > 1 {
                assert!((m2 - 0.5 * sp).abs() < 1e-12, "order {n}: {m2}");
            }
        }
    }

    #[test]
    fn hermite_nodes_are_ordered_roots() {
        let r = GaussHermite::get(64);
        assert!(r.nodes.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(9);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(16)).sum();
        assert!((v - 2.0 / 17.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_kronrod_oscillatory() {
        let v = integrate(|x: f64| (10.0 * x).cos(), 0.0, 3.0, &[], Tolerance::default()).unwrap();
        assert!((v - (30.0f64).sin() / 10.0).abs() < 1e-13);
    }

    #[test]
    fn semi_infinite_lorentzian() {
        let v = integrate_to_infinity(|x: f64| 1.0 / (1.0 + x * x), 0.0, 10.0, &[], Tolerance::default()).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
    }
}

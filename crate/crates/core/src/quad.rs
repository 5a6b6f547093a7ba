//! Adaptive Gauss–Kronrod quadrature, nested and improper variants, fixed
//! Gauss–Legendre panels and the product-of-exponentials law.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::Pchip;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Bisection depth limit for any one starting interval.
    pub max_depth: u32,
    /// Upper limit of an improper integral, in decay lengths 1/c.
    pub truncation_factor: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            rel_tol: 1e-6,
            abs_tol: 1e-10,
            max_depth: 40,
            truncation_factor: 40.0,
        }
    }
}

impl QuadSpec {
    pub fn with_tol(rel_tol: f64, abs_tol: f64) -> Self {
        QuadSpec {
            rel_tol,
            abs_tol,
            ..QuadSpec::default()
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Integral estimate. `converged` is false when the depth or segment budget
/// ran out before the tolerance was met, or the integrand produced NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl Quad {
    pub fn exact(value: f64) -> Self {
        Quad {
            value,
            error: 0.0,
            converged: true,
        }
    }
}

impl std::ops::Add for Quad {
    type Output = Quad;

    fn add(self, other: Quad) -> Quad {
        Quad {
            value: self.value + other.value,
            error: self.error + other.error,
            converged: self.converged && other.converged,
        }
    }
}

const MAX_SEGMENTS: usize = 4000;

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

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Seg {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Seg {
    fn eq(&self, o: &Self) -> bool {
        self.error.total_cmp(&o.error) == Ordering::Equal
    }
}
impl Eq for Seg {}
impl PartialOrd for Seg {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Seg {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Adaptive integration over consecutive pieces [p0,p1], [p1,p2], … with a
/// single global error budget. Breakpoints must be non-decreasing.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], spec: &QuadSpec) -> Quad {
    let mut heap = BinaryHeap::new();
    let mut done = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let (value, error) = gk15(&mut f, a, b);
        heap.push(Seg {
            a,
            b,
            value,
            error,
            depth: 0,
        });
    }
    let total = |heap: &BinaryHeap<Seg>, done: &[Seg]| {
        let v: f64 = heap.iter().chain(done.iter()).map(|s| s.value).sum();
        let e: f64 = heap.iter().chain(done.iter()).map(|s| s.error).sum();
        (v, e)
    };
    let (mut value, mut error) = total(&heap, &done);
    let mut n = heap.len();
    let mut converged = false;
    loop {
        if !value.is_finite() || !error.is_finite() {
            break;
        }
        if error <= spec.target(value) {
            converged = true;
            break;
        }
        if n >= MAX_SEGMENTS {
            break;
        }
        let Some(s) = heap.pop() else { break };
        if s.depth >= spec.max_depth {
            done.push(s);
            continue;
        }
        let m = 0.5 * (s.a + s.b);
        let (v1, e1) = gk15(&mut f, s.a, m);
        let (v2, e2) = gk15(&mut f, m, s.b);
        value += v1 + v2 - s.value;
        error += e1 + e2 - s.error;
        heap.push(Seg {
            a: s.a,
            b: m,
            value: v1,
            error: e1,
            depth: s.depth + 1,
        });
        heap.push(Seg {
            a: m,
            b: s.b,
            value: v2,
            error: e2,
            depth: s.depth + 1,
        });
        n += 1;
        if n % 64 == 0 {
            // resum to keep the running totals free of drift
            (value, error) = total(&heap, &done);
        }
    }
    let (v, e) = total(&heap, &done);
    Quad {
        value: v,
        error: e,
        converged: converged && v.is_finite(),
    }
}

pub fn integrate_1d<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Quad {
    if a == b {
        return Quad::exact(0.0);
    }
    if a > b {
        let q = integrate_pieces(f, &[b, a], spec);
        return Quad {
            value: -q.value,
            ..q
        };
    }
    integrate_pieces(f, &[a, b], spec)
}

/// ∫_a^∞ f for an integrand bounded by a multiple of e^{-c x}. The range is
/// cut at `truncation_factor / c` and extended while the estimated tail
/// mass |f(L)|/c exceeds `abs_tol`.
pub fn integrate_improper<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    c: f64,
    spec: &QuadSpec,
) -> Result<Quad> {
    if !(c > 0.0) {
        return Err(Error::Divergent(format!(
            "improper integral needs a positive decay rate, got {c}"
        )));
    }
    let step = spec.truncation_factor / c;
    let mut lo = a;
    let mut out = Quad::exact(0.0);
    for _ in 0..16 {
        let hi = lo + step;
        out = out + integrate_1d(&mut f, lo, hi, spec);
        if (f(hi).abs() / c) <= spec.abs_tol {
            return Ok(out);
        }
        lo = hi;
    }
    out.converged = false;
    Ok(out)
}

/// ∫_{ax}^{bx} ∫_{y_lo(x)}^{y_hi(x)} f(x, y) dy dx, inner tolerance tightened tenfold.
pub fn integrate_2d<F, L, H>(f: F, ax: f64, bx: f64, y_lo: L, y_hi: H, spec: &QuadSpec) -> Quad
where
    F: Fn(f64, f64) -> f64,
    L: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    let inner_ok = Cell::new(true);
    let inner_spec = QuadSpec {
        rel_tol: spec.rel_tol * 0.1,
        abs_tol: spec.abs_tol * 0.1,
        ..*spec
    };
    let q = integrate_1d(
        |x| {
            let r = integrate_1d(|y| f(x, y), y_lo(x), y_hi(x), &inner_spec);
            if !r.converged {
                inner_ok.set(false);
            }
            r.value
        },
        ax,
        bx,
        spec,
    );
    Quad {
        converged: q.converged && inner_ok.get(),
        ..q
    }
}

/// ∫∫∫ f(x, y, z) over nested bounds.
#[allow(clippy::too_many_arguments)]
pub fn integrate_3d<F, YL, YH, ZL, ZH>(
    f: F,
    ax: f64,
    bx: f64,
    y_lo: YL,
    y_hi: YH,
    z_lo: ZL,
    z_hi: ZH,
    spec: &QuadSpec,
) -> Quad
where
    F: Fn(f64, f64, f64) -> f64,
    YL: Fn(f64) -> f64,
    YH: Fn(f64) -> f64,
    ZL: Fn(f64, f64) -> f64,
    ZH: Fn(f64, f64) -> f64,
{
    let inner_ok = Cell::new(true);
    let mid_spec = QuadSpec {
        rel_tol: spec.rel_tol * 0.1,
        abs_tol: spec.abs_tol * 0.1,
        ..*spec
    };
    let q = integrate_1d(
        |x| {
            let r = integrate_2d(
                |y, z| f(x, y, z),
                y_lo(x),
                y_hi(x),
                |y| z_lo(x, y),
                |y| z_hi(x, y),
                &mid_spec,
            );
            if !r.converged {
                inner_ok.set(false);
            }
            r.value
        },
        ax,
        bx,
        spec,
    );
    Quad {
        converged: q.converged && inner_ok.get(),
        ..q
    }
}

/// n-point Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on [a, b]: `panels` equal panels of `order` nodes.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(lo + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        CompositeRule { nodes, weights }
    }

    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// ∫₀^ρ e^{−c r} r dr, stable for small cρ.
pub fn radial_exp_moment(c: f64, rho: f64) -> f64 {
    if !(rho > 0.0) {
        return 0.0;
    }
    let t = c * rho;
    if t < 1e-3 {
        // Σ_{k≥2} (−1)^k (k−1) t^k / k!, divided by t²
        let series = 0.5 - t / 3.0 + t * t / 8.0 - t * t * t / 30.0;
        return rho * rho * series;
    }
    (1.0 - (-t).exp() * (1.0 + t)) / (c * c)
}

fn log_sub_spec() -> QuadSpec {
    QuadSpec::with_tol(1e-10, 1e-300)
}

/// k(w) = ∫₀^∞ x⁻¹ e^{−x − w/x} dx, the density of the product of two
/// unit-mean exponentials. Evaluated in v = ln x.
pub fn unit_product_kernel(w: f64) -> f64 {
    if !(w > 0.0) {
        return if w == 0.0 { f64::INFINITY } else { 0.0 };
    }
    let lw = w.ln();
    let peak = 0.5 * lw;
    let lo = (lw - 4.0).min(peak - 4.0);
    let hi = 4.0f64.max(peak + 4.0);
    integrate_pieces(
        |v: f64| (-(v.exp()) - w * (-v).exp()).exp(),
        &[lo, peak.clamp(lo, hi), hi],
        &log_sub_spec(),
    )
    .value
}

/// P(W > w) = ∫₀^∞ e^{−x − w/x} dx for W a product of unit-mean exponentials.
pub fn unit_product_tail(w: f64) -> f64 {
    if !(w > 0.0) {
        return 1.0;
    }
    let lw = w.ln();
    let peak = 0.5 * lw;
    let lo = (-42.0f64).max((lw - 4.0).min(peak - 4.0));
    let hi = 4.0f64.max(peak + 4.0);
    integrate_pieces(
        |v: f64| (v - v.exp() - w * (-v).exp()).exp(),
        &[lo, peak.clamp(lo, hi), hi],
        &log_sub_spec(),
    )
    .value
}

/// Density of h_s h_r with h_s ~ Exp(mean a), h_r ~ Exp(mean b).
pub fn product_exp_pdf(z: f64, mean_a: f64, mean_b: f64) -> f64 {
    if !(z > 0.0) {
        return 0.0;
    }
    let ab = mean_a * mean_b;
    unit_product_kernel(z / ab) / ab
}

pub fn product_exp_sf(z: f64, mean_a: f64, mean_b: f64) -> f64 {
    unit_product_tail(z / (mean_a * mean_b))
}

const LN_W_MIN: f64 = -35.0;
const LN_W_MAX: f64 = 6.0;

/// Fixed trapezoid rule in u = ln w for E[G(W)] with W a unit-mean product of
/// exponentials: Σ k(e^u) e^u h G(e^u).
#[derive(Debug, Clone)]
pub struct ProductExpRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ProductExpRule {
    pub fn new() -> Self {
        Self::with_step(0.1)
    }

    pub fn with_step(h: f64) -> Self {
        let n = ((LN_W_MAX - LN_W_MIN) / h).round() as usize;
        let h = (LN_W_MAX - LN_W_MIN) / n as f64;
        let mut points = Vec::with_capacity(n + 1);
        let mut weights = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let u = LN_W_MIN + i as f64 * h;
            let w = u.exp();
            let edge = if i == 0 || i == n { 0.5 } else { 1.0 };
            points.push(w);
            weights.push(edge * h * w * unit_product_kernel(w));
        }
        ProductExpRule { points, weights }
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&w, &q)| q * g(w))
            .sum()
    }
}

impl Default for ProductExpRule {
    fn default() -> Self {
        Self::new()
    }
}

/// Tabulated [`unit_product_tail`], monotone-cubic in (ln w, ln tail).
#[derive(Debug, Clone)]
pub struct ProductTailTable {
    table: Pchip,
    ln_hi: f64,
}

impl ProductTailTable {
    pub fn new() -> Self {
        let lo = -40.0;
        let hi = 2000f64.ln();
        let n = 1200;
        let xs: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&u| unit_product_tail(u.exp()).max(1e-300).ln())
            .collect();
        ProductTailTable {
            table: Pchip::new(xs, ys),
            ln_hi: hi,
        }
    }

    pub fn eval(&self, w: f64) -> f64 {
        if !(w > 0.0) {
            return 1.0;
        }
        let u = w.ln();
        if u > self.ln_hi {
            return 0.0;
        }
        if u < self.table.x_min() {
            return 1.0;
        }
        self.table.eval(u).exp().min(1.0)
    }
}

impl Default for ProductTailTable {
    fn default() -> Self {
        Self::new()
    }
}

//! Quadrature engine for the typical user of a PPP network of base stations.

use std::f64::consts::PI;

use crate::channel::MeanGains;
use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::params::{Scenario, SystemParams};
use crate::quad::{
    gauss_legendre, integrate_1d, integrate_improper, integrate_pieces, radial_exp_moment,
    ProductTailTable, Quad, QuadSpec,
};

const ETA_LN_LO: f64 = -6.907_755_278_982_137; // ln 1e-3
const ETA_LN_HI: f64 = 23.025_850_929_940_457; // ln 1e10
const ETA_PER_DECADE: usize = 26;
const XI_LN_LO: f64 = -4.605_170_185_988_091; // ln 1e-2
const XI_LN_HI: f64 = 18.420_680_743_952_367; // ln 1e8
const XI_PER_DECADE: usize = 24;
const PANEL_ORDER: usize = 6;

/// (λ_Y^L, λ̃_Y^N, λ_Y^{N_I}) at distance ξ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsDensities {
    pub los: f64,
    pub reflective_nlos: f64,
    pub idle_nlos: f64,
}

/// Existence probabilities. `p_nr` is exactly 1 whenever the mean number of
/// reflective NLoS BSs over the plane diverges, flagged by `p_nr_divergent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExistsProbs {
    pub p_l: f64,
    pub p_nr: f64,
    pub p_nr_divergent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssocProbs {
    pub direct: f64,
    pub reflected: f64,
    pub blind: f64,
}

/// Monotone table of y(x) > 0, interpolated in (ln x, ln y).
#[derive(Debug, Clone)]
struct LogLogTable {
    table: Pchip,
}

impl LogLogTable {
    fn new(ln_x: Vec<f64>, y: &[f64]) -> Self {
        let ln_y = y.iter().map(|v| v.max(1e-300).ln()).collect();
        LogLogTable {
            table: Pchip::new(ln_x, ln_y),
        }
    }

    fn eval_ln(&self, ln_x: f64) -> f64 {
        self.table.eval(ln_x).exp()
    }
}

#[derive(Debug, Clone)]
pub struct MultiCellContext {
    pub params: SystemParams,
    pub quad: QuadSpec,
    pub lambda_y: f64,
    pub c: f64,
    pub assoc_const: f64,
    pub p_rm: f64,
    pub p_l: f64,
    pub gains: MeanGains,
    /// F_{η0} on a log grid of η.
    eta_cdf: Pchip,
    /// ∫_{ξ0}^∞ ξ^{1−β} e^{−cξ} dξ
    j_table: LogLogTable,
    /// ∫_{ξ0}^∞ (1 − e^{−cξ}) H(ξ) ξ dξ for the Q2 and Q4 kernels
    g2_table: Option<LogLogTable>,
    g4_table: Option<LogLogTable>,
    /// ∫ f_{r0} w r^{−β} dr over r ≥ ε, for the power-law tails
    tail_m2: f64,
    tail_m4: f64,
    tail: ProductTailTable,
    converged: bool,
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi - lo) / std::f64::consts::LN_10 * per_decade as f64).ceil() as usize;
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

impl MultiCellContext {
    pub fn new(params: SystemParams, quad: QuadSpec) -> Result<Self> {
        let Scenario::MultiCell { lambda_y } = params.scenario else {
            return Err(Error::Scenario(
                "multi-cell engine needs a multi_cell scenario",
            ));
        };
        let c = params.los_decay_rate();
        if !(c > 0.0) {
            return Err(Error::Divergent(
                "multi-cell integrals need a positive blockage density".into(),
            ));
        }
        let p_rm = -(-2.0 * PI * params.lambda_r / (c * c)).exp_m1();
        let p_l = -(-2.0 * PI * lambda_y / (c * c)).exp_m1();
        let mut ctx = MultiCellContext {
            assoc_const: params.assoc_const(),
            gains: MeanGains::new(&params),
            params,
            quad,
            lambda_y,
            c,
            p_rm,
            p_l,
            eta_cdf: Pchip::new(vec![0.0, 1.0], vec![0.0, 0.0]),
            j_table: LogLogTable::new(vec![0.0, 1.0], &[1.0, 1.0]),
            g2_table: None,
            g4_table: None,
            tail_m2: 0.0,
            tail_m4: 0.0,
            tail: ProductTailTable::new(),
            converged: true,
        };
        ctx.build_tables();
        Ok(ctx)
    }

    fn build_tables(&mut self) {
        let mut ok = true;

        let xs = log_grid(ETA_LN_LO, ETA_LN_HI, ETA_PER_DECADE);
        let mut fs = Vec::with_capacity(xs.len());
        for &u in &xs {
            let q = self.eta0_cdf_direct(u.exp());
            ok &= q.converged;
            fs.push(q.value);
        }
        for i in 1..fs.len() {
            fs[i] = fs[i].max(fs[i - 1]);
        }
        self.eta_cdf = Pchip::new(xs, fs);

        let hi = (80.0 / self.c).ln().max(XI_LN_LO + 1.0);
        let xs = log_grid(XI_LN_LO - 2.3, hi, 4 * XI_PER_DECADE);
        let js: Vec<f64> = xs
            .iter()
            .map(|&u| {
                let q = self.q1_integral_direct(u.exp());
                ok &= q.converged;
                q.value
            })
            .collect();
        self.j_table = LogLogTable::new(xs, &js);

        if self.params.lambda_r > 0.0 {
            let (m2, ok2) = self.tail_moment(true);
            let (m4, ok4) = self.tail_moment(false);
            ok &= ok2 && ok4;
            self.tail_m2 = m2;
            self.tail_m4 = m4;
            let (g2, ok2) = self.cumulative_h(true, m2);
            let (g4, ok4) = self.cumulative_h(false, m4);
            ok &= ok2 && ok4;
            self.g2_table = Some(g2);
            self.g4_table = Some(g4);
        }
        self.converged = ok;
    }

    /// True iff every integral behind the cached tables met its tolerance.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn p_los(&self, d: f64) -> f64 {
        (-self.c * d).exp()
    }

    pub fn bs_densities(&self, xi: f64) -> BsDensities {
        let pl = self.p_los(xi);
        BsDensities {
            los: self.lambda_y * pl,
            reflective_nlos: self.lambda_y * (1.0 - pl) * self.p_rm,
            idle_nlos: self.lambda_y * (1.0 - pl) * (1.0 - self.p_rm),
        }
    }

    /// P_R^m via quadrature; [`Self::p_rm`] holds the closed form.
    pub fn multi_reflection_prob(&self) -> Result<f64> {
        let lr = self.params.lambda_r;
        let c = self.c;
        let q = integrate_improper(|r| lr * (-c * r).exp() * 2.0 * PI * r, 0.0, c, &self.quad)?;
        Ok(-(-q.value).exp_m1())
    }

    pub fn exists_probs(&self) -> ExistsProbs {
        let divergent = self.lambda_y * self.p_rm > 0.0;
        ExistsProbs {
            p_l: self.p_l,
            p_nr: if divergent { 1.0 } else { 0.0 },
            p_nr_divergent: divergent,
        }
    }

    /// ∫₀^x λ e^{−cξ} 2πξ dξ
    fn los_mass(&self, density: f64, x: f64) -> f64 {
        2.0 * PI * density * radial_exp_moment(self.c, x)
    }

    /// Density of the distance to the nearest LoS BS (mass P_L).
    pub fn nearest_los_bs_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        self.lambda_y * self.p_los(x) * 2.0 * PI * x * (-self.los_mass(self.lambda_y, x)).exp()
    }

    /// Density of the distance to the nearest LoS RIS (mass P_R^m).
    pub fn nearest_los_ris_pdf(&self, x: f64) -> f64 {
        let lr = self.params.lambda_r;
        if !(x > 0.0) || lr == 0.0 {
            return 0.0;
        }
        lr * self.p_los(x) * 2.0 * PI * x * (-self.los_mass(lr, x)).exp()
    }

    /// ∫_ξ^∞ f_{ξ0}.
    pub fn nearest_los_bs_survival(&self, xi: f64) -> f64 {
        let total = 2.0 * PI * self.lambda_y / (self.c * self.c);
        ((-self.los_mass(self.lambda_y, xi.max(0.0))).exp() - (-total).exp()).max(0.0)
    }

    /// Mass of λ̃_Y^N over the disk of radius ρ centred at distance r from the user.
    fn reflective_bs_mass(&self, rho: f64, r: f64, spec: &QuadSpec) -> Quad {
        let dens = self.lambda_y * self.p_rm;
        if dens == 0.0 || !(rho > 0.0) {
            return Quad::exact(0.0);
        }
        let c = self.c;
        let full = if rho > r {
            let a = rho - r;
            dens * (PI * a * a - 2.0 * PI * radial_exp_moment(c, a))
        } else {
            0.0
        };
        if full > 60.0 {
            return Quad::exact(full);
        }
        let lo = (rho - r).abs();
        let hi = rho + r;
        let partial = integrate_1d(
            |xi: f64| {
                if xi <= 0.0 {
                    return 0.0;
                }
                let cos = ((xi * xi + r * r - rho * rho) / (2.0 * xi * r)).clamp(-1.0, 1.0);
                2.0 * cos.acos() * dens * (-(-c * xi).exp_m1()) * xi
            },
            lo,
            hi,
            spec,
        );
        Quad::exact(full) + partial
    }

    /// F_{η0}(x) by direct quadrature.
    pub fn eta0_cdf_direct(&self, x: f64) -> Quad {
        if !(x > 0.0) || self.params.lambda_r == 0.0 {
            return Quad::exact(0.0);
        }
        let inner = QuadSpec {
            rel_tol: self.quad.rel_tol * 0.1,
            abs_tol: self.quad.abs_tol * 0.1,
            ..self.quad
        };
        let r_max = self.quad.truncation_factor / self.c;
        let mut ok = true;
        let mut pts = vec![0.0, r_max];
        if x.sqrt() < r_max {
            pts.insert(1, x.sqrt());
        }
        let q = integrate_pieces(
            |r: f64| {
                let f = self.nearest_los_ris_pdf(r);
                if f == 0.0 {
                    return 0.0;
                }
                let m = self.reflective_bs_mass(x / r, r, &inner);
                ok &= m.converged;
                f * -(-m.value).exp_m1()
            },
            &pts,
            &self.quad,
        );
        Quad {
            converged: q.converged && ok,
            ..q
        }
    }

    /// F_{η0}(x) from the cached table.
    pub fn eta0_cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let u = x.ln();
        let (lo, hi) = (self.eta_cdf.x_min(), self.eta_cdf.x_max());
        if u >= hi {
            return self.eta_cdf.eval(hi);
        }
        if u <= lo {
            let (xs, ys) = self.eta_cdf.knots();
            if ys[0] <= 0.0 {
                return 0.0;
            }
            let slope = if ys[1] > ys[0] {
                (ys[1] / ys[0]).ln() / (xs[1] - xs[0])
            } else {
                2.0
            };
            return ys[0] * ((u - lo) * slope).exp();
        }
        self.eta_cdf.eval(u)
    }

    /// dF_{η0}/dx from the table's monotone cubic.
    pub fn eta0_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        (self.eta_cdf.derivative(x.ln()) / x).max(0.0)
    }

    pub fn assoc_probs_multi(&self) -> AssocProbs {
        let k = self.assoc_const;
        let c = self.c;
        let pd = integrate_improper(
            |x| (1.0 - self.eta0_cdf(k * x)) * self.nearest_los_bs_pdf(x),
            0.0,
            c,
            &self.quad,
        )
        .map(|q| q.value)
        .unwrap_or(f64::NAN);
        let pi = integrate_improper(
            |x| self.eta0_cdf(k * x) * self.nearest_los_bs_pdf(x),
            0.0,
            c,
            &self.quad,
        )
        .map(|q| q.value)
        .unwrap_or(f64::NAN)
            + (1.0 - self.p_l) * self.p_rm;
        AssocProbs {
            direct: pd,
            reflected: pi,
            blind: 1.0 - pd - pi,
        }
    }

    /// f̃_{ξ0}: nearest LoS BS at x and chosen for service.
    pub fn served_xi0_density(&self, x: f64) -> f64 {
        self.nearest_los_bs_pdf(x) * (1.0 - self.eta0_cdf(self.assoc_const * x))
    }

    /// f̃_{η0}: reflected path with product x chosen for service.
    pub fn served_eta0_density(&self, x: f64) -> f64 {
        self.eta0_pdf(x) * (self.nearest_los_bs_survival(x / self.assoc_const) + 1.0 - self.p_l)
    }

    fn q1_integral_direct(&self, xi0: f64) -> Quad {
        let c = self.c;
        let b = self.params.beta;
        let lo = xi0.ln();
        let hi = (lo + 1.0).max((80.0 / c).ln());
        let mid = (1.0 / c).ln().clamp(lo, hi);
        integrate_pieces(
            |v: f64| ((2.0 - b) * v - c * v.exp()).exp(),
            &[lo, mid, hi],
            &QuadSpec {
                abs_tol: 1e-300,
                ..self.quad
            },
        )
    }

    /// ∫_{ξ0}^∞ ξ^{1−β} e^{−cξ} dξ.
    pub fn q1_integral(&self, xi0: f64) -> f64 {
        let u = xi0.ln();
        let (lo, hi) = (self.j_table.table.x_min(), self.j_table.table.x_max());
        if u < lo {
            return self.q1_integral_direct(xi0).value;
        }
        if u > hi {
            return 0.0;
        }
        self.j_table.eval_ln(u)
    }

    /// Mean interference from LoS BSs beyond ξ0.
    pub fn q1(&self, xi0: f64) -> f64 {
        let p = &self.params;
        p.p0_w
            * self.gains.direct
            * p.intercept()
            * 2.0
            * PI
            * self.lambda_y
            * self.q1_integral(xi0)
    }

    /// H(ξ) = 2 ∫₀^π ∫ f_{r0}(r) w(r) (r s)^{−β} dr dθ with r, s ≥ ε.
    pub fn h_kernel(&self, xi: f64, los_weighted: bool) -> Quad {
        if self.params.lambda_r == 0.0 {
            return Quad::exact(0.0);
        }
        let eps = self.params.near_field_m;
        let b = self.params.beta;
        let c = self.c;
        let r_max = self.quad.truncation_factor / c;
        let inner = QuadSpec {
            rel_tol: self.quad.rel_tol * 0.1,
            abs_tol: 1e-300,
            ..self.quad
        };
        let mut ok = true;
        let mut theta_pts = vec![0.0, PI];
        if xi > eps {
            theta_pts.insert(1, (eps / xi).asin());
        }
        let q = integrate_pieces(
            |t: f64| {
                let ct = t.cos();
                let mut pts = vec![eps, r_max];
                let closest = xi * ct;
                let disc = eps * eps - xi * xi * t.sin().powi(2);
                let mut hole = None;
                if disc > 0.0 {
                    let d = disc.sqrt();
                    hole = Some((closest - d, closest + d));
                    pts.push(closest - d);
                    pts.push(closest + d);
                }
                if closest > eps {
                    pts.push(closest);
                }
                pts.retain(|p| *p >= eps && *p <= r_max);
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                let r = integrate_pieces(
                    |r: f64| {
                        if let Some((a, z)) = hole {
                            if r > a && r < z {
                                return 0.0;
                            }
                        }
                        let s2 = xi * xi + r * r - 2.0 * xi * r * ct;
                        if s2 < eps * eps {
                            return 0.0;
                        }
                        let w = if los_weighted { (-c * r).exp() } else { 1.0 };
                        self.nearest_los_ris_pdf(r) * w * (r * r * s2).powf(-0.5 * b)
                    },
                    &pts,
                    &inner,
                );
                ok &= r.converged;
                r.value
            },
            &theta_pts,
            &QuadSpec {
                abs_tol: 1e-300,
                ..self.quad
            },
        );
        Quad {
            value: 2.0 * q.value,
            error: 2.0 * q.error,
            converged: q.converged && ok,
        }
    }

    /// ∫_ε^∞ f_{r0}(r) w(r) r^{−β} dr.
    fn tail_moment(&self, los_weighted: bool) -> (f64, bool) {
        let eps = self.params.near_field_m;
        let b = self.params.beta;
        let c = self.c;
        let r_max = self.quad.truncation_factor / c;
        let q = integrate_pieces(
            |r: f64| {
                let w = if los_weighted { (-c * r).exp() } else { 1.0 };
                self.nearest_los_ris_pdf(r) * w * r.powf(-b)
            },
            &[eps, (1.0 / c).max(eps), r_max.max(eps)],
            &QuadSpec {
                abs_tol: 1e-300,
                ..self.quad
            },
        );
        (q.value, q.converged)
    }

    /// Tabulates ∫_{ξ0}^∞ (1 − e^{−cξ}) H(ξ) ξ dξ with a power-law tail beyond the grid.
    fn cumulative_h(&self, los_weighted: bool, moment: f64) -> (LogLogTable, bool) {
        let xs = log_grid(XI_LN_LO, XI_LN_HI, XI_PER_DECADE);
        let mut ok = true;
        let hs: Vec<f64> = xs
            .iter()
            .map(|&u| {
                let q = self.h_kernel(u.exp(), los_weighted);
                ok &= q.converged;
                q.value
            })
            .collect();
        let h_table = LogLogTable::new(xs.clone(), &hs);
        let b = self.params.beta;
        let c = self.c;
        let x_max = xs[xs.len() - 1].exp();
        let tail = 2.0 * PI * moment * x_max.powf(2.0 - b) / (b - 2.0);
        let (gx, gw) = gauss_legendre(PANEL_ORDER);
        let mut cum = vec![0.0; xs.len()];
        cum[xs.len() - 1] = tail;
        for i in (0..xs.len() - 1).rev() {
            let (a, z) = (xs[i], xs[i + 1]);
            let h = 0.5 * (z - a);
            let seg: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(g, w)| {
                    let v = a + h * (g + 1.0);
                    let x = v.exp();
                    w * (-(-c * x).exp_m1()) * h_table.eval_ln(v) * x * x
                })
                .sum::<f64>()
                * h;
            cum[i] = cum[i + 1] + seg;
        }
        (LogLogTable::new(xs, &cum), ok)
    }

    fn g_eval(&self, table: &Option<LogLogTable>, moment: f64, xi0: f64) -> f64 {
        let Some(t) = table else { return 0.0 };
        let u = xi0.max(1e-300).ln();
        let (lo, hi) = (t.table.x_min(), t.table.x_max());
        if u <= lo {
            return t.eval_ln(lo);
        }
        if u >= hi {
            let b = self.params.beta;
            return 2.0 * PI * moment * xi0.powf(2.0 - b) / (b - 2.0);
        }
        t.eval_ln(u)
    }

    fn reflected_scale(&self) -> f64 {
        let p = &self.params;
        p.p0_w
            * self.gains.bs_ris
            * self.gains.ris_ue
            * p.intercept()
            * p.intercept()
            * self.lambda_y
    }

    /// Mean interference through RISs from NLoS BSs beyond ξ0.
    pub fn q2(&self, xi0: f64) -> f64 {
        self.reflected_scale() * self.g_eval(&self.g2_table, self.tail_m2, xi0)
    }

    pub fn q3(&self, eta0: f64) -> f64 {
        self.q1(eta0 / self.assoc_const)
    }

    pub fn q4(&self, eta0: f64) -> f64 {
        self.q4_at_distance(eta0 / self.assoc_const)
    }

    fn q4_at_distance(&self, xi0: f64) -> f64 {
        self.reflected_scale() * self.p_rm * self.g_eval(&self.g4_table, self.tail_m4, xi0)
    }

    /// Mean interference power originating beyond distance `radius`, used to
    /// bound what a simulation truncated at that radius leaves out.
    pub fn interference_tail(&self, radius: f64) -> f64 {
        self.q1(radius) + self.q4_at_distance(radius)
    }

    pub fn direct_coverage(&self, gamma0: f64) -> Quad {
        let p = &self.params;
        let scale = gamma0 / (f64::from(p.n_bs) * f64::from(p.n_ue) * p.p0_w * p.intercept());
        let q = integrate_improper(
            |x| {
                let f = self.served_xi0_density(x);
                if f == 0.0 {
                    return 0.0;
                }
                if gamma0 == 0.0 {
                    return f;
                }
                let i = p.noise_w + self.q1(x) + self.q2(x);
                f * (-scale * i * x.powf(p.beta)).exp()
            },
            0.0,
            self.c,
            &self.quad,
        );
        q.unwrap_or(Quad {
            value: f64::NAN,
            error: f64::INFINITY,
            converged: false,
        })
    }

    pub fn reflected_coverage(&self, gamma0: f64) -> f64 {
        if self.params.lambda_r == 0.0 {
            return 0.0;
        }
        let p = &self.params;
        let nr = f64::from(p.n_ris);
        let ab = f64::from(p.n_bs) * nr * nr * f64::from(p.n_ue);
        let g2a = p.intercept() * p.intercept();
        let weight =
            |eta: f64| self.nearest_los_bs_survival(eta / self.assoc_const) + 1.0 - self.p_l;
        let success = |eta: f64| {
            if gamma0 == 0.0 {
                return 1.0;
            }
            let b = gamma0 * (p.noise_w + self.q3(eta) + self.q4(eta)) * eta.powf(p.beta)
                / (p.p0_w * g2a);
            self.tail.eval(b / ab)
        };
        let (xs, ys) = self.eta_cdf.knots();
        // mass below the grid is assigned to the first knot
        let mut acc = ys[0] * weight(xs[0].exp()) * success(xs[0].exp());
        let (gx, gw) = gauss_legendre(4);
        for i in 0..xs.len() - 1 {
            if ys[i + 1] == ys[i] {
                continue;
            }
            let (a, z) = (xs[i], xs[i + 1]);
            let h = 0.5 * (z - a);
            for (g, w) in gx.iter().zip(&gw) {
                let u = a + h * (g + 1.0);
                let eta = u.exp();
                let d = self.eta_cdf.derivative(u).max(0.0);
                acc += w * h * d * weight(eta) * success(eta);
            }
        }
        acc
    }

    pub fn coverage_multi(&self, gamma0: f64) -> Quad {
        let d = self.direct_coverage(gamma0);
        let r = self.reflected_coverage(gamma0);
        Quad {
            value: d.value + r,
            ..d
        }
    }

    /// Mean rate in bit/s: W ∫ P_cov(2^y − 1) dy.
    pub fn rate_multi(&self) -> Quad {
        let mut ok = true;
        let mut cov = |y: f64| {
            let q = self.coverage_multi(y.exp2() - 1.0);
            ok &= q.converged;
            q.value
        };
        let mut y_max = 8.0;
        while cov(y_max) > self.quad.abs_tol && y_max < 1024.0 {
            y_max *= 2.0;
        }
        let q = integrate_1d(&mut cov, 0.0, y_max, &self.quad);
        Quad {
            value: self.params.bw_hz * q.value,
            error: self.params.bw_hz * q.error,
            converged: q.converged && ok && self.converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamsConfig;

    fn ctx_with(json: &str) -> MultiCellContext {
        let p = ParamsConfig::from_json(json).unwrap().resolve().unwrap();
        MultiCellContext::new(p, QuadSpec::default()).unwrap()
    }

    fn default_ctx() -> MultiCellContext {
        ctx_with(r#"{"scenario": {"kind": "multi_cell", "virtual_radius_m": 200}}"#)
    }

    #[test]
    fn rejects_single_cell() {
        assert!(matches!(
            MultiCellContext::new(SystemParams::default(), QuadSpec::default()),
            Err(Error::Scenario(_))
        ));
    }

    #[test]
    fn densities_partition() {
        let ctx = default_ctx();
        for xi in [0.0, 10.0, 120.0, 800.0] {
            let d = ctx.bs_densities(xi);
            assert!((d.los + d.reflective_nlos + d.idle_nlos - ctx.lambda_y).abs() < 1e-18);
        }
        let d = ctx.bs_densities(0.0);
        assert_eq!(d.los, ctx.lambda_y);
    }

    #[test]
    fn reflection_prob_closed_form() {
        let ctx = default_ctx();
        let q = ctx.multi_reflection_prob().unwrap();
        assert!((q - ctx.p_rm).abs() < 1e-9);
        let m = 2.0 * PI * 9.55e-4 / (ctx.c * ctx.c);
        assert!((m - 26.0).abs() < 0.1, "{m}");
        let none = ctx_with(r#"{"lambda_r": 0, "scenario": {"kind": "multi_cell"}}"#);
        assert_eq!(none.p_rm, 0.0);
        let dense = ctx_with(r#"{"lambda_b": 3e-3, "scenario": {"kind": "multi_cell"}}"#);
        assert!(dense.p_rm < ctx.p_rm);
    }

    #[test]
    fn existence_flags() {
        let ctx = default_ctx();
        let e = ctx.exists_probs();
        assert!(e.p_nr_divergent && e.p_nr == 1.0);
        let expect = 1.0 - (-2.0 * PI * ctx.lambda_y / (ctx.c * ctx.c)).exp();
        assert!((e.p_l - expect).abs() < 1e-15);
    }

    #[test]
    fn nearest_densities_have_right_mass() {
        let ctx = default_ctx();
        let s = QuadSpec::default();
        let m = integrate_improper(|x| ctx.nearest_los_bs_pdf(x), 0.0, ctx.c, &s).unwrap();
        assert!(
            (m.value - ctx.p_l).abs() < 1e-8,
            "{} vs {}",
            m.value,
            ctx.p_l
        );
        let m = integrate_improper(|x| ctx.nearest_los_ris_pdf(x), 0.0, ctx.c, &s).unwrap();
        assert!((m.value - ctx.p_rm).abs() < 1e-8);
        assert_eq!(ctx.nearest_los_bs_pdf(0.0), 0.0);
        let tail = integrate_improper(|x| ctx.nearest_los_bs_pdf(x), 150.0, ctx.c, &s).unwrap();
        assert!((tail.value - ctx.nearest_los_bs_survival(150.0)).abs() < 1e-9);
    }

    #[test]
    fn eta0_cdf_valid_subcdf() {
        let ctx = default_ctx();
        assert_eq!(ctx.eta0_cdf(0.0), 0.0);
        let mut prev = 0.0;
        for k in 0..80 {
            let x = 10f64.powf(-2.0 + 0.15 * k as f64);
            let f = ctx.eta0_cdf(x);
            assert!(f >= prev - 1e-12 && f <= ctx.p_rm + 1e-9);
            prev = f;
        }
        assert!((ctx.eta0_cdf(1e12) - ctx.p_rm).abs() < 1e-6);
        for x in [30.0, 2e3, 4e4] {
            let d = ctx.eta0_cdf_direct(x).value;
            assert!((ctx.eta0_cdf(x) - d).abs() < 1e-5, "x={x}");
        }
        let none = ctx_with(r#"{"lambda_r": 0, "scenario": {"kind": "multi_cell"}}"#);
        assert_eq!(none.eta0_cdf(1e6), 0.0);
    }

    #[test]
    fn blind_identity_and_partition() {
        let ctx = default_ctx();
        let a = ctx.assoc_probs_multi();
        assert!((a.direct + a.reflected + a.blind - 1.0).abs() < 1e-12);
        let ident = (1.0 - ctx.p_l) * (1.0 - ctx.p_rm);
        assert!((a.blind - ident).abs() < 1e-6, "{} vs {ident}", a.blind);
        let none = ctx_with(r#"{"lambda_r": 0, "scenario": {"kind": "multi_cell"}}"#);
        let a = none.assoc_probs_multi();
        assert_eq!(a.reflected, 0.0);
        assert!((a.direct - none.p_l).abs() < 1e-8);
    }

    /// Γ(a, x) for a < 0 non-integer via the lower-series identity.
    fn upper_gamma(a: f64, x: f64, gamma_a: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 0..200 {
            if n > 0 {
                term *= -x / n as f64;
            }
            sum += term / (a + n as f64);
        }
        gamma_a - x.powf(a) * sum
    }

    #[test]
    fn q1_matches_incomplete_gamma() {
        let ctx = default_ctx();
        // Γ(−0.2) = Γ(0.8) / (−0.2)
        let gamma_a = 1.164_229_713_725_303 / -0.2;
        for xi0 in [0.05, 1.0, 30.0, 200.0] {
            let oracle = ctx.c.powf(0.2) * upper_gamma(-0.2, ctx.c * xi0, gamma_a);
            let direct = ctx.q1_integral_direct(xi0).value;
            assert!(
                (direct - oracle).abs() < 1e-8 * oracle,
                "{direct} vs {oracle}"
            );
            assert!((ctx.q1_integral(xi0) - oracle).abs() < 1e-5 * oracle);
        }
        assert!(ctx.q1(10.0) > ctx.q1(20.0));
    }

    #[test]
    fn h_kernel_far_field_asymptote() {
        let ctx = default_ctx();
        let xi = 1e6;
        let h = ctx.h_kernel(xi, false).value;
        let asym = 2.0 * PI * ctx.tail_m4 * xi.powf(-ctx.params.beta);
        assert!((h - asym).abs() < 1e-3 * asym, "{h} vs {asym}");
    }

    #[test]
    fn interference_vanishes_without_bss() {
        let a = ctx_with(r#"{"scenario": {"kind": "multi_cell", "virtual_radius_m": 200}}"#);
        let b = ctx_with(r#"{"scenario": {"kind": "multi_cell", "virtual_radius_m": 20000}}"#);
        assert!(b.q1(50.0) < 1e-3 * a.q1(50.0));
        assert!(b.q2(50.0) < 1e-3 * a.q2(50.0));
    }

    #[test]
    fn coverage_limits_and_monotone() {
        let ctx = default_ctx();
        let a = ctx.assoc_probs_multi();
        let lo = ctx.coverage_multi(0.0).value;
        assert!(
            (lo - (a.direct + a.reflected)).abs() < 1e-4,
            "{lo} vs {}",
            a.direct + a.reflected
        );
        let mut prev = lo;
        for db in [-10.0, -5.0, 0.0, 5.0, 10.0, 30.0] {
            let v = ctx.coverage_multi(10f64.powf(db / 10.0)).value;
            assert!(v <= prev + 1e-9 && v >= 0.0, "{db}: {v} > {prev}");
            prev = v;
        }
        assert!(ctx.coverage_multi(1e15).value < 1e-6);
    }

    #[test]
    fn served_densities_nonnegative() {
        let ctx = default_ctx();
        for k in 0..100 {
            let x = 10f64.powf(-1.0 + 0.09 * k as f64);
            assert!(ctx.served_xi0_density(x) >= 0.0);
            assert!(ctx.served_eta0_density(x) >= 0.0);
        }
    }
}

//! Quadrature engine for one cell of radius R with the BS at its center.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::params::{Scenario, SystemParams};
use crate::quad::{
    gauss_legendre, integrate_1d, integrate_pieces, radial_exp_moment, CompositeRule,
    ProductExpRule, Quad, QuadSpec,
};

const XI_PANELS: usize = 16;
const XI_ORDER: usize = 8;
const ETA_GRID: usize = 200;
const THETA_ORDER: usize = 24;
/// Lowest tabulated η, as a fraction of R².
const ETA_LO_FRAC: f64 = 1e-6;

/// Tabulated F_{η|ξ} for one user distance.
#[derive(Debug, Clone)]
pub struct EtaCdfTable {
    pub xi: f64,
    pub p_los: f64,
    pub p_reflect: f64,
    table: Pchip,
    x_lo: f64,
    x_hi: f64,
    slope_lo: f64,
    pub converged: bool,
}

impl EtaCdfTable {
    pub fn eval(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        if x >= self.x_hi {
            return self.p_reflect;
        }
        if x <= self.x_lo {
            let f0 = self.table.eval(self.x_lo.ln());
            if f0 <= 0.0 {
                return 0.0;
            }
            return f0 * (x / self.x_lo).powf(self.slope_lo);
        }
        self.table.eval(x.ln()).clamp(0.0, self.p_reflect)
    }
}

#[derive(Debug, Clone)]
pub struct SingleCellContext {
    pub params: SystemParams,
    pub quad: QuadSpec,
    pub c: f64,
    pub radius: f64,
    rule: ProductExpRule,
    xi_rule: CompositeRule,
    tables: Vec<EtaCdfTable>,
    theta_rule: (Vec<f64>, Vec<f64>),
}

impl SingleCellContext {
    pub fn new(params: SystemParams, quad: QuadSpec) -> Result<Self> {
        let Scenario::SingleCell { radius_m } = params.scenario else {
            return Err(Error::Scenario(
                "single-cell engine needs a single_cell scenario",
            ));
        };
        let c = params.los_decay_rate();
        let xi_rule = CompositeRule::new(0.0, radius_m, XI_PANELS, XI_ORDER);
        let mut ctx = SingleCellContext {
            params,
            quad,
            c,
            radius: radius_m,
            rule: ProductExpRule::new(),
            xi_rule,
            tables: Vec::new(),
            theta_rule: gauss_legendre(THETA_ORDER),
        };
        let tables: Vec<EtaCdfTable> = ctx
            .xi_rule
            .nodes
            .par_iter()
            .map(|&xi| ctx.eta_table(xi))
            .collect::<Result<_>>()?;
        ctx.tables = tables;
        Ok(ctx)
    }

    /// True iff every integral behind the cached tables met its tolerance.
    pub fn converged(&self) -> bool {
        self.tables.iter().all(|t| t.converged)
    }

    pub fn p_los(&self, d: f64) -> f64 {
        (-self.c * d).exp()
    }

    fn check_xi(&self, xi: f64) -> Result<()> {
        if !(xi >= 0.0) || xi > self.radius * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "user distance {xi} outside [0, {}]",
                self.radius
            )));
        }
        Ok(())
    }

    /// Mean number of RISs in the cell with a LoS link to a user at distance ξ.
    pub fn reflection_mass(&self, xi: f64) -> Result<Quad> {
        self.check_xi(xi)?;
        let lr = self.params.lambda_r;
        if lr == 0.0 {
            return Ok(Quad::exact(0.0));
        }
        let r2 = self.radius * self.radius;
        let c = self.c;
        let q = integrate_1d(
            |psi: f64| {
                let sn = psi.sin();
                let rho = (r2 - xi * xi * sn * sn).max(0.0).sqrt() - xi * psi.cos();
                radial_exp_moment(c, rho.max(0.0))
            },
            0.0,
            PI,
            &self.quad,
        );
        Ok(Quad {
            value: 2.0 * lr * q.value,
            error: 2.0 * lr * q.error,
            converged: q.converged,
        })
    }

    /// P_R^s(ξ).
    pub fn reflection_prob_single(&self, xi: f64) -> Result<f64> {
        Ok(-(-self.reflection_mass(xi)?.value).exp_m1())
    }

    /// (direct, reflected, blind) association probabilities at distance ξ.
    pub fn assoc_probs_single(&self, xi: f64) -> Result<(f64, f64, f64)> {
        let pl = self.p_los(xi);
        let pr = self.reflection_prob_single(xi)?;
        Ok((pl, (1.0 - pl) * pr, (1.0 - pl) * (1.0 - pr)))
    }

    /// Mean number of LoS RISs whose path-length product s·r is at most x.
    pub fn eta_mass(&self, x: f64, xi: f64) -> Quad {
        let lr = self.params.lambda_r;
        if !(x > 0.0) || lr == 0.0 {
            return Quad::exact(0.0);
        }
        let big_r = self.radius;
        let c = self.c;
        if xi <= 1e-9 * big_r {
            let s_max = big_r.min(x.sqrt());
            return Quad::exact(2.0 * PI * lr * radial_exp_moment(c, s_max));
        }
        let (gx, gw) = &self.theta_rule;
        let mut breaks = vec![0.0, big_r];
        let disc = xi * xi + 4.0 * x;
        breaks.push(0.5 * (-xi + disc.sqrt()));
        breaks.push(0.5 * (xi + disc.sqrt()));
        breaks.push(xi);
        let d2 = xi * xi - 4.0 * x;
        if d2 >= 0.0 {
            breaks.push(0.5 * (xi - d2.sqrt()));
            breaks.push(0.5 * (xi + d2.sqrt()));
        }
        breaks.retain(|b| (0.0..=big_r).contains(b));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let q = integrate_pieces(
            |s: f64| {
                if s <= 0.0 {
                    return 0.0;
                }
                let lb = (s.powi(4) + s * s * xi * xi - x * x) / (2.0 * s.powi(3) * xi);
                if lb >= 1.0 {
                    return 0.0;
                }
                let theta_max = lb.max(-1.0).acos();
                let inner = if c == 0.0 {
                    theta_max
                } else {
                    // e^{−c r} is smooth in θ on [0, θ_max]; a fixed rule suffices
                    let h = 0.5 * theta_max;
                    gx.iter()
                        .zip(gw)
                        .map(|(u, w)| {
                            let t = h * (u + 1.0);
                            let d = (s * s + xi * xi - 2.0 * s * xi * t.cos()).max(0.0).sqrt();
                            w * (-c * d).exp()
                        })
                        .sum::<f64>()
                        * h
                };
                2.0 * lr * s * inner
            },
            &breaks,
            &self.quad,
        );
        q
    }

    /// F_{η|ξ}(x): the CDF of the smallest path-length product over RISs in
    /// LoS of a user at distance ξ.
    pub fn eta_cdf_given_xi(&self, x: f64, xi: f64) -> Result<f64> {
        self.check_xi(xi)?;
        Ok(-(-self.eta_mass(x, xi).value).exp_m1())
    }

    pub fn eta_table(&self, xi: f64) -> Result<EtaCdfTable> {
        self.check_xi(xi)?;
        let big_r = self.radius;
        let x_lo = ETA_LO_FRAC * big_r * big_r;
        let x_hi = big_r * (big_r + xi);
        let mass = self.reflection_mass(xi)?;
        let p_reflect = -(-mass.value).exp_m1();
        let mut converged = mass.converged;
        let (l0, l1) = (x_lo.ln(), x_hi.ln());
        let xs: Vec<f64> = (0..ETA_GRID)
            .map(|i| l0 + (l1 - l0) * i as f64 / (ETA_GRID - 1) as f64)
            .collect();
        let mut ys = Vec::with_capacity(ETA_GRID);
        for &lx in &xs {
            let m = self.eta_mass(lx.exp(), xi);
            converged &= m.converged;
            ys.push(-(-m.value).exp_m1());
        }
        // the last knot sits at saturation
        if let Some(last) = ys.last_mut() {
            *last = p_reflect;
        }
        for i in 1..ys.len() {
            ys[i] = ys[i].max(ys[i - 1]);
        }
        let slope_lo = if ys[0] > 0.0 && ys[1] > ys[0] {
            (ys[1] / ys[0]).ln() / (xs[1] - xs[0])
        } else {
            2.0
        };
        Ok(EtaCdfTable {
            xi,
            p_los: self.p_los(xi),
            p_reflect,
            table: Pchip::new(xs, ys),
            x_lo,
            x_hi,
            slope_lo,
            converged,
        })
    }

    /// τ₁ scale: direct coverage at ξ is exp(−ξ^β · direct_scale · γ₀).
    fn direct_scale(&self) -> f64 {
        let p = &self.params;
        p.noise_w / (p.p0_w * p.intercept() * f64::from(p.n_bs) * f64::from(p.n_ue))
    }

    /// κ with τ₂ = κ (h_s h_r)^(1/β).
    fn reflect_scale(&self, gamma0: f64) -> f64 {
        let p = &self.params;
        (p.p0_w * p.intercept() * p.intercept() / (p.noise_w * gamma0)).powf(1.0 / p.beta)
    }

    fn cond_from_table(&self, t: &EtaCdfTable, gamma0: f64) -> f64 {
        let p = &self.params;
        let direct = t.p_los * (-t.xi.powf(p.beta) * self.direct_scale() * gamma0).exp();
        if t.p_reflect == 0.0 {
            return direct;
        }
        let nr = f64::from(p.n_ris);
        let ab = f64::from(p.n_bs) * nr * nr * f64::from(p.n_ue);
        let kappa = self.reflect_scale(gamma0) * ab.powf(1.0 / p.beta);
        let inv_beta = 1.0 / p.beta;
        let reflected = self.rule.expect(|w| t.eval(kappa * w.powf(inv_beta)));
        direct + (1.0 - t.p_los) * reflected
    }

    /// Coverage probability of a user at distance ξ.
    pub fn cond_coverage_single(&self, xi: f64, gamma0: f64) -> Result<f64> {
        let t = self.eta_table(xi)?;
        Ok(self.cond_from_table(&t, gamma0))
    }

    /// Coverage averaged over users uniform in the cell.
    pub fn ergodic_coverage_single(&self, gamma0: f64) -> f64 {
        let r2 = self.radius * self.radius;
        self.tables
            .iter()
            .zip(&self.xi_rule.weights)
            .map(|(t, w)| w * 2.0 * t.xi / r2 * self.cond_from_table(t, gamma0))
            .sum()
    }

    /// Mean association probabilities over users uniform in the cell.
    pub fn ergodic_assoc_single(&self) -> (f64, f64, f64) {
        let r2 = self.radius * self.radius;
        let mut acc = (0.0, 0.0, 0.0);
        for (t, w) in self.tables.iter().zip(&self.xi_rule.weights) {
            let k = w * 2.0 * t.xi / r2;
            acc.0 += k * t.p_los;
            acc.1 += k * (1.0 - t.p_los) * t.p_reflect;
            acc.2 += k * (1.0 - t.p_los) * (1.0 - t.p_reflect);
        }
        acc
    }

    /// Mean achievable rate in bit/s: W ∫ P_cov(2^y − 1) dy.
    pub fn achievable_rate_single(&self) -> Quad {
        let cov = |y: f64| self.ergodic_coverage_single(y.exp2() - 1.0);
        let mut y_max = 8.0;
        while cov(y_max) > self.quad.abs_tol && y_max < 1024.0 {
            y_max *= 2.0;
        }
        let q = integrate_1d(cov, 0.0, y_max, &self.quad);
        Quad {
            value: self.params.bw_hz * q.value,
            error: self.params.bw_hz * q.error,
            converged: q.converged && self.converged(),
        }
    }
}

//! Path loss, sectored antenna gains, Rayleigh power fading and SINR.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lobe {
    Main,
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalGain {
    pub value: f64,
    pub lobe_pair: (Lobe, Lobe),
}

/// Received power split into its factors. `small_scale` is h for a direct link
/// and h_s·h_r for a reflected one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub large_scale: f64,
    pub small_scale: f64,
    pub power_w: f64,
}

impl LinkBudget {
    pub fn new(large_scale: f64, small_scale: f64, p0_w: f64) -> Self {
        LinkBudget {
            large_scale,
            small_scale,
            power_w: large_scale * small_scale * p0_w,
        }
    }
}

/// 10^α d^(-β).
pub fn large_scale_gain(d: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    Ok(10f64.powf(alpha) * d.powf(-beta))
}

/// 10^(2α) (s r)^(-β), the cascaded gain of a reflected path.
pub fn reflected_gain(s: f64, r: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(s > 0.0 && r > 0.0) {
        return Err(Error::Domain(format!(
            "path lengths must be positive, got s={s}, r={r}"
        )));
    }
    Ok(10f64.powf(2.0 * alpha) * (s * r).powf(-beta))
}

/// Main and side lobe gains (M, m) of an n-element array.
pub fn lobe_gains(n: u32) -> (f64, f64) {
    let nf = f64::from(n.max(1));
    let sin = (3.0 * PI / (2.0 * nf.sqrt())).sin();
    (nf, 1.0 / (sin * sin))
}

pub fn sample_directional_gain<R: Rng + ?Sized>(
    nt: u32,
    nr: u32,
    psit: f64,
    psir: f64,
    rng: &mut R,
) -> DirectionalGain {
    let (mt, st) = lobe_gains(nt);
    let (mr, sr) = lobe_gains(nr);
    let t_main = rng.random::<f64>() < psit / (2.0 * PI);
    let r_main = rng.random::<f64>() < psir / (2.0 * PI);
    let gt = if t_main { mt } else { st };
    let gr = if r_main { mr } else { sr };
    let lobe = |main| if main { Lobe::Main } else { Lobe::Side };
    DirectionalGain {
        value: gt * gr,
        lobe_pair: (lobe(t_main), lobe(r_main)),
    }
}

/// Expectation of [`sample_directional_gain`].
pub fn mean_directional_gain(nt: u32, nr: u32, psit: f64, psir: f64) -> f64 {
    let (mt, st) = lobe_gains(nt);
    let (mr, sr) = lobe_gains(nr);
    let pt = psit / (2.0 * PI);
    let pr = psir / (2.0 * PI);
    pt * pr * mt * mr
        + pt * (1.0 - pr) * mt * sr
        + (1.0 - pt) * pr * st * mr
        + (1.0 - pt) * (1.0 - pr) * st * sr
}

/// Exponential power fading with the given mean.
pub fn sample_small_scale<R: Rng + ?Sized>(mean_gain: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    mean_gain * e
}

/// Mean gains of the interfering BS→UE, BS→RIS and RIS→UE links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanGains {
    pub direct: f64,
    pub bs_ris: f64,
    pub ris_ue: f64,
}

impl MeanGains {
    pub fn new(p: &SystemParams) -> Self {
        MeanGains {
            direct: mean_directional_gain(p.n_bs, p.n_ue, p.psi_bs, p.psi_ue),
            bs_ris: mean_directional_gain(p.n_bs, p.n_ris, p.psi_bs, p.psi_ris),
            ris_ue: mean_directional_gain(p.n_ris, p.n_ue, p.psi_ris, p.psi_ue),
        }
    }
}

/// Single-cell direct-link SNR.
pub fn sinr_direct_single(xi: f64, h: f64, p: &SystemParams) -> Result<f64> {
    Ok(large_scale_gain(xi, p.alpha, p.beta)? * p.p0_w * h / p.noise_w)
}

/// Single-cell reflected-link SNR.
pub fn sinr_reflect_single(s: f64, r: f64, hs: f64, hr: f64, p: &SystemParams) -> Result<f64> {
    Ok(reflected_gain(s, r, p.alpha, p.beta)? * p.p0_w * hs * hr / p.noise_w)
}

pub fn sinr_multi(target: &LinkBudget, interferers: &[LinkBudget], noise_w: f64) -> f64 {
    let i: f64 = interferers.iter().map(|l| l.power_w).sum();
    target.power_w / (noise_w + i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn unit_distance_is_intercept() {
        assert_eq!(large_scale_gain(1.0, -5.0, 2.2).unwrap(), 1e-5);
    }

    #[test]
    fn gain_at_100m() {
        let g = large_scale_gain(100.0, -5.694, 2.2).unwrap();
        let log_oracle = -5.694 - 2.2 * 2.0;
        assert!(close(g.log10(), log_oracle, 1e-12));
        assert!(close(g, 8.1e-11, 0.01), "{g}");
    }

    #[test]
    fn gain_rejects_nonpositive_distance() {
        assert!(large_scale_gain(0.0, -5.0, 2.2).is_err());
        assert!(large_scale_gain(-1.0, -5.0, 2.2).is_err());
    }

    #[test]
    fn reflected_at_50_50() {
        let g = reflected_gain(50.0, 50.0, -5.694, 2.2).unwrap();
        assert!(close(g, 10f64.powf(-11.388) / 2500f64.powf(2.2), 1e-12));
    }

    #[test]
    fn lobe_values() {
        let (m, s) = lobe_gains(64);
        assert_eq!(m, 64.0);
        assert!((s - 3.239_828_808_843_550_5).abs() < 1e-12, "{s}");
        let (m, s) = lobe_gains(4);
        assert_eq!(m, 4.0);
        assert!((s - 2.0).abs() < 1e-12);
        assert!(64.0 / lobe_gains(64).1 > 4.0 / 2.0);
    }

    #[test]
    fn full_beamwidth_is_main_main() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let g = sample_directional_gain(64, 4, 2.0 * PI, 2.0 * PI, &mut rng);
            assert_eq!(g.value, 256.0);
            assert_eq!(g.lobe_pair, (Lobe::Main, Lobe::Main));
        }
        assert_eq!(mean_directional_gain(64, 4, 2.0 * PI, 2.0 * PI), 256.0);
    }

    #[test]
    fn mean_gain_half_beams() {
        assert!((mean_directional_gain(4, 4, PI, PI) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn half_beams_quarter_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let g = sample_directional_gain(4, 4, PI, PI, &mut rng);
            let k = match g.lobe_pair {
                (Lobe::Main, Lobe::Main) => 0,
                (Lobe::Main, Lobe::Side) => 1,
                (Lobe::Side, Lobe::Main) => 2,
                (Lobe::Side, Lobe::Side) => 3,
            };
            counts[k] += 1;
        }
        let sd = (0.25f64 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn empirical_directional_mean() {
        let p = SystemParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_directional_gain(p.n_bs, p.n_ue, p.psi_bs, p.psi_ue, &mut rng).value)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = mean_directional_gain(p.n_bs, p.n_ue, p.psi_bs, p.psi_ue);
        assert!((mean - expected).abs() < 3.0 * (var / n as f64).sqrt());
        assert!((expected - 32.5).abs() < 0.1, "{expected}");
    }

    #[test]
    fn exponential_mean_and_median_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_small_scale(256.0, &mut rng))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 256.0).abs() < 3.0 * 256.0 / (n as f64).sqrt());
        let below = xs.iter().filter(|&&x| x <= 256.0).count() as f64 / n as f64;
        assert!((below - (1.0 - (-1.0f64).exp())).abs() < 0.005);
    }

    #[test]
    fn snr_properties() {
        let mut p = SystemParams::default();
        assert_eq!(sinr_direct_single(50.0, 0.0, &p).unwrap(), 0.0);
        let a = sinr_direct_single(50.0, 256.0, &p).unwrap();
        let log_oracle = p.alpha + 256f64.log10() - p.beta * 50f64.log10() - p.noise_w.log10();
        assert!(close(a.log10(), log_oracle, 1e-12));
        p.p0_w *= 2.0;
        assert!(close(
            sinr_direct_single(50.0, 256.0, &p).unwrap(),
            2.0 * a,
            1e-14
        ));
        assert!(sinr_direct_single(0.0, 1.0, &p).is_err());
    }

    #[test]
    fn reflected_snr_symmetric() {
        let p = SystemParams::default();
        let a = sinr_reflect_single(30.0, 70.0, 5.0, 7.0, &p).unwrap();
        let b = sinr_reflect_single(70.0, 30.0, 5.0, 7.0, &p).unwrap();
        assert!(close(a, b, 1e-14));
        assert_eq!(sinr_reflect_single(30.0, 70.0, 0.0, 7.0, &p).unwrap(), 0.0);
        let log_oracle =
            2.0 * p.alpha + 35f64.log10() - p.beta * 2100f64.log10() - p.noise_w.log10();
        assert!(close(a.log10(), log_oracle, 1e-12));
    }

    #[test]
    fn multi_cell_sinr_hand_sum() {
        let t = LinkBudget::new(1e-9, 10.0, 1.0);
        let i = [
            LinkBudget::new(1e-11, 2.0, 1.0),
            LinkBudget::new(3e-12, 1.0, 1.0),
            LinkBudget::new(5e-13, 4.0, 1.0),
        ];
        let noise = 1e-12;
        let expected = 1e-8 / (1e-12 + 2e-11 + 3e-12 + 2e-12);
        assert!(close(sinr_multi(&t, &i, noise), expected, 1e-12));
        assert_eq!(sinr_multi(&t, &[], noise), 1e-8 / noise);
        assert!(sinr_multi(&t, &i[..2], noise) > sinr_multi(&t, &i, noise));
    }

    #[test]
    fn sinr_scale_invariant() {
        let t = LinkBudget::new(1e-9, 10.0, 1.0);
        let i = [LinkBudget::new(1e-11, 2.0, 1.0)];
        let k = 37.0;
        let ts = LinkBudget::new(1e-9, 10.0, k);
        let is = [LinkBudget::new(1e-11, 2.0, k)];
        assert!(close(
            sinr_multi(&ts, &is, k * 1e-12),
            sinr_multi(&t, &i, 1e-12),
            1e-13
        ));
    }
}

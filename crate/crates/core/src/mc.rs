//! Monte Carlo simulator over sampled scenes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    large_scale_gain, reflected_gain, sample_directional_gain, sample_small_scale, sinr_multi,
    LinkBudget,
};
use crate::geom::{sample_blockages, sample_ppp, Disk, Point, Scene};
use crate::params::{Scenario, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n_trials: usize,
    pub n_effective: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64], n_effective: usize) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                half_width_95: f64::NAN,
                n_trials: 0,
                n_effective,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            half_width_95: 1.96 * (var / n as f64).sqrt(),
            n_trials: n,
            n_effective,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Association {
    Direct {
        bs: Point,
        xi: f64,
    },
    Reflected {
        bs: Point,
        ris: Point,
        s: f64,
        r: f64,
    },
    Blind,
}

impl Association {
    pub fn is_blind(&self) -> bool {
        matches!(self, Association::Blind)
    }
}

/// Per-trial RNG: stream `trial` of the generator seeded by `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Single cell: BS at the origin, direct iff the BS is visible, else the
/// visible RIS with the smallest s·r.
pub fn associate_single(scene: &Scene, user: Point) -> Association {
    let bs = Point::ORIGIN;
    if scene.is_los(user, bs) {
        return Association::Direct {
            bs,
            xi: user.dist(&bs),
        };
    }
    let mut best: Option<(Point, f64, f64)> = None;
    for ris in &scene.ris {
        if !scene.is_los(user, *ris) {
            continue;
        }
        let (s, r) = (ris.dist(&bs), ris.dist(&user));
        if best.is_none_or(|(_, bs_, br)| s * r < bs_ * br) {
            best = Some((*ris, s, r));
        }
    }
    match best {
        Some((ris, s, r)) => Association::Reflected { bs, ris, s, r },
        None => Association::Blind,
    }
}

/// Link geometry seen by a user in a multi-cell scene.
#[derive(Debug, Clone)]
pub struct MultiView {
    /// (BS, ξ) for BSs in LoS of the user.
    pub los_bs: Vec<(Point, f64)>,
    /// (BS, RIS, s, r) for NLoS BSs that reach the user through a visible RIS,
    /// each through its smallest-product RIS.
    pub reflective: Vec<(Point, Point, f64, f64)>,
}

pub fn multi_view(scene: &Scene, user: Point) -> MultiView {
    let visible_ris: Vec<(Point, f64)> = scene
        .ris
        .iter()
        .filter(|r| scene.is_los(user, **r))
        .map(|r| (*r, r.dist(&user)))
        .collect();
    let mut los_bs = Vec::new();
    let mut reflective = Vec::new();
    for bs in &scene.bss {
        if scene.is_los(user, *bs) {
            los_bs.push((*bs, bs.dist(&user)));
            continue;
        }
        let mut best: Option<(Point, f64, f64)> = None;
        for (ris, r) in &visible_ris {
            let s = bs.dist(ris);
            if best.is_none_or(|(_, bs_, br)| s * r < bs_ * br) {
                best = Some((*ris, s, *r));
            }
        }
        if let Some((ris, s, r)) = best {
            reflective.push((*bs, ris, s, r));
        }
    }
    MultiView { los_bs, reflective }
}

/// Strongest time-averaged link: LoS BSs by 10^α ξ^{−β}, reflective BSs by
/// 10^{2α} N_R² η^{−β}.
pub fn associate_multi(view: &MultiView, params: &SystemParams) -> Association {
    let k = params.assoc_const();
    let direct = view
        .los_bs
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .copied();
    let refl = view
        .reflective
        .iter()
        .min_by(|a, b| (a.2 * a.3).total_cmp(&(b.2 * b.3)))
        .copied();
    match (direct, refl) {
        (Some((bs, xi)), Some((rbs, ris, s, r))) => {
            if s * r > k * xi {
                Association::Direct { bs, xi }
            } else {
                Association::Reflected { bs: rbs, ris, s, r }
            }
        }
        (Some((bs, xi)), None) => Association::Direct { bs, xi },
        (None, Some((bs, ris, s, r))) => Association::Reflected { bs, ris, s, r },
        (None, None) => Association::Blind,
    }
}

/// Outcome of one simulated user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub association: Association,
    pub sinr: f64,
}

fn serving_power<R: rand::Rng + ?Sized>(a: &Association, p: &SystemParams, rng: &mut R) -> f64 {
    let nbs = f64::from(p.n_bs);
    let nr = f64::from(p.n_ris);
    let nu = f64::from(p.n_ue);
    match *a {
        Association::Direct { xi, .. } => {
            let h = sample_small_scale(nbs * nu, rng);
            large_scale_gain(xi.max(1e-9), p.alpha, p.beta).unwrap_or(0.0) * p.p0_w * h
        }
        Association::Reflected { s, r, .. } => {
            let hs = sample_small_scale(nbs * nr, rng);
            let hr = sample_small_scale(nr * nu, rng);
            reflected_gain(s.max(1e-9), r.max(1e-9), p.alpha, p.beta).unwrap_or(0.0)
                * p.p0_w
                * hs
                * hr
        }
        Association::Blind => 0.0,
    }
}

pub fn simulate_single(params: &SystemParams, radius: f64, seed: u64, trial: u64) -> Trial {
    let mut rng = trial_rng(seed, trial);
    let region = Disk::new(Point::ORIGIN, radius);
    let user = region.sample(&mut rng);
    let blockages = sample_blockages(params, &region, &mut rng);
    let ris = sample_ppp(params.lambda_r, &region, &mut rng);
    let scene = Scene::new(region, blockages, ris, vec![user], vec![Point::ORIGIN]);
    let association = associate_single(&scene, user);
    let power = serving_power(&association, params, &mut rng);
    Trial {
        association,
        sinr: power / params.noise_w,
    }
}

/// Scene on the simulation disk around a typical user at the origin.
pub fn sample_multi_scene(params: &SystemParams, lambda_y: f64, rng: &mut ChaCha8Rng) -> Scene {
    let region = Disk::new(Point::ORIGIN, params.sim_radius());
    let blockages = sample_blockages(params, &region, rng);
    let bss = sample_ppp(lambda_y, &region, rng);
    let ris = sample_ppp(params.lambda_r, &region, rng);
    Scene::new(region, blockages, ris, vec![Point::ORIGIN], bss)
}

pub fn simulate_multi(params: &SystemParams, lambda_y: f64, seed: u64, trial: u64) -> Trial {
    let mut rng = trial_rng(seed, trial);
    let scene = sample_multi_scene(params, lambda_y, &mut rng);
    let view = multi_view(&scene, Point::ORIGIN);
    let association = associate_multi(&view, params);
    let signal = serving_power(&association, params, &mut rng);
    if association.is_blind() {
        return Trial {
            association,
            sinr: 0.0,
        };
    }
    let serving_bs = match association {
        Association::Direct { bs, .. } | Association::Reflected { bs, .. } => bs,
        Association::Blind => unreachable!(),
    };
    let eps = params.near_field_m;
    let mut interferers = Vec::with_capacity(view.los_bs.len() + view.reflective.len());
    for (bs, xi) in &view.los_bs {
        if *bs == serving_bs {
            continue;
        }
        let g = sample_directional_gain(
            params.n_bs,
            params.n_ue,
            params.psi_bs,
            params.psi_ue,
            &mut rng,
        );
        let h = sample_small_scale(g.value, &mut rng);
        let l = large_scale_gain(xi.max(1e-9), params.alpha, params.beta).unwrap_or(0.0);
        interferers.push(LinkBudget::new(l, h, params.p0_w));
    }
    for (bs, _, s, r) in &view.reflective {
        if *bs == serving_bs || *s < eps || *r < eps {
            continue;
        }
        let gs = sample_directional_gain(
            params.n_bs,
            params.n_ris,
            params.psi_bs,
            params.psi_ris,
            &mut rng,
        );
        let gr = sample_directional_gain(
            params.n_ris,
            params.n_ue,
            params.psi_ris,
            params.psi_ue,
            &mut rng,
        );
        let hs = sample_small_scale(gs.value, &mut rng);
        let hr = sample_small_scale(gr.value, &mut rng);
        let l = reflected_gain(*s, *r, params.alpha, params.beta).unwrap_or(0.0);
        interferers.push(LinkBudget::new(l, hs * hr, params.p0_w));
    }
    let target = LinkBudget {
        large_scale: 0.0,
        small_scale: 0.0,
        power_w: signal,
    };
    Trial {
        association,
        sinr: sinr_multi(&target, &interferers, params.noise_w),
    }
}

pub fn simulate(params: &SystemParams, seed: u64, trial: u64) -> Trial {
    match params.scenario {
        Scenario::SingleCell { radius_m } => simulate_single(params, radius_m, seed, trial),
        Scenario::MultiCell { lambda_y } => simulate_multi(params, lambda_y, seed, trial),
    }
}

/// All Monte Carlo metrics from one set of trials; every γ₀ reuses the same trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub gamma0: Vec<f64>,
    pub coverage: Vec<Estimate>,
    pub rate_bps: Estimate,
    pub blind: Estimate,
    pub direct: Estimate,
    pub reflected: Estimate,
}

/// Runs trials 0..n in parallel and reduces them in trial order.
pub fn run_trials(params: &SystemParams, n_trials: usize, seed: u64) -> Vec<Trial> {
    (0..n_trials as u64)
        .into_par_iter()
        .map(|t| simulate(params, seed, t))
        .collect()
}

pub fn summarize(params: &SystemParams, trials: &[Trial], gamma0: &[f64]) -> McReport {
    let non_blind = trials.iter().filter(|t| !t.association.is_blind()).count();
    let indicator = |f: &dyn Fn(&Trial) -> bool| -> Vec<f64> {
        trials
            .iter()
            .map(|t| if f(t) { 1.0 } else { 0.0 })
            .collect()
    };
    let coverage = gamma0
        .iter()
        .map(|&g| Estimate::from_samples(&indicator(&|t| t.sinr > g), non_blind))
        .collect();
    let rates: Vec<f64> = trials
        .iter()
        .map(|t| params.bw_hz * t.sinr.ln_1p() / std::f64::consts::LN_2)
        .collect();
    McReport {
        gamma0: gamma0.to_vec(),
        coverage,
        rate_bps: Estimate::from_samples(&rates, non_blind),
        blind: Estimate::from_samples(&indicator(&|t| t.association.is_blind()), non_blind),
        direct: Estimate::from_samples(
            &indicator(&|t| matches!(t.association, Association::Direct { .. })),
            non_blind,
        ),
        reflected: Estimate::from_samples(
            &indicator(&|t| matches!(t.association, Association::Reflected { .. })),
            non_blind,
        ),
    }
}

pub fn run(params: &SystemParams, gamma0: &[f64], n_trials: usize, seed: u64) -> McReport {
    let trials = run_trials(params, n_trials, seed);
    summarize(params, &trials, gamma0)
}

pub fn run_coverage(
    params: &SystemParams,
    gamma0: &[f64],
    n_trials: usize,
    seed: u64,
) -> Vec<Estimate> {
    run(params, gamma0, n_trials, seed).coverage
}

pub fn run_rate(params: &SystemParams, n_trials: usize, seed: u64) -> Estimate {
    run(params, &[], n_trials, seed).rate_bps
}

pub fn run_blind_ratio(params: &SystemParams, n_trials: usize, seed: u64) -> Estimate {
    run(params, &[], n_trials, seed).blind
}

/// Smallest s·r over RISs visible from a user at (ξ, 0) in a single cell;
/// infinite when no RIS is visible.
pub fn sample_eta_single(
    params: &SystemParams,
    radius: f64,
    xi: f64,
    seed: u64,
    trial: u64,
) -> f64 {
    let mut rng = trial_rng(seed, trial);
    let region = Disk::new(Point::ORIGIN, radius);
    let user = Point::new(xi, 0.0);
    let blockages = sample_blockages(params, &region, &mut rng);
    let ris = sample_ppp(params.lambda_r, &region, &mut rng);
    let scene = Scene::new(region, blockages, ris, vec![user], vec![Point::ORIGIN]);
    scene
        .ris
        .iter()
        .filter(|r| scene.is_los(user, **r))
        .map(|r| r.norm() * r.dist(&user))
        .fold(f64::INFINITY, f64::min)
}

/// Greedy reflected product: nearest visible RIS, then the NLoS BS nearest to
/// that RIS. Infinite when either is missing.
pub fn sample_eta0_greedy(params: &SystemParams, lambda_y: f64, seed: u64, trial: u64) -> f64 {
    let mut rng = trial_rng(seed, trial);
    let scene = sample_multi_scene(params, lambda_y, &mut rng);
    let user = Point::ORIGIN;
    let nearest = scene
        .ris
        .iter()
        .filter(|r| scene.is_los(user, **r))
        .min_by(|a, b| a.norm().total_cmp(&b.norm()));
    let Some(ris) = nearest else {
        return f64::INFINITY;
    };
    let s0 = scene
        .bss
        .iter()
        .filter(|b| !scene.is_los(user, **b))
        .map(|b| b.dist(ris))
        .fold(f64::INFINITY, f64::min);
    s0 * ris.norm()
}

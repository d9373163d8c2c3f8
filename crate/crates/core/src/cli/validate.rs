use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};
use std::fmt;
use std::time::Instant;

use clap::ValueEnum;
use nalgebra::{Cholesky, Matrix3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::fusion::{kf_predict, kf_update, unbiased_convert, MotionModel, PolarMeasurement, TrackState};
use crate::matcher::{bim_match_costs, brute_force_match, CostMatrix, MatcherParams, Objective};
use crate::sim::SimConfig;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Matcher,
    Filter,
    All,
}

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub metric: String,
    pub threshold: String,
    pub pass: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {} (threshold {})", self.name, self.metric, self.threshold)
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Matcher | Suite::All) {
        checks.extend(matcher_checks()?);
    }
    if matches!(suite, Suite::Filter | Suite::All) {
        checks.extend(filter_checks()?);
    }
    Ok(checks)
}

/// Entries uniform in (0, 1], then reciprocated.
pub fn reciprocal_uniform(n: usize, rng: &mut impl Rng) -> CostMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| 1.0 / (1.0 - rng.random::<f64>())).collect())
        .collect();
    CostMatrix::from_rows(&rows).expect("finite costs")
}

fn separated(n: usize, rng: &mut impl Rng) -> CostMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { rng.random_range(1.0..=2.0) } else { rng.random_range(50.0..=100.0) })
                .collect()
        })
        .collect();
    CostMatrix::from_rows(&rows).expect("finite costs")
}

fn matcher_checks() -> Result<Vec<Check>> {
    const INSTANCES: usize = 1000;
    const N: usize = 5;
    let params = MatcherParams::default();
    let slack = N as f64 * params.alpha * params.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let start = Instant::now();
    let (mut within, mut worst_gap) = (0, f64::NEG_INFINITY);
    let (mut max_ok, mut f2_ok) = (0, 0);
    for _ in 0..INSTANCES {
        let c = reciprocal_uniform(N, &mut rng);
        let out = bim_match_costs(&c, &params)?;
        let best = brute_force_match(&c, Objective::Sum)?;
        let gap = out.result.total_cost() - best.total_cost();
        worst_gap = worst_gap.max(gap);
        within += usize::from(gap <= slack + 1e-9);
        max_ok += usize::from(out.result.max_cost() <= out.after_auction.max_cost() + 1e-12);
        f2_ok += usize::from(out.result.f2 <= out.after_auction.f2 + 1e-12);
    }
    let elapsed = start.elapsed().as_secs_f64();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut diagonal = 0;
    for _ in 0..500 {
        let c = separated(N, &mut rng);
        let out = bim_match_costs(&c, &params)?;
        diagonal += usize::from(out.result.pairs.len() == N && out.result.pairs.iter().all(|p| p.visual == p.auditory));
    }

    Ok(vec![
        Check {
            name: "matcher.optimality_bound",
            metric: format!("{within}/{INSTANCES} within optimum + {slack} (worst gap {worst_gap:.4})"),
            threshold: format!("{INSTANCES}/{INSTANCES}"),
            pass: within == INSTANCES,
        },
        Check {
            name: "matcher.runtime",
            metric: format!("{elapsed:.2} s"),
            threshold: "< 10 s".into(),
            pass: elapsed < 10.0,
        },
        Check {
            name: "matcher.separated_diagonal",
            metric: format!("{diagonal}/500"),
            threshold: "500/500".into(),
            pass: diagonal == 500,
        },
        Check {
            name: "matcher.exchange_max_cost",
            metric: format!("{max_ok}/{INSTANCES} not increased"),
            threshold: format!("{INSTANCES}/{INSTANCES}"),
            pass: max_ok == INSTANCES,
        },
        Check {
            name: "matcher.exchange_f2",
            metric: format!("{f2_ok}/{INSTANCES} not increased"),
            threshold: format!("{INSTANCES}/{INSTANCES}"),
            pass: f2_ok == INSTANCES,
        },
    ])
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn filter_checks() -> Result<Vec<Check>> {
    let mut checks = conversion_checks()?;
    checks.extend(nees_checks()?);
    Ok(checks)
}

fn conversion_checks() -> Result<Vec<Check>> {
    const DRAWS: usize = 1_000_000;
    let truth = PolarMeasurement::new(100.0, FRAC_PI_4, FRAC_PI_6, 1.0, 0.1, 0.1)?;
    let target = truth.to_cartesian();
    let analytic = unbiased_convert(&truth).covariance;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let start = Instant::now();
    let (mut sum, mut sq) = (Vector3::zeros(), Matrix3::zeros());
    for _ in 0..DRAWS {
        let noisy = PolarMeasurement {
            r: truth.r + truth.sigma_r * normal(&mut rng),
            theta: truth.theta + truth.sigma_theta * normal(&mut rng),
            phi: truth.phi + truth.sigma_phi * normal(&mut rng),
            ..truth
        };
        let e = unbiased_convert(&noisy).position - target;
        sum += e;
        sq += e * e.transpose();
    }
    let n = DRAWS as f64;
    let mean = sum / n;
    let cov = (sq - mean * mean.transpose() * n) / (n - 1.0);
    let elapsed = start.elapsed().as_secs_f64();
    let ratios: Vec<f64> = (0..3).map(|k| mean[k].abs() / (cov[(k, k)] / n).sqrt()).collect();
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    let frob = (cov - analytic).norm() / analytic.norm();
    Ok(vec![
        Check {
            name: "filter.conversion_bias",
            metric: format!("worst axis |mean error| = {worst:.2} SE"),
            threshold: "<= 4 SE".into(),
            pass: worst <= 4.0,
        },
        Check {
            name: "filter.conversion_covariance",
            metric: format!("relative Frobenius error {:.2}%", frob * 100.0),
            threshold: "<= 3%".into(),
            pass: frob <= 0.03,
        },
        Check {
            name: "filter.conversion_runtime",
            metric: format!("{elapsed:.2} s"),
            threshold: "< 30 s".into(),
            pass: elapsed < 30.0,
        },
    ])
}

/// Per-track statistics of a simulated constant-velocity run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRun {
    pub nees_sum: f64,
    pub nees_count: usize,
    pub filtered_rmse: f64,
    pub raw_rmse: f64,
}

/// Simulates one track from the motion model's own process noise, observes
/// it through noisy polar detections from the origin and filters it.
pub fn simulate_track(
    model: &MotionModel,
    sigmas: [f64; 3],
    velocity_var: f64,
    steps: usize,
    burn_in: usize,
    rng: &mut impl Rng,
) -> Result<TrackRun> {
    let q_chol = Cholesky::new(model.process_noise()).expect("process noise is positive definite");
    let f = model.transition();
    let sd_v = velocity_var.sqrt();
    let mut truth = Vector6::new(
        rng.random_range(60.0..140.0),
        rng.random_range(-60.0..60.0),
        rng.random_range(10.0..60.0),
        sd_v * normal(rng),
        sd_v * normal(rng),
        sd_v * normal(rng),
    );
    let observe = |x: &Vector6<f64>, rng: &mut dyn rand::RngCore| {
        let clean = PolarMeasurement::from_cartesian(&x.fixed_rows::<3>(0).into_owned(), sigmas[0], sigmas[1], sigmas[2]);
        let noisy = PolarMeasurement {
            r: clean.r + sigmas[0] * normal(rng),
            theta: clean.theta + sigmas[1] * normal(rng),
            phi: clean.phi + sigmas[2] * normal(rng),
            ..clean
        };
        unbiased_convert(&noisy)
    };
    let mut track = TrackState::from_measurement(&observe(&truth, rng), velocity_var, 0);
    let mut out = TrackRun {
        nees_sum: 0.0,
        nees_count: 0,
        filtered_rmse: 0.0,
        raw_rmse: 0.0,
    };
    let (mut filt_sq, mut raw_sq) = (0.0, 0.0);
    for step in 1..=steps {
        let w = Vector6::from_fn(|_, _| normal(rng));
        truth = f * truth + q_chol.l() * w;
        let z = observe(&truth, rng);
        track = kf_update(&kf_predict(&track, model), &z)?;
        if step > burn_in {
            out.nees_sum += track.nees(&truth)?;
            out.nees_count += 1;
            let p = truth.fixed_rows::<3>(0).into_owned();
            filt_sq += (track.position() - p).norm_squared();
            raw_sq += (z.debiased() - p).norm_squared();
        }
    }
    let m = out.nees_count.max(1) as f64;
    out.filtered_rmse = (filt_sq / m).sqrt();
    out.raw_rmse = (raw_sq / m).sqrt();
    Ok(out)
}

fn nees_checks() -> Result<Vec<Check>> {
    const TRACKS: usize = 100;
    let cfg = SimConfig::default();
    let model = MotionModel::default();
    let sigmas = [cfg.sigma_r, cfg.sigma_theta, cfg.sigma_phi];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let (mut sum, mut count, mut better) = (0.0, 0, 0);
    for _ in 0..TRACKS {
        let t = simulate_track(&model, sigmas, 25.0, 100, 10, &mut rng)?;
        sum += t.nees_sum;
        count += t.nees_count;
        better += usize::from(t.filtered_rmse < t.raw_rmse);
    }
    let mean = sum / count as f64;
    Ok(vec![
        Check {
            name: "filter.nees",
            metric: format!("mean NEES {mean:.3}"),
            threshold: "in [5, 7]".into(),
            pass: (5.0..=7.0).contains(&mean),
        },
        Check {
            name: "filter.rmse_dominance",
            metric: format!("{better}/{TRACKS} tracks beat raw measurements"),
            threshold: ">= 95".into(),
            pass: better >= 95,
        },
    ])
}

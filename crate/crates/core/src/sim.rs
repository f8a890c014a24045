//! Agent-based Monte Carlo simulation of a finite population playing a
//! rating protocol, used to validate the stationary analysis and the
//! deviation-gain oracles empirically.
//!
//! Mechanics per period:
//! 1. an exactly balanced random half of the population requests (clients),
//!    the rest serve, matched uniformly one-to-one;
//! 2. each server plays the recommended action for its match (deviants may
//!    shirk for one period);
//! 3. a single error draw per match both flips the quality the client
//!    perceives and the compliance judgment driving the server's rating
//!    update, each with probability epsilon;
//! 4. server ratings update through the alpha/beta factors, client ratings
//!    through gamma (fair request rate) or delta (over-requesting deviants).
//!
//! Every user owns an independent random stream and consumes a fixed number
//! of draws per period, so paired runs that differ only in whether a planned
//! deviation is applied stay aligned draw-for-draw (common random numbers).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::incentives::DeviationSpec;
use crate::model::{recommended_action, IntrinsicParams, Protocol, Rating};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// A one-period deviation applied by a tagged subpopulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedDeviation {
    pub spec: DeviationSpec,
    /// Period (0-based) in which the tagged users deviate.
    pub period: usize,
    /// Fraction of the population that is tagged.
    pub deviant_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub params: IntrinsicParams,
    pub n: usize,
    pub periods: usize,
    pub seed: u64,
    /// Fraction of users starting with a good rating.
    pub initial_good_fraction: f64,
    pub deviation: Option<PlannedDeviation>,
}

impl SimConfig {
    pub fn new(protocol: Protocol, params: IntrinsicParams, n: usize, periods: usize) -> Self {
        SimConfig {
            protocol,
            params,
            n,
            periods,
            seed: 42,
            initial_good_fraction: 1.0,
            deviation: None,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::InvalidConfig("population must have n >= 2".into()));
        }
        if self.periods == 0 {
            return Err(SimError::InvalidConfig("periods must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_good_fraction) {
            return Err(SimError::InvalidConfig(
                "initial_good_fraction must lie in [0, 1]".into(),
            ));
        }
        if let Some(dev) = &self.deviation {
            if dev.period >= self.periods {
                return Err(SimError::InvalidConfig(
                    "deviation period must precede the end of the run".into(),
                ));
            }
            if !(0.0..=0.5).contains(&dev.deviant_fraction) || dev.deviant_fraction == 0.0 {
                return Err(SimError::InvalidConfig(
                    "deviant_fraction must lie in (0, 0.5]".into(),
                ));
            }
            if let DeviationSpec::FirstStage { lambda_prime } = dev.spec {
                if !(lambda_prime > 0.5 && lambda_prime <= 1.0) {
                    return Err(SimError::InvalidConfig(
                        "first-stage deviation rate must lie in (1/2, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Population statistics recorded at the start of each period (ratings) and
/// over the period (welfare, matching).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodStat {
    pub eta0: f64,
    pub eta1: f64,
    pub mean_welfare: f64,
    pub unmatched_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub stats: Vec<PeriodStat>,
    /// Discounted utility per user over the whole run.
    pub discounted_utility: Vec<f64>,
    /// Discounted utility per user accumulated from the deviation period on
    /// (present when a deviation is planned, whether or not applied).
    pub discounted_from_event: Option<Vec<f64>>,
    /// Ratings held at the start of the deviation period.
    pub ratings_at_event: Option<Vec<Rating>>,
    /// Final request/serve ratio per user (both counters start at one).
    pub rho: Vec<f64>,
}

impl SimTrace {
    /// Time-averaged bad-rating share over the second half of the run.
    pub fn settled_eta0(&self) -> f64 {
        let half = &self.stats[self.stats.len() / 2..];
        half.iter().map(|s| s.eta0).sum::<f64>() / half.len() as f64
    }

    /// CSV rendering of the per-period statistics.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period,eta0,eta1,mean_welfare,unmatched_rate\n");
        for (t, s) in self.stats.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t,
                crate::util::format_sig(s.eta0),
                crate::util::format_sig(s.eta1),
                crate::util::format_sig(s.mean_welfare),
                crate::util::format_sig(s.unmatched_rate),
            ));
        }
        out
    }
}

/// Runs the population and applies any planned deviation.
pub fn run_population(config: &SimConfig) -> Result<SimTrace, SimError> {
    run(config, true)
}

fn run(config: &SimConfig, apply_deviation: bool) -> Result<SimTrace, SimError> {
    config.validate()?;
    let n = config.n;
    let p = &config.params;
    let proto = &config.protocol;
    let d = &proto.design;
    let (b, c, s, eps, omega) = (p.b(), p.c(), p.s(), p.epsilon(), p.omega());

    let mut global = ChaCha8Rng::seed_from_u64(config.seed);
    global.set_stream(0);
    let mut streams: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            r.set_stream(i as u64 + 1);
            r
        })
        .collect();

    let good_count = (config.initial_good_fraction * n as f64).round() as usize;
    let mut ratings: Vec<Rating> = (0..n)
        .map(|i| if i < good_count { Rating::Good } else { Rating::Bad })
        .collect();
    let mut next_ratings = ratings.clone();

    let tagged_count = config
        .deviation
        .map(|dev| ((dev.deviant_fraction * n as f64).round() as usize).max(1))
        .unwrap_or(0);

    let mut stats = Vec::with_capacity(config.periods);
    let mut disc = vec![0.0f64; n];
    let mut disc_event = config.deviation.map(|_| vec![0.0f64; n]);
    let mut ratings_at_event = None;
    let mut client_count = vec![1.0f64; n];
    let mut server_count = vec![1.0f64; n];
    let mut utilities = vec![0.0f64; n];
    let mut flips = vec![0.0f64; n];
    let mut updates = vec![0.0f64; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut clients: Vec<usize> = Vec::with_capacity(n);
    let mut servers: Vec<usize> = Vec::with_capacity(n);

    let mut w_pow = 1.0f64;
    for t in 0..config.periods {
        let eta0 = ratings.iter().filter(|&&r| r == Rating::Bad).count() as f64 / n as f64;

        let event_now = config.deviation.is_some_and(|dev| dev.period == t);
        if event_now {
            ratings_at_event = Some(ratings.clone());
        }
        let dev = config.deviation.filter(|_| apply_deviation && event_now);
        let first_stage_dev = matches!(
            dev.map(|d| d.spec),
            Some(DeviationSpec::FirstStage { .. })
        );
        let second_stage_rating = match dev.map(|d| d.spec) {
            Some(DeviationSpec::SecondStage { rating }) => Some(rating),
            _ => None,
        };

        // Fixed draw consumption per user per period keeps paired runs with
        // and without the deviation aligned.
        for i in 0..n {
            flips[i] = streams[i].random::<f64>();
            updates[i] = streams[i].random::<f64>();
        }

        perm.shuffle(&mut global);
        let n_clients = (proto.lambda * n as f64).round() as usize;
        clients.clear();
        servers.clear();
        if first_stage_dev {
            // Deviants request for sure this period; compliant users fill
            // the remaining request slots in shuffle order.
            clients.extend(0..tagged_count);
            for &i in perm.iter() {
                if i >= tagged_count {
                    if clients.len() < n_clients.max(tagged_count) {
                        clients.push(i);
                    } else {
                        servers.push(i);
                    }
                }
            }
        } else {
            for (k, &i) in perm.iter().enumerate() {
                if k < n_clients {
                    clients.push(i);
                } else {
                    servers.push(i);
                }
            }
        }

        if event_now {
            // Keep tagged users from matching each other in the deviation
            // period, so one deviant's action never lands in another tagged
            // user's measured utility. Stable partitions preserve the random
            // within-group order and are identical across paired runs.
            clients.sort_by_key(|&i| i >= tagged_count);
            servers.sort_by_key(|&i| i < tagged_count);
        }

        utilities.fill(0.0);
        let matched = clients.len().min(servers.len());
        for k in 0..matched {
            let (cl, sv) = (clients[k], servers[k]);
            let (th_c, th_s) = (ratings[cl], ratings[sv]);
            let a_rec = recommended_action(proto.strategy, th_s, th_c);
            let shirk = second_stage_rating == Some(th_s) && sv < tagged_count && a_rec == 1;
            let a = if shirk { 0 } else { a_rec };
            let flip = flips[sv] < eps;
            let perceived = (a == 1) != flip;
            utilities[cl] += if perceived { b - c } else { -c };
            utilities[sv] -= s * f64::from(a);
            // One noisy compliance judgment per match drives the server
            // update.
            let judged_compliant = (a >= a_rec) != flip;
            let promote = if judged_compliant {
                d.alpha(th_s)
            } else {
                1.0 - d.beta(th_s)
            };
            next_ratings[sv] = if updates[sv] < promote {
                Rating::Good
            } else {
                Rating::Bad
            };
        }
        // Unmatched requests still pay the request cost.
        for &cl in &clients[matched..] {
            utilities[cl] -= c;
        }
        // Client-side rating updates (also for unmatched requesters: the
        // judgment is about the request rate, not the match outcome).
        for &cl in &clients {
            let th = ratings[cl];
            let over_share = first_stage_dev && cl < tagged_count;
            let p_good = if over_share {
                1.0 - d.delta(th)
            } else {
                d.gamma(th)
            };
            next_ratings[cl] = if updates[cl] < p_good {
                Rating::Good
            } else {
                Rating::Bad
            };
        }
        // Unmatched servers keep their rating untouched.
        for &sv in &servers[matched..] {
            next_ratings[sv] = ratings[sv];
        }

        for &cl in &clients {
            client_count[cl] += 1.0;
        }
        for &sv in &servers {
            server_count[sv] += 1.0;
        }

        let mean_welfare = utilities.iter().sum::<f64>() / n as f64;
        let unmatched_rate = (clients.len() - matched) as f64 / n as f64;
        stats.push(PeriodStat {
            eta0,
            eta1: 1.0 - eta0,
            mean_welfare,
            unmatched_rate,
        });

        for i in 0..n {
            disc[i] += w_pow * utilities[i];
        }
        if let (Some(ev), Some(dev)) = (disc_event.as_mut(), config.deviation) {
            if t >= dev.period {
                let w_event = omega.powi((t - dev.period) as i32);
                for i in 0..n {
                    ev[i] += w_event * utilities[i];
                }
            }
        }
        w_pow *= omega;

        std::mem::swap(&mut ratings, &mut next_ratings);
        next_ratings.copy_from_slice(&ratings);
    }

    let rho = client_count
        .iter()
        .zip(&server_count)
        .map(|(c, s)| c / s)
        .collect();
    Ok(SimTrace {
        stats,
        discounted_utility: disc,
        discounted_from_event: disc_event,
        ratings_at_event,
        rho,
    })
}

/// Mean one-shot deviation gain and 95% confidence half-width for tagged
/// users holding the given rating when the deviation strikes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingGain {
    pub mean: f64,
    pub ci_half_width: f64,
    pub reps: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    /// Indexed by the deviant's rating at the deviation period.
    pub by_rating: [Option<RatingGain>; 2],
}

impl GainEstimate {
    pub fn for_rating(&self, rating: Rating) -> Option<RatingGain> {
        self.by_rating[rating.index()]
    }
}

/// Estimates deviation gains by paired runs under common random numbers:
/// each replication runs the same seeded population once compliantly and
/// once with the planned deviation applied, and differences the tagged
/// users' discounted utilities from the deviation period on. The confidence
/// interval is computed across replication means (Student t).
pub fn estimate_deviation_gain(config: &SimConfig, reps: usize) -> Result<GainEstimate, SimError> {
    if config.deviation.is_none() {
        return Err(SimError::InvalidConfig(
            "estimate_deviation_gain requires a planned deviation".into(),
        ));
    }
    if reps < 2 {
        return Err(SimError::InvalidConfig("need at least 2 replications".into()));
    }
    let tagged_count = {
        let dev = config.deviation.unwrap();
        ((dev.deviant_fraction * config.n as f64).round() as usize).max(1)
    };
    let relevant_rating = match config.deviation.unwrap().spec {
        DeviationSpec::SecondStage { rating } => Some(rating),
        DeviationSpec::FirstStage { .. } => None,
    };

    let mut rep_means: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut samples = [0usize; 2];
    for r in 0..reps {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(r as u64);
        let base = run(&cfg, false)?;
        let devd = run(&cfg, true)?;
        let at_event = devd.ratings_at_event.as_ref().expect("deviation planned");
        let base_ev = base.discounted_from_event.as_ref().unwrap();
        let dev_ev = devd.discounted_from_event.as_ref().unwrap();
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for i in 0..tagged_count {
            let th = at_event[i];
            if relevant_rating.is_some_and(|r| r != th) {
                continue;
            }
            sums[th.index()] += dev_ev[i] - base_ev[i];
            counts[th.index()] += 1;
        }
        for th in 0..2 {
            if counts[th] > 0 {
                rep_means[th].push(sums[th] / counts[th] as f64);
                samples[th] += counts[th];
            }
        }
    }

    let mut by_rating = [None, None];
    for th in 0..2 {
        let means = &rep_means[th];
        if means.len() < 2 {
            continue;
        }
        let k = means.len() as f64;
        let mean = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (k - 1.0);
        let half = t_quantile_975(means.len() - 1) * (var / k).sqrt();
        by_rating[th] = Some(RatingGain {
            mean,
            ci_half_width: half,
            reps: means.len(),
            samples: samples[th],
        });
    }
    Ok(GainEstimate { by_rating })
}

/// Two-sided 97.5% Student-t quantile (95% confidence interval width).
fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    if df == 0 {
        f64::INFINITY
    } else if df <= 30 {
        TABLE[df - 1]
    } else {
        1.96
    }
}

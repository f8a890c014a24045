//! Stationary analysis of a protocol played compliantly: rating
//! distribution, per-period and discounted long-term utilities, and social
//! welfare.

use thiserror::Error;

use crate::model::{
    recommended_action, DesignParams, IntrinsicParams, Protocol, Rating, RecommendedStrategy,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("fixed-point iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("utility gap is undefined for the null strategy (identically zero)")]
    NullGap,
}

/// Stationary distribution over ratings: fraction of bad- and good-rated users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryDist {
    pub eta0: f64,
    pub eta1: f64,
}

impl StationaryDist {
    pub fn eta(&self, theta: Rating) -> f64 {
        match theta {
            Rating::Bad => self.eta0,
            Rating::Good => self.eta1,
        }
    }
}

/// Per-rating probability of ending the period with a bad rating (`phi`) for
/// a compliant user; these drive both the stationary distribution and the
/// discounted-utility recursions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingCoefficients {
    pub phi0: f64,
    pub phi1: f64,
}

impl MixingCoefficients {
    pub fn phi(&self, theta: Rating) -> f64 {
        match theta {
            Rating::Bad => self.phi0,
            Rating::Good => self.phi1,
        }
    }
}

/// Probability a compliant user rated `theta` ends the period rated bad:
/// with probability `lambda` it is a client (kept within the fair share, so
/// the gamma branch applies), otherwise a server whose report errs with
/// probability epsilon.
pub fn mixing_coefficients(design: &DesignParams, epsilon: f64, lambda: f64) -> MixingCoefficients {
    let phi = |theta: Rating| {
        lambda * (1.0 - design.gamma(theta))
            + (1.0 - lambda)
                * ((1.0 - epsilon) * (1.0 - design.alpha(theta)) + epsilon * design.beta(theta))
    };
    MixingCoefficients {
        phi0: phi(Rating::Bad),
        phi1: phi(Rating::Good),
    }
}

/// Closed-form stationary rating distribution of the compliant population.
pub fn stationary_distribution(design: &DesignParams, epsilon: f64, lambda: f64) -> StationaryDist {
    let m = mixing_coefficients(design, epsilon, lambda);
    let denom = 1.0 + m.phi1 - m.phi0;
    StationaryDist {
        eta0: m.phi1 / denom,
        eta1: (1.0 - m.phi0) / denom,
    }
}

/// Stationary distribution by iterating the one-period population update
/// from a uniform start until successive iterates differ by at most `tol`.
pub fn stationary_fixed_point(
    design: &DesignParams,
    epsilon: f64,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<StationaryDist, AnalysisError> {
    stationary_fixed_point_from(0.5, design, epsilon, lambda, tol, max_iters)
}

/// Fixed-point iteration from an arbitrary starting fraction of bad ratings.
pub fn stationary_fixed_point_from(
    eta0_start: f64,
    design: &DesignParams,
    epsilon: f64,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<StationaryDist, AnalysisError> {
    let m = mixing_coefficients(design, epsilon, lambda);
    let mut eta0 = eta0_start;
    for _ in 0..max_iters {
        let next = m.phi0 * eta0 + m.phi1 * (1.0 - eta0);
        if (next - eta0).abs() <= tol {
            return Ok(StationaryDist {
                eta0: next,
                eta1: 1.0 - next,
            });
        }
        eta0 = next;
    }
    Err(AnalysisError::NoConvergence(max_iters))
}

/// Stationary distribution for the reward-pinned design (alpha = gamma =
/// delta = 1) at the fair request rate lambda = 1/2, as a function of the
/// two punishment factors alone.
pub fn specialized_stationary(beta0: f64, beta1: f64, epsilon: f64) -> StationaryDist {
    let denom = 2.0 + epsilon * beta1 - epsilon * beta0;
    StationaryDist {
        eta0: epsilon * beta1 / denom,
        eta1: (2.0 - epsilon * beta0) / denom,
    }
}

/// Expected one-period utility of a compliant user rated `theta`, when the
/// population rating distribution is `eta`.
///
/// As a client (probability lambda) the user pays `c` and collects `b`
/// whenever the perceived quality is high; report noise flips the perceived
/// quality of the matched server's action. As a server it pays `s` whenever
/// the strategy recommends high effort against the matched client. Under the
/// null strategy nobody requests a service from anybody, so the utility is
/// the pure request-cost convention `-lambda * c`.
pub fn one_period_utility(
    theta: Rating,
    protocol: &Protocol,
    params: &IntrinsicParams,
    eta: &StationaryDist,
) -> f64 {
    let lambda = protocol.lambda;
    if protocol.strategy == RecommendedStrategy::Null {
        return lambda * (-params.c());
    }
    let eps = params.epsilon();
    let mut client_benefit = 0.0;
    let mut server_cost = 0.0;
    for other in Rating::BOTH {
        // as client rated theta, matched against a server rated `other`
        let a = f64::from(recommended_action(protocol.strategy, other, theta));
        client_benefit += eta.eta(other) * ((1.0 - eps) * a + eps * (1.0 - a)) * params.b();
        // as server rated theta, matched against a client rated `other`
        let a = f64::from(recommended_action(protocol.strategy, theta, other));
        server_cost += eta.eta(other) * params.s() * a;
    }
    lambda * (client_benefit - params.c()) - (1.0 - lambda) * server_cost
}

/// One-period rating transition distribution `[P(bad), P(good)]` of a
/// compliant user rated `theta`.
pub fn transition_kernel(
    theta: Rating,
    design: &DesignParams,
    epsilon: f64,
    lambda: f64,
) -> [f64; 2] {
    let to_good = lambda * design.gamma(theta)
        + (1.0 - lambda)
            * ((1.0 - epsilon) * design.alpha(theta) + epsilon * (1.0 - design.beta(theta)));
    let to_bad = lambda * (1.0 - design.gamma(theta))
        + (1.0 - lambda)
            * ((1.0 - epsilon) * (1.0 - design.alpha(theta)) + epsilon * design.beta(theta));
    [to_bad, to_good]
}

/// Discounted long-term utilities `(v_inf(bad), v_inf(good))` of a compliant
/// user, solving the two-state Bellman system exactly.
pub fn long_term_utilities(protocol: &Protocol, params: &IntrinsicParams) -> (f64, f64) {
    let eta = stationary_distribution(&protocol.design, params.epsilon(), protocol.lambda);
    let v0 = one_period_utility(Rating::Bad, protocol, params, &eta);
    let v1 = one_period_utility(Rating::Good, protocol, params, &eta);
    let k0 = transition_kernel(Rating::Bad, &protocol.design, params.epsilon(), protocol.lambda);
    let k1 = transition_kernel(Rating::Good, &protocol.design, params.epsilon(), protocol.lambda);
    let w = params.omega();
    // (I - w K) v_inf = v, solved by Cramer's rule.
    let a11 = 1.0 - w * k0[0];
    let a12 = -w * k0[1];
    let a21 = -w * k1[0];
    let a22 = 1.0 - w * k1[1];
    let det = a11 * a22 - a12 * a21;
    (
        (v0 * a22 - a12 * v1) / det,
        (a11 * v1 - v0 * a21) / det,
    )
}

/// Closed-form gap `v_inf(good) - v_inf(bad)` between the long-term
/// utilities of good- and bad-rated compliant users.
pub fn utility_gap(
    protocol: &Protocol,
    params: &IntrinsicParams,
    eta: &StationaryDist,
) -> Result<f64, AnalysisError> {
    let lambda = protocol.lambda;
    let m = mixing_coefficients(&protocol.design, params.epsilon(), lambda);
    let denom = 1.0 + params.omega() * (m.phi1 - m.phi0);
    let numer = match protocol.strategy {
        RecommendedStrategy::Full => {
            lambda * eta.eta1 * (1.0 - 2.0 * params.epsilon()) * params.b()
                + (1.0 - lambda) * eta.eta0 * params.s()
        }
        RecommendedStrategy::Strict => lambda * (1.0 - 2.0 * params.epsilon()) * params.b(),
        RecommendedStrategy::Null => return Err(AnalysisError::NullGap),
    };
    Ok(numer / denom)
}

/// Expected stationary social welfare per user and period,
/// `sum_theta eta(theta) * v(theta)`, at the fair request rate lambda = 1/2.
///
/// The full strategy admits a closed quadratic form in eta0; for the strict
/// strategy the definitional average is used (see
/// [`strict_welfare_printed`] for the commonly quoted variant), and the null
/// strategy generates no exchanges.
pub fn social_welfare(protocol: &Protocol, params: &IntrinsicParams, eta: &StationaryDist) -> f64 {
    debug_assert!((protocol.lambda - 0.5).abs() < 1e-12);
    let (b, c, s, eps) = (params.b(), params.c(), params.s(), params.epsilon());
    match protocol.strategy {
        RecommendedStrategy::Full => {
            0.5 * ((eta.eta0 * eta.eta0 - eta.eta0) * ((1.0 - 2.0 * eps) * b - s)
                + (1.0 - eps) * b
                - c
                - s)
        }
        RecommendedStrategy::Strict => {
            let v0 = 0.5 * (eps * b - c) - 0.5 * eta.eta1 * s;
            let v1 = 0.5 * ((1.0 - eps) * b - c) - 0.5 * eta.eta1 * s;
            eta.eta0 * v0 + eta.eta1 * v1
        }
        RecommendedStrategy::Null => 0.0,
    }
}

/// The frequently quoted closed form for strict-strategy welfare. It does
/// not equal the definitional average used by [`social_welfare`]; it is kept
/// for reference and documented by tests.
pub fn strict_welfare_printed(params: &IntrinsicParams, eta: &StationaryDist) -> f64 {
    let (b, c, s, eps) = (params.b(), params.c(), params.s(), params.epsilon());
    0.5 * (1.0 - eps) * b - c - s - eta.eta0 * ((1.0 - 2.0 * eps) * b + s)
}

/// Welfare of an ideal cooperative pair per period: one high-quality
/// exchange worth of surplus.
pub fn cooperative_benchmark(params: &IntrinsicParams) -> f64 {
    (1.0 - params.epsilon()) * params.b() - params.c() - params.s()
}

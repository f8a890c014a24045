//! Protocol primitives: intrinsic game parameters, binary ratings, design
//! (reward/punishment) parameters, recommended strategies and stage-game
//! payoffs.
//!
//! Validation happens at construction; operations assume valid inputs.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn ensure(cond: bool, msg: &str) -> Result<(), ModelError> {
    if cond {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter(msg.to_string()))
    }
}

/// Binary rating label carried by every user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rating {
    Bad,
    Good,
}

impl Rating {
    pub fn index(self) -> usize {
        match self {
            Rating::Bad => 0,
            Rating::Good => 1,
        }
    }

    pub fn from_index(i: usize) -> Rating {
        if i == 0 {
            Rating::Bad
        } else {
            Rating::Good
        }
    }

    pub const BOTH: [Rating; 2] = [Rating::Bad, Rating::Good];
}

/// Intrinsic parameters of the service exchange game: service benefit `b`,
/// request cost `c`, service (effort) cost `s`, report error probability
/// `epsilon` and continuation probability (discount factor) `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntrinsicParams {
    b: f64,
    c: f64,
    s: f64,
    epsilon: f64,
    omega: f64,
}

impl IntrinsicParams {
    pub fn new(b: f64, c: f64, s: f64, epsilon: f64, omega: f64) -> Result<Self, ModelError> {
        ensure(b.is_finite() && b > 0.0, "b must be finite and > 0")?;
        ensure(c.is_finite() && c >= 0.0, "c must be finite and >= 0")?;
        ensure(s.is_finite() && s >= 0.0, "s must be finite and >= 0")?;
        ensure(
            epsilon.is_finite() && (0.0..0.5).contains(&epsilon),
            "epsilon must lie in [0, 1/2)",
        )?;
        ensure(
            omega.is_finite() && (0.0..1.0).contains(&omega),
            "omega must lie in [0, 1)",
        )?;
        // A high-quality exchange must be worth requesting even through the
        // report noise, otherwise the game is degenerate.
        ensure(
            b > (c + s) / (1.0 - epsilon),
            "b must exceed (c + s) / (1 - epsilon)",
        )?;
        Ok(Self {
            b,
            c,
            s,
            epsilon,
            omega,
        })
    }

    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Same parameters with a different discount factor.
    pub fn with_omega(&self, omega: f64) -> Result<Self, ModelError> {
        Self::new(self.b, self.c, self.s, self.epsilon, omega)
    }
}

/// Rating-update design parameters. `alpha` rewards well-reported servers,
/// `beta` punishes badly-reported servers, `gamma` rewards clients that keep
/// their request rate at or below the fair share, `delta` punishes clients
/// that exceed it. All indexed by the current rating of the updated user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignParams {
    alpha: [f64; 2],
    beta: [f64; 2],
    gamma: [f64; 2],
    delta: [f64; 2],
}

impl DesignParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha0: f64,
        alpha1: f64,
        beta0: f64,
        beta1: f64,
        gamma0: f64,
        gamma1: f64,
        delta0: f64,
        delta1: f64,
    ) -> Result<Self, ModelError> {
        for (name, v) in [
            ("alpha0", alpha0),
            ("alpha1", alpha1),
            ("beta0", beta0),
            ("beta1", beta1),
            ("gamma0", gamma0),
            ("gamma1", gamma1),
            ("delta0", delta0),
            ("delta1", delta1),
        ] {
            ensure(
                v.is_finite() && (0.0..=1.0).contains(&v),
                &format!("{name} must lie in [0, 1]"),
            )?;
        }
        // alpha + beta = 1 makes the server rating update uninformative
        // (promotion probability independent of the report).
        ensure(
            (alpha0 + beta0 - 1.0).abs() > 1e-9,
            "alpha0 + beta0 must differ from 1",
        )?;
        ensure(
            (alpha1 + beta1 - 1.0).abs() > 1e-9,
            "alpha1 + beta1 must differ from 1",
        )?;
        Ok(Self {
            alpha: [alpha0, alpha1],
            beta: [beta0, beta1],
            gamma: [gamma0, gamma1],
            delta: [delta0, delta1],
        })
    }

    /// All reward/punishment factors set to one.
    pub fn all_ones() -> Self {
        Self {
            alpha: [1.0; 2],
            beta: [1.0; 2],
            gamma: [1.0; 2],
            delta: [1.0; 2],
        }
    }

    /// Everything pinned at one except the server punishment factors.
    pub fn with_betas(beta0: f64, beta1: f64) -> Result<Self, ModelError> {
        Self::new(1.0, 1.0, beta0, beta1, 1.0, 1.0, 1.0, 1.0)
    }

    pub fn alpha(&self, theta: Rating) -> f64 {
        self.alpha[theta.index()]
    }
    pub fn beta(&self, theta: Rating) -> f64 {
        self.beta[theta.index()]
    }
    pub fn gamma(&self, theta: Rating) -> f64 {
        self.gamma[theta.index()]
    }
    pub fn delta(&self, theta: Rating) -> f64 {
        self.delta[theta.index()]
    }
}

/// Recommended service strategy: which (server rating, client rating) pairs
/// should be served with high quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecommendedStrategy {
    /// Serve unless the server outranks the client (serve iff theta_s <= theta_c).
    Full,
    /// Serve only good-rated clients.
    Strict,
    /// Never serve.
    Null,
}

impl RecommendedStrategy {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "strict" => Ok(Self::Strict),
            "null" => Ok(Self::Null),
            other => Err(ModelError::InvalidParameter(format!(
                "unknown strategy '{other}' (expected full, strict or null)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Strict => "strict",
            Self::Null => "null",
        }
    }
}

/// High (1) or low (0) service quality the strategy recommends for a match.
pub fn recommended_action(
    strategy: RecommendedStrategy,
    server: Rating,
    client: Rating,
) -> u8 {
    match strategy {
        RecommendedStrategy::Full => u8::from(server.index() <= client.index()),
        RecommendedStrategy::Strict => u8::from(client == Rating::Good),
        RecommendedStrategy::Null => 0,
    }
}

/// A complete protocol: recommended strategy, rating-update design and the
/// per-period request probability of a compliant user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub strategy: RecommendedStrategy,
    pub design: DesignParams,
    pub lambda: f64,
}

impl Protocol {
    pub fn new(
        strategy: RecommendedStrategy,
        design: DesignParams,
        lambda: f64,
    ) -> Result<Self, ModelError> {
        ensure(
            lambda.is_finite() && (0.0..=1.0).contains(&lambda),
            "lambda must lie in [0, 1]",
        )?;
        Ok(Self {
            strategy,
            design,
            lambda,
        })
    }

    /// Protocol played compliantly: requests issued with probability 1/2.
    pub fn compliant(strategy: RecommendedStrategy, design: DesignParams) -> Self {
        Self {
            strategy,
            design,
            lambda: 0.5,
        }
    }
}

/// Expected (cost to server, benefit to client) of one match under a
/// recommended strategy, before report noise.
pub fn strategy_cost_benefit(
    strategy: RecommendedStrategy,
    server: Rating,
    client: Rating,
    params: &IntrinsicParams,
) -> (f64, f64) {
    if recommended_action(strategy, server, client) == 1 {
        (params.s(), params.b() - params.c())
    } else {
        (0.0, -params.c())
    }
}

/// Row player requests (C) or not (N); payoff pairs are (row, column).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffMatrix {
    pub cc: (f64, f64),
    pub cn: (f64, f64),
    pub nc: (f64, f64),
    pub nn: (f64, f64),
}

/// First-stage request game between two matched users, assuming second-stage
/// high-quality service whenever a request is made.
pub fn first_stage_payoffs(params: &IntrinsicParams) -> PayoffMatrix {
    let gain = (1.0 - params.epsilon()) * params.b() - params.c();
    let loss = -params.s();
    PayoffMatrix {
        cc: (gain + loss, gain + loss),
        cn: (gain, loss),
        nc: (loss, gain),
        nn: (0.0, 0.0),
    }
}

/// Second-stage (client, server) payoff pairs for high and low effort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GiftGivingPayoffs {
    pub high: (f64, f64),
    pub low: (f64, f64),
}

/// The one-shot gift-giving game a server faces once matched: serve with
/// high quality or shirk. Client valuations go through the report noise.
pub fn gift_giving_payoffs(params: &IntrinsicParams) -> GiftGivingPayoffs {
    let eps = params.epsilon();
    GiftGivingPayoffs {
        high: ((1.0 - eps) * params.b() - params.c(), -params.s()),
        low: (eps * params.b() - params.c(), 0.0),
    }
}

/// Distribution of the reported quality `r` in {0, 1} given actual quality
/// `q`: the report flips with probability epsilon.
pub fn report_distribution(q: u8, epsilon: f64) -> [f64; 2] {
    debug_assert!(q <= 1);
    let mut d = [epsilon, 1.0 - epsilon];
    if q == 0 {
        d.swap(0, 1);
    }
    d
}

/// Probability the server's next rating is good, given the reported quality
/// `r` and the recommendation for this match.
pub fn server_transition(
    server: Rating,
    client: Rating,
    r: u8,
    strategy: RecommendedStrategy,
    design: &DesignParams,
) -> f64 {
    if r >= recommended_action(strategy, server, client) {
        design.alpha(server)
    } else {
        1.0 - design.beta(server)
    }
}

/// Probability the client's next rating is good, given its request/serve
/// ratio `rho` relative to the fair share of one.
pub fn client_transition(client: Rating, rho: f64, design: &DesignParams) -> f64 {
    if rho <= 1.0 {
        design.gamma(client)
    } else {
        1.0 - design.delta(client)
    }
}

//! Game variants, best-response dispatch, Nash verification, uniqueness gates.
//!
//! Five variants share one shape — each user maximizes its own rate given the
//! others' strategies, and every best response is a waterfilling solve:
//!
//! - `G1`: power budget plus hard null constraints, solved on the projected
//!   channels;
//! - `G2`: soft shaping with average and peak caps (no separate power budget)
//!   plus optional nulls, solved on the shaped channels;
//! - `GAlpha`: power budget with virtual interference of strength `alpha`
//!   along prescribed directions added to the observed covariance;
//! - `GInfinity`: the `alpha -> infinity` limit, solved with the receive
//!   space reduced to the complement of those directions;
//! - `SisoMasked`: per-bin scalar play under spectral masks and a power
//!   budget, with an optional gap factor.
//!
//! A profile is a Nash equilibrium when no user's best response moves it;
//! [`GameSpec::is_nash`] measures exactly that residual.

use crate::channel::{
    mui_covariance, rate_with_interference, siso_rate, ChannelSet, SisoScenario, Strategy,
    StrategyProfile,
};
use crate::constraints::{
    check_feasible, hat_channels, modified_channels_g1, modified_channels_g2,
    virtual_noise_covariance, virtual_noise_direction, ConstraintSpec, FeasibilityReport,
    ModifiedChannels,
};
use crate::linalg::{spectral_radius, HermitianMatrix};
use crate::waterfilling::{
    capped_waterfill, mimo_waterfill, projected_waterfill, siso_masked_waterfill,
};
use crate::{Error, Result};

/// Physical medium the game is played on.
#[derive(Debug, Clone)]
pub enum GameChannels {
    Mimo(ChannelSet),
    Siso(SisoScenario),
}

impl GameChannels {
    pub fn users(&self) -> usize {
        match self {
            GameChannels::Mimo(ch) => ch.users(),
            GameChannels::Siso(s) => s.users(),
        }
    }

    pub fn mimo(&self) -> Result<&ChannelSet> {
        match self {
            GameChannels::Mimo(ch) => Ok(ch),
            GameChannels::Siso(_) => {
                Err(Error::BadParams("this game variant needs MIMO channels".into()))
            }
        }
    }

    pub fn siso(&self) -> Result<&SisoScenario> {
        match self {
            GameChannels::Siso(s) => Ok(s),
            GameChannels::Mimo(_) => {
                Err(Error::BadParams("this game variant needs a SISO scenario".into()))
            }
        }
    }
}

/// Which rate-maximization game is played.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GameVariant {
    G1,
    G2,
    GAlpha { alpha: f64 },
    GInfinity,
    SisoMasked,
}

/// A fully assembled game: channels, constraints, variant, and the
/// precomputed modified channels the variant waterfills over.
#[derive(Debug, Clone)]
pub struct GameSpec {
    channels: GameChannels,
    constraints: ConstraintSpec,
    variant: GameVariant,
    mods: ModifiedChannels,
}

impl GameSpec {
    pub fn new(
        channels: GameChannels,
        constraints: ConstraintSpec,
        variant: GameVariant,
    ) -> Result<Self> {
        if constraints.users() != channels.users() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint bundles for {} users",
                constraints.users(),
                channels.users()
            )));
        }
        let mods = match variant {
            GameVariant::G1 => {
                let ch = channels.mimo()?;
                require_power(&constraints)?;
                modified_channels_g1(ch, &constraints)?
            }
            GameVariant::G2 => {
                let ch = channels.mimo()?;
                for q in 0..constraints.users() {
                    if constraints.user(q).soft.is_none() {
                        return Err(Error::InvalidConstraints(format!(
                            "user {q}: the shaped game needs a soft pair"
                        )));
                    }
                }
                modified_channels_g2(ch, &constraints)?
            }
            GameVariant::GAlpha { alpha } => {
                if !(alpha >= 0.0) || !alpha.is_finite() {
                    return Err(Error::BadParams("alpha must be nonnegative and finite".into()));
                }
                let ch = channels.mimo()?;
                require_power(&constraints)?;
                constraints.validate_mimo(ch)?;
                let directions = virtual_directions(ch, &constraints)?;
                ModifiedChannels::VirtualNoise { directions }
            }
            GameVariant::GInfinity => {
                let ch = channels.mimo()?;
                require_power(&constraints)?;
                constraints.validate_mimo(ch)?;
                let directions = virtual_directions(ch, &constraints)?;
                hat_channels(ch, &directions)?
            }
            GameVariant::SisoMasked => {
                let s = channels.siso()?;
                require_power(&constraints)?;
                constraints.validate_siso(s.users(), s.bins())?;
                ModifiedChannels::Plain
            }
        };
        Ok(Self { channels, constraints, variant, mods })
    }

    pub fn users(&self) -> usize {
        self.channels.users()
    }

    pub fn channels(&self) -> &GameChannels {
        &self.channels
    }

    pub fn constraints(&self) -> &ConstraintSpec {
        &self.constraints
    }

    pub fn variant(&self) -> GameVariant {
        self.variant
    }

    pub fn modified(&self) -> &ModifiedChannels {
        &self.mods
    }

    /// The rate-maximizing strategy of user `q` against the rest of
    /// `profile`, i.e. the mapping whose fixed points are the Nash
    /// equilibria.
    pub fn best_response(&self, q: usize, profile: &StrategyProfile) -> Result<Strategy> {
        match self.variant {
            GameVariant::G1 => {
                let ch = self.channels.mimo()?;
                let budget = self.power(q)?;
                let res = projected_waterfill(q, profile, ch, &self.mods, budget)?;
                Ok(Strategy::Cov(res.covariance))
            }
            GameVariant::G2 => {
                let ch = self.channels.mimo()?;
                let soft = self.constraints.user(q).soft.as_ref().expect("validated");
                let peak = self.constraints.user(q).peak.unwrap_or(f64::INFINITY);
                let res =
                    capped_waterfill(q, profile, ch, &self.mods, soft.average_power, peak)?;
                Ok(Strategy::Cov(res.covariance))
            }
            GameVariant::GAlpha { alpha } => {
                let ch = self.channels.mimo()?;
                let budget = self.power(q)?;
                let gram = self.alpha_gram(q, profile, alpha)?;
                let res = mimo_waterfill(&gram, budget)?;
                Ok(Strategy::Cov(res.covariance))
            }
            GameVariant::GInfinity => {
                let budget = self.power(q)?;
                let (r_hat, h_hat) = self.reduced_parts(q, profile)?;
                let solved = crate::linalg::solve_hpd(&r_hat, h_hat)?;
                let gram = HermitianMatrix::symmetrized(h_hat.adjoint() * solved);
                let res = mimo_waterfill(&gram, budget)?;
                Ok(Strategy::Cov(res.covariance))
            }
            GameVariant::SisoMasked => {
                let s = self.channels.siso()?;
                let budget = self.power(q)?;
                let user = self.constraints.user(q);
                let gap = user.gap.unwrap_or(1.0);
                let p = siso_masked_waterfill(
                    q,
                    profile,
                    s,
                    budget,
                    user.masks.as_deref(),
                    gap,
                )?;
                Ok(Strategy::Power(p))
            }
        }
    }

    fn power(&self, q: usize) -> Result<f64> {
        self.constraints.user(q).power.ok_or_else(|| {
            Error::InvalidConstraints(format!("user {q}: this variant needs a power budget"))
        })
    }

    /// Gram matrix of the virtual-noise game:
    /// `H_qq^H (R_{-q} + alpha U^ U^^H)^{-1} H_qq`.
    fn alpha_gram(
        &self,
        q: usize,
        profile: &StrategyProfile,
        alpha: f64,
    ) -> Result<HermitianMatrix> {
        let ch = self.channels.mimo()?;
        let ModifiedChannels::VirtualNoise { directions } = &self.mods else {
            return Err(Error::BadParams("virtual-noise game expected".into()));
        };
        let mut r_mui = mui_covariance(q, profile, ch)?.into_matrix();
        if let Some(dir) = &directions[q] {
            r_mui += virtual_noise_covariance(dir, alpha)?.as_matrix();
        }
        let r_mui = HermitianMatrix::symmetrized(r_mui);
        let h = ch.link(q, q);
        let solved = crate::linalg::solve_hpd(&r_mui, h)?;
        Ok(HermitianMatrix::symmetrized(h.adjoint() * solved))
    }

    /// Reduced interference covariance and direct channel of the limit game.
    fn reduced_parts(
        &self,
        q: usize,
        profile: &StrategyProfile,
    ) -> Result<(HermitianMatrix, &crate::linalg::CMat)> {
        let ModifiedChannels::Reduced { links, reduced_noise, .. } = &self.mods else {
            return Err(Error::BadParams("reduced-channel game expected".into()));
        };
        let users = self.users();
        let mut acc = reduced_noise[q].as_matrix().clone();
        for r in 0..users {
            if r == q {
                continue;
            }
            let h = &links[r * users + q];
            acc += h * profile.covariance(r)? * h.adjoint();
        }
        Ok((HermitianMatrix::symmetrized(acc), &links[q * users + q]))
    }

    /// Payoff rate of user `q` in bits: the objective this variant's best
    /// response maximizes. For `G1`, `G2` and masked SISO play this is the
    /// physical information rate; the virtual-noise and reduced games score
    /// against their modified interference models.
    pub fn payoff(&self, q: usize, profile: &StrategyProfile) -> Result<f64> {
        match self.variant {
            GameVariant::G1 | GameVariant::G2 => {
                let ch = self.channels.mimo()?;
                let r_mui = mui_covariance(q, profile, ch)?;
                rate_with_interference(&r_mui, ch.link(q, q), profile.covariance(q)?)
            }
            GameVariant::GAlpha { alpha } => {
                let ch = self.channels.mimo()?;
                let ModifiedChannels::VirtualNoise { directions } = &self.mods else {
                    return Err(Error::BadParams("virtual-noise game expected".into()));
                };
                let mut r_mui = mui_covariance(q, profile, ch)?.into_matrix();
                if let Some(dir) = &directions[q] {
                    r_mui += virtual_noise_covariance(dir, alpha)?.as_matrix();
                }
                rate_with_interference(
                    &HermitianMatrix::symmetrized(r_mui),
                    ch.link(q, q),
                    profile.covariance(q)?,
                )
            }
            GameVariant::GInfinity => {
                let (r_hat, h_hat) = self.reduced_parts(q, profile)?;
                rate_with_interference(&r_hat, h_hat, profile.covariance(q)?)
            }
            GameVariant::SisoMasked => {
                let s = self.channels.siso()?;
                let gap = self.constraints.user(q).gap.unwrap_or(1.0);
                siso_rate(s, q, profile, gap)
            }
        }
    }

    /// Payoff rates of every user.
    pub fn rates(&self, profile: &StrategyProfile) -> Result<Vec<f64>> {
        (0..self.users()).map(|q| self.payoff(q, profile)).collect()
    }

    /// Feasibility of one user's strategy under this variant's constraints.
    pub fn check_strategy(&self, q: usize, strategy: &Strategy) -> Result<FeasibilityReport> {
        check_feasible(strategy, self.constraints.user(q))
    }

    /// Verifies the Nash property: per-user relative best-response residuals
    /// `|Q_q - T_q(Q_{-q})|_F / max(1, |Q_q|_F)`, all below `epsilon`.
    pub fn is_nash(&self, profile: &StrategyProfile, epsilon: f64) -> Result<NEReport> {
        let mut residuals = Vec::with_capacity(self.users());
        for q in 0..self.users() {
            let br = self.best_response(q, profile)?;
            let dist = profile.strategy(q).distance(&br);
            residuals.push(dist / profile.strategy(q).frobenius_norm().max(1.0));
        }
        let rates = self.rates(profile)?;
        let is_nash = residuals.iter().all(|&r| r <= epsilon);
        Ok(NEReport { residuals, rates, is_nash, epsilon })
    }
}

fn require_power(cs: &ConstraintSpec) -> Result<()> {
    for q in 0..cs.users() {
        if cs.user(q).power.is_none() {
            return Err(Error::InvalidConstraints(format!(
                "user {q}: this variant needs a power budget"
            )));
        }
    }
    Ok(())
}

/// Virtual-noise directions realizing the users' null constraints:
/// `U^_q = H_qq U_q` for users that have one.
fn virtual_directions(
    ch: &ChannelSet,
    cs: &ConstraintSpec,
) -> Result<Vec<Option<crate::linalg::CMat>>> {
    (0..ch.users())
        .map(|q| {
            cs.user(q)
                .null_space
                .as_ref()
                .map(|u| virtual_noise_direction(ch.link(q, q), u))
                .transpose()
        })
        .collect()
}

/// Outcome of a Nash check.
#[derive(Debug, Clone)]
pub struct NEReport {
    /// Per-user relative best-response residuals.
    pub residuals: Vec<f64>,
    /// Per-user payoff rates at the checked profile.
    pub rates: Vec<f64>,
    /// True when every residual is at most `epsilon`.
    pub is_nash: bool,
    pub epsilon: f64,
}

/// Default relative tolerance for declaring a profile a Nash equilibrium.
pub const NASH_EPSILON: f64 = 1e-7;

/// Evaluation of a pair of sufficient uniqueness conditions. Margins are
/// `1 - max LHS`, so positive means the condition holds.
#[derive(Debug, Clone)]
pub struct UniquenessReport {
    /// Per-receiver interference sums (the "low received MUI" side).
    pub received_lhs: Vec<f64>,
    /// Per-transmitter interference sums (the "low generated MUI" side).
    pub generated_lhs: Vec<f64>,
    pub received_ok: bool,
    pub generated_ok: bool,
}

impl UniquenessReport {
    fn from_terms(terms: &[Vec<f64>], users: usize) -> Self {
        let mut received_lhs = vec![0.0; users];
        let mut generated_lhs = vec![0.0; users];
        for r in 0..users {
            for q in 0..users {
                if r == q {
                    continue;
                }
                received_lhs[q] += terms[r][q];
                generated_lhs[r] += terms[r][q];
            }
        }
        let received_ok = received_lhs.iter().all(|&x| x < 1.0);
        let generated_ok = generated_lhs.iter().all(|&x| x < 1.0);
        Self { received_lhs, generated_lhs, received_ok, generated_ok }
    }

    pub fn any_holds(&self) -> bool {
        self.received_ok || self.generated_ok
    }

    pub fn received_margin(&self) -> f64 {
        1.0 - self.received_lhs.iter().copied().fold(0.0, f64::max)
    }

    pub fn generated_margin(&self) -> f64 {
        1.0 - self.generated_lhs.iter().copied().fold(0.0, f64::max)
    }
}

/// Sufficient uniqueness conditions for the masked SISO game: per-bin
/// channel-gain ratios, unnormalized by distances. The scenario responses are
/// the physical ones (path loss included); `distances` (row-major `d_rq`,
/// unit when absent) factor the path loss back out.
pub fn uniqueness_siso(s: &SisoScenario, distances: Option<&[f64]>) -> Result<UniquenessReport> {
    let users = s.users();
    if let Some(d) = distances {
        if d.len() != users * users {
            return Err(Error::DimensionMismatch("distance grid must be Q x Q".into()));
        }
    }
    let dist = |r: usize, q: usize| distances.map(|d| d[r * users + q]).unwrap_or(1.0);
    let mut terms = vec![vec![0.0; users]; users];
    for r in 0..users {
        for q in 0..users {
            if r == q {
                continue;
            }
            let scale = (dist(r, q) / dist(q, q)).powi(2);
            let mut worst = 0.0f64;
            for k in 0..s.bins() {
                let direct = s.response(q, q, k).norm_sqr();
                if direct <= 0.0 {
                    return Err(Error::SingularDirectChannel(q));
                }
                worst = worst.max(s.response(r, q, k).norm_sqr() / direct);
            }
            terms[r][q] = worst * scale;
        }
    }
    Ok(UniquenessReport::from_terms(&terms, users))
}

/// Sufficient uniqueness conditions for the MIMO game: sums of
/// `rho(H_rq^H H_qq^{-H} H_qq^{-1} H_rq)` per receiver ("low MUI received")
/// and per transmitter ("low MUI generated").
pub fn uniqueness_mimo(ch: &ChannelSet) -> Result<UniquenessReport> {
    let users = ch.users();
    let mut terms = vec![vec![0.0; users]; users];
    for q in 0..users {
        let lu = ch.link(q, q).clone().lu();
        for r in 0..users {
            if r == q {
                continue;
            }
            let whitened = lu
                .solve(ch.link(r, q))
                .ok_or(Error::SingularDirectChannel(q))?;
            let gram = whitened.adjoint() * &whitened;
            terms[r][q] = spectral_radius(&gram);
        }
    }
    Ok(UniquenessReport::from_terms(&terms, users))
}

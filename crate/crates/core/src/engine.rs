//! Totally asynchronous iterative waterfilling.
//!
//! The engine iterates `Q^(n+1)_q = T_q(Q^(tau^q(n))_{-q})` for `n in T_q`,
//! leaving `Q_q` unchanged otherwise: at its update ticks each user best
//! responds to a possibly outdated snapshot of the other users' strategies.
//! A history buffer of depth `D + 1` (the maximum information delay) serves
//! the delayed reads, so every read is bit-identical to the committed profile
//! of the tick it refers to.
//!
//! Three schedules are provided. Sequential updates one user per tick and
//! simultaneous updates all of them, both with fresh information; the
//! randomized schedule updates each user with a given probability on
//! information aged uniformly up to `D` ticks, forcing an update after `D`
//! idle ticks so every user updates at least once every `D + 1` ticks.
//!
//! Convergence requires both a quiet window (`D + 1` consecutive ticks whose
//! largest relative strategy change stays below `tol`) and a Nash residual
//! check at `10 * tol` — a small step alone can stall away from a fixed
//! point.

use std::collections::VecDeque;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::channel::{ChannelSet, Strategy, StrategyProfile};
use crate::constraints::{ConstraintSpec, ModifiedChannels};
use crate::game::{uniqueness_mimo, GameChannels, GameSpec, GameVariant, NEReport, UniquenessReport};
use crate::linalg::{range_basis, CMat, HermitianMatrix, RANK_TOL};
use crate::{Error, Result};

/// Update-schedule flavors.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// User `n mod Q` updates at tick `n`, fresh information.
    Sequential,
    /// Every user updates every tick on the previous tick's committed
    /// profile.
    Simultaneous,
    /// Each user updates with probability `update_probability` per tick on
    /// information aged uniformly in `[0, max_delay]` ticks, forced after
    /// `max_delay` idle ticks. Deterministic under `seed`.
    Randomized { update_probability: f64, max_delay: usize, seed: u64 },
}

/// A validated schedule for `users` players.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    users: usize,
}

/// Builds a schedule, validating the parameters.
pub fn make_schedule(kind: ScheduleKind, users: usize) -> Result<Schedule> {
    if users == 0 {
        return Err(Error::BadParams("schedule needs at least one user".into()));
    }
    if let ScheduleKind::Randomized { update_probability, .. } = &kind {
        if !(*update_probability > 0.0 && *update_probability <= 1.0) {
            return Err(Error::BadParams(format!(
                "update probability {update_probability} outside (0, 1]"
            )));
        }
    }
    Ok(Schedule { kind, users })
}

impl Schedule {
    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Maximum information delay `D` of this schedule.
    pub fn max_delay(&self) -> usize {
        match &self.kind {
            ScheduleKind::Sequential | ScheduleKind::Simultaneous => 0,
            ScheduleKind::Randomized { max_delay, .. } => *max_delay,
        }
    }

    /// Starts a deterministic realization of the schedule.
    pub fn realize(&self) -> ScheduleRealization {
        let rng = match &self.kind {
            ScheduleKind::Randomized { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        ScheduleRealization {
            schedule: self.clone(),
            rng,
            idle: vec![0; self.users],
            next_tick: 0,
        }
    }
}

/// What happens at one tick: who updates, and the information age
/// `tau[q][r]` (an absolute tick index `<= n`) each updater reads user `r`
/// at.
#[derive(Debug, Clone)]
pub struct TickPlan {
    pub tick: usize,
    pub updaters: Vec<usize>,
    /// `ages[q][r]` is meaningful for `q` in `updaters`, `r != q`.
    pub ages: Vec<Vec<usize>>,
}

/// Deterministic tick-by-tick unfolding of a [`Schedule`]. Ticks must be
/// drawn in order; replaying a fresh realization of the same schedule yields
/// the identical sequence.
pub struct ScheduleRealization {
    schedule: Schedule,
    rng: Option<ChaCha8Rng>,
    idle: Vec<usize>,
    next_tick: usize,
}

impl ScheduleRealization {
    /// The plan for tick `n`; must be called with consecutive `n` starting
    /// at 0.
    pub fn plan(&mut self, n: usize) -> TickPlan {
        assert_eq!(n, self.next_tick, "ticks must be drawn in order");
        self.next_tick += 1;
        let users = self.schedule.users;
        match &self.schedule.kind {
            ScheduleKind::Sequential => TickPlan {
                tick: n,
                updaters: vec![n % users],
                ages: vec![vec![n; users]; users],
            },
            ScheduleKind::Simultaneous => TickPlan {
                tick: n,
                updaters: (0..users).collect(),
                ages: vec![vec![n; users]; users],
            },
            ScheduleKind::Randomized { update_probability, max_delay, .. } => {
                let rng = self.rng.as_mut().expect("randomized schedule has an rng");
                let p = *update_probability;
                let d = *max_delay;
                // Fixed draw order per tick keeps realizations replayable.
                let mut updaters = Vec::new();
                for q in 0..users {
                    let drawn = rng.random::<f64>() < p;
                    if drawn || self.idle[q] >= d {
                        updaters.push(q);
                    }
                }
                let mut ages = vec![vec![n; users]; users];
                let window = n.min(d);
                for q in 0..users {
                    for r in 0..users {
                        let delay = rng.random_range(0..=window);
                        ages[q][r] = n - delay;
                    }
                }
                for q in 0..users {
                    if updaters.contains(&q) {
                        self.idle[q] = 0;
                    } else {
                        self.idle[q] += 1;
                    }
                }
                TickPlan { tick: n, updaters, ages }
            }
        }
    }
}

/// Initial-profile presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitPreset {
    /// All-zero strategies (feasible for every variant).
    Zero,
    /// Isotropic power spread over the variant's allowed subspace, scaled to
    /// its budget.
    UniformProjected,
}

/// Builds a feasible starting profile for `spec`.
pub fn initial_profile(preset: InitPreset, spec: &GameSpec) -> Result<StrategyProfile> {
    let users = spec.users();
    let mut strategies = Vec::with_capacity(users);
    for q in 0..users {
        strategies.push(initial_strategy(preset, spec, q)?);
    }
    Ok(StrategyProfile::from_strategies(strategies))
}

fn initial_strategy(preset: InitPreset, spec: &GameSpec, q: usize) -> Result<Strategy> {
    match spec.variant() {
        GameVariant::SisoMasked => {
            let s = spec.channels().siso()?;
            let n = s.bins();
            match preset {
                InitPreset::Zero => Ok(Strategy::Power(vec![0.0; n])),
                InitPreset::UniformProjected => {
                    let budget = spec.constraints().user(q).power.expect("validated");
                    let masks = spec.constraints().user(q).masks.clone();
                    Ok(Strategy::Power(uniform_under_masks(n, budget, masks.as_deref())))
                }
            }
        }
        GameVariant::G1 | GameVariant::GAlpha { .. } | GameVariant::GInfinity => {
            let ch = spec.channels().mimo()?;
            let n = ch.dim(q);
            match preset {
                InitPreset::Zero => Ok(Strategy::Cov(CMat::zeros(n, n))),
                InitPreset::UniformProjected => {
                    let budget = spec.constraints().user(q).power.expect("validated");
                    let proj = match spec.modified() {
                        ModifiedChannels::Projected { projectors, .. } => projectors[q].clone(),
                        // The virtual-noise games constrain only the trace.
                        _ => CMat::identity(n, n),
                    };
                    let rank = proj.trace().re.round().max(1.0);
                    Ok(Strategy::Cov(proj.scale(budget / rank)))
                }
            }
        }
        GameVariant::G2 => {
            let ch = spec.channels().mimo()?;
            let n = ch.dim(q);
            match preset {
                InitPreset::Zero => Ok(Strategy::Cov(CMat::zeros(n, n))),
                InitPreset::UniformProjected => {
                    let ModifiedChannels::Shaped { projectors, shaping_pinv, .. } =
                        spec.modified()
                    else {
                        return Err(Error::BadParams("shaped game expected".into()));
                    };
                    let soft = spec.constraints().user(q).soft.as_ref().expect("validated");
                    let peak = spec.constraints().user(q).peak.unwrap_or(f64::INFINITY);
                    // Isotropic in the shaped coordinates, restricted to the
                    // subspace the best responses live in.
                    let reachable = &projectors[q] * &shaping_pinv[q];
                    let basis = range_basis(&reachable, RANK_TOL);
                    let rank = basis.ncols().max(1) as f64;
                    let level = (soft.average_power / rank).min(peak);
                    let shaped = (&basis * basis.adjoint()).scale(level);
                    let g_pinv = &shaping_pinv[q];
                    let cov = HermitianMatrix::symmetrized(
                        g_pinv.adjoint() * shaped * g_pinv,
                    )
                    .into_matrix();
                    Ok(Strategy::Cov(cov))
                }
            }
        }
    }
}

/// Largest uniform level under per-bin caps: `p_k = min(t, mask_k)` with
/// `sum_k p_k = budget`.
fn uniform_under_masks(bins: usize, budget: f64, masks: Option<&[f64]>) -> Vec<f64> {
    let Some(masks) = masks else {
        return vec![budget / bins as f64; bins];
    };
    let mut sorted: Vec<f64> = masks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("masks are not NaN"));
    let mut remaining = budget;
    let mut saturated = 0.0;
    let mut level = budget / bins as f64;
    for (i, &m) in sorted.iter().enumerate() {
        let open = (bins - i) as f64;
        let candidate = remaining / open;
        if candidate <= m {
            level = candidate;
            break;
        }
        remaining -= m;
        saturated += m;
        level = f64::INFINITY; // everything below this point saturates
    }
    let _ = saturated;
    masks.iter().map(|&m| level.min(m)).collect()
}

/// Engine options.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-8 }
    }
}

/// Outcome of an engine run.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Final committed profile (the best-so-far when not converged).
    pub profile: StrategyProfile,
    pub converged: bool,
    /// Ticks executed.
    pub iterations: usize,
    /// Per-user payoff rates per tick; row 0 is the initial profile.
    pub rate_trajectory: Vec<Vec<f64>>,
    /// Largest per-user relative strategy change per tick.
    pub step_trajectory: Vec<f64>,
    /// Nash report of the final profile at `10 * tol`.
    pub report: NEReport,
}

/// Everything an observer sees after each committed tick.
pub struct TickEvent<'a> {
    pub plan: &'a TickPlan,
    /// Profile committed at the end of this tick.
    pub profile: &'a StrategyProfile,
}

/// Runs the asynchronous iterative waterfilling loop. See
/// [`run_with_observer`] for observation hooks.
pub fn run(
    spec: &GameSpec,
    schedule: &Schedule,
    init: &StrategyProfile,
    opts: &RunOptions,
) -> Result<RunResult> {
    run_with_observer(spec, schedule, init, opts, |_| {})
}

/// Runs the loop, invoking `observer` after every committed tick.
pub fn run_with_observer(
    spec: &GameSpec,
    schedule: &Schedule,
    init: &StrategyProfile,
    opts: &RunOptions,
    mut observer: impl FnMut(&TickEvent),
) -> Result<RunResult> {
    if schedule.users() != spec.users() {
        return Err(Error::BadParams("schedule and game disagree on the user count".into()));
    }
    if opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(Error::BadParams("need max_iter >= 1 and tol > 0".into()));
    }
    check_init(spec, init)?;

    let delay = schedule.max_delay();
    let mut realization = schedule.realize();
    // history.back() is the profile committed at the current tick; depth
    // covers the deepest allowed read.
    let mut history: VecDeque<StrategyProfile> = VecDeque::with_capacity(delay + 2);
    history.push_back(init.clone());

    let mut rate_trajectory = vec![spec.rates(init)?];
    let mut step_trajectory: Vec<f64> = Vec::new();
    let mut quiet: usize = 0;

    for n in 0..opts.max_iter {
        let plan = realization.plan(n);
        let current = history.back().expect("history is never empty").clone();
        let mut next = current.clone();
        for &q in &plan.updaters {
            let view = delayed_view(q, &plan, &history, n, &current);
            let br = spec.best_response(q, &view)?;
            next.set(q, br);
        }

        let mut step = 0.0f64;
        for q in 0..spec.users() {
            let d = next.strategy(q).distance(current.strategy(q));
            step = step.max(d / current.strategy(q).frobenius_norm().max(1.0));
        }

        history.push_back(next);
        while history.len() > delay + 1 {
            history.pop_front();
        }
        let committed = history.back().expect("just pushed");

        observer(&TickEvent { plan: &plan, profile: committed });
        rate_trajectory.push(spec.rates(committed)?);
        step_trajectory.push(step);

        quiet = if step <= opts.tol { quiet + 1 } else { 0 };
        if quiet >= delay + 1 {
            let report = spec.is_nash(committed, 10.0 * opts.tol)?;
            if report.is_nash {
                return Ok(RunResult {
                    profile: committed.clone(),
                    converged: true,
                    iterations: n + 1,
                    rate_trajectory,
                    step_trajectory,
                    report,
                });
            }
            quiet = 0; // quiet but not at a fixed point; keep iterating
        }
    }

    let final_profile = history.back().expect("history is never empty").clone();
    let report = spec.is_nash(&final_profile, 10.0 * opts.tol)?;
    Ok(RunResult {
        profile: final_profile,
        converged: false,
        iterations: opts.max_iter,
        rate_trajectory,
        step_trajectory,
        report,
    })
}

/// Assembles the profile user `q` reads at tick `n`: user `r`'s strategy at
/// tick `ages[q][r]`, own strategy current.
fn delayed_view(
    q: usize,
    plan: &TickPlan,
    history: &VecDeque<StrategyProfile>,
    n: usize,
    current: &StrategyProfile,
) -> StrategyProfile {
    let newest = n; // history.back() is the profile committed entering tick n
    let mut strategies: Vec<Strategy> = Vec::with_capacity(current.users());
    for r in 0..current.users() {
        if r == q {
            strategies.push(current.strategy(q).clone());
            continue;
        }
        let tau = plan.ages[q][r];
        let back = newest - tau; // 0 = newest
        let idx = history.len() - 1 - back.min(history.len() - 1);
        strategies.push(history[idx].strategy(r).clone());
    }
    StrategyProfile::from_strategies(strategies)
}

fn check_init(spec: &GameSpec, init: &StrategyProfile) -> Result<()> {
    if init.users() != spec.users() {
        return Err(Error::InfeasibleInit(format!(
            "profile has {} users, game has {}",
            init.users(),
            spec.users()
        )));
    }
    for q in 0..spec.users() {
        match (spec.variant(), init.strategy(q)) {
            (GameVariant::SisoMasked, Strategy::Power(p)) => {
                let bins = spec.channels().siso()?.bins();
                if p.len() != bins {
                    return Err(Error::InfeasibleInit(format!(
                        "user {q}: power vector has {} bins, scenario has {bins}",
                        p.len()
                    )));
                }
            }
            (GameVariant::SisoMasked, Strategy::Cov(_)) => {
                return Err(Error::InfeasibleInit(format!(
                    "user {q}: masked SISO play needs power-vector strategies"
                )));
            }
            (_, Strategy::Cov(m)) => {
                let n = spec.channels().mimo()?.dim(q);
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::InfeasibleInit(format!(
                        "user {q}: covariance is {}x{}, channel needs {n}x{n}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
            }
            (_, Strategy::Power(_)) => {
                return Err(Error::InfeasibleInit(format!(
                    "user {q}: MIMO play needs covariance strategies"
                )));
            }
        }
        let report = spec.check_strategy(q, init.strategy(q))?;
        if !report.feasible() {
            let worst = report.worst().expect("infeasible report has checks");
            return Err(Error::InfeasibleInit(format!(
                "user {q}: {} constraint violated by {:.3e}",
                worst.constraint, worst.residual
            )));
        }
    }
    Ok(())
}

/// Residual curve of the virtual-noise game against its infinite-strength
/// limit.
#[derive(Debug, Clone)]
pub struct VirtualNoiseCurve {
    pub alphas: Vec<f64>,
    /// `max_q |U_q^H Q_q(alpha)|_F / |Q_q(alpha)|_F` per grid point.
    pub null_residuals: Vec<f64>,
    /// `max_q |Q_q(alpha) - Q_q(infinity)|_F` per grid point.
    pub limit_gaps: Vec<f64>,
    /// Null residual of the limit game itself.
    pub limit_null_residual: f64,
    /// Uniqueness gate evaluated on the physical channels (reported, not
    /// enforced).
    pub uniqueness: UniquenessReport,
}

/// Solves the virtual-noise game across `alphas` and its limit game, and
/// reports how fast the equilibria approach the hard null constraints.
pub fn virtual_noise_limit_check(
    ch: &ChannelSet,
    cs: &ConstraintSpec,
    alphas: &[f64],
    schedule: &Schedule,
    opts: &RunOptions,
) -> Result<VirtualNoiseCurve> {
    let uniqueness = uniqueness_mimo(ch)?;
    let limit_spec = GameSpec::new(
        GameChannels::Mimo(ch.clone()),
        cs.clone(),
        GameVariant::GInfinity,
    )?;
    let init = initial_profile(InitPreset::Zero, &limit_spec)?;
    let limit_run = run(&limit_spec, schedule, &init, opts)?;
    if !limit_run.converged {
        return Err(Error::NonConvergence(opts.max_iter));
    }
    let limit_null_residual = null_residual(cs, &limit_run.profile)?;

    let mut null_residuals = Vec::with_capacity(alphas.len());
    let mut limit_gaps = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let spec = GameSpec::new(
            GameChannels::Mimo(ch.clone()),
            cs.clone(),
            GameVariant::GAlpha { alpha },
        )?;
        let init = initial_profile(InitPreset::Zero, &spec)?;
        let result = run(&spec, schedule, &init, opts)?;
        if !result.converged {
            return Err(Error::NonConvergence(opts.max_iter));
        }
        null_residuals.push(null_residual(cs, &result.profile)?);
        let mut gap = 0.0f64;
        for q in 0..ch.users() {
            gap = gap.max(
                result
                    .profile
                    .strategy(q)
                    .distance(limit_run.profile.strategy(q)),
            );
        }
        limit_gaps.push(gap);
    }
    Ok(VirtualNoiseCurve {
        alphas: alphas.to_vec(),
        null_residuals,
        limit_gaps,
        limit_null_residual,
        uniqueness,
    })
}

fn null_residual(cs: &ConstraintSpec, profile: &StrategyProfile) -> Result<f64> {
    let mut worst = 0.0f64;
    for q in 0..cs.users() {
        if let Some(u) = &cs.user(q).null_space {
            let cov = profile.covariance(q)?;
            let leak = (u.adjoint() * cov).norm();
            worst = worst.max(leak / cov.norm().max(1e-300));
        }
    }
    Ok(worst)
}

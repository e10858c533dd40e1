//! Best-response solvers: every one of them is a waterfilling problem.
//!
//! The classical solver maximizes `log2 det(I + S Q)` over `{Q >= 0,
//! Tr(Q) <= P}` for a Hermitian PSD "whitened-channel Gram" `S`: diagonalize
//! `S`, pour power `p_k = (mu - 1/lambda_k)^+` onto its eigenvectors, and set
//! the water level `mu` so the budget is met with equality.
//!
//! The other solvers reduce to the same kernel: the projected solver feeds it
//! the null-projected Gram, the capped solver clips each mode at the peak
//! power and pre/post-multiplies by the shaping pseudoinverse, and the masked
//! scalar solver runs it per frequency bin with the masks as caps.
//!
//! The water level is found by bisection on the monotone budget function
//! `mu -> sum_k clip(mu - 1/lambda_k, 0, cap_k)` over the bracket
//! `[min_k 1/lambda_k, max_k 1/lambda_k + budget]` (expanded if the caps push
//! the solution beyond it), followed by an exact active-set refinement so the
//! budget holds to relative 1e-10 and breakpoint ties resolve to exactly 0 or
//! exactly the cap.

use crate::channel::{mui_covariance, siso_interference, SisoScenario, StrategyProfile};
use crate::channel::ChannelSet;
use crate::constraints::ModifiedChannels;
use crate::linalg::{c, hermitian_eig, solve_hpd, CMat, HermitianMatrix, RANK_TOL};
use crate::{Error, Result};

/// Relative budget tolerance: the output meets the power budget within
/// `BUDGET_TOL * budget`.
pub const BUDGET_TOL: f64 = 1e-10;

/// Relative bisection tolerance on the water level.
const LEVEL_TOL: f64 = 1e-12;

/// Outcome of a matrix waterfilling solve.
#[derive(Debug, Clone)]
pub struct WaterfillResult {
    /// The optimal transmit covariance.
    pub covariance: CMat,
    /// Water level `mu`.
    pub water_level: f64,
    /// Positive eigenvalues of the Gram matrix that were waterfilled
    /// (descending).
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors matching `eigenvalues`, as columns.
    pub eigenvectors: CMat,
    /// Power poured on each retained eigenvector.
    pub powers: Vec<f64>,
    /// Total power actually allocated.
    pub achieved_budget: f64,
}

fn budget_at(mu: f64, inv: &[f64], caps: Option<&[f64]>) -> f64 {
    inv.iter()
        .enumerate()
        .map(|(k, &b)| {
            let cap = caps.map(|cc| cc[k]).unwrap_or(f64::INFINITY);
            (mu - b).clamp(0.0, cap)
        })
        .sum()
}

/// Water level `mu` such that `sum_k clip(mu - 1/lambda_k, 0, cap_k)` equals
/// `budget`.
///
/// All gains must be positive and the caps must admit the budget; entries of
/// `caps` may be `f64::INFINITY`, and `caps = None` means uncapped.
pub fn water_level(gains: &[f64], budget: f64, caps: Option<&[f64]>) -> Result<f64> {
    if gains.is_empty() {
        return Err(Error::ZeroChannel);
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::BadParams("budget must be positive and finite".into()));
    }
    if gains.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::BadParams("waterfilling gains must be positive".into()));
    }
    if let Some(cc) = caps {
        if cc.len() != gains.len() {
            return Err(Error::DimensionMismatch("one cap per gain required".into()));
        }
        if cc.iter().any(|&x| x < 0.0 || x.is_nan()) {
            return Err(Error::BadParams("caps must be nonnegative".into()));
        }
    }
    let tol_budget = BUDGET_TOL * budget;
    let inv: Vec<f64> = gains.iter().map(|&l| 1.0 / l).collect();
    let cap_sum: f64 = caps.map(|cc| cc.iter().sum()).unwrap_or(f64::INFINITY);
    if cap_sum < budget - tol_budget {
        return Err(Error::InfeasibleBudget { budget, capacity: cap_sum });
    }
    if cap_sum <= budget + tol_budget {
        // Every mode is capped; the level sits at the last breakpoint.
        let caps = caps.expect("finite cap sum implies caps");
        let mu = inv
            .iter()
            .zip(caps)
            .map(|(&b, &cap)| b + cap)
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(mu);
    }

    let mut lo = inv.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = inv.iter().copied().fold(f64::NEG_INFINITY, f64::max) + budget;
    while budget_at(hi, &inv, caps) < budget {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if budget_at(mid, &inv, caps) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= LEVEL_TOL * hi.abs().max(1.0) {
            break;
        }
    }
    let guess = 0.5 * (lo + hi);

    // Active-set refinement: classify each mode at the bisected level, then
    // solve the resulting linear equation for mu exactly.
    let mut free = Vec::new();
    let mut capped_power = 0.0;
    let mut inv_sum = 0.0;
    for (k, &b) in inv.iter().enumerate() {
        let cap = caps.map(|cc| cc[k]).unwrap_or(f64::INFINITY);
        if guess <= b {
            continue; // zero mode
        }
        if guess - b >= cap {
            capped_power += cap;
        } else {
            free.push(k);
            inv_sum += b;
        }
    }
    if !free.is_empty() {
        let mu = (budget - capped_power + inv_sum) / free.len() as f64;
        let consistent = inv.iter().enumerate().all(|(k, &b)| {
            let cap = caps.map(|cc| cc[k]).unwrap_or(f64::INFINITY);
            if free.contains(&k) {
                mu >= b - tol_budget && mu - b <= cap + tol_budget
            } else if guess <= b {
                mu <= b + tol_budget.max(1e-12 * b.abs())
            } else {
                mu - b >= cap - tol_budget
            }
        });
        if consistent {
            return Ok(mu);
        }
    }
    Ok(guess)
}

/// Water level plus the resulting per-mode powers.
pub fn waterfill_powers(
    gains: &[f64],
    budget: f64,
    caps: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let mu = water_level(gains, budget, caps)?;
    let powers = gains
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let cap = caps.map(|cc| cc[k]).unwrap_or(f64::INFINITY);
            (mu - 1.0 / l).clamp(0.0, cap)
        })
        .collect();
    Ok((mu, powers))
}

/// Classical MIMO waterfilling: maximizes `log2 det(I + S Q)` over
/// `{Q >= 0, Tr(Q) = budget}` for a Hermitian PSD Gram `S`.
///
/// Eigenvalues of `S` below `RANK_TOL * lambda_max` are treated as zero
/// channel directions and receive no power; the output covariance commutes
/// with `S`.
pub fn mimo_waterfill(s: &HermitianMatrix, budget: f64) -> Result<WaterfillResult> {
    if !(budget > 0.0) {
        return Err(Error::BadParams("budget must be positive".into()));
    }
    let eig = hermitian_eig(s);
    let lambda_max = eig.values.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(Error::ZeroChannel);
    }
    let active = eig.values.iter().filter(|&&l| l > RANK_TOL * lambda_max).count();
    let gains = eig.values[..active].to_vec();
    let (mu, powers) = waterfill_powers(&gains, budget, None)?;
    let vectors = eig.vectors.columns(0, active).into_owned();
    let covariance = assemble_covariance(&vectors, &powers);
    let achieved = powers.iter().sum();
    Ok(WaterfillResult {
        covariance,
        water_level: mu,
        eigenvalues: gains,
        eigenvectors: vectors,
        powers,
        achieved_budget: achieved,
    })
}

fn assemble_covariance(vectors: &CMat, powers: &[f64]) -> CMat {
    let n = vectors.nrows();
    let mut acc = CMat::zeros(n, n);
    for (i, &p) in powers.iter().enumerate() {
        if p > 0.0 {
            let v = vectors.column(i);
            acc += (v * v.adjoint()).map(|z| z * c(p, 0.0));
        }
    }
    HermitianMatrix::symmetrized(acc).into_matrix()
}

/// Best response for the null-constrained game: classical waterfilling over
/// `H~_qq^H R_{-q}^{-1} H~_qq`, where the interference covariance is built
/// from the other users' covariances through their modified channels. The
/// output satisfies `U_q^H Q = 0` because the projected Gram has no component
/// on the forbidden subspace.
pub fn projected_waterfill(
    q: usize,
    profile: &StrategyProfile,
    ch: &ChannelSet,
    mods: &ModifiedChannels,
    budget: f64,
) -> Result<WaterfillResult> {
    let ModifiedChannels::Projected { links, .. } = mods else {
        return Err(Error::BadParams("projected waterfilling needs projected channels".into()));
    };
    let users = ch.users();
    let mut r_mui = ch.noise(q).as_matrix().clone();
    for r in 0..users {
        if r == q {
            continue;
        }
        let h = &links[r * users + q];
        r_mui += h * profile.covariance(r)? * h.adjoint();
    }
    let r_mui = HermitianMatrix::symmetrized(r_mui);
    let h_qq = &links[q * users + q];
    let gram = gram_through(&r_mui, h_qq)?;
    mimo_waterfill(&gram, budget)
}

/// `H^H R^{-1} H` for Hermitian positive definite `R`.
fn gram_through(r: &HermitianMatrix, h: &CMat) -> Result<HermitianMatrix> {
    let solved = solve_hpd(r, h)?;
    Ok(HermitianMatrix::symmetrized(h.adjoint() * solved))
}

/// Best response for the soft-shaping game.
///
/// Eigen-solve `H¯_qq^H R_{-q}^{-1} H¯_qq` (interference through the physical
/// channels), count the positive eigenvalues `L`; if `peak * L > average` the
/// per-mode powers are `clip(mu - 1/lambda_k, 0, peak)` with total `average`,
/// otherwise every retained mode transmits at `peak`. The covariance is
/// mapped back through the shaping pseudoinverse:
/// `Q = G^{#H} V diag(p) V^H G^#`.
pub fn capped_waterfill(
    q: usize,
    profile: &StrategyProfile,
    ch: &ChannelSet,
    mods: &ModifiedChannels,
    average: f64,
    peak: f64,
) -> Result<WaterfillResult> {
    let ModifiedChannels::Shaped { links, shaping_pinv, .. } = mods else {
        return Err(Error::BadParams("capped waterfilling needs shaped channels".into()));
    };
    if !(average > 0.0) || !(peak > 0.0) {
        return Err(Error::BadParams("average and peak powers must be positive".into()));
    }
    let users = ch.users();
    let r_mui = mui_covariance(q, profile, ch)?;
    let h_qq = &links[q * users + q];
    let gram = gram_through(&r_mui, h_qq)?;
    let eig = hermitian_eig(&gram);
    let lambda_max = eig.values.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(Error::ZeroChannel);
    }
    let active = eig.values.iter().filter(|&&l| l > RANK_TOL * lambda_max).count();
    let gains = eig.values[..active].to_vec();
    let (mu, powers) = if peak * active as f64 > average {
        let caps = vec![peak; active];
        waterfill_powers(&gains, average, Some(&caps))?
    } else {
        // Budget slack: every retained mode saturates its peak.
        let mu = gains.iter().map(|&l| 1.0 / l).fold(f64::NEG_INFINITY, f64::max) + peak;
        (mu, vec![peak; active])
    };
    let vectors = eig.vectors.columns(0, active).into_owned();
    let shaped = assemble_covariance(&vectors, &powers);
    let g_pinv = &shaping_pinv[q];
    let covariance =
        HermitianMatrix::symmetrized(g_pinv.adjoint() * shaped * g_pinv).into_matrix();
    let achieved = powers.iter().sum();
    Ok(WaterfillResult {
        covariance,
        water_level: mu,
        eigenvalues: gains,
        eigenvectors: vectors,
        powers,
        achieved_budget: achieved,
    })
}

/// Masked scalar waterfilling over frequency bins, with gap factor:
/// `p_q(k) = clip(mu - gap * (noise + MUI)(k) / |H_qq(k)|^2, 0, mask_k)` and
/// `sum_k p_q(k) = budget`.
pub fn siso_masked_waterfill(
    q: usize,
    profile: &StrategyProfile,
    s: &SisoScenario,
    budget: f64,
    masks: Option<&[f64]>,
    gap: f64,
) -> Result<Vec<f64>> {
    if !(gap >= 1.0) {
        return Err(Error::BadParams("gap factor must be >= 1".into()));
    }
    let n = s.bins();
    if let Some(mm) = masks {
        if mm.len() != n {
            return Err(Error::DimensionMismatch("one mask entry per bin required".into()));
        }
    }
    let mut gains = Vec::with_capacity(n);
    let mut caps = Vec::with_capacity(n);
    let mut index = Vec::with_capacity(n);
    for k in 0..n {
        let gain = s.response(q, q, k).norm_sqr();
        let cap = masks.map(|mm| mm[k]).unwrap_or(f64::INFINITY);
        if gain <= 0.0 || cap <= 0.0 {
            continue; // dead or fully masked bin gets exactly zero
        }
        let interference = siso_interference(s, q, k, profile);
        gains.push(gain / (gap * interference));
        caps.push(cap);
        index.push(k);
    }
    if gains.is_empty() {
        return Err(Error::ZeroChannel);
    }
    let (_, packed) = waterfill_powers(&gains, budget, Some(&caps))?;
    let mut powers = vec![0.0; n];
    for (i, &k) in index.iter().enumerate() {
        powers[k] = packed[i];
    }
    Ok(powers)
}

/// Constellation families with a known gap expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstellationFamily {
    MQam,
}

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`gaussian_tail`] by bisection (the tail is strictly
/// decreasing).
pub fn inverse_gaussian_tail(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("tail probability {p} outside (0, 1)")));
    }
    let mut lo = -40.0;
    let mut hi = 40.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gaussian_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gap-approximation factor at symbol error probability `p_e`. For M-QAM:
/// `gap = Qinv(p_e / 4)^2 / 3`, clamped to 1 (with a warning) where the
/// formula dips below it.
pub fn gap_factor(family: ConstellationFamily, p_e: f64) -> Result<f64> {
    if !(p_e > 0.0 && p_e < 1.0) {
        return Err(Error::DomainError(format!("error probability {p_e} outside (0, 1)")));
    }
    let gap = match family {
        ConstellationFamily::MQam => {
            let x = inverse_gaussian_tail(p_e / 4.0)?;
            x * x / 3.0
        }
    };
    if gap < 1.0 {
        log::warn!("gap formula gave {gap:.6} < 1 at p_e = {p_e:.3e}; clamping to 1");
        Ok(1.0)
    } else {
        Ok(gap)
    }
}

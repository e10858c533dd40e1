//! Cognitive-radio transmit constraints and the modified channels they induce.
//!
//! Four constraint families per user: a transmit power budget, null
//! constraints `U_q^H Q_q = 0` on a prescribed subspace, soft shaping bounds
//! `Tr(G_q^H Q_q G_q) <= P_ave` with a peak cap on
//! `lambda_max(G_q^H Q_q G_q)`, and per-bin spectral masks for multicarrier
//! play. Absent constraints are vacuous (identity projector, infinite caps).
//!
//! Null and shaping constraints are absorbed into the channel matrices, so
//! the per-user best responses stay plain waterfilling problems:
//! `H~_rq = H_rq P` with `P` the projector onto the orthogonal complement of
//! the null space, and `H¯_rq = H_rq G_r^{#H} P` for the shaped game.

use crate::channel::{fourier_matrix, ChannelSet, Strategy};
use crate::linalg::{
    c, complement_basis, hermitian_eig, max_abs_entry, orth_complement_projector, pseudoinverse,
    CMat, HermitianMatrix, RANK_TOL,
};
use crate::{Error, Result};

/// Soft shaping pair: directions `G_q` (full row rank) and the average power
/// `P_ave` allowed along them.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftShaping {
    pub directions: CMat,
    pub average_power: f64,
}

/// One user's constraint bundle. At least one of `power` or `soft` must be
/// present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserConstraints {
    /// Transmit power budget (energy per transmission).
    pub power: Option<f64>,
    /// Forbidden subspace: strictly tall, full column rank.
    pub null_space: Option<CMat>,
    /// Soft shaping pair `(G_q, P_ave)`.
    pub soft: Option<SoftShaping>,
    /// Peak power cap along the shaping directions.
    pub peak: Option<f64>,
    /// Per-bin spectral masks (entries may be `f64::INFINITY`).
    pub masks: Option<Vec<f64>>,
    /// Gap-approximation factor, `>= 1`.
    pub gap: Option<f64>,
}

impl UserConstraints {
    pub fn power_only(p: f64) -> Self {
        Self { power: Some(p), ..Self::default() }
    }

    fn validate(&self, q: usize, dim: Option<usize>, bins: Option<usize>) -> Result<()> {
        if self.power.is_none() && self.soft.is_none() {
            return Err(Error::InvalidConstraints(format!(
                "user {q}: need a power budget or a soft shaping pair"
            )));
        }
        if let Some(p) = self.power {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidConstraints(format!(
                    "user {q}: power budget must be positive and finite"
                )));
            }
        }
        if let Some(u) = &self.null_space {
            if u.ncols() == 0 || u.ncols() >= u.nrows() {
                return Err(Error::InvalidConstraints(format!(
                    "user {q}: null matrix must be strictly tall, got {}x{}",
                    u.nrows(),
                    u.ncols()
                )));
            }
            if let Some(n) = dim {
                if u.nrows() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "user {q}: null matrix has {} rows, transmit dimension is {n}",
                        u.nrows()
                    )));
                }
            }
            // Fail fast on dependent columns; the projector would reject later.
            orth_complement_projector(u).map_err(|_| {
                Error::InvalidConstraints(format!("user {q}: null matrix is not full column rank"))
            })?;
        }
        if let Some(soft) = &self.soft {
            let g = &soft.directions;
            if g.nrows() > g.ncols() {
                return Err(Error::InvalidConstraints(format!(
                    "user {q}: shaping matrix must be full row rank, got {}x{}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            if let Some(n) = dim {
                if g.nrows() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "user {q}: shaping matrix has {} rows, transmit dimension is {n}",
                        g.nrows()
                    )));
                }
            }
            let sv = crate::linalg::singular_values(g);
            let smax = sv.first().copied().unwrap_or(0.0);
            let smin = sv.last().copied().unwrap_or(0.0);
            if smax <= 0.0 || smin <= RANK_TOL * smax {
                return Err(Error::InvalidConstraints(format!(
                    "user {q}: shaping matrix is not full row rank"
                )));
            }
            if !(soft.average_power >= 0.0) {
                return Err(Error::InvalidConstraints(format!(
                    "user {q}: average shaped power must be nonnegative"
                )));
            }
        }
        if let Some(peak) = self.peak {
            if !(peak > 0.0) {
                return Err(Error::InvalidConstraints(format!(
                    "user {q}: peak power must be positive"
                )));
            }
        }
        if let Some(masks) = &self.masks {
            if let Some(n) = bins {
                if masks.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "user {q}: expected {n} mask entries, got {}",
                        masks.len()
                    )));
                }
            }
            if masks.iter().any(|&m| m < 0.0 || m.is_nan()) {
                return Err(Error::InvalidConstraints(format!(
                    "user {q}: masks must be nonnegative"
                )));
            }
            if let Some(p) = self.power {
                let total: f64 = masks.iter().sum();
                if total < p - 1e-12 {
                    return Err(Error::InfeasibleBudget { budget: p, capacity: total });
                }
            }
        }
        if let Some(gap) = self.gap {
            if !(gap >= 1.0) {
                return Err(Error::InvalidConstraints(format!("user {q}: gap must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Per-user constraint bundles for the whole game.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    users: Vec<UserConstraints>,
}

impl ConstraintSpec {
    pub fn new(users: Vec<UserConstraints>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidConstraints("at least one user required".into()));
        }
        for (q, u) in users.iter().enumerate() {
            u.validate(q, None, None)?;
        }
        Ok(Self { users })
    }

    pub fn users(&self) -> usize {
        self.users.len()
    }

    pub fn user(&self, q: usize) -> &UserConstraints {
        &self.users[q]
    }

    /// Re-validates against MIMO channel dimensions.
    pub fn validate_mimo(&self, ch: &ChannelSet) -> Result<()> {
        if self.users.len() != ch.users() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint bundles for {} users",
                self.users.len(),
                ch.users()
            )));
        }
        for (q, u) in self.users.iter().enumerate() {
            u.validate(q, Some(ch.dim(q)), None)?;
        }
        Ok(())
    }

    /// Re-validates against a SISO bin count.
    pub fn validate_siso(&self, users: usize, bins: usize) -> Result<()> {
        if self.users.len() != users {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint bundles for {users} users",
                self.users.len()
            )));
        }
        for (q, u) in self.users.iter().enumerate() {
            u.validate(q, None, Some(bins))?;
            if u.null_space.is_some() || u.soft.is_some() {
                return Err(Error::InvalidConstraints(format!(
                    "user {q}: subspace constraints do not apply to masked SISO play"
                )));
            }
        }
        Ok(())
    }
}

/// Channel matrices transformed for the selected game variant, together with
/// the per-user projector data the variant needs.
#[derive(Debug, Clone)]
pub enum ModifiedChannels {
    /// No transformation (masked SISO play).
    Plain,
    /// Null constraints absorbed by right-multiplying each `H_rq` with the
    /// complement projector of transmitter `r`.
    Projected {
        /// `links[r * Q + q] = H_rq P_r`.
        links: Vec<CMat>,
        /// Per-transmitter complement projector (identity when no nulls).
        projectors: Vec<CMat>,
    },
    /// Soft shaping and null constraints absorbed:
    /// `links[r * Q + q] = H_rq G_r^{#H} P_r` with `P_r` the complement
    /// projector of `G_r^# U_r`.
    Shaped {
        links: Vec<CMat>,
        projectors: Vec<CMat>,
        shaping_pinv: Vec<CMat>,
    },
    /// Virtual-noise directions per user (`alpha` lives in the game variant).
    VirtualNoise { directions: Vec<Option<CMat>> },
    /// Receive subspace reduced to the complement of the virtual directions:
    /// `links[r * Q + q] = B_q^H H_rq` with `B_q` an orthonormal basis of the
    /// complement, and the noise covariance reduced accordingly.
    Reduced {
        links: Vec<CMat>,
        bases: Vec<CMat>,
        reduced_noise: Vec<HermitianMatrix>,
    },
}

/// Modified channels for the null-constrained game: `H~_rq = H_rq P_r`.
pub fn modified_channels_g1(ch: &ChannelSet, cs: &ConstraintSpec) -> Result<ModifiedChannels> {
    cs.validate_mimo(ch)?;
    let users = ch.users();
    let mut projectors = Vec::with_capacity(users);
    for r in 0..users {
        let p = match &cs.user(r).null_space {
            Some(u) => orth_complement_projector(u)?.into_matrix(),
            None => CMat::identity(ch.dim(r), ch.dim(r)),
        };
        projectors.push(p);
    }
    let mut links = Vec::with_capacity(users * users);
    for r in 0..users {
        for q in 0..users {
            links.push(ch.link(r, q) * &projectors[r]);
        }
    }
    Ok(ModifiedChannels::Projected { links, projectors })
}

/// Modified channels for the soft-shaping game:
/// `H¯_rq = H_rq G_r^{#H} P_r` with `P_r` projecting onto the complement of
/// `U¯_r = G_r^# U_r`.
pub fn modified_channels_g2(ch: &ChannelSet, cs: &ConstraintSpec) -> Result<ModifiedChannels> {
    cs.validate_mimo(ch)?;
    let users = ch.users();
    let mut projectors = Vec::with_capacity(users);
    let mut shaping_pinv = Vec::with_capacity(users);
    for r in 0..users {
        let soft = cs.user(r).soft.as_ref().ok_or_else(|| {
            Error::InvalidConstraints(format!("user {r}: the shaped game needs a soft pair"))
        })?;
        let g_pinv = pseudoinverse(&soft.directions, RANK_TOL);
        let m = g_pinv.nrows();
        let p = match &cs.user(r).null_space {
            Some(u) => {
                let u_bar = &g_pinv * u;
                orth_complement_projector(&u_bar)?.into_matrix()
            }
            None => CMat::identity(m, m),
        };
        projectors.push(p);
        shaping_pinv.push(g_pinv);
    }
    let mut links = Vec::with_capacity(users * users);
    for r in 0..users {
        for q in 0..users {
            links.push(ch.link(r, q) * shaping_pinv[r].adjoint() * &projectors[r]);
        }
    }
    Ok(ModifiedChannels::Shaped { links, projectors, shaping_pinv })
}

/// Covariance of virtual interference of strength `alpha >= 0` along the
/// columns of `direction`: `alpha * U^ U^H`.
pub fn virtual_noise_covariance(direction: &CMat, alpha: f64) -> Result<HermitianMatrix> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::BadParams("virtual noise strength must be nonnegative".into()));
    }
    Ok(HermitianMatrix::symmetrized((direction * direction.adjoint()).scale(alpha)))
}

/// Virtual-noise direction realizing a null constraint in the limit:
/// `U^_q = H_qq U_q`.
pub fn virtual_noise_direction(h_qq: &CMat, u_q: &CMat) -> Result<CMat> {
    if h_qq.ncols() != u_q.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}x{} but null matrix has {} rows",
            h_qq.nrows(),
            h_qq.ncols(),
            u_q.nrows()
        )));
    }
    let dir = h_qq * u_q;
    let sv = crate::linalg::singular_values(&dir);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smax <= 0.0 || smin <= RANK_TOL * smax {
        return Err(Error::RankDeficient(
            "virtual-noise direction lost column rank through the channel".into(),
        ));
    }
    Ok(dir)
}

/// Channels observed through the complement of the virtual directions:
/// `H^_rq = B_q^H H_rq` where `B_q` spans the orthogonal complement of
/// `U^_q`, plus the reduced noise `B_q^H R_nq B_q`. Users with no direction
/// keep the identity basis.
pub fn hat_channels(ch: &ChannelSet, directions: &[Option<CMat>]) -> Result<ModifiedChannels> {
    let users = ch.users();
    if directions.len() != users {
        return Err(Error::DimensionMismatch("need one direction entry per user".into()));
    }
    let mut bases = Vec::with_capacity(users);
    for (q, dir) in directions.iter().enumerate() {
        let b = match dir {
            Some(u) => {
                if u.ncols() >= u.nrows() || u.ncols() == 0 {
                    return Err(Error::RankDeficient(format!(
                        "user {q}: virtual direction must be strictly tall"
                    )));
                }
                let sv = crate::linalg::singular_values(u);
                let smax = sv.first().copied().unwrap_or(0.0);
                let smin = sv.last().copied().unwrap_or(0.0);
                if smax <= 0.0 || smin <= RANK_TOL * smax {
                    return Err(Error::RankDeficient(format!(
                        "user {q}: virtual direction is not full column rank"
                    )));
                }
                complement_basis(u)
            }
            None => CMat::identity(ch.dim(q), ch.dim(q)),
        };
        bases.push(b);
    }
    let mut links = Vec::with_capacity(users * users);
    for r in 0..users {
        for q in 0..users {
            links.push(bases[q].adjoint() * ch.link(r, q));
        }
    }
    let reduced_noise = (0..users)
        .map(|q| {
            HermitianMatrix::symmetrized(bases[q].adjoint() * ch.noise(q).as_matrix() * &bases[q])
        })
        .collect();
    Ok(ModifiedChannels::Reduced { links, bases, reduced_noise })
}

/// Uniform-linear-array steering vector: entry `m` (0-based) is
/// `exp(-j 2 pi m spacing sin(angle))`, for `spacing` in wavelengths.
pub fn steering_vector(angle: f64, antennas: usize, spacing: f64) -> CMat {
    CMat::from_fn(antennas, 1, |m, _| {
        let phase = -2.0 * std::f64::consts::PI * (m as f64) * spacing * angle.sin();
        c(phase.cos(), phase.sin())
    })
}

/// One evaluated constraint: signed residual (positive = violated), the scale
/// it is judged against and the verdict.
#[derive(Debug, Clone)]
pub struct ConstraintCheck {
    pub constraint: &'static str,
    pub residual: f64,
    pub scale: f64,
    pub pass: bool,
}

/// Outcome of [`check_feasible`] for one user.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn worst(&self) -> Option<&ConstraintCheck> {
        self.checks
            .iter()
            .max_by(|a, b| {
                (a.residual / a.scale)
                    .partial_cmp(&(b.residual / b.scale))
                    .expect("finite residuals")
            })
    }
}

const FEAS_TOL: f64 = 1e-8;

fn push_check(
    checks: &mut Vec<ConstraintCheck>,
    constraint: &'static str,
    residual: f64,
    scale: f64,
) {
    let scale = scale.max(1.0);
    checks.push(ConstraintCheck { constraint, residual, scale, pass: residual <= FEAS_TOL * scale });
}

/// Evaluates every present constraint of `cs` on a strategy and reports the
/// signed residuals (`<= 0` means satisfied):
/// `Tr(Q) - P`, `max |U^H Q|`, `Tr(G^H Q G) - P_ave`,
/// `lambda_max(G^H Q G) - P_peak`, and `max_k([W^H Q W]_kk - mask_k)` /
/// `max_k(p_k - mask_k)` for covariance / power strategies.
pub fn check_feasible(strategy: &Strategy, cs: &UserConstraints) -> Result<FeasibilityReport> {
    let mut checks = Vec::new();
    match strategy {
        Strategy::Cov(q) => {
            if let Some(p) = cs.power {
                let trace = q.trace().re;
                push_check(&mut checks, "power", trace - p, p);
            }
            if let Some(u) = &cs.null_space {
                if u.nrows() != q.nrows() {
                    return Err(Error::DimensionMismatch(
                        "null matrix does not match the covariance dimension".into(),
                    ));
                }
                let leak = max_abs_entry(&(u.adjoint() * q));
                push_check(&mut checks, "null", leak, q.norm());
            }
            if cs.soft.is_some() || cs.peak.is_some() {
                let shaped = match &cs.soft {
                    Some(soft) => {
                        let g = &soft.directions;
                        if g.nrows() != q.nrows() {
                            return Err(Error::DimensionMismatch(
                                "shaping matrix does not match the covariance dimension".into(),
                            ));
                        }
                        HermitianMatrix::symmetrized(g.adjoint() * q * g)
                    }
                    None => HermitianMatrix::symmetrized(q.clone()),
                };
                if let Some(soft) = &cs.soft {
                    push_check(
                        &mut checks,
                        "soft",
                        shaped.trace().re - soft.average_power,
                        soft.average_power,
                    );
                }
                if let Some(peak) = cs.peak {
                    if peak.is_finite() {
                        let top = hermitian_eig(&shaped).values.first().copied().unwrap_or(0.0);
                        push_check(&mut checks, "peak", top - peak, peak);
                    }
                }
            }
            if let Some(masks) = &cs.masks {
                let n = q.nrows();
                if masks.len() != n {
                    return Err(Error::DimensionMismatch(
                        "mask length does not match the covariance dimension".into(),
                    ));
                }
                let w = fourier_matrix(n);
                let diag = w.adjoint() * q * &w;
                let mut worst = f64::NEG_INFINITY;
                let mut scale: f64 = 1.0;
                for k in 0..n {
                    if masks[k].is_finite() {
                        worst = worst.max(diag[(k, k)].re - masks[k]);
                        scale = scale.max(masks[k]);
                    }
                }
                if worst > f64::NEG_INFINITY {
                    push_check(&mut checks, "mask", worst, scale);
                }
            }
        }
        Strategy::Power(p) => {
            if let Some(budget) = cs.power {
                let total: f64 = p.iter().sum();
                push_check(&mut checks, "power", total - budget, budget);
            }
            if let Some(masks) = &cs.masks {
                if masks.len() != p.len() {
                    return Err(Error::DimensionMismatch(
                        "mask length does not match the power vector".into(),
                    ));
                }
                let mut worst = f64::NEG_INFINITY;
                let mut scale: f64 = 1.0;
                for k in 0..p.len() {
                    if masks[k].is_finite() {
                        worst = worst.max(p[k] - masks[k]);
                        scale = scale.max(masks[k]);
                    }
                }
                if worst > f64::NEG_INFINITY {
                    push_check(&mut checks, "mask", worst, scale);
                }
            }
        }
    }
    Ok(FeasibilityReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random_mimo_channels;
    use crate::linalg::range_basis;
    use num_complex::Complex64;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn g1_without_nulls_keeps_channels() {
        let ch = random_mimo_channels(3, &[3, 3], None, 2.0).unwrap();
        let cs = ConstraintSpec::new(vec![
            UserConstraints::power_only(1.0),
            UserConstraints::power_only(1.0),
        ])
        .unwrap();
        let ModifiedChannels::Projected { links, projectors } =
            modified_channels_g1(&ch, &cs).unwrap()
        else {
            panic!("wrong variant")
        };
        for r in 0..2 {
            assert!((&projectors[r] - CMat::identity(3, 3)).norm() < 1e-14);
            for q in 0..2 {
                assert!((&links[r * 2 + q] - ch.link(r, q)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn g1_steering_null_annihilates() {
        let ch = random_mimo_channels(5, &[4, 4], None, 2.0).unwrap();
        let u = steering_vector(std::f64::consts::FRAC_PI_2, 4, 0.5);
        let mut c0 = UserConstraints::power_only(1.0);
        c0.null_space = Some(u.clone());
        let cs = ConstraintSpec::new(vec![c0, UserConstraints::power_only(1.0)]).unwrap();
        let ModifiedChannels::Projected { links, .. } = modified_channels_g1(&ch, &cs).unwrap()
        else {
            panic!("wrong variant")
        };
        for q in 0..2 {
            let modified = &links[q]; // transmitter 0 towards receiver q
            assert!((modified * &u).norm() < 1e-10);
            let rank = range_basis(&modified.adjoint().clone_owned(), RANK_TOL).ncols();
            assert!(rank <= 3, "modified channel rank {rank}");
        }
    }

    #[test]
    fn g2_identity_and_scalar_shaping() {
        let ch = random_mimo_channels(7, &[2, 2], None, 2.0).unwrap();
        let soft_identity = |scale: f64| SoftShaping {
            directions: CMat::identity(2, 2).map(|z: Complex64| z * c(scale, 0.0)),
            average_power: 1.0,
        };
        for (scale, factor) in [(1.0, 1.0), (2.0, 0.5)] {
            let mk = || UserConstraints {
                soft: Some(soft_identity(scale)),
                peak: Some(10.0),
                ..Default::default()
            };
            let cs = ConstraintSpec::new(vec![mk(), mk()]).unwrap();
            let ModifiedChannels::Shaped { links, .. } = modified_channels_g2(&ch, &cs).unwrap()
            else {
                panic!("wrong variant")
            };
            for r in 0..2 {
                for q in 0..2 {
                    let want = ch.link(r, q).map(|z| z * c(factor, 0.0));
                    assert!((&links[r * 2 + q] - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn g2_annihilation_on_transformed_null_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let ch = random_mimo_channels(11, &[3, 3], None, 2.0).unwrap();
        let g = random_cmat(&mut rng, 3, 4);
        let u = random_cmat(&mut rng, 3, 1);
        let mk = |with_null: bool| UserConstraints {
            soft: Some(SoftShaping { directions: g.clone(), average_power: 1.0 }),
            peak: Some(5.0),
            null_space: with_null.then(|| u.clone()),
            ..Default::default()
        };
        let cs = ConstraintSpec::new(vec![mk(true), mk(false)]).unwrap();
        let ModifiedChannels::Shaped { links, shaping_pinv, .. } =
            modified_channels_g2(&ch, &cs).unwrap()
        else {
            panic!("wrong variant")
        };
        // The modified channel of transmitter 0 annihilates U¯ = G^# U.
        let u_bar = &shaping_pinv[0] * &u;
        for q in 0..2 {
            assert!((&links[q] * &u_bar).norm() < 1e-10);
        }
    }

    #[test]
    fn virtual_noise_covariance_cases() {
        let e1 = CMat::from_column_slice(3, 1, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let zero = virtual_noise_covariance(&e1, 0.0).unwrap();
        assert_eq!(zero.as_matrix().norm(), 0.0);
        let v = virtual_noise_covariance(&e1, 5.0).unwrap();
        assert!((v[(0, 0)].re - 5.0).abs() < 1e-14);
        assert!(v.as_matrix().norm() - 5.0 < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let u = random_cmat(&mut rng, 4, 2);
        let cov = virtual_noise_covariance(&u, 2.5).unwrap();
        let eig = hermitian_eig(&cov);
        let rank = eig.values.iter().filter(|&&x| x > RANK_TOL * eig.values[0]).count();
        assert_eq!(rank, 2);
    }

    #[test]
    fn virtual_noise_direction_inverts_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let u = random_cmat(&mut rng, 3, 1);
        // H = I and H = 2I keep the range.
        let dir = virtual_noise_direction(&CMat::identity(3, 3), &u).unwrap();
        assert!((&dir - &u).norm() < 1e-14);
        let h2 = CMat::identity(3, 3).map(|z: Complex64| z * c(2.0, 0.0));
        let dir2 = virtual_noise_direction(&h2, &u).unwrap();
        assert!((&dir2 - u.map(|z| z * c(2.0, 0.0))).norm() < 1e-14);

        let ch = random_mimo_channels(13, &[3], None, 2.0).unwrap();
        let h = ch.link(0, 0);
        let dir = virtual_noise_direction(h, &u).unwrap();
        let back = h.clone().lu().solve(&dir).unwrap();
        assert!((back - &u).norm() < 1e-9);
    }

    #[test]
    fn hat_channels_cases() {
        let ch = random_mimo_channels(17, &[2, 2], None, 2.0).unwrap();
        // No directions: identity reduction.
        let ModifiedChannels::Reduced { links, .. } = hat_channels(&ch, &[None, None]).unwrap()
        else {
            panic!("wrong variant")
        };
        for r in 0..2 {
            for q in 0..2 {
                assert!((&links[r * 2 + q] - ch.link(r, q)).norm() < 1e-14);
            }
        }
        // Direction e1 in C^2 against an identity channel: the reduced row is
        // e2^H up to phase.
        let links = vec![
            CMat::identity(2, 2),
            CMat::zeros(2, 2),
            CMat::zeros(2, 2),
            CMat::identity(2, 2),
        ];
        let noise = vec![HermitianMatrix::identity(2), HermitianMatrix::identity(2)];
        let idch = ChannelSet::new(2, links, noise, None).unwrap();
        let e1 = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let ModifiedChannels::Reduced { links, bases, .. } =
            hat_channels(&idch, &[Some(e1.clone()), None]).unwrap()
        else {
            panic!("wrong variant")
        };
        assert_eq!(links[0].nrows(), 1);
        assert!((links[0][(0, 0)]).norm() < 1e-12);
        assert!((links[0][(0, 1)]).norm() > 0.999);
        // Orthogonality of the basis against the direction.
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let u = random_cmat(&mut rng, 4, 2);
        let ch4 = random_mimo_channels(19, &[4], None, 2.0).unwrap();
        let ModifiedChannels::Reduced { bases: b4, .. } =
            hat_channels(&ch4, &[Some(u.clone())]).unwrap()
        else {
            panic!("wrong variant")
        };
        assert!((b4[0].adjoint() * &u).norm() < 1e-10);
        let _ = bases;
    }

    #[test]
    fn steering_vector_values() {
        let all_ones = steering_vector(0.0, 4, 0.5);
        for m in 0..4 {
            assert!((all_ones[(m, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        }
        let alt = steering_vector(std::f64::consts::FRAC_PI_2, 4, 0.5);
        for m in 0..4 {
            let want = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((alt[(m, 0)] - c(want, 0.0)).norm() < 1e-9);
        }
        // angle = -5 pi / 12: unit modulus with phase -pi m sin(angle).
        let phi = -5.0 * std::f64::consts::PI / 12.0;
        let v = steering_vector(phi, 4, 0.5);
        for m in 0..4 {
            let phase = -std::f64::consts::PI * (m as f64) * phi.sin();
            assert!((v[(m, 0)] - c(phase.cos(), phase.sin())).norm() < 1e-12);
            assert!((v[(m, 0)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn null_constrained_covariance_is_projector_fixed() {
        // For any Q with U^H Q = 0 (and Q Hermitian), P Q P = Q.
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let u = random_cmat(&mut rng, 4, 1);
        let p = orth_complement_projector(&u).unwrap();
        let a = random_cmat(&mut rng, 4, 4);
        let base = HermitianMatrix::symmetrized(&a * a.adjoint()).into_matrix();
        let q = p.as_matrix() * base * p.as_matrix();
        assert!((u.adjoint() * &q).norm() < 1e-12);
        let back = p.as_matrix() * &q * p.as_matrix();
        assert!((back - &q).norm() < 1e-10);
    }

    #[test]
    fn check_feasible_cases() {
        let n = 3;
        let cs = UserConstraints::power_only(1.0);
        let zero = Strategy::Cov(CMat::zeros(n, n));
        assert!(check_feasible(&zero, &cs).unwrap().feasible());

        let uniform = Strategy::Cov(CMat::identity(n, n).map(|z: Complex64| z * c(1.0 / 3.0, 0.0)));
        let report = check_feasible(&uniform, &cs).unwrap();
        assert!(report.feasible());
        assert!(report.checks[0].residual.abs() < 1e-12);

        // A violating strategy reports the matching residual.
        let hot = Strategy::Cov(CMat::identity(n, n));
        let report = check_feasible(&hot, &cs).unwrap();
        assert!(!report.feasible());
        assert!((report.checks[0].residual - 2.0).abs() < 1e-12);

        let mut with_mask = UserConstraints::power_only(1.0);
        with_mask.masks = Some(vec![0.2, 0.5, f64::INFINITY, 0.4]);
        let p = Strategy::Power(vec![0.3, 0.1, 0.2, 0.1]);
        let report = check_feasible(&p, &with_mask).unwrap();
        assert!(!report.feasible());
        let mask_check = report.checks.iter().find(|c| c.constraint == "mask").unwrap();
        assert!((mask_check.residual - 0.1).abs() < 1e-12);
    }

    #[test]
    fn constraint_validation_rejections() {
        // Neither power nor soft pair.
        assert!(ConstraintSpec::new(vec![UserConstraints::default()]).is_err());
        // Square null matrix is not strictly tall.
        let mut b = UserConstraints::power_only(1.0);
        b.null_space = Some(CMat::identity(2, 2));
        assert!(ConstraintSpec::new(vec![b]).is_err());
        // Mask feasibility against the power budget.
        let mut m = UserConstraints::power_only(1.0);
        m.masks = Some(vec![0.2, 0.2]);
        assert!(matches!(
            ConstraintSpec::new(vec![m]),
            Err(Error::InfeasibleBudget { .. })
        ));
    }
}

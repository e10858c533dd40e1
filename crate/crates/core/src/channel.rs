//! Gaussian vector interference channel: data model, MUI covariances, rates.
//!
//! A [`ChannelSet`] holds the `Q x Q` grid of cross-channel matrices `H_rq`
//! (transmitter `r` to receiver `q`) together with the per-receiver noise
//! covariances. Direct channels `H_qq` must be square and nonsingular; noise
//! covariances must be Hermitian positive definite.
//!
//! Frequency-selective SISO links are modeled by a [`SisoScenario`] holding
//! per-bin frequency responses; [`circulant_channels`] lifts it to the
//! equivalent MIMO representation through the normalized IFFT matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{
    c, ensure_finite, hermitian_eig, log2_det_hpd, max_abs_entry, CMat, CVec, HermitianMatrix,
    HERMITIAN_TOL,
};
use crate::{Error, Result};

/// Condition-number ceiling for direct channels.
const MAX_DIRECT_CONDITION: f64 = 1e12;

/// The Q-user Gaussian vector interference channel.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    users: usize,
    /// `links[r * users + q]` is `H_rq`, the channel from transmitter `r` to
    /// receiver `q`, of size `n_q x n_r`.
    links: Vec<CMat>,
    noise: Vec<HermitianMatrix>,
    /// Optional link distances, row-major `d_rq`.
    distances: Option<Vec<f64>>,
}

impl ChannelSet {
    /// Builds and validates a channel set.
    ///
    /// `links` is row-major over `(r, q)`. Direct channels must be square and
    /// nonsingular (condition number below 1e12); noise covariances must be
    /// Hermitian positive definite.
    pub fn new(
        users: usize,
        links: Vec<CMat>,
        noise: Vec<HermitianMatrix>,
        distances: Option<Vec<f64>>,
    ) -> Result<Self> {
        if users == 0 {
            return Err(Error::InvalidChannel("at least one user required".into()));
        }
        if links.len() != users * users {
            return Err(Error::DimensionMismatch(format!(
                "expected {} link matrices, got {}",
                users * users,
                links.len()
            )));
        }
        if noise.len() != users {
            return Err(Error::DimensionMismatch(format!(
                "expected {} noise covariances, got {}",
                users,
                noise.len()
            )));
        }
        let mut dims = Vec::with_capacity(users);
        for q in 0..users {
            let h = &links[q * users + q];
            if h.nrows() != h.ncols() {
                return Err(Error::InvalidChannel(format!(
                    "direct channel of user {q} must be square, got {}x{}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            dims.push(h.nrows());
        }
        for r in 0..users {
            for q in 0..users {
                let h = &links[r * users + q];
                ensure_finite(h, "channel matrix")?;
                if h.nrows() != dims[q] || h.ncols() != dims[r] {
                    return Err(Error::DimensionMismatch(format!(
                        "H[{r}->{q}] must be {}x{}, got {}x{}",
                        dims[q],
                        dims[r],
                        h.nrows(),
                        h.ncols()
                    )));
                }
            }
        }
        for (q, h) in (0..users).map(|q| (q, &links[q * users + q])) {
            let sv = crate::linalg::singular_values(h);
            let smax = sv.first().copied().unwrap_or(0.0);
            let smin = sv.last().copied().unwrap_or(0.0);
            if smax <= 0.0 || smax / smin >= MAX_DIRECT_CONDITION {
                return Err(Error::SingularDirectChannel(q));
            }
        }
        for (q, r) in noise.iter().enumerate() {
            if r.dim() != dims[q] {
                return Err(Error::DimensionMismatch(format!(
                    "noise covariance of user {q} must be {0}x{0}",
                    dims[q]
                )));
            }
            let eig = hermitian_eig(r);
            if eig.values.last().copied().unwrap_or(0.0) <= 0.0 {
                return Err(Error::InvalidChannel(format!(
                    "noise covariance of user {q} is not positive definite"
                )));
            }
        }
        if let Some(d) = &distances {
            if d.len() != users * users {
                return Err(Error::DimensionMismatch("distance grid must be Q x Q".into()));
            }
            if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidChannel("distances must be positive".into()));
            }
        }
        Ok(Self { users, links, noise, distances })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Antenna count of user `q` (direct channels are square, so transmit and
    /// receive dimensions coincide).
    pub fn dim(&self, q: usize) -> usize {
        self.links[q * self.users + q].nrows()
    }

    /// Channel from transmitter `r` to receiver `q`.
    pub fn link(&self, r: usize, q: usize) -> &CMat {
        &self.links[r * self.users + q]
    }

    pub fn noise(&self, q: usize) -> &HermitianMatrix {
        &self.noise[q]
    }

    pub fn distance(&self, r: usize, q: usize) -> Option<f64> {
        self.distances.as_ref().map(|d| d[r * self.users + q])
    }

    pub fn distances(&self) -> Option<&[f64]> {
        self.distances.as_deref()
    }
}

/// One user's transmit strategy: a covariance matrix for MIMO play, or the
/// per-bin power vector of a diagonal (multicarrier) covariance for SISO play.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Cov(CMat),
    Power(Vec<f64>),
}

impl Strategy {
    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Strategy::Cov(m) => m.norm(),
            Strategy::Power(p) => p.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// Frobenius distance between two strategies of the same shape.
    pub fn distance(&self, other: &Strategy) -> f64 {
        match (self, other) {
            (Strategy::Cov(a), Strategy::Cov(b)) => (a - b).norm(),
            (Strategy::Power(a), Strategy::Power(b)) => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            _ => f64::INFINITY,
        }
    }

    pub fn as_covariance(&self) -> Result<&CMat> {
        match self {
            Strategy::Cov(m) => Ok(m),
            Strategy::Power(_) => Err(Error::DimensionMismatch(
                "expected a covariance strategy, found a power vector".into(),
            )),
        }
    }

    pub fn as_powers(&self) -> Result<&[f64]> {
        match self {
            Strategy::Power(p) => Ok(p),
            Strategy::Cov(_) => Err(Error::DimensionMismatch(
                "expected a power-vector strategy, found a covariance".into(),
            )),
        }
    }
}

/// The joint strategy profile: one [`Strategy`] per user.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    strategies: Vec<Strategy>,
}

impl StrategyProfile {
    /// Builds a profile of covariance strategies, checking each matrix is
    /// Hermitian and positive semidefinite within tolerance.
    pub fn from_covariances(covs: Vec<CMat>) -> Result<Self> {
        for (q, m) in covs.iter().enumerate() {
            let scale = max_abs_entry(m);
            let asym = max_abs_entry(&(m - m.adjoint()));
            if scale > 0.0 && asym > HERMITIAN_TOL * scale {
                return Err(Error::NotHermitian { asymmetry: asym, tol: HERMITIAN_TOL * scale });
            }
            let eig = hermitian_eig(&HermitianMatrix::symmetrized(m.clone()));
            let max = eig.values.first().copied().unwrap_or(0.0);
            let min = eig.values.last().copied().unwrap_or(0.0);
            if min < -1e-10 * max.max(1e-300) {
                return Err(Error::DomainError(format!(
                    "covariance of user {q} is not positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(Self { strategies: covs.into_iter().map(Strategy::Cov).collect() })
    }

    /// Builds a profile of per-bin power vectors (all entries nonnegative).
    pub fn from_powers(powers: Vec<Vec<f64>>) -> Result<Self> {
        for (q, p) in powers.iter().enumerate() {
            if p.iter().any(|&x| x < -1e-12 || !x.is_finite()) {
                return Err(Error::DomainError(format!(
                    "power vector of user {q} has negative or non-finite entries"
                )));
            }
        }
        Ok(Self { strategies: powers.into_iter().map(Strategy::Power).collect() })
    }

    /// Wraps strategies produced internally by solvers (already validated).
    pub(crate) fn from_strategies(strategies: Vec<Strategy>) -> Self {
        Self { strategies }
    }

    pub fn users(&self) -> usize {
        self.strategies.len()
    }

    pub fn strategy(&self, q: usize) -> &Strategy {
        &self.strategies[q]
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    pub fn set(&mut self, q: usize, s: Strategy) {
        self.strategies[q] = s;
    }

    pub fn covariance(&self, q: usize) -> Result<&CMat> {
        self.strategies[q].as_covariance()
    }

    pub fn powers(&self, q: usize) -> Result<&[f64]> {
        self.strategies[q].as_powers()
    }
}

/// MUI-plus-noise covariance observed by user `q`:
/// `R_{-q} = R_nq + sum_{r != q} H_rq Q_r H_rq^H`.
pub fn mui_covariance(
    q: usize,
    profile: &StrategyProfile,
    ch: &ChannelSet,
) -> Result<HermitianMatrix> {
    if profile.users() != ch.users() {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} users, channel set has {}",
            profile.users(),
            ch.users()
        )));
    }
    let mut acc = ch.noise(q).as_matrix().clone();
    for r in 0..ch.users() {
        if r == q {
            continue;
        }
        let cov = profile.covariance(r)?;
        let h = ch.link(r, q);
        if cov.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "covariance of user {r} is {}x{} but H[{r}->{q}] has {} columns",
                cov.nrows(),
                cov.ncols(),
                h.ncols()
            )));
        }
        acc += h * cov * h.adjoint();
    }
    Ok(HermitianMatrix::symmetrized(acc))
}

/// Information rate of link `q` in bits per channel use:
/// `log2 det(I + H_qq^H R_{-q}^{-1} H_qq Q_q)`.
///
/// Computed as `log2 det(R_{-q} + H Q H^H) - log2 det(R_{-q})`, which keeps
/// both determinants on Hermitian positive definite matrices.
pub fn rate(q: usize, profile: &StrategyProfile, ch: &ChannelSet) -> Result<f64> {
    let r_mui = mui_covariance(q, profile, ch)?;
    let cov = profile.covariance(q)?;
    let h = ch.link(q, q);
    if cov.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "covariance of user {q} is {}x{} but H[{q}->{q}] has {} columns",
            cov.nrows(),
            cov.ncols(),
            h.ncols()
        )));
    }
    rate_with_interference(&r_mui, h, cov)
}

/// Rate given an explicit interference-plus-noise covariance.
pub fn rate_with_interference(r_mui: &HermitianMatrix, h: &CMat, cov: &CMat) -> Result<f64> {
    let signal = HermitianMatrix::symmetrized(r_mui.as_matrix() + h * cov * h.adjoint());
    Ok((log2_det_hpd(&signal)? - log2_det_hpd(r_mui)?).max(0.0))
}

/// Sum of all users' rates.
pub fn sum_rate(profile: &StrategyProfile, ch: &ChannelSet) -> Result<f64> {
    (0..ch.users()).map(|q| rate(q, profile, ch)).sum()
}

/// A labeled half-open range of frequency bins, 1-based: `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Band {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Non-overlapping labeled bin ranges within `[1, N]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BandPlan {
    bands: Vec<Band>,
}

impl BandPlan {
    pub fn new(bands: Vec<Band>, bins: usize) -> Result<Self> {
        for b in &bands {
            if b.start < 1 || b.end <= b.start || b.end > bins + 1 {
                return Err(Error::BadParams(format!(
                    "band {} range [{}, {}) is outside [1, {}]",
                    b.label, b.start, b.end, bins
                )));
            }
        }
        let mut sorted: Vec<&Band> = bands.iter().collect();
        sorted.sort_by_key(|b| b.start);
        for w in sorted.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::BadParams(format!(
                    "bands {} and {} overlap",
                    w[0].label, w[1].label
                )));
            }
        }
        Ok(Self { bands })
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// Label of the band containing 1-based bin `k`, if any.
    pub fn label_of(&self, k: usize) -> Option<&str> {
        self.bands
            .iter()
            .find(|b| b.start <= k && k < b.end)
            .map(|b| b.label.as_str())
    }
}

/// Block transmission over frequency-selective SISO channels: per-bin
/// frequency responses, per-bin noise powers, optional band annotations.
#[derive(Debug, Clone)]
pub struct SisoScenario {
    bins: usize,
    users: usize,
    /// `responses[r * users + q][k]` is `H_rq(k)`.
    responses: Vec<Vec<Complex64>>,
    /// `noise[q][k] > 0`.
    noise: Vec<Vec<f64>>,
    bands: Option<BandPlan>,
}

impl SisoScenario {
    pub fn new(
        bins: usize,
        users: usize,
        responses: Vec<Vec<Complex64>>,
        noise: Vec<Vec<f64>>,
        bands: Option<BandPlan>,
    ) -> Result<Self> {
        if bins == 0 || users == 0 {
            return Err(Error::BadParams("need at least one bin and one user".into()));
        }
        if responses.len() != users * users {
            return Err(Error::DimensionMismatch(format!(
                "expected {} response vectors, got {}",
                users * users,
                responses.len()
            )));
        }
        if responses.iter().any(|r| r.len() != bins) {
            return Err(Error::DimensionMismatch("every response needs one entry per bin".into()));
        }
        if responses
            .iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::DomainError("non-finite frequency response".into()));
        }
        if noise.len() != users || noise.iter().any(|n| n.len() != bins) {
            return Err(Error::DimensionMismatch("need one noise power per user per bin".into()));
        }
        if noise.iter().flatten().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::DomainError("noise powers must be positive".into()));
        }
        Ok(Self { bins, users, responses, noise, bands })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// `H_rq(k)` for 0-based bin `k`.
    pub fn response(&self, r: usize, q: usize, k: usize) -> Complex64 {
        self.responses[r * self.users + q][k]
    }

    pub fn responses(&self, r: usize, q: usize) -> &[Complex64] {
        &self.responses[r * self.users + q]
    }

    pub fn noise_power(&self, q: usize, k: usize) -> f64 {
        self.noise[q][k]
    }

    pub fn bands(&self) -> Option<&BandPlan> {
        self.bands.as_ref()
    }
}

/// MUI-plus-noise power seen by user `q` on 0-based bin `k`.
pub fn siso_interference(s: &SisoScenario, q: usize, k: usize, profile: &StrategyProfile) -> f64 {
    let mut acc = s.noise_power(q, k);
    for r in 0..s.users() {
        if r == q {
            continue;
        }
        if let Ok(p) = profile.powers(r) {
            acc += s.response(r, q, k).norm_sqr() * p[k];
        }
    }
    acc
}

/// Per-bin sum rate of user `q` in bits, with gap factor `gap >= 1`
/// (`gap = 1` is the capacity formula).
pub fn siso_rate(s: &SisoScenario, q: usize, profile: &StrategyProfile, gap: f64) -> Result<f64> {
    let p = profile.powers(q)?;
    let mut acc = 0.0;
    for k in 0..s.bins() {
        let gain = s.response(q, q, k).norm_sqr();
        let interference = siso_interference(s, q, k, profile);
        acc += (1.0 + gain * p[k] / (gap * interference)).log2();
    }
    Ok(acc)
}

/// Normalized IFFT matrix `[W]_ij = exp(j 2 pi (i-1)(j-1) / N) / sqrt(N)`.
pub fn fourier_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |i, j| {
        let angle = 2.0 * std::f64::consts::PI * (i as f64) * (j as f64) / (n as f64);
        c(angle.cos() * scale, angle.sin() * scale)
    })
}

/// Lifts a SISO scenario to its equivalent MIMO representation:
/// `H_rq = W diag(H_rq(k)) W^H` (Toeplitz circulant) and
/// `R_nq = W diag(noise_q(k)) W^H`.
pub fn circulant_channels(s: &SisoScenario) -> Result<ChannelSet> {
    let n = s.bins();
    let users = s.users();
    let w = fourier_matrix(n);
    let wh = w.adjoint();
    let mut links = Vec::with_capacity(users * users);
    for r in 0..users {
        for q in 0..users {
            let d = CMat::from_diagonal(&CVec::from_iterator(
                n,
                s.responses(r, q).iter().copied(),
            ));
            links.push(&w * d * &wh);
        }
    }
    let mut noise = Vec::with_capacity(users);
    for q in 0..users {
        let d = CMat::from_diagonal(&CVec::from_iterator(
            n,
            (0..n).map(|k| c(s.noise_power(q, k), 0.0)),
        ));
        noise.push(HermitianMatrix::symmetrized(&w * d * &wh));
    }
    ChannelSet::new(users, links, noise, None)
}

/// Draws an i.i.d. circularly-symmetric complex Gaussian channel set.
///
/// Entry variance of `H_rq` is `d_rq^(-2 gamma)` where `gamma` is the
/// amplitude path-loss exponent (`gamma = 2` matches an `H = H_flat / d^2`
/// convention). Noise covariances are identity. Deterministic for a given
/// seed: entries are drawn per link in row-major `(r, q)` order.
pub fn random_mimo_channels(
    seed: u64,
    antennas: &[usize],
    distances: Option<&[f64]>,
    gamma: f64,
) -> Result<ChannelSet> {
    let users = antennas.len();
    if users == 0 {
        return Err(Error::BadParams("need at least one user".into()));
    }
    if let Some(d) = distances {
        if d.len() != users * users {
            return Err(Error::DimensionMismatch("distance grid must be Q x Q".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut links = Vec::with_capacity(users * users);
    for r in 0..users {
        for q in 0..users {
            let amp = distances
                .map(|d| d[r * users + q].powf(-gamma))
                .unwrap_or(1.0);
            let m = DMatrix::from_fn(antennas[q], antennas[r], |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                c(re * inv_sqrt2 * amp, im * inv_sqrt2 * amp)
            });
            links.push(m);
        }
    }
    let noise = antennas.iter().map(|&n| HermitianMatrix::identity(n)).collect();
    ChannelSet::new(users, links, noise, distances.map(|d| d.to_vec()))
}

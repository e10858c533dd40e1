//! Shared test fixtures and independent oracles.
//!
//! The solvers under test are closed-form KKT constructions; the oracles here
//! deliberately take a different route. Matrix best responses are checked
//! against projected gradient ascent over the (spectral) feasible sets, and
//! scalar best responses against an exact dynamic program on a power grid.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use iwfa_core::channel::{ChannelSet, SisoScenario, StrategyProfile};
use iwfa_core::linalg::{CMat, HermitianMatrix};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn random_cmat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
    })
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
    let a = random_cmat(rng, n, n);
    HermitianMatrix::symmetrized((&a * a.adjoint()).scale(scale)).into_matrix()
}

/// Random 2-user channel set whose cross links are rescaled so the
/// "low received MUI" uniqueness sum stays at `target < 1` for every
/// receiver.
pub fn weak_coupling_channels(seed: u64, antennas: usize, target: f64) -> ChannelSet {
    use iwfa_core::channel::random_mimo_channels;
    use iwfa_core::game::uniqueness_mimo;

    let base = random_mimo_channels(seed, &[antennas, antennas], None, 2.0).unwrap();
    let report = uniqueness_mimo(&base).unwrap();
    let worst = report
        .received_lhs
        .iter()
        .chain(report.generated_lhs.iter())
        .copied()
        .fold(0.0, f64::max);
    let scale = (target / worst.max(1e-12)).sqrt();
    let mut links = Vec::new();
    for r in 0..2 {
        for q in 0..2 {
            let h = base.link(r, q).clone();
            links.push(if r == q { h } else { h.map(|z| z * c(scale, 0.0)) });
        }
    }
    let noise = vec![HermitianMatrix::identity(antennas), HermitianMatrix::identity(antennas)];
    ChannelSet::new(2, links, noise, None).unwrap()
}

/// Random SISO scenario with direct responses bounded away from fading nulls
/// and cross responses scaled by `cross_scale`.
pub fn bounded_siso_scenario(
    seed: u64,
    users: usize,
    bins: usize,
    cross_scale: f64,
) -> SisoScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut responses = Vec::with_capacity(users * users);
    for r in 0..users {
        for q in 0..users {
            let resp: Vec<Complex64> = (0..bins)
                .map(|_| {
                    if r == q {
                        // Magnitude in [0.6, 1.4]: no deep fades on direct links.
                        let mag = 0.6 + 0.8 * rng.random::<f64>();
                        let phase = rng.random::<f64>() * std::f64::consts::TAU;
                        c(mag * phase.cos(), mag * phase.sin())
                    } else {
                        c(
                            cross_scale * (rng.random::<f64>() - 0.5),
                            cross_scale * (rng.random::<f64>() - 0.5),
                        )
                    }
                })
                .collect();
            responses.push(resp);
        }
    }
    let noise: Vec<Vec<f64>> = (0..users)
        .map(|_| (0..bins).map(|_| 0.5 + rng.random::<f64>()).collect())
        .collect();
    SisoScenario::new(bins, users, responses, noise, None).unwrap()
}

pub fn zero_cov_profile(dims: &[usize]) -> StrategyProfile {
    StrategyProfile::from_covariances(dims.iter().map(|&n| CMat::zeros(n, n)).collect()).unwrap()
}

/// `log2 det(I + S X)` evaluated directly (LU determinant).
pub fn log2_det_objective(s: &CMat, x: &CMat) -> f64 {
    let n = s.nrows();
    let m = CMat::identity(n, n) + s * x;
    m.determinant().re.log2()
}

/// Euclidean projection of `values` onto
/// `{0 <= x_i <= cap, sum_i x_i <= budget}` via bisection on the shift.
fn project_simplex_box(values: &[f64], budget: f64, cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = values.iter().map(|&v| v.clamp(0.0, cap)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        return clipped;
    }
    let mut lo = 0.0;
    let mut hi = values.iter().copied().fold(0.0f64, f64::max);
    for _ in 0..200 {
        let theta = 0.5 * (lo + hi);
        let total: f64 = values.iter().map(|&v| (v - theta).clamp(0.0, cap)).sum();
        if total > budget {
            lo = theta;
        } else {
            hi = theta;
        }
    }
    let theta = 0.5 * (lo + hi);
    values.iter().map(|&v| (v - theta).clamp(0.0, cap)).collect()
}

/// Euclidean projection of a Hermitian matrix onto
/// `{X >= 0, Tr X <= budget, lambda_max(X) <= cap}` (a unitarily invariant
/// set, so it acts on the eigenvalues).
fn project_spectral(x: &CMat, budget: f64, cap: f64) -> CMat {
    let se = HermitianMatrix::symmetrized(x.clone()).into_matrix().symmetric_eigen();
    let vals: Vec<f64> = se.eigenvalues.iter().copied().collect();
    let projected = project_simplex_box(&vals, budget, cap);
    let n = x.nrows();
    let mut acc = CMat::zeros(n, n);
    for (i, &p) in projected.iter().enumerate() {
        if p > 0.0 {
            let v = se.eigenvectors.column(i);
            acc += (v * v.adjoint()).map(|z| z * c(p, 0.0));
        }
    }
    acc
}

/// Maximizes `log2 det(I + S X)` over `{X >= 0, Tr X <= budget,
/// lambda_max(X) <= cap}` by projected gradient ascent with backtracking.
/// Returns the achieved objective.
pub fn pga_oracle(s: &CMat, budget: f64, cap: f64, max_iter: usize) -> f64 {
    let n = s.nrows();
    let mut x = CMat::zeros(n, n);
    let mut fx = 0.0f64;
    let mut step = 1.0f64;
    let mut quiet = 0;
    for _ in 0..max_iter {
        let inner = CMat::identity(n, n) + s * &x;
        let Some(inv) = inner.try_inverse() else { break };
        let grad =
            HermitianMatrix::symmetrized((&inv * s).scale(1.0 / std::f64::consts::LN_2))
                .into_matrix();
        let mut accepted = false;
        for _ in 0..60 {
            let cand = project_spectral(&(&x + grad.scale(step)), budget, cap);
            let fc = log2_det_objective(s, &cand);
            if fc >= fx {
                let moved = (&cand - &x).norm();
                x = cand;
                fx = fc;
                step = (step * 2.0).min(1e8);
                accepted = true;
                quiet = if moved <= 1e-12 * x.norm().max(1.0) { quiet + 1 } else { 0 };
                break;
            }
            step *= 0.5;
        }
        if !accepted || quiet >= 5 {
            break;
        }
    }
    fx
}

/// Orthonormal basis of `range(P_perp(u) restricted to range(b))`: columns
/// spanning `range(b) intersect null(u^H)`. `b` columns orthonormal.
pub fn intersect_complement(b: &CMat, u: &CMat) -> CMat {
    if u.ncols() == 0 {
        return b.clone();
    }
    // Project U out of the basis, then re-orthonormalize what is left.
    let proj = iwfa_core::linalg::orth_complement_projector(u).unwrap();
    let reduced = proj.as_matrix() * b;
    iwfa_core::linalg::range_basis(&reduced, 1e-10)
}

/// Exact dynamic program over a power grid: maximizes
/// `sum_k log2(1 + gains[k] p_k)` with `p_k = a_k * delta`,
/// `sum_k a_k = units`, `p_k <= caps[k]`. Returns the optimal grid objective,
/// or `None` when the caps cannot absorb the budget on the grid.
pub fn dp_grid_oracle(gains: &[f64], caps: Option<&[f64]>, budget: f64, units: usize) -> Option<f64> {
    let delta = budget / units as f64;
    let n = gains.len();
    let cap_units: Vec<usize> = (0..n)
        .map(|k| {
            let cap = caps.map(|cc| cc[k]).unwrap_or(f64::INFINITY);
            if cap.is_infinite() { units } else { ((cap / delta) + 1e-9).floor() as usize }
        })
        .map(|u| u.min(units))
        .collect();
    if cap_units.iter().sum::<usize>() < units {
        return None;
    }
    const NEG: f64 = f64::NEG_INFINITY;
    let mut dp = vec![NEG; units + 1];
    dp[0] = 0.0;
    for k in 0..n {
        let values: Vec<f64> =
            (0..=cap_units[k]).map(|a| (1.0 + gains[k] * a as f64 * delta).log2()).collect();
        let mut next = vec![NEG; units + 1];
        for u in 0..=units {
            for (a, &val) in values.iter().enumerate().take(u + 1) {
                if dp[u - a] > NEG {
                    let cand = dp[u - a] + val;
                    if cand > next[u] {
                        next[u] = cand;
                    }
                }
            }
        }
        dp = next;
    }
    Some(dp[units])
}

/// Random diagonal-dominant shaping matrix with full row rank.
pub fn random_shaping(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    assert!(cols >= rows);
    let mut g = random_cmat(rng, rows, cols);
    for i in 0..rows {
        g[(i, i)] += c(2.0, 0.0);
    }
    g
}

pub fn identity_noise(users: usize, n: usize) -> Vec<HermitianMatrix> {
    (0..users).map(|_| HermitianMatrix::identity(n)).collect()
}

pub fn dmatrix_scale(m: &DMatrix<Complex64>, s: f64) -> DMatrix<Complex64> {
    m.map(|z| z * c(s, 0.0))
}

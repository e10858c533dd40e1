//! Asynchronous-engine behavior: delayed reads, determinism, and the
//! virtual-noise limit experiment.

mod common;

use common::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use iwfa_core::channel::{Strategy, StrategyProfile};
use iwfa_core::constraints::{ConstraintSpec, UserConstraints};
use iwfa_core::engine::{
    initial_profile, make_schedule, run, run_with_observer, virtual_noise_limit_check, InitPreset,
    RunOptions, Schedule, ScheduleKind, TickPlan,
};
use iwfa_core::game::{GameChannels, GameSpec, GameVariant};

fn two_user_spec(seed: u64, antennas: usize, coupling: f64) -> GameSpec {
    let ch = weak_coupling_channels(seed, antennas, coupling);
    let cs = ConstraintSpec::new(vec![
        UserConstraints::power_only(1.0),
        UserConstraints::power_only(1.0),
    ])
    .unwrap();
    GameSpec::new(GameChannels::Mimo(ch), cs, GameVariant::G1).unwrap()
}

/// Replays a randomized run from the observer records and checks that every
/// committed update equals a fresh best response against the profiles the
/// schedule says were read - delayed reads must be bit-identical to history.
#[test]
fn delayed_reads_replay_bit_identically() {
    let spec = two_user_spec(31337, 3, 0.6);
    let schedule = make_schedule(
        ScheduleKind::Randomized { update_probability: 0.5, max_delay: 3, seed: 99 },
        2,
    )
    .unwrap();
    let init = initial_profile(InitPreset::UniformProjected, &spec).unwrap();
    let opts = RunOptions { max_iter: 60, tol: 1e-12 };

    let mut committed: Vec<StrategyProfile> = vec![init.clone()];
    let mut plans: Vec<TickPlan> = Vec::new();
    let _ = run_with_observer(&spec, &schedule, &init, &opts, |event| {
        committed.push(event.profile.clone());
        plans.push(TickPlan {
            tick: event.plan.tick,
            updaters: event.plan.updaters.clone(),
            ages: event.plan.ages.clone(),
        });
    })
    .unwrap();

    assert!(plans.len() >= 10, "want a meaningful run to replay");
    for plan in &plans {
        let n = plan.tick;
        for &q in &plan.updaters {
            // Assemble the delayed view from the committed history.
            let mut strategies: Vec<Strategy> = Vec::new();
            for r in 0..2 {
                if r == q {
                    strategies.push(committed[n].strategy(q).clone());
                } else {
                    let tau = plan.ages[q][r];
                    strategies.push(committed[tau].strategy(r).clone());
                }
            }
            let view = StrategyProfile::from_covariances(
                strategies
                    .iter()
                    .map(|s| s.as_covariance().unwrap().clone())
                    .collect(),
            )
            .unwrap();
            let br = spec.best_response(q, &view).unwrap();
            assert_eq!(
                &br,
                committed[n + 1].strategy(q),
                "tick {n}, user {q}: replayed update differs"
            );
        }
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let spec = two_user_spec(4242, 3, 0.6);
    let schedule = make_schedule(
        ScheduleKind::Randomized { update_probability: 0.7, max_delay: 2, seed: 1 },
        2,
    )
    .unwrap();
    let init = initial_profile(InitPreset::Zero, &spec).unwrap();
    let opts = RunOptions::default();
    let a = run(&spec, &schedule, &init, &opts).unwrap();
    let b = run(&spec, &schedule, &init, &opts).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.profile, b.profile);
    assert_eq!(a.step_trajectory, b.step_trajectory);
}

#[test]
fn converged_runs_pass_their_own_nash_check() {
    for (seed, kind) in [
        (11u64, ScheduleKind::Sequential),
        (12, ScheduleKind::Simultaneous),
        (13, ScheduleKind::Randomized { update_probability: 0.5, max_delay: 5, seed: 3 }),
    ] {
        let spec = two_user_spec(seed, 4, 0.5);
        let schedule = make_schedule(kind, 2).unwrap();
        let init = initial_profile(InitPreset::Zero, &spec).unwrap();
        let opts = RunOptions { max_iter: 500, tol: 1e-9 };
        let result = run(&spec, &schedule, &init, &opts).unwrap();
        assert!(result.converged, "seed {seed} failed to converge");
        assert!(result.report.is_nash);
        for &r in &result.report.residuals {
            assert!(r <= 10.0 * opts.tol);
        }
    }
}

fn schedule_for(spec: &GameSpec) -> Schedule {
    make_schedule(ScheduleKind::Simultaneous, spec.users()).unwrap()
}

#[test]
fn virtual_noise_curve_reaches_the_limit() {
    // Well-conditioned 2-user 2x2 with one null direction per user.
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let ch = weak_coupling_channels(777, 2, 0.4);
    let mk = |rng: &mut ChaCha8Rng| {
        let mut u = UserConstraints::power_only(1.0);
        u.null_space = Some(random_cmat(rng, 2, 1));
        u
    };
    let cs = ConstraintSpec::new(vec![mk(&mut rng), mk(&mut rng)]).unwrap();
    let spec = GameSpec::new(GameChannels::Mimo(ch.clone()), cs.clone(), GameVariant::GInfinity)
        .unwrap();
    let schedule = schedule_for(&spec);
    let opts = RunOptions { max_iter: 2000, tol: 1e-10 };
    let alphas = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6];
    let curve = virtual_noise_limit_check(&ch, &cs, &alphas, &schedule, &opts).unwrap();

    assert!(curve.uniqueness.any_holds(), "gate: uniqueness condition should hold");
    // The limit game's equilibrium satisfies the hard null constraint.
    assert!(
        curve.limit_null_residual <= 1e-8,
        "limit null residual {:.3e}",
        curve.limit_null_residual
    );
    // Large virtual noise nearly enforces the null...
    let last = *curve.null_residuals.last().unwrap();
    let first = curve.null_residuals[0];
    assert!(last <= 1e-3, "residual at alpha=1e6 is {last:.3e}");
    // ...and the trend toward the limit shows across the grid endpoints.
    assert!(last <= first, "null residual grew: {first:.3e} -> {last:.3e}");
    let gap_first = curve.limit_gaps[0];
    let gap_last = *curve.limit_gaps.last().unwrap();
    assert!(gap_last < gap_first, "gap to the limit grew: {gap_first:.3e} -> {gap_last:.3e}");
}

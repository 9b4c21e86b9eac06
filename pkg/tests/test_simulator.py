"""Tests for the trajectory simulator.

The throughput oracles are numerical integrals over the stationary laws:
power is Gamma(L, 1) and the alignment of a stale isotropic beam is
Beta(1, L-1).  Simulated means must land within a few reported standard
errors of those integrals.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from beamfeedback.channel import FadingParams
from beamfeedback.codebook import lloyd_codebook, random_codebook
from beamfeedback.mdp import (
    Policy,
    RewardSpec,
    ThresholdProfile,
    average_reward,
    policy_iteration_average,
)
from beamfeedback.simulator import (
    CSV_HEADER,
    Curve,
    CurvePoint,
    EvalResult,
    TrajectoryConfig,
    average_threshold,
    curve_to_csv,
    periodic_baseline,
    refinement_study,
    simulate_periodic,
    simulate_policy,
    sweep_alpha,
)
from beamfeedback.state_grid import (
    StationaryDistribution,
    estimate_transition_model,
    make_grid,
)


# ----------------------------------------------------------------------------
# oracles
# ----------------------------------------------------------------------------

def stale_beam_rate_oracle(P, L):
    """E[log2(1 + P g z)] for g ~ Gamma(L,1) and z ~ Beta(1, L-1)."""
    val, err = integrate.dblquad(
        lambda z, g: math.log2(1.0 + P * g * z) * stats.gamma.pdf(g, L)
        * (L - 1) * (1.0 - z) ** (L - 2),
        0.0, 60.0, 0.0, 1.0)
    assert err < 1e-6
    return val

def fresh_beam_rate_oracle(P, L):
    """E[log2(1 + P g)] for g ~ Gamma(L, 1)."""
    val, err = integrate.quad(
        lambda g: math.log2(1.0 + P * g) * stats.gamma.pdf(g, L), 0.0, np.inf)
    assert err < 1e-6
    return val


PARAMS = FadingParams(L=3, doppler_slot=0.1)
REWARDS = RewardSpec(P=100.0, alpha=0.5)
RUN = TrajectoryConfig(slots=400_000, warmup=1000, seed=99)


@pytest.fixture(scope="module")
def grid8():
    return make_grid(3, 8, 8, 200_000, np.random.default_rng(4242))


@pytest.fixture(scope="module")
def model8(grid8):
    return estimate_transition_model(PARAMS, grid8, 200_000,
                                     np.random.default_rng(4243))


def never(spec):
    return Policy(np.zeros((spec.M, spec.N), dtype=bool))


def always(spec):
    return Policy(np.ones((spec.M, spec.N), dtype=bool))


# ----------------------------------------------------------------------------
# configuration types
# ----------------------------------------------------------------------------

class TestTypes:
    def test_config_validation(self):
        cfg = TrajectoryConfig(slots=5000, warmup=100, seed=1)
        assert cfg.slots == 5000 and cfg.warmup == 100
        with pytest.raises(ValueError):
            TrajectoryConfig(slots=0)
        with pytest.raises(ValueError):
            TrajectoryConfig(slots=100, warmup=100)
        with pytest.raises(ValueError):
            TrajectoryConfig(slots=100, warmup=-1)

    def test_eval_result_validation(self):
        with pytest.raises(ValueError):
            EvalResult(throughput=1.0, feedback_rate=1.5, net=1.0, stderr=0.0)

    def test_curve_requires_increasing_prices(self):
        p = CurvePoint(alpha=0.5, net=1.0, throughput=1.0, feedback_rate=0.0,
                       avg_threshold=0.0, stderr=0.0)
        q = CurvePoint(alpha=0.2, net=1.0, throughput=1.0, feedback_rate=0.0,
                       avg_threshold=0.0, stderr=0.0)
        Curve(points=(q, p))
        with pytest.raises(ValueError, match="increasing"):
            Curve(points=(p, q))


# ----------------------------------------------------------------------------
# policy simulation against the integral oracles
# ----------------------------------------------------------------------------

class TestSimulatePolicy:
    def test_never_feedback_matches_integral(self, grid8):
        res = simulate_policy(never(grid8), grid8, PARAMS, REWARDS, RUN)
        want = stale_beam_rate_oracle(100.0, 3)
        assert res.feedback_rate == 0.0
        assert res.net == res.throughput
        assert abs(res.throughput - want) <= 3.0 * res.stderr + 1e-9

    def test_always_feedback_matches_integral(self, grid8):
        res = simulate_policy(always(grid8), grid8, PARAMS, REWARDS, RUN)
        want = fresh_beam_rate_oracle(100.0, 3)
        assert res.feedback_rate == 1.0
        assert abs(res.throughput - want) <= 3.0 * res.stderr + 1e-9

    def test_net_identity(self, grid8, model8):
        solved = policy_iteration_average(model8, REWARDS, grid8)
        res = simulate_policy(solved.policy, grid8, PARAMS, REWARDS,
                              TrajectoryConfig(slots=50_000, seed=7))
        assert abs(res.net - (res.throughput - 0.5 * res.feedback_rate)) <= 1e-12
        assert 0.0 < res.feedback_rate < 1.0
        assert res.stderr > 0.0

    def test_partial_feedback_sits_between_the_extremes(self, grid8, model8):
        cfg = TrajectoryConfig(slots=200_000, seed=11)
        free = RewardSpec(P=100.0, alpha=0.0)
        solved = policy_iteration_average(model8, REWARDS, grid8)
        lo = simulate_policy(never(grid8), grid8, PARAMS, free, cfg)
        mid = simulate_policy(solved.policy, grid8, PARAMS, free, cfg)
        hi = simulate_policy(always(grid8), grid8, PARAMS, free, cfg)
        slack = 3.0 * (lo.stderr + mid.stderr + hi.stderr)
        assert lo.throughput - slack <= mid.throughput <= hi.throughput + slack

    def test_deterministic_for_a_seed(self, grid8, model8):
        solved = policy_iteration_average(model8, REWARDS, grid8)
        cfg = TrajectoryConfig(slots=30_000, seed=13)
        a = simulate_policy(solved.policy, grid8, PARAMS, REWARDS, cfg)
        b = simulate_policy(solved.policy, grid8, PARAMS, REWARDS, cfg)
        assert a == b

    def test_common_random_numbers_across_prices(self, grid8, model8):
        # the trajectory and the decisions depend on the seed and policy, not
        # on the price, so throughput agrees exactly across alphas
        solved = policy_iteration_average(model8, REWARDS, grid8)
        cfg = TrajectoryConfig(slots=30_000, seed=17)
        a = simulate_policy(solved.policy, grid8, PARAMS,
                            RewardSpec(P=100.0, alpha=0.1), cfg)
        b = simulate_policy(solved.policy, grid8, PARAMS,
                            RewardSpec(P=100.0, alpha=1.3), cfg)
        assert a.throughput == b.throughput
        assert a.feedback_rate == b.feedback_rate

    def test_static_channel_has_zero_error_bars(self, grid8):
        frozen = FadingParams(L=3, doppler_slot=0.0)
        res = simulate_policy(never(grid8), grid8, frozen, REWARDS,
                              TrajectoryConfig(slots=20_000, seed=19))
        assert res.stderr <= 1e-12  # constant series; rounding noise only

    def test_quantized_feedback_loses_throughput(self, grid8):
        cb = random_codebook(3, 8, 123)
        cfg = TrajectoryConfig(slots=200_000, seed=23)
        free = RewardSpec(P=100.0, alpha=0.0)
        perfect = simulate_policy(always(grid8), grid8, PARAMS, free, cfg)
        coarse = simulate_policy(always(grid8), grid8, PARAMS, free, cfg,
                                 codebook=cb)
        assert coarse.feedback_rate == 1.0
        slack = 3.0 * (perfect.stderr + coarse.stderr)
        assert coarse.throughput <= perfect.throughput - 0.1 + slack

    def test_dimension_mismatch_rejected(self, grid8):
        with pytest.raises(ValueError, match="dimensions"):
            simulate_policy(Policy(np.zeros((4, 4), bool)), grid8, PARAMS,
                            REWARDS, TrajectoryConfig(slots=100, warmup=0, seed=1))


class TestOptimalPolicyDominance:
    def test_solver_beats_random_thresholds_on_the_model(self, grid8, model8):
        rng = np.random.default_rng(29)
        best = policy_iteration_average(model8, REWARDS, grid8).J
        for _ in range(10):
            edges = rng.integers(0, grid8.N + 1, size=grid8.M)
            decide = grid8.z_points[None, :] < grid8.z_edges[edges][:, None]
            J = average_reward(Policy(decide), model8, REWARDS, grid8)
            assert J <= best + 1e-9


# ----------------------------------------------------------------------------
# periodic baseline
# ----------------------------------------------------------------------------

class TestPeriodic:
    def test_every_slot_equals_always_feedback(self, grid8):
        cfg = TrajectoryConfig(slots=100_000, seed=31)
        a = simulate_periodic(1, grid8, PARAMS, REWARDS, cfg)
        b = simulate_policy(always(grid8), grid8, PARAMS, REWARDS, cfg)
        assert a == b

    def test_period_one_matches_integral(self, grid8):
        res = simulate_periodic(1, grid8, PARAMS, REWARDS, RUN)
        want = fresh_beam_rate_oracle(100.0, 3) - 0.5
        assert res.feedback_rate == 1.0
        assert abs(res.net - want) <= 3.0 * res.stderr + 1e-9

    def test_feedback_rate_tracks_the_period(self, grid8):
        cfg = TrajectoryConfig(slots=100_000, seed=37)
        for k in (2, 5, 9):
            res = simulate_periodic(k, grid8, PARAMS, REWARDS, cfg)
            assert abs(res.feedback_rate - 1.0 / k) <= 2.0 * k / 99_000

    def test_free_feedback_prefers_period_one(self, grid8):
        free = RewardSpec(P=100.0, alpha=0.0)
        cfg = TrajectoryConfig(slots=60_000, seed=41)
        k, res = periodic_baseline(grid8, PARAMS, free, 8, cfg)
        assert k == 1
        assert res.feedback_rate == 1.0

    def test_costly_feedback_approaches_never_feeding_back(self, grid8):
        dear = RewardSpec(P=100.0, alpha=3.0)
        cfg = TrajectoryConfig(slots=120_000, seed=43)
        k, res = periodic_baseline(grid8, PARAMS, dear, 64, cfg)
        stale = simulate_policy(never(grid8), grid8, PARAMS, dear, cfg)
        assert k > 1
        assert res.net >= stale.net - 0.15
        # long periods mostly ride a stale beam, so throughput stays nearby
        assert res.net <= simulate_policy(always(grid8), grid8, PARAMS,
                                          RewardSpec(P=100.0, alpha=0.0),
                                          cfg).throughput

    def test_bad_periods_rejected(self, grid8):
        cfg = TrajectoryConfig(slots=1000, warmup=0, seed=1)
        with pytest.raises(ValueError):
            simulate_periodic(0, grid8, PARAMS, REWARDS, cfg)
        with pytest.raises(ValueError):
            periodic_baseline(grid8, PARAMS, REWARDS, 0, cfg)


# ----------------------------------------------------------------------------
# threshold averaging and sweeps
# ----------------------------------------------------------------------------

class TestAverageThreshold:
    def test_extremes(self):
        pi = StationaryDistribution(np.full((2, 3), 1.0 / 6.0))
        ones = ThresholdProfile(y=np.ones(2), is_threshold=True)
        zeros = ThresholdProfile(y=np.zeros(2), is_threshold=True)
        assert average_threshold(ones, pi) == 1.0
        assert average_threshold(zeros, pi) == 0.0

    def test_weighted_value(self):
        pi = StationaryDistribution(np.array([[0.25, 0.0], [0.25, 0.5]]))
        prof = ThresholdProfile(y=np.array([0.2, 0.6]), is_threshold=True)
        np.testing.assert_allclose(average_threshold(prof, pi), 0.5, rtol=1e-15)

    def test_non_threshold_rejected(self):
        pi = StationaryDistribution(np.full((2, 2), 0.25))
        prof = ThresholdProfile(y=np.array([0.2, 0.6]), is_threshold=False)
        with pytest.raises(ValueError, match="threshold"):
            average_threshold(prof, pi)

    def test_size_mismatch_rejected(self):
        pi = StationaryDistribution(np.full((3, 2), 1.0 / 6.0))
        prof = ThresholdProfile(y=np.array([0.2, 0.6]), is_threshold=True)
        with pytest.raises(ValueError, match="match"):
            average_threshold(prof, pi)


@pytest.fixture(scope="module")
def small_sweep(grid8):
    # 25 is far beyond any one-slot gain plus the continuation value of a
    # realignment on this channel, so the top point must never feed back
    cfg = TrajectoryConfig(slots=120_000, seed=47)
    top = 25.0
    return sweep_alpha([0.0, 0.5, top], grid8, PARAMS, REWARDS, cfg,
                       model_samples=150_000), top


class TestSweep:
    def test_free_feedback_point(self, small_sweep):
        curve, _ = small_sweep
        first = curve.points[0]
        assert first.alpha == 0.0
        assert first.feedback_rate == 1.0
        assert first.avg_threshold == 1.0

    def test_prohibitive_price_point(self, small_sweep, grid8):
        curve, top = small_sweep
        last = curve.points[-1]
        assert last.feedback_rate == 0.0
        assert last.avg_threshold == 0.0
        # identical seeds: the sweep's never-feedback run is the plain one
        stale = simulate_policy(never(grid8), grid8, PARAMS,
                                RewardSpec(P=100.0, alpha=top),
                                TrajectoryConfig(slots=120_000, seed=47))
        assert last.throughput == stale.throughput

    def test_point_bookkeeping(self, small_sweep):
        curve, top = small_sweep
        assert [p.alpha for p in curve.points] == [0.0, 0.5, top]
        for p in curve.points:
            assert abs(p.net - (p.throughput - p.alpha * p.feedback_rate)) <= 1e-12
            assert p.stderr > 0.0

    def test_alphas_must_increase(self, grid8):
        cfg = TrajectoryConfig(slots=5000, seed=1)
        with pytest.raises(ValueError, match="increasing"):
            sweep_alpha([0.5, 0.5], grid8, PARAMS, REWARDS, cfg,
                        model_samples=5000)
        with pytest.raises(ValueError, match="increasing"):
            sweep_alpha([], grid8, PARAMS, REWARDS, cfg, model_samples=5000)

    def test_quantized_sweep_stays_below_perfect(self):
        spec = make_grid(3, 6, 6, 100_000, np.random.default_rng(53))
        cb = lloyd_codebook(3, 8, 20_000, 20, 54)
        cfg = TrajectoryConfig(slots=100_000, seed=55)
        alphas = [0.2, 0.8]
        perfect = sweep_alpha(alphas, spec, PARAMS, REWARDS, cfg,
                              model_samples=100_000)
        coarse = sweep_alpha(alphas, spec, PARAMS, REWARDS, cfg, codebook=cb,
                             model_samples=100_000)
        for p, q in zip(perfect.points, coarse.points):
            assert q.net <= p.net + 3.0 * (p.stderr + q.stderr)


class TestCsv:
    def test_header_and_rows(self):
        pts = (CurvePoint(alpha=0.2, net=5.5, throughput=5.9,
                          feedback_rate=0.25, avg_threshold=0.4, stderr=0.01),
               CurvePoint(alpha=0.4, net=5.2, throughput=5.8,
                          feedback_rate=0.125, avg_threshold=math.nan,
                          stderr=0.01))
        text = curve_to_csv(Curve(points=pts))
        lines = text.strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert lines[0] == "alpha,net,throughput,feedback_rate,avg_threshold,stderr"
        assert len(lines) == 3
        first = [float(v) for v in lines[1].split(",")]
        np.testing.assert_allclose(first, [0.2, 5.5, 5.9, 0.25, 0.4, 0.01],
                                   rtol=1e-15)
        assert math.isnan(float(lines[2].split(",")[4]))


# ----------------------------------------------------------------------------
# grid refinement
# ----------------------------------------------------------------------------

class TestRefinement:
    def test_single_cell_hand_solution(self):
        cfg = TrajectoryConfig(slots=200_000, seed=61)
        table = refinement_study([(1, 1)], PARAMS, REWARDS, cfg)
        (M, N, J) = table[0]
        assert (M, N) == (1, 1)
        # one state: feed back always or never, whichever pays more
        want = max(math.log2(1.0 + 100.0 * 3.0) - 0.5,
                   math.log2(1.0 + 100.0 * 3.0 * 0.5))
        assert abs(J - want) <= 0.1

    def test_differences_contract(self):
        cfg = TrajectoryConfig(slots=200_000, seed=67)
        table = refinement_study([(4, 4), (8, 8), (16, 16)], PARAMS, REWARDS, cfg)
        J4, J8, J16 = (row[2] for row in table)
        assert abs(J16 - J8) < abs(J8 - J4) + 0.1

    def test_deterministic(self):
        cfg = TrajectoryConfig(slots=40_000, seed=71)
        a = refinement_study([(2, 2), (4, 4)], PARAMS, REWARDS, cfg)
        b = refinement_study([(2, 2), (4, 4)], PARAMS, REWARDS, cfg)
        assert a == b

    def test_sizes_must_increase(self):
        cfg = TrajectoryConfig(slots=10_000, seed=1)
        with pytest.raises(ValueError, match="increasing"):
            refinement_study([(8, 8), (4, 4)], PARAMS, REWARDS, cfg)
        with pytest.raises(ValueError, match="increasing"):
            refinement_study([], PARAMS, REWARDS, cfg)

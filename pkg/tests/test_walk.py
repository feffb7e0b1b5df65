import math

import numpy as np
import pytest

from coolwalk.envdist import two_point
from coolwalk.errors import OracleSizeError, WindowError
from coolwalk.rng import derive_stream
from coolwalk.walk import (
    ThresholdRule,
    WalkOutcome,
    endpoint_samples,
    exact_annealed_pmf,
    left_tail_curve,
    mc_moments,
    moments_from_samples,
    regeneration_increments,
    regeneration_split,
    simulate_endpoint,
    tail_probabilities,
    truncated_second_moment_from_samples,
    tv_distance,
)


@pytest.fixture(scope="module")
def k2():
    return two_point(0.75, 0.25, 0.9)


def test_exact_pmf_two_steps(k2):
    # UU visits two fresh sites; UD and DU revisit the origin
    pmf = exact_annealed_pmf(k2, 2)
    assert pmf[2] == pytest.approx(0.49, abs=1e-15)
    assert pmf[0] == pytest.approx(0.42, abs=1e-15)
    assert pmf[-2] == pytest.approx(0.09, abs=1e-15)


def test_exact_pmf_three_steps(k2):
    # <w> = 0.7, <w^2> = 0.5125, <w(1-w)> = 0.1875, <(1-w)^2> = 0.1125
    pmf = exact_annealed_pmf(k2, 3)
    assert pmf[3] == pytest.approx(0.343, abs=1e-15)
    assert pmf[1] == pytest.approx(0.147 + 0.15375 + 0.13125, abs=1e-15)
    assert pmf[-1] == pytest.approx(0.05625 + 0.07875 + 0.063, abs=1e-15)
    assert pmf[-3] == pytest.approx(0.027, abs=1e-15)


@pytest.mark.parametrize("n", [1, 4, 7, 10])
def test_exact_pmf_is_a_distribution(k2, n):
    pmf = exact_annealed_pmf(k2, n)
    assert math.fsum(pmf.values()) == pytest.approx(1.0, abs=1e-12)
    assert all((z - n) % 2 == 0 and abs(z) <= n for z in pmf)


def test_oracle_size_cap(k2):
    with pytest.raises(OracleSizeError):
        exact_annealed_pmf(k2, 21)


def test_monte_carlo_matches_oracle(k2):
    z = endpoint_samples(k2, 8, 200_000, 11)
    assert tv_distance(z, exact_annealed_pmf(k2, 8)) < 0.01


def test_endpoint_samples_are_cached_and_frozen(k2):
    a = endpoint_samples(k2, 50, 1000, 5)
    b = endpoint_samples(k2, 50, 1000, 5)
    assert a is b
    assert not a.flags.writeable
    assert np.all((a - 50) % 2 == 0) and np.all(np.abs(a) <= 50)


def test_single_walk_reproduces_batch(k2):
    # replica r of a batch runs on stream (seed, r) with the walk tag
    from coolwalk.walk import TAG_WALK

    z = endpoint_samples(k2, 30, 5, 99)
    for r in range(5):
        out = simulate_endpoint(k2, 30, derive_stream(99, r, TAG_WALK))
        assert out.z == z[r]


def test_quenched_walk_in_deterministic_environment():
    env = np.ones(2 * 20 + 1)
    assert simulate_endpoint(None, 20, derive_stream(1, 0), mode="quenched", env=env).z == 20
    env[:] = 0.0
    out = simulate_endpoint(None, 20, derive_stream(1, 0), mode="quenched", env=env, record_path=True)
    assert out.z == -20 and list(out.path[:3]) == [0, -1, -2]
    with pytest.raises(ValueError):
        simulate_endpoint(None, 20, derive_stream(1, 0), mode="quenched", env=np.ones(5))


def test_walk_outcome_checks_parity():
    with pytest.raises(ValueError):
        WalkOutcome(3, 2)
    with pytest.raises(ValueError):
        WalkOutcome(3, 5)


def test_moments_exact_on_integers():
    est = moments_from_samples(np.array([1, 3, 3, 5], dtype=np.int64), n=4)
    assert est.mean == 3.0
    assert est.variance == pytest.approx(8 / 3)
    assert est.second_moment == 11.0


def test_mc_moments_mean_speed(k2):
    est = mc_moments(k2, 4000, 4000, 3)
    assert abs(est.mean / 4000 - 0.25) < 0.02


def test_threshold_rules():
    assert ThresholdRule.fixed(3).level(10) == 3
    assert ThresholdRule.sqrt_log4().level(100) == pytest.approx(10 * math.log(100) ** 4)
    s = 1000.0
    assert ThresholdRule.a_kn(s, 1).level(1) == pytest.approx(s / math.sqrt(math.log(s)))
    assert ThresholdRule.a_kn(s, 64).level(64) == pytest.approx(8 * math.log(64) ** 4)


def test_truncated_second_moment_by_hand():
    z = np.array([-10.0, -1.0, 0.0, 1.0, 10.0])
    assert truncated_second_moment_from_samples(z, 2.0) == pytest.approx(2 / 5)
    assert truncated_second_moment_from_samples(z, 100.0) == pytest.approx(202 / 5)


def test_tail_probabilities_by_hand():
    z = np.array([0, 2, 4, 6, 8])
    pts = tail_probabilities(z, n=16, v=0.5, x_grid=[3.0, 7.0])
    assert pts[0][:2] == (3.0, 0.6)  # z < 5
    assert pts[1][:2] == (7.0, 0.2)  # z < 1


def test_theorem_window_is_empty_at_desk_scale(k2):
    with pytest.raises(WindowError):
        left_tail_curve(k2, 4096, [100.0], 100, 1)


def test_regeneration_split_by_hand():
    path = [0, 1, 0, 1, 2, 3, 2, 3, 4]
    regs = regeneration_split(path, margin=0)
    assert [(g.time, g.level) for g in regs] == [(4, 2), (8, 4)]
    assert [g.censored for g in regeneration_split(path, margin=2)] == [False, True]


def test_regeneration_increments_are_positive(k2):
    dz, dr = regeneration_increments(k2, 2000, 4, replicas=3)
    assert len(dz) > 0 and np.all(dz >= 1) and np.all(dr >= dz)

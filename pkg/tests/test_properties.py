import math

import numpy as np
from hypothesis import given, settings, strategies as st
from scipy import stats

from coolwalk.cooling import Exponential, Polynomial, tilde_lambda
from coolwalk.envdist import discrete, two_point
from coolwalk.rng import derive_stream
from coolwalk.stats import ks_two_sample, loglog_slope
from coolwalk.walk import exact_annealed_pmf

FAST = settings(max_examples=40, deadline=None)


@FAST
@given(w=st.floats(0.51, 0.99), n=st.integers(1, 12))
def test_single_atom_oracle_is_binomial(w, n):
    # a constant environment is a plain biased walk
    pmf = exact_annealed_pmf(discrete([(w, 1.0)]), n)
    for k in range(n + 1):
        assert math.isclose(pmf.get(2 * k - n, 0.0), stats.binom.pmf(k, n, w), rel_tol=1e-9, abs_tol=1e-15)


@FAST
@given(p=st.floats(0.6, 0.99), n=st.integers(1, 10))
def test_oracle_is_a_distribution(p, n):
    pmf = exact_annealed_pmf(two_point(0.75, 0.25, p), n)
    assert math.isclose(math.fsum(pmf.values()), 1.0, abs_tol=1e-12)
    assert min(pmf.values()) > 0


@FAST
@given(A=st.floats(0.3, 5.0), alpha=st.floats(0.1, 2.5), n=st.integers(0, 5000))
def test_cooling_bookkeeping(A, alpha, n):
    m = Polynomial(A, alpha)
    eff = m.effective_increments(n)
    assert int(eff.sum()) == n
    l = m.ell(n)
    assert m.tau(l) <= n < m.tau(l + 1)
    assert m.ell(m.tau(l)) == l


@FAST
@given(c=st.floats(0.05, 2.0), k=st.integers(1, 15), kappa=st.floats(0.1, 0.9))
def test_tilde_lambda_unit_norm(c, k, kappa):
    m = Exponential(1.0, c)
    lam = tilde_lambda(m, m.tau(k), kappa)
    assert math.isclose(lam.norm2, 1.0, rel_tol=1e-12)
    assert np.all(np.diff(lam.sorted) <= 0)


@FAST
@given(seed=st.integers(0, 2**64 - 1), idx=st.integers(0, 2**40))
def test_streams_are_pure_functions(seed, idx):
    a = derive_stream(seed, idx).u32(16)
    b = derive_stream(seed, idx).u32(16)
    assert np.array_equal(a, b)
    assert np.all(a < 2**32)


@FAST
@given(slope=st.floats(-2, 2), scale=st.floats(0.01, 100))
def test_loglog_slope_recovers_exponents(slope, scale):
    pts = [(n, scale * n**slope) for n in (2, 8, 32, 128, 512)]
    assert math.isclose(loglog_slope(pts).estimate, slope, abs_tol=1e-10)


@FAST
@given(seed=st.integers(0, 1000), shift=st.floats(-3, 3), scale=st.floats(0.1, 10))
def test_ks_affine_invariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=300), rng.standard_t(3, size=400)
    r = ks_two_sample(a, b)
    assert math.isclose(ks_two_sample(b, a).statistic, r.statistic)
    assert math.isclose(ks_two_sample(shift + scale * a, shift + scale * b).statistic, r.statistic)

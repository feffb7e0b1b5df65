import json
import math

import numpy as np
import pytest

from coolwalk.cooling import (
    Constant,
    Custom,
    Exponential,
    Interweaved,
    LambdaVector,
    Polynomial,
    SuperExp,
    a_of_lambda,
    build_map,
    construct_mixture_map,
    empirical_lambda,
    export_map,
    snapped_ceil,
    tilde_lambda,
)
from coolwalk.errors import (
    CoolingOverflowError,
    HorizonError,
    IllPosedError,
    MissingVarianceError,
    NormExceededError,
)


def test_polynomial_linear_map():
    m = Polynomial(1, 1)
    assert list(m.increments(5)) == [1, 2, 3, 4, 5]
    assert m.tau(200) == 20100
    assert m.ell(7) == 3
    assert list(m.effective_increments(7)) == [1, 2, 3, 1]
    assert list(m.effective_increments(6)) == [1, 2, 3]
    assert m.increment_counts(7) == {1: 2, 2: 1, 3: 1}


def test_constant_map():
    m = Constant(3)
    assert m.tau(4) == 12 and m.ell(13) == 4
    assert list(m.effective_increments(8)) == [3, 3, 2]
    with pytest.raises(ValueError):
        Constant(0)


def test_exponential_quarter_powers():
    m = Exponential(1 / 16, math.log(4))
    # 4^k / 16 with the two sub-unit blocks rounded up to one step
    assert list(m.increments(12)) == [1, 1] + [4**i for i in range(1, 11)]
    assert m.tau(12) == 2 + (4**11 - 4) // 3
    with pytest.raises(CoolingOverflowError):
        m.tau(m.max_index + 1)


def test_superexp_double_powers():
    m = SuperExp(math.log(2), base=2)
    assert [m.tau(k) for k in range(1, 6)] == [4, 16, 256, 65536, 2**32]
    assert m.max_index == 5
    with pytest.raises(CoolingOverflowError):
        m.tau(6)


def test_oscillation_interweaving():
    m = Interweaved("oscillation")
    inc = m.increments(800)
    assert inc[4 - 1] == 4 and inc[32 - 1] == 16 and inc[768 - 1] == 256
    assert np.count_nonzero(inc != 1) == 3
    assert m.oscillation_index(2, 0) == 32
    assert m.oscillation_index(2, 1) == 32 + math.floor(16 * math.log(16))


def test_mixture_interweaving():
    m = Interweaved("mixture", kappa=0.5)
    inc = m.increments(16)
    # T_{2^i} = 2^(i-1) for kappa = 1/2
    assert inc[2 - 1] == 1 and inc[4 - 1] == 2 and inc[8 - 1] == 4 and inc[16 - 1] == 8


def test_custom_map_and_horizon(tmp_path):
    m = Custom([2, 5, 1])
    assert m.tau(3) == 8 and m.ell(8) == 3
    with pytest.raises(HorizonError):
        m.ell(9)
    path = export_map(m, tmp_path / "map.txt")
    again = Custom.from_file(path)
    assert list(again.increments(3)) == [2, 5, 1]
    assert json.loads((tmp_path / "map.txt.json").read_text())["blocks"] == 3
    (tmp_path / "bad.txt").write_text("3\nx\n")
    with pytest.raises(ValueError, match="bad.txt:2"):
        Custom.from_file(tmp_path / "bad.txt")


def test_custom_overflow():
    with pytest.raises(CoolingOverflowError):
        Custom([2**62, 2**62])


def test_snapped_ceiling():
    assert snapped_ceil((math.sqrt(3) * math.sqrt(2)) ** 2) == 6
    assert snapped_ceil(6.01) == 7
    with pytest.raises(CoolingOverflowError):
        snapped_ceil(math.inf)


def test_build_map_factory():
    assert build_map("polynomial", A=2, alpha=1).increment(3) == 6
    with pytest.raises(ValueError):
        build_map("bogus")


def test_tilde_lambda_exponential_head():
    m = Exponential(1 / 16, math.log(4))
    lam = tilde_lambda(m, m.tau(12), 0.5)
    expect = [math.sqrt(3) * 2.0**-k for k in range(1, 6)]
    assert np.allclose(lam.head(5), expect, atol=1e-6)
    assert lam.norm2 == pytest.approx(1.0)


def test_tilde_lambda_polynomial_flattens():
    m = Polynomial(1, 1)
    assert tilde_lambda(m, m.tau(2000), 0.5).sorted[0] < 0.05


def test_empirical_lambda_with_exact_variances():
    m = Polynomial(1, 1)
    lam = empirical_lambda(m, m.tau(3), {1: 1.0, 2: 2.0, 3: 3.0})
    assert np.allclose(lam.weights**2, [1 / 6, 2 / 6, 3 / 6])
    with pytest.raises(MissingVarianceError):
        empirical_lambda(m, m.tau(3), {1: 1.0})


def test_lambda_vector_norms():
    lam = LambdaVector.from_function(lambda k: 2.0 ** (-(k + 1) / 2), head=8)
    assert lam.norm2 == pytest.approx(0.5, rel=1e-12)
    assert a_of_lambda(lam) == pytest.approx(math.sqrt(0.5))
    with pytest.raises(NormExceededError):
        a_of_lambda(LambdaVector([0.9, 0.9]))
    with pytest.raises(ValueError):
        LambdaVector([-0.1])


def test_designer_case_two_single_atom():
    cmap, nj = construct_mixture_map(LambdaVector([1.0, 0.0]), 0.5, rounds=5)
    assert cmap.case == "II"
    # with no Gaussian part round j adds one block with T^(1/2) = j V_{j-1}, so
    # the largest weight is j V / sqrt(V^2 + j^2 V^2) = j / sqrt(1 + j^2)
    # (from round 2 on; round 1 is the lone first block)
    assert tilde_lambda(cmap, nj[0], 0.5).sorted[0] == 1.0
    for j, n in list(enumerate(nj, 1))[1:]:
        assert tilde_lambda(cmap, n, 0.5).sorted[0] == pytest.approx(j / math.sqrt(1 + j * j), abs=1e-3)


def test_designer_rejects_increasing_weights():
    with pytest.raises(ValueError):
        construct_mixture_map(LambdaVector([0.1, 0.5]), 0.5)
    with pytest.raises(IllPosedError):
        construct_mixture_map(LambdaVector([0.5, 0.0]), 0.5, case="I", rounds=2)

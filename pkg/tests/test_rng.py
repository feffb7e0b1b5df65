import numpy as np
import pytest
from scipy import stats

from coolwalk.rng import TAG_SHIFT, Stream, derive_stream, philox4x32, stream_index

u = np.uint64


# Philox4x32-10 known-answer vectors from the Random123 distribution
@pytest.mark.parametrize(
    "ctr, key, expect",
    [
        ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
        ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
        (
            (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
            (0xA4093822, 0x299F31D0),
            (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1),
        ),
    ],
)
def test_philox_known_answers(ctr, key, expect):
    out = philox4x32(*(u(c) for c in ctr), *(u(k) for k in key))
    assert tuple(int(x) for x in out) == expect


def test_same_stream_same_draws():
    a = derive_stream(12345, 17).u32(1000)
    b = derive_stream(12345, 17).u32(1000)
    assert np.array_equal(a, b)


def test_neighbouring_streams_differ():
    a = derive_stream(1, 0).u32(8)
    b = derive_stream(1, 1).u32(8)
    c = derive_stream(2, 0).u32(8)
    assert a[0] != b[0] and a[0] != c[0]


def test_draws_do_not_depend_on_batching():
    s = derive_stream(9, 3)
    one_by_one = [s.u32() for _ in range(11)]
    assert np.array_equal(np.array(one_by_one, dtype=np.uint64), derive_stream(9, 3).u32(11))


def test_stream_index_tags_are_disjoint():
    assert stream_index(5, 0) == 5
    assert stream_index(5, 2) == (2 << TAG_SHIFT) | 5
    with pytest.raises(ValueError):
        stream_index(1 << TAG_SHIFT, 1)


def test_uniform_and_normal_marginals():
    s = derive_stream(2024, 0)
    x = s.random(200_000)
    assert 0.0 <= x.min() and x.max() < 1.0
    assert stats.kstest(x, "uniform").pvalue > 1e-3
    z = Stream(2024, 1).normal(200_000)
    assert stats.kstest(z, "norm").pvalue > 1e-3

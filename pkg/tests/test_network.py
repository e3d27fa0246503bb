import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from chimera_dtc.network import (NEAREST_NEIGHBOR, DisorderField, RegionPartition,
                                 SpinNetwork, build_ladder, build_power_law_chain,
                                 half_partition, ladder_partitions, network_document,
                                 network_from_document, sample_disorder)


def test_power_law_two_sites():
    net = build_power_law_chain(2, 1.0, 1.51)
    assert net.edges == ((0, 1, 1.0),)


def test_power_law_next_nearest_value():
    # oracle: 50-digit evaluation of 2**-1.51
    expected = float(mpmath.power(mpmath.mpf(2), -mpmath.mpf("1.51")))
    net = build_power_law_chain(3, 1.0, 1.51)
    assert net.coupling(0, 2) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(0.3511, abs=5e-5)


@pytest.mark.parametrize("alpha", [NEAREST_NEIGHBOR, "inf", math.inf])
def test_power_law_infinite_range_is_nearest_neighbor(alpha):
    net = build_power_law_chain(3, 1.0, alpha)
    assert net.edges == ((0, 1, 1.0), (1, 2, 1.0))


def test_power_law_all_to_all():
    net = build_power_law_chain(5, 0.3, 0)
    assert len(net.edges) == 10
    assert all(J == 0.3 for _, _, J in net.edges)


def test_large_alpha_limit_matches_truncation():
    n = 7
    far = build_power_law_chain(n, 1.0, 64)
    for l, m, J in far.edges:
        if m - l > 1:
            assert J <= 2.0 ** -64
    nn = [(l, m, J) for l, m, J in far.edges if m - l == 1]
    assert build_power_law_chain(n, 1.0, "inf").edges == tuple(nn)


@pytest.mark.parametrize("bad", [dict(J0=math.nan, alpha=1), dict(J0=1.0, alpha=-0.5),
                                 dict(J0=math.inf, alpha=1)])
def test_power_law_rejects(bad):
    with pytest.raises(ValueError):
        build_power_law_chain(4, **bad)


@given(st.integers(2, 9), st.floats(0.01, 6))
def test_power_law_decreasing_and_symmetric(n, alpha):
    net = build_power_law_chain(n, 1.0, alpha)
    J = net.coupling_matrix()
    assert np.array_equal(J, J.T)
    for d in range(1, n - 1):
        assert J[0, d] > J[0, d + 1]


def test_network_invariants():
    with pytest.raises(ValueError):
        SpinNetwork(3, ((1, 0, 1.0),))
    with pytest.raises(ValueError):
        SpinNetwork(3, ((0, 1, 1.0), (0, 1, 2.0)))
    with pytest.raises(ValueError):
        SpinNetwork(3, ((0, 3, 1.0),))
    with pytest.raises(ValueError):
        SpinNetwork(3, ((0, 1, math.nan),))


@pytest.mark.parametrize("rungs,J,sites,edges", [(2, 1.0, 4, 4), (4, 0.2, 8, 10), (3, 0.0, 6, 7)])
def test_ladder(rungs, J, sites, edges):
    net = build_ladder(rungs, J)
    assert net.n_sites == sites
    assert len(net.edges) == edges == 3 * rungs - 2
    assert all(c == J for _, _, c in net.edges)


def test_ladder_connectivity_and_degrees():
    net = build_ladder(4, 1.0)
    degree = np.count_nonzero(net.coupling_matrix(), axis=1)
    # corners have a rail and a rung neighbour, interior sites two rail + one rung
    assert sorted(degree) == [2, 2, 2, 2, 3, 3, 3, 3]
    assert net.coupling(0, 4) == 1.0 and net.coupling(3, 7) == 1.0


def test_ladder_rejects_single_rung():
    with pytest.raises(ValueError):
        build_ladder(1, 1.0)


def test_ladder_partitions_nondegenerate():
    parts = ladder_partitions(4)
    assert set(parts) == {"rail", "half", "checkerboard", "ends"}
    for p in parts.values():
        assert len(p.sites("A")) == 4 and not p.is_degenerate


def test_disorder_zero_strength():
    d = sample_disorder(6, 0.0, "symmetric", seed=123)
    assert np.all(d.values == 0)


def test_disorder_deterministic():
    a = sample_disorder(8, 2.5, "symmetric", seed=99)
    b = sample_disorder(8, 2.5, "symmetric", seed=99)
    assert a.values.tobytes() == b.values.tobytes()
    c = sample_disorder(8, 2.5, "symmetric", seed=100)
    assert not np.array_equal(a.values, c.values)


def test_disorder_positive_bounds():
    W = 2 * math.pi
    d = sample_disorder(8, W, "positive", seed=1)
    assert d.values.shape == (8,)
    assert np.all((d.values >= 0) & (d.values <= W))


def test_disorder_symmetric_bounds_cover_negative():
    d = sample_disorder(200, 1.0, "symmetric", seed=5)
    assert d.values.min() < 0 < d.values.max()
    assert np.all(np.abs(d.values) <= 1.0)


def test_disorder_rejects_negative_and_is_immutable():
    with pytest.raises(ValueError):
        sample_disorder(4, -1.0)
    d = sample_disorder(4, 1.0, seed=2)
    with pytest.raises(ValueError):
        d.values[0] = 0.0
    with pytest.raises(ValueError):
        DisorderField(np.array([2.0]), 1.0, "positive")


@pytest.mark.parametrize("n,A", [(8, (0, 1, 2, 3)), (2, (0,)), (6, (0, 1, 2))])
def test_half_partition(n, A):
    p = half_partition(n)
    assert p.sites("A") == A
    assert p.sites("B") == tuple(range(n // 2, n))


def test_half_partition_rejects_odd():
    with pytest.raises(ValueError):
        half_partition(5)


def test_partition_degenerate_needs_flag():
    with pytest.raises(ValueError):
        RegionPartition(("A", "A"))
    assert RegionPartition(("A", "A"), allow_degenerate=True).is_degenerate


def test_network_document_round_trip():
    net = build_power_law_chain(4, 0.2, 1.51)
    part = half_partition(4)
    dis = sample_disorder(4, 2 * math.pi, "positive", seed=7)
    doc = json.loads(json.dumps(network_document(net, part, dis)))
    assert doc["edges"][0] == [0, 1, 0.2]
    net2, part2, dis2 = network_from_document(doc)
    assert net2 == net and part2 == part
    assert np.array_equal(dis2.values, dis.values)

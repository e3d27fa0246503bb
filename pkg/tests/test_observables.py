import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chimera_dtc import observables as obs
from chimera_dtc.evolution import prepare_polarized, prepare_tilted
from chimera_dtc.network import RegionPartition, half_partition

from conftest import random_state


def basis(n, s):
    psi = np.zeros(1 << n, dtype=complex)
    psi[s] = 1
    return psi


def ghz(n):
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = psi[-1] = 1 / math.sqrt(2)
    return psi


def test_polarized_magnetizations():
    psi = prepare_polarized(4)
    assert np.array_equal(obs.local_magnetizations(psi), np.ones(4))
    assert obs.regional_magnetization(psi, half_partition(4)) == (1.0, 1.0)


def test_basis_state_magnetizations():
    # s = 0b0101: sites 0, 2 up
    m = obs.local_magnetizations(basis(4, 0b0101))
    assert np.array_equal(m, [1, -1, 1, -1])
    assert obs.local_magnetization(basis(4, 0b0101), 1) == -1
    assert obs.regional_magnetization(basis(4, 0b0011), half_partition(4)) == (1.0, -1.0)


def test_tilted_magnetization():
    m = obs.local_magnetizations(prepare_tilted(5, 0.3))
    assert np.allclose(m, math.cos(0.3), atol=1e-14)


def test_batched_magnetizations(rng):
    states = np.stack([random_state(rng, 4) for _ in range(3)])
    batch = obs.local_magnetizations(states)
    for k in range(3):
        assert np.allclose(batch[k], obs.local_magnetizations(states[k]), atol=1e-15)


def test_magnetization_matches_brute_force(rng):
    n = 5
    psi = random_state(rng, n)
    p = np.abs(psi) ** 2
    for l in range(n):
        expect = sum(p[s] * (1 if s >> l & 1 else -1) for s in range(1 << n))
        assert obs.local_magnetization(psi, l) == pytest.approx(expect, abs=1e-14)


def test_regional_normalisations(rng):
    part = RegionPartition(("A", "B", "B", "A", "B", "A"))
    psi = random_state(rng, 6)
    m = obs.local_magnetizations(psi)
    MA, MB = obs.regional_magnetization(psi, part)
    # 2/N normalisation
    assert MA == pytest.approx(m[[0, 3, 5]].sum() / 3, abs=1e-15)
    assert MB == pytest.approx(m[[1, 2, 4]].sum() / 3, abs=1e-15)
    unbalanced = RegionPartition(("A", "B", "B", "B"))
    m4 = obs.local_magnetizations(random_state(rng, 4))
    a, b = obs.regional_from_local(m4, unbalanced)
    am, bm = obs.regional_mean_from_local(m4, unbalanced)
    assert a == pytest.approx(m4[0] / 2) and am == pytest.approx(m4[0])
    assert b == pytest.approx(m4[1:].sum() / 2) and bm == pytest.approx(m4[1:].mean())


def test_product_state_reduced_rank_one(rng):
    n = 6
    rho = obs.reduced_density_matrix(prepare_tilted(n, 0.7), half_partition(n))
    assert rho.shape == (8, 8)
    w = np.linalg.eigvalsh(rho)
    assert w[-1] == pytest.approx(1.0, abs=1e-13)
    assert obs.entanglement_entropy(prepare_tilted(n, 0.7), half_partition(n)) < 1e-12


def test_bell_pair():
    part = half_partition(2)
    rho = obs.reduced_density_matrix(ghz(2), part)
    assert np.allclose(rho, np.eye(2) / 2, atol=1e-15)
    assert obs.entanglement_entropy(ghz(2), part) == pytest.approx(math.log(2), abs=1e-14)


def test_ghz_entropy():
    assert obs.entanglement_entropy(ghz(4), half_partition(4)) == pytest.approx(math.log(2), abs=1e-14)


def test_reduced_matrix_brute_force(rng):
    n = 4
    part = RegionPartition(("B", "A", "A", "B"))
    psi = random_state(rng, n)
    rho = obs.reduced_density_matrix(psi, part, keep="B")
    B = [0, 3]
    expect = np.zeros((4, 4), dtype=complex)
    for s in range(16):
        for t in range(16):
            if all((s >> l & 1) == (t >> l & 1) for l in (1, 2)):
                i = sum((s >> l & 1) << k for k, l in enumerate(B))
                j = sum((t >> l & 1) << k for k, l in enumerate(B))
                expect[i, j] += psi[s] * psi[t].conj()
    assert np.abs(rho - expect).max() < 1e-15


def test_spectra_of_both_sides_agree(rng):
    psi = random_state(rng, 6)
    part = RegionPartition(("A", "B", "A", "A", "B", "B"))
    wa = np.linalg.eigvalsh(obs.reduced_density_matrix(psi, part, keep="A"))
    wb = np.linalg.eigvalsh(obs.reduced_density_matrix(psi, part, keep="B"))
    assert np.allclose(wa, wb, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 6]))
def test_entropy_symmetric_and_bounded(seed, n):
    psi = random_state(np.random.default_rng(seed), n)
    part = half_partition(n)
    sa = obs.entanglement_entropy(psi, part, keep="A")
    sb = obs.entanglement_entropy(psi, part, keep="B")
    assert sa == pytest.approx(sb, abs=1e-12)
    assert -1e-12 <= sb <= (n // 2) * math.log(2) + 1e-12


def test_entropy_rejects_degenerate():
    part = RegionPartition(("A", "A"), allow_degenerate=True)
    with pytest.raises(ValueError):
        obs.entanglement_entropy(ghz(2), part)


def test_von_neumann_mixed():
    rho = np.diag([0.5, 0.25, 0.25, 0.0])
    assert obs.von_neumann_entropy(rho) == pytest.approx(1.5 * math.log(2), abs=1e-15)


def test_reference_entropies():
    page, ghz_ref = obs.reference_entropies(8)
    assert page == pytest.approx((8 * math.log(2) - 1) / 2, abs=1e-15)
    assert page == pytest.approx(2.2726, abs=5e-5)
    assert ghz_ref == pytest.approx(0.6931, abs=5e-5)
    assert obs.reference_entropies(2)[0] == pytest.approx(0.1931, abs=5e-5)


def test_ensemble_mean_hand_computed():
    a = np.array([1.0, -1.0, 0.5])
    b = np.array([0.0, 1.0, 0.5])
    assert np.array_equal(obs.ensemble_mean([a, b]), [0.5, 0.0, 0.5])
    with pytest.raises(ValueError):
        obs.ensemble_mean([])


def test_subharmonic_weight_examples():
    alt = [(-1) ** k for k in range(10)]
    assert obs.subharmonic_weight(alt) == 1.0
    assert obs.subharmonic_weight(np.ones(10)) == 0.0
    assert obs.subharmonic_weight(0.8 * np.array(alt), window=4, start=2) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        obs.subharmonic_weight(alt, window=20)


def test_subharmonic_lifetime():
    series = np.array([(-1) ** k for k in range(200)], dtype=float)
    assert obs.subharmonic_lifetime(series) is None
    series[100:] = 0.0
    # windows starting at 91+ contain at most 9 nonzero alternating terms
    assert obs.subharmonic_lifetime(series, window=20) == 91
    times = np.arange(1, 201)
    assert obs.subharmonic_lifetime(series, times=times) == 92

"""Magnetizations, reduced density matrices and entanglement entropies.

All functions accept a single state of shape ``(2**N,)`` or a stack of
states ``(..., 2**N)``; basis index ``s`` carries site ``l`` in bit ``l``
and bit value 1 means sigma^z = +1.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .network import RegionPartition

EIGENVALUE_CUTOFF = 1e-14


def n_sites_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise ValueError(f"state length {dim} is not a power of two")
    return n


@lru_cache(maxsize=32)
def z_signs(n: int) -> np.ndarray:
    """(2**n, n) array of sigma^z eigenvalues (+1 for bit 1, -1 for bit 0)."""
    s = np.arange(1 << n)[:, None]
    z = 2 * ((s >> np.arange(n)[None, :]) & 1) - 1
    z = z.astype(np.int8)
    z.setflags(write=False)
    return z


def local_magnetizations(state: np.ndarray) -> np.ndarray:
    """<sigma^z_l> for every site, shape ``(..., N)``."""
    n = n_sites_of(state)
    probs = np.abs(state) ** 2
    lead = probs.shape[:-1]
    out = np.empty(lead + (n,))
    for l in range(n):
        view = probs.reshape(lead + (1 << (n - 1 - l), 2, 1 << l))
        up = view[..., 1, :].sum(axis=(-2, -1))
        down = view[..., 0, :].sum(axis=(-2, -1))
        out[..., l] = up - down
    return out


def local_magnetization(state: np.ndarray, l: int) -> float:
    n = n_sites_of(state)
    if not 0 <= l < n:
        raise IndexError(f"site {l} out of range for {n} sites")
    return local_magnetizations(state)[..., l]


def _check_partition(state, partition: RegionPartition) -> int:
    n = n_sites_of(state)
    if partition.n_sites != n:
        raise ValueError(f"partition has {partition.n_sites} sites, state has {n}")
    return n


def regional_magnetization(state: np.ndarray, partition: RegionPartition):
    """(M_A, M_B) with the equal-halves normalization 2/N * sum over the region."""
    _check_partition(state, partition)
    m = local_magnetizations(state)
    return regional_from_local(m, partition)


def regional_from_local(m: np.ndarray, partition: RegionPartition):
    n = partition.n_sites
    a = list(partition.sites("A"))
    b = list(partition.sites("B"))
    M_A = (2.0 / n) * m[..., a].sum(axis=-1)
    M_B = (2.0 / n) * m[..., b].sum(axis=-1)
    return M_A, M_B


def regional_mean_magnetization(state: np.ndarray, partition: RegionPartition):
    """Per-region mean (1/|R|) sum <sigma^z_l>; differs from 2/N for unequal regions."""
    _check_partition(state, partition)
    return regional_mean_from_local(local_magnetizations(state), partition)


def regional_mean_from_local(m: np.ndarray, partition: RegionPartition):
    out = []
    for label in ("A", "B"):
        sites = list(partition.sites(label))
        out.append(m[..., sites].mean(axis=-1) if sites else np.full(m.shape[:-1], np.nan))
    return tuple(out)


@lru_cache(maxsize=64)
def _bipartite_order(assignment: tuple[str, ...], keep: str) -> np.ndarray:
    """Gather indices arranging a state as a (traced, kept) matrix."""
    kept = [l for l, a in enumerate(assignment) if a == keep]
    traced = [l for l, a in enumerate(assignment) if a != keep]
    k_idx = np.arange(1 << len(kept))
    t_idx = np.arange(1 << len(traced))
    k_bits = np.zeros(len(k_idx), dtype=np.int64)
    for j, site in enumerate(kept):
        k_bits |= ((k_idx >> j) & 1) << site
    t_bits = np.zeros(len(t_idx), dtype=np.int64)
    for j, site in enumerate(traced):
        t_bits |= ((t_idx >> j) & 1) << site
    order = (t_bits[:, None] | k_bits[None, :]).ravel()
    order.setflags(write=False)
    return order


def bipartite_matrix(state: np.ndarray, partition: RegionPartition, keep: str = "B"):
    """Amplitudes reshaped to ``(..., dim_traced, dim_kept)``."""
    _check_partition(state, partition)
    if partition.is_degenerate:
        raise ValueError("reduced density matrix needs a non-degenerate partition")
    keep = keep.upper()
    order = _bipartite_order(partition.assignment, keep)
    d_keep = 1 << len(partition.sites(keep))
    return state[..., order].reshape(state.shape[:-1] + (-1, d_keep))


def reduced_density_matrix(state: np.ndarray, partition: RegionPartition,
                           keep: str = "B") -> np.ndarray:
    """Partial trace of |psi><psi| over the region not named by ``keep``."""
    M = bipartite_matrix(state, partition, keep)
    return np.matmul(np.swapaxes(M, -1, -2), M.conj())


def von_neumann_entropy(rho: np.ndarray) -> np.ndarray:
    lam = np.linalg.eigvalsh(rho)
    safe = np.where(lam > EIGENVALUE_CUTOFF, lam, 1.0)
    return -(safe * np.log(safe)).sum(axis=-1)


def entanglement_entropy(state: np.ndarray, partition: RegionPartition,
                         keep: str = "B"):
    """Von Neumann entropy (natural log) of the reduced state of ``keep``."""
    return von_neumann_entropy(reduced_density_matrix(state, partition, keep))


def reference_entropies(n: int) -> tuple[float, float]:
    """(thermal, MBL) reference values: ((n ln2 - 1)/2, ln 2)."""
    if n < 2:
        raise ValueError("reference entropies need n >= 2")
    return (n * math.log(2) - 1) / 2, math.log(2)


def ensemble_mean(values) -> np.ndarray:
    """Mean over realizations (axis 0), summed in realization order."""
    arr = np.asarray(values, dtype=float)
    if len(arr) == 0:
        raise ValueError("ensemble_mean needs at least one realization")
    total = np.zeros(arr.shape[1:])
    for row in arr:
        total = total + row
    return total / len(arr)


def subharmonic_weight(series, window: int | None = None, start: int = 0) -> float:
    """|sum_n (-1)^n M(n)| / window over ``series[start:start + window]``.

    1 for perfect period-doubled alternation, 0 for a constant series over
    an even window.
    """
    series = np.asarray(series, dtype=float)
    if window is None:
        window = len(series) - start
    if window < 1:
        raise ValueError("window must be >= 1")
    if start < 0 or start + window > len(series):
        raise ValueError("window exceeds series length")
    chunk = series[start:start + window]
    signs = np.where(np.arange(window) % 2 == 0, 1.0, -1.0)
    return float(abs(np.dot(signs, chunk)) / window)


def subharmonic_lifetime(series, window: int = 20, threshold: float = 0.5,
                         times=None):
    """First record time whose sliding-window subharmonic weight drops below
    ``threshold``; ``None`` if it never does.

    ``series`` must be sampled every period. The reported time is the first
    period of the offending window.
    """
    series = np.asarray(series, dtype=float)
    if len(series) < window:
        raise ValueError("series shorter than window")
    signs = np.where(np.arange(len(series)) % 2 == 0, 1.0, -1.0)
    alt = np.concatenate([[0.0], np.cumsum(signs * series)])
    weights = np.abs(alt[window:] - alt[:-window]) / window
    below = np.nonzero(weights < threshold)[0]
    if len(below) == 0:
        return None
    i = int(below[0])
    return int(times[i]) if times is not None else i

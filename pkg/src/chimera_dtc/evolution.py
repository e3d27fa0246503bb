"""State vectors and the two-step Floquet drive.

One period applies the x-rotation layer (region-dependent rotation error)
for ``T1`` and then the diagonal Ising + disorder phase for ``T2``. Kernels
work on a single state ``(2**N,)`` or on a batch ``(R, 2**N)`` of
realizations that share the protocol but differ in disorder.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import observables as obs
from .network import DisorderField, RegionPartition, SpinNetwork, validate_sizes

OBSERVABLES = ("local", "regional", "entropy")


class NumericalError(RuntimeError):
    """Non-finite amplitudes or norm loss during evolution."""


@dataclass(frozen=True)
class DriveProtocol:
    g: float
    T1: float
    T2: float
    eps_A: float = 0.0
    eps_B: float = 0.0

    def __post_init__(self):
        if not (self.T1 > 0 and self.T2 > 0):
            raise ValueError("T1 and T2 must be positive")
        for name in ("eps_A", "eps_B"):
            eps = getattr(self, name)
            if not 0.0 <= eps <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {eps}")
        if not math.isfinite(self.g):
            raise ValueError("g must be finite")

    @classmethod
    def standard(cls, eps_A: float, eps_B: float, period: float = 1.0,
                 T1_fraction: float = 0.5, gT1: float = math.pi / 2,
                 allow_override: bool = False) -> "DriveProtocol":
        """Protocol with a nominal pi pulse (``g*T1 = pi/2``)."""
        if not allow_override and abs(gT1 - math.pi / 2) > 1e-12:
            raise ValueError(f"gT1 must equal pi/2 (got {gT1}); set allow_override")
        if not 0 < T1_fraction < 1:
            raise ValueError("T1_fraction must lie in (0, 1)")
        T1 = T1_fraction * period
        return cls(g=gT1 / T1, T1=T1, T2=period - T1, eps_A=eps_A, eps_B=eps_B)

    @property
    def period(self) -> float:
        return self.T1 + self.T2

    def rotation_angles(self, partition: RegionPartition) -> np.ndarray:
        """phi_l = 2 g (1 - eps_region) T1 for every site."""
        eps = {"A": self.eps_A, "B": self.eps_B}
        return np.array([2 * self.g * (1 - eps[a]) * self.T1 for a in partition.assignment])


def prepare_polarized(n: int) -> np.ndarray:
    """|1, 1, ..., 1>: every spin up along z."""
    if n < 1:
        raise ValueError("n must be >= 1")
    psi = np.zeros(1 << n, dtype=complex)
    psi[-1] = 1.0
    return psi


def prepare_tilted(n: int, theta: float) -> np.ndarray:
    """exp(-i theta/2 sum_l sigma^x_l) applied to the polarized state."""
    psi = prepare_polarized(n)
    return apply_x_rotation_layer(psi, np.full(n, float(theta)))


def _rotate_inplace(state: np.ndarray, angles: np.ndarray) -> None:
    n = obs.n_sites_of(state)
    lead = state.shape[:-1]
    for l, phi in enumerate(angles):
        if phi == 0.0:
            continue
        c = math.cos(phi / 2)
        ms = -1j * math.sin(phi / 2)
        view = state.reshape(lead + (1 << (n - 1 - l), 2, 1 << l))
        a = view[..., 0, :]
        b = view[..., 1, :]
        a_old = a.copy()
        a *= c
        a += ms * b
        b *= c
        b += ms * a_old


def apply_x_rotation_layer(state: np.ndarray, angles) -> np.ndarray:
    """Apply exp(-i phi_l/2 sigma^x_l) on every site ``l``; returns a new array."""
    angles = np.asarray(angles, dtype=float)
    n = obs.n_sites_of(state)
    if angles.shape != (n,):
        raise ValueError(f"expected {n} angles, got shape {angles.shape}")
    out = np.array(state, dtype=complex, copy=True)
    _rotate_inplace(out, angles)
    return out


def diagonal_energies(network: SpinNetwork, disorder: DisorderField | None = None) -> np.ndarray:
    """E(s) = sum_{l<m} J_lm z_l z_m + sum_l W_l z_l on every basis state."""
    n = network.n_sites
    validate_sizes(n, disorder)
    z = obs.z_signs(n).astype(float)
    E = np.zeros(1 << n)
    for l, m, J in network.edges:
        E += J * (z[:, l] * z[:, m])
    if disorder is not None:
        for l, W in enumerate(disorder.values):
            if W != 0.0:
                E += W * z[:, l]
    return E


def apply_diagonal_phase(state: np.ndarray, network: SpinNetwork,
                         disorder: DisorderField | None, T2: float) -> np.ndarray:
    n = obs.n_sites_of(state)
    if n != network.n_sites:
        raise ValueError(f"state has {n} sites, network has {network.n_sites}")
    return state * np.exp(-1j * T2 * diagonal_energies(network, disorder))


def floquet_step(state: np.ndarray, protocol: DriveProtocol, network: SpinNetwork,
                 disorder: DisorderField | None, partition: RegionPartition) -> np.ndarray:
    """One drive period: x-rotation layer for T1, then the diagonal phase for T2."""
    validate_sizes(network.n_sites, partition, disorder)
    out = apply_x_rotation_layer(state, protocol.rotation_angles(partition))
    return apply_diagonal_phase(out, network, disorder, protocol.T2)


@dataclass
class StroboscopicTrace:
    """Observables recorded at stroboscopic times ``n*T``."""

    times: np.ndarray
    local: np.ndarray
    M_A: np.ndarray | None = None
    M_B: np.ndarray | None = None
    S_B: np.ndarray | None = None
    M_A_mean: np.ndarray | None = None
    M_B_mean: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return self.local.shape[1]

    def columns(self) -> list[tuple[str, np.ndarray]]:
        cols = [(f"site_{l}", self.local[:, l]) for l in range(self.n_sites)]
        for name in ("M_A", "M_B", "S_B", "M_A_mean", "M_B_mean"):
            val = getattr(self, name)
            if val is not None:
                cols.append((name, val))
        return cols

    def to_csv(self) -> str:
        cols = self.columns()
        buf = io.StringIO()
        buf.write(",".join(["n"] + [c for c, _ in cols]) + "\n")
        for i, n in enumerate(self.times):
            row = [str(int(n))] + [format(float(v[i]), ".17g") for _, v in cols]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "StroboscopicTrace":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), len(header))
        idx = {name: j for j, name in enumerate(header)}
        sites = sorted((int(h.split("_")[1]), j) for h, j in idx.items() if h.startswith("site_"))
        kw = {name: data[:, idx[name]] for name in
              ("M_A", "M_B", "S_B", "M_A_mean", "M_B_mean") if name in idx}
        return cls(times=data[:, 0].astype(int),
                   local=data[:, [j for _, j in sites]], **kw)


def _normalize_observables(observables: Iterable[str] | None) -> frozenset:
    if observables is None:
        return frozenset({"local", "regional"})
    chosen = frozenset(observables)
    unknown = chosen - set(OBSERVABLES)
    if unknown:
        raise ValueError(f"unknown observables {sorted(unknown)}; choose from {OBSERVABLES}")
    return chosen | {"local"}


def evolve_record_batch(states: np.ndarray, protocol: DriveProtocol, network: SpinNetwork,
                        disorders: Sequence[DisorderField | None],
                        partition: RegionPartition, n_periods: int,
                        record_stride: int = 1, observables=None,
                        labels: Sequence | None = None) -> list[StroboscopicTrace]:
    """Evolve ``R`` states, realization ``r`` under ``disorders[r]``, side by side.

    ``states`` has shape ``(R, 2**N)`` and is not modified.
    """
    if n_periods < 1:
        raise ValueError("n_periods must be >= 1")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    n = network.n_sites
    validate_sizes(n, partition)
    psi = np.array(states, dtype=complex, copy=True)
    if psi.ndim != 2 or psi.shape[1] != 1 << n:
        raise ValueError(f"states must have shape (R, {1 << n}), got {psi.shape}")
    R = psi.shape[0]
    if len(disorders) != R:
        raise ValueError(f"{len(disorders)} disorder fields for {R} states")
    labels = list(labels) if labels is not None else list(range(R))
    wanted = _normalize_observables(observables)

    angles = protocol.rotation_angles(partition)
    phases = np.empty((R, 1 << n), dtype=complex)
    for r, dis in enumerate(disorders):
        phases[r] = np.exp(-1j * protocol.T2 * diagonal_energies(network, dis))

    times = np.arange(record_stride, n_periods + 1, record_stride)
    local = np.empty((R, len(times), n))
    entropy = np.empty((R, len(times))) if "entropy" in wanted else None

    k = 0
    for period in range(1, n_periods + 1):
        _rotate_inplace(psi, angles)
        psi *= phases
        if period % record_stride:
            continue
        if not np.isfinite(psi).all():
            bad = [labels[r] for r in range(R) if not np.isfinite(psi[r]).all()]
            raise NumericalError(f"non-finite amplitudes at period {period} "
                                 f"in realization(s) {bad}")
        local[:, k] = obs.local_magnetizations(psi)
        if entropy is not None:
            entropy[:, k] = obs.entanglement_entropy(psi, partition)
        k += 1

    drift = np.abs(np.linalg.norm(psi, axis=1) - 1.0)
    if np.any(drift > 1e-9):
        bad = [labels[r] for r in np.nonzero(drift > 1e-9)[0]]
        raise NumericalError(f"norm drift {drift.max():.3e} in realization(s) {bad}")

    traces = []
    for r in range(R):
        tr = StroboscopicTrace(times=times.copy(), local=local[r])
        if "regional" in wanted:
            tr.M_A, tr.M_B = obs.regional_from_local(local[r], partition)
            if not partition.is_balanced:
                tr.M_A_mean, tr.M_B_mean = obs.regional_mean_from_local(local[r], partition)
        if entropy is not None:
            tr.S_B = entropy[r]
        traces.append(tr)
    return traces


def evolve_record(state: np.ndarray, protocol: DriveProtocol, network: SpinNetwork,
                  disorder: DisorderField | None, partition: RegionPartition,
                  n_periods: int, record_stride: int = 1,
                  observables=None) -> StroboscopicTrace:
    """Apply ``n_periods`` Floquet steps, recording every ``record_stride`` periods.

    The first record is taken after ``record_stride`` periods (time 0 is not
    recorded).
    """
    state = np.asarray(state)
    if state.ndim != 1:
        raise ValueError("evolve_record takes a single state; use evolve_record_batch")
    return evolve_record_batch(state[None, :], protocol, network, [disorder], partition,
                               n_periods, record_stride, observables)[0]

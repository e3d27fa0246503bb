"""Dense Floquet operators and 2T effective Hamiltonians.

Everything here is built from explicit Kronecker products, independently
of the bitmask kernels in :mod:`chimera_dtc.evolution`, so the two routes
can check each other. Hamiltonians are in inverse-time units (hbar = 1).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from . import observables as obs
from .evolution import DriveProtocol, evolve_record
from .network import DisorderField, RegionPartition, SpinNetwork, validate_sizes

MAX_DENSE_SITES = 12
HERMITIAN_TOL = 1e-12

# single-site matrices in bit order (|0> = down, |1> = up)
I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SZ = np.array([[-1, 0], [0, 1]], dtype=complex)
PAULI = {"x": SX, "y": SY, "z": SZ}


class DenseSizeError(ValueError):
    pass


def _guard(n: int, max_sites: int | None) -> None:
    limit = MAX_DENSE_SITES if max_sites is None else max_sites
    if n > limit:
        raise DenseSizeError(f"{n} sites exceeds the dense limit of {limit} "
                             "(pass max_sites to override)")


def site_operator(kind: str, l: int, n: int) -> np.ndarray:
    """Pauli ``kind`` on site ``l`` of ``n``; site 0 is the least significant bit."""
    if not 0 <= l < n:
        raise IndexError(f"site {l} out of range for {n} sites")
    factors = [PAULI[kind] if site == l else I2 for site in reversed(range(n))]
    return reduce(np.kron, factors)


def is_hermitian(H: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return H.shape[0] == H.shape[1] and np.max(np.abs(H - H.conj().T), initial=0.0) <= tol


def propagator(H: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) through the Hermitian eigendecomposition."""
    if not is_hermitian(H):
        raise ValueError("propagator needs a Hermitian matrix")
    E, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * E * t)) @ V.conj().T


def evolve_dense(H: np.ndarray, state: np.ndarray, t: float) -> np.ndarray:
    if H.shape[0] != state.shape[-1]:
        raise ValueError(f"dimension mismatch: H is {H.shape}, state {state.shape}")
    return propagator(H, t) @ state


def _ising_terms(network, n, pairs=None):
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for l, m, J in network.edges:
        if pairs is None or pairs(l, m):
            H += J * site_operator("z", l, n) @ site_operator("z", m, n)
    return H


def _field_terms(values, sites, n):
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for l in sites:
        if values[l] != 0.0:
            H += values[l] * site_operator("z", l, n)
    return H


def _disorder_values(disorder, n):
    return np.zeros(n) if disorder is None else np.asarray(disorder.values)


def drive_hamiltonian(protocol: DriveProtocol, partition: RegionPartition) -> np.ndarray:
    n = partition.n_sites
    eps = {"A": protocol.eps_A, "B": protocol.eps_B}
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for l, a in enumerate(partition.assignment):
        H += protocol.g * (1 - eps[a]) * site_operator("x", l, n)
    return H


def ising_hamiltonian(network: SpinNetwork, disorder: DisorderField | None) -> np.ndarray:
    n = network.n_sites
    return _ising_terms(network, n) + _field_terms(_disorder_values(disorder, n), range(n), n)


def build_floquet_matrix(network: SpinNetwork, disorder: DisorderField | None,
                         protocol: DriveProtocol, partition: RegionPartition,
                         max_sites: int | None = None) -> np.ndarray:
    """Dense exp(-i H2 T2) exp(-i H1 T1)."""
    n = network.n_sites
    validate_sizes(n, partition, disorder)
    _guard(n, max_sites)
    U1 = propagator(drive_hamiltonian(protocol, partition), protocol.T1)
    U2 = propagator(ising_hamiltonian(network, disorder), protocol.T2)
    return U2 @ U1


def theta_diagonals(network: SpinNetwork, disorder: DisorderField | None,
                    protocol: DriveProtocol, partition: RegionPartition) -> dict[int, np.ndarray]:
    """Eigenvalues of theta_l = 2 W_l T2 + 2 T2 sum_{m in B} J_lm sigma^z_m, l in A."""
    n = network.n_sites
    z = obs.z_signs(n).astype(float)
    J = network.coupling_matrix()
    W = _disorder_values(disorder, n)
    B = list(partition.sites("B"))
    return {l: 2 * protocol.T2 * (W[l] + z[:, B] @ J[l, B])
            for l in partition.sites("A")}


def build_h_eff_full(network: SpinNetwork, disorder: DisorderField | None,
                     protocol: DriveProtocol, partition: RegionPartition,
                     variant: str = "ordered", max_sites: int | None = None) -> np.ndarray:
    """2T effective Hamiltonian for ``eps_B = 1`` and arbitrary small ``eps_A``.

    ``variant="ordered"`` sums the sigma^z sigma^y correction over
    ordered pairs l != m in A; ``variant="unordered"`` uses unordered pairs and the
    fixed 1/2 prefactors of the T1 = T2 shorthand.
    """
    if abs(protocol.eps_B - 1.0) > 1e-12:
        raise ValueError(f"build_h_eff_full assumes eps_B = 1, got {protocol.eps_B}")
    if variant not in ("ordered", "unordered"):
        raise ValueError(f"unknown variant {variant!r}")
    n = network.n_sites
    validate_sizes(n, partition, disorder)
    _guard(n, max_sites)
    T, T2, eps = protocol.period, protocol.T2, protocol.eps_A
    A, B = set(partition.sites("A")), set(partition.sites("B"))
    W = _disorder_values(disorder, n)
    ratio = T2 / T if variant == "ordered" else 0.5

    H = ratio * _ising_terms(network, n, lambda l, m: l in A and m in A)
    H += ratio * _ising_terms(network, n, lambda l, m: l in B and m in B)
    H += ratio * _field_terms(W, sorted(B), n)

    if eps != 0.0:
        cross = np.zeros_like(H)
        for l, m, J in network.edges:
            if l in A and m in A:
                cross += J * site_operator("z", l, n) @ site_operator("y", m, n)
                if variant == "ordered":
                    cross += J * site_operator("z", m, n) @ site_operator("y", l, n)
        H -= (math.pi * eps * T2 / (2 * T)) * cross

        for l, theta in theta_diagonals(network, disorder, protocol, partition).items():
            cos_t = np.diag(np.cos(theta))
            sin_t = np.diag(np.sin(theta))
            sx, sy = site_operator("x", l, n), site_operator("y", l, n)
            # cos/sin(theta_l) act on B only and commute with sigma^x_l, sigma^y_l
            H -= (math.pi * eps / (4 * T)) * ((cos_t + np.eye(1 << n)) @ sx + sin_t @ sy)
    return H


def build_h_eff_decoupled(network: SpinNetwork, disorder: DisorderField | None,
                          partition: RegionPartition,
                          protocol: DriveProtocol | None = None) -> np.ndarray:
    """Exact eps_A = 0, eps_B = 1 effective Hamiltonian (no A-B cross terms).

    Without ``protocol`` the weight T2/T defaults to 1/2.
    """
    n = network.n_sites
    validate_sizes(n, partition, disorder)
    ratio = 0.5 if protocol is None else protocol.T2 / protocol.period
    A, B = set(partition.sites("A")), set(partition.sites("B"))
    H = _ising_terms(network, n, lambda l, m: (l in A and m in A) or (l in B and m in B))
    H += _field_terms(_disorder_values(disorder, n), sorted(B), n)
    return ratio * H


def build_h_eff_small_errors(network: SpinNetwork, disorder: DisorderField | None,
                             protocol: DriveProtocol, partition: RegionPartition) -> np.ndarray:
    """2T effective Hamiltonian when both rotation errors are small."""
    for name in ("eps_A", "eps_B"):
        if getattr(protocol, name) > 0.2:
            warnings.warn(f"{name}={getattr(protocol, name)} is outside the small-error regime",
                          stacklevel=2)
    n = network.n_sites
    validate_sizes(n, partition, disorder)
    T, T2 = protocol.period, protocol.T2
    W = _disorder_values(disorder, n)
    eps = {"A": protocol.eps_A, "B": protocol.eps_B}
    H = (T2 / T) * _ising_terms(network, n)
    for l, region in enumerate(partition.assignment):
        if eps[region] == 0.0:
            continue
        phase = 2 * W[l] * T2
        H -= (math.pi * eps[region] / (4 * T)) * (
            (1 + math.cos(phase)) * site_operator("x", l, n)
            + math.sin(phase) * site_operator("y", l, n))
    return H


def region_b_hamiltonian(network: SpinNetwork, disorder: DisorderField | None,
                         partition: RegionPartition, protocol: DriveProtocol | None = None):
    n = network.n_sites
    ratio = 0.5 if protocol is None else protocol.T2 / protocol.period
    B = set(partition.sites("B"))
    H = _ising_terms(network, n, lambda l, m: l in B and m in B)
    return ratio * (H + _field_terms(_disorder_values(disorder, n), sorted(B), n))


def global_phase_distance(U: np.ndarray, V: np.ndarray) -> float:
    """min over phi of ||U - e^{i phi} V||_2 for unitaries U, V.

    The spectral norm equals max_k |1 - e^{i(phi + a_k)}| over the eigenphases
    a_k of U^dagger V, so the optimum centres the shortest arc that holds all
    eigenphases on 1; the result is 2 sin(arc / 4).
    """
    if U.shape != V.shape:
        raise ValueError(f"dimension mismatch {U.shape} vs {V.shape}")
    phases = np.sort(np.angle(np.linalg.eigvals(U.conj().T @ V)))
    gaps = np.diff(np.concatenate([phases, [phases[0] + 2 * math.pi]]))
    arc = max(2 * math.pi - gaps.max(), 0.0)
    return float(2 * math.sin(arc / 4))


def trace_aligned_distance(U: np.ndarray, V: np.ndarray) -> float:
    """||U - e^{i phi} V||_2 at phi = arg tr(V^dagger U); an upper bound on
    :func:`global_phase_distance`, tight when the two are close."""
    if U.shape != V.shape:
        raise ValueError(f"dimension mismatch {U.shape} vs {V.shape}")
    phi = np.angle(np.trace(V.conj().T @ U))
    return float(np.linalg.norm(U - np.exp(1j * phi) * V, 2))


def commutator_norm(X: np.ndarray, Y: np.ndarray) -> float:
    if X.shape != Y.shape:
        raise ValueError(f"dimension mismatch {X.shape} vs {Y.shape}")
    return float(np.linalg.norm(X @ Y - Y @ X, 2))


def coupling_scale(network: SpinNetwork) -> float:
    """J0 of the network: the largest coupling magnitude."""
    return max((abs(J) for _, _, J in network.edges), default=0.0)


def delta_x(protocol: DriveProtocol, network: SpinNetwork, cos_theta_mean: float,
            J0: float | None = None) -> float:
    """eps_A pi (1 + <cos theta>) / (2 J0 T): transverse field vs interaction."""
    J0 = coupling_scale(network) if J0 is None else J0
    if J0 == 0:
        raise ValueError("delta_x is undefined for zero coupling")
    return protocol.eps_A * math.pi * (1 + cos_theta_mean) / (2 * J0 * protocol.period)


def delta_x_small_errors(protocol: DriveProtocol, network: SpinNetwork,
                         J0: float | None = None) -> tuple[float, float]:
    """(delta_A, delta_B) = pi eps / (4 J0 T2) for the small-error regime."""
    J0 = coupling_scale(network) if J0 is None else J0
    if J0 == 0:
        raise ValueError("delta_x is undefined for zero coupling")
    return tuple(math.pi * e / (4 * J0 * protocol.T2) for e in (protocol.eps_A, protocol.eps_B))


def mean_cos_theta(network: SpinNetwork, disorders, protocol: DriveProtocol,
                   partition: RegionPartition, state: np.ndarray) -> float:
    """Average of cos(theta_l) over A sites, the B configurations weighted by
    ``state`` and the given disorder realizations."""
    probs = np.abs(np.asarray(state)) ** 2
    values = []
    for dis in disorders:
        for theta in theta_diagonals(network, dis, protocol, partition).values():
            values.append(float(probs @ np.cos(theta)))
    if not values:
        raise ValueError("need at least one disorder realization and one A site")
    return float(np.mean(values))


@dataclass
class EffectiveReport:
    operator_distance: float
    trajectory_deviation: float
    commutator_norms: list[float]
    sigma_z_b_max: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = [self.operator_distance, self.trajectory_deviation, *self.commutator_norms]
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"report entries must be finite and >= 0: {vals}")

    def to_dict(self) -> dict:
        return {
            "operator_distance": self.operator_distance,
            "trajectory_deviation": self.trajectory_deviation,
            "commutators": {"h_b": self.commutator_norms[0],
                            "sigma_z_b_max": self.sigma_z_b_max},
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def validate_effective(network: SpinNetwork, disorder: DisorderField | None,
                       protocol: DriveProtocol, partition: RegionPartition,
                       initial_state: np.ndarray, horizon: int,
                       max_sites: int | None = None) -> EffectiveReport:
    """Compare F^2 with exp(-2iT H_eff) as operators and along a trajectory.

    The trajectory deviation is the largest |m^z_l| difference at times 2nT,
    n*2 <= ``horizon``, between exact stepping and the effective propagator.
    """
    if horizon < 2:
        raise ValueError("horizon must cover at least two periods")
    F = build_floquet_matrix(network, disorder, protocol, partition, max_sites)
    H = build_h_eff_full(network, disorder, protocol, partition, max_sites=max_sites)
    U_eff = propagator(H, 2 * protocol.period)
    op_dist = global_phase_distance(F @ F, U_eff)

    exact = evolve_record(initial_state, protocol, network, disorder, partition,
                          2 * (horizon // 2), record_stride=2, observables=("local",))
    psi = np.asarray(initial_state, dtype=complex)
    dev = 0.0
    for k in range(len(exact.times)):
        psi = U_eff @ psi
        dev = max(dev, float(np.max(np.abs(obs.local_magnetizations(psi) - exact.local[k]))))

    H_B = region_b_hamiltonian(network, disorder, partition, protocol)
    n = network.n_sites
    sz = [commutator_norm(site_operator("z", l, n), H) for l in partition.sites("B")]
    params = {
        "n_sites": n, "eps_A": protocol.eps_A, "eps_B": protocol.eps_B,
        "T1": protocol.T1, "T2": protocol.T2, "horizon": horizon,
        "partition": str(partition), "J0": coupling_scale(network),
        "disorder_strength": 0.0 if disorder is None else disorder.strength,
    }
    return EffectiveReport(op_dist, dev, [commutator_norm(H_B, H), *sz],
                           sigma_z_b_max=max(sz, default=0.0), params=params)

"""Spin networks: couplings, A/B region partitions and on-site disorder.

Couplings and fields are stored in inverse-time units. Every builder that
takes dimensionless products (``J0T``, ``WT``) divides by the period ``T``;
the rest of the package works with ``T = 1`` so the two coincide numerically.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class Range(enum.Enum):
    """Special interaction ranges that are not finite exponents."""

    NEAREST_NEIGHBOR = "inf"


NEAREST_NEIGHBOR = Range.NEAREST_NEIGHBOR


def parse_alpha(alpha) -> float | Range:
    """Normalize a user-facing exponent (float, ``"inf"``, ``math.inf``)."""
    if isinstance(alpha, Range):
        return alpha
    if isinstance(alpha, str):
        if alpha.strip().lower() in ("inf", "infinity", "nn"):
            return NEAREST_NEIGHBOR
        alpha = float(alpha)
    alpha = float(alpha)
    if math.isinf(alpha) and alpha > 0:
        return NEAREST_NEIGHBOR
    if math.isnan(alpha) or alpha < 0:
        raise ValueError(f"alpha must be >= 0 or infinite, got {alpha!r}")
    return alpha


def alpha_to_json(alpha: float | Range):
    return "inf" if alpha is NEAREST_NEIGHBOR else float(alpha)


@dataclass(frozen=True)
class SpinNetwork:
    n_sites: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        seen = set()
        clean = []
        for l, m, J in self.edges:
            l, m, J = int(l), int(m), float(J)
            if not l < m:
                raise ValueError(f"edge ({l}, {m}) must satisfy l < m")
            if m >= self.n_sites:
                raise ValueError(f"edge ({l}, {m}) out of range for {self.n_sites} sites")
            if (l, m) in seen:
                raise ValueError(f"duplicate edge ({l}, {m})")
            if not math.isfinite(J):
                raise ValueError(f"edge ({l}, {m}) has non-finite coupling {J}")
            seen.add((l, m))
            clean.append((l, m, J))
        object.__setattr__(self, "edges", tuple(clean))

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric N x N matrix of couplings with zero diagonal."""
        J = np.zeros((self.n_sites, self.n_sites))
        for l, m, c in self.edges:
            J[l, m] = J[m, l] = c
        return J

    def coupling(self, l: int, m: int) -> float:
        if l > m:
            l, m = m, l
        for a, b, c in self.edges:
            if (a, b) == (l, m):
                return c
        return 0.0

    def to_dict(self, period: float = 1.0) -> dict:
        return {
            "n_sites": self.n_sites,
            "edges": [[l, m, J * period] for l, m, J in self.edges],
        }

    @classmethod
    def from_dict(cls, doc: dict, period: float = 1.0) -> "SpinNetwork":
        return cls(
            int(doc["n_sites"]),
            tuple((int(l), int(m), float(JT) / period) for l, m, JT in doc["edges"]),
        )


@dataclass(frozen=True)
class RegionPartition:
    """Per-site labels ``'A'`` or ``'B'``."""

    assignment: tuple[str, ...]
    allow_degenerate: bool = False

    def __post_init__(self):
        labels = tuple(str(a).upper() for a in self.assignment)
        bad = [a for a in labels if a not in ("A", "B")]
        if bad:
            raise ValueError(f"partition labels must be 'A' or 'B', got {bad[0]!r}")
        if not labels:
            raise ValueError("partition must cover at least one site")
        if not self.allow_degenerate and ("A" not in labels or "B" not in labels):
            raise ValueError("partition needs at least one site in each region "
                             "(pass allow_degenerate=True to override)")
        object.__setattr__(self, "assignment", labels)

    @classmethod
    def from_labels(cls, labels: str | Iterable[str], allow_degenerate: bool = False):
        return cls(tuple(labels), allow_degenerate=allow_degenerate)

    @property
    def n_sites(self) -> int:
        return len(self.assignment)

    def sites(self, label: str) -> tuple[int, ...]:
        label = label.upper()
        return tuple(i for i, a in enumerate(self.assignment) if a == label)

    @property
    def is_degenerate(self) -> bool:
        return not (self.sites("A") and self.sites("B"))

    @property
    def is_balanced(self) -> bool:
        return len(self.sites("A")) == len(self.sites("B"))

    def __str__(self) -> str:
        return "".join(self.assignment)


BOUNDS_MODES = ("symmetric", "positive")


@dataclass(frozen=True)
class DisorderField:
    values: np.ndarray
    strength: float
    bounds_mode: str = "positive"
    seed: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        lo, hi = _bounds(self.strength, self.bounds_mode)
        if np.any(vals < lo) or np.any(vals > hi):
            raise ValueError("disorder values outside declared bounds")

    @property
    def n_sites(self) -> int:
        return len(self.values)

    @classmethod
    def zeros(cls, n: int) -> "DisorderField":
        return cls(np.zeros(n), 0.0)


def _bounds(W: float, mode: str) -> tuple[float, float]:
    if mode == "symmetric":
        return -W, W
    if mode == "positive":
        return 0.0, W
    raise ValueError(f"unknown bounds_mode {mode!r}; expected one of {BOUNDS_MODES}")


def build_power_law_chain(n: int, J0: float, alpha) -> SpinNetwork:
    """Chain with J(l, m) = J0 / |l - m|**alpha.

    ``alpha=0`` is all-to-all with uniform ``J0``; ``NEAREST_NEIGHBOR`` (or
    ``"inf"``) keeps only the |l - m| = 1 bonds.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not math.isfinite(J0):
        raise ValueError(f"J0 must be finite, got {J0!r}")
    alpha = parse_alpha(alpha)
    J0 = float(J0)
    if alpha is NEAREST_NEIGHBOR:
        edges = [(l, l + 1, J0) for l in range(n - 1)]
    else:
        edges = [(l, m, J0 / float(m - l) ** alpha)
                 for l in range(n) for m in range(l + 1, n)]
    return SpinNetwork(n, tuple(edges))


def build_ladder(n_rungs: int, J: float) -> SpinNetwork:
    """Two-leg ladder with uniform coupling on rails and rungs.

    Site ``k`` (0 <= k < n_rungs) is on the first rail, site ``n_rungs + k``
    on the second; rung ``k`` joins the two.
    """
    if n_rungs < 2:
        raise ValueError("a ladder needs at least 2 rungs")
    if not math.isfinite(J):
        raise ValueError("J must be finite")
    J = float(J)
    edges = []
    for k in range(n_rungs - 1):
        edges.append((k, k + 1, J))
        edges.append((n_rungs + k, n_rungs + k + 1, J))
    edges.extend((k, n_rungs + k, J) for k in range(n_rungs))
    return SpinNetwork(2 * n_rungs, tuple(sorted(edges)))


def ladder_partitions(n_rungs: int) -> dict[str, RegionPartition]:
    """Named bipartitions of the ladder used by the ladder presets."""
    if n_rungs < 2:
        raise ValueError("a ladder needs at least 2 rungs")
    n = n_rungs

    def build(in_a):
        return RegionPartition(tuple("A" if in_a(s) else "B" for s in range(2 * n)))

    rung = lambda s: s % n
    rail = lambda s: s // n
    return {
        "rail": build(lambda s: rail(s) == 0),
        "half": build(lambda s: rung(s) < n // 2),
        "checkerboard": build(lambda s: (rung(s) + rail(s)) % 2 == 0),
        "ends": build(lambda s: rung(s) in (0, n - 1)),
    }


def sample_disorder(n: int, W: float, bounds_mode: str = "positive",
                    seed: int = 0) -> DisorderField:
    """i.i.d. uniform on-site fields, reproducible from ``seed``."""
    if W < 0 or not math.isfinite(W):
        raise ValueError(f"disorder strength must be finite and >= 0, got {W!r}")
    lo, hi = _bounds(W, bounds_mode)
    rng = np.random.default_rng(int(seed))
    vals = rng.uniform(lo, hi, size=n) if W > 0 else np.zeros(n)
    return DisorderField(vals, float(W), bounds_mode, int(seed))


def half_partition(n: int) -> RegionPartition:
    """First half of the sites in A, second half in B."""
    if n < 2 or n % 2:
        raise ValueError(f"half_partition needs an even n >= 2, got {n}")
    return RegionPartition(tuple("A" * (n // 2) + "B" * (n // 2)))


def network_document(network: SpinNetwork, partition: RegionPartition | None = None,
                     disorder: DisorderField | None = None, period: float = 1.0) -> dict:
    """JSON-ready description with dimensionless couplings (J*T, W*T)."""
    doc = network.to_dict(period)
    if partition is not None:
        doc["partition"] = list(partition.assignment)
    if disorder is not None:
        doc["disorder"] = {
            "WT": disorder.strength * period,
            "bounds": disorder.bounds_mode,
            "seed": disorder.seed,
        }
    return doc


def network_from_document(doc: dict, period: float = 1.0):
    """Inverse of :func:`network_document`; returns (network, partition, disorder)."""
    network = SpinNetwork.from_dict(doc, period)
    partition = None
    if doc.get("partition") is not None:
        partition = RegionPartition(tuple(doc["partition"]))
    disorder = None
    if doc.get("disorder") is not None:
        d = doc["disorder"]
        disorder = sample_disorder(network.n_sites, float(d["WT"]) / period,
                                   d.get("bounds", "positive"), int(d.get("seed", 0)))
    return network, partition, disorder


def validate_sizes(n_sites: int, *objects: Sequence) -> None:
    for obj in objects:
        if obj is not None and obj.n_sites != n_sites:
            raise ValueError(
                f"{type(obj).__name__} has {obj.n_sites} sites, expected {n_sites}")

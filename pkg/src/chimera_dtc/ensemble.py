"""Experiment configuration, figure presets and disorder-ensemble runs.

Configs are JSON documents with times in units of the drive period ``T``
(couplings as ``J0T``/``JT``, disorder as ``WT``); the engine runs at
``T = 1``. Realization ``r`` draws its disorder from a seed derived from
``(master_seed, r)``, and realizations are processed in fixed-size batches,
so traces do not depend on the worker count.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import observables as obs
from .evolution import (OBSERVABLES, DriveProtocol, NumericalError, StroboscopicTrace,
                        evolve_record_batch, prepare_polarized, prepare_tilted)
from .network import (RegionPartition, alpha_to_json, build_ladder,
                      build_power_law_chain, half_partition, ladder_partitions, parse_alpha,
                      sample_disorder, SpinNetwork)

TWO_PI = 2 * math.pi
SHORT_PERIODS = 200
LONG_PERIODS = 10_000
MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` is a dotted path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class EnsembleError(RuntimeError):
    def __init__(self, failed: dict[int, str]):
        self.failed = dict(sorted(failed.items()))
        detail = "; ".join(f"r={r}: {msg}" for r, msg in self.failed.items())
        super().__init__(f"{len(self.failed)} realization(s) failed: {detail}")


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class NetworkSpec:
    builder: str = "power_law"
    n_sites: int | None = None
    J0T: float = 0.0
    alpha: object = 1.51
    n_rungs: int | None = None
    edges: tuple | None = None

    KEYS = {
        "power_law": ("builder", "n_sites", "J0T", "alpha"),
        "ladder": ("builder", "n_rungs", "J0T"),
        "edges": ("builder", "n_sites", "edges"),
    }

    def build(self) -> SpinNetwork:
        if self.builder == "power_law":
            return build_power_law_chain(self.n_sites, self.J0T, self.alpha)
        if self.builder == "ladder":
            return build_ladder(self.n_rungs, self.J0T)
        return SpinNetwork(self.n_sites, self.edges)

    @property
    def size(self) -> int:
        return 2 * self.n_rungs if self.builder == "ladder" else self.n_sites

    def to_dict(self) -> dict:
        out = {}
        for key in self.KEYS[self.builder]:
            val = getattr(self, key)
            if key == "alpha":
                val = alpha_to_json(val)
            elif key == "edges":
                val = [list(e) for e in val]
            out[key] = val
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkSpec
    partition: str = "half"
    gT1: float = math.pi / 2
    T1_over_T: float = 0.5
    eps_A: float = 0.0
    eps_B: float = 0.0
    allow_gT1_override: bool = False
    WT: float = 0.0
    bounds: str = "positive"
    initial_state: str = "polarized"
    theta: float = 0.0
    n_periods: int = SHORT_PERIODS
    record_stride: int = 1
    n_realizations: int = 1
    master_seed: int = 0
    batch_size: int = 20
    observables: tuple[str, ...] = ("local", "regional")
    output_path: str = "runs/experiment"
    label: str = ""
    store_realizations: bool = False

    def __post_init__(self):
        _validate(self)

    # builders -----------------------------------------------------------
    def build_network(self) -> SpinNetwork:
        return self.network.build()

    def build_partition(self) -> RegionPartition:
        n = self.network.size
        if self.partition == "half":
            return half_partition(n)
        if self.partition.startswith("ladder:"):
            return ladder_partitions(self.network.n_rungs)[self.partition.split(":", 1)[1]]
        return RegionPartition(tuple(self.partition))

    def build_protocol(self) -> DriveProtocol:
        return DriveProtocol.standard(self.eps_A, self.eps_B, 1.0, self.T1_over_T,
                                      self.gT1, allow_override=self.allow_gT1_override)

    def initial_vector(self) -> np.ndarray:
        n = self.network.size
        if self.initial_state == "tilted":
            return prepare_tilted(n, self.theta)
        return prepare_polarized(n)

    def realization_seed(self, r: int) -> int:
        return derive_seed(self.master_seed, r)

    def disorder(self, r: int):
        return sample_disorder(self.network.size, self.WT, self.bounds,
                               self.realization_seed(r))

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        partition = ({"kind": "half"} if self.partition == "half" else
                     {"kind": "ladder", "name": self.partition.split(":", 1)[1]}
                     if self.partition.startswith("ladder:") else
                     {"kind": "explicit", "assignment": self.partition})
        init = {"kind": self.initial_state}
        if self.initial_state == "tilted":
            init["theta"] = self.theta
        return {
            "network": self.network.to_dict(),
            "partition": partition,
            "protocol": {"gT1": self.gT1, "T1_over_T": self.T1_over_T,
                         "eps_A": self.eps_A, "eps_B": self.eps_B,
                         "allow_gT1_override": self.allow_gT1_override},
            "disorder": {"WT": self.WT, "bounds": self.bounds},
            "initial_state": init,
            "schedule": {"n_periods": self.n_periods, "record_stride": self.record_stride},
            "ensemble": {"n_realizations": self.n_realizations,
                         "master_seed": self.master_seed, "batch_size": self.batch_size},
            "observables": list(self.observables),
            "output": {"path": self.output_path, "label": self.label,
                       "store_realizations": self.store_realizations},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _validate(cfg: ExperimentConfig) -> None:
    net = cfg.network
    if net.builder not in NetworkSpec.KEYS:
        raise ConfigError("network.builder",
                          f"unknown builder {net.builder!r}; expected {sorted(NetworkSpec.KEYS)}")
    try:
        network = net.build()
    except (TypeError, ValueError) as exc:
        raise ConfigError("network", str(exc)) from None
    if not math.isfinite(cfg.gT1) or (not cfg.allow_gT1_override
                                      and abs(cfg.gT1 - math.pi / 2) > 1e-12):
        raise ConfigError("protocol.gT1", f"must equal pi/2 without allow_gT1_override, got {cfg.gT1}")
    if not 0 < cfg.T1_over_T < 1:
        raise ConfigError("protocol.T1_over_T", "must lie in (0, 1)")
    for name in ("eps_A", "eps_B"):
        if not 0 <= getattr(cfg, name) <= 1:
            raise ConfigError(f"protocol.{name}", "must lie in [0, 1]")
    if not (math.isfinite(cfg.WT) and cfg.WT >= 0):
        raise ConfigError("disorder.WT", "must be finite and >= 0")
    if cfg.bounds not in ("positive", "symmetric"):
        raise ConfigError("disorder.bounds", "must be 'positive' or 'symmetric'")
    if cfg.initial_state not in ("polarized", "tilted"):
        raise ConfigError("initial_state.kind", "must be 'polarized' or 'tilted'")
    if cfg.n_periods < 1:
        raise ConfigError("schedule.n_periods", "must be >= 1")
    if cfg.record_stride < 1:
        raise ConfigError("schedule.record_stride", "must be >= 1")
    if cfg.n_realizations < 1:
        raise ConfigError("ensemble.n_realizations", "must be >= 1")
    if not 0 <= cfg.master_seed <= MASK64:
        raise ConfigError("ensemble.master_seed", "must be an unsigned 64-bit integer")
    if cfg.batch_size < 1:
        raise ConfigError("ensemble.batch_size", "must be >= 1")
    unknown = set(cfg.observables) - set(OBSERVABLES)
    if unknown:
        raise ConfigError("observables", f"unknown {sorted(unknown)}; choose from {OBSERVABLES}")
    try:
        part = cfg.build_partition()
    except (KeyError, ValueError) as exc:
        raise ConfigError("partition", str(exc)) from None
    if part.n_sites != network.n_sites:
        raise ConfigError("partition", f"{part.n_sites} labels for {network.n_sites} sites")


_SECTIONS = {
    "network": None,
    "partition": ("kind", "assignment", "name"),
    "protocol": ("gT1", "T1_over_T", "eps_A", "eps_B", "allow_gT1_override"),
    "disorder": ("WT", "bounds"),
    "initial_state": ("kind", "theta"),
    "schedule": ("n_periods", "record_stride"),
    "ensemble": ("n_realizations", "master_seed", "batch_size"),
    "observables": None,
    "output": ("path", "label", "store_realizations"),
}


def _expect(doc, path, kind):
    if not isinstance(doc, kind) or (kind in (int, float) and isinstance(doc, bool)):
        if kind is float and isinstance(doc, int) and not isinstance(doc, bool):
            return float(doc)
        raise ConfigError(path, f"expected {kind.__name__}, got {type(doc).__name__}")
    return doc


def _section(doc, name, strict):
    sec = doc.get(name, {})
    _expect(sec, name, dict)
    allowed = _SECTIONS[name]
    if strict and allowed is not None:
        extra = sorted(set(sec) - set(allowed))
        if extra:
            raise ConfigError(f"{name}.{extra[0]}", "unknown key")
    return sec


def config_from_dict(doc: dict, strict: bool = True) -> ExperimentConfig:
    _expect(doc, "<root>", dict)
    if strict:
        extra = sorted(set(doc) - set(_SECTIONS))
        if extra:
            raise ConfigError(extra[0], "unknown key")
    if "network" not in doc:
        raise ConfigError("network", "required")
    kw = {}

    net = _section(doc, "network", strict)
    builder = net.get("builder", "power_law")
    if builder not in NetworkSpec.KEYS:
        raise ConfigError("network.builder", f"unknown builder {builder!r}")
    if strict:
        extra = sorted(set(net) - set(NetworkSpec.KEYS[builder]))
        if extra:
            raise ConfigError(f"network.{extra[0]}", f"unknown key for builder {builder!r}")
    net_kw = {"builder": builder}
    try:
        if builder == "power_law":
            net_kw["n_sites"] = _expect(net["n_sites"], "network.n_sites", int)
            net_kw["J0T"] = _expect(net.get("J0T", 0.0), "network.J0T", float)
            try:
                net_kw["alpha"] = parse_alpha(net.get("alpha", 1.51))
            except (TypeError, ValueError) as exc:
                raise ConfigError("network.alpha", str(exc)) from None
        elif builder == "ladder":
            net_kw["n_rungs"] = _expect(net["n_rungs"], "network.n_rungs", int)
            net_kw["J0T"] = _expect(net.get("J0T", 0.0), "network.J0T", float)
        else:
            net_kw["n_sites"] = _expect(net["n_sites"], "network.n_sites", int)
            edges = _expect(net["edges"], "network.edges", list)
            net_kw["edges"] = tuple((int(l), int(m), float(J)) for l, m, J in edges)
    except KeyError as exc:
        raise ConfigError(f"network.{exc.args[0]}", "required") from None
    kw["network"] = NetworkSpec(**net_kw)

    part = _section(doc, "partition", strict)
    kind = part.get("kind", "half")
    if kind == "half":
        kw["partition"] = "half"
    elif kind == "explicit":
        assignment = part.get("assignment")
        if isinstance(assignment, list):
            assignment = "".join(assignment)
        kw["partition"] = _expect(assignment, "partition.assignment", str).upper()
    elif kind == "ladder":
        kw["partition"] = "ladder:" + _expect(part.get("name"), "partition.name", str)
    else:
        raise ConfigError("partition.kind", f"unknown kind {kind!r}")

    prot = _section(doc, "protocol", strict)
    for key in ("gT1", "T1_over_T", "eps_A", "eps_B"):
        if key in prot:
            kw[key] = _expect(prot[key], f"protocol.{key}", float)
    if "allow_gT1_override" in prot:
        kw["allow_gT1_override"] = _expect(prot["allow_gT1_override"],
                                           "protocol.allow_gT1_override", bool)

    dis = _section(doc, "disorder", strict)
    if "WT" in dis:
        kw["WT"] = _expect(dis["WT"], "disorder.WT", float)
    if "bounds" in dis:
        kw["bounds"] = _expect(dis["bounds"], "disorder.bounds", str)

    init = _section(doc, "initial_state", strict)
    if "kind" in init:
        kw["initial_state"] = _expect(init["kind"], "initial_state.kind", str)
    if "theta" in init:
        kw["theta"] = _expect(init["theta"], "initial_state.theta", float)

    sched = _section(doc, "schedule", strict)
    for key in ("n_periods", "record_stride"):
        if key in sched:
            kw[key] = _expect(sched[key], f"schedule.{key}", int)

    ens = _section(doc, "ensemble", strict)
    for key in ("n_realizations", "master_seed", "batch_size"):
        if key in ens:
            kw[key] = _expect(ens[key], f"ensemble.{key}", int)

    if "observables" in doc:
        kw["observables"] = tuple(_expect(doc["observables"], "observables", list))

    out = _section(doc, "output", strict)
    if "path" in out:
        kw["output_path"] = _expect(out["path"], "output.path", str)
    if "label" in out:
        kw["label"] = _expect(out["label"], "output.label", str)
    if "store_realizations" in out:
        kw["store_realizations"] = _expect(out["store_realizations"],
                                           "output.store_realizations", bool)
    return ExperimentConfig(**kw)


def parse_config(text: str, strict: bool = True) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"malformed JSON: {exc}") from None
    return config_from_dict(doc, strict=strict)


# ----------------------------------------------------------------------------
# presets


def _chain(n=8, J0T=0.2, alpha=1.51):
    return NetworkSpec("power_law", n_sites=n, J0T=J0T, alpha=parse_alpha(alpha))


def _make_presets() -> dict[str, ExperimentConfig]:
    base = dict(eps_A=0.03, eps_B=0.9, WT=TWO_PI, n_realizations=100,
                observables=("local", "regional"))
    p = {}

    def add(name, **kw):
        merged = {**base, **kw}
        merged.setdefault("output_path", f"runs/{name}")
        p[name] = ExperimentConfig(label=name, **merged)

    add("fig1b-weak", network=_chain(8, 0.072), n_periods=SHORT_PERIODS)
    add("fig1b-strong", network=_chain(8, 0.2), n_periods=SHORT_PERIODS)
    for coupling, J0T in (("weak", 0.072), ("strong", 0.2)):
        for n in (6, 8, 10):
            add(f"fig1b-{coupling}-long-N{n}", network=_chain(n, J0T), n_periods=LONG_PERIODS)
    for eps in (0.03, 0.1):
        for wname, WT in (("W0", 0.0), ("W2pi", TWO_PI)):
            add(f"fig2-eps{eps}-{wname}", network=_chain(8, 0.072), eps_A=eps, WT=WT,
                n_periods=LONG_PERIODS)
            add(f"s3-eps{eps}-{wname}", network=_chain(8, 0.072), eps_A=eps, eps_B=1.0,
                WT=WT, n_periods=SHORT_PERIODS)
    for aname, alpha in (("0", 0.0), ("1.51", 1.51), ("inf", "inf")):
        add(f"fig4-alpha{aname}", network=_chain(8, 0.2, alpha), initial_state="tilted",
            theta=0.2 * math.pi, n_periods=LONG_PERIODS,
            observables=("local", "regional", "entropy"))
    for n in (6, 8, 10):
        add(f"s2-strong-N{n}", network=_chain(n, 0.2), eps_B=1.0, n_periods=LONG_PERIODS)
    for panel, (ea, eb) in {"a": (0.03, 0.03), "b": (0.1, 0.1), "c": (0.03, 0.1),
                            "d": (0.03, 0.4), "e": (0.03, 0.9), "f": (0.03, 1.0)}.items():
        add(f"s4-{panel}", network=_chain(8, 0.2), eps_A=ea, eps_B=eb, n_periods=LONG_PERIODS)
    for part in ("rail", "half", "checkerboard", "ends"):
        add(f"s5-ladder-{part}", network=NetworkSpec("ladder", n_rungs=4, J0T=0.2),
            partition=f"ladder:{part}", n_periods=SHORT_PERIODS)
    return p


PRESETS = _make_presets()
FAMILIES = {
    "fig1b": ["fig1b-weak", "fig1b-strong"],
    "fig1b-long": [k for k in PRESETS if k.startswith("fig1b-") and "-long-" in k],
    "fig2": [k for k in PRESETS if k.startswith("fig2-")],
    "fig4": [k for k in PRESETS if k.startswith("fig4-")],
    "s2": [k for k in PRESETS if k.startswith("s2-")],
    "s3": [k for k in PRESETS if k.startswith("s3-")],
    "s4": [k for k in PRESETS if k.startswith("s4-")],
    "s5-ladder": [k for k in PRESETS if k.startswith("s5-ladder-")],
}


def preset_names() -> list[str]:
    return sorted(PRESETS) + sorted(FAMILIES)


def preset(name: str) -> ExperimentConfig:
    """Config of a single named experiment (see :func:`preset_family` for groups)."""
    if name in PRESETS:
        return PRESETS[name]
    if name in FAMILIES:
        raise ConfigError("preset", f"{name!r} is a family with members "
                                    f"{FAMILIES[name]}; use preset_family()")
    raise ConfigError("preset", f"unknown preset {name!r}; available: {', '.join(preset_names())}")


def preset_family(name: str) -> dict[str, ExperimentConfig]:
    """All configs of a family, or a one-element dict for a single preset."""
    if name in FAMILIES:
        return {k: PRESETS[k] for k in FAMILIES[name]}
    return {name: preset(name)}


# ----------------------------------------------------------------------------
# execution


def derive_seed(master_seed: int, r: int) -> int:
    """splitmix64 of (master_seed + (r + 1) * golden gamma) mod 2**64.

    The finalizer is a bijection of 64-bit words, so distinct ``r`` below
    2**64 always map to distinct seeds.
    """
    z = (int(master_seed) + (int(r) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _run_batch(cfg: ExperimentConfig, start: int, stop: int):
    network = cfg.build_network()
    partition = cfg.build_partition()
    protocol = cfg.build_protocol()
    psi0 = cfg.initial_vector()
    disorders = [cfg.disorder(r) for r in range(start, stop)]
    states = np.tile(psi0, (stop - start, 1))
    return evolve_record_batch(states, protocol, network, disorders, partition,
                               cfg.n_periods, cfg.record_stride, cfg.observables,
                               labels=range(start, stop))


def _safe_batch(args):
    cfg, start, stop = args
    try:
        return start, _run_batch(cfg, start, stop), None
    except (NumericalError, ValueError, FloatingPointError) as exc:
        return start, None, str(exc)


def run_realization(config: ExperimentConfig, r: int) -> StroboscopicTrace:
    """Trace of realization ``r`` alone."""
    if not 0 <= r < config.n_realizations:
        raise IndexError(f"realization {r} outside [0, {config.n_realizations})")
    try:
        return _run_batch(config, r, r + 1)[0]
    except NumericalError as exc:
        raise NumericalError(f"realization {r}: {exc}") from exc


@dataclass
class EnsembleResult:
    mean: StroboscopicTrace
    realizations: list[StroboscopicTrace] | None
    manifest: dict = field(default_factory=dict)


def mean_trace(traces: list[StroboscopicTrace]) -> StroboscopicTrace:
    first = traces[0]
    out = StroboscopicTrace(times=first.times.copy(),
                            local=obs.ensemble_mean([t.local for t in traces]))
    for name in ("M_A", "M_B", "S_B", "M_A_mean", "M_B_mean"):
        if getattr(first, name) is not None:
            setattr(out, name, obs.ensemble_mean([getattr(t, name) for t in traces]))
    return out


def run_ensemble(config: ExperimentConfig, jobs: int = 1,
                 store_realizations: bool | None = None) -> EnsembleResult:
    """Run all realizations in batches of ``config.batch_size`` and average them."""
    if store_realizations is None:
        store_realizations = config.store_realizations
    L, bs = config.n_realizations, config.batch_size
    tasks = [(config, s, min(s + bs, L)) for s in range(0, L, bs)]
    t0 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_safe_batch, tasks))
    else:
        results = [_safe_batch(t) for t in tasks]
    failed = {}
    traces: list[StroboscopicTrace] = []
    for (_, start, stop), (_, batch, err) in zip(tasks, results):
        if err is not None:
            failed.update({r: err for r in range(start, stop)})
        else:
            traces.extend(batch)
    if failed:
        raise EnsembleError(failed)
    wall = time.perf_counter() - t0

    thermal, mbl = obs.reference_entropies(config.network.size)
    manifest = {
        "config": config.to_dict(),
        "seeds": [config.realization_seed(r) for r in range(L)],
        "n_records": int(len(traces[0].times)),
        "wall_time_s": wall,
        "jobs": jobs,
        "code_version": f"chimera_dtc {__version__}",
        "reference_entropies": {"thermal": thermal, "mbl": mbl},
    }
    return EnsembleResult(mean_trace(traces), traces if store_realizations else None, manifest)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_outputs(result: EnsembleResult, path) -> list[Path]:
    """Write ``trace.csv``, ``manifest.json`` and optional per-realization CSVs."""
    root = Path(path)
    written = [root / "trace.csv", root / "manifest.json"]
    _atomic_write(written[0], result.mean.to_csv())
    _atomic_write(written[1], json.dumps(result.manifest, indent=2) + "\n")
    if result.realizations is not None:
        for r, tr in enumerate(result.realizations):
            p = root / "realizations" / f"r{r:04d}.csv"
            _atomic_write(p, tr.to_csv())
            written.append(p)
    return written

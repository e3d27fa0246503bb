"""Command line entry point: ``chimera-dtc run|validate-eff|presets|plot``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import ensemble as ens
from .effective import DenseSizeError, validate_effective
from .evolution import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("chimera_dtc")

PLOT_SCRIPT = '''\
"""Plot a stroboscopic trace written by chimera-dtc."""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
df = pd.read_csv(here / "trace.csv")
regional = [c for c in ("M_A", "M_B") if c in df]
fig, axes = plt.subplots(1 + ("S_B" in df), 1, sharex=True, squeeze=False)
ax = axes[0, 0]
for col in regional or [c for c in df if c.startswith("site_")]:
    ax.plot(df["n"], df[col], label=col, lw=0.8)
ax.set_ylabel("magnetization")
ax.legend(loc="best")
if "S_B" in df:
    axes[1, 0].plot(df["n"], df["S_B"], color="k", lw=0.8)
    axes[1, 0].set_ylabel("S_B")
axes[-1, 0].set_xlabel("period n")
if df["n"].max() > 1000:
    axes[-1, 0].set_xscale("log")
fig.tight_layout()
fig.savefig(here / "trace.png", dpi=150)
'''


def _load_configs(args) -> dict[str, ens.ExperimentConfig]:
    if bool(args.config) == bool(args.preset):
        raise ens.ConfigError("<cli>", "give exactly one of --config or --preset")
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = ens.parse_config(text)
        return {cfg.label or Path(args.config).stem: cfg}
    return ens.preset_family(args.preset)


def _apply_overrides(cfg: ens.ExperimentConfig, args) -> ens.ExperimentConfig:
    changes = {}
    if args.realizations is not None:
        changes["n_realizations"] = args.realizations
    if args.periods is not None:
        changes["n_periods"] = args.periods
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.store_realizations:
        changes["store_realizations"] = True
    return replace(cfg, **changes) if changes else cfg


def cmd_run(args) -> int:
    configs = _load_configs(args)
    family = len(configs) > 1
    for name, cfg in configs.items():
        cfg = _apply_overrides(cfg, args)
        out = Path(args.out) if args.out else Path(cfg.output_path)
        if family:
            out = out / name if args.out else Path(cfg.output_path)
        log.info("running %s: L=%d, %d periods -> %s", name, cfg.n_realizations,
                 cfg.n_periods, out)
        result = ens.run_ensemble(cfg, jobs=args.jobs)
        result.manifest["preset"] = args.preset
        for path in ens.emit_outputs(result, out):
            log.debug("wrote %s", path)
        print(f"{name}: {out / 'trace.csv'} ({result.manifest['n_records']} records, "
              f"{result.manifest['wall_time_s']:.1f} s)")
    return EXIT_OK


def cmd_validate_eff(args) -> int:
    cfg = ens.preset(args.preset)
    # the full effective Hamiltonian is derived for a switched-off drive on B
    cfg = replace(cfg, eps_B=1.0)
    report = validate_effective(cfg.build_network(), cfg.disorder(args.realization),
                                cfg.build_protocol(), cfg.build_partition(),
                                cfg.initial_vector(), args.horizon)
    report.params.update(preset=args.preset, realization=args.realization,
                         seed=cfg.realization_seed(args.realization))
    text = report.to_json()
    if args.out:
        ens._atomic_write(Path(args.out), text + "\n")
    print(text)
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in sorted(ens.PRESETS):
        c = ens.PRESETS[name]
        net = c.network
        shape = (f"chain N={net.n_sites} J0T={net.J0T} alpha={ens.alpha_to_json(net.alpha)}"
                 if net.builder == "power_law" else
                 f"ladder rungs={net.n_rungs} JT={net.J0T} partition={c.partition}")
        print(f"{name:24s} {shape}, eps_A={c.eps_A} eps_B={c.eps_B} WT={c.WT:.4g} "
              f"{c.initial_state} L={c.n_realizations} periods={c.n_periods}")
    for fam, members in sorted(ens.FAMILIES.items()):
        print(f"{fam:24s} family: {', '.join(members)}")
    return EXIT_OK


def cmd_plot(args) -> int:
    run_dir = Path(args.run)
    if not (run_dir / "trace.csv").exists():
        raise FileNotFoundError(f"no trace.csv in {run_dir}")
    ens._atomic_write(run_dir / "plot_trace.py", PLOT_SCRIPT)
    print(run_dir / "plot_trace.py")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chimera-dtc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a disorder ensemble")
    run.add_argument("--config", help="JSON experiment config")
    run.add_argument("--preset", help="preset or preset family name")
    run.add_argument("--out", help="output directory")
    run.add_argument("--realizations", type=int)
    run.add_argument("--periods", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--store-realizations", action="store_true")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate-eff", help="effective-Hamiltonian report for a preset")
    val.add_argument("--preset", required=True)
    val.add_argument("--horizon", type=int, default=200, help="periods")
    val.add_argument("--realization", type=int, default=0)
    val.add_argument("--out", help="also write the JSON report here")
    val.set_defaults(func=cmd_validate_eff)

    pre = sub.add_parser("presets", help="list presets")
    pre.set_defaults(func=cmd_presets)

    plot = sub.add_parser("plot", help="write a matplotlib script next to a trace")
    plot.add_argument("--run", required=True, help="run directory containing trace.csv")
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ens.ConfigError, DenseSizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ens.EnsembleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

Subcommands: `run` executes the configured sweep and writes results.csv,
summary.csv, and one PDF figure per metric; `coherence` sweeps pilot-bank
mutual coherence over seeds; `rip` samples the conditioning of random
pilot submatrices. Failures print a single JSON line to stderr and exit
nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .harness import coherence_sweep, emit_outputs, rip_diagnostic, run_experiment
from .pilots import build_pilot_bank, split_evenly
from .seeding import derive_seed


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jadce",
        description="Cluster-based joint activity detection and channel estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument(
            "config",
            nargs="?",
            default=None,
            help="flat key = value configuration file (defaults apply when omitted)",
        )
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        return p

    run_p = common(sub.add_parser("run", help="run the configured sweep"))
    run_p.add_argument("--trials", type=int, default=None, help="evaluation trials override")
    run_p.add_argument("--threads", type=int, default=None, help="worker thread override")
    run_p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    run_p.add_argument("--quiet", action="store_true", help="suppress progress lines")

    coh_p = common(sub.add_parser("coherence", help="pilot coherence across the sweep"))
    coh_p.add_argument(
        "--seeds", type=int, default=None, help="pilot seeds per sweep value override"
    )

    rip_p = common(sub.add_parser("rip", help="conditioning of random pilot submatrices"))
    rip_p.add_argument(
        "--subset",
        type=int,
        default=None,
        help="columns per random submatrix (default: three times the expected "
        "actives per cluster)",
    )
    rip_p.add_argument("--samples", type=int, default=None, help="submatrices per cluster")
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    if getattr(args, "seeds", None) is not None:
        overrides["coherence_seeds"] = args.seeds
    if getattr(args, "samples", None) is not None:
        overrides["rip_samples"] = args.samples
    if getattr(args, "subset", None) is not None:
        overrides["rip_subset"] = args.subset
    if overrides:
        config = replace(config, **overrides)
    config.validate()
    return config


def _cmd_run(args) -> int:
    config = _load(args)
    progress = None if args.quiet else lambda msg: print(msg, file=sys.stderr)
    table = run_experiment(config, progress=progress)
    paths = emit_outputs(table, config.output_dir, make_plots=not args.no_plots)
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return 0


def _cmd_coherence(args) -> int:
    config = _load(args)
    rows = coherence_sweep(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "coherence.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# sweep = {config.sweep}\n")
        writer = csv.writer(fh)
        writer.writerow(["sweep_value", "seed", "coherence"])
        for value, seed, coherence in rows:
            writer.writerow([repr(value), seed, repr(coherence)])
    from .plots import plot_coherence

    pdf_path = out / "coherence.pdf"
    plot_coherence(rows, pdf_path, xlabel=config.sweep)
    print(f"wrote {csv_path}")
    print(f"wrote {pdf_path}")
    return 0


def _cmd_rip(args) -> int:
    config = _load(args)
    sizes = split_evenly(config.num_devices, config.num_clusters)
    subset = config.rip_subset
    if subset == 0:
        subset = max(1, int(round(3 * config.activity_prob * max(sizes))))
        subset = min(subset, min(sizes))
    bank = build_pilot_bank(
        config.pilot_length,
        sizes,
        cardinality=config.weight_cardinality or None,
        pool_factor=config.pool_factor,
        seed=derive_seed(config.master_seed, 3, 0),
    )
    stats = rip_diagnostic(bank, subset, config.rip_samples, seed=config.master_seed)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "rip.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "subset_size", "sample", "smin", "smax"])
        for st in stats:
            for i in range(st.smin.size):
                writer.writerow([st.cluster, st.subset_size, i, repr(float(st.smin[i])), repr(float(st.smax[i]))])
    for st in stats:
        print(
            f"cluster {st.cluster}: subset {st.subset_size}, "
            f"smin [{st.smin.min():.4g}, {st.smin.max():.4g}], "
            f"smax [{st.smax.min():.4g}, {st.smax.max():.4g}], "
            f"median ratio {float(np.median(st.smax / np.maximum(st.smin, 1e-300))):.4g}"
        )
    print(f"wrote {csv_path}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "coherence": _cmd_coherence, "rip": _cmd_rip}
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

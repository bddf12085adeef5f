"""Command-line entry point: synth, prepare, train, simulate, report, run."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .data import ANALOGS, analog_spec, prepare, read_csv, serialize, synth_dataset, write_csv
from .engine import save_model, train
from .experiment import (ConfigError, ExperimentSpec, load_dataset, load_spec, read_reports,
                         run_experiment, simulate_platforms, spec_from_dict, write_reports,
                         write_tables)
from .trace import WorkTrace


def _spec(args) -> ExperimentSpec:
    spec = load_spec(args.config) if args.config else spec_from_dict(
        {"dataset": getattr(args, "dataset", None) or "higgs"})
    over = {}
    if getattr(args, "dataset", None):
        over["dataset"] = args.dataset
    if args.seed is not None:
        over["seed"] = args.seed
    if args.scale is not None:
        over["scale_factor"] = args.scale
    if getattr(args, "records", None) is not None:
        over["n_records"] = args.records
    if args.out is not None:
        over["out_dir"] = args.out
    tr = {k: v for k, v in (("n_trees", getattr(args, "trees", None)),
                            ("max_depth", getattr(args, "depth", None)),
                            ("loss", getattr(args, "loss", None))) if v is not None}
    try:
        if tr:
            over["train"] = dataclasses.replace(spec.train, **tr)
        return dataclasses.replace(spec, **over)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError("<cli>", str(e)) from e


def cmd_synth(args) -> int:
    name = args.analog
    if name not in ANALOGS:
        raise ConfigError("analog", f"unknown analog {name!r}; choose from {sorted(ANALOGS)}")
    raw = synth_dataset(analog_spec(name, args.records, args.seed or 0))
    out = Path(args.out or f"{name}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(raw, out)
    print(f"wrote {out} ({args.records} records, {len(raw.names)} fields)")
    return 0


def cmd_prepare(args) -> int:
    ds = prepare(read_csv(args.input), max_bins=args.max_bins)
    out = Path(args.out or Path(args.input).with_suffix(".bstr"))
    out.parent.mkdir(parents=True, exist_ok=True)
    crc = serialize(ds, out)
    print(f"wrote {out} ({ds.n_records} records, stride {ds.record_stride} B, crc32 {crc:08x})")
    return 0


def cmd_train(args) -> int:
    spec = _spec(args)
    ds = load_dataset(spec)
    ens, trace = train(ds, spec.train)
    out = Path(spec.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_model(ens, out / "model.txt")
    trace.to_jsonl(out / "trace.jsonl")
    print(f"trained {len(ens.trees)} trees, final loss {trace.losses[-1]:.6g}; "
          f"wrote {out / 'model.txt'} and {out / 'trace.jsonl'}")
    return 0


def cmd_simulate(args) -> int:
    spec = _spec(args)
    trace = WorkTrace.from_jsonl(args.trace)
    reports = simulate_platforms(trace, spec)
    out = Path(spec.out_dir or ".")
    write_reports(reports, out)
    for p, r in reports.items():
        status = f"{r.time_ns:.6g} ns" if r.feasible else f"infeasible ({r.note})"
        print(f"{p:>13}: {status}")
    return 0


def cmd_report(args) -> int:
    src = Path(args.input)
    out = Path(args.out) if args.out else src
    write_tables(read_reports(src), out, title=args.title)
    print(f"wrote tables to {out} and figures to {out / 'figures'}")
    return 0


def cmd_run(args) -> int:
    spec = _spec(args)
    if spec.out_dir is None:
        spec = dataclasses.replace(spec, out_dir="results")
    b = run_experiment(spec)
    for row in b.speedups:
        s = f"{row['speedup']:.3f}x" if row["feasible"] else "infeasible"
        print(f"{row['platform']:>13}: {s}")
    print(f"wrote {spec.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gbtaccel", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=True):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="synthetic data seed")
        sp.add_argument("--scale", type=int, help="dataset replication factor")
        sp.add_argument("--out", help="output path")
        if dataset:
            sp.add_argument("--dataset", help="analog name, CSV, or prepared dataset file")
            sp.add_argument("--records", type=int, help="records for synthetic analogs")
            sp.add_argument("--trees", type=int, help="number of boosting rounds")
            sp.add_argument("--depth", type=int, help="maximum tree depth")
            sp.add_argument("--loss", help="squared_error or logistic")

    sp = sub.add_parser("synth", help="write a synthetic analog dataset as CSV")
    sp.add_argument("analog", help=f"one of {', '.join(ANALOGS)}")
    sp.add_argument("--records", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("prepare", help="quantize a CSV into a binary dataset")
    sp.add_argument("input")
    sp.add_argument("--max-bins", type=int, default=256)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train the reference engine; emit model and trace")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("simulate", help="replay a trace on each platform model")
    sp.add_argument("trace", help="trace.jsonl from the train command")
    common(sp, dataset=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("report", help="render tables and figures from simulate output")
    sp.add_argument("input", help="directory holding reports.json")
    sp.add_argument("--out")
    sp.add_argument("--title", default="")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("run", help="end-to-end: data, train, simulate, report")
    common(sp)
    sp.set_defaults(func=cmd_run)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

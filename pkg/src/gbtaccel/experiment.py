"""End-to-end experiment harness: data, reference training, platform models, reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import baselines as bl
from .arch import STRATEGIES, BoosterConfig
from .data import (ANALOGS, QuantizedDataset, analog_loss, analog_spec, deserialize, prepare,
                   read_csv, replicate, synth_dataset)
from .dram import DramConfig
from .energy import energy_report
from .engine import LAYOUTS, Ensemble, TrainConfig, save_model, train
from .timing import (STEP_KEYS, CycleReport, HostModel, InfeasibleError, sim_batch_inference,
                     sim_training, tree_path_means)
from .trace import WorkTrace

PLATFORMS = ("booster", "ideal32", "ideal_gpu", "inter_record")

STEP_COLUMNS = ("platform", "tree", "vertex", "depth", "step", "records", "cycles", "bytes")
SPEEDUP_COLUMNS = ("platform", "feasible", "time_ns", "speedup") + tuple(f"share_{k}" for k in STEP_KEYS)
BREAKDOWN_COLUMNS = ("platform", "step", "cycles", "time_ns", "share")
ENERGY_COLUMNS = ("platform", "sram_energy", "dram_energy", "host_sram_energy", "sram_accesses",
                  "host_sram_accesses", "dram_bytes", "sram_energy_norm", "dram_energy_norm")
INFERENCE_COLUMNS = ("platform", "cycles", "time_ns", "speedup")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class ExperimentSpec:
    dataset: str = "higgs"  # analog name, or a .csv / binary dataset path
    n_records: int = 100_000
    seed: int = 0
    scale_factor: int = 1
    platforms: list[str] = field(default_factory=lambda: list(PLATFORMS))
    mapping: str = "group_by_field"
    layout: str = "column_major"
    inference: bool = True
    out_dir: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    booster: BoosterConfig = field(default_factory=BoosterConfig)
    dram: DramConfig = field(default_factory=DramConfig)
    host: HostModel = field(default_factory=HostModel)

    def __post_init__(self):
        if not self.platforms:
            raise ConfigError("platforms", "at least one platform is required")
        for p in self.platforms:
            if p not in PLATFORMS:
                raise ConfigError("platforms", f"unknown platform {p!r}; choose from {PLATFORMS}")
        if self.scale_factor < 1:
            raise ConfigError("scale_factor", "must be >= 1")
        if self.n_records < 1:
            raise ConfigError("n_records", "must be >= 1")
        if self.mapping not in STRATEGIES:
            raise ConfigError("mapping", f"must be one of {STRATEGIES}")
        if self.layout not in LAYOUTS:
            raise ConfigError("layout", f"must be one of {LAYOUTS}")


_NESTED = {"train": TrainConfig, "booster": BoosterConfig, "dram": DramConfig, "host": HostModel}


def spec_from_dict(d: dict[str, Any]) -> ExperimentSpec:
    known = {f.name for f in dataclasses.fields(ExperimentSpec)}
    kw: dict[str, Any] = {}
    for key, val in (d or {}).items():
        if key not in known:
            raise ConfigError(key, "unknown key")
        if key in _NESTED:
            cls = _NESTED[key]
            sub = {f.name for f in dataclasses.fields(cls)}
            if not isinstance(val, dict):
                raise ConfigError(key, "expected a mapping")
            for k in val:
                if k not in sub:
                    raise ConfigError(f"{key}.{k}", "unknown key")
            try:
                val = cls(**val)
            except (TypeError, ValueError) as e:
                raise ConfigError(key, str(e)) from e
        kw[key] = val
    if "train" not in kw and "dataset" in kw and kw["dataset"] in ANALOGS:
        kw["train"] = TrainConfig(loss=analog_loss(kw["dataset"]))
    return ExperimentSpec(**kw)


def load_spec(path: str | Path) -> ExperimentSpec:
    with open(path) as fh:
        d = yaml.safe_load(fh) or {}
    if not isinstance(d, dict):
        raise ConfigError("<root>", "expected a mapping")
    return spec_from_dict(d)


def load_dataset(spec: ExperimentSpec) -> QuantizedDataset:
    src = spec.dataset
    if src in ANALOGS:
        ds = prepare(synth_dataset(analog_spec(src, spec.n_records, spec.seed)))
    elif src.endswith(".csv"):
        ds = prepare(read_csv(src))
    elif Path(src).exists():
        ds = deserialize(src)
    else:
        raise ConfigError("dataset", f"{src!r} is neither an analog name nor a file")
    return replicate(ds, spec.scale_factor) if spec.scale_factor > 1 else ds


@dataclass
class ReportBundle:
    spec: ExperimentSpec
    ensemble: Ensemble
    trace: WorkTrace
    reports: dict[str, CycleReport]
    speedups: list[dict]
    energy: list[dict]
    inference: list[dict]

    @property
    def breakdown(self) -> list[dict]:
        return emit_breakdown(self)


def simulate_platforms(trace: WorkTrace, spec: ExperimentSpec) -> dict[str, CycleReport]:
    out = {}
    for p in spec.platforms:
        if p == "booster":
            out[p] = sim_training(trace, spec.booster, spec.dram, spec.host, spec.mapping, spec.layout)
        elif p == "ideal32":
            out[p] = bl.baseline_step_cycles(trace, bl.ideal32(), spec.dram, spec.host)
        elif p == "ideal_gpu":
            out[p] = bl.baseline_step_cycles(trace, bl.ideal_gpu(), spec.dram, spec.host)
        elif p == "inter_record":
            out[p] = bl.baseline_step_cycles(trace, bl.inter_record(trace.meta.total_bins),
                                             spec.dram, spec.host)
    return out


def energy_rows(reports: dict[str, CycleReport]) -> list[dict]:
    ers = [energy_report(r) for r in reports.values() if r.feasible]
    ref = next((e for e in ers if e.platform == "ideal32"), ers[0] if ers else None)
    rows = []
    for e in ers:
        rows.append({**dataclasses.asdict(e),
                     "sram_energy_norm": e.sram_energy / ref.sram_energy if ref.sram_energy else math.nan,
                     "dram_energy_norm": e.dram_energy / ref.dram_energy if ref.dram_energy else math.nan})
    return rows


def inference_rows(ensemble: Ensemble, n: int, stride: int, spec: ExperimentSpec) -> list[dict]:
    means = tree_path_means(ensemble)
    reps: dict[str, CycleReport] = {}
    try:
        reps["booster"] = sim_batch_inference(ensemble, n, spec.booster, spec.dram, stride=stride,
                                              path_means=means)
    except InfeasibleError:
        pass
    reps["ideal32"] = bl.baseline_inference(n, means, bl.ideal32(), spec.dram, stride)
    reps["ideal_gpu"] = bl.baseline_inference(n, means, bl.ideal_gpu(), spec.dram, stride)
    ref = reps["ideal32"].time_ns
    return [{"platform": p, "cycles": r.total_cycles, "time_ns": r.time_ns,
             "speedup": ref / r.time_ns if r.time_ns else math.nan} for p, r in reps.items()]


def emit_breakdown(bundle: ReportBundle) -> list[dict]:
    rows = []
    for p, r in bundle.reports.items():
        if not r.feasible:
            continue
        for k, share in r.shares().items():
            c = r.steps[k].cycles
            rows.append({"platform": p, "step": k, "cycles": c, "time_ns": c / r.clock_ghz,
                         "share": share})
    return rows


def run_experiment(spec: ExperimentSpec) -> ReportBundle:
    ds = load_dataset(spec)
    ensemble, trace = train(ds, spec.train)
    reports = simulate_platforms(trace, spec)
    feasible = [r for r in reports.values() if r.feasible]
    ref = "ideal32" if "ideal32" in reports else feasible[0].platform
    speedups = bl.speedup_table(list(reports.values()), reference=ref)
    inf = inference_rows(ensemble, ds.n_records, ds.record_stride, spec) if spec.inference else []
    bundle = ReportBundle(spec, ensemble, trace, reports, speedups, energy_rows(reports), inf)
    if spec.out_dir:
        write_bundle(bundle, Path(spec.out_dir))
    return bundle


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def read_csv_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _spec_dict(spec: ExperimentSpec) -> dict:
    d = dataclasses.asdict(spec)
    d.pop("out_dir")  # keeps summaries byte-identical across output locations
    return d


def write_reports(reports: dict[str, CycleReport], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "reports.json", "w") as fh:
        json.dump({p: r.to_dict() for p, r in reports.items()}, fh, sort_keys=True, indent=1)


def read_reports(out: Path) -> dict[str, CycleReport]:
    with open(out / "reports.json") as fh:
        return {p: CycleReport.from_dict(d) for p, d in json.load(fh).items()}


def write_tables(reports: dict[str, CycleReport], out: Path, speedups=None, energy=None,
                 inference=None, title: str = "") -> None:
    """Tables and figures derivable from platform reports alone."""
    from . import plotting

    out.mkdir(parents=True, exist_ok=True)
    if speedups is None:
        feasible = [r for r in reports.values() if r.feasible]
        ref = "ideal32" if "ideal32" in reports else feasible[0].platform
        speedups = bl.speedup_table(list(reports.values()), reference=ref)
    energy = energy_rows(reports) if energy is None else energy
    steps = [{"platform": p, **row} for p, r in reports.items() for row in r.rows]
    breakdown = emit_breakdown(ReportBundle(None, None, None, reports, speedups, energy, []))
    write_csv_rows(out / "steps.csv", STEP_COLUMNS, steps)
    write_csv_rows(out / "speedup.csv", SPEEDUP_COLUMNS, speedups)
    write_csv_rows(out / "breakdown.csv", BREAKDOWN_COLUMNS, breakdown)
    write_csv_rows(out / "energy.csv", ENERGY_COLUMNS, energy)
    figs = out / "figures"
    plotting.plot_speedup(speedups, figs / "speedup.png", title)
    plotting.plot_breakdown(breakdown, figs / "breakdown.png", title)
    if energy:
        plotting.plot_energy([{"platform": e["platform"], "sram_energy": e["sram_energy_norm"],
                               "dram_energy": e["dram_energy_norm"]} for e in energy],
                             figs / "energy.png", title)
    if inference:
        write_csv_rows(out / "inference.csv", INFERENCE_COLUMNS, inference)


def write_bundle(bundle: ReportBundle, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_model(bundle.ensemble, out / "model.txt")
    bundle.trace.to_jsonl(out / "trace.jsonl")
    write_reports(bundle.reports, out)
    write_tables(bundle.reports, out, bundle.speedups, bundle.energy, bundle.inference,
                 title=bundle.spec.dataset)
    summary = {
        "spec": _spec_dict(bundle.spec),
        "workload": bundle.trace.digest(),
        "losses": bundle.trace.losses,
        "platforms": {p: r.summary() for p, r in bundle.reports.items()},
        "speedup": {r["platform"]: r["speedup"] for r in bundle.speedups},
        "inference_speedup": {r["platform"]: r["speedup"] for r in bundle.inference},
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1, default=str)

import dataclasses
import json
import math

import pytest

from gbtaccel.engine import TrainConfig
from gbtaccel.experiment import (BREAKDOWN_COLUMNS, ENERGY_COLUMNS, INFERENCE_COLUMNS,
                                 SPEEDUP_COLUMNS, STEP_COLUMNS, ConfigError, ExperimentSpec,
                                 ReportBundle, emit_breakdown, load_spec, read_csv_rows,
                                 run_experiment, spec_from_dict)
from gbtaccel.timing import CycleReport

SMALL = dict(dataset="higgs", n_records=20_000, train=TrainConfig(n_trees=2, max_depth=4, loss="logistic"))


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    b = run_experiment(ExperimentSpec(**SMALL, out_dir=str(out)))
    return b, out


def test_single_platform_speedup_one():
    b = run_experiment(ExperimentSpec(**SMALL, platforms=["ideal32"], inference=False))
    assert len(b.speedups) == 1 and b.speedups[0]["speedup"] == 1.0


def test_reruns_byte_identical(bundle_dir, tmp_path):
    _, first = bundle_dir
    run_experiment(ExperimentSpec(**SMALL, out_dir=str(tmp_path)))
    for f in sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file()):
        if f.suffix == ".png":
            continue  # image encoders may embed metadata; tables are the contract
        assert (first / f).read_bytes() == (tmp_path / f).read_bytes(), f


@pytest.mark.parametrize("d,key", [
    ({"datset": "higgs"}, "datset"),
    ({"train": {"depht": 3}}, "train.depht"),
    ({"platforms": ["tpu"]}, "platforms"),
    ({"scale_factor": 0}, "scale_factor"),
    ({"platforms": []}, "platforms"),
    ({"booster": {"n_clusters": 0}}, "booster"),
])
def test_config_errors_name_key(d, key):
    with pytest.raises(ConfigError) as e:
        spec_from_dict(d)
    assert e.value.key == key and repr(key) in str(e.value)


def test_yaml_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("dataset: flight\nn_records: 500\nbooster:\n  n_clusters: 10\n")
    s = load_spec(p)
    assert s.booster.n_clusters == 10 and s.train.loss == "logistic"


def test_breakdown_sums_and_recomputes(bundle_dir):
    b, out = bundle_dir
    rows = read_csv_rows(out / "breakdown.csv")
    for p in {r["platform"] for r in rows}:
        mine = [r for r in rows if r["platform"] == p]
        assert math.fsum(float(r["share"]) for r in mine) == pytest.approx(1.0, abs=1e-9)
        total = math.fsum(float(r["cycles"]) for r in mine)
        for r in mine:
            assert float(r["share"]) == pytest.approx(float(r["cycles"]) / total, rel=1e-12)
    assert len(rows) == len(b.breakdown)


def test_single_step_bundle_share_one():
    r = CycleReport("booster", 1.0)
    r.steps["step1"].cycles = 123.0
    rows = emit_breakdown(ReportBundle(None, None, None, {"booster": r}, [], [], []))
    assert [(x["step"], x["share"]) for x in rows if x["share"]] == [("step1", 1.0)]


def test_higgs_booster_step2_dominant_residual():
    b = run_experiment(ExperimentSpec(dataset="higgs", n_records=200_000, platforms=["booster"],
                                      train=TrainConfig(n_trees=2, max_depth=6, loss="logistic"),
                                      inference=False))
    shares = b.reports["booster"].shares()
    residual = {k: v for k, v in shares.items() if k != "step1" and v > 0}
    assert max(residual, key=residual.get) == "step2_host"


def test_infeasible_ir_recorded(monkeypatch):
    import gbtaccel.baselines as bl
    # a histogram copy larger than all on-chip SRAM
    monkeypatch.setattr(bl, "inter_record",
                        lambda bins: bl.BaselineConfig(bl.INTER_RECORD, 0, 1.0, ir_copy_bytes=1e12))
    b = run_experiment(ExperimentSpec(**SMALL, inference=False))
    assert not b.reports["inter_record"].feasible
    row = next(r for r in b.speedups if r["platform"] == "inter_record")
    assert row["feasible"] is False and math.isnan(row["speedup"])
    assert {r["platform"] for r in b.breakdown} == {"booster", "ideal32", "ideal_gpu"}


def test_scale_increases_booster_speedup():
    def speedup(scale):
        b = run_experiment(ExperimentSpec(**SMALL, scale_factor=scale,
                                          platforms=["booster", "ideal32"], inference=False))
        return next(r["speedup"] for r in b.speedups if r["platform"] == "booster")
    assert speedup(10) > speedup(1)


def test_schema_columns(bundle_dir):
    _, out = bundle_dir
    for name, cols in (("steps.csv", STEP_COLUMNS), ("speedup.csv", SPEEDUP_COLUMNS),
                       ("breakdown.csv", BREAKDOWN_COLUMNS), ("energy.csv", ENERGY_COLUMNS),
                       ("inference.csv", INFERENCE_COLUMNS)):
        with open(out / name) as fh:
            assert tuple(fh.readline().strip().split(",")) == cols, name
    for fig in ("speedup", "breakdown", "energy"):
        assert (out / "figures" / f"{fig}.png").stat().st_size > 0
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["platforms"]) == {"booster", "ideal32", "ideal_gpu", "inter_record"}


def test_spec_is_plain_data():
    s = ExperimentSpec()
    assert dataclasses.replace(s, seed=3).seed == 3

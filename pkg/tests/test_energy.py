import pytest

from gbtaccel import baselines as bl
from gbtaccel.data import SynthSpec, prepare, synth_dataset
from gbtaccel.energy import SRAM_NORM, EnergyParams, energy_report, normalized
from gbtaccel.engine import TrainConfig, train
from gbtaccel.timing import CycleReport, sim_training


@pytest.fixture(scope="module")
def reports():
    ds = prepare(synth_dataset(SynthSpec(30_000, 28, seed=2)))
    _, tr = train(ds, TrainConfig(n_trees=2, max_depth=4))
    return {"booster": sim_training(tr),
            "ideal32": bl.baseline_step_cycles(tr, bl.ideal32()),
            "ideal_gpu": bl.baseline_step_cycles(tr, bl.ideal_gpu())}


def test_zero_accesses_zero_energy():
    e = energy_report(CycleReport("booster", 1.0))
    assert (e.sram_energy, e.dram_energy, e.host_sram_energy) == (0.0, 0.0, 0.0)


def test_norms():
    assert SRAM_NORM["booster"] < SRAM_NORM["ideal32"] < SRAM_NORM["ideal_gpu"]


def test_baselines_equal_dram_energy(reports):
    a = energy_report(reports["ideal32"])
    g = energy_report(reports["ideal_gpu"])
    assert a.dram_bytes == g.dram_bytes and a.dram_energy == g.dram_energy


def test_energy_ordering(reports):
    e = {k: energy_report(r) for k, r in reports.items()}
    assert e["booster"].sram_energy < e["ideal32"].sram_energy < e["ideal_gpu"].sram_energy
    assert e["booster"].dram_energy < e["ideal32"].dram_energy
    rows = {r["platform"]: r for r in normalized(list(e.values()))}
    assert rows["ideal32"]["sram_energy"] == 1.0
    assert rows["booster"]["dram_energy"] < 1.0


def test_pure(reports):
    r = reports["booster"]
    before = r.to_dict()
    assert energy_report(r) == energy_report(r)
    assert r.to_dict() == before


def test_invalid_params():
    with pytest.raises(ValueError):
        EnergyParams(dram_energy_per_byte=0.0)
    with pytest.raises(ValueError):
        EnergyParams(sram_norm={"booster": -1.0})
    with pytest.raises(KeyError):
        energy_report(CycleReport("tpu", 1.0))

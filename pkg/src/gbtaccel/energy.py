"""Access-count energy: SRAM and DRAM reported separately, never summed.

Each platform's SRAM energy counts its own on-chip accesses. Work done on the
host (split finding, Booster's cross-cluster reduction) is reported as a
separate host figure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .timing import CycleReport

SRAM_NORM = {"ideal32": 1.0, "ideal_gpu": 2.64, "booster": 0.71, "inter_record": 1.0,
             "sequential": 1.0}


@dataclass(frozen=True)
class EnergyParams:
    sram_norm: dict[str, float] = field(default_factory=lambda: dict(SRAM_NORM))
    dram_energy_per_byte: float = 1.0
    host_sram_norm: float = 1.0  # host-side work (split scan, reductions) runs on a multicore

    def __post_init__(self):
        if any(v <= 0 for v in self.sram_norm.values()) or self.dram_energy_per_byte <= 0:
            raise ValueError("energy parameters must be positive")


@dataclass(frozen=True)
class EnergyReport:
    platform: str
    sram_energy: float
    dram_energy: float
    host_sram_energy: float
    sram_accesses: float
    host_sram_accesses: float
    dram_bytes: float


def energy_report(report: CycleReport, params: EnergyParams | None = None,
                  platform: str | None = None) -> EnergyReport:
    params = params or EnergyParams()
    platform = platform or report.platform
    if platform not in params.sram_norm:
        raise KeyError(f"no SRAM energy norm for platform {platform!r}")
    return EnergyReport(platform, report.sram_accesses * params.sram_norm[platform],
                        report.dram_bytes * params.dram_energy_per_byte,
                        report.host_sram_accesses * params.host_sram_norm,
                        report.sram_accesses, report.host_sram_accesses, report.dram_bytes)


def normalized(reports: list[EnergyReport], reference: str = "ideal32") -> list[dict]:
    ref = next(r for r in reports if r.platform == reference)
    return [{"platform": r.platform,
             "sram_energy": r.sram_energy / ref.sram_energy if ref.sram_energy else float("nan"),
             "dram_energy": r.dram_energy / ref.dram_energy if ref.dram_energy else float("nan")}
            for r in reports]

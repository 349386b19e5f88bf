"""Component power formulas, bill-of-materials roll-up and mW/TOPS efficiency."""

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from ._validation import InvalidParameterError, check_positive

__all__ = [
    "COMPONENT_KINDS",
    "SCOPES",
    "ComponentPowerTable",
    "BillOfMaterials",
    "PowerReport",
    "laser_power",
    "pd_power",
    "edfa_pump_power",
    "total_power",
    "efficiency",
    "default_table",
    "default_bom",
    "default_opu_power",
    "power_reports",
]

COMPONENT_KINDS = (
    "laser", "mzm", "mrm", "pd", "edfa_pump", "tunable_filter", "dac", "adc", "tec", "comm_dac",
)
SCOPES = ("compute-only", "compute+control", "full-system")


def laser_power(emission_dbm, wall_plug_eta, tec_mw=0.0):
    """Electrical draw (mW) of a laser emitting ``emission_dbm``."""
    if not 0.0 < wall_plug_eta <= 1.0:
        raise InvalidParameterError(f"wall_plug_eta must lie in (0, 1], got {wall_plug_eta}")
    check_positive(tec_mw, "tec_mw", strict=False)
    return 10.0 ** (emission_dbm / 10.0) / wall_plug_eta + tec_mw


def pd_power(responsivity, v_bias, p_rec):
    for name, value in (("responsivity", responsivity), ("v_bias", v_bias), ("p_rec", p_rec)):
        check_positive(value, name, strict=False)
    return responsivity * v_bias * p_rec


def edfa_pump_power(p_in, p_out, eta):
    check_positive(eta, "eta")
    check_positive(p_in, "p_in", strict=False)
    if p_out < p_in:
        raise InvalidParameterError(f"p_out ({p_out} mW) is below p_in ({p_in} mW)")
    return (p_out - p_in) / eta


@dataclass(frozen=True)
class ComponentPowerTable:
    units: dict

    def __post_init__(self):
        for kind, value in self.units.items():
            if kind not in COMPONENT_KINDS:
                raise InvalidParameterError(f"unknown component kind {kind!r}")
            check_positive(value, f"units[{kind}]", strict=False)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            entries = json.load(fh)["entries"]
        return cls({k: float(v["value"] if isinstance(v, dict) else v) for k, v in entries.items()})

    def unit(self, kind):
        if kind not in self.units:
            raise InvalidParameterError(f"power table has no entry for {kind!r}")
        return self.units[kind]


@dataclass(frozen=True)
class BillOfMaterials:
    scopes: dict
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        for scope, counts in self.scopes.items():
            for kind, n in counts.items():
                if kind not in COMPONENT_KINDS:
                    raise InvalidParameterError(f"{scope}: unknown component kind {kind!r}")
                if int(n) != n or n < 0:
                    raise InvalidParameterError(f"{scope}: count of {kind} must be a nonnegative integer")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)["scopes"]
        return cls({s: dict(v["counts"]) for s, v in data.items()},
                   {s: dict(v.get("notes", {})) for s, v in data.items()})

    def counts(self, scope):
        if scope not in self.scopes:
            raise InvalidParameterError(f"unknown scope {scope!r}; choose from {sorted(self.scopes)}")
        return self.scopes[scope]

    def merged(self, other, scope):
        """Counts of ``scope`` in both BOMs added together, as a single-scope BOM."""
        total = Counter(self.counts(scope))
        total.update(other.counts(scope))
        return BillOfMaterials({scope: dict(total)})


@dataclass(frozen=True)
class PowerReport:
    scope: str
    subtotals: dict
    total: float
    tops: float = None

    @property
    def efficiency(self):
        return None if self.tops is None else efficiency(self.total, self.tops)

    def as_dict(self):
        return {
            "scope": self.scope,
            "subtotals_mw": dict(self.subtotals),
            "total_mw": self.total,
            "tops": self.tops,
            "mw_per_tops": self.efficiency,
        }


def total_power(table, bom, scope, tops=None):
    subtotals = {kind: n * table.unit(kind) for kind, n in sorted(bom.counts(scope).items())}
    return PowerReport(scope, subtotals, sum(subtotals.values()), tops)


def efficiency(total_mw, tops):
    if not tops or tops <= 0:
        raise InvalidParameterError("efficiency needs a positive throughput")
    return total_mw / tops


def _data_dir():
    from .convnet.serialize import fixture_root

    return fixture_root()


def default_table():
    return ComponentPowerTable.from_json(Path(_data_dir()) / "power_table.json")


def default_bom():
    return BillOfMaterials.from_json(Path(_data_dir()) / "bom.json")


def default_opu_power():
    """Compute+control draw of one OPU in mW."""
    return total_power(default_table(), default_bom(), "compute+control").total


def power_reports(table=None, bom=None, tops=3.6):
    table = table or default_table()
    bom = bom or default_bom()
    return [total_power(table, bom, scope, tops) for scope in SCOPES if scope in bom.scopes]


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scope", "component", "power_mw"])
    for rep in reports:
        for kind, value in rep.subtotals.items():
            writer.writerow([rep.scope, kind, f"{value:.6g}"])
        writer.writerow([rep.scope, "total", f"{rep.total:.6g}"])
        if rep.tops:
            writer.writerow([rep.scope, "mw_per_tops", f"{rep.efficiency:.6g}"])
    return buf.getvalue()

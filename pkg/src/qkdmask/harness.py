"""Experiment runner: Monte Carlo batches over protocol variants and attacks,
deterministic per-trial seeding, aggregation and machine-readable result tables."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .adversary import (
    AdversaryError,
    AttackKind,
    AttackStrategy,
    EveRecord,
    eve_mutual_information_from_parts,
)
from .channel import PauliChannelParams, RngSeeds, Transcript
from .protocol import (
    ReconciliationMode,
    SessionConfig,
    SessionOutcome,
    Variant,
    run_session,
)

_MASK64 = (1 << 64) - 1

# Per-trial seed derivation: base_seed XOR (global trial index times this odd
# constant), so any single trial can be replayed without storing its seed.
TRIAL_SEED_STRIDE = 0x9E3779B97F4A7C15

CSV_COLUMNS = (
    "cell", "params", "trials", "aborts", "abort_rate",
    "qber_mean", "qber_std", "sifted_fraction_mean", "sifted_fraction_std",
    "eve_mi_bits", "leaked_bits_mean",
)


class HarnessError(ValueError):
    """Invalid experiment specification."""


def config_from_dict(data: dict, seeds: RngSeeds) -> SessionConfig:
    """Build a SessionConfig from a plain dict (as found in a spec file)."""
    try:
        channel = PauliChannelParams(**data.get("channel", {}))
        attack_data = dict(data.get("attack", {"kind": "none"}))
        kind = AttackKind(attack_data.pop("kind", "none"))
        if "pauli" in attack_data:
            attack_data["pauli"] = PauliChannelParams(**attack_data["pauli"])
        attack = AttackStrategy(kind=kind, **attack_data)
        return SessionConfig(
            n=int(data["n"]),
            k=int(data["k"]),
            e_max=float(data["e_max"]),
            L=int(data["L"]),
            variant=Variant(data["variant"]),
            reconciliation_mode=ReconciliationMode(data.get("reconciliation_mode", "parity")),
            channel=channel,
            attack=attack,
            seeds=seeds,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise HarnessError(f"bad session config: {exc}") from exc


@dataclass(frozen=True)
class ExperimentSpec:
    """A batch of trials over an optional parameter grid."""

    base_config: dict
    trials: int
    base_seed: int = 0
    sweep: tuple[tuple[str, tuple], ...] = ()

    def __post_init__(self):
        if self.trials < 1:
            raise HarnessError(f"trials must be at least 1, got {self.trials!r}")
        for key, values in self.sweep:
            if not values:
                raise HarnessError(f"sweep axis {key!r} has no values")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        if "config" not in data:
            raise HarnessError("spec needs a 'config' section")
        sweep = tuple((k, tuple(v)) for k, v in data.get("sweep", {}).items())
        return cls(
            base_config=dict(data["config"]),
            trials=int(data.get("trials", 1)),
            base_seed=int(data.get("seed", 0)),
            sweep=sweep,
        )

    @classmethod
    def load(cls, path: str) -> "ExperimentSpec":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise HarnessError(f"spec file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def cells(self) -> list[dict]:
        """Grid cells in declared order; each is {dotted-path: value}."""
        if not self.sweep:
            return [{}]
        keys = [k for k, _ in self.sweep]
        return [dict(zip(keys, combo))
                for combo in itertools.product(*(v for _, v in self.sweep))]


def _apply_overrides(config: dict, overrides: dict) -> dict:
    out = json.loads(json.dumps(config))  # deep copy of plain JSON data
    for path, value in overrides.items():
        node = out
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return out


def trial_seeds(base_seed: int, global_trial_index: int) -> RngSeeds:
    derived = (base_seed ^ ((global_trial_index * TRIAL_SEED_STRIDE) & _MASK64)) & _MASK64
    return RngSeeds.from_base(derived)


@dataclass
class CellStats:
    cell: int
    params: dict
    trials: int
    aborts: int
    abort_rate: float
    qber_mean: float
    qber_std: float
    sifted_fraction_mean: float
    sifted_fraction_std: float
    eve_mi_bits: float
    leaked_bits_mean: float


@dataclass
class AggregateStats:
    cells: list[CellStats] = field(default_factory=list)


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def summarize_cell(cell_index: int, params: dict, outcomes: list[SessionOutcome]) -> CellStats:
    aborts = sum(1 for o in outcomes if o.aborted)
    kept = [o for o in outcomes if not o.aborted]
    qber_mean, qber_std = _mean_std([o.sifted_qber for o in kept])
    frac_mean, frac_std = _mean_std([o.sifted_fraction for o in kept])
    leaked_mean, _ = _mean_std([float(o.leaked_bits) for o in kept])
    try:
        eve_mi = eve_mutual_information_from_parts(
            (o.transcript, o.eve_record, o.sifted_key_alice) for o in kept)
    except (AdversaryError, ValueError):
        eve_mi = math.nan
    return CellStats(
        cell=cell_index, params=dict(params), trials=len(outcomes), aborts=aborts,
        abort_rate=aborts / len(outcomes) if outcomes else math.nan,
        qber_mean=qber_mean, qber_std=qber_std,
        sifted_fraction_mean=frac_mean, sifted_fraction_std=frac_std,
        eve_mi_bits=eve_mi, leaked_bits_mean=leaked_mean,
    )


def run_cell_outcomes(spec: ExperimentSpec, cell_index: int,
                      overrides: dict) -> list[SessionOutcome]:
    config_data = _apply_overrides(spec.base_config, overrides)
    outcomes = []
    for t in range(spec.trials):
        seeds = trial_seeds(spec.base_seed, cell_index * spec.trials + t)
        config = config_from_dict(config_data, seeds)
        outcomes.append(run_session(config))
    return outcomes


def run_experiment(spec: ExperimentSpec,
                   dump_path: Optional[str] = None) -> AggregateStats:
    """Execute every grid cell; optionally dump one JSON record per session."""
    stats = AggregateStats()
    dump_fh = open(dump_path, "w", encoding="utf-8") if dump_path else None
    try:
        for cell_index, overrides in enumerate(spec.cells()):
            outcomes = run_cell_outcomes(spec, cell_index, overrides)
            if dump_fh is not None:
                for t, outcome in enumerate(outcomes):
                    dump_fh.write(json.dumps(session_dump(cell_index, t, overrides, outcome)) + "\n")
            stats.cells.append(summarize_cell(cell_index, overrides, outcomes))
    finally:
        if dump_fh is not None:
            dump_fh.close()
    return stats


def session_dump(cell: int, trial: int, params: dict, outcome: SessionOutcome) -> dict:
    return {
        "cell": cell,
        "trial": trial,
        "params": params,
        "aborted": outcome.aborted,
        "abort_reason": outcome.abort_reason.value if outcome.abort_reason else None,
        "qber_estimate": outcome.qber_estimate,
        "sifted_qber": outcome.sifted_qber,
        "sifted_fraction": outcome.sifted_fraction,
        "leaked_bits": outcome.leaked_bits,
        "sifted_key_alice": [int(b) for b in outcome.sifted_key_alice],
        "transcript": outcome.transcript.serialize(),
        "eve_record": outcome.eve_record.to_dict(),
        "chsh_value": outcome.chsh_value,
    }


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _fmt_params(params: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in params.items()) or "-"


def emit_results(stats: AggregateStats, fmt: str = "csv") -> str:
    """Stable-order result table: 'csv' or newline-delimited JSON 'records'."""
    if fmt == "csv":
        lines = [",".join(CSV_COLUMNS)]
        for c in stats.cells:
            lines.append(",".join([
                str(c.cell), _fmt_params(c.params), str(c.trials), str(c.aborts),
                _fmt(c.abort_rate), _fmt(c.qber_mean), _fmt(c.qber_std),
                _fmt(c.sifted_fraction_mean), _fmt(c.sifted_fraction_std),
                _fmt(c.eve_mi_bits), _fmt(c.leaked_bits_mean),
            ]))
        return "\n".join(lines) + "\n"
    if fmt == "records":
        lines = []
        for c in stats.cells:
            record = {col: getattr(c, col) for col in CSV_COLUMNS}
            lines.append(json.dumps(record))
        return "\n".join(lines) + "\n"
    raise HarnessError(f"unknown output format: {fmt!r}")


def parse_results_csv(text: str) -> list[dict]:
    lines = [line for line in text.splitlines() if line]
    if not lines or lines[0] != ",".join(CSV_COLUMNS):
        raise HarnessError("unrecognized results header")
    rows = []
    for line in lines[1:]:
        values = line.split(",")
        row: dict = dict(zip(CSV_COLUMNS, values))
        for col in ("cell", "trials", "aborts"):
            row[col] = int(row[col])
        for col in CSV_COLUMNS[4:]:
            row[col] = float(row[col])
        rows.append(row)
    return rows


def analyze_dump(lines: Iterable[str]) -> list[dict]:
    """Recompute Eve's information estimate per cell from a per-session dump."""
    by_cell: dict[int, list[dict]] = {}
    for line in lines:
        if not line.strip():
            continue
        record = json.loads(line)
        by_cell.setdefault(record["cell"], []).append(record)
    results = []
    for cell in sorted(by_cell):
        records = by_cell[cell]
        kept = [r for r in records if not r["aborted"]]
        try:
            eve_mi = eve_mutual_information_from_parts(
                (Transcript.parse(r["transcript"]),
                 EveRecord.from_dict(r["eve_record"]),
                 np.asarray(r["sifted_key_alice"], dtype=np.uint8))
                for r in kept)
        except (AdversaryError, ValueError):
            eve_mi = math.nan
        results.append({
            "cell": cell,
            "params": records[0]["params"],
            "sessions": len(records),
            "aborts": len(records) - len(kept),
            "eve_mi_bits": eve_mi,
        })
    return results

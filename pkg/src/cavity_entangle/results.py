"""JSON / CSV emitters and parameter sweeps over protocols."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .entangle import TargetState, fidelity, target_from_name
from .hilbert import SpecError, basis_labels
from .protocol import (
    Interact,
    PrepareSuperposition,
    Protocol,
    Pulse,
    SimulationResult,
    ZeroProbabilityBranch,
    retime_step,
    run_protocol,
)

SCHEMA_VERSION = 1


def fmt_float(x: float) -> str:
    """17 significant digits: enough to restore any double exactly."""
    return format(float(x), ".17g")


def _dump(obj, indent: int = 0) -> str:
    pad, inner = " " * indent, " " * (indent + 2)
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_dump(v, indent + 2)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        items = [inner + _dump(v, indent + 2) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _amps(state) -> list:
    return [[float(a.real), float(a.imag)] for a in state.amplitudes]


def result_dict(result: SimulationResult, targets: Sequence[TargetState] = ()) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "basis": basis_labels(result.final_state.system),
        "amplitudes": _amps(result.final_state),
        "branch_probability": float(result.branch_probability),
        "trace": [
            {
                "step": r.index,
                "kind": r.kind,
                "duration": r.duration,
                "probability": r.probability,
                "outcome": r.outcome,
            }
            for r in result.trace
        ],
    }
    try:
        field = result.field_state()
    except SpecError:
        field = None
    if field is not None:
        out["field"] = {"basis": basis_labels(field.system), "amplitudes": _amps(field)}
    if targets:
        out["fidelities"] = {
            t.name: (fidelity(field, t) if field is not None else None) for t in targets
        }
    phase = result.branch_phase()
    if phase is not None:
        out["branch_phase"] = phase
    return out


def emit_result_json(result: SimulationResult, targets: Sequence[TargetState] = ()) -> str:
    """Deterministic JSON rendering of a run (fixed key order, 17-digit floats)."""
    return _dump(result_dict(result, targets)) + "\n"


def amplitudes_from_json(text: str) -> np.ndarray:
    data = json.loads(text)
    return np.array([complex(float(re_), float(im)) for re_, im in data["amplitudes"]])


# --- sweeps -------------------------------------------------------------------


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    """Grid over one protocol parameter.

    ``param`` is ``step<k>.t``, ``step<k>.phi``, ``step<k>.omega``,
    ``step<k>.phase`` (k counts steps from 1) or ``coupling.<id>.g`` where
    ``id`` is a mode id or a ``mode:upper:lower`` label.
    """

    param: str
    start: float
    stop: float
    steps: int
    targets: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if int(self.steps) != self.steps or self.steps < 2:
            raise SweepError(f"steps must be an integer >= 2, got {self.steps!r}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop) and self.start < self.stop):
            raise SweepError(f"need finite from < to, got {self.start!r}, {self.stop!r}")

    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, int(self.steps))


_STEP_PARAM = re.compile(r"step(\d+)\.(t|phi|omega|phase)\Z")
_COUPLING_PARAM = re.compile(r"coupling\.(.+)\.g\Z")


def set_parameter(proto: Protocol, param: str, value: float) -> Protocol:
    """Copy of ``proto`` with one parameter replaced."""
    m = _STEP_PARAM.match(param)
    if m:
        k, attr = int(m.group(1)), m.group(2)
        if not 1 <= k <= len(proto.steps):
            raise SweepError(f"{param}: protocol has {len(proto.steps)} steps")
        step = proto.steps[k - 1]
        if attr == "t" and isinstance(step, (Interact, Pulse)):
            new = replace(step, duration=value, timing=None)
        elif attr == "phi" and isinstance(step, PrepareSuperposition):
            new = replace(step, phi=value)
        elif attr in ("omega", "phase") and isinstance(step, Pulse):
            field = "rabi" if attr == "omega" else "phase"
            new = replace(step, drive=replace(step.drive, **{field: value}))
            new = retime_step(new, proto.system)
        else:
            raise SweepError(f"{param}: step {k} is a {step.kind} step")
        steps = proto.steps[: k - 1] + (new,) + proto.steps[k:]
        return Protocol(proto.system, proto.initial, steps)
    m = _COUPLING_PARAM.match(param)
    if m:
        try:
            system = proto.system.with_coupling_g(m.group(1), value)
        except SpecError as exc:
            raise SweepError(f"{param}: {exc}") from None
        return proto.with_system(system)
    raise SweepError(f"unresolvable parameter path {param!r}")


def _sweep_point(proto: Protocol, targets: Sequence[TargetState]) -> list[float]:
    try:
        result = run_protocol(proto)
    except ZeroProbabilityBranch as exc:
        # branch never happens: report its probability, no fidelity
        return [exc.probability] + [0.0] * len(targets)
    row = [result.branch_probability]
    if targets:
        field = result.field_state()
        row += [fidelity(field, t) for t in targets]
    return row


def run_sweep(proto: Protocol, cfg: SweepConfig, max_workers: Optional[int] = None) -> str:
    """CSV with one row per grid point: swept value, branch probability, fidelities.

    Grid points run concurrently; rows come out in ascending sweep order.
    """
    grid = cfg.grid()
    modes = proto.system.mode_ids
    targets = [target_from_name(t, len(modes), modes) for t in cfg.targets]
    try:
        protos = [set_parameter(proto, cfg.param, float(v)) for v in grid]
    except (SpecError, ValueError) as exc:
        raise SweepError(str(exc)) from None
    workers = max_workers or min(4, len(protos))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda p: _sweep_point(p, targets), protos))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([cfg.param, "branch_probability"] + [f"fidelity_{t.name}" for t in targets])
    for value, row in zip(grid, rows):
        w.writerow([fmt_float(value)] + [fmt_float(x) for x in row])
    return buf.getvalue()

"""Timing-budget check of a protocol against SI experimental parameters.

The defaults describe slow Rydberg atoms crossing a centimetre-scale
superconducting cavity. No coupling strength is quoted for the setup, so
the default coupling is illustrative only: chosen so that a half Rabi
cycle lasts 25 us, half the default transit time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .protocol import TimedStep, TimingPlan, half_rabi_time, pi_pulse_time

DEFAULT_VELOCITY = 400.0  # m/s
DEFAULT_CAVITY_LENGTH = 0.02  # m
DEFAULT_LIFETIME = 3e-3  # s
DEFAULT_G = math.pi / (2 * 2.5e-5)  # rad/s, pi/2g = 25 us


@dataclass(frozen=True)
class FeasibilityParams:
    atom_velocity: float = DEFAULT_VELOCITY
    cavity_length: float = DEFAULT_CAVITY_LENGTH
    atomic_lifetime: float = DEFAULT_LIFETIME
    cavity_lifetime: float = DEFAULT_LIFETIME
    couplings_si: tuple[tuple[str, float], ...] = (("A", DEFAULT_G), ("B", DEFAULT_G))
    drive_si: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "couplings_si", tuple((str(l), float(g)) for l, g in self.couplings_si))
        for name in ("atom_velocity", "cavity_length", "atomic_lifetime", "cavity_lifetime"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        for label, g in self.couplings_si:
            if not (math.isfinite(g) and g > 0):
                raise ValueError(f"coupling {label}: g must be positive, got {g!r}")
        if self.drive_si is not None and not (math.isfinite(self.drive_si) and self.drive_si > 0):
            raise ValueError(f"drive Rabi frequency must be positive, got {self.drive_si!r}")


@dataclass(frozen=True)
class FeasibilityReport:
    transit_time: float
    interaction_times: tuple[tuple[str, float], ...]
    total_protocol_time: float
    atomic_fraction: float  # total / atomic lifetime
    cavity_fraction: float  # total / cavity lifetime
    passed: bool
    reasons: tuple[str, ...] = field(default=())

    @property
    def atomic_margin(self) -> float:
        return 1.0 / self.atomic_fraction if self.atomic_fraction else math.inf

    @property
    def cavity_margin(self) -> float:
        return 1.0 / self.cavity_fraction if self.cavity_fraction else math.inf

    def summary(self) -> str:
        lines = [
            f"transit time          {self.transit_time:.6g} s",
            *(f"  {label}: {t:.6g} s" for label, t in self.interaction_times),
            f"total protocol time   {self.total_protocol_time:.6g} s",
            f"atomic lifetime margin {self.atomic_margin:.6g}x",
            f"cavity lifetime margin {self.cavity_margin:.6g}x",
            f"verdict               {'PASS' if self.passed else 'FAIL'}",
        ]
        lines += [f"  - {r}" for r in self.reasons]
        return "\n".join(lines)


def transit_time(length: float, velocity: float) -> float:
    if not (math.isfinite(length) and length > 0):
        raise ValueError(f"length must be positive, got {length!r}")
    if not (math.isfinite(velocity) and velocity > 0):
        raise ValueError(f"velocity must be positive, got {velocity!r}")
    return length / velocity


def default_plan(params: FeasibilityParams) -> TimingPlan:
    """Half-Rabi transfer per listed coupling, plus a pi pulse if a drive is given."""
    entries = [
        TimedStep(i, "interact", half_rabi_time(g, 1), f"half_rabi(1) on {label}")
        for i, (label, g) in enumerate(params.couplings_si, start=1)
    ]
    if params.drive_si is not None:
        entries.append(TimedStep(len(entries) + 1, "pulse", pi_pulse_time(params.drive_si), "pi_pulse"))
    return TimingPlan(tuple(entries))


def check_budget(params: FeasibilityParams, plan: Optional[TimingPlan] = None) -> FeasibilityReport:
    """Compare a plan (durations in seconds) with the transit time and both lifetimes.

    Passes iff every interaction fits inside one cavity transit and the whole
    protocol is shorter than the atomic and the cavity lifetime.
    """
    if plan is None:
        plan = default_plan(params)
    transit = transit_time(params.cavity_length, params.atom_velocity)
    total = plan.total
    reasons = []
    for e in plan.interactions():
        if e.duration > transit:
            reasons.append(f"transit: step {e.step_index} needs {e.duration:.6g} s, transit is {transit:.6g} s")
    if not total < params.atomic_lifetime:
        reasons.append(f"atom: total {total:.6g} s >= atomic lifetime {params.atomic_lifetime:.6g} s")
    if not total < params.cavity_lifetime:
        reasons.append(f"cavity: total {total:.6g} s >= cavity lifetime {params.cavity_lifetime:.6g} s")
    return FeasibilityReport(
        transit_time=transit,
        interaction_times=tuple((f"step {e.step_index} ({e.rule})", e.duration) for e in plan.entries),
        total_protocol_time=total,
        atomic_fraction=total / params.atomic_lifetime,
        cavity_fraction=total / params.cavity_lifetime,
        passed=not reasons,
        reasons=tuple(reasons),
    )

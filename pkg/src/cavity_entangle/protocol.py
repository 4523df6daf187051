"""
Protocol steps, interaction-time rules and the canned Bell / GHZ sequences.

A :class:`Protocol` is a system, an initial state and an ordered list of
steps. :func:`run_protocol` folds :func:`apply_step` over the steps,
post-selecting on the kept outcome of every atomic measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import dynamics
from .dynamics import DriveTerm
from .hilbert import (
    NORM_TOL,
    AtomSpec,
    Coupling,
    ModeSpec,
    SpecError,
    StateVector,
    SystemSpec,
)

ZERO_BRANCH_TOL = 1e-12


class ProtocolError(Exception):
    """A protocol step could not be applied."""

    def __init__(self, message: str, step_index: Optional[int] = None):
        self.step_index = step_index
        if step_index is not None:
            message = f"step {step_index}: {message}"
        super().__init__(message)


class ZeroProbabilityBranch(ProtocolError):
    def __init__(self, probability: float, step_index: Optional[int] = None):
        self.probability = probability
        super().__init__(f"kept measurement outcome has probability {probability:.3e}", step_index)


# --- interaction-time rules -------------------------------------------------


def _check_rate(rate: float, name: str = "rate") -> None:
    if not (np.isfinite(rate) and rate > 0):
        raise ValueError(f"{name} must be positive, got {rate!r}")


def _check_int(m, name: str = "m") -> int:
    if isinstance(m, bool) or int(m) != m:
        raise ValueError(f"{name} must be an integer, got {m!r}")
    return int(m)


def half_rabi_time(g: float, m: int = 1) -> float:
    """m*pi/(2g): odd multiple of half a vacuum Rabi cycle (full single-photon transfer)."""
    _check_rate(g, "g")
    m = _check_int(m)
    if m < 1 or m % 2 == 0:
        raise ValueError(f"m must be an odd positive integer, got {m}")
    return m * math.pi / (2 * g)


def quarter_rabi_time(g: float, m: int = 1, permissive: bool = False) -> float:
    """m*pi/(4g): equal split between emission and no emission.

    By default only m = 1 (mod 4) is accepted, where cos(gt) and sin(gt) are
    both +1/sqrt(2). ``permissive=True`` accepts any odd m.
    """
    _check_rate(g, "g")
    m = _check_int(m)
    if m < 1 or m % 2 == 0:
        raise ValueError(f"m must be an odd positive integer, got {m}")
    if not permissive and m % 4 != 1:
        raise ValueError(f"m={m} flips the sign of a branch amplitude; use m = 1 (mod 4) or permissive=True")
    return m * math.pi / (4 * g)


def pi_pulse_time(omega: float) -> float:
    _check_rate(omega, "omega")
    return math.pi / omega


def half_pi_pulse_time(omega1: float) -> float:
    _check_rate(omega1, "omega")
    return math.pi / (2 * omega1)


def equal_amplitude_times(g1: float, g2: float, max_m: int, same_sign: bool = True) -> list[float]:
    """Times at which both modes complete an odd number of half Rabi cycles together.

    Returns every t <= max_m*pi/(2*min(g1, g2)) with sin(g1 t) = sin(g2 t) = +-1,
    i.e. where the ground-state detection probability reaches 1 with equal
    branch amplitudes. With ``same_sign=False`` the returned times have
    sin(g1 t) = -sin(g2 t) instead (the antisymmetric branch combination).
    """
    _check_rate(g1, "g1")
    _check_rate(g2, "g2")
    t_max = max_m * math.pi / (2 * min(g1, g2))
    out = []
    m = 1
    while True:
        t = m * math.pi / (2 * g1)
        if t > t_max * (1 + 1e-12):
            break
        n = 2 * g2 * t / math.pi
        n_int = round(n)
        if n_int % 2 == 1 and abs(n - n_int) <= 1e-9 * max(1.0, n):
            s1 = 1 if m % 4 == 1 else -1
            s2 = 1 if n_int % 4 == 1 else -1
            if (s1 == s2) == same_sign:
                out.append(t)
        m += 2
    return out


# --- steps ------------------------------------------------------------------


@dataclass(frozen=True)
class TimeExpr:
    """Symbolic duration resolved against the rate of the step it belongs to."""

    kind: str  # half_rabi | quarter_rabi | pi_pulse | half_pi_pulse
    m: Optional[int] = None
    permissive: bool = False

    INTERACT_KINDS = ("half_rabi", "quarter_rabi")
    PULSE_KINDS = ("pi_pulse", "half_pi_pulse")

    def resolve(self, rate: float) -> float:
        if self.kind == "half_rabi":
            return half_rabi_time(rate, self.m)
        if self.kind == "quarter_rabi":
            return quarter_rabi_time(rate, self.m, self.permissive)
        if self.kind == "pi_pulse":
            return pi_pulse_time(rate)
        if self.kind == "half_pi_pulse":
            return half_pi_pulse_time(rate)
        raise ValueError(f"unknown time expression {self.kind!r}")

    def __str__(self):
        return f"{self.kind}({self.m})" if self.m is not None else self.kind


@dataclass(frozen=True)
class PrepareSuperposition:
    level1: str
    level2: str
    phi: float = 0.0

    kind = "ramsey"
    duration = 0.0


@dataclass(frozen=True)
class Interact:
    couplings: tuple[str, ...]
    duration: float
    timing: Optional[TimeExpr] = None

    kind = "interact"

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if not self.couplings:
            raise SpecError("interaction step needs at least one active coupling")
        if not (np.isfinite(self.duration) and self.duration >= 0):
            raise SpecError(f"duration must be finite and >= 0, got {self.duration!r}")


@dataclass(frozen=True)
class Pulse:
    drive: DriveTerm
    duration: float
    timing: Optional[TimeExpr] = None

    kind = "pulse"

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration >= 0):
            raise SpecError(f"duration must be finite and >= 0, got {self.duration!r}")


@dataclass(frozen=True)
class MeasureAtom:
    """Projective test of the atom against the state ``sum_l coeff_l |l>``.

    Coefficients are normalized on construction. ``keep_outcome`` selects the
    branch that is post-selected: ``hit`` (found in the state) or ``miss``.
    """

    projector: tuple[tuple[str, complex], ...]
    keep_outcome: str = "hit"

    kind = "measure"
    duration = 0.0

    def __post_init__(self):
        proj = tuple((str(l), complex(c)) for l, c in self.projector)
        if not proj:
            raise SpecError("measurement projector is empty")
        levels = [l for l, _ in proj]
        if len(set(levels)) != len(levels):
            raise SpecError("measurement projector repeats a level")
        norm = math.sqrt(sum(abs(c) ** 2 for _, c in proj))
        if not np.isfinite(norm) or norm == 0:
            raise SpecError("measurement projector has zero norm")
        if abs(norm - 1.0) > 1e-15:
            proj = tuple((l, c / norm) for l, c in proj)
        object.__setattr__(self, "projector", proj)
        if self.keep_outcome not in ("hit", "miss"):
            raise SpecError(f"keep_outcome must be 'hit' or 'miss', got {self.keep_outcome!r}")

    def atomic_vector(self, atom: AtomSpec) -> np.ndarray:
        v = np.zeros(atom.dim, dtype=complex)
        for level, c in self.projector:
            v[atom.index(level)] = c
        return v


ProtocolStep = Union[PrepareSuperposition, Interact, Pulse, MeasureAtom]


def _interact_rate(spec: SystemSpec, step: Interact) -> float:
    couplings = spec.resolve_couplings(step.couplings)
    if len(couplings) != 1:
        raise SpecError(
            f"time expression {step.timing} needs a single active coupling, step has {len(couplings)}"
        )
    return couplings[0].g


def validate_step(step: ProtocolStep, spec: SystemSpec) -> None:
    if isinstance(step, PrepareSuperposition):
        spec.atom.index(step.level1)
        spec.atom.index(step.level2)
        if step.level1 == step.level2:
            raise SpecError("superposition needs two distinct levels")
    elif isinstance(step, Interact):
        spec.resolve_couplings(step.couplings)
        if step.timing is not None:
            if step.timing.kind not in TimeExpr.INTERACT_KINDS:
                raise SpecError(f"{step.timing.kind} is not valid for an interaction step")
            _interact_rate(spec, step)
    elif isinstance(step, Pulse):
        spec.atom.index(step.drive.upper)
        spec.atom.index(step.drive.lower)
        if step.timing is not None and step.timing.kind not in TimeExpr.PULSE_KINDS:
            raise SpecError(f"{step.timing.kind} is not valid for a pulse step")
    elif isinstance(step, MeasureAtom):
        for level, _ in step.projector:
            spec.atom.index(level)
    else:
        raise SpecError(f"unknown step type {type(step).__name__}")


def retime_step(step: ProtocolStep, spec: SystemSpec) -> ProtocolStep:
    """Recompute a symbolic duration from the step's current rate."""
    if isinstance(step, Interact) and step.timing is not None:
        return replace(step, duration=step.timing.resolve(_interact_rate(spec, step)))
    if isinstance(step, Pulse) and step.timing is not None:
        return replace(step, duration=step.timing.resolve(step.drive.rabi))
    return step


@dataclass(frozen=True)
class Protocol:
    system: SystemSpec
    initial: StateVector
    steps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.initial.system != self.system:
            raise SpecError("initial state lives on a different system")
        for i, step in enumerate(self.steps, start=1):
            try:
                validate_step(step, self.system)
            except (SpecError, ValueError) as exc:
                raise SpecError(f"step {i}: {exc}") from None

    def retimed(self) -> "Protocol":
        return replace(self, steps=tuple(retime_step(s, self.system) for s in self.steps))

    def with_system(self, system: SystemSpec) -> "Protocol":
        """Swap in a system with the same basis (e.g. new coupling rates) and re-resolve timings."""
        initial = StateVector(system, self.initial.amplitudes)
        return Protocol(system, initial, self.steps).retimed()


@dataclass(frozen=True)
class TimedStep:
    step_index: int
    kind: str
    duration: float
    rule: str


@dataclass(frozen=True)
class TimingPlan:
    entries: tuple[TimedStep, ...]

    @property
    def total(self) -> float:
        return float(sum(e.duration for e in self.entries))

    def interactions(self) -> tuple[TimedStep, ...]:
        return tuple(e for e in self.entries if e.kind == "interact")


def timing_plan(protocol: Protocol) -> TimingPlan:
    entries = []
    for i, step in enumerate(protocol.steps, start=1):
        if isinstance(step, Interact):
            if step.timing is not None:
                g = _interact_rate(protocol.system, step)
                rule = f"{step.timing} with g={g!r}"
            else:
                rule = "explicit"
            entries.append(TimedStep(i, "interact", step.duration, rule))
        elif isinstance(step, Pulse):
            rule = f"{step.timing} with omega={step.drive.rabi!r}" if step.timing else "explicit"
            entries.append(TimedStep(i, "pulse", step.duration, rule))
    return TimingPlan(tuple(entries))


# --- execution --------------------------------------------------------------


def _atom_matrix(state: StateVector) -> np.ndarray:
    return state.tensor.reshape(state.system.atom.dim, -1)


def _prepare(state: StateVector, step: PrepareSuperposition) -> StateVector:
    atom = state.system.atom
    psi = _atom_matrix(state)
    i1, i2 = atom.index(step.level1), atom.index(step.level2)
    pop1 = float(np.sum(np.abs(psi[i1]) ** 2))
    if abs(pop1 - 1.0) > NORM_TOL:
        raise SpecError(
            f"superposition preparation needs the atom purely in |{step.level1}>, population is {pop1:.6g}"
        )
    out = np.zeros_like(psi)
    out[i1] = psi[i1] / math.sqrt(2)
    out[i2] = np.exp(1j * step.phi) * psi[i1] / math.sqrt(2)
    return StateVector.from_array(state.system, out)


def measurement_probability(state: StateVector, step: MeasureAtom) -> float:
    """Probability that the atom is found in the measured state (the ``hit`` outcome)."""
    v = step.atomic_vector(state.system.atom)
    return float(np.sum(np.abs(v.conj() @ _atom_matrix(state)) ** 2))


def _measure(state: StateVector, step: MeasureAtom, outcome: str) -> tuple[StateVector, float]:
    v = step.atomic_vector(state.system.atom)
    psi = _atom_matrix(state)
    hit = np.outer(v, v.conj() @ psi)
    projected = hit if outcome == "hit" else psi - hit
    p = float(np.sum(np.abs(projected) ** 2))
    if p < ZERO_BRANCH_TOL:
        raise ZeroProbabilityBranch(p)
    return StateVector(state.system, projected.reshape(-1) / math.sqrt(p)), p


def apply_step(
    state: StateVector, step: ProtocolStep, spec: SystemSpec, outcome: Optional[str] = None
) -> tuple[StateVector, float]:
    """Apply one step; returns the new state and the probability of the realized branch.

    ``outcome`` overrides a measurement's ``keep_outcome``.
    """
    if state.system != spec:
        raise SpecError("state does not belong to this system")
    if isinstance(step, PrepareSuperposition):
        validate_step(step, spec)
        return _prepare(state, step), 1.0
    if isinstance(step, Interact):
        H = dynamics.build_hamiltonian(spec, step.couplings)
        return dynamics.evolve(state, H, step.duration), 1.0
    if isinstance(step, Pulse):
        H = dynamics.build_hamiltonian(spec, (), [step.drive])
        return dynamics.evolve(state, H, step.duration), 1.0
    if isinstance(step, MeasureAtom):
        validate_step(step, spec)
        return _measure(state, step, outcome or step.keep_outcome)
    raise SpecError(f"unknown step type {type(step).__name__}")


@dataclass(frozen=True)
class StepRecord:
    index: int
    kind: str
    duration: float
    probability: float
    outcome: Optional[str]
    state: StateVector
    projector: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SimulationResult:
    final_state: StateVector
    branch_probability: float
    trace: tuple[StepRecord, ...] = ()
    initial_state: Optional[StateVector] = None

    @property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(r.outcome for r in self.trace if r.outcome is not None)

    def field_state(self) -> StateVector:
        """Field state with the atom projected out.

        Uses the last measured atomic state when the run ended on a ``hit``;
        otherwise requires the atom to be in a product state with the field.
        """
        projector = self.trace[-1].projector if self.trace else None
        return project_out_atom(self.final_state, projector)

    def branch_phase(self) -> Optional[float]:
        """Relative phase of the all-ones vs all-zeros photon branch before the last measurement.

        ``None`` when the protocol has no measurement or the state then was not
        a two-branch state of that form.
        """
        before = None
        for k, rec in enumerate(self.trace):
            if rec.kind == "measure":
                before = self.trace[k - 1].state if k > 0 else self.initial_state
        if before is None:
            return None
        comps = before.components(1e-9)
        if len(comps) != 2:
            return None
        n = len(before.system.modes)
        by_photons = {b.photons: a for b, a in comps}
        zero, one = (0,) * n, (1,) * n
        if set(by_photons) != {zero, one}:
            return None
        return float(np.angle(by_photons[one] / by_photons[zero]))


def project_out_atom(state: StateVector, atomic: Optional[np.ndarray] = None) -> StateVector:
    spec = state.system
    psi = _atom_matrix(state)
    if atomic is None:
        u, s, _ = np.linalg.svd(psi, full_matrices=False)
        if len(s) > 1 and s[1] > 1e-9:
            raise SpecError("atom is entangled with the field; no pure field state")
        atomic = u[:, 0]
    field = np.asarray(atomic).conj() @ psi
    return StateVector.from_array(spec.field_space(), field)


def run_protocol(p: Protocol, rng: Optional[np.random.Generator] = None) -> SimulationResult:
    """Execute every step in order.

    Measurements keep their ``keep_outcome`` branch. When ``rng`` is given,
    outcomes are drawn from the Born probabilities instead and the realized
    branch is kept.
    """
    state = p.initial
    prob = 1.0
    trace = []
    for i, step in enumerate(p.steps, start=1):
        outcome = None
        try:
            if isinstance(step, MeasureAtom):
                if rng is not None:
                    p_hit = measurement_probability(state, step)
                    outcome = "hit" if rng.random() < p_hit else "miss"
                else:
                    outcome = step.keep_outcome
            state, q = apply_step(state, step, p.system, outcome)
        except ZeroProbabilityBranch as exc:
            raise ZeroProbabilityBranch(exc.probability, i) from None
        except (SpecError, ValueError) as exc:
            raise ProtocolError(str(exc), i) from None
        prob *= q
        projector = None
        if isinstance(step, MeasureAtom) and outcome == "hit":
            projector = step.atomic_vector(p.system.atom)
        trace.append(StepRecord(i, step.kind, float(step.duration), q, outcome, state, projector))
    return SimulationResult(state, prob, tuple(trace), p.initial)


# --- canned protocols ---------------------------------------------------------


def bell_system(g1: float = 1.0, g2: float = 1.0, n_max: int = 2) -> SystemSpec:
    """Three-level atom a, b, c; mode A on a<->c, mode B on b<->c."""
    return SystemSpec(
        AtomSpec(("a", "b", "c")),
        (ModeSpec("A", n_max), ModeSpec("B", n_max)),
        (Coupling("A", "a", "c", g1), Coupling("B", "b", "c", g2)),
    )


def build_bell_protocol(
    g1: float,
    g2: float,
    phi: float = 0.0,
    variant: str = "plus",
    m: int = 1,
    n: Optional[int] = None,
    n_max: int = 2,
) -> Protocol:
    """Ramsey superposition of a and b, transfer into A then B, detect the atom in c.

    The field is left in (|1,0> + s e^{i phi}|0,1>)/sqrt(2) up to a global
    phase, with s = +1 for ``plus`` and -1 for ``minus``. The sign is set by
    the half-cycle counts: ``n`` defaults to ``m`` for ``plus`` and ``m + 2``
    for ``minus``.
    """
    _check_rate(g1, "g1")
    _check_rate(g2, "g2")
    if variant not in ("plus", "minus"):
        raise ValueError(f"variant must be 'plus' or 'minus', got {variant!r}")
    if n is None:
        n = m if variant == "plus" else m + 2
    t1 = half_rabi_time(g1, m)
    t2 = half_rabi_time(g2, n)
    same = (m - n) % 4 == 0
    if same != (variant == "plus"):
        raise ValueError(f"(m, n) = ({m}, {n}) does not produce the {variant} variant")
    spec = bell_system(g1, g2, n_max)
    return Protocol(
        spec,
        StateVector.basis(spec, "a"),
        (
            PrepareSuperposition("a", "b", phi),
            Interact(("A",), t1, TimeExpr("half_rabi", m)),
            Interact(("B",), t2, TimeExpr("half_rabi", n)),
            MeasureAtom((("c", 1.0),), "hit"),
        ),
    )


def ghz_mode_ids(n_modes: int) -> tuple[str, ...]:
    return ("A", "B") + tuple(f"B{k}" for k in range(1, n_modes - 1))


def ghz_system(rates: Sequence[float], n_max: int = 2) -> SystemSpec:
    """Atom a, b, c, b1, b2, ...; mode A on a<->c, B on b<->c, B1 on b1<->c, ..."""
    if len(rates) < 2:
        raise ValueError("a GHZ chain needs at least two modes")
    modes = ghz_mode_ids(len(rates))
    uppers = ("a", "b") + tuple(f"b{k}" for k in range(1, len(rates) - 1))
    return SystemSpec(
        AtomSpec(("a", "b", "c") + uppers[2:]),
        tuple(ModeSpec(mid, n_max) for mid in modes),
        tuple(Coupling(mid, u, "c", g) for mid, u, g in zip(modes, uppers, rates)),
    )


def _ladder(system: SystemSpec) -> list[Coupling]:
    if len(system.modes) < 2:
        raise SpecError("GHZ ladder needs at least two modes")
    ladder = []
    for mode in system.modes:
        cs = [c for c in system.couplings if c.mode == mode.id]
        if len(cs) != 1:
            raise SpecError(f"GHZ ladder needs exactly one coupling on mode {mode.id}, found {len(cs)}")
        if cs[0].g <= 0:
            raise SpecError(f"coupling on mode {mode.id} has zero rate")
        ladder.append(cs[0])
    lowers = {c.lower for c in ladder}
    if len(lowers) != 1:
        raise SpecError(f"GHZ ladder couplings must share one lower level, found {sorted(lowers)}")
    uppers = [c.upper for c in ladder]
    if len(set(uppers)) != len(uppers) or ladder[0].lower in uppers:
        raise SpecError("GHZ ladder needs a distinct upper level per mode")
    return ladder


def build_ghz_protocol(
    system: SystemSpec,
    omegas: Optional[Sequence[float]] = None,
    projector_sign: str = "plus",
    m: int = 1,
    permissive: bool = False,
    pulse_area: float = math.pi,
    drive_phases: Optional[Sequence[float]] = None,
    compensate_phase: bool = True,
) -> Protocol:
    """Quarter-cycle emission into the first mode, then for every further mode a
    laser pulse lower -> upper_k followed by a half-cycle transfer into mode k,
    finally a measurement of the atom against (|x> +- e^{i theta}|lower>)/sqrt(2).

    ``theta`` is the branch phase the sequence accumulates; with
    ``compensate_phase`` the projector absorbs it so the field ends in
    (|0...0> +- |1...1>)/sqrt(2). Without it the projector is the plain
    (|x> +- |lower>)/sqrt(2) and the field carries the phase.
    """
    if projector_sign not in ("plus", "minus"):
        raise ValueError(f"projector_sign must be 'plus' or 'minus', got {projector_sign!r}")
    ladder = _ladder(system)
    n_pulses = len(ladder) - 1
    omegas = [1.0] * n_pulses if omegas is None else list(omegas)
    drive_phases = [0.0] * n_pulses if drive_phases is None else list(drive_phases)
    if len(omegas) != n_pulses or len(drive_phases) != n_pulses:
        raise ValueError(f"need {n_pulses} laser rates and phases for {len(ladder)} modes")
    if not (np.isfinite(pulse_area) and pulse_area > 0):
        raise ValueError("pulse_area must be positive")

    first, lower = ladder[0], ladder[0].lower
    t1 = quarter_rabi_time(first.g, m, permissive)
    steps = [Interact((first.mode,), t1, TimeExpr("quarter_rabi", m, permissive))]
    stay = complex(np.cos(first.g * t1))
    moved = complex(-1j * np.sin(first.g * t1))
    for c, omega, theta in zip(ladder[1:], omegas, drive_phases):
        _check_rate(omega, "omega")
        timing = TimeExpr("pi_pulse") if pulse_area == math.pi else None
        t_pulse = pulse_area / omega
        steps.append(Pulse(DriveTerm(c.upper, lower, omega, theta), t_pulse, timing))
        t_k = half_rabi_time(c.g, 1)
        steps.append(Interact((c.mode,), t_k, TimeExpr("half_rabi", 1)))
        moved *= -1j * np.exp(1j * theta) * np.sin(pulse_area / 2)
        moved *= -1j * np.sin(c.g * t_k)

    phase = float(np.angle(moved) - np.angle(stay)) if compensate_phase else 0.0
    sign = 1.0 if projector_sign == "plus" else -1.0
    steps.append(
        MeasureAtom(((first.upper, 1.0), (lower, sign * np.exp(1j * phase))), "hit")
    )
    return Protocol(system, StateVector.basis(system, first.upper), tuple(steps))


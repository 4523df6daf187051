"""Built-in verification suite: closed forms against full numeric evolution.

Each check returns a :class:`Check`; :func:`run_all` runs them in order.
Used by ``cavity-entangle verify`` and by the acceptance tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dynamics
from .entangle import (
    bell_state,
    concurrence,
    entropy_from_concurrence,
    fidelity,
    ghz_state,
    qubit_sector,
    von_neumann_entropy,
)
from .feasibility import FeasibilityParams, check_budget, transit_time
from .hilbert import (
    BasisState,
    StateVector,
    basis_index,
    mode_occupation_leakage,
    partial_trace,
    state_from_components,
)
from .protocol import (
    Interact,
    MeasureAtom,
    Protocol,
    SimulationResult,
    ZeroProbabilityBranch,
    apply_step,
    bell_system,
    build_bell_protocol,
    build_ghz_protocol,
    ghz_system,
    measurement_probability,
    run_protocol,
)

SEED = 20260419


@dataclass(frozen=True)
class Check:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}: {self.detail}"


def eq1_state(g1: float, g2: float, phi: float, n_max: int = 2) -> StateVector:
    spec = bell_system(g1, g2, n_max)
    zero = (0, 0)
    return state_from_components(spec, [(("a", zero), 1.0), (("b", zero), np.exp(1j * phi))])


def check_oracle(draws: int = 100, seed: int = SEED) -> Check:
    rng = np.random.default_rng(seed)
    worst_amp, worst_other = 0.0, 0.0
    keys = [("a", (0, 0)), ("c", (1, 0)), ("b", (0, 0)), ("c", (0, 1))]
    for _ in range(draws):
        g1, g2 = rng.uniform(0.1, 10, size=2)
        phi = rng.uniform(0, 2 * math.pi)
        t = rng.uniform(0, 10)
        psi0 = eq1_state(g1, g2, phi)
        H = dynamics.build_hamiltonian(psi0.system, ["A", "B"])
        psi = dynamics.evolve(psi0, H, t)
        expected = dynamics.analytic_two_mode_amplitudes(g1, g2, phi, t).as_array()
        got = np.array([psi.amplitude(l, n) for l, n in keys])
        worst_amp = max(worst_amp, float(np.max(np.abs(got - expected))))
        rest = psi.amplitudes.copy()
        rest[[basis_index(psi.system, BasisState(l, n)) for l, n in keys]] = 0
        worst_other = max(worst_other, float(np.max(np.abs(rest))))
    ok = worst_amp < 1e-10 and worst_other < 1e-12
    return Check(1, "oracle equivalence", ok,
                 f"{draws} draws, max amplitude error {worst_amp:.2e} (<1e-10), max leakage {worst_other:.2e} (<1e-12)")


def check_detection_probability(points: int = 201) -> Check:
    measure_c = MeasureAtom((("c", 1.0),))
    worst = 0.0
    for g1, g2 in [(1.0, 1.0), (1.0, 1.7), (0.6, 2.3)]:
        psi0 = eq1_state(g1, g2, 0.4)
        H = dynamics.build_hamiltonian(psi0.system, ["A", "B"])
        for t in np.linspace(0, math.pi, points):
            p = measurement_probability(dynamics.evolve(psi0, H, t), measure_c)
            worst = max(worst, abs(p - dynamics.analytic_pc(g1, g2, t)))
    psi0 = eq1_state(1.0, 1.0, 0.0)
    peak = measurement_probability(
        dynamics.evolve(psi0, dynamics.build_hamiltonian(psi0.system, ["A", "B"]), math.pi / 2), measure_c
    )
    ok = worst < 1e-10 and abs(peak - 1.0) < 1e-10
    return Check(2, "detection probability", ok,
                 f"{points}-point sweeps, max error {worst:.2e} (<1e-10); P_c at g t = pi/2 is {peak:.12f}")


BELL_CASES = [(v, phi) for v in ("plus", "minus") for phi in (0.0, math.pi / 3, math.pi)]


def bell_runs(g1: float = 1.0, g2: float = 1.0) -> list[tuple[str, float, SimulationResult]]:
    return [(v, phi, run_protocol(build_bell_protocol(g1, g2, phi, v))) for v, phi in BELL_CASES]


def check_bell() -> Check:
    worst_f, worst_p = 1.0, 1.0
    for g1, g2 in [(1.0, 1.0), (0.7, 2.9)]:
        for v, phi, r in bell_runs(g1, g2):
            worst_f = min(worst_f, fidelity(r.field_state(), bell_state(f"psi_{v}", phi)))
            worst_p = min(worst_p, r.branch_probability)
    ok = worst_f > 1 - 1e-9 and worst_p > 1 - 1e-9
    return Check(3, "Bell generation", ok,
                 f"variants plus/minus x phi in {{0, pi/3, pi}}: min fidelity {worst_f:.12f}, min branch probability {worst_p:.12f}")


def ghz_run(n_modes: int, sign: str = "plus") -> SimulationResult:
    rates = [1.0 + 0.35 * k for k in range(n_modes)]
    omegas = [1.0 + 0.5 * k for k in range(n_modes - 1)]
    return run_protocol(build_ghz_protocol(ghz_system(rates), omegas, projector_sign=sign))


def check_ghz() -> Check:
    problems = []
    min_f = 1.0
    for sign in ("plus", "minus"):
        r = ghz_run(2, sign)
        f = fidelity(r.field_state(), ghz_state(2, sign))
        min_f = min(min_f, f)
        if not f > 1 - 1e-9:
            problems.append(f"N=2 {sign} fidelity {f}")
        if abs(r.branch_probability - 0.5) > 1e-9:
            problems.append(f"N=2 {sign} branch probability {r.branch_probability}")
        after_first = r.trace[0].state
        pops = [abs(after_first.amplitude("a", (0, 0))) ** 2, abs(after_first.amplitude("c", (1, 0))) ** 2]
        if max(abs(p - 0.5) for p in pops) > 1e-10:
            problems.append(f"populations after first cavity {pops}")
    entropies = []
    for n in (3, 4, 5):
        field = ghz_run(n).field_state()
        comps = field.components(1e-12)
        if len(comps) != 2:
            problems.append(f"N={n} has {len(comps)} components")
        for mode in field.system.mode_ids:
            s = von_neumann_entropy(partial_trace(field, [mode]))
            entropies.append(s)
            if abs(s - 1.0) > 1e-9:
                problems.append(f"N={n} entropy of {mode} is {s}")
    worst_s = max(abs(s - 1) for s in entropies)
    detail = (f"N=2 min fidelity {min_f:.12f}, branch probability 0.5; "
              f"N=3,4,5 two components, max |S-1| {worst_s:.1e}")
    return Check(4, "GHZ generation", not problems, "; ".join(problems) or detail)


def random_pure_two_qubit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return v / np.linalg.norm(v)


def check_metrics(samples: int = 50, seed: int = SEED) -> Check:
    worst_c = 0.0
    for _, _, r in bell_runs():
        rho = qubit_sector(partial_trace(r.field_state(), ["A", "B"]))
        worst_c = max(worst_c, abs(concurrence(rho) - 1))
    for sign in ("plus", "minus"):
        rho = qubit_sector(partial_trace(ghz_run(2, sign).field_state(), ["A", "B"]))
        worst_c = max(worst_c, abs(concurrence(rho) - 1))
    rng = np.random.default_rng(seed)
    worst_rel = 0.0
    for _ in range(samples):
        v = random_pure_two_qubit(rng)
        rho = np.outer(v, v.conj())
        m = v.reshape(2, 2)
        rho_a = m @ m.conj().T
        e = von_neumann_entropy(rho_a)
        worst_rel = max(worst_rel, abs(e - entropy_from_concurrence(concurrence(rho))))
    ok = worst_c < 1e-9 and worst_rel < 1e-9
    return Check(5, "entanglement metrics", ok,
                 f"max |C-1| over generated Bell states {worst_c:.1e}; entropy/concurrence relation max error {worst_rel:.1e} on {samples} states")


def conservation_report(protocol: Protocol) -> tuple[float, float, float, float]:
    """(norm drift, excitation drift over interaction steps, outcome-sum error, occupation leakage)."""
    r = run_protocol(protocol)
    states = [protocol.initial] + [rec.state for rec in r.trace]
    norm_drift = max(abs(s.norm() - 1) for s in states)
    exc_drift = 0.0
    sum_err = 0.0
    leak = max(mode_occupation_leakage(s) for s in states)
    for k, step in enumerate(protocol.steps):
        before = states[k]
        if isinstance(step, Interact):
            after, _ = apply_step(before, step, protocol.system)
            exc_drift = max(exc_drift, abs(dynamics.expected_excitation(after) - dynamics.expected_excitation(before)))
        elif isinstance(step, MeasureAtom):
            total = 0.0
            for outcome in ("hit", "miss"):
                try:
                    total += apply_step(before, step, protocol.system, outcome)[1]
                except ZeroProbabilityBranch as exc:
                    total += exc.probability
            sum_err = max(sum_err, abs(total - 1))
    return norm_drift, exc_drift, sum_err, leak


def all_protocols() -> list[Protocol]:
    protos = [build_bell_protocol(g1, g2, phi, v) for v, phi in BELL_CASES for g1, g2 in [(1, 1), (0.7, 2.9)]]
    for n in (2, 3, 4, 5):
        for sign in ("plus", "minus"):
            rates = [1.0 + 0.35 * k for k in range(n)]
            protos.append(build_ghz_protocol(ghz_system(rates), projector_sign=sign))
    return protos


def check_conservation() -> Check:
    worst = [0.0, 0.0, 0.0, 0.0]
    for p in all_protocols():
        worst = [max(w, x) for w, x in zip(worst, conservation_report(p))]
    norm_d, exc_d, sum_e, leak = worst
    ok = norm_d < 1e-10 and exc_d < 1e-10 and sum_e < 1e-10 and leak < 1e-12
    return Check(6, "conservation", ok,
                 f"norm drift {norm_d:.1e}, excitation drift {exc_d:.1e}, outcome-sum error {sum_e:.1e}, "
                 f"photon leakage {leak:.1e}")


def check_feasibility() -> Check:
    params = FeasibilityParams()
    t = transit_time(params.cavity_length, params.atom_velocity)
    report = check_budget(params)
    ok = t == 5.0e-5 and report.passed
    return Check(7, "feasibility arithmetic", ok,
                 f"transit {t!r} s, total {report.total_protocol_time:.3g} s, "
                 f"lifetime margin {min(report.atomic_margin, report.cavity_margin):.3g}x, "
                 f"verdict {'pass' if report.passed else 'fail'}")


CHECKS: list[Callable[[], Check]] = [
    check_oracle,
    check_detection_probability,
    check_bell,
    check_ghz,
    check_metrics,
    check_conservation,
    check_feasibility,
]


def run_all() -> list[Check]:
    out = []
    for i, fn in enumerate(CHECKS, start=1):
        try:
            out.append(fn())
        except Exception as exc:  # a crashing check is a failed check
            out.append(Check(i, fn.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return out

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_entangle.dynamics import DriveTerm
from cavity_entangle.entangle import bell_state, fidelity, ghz_state
from cavity_entangle.hilbert import AtomSpec, SpecError, StateVector, SystemSpec, mode_occupation_leakage
from cavity_entangle.protocol import (
    Interact,
    MeasureAtom,
    PrepareSuperposition,
    Protocol,
    ProtocolError,
    Pulse,
    TimeExpr,
    ZeroProbabilityBranch,
    apply_step,
    bell_system,
    build_bell_protocol,
    build_ghz_protocol,
    equal_amplitude_times,
    ghz_mode_ids,
    ghz_system,
    half_pi_pulse_time,
    half_rabi_time,
    measurement_probability,
    pi_pulse_time,
    quarter_rabi_time,
    run_protocol,
    timing_plan,
)

S = 1 / math.sqrt(2)


# --- timing rules -------------------------------------------------------------


def test_timing_examples():
    assert half_rabi_time(1.0, 1) == pytest.approx(math.pi / 2)
    assert half_rabi_time(2.0, 3) == pytest.approx(3 * math.pi / 4)
    assert quarter_rabi_time(1.0, 1) == pytest.approx(math.pi / 4)
    assert quarter_rabi_time(1.0, 5) == pytest.approx(5 * math.pi / 4)
    assert quarter_rabi_time(1.0, 3, permissive=True) == pytest.approx(3 * math.pi / 4)
    assert pi_pulse_time(2.0) == pytest.approx(math.pi / 2)
    assert half_pi_pulse_time(2.0) == pytest.approx(math.pi / 4)


@pytest.mark.parametrize(
    "call",
    [
        lambda: half_rabi_time(1.0, 2),
        lambda: half_rabi_time(1.0, 0),
        lambda: half_rabi_time(1.0, -1),
        lambda: half_rabi_time(1.0, 1.5),
        lambda: half_rabi_time(0.0, 1),
        lambda: half_rabi_time(-1.0, 1),
        lambda: half_rabi_time(float("nan"), 1),
        lambda: quarter_rabi_time(1.0, 3),
        lambda: quarter_rabi_time(1.0, 2, permissive=True),
        lambda: pi_pulse_time(0.0),
        lambda: half_pi_pulse_time(-2.0),
    ],
)
def test_timing_rejects(call):
    with pytest.raises(ValueError):
        call()


def test_equal_amplitude_times_examples():
    assert equal_amplitude_times(1.0, 1.0, 5) == pytest.approx([math.pi / 2, 3 * math.pi / 2, 5 * math.pi / 2])
    # g2 = 2 g1: sin(2t) vanishes whenever sin(t) = +-1
    assert equal_amplitude_times(1.0, 2.0, 9) == []
    # g2 = 3 g1: sin(t) and sin(3t) are +-1 together but always with opposite signs
    assert equal_amplitude_times(1.0, 3.0, 3) == []
    assert equal_amplitude_times(1.0, 3.0, 3, same_sign=False) == pytest.approx([math.pi / 2, 3 * math.pi / 2])
    # incommensurate rates never meet
    assert equal_amplitude_times(1.0, math.sqrt(2), 41) == []


def brute_force_times(g1, g2, t_max, same_sign):
    # dense scan for points where both |sin| are 1 to within the grid resolution,
    # then snap each candidate to the nearest odd half-cycle of mode 1
    out = []
    for m in range(1, 10_000, 2):
        t = m * math.pi / (2 * g1)
        if t > t_max + 1e-9:
            break
        s1, s2 = math.sin(g1 * t), math.sin(g2 * t)
        if abs(abs(s2) - 1) < 1e-12 and (s1 * s2 > 0) == same_sign:
            out.append(t)
    return out


@pytest.mark.parametrize("g1,g2", [(1.0, 1.0), (1.0, 3.0), (1.0, 5.0), (2.0, 6.0), (3.0, 1.0), (1.0, 7.0)])
@pytest.mark.parametrize("same_sign", [True, False])
def test_equal_amplitude_times_against_scan(g1, g2, same_sign):
    max_m = 21
    got = equal_amplitude_times(g1, g2, max_m, same_sign)
    want = brute_force_times(g1, g2, max_m * math.pi / (2 * min(g1, g2)), same_sign)
    assert len(got) == len(want)
    assert np.allclose(got, want, atol=1e-6)
    for t in got:
        s1, s2 = math.sin(g1 * t), math.sin(g2 * t)
        assert abs(abs(s1) - 1) < 1e-9 and abs(abs(s2) - 1) < 1e-9
        assert (abs(s1 - s2) < 1e-9) == same_sign


def test_time_expr_resolution():
    assert TimeExpr("half_rabi", 3).resolve(2.0) == pytest.approx(3 * math.pi / 4)
    assert TimeExpr("pi_pulse").resolve(4.0) == pytest.approx(math.pi / 4)
    assert str(TimeExpr("quarter_rabi", 1)) == "quarter_rabi(1)"
    with pytest.raises(ValueError):
        TimeExpr("forever").resolve(1.0)


# --- steps --------------------------------------------------------------------


def test_prepare_superposition_amplitudes():
    spec = bell_system()
    out, p = apply_step(StateVector.basis(spec, "a"), PrepareSuperposition("a", "b", 0.7), spec)
    assert p == 1.0
    assert out.amplitude("a", (0, 0)) == pytest.approx(S)
    assert out.amplitude("b", (0, 0)) == pytest.approx(S * np.exp(0.7j))


def test_prepare_requires_pure_starting_level():
    spec = bell_system()
    with pytest.raises(SpecError):
        apply_step(StateVector.basis(spec, "c"), PrepareSuperposition("a", "b"), spec)


def test_single_mode_transfer_and_zero_duration():
    spec = bell_system(1.3, 1.0)
    psi = StateVector.basis(spec, "a")
    out, _ = apply_step(psi, Interact(("A",), half_rabi_time(1.3)), spec)
    assert abs(out.amplitude("c", (1, 0))) == pytest.approx(1.0, abs=1e-12)
    same, _ = apply_step(psi, Interact(("A",), 0.0), spec)
    np.testing.assert_array_equal(same.amplitudes, psi.amplitudes)


def test_quarter_rabi_gives_equal_populations():
    spec = bell_system(0.8, 1.0)
    out, _ = apply_step(StateVector.basis(spec, "a"), Interact(("A",), quarter_rabi_time(0.8)), spec)
    assert abs(out.amplitude("a", (0, 0))) ** 2 == pytest.approx(0.5, abs=1e-12)
    assert abs(out.amplitude("c", (1, 0))) ** 2 == pytest.approx(0.5, abs=1e-12)


def test_pulse_step():
    spec = bell_system()
    out, _ = apply_step(StateVector.basis(spec, "c"), Pulse(DriveTerm("b", "c", 2.0), pi_pulse_time(2.0)), spec)
    assert out.amplitude("b", (0, 0)) == pytest.approx(-1j, abs=1e-14)


def test_measurement_branches_sum_to_one(rng):
    spec = bell_system()
    v = rng.normal(size=spec.dim) + 1j * rng.normal(size=spec.dim)
    psi = StateVector.from_array(spec, v)
    step = MeasureAtom((("a", 1.0), ("c", 1j)))
    p_hit = apply_step(psi, step, spec, "hit")[1]
    p_miss = apply_step(psi, step, spec, "miss")[1]
    assert p_hit + p_miss == pytest.approx(1.0, abs=1e-12)
    assert measurement_probability(psi, step) == pytest.approx(p_hit, abs=1e-12)


def test_measure_projector_is_normalized():
    step = MeasureAtom((("a", 3.0), ("c", 4.0)))
    assert dict(step.projector) == {"a": 0.6, "c": 0.8}


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(projector=()),
        dict(projector=(("a", 1.0), ("a", 1.0))),
        dict(projector=(("a", 0.0),)),
        dict(projector=(("a", 1.0),), keep_outcome="maybe"),
    ],
)
def test_measure_rejects(kwargs):
    with pytest.raises(SpecError):
        MeasureAtom(**kwargs)


def test_zero_probability_branch_is_reported():
    spec = bell_system()
    with pytest.raises(ZeroProbabilityBranch) as info:
        apply_step(StateVector.basis(spec, "a"), MeasureAtom((("c", 1.0),)), spec)
    assert info.value.probability == 0.0


def test_protocol_validation_errors():
    spec = bell_system()
    psi = StateVector.basis(spec, "a")
    bad = [
        Interact(("Z",), 1.0),
        Interact(("A", "B"), 1.0, TimeExpr("half_rabi", 1)),
        Interact(("A",), 1.0, TimeExpr("pi_pulse")),
        Pulse(DriveTerm("b", "c", 1.0), 1.0, TimeExpr("half_rabi", 1)),
        Pulse(DriveTerm("q", "c", 1.0), 1.0),
        PrepareSuperposition("a", "a"),
        MeasureAtom((("z", 1.0),)),
    ]
    for step in bad:
        with pytest.raises(SpecError, match="step 1"):
            Protocol(spec, psi, (step,))
    with pytest.raises(SpecError):
        Interact((), 1.0)
    with pytest.raises(SpecError):
        Interact(("A",), -1.0)
    with pytest.raises(SpecError):
        Protocol(spec, StateVector.basis(bell_system(n_max=1), "a"))


def test_run_protocol_reports_failing_step():
    spec = bell_system()
    p = Protocol(spec, StateVector.basis(spec, "a"), (Interact(("A",), 0.1), Interact(("A",), 0.2),
                                                       PrepareSuperposition("a", "b")))
    with pytest.raises(ProtocolError) as info:
        run_protocol(p)
    assert info.value.step_index == 3


def test_empty_protocol_returns_initial_state():
    spec = bell_system()
    psi = StateVector.basis(spec, "b", (1, 1))
    r = run_protocol(Protocol(spec, psi))
    assert r.branch_probability == 1.0 and r.trace == ()
    np.testing.assert_array_equal(r.final_state.amplitudes, psi.amplitudes)


def test_timing_plan():
    plan = timing_plan(build_bell_protocol(1.0, 2.0))
    assert [e.step_index for e in plan.entries] == [2, 3]
    assert plan.total == pytest.approx(math.pi / 2 + math.pi / 4)
    assert "half_rabi(1)" in plan.entries[0].rule


# --- Bell ---------------------------------------------------------------------


@pytest.mark.parametrize("variant", ["plus", "minus"])
@pytest.mark.parametrize("phi", [0.0, 1.1, math.pi])
@pytest.mark.parametrize("g1,g2", [(1.0, 1.0), (0.4, 2.7)])
def test_bell_protocol(variant, phi, g1, g2):
    r = run_protocol(build_bell_protocol(g1, g2, phi, variant))
    assert r.branch_probability == pytest.approx(1.0, abs=1e-12)
    assert fidelity(r.field_state(), bell_state(f"psi_{variant}", phi)) > 1 - 1e-12
    assert mode_occupation_leakage(r.final_state) < 1e-12


def test_bell_variant_needs_matching_counts():
    with pytest.raises(ValueError):
        build_bell_protocol(1.0, 1.0, variant="plus", m=1, n=3)
    with pytest.raises(ValueError):
        build_bell_protocol(1.0, 1.0, variant="other")
    r = run_protocol(build_bell_protocol(1.0, 1.0, 0.3, "plus", m=3, n=7))
    assert fidelity(r.field_state(), bell_state("psi_plus", 0.3)) > 1 - 1e-12


def test_bell_at_wrong_time_loses_probability():
    p = build_bell_protocol(1.0, 1.0)
    steps = list(p.steps)
    steps[2] = Interact(("B",), math.pi / 4)
    r = run_protocol(Protocol(p.system, p.initial, steps))
    assert r.branch_probability == pytest.approx(0.75, abs=1e-12)


def test_seeded_sampling_is_reproducible():
    p = build_ghz_protocol(ghz_system([1.0, 1.0]))
    draws = [run_protocol(p, np.random.default_rng(7)).outcomes for _ in range(3)]
    assert draws[0] == draws[1] == draws[2]
    outcomes = [run_protocol(p, np.random.default_rng(s)).outcomes[0] for s in range(200)]
    hits = outcomes.count("hit")
    assert 60 < hits < 140  # Born probability 1/2


def test_sampled_miss_branch_is_normalized():
    p = build_ghz_protocol(ghz_system([1.0, 1.0]))
    for seed in range(20):
        r = run_protocol(p, np.random.default_rng(seed))
        assert r.final_state.norm() == pytest.approx(1.0, abs=1e-12)
        assert r.branch_probability == pytest.approx(0.5, abs=1e-12)


# --- GHZ ----------------------------------------------------------------------


def test_ghz_mode_layout():
    assert ghz_mode_ids(4) == ("A", "B", "B1", "B2")
    spec = ghz_system([1, 2, 3])
    assert spec.atom.levels == ("a", "b", "c", "b1")
    with pytest.raises(ValueError):
        ghz_system([1.0])


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_ghz_protocol(n, sign):
    spec = ghz_system([0.9 + 0.3 * k for k in range(n)])
    r = run_protocol(build_ghz_protocol(spec, [1.0 + 0.2 * k for k in range(n - 1)], sign))
    assert r.branch_probability == pytest.approx(0.5, abs=1e-12)
    assert fidelity(r.field_state(), ghz_state(n, sign)) > 1 - 1e-12


def test_ghz_uncompensated_phase():
    p = build_ghz_protocol(ghz_system([1.0, 1.0]), compensate_phase=False)
    r = run_protocol(p)
    assert r.branch_phase() == pytest.approx(math.pi / 2, abs=1e-12)
    assert fidelity(r.field_state(), ghz_state(2, "plus")) == pytest.approx(0.5, abs=1e-12)


def test_ghz_permissive_quarter_cycle_flips_phase():
    with pytest.raises(ValueError):
        build_ghz_protocol(ghz_system([1.0, 1.0]), m=3)
    p = build_ghz_protocol(ghz_system([1.0, 1.0]), m=3, permissive=True, compensate_phase=False)
    assert run_protocol(p).branch_phase() == pytest.approx(-math.pi / 2, abs=1e-12)
    compensated = build_ghz_protocol(ghz_system([1.0, 1.0]), m=3, permissive=True)
    assert fidelity(run_protocol(compensated).field_state(), ghz_state(2)) > 1 - 1e-12


def test_ghz_half_area_pulse_breaks_the_state():
    p = build_ghz_protocol(ghz_system([1.0, 1.0, 1.0]), pulse_area=math.pi / 2)
    # half of the excitation never reaches the extra modes
    assert fidelity(run_protocol(p).field_state(), ghz_state(3)) == pytest.approx(0.5625, abs=1e-12)


def test_ghz_drive_phase_is_absorbed():
    spec = ghz_system([1.0, 1.2, 0.7])
    p = build_ghz_protocol(spec, [1.0, 1.5], drive_phases=[0.4, -1.1])
    assert fidelity(run_protocol(p).field_state(), ghz_state(3)) > 1 - 1e-12


def test_ghz_rejects_bad_ladders():
    with pytest.raises(ValueError):
        build_ghz_protocol(ghz_system([1.0, 1.0]), omegas=[1.0, 2.0])
    with pytest.raises(ValueError):
        build_ghz_protocol(ghz_system([1.0, 1.0]), projector_sign="zero")
    with pytest.raises(SpecError):
        build_ghz_protocol(SystemSpec(AtomSpec(("a", "c"))))
    shared = SystemSpec(
        AtomSpec(("a", "b", "c")),
        bell_system().modes,
        tuple(c.__class__(c.mode, "a", "c", 1.0) for c in bell_system().couplings),
    )
    with pytest.raises(SpecError):
        build_ghz_protocol(shared)


@settings(max_examples=25, deadline=None)
@given(
    rates=st.lists(st.floats(0.2, 5.0), min_size=2, max_size=3),
    omega=st.floats(0.2, 5.0),
    sign=st.sampled_from(["plus", "minus"]),
)
def test_ghz_fidelity_for_any_rates(rates, omega, sign):
    p = build_ghz_protocol(ghz_system(rates), [omega] * (len(rates) - 1), sign)
    r = run_protocol(p)
    assert fidelity(r.field_state(), ghz_state(len(rates), sign)) > 1 - 1e-9
    assert abs(r.branch_probability - 0.5) < 1e-9

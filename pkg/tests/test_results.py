import csv
import io
import json
import math

import numpy as np
import pytest

from cavity_entangle.lang import parse_protocol
from cavity_entangle.protocol import ZeroProbabilityBranch, build_bell_protocol, run_protocol
from cavity_entangle.results import (
    SweepConfig,
    SweepError,
    amplitudes_from_json,
    emit_result_json,
    fmt_float,
    result_dict,
    run_sweep,
    set_parameter,
)
from cavity_entangle.entangle import target_from_name

from conftest import DATA, PROTOCOLS


def load(name):
    return parse_protocol((PROTOCOLS / name).read_bytes())[1]


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_fmt_float_round_trips():
    for x in [0.1, 1 / 3, math.pi, 1e-300, -2.5e17, 5e-324]:
        assert float(fmt_float(x)) == x


def test_json_layout():
    r = run_protocol(load("bell.proto"))
    data = json.loads(emit_result_json(r, [target_from_name("psi_plus")]))
    assert list(data) == ["schema_version", "basis", "amplitudes", "branch_probability", "trace", "field", "fidelities"]
    assert data["schema_version"] == 1
    assert len(data["basis"]) == len(data["amplitudes"]) == 27
    assert data["basis"][0] == "a,0,0"
    assert [s["kind"] for s in data["trace"]] == ["ramsey", "interact", "interact", "measure"]
    assert data["trace"][-1]["outcome"] == "hit"
    assert data["fidelities"]["psi_plus"] == pytest.approx(1.0, abs=1e-12)


def test_json_amplitudes_restore_bit_exactly():
    r = run_protocol(load("ghz3.proto"))
    restored = amplitudes_from_json(emit_result_json(r))
    np.testing.assert_array_equal(restored, r.final_state.amplitudes)


def test_json_is_byte_stable():
    texts = {emit_result_json(run_protocol(load("ghz.proto"))) for _ in range(3)}
    assert len(texts) == 1


def test_unmeasured_run_has_no_field_or_phase():
    proto = load("bell.proto")
    r = run_protocol(proto.__class__(proto.system, proto.initial, proto.steps[:2]))
    data = result_dict(r, [target_from_name("psi_plus")])
    assert "field" not in data and "branch_phase" not in data
    assert data["fidelities"] == {"psi_plus": None}
    assert '"psi_plus": null' in emit_result_json(r, [target_from_name("psi_plus")])


@pytest.mark.parametrize("name,target", [("bell", "psi_plus"), ("ghz", "phi_plus")])
def test_golden_files(name, target):
    golden = json.loads((DATA / f"{name}.json").read_text())
    fresh = json.loads(emit_result_json(run_protocol(load(f"{name}.proto")), [target_from_name(target)]))
    assert fresh["basis"] == golden["basis"]
    assert [s["kind"] for s in fresh["trace"]] == [s["kind"] for s in golden["trace"]]
    np.testing.assert_allclose(np.array(fresh["amplitudes"]), np.array(golden["amplitudes"]), atol=1e-12)
    assert fresh["branch_probability"] == pytest.approx(golden["branch_probability"], abs=1e-12)
    assert fresh["fidelities"][target] == pytest.approx(golden["fidelities"][target], abs=1e-12)


def test_sweep_detection_probability():
    proto = load("two_mode_simultaneous.proto")
    text = run_sweep(proto, SweepConfig("step2.t", 0.0, math.pi, 201))
    table = rows(text)
    assert table[0] == ["step2.t", "branch_probability"]
    ts = np.array([float(r[0]) for r in table[1:]])
    ps = np.array([float(r[1]) for r in table[1:]])
    assert len(ts) == 201 and np.all(np.diff(ts) > 0)
    # the t = 0 point has no c population: recorded as probability 0
    np.testing.assert_allclose(ps, np.sin(ts) ** 2, atol=1e-10)
    assert ts[np.argmax(ps)] == pytest.approx(math.pi / 2)
    assert "\r" not in text


def test_sweep_is_deterministic_across_worker_counts():
    proto = load("bell.proto")
    cfg = SweepConfig("step1.phi", 0.0, 2 * math.pi, 17, ("psi_plus",))
    assert run_sweep(proto, cfg, max_workers=1) == run_sweep(proto, cfg, max_workers=4)


def test_sweep_phase_with_fidelity_column():
    cfg = SweepConfig("step1.phi", 0.0, math.pi, 5, ("psi_plus",))
    table = rows(run_sweep(load("bell.proto"), cfg))
    assert table[0][-1] == "fidelity_psi_plus"
    phis = [float(r[0]) for r in table[1:]]
    fids = [float(r[2]) for r in table[1:]]
    np.testing.assert_allclose(fids, np.cos(np.array(phis) / 2) ** 2, atol=1e-12)


def test_sweep_coupling_retimes_symbolic_steps():
    cfg = SweepConfig("coupling.B.g", 0.5, 3.0, 6, ("psi_plus",))
    table = rows(run_sweep(load("bell.proto"), cfg))
    for r in table[1:]:
        assert float(r[1]) == pytest.approx(1.0, abs=1e-12)
        assert float(r[2]) == pytest.approx(1.0, abs=1e-12)


def test_set_parameter_variants():
    proto = build_bell_protocol(1.0, 1.0)
    assert set_parameter(proto, "step2.t", 0.3).steps[1].duration == 0.3
    assert set_parameter(proto, "step2.t", 0.3).steps[1].timing is None
    moved = set_parameter(proto, "coupling.A:a:c.g", 2.0)
    assert moved.steps[1].duration == pytest.approx(math.pi / 4)
    ghz = load("ghz.proto")
    k = next(i for i, s in enumerate(ghz.steps, 1) if s.kind == "pulse")
    faster = set_parameter(ghz, f"step{k}.omega", 4.0)
    assert faster.steps[k - 1].duration == pytest.approx(math.pi / 4)


@pytest.mark.parametrize(
    "param",
    ["step9.t", "step1.t", "step2.phi", "step2.omega", "coupling.Q.g", "gain", "step0.t"],
)
def test_set_parameter_rejects(param):
    with pytest.raises(SweepError):
        set_parameter(build_bell_protocol(1.0, 1.0), param, 1.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(steps=1), dict(steps=2.5), dict(start=1.0, stop=1.0), dict(start=2.0, stop=1.0), dict(stop=math.inf)],
)
def test_sweep_config_rejects(kwargs):
    base = dict(param="step2.t", start=0.0, stop=1.0, steps=3)
    base.update(kwargs)
    with pytest.raises(SweepError):
        SweepConfig(**base)


def test_zero_probability_branch_in_sweep():
    proto = load("two_mode_simultaneous.proto")
    with pytest.raises(ZeroProbabilityBranch):
        run_protocol(set_parameter(proto, "step2.t", 0.0))
    first = rows(run_sweep(proto, SweepConfig("step2.t", 0.0, 1.0, 2)))[1]
    assert float(first[1]) == 0.0

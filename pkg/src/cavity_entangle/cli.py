"""Command-line entry point: ``run``, ``sweep``, ``verify`` and ``feasibility``.

Exit codes: 0 success, 1 input / protocol error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import verify
from .entangle import fidelity, target_from_name
from .feasibility import FeasibilityParams, check_budget
from .hilbert import SpecError
from .lang import ParseFailure, parse_feasibility_params, parse_protocol
from .protocol import ProtocolError, TimedStep, TimingPlan, run_protocol, timing_plan
from .results import SweepConfig, SweepError, emit_result_json, run_sweep

EXIT_OK, EXIT_INPUT, EXIT_VERIFY = 0, 1, 2


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise _InputError(f"{path}: {exc.strerror or exc}") from None


class _InputError(Exception):
    pass


def _load_protocol(path: str):
    try:
        return parse_protocol(_read(path))
    except ParseFailure as exc:
        raise _InputError("\n".join(f"{path}:{e.span.line}:{e.span.col_start}: {e.message}"
                                    + (f" ({e.token!r})" if e.token else "")
                                    for e in exc.errors)) from None


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_run(args) -> int:
    system, proto = _load_protocol(args.file)
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    try:
        targets = [target_from_name(t, len(system.modes), system.mode_ids) for t in args.target]
        result = run_protocol(proto, rng)
    except (ProtocolError, ValueError) as exc:
        raise _InputError(f"{args.file}: {exc}") from None

    print(f"steps: {len(proto.steps)}")
    if result.outcomes:
        print(f"outcomes: {' '.join(result.outcomes)}")
    print(f"branch probability: {result.branch_probability:.9f}")
    try:
        field = result.field_state()
    except SpecError:
        field = None
        print("field state: atom still entangled with the field")
    if field is not None:
        terms = " + ".join(f"({a.real:+.6f}{a.imag:+.6f}j)|{b.label()}>" for b, a in field.components(1e-9))
        print(f"field state: {terms}")
    phase = result.branch_phase()
    if phase is not None:
        print(f"branch phase: {phase:.9f}")
    for t in targets:
        if field is None:
            print(f"fidelity {t.name}: n/a")
        else:
            try:
                print(f"fidelity {t.name}: {fidelity(field, t):.9f}")
            except SpecError as exc:
                raise _InputError(f"target {t.name}: {exc}") from None
    if args.json:
        _write(args.json, emit_result_json(result, targets))
    return EXIT_OK


def cmd_sweep(args) -> int:
    _, proto = _load_protocol(args.file)
    try:
        cfg = SweepConfig(args.param, args.start, args.stop, args.steps, tuple(args.target))
        text = run_sweep(proto, cfg)
    except (SweepError, ProtocolError, ValueError) as exc:
        raise _InputError(str(exc)) from None
    _write(args.csv, text)
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = verify.run_all()
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_feasibility(args) -> int:
    if args.params:
        try:
            params = parse_feasibility_params(_read(args.params))
        except ParseFailure as exc:
            raise _InputError("\n".join(f"{args.params}:{e.span.line}:{e.span.col_start}: {e.message}"
                                        for e in exc.errors)) from None
    else:
        params = FeasibilityParams()
    plan = None
    if args.protocol:
        _, proto = _load_protocol(args.protocol)
        scale = args.time_unit
        plan = TimingPlan(tuple(
            TimedStep(e.step_index, e.kind, e.duration * scale, e.rule) for e in timing_plan(proto).entries
        ))
    print(check_budget(params, plan).summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cavity-entangle", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a protocol file")
    p.add_argument("file")
    p.add_argument("--target", action="append", default=[],
                   help="fidelity target: psi_plus, psi_minus(phi), phi_plus, phi_minus, ghz_plus, ghz3_minus, ...")
    p.add_argument("--json", metavar="PATH", help="write the result as JSON ('-' for stdout)")
    p.add_argument("--seed", type=int, help="sample measurement outcomes with this seed instead of post-selecting")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep one protocol parameter, emit CSV")
    p.add_argument("file")
    p.add_argument("--param", required=True, help="step<k>.t, step<k>.phi, step<k>.omega, step<k>.phase, coupling.<id>.g")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--target", action="append", default=[])
    p.add_argument("--csv", metavar="PATH", help="output path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the built-in verification checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("feasibility", help="timing budget against SI experimental parameters")
    p.add_argument("--params", metavar="FILE", help="key=value parameter file")
    p.add_argument("--protocol", metavar="FILE", help="take step durations from a protocol file")
    p.add_argument("--time-unit", type=float, default=1.0,
                   help="seconds per protocol time unit (with --protocol)")
    p.set_defaults(func=cmd_feasibility)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

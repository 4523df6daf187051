"""
Line-oriented protocol description language.

One directive per line, ``#`` starts a comment, options are ``key=value``::

    level a
    level b
    level c
    mode A nmax=2
    mode B nmax=2
    couple A a c g=1
    couple B b c g=1
    init level=a
    step ramsey a b phi=0
    step interact modes=A t=half_rabi(1)
    step interact modes=B t=half_rabi(1)
    step pulse b c omega=1 phase=0 t=pi_pulse
    step measure coeffs=a:0.7071:0;c:0:0.7071 outcome=hit

Durations (``t=``) are float literals or ``half_rabi(m)``, ``quarter_rabi(m)``
(interaction steps with a single active coupling) and ``pi_pulse``,
``half_pi_pulse`` (pulse steps). Symbolic durations are kept on the step so
they follow later changes of the rate.

Parsing never stops at the first problem: every diagnostic in the file is
collected and raised together as :class:`ParseFailure`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

from .dynamics import DriveTerm
from .feasibility import FeasibilityParams
from .hilbert import AtomSpec, Coupling, ModeSpec, SpecError, StateVector, SystemSpec
from .protocol import (
    Interact,
    MeasureAtom,
    PrepareSuperposition,
    Protocol,
    Pulse,
    TimeExpr,
)

MAX_DIM = 4096

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_TOKEN = re.compile(r"\S+")
_TIME_CALL = re.compile(r"(half_rabi|quarter_rabi)\((\d+)\)\Z")


@dataclass(frozen=True)
class SourceSpan:
    line: int
    col_start: int
    col_end: int

    def __str__(self):
        return f"{self.line}:{self.col_start}-{self.col_end}"


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    message: str
    token: str = ""

    def __str__(self):
        tok = f" (at {self.token!r})" if self.token else ""
        return f"line {self.span.line}, col {self.span.col_start}: {self.message}{tok}"


class ParseFailure(ValueError):
    def __init__(self, errors: list[ParseError]):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


@dataclass(frozen=True)
class _Tok:
    text: str
    span: SourceSpan


class _Line:
    """Tokens of one directive line, with ``key=value`` options split out."""

    def __init__(self, lineno: int, toks: list[_Tok], errors: list[ParseError]):
        self.lineno = lineno
        self.toks = toks
        self.positional: list[_Tok] = []
        self.options: dict[str, tuple[str, _Tok]] = {}
        self.errors = errors
        for t in toks:
            if "=" in t.text:
                key, value = t.text.split("=", 1)
                if key in self.options:
                    self.err(t, f"duplicate option {key!r}")
                elif not key:
                    self.err(t, "option without a name")
                else:
                    self.options[key] = (value, t)
            else:
                self.positional.append(t)
        self.used: set[str] = set()

    @property
    def span(self) -> SourceSpan:
        first, last = self.toks[0].span, self.toks[-1].span
        return SourceSpan(self.lineno, first.col_start, last.col_end)

    def err(self, tok: Optional[_Tok], message: str) -> None:
        if tok is None:
            self.errors.append(ParseError(self.span, message, ""))
        else:
            self.errors.append(ParseError(tok.span, message, tok.text))

    def opt(self, key: str, required: bool = True) -> Optional[tuple[str, _Tok]]:
        self.used.add(key)
        if key in self.options:
            return self.options[key]
        if required:
            self.err(None, f"missing option {key}=...")
        return None

    def float_opt(self, key: str, required: bool = True, default: Optional[float] = None) -> Optional[float]:
        item = self.opt(key, required)
        if item is None:
            return default
        return _number(item[0], item[1], self)

    def finish(self) -> None:
        for key, (_, tok) in self.options.items():
            if key not in self.used:
                self.err(tok, f"unknown option {key!r}")


def _number(text: str, tok: _Tok, line: _Line) -> Optional[float]:
    try:
        x = float(text)
    except ValueError:
        line.err(tok, f"malformed number {text!r}")
        return None
    if not math.isfinite(x):
        line.err(tok, f"number must be finite, got {text!r}")
        return None
    return x


def _ident(tok: _Tok, line: _Line, what: str) -> Optional[str]:
    if not _IDENT.match(tok.text):
        line.err(tok, f"invalid {what} name")
        return None
    return tok.text


def _tokenize(text: str) -> list[tuple[int, list[_Tok]]]:
    out = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        body = raw.split("#", 1)[0]
        toks = [
            _Tok(m.group(), SourceSpan(lineno, m.start() + 1, m.end()))
            for m in _TOKEN.finditer(body)
        ]
        if toks:
            out.append((lineno, toks))
    return out


def _decode(data: Union[str, bytes], errors: list[ParseError]) -> str:
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data.count(b"\n", 0, exc.start) + 1
        col = exc.start - (data.rfind(b"\n", 0, exc.start) + 1) + 1
        errors.append(ParseError(SourceSpan(line, col, col), "input is not valid UTF-8"))
        return data.decode("utf-8", errors="replace")


def _parse_time(text: str, tok: _Tok, line: _Line) -> tuple[Optional[float], Optional[TimeExpr]]:
    m = _TIME_CALL.match(text)
    if m:
        return None, TimeExpr(m.group(1), int(m.group(2)))
    if text in ("pi_pulse", "half_pi_pulse"):
        return None, TimeExpr(text)
    x = _number(text, tok, line)
    if x is not None and x < 0:
        line.err(tok, "duration must be >= 0")
        return None, None
    return x, None


def _parse_coeffs(text: str, tok: _Tok, line: _Line) -> Optional[list[tuple[str, complex]]]:
    out = []
    for part in text.split(";"):
        fields = part.split(":")
        if len(fields) != 3 or not _IDENT.match(fields[0]):
            line.err(tok, f"measurement coefficient {part!r} is not level:re:im")
            return None
        re_, im = _number(fields[1], tok, line), _number(fields[2], tok, line)
        if re_ is None or im is None:
            return None
        out.append((fields[0], complex(re_, im)))
    return out


def parse_protocol(data: Union[str, bytes]) -> tuple[SystemSpec, Protocol]:
    """Parse a protocol file into its system and protocol.

    Raises :class:`ParseFailure` carrying every diagnostic found.
    """
    errors: list[ParseError] = []
    text = _decode(data, errors)
    lines = [_Line(n, toks, errors) for n, toks in _tokenize(text)]

    levels: list[tuple[str, _Line]] = []
    modes: list[tuple[ModeSpec, _Line]] = []
    couples: list[tuple[tuple, _Line]] = []
    init: Optional[tuple[str, _Line]] = None
    step_lines: list[_Line] = []

    for ln in lines:
        head = ln.toks[0]
        args = ln.positional[1:]
        if head.text == "level":
            if len(args) != 1:
                ln.err(None, "expected: level <id>")
            else:
                name = _ident(args[0], ln, "level")
                if name is not None:
                    levels.append((name, ln))
        elif head.text == "mode":
            nmax = ln.opt("nmax")
            if len(args) != 1:
                ln.err(None, "expected: mode <id> nmax=<int>")
            elif nmax is not None:
                name = _ident(args[0], ln, "mode")
                if not re.fullmatch(r"\d+", nmax[0]) or int(nmax[0]) < 1:
                    ln.err(nmax[1], "nmax must be an integer >= 1")
                elif name is not None:
                    modes.append((ModeSpec(name, int(nmax[0])), ln))
        elif head.text == "couple":
            g = ln.float_opt("g")
            if len(args) != 3:
                ln.err(None, "expected: couple <mode> <upper> <lower> g=<float>")
            elif g is not None:
                if g < 0:
                    ln.err(ln.options["g"][1], "g must be >= 0")
                else:
                    couples.append(((args[0], args[1], args[2], g), ln))
        elif head.text == "init":
            lvl = ln.opt("level")
            if args:
                ln.err(args[0], "unexpected argument")
            if init is not None:
                ln.err(head, "duplicate init directive")
            elif lvl is not None:
                init = (lvl[0], ln)
        elif head.text == "step":
            step_lines.append(ln)
            continue
        elif "=" in head.text:
            ln.err(head, "line must start with a directive")
        else:
            ln.err(head, f"unknown directive {head.text!r}")
        ln.finish()

    if not levels:
        errors.append(ParseError(SourceSpan(1, 1, 1), "no system defined (no level directives)"))
        raise ParseFailure(sorted(errors, key=_order))

    # system
    level_names: list[str] = []
    for name, ln in levels:
        if name in level_names:
            ln.err(ln.positional[1], f"duplicate level {name!r}")
        else:
            level_names.append(name)
    mode_specs: list[ModeSpec] = []
    for mode, ln in modes:
        if mode.id in [m.id for m in mode_specs]:
            ln.err(ln.positional[1], f"duplicate mode {mode.id!r}")
        else:
            mode_specs.append(mode)
    dim = len(level_names)
    for m in mode_specs:
        dim *= m.n_max + 1
        if dim > MAX_DIM:
            break
    if dim > MAX_DIM:
        errors.append(ParseError(SourceSpan(1, 1, 1), f"system dimension exceeds {MAX_DIM}"))
        raise ParseFailure(sorted(errors, key=_order))

    couplings: list[Coupling] = []
    for (mode_t, up_t, low_t, g), ln in couples:
        ok = True
        if mode_t.text not in [m.id for m in mode_specs]:
            ln.err(mode_t, f"unknown mode {mode_t.text!r}")
            ok = False
        for t in (up_t, low_t):
            if t.text not in level_names:
                ln.err(t, f"unknown level {t.text!r}")
                ok = False
        if ok and up_t.text == low_t.text:
            ln.err(low_t, "upper and lower level coincide")
            ok = False
        if ok and any((c.mode, c.upper, c.lower) == (mode_t.text, up_t.text, low_t.text) for c in couplings):
            ln.err(mode_t, "duplicate coupling")
            ok = False
        if ok:
            couplings.append(Coupling(mode_t.text, up_t.text, low_t.text, g))
    system = SystemSpec(AtomSpec(tuple(level_names)), tuple(mode_specs), tuple(couplings))

    initial = None
    if init is None:
        errors.append(ParseError(SourceSpan(1, 1, 1), "no initial state (init level=<id>)"))
    elif init[0] not in level_names:
        ln = init[1]
        ln.err(ln.options["level"][1], f"unknown level {init[0]!r}")
    else:
        initial = StateVector.basis(system, init[0])

    steps = [s for s in (_parse_step(ln, system) for ln in step_lines) if s is not None]
    if errors:
        raise ParseFailure(sorted(errors, key=_order))
    try:
        protocol = Protocol(system, initial, tuple(steps))
    except SpecError as exc:
        raise ParseFailure([ParseError(SourceSpan(1, 1, 1), str(exc))]) from None
    return system, protocol


def _order(e: ParseError):
    return (e.span.line, e.span.col_start)


def _level_ref(tok: _Tok, ln: _Line, system: SystemSpec) -> Optional[str]:
    if tok.text not in system.atom.levels:
        ln.err(tok, f"unknown level {tok.text!r}")
        return None
    return tok.text


def _parse_step(ln: _Line, system: SystemSpec):
    if len(ln.positional) < 2:
        ln.err(None, "expected: step <ramsey|interact|pulse|measure> ...")
        ln.used.update(ln.options)
        return None
    kind = ln.positional[1]
    args = ln.positional[2:]
    step = None
    if kind.text == "ramsey":
        phi = ln.float_opt("phi")
        if len(args) != 2:
            ln.err(None, "expected: step ramsey <l1> <l2> phi=<float>")
        else:
            l1, l2 = (_level_ref(t, ln, system) for t in args)
            if l1 and l2 and l1 == l2:
                ln.err(args[1], "superposition needs two distinct levels")
            elif l1 and l2 and phi is not None:
                step = PrepareSuperposition(l1, l2, phi)
    elif kind.text == "interact":
        modes = ln.opt("modes")
        t = ln.opt("t")
        if args:
            ln.err(args[0], "unexpected argument")
        if modes is not None and t is not None:
            ids = modes[0].split(",")
            bad = [i for i in ids if i not in system.mode_ids]
            for i in bad:
                ln.err(modes[1], f"unknown mode {i!r}")
            active = [c for c in system.couplings if c.mode in ids]
            if not bad and not active:
                ln.err(modes[1], "no couplings on the selected modes")
            duration, timing = _parse_time(t[0], t[1], ln)
            if not bad and active:
                if timing is not None and timing.kind not in TimeExpr.INTERACT_KINDS:
                    ln.err(t[1], f"{timing.kind} is only valid on pulse steps")
                elif timing is not None and len(active) != 1:
                    ln.err(t[1], f"{timing} is ambiguous: step has {len(active)} active couplings")
                elif timing is not None:
                    try:
                        duration = timing.resolve(active[0].g)
                    except ValueError as exc:
                        ln.err(t[1], str(exc))
                        duration = None
                if duration is not None:
                    step = Interact(tuple(ids), duration, timing)
    elif kind.text == "pulse":
        omega = ln.float_opt("omega")
        phase = ln.float_opt("phase", required=False, default=0.0)
        t = ln.opt("t")
        if len(args) != 2:
            ln.err(None, "expected: step pulse <upper> <lower> omega=<float> [phase=<float>] t=<time>")
        else:
            up, low = (_level_ref(a, ln, system) for a in args)
            if up and low and up == low:
                ln.err(args[1], "upper and lower level coincide")
                up = None
            if omega is not None and omega < 0:
                ln.err(ln.options["omega"][1], "omega must be >= 0")
                omega = None
            if up and low and omega is not None and phase is not None and t is not None:
                duration, timing = _parse_time(t[0], t[1], ln)
                if timing is not None and timing.kind not in TimeExpr.PULSE_KINDS:
                    ln.err(t[1], f"{timing.kind} is only valid on interaction steps")
                elif timing is not None:
                    try:
                        duration = timing.resolve(omega)
                    except ValueError as exc:
                        ln.err(t[1], str(exc))
                        duration = None
                if duration is not None:
                    step = Pulse(DriveTerm(up, low, omega, phase), duration, timing)
    elif kind.text == "measure":
        coeffs = ln.opt("coeffs")
        outcome = ln.opt("outcome")
        if args:
            ln.err(args[0], "unexpected argument")
        if outcome is not None and outcome[0] not in ("hit", "miss"):
            ln.err(outcome[1], "outcome must be hit or miss")
            outcome = None
        if coeffs is not None:
            pairs = _parse_coeffs(coeffs[0], coeffs[1], ln)
            if pairs is not None:
                levels = [l for l, _ in pairs]
                unknown = [l for l in levels if l not in system.atom.levels]
                for l in unknown:
                    ln.err(coeffs[1], f"unknown level {l!r}")
                if len(set(levels)) != len(levels):
                    ln.err(coeffs[1], "measurement repeats a level")
                elif not unknown and outcome is not None:
                    try:
                        step = MeasureAtom(tuple(pairs), outcome[0])
                    except SpecError as exc:
                        ln.err(coeffs[1], str(exc))
    else:
        ln.err(kind, f"unknown step kind {kind.text!r}")
        ln.used.update(ln.options)
    ln.finish()
    return step


# --- serialization ------------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def _time_text(step) -> str:
    return str(step.timing) if step.timing is not None else _num(step.duration)


def format_protocol(protocol: Protocol) -> str:
    """Render a protocol back into the line format (round-trips through :func:`parse_protocol`)."""
    sys_ = protocol.system
    out = [f"level {l}" for l in sys_.atom.levels]
    out += [f"mode {m.id} nmax={m.n_max}" for m in sys_.modes]
    out += [f"couple {c.mode} {c.upper} {c.lower} g={_num(c.g)}" for c in sys_.couplings]
    comps = protocol.initial.components(0.0)
    if len(comps) != 1 or any(comps[0][0].photons) or comps[0][1] != 1:
        raise ValueError("only protocols starting from a bare atomic level in vacuum can be written")
    out.append(f"init level={comps[0][0].level}")
    for s in protocol.steps:
        if isinstance(s, PrepareSuperposition):
            out.append(f"step ramsey {s.level1} {s.level2} phi={_num(s.phi)}")
        elif isinstance(s, Interact):
            out.append(f"step interact modes={','.join(s.couplings)} t={_time_text(s)}")
        elif isinstance(s, Pulse):
            d = s.drive
            out.append(
                f"step pulse {d.upper} {d.lower} omega={_num(d.rabi)} phase={_num(d.phase)} t={_time_text(s)}"
            )
        elif isinstance(s, MeasureAtom):
            coeffs = ";".join(f"{l}:{_num(c.real)}:{_num(c.imag)}" for l, c in s.projector)
            out.append(f"step measure coeffs={coeffs} outcome={s.keep_outcome}")
    return "\n".join(out) + "\n"


# --- feasibility parameters -----------------------------------------------------

_FEAS_KEYS = {
    "velocity": "atom_velocity",
    "atom_velocity": "atom_velocity",
    "cavity_length": "cavity_length",
    "atomic_lifetime": "atomic_lifetime",
    "cavity_lifetime": "cavity_lifetime",
}


def parse_feasibility_params(data: Union[str, bytes]) -> FeasibilityParams:
    """Parse ``key=value`` SI parameters plus ``couple <label> g=<rad/s>`` and
    ``drive omega=<rad/s>`` lines. Omitted values keep their defaults; listing
    any coupling replaces the default couplings."""
    errors: list[ParseError] = []
    text = _decode(data, errors)
    values: dict = {}
    couplings = []
    for lineno, toks in _tokenize(text):
        ln = _Line(lineno, toks, errors)
        head = toks[0]
        if head.text == "couple":
            g = ln.float_opt("g")
            if len(ln.positional) != 2:
                ln.err(None, "expected: couple <label> g=<float>")
            elif g is not None:
                couplings.append((ln.positional[1].text, g, ln))
        elif head.text == "drive":
            omega = ln.float_opt("omega")
            if len(ln.positional) != 1:
                ln.err(ln.positional[1], "unexpected argument")
            elif omega is not None:
                values["drive_si"] = (omega, ln)
        elif len(ln.positional) == 0 and len(ln.options) == 1:
            key = next(iter(ln.options))
            if key not in _FEAS_KEYS:
                ln.err(ln.options[key][1], f"unknown parameter {key!r}")
                ln.used.add(key)
            else:
                x = ln.float_opt(key)
                if x is not None:
                    values[_FEAS_KEYS[key]] = (x, ln)
        else:
            ln.err(head, "expected key=value, couple <label> g=..., or drive omega=...")
            ln.used.update(ln.options)
        ln.finish()
    for name, (x, ln) in values.items():
        if x <= 0:
            ln.err(None, f"{name} must be positive")
    for label, g, ln in couplings:
        if g <= 0:
            ln.err(None, f"coupling {label}: g must be positive")
    if errors:
        raise ParseFailure(sorted(errors, key=_order))
    kwargs = {k: v for k, (v, _) in values.items()}
    if couplings:
        kwargs["couplings_si"] = tuple((label, g) for label, g, _ in couplings)
    return FeasibilityParams(**kwargs)

"""
Composite Hilbert-space bookkeeping for one multi-level atom and a set of
photon-truncated cavity modes.

Basis order is level-major, then mode occupations in lexicographic order
(last mode varies fastest). For levels ``a, b, c`` and two modes with
``n_max=1`` the order is::

    |a,0,0> |a,0,1> |a,1,0> |a,1,1> |b,0,0> ... |c,1,1>

An atom with no levels is allowed and means "no atomic factor"; such
mode-only spaces hold field states once the atom has been projected out.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Optional, Sequence, Union

import numpy as np

NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-12

ATOM = "atom"


class SpecError(ValueError):
    """Raised for an inconsistent system description."""


@dataclass(frozen=True)
class AtomSpec:
    levels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        for name in self.levels:
            if not isinstance(name, str) or not name:
                raise SpecError(f"level names must be nonempty strings, got {name!r}")
        if len(set(self.levels)) != len(self.levels):
            raise SpecError(f"duplicate level names in {self.levels}")

    @property
    def dim(self) -> int:
        return len(self.levels)

    def index(self, level: str) -> int:
        try:
            return self.levels.index(level)
        except ValueError:
            raise SpecError(f"unknown level {level!r}") from None


@dataclass(frozen=True)
class ModeSpec:
    id: str
    n_max: int = 2

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise SpecError(f"mode id must be a nonempty string, got {self.id!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise SpecError(f"mode {self.id}: n_max must be an integer >= 1, got {self.n_max!r}")


@dataclass(frozen=True)
class Coupling:
    """Jaynes-Cummings coupling of one mode to the ``upper <-> lower`` transition."""

    mode: str
    upper: str
    lower: str
    g: float

    def __post_init__(self):
        if self.upper == self.lower:
            raise SpecError(f"coupling on mode {self.mode}: upper and lower level coincide")
        if not np.isfinite(self.g) or self.g < 0:
            raise SpecError(f"coupling on mode {self.mode}: g must be finite and >= 0, got {self.g!r}")

    @property
    def label(self) -> str:
        return f"{self.mode}:{self.upper}:{self.lower}"


@dataclass(frozen=True)
class SystemSpec:
    atom: AtomSpec
    modes: tuple[ModeSpec, ...] = ()
    couplings: tuple[Coupling, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        ids = [m.id for m in self.modes]
        if len(set(ids)) != len(ids):
            raise SpecError(f"duplicate mode ids in {ids}")
        seen = set()
        for c in self.couplings:
            if c.mode not in ids:
                raise SpecError(f"coupling {c.label} references unknown mode {c.mode!r}")
            for lvl in (c.upper, c.lower):
                if lvl not in self.atom.levels:
                    raise SpecError(f"coupling {c.label} references unknown level {lvl!r}")
            key = (c.mode, c.upper, c.lower)
            if key in seen:
                raise SpecError(f"duplicate coupling {c.label}")
            seen.add(key)

    @property
    def mode_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.modes)

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return tuple(m.n_max + 1 for m in self.modes)

    @property
    def dim(self) -> int:
        return max(self.atom.dim, 1) * int(np.prod(self.mode_dims, dtype=int))

    @property
    def shape(self) -> tuple[int, ...]:
        """Tensor shape of an amplitude vector: (L, d_1, ..., d_M), atom axis dropped when L == 0."""
        if self.atom.dim:
            return (self.atom.dim,) + self.mode_dims
        return self.mode_dims

    def mode_index(self, mode_id: str) -> int:
        try:
            return self.mode_ids.index(mode_id)
        except ValueError:
            raise SpecError(f"unknown mode {mode_id!r}") from None

    def resolve_couplings(self, ids: Iterable[str]) -> tuple[Coupling, ...]:
        """Map coupling ids to couplings.

        An id is either a full label ``mode:upper:lower`` or a bare mode id,
        which selects every coupling on that mode.
        """
        out = []
        for key in ids:
            matched = [c for c in self.couplings if c.label == key or c.mode == key]
            if not matched:
                raise SpecError(f"unknown coupling {key!r}")
            out.extend(c for c in matched if c not in out)
        return tuple(out)

    def with_coupling_g(self, key: str, g: float) -> "SystemSpec":
        targets = self.resolve_couplings([key])
        couplings = tuple(
            Coupling(c.mode, c.upper, c.lower, g) if c in targets else c for c in self.couplings
        )
        return SystemSpec(self.atom, self.modes, couplings)

    def field_space(self) -> "SystemSpec":
        """Mode-only space with the same modes and no atomic factor."""
        return SystemSpec(AtomSpec(()), self.modes, ())


@dataclass(frozen=True)
class BasisState:
    level: Optional[str]
    photons: tuple[int, ...]

    def label(self) -> str:
        parts = ([self.level] if self.level is not None else []) + [str(n) for n in self.photons]
        return ",".join(parts)


@lru_cache(maxsize=256)
def _basis(spec: SystemSpec) -> tuple[BasisState, ...]:
    occupations = list(itertools.product(*(range(d) for d in spec.mode_dims)))
    levels: Sequence[Optional[str]] = spec.atom.levels or (None,)
    return tuple(BasisState(lvl, occ) for lvl in levels for occ in occupations)


@lru_cache(maxsize=256)
def _index(spec: SystemSpec) -> dict:
    return {b: i for i, b in enumerate(_basis(spec))}


def build_basis(spec: SystemSpec) -> list[BasisState]:
    """Enumerate the composite basis in level-major, occupation-lexicographic order."""
    return list(_basis(spec))


def basis_index(spec: SystemSpec, state: BasisState) -> int:
    try:
        return _index(spec)[state]
    except KeyError:
        raise SpecError(f"basis state {state} is not valid for this system") from None


def basis_labels(spec: SystemSpec) -> list[str]:
    return [b.label() for b in _basis(spec)]


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state over ``system``'s composite basis."""

    system: SystemSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (self.system.dim,):
            raise SpecError(f"expected {self.system.dim} amplitudes, got {amps.shape[0]}")
        norm = np.linalg.norm(amps)
        if not np.isfinite(norm) or abs(norm - 1.0) > NORM_TOL:
            raise SpecError(f"state is not normalized (norm={norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return self.system == other.system and np.array_equal(self.amplitudes, other.amplitudes)

    __hash__ = None

    @classmethod
    def from_array(cls, system: SystemSpec, amps) -> "StateVector":
        """Normalize ``amps`` and wrap it."""
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if not np.isfinite(norm) or norm == 0.0:
            raise SpecError("cannot normalize a zero (or non-finite) vector")
        return cls(system, amps / norm)

    @classmethod
    def basis(cls, system: SystemSpec, level: Optional[str], photons: Sequence[int] = None) -> "StateVector":
        if photons is None:
            photons = (0,) * len(system.modes)
        amps = np.zeros(system.dim, dtype=complex)
        amps[basis_index(system, BasisState(level, tuple(photons)))] = 1.0
        return cls(system, amps)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.system.shape)

    def amplitude(self, level: Optional[str], photons: Sequence[int]) -> complex:
        return complex(self.amplitudes[basis_index(self.system, BasisState(level, tuple(photons)))])

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def components(self, tol: float = 1e-12) -> list[tuple[BasisState, complex]]:
        return [(b, complex(a)) for b, a in zip(_basis(self.system), self.amplitudes) if abs(a) > tol]

    def __repr__(self):
        terms = " + ".join(f"({a:.6g})|{b.label()}>" for b, a in self.components(1e-9))
        return f"StateVector({terms or '0'})"


def state_from_components(
    spec: SystemSpec, components: Iterable[tuple[Union[BasisState, tuple], complex]]
) -> StateVector:
    """Build a normalized state from ``(basis_state, coefficient)`` pairs.

    Repeated basis states are summed. A basis state may also be given as a
    plain ``(level, photons)`` tuple.
    """
    amps = np.zeros(spec.dim, dtype=complex)
    for key, coeff in components:
        if not isinstance(key, BasisState):
            level, photons = key
            key = BasisState(level, tuple(photons))
        amps[basis_index(spec, key)] += coeff
    return StateVector.from_array(spec, amps)


def inner_product(x: StateVector, y: StateVector) -> complex:
    """<x|y>, conjugate-linear in ``x``."""
    if x.system != y.system:
        raise SpecError("inner product between states on different bases")
    return complex(np.vdot(x.amplitudes, y.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Reduced density matrix; ``subsystems`` names the kept factors in order."""

    matrix: np.ndarray
    subsystems: tuple[str, ...] = ()
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise SpecError(f"density matrix must be square, got shape {rho.shape}")
        if not np.allclose(rho, rho.conj().T, rtol=0, atol=HERMITIAN_TOL):
            raise SpecError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > NORM_TOL:
            raise SpecError(f"density matrix trace is {np.trace(rho).real!r}, expected 1")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)
        if not self.dims:
            object.__setattr__(self, "dims", (rho.shape[0],))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        v = state.amplitudes
        return cls(np.outer(v, v.conj()), dims=(len(v),))


def partial_trace(state: StateVector, keep: Iterable[str], proper: bool = False) -> DensityMatrix:
    """Reduced density matrix of the subsystems named in ``keep``.

    Subsystem names are ``"atom"`` and mode ids. Kept factors appear in
    system order regardless of the order given. With ``proper=True`` an
    empty or complete selection is rejected.
    """
    spec = state.system
    names = ([ATOM] if spec.atom.dim else []) + list(spec.mode_ids)
    keep = set(keep)
    unknown = keep - set(names)
    if unknown:
        raise SpecError(f"unknown subsystems {sorted(unknown)}")
    if proper and (not keep or keep == set(names)):
        raise SpecError("selector must name a proper, nonempty subset of subsystems")
    kept_axes = [i for i, n in enumerate(names) if n in keep]
    traced_axes = [i for i, n in enumerate(names) if n not in keep]
    psi = state.tensor.transpose(kept_axes + traced_axes)
    shape = spec.shape
    d_keep = int(np.prod([shape[i] for i in kept_axes], dtype=int))
    psi = psi.reshape(d_keep, -1)
    rho = psi @ psi.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(
        rho,
        subsystems=tuple(names[i] for i in kept_axes),
        dims=tuple(shape[i] for i in kept_axes),
    )


def mode_occupation_leakage(state: StateVector, limit: int = 1) -> float:
    """Total probability on basis states where some mode holds more than ``limit`` photons."""
    spec = state.system
    probs = np.abs(state.amplitudes) ** 2
    return float(sum(p for b, p in zip(_basis(spec), probs) if any(n > limit for n in b.photons)))

"""Interaction-picture Hamiltonians, exact propagation and closed-form two-mode amplitudes.

Units are natural (hbar = 1): couplings and Rabi frequencies are angular
rates, durations are in the reciprocal time unit.

Conventions
-----------
Cavity coupling ``g`` on mode ``k`` between ``upper`` and ``lower``::

    g * (a_k |upper><lower| + a_k^dag |lower><upper|)

Classical drive with Rabi frequency ``omega`` and phase ``theta``::

    (omega / 2) * (e^{i theta} |upper><lower| + e^{-i theta} |lower><upper|)

so a drive held for ``pi / omega`` is a pi pulse (full transfer). States
evolve as ``exp(-i H t) |psi>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .hilbert import (
    HERMITIAN_TOL,
    NORM_TOL,
    BasisState,
    SpecError,
    StateVector,
    SystemSpec,
    _basis,
    _index,
)


@dataclass(frozen=True)
class DriveTerm:
    upper: str
    lower: str
    rabi: float
    phase: float = 0.0

    def __post_init__(self):
        if self.upper == self.lower:
            raise SpecError("drive upper and lower level coincide")
        if not np.isfinite(self.rabi) or self.rabi < 0:
            raise SpecError(f"drive Rabi frequency must be finite and >= 0, got {self.rabi!r}")
        if not np.isfinite(self.phase):
            raise SpecError("drive phase must be finite")


@dataclass(frozen=True)
class TwoModeAmplitudes:
    c_a00: complex
    c_c10: complex
    c_b00: complex
    c_c01: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.c_a00, self.c_c10, self.c_b00, self.c_c01], dtype=complex)


def build_hamiltonian(
    spec: SystemSpec,
    active_couplings: Iterable[str] = (),
    drives: Sequence[DriveTerm] = (),
) -> np.ndarray:
    """Dense Hamiltonian over ``spec``'s basis with the chosen couplings and drives switched on.

    ``active_couplings`` holds coupling labels or bare mode ids (see
    :meth:`SystemSpec.resolve_couplings`). Creation on a mode already at
    ``n_max`` is dropped, so the truncated operator stays Hermitian.
    """
    couplings = spec.resolve_couplings(active_couplings)
    for d in drives:
        spec.atom.index(d.upper)
        spec.atom.index(d.lower)

    basis = _basis(spec)
    index = _index(spec)
    H = np.zeros((spec.dim, spec.dim), dtype=complex)

    for c in couplings:
        k = spec.mode_index(c.mode)
        for i, b in enumerate(basis):
            # a_k |upper><lower| : |lower, n> -> sqrt(n) |upper, n-1>
            if b.level != c.lower or b.photons[k] == 0:
                continue
            n = b.photons[k]
            photons = b.photons[:k] + (n - 1,) + b.photons[k + 1 :]
            j = index[BasisState(c.upper, photons)]
            H[j, i] += c.g * np.sqrt(n)
            H[i, j] += c.g * np.sqrt(n)

    for d in drives:
        w = 0.5 * d.rabi * np.exp(1j * d.phase)
        for i, b in enumerate(basis):
            if b.level != d.lower:
                continue
            j = index[BasisState(d.upper, b.photons)]
            H[j, i] += w
            H[i, j] += np.conj(w)
    return H


def _check_hermitian(H: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if np.max(np.abs(H - H.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise SpecError("Hamiltonian is not Hermitian")


def propagator(H: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) via eigendecomposition of each coupled block of ``H``.

    Basis states untouched by ``H`` are left alone; the rest split into
    connected blocks that are diagonalized independently.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise SpecError(f"Hamiltonian must be square, got shape {H.shape}")
    _check_hermitian(H)
    if t < 0 or not np.isfinite(t):
        raise SpecError(f"duration must be finite and >= 0, got {t!r}")
    dim = H.shape[0]
    U = np.eye(dim, dtype=complex)
    if t == 0:
        return U
    n_blocks, labels = connected_components(np.abs(H) > 0, directed=False)
    for blk in range(n_blocks):
        idx = np.flatnonzero(labels == blk)
        sub = H[np.ix_(idx, idx)]
        if len(idx) == 1 and sub[0, 0] == 0:
            continue
        sub = 0.5 * (sub + sub.conj().T)
        w, V = np.linalg.eigh(sub)
        U[np.ix_(idx, idx)] = (V * np.exp(-1j * w * t)) @ V.conj().T
    return U


def evolve(state: StateVector, H: np.ndarray, t: float) -> StateVector:
    """Return exp(-i H t)|state>."""
    if np.shape(H) != (state.system.dim, state.system.dim):
        raise SpecError(f"Hamiltonian shape {np.shape(H)} does not match state dimension {state.system.dim}")
    out = propagator(H, t) @ state.amplitudes
    norm = np.linalg.norm(out)
    if abs(norm - 1.0) > NORM_TOL:
        raise SpecError(f"propagation lost normalization (norm={norm!r})")
    return StateVector(state.system, out)


def excitation_operator(spec: SystemSpec, drives: Sequence[DriveTerm] = ()) -> np.ndarray:
    """Diagonal of N = total photon number + projector on every upper level of a coupling or drive."""
    uppers = {c.upper for c in spec.couplings} | {d.upper for d in drives}
    return np.array(
        [sum(b.photons) + (1 if b.level in uppers else 0) for b in _basis(spec)],
        dtype=float,
    )


def expected_excitation(state: StateVector, drives: Sequence[DriveTerm] = ()) -> float:
    n = excitation_operator(state.system, drives)
    return float(np.dot(n, np.abs(state.amplitudes) ** 2))


def analytic_two_mode_amplitudes(g1: float, g2: float, phi: float, t: float) -> TwoModeAmplitudes:
    """Closed-form amplitudes of |a,0,0>, |c,1,0>, |b,0,0>, |c,0,1> for the Ramsey-prepared
    atom, with both modes resonant from time 0."""
    s = 1 / np.sqrt(2)
    e = np.exp(1j * phi)
    return TwoModeAmplitudes(
        c_a00=complex(s * np.cos(g1 * t)),
        c_c10=complex(-1j * s * np.sin(g1 * t)),
        c_b00=complex(s * e * np.cos(g2 * t)),
        c_c01=complex(-1j * s * e * np.sin(g2 * t)),
    )


def analytic_pc(g1: float, g2: float, t: float) -> float:
    """Probability of finding the atom in |c> after time ``t``."""
    return float(0.5 * (np.sin(g1 * t) ** 2 + np.sin(g2 * t) ** 2))

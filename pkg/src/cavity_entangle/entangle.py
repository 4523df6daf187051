"""Bell / GHZ target states and entanglement measures for field states."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .hilbert import (
    NORM_TOL,
    AtomSpec,
    BasisState,
    DensityMatrix,
    ModeSpec,
    SpecError,
    StateVector,
    SystemSpec,
    _basis,
    basis_index,
)
from .protocol import ghz_mode_ids

BELL_VARIANTS = ("psi_plus", "psi_minus", "phi_plus", "phi_minus")
EIG_CLAMP = 1e-12


@dataclass(frozen=True)
class TargetState:
    name: str
    vector: StateVector


def _field_space(mode_ids: Sequence[str]) -> SystemSpec:
    return SystemSpec(AtomSpec(()), tuple(ModeSpec(m, 1) for m in mode_ids), ())


def _two_component(name, mode_ids, ket0, ket1, c1) -> TargetState:
    space = _field_space(mode_ids)
    amps = np.zeros(space.dim, dtype=complex)
    amps[basis_index(space, BasisState(None, ket0))] = 1 / math.sqrt(2)
    amps[basis_index(space, BasisState(None, ket1))] = c1 / math.sqrt(2)
    return TargetState(name, StateVector(space, amps))


def bell_state(variant: str, phi: float = 0.0, mode_ids: Sequence[str] = ("A", "B")) -> TargetState:
    """Two-mode Bell state on the {0, 1} photon sector.

    ``psi_plus``/``psi_minus`` are (|1,0> +- e^{i phi}|0,1>)/sqrt(2): the phase
    rides on the branch with the photon in the second mode, where the Ramsey
    phase of the b level ends up. ``phi_plus``/``phi_minus`` are
    (|0,0> +- |1,1>)/sqrt(2) and take no phase.
    """
    if variant not in BELL_VARIANTS:
        raise ValueError(f"unknown Bell variant {variant!r}; expected one of {BELL_VARIANTS}")
    if len(mode_ids) != 2:
        raise ValueError(f"Bell states live on two modes, got {len(mode_ids)}")
    sign = 1.0 if variant.endswith("plus") else -1.0
    if variant.startswith("psi"):
        return _two_component(variant, mode_ids, (1, 0), (0, 1), sign * np.exp(1j * phi))
    if phi != 0:
        raise ValueError(f"{variant} does not take a phase")
    return _two_component(variant, mode_ids, (0, 0), (1, 1), sign)


def ghz_state(n_modes: int, sign: str = "plus", mode_ids: Optional[Sequence[str]] = None) -> TargetState:
    if int(n_modes) != n_modes or n_modes < 2:
        raise ValueError(f"GHZ state needs n_modes >= 2, got {n_modes!r}")
    if sign not in ("plus", "minus"):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    mode_ids = tuple(mode_ids) if mode_ids is not None else ghz_mode_ids(n_modes)
    if len(mode_ids) != n_modes:
        raise ValueError("mode_ids length does not match n_modes")
    s = 1.0 if sign == "plus" else -1.0
    return _two_component(f"ghz{n_modes}_{sign}", mode_ids, (0,) * n_modes, (1,) * n_modes, s)


def target_from_name(name: str, n_modes: int = 2, mode_ids: Optional[Sequence[str]] = None) -> TargetState:
    """Parse ``psi_plus``, ``psi_minus(1.047)``, ``phi_minus``, ``ghz_plus``, ``ghz3_minus``."""
    name = name.strip()
    phi = 0.0
    base = name
    if name.endswith(")") and "(" in name:
        base, arg = name[:-1].split("(", 1)
        try:
            phi = float(arg)
        except ValueError:
            raise ValueError(f"bad phase in target {name!r}") from None
    if base in BELL_VARIANTS:
        return bell_state(base, phi, mode_ids or ("A", "B"))
    if base.startswith("ghz") and base.rsplit("_", 1)[-1] in ("plus", "minus"):
        count, sign = base[3:].rsplit("_", 1)
        n = int(count.rstrip("_")) if count.rstrip("_") else n_modes
        return ghz_state(n, sign, mode_ids)
    raise ValueError(f"unknown target {name!r}")


def _embed(target: StateVector, space: SystemSpec) -> np.ndarray:
    """Target amplitudes expressed in ``space``'s basis; modes are matched by position."""
    tspace = target.system
    if tspace.atom.dim or space.atom.dim:
        raise SpecError("fidelity needs mode-only states (project the atom out first)")
    if len(tspace.modes) != len(space.modes):
        raise SpecError(f"target has {len(tspace.modes)} modes, state has {len(space.modes)}")
    out = np.zeros(space.dim, dtype=complex)
    for b, a in zip(_basis(tspace), target.amplitudes):
        if a == 0:
            continue
        if any(n > m.n_max for n, m in zip(b.photons, space.modes)):
            raise SpecError("target occupation exceeds the state's photon truncation")
        out[basis_index(space, b)] = a
    return out


def fidelity(state: StateVector, target) -> float:
    """|<target|state>|^2 for a mode-only state."""
    tvec = target.vector if isinstance(target, TargetState) else target
    overlap = np.vdot(_embed(tvec, state.system), state.amplitudes)
    return float(min(1.0, abs(overlap) ** 2))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in bits; eigenvalues below 1e-12 count as zero."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if abs(np.trace(m).real - 1.0) > NORM_TOL:
        raise ValueError(f"density matrix trace is {np.trace(m).real!r}, expected 1")
    lam = np.linalg.eigvalsh(m)
    lam = lam[lam > EIG_CLAMP]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


_SIGMA_YY = np.array(
    [[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex
)


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    Rank-one input uses |<psi*| sy x sy |psi>| directly; the general
    spectrum formula loses ~sqrt(eps) accuracy on the vanishing eigenvalues.
    """
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if m.shape != (4, 4):
        raise ValueError(f"concurrence needs a 4x4 density matrix, got shape {m.shape}")
    w, V = np.linalg.eigh(m)
    if w[-2] < EIG_CLAMP:
        psi = V[:, -1]
        return float(min(1.0, abs(psi @ _SIGMA_YY @ psi)))
    rho_tilde = _SIGMA_YY @ m.conj() @ _SIGMA_YY
    lam = np.sqrt(np.clip(np.linalg.eigvals(m @ rho_tilde).real, 0.0, None))
    lam = np.sort(lam)[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def qubit_sector(rho: DensityMatrix) -> DensityMatrix:
    """Restrict a two-mode density matrix to the {0,1} x {0,1} photon sector."""
    if len(rho.dims) != 2:
        raise ValueError("expected a two-mode density matrix")
    d1, d2 = rho.dims
    idx = [i * d2 + j for i in range(2) for j in range(2)]
    sub = rho.matrix[np.ix_(idx, idx)]
    tr = np.trace(sub).real
    if tr <= 0:
        raise ValueError("no weight in the {0,1} photon sector")
    return DensityMatrix(sub / tr, rho.subsystems, (2, 2))


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))


def entropy_from_concurrence(c: float) -> float:
    """Entanglement entropy of a pure two-qubit state with concurrence ``c``."""
    return binary_entropy((1 + math.sqrt(max(0.0, 1 - c * c))) / 2)

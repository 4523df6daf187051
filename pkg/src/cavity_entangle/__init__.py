"""Cavity-QED simulator for engineering Bell and GHZ states between cavity field modes."""

from .dynamics import (
    DriveTerm,
    analytic_pc,
    analytic_two_mode_amplitudes,
    build_hamiltonian,
    evolve,
)
from .entangle import bell_state, concurrence, fidelity, ghz_state, von_neumann_entropy
from .feasibility import FeasibilityParams, check_budget, transit_time
from .hilbert import (
    AtomSpec,
    BasisState,
    Coupling,
    DensityMatrix,
    ModeSpec,
    StateVector,
    SystemSpec,
    build_basis,
    inner_product,
    partial_trace,
    state_from_components,
)
from .lang import format_protocol, parse_protocol
from .protocol import (
    Interact,
    MeasureAtom,
    PrepareSuperposition,
    Protocol,
    Pulse,
    apply_step,
    build_bell_protocol,
    build_ghz_protocol,
    equal_amplitude_times,
    half_pi_pulse_time,
    half_rabi_time,
    pi_pulse_time,
    quarter_rabi_time,
    run_protocol,
)
from .results import SweepConfig, emit_result_json, run_sweep

__version__ = "0.1.0"

"""Simulator for an optical-to-microwave single-photon transducer.

A photon is stored in a spin ensemble inside an optical ring cavity by
impedance-matched EIT, then handed to a superconducting qubit through a
microwave cavity by an adiabatic sweep or by resonant π pulses. Frequencies
are in units of the qubit-cavity coupling G, times in units of 1/G.
"""

from .analytics import (EigenDecomposition, adiabaticity_margin, asymptotic_stats, dicke_overlap,
                        eigs_full, eigs_reduced, eit_dark_amplitude, eit_max_efficiency, eit_output_field,
                        mismatch_bound, pi_pulse_q)
from .control import (PhotonEnvelope, Schedule, Segment, impedance_matched_control, linear_sweep,
                      project_photon, sech_envelope, staggered_pi)
from .dynamics import AmplitudeState, MwState, eit_rhs, eit_system, full_rhs, full_system, mw_rhs, mw_system, norm2
from .integrator import IntegrationError, IntegratorConfig, Trajectory, integrate
from .model import (Ensemble, EnsembleSpec, FieldGrid, PhysicalParams, build_ensemble, build_field_grid,
                    cooperativity)
from .presets import preset, preset_names, preset_run
from .scan import (FidelityStats, Protocol, ProtocolRun, PhotonSettings, ScanResult, compare_protocols,
                   run_protocol, run_scan)

__version__ = "0.1.0"

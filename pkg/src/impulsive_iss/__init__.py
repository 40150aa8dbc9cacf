"""Impulsive systems with and without delays: simulation and ISS certificate checks."""
from .core import BlockVector, HistorySegment, KFunction, RateCoeffs, Trajectory, eval_history
from .dsl import eval_expr, load_model, parse_expr, parse_model, validate_model
from .dwell import (DwellParams, ImpulseSequence, adt_supremum, count_impulses,
                    generate_sequence, in_class)
from .kernels import BACKEND
from .lyapunov import (CompositeCertificate, ExpLyapCertificate, SubsystemCert, ViolationReport,
                       check_flow, check_jump, check_krasovskii, check_razumikhin, compose,
                       iss_envelope, theorem_gate)
from .sim import SimConfig, simulate
from .smallgain import GainMatrix, check_smallgain, find_scaling_vector, max_cycle_mean

__version__ = "0.1.0"

"""
dollardlab: desk-scale numerics for long-range scattering.

Hamiltonian symbols and model contracts (:mod:`.symbols`), classical flows,
asymptotes and wave maps (:mod:`.flow`), Dollard-type phases
(:mod:`.phase`), split-step Schrodinger propagation (:mod:`.propagator`),
coherent-state wave-front probes (:mod:`.wavefront`) and the experiment
suites behind the command-line tool (:mod:`.experiments`, :mod:`.cli`).
"""
import logging

from .errors import *  # noqa: F401,F403
from .flow import *  # noqa: F401,F403
from .phase import *  # noqa: F401,F403
from .propagator import *  # noqa: F401,F403
from .symbols import *  # noqa: F401,F403
from .wavefront import *  # noqa: F401,F403
from .experiments import ExperimentConfig, SuiteResult, audit_config, emit_report, load_config, run_suite  # noqa: F401

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

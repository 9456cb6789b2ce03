"""Pareto curves of string diagrams of open MDPs, computed compositionally."""

from .compositional import (CurveCache, HierarchicalScheduler, approx_multiobj_sd, check_single_exit,
                            compose_error_bounds, compose_step, measure_error)
from .diagram import Leaf, Seq, Sum, Trace, build_layout, dsum, normalize, semantics, seq, type_check
from .errors import ArityError, InvariantError, ModelError, ResourceCapError, SdpError
from .geometry import LowerSet, UpperSet, gap
from .model import Arity, Mdp, OpenMdp, Scheduler, exit_reach, validate_omdp
from .multiobj import SoundApproximation, approx_multiobj
from .shortcut import Signature, recover_scheduler, shortcut_from_lower, shortcut_from_points, shortcut_from_upper
from .solve import max_reach, solve_reach

__version__ = "0.1.0"

__all__ = [
    "Arity", "ArityError", "CurveCache", "HierarchicalScheduler", "InvariantError", "Leaf", "LowerSet", "Mdp",
    "ModelError", "OpenMdp", "ResourceCapError", "Scheduler", "SdpError", "Seq", "Signature",
    "SoundApproximation", "Sum", "Trace", "UpperSet", "approx_multiobj", "approx_multiobj_sd", "build_layout",
    "check_single_exit", "compose_error_bounds", "compose_step", "dsum", "exit_reach", "gap", "max_reach",
    "measure_error", "normalize", "recover_scheduler", "semantics", "seq", "shortcut_from_lower",
    "shortcut_from_points", "shortcut_from_upper", "solve_reach", "type_check", "validate_omdp",
]

"""Hybrid kinodynamic MPC for retargeting quadruped locomotion roll-outs."""

from .config import RunConfig, load_robot, load_run_config
from .hkd_model import ContactMode, RobotParams
from .hsddp import Solution, SolverConfig, SolverFailure, solve
from .mpc_runtime import MpcController
from .reference import ContactSchedule, ReferenceTrajectory, load_rollout, synth_gait

__version__ = "0.1.0"

__all__ = [
    "ContactMode",
    "ContactSchedule",
    "MpcController",
    "ReferenceTrajectory",
    "RobotParams",
    "RunConfig",
    "Solution",
    "SolverConfig",
    "SolverFailure",
    "load_robot",
    "load_rollout",
    "load_run_config",
    "solve",
    "synth_gait",
]

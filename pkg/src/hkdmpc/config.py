"""TOML loading for robot descriptions and run configurations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .cost import CostWeights
from .hkd_model import RobotParams, box_inertia
from .hsddp import SolverConfig
from .leg_control import LegControlConfig

CONFIG_DIR = Path(__file__).parent / "configs"
SHIPPED_ROBOTS = ("mini_cheetah", "a1", "laikago")


class ConfigError(ValueError):
    """Invalid or missing configuration; maps to a usage error on the CLI."""


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def resolve_robot_path(name_or_path: str | Path, base: Path | None = None) -> Path:
    """Shipped robot name, or a path (relative paths resolve against ``base``)."""
    text = str(name_or_path)
    if text in SHIPPED_ROBOTS:
        return CONFIG_DIR / f"{text}.toml"
    path = Path(text)
    if not path.is_absolute() and base is not None:
        path = base / path
    return path


def robot_from_dict(data: dict) -> RobotParams:
    try:
        body = data["body"]
        legs = data["legs"]
        mass = float(body["mass"])
        if "inertia" in body:
            inertia = np.asarray(body["inertia"], dtype=float)
            if inertia.shape == (3,):
                inertia = np.diag(inertia)
        else:
            inertia = box_inertia(mass, *body["dimensions"])
        kwargs = dict(
            mass=mass,
            body_inertia=inertia,
            hip_offsets=np.asarray(legs["hip_offsets"], dtype=float),
            link_lengths=np.asarray(legs["link_lengths"], dtype=float),
            friction_mu=float(data.get("contact", {}).get("friction_mu", 0.6)),
            name=str(data.get("name", "robot")),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"robot config missing or malformed field: {exc}") from None
    if "default_swing_q" in legs:
        kwargs["default_swing_q"] = np.asarray(legs["default_swing_q"], dtype=float)
    if "nominal_height" in body:
        kwargs["nominal_height"] = float(body["nominal_height"])
    try:
        return RobotParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid robot config: {exc}") from None


def load_robot(name_or_path: str | Path, base: Path | None = None) -> RobotParams:
    return robot_from_dict(_read_toml(resolve_robot_path(name_or_path, base)))


def _build(cls, section: dict, where: str):
    known = {f.name for f in fields(cls) if f.init}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


@dataclass(frozen=True)
class ReferenceSpec:
    """Where the reference comes from: a roll-out CSV or a synthetic gait.

    ``robot`` names the morphology the synthetic reference is generated for;
    empty means the planner robot.
    """

    source: str = "synthetic"
    path: str = ""
    gait: str = "trot"
    speed: float = 0.5  # m/s
    yaw_rate: float = 0.0  # rad/s
    period: float = 0.4  # s
    duty: float = 0.5
    robot: str = ""
    swing_height: float = 0.06  # m

    def __post_init__(self) -> None:
        if self.source not in ("synthetic", "file"):
            raise ValueError(f"reference source must be 'synthetic' or 'file', got {self.source!r}")
        if self.source == "file" and not self.path:
            raise ValueError("file reference needs a path")


@dataclass(frozen=True)
class ScalingSpec:
    enabled: bool = False
    vel_scale: float = 1.0
    height_cap: float = math.inf  # m
    axis_scale: tuple | None = None


@dataclass(frozen=True)
class RunConfig:
    robot: RobotParams
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    scaling: ScalingSpec = field(default_factory=ScalingSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    cost: CostWeights = field(default_factory=CostWeights)
    leg_control: LegControlConfig = field(default_factory=LegControlConfig)
    truth: object = None
    duration: float = 10.0  # s
    policy_lag: float = 0.006  # s
    seed: int = 0
    deterministic: bool = True
    output_dir: str = "runs/out"
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self) -> None:
        if self.truth is None:
            from .sim import TruthParams

            object.__setattr__(self, "truth", TruthParams())
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.policy_lag < 0:
            raise ConfigError("policy_lag must be nonnegative")


def run_config_from_dict(data: dict, base_dir: Path | None = None) -> RunConfig:
    from .sim import TruthParams

    base_dir = Path.cwd() if base_dir is None else base_dir
    data = dict(data)
    robot = load_robot(data.pop("robot", "mini_cheetah"), base_dir)
    ref = _build(ReferenceSpec, data.pop("reference", {}), "reference")
    if ref.source == "file" and not resolve_robot_path(ref.path, base_dir).exists():
        raise ConfigError(f"reference file not found: {ref.path}")
    scal = dict(data.pop("scaling", {}))
    if scal:
        scal.setdefault("enabled", True)
        if "axis_scale" in scal:
            scal["axis_scale"] = tuple(float(a) for a in scal["axis_scale"])
    scaling = _build(ScalingSpec, scal, "scaling")
    solver = _build(SolverConfig, data.pop("solver", {}), "solver")
    cost = _build(CostWeights, data.pop("cost", {}), "cost")
    leg = _build(LegControlConfig, data.pop("leg_control", {}), "leg_control")
    truth_sec = dict(data.pop("truth", {}))
    if "disturbances" in truth_sec:
        truth_sec["disturbances"] = tuple(
            (float(d["t"]), float(d["duration"]), tuple(float(w) for w in d["wrench"]))
            for d in truth_sec["disturbances"]
        )
    truth = _build(TruthParams, truth_sec, "truth")
    top = {k: data.pop(k) for k in ("duration", "policy_lag", "seed", "deterministic", "output_dir") if k in data}
    if data:
        raise ConfigError(f"unknown top-level keys: {sorted(data)}")
    try:
        return RunConfig(
            robot=robot,
            reference=ref,
            scaling=scaling,
            solver=solver,
            cost=cost,
            leg_control=leg,
            truth=truth,
            base_dir=base_dir,
            **top,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return run_config_from_dict(_read_toml(path), path.parent)

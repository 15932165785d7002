import math

import numpy as np
import pytest

from hkdmpc.config import (
    SHIPPED_ROBOTS,
    ConfigError,
    load_robot,
    load_run_config,
    robot_from_dict,
    run_config_from_dict,
)
from hkdmpc.sim import TruthParams


@pytest.mark.parametrize("name,mass", [("mini_cheetah", 9.0), ("a1", 12.7), ("laikago", 22.0)])
def test_shipped_robot_masses(name, mass):
    assert load_robot(name).mass == mass


def test_shipped_robots_listed():
    assert set(SHIPPED_ROBOTS) == {"mini_cheetah", "a1", "laikago"}


def test_robot_inertia_defaults_to_box_estimate():
    data = {"body": {"mass": 2.0, "dimensions": [0.3, 0.2, 0.1]},
            "legs": {"hip_offsets": [[0.1, 0.05, 0]] * 4, "link_lengths": [0.05, 0.2, 0.2]}}
    p = robot_from_dict(data)
    np.testing.assert_allclose(np.diag(p.body_inertia), [2 / 12 * 0.05, 2 / 12 * 0.1, 2 / 12 * 0.13])


def test_robot_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="missing"):
        robot_from_dict({"body": {"mass": 1.0}})
    with pytest.raises(ConfigError, match="invalid"):
        robot_from_dict({"body": {"mass": -1.0, "inertia": [1, 1, 1]},
                         "legs": {"hip_offsets": [[0, 0, 0]] * 4, "link_lengths": [0.1, 0.2, 0.2]}})
    with pytest.raises(ConfigError, match="not found"):
        load_robot(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("mass = [")
    with pytest.raises(ConfigError):
        load_robot(bad)


def test_run_config_defaults():
    cfg = run_config_from_dict({})
    assert cfg.robot.name
    assert cfg.reference.gait == "trot" and cfg.reference.speed == 0.5
    assert cfg.solver.dt == 0.011 and cfg.solver.n_nodes == 42 and cfg.solver.max_iterations == 3
    assert cfg.policy_lag == 0.006 and cfg.deterministic
    assert cfg.truth == TruthParams()
    assert not cfg.scaling.enabled and math.isinf(cfg.scaling.height_cap)


def test_run_config_sections(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        """
robot = "a1"
duration = 3.0
seed = 9
[reference]
gait = "pace"
robot = "laikago"
[scaling]
vel_scale = 0.5
height_cap = 0.28
axis_scale = [1.0, 0.5]
[solver]
max_iterations = 5
[cost]
w_foot = 2.0
[leg_control]
swing_height = 0.08
[truth]
mass_error_factor = 1.4
disturbances = [{ t = 1.0, duration = 0.1, wrench = [0, 20, 0, 0, 0, 0] }]
"""
    )
    cfg = load_run_config(path)
    assert cfg.robot.mass == 12.7 and cfg.duration == 3.0 and cfg.seed == 9
    assert cfg.reference.gait == "pace" and cfg.reference.robot == "laikago"
    assert cfg.scaling.enabled and cfg.scaling.axis_scale == (1.0, 0.5)
    assert cfg.solver.max_iterations == 5 and cfg.cost.w_foot == 2.0
    assert cfg.leg_control.swing_height == 0.08
    assert cfg.truth.mass_error_factor == 1.4
    assert cfg.truth.wrench_at(1.05)[1] == 20.0
    assert cfg.base_dir == tmp_path


@pytest.mark.parametrize(
    "data,match",
    [
        ({"bogus": 1}, "unknown top-level"),
        ({"solver": {"foo": 1}}, "unknown keys"),
        ({"solver": {"max_iterations": 0}}, "max_iterations"),
        ({"reference": {"source": "ftp"}}, "source"),
        ({"reference": {"source": "file", "path": "missing.csv"}}, "not found"),
        ({"duration": -1.0}, "duration"),
        ({"truth": {"mass_error_factor": 0}}, "positive"),
    ],
)
def test_run_config_rejects(data, match):
    with pytest.raises(ConfigError, match=match):
        run_config_from_dict(data)


def test_repo_configs_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    paths = sorted(root.glob("*.toml"))
    assert len(paths) >= 5
    for p in paths:
        load_run_config(p)

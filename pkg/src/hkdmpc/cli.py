"""Command-line entry points.

Exit codes: 0 success, 1 task failure (fall, solver fault, derivative check
breach), 2 usage error (bad flags, missing or invalid configuration).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_robot, load_run_config, run_config_from_dict
from .derivcheck import check_derivatives
from .experiment import run_bench, run_retarget
from .hkd_model import linearize
from .reference import GAIT_PAIRS, save_rollout, schedule_from_reference, synth_gait

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _corrupted_linearize(x, u, stance, params):
    A, B = linearize(x, u, stance, params)
    A = np.array(A)
    A[..., 9, 0] += 0.1
    return A, B


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else run_config_from_dict({})
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "deterministic", None) is not None:
        overrides["deterministic"] = args.deterministic
    if getattr(args, "duration", None) is not None:
        if args.duration <= 0:
            raise UsageError("--duration must be positive")
        overrides["duration"] = args.duration
    return replace(cfg, **overrides) if overrides else cfg


def cmd_gen_reference(args) -> int:
    robot = load_robot(args.robot)
    if args.duration <= 0 or args.period <= 0 or not 0 < args.duty < 1:
        raise UsageError("duration and period must be positive and duty in (0, 1)")
    traj = synth_gait(
        args.gait, args.speed, args.yaw_rate, args.period, args.duty, args.duration, robot,
        swing_height=args.swing_height,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_rollout(traj, out)
    if args.schedule_out:
        Path(args.schedule_out).write_text(schedule_from_reference(traj).to_text())
    print(f"wrote {len(traj)} samples to {out}")
    return EXIT_OK


def cmd_retarget(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out or cfg.output_dir)
    result = run_retarget(cfg, out, record_trace=args.trace)
    for k, v in result.metrics.items():
        print(f"{k}, {v}")
    print(f"wall_time_s, {result.wall_time:.3f}")
    print(f"output, {out}")
    if result.fell:
        print(f"FAIL: robot fell at t = {result.control_log[-1][0]:.3f} s", file=sys.stderr)
        return EXIT_FAILURE
    if result.fault:
        print(f"FAIL: {result.fault}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_check_derivatives(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    params = load_robot(args.config)
    jac = _corrupted_linearize if args.corrupt_jacobian else linearize
    results = check_derivatives(params, args.samples, args.seed, jacobian_fn=jac)
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:16s} worst_rel_err={r.worst:.3e} mode={r.worst_mode} samples={r.samples} {status}")
    bad = [r for r in results if not r.passed]
    if bad:
        worst = max(bad, key=lambda r: r.worst)
        print(f"FAIL: worst offender {worst.name} ({worst.worst:.3e} in mode {worst.worst_mode})", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.replans < 1:
        raise UsageError("--replans must be at least 1")
    cfg = _run_config(args)
    report = run_bench(cfg, args.replans, seed=cfg.seed)
    lines = report.lines()
    print("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.txt").write_text("\n".join(lines) + "\n")
        if args.trace:
            np.savetxt(out / "bench_solve_times.csv", report.solve_times, header="solve_time_s", comments="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkdmpc", description="Kinodynamic MPC for retargeting quadruped roll-outs.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-reference", help="write a synthetic gait roll-out CSV")
    g.add_argument("--gait", choices=sorted(GAIT_PAIRS), default="trot")
    g.add_argument("--speed", type=float, default=0.5, help="forward speed [m/s]")
    g.add_argument("--yaw-rate", type=float, default=0.0, help="[rad/s]")
    g.add_argument("--period", type=float, default=0.4, help="gait period [s]")
    g.add_argument("--duty", type=float, default=0.5, help="stance fraction")
    g.add_argument("--duration", type=float, default=10.0, help="[s]")
    g.add_argument("--swing-height", type=float, default=0.06, help="[m]")
    g.add_argument("--robot", "--config", dest="robot", default="mini_cheetah", help="robot name or TOML path")
    g.add_argument("--out", required=True, help="output CSV path")
    g.add_argument("--schedule-out", help="also write the debounced contact schedule here")
    g.set_defaults(func=cmd_gen_reference)

    r = sub.add_parser("retarget", help="run a closed-loop retargeting episode")
    r.add_argument("--config", required=True, help="run configuration TOML")
    r.add_argument("--out", help="output directory (default: output_dir from the config, relative to the working directory)")
    r.add_argument("--seed", type=int)
    r.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--duration", type=float, help="episode length [s]")
    r.add_argument("--trace", action="store_true", help="write per-iteration solver diagnostics")
    r.set_defaults(func=cmd_retarget)

    c = sub.add_parser("check-derivatives", help="finite-difference check of model and cost derivatives")
    c.add_argument("--config", default="mini_cheetah", help="robot name or TOML path")
    c.add_argument("--samples", type=int, default=100, help="samples per contact mode")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--corrupt-jacobian", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_check_derivatives)

    b = sub.add_parser("bench", help="time warm-started replans of the trot problem")
    b.add_argument("--config", help="run configuration TOML (default: built-in trot)")
    b.add_argument("--replans", type=int, default=500)
    b.add_argument("--seed", type=int)
    b.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
    b.add_argument("--out", help="directory for bench.txt")
    b.add_argument("--trace", action="store_true", help="also write per-replan solve times")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

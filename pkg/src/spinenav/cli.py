"""``spinenav`` command-line interface.

Exit codes: 0 success, 1 validation or I/O error, 2 numerical failure
(degenerate motion, no correspondences, collinear points, singular matrix).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from spinenav import fileio
from spinenav.errors import NumericalError, SpinenavError
from spinenav.geometry import FrameId
from spinenav.handeye import solve_handeye
from spinenav.metrics import PipelineReport
from spinenav.pivot import solve_pivot
from spinenav.registration import IcpParams, PointCloud, register_dual_stage
from spinenav.simulation import SimConfig, run_pipeline, simulate_drilled_centerline
from spinenav.trajectory import JShapePlan, check_safety, execution_timeline, plan_jshape, ExecutionProfile

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        sys.stdout.write(fileio.dump_json(payload))
    else:
        print(human)


def _write_out(args, payload: dict) -> None:
    if args.out:
        fileio.write_json(args.out, payload)


def cmd_calibrate_pivot(args) -> None:
    result = solve_pivot(fileio.read_poses(args.poses))
    payload = result.to_dict()
    _write_out(args, payload)
    _emit(
        args,
        payload,
        f"x_tip = {result.x_tip.round(4).tolist()} mm, x_pivot = {result.x_pivot.round(4).tolist()} mm, "
        f"residual RMS {result.residual_rms:.4f} mm, condition {result.condition_number:.1f}",
    )


def cmd_calibrate_handeye(args) -> None:
    result = solve_handeye(fileio.read_poses(args.a), fileio.read_poses(args.b))
    payload = result.to_dict()
    _write_out(args, payload)
    _emit(
        args,
        payload,
        f"rotation residual {result.rotation_residual:.3e}, translation residual "
        f"{result.translation_residual:.4f} mm",
    )


def cmd_register(args) -> None:
    digitized = PointCloud(fileio.read_points(args.digitized), FrameId.S)
    model = PointCloud(fileio.read_points(args.model), FrameId.CT)
    src, dst = fileio.parse_picks(fileio.read_json(args.picks))
    params = IcpParams(args.max_iterations, args.convergence_delta, args.max_distance)
    result = register_dual_stage(digitized, model, src, dst, params)
    payload = result.to_dict()
    _write_out(args, payload)
    _emit(
        args,
        payload,
        f"RMSE {result.rmse:.4f} mm over {result.correspondence_count} pairs, "
        f"{result.iterations} iterations, converged={result.converged}",
    )


def _plan_from_args(args) -> JShapePlan:
    if args.plan:
        return JShapePlan.from_dict(fileio.read_json(args.plan))
    return JShapePlan(
        entry_point=args.entry,
        entry_direction=args.direction,
        straight_length=args.straight,
        arc_radius=args.radius,
        arc_length=args.arc_length,
        bend_plane_normal=args.normal,
        sample_spacing=args.spacing,
    )


def cmd_plan(args) -> None:
    plan = _plan_from_args(args)
    centerline = plan_jshape(plan)
    if args.out:
        Path(args.out).write_text(centerline.to_csv(), encoding="utf-8")
    if args.plan_out:
        fileio.write_json(args.plan_out, plan.to_dict())
    timeline = execution_timeline(plan, ExecutionProfile())
    payload = {
        "plan": plan.to_dict(),
        "samples": len(centerline),
        "total_length": float(centerline.arclength[-1]),
        "polyline_length": centerline.polyline_length(),
        "timeline": timeline.to_dict(),
    }
    if args.canal_diameter is not None:
        safety = check_safety(
            centerline, plan.entry_point, plan.entry_direction, args.canal_diameter, args.tunnel_diameter
        )
        payload["safety"] = {"min_margin": safety.min_margin, "breach": safety.breach, "pass": safety.passed}
    human = (
        f"{len(centerline)} samples, length {payload['total_length']:.3f} mm, "
        f"straight {timeline.straight_duration:g} s + curved {timeline.curved_duration:g} s"
    )
    if "safety" in payload:
        s = payload["safety"]
        human += f"; canal margin {s['min_margin']:.3f} mm, breach {s['breach']:.3f} mm, {'pass' if s['pass'] else 'FAIL'}"
    _emit(args, payload, human)


def cmd_simulate(args) -> None:
    config = SimConfig.from_dict(fileio.read_json(args.config))
    report = run_pipeline(config)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.dump_trajectories:
        out = Path(args.dump_trajectories)
        out.mkdir(parents=True, exist_ok=True)
        (out / "planned.csv").write_text(plan_jshape(config.plan).to_csv(), encoding="utf-8")
        for i in range(config.trials):
            drilled = simulate_drilled_centerline(config, i)
            if drilled is not None:
                (out / f"drilled_trial{i}.csv").write_text(drilled.to_csv(), encoding="utf-8")
    if args.json:
        sys.stdout.write(text)
    else:
        print(report.summary())


def cmd_report(args) -> None:
    report = PipelineReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    _emit(args, report.to_dict(), report.summary())


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")

    parser = _Parser(prog="spinenav", description="Calibration, registration, planning and pipeline simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate-pivot", parents=[common], help="tool-tip pivot calibration")
    p.add_argument("--poses", required=True, help="end-effector poses CSV (qw,qx,qy,qz,tx,ty,tz)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate_pivot, stage="pivot calibration")

    p = sub.add_parser("calibrate-handeye", parents=[common], help="AX=ZB hand-eye calibration")
    p.add_argument("--a", required=True, help="A_i poses CSV")
    p.add_argument("--b", required=True, help="B_i poses CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate_handeye, stage="hand-eye calibration")

    p = sub.add_parser("register", parents=[common], help="3-point + ICP registration")
    p.add_argument("--digitized", required=True, help=".ply or .csv digitized points")
    p.add_argument("--model", required=True, help=".ply or .csv CT model points")
    p.add_argument("--picks", required=True, help="picks JSON")
    p.add_argument("--out")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--convergence-delta", type=float, default=1e-6)
    p.add_argument("--max-distance", type=float, default=10.0)
    p.set_defaults(func=cmd_register, stage="registration")

    p = sub.add_parser("plan", parents=[common], help="sample a J-shape centreline")
    p.add_argument("--plan", help="plan JSON (overrides the geometry flags)")
    p.add_argument("--entry", type=float, nargs=3, default=[0.0, 0.0, 0.0], metavar=("X", "Y", "Z"))
    p.add_argument("--direction", type=float, nargs=3, default=[0.0, 0.0, 1.0], metavar=("X", "Y", "Z"))
    p.add_argument("--normal", type=float, nargs=3, default=[1.0, 0.0, 0.0], metavar=("X", "Y", "Z"))
    p.add_argument("--straight", type=float, default=27.0)
    p.add_argument("--radius", type=float, default=69.5)
    p.add_argument("--arc-length", type=float, default=35.0)
    p.add_argument("--spacing", type=float, default=0.5)
    p.add_argument("--canal-diameter", type=float, help="check the straight part against a canal on the entry axis")
    p.add_argument("--tunnel-diameter", type=float, default=8.0)
    p.add_argument("--out", help="centreline CSV")
    p.add_argument("--plan-out", help="write the plan JSON")
    p.set_defaults(func=cmd_plan, stage="planning")

    p = sub.add_parser("simulate", parents=[common], help="run the simulated pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--dump-trajectories", metavar="DIR")
    p.set_defaults(func=cmd_simulate, stage="simulation")

    p = sub.add_parser("report", parents=[common], help="summarise a report JSON")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_report, stage="report")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"spinenav: {args.stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SpinenavError, OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"spinenav: {args.stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

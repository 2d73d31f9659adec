"""Command-line entry point.

Subcommands: simulate (headless sessions), serve (live wrench + console
channel), replay (re-derive a log's guidance stream and verify determinism),
score (aggregate a study bundle into the results table and radar scores).

Exit codes: 0 ok, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .metrics import MetricsError, aggregate_study, radar_json, table1_csv
from .scene import SceneError, bundled_scene_path, load_scene
from .session import (
    EventLogError,
    Method,
    guidance_stream,
    guidance_to_bytes,
    read_event_log,
)
from .simulate import (
    DEFAULT_DT_MS,
    DEFAULT_MAX_S,
    PROFILES,
    resolve_profile,
    run_session,
    write_session_artifacts,
)
from .study import calibrated_study_path
from .tracking import TrackingConfig
from .wrench import RampConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _env_ports() -> tuple[int, int]:
    """Default ports, overridable by TORQUEFLOW_PORT ("wrench[,console]")."""
    wrench, console = 7401, 8080
    raw = os.environ.get("TORQUEFLOW_PORT")
    if raw:
        parts = raw.split(",")
        try:
            wrench = int(parts[0])
            console = int(parts[1]) if len(parts) > 1 else console
        except ValueError:
            raise SystemExit(f"bad TORQUEFLOW_PORT value {raw!r}")
    return wrench, console


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torqueflow",
        description="Guided bolt-tightening bench: simulate, serve, replay, score.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    wrench_port, console_port = _env_ports()

    sim = sub.add_parser("simulate", help="run headless sessions")
    sim.add_argument("--scene", default=str(bundled_scene_path()),
                     help="scene file (default: bundled bench)")
    sim.add_argument("--scenario", default=None,
                     help="scenario id (default: first in the scene)")
    sim.add_argument("--method", choices=["ar", "conventional"], default="ar")
    sim.add_argument("--profile", default=None,
                     help=f"operator profile: {', '.join(sorted(PROFILES))}, "
                          "or a path to a profile JSON fragment "
                          "(default: perfect for ar, paper-rates for conventional)")
    sim.add_argument("--n", type=int, default=1, help="number of sessions")
    sim.add_argument("--seed", type=int, default=0, help="master seed")
    sim.add_argument("--out", default="out", help="output directory")
    sim.add_argument("--jobs", type=int, default=1, help="parallel workers")
    sim.add_argument("--dt-ms", type=int, default=DEFAULT_DT_MS)
    sim.add_argument("--max-s", type=float, default=DEFAULT_MAX_S,
                     help="session time cap, simulated seconds")
    sim.add_argument("--drift-rate", type=float, default=1.0, help="mm/sqrt(s)")
    sim.add_argument("--loss-rate", type=float, default=0.02, help="losses/s")
    sim.add_argument("--redetect-delay", type=float, default=1.0, help="s")
    sim.add_argument("--engage-threshold", type=float, default=15.0, help="mm")
    sim.add_argument("--ramp-rate", type=float, default=600.0, help="cNm/s")
    sim.add_argument("--telemetry-period", type=int, default=50, help="ms")

    srv = sub.add_parser("serve", help="serve the live system")
    srv.add_argument("--scene", default=str(bundled_scene_path()))
    srv.add_argument("--scenario", default=None)
    srv.add_argument("--method", choices=["ar", "conventional"], default="ar")
    srv.add_argument("--wrench-port", type=int, default=wrench_port)
    srv.add_argument("--console-port", type=int, default=console_port)
    srv.add_argument("--out", default="out", help="directory for the session artifacts")
    srv.add_argument("--engage-threshold", type=float, default=15.0)
    srv.add_argument("--ramp-rate", type=float, default=600.0)

    rep = sub.add_parser("replay", help="re-derive guidance from a log")
    rep.add_argument("log", help="path to events.jsonl")

    sco = sub.add_parser("score", help="aggregate a study bundle")
    sco.add_argument("bundle", nargs="?", default=str(calibrated_study_path()),
                     help="bundle directory (default: bundled calibrated study)")
    sco.add_argument("--scene", default=str(bundled_scene_path()))
    sco.add_argument("--out", default=None,
                     help="directory for table1.csv and radar.json")
    sco.add_argument("--plot", action="store_true",
                     help="also render radar.png (needs matplotlib)")
    return parser


# -- simulate -----------------------------------------------------------------


def _run_one(job: dict) -> dict:
    """Worker for one session; must stay picklable for --jobs."""
    from .metrics import classify_errors

    scene = load_scene(job["scene_path"])
    scenario = scene.scenario(job["scenario_id"])
    result = run_session(
        scene=scene,
        scenario=scenario,
        method=Method(job["method"]),
        profile=job["profile"],
        seed=job["seed"],
        session_index=job["index"],
        tracking_cfg=TrackingConfig(**job["tracking"]),
        ramp_cfg=RampConfig(**job["ramp"]),
        dt_ms=job["dt_ms"],
        max_s=job["max_s"],
    )
    out_dir = Path(job["out"]) / result.session.session_id
    write_session_artifacts(result, out_dir)
    validated = sum(1 for r in result.report.rows if r.validated)
    errors = "-"
    if not result.aborted:
        flags = classify_errors(result.events, result.manual_log, scenario)
        names = [n for n in ("wrong_order", "wrong_screw", "stale_torque")
                 if getattr(flags, n)]
        errors = ",".join(names) if names else "none"
    return {
        "session_id": result.session.session_id,
        "aborted": result.aborted,
        "validated": validated,
        "steps": len(result.report.rows),
        "duration_s": result.report.total_duration_s,
        "errors": errors,
        "dir": str(out_dir),
    }


def cmd_simulate(args) -> int:
    if args.n < 1:
        print("error: --n must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        scene = load_scene(args.scene)
        scenario_id = args.scenario or scene.scenarios[0].scenario_id
        scene.scenario(scenario_id)
        profile_spec = args.profile
        if profile_spec is None:
            profile_spec = "perfect" if args.method == "ar" else "paper-rates"
        if profile_spec not in PROFILES and Path(profile_spec).exists():
            profile_spec = json.loads(Path(profile_spec).read_text())
        resolve_profile(profile_spec)
    except (SceneError, ValueError, OSError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    method = Method.AR_GUIDED if args.method == "ar" else Method.CONVENTIONAL
    tracking = {
        "drift_rate": args.drift_rate,
        "loss_rate": args.loss_rate,
        "redetect_delay": args.redetect_delay,
        "engage_threshold": args.engage_threshold,
    }
    ramp = {"ramp_rate": args.ramp_rate, "telemetry_period": args.telemetry_period}
    config_echo = {
        "scene": args.scene, "scenario": scenario_id, "method": method.value,
        "profile": profile_spec, "n": args.n, "seed": args.seed,
        "dt_ms": args.dt_ms, "max_s": args.max_s,
        "tracking": tracking, "ramp": ramp, "out": args.out,
    }
    print("config:", json.dumps(config_echo, sort_keys=True))

    jobs = [
        {
            "scene_path": args.scene, "scenario_id": scenario_id,
            "method": method.value, "profile": profile_spec,
            "seed": args.seed, "index": i, "tracking": tracking, "ramp": ramp,
            "dt_ms": args.dt_ms, "max_s": args.max_s, "out": args.out,
        }
        for i in range(args.n)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    n_aborted = 0
    n_with_errors = 0
    for r in results:
        status = "ABORTED" if r["aborted"] else "ok"
        n_aborted += r["aborted"]
        n_with_errors += r["errors"] not in ("-", "none")
        print(f"session {r['session_id']} {status} "
              f"validated={r['validated']}/{r['steps']} "
              f"errors={r['errors']} "
              f"duration={r['duration_s']:.1f}s -> {r['dir']}")
    print(f"done: {len(results)} sessions, {n_aborted} aborted, "
          f"{n_with_errors} with errors, out={args.out}")
    return EXIT_OK


# -- replay ---------------------------------------------------------------


def cmd_replay(args) -> int:
    log_path = Path(args.log)
    try:
        events = read_event_log(log_path)
    except (EventLogError, OSError) as e:
        print(f"error: {log_path}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    derived = guidance_to_bytes(guidance_stream(events))
    sibling = log_path.with_name("guidance.jsonl")
    header = events[0].payload
    outcome = events[-1].kind.value
    print(f"session {header.get('session_id')} method={header.get('method')} "
          f"events={len(events)} outcome={outcome}")
    if sibling.exists():
        recorded = sibling.read_bytes()
        if recorded == derived:
            print("deterministic: OK (guidance stream is byte-identical)")
        else:
            print("deterministic: MISMATCH against recorded guidance stream",
                  file=sys.stderr)
            return EXIT_RUNTIME
    else:
        sys.stdout.write(derived.decode("utf-8"))
    return EXIT_OK


# -- score ------------------------------------------------------------------


def cmd_score(args) -> int:
    try:
        scene = load_scene(args.scene)
        agg = aggregate_study(args.bundle, scene)
    except (MetricsError, EventLogError, SceneError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    table = table1_csv(agg)
    radar = radar_json(agg)
    sys.stdout.write(table)
    sys.stdout.write(radar)
    if agg.n_excluded:
        print(f"note: {agg.n_excluded} aborted sessions excluded")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table1.csv").write_text(table, encoding="utf-8")
        (out / "radar.json").write_text(radar, encoding="utf-8")
        print(f"wrote {out / 'table1.csv'} and {out / 'radar.json'}")
        if args.plot:
            from .metrics import plot_radar
            plot_radar(agg, out / "radar.png")
            print(f"wrote {out / 'radar.png'}")
    return EXIT_OK


# -- serve ---------------------------------------------------------------


def cmd_serve(args) -> int:
    from .server import ServeConfig, serve  # deferred: pulls in fastapi

    try:
        scene = load_scene(args.scene)
        scenario_id = args.scenario or scene.scenarios[0].scenario_id
        scene.scenario(scenario_id)
    except (SceneError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = ServeConfig(
        scene_path=args.scene,
        scenario_id=scenario_id,
        method=Method.AR_GUIDED if args.method == "ar" else Method.CONVENTIONAL,
        wrench_port=args.wrench_port,
        console_port=args.console_port,
        out_dir=args.out,
        engage_threshold=args.engage_threshold,
        ramp_rate=args.ramp_rate,
    )
    try:
        serve(cfg)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "serve": cmd_serve,
        "replay": cmd_replay,
        "score": cmd_score,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points.

Subcommands: simulate, detect, train, predict, target, baseline, serve.
Configs are JSON files; --seed overrides the experiment's master system
seed and --out the output directory. Exit code 0 on success; failures map
to stable nonzero codes by error category. Set PHASELINK_LOG=debug|info|
warning to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import PhaselinkError

EXIT_CODES = {
    "config": 2,
    "integration": 3,
    "data": 4,
    "bundle": 5,
    "server": 6,
    "session": 7,
    "numerics": 8,
    "prediction": 9,
    "targeting": 10,
    "internal": 1,
}

log = logging.getLogger("phaselink")


def _setup_logging():
    level = os.environ.get("PHASELINK_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        from .errors import ConfigError
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _apply_overrides(cfg: dict, args) -> dict:
    if getattr(args, "seed", None) is not None:
        cfg.setdefault("system", {})["seed"] = args.seed
    return cfg


def cmd_simulate(args) -> int:
    from .dynsys import simulate
    from .experiments import _schedule, _system_spec, resolve_config
    from .serialize import write_trajectory_csv

    cfg = _load_config(args.config)
    cfg.setdefault("experiment", "detect_thomas")
    cfg = _apply_overrides(resolve_config(cfg), args)
    sys_cfg = cfg["system"]
    traj = simulate(_system_spec(sys_cfg), _schedule(sys_cfg), sys_cfg["n_frames"],
                    dt=sys_cfg["dt"], warmup_discard=sys_cfg.get("warmup_discard", 2000),
                    seed=sys_cfg["seed"], record_every=sys_cfg["record_every"])
    out = Path(args.out or "simulate_out")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trajectory.csv"
    write_trajectory_csv(path, traj)
    print(path)
    return 0


def _run_experiment_cmd(args, experiment: str, **kwargs) -> int:
    from .experiments import run_experiment

    cfg = _load_config(args.config)
    cfg["experiment"] = cfg.get("experiment", experiment)
    if cfg["experiment"] != experiment:
        from .errors import ConfigError
        raise ConfigError(
            f"config is for {cfg['experiment']!r} but the subcommand expects {experiment!r}")
    cfg = _apply_overrides(cfg, args)
    result = run_experiment(cfg, out_dir=args.out, **kwargs)
    print(result.artifacts["summary"])
    return 0


def cmd_detect(args) -> int:
    experiment = None
    if args.config:
        experiment = _load_config(args.config).get("experiment")
    return _run_experiment_cmd(args, experiment or args.system_experiment)


def cmd_serve(args) -> int:
    from .steerd import serve_forever

    serve_forever(bundle_path=args.bundle, port=args.port, fps=args.fps,
                  state=args.state, max_frames=args.max_frames)
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="phaselink")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the system seed")
        p.add_argument("--out", help="output directory")

    p_sim = sub.add_parser("simulate", help="simulate an input system to CSV")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_detect = sub.add_parser("detect", help="run a regime-detection experiment")
    add_common(p_detect)
    p_detect.add_argument("--system-experiment", default="detect_thomas",
                          help="experiment kind when the config does not name one")
    p_detect.set_defaults(func=cmd_detect)

    p_train = sub.add_parser("train", help="train a twin and save its bundle")
    add_common(p_train)
    p_train.set_defaults(func=lambda a: _run_experiment_cmd(a, "twin_train"))

    p_target = sub.add_parser("target", help="state targeting and closed-loop recall")
    add_common(p_target)
    p_target.add_argument("--bundle", help="reuse a trained bundle directory")
    p_target.set_defaults(func=lambda a: _run_experiment_cmd(
        a, "twin_target", bundle_path=a.bundle))

    p_predict = sub.add_parser("predict", help="alias of target (closed-loop runs)")
    add_common(p_predict)
    p_predict.add_argument("--bundle", help="reuse a trained bundle directory")
    p_predict.set_defaults(func=lambda a: _run_experiment_cmd(
        a, "twin_target", bundle_path=a.bundle))

    p_base = sub.add_parser("baseline", help="standard-RC baseline (no modulation)")
    add_common(p_base)
    p_base.set_defaults(func=lambda a: _run_experiment_cmd(a, "twin_baseline"))

    p_serve = sub.add_parser("serve", help="live steering service")
    p_serve.add_argument("--bundle", required=True)
    p_serve.add_argument("--port", type=int, default=8600)
    p_serve.add_argument("--fps", type=float, default=30.0,
                         help="frame production rate; 0 = unpaced")
    p_serve.add_argument("--state", type=float, default=None,
                         help="initial targeted state lambda")
    p_serve.add_argument("--max-frames", type=int, default=None)
    p_serve.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PhaselinkError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points: studies, headless sessions, service, export."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .engine import session_summary
from .persistence import export_dataset, snapshot_load, snapshot_save
from .simulate import run_simulated_session
from .studies import STUDY_NAMES, make_study, run_study


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roial",
        description="Active preference learning over a region of interest.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    st = sub.add_parser("run-study", help="run a simulation study and write CSV/JSON results")
    st.add_argument("--study", required=True, choices=STUDY_NAMES)
    st.add_argument("--out", required=True, help="output directory")
    st.add_argument("--config", help="optional YAML config; its grid/kernel/noise override the preset")
    st.add_argument("--reduced", action="store_true", help="small-grid preset that runs in minutes")
    st.add_argument("--seed", type=int, help="first seed (seeds are seed..seed+n-1)")
    st.add_argument("--seeds", type=int, help="number of seeded repetitions")
    st.add_argument("--trials", type=int, help="override the iteration count")
    st.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    se = sub.add_parser("run-session", help="run one full session headlessly")
    se.add_argument("--config", required=True, help="YAML config with a simulation section")
    se.add_argument("--simulated", action="store_true", required=True, help="use the simulated user")
    se.add_argument("--seed", type=int, help="override the config master seed")
    se.add_argument("--out", help="directory for snapshot + exports")
    se.add_argument("--trials", type=int, help="override the training trial count")

    sv = sub.add_parser("serve", help="serve the live-session HTTP API (and optional web UI)")
    sv.add_argument("--config", help="default config available to clients as config_path")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.add_argument("--state-dir", default="sessions", help="directory for per-session snapshots")
    sv.add_argument("--ui", help="directory of built web UI assets to serve at /")

    ex = sub.add_parser("export", help="export a session snapshot to CSV files")
    ex.add_argument("--snapshot", required=True, help="snapshot JSON file")
    ex.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_run_study(args) -> int:
    overrides = {}
    if args.config:
        cfg = load_config(args.config)
        overrides["bins"] = tuple(d.bins for d in cfg.dims)
        overrides["kernel"] = cfg.kernel
        overrides["r"] = cfg.r
        if cfg.simulation is not None:
            overrides["truth"] = cfg.simulation.truth
            overrides["user_ordinal_noise"] = cfg.simulation.ordinal_noise
            overrides["user_preference_noise"] = cfg.simulation.preference_noise
    if args.trials:
        overrides["iterations"] = args.trials
    spec = make_study(args.study, reduced=args.reduced, **overrides)
    if args.seed is not None or args.seeds is not None:
        first = args.seed if args.seed is not None else spec.seeds[0]
        count = args.seeds if args.seeds is not None else len(spec.seeds)
        spec = make_study(args.study, reduced=args.reduced, seeds=tuple(range(first, first + count)), **overrides)
    summary = run_study(spec, args.out, workers=args.workers)
    print(f"wrote {summary['csv']}")
    print(f"wrote {summary['json']}")
    return 0


def _cmd_run_session(args) -> int:
    from .studies import _single_thread_blas

    config = load_config(args.config)
    if config.simulation is None:
        raise ConfigError(["simulation: required for run-session --simulated"])
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.trials is not None:
        config = config.replace(training_trials=args.trials)

    def on_trial(session, query, label, choice):
        coords = ",".join(f"{c:.6g}" for c in query.coords)
        print(f"trial {query.trial:3d} [{query.phase}] action {query.action} ({coords}) "
              f"label={label} preference={choice or '-'}")

    with _single_thread_blas():
        session = run_simulated_session(config, on_trial=on_trial)
    print(json.dumps(session_summary(session), indent=2, sort_keys=True))
    if args.out:
        out = Path(args.out)
        snap = snapshot_save(session, out / "session.json")
        files = export_dataset(session, out)
        print(f"wrote {snap}")
        for f in files:
            print(f"wrote {f}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        state_dir=args.state_dir,
        default_config_path=args.config,
        ui_dir=args.ui,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_export(args) -> int:
    session = snapshot_load(args.snapshot)
    for f in export_dataset(session, args.out):
        print(f"wrote {f}")
    return 0


_COMMANDS = {
    "run-study": _cmd_run_study,
    "run-session": _cmd_run_session,
    "serve": _cmd_serve,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

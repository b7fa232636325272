"""Session snapshots and dataset exports.

Snapshots are versioned, checksummed JSON files embedding the effective
config and the full feedback transcript. Because every random draw in the
engine is derived from the config seed and the trial number, a snapshot plus
the transcript is sufficient to continue a session exactly as if it had never
been interrupted; the posterior and full-grid cache are recomputed on load
rather than stored.

Exports are plain CSV: ordinal labels, preference pairs, and (once a
full-grid refresh exists) the predictive mean/sigma over the whole grid.
Floats are written with shortest round-trip repr so re-importing reproduces
the in-memory values bit-exactly.
"""

from __future__ import annotations

import json
from hashlib import sha256
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, config_from_dict, config_hash
from .engine import (
    Query,
    Session,
    ValidationPlan,
    compute_full_grid,
    dataset_from_transcript,
)

SNAPSHOT_FORMAT = "roial-session"
SNAPSHOT_VERSION = 1


class SnapshotError(RuntimeError):
    pass


def _payload_checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return sha256(blob.encode()).hexdigest()


def snapshot_save(session: Session, path) -> Path:
    """Write the session to `path`; safe to call after every trial."""
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "config": session.config.to_dict(),
        "config_hash": config_hash(session.config),
        "trial": session.trial,
        "phase": session.phase,
        "transcript": session.transcript,
        "pending": None
        if session.pending is None
        else {
            "trial": session.pending.trial,
            "action": int(session.pending.action),
            "request_preference": session.pending.request_preference,
            "phase": session.pending.phase,
        },
        "training_actions": [int(a) for a in session.training_actions],
        "queried_actions": [int(a) for a in session.queried_actions],
        "validation": None
        if session.validation_plan is None
        else {
            "actions": [int(a) for a in session.validation_plan.actions],
            "predicted": [int(p) for p in session.validation_plan.predicted],
            "shortfall": session.validation_plan.shortfall,
        },
        "full_grid_trial": None if session.full_grid is None else session.full_grid.trial,
    }
    payload["checksum"] = _payload_checksum({k: v for k, v in payload.items() if k != "checksum"})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    return path


def snapshot_load(path, config: ExperimentConfig | None = None) -> Session:
    """Rebuild a session from a snapshot.

    Refuses corrupted files (checksum), unknown versions, and -- when a
    config is supplied for cross-checking -- snapshots taken under a config
    with a different hash.
    """
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError(f"not a session snapshot: {path}")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {payload.get('version')!r}")
    stored_sum = payload.pop("checksum", None)
    if stored_sum != _payload_checksum(payload):
        raise SnapshotError("snapshot checksum mismatch (file corrupted)")

    snap_config = config_from_dict(payload["config"])
    if payload["config_hash"] != config_hash(snap_config):
        raise SnapshotError("embedded config does not match its recorded hash")
    if config is not None and config_hash(config) != payload["config_hash"]:
        raise SnapshotError("snapshot was taken under a different configuration")

    session = Session(config=snap_config, space=snap_config.space())
    session.trial = int(payload["trial"])
    session.phase = payload["phase"]
    session.transcript = list(payload["transcript"])
    session.training_actions = [int(a) for a in payload["training_actions"]]
    session.queried_actions = [int(a) for a in payload["queried_actions"]]
    session.dataset = dataset_from_transcript(session.transcript)
    if payload["validation"] is not None:
        v = payload["validation"]
        session.validation_plan = ValidationPlan(
            actions=[int(a) for a in v["actions"]],
            predicted=[int(p) for p in v["predicted"]],
            shortfall=dict(v["shortfall"]),
        )
    if payload["pending"] is not None:
        p = payload["pending"]
        session.pending = Query(
            trial=int(p["trial"]),
            action=int(p["action"]),
            coords=session.space.index_to_action(int(p["action"])),
            request_preference=bool(p["request_preference"]),
            phase=p["phase"],
        )
    marker = payload["full_grid_trial"]
    if marker is not None:
        session.full_grid = compute_full_grid(session, at_trial=int(marker))
    return session


# ---------------------------------------------------------------------------
# CSV exports


def _fmt(x) -> str:
    return repr(float(x))


def export_dataset(session: Session, out_dir) -> list[Path]:
    """Write ordinals.csv, preferences.csv and (when a full-grid refresh
    exists) posterior_grid.csv; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = session.space.names
    written = []

    path = out_dir / "ordinals.csv"
    with open(path, "w", newline="") as fh:
        fh.write("trial,action_index," + ",".join(names) + ",label\n")
        for entry in session.transcript:
            coords = session.space.index_to_action(entry["action"])
            cells = [str(entry["trial"]), str(entry["action"])]
            cells += [_fmt(c) for c in coords]
            cells.append(str(entry["label"]))
            fh.write(",".join(cells) + "\n")
    written.append(path)

    path = out_dir / "preferences.csv"
    with open(path, "w", newline="") as fh:
        fh.write("trial,winner_index,loser_index\n")
        previous = None
        for entry in session.transcript:
            choice = entry.get("preference")
            if choice == "current":
                fh.write(f"{entry['trial']},{entry['action']},{previous}\n")
            elif choice == "previous":
                fh.write(f"{entry['trial']},{previous},{entry['action']}\n")
            previous = entry["action"]
    written.append(path)

    if session.full_grid is not None:
        path = out_dir / "posterior_grid.csv"
        cache = session.full_grid
        coords = session.space.index_to_action(np.arange(session.space.size))
        with open(path, "w", newline="") as fh:
            fh.write("action_index," + ",".join(names) + ",mean,sigma\n")
            for k in range(session.space.size):
                cells = [str(k)]
                cells += [_fmt(c) for c in coords[k]]
                cells += [_fmt(cache.means[k]), _fmt(cache.sigmas[k])]
                fh.write(",".join(cells) + "\n")
        written.append(path)
    return written


def load_posterior_grid(path) -> tuple[np.ndarray, np.ndarray]:
    """Re-import a posterior_grid.csv as (means, sigmas), bit-exact."""
    means, sigmas = [], []
    with open(path) as fh:
        next(fh)
        for line in fh:
            cells = line.rstrip("\n").split(",")
            means.append(float(cells[-2]))
            sigmas.append(float(cells[-1]))
    return np.asarray(means), np.asarray(sigmas)

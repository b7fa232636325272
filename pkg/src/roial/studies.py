"""Simulation studies: subset-size, ROI-confidence, and feedback-noise sweeps.

Each study runs the engine against seeded synthetic users across a set of
arms, records per-checkpoint prediction metrics, and writes a tidy CSV (one
row per run x iteration x metric) plus a JSON summary with mean/std curves
and checkpoint confusion matrices. Outputs are byte-deterministic for a
given spec, regardless of worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def _single_thread_blas():
    # the engine's matrices are small (hundreds); threaded BLAS loses far
    # more to spin-wait than it gains, especially with parallel workers
    if threadpool_limits is None:
        return nullcontext()
    return threadpool_limits(limits=1)

from .config import ExperimentConfig, config_from_dict
from .engine import rng_stream, start_session, submit_feedback
from .metrics import error_metrics
from .posterior import KernelConfig
from .space import build_grid
from .truth import make_hartmann_truth, make_synthetic_truth, simulated_feedback

STUDY_NAMES = ("subset", "lambda", "noise")

# engine-side hyperparameters are held constant across studies; only the
# simulated user's noise varies in the noise study. The study kernel is
# wider than the live-session default so that learning generalizes across
# the coarse benchmark grids within the studies' iteration budgets (the
# confidence-parameter comparison in particular needs confident utility
# estimates away from queried points).
ENGINE_ORDINAL_NOISE = 0.1
ENGINE_PREFERENCE_NOISE = 0.02
STUDY_LENGTHSCALE = 0.3


@dataclass(frozen=True)
class StudyArm:
    label: str
    subset_size: int | None = None  # None = spec default
    confidence: float | None = None
    user_ordinal_noise: float | None = None
    user_preference_noise: float | None = None


@dataclass(frozen=True)
class StudySpec:
    study: str
    arms: tuple[StudyArm, ...]
    seeds: tuple[int, ...]
    iterations: int
    bins: tuple[int, ...]
    r: int = 5
    truth: str = "synthetic"  # synthetic | hartmann3
    kernel: KernelConfig = field(default_factory=KernelConfig)
    subset_size: int = 500
    confidence: float = np.inf
    n_samples: int = 1000
    user_ordinal_noise: float = 0.1
    user_preference_noise: float = 0.02
    eval_points: int = 1000
    checkpoint_every: int = 10
    confusion_checkpoints: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        def num(x):
            return "inf" if x is not None and np.isinf(x) else x

        return {
            "study": self.study,
            "arms": [
                {
                    "label": a.label,
                    "subset_size": a.subset_size,
                    "confidence": num(a.confidence),
                    "user_ordinal_noise": a.user_ordinal_noise,
                    "user_preference_noise": a.user_preference_noise,
                }
                for a in self.arms
            ],
            "seeds": list(self.seeds),
            "iterations": self.iterations,
            "bins": list(self.bins),
            "r": self.r,
            "truth": self.truth,
            "kernel": {
                "variance": self.kernel.variance,
                "lengthscale": self.kernel.lengthscale,
                "jitter": self.kernel.jitter,
            },
            "subset_size": self.subset_size,
            "confidence": num(self.confidence),
            "n_samples": self.n_samples,
            "user_ordinal_noise": self.user_ordinal_noise,
            "user_preference_noise": self.user_preference_noise,
            "eval_points": self.eval_points,
            "checkpoint_every": self.checkpoint_every,
            "confusion_checkpoints": list(self.confusion_checkpoints),
        }

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return sha256(blob.encode()).hexdigest()


def make_study(study: str, reduced: bool = False, **overrides) -> StudySpec:
    """Preset specs for the three studies.

    The full presets match the published protocols (20^3 grids, subset sizes
    {5, 50, 500, all}, confidence sweep {-0.45, 0, 0.45, inf}, noise pairs up
    to (0.3, 0.06)); the reduced presets shrink the grid to 10^3 and the
    sample counts so each study finishes in minutes while preserving every
    compared quantity.
    """
    kernel = KernelConfig(lengthscale=STUDY_LENGTHSCALE)
    if study == "subset":
        base = dict(
            study=study,
            arms=tuple(
                StudyArm(label=lbl, subset_size=m)
                for lbl, m in (("5", 5), ("50", 50), ("500", 500), ("all", 10**9))
            ),
            seeds=tuple(range(10)),
            iterations=80,
            bins=(10, 10, 10) if reduced else (20, 20, 20),
            kernel=kernel,
            confidence=np.inf,
            n_samples=500 if reduced else 1000,
        )
    elif study == "lambda":
        sweep = (-0.45, 0.45, np.inf) if reduced else (-0.45, 0.0, 0.45, np.inf)
        base = dict(
            study=study,
            arms=tuple(StudyArm(label=_fmt_num(c), confidence=c) for c in sweep),
            seeds=tuple(range(20)) if reduced else tuple(range(50)),
            iterations=240,
            bins=(10, 10, 10) if reduced else (20, 20, 20),
            kernel=kernel,
            subset_size=150 if reduced else 500,
            n_samples=300 if reduced else 1000,
            confusion_checkpoints=(80, 240),
        )
    elif study == "noise":
        pairs = ((0.1, 0.02), (0.2, 0.04), (0.3, 0.06))
        base = dict(
            study=study,
            arms=tuple(
                StudyArm(label=f"{co}/{cp}", user_ordinal_noise=co, user_preference_noise=cp)
                for co, cp in pairs
            ),
            seeds=tuple(range(20)),
            iterations=80,
            bins=(10, 10, 10) if reduced else (20, 20, 20),
            kernel=kernel,
            subset_size=150 if reduced else 500,
            confidence=-0.45,
            n_samples=300 if reduced else 1000,
        )
    else:
        raise ValueError(f"unknown study {study!r}; expected one of {STUDY_NAMES}")
    base.update(overrides)
    return StudySpec(**base)


def _fmt_num(x: float) -> str:
    if np.isinf(x):
        return "inf"
    return f"{x:g}"


def _arm_engine_config(spec: StudySpec, arm: StudyArm, seed: int, thresholds) -> ExperimentConfig:
    subset = arm.subset_size if arm.subset_size is not None else spec.subset_size
    confidence = arm.confidence if arm.confidence is not None else spec.confidence
    raw = {
        "name": f"{spec.study}-{arm.label}-s{seed}",
        "seed": seed,
        "dims": [{"name": f"x{d}", "min": 0.0, "max": 1.0, "bins": b} for d, b in enumerate(spec.bins)],
        "kernel": {
            "variance": spec.kernel.variance,
            "lengthscale": list(spec.kernel.lengthscale)
            if isinstance(spec.kernel.lengthscale, tuple)
            else spec.kernel.lengthscale,
            "jitter": spec.kernel.jitter,
        },
        "ordinal": {
            "categories": [f"O{j}" for j in range(1, spec.r + 1)],
            "thresholds": [float(b) for b in thresholds],
            "noise": ENGINE_ORDINAL_NOISE,
        },
        "preference": {"noise": ENGINE_PREFERENCE_NOISE},
        "acquisition": {
            "confidence": "inf" if np.isinf(confidence) else confidence,
            "subset_size": min(subset, 10**9),
            "samples": spec.n_samples,
        },
        "trials": {"training": spec.iterations, "validation": 0},
        "engine": {"refresh_every": spec.checkpoint_every},
    }
    return config_from_dict(raw)


def run_one(spec: StudySpec, arm: StudyArm, seed: int) -> tuple[list[dict], dict]:
    """One (arm, seed) simulation; returns tidy metric rows and checkpoint
    confusion matrices."""
    with _single_thread_blas():
        return _run_one_limited(spec, arm, seed)


def _run_one_limited(spec: StudySpec, arm: StudyArm, seed: int) -> tuple[list[dict], dict]:
    space = build_grid([(0.0, 1.0, b) for b in spec.bins])
    user_ord = arm.user_ordinal_noise if arm.user_ordinal_noise is not None else spec.user_ordinal_noise
    user_pref = (
        arm.user_preference_noise if arm.user_preference_noise is not None else spec.user_preference_noise
    )
    if spec.truth == "hartmann3":
        truth = make_hartmann_truth(space, spec.r, user_ord, user_pref)
    else:
        truth = make_synthetic_truth(space, spec.kernel, spec.r, seed, user_ord, user_pref)

    config = _arm_engine_config(spec, arm, seed, truth.thresholds)
    eval_rng = rng_stream(seed, "evaluation")
    eval_idx = eval_rng.choice(space.size, size=min(spec.eval_points, space.size), replace=False)

    rows: list[dict] = []
    confusions: dict = {}
    roa_visits = 0

    session, query = start_session(config)
    while query is not None:
        rng = rng_stream(config.seed, "simulated-user", query.trial)
        previous = session.previous_action if query.request_preference else None
        label, choice = simulated_feedback(truth, query.action, previous, rng)
        roa_visits += int(truth.categories[query.action] == 1)
        session, query = submit_feedback(session, label, choice)

        if session.trial % spec.checkpoint_every == 0 or query is None:
            m = error_metrics(session.full_grid.means, truth, config, eval_idx)
            for metric in (
                "preference_error",
                "ordinal_error",
                "error_weighted",
                "ordinal_within_one",
                "roi_accuracy",
            ):
                rows.append(_row(spec, arm, seed, session.trial, metric, m[metric]))
            rows.append(_row(spec, arm, seed, session.trial, "roa_visits_cum", float(roa_visits)))
            if session.trial in spec.confusion_checkpoints:
                confusions[f"{arm.label}/{seed}/{session.trial}"] = m["confusion"].tolist()
    return rows, confusions


def _row(spec: StudySpec, arm: StudyArm, seed: int, iteration: int, metric: str, value: float) -> dict:
    return {
        "study": spec.study,
        "arm": arm.label,
        "seed": seed,
        "iteration": iteration,
        "metric": metric,
        "value": value,
    }


def _run_one_job(args):
    spec, arm, seed = args
    return run_one(spec, arm, seed)


def run_study(spec: StudySpec, out_dir, workers: int = 1) -> dict:
    """Run every (arm, seed) pair, write CSV + JSON outputs, return the
    summary dict. Output bytes depend only on the spec."""
    jobs = [(spec, arm, seed) for arm in spec.arms for seed in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_job, jobs))
    else:
        results = [_run_one_job(j) for j in jobs]

    rows: list[dict] = []
    confusions: dict = {}
    for r, c in results:
        rows.extend(r)
        confusions.update(c)
    rows.sort(key=lambda r: (r["arm"], r["seed"], r["iteration"], r["metric"]))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"study_{spec.study}_seed{spec.seeds[0]}-{spec.seeds[-1]}_{spec.spec_hash()[:8]}"
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("study,arm,seed,iteration,metric,value\n")
        for r in rows:
            fh.write(f"{r['study']},{r['arm']},{r['seed']},{r['iteration']},{r['metric']},{r['value']!r}\n")

    summary = summarize(spec, rows)
    summary["confusions"] = dict(sorted(confusions.items()))
    json_path = out_dir / f"{stem}.json"
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    summary["csv"] = str(csv_path)
    summary["json"] = str(json_path)
    return summary


def summarize(spec: StudySpec, rows: list[dict]) -> dict:
    """Mean/std metric curves per arm."""
    curves: dict = {}
    by_key: dict = {}
    for r in rows:
        by_key.setdefault((r["arm"], r["metric"], r["iteration"]), []).append(r["value"])
    for (arm, metric, iteration), values in sorted(by_key.items()):
        entry = curves.setdefault(arm, {}).setdefault(metric, {"iterations": [], "mean": [], "std": []})
        entry["iterations"].append(iteration)
        entry["mean"].append(float(np.mean(values)))
        entry["std"].append(float(np.std(values)))
    return {"spec": spec.to_dict(), "spec_hash": spec.spec_hash(), "curves": curves}


def study_curve(summary: dict, arm: str, metric: str) -> tuple[np.ndarray, np.ndarray]:
    """(iterations, mean values) for one arm/metric curve of a summary."""
    entry = summary["curves"][arm][metric]
    return np.asarray(entry["iterations"]), np.asarray(entry["mean"])

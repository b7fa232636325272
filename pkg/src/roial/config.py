"""Experiment configuration: YAML loading, validation, hashing.

One config file describes the whole experiment: the action grid, kernel and
likelihood hyperparameters, acquisition settings, trial counts, and (for
simulated runs) the synthetic ground truth and simulated-user noise. Every
hyperparameter is fixed up front; nothing is estimated during a session.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import yaml

from .likelihoods import OrdinalScale, PreferenceModel, get_link
from .posterior import KernelConfig
from .space import ActionSpace, DimensionSpec, SpaceError


class ConfigError(ValueError):
    """Carries every validation violation, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class SimulationConfig:
    """Synthetic ground truth and simulated-user noise for headless runs.

    `ordinal_noise` / `preference_noise` of 0 mean a noiseless user. With
    `thresholds_from_truth` the engine's ordinal thresholds are replaced by
    the truth's equal-mass quantile thresholds, making the simulated user and
    the model share one scale.
    """

    truth: str = "synthetic"  # synthetic | hartmann3
    truth_seed: int = 0
    ordinal_noise: float = 0.1
    preference_noise: float = 0.02
    thresholds_from_truth: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    dims: tuple[DimensionSpec, ...]
    kernel: KernelConfig
    categories: tuple[str, ...]
    thresholds: tuple[float, ...]
    ordinal_noise: float
    preference_noise: float
    confidence: float  # ROI parameter; +inf disables the restriction
    subset_size: int
    n_samples: int
    training_trials: int
    validation_trials: int
    refresh_every: int = 10
    newton_tol: float = 1e-6
    newton_max_iter: int = 100
    link: str = "sigmoid"
    validation_per_category: int = 2
    simulation: SimulationConfig | None = None

    @property
    def r(self) -> int:
        return len(self.categories)

    def space(self) -> ActionSpace:
        return ActionSpace(self.dims)

    def scale(self) -> OrdinalScale:
        return OrdinalScale(thresholds=self.thresholds, noise=self.ordinal_noise, link=get_link(self.link))

    def preference_model(self) -> PreferenceModel:
        return PreferenceModel(noise=self.preference_noise, link=get_link(self.link))

    def replace(self, **kw) -> "ExperimentConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        sim = None
        if self.simulation is not None:
            sim = {
                "truth": {"kind": self.simulation.truth, "seed": self.simulation.truth_seed},
                "user_noise": {
                    "ordinal": self.simulation.ordinal_noise,
                    "preference": self.simulation.preference_noise,
                },
                "thresholds_from_truth": self.simulation.thresholds_from_truth,
            }
        return {
            "name": self.name,
            "seed": self.seed,
            "dims": [asdict(d) for d in self.dims],
            "kernel": {
                "variance": self.kernel.variance,
                "lengthscale": list(self.kernel.lengthscale)
                if isinstance(self.kernel.lengthscale, tuple)
                else self.kernel.lengthscale,
                "jitter": self.kernel.jitter,
            },
            "ordinal": {
                "categories": list(self.categories),
                "thresholds": list(self.thresholds),
                "noise": self.ordinal_noise,
            },
            "preference": {"noise": self.preference_noise},
            "link": self.link,
            "acquisition": {
                "confidence": "inf" if math.isinf(self.confidence) else self.confidence,
                "subset_size": self.subset_size,
                "samples": self.n_samples,
            },
            "trials": {"training": self.training_trials, "validation": self.validation_trials},
            "engine": {
                "refresh_every": self.refresh_every,
                "newton_tol": self.newton_tol,
                "newton_max_iter": self.newton_max_iter,
                "validation_per_category": self.validation_per_category,
            },
            "simulation": sim,
        }


def config_hash(config: ExperimentConfig) -> str:
    """Stable content hash of the full configuration."""
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _as_float(value, path: str, errors: list[str], allow_inf: bool = False) -> float:
    if isinstance(value, str) and allow_inf and value.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        out = float(value)
    except (TypeError, ValueError):
        errors.append(f"{path}: expected a number, got {value!r}")
        return math.nan
    if math.isinf(out) and not allow_inf:
        errors.append(f"{path}: must be finite")
    return out


def _as_int(value, path: str, errors: list[str]) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        try:
            if float(value) != int(value):
                raise ValueError
            return int(value)
        except (TypeError, ValueError):
            errors.append(f"{path}: expected an integer, got {value!r}")
            return 0
    return value


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config; reports all violations with field paths."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected a mapping"])

    name = str(raw.get("name", "experiment"))
    seed = _as_int(raw.get("seed", 0), "seed", errors)

    dims: list[DimensionSpec] = []
    raw_dims = raw.get("dims")
    if not isinstance(raw_dims, list) or not raw_dims:
        errors.append("dims: at least one dimension is required")
    else:
        for i, d in enumerate(raw_dims):
            path = f"dims[{i}]"
            if not isinstance(d, dict):
                errors.append(f"{path}: expected a mapping with name/min/max/bins")
                continue
            try:
                dims.append(
                    DimensionSpec(
                        name=str(d.get("name", f"x{i}")),
                        min=_as_float(d.get("min", 0.0), f"{path}.min", errors),
                        max=_as_float(d.get("max", 1.0), f"{path}.max", errors),
                        bins=_as_int(d.get("bins", 1), f"{path}.bins", errors),
                    )
                )
            except SpaceError as exc:
                errors.append(f"{path}: {exc}")

    kern_raw = raw.get("kernel", {}) or {}
    kernel = KernelConfig()
    try:
        ls = kern_raw.get("lengthscale", 0.15)
        kernel = KernelConfig(
            variance=_as_float(kern_raw.get("variance", 1.0), "kernel.variance", errors),
            lengthscale=tuple(float(v) for v in ls) if isinstance(ls, (list, tuple)) else float(ls),
            jitter=_as_float(kern_raw.get("jitter", 1e-6), "kernel.jitter", errors),
        )
    except (ValueError, TypeError) as exc:
        errors.append(f"kernel: {exc}")
    if isinstance(kernel.lengthscale, tuple) and dims and len(kernel.lengthscale) != len(dims):
        errors.append(
            f"kernel.lengthscale: got {len(kernel.lengthscale)} values for {len(dims)} dimensions"
        )

    ord_raw = raw.get("ordinal", {}) or {}
    categories = tuple(str(c) for c in ord_raw.get("categories", []) or [])
    thresholds = tuple(
        _as_float(b, f"ordinal.thresholds[{i}]", errors)
        for i, b in enumerate(ord_raw.get("thresholds", []) or [])
    )
    if len(categories) < 2:
        errors.append("ordinal.categories: at least 2 categories are required")
    if len(thresholds) != max(len(categories) - 1, 0):
        errors.append(
            f"ordinal.thresholds: expected {max(len(categories) - 1, 0)} thresholds for "
            f"{len(categories)} categories, got {len(thresholds)}"
        )
    if any(b2 <= b1 for b1, b2 in zip(thresholds, thresholds[1:])):
        errors.append("ordinal.thresholds: thresholds strictly increasing")
    ordinal_noise = _as_float(ord_raw.get("noise", 0.1), "ordinal.noise", errors)
    if not ordinal_noise > 0:
        errors.append(f"ordinal.noise: must be > 0, got {ordinal_noise}")

    pref_raw = raw.get("preference", {}) or {}
    preference_noise = _as_float(pref_raw.get("noise", 0.02), "preference.noise", errors)
    if not preference_noise > 0:
        errors.append(f"preference.noise: must be > 0, got {preference_noise}")

    link_name = str(raw.get("link", "sigmoid"))
    try:
        get_link(link_name)
    except Exception as exc:
        errors.append(f"link: {exc}")

    acq_raw = raw.get("acquisition", {}) or {}
    confidence = _as_float(acq_raw.get("confidence", 0.45), "acquisition.confidence", errors, allow_inf=True)
    subset_size = _as_int(acq_raw.get("subset_size", 500), "acquisition.subset_size", errors)
    n_samples = _as_int(acq_raw.get("samples", 1000), "acquisition.samples", errors)
    if subset_size < 1:
        errors.append(f"acquisition.subset_size: must be >= 1, got {subset_size}")
    if n_samples < 1:
        errors.append(f"acquisition.samples: must be >= 1, got {n_samples}")

    trials_raw = raw.get("trials", {}) or {}
    training = _as_int(trials_raw.get("training", 30), "trials.training", errors)
    validation = _as_int(trials_raw.get("validation", 10), "trials.validation", errors)
    if training < 1:
        errors.append(f"trials.training: must be >= 1, got {training}")
    if validation < 0:
        errors.append(f"trials.validation: must be >= 0, got {validation}")

    eng_raw = raw.get("engine", {}) or {}
    refresh_every = _as_int(eng_raw.get("refresh_every", 10), "engine.refresh_every", errors)
    newton_tol = _as_float(eng_raw.get("newton_tol", 1e-6), "engine.newton_tol", errors)
    newton_max_iter = _as_int(eng_raw.get("newton_max_iter", 100), "engine.newton_max_iter", errors)
    per_cat = _as_int(eng_raw.get("validation_per_category", 2), "engine.validation_per_category", errors)
    if refresh_every < 1:
        errors.append(f"engine.refresh_every: must be >= 1, got {refresh_every}")

    simulation = None
    sim_raw = raw.get("simulation")
    if sim_raw is not None:
        if not isinstance(sim_raw, dict):
            errors.append("simulation: expected a mapping")
        else:
            truth_raw = sim_raw.get("truth", {}) or {}
            kind = str(truth_raw.get("kind", "synthetic"))
            if kind not in ("synthetic", "hartmann3"):
                errors.append(f"simulation.truth.kind: expected synthetic or hartmann3, got {kind!r}")
            noise_raw = sim_raw.get("user_noise", {}) or {}
            u_ord = _as_float(noise_raw.get("ordinal", 0.1), "simulation.user_noise.ordinal", errors)
            u_pref = _as_float(noise_raw.get("preference", 0.02), "simulation.user_noise.preference", errors)
            if u_ord < 0:
                errors.append("simulation.user_noise.ordinal: must be >= 0")
            if u_pref < 0:
                errors.append("simulation.user_noise.preference: must be >= 0")
            simulation = SimulationConfig(
                truth=kind,
                truth_seed=_as_int(truth_raw.get("seed", 0), "simulation.truth.seed", errors),
                ordinal_noise=u_ord,
                preference_noise=u_pref,
                thresholds_from_truth=bool(sim_raw.get("thresholds_from_truth", True)),
            )

    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        name=name,
        seed=seed,
        dims=tuple(dims),
        kernel=kernel,
        categories=categories,
        thresholds=thresholds,
        ordinal_noise=ordinal_noise,
        preference_noise=preference_noise,
        confidence=confidence,
        subset_size=subset_size,
        n_samples=n_samples,
        training_trials=training,
        validation_trials=validation,
        refresh_every=refresh_every,
        newton_tol=newton_tol,
        newton_max_iter=newton_max_iter,
        link=link_name,
        validation_per_category=per_cat,
        simulation=simulation,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML config file."""
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"parse error: {exc}"]) from exc
    return config_from_dict(raw or {})

"""Finite gridded action spaces.

An action space is the Cartesian product of evenly spaced 1-D grids, one per
parameter dimension. Actions are addressed by a flat index in row-major order
(first listed dimension varies slowest), which gives every component of the
system -- engine, exports, service payloads, UI heatmaps -- the same stable
enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SpaceError(ValueError):
    """Invalid dimension specification or action index."""


@dataclass(frozen=True)
class DimensionSpec:
    """One grid dimension: `bins` evenly spaced values covering [min, max]."""

    name: str
    min: float
    max: float
    bins: int

    def __post_init__(self):
        if not self.name:
            raise SpaceError("dimension name must be non-empty")
        if self.bins < 1:
            raise SpaceError(f"{self.name}: bins must be >= 1, got {self.bins}")
        if self.bins > 1 and not self.min < self.max:
            raise SpaceError(f"{self.name}: min must be < max when bins > 1")
        if self.bins == 1 and self.min > self.max:
            raise SpaceError(f"{self.name}: min must be <= max")

    @property
    def values(self) -> np.ndarray:
        if self.bins == 1:
            return np.array([self.min])
        return np.linspace(self.min, self.max, self.bins)

    @property
    def spacing(self) -> float:
        if self.bins == 1:
            return 0.0
        return (self.max - self.min) / (self.bins - 1)


@dataclass(frozen=True)
class ActionSpace:
    """Product grid over an ordered list of dimensions.

    Immutable after construction; safe to share across threads. `size` is the
    total number of actions and every flat index in [0, size) corresponds to
    exactly one coordinate vector.
    """

    dims: tuple[DimensionSpec, ...]
    _shape: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.dims:
            raise SpaceError("action space needs at least one dimension")
        object.__setattr__(self, "_shape", tuple(d.bins for d in self.dims))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._shape

    @property
    def size(self) -> int:
        return int(np.prod(self._shape))

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def index_to_action(self, k) -> np.ndarray:
        """Decode flat index -> coordinate vector (row-major).

        Vectorized: an array of indices yields an (n, ndim) array.
        """
        k = np.asarray(k)
        if np.any((k < 0) | (k >= self.size)):
            raise SpaceError(f"action index out of range [0, {self.size})")
        multi = np.unravel_index(k, self._shape)
        cols = [d.values[m] for d, m in zip(self.dims, multi)]
        return np.stack(cols, axis=-1)

    def action_to_index(self, coords) -> int | np.ndarray:
        """Encode coordinate vector(s) -> flat index. Coordinates must lie on
        the grid (matched to the nearest grid value, which is exact for values
        produced by `index_to_action`)."""
        coords = np.asarray(coords, dtype=float)
        multi = []
        for j, d in enumerate(self.dims):
            c = coords[..., j]
            pos = np.rint((c - d.min) / d.spacing).astype(int) if d.bins > 1 else np.zeros_like(c, dtype=int)
            if np.any((pos < 0) | (pos >= d.bins)):
                raise SpaceError(f"coordinate off the grid in dimension {d.name}")
            multi.append(pos)
        out = np.ravel_multi_index(tuple(multi), self._shape)
        return int(out) if out.ndim == 0 else out

    def grid_positions(self, k) -> np.ndarray:
        """Per-dimension bin positions for flat indices (n, ndim)."""
        k = np.asarray(k)
        return np.stack(np.unravel_index(k, self._shape), axis=-1)

    def normalized_coords(self, k=None) -> np.ndarray:
        """Coordinates rescaled so every dimension spans [0, 1].

        Kernel distances are computed on these, so one lengthscale default is
        meaningful across dimensions with heterogeneous physical units.
        Single-bin dimensions map to 0 and contribute no distance.
        """
        if k is None:
            k = np.arange(self.size)
        pos = self.grid_positions(k).astype(float)
        for j, d in enumerate(self.dims):
            if d.bins > 1:
                pos[..., j] /= d.bins - 1
        return pos

    def to_dict(self) -> list[dict]:
        return [
            {"name": d.name, "min": d.min, "max": d.max, "bins": d.bins}
            for d in self.dims
        ]

    @classmethod
    def from_dict(cls, dims: list[dict]) -> "ActionSpace":
        return build_grid([DimensionSpec(d["name"], float(d["min"]), float(d["max"]), int(d["bins"])) for d in dims])


def build_grid(dims) -> ActionSpace:
    """Construct an ActionSpace from DimensionSpec entries (or (min, max, bins)
    tuples, which get auto-generated names x0, x1, ...)."""
    specs = []
    for j, d in enumerate(dims):
        if isinstance(d, DimensionSpec):
            specs.append(d)
        else:
            lo, hi, bins = d
            specs.append(DimensionSpec(f"x{j}", float(lo), float(hi), int(bins)))
    return ActionSpace(tuple(specs))

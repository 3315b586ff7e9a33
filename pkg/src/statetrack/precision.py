"""Finite datatypes and the nearest-value cast used to simulate finite precision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CastGrid:
    """A finite set of representable reals.

    Either a uniform grid ``min, min + step, ..., max`` or an explicit sorted
    list of values.  Use :meth:`uniform` / :meth:`explicit` to build one.
    """

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    step: float = 0.0
    values: tuple = field(default=())

    def __post_init__(self):
        if self.kind == "uniform":
            if not self.step > 0:
                raise ValueError("uniform grid needs step > 0")
            if not self.lo < self.hi:
                raise ValueError("uniform grid needs min < max")
            span = (self.hi - self.lo) / self.step
            if abs(span - round(span)) > 1e-9 * max(1.0, span):
                raise ValueError("max - min must be a whole number of steps")
            if self.lo <= 0.0 <= self.hi:
                k = -self.lo / self.step
                if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
                    raise ValueError("grid spanning 0 must contain 0")
        elif self.kind == "explicit":
            vals = tuple(float(v) for v in self.values)
            if not vals:
                raise ValueError("explicit grid needs at least one value")
            if any(not math.isfinite(v) for v in vals):
                raise ValueError("grid values must be finite")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError("grid values must be strictly ascending")
            if vals[0] <= 0.0 <= vals[-1] and 0.0 not in vals:
                raise ValueError("grid spanning 0 must contain 0")
            object.__setattr__(self, "values", vals)
        else:
            raise ValueError(f"unknown grid kind {self.kind!r}")

    @classmethod
    def uniform(cls, lo: float, hi: float, step: float) -> "CastGrid":
        return cls("uniform", float(lo), float(hi), float(step))

    @classmethod
    def explicit(cls, values) -> "CastGrid":
        return cls("explicit", values=tuple(values))

    @property
    def min(self) -> float:
        return self.lo if self.kind == "uniform" else self.values[0]

    @property
    def max(self) -> float:
        return self.hi if self.kind == "uniform" else self.values[-1]

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "min": self.lo, "max": self.hi, "step": self.step}
        return {"kind": "explicit", "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "CastGrid":
        if d.get("kind") == "uniform":
            return cls.uniform(d["min"], d["max"], d["step"])
        if d.get("kind") == "explicit":
            return cls.explicit(d["values"])
        raise ValueError(f"unknown grid description {d!r}")


DEFAULT_GRID = CastGrid.uniform(-8.0, 8.0, 2.0 ** -10)


def cast_array(x, g: CastGrid) -> np.ndarray:
    """Element-wise nearest grid value; ties go to the smaller value."""
    x = np.asarray(x, dtype=float)
    if np.isnan(x).any():
        raise ValueError("cannot cast NaN")
    if g.kind == "uniform":
        n_steps = round((g.hi - g.lo) / g.step)
        pos = (x - g.lo) / g.step
        # ceil(pos - 0.5) is the nearest index with exact halves rounded down
        idx = np.clip(np.ceil(pos - 0.5), 0, n_steps)
        return g.lo + idx * g.step
    vals = np.asarray(g.values)
    right = np.clip(np.searchsorted(vals, x, side="left"), 1, max(len(vals) - 1, 1))
    if len(vals) == 1:
        return np.full_like(x, vals[0])
    left = right - 1
    dl = np.abs(x - vals[left])
    dr = np.abs(vals[right] - x)
    win = np.where(dr < dl, right, left)
    # rounded distances can tie across more than two values; keep the smallest
    d = np.abs(x - vals[win])
    tied = (win > 0) & (np.abs(x - vals[np.maximum(win - 1, 0)]) == d)
    if tied.any():
        win, flat_x, flat_d = win.reshape(-1), x.reshape(-1), d.reshape(-1)
        for i in np.flatnonzero(tied):
            while win[i] > 0 and abs(flat_x[i] - vals[win[i] - 1]) == flat_d[i]:
                win[i] -= 1
        win = win.reshape(x.shape)
    return vals[win]


def cast(x: float, g: CastGrid) -> float:
    if not isinstance(x, (int, float, np.floating, np.integer)):
        raise TypeError("cast expects a scalar; use cast_state for arrays")
    return float(cast_array(x, g))


def cast_state(h, g: CastGrid) -> np.ndarray:
    return cast_array(h, g)

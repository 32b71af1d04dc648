"""Axis-aligned box domains for optimization variables and contexts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BoxDomain:
    """A box {x : lower <= x <= upper} with strictly positive widths."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.lower, dtype=float))
        high = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if low.shape != high.shape or low.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if not np.all(np.isfinite(low)) or not np.all(np.isfinite(high)):
            raise ValueError("domain bounds must be finite")
        if not np.all(low < high):
            raise ValueError("lower bound must be strictly below upper bound")
        object.__setattr__(self, "lower", low)
        object.__setattr__(self, "upper", high)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, atol: float = 1e-9) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != self.lower.shape:
            return False
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def normalize(self, X) -> np.ndarray:
        """Map points into the unit box."""
        X = np.asarray(X, dtype=float)
        return (X - self.lower) / self.width

    def denormalize(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return self.lower + U * self.width

    def concat(self, other: "BoxDomain") -> "BoxDomain":
        return BoxDomain(
            np.concatenate([self.lower, other.lower]),
            np.concatenate([self.upper, other.upper]),
        )

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def grid(self, per_dim: int) -> np.ndarray:
        """Regular grid with `per_dim` points per axis, as an (n, dim) array."""
        axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def latin_hypercube(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Stratified uniform sample, one point per axis-slice."""
        u = (rng.random((n, self.dim)) + np.stack(
            [rng.permutation(n) for _ in range(self.dim)], axis=-1)) / n
        return self.denormalize(u)

"""Exact Gaussian-process regression with a fixed Matérn-5/2 prior."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

SQRT5 = math.sqrt(5.0)

# diagonal jitter ladder: exact first, then 1e-8 escalating x10 up to 1e-4
FIT_JITTER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
SAMPLE_JITTER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class FactorizationError(np.linalg.LinAlgError):
    pass


def matern52(x, x2) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    r = float(np.sqrt(np.sum((x - x2) ** 2)))
    return (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * math.exp(-SQRT5 * r)


def matern52_from_sqdist(d2: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.maximum(d2, 0.0))
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * d2) * np.exp(-SQRT5 * r)


def sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared distances over the last axis, broadcasting leading axes."""
    diff = A[..., :, None, :] - B[..., None, :, :]
    return np.einsum("...ijk,...ijk->...ij", diff, diff)


def gram(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return matern52_from_sqdist(sqdist(A, B))


def stable_cholesky(M: np.ndarray, ladder=FIT_JITTER) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``M + jitter*I`` for the first jitter that works."""
    eye = np.eye(M.shape[-1])
    for jitter in ladder:
        try:
            return np.linalg.cholesky(M + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(f"matrix not positive definite within jitter {ladder[-1]:g}")


@dataclass(frozen=True)
class KernelSpec:
    """Matérn-5/2 with unit signal variance and unit lengthscale; only the noise varies."""

    noise_var: float = 0.05

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")

    def __call__(self, A, B):
        return gram(np.atleast_2d(A), np.atleast_2d(B))


@dataclass(frozen=True)
class GpData:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    @classmethod
    def empty(cls, dim: int) -> "GpData":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return len(self.targets)


class GpPosterior:
    """Posterior GP given noisy observations, with a cached Cholesky factor.

    ``chol`` factors ``K(X, X) + (noise_var + jitter) I``; ``Ly = chol^{-1} y``.
    """

    def __init__(self, kernel: KernelSpec, data: GpData):
        self.kernel = kernel
        self.data = data
        X = data.inputs
        if len(data):
            A = gram(X, X) + kernel.noise_var * np.eye(len(data))
            self.chol, self.jitter = stable_cholesky(A)
            self.alpha = cho_solve((self.chol, True), data.targets)
            self.Ly = solve_triangular(self.chol, data.targets, lower=True)
        else:
            self.chol = np.zeros((0, 0))
            self.jitter = 0.0
            self.alpha = np.zeros(0)
            self.Ly = np.zeros(0)

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def n(self) -> int:
        return len(self.data)

    def _check(self, Q) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        if Q.ndim == 1:
            Q = Q[:, None] if self.dim == 1 else Q[None, :]
        if Q.shape[-1] != self.dim:
            raise ValueError(f"query dimension {Q.shape[-1]} != training dimension {self.dim}")
        return Q

    def whiten(self, Q: np.ndarray) -> np.ndarray:
        """``chol^{-1} K(X, Q)``, shape (n, m)."""
        if not self.n:
            return np.zeros((0, len(Q)))
        return solve_triangular(self.chol, gram(self.data.inputs, Q), lower=True)

    def predict(self, Q) -> tuple[np.ndarray, np.ndarray]:
        Q = self._check(Q)
        if not self.n:
            return np.zeros(len(Q)), np.ones(len(Q))
        V = self.whiten(Q)
        mean = V.T @ self.Ly
        var = 1.0 - np.einsum("ij,ij->j", V, V)
        return mean, np.maximum(var, 0.0)

    def mean(self, Q) -> np.ndarray:
        return self.predict(Q)[0]

    def covariance(self, Q1, Q2=None) -> np.ndarray:
        Q1 = self._check(Q1)
        Q2 = Q1 if Q2 is None else self._check(Q2)
        K = gram(Q1, Q2)
        if self.n:
            K = K - self.whiten(Q1).T @ self.whiten(Q2)
        return K

    def with_data(self, X, y) -> "GpPosterior":
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        y = np.asarray(y, dtype=float).reshape(-1)
        data = GpData(np.vstack([self.data.inputs, X]), np.concatenate([self.data.targets, y]))
        return GpPosterior(self.kernel, data)


class FixedFunction:
    """A degenerate (point-mass) posterior around a known function.

    Observations never change it, its variance is identically zero.
    """

    def __init__(self, fn, dim: int, kernel: KernelSpec | None = None):
        self.fn = fn
        self._dim = dim
        self.kernel = kernel or KernelSpec()
        self.data = GpData.empty(dim)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def n(self) -> int:
        return 0

    def predict(self, Q):
        Q = np.asarray(Q, dtype=float).reshape(-1, self._dim)
        return np.array([float(self.fn(q)) for q in Q]), np.zeros(len(Q))

    def mean(self, Q):
        return self.predict(Q)[0]

    def covariance(self, Q1, Q2=None):
        Q1 = np.asarray(Q1, dtype=float).reshape(-1, self._dim)
        n2 = len(Q1) if Q2 is None else len(np.asarray(Q2).reshape(-1, self._dim))
        return np.zeros((len(Q1), n2))

    def with_data(self, X, y) -> "FixedFunction":
        return self


def fit_posterior(kernel: KernelSpec, data: GpData) -> GpPosterior:
    return GpPosterior(kernel, data)


def predict(post: GpPosterior, queries) -> tuple[np.ndarray, np.ndarray]:
    return post.predict(queries)


def sample_function(post, grid, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Joint draw(s) of the function values on ``grid``; shape (m,) or (size, m)."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid.reshape(-1, post.dim)
    if not len(grid):
        raise ValueError("empty grid")
    mean = post.mean(grid)
    cov = post.covariance(grid)
    L, _ = stable_cholesky(0.5 * (cov + cov.T), SAMPLE_JITTER)
    z = rng.standard_normal((1 if size is None else size, len(grid)))
    draws = mean + z @ L.T
    return draws[0] if size is None else draws


def dump_posterior_csv(post: GpPosterior, grid, path) -> None:
    """Training data, noise variance and grid predictions as one flat CSV."""
    grid = np.asarray(grid, dtype=float).reshape(-1, post.dim)
    mean, var = post.predict(grid)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        cols = [f"x{j}" for j in range(post.dim)]
        w.writerow(["row", *cols, "target", "mean", "variance", "noise_var"])
        noise = repr(float(post.kernel.noise_var))
        for x, y in zip(post.data.inputs, post.data.targets):
            w.writerow(["train", *(repr(float(c)) for c in x), repr(float(y)), "", "", noise])
        for x, m, v in zip(grid, mean, var):
            w.writerow(["grid", *(repr(float(c)) for c in x), "", repr(float(m)), repr(float(v)), noise])

"""Batched fantasy simulation under common random numbers.

A belief is turned into ``K`` joint realizations of every causal function:
each is a joint draw on the variable's evaluation grid, extended off-grid by
conditioning the posterior on the drawn grid values. Candidate intervention
sequences are then simulated against the same realizations, exogenous draws
and noise, so their objective values differ only through the intervention.

The surrogate loss along a trajectory depends on the fantasized inputs only,
so it is computed exactly from one batched Cholesky factorization of the
fantasized points instead of refitting a posterior per step.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from ..estimator import Belief
from ..gp import FixedFunction, gram, stable_cholesky
from ..scm import Intervention, topological_order

# grid covariances are near-singular; sample draws use a relative floor
REALIZATION_JITTER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3)


def _forward_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``L W = B`` for batched lower-triangular ``L`` (K, n, n), looping over n only."""
    W = np.empty_like(B)
    for i in range(L.shape[1]):
        acc = B[:, i] - np.einsum("kl,klg->kg", L[:, i, :i], W[:, :i])
        W[:, i] = acc / L[:, i, i, None]
    return W


class _VarModel:
    """Root-posterior quantities for one endogenous variable (scaled units)."""

    def __init__(self, b: Belief, vid: str):
        self.vid = vid
        spec = b.graph.var(vid)
        self.unit = spec.unit
        self.range = spec.range
        self.inputs = b.inputs(vid)
        self.in_units = np.array([b.graph.var(p).unit for p in self.inputs])
        self.post = post = b.posteriors[vid]
        self.noise_sd = math.sqrt(b.kernels[vid].noise_var)
        self.weights = b.grids[vid].weights
        self.mass = b.grids.mass
        self.fixed = isinstance(post, FixedFunction)
        self.G = b.scaled_grid(vid)
        if self.fixed:
            self.wvar = 0.0
            return
        mu, var = b.grid_moments(vid)
        self.mu_G = mu
        self.wvar = float(self.weights @ var)
        self.VG = post.whiten(self.G)
        cov = gram(self.G, self.G) - self.VG.T @ self.VG
        self.Ls, _ = stable_cholesky(0.5 * (cov + cov.T), REALIZATION_JITTER)

    def draw(self, K: int, rng: np.random.Generator) -> np.ndarray:
        """Conditioning weights ``alpha`` (K, |G|) for K joint grid draws."""
        if self.fixed:
            return np.zeros((K, 0))
        z = rng.standard_normal((K, len(self.G)))
        # f_G - mu_G = Ls z, so alpha = (Ls Ls^T)^{-1} Ls z = Ls^{-T} z
        return solve_triangular(self.Ls, z.T, lower=True, trans="T").T

    def evaluate(self, Q: np.ndarray, alpha: np.ndarray):
        """Realized values at scaled inputs ``Q`` (q, d), one alpha row per point.

        Returns (values, whitened cross-covariance, posterior cross-covariance to the grid).
        """
        if self.fixed:
            return np.array([float(self.post.fn(q)) for q in Q]), None, None
        post = self.post
        if post.n:
            VQ = solve_triangular(post.chol, gram(post.data.inputs, Q), lower=True)
            mean = VQ.T @ post.Ly
            kpg = gram(Q, self.G) - VQ.T @ self.VG
        else:
            VQ = np.zeros((0, len(Q)))
            mean = np.zeros(len(Q))
            kpg = gram(Q, self.G)
        return mean + np.einsum("qg,qg->q", kpg, alpha), VQ.T, kpg


class Realizations:
    """``K`` joint realizations of all causal functions drawn from belief ``b``."""

    def __init__(self, b: Belief, K: int, rng: np.random.Generator):
        self.belief = b
        self.K = K
        self.models = {v: _VarModel(b, v) for v in b.graph.endogenous()}
        # draw order fixed by declaration order of endogenous variables
        self.alpha = {v: m.draw(K, rng) for v, m in self.models.items()}

    def root_surrogate(self) -> float:
        return sum(m.mass * m.wvar for m in self.models.values())


class FantasySimulator:
    """Simulates intervention sequences against shared realizations and draws.

    ``exo`` and ``noise`` map variable ids to arrays of shape (K, steps, M):
    raw exogenous values and unit-normal measurement noise respectively.
    """

    def __init__(self, real: Realizations, exo: dict, noise: dict, steps: int, M: int):
        self.real = real
        self.graph = real.belief.graph
        self.order = topological_order(self.graph)
        self.exo = exo
        self.noise = noise
        self.steps = steps
        self.M = M
        self._cache: dict = {}

    @classmethod
    def draw(cls, real: Realizations, steps: int, M: int, rng: np.random.Generator, with_noise_vars=False):
        graph = real.belief.graph
        shape = (real.K, steps, M)
        exo = {}
        for vid in sorted(graph.exogenous()):
            spec = graph.var(vid)
            if spec.noise and not with_noise_vars:
                continue
            exo[vid] = np.asarray(spec.distribution.sample(rng, size=shape), dtype=float)
        noise = {vid: rng.standard_normal(shape) for vid in graph.endogenous()}
        return cls(real, exo, noise, steps, M)

    def simulate(self, seq: Sequence[Intervention], with_loss=True, with_samples=False):
        """Run ``seq`` (length <= steps); returns (surrogate path (K, len+1), samples).

        ``samples[k]`` is the list of (intervention, sample) records of trajectory k.
        """
        K, M, n = self.real.K, self.M, len(seq)
        if n > self.steps:
            raise ValueError("sequence longer than the pre-drawn horizon")
        pts = {v: [] for v in self.real.models}  # per step: (VQ, kpg, Q) or None when skipped
        values_log = []
        for j, u in enumerate(seq):
            vals, step_pts = self._step(j, u)
            for vid, s in step_pts.items():
                pts[vid].append(s)
            values_log.append(vals)
        path = self._surrogate_path(pts, n) if with_loss else None
        samples = self._records(seq, values_log) if with_samples else None
        return path, samples

    def _step(self, j: int, u: Intervention):
        # steps are independent given the realizations, so step j depends on (j, u) only;
        # later steps repeat across candidates and are cached
        key = (j, u)
        if j > 0 and key in self._cache:
            return self._cache[key]
        K, M = self.real.K, self.M
        models, alpha = self.real.models, self.real.alpha
        traj = np.repeat(np.arange(K), M)
        vals, step_pts = {}, {}
        for vid in self.order:
            if vid in u:
                vals[vid] = np.full((K, M), u[vid])
                if vid in models:
                    step_pts[vid] = None
                continue
            if vid not in models:
                if vid in self.exo:
                    vals[vid] = self.exo[vid][:, j, :]
                continue
            m = models[vid]
            if m.inputs:
                Q = np.stack([vals[p].reshape(-1) for p in m.inputs], axis=1) / m.in_units
            else:
                Q = np.zeros((K * M, 0))
            f, VQ, kpg = m.evaluate(Q, None if m.fixed else alpha[vid][traj])
            y = f * m.unit + m.noise_sd * m.unit * self.noise[vid][:, j, :].reshape(-1)
            vals[vid] = np.asarray(m.range.clip(y), dtype=float).reshape(K, M)
            if m.fixed:
                step_pts[vid] = None
            else:
                step_pts[vid] = (VQ.reshape(K, M, m.post.n), kpg.reshape(K, M, len(m.G)), Q.reshape(K, M, len(m.inputs)))
        if j > 0:
            self._cache[key] = (vals, step_pts)
        return vals, step_pts

    def _surrogate_path(self, pts: dict, n: int) -> np.ndarray:
        K, M = self.real.K, self.M
        path = np.zeros((K, n + 1))
        for vid, m in self.real.models.items():
            if m.fixed:
                continue
            base = m.mass * m.wvar
            steps = pts[vid]
            live = [s is not None for s in steps]
            if not any(live):
                path += base
                continue
            N = m.post.n
            d = len(m.inputs)
            npts = n * M
            V = np.zeros((K, npts, N))
            C = np.zeros((K, npts, len(m.G)))
            P = np.zeros((K, npts, d))
            for j, s in enumerate(steps):
                if s is not None:
                    V[:, j * M:(j + 1) * M], C[:, j * M:(j + 1) * M], P[:, j * M:(j + 1) * M] = s
            A = gram(P, P) - V @ V.transpose(0, 2, 1)
            A += m.noise_sd**2 * np.eye(npts)
            mask = np.repeat(np.array(live), M)
            if not mask.all():
                # skipped points carry no information: decouple them exactly
                A[:, ~mask, :] = 0.0
                A[:, :, ~mask] = 0.0
                A[:, ~mask, ~mask] = 1.0
            Lc = np.linalg.cholesky(A)
            W = _forward_solve(Lc, C)
            red = np.cumsum((W**2) @ m.weights, axis=1)[:, M - 1::M]
            path[:, 0] += base
            path[:, 1:] += m.mass * (m.wvar - red)
        return path

    def _records(self, seq, values_log) -> list[list]:
        K, M = self.real.K, self.M
        out = [[] for _ in range(K)]
        for u, vals in zip(seq, values_log):
            for k in range(K):
                for i in range(M):
                    out[k].append((u, {vid: float(v[k, i]) for vid, v in vals.items()}))
        return out


def discounted_costs(path: np.ndarray, stage_costs: Sequence[float], gamma: float, terminal: bool = True) -> np.ndarray:
    """Per-trajectory sum of discounted stage costs plus the discounted terminal surrogate.

    ``path[:, j]`` is the surrogate loss after ``j`` steps.
    """
    n = path.shape[1] - 1
    disc = gamma ** np.arange(n)
    g = np.diff(path, axis=1) + np.asarray(stage_costs, dtype=float)
    total = g @ disc
    if terminal:
        total = total + gamma**n * path[:, -1]
    return total

"""Covariance matrix adaptation evolution strategy with an ask/tell interface.

Standard (mu/mu_w, lambda) formulation: log-rank recombination weights,
cumulative step-size adaptation, rank-1 plus rank-mu covariance update, lazy
eigendecomposition. The generator is counter-based (Philox) so trajectories
are reproducible from the seed alone.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

CONDITION_CAP = 1e14


@dataclass
class BoundedEncoding:
    """Log-space encoding of positive scale parameters.

    decode(x) = exp(clamp(x, ln s_min, ln s_max)); decode(0) is the identity
    scale. encode is the plain log on [s_min, s_max].
    """

    s_min: float = 1.0 / 3.0
    s_max: float = 3.0

    def __post_init__(self):
        if not 0 < self.s_min <= 1.0 <= self.s_max:
            raise ValueError("bounds must satisfy 0 < s_min <= 1 <= s_max")
        self.lo = math.log(self.s_min)
        self.hi = math.log(self.s_max)

    def decode(self, x: np.ndarray) -> np.ndarray:
        return np.exp(np.clip(np.asarray(x, dtype=np.float64), self.lo, self.hi))

    def encode(self, s: np.ndarray) -> np.ndarray:
        return np.log(np.asarray(s, dtype=np.float64))


class CmaState:
    """Optimizer state; ask() samples a population, tell() consumes ranked
    fitnesses (minimization). Mutation is single-threaded by contract; clone
    via copy.deepcopy for branching experiments."""

    def __init__(
        self,
        n: int,
        mean0=None,
        sigma0: float = 0.3,
        seed: int = 0,
        lam: int | None = None,
    ):
        if n < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        if sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {sigma0}")
        self.n = n
        self.mean = (
            np.zeros(n) if mean0 is None else np.array(mean0, dtype=np.float64).reshape(n)
        )
        self.sigma = float(sigma0)
        self.lam = lam if lam is not None else 4 + int(3 * math.log(n))
        if self.lam < 2:
            raise ValueError("population size must be >= 2")
        self.mu = self.lam // 2
        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / float(self.weights @ self.weights)

        self.c_c = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.c_sigma = (self.mueff + 2) / (n + self.mueff + 5)
        self.c_1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.c_mu = min(
            1 - self.c_1,
            2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff),
        )
        self.d_sigma = (
            1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.c_sigma
        )
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.inv_sqrt_C = np.eye(n)
        self.generation = 0
        self.eigen_gap = max(1, int(1.0 / (10 * n * (self.c_1 + self.c_mu))))
        self.last_eigen_gen = 0

        self.rng = np.random.Generator(np.random.Philox(seed))
        self.best_x: np.ndarray | None = None
        self.best_f: float = math.inf

    def clone(self) -> "CmaState":
        return copy.deepcopy(self)

    def ask(self) -> np.ndarray:
        """Sample lambda candidates: m + sigma * B D z, z ~ N(0, I)."""
        z = self.rng.standard_normal((self.lam, self.n))
        return self.mean + self.sigma * (z * self.D) @ self.B.T

    def tell(self, candidates: np.ndarray, fitnesses) -> None:
        """Rank-based state update. Non-finite fitnesses rank worst; ties
        break by candidate index."""
        candidates = np.asarray(candidates, dtype=np.float64)
        fit = np.asarray(fitnesses, dtype=np.float64)
        if len(candidates) != self.lam or len(fit) != self.lam:
            raise ValueError(
                f"expected {self.lam} candidates and fitnesses, "
                f"got {len(candidates)}/{len(fit)}"
            )
        order = sorted(
            range(self.lam),
            key=lambda i: (not np.isfinite(fit[i]), fit[i] if np.isfinite(fit[i]) else 0.0, i),
        )
        best_i = order[0]
        if np.isfinite(fit[best_i]) and fit[best_i] < self.best_f:
            self.best_f = float(fit[best_i])
            self.best_x = candidates[best_i].copy()

        old_mean = self.mean
        parents = candidates[order[: self.mu]]
        self.mean = self.weights @ parents
        y_w = (self.mean - old_mean) / self.sigma

        self.p_sigma = (1 - self.c_sigma) * self.p_sigma + math.sqrt(
            self.c_sigma * (2 - self.c_sigma) * self.mueff
        ) * (self.inv_sqrt_C @ y_w)
        self.generation += 1
        ps_norm = float(np.linalg.norm(self.p_sigma))
        h_sigma = ps_norm / math.sqrt(
            1 - (1 - self.c_sigma) ** (2 * self.generation)
        ) / self.chi_n < 1.4 + 2 / (self.n + 1)
        self.p_c = (1 - self.c_c) * self.p_c + h_sigma * math.sqrt(
            self.c_c * (2 - self.c_c) * self.mueff
        ) * y_w

        ys = (parents - old_mean) / self.sigma
        rank_mu = (ys * self.weights[:, None]).T @ ys
        self.C = (
            (1 - self.c_1 - self.c_mu) * self.C
            + self.c_1
            * (
                np.outer(self.p_c, self.p_c)
                + (0.0 if h_sigma else 1.0) * self.c_c * (2 - self.c_c) * self.C
            )
            + self.c_mu * rank_mu
        )
        self.sigma *= math.exp((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1))

        if self.generation - self.last_eigen_gen >= self.eigen_gap:
            self._refresh_eigen()

    def _refresh_eigen(self):
        self.last_eigen_gen = self.generation
        self.C = (self.C + self.C.T) / 2.0
        vals, vecs = np.linalg.eigh(self.C)
        cap_floor = vals.max() / CONDITION_CAP
        if vals.min() < cap_floor:
            log.warning(
                "covariance condition number exceeded %g; clamping eigenvalues",
                CONDITION_CAP,
            )
            vals = np.maximum(vals, cap_floor)
            self.C = (vecs * vals) @ vecs.T
        self.B = vecs
        self.D = np.sqrt(vals)
        self.inv_sqrt_C = (vecs / self.D) @ vecs.T

    def best(self) -> tuple[np.ndarray, float]:
        if self.best_x is None:
            raise RuntimeError("no evaluations yet; call tell first")
        return self.best_x.copy(), self.best_f


def new(n: int, mean0=None, sigma0: float = 0.3, seed: int = 0, lam: int | None = None) -> CmaState:
    return CmaState(n, mean0, sigma0, seed, lam)


def minimize(
    fn,
    state: CmaState,
    max_generations: int = 150,
    stall_generations: int = 20,
    stall_tolerance: float = 1e-6,
    callback=None,
) -> tuple[np.ndarray, float]:
    """Drive ask/tell until the budget runs out or the best fitness stalls
    (improvement below ``stall_tolerance`` over ``stall_generations``)."""
    history: list[float] = []
    for gen in range(max_generations):
        xs = state.ask()
        fs = [fn(x) for x in xs]
        state.tell(xs, fs)
        history.append(state.best_f)
        if callback is not None:
            callback(gen, state, fs)
        if (
            len(history) > stall_generations
            and history[-stall_generations - 1] - history[-1] < stall_tolerance
        ):
            break
    return state.best()

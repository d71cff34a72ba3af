"""Reference solvers on empirical measures.

All costs use ``c(x, y) = 1/2 |x - y|^2``, so the values are directly
comparable with the restricted metric.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .distributions import SampleSet
from .errors import ValidationError

__all__ = [
    "MAX_DENSE_SAMPLES",
    "Coupling",
    "Assignment",
    "cost_matrix",
    "exact_w2_assignment",
    "brute_force_w2",
    "sinkhorn",
    "barycentric_map",
    "map_error",
    "save_coupling_csv",
]

MAX_DENSE_SAMPLES = 20_000
BRUTE_FORCE_LIMIT = 8


def _pts(s):
    return s.points if isinstance(s, SampleSet) else np.atleast_2d(np.asarray(s, dtype=float))


def cost_matrix(x, y):
    """``C[i, j] = 1/2 |x_i - y_j|^2``."""
    x, y = _pts(x), _pts(y)
    if x.shape[1] != y.shape[1]:
        raise ValidationError(f"dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    if max(x.shape[0], y.shape[0]) > MAX_DENSE_SAMPLES:
        raise ValidationError(
            f"dense {x.shape[0]}x{y.shape[0]} cost matrix refused (limit {MAX_DENSE_SAMPLES} samples per side)"
        )
    sq = 0.5 * (np.einsum("ij,ij->i", x, x)[:, None] + np.einsum("ij,ij->i", y, y)[None, :]) - x @ y.T
    return np.maximum(sq, 0.0)


class Assignment(NamedTuple):
    w2: float
    permutation: np.ndarray

    @property
    def squared(self):
        return self.w2**2


def exact_w2_assignment(s_mu, s_nu) -> Assignment:
    """Exact W2 between two uniform samples of equal size.

    Solves the assignment problem on the cost matrix (Hungarian-type solver
    from SciPy). ``permutation[i]`` is the index of the ``nu`` sample matched
    to ``mu`` sample ``i`` and ``w2**2 = mean_i c(x_i, y_perm[i])``.
    """
    x, y = _pts(s_mu), _pts(s_nu)
    if x.shape[0] != y.shape[0]:
        raise ValidationError(f"assignment needs equal sample counts, got {x.shape[0]} and {y.shape[0]}")
    c = cost_matrix(x, y)
    rows, cols = linear_sum_assignment(c)
    perm = np.empty(x.shape[0], dtype=int)
    perm[rows] = cols
    sq = float(c[rows, cols].mean())
    return Assignment(float(np.sqrt(max(sq, 0.0))), perm)


def brute_force_w2(s_mu, s_nu) -> float:
    """Squared W2 by enumerating every matching (at most 8 points a side)."""
    x, y = _pts(s_mu), _pts(s_nu)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValidationError("brute force needs equal sample counts")
    if n > BRUTE_FORCE_LIMIT:
        raise ValidationError(f"brute force refused for N={n} > {BRUTE_FORCE_LIMIT}")
    c = cost_matrix(x, y)
    idx = np.arange(n)
    return float(min(c[idx, list(p)].sum() for p in itertools.permutations(range(n))) / n)


@dataclass
class Coupling:
    """Transport plan between two uniform samples.

    ``marginal_violation`` is the largest absolute deviation of a row or
    column sum from its target mass. ``value_history`` and
    ``violation_history`` hold one entry per sweep when requested.
    """

    matrix: np.ndarray
    value: float
    marginal_violation: float = 0.0
    epsilon: float = 0.0
    iterations: int = 0
    value_history: list = field(default_factory=list)
    violation_history: list = field(default_factory=list)

    @classmethod
    def from_permutation(cls, perm, cost=None):
        n = len(perm)
        m = np.zeros((n, n))
        m[np.arange(n), perm] = 1.0 / n
        value = float((m * cost).sum()) if cost is not None else float("nan")
        return cls(m, value)


def _violation(plan, a, b):
    return float(max(np.abs(plan.sum(axis=1) - a).max(), np.abs(plan.sum(axis=0) - b).max()))


def sinkhorn(s_mu, s_nu, epsilon: float, iters: int = 200, history: bool = False) -> Coupling:
    """Entropic OT plan by log-domain Sinkhorn iterations.

    One sweep updates the ``mu`` potential then the ``nu`` potential, so the
    column marginals are exact after every sweep and ``marginal_violation``
    measures the row sums. No epsilon scaling is applied.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if iters < 1:
        raise ValidationError("iters must be >= 1")
    c = cost_matrix(s_mu, s_nu)
    n, m = c.shape
    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    f = np.zeros(n)
    g = np.zeros(m)
    a, b = np.exp(log_a), np.exp(log_b)
    values, violations = [], []

    def plan():
        return np.exp((f[:, None] + g[None, :] - c) / epsilon + log_a[:, None] + log_b[None, :])

    for _ in range(iters):
        f = -epsilon * logsumexp((g[None, :] - c) / epsilon + log_b[None, :], axis=1)
        g = -epsilon * logsumexp((f[:, None] - c) / epsilon + log_a[:, None], axis=0)
        if history:
            p = plan()
            values.append(float((p * c).sum()))
            violations.append(_violation(p, a, b))
    p = plan()
    return Coupling(p, float((p * c).sum()), _violation(p, a, b), float(epsilon), iters, values, violations)


def barycentric_map(coupling, s_mu, s_nu) -> SampleSet:
    """Conditional mean of ``nu`` given each ``mu`` sample under the plan."""
    pi = coupling.matrix if isinstance(coupling, Coupling) else np.asarray(coupling, dtype=float)
    x, y = _pts(s_mu), _pts(s_nu)
    if pi.shape != (x.shape[0], y.shape[0]):
        raise ValidationError(f"coupling shape {pi.shape} does not match samples ({x.shape[0]}, {y.shape[0]})")
    mass = pi.sum(axis=1)
    if np.any(mass <= 0):
        raise ValidationError(f"coupling has zero mass on row {int(np.argmax(mass <= 0))}")
    return SampleSet(pi @ y / mass[:, None])


def map_error(estimated, reference) -> float:
    """Mean Euclidean distance between corresponding rows."""
    e, r = _pts(estimated), _pts(reference)
    if e.shape != r.shape:
        raise ValidationError(f"shapes differ: {e.shape} vs {r.shape}")
    return float(np.linalg.norm(e - r, axis=1).mean())


def save_coupling_csv(coupling, path, comments=()) -> None:
    """Dense plan, one row of the matrix per line."""
    pi = coupling.matrix if isinstance(coupling, Coupling) else np.asarray(coupling)
    lines = [f"# {c}" for c in comments]
    lines += [",".join(f"{v:.17g}" for v in row) for row in pi]
    with open(os.fspath(path), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

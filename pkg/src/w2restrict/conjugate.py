"""Numerical convex conjugate ``f*(y) = sup_x <y, x> - f(x)`` and its argmax.

The argmax ``x_hat`` is also the gradient of the conjugate at ``y``, which is
what the transport map and the stochastic gradient need.

The solver is an ascent method on ``phi(x) = <y, x> - f(x)`` with an Armijo
backtracking line search. Two search directions are available:

``"bfgs"`` (default)
    The ascent direction ``H (y - grad f(x))`` with ``H`` a per-row BFGS
    estimate of the inverse Hessian of ``f``; the update is skipped when the
    curvature pair is not positive, and ``H`` falls back to the identity if
    it stops producing an ascent direction. Ill-conditioned quadratics are
    solved in a handful of iterations.
``"gradient"``
    Plain gradient ascent whose first trial step is the Barzilai-Borwein
    length ``|s|^2 / <s, grad f(x_new) - grad f(x)>``. This is also what
    runs whenever a search box is given, with iterates clamped to the box.

Only steps that pass the Armijo test are taken, so ``phi`` never decreases;
once ``phi`` is flat to rounding error a step is accepted instead when it
shrinks the residual by 10% ``|y - grad f(x)|``.
A row stops when its residual is below ``grad_tol``, when an accepted step
is shorter than ``x_tol * (1 + |x|)`` (the only test that fires at a kink of
a nonsmooth potential), or after ``max_iter`` iterations. Rows of a batch
are solved simultaneously with independent step sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DivergenceError, ValidationError
from .potentials import Potential, _as_batch, _check

_EPS = np.finfo(float).eps

__all__ = [
    "ConjugateConfig",
    "ConjugateResult",
    "BatchConjugateResult",
    "WarmStartCache",
    "conjugate_argmax",
    "conjugate_batch",
    "fenchel_gap",
]


@dataclass(frozen=True)
class ConjugateConfig:
    max_iter: int = 200
    grad_tol: float = 1e-7
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 50
    use_closed_form: bool = True
    direction: str = "bfgs"
    x_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iter < 1 or self.max_backtracks < 1:
            raise ValidationError("iteration limits must be positive")
        if not (self.grad_tol > 0 and self.step_init > 0 and self.armijo_c > 0):
            raise ValidationError("grad_tol, step_init and armijo_c must be positive")
        if not self.x_tol >= 0:
            raise ValidationError("x_tol must be nonnegative")
        if not 0 < self.backtrack_factor < 1:
            raise ValidationError("backtrack_factor must lie in (0, 1)")
        if self.direction not in ("bfgs", "gradient"):
            raise ValidationError(f"direction must be 'bfgs' or 'gradient', got {self.direction!r}")


class ConjugateResult(NamedTuple):
    x_hat: np.ndarray
    value: float
    iters: int
    converged: bool


class BatchConjugateResult(NamedTuple):
    x_hat: np.ndarray
    values: np.ndarray
    iters: np.ndarray
    converged: np.ndarray


class WarmStartCache:
    """Last argmax per sample index, used as the next starting point."""

    def __init__(self):
        self._store = {}

    def __len__(self):
        return len(self._store)

    def __contains__(self, idx):
        return int(idx) in self._store

    def starts(self, indices, fallback):
        """Cached points for ``indices``; rows without an entry use ``fallback``."""
        x0 = np.array(fallback, dtype=float, copy=True)
        for row, idx in enumerate(indices):
            hit = self._store.get(int(idx))
            if hit is not None:
                x0[row] = hit
        return x0

    def update(self, indices, x_hat):
        # deterministic order so repeated indices resolve the same way every run
        order = np.argsort(np.asarray(indices), kind="stable")
        for row in order:
            v = x_hat[row]
            if np.all(np.isfinite(v)):
                self._store[int(indices[row])] = np.array(v, copy=True)

    def clear(self):
        self._store.clear()


BB_GROWTH = 4.0


def _box_arrays(box, dim):
    if box is None:
        return None
    lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (dim,)).copy() for v in box)
    if np.any(lo >= hi):
        raise ValidationError("search box needs lower < upper in every coordinate")
    return lo, hi


def _projected_residual(r, x, box):
    if box is None:
        return r
    lo, hi = box
    r = r.copy()
    r[(x <= lo) & (r < 0)] = 0.0
    r[(x >= hi) & (r > 0)] = 0.0
    return r


def conjugate_batch(
    theta: Potential,
    y,
    config: Optional[ConjugateConfig] = None,
    x0=None,
    box=None,
    check: bool = True,
) -> BatchConjugateResult:
    """Solve the conjugate problem for every row of ``y``.

    Parameters
    ----------
    theta : Potential
        Feasible parameters.
    y : array, shape (n, d)
        Dual points.
    config : ConjugateConfig, optional
    x0 : array, shape (n, d), optional
        Starting points; defaults to ``y`` itself (exact for ``1/2 |x|^2``).
    box : (lower, upper), optional
        Search box; required when ``theta`` is not strongly convex. Iterates
        are clamped to it, and a row whose clamp is active at termination is
        reported as not converged.
    check : bool
        Validate feasibility of ``theta`` first.
    """
    config = config or ConjugateConfig()
    if check:
        _check(theta)
    y, _ = _as_batch(y, theta.dim)
    n, d = y.shape

    if config.use_closed_form:
        closed = theta._conjugate(y)
        if closed is not None:
            vals, xhat = closed
            return BatchConjugateResult(xhat, vals, np.zeros(n, dtype=int), np.ones(n, dtype=bool))

    bx = _box_arrays(box, d)
    if bx is None and theta.strong_convexity() <= 0:
        raise ValidationError(
            f"{theta.tag} potential is not strongly convex; a search box is required for its conjugate"
        )

    x = np.array(y if x0 is None else x0, dtype=float, copy=True)
    if x.shape != y.shape:
        raise ValidationError(f"starting points have shape {x.shape}, expected {y.shape}")
    if bx is not None:
        x = np.clip(x, *bx)
    # quasi-Newton directions are only used without a box; projected steps keep the gradient
    use_bfgs = config.direction == "bfgs" and bx is None

    with np.errstate(over="ignore", invalid="ignore"):
        fval, gf = theta._value_and_grad_x(x)
        phi = np.einsum("ni,ni->n", y, x) - fval
    r = y - gf
    step = np.full(n, float(config.step_init))
    hinv = np.broadcast_to(np.eye(d), (n, d, d)).copy() if use_bfgs else None
    scale = np.ones(n)
    restarted = np.zeros(n, dtype=bool)
    iters = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    beta, c = config.backtrack_factor, config.armijo_c

    def _diverged(rows):
        raise DivergenceError(f"conjugate of {theta.tag} potential diverged at y={y[rows[0]].tolist()}")

    for _ in range(config.max_iter):
        pr = _projected_residual(r, x, bx)
        active &= np.linalg.norm(pr, axis=1) > config.grad_tol
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break

        if use_bfgs:
            p = np.einsum("nij,nj->ni", hinv[idx], r[idx])
            descent = np.einsum("ni,ni->n", p, r[idx]) <= 0
            if np.any(descent):
                hinv[idx[descent]] = np.eye(d)
                p[descent] = r[idx[descent]]
            t = np.where(iters[idx] == 0, step[idx], 1.0)
        else:
            p = r[idx]
            t = step[idx].copy()

        pending = np.arange(idx.size)
        x_new = np.empty((idx.size, d))
        f_new = np.empty(idx.size)
        g_new = np.empty((idx.size, d))
        ok = np.zeros(idx.size, dtype=bool)
        for _bt in range(config.max_backtracks):
            rows = idx[pending]
            cand = x[rows] + t[pending, None] * p[pending]
            if bx is not None:
                cand = np.clip(cand, *bx)
            fv, gv = theta._value_and_grad_x(cand)
            # a non-finite trial is treated as a failed Armijo test
            finite = np.isfinite(fv) & np.all(np.isfinite(cand), axis=1) & np.all(np.isfinite(gv), axis=1)
            phi_c = np.einsum("ni,ni->n", y[rows], cand) - fv
            gain = np.einsum("ni,ni->n", r[rows], cand - x[rows])
            accept = finite & (gain > 0) & (phi_c >= phi[rows] + c * gain) & (phi_c >= phi[rows])
            # once phi changes only at rounding level, progress is judged by the residual
            yx = np.einsum("ni,ni->n", y[rows], cand)
            flat = np.abs(phi_c - phi[rows]) <= 1e3 * _EPS * (1.0 + np.abs(yx) + np.abs(fv))
            shrink = np.linalg.norm(y[rows] - gv, axis=1) < 0.9 * np.linalg.norm(r[rows], axis=1)
            accept |= finite & flat & shrink
            acc = pending[accept]
            x_new[acc], f_new[acc], g_new[acc] = cand[accept], fv[accept], gv[accept]
            ok[acc] = True
            pending = pending[~accept]
            if pending.size == 0:
                break
            t[pending] *= beta
            # a trial step below the settling threshold cannot move the iterate meaningfully
            rows = idx[pending]
            big = t[pending] * np.linalg.norm(p[pending], axis=1) > config.x_tol * (
                1.0 + np.linalg.norm(x[rows], axis=1)
            )
            pending = pending[big]
            if pending.size == 0:
                break

        # a failed line search ends the row, except that a stale BFGS matrix gets one restart
        stalled = idx[~ok]
        if stalled.size and not np.all(np.isfinite(phi[stalled])):
            _diverged(stalled)
        if use_bfgs and stalled.size:
            retry = stalled[~restarted[stalled]]
            hinv[retry] = scale[retry, None, None] * np.eye(d)
            restarted[retry] = True
            stalled = stalled[~np.isin(stalled, retry)]
        active[stalled] = False

        rows = idx[ok]
        if rows.size == 0:
            break
        s = x_new[ok] - x[rows]
        dg = g_new[ok] - (y[rows] - r[rows])
        x[rows] = x_new[ok]
        phi[rows] = np.einsum("ni,ni->n", y[rows], x_new[ok]) - f_new[ok]
        r[rows] = y[rows] - g_new[ok]
        first = iters[rows] == 0
        iters[rows] += 1
        # nonsmooth potentials never reach grad_tol; stop once the iterate has settled
        settled = np.linalg.norm(s, axis=1) <= config.x_tol * (1.0 + np.linalg.norm(x[rows], axis=1))
        active[rows[settled]] = False

        ss = np.einsum("ni,ni->n", s, s)
        sy = np.einsum("ni,ni->n", s, dg)
        curved = sy > 1e-12 * np.maximum(ss, 1e-300)
        if use_bfgs:
            yy = np.einsum("ni,ni->n", dg, dg)
            h = hinv[rows]
            reset = first & curved
            scale[rows[reset]] = sy[reset] / yy[reset]
            h[reset] = scale[rows[reset], None, None] * np.eye(d)
            upd = np.flatnonzero(curved)
            if upd.size:
                rho = 1.0 / sy[upd]
                su, yu, hu = s[upd], dg[upd], h[upd]
                hy = np.einsum("nij,nj->ni", hu, yu)
                yhy = np.einsum("ni,ni->n", yu, hy)
                hu = (
                    hu
                    - rho[:, None, None] * (hy[:, :, None] * su[:, None, :] + su[:, :, None] * hy[:, None, :])
                    + (rho * (1 + rho * yhy))[:, None, None] * su[:, :, None] * su[:, None, :]
                )
                h[upd] = hu
            hinv[rows] = h
        else:
            bb = np.where(curved, ss / np.where(curved, sy, 1.0), t[ok] / beta)
            # across kinks sy is tiny and BB overshoots; growth is capped to limit backtracking
            step[rows] = np.clip(bb, 1e-10, np.minimum(1e10, BB_GROWTH * t[ok]))

    bad = ~(np.isfinite(phi) & np.all(np.isfinite(x), axis=1))
    if np.any(bad):
        _diverged(np.flatnonzero(bad))
    converged = np.linalg.norm(r, axis=1) <= config.grad_tol
    return BatchConjugateResult(x, phi, iters, converged)


def conjugate_argmax(
    theta: Potential,
    y,
    config: Optional[ConjugateConfig] = None,
    warm=None,
    box=None,
) -> ConjugateResult:
    """Maximiser of ``<y, x> - f(x)`` for a single point ``y``.

    Uses the class's closed-form conjugate when one exists and
    ``config.use_closed_form`` is set; otherwise runs the iterative solver
    from ``warm`` (default ``y``).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x0 = None if warm is None else np.atleast_1d(np.asarray(warm, dtype=float))[None, :]
    res = conjugate_batch(theta, y[None, :], config, x0=x0, box=box)
    return ConjugateResult(res.x_hat[0], float(res.values[0]), int(res.iters[0]), bool(res.converged[0]))


def fenchel_gap(theta: Potential, x, y, config: Optional[ConjugateConfig] = None, box=None) -> float:
    """``f(x) + f*(y) - <x, y>``; nonnegative up to the inner-solve accuracy."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    res = conjugate_argmax(theta, y, config, box=box)
    return float(theta._value(x[None, :])[0] + res.value - x @ y)

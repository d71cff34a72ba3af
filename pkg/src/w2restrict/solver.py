"""Fitting the restricted dual objective.

The objective for samples ``X ~ mu`` and ``Y ~ nu`` is

    J(theta) = mean_i f(X_i; theta) + mean_j f*(Y_j; theta),

minimised over feasible ``theta`` by projected stochastic gradient descent
(:func:`fit`), with closed-form minimisers for the quadratic and
ball-constrained linear classes.
"""

from __future__ import annotations

import json
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from . import potentials as pot
from ._linalg import eig_clamp, sym_inv_sqrt, sym_sqrt
from .conjugate import ConjugateConfig, WarmStartCache, conjugate_batch
from .distributions import SampleSet, empirical_moments
from .errors import DivergenceError, SolverQualityWarning, ValidationError

__all__ = [
    "TrainConfig",
    "DecaySchedule",
    "FitResult",
    "QuadraticFit",
    "initial_potential",
    "estimate_objective",
    "stochastic_gradient",
    "fit",
    "fit_quadratic_closed_form",
    "quadratic_minimiser_from_moments",
    "fit_ball_linear_closed_form",
    "save_checkpoint",
    "load_checkpoint",
    "save_training_log",
]

CHECKPOINT_FORMAT = "w2restrict-checkpoint/1"

Schedule = Union[float, Sequence[float], Callable[[int], float]]


def _points(s):
    return s.points if isinstance(s, SampleSet) else np.atleast_2d(np.asarray(s, dtype=float))


def _schedule_value(sched, k, name):
    if callable(sched):
        v = sched(k)
    elif np.ndim(sched) == 0:
        v = sched
    else:
        if k - 1 >= len(sched):
            raise ValidationError(f"{name} schedule has {len(sched)} entries but epoch {k} was requested")
        v = sched[k - 1]
    return v


@dataclass(frozen=True)
class DecaySchedule:
    """Step sizes ``initial / (1 + k / scale) ** power`` for 1-based epochs ``k``.

    Decaying steps let the last iterate settle instead of hovering at a
    noise floor set by a constant step; ``power=1`` is the classical
    Robbins-Monro rate, ``power=0.5`` decays more gently.
    """

    initial: float
    scale: float = 50.0
    power: float = 1.0

    def __post_init__(self):
        if not (self.initial > 0 and self.scale > 0 and self.power >= 0):
            raise ValidationError("initial step and scale must be positive and power nonnegative")

    def __call__(self, k: int) -> float:
        return self.initial / (1.0 + k / self.scale) ** self.power


@dataclass(frozen=True)
class TrainConfig:
    """Settings of the projected SGD loop.

    ``epochs`` is the number K of outer updates, each on one minibatch.
    ``step_size`` and ``batch_size`` are constants, per-epoch sequences or
    callables of the 1-based epoch index. ``eval_every`` controls how often
    the full-sample objective is recorded (0 records only the final value).
    ``search_box`` is passed to the conjugate solver and is required for
    potentials that are not strongly convex.
    """

    epochs: int = 400
    step_size: Schedule = 1e-3
    batch_size: Union[int, Sequence[int], Callable[[int], int]] = 64
    inner: ConjugateConfig = field(default_factory=ConjugateConfig)
    seed: int = 0
    eval_every: int = 50
    search_box: Optional[tuple] = None
    warm_start: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.eval_every < 0:
            raise ValidationError("eval_every must be >= 0")
        for k in range(1, min(self.epochs, 3) + 1):
            self.step(k), self.batch(k)

    def step(self, k):
        v = float(_schedule_value(self.step_size, k, "step size"))
        if not v > 0:
            raise ValidationError(f"step sizes must be positive, got {v} at epoch {k}")
        return v

    def batch(self, k):
        v = _schedule_value(self.batch_size, k, "batch size")
        if int(v) != v or v < 1:
            raise ValidationError(f"batch sizes must be positive integers, got {v} at epoch {k}")
        return int(v)


@dataclass
class FitResult:
    theta_bar: pot.Potential
    objective_history: list = field(default_factory=list)
    grad_norm_history: list = field(default_factory=list)
    wall_time_seconds: float = 0.0
    inner_iteration_totals: list = field(default_factory=list)
    inner_nonconverged_totals: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    @property
    def final_objective(self):
        return self.objective_history[-1][1] if self.objective_history else float("nan")

    def log_rows(self):
        """``(epoch, objective, grad_norm, seconds)`` at every recorded epoch."""
        gn = dict(self.grad_norm_history)
        rows = []
        for epoch, obj in self.objective_history:
            secs = self.epoch_seconds[epoch - 1] if 0 < epoch <= len(self.epoch_seconds) else 0.0
            rows.append((epoch, obj, gn.get(epoch, float("nan")), secs))
        return rows


def initial_potential(spec, dim: int, seed: int = 0) -> pot.Potential:
    """Starting parameters for a class specification.

    ``spec`` is either a potential (returned after projection), a class tag,
    or a dict ``{"class": tag, **options}``. Starting points:

    * quadratic: ``(I, 0)``
    * ball_linear: ``w = 0`` (option ``radius``, default 1)
    * plq: ``pieces`` copies of ``1/2 |x|^2`` with offsets ``b_m ~ N(0, 0.1^2)``
    * cone_combo: option ``basis`` (list of potentials or their dicts);
      weights from option ``alphas`` (projected onto the cone), default ``1/M``
    * icnn: options ``widths``, ``activations``, ``eta``, ``w_scale`` forwarded
      to :meth:`Icnn.init`; ``init="identity"`` starts from the two-layer
      network equal to ``1/2 |x|^2``.
    """
    if isinstance(spec, pot.Potential):
        if spec.dim != dim:
            raise ValidationError(f"potential has dimension {spec.dim}, samples have {dim}")
        return spec.project()
    if isinstance(spec, str):
        spec = {"class": spec}
    if not isinstance(spec, dict) or "class" not in spec:
        raise ValidationError(f"cannot interpret class specification {spec!r}")
    opts = dict(spec)
    tag = opts.pop("class")
    rng = np.random.default_rng(seed)
    if tag == "quadratic":
        return pot.Quadratic(np.eye(dim), np.zeros(dim), opts.get("eps_spd", pot.EPS_SPD))
    if tag == "ball_linear":
        return pot.BallLinear(np.zeros(dim), opts.get("radius", 1.0))
    if tag == "plq":
        m = int(opts.get("pieces", 2))
        return pot.PLQ(
            np.broadcast_to(np.eye(dim), (m, dim, dim)),
            rng.normal(0.0, 0.1, (m, dim)),
            np.zeros(m),
            opts.get("eps_spd", pot.EPS_SPD),
        )
    if tag == "cone_combo":
        basis = tuple(b if isinstance(b, pot.Potential) else pot.from_dict(b) for b in opts.get("basis", ()))
        if not basis:
            raise ValidationError("cone_combo needs a non-empty 'basis'")
        alphas = opts.get("alphas")
        if alphas is None:
            alphas = np.full(len(basis), 1.0 / len(basis))
        return pot.ConeCombo(alphas, basis).project()
    if tag == "icnn":
        if opts.pop("init", "random") == "identity":
            return pot.identity_potential("icnn", dim, eta=opts.get("eta", 0.0))
        acts = opts.get("activations")
        return pot.Icnn.init(
            dim,
            widths=tuple(opts.get("widths", (64, 128, 64))),
            activations=None if acts is None else tuple(acts),
            eta=opts.get("eta", 0.0),
            seed=seed,
            w_scale=opts.get("w_scale", 1.0),
        )
    raise ValidationError(f"unknown potential class {tag!r}")


def _conjugates(theta, y, inner, x0=None, box=None):
    res = conjugate_batch(theta, y, inner, x0=x0, box=box, check=False)
    if not np.all(np.isfinite(res.values)):
        raise DivergenceError(f"non-finite conjugate values for {theta.tag} potential")
    return res


def estimate_objective(theta, s_mu, s_nu, inner: Optional[ConjugateConfig] = None, box=None, x0=None) -> float:
    """Sample average ``mean f(X) + mean f*(Y)``."""
    pot._check(theta)
    x, y = _points(s_mu), _points(s_nu)
    if x.shape[1] != theta.dim or y.shape[1] != theta.dim:
        raise ValidationError("sample dimensions do not match the potential")
    res = _conjugates(theta, y, inner, x0=x0, box=box)
    return float(theta._value(x).mean() + res.values.mean())


def _gradient(theta, x, y, inner, x0, box):
    res = _conjugates(theta, y, inner, x0=x0, box=box)
    u = theta._grad_params(x).flat() - theta._grad_params(res.x_hat).flat()
    return u, res


def stochastic_gradient(theta, batch_x, batch_y, inner: Optional[ConjugateConfig] = None, warm=None, box=None):
    """Minibatch estimate of the objective's parameter gradient.

    Returns ``mean_i df/dtheta(X_i) - mean_j df/dtheta(X_hat_j)`` with
    ``X_hat_j`` the conjugate argmax at ``Y_j``, as a potential of the same
    class holding gradient values. Averaging (rather than summing) keeps step
    sizes independent of the batch size. ``warm`` optionally gives starting
    points for the conjugate solves, one row per ``Y_j``.
    """
    pot._check(theta)
    u, _ = _gradient(theta, _points(batch_x), _points(batch_y), inner, warm, box)
    return theta.with_flat(u)


def _draw(rng, n, m):
    if m >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=m, replace=False))


def fit(class_spec, s_mu, s_nu, config: Optional[TrainConfig] = None) -> FitResult:
    """Projected SGD on the restricted dual objective.

    Each epoch draws a minibatch from each sample set (without replacement
    inside the batch), solves the conjugate problems warm-started from the
    previous argmax of the same ``nu`` sample, takes a step against the
    averaged gradient and projects back onto the feasible set. Runs are
    deterministic given ``config.seed``.

    Raises
    ------
    DivergenceError
        If the gradient or the objective becomes non-finite; ``last_good``
        holds the last feasible parameters.
    """
    config = config or TrainConfig()
    x, y = _points(s_mu), _points(s_nu)
    if x.shape[1] != y.shape[1]:
        raise ValidationError(f"sample dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    theta = initial_potential(class_spec, x.shape[1], config.seed)
    rng = np.random.default_rng(config.seed)
    cache = WarmStartCache()
    result = FitResult(theta)
    box = config.search_box
    t0 = time.perf_counter()

    def record_objective(epoch, th):
        x0 = cache.starts(np.arange(y.shape[0]), y) if config.warm_start else None
        obj = estimate_objective(th, x, y, config.inner, box=box, x0=x0)
        if not np.isfinite(obj):
            raise DivergenceError(f"objective became non-finite at epoch {epoch}", last_good=th)
        result.objective_history.append((epoch, obj))

    for k in range(1, config.epochs + 1):
        m = config.batch(k)
        ix = _draw(rng, x.shape[0], m)
        iy = _draw(rng, y.shape[0], m)
        yb = y[iy]
        x0 = cache.starts(iy, yb) if config.warm_start else None
        try:
            u, res = _gradient(theta, x[ix], yb, config.inner, x0, box)
        except DivergenceError as exc:
            raise DivergenceError(f"epoch {k}: {exc}", last_good=theta) from exc
        if config.warm_start:
            cache.update(iy, res.x_hat)
        gnorm = float(np.linalg.norm(u))
        if not np.isfinite(gnorm):
            raise DivergenceError(f"gradient became non-finite at epoch {k}", last_good=theta)
        new = theta.with_flat(theta.flat() - config.step(k) * u).project()
        if not np.all(np.isfinite(new.flat())):
            raise DivergenceError(f"parameters became non-finite at epoch {k}", last_good=theta)
        theta = new
        result.grad_norm_history.append((k, gnorm))
        result.inner_iteration_totals.append(int(res.iters.sum()))
        result.inner_nonconverged_totals.append(int((~res.converged).sum()))
        result.epoch_seconds.append(time.perf_counter() - t0)
        if config.eval_every and k % config.eval_every == 0 and k != config.epochs:
            record_objective(k, theta)

    record_objective(config.epochs, theta)
    result.theta_bar = theta
    result.wall_time_seconds = time.perf_counter() - t0
    return result


class QuadraticFit(NamedTuple):
    a_bar: np.ndarray
    b_bar: np.ndarray
    min_value: float

    def potential(self, eps_spd: float = pot.EPS_SPD) -> pot.Quadratic:
        return pot.Quadratic(self.a_bar, self.b_bar, eps_spd)


def _moments_clamped(s, eps, which):
    m, cov = empirical_moments(s if isinstance(s, SampleSet) else SampleSet(s))
    cov, clamped = eig_clamp(cov, eps)
    if clamped:
        warnings.warn(
            f"empirical covariance of {which} is not positive definite; eigenvalues clamped at {eps}",
            SolverQualityWarning,
            stacklevel=3,
        )
    return m, cov


def quadratic_minimiser_from_moments(m_x, cov_x, m_y, cov_y):
    """Minimiser ``(A, b)`` and minimum of the quadratic-class objective given moments."""
    rx = sym_sqrt(cov_x)
    rx_inv = sym_inv_sqrt(cov_x)
    mid = sym_sqrt(rx @ cov_y @ rx)
    a = rx_inv @ mid @ rx_inv
    a = 0.5 * (a + a.T)
    b = m_y - a @ m_x
    return a, b, float(m_x @ m_y + np.trace(mid))


def fit_quadratic_closed_form(s_mu, s_nu, eps_spd: float = pot.EPS_SPD) -> QuadraticFit:
    """Exact minimiser of the objective over ``A`` SPD, ``b`` free.

    With ``S_X``, ``S_Y`` the (population) covariances and ``m_X``, ``m_Y``
    the means of the two samples::

        A = S_X^{-1/2} (S_X^{1/2} S_Y S_X^{1/2})^{1/2} S_X^{-1/2}
        b = m_Y - A m_X
        J = m_X . m_Y + tr (S_X^{1/2} S_Y S_X^{1/2})^{1/2}

    Covariances that are not positive definite are eigen-clamped at
    ``eps_spd`` with a :class:`SolverQualityWarning`.
    """
    m_x, cov_x = _moments_clamped(s_mu, eps_spd, "mu")
    m_y, cov_y = _moments_clamped(s_nu, eps_spd, "nu")
    if m_x.shape != m_y.shape:
        raise ValidationError("sample dimensions differ")
    a, b, val = quadratic_minimiser_from_moments(m_x, cov_x, m_y, cov_y)
    if np.linalg.eigvalsh(a)[0] < eps_spd * (1 - 1e-8):
        raise ValidationError("closed-form quadratic minimiser is singular; covariances are degenerate")
    return QuadraticFit(a, b, val)


def fit_ball_linear_closed_form(s_mu, s_nu, radius: float = 1.0) -> np.ndarray:
    """Minimiser of the objective for ``f = 1/2 |x|^2 + w.x`` over ``|w| <= radius``.

    The objective is ``const + 1/2 |w|^2 - w.m`` with ``m = mean(nu) - mean(mu)``,
    so the minimiser is the projection of ``m`` onto the ball.
    """
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    m = _points(s_nu).mean(axis=0) - _points(s_mu).mean(axis=0)
    nrm = np.linalg.norm(m)
    return m if nrm <= radius else m * (radius / nrm)


def save_checkpoint(result, path, metadata: Optional[dict] = None) -> None:
    """Write parameters (a potential or a :class:`FitResult`) as JSON."""
    theta = result.theta_bar if isinstance(result, FitResult) else result
    payload = {"format": CHECKPOINT_FORMAT, **pot.to_dict(theta)}
    if metadata:
        payload["metadata"] = metadata
    with open(os.fspath(path), "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path, expected_class: Optional[str] = None) -> pot.Potential:
    with open(os.fspath(path)) as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"{os.fspath(path)!s} is not a {CHECKPOINT_FORMAT} file")
    if expected_class is not None and payload.get("class_tag") != expected_class:
        raise ValidationError(
            f"checkpoint holds a {payload.get('class_tag')!r} potential, expected {expected_class!r}"
        )
    return pot.from_dict(payload)


def save_training_log(result: FitResult, path, comments: Sequence[str] = ()) -> None:
    """CSV with columns ``epoch,objective,grad_norm,seconds``."""
    lines = [f"# {c}" for c in comments] + ["epoch,objective,grad_norm,seconds"]
    lines += [f"{e},{o:.17g},{g:.17g},{s:.6f}" for e, o, g, s in result.log_rows()]
    with open(os.fspath(path), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

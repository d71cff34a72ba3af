"""Restricted distance, transport map and moment diagnostics from a fitted potential.

With cost ``1/2 |x - y|^2`` and a minimiser ``theta_bar`` of the restricted
dual objective ``J``,

    W2F^2 = 1/2 E|X|^2 + 1/2 E|Y|^2 - J(theta_bar),

and the approximate map pushing ``nu`` onto ``mu`` is ``T(y) = grad f*(y)``,
i.e. the argmax returned by the conjugate solver.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import potentials as pot
from ._linalg import sym_sqrt
from .conjugate import ConjugateConfig, conjugate_batch
from .distributions import GaussianSpec, SampleSet, empirical_moments
from .errors import SolverQualityWarning, ValidationError
from .solver import (
    TrainConfig,
    estimate_objective,
    fit,
    fit_ball_linear_closed_form,
    fit_quadratic_closed_form,
)

__all__ = [
    "NEGATIVE_TOLERANCE",
    "W2fReport",
    "MapResult",
    "MomentRow",
    "w2f_squared",
    "w2f_symmetric",
    "transport_map",
    "moment_match_report",
    "gaussian_w2_closed_form",
    "save_report_json",
    "save_moment_csv",
]

NEGATIVE_TOLERANCE = 1e-6


def _points(s):
    return s.points if isinstance(s, SampleSet) else np.atleast_2d(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class W2fReport:
    """Restricted distance with the pieces it is assembled from.

    ``self_term_mu`` and ``self_term_nu`` are ``1/2 E|X|^2`` and
    ``1/2 E|Y|^2``; ``objective`` is ``J(theta_bar)``. ``clamped`` is set when
    the squared value fell below ``-NEGATIVE_TOLERANCE`` and was reported as
    zero distance.
    """

    w2f_squared: float
    w2f: float
    self_term_mu: float
    self_term_nu: float
    objective: float
    clamped: bool = False

    def to_dict(self):
        return asdict(self)


def _half_sq_norm(x):
    return 0.5 * float(np.einsum("ij,ij->i", x, x).mean())


def _report(sq, t_mu, t_nu, obj):
    clamped = sq < -NEGATIVE_TOLERANCE
    if clamped:
        warnings.warn(
            f"restricted W2 squared is {sq:.3e} < -{NEGATIVE_TOLERANCE:g}; the potential is probably "
            "not a minimiser or the conjugate solves are inexact",
            SolverQualityWarning,
            stacklevel=3,
        )
    return W2fReport(float(sq), float(np.sqrt(max(sq, 0.0))), t_mu, t_nu, float(obj), clamped)


def w2f_squared(theta_bar, s_mu, s_nu, inner: Optional[ConjugateConfig] = None, box=None) -> W2fReport:
    """Restricted squared distance ``1/2 E|X|^2 + 1/2 E|Y|^2 - J(theta_bar)``.

    Parameters
    ----------
    theta_bar : Potential
        Feasible potential, ideally a minimiser of the objective. Any other
        feasible potential gives a smaller value.
    s_mu, s_nu : SampleSet
        Samples of the two measures.
    inner : ConjugateConfig, optional
        Settings for the conjugate solves on ``s_nu``. Loose tolerances
        underestimate ``f*`` and therefore overestimate the distance.
    box : pair of arrays, optional
        Search box, required for potentials that are not strongly convex.

    Returns
    -------
    W2fReport
    """
    x, y = _points(s_mu), _points(s_nu)
    obj = estimate_objective(theta_bar, x, y, inner, box=box)
    t_mu, t_nu = _half_sq_norm(x), _half_sq_norm(y)
    return _report(t_mu + t_nu - obj, t_mu, t_nu, obj)


def _one_direction(class_spec, s_mu, s_nu, config):
    tag = class_spec if isinstance(class_spec, str) else None
    if isinstance(class_spec, dict):
        tag = class_spec.get("class")
    if config is None and tag == "quadratic":
        eps = class_spec.get("eps_spd", pot.EPS_SPD) if isinstance(class_spec, dict) else pot.EPS_SPD
        theta = fit_quadratic_closed_form(s_mu, s_nu, eps).potential(eps)
    elif config is None and tag == "ball_linear":
        radius = class_spec.get("radius", 1.0) if isinstance(class_spec, dict) else 1.0
        theta = pot.BallLinear(fit_ball_linear_closed_form(s_mu, s_nu, radius), radius)
    else:
        cfg = config if config is not None else TrainConfig()
        theta = fit(class_spec, s_mu, s_nu, cfg).theta_bar
        return w2f_squared(theta, s_mu, s_nu, cfg.inner, box=cfg.search_box).w2f
    return w2f_squared(theta, s_mu, s_nu).w2f


def w2f_symmetric(class_spec, s_mu, s_nu, config: Optional[TrainConfig] = None) -> float:
    """``W2F(mu, nu) + W2F(nu, mu)``, fitting each direction separately.

    With ``config=None`` the quadratic and ball-linear classes use their
    closed-form minimisers; other classes are trained with default settings.
    """
    return _one_direction(class_spec, s_mu, s_nu, config) + _one_direction(class_spec, s_nu, s_mu, config)


@dataclass(frozen=True)
class MapResult:
    """Images ``T(y_j)`` plus the number of conjugate solves that missed tolerance."""

    samples: SampleSet
    nonconverged: int
    iterations: np.ndarray


def transport_map(theta_bar, s_nu, inner: Optional[ConjugateConfig] = None, box=None) -> MapResult:
    """Approximate transport map ``T(y) = grad f*(y)`` applied to every sample.

    Rows that did not reach the inner gradient tolerance are kept but counted
    in ``nonconverged``; a :class:`SolverQualityWarning` is issued when the
    count is positive.
    """
    y = _points(s_nu)
    res = conjugate_batch(theta_bar, y, inner, box=box)
    bad = int(np.count_nonzero(~res.converged))
    if bad:
        warnings.warn(f"{bad} of {y.shape[0]} conjugate solves did not converge", SolverQualityWarning, stacklevel=2)
    return MapResult(SampleSet(res.x_hat), bad, np.asarray(res.iters))


class MomentRow(tuple):
    """``(statistic, mu_value, push_value, residual)``."""

    __slots__ = ()

    def __new__(cls, statistic, mu_value, push_value):
        return super().__new__(cls, (statistic, float(mu_value), float(push_value), abs(float(mu_value) - float(push_value))))

    statistic = property(lambda s: s[0])
    mu_value = property(lambda s: s[1])
    push_value = property(lambda s: s[2])
    residual = property(lambda s: s[3])


def _moment_rows(x, t, want_second):
    rows = [MomentRow(f"mean[{i}]", x[:, i].mean(), t[:, i].mean()) for i in range(x.shape[1])]
    if want_second:
        d = x.shape[1]
        for i in range(d):
            for j in range(i, d):
                rows.append(MomentRow(f"second[{i},{j}]", (x[:, i] * x[:, j]).mean(), (t[:, i] * t[:, j]).mean()))
    return rows


def moment_match_report(theta_bar, s_mu, s_nu, inner: Optional[ConjugateConfig] = None, box=None) -> list:
    """Compare statistics of ``mu`` with those of the pushforward ``T # nu``.

    The statistics are the tangent directions of the class where they are
    parameter-free: coordinates for the ball-linear class, coordinates and
    raw second moments ``x_i x_j`` for the quadratic class, and the basis
    potentials of a cone combination (plus coordinates and second moments).
    For ICNN and PLQ potentials the first and second moments serve as a
    proxy. At an interior minimiser the tangent residuals vanish.
    """
    x = _points(s_mu)
    t = transport_map(theta_bar, s_nu, inner, box=box).samples.points
    rows = _moment_rows(x, t, not isinstance(theta_bar, pot.BallLinear))
    if isinstance(theta_bar, pot.ConeCombo):
        bx, bt = theta_bar.basis_values(x).mean(axis=0), theta_bar.basis_values(t).mean(axis=0)
        rows += [MomentRow(f"basis[{m}]", bx[m], bt[m]) for m in range(len(bx))]
    return rows


def gaussian_w2_closed_form(spec_mu: GaussianSpec, spec_nu: GaussianSpec) -> float:
    """W2 between two Gaussians under the cost ``1/2 |x - y|^2``.

    ``sqrt(1/2 [|m1 - m2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)])``.
    Also accepts ``(mean, covariance)`` pairs.
    """
    m1, s1 = _gauss(spec_mu)
    m2, s2 = _gauss(spec_nu)
    if m1.shape != m2.shape:
        raise ValidationError(f"dimensions differ: {m1.shape[0]} vs {m2.shape[0]}")
    r = sym_sqrt(s1)
    cross = sym_sqrt(r @ s2 @ r)
    sq = 0.5 * (float(np.sum((m1 - m2) ** 2)) + float(np.trace(s1 + s2 - 2.0 * cross)))
    return float(np.sqrt(max(sq, 0.0)))


def _gauss(spec):
    if isinstance(spec, GaussianSpec):
        return spec.mean, spec.covariance
    if isinstance(spec, SampleSet):
        return empirical_moments(spec)
    m, s = spec
    return np.atleast_1d(np.asarray(m, dtype=float)), np.atleast_2d(np.asarray(s, dtype=float))


def save_report_json(report, path, header: Optional[dict] = None) -> None:
    """Write a report (``W2fReport`` or plain dict) as JSON.

    ``header`` entries are stored under the ``"_header"`` key.
    """
    body = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    if header:
        body = {"_header": dict(header), **body}
    with open(os.fspath(path), "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=False)
        fh.write("\n")


def save_moment_csv(rows, path, comments: Sequence[str] = ()) -> None:
    """Flat CSV with columns ``statistic, mu_value, push_value, residual``."""
    with open(os.fspath(path), "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "mu_value", "push_value", "residual"])
        for r in rows:
            w.writerow([r[0]] + [f"{v:.17g}" for v in r[1:]])

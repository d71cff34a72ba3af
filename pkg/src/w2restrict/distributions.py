"""Synthetic samplers, empirical moments and sample-file I/O.

Every sampler takes an integer ``seed`` and builds a private
:class:`numpy.random.Generator` (PCG64) from it, so one call is one
independent stream and repeated calls with the same arguments are
bit-identical. Code that needs several streams from one seed should use
:func:`spawn_seeds`, which splits a :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParseError, ValidationError

__all__ = [
    "SampleSet",
    "GaussianSpec",
    "MixtureSpec",
    "spawn_seeds",
    "sample_gaussian",
    "sample_mixture",
    "sample_two_point",
    "empirical_moments",
    "affine_pushforward",
    "save_csv",
    "load_csv",
    "CANONICAL_A",
    "CANONICAL_B",
    "canonical_mixture",
    "canonical_pair",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SampleSet:
    """Uniformly weighted point cloud, one sample per row."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValidationError(f"points must be a 2-D array, got ndim={pts.ndim}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError(f"need at least one sample of dimension >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("sample points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.array_equal(self.points, other.points))

    __hash__ = None


@dataclass(frozen=True)
class GaussianSpec:
    """Mean vector and symmetric positive-definite covariance."""

    mean: np.ndarray
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = np.atleast_2d(np.array(self.covariance, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ValidationError(f"mean shape {mean.shape} and covariance shape {cov.shape} do not conform")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("Gaussian parameters must be finite")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise ValidationError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise ValidationError("covariance is not positive definite")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(cov))
        object.__setattr__(self, "cholesky", _frozen(np.linalg.cholesky(cov)))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class MixtureSpec:
    """Finite Gaussian mixture given as ``[(weight, GaussianSpec), ...]``."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components)
        if not comps:
            raise ValidationError("mixture needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError(f"mixture weights must be nonnegative and sum to 1, got {weights.tolist()}")
        dims = {s.dim for _, s in comps}
        if len(dims) != 1:
            raise ValidationError(f"mixture components have different dimensions {sorted(dims)}")
        object.__setattr__(self, "components", comps)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def dim(self) -> int:
        return self.components[0][1].dim


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent integer seeds from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _check_count(n):
    if int(n) != n or n < 1:
        raise ValidationError(f"sample count must be a positive integer, got {n!r}")
    return int(n)


def sample_gaussian(spec: GaussianSpec, n: int, seed: int) -> SampleSet:
    """Draw ``n`` i.i.d. points from ``spec`` as ``mean + L z``."""
    n = _check_count(n)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, spec.dim))
    return SampleSet(spec.mean + z @ spec.cholesky.T)


def sample_mixture(spec: MixtureSpec, n: int, seed: int) -> SampleSet:
    """Draw ``n`` points from a Gaussian mixture.

    Component labels are drawn first (one categorical draw per sample),
    then one block of standard normals shared by all components.
    """
    n = _check_count(n)
    rng = np.random.default_rng(seed)
    weights = spec.weights
    labels = rng.choice(len(weights), size=n, p=weights / weights.sum())
    z = rng.standard_normal((n, spec.dim))
    out = np.empty_like(z)
    for k, (_, comp) in enumerate(spec.components):
        mask = labels == k
        out[mask] = comp.mean + z[mask] @ comp.cholesky.T
    return SampleSet(out)


def sample_two_point(v: float, alpha: float, n: int, seed: int) -> SampleSet:
    """One-dimensional draws from ``(1/2 - alpha) d_{-v} + (1/2 + alpha) d_{+v}``."""
    n = _check_count(n)
    if not abs(alpha) <= 0.5:
        raise ValidationError(f"|alpha| must be <= 1/2, got {alpha}")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    x = np.where(u < 0.5 + alpha, float(v), -float(v))
    return SampleSet(x[:, None])


def empirical_moments(s: SampleSet) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population covariance (normalised by N, not N - 1)."""
    x = s.points
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / x.shape[0]
    return mean, 0.5 * (cov + cov.T)


def affine_pushforward(s: SampleSet, a, b) -> SampleSet:
    """Map every sample ``x`` to ``a @ x + b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != (a.shape[0], s.dim) or b.shape != (a.shape[0],):
        raise ValidationError(f"affine map shapes a={a.shape}, b={b.shape} do not conform to dim {s.dim}")
    return SampleSet(s.points @ a.T + b)


def save_csv(s: SampleSet, path, header: bool = False, comments: Sequence[str] = ()) -> None:
    """Write samples as comma-separated rows with 17 significant digits.

    ``comments`` are written first, each prefixed with ``# ``.
    """
    lines = [f"# {c}" for c in comments]
    if header:
        lines.append(",".join(f"x{i}" for i in range(s.dim)))
    lines.extend(",".join(f"{v:.17g}" for v in row) for row in s.points)
    with open(os.fspath(path), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path) -> SampleSet:
    """Read a file written by :func:`save_csv`.

    Blank lines and lines starting with ``#`` are skipped; an optional
    ``x0,x1,...`` header is recognised on the first data line.
    """
    rows = []
    width = None
    seen_data = False
    with open(os.fspath(path)) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if not seen_data:
                seen_data = True
                if fields == [f"x{i}" for i in range(len(fields))]:
                    width = len(fields)
                    continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ParseError(f"expected {width} fields, found {len(fields)}", lineno)
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    if not rows:
        raise ValidationError(f"{os.fspath(path)!s} contains no samples")
    return SampleSet(np.array(rows))


# Symmetric positive definite, so ``x -> A x + b`` is the gradient of the
# convex potential ``1/2 x^T A x + b^T x`` and hence an optimal map.
CANONICAL_A = np.array([[1.5, 0.5], [0.5, 1.0]])
CANONICAL_B = np.array([1.0, -1.0])


def canonical_mixture() -> MixtureSpec:
    """Four equally weighted Gaussians at ``(+-2, +-2)`` with covariance ``I/4``."""
    return MixtureSpec(
        tuple((0.25, GaussianSpec([sx, sy], 0.25 * np.eye(2))) for sx in (-2.0, 2.0) for sy in (-2.0, 2.0))
    )


def canonical_pair(n: int, seed: int) -> tuple[SampleSet, SampleSet]:
    """Mixture samples ``x_i`` and their images ``y_i = A x_i + b``.

    Because the map is the gradient of a convex function, pairing ``y_i``
    with ``x_i`` is an optimal matching and the true inverse map
    ``y -> A^{-1}(y - b)`` sends every ``y_i`` back to ``x_i``.
    """
    s_mu = sample_mixture(canonical_mixture(), n, seed)
    return s_mu, affine_pushforward(s_mu, CANONICAL_A, CANONICAL_B)

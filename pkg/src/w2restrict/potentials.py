"""Parametrized convex potentials ``f(x; theta)``.

Five classes are provided:

* :class:`Quadratic`  ``f(x) = 1/2 x^T A x + b^T x`` with ``A`` SPD.
* :class:`BallLinear` ``f(x) = 1/2 |x|^2 + w^T x`` with ``|w| <= L``.
* :class:`ConeCombo`  ``f(x) = sum_m alpha_m f_m(x)`` with ``alpha >= 0`` and a
  fixed basis of quadratic / PLQ potentials.
* :class:`PLQ`        ``f(x) = max_m 1/2 x^T A_m x + b_m^T x + c_m``.
* :class:`Icnn`       input-convex network plus ``eta/2 |x|^2``.

Instances are immutable. Every class works on batches: ``_value`` maps an
``(n, d)`` array to ``(n,)``, ``_grad_x`` to ``(n, d)`` and ``_grad_params``
returns the *row-averaged* parameter gradient as an instance of the same
class (so a gradient can be flattened and combined with ``flat`` /
``with_flat``). The leading-underscore methods skip feasibility checks and
are what the solvers call in their inner loops; the module-level functions
validate first.

At kinks the spatial and parameter gradients use the lowest-index active
piece (PLQ), and the ReLU derivative at zero is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ValidationError

__all__ = [
    "EPS_SPD",
    "ACTIVATIONS",
    "Potential",
    "Quadratic",
    "BallLinear",
    "ConeCombo",
    "PLQ",
    "IcnnLayer",
    "Icnn",
    "evaluate",
    "grad_x",
    "grad_params",
    "project_feasible",
    "convexity_probe",
    "conjugate_closed_form",
    "strong_convexity_modulus",
    "identity_potential",
    "to_dict",
    "from_dict",
]

EPS_SPD = 1e-6
ACTIVATIONS = ("relu", "relu_squared", "softplus", "linear")

# relative slack when re-checking an eigenvalue that was clamped to eps_spd
_SPD_SLACK = 1e-8


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _as_batch(x, dim):
    # 1-D input is one point, except in dimension 1 where a length-n vector is n points
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and (dim != 1 or x.size == 1))
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[None, :] if single else x[:, None]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValidationError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return x, single


def _eig_clamp(a, eps):
    a = 0.5 * (a + a.T)
    lam, v = np.linalg.eigh(a)
    if lam[0] >= eps:
        return a
    return (v * np.maximum(lam, eps)) @ v.T


def _is_spd(a, eps):
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(a))):
        return False
    return np.linalg.eigvalsh(a)[0] >= eps * (1 - _SPD_SLACK)


class Potential:
    """Common interface of the potential classes."""

    tag: str = ""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def _value(self, x):
        raise NotImplementedError

    def _grad_x(self, x):
        raise NotImplementedError

    def _value_and_grad_x(self, x):
        return self._value(x), self._grad_x(x)

    def _grad_params(self, x):
        raise NotImplementedError

    def flat(self) -> np.ndarray:
        raise NotImplementedError

    def with_flat(self, vec) -> "Potential":
        raise NotImplementedError

    def feasibility_violation(self) -> Optional[str]:
        """Return a description of the first violated constraint, or None."""
        raise NotImplementedError

    def is_feasible(self) -> bool:
        return self.feasibility_violation() is None

    def project(self) -> "Potential":
        raise NotImplementedError

    def strong_convexity(self) -> float:
        raise NotImplementedError

    def _conjugate(self, y):
        return None

    @property
    def n_params(self) -> int:
        return self.flat().size


def _check(theta):
    msg = theta.feasibility_violation()
    if msg is not None:
        raise ValidationError(f"infeasible {theta.tag} parameters: {msg}")


# ---------------------------------------------------------------------------
# Quadratic
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Quadratic(Potential):
    a: np.ndarray
    b: np.ndarray
    eps_spd: float = EPS_SPD

    tag = "quadratic"

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.a, dtype=float))
        b = np.atleast_1d(np.array(self.b, dtype=float))
        d = b.shape[0]
        if b.ndim != 1 or a.shape != (d, d):
            raise ValidationError(f"quadratic shapes a={a.shape}, b={b.shape} do not conform")
        object.__setattr__(self, "a", _ro(a))
        object.__setattr__(self, "b", _ro(b))

    @property
    def dim(self):
        return self.b.shape[0]

    def _value(self, x):
        return 0.5 * np.einsum("ni,ij,nj->n", x, self.a, x) + x @ self.b

    def _grad_x(self, x):
        return x @ self.a.T + self.b

    def _grad_params(self, x):
        n = x.shape[0]
        return Quadratic(0.5 * (x.T @ x) / n, x.mean(axis=0), self.eps_spd)

    def flat(self):
        return np.concatenate([self.a.ravel(), self.b])

    def with_flat(self, vec):
        d = self.dim
        vec = np.asarray(vec, dtype=float)
        return Quadratic(vec[: d * d].reshape(d, d), vec[d * d :], self.eps_spd)

    def feasibility_violation(self):
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            return "non-finite entries"
        if not _is_spd(self.a, self.eps_spd):
            return f"A must be symmetric with smallest eigenvalue >= {self.eps_spd}"
        return None

    def project(self):
        if self.is_feasible():
            return self
        return Quadratic(_eig_clamp(self.a, self.eps_spd), self.b, self.eps_spd)

    def strong_convexity(self):
        return float(np.linalg.eigvalsh(self.a)[0])

    def _conjugate(self, y):
        r = y - self.b
        xhat = np.linalg.solve(self.a, r.T).T
        return 0.5 * np.einsum("ni,ni->n", r, xhat), xhat


# ---------------------------------------------------------------------------
# BallLinear
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BallLinear(Potential):
    w: np.ndarray
    radius: float = 1.0

    tag = "ball_linear"

    def __post_init__(self):
        w = np.atleast_1d(np.array(self.w, dtype=float))
        if w.ndim != 1:
            raise ValidationError(f"w must be a vector, got shape {w.shape}")
        if not self.radius > 0:
            raise ValidationError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "w", _ro(w))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.w.shape[0]

    def _value(self, x):
        return 0.5 * np.einsum("ni,ni->n", x, x) + x @ self.w

    def _grad_x(self, x):
        return x + self.w

    def _grad_params(self, x):
        return BallLinear(x.mean(axis=0), self.radius)

    def flat(self):
        return self.w.copy()

    def with_flat(self, vec):
        return BallLinear(vec, self.radius)

    def feasibility_violation(self):
        if not np.all(np.isfinite(self.w)):
            return "non-finite entries"
        if np.linalg.norm(self.w) > self.radius * (1 + 1e-12):
            return f"|w| = {np.linalg.norm(self.w):.6g} exceeds radius {self.radius}"
        return None

    def project(self):
        nrm = np.linalg.norm(self.w)
        if nrm <= self.radius * (1 + 1e-12):
            return self
        return BallLinear(self.w * (self.radius / nrm), self.radius)

    def strong_convexity(self):
        return 1.0

    def _conjugate(self, y):
        xhat = y - self.w
        return 0.5 * np.einsum("ni,ni->n", xhat, xhat), xhat


# ---------------------------------------------------------------------------
# PLQ
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PLQ(Potential):
    """Pointwise maximum of ``M`` strongly convex quadratic pieces.

    ``a`` has shape ``(M, d, d)``, ``b`` shape ``(M, d)``, ``c`` shape ``(M,)``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    eps_spd: float = EPS_SPD

    tag = "plq"

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        c = np.atleast_1d(np.array(self.c, dtype=float))
        if a.ndim == 2:
            a = a[None]
        if b.ndim == 1:
            b = b[None]
        m, d = b.shape
        if a.shape != (m, d, d) or c.shape != (m,):
            raise ValidationError(f"PLQ shapes a={a.shape}, b={b.shape}, c={c.shape} do not conform")
        object.__setattr__(self, "a", _ro(a))
        object.__setattr__(self, "b", _ro(b))
        object.__setattr__(self, "c", _ro(c))

    @property
    def dim(self):
        return self.b.shape[1]

    @property
    def n_pieces(self):
        return self.b.shape[0]

    def _pieces(self, x):
        quad = 0.5 * np.einsum("ni,mij,nj->nm", x, self.a, x)
        return quad + x @ self.b.T + self.c

    def active_piece(self, x):
        x, _ = _as_batch(x, self.dim)
        return np.argmax(self._pieces(x), axis=1)

    def _value(self, x):
        return self._pieces(x).max(axis=1)

    def _grad_x(self, x):
        k = np.argmax(self._pieces(x), axis=1)
        return np.einsum("nij,nj->ni", self.a[k], x) + self.b[k]

    def _value_and_grad_x(self, x):
        p = self._pieces(x)
        k = np.argmax(p, axis=1)
        g = np.einsum("nij,nj->ni", self.a[k], x) + self.b[k]
        return p[np.arange(x.shape[0]), k], g

    def _grad_params(self, x):
        n = x.shape[0]
        k = np.argmax(self._pieces(x), axis=1)
        m = self.n_pieces
        onehot = np.zeros((n, m))
        onehot[np.arange(n), k] = 1.0
        ga = 0.5 * np.einsum("nm,ni,nj->mij", onehot, x, x) / n
        gb = onehot.T @ x / n
        gc = onehot.mean(axis=0)
        return PLQ(ga, gb, gc, self.eps_spd)

    def flat(self):
        return np.concatenate([self.a.ravel(), self.b.ravel(), self.c])

    def with_flat(self, vec):
        m, d = self.b.shape
        vec = np.asarray(vec, dtype=float)
        na, nb = m * d * d, m * d
        return PLQ(vec[:na].reshape(m, d, d), vec[na : na + nb].reshape(m, d), vec[na + nb :], self.eps_spd)

    def feasibility_violation(self):
        if not all(np.all(np.isfinite(t)) for t in (self.a, self.b, self.c)):
            return "non-finite entries"
        for i, am in enumerate(self.a):
            if not _is_spd(am, self.eps_spd):
                return f"piece {i}: A must be symmetric with smallest eigenvalue >= {self.eps_spd}"
        return None

    def project(self):
        if self.is_feasible():
            return self
        a = np.stack([_eig_clamp(am, self.eps_spd) for am in self.a])
        return PLQ(a, self.b, self.c, self.eps_spd)

    def strong_convexity(self):
        return float(min(np.linalg.eigvalsh(am)[0] for am in self.a))


# ---------------------------------------------------------------------------
# ConeCombo
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConeCombo(Potential):
    """Nonnegative combination of fixed convex basis potentials."""

    alphas: np.ndarray
    basis: tuple

    tag = "cone_combo"

    def __post_init__(self):
        alphas = np.atleast_1d(np.array(self.alphas, dtype=float))
        basis = tuple(self.basis)
        if alphas.ndim != 1 or alphas.shape[0] != len(basis) or not basis:
            raise ValidationError(f"need one weight per basis function, got {alphas.shape} for {len(basis)}")
        for f in basis:
            if not isinstance(f, (Quadratic, PLQ)):
                raise ValidationError(f"cone basis entries must be quadratic or PLQ, got {type(f).__name__}")
        if len({f.dim for f in basis}) != 1:
            raise ValidationError("cone basis functions have different dimensions")
        object.__setattr__(self, "alphas", _ro(alphas))
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self):
        return self.basis[0].dim

    def basis_values(self, x):
        """Matrix ``F[n, m] = f_m(x_n)``."""
        x, _ = _as_batch(x, self.dim)
        return np.stack([f._value(x) for f in self.basis], axis=1)

    def _value(self, x):
        return np.stack([f._value(x) for f in self.basis], axis=1) @ self.alphas

    def _grad_x(self, x):
        g = np.zeros_like(x)
        for a, f in zip(self.alphas, self.basis):
            if a != 0:
                g += a * f._grad_x(x)
        return g

    def _grad_params(self, x):
        return ConeCombo(self.basis_values(x).mean(axis=0), self.basis)

    def flat(self):
        return self.alphas.copy()

    def with_flat(self, vec):
        return ConeCombo(vec, self.basis)

    def feasibility_violation(self):
        if not np.all(np.isfinite(self.alphas)):
            return "non-finite entries"
        if np.any(self.alphas < 0):
            return "all cone weights must be nonnegative"
        for f in self.basis:
            msg = f.feasibility_violation()
            if msg is not None:
                return f"basis function: {msg}"
        return None

    def project(self):
        if self.is_feasible():
            return self
        return ConeCombo(np.maximum(self.alphas, 0.0), tuple(f.project() for f in self.basis))

    def strong_convexity(self):
        # a lower bound: the modulus of a sum is at least the sum of moduli
        return float(sum(a * f.strong_convexity() for a, f in zip(self.alphas, self.basis)))


# ---------------------------------------------------------------------------
# Input-convex neural network
# ---------------------------------------------------------------------------


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "relu_squared":
        return np.square(np.maximum(z, 0.0))
    if name == "softplus":
        return np.logaddexp(0.0, z)
    return z


def _dact(name, z):
    if name == "relu":
        return (z > 0).astype(float)
    if name == "relu_squared":
        return 2.0 * np.maximum(z, 0.0)
    if name == "softplus":
        return expit(z)
    return np.ones_like(z)


@dataclass(frozen=True, eq=False)
class IcnnLayer:
    """One layer ``h_out = act(w h_in + a x + b)``; ``w`` is None on the first layer."""

    w: Optional[np.ndarray]
    a: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        a = np.atleast_2d(np.array(self.a, dtype=float))
        b = np.atleast_1d(np.array(self.b, dtype=float))
        if b.shape != (a.shape[0],):
            raise ValidationError(f"layer shapes a={a.shape}, b={b.shape} do not conform")
        object.__setattr__(self, "a", _ro(a))
        object.__setattr__(self, "b", _ro(b))
        if self.w is not None:
            w = np.atleast_2d(np.array(self.w, dtype=float))
            if w.shape[0] != a.shape[0]:
                raise ValidationError(f"layer shapes w={w.shape}, a={a.shape} do not conform")
            object.__setattr__(self, "w", _ro(w))

    @property
    def width(self):
        return self.a.shape[0]

    def arrays(self):
        return ([] if self.w is None else [self.w]) + [self.a, self.b]


@dataclass(frozen=True, eq=False)
class Icnn(Potential):
    """Input-convex network ``f(x) = h_L(x) + eta/2 |x|^2``.

    ``h_1 = act_0(a_0 x + b_0)`` and ``h_{l+1} = act_l(w_l h_l + a_l x + b_l)``.
    The last layer must have width 1. Convexity in ``x`` holds when every
    ``w_l`` is entrywise nonnegative and every activation is convex and
    nondecreasing (all entries of :data:`ACTIVATIONS` are).
    """

    layers: tuple
    eta: float = 0.0

    tag = "icnn"

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("an ICNN needs at least one layer")
        d = layers[0].a.shape[1]
        if layers[0].w is not None:
            raise ValidationError("the first ICNN layer has no hidden input (w must be None)")
        for prev, cur in zip(layers, layers[1:]):
            if cur.w is None or cur.w.shape[1] != prev.width:
                raise ValidationError("ICNN hidden weights do not chain between layers")
        for lay in layers:
            if lay.a.shape[1] != d:
                raise ValidationError("every ICNN layer must read an input of the same dimension")
        if layers[-1].width != 1:
            raise ValidationError(f"the last ICNN layer must have width 1, got {layers[-1].width}")
        if not self.eta >= 0:
            raise ValidationError(f"eta must be nonnegative, got {self.eta}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "eta", float(self.eta))

    @classmethod
    def init(cls, dim, widths=(64, 128, 64), activations=None, eta=0.0, seed=0, w_scale=1.0):
        """Random feasible network.

        Skip weights ``a`` and biases are uniform on ``+-1/sqrt(fan_in)``;
        hidden weights are uniform on ``[0, w_scale / fan_in]`` so that
        pre-activations keep their scale with depth. The output layer is
        linear. Default activations: ``relu_squared`` first, ``relu`` after.
        """
        widths = tuple(int(w) for w in widths)
        if activations is None:
            activations = ("relu_squared",) + ("relu",) * (len(widths) - 1)
        if len(activations) != len(widths):
            raise ValidationError("need one activation per hidden layer")
        rng = np.random.default_rng(seed)
        layers = []
        prev = None
        for width, act in list(zip(widths, activations)) + [(1, "linear")]:
            bound = 1.0 / np.sqrt(dim)
            a = rng.uniform(-bound, bound, (width, dim))
            b = rng.uniform(-bound, bound, width) if prev is not None else rng.uniform(-0.5, 0.5, width)
            w = None if prev is None else rng.uniform(0.0, w_scale / prev, (width, prev))
            layers.append(IcnnLayer(w, a, b, act))
            prev = width
        return cls(tuple(layers), eta)

    @property
    def dim(self):
        return self.layers[0].a.shape[1]

    def _forward(self, x):
        zs, hs = [], []
        h = None
        for lay in self.layers:
            z = x @ lay.a.T + lay.b
            if lay.w is not None:
                z = z + h @ lay.w.T
            zs.append(z)
            h = _act(lay.activation, z)
            hs.append(h)
        return zs, hs

    def _value(self, x):
        _, hs = self._forward(x)
        return hs[-1][:, 0] + 0.5 * self.eta * np.einsum("ni,ni->n", x, x)

    def _backward(self, x, zs, hs, want_params):
        n = x.shape[0]
        gx = self.eta * x
        delta = np.ones((n, 1))
        grads = []
        for l in range(len(self.layers) - 1, -1, -1):
            lay = self.layers[l]
            dz = delta * _dact(lay.activation, zs[l])
            gx = gx + dz @ lay.a
            if want_params:
                gw = None if lay.w is None else dz.T @ hs[l - 1] / n
                grads.append(IcnnLayer(gw, dz.T @ x / n, dz.mean(axis=0), lay.activation))
            if lay.w is not None:
                delta = dz @ lay.w
        return gx, grads[::-1]

    def _grad_x(self, x):
        zs, hs = self._forward(x)
        return self._backward(x, zs, hs, False)[0]

    def _value_and_grad_x(self, x):
        zs, hs = self._forward(x)
        val = hs[-1][:, 0] + 0.5 * self.eta * np.einsum("ni,ni->n", x, x)
        return val, self._backward(x, zs, hs, False)[0]

    def _grad_params(self, x):
        zs, hs = self._forward(x)
        _, layers = self._backward(x, zs, hs, True)
        return Icnn(tuple(layers), self.eta)

    def flat(self):
        return np.concatenate([arr.ravel() for lay in self.layers for arr in lay.arrays()])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=float)
        pos = 0
        layers = []

        def take(shape):
            nonlocal pos
            size = int(np.prod(shape))
            out = vec[pos : pos + size].reshape(shape)
            pos += size
            return out

        for lay in self.layers:
            w = None if lay.w is None else take(lay.w.shape)
            a = take(lay.a.shape)
            b = take(lay.b.shape)
            layers.append(IcnnLayer(w, a, b, lay.activation))
        if pos != vec.size:
            raise ValidationError(f"flat vector has {vec.size} entries, expected {pos}")
        return Icnn(tuple(layers), self.eta)

    def feasibility_violation(self):
        for i, lay in enumerate(self.layers):
            if not all(np.all(np.isfinite(arr)) for arr in lay.arrays()):
                return f"layer {i}: non-finite entries"
            if lay.w is not None and np.any(lay.w < 0):
                return f"layer {i}: hidden weights must be nonnegative"
        return None

    def project(self):
        if self.is_feasible():
            return self
        layers = tuple(
            lay if lay.w is None else replace(lay, w=np.maximum(lay.w, 0.0)) for lay in self.layers
        )
        return Icnn(layers, self.eta)

    def strong_convexity(self):
        return self.eta


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def evaluate(theta: Potential, x):
    """``f(x; theta)`` for one point (returns float) or a batch of rows."""
    _check(theta)
    xb, single = _as_batch(x, theta.dim)
    v = theta._value(xb)
    return float(v[0]) if single else v


def grad_x(theta: Potential, x):
    """Gradient (or the documented subgradient) of ``f`` in ``x``."""
    _check(theta)
    xb, single = _as_batch(x, theta.dim)
    g = theta._grad_x(xb)
    return g[0] if single else g


def grad_params(theta: Potential, x) -> Potential:
    """Parameter gradient at ``x``, averaged over rows when ``x`` is a batch."""
    _check(theta)
    xb, _ = _as_batch(x, theta.dim)
    return theta._grad_params(xb)


def project_feasible(theta: Potential) -> Potential:
    """Nearest feasible parameters (identity on feasible input)."""
    return theta.project()


def strong_convexity_modulus(theta: Potential) -> float:
    _check(theta)
    return float(theta.strong_convexity())


def conjugate_closed_form(theta: Potential, y):
    """``(f*(y), argmax)`` when the class has a closed-form conjugate, else None."""
    _check(theta)
    yb, single = _as_batch(y, theta.dim)
    res = theta._conjugate(yb)
    if res is None:
        return None
    val, xhat = res
    return (float(val[0]), xhat[0]) if single else (val, xhat)


def convexity_probe(theta: Potential, seed: int = 0, trials: int = 10_000, box=(-3.0, 3.0)) -> float:
    """Largest observed violation of the convexity inequality.

    Draws ``trials`` triples ``(x1, x2, lam)`` with points uniform in ``box``
    (a ``(lower, upper)`` pair of scalars or d-vectors) and returns
    ``max f(lam x1 + (1-lam) x2) - lam f(x1) - (1-lam) f(x2)``. Feasibility
    is not required, so the probe can demonstrate non-convexity.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (theta.dim,)) for v in box)
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(lo, hi, (trials, theta.dim))
    x2 = rng.uniform(lo, hi, (trials, theta.dim))
    lam = rng.random(trials)
    mid = lam[:, None] * x1 + (1 - lam[:, None]) * x2
    gap = theta._value(mid) - lam * theta._value(x1) - (1 - lam) * theta._value(x2)
    return float(gap.max())


def identity_potential(tag: str, dim: int, **kw) -> Potential:
    """The member of a class equal to ``1/2 |x|^2``.

    For the ICNN this is the two-layer network with ``relu_squared`` units
    ``+-e_i`` and output weights 1/2 (minus the ``eta`` share), which is the
    standard construction of the identity potential inside that class.
    """
    if tag == "quadratic":
        return Quadratic(np.eye(dim), np.zeros(dim), kw.get("eps_spd", EPS_SPD))
    if tag == "ball_linear":
        return BallLinear(np.zeros(dim), kw.get("radius", 1.0))
    if tag == "plq":
        return PLQ(np.eye(dim)[None], np.zeros((1, dim)), np.zeros(1), kw.get("eps_spd", EPS_SPD))
    if tag == "icnn":
        eta = float(kw.get("eta", 0.0))
        if eta > 1:
            raise ValidationError("eta > 1 cannot represent 1/2 |x|^2")
        first = IcnnLayer(None, np.vstack([np.eye(dim), -np.eye(dim)]), np.zeros(2 * dim), "relu_squared")
        out = IcnnLayer(np.full((1, 2 * dim), 0.5 * (1 - eta)), np.zeros((1, dim)), np.zeros(1), "linear")
        return Icnn((first, out), eta)
    raise ValidationError(f"unknown potential class {tag!r}")


# ---------------------------------------------------------------------------
# JSON-ready dictionaries (checkpoint payload)
# ---------------------------------------------------------------------------


def _arr(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d):
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def to_dict(theta: Potential) -> dict:
    """Plain-dict form of ``theta``; floats survive a JSON round trip exactly.

    Layout: ``{"class_tag", "dim", "eta", "eps_spd", "params"}`` where every
    array is stored as ``{"shape": [...], "data": [row-major values]}``.
    """
    out = {"class_tag": theta.tag, "dim": theta.dim, "eta": 0.0, "eps_spd": None}
    if isinstance(theta, Quadratic):
        out["eps_spd"] = theta.eps_spd
        out["params"] = {"a": _arr(theta.a), "b": _arr(theta.b)}
    elif isinstance(theta, BallLinear):
        out["params"] = {"w": _arr(theta.w), "radius": theta.radius}
    elif isinstance(theta, PLQ):
        out["eps_spd"] = theta.eps_spd
        out["params"] = {"a": _arr(theta.a), "b": _arr(theta.b), "c": _arr(theta.c)}
    elif isinstance(theta, ConeCombo):
        out["params"] = {"alphas": _arr(theta.alphas), "basis": [to_dict(f) for f in theta.basis]}
    elif isinstance(theta, Icnn):
        out["eta"] = theta.eta
        out["params"] = {
            "layers": [
                {
                    "activation": lay.activation,
                    "w": None if lay.w is None else _arr(lay.w),
                    "a": _arr(lay.a),
                    "b": _arr(lay.b),
                }
                for lay in theta.layers
            ]
        }
    else:
        raise ValidationError(f"cannot serialise {type(theta).__name__}")
    return out


def from_dict(d: dict) -> Potential:
    tag = d.get("class_tag")
    p = d.get("params", {})
    try:
        if tag == "quadratic":
            return Quadratic(_unarr(p["a"]), _unarr(p["b"]), d["eps_spd"])
        if tag == "ball_linear":
            return BallLinear(_unarr(p["w"]), p["radius"])
        if tag == "plq":
            return PLQ(_unarr(p["a"]), _unarr(p["b"]), _unarr(p["c"]), d["eps_spd"])
        if tag == "cone_combo":
            return ConeCombo(_unarr(p["alphas"]), tuple(from_dict(f) for f in p["basis"]))
        if tag == "icnn":
            layers = tuple(
                IcnnLayer(None if L["w"] is None else _unarr(L["w"]), _unarr(L["a"]), _unarr(L["b"]), L["activation"])
                for L in p["layers"]
            )
            return Icnn(layers, d["eta"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed {tag} parameters: missing {exc}") from None
    raise ValidationError(f"unknown potential class tag {tag!r}")

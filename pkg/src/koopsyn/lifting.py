"""Observable dictionaries for Koopman lifting.

A dictionary always starts with the constant observable and the coordinate
maps; user-chosen observables follow and must vanish at the origin.  The full
lift of a state ``x`` is ``(1, x_1, ..., x_n, phi_{n+1}(x), ..., phi_N(x))``;
the reduced lift drops the leading constant entry and therefore vanishes at
``x = 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DictionaryError(ValueError):
    """Raised when a dictionary violates the required structure."""


def _fd_gradient(fn, x, rel_step=1e-6):
    # central differences, step scaled per coordinate
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        h = rel_step * (1.0 + abs(x[k]))
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


@dataclass(frozen=True)
class Observable:
    """Scalar observable with value and gradient evaluators.

    ``fn`` maps ``(..., n) -> (...)`` and ``grad`` maps ``(..., n) -> (..., n)``
    for catalog observables; custom observables may only support single
    points.
    """

    kind: str
    params: dict
    fn: Callable
    grad: Callable
    vectorized: bool = True


def constant():
    return Observable(
        kind="constant",
        params={},
        fn=lambda X: np.ones(np.shape(X)[:-1]),
        grad=lambda X: np.zeros(np.shape(X)),
    )


def coordinate(index):
    """The coordinate map x -> x_k (0-based index)."""
    k = int(index)

    def grad(X):
        G = np.zeros(np.shape(X))
        G[..., k] = 1.0
        return G

    return Observable(kind="coordinate", params={"index": k},
                      fn=lambda X: np.asarray(X, dtype=float)[..., k], grad=grad)


def poly(terms):
    """Polynomial observable ``sum_t c_t * prod_k x_k**e_{t,k}``.

    ``terms`` is a sequence of ``(coeff, exponents)`` pairs; every term must
    have total degree >= 1 so the observable vanishes at the origin.
    """
    terms = [(float(c), tuple(int(e) for e in exps)) for c, exps in terms]
    for c, exps in terms:
        if sum(exps) < 1:
            raise DictionaryError("polynomial terms must have degree >= 1")

    def fn(X):
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1])
        for c, exps in terms:
            t = np.full(X.shape[:-1], c)
            for k, e in enumerate(exps):
                if e:
                    t = t * X[..., k] ** e
            out = out + t
        return out

    def grad(X):
        X = np.asarray(X, dtype=float)
        G = np.zeros(X.shape)
        for c, exps in terms:
            for k, e in enumerate(exps):
                if e == 0:
                    continue
                t = np.full(X.shape[:-1], c * e)
                for kk, ee in enumerate(exps):
                    p = ee - 1 if kk == k else ee
                    if p:
                        t = t * X[..., kk] ** p
                G[..., k] += t
        return G

    return Observable(kind="poly", params={"terms": [[c, list(e)] for c, e in terms]},
                      fn=fn, grad=grad)


def sine(index):
    """sin(x_k); vanishes at the origin."""
    k = int(index)

    def grad(X):
        X = np.asarray(X, dtype=float)
        G = np.zeros(X.shape)
        G[..., k] = np.cos(X[..., k])
        return G

    return Observable(kind="sine", params={"index": k},
                      fn=lambda X: np.sin(np.asarray(X, dtype=float)[..., k]), grad=grad)


def cosine_minus_one(index):
    """cos(x_k) - 1; the shift makes it admissible (zero at the origin)."""
    k = int(index)

    def grad(X):
        X = np.asarray(X, dtype=float)
        G = np.zeros(X.shape)
        G[..., k] = -np.sin(X[..., k])
        return G

    return Observable(kind="cosine_minus_one", params={"index": k},
                      fn=lambda X: np.cos(np.asarray(X, dtype=float)[..., k]) - 1.0,
                      grad=grad)


def custom(fn, grad=None, name="custom"):
    """Wrap a user closure; gradients fall back to central differences."""
    if grad is None:
        grad = lambda x: _fd_gradient(fn, x)  # noqa: E731
    return Observable(kind=name, params={}, fn=fn, grad=grad, vectorized=False)


_CATALOG = {
    "constant": lambda params: constant(),
    "coordinate": lambda params: coordinate(params["index"]),
    "poly": lambda params: poly(params["terms"]),
    "sine": lambda params: sine(params["index"]),
    "cosine_minus_one": lambda params: cosine_minus_one(params["index"]),
}


@dataclass(frozen=True)
class Lifting:
    """Immutable observable dictionary.

    ``observables`` has length N+1: entry 0 is the constant, entries 1..n the
    coordinates, the rest user observables vanishing at the origin.
    """

    n: int
    observables: tuple
    lipschitz_hint: float | None = None
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if not self._checked:
            _validate(self)
            object.__setattr__(self, "_checked", True)

    @property
    def N(self):
        """Reduced lifted dimension (number of non-constant observables)."""
        return len(self.observables) - 1

    # -- evaluation -----------------------------------------------------

    def lift(self, x):
        """Full lifted vector Phi(x) of length N+1."""
        x = self._check_state(x)
        out = np.array([self._eval(ob, x) for ob in self.observables])
        if not np.all(np.isfinite(out)):
            raise ValueError("non-finite observable value at x=%r" % (x,))
        return out

    def lift_reduced(self, x):
        """Reduced lifted vector (drops the constant entry); zero at x=0."""
        return self.lift(x)[1:]

    def lift_gradient(self, x):
        """Gradient matrix, row k = grad(phi_k)(x), shape (N+1, n)."""
        x = self._check_state(x)
        G = np.vstack([np.asarray(ob.grad(x), dtype=float) for ob in self.observables])
        if not np.all(np.isfinite(G)):
            raise ValueError("non-finite observable gradient at x=%r" % (x,))
        return G

    def lift_many(self, X):
        """Vectorized full lift; X has shape (d, n), result (d, N+1)."""
        X = np.asarray(X, dtype=float)
        cols = []
        for ob in self.observables:
            if ob.vectorized:
                cols.append(np.asarray(ob.fn(X), dtype=float))
            else:
                cols.append(np.array([ob.fn(row) for row in X], dtype=float))
        out = np.column_stack(cols)
        if not np.all(np.isfinite(out)):
            raise ValueError("non-finite observable value in batch")
        return out

    def lift_reduced_many(self, X):
        return self.lift_many(X)[:, 1:]

    def gradient_many(self, X):
        """Vectorized gradients; result has shape (d, N+1, n)."""
        X = np.asarray(X, dtype=float)
        mats = []
        for ob in self.observables:
            if ob.vectorized:
                mats.append(np.asarray(ob.grad(X), dtype=float))
            else:
                mats.append(np.array([ob.grad(row) for row in X], dtype=float))
        return np.stack(mats, axis=1)

    # -- serialization --------------------------------------------------

    def descriptor(self):
        """JSON-serializable description ``{n, N, observables}``."""
        obs = []
        for ob in self.observables:
            if ob.kind not in _CATALOG:
                raise ValueError(f"observable kind '{ob.kind}' is not serializable")
            obs.append({"kind": ob.kind, "params": ob.params})
        return {"n": self.n, "N": self.N, "observables": obs}

    def to_json(self):
        return json.dumps(self.descriptor(), sort_keys=True)

    @staticmethod
    def from_descriptor(desc):
        obs = tuple(_CATALOG[o["kind"]](o.get("params", {})) for o in desc["observables"])
        return Lifting(n=int(desc["n"]), observables=obs)

    @staticmethod
    def from_json(text):
        return Lifting.from_descriptor(json.loads(text))

    # -- internals ------------------------------------------------------

    def _check_state(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.n},)")
        return x

    @staticmethod
    def _eval(ob, x):
        return float(ob.fn(x))


def _validate(L):
    n = L.n
    if len(L.observables) < n + 1:
        raise DictionaryError("dictionary must contain the constant and all coordinates")
    rng = np.random.default_rng(0)
    probes = [np.zeros(n)] + [rng.uniform(-1.0, 1.0, size=n) for _ in range(3)]
    ob0 = L.observables[0]
    for x in probes:
        if abs(float(ob0.fn(x)) - 1.0) > 1e-12 or np.any(np.abs(ob0.grad(x)) > 1e-12):
            raise DictionaryError("observable 0 must be identically 1")
    for k in range(1, n + 1):
        ob = L.observables[k]
        for x in probes:
            if abs(float(ob.fn(x)) - x[k - 1]) > 1e-12:
                raise DictionaryError(f"observable {k} must be the coordinate map x_{k}")
    origin = np.zeros(n)
    for k in range(n + 1, len(L.observables)):
        v = float(L.observables[k].fn(origin))
        if not np.isfinite(v) or abs(v) > 1e-12:
            raise DictionaryError(f"observable {k} must vanish at the origin (got {v})")


def make_lifting(n, extras=(), lipschitz_hint=None):
    """Build a dictionary from the extra observables only; the constant and
    coordinate maps are prepended automatically."""
    obs = (constant(),) + tuple(coordinate(k) for k in range(n)) + tuple(extras)
    return Lifting(n=n, observables=obs, lipschitz_hint=lipschitz_hint)


def identity_lifting(n):
    """Dictionary containing only the constant and the coordinates (N = n)."""
    return make_lifting(n)


def estimate_lipschitz(L, box, samples, seed=0):
    """Estimate the local Lipschitz constant of the full lift on a box.

    Draws ``samples`` point pairs (every fourth pair is anchored at the
    origin) and returns the largest difference quotient
    ``||Phi(x) - Phi(y)|| / ||x - y||``.  For a fixed seed the estimate is
    nondecreasing in ``samples`` because the pair stream is extended, never
    reshuffled.
    """
    box = np.asarray(box, dtype=float)
    if box.shape != (L.n, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("domain box must be (n, 2) with lo < hi per axis")
    samples = int(samples)
    if samples < 2:
        raise ValueError("need at least 2 sample pairs")
    rng = np.random.default_rng(seed)
    U = rng.random((samples, 2, L.n))
    pts = box[:, 0] + U * (box[:, 1] - box[:, 0])
    pts[3::4, 1, :] = 0.0
    X = pts[:, 0, :]
    Y = pts[:, 1, :]
    dxy = np.linalg.norm(X - Y, axis=1)
    keep = dxy > 1e-12
    PX = L.lift_many(X[keep])
    PY = L.lift_many(Y[keep])
    ratios = np.linalg.norm(PX - PY, axis=1) / dxy[keep]
    return float(np.max(ratios))

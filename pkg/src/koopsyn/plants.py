"""Ground-truth plant oracles and state/derivative sampling.

Plants supply the data for identification and the right-hand sides for
closed-loop simulation; the synthesis path itself only ever sees samples.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Plant:
    """Control-affine system ``xdot = f(x) + sum_i u_i g_i(x)``.

    ``f`` and each ``g_i`` map (..., n) -> (..., n) arrays.  The drift must
    vanish at the origin and the input box must contain 0 in its interior.
    """

    name: str
    n: int
    m: int
    f: Callable
    g: tuple
    state_box: np.ndarray
    input_box: np.ndarray

    def __post_init__(self):
        sb = np.asarray(self.state_box, dtype=float)
        ib = np.asarray(self.input_box, dtype=float)
        object.__setattr__(self, "state_box", sb)
        object.__setattr__(self, "input_box", ib)
        if sb.shape != (self.n, 2) or ib.shape != (self.m, 2):
            raise ValueError("state/input boxes must have shape (dim, 2)")
        if np.any(ib[:, 0] >= 0.0) or np.any(ib[:, 1] <= 0.0):
            raise ValueError("input box must contain 0 in its interior")
        f0 = np.asarray(self.f(np.zeros(self.n)), dtype=float)
        if np.linalg.norm(f0) > 1e-12:
            raise ValueError("drift must vanish at the origin (controlled equilibrium)")

    def vector_field(self, x, u):
        """Evaluate ``f(x) + sum_i u_i g_i(x)``; ``x`` may be a batch (d, n)
        as long as ``u`` is a single input vector."""
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if x.shape[-1] != self.n or u.shape != (self.m,):
            raise ValueError("dimension mismatch in vector field evaluation")
        out = np.asarray(self.f(x), dtype=float).copy()
        for i in range(self.m):
            out += u[i] * np.asarray(self.g[i](x), dtype=float)
        return out


def evaluate_vector_field(plant, x, u):
    """Module-level alias for :meth:`Plant.vector_field`."""
    return plant.vector_field(x, u)


def make_example(example_id, **params):
    """Construct one of the built-in benchmark plants.

    ``cooked_up`` / ``cooked_up_xy``: planar system with decoupled linear
    first state and a quadratic coupling in the second, single additive
    input (parameters ``rho``, ``lam``).  ``pendulum``: inverted pendulum
    with parameters ``mass``, ``length``, ``friction``, ``gravity``.
    """
    if example_id in ("cooked_up", "cooked_up_xy"):
        rho = float(params.pop("rho", -2.0))
        lam = float(params.pop("lam", params.pop("lambda", 1.0)))
        if params:
            raise ValueError(f"unknown parameters {sorted(params)}")

        def f(x):
            x = np.asarray(x, dtype=float)
            return np.stack([rho * x[..., 0],
                             lam * (x[..., 1] - x[..., 0] ** 2)], axis=-1)

        def g1(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape)
            out[..., 1] = 1.0
            return out

        return Plant(name=example_id, n=2, m=1, f=f, g=(g1,),
                     state_box=[[-1.0, 1.0], [-1.0, 1.0]],
                     input_box=[[-1.0, 1.0]])

    if example_id == "pendulum":
        mass = float(params.pop("mass", params.pop("m", 1.0)))
        length = float(params.pop("length", params.pop("l", 1.0)))
        fric = float(params.pop("friction", params.pop("b", 0.01)))
        grav = float(params.pop("gravity", params.pop("g", 9.81)))
        if params:
            raise ValueError(f"unknown parameters {sorted(params)}")
        ml2 = mass * length ** 2

        def f(x):
            x = np.asarray(x, dtype=float)
            return np.stack([x[..., 1],
                             (grav / length) * np.sin(x[..., 0])
                             - (fric / ml2) * x[..., 1]], axis=-1)

        def g1(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape)
            out[..., 1] = 1.0 / ml2
            return out

        return Plant(name="pendulum", n=2, m=1, f=f, g=(g1,),
                     state_box=[[-2.0, 10.0], [-2.0, 10.0]],
                     input_box=[[-10.0, 10.0]])

    raise ValueError(f"unknown example id '{example_id}'")


@dataclass(frozen=True)
class SampleBatch:
    """States and derivatives recorded under one constant input."""

    u_bar: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u_bar", np.atleast_1d(np.asarray(self.u_bar, dtype=float)))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        object.__setattr__(self, "derivs", np.asarray(self.derivs, dtype=float))
        if self.states.shape != self.derivs.shape:
            raise ValueError("states and derivatives must have matching shapes")

    @property
    def count(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class SampleSet:
    """Batches for the constant inputs 0, a_1 e_1, ..., a_m e_m."""

    batches: tuple
    noise_bound: float = 0.0
    seed: int | None = None

    def batch(self, k):
        """Batch k, with k = 0 the zero-input batch and k = i the e_i batch."""
        return self.batches[k]

    @property
    def m(self):
        return len(self.batches) - 1


def _batch_rng(seed, batch_index):
    # documented stream split: one child stream per (seed, batch index)
    return np.random.default_rng([int(seed), int(batch_index)])


def sample_uniform(plant, u_bar, d, seed, batch_index=0, noise_bound=0.0):
    """Draw ``d`` i.i.d. uniform states from the plant's state box and record
    exact derivatives under the constant input ``u_bar``; optional uniform
    derivative noise on ``[-noise_bound, noise_bound]`` per component."""
    if d < 1:
        raise ValueError("need at least one sample")
    u_bar = np.atleast_1d(np.asarray(u_bar, dtype=float))
    rng = _batch_rng(seed, batch_index)
    box = plant.state_box
    X = box[:, 0] + rng.random((int(d), plant.n)) * (box[:, 1] - box[:, 0])
    Xdot = plant.vector_field(X, u_bar)
    if noise_bound > 0.0:
        Xdot = Xdot + rng.uniform(-noise_bound, noise_bound, size=Xdot.shape)
    return SampleBatch(u_bar=u_bar, states=X, derivs=Xdot)


def basis_input_scales(plant):
    """Largest alpha_i <= 1 such that alpha_i * e_i lies in the input box."""
    ib = plant.input_box
    return np.minimum(1.0, np.minimum(-ib[:, 0], ib[:, 1]))


def collect_samples(plant, d, seed, noise_bound=0.0):
    """SampleSet with one batch per constant input 0, a_1 e_1, ..., a_m e_m.

    Unit-vector inputs are scaled down when they would leave the input box.
    """
    scales = basis_input_scales(plant)
    batches = [sample_uniform(plant, np.zeros(plant.m), d, seed,
                              batch_index=0, noise_bound=noise_bound)]
    for i in range(plant.m):
        u = np.zeros(plant.m)
        u[i] = scales[i]
        batches.append(sample_uniform(plant, u, d, seed,
                                      batch_index=i + 1, noise_bound=noise_bound))
    return SampleSet(batches=tuple(batches), noise_bound=float(noise_bound),
                     seed=int(seed))


def save_samples(samples, outdir, plant=None):
    """Write one CSV per batch (samples_u<k>.csv) plus metadata JSON."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n = samples.batches[0].states.shape[1]
    header = [f"x_{j+1}" for j in range(n)] + [f"xdot_{j+1}" for j in range(n)]
    files = []
    for k, b in enumerate(samples.batches):
        path = outdir / f"samples_u{k}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for x, xd in zip(b.states, b.derivs):
                w.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in xd])
        files.append(path.name)
    meta = {
        "seed": samples.seed,
        "noise_bound": samples.noise_bound,
        "counts": [b.count for b in samples.batches],
        "inputs": [b.u_bar.tolist() for b in samples.batches],
        "files": files,
    }
    if plant is not None:
        meta["plant"] = {"name": plant.name, "n": plant.n, "m": plant.m,
                         "state_box": plant.state_box.tolist(),
                         "input_box": plant.input_box.tolist()}
    with open(outdir / "samples_meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return meta


def load_samples(outdir):
    """Read a SampleSet previously written by :func:`save_samples`."""
    outdir = Path(outdir)
    with open(outdir / "samples_meta.json") as fh:
        meta = json.load(fh)
    batches = []
    for k, fname in enumerate(meta["files"]):
        rows = np.loadtxt(outdir / fname, delimiter=",", skiprows=1, ndmin=2)
        n = rows.shape[1] // 2
        batches.append(SampleBatch(u_bar=np.asarray(meta["inputs"][k]),
                                   states=rows[:, :n], derivs=rows[:, n:]))
    return SampleSet(batches=tuple(batches), noise_bound=meta["noise_bound"],
                     seed=meta["seed"])

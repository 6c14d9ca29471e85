"""Oracle-mode evaluation of the sufficient-data bound and the proportional
remainder bound.

Convention: the Gram matrix C and the generator-weighted matrices are plain
L2 inner products over the sampling box (no volume normalization), while the
variance matrices are per-entry variances with respect to the uniform
probability measure on the box.  Quadrature is carried out in expectations
and rescaled by the box volume where the unnormalized inner product is
required.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureSpec:
    method: str = "grid"            # "grid" | "mc"
    points_per_axis: int = 101
    samples: int = 1 << 21
    replicates: int = 8
    seed: int = 0
    sobol: bool = True              # scrambled-Sobol randomized QMC for "mc"

    def describe(self):
        if self.method == "grid":
            return {"method": "grid", "points_per_axis": self.points_per_axis}
        return {"method": "mc", "samples": self.samples,
                "replicates": self.replicates, "seed": self.seed,
                "sobol": self.sobol}


def _grid_points(box, points_per_axis):
    axes = []
    for lo, hi in box:
        h = (hi - lo) / points_per_axis
        axes.append(lo + h * (np.arange(points_per_axis) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    return [(pts, w)]

def _mc_points(box, spec, n):
    box = np.asarray(box, dtype=float)
    chunks = []
    per = max(2, spec.samples // max(1, spec.replicates))
    if spec.sobol:
        from scipy.stats import qmc

        mexp = max(1, int(math.ceil(math.log2(per))))
        for r in range(spec.replicates):
            eng = qmc.Sobol(d=n, scramble=True, seed=spec.seed + r)
            U = eng.random(1 << mexp)
            pts = box[:, 0] + U * (box[:, 1] - box[:, 0])
            chunks.append((pts, np.full(pts.shape[0], 1.0 / pts.shape[0])))
    else:
        rng = np.random.default_rng(spec.seed)
        for _ in range(spec.replicates):
            U = rng.random((per, n))
            pts = box[:, 0] + U * (box[:, 1] - box[:, 0])
            chunks.append((pts, np.full(pts.shape[0], 1.0 / pts.shape[0])))
    return chunks


@dataclass(frozen=True)
class DataRequirement:
    c_r: float
    delta: float
    delta_tilde: float
    c_r_tilde: float
    c_r_tilde_k: np.ndarray
    C: np.ndarray
    A_k: tuple
    sigma_C_fro: float
    sigma_A_fro: np.ndarray
    d0: int
    d0_float: float
    quadrature: dict
    mc_stderr: dict | None = None

    @property
    def log10_d0(self):
        return math.log10(self.d0_float) if self.d0_float > 0 else -math.inf

    def to_json(self):
        per_k = []
        for k in range(len(self.A_k)):
            per_k.append({
                "c_r_k": float(self.c_r_tilde_k[k]),
                "norm_A_k": float(np.linalg.norm(self.A_k[k], 2)),
                "sigma_frobenius": float(self.sigma_A_fro[k]),
            })
        doc = {
            "d0": int(self.d0),
            "d0_float": self.d0_float,
            "log10_d0": self.log10_d0,
            "exceeds_float64_int": bool(self.d0_float > 2.0 ** 53),
            "delta_tilde": self.delta_tilde,
            "c_r_tilde": self.c_r_tilde,
            "norm_C_inv": float(np.linalg.norm(np.linalg.inv(self.C), 2)),
            "sigma_C_frobenius": self.sigma_C_fro,
            "per_k": per_k,
            "quadrature": self.quadrature,
        }
        if self.mc_stderr is not None:
            doc["mc_stderr"] = self.mc_stderr
        return json.dumps(doc, sort_keys=True)


def _moment_tables(plant, lifting, chunks):
    """Accumulated expectations per quadrature chunk.

    Returns per-chunk tuples (C, EW[k], C2, EW2[k]) where C = E[phi phi'],
    EW[k][i,j] = E[phi_i * <grad phi_j, f + g_k>], C2 and EW2 the matching
    second moments (elementwise squares inside the expectation).
    """
    out = []
    for pts, w in chunks:
        V = lifting.lift_many(pts)                    # (d, N+1)
        G = lifting.gradient_many(pts)                # (d, N+1, n)
        fields = [np.asarray(plant.f(pts), dtype=float)]
        for i in range(plant.m):
            fields.append(fields[0] + np.asarray(plant.g[i](pts), dtype=float))
        Ws = [np.einsum("dkn,dn->dk", G, F) for F in fields]
        Vw = V * w[:, None]
        C = Vw.T @ V
        C2 = (V ** 2 * w[:, None]).T @ (V ** 2)
        EW = [Vw.T @ W for W in Ws]
        EW2 = [(V ** 2 * w[:, None]).T @ (W ** 2) for W in Ws]
        out.append((C, EW, C2, EW2))
    return out


def _sigma(first, second):
    var = np.maximum(second - first ** 2, 0.0)
    return np.sqrt(var)


def compute_d0(plant, lifting, c_r, delta, quad=None):
    """Sufficient-data bound for the generator estimation error.

    Evaluates the Gram and generator-weighted moment matrices over the
    plant's sampling box by the chosen quadrature, forms the per-channel
    thresholds, and returns the ceiling of the worst-channel bound together
    with all intermediate quantities.  Requires plant dynamics (oracle mode).
    """
    if c_r <= 0.0:
        raise ValueError("c_r must be positive")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    quad = quad or QuadratureSpec()
    n = plant.n
    m = plant.m
    box = plant.state_box
    if quad.method == "grid":
        chunks = _grid_points(box, quad.points_per_axis)
    elif quad.method == "mc":
        chunks = _mc_points(box, quad, n)
    else:
        raise ValueError(f"unknown quadrature method '{quad.method}'")
    tables = _moment_tables(plant, lifting, chunks)
    R = len(tables)
    volume = float(np.prod(box[:, 1] - box[:, 0]))
    EC = sum(t[0] for t in tables) / R
    C2 = sum(t[2] for t in tables) / R
    EA_k = [sum(t[1][k] for t in tables) / R for k in range(m + 1)]
    A2_k = [sum(t[3][k] for t in tables) / R for k in range(m + 1)]
    C = volume * EC
    A_k = [volume * EA for EA in EA_k]
    if not np.all(np.isfinite(C)) or any(not np.all(np.isfinite(A)) for A in A_k):
        raise ValueError("quadrature produced non-finite moments")
    mc_stderr = None
    if quad.method == "mc" and R > 1:
        se_C = np.std([t[0] for t in tables], axis=0, ddof=1) / math.sqrt(R)
        mc_stderr = {"C_max": float(np.max(se_C))}

    sigma_C = _sigma(EC, C2)
    sigma_A = [_sigma(EA_k[k], A2_k[k]) for k in range(m + 1)]

    delta_tilde = delta / (3.0 * (m + 1))
    ub = plant.input_box
    u_l1_max = float(np.sum(np.maximum(np.abs(ub[:, 0]), np.abs(ub[:, 1]))))
    c_r_tilde = c_r / ((m + 1) * (1.0 + u_l1_max))

    C_inv_norm = float(np.linalg.norm(np.linalg.inv(C), 2))
    c_r_tilde_k = np.empty(m + 1)
    bound = 0.0
    Np1 = lifting.N + 1
    sig_C_fro = float(np.linalg.norm(sigma_C, "fro"))
    sig_A_fro = np.empty(m + 1)
    for k in range(m + 1):
        a_norm = float(np.linalg.norm(A_k[k], 2))
        c_r_tilde_k[k] = (min(1.0, 1.0 / (a_norm * C_inv_norm))
                          * a_norm * c_r_tilde
                          / (2.0 * a_norm * C_inv_norm + c_r_tilde))
        sig_A_fro[k] = float(np.linalg.norm(sigma_A[k], "fro"))
        val = (Np1 ** 2 / (delta_tilde * c_r_tilde_k[k] ** 2)
               * max(sig_A_fro[k] ** 2, sig_C_fro ** 2))
        bound = max(bound, val)
    d0_float = float(bound)
    d0 = max(1, math.ceil(bound))
    return DataRequirement(c_r=float(c_r), delta=float(delta),
                           delta_tilde=delta_tilde, c_r_tilde=c_r_tilde,
                           c_r_tilde_k=c_r_tilde_k, C=C, A_k=tuple(A_k),
                           sigma_C_fro=sig_C_fro, sigma_A_fro=sig_A_fro,
                           d0=d0, d0_float=d0_float,
                           quadrature=quad.describe(), mc_stderr=mc_stderr)


def remainder_bound(surrogate, z, u):
    """Proportional remainder budget c_r (||z|| + ||u||)."""
    if surrogate.c_r is None:
        raise ValueError("surrogate carries no remainder bound")
    z = np.asarray(z, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(surrogate.c_r * (np.linalg.norm(z) + np.linalg.norm(u)))

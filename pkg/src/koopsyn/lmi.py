"""Affine matrix-inequality assembly for the feedback-synthesis designs.

Constraints are represented as symmetric matrix-valued affine functions of
the decision variables, materialized by probing a block-formula callback on
a component basis.  Two designs are provided: the single-input linear lift
feedback (theorem 1) and the gain-scheduled multi-input feedback
(theorem 2), each paired with the sublevel-set invariance inequality that
confines the certified region inside the uncertainty region.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .matops import block, smat, svec, sym, sym_basis, sym_dim


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str            # "sym" | "full" | "scalar"
    shape: tuple

    @property
    def ncomp(self):
        if self.kind == "sym":
            return sym_dim(self.shape[0])
        if self.kind == "full":
            return int(np.prod(self.shape))
        return 1

    def zero(self):
        if self.kind == "scalar":
            return 0.0
        return np.zeros(self.shape)

    def basis(self):
        if self.kind == "sym":
            return sym_basis(self.shape[0])
        if self.kind == "full":
            out = []
            for i in range(self.shape[0]):
                for j in range(self.shape[1]):
                    E = np.zeros(self.shape)
                    E[i, j] = 1.0
                    out.append(E)
            return out
        return [1.0]

    def components(self, value):
        if self.kind == "sym":
            return svec(value)
        if self.kind == "full":
            return np.asarray(value, dtype=float).ravel()
        return np.array([float(value)])

    def from_components(self, vec):
        if self.kind == "sym":
            return smat(vec, self.shape[0])
        if self.kind == "full":
            return np.asarray(vec, dtype=float).reshape(self.shape)
        return float(vec[0])


class AffineMatrixExpr:
    """Symmetric matrix-valued affine function of named decision variables."""

    def __init__(self, dim, constant, coeffs):
        self.dim = int(dim)
        self.constant = np.asarray(constant, dtype=float)
        self.coeffs = {k: np.asarray(v, dtype=float) for k, v in coeffs.items()}

    @staticmethod
    def from_function(fn, variables):
        """Materialize an affine block formula by probing it at the zero
        assignment and at every unit basis element of every variable."""
        zero = {v.name: v.zero() for v in variables}
        C0 = sym(np.asarray(fn(zero), dtype=float))
        dim = C0.shape[0]
        coeffs = {}
        for v in variables:
            mats = np.empty((v.ncomp, dim, dim))
            for idx, B in enumerate(v.basis()):
                a = dict(zero)
                a[v.name] = B
                mats[idx] = sym(np.asarray(fn(a), dtype=float)) - C0
            coeffs[v.name] = mats
        return AffineMatrixExpr(dim=dim, constant=C0, coeffs=coeffs)

    def evaluate(self, assignment, variables):
        value = self.constant.copy()
        for v in variables:
            if v.name not in self.coeffs:
                continue
            if v.name not in assignment:
                raise KeyError(f"assignment is missing variable '{v.name}'")
            comp = v.components(assignment[v.name])
            value += np.tensordot(comp, self.coeffs[v.name], axes=1)
        return value

    def data_magnitude(self):
        """Largest absolute entry over the constant and all coefficients."""
        mags = [np.max(np.abs(self.constant))] if self.constant.size else [0.0]
        for M in self.coeffs.values():
            if M.size:
                mags.append(np.max(np.abs(M)))
        return float(max(mags))


@dataclass(frozen=True)
class Constraint:
    name: str
    expr: AffineMatrixExpr
    margin: float          # required minimum eigenvalue (0 for non-strict)


@dataclass(frozen=True)
class SynthesisProblem:
    variables: tuple
    constraints: tuple
    N: int
    m: int
    theorem: int
    epsilon: float
    objective: tuple | None = None   # ("maximize", var name) or None
    meta: dict = field(default_factory=dict)

    def variable(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def constraint(self, name):
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def manifest(self):
        """Audit description: constraints, dimensions, margins, variables."""
        return {
            "theorem": self.theorem,
            "N": self.N,
            "m": self.m,
            "epsilon": self.epsilon,
            "objective": list(self.objective) if self.objective else None,
            "variables": [
                {"name": v.name, "kind": v.kind, "shape": list(v.shape)}
                for v in self.variables
            ],
            "constraints": [
                {"name": c.name, "dim": c.expr.dim, "margin": c.margin}
                for c in self.constraints
            ],
        }


def evaluate(expr_or_constraint, assignment, variables):
    """Dense value of an affine expression plus its minimum eigenvalue."""
    expr = getattr(expr_or_constraint, "expr", expr_or_constraint)
    value = expr.evaluate(assignment, variables)
    lam_min = float(np.linalg.eigvalsh(value)[0])
    return value, lam_min


def _scalar_expr(variables, fn):
    return AffineMatrixExpr.from_function(lambda a: np.array([[fn(a)]]), variables)


def _positivity_constraints(variables, names, epsilon):
    out = []
    for name in names:
        v = next(v for v in variables if v.name == name)
        if v.kind == "scalar":
            expr = _scalar_expr(variables, lambda a, n=name: a[n])
        else:
            expr = AffineMatrixExpr.from_function(lambda a, n=name: a[n], variables)
        out.append(Constraint(name=f"{name}_pos", expr=expr, margin=epsilon))
    return out


def _invariance_expr(variables, region, N):
    Sz_row = region.Sz.reshape(1, N)
    inv_Qz = region.inv_Qz

    def fn(a):
        P, nu = a["P"], a["nu"]
        b21 = Sz_row @ P
        return block([
            [P,            b21.T,               P,             np.zeros((N, 1))],
            [b21,          [[nu * region.Rz]],  np.zeros((1, N)), [[nu]]],
            [P,            np.zeros((N, 1)),    -nu * inv_Qz,  np.zeros((N, 1))],
            [np.zeros((1, N)), [[nu]],          np.zeros((1, N)), [[1.0]]],
        ])

    return AffineMatrixExpr.from_function(fn, variables)


def build_theorem1(surrogate, region, epsilon=1e-6):
    """Single-input design: linear feedback on the reduced lift.

    Constraint ``stability`` is the strict 4x4 block inequality coupling the
    closed-loop dissipation with the two uncertainty multipliers (block rows
    N, 1, N+1, N); ``invariance`` keeps the certified sublevel set inside
    the uncertainty region.
    """
    if surrogate.m != 1:
        raise ValueError("this design handles single-input surrogates only")
    if surrogate.c_r is None:
        raise ValueError("surrogate needs a remainder bound c_r")
    N = surrogate.N
    A, B0, Bt = surrogate.A, surrogate.B0, surrogate.B_tilde
    crinv2 = surrogate.c_r ** -2.0
    tS_col = region.tS.reshape(N, 1)
    tR = region.tR
    inv_tQ = region.inv_tQ

    variables = (
        VariableSpec("P", "sym", (N, N)),
        VariableSpec("L", "full", (1, N)),
        VariableSpec("lam", "scalar", ()),
        VariableSpec("tau", "scalar", ()),
        VariableSpec("nu", "scalar", ()),
    )

    def stability(a):
        P, L, lam, tau = a["P"], a["L"], a["lam"], a["tau"]
        X = A @ P + B0 @ L
        b11 = -X - X.T - tau * np.eye(N)
        b21 = -L - lam * (tS_col.T @ Bt.T)
        b22 = lam * np.array([[tR]])
        b31 = -np.vstack([P, L])
        b32 = np.zeros((N + 1, 1))
        b33 = 0.5 * tau * crinv2 * np.eye(N + 1)
        b41 = lam * Bt.T
        b42 = np.zeros((N, 1))
        b43 = np.zeros((N, N + 1))
        b44 = -lam * inv_tQ
        return block([
            [b11,   b21.T, b31.T, b41.T],
            [b21,   b22,   b32.T, b42.T],
            [b31,   b32,   b33,   b43.T],
            [b41,   b42,   b43,   b44],
        ])

    stability_expr = AffineMatrixExpr.from_function(stability, variables)
    eps_stab = epsilon * max(1.0, stability_expr.data_magnitude())
    constraints = (
        Constraint("stability", stability_expr, eps_stab),
        Constraint("invariance", _invariance_expr(variables, region, N), 0.0),
        *_positivity_constraints(variables, ("P", "tau", "lam", "nu"), epsilon),
    )
    return SynthesisProblem(variables=variables, constraints=constraints,
                            N=N, m=1, theorem=1, epsilon=epsilon,
                            meta={"c_r": surrogate.c_r})


def build_theorem2(surrogate, region, epsilon=1e-6):
    """Multi-input gain-scheduled design.

    The strict constraint has block rows (N, m, N+m, N*m) with the
    Kronecker-structured multiplier blocks; for m = 1 with the scheduling
    gain frozen at zero it coincides entrywise with the single-input design.
    """
    if surrogate.c_r is None:
        raise ValueError("surrogate needs a remainder bound c_r")
    N, m = surrogate.N, surrogate.m
    A, B0, Bt = surrogate.A, surrogate.B0, surrogate.B_tilde
    crinv2 = surrogate.c_r ** -2.0
    tS_col = region.tS.reshape(N, 1)
    tR = region.tR
    inv_tQ = region.inv_tQ
    Im = np.eye(m)

    variables = (
        VariableSpec("P", "sym", (N, N)),
        VariableSpec("L", "full", (m, N)),
        VariableSpec("Lw", "full", (m, N * m)),
        VariableSpec("Lam", "sym", (m, m)),
        VariableSpec("tau", "scalar", ()),
        VariableSpec("nu", "scalar", ()),
    )

    def stability(a):
        P, L, Lw, Lam, tau = a["P"], a["L"], a["Lw"], a["Lam"], a["tau"]
        X = A @ P + B0 @ L
        b11 = -X - X.T - tau * np.eye(N)
        b21 = -L - np.kron(Lam, tS_col.T) @ Bt.T - np.kron(Im, tS_col.T) @ Lw.T @ B0.T
        W = Lw @ np.kron(Im, tS_col)
        b22 = np.kron(Lam, np.array([[tR]])) - W - W.T
        b31 = -np.vstack([P, L])
        b32 = -np.vstack([np.zeros((N, N * m)), Lw]) @ np.kron(Im, tS_col)
        b33 = 0.5 * tau * crinv2 * np.eye(N + m)
        b41 = np.kron(Lam, np.eye(N)) @ Bt.T + Lw.T @ B0.T
        b42 = Lw.T
        # sign chosen so the Schur reduction factors through the closed-loop
        # channel basis (the scheduling gain feeds the remainder input v2
        # with +Kw); the opposite sign breaks that factorization
        b43 = np.hstack([np.zeros((N * m, N)), Lw.T])
        b44 = -np.kron(Lam, inv_tQ)
        return block([
            [b11,   b21.T, b31.T, b41.T],
            [b21,   b22,   b32.T, b42.T],
            [b31,   b32,   b33,   b43.T],
            [b41,   b42,   b43,   b44],
        ])

    stability_expr = AffineMatrixExpr.from_function(stability, variables)
    eps_stab = epsilon * max(1.0, stability_expr.data_magnitude())
    constraints = (
        Constraint("stability", stability_expr, eps_stab),
        Constraint("invariance", _invariance_expr(variables, region, N), 0.0),
        *_positivity_constraints(variables, ("P", "Lam", "tau", "nu"), epsilon),
    )
    return SynthesisProblem(variables=variables, constraints=constraints,
                            N=N, m=m, theorem=2, epsilon=epsilon,
                            meta={"c_r": surrogate.c_r})


def drop_constraint(problem, name):
    """Copy of the problem without the named constraint."""
    kept = tuple(c for c in problem.constraints if c.name != name)
    if len(kept) == len(problem.constraints):
        raise KeyError(name)
    return replace(problem, constraints=kept)


def add_trace_cap(problem, var_name, cap):
    """Append the scalar constraint cap - trace(var) >= 0."""
    v = problem.variable(var_name)

    def fn(a):
        return np.array([[cap - np.trace(np.atleast_2d(a[var_name]))]])

    expr = AffineMatrixExpr.from_function(fn, problem.variables)
    extra = Constraint(f"trace_cap_{var_name}", expr, 0.0)
    return replace(problem, constraints=problem.constraints + (extra,),
                   meta={**problem.meta, "trace_cap": float(cap)})


def add_roa_objective(problem):
    """Extension beyond the base feasibility design: maximize t subject to
    P >= t I, pushing the certified sublevel set outward."""
    t = VariableSpec("t_roa", "scalar", ())
    variables = problem.variables + (t,)

    def fn(a):
        P = a["P"]
        return P - a["t_roa"] * np.eye(P.shape[0])

    expr = AffineMatrixExpr.from_function(fn, variables)
    extra = Constraint("roa_radius", expr, 0.0)
    return replace(problem, variables=variables,
                   constraints=problem.constraints + (extra,),
                   objective=("maximize", "t_roa"))


# -- post-solve verification helpers ------------------------------------


def _scheduled_gain(design, z):
    """Input produced by a design at reduced lift z (duck-typed design)."""
    K = np.atleast_2d(design.K)
    u_lin = K @ z
    Kw = getattr(design, "Kw", None)
    if Kw is None or not np.any(Kw):
        return u_lin
    m = K.shape[0]
    W = np.eye(m) - Kw @ np.kron(np.eye(m), z.reshape(-1, 1))
    return np.linalg.solve(W, u_lin)


def primal_certificate(surrogate, region, design):
    """Dualized certificate at a solved design.

    Assembles the inverse-multiplier quadratic form on the complementary
    uncertainty-channel basis; by the inertia of the inverse middle matrix
    the form is negative definite exactly when the solved synthesis
    inequality holds, so the NEGATED matrix is returned and passing means
    its minimum eigenvalue is positive.  Independent of the solver.
    """
    N, m = surrogate.N, surrogate.m
    P_inv = sym(np.linalg.inv(design.P))
    tau = design.tau
    c_r = surrogate.c_r
    A, B0, Bt = surrogate.A, surrogate.B0, surrogate.B_tilde
    K = np.atleast_2d(design.K)
    A_K = A + B0 @ K
    zero = np.zeros
    if design.theorem == 1:
        lam = design.lam
        mid = block([
            [zero((N, N)), P_inv, zero((N, N + 1)), zero((N, 2 * N + 1))],
            [P_inv, zero((N, N)), zero((N, N + 1)), zero((N, 2 * N + 1))],
            [zero((N + 1, 2 * N)), region.block_matrix() / lam, zero((N + 1, 2 * N + 1))],
            [zero((2 * N + 1, 2 * N)), zero((2 * N + 1, N + 1)),
             _pi_r(N, 1, c_r) / tau],
        ])
        psi_t = block([
            [np.eye(N), A_K.T, zero((N, N)), K.T, zero((N, N)), np.hstack([np.eye(N), K.T])],
            [zero((N, N)), Bt.T, np.eye(N), zero((N, 1)), zero((N, N)), zero((N, N + 1))],
            [zero((N, N)), np.eye(N), zero((N, N)), zero((N, 1)), np.eye(N), zero((N, N + 1))],
        ])
    else:
        from .uncertainty import multiplier

        Lam = np.atleast_2d(design.Lam)
        Kw = np.atleast_2d(design.Kw)
        B_Kw = Bt + B0 @ Kw
        Pi_D = multiplier(region, np.linalg.inv(Lam))
        nd = m * (N + 1)
        nr = 2 * N + m
        mid = block([
            [zero((N, N)), P_inv, zero((N, nd)), zero((N, nr))],
            [P_inv, zero((N, N)), zero((N, nd)), zero((N, nr))],
            [zero((nd, 2 * N)), Pi_D, zero((nd, nr))],
            [zero((nr, 2 * N)), zero((nr, nd)), _pi_r(N, m, c_r) / tau],
        ])
        psi_t = block([
            [np.eye(N), A_K.T, zero((N, m * N)), K.T, zero((N, N)),
             np.hstack([np.eye(N), K.T])],
            [zero((m * N, N)), B_Kw.T, np.eye(m * N), Kw.T, zero((m * N, N)),
             np.hstack([zero((m * N, N)), Kw.T])],
            [zero((N, N)), np.eye(N), zero((N, m * N)), zero((N, m)), np.eye(N),
             zero((N, N + m))],
        ])
    G = -sym(psi_t @ mid @ psi_t.T)
    # definiteness is congruence-invariant; Jacobi equilibration keeps the
    # decision out of roundoff when P is badly spread
    d = np.sqrt(np.abs(np.diag(G)))
    d[d == 0.0] = 1.0
    G_eq = G / d[:, None] / d[None, :]
    return G, float(np.linalg.eigvalsh(sym(G_eq))[0])


def _pi_r(N, m, c_r):
    """Static multiplier encoding the proportional remainder bound."""
    return block([
        [-np.eye(N), np.zeros((N, N + m))],
        [np.zeros((N + m, N)), 2.0 * c_r ** 2 * np.eye(N + m)],
    ])


def closed_loop_form(surrogate, design, z, delta_phi, eps_vec):
    """Dissipation quadratic form 2 z^T inv(P) (A_K z + B_Kw Delta mu + eps).

    ``delta_phi`` realizes the structured uncertainty Delta = I_m kron
    delta_phi, and the input is the uncertainty-consistent feedback
    mu = inv(I - Kw Delta) K z (for linear designs simply K z, and for
    delta_phi equal to the reduced lift this is the closed-loop input).
    Negativity over the certified region, all admissible realizations, and
    all remainder vectors within the proportional bound is what the solved
    strict inequality guarantees.
    """
    N, m = surrogate.N, surrogate.m
    z = np.asarray(z, dtype=float).reshape(N)
    delta_phi = np.asarray(delta_phi, dtype=float).reshape(N)
    eps_vec = np.asarray(eps_vec, dtype=float).reshape(N)
    P_inv = sym(np.linalg.inv(design.P))
    K = np.atleast_2d(design.K)
    Kw = np.atleast_2d(design.Kw) if getattr(design, "Kw", None) is not None \
        else np.zeros((m, N * m))
    A_K = surrogate.A + surrogate.B0 @ K
    B_Kw = surrogate.B_tilde + surrogate.B0 @ Kw
    Delta = np.kron(np.eye(m), delta_phi.reshape(N, 1))
    mu = np.linalg.solve(np.eye(m) - Kw @ Delta, K @ z)
    rhs = A_K @ z + B_Kw @ (Delta @ mu) + eps_vec
    return float(2.0 * z @ P_inv @ rhs)

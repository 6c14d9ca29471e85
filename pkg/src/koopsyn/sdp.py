"""Conic lowering of synthesis problems and pluggable SDP solving.

The lowering scalarizes all decision variables (symmetric matrices via the
upper-triangle/sqrt(2) convention) and emits one PSD block per constraint
with the required margin folded into the constant term.  Two backends
satisfy the same contract: the bundled dense interior-point method (no
external dependency) and an adapter to CVXOPT when it is installed.  Every
feasible answer is re-checked against the original affine expressions by an
eigenvalue verifier that does not share code with the solvers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import ipm, lmi


class InfeasibleError(RuntimeError):
    """Raised by pipeline steps when a design problem has no solution."""


@dataclass(frozen=True)
class ConicProgram:
    """min c^T z subject to per-block F0 + sum_i z_i Fi >= 0."""

    c: np.ndarray
    blocks: tuple            # (name, F0, Fi, margin); F0 already margin-shifted
    varmap: tuple            # (name, kind, shape, offset, ncomp)
    nvars: int

    def split(self, z):
        """Devectorize a solution vector into an assignment dict."""
        from .lmi import VariableSpec

        out = {}
        for name, kind, shape, off, ncomp in self.varmap:
            v = VariableSpec(name, kind, shape)
            out[name] = v.from_components(np.asarray(z[off:off + ncomp]))
        return out


def lower(problem):
    """Scalarize a SynthesisProblem into a ConicProgram.

    The variable mapping is bijective; constraint count and order are
    preserved.
    """
    varmap = []
    off = 0
    for v in problem.variables:
        varmap.append((v.name, v.kind, v.shape, off, v.ncomp))
        off += v.ncomp
    nvars = off
    blocks = []
    for con in problem.constraints:
        dim = con.expr.dim
        F0 = con.expr.constant - con.margin * np.eye(dim)
        Fi = np.zeros((nvars, dim, dim))
        for name, kind, shape, o, ncomp in varmap:
            if name in con.expr.coeffs:
                Fi[o:o + ncomp] = con.expr.coeffs[name]
        blocks.append((con.name, F0, Fi, con.margin))
    c = np.zeros(nvars)
    if problem.objective is not None:
        sense, vname = problem.objective
        o = next(o for (name, _, _, o, _) in varmap if name == vname)
        c[o] = -1.0 if sense == "maximize" else 1.0
    return ConicProgram(c=c, blocks=tuple(blocks), varmap=tuple(varmap),
                        nvars=nvars)


@dataclass(frozen=True)
class SolverOptions:
    backend: str = "ipm"          # "ipm" | "cvxopt"
    tol: float = 1e-8
    max_iters: int = 200
    t_cap: float = 1.0
    step_frac: float = 0.98
    verbose: bool = False


@dataclass
class SolveReport:
    status: str                   # feasible | infeasible_certificate |
    #                               numerical_failure | iteration_limit
    assignment: dict
    z: np.ndarray
    block_min_eigs: dict
    iterations: int
    wall_time: float
    diagnostics: dict = field(default_factory=dict)


def _wrap_feasibility(program, t_cap):
    """Augment with a margin variable t: maximize t s.t. F(z) - t I >= 0 and
    t <= t_cap.  Strictly feasible for any z with t small enough, so the
    phase-I problem is always solvable; t* > 0 certifies feasibility and a
    converged t* < 0 certifies infeasibility."""
    p = program.nvars
    blocks = []
    for name, F0, Fi, margin in program.blocks:
        dim = F0.shape[0]
        Fi2 = np.concatenate([Fi, -np.eye(dim)[None]], axis=0)
        blocks.append((name, F0, Fi2, margin))
    cap = (
        "_t_cap",
        np.array([[float(t_cap)]]),
        np.concatenate([np.zeros((p, 1, 1)), -np.ones((1, 1, 1))], axis=0),
        0.0,
    )
    c = np.concatenate([np.zeros(p), [-1.0]])
    return ConicProgram(c=c, blocks=tuple(blocks) + (cap,),
                        varmap=program.varmap, nvars=p + 1)


def _solve_ipm(program, options):
    res = ipm.solve_sdp(program.c,
                        [(F0, Fi) for (_, F0, Fi, _) in program.blocks],
                        tol=options.tol, max_iters=options.max_iters,
                        step_frac=options.step_frac, verbose=options.verbose)
    info = {
        "solver_status": res.status,
        "primal_infeas": res.primal_infeas,
        "dual_infeas": res.dual_infeas,
        "rel_gap": res.rel_gap,
        "objective": res.dual_obj,
    }
    return res.status, res.z, res.iterations, info


def _solve_cvxopt(program, options):
    try:
        from cvxopt import matrix, solvers
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError("cvxopt backend requested but cvxopt is not installed") from exc
    p = program.nvars
    Gs, hs = [], []
    for _, F0, Fi, _ in program.blocks:
        dim = F0.shape[0]
        G = np.empty((dim * dim, p))
        for i in range(p):
            G[:, i] = (-Fi[i]).ravel(order="F")
        Gs.append(matrix(G))
        hs.append(matrix(F0))
    opts = {"show_progress": options.verbose, "maxiters": options.max_iters,
            "abstol": options.tol, "reltol": options.tol,
            "feastol": options.tol}
    sol = solvers.sdp(matrix(program.c), Gs=Gs, hs=hs, options=opts)
    z = np.array(sol["x"]).ravel() if sol["x"] is not None else np.zeros(p)
    smap = {"optimal": "optimal", "unknown": "iteration_limit"}
    status = smap.get(sol["status"], "numerical_failure")
    info = {"solver_status": sol["status"], "objective": float(program.c @ z)}
    return status, z, int(sol.get("iterations", 0) or 0), info


_BACKENDS = {"ipm": _solve_ipm, "cvxopt": _solve_cvxopt}


def solve(program, options=None):
    """Solve a ConicProgram through the selected backend.

    A zero objective is treated as a feasibility question and answered via
    the capped max-margin phase-I wrap; never raises on solver divergence.
    """
    options = options or SolverOptions()
    backend = _BACKENDS[options.backend]
    t0 = time.monotonic()
    feasibility = not np.any(program.c)
    solved = _wrap_feasibility(program, options.t_cap) if feasibility else program
    raw_status, z_full, iters, info = backend(solved, options)
    wall = time.monotonic() - t0
    if feasibility:
        t_star = z_full[-1]
        z = z_full[:-1]
        info["t_star"] = float(t_star)
        if raw_status == "optimal":
            status = "feasible" if t_star > 0.0 else "infeasible_certificate"
        else:
            status = raw_status if raw_status != "optimal" else "feasible"
    else:
        z = z_full
        status = "feasible" if raw_status == "optimal" else raw_status
    mineigs = {}
    for name, F0, Fi, margin in program.blocks:
        val = F0 + np.tensordot(z, Fi, axes=1) + margin * np.eye(F0.shape[0])
        mineigs[name] = float(np.linalg.eigvalsh(0.5 * (val + val.T))[0])
    return SolveReport(status=status, assignment=program.split(z), z=z,
                       block_min_eigs=mineigs, iterations=iters,
                       wall_time=wall, diagnostics=info)


def solve_problem(problem, options=None):
    """Convenience wrapper: lower, solve, return (assignment, report)."""
    report = solve(lower(problem), options)
    return report.assignment, report


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    margins: dict          # name -> (min eigenvalue, required margin)
    slack: float = 1e-7

    def worst(self):
        return min(eig - req for eig, req in self.margins.values())


def verify(problem, assignment, slack=1e-7):
    """Re-check every constraint of the original problem at an assignment.

    Uses the affine-expression evaluator and a dense eigenvalue solve, so it
    is independent of any solver internals.  A constraint passes when its
    minimum eigenvalue is at least (required margin - slack).
    """
    margins = {}
    ok = True
    for con in problem.constraints:
        _, lam_min = lmi.evaluate(con, assignment, problem.variables)
        margins[con.name] = (lam_min, con.margin)
        if lam_min < con.margin - slack:
            ok = False
    return VerificationReport(ok=ok, margins=margins, slack=slack)


def export_sparse(program):
    """Plain-text triplet dump: one line per nonzero, per PSD block,
    ``block <k> <var index | -1 for constant> <row> <col> <value>`` with the
    margin already folded into the constant."""
    lines = [f"nvars {program.nvars}", f"nblocks {len(program.blocks)}"]
    for k, (name, F0, Fi, _) in enumerate(program.blocks):
        lines.append(f"# block {k} name {name} dim {F0.shape[0]}")
        for (r, cidx) in zip(*np.nonzero(F0)):
            lines.append(f"block {k} -1 {r} {cidx} {float(F0[r, cidx])!r}")
        for i in range(program.nvars):
            for (r, cidx) in zip(*np.nonzero(Fi[i])):
                lines.append(f"block {k} {i} {r} {cidx} {float(Fi[i][r, cidx])!r}")
    obj = " ".join(repr(float(v)) for v in program.c)
    lines.append(f"objective {obj}")
    return "\n".join(lines) + "\n"

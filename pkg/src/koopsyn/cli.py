"""Pipeline driver: collect -> fit -> d0 -> design -> verify, plus figure
data reproduction.

A single JSON config drives every stage; each stage reads the previous
stage's artifacts from the output directory and writes a manifest with the
input hashes and the effective config.  Exit codes: 0 success, 2 infeasible
design, 3 verification failure, 4 bad input.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds, controller, edmd, lmi, plants, sdp, uncertainty, verify
from .lifting import make_lifting, poly, sine

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VERIFICATION = 3
EXIT_BAD_INPUT = 4


# -- configuration ----------------------------------------------------------


def example_config(name):
    """Built-in end-to-end configurations for the benchmark plants."""
    if name == "cooked_up":
        return {
            "plant": {"id": "cooked_up", "params": {"rho": -2.0, "lam": 1.0}},
            "lifting": {"extras": [
                {"kind": "poly", "params": {"terms": [[1.0, [0, 1]], [-0.2, [2, 0]]]}},
            ]},
            "sampling": {"d": 5000, "seed": 7, "noise_bound": 0.0},
            "error_bound": {"c_r": 0.1, "delta": 0.05},
            "region": {"Qz": (-np.eye(3)).tolist(), "Sz": [0.0, 0.0, 0.0], "Rz": 500.0},
            "theorem": 1,
            "solver": {"backend": "ipm", "tol": 1e-8, "max_iters": 200,
                       "epsilon": 1e-6, "objective": "maximize_roa"},
            "verify": {"n_starts": 20, "seed": 123, "horizon": 50.0,
                       "rtol": 1e-8, "lqr": False},
            "output_dir": "out_cooked_up",
        }
    if name == "cooked_up_xy":
        cfg = example_config("cooked_up")
        cfg["plant"]["id"] = "cooked_up_xy"
        cfg["lifting"]["extras"].append(
            {"kind": "poly", "params": {"terms": [[1.0, [1, 1]]]}})
        cfg["sampling"]["noise_bound"] = 0.05
        cfg["error_bound"]["c_r"] = 0.01
        cfg["region"] = {"Qz": (-np.eye(4)).tolist(), "Sz": [0.0] * 4, "Rz": 1000.0}
        cfg["theorem"] = 2
        cfg["output_dir"] = "out_cooked_up_xy"
        return cfg
    if name == "pendulum":
        return {
            "plant": {"id": "pendulum", "params": {}},
            "lifting": {"extras": [{"kind": "sine", "params": {"index": 0}}]},
            "sampling": {"d": 15000, "seed": 7, "noise_bound": 0.0},
            "error_bound": {"c_r": 0.02, "delta": 0.05},
            "region": {"Qz": (-np.eye(3)).tolist(), "Sz": [0.0] * 3, "Rz": 12.0},
            "theorem": 1,
            "solver": {"backend": "ipm", "tol": 1e-8, "max_iters": 200,
                       "epsilon": 1e-6, "objective": "maximize_roa"},
            "verify": {"n_starts": 20, "seed": 123, "horizon": 50.0,
                       "rtol": 1e-8, "lqr": True,
                       "lqr_weights": [0.01, 0.1, 1.0, 10.0]},
            "output_dir": "out_pendulum",
        }
    if name == "pendulum_shaped":
        cfg = example_config("pendulum")
        cfg["region"] = {"heuristic": True, "rz": 5.0, "rz_step1": 12.0,
                         "theorem": 2}
        cfg["output_dir"] = "out_pendulum_shaped"
        return cfg
    raise ValueError(f"unknown example config '{name}'")


def validate_config(cfg):
    eb = cfg["error_bound"]
    if eb["c_r"] <= 0:
        raise ValueError("c_r must be positive")
    if not (0.0 < eb["delta"] < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if cfg["sampling"]["d"] < 1:
        raise ValueError("need at least one sample per batch")
    if cfg.get("theorem", 1) not in (1, 2):
        raise ValueError("theorem must be 1 or 2")
    return cfg


def load_config(path=None, example=None, overrides=None):
    if (path is None) == (example is None):
        raise ValueError("give exactly one of --config or --example")
    if path is not None:
        with open(path) as fh:
            cfg = json.load(fh)
    else:
        cfg = example_config(example)
    for key, value in (overrides or {}).items():
        section = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            section = section.setdefault(p, {})
        section[leaf] = value
    return validate_config(cfg)


def _outdir(cfg):
    out = Path(cfg["output_dir"])
    root = os.environ.get("KOOPSYN_OUT")
    if root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plant(cfg):
    spec = cfg["plant"]
    return plants.make_example(spec["id"], **spec.get("params", {}))


def _lifting(cfg, n):
    extras = []
    for item in cfg["lifting"]["extras"]:
        kind = item["kind"]
        params = item.get("params", {})
        if kind == "poly":
            extras.append(poly(params["terms"]))
        elif kind == "sine":
            extras.append(sine(params["index"]))
        elif kind in ("coordinate", "constant"):
            raise ValueError("constant and coordinates are implied, not extras")
        else:
            raise ValueError(f"unsupported extra observable kind '{kind}'")
    return make_lifting(n, extras)


def _sha256(path):
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _write_manifest(outdir, command, cfg, inputs, outputs):
    doc = {
        "command": command,
        "config": cfg,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(str(o) for o in outputs),
    }
    path = outdir / f"manifest_{command}.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _solver_options(cfg):
    s = cfg.get("solver", {})
    return sdp.SolverOptions(backend=s.get("backend", "ipm"),
                             tol=s.get("tol", 1e-8),
                             max_iters=s.get("max_iters", 200),
                             t_cap=s.get("t_cap", 1.0))


# -- subcommands ------------------------------------------------------------


def cmd_collect(cfg):
    outdir = _outdir(cfg)
    plant = _plant(cfg)
    samp = cfg["sampling"]
    samples = plants.collect_samples(plant, samp["d"], samp["seed"],
                                     noise_bound=samp.get("noise_bound", 0.0))
    meta = plants.save_samples(samples, outdir, plant=plant)
    outputs = [outdir / f for f in meta["files"]] + [outdir / "samples_meta.json"]
    _write_manifest(outdir, "collect", cfg, [], outputs)
    print(f"collect: wrote {len(meta['files'])} batches of {samp['d']} samples to {outdir}")
    return EXIT_OK


def cmd_fit(cfg):
    outdir = _outdir(cfg)
    meta_path = outdir / "samples_meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no sample files in {outdir}; run collect first")
    samples = plants.load_samples(outdir)
    lifting = _lifting(cfg, samples.batches[0].states.shape[1])
    data = edmd.build_data_matrices(lifting, samples)
    eb = cfg["error_bound"]
    surrogate, report = edmd.fit(data, lifting=lifting, c_r=eb["c_r"],
                                 delta=eb["delta"])
    (outdir / "surrogate.json").write_text(surrogate.to_json() + "\n")
    with open(outdir / "fit_report.json", "w") as fh:
        json.dump({"batches": {str(k): v for k, v in report.batches.items()}},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")
    inputs = [meta_path] + [outdir / f for f in json.loads(meta_path.read_text())["files"]]
    _write_manifest(outdir, "fit", cfg, inputs,
                    [outdir / "surrogate.json", outdir / "fit_report.json"])
    worst = report.worst_relative_residual()
    print(f"fit: surrogate written (worst relative residual {worst:.3e})")
    return EXIT_OK


def cmd_d0(cfg):
    outdir = _outdir(cfg)
    plant = _plant(cfg)
    lifting = _lifting(cfg, plant.n)
    eb = cfg["error_bound"]
    qcfg = cfg.get("d0", {})
    quad = bounds.QuadratureSpec(**qcfg) if qcfg else bounds.QuadratureSpec()
    req = bounds.compute_d0(plant, lifting, eb["c_r"], eb["delta"], quad)
    (outdir / "d0_report.json").write_text(req.to_json() + "\n")
    _write_manifest(outdir, "d0", cfg, [], [outdir / "d0_report.json"])
    print(f"d0: {req.d0_float:.4e} (log10 = {req.log10_d0:.3f})")
    return EXIT_OK


def _resolve_region(cfg, surrogate, options, log_sink=None):
    rcfg = cfg["region"]
    if rcfg.get("heuristic"):
        region, log = uncertainty.procedure1_qz(
            surrogate, theorem=rcfg.get("theorem", cfg.get("theorem", 2)),
            rz=rcfg.get("rz", 1.0), rz_step1=rcfg.get("rz_step1"),
            epsilon=cfg.get("solver", {}).get("epsilon", 1e-6),
            solver_options=options)
        if log_sink is not None:
            log_sink["heuristic"] = {
                "P_hat": log.P_hat.tolist(),
                "Qz": log.Qz.tolist(),
                "rz_step1": log.rz_step1,
                "rz": log.rz,
                "trace_cap": log.trace_cap,
                "step1_constraints": list(log.step1_constraints),
            }
        return region
    return uncertainty.UncertaintyRegion(Qz=np.asarray(rcfg["Qz"], dtype=float),
                                         Sz=np.asarray(rcfg["Sz"], dtype=float),
                                         Rz=float(rcfg["Rz"]))


def _build_problem(surrogate, region, cfg, with_objective=True):
    theorem = cfg.get("theorem", 1)
    epsilon = cfg.get("solver", {}).get("epsilon", 1e-6)
    build = lmi.build_theorem1 if theorem == 1 else lmi.build_theorem2
    problem = build(surrogate, region, epsilon=epsilon)
    if with_objective and \
            cfg.get("solver", {}).get("objective", "feasibility") == "maximize_roa":
        problem = lmi.add_roa_objective(problem)
    return problem, theorem


def cmd_design(cfg):
    outdir = _outdir(cfg)
    surrogate_path = outdir / "surrogate.json"
    if not surrogate_path.exists():
        raise FileNotFoundError(f"no surrogate in {outdir}; run fit first")
    surrogate = edmd.Surrogate.from_json(surrogate_path.read_text())
    options = _solver_options(cfg)
    log = {}
    region = _resolve_region(cfg, surrogate, options, log_sink=log)
    feas_problem, theorem = _build_problem(surrogate, region, cfg,
                                           with_objective=False)
    assignment, report = sdp.solve_problem(feas_problem, options)
    if report.status != "feasible":
        diagnosis = min(report.block_min_eigs.items(), key=lambda kv: kv[1])
        print(f"design: INFEASIBLE (status {report.status}); most violated "
              f"constraint '{diagnosis[0]}' with margin {diagnosis[1]:.3e}",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    problem, _ = _build_problem(surrogate, region, cfg)
    if problem.objective is not None:
        assignment2, report2 = sdp.solve_problem(problem, options)
        if report2.status == "feasible":
            assignment, report = assignment2, report2
        else:
            problem = feas_problem

    check = sdp.verify(problem, assignment)
    if not check.ok:
        print("design: solver reported feasible but the independent verifier "
              f"rejected the solution (worst slack {check.worst():.3e})",
              file=sys.stderr)
        return EXIT_VERIFICATION
    design = controller.DesignResult.from_assignment(
        theorem, assignment,
        margins={k: v for k, v in check.margins.items()})
    (outdir / "design.json").write_text(design.to_json() + "\n")
    with open(outdir / "region.json", "w") as fh:
        json.dump(region.to_json_dict(), fh, sort_keys=True)
        fh.write("\n")
    lifting = surrogate.lifting
    boundary = controller.roa_boundary_2d(design, lifting,
                                          resolution=cfg.get("resolution", 360))
    controller.export_boundary_dat(boundary, outdir / "roa.dat")
    log.update({
        "status": report.status,
        "iterations": report.iterations,
        "constraint_manifest": problem.manifest(),
        "verification": {k: list(v) for k, v in check.margins.items()},
        "roa_closed": boundary.closed,
    })
    with open(outdir / "design_log.json", "w") as fh:
        json.dump(log, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_manifest(outdir, "design", cfg, [surrogate_path],
                    [outdir / "design.json", outdir / "region.json",
                     outdir / "roa.dat", outdir / "design_log.json"])
    print(f"design: feasible ({report.iterations} iterations); "
          f"K = {np.array2string(design.K, precision=4)}")
    return EXIT_OK


def _traj_dat(path, traj):
    verify.export_trajectory_dat(traj, path)


def cmd_verify(cfg):
    outdir = _outdir(cfg)
    for req in ("design.json", "surrogate.json"):
        if not (outdir / req).exists():
            raise FileNotFoundError(f"missing {req} in {outdir}; run design first")
    surrogate = edmd.Surrogate.from_json((outdir / "surrogate.json").read_text())
    design = controller.DesignResult.from_json((outdir / "design.json").read_text())
    lifting = surrogate.lifting
    plant = _plant(cfg)
    vcfg = cfg.get("verify", {})
    n_starts = int(vcfg.get("n_starts", 20))
    horizon = float(vcfg.get("horizon", 50.0))
    rtol = float(vcfg.get("rtol", 1e-8))
    rng = np.random.default_rng(int(vcfg.get("seed", 123)))
    boundary = controller.roa_boundary_2d(design, lifting, resolution=180)
    rmax = float(np.max(boundary.radii))
    starts, tries = [], 0
    while len(starts) < n_starts and tries < 100000:
        x = rng.uniform(-rmax, rmax, size=plant.n)
        tries += 1
        if controller.roa_membership(design, lifting, x)[1] <= 0.99:
            starts.append(x)
    results = []
    outputs = []
    for i, x0 in enumerate(starts):
        traj = verify.simulate(plant, design, lifting, x0, horizon=horizon,
                               rtol=rtol, atol=rtol)
        audit = verify.lyapunov_audit(traj)
        path = outdir / f"traj_{i:03d}.dat"
        _traj_dat(path, traj)
        outputs.append(path)
        results.append({
            "x0": np.asarray(x0).tolist(),
            "reason": traj.reason,
            "final_norm": float(np.linalg.norm(traj.final_state)),
            "V_max": float(np.nanmax(traj.V)),
            "audit_ok": audit.ok,
            "max_V_increase": audit.max_increase,
        })
    report = {"trajectories": results,
              "n_converged": sum(r["reason"] == "converged" for r in results)}
    if vcfg.get("lqr"):
        weights = vcfg.get("lqr_weights", [0.01, 0.1, 1.0, 10.0])
        lqr_results = []
        for w in weights:
            K_lqr, _, info = verify.lqr_baseline(surrogate, R=w * np.eye(surrogate.m))
            ufn = verify.lqr_feedback(surrogate, lifting, K_lqr)
            entry = {"R": w, "K": K_lqr.ravel().tolist(),
                     "care_relative_residual": info["relative_residual"],
                     "trajectories": []}
            for x0 in starts[: min(8, len(starts))]:
                traj = verify.simulate_feedback(plant, ufn, x0, horizon=horizon,
                                                rtol=rtol, atol=rtol)
                entry["trajectories"].append({
                    "x0": np.asarray(x0).tolist(), "reason": traj.reason,
                    "final_norm": float(np.linalg.norm(traj.final_state))})
            entry["n_failed"] = sum(t["final_norm"] > 1e-6
                                    for t in entry["trajectories"])
            lqr_results.append(entry)
        report["lqr_grid"] = lqr_results
    with open(outdir / "verify_report.json", "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    outputs.append(outdir / "verify_report.json")
    _write_manifest(outdir, "verify", cfg,
                    [outdir / "design.json", outdir / "surrogate.json"], outputs)
    print(f"verify: {report['n_converged']}/{len(results)} converged")
    return EXIT_OK


# -- figure reproduction ----------------------------------------------------


def _pipeline(cfg, region_override=None, theorem=None):
    """Collect + fit + design in memory; returns the pieces figures need."""
    cfg = copy.deepcopy(cfg)
    if theorem is not None:
        cfg["theorem"] = theorem
    plant = _plant(cfg)
    lifting = _lifting(cfg, plant.n)
    samp = cfg["sampling"]
    samples = plants.collect_samples(plant, samp["d"], samp["seed"],
                                     noise_bound=samp.get("noise_bound", 0.0))
    eb = cfg["error_bound"]
    surrogate, _ = edmd.fit(edmd.build_data_matrices(lifting, samples),
                            lifting=lifting, c_r=eb["c_r"], delta=eb["delta"])
    options = _solver_options(cfg)
    region = region_override or _resolve_region(cfg, surrogate, options)
    problem, thm = _build_problem(surrogate, region, cfg)
    assignment, report = sdp.solve_problem(problem, options)
    if report.status != "feasible":
        raise sdp.InfeasibleError(f"figure pipeline infeasible: {report.status}")
    check = sdp.verify(problem, assignment)
    if not check.ok:
        raise RuntimeError("design verification failed in figure pipeline")
    design = controller.DesignResult.from_assignment(thm, assignment,
                                                     margins=check.margins)
    return plant, lifting, surrogate, region, design


def _fig1(outdir):
    xs = np.linspace(-5.0, 5.0, 401)
    parabola = np.column_stack([xs, xs * xs])
    th = np.linspace(0.0, 2.0 * np.pi, 361)
    circle = np.sqrt(650.0) * np.column_stack([np.cos(th), np.sin(th)])
    ellipse = np.column_stack([np.sqrt(50.0) * np.cos(th),
                               np.sqrt(1250.0) * np.sin(th)])
    files = []
    for name, pts in (("parabola", parabola), ("circle", circle),
                      ("ellipse", ellipse)):
        path = outdir / f"fig1_{name}.dat"
        np.savetxt(path, pts, fmt="%.17g")
        files.append(path)
    return files


def _save_design(outdir, stem, surrogate, region, design, boundary,
                 region_boundary=None):
    files = []
    p = outdir / f"{stem}_roa.dat"
    controller.export_boundary_dat(boundary, p)
    files.append(p)
    p = outdir / f"{stem}_design.json"
    p.write_text(design.to_json() + "\n")
    files.append(p)
    p = outdir / f"{stem}_region.json"
    with open(p, "w") as fh:
        json.dump(region.to_json_dict(), fh, sort_keys=True)
        fh.write("\n")
    files.append(p)
    if region_boundary is not None:
        p = outdir / f"{stem}_region.dat"
        controller.export_boundary_dat(region_boundary, p)
        files.append(p)
    return files


def cmd_reproduce(figure, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    if figure == "fig1":
        files += _fig1(outdir)
    elif figure == "fig2":
        cfg = example_config("cooked_up")
        plant, lifting, surrogate, region, design = _pipeline(cfg)
        boundary = controller.roa_boundary_2d(design, lifting, resolution=360)
        (outdir / "fig2_surrogate.json").write_text(surrogate.to_json() + "\n")
        files.append(outdir / "fig2_surrogate.json")
        files += _save_design(outdir, "fig2", surrogate, region, design, boundary)
    elif figure == "fig3":
        cfg = example_config("cooked_up_xy")
        tuned = uncertainty.UncertaintyRegion(
            Qz=-np.diag([2.5, 2.5, 1.25, 0.005]), Sz=np.zeros(4), Rz=1000.0)
        for stem, override in (("fig3_ball", None), ("fig3_tuned", tuned)):
            plant, lifting, surrogate, region, design = _pipeline(
                cfg, region_override=override)
            boundary = controller.roa_boundary_2d(design, lifting, resolution=360)
            rb = controller.region_boundary_2d(region, lifting, resolution=360)
            files += _save_design(outdir, stem, surrogate, region, design,
                                  boundary, region_boundary=rb)
        (outdir / "fig3_surrogate.json").write_text(surrogate.to_json() + "\n")
        files.append(outdir / "fig3_surrogate.json")
    elif figure in ("fig4", "fig5"):
        cfg = example_config("pendulum" if figure == "fig4" else "pendulum_shaped")
        designs = {}
        for thm in (1, 2):
            plant, lifting, surrogate, region, design = _pipeline(cfg, theorem=thm)
            designs[thm] = design
            boundary = controller.roa_boundary_2d(design, lifting, resolution=360)
            files += _save_design(outdir, f"{figure}_thm{thm}", surrogate, region,
                                  design, boundary)
        rb = controller.region_boundary_2d(region, lifting, resolution=360)
        controller.export_boundary_dat(rb, outdir / f"{figure}_region.dat")
        files.append(outdir / f"{figure}_region.dat")
        (outdir / f"{figure}_surrogate.json").write_text(surrogate.to_json() + "\n")
        files.append(outdir / f"{figure}_surrogate.json")
        if figure == "fig5":
            files += _fig5_trajectories(outdir, plant, lifting, surrogate,
                                        designs, cfg)
    else:
        raise ValueError(f"unknown figure id '{figure}' (use fig1..fig5)")
    manifest = {"figure": figure, "files": sorted(str(f.name) for f in files)}
    if figure != "fig1":
        # certified sets can reach far beyond the sampling box; record the
        # box so plots can show both
        plant_id = {"fig2": "cooked_up", "fig3": "cooked_up_xy",
                    "fig4": "pendulum", "fig5": "pendulum"}[figure]
        manifest["sampling_box"] = plants.make_example(plant_id).state_box.tolist()
    with open(outdir / f"{figure}_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"reproduce {figure}: wrote {len(files)} files to {outdir}")
    return EXIT_OK


def fig5_start_set(lifting, designs, fraction=0.95,
                   degrees=(45.0, 135.0, 225.0, 315.0)):
    """Documented start set for the closed-loop comparison: four polar
    directions at 95 percent of the smaller certified radius."""
    boundaries = {t: controller.roa_boundary_2d(d, lifting, resolution=360)
                  for t, d in designs.items()}
    starts = []
    for deg in degrees:
        th = np.deg2rad(deg)
        r = min(b.radii[np.argmin(np.abs(b.angles - th))]
                for b in boundaries.values())
        starts.append(fraction * r * np.array([np.cos(th), np.sin(th)]))
    return starts


def _fig5_trajectories(outdir, plant, lifting, surrogate, designs, cfg):
    files = []
    starts = fig5_start_set(lifting, designs)
    vcfg = cfg.get("verify", {})
    rtol = float(vcfg.get("rtol", 1e-8))
    horizon = float(vcfg.get("horizon", 50.0))
    for thm, design in designs.items():
        for i, x0 in enumerate(starts):
            traj = verify.simulate(plant, design, lifting, x0, horizon=horizon,
                                   rtol=rtol, atol=rtol)
            path = outdir / f"fig5_traj_thm{thm}_{i}.dat"
            _traj_dat(path, traj)
            files.append(path)
    weights = vcfg.get("lqr_weights", [0.01, 0.1, 1.0, 10.0])
    grid_report = []
    first_failing = None
    for w in weights:
        K_lqr, _, _ = verify.lqr_baseline(surrogate, R=w * np.eye(surrogate.m))
        ufn = verify.lqr_feedback(surrogate, lifting, K_lqr)
        entry = {"R": w, "K": K_lqr.ravel().tolist(), "results": []}
        trajs = []
        for x0 in starts:
            traj = verify.simulate_feedback(plant, ufn, x0, horizon=horizon,
                                            rtol=rtol, atol=rtol)
            trajs.append(traj)
            entry["results"].append({"x0": np.asarray(x0).tolist(),
                                     "reason": traj.reason,
                                     "final_norm": float(np.linalg.norm(traj.final_state))})
        entry["n_failed"] = sum(r["final_norm"] > 1e-6 for r in entry["results"])
        if entry["n_failed"] and first_failing is None:
            first_failing = (w, trajs)
        grid_report.append(entry)
    if first_failing is not None:
        for i, traj in enumerate(first_failing[1]):
            path = outdir / f"fig5_traj_lqr_{i}.dat"
            _traj_dat(path, traj)
            files.append(path)
    with open(outdir / "fig5_lqr_report.json", "w") as fh:
        json.dump({"weight_grid": grid_report,
                   "starts": [np.asarray(s).tolist() for s in starts],
                   "plotted_weight": None if first_failing is None
                   else first_failing[0]}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    files.append(outdir / "fig5_lqr_report.json")
    return files


# -- entry point ------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="path to a JSON run configuration")
    sub.add_argument("--example", help="built-in config name "
                     "(cooked_up, cooked_up_xy, pendulum, pendulum_shaped)")
    sub.add_argument("--out", help="override output_dir")
    sub.add_argument("--d", type=int, help="samples per batch")
    sub.add_argument("--seed", type=int, help="sampling seed")
    sub.add_argument("--noise-bound", type=float, help="derivative noise bound")
    sub.add_argument("--c-r", type=float, help="remainder bound")
    sub.add_argument("--delta", type=float, help="probabilistic tolerance")
    sub.add_argument("--rz", type=float, help="region radius parameter")
    sub.add_argument("--theorem", type=int, choices=(1, 2))
    sub.add_argument("--backend", choices=("ipm", "cvxopt"))
    sub.add_argument("--objective", choices=("feasibility", "maximize_roa"))


def _overrides(args):
    pairs = {
        "out": "output_dir", "d": "sampling.d", "seed": "sampling.seed",
        "noise_bound": "sampling.noise_bound", "c_r": "error_bound.c_r",
        "delta": "error_bound.delta", "rz": "region.Rz", "theorem": "theorem",
        "backend": "solver.backend", "objective": "solver.objective",
    }
    out = {}
    for attr, key in pairs.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = val
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="koopsyn",
        description="Bilinear Koopman surrogates with certified feedback synthesis")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("collect", "fit", "d0", "design", "verify"):
        _add_common(subs.add_parser(name))
    rep = subs.add_parser("reproduce")
    rep.add_argument("figure", help="fig1 | fig2 | fig3 | fig4 | fig5")
    rep.add_argument("--out", default="figures")
    exa = subs.add_parser("example-config")
    exa.add_argument("name")
    args = parser.parse_args(argv)
    try:
        if args.command == "reproduce":
            return cmd_reproduce(args.figure, args.out)
        if args.command == "example-config":
            print(json.dumps(example_config(args.name), indent=1, sort_keys=True))
            return EXIT_OK
        cfg = load_config(args.config, args.example, _overrides(args))
        handler = {"collect": cmd_collect, "fit": cmd_fit, "d0": cmd_d0,
                   "design": cmd_design, "verify": cmd_verify}[args.command]
        return handler(cfg)
    except sdp.InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())

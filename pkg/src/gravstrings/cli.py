"""Command line entry point: ``solve topo|nontopo|sphere --config FILE``.

Exit codes:
  0  success, every check passed
  1  usage or configuration error (including regime and parameter errors)
  2  a verification check failed; the failing checks are named in manifest.json
  3  numerical failure (integration, quadrature, linear solve, bracketing)
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import nontopological, observables, surface, topological
from .config import RunConfig, parse_config, parse_regime, serialize_config
from .errors import CheckFailure, ParameterError, SolverError
from .mesh import build_icosphere, snap_points
from .model import Regime, alpha_threshold

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "GRAVSTRINGS_OUTPUT_DIR"
CSV_COLUMNS = ("t", "r", "v", "v_prime", "e_eta", "H", "K_eta", "F12")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _check(name, ok, value=None, limit=None):
    return {"name": name, "passed": bool(ok), "value": value, "limit": limit}


def write_csv(path: Path, columns: dict) -> None:
    """Integer columns as integers, everything else with round-trip precision."""
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    fmt = [(lambda x: str(int(x))) if np.issubdtype(c.dtype, np.integer) or c.dtype == bool
           else (lambda x: repr(float(x))) for c in cols]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(len(cols[0])):
            w.writerow([f(c[i]) for f, c in zip(fmt, cols)])


def write_plot(path: Path, x, y) -> None:
    with path.open("w") as fh:
        for a, b in zip(np.asarray(x, dtype=float), np.asarray(y, dtype=float)):
            fh.write(f"{float(a)!r} {float(b)!r}\n")


# ---------------------------------------------------------------------------
# regime runners; each returns (manifest body, checks)


def _planar_outputs(out: Path, profile, plots: bool):
    cols = profile.columns()
    write_csv(out / "trajectory.csv", {c: cols[c] for c in CSV_COLUMNS})
    if plots:
        for name in ("v", "e_eta", "H", "F12"):
            write_plot(out / f"{name}.dat", profile.r, profile.columns()[name])


def run_topological(cfg: RunConfig, out: Path):
    params = cfg.params(Regime.TOPOLOGICAL_PLANE)
    sol = topological.integrate_topological(
        params, cfg.get("t_min"), cfg.get("t_max"), cfg.get("step_tol"), n_out=cfg.get("n_out"))
    mu = sol.asymptotics["decay_rate_limit"]
    exponent, r2 = topological.fit_decay_exponent(sol)
    profile = observables.planar_observables(sol, cfg.get("n_out"),
                                             einstein_t_min=cfg.get("einstein_t_min"))
    _planar_outputs(out, profile, cfg.get("plots"))
    tot = profile.totals
    v_end = float(sol.v[-1])
    checks = [
        _check("first_integral_residual", sol.diagnostics["first_integral_residual"] < 1e-9,
               sol.diagnostics["first_integral_residual"], 1e-9),
        _check("v_end_in_range", -1e-6 < v_end < 0, v_end, [-1e-6, 0.0]),
        _check("decay_exponent", 0.95 * mu <= exponent <= mu * (1 + 1e-9) and r2 > 0.999,
               exponent, [0.95 * mu, mu]),
        _check("flux_quantized", abs(tot["flux"] / (2 * math.pi * params.N) - 1) < 1e-2,
               tot["flux"], 2 * math.pi * params.N),
        _check("energy_quantized", abs(tot["energy"] / (math.pi * params.N) - 1) < 1e-2,
               tot["energy"], math.pi * params.N),
        _check("einstein_residual", tot["einstein_residual_sup"] < 1e-4,
               tot["einstein_residual_sup"], 1e-4),
    ]
    body = {
        "beta": params.beta,
        "decay_exponent": exponent, "decay_fit_r2": r2, "decay_rate_limit": mu,
        "v_end": v_end,
        "diagnostics": {k: v for k, v in sol.diagnostics.items()
                        if not isinstance(v, np.ndarray)},
        "tolerances": sol.tolerances,
        "observables": tot,
    }
    return params, body, checks


def run_nontopological(cfg: RunConfig, out: Path, allow_unproven_alpha: bool = False):
    params = cfg.params(Regime.NONTOPOLOGICAL_PLANE)
    alpha = cfg.get("alpha")
    if alpha is None:
        raise ParameterError("alpha is required for the non-topological regime")
    rec, sol = nontopological.solve_nontopological(
        alpha, params, cfg.get("shoot_tol"), rtol=cfg.get("rtol"), atol=cfg.get("atol"),
        allow_unproven_alpha=allow_unproven_alpha, n_out=cfg.get("n_out"))
    k = rec.k
    residual = nontopological.energy_identity_residual(sol, params, k)
    profile = observables.planar_observables(sol, cfg.get("n_out"),
                                             einstein_t_min=cfg.get("einstein_t_min"))
    _planar_outputs(out, profile, cfg.get("plots"))
    tot = profile.totals
    flux_expected = math.pi * (k + 2 * params.N)
    bound = nontopological.slope_bound(params)
    margin = nontopological.energy_inequality_margin(k, params)
    checks = [
        _check("shooting_converged", abs(rec.eta - 2 * params.N) < cfg.get("shoot_tol"),
               abs(rec.eta - 2 * params.N), cfg.get("shoot_tol")),
        _check("energy_identity", residual < 1e-6, residual, 1e-6),
        _check("flux_quantized", abs(tot["flux"] / flux_expected - 1) < 1e-2,
               tot["flux"], flux_expected),
        _check("energy_half_flux", abs(tot["energy"] / (0.5 * tot["flux"]) - 1) < 1e-2,
               tot["energy"], 0.5 * tot["flux"]),
        _check("slope_bound", k > bound, k, bound),
        _check("energy_inequality", margin > 0, margin, 0.0),
    ]
    body = {
        "beta": params.beta, "alpha": alpha, "alpha_threshold": alpha_threshold(params.a),
        "shooting": rec.to_dict(), "k": k, "slope_bound": bound,
        "energy_inequality_margin": margin, "energy_identity_residual": residual,
        "tail_bound": sol.diagnostics["tail_bound"],
        "observables": tot,
    }
    return params, body, checks


def run_sphere(cfg: RunConfig, out: Path):
    params = cfg.params(Regime.COMPACT_SPHERE)
    surface.check_sphere_regime(params)
    mesh = build_icosphere(cfg.get("level"))
    points, mult = cfg.points()
    if points is None:
        points = surface.default_points(params.N)
    sol = surface.solve_sphere(params, mesh=mesh, points=points, multiplicity=mult,
                               sigma=cfg.get("sigma"), schedule=cfg.delta_schedule(),
                               tol=cfg.get("iter_tol"), margin=cfg.get("margin"))
    obs = observables.sphere_observables(sol)
    tot = obs["totals"]
    m = mesh.vertices
    with (out / "vertices.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y", "z", "area"])
        for i in range(mesh.n_vertices):
            w.writerow([i] + [repr(float(x)) for x in m[i]] + [repr(float(mesh.areas[i]))])
    with (out / "faces.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "i", "j", "k"])
        for i, f in enumerate(mesh.faces):
            w.writerow([i, *map(int, f)])
    write_csv(out / "fields.csv", {
        "index": np.arange(mesh.n_vertices), "singular": sol.singular,
        "v0": sol.v0, "w_minus": sol.w_minus, "phi": sol.phi, "v": sol.v,
        "e_eta": obs["e_eta"], "F12": obs["F12"],
    })
    if cfg.get("plots"):
        ks = [row["delta"] for row in sol.delta_path[1:]]
        write_plot(out / "delta_path.dat", ks, [row["sup_change"] for row in sol.delta_path[1:]])
    d = sol.diagnostics
    pts = snap_points(mesh, points, mult)
    gaps = [surface.subsolution_gap(mesh, sol.w_minus, sol.v0,
                                    surface.singular_product(mesh, pts, params.a, dl, sol.rho),
                                    sol.params)
            for dl in (0.0, 1.0)]
    A = mesh.total_area
    floor = min(min(h.min_gap_to_floor) for h in sol.histories)
    ceil = min(min(h.min_gap_to_ceiling) for h in sol.histories)
    checks = [
        _check("euler_characteristic", mesh.euler_characteristic() == 2,
               mesh.euler_characteristic(), 2),
        _check("sigma_condition", 8 * math.pi * params.N / A - d["C_sigma"] > 4 * math.pi * params.N / A,
               d["C_sigma"], 4 * math.pi * params.N / A),
        _check("subsolution", all(float(g.min()) > 0 for g in gaps),
               min(float(g.min()) for g in gaps), 0.0),
        _check("ordering_chain", floor >= -1e-10 and ceil >= -1e-10,
               min(floor, ceil), -1e-10),
        _check("residual", d["final_residual_l2"] < d["residual_tol"],
               d["final_residual_l2"], d["residual_tol"]),
        _check("flux_quantized", abs(tot["flux"] / tot["flux_expected"] - 1) < 2e-2,
               tot["flux"], tot["flux_expected"]),
    ]
    body = {
        "level": mesh.level, "n_vertices": mesh.n_vertices, "area_defect": mesh.metadata["area_defect"],
        "beta_used": sol.beta_used, "sigma": sol.sigma, "C_sigma": d["C_sigma"],
        "delta_path": sol.delta_path,
        "residuals": {"final_l2": d["final_residual_l2"], "final_sup": d["final_residual_sup"]},
        "cauchy_tail": d["cauchy_tail"], "uniform_bound": d["uniform_bound"],
        "observables": tot,
    }
    return sol.params, body, checks


RUNNERS = {
    Regime.TOPOLOGICAL_PLANE: run_topological,
    Regime.NONTOPOLOGICAL_PLANE: run_nontopological,
    Regime.COMPACT_SPHERE: run_sphere,
}


def run(cfg: RunConfig, regime: Regime, out_dir: Path | None = None, *,
        allow_unproven_alpha: bool = False) -> int:
    """Solve, write artifacts into ``out_dir`` and return the exit code."""
    out = Path(out_dir if out_dir is not None else os.environ.get(OUTPUT_ENV) or cfg.get("dir"))
    out.mkdir(parents=True, exist_ok=True)
    if cfg.regime is not None and cfg.regime is not regime:
        raise ParameterError(f"config regime {cfg.regime.value} conflicts with command {regime.value}")
    (out / "config.ini").write_text(serialize_config(cfg))
    start = time.perf_counter()
    manifest = {"regime": regime.value}
    try:
        if regime is Regime.NONTOPOLOGICAL_PLANE:
            params, body, checks = run_nontopological(cfg, out, allow_unproven_alpha)
        else:
            params, body, checks = RUNNERS[regime](cfg, out)
        a, snapped = cfg.coupling(regime)
        manifest.update({"params": params.to_dict(), "a_input": snapped, **body,
                         "checks": checks,
                         "failed_checks": [c["name"] for c in checks if not c["passed"]]})
        code = EXIT_CHECK if manifest["failed_checks"] else EXIT_OK
    except CheckFailure as exc:
        manifest.update({"error": type(exc).__name__, "message": str(exc),
                         "failed_checks": [type(exc).__name__]})
        code = EXIT_CHECK
    except ParameterError as exc:
        manifest.update({"error": type(exc).__name__, "message": str(exc)})
        code = EXIT_USAGE
    except SolverError as exc:
        manifest.update({"error": type(exc).__name__, "message": str(exc)})
        code = EXIT_NUMERIC
    manifest["exit_code"] = code
    manifest["timing"] = {"wall_seconds": time.perf_counter() - start}
    with (out / "manifest.json").open("w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return code


def parse_sweep(spec: str):
    """``key=start:stop:step`` with ``stop`` included when hit within round-off."""
    try:
        key, rng = spec.split("=", 1)
        start, stop, step = (float(x) for x in rng.split(":"))
    except ValueError:
        raise ParameterError(f"sweep must look like key=start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise ParameterError("sweep needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return key.strip().lower(), [start + i * step for i in range(n)]


def _sweep_worker(args):
    text, regime_value, key, value, out_dir, allow = args
    cfg = parse_config(text).with_values(**{key: int(value) if key == "n" else value})
    try:
        return run(cfg, Regime(regime_value), out_dir, allow_unproven_alpha=allow)
    except ParameterError:
        return EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="solve", description="Self-dual gravitating Chern-Simons-Higgs strings.",
        epilog=__doc__.split("\n", 2)[2], formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("regime", choices=["topo", "nontopo", "sphere"])
    p.add_argument("--config", required=True, help="INI file with [model], [numerics], [output]")
    p.add_argument("--sweep", help="key=start:stop:step, one subdirectory per value")
    p.add_argument("--allow-unproven-alpha", action="store_true",
                   help="accept alpha below the proven threshold")
    p.add_argument("--workers", type=int, default=None, help="processes for --sweep")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        regime = parse_regime(args.regime)
        out = Path(os.environ.get(OUTPUT_ENV) or cfg.get("dir"))
        if args.sweep:
            key, values = parse_sweep(args.sweep)
            if key not in ("alpha", "n"):
                raise ParameterError("sweeps run over alpha or n")
            jobs = [(text, regime.value, key, v, out / f"{key}={v!r}", args.allow_unproven_alpha)
                    for v in values]
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                codes = list(pool.map(_sweep_worker, jobs))
            for v, c in zip(values, codes):
                print(f"{key}={v!r}: exit {c}")
            return max(codes)
        code = run(cfg, regime, out, allow_unproven_alpha=args.allow_unproven_alpha)
    except ParameterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = json.loads((out / "manifest.json").read_text())
    if code == EXIT_OK:
        print(f"ok: wrote {out}")
    else:
        detail = manifest.get("failed_checks") or manifest.get("error")
        print(f"exit {code}: {detail} (see {out / 'manifest.json'})", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

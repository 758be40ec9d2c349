"""Command-line entry point: solve, diagnose, sweep, validate.

Configs are flat TOML files; every run directory is self-describing
(state, masks, fields, history, manifest) and reruns with the same config
and seed reproduce every scalar bit for bit.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

try:
    import tomllib  # python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from . import __version__
from .grid import BoxGeometry, Grid, build_grid, write_grid_json
from .optimizer import (
    PhaseState,
    SolverConfig,
    load_state,
    save_state,
    solve_multiphase,
    solve_relaxed,
)
from .diagnostics import (
    free_boundary_centers,
    identity_suite,
    two_phase_centers,
    write_fits_csv,
    write_report_json,
    write_weiss_csv,
    fit_two_plane,
    blow_up,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

CONFIG_KEYS = {
    "dimension",
    "box",
    "resolution",
    "lambda",
    "backend",
    "p_schedule",
    "eps_vol",
    "fidelity_weight",
    "step_size",
    "max_outer_iters",
    "max_inner_iters",
    "tol_objective",
    "kappa",
    "seed",
    "init",
    "init_centers",
    "init_radius",
    "init_file",
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    for key in raw:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key}")
    if "lambda" not in raw:
        raise ConfigError("missing config key: lambda")
    return raw


def _lambda_list(raw) -> list[float]:
    lam = raw["lambda"]
    return [float(x) for x in lam] if isinstance(lam, (list, tuple)) else [float(lam)]


def grid_from_config(raw: dict) -> Grid:
    dim = int(raw.get("dimension", 1))
    box = raw.get("box", 1.0)
    extents = tuple(float(b) for b in box) if isinstance(box, (list, tuple)) else (float(box),) * dim
    if len(extents) != dim:
        raise ConfigError(f"box has {len(extents)} extents for dimension {dim}")
    resolution = raw.get("resolution", 129)
    resolution = tuple(int(r) for r in resolution) if isinstance(resolution, (list, tuple)) else int(resolution)
    return build_grid(BoxGeometry(extents), resolution)


def solver_config_from(raw: dict, lam: float) -> SolverConfig:
    if lam <= 0:
        raise ConfigError("lambda must be positive")
    kwargs = {}
    for src, dst in (
        ("backend", "backend"),
        ("eps_vol", "eps_vol"),
        ("fidelity_weight", "fidelity_weight"),
        ("step_size", "step_size"),
        ("max_outer_iters", "max_outer_iters"),
        ("max_inner_iters", "max_inner_iters"),
        ("tol_objective", "tol_objective"),
        ("kappa", "kappa"),
        ("seed", "seed"),
        ("init", "init"),
        ("init_radius", "init_radius"),
        ("init_file", "init_file"),
    ):
        if src in raw:
            kwargs[dst] = raw[src]
    if "p_schedule" in raw:
        kwargs["p_schedule"] = tuple(float(p) for p in raw["p_schedule"])
    if "init_centers" in raw:
        kwargs["init_centers"] = tuple(tuple(float(x) for x in c) for c in raw["init_centers"])
    if "seed" in kwargs:
        kwargs["seed"] = int(kwargs["seed"])
    config = SolverConfig(lam=lam, **kwargs)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def run_solve(raw: dict, lam: float, out_dir: Path) -> PhaseState:
    grid = grid_from_config(raw)
    config = solver_config_from(raw, lam)
    t0 = time.perf_counter()
    if config.backend == "relaxed":
        state = solve_relaxed(config, grid)
    else:
        state = solve_multiphase(config, grid)
    elapsed = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    save_state(state, out_dir, config)
    manifest = {
        "config": {**{k: raw[k] for k in sorted(raw)}, "lambda": lam},
        "grid": {
            "dimension": grid.dimension,
            "extents": list(grid.extents),
            "nodes": list(grid.nodes),
            "h": grid.h,
        },
        "seed": config.seed,
        "timings": {"solve_seconds": elapsed},
        "files": sorted(p.name for p in out_dir.iterdir() if p.name != "manifest.json"),
        "versions": {"sso": __version__, "numpy": np.__version__},
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return state


def cmd_solve(args) -> int:
    try:
        raw = load_config(args.config)
        lams = _lambda_list(raw)
        if len(lams) != 1:
            raise ConfigError("solve expects a single lambda; use sweep for lists")
        state = run_solve(raw, lams[0], Path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"objective {state.objective:.12g} converged {state.converged}")
    return EXIT_OK if state.converged else EXIT_NOT_CONVERGED


def cmd_diagnose(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "state.json").exists():
        print(f"error: no state.json in {run_dir}", file=sys.stderr)
        return EXIT_ERROR
    try:
        state = load_state(run_dir)
        report = identity_suite(state)
        write_report_json(run_dir / "report.json", report)
        write_weiss_csv(run_dir / "weiss.csv", report.weiss)
        rows = []
        if args.centers == "auto":
            centers = two_phase_centers(state, max_centers=4) or free_boundary_centers(state, 4)
        else:
            centers = [tuple(float(x) for x in c.split(",")) for c in args.centers.split(";")]
        g = state.grid
        for c in centers:
            rmax = min(
                min(c[a] - g.origin[a], g.origin[a] + g.extents[a] - c[a])
                for a in range(g.dimension)
            )
            r = max(8 * g.h, 0.4 * rmax)
            if r > rmax:
                continue
            try:
                rows.append((c, fit_two_plane(blow_up(state.u, c, r))))
            except ValueError:
                continue
        write_fits_csv(run_dir / "fits.csv", rows)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"report written to {run_dir / 'report.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        raw = load_config(args.config)
        lams = _lambda_list(raw)
        if not lams:
            raise ConfigError("lambda list is empty")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    threads = int(os.environ.get("SSO_THREADS", "1"))

    def one(lam: float):
        sub = out_root / f"lam_{lam:g}"
        try:
            state = run_solve(raw, lam, sub)
            from .diagnostics import contact_distance

            return lam, state, contact_distance(state), None
        except Exception as exc:
            return lam, None, math.inf, exc

    results = []
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, lams))
    else:
        results = [one(lam) for lam in lams]

    any_failed = False
    with open(out_root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "lambda2", "volume", "objective", "contact_distance"])
        for lam, state, cdist, exc in results:
            if state is None:
                any_failed = True
                print(f"lambda={lam:g} failed: {exc}", file=sys.stderr)
                continue
            if not state.converged:
                any_failed = True
            w.writerow(
                [
                    f"{lam:.17g}",
                    f"{state.lambda2:.17g}",
                    f"{state.volume():.17g}",
                    f"{state.objective:.17g}",
                    "inf" if math.isinf(cdist) else f"{cdist:.17g}",
                ]
            )
    print(f"sweep written to {out_root / 'sweep.csv'}")
    return EXIT_NOT_CONVERGED if any_failed else EXIT_OK


# ---------------------------------------------------------------------------
# validation suites: quick analytic-oracle checks


def _suite_eigen() -> list[tuple[str, bool, str]]:
    from .eigensolver import smallest_eigenpairs

    checks = []
    g = build_grid(BoxGeometry((1.0, 1.0)), 65)
    res = smallest_eigenpairs(g, g.inside_mask, k=2)
    h = g.h

    def discrete(m, n):
        return (4 / h**2) * (math.sin(math.pi * m * h / 2) ** 2 + math.sin(math.pi * n * h / 2) ** 2)

    l1, l2 = res.eigenvalues
    checks.append(("square lambda1 vs discrete", abs(l1 - discrete(1, 1)) < 1e-6 * l1, f"{l1:.6f}"))
    checks.append(("square lambda2 vs discrete", abs(l2 - discrete(1, 2)) < 1e-6 * l2, f"{l2:.6f}"))
    checks.append(("square lambda1 vs continuum", abs(l1 - 2 * math.pi**2) < 0.005 * 2 * math.pi**2, ""))
    checks.append(("square lambda2 vs continuum", abs(l2 - 5 * math.pi**2) < 0.005 * 5 * math.pi**2, ""))

    g1 = build_grid(BoxGeometry((1.0,)), 257)
    r1 = smallest_eigenpairs(g1, g1.inside_mask, k=1)
    checks.append(
        ("interval lambda1 vs pi^2", abs(r1.eigenvalues[0] - math.pi**2) < 1e-4 * math.pi**2, "")
    )
    return checks


def _suite_onedim() -> list[tuple[str, bool, str]]:
    lstar = math.pi ** (2.0 / 3.0)
    target = 3 * lstar
    g = build_grid(BoxGeometry((6.0,)), 601)
    st = solve_multiphase(SolverConfig(lam=1.0, seed=0), g)
    ok_obj = abs(st.objective - target) < 0.02 * target
    import scipy.ndimage

    ok_len = True
    for mask in (st.mask_plus, st.mask_minus):
        lab, n = scipy.ndimage.label(mask)
        sizes = scipy.ndimage.sum_labels(np.ones_like(mask, dtype=float), lab, range(1, n + 1))
        length = max(sizes) * g.h
        ok_len &= n == 1 and abs(length - lstar) < 0.03 * lstar
    return [
        ("1D objective within 2%", ok_obj, f"{st.objective:.5f} vs {target:.5f}"),
        ("1D interval lengths within 3%", ok_len, ""),
    ]


def _suite_twodim() -> list[tuple[str, bool, str]]:
    j01 = 2.404825557695773
    rstar = (j01**2 / (2 * math.pi)) ** 0.25
    target = j01**2 / rstar**2 + 2 * math.pi * rstar**2
    g = build_grid(BoxGeometry((6.0, 3.0)), (193, 97))
    st = solve_multiphase(SolverConfig(lam=1.0, seed=0, init_radius=0.8), g)
    import scipy.ndimage

    comps = [scipy.ndimage.label(m)[1] for m in (st.mask_plus, st.mask_minus)]
    return [
        ("2D objective within 5%", abs(st.objective - target) < 0.05 * target, f"{st.objective:.4f} vs {target:.4f}"),
        ("2D two connected components", comps == [1, 1], str(comps)),
    ]


def _suite_properties() -> list[tuple[str, bool, str]]:
    from .functional import coefficients_a, j_infty, j_p
    from .variation import fd_rayleigh_variation, first_variation_rayleigh, random_smooth_vector_field
    from .grid import ScalarField, dirichlet_energy, l2_inner, l2_norm

    rng = np.random.default_rng(0)
    ok_sandwich = True
    for _ in range(10_000):
        x, y = rng.uniform(0, 10, 2)
        p = rng.uniform(1.01, 40)
        ji, jp = j_infty(x, y), j_p(x, y, p)
        if not (ji <= jp * (1 + 1e-12) and jp <= 2 ** (1 / p) * ji * (1 + 1e-12)):
            ok_sandwich = False
            break
    ok_coeff = True
    for _ in range(10_000):
        rp, rm = rng.uniform(0.01, 100, 2)
        p = rng.uniform(1.1, 40)
        ap, am = coefficients_a(rp, rm, p)
        q = p / (p - 1)
        if abs(ap**q + am**q - 1.0) > 1e-12:
            ok_coeff = False
            break

    g = build_grid(BoxGeometry((1.0,)), 2049)
    pts = g.node_coords()
    vals = np.sin(np.pi * pts[..., 0]) * (1.0 + 0.35 * np.sin(1.3 * pts[..., 0] + 0.4))
    u = ScalarField.from_values(g, vals)
    u = ScalarField.from_values(g, u.values / l2_norm(u))
    lam = dirichlet_energy(u) / l2_inner(u, u)
    rng2 = np.random.default_rng(7)
    ok_var = True
    for _ in range(10):
        xi = random_smooth_vector_field(g, rng2)
        exact = first_variation_rayleigh(u, lam, xi)
        fd = fd_rayleigh_variation(u, xi)
        if abs(exact - fd) > 1e-3 * abs(fd):
            ok_var = False
    return [
        ("J_inf <= J_p <= 2^(1/p) J_inf", ok_sandwich, "10^4 pairs"),
        ("coefficient identity 1e-12", ok_coeff, "10^4 triples"),
        ("variation FD consistency 1e-3", ok_var, "10 fields"),
    ]


SUITES = {
    "eigen": _suite_eigen,
    "onedim": _suite_onedim,
    "twodim": _suite_twodim,
    "properties": _suite_properties,
}


def cmd_validate(args) -> int:
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; known suites: {', '.join(sorted(SUITES))}", file=sys.stderr)
        return EXIT_ERROR
    checks = SUITES[args.suite]()
    width = max(len(name) for name, _, _ in checks)
    all_ok = True
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        all_ok &= ok
        print(f"{name:<{width}}  {status}  {detail}")
    return EXIT_OK if all_ok else EXIT_ERROR


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sso", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one optimization")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", required=True)
    p_solve.set_defaults(func=cmd_solve)

    p_diag = sub.add_parser("diagnose", help="free-boundary diagnostics of a run directory")
    p_diag.add_argument("run_dir")
    p_diag.add_argument("--centers", default="auto", help="'auto' or 'x,y;x,y' list")
    p_diag.set_defaults(func=cmd_diagnose)

    p_sweep = sub.add_parser("sweep", help="one run per lambda in the config list")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="analytic-oracle validation suites")
    p_val.add_argument("suite", help=f"one of: {', '.join(sorted(SUITES))}")
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

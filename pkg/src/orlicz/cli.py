"""Config-driven command line runner.

Subcommands:

    orlicz run <cfg>                solve the configured problem
    orlicz verify-conditions <cfg>  structural condition checkers
    orlicz capacity <cfg>           capacity / density / fatness numbers
    orlicz diagnose <cfg>           regularity diagnostics
    orlicz examples                 list or copy the bundled configs

Common flags: --out DIR (artifact directory), --seed N (recorded; feeds
the optional random start), --grid-scale K (multiplies resolution).
Exit codes: 0 pass, 1 failure, 2 non-conclusive, 3 config or
infeasibility error.  Outputs are deterministic for a fixed config and
seed.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import re
import sys
from pathlib import Path

import numpy as np

from .capacity import (ball_capacity, capacity_fatness_ratio,
                       classify_boundary_point, compute_capacity,
                       measure_density_ratio)
from .diagnostics import (boundary_continuity_check, caccioppoli_sweep,
                          gehring_estimate)
from .errors import (ConfigError, GeometryError, InfeasibleProblemError,
                     NotInvertibleError)
from .expressions import parse_expression
from .grid import Domain, ScalarField
from .phi import (PhiFunction, check_a0, check_a1, check_ainc_adec,
                  dyadic_ball_sampler)
from .solver import ObstacleProblem, SolverOptions, solve

_EXIT_PASS = 0
_EXIT_FAIL = 1
_EXIT_INCONCLUSIVE = 2
_EXIT_ERROR = 3


def _load_config(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None)
    try:
        with open(p) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}", location=str(path))
    parser._source_path = p
    return parser


def _key_line(cfg, section, key):
    """1-based source line of ``key`` inside ``[section]``, if known."""
    path = getattr(cfg, "_source_path", None)
    if path is None:
        return None
    try:
        lines = Path(path).read_text().splitlines()
    except OSError:
        return None
    pattern = re.compile(re.escape(key) + r"\s*[=:]", re.IGNORECASE)
    current = None
    for i, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
        elif current == section and pattern.match(stripped):
            return i
    return None


def _get(cfg, section, key, default=None, required=False):
    if cfg.has_option(section, key):
        return cfg.get(section, key).strip()
    if required:
        raise ConfigError(f"missing required key", location=f"[{section}] {key}")
    return default


def _float(text, location):
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad number {text!r}", location=location)


def _floats(text, location, count=None):
    parts = [p for p in text.replace(",", " ").split() if p]
    vals = tuple(_float(p, location) for p in parts)
    if count is not None and len(vals) != count:
        raise ConfigError(f"expected {count} numbers, got {len(vals)}",
                          location=location)
    return vals


def _bool(text, location):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}", location=location)


def _expression_field(cfg, section, key, n, required=False):
    text = _get(cfg, section, key, required=required)
    if text is None or not text.strip():
        return None
    try:
        return parse_expression(text).compile(n)
    except ConfigError as exc:
        where = f"[{section}] {key}"
        line = _key_line(cfg, section, key)
        if line is not None:
            where = f"{where} (line {line})"
        raise ConfigError(f"{exc.args[0]}", location=where)


def build_domain(cfg, grid_scale=1):
    shape = _get(cfg, "domain", "shape", required=True)
    h = _float(_get(cfg, "domain", "h", required=True), "[domain] h")
    h = h / float(grid_scale)
    if shape == "interval":
        lo = _float(_get(cfg, "domain", "lo", "0"), "[domain] lo")
        hi = _float(_get(cfg, "domain", "hi", "1"), "[domain] hi")
        return Domain.interval(lo, hi, h)
    if shape == "rectangle":
        lo = _floats(_get(cfg, "domain", "lo", "0 0"), "[domain] lo", 2)
        hi = _floats(_get(cfg, "domain", "hi", "1 1"), "[domain] hi", 2)
        return Domain.rectangle(lo, hi, h)
    if shape == "disk":
        c = _floats(_get(cfg, "domain", "center", "0 0"), "[domain] center", 2)
        r = _float(_get(cfg, "domain", "radius", "1"), "[domain] radius")
        return Domain.disk(c, r, h)
    if shape == "l_shape":
        return Domain.l_shape(h)
    if shape == "disk_with_slit":
        c = _floats(_get(cfg, "domain", "center", "0 0"), "[domain] center", 2)
        r = _float(_get(cfg, "domain", "radius", "1"), "[domain] radius")
        return Domain.disk_with_slit(c, r, h)
    if shape == "square_with_cusp":
        return Domain.square_with_cusp(h)
    raise ConfigError(f"unknown shape {shape!r}", location="[domain] shape")


def build_phi(cfg, domain):
    family = _get(cfg, "phi", "family", "power")
    if family == "power":
        p = _float(_get(cfg, "phi", "p", required=True), "[phi] p")
        return PhiFunction.power(p)
    if family == "double_phase":
        p = _float(_get(cfg, "phi", "p", required=True), "[phi] p")
        q = _float(_get(cfg, "phi", "q", required=True), "[phi] q")
        weight = _expression_field(cfg, "phi", "weight", domain.n,
                                   required=True)
        return PhiFunction.double_phase(p, q, weight)
    if family == "variable_exponent":
        p_lo = _float(_get(cfg, "phi", "p_lower", required=True),
                      "[phi] p_lower")
        q_hi = _float(_get(cfg, "phi", "q_upper", required=True),
                      "[phi] q_upper")
        expo = _expression_field(cfg, "phi", "exponent", domain.n,
                                 required=True)
        return PhiFunction.variable_exponent(expo, p_lo, q_hi)
    raise ConfigError(f"unknown family {family!r}", location="[phi] family")


def build_problem(cfg, domain, phi):
    boundary_fn = _expression_field(cfg, "data", "boundary", domain.n)
    if boundary_fn is None:
        f = ScalarField.constant(domain, 0.0)
    else:
        f = ScalarField.from_function(domain, boundary_fn)
    obstacle_fn = _expression_field(cfg, "data", "obstacle", domain.n)
    psi = None
    if obstacle_fn is not None:
        where = _get(cfg, "data", "obstacle_where", "inside")
        if where not in ("inside", "all", "inside+halo"):
            raise ConfigError(f"bad obstacle_where {where!r}",
                              location="[data] obstacle_where")
        psi = ScalarField.from_function(domain, obstacle_fn, where=where)
    return ObstacleProblem(domain, phi, psi, f)


def build_options(cfg):
    kw = {}
    if _get(cfg, "solver", "tol"):
        kw["tol"] = _float(_get(cfg, "solver", "tol"), "[solver] tol")
    if _get(cfg, "solver", "max_iters"):
        kw["max_iters"] = int(_float(_get(cfg, "solver", "max_iters"),
                                     "[solver] max_iters"))
    if _get(cfg, "solver", "gauss_seidel"):
        kw["gauss_seidel"] = _get(cfg, "solver", "gauss_seidel")
    if _get(cfg, "solver", "omega"):
        kw["omega"] = _float(_get(cfg, "solver", "omega"), "[solver] omega")
    opts = SolverOptions(**kw)
    if opts.gauss_seidel not in ("auto", "on", "off"):
        raise ConfigError(f"bad gauss_seidel {opts.gauss_seidel!r}",
                          location="[solver] gauss_seidel")
    return opts


def _solve_configured(cfg, args, problem, opts):
    start = None
    if _get(cfg, "solver", "random_start") and _bool(
            _get(cfg, "solver", "random_start"), "[solver] random_start"):
        rng = np.random.default_rng(args.seed)
        lo = problem.boundary.values[problem.domain.inside].min()
        hi = problem.boundary.values[problem.domain.inside].max()
        pad = max(1.0, hi - lo)
        start = rng.uniform(lo - pad, hi + pad, size=problem.domain.dims)
    return solve(problem, opts, start=start)


def _out_dir(args, config_path):
    if args.out is not None:
        out = Path(args.out)
    else:
        out = Path.cwd() / (Path(config_path).stem + "_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_metadata(path, entries):
    with open(path, "w") as fh:
        for key in sorted(entries):
            value = entries[key]
            if isinstance(value, float):
                fh.write("%s=%.17g\n" % (key, value))
            else:
                fh.write("%s=%s\n" % (key, value))


def cmd_run(args):
    cfg = _load_config(args.config)
    domain = build_domain(cfg, args.grid_scale)
    phi = build_phi(cfg, domain)
    problem = build_problem(cfg, domain, phi)
    opts = build_options(cfg)
    sol = _solve_configured(cfg, args, problem, opts)
    out = _out_dir(args, args.config)

    exit_code = _EXIT_PASS if sol.converged else _EXIT_FAIL
    meta = {
        "config": Path(args.config).name,
        "seed": args.seed,
        "grid_scale": args.grid_scale,
        "dimension": domain.n,
        "h": domain.h,
        "inside_cells": int(domain.inside.sum()),
        "converged": sol.converged,
        "iterations": sol.iterations,
        "kkt_residual": sol.kkt_residual,
        "energy": sol.energy,
        "objective": sol.objective,
        "contact_cells": int(sol.contact.sum()),
    }
    exact_fn = _expression_field(cfg, "run", "exact", domain.n)
    if exact_fn is not None:
        pts = domain.inside_cell_centers()
        diff = float(np.abs(sol.u.values[domain.inside] - exact_fn(pts)).max())
        meta["exact_sup_diff"] = diff
        tol_text = _get(cfg, "run", "exact_tol")
        if tol_text:
            tol = _float(tol_text, "[run] exact_tol")
            meta["exact_tol"] = tol
            if diff > tol:
                exit_code = max(exit_code, _EXIT_FAIL)
    if _bool(_get(cfg, "run", "save_solution", "true"), "[run] save_solution"):
        sol.u.to_csv(out / "solution.csv")
        sol.u.save(out / "solution.txt")
    _write_metadata(out / "metadata.txt", meta)
    print(f"solved {Path(args.config).name}: converged={sol.converged} "
          f"iterations={sol.iterations} kkt={sol.kkt_residual:.3e} "
          f"objective={sol.objective:.10g} contact={int(sol.contact.sum())}")
    if "exact_sup_diff" in meta:
        print(f"exact_sup_diff={meta['exact_sup_diff']:.3e}")
    print(f"artifacts in {out}")
    return exit_code


_CONDITION_DEFAULTS = ("a0", "ainc", "adec", "a1")


def cmd_verify_conditions(args):
    cfg = _load_config(args.config)
    domain = build_domain(cfg, args.grid_scale)
    phi = build_phi(cfg, domain)
    checks = _get(cfg, "conditions", "checks", " ".join(_CONDITION_DEFAULTS))
    reports = []
    for token in checks.split():
        token = token.lower()
        if token == "a0":
            reports.append(check_a0(phi, domain))
        elif token == "a1":
            reports.append(check_a1(phi, domain, dyadic_ball_sampler(domain)))
        elif token == "a1n":
            reports.append(check_a1(phi, domain, dyadic_ball_sampler(domain),
                                    mode="A1n"))
        elif token == "ainc":
            p = _get(cfg, "conditions", "ainc_p")
            expo = _float(p, "[conditions] ainc_p") if p else phi.p_lower
            reports.append(check_ainc_adec(phi, domain, expo, variant="inc"))
        elif token == "adec":
            q = _get(cfg, "conditions", "adec_q")
            expo = _float(q, "[conditions] adec_q") if q else phi.q_upper
            reports.append(check_ainc_adec(phi, domain, expo, variant="dec"))
        else:
            raise ConfigError(f"unknown condition {token!r}",
                              location="[conditions] checks")
    out = _out_dir(args, args.config)
    with open(out / "conditions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "holds", "witness", "samples_checked",
                         "skipped", "detail"])
        for rep in reports:
            writer.writerow([rep.condition, rep.holds,
                             "" if rep.witness is None else "%.17g" % rep.witness,
                             rep.samples_checked, rep.skipped, rep.detail])
    for rep in reports:
        print(rep)
    print(f"artifacts in {out}")
    return _EXIT_PASS if all(r.holds for r in reports) else _EXIT_FAIL


def cmd_capacity(args):
    cfg = _load_config(args.config)
    domain = build_domain(cfg, args.grid_scale)
    phi = build_phi(cfg, domain)
    mode = _get(cfg, "capacity", "mode", "condenser")
    opts = build_options(cfg)
    out = _out_dir(args, args.config)
    exit_code = _EXIT_PASS
    rows = []
    if mode == "condenser":
        c = _floats(_get(cfg, "capacity", "center", required=True),
                    "[capacity] center", domain.n)
        r = _float(_get(cfg, "capacity", "radius", required=True),
                   "[capacity] radius")
        target = domain.cells_in_ball(c, r) & domain.inside
        res = compute_capacity(domain, phi, target, opts)
        rows.append(("condenser_capacity", res.value))
        rows.append(("target_cells", res.target_cells))
        print(f"condenser capacity = {res.value:.10g} "
              f"({res.target_cells} target cells)")
        if res.solution is not None and not res.solution.converged:
            exit_code = _EXIT_FAIL
    elif mode == "ball":
        c = _floats(_get(cfg, "capacity", "center", required=True),
                    "[capacity] center", domain.n)
        r = _float(_get(cfg, "capacity", "radius", required=True),
                   "[capacity] radius")
        cpr = int(_float(_get(cfg, "capacity", "cells_per_radius", "32"),
                         "[capacity] cells_per_radius"))
        res = ball_capacity(phi, c, r, n=domain.n, cells_per_radius=cpr,
                            options=opts)
        rows.append(("ball_capacity", res.value))
        print(f"ball capacity = {res.value:.10g}")
        if res.solution is not None and not res.solution.converged:
            exit_code = _EXIT_FAIL
    elif mode == "fatness":
        x0 = _floats(_get(cfg, "capacity", "point", required=True),
                     "[capacity] point", domain.n)
        r = _float(_get(cfg, "capacity", "radius", required=True),
                   "[capacity] radius")
        ratio, _, _ = capacity_fatness_ratio(domain, phi, x0, r, opts)
        density = measure_density_ratio(domain, x0, r)
        rows.append(("fatness_ratio", ratio))
        rows.append(("measure_density", density))
        print(f"fatness ratio = {ratio:.10g}, measure density = {density:.10g}")
    elif mode == "classify":
        x0 = _floats(_get(cfg, "capacity", "point", required=True),
                     "[capacity] point", domain.n)
        radii_text = _get(cfg, "capacity", "radii")
        radii = (list(_floats(radii_text, "[capacity] radii"))
                 if radii_text else None)
        rep = classify_boundary_point(domain, phi, x0, radii=radii,
                                      options=opts)
        rep.to_csv(out / "capacity.csv")
        print(rep)
        print(f"artifacts in {out}")
        return _EXIT_PASS
    else:
        raise ConfigError(f"unknown mode {mode!r}", location="[capacity] mode")
    with open(out / "capacity.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "value"])
        for name, value in rows:
            writer.writerow([name, "%.17g" % value if isinstance(value, float)
                             else value])
    print(f"artifacts in {out}")
    return exit_code


def _diagnose_continuity(cfg, args, problem, opts, out):
    sol = _solve_configured(cfg, args, problem, opts)
    x0 = _floats(_get(cfg, "diagnose", "point", required=True),
                 "[diagnose] point", problem.domain.n)
    radii_text = _get(cfg, "diagnose", "radii")
    radii = list(_floats(radii_text, "[diagnose] radii")) if radii_text else None
    tol = _float(_get(cfg, "diagnose", "tol", "1e-3"), "[diagnose] tol")
    slack = _float(_get(cfg, "diagnose", "slack", "0.1"), "[diagnose] slack")
    fat = None
    if _get(cfg, "diagnose", "fat"):
        fat = _bool(_get(cfg, "diagnose", "fat"), "[diagnose] fat")
    rep = boundary_continuity_check(sol, x0, radii=radii, tol=tol,
                                    slack=slack, fat=fat)
    rep.to_csv(out / "continuity.csv")
    print(rep)
    return {"pass": _EXIT_PASS, "fail": _EXIT_FAIL,
            "non-conclusive": _EXIT_INCONCLUSIVE}[rep.verdict]


def _diagnose_caccioppoli(cfg, args, problem, opts, out):
    sol = _solve_configured(cfg, args, problem, opts)
    variant = _get(cfg, "diagnose", "variant", "interior-mean")
    centers_text = _get(cfg, "diagnose", "centers", required=True)
    radius = _float(_get(cfg, "diagnose", "cacc_radius", required=True),
                    "[diagnose] cacc_radius")
    balls = []
    for chunk in centers_text.split(";"):
        chunk = chunk.strip()
        if chunk:
            balls.append((_floats(chunk, "[diagnose] centers",
                                  problem.domain.n), radius))
    kwargs = {}
    if variant == "interior-level":
        kwargs["level"] = _float(_get(cfg, "diagnose", "level", required=True),
                                 "[diagnose] level")
        kwargs["outer_factor"] = _float(
            _get(cfg, "diagnose", "outer_factor", "2"),
            "[diagnose] outer_factor")
    if variant == "boundary" and _get(cfg, "diagnose", "use_max_with_obstacle"):
        kwargs["use_max_with_obstacle"] = _bool(
            _get(cfg, "diagnose", "use_max_with_obstacle"),
            "[diagnose] use_max_with_obstacle")
    rep = caccioppoli_sweep(sol, variant, balls, **kwargs)
    rep.to_csv(out / "caccioppoli.csv")
    print(rep)
    if not rep.rows:
        return _EXIT_INCONCLUSIVE
    return _EXIT_PASS if np.isfinite(rep.fitted_constant) else _EXIT_FAIL


def _diagnose_gehring(cfg, args, problem, opts, out):
    levels = int(_float(_get(cfg, "diagnose", "levels", "3"),
                        "[diagnose] levels"))
    if levels < 2:
        raise ConfigError("need at least 2 refinement levels",
                          location="[diagnose] levels")
    grid_text = _get(cfg, "diagnose", "epsilon_grid", "0.25 0.5 1 3")
    eps_grid = list(_floats(grid_text, "[diagnose] epsilon_grid"))
    growth = _float(_get(cfg, "diagnose", "growth_tol", "0.2"),
                    "[diagnose] growth_tol")
    sols = []
    for k in range(levels):
        scale = args.grid_scale * 2 ** k
        domain = build_domain(cfg, scale)
        phi = build_phi(cfg, domain)
        prob = build_problem(cfg, domain, phi)
        sols.append(_solve_configured(cfg, args, prob, opts))
    rep = gehring_estimate(sols, epsilon_grid=eps_grid, growth_tol=growth)
    rep.to_csv(out / "gehring.csv")
    print(rep)
    return _EXIT_PASS if rep.epsilon_star is not None else _EXIT_FAIL


def cmd_diagnose(args):
    cfg = _load_config(args.config)
    if args.checks:
        checks = [c for c in args.checks.replace(",", " ").split() if c]
    else:
        checks = _get(cfg, "diagnose", "checks", "continuity").split()
    domain = build_domain(cfg, args.grid_scale)
    phi = build_phi(cfg, domain)
    problem = build_problem(cfg, domain, phi)
    opts = build_options(cfg)
    out = _out_dir(args, args.config)
    handlers = {"continuity": _diagnose_continuity,
                "caccioppoli": _diagnose_caccioppoli,
                "gehring": _diagnose_gehring}
    codes = []
    for name in checks:
        if name not in handlers:
            raise ConfigError(f"unknown check {name!r}",
                              location="[diagnose] checks")
        codes.append(handlers[name](cfg, args, problem, opts, out))
    print(f"artifacts in {out}")
    if _EXIT_FAIL in codes:
        return _EXIT_FAIL
    if _EXIT_INCONCLUSIVE in codes:
        return _EXIT_INCONCLUSIVE
    return _EXIT_PASS


def cmd_examples(args):
    from importlib import resources

    root = resources.files("orlicz") / "configs"
    names = sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))
    for name in names:
        print(name)
    if args.copy:
        dest = Path(args.copy)
        dest.mkdir(parents=True, exist_ok=True)
        for name in names:
            (dest / name).write_text((root / name).read_text())
        print(f"copied {len(names)} configs to {dest}")
    return _EXIT_PASS


def _build_argparser():
    parser = argparse.ArgumentParser(
        prog="orlicz",
        description="Obstacle problems and regularity diagnostics under "
                    "generalized Orlicz growth.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="path to a sectioned key=value config")
        p.add_argument("--out", default=None, help="artifact directory")
        p.add_argument("--seed", type=int, default=0,
                       help="seed recorded in metadata and used by "
                            "random_start")
        p.add_argument("--grid-scale", type=int, default=1, dest="grid_scale",
                       help="multiply the configured resolution")

    p_run = sub.add_parser("run", help="solve the configured problem")
    common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_ver = sub.add_parser("verify-conditions",
                           help="run structural condition checkers")
    common(p_ver)
    p_ver.set_defaults(fn=cmd_verify_conditions)

    p_cap = sub.add_parser("capacity", help="capacity and density numbers")
    common(p_cap)
    p_cap.set_defaults(fn=cmd_capacity)

    p_diag = sub.add_parser("diagnose", help="regularity diagnostics")
    common(p_diag)
    p_diag.add_argument("--checks", default=None,
                        help="space or comma separated subset of "
                             "continuity, caccioppoli, gehring")
    p_diag.set_defaults(fn=cmd_diagnose)

    p_ex = sub.add_parser("examples", help="list bundled configs")
    p_ex.add_argument("--copy", default=None, metavar="DEST",
                      help="copy the bundled configs to DEST")
    p_ex.set_defaults(fn=cmd_examples)
    return parser


def main(argv=None):
    parser = _build_argparser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_ERROR
    except InfeasibleProblemError as exc:
        print(f"infeasible problem: {exc}", file=sys.stderr)
        return _EXIT_ERROR
    except (GeometryError, NotInvertibleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

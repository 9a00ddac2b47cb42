"""Acceptance criteria, one test per criterion, one [PASS]/[FAIL] line each.

Each test states its tolerance inline and goes through the public API
only; oracle routes (quadratic programming, closed forms) live in
tests/oracles.py.  Criteria are numbered C1 through C12.
"""

import time

import numpy as np
import pytest
from numpy.random import default_rng

from instances import far_bump_disk_problem, lshape_corner_problem
from oracles import qp_obstacle_1d
from orlicz.capacity import (ball_capacity, ball_capacity_bounds,
                             capacity_fatness_ratio, compute_capacity,
                             measure_density_ratio)
from orlicz.cli import main as cli_main
from orlicz.diagnostics import (_ball_mask, boundary_continuity_check,
                                caccioppoli_boundary,
                                caccioppoli_interior_level,
                                caccioppoli_interior_mean,
                                fitted_gehring_constant, gehring_estimate)
from orlicz.grid import Domain, ScalarField, luxemburg_norm, modular
from orlicz.phi import PhiFunction
from orlicz.solver import ObstacleProblem, SolverOptions, solve

ANNULUS_EXACT = 2.0 * np.pi / np.log(2.0)  # condenser B(0.5) in B(1), p=2


def _verdict(tag, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    print(line)
    assert ok, line


def _field(dom, values, where="all"):
    mask = np.ones(dom.dims, bool) if where == "all" else dom.inside.copy()
    return ScalarField(dom, values, mask)


def test_c01_unconstrained_linear_exactness():
    t0 = time.time()
    dom = Domain.rectangle((0.0, 0.0), (1.0, 1.0), 1.0 / 64.0)
    pts = dom.lattice_centers()
    f = 0.3 + 2.0 * pts[..., 0] - pts[..., 1]
    prob = ObstacleProblem(dom, PhiFunction.power(2.0), None, _field(dom, f))
    sol = solve(prob, SolverOptions(tol=1e-10))
    sup = float(np.max(np.abs(sol.u.values[dom.inside] - f[dom.inside])))
    elapsed = time.time() - t0
    _verdict("C1", sup <= 1e-8 and elapsed <= 5.0,
             f"linear data reproduced to {sup:.3e} in {elapsed:.2f}s "
             "(tol 1e-8, budget 5s)")


def test_c02_parabola_obstacle_qp_oracle():
    dom = Domain.interval(0.0, 1.0, 1.0 / 512.0)
    x = dom.lattice_centers()[..., 0]
    psi = 0.5 - 4.0 * (x - 0.5) ** 2
    prob = ObstacleProblem(dom, PhiFunction.power(2.0),
                           _field(dom, psi, "inside"),
                           _field(dom, np.zeros(dom.dims)))
    sol = solve(prob, SolverOptions(tol=1e-11, max_iters=60000))
    u_qp = qp_obstacle_1d(prob)
    u_in = sol.u.values[dom.inside]
    gap = float(np.max(np.abs(u_in - u_qp)))
    c_sol = sol.contact[dom.inside]
    c_qp = (u_qp - psi[dom.inside]) <= 1e-7
    near_qp = np.convolve(c_qp.astype(int), [1, 1, 1], "same") > 0
    near_sol = np.convolve(c_sol.astype(int), [1, 1, 1], "same") > 0
    one_cell = bool(np.all(~c_sol | near_qp) and np.all(~c_qp | near_sol))
    _verdict("C2", gap <= 1e-6 and one_cell,
             f"h=1/512 deviation from QP oracle {gap:.3e} (tol 1e-6), "
             f"contact sets within one cell: {one_cell}")


# ---- shared comparison-suite instances for C3 and C4 -------------------

_CMP_OPTS = SolverOptions(tol=1e-10, max_iters=40000)


def _comparison_phi(k, rng):
    fam = k % 3
    if fam == 0:
        return PhiFunction.power(2.0)
    if fam == 1:
        return PhiFunction.power(3.0)
    shift = rng.uniform(0.2, 0.8)
    return PhiFunction.double_phase(
        1.5, 1.8, lambda x, s=shift: np.sqrt(np.abs(x[..., 0] - s)))


def _comparison_pair(k, rng):
    """Ordered pair of problems: psi1 <= psi2 and f1 <= f2 everywhere."""
    phi = _comparison_phi(k, rng)
    if k < 14:
        dom = Domain.interval(0.0, 1.0, 1.0 / 128.0)
        x = dom.lattice_centers()[..., 0]
        a0, a1 = rng.uniform(-0.5, 0.5, 2)
        w = rng.integers(1, 4)
        f1 = a0 + a1 * x + 0.3 * np.sin(2.0 * np.pi * w * x)
        f2 = f1 + rng.uniform(0.0, 0.4) + rng.uniform(0.0, 0.3) \
            * np.sin(np.pi * x) ** 2
        c = rng.uniform(0.25, 0.75)
        psi2 = rng.uniform(0.0, 0.9) - rng.uniform(4.0, 12.0) * (x - c) ** 2
        psi1 = psi2 - rng.uniform(0.0, 0.5)
    else:
        dom = Domain.rectangle((0.0, 0.0), (1.0, 1.0), 1.0 / 24.0)
        pts = dom.lattice_centers()
        x, y = pts[..., 0], pts[..., 1]
        a0, a1, a2 = rng.uniform(-0.5, 0.5, 3)
        f1 = a0 + a1 * x + a2 * y \
            + 0.2 * np.sin(2.0 * np.pi * x) * np.cos(np.pi * y)
        f2 = f1 + rng.uniform(0.0, 0.4)
        cx, cy = rng.uniform(0.3, 0.7, 2)
        psi2 = rng.uniform(0.0, 0.9) \
            - rng.uniform(6.0, 16.0) * ((x - cx) ** 2 + (y - cy) ** 2)
        psi1 = psi2 - rng.uniform(0.0, 0.5)
    return [ObstacleProblem(dom, phi, _field(dom, psi, "inside"),
                            _field(dom, f))
            for f, psi in ((f1, psi1), (f2, psi2))]


@pytest.fixture(scope="module")
def comparison_solutions():
    rng = default_rng(314)
    out = []
    for k in range(20):
        p1, p2 = _comparison_pair(k, rng)
        out.append((p1, p2, solve(p1, _CMP_OPTS), solve(p2, _CMP_OPTS)))
    return out


def test_c03_comparison_principle_suite(comparison_solutions):
    worst = -np.inf
    for p1, p2, s1, s2 in comparison_solutions:
        assert s1.converged and s2.converged
        inside = p1.domain.inside
        worst = max(worst, float(np.max(s1.u.values[inside]
                                        - s2.u.values[inside])))
    _verdict("C3", worst <= 1e-6,
             f"20 ordered instances over three integrand families, "
             f"max(u1-u2) = {worst:.3e} (tol 1e-6)")


def test_c04_uniqueness_from_random_starts(comparison_solutions):
    worst = 0.0
    for k, (p1, p2, s1, s2) in enumerate(comparison_solutions):
        dom = p2.domain
        reps = []
        for j in range(2):
            srng = default_rng(1000 * k + j)
            lo = float(p2.boundary.values.min()) - 0.5
            hi = float(p2.boundary.values.max()) + 0.5
            start = srng.uniform(lo, hi, dom.dims)
            floor = p2.obstacle_floor()
            start = np.maximum(start, np.where(np.isfinite(floor), floor, lo))
            start[dom.halo_mask] = p2.boundary.values[dom.halo_mask]
            reps.append(solve(p2, _CMP_OPTS, start=start))
        gap = float(np.max(np.abs(reps[0].u.values[dom.inside]
                                  - reps[1].u.values[dom.inside])))
        worst = max(worst, gap)
    _verdict("C4", worst <= 1e-6,
             f"two independent random feasible starts per instance, "
             f"worst disagreement {worst:.3e} (tol 1e-6)")


def test_c05_annulus_capacity():
    h = 1.0 / 256.0
    dom = Domain.disk((0.0, 0.0), 1.0, h)
    target = dom.cells_in_ball((0.0, 0.0), 0.5) & dom.inside
    res = compute_capacity(dom, PhiFunction.power(2.0), target,
                           SolverOptions(tol=1e-8, max_iters=30000))
    rel = abs(res.value - ANNULUS_EXACT) / ANNULUS_EXACT
    _verdict("C5", rel <= 0.05,
             f"condenser capacity {res.value:.5f} vs 2*pi/ln 2 = "
             f"{ANNULUS_EXACT:.5f}, relative error {rel:.3%} (tol 5%)")


def test_c06_ball_capacity_sandwich():
    families = {
        "power_2": PhiFunction.power(2.0),
        "power_3": PhiFunction.power(3.0),
        "double_phase": PhiFunction.double_phase(
            1.5, 1.8, lambda x: np.sqrt(np.abs(x[..., 0]))),
    }
    center = np.array([0.1, 0.0])
    opts = SolverOptions(tol=1e-9, max_iters=30000)
    worst = 1.0
    for name, phi in families.items():
        low_seq, high_seq = [], []
        for r in (0.25, 0.125, 0.0625):
            cap = float(ball_capacity(phi, center, r, n=2,
                                      cells_per_radius=32, options=opts).value)
            dom = Domain.rectangle((center[0] - 2 * r, center[1] - 2 * r),
                                   (center[0] + 2 * r, center[1] + 2 * r),
                                   r / 16.0)
            lo, hi = ball_capacity_bounds(phi, dom, center, r)
            low_seq.append(cap / float(lo))
            high_seq.append(cap / float(hi))
        c_low, c_high = min(low_seq), max(high_seq)
        assert c_low > 0.0 and np.isfinite(c_high), name
        spread = max(max(low_seq) / min(low_seq),
                     max(high_seq) / min(high_seq))
        worst = max(worst, spread)
    _verdict("C6", worst <= 4.0,
             f"fitted sandwich constants per family stable across 3 dyadic "
             f"radii, worst max/min spread {worst:.3f} (tol 4)")


def test_c07_density_implies_fatness():
    phi = PhiFunction.power(1.5)
    opts = SolverOptions(tol=1e-7, max_iters=40000)
    checks = []
    for kind, x0 in (("square", (0.0, 0.0)), ("square", (0.5, 0.0)),
                     ("disk", (1.0, 0.0))):
        for k in range(4):
            r = 0.4 / 2 ** k
            h = r / 8.0
            dom = (Domain.rectangle((0.0, 0.0), (1.0, 1.0), h)
                   if kind == "square" else Domain.disk((0.0, 0.0), 1.0, h))
            dens = measure_density_ratio(dom, x0, r)
            fat = float(capacity_fatness_ratio(dom, phi, x0, r, opts)[0])
            checks.append((dens, fat))
    assert all(d >= 0.4 for d, _ in checks)
    worst = min(f for _, f in checks)
    _verdict("C7", worst >= 0.05,
             f"q < n integrand on square and disk rims: all 12 probes have "
             f"measure density >= 0.4, min capacity fatness {worst:.3f} "
             "(tol 0.05)")


# ---- C8 instances: disk problems exercised by all three sweeps ---------

_C8_RADII = (0.24, 0.12, 0.06, 0.03)
_C8_INNER = np.array([0.35, 0.0])
_C8_EDGE = np.array([0.953, 0.0])


def _c8_instance(idx):
    dom = Domain.disk((0.0, 0.0), 1.0, 1.0 / 64.0)
    pts = dom.lattice_centers()

    def clamp_bump(cx, cy, height, fall):
        rho2 = (pts[..., 0] - cx) ** 2 + (pts[..., 1] - cy) ** 2
        return np.maximum(height - fall * rho2, -0.05)

    if idx == 0:
        phi = PhiFunction.power(2.0)
        f = 0.5 * np.maximum(pts[..., 0], 0.0) ** 2
        psi = None
    elif idx == 1:
        phi = PhiFunction.power(2.0)
        f = 0.3 * (1.0 + pts[..., 0]) / 2.0
        psi = _field(dom, clamp_bump(-0.35, 0.0, 0.3, 8.0), "inside")
    else:
        phi = PhiFunction.variable_exponent(
            lambda x: 1.9 + 0.2 * x[..., 0] ** 2, 1.9, 2.1)
        f = 0.4 * np.maximum(pts[..., 0], 0.0) ** 3 \
            + 0.05 * (1.0 + pts[..., 1])
        psi = _field(dom, clamp_bump(-0.2, 0.45, 0.25, 6.0), "inside")
    prob = ObstacleProblem(dom, phi, psi, _field(dom, f))
    return solve(prob, SolverOptions(tol=1e-9, max_iters=60000))


def test_c08_caccioppoli_sweeps():
    sols = [_c8_instance(i) for i in range(3)]
    assert all(s.converged for s in sols)
    worst = 1.0
    for variant in ("interior-level", "interior-mean", "boundary"):
        fitted = []
        for r in _C8_RADII:
            ratios = []
            for sol in sols:
                if variant == "interior-level":
                    outer = _ball_mask(sol.problem.domain, _C8_INNER, 2.0 * r)
                    level = float(sol.u.values[outer].mean())
                    row = caccioppoli_interior_level(sol, _C8_INNER, r,
                                                     2.0 * r, level)
                elif variant == "interior-mean":
                    row = caccioppoli_interior_mean(sol, _C8_INNER, r)
                else:
                    row = caccioppoli_boundary(sol, _C8_EDGE, r)
                assert np.isfinite(row.ratio), (variant, r)
                ratios.append(row.ratio)
            fitted.append(max(ratios))
        assert min(fitted) > 0.0, variant
        worst = max(worst, max(fitted) / min(fitted))
    _verdict("C8", worst <= 10.0,
             f"3 instances x 3 sweep variants x 4 dyadic radii, worst "
             f"per-variant fitted-constant spread {worst:.3f} (tol 10)")


def test_c09_higher_integrability_lshape():
    sols = [solve(lshape_corner_problem(h), SolverOptions(tol=1e-9))
            for h in (1.0 / 16, 1.0 / 32, 1.0 / 64)]
    rep = gehring_estimate(sols, epsilon_grid=(0.25, 0.5, 1.0, 3.0))
    ladder_ok = rep.epsilon_star is not None and rep.epsilon_star > 0.0

    rng = default_rng(5)
    constants = []
    for k in range(10):
        amp = rng.uniform(0.5, 2.0)
        cx, cy = rng.uniform(0.1, 0.4, size=2)
        sc = rng.uniform(0.0, 0.3)
        extra = lambda x, sc=sc, cx=cx, cy=cy: sc * (
            (x[..., 0] - cx) ** 2 - (x[..., 1] - cy))
        obstacle = None
        if k % 2 == 0:
            height = rng.uniform(0.5, 0.9)
            obstacle = lambda x, ht=height, cx=cx, cy=cy: ht - 5.0 * (
                (x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2)
        prob = lshape_corner_problem(1.0 / 64, amplitude=amp, extra=extra,
                                     obstacle=obstacle)
        constants.append(fitted_gehring_constant(solve(
            prob, SolverOptions(tol=1e-9)), rep.epsilon_star))
    single_c = max(constants)
    family_ok = all(np.isfinite(c) and c > 0.0 for c in constants) \
        and single_c <= 10.0
    _verdict("C9", ladder_ok and family_ok,
             f"reentrant corner gain epsilon* = {rep.epsilon_star} stable "
             f"over 3 refinement levels; single fitted constant "
             f"{single_c:.4f} over a 10-instance family (bound 10)")


def test_c10_boundary_continuity():
    sol = solve(far_bump_disk_problem(1.0 / 128), SolverOptions(tol=1e-9))
    radii = [0.25 / 2 ** k for k in range(5)]
    rep = boundary_continuity_check(sol, (1.0, 0.0), radii=radii,
                                    tol=1e-3, fat=True)
    final_ratio = rep.sups[-1] / rep.oscillation
    _verdict("C10", rep.verdict == "pass",
             f"sup deviation over 5 dyadic boundary balls decays "
             f"monotonically to {final_ratio:.3e} of osc(f) (tol 1e-3), "
             f"verdict {rep.verdict}")


# ---- C11 randomized invariants -----------------------------------------

def _random_phi(rng):
    fam = rng.integers(0, 4)
    if fam == 0:
        return PhiFunction.power(rng.uniform(1.2, 3.5))
    if fam == 1:
        p = rng.uniform(1.2, 2.0)
        q = p + rng.uniform(0.0, 1.2)
        s = rng.uniform(0.2, 0.8)
        a = rng.uniform(0.3, 1.0)
        return PhiFunction.double_phase(
            p, q, lambda x, s=s, a=a: np.abs(x[..., 0] - s) ** a)
    if fam == 2:
        pl = rng.uniform(1.3, 2.0)
        pu = pl + rng.uniform(0.0, 0.8)
        return PhiFunction.variable_exponent(
            lambda x, pl=pl, pu=pu: pl + (pu - pl)
            * (0.5 + 0.5 * np.sin(2.0 * np.pi * x[..., 0])), pl, pu)
    p = rng.uniform(1.3, 2.5)
    s = rng.uniform(0.0, 1.0)
    ts = np.geomspace(1e-4, 1e4, 60)
    return PhiFunction.orlicz_from_samples(ts, ts ** p
                                           * np.log(np.e + ts) ** s)


def _random_field(rng):
    if rng.integers(0, 2) == 0:
        dom = Domain.interval(0.0, rng.uniform(0.5, 2.0), 1.0 / 24.0)
    else:
        dom = Domain.rectangle((0.0, 0.0), (1.0, 1.0), 1.0 / 12.0)
    vals = rng.uniform(-2.0, 2.0, dom.dims)
    return ScalarField(dom, vals, np.ones(dom.dims, bool))


def test_c11_function_space_invariants():
    cases = 100
    violations = []

    rng = default_rng(2718)
    for _ in range(cases):  # unit-ball property
        phi, u = _random_phi(rng), _random_field(rng)
        nrm = luxemburg_norm(phi, u)
        if nrm == 0.0:
            continue
        scaled = ScalarField(u.domain, u.values / nrm, u.defined)
        if modular(phi, scaled) > 1.0 + 1e-8:
            violations.append("unit-ball")
        rho = modular(phi, u)
        if rho <= 1.0 and nrm > 1.0 + 1e-8:
            violations.append("unit-ball")
        if nrm <= 1.0 - 1e-8 and rho > 1.0 + 1e-8:
            violations.append("unit-ball")

    rng = default_rng(1618)
    for _ in range(cases):  # Luxemburg homogeneity
        phi, u = _random_phi(rng), _random_field(rng)
        c = 10.0 ** rng.uniform(-2.0, 2.0)
        cu = ScalarField(u.domain, c * u.values, u.defined)
        lhs, rhs = luxemburg_norm(phi, cu), c * luxemburg_norm(phi, u)
        if abs(lhs - rhs) > 1e-8 * max(rhs, 1e-30):
            violations.append("homogeneity")

    rng = default_rng(1414)
    for _ in range(cases):  # modular monotonicity
        phi, u2 = _random_phi(rng), _random_field(rng)
        frac = rng.uniform(0.0, 1.0, u2.domain.dims)
        u1 = ScalarField(u2.domain, frac * u2.values, u2.defined)
        if modular(phi, u1) > modular(phi, u2) * (1.0 + 1e-12) + 1e-15:
            violations.append("monotonicity")

    rng = default_rng(1732)
    for _ in range(cases):  # doubling iteration bound from aDec
        phi = _random_phi(rng)
        pts = rng.uniform(-1.0, 1.0, (16, 2))
        ts = 10.0 ** rng.uniform(-3.0, 2.0, 16)
        m = int(rng.integers(1, 4))
        lhs = phi.eval(pts, (2.0 ** m) * ts)
        bound = (phi.L * 2.0 ** phi.q_upper) ** m * phi.eval(pts, ts)
        if np.any(lhs > bound * (1.0 + 1e-9)):
            violations.append("doubling")

    _verdict("C11", not violations,
             f"4 randomized invariant suites x {cases} cases: "
             f"{len(violations)} violations "
             f"({', '.join(sorted(set(violations))) or 'none'})")


def test_c12_double_phase_a1_boundary(tmp_path):
    from importlib.resources import files
    cfgs = files("orlicz") / "configs"
    code_pass = cli_main(["verify-conditions",
                          str(cfgs / "doublephase_a1_pass.cfg"),
                          "--out", str(tmp_path / "pass")])
    code_fail = cli_main(["verify-conditions",
                          str(cfgs / "doublephase_a1_fail.cfg"),
                          "--out", str(tmp_path / "fail")])
    import csv
    with open(tmp_path / "fail" / "conditions.csv", newline="") as fh:
        rows = {r["condition"]: r["holds"] for r in csv.DictReader(fh)}
    ok = code_pass == 0 and code_fail == 1 and rows["A1"] == "False"
    _verdict("C12", ok,
             "ball condition holds at q/p = 1.25 = 1 + alpha/n and fails "
             f"at q/p = 2 on the bundled family (exits {code_pass}/"
             f"{code_fail})")

"""Energy-decay diagnostics: Caccioppoli ratios, reverse-Holder stability,
and pointwise boundary continuity.

All quantities here are plain lattice sums; nothing is proved.  Each
check evaluates the two sides of an inequality that a regular solution
ought to satisfy with a uniform constant, and reports the ratio.  Sweeps
over many balls or instances report the largest ratio as the fitted
constant: the inequality "holds with constant C" on the sampled family
exactly when C is finite and stable under refinement.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import GeometryError
from .grid import (ScalarField, discrete_gradient, gradient_magnitude,
                   luxemburg_norm_of_values, modular_of_values)
from .phi import ball_volume


def _ball_mask(domain, center, radius):
    return domain.cells_in_ball(center, radius) & domain.inside


@dataclasses.dataclass
class CaccioppoliRow:
    center: np.ndarray
    radius: float
    lhs: float
    rhs: float

    @property
    def ratio(self):
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else np.inf
        return self.lhs / self.rhs


@dataclasses.dataclass
class CaccioppoliReport:
    variant: str
    rows: list

    @property
    def fitted_constant(self):
        return max((row.ratio for row in self.rows), default=0.0)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("variant,x1,x2,radius,lhs,rhs,ratio\n")
            for row in self.rows:
                c = list(row.center) + [np.nan] * (2 - len(row.center))
                fh.write("%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                         % (self.variant, c[0], c[1], row.radius, row.lhs,
                            row.rhs, row.ratio))

    def __str__(self):
        return (f"caccioppoli[{self.variant}]: {len(self.rows)} balls, "
                f"fitted constant {self.fitted_constant:.6g}")


def caccioppoli_interior_level(solution, center, radius_inner, radius_outer, level):
    """Level-set Caccioppoli ratio on concentric interior balls.

    Compares the energy of (u - k)_+ on the inner ball against the
    modular of (u - k)/(R - r) over the outer super-level set.  The outer
    ball must be contained in the domain and the level k must dominate
    the obstacle on it.
    """
    problem = solution.problem
    dom = problem.domain
    if not radius_inner < radius_outer:
        raise ValueError("need radius_inner < radius_outer")
    outer_all = dom.cells_in_ball(center, radius_outer)
    if (outer_all & ~dom.inside).any():
        raise GeometryError("outer ball leaves the domain; use the boundary variant")
    if problem.obstacle is not None:
        on_ball = outer_all & problem.obstacle.defined
        if on_ball.any() and problem.obstacle.values[on_ball].max() > level + 1e-12:
            raise ValueError("level lies below the obstacle on the outer ball")
    u = solution.u
    above = u.values > level
    excess = ScalarField(dom, np.maximum(u.values - level, 0.0), u.defined)
    gmag = gradient_magnitude(excess)
    inner = _ball_mask(dom, center, radius_inner) & above
    outer = outer_all & dom.inside & above
    lhs = modular_of_values(problem.phi, dom, inner, gmag)
    quot = np.maximum(u.values - level, 0.0) / (radius_outer - radius_inner)
    rhs = modular_of_values(problem.phi, dom, outer, quot)
    return CaccioppoliRow(np.atleast_1d(np.asarray(center, float)),
                          radius_inner, lhs, rhs)


def caccioppoli_interior_mean(solution, center, radius):
    """Mean-based interior Caccioppoli ratio on a ball with its double inside.

    The right-hand side is the mean oscillation modular at scale 4r plus
    the obstacle gradient term plus 1.  Requires the obstacle gradient in
    the unit Luxemburg ball on the double ball, which is the normalization
    the additive constant 1 encodes.
    """
    problem = solution.problem
    dom = problem.domain
    double_all = dom.cells_in_ball(center, 2.0 * radius)
    if (double_all & ~dom.inside).any():
        raise GeometryError("double ball leaves the domain; use the boundary variant")
    double = double_all & dom.inside
    single = _ball_mask(dom, center, radius)
    if not single.any():
        raise GeometryError("ball contains no inside cells")
    psi_g = np.zeros(dom.dims)
    if problem.obstacle is not None:
        psi_g = gradient_magnitude(problem.obstacle)
        nrm = luxemburg_norm_of_values(problem.phi, dom, double, psi_g)
        if nrm >= 1.0:
            raise ValueError(f"obstacle gradient norm {nrm:.4g} >= 1 on the double "
                             "ball; rescale the instance")
    u = solution.u
    gmag = gradient_magnitude(u)
    pts_s = dom.centers_of(single)
    lhs = float(np.mean(problem.phi.eval(pts_s, gmag[single])))
    pts_d = dom.centers_of(double)
    ubar = float(u.values[double].mean())
    osc = np.abs(u.values[double] - ubar) / (4.0 * radius)
    rhs = float(np.mean(problem.phi.eval(pts_d, osc)))
    rhs += float(np.mean(problem.phi.eval(pts_d, psi_g[double])))
    rhs += 1.0
    return CaccioppoliRow(np.atleast_1d(np.asarray(center, float)), radius, lhs, rhs)


def caccioppoli_boundary(solution, center, radius, use_max_with_obstacle=False):
    """Boundary Caccioppoli ratio on a ball meeting the complement.

    Energies are normalized by the continuum ball volumes at r and 2r.
    The comparison function is the boundary datum f; near the coincidence
    set {f < obstacle} the datum is not admissible, so the ball must stay
    four radii away from it unless ``use_max_with_obstacle`` replaces f
    by max(f, obstacle).
    """
    problem = solution.problem
    dom = problem.domain
    center = np.atleast_1d(np.asarray(center, float))
    if not dom.is_inside_points(center[None, :])[0]:
        raise GeometryError("center must lie in the domain")
    double_all = dom.cells_in_ball(center, 2.0 * radius)
    if not (double_all & ~dom.inside).any():
        raise ValueError("double ball stays inside the domain; "
                         "use an interior variant")
    f = problem.boundary
    fvals = f.values.copy()
    fdef = f.defined.copy()
    if problem.obstacle is not None:
        odef = problem.obstacle.defined
        rises = fdef & odef & (problem.obstacle.values > fvals + 1e-12)
        if use_max_with_obstacle:
            fvals = np.where(odef, np.maximum(fvals, problem.obstacle.values), fvals)
        elif rises.any():
            pts = dom.centers_of(rises)
            d0 = float(np.sqrt(np.sum((pts - center) ** 2, axis=1)).min())
            if radius >= d0 / 4.0:
                raise ValueError(
                    f"ball radius {radius:.4g} reaches within a quarter of the "
                    f"distance {d0:.4g} to the set where the obstacle exceeds the "
                    "datum; pass use_max_with_obstacle=True")
    ftilde = ScalarField(dom, fvals, fdef)
    u = solution.u
    gmag = gradient_magnitude(u)
    single = _ball_mask(dom, center, radius)
    double = double_all & dom.inside
    vol_r = ball_volume(dom.n, radius)
    vol_2r = ball_volume(dom.n, 2.0 * radius)
    lhs = modular_of_values(problem.phi, dom, single, gmag) / vol_r
    diff = np.abs(u.values - ftilde.values) / (4.0 * radius)
    fmag = gradient_magnitude(ftilde)
    rhs = (modular_of_values(problem.phi, dom, double, diff)
           + modular_of_values(problem.phi, dom, double, fmag)) / vol_2r
    return CaccioppoliRow(center, radius, lhs, rhs)


def caccioppoli_sweep(solution, variant, balls, **kwargs):
    """Evaluate one Caccioppoli variant over a ball family.

    ``balls`` holds (center, radius) pairs; the level variant reads the
    extra keywords ``outer_factor`` (default 2) and ``level``.  Balls
    whose preconditions fail are skipped silently only for geometry
    reasons; hypothesis violations propagate.
    """
    rows = []
    for center, radius in balls:
        try:
            if variant == "interior-level":
                outer = kwargs.get("outer_factor", 2.0) * radius
                row = caccioppoli_interior_level(solution, center, radius, outer,
                                                 kwargs["level"])
            elif variant == "interior-mean":
                row = caccioppoli_interior_mean(solution, center, radius)
            elif variant == "boundary":
                row = caccioppoli_boundary(
                    solution, center, radius,
                    kwargs.get("use_max_with_obstacle", False))
            else:
                raise ValueError(f"unknown variant {variant!r}")
        except GeometryError:
            continue
        rows.append(row)
    return CaccioppoliReport(variant, rows)


@dataclasses.dataclass
class GehringReport:
    epsilon_grid: list
    spacings: list
    integrals: np.ndarray        # levels x epsilons, raw lattice sums
    power_means: np.ndarray      # levels x epsilons, refinement-comparable
    stable: list
    epsilon_star: float | None
    fitted_constant: float | None
    boundary_density: float | None = None

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("h,epsilon,integral,power_mean,stable\n")
            for i, h in enumerate(self.spacings):
                for j, e in enumerate(self.epsilon_grid):
                    fh.write("%.17g,%.17g,%.17g,%.17g,%d\n"
                             % (h, e, self.integrals[i, j],
                                self.power_means[i, j], int(self.stable[j])))

    def __str__(self):
        star = "none" if self.epsilon_star is None else f"{self.epsilon_star:g}"
        return (f"gehring: stable exponent gain {star} over "
                f"{len(self.spacings)} refinement levels")


def gehring_estimate(solutions, epsilon_grid=(0.25, 0.5, 1.0, 2.0),
                     growth_tol=0.2):
    """Higher-integrability stability of the gradient under refinement.

    ``solutions`` is a list of Solution objects for the same continuum
    problem at increasing resolution.  For each epsilon the raised
    modular of the gradient is tracked across levels; the exponent is
    accepted while refinement grows it by at most ``growth_tol``
    relatively, and epsilon_star is the largest grid point whose whole
    lower range is accepted.  The fitted constant compares the finest
    raised modular against the raised-data right-hand side.
    """
    if len(solutions) < 2:
        raise ValueError("need at least two refinement levels")
    eps = list(epsilon_grid)
    levels = len(solutions)
    integrals = np.zeros((levels, len(eps)))
    pmeans = np.zeros((levels, len(eps)))
    for i, sol in enumerate(solutions):
        dom = sol.problem.domain
        gmag = gradient_magnitude(sol.u)
        count = int(dom.inside.sum())
        for j, e in enumerate(eps):
            raised = modular_of_values(sol.problem.phi, dom, dom.inside, gmag,
                                       exponent=1.0 + e)
            integrals[i, j] = raised
            pmeans[i, j] = (raised / (count * dom.h ** dom.n)) ** (1.0 / (1.0 + e))
    stable = []
    for j in range(len(eps)):
        ok = all(integrals[i + 1, j] <= (1.0 + growth_tol) * integrals[i, j]
                 for i in range(levels - 1))
        stable.append(ok)
    epsilon_star = None
    for j, e in enumerate(eps):
        if all(stable[:j + 1]):
            epsilon_star = e
        else:
            break
    fitted = None
    if epsilon_star is not None:
        fitted = fitted_gehring_constant(solutions[-1], epsilon_star)
    fine = solutions[-1].problem.domain
    bdry = fine.boundary_cell_centers()
    dens = None
    if len(bdry):
        from .capacity import measure_density_ratio
        sample = bdry[:: max(1, len(bdry) // 8)]
        dens = float(min(measure_density_ratio(fine, p, fine.bounding_diameter() / 8.0)
                         for p in sample))
    return GehringReport(eps, [s.problem.domain.h for s in solutions],
                         integrals, pmeans, stable, epsilon_star, fitted, dens)


def fitted_gehring_constant(solution, epsilon):
    """Ratio of the raised gradient modular to the raised-data bound."""
    problem = solution.problem
    dom = problem.domain
    e1 = 1.0 + epsilon
    gmag = gradient_magnitude(solution.u)
    lhs = modular_of_values(problem.phi, dom, dom.inside, gmag, exponent=e1)
    base = modular_of_values(problem.phi, dom, dom.inside, gmag) ** e1
    rhs = base + 1.0
    if problem.obstacle is not None:
        omag = gradient_magnitude(problem.obstacle)
        rhs += modular_of_values(problem.phi, dom,
                                 dom.inside & problem.obstacle.defined, omag,
                                 exponent=e1)
    fmag = gradient_magnitude(problem.boundary)
    rhs += modular_of_values(problem.phi, dom, dom.inside & problem.boundary.defined,
                             fmag, exponent=e1)
    return lhs / rhs


@dataclasses.dataclass
class ContinuityReport:
    point: np.ndarray
    radii: list
    sups: list
    reference_value: float
    oscillation: float
    verdict: str

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("radius,sup_deviation\n")
            for r, s in zip(self.radii, self.sups):
                fh.write("%.17g,%.17g\n" % (r, s))

    def __str__(self):
        tail = self.sups[-1] if self.sups else np.nan
        return (f"boundary continuity at {np.array2string(self.point, precision=4)}: "
                f"{self.verdict} (final sup {tail:.4g} of oscillation "
                f"{self.oscillation:.4g})")


def boundary_continuity_check(solution, x0, radii=None, tol=1e-3, slack=0.1,
                              fat=None, reference_value=None):
    """Decay of sup |u - f(x0)| over shrinking boundary balls.

    The reference value defaults to the boundary datum at the defined
    cell nearest to x0.  The verdict is "pass" when the sups decay
    monotonically (within a relative slack) down to tol times the data
    oscillation; otherwise "fail" when ``fat`` asserts the complement was
    certified fat (decay was expected), else "non-conclusive".
    """
    problem = solution.problem
    dom = problem.domain
    x0 = np.atleast_1d(np.asarray(x0, float))
    if radii is None:
        r = dom.bounding_diameter() / 4.0
        radii = []
        while r >= 4.0 * dom.h and len(radii) < 8:
            radii.append(r)
            r /= 2.0
    radii = sorted(radii, reverse=True)
    f = problem.boundary
    if reference_value is None:
        pts = dom.centers_of(f.defined)
        i = int(np.argmin(np.sum((pts - x0) ** 2, axis=1)))
        reference_value = float(f.values[f.defined][i])
    fvals = f.values[f.defined]
    osc = float(fvals.max() - fvals.min()) if fvals.size else 0.0
    sups = []
    kept = []
    for r in radii:
        ball = _ball_mask(dom, x0, r)
        if not ball.any():
            continue
        kept.append(r)
        sups.append(float(np.abs(solution.u.values[ball] - reference_value).max()))
    if not kept:
        raise GeometryError("no ball radius catches any inside cell")
    monotone = all(sups[i + 1] <= (1.0 + slack) * sups[i]
                   for i in range(len(sups) - 1))
    small = sups[-1] <= tol * osc if osc > 0 else sups[-1] <= tol
    if monotone and small:
        verdict = "pass"
    elif fat is True:
        verdict = "fail"
    else:
        verdict = "non-conclusive"
    return ContinuityReport(x0, kept, sups, reference_value, osc, verdict)

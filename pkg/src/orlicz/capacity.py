"""Relative capacities and boundary-point classification.

The capacity of a target set E relative to a bounded ambient domain is
the least energy among admissible potentials: fields vanishing on the
ambient boundary and at least 1 on E.  Discretely this is an obstacle
problem with zero boundary data and obstacle 1 on E extended by one cell
(the extension keeps the potential from dipping between cell centers of
a thin target, matching the closed-set convention).

Boundary regularity at a point is probed at several dyadic radii with
two ratios: the measure density of the complement in shrinking balls,
and the capacity of the complement piece relative to the capacity of the
ball itself.  Uniform lower bounds on these ratios are the discrete
analogues of measure density and capacity fatness.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import GeometryError
from .grid import Domain, ScalarField, dilate
from .phi import ball_volume
from .solver import ObstacleProblem, SolverOptions, full_objective, solve


@dataclasses.dataclass
class CapacityResult:
    value: float
    solution: object
    target_cells: int
    obstacle_cells: int

    def __float__(self):
        return self.value


def compute_capacity(domain, phi, target, options=None):
    """Capacity of the cells in ``target`` relative to ``domain``.

    ``target`` is a boolean lattice mask of inside cells; its one-cell
    dilation must stay inside the domain.  An empty target has capacity
    zero.  The returned result carries the equilibrium potential.
    """
    target = np.asarray(target, bool)
    if target.shape != domain.dims:
        raise GeometryError("target mask lives on a different lattice")
    if not target.any():
        return CapacityResult(0.0, None, 0, 0)
    if (target & ~domain.inside).any():
        raise GeometryError("target contains cells outside the domain")
    grown = dilate(target)
    if (grown & ~domain.inside).any():
        raise GeometryError("target touches the domain boundary; no room for "
                            "the one-cell extension")
    obstacle = ScalarField(domain, np.where(grown, 1.0, 0.0), grown)
    zero = ScalarField.constant(domain, 0.0)
    problem = ObstacleProblem(domain, phi, obstacle, zero)
    sol = solve(problem, options)
    value = full_objective(problem, sol.u, smoothing=0.0)
    return CapacityResult(value, sol, int(target.sum()), int(grown.sum()))


def ball_capacity(phi, center, radius, n=2, cells_per_radius=32, options=None):
    """Capacity of the closed ball B(x, r) relative to B(x, 2r).

    The ambient ball is rasterized at h = r / cells_per_radius.  For
    x-dependent integrands the sample points are the actual lattice
    centers, so the value reflects phi near x.
    """
    h = radius / cells_per_radius
    c = np.atleast_1d(np.asarray(center, float))
    if n == 1:
        amb = Domain.interval(c[0] - 2 * radius, c[0] + 2 * radius, h)
    else:
        amb = Domain.disk(c, 2 * radius, h)
    d2 = np.sum((amb.lattice_centers() - c) ** 2, axis=-1)
    target = amb.inside & (d2 <= radius * radius * (1 + 1e-12))
    opts = options or SolverOptions(tol=1e-8)
    return compute_capacity(amb, phi, target, opts)


def ball_capacity_bounds(phi, domain, center, radius):
    """Sampled bounds |B| phi^-_{2B}(1/r) and |B| phi^+_{2B}(1/r).

    phi is sampled on the closure points of the domain inside the double
    ball; the volume factor is the continuum ball volume.
    """
    pts = domain.closure_sample_points_in_ball(center, 2.0 * radius)
    if len(pts) == 0:
        raise GeometryError("double ball contains no sample points")
    vals = np.broadcast_to(np.asarray(phi.eval(pts, 1.0 / radius)), (len(pts),))
    vol = ball_volume(domain.n, radius)
    return vol * float(vals.min()), vol * float(vals.max())


def measure_density_ratio(domain, x0, radius):
    """|B(x0, r) minus the domain| / |B(x0, r)| by cell counting.

    The count runs over the full lattice window covering the ball; window
    cells beyond the stored lattice are outside the domain by the margin
    convention.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    h = domain.h
    lo_idx = np.floor((x0 - radius - domain.origin) / h - 0.5).astype(int)
    hi_idx = np.ceil((x0 + radius - domain.origin) / h + 0.5).astype(int)
    axes = [np.arange(lo_idx[k], hi_idx[k] + 1) for k in range(domain.n)]
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([domain.origin[k] + (grids[k] + 0.5) * h
                        for k in range(domain.n)], axis=-1)
    in_ball = np.sum((centers - x0) ** 2, axis=-1) <= radius * radius * (1 + 1e-12)
    total = int(in_ball.sum())
    if total == 0:
        return 0.0
    valid = np.ones(grids[0].shape, bool)
    for k in range(domain.n):
        valid &= (grids[k] >= 0) & (grids[k] < domain.dims[k])
    inside = np.zeros(grids[0].shape, bool)
    sel = in_ball & valid
    if sel.any():
        idx = tuple(g[sel] for g in grids)
        inside[sel] = domain.inside[idx]
    outside = total - int((in_ball & inside).sum())
    return outside / total


def _window_domain(domain, x0, radius):
    # ambient ball B(x0, 2r) rasterized on the same lattice alignment,
    # with the original inside mask transplanted into the window
    x0 = np.atleast_1d(np.asarray(x0, float))
    h = domain.h
    margin = 2.0 * radius + 2.5 * h
    lo_idx = np.floor((x0 - margin - domain.origin) / h).astype(int)
    hi_idx = np.ceil((x0 + margin - domain.origin) / h).astype(int)
    axes = [np.arange(lo_idx[k], hi_idx[k] + 1) for k in range(domain.n)]
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([domain.origin[k] + (grids[k] + 0.5) * h
                        for k in range(domain.n)], axis=-1)
    ambient_inside = np.sum((centers - x0) ** 2, axis=-1) < (2.0 * radius) ** 2
    ring = np.ones(grids[0].shape, bool)
    ring[(slice(1, -1),) * domain.n] = False
    ambient_inside &= ~ring
    valid = np.ones(grids[0].shape, bool)
    for k in range(domain.n):
        valid &= (grids[k] >= 0) & (grids[k] < domain.dims[k])
    omega_inside = np.zeros(grids[0].shape, bool)
    if valid.any():
        idx = tuple(g[valid] for g in grids)
        omega_inside[valid] = domain.inside[idx]
    origin = domain.origin + lo_idx * h
    window = Domain(ambient_inside, h, origin, check=False)
    ball = np.sum((centers - x0) ** 2, axis=-1) <= radius * radius * (1 + 1e-12)
    return window, omega_inside, ball


def capacity_fatness_ratio(domain, phi, x0, radius, options=None):
    """cap(B(x0,r) minus domain, B(x0,2r)) / cap(B(x0,r), B(x0,2r)).

    Both capacities are computed on a window lattice aligned with the
    domain so the complement cells are exactly the rasterized ones.
    """
    window, omega_inside, ball = _window_domain(domain, x0, radius)
    target_full = ball & window.inside
    if not target_full.any():
        raise GeometryError("ball does not meet the window lattice")
    opts = options or SolverOptions(tol=1e-8)
    denom = compute_capacity(window, phi, target_full, opts)
    target_compl = target_full & ~omega_inside
    if not target_compl.any():
        return 0.0, CapacityResult(0.0, None, 0, 0), denom
    numer = compute_capacity(window, phi, target_compl, opts)
    return numer.value / denom.value, numer, denom


@dataclasses.dataclass
class BoundaryPointReport:
    point: np.ndarray
    radii: list
    measure_ratios: list
    fatness_ratios: list
    c_star_measure: float
    c_star_capacity: float
    skipped: int = 0

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("radius,measure_ratio,fatness_ratio\n")
            for r, m, c in zip(self.radii, self.measure_ratios, self.fatness_ratios):
                fh.write("%.17g,%.17g,%.17g\n" % (r, m, c))

    def __str__(self):
        return (f"point {np.array2string(self.point, precision=4)}: "
                f"measure density >= {self.c_star_measure:.4g}, "
                f"capacity fatness >= {self.c_star_capacity:.4g} "
                f"over {len(self.radii)} radii")


def classify_boundary_point(domain, phi, x0, radii=None, options=None):
    """Measure density and capacity fatness of the complement at x0.

    x0 must lie within two cells of the boundary.  Radii default to a
    dyadic sweep from an eighth of the domain diameter down to 4h; radii
    under 4h are skipped (the window would be all rasterization error).
    The uniform constants are the minima over the surviving radii.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    bpts = domain.boundary_cell_centers()
    dist = np.sqrt(np.sum((bpts - x0) ** 2, axis=1)).min()
    if dist > 2.0 * domain.h + 1e-12:
        raise GeometryError(f"{x0} is {dist:.4g} away from the boundary cells; "
                            "classification needs a boundary point")
    if radii is None:
        r = domain.bounding_diameter() / 8.0
        radii = []
        while r >= 4.0 * domain.h and len(radii) < 6:
            radii.append(r)
            r /= 2.0
    radii = list(radii)
    kept, meas, fat = [], [], []
    skipped = 0
    for r in radii:
        if r < 4.0 * domain.h:
            skipped += 1
            continue
        kept.append(r)
        meas.append(measure_density_ratio(domain, x0, r))
        ratio, _, _ = capacity_fatness_ratio(domain, phi, x0, r, options)
        fat.append(ratio)
    if not kept:
        raise GeometryError("no usable radii: all below four cells")
    return BoundaryPointReport(x0, kept, meas, fat,
                               float(min(meas)), float(min(fat)), skipped)

"""Uniform cell-centered lattices, discrete fields, gradients and modulars.

A Domain is a uniform lattice of spacing h covering the bounding box of a
region plus one extra cell on every side.  Cells whose centers fall in
the region are "inside"; the outer ring is never inside, so every inside
cell has all face neighbors on the lattice.  Boundary data lives on the
halo: the non-inside cells face-adjacent to inside ones.

Discrete gradients are one-sided: forward difference along each axis,
falling back to backward difference when the forward neighbor carries no
data.  Modulars are midpoint sums h^n sum phi(x_c, |v_c|) over inside
cells, and the Luxemburg norm is recovered from the modular by bisection.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GeometryError
from .phi import ConditionReport, default_beta_grid, monotone_left_inverse

_EDGE_TOL = 1e-9


def shifted(a, axis, delta, fill=0):
    """Array shifted by delta cells along axis, vacated entries set to fill."""
    out = np.full_like(a, fill)
    if delta == 0:
        return a.copy()
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if delta > 0:
        src[axis] = slice(0, -delta)
        dst[axis] = slice(delta, None)
    else:
        src[axis] = slice(-delta, None)
        dst[axis] = slice(0, delta)
    out[tuple(dst)] = a[tuple(src)]
    return out


def dilate(mask):
    """One-cell face dilation of a boolean mask."""
    out = mask.copy()
    for ax in range(mask.ndim):
        out |= shifted(mask, ax, 1, False)
        out |= shifted(mask, ax, -1, False)
    return out


def _component_count(inside):
    # run-based union-find over row segments; face adjacency
    if inside.ndim == 1:
        d = np.diff(inside.astype(np.int8))
        return int(inside[0]) + int(np.sum(d == 1))
    parent = []

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj

    prev_runs = []
    for row in inside:
        idx = np.flatnonzero(row)
        runs = []
        if idx.size:
            breaks = np.flatnonzero(np.diff(idx) > 1)
            starts = np.concatenate(([0], breaks + 1))
            ends = np.concatenate((breaks, [idx.size - 1]))
            for s, e in zip(starts, ends):
                label = len(parent)
                parent.append(label)
                runs.append((int(idx[s]), int(idx[e]), label))
        for a0, a1, la in runs:
            for b0, b1, lb in prev_runs:
                if a0 <= b1 and b0 <= a1:
                    union(la, lb)
        prev_runs = runs
    return len({find(i) for i in range(len(parent))})


class Domain:
    """Rasterized region on a uniform lattice with a one-cell margin.

    Attributes:
        n: spatial dimension, 1 or 2.
        h: lattice spacing.
        origin: physical coordinate of the low corner of the lattice
            (the margin cells included), shape (n,).
        dims: lattice shape.
        inside: boolean array over the lattice, False on the outer ring.
        marks: named physical points of interest (reentrant corners,
            slit and cusp tips) set by the shape constructors.
    """

    def __init__(self, inside, h, origin, marks=None, check=True):
        inside = np.asarray(inside, bool)
        if inside.ndim not in (1, 2):
            raise GeometryError(f"only 1-d and 2-d lattices supported, got ndim={inside.ndim}")
        self.inside = inside
        self.n = inside.ndim
        self.h = float(h)
        self.origin = np.atleast_1d(np.asarray(origin, float))
        if self.origin.shape != (self.n,):
            raise GeometryError(f"origin must have shape ({self.n},)")
        self.dims = inside.shape
        self.marks = dict(marks or {})
        self._centers = None
        if check:
            self._validate()

    def _validate(self):
        if not self.inside.any():
            raise GeometryError("no inside cells")
        ring = np.ones(self.dims, bool)
        ring[(slice(1, -1),) * self.n] = False
        if (self.inside & ring).any():
            raise GeometryError("inside cells on the outer lattice ring; margin is missing")
        k = _component_count(self.inside)
        if k != 1:
            raise GeometryError(f"inside region has {k} connected components")

    # ----- constructors -------------------------------------------------

    @classmethod
    def _rasterize(cls, predicate, lo, hi, h, marks=None, carve=None):
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        m = [int(math.ceil((b - a) / h - _EDGE_TOL)) for a, b in zip(lo, hi)]
        dims = tuple(mi + 2 for mi in m)
        origin = lo - h
        dom = cls(np.zeros(dims, bool), h, origin, marks=marks, check=False)
        pts = dom.lattice_centers().reshape(-1, len(dims))
        ins = predicate(pts).reshape(dims)
        ring = np.ones(dims, bool)
        ring[(slice(1, -1),) * len(dims)] = False
        ins &= ~ring
        if carve is not None:
            ins &= ~carve(dom)
        return cls(ins, h, origin, marks=marks)

    @classmethod
    def interval(cls, a, b, h):
        """The open interval (a, b) on a lattice of spacing h."""
        if not b > a:
            raise GeometryError(f"empty interval ({a}, {b})")
        return cls._rasterize(lambda p: (p[:, 0] > a) & (p[:, 0] < b), [a], [b], h)

    @classmethod
    def rectangle(cls, lo, hi, h):
        """Axis-aligned open rectangle with corners lo, hi."""
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        if not np.all(hi > lo):
            raise GeometryError("rectangle corners must satisfy lo < hi componentwise")
        return cls._rasterize(lambda p: np.all((p > lo) & (p < hi), axis=1), lo, hi, h)

    @classmethod
    def disk(cls, center, radius, h):
        """Open disk (2-d) of given center and radius."""
        c = np.asarray(center, float)
        pred = lambda p: np.sum((p - c) ** 2, axis=1) < radius * radius
        return cls._rasterize(pred, c - radius, c + radius, h)

    @classmethod
    def l_shape(cls, h):
        """Unit square with the closed top-right quarter removed.

        The reentrant corner (0.5, 0.5) is recorded in marks["corner"].
        """
        pred = lambda p: (np.all((p > 0) & (p < 1), axis=1)
                          & ~((p[:, 0] >= 0.5) & (p[:, 1] >= 0.5)))
        return cls._rasterize(pred, [0, 0], [1, 1], h,
                              marks={"corner": np.array([0.5, 0.5])})

    @classmethod
    def disk_with_slit(cls, center, radius, h):
        """Open disk minus a one-cell horizontal slit from the center rightward.

        The slit tip (the disk center) is recorded in marks["tip"].
        """
        c = np.asarray(center, float)

        def carve(dom):
            pts = dom.lattice_centers()
            j0 = int(math.floor((c[1] - dom.origin[1]) / dom.h))
            row = np.zeros(dom.dims, bool)
            row[:, j0] = True
            return row & (pts[..., 0] >= c[0])

        pred = lambda p: np.sum((p - c) ** 2, axis=1) < radius * radius
        return cls._rasterize(pred, c - radius, c + radius, h,
                              marks={"tip": c.copy()}, carve=carve)

    @classmethod
    def square_with_cusp(cls, h):
        """Unit square minus the cusp region x1 >= 0.5, |x2 - 0.5| <= (x1 - 0.5)^2.

        The cusp tip (0.5, 0.5) is recorded in marks["tip"].
        """
        def pred(p):
            ins = np.all((p > 0) & (p < 1), axis=1)
            cusp = (p[:, 0] >= 0.5) & (np.abs(p[:, 1] - 0.5) <= (p[:, 0] - 0.5) ** 2)
            return ins & ~cusp

        return cls._rasterize(pred, [0, 0], [1, 1], h,
                              marks={"tip": np.array([0.5, 0.5])})

    @classmethod
    def from_mask(cls, inside, h, origin):
        """Wrap an explicit inside mask; the outer ring must already be False."""
        return cls(inside, h, origin)

    def with_inside(self, inside):
        """Same lattice, different inside set (for restriction arguments)."""
        return Domain(inside, self.h, self.origin, marks=self.marks)

    # ----- geometry queries ---------------------------------------------

    def lattice_centers(self):
        """Physical centers of all lattice cells, shape dims + (n,)."""
        if self._centers is None:
            axes = [self.origin[k] + (np.arange(self.dims[k]) + 0.5) * self.h
                    for k in range(self.n)]
            grids = np.meshgrid(*axes, indexing="ij")
            self._centers = np.stack(grids, axis=-1)
        return self._centers

    def centers_of(self, mask):
        return self.lattice_centers()[mask]

    def inside_cell_centers(self):
        return self.centers_of(self.inside)

    @property
    def halo_mask(self):
        """Non-inside cells face-adjacent to inside cells (where data must live)."""
        return dilate(self.inside) & ~self.inside

    @property
    def boundary_cell_mask(self):
        """Inside cells face-adjacent to non-inside cells."""
        return self.inside & dilate(~self.inside)

    def boundary_cell_centers(self):
        return self.centers_of(self.boundary_cell_mask)

    def bounding_diameter(self):
        """Diagonal of the physical bounding box of the inside cells."""
        idx = np.nonzero(self.inside)
        ext = [(idx[k].max() - idx[k].min() + 1) * self.h for k in range(self.n)]
        return math.sqrt(sum(e * e for e in ext))

    def cells_in_ball(self, center, radius):
        """Boolean lattice mask of cells whose centers lie in the closed ball."""
        c = np.atleast_1d(np.asarray(center, float))
        d2 = np.sum((self.lattice_centers() - c) ** 2, axis=-1)
        return d2 <= radius * radius * (1 + 1e-12)

    def is_inside_points(self, points):
        """Whether each physical point lies in an inside cell (closure convention:
        points on a low cell edge resolve into the cell above the edge)."""
        pts = np.atleast_2d(np.asarray(points, float))
        idx = np.floor((pts - self.origin) / self.h).astype(int)
        ok = np.all((idx >= 0) & (idx < np.array(self.dims)), axis=1)
        out = np.zeros(len(pts), bool)
        if ok.any():
            out[ok] = self.inside[tuple(idx[ok].T)]
        return out

    def _closure_corner_points(self):
        # corner (i) of the dual lattice is in the closure iff an adjacent cell is inside
        cdims = tuple(d + 1 for d in self.dims)
        adj = np.zeros(cdims, bool)
        pad = np.zeros(cdims, bool)
        for offs in np.ndindex(*(2,) * self.n):
            sl = tuple(slice(o, o + d) for o, d in zip(offs, self.dims))
            pad[:] = False
            pad[sl] = self.inside
            adj |= pad
        axes = [self.origin[k] + np.arange(cdims[k]) * self.h for k in range(self.n)]
        grids = np.meshgrid(*axes, indexing="ij")
        corners = np.stack(grids, axis=-1)
        return corners[adj]

    def closure_sample_points(self, cap=4096):
        """Deterministic sample of the closed region: inside centers plus the
        lattice corners touching an inside cell."""
        pts = np.concatenate([self.inside_cell_centers(), self._closure_corner_points()])
        if cap is not None and len(pts) > cap:
            keep = np.linspace(0, len(pts) - 1, cap).astype(int)
            pts = pts[keep]
        return pts

    def closure_sample_points_in_ball(self, center, radius, cap=None):
        pts = np.concatenate([self.inside_cell_centers(), self._closure_corner_points()])
        c = np.atleast_1d(np.asarray(center, float))
        d2 = np.sum((pts - c) ** 2, axis=1)
        pts = pts[d2 <= radius * radius * (1 + 1e-12)]
        if cap is not None and len(pts) > cap:
            keep = np.linspace(0, len(pts) - 1, cap).astype(int)
            pts = pts[keep]
        return pts

    # ----- serialization ------------------------------------------------

    def save(self, path):
        with open(path, "w") as fh:
            fh.write("orlicz-domain 1\n")
            _write_header(fh, self)
            _write_block(fh, "inside", self.inside.astype(int), "%d")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            kind, meta, blocks = _read_file(fh)
        if kind != "orlicz-domain":
            raise GeometryError(f"not a domain file: {path}")
        inside = blocks["inside"].astype(bool)
        return cls(inside, meta["h"], meta["origin"])


class ScalarField:
    """Values on a lattice with an explicit defined-mask.

    ``values`` covers the whole lattice; entries outside ``defined`` are
    kept at 0 and must never be read.
    """

    def __init__(self, domain, values, defined=None):
        self.domain = domain
        self.values = np.asarray(values, float).copy()
        if self.values.shape != domain.dims:
            raise GeometryError(f"values shape {self.values.shape} != lattice {domain.dims}")
        if defined is None:
            defined = np.ones(domain.dims, bool)
        self.defined = np.asarray(defined, bool).copy()
        self.values[~self.defined] = 0.0

    @classmethod
    def from_function(cls, domain, fn, where="all"):
        """Evaluate fn on cell centers; where selects all, inside, or inside+halo."""
        if where == "all":
            mask = np.ones(domain.dims, bool)
        elif where == "inside":
            mask = domain.inside.copy()
        elif where == "inside+halo":
            mask = domain.inside | domain.halo_mask
        else:
            raise ValueError(f"unknown region {where!r}")
        vals = np.zeros(domain.dims)
        pts = domain.centers_of(mask)
        vals[mask] = np.asarray(fn(pts), float)
        return cls(domain, vals, mask)

    @classmethod
    def constant(cls, domain, value, where="all"):
        return cls.from_function(domain, lambda p: np.full(len(p), float(value)), where)

    def copy(self):
        return ScalarField(self.domain, self.values, self.defined)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write("orlicz-field 1\n")
            _write_header(fh, self.domain)
            _write_block(fh, "inside", self.domain.inside.astype(int), "%d")
            _write_block(fh, "defined", self.defined.astype(int), "%d")
            _write_block(fh, "values", self.values, "%.17g")

    @classmethod
    def load(cls, path, domain=None):
        with open(path) as fh:
            kind, meta, blocks = _read_file(fh)
        if kind != "orlicz-field":
            raise GeometryError(f"not a field file: {path}")
        if domain is None:
            domain = Domain(blocks["inside"].astype(bool), meta["h"], meta["origin"])
        return cls(domain, blocks["values"], blocks["defined"].astype(bool))

    def to_csv(self, path):
        """Defined cells in row-major order, one line per cell."""
        dom = self.domain
        pts = dom.centers_of(self.defined)
        vals = self.values[self.defined]
        cols = [f"x{k + 1}" for k in range(dom.n)]
        with open(path, "w") as fh:
            fh.write(",".join(cols + ["value"]) + "\n")
            for p, v in zip(pts, vals):
                fh.write(",".join("%.17g" % c for c in p) + ",%.17g\n" % v)


def _write_header(fh, domain):
    fh.write(f"n {domain.n}\n")
    fh.write("dims " + " ".join(str(d) for d in domain.dims) + "\n")
    fh.write("h %.17g\n" % domain.h)
    fh.write("origin " + " ".join("%.17g" % c for c in domain.origin) + "\n")


def _write_block(fh, name, arr, fmt):
    fh.write(f"{name}\n")
    rows = arr if arr.ndim == 2 else arr[None, :]
    for row in rows:
        fh.write(" ".join(fmt % v for v in row) + "\n")


def _read_file(fh):
    first = fh.readline().split()
    kind = first[0] if first else ""
    meta = {}
    line = fh.readline().split()
    meta["n"] = int(line[1])
    line = fh.readline().split()
    dims = tuple(int(v) for v in line[1:])
    line = fh.readline().split()
    meta["h"] = float(line[1])
    line = fh.readline().split()
    meta["origin"] = np.array([float(v) for v in line[1:]])
    nrows = dims[0] if len(dims) == 2 else 1
    blocks = {}
    while True:
        name = fh.readline().strip()
        if not name:
            break
        rows = [np.array(fh.readline().split(), dtype=float) for _ in range(nrows)]
        arr = np.vstack(rows)
        blocks[name] = arr if len(dims) == 2 else arr[0]
    return kind, meta, blocks


# ----- calculus on fields ----------------------------------------------


def discrete_gradient(field):
    """One-sided difference quotients at inside cells, shape (n,) + dims.

    Along each axis: forward difference when the forward neighbor is
    defined, else backward difference, else zero.  Entries at non-inside
    cells are zero.
    """
    dom = field.domain
    v, d = field.values, field.defined
    h = dom.h
    grad = np.zeros((dom.n,) + dom.dims)
    for ax in range(dom.n):
        fwd_ok = d & shifted(d, ax, -1, False)
        bwd_ok = d & shifted(d, ax, 1, False)
        fwd = (shifted(v, ax, -1) - v) / h
        bwd = (v - shifted(v, ax, 1)) / h
        g = np.where(fwd_ok, fwd, np.where(bwd_ok, bwd, 0.0))
        grad[ax] = np.where(dom.inside, g, 0.0)
    return grad


def gradient_magnitude(field):
    g = discrete_gradient(field)
    return np.sqrt(np.sum(g * g, axis=0))


def modular(phi, field, region=None, exponent=1.0):
    """h^n sum over inside cells of phi(x_c, |v_c|)^exponent, optionally
    restricted by a boolean region mask."""
    dom = field.domain
    mask = dom.inside if region is None else (dom.inside & region)
    pts = dom.centers_of(mask)
    if len(pts) == 0:
        return 0.0
    vals = phi.eval(pts, np.abs(field.values[mask]))
    if exponent != 1.0:
        vals = vals ** exponent
    return float(dom.h ** dom.n * np.sum(vals))


def modular_of_values(phi, domain, mask, magnitudes, exponent=1.0):
    """Modular of a raw magnitude array (used for gradient integrands)."""
    pts = domain.centers_of(mask)
    if len(pts) == 0:
        return 0.0
    vals = phi.eval(pts, np.abs(magnitudes[mask]))
    if exponent != 1.0:
        vals = vals ** exponent
    return float(domain.h ** domain.n * np.sum(vals))


def luxemburg_norm(phi, field, region=None, rel_tol=1e-10):
    """inf{lam > 0 : modular(f/lam) <= 1} by bisection on the inverse scale."""
    dom = field.domain
    mask = dom.inside if region is None else (dom.inside & region)
    vals = np.abs(field.values[mask])
    if vals.size == 0 or vals.max() == 0.0:
        return 0.0
    pts = dom.centers_of(mask)
    weight = dom.h ** dom.n

    def rho_of_mu(mu):
        return weight * float(np.sum(phi.eval(pts, mu * vals)))

    mu_star = monotone_left_inverse(rho_of_mu, 1.0, 1.0 / vals.max(), rel_tol=rel_tol)
    return 1.0 / mu_star


def luxemburg_norm_of_values(phi, domain, mask, magnitudes, rel_tol=1e-10):
    f = ScalarField(domain, np.where(mask, magnitudes, 0.0), mask)
    return luxemburg_norm(phi, f, region=mask, rel_tol=rel_tol)


# ----- functional inequalities as sampled checks -----------------------


def _ball_mean(domain, mask, arr):
    return float(arr[mask].mean())


def sobolev_poincare_check(phi, field, center, radius, s=1.0, beta_grid=None):
    """Sampled Sobolev-Poincare inequality on one ball.

    Means are cell-count averages over the inside cells of the ball.  The
    field is prescaled so the gradient norm hypothesis holds; the report
    carries the scale used.  The witness is the largest constant beta from
    the grid for which

        mean phi(x, beta |v - v_B| / (2r)) <= (mean phi(x, |grad v|)^(1/s))^s + 1.
    """
    dom = field.domain
    ball = dom.cells_in_ball(center, radius) & dom.inside
    if not ball.any():
        raise GeometryError("ball contains no inside cells")
    betas = np.sort(default_beta_grid() if beta_grid is None else np.asarray(beta_grid, float))
    betas = np.unique(np.append(betas, 1.0))
    gmag = gradient_magnitude(field)
    gnorm = luxemburg_norm_of_values(_power_scaled(phi, 1.0 / s), dom, ball, gmag)
    scale = max(1.0, gnorm * (1 + 1e-9))
    v = field.values / scale
    gmag = gmag / scale
    pts = dom.centers_of(ball)
    vbar = float(v[ball].mean())
    count = int(ball.sum())
    rhs_mean = float(np.mean(phi.eval(pts, gmag[ball]) ** (1.0 / s)))
    rhs = rhs_mean ** s + 1.0
    dev = np.abs(v[ball] - vbar) / (2.0 * radius)
    report = ConditionReport("sobolev_poincare", False, None, None,
                             samples_checked=count,
                             extra={"center": np.asarray(center, float), "radius": radius,
                                    "scale": scale, "rhs": rhs, "s": s})
    for beta in betas[::-1]:
        lhs = float(np.mean(phi.eval(pts, beta * dev)))
        if lhs <= rhs * (1 + 1e-12):
            report.holds = True
            report.witness = float(beta)
            report.detail = f"lhs {lhs:.6g} <= rhs {rhs:.6g} at beta = {beta:.6g}"
            return report
    i = int(np.argmax(phi.eval(pts, betas[0] * dev)))
    report.violating_sample = (pts[i], float(betas[0] * dev[i]))
    report.detail = f"fails at smallest candidate beta = {betas[0]:.6g} (rhs {rhs:.6g})"
    return report


def jensen_check(phi, field, center, radius, beta_grid=None):
    """Sampled Jensen-type inequality on one ball.

    After prescaling the field into the unit ball of the modular, the
    witness is the largest beta with

        inf_B phi(x, beta mean |v|) <= mean phi(x, |v|) + 1.
    """
    dom = field.domain
    ball = dom.cells_in_ball(center, radius) & dom.inside
    if not ball.any():
        raise GeometryError("ball contains no inside cells")
    betas = np.sort(default_beta_grid() if beta_grid is None else np.asarray(beta_grid, float))
    betas = np.unique(np.append(betas, 1.0))
    vnorm = luxemburg_norm(phi, field, region=ball)
    scale = max(1.0, vnorm * (1 + 1e-9))
    v = np.abs(field.values) / scale
    pts = dom.centers_of(ball)
    mean_v = float(v[ball].mean())
    rhs = float(np.mean(phi.eval(pts, v[ball]))) + 1.0
    report = ConditionReport("jensen", False, None, None,
                             samples_checked=int(ball.sum()),
                             extra={"center": np.asarray(center, float), "radius": radius,
                                    "scale": scale, "rhs": rhs})
    for beta in betas[::-1]:
        lhs = float(np.min(phi.eval(pts, beta * mean_v)))
        if lhs <= rhs * (1 + 1e-12):
            report.holds = True
            report.witness = float(beta)
            report.detail = f"lhs {lhs:.6g} <= rhs {rhs:.6g} at beta = {beta:.6g}"
            return report
    report.violating_sample = (pts[int(np.argmin(phi.eval(pts, betas[0] * mean_v)))],
                               float(betas[0] * mean_v))
    report.detail = f"fails at smallest candidate beta = {betas[0]:.6g}"
    return report


def _power_scaled(phi, exponent):
    """The integrand phi(x, t)^exponent as a new evaluator (for norm hypotheses)."""
    if exponent == 1.0:
        return phi
    from .phi import PhiFunction

    fn = lambda pts, t: phi.eval(pts, t) ** exponent
    return PhiFunction.custom(fn, p_lower=phi.p_lower * exponent,
                              q_upper=phi.q_upper * exponent,
                              L=max(1.0, phi.L ** exponent))

"""Obstacle problems for generalized Orlicz energies on lattices.

The discrete energy is the midpoint modular of the forward-difference
gradient over inside cells, plus single-axis attachment terms for halo
cells whose forward neighbor is inside.  The attachment terms couple the
low-side boundary data into the objective the same way the inside terms
couple the high side, so affine data is reproduced exactly.  Reported
energies (``Solution.energy`` and the ``energy`` helper) contain the
inside-cell part only, evaluated without smoothing.

Minimization runs projected Barzilai-Borwein descent with Armijo
backtracking on the smoothed objective (|grad u| is replaced by
sqrt(|grad u|^2 + delta^2) with a tiny delta so non-quadratic integrands
stay differentiable at zero gradient).  Pure quadratic integrands take a
red-black projected SOR fast path instead.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import GeometryError, InfeasibleProblemError
from .grid import (ScalarField, discrete_gradient, modular_of_values, shifted)

_FEAS_TOL = 1e-12


@dataclasses.dataclass
class SolverOptions:
    """Knobs for ``solve``.

    gauss_seidel: "auto" and "on" run red-black projected SOR (linear
        updates for the quadratic power-2 integrand, cellwise Newton
        updates otherwise), "off" always runs the general descent.
    omega: SOR relaxation factor; None picks 2/(1+sin(pi h/extent)).
    smoothing: gradient smoothing delta; None picks 1e-8 times the data
        scale.  Ignored by the SOR path, where it only shifts the
        objective by a constant.
    """

    tol: float = 1e-9
    max_iters: int = 20000
    gauss_seidel: str = "auto"
    omega: float | None = None
    smoothing: float | None = None
    armijo: float = 1e-4
    track_history: bool = False


class ObstacleProblem:
    """Dirichlet obstacle problem on a Domain.

    boundary: ScalarField defined at least on the halo; its values there
        are the Dirichlet data.  obstacle: ScalarField or None; cells
        where the obstacle is undefined are unconstrained.  Admissibility
        requires obstacle <= boundary on the halo.
    """

    def __init__(self, domain, phi, obstacle, boundary):
        self.domain = domain
        self.phi = phi
        self.obstacle = obstacle
        self.boundary = boundary
        halo = domain.halo_mask
        if not boundary.defined[halo].all():
            missing = np.argwhere(halo & ~boundary.defined)[0]
            raise GeometryError(f"boundary data missing on halo cell {tuple(missing)}")
        if obstacle is not None and obstacle.values.shape != domain.dims:
            raise GeometryError("obstacle lives on a different lattice")
        scale = self.data_scale()
        if obstacle is not None:
            clash = halo & obstacle.defined & (obstacle.values - boundary.values
                                               > _FEAS_TOL * scale)
            if clash.any():
                cell = tuple(int(v) for v in np.argwhere(clash)[0])
                point = domain.lattice_centers()[cell]
                gap = float((obstacle.values - boundary.values)[clash].max())
                raise InfeasibleProblemError(
                    f"obstacle exceeds boundary data by {gap:.3g} on halo cell {cell}",
                    cell=cell, point=point)
        self._attach = []
        for ax in range(domain.n):
            fwd_inside = shifted(domain.inside, ax, -1, False)
            self._attach.append(~domain.inside & boundary.defined & fwd_inside)

    def data_scale(self):
        scale = 1.0
        vals = self.boundary.values[self.boundary.defined]
        if vals.size:
            scale = max(scale, float(np.abs(vals).max()))
        if self.obstacle is not None:
            ov = self.obstacle.values[self.obstacle.defined]
            if ov.size:
                scale = max(scale, float(np.abs(ov).max()))
        return scale

    def obstacle_floor(self):
        """Obstacle values as a full array, -inf where unconstrained."""
        floor = np.full(self.domain.dims, -np.inf)
        if self.obstacle is not None:
            floor[self.obstacle.defined] = self.obstacle.values[self.obstacle.defined]
        return floor

    def feasible_start(self):
        f = np.where(self.boundary.defined, self.boundary.values, 0.0)
        start = np.maximum(f, self.obstacle_floor())
        start[~np.isfinite(start)] = 0.0
        # halo stays pinned to the boundary data
        halo = self.domain.halo_mask
        start[halo] = self.boundary.values[halo]
        return start


@dataclasses.dataclass
class Solution:
    problem: ObstacleProblem
    u: ScalarField
    energy: float
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    contact: np.ndarray
    history: list = dataclasses.field(default_factory=list)


class _Objective:
    """Smoothed objective, gradient and pointwise residual for one problem."""

    def __init__(self, problem, delta):
        dom = problem.domain
        self.dom = dom
        self.delta = float(delta)
        self.inside = dom.inside
        self.attach = problem._attach
        centers = dom.lattice_centers()
        self.phi_inside = problem.phi.bind(centers[self.inside])
        self.phi_attach = [problem.phi.bind(centers[m]) for m in self.attach]
        self.hn = dom.h ** dom.n

    def _diffs(self, u):
        h = self.dom.h
        return [(shifted(u, ax, -1) - u) / h for ax in range(self.dom.n)]

    def value(self, u):
        g = self._diffs(u)
        m2 = self.delta ** 2
        msq = sum(gj ** 2 for gj in g)
        total = float(np.sum(self.phi_inside.eval(np.sqrt(msq[self.inside] + m2))))
        for ax, mask in enumerate(self.attach):
            if mask.any():
                total += float(np.sum(self.phi_attach[ax].eval(
                    np.sqrt(g[ax][mask] ** 2 + m2))))
        return self.hn * total

    def value_and_grad(self, u):
        dom = self.dom
        g = self._diffs(u)
        m2 = self.delta ** 2
        msq = sum(gj ** 2 for gj in g)
        m_in = np.sqrt(msq[self.inside] + m2)
        val = float(np.sum(self.phi_inside.eval(m_in)))
        # weight phi_t(m)/m per cell, merged into one lattice array per axis
        w = np.zeros(dom.dims)
        with np.errstate(invalid="ignore", divide="ignore"):
            w_in = np.where(m_in > 0, self.phi_inside.deriv(m_in) / np.where(m_in > 0, m_in, 1.0), 0.0)
        w[self.inside] = w_in
        wg = [w * gj for gj in g]
        for ax, mask in enumerate(self.attach):
            if not mask.any():
                continue
            ma = np.sqrt(g[ax][mask] ** 2 + m2)
            val += float(np.sum(self.phi_attach[ax].eval(ma)))
            with np.errstate(invalid="ignore", divide="ignore"):
                wa = np.where(ma > 0, self.phi_attach[ax].deriv(ma) / np.where(ma > 0, ma, 1.0), 0.0)
            wg[ax][mask] = wa * g[ax][mask]
        hmul = dom.h ** (dom.n - 1)
        grad = np.zeros(dom.dims)
        for ax in range(dom.n):
            grad += shifted(wg[ax], ax, 1) - wg[ax]
        grad *= hmul
        grad[~self.inside] = 0.0
        return self.hn * val, grad

    def kkt_residual(self, u, grad, floor):
        # residual of u = max(floor, u - grad / h^n) on inside cells
        step = grad / self.hn
        proj = np.maximum(floor, u - step)
        return float(np.abs((u - proj)[self.inside]).max())


def solve(problem, options=None, start=None):
    """Minimize the discrete energy over the admissible set.

    Returns a Solution; the halo of the returned field carries the
    boundary data, inside cells the minimizer.  The default iteration is
    red-black projected SOR (linear for the quadratic integrand, cellwise
    Newton otherwise); ``gauss_seidel="off"`` selects projected
    Barzilai-Borwein descent instead, whose achievable residual is
    limited by rounding in the global objective.
    """
    opts = options or SolverOptions()
    if opts.gauss_seidel not in ("auto", "on", "off"):
        raise ValueError(f"unknown gauss_seidel setting {opts.gauss_seidel!r}")
    phi = problem.phi
    quad = phi.family == "power" and phi.params.get("p") == 2.0
    use_sor = opts.gauss_seidel in ("auto", "on")

    dom = problem.domain
    floor = problem.obstacle_floor()
    if start is None:
        u = problem.feasible_start()
    else:
        u = np.array(start.values if isinstance(start, ScalarField) else start, float)
        if u.shape != dom.dims:
            raise GeometryError("start lives on a different lattice")
        halo = dom.halo_mask
        u[halo] = problem.boundary.values[halo]
        u = np.maximum(u, floor)
        u[~(dom.inside | problem.boundary.defined)] = 0.0

    if use_sor and quad:
        u, iters, converged, kkt, history = _solve_sor(problem, u, floor, opts)
    elif use_sor:
        u, iters, converged, kkt, history = _solve_newton_sor(problem, u, floor, opts)
    else:
        u, iters, converged, kkt, history = _solve_bb(problem, u, floor, opts)

    defined = dom.inside | problem.boundary.defined
    field = ScalarField(dom, u, defined)
    e = energy(problem, field)
    delta = _pick_delta(problem, opts)
    obj = _Objective(problem, delta).value(u)
    contact = np.zeros(dom.dims, bool)
    if problem.obstacle is not None:
        osc = 0.0
        ov = problem.obstacle.values[problem.obstacle.defined]
        if ov.size:
            osc = float(ov.max() - ov.min())
        gap_tol = 1e-7 * osc + 1e-12 * problem.data_scale()
        contact = dom.inside & problem.obstacle.defined & (u - floor <= gap_tol)
    return Solution(problem, field, e, obj, iters, converged, kkt, contact, history)


def _pick_delta(problem, opts):
    if opts.smoothing is not None:
        return opts.smoothing
    return 1e-8 * problem.data_scale()


def _solve_bb(problem, u, floor, opts):
    dom = problem.domain
    obj = _Objective(problem, _pick_delta(problem, opts))
    inside = dom.inside
    scale = problem.data_scale()
    history = []
    val, grad = obj.value_and_grad(u)
    gmax = np.abs(grad[inside]).max()
    alpha = 0.1 * scale * obj.hn / (gmax + 1e-300)
    prev_u = prev_grad = None
    kkt = np.inf
    iters = 0
    for iters in range(1, opts.max_iters + 1):
        kkt = obj.kkt_residual(u, grad, floor)
        if opts.track_history:
            history.append((iters - 1, val, kkt))
        if kkt <= opts.tol * scale:
            return u, iters - 1, True, kkt, history
        if prev_u is not None:
            s = (u - prev_u)[inside]
            y = (grad - prev_grad)[inside]
            sy = float(s @ y)
            if sy > 1e-300:
                if iters % 2 == 0:
                    alpha = float(s @ s) / sy
                else:
                    yy = float(y @ y)
                    alpha = sy / yy if yy > 1e-300 else alpha
        alpha = float(np.clip(alpha, 1e-14 * obj.hn, 1e14))
        prev_u, prev_grad, prev_val = u, grad, val
        step = alpha
        accepted = False
        for _ in range(60):
            cand = np.maximum(floor, u - step * grad)
            cand[~inside] = u[~inside]
            d = float((grad * (cand - u))[inside].sum())
            cval = obj.value(cand)
            if d >= 0.0:
                break
            if cval <= prev_val + opts.armijo * d:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # the projected arc yields no descent: numerically stationary
            return u, iters, kkt <= opts.tol * scale, kkt, history
        u = cand
        val, grad = obj.value_and_grad(u)
    kkt = obj.kkt_residual(u, grad, floor)
    return u, iters, kkt <= opts.tol * scale, kkt, history


def _sor_residual(u, floor, inside, nbr_sum, h):
    lap = (2.0 * u.ndim * u - nbr_sum(u)) * (2.0 / (h * h))
    proj = np.maximum(floor, u - lap)
    return float(np.abs((u - proj)[inside]).max())


def _solve_sor(problem, u, floor, opts):
    dom = problem.domain
    inside = dom.inside
    h = dom.h
    scale = problem.data_scale()
    omega = opts.omega
    if omega is None:
        idx = np.nonzero(inside)
        ext = max((idx[k].max() - idx[k].min() + 1) * h for k in range(dom.n))
        omega = 2.0 / (1.0 + np.sin(np.pi * h / ext))

    def nbr_sum(v):
        s = np.zeros_like(v)
        for ax in range(dom.n):
            s += shifted(v, ax, 1) + shifted(v, ax, -1)
        return s

    colors = []
    grids = np.indices(dom.dims)
    parity = np.zeros(dom.dims, int)
    for g in grids:
        parity += g
    colors = [inside & (parity % 2 == 0), inside & (parity % 2 == 1)]
    deg = 2.0 * dom.n
    history = []
    kkt = prev_kkt = np.inf
    sweeps = 0
    for sweeps in range(1, opts.max_iters + 1):
        for mask in colors:
            mean = nbr_sum(u) / deg
            upd = u + omega * (mean - u)
            u = np.where(mask, np.maximum(floor, upd), u)
        if sweeps % 20 == 0 or sweeps == opts.max_iters:
            kkt = _sor_residual(u, floor, inside, nbr_sum, h)
            if opts.track_history:
                history.append((sweeps, np.nan, kkt))
            if kkt <= opts.tol * scale:
                return u, sweeps, True, kkt, history
            # an overrelaxed stall shows as a flat residual; anneal gently
            # toward smaller omega, which damps the oscillatory modes
            if sweeps >= 100 and kkt > 0.97 * prev_kkt and omega > 1.05:
                omega = 1.0 + 0.985 * (omega - 1.0)
            prev_kkt = kkt
    kkt = _sor_residual(u, floor, inside, nbr_sum, h)
    return u, sweeps, kkt <= opts.tol * scale, kkt, history


class _LatticePhi:
    """phi_t and phi_tt addressed by flat lattice index, per-cell data cached."""

    def __init__(self, phi, domain):
        self.phi = phi
        self.family = phi.family
        pts = domain.lattice_centers().reshape(-1, domain.n)
        self.pts = pts
        if phi.family == "variable_exponent":
            self.P = np.asarray(phi.params["p_of_x"](pts), float)
        elif phi.family == "double_phase":
            self.A = np.asarray(phi.params["a_of_x"](pts), float)

    def dt(self, idx, m):
        fam = self.family
        if fam == "power":
            p = self.phi.params["p"]
            return p * m ** (p - 1.0)
        if fam == "variable_exponent":
            p = self.P[idx]
            return p * m ** (p - 1.0)
        if fam == "double_phase":
            p, q = self.phi.params["p"], self.phi.params["q"]
            return p * m ** (p - 1.0) + self.A[idx] * q * m ** (q - 1.0)
        return np.asarray(self.phi.deriv(self.pts[idx], m), float)

    def dtt(self, idx, m):
        fam = self.family
        if fam == "power":
            p = self.phi.params["p"]
            return p * (p - 1.0) * m ** (p - 2.0)
        if fam == "variable_exponent":
            p = self.P[idx]
            return p * (p - 1.0) * m ** (p - 2.0)
        if fam == "double_phase":
            p, q = self.phi.params["p"], self.phi.params["q"]
            return (p * (p - 1.0) * m ** (p - 2.0)
                    + self.A[idx] * q * (q - 1.0) * m ** (q - 2.0))
        return np.asarray(self.phi.deriv2(self.pts[idx], m), float)


def _solve_newton_sor(problem, u, floor, opts):
    """Red-black projected SOR with a cellwise Newton local solve.

    Each cell update minimizes the energy in that single unknown with all
    neighbors frozen: a strictly convex scalar problem whose minimizer
    lies between the extreme neighbor values.  A few clipped Newton steps
    resolve it; overrelaxation then extrapolates and the obstacle
    projection is applied last.
    """
    dom = problem.domain
    n, h = dom.n, dom.h
    dims = dom.dims
    delta = max(_pick_delta(problem, opts), 1e-300)
    lphi = _LatticePhi(problem.phi, dom)
    objective = _Objective(problem, delta)
    inside_flat = dom.inside.ravel()
    floor_flat = floor.ravel()
    strides = [int(np.prod(dims[ax + 1:], dtype=int)) for ax in range(n)]
    parity = np.zeros(dims, int)
    for g in np.indices(dims):
        parity += g
    colors = [np.flatnonzero((dom.inside & (parity % 2 == c)).ravel()) for c in (0, 1)]
    colors = [c for c in colors if c.size]
    scale = problem.data_scale()
    omega = opts.omega
    if omega is None:
        idx = np.nonzero(dom.inside)
        ext = max((idx[k].max() - idx[k].min() + 1) * h for k in range(n))
        omega = 2.0 / (1.0 + np.sin(np.pi * h / ext))

    uf = u.ravel().copy()
    d2 = delta * delta
    history = []
    kkt = prev_kkt = np.inf
    sweeps = 0
    for sweeps in range(1, opts.max_iters + 1):
        for cells in colors:
            # frozen one-sided differences and full squared magnitudes
            ushape = uf.reshape(dims)
            gs = [((shifted(ushape, ax, -1) - ushape) / h).ravel() for ax in range(n)]
            msq = sum(g * g for g in gs)
            ups = [uf[cells + strides[ax]] for ax in range(n)]
            los = [uf[cells - strides[ax]] for ax in range(n)]
            r2s = []
            for ax in range(n):
                k = cells - strides[ax]
                r2s.append(np.where(inside_flat[k],
                                    np.maximum(msq[k] - gs[ax][k] ** 2, 0.0), 0.0))
            lo_b = np.minimum.reduce(ups + los)
            hi_b = np.maximum.reduce(ups + los)
            t = np.clip(uf[cells], lo_b, hi_b)
            for _ in range(3):
                F = np.zeros(len(cells))
                Fp = np.zeros(len(cells))
                s_c = np.zeros(len(cells))
                Qc = np.full(len(cells), d2)
                for ax in range(n):
                    dc = (t - ups[ax]) / h
                    s_c += dc
                    Qc += dc * dc
                m = np.sqrt(Qc)
                pt = lphi.dt(cells, m)
                ptt = lphi.dtt(cells, m)
                mp = s_c / (h * m)
                mpp = n / (h * h * m) - (s_c / h) ** 2 / m ** 3
                F += pt * mp
                Fp += ptt * mp * mp + pt * mpp
                for ax in range(n):
                    k = cells - strides[ax]
                    d = (t - los[ax]) / h
                    m = np.sqrt(d2 + r2s[ax] + d * d)
                    pt = lphi.dt(k, m)
                    ptt = lphi.dtt(k, m)
                    mp = d / (h * m)
                    mpp = (1.0 - d * d / (m * m)) / (h * h * m)
                    F += pt * mp
                    Fp += ptt * mp * mp + pt * mpp
                step = np.where(Fp > 0, F / np.where(Fp > 0, Fp, 1.0), 0.0)
                t = np.clip(t - step, lo_b, hi_b)
            new = uf[cells] + omega * (t - uf[cells])
            uf[cells] = np.maximum(floor_flat[cells], new)
        if sweeps % 10 == 0 or sweeps == opts.max_iters:
            u = uf.reshape(dims)
            _, grad = objective.value_and_grad(u)
            kkt = objective.kkt_residual(u, grad, floor)
            if opts.track_history:
                history.append((sweeps, np.nan, kkt))
            if kkt <= opts.tol * scale:
                return u, sweeps, True, kkt, history
            if sweeps >= 100 and kkt > 0.97 * prev_kkt and omega > 1.05:
                omega = 1.0 + 0.985 * (omega - 1.0)
            prev_kkt = kkt
    u = uf.reshape(dims)
    _, grad = objective.value_and_grad(u)
    kkt = objective.kkt_residual(u, grad, floor)
    return u, sweeps, kkt <= opts.tol * scale, kkt, history


def energy(problem, field):
    """Inside-cell modular of the discrete gradient magnitude, no smoothing."""
    dom = problem.domain
    g = discrete_gradient(field)
    mag = np.sqrt(np.sum(g * g, axis=0))
    return modular_of_values(problem.phi, dom, dom.inside, mag)


def full_objective(problem, field, smoothing=0.0):
    """The minimized functional (inside terms plus halo attachments) at a
    given smoothing level; the capacity of a set is this value at its
    equilibrium potential."""
    values = field.values if isinstance(field, ScalarField) else np.asarray(field, float)
    return _Objective(problem, smoothing).value(values)


@dataclasses.dataclass
class CheckResult:
    holds: bool
    gap: float
    max_deviation: float
    detail: str = ""


def local_min_restriction_check(solution, region, tol=1e-7):
    """Re-solve on a subregion with the solution as its own boundary data.

    The restriction of a minimizer is a minimizer of the restricted
    problem; the check passes when the re-solve cannot improve the energy
    by more than tol (absolute, scaled by the data).
    """
    problem = solution.problem
    dom = problem.domain
    sub_inside = region & dom.inside
    if not sub_inside.any():
        raise GeometryError("restriction region contains no inside cells")
    sub = dom.with_inside(sub_inside)
    bnd = ScalarField(dom, solution.u.values, solution.u.defined.copy())
    sub_problem = ObstacleProblem(sub, problem.phi, problem.obstacle, bnd)
    resolved = solve(sub_problem, SolverOptions(tol=1e-10))
    obj = _Objective(sub_problem, 0.0)
    own = obj.value(solution.u.values)
    gap = own - resolved.objective
    dev = float(np.abs((resolved.u.values - solution.u.values)[sub_inside]).max())
    scale = problem.data_scale()
    holds = gap <= tol * scale
    return CheckResult(holds, gap, dev,
                       f"restriction energy {own:.6g}, re-solved {resolved.objective:.6g}")


def comparison_check(problem_low, problem_high, tol=1e-6):
    """Solve two ordered problems and test u_low <= u_high pointwise.

    Preconditions (raised as ValueError when violated): same lattice and
    integrand, strictly convex integrand, obstacle_low <= obstacle_high
    where both are defined, boundary_low <= boundary_high on the halo.
    """
    p1, p2 = problem_low, problem_high
    if p1.domain.dims != p2.domain.dims or not np.array_equal(p1.domain.inside,
                                                              p2.domain.inside):
        raise ValueError("comparison needs both problems on the same domain")
    if p1.phi is not p2.phi:
        raise ValueError("comparison needs a shared integrand")
    if not p1.phi.strictly_convex:
        raise ValueError("comparison needs a strictly convex integrand")
    f1, f2 = p1.boundary.values, p2.boundary.values
    halo = p1.domain.halo_mask
    if np.any((f1 - f2)[halo] > _FEAS_TOL * p1.data_scale()):
        raise ValueError("boundary data is not ordered on the halo")
    o1, o2 = p1.obstacle_floor(), p2.obstacle_floor()
    both = np.isfinite(o1) & np.isfinite(o2)
    if np.any(o1[both] - o2[both] > _FEAS_TOL * p1.data_scale()) or \
            np.any(np.isfinite(o1) & ~np.isfinite(o2) & p1.domain.inside):
        raise ValueError("obstacles are not ordered")
    s1 = solve(p1, SolverOptions(tol=1e-10))
    s2 = solve(p2, SolverOptions(tol=1e-10))
    excess = float((s1.u.values - s2.u.values)[p1.domain.inside].max())
    return CheckResult(excess <= tol, excess,
                       excess, f"max(u_low - u_high) = {excess:.3g}")

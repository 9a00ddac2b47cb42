"""Weak Phi-function families and structural growth-condition checks.

A weak Phi-function assigns to every point x a nondecreasing profile
t -> phi(x, t) with phi(x, 0) = 0 and phi(x, t)/t almost increasing.  The
families implemented here are the standard model integrands:

    power               t^p
    orlicz              a single x-independent profile given by samples,
                        evaluated by log-log linear interpolation
    variable_exponent   t^p(x)
    double_phase        t^p + a(x) t^q
    custom              any vectorized evaluator

Growth is tracked through three declared parameters: ``p_lower`` (the
profile divided by t^p_lower is almost increasing), ``q_upper`` (divided
by t^q_upper it is almost decreasing) and the constant ``L`` appearing in
both statements.  These powers also bound search brackets for inversion
and norm bisections.

The ``check_*`` functions at the bottom are sampling-based certificates:
they evaluate phi on explicit point and scale grids and report witnesses
or concrete violating samples.  They never prove anything symbolically;
grids are part of the contract.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import NotInvertibleError

_REL_SLACK = 1e-12  # float slack for the <= comparisons in condition checks


def default_beta_grid():
    """Dyadic candidate grid for the normalization constants: 1 - 2^-k, k = 1..10."""
    return np.array([1.0 - 0.5 ** k for k in range(1, 11)])


@dataclasses.dataclass
class ConditionReport:
    """Outcome of one structural-condition check.

    ``witness`` is the certified constant: the largest working beta for the
    normalization conditions, the smallest admissible constant for the
    almost-monotonicity checks.  ``violating_sample`` is an ``(x, t)`` pair
    (``t`` may itself be an ``(s, t)`` pair for two-scale violations) chosen
    so that re-evaluating phi there reproduces the failure.  ``extra``
    carries check-specific context such as the offending ball.
    """

    condition: str
    holds: bool
    witness: float | None
    violating_sample: tuple | None
    samples_checked: int
    skipped: int = 0
    detail: str = ""
    extra: dict = dataclasses.field(default_factory=dict)

    def __str__(self):
        state = "holds" if self.holds else "FAILS"
        w = "" if self.witness is None else f", witness={self.witness:.6g}"
        s = f" ({self.skipped} skipped)" if self.skipped else ""
        return f"[{self.condition}] {state}{w}, {self.samples_checked} samples{s}. {self.detail}".rstrip()


class PhiFunction:
    """One generalized Orlicz integrand phi(x, t).

    Instances are immutable by convention: construct through the
    classmethods and treat all attributes as read-only.
    """

    def __init__(self, family, params, p_lower, q_upper, L=1.0,
                 strictly_convex=False, support=None):
        if not (0 < p_lower <= q_upper):
            raise ValueError(f"need 0 < p_lower <= q_upper, got ({p_lower}, {q_upper})")
        if L < 1.0:
            raise ValueError(f"growth constant L must be >= 1, got {L}")
        self.family = family
        self.params = params
        self.p_lower = float(p_lower)
        self.q_upper = float(q_upper)
        self.L = float(L)
        self.strictly_convex = bool(strictly_convex)
        self.support = None
        if support is not None:
            lo, hi = support
            self.support = (np.atleast_1d(np.asarray(lo, float)),
                            np.atleast_1d(np.asarray(hi, float)))

    # ----- constructors -------------------------------------------------

    @classmethod
    def power(cls, p):
        """phi(x, t) = t^p, x-independent."""
        if p <= 0:
            raise ValueError(f"power exponent must be positive, got {p}")
        return cls("power", {"p": float(p)}, p_lower=p, q_upper=p,
                   strictly_convex=p > 1.0)

    @classmethod
    def orlicz_from_samples(cls, ts, values, L=None, strictly_convex=False):
        """x-independent profile through sample points, log-log interpolated.

        Samples must be strictly positive and strictly increasing in both
        coordinates; outside the sampled range the boundary segments are
        extended with their own slopes.  Growth exponents default to the
        extreme log-log slopes of the sample (for which L = 1 is exact on
        the interpolant).
        """
        ts = np.asarray(ts, float)
        vals = np.asarray(values, float)
        if ts.ndim != 1 or ts.shape != vals.shape or ts.size < 2:
            raise ValueError("need two 1-d sample arrays of equal length >= 2")
        if not (np.all(ts > 0) and np.all(vals > 0)):
            raise ValueError("samples must be strictly positive (phi(0)=0 is implicit)")
        if not (np.all(np.diff(ts) > 0) and np.all(np.diff(vals) > 0)):
            raise ValueError("samples must be strictly increasing")
        log_t = np.log(ts)
        log_v = np.log(vals)
        slopes = np.diff(log_v) / np.diff(log_t)
        params = {"log_t": log_t, "log_v": log_v, "slopes": slopes}
        return cls("orlicz", params,
                   p_lower=float(slopes.min()), q_upper=float(slopes.max()),
                   L=1.0 if L is None else L, strictly_convex=strictly_convex)

    @classmethod
    def variable_exponent(cls, p_of_x, p_lower, q_upper, support=None):
        """phi(x, t) = t^p(x) with a vectorized exponent field p: points -> [p_lower, q_upper]."""
        return cls("variable_exponent", {"p_of_x": p_of_x},
                   p_lower=p_lower, q_upper=q_upper,
                   strictly_convex=p_lower > 1.0, support=support)

    @classmethod
    def double_phase(cls, p, q, a_of_x, support=None):
        """phi(x, t) = t^p + a(x) t^q with a vectorized weight a >= 0."""
        if not p <= q:
            raise ValueError(f"double phase needs p <= q, got ({p}, {q})")
        return cls("double_phase", {"p": float(p), "q": float(q), "a_of_x": a_of_x},
                   p_lower=p, q_upper=q, strictly_convex=p > 1.0, support=support)

    @classmethod
    def custom(cls, fn, p_lower, q_upper, L, strictly_convex=False,
               derivative=None, support=None):
        """Arbitrary evaluator fn(points, t) with self-declared growth data."""
        return cls("custom", {"fn": fn, "deriv": derivative},
                   p_lower=p_lower, q_upper=q_upper, L=L,
                   strictly_convex=strictly_convex, support=support)

    @property
    def x_dependent(self):
        return self.family in ("variable_exponent", "double_phase", "custom")

    # ----- evaluation ---------------------------------------------------

    def _check_args(self, pts, t):
        if np.any(t < 0):
            raise ValueError("phi is defined for t >= 0 only")
        if self.support is not None and pts is not None:
            lo, hi = self.support
            if np.any(pts < lo) or np.any(pts > hi):
                raise ValueError("point outside the declared support of the x-dependent data")

    def _points(self, x):
        if x is None:
            return None
        pts = np.asarray(x, float)
        if pts.ndim == 1:
            pts = pts[None, :]
        return pts

    def eval(self, x, t):
        """Vectorized phi(x, t).

        ``x`` is a point (n,) or an (m, n) array (ignored by x-independent
        families but still range-checked); ``t`` broadcasts against (m,).
        """
        pts = self._points(x)
        t = np.asarray(t, float)
        self._check_args(pts, t)
        fam = self.family
        if fam == "power":
            out = t ** self.params["p"]
        elif fam == "orlicz":
            out = self._orlicz_eval(t)
        elif fam == "variable_exponent":
            p = np.asarray(self.params["p_of_x"](pts), float)
            out = np.broadcast_to(t, np.broadcast_shapes(p.shape, t.shape)).astype(float) ** p
        elif fam == "double_phase":
            a = np.asarray(self.params["a_of_x"](pts), float)
            out = t ** self.params["p"] + a * t ** self.params["q"]
        else:
            out = np.asarray(self.params["fn"](pts, t), float)
        return out

    def _orlicz_eval(self, t):
        log_t, log_v, slopes = (self.params["log_t"], self.params["log_v"],
                                self.params["slopes"])
        t = np.asarray(t, float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        out = np.zeros_like(tt)
        pos = tt > 0
        if pos.any():
            lt = np.log(tt[pos])
            k = np.clip(np.searchsorted(log_t, lt) - 1, 0, len(slopes) - 1)
            out[pos] = np.exp(log_v[k] + slopes[k] * (lt - log_t[k]))
        return out[0] if scalar else out

    def deriv(self, x, t):
        """d phi/dt, analytic per family (central difference for custom evaluators)."""
        pts = self._points(x)
        t = np.asarray(t, float)
        self._check_args(pts, t)
        fam = self.family
        if fam == "power":
            p = self.params["p"]
            return p * t ** (p - 1.0)
        if fam == "orlicz":
            slope = self._orlicz_slope(t)
            with np.errstate(invalid="ignore", divide="ignore"):
                d = np.where(t > 0, slope * self._orlicz_eval(t) / np.where(t > 0, t, 1.0), 0.0)
            return d
        if fam == "variable_exponent":
            p = np.asarray(self.params["p_of_x"](pts), float)
            return p * t ** (p - 1.0)
        if fam == "double_phase":
            p, q = self.params["p"], self.params["q"]
            a = np.asarray(self.params["a_of_x"](pts), float)
            return p * t ** (p - 1.0) + a * q * t ** (q - 1.0)
        if self.params.get("deriv") is not None:
            return np.asarray(self.params["deriv"](pts, t), float)
        step = np.maximum(1e-7 * np.maximum(t, 1e-30), 1e-12)
        lo = np.maximum(t - step, 0.0)
        return (self.eval(x, t + step) - self.eval(x, lo)) / (t + step - lo)

    def deriv2(self, x, t):
        """d^2 phi/dt^2 (numeric for custom evaluators; may diverge at t=0
        for sublinear-derivative families, callers keep t away from zero)."""
        pts = self._points(x)
        t = np.asarray(t, float)
        self._check_args(pts, t)
        fam = self.family
        if fam == "power":
            p = self.params["p"]
            return p * (p - 1.0) * t ** (p - 2.0)
        if fam == "orlicz":
            s = self._orlicz_slope(t)
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(t > 0, s * (s - 1.0) * self._orlicz_eval(t)
                                / np.where(t > 0, t, 1.0) ** 2, 0.0)
        if fam == "variable_exponent":
            p = np.asarray(self.params["p_of_x"](pts), float)
            return p * (p - 1.0) * t ** (p - 2.0)
        if fam == "double_phase":
            p, q = self.params["p"], self.params["q"]
            a = np.asarray(self.params["a_of_x"](pts), float)
            return (p * (p - 1.0) * t ** (p - 2.0)
                    + a * q * (q - 1.0) * t ** (q - 2.0))
        step = np.maximum(1e-5 * np.maximum(t, 1e-30), 1e-9)
        return (self.deriv(x, t + step) - self.deriv(x, np.maximum(t - step, 0.0))) \
            / (t + step - np.maximum(t - step, 0.0))

    def _orlicz_slope(self, t):
        log_t, slopes = self.params["log_t"], self.params["slopes"]
        tt = np.atleast_1d(np.asarray(t, float))
        k = np.clip(np.searchsorted(log_t, np.log(np.where(tt > 0, tt, 1.0))) - 1,
                    0, len(slopes) - 1)
        s = slopes[k]
        return s[0] if np.asarray(t).ndim == 0 else s

    def bind(self, points):
        """Freeze the x-dependence on a fixed point set for repeated t-evaluation."""
        return _BoundPhi(self, self._points(points))

    # ----- inversion ----------------------------------------------------

    def left_inverse(self, x, tau, rel_tol=1e-13):
        """Smallest t with phi(x, t) >= tau, by bracketed bisection.

        Raises NotInvertibleError when tau exceeds the reachable range
        (bounded profiles).
        """
        if tau < 0:
            raise ValueError("left inverse is defined for tau >= 0")
        if tau == 0:
            return 0.0
        f = lambda t: float(np.max(self.eval(x, t)))
        guess = max(tau ** (1.0 / self.p_lower), tau ** (1.0 / self.q_upper), 1e-12)
        return monotone_left_inverse(f, tau, guess, rel_tol=rel_tol)


def monotone_left_inverse(f, tau, guess, rel_tol=1e-13):
    """inf{t >= 0 : f(t) >= tau} for a nondecreasing scalar f with f(0) <= 0 < tau."""
    hi = max(guess, 1e-300)
    grew = 0
    while f(hi) < tau:
        hi *= 2.0
        grew += 1
        if hi > 1e160:
            raise NotInvertibleError(f"profile never reaches {tau!r}; not invertible there")
    lo = hi
    while True:
        cand = lo / 2.0
        if cand < 1e-300:
            return 0.0
        if f(cand) < tau:
            lo = cand
            break
        lo = cand
    # invariant: f(lo) < tau <= f(hi)
    for _ in range(200):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) >= tau:
            hi = mid
        else:
            lo = mid
    return hi


class _BoundPhi:
    """phi with x frozen on a point set: t-arrays in, value arrays out."""

    def __init__(self, phi, pts):
        self.phi = phi
        self.pts = pts
        fam = phi.family
        self._a = self._p = None
        if fam == "variable_exponent":
            self._p = np.asarray(phi.params["p_of_x"](pts), float)
        elif fam == "double_phase":
            self._a = np.asarray(phi.params["a_of_x"](pts), float)

    def eval(self, t):
        fam = self.phi.family
        if fam == "variable_exponent":
            return np.asarray(t, float) ** self._p
        if fam == "double_phase":
            p, q = self.phi.params["p"], self.phi.params["q"]
            t = np.asarray(t, float)
            return t ** p + self._a * t ** q
        return self.phi.eval(self.pts, t)

    def deriv(self, t):
        fam = self.phi.family
        if fam == "variable_exponent":
            return self._p * np.asarray(t, float) ** (self._p - 1.0)
        if fam == "double_phase":
            p, q = self.phi.params["p"], self.phi.params["q"]
            t = np.asarray(t, float)
            return p * t ** (p - 1.0) + self._a * q * t ** (q - 1.0)
        return self.phi.deriv(self.pts, t)

    def deriv2(self, t):
        fam = self.phi.family
        if fam == "variable_exponent":
            return self._p * (self._p - 1.0) * np.asarray(t, float) ** (self._p - 2.0)
        if fam == "double_phase":
            p, q = self.phi.params["p"], self.phi.params["q"]
            t = np.asarray(t, float)
            return (p * (p - 1.0) * t ** (p - 2.0)
                    + self._a * q * (q - 1.0) * t ** (q - 2.0))
        return self.phi.deriv2(self.pts, t)


def _eval_outer(phi, pts, ts):
    """phi evaluated on the full (point, scale) product grid; returns (len(pts), len(ts))."""
    m, T = len(pts), len(ts)
    tiled = np.repeat(pts, T, axis=0)
    tt = np.tile(ts, m)
    return phi.eval(tiled, tt).reshape(m, T)


def validate_weak_phi(phi, domain, t_grid=None, max_points=512):
    """Sampled axiom check: phi(x,0)=0, nondecreasing in t, phi(x,t)/t almost increasing.

    Returns a list of human-readable violation strings (empty when the
    sampled axioms hold).
    """
    if t_grid is None:
        t_grid = np.geomspace(1e-4, 1e4, 49)
    pts = domain.closure_sample_points(max_points)
    out = []
    z = phi.eval(pts, 0.0)
    if np.any(np.abs(z) > 1e-300):
        i = int(np.argmax(np.abs(z)))
        out.append(f"phi(x, 0) != 0 at x={pts[i]}")
    vals = _eval_outer(phi, pts, t_grid)
    if np.any(vals < 0):
        out.append("phi takes negative values on the sample grid")
    dec = vals[:, 1:] - vals[:, :-1]
    bad = dec < -_REL_SLACK * np.abs(vals[:, :-1])
    if bad.any():
        i, j = np.unravel_index(np.argmax(bad), bad.shape)
        out.append(f"phi decreasing in t near x={pts[i]}, t={t_grid[j + 1]:.4g}")
    ratios = vals / t_grid
    need = np.maximum.accumulate(ratios, axis=1) / np.where(ratios > 0, ratios, np.inf)
    worst = float(np.nanmax(need))
    if worst > phi.L * (1 + 1e-9):
        out.append(f"phi(x,t)/t not almost increasing with declared L={phi.L} "
                   f"(needs {worst:.4g})")
    return out


# ----- structural condition checks -------------------------------------


def check_a0(phi, domain, beta_grid=None):
    """Uniform normalization: some beta in (0,1) with sup_x phi(x,beta) <= 1 <= inf_x phi(x,1/beta).

    Sampling runs over the closure sample set of the domain.  Returns the
    largest working beta from the candidate grid.
    """
    betas = default_beta_grid() if beta_grid is None else np.sort(np.asarray(beta_grid, float))
    pts = domain.closure_sample_points()
    report = ConditionReport("A0", False, None, None, samples_checked=len(pts))
    for beta in betas[::-1]:
        lo = phi.eval(pts, beta)
        hi = phi.eval(pts, 1.0 / beta)
        if lo.max() <= 1.0 + _REL_SLACK and hi.min() >= 1.0 - _REL_SLACK:
            report.holds = True
            report.witness = float(beta)
            report.detail = f"sup phi(x, beta) = {lo.max():.6g}, inf phi(x, 1/beta) = {hi.min():.6g}"
            return report
    # both sides of the condition are most lenient at the smallest candidate
    beta = float(betas[0])
    lo = np.broadcast_to(np.asarray(phi.eval(pts, beta)), (len(pts),))
    hi = np.broadcast_to(np.asarray(phi.eval(pts, 1.0 / beta)), (len(pts),))
    if lo.max() > 1.0:
        i = int(np.argmax(lo))
        report.violating_sample = (pts[i], beta)
        report.detail = f"phi(x, {beta:.6g}) = {lo[i]:.6g} > 1 at every candidate beta"
    else:
        i = int(np.argmin(hi))
        report.violating_sample = (pts[i], 1.0 / beta)
        report.detail = f"phi(x, {1 / beta:.6g}) = {hi[i]:.6g} < 1 at every candidate beta"
    return report


def check_ainc_adec(phi, domain, exponent, variant, t_grid=None, max_points=1024):
    """Almost-monotonicity of phi(x,t)/t^exponent against the declared constant L.

    ``variant`` is "inc" (almost increasing) or "dec" (almost decreasing).
    The witness is the smallest admissible constant on the sampled grid;
    the check holds when it does not exceed the declared phi.L.
    """
    if variant not in ("inc", "dec"):
        raise ValueError(f"variant must be 'inc' or 'dec', got {variant!r}")
    if t_grid is None:
        t_grid = np.geomspace(1e-4, 1e4, 81)
    t_grid = np.asarray(t_grid, float)
    pts = domain.closure_sample_points(max_points)
    vals = _eval_outer(phi, pts, t_grid)
    ratios = vals / t_grid ** exponent
    if variant == "inc":
        # ratio(s) <= L ratio(t) for s <= t: compare running max against now
        envelope = np.maximum.accumulate(ratios, axis=1)
        need = envelope / ratios
    else:
        # ratio(t) <= L ratio(s) for s <= t
        envelope = np.minimum.accumulate(ratios, axis=1)
        need = ratios / envelope
    name = "aInc" if variant == "inc" else "aDec"
    worst = float(np.max(need))
    report = ConditionReport(name, worst <= phi.L * (1 + 1e-9), worst, None,
                             samples_checked=ratios.size,
                             detail=f"exponent {exponent}, declared L = {phi.L}")
    if not report.holds:
        i, j = np.unravel_index(int(np.argmax(need)), need.shape)
        if variant == "inc":
            s_idx = int(np.argmax(ratios[i, :j + 1]))
        else:
            s_idx = int(np.argmin(ratios[i, :j + 1]))
        report.violating_sample = (pts[i], (float(t_grid[s_idx]), float(t_grid[j])))
        report.detail += (f"; ratio({t_grid[s_idx]:.4g}) vs ratio({t_grid[j]:.4g}) "
                          f"needs L >= {worst:.4g}")
    return report


def ball_volume(n, r):
    """Volume of the n-ball (n = 1 or 2)."""
    if n == 1:
        return 2.0 * r
    if n == 2:
        return math.pi * r * r
    raise ValueError(f"unsupported dimension {n}")


def dyadic_ball_sampler(domain, num_radii=4, max_boundary_centers=12,
                        max_interior_centers=6, min_radius=None):
    """Default ball family for the two-scale checks.

    Radii halve dyadically from a quarter of the domain diameter down to
    (by default) twice the grid spacing; centers are a deterministic
    subsample of boundary cells plus a few interior cells, so balls reach
    every boundary feature at several scales.
    """
    if min_radius is None:
        min_radius = 2.0 * domain.h
    r = domain.bounding_diameter() / 4.0
    radii = []
    while r >= min_radius and len(radii) < num_radii:
        radii.append(r)
        r /= 2.0
    if not radii:
        radii = [min_radius]
    centers = []
    bpts = domain.boundary_cell_centers()
    step = max(1, len(bpts) // max_boundary_centers)
    centers.extend(bpts[::step])
    ipts = domain.inside_cell_centers()
    step = max(1, len(ipts) // max_interior_centers)
    centers.extend(ipts[::step])
    return [(np.asarray(c, float), rad) for rad in radii for c in centers]


def check_a1(phi, domain, ball_sampler=None, mode="A1", beta_grid=None, t_points=24):
    """Two-scale uniformity: one beta making sup_B phi(., beta t) <= inf_B phi(., t).

    For each sampled ball B the comparison runs over t in [1, T(B)] where
    T(B) is the left inverse of inf_B phi at 1/|B| (mode "A1") or
    1/diam(B) (mode "A1n").  Point sampling inside each ball uses cell
    centers plus closure corners, so weights degenerating on rasterized
    edges are seen exactly.  A single beta must work for every ball; the
    witness is the largest such candidate.
    """
    if mode not in ("A1", "A1n"):
        raise ValueError(f"mode must be 'A1' or 'A1n', got {mode!r}")
    betas = default_beta_grid() if beta_grid is None else np.sort(np.asarray(beta_grid, float))
    balls = list(dyadic_ball_sampler(domain) if ball_sampler is None else ball_sampler)
    report = ConditionReport(mode, True, None, None, samples_checked=0)
    cand_idx = len(betas) - 1  # candidates only ever move down (monotone in beta)
    binding = None
    for center, radius in balls:
        if radius < domain.h:
            report.skipped += 1
            continue
        pts = domain.closure_sample_points_in_ball(center, radius)
        if len(pts) == 0:
            report.skipped += 1
            continue
        report.samples_checked += 1
        if mode == "A1":
            target = 1.0 / ball_volume(domain.n, radius)
            fmin = lambda t: float(np.min(phi.eval(pts, t)))
            try:
                t_max = monotone_left_inverse(fmin, target, max(target, 1.0), rel_tol=1e-10)
            except NotInvertibleError:
                report.skipped += 1
                continue
        else:
            t_max = 1.0 / (2.0 * radius)
        if t_max <= 1.0:
            continue  # empty scale range: ball constrains nothing
        ts = np.geomspace(1.0, t_max, t_points)
        ts[-1] = t_max
        inf_vals = _eval_outer(phi, pts, ts).min(axis=0)
        while cand_idx >= 0:
            beta = betas[cand_idx]
            sup_vals = _eval_outer(phi, pts, beta * ts).max(axis=0)
            bad = sup_vals > inf_vals * (1 + _REL_SLACK)
            if not bad.any():
                break
            j = int(np.argmax(sup_vals - inf_vals))
            binding = (center, radius, float(ts[j]), float(beta),
                       float(sup_vals[j]), float(inf_vals[j]), pts)
            cand_idx -= 1
        if cand_idx < 0:
            report.holds = False
            center, radius, t_bad, beta, lhs, rhs, bpts = binding
            i = int(np.argmax(phi.eval(bpts, beta * t_bad)))
            report.violating_sample = (bpts[i], t_bad)
            report.extra = {"center": center, "radius": radius, "beta": beta,
                            "t": t_bad, "sup": lhs, "inf": rhs}
            report.detail = (f"ball at {np.array2string(center, precision=4)} r={radius:.4g}: "
                             f"sup phi(., {beta:.4g} t) = {lhs:.4g} > inf phi(., t) = {rhs:.4g} "
                             f"at t = {t_bad:.4g} for every candidate beta")
            return report
    report.witness = float(betas[cand_idx])
    report.detail = f"single beta works for all {report.samples_checked} sampled balls"
    return report

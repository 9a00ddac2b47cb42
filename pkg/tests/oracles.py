"""Independent optimizers used as test oracles.

Both routes assemble the 1-D chain objective from scratch and minimize
it with third-party solvers (cvxopt interior point, scipy L-BFGS-B), so
agreement with the package's projected iterations is a genuine
cross-check and not a tautology.
"""

import numpy as np


def chain_layout(problem):
    """Indices of the 1-D chain: left halo, inside run, right halo."""
    dom = problem.domain
    if dom.n != 1:
        raise ValueError("chain oracles are one-dimensional")
    inside = np.flatnonzero(dom.inside)
    if np.any(np.diff(inside) != 1):
        raise ValueError("oracle expects a single contiguous run")
    return inside[0] - 1, inside, inside[-1] + 1


def qp_obstacle_1d(problem):
    """cvxopt QP for the quadratic chain with an obstacle.

    minimize (1/h) sum (u_{k+1} - u_k)^2 over the chain links with both
    halo values pinned, subject to u >= obstacle on inside cells.
    Returns the inside values.
    """
    from cvxopt import matrix, solvers, spmatrix

    left, inside, right = chain_layout(problem)
    f = problem.boundary.values
    fa, fb = f[left], f[right]
    m = len(inside)
    h = problem.domain.h
    main = np.full(m, 4.0 / h)
    off = np.full(m - 1, -2.0 / h)
    P = spmatrix(
        np.concatenate([main, off, off]),
        np.concatenate([np.arange(m), np.arange(1, m), np.arange(m - 1)]),
        np.concatenate([np.arange(m), np.arange(m - 1), np.arange(1, m)]),
    )
    q = np.zeros(m)
    q[0] = -2.0 * fa / h
    q[-1] = -2.0 * fb / h
    if problem.obstacle is None:
        psi = np.full(m, -1e8)
    else:
        psi = problem.obstacle.values[inside].astype(float)
        psi = np.where(problem.obstacle.defined[inside], psi, -1e8)
    G = spmatrix(-np.ones(m), np.arange(m), np.arange(m))
    opts = dict(solvers.options)
    solvers.options.update({"show_progress": False, "abstol": 1e-12,
                            "reltol": 1e-12, "feastol": 1e-12})
    try:
        res = solvers.qp(P, matrix(q), G, matrix(-psi))
    finally:
        solvers.options.clear()
        solvers.options.update(opts)
    assert res["status"] == "optimal", res["status"]
    return np.asarray(res["x"]).ravel()


def _phi_eval_1d(phi, xs, t):
    pts = xs[:, None]
    return phi.eval(pts, t)


def lbfgsb_obstacle_1d(problem, delta=1e-12, factr=10.0):
    """scipy bound-constrained minimizer for a general 1-D chain.

    The integrand is evaluated through the problem's own phi (the
    formulas are shared) but descent directions, line search, and the
    active set all come from L-BFGS-B.  Returns the inside values.
    """
    from scipy.optimize import minimize

    left, inside, right = chain_layout(problem)
    dom = problem.domain
    h = dom.h
    f = problem.boundary.values
    centers = dom.lattice_centers()[:, 0]
    cell_idx = np.concatenate([[left], inside])
    xs = centers[cell_idx]

    def assemble(z):
        u = np.concatenate([[f[left]], z, [f[right]]])
        d = np.diff(u) / h
        return u, d

    def objective(z):
        _, d = assemble(z)
        mvals = np.sqrt(d * d + delta * delta)
        return h * float(np.sum(_phi_eval_1d(problem.phi, xs, mvals)))

    def gradient(z):
        _, d = assemble(z)
        mvals = np.sqrt(d * d + delta * delta)
        w = problem.phi.deriv(xs[:, None], mvals) * (d / mvals)
        return w[:-1] - w[1:]

    if problem.obstacle is None:
        lo = np.full(len(inside), -np.inf)
    else:
        lo = np.where(problem.obstacle.defined[inside],
                      problem.obstacle.values[inside], -np.inf)
    z0 = np.maximum(problem.boundary.values[inside], lo)
    res = minimize(objective, z0, jac=gradient, method="L-BFGS-B",
                   bounds=list(zip(lo, [np.inf] * len(inside))),
                   options={"ftol": factr * np.finfo(float).eps,
                            "gtol": 1e-12, "maxiter": 5000})
    return res.x

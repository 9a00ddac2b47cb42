"""Shared problem builders for the unit and acceptance tests."""

import numpy as np

from orlicz.grid import Domain, ScalarField
from orlicz.phi import PhiFunction
from orlicz.solver import ObstacleProblem


def reentrant_corner_profile(x, amplitude=1.0):
    """Harmonic profile on the L-shape, singular gradient at (0.5, 0.5).

    Vanishes on both edges of the reentrant corner; the angular window
    [pi/2, 2 pi] sweeps the three quadrants the domain occupies around
    the corner.
    """
    dx = x[..., 0] - 0.5
    dy = x[..., 1] - 0.5
    rho = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    theta = np.where(theta < 0.5 * np.pi - 1e-12, theta + 2.0 * np.pi, theta)
    # directions through the carved quadrant are clipped to the zero
    # edge value so halo cells there carry continuous data
    ang = np.clip((2.0 / 3.0) * (theta - 0.5 * np.pi), 0.0, np.pi)
    return amplitude * rho ** (2.0 / 3.0) * np.sin(ang)


def lshape_corner_problem(h, amplitude=1.0, extra=None, obstacle=None):
    """Power-2 problem on the L-shape with corner-singular boundary data."""
    dom = Domain.l_shape(h)
    phi = PhiFunction.power(2.0)

    def data(x):
        vals = reentrant_corner_profile(x, amplitude)
        if extra is not None:
            vals = vals + extra(x)
        return vals

    f = ScalarField.from_function(dom, data)
    psi = None
    if obstacle is not None:
        psi = ScalarField.from_function(dom, obstacle, where="inside")
    return ObstacleProblem(dom, phi, psi, f)


def far_bump_disk_problem(h, bump_width=0.12, obstacle_height=0.30):
    """Disk with boundary data concentrated opposite the probe point (1, 0).

    The data is an angular bump at angle pi, so near (1, 0) the datum is
    flat at 0 and the solution decays toward it; a gentle interior
    obstacle keeps the instance a genuine constrained problem.
    """
    dom = Domain.disk((0.0, 0.0), 1.0, h)

    def data_angular(x):
        theta = np.arctan2(x[..., 1], x[..., 0])
        ang = np.abs(np.abs(theta) - np.pi)
        return np.exp(-ang ** 2 / (2.0 * bump_width ** 2))

    f = ScalarField.from_function(dom, data_angular)

    def obstacle(x):
        d2 = (x[..., 0] + 0.5) ** 2 + x[..., 1] ** 2
        return obstacle_height * np.exp(-d2 / (2.0 * 0.15 ** 2))

    psi = ScalarField.from_function(dom, obstacle, where="inside")
    phi = PhiFunction.power(2.0)
    return ObstacleProblem(dom, phi, psi, f)

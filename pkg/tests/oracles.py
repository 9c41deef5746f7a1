"""Independent oracles used across the test suite.

The polygon monomial integral comes from the divergence theorem with the
edge integrals expanded binomially in closed form, so it shares no code
path with the fan/ear-clipping quadrature it is used to check.
"""

import math

import numpy as np


def polygon_monomial_integral(verts, a, b):
    """Exact integral of x^a y^b over a CCW polygon via Green's theorem."""
    total = 0.0
    n = len(verts)
    for e in range(n):
        x0, y0 = verts[e]
        x1, y1 = verts[(e + 1) % n]
        dx, dy = x1 - x0, y1 - y0
        acc = 0.0
        for i in range(a + 2):
            ci = math.comb(a + 1, i) * x0 ** (a + 1 - i) * dx ** i
            for j in range(b + 1):
                cj = math.comb(b, j) * y0 ** (b - j) * dy ** j
                acc += ci * cj / (i + j + 1)
        total += acc * dy
    return total / (a + 1)


def polygon_area_exact(verts):
    return polygon_monomial_integral(verts, 0, 0)


def scaled_monomial_integral(verts, centroid, diameter, a, b):
    """Exact integral of ((x-xc)/h)^a ((y-yc)/h)^b over the polygon."""
    shifted = (np.asarray(verts) - np.asarray(centroid)) / diameter
    # integral over original coordinates = h^2 * integral over scaled coords
    return polygon_monomial_integral(shifted, a, b) * diameter ** 2


def fd_gradient(f, x, y, h=1e-6):
    return ((f(x + h, y) - f(x - h, y)) / (2 * h),
            (f(x, y + h) - f(x, y - h)) / (2 * h))


def fd_laplacian(f, x, y, h=1e-5):
    return (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h)
            - 4.0 * f(x, y)) / h ** 2

"""Scaled monomial bases and quadrature rules on polygons and edges.

Monomials on a polygon K are ((x - x_K) / h_K)^beta with x_K the area
centroid and h_K the diameter, ordered graded-lexicographically with the
first exponent descending within each total degree.  Edge monomials are
((s - s_mid) / h_e)^j in arclength.  Polygon quadrature is built by
sub-triangulation (centroid fan on convex cells, ear clipping otherwise)
with a conical-product Gauss rule on each triangle, so any requested
exactness degree is available.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


class GeometryError(ValueError):
    """Degenerate or self-intersecting polygon input."""


# ---------------------------------------------------------------------------
# polygon geometry helpers
# ---------------------------------------------------------------------------

def signed_area(verts):
    """Shoelace signed area; positive for counterclockwise loops."""
    x = verts[:, 0]
    y = verts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def polygon_centroid(verts):
    """Area centroid via the shoelace formula."""
    x = verts[:, 0]
    y = verts[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    if abs(a) < 1e-300:
        raise GeometryError("polygon has zero area")
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def polygon_diameter(verts):
    """Maximum pairwise vertex distance."""
    diff = verts[:, None, :] - verts[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def is_convex(verts):
    """True when every interior turn is a (weak) left turn."""
    d = np.roll(verts, -1, axis=0) - verts
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    tol = -1e-14 * np.max(np.abs(d)) ** 2
    return bool(np.all(cross >= tol))


def _segments_intersect(p1, p2, q1, q2):
    # Proper intersection test for open segments (shared endpoints excluded).
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        scale = max(abs(b[0] - a[0]), abs(b[1] - a[1]), abs(c[0] - a[0]), abs(c[1] - a[1]), 1.0)
        if abs(v) < 1e-14 * scale * scale:
            return 0
        return 1 if v > 0 else -1

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def is_simple(verts):
    """True when no two non-adjacent edges intersect."""
    n = len(verts)
    for i in range(n):
        a1, a2 = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = verts[j], verts[(j + 1) % n]
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True


def validate_polygon(verts):
    verts = np.asarray(verts, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
        raise GeometryError("polygon needs at least 3 two-dimensional vertices")
    edge_len = np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)
    if np.any(edge_len <= 1e-14 * polygon_diameter(verts)):
        raise GeometryError("polygon has a zero-length edge")
    a = signed_area(verts)
    if abs(a) <= 1e-14 * polygon_diameter(verts) ** 2:
        raise GeometryError("polygon has zero area")
    if not is_simple(verts):
        raise GeometryError("polygon is self-intersecting")
    return verts


def _ear_clip(verts):
    """Triangulate a simple polygon (CCW) into index triples by ear clipping."""
    n = len(verts)
    idx = list(range(n))
    tris = []

    def cross(i, j, k):
        a, b, c = verts[i], verts[j], verts[k]
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def inside(pt, a, b, c):
        def s(u, v):
            return (v[0] - u[0]) * (pt[1] - u[1]) - (v[1] - u[1]) * (pt[0] - u[0])
        d1, d2, d3 = s(a, b), s(b, c), s(c, a)
        return not ((d1 < 0 or d2 < 0 or d3 < 0) and (d1 > 0 or d2 > 0 or d3 > 0))

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 4 * n * n:
            raise GeometryError("ear clipping failed; polygon may not be simple")
        m = len(idx)
        clipped = False
        for p in range(m):
            i, j, k = idx[p - 1], idx[p], idx[(p + 1) % m]
            if cross(i, j, k) <= 0:
                continue
            if any(inside(verts[q], verts[i], verts[j], verts[k])
                   for q in idx if q not in (i, j, k)):
                continue
            tris.append((i, j, k))
            idx.pop(p)
            clipped = True
            break
        if not clipped:
            raise GeometryError("ear clipping found no ear; polygon may not be simple")
    tris.append(tuple(idx))
    return tris


def triangulate_polygon(verts):
    """Return (nt, 3, 2) triangle corner array covering the polygon.

    Convex cells use a centroid fan; nonconvex simple cells fall back to
    ear clipping so the sub-triangles never leave the polygon.
    """
    verts = validate_polygon(verts)
    if signed_area(verts) < 0:
        raise GeometryError("polygon must be counterclockwise")
    if is_convex(verts):
        c = polygon_centroid(verts)
        n = len(verts)
        tris = np.empty((n, 3, 2))
        for i in range(n):
            tris[i, 0] = c
            tris[i, 1] = verts[i]
            tris[i, 2] = verts[(i + 1) % n]
        return tris
    triples = _ear_clip(verts)
    return np.array([[verts[i], verts[j], verts[k]] for i, j, k in triples])


# ---------------------------------------------------------------------------
# scaled monomial bases
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def monomial_exponents(order):
    """Graded-lexicographic exponents: within degree d, first exponent descends."""
    return tuple((d - i, i) for d in range(order + 1) for i in range(d + 1))


@dataclass(frozen=True)
class ScaledMonomialBasis:
    order: int
    centroid: np.ndarray
    diameter: float

    @property
    def count(self):
        return (self.order + 1) * (self.order + 2) // 2

    @property
    def exponents(self):
        return np.array(monomial_exponents(self.order))


@dataclass(frozen=True)
class EdgeMonomialBasis:
    order: int          # -1 means the empty set M_{-1} = {0}
    midpoint: float
    length: float

    @property
    def count(self):
        return max(self.order + 1, 0)


def build_element_basis(verts, order):
    """Scaled monomial basis on a polygon: ((x - x_K)/h_K)^beta."""
    if order < 0:
        raise ValueError("order must be >= 0")
    verts = validate_polygon(np.asarray(verts, dtype=float))
    return ScaledMonomialBasis(order=order,
                               centroid=polygon_centroid(verts),
                               diameter=polygon_diameter(verts))


def eval_basis(basis, points, derivative_order=0):
    """Evaluate all basis members (or their gradients / Hessians) at points.

    Returns (np, nb) values, (np, nb, 2) gradients, or (np, nb, 3) Hessian
    entries ordered (xx, xy, yy).
    """
    if derivative_order not in (0, 1, 2):
        raise ValueError("derivative_order must be 0, 1 or 2")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    h = basis.diameter
    xi = (pts[:, 0] - basis.centroid[0]) / h
    eta = (pts[:, 1] - basis.centroid[1]) / h
    k = basis.order
    # Power tables padded on the left so exponent e maps to column e + 2;
    # the two pad columns are zero, which the vanishing derivative
    # coefficients rely on.
    px = np.zeros((len(pts), k + 3))
    py = np.zeros((len(pts), k + 3))
    px[:, 2] = 1.0
    py[:, 2] = 1.0
    for e in range(1, k + 1):
        px[:, e + 2] = px[:, e + 1] * xi
        py[:, e + 2] = py[:, e + 1] * eta
    exps = basis.exponents
    a = exps[:, 0]
    b = exps[:, 1]
    if derivative_order == 0:
        return px[:, a + 2] * py[:, b + 2]
    if derivative_order == 1:
        out = np.empty((len(pts), len(exps), 2))
        out[:, :, 0] = (a / h) * px[:, a + 1] * py[:, b + 2]
        out[:, :, 1] = (b / h) * px[:, a + 2] * py[:, b + 1]
        return out
    out = np.empty((len(pts), len(exps), 3))
    out[:, :, 0] = (a * (a - 1) / h ** 2) * px[:, a] * py[:, b + 2]
    out[:, :, 1] = (a * b / h ** 2) * px[:, a + 1] * py[:, b + 1]
    out[:, :, 2] = (b * (b - 1) / h ** 2) * px[:, a + 2] * py[:, b]
    return out


def derivative_operators(basis):
    """Coefficient maps (Dx, Dy): Dx @ c holds the coefficients of d/dx."""
    exps = basis.exponents
    index = {(int(p), int(q)): i for i, (p, q) in enumerate(exps)}
    n = len(exps)
    h = basis.diameter
    dx = np.zeros((n, n))
    dy = np.zeros((n, n))
    for i, (p, q) in enumerate(exps):
        if p > 0:
            dx[index[(p - 1, q)], i] = p / h
        if q > 0:
            dy[index[(p, q - 1)], i] = q / h
    return dx, dy


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int


@lru_cache(maxsize=None)
def gauss01(n):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _jacobi01(n):
    # Nodes/weights for int_0^1 (1 - t) f(t) dt.
    x, w = roots_jacobi(n, 1.0, 0.0)
    return (x + 1.0) / 2.0, w / 4.0


@lru_cache(maxsize=None)
def _reference_triangle_rule(degree):
    # Conical-product rule on the reference triangle (0,0),(1,0),(0,1);
    # exact for total degree <= degree.
    n = degree // 2 + 1
    xi, wxi = gauss01(n)
    eta, weta = _jacobi01(n)
    X = np.outer(xi, 1.0 - eta).ravel()
    Y = np.tile(eta, n)
    W = np.outer(wxi, weta).ravel()
    return np.column_stack([X, Y]), W


def triangle_quadrature(tri, degree):
    """Rule on an arbitrary triangle given as (3, 2) corner array."""
    ref_pts, ref_w = _reference_triangle_rule(degree)
    v0, v1, v2 = np.asarray(tri, dtype=float)
    jac = np.column_stack([v1 - v0, v2 - v0])
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    pts = ref_pts @ jac.T + v0
    return pts, ref_w * abs(det)


def polygon_quadrature(verts, degree):
    """Quadrature on a simple polygon, exact for polynomials up to degree."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    tris = triangulate_polygon(verts)
    pts = []
    wts = []
    for tri in tris:
        p, w = triangle_quadrature(tri, degree)
        pts.append(p)
        wts.append(w)
    return QuadratureRule(points=np.vstack(pts), weights=np.concatenate(wts),
                          exactness_degree=degree)


def edge_quadrature(edge, degree):
    """Gauss rule on a straight segment given as (2, 2) endpoint array."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    p0, p1 = np.asarray(edge, dtype=float)
    n = degree // 2 + 1
    t, w = gauss01(n)
    pts = p0 + t[:, None] * (p1 - p0)
    length = float(np.linalg.norm(p1 - p0))
    return QuadratureRule(points=pts, weights=w * length, exactness_degree=2 * n - 1)

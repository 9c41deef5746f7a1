"""Generators for the four mesh families and the Gamma-shaped domain.

Resolution means cells per unit length, so the structured families on the
unit square have grid spacing 1/resolution.  All generators are
deterministic: same (kind, resolution, seed) gives an identical mesh.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Voronoi

from .mesh import MeshError, PolygonalMesh

KINDS = ("triangular", "distorted_quad", "concave_quad", "voronoi_cvt",
         "gamma_triangular")
DOMAINS = ("unit_square", "gamma")

LLOYD_SWEEPS = 50


class UnsupportedMeshError(MeshError):
    """Family template cannot tile the requested domain."""


@dataclass(frozen=True)
class MeshFamily:
    kind: str
    resolution: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mesh family {self.kind!r}; choose from {KINDS}")
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")


def generate(family, domain="unit_square"):
    """Build the requested mesh family on the unit square or Gamma domain."""
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; choose from {DOMAINS}")
    kind, r = family.kind, family.resolution
    if domain == "unit_square":
        if kind == "triangular":
            return _crisscross_unit_square(r)
        if kind == "distorted_quad":
            return _distorted_quads(r, lo=0.0)
        if kind == "concave_quad":
            return _concave_quads(r)
        if kind == "voronoi_cvt":
            return _voronoi_cvt(r, family.seed)
        raise UnsupportedMeshError(f"{kind} cannot tile the unit square")
    # gamma domain
    if kind in ("gamma_triangular", "triangular"):
        return _crisscross_gamma(r)
    if kind == "distorted_quad":
        return _distorted_quads(r, lo=-1.0, gamma=True)
    raise UnsupportedMeshError(f"{kind} cannot tile the Gamma-shaped domain")


# ---------------------------------------------------------------------------
# structured families
# ---------------------------------------------------------------------------

def _grid_vertices(n, lo, hi):
    s = np.linspace(lo, hi, n + 1)
    X, Y = np.meshgrid(s, s, indexing="ij")
    return X, Y


def _in_removed_quadrant(cx, cy):
    # Gamma domain is (-1,1)^2 minus the quadrant x > 0, y < 0.
    return cx > 0.0 and cy < 0.0


def _crisscross_cells(squares, vid, verts):
    """Split each square (i, j) into 4 triangles through its center vertex."""
    cells = []
    centers = {}
    for (i, j) in squares:
        corner = [vid[(i, j)], vid[(i + 1, j)], vid[(i + 1, j + 1)], vid[(i, j + 1)]]
        c = (verts[corner[0]] + verts[corner[2]]) / 2.0
        key = (i, j)
        centers[key] = len(verts)
        verts.append(c)
        m = centers[key]
        cells.append([corner[0], corner[1], m])
        cells.append([corner[1], corner[2], m])
        cells.append([corner[2], corner[3], m])
        cells.append([corner[3], corner[0], m])
    return cells


def _crisscross_unit_square(n):
    X, Y = _grid_vertices(n, 0.0, 1.0)
    verts = [np.array([X[i, j], Y[i, j]]) for i in range(n + 1) for j in range(n + 1)]
    vid = {(i, j): i * (n + 1) + j for i in range(n + 1) for j in range(n + 1)}
    squares = [(i, j) for i in range(n) for j in range(n)]
    cells = _crisscross_cells(squares, vid, verts)
    return PolygonalMesh(np.array(verts), cells)


def _crisscross_gamma(n):
    # Grid of spacing 1/n over (-1,1)^2 with the removed quadrant dropped.
    m = 2 * n
    X, Y = _grid_vertices(m, -1.0, 1.0)
    keep_square = {}
    for i in range(m):
        for j in range(m):
            cx = (X[i, j] + X[i + 1, j]) / 2.0
            cy = (Y[i, j] + Y[i, j + 1]) / 2.0
            keep_square[(i, j)] = not _in_removed_quadrant(cx, cy)
    used = sorted({(i, j) for (si, sj), k in keep_square.items() if k
                   for i in (si, si + 1) for j in (sj, sj + 1)})
    vid = {}
    verts = []
    for (i, j) in used:
        vid[(i, j)] = len(verts)
        verts.append(np.array([X[i, j], Y[i, j]]))
    squares = [sq for sq, k in keep_square.items() if k]
    cells = _crisscross_cells(squares, vid, verts)
    return PolygonalMesh(np.array(verts), cells)


def _distorted_quads(n, lo=0.0, gamma=False):
    """Tensor quad grid with sinusoidal perturbation of the interior vertices.

    Amplitude is 0.1/n, with fixed incommensurate phases so the distortion
    never degenerates on grid points; boundary vertices stay put, which on
    the Gamma domain includes the re-entrant edges.
    """
    hi = 1.0
    m = n if not gamma else 2 * n
    X, Y = _grid_vertices(m, lo, hi)
    keep_square = {}
    for i in range(m):
        for j in range(m):
            cx = (X[i, j] + X[i + 1, j]) / 2.0
            cy = (Y[i, j] + Y[i, j + 1]) / 2.0
            keep_square[(i, j)] = (not gamma) or not _in_removed_quadrant(cx, cy)

    used = sorted({(i, j) for (si, sj), k in keep_square.items() if k
                   for i in (si, si + 1) for j in (sj, sj + 1)})
    # a grid vertex is on the mesh boundary iff not surrounded by 4 kept squares
    def interior(i, j):
        return all(keep_square.get((si, sj), False)
                   for si in (i - 1, i) for sj in (j - 1, j))

    amp = 0.1 / n
    vid = {}
    verts = []
    for (i, j) in used:
        x, y = X[i, j], Y[i, j]
        if interior(i, j):
            dx = amp * np.sin(2.0 * np.pi * x + 1.3) * np.sin(2.0 * np.pi * y + 2.1)
            dy = amp * np.sin(2.0 * np.pi * x + 2.6) * np.sin(2.0 * np.pi * y + 0.7)
            x, y = x + dx, y + dy
        vid[(i, j)] = len(verts)
        verts.append(np.array([x, y]))
    cells = [[vid[(i, j)], vid[(i + 1, j)], vid[(i + 1, j + 1)], vid[(i, j + 1)]]
             for (i, j), k in sorted(keep_square.items()) if k]
    return PolygonalMesh(np.array(verts), cells)


def _concave_quads(n):
    """Each grid square is cut by the polyline corner->Z->opposite corner,
    with Z pushed off the diagonal so one of the two quadrilaterals is
    nonconvex.  Fixed template, no randomness."""
    X, Y = _grid_vertices(n, 0.0, 1.0)
    vid = {(i, j): i * (n + 1) + j for i in range(n + 1) for j in range(n + 1)}
    verts = [np.array([X[i, j], Y[i, j]]) for i in range(n + 1) for j in range(n + 1)]
    s = 1.0 / n
    cells = []
    for i in range(n):
        for j in range(n):
            a = vid[(i, j)]
            b = vid[(i + 1, j)]
            c = vid[(i + 1, j + 1)]
            d = vid[(i, j + 1)]
            z = len(verts)
            verts.append(verts[a] + np.array([0.7 * s, 0.3 * s]))
            cells.append([a, z, c, d])      # convex quad
            cells.append([a, b, c, z])      # reflex corner at z
    return PolygonalMesh(np.array(verts), cells)


# ---------------------------------------------------------------------------
# centroidal Voronoi tessellation
# ---------------------------------------------------------------------------

def _mirror_points(pts):
    left = pts * [-1.0, 1.0]
    right = pts * [-1.0, 1.0] + [2.0, 0.0]
    bottom = pts * [1.0, -1.0]
    top = pts * [1.0, -1.0] + [0.0, 2.0]
    return np.vstack([pts, left, right, bottom, top])


def _clipped_voronoi_cells(pts):
    """Voronoi cells of pts clipped to the unit square via boundary mirroring.

    Returns (vor.vertices, list of vertex-index loops), one loop per seed.
    """
    vor = Voronoi(_mirror_points(pts))
    loops = []
    for i in range(len(pts)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshError("unbounded Voronoi region; seeds degenerate")
        loop = np.array(region, dtype=int)
        poly = vor.vertices[loop]
        area = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1)
                            - np.roll(poly[:, 0], -1) * poly[:, 1])
        if area < 0:
            loop = loop[::-1]
        loops.append(loop)
    return vor.vertices, loops


def _loop_centroid(poly):
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def _voronoi_cvt(r, seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((r * r, 2))
    if len(pts) == 1:
        # a single generator tiles the square with itself
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        return PolygonalMesh(verts, [[0, 1, 2, 3]])
    for _ in range(LLOYD_SWEEPS):
        vverts, loops = _clipped_voronoi_cells(pts)
        pts = np.array([_loop_centroid(vverts[lp]) for lp in loops])
    vverts, loops = _clipped_voronoi_cells(pts)
    # snap coordinates onto the square boundary and merge duplicates,
    # keeping only Voronoi vertices actually referenced by a cell
    snapped = vverts.copy()
    for val in (0.0, 1.0):
        for d in (0, 1):
            hit = np.abs(snapped[:, d] - val) < 1e-9
            snapped[hit, d] = val
    key_of = {}
    remap = {}
    new_verts = []
    for lp in loops:
        for i in lp:
            if int(i) in remap:
                continue
            v = snapped[i]
            key = (round(v[0], 9), round(v[1], 9))
            if key not in key_of:
                key_of[key] = len(new_verts)
                new_verts.append(v)
            remap[int(i)] = key_of[key]
    cells = []
    for lp in loops:
        cell = []
        for i in lp:
            vi = remap[int(i)]
            if not cell or cell[-1] != vi:
                cell.append(vi)
        if cell[0] == cell[-1]:
            cell.pop()
        cells.append(cell)
    return PolygonalMesh(np.array(new_verts), cells)

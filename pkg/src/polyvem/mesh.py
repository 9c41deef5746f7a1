"""Polygonal mesh representation, topology, diagnostics and ASCII file format.

Interior edges carry a fixed global orientation: the direction in which the
lower-indexed adjacent cell traverses them, with the global edge normal
pointing out of that cell.  All degree-of-freedom functionals downstream are
written against this orientation so assembly needs no sign bookkeeping.
"""

import warnings

import numpy as np

from .polybasis import (GeometryError, polygon_centroid, polygon_diameter,
                        signed_area, validate_polygon)


class MeshError(Exception):
    pass


class MeshFormatError(MeshError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MeshValidationError(MeshError):
    pass


class NonManifoldError(MeshError):
    pass


class PolygonalMesh:
    """Conforming decomposition of a planar domain into simple polygons.

    Immutable after construction; all topology and per-cell geometry is
    derived in __init__.
    """

    def __init__(self, vertices, cells, reorient=False):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshValidationError("vertices must be an (n, 2) array")
        nv = len(self.vertices)
        self.cells = []
        for ci, cell in enumerate(cells):
            idx = np.asarray(cell, dtype=int)
            if len(idx) < 3:
                raise MeshValidationError(f"cell {ci} has fewer than 3 vertices")
            if idx.min() < 0 or idx.max() >= nv:
                raise MeshValidationError(f"cell {ci} references a vertex out of range")
            if len(np.unique(idx)) != len(idx):
                raise MeshValidationError(f"cell {ci} repeats a vertex")
            pts = self.vertices[idx]
            a = signed_area(pts)
            if a < 0:
                if not reorient:
                    raise MeshValidationError(f"cell {ci} is clockwise")
                warnings.warn(f"cell {ci} was clockwise; reoriented", stacklevel=2)
                idx = idx[::-1].copy()
                pts = self.vertices[idx]
            try:
                validate_polygon(pts)
            except GeometryError as exc:
                raise MeshValidationError(f"cell {ci}: {exc}") from exc
            self.cells.append(idx)

        self._build_topology()
        self._build_geometry()

    # -- topology -----------------------------------------------------------

    def _build_topology(self):
        edge_of = {}
        edges = []
        edge_cells = []
        cell_edges = []
        cell_edge_sign = []
        for ci, cell in enumerate(self.cells):
            n = len(cell)
            eids = np.empty(n, dtype=int)
            signs = np.empty(n, dtype=int)
            for i in range(n):
                a, b = int(cell[i]), int(cell[(i + 1) % n])
                key = (min(a, b), max(a, b))
                if key not in edge_of:
                    eid = len(edges)
                    edge_of[key] = eid
                    edges.append((a, b))          # direction of first (lower) cell
                    edge_cells.append([ci, -1])
                    signs[i] = 1
                else:
                    eid = edge_of[key]
                    if edge_cells[eid][1] != -1:
                        raise NonManifoldError(f"edge {key} shared by more than two cells")
                    if edges[eid] != (b, a):
                        raise MeshValidationError(
                            f"edge {key} traversed twice in the same direction")
                    edge_cells[eid][1] = ci
                    signs[i] = -1
                eids[i] = eid
            cell_edges.append(eids)
            cell_edge_sign.append(signs)

        self.edges = np.array(edges, dtype=int)
        self.edge_cells = np.array(edge_cells, dtype=int)
        self.cell_edges = cell_edges
        self.cell_edge_sign = cell_edge_sign
        self.boundary_edge = self.edge_cells[:, 1] == -1
        self.boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        for eid in np.nonzero(self.boundary_edge)[0]:
            self.boundary_vertex[self.edges[eid]] = True

    def _build_geometry(self):
        nc = len(self.cells)
        self.areas = np.empty(nc)
        self.centroids = np.empty((nc, 2))
        self.diameters = np.empty(nc)
        for ci, cell in enumerate(self.cells):
            pts = self.vertices[cell]
            self.areas[ci] = signed_area(pts)
            self.centroids[ci] = polygon_centroid(pts)
            self.diameters[ci] = polygon_diameter(pts)
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        self.edge_lengths = np.linalg.norm(d, axis=1)
        # global tangent along the stored direction, normal out of the lower cell
        self.edge_tangents = d / self.edge_lengths[:, None]
        self.edge_normals = np.column_stack(
            [self.edge_tangents[:, 1], -self.edge_tangents[:, 0]])
        self.h = float(self.diameters.max())

    # -- queries ------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_cells(self):
        return len(self.cells)

    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_cells

    def cell_vertices(self, ci):
        return self.vertices[self.cells[ci]]

    def diagnostics(self):
        """Mesh-regularity report: h, edge-length ratio, quasi-uniformity."""
        min_edge_ratio = np.inf
        for ci, eids in enumerate(self.cell_edges):
            ratio = self.edge_lengths[eids].min() / self.diameters[ci]
            min_edge_ratio = min(min_edge_ratio, ratio)
        return {
            "h": self.h,
            "min_edge_ratio": float(min_edge_ratio),
            "quasi_uniformity_ratio": float(self.diameters.min() / self.h),
        }

    # -- ASCII format -------------------------------------------------------

    def save(self, path):
        with open(path, "w") as fh:
            fh.write("polymesh 1\n")
            fh.write(f"V {self.n_vertices}\n")
            for x, y in self.vertices:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
            fh.write(f"C {self.n_cells}\n")
            for cell in self.cells:
                fh.write(str(len(cell)) + " " + " ".join(str(int(i)) for i in cell) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            lines = fh.read().splitlines()

        def fail(msg, ln):
            raise MeshFormatError(msg, ln + 1)

        pos = 0
        if pos >= len(lines) or lines[pos].strip() != "polymesh 1":
            fail("expected header 'polymesh 1'", pos)
        pos += 1
        if pos >= len(lines) or not lines[pos].startswith("V "):
            fail("expected 'V <count>'", pos)
        try:
            nv = int(lines[pos].split()[1])
        except (IndexError, ValueError):
            fail("bad vertex count", pos)
        pos += 1
        verts = np.empty((nv, 2))
        for i in range(nv):
            if pos + i >= len(lines):
                fail("unexpected end of file in vertex block", pos + i)
            parts = lines[pos + i].split()
            if len(parts) != 2:
                fail("expected 'x y'", pos + i)
            try:
                verts[i] = [float(parts[0]), float(parts[1])]
            except ValueError:
                fail("bad vertex coordinate", pos + i)
        pos += nv
        if pos >= len(lines) or not lines[pos].startswith("C "):
            fail("expected 'C <count>'", pos)
        try:
            nc = int(lines[pos].split()[1])
        except (IndexError, ValueError):
            fail("bad cell count", pos)
        pos += 1
        cells = []
        for i in range(nc):
            if pos + i >= len(lines):
                fail("unexpected end of file in cell block", pos + i)
            parts = lines[pos + i].split()
            try:
                count = int(parts[0])
                idx = [int(p) for p in parts[1:]]
            except (IndexError, ValueError):
                fail("bad cell record", pos + i)
            if len(idx) != count:
                fail(f"cell lists {len(idx)} vertices, header says {count}", pos + i)
            cells.append(idx)
        return cls(verts, cells, reorient=True)

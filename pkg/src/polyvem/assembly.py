"""Global DoF numbering, sparse assembly, and boundary-condition handling.

Numbering is deterministic: vertex values first, then per-edge blocks
(moments of v, then moments of dn v), then per-cell interior moments.
Homogeneous essential constraints are imposed by removing rows/columns;
non-homogeneous data enters through interpolated values of the constrained
DoFs that the time stepper moves to the right-hand side.

The three boundary-condition kinds constrain:
    cp  boundary vertex values, boundary-edge v-moments and dn-moments
    nc  boundary vertex values and boundary-edge v-moments
    ch  boundary-edge dn-moments only
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .element import CellGeometry, ElementError, element_operators
from .polybasis import build_element_basis, eval_basis, gauss01, polygon_quadrature

BC_KINDS = ("cp", "nc", "ch")


class SolverError(RuntimeError):
    pass


class GlobalNumbering:
    """BC-independent global indices for all DoFs of a layout on a mesh."""

    def __init__(self, mesh, layout):
        self.mesh = mesh
        self.layout = layout
        self.per_edge = layout.n_edge_value + layout.n_edge_normal
        self.vertex_base = 0
        self.edge_base = mesh.n_vertices
        self.cell_base = mesh.n_vertices + mesh.n_edges * self.per_edge
        self.n_total = self.cell_base + mesh.n_cells * layout.n_cell
        self.cell_dofs = [self._cell_dofs(ci) for ci in range(mesh.n_cells)]

    def edge_value_dof(self, eid, j):
        return self.edge_base + eid * self.per_edge + j

    def edge_normal_dof(self, eid, j):
        return self.edge_base + eid * self.per_edge + self.layout.n_edge_value + j

    def _cell_dofs(self, ci):
        mesh, lay = self.mesh, self.layout
        cell = mesh.cells[ci]
        eids = mesh.cell_edges[ci]
        out = list(cell)
        for eid in eids:
            base = self.edge_base + eid * self.per_edge
            out.extend(range(base, base + lay.n_edge_value))
        for eid in eids:
            base = self.edge_base + eid * self.per_edge + lay.n_edge_value
            out.extend(range(base, base + lay.n_edge_normal))
        base = self.cell_base + ci * lay.n_cell
        out.extend(range(base, base + lay.n_cell))
        return np.array(out, dtype=int)


class GlobalDofMap:
    """Free/constrained partition of the global DoFs for one BC kind."""

    def __init__(self, mesh, layout, bc, numbering=None):
        if bc not in BC_KINDS:
            raise ValueError(f"bc must be one of {BC_KINDS}")
        self.bc = bc
        self.numbering = numbering or GlobalNumbering(mesh, layout)
        num = self.numbering
        constrained = np.zeros(num.n_total, dtype=bool)
        bedges = np.nonzero(mesh.boundary_edge)[0]
        if bc in ("cp", "nc"):
            constrained[np.nonzero(mesh.boundary_vertex)[0]] = True
            for eid in bedges:
                for j in range(layout.n_edge_value):
                    constrained[num.edge_value_dof(eid, j)] = True
        if bc in ("cp", "ch"):
            for eid in bedges:
                for j in range(layout.n_edge_normal):
                    constrained[num.edge_normal_dof(eid, j)] = True
        self.is_free = ~constrained
        self.free = np.nonzero(self.is_free)[0]
        self.constrained = np.nonzero(constrained)[0]
        self.n_total = num.n_total
        self.n_free = len(self.free)

    @property
    def cell_dofs(self):
        return self.numbering.cell_dofs


class ElementTable:
    """Per-cell element operators plus the global numbering; BC independent."""

    def __init__(self, mesh, layout):
        self.mesh = mesh
        self.layout = layout
        self.numbering = GlobalNumbering(mesh, layout)
        self.ops = []
        for ci in range(mesh.n_cells):
            geom = CellGeometry.from_mesh(mesh, ci)
            try:
                self.ops.append(element_operators(layout, geom))
            except ElementError:
                raise
            except np.linalg.LinAlgError as exc:
                raise ElementError(str(exc), cell=ci) from exc

    @property
    def n_total(self):
        return self.numbering.n_total


def assemble_operator(table, kind):
    """Scatter local matrices into a global CSR matrix on all DoFs."""
    pick = {"mass": "Mh", "stiffness4": "Ah", "stiffness2": "Bh"}
    if kind not in pick:
        raise ValueError(f"kind must be one of {tuple(pick)}")
    rows, cols, data = [], [], []
    for ci, ops in enumerate(table.ops):
        loc = getattr(ops, pick[kind])
        gdofs = table.numbering.cell_dofs[ci]
        n = len(gdofs)
        rows.append(np.repeat(gdofs, n))
        cols.append(np.tile(gdofs, n))
        data.append(loc.ravel())
    n_tot = table.n_total
    mat = sp.coo_matrix((np.concatenate(data),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n_tot, n_tot)).tocsr()
    return mat


def build_l2_evaluator(table, quad_degree=None):
    """Sparse operator E mapping a global DoF vector to Pi^k u at quadrature
    points, with the matching weights and points.

    With quad_degree=None the element operators' own rule is reused;
    otherwise a fresh rule of the requested exactness is built per cell.
    """
    rows, cols, data = [], [], []
    wq_all, xq_all = [], []
    offset = 0
    for ci, ops in enumerate(table.ops):
        if quad_degree is None:
            phi = ops.Phi
            wq = ops.quad_weights
            xq = ops.quad_points
        else:
            rule = polygon_quadrature(ops.geom.verts, quad_degree)
            phi = eval_basis(ops.basis, rule.points, 0) @ ops.P_L2
            wq = rule.weights
            xq = rule.points
        nq, n_loc = phi.shape
        gdofs = table.numbering.cell_dofs[ci]
        rows.append((offset + np.arange(nq)).repeat(n_loc))
        cols.append(np.tile(gdofs, nq))
        data.append(phi.ravel())
        wq_all.append(wq)
        xq_all.append(xq)
        offset += nq
    E = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(offset, table.n_total)).tocsr()
    return E, np.concatenate(wq_all), np.vstack(xq_all)


def assemble_nonlinear(E, wq, U, f, f_prime):
    """Global reaction vector and Jacobian for the projected nonlinearity."""
    uq = E @ U
    fv = f(uq)
    if not np.all(np.isfinite(fv)):
        bad = int(np.nonzero(~np.isfinite(fv))[0][0])
        raise FloatingPointError(f"non-finite nonlinearity value at quadrature point {bad}")
    vec = E.T @ (wq * fv)
    jac = (E.T @ E.multiply((wq * f_prime(uq))[:, None])).tocsr()
    return vec, jac


def load_vector(E, wq, gq):
    return E.T @ (wq * gq)


def interpolate_dofs(mesh, layout, fun, grad, quad_degree=None):
    """Global DoF vector of a smooth function, computed entity by entity."""
    k = layout.k
    if quad_degree is None:
        quad_degree = 2 * k + 10
    num = GlobalNumbering(mesh, layout)
    out = np.zeros(num.n_total)
    out[:mesh.n_vertices] = fun(mesh.vertices[:, 0], mesh.vertices[:, 1])

    n_eg = quad_degree // 2 + 1
    tau, wt = gauss01(n_eg)
    lam = np.empty((n_eg, k + 1))
    lam[:, 0] = 1.0
    for j in range(1, k + 1):
        lam[:, j] = lam[:, j - 1] * (tau - 0.5)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + tau[None, :, None] * (b - a)[:, None, :]
    x, y = pts[..., 0], pts[..., 1]
    eids = np.arange(mesh.n_edges)
    if layout.n_edge_value:
        fv = fun(x, y)
        for j in range(layout.n_edge_value):
            out[num.edge_value_dof(eids, j)] = (fv * lam[:, j]) @ wt
    if layout.n_edge_normal:
        ux, uy = grad(x, y)
        dn = ux * mesh.edge_normals[:, None, 0] + uy * mesh.edge_normals[:, None, 1]
        for j in range(layout.n_edge_normal):
            out[num.edge_normal_dof(eids, j)] = \
                mesh.edge_lengths * ((dn * lam[:, j]) @ wt)
    if layout.n_cell:
        for ci in range(mesh.n_cells):
            verts = mesh.vertices[mesh.cells[ci]]
            basis = build_element_basis(verts, layout.tuple.d_cell0)
            rule = polygon_quadrature(verts, quad_degree)
            mv = eval_basis(basis, rule.points, 0)
            fv = fun(rule.points[:, 0], rule.points[:, 1])
            mom = (mv * rule.weights[:, None]).T @ fv / mesh.diameters[ci] ** 2
            base = num.cell_base + ci * layout.n_cell
            out[base:base + layout.n_cell] = mom
    return out


def solve_sparse(A, b):
    """Direct sparse solve with a residual acceptance check."""
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(b)
    resid = np.abs(A @ x - b).max()
    scale = np.abs(A).max() * max(np.abs(x).max(), 1e-300) + np.abs(b).max()
    if not np.isfinite(resid) or resid > 1e-9 * scale:
        raise SolverError(f"solver residual {resid:.3e} exceeds 1e-9 * {scale:.3e}")
    return x

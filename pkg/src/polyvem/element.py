"""Per-element virtual element machinery for both nonconforming spaces.

Implements the DoF layouts (vertex values, scaled edge moments of the
function and of its normal derivative, scaled interior moments), the four
polynomial projectors, moment reconstruction through the enhancement
constraints, and the local mass/stiffness/gradient matrices with their
DoF-based stabilizations.

The H2-seminorm projector is obtained elementwise from double integration by
parts: for a polynomial p,

    A_K(p, v) = int_dK (hess p . n) . grad v - int_dK dn(lap p) v
                + int_K bilap(p) v,

where the tangential part of grad v is integrated by parts once more along
each edge so that every term lands exactly on the degrees of freedom.  The
affine kernel is pinned by Lagrange rows enforcing the boundary averages of
the projection and of its gradient; for the Morley space at k = 2 the
boundary average of v itself is not available from the DoFs, so the vertex
average is used for the scalar constraint instead.

Edge-moment DoFs are written against a fixed global edge orientation (a
per-edge sign relative to the cell's counterclockwise traversal), so local
matrices scatter into the global system without sign fixups.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .polybasis import (build_element_basis, derivative_operators, eval_basis,
                        gauss01, polygon_quadrature, validate_polygon,
                        monomial_exponents, signed_area, polygon_centroid,
                        polygon_diameter)

SPACES = ("c0nc", "morley")


class ElementError(RuntimeError):
    """Singular or ill-conditioned local computation; carries the cell id."""

    def __init__(self, message, cell=None):
        prefix = f"cell {cell}: " if cell is not None else ""
        super().__init__(prefix + message)
        self.cell = cell


def _poly_dim(order):
    return (order + 1) * (order + 2) // 2 if order >= 0 else 0


@dataclass(frozen=True)
class DofTuple:
    d_vertex: int
    d_edge0: int
    d_edge1: int
    d_cell0: int


class DofLayout:
    """DoF tuple, per-entity counts and local ordering for a space and order.

    Local ordering on a cell with N vertices: vertex values, then for each
    edge the moments of v (orders 0..d_edge0), then for each edge the
    moments of dn v (orders 0..d_edge1), then interior moments.
    """

    def __init__(self, space, k):
        if space not in SPACES:
            raise ValueError(f"space must be one of {SPACES}")
        if k < 2:
            raise ValueError("polynomial order k must be >= 2")
        self.space = space
        self.k = k
        if space == "c0nc":
            self.tuple = DofTuple(0, k - 2, k - 2, k - 4)
        else:
            self.tuple = DofTuple(0, k - 3, k - 2, k - 4)
        self.n_edge_value = max(self.tuple.d_edge0 + 1, 0)
        self.n_edge_normal = max(self.tuple.d_edge1 + 1, 0)
        self.n_cell = _poly_dim(self.tuple.d_cell0)

    def local_count(self, n_vertices):
        return n_vertices * (1 + self.n_edge_value + self.n_edge_normal) + self.n_cell

    def __repr__(self):
        return f"DofLayout({self.space!r}, k={self.k})"


def local_dof_count(layout, n_vertices):
    return layout.local_count(n_vertices)


class CellGeometry:
    """Vertex loop of one cell plus edge orientation data.

    sign[i] = +1 when the cell traverses local edge i (v_i -> v_{i+1}) in
    the global edge direction, -1 otherwise.  For a standalone polygon all
    signs are +1 and the global normal is the outward one.
    """

    def __init__(self, verts, edge_signs=None, cell_id=None):
        self.verts = validate_polygon(verts)
        if signed_area(self.verts) < 0:
            raise ValueError("cell must be counterclockwise")
        self.nv = len(self.verts)
        self.cell_id = cell_id
        self.area = float(signed_area(self.verts))
        self.centroid = polygon_centroid(self.verts)
        self.diameter = polygon_diameter(self.verts)
        d = np.roll(self.verts, -1, axis=0) - self.verts
        self.edge_len = np.linalg.norm(d, axis=1)
        self.tangent = d / self.edge_len[:, None]          # local CCW direction
        self.normal = np.column_stack([self.tangent[:, 1], -self.tangent[:, 0]])
        if edge_signs is None:
            edge_signs = np.ones(self.nv, dtype=int)
        self.sign = np.asarray(edge_signs, dtype=int)

    @classmethod
    def from_mesh(cls, mesh, ci):
        return cls(mesh.vertices[mesh.cells[ci]],
                   edge_signs=mesh.cell_edge_sign[ci], cell_id=ci)


# ---------------------------------------------------------------------------
# cached 1D helpers on the reference edge [0, 1]
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _edge_rule(n):
    return gauss01(n)


@lru_cache(maxsize=None)
def _lambda_table(n, max_order):
    # rows: Gauss point, cols: (tau - 1/2)^j
    tau, _ = _edge_rule(n)
    tab = np.empty((n, max_order + 1))
    tab[:, 0] = 1.0
    for j in range(1, max_order + 1):
        tab[:, j] = tab[:, j - 1] * (tau - 0.5)
    return tab


@lru_cache(maxsize=None)
def _fit_matrix(n, order):
    # F @ values_at_gauss gives exact coefficients in (tau-1/2)^j for
    # polynomials of degree <= order.
    if order < 0:
        return np.zeros((0, n))
    tau, w = _edge_rule(n)
    V = _lambda_table(n, order)
    A = (V * w[:, None]).T @ V
    return np.linalg.solve(A, (V * w[:, None]).T)


def _edge_monomial_gram(order):
    # int_0^1 (t-1/2)^(i+j) dt, closed form
    G = np.empty((order + 1, order + 1))
    for i in range(order + 1):
        for j in range(order + 1):
            m = i + j
            G[i, j] = 0.0 if m % 2 else 1.0 / (2 ** m * (m + 1))
    return G


# ---------------------------------------------------------------------------
# local DoF block indexing
# ---------------------------------------------------------------------------

class _Blocks:
    def __init__(self, layout, nv):
        self.nv = nv
        self.ne0 = layout.n_edge_value
        self.ne1 = layout.n_edge_normal
        self.nint = layout.n_cell
        self.n_loc = layout.local_count(nv)

    def vertex(self, i):
        return i

    def edge_value(self, e, j):
        return self.nv + e * self.ne0 + j

    def edge_normal(self, e, j):
        return self.nv + self.nv * self.ne0 + e * self.ne1 + j

    def interior(self, j):
        return self.nv * (1 + self.ne0 + self.ne1) + j


# ---------------------------------------------------------------------------
# element operators
# ---------------------------------------------------------------------------

@dataclass
class ElementOperators:
    layout: DofLayout
    geom: CellGeometry
    basis: object
    D: np.ndarray              # dof_i(m_j)
    P_H2: np.ndarray           # H2-seminorm projector, coefficients per DoF
    P_L2: np.ndarray
    P_gx: np.ndarray
    P_gy: np.ndarray
    P_H1: np.ndarray
    Mh: np.ndarray
    Ah: np.ndarray
    Bh: np.ndarray
    G0: np.ndarray             # mass Gram of the scaled monomials
    GA: np.ndarray             # Hessian Gram
    GB: np.ndarray             # gradient Gram
    edge_value_moments: list   # per edge: (k-1, n_loc) moments of v, orders 0..k-2
    interior_moments: np.ndarray  # (d_k, n_loc), scaled by h_K^-2
    traces: list               # per edge: (k+1, n_loc) coefficients in global edge basis
    quad_points: np.ndarray
    quad_weights: np.ndarray
    Phi: np.ndarray            # values of Pi^k(basis functions) at quad points

    @property
    def n_loc(self):
        return self.D.shape[0]


def element_operators(layout, geom):
    """Build all projectors and local matrices for one cell."""
    k = layout.k
    nv = geom.nv
    blocks = _Blocks(layout, nv)
    n_loc = blocks.n_loc
    h = geom.diameter
    cell = geom.cell_id

    basis = build_element_basis(geom.verts, k)
    d_k = basis.count
    d_km1 = _poly_dim(k - 1)
    Dx, Dy = derivative_operators(basis)
    Lap = Dx @ Dx + Dy @ Dy
    Bilap = Lap @ Lap

    # interior quadrature: exact for Gram matrices and for f(Pi u) with cubic f
    quad = polygon_quadrature(geom.verts, max(2 * k + 2, 4 * k))
    xq, wq = quad.points, quad.weights
    vals = eval_basis(basis, xq, 0)
    grads = eval_basis(basis, xq, 1)
    hess = eval_basis(basis, xq, 2)
    wv = vals * wq[:, None]
    G0 = wv.T @ vals
    GA = ((hess[:, :, 0] * wq[:, None]).T @ hess[:, :, 0]
          + 2.0 * (hess[:, :, 1] * wq[:, None]).T @ hess[:, :, 1]
          + (hess[:, :, 2] * wq[:, None]).T @ hess[:, :, 2])
    GB = ((grads[:, :, 0] * wq[:, None]).T @ grads[:, :, 0]
          + (grads[:, :, 1] * wq[:, None]).T @ grads[:, :, 1])

    # edge quadrature data
    n_eg = k + 2
    tau, wt = _edge_rule(n_eg)
    lam = _lambda_table(n_eg, k)                    # (tau-1/2)^j
    sgn_pow = geom.sign[:, None] ** np.arange(k + 1)  # sign^j per edge
    edge_pts = (geom.verts[:, None, :]
                + tau[None, :, None] * (np.roll(geom.verts, -1, axis=0)
                                        - geom.verts)[:, None, :])
    flat_pts = edge_pts.reshape(-1, 2)
    e_vals = eval_basis(basis, flat_pts, 0).reshape(nv, n_eg, d_k)
    e_grads = eval_basis(basis, flat_pts, 1).reshape(nv, n_eg, d_k, 2)
    e_hess = eval_basis(basis, flat_pts, 2).reshape(nv, n_eg, d_k, 3)
    v_hess = eval_basis(basis, geom.verts, 2)       # Hessians at the vertices

    # ---- D matrix: every DoF applied to every monomial --------------------
    D = np.zeros((n_loc, d_k))
    D[:nv, :] = eval_basis(basis, geom.verts, 0)
    for e in range(nv):
        lam_g = lam[:, :k + 1] * sgn_pow[e]         # global edge monomials
        gm = e_grads[e, :, :, 0] * (geom.sign[e] * geom.normal[e, 0]) \
            + e_grads[e, :, :, 1] * (geom.sign[e] * geom.normal[e, 1])
        for j in range(blocks.ne0):
            D[blocks.edge_value(e, j)] = (wt * lam_g[:, j]) @ e_vals[e]
        for j in range(blocks.ne1):
            D[blocks.edge_normal(e, j)] = geom.edge_len[e] * ((wt * lam_g[:, j]) @ gm)
    if blocks.nint:
        D[blocks.interior(0):blocks.interior(blocks.nint)] = \
            G0[:blocks.nint, :] / h ** 2

    # ---- right-hand side of the H2 projector system ------------------------
    # Ba[alpha, j] = A_K(m_alpha, phi_j) through boundary integration by parts
    Ba = np.zeros((d_k, n_loc))
    fit_e0 = _fit_matrix(n_eg, layout.tuple.d_edge1)   # degree k-2 fits
    fit_e1 = _fit_matrix(n_eg, k - 3)                  # degree k-3 fits
    for e in range(nv):
        n_l = geom.normal[e]
        t_l = geom.tangent[e]
        he = geom.edge_len[e]
        sg = geom.sign[e]
        H = e_hess[e]                                  # (nq, d_k, 3)
        # hess . n components
        Hn_x = H[:, :, 0] * n_l[0] + H[:, :, 1] * n_l[1]
        Hn_y = H[:, :, 1] * n_l[0] + H[:, :, 2] * n_l[1]
        qn = Hn_x * n_l[0] + Hn_y * n_l[1]
        qt = Hn_x * t_l[0] + Hn_y * t_l[1]
        # (1) normal-normal part against the dn-moment DoFs
        cn = fit_e0 @ qn                               # (k-1, d_k) local coeffs
        for i in range(blocks.ne1):
            Ba[:, blocks.edge_normal(e, i)] += sg ** (i + 1) * cn[i]
        # (2) tangential part, integrated by parts along the edge
        a_i, b_i = e, (e + 1) % nv
        Hv_a, Hv_b = v_hess[a_i], v_hess[b_i]
        def _qt_at(Hv):
            hx = Hv[:, 0] * n_l[0] + Hv[:, 1] * n_l[1]
            hy = Hv[:, 1] * n_l[0] + Hv[:, 2] * n_l[1]
            return hx * t_l[0] + hy * t_l[1]
        Ba[:, blocks.vertex(b_i)] += _qt_at(Hv_b)
        Ba[:, blocks.vertex(a_i)] -= _qt_at(Hv_a)
        ct = _fit_matrix(n_eg, k - 2) @ qt             # coeffs in (tau-1/2)^i
        for i in range(k - 2):
            # d/dtau of sum ct_i (tau-1/2)^i hits order i with weight (i+1)ct_{i+1}
            Ba[:, blocks.edge_value(e, i)] -= sg ** i * (i + 1) * ct[i + 1]
        # (3) normal derivative of the Laplacian against v-moments
        gn = e_grads[e, :, :, 0] * n_l[0] + e_grads[e, :, :, 1] * n_l[1]
        w3 = gn @ Lap                                  # (nq, d_k)
        c3 = fit_e1 @ w3
        for i in range(c3.shape[0]):
            Ba[:, blocks.edge_value(e, i)] -= sg ** i * he * c3[i]
    # (4) volume term through interior moments
    for j in range(blocks.nint):
        Ba[:, blocks.interior(j)] += h ** 2 * Bilap[j, :]

    # ---- normalization constraints -----------------------------------------
    C = np.zeros((3, d_k))
    Cb = np.zeros((3, n_loc))
    scalar_from_vertices = layout.space == "morley" and k == 2
    if scalar_from_vertices:
        # boundary average of v is not a computable DoF combination here;
        # pin the constant mode by the vertex average instead
        C[0] = eval_basis(basis, geom.verts, 0).mean(axis=0)
        Cb[0, :nv] = 1.0 / nv
    else:
        for e in range(nv):
            C[0] += geom.edge_len[e] * (wt @ e_vals[e])
            Cb[0, blocks.edge_value(e, 0)] = geom.edge_len[e]
    for e in range(nv):
        he = geom.edge_len[e]
        C[1] += he * (wt @ e_grads[e, :, :, 0])
        C[2] += he * (wt @ e_grads[e, :, :, 1])
        a_i, b_i = e, (e + 1) % nv
        t_l = geom.tangent[e]
        Cb[1, blocks.vertex(b_i)] += t_l[0]
        Cb[1, blocks.vertex(a_i)] -= t_l[0]
        Cb[2, blocks.vertex(b_i)] += t_l[1]
        Cb[2, blocks.vertex(a_i)] -= t_l[1]
        Cb[1, blocks.edge_normal(e, 0)] += geom.sign[e] * geom.normal[e, 0]
        Cb[2, blocks.edge_normal(e, 0)] += geom.sign[e] * geom.normal[e, 1]

    # saddle system with the constraints appended as Lagrange rows
    K = np.zeros((d_k + 3, d_k + 3))
    K[:d_k, :d_k] = GA
    K[:d_k, d_k:] = C.T
    K[d_k:, :d_k] = C
    rhs = np.vstack([Ba, Cb])
    try:
        P_H2 = np.linalg.solve(K, rhs)[:d_k]
    except np.linalg.LinAlgError as exc:
        raise ElementError(f"singular H2 projector system: {exc}", cell) from exc

    # ---- moment reconstruction through the enhancement constraints ---------
    edge_value_moments = []
    for e in range(nv):
        lam_g = lam[:, :k + 1] * sgn_pow[e]
        rows = np.zeros((max(k - 1, 0), n_loc))
        for i in range(k - 1):
            if i <= layout.tuple.d_edge0:
                rows[i, blocks.edge_value(e, i)] = 1.0
            else:
                # edge enhancement: moment of Pi^{k,hess} v stands in
                rows[i] = ((wt * lam_g[:, i]) @ e_vals[e]) @ P_H2
        edge_value_moments.append(rows)

    interior_moments = np.zeros((d_k, n_loc))
    for j in range(d_k):
        if j < blocks.nint:
            interior_moments[j, blocks.interior(j)] = 1.0
        else:
            interior_moments[j] = (G0[j] @ P_H2) / h ** 2

    # ---- edge traces (degree-k polynomial on each edge) ---------------------
    mu = _edge_monomial_gram(k)
    half_pow = 0.5 ** np.arange(k + 1)
    traces = []
    Ve = []
    for e in range(nv):
        sg = geom.sign[e]
        V = np.empty((k + 1, k + 1))
        rhs_t = np.empty((k + 1, n_loc))
        tau_a = 0.0 if sg == 1 else 1.0
        V[0] = (np.sign(tau_a - 0.5) * np.ones(k + 1)) ** np.arange(k + 1) * half_pow
        V[1] = (np.sign(0.5 - tau_a) * np.ones(k + 1)) ** np.arange(k + 1) * half_pow
        rhs_t[0] = 0.0
        rhs_t[0, blocks.vertex(e)] = 1.0
        rhs_t[1] = 0.0
        rhs_t[1, blocks.vertex((e + 1) % nv)] = 1.0
        V[2:] = mu[:k - 1, :]
        rhs_t[2:] = edge_value_moments[e]
        try:
            T = np.linalg.solve(V, rhs_t)
        except np.linalg.LinAlgError as exc:
            raise ElementError(f"singular edge trace system: {exc}", cell) from exc
        traces.append(T)
        Ve.append((lam[:, :k + 1] * sgn_pow[e]) @ T)   # values at edge Gauss pts

    # ---- L2 projector -------------------------------------------------------
    try:
        P_L2 = np.linalg.solve(G0, h ** 2 * interior_moments)
    except np.linalg.LinAlgError as exc:
        raise ElementError(f"singular mass Gram: {exc}", cell) from exc

    # ---- vector L2 projection of the gradient -------------------------------
    rhs_gx = np.zeros((d_km1, n_loc))
    rhs_gy = np.zeros((d_km1, n_loc))
    vol = h ** 2 * interior_moments
    rhs_gx -= (Dx[:, :d_km1]).T @ vol
    rhs_gy -= (Dy[:, :d_km1]).T @ vol
    for e in range(nv):
        he = geom.edge_len[e]
        n_l = geom.normal[e]
        bv = (e_vals[e][:, :d_km1] * wt[:, None]).T @ Ve[e] * he
        rhs_gx += n_l[0] * bv
        rhs_gy += n_l[1] * bv
    G0s = G0[:d_km1, :d_km1]
    P_gx = np.linalg.solve(G0s, rhs_gx)
    P_gy = np.linalg.solve(G0s, rhs_gy)

    # ---- H1-seminorm projector ----------------------------------------------
    rhs_h1 = -Lap.T @ vol
    for e in range(nv):
        he = geom.edge_len[e]
        gn = e_grads[e, :, :, 0] * geom.normal[e, 0] + e_grads[e, :, :, 1] * geom.normal[e, 1]
        rhs_h1 += (gn * wt[:, None]).T @ Ve[e] * he
    GH1 = GB.copy()
    GH1[0] = 0.0
    rhs_h1[0] = 0.0
    for e in range(nv):
        GH1[0] += geom.edge_len[e] * (wt @ e_vals[e])
        rhs_h1[0] += geom.edge_len[e] * edge_value_moments[e][0]
    try:
        P_H1 = np.linalg.solve(GH1, rhs_h1)
    except np.linalg.LinAlgError as exc:
        raise ElementError(f"singular H1 projector system: {exc}", cell) from exc

    # ---- local matrices ------------------------------------------------------
    I = np.eye(n_loc)
    SM = I - D @ P_L2
    SA = I - D @ P_H2
    SB = I - D @ P_H1
    Mh = P_L2.T @ G0 @ P_L2 + h ** 2 * (SM.T @ SM)
    Ah = P_H2.T @ GA @ P_H2 + (SA.T @ SA) / h ** 2
    Bh = P_gx.T @ G0s @ P_gx + P_gy.T @ G0s @ P_gy + SB.T @ SB

    Phi = vals @ P_L2

    return ElementOperators(layout=layout, geom=geom, basis=basis, D=D,
                            P_H2=P_H2, P_L2=P_L2, P_gx=P_gx, P_gy=P_gy,
                            P_H1=P_H1, Mh=Mh, Ah=Ah, Bh=Bh, G0=G0, GA=GA,
                            GB=GB, edge_value_moments=edge_value_moments,
                            interior_moments=interior_moments, traces=traces,
                            quad_points=xq, quad_weights=wq, Phi=Phi)


# ---------------------------------------------------------------------------
# DoF functionals of a smooth function
# ---------------------------------------------------------------------------

def dof_functionals(layout, geom, fun, grad, quad_degree=None):
    """Local DoF vector of a smooth function (the interpolation interface).

    fun(x, y) -> values, grad(x, y) -> (ux, uy); both must broadcast over
    arrays.  quad_degree controls the data quadrature (defaults to 2k+10).
    """
    k = layout.k
    if quad_degree is None:
        quad_degree = 2 * k + 10
    blocks = _Blocks(layout, geom.nv)
    out = np.zeros(blocks.n_loc)
    out[:geom.nv] = fun(geom.verts[:, 0], geom.verts[:, 1])
    n_eg = quad_degree // 2 + 1
    tau, wt = _edge_rule(n_eg)
    lam = _lambda_table(n_eg, k)
    for e in range(geom.nv):
        a = geom.verts[e]
        b = geom.verts[(e + 1) % geom.nv]
        pts = a + tau[:, None] * (b - a)
        sg = geom.sign[e]
        lam_g = lam * (sg ** np.arange(k + 1))
        if blocks.ne0:
            fv = fun(pts[:, 0], pts[:, 1])
            for j in range(blocks.ne0):
                out[blocks.edge_value(e, j)] = np.sum(wt * lam_g[:, j] * fv)
        if blocks.ne1:
            ux, uy = grad(pts[:, 0], pts[:, 1])
            ne = sg * geom.normal[e]
            dn = ux * ne[0] + uy * ne[1]
            for j in range(blocks.ne1):
                out[blocks.edge_normal(e, j)] = geom.edge_len[e] * np.sum(wt * lam_g[:, j] * dn)
    if blocks.nint:
        basis = build_element_basis(geom.verts, layout.tuple.d_cell0)
        quad = polygon_quadrature(geom.verts, quad_degree)
        mv = eval_basis(basis, quad.points, 0)
        fv = fun(quad.points[:, 0], quad.points[:, 1])
        mom = (mv * quad.weights[:, None]).T @ fv / geom.diameter ** 2
        out[blocks.interior(0):blocks.interior(blocks.nint)] = mom
    return out


def reconstruct_moments(ops, dofvec):
    """Edge moments of v up to k-2 per edge and interior moments up to k."""
    edge = [rows @ dofvec for rows in ops.edge_value_moments]
    interior = ops.interior_moments @ dofvec
    return {"edge": edge, "interior": interior}


def local_nonlinear(ops, U, f, f_prime):
    """Local reaction vector and its Gateaux derivative.

    F_j = int_K f(Pi^k u) Pi^k phi_j, which equals the pairing of
    Pi^k f(Pi^k u) with the virtual test function; the Jacobian weights the
    same pairing with f'(Pi^k u).
    """
    uq = ops.Phi @ U
    wf = ops.quad_weights * f(uq)
    vec = ops.Phi.T @ wf
    wfp = ops.quad_weights * f_prime(uq)
    jac = (ops.Phi * wfp[:, None]).T @ ops.Phi
    return vec, jac

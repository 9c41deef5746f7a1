"""Error norms against the H2-projector reconstruction, time-accumulated
norms, convergence-rate tables, and report serialization.

The virtual solution is never evaluated directly; every norm is computed
from the elementwise polynomial reconstruction Pi^(k,hess) u_h, exactly as
the numerical sections of fourth-order VEM studies report their errors.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .polybasis import eval_basis, polygon_quadrature, triangle_quadrature, triangulate_polygon


def _graded_cell_rule(verts, degree, corner, ratio=0.15, levels=12):
    """Quadrature on a cell with geometric grading toward a singular vertex.

    Sub-triangles touching the corner are split into geometric rings so that
    integrands with an r^(-alpha) derivative singularity (alpha < 2) are
    resolved; the innermost sliver carries a vanishing share and keeps the
    plain rule, whose points never hit the corner itself.
    """
    pts, wts = [], []
    for tri in triangulate_polygon(verts):
        hit = [i for i in range(3) if np.allclose(tri[i], corner, atol=1e-12)]
        if not hit:
            p, w = triangle_quadrature(tri, degree)
            pts.append(p)
            wts.append(w)
            continue
        P = tri[hit[0]]
        A, B = (tri[i] for i in range(3) if i != hit[0])
        a_prev, b_prev = A, B
        for _ in range(levels):
            a_next = P + ratio * (a_prev - P)
            b_next = P + ratio * (b_prev - P)
            for sub in ((a_next, a_prev, b_prev), (a_next, b_prev, b_next)):
                p, w = triangle_quadrature(np.array(sub), degree)
                pts.append(p)
                wts.append(w)
            a_prev, b_prev = a_next, b_next
        p, w = triangle_quadrature(np.array([P, a_prev, b_prev]), degree)
        pts.append(p)
        wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


class ErrorContext:
    """Cached reconstruction data for broken-norm integration on one mesh.

    Holds, per cell, the quadrature rule of the requested exactness and the
    values/gradients/Hessians of the reconstruction basis composed with the
    H2 projector; cells with identical point/DoF counts are batched so that
    repeated error evaluations are a handful of einsums.
    singular_points get geometrically graded quadrature on touching cells.
    """

    def __init__(self, table, quad_degree=None, singular_points=()):
        self.table = table
        k = table.layout.k
        self.quad_degree = quad_degree if quad_degree is not None else 2 * k + 6
        singular_points = [np.asarray(p, dtype=float) for p in singular_points]
        raw = []
        pts = []
        offset = 0
        for ops, gdofs in zip(table.ops, table.numbering.cell_dofs):
            verts = ops.geom.verts
            corner = next((p for p in singular_points
                           if np.min(np.linalg.norm(verts - p, axis=1)) < 1e-12),
                          None)
            if corner is None:
                rule = polygon_quadrature(verts, self.quad_degree)
                xq, wq = rule.points, rule.weights
            else:
                xq, wq = _graded_cell_rule(verts, self.quad_degree, corner)
            vals = eval_basis(ops.basis, xq, 0)
            grads = eval_basis(ops.basis, xq, 1)
            hess = eval_basis(ops.basis, xq, 2)
            rec = np.stack([vals @ ops.P_H2,
                            grads[:, :, 0] @ ops.P_H2,
                            grads[:, :, 1] @ ops.P_H2,
                            hess[:, :, 0] @ ops.P_H2,
                            hess[:, :, 1] @ ops.P_H2,
                            hess[:, :, 2] @ ops.P_H2])
            raw.append((offset, wq, rec, gdofs))
            pts.append(xq)
            offset += len(wq)
        self.points = np.vstack(pts) if pts else np.zeros((0, 2))
        # batch cells with a common (n_quad, n_loc) shape
        groups = {}
        for offset, wq, rec, gdofs in raw:
            groups.setdefault(rec.shape[1:], []).append((offset, wq, rec, gdofs))
        self._groups = []
        for entries in groups.values():
            idx = np.concatenate([off + np.arange(len(w)) for off, w, _, _ in entries])
            W = np.stack([w for _, w, _, _ in entries])
            R = np.stack([r for _, _, r, _ in entries])
            G = np.stack([g for _, _, _, g in entries])
            self._groups.append((idx, W, R, G))
        self._spatial_cache = None
        self._cache_key = None

    def _exact_cache(self, solution):
        if self._cache_key is not solution:
            self._spatial_cache = solution.spatial_cache(self.points[:, 0],
                                                         self.points[:, 1])
            self._cache_key = solution
        return self._spatial_cache

    def seminorms(self, U_full, solution, t):
        """Squared broken seminorms of (u - reconstruction) at levels 0,1,2."""
        cache = self._exact_cache(solution)
        exact = solution.derivs2(self.points[:, 0], self.points[:, 1], t,
                                 cache=cache)
        sq = np.zeros(3)
        for idx, W, R, G in self._groups:
            Uloc = U_full[G]                                   # (nc, n_loc)
            diff = np.einsum("cdqi,ci->cdq", R, Uloc)
            for d in range(6):
                diff[:, d, :] -= exact[d][idx].reshape(W.shape)
            sq[0] += np.einsum("cq,cq->", W, diff[:, 0] ** 2)
            sq[1] += np.einsum("cq,cq->", W, diff[:, 1] ** 2 + diff[:, 2] ** 2)
            sq[2] += np.einsum("cq,cq->", W, diff[:, 3] ** 2
                               + 2.0 * diff[:, 4] ** 2 + diff[:, 5] ** 2)
        return sq


def broken_error(table, U_full, solution, t, sobolev_level=2,
                 full_norm=False, quad_degree=None, context=None):
    """Broken norm of u - Pi^(k,hess) u_h at time t.

    sobolev_level picks the seminorm; full_norm=True returns the full
    broken norm combining levels 0..sobolev_level.
    """
    if sobolev_level not in (0, 1, 2):
        raise ValueError("sobolev_level must be 0, 1 or 2")
    ctx = context or ErrorContext(table, quad_degree=quad_degree,
                                  singular_points=getattr(solution, "singular_points", ()))
    sq = ctx.seminorms(U_full, solution, t)
    if full_norm:
        return float(np.sqrt(sq[:sobolev_level + 1].sum()))
    return float(np.sqrt(sq[sobolev_level]))


def accumulate_e2(per_step_errors, dt):
    """Discrete-in-time l2 accumulation: sqrt(dt * sum of squares)."""
    e = np.asarray(per_step_errors, dtype=float)
    return float(np.sqrt(dt * np.sum(e ** 2)))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    t: float
    err_l2: float
    err_h1: float
    err_h2: float
    newton_iterations: int


@dataclass
class ErrorReport:
    config: dict
    h: float
    dof_count: int
    dt: float
    steps: list = field(default_factory=list)
    e2: float = 0.0
    full_norm: bool = True
    diagnostics: dict = field(default_factory=dict)

    def finalize(self):
        self.e2 = accumulate_e2([s.err_h2 for s in self.steps], self.dt)
        return self

    @property
    def newton_max(self):
        return max((s.newton_iterations for s in self.steps), default=0)

    @property
    def newton_avg(self):
        if not self.steps:
            return 0.0
        return sum(s.newton_iterations for s in self.steps) / len(self.steps)

    def as_dict(self):
        return {
            "config": self.config,
            "h": self.h,
            "dof_count": self.dof_count,
            "dt": self.dt,
            "e2": self.e2,
            "full_norm": self.full_norm,
            "newton_max": self.newton_max,
            "newton_avg": self.newton_avg,
            "diagnostics": self.diagnostics,
            "steps": [{"t": s.t, "err_l2": s.err_l2, "err_h1": s.err_h1,
                       "err_h2": s.err_h2,
                       "newton_iterations": s.newton_iterations}
                      for s in self.steps],
        }


@dataclass
class RateTable:
    rows: list   # (h, dof_count, e2, rate-or-None)

    def as_dict(self):
        return {"rows": [{"h": h, "dofs": d, "e2": e, "rate": r}
                         for h, d, e, r in self.rows]}

    def rates(self):
        return [r for _, _, _, r in self.rows if r is not None]


def rate_table(entries):
    """Rate table from (h, e2) or (h, dofs, e2) rows; h strictly decreasing."""
    rows = []
    prev = None
    norm = []
    for entry in entries:
        if len(entry) == 2:
            h, e2 = entry
            dofs = 0
        else:
            h, dofs, e2 = entry
        norm.append((float(h), int(dofs), float(e2)))
    for h, _, _ in norm:
        if prev is not None and h >= prev:
            raise ValueError("mesh sizes must be strictly decreasing")
        prev = h
    for i, (h, dofs, e2) in enumerate(norm):
        if i == 0:
            rows.append((h, dofs, e2, None))
        else:
            h0, _, e0 = norm[i - 1][0], norm[i - 1][1], norm[i - 1][2]
            rate = np.log(e0 / e2) / np.log(h0 / h)
            rows.append((h, dofs, e2, float(rate)))
    return RateTable(rows)


# ---------------------------------------------------------------------------
# serialization: deterministic bytes for identical reports
# ---------------------------------------------------------------------------

def _fmt(x):
    if x is None:
        return "---"
    return f"{x:.12e}"


def emit_report(report, fmt="table_text", path=None):
    """Serialize an ErrorReport or RateTable; returns the text written."""
    if fmt not in ("table_text", "delimited_values", "structured_json"):
        raise ValueError(f"unknown report format {fmt!r}")
    if isinstance(report, RateTable):
        text = _emit_rate_table(report, fmt)
    else:
        text = _emit_error_report(report, fmt)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _emit_rate_table(table, fmt):
    if fmt == "structured_json":
        return json.dumps(table.as_dict(), sort_keys=True, indent=2) + "\n"
    lines = ["h,dofs,e2,rate"]
    if fmt == "table_text":
        lines = [f"{'h':>18} {'dofs':>10} {'e2':>18} {'rate':>8}"]
        for h, d, e, r in table.rows:
            rs = "---" if r is None else f"{r:.3f}"
            lines.append(f"{h:18.12e} {d:>10d} {e:18.12e} {rs:>8}")
        return "\n".join(lines) + "\n"
    for h, d, e, r in table.rows:
        rs = "" if r is None else f"{r:.6f}"
        lines.append(f"{_fmt(h)},{d},{_fmt(e)},{rs}")
    return "\n".join(lines) + "\n"


def _emit_error_report(report, fmt):
    if fmt == "structured_json":
        return json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n"
    if fmt == "delimited_values":
        lines = ["h,dofs,e2,rate,newton_max,newton_avg"]
        lines.append(f"{_fmt(report.h)},{report.dof_count},{_fmt(report.e2)},,"
                     f"{report.newton_max},{report.newton_avg:.6f}")
        lines.append("")
        lines.append("t,err_l2,err_h1,err_h2,newton_iterations")
        for s in report.steps:
            lines.append(f"{_fmt(s.t)},{_fmt(s.err_l2)},{_fmt(s.err_h1)},"
                         f"{_fmt(s.err_h2)},{s.newton_iterations}")
        return "\n".join(lines) + "\n"
    lines = ["run report"]
    for key in sorted(report.config):
        lines.append(f"  {key} = {report.config[key]}")
    lines.append(f"h = {_fmt(report.h)}  dofs = {report.dof_count}  "
                 f"dt = {_fmt(report.dt)}")
    lines.append(f"e2 = {_fmt(report.e2)}  (full_norm = {report.full_norm})")
    lines.append(f"newton: max = {report.newton_max}  avg = {report.newton_avg:.3f}")
    lines.append(f"{'t':>18} {'err_l2':>18} {'err_h1':>18} {'err_h2':>18} {'its':>4}")
    for s in report.steps:
        lines.append(f"{s.t:18.12e} {s.err_l2:18.12e} {s.err_h1:18.12e} "
                     f"{s.err_h2:18.12e} {s.newton_iterations:>4d}")
    return "\n".join(lines) + "\n"


PLOT_SCRIPT = """\
#!/usr/bin/env python3
# Auto-generated companion script: plots e2 against h from a rate-table CSV.
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "rates.csv"
h, e2 = [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        h.append(float(row["h"]))
        e2.append(float(row["e2"]))
plt.loglog(h, e2, "o-", label="e2")
plt.loglog(h, [e2[0] * (x / h[0]) for x in h], "k--", label="order 1")
plt.xlabel("h")
plt.ylabel("e2")
plt.legend()
plt.savefig("rates.png", dpi=150)
print("wrote rates.png")
"""


def emit_plot_script(path):
    with open(path, "w") as fh:
        fh.write(PLOT_SCRIPT)
    return path

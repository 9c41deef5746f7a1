"""Self-check suites exposed through the CLI: projector identities,
form consistency, DoF-dimension formulas, patch test, and a finite-difference
Jacobian check.  Each suite returns a dict with a pass flag and details;
the CLI maps failures to a nonzero exit status.
"""

import numpy as np

from . import assembly
from .element import CellGeometry, DofLayout, element_operators, local_dof_count
from .families import MeshFamily, generate
from .polybasis import derivative_operators, signed_area
from .problems import (ManufacturedSolution, PolySpatial, PolyTime,
                       ProblemSpec, make_problem, zero_f)
from .timestepper import (NewtonConfig, TimeGrid, TransientSystem, advance,
                          interpolate_initial)

TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
PENTAGON = np.array([[0.0, 0.0], [2.0, 0.3], [2.5, 1.8], [1.2, 2.7], [-0.4, 1.4]])
CONCAVE_QUAD = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.7, 0.3]])


def random_simple_polygon(rng, n_min=4, n_max=9):
    """Star-shaped polygon with random radii; frequently nonconvex."""
    n = int(rng.integers(n_min, n_max + 1))
    ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
    while np.min(np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))) < 0.2:
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
    rad = rng.uniform(0.35, 1.0, n)
    verts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    assert signed_area(verts) > 0
    return verts


def polygon_sweep(count=20, seed=1234):
    rng = np.random.default_rng(seed)
    polys = [CONCAVE_QUAD.copy()]
    while len(polys) < count:
        polys.append(random_simple_polygon(rng))
    return polys


def check_dims():
    shapes = {"triangle": 3, "square": 4, "pentagon": 5}
    closed = {"c0nc": lambda N, k: N * (2 * k - 1) + (k - 2) * (k - 3) // 2,
              "morley": lambda N, k: 2 * N * (k - 1) + (k - 2) * (k - 3) // 2}
    bad = []
    for space, formula in closed.items():
        for k in (2, 3, 4):
            layout = DofLayout(space, k)
            for name, N in shapes.items():
                got = local_dof_count(layout, N)
                want = formula(N, k)
                if got != want:
                    bad.append(f"{space} k={k} {name}: {got} != {want}")
    return {"name": "dims", "passed": not bad,
            "details": "; ".join(bad) or "all dimension formulas match"}


def check_projectors(tol=1e-9, count=20, seed=1234):
    worst = 0.0
    for space in ("c0nc", "morley"):
        for k in (2, 3):
            layout = DofLayout(space, k)
            for verts in polygon_sweep(count, seed):
                geom = CellGeometry(verts)
                ops = element_operators(layout, geom)
                d_k = ops.P_H2.shape[0]
                d_km1 = ops.P_gx.shape[0]
                Dx, Dy = derivative_operators(ops.basis)
                eye = np.eye(d_k)
                worst = max(worst,
                            np.abs(ops.P_H2 @ ops.D - eye).max(),
                            np.abs(ops.P_L2 @ ops.D - eye).max(),
                            np.abs(ops.P_H1 @ ops.D - eye).max(),
                            np.abs(ops.P_gx @ ops.D - Dx[:d_km1]).max(),
                            np.abs(ops.P_gy @ ops.D - Dy[:d_km1]).max())
    return {"name": "projectors", "passed": worst <= tol,
            "details": f"worst projector identity error {worst:.3e} (tol {tol:g})"}


def check_consistency(tol=1e-9, count=20, seed=1234):
    worst = 0.0
    for space in ("c0nc", "morley"):
        for k in (2, 3):
            layout = DofLayout(space, k)
            for verts in polygon_sweep(count, seed):
                ops = element_operators(layout, CellGeometry(verts))
                for loc, exact in ((ops.Mh, ops.G0), (ops.Ah, ops.GA),
                                   (ops.Bh, ops.GB)):
                    scale = max(np.abs(exact).max(), 1.0)
                    err = np.abs(ops.D.T @ loc @ ops.D - exact).max() / scale
                    worst = max(worst, err)
    return {"name": "consistency", "passed": worst <= tol,
            "details": f"worst k-consistency error {worst:.3e} (tol {tol:g})"}


def patch_problem(bc):
    """Quadratic-in-space, linear-in-time solution compatible with bc.

    alpha2 = 0 and, for Cahn-Hilliard conditions, no xy term: the
    nonconforming consistency terms then vanish for polynomial data and one
    backward-Euler step must reproduce the interpolant exactly.
    """
    p = np.array([[0.7, -0.2, -0.4], [0.3, 0.25, 0.0], [0.5, 0.0, 0.0]])
    q = np.array([[0.1, 0.3, 0.2], [0.2, -0.15, 0.0], [0.15, 0.0, 0.0]])
    if bc == "ch":
        p = p.copy()
        q = q.copy()
        p[1, 1] = 0.0
        q[1, 1] = 0.0
    spec = ProblemSpec(name=f"patch_{bc}", alpha1=1.0, alpha2=0.0, f=zero_f,
                       f_prime=zero_f, lipschitz_estimate=0.0, bc=bc,
                       domain="unit_square", T_final=0.1)
    sol = ManufacturedSolution(terms=[(PolyTime([1.0]), PolySpatial(p)),
                                      (PolyTime([0.0, 1.0]), PolySpatial(q))],
                               alpha1=1.0, alpha2=0.0, f=zero_f)
    return spec, sol


def run_patch_case(family, space, bc, resolution=3, k=2, seed=2):
    spec, sol = patch_problem(bc)
    mesh = generate(MeshFamily(family, resolution, seed=seed))
    layout = DofLayout(space, k)
    table = assembly.ElementTable(mesh, layout)
    dofmap = assembly.GlobalDofMap(mesh, layout, bc, numbering=table.numbering)
    system = TransientSystem(mesh, layout, dofmap, table, spec, sol)
    grid = TimeGrid(t_final=0.1, n_steps=1)
    v0, g0 = sol.at_time(0.0)
    U0 = interpolate_initial(mesh, layout, dofmap, v0, g0)
    U, _ = advance(system, grid, U0, NewtonConfig())
    v1, g1 = sol.at_time(grid.dt)
    U_exact = assembly.interpolate_dofs(mesh, layout, v1, g1)
    return float(np.abs(U - U_exact).max() / np.abs(U_exact).max())


def check_patch(tol=1e-8):
    worst = 0.0
    cases = []
    for family in ("triangular", "distorted_quad", "concave_quad", "voronoi_cvt"):
        for space in ("c0nc", "morley"):
            for bc in ("cp", "ch"):
                rel = run_patch_case(family, space, bc)
                worst = max(worst, rel)
                cases.append(f"{family}/{space}/{bc}: {rel:.2e}")
    return {"name": "patch", "passed": worst <= tol,
            "details": f"worst relative error {worst:.3e} (tol {tol:g})"}


def check_jacobian(tol=1e-5, n_directions=5, seed=99):
    spec, sol = make_problem("test1_cp")
    mesh = generate(MeshFamily("triangular", 4))
    layout = DofLayout("morley", 2)
    table = assembly.ElementTable(mesh, layout)
    dofmap = assembly.GlobalDofMap(mesh, layout, spec.bc, numbering=table.numbering)
    system = TransientSystem(mesh, layout, dofmap, table, spec, sol)
    dt = 0.25
    t = dt
    rng = np.random.default_rng(seed)
    free = dofmap.free
    U_prev = np.zeros(table.n_total)
    # state of order one so the cubic term contributes to the Jacobian
    U = np.zeros(table.n_total)
    U[free] = rng.uniform(-0.3, 0.3, len(free))
    rhs_load = system.load_rhs(t)

    def residual(V):
        F_vec, _ = assembly.assemble_nonlinear(system.E_nl, system.w_nl, V,
                                               spec.f, spec.f_prime)
        R = system.M @ (V - U_prev) + dt * (system.K @ V) - dt * F_vec \
            - dt * rhs_load
        return R[free]

    _, F_jac = assembly.assemble_nonlinear(system.E_nl, system.w_nl, U,
                                           spec.f, spec.f_prime)
    J = (system.M + dt * system.K - dt * F_jac).tocsr()[free][:, free]
    worst = 0.0
    eps = 1e-6
    for _ in range(n_directions):
        d = rng.standard_normal(len(free))
        d /= np.abs(d).max()
        Up = U.copy()
        Up[free] += eps * d
        Um = U.copy()
        Um[free] -= eps * d
        fd = (residual(Up) - residual(Um)) / (2 * eps)
        Jd = J @ d
        worst = max(worst, np.linalg.norm(fd - Jd) / np.linalg.norm(Jd))
    return {"name": "jacobian", "passed": worst <= tol,
            "details": f"worst FD-vs-Jacobian relative error {worst:.3e} (tol {tol:g})"}


SUITES = {
    "dims": check_dims,
    "projectors": check_projectors,
    "consistency": check_consistency,
    "patch": check_patch,
    "jacobian": check_jacobian,
}


def run_verify(names=None):
    """Run the requested suites; returns (results, all_passed)."""
    if not names or names == ["all"]:
        names = list(SUITES)
    results = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        results.append(SUITES[name]())
    return results, all(r["passed"] for r in results)

"""Backward-Euler time stepping with Newton linearization.

Each step solves, on the free DoFs,

    M (U^n - U^{n-1}) + dt (a1 A + a2 B) U^n - dt F(U^n) - dt G(t_n) = 0,

with Jacobian M + dt (a1 A + a2 B) - dt F'(U^n).  Constrained DoFs carry the
interpolated boundary data of the manufactured solution at t_n (zero for
homogeneous problems) and are moved to the right-hand side implicitly by
keeping full-size vectors and slicing the free rows and columns.

The Newton iteration stops when the max-norm of the global increment drops
below the tolerance; the paper-standard configuration starts the first step
from zero and every later step from the previous solution.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import assembly


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    n_steps: int

    def __post_init__(self):
        if self.t_final <= 0 or self.n_steps < 1:
            raise ValueError("need t_final > 0 and n_steps >= 1")

    @property
    def dt(self):
        return self.t_final / self.n_steps

    def times(self):
        return self.dt * np.arange(1, self.n_steps + 1)


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-8
    max_iter: int = 25
    initial_guess_policy: str = "zero_first_step"   # or "previous_step"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.initial_guess_policy not in ("zero_first_step", "previous_step"):
            raise ValueError("unknown initial guess policy")


class NewtonError(RuntimeError):
    def __init__(self, message, residual_norm=None, step=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.step = step


@dataclass
class NewtonResult:
    state: np.ndarray
    iterations: int
    increments: list = field(default_factory=list)
    converged: bool = True


class TransientSystem:
    """Assembled operators and problem data shared by all time steps."""

    def __init__(self, mesh, layout, dofmap, table, problem, solution,
                 data_quad_degree=None):
        self.mesh = mesh
        self.layout = layout
        self.dofmap = dofmap
        self.table = table
        self.problem = problem
        self.solution = solution
        self.M = assembly.assemble_operator(table, "mass")
        self.A = assembly.assemble_operator(table, "stiffness4")
        self.B = assembly.assemble_operator(table, "stiffness2")
        self.K = (problem.alpha1 * self.A + problem.alpha2 * self.B).tocsr()
        self.E_nl, self.w_nl, _ = assembly.build_l2_evaluator(table)
        if data_quad_degree is None:
            data_quad_degree = 2 * layout.k + 10
        self.data_quad_degree = data_quad_degree
        self.E_load, self.w_load, self.x_load = assembly.build_l2_evaluator(
            table, quad_degree=data_quad_degree)
        self._load_cache = solution.spatial_cache(self.x_load[:, 0],
                                                  self.x_load[:, 1])
        self.free = dofmap.free
        self._newton_matrix = {}

    def newton_constant_part(self, dt):
        """M + dt K, cached per time step size."""
        if dt not in self._newton_matrix:
            self._newton_matrix[dt] = (self.M + dt * self.K).tocsr()
        return self._newton_matrix[dt]

    def load_rhs(self, t):
        g = self.solution.load_cached(self._load_cache, t)
        return assembly.load_vector(self.E_load, self.w_load, g)

    def lifted_values(self, t):
        value, grad = self.solution.at_time(t)
        full = assembly.interpolate_dofs(self.mesh, self.layout, value, grad,
                                         quad_degree=self.data_quad_degree)
        return full[self.dofmap.constrained]

    def check_time_step(self, dt):
        limit = 0.5 / max(self.problem.lipschitz_estimate, 1e-300)
        if dt >= limit:
            warnings.warn(
                f"dt = {dt:.3g} exceeds the well-posedness threshold "
                f"1/(2 L_f) = {limit:.3g}; Newton may need smaller steps",
                stacklevel=2)


def interpolate_initial(mesh, layout, dofmap, u0, grad_u0, quad_degree=None):
    """Initial state: every DoF is the DoF functional of u0."""
    return assembly.interpolate_dofs(mesh, layout, u0, grad_u0,
                                     quad_degree=quad_degree)


def newton_solve(system, U_prev, t_n, dt, config, first_step=False):
    """One backward-Euler step; returns a NewtonResult with the full state."""
    free = system.free
    con = system.dofmap.constrained
    f, fp = system.problem.f, system.problem.f_prime
    rhs_load = system.load_rhs(t_n)
    U = U_prev.copy()
    U[con] = system.lifted_values(t_n)
    if first_step and config.initial_guess_policy == "zero_first_step":
        U[free] = 0.0
    C = system.newton_constant_part(dt)

    increments = []
    residual_norm = np.inf
    for it in range(1, config.max_iter + 1):
        F_vec, F_jac = assembly.assemble_nonlinear(system.E_nl, system.w_nl,
                                                   U, f, fp)
        R = system.M @ (U - U_prev) + dt * (system.K @ U) \
            - dt * F_vec - dt * rhs_load
        residual_norm = float(np.abs(R[free]).max()) if len(free) else 0.0
        J = (C - dt * F_jac).tocsr()
        J_ff = J[free][:, free]
        delta = assembly.solve_sparse(J_ff, -R[free])
        U[free] += delta
        increments.append(float(np.abs(delta).max()) if len(delta) else 0.0)
        if increments[-1] <= config.tol:
            return NewtonResult(state=U, iterations=it, increments=increments)
    raise NewtonError(
        f"Newton did not converge in {config.max_iter} iterations "
        f"(last increment {increments[-1]:.3e}, residual {residual_norm:.3e}; "
        f"the time step may be too large)",
        residual_norm=residual_norm)


def advance(system, grid, U0, config=None, on_step=None, t0=0.0):
    """Run the time loop from U0 at time t0; returns (final state, stats).

    on_step(step_index, t, U_full, iterations) is invoked after every
    accepted step, e.g. to accumulate error norms.
    """
    config = config or NewtonConfig()
    system.check_time_step(grid.dt)
    U = U0.copy()
    stats = []
    for n, t in enumerate(t0 + grid.times(), start=1):
        try:
            result = newton_solve(system, U, t, grid.dt, config,
                                  first_step=(n == 1 and t0 == 0.0))
        except NewtonError as exc:
            raise NewtonError(f"step {n} (t = {t:.6g}): {exc}",
                              residual_norm=exc.residual_norm, step=n) from exc
        U = result.state
        stats.append(result.iterations)
        if on_step is not None:
            on_step(n, t, U, result.iterations)
    return U, stats

"""Problem definitions: coefficients, nonlinearities, boundary-condition
kinds, and manufactured solutions with analytically derived loads.

A manufactured solution is a sum of separable terms tau_m(t) * S_m(x, y)
with closed-form spatial derivatives, so the load

    g = du/dt + alpha1 * lap^2 u - alpha2 * lap u - f(u)

is exact and the spatial factors can be cached across time steps.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

BC_NAMES = ("cp", "nc", "ch")


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def efk_f(u):
    return u - u ** 3


def efk_f_prime(u):
    return 1.0 - 3.0 * u ** 2


def zero_f(u):
    return np.zeros_like(u)


NONLINEARITIES = {
    "efk": (efk_f, efk_f_prime),
    "linear": (lambda u: u, lambda u: np.ones_like(u)),
    "zero": (zero_f, zero_f),
}


def efk_lipschitz(solution_bound):
    """sup |f'| of u - u^3 over |u| <= M is 1 + 3 M^2."""
    return 1.0 + 3.0 * solution_bound ** 2


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    alpha1: float
    alpha2: float
    f: callable
    f_prime: callable
    lipschitz_estimate: float
    bc: str
    domain: str
    T_final: float

    def __post_init__(self):
        if self.alpha1 <= 0 or self.alpha2 < 0:
            raise ValueError("need alpha1 > 0 and alpha2 >= 0")
        if self.bc not in BC_NAMES:
            raise ValueError(f"bc must be one of {BC_NAMES}")


# ---------------------------------------------------------------------------
# time factors
# ---------------------------------------------------------------------------

class SinTime:
    def __call__(self, t):
        return np.sin(t)

    def dot(self, t):
        return np.cos(t)


class PolyTime:
    """Polynomial time factor sum c_m t^m."""

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.dcoeffs = npoly.polyder(self.coeffs) if len(self.coeffs) > 1 else np.zeros(1)

    def __call__(self, t):
        return npoly.polyval(t, self.coeffs)

    def dot(self, t):
        return npoly.polyval(t, self.dcoeffs)


# ---------------------------------------------------------------------------
# spatial factors
# ---------------------------------------------------------------------------

class PolySpatial:
    """Bivariate polynomial sum C[i, j] x^i y^j with exact derivatives.

    Evaluation goes through shared power tables rather than polyval2d,
    which allocates far too much on large quadrature point sets.
    """

    def __init__(self, coeffs):
        C = np.atleast_2d(np.asarray(coeffs, dtype=float))
        self.C = C
        dx, dy = self._dx(C), self._dy(C)
        self.Cx, self.Cy = dx, dy
        self.Cxx, self.Cxy, self.Cyy = self._dx(dx), self._dy(dx), self._dy(dy)
        lap = self._pad_sum(self.Cxx, self.Cyy)
        self.Clap = lap
        self.Cbilap = self._pad_sum(self._dx(self._dx(lap)), self._dy(self._dy(lap)))

    @staticmethod
    def _dx(C):
        if C.shape[0] == 1:
            return np.zeros((1, C.shape[1]))
        return C[1:] * np.arange(1, C.shape[0])[:, None]

    @staticmethod
    def _dy(C):
        if C.shape[1] == 1:
            return np.zeros((C.shape[0], 1))
        return C[:, 1:] * np.arange(1, C.shape[1])[None, :]

    @staticmethod
    def _pad_sum(A, B):
        n = max(A.shape[0], B.shape[0])
        m = max(A.shape[1], B.shape[1])
        out = np.zeros((n, m))
        out[:A.shape[0], :A.shape[1]] += A
        out[:B.shape[0], :B.shape[1]] += B
        return out

    def derivs(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        xf = np.broadcast_to(x, shape).ravel()
        yf = np.broadcast_to(y, shape).ravel()
        nx, ny = self.C.shape
        Px = np.empty((xf.size, nx))
        Py = np.empty((yf.size, ny))
        Px[:, 0] = 1.0
        Py[:, 0] = 1.0
        for j in range(1, nx):
            Px[:, j] = Px[:, j - 1] * xf
        for j in range(1, ny):
            Py[:, j] = Py[:, j - 1] * yf

        def ev(C):
            out = ((Px[:, :C.shape[0]] @ C) * Py[:, :C.shape[1]]).sum(axis=1)
            return out.reshape(shape) if shape else out[0]

        return {"v": ev(self.C), "gx": ev(self.Cx), "gy": ev(self.Cy),
                "hxx": ev(self.Cxx), "hxy": ev(self.Cxy), "hyy": ev(self.Cyy),
                "lap": ev(self.Clap), "bilap": ev(self.Cbilap)}


class CornerSingularSpatial:
    """r^(4/3) sin(4 theta / 3) on the Gamma domain.

    The branch cut sits inside the removed quadrant: theta = atan2 lifted to
    [0, 2 pi), which covers the domain with theta in [0, 3 pi / 2].  The
    function is harmonic, so Laplacian and bilaplacian vanish identically;
    second derivatives blow up like r^(-2/3) and are zeroed exactly at the
    corner, which quadrature points never hit.
    """

    exponent = 4.0 / 3.0
    singular_points = ((0.0, 0.0),)

    def _polar(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        th = np.where(th < 0, th + 2.0 * np.pi, th)
        return r, th

    def _power_im_re(self, r, th, p):
        # Im and Re of z^p on the lifted branch, zero at the corner
        safe = np.where(r > 0, r, 1.0)
        rp = np.where(r > 0, safe ** p, 0.0)
        return rp * np.sin(p * th), rp * np.cos(p * th)

    def derivs(self, x, y):
        a = self.exponent
        r, th = self._polar(x, y)
        v, _ = self._power_im_re(r, th, a)
        im1, re1 = self._power_im_re(r, th, a - 1.0)
        im2, re2 = self._power_im_re(r, th, a - 2.0)
        z = np.zeros_like(v)
        return {
            "v": v,
            "gx": a * im1,
            "gy": a * re1,
            "hxx": a * (a - 1.0) * im2,
            "hxy": a * (a - 1.0) * re2,
            "hyy": -a * (a - 1.0) * im2,
            "lap": z,
            "bilap": z.copy(),
        }


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

DERIV_KEYS = ("v", "gx", "gy", "hxx", "hxy", "hyy", "lap", "bilap")


@dataclass
class ManufacturedSolution:
    """Sum of separable space-time terms with exact spatial derivatives."""

    terms: list                      # [(time_factor, spatial_factor), ...]
    alpha1: float
    alpha2: float
    f: callable = field(default=zero_f)

    @property
    def singular_points(self):
        out = []
        for _, spatial in self.terms:
            out.extend(getattr(spatial, "singular_points", ()))
        return tuple(out)

    def spatial_cache(self, x, y):
        return [spatial.derivs(x, y) for _, spatial in self.terms]

    def _combine(self, cache, t, key):
        out = 0.0
        for (timef, _), data in zip(self.terms, cache):
            out = out + timef(t) * data[key]
        return out

    def value(self, x, y, t):
        return self._combine(self.spatial_cache(x, y), t, "v")

    def grad(self, x, y, t):
        cache = self.spatial_cache(x, y)
        return self._combine(cache, t, "gx"), self._combine(cache, t, "gy")

    def derivs2(self, x, y, t, cache=None):
        """(v, gx, gy, hxx, hxy, hyy) at time t; cache from spatial_cache."""
        if cache is None:
            cache = self.spatial_cache(x, y)
        return tuple(self._combine(cache, t, k) for k in DERIV_KEYS[:6])

    def dt_value(self, x, y, t):
        cache = self.spatial_cache(x, y)
        out = 0.0
        for (timef, _), data in zip(self.terms, cache):
            out = out + timef.dot(t) * data["v"]
        return out

    def laplacian(self, x, y, t):
        return self._combine(self.spatial_cache(x, y), t, "lap")

    def bilaplacian(self, x, y, t):
        return self._combine(self.spatial_cache(x, y), t, "bilap")

    def load_cached(self, cache, t):
        dudt = 0.0
        u = 0.0
        lap = 0.0
        bilap = 0.0
        for (timef, _), data in zip(self.terms, cache):
            tv = timef(t)
            dudt = dudt + timef.dot(t) * data["v"]
            u = u + tv * data["v"]
            lap = lap + tv * data["lap"]
            bilap = bilap + tv * data["bilap"]
        return dudt + self.alpha1 * bilap - self.alpha2 * lap - self.f(u)

    def load(self, x, y, t):
        return self.load_cached(self.spatial_cache(x, y), t)

    def at_time(self, t):
        """(value, grad) callables frozen at time t, for DoF interpolation."""
        return (lambda x, y: self.value(x, y, t),
                lambda x, y: self.grad(x, y, t))


def _bump_poly_1d():
    # s^6 (1-s)^6 as exact integer coefficients
    c = np.zeros(13)
    for j in range(7):
        c[6 + j] = (-1) ** j * math.comb(6, j)
    return c


def _test1_solution(alpha1, alpha2):
    cx = _bump_poly_1d()
    spatial = PolySpatial(np.outer(cx, cx))
    return ManufacturedSolution(terms=[(SinTime(), spatial)],
                                alpha1=alpha1, alpha2=alpha2, f=efk_f)


def make_test1(bc="cp"):
    """Extended Fisher-Kolmogorov problem on the unit square, T = 1."""
    if bc not in ("cp", "nc"):
        raise ValueError("test1 runs with cp or nc boundary conditions")
    bound = 0.25 ** 12
    spec = ProblemSpec(name=f"test1_{bc}", alpha1=1.0, alpha2=1.0,
                       f=efk_f, f_prime=efk_f_prime,
                       lipschitz_estimate=efk_lipschitz(bound),
                       bc=bc, domain="unit_square", T_final=1.0)
    return spec, _test1_solution(1.0, 1.0)


def make_test2():
    """Same solution and coefficients as test 1, Cahn-Hilliard BCs, T = 2."""
    bound = 0.25 ** 12
    spec = ProblemSpec(name="test2_ch", alpha1=1.0, alpha2=1.0,
                       f=efk_f, f_prime=efk_f_prime,
                       lipschitz_estimate=efk_lipschitz(bound),
                       bc="ch", domain="unit_square", T_final=2.0)
    return spec, _test1_solution(1.0, 1.0)


def make_test3():
    """Corner-singular solution on the Gamma domain: u in H^(7/3 - eps)."""
    bound = 2.0 ** (2.0 / 3.0)       # max of r^(4/3) over the domain
    spec = ProblemSpec(name="test3_gamma", alpha1=1.0, alpha2=0.0,
                       f=efk_f, f_prime=efk_f_prime,
                       lipschitz_estimate=efk_lipschitz(bound),
                       bc="cp", domain="gamma", T_final=1.0)
    sol = ManufacturedSolution(terms=[(SinTime(), CornerSingularSpatial())],
                               alpha1=1.0, alpha2=0.0, f=efk_f)
    return spec, sol


def make_custom(space_coeffs, time_coeffs=(0.0, 1.0), alpha1=1.0, alpha2=1.0,
                bc="cp", domain="unit_square", T_final=1.0,
                nonlinearity="zero", lipschitz_bound=1.0):
    """Polynomial manufactured problem: u = (sum c_m t^m) * P(x, y)."""
    f, fp = NONLINEARITIES[nonlinearity]
    spec = ProblemSpec(name="custom", alpha1=alpha1, alpha2=alpha2,
                       f=f, f_prime=fp,
                       lipschitz_estimate=(efk_lipschitz(lipschitz_bound)
                                           if nonlinearity == "efk" else
                                           (1.0 if nonlinearity == "linear" else 0.0)),
                       bc=bc, domain=domain, T_final=T_final)
    sol = ManufacturedSolution(terms=[(PolyTime(time_coeffs), PolySpatial(space_coeffs))],
                               alpha1=alpha1, alpha2=alpha2, f=f)
    return spec, sol


PROBLEMS = {
    "test1_cp": lambda: make_test1("cp"),
    "test1_nc": lambda: make_test1("nc"),
    "test2_ch": make_test2,
    "test3_gamma": make_test3,
}


def make_problem(name, **custom_kwargs):
    if name in PROBLEMS:
        return PROBLEMS[name]()
    if name == "custom":
        return make_custom(**custom_kwargs)
    valid = sorted(PROBLEMS) + ["custom"]
    raise KeyError(f"unknown problem {name!r}; valid names: {', '.join(valid)}")

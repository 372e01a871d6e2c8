"""
ISALT – SDE Systems
Additive-noise SDEs dX = f(X)dt + σ dB, the three benchmarks, and user
systems built from sympy expressions.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp
from numba import njit

import config as cfg
from errors import ConfigError, NoInvariantDensity

VectorField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CompiledFields:
    """numba versions of f and ∇f on a single state: drift(x, params), jacobian(x, params)."""

    drift: Callable
    jacobian: Callable
    params: np.ndarray


class BenchmarkId:
    DOUBLE_WELL_1D = cfg.BENCHMARK_DOUBLE_WELL
    GRADIENT_2D = cfg.BENCHMARK_GRADIENT_2D
    LORENZ_3D = cfg.BENCHMARK_LORENZ

    ALL = (DOUBLE_WELL_1D, GRADIENT_2D, LORENZ_3D)


@dataclass(frozen=True, eq=False)
class SdeSystem:
    """Immutable SDE model. Vector fields act on the last axis of x."""

    name: str
    d: int
    m: int
    drift_fn: VectorField
    diffusion: np.ndarray
    jacobian_fn: VectorField | None = None
    potential_fn: Callable[[np.ndarray], np.ndarray] | None = None
    beta: float | None = None
    params: dict = field(default_factory=dict)
    definition: dict | None = None          # for user systems, to re-create them
    jacobian_is_approximate: bool = False
    compiled: CompiledFields | None = None  # fast path for fine-step generation

    def __post_init__(self):
        if callable(self.diffusion):
            raise ConfigError(f"{self.name}: diffusion must be a constant matrix (additive noise only)")
        sigma = np.array(self.diffusion, dtype=float).reshape(self.d, self.m)
        if self.m > self.d:
            raise ConfigError(f"{self.name}: noise dimension m={self.m} exceeds d={self.d}")
        if self.m and np.linalg.matrix_rank(sigma) != self.m:
            raise ConfigError(f"{self.name}: diffusion columns are not linearly independent")
        sigma.setflags(write=False)
        object.__setattr__(self, "diffusion", sigma)
        if self.jacobian_fn is None:
            object.__setattr__(self, "jacobian_is_approximate", True)
        if self.potential_fn is not None and self.beta is None:
            raise ConfigError(f"{self.name}: a potential needs an inverse temperature beta")

    # ── public API ──────────────────────────────────────

    def drift(self, x: np.ndarray) -> np.ndarray:
        return self.drift_fn(np.asarray(x, dtype=float))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian_fn is None:
            return finite_difference_jacobian(self.drift_fn, x)
        return self.jacobian_fn(x)

    def potential(self, x: np.ndarray) -> np.ndarray:
        if self.potential_fn is None:
            raise NoInvariantDensity(f"{self.name}: no analytic invariant density")
        return self.potential_fn(np.asarray(x, dtype=float))

    def noise(self, db: np.ndarray) -> np.ndarray:
        """σΔb for increments on the last axis; row-wise, independent of batch size."""
        db = np.asarray(db, dtype=float)
        if self.m == 0:
            return np.zeros(db.shape[:-1] + (self.d,))
        return (db[..., None, :] * self.diffusion).sum(axis=-1)

    @property
    def has_potential(self) -> bool:
        return self.potential_fn is not None


# ── compiled benchmark fields ───────────────────────────
# Same arithmetic, in the same order, as the numpy closures below.

@njit(cache=True)
def _double_well_drift_nb(x, p):
    out = np.empty(1)
    out[0] = -p[0] * x[0] * (x[0] * x[0] - 1.0)
    return out


@njit(cache=True)
def _double_well_jacobian_nb(x, p):
    out = np.empty((1, 1))
    out[0, 0] = -p[0] * (3.0 * x[0] * x[0] - 1.0)
    return out


@njit(cache=True)
def _gradient_v_nb(x, p):
    return np.exp(0.5 * p[0] * (x[0] * x[0]) + 0.5 * p[1] * (x[1] * x[1]))


@njit(cache=True)
def _gradient_drift_nb(x, p):
    v = _gradient_v_nb(x, p)
    out = np.empty(2)
    out[0] = -(p[0] * x[0]) * v
    out[1] = -(p[1] * x[1]) * v
    return out


@njit(cache=True)
def _gradient_jacobian_nb(x, p):
    v = _gradient_v_nb(x, p)
    mu1, mu2 = p[0], p[1]
    x1, x2 = x[0], x[1]
    off = -mu1 * mu2 * x1 * x2 * v
    out = np.empty((2, 2))
    out[0, 0] = -(mu1 + mu1 * mu1 * x1 * x1) * v
    out[1, 1] = -(mu2 + mu2 * mu2 * x2 * x2) * v
    out[0, 1] = off
    out[1, 0] = off
    return out


@njit(cache=True)
def _lorenz_drift_nb(x, p):
    s, gamma, b = p[0], p[1], p[2]
    out = np.empty(3)
    out[0] = s * (x[1] - x[0])
    out[1] = x[0] * (gamma - x[2]) - x[1]
    out[2] = x[0] * x[1] - b * x[2]
    return out


@njit(cache=True)
def _lorenz_jacobian_nb(x, p):
    s, gamma, b = p[0], p[1], p[2]
    out = np.zeros((3, 3))
    out[0, 0] = -s
    out[0, 1] = s
    out[1, 0] = gamma - x[2]
    out[1, 1] = -1.0
    out[1, 2] = -x[0]
    out[2, 0] = x[1]
    out[2, 1] = x[0]
    out[2, 2] = -b
    return out


# ── benchmark definitions ───────────────────────────────

def _double_well(mu: float, beta: float) -> SdeSystem:
    def f(x):
        return -mu * x * (x * x - 1.0)

    def jac(x):
        return (-mu * (3.0 * x * x - 1.0))[..., None]

    def potential(x):
        return mu / 4.0 * (x[..., 0] ** 2 - 1.0) ** 2

    return SdeSystem(
        name=BenchmarkId.DOUBLE_WELL_1D, d=1, m=1, drift_fn=f, jacobian_fn=jac,
        diffusion=np.array([[np.sqrt(2.0 / beta)]]), potential_fn=potential,
        beta=beta, params={"mu": mu, "beta": beta},
        compiled=CompiledFields(_double_well_drift_nb, _double_well_jacobian_nb, np.array([mu])),
    )


def _gradient_2d(mu1: float, mu2: float, beta: float) -> SdeSystem:
    mus = np.array([mu1, mu2])

    def _v(x):
        return np.exp(0.5 * mu1 * x[..., 0] ** 2 + 0.5 * mu2 * x[..., 1] ** 2)

    def f(x):
        return -(mus * x) * _v(x)[..., None]

    def jac(x):
        v = _v(x)
        x1, x2 = x[..., 0], x[..., 1]
        off = -mu1 * mu2 * x1 * x2 * v
        j = np.empty(x.shape + (2,))
        j[..., 0, 0] = -(mu1 + mu1 * mu1 * x1 * x1) * v
        j[..., 1, 1] = -(mu2 + mu2 * mu2 * x2 * x2) * v
        j[..., 0, 1] = off
        j[..., 1, 0] = off
        return j

    return SdeSystem(
        name=BenchmarkId.GRADIENT_2D, d=2, m=2, drift_fn=f, jacobian_fn=jac,
        diffusion=np.sqrt(2.0 / beta) * np.eye(2), potential_fn=_v,
        beta=beta, params={"mu1": mu1, "mu2": mu2, "beta": beta},
        compiled=CompiledFields(_gradient_drift_nb, _gradient_jacobian_nb, np.array([mu1, mu2])),
    )


def _lorenz(s: float, gamma: float, b: float, beta: float) -> SdeSystem:
    def f(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([s * (x2 - x1), x1 * (gamma - x3) - x2, x1 * x2 - b * x3], axis=-1)

    def jac(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        j = np.zeros(x.shape + (3,))
        j[..., 0, 0] = -s
        j[..., 0, 1] = s
        j[..., 1, 0] = gamma - x3
        j[..., 1, 1] = -1.0
        j[..., 1, 2] = -x1
        j[..., 2, 0] = x2
        j[..., 2, 1] = x1
        j[..., 2, 2] = -b
        return j

    sigma = np.zeros((3, 2))
    sigma[0, 0] = sigma[1, 1] = np.sqrt(2.0 / beta)
    return SdeSystem(
        name=BenchmarkId.LORENZ_3D, d=3, m=2, drift_fn=f, jacobian_fn=jac,
        diffusion=sigma, beta=beta,
        params={"sigma": s, "gamma": gamma, "b": b, "beta": beta},
        compiled=CompiledFields(_lorenz_drift_nb, _lorenz_jacobian_nb, np.array([s, gamma, b])),
    )


BENCHMARK_DEFS = {
    BenchmarkId.DOUBLE_WELL_1D: {
        "build": lambda: _double_well(cfg.DOUBLE_WELL_MU, cfg.DOUBLE_WELL_BETA),
        "dt": cfg.DOUBLE_WELL_DT,
        "gaps": cfg.GAP_MENU,
        "x0": (0.5,),
    },
    BenchmarkId.GRADIENT_2D: {
        "build": lambda: _gradient_2d(cfg.GRADIENT_MU1, cfg.GRADIENT_MU2, cfg.GRADIENT_BETA),
        "dt": cfg.GRADIENT_DT,
        "gaps": cfg.GAP_MENU,
        "x0": (0.5, 0.5),
    },
    BenchmarkId.LORENZ_3D: {
        "build": lambda: _lorenz(cfg.LORENZ_SIGMA, cfg.LORENZ_GAMMA, cfg.LORENZ_B, cfg.LORENZ_BETA),
        "dt": cfg.LORENZ_DT,
        "gaps": cfg.LORENZ_GAP_MENU,
        "x0": (1.0, 1.0, 25.0),
    },
}


def make_benchmark(benchmark_id: str) -> SdeSystem:
    if benchmark_id not in BENCHMARK_DEFS:
        raise ConfigError(f"unknown benchmark {benchmark_id!r}; expected one of {BenchmarkId.ALL}")
    return BENCHMARK_DEFS[benchmark_id]["build"]()


def drift(system: SdeSystem, x: np.ndarray) -> np.ndarray:
    return system.drift(x)


def stationary_density_unnormalized(system: SdeSystem, x: np.ndarray) -> np.ndarray:
    """exp(-βV(x)); raises NoInvariantDensity for systems without a potential."""
    return np.exp(-system.beta * system.potential(x))


def make_linear_system(a: float, sigma: float, name: str = "linear-1d") -> SdeSystem:
    """Scalar f(x) = -a x with noise σ (σ = 0 gives a noise-free system with m = 0)."""
    def f(x):
        return -a * x

    def jac(x):
        return np.full(x.shape + (1,), -a)

    definition = {"name": name, "variables": ["x"], "drift": [f"-({float(a)!r})*x"],
                  "diffusion": [[float(sigma)]] if sigma else [[]]}
    if sigma == 0.0:
        return SdeSystem(name=name, d=1, m=0, drift_fn=f, jacobian_fn=jac,
                         diffusion=np.zeros((1, 0)), params={"a": a, "sigma": 0.0},
                         definition=definition)
    potential = None
    beta = None
    if a > 0:
        beta = 2.0 / sigma**2
        definition.update(potential=f"({float(a)!r})*x**2/2", beta=beta)

        def potential(x):
            return 0.5 * a * x[..., 0] ** 2

    return SdeSystem(name=name, d=1, m=1, drift_fn=f, jacobian_fn=jac,
                     diffusion=np.array([[sigma]]), potential_fn=potential, beta=beta,
                     params={"a": a, "sigma": sigma}, definition=definition)


# ── user systems ────────────────────────────────────────

def system_from_definition(defn: dict) -> SdeSystem:
    """Build a system from a config table.

    Keys: name, variables, drift (expressions), diffusion (d×m list),
    optional potential (expression) with beta, optional jacobian =
    "analytic" (default, by sympy) or "finite-difference".
    """
    try:
        name = str(defn["name"])
        names = [str(v) for v in defn["variables"]]
        drift_src = [str(e) for e in defn["drift"]]
        sigma = np.array(defn["diffusion"], dtype=float)
    except KeyError as exc:
        raise ConfigError(f"user system is missing key {exc.args[0]!r}") from None
    d = len(names)
    if len(drift_src) != d:
        raise ConfigError(f"{name}: drift has {len(drift_src)} components for {d} variables")
    if sigma.ndim != 2 or sigma.shape[0] != d:
        raise ConfigError(f"{name}: diffusion must be a {d}×m matrix")
    symbols = tuple(sp.symbols(names, real=True))
    try:
        exprs = [sp.sympify(e, locals=dict(zip(names, symbols))) for e in drift_src]
    except (sp.SympifyError, SyntaxError) as exc:
        raise ConfigError(f"{name}: cannot parse drift: {exc}") from None

    drift_fn = _lambdify_vector(symbols, exprs)
    jacobian_mode = defn.get("jacobian", "analytic")
    jac_fn = None
    if jacobian_mode == "analytic":
        jac_exprs = [[sp.diff(e, s) for s in symbols] for e in exprs]
        jac_fn = _lambdify_matrix(symbols, jac_exprs)
    elif jacobian_mode != "finite-difference":
        raise ConfigError(f"{name}: jacobian must be 'analytic' or 'finite-difference'")

    potential_fn = None
    beta = defn.get("beta")
    if "potential" in defn:
        v_expr = sp.sympify(str(defn["potential"]), locals=dict(zip(names, symbols)))
        v_fn = sp.lambdify(symbols, v_expr, modules="numpy")

        def potential_fn(x):
            val = v_fn(*[x[..., i] for i in range(d)])
            return np.broadcast_to(np.asarray(val, dtype=float), x.shape[:-1]).copy()

    return SdeSystem(
        name=name, d=d, m=sigma.shape[1], drift_fn=drift_fn, jacobian_fn=jac_fn,
        diffusion=sigma, potential_fn=potential_fn,
        beta=float(beta) if beta is not None else None,
        definition=dict(defn),
    )


def _lambdify_vector(symbols, exprs) -> VectorField:
    fns = [sp.lambdify(symbols, e, modules="numpy") for e in exprs]

    def f(x):
        args = [x[..., i] for i in range(len(symbols))]
        return np.stack(
            [np.broadcast_to(np.asarray(fn(*args), dtype=float), x.shape[:-1]) for fn in fns],
            axis=-1,
        )
    return f


def _lambdify_matrix(symbols, rows) -> VectorField:
    row_fns = [_lambdify_vector(symbols, row) for row in rows]

    def jac(x):
        return np.stack([fn(x) for fn in row_fns], axis=-2)
    return jac


def resolve_system(name: str, definition: dict | None = None) -> SdeSystem:
    if name in BENCHMARK_DEFS:
        return make_benchmark(name)
    if definition is None:
        raise ConfigError(f"system {name!r} is not a benchmark and has no definition")
    return system_from_definition(definition)


# ── finite differences & invariant checks ───────────────

def finite_difference_jacobian(fn: VectorField, x: np.ndarray, h: float = cfg.FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1.0)
    return float(np.max(np.abs(a - b))) / scale


def jacobian_error(system: SdeSystem, points: np.ndarray) -> float:
    """Largest relative gap between ∇f and its central finite difference."""
    return max(
        _rel_err(system.jacobian(x), finite_difference_jacobian(system.drift_fn, x))
        for x in np.atleast_2d(points)
    )


def gradient_error(system: SdeSystem, points: np.ndarray) -> float:
    """Largest relative gap between f and -∇V (finite differences)."""
    return max(
        _rel_err(system.drift(x), -finite_difference_jacobian(system.potential, x))
        for x in np.atleast_2d(points)
    )


def bulk_points(system: SdeSystem, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random points where exp(-βV) carries most of its mass (rejection sampling)."""
    out = []
    scale = 2.0
    while len(out) < count:
        cand = rng.uniform(-scale, scale, size=(4 * count, system.d))
        keep = rng.uniform(size=len(cand)) < stationary_density_unnormalized(system, cand) / np.exp(
            -system.beta * np.min(system.potential(cand)))
        out.extend(cand[keep])
    return np.array(out[:count])

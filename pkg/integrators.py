"""
ISALT – One-Step Integrators
Euler-Maruyama, hybrid RK4 and split-step backward Euler, plus their flow
maps (step - x)/δ. All steps act row-wise on batches x[..., d].
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

import config as cfg
from errors import ConfigError, NonConvergence, SingularNewtonMatrix
from sde_systems import SdeSystem


class SchemeKind:
    EM = "em"
    HRK4 = "hrk4"
    SSBE = "ssbe"

    ALL = (EM, HRK4, SSBE)


@dataclass(frozen=True)
class ImplicitSolverOptions:
    tolerance: float = cfg.NEWTON_TOLERANCE
    max_iterations: int = cfg.NEWTON_MAX_ITERATIONS
    method: str = "newton-raphson"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigError("solver needs at least one iteration")
        if self.method != "newton-raphson":
            raise ConfigError(f"unsupported implicit solver {self.method!r}")


DEFAULT_SOLVER = ImplicitSolverOptions()


def _check_delta(delta: float):
    if not delta > 0:
        raise ConfigError(f"time step must be positive, got {delta}")


# ── explicit schemes ────────────────────────────────────

def em_step(system: SdeSystem, x, db, delta: float) -> np.ndarray:
    _check_delta(delta)
    x = np.asarray(x, dtype=float)
    return x + system.drift(x) * delta + system.noise(db)


def hrk4_phi1(system: SdeSystem, x, forcing, delta: float) -> np.ndarray:
    """RK4-type stage average with the constant forcing σΔb/δ added to every stage.

    All three inner stages advance by δ/2, k4 included.
    """
    _check_delta(delta)
    x = np.asarray(x, dtype=float)
    g = np.asarray(forcing, dtype=float) / delta
    k1 = system.drift(x) + g
    k2 = system.drift(x + k1 * (delta / 2.0)) + g
    k3 = system.drift(x + k2 * (delta / 2.0)) + g
    k4 = system.drift(x + k3 * (delta / 2.0)) + g
    return (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def hrk4_step(system: SdeSystem, x, db, delta: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    forcing = system.noise(db)
    return x + hrk4_phi1(system, x, forcing, delta) * delta + forcing


# ── implicit drift solve ────────────────────────────────

def solve_implicit(system: SdeSystem, x, delta: float,
                   opts: ImplicitSolverOptions = DEFAULT_SOLVER):
    """Newton-Raphson for X* = x + δ f(X*), row by row.

    Returns (X*, ok, iterations). Rows that fail (no convergence, singular or
    non-finite Newton matrix) come back with ok=False and unspecified values.
    Converged rows are frozen, so a row's result does not depend on the
    batch it was solved in.
    """
    _check_delta(delta)
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x2 = x.reshape(-1, system.d)
    X = x2.copy()
    ok = np.ones(len(X), dtype=bool)
    iterations = np.zeros(len(X), dtype=int)
    active = np.arange(len(X))
    eye = np.eye(system.d)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(opts.max_iterations):
            if active.size == 0:
                break
            Xa = X[active]
            iterations[active] += 1
            rhs = x2[active] + delta * system.drift(Xa) - Xa
            J = eye - delta * system.jacobian(Xa)
            step, good = _newton_step(J, rhs)
            bad = ~good | ~np.all(np.isfinite(step), axis=-1)
            ok[active[bad]] = False
            X[active] = Xa + np.where(bad[:, None], 0.0, step)
            done = np.max(np.abs(step), axis=-1) <= opts.tolerance
            active = active[~bad & ~done]
        ok[active] = False
    return X.reshape(shape), ok.reshape(shape[:-1]), iterations.reshape(shape[:-1])


def _newton_step(J: np.ndarray, rhs: np.ndarray):
    """Solve J·step = rhs per row; flag rows whose condition number is too large."""
    if J.shape[-1] == 1:
        j = J[:, 0, 0]
        good = np.isfinite(j) & (j != 0.0)
        step = rhs / np.where(good, j, 1.0)[:, None]
        return step, good
    eye = np.eye(J.shape[-1])
    finite = np.all(np.isfinite(J), axis=(-2, -1)) & np.all(np.isfinite(rhs), axis=-1)
    cond = np.linalg.cond(np.where(finite[:, None, None], J, eye))
    good = finite & (cond <= cfg.CONDITION_LIMIT)
    safe = np.where(good[:, None, None], J, eye)
    step = np.linalg.solve(safe, rhs[..., None])[..., 0]
    return step, good


def ssbe_step(system: SdeSystem, x, db, delta: float,
              opts: ImplicitSolverOptions = DEFAULT_SOLVER) -> np.ndarray:
    """X* + σΔb with X* = x + δ f(X*); raises on any failed row."""
    x = np.asarray(x, dtype=float)
    xstar, ok, _ = solve_implicit(system, x, delta, opts)
    if not np.all(ok):
        _raise_failure(system, x, delta, ok, opts)
    return xstar + system.noise(db)


def _raise_failure(system, x, delta, ok, opts):
    rows = np.flatnonzero(~np.asarray(ok).reshape(-1))
    J = np.eye(system.d) - delta * system.jacobian(np.asarray(x).reshape(-1, system.d)[rows])
    with np.errstate(all="ignore"):
        finite = np.all(np.isfinite(J), axis=(-2, -1))
        if system.d > 1:
            cond = np.linalg.cond(np.where(finite[:, None, None], J, np.eye(system.d)))
        else:
            cond = np.where(J[:, 0, 0] == 0, np.inf, 1.0)
    if np.any(~finite | (cond > cfg.CONDITION_LIMIT)):
        raise SingularNewtonMatrix(f"I - δ∇f is singular for rows {rows.tolist()}")
    raise NonConvergence(opts.max_iterations, rows=rows.tolist())


# ── compiled fine-step SSBE ─────────────────────────────

FINE_OK = 0
FINE_SOLVE_FAILED = 1
FINE_THRESHOLD = 2

FINE_REASONS = {FINE_SOLVE_FAILED: "implicit solve failed", FINE_THRESHOLD: "threshold exceeded"}


@njit(nogil=True)
def _ssbe_fine_kernel(drift, jac, params, sigma, x, acc, first_step, dw, dt, gap,
                      tol, max_iter, threshold, cond_limit, X_out, dB_out):
    d = x.shape[0]
    m = dw.shape[1]
    eye = np.eye(d)
    for j in range(dw.shape[0]):
        step = first_step + j + 1
        X = x.copy()
        converged = False
        for _ in range(max_iter):
            rhs = x + dt * drift(X, params) - X
            A = eye - dt * jac(X, params)
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(rhs))):
                return step, FINE_SOLVE_FAILED
            if d == 1:
                if A[0, 0] == 0.0:
                    return step, FINE_SOLVE_FAILED
                dx = rhs / A[0, 0]
            else:
                if np.linalg.cond(A) > cond_limit:
                    return step, FINE_SOLVE_FAILED
                dx = np.linalg.solve(A, rhs)
            if not np.all(np.isfinite(dx)):
                return step, FINE_SOLVE_FAILED
            X = X + dx
            if np.max(np.abs(dx)) <= tol:
                converged = True
                break
        if not converged:
            return step, FINE_SOLVE_FAILED
        for i in range(d):
            s = 0.0
            for q in range(m):
                s += dw[j, q] * sigma[i, q]
            x[i] = X[i] + s
        for q in range(m):
            acc[q] += dw[j, q]
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > threshold:
            return step, FINE_THRESHOLD
        if step % gap == 0:
            n = step // gap
            X_out[n, :] = x
            dB_out[n - 1, :] = acc
            acc[:] = 0.0
    return 0, FINE_OK


def ssbe_fine_path(system: SdeSystem, x: np.ndarray, acc: np.ndarray, first_step: int, dw: np.ndarray,
                   dt: float, gap: int, X_out: np.ndarray, dB_out: np.ndarray,
                   opts: ImplicitSolverOptions = DEFAULT_SOLVER,
                   threshold: float = cfg.BLOWUP_THRESHOLD) -> tuple[int, str | None]:
    """One trajectory through len(dw) SSBE steps at dt, in compiled code.

    Same Newton iteration as solve_implicit. x and acc (the increments summed
    since the last record) are updated in place; after global step s with
    s % gap == 0 the state goes to X_out[s // gap] and acc to dB_out[s // gap - 1].
    Returns (0, None), or the failing step and the reason.
    """
    _check_delta(dt)
    fields = system.compiled
    if fields is None:
        raise ConfigError(f"{system.name}: no compiled vector fields")
    step, code = _ssbe_fine_kernel(
        fields.drift, fields.jacobian, fields.params, np.ascontiguousarray(system.diffusion),
        x, acc, int(first_step), np.ascontiguousarray(dw, dtype=float), float(dt), int(gap),
        float(opts.tolerance), int(opts.max_iterations), float(threshold), float(cfg.CONDITION_LIMIT),
        X_out, dB_out,
    )
    return int(step), FINE_REASONS.get(int(code))


# ── dispatch ────────────────────────────────────────────

def scheme_step(kind: str, system: SdeSystem, x, db, delta: float,
                opts: ImplicitSolverOptions = DEFAULT_SOLVER) -> np.ndarray:
    if kind == SchemeKind.EM:
        return em_step(system, x, db, delta)
    if kind == SchemeKind.HRK4:
        return hrk4_step(system, x, db, delta)
    if kind == SchemeKind.SSBE:
        return ssbe_step(system, x, db, delta, opts)
    raise ConfigError(f"unknown scheme {kind!r}")


def flow_map(kind: str, system: SdeSystem, x, db, delta: float,
             opts: ImplicitSolverOptions = DEFAULT_SOLVER) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (scheme_step(kind, system, x, db, delta, opts) - x) / delta

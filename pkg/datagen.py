"""
ISALT – Reference Data Generation
Fine-step SSBE paths, coarse Brownian increments, downsampling to δ = gap·dt,
initial conditions from a long trajectory, and an exact OU sampler.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

import config as cfg
import streams
from errors import BlowUp, ConfigError, ShapeMismatch
from integrators import DEFAULT_SOLVER, ImplicitSolverOptions, solve_implicit, ssbe_fine_path
from sde_systems import SdeSystem, make_linear_system

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationConfig:
    system: SdeSystem
    dt: float
    total_steps: int
    gap: int
    M: int
    seed: int
    burn_in_steps: int = 0
    blowup_threshold: float = cfg.BLOWUP_THRESHOLD
    solver: ImplicitSolverOptions = DEFAULT_SOLVER

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.gap < 1:
            raise ConfigError(f"gap must be at least 1, got {self.gap}")
        if self.total_steps < 1 or self.total_steps % self.gap:
            raise ConfigError(f"total_steps={self.total_steps} must be a positive multiple of gap={self.gap}")
        if not 0 <= self.burn_in_steps < self.total_steps:
            raise ConfigError("burn_in_steps must be below total_steps")
        if self.M < 0:
            raise ConfigError("M must be non-negative")

    @property
    def N(self) -> int:
        return self.total_steps // self.gap

    @property
    def delta(self) -> float:
        return self.gap * self.dt


@dataclass(eq=False)
class TrajectoryDataset:
    """M trajectories: X is M×(N+1)×d at spacing δ, dB is M×N×m."""

    X: np.ndarray
    dB: np.ndarray
    delta: float
    dt: float
    gap: int
    system_name: str
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.dB = np.asarray(self.dB, dtype=float)
        if self.X.ndim != 3 or self.dB.ndim != 3:
            raise ShapeMismatch("X and dB must be three-dimensional")
        if self.dB.shape[:2] != (self.X.shape[0], self.X.shape[1] - 1):
            raise ShapeMismatch(f"dB shape {self.dB.shape} does not fit X shape {self.X.shape}")

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1] - 1

    @property
    def d(self) -> int:
        return self.X.shape[2]

    @property
    def m(self) -> int:
        return self.dB.shape[2]

    def take(self, trajectories=slice(None), window: slice = slice(None)) -> "TrajectoryDataset":
        """Sub-dataset over some trajectories and a window of steps [start, stop)."""
        start, stop, _ = window.indices(self.N)
        return TrajectoryDataset(
            X=self.X[trajectories, start:stop + 1], dB=self.dB[trajectories, start:stop],
            delta=self.delta, dt=self.dt, gap=self.gap, system_name=self.system_name,
            seed=self.seed, meta=dict(self.meta),
        )

    def concatenate(self, other: "TrajectoryDataset") -> "TrajectoryDataset":
        if (other.delta, other.system_name, other.N) != (self.delta, self.system_name, self.N):
            raise ShapeMismatch("datasets differ in δ, system or length")
        return TrajectoryDataset(
            X=np.concatenate([self.X, other.X]), dB=np.concatenate([self.dB, other.dB]),
            delta=self.delta, dt=self.dt, gap=self.gap, system_name=self.system_name,
            seed=self.seed, meta=dict(self.meta),
        )

    def increment_z_scores(self) -> np.ndarray:
        """Per noise column z-scores of the empirical mean and variance of ΔB against N(0, δ)."""
        db = self.dB.reshape(-1, self.m)
        n = len(db)
        mean_z = db.mean(axis=0) / np.sqrt(self.delta / n)
        var_z = (np.mean(db**2, axis=0) - self.delta) / (self.delta * np.sqrt(2.0 / n))
        return np.stack([mean_z, var_z])


@dataclass(eq=False)
class LongTrajectory:
    X: np.ndarray
    dt: float
    seed: int
    system_name: str

    def as_dataset(self) -> TrajectoryDataset:
        """A one-trajectory dataset with no stored increments (m = 0)."""
        K = len(self.X) - 1
        return TrajectoryDataset(X=self.X[None], dB=np.zeros((1, K, 0)), delta=self.dt,
                                 dt=self.dt, gap=1, system_name=self.system_name, seed=self.seed)

    @classmethod
    def from_dataset(cls, ds: TrajectoryDataset) -> "LongTrajectory":
        if ds.M != 1:
            raise ShapeMismatch(f"a long trajectory file holds one path, found {ds.M}")
        return cls(X=ds.X[0], dt=ds.delta, seed=ds.seed, system_name=ds.system_name)


def _blowup(row: int, step: int, reason: str) -> BlowUp:
    log.error("trajectory %d: %s at step %d", row, reason, step)
    return BlowUp(row, step, reason)


def _blown(x: np.ndarray, threshold: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return ~np.all(np.isfinite(x), axis=-1) | (np.max(np.abs(x), axis=-1) > threshold)


# ── long reference path ─────────────────────────────────

def generate_long_trajectory(system: SdeSystem, x0, dt: float, steps: int, seed: int,
                             opts: ImplicitSolverOptions = DEFAULT_SOLVER,
                             blowup_threshold: float = cfg.BLOWUP_THRESHOLD) -> LongTrajectory:
    if steps < 1:
        raise ConfigError("a long trajectory needs at least one step")
    X = np.empty((steps + 1, system.d))
    X[0] = np.asarray(x0, dtype=float).reshape(system.d)
    x = X[:1].copy()
    acc = np.zeros(system.m)
    scratch = np.empty((steps, system.m)) if system.compiled is not None else None
    noise = streams.NormalStream(streams.stream(seed, streams.LONG), system.m, cfg.NOISE_CHUNK)
    scale = np.sqrt(dt)
    k = 0
    while k < steps:
        n = min(cfg.NOISE_CHUNK, steps - k)
        dw = noise.take(n) * scale
        if scratch is not None:
            failed, reason = ssbe_fine_path(system, x[0], acc, k, dw, dt, 1, X, scratch, opts, blowup_threshold)
            if reason is not None:
                raise _blowup(0, failed, reason)
            k += n
            continue
        for j in range(n):
            xstar, ok, _ = solve_implicit(system, x, dt, opts)
            if not ok[0]:
                raise _blowup(0, k + j + 1, "implicit solve failed")
            x = xstar + system.noise(dw[j])
            if _blown(x, blowup_threshold)[0]:
                raise _blowup(0, k + j + 1, "threshold exceeded")
            X[k + j + 1] = x[0]
        k += n
    return LongTrajectory(X=X, dt=dt, seed=seed, system_name=system.name)


def sample_initial_conditions(long: LongTrajectory, M: int, burn_in_steps: int, seed: int) -> np.ndarray:
    """M states drawn uniformly, with replacement, from indices after the burn-in."""
    if not 0 <= burn_in_steps < len(long.X) - 1:
        raise ConfigError(f"burn-in {burn_in_steps} leaves no states in a path of {len(long.X)}")
    if M == 0:
        return np.empty((0, long.X.shape[1]))
    idx = streams.stream(seed, streams.INITIALS).integers(burn_in_steps + 1, len(long.X), size=M)
    return long.X[idx].copy()


# ── dataset generation ──────────────────────────────────

def generate_dataset(gen: GenerationConfig, initials: np.ndarray, workers: int | None = None) -> TrajectoryDataset:
    """SSBE at dt for every trajectory, recording every gap steps.

    The fine increments of trajectory m depend only on (seed, m), so datasets
    sharing a seed at different gaps are downsamplings of one another.
    """
    system = gen.system
    initials = np.asarray(initials, dtype=float).reshape(-1, system.d)
    if len(initials) != gen.M:
        raise ShapeMismatch(f"expected {gen.M} initial conditions, got {len(initials)}")
    X = np.empty((gen.M, gen.N + 1, system.d))
    dB = np.empty((gen.M, gen.N, system.m))
    X[:, 0] = initials

    def run(block: range):
        rows = np.arange(block.start, block.stop)
        _advance_block(gen, rows, initials[rows], X, dB)

    streams.map_blocks(run, gen.M, workers)
    log.info("generated %d trajectories of %d steps at gap %d", gen.M, gen.N, gen.gap)
    return TrajectoryDataset(X=X, dB=dB, delta=gen.delta, dt=gen.dt, gap=gen.gap,
                             system_name=system.name, seed=gen.seed)


def _advance_block(gen: GenerationConfig, rows: np.ndarray, x0: np.ndarray, X: np.ndarray, dB: np.ndarray):
    if gen.system.compiled is not None:
        _advance_compiled(gen, rows, x0, X, dB)
    else:
        _advance_batched(gen, rows, x0, X, dB)


def _advance_compiled(gen: GenerationConfig, rows: np.ndarray, x0: np.ndarray, X: np.ndarray, dB: np.ndarray):
    """Row by row in compiled code; the earliest (step, row) failure is reported."""
    system = gen.system
    scale = np.sqrt(gen.dt)
    failures = []
    for i, r in enumerate(rows):
        r = int(r)
        noise = streams.NormalStream(streams.stream(gen.seed, streams.DATA, r), system.m, cfg.NOISE_CHUNK)
        x = x0[i].copy()
        acc = np.zeros(system.m)
        k = 0
        while k < gen.total_steps:
            n = min(cfg.NOISE_CHUNK, gen.total_steps - k)
            failed, reason = ssbe_fine_path(system, x, acc, k, noise.take(n) * scale, gen.dt, gen.gap,
                                            X[r], dB[r], gen.solver, gen.blowup_threshold)
            if reason is not None:
                failures.append((failed, r, reason))
                break
            k += n
    if failures:
        step, row, reason = min(failures)
        raise _blowup(row, step, reason)


def _advance_batched(gen: GenerationConfig, rows: np.ndarray, x0: np.ndarray, X: np.ndarray, dB: np.ndarray):
    system = gen.system
    noises = [streams.NormalStream(streams.stream(gen.seed, streams.DATA, int(r)), system.m, cfg.NOISE_CHUNK)
              for r in rows]
    scale = np.sqrt(gen.dt)
    x = x0.copy()
    acc = np.zeros((len(rows), system.m))
    k = 0
    while k < gen.total_steps:
        n = min(cfg.NOISE_CHUNK, gen.total_steps - k)
        dw = np.stack([ns.take(n) for ns in noises], axis=1) * scale if len(rows) else np.empty((n, 0, system.m))
        for j in range(n):
            step = k + j + 1
            xstar, ok, _ = solve_implicit(system, x, gen.dt, gen.solver)
            if not np.all(ok):
                raise _blowup(int(rows[np.flatnonzero(~ok)[0]]), step, "implicit solve failed")
            x = xstar + system.noise(dw[j])
            acc += dw[j]
            blown = _blown(x, gen.blowup_threshold)
            if np.any(blown):
                raise _blowup(int(rows[np.flatnonzero(blown)[0]]), step, "threshold exceeded")
            if step % gen.gap == 0:
                n_idx = step // gen.gap
                X[rows, n_idx] = x
                dB[rows, n_idx - 1] = acc
                acc = np.zeros_like(acc)
        k += n


# ── exact Ornstein-Uhlenbeck data ───────────────────────

def ornstein_uhlenbeck_dataset(a: float, sigma: float, delta: float, M: int, N: int, seed: int,
                               x0=None) -> TrajectoryDataset:
    """Exact joint samples of (X_{n+1}, ΔB_n) for dX = -aX dt + σ dB.

    Initial states come from the stationary law N(0, σ²/2a) unless x0 is given.
    The dataset matches make_linear_system(a, sigma).
    """
    if not a > 0 or not delta > 0:
        raise ConfigError("the exact OU sampler needs a > 0 and δ > 0")
    decay = np.exp(-a * delta)
    cov = (1.0 - decay) / a                           # Cov(∫e^{-a(δ-s)}dB, ΔB)
    var_i = (1.0 - decay**2) / (2.0 * a)
    resid = np.sqrt(max(var_i - cov**2 / delta, 0.0))
    X = np.empty((M, N + 1, 1))
    dB = np.empty((M, N, 1))
    for r in range(M):
        gen = streams.stream(seed, streams.DATA, r)
        start = gen.standard_normal() * sigma / np.sqrt(2.0 * a) if x0 is None else float(x0)
        db = gen.standard_normal(N) * np.sqrt(delta)
        integral = (cov / delta) * db + resid * gen.standard_normal(N)
        X[r, 0, 0] = start
        X[r, 1:, 0] = lfilter([1.0], [1.0, -decay], sigma * integral, zi=[decay * start])[0]
        dB[r, :, 0] = db
    return TrajectoryDataset(X=X, dB=dB, delta=delta, dt=delta, gap=1,
                             system_name=make_linear_system(a, sigma).name, seed=seed,
                             meta={"a": a, "sigma": sigma, "exact": "ornstein-uhlenbeck"})

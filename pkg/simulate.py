"""
ISALT – Simulation
Runs inferred schemes (and plain schemes at the same δ) for long paths and
ensembles, with blow-up flags instead of exceptions.
"""

import logging
from dataclasses import dataclass

import numpy as np

import config as cfg
import streams
from basis import eval_basis_rows
from datagen import TrajectoryDataset
from errors import BlowUp, ConfigError
from inference import InferredScheme
from integrators import (DEFAULT_SOLVER, ImplicitSolverOptions, SchemeKind, em_step,
                         hrk4_step, solve_implicit)
from sde_systems import SdeSystem

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PlainScheme:
    """EM, HRK4 or SSBE run directly at the coarse step δ."""

    kind: str
    system: SdeSystem
    delta: float
    gap: int = 1
    solver: ImplicitSolverOptions = DEFAULT_SOLVER

    def __post_init__(self):
        if self.kind not in SchemeKind.ALL:
            raise ConfigError(f"unknown scheme {self.kind!r}")
        if not self.delta > 0:
            raise ConfigError(f"δ must be positive, got {self.delta}")

    @property
    def label(self) -> str:
        return f"plain-{self.kind}_gap-{self.gap:04d}"

    def step_batch(self, x, xi, eta):
        if self.kind == SchemeKind.EM:
            return em_step(self.system, x, xi, self.delta), np.ones(len(x), dtype=bool)
        if self.kind == SchemeKind.HRK4:
            return hrk4_step(self.system, x, xi, self.delta), np.ones(len(x), dtype=bool)
        xstar, ok, _ = solve_implicit(self.system, x, self.delta, self.solver)
        return xstar + self.system.noise(xi), ok


Scheme = InferredScheme | PlainScheme


def step_inferred(scheme: InferredScheme, x, xi, eta) -> np.ndarray:
    """x + δ Σ_i c_i φ_i(x, ξ) + δ σ_η η, row-wise; failed rows come back as NaN."""
    x_new, ok = _step_inferred_rows(scheme, np.asarray(x, dtype=float), xi, eta)
    return np.where(np.asarray(ok)[..., None], x_new, np.nan)


def _step_inferred_rows(scheme: InferredScheme, x, xi, eta):
    phi, ok = eval_basis_rows(scheme.basis, x, xi)
    drift = np.einsum("...ik,ki->...k", phi, scheme.coefficients)
    return x + scheme.delta * drift + scheme.delta * scheme.sigma_eta * np.asarray(eta, dtype=float), ok


def _step(scheme: Scheme, x, xi, eta):
    if isinstance(scheme, PlainScheme):
        return scheme.step_batch(x, xi, eta)
    return _step_inferred_rows(scheme, x, xi, eta)


def _needs_eta(scheme: Scheme) -> bool:
    return isinstance(scheme, InferredScheme) and bool(np.any(scheme.sigma_eta > 0))


@dataclass(frozen=True, eq=False)
class SimConfig:
    scheme: Scheme
    x0: np.ndarray
    steps: int
    seed: int
    blowup_threshold: float = cfg.BLOWUP_THRESHOLD
    record_every: int = 1
    keep_increments: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("simulation needs at least one step")
        if self.record_every < 1:
            raise ConfigError("record_every must be at least 1")
        if self.keep_increments and self.record_every != 1:
            raise ConfigError("increments are only kept when every step is recorded")

    @property
    def initials(self) -> np.ndarray:
        return np.asarray(self.x0, dtype=float).reshape(-1, self.scheme.system.d)


@dataclass(eq=False)
class SimResult:
    paths: np.ndarray               # M × L × d; sample i sits at time i·record_every·δ
    blown_up: np.ndarray            # M flags
    blowup_step: np.ndarray         # first blown-up step per member, -1 if none
    delta: float
    record_every: int
    system_name: str
    seed: int
    increments: np.ndarray | None = None

    @property
    def any_blowup(self) -> bool:
        return bool(np.any(self.blown_up))

    @property
    def first_blowup(self) -> int | None:
        steps = self.blowup_step[self.blown_up]
        return int(steps.min()) if steps.size else None

    def times(self) -> np.ndarray:
        return np.arange(self.paths.shape[1]) * self.record_every * self.delta

    def as_dataset(self) -> TrajectoryDataset:
        """Recorded paths in dataset form (no increments unless they were kept)."""
        M, L, _ = self.paths.shape
        dB = self.increments if self.increments is not None else np.zeros((M, L - 1, 0))
        return TrajectoryDataset(X=self.paths, dB=dB, delta=self.delta * self.record_every,
                                 dt=self.delta, gap=self.record_every,
                                 system_name=self.system_name, seed=self.seed)


def simulate(sim: SimConfig, workers: int | None = None) -> SimResult:
    scheme = sim.scheme
    system = scheme.system
    x0 = sim.initials
    M = len(x0)
    L = sim.steps // sim.record_every + 1
    paths = np.full((M, L, system.d), np.nan)
    paths[:, 0] = x0
    blown = np.zeros(M, dtype=bool)
    first = np.full(M, -1)
    increments = np.empty((M, sim.steps, system.m)) if sim.keep_increments else None

    def run(block: range):
        rows = np.arange(block.start, block.stop)
        _run_block(sim, rows, x0[rows], paths, blown, first, increments)

    streams.map_blocks(run, M, workers)
    if np.any(blown):
        log.warning("%s: %d of %d members blew up (first at step %d)",
                    getattr(scheme, "label", "scheme"), int(blown.sum()), M, int(first[blown].min()))
    return SimResult(paths=paths, blown_up=blown, blowup_step=first, delta=scheme.delta,
                     record_every=sim.record_every, system_name=system.name, seed=sim.seed,
                     increments=increments)


def _run_block(sim: SimConfig, rows, x0, paths, blown, first, increments):
    scheme = sim.scheme
    system = scheme.system
    xi_streams = [streams.NormalStream(streams.stream(sim.seed, streams.SIM, int(r), streams.XI),
                                       system.m, cfg.NOISE_CHUNK) for r in rows]
    eta_streams = None
    if _needs_eta(scheme):
        eta_streams = [streams.NormalStream(streams.stream(sim.seed, streams.SIM, int(r), streams.ETA),
                                            system.d, cfg.NOISE_CHUNK) for r in rows]
    scale = np.sqrt(scheme.delta)
    x = x0.copy()
    alive = np.ones(len(rows), dtype=bool)
    k = 0
    while k < sim.steps and np.any(alive):
        n = min(cfg.NOISE_CHUNK, sim.steps - k)
        xi = np.stack([s.take(n) for s in xi_streams], axis=1) * scale
        eta = np.stack([s.take(n) for s in eta_streams], axis=1) if eta_streams else np.zeros((n, len(rows), system.d))
        if increments is not None:
            increments[rows, k:k + n] = np.swapaxes(xi, 0, 1)
        for j in range(n):
            step = k + j + 1
            idx = np.flatnonzero(alive)
            with np.errstate(over="ignore", invalid="ignore"):
                x_new, ok = _step(scheme, x[idx], xi[j, idx], eta[j, idx])
                bad = ~ok | ~np.all(np.isfinite(x_new), axis=-1) | (
                    np.max(np.abs(x_new), axis=-1) > sim.blowup_threshold)
            x[idx] = np.where(bad[:, None], np.nan, x_new)
            if np.any(bad):
                dead = idx[bad]
                alive[dead] = False
                blown[rows[dead]] = True
                first[rows[dead]] = step
            if step % sim.record_every == 0:
                paths[rows, step // sim.record_every] = x
            if not np.any(alive):
                break
        k += n


def synthesize_dataset(scheme: InferredScheme, initials, N: int, seed: int,
                       workers: int | None = None) -> TrajectoryDataset:
    """Data generated by the inferred-scheme model itself, with ΔB = ξ."""
    result = simulate(SimConfig(scheme=scheme, x0=initials, steps=N, seed=seed, keep_increments=True), workers)
    if result.any_blowup:
        member = int(np.flatnonzero(result.blown_up)[0])
        raise BlowUp(member, int(result.blowup_step[member]), "synthetic model diverged")
    return TrajectoryDataset(X=result.paths, dB=result.increments, delta=scheme.delta,
                             dt=scheme.delta / scheme.gap, gap=scheme.gap,
                             system_name=scheme.system.name, seed=seed,
                             meta={"synthetic": scheme.label})

"""
ISALT – Inference
Per-coordinate least squares for the basis coefficients, residual noise
scales, and the convergence / residual-order studies.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import config as cfg
import streams
from artifacts import read_json, write_json
from basis import BasisFamily, eval_basis
from datagen import TrajectoryDataset
from errors import ConfigError, ShapeMismatch
from sde_systems import SdeSystem, resolve_system

log = logging.getLogger(__name__)


@dataclass
class NormalEquations:
    """A[k] is the (p+1)×(p+1) normal matrix of coordinate k, b[k] its right-hand side."""

    A: np.ndarray
    b: np.ndarray
    sample_count: int


@dataclass(eq=False)
class InferredScheme:
    family: str
    include_c0: bool
    delta: float
    gap: int
    dt: float
    system: SdeSystem
    coefficients: np.ndarray            # d × (p+1), row k holds coordinate k
    sigma_eta: np.ndarray               # d
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(self.system.d, -1)
        self.sigma_eta = np.asarray(self.sigma_eta, dtype=float).reshape(self.system.d)
        if self.coefficients.shape[1] != self.basis.size:
            raise ShapeMismatch(f"{self.basis.label} needs {self.basis.size} coefficients per coordinate")
        if not np.all(np.isfinite(self.coefficients)):
            raise ConfigError("inferred coefficients must be finite")
        if np.any(self.sigma_eta < 0) or not np.all(np.isfinite(self.sigma_eta)):
            raise ConfigError("residual scales must be finite and non-negative")

    @property
    def basis(self) -> BasisFamily:
        return BasisFamily(self.family, self.include_c0, self.delta, self.system)

    @property
    def label(self) -> str:
        return f"{self.basis.label}_gap-{self.gap:04d}"

    # ── JSON ─────────────────────────────────────────────

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "include_c0": self.include_c0,
            "delta": self.delta,
            "gap": self.gap,
            "dt": self.dt,
            "system": {"name": self.system.name, "definition": self.system.definition},
            "labels": list(self.basis.labels),
            "coefficients": self.coefficients.tolist(),
            "sigma_eta": self.sigma_eta.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, data: dict) -> "InferredScheme":
        try:
            system = resolve_system(data["system"]["name"], data["system"].get("definition"))
            return cls(
                family=data["family"], include_c0=bool(data["include_c0"]),
                delta=float(data["delta"]), gap=int(data["gap"]), dt=float(data["dt"]),
                system=system, coefficients=np.array(data["coefficients"], dtype=float),
                sigma_eta=np.array(data["sigma_eta"], dtype=float),
                provenance=dict(data.get("provenance", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed scheme document: {exc}") from None

    def save(self, path) -> Path:
        write_json(path, self.to_json())
        return Path(path)

    @classmethod
    def load(cls, path) -> "InferredScheme":
        return cls.from_json(read_json(path))


# ── normal equations ────────────────────────────────────

def _check_match(ds: TrajectoryDataset, fam: BasisFamily):
    system = fam.system
    if ds.system_name != system.name:
        raise ShapeMismatch(f"dataset is for {ds.system_name!r}, basis for {system.name!r}")
    if (ds.d, ds.m) != (system.d, system.m):
        raise ShapeMismatch(f"dataset has d={ds.d}, m={ds.m}; system has d={system.d}, m={system.m}")
    if not math.isclose(ds.delta, fam.delta, rel_tol=1e-12):
        raise ShapeMismatch(f"dataset δ={ds.delta} differs from basis δ={fam.delta}")
    if ds.N < 1:
        raise ShapeMismatch("dataset has no increments")


def _trajectory_partials(ds: TrajectoryDataset, fam: BasisFamily, workers: int | None = None):
    """Per-trajectory sums Σ_n φφᵀ (M,d,p+1,p+1) and Σ_n (ΔX/δ)φ (M,d,p+1)."""
    _check_match(ds, fam)

    def run(block: range):
        out = []
        for r in block:
            phi = eval_basis(fam, ds.X[r, :-1], ds.dB[r])
            dx = (ds.X[r, 1:] - ds.X[r, :-1]) / fam.delta
            out.append((np.einsum("nik,njk->kij", phi, phi), np.einsum("nk,nik->ki", dx, phi)))
        return out

    parts = [p for chunk in streams.map_blocks(run, ds.M, workers) for p in chunk]
    return np.array([p[0] for p in parts]), np.array([p[1] for p in parts])


def _exact_sum(parts: np.ndarray) -> np.ndarray:
    """Correctly rounded sum over axis 0, independent of trajectory order."""
    flat = parts.reshape(len(parts), -1)
    return np.array([math.fsum(col) for col in flat.T]).reshape(parts.shape[1:])


def accumulate_normal_equations(ds: TrajectoryDataset, fam: BasisFamily,
                                workers: int | None = None) -> NormalEquations:
    A_parts, b_parts = _trajectory_partials(ds, fam, workers)
    n = ds.M * ds.N
    return NormalEquations(A=_exact_sum(A_parts) / n, b=_exact_sum(b_parts) / n, sample_count=n)


# ── solve ───────────────────────────────────────────────

def _solve_coordinate(A: np.ndarray, b: np.ndarray, cutoff: float) -> tuple[np.ndarray, int]:
    c = np.zeros(len(b))
    keep = np.flatnonzero(np.diag(A) != 0.0)
    if keep.size == 0:
        return c, 0
    c[keep], _, rank, _ = np.linalg.lstsq(A[np.ix_(keep, keep)], b[keep], rcond=cutoff)
    return c, int(rank)


def _check_cutoff(svd_cutoff: float):
    if not 0.0 < svd_cutoff < 1.0:
        raise ConfigError(f"svd_cutoff must lie in (0, 1), got {svd_cutoff}")


def solve(ne: NormalEquations, svd_cutoff: float = cfg.SVD_CUTOFF) -> np.ndarray:
    """Minimum-norm least-squares coefficients, one coordinate at a time.

    Basis directions that vanish identically (zero diagonal) and directions
    below the relative singular-value cutoff get zero coefficients.
    """
    _check_cutoff(svd_cutoff)
    d, p = ne.b.shape
    coeffs = np.zeros((d, p))
    for k in range(d):
        coeffs[k], rank = _solve_coordinate(ne.A[k], ne.b[k], svd_cutoff)
        if rank < p:
            log.info("coordinate %d: normal matrix has rank %d of %d; using the minimum-norm solution",
                     k, rank, p)
    return coeffs


# ── residuals ───────────────────────────────────────────

def _trajectory_sq_residuals(ds, fam, c, workers=None) -> np.ndarray:
    _check_match(ds, fam)
    c = np.asarray(c, dtype=float).reshape(fam.system.d, fam.size)

    def run(block: range):
        out = []
        for r in block:
            phi = eval_basis(fam, ds.X[r, :-1], ds.dB[r])
            F = np.einsum("nik,ki->nk", phi, c)
            res = ds.X[r, 1:] - ds.X[r, :-1] - fam.delta * F
            out.append(np.sum(res * res, axis=0))
        return out

    return np.array([p for chunk in streams.map_blocks(run, ds.M, workers) for p in chunk])


def residual_scale(ds: TrajectoryDataset, fam: BasisFamily, c, workers: int | None = None) -> np.ndarray:
    """σ̂_η with σ̂²_k = Σ|ΔX_k - δF_k|² / (δ² M N)."""
    total = _exact_sum(_trajectory_sq_residuals(ds, fam, c, workers))
    return np.sqrt(total / (fam.delta**2 * ds.M * ds.N))


def infer(ds: TrajectoryDataset, fam: BasisFamily, svd_cutoff: float = cfg.SVD_CUTOFF,
          workers: int | None = None, dataset_id: str = "") -> InferredScheme:
    ne = accumulate_normal_equations(ds, fam, workers)
    c = solve(ne, svd_cutoff)
    sigma = residual_scale(ds, fam, c, workers)
    return InferredScheme(
        family=fam.family, include_c0=fam.include_c0, delta=fam.delta, gap=ds.gap, dt=ds.dt,
        system=fam.system, coefficients=c, sigma_eta=sigma,
        provenance={"dataset": dataset_id, "seed": ds.seed, "M": ds.M, "N": ds.N,
                    "samples": ne.sample_count},
    )


def single_trajectory_spread(ds: TrajectoryDataset, fam: BasisFamily, reference=None,
                             svd_cutoff: float = cfg.SVD_CUTOFF, workers: int | None = None) -> np.ndarray:
    """Standard deviation of single-trajectory estimators around the full estimator."""
    _check_cutoff(svd_cutoff)
    A_parts, b_parts = _trajectory_partials(ds, fam, workers)
    if reference is None:
        n = ds.M * ds.N
        reference = solve(NormalEquations(_exact_sum(A_parts) / n, _exact_sum(b_parts) / n, n), svd_cutoff)
    d, p = b_parts.shape[1:]
    singles = np.zeros((ds.M, d, p))
    for r in range(ds.M):
        for k in range(d):
            singles[r, k], _ = _solve_coordinate(A_parts[r, k] / ds.N, b_parts[r, k] / ds.N, svd_cutoff)
    return np.sqrt(np.mean((singles - np.asarray(reference)) ** 2, axis=0))


# ── studies ─────────────────────────────────────────────

@dataclass
class ConvergenceRow:
    M: int
    N: int
    samples: int
    rel_error: float                    # RMS over blocks of |c - c_ref| / |c_ref|
    coefficient_error: np.ndarray       # d × (p+1), RMS over blocks of |c - c_ref| / |c_ref|_k
    blocks: int


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    slope: float
    reference: np.ndarray
    label: str = ""

    def csv_rows(self):
        for r in self.rows:
            yield [r.M, r.N, r.samples, r.blocks, r.rel_error, *r.coefficient_error.ravel().tolist()]

    def csv_header(self, labels) -> list[str]:
        d = self.reference.shape[0]
        return ["M", "N", "samples", "blocks", "rel_error"] + [f"{lab}_x{k + 1}" for k in range(d) for lab in labels]

    def summary(self) -> dict:
        return {"label": self.label, "slope": self.slope, "reference": self.reference.tolist(),
                "samples": [r.samples for r in self.rows]}


def _loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    use = (x > 0) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(use) < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[use]), np.log(y[use]), 1)[0])


def convergence_study(ds: TrajectoryDataset, fam: BasisFamily, subset_grid, reference=None,
                      svd_cutoff: float = cfg.SVD_CUTOFF, max_blocks: int = cfg.CONVERGENCE_MAX_BLOCKS,
                      workers: int | None = None) -> ConvergenceReport:
    """Relative estimator error against a reference over growing (M, N) sub-datasets.

    The error at each size is the RMS over up to max_blocks disjoint blocks:
    trajectory blocks when M_sub < M, time windows of all trajectories
    otherwise. The first block is the (M_sub, N_sub) prefix. The reference
    defaults to the estimator on the whole dataset.
    """
    grid = sorted({(int(m), int(n)) for m, n in subset_grid}, key=lambda g: (g[0] * g[1], g))
    if len(grid) < cfg.MIN_STUDY_POINTS:
        raise ConfigError(f"a convergence study needs at least {cfg.MIN_STUDY_POINTS} grid points")
    sizes = [m * n for m, n in grid]
    if len(set(sizes)) != len(sizes):
        raise ConfigError("convergence grid sample sizes must be distinct")
    for m, n in grid:
        if not (1 <= m <= ds.M and 1 <= n <= ds.N):
            raise ConfigError(f"grid point ({m}, {n}) exceeds the dataset ({ds.M}, {ds.N})")
    if reference is None:
        reference = solve(accumulate_normal_equations(ds, fam, workers), svd_cutoff)
    reference = np.asarray(reference, dtype=float)
    ref_norm = np.linalg.norm(reference)
    row_norm = np.linalg.norm(reference, axis=1, keepdims=True)
    if ref_norm == 0:
        raise ConfigError("reference coefficients are all zero")

    rows = []
    for m_sub, n_sub in grid:
        if m_sub < ds.M:
            count = min(max_blocks, ds.M // m_sub)
            blocks = [ds.take(slice(i * m_sub, (i + 1) * m_sub), slice(0, n_sub)) for i in range(count)]
        else:
            count = min(max_blocks, ds.N // n_sub)
            blocks = [ds.take(slice(None), slice(i * n_sub, (i + 1) * n_sub)) for i in range(count)]
        errs, coef_errs = [], []
        for block in blocks:
            c = solve(accumulate_normal_equations(block, fam, workers), svd_cutoff)
            errs.append(np.linalg.norm(c - reference) / ref_norm)
            with np.errstate(divide="ignore", invalid="ignore"):
                coef_errs.append(np.abs(c - reference) / np.where(row_norm > 0, row_norm, np.nan))
        rows.append(ConvergenceRow(
            M=m_sub, N=n_sub, samples=m_sub * n_sub,
            rel_error=float(np.sqrt(np.mean(np.square(errs)))),
            coefficient_error=np.sqrt(np.mean(np.square(coef_errs), axis=0)),
            blocks=len(blocks),
        ))
    slope = _loglog_slope([r.samples for r in rows], [r.rel_error for r in rows])
    log.info("convergence study %s: slope %.3f over %d sizes", fam.label, slope, len(rows))
    return ConvergenceReport(rows=rows, slope=slope, reference=reference, label=fam.label)


@dataclass
class ResidualOrderRow:
    gap: int
    delta: float
    sigma_eta: np.ndarray
    coefficients: np.ndarray


@dataclass
class ResidualOrderReport:
    rows: list[ResidualOrderRow]
    slopes: np.ndarray                  # per coordinate, log σ̂_η against log δ
    plateau_ratio: np.ndarray           # per coordinate, max/min σ̂_η
    label: str = ""

    def csv_header(self, labels) -> list[str]:
        d = len(self.slopes)
        return (["gap", "delta"] + [f"sigma_eta_x{k + 1}" for k in range(d)]
                + [f"{lab}_x{k + 1}" for k in range(d) for lab in labels])

    def csv_rows(self):
        for r in self.rows:
            yield [r.gap, r.delta, *r.sigma_eta.tolist(), *r.coefficients.ravel().tolist()]

    def summary(self) -> dict:
        return {"label": self.label, "slopes": self.slopes.tolist(),
                "plateau_ratio": self.plateau_ratio.tolist(),
                "deltas": [r.delta for r in self.rows]}


def residual_order_study(datasets: list[TrajectoryDataset], fam: BasisFamily,
                         svd_cutoff: float = cfg.SVD_CUTOFF, workers: int | None = None) -> ResidualOrderReport:
    """σ̂_η and coefficients across gaps; fam supplies family, c0 flag and system (δ is taken per dataset)."""
    if len(datasets) < cfg.MIN_STUDY_POINTS:
        raise ConfigError(f"a residual-order study needs at least {cfg.MIN_STUDY_POINTS} gaps")
    ordered = sorted(datasets, key=lambda ds: ds.delta)
    deltas = [ds.delta for ds in ordered]
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ConfigError("residual-order datasets must have distinct δ")
    rows = []
    for ds in ordered:
        scheme = infer(ds, fam.with_delta(ds.delta), svd_cutoff, workers)
        rows.append(ResidualOrderRow(ds.gap, ds.delta, scheme.sigma_eta, scheme.coefficients))
    sig = np.array([r.sigma_eta for r in rows])
    slopes = np.array([_loglog_slope(deltas, sig[:, k]) for k in range(sig.shape[1])])
    with np.errstate(divide="ignore", invalid="ignore"):
        plateau = sig.max(axis=0) / sig.min(axis=0)
    log.info("residual-order study %s: slopes %s", fam.label, np.round(slopes, 3).tolist())
    return ResidualOrderReport(rows=rows, slopes=slopes, plateau_ratio=plateau, label=fam.label)

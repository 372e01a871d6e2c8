"""
ISALT – Statistics
Marginal densities, total variation distance, temporal correlations and
blow-up scans.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

import config as cfg
import streams
from artifacts import write_csv
from errors import ConfigError
from sde_systems import SdeSystem, stationary_density_unnormalized
from simulate import Scheme, SimConfig, simulate

log = logging.getLogger(__name__)


# ── histograms ──────────────────────────────────────────

@dataclass
class Histogram:
    coordinate: int
    edges: np.ndarray
    density: np.ndarray
    underflow: float = 0.0
    overflow: float = 0.0
    count: int = 0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * self.widths) + self.underflow + self.overflow)

    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def default_edges(reference, bins: int = cfg.HIST_BINS, pad: float = cfg.HIST_RANGE_PAD) -> np.ndarray:
    """Uniform edges over the reference min/max widened by pad on each side."""
    ref = np.asarray(reference, dtype=float).ravel()
    ref = ref[np.isfinite(ref)]
    if ref.size == 0:
        raise ConfigError("empty sample set")
    lo, hi = float(ref.min()), float(ref.max())
    span = hi - lo if hi > lo else 1.0
    return np.linspace(lo - pad * span, hi + pad * span, bins + 1)


def empirical_pdf(samples, bins: int = cfg.HIST_BINS, range: tuple[float, float] | None = None,
                  coordinate: int = 0, edges=None) -> Histogram:
    """Density normalized by the total count (out-of-range mass included) and bin width."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ConfigError("empty sample set")
    if np.any(np.isnan(s)):
        raise ConfigError("samples contain NaN")
    if edges is None:
        if bins < 2:
            raise ConfigError(f"histogram needs at least 2 bins, got {bins}")
        if range is None:
            edges = default_edges(s, bins)
        else:
            lo, hi = range
            if not lo < hi:
                raise ConfigError("histogram needs lo < hi")
            edges = np.linspace(lo, hi, bins + 1)
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(s[np.isfinite(s)], bins=edges)
    n = s.size
    return Histogram(
        coordinate=coordinate, edges=edges,
        density=counts / (n * np.diff(edges)),
        underflow=float(np.count_nonzero(s < edges[0])) / n,
        overflow=float(np.count_nonzero(s > edges[-1])) / n,
        count=n,
    )


def tvd(p: Histogram, q: Histogram) -> float:
    """½ Σ|p - q|·w plus half the out-of-range mass differences."""
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise ConfigError("histograms have different edges")
    inner = np.sum(np.abs(p.density - q.density) * p.widths)
    outer = abs(p.underflow - q.underflow) + abs(p.overflow - q.overflow)
    return float(min(max(0.5 * (inner + outer), 0.0), 1.0))


def analytic_histogram(system: SdeSystem, edges, domain: tuple[float, float] | None = None,
                       points: int = cfg.ANALYTIC_GRID_POINTS) -> Histogram:
    """Bin masses of exp(-βV)/Z for a scalar system, by trapezoid quadrature."""
    if system.d != 1:
        raise ConfigError("analytic histograms are only available for scalar systems")
    edges = np.asarray(edges, dtype=float)
    if domain is None:
        span = edges[-1] - edges[0]
        domain = (edges[0] - span, edges[-1] + span)
    grid = np.linspace(min(domain[0], edges[0]), max(domain[1], edges[-1]), points)
    rho = stationary_density_unnormalized(system, grid[:, None])
    cdf = cumulative_trapezoid(rho, grid, initial=0.0)
    cdf /= cdf[-1]
    at = np.interp(edges, grid, cdf)
    return Histogram(coordinate=0, edges=edges, density=np.diff(at) / np.diff(edges),
                     underflow=float(at[0]), overflow=float(1.0 - at[-1]), count=0)


def split_half_tvd(path, coordinate: int = 0, burn_in: int = 0, bins: int = cfg.HIST_BINS) -> float:
    """TVD between the marginals of the two halves of a path after burn-in."""
    x = np.asarray(path, dtype=float)
    x = x.reshape(len(x), -1)[burn_in:, coordinate]
    if len(x) < 4:
        raise ConfigError("path too short for a split-half check")
    edges = default_edges(x, bins)
    half = len(x) // 2
    return tvd(empirical_pdf(x[:half], edges=edges), empirical_pdf(x[half:], edges=edges))


# ── temporal correlation ────────────────────────────────

@dataclass
class AcfCurve:
    coordinate: int
    lags: np.ndarray
    values: np.ndarray

    def normalized(self) -> "AcfCurve":
        return AcfCurve(self.coordinate, self.lags, self.values / self.values[0])


def acf(path, max_lag: int = cfg.ACF_MAX_LAG, k: int = 0) -> AcfCurve:
    """C(h) = (1/(L-h)) Σ_n X_{n+h} X_n, not centred."""
    x = np.asarray(path, dtype=float)
    x = x.reshape(len(x), -1)[:, k]
    L = len(x)
    if max_lag < 0 or 2 * max_lag >= L - 1:
        raise ConfigError(f"path of {L} samples is too short for max_lag={max_lag}")
    values = np.array([np.dot(x[h:], x[:L - h]) / (L - h) for h in range(max_lag + 1)])
    return AcfCurve(coordinate=k, lags=np.arange(max_lag + 1), values=values)


# ── blow-up scan ────────────────────────────────────────

@dataclass
class BlowupRow:
    label: str
    gap: int
    blew_up: bool
    first_step: int | None


@dataclass
class BlowupTable:
    rows: list[BlowupRow]

    def labels(self) -> list[str]:
        return list(dict.fromkeys(r.label for r in self.rows))

    def for_label(self, label: str) -> list[BlowupRow]:
        return [r for r in self.rows if r.label == label]

    def first_blowup_gap(self, label: str) -> int | None:
        return next((r.gap for r in self.for_label(label) if r.blew_up), None)

    def stable_through(self, label: str) -> int | None:
        """Largest gap below the first blow-up (all gaps when none blew up)."""
        stable = None
        for r in self.for_label(label):
            if r.blew_up:
                break
            stable = r.gap
        return stable


SchemeBuilder = Callable[[int], Scheme | None]


def blowup_scan(system: SdeSystem, builders: dict[str, SchemeBuilder], gaps, steps: int = cfg.BLOWUP_STEPS,
                seeds: int = cfg.BLOWUP_SEEDS, seed: int = 0, x0=None, workers: int | None = None) -> BlowupTable:
    """Run `seeds` members per (scheme, gap) cell; a cell blows up if any member does.

    A builder returning None skips that gap for its label.
    """
    gaps = sorted(int(g) for g in gaps)
    if not gaps:
        raise ConfigError("blow-up scan needs at least one gap")
    start = np.zeros(system.d) if x0 is None else np.asarray(x0, dtype=float).reshape(system.d)
    cells = []
    for label, build in builders.items():
        for gap in gaps:
            scheme = build(gap)
            if scheme is not None:
                cells.append((label, gap, scheme))

    def run(cell):
        label, gap, scheme = cell
        sim = SimConfig(scheme=scheme, x0=np.tile(start, (seeds, 1)), steps=steps,
                        seed=streams.derive_seed(seed, streams.label_key(label), gap),
                        record_every=steps)
        res = simulate(sim, workers=1)
        return BlowupRow(label, gap, res.any_blowup, res.first_blowup)

    with ThreadPoolExecutor(max_workers=workers or cfg.worker_count()) as pool:
        rows = list(pool.map(run, cells))
    for label in builders:
        log.info("blow-up scan %s: first blow-up gap %s", label,
                 BlowupTable(rows).first_blowup_gap(label))
    return BlowupTable(rows)


# ── CSV export ──────────────────────────────────────────

def write_pdf_csv(path, hists: list[Histogram]):
    rows = []
    for h in hists:
        rows += [[h.coordinate + 1, lo, hi, dens] for lo, hi, dens in zip(h.edges[:-1], h.edges[1:], h.density)]
    write_csv(path, ["coordinate", "lo", "hi", "density"], rows)


def write_acf_csv(path, curves: list[AcfCurve], delta: float):
    rows = []
    for c in curves:
        norm = c.normalized().values
        rows += [[c.coordinate + 1, int(h), float(h) * delta, float(v), float(nv)]
                 for h, v, nv in zip(c.lags, c.values, norm)]
    write_csv(path, ["coordinate", "lag", "time", "acf", "acf_normalized"], rows)


def write_blowup_csv(path, table: BlowupTable):
    write_csv(path, ["scheme", "gap", "blew_up", "first_step"],
              [[r.label, r.gap, int(r.blew_up), "" if r.first_step is None else r.first_step]
               for r in table.rows])

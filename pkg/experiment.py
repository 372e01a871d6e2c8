"""
ISALT – Experiment Orchestrator
Runs the whole pipeline from a TOML config: reference data, inference over
the gap menu, simulation, evaluation, studies and the text report.
"""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

import config as cfg
import streams
from artifacts import Manifest, atomic_write_text, read_csv, read_json, write_csv, write_json
from basis import DEFAULT_SETTINGS, BasisFamily, Family
from datagen import (GenerationConfig, LongTrajectory, generate_dataset, generate_long_trajectory,
                     sample_initial_conditions)
from dataset_io import read_dataset, sidecar_path, write_dataset
from errors import ConfigError, MissingArtifact
from inference import (InferredScheme, convergence_study, infer, residual_order_study,
                       single_trajectory_spread)
from integrators import SchemeKind
from report import Report
from sde_systems import BENCHMARK_DEFS, SdeSystem, resolve_system
from simulate import PlainScheme, SimConfig, simulate, synthesize_dataset
from stats import (BlowupRow, BlowupTable, acf, blowup_scan, default_edges, empirical_pdf, tvd,
                   write_acf_csv, write_blowup_csv, write_pdf_csv)

log = logging.getLogger(__name__)


class StudyKind:
    CONVERGENCE = "convergence"
    RESIDUAL_ORDER = "residual-order"
    BLOWUP_SCAN = "blowup-scan"

    ALL = (CONVERGENCE, RESIDUAL_ORDER, BLOWUP_SCAN)


class ArtifactKind:
    LONG = "long"
    DATASET = "dataset"
    SCHEME = "scheme"
    TABLE = "table"
    EVAL = "eval"
    STUDY = "study"
    REPORT = "report"


# ── configuration ───────────────────────────────────────

@dataclass(frozen=True)
class ExperimentConfig:
    system_name: str
    system_definition: dict | None
    dt: float
    long_steps: int
    x0: tuple[float, ...]
    trajectories: int
    horizon: float
    gaps: tuple[int, ...]
    seed: int
    output_dir: Path
    burn_in_fraction: float = cfg.BURN_IN_FRACTION
    families: tuple[tuple[str, bool], ...] = DEFAULT_SETTINGS
    svd_cutoff: float = cfg.SVD_CUTOFF
    sim_steps: int = 100_000
    bins: int = cfg.HIST_BINS
    max_lag: int = cfg.ACF_MAX_LAG
    plain: tuple[str, ...] = SchemeKind.ALL
    blowup_steps: int = cfg.BLOWUP_STEPS
    blowup_seeds: int = cfg.BLOWUP_SEEDS
    blowup_gaps: tuple[int, ...] = ()
    convergence_gap: int | None = None
    convergence_grid: tuple[tuple[int, int], ...] = ()
    study_source: str = "data"
    synthetic: dict = field(default_factory=dict)
    residual_gaps: tuple[int, ...] = ()
    preset: str = cfg.PRESET_FULL

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("[data] dt must be positive")
        if not self.gaps:
            raise ConfigError("[data] gaps must not be empty")
        if list(self.gaps) != sorted(set(self.gaps)) or self.gaps[0] < 1:
            raise ConfigError("[data] gaps must be positive and strictly ascending")
        if self.long_steps < 2 or self.trajectories < 1:
            raise ConfigError("[data] long_steps and trajectories must be positive")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError("[data] burn_in_fraction must lie in [0, 1)")
        if self.horizon_steps < self.gaps[-1]:
            raise ConfigError("[data] horizon is shorter than the largest gap")
        for family, _ in self.families:
            if family not in Family.ALL:
                raise ConfigError(f"[inference] unknown family {family!r}")
        for kind in self.plain:
            if kind not in SchemeKind.ALL:
                raise ConfigError(f"[evaluate] unknown plain scheme {kind!r}")
        if self.study_source not in ("data", "synthetic"):
            raise ConfigError("[study] source must be 'data' or 'synthetic'")
        if self.preset not in (cfg.PRESET_FULL, cfg.PRESET_DESK):
            raise ConfigError(f"unknown preset {self.preset!r}")

    @property
    def horizon_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def burn_in_steps(self) -> int:
        return int(self.burn_in_fraction * self.long_steps)

    def steps_for_gap(self, gap: int) -> int:
        return (self.horizon_steps // gap) * gap

    def with_preset(self, preset: str | None) -> "ExperimentConfig":
        """Desk preset divides long_steps, trajectories, horizon and the convergence grid by cfg.DESK_SCALE."""
        if preset is None or preset == self.preset:
            return self
        if preset == cfg.PRESET_DESK and self.preset == cfg.PRESET_FULL:
            s = cfg.DESK_SCALE
            grid = tuple((max(1, m // s), max(1, n // s)) for m, n in self.convergence_grid)
            return replace(self, preset=preset, long_steps=max(2, self.long_steps // s),
                           trajectories=max(1, self.trajectories // s), horizon=self.horizon / s,
                           convergence_grid=grid)
        if preset not in (cfg.PRESET_FULL, cfg.PRESET_DESK):
            raise ConfigError(f"unknown preset {preset!r}")
        raise ConfigError("a desk run cannot be scaled back up to full size")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        try:
            system = data["system"]
            dat = data["data"]
        except KeyError as exc:
            raise ConfigError(f"config is missing section [{exc.args[0]}]") from None
        inf = data.get("inference", {})
        ev = data.get("evaluate", {})
        st = data.get("study", {})

        name = system.get("benchmark") or system.get("name")
        definition = None if name in BENCHMARK_DEFS else dict(system)
        if name is None:
            raise ConfigError("[system] needs a benchmark id or an inline definition with a name")
        defaults = BENCHMARK_DEFS.get(name, {})

        families = DEFAULT_SETTINGS
        if "families" in inf:
            families = tuple((str(f["family"]), bool(f.get("include_c0", False))) for f in inf["families"])

        try:
            out = Path(data.get("output_dir", "runs/" + name))
            built = cls(
                system_name=name,
                system_definition=definition,
                dt=float(dat.get("dt", defaults.get("dt", 0.0))),
                long_steps=int(dat["long_steps"]),
                x0=tuple(float(v) for v in dat.get("x0", defaults.get("x0", ()))),
                trajectories=int(dat["trajectories"]),
                horizon=float(dat["horizon"]),
                gaps=tuple(int(g) for g in dat.get("gaps", defaults.get("gaps", ()))),
                seed=int(dat.get("seed", 0)),
                burn_in_fraction=float(dat.get("burn_in_fraction", cfg.BURN_IN_FRACTION)),
                output_dir=out if out.is_absolute() else base_dir / out,
                families=families,
                svd_cutoff=float(inf.get("svd_cutoff", cfg.SVD_CUTOFF)),
                sim_steps=int(ev.get("sim_steps", 100_000)),
                bins=int(ev.get("bins", cfg.HIST_BINS)),
                max_lag=int(ev.get("max_lag", cfg.ACF_MAX_LAG)),
                plain=tuple(ev.get("plain", SchemeKind.ALL)),
                blowup_steps=int(ev.get("blowup_steps", cfg.BLOWUP_STEPS)),
                blowup_seeds=int(ev.get("blowup_seeds", cfg.BLOWUP_SEEDS)),
                blowup_gaps=tuple(int(g) for g in st.get("blowup_gaps", ())),
                convergence_gap=int(st["convergence_gap"]) if "convergence_gap" in st else None,
                convergence_grid=tuple((int(m), int(n)) for m, n in st.get("convergence_grid", ())),
                study_source=str(st.get("source", "data")),
                synthetic=dict(st.get("synthetic", {})),
                residual_gaps=tuple(int(g) for g in st.get("residual_gaps", ())),
                preset=str(data.get("preset", cfg.PRESET_FULL)),
            )
        except KeyError as exc:
            raise ConfigError(f"[data] is missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from None
        if len(built.x0) != built.make_system().d:
            raise ConfigError(f"[data] x0 has {len(built.x0)} entries for a {built.make_system().d}-d system")
        return built

    def make_system(self) -> SdeSystem:
        return resolve_system(self.system_name, self.system_definition)


def load_config(path, preset: str | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig.from_dict(data).with_preset(preset)


# ── orchestrator ────────────────────────────────────────

class Experiment:
    """Ties data generation, inference, simulation and statistics together."""

    def __init__(self, config: ExperimentConfig, workers: int | None = None, quiet: bool = False):
        self.config = config
        self.system = config.make_system()
        self.root = Path(config.output_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest(self.root)
        self.workers = workers
        self.quiet = quiet

    # ── artifact paths ──────────────────────────────────

    def _rel(self, *parts: str) -> str:
        return "/".join(parts)

    def dataset_rel(self, gap: int) -> str:
        return self._rel(cfg.DATA_DIR, f"gap-{gap:04d}{cfg.DATASET_SUFFIX}")

    def long_rel(self) -> str:
        return self._rel(cfg.DATA_DIR, cfg.LONG_TRAJECTORY_FILE)

    def scheme_rel(self, label: str, gap: int) -> str:
        return self._rel(cfg.SCHEMES_DIR, f"{label}_gap-{gap:04d}.json")

    def _status(self, msg: str):
        log.info(msg)
        if not self.quiet:
            print(msg)

    def _record(self, rel: str, kind: str):
        self.manifest.record(self.root / rel, kind)

    def _write_dataset(self, ds, rel: str, kind: str):
        path = write_dataset(ds, self.root / rel)
        self._record(rel, kind)
        self._record(sidecar_path(path).relative_to(self.root).as_posix(), kind + "-sidecar")

    def load_long(self) -> LongTrajectory:
        return LongTrajectory.from_dataset(read_dataset(self.manifest.require(self.long_rel())))

    def load_dataset(self, gap: int):
        return read_dataset(self.manifest.require(self.dataset_rel(gap)))

    def load_scheme(self, label: str, gap: int) -> InferredScheme:
        return InferredScheme.load(self.manifest.require(self.scheme_rel(label, gap)))

    def _families(self, delta: float) -> list[BasisFamily]:
        return [BasisFamily(f, c0, delta, self.system) for f, c0 in self.config.families]

    # ── commands ────────────────────────────────────────

    def cmd_gen_data(self) -> list[str]:
        c = self.config
        self._status(f"⏳ Long reference trajectory: {c.long_steps} SSBE steps at dt={c.dt}…")
        long = generate_long_trajectory(self.system, c.x0, c.dt, c.long_steps, c.seed)
        self._write_dataset(long.as_dataset(), self.long_rel(), ArtifactKind.LONG)
        initials = sample_initial_conditions(long, c.trajectories, c.burn_in_steps, c.seed)
        written = [self.long_rel()]
        for gap in c.gaps:
            gen = GenerationConfig(system=self.system, dt=c.dt, total_steps=c.steps_for_gap(gap), gap=gap,
                                   M=c.trajectories, seed=streams.derive_seed(c.seed, gap))
            ds = generate_dataset(gen, initials, self.workers)
            self._write_dataset(ds, self.dataset_rel(gap), ArtifactKind.DATASET)
            written.append(self.dataset_rel(gap))
            self._status(f"✅ gap {gap:>4}: {ds.M} trajectories × {ds.N} steps at δ={ds.delta:g}")
        return written

    def cmd_infer(self) -> list[str]:
        c = self.config
        if not c.families:
            log.warning("no basis families configured; nothing to infer")
            return []
        rows, written = [], []
        for gap in c.gaps:
            rel = self.dataset_rel(gap)
            ds = self.load_dataset(gap)
            for fam in self._families(ds.delta):
                scheme = infer(ds, fam, c.svd_cutoff, self.workers, dataset_id=rel)
                spread = single_trajectory_spread(ds, fam, scheme.coefficients, c.svd_cutoff, self.workers)
                scheme.provenance["single_trajectory_std"] = spread.tolist()
                srel = self.scheme_rel(fam.label, gap)
                scheme.save(self.root / srel)
                self._record(srel, ArtifactKind.SCHEME)
                written.append(srel)
                rows += _estimator_rows(scheme, spread)
            self._status(f"✅ gap {gap:>4}: {len(c.families)} schemes inferred")
        table = self._rel(cfg.SCHEMES_DIR, "estimators.csv")
        write_csv(self.root / table, ESTIMATOR_HEADER, rows)
        self._record(table, ArtifactKind.TABLE)
        return written

    def _plain_schemes(self, gaps) -> list[PlainScheme]:
        return [PlainScheme(kind, self.system, gap * self.config.dt, gap)
                for kind in self.config.plain for gap in gaps]

    def _inferred_schemes(self) -> list[InferredScheme]:
        return [InferredScheme.load(self.manifest.require(rel))
                for rel in self.manifest.listed(ArtifactKind.SCHEME)]

    def cmd_evaluate(self) -> list[str]:
        c = self.config
        long = self.load_long()
        ref = long.X[c.burn_in_steps:]
        coords = range(self.system.d)
        edges = [default_edges(ref[:, k], c.bins) for k in coords]
        ref_hists = [empirical_pdf(ref[:, k], edges=edges[k], coordinate=k) for k in coords]
        written = [self._write_eval("reference_pdf.csv", lambda p: write_pdf_csv(p, ref_hists))]

        schemes = self._inferred_schemes() + self._plain_schemes(c.gaps)
        if not schemes:
            raise MissingArtifact("no inferred schemes found; run `isalt infer` first")
        x0 = long.X[-1]

        def run(scheme):
            gap = scheme.gap
            sim = SimConfig(scheme=scheme, x0=x0, steps=c.sim_steps,
                            seed=streams.derive_seed(c.seed, streams.label_key(scheme.label), gap))
            return scheme, simulate(sim, workers=1)

        with ThreadPoolExecutor(max_workers=self.workers or cfg.worker_count()) as pool:
            results = list(pool.map(run, schemes))

        tvd_rows, blow_rows = [], []
        ref_acf_done = set()
        for scheme, res in results:
            family = scheme.label.rsplit("_gap-", 1)[0]
            blow_rows.append(BlowupRow(family, scheme.gap, res.any_blowup, res.first_blowup))
            if res.any_blowup:
                tvd_rows.append([scheme.label, family, scheme.gap, scheme.delta, 1]
                                + [cfg.TVD_BLOWUP_SENTINEL] * self.system.d)
                continue
            path = res.paths[0][int(c.burn_in_fraction * len(res.paths[0])):]
            hists = [empirical_pdf(path[:, k], edges=edges[k], coordinate=k) for k in coords]
            tvd_rows.append([scheme.label, family, scheme.gap, scheme.delta, 0]
                            + [tvd(h, r) for h, r in zip(hists, ref_hists)])
            lag = min(c.max_lag, (len(path) - 2) // 2)
            ref_coarse = ref[::scheme.gap]
            ref_lag = min(lag, (len(ref_coarse) - 2) // 2)
            written.append(self._write_eval(f"{scheme.label}_pdf.csv", lambda p: write_pdf_csv(p, hists)))
            written.append(self._write_eval(
                f"{scheme.label}_acf.csv", lambda p: write_acf_csv(p, [acf(path, lag, k) for k in coords], scheme.delta)))
            if scheme.gap not in ref_acf_done:
                ref_acf_done.add(scheme.gap)
                written.append(self._write_eval(
                    f"reference_acf_gap-{scheme.gap:04d}.csv",
                    lambda p: write_acf_csv(p, [acf(ref_coarse, ref_lag, k) for k in coords], scheme.delta)))

        tvd_rows.sort(key=lambda r: (r[1], r[2]))
        header = ["scheme", "family", "gap", "delta", "blew_up"] + [f"tvd_x{k + 1}" for k in coords]
        written.append(self._write_eval("tvd.csv", lambda p: write_csv(p, header, tvd_rows)))
        blow_rows.sort(key=lambda r: (r.label, r.gap))
        written.append(self._write_eval("blowup.csv", lambda p: write_blowup_csv(p, BlowupTable(blow_rows))))
        written.append(self._write_eval("summary.json", lambda p: write_json(p, _selection_summary(tvd_rows, coords))))
        self._status(f"✅ evaluated {len(results)} schemes ({sum(r.blew_up for r in blow_rows)} blew up)")
        return sorted(set(written))

    def _write_eval(self, name: str, writer) -> str:
        rel = self._rel(cfg.EVAL_DIR, name)
        writer(self.root / rel)
        self._record(rel, ArtifactKind.EVAL)
        return rel

    def cmd_study(self, kind: str) -> list[str]:
        if kind == StudyKind.CONVERGENCE:
            return self._study_convergence()
        if kind == StudyKind.RESIDUAL_ORDER:
            return self._study_residual_order()
        if kind == StudyKind.BLOWUP_SCAN:
            return self._study_blowup()
        raise ConfigError(f"unknown study {kind!r}; expected one of {StudyKind.ALL}")

    def _write_study(self, stem: str, header, rows, summary: dict) -> list[str]:
        out = []
        for name, writer in ((f"{stem}.csv", lambda p: write_csv(p, header, rows)),
                             (f"{stem}.json", lambda p: write_json(p, summary))):
            rel = self._rel(cfg.STUDY_DIR, name)
            writer(self.root / rel)
            self._record(rel, ArtifactKind.STUDY)
            out.append(rel)
        return out

    def _study_convergence(self) -> list[str]:
        c = self.config
        written = []
        if c.study_source == "synthetic":
            scheme, ds = self._synthetic_data()
            fams = [scheme.basis]
            reference = scheme.coefficients
        else:
            gap = c.convergence_gap or c.gaps[-1]
            if gap not in c.gaps:
                raise ConfigError(f"[study] convergence_gap {gap} is not in the gap list")
            ds = self.load_dataset(gap)
            fams = self._families(ds.delta)
            reference = None
        grid = c.convergence_grid or _default_grid(ds.M, ds.N)
        for fam in fams:
            report = convergence_study(ds, fam, grid, reference, c.svd_cutoff, workers=self.workers)
            summary = report.summary() | {"source": c.study_source, "gap": ds.gap, "delta": ds.delta}
            written += self._write_study(f"convergence_{fam.label}_gap-{ds.gap:04d}",
                                         report.csv_header(fam.labels), list(report.csv_rows()), summary)
            self._status(f"✅ convergence {fam.label}: slope {report.slope:.3f}")
        return written

    def _synthetic_data(self):
        c = self.config
        syn = c.synthetic
        family = str(syn.get("family", Family.IS_EM))
        include_c0 = bool(syn.get("include_c0", True))
        gap = c.convergence_gap or c.gaps[0]
        delta = float(syn.get("delta", gap * c.dt))
        d = self.system.d
        coeffs = np.array(syn.get("coefficients", [0.1, 0.9, 1.05] if include_c0 else [0.9, 1.05]), dtype=float)
        scheme = InferredScheme(
            family=family, include_c0=include_c0, delta=delta, gap=1, dt=delta, system=self.system,
            coefficients=np.broadcast_to(coeffs.reshape(-1, coeffs.shape[-1]), (d, coeffs.shape[-1])),
            sigma_eta=np.broadcast_to(np.asarray(syn.get("sigma_eta", 0.2), dtype=float), (d,)),
            provenance={"synthetic": True},
        )
        M = int(syn.get("trajectories", c.trajectories))
        N = int(syn.get("steps", c.horizon_steps // gap))
        initials = np.tile(np.asarray(c.x0, dtype=float), (M, 1))
        ds = synthesize_dataset(scheme, initials, N, streams.derive_seed(c.seed, streams.label_key("synthetic")),
                                self.workers)
        return scheme, ds

    def _study_residual_order(self) -> list[str]:
        c = self.config
        gaps = c.residual_gaps or c.gaps
        missing = [g for g in gaps if g not in c.gaps]
        if missing:
            raise ConfigError(f"[study] residual_gaps {missing} are not in the gap list")
        datasets = [self.load_dataset(g) for g in gaps]
        written = []
        for fam in self._families(datasets[0].delta):
            report = residual_order_study(datasets, fam, c.svd_cutoff, self.workers)
            written += self._write_study(f"residual-order_{fam.label}", report.csv_header(fam.labels),
                                         list(report.csv_rows()), report.summary())
            self._status(f"✅ residual order {fam.label}: slopes {np.round(report.slopes, 3).tolist()}")
        return written

    def _study_blowup(self) -> list[str]:
        c = self.config
        gaps = c.blowup_gaps or c.gaps
        builders = {}
        for kind in c.plain:
            builders[f"plain-{kind}"] = lambda gap, kind=kind: PlainScheme(kind, self.system, gap * c.dt, gap)
        for family, c0 in c.families:
            label = BasisFamily(family, c0, 1.0, self.system).label
            builders[label] = lambda gap, label=label: self._scheme_or_none(label, gap)
        table = blowup_scan(self.system, builders, gaps, c.blowup_steps, c.blowup_seeds, c.seed,
                            x0=c.x0, workers=self.workers)
        summary = {lab: {"first_blowup_gap": table.first_blowup_gap(lab), "stable_through": table.stable_through(lab)}
                   for lab in table.labels()}
        rel = self._rel(cfg.STUDY_DIR, "blowup-scan.csv")
        write_blowup_csv(self.root / rel, table)
        self._record(rel, ArtifactKind.STUDY)
        jrel = self._rel(cfg.STUDY_DIR, "blowup-scan.json")
        write_json(self.root / jrel, summary)
        self._record(jrel, ArtifactKind.STUDY)
        for lab, s in summary.items():
            self._status(f"✅ blow-up scan {lab}: first blow-up at gap {s['first_blowup_gap']}")
        return [rel, jrel]

    def _scheme_or_none(self, label: str, gap: int) -> InferredScheme | None:
        if self.scheme_rel(label, gap) not in self.manifest.entries:
            return None
        return self.load_scheme(label, gap)

    def cmd_report(self) -> str:
        report = Report(self.system.name)
        listed = set(self.manifest.listed())
        est = self._rel(cfg.SCHEMES_DIR, "estimators.csv")
        if est in listed:
            report.add_estimators(read_csv(self.manifest.require(est)))
        tv = self._rel(cfg.EVAL_DIR, "tvd.csv")
        if tv in listed:
            report.add_tvd(read_csv(self.manifest.require(tv)))
            report.add_selection(read_json(self.manifest.require(self._rel(cfg.EVAL_DIR, "summary.json"))))
        for rel in sorted(listed):
            if rel.startswith(cfg.STUDY_DIR + "/") and rel.endswith(".json"):
                report.add_study(Path(rel).stem, read_json(self.manifest.require(rel)))
        text = report.render()
        atomic_write_text(self.root / cfg.REPORT_FILE, text)
        self._record(cfg.REPORT_FILE, ArtifactKind.REPORT)
        if not self.quiet:
            print(text)
        return text


# ── helpers ─────────────────────────────────────────────

ESTIMATOR_HEADER = ["scheme", "family", "gap", "delta", "coordinate",
                    "c0", "c1", "c2", "sd_c0", "sd_c1", "sd_c2", "sigma_eta"]


def _estimator_rows(scheme: InferredScheme, spread: np.ndarray) -> list[list]:
    rows = []
    for k in range(scheme.system.d):
        c = scheme.coefficients[k].tolist()
        sd = spread[k].tolist()
        if not scheme.include_c0:
            c, sd = [""] + c, [""] + sd
        rows.append([scheme.label, scheme.basis.label, scheme.gap, scheme.delta, k + 1,
                     *c, *sd, float(scheme.sigma_eta[k])])
    return rows


def _selection_summary(tvd_rows: list[list], coords) -> dict:
    """Per coordinate, the non-blown-up scheme with the smallest TVD."""
    best = {}
    for k in coords:
        alive = [r for r in tvd_rows if not r[4]]
        if not alive:
            best[f"x{k + 1}"] = None
            continue
        row = min(alive, key=lambda r: (r[5 + k], r[0]))
        best[f"x{k + 1}"] = {"scheme": row[0], "family": row[1], "gap": row[2], "delta": row[3], "tvd": row[5 + k]}
    return {"best": best, "blown_up": sorted(r[0] for r in tvd_rows if r[4])}


def _default_grid(M: int, N: int) -> list[tuple[int, int]]:
    """Trajectory counts M/100, M/10, M at full length, then shorter windows if that is too few."""
    candidates = [(max(1, M // 100), N), (max(1, M // 10), N), (M, N)]
    candidates += [(M, max(1, N // div)) for div in (10, 100, 1000)]
    by_size: dict[int, tuple[int, int]] = {}
    for m, n in candidates:
        if len(by_size) >= cfg.MIN_STUDY_POINTS and m == M and n < N:
            break
        by_size.setdefault(m * n, (m, n))
    return sorted(by_size.values())


def cmd_simulate(scheme_path, steps: int, seed: int, output=None, x0=None, record_every: int = 1) -> Path:
    """Simulate one path of a saved scheme and export it in the dataset format."""
    scheme_path = Path(scheme_path)
    scheme = InferredScheme.load(scheme_path)
    if x0 is None:
        x0 = BENCHMARK_DEFS.get(scheme.system.name, {}).get("x0", np.zeros(scheme.system.d))
    res = simulate(SimConfig(scheme=scheme, x0=x0, steps=steps, seed=seed, record_every=record_every))
    out = Path(output) if output else scheme_path.with_suffix(".path" + cfg.DATASET_SUFFIX)
    write_dataset(res.as_dataset(), out)
    if res.any_blowup:
        log.warning("%s blew up at step %d", scheme.label, res.first_blowup)
    return out

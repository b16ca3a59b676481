"""Data generation and the Monte Carlo study harness."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy.stats import median_abs_deviation

from occmix.asymptotics import limit_nmix, zib_bias
from occmix.errors import DegenerateData, DomainError, NonConvergence
from occmix.estimation import Family, ModelSpec, OptimOptions, fit
from occmix.inference import wald_ci
from occmix.model import DetectionMatrix, ModelParams
from occmix.rng import substream

SUMMARY_COLUMNS = (
    "mu", "r", "c", "psi", "n", "T", "model", "parameter",
    "med", "med_se", "mad", "cp", "fail_rate",
)
CURVE_COLUMNS = ("mu", "r", "psi", "n", "T", "model", "parameter", "c", "med", "truth", "reference")


@dataclass(frozen=True)
class GenConfig:
    theta: ModelParams
    n_sites: int
    n_visits: int
    psi: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_sites < 1 or self.n_visits < 1:
            raise DomainError("n_sites and n_visits must be positive")
        if self.psi is not None and not 0 <= self.psi <= 1:
            raise DomainError("psi must lie in [0, 1]")


def _latent(theta: ModelParams, n: int, T: int, psi: float | None, rng: np.random.Generator):
    occupied = rng.random(n) < (1.0 if psi is None else psi)
    resident = rng.poisson(theta.c * theta.mu, size=n)
    transient = rng.poisson(theta.d * theta.mu, size=(n, T))
    return occupied, resident[:, None] + transient


def _draw(theta: ModelParams, n: int, T: int, psi: float | None, rng: np.random.Generator):
    occupied, present = _latent(theta, n, T, psi, rng)
    # each of N individuals is missed with probability 1 - r
    p_detect = -np.expm1(present * math.log1p(-theta.r)) if theta.r < 1 else (present > 0).astype(float)
    y = rng.random((n, T)) < p_detect
    y &= occupied[:, None]
    return y.astype(np.int8)


def generate(config: GenConfig) -> DetectionMatrix:
    """Simulate a detection matrix.

    Per site: occupied with probability ``psi`` (always, if ``psi`` is
    None); a resident count ``K ~ Poisson(c mu)`` shared across visits and
    transient counts ``M_j ~ Poisson((1-c) mu)`` per visit; a visit detects
    the species with probability ``1 - (1-r)**(K + M_j)``.
    """
    rng = substream(config.seed)
    return DetectionMatrix(_draw(config.theta, config.n_sites, config.n_visits, config.psi, rng))


def generate_latent(config: GenConfig) -> tuple[np.ndarray, np.ndarray]:
    """Occupancy flags and latent counts ``N_ij`` drawn exactly as :func:`generate` draws them.

    The abundance is reported whether or not the site is occupied.
    """
    rng = substream(config.seed)
    return _latent(config.theta, config.n_sites, config.n_visits, config.psi, rng)


@dataclass(frozen=True)
class StudyCell:
    config: GenConfig
    models: tuple[ModelSpec, ...]
    n_replicates: int = 200

    def __post_init__(self):
        if self.n_replicates < 1:
            raise DomainError("n_replicates must be at least 1")
        object.__setattr__(self, "models", tuple(self.models))


@dataclass(frozen=True)
class ReplicateRecord:
    cell: int
    replicate: int
    model: str
    converged: bool
    estimates: dict[str, float] = field(default_factory=dict)
    std_errors: dict[str, float] = field(default_factory=dict)
    covered: dict[str, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class SummaryRow:
    mu: float
    r: float
    c: float
    psi: float | None
    n: int
    T: int
    model: str
    parameter: str
    med: float
    med_se: float
    mad: float
    cp: float
    fail_rate: float
    truth: float = math.nan


@dataclass
class StudySummary:
    rows: list[SummaryRow]
    records: list[ReplicateRecord]

    def row(self, model: str, parameter: str, cell_filter=None) -> list[SummaryRow]:
        out = [r for r in self.rows if r.model == model and r.parameter == parameter]
        return [r for r in out if cell_filter(r)] if cell_filter else out

    def to_csv(self, fh: TextIO) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(getattr(row, col)) for col in SUMMARY_COLUMNS])

    def curves(self) -> list[dict]:
        """Long-format median curves against ``c`` with reference values."""
        out = []
        for row in sorted(self.rows, key=lambda r: (r.mu, r.r, r.psi or 1.0, r.n, r.T, r.model, r.parameter, r.c)):
            out.append(
                {
                    "mu": row.mu, "r": row.r, "psi": row.psi, "n": row.n, "T": row.T,
                    "model": row.model, "parameter": row.parameter, "c": row.c,
                    "med": row.med, "truth": row.truth, "reference": _reference(row),
                }
            )
        return out

    def curves_csv(self, fh: TextIO) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for rec in self.curves():
            writer.writerow([_fmt(rec[col]) for col in CURVE_COLUMNS])

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "NA"
        if math.isinf(v):
            return "Inf" if v > 0 else "-Inf"
        return f"{v:.10g}"
    return str(v)


def _reference(row: SummaryRow) -> float:
    theta = ModelParams(row.mu, row.r, row.c)
    if row.model in ("NMIX", "ZIN") and row.parameter in ("mu", "r"):
        return limit_nmix(theta, "moment").predicted[row.parameter]
    if row.model == "ZIB" and row.parameter == "psi":
        return zib_bias(theta, row.T, 1.0 if row.psi is None else row.psi)[1]
    return math.nan


def _truth(config: GenConfig, spec: ModelSpec, parameter: str) -> float:
    th = config.theta
    if parameter == "mu_r":
        return th.mu * th.r
    if parameter == "psi":
        return 1.0 if config.psi is None else config.psi
    if spec.family is Family.ZIB and parameter == "mu":
        return th.mu
    return getattr(th, parameter)


def _parameters(spec: ModelSpec) -> tuple[str, ...]:
    names = spec.free
    if "mu" in names and "r" in names:
        names = names + ("mu_r",)
    return names


def _run_replicate(args) -> list[ReplicateRecord]:
    cell_idx, rep, cell, master_seed, opts, level = args
    cfg = cell.config
    rng = substream(master_seed, cell_idx, rep)
    counts = DetectionMatrix(_draw(cfg.theta, cfg.n_sites, cfg.n_visits, cfg.psi, rng)).to_counts()
    out = []
    for spec in cell.models:
        try:
            result = fit(spec, counts, opts)
        except (DegenerateData, NonConvergence):
            out.append(ReplicateRecord(cell_idx, rep, spec.name, False))
            continue
        est = dict(result.estimates)
        if "mu_r" in _parameters(spec):
            est["mu_r"] = est["mu"] * est["r"]
        cis = wald_ci(result, level)
        covered = {
            name: (ci.lower <= _truth(cfg, spec, name) <= ci.upper)
            for name, ci in cis.items()
            if ci is not None
        }
        out.append(
            ReplicateRecord(
                cell_idx, rep, spec.name, result.converged, est, dict(result.std_errors), covered
            )
        )
    return out


def run_study(
    cells: Sequence[StudyCell],
    master_seed: int,
    opts: OptimOptions | None = None,
    n_workers: int = 1,
    level: float = 0.95,
) -> StudySummary:
    """Simulate every cell, fit every model, and summarize.

    Replicate ``j`` of cell ``i`` draws from the substream
    ``(master_seed, i, j)``, so the summary is identical for any
    ``n_workers``.  Non-converged fits count toward ``fail_rate`` and are
    excluded from the other summaries.
    """
    if not cells:
        raise DomainError("at least one study cell is required")
    opts = opts or OptimOptions()
    jobs = [
        (i, rep, cell, master_seed, opts, level)
        for i, cell in enumerate(cells)
        for rep in range(cell.n_replicates)
    ]
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            chunks = list(pool.map(_run_replicate, jobs, chunksize=max(1, len(jobs) // (8 * n_workers))))
    else:
        chunks = [_run_replicate(job) for job in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    return StudySummary(_summarize(cells, records), records)


def _median(values: Iterable[float]) -> float:
    arr = np.asarray(list(values), dtype=float)
    return float(np.median(arr)) if arr.size else math.nan


def _summarize(cells: Sequence[StudyCell], records: list[ReplicateRecord]) -> list[SummaryRow]:
    by_key: dict[tuple[int, str], list[ReplicateRecord]] = {}
    for rec in records:
        by_key.setdefault((rec.cell, rec.model), []).append(rec)
    rows = []
    for i, cell in enumerate(cells):
        cfg = cell.config
        for spec in cell.models:
            recs = by_key.get((i, spec.name), [])
            ok = [r for r in recs if r.converged]
            fail_rate = 1.0 - len(ok) / cell.n_replicates
            for name in _parameters(spec):
                est = np.array([r.estimates[name] for r in ok])
                ses = [r.std_errors[name] for r in ok if name in r.std_errors]
                cov = [r.covered[name] for r in ok if name in r.covered]
                rows.append(
                    SummaryRow(
                        mu=cfg.theta.mu,
                        r=cfg.theta.r,
                        c=cfg.theta.c,
                        psi=cfg.psi,
                        n=cfg.n_sites,
                        T=cfg.n_visits,
                        model=spec.name,
                        parameter=name,
                        med=_median(est),
                        med_se=_median(ses),
                        mad=float(median_abs_deviation(est, scale="normal")) if est.size else math.nan,
                        cp=float(np.mean(cov)) if cov else math.nan,
                        fail_rate=fail_rate,
                        truth=_truth(cfg, spec, name),
                    )
                )
    return rows

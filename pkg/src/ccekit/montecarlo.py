"""Replication grids, aggregation and empirical rate checks.

Every replication draws from its own PCG64 stream keyed by
``(master_seed, cell_index, rep_index)``, so results do not depend on how
replications are scheduled across worker processes.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from . import cce, dgp
from .dgp import PanelConfig
from . import selection as sel
from ._errors import ConfigError, EstimationError, SelectionError

log = logging.getLogger(__name__)

ER_VARIANTS = ("X", "X_scaled", "Z", "Z_scaled")


@dataclass(frozen=True)
class CriterionSpec:
    criterion: str          # MW, DVS, DVS_adjusted or ER
    penalty: str = None     # P1/P2; unused by ER
    variant: str = "X"      # ER only

    def __post_init__(self):
        if self.criterion == "ER":
            if self.variant not in ER_VARIANTS:
                raise ConfigError(f"ER variant must be one of {ER_VARIANTS}")
            return
        sel.Criterion(self.criterion)
        if self.penalty is None:
            raise ConfigError(f"{self.criterion} needs a penalty")
        sel.Penalty(self.penalty)

    @property
    def label(self):
        if self.criterion == "ER":
            return f"ER_{self.variant}"
        return f"{self.criterion}_{self.penalty}"

    @property
    def penalty_label(self):
        return self.penalty if self.criterion != "ER" else self.variant


STANDARD_CRITERIA = (
    CriterionSpec("MW", "P1"), CriterionSpec("MW", "P2"),
    CriterionSpec("DVS", "P1"), CriterionSpec("DVS", "P2"),
)


@dataclass(frozen=True)
class Cell:
    N: int
    T: int
    tau: float


@dataclass
class ExperimentSpec:
    cells: list
    dgp: PanelConfig = field(default_factory=PanelConfig)
    criteria: tuple = STANDARD_CRITERIA
    reps: int = 500
    master_seed: int = 20251018
    parallelism: int = 1

    def __post_init__(self):
        self.cells = [c if isinstance(c, Cell) else Cell(*c) for c in self.cells]
        if not self.cells:
            raise ConfigError("an experiment needs at least one cell")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        for c in self.cells:
            self.dgp.with_cell(c.N, c.T, c.tau)  # validates the cell


def _candidate_sets(panel, cfg, rng):
    """(MW candidates, DVS candidates) for one replication."""
    if cfg.oracle_candidates:
        full = dgp.oracle_candidates(panel.f_true, cfg.k + 1, rng)
        dvs = cce.CandidateSet(full.c[:, :cfg.k], full.labels[:cfg.k], "oracle")
        return full, dvs
    cs = cce.cs_averages(panel)
    return cs, cce.regressor_candidates(cs)


def _er(panel, full, dvs, variant):
    if variant == "X":
        return sel.er_count(dvs)
    if variant == "Z":
        return sel.er_count(full)
    if variant == "X_scaled":
        return sel.er_count(dvs, scaled=True, sigma=sel.sigma_hat(panel.x))
    return sel.er_count(full, scaled=True, sigma=sel.sigma_hat(panel.z()))


def run_replication(cell, dgp_cfg, criteria, seed):
    """One pipeline pass; returns ``{label: (g_hat, mask_bits)}`` with None for failures.

    ``seed`` is a tuple ``(master_seed, cell_index, rep_index)``.
    """
    cfg = dgp_cfg.with_cell(cell.N, cell.T, cell.tau)
    rng = dgp.make_rng(*seed)
    panel = dgp.simulate_panel(cfg, rng)
    full, dvs = _candidate_sets(panel, cfg, rng)

    out = {}
    mw_cache = dvs_cache = None
    mw_failed = False
    for spec in criteria:
        try:
            if spec.criterion == "ER":
                out[spec.label] = (_er(panel, full, dvs, spec.variant), None)
                continue
            if spec.criterion == "MW":
                if mw_failed:
                    out[spec.label] = None
                    continue
                if mw_cache is None:
                    fit = cce.cce_pooled(panel, full)
                    mw_cache = sel.build_cache(panel, full, fit)
                cache = mw_cache
            else:
                if dvs_cache is None:
                    dvs_cache = sel.build_cache(panel, dvs)
                cache = dvs_cache
            tau = cell.tau if spec.criterion == "DVS_adjusted" else None
            res = sel.select(cache, spec.criterion, spec.penalty, tau=tau)
            out[spec.label] = (res.g_hat, res.chosen.bits)
        except EstimationError:
            mw_failed = True
            out[spec.label] = None
        except (SelectionError, np.linalg.LinAlgError):
            out[spec.label] = None
    return out


@dataclass
class CriterionStats:
    avg_g: float
    share_misselected: float
    share_over: float
    share_under: float
    failures: int
    reps_done: int


@dataclass
class CellResult:
    cell: Cell
    cell_index: int
    m: int
    dgp_mode: str
    stats: dict          # label -> CriterionStats
    criteria: tuple
    reps: int
    master_seed: int

    @property
    def unreliable(self):
        return {lab: s.failures > 0.5 * self.reps for lab, s in self.stats.items()}


def summarise(outcomes, m, criteria):
    """Aggregate per-replication outcomes into per-criterion statistics."""
    stats = {}
    for spec in criteria:
        gs = [o[spec.label][0] for o in outcomes if o.get(spec.label) is not None]
        fails = len(outcomes) - len(gs)
        n = len(gs)
        if n == 0:
            stats[spec.label] = CriterionStats(math.nan, math.nan, math.nan, math.nan, fails, 0)
            continue
        g = np.asarray(gs)
        over = float(np.count_nonzero(g > m)) / n
        under = float(np.count_nonzero(g < m)) / n
        stats[spec.label] = CriterionStats(float(g.mean()), over + under, over, under, fails, n)
    return stats


def dgp_mode_label(cfg):
    return cfg.errors.mode + ("+oracle" if cfg.oracle_candidates else "")


def _run_chunk(args):
    cells, dgp_cfg, criteria, master_seed, jobs = args
    return [run_replication(cells[ci], dgp_cfg, criteria, (master_seed, ci, r)) for ci, r in jobs]


def _chunks(jobs, n):
    size = max(1, math.ceil(len(jobs) / n))
    return [jobs[i:i + size] for i in range(0, len(jobs), size)]


def run_experiment(spec, workers=None, cell_offset=0):
    """Run every (cell, rep) of ``spec``; returns one CellResult per cell.

    ``cell_offset`` shifts the cell index used for seeding.
    """
    workers = spec.parallelism if workers is None else workers
    cells = {cell_offset + i: c for i, c in enumerate(spec.cells)}
    jobs = [(ci, r) for ci in cells for r in range(spec.reps)]
    if workers <= 1:
        flat = _run_chunk((cells, spec.dgp, spec.criteria, spec.master_seed, jobs))
    else:
        # several chunks per worker keeps the pool busy when cells differ in cost
        parts = _chunks(jobs, 4 * workers)
        args = [(cells, spec.dgp, spec.criteria, spec.master_seed, p) for p in parts]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flat = [o for part in pool.map(_run_chunk, args) for o in part]
    by_cell = {ci: [] for ci in cells}
    for (ci, _), o in zip(jobs, flat):
        by_cell[ci].append(o)
    results = []
    for ci, cell in cells.items():
        stats = summarise(by_cell[ci], spec.dgp.m, spec.criteria)
        res = CellResult(cell, ci, spec.dgp.m, dgp_mode_label(spec.dgp), stats,
                         tuple(spec.criteria), spec.reps, spec.master_seed)
        for lab, bad in res.unreliable.items():
            if bad:
                log.warning("cell %s: %s failed in more than half of the replications", cell, lab)
        results.append(res)
    return results


def run_cell(cell, spec, cell_index=0, workers=None):
    one = replace(spec, cells=[cell])
    return run_experiment(one, workers=workers, cell_offset=cell_index)[0]


ROW_FIELDS = ("N", "T", "tau", "dgp_mode", "criterion", "penalty", "avg_g",
              "share_misselected", "share_over", "share_under", "reps", "failures", "seed")


def _row_key(row):
    return (row["N"], row["T"], row["tau"], row["dgp_mode"], row["criterion"], row["penalty"])


def aggregate(*result_lists):
    """Flatten CellResults into report rows, one per (cell, criterion).

    Rows are keyed and sorted, so merging is associative and order-free.
    """
    rows = {}
    for results in result_lists:
        for res in results:
            for spec in res.criteria:
                s = res.stats[spec.label]
                row = {
                    "N": res.cell.N, "T": res.cell.T, "tau": res.cell.tau,
                    "dgp_mode": res.dgp_mode, "criterion": spec.criterion,
                    "penalty": spec.penalty_label, "avg_g": s.avg_g,
                    "share_misselected": s.share_misselected, "share_over": s.share_over,
                    "share_under": s.share_under, "reps": s.reps_done,
                    "failures": s.failures, "seed": res.master_seed,
                }
                rows[_row_key(row)] = row
    return [rows[k] for k in sorted(rows)]


@dataclass
class SweepRow:
    tau: float
    criterion: str
    error_mode: str
    share_misselected: float
    avg_g: float


def tau_sweep(taus=None, N=100, T=100, error_modes=("weak_cs", "weak_time_cs"),
              criteria=(CriterionSpec("MW", "P1"), CriterionSpec("DVS", "P1")),
              reps=500, master_seed=20251018, dgp_template=None, workers=1):
    """Misselection share against tau for each (criterion, error mode).

    The error modes share seeds, so they differ only through time dependence.
    """
    if taus is None:
        taus = [round(0.05 * j, 2) for j in range(20)]
    if any(not 0 <= t < 1 for t in taus):
        raise ConfigError("tau grid must lie in [0, 1)")
    base = dgp_template or dgp.PanelConfig()
    rows = []
    for mode in error_modes:
        cfg = replace(base, errors=dgp.ErrorConfig.for_mode(mode))
        spec = ExperimentSpec([Cell(N, T, t) for t in taus], cfg, tuple(criteria), reps, master_seed)
        for res in run_experiment(spec, workers=workers):
            for c in criteria:
                s = res.stats[c.label]
                rows.append(SweepRow(res.cell.tau, c.label, mode, s.share_misselected, s.avg_g))
    return rows


RATE_STATISTICS = ("prop1_under", "prop1_over", "lemA1", "corA1", "lemA2", "corA2")


@dataclass
class RateResult:
    statistic: str
    tau: float
    T_grid: list
    N_grid: list
    medians: list
    fitted_slope: float
    theoretical_slope: float


def theoretical_slope(statistic, tau):
    return {
        "prop1_under": tau, "prop1_over": -1.0,
        "lemA1": -tau / 2, "lemA2": -tau / 2,
        "corA1": -(1 + tau) / 2, "corA2": -(1 + tau) / 2,
    }[statistic]


def rate_config(statistic, tau, base=None):
    """DGP used for rate checks: factors with unit-variance innovations.

    ``lem*`` statistics use errors that are AR(1) over time; the others use
    time-uncorrelated errors.
    """
    base = base or dgp.PanelConfig()
    mode = "weak_time_cs" if statistic.startswith("lem") else "weak_cs"
    factor = replace(base.factor, tau=float(tau), innovation_scale="unit")
    return replace(base, factor=factor, errors=dgp.ErrorConfig.for_mode(mode))


def rate_statistic(statistic, panel):
    """One draw of the statistic whose median is tracked across T."""
    T = panel.T
    tau = panel.config.factor.tau
    m = panel.config.m
    if statistic.startswith("prop1"):
        cs = cce.regressor_candidates(cce.cs_averages(panel))
        cache = sel.build_cache(panel, cs)
        m0 = sel.SubsetMask.from_members(range(m))
        other = range(m - 1) if statistic == "prop1_under" else range(m + 1)
        diff = sel.objective_difference(cache, "DVS", sel.SubsetMask.from_members(other), m0)
        # |det(Q_M Q_M0^-1) - 1|, the argument of the log-determinant minus one
        return abs(math.expm1(diff))
    f = panel.f_true
    e = np.concatenate([panel.eps.T[:, :, None], panel.v], axis=2)  # (N, T, k + 1)
    if statistic in ("lemA1", "corA1"):
        prod = f.T @ e.mean(axis=0)
    else:
        prod = f.T @ e[0]
    return float(np.linalg.norm(prod) / T ** (1.0 + tau))


def fit_loglog_slope(T_grid, values):
    values = np.asarray(values, dtype=np.float64)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ArithmeticError("rate statistic has non-positive medians")
    x = np.log(np.asarray(T_grid, dtype=np.float64))
    slope, _ = np.polyfit(x, np.log(values), 1)
    return float(slope)


def _rate_point(args):
    statistic, cfg, point_index, reps, seed = args
    vals = []
    for r in range(reps):
        rng = dgp.make_rng(seed, 10_000 + point_index, r)
        vals.append(rate_statistic(statistic, dgp.simulate_panel(cfg, rng)))
    return float(np.median(vals))


def rate_check(statistic, tau, N_fixed=200, T_grid=(100, 200, 400, 800), reps=200,
               seed=20251018, couple_NT=None, dgp_template=None, workers=1):
    """Median of a rate statistic over a geometric T grid and its log-log slope.

    ``prop1_over`` couples N = T by default because its rate is C_{N,T}^-2.
    """
    if statistic not in RATE_STATISTICS:
        raise ConfigError(f"statistic must be one of {RATE_STATISTICS}")
    if len(T_grid) < 3:
        raise ConfigError("a rate check needs at least three T values")
    if couple_NT is None:
        couple_NT = statistic == "prop1_over"
    base = rate_config(statistic, tau, dgp_template)
    N_grid = [int(T) if couple_NT else int(N_fixed) for T in T_grid]
    args = [(statistic, replace(base, N=n, T=int(T)), j, reps, seed)
            for j, (n, T) in enumerate(zip(N_grid, T_grid))]
    if workers <= 1:
        medians = [_rate_point(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            medians = list(pool.map(_rate_point, args))
    return RateResult(statistic, float(tau), list(T_grid), N_grid, medians,
                      fit_loglog_slope(T_grid, medians), theoretical_slope(statistic, tau))

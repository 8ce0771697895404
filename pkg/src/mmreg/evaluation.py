"""Monte Carlo contamination study and K-fold cross-validation."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .calibration import lookup_c0, lookup_tau_c2
from .exceptions import ContractError, MMRegError
from .initial import SConfig, s_estimate
from .linalg import Dataset
from .mm import MMConfig, mle_fit, mm_fit
from .rho import Bisquare
from .scale import tau_scale

log = logging.getLogger(__name__)

ESTIMATORS = ("MLE", "S", "MM")
DEFAULT_M_GRID = tuple(round(0.4 * i, 1) for i in range(15))  # 0, 0.4, ..., 5.6
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    p: int = 2
    q: int = 2
    n: int = 100
    reps: int = 500
    contamination: float = 0.0
    x0: float = 1.0
    m_grid: tuple = (0.0,)
    seed: int = 0
    estimators: tuple = ESTIMATORS
    are: float = 0.90
    n_subsamples: int = 2000
    threads: int = 1

    def __post_init__(self):
        if not 0.0 <= self.contamination < 0.5:
            raise ContractError("contamination must lie in [0, 0.5)")
        if self.contamination > 0 and len(self.m_grid) == 0:
            raise ContractError("a contaminated scenario needs a nonempty m grid")
        if self.reps < 1:
            raise ContractError("reps must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ContractError(f"unknown estimators {sorted(bad)}")
        object.__setattr__(self, "m_grid", tuple(float(m) for m in self.m_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))

    @property
    def n_outliers(self) -> int:
        return int(math.floor(self.contamination * self.n))


def generate_sample(sc: Scenario, rep_index: int, m: float = 0.0, rng=None) -> Dataset:
    """One replication: standard normal predictors and errors, ``B0 = 0``.

    The first ``floor(contamination * n)`` rows are replaced by the identical
    outlier ``x = x0 e1``, ``y = m x0 e1``.  The clean part depends only on
    ``(seed, rep_index)``, so different ``m`` share it.
    """
    rng = np.random.default_rng([sc.seed, rep_index]) if rng is None else rng
    X = rng.standard_normal((sc.n, sc.p))
    Y = rng.standard_normal((sc.n, sc.q))
    k = sc.n_outliers
    if k:
        X[:k] = 0.0
        X[:k, 0] = sc.x0
        Y[:k] = 0.0
        Y[:k, 0] = m * sc.x0
    return Dataset(X, Y)


def mse_tmse(errors, trim: float = 0.10):
    """Mean and upper-trimmed mean (smallest ``ceil((1-trim) K)`` values)."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        raise ContractError("no errors to aggregate")
    if not 0.0 <= trim < 1.0:
        raise ContractError("trim must lie in [0, 1)")
    keep = int(math.ceil((1.0 - trim) * e.size - 1e-9))
    return float(e.mean()), float(e[:keep].mean())


@dataclass
class MetricRow:
    estimator: str
    m: float
    mse: float
    tmse: float
    se: float
    reff: float
    n_ok: int
    n_failed: int


@dataclass
class SimulationReport:
    scenario: dict
    clean_mle_mse: float
    rows: list = field(default_factory=list)

    def get(self, estimator: str, m: float = 0.0) -> MetricRow:
        for r in self.rows:
            if r.estimator == estimator and math.isclose(r.m, m, abs_tol=1e-12):
                return r
        raise KeyError((estimator, m))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "simulation",
                "scenario": self.scenario, "clean_mle_mse": self.clean_mle_mse,
                "rows": [asdict(r) for r in self.rows]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv_long(self) -> str:
        lines = ["estimator,m,metric,value"]
        for r in self.rows:
            for metric in ("mse", "tmse", "se", "reff"):
                lines.append(f"{r.estimator},{r.m!r},{metric},{getattr(r, metric)!r}")
        return "\n".join(lines) + "\n"


def _fit_errors(sc: Scenario, rep: int, m: float, estimators) -> dict:
    """Squared Frobenius error of each estimator on one replication; ``None``
    marks a failed fit."""
    data = generate_sample(sc, rep, m)
    out = {}
    if "MLE" in estimators:
        try:
            out["MLE"] = float((mle_fit(data).B ** 2).sum())
        except (MMRegError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.info("rep %d m=%g MLE failed: %s", rep, m, exc)
            out["MLE"] = None
    robust = [e for e in estimators if e != "MLE"]
    if robust:
        cfg = MMConfig.for_dimension(sc.q, sc.are)
        s_cfg = SConfig(n_subsamples=sc.n_subsamples, seed=sc.seed * 1_000_003 + rep)
        try:
            init = s_estimate(data, s_cfg, cfg.scale_kernel, cfg.b)
            if "S" in robust:
                out["S"] = float((init.B ** 2).sum())
            if "MM" in robust:
                out["MM"] = float((mm_fit(data, cfg, init).B ** 2).sum())
        except (MMRegError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.info("rep %d m=%g robust fit failed: %s", rep, m, exc)
            for e in robust:
                out.setdefault(e, None)
    return out


def _task(args):
    sc, rep, m, estimators = args
    return _fit_errors(sc, rep, m, estimators)


def _run_tasks(sc: Scenario, tasks):
    if sc.threads > 1:
        with ProcessPoolExecutor(max_workers=sc.threads) as ex:
            return list(ex.map(_task, tasks, chunksize=4))
    return [_task(t) for t in tasks]


def run_simulation(sc: Scenario) -> SimulationReport:
    """Fit every replication at every ``m`` and aggregate MSE, TMSE, SE and
    efficiency relative to the clean-data MLE."""
    grid = sc.m_grid if sc.contamination > 0 else (0.0,)
    tasks = [(sc, rep, m, sc.estimators) for m in grid for rep in range(sc.reps)]
    results = _run_tasks(sc, tasks)

    if sc.contamination > 0 or "MLE" not in sc.estimators:
        clean = Scenario(**{**asdict(sc), "contamination": 0.0, "estimators": ("MLE",)})
        clean_res = _run_tasks(clean, [(clean, r, 0.0, ("MLE",)) for r in range(sc.reps)])
    else:
        clean_res = results
    clean_errs = [r["MLE"] for r in clean_res if r.get("MLE") is not None]
    clean_mle = mse_tmse(clean_errs)[0] if clean_errs else float("nan")

    report = SimulationReport(scenario=asdict(sc), clean_mle_mse=clean_mle)
    for gi, m in enumerate(grid):
        block = results[gi * sc.reps:(gi + 1) * sc.reps]
        for est in sc.estimators:
            errs = [r[est] for r in block if r.get(est) is not None]
            failed = sc.reps - len(errs)
            if failed and failed >= 0.01 * sc.reps:
                raise MMRegError(
                    f"{est} failed on {failed} of {sc.reps} replications at m={m}")
            mse, tmse = mse_tmse(errs, 0.10)
            se = float(np.std(errs, ddof=1) / math.sqrt(len(errs))) if len(errs) > 1 else 0.0
            reff = clean_mle / mse if mse > 0 else float("inf")
            report.rows.append(MetricRow(est, m, mse, tmse, se, reff, len(errs), failed))
    return report


# --- cross-validation ------------------------------------------------------

@dataclass
class CVReport:
    folds: np.ndarray
    mse: dict
    tau: dict
    tau_constants: dict

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "crossval",
                "folds": self.folds.tolist(),
                "estimators": {e: {"mse": self.mse[e], "tau_scale": self.tau[e]}
                               for e in self.mse},
                "tau_constants": self.tau_constants}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def fold_assignment(n: int, folds: int, seed) -> np.ndarray:
    """Random fold labels ``0..folds-1`` with sizes differing by at most one."""
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % folds
    return labels


def cross_validate(data: Dataset, folds: int = 5, cfg: MMConfig | None = None,
                   seed: int = 0, s_cfg: SConfig | None = None,
                   estimators=ESTIMATORS) -> CVReport:
    """K-fold prediction errors per response component, summarized by their
    mean square and by a tau-scale (bisquare, breakdown 0.5, Gaussian
    efficiency 0.85)."""
    if folds < 2 or data.n < 2 * folds:
        raise ContractError(f"need folds >= 2 and n >= 2*folds (n={data.n}, folds={folds})")
    cfg = MMConfig.for_dimension(data.q) if cfg is None else cfg
    s_cfg = SConfig(seed=seed) if s_cfg is None else s_cfg
    labels = fold_assignment(data.n, folds, seed)
    errs = {e: np.zeros((data.n, data.q)) for e in estimators}
    for f in range(folds):
        test = labels == f
        train = data.take(np.flatnonzero(~test))
        fits = {}
        if "MLE" in estimators:
            fits["MLE"] = mle_fit(train).B
        if "S" in estimators or "MM" in estimators:
            init = s_estimate(train, s_cfg, cfg.scale_kernel, cfg.b)
            fits["S"] = init.B
            fits["MM"] = mm_fit(train, cfg, init).B
        for e in estimators:
            errs[e][test] = data.Y[test] - data.X[test] @ fits[e]
    c0, c2 = lookup_c0(1), lookup_tau_c2()
    k0, k2 = Bisquare(c0), Bisquare(c2)
    mse = {e: [float(v) for v in (errs[e] ** 2).mean(axis=0)] for e in estimators}
    tau = {e: [tau_scale(errs[e][:, j], k0, k2, 0.5) for j in range(data.q)]
           for e in estimators}
    return CVReport(labels, mse, tau, {"c0": c0, "c2": c2, "b": 0.5})

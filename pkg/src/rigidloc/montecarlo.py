"""Monte-Carlo sweeps over the reference range.

Every trial owns independent random streams derived from
``(seed, trial, purpose)``, so results do not depend on execution order or
on which other reference ranges are in the sweep. The same standard-normal
range noise is reused (scaled) across the sweep within a trial.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import crb as crb_mod
from .config import ExperimentConfig
from .errors import RigidLocError
from .estimators import UNITARY_METHODS, classical_ls, estimate
from .measurement import (
    build_whitened_model,
    center_model,
    db_to_linear,
    oracle_whitened_model,
    perturb_topology,
    true_ranges,
)
from .scenarios import random_anchors

__all__ = [
    "MethodMetrics",
    "MetricsRow",
    "TrialResult",
    "rmse_rotation",
    "rmse_translation",
    "rmse_positions",
    "mae_rotation",
    "bias_rotation",
    "bias_standard_error",
    "trial_anchors",
    "run_trial",
    "run_experiment",
    "crb_table",
    "csv_header",
    "format_csv",
]

_ANCHORS, _TOPOLOGY, _NOISE = 0, 1, 2
UNIT_NORM_TOL = 1e-8
METHOD_METRICS = ("rmse_q", "mae_q", "bias_q", "bias_q_se", "rmse_t", "rmse_s",
                  "iterations_mean", "iterations_median", "failures", "nonconverged",
                  "reflections")
COUNT_METRICS = {"failures", "nonconverged", "reflections"}
CRB_COLUMNS = ("rcrb_q", "rcrb_t", "rcrb_s", "rcrb_q_unc", "rcrb_t_unc", "crb_failures")


# --- metrics -----------------------------------------------------------------

def rmse_rotation(estimates, Q) -> float:
    """``sqrt(mean ||Q - Qhat||_F^2)``."""
    E = np.asarray(estimates, dtype=float) - np.asarray(Q, dtype=float)
    return float(np.sqrt(np.mean(np.sum(E * E, axis=(-2, -1)))))


def rmse_translation(estimates, t) -> float:
    E = np.asarray(estimates, dtype=float) - np.asarray(t, dtype=float)
    return float(np.sqrt(np.mean(np.sum(E * E, axis=-1))))


def rmse_positions(estimates, S) -> float:
    """Frobenius RMSE over all sensors; ``S`` may be one matrix or one per trial."""
    return rmse_rotation(estimates, S)


def _normalize_columns(Qhat):
    norms = np.linalg.norm(Qhat, axis=-2, keepdims=True)
    unit = np.all(np.abs(norms - 1.0) <= UNIT_NORM_TOL, axis=(-2, -1), keepdims=True)
    return np.where(unit, Qhat, Qhat / norms)


def mae_rotation(estimates, Q) -> float:
    """Mean angular error in radians.

    Per trial the elementwise arccos of the diagonal of ``Q^T Qhat`` is
    summed (columns of ``Qhat`` normalised first when they are not unit
    length); the result is the square root of the average.
    """
    Qhat = _normalize_columns(np.asarray(estimates, dtype=float))
    G = np.einsum("ji,...jk->...ik", np.asarray(Q, dtype=float), Qhat)
    diag = np.clip(np.diagonal(G, axis1=-2, axis2=-1), -1.0, 1.0)
    return float(np.sqrt(np.mean(np.sum(np.arccos(diag), axis=-1))))


def bias_rotation(estimates, Q) -> float:
    """``|| mean vec(Qhat) - vec(Q) ||_2``."""
    Qhat = np.asarray(estimates, dtype=float)
    return float(np.linalg.norm(Qhat.mean(axis=0) - np.asarray(Q, dtype=float)))


def bias_standard_error(estimates) -> float:
    """RMS size of the sample-mean error under zero bias: ``sqrt(tr(cov) / n)``."""
    V = np.asarray(estimates, dtype=float).reshape(len(estimates), -1)
    n = V.shape[0]
    if n < 2:
        return math.nan
    return float(np.sqrt(np.sum(np.var(V, axis=0, ddof=1)) / n))


# --- trials ------------------------------------------------------------------

def _rng(cfg: ExperimentConfig, trial: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, trial, purpose])


def trial_anchors(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    """Anchor matrix (3xM) used by ``trial``; trial 0's draw in fixed-anchor mode."""
    explicit = cfg.anchor_matrix()
    if explicit is not None:
        return explicit
    k = 0 if cfg.fixed_anchors else trial
    return random_anchors(cfg.anchors, cfg.anchor_extent, _rng(cfg, k, _ANCHORS))


@dataclass
class TrialResult:
    """Per-trial outputs, arrays indexed by reference-range position first."""

    rotations: dict = field(default_factory=dict)      # method -> (Z, 3, 3)
    translations: dict = field(default_factory=dict)   # method -> (Z, 3)
    sq_pos_err: dict = field(default_factory=dict)     # method -> (Z,)
    iterations: dict = field(default_factory=dict)     # method -> (Z,)
    converged: dict = field(default_factory=dict)      # method -> (Z,) bool
    ok: dict = field(default_factory=dict)             # method -> (Z,) bool
    classical_sq_err: np.ndarray | None = None         # (Z,)
    crb: np.ndarray | None = None                      # (Z, 5): q, t, s, q_unc, t_unc
    true_positions: np.ndarray | None = None


def _crb_values(cfg, A, C, Q, S, zeta):
    om = oracle_whitened_model(A, S, zeta, cfg.reference_sensor)
    F = crb_mod.fim(om.Abar, C)
    con = crb_mod.uc_crb(F, Q)
    unc = crb_mod.unconstrained_crb(F)
    rs = math.sqrt(max(np.trace(crb_mod.crb_positions(con, C)), 0.0))
    return [con.rcrb_q, con.rcrb_t, rs, unc.rcrb_q, unc.rcrb_t]


def run_trial(cfg: ExperimentConfig, trial: int, with_estimators: bool = True) -> TrialResult:
    pose = cfg.pose()
    Q, t = pose.rotation, pose.translation
    C = cfg.topology_matrix()
    A = trial_anchors(cfg, trial)
    zetas = db_to_linear(cfg.zeta_db)
    Z = len(zetas)
    S_nominal = Q @ C + t[:, None]

    res = TrialResult()
    res.crb = np.full((Z, 5), np.nan)
    for j, zeta in enumerate(zetas):
        try:
            res.crb[j] = _crb_values(cfg, A, C, Q, S_nominal, zeta)
        except (RigidLocError, np.linalg.LinAlgError):
            pass
    if not with_estimators:
        return res

    C_true = perturb_topology(C, cfg.sigma_e, _rng(cfg, trial, _TOPOLOGY))
    S = Q @ C_true + t[:, None]
    res.true_positions = S
    R = true_ranges(A, S)
    unit_noise = _rng(cfg, trial, _NOISE).standard_normal(R.shape)
    settings = cfg.newton()
    clamp = 1e-6 if cfg.clamp else None

    for m in cfg.estimators:
        res.rotations[m] = np.full((Z, 3, 3), np.nan)
        res.translations[m] = np.full((Z, 3), np.nan)
        res.sq_pos_err[m] = np.full(Z, np.nan)
        res.iterations[m] = np.zeros(Z, dtype=int)
        res.converged[m] = np.zeros(Z, dtype=bool)
        res.ok[m] = np.zeros(Z, dtype=bool)
    res.classical_sq_err = np.full(Z, np.nan)

    for j, zeta in enumerate(zetas):
        Y = R + unit_noise * (R / math.sqrt(zeta))
        try:
            wm = build_whitened_model(A, Y * Y, zeta, cfg.reference_sensor, clamp)
            cm = center_model(wm, C)
        except (RigidLocError, np.linalg.LinAlgError):
            continue
        res.classical_sq_err[j] = np.sum((classical_ls(wm) - S) ** 2)
        for m in cfg.estimators:
            try:
                est = estimate(m, wm, C, cm, settings)
            except (RigidLocError, np.linalg.LinAlgError):
                continue
            res.rotations[m][j] = est.rotation
            res.translations[m][j] = est.translation
            res.sq_pos_err[m][j] = np.sum((est.rotation @ C + est.translation[:, None] - S) ** 2)
            res.iterations[m][j] = est.iterations
            res.converged[m][j] = est.converged
            res.ok[m][j] = True
    return res


# --- aggregation ---------------------------------------------------------------

@dataclass(frozen=True)
class MethodMetrics:
    rmse_q: float
    mae_q: float
    bias_q: float
    bias_q_se: float
    rmse_t: float
    rmse_s: float
    iterations_mean: float
    iterations_median: float
    failures: int
    nonconverged: int
    reflections: int

    @classmethod
    def empty(cls, failures):
        nan = math.nan
        return cls(nan, nan, nan, nan, nan, nan, nan, nan, failures, 0, 0)


@dataclass(frozen=True)
class MetricsRow:
    zeta_db: float
    methods: dict
    classical_rmse_s: float
    classical_failures: int
    rcrb_q: float
    rcrb_t: float
    rcrb_s: float
    rcrb_q_unc: float
    rcrb_t_unc: float
    crb_failures: int


def _method_metrics(Qhat, that, sq_pos, iters, conv, ok, Q, t):
    failures = int(np.count_nonzero(~ok))
    if not np.any(ok):
        return MethodMetrics.empty(failures)
    Qhat, that, sq_pos = Qhat[ok], that[ok], sq_pos[ok]
    iters, conv = iters[ok], conv[ok]
    return MethodMetrics(
        rmse_q=rmse_rotation(Qhat, Q),
        mae_q=mae_rotation(Qhat, Q),
        bias_q=bias_rotation(Qhat, Q),
        bias_q_se=bias_standard_error(Qhat),
        rmse_t=rmse_translation(that, t),
        rmse_s=float(np.sqrt(np.mean(sq_pos))),
        iterations_mean=float(np.mean(iters)),
        iterations_median=float(np.median(iters)),
        failures=failures,
        nonconverged=int(np.count_nonzero(~conv)),
        reflections=int(np.count_nonzero(np.linalg.det(Qhat) < 0)),
    )


def _mean_finite(values):
    values = values[np.isfinite(values)]
    return float(np.mean(values)) if values.size else math.nan


def _run_trials(cfg, with_estimators):
    trials = range(cfg.trials)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(run_trial, [cfg] * cfg.trials, trials,
                                 [with_estimators] * cfg.trials, chunksize=16))
    return [run_trial(cfg, k, with_estimators) for k in trials]


def _crb_summary(results, j):
    vals = np.array([r.crb[j] for r in results])
    failures = int(np.count_nonzero(~np.all(np.isfinite(vals), axis=1)))
    return [_mean_finite(vals[:, c]) for c in range(5)], failures


def run_experiment(cfg: ExperimentConfig) -> list[MetricsRow]:
    """Run ``cfg.trials`` trials per reference range and aggregate one row per range.

    Trials that raise for an estimator are excluded from that estimator's
    metrics and counted in its ``failures`` column.
    """
    results = _run_trials(cfg, True)
    pose = cfg.pose()
    Q, t = pose.rotation, pose.translation
    rows = []
    for j, zdb in enumerate(cfg.zeta_db):
        methods = {}
        for m in cfg.estimators:
            methods[m] = _method_metrics(
                np.array([r.rotations[m][j] for r in results]),
                np.array([r.translations[m][j] for r in results]),
                np.array([r.sq_pos_err[m][j] for r in results]),
                np.array([r.iterations[m][j] for r in results]),
                np.array([r.converged[m][j] for r in results]),
                np.array([r.ok[m][j] for r in results]),
                Q, t)
        cls_err = np.array([r.classical_sq_err[j] for r in results])
        cls_ok = np.isfinite(cls_err)
        crb_vals, crb_failures = _crb_summary(results, j)
        rows.append(MetricsRow(
            zeta_db=float(zdb),
            methods=methods,
            classical_rmse_s=float(np.sqrt(np.mean(cls_err[cls_ok]))) if cls_ok.any() else math.nan,
            classical_failures=int(np.count_nonzero(~cls_ok)),
            rcrb_q=crb_vals[0], rcrb_t=crb_vals[1], rcrb_s=crb_vals[2],
            rcrb_q_unc=crb_vals[3], rcrb_t_unc=crb_vals[4],
            crb_failures=crb_failures,
        ))
    return rows


def crb_table(cfg: ExperimentConfig) -> list[dict]:
    """Mean root bounds per reference range without running any estimator."""
    results = _run_trials(cfg, False)
    table = []
    for j, zdb in enumerate(cfg.zeta_db):
        vals, failures = _crb_summary(results, j)
        table.append(dict(zip(("zeta_db",) + CRB_COLUMNS,
                              [float(zdb)] + vals + [failures])))
    return table


# --- CSV -----------------------------------------------------------------------

def _column_prefix(method):
    return method.replace("-", "_")


def csv_header(methods) -> list[str]:
    cols = ["zeta_db"]
    for m in methods:
        cols += [f"{_column_prefix(m)}_{metric}" for metric in METHOD_METRICS]
    cols += ["classical_rmse_s", "classical_failures"]
    cols += list(CRB_COLUMNS)
    return cols


def _cell(value, count=False):
    if count:
        return str(int(value))
    value = float(value)
    if not math.isfinite(value):
        return "nan"
    return f"{value:.17e}"


def format_csv(rows, methods) -> str:
    out = io.StringIO()
    out.write(",".join(csv_header(methods)) + "\n")
    for row in rows:
        cells = [_cell(row.zeta_db)]
        for m in methods:
            mm = row.methods[m]
            cells += [_cell(getattr(mm, k), k in COUNT_METRICS) for k in METHOD_METRICS]
        cells += [_cell(row.classical_rmse_s), _cell(row.classical_failures, True)]
        cells += [_cell(getattr(row, k)) for k in CRB_COLUMNS[:-1]]
        cells.append(_cell(row.crb_failures, True))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def format_crb_csv(table) -> str:
    out = io.StringIO()
    out.write(",".join(("zeta_db",) + CRB_COLUMNS) + "\n")
    for entry in table:
        cells = [_cell(entry["zeta_db"])]
        cells += [_cell(entry[k]) for k in CRB_COLUMNS[:-1]]
        cells.append(_cell(entry["crb_failures"], True))
        out.write(",".join(cells) + "\n")
    return out.getvalue()

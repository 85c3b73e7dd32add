"""Nine-scenario simulation design, true-HTE oracle and evaluation metrics.

Covariates are 1-indexed in the formulas below: ``x1`` is column 0. Odd
covariates are standard normal, even ones Bernoulli(0.5). Survival follows a
Cox model with baseline hazard ``h0(t) = 2t`` and log hazard
``mu(x) + (z - 0.5) tau(x)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats
from scipy.special import expit

from .data import SurvivalDataset

log = logging.getLogger(__name__)

P = 15
MAIN_FUNCTIONS = ("M1", "M2", "M3")
TREAT_FUNCTIONS = ("T1", "T2", "T3")
#: ``T0`` (no treatment effect) is accepted for null-effect checks only.
NULL_TREAT = "T0"


def _cols(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != P:
        raise ValueError(f"expected {P} covariates, got {x.shape[1]}")
    return {j: x[:, j - 1] for j in range(1, P + 1)}


def mu(x, which: str) -> np.ndarray:
    """Main-effect function M1, M2 or M3 evaluated row-wise."""
    c = _cols(x)
    if which == "M1":
        return 0.5 * c[1] + 0.5 * c[3] + 0.5 * c[5] + 0.5 * c[2] + 0.5 * c[4] - c[6]
    if which == "M2":
        return (
            (c[1] > -1).astype(float) - (c[3] > 0) + (c[5] > 1)
            + 0.5 * c[2] * c[4] - 1.25 * c[6]
        )
    if which == "M3":
        return -1.25 * np.sin(c[1] * c[3]) + 2.25 * expit(c[5]) - 1.5 * c[2] * c[4] * c[6] - 1.0
    raise ValueError(f"unknown main-effect function {which!r}")


def tau(x, which: str) -> np.ndarray:
    """Treatment-effect function T1, T2 or T3 (or T0 = 0) evaluated row-wise."""
    c = _cols(x)
    if which == "T1":
        return -c[5] - 1.5 * np.abs(c[7] + c[9]) + 1.5 * c[6] - c[8] - c[10]
    if which == "T2":
        return (
            -2.0 * ((c[5] > -1) & (c[7] > 0)) - 2.0 * ((c[7] > 0) & (c[9] > 1))
            - 2.5 * c[6] - c[8] + 1.5 * c[10]
        )
    if which == "T3":
        return -1.75 * np.sin(c[5] * c[7]) + 3.0 * (c[5] * expit(c[6] * c[9])) - 2.0 * c[8] * c[9] * c[10] - 2.0
    if which == NULL_TREAT:
        return np.zeros(c[1].shape)
    raise ValueError(f"unknown treatment-effect function {which!r}")


def log_hazard(x, z, main_fn, treat_fn):
    return mu(x, main_fn) + (np.asarray(z, dtype=float) - 0.5) * tau(x, treat_fn)


def invert_survival(u, eta):
    """Time at which ``exp(-t^2 exp(eta))`` equals ``u``."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u must lie strictly inside (0, 1)")
    return np.sqrt(-np.log(u) / np.exp(eta))


def sample_survival(x, z, u, main_fn="M1", treat_fn="T1"):
    """True survival time ``sqrt(-log u / exp(mu + (z - 0.5) tau))``."""
    return invert_survival(u, log_hazard(x, z, main_fn, treat_fn))


def censoring_raw(x, z, eps):
    c = _cols(x)
    return 1.1 * np.exp(1.0 - np.sin(c[1] * c[3]) + 3.0 * (np.asarray(z, float) - 0.5) * c[8] + eps)


def sample_censoring(x, z, rng, max_followup: float = 3.0):
    """Censoring time capped at the maximum follow-up."""
    x = np.atleast_2d(x)
    eps = rng.standard_normal(x.shape[0])
    return np.minimum(censoring_raw(x, z, eps), max_followup)


def analytic_hte(x, t0, main_fn, treat_fn):
    """Closed-form ``S(t0|x,1) - S(t0|x,0)`` of the generating model."""
    m, tt = mu(x, main_fn), tau(x, treat_fn)
    return np.exp(-t0 * t0 * np.exp(m + 0.5 * tt)) - np.exp(-t0 * t0 * np.exp(m - 0.5 * tt))


def true_hte(x, t0, main_fn, treat_fn, n_draws: int = 100_000, rng=None, return_se: bool = False):
    """Monte-Carlo survival difference at ``t0`` using one uniform stream for both arms."""
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    rng = np.random.default_rng(rng)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eta1 = log_hazard(x, 1, main_fn, treat_fn)
    eta0 = log_hazard(x, 0, main_fn, treat_fn)
    out = np.empty(x.shape[0])
    se = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        u = rng.random(n_draws)
        u[u == 0.0] = np.nextafter(0.0, 1.0)
        alive1 = invert_survival(u, eta1[i]) > t0
        alive0 = invert_survival(u, eta0[i]) > t0
        diff = alive1.astype(float) - alive0
        out[i] = diff.mean()
        se[i] = diff.std(ddof=1) / math.sqrt(n_draws) if n_draws > 1 else math.nan
    return (out, se) if return_se else out


@dataclass(frozen=True)
class ScenarioSpec:
    main_fn: str = "M1"
    treat_fn: str = "T1"
    n: int = 1000
    seed: int = 0
    t0: float = 2.0
    max_followup: float = 3.0
    oracle_draws: int = 100_000
    p: int = P

    def __post_init__(self):
        if self.main_fn not in MAIN_FUNCTIONS or self.treat_fn not in TREAT_FUNCTIONS + (NULL_TREAT,):
            raise ValueError(
                f"unknown scenario {self.main_fn}x{self.treat_fn}; choose from "
                + ", ".join(f"{m}x{t}" for m in MAIN_FUNCTIONS for t in TREAT_FUNCTIONS)
            )
        if self.p != P:
            raise ValueError("the simulation design has exactly 15 covariates")

    @property
    def name(self) -> str:
        return f"{self.main_fn}x{self.treat_fn}"

    @classmethod
    def parse(cls, name: str, **kw) -> "ScenarioSpec":
        parts = name.replace("×", "x").upper().split("X")
        if len(parts) != 2:
            raise ValueError(
                f"cannot parse scenario {name!r}; choose from "
                + ", ".join(f"{m}x{t}" for m in MAIN_FUNCTIONS for t in TREAT_FUNCTIONS)
            )
        return cls(parts[0], parts[1], **kw)


@dataclass
class SimulatedData:
    data: SurvivalDataset
    true_times: np.ndarray
    censor_times: np.ndarray

    @property
    def censoring_fraction(self) -> float:
        return float(1.0 - self.data.events.mean())


def simulate_covariates(n, rng) -> np.ndarray:
    x = np.empty((n, P))
    odd = np.arange(0, P, 2)  # x1, x3, ...
    even = np.arange(1, P, 2)
    x[:, odd] = rng.standard_normal((n, odd.size))
    x[:, even] = rng.binomial(1, 0.5, (n, even.size))
    return x


def generate(spec: ScenarioSpec, rng=None) -> SimulatedData:
    """Draw one dataset of ``spec.n`` subjects."""
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    x = simulate_covariates(spec.n, rng)
    z = rng.binomial(1, 0.5, spec.n)
    u = rng.random(spec.n)
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    t_true = sample_survival(x, z, u, spec.main_fn, spec.treat_fn)
    c = sample_censoring(x, z, rng, spec.max_followup)
    events = (t_true < c).astype(int)
    t_obs = np.minimum(t_true, c)
    kinds = tuple("continuous" if j % 2 == 0 else "binary" for j in range(P))
    data = SurvivalDataset(t_obs, events, z, x, tuple(f"x{j + 1}" for j in range(P)), kinds)
    return SimulatedData(data, t_true, c)


@dataclass
class MetricsRow:
    rmse: float
    abs_rbias: float
    spearman: float
    correct_classification: float
    n_zero_truth: int = 0


def metrics(true_delta, est_delta, events) -> MetricsRow:
    """RMSE and AbsRbias over uncensored subjects, Spearman and sign agreement over all.

    Rows whose true effect is exactly zero are left out of AbsRbias.
    """
    d = np.asarray(true_delta, dtype=float)
    e = np.asarray(est_delta, dtype=float)
    w = np.asarray(events, dtype=float)
    if not d.shape == e.shape == w.shape:
        raise ValueError("inputs must have the same length")
    err = d - e
    rmse = math.sqrt(np.sum(w * err**2) / w.sum()) if w.sum() > 0 else math.nan
    nz = d != 0
    wz = w * nz
    if wz.sum() > 0:
        abs_rbias = abs(float(np.sum(wz[nz] * err[nz] / d[nz]) / wz.sum()))
    else:
        abs_rbias = math.nan
    if d.size > 1 and np.ptp(d) > 0 and np.ptp(e) > 0:
        spearman = float(stats.spearmanr(d, e).statistic)
    else:
        spearman = math.nan
    ccr = float(np.mean(np.sign(d) == np.sign(e))) if d.size else math.nan
    return MetricsRow(rmse, abs_rbias, spearman, ccr, int(np.sum(~nz)))


BENCH_COLUMNS = (
    "scenario", "replication", "method", "seed", "n_train", "n_test",
    "censoring_fraction", "rmse", "abs_rbias", "spearman",
    "correct_classification", "n_zero_truth", "status",
)


@dataclass
class BenchmarkResult:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for row in self.rows:
            writer.writerow([_cell(row.get(c)) for c in BENCH_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        """Boxplot quantiles per scenario and metric."""
        out = {}
        for name in dict.fromkeys(r["scenario"] for r in self.rows):
            rows = [r for r in self.rows if r["scenario"] == name and r["status"] == "ok"]
            entry = {"replications": len(rows)}
            for metric in ("rmse", "abs_rbias", "spearman", "correct_classification"):
                vals = np.array([r.get(metric, math.nan) for r in rows], dtype=float)
                vals = vals[np.isfinite(vals)]
                if vals.size:
                    q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
                    entry[metric] = dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))
                else:
                    entry[metric] = None
            out[name] = entry
        return out

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=1, allow_nan=False) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def run_replication(spec: ScenarioSpec, fit_config, seed_seq) -> dict:
    from .hte import predict_hte
    from .pipeline import fit_hte_model

    train_seq, test_seq, fit_seq, oracle_seq = seed_seq.spawn(4)
    train = generate(spec, np.random.default_rng(train_seq))
    test = generate(spec, np.random.default_rng(test_seq))
    fit_seed = int(fit_seq.generate_state(1)[0])
    cfg = replace(
        fit_config,
        boost=replace(fit_config.boost, seed=fit_seed),
        path=replace(fit_config.path, seed=fit_seed),
    )
    model = fit_hte_model(train.data, cfg)
    est = predict_hte(model, test.data.covariates, spec.t0).hte
    truth = true_hte(
        test.data.covariates, spec.t0, spec.main_fn, spec.treat_fn, spec.oracle_draws,
        rng=np.random.default_rng(oracle_seq),
    )
    m = metrics(truth, est, test.data.events)
    return {
        "censoring_fraction": train.censoring_fraction,
        **asdict(m),
        "est": est,
        "truth": truth,
    }


def run_benchmark(scenarios, replications: int, fit_config=None, master_seed: int = 0, keep_predictions=False):
    """Fit and evaluate every scenario ``replications`` times.

    Each (scenario, replication) gets its own child of
    ``SeedSequence(master_seed)``; failures are logged and recorded with
    status ``"error"``.
    """
    from .pipeline import FitConfig

    fit_config = fit_config or FitConfig()
    result = BenchmarkResult()
    root = np.random.SeedSequence(master_seed)
    scen_seqs = root.spawn(len(scenarios))
    for spec, sseq in zip(scenarios, scen_seqs):
        rep_seqs = sseq.spawn(replications) if replications > 0 else []
        for r, rseq in enumerate(rep_seqs):
            row = {
                "scenario": spec.name, "replication": r, "method": "prop",
                "seed": master_seed, "n_train": spec.n, "n_test": spec.n,
            }
            try:
                out = run_replication(spec, fit_config, rseq)
                est, truth = out.pop("est"), out.pop("truth")
                row.update(out, status="ok")
                if keep_predictions:
                    row["_est"], row["_truth"] = est, truth
            except Exception as exc:  # harness keeps going
                log.exception("replication %d of %s failed", r, spec.name)
                row.update(status=f"error: {type(exc).__name__}")
            result.rows.append(row)
    return result

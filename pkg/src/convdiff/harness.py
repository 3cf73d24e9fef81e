"""Config-driven Monte Carlo studies and the real-data workflow.

A study is described by an :class:`ExperimentConfig`, read from a flat
``key = value`` file and overridden by ``key=value`` arguments.  Replication
``r`` simulates with random stream ``r`` of ``seed``, so any replication can
be rerun on its own and the outputs do not depend on scheduling.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conv_obs import ConvolvedSeries, convolve
from .errors import ConfigurationError, ConvDiffError, DataError
from .inference import (DEFAULT_SIG_LEVELS, estimate_rho, lga_estimate, lse_alpha, lse_beta,
                        smoothing_test)
from .kernel_math import SmoothingBound, gaussian_quantile
from .sde_sim import SimConfig, euler_maruyama, get_model, ou_1d
from .variation_stats import rv_curve, rv_slope

log = logging.getLogger(__name__)

STUDIES = ("sim1d", "sim2d", "realdata", "rvcurve")
FIT_MODES = ("all", "lse", "rho")

REAL_THETA1 = ((0.01, 200.0),)
REAL_THETA2 = ((-100.0, -0.01), (-100.0, 100.0))
RV_THETA1 = ((0.01, 100.0),)
RV_THETA2 = ((-100.0, -0.01), (-100.0, 100.0))


@dataclass
class ExperimentConfig:
    study: str = "sim1d"
    replications: int = 100
    n_obs: int = 100_000
    h_n: float = 10 ** (-10 / 3)
    m_precision: int = 1
    rho_true: tuple = (0.5,)
    alpha_true: tuple = (3.0,)
    beta_true: tuple = (-2.0, 1.0)
    known_rho: tuple | None = None
    model: str = "ou1d"
    seed: int = 20240601
    burn_in: float = 10 ** (-7 / 3)
    rho_bar: float = 100.0
    sig_levels: tuple = DEFAULT_SIG_LEVELS
    fit_mode: str = "all"
    starts: int = 8
    tol: float = 1e-8
    workers: int = 1
    k_max: int = 100
    input_path: str | None = None
    columns: tuple | None = None
    fit_column: int | None = None
    sample_rate_hz: float = 512.0
    time_unit_s: float = 5.0
    output_dir: str | None = None
    dump_path: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.study not in STUDIES:
            raise ConfigurationError(f"study must be one of {STUDIES}, got {self.study!r}")
        if self.fit_mode not in FIT_MODES:
            raise ConfigurationError(f"fit_mode must be one of {FIT_MODES}")
        if self.replications < 1 or self.n_obs < 4 or self.m_precision < 0:
            raise ConfigurationError("replications >= 1, n_obs >= 4 and m_precision >= 0 required")
        if not (self.h_n > 0 and self.burn_in >= 0 and self.rho_bar > 2):
            raise ConfigurationError("h_n > 0, burn_in >= 0 and rho_bar > 2 required")
        for a in self.sig_levels:
            if not 0 < a < 1:
                raise ConfigurationError(f"significance level {a} outside (0, 1)")
        if self.study == "realdata":
            if not self.input_path:
                raise ConfigurationError("realdata needs input_path")
            if not (self.sample_rate_hz > 0 and self.time_unit_s > 0):
                raise ConfigurationError("sample_rate_hz and time_unit_s must be positive")
        else:
            model = self.model_spec()
            alpha, beta = model.check_params(self.alpha_true, self.beta_true)
            for name, v, box in (("alpha_true", alpha, model.theta1_box),
                                 ("beta_true", beta, model.theta2_box)):
                if np.any(v < box[:, 0]) or np.any(v > box[:, 1]):
                    raise ConfigurationError(f"{name}={tuple(v)} lies outside its box")
            rho = np.asarray(self.rho_true, dtype=float)
            if rho.shape != (model.dim_d,) or np.any(rho < 0) or np.any(rho > self.rho_bar):
                raise ConfigurationError(f"rho_true must have {model.dim_d} entries in [0, rho_bar]")
        return self

    @property
    def bound(self) -> SmoothingBound:
        return SmoothingBound(self.rho_bar)

    @property
    def h_fine(self) -> float:
        return self.h_n / 10 ** self.m_precision

    def model_spec(self):
        if self.study == "rvcurve" and self.model == "ou1d":
            return ou_1d(theta1_box=RV_THETA1, theta2_box=RV_THETA2)
        return get_model(self.model)


STUDY_DEFAULTS = {
    "sim1d": {},
    "sim2d": dict(model="ou2d", replications=50, rho_true=(2.0, 4.0), alpha_true=(2.0, 0.0, 3.0),
                  beta_true=(-2.0, -0.4, 0.0, 0.1, -3.0, 5.0)),
    "rvcurve": dict(replications=10, n_obs=1_000_000, h_n=1e-5, rho_true=(10.0,),
                    alpha_true=(10.0,), beta_true=(-20.0, 0.0), burn_in=0.05),
    "realdata": {},
}

FULL_SCALE = dict(replications=1000, m_precision=2)

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_TUPLE_KEYS = {"rho_true", "alpha_true", "beta_true", "known_rho", "sig_levels", "columns"}
_INT_KEYS = {"replications", "n_obs", "m_precision", "seed", "starts", "workers", "k_max",
             "fit_column"}
_FLOAT_KEYS = {"h_n", "burn_in", "rho_bar", "tol", "sample_rate_hz", "time_unit_s"}


def _parse_number(key: str, text: str, kind):
    text = text.strip()
    try:
        if kind is int:
            return int(float(text)) if "e" in text.lower() else int(text, 0)
        return float(eval_power(text))
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {text!r} as a number") from None


def eval_power(text: str) -> float:
    """Float literal, also accepting ``a^b`` / ``a**b`` for values like ``10^(-10/3)``."""
    t = text.replace(" ", "").replace("**", "^")
    if "^" not in t:
        return float(t)
    base, _, expo = t.partition("^")
    expo = expo.strip("()")
    if "/" in expo:
        num, _, den = expo.partition("/")
        e = float(num) / float(den)
    else:
        e = float(expo)
    return float(base) ** e


def parse_value(key: str, text: str):
    if key not in _FIELDS:
        raise ConfigurationError(f"unknown config key {key!r}")
    text = text.strip()
    if key in _TUPLE_KEYS:
        if text.lower() in ("", "none"):
            return None
        kind = int if key == "columns" else float
        return tuple(_parse_number(key, p, kind) for p in text.replace(";", ",").split(","))
    if key in _INT_KEYS:
        if key == "fit_column" and text.lower() in ("", "none", "auto"):
            return None
        return _parse_number(key, text, int)
    if key in _FLOAT_KEYS:
        return _parse_number(key, text, float)
    if text.lower() in ("", "none"):
        return None
    return text


def parse_assignments(lines, source: str = "<args>") -> dict:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        out[key] = parse_value(key, val)
    return out


def load_config(study: str, config_file=None, overrides=(), full_scale: bool = False
                ) -> ExperimentConfig:
    """Defaults, then study defaults, then ``--paper-scale``, then the file, then overrides."""
    if study not in STUDIES:
        raise ConfigurationError(f"unknown study {study!r}")
    values = dict(STUDY_DEFAULTS[study])
    if full_scale:
        values.update(FULL_SCALE)
    if config_file is not None:
        try:
            with open(config_file) as fh:
                values.update(parse_assignments(fh, str(config_file)))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {config_file}: {exc}") from exc
    values.update(parse_assignments(overrides))
    values["study"] = study
    return ExperimentConfig(**values).validate()


# --------------------------------------------------------------------------
# summaries
# --------------------------------------------------------------------------


def summarize(values, truths) -> tuple[np.ndarray, np.ndarray]:
    """Coordinatewise mean and root mean squared error against ``truths``."""
    v = np.atleast_2d(np.asarray(values, dtype=float))
    if v.size == 0:
        raise DataError("summarize needs at least one row")
    t = np.broadcast_to(np.asarray(truths, dtype=float), v.shape[1:])
    return v.mean(axis=0), np.sqrt(np.mean((v - t) ** 2, axis=0))


@dataclass
class QuantitySummary:
    name: str
    truth: float
    mean: float
    rmse: float
    se: float
    count: int


@dataclass
class StudySummary:
    study: str
    quantities: list
    rejection: dict
    max_t: np.ndarray
    n_ok: int
    n_failed: int
    records: list = field(repr=False, default_factory=list)

    def get(self, name: str) -> QuantitySummary:
        for q in self.quantities:
            if q.name == name:
                return q
        raise KeyError(name)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records if r["status"] == "ok"], dtype=float)

    def rows(self) -> list[list]:
        out = [["quantity", "true", "mean", "rmse", "se", "n"]]
        for q in self.quantities:
            out.append([q.name, q.truth, q.mean, q.rmse, q.se, q.count])
        for level, freq in self.rejection.items():
            for ax, f in enumerate(freq, 1):
                out.append([f"reject_{level:g}_{ax}", math.nan, f,
                            math.nan, math.sqrt(f * (1 - f) / max(self.n_ok, 1)), self.n_ok])
        for ax, t in enumerate(self.max_t, 1):
            out.append([f"max_t_stat_{ax}", math.nan, t, math.nan, math.nan, self.n_ok])
        out.append(["failed_replications", math.nan, self.n_failed, math.nan, math.nan,
                    self.n_ok + self.n_failed])
        return out


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.15g}"
    return str(v)


def write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([fmt(v) for v in row])


# --------------------------------------------------------------------------
# simulation studies
# --------------------------------------------------------------------------


def effective_burn_in(cfg: ExperimentConfig) -> float:
    """Burn-in long enough for the widest smoothing window at time 0."""
    widest = (math.ceil(max(cfg.rho_true)) + 1) * cfg.h_n
    return max(cfg.burn_in, widest)


def simulate_series(cfg: ExperimentConfig, replication: int) -> ConvolvedSeries:
    model = cfg.model_spec()
    rho = np.asarray(cfg.rho_true, dtype=float)
    steps = int(round(cfg.h_n / cfg.h_fine))
    sim = SimConfig(n_fine=cfg.n_obs * steps, h_fine=cfg.h_fine, burn_in=effective_burn_in(cfg),
                    seed=cfg.seed, stream=replication, track_area=bool(np.any(rho > 0)))
    path = euler_maruyama(model, cfg.alpha_true, cfg.beta_true, sim)
    if cfg.dump_path and replication == 0:
        path.to_csv(cfg.dump_path)
    return convolve(path, rho, cfg.h_n, cfg.n_obs)


def analyse_series(series: ConvolvedSeries, cfg: ExperimentConfig, model) -> dict:
    """Everything computed for one replication, as a flat record."""
    rec = {}
    est = estimate_rho(series, cfg.bound)
    test = smoothing_test(series, cfg.sig_levels)
    for i in range(series.dim):
        rec[f"rho_hat_{i + 1}"] = est.rho_hat[i]
        rec[f"Rn_{i + 1}"] = est.Rn[i]
        rec[f"t_stat_{i + 1}"] = test.t_stat[i]
        rec[f"p_value_{i + 1}"] = test.p_value[i]
    if cfg.fit_mode in ("all", "lse"):
        rho = est.rho_hat if cfg.known_rho is None else np.asarray(cfg.known_rho, dtype=float)
        a = lse_alpha(series, rho, model, cfg.bound, starts=cfg.starts, tol=cfg.tol)
        b = lse_beta(series, rho, model, starts=cfg.starts, tol=cfg.tol)
        for j, v in enumerate(a.estimate, 1):
            rec[f"alpha_hat_{j}"] = v
        for j, v in enumerate(b.estimate, 1):
            rec[f"beta_hat_{j}"] = v
    if cfg.fit_mode == "all":
        g = lga_estimate(series, model, starts=cfg.starts, tol=cfg.tol)
        for j, v in enumerate(g.alpha_hat, 1):
            rec[f"lga_alpha_{j}"] = v
        for j, v in enumerate(g.beta_hat, 1):
            rec[f"lga_beta_{j}"] = v
    return rec


def run_replication(cfg: ExperimentConfig, r: int) -> dict:
    try:
        series = simulate_series(cfg, r)
        rec = analyse_series(series, cfg, cfg.model_spec())
    except ConvDiffError as exc:
        log.warning("replication %d failed: %s", r, exc)
        return {"replication": r, "status": "failed", "error": str(exc)}
    return {"replication": r, "status": "ok", "error": "", **rec}


def _truth(name: str, cfg: ExperimentConfig) -> float:
    kind, _, idx = name.rpartition("_")
    i = int(idx) - 1
    if kind == "rho_hat":
        return cfg.rho_true[i]
    if kind in ("alpha_hat", "lga_alpha"):
        return cfg.alpha_true[i]
    if kind in ("beta_hat", "lga_beta"):
        return cfg.beta_true[i]
    return math.nan


_SUMMARY_PREFIXES = ("rho_hat_", "alpha_hat_", "beta_hat_", "lga_alpha_", "lga_beta_", "t_stat_")


def summarize_records(records: list, cfg: ExperimentConfig) -> StudySummary:
    ok = [r for r in records if r["status"] == "ok"]
    failed = len(records) - len(ok)
    if failed > 0.1 * len(records):
        raise DataError(f"{failed} of {len(records)} replications failed "
                        f"(first error: {next(r['error'] for r in records if r['status'] != 'ok')})")
    names = [k for k in ok[0] if k.startswith(_SUMMARY_PREFIXES)]
    quantities = []
    for name in names:
        vals = np.array([r[name] for r in ok], dtype=float)
        truth = _truth(name, cfg)
        mean, rmse = summarize(vals[:, None], [truth if math.isfinite(truth) else 0.0])
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
        quantities.append(QuantitySummary(name, truth, float(mean[0]),
                                          float(rmse[0]) if math.isfinite(truth) else math.nan,
                                          se, vals.size))
    d = sum(1 for k in ok[0] if k.startswith("t_stat_"))
    t = np.array([[r[f"t_stat_{i + 1}"] for i in range(d)] for r in ok])
    rejection = {float(a): np.mean(t < gaussian_quantile(float(a)), axis=0) for a in cfg.sig_levels}
    return StudySummary(cfg.study, quantities, rejection, t.max(axis=0), len(ok), failed, records)


def _map_replications(cfg: ExperimentConfig, fn) -> list:
    idx = range(cfg.replications)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            out = list(pool.map(lambda r: fn(cfg, r), idx))
    else:
        out = [fn(cfg, r) for r in idx]
    return sorted(out, key=lambda rec: rec["replication"])


def run_sim_study(cfg: ExperimentConfig) -> StudySummary:
    if cfg.study not in ("sim1d", "sim2d"):
        raise ConfigurationError(f"run_sim_study cannot run study {cfg.study!r}")
    records = _map_replications(cfg, run_replication)
    summary = summarize_records(records, cfg)
    if cfg.output_dir:
        write_study_outputs(summary, cfg.output_dir)
    return summary


def write_study_outputs(summary: StudySummary, output_dir) -> None:
    os.makedirs(output_dir, exist_ok=True)
    keys = []
    for r in summary.records:
        keys.extend(k for k in r if k not in keys)
    rows = [keys] + [[r.get(k, "") for k in keys] for r in summary.records]
    write_csv(os.path.join(output_dir, "replications.csv"), rows)
    write_csv(os.path.join(output_dir, "summary.csv"), summary.rows())


# --------------------------------------------------------------------------
# realised volatility study
# --------------------------------------------------------------------------


@dataclass
class RVStudy:
    """RV curves per replication and the slope test.

    ``slope_se`` is the standard deviation of the slope across replications,
    i.e. the sampling standard error of a single path's slope.
    """

    curve: list
    slopes: np.ndarray
    ols_se: np.ndarray
    slope_se: float

    @property
    def slope(self) -> float:
        return float(self.slopes[0])

    @property
    def z(self) -> float:
        return self.slope / self.slope_se if self.slope_se > 0 else math.inf


def run_rv_study(cfg: ExperimentConfig) -> RVStudy:
    def one(cfg, r):
        series = simulate_series(cfg, r)
        curve = rv_curve(series, 0, cfg.k_max)
        s, se = rv_slope(curve)
        return {"replication": r, "curve": curve, "slope": s, "ols_se": se}

    out = _map_replications(cfg, one)
    slopes = np.array([o["slope"] for o in out])
    sd = float(slopes.std(ddof=1)) if slopes.size > 1 else math.nan
    study = RVStudy(out[0]["curve"], slopes, np.array([o["ols_se"] for o in out]), sd)
    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
        write_csv(os.path.join(cfg.output_dir, "rv_curve.csv"), [["k", "rv"]] + study.curve)
        write_csv(os.path.join(cfg.output_dir, "rv_slopes.csv"),
                  [["replication", "slope", "ols_se"]]
                  + [[o["replication"], o["slope"], o["ols_se"]] for o in out])
    return study


# --------------------------------------------------------------------------
# real data
# --------------------------------------------------------------------------


def read_numeric_columns(path) -> np.ndarray:
    """Comma- or whitespace-separated numeric table as ``(n_rows, n_cols)``.

    A non-numeric first line is treated as a header.  Any other unparsable
    token raises :class:`DataError` naming its line and column.
    """
    rows = []
    width = None
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.replace(",", " ").split()
            try:
                vals = [float(t) for t in toks]
            except ValueError:
                if not rows and lineno == 1:
                    continue
                for j, t in enumerate(toks, 1):
                    try:
                        float(t)
                    except ValueError:
                        raise DataError(f"{path}: line {lineno}, column {j}: "
                                        f"cannot parse {t!r}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"{path}: line {lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if len(rows) < 5:
        raise DataError(f"{path}: need at least 5 numeric rows, found {len(rows)}")
    return np.array(rows)


def equation_string(alpha: float, beta) -> str:
    return (f"dX_t = (({beta[0]:.3f})X_t + ({beta[1]:.3f}))dt + ({alpha:.3f})dw_t")


@dataclass
class RealDataReport:
    h_n: float
    n: int
    table: list
    fit_column: int
    lse_alpha: np.ndarray
    lse_beta: np.ndarray
    lga_alpha: np.ndarray
    lga_beta: np.ndarray

    @property
    def lse_equation(self) -> str:
        return equation_string(self.lse_alpha[0], self.lse_beta)

    @property
    def lga_equation(self) -> str:
        return equation_string(self.lga_alpha[0], self.lga_beta)


def run_real_data(cfg: ExperimentConfig) -> RealDataReport:
    """Per-column smoothing estimate and test, then OU fits on one column.

    ``h_n = 1 / (sample_rate_hz * time_unit_s)``.  The fitted column is
    ``fit_column`` (1-based) or, by default, the one with the largest estimate.
    """
    data = read_numeric_columns(cfg.input_path)
    h_n = 1.0 / (cfg.sample_rate_hz * cfg.time_unit_s)
    cols = cfg.columns or tuple(range(1, data.shape[1] + 1))
    for c in cols:
        if not 1 <= c <= data.shape[1]:
            raise DataError(f"column {c} out of range (file has {data.shape[1]} columns)")
    table = [["column", "rho_hat", "Rn", "t_stat", "p_value", "log_p_value"]]
    rhos = {}
    for c in cols:
        s = ConvolvedSeries(h_n=h_n, rho=[math.nan], values=data[:, c - 1][None, :])
        est = estimate_rho(s, cfg.bound)
        test = smoothing_test(s, cfg.sig_levels)
        rhos[c] = est.rho_hat[0]
        table.append([c, est.rho_hat[0], est.Rn[0], test.t_stat[0], test.p_value[0],
                      test.log_p_value[0]])
    fit_col = cfg.fit_column or max(rhos, key=rhos.get)
    if not 1 <= fit_col <= data.shape[1]:
        raise DataError(f"fit_column {fit_col} out of range")
    series = ConvolvedSeries(h_n=h_n, rho=[math.nan], values=data[:, fit_col - 1][None, :])
    rho = rhos.get(fit_col)
    if rho is None:
        rho = estimate_rho(series, cfg.bound).rho_hat[0]
    model = ou_1d(theta1_box=REAL_THETA1, theta2_box=REAL_THETA2)
    if cfg.known_rho is not None:
        rho = cfg.known_rho[0]
    a = lse_alpha(series, [rho], model, cfg.bound, starts=cfg.starts, tol=cfg.tol)
    b = lse_beta(series, [rho], model, starts=cfg.starts, tol=cfg.tol)
    g = lga_estimate(series, model, starts=cfg.starts, tol=cfg.tol)
    report = RealDataReport(h_n, series.n, table, fit_col, a.estimate, b.estimate,
                            g.alpha_hat, g.beta_hat)
    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
        write_csv(os.path.join(cfg.output_dir, "realdata_tests.csv"), table)
        write_csv(os.path.join(cfg.output_dir, "realdata_fit.csv"),
                  [["method", "alpha", "beta_1", "beta_2"],
                   ["lse", a.estimate[0], *b.estimate], ["lga", g.alpha_hat[0], *g.beta_hat]])
    return report


def write_synthetic_recording(path, alpha: float = 151.919, beta=(-2.146, 0.552),
                              rho: float = 1.037, sample_rate_hz: float = 512.0,
                              time_unit_s: float = 5.0, n: int = 113_664, m_precision: int = 2,
                              seed: int = 1, header: bool = True) -> ConvolvedSeries:
    """Simulate a one-column recording from a 1-d OU observed with smoothing ``rho``."""
    h_n = 1.0 / (sample_rate_hz * time_unit_s)
    h = h_n / 10 ** m_precision
    model = ou_1d(theta1_box=REAL_THETA1, theta2_box=REAL_THETA2)
    x0 = -beta[1] / beta[0]
    burn = max(10 ** (-7 / 3), (math.ceil(rho) + 1) * h_n)
    sim = SimConfig(n_fine=n * 10 ** m_precision, h_fine=h, burn_in=burn, seed=seed,
                    x_init=np.array([x0]), track_area=rho > 0)
    path_ = euler_maruyama(model, [alpha], list(beta), sim)
    series = convolve(path_, [rho], h_n, n)
    with open(path, "w") as fh:
        if header:
            fh.write("x1\n")
        for v in series.values[0]:
            fh.write(f"{v:.15g}\n")
    return series

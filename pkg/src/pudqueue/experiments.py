"""Parameter sweeps, figure presets and analytic-versus-simulation comparison."""

from __future__ import annotations

import concurrent.futures
import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from pudqueue import analytic_mg1, analytic_mg11, analytic_mm1k, simulator
from pudqueue.errors import ConfigError, InstabilityError
from pudqueue.reports import AnalyticReport
from pudqueue.service_distributions import (
    Exponential,
    Gamma,
    ServiceDistribution,
    parse_service_spec,
)

MODELS = ("mg1", "mg11", "mm1k")

VARIABLES = ("lambda", "mu", "alpha", "K")

DEFAULT_PACKETS = 1_000_000
DEFAULT_SEED = 1
DEFAULT_BATCHES = 100
DEFAULT_PROB_TOL = 0.005
DEFAULT_PENALTY_RTOL = 0.03

#  Below this missed probability, missed-penalty comparisons are meaningless.
MISSED_FLOOR = 1e-4

SWEEP_COLUMNS = (
    "model",
    "lambda",
    "mu",
    "alpha",
    "service",
    "K",
    "p_C",
    "p_I",
    "p_M",
    "E_sigma_C",
    "E_sigma_I",
    "E_sigma_M",
    "E_sigma_total",
    "source",
    "stderr_p_C",
    "stderr_p_I",
    "stderr_p_M",
    "stderr_E_sigma_C",
    "stderr_E_sigma_I",
    "stderr_E_sigma_M",
    "stderr_E_sigma_total",
    "note",
)

COMPARISON_COLUMNS = (
    "metric",
    "analytic",
    "simulated",
    "abs_error",
    "rel_error",
    "stderr",
    "status",
)

#  Sweep column -> (AnalyticReport field, MetricsSummary field).
_METRIC_FIELDS = {
    "p_C": ("p_correct", "p_correct"),
    "p_I": ("p_incorrect", "p_incorrect"),
    "p_M": ("p_missed", "p_missed"),
    "E_sigma_C": ("mean_pucd", "mean_pucd"),
    "E_sigma_I": ("mean_puid", "mean_puid"),
    "E_sigma_M": ("mean_pumd", "mean_pumd"),
    "E_sigma_total": ("total_pud", "mean_total"),
}


@dataclass(frozen=True)
class ModelParams:
    """One queue to analyze or simulate."""

    model: str
    lam: float
    service: ServiceDistribution
    k: int | None = None

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"Unknown model '{self.model}'")
        if self.model == "mm1k":
            if not isinstance(self.service, Exponential):
                raise ConfigError("M/M/1/K needs exponential service")
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise ConfigError(f"M/M/1/K needs a capacity K >= 1, got {self.k}")

    def analytic(self) -> AnalyticReport:
        if self.model == "mg1":
            return analytic_mg1.analyze(analytic_mg1.Mg1Config(self.lam, self.service))
        if self.model == "mg11":
            return analytic_mg11.analyze(
                analytic_mg11.Mg11Config(self.lam, self.service)
            )
        return analytic_mm1k.analyze(
            analytic_mm1k.Mm1kConfig(self.lam, self.service.rate, int(self.k))
        )

    def system(self) -> simulator.SystemConfig:
        if self.model == "mg1":
            return simulator.SystemConfig.mg1(self.lam, self.service)
        if self.model == "mg11":
            return simulator.SystemConfig.mg11(self.lam, self.service)
        return simulator.SystemConfig.mm1k(self.lam, self.service.rate, int(self.k))

    def columns(self) -> dict:
        params = self.service.params()
        return {
            "model": self.model,
            "lambda": self.lam,
            "mu": params.get("mu"),
            "alpha": params.get("alpha"),
            "service": self.service.spec(),
            "K": {"mg1": None, "mg11": 1}.get(self.model, self.k),
        }


@dataclass(frozen=True)
class SweepSpec:
    """A one-dimensional grid over ``vary`` with the other parameters fixed.

    Sweeping ``mu`` uses exponential service. Sweeping ``alpha`` uses
    Gamma(alpha, alpha / mean_service) so the mean stays fixed.
    """

    model: str
    vary: str
    start: float
    stop: float
    steps: int
    lam: float = 1.0
    mu: float = 1.0
    service: str | None = None
    k: int = 1
    mean_service: float = 0.5
    packets: int = DEFAULT_PACKETS
    seed: int = DEFAULT_SEED
    batches: int = DEFAULT_BATCHES
    simulate: bool = True

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"Unknown model '{self.model}'")
        if self.vary not in VARIABLES:
            raise ConfigError(f"Cannot sweep '{self.vary}'")
        if self.vary == "K" and self.model != "mm1k":
            raise ConfigError("Only M/M/1/K sweeps over K")
        if self.vary == "alpha" and self.model == "mm1k":
            raise ConfigError("M/M/1/K has exponential service only")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"Grid needs at least one step, got {self.steps}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError("Grid bounds must be finite")

    def grid(self) -> list[float]:
        values = np.linspace(self.start, self.stop, int(self.steps))
        if self.vary == "K":
            return [int(round(v)) for v in values]
        return [float(v) for v in values]

    def point(self, value: float) -> ModelParams:
        lam, mu, k = self.lam, self.mu, self.k
        if self.vary == "lambda":
            lam = value
        elif self.vary == "mu":
            mu = value
        elif self.vary == "K":
            k = value
        if self.vary == "alpha":
            service = Gamma(value, value / self.mean_service)
        elif self.service is not None and self.vary != "mu":
            service = parse_service_spec(self.service)
        else:
            service = Exponential(mu)
        return ModelParams(self.model, lam, service, k)


PRESETS: dict[str, tuple[SweepSpec, ...]] = {
    "num1": (SweepSpec("mg1", "lambda", 0.05, 0.95, 19, mu=1.0),),
    "num2": (SweepSpec("mg11", "lambda", 0.1, 3.0, 30, mu=1.0),),
    "num3": (
        SweepSpec("mg1", "mu", 1.2, 4.0, 29, lam=1.0),
        SweepSpec("mg11", "mu", 1.2, 4.0, 29, lam=1.0),
    ),
    "num4-draft": (
        SweepSpec("mg11", "alpha", 0.5, 2.5, 5, lam=1.0, mean_service=0.5),
    ),
}


def preset(name: str, **overrides) -> tuple[SweepSpec, ...]:
    """Return the specs of a figure preset, with field overrides applied."""
    if name not in PRESETS:
        raise ConfigError(
            f"Unknown figure id '{name}'. Choose from: {', '.join(PRESETS)}"
        )
    return tuple(replace(spec, **overrides) for spec in PRESETS[name])


def _empty_row(params: ModelParams, source: str, note: str = "") -> dict:
    row = dict.fromkeys(SWEEP_COLUMNS)
    row.update(params.columns())
    row["source"] = source
    row["note"] = note
    return row


def analytic_row(params: ModelParams) -> dict:
    report = params.analytic()
    row = _empty_row(params, "analytic")
    for column, (field_name, _) in _METRIC_FIELDS.items():
        row[column] = getattr(report, field_name)
    return row


def simulated_row(
    params: ModelParams, packets: int, seed: int, batches: int, stream: int = 0
) -> dict:
    summary = simulator.run(
        params.system(),
        n_packets=packets,
        seed=seed,
        batches=batches,
        stream=stream,
    )
    row = _empty_row(params, "sim")
    for column, (_, field_name) in _METRIC_FIELDS.items():
        row[column] = getattr(summary, field_name)
        row[f"stderr_{column}"] = summary.stderr.get(field_name)
    return row


def evaluate_point(spec: SweepSpec, value: float, stream: int) -> list[dict]:
    """Analytic and simulated rows for one grid value.

    An unstable M/GI/1 point yields warning rows instead of values.
    """
    params = spec.point(value)
    try:
        rows = [analytic_row(params)]
    except InstabilityError as e:
        logging.warning("Skipping unstable point %s=%g: %s", spec.vary, value, e)
        rows = [_empty_row(params, "analytic", f"warning: {e}")]
        if spec.simulate:
            rows.append(_empty_row(params, "sim", f"warning: {e}"))
        return rows
    if spec.simulate:
        rows.append(
            simulated_row(params, spec.packets, spec.seed, spec.batches, stream)
        )
    return rows


def run_sweep(specs: Sequence[SweepSpec], jobs: int | None = None) -> list[dict]:
    """Evaluate every grid point of ``specs`` and return rows in grid order.

    Point i of the concatenated grids simulates on stream i, so the rows do
    not depend on ``jobs``.
    """
    tasks = [(spec, value) for spec in specs for value in spec.grid()]
    logging.info("Sweep of %d points with jobs=%s", len(tasks), jobs)
    if jobs == 1 or len(tasks) == 1:
        results = [evaluate_point(s, v, i) for i, (s, v) in enumerate(tasks)]
    else:
        results = {}
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = {
                executor.submit(evaluate_point, s, v, i): i
                for i, (s, v) in enumerate(tasks)
            }
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
        results = [results[i] for i in sorted(results)]
    return [row for rows in results for row in rows]


def _status(kind: str, analytic, simulated, abs_err, rel_err, tols) -> str:
    if analytic is None:
        return "analytic-gap"
    if simulated is None:
        return "not-applicable"
    prob_tol, penalty_rtol = tols
    if kind == "prob":
        return "pass" if abs_err <= prob_tol else "fail"
    if rel_err is None:
        return "pass" if abs_err <= prob_tol else "fail"
    return "pass" if rel_err <= penalty_rtol else "fail"


def build_comparison(
    report: AnalyticReport,
    summary: simulator.MetricsSummary,
    prob_tol: float = DEFAULT_PROB_TOL,
    penalty_rtol: float = DEFAULT_PENALTY_RTOL,
) -> list[dict]:
    """One row per metric with errors and a pass/fail status.

    Missed-penalty rows are "not-applicable" when the analytic missed
    probability is below ``MISSED_FLOOR`` or nothing was dropped, and
    "analytic-gap" when no closed form exists.
    """
    metrics = [
        ("p_correct", "prob", report.p_correct, summary.p_correct, "p_correct"),
        ("p_incorrect", "prob", report.p_incorrect, summary.p_incorrect, "p_incorrect"),
        ("p_missed", "prob", report.p_missed, summary.p_missed, "p_missed"),
        (
            "p_correct_given_decision",
            "prob",
            report.p_correct_given_decision,
            summary.p_correct_given_decision,
            "p_correct_given_decision",
        ),
        ("mean_pucd", "penalty", report.mean_pucd, summary.mean_pucd, "mean_pucd"),
        ("mean_puid", "penalty", report.mean_puid, summary.mean_puid, "mean_puid"),
        ("mean_pumd", "missed", report.mean_pumd, summary.mean_pumd, "mean_pumd"),
        ("total", "penalty", report.total_pud, summary.mean_total, "mean_total"),
    ]
    if report.missed_by_class is not None and summary.missed_by_class is not None:
        for event, value in report.missed_by_class.items():
            metrics.append(
                (
                    f"missed_{event}",
                    "missed",
                    value,
                    summary.missed_by_class.get(event),
                    f"missed_{event}",
                )
            )

    no_misses = report.p_missed < MISSED_FLOOR or summary.missed == 0
    rows = []
    for name, kind, analytic, simulated, stderr_key in metrics:
        abs_err = rel_err = None
        if analytic is not None and simulated is not None:
            abs_err = abs(simulated - analytic)
            rel_err = abs_err / abs(analytic) if analytic != 0 else None
        if kind == "missed" and no_misses:
            status = "not-applicable"
        else:
            status = _status(
                kind, analytic, simulated, abs_err, rel_err, (prob_tol, penalty_rtol)
            )
        if status == "fail":
            logging.warning(
                "Tolerance failure for %s: analytic=%s simulated=%s",
                name,
                analytic,
                simulated,
            )
        rows.append(
            {
                "metric": name,
                "analytic": analytic,
                "simulated": simulated,
                "abs_error": abs_err,
                "rel_error": rel_err,
                "stderr": summary.stderr.get(stderr_key),
                "status": status,
            }
        )
    return rows

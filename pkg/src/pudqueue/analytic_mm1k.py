"""Closed forms for the finite-capacity M/M/1/K queue.

An accepted arrival that finds i packets in the system has an Erlang(i+1, mu)
system time, so decision probabilities and penalties are mixtures over the
stationary distribution seen at arrival, restricted to the accepted states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pudqueue import analytic_mg11
from pudqueue.errors import ConfigError
from pudqueue.reports import AnalyticReport
from pudqueue.service_distributions import Exponential

UNIFORM_SWITCH = 1e-9


@dataclass(frozen=True)
class Mm1kConfig:
    lam: float
    mu: float
    k: int

    def __post_init__(self) -> None:
        for name, value in (("lambda", self.lam), ("mu", self.mu)):
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, got {value}")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"Capacity K must be an integer >= 1, got {self.k}")

    @property
    def rho(self) -> float:
        return self.lam / self.mu


def stationary_distribution(cfg: Mm1kConfig) -> np.ndarray:
    """Return p(0..K), the stationary number in system.

    Weights are built in log space so that large K and rho on either side
    of 1 neither overflow nor cancel.
    """
    k = int(cfg.k)
    if abs(cfg.rho - 1) < UNIFORM_SWITCH:
        return np.full(k + 1, 1.0 / (k + 1))
    logw = np.arange(k + 1) * math.log(cfg.rho)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def missed_probability(cfg: Mm1kConfig) -> float:
    return float(stationary_distribution(cfg)[-1])


def acceptance_weights(cfg: Mm1kConfig) -> np.ndarray:
    """q(i) = p(i) / (1 - p_M) for i = 0..K-1."""
    p = stationary_distribution(cfg)[:-1]
    return p / p.sum()


def _erlang_terms(cfg: Mm1kConfig) -> dict[str, np.ndarray]:
    """Per-state moments of Y_i ~ Erlang(i+1, mu) and its MGF terms at -2 lambda."""
    i = np.arange(int(cfg.k), dtype=float)
    slack = cfg.mu + 2 * cfg.lam
    eta = (cfg.mu / slack) ** (i + 1)
    return {
        "mgf": eta,
        "y1": (i + 1) / cfg.mu,
        "y2": (i + 1) * (i + 2) / cfg.mu**2,
        "d1": (i + 1) * eta / slack,
        "d2": (i + 1) * (i + 2) * eta / slack**2,
    }


def decision_probabilities(cfg: Mm1kConfig) -> tuple[float, float, float, float]:
    """Return (p~_C, p~_I, p_C, p_I).

    The first pair is conditioned on the packet being accepted, the second
    is per generated packet.
    """
    q = acceptance_weights(cfg)
    terms = _erlang_terms(cfg)
    p_c = float(q @ (0.5 + 0.5 * terms["mgf"]))
    p_i = 1.0 - p_c
    served = 1.0 - missed_probability(cfg)
    return p_c, p_i, p_c * served, p_i * served


def mean_penalties(cfg: Mm1kConfig) -> tuple[float, float]:
    q = acceptance_weights(cfg)
    t = _erlang_terms(cfg)
    p_c, p_i, _, _ = decision_probabilities(cfg)
    s_c = float(q @ (0.5 * (t["y1"] + t["d1"]))) / p_c
    s_i = float(q @ (0.5 * (t["y1"] + t["y2"] - t["d1"] - t["d2"]))) / p_i
    return s_c, s_i


def analyze(cfg: Mm1kConfig) -> AnalyticReport:
    """Closed-form report; missed penalties exist only for K = 1."""
    p_tc, p_ti, p_c, p_i = decision_probabilities(cfg)
    s_c, s_i = mean_penalties(cfg)
    mean_pumd = total = by_class = None
    if cfg.k == 1:
        bufferless = analytic_mg11.Mg11Config(cfg.lam, Exponential(cfg.mu))
        mean_pumd = analytic_mg11.mean_pumd(bufferless)
        total = analytic_mg11.total_pud(bufferless)
        by_class = {
            event.value: analytic_mg11.joint_missed_penalty(bufferless, event)
            for event in analytic_mg11.MissEventClass
        }
    return AnalyticReport(
        model="mm1k",
        p_correct=p_c,
        p_incorrect=p_i,
        p_missed=missed_probability(cfg),
        p_correct_given_decision=p_tc,
        p_incorrect_given_decision=p_ti,
        mean_pucd=s_c,
        mean_puid=s_i,
        mean_pumd=mean_pumd,
        total_pud=total,
        missed_by_class=by_class,
    )

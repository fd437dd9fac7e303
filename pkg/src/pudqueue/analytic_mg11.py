"""Closed-form Penalty upon Decision for the bufferless M/GI/1/1 queue.

Packets that find the server busy are dropped. A dropped packet is charged
when the packet in service is delivered: the n-th of m drops during a
service period of length t waits r_n = t - X_n, where X_n is the n-th order
statistic of m uniform arrival offsets on [0, t].
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate, special, stats

from pudqueue.errors import ArgumentError, ConfigError, DomainError
from pudqueue.reports import AnalyticReport
from pudqueue.service_distributions import Deterministic, ServiceDistribution

#  Below this arrival rate the 1/lambda terms of the joint missed penalties
#  cancel catastrophically.
CANCELLATION_LAMBDA = 1e-3

POISSON_TAIL = 1e-12


@dataclass(frozen=True)
class Mg11Config:
    lam: float
    service: ServiceDistribution

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError(f"Arrival rate must be positive, got {self.lam}")


class MissEventClass(str, Enum):
    """Parity class of a drop: m drops in the service period, this is the n-th."""

    I1 = "I1"  # m even, n even
    I2 = "I2"  # m even, n odd
    I3 = "I3"  # m odd, n even
    I4 = "I4"  # m odd, n odd

    @property
    def correct(self) -> bool:
        return self in (MissEventClass.I1, MissEventClass.I4)

    @property
    def m_parity(self) -> int:
        return 0 if self in (MissEventClass.I1, MissEventClass.I2) else 1

    @property
    def n_parity(self) -> int:
        return 0 if self in (MissEventClass.I1, MissEventClass.I3) else 1


def _check_index(n: int, m: int) -> None:
    if not 1 <= n <= m:
        raise ArgumentError(f"Drop index must satisfy 1 <= n <= m, got n={n}, m={m}")


def classify_miss(m: int, n: int) -> MissEventClass:
    _check_index(n, m)
    if m % 2 == 0:
        return MissEventClass.I1 if n % 2 == 0 else MissEventClass.I2
    return MissEventClass.I3 if n % 2 == 0 else MissEventClass.I4


def missed_probability(cfg: Mg11Config) -> float:
    mean = cfg.service.mean
    return mean / (1 / cfg.lam + mean)


def conditional_decision_probabilities(cfg: Mg11Config) -> tuple[float, float]:
    """Correct/incorrect probabilities given that the packet is not dropped."""
    mt = cfg.service.mgf(-2 * cfg.lam)
    return 0.5 + 0.5 * mt, 0.5 - 0.5 * mt


def decision_probabilities(cfg: Mg11Config) -> tuple[float, float]:
    """Correct/incorrect probabilities per generated packet."""
    served = 1 - missed_probability(cfg)
    pc, pi = conditional_decision_probabilities(cfg)
    return pc * served, pi * served


def mean_penalties(cfg: Mg11Config) -> tuple[float, float]:
    pc, pi = conditional_decision_probabilities(cfg)
    dist, gamma = cfg.service, -2 * cfg.lam
    t1, t2 = dist.moment(1), dist.moment(2)
    d1, d2 = dist.mgf_derivative(1, gamma), dist.mgf_derivative(2, gamma)
    return (t1 + d1) / (2 * pc), (t1 + t2 - d1 - d2) / (2 * pi)


def order_stat_pdf(n: int, m: int, t: float, x: float) -> float:
    """Density of the n-th smallest of m uniform arrival offsets on [0, t]."""
    _check_index(n, m)
    if t <= 0:
        raise ArgumentError(f"Service period must be positive, got {t}")
    if not 0 <= x <= t:
        return 0.0
    u = x / t
    return m / t * special.comb(m - 1, n - 1, exact=True) * u ** (n - 1) * (
        1 - u
    ) ** (m - n)


def h_mc(n: int, t: float, m: int) -> float:
    """Expected missed-correct penalty of the n-th drop given T=t, M=m."""
    _check_index(n, m)
    return (n - n**2 / (m + 1)) * t


def h_mi(n: int, t: float, m: int) -> float:
    """Expected missed-incorrect penalty of the n-th drop given T=t, M=m."""
    _check_index(n, m)
    return (n - 2 * n**2 / (m + 1) + n**2 * (n + 1) / ((m + 2) * (m + 1))) * t**2


def joint_missed_penalty(cfg: Mg11Config, event: MissEventClass) -> float:
    """Mean missed penalty jointly with ``event``, per served packet.

    Linear combinations of E[T^n] and M_(T,n)(-2 lambda), n <= 4.
    """
    lam, dist = cfg.lam, cfg.service
    g = -2 * lam
    et = [dist.moment(k) for k in range(5)]
    mt = [dist.mgf_derivative(k, g) for k in range(5)]

    if event is MissEventClass.I1:
        return (
            lam * et[2] / 8
            + lam**2 * et[3] / 24
            - lam * mt[2] / 8
            + lam**2 * mt[3] / 24
        )
    if event is MissEventClass.I4:
        return (
            et[1] / 8
            + lam * et[2] / 8
            + lam**2 * et[3] / 24
            - mt[1] / 8
            + lam * mt[2] / 8
            - lam**2 * mt[3] / 24
        )

    if lam < CANCELLATION_LAMBDA:
        logging.warning(
            "Joint missed penalty %s at lambda=%g loses precision to cancellation",
            event.value,
            lam,
        )
    if event is MissEventClass.I2:
        return (
            -et[1] / (16 * lam)
            + et[2] / 16
            + lam * et[3] / 12
            + lam**2 * et[4] / 48
            + mt[1] / (16 * lam)
            + mt[2] / 16
            - lam * mt[3] / 12
            + lam**2 * mt[4] / 48
        )
    return (
        1 / (16 * lam**2)
        - et[1] / (16 * lam)
        - et[2] / 16
        + lam * et[3] / 12
        + lam**2 * et[4] / 48
        - mt[0] / (16 * lam**2)
        - mt[1] / (16 * lam)
        + mt[2] / 16
        + lam * mt[3] / 12
        - lam**2 * mt[4] / 48
    )


def _conditional_class_penalty(lam: float, t: float, event: MissEventClass) -> float:
    """Sum over (m, n) in ``event`` of H(n | t, m) P(M = m | t).

    The Poisson series stops once its tail mass is below ``POISSON_TAIL``.
    """
    if t <= 0:
        return 0.0
    mean = lam * t
    m_max = max(int(stats.poisson.isf(POISSON_TAIL, mean)) + 2, 2)
    m = np.arange(1, m_max + 1)[:, None]
    n = np.arange(1, m_max + 1)[None, :]
    mask = (n <= m) & (m % 2 == event.m_parity) & (n % 2 == event.n_parity)
    if event.correct:
        h = (n - n**2 / (m + 1)) * t
    else:
        h = (n - 2 * n**2 / (m + 1) + n**2 * (n + 1) / ((m + 2) * (m + 1))) * t**2
    per_m = np.where(mask, h, 0.0).sum(axis=1)
    return float(per_m @ stats.poisson.pmf(m[:, 0], mean))


def joint_missed_penalty_oracle(cfg: Mg11Config, event: MissEventClass) -> float:
    """Independent check of ``joint_missed_penalty``.

    Sums the per-drop conditional penalties over the Poisson count of drops
    and integrates the result against the service density by quadrature.
    """
    dist = cfg.service
    if isinstance(dist, Deterministic):
        return _conditional_class_penalty(cfg.lam, dist.value, event)
    upper = dist.tilted_tail_upper(6, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            lambda t: _conditional_class_penalty(cfg.lam, t, event) * dist.pdf(t),
            0.0,
            upper,
            epsabs=0.0,
            epsrel=1e-10,
            limit=500,
        )
    if abserr > 1e-7 * abs(value):
        raise DomainError(f"Quadrature did not converge: error {abserr:.3g}")
    return value


def parity_sum_x(a: float) -> float:
    """Sum over x >= 0 of x a^(2x) / (2x)!, by series; equals (a/2) sinh(a)."""
    x = np.arange(0, _series_terms(a))
    return float(np.sum(x * np.exp(2 * x * math.log(a) - special.gammaln(2 * x + 1))))


def parity_sum_x2(a: float) -> float:
    """Sum over x >= 0 of x^2 a^(2x) / (2x)!; equals a^2 cosh(a)/4 + a sinh(a)/4."""
    x = np.arange(0, _series_terms(a))
    return float(
        np.sum(x**2 * np.exp(2 * x * math.log(a) - special.gammaln(2 * x + 1)))
    )


def _series_terms(a: float) -> int:
    return int(stats.poisson.isf(POISSON_TAIL, a)) // 2 + 20


def mean_pumd(cfg: Mg11Config) -> float:
    p_m = missed_probability(cfg)
    if p_m <= 0:
        raise DomainError("Mean missed penalty is undefined when nothing is dropped")
    joint = sum(joint_missed_penalty(cfg, event) for event in MissEventClass)
    return joint * (1 - p_m) / p_m


def total_pud(cfg: Mg11Config) -> float:
    """Mean penalty per generated packet, missed packets included."""
    p_m = missed_probability(cfg)
    pc, pi = conditional_decision_probabilities(cfg)
    s_c, s_i = mean_penalties(cfg)
    return pc * (1 - p_m) * s_c + pi * (1 - p_m) * s_i + p_m * mean_pumd(cfg)


def analyze(cfg: Mg11Config) -> AnalyticReport:
    p_m = missed_probability(cfg)
    pc, pi = conditional_decision_probabilities(cfg)
    s_c, s_i = mean_penalties(cfg)
    return AnalyticReport(
        model="mg11",
        p_correct=pc * (1 - p_m),
        p_incorrect=pi * (1 - p_m),
        p_missed=p_m,
        p_correct_given_decision=pc,
        p_incorrect_given_decision=pi,
        mean_pucd=s_c,
        mean_puid=s_i,
        mean_pumd=mean_pumd(cfg),
        total_pud=total_pud(cfg),
        missed_by_class={
            event.value: joint_missed_penalty(cfg, event) for event in MissEventClass
        },
    )

"""Closed-form Penalty upon Decision for the infinite-buffer M/GI/1 queue.

A packet's decision is correct when an even number of packets arrive during
its system time Y = W + T, so everything follows from the system-time MGF
evaluated at -2*lambda and its first two derivatives there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from pudqueue.errors import ArgumentError, ConfigError, DomainError, InstabilityError
from pudqueue.reports import AnalyticReport
from pudqueue.service_distributions import ServiceDistribution

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class Mg1Config:
    lam: float
    service: ServiceDistribution

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError(f"Arrival rate must be positive, got {self.lam}")
        if self.rho > 1 - STABILITY_MARGIN:
            raise InstabilityError(
                f"Unstable M/GI/1 queue: rho = {self.rho:.6g} >= 1 "
                f"(lambda={self.lam:g}, {self.service.spec()})"
            )

    @property
    def rho(self) -> float:
        return self.lam * self.service.mean


def _check_gamma(gamma: float) -> None:
    if not gamma < 0:
        raise DomainError(
            f"System-time transform is evaluated at gamma < 0 only, got {gamma}"
        )


def _transform_parts(cfg: Mg1Config, gamma: float) -> tuple[list[float], list[float]]:
    """Service MGF and waiting-time MGF, each with its first two derivatives.

    M_Y(g) = M_T(g) M_W(g) with M_W(g) = (1 - rho) / (1 - lambda R(g)) and
    R(g) = (M_T(g) - 1) / g taken from the service law's increment, so no
    difference of nearly equal terms appears as lambda goes to 0.
    """
    lam, slack = cfg.lam, 1 - cfg.rho
    m0, m1, m2 = (cfg.service.mgf_derivative(k, gamma) for k in range(3))
    r0, r1, r2 = (cfg.service.increment_derivative(k, gamma) for k in range(3))
    u = 1 - lam * r0
    waiting = [
        slack / u,
        slack * lam * r1 / u**2,
        slack * lam * (r2 / u**2 + 2 * lam * r1**2 / u**3),
    ]
    return [m0, m1, m2], waiting


def system_time_mgf(cfg: Mg1Config, gamma: float) -> float:
    """Return M_Y(gamma) from the Pollaczek-Khinchine transform.

    The service MGF enters as M_T(gamma); see DESIGN.md for the sign choice.
    """
    _check_gamma(gamma)
    service, waiting = _transform_parts(cfg, gamma)
    return service[0] * waiting[0]


def system_time_mgf_derivative(cfg: Mg1Config, n: int, gamma: float) -> float:
    """Return M_(Y,n)(gamma) = E[Y^n exp(gamma Y)] for n in 1..2.

    Args:
        cfg (Mg1Config): The queue.
        n (int): Derivative order, 1 or 2.
        gamma (float): Evaluation point, strictly negative.

    Returns:
        float: The n-th derivative of the system-time MGF.
    """
    if n not in (1, 2):
        raise ArgumentError(f"Derivative order must be 1 or 2, got {n}")
    _check_gamma(gamma)
    (m0, m1, m2), (g0, g1, g2) = _transform_parts(cfg, gamma)
    if n == 1:
        return m1 * g0 + m0 * g1
    return m2 * g0 + 2 * m1 * g1 + m0 * g2


def waiting_time_moment(cfg: Mg1Config, n: int) -> float:
    """E[W^n] for n in 1..2 from the Pollaczek-Khinchine moment recursion."""
    if n not in (1, 2):
        raise ArgumentError(f"Moment order must be 1 or 2, got {n}")
    t2, t3 = cfg.service.moment(2), cfg.service.moment(3)
    slack = 1 - cfg.rho
    w1 = cfg.lam * t2 / (2 * slack)
    if n == 1:
        return w1
    return 2 * w1**2 + cfg.lam * t3 / (3 * slack)


def system_time_moment(cfg: Mg1Config, n: int) -> float:
    if n not in (1, 2):
        raise ArgumentError(f"Moment order must be 1 or 2, got {n}")
    w1 = waiting_time_moment(cfg, 1)
    t1 = cfg.service.mean
    if n == 1:
        return w1 + t1
    return waiting_time_moment(cfg, 2) + 2 * w1 * t1 + cfg.service.moment(2)


def decision_probabilities(cfg: Mg1Config) -> tuple[float, float]:
    my = system_time_mgf(cfg, -2 * cfg.lam)
    return 0.5 + 0.5 * my, 0.5 - 0.5 * my


def mean_penalties(cfg: Mg1Config) -> tuple[float, float]:
    """Average PuCD and PuID under the default penalty policy."""
    p_c, p_i = decision_probabilities(cfg)
    gamma = -2 * cfg.lam
    y1, y2 = system_time_moment(cfg, 1), system_time_moment(cfg, 2)
    d1 = system_time_mgf_derivative(cfg, 1, gamma)
    d2 = system_time_mgf_derivative(cfg, 2, gamma)
    return (y1 + d1) / (2 * p_c), (y1 + y2 - d1 - d2) / (2 * p_i)


def total_pud(cfg: Mg1Config) -> float:
    y1, y2 = system_time_moment(cfg, 1), system_time_moment(cfg, 2)
    d2 = system_time_mgf_derivative(cfg, 2, -2 * cfg.lam)
    return 0.5 * (2 * y1 + y2 - d2)


def analyze(cfg: Mg1Config) -> AnalyticReport:
    p_c, p_i = decision_probabilities(cfg)
    s_c, s_i = mean_penalties(cfg)
    return AnalyticReport(
        model="mg1",
        p_correct=p_c,
        p_incorrect=p_i,
        p_missed=0.0,
        p_correct_given_decision=p_c,
        p_incorrect_given_decision=p_i,
        mean_pucd=s_c,
        mean_puid=s_i,
        mean_pumd=0.0,
        total_pud=total_pud(cfg),
    )

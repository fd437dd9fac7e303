"""Service-time laws with exact moments, MGF and MGF derivatives.

Every closed form in the analytic modules consumes one of:

- ``moment(n)``            = E[T^n]
- ``mgf(gamma)``           = E[exp(gamma T)]
- ``mgf_derivative(n, g)`` = E[T^n exp(g T)], the n-th derivative of the MGF.

Only laws whose MGF derivatives have exact closed forms are built in. A new
law subclasses ``ServiceDistribution`` and implements the abstract methods;
``mgf_derivative_oracle`` works for any law that provides ``pdf`` and
``tilted_tail_upper``.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from pudqueue.errors import ArgumentError, ConfigError, DomainError

#  Integrand tail left beyond the quadrature upper limit, relative to mass.
ORACLE_TAIL = 1e-14

#  Gauss-Legendre nodes for the MGF increment and its derivatives.
INCREMENT_NODES = 64

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(INCREMENT_NODES)


@dataclass(frozen=True)
class ServiceDistribution(ABC):
    @property
    @abstractmethod
    def mgf_bound(self) -> float:
        """Supremum of the MGF domain (gamma must be strictly below it)."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw service times from ``rng``; a float when ``size`` is None."""

    @abstractmethod
    def moment(self, n: int) -> float: ...

    @abstractmethod
    def _mgf_derivative(self, n: int, gamma: float) -> float: ...

    @abstractmethod
    def spec(self) -> str:
        """Textual form accepted by ``parse_service_spec``."""

    @abstractmethod
    def params(self) -> dict[str, float]: ...

    @property
    def mean(self) -> float:
        return self.moment(1)

    def check_domain(self, gamma: float) -> None:
        if not gamma < self.mgf_bound:
            raise DomainError(
                f"MGF of {self.spec()} diverges at gamma={gamma} "
                f"(domain is gamma < {self.mgf_bound})"
            )

    def mgf(self, gamma: float) -> float:
        if gamma == 0:
            return 1.0
        return self.mgf_derivative(0, gamma)

    def mgf_derivative(self, n: int, gamma: float) -> float:
        """Return E[T^n exp(gamma T)].

        Args:
            n (int): Derivative order, 0 gives the MGF itself.
            gamma (float): Evaluation point, inside the MGF domain.

        Returns:
            float: The n-th derivative of the MGF at gamma.
        """
        _check_order(n)
        self.check_domain(gamma)
        if gamma == 0 and n > 0:
            return self.moment(n)
        return self._mgf_derivative(n, gamma)

    def mgf_derivative_oracle(self, n: int, gamma: float) -> float:
        """Compute E[T^n exp(gamma T)] by adaptive quadrature against the density.

        Independent of the closed forms, used to validate them.
        """
        _check_order(n)
        self.check_domain(gamma)
        upper = self.tilted_tail_upper(n, gamma)

        def integrand(t: float) -> float:
            return t**n * math.exp(gamma * t) * self.pdf(t)

        # QUADPACK warns about roundoff near the requested tolerance even when
        # the result is usable; the error estimate decides.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            value, abserr = integrate.quad(
                integrand, 0.0, upper, epsabs=0.0, epsrel=1e-12, limit=500
            )
        if not math.isfinite(value) or abserr > 1e-9 * abs(value):
            raise DomainError(
                f"Quadrature did not converge: error {abserr:.3g} "
                f"for value {value:.6g}"
            )
        return value

    def increment_derivative(self, n: int, gamma: float) -> float:
        """n-th derivative of R(gamma) = (M_T(gamma) - 1) / gamma, for gamma <= 0.

        R(gamma) is the integral over s in [0, 1] of M_T'(s gamma), so the n-th
        derivative is the integral of s^n M_(T,n+1)(s gamma). Evaluated by
        Gauss-Legendre quadrature, it never subtracts nearly equal numbers.
        """
        _check_order(n)
        if gamma > 0:
            raise DomainError(f"MGF increment is evaluated at gamma <= 0, got {gamma}")
        return self._increment_derivative(n, gamma)

    def _increment_derivative(self, n: int, gamma: float) -> float:
        s = (_NODES + 1) / 2
        tilted = np.array([self.mgf_derivative(n + 1, si * gamma) for si in s])
        return float(0.5 * np.sum(_WEIGHTS * s**n * tilted))

    def pdf(self, t: float) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no density")

    def tilted_tail_upper(self, n: int, gamma: float) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no density")


def _check_order(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ArgumentError(f"Derivative order must be a nonnegative integer: {n}")


def _positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class Gamma(ServiceDistribution):
    shape: float
    rate: float

    def __post_init__(self) -> None:
        _positive("shape", self.shape)
        _positive("rate", self.rate)

    @property
    def mgf_bound(self) -> float:
        return self.rate

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def moment(self, n: int) -> float:
        _check_order(n)
        return float(special.poch(self.shape, n)) / self.rate**n

    def _mgf_derivative(self, n: int, gamma: float) -> float:
        slack = self.rate - gamma
        return (
            (self.rate / slack) ** self.shape
            * float(special.poch(self.shape, n))
            / slack**n
        )

    def pdf(self, t: float) -> float:
        if t <= 0:
            return 0.0
        return math.exp(
            (self.shape - 1) * math.log(t)
            - self.rate * t
            + self.shape * math.log(self.rate)
            - math.lgamma(self.shape)
        )

    def tilted_tail_upper(self, n: int, gamma: float) -> float:
        # t^n e^{gamma t} f(t) is a Gamma(shape + n, rate - gamma) kernel.
        return float(
            stats.gamma.isf(
                ORACLE_TAIL, self.shape + n, scale=1.0 / (self.rate - gamma)
            )
        )

    def spec(self) -> str:
        return f"gamma:alpha={self.shape:.12g},rate={self.rate:.12g}"

    def params(self) -> dict[str, float]:
        return {"alpha": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    rate: float

    def __post_init__(self) -> None:
        _positive("mu", self.rate)

    @property
    def mgf_bound(self) -> float:
        return self.rate

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return rng.exponential(1.0 / self.rate, size)

    def moment(self, n: int) -> float:
        _check_order(n)
        return math.factorial(n) / self.rate**n

    def _mgf_derivative(self, n: int, gamma: float) -> float:
        return math.factorial(n) * self.rate / (self.rate - gamma) ** (n + 1)

    def _increment_derivative(self, n: int, gamma: float) -> float:
        return math.factorial(n) / (self.rate - gamma) ** (n + 1)

    def pdf(self, t: float) -> float:
        return self.rate * math.exp(-self.rate * t)

    def tilted_tail_upper(self, n: int, gamma: float) -> float:
        slack = self.rate - gamma
        return float(stats.gamma.isf(ORACLE_TAIL, 1 + n, scale=1.0 / slack))

    def spec(self) -> str:
        return f"exp:mu={self.rate:.12g}"

    def params(self) -> dict[str, float]:
        return {"mu": self.rate}


@dataclass(frozen=True)
class Deterministic(ServiceDistribution):
    value: float

    def __post_init__(self) -> None:
        _positive("d", self.value)

    @property
    def mgf_bound(self) -> float:
        return math.inf

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def moment(self, n: int) -> float:
        _check_order(n)
        return self.value**n

    def _mgf_derivative(self, n: int, gamma: float) -> float:
        return self.value**n * math.exp(gamma * self.value)

    def mgf_derivative_oracle(self, n: int, gamma: float) -> float:
        # Point mass: the expectation is a single evaluation.
        _check_order(n)
        return self.value**n * math.exp(gamma * self.value)

    def spec(self) -> str:
        return f"det:d={self.value:.12g}"

    def params(self) -> dict[str, float]:
        return {"d": self.value}


_SPEC_KEYS = {
    "exp": ({"mu"}, lambda p: Exponential(p["mu"])),
    "gamma": ({"alpha", "rate"}, lambda p: Gamma(p["alpha"], p["rate"])),
    "det": ({"d"}, lambda p: Deterministic(p["d"])),
}


def parse_service_spec(text: str) -> ServiceDistribution:
    """Parse ``exp:mu=<f>``, ``gamma:alpha=<f>,rate=<f>`` or ``det:d=<f>``.

    Args:
        text (str): The distribution spec.

    Returns:
        ServiceDistribution: The parsed law.
    """
    name, sep, rest = text.strip().partition(":")
    if not sep or name not in _SPEC_KEYS:
        raise ArgumentError(f"Malformed service spec: '{text}'")
    params = {}
    for item in rest.split(","):
        key, eq, value = item.strip().partition("=")
        if not eq:
            raise ArgumentError(f"Malformed service spec: '{text}'")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise ArgumentError(f"Not a number in service spec: '{value}'") from None
    keys, build = _SPEC_KEYS[name]
    if set(params) != keys:
        expected = ", ".join(sorted(keys))
        raise ArgumentError(f"Service '{name}' takes parameters: {expected}")
    return build(params)

import logging
import math

import numpy as np
import pytest
from scipy import integrate

from pudqueue import analytic_mg1
from pudqueue.analytic_mg11 import (
    Mg11Config,
    MissEventClass,
    analyze,
    classify_miss,
    conditional_decision_probabilities,
    decision_probabilities,
    h_mc,
    h_mi,
    joint_missed_penalty,
    joint_missed_penalty_oracle,
    mean_penalties,
    mean_pumd,
    missed_probability,
    order_stat_pdf,
    parity_sum_x,
    parity_sum_x2,
    total_pud,
)
from pudqueue.errors import ArgumentError, ConfigError
from pudqueue.service_distributions import Deterministic, Exponential, Gamma

MM11 = Mg11Config(1.0, Exponential(1.0))


def test_missed_probability():
    assert missed_probability(MM11) == pytest.approx(0.5)
    assert missed_probability(Mg11Config(1.0, Deterministic(1.0))) == pytest.approx(0.5)
    assert missed_probability(Mg11Config(1e-9, Exponential(1.0))) < 1e-8


def test_conditional_decision_probabilities():
    p_c, p_i = conditional_decision_probabilities(MM11)
    assert p_c == pytest.approx(2 / 3)
    assert p_c + p_i == 1.0
    p_c, _ = conditional_decision_probabilities(Mg11Config(1e-6, Exponential(1.0)))
    assert p_c == pytest.approx(1.0, abs=1e-5)


def test_unconditional_decision_probabilities():
    p_c, p_i = decision_probabilities(MM11)
    assert p_c == pytest.approx(1 / 3)
    assert p_c + p_i + missed_probability(MM11) == pytest.approx(1.0, abs=1e-12)


def test_mean_penalties():
    s_c, s_i = mean_penalties(MM11)
    assert s_c == pytest.approx(5 / 6)
    assert s_i == pytest.approx(38 / 9)
    s_c, _ = mean_penalties(Mg11Config(1e-7, Gamma(2.0, 4.0)))
    assert s_c == pytest.approx(0.5, rel=1e-5)


def test_order_stat_pdf_examples():
    assert order_stat_pdf(1, 1, 1.0, 0.3) == pytest.approx(1.0)
    assert order_stat_pdf(2, 3, 1.0, 0.5) == pytest.approx(1.5)
    assert order_stat_pdf(1, 3, 2.0, 0.4) == pytest.approx(
        order_stat_pdf(3, 3, 2.0, 1.6)
    )
    assert order_stat_pdf(2, 3, 1.0, 1.5) == 0.0
    with pytest.raises(ArgumentError):
        order_stat_pdf(4, 3, 1.0, 0.5)


def test_order_stat_pdf_matches_sorted_uniforms():
    rng = np.random.default_rng(5)
    second = np.sort(rng.random((1_000_000, 3)), axis=1)[:, 1]
    hist, edges = np.histogram(second, bins=10, range=(0.0, 1.0), density=True)
    mids = (edges[:-1] + edges[1:]) / 2
    expected = [order_stat_pdf(2, 3, 1.0, x) for x in mids]
    # Bin averages of 6x(1-x) differ from the midpoint value by 0.005 at most.
    assert np.allclose(hist, expected, atol=0.03)


def test_order_stat_pdf_normalized():
    for m in range(1, 11):
        for n in range(1, m + 1):
            area, _ = integrate.quad(
                lambda x, n=n, m=m: order_stat_pdf(n, m, 2.0, x), 0.0, 2.0
            )
            assert area == pytest.approx(1.0, abs=1e-9)


def test_h_function_examples():
    assert h_mc(1, 2.0, 1) == pytest.approx(1.0)
    assert h_mi(1, 1.0, 1) == pytest.approx(1 / 3)
    for m in range(1, 21):
        for n in range(1, m + 1):
            assert h_mc(n, 1.0, m) >= 0
    with pytest.raises(ArgumentError):
        h_mc(0, 1.0, 1)


@pytest.mark.parametrize("t", [0.5, 1.0, 3.0])
def test_h_functions_match_integrals(t):
    for m in range(1, 11):
        for n in range(1, m + 1):
            mc, _ = integrate.quad(
                lambda x, n=n, m=m: n * (t - x) * order_stat_pdf(n, m, t, x),
                0.0,
                t,
                epsabs=0.0,
                epsrel=1e-12,
            )
            mi, _ = integrate.quad(
                lambda x, n=n, m=m: n * (t - x) ** 2 * order_stat_pdf(n, m, t, x),
                0.0,
                t,
                epsabs=0.0,
                epsrel=1e-12,
            )
            assert h_mc(n, t, m) == pytest.approx(mc, rel=1e-8)
            assert h_mi(n, t, m) == pytest.approx(mi, rel=1e-8)


def test_h_mc_matches_monte_carlo():
    rng = np.random.default_rng(11)
    m, t = 5, 1.0
    x = np.sort(rng.random((200_000, m)) * t, axis=1)
    for n in range(1, m + 1):
        estimate = np.mean(n * (t - x[:, n - 1]))
        assert estimate == pytest.approx(h_mc(n, t, m), rel=0.01)


def test_classify_miss_examples():
    assert classify_miss(2, 2) is MissEventClass.I1
    assert classify_miss(3, 2) is MissEventClass.I3
    assert classify_miss(5, 5) is MissEventClass.I4
    assert classify_miss(2, 1) is MissEventClass.I2
    assert MissEventClass.I1.correct
    assert not MissEventClass.I3.correct
    with pytest.raises(ArgumentError):
        classify_miss(2, 3)


def test_classify_miss_parity():
    for m in range(1, 65):
        for n in range(1, m + 1):
            event = classify_miss(m, n)
            assert event.correct == ((m - n) % 2 == 0)
            assert event.m_parity == m % 2
            assert event.n_parity == n % 2


def test_joint_missed_penalty_i1():
    assert joint_missed_penalty(MM11, MissEventClass.I1) == pytest.approx(
        0.5 - 1 / 162, rel=1e-12
    )
    assert joint_missed_penalty(MM11, MissEventClass.I4) == pytest.approx(
        50 / 81, rel=1e-12
    )


@pytest.mark.parametrize(
    "cfg",
    [
        MM11,
        Mg11Config(0.5, Gamma(2.0, 4.0)),
        Mg11Config(2.0, Gamma(1.5, 3.0)),
        Mg11Config(1.0, Deterministic(1.0)),
    ],
)
@pytest.mark.parametrize("event", list(MissEventClass))
def test_joint_missed_penalty_matches_series(cfg, event):
    exact = joint_missed_penalty(cfg, event)
    oracle = joint_missed_penalty_oracle(cfg, event)
    assert exact == pytest.approx(oracle, rel=1e-6)


def test_joint_missed_penalty_small_lambda(caplog):
    cfg = Mg11Config(1e-4, Exponential(1.0))
    with caplog.at_level(logging.WARNING):
        values = [joint_missed_penalty(cfg, event) for event in MissEventClass]
    assert all(abs(v) < 1e-3 for v in values)
    assert "cancellation" in caplog.text


def test_mean_pumd_mm11():
    assert mean_pumd(MM11) == pytest.approx(82 / 27, rel=1e-6)


def test_mean_pumd_heavy_load():
    value = mean_pumd(Mg11Config(50.0, Exponential(1.0)))
    assert math.isfinite(value)
    assert value > 0


def test_deterministic_scaling_of_i1():
    # With lambda * d fixed, the I1 term is linear in d.
    base = joint_missed_penalty(Mg11Config(0.8, Deterministic(1.0)), MissEventClass.I1)
    scaled = joint_missed_penalty(
        Mg11Config(0.4, Deterministic(2.0)), MissEventClass.I1
    )
    assert scaled == pytest.approx(2 * base, rel=1e-12)


@pytest.mark.parametrize("a", [0.5, 2.0, 5.0])
def test_parity_sums(a):
    assert parity_sum_x(a) == pytest.approx(a / 2 * math.sinh(a), rel=1e-12)
    assert parity_sum_x2(a) == pytest.approx(
        a**2 * math.cosh(a) / 4 + a * math.sinh(a) / 4, rel=1e-12
    )


def test_total_pud():
    p_c, p_i = decision_probabilities(MM11)
    s_c, s_i = mean_penalties(MM11)
    p_m = missed_probability(MM11)
    assert total_pud(MM11) == pytest.approx(
        p_c * s_c + p_i * s_i + p_m * mean_pumd(MM11), rel=1e-12
    )
    assert total_pud(Mg11Config(1e-6, Exponential(1.0))) == pytest.approx(
        1.0, rel=1e-3
    )


@pytest.mark.parametrize("mu", [1.2, 1.6, 2.0, 2.5, 3.0, 4.0])
def test_buffered_total_exceeds_bufferless(mu):
    mg1 = analytic_mg1.total_pud(analytic_mg1.Mg1Config(1.0, Exponential(mu)))
    mg11 = total_pud(Mg11Config(1.0, Exponential(mu)))
    assert mg1 > mg11


def test_total_gap_shrinks_with_service_rate():
    gaps = [
        analytic_mg1.total_pud(analytic_mg1.Mg1Config(1.0, Exponential(mu)))
        - total_pud(Mg11Config(1.0, Exponential(mu)))
        for mu in (1.2, 1.6, 2.0, 2.5, 3.0, 4.0)
    ]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_analyze_report():
    report = analyze(MM11)
    assert report.model == "mg11"
    assert report.p_missed == pytest.approx(0.5)
    assert report.p_correct_given_decision == pytest.approx(2 / 3)
    assert set(report.missed_by_class) == {"I1", "I2", "I3", "I4"}
    assert sum(report.missed_by_class.values()) == pytest.approx(82 / 27, rel=1e-6)
    assert report.p_correct + report.p_incorrect + report.p_missed == pytest.approx(
        1.0, abs=1e-12
    )


def test_invalid_config():
    with pytest.raises(ConfigError):
        Mg11Config(-1.0, Exponential(1.0))

import numpy as np
import pytest

from pudqueue import analytic_mg1, analytic_mg11
from pudqueue.analytic_mm1k import (
    Mm1kConfig,
    acceptance_weights,
    analyze,
    decision_probabilities,
    mean_penalties,
    missed_probability,
    stationary_distribution,
)
from pudqueue.errors import ConfigError
from pudqueue.service_distributions import Exponential


def test_uniform_at_unit_load():
    p = stationary_distribution(Mm1kConfig(1.0, 1.0, 3))
    assert np.allclose(p, [0.25, 0.25, 0.25, 0.25])


def test_stationary_distribution_k2():
    cfg = Mm1kConfig(0.5, 1.0, 2)
    p = stationary_distribution(cfg)
    assert p == pytest.approx([4 / 7, 2 / 7, 1 / 7])
    assert missed_probability(cfg) == pytest.approx(1 / 7)


@pytest.mark.parametrize("lam,mu,k", [(0.5, 1.0, 2), (1.5, 1.0, 4), (3.0, 0.7, 6)])
def test_balance_equations(lam, mu, k):
    p = stationary_distribution(Mm1kConfig(lam, mu, k))
    for i in range(k):
        assert lam * p[i] == pytest.approx(mu * p[i + 1], rel=1e-12)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("rho", [1 - 1e-8, 1 + 1e-8, 1 - 1e-10, 50.0, 0.01])
def test_normalized_near_and_far_from_unit_load(rho):
    p = stationary_distribution(Mm1kConfig(rho, 1.0, 40))
    assert np.all(np.isfinite(p))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_k1_missed_probability():
    assert missed_probability(Mm1kConfig(1.0, 1.0, 1)) == pytest.approx(0.5)
    assert missed_probability(Mm1kConfig(0.3, 1.0, 1)) == pytest.approx(0.3 / 1.3)
    assert missed_probability(Mm1kConfig(1e-9, 1.0, 3)) < 1e-20


def test_acceptance_weights():
    q = acceptance_weights(Mm1kConfig(0.5, 1.0, 2))
    assert q == pytest.approx([2 / 3, 1 / 3])
    q = acceptance_weights(Mm1kConfig(2.0, 1.0, 7))
    assert np.all((q >= 0) & (q <= 1))
    assert q.sum() == pytest.approx(1.0, abs=1e-12)


def test_decision_probabilities_k2():
    p_tc, p_ti, p_c, p_i = decision_probabilities(Mm1kConfig(0.5, 1.0, 2))
    assert p_tc == pytest.approx(17 / 24)
    assert p_tc + p_ti == pytest.approx(1.0, abs=1e-15)
    assert p_c == pytest.approx(17 / 24 * 6 / 7)
    assert p_c + p_i + 1 / 7 == pytest.approx(1.0, abs=1e-12)


def test_light_load_limits():
    cfg = Mm1kConfig(1e-7, 2.0, 3)
    p_tc, _, _, _ = decision_probabilities(cfg)
    assert p_tc == pytest.approx(1.0, abs=1e-6)
    s_c, _ = mean_penalties(cfg)
    assert s_c == pytest.approx(0.5, rel=1e-5)


@pytest.mark.parametrize("lam", [0.2, 1.0, 2.5])
def test_k1_matches_bufferless(lam):
    small = Mm1kConfig(lam, 1.5, 1)
    bufferless = analytic_mg11.Mg11Config(lam, Exponential(1.5))
    p_tc, p_ti, p_c, p_i = decision_probabilities(small)
    tc, ti = analytic_mg11.conditional_decision_probabilities(bufferless)
    c, i = analytic_mg11.decision_probabilities(bufferless)
    assert p_tc == pytest.approx(tc, rel=1e-12)
    assert p_ti == pytest.approx(ti, rel=1e-12)
    assert p_c == pytest.approx(c, rel=1e-12)
    assert p_i == pytest.approx(i, rel=1e-12)
    assert missed_probability(small) == pytest.approx(
        analytic_mg11.missed_probability(bufferless), rel=1e-12
    )
    assert mean_penalties(small) == pytest.approx(
        analytic_mg11.mean_penalties(bufferless), rel=1e-12
    )
    report = analyze(small)
    assert report.mean_pumd == pytest.approx(
        analytic_mg11.mean_pumd(bufferless), rel=1e-12
    )
    assert report.total_pud == pytest.approx(
        analytic_mg11.total_pud(bufferless), rel=1e-12
    )


def test_large_capacity_converges_to_infinite_buffer():
    cfg = Mm1kConfig(0.5, 1.0, 200)
    mg1 = analytic_mg1.Mg1Config(0.5, Exponential(1.0))
    _, _, p_c, p_i = decision_probabilities(cfg)
    ref_c, ref_i = analytic_mg1.decision_probabilities(mg1)
    assert p_c == pytest.approx(ref_c, abs=1e-6)
    assert p_i == pytest.approx(ref_i, abs=1e-6)
    s_c, s_i = mean_penalties(cfg)
    ref_sc, ref_si = analytic_mg1.mean_penalties(mg1)
    assert s_c == pytest.approx(ref_sc, rel=1e-6)
    assert s_i == pytest.approx(ref_si, rel=1e-6)


def test_analyze_has_no_missed_penalty_for_buffers():
    report = analyze(Mm1kConfig(1.0, 1.0, 3))
    assert report.model == "mm1k"
    assert report.p_missed == pytest.approx(0.25)
    assert report.mean_pumd is None
    assert report.total_pud is None
    assert report.missed_by_class is None
    assert report.to_dict()["mean_pumd"] is None


def test_invalid_config():
    with pytest.raises(ConfigError):
        Mm1kConfig(1.0, 1.0, 0)
    with pytest.raises(ConfigError):
        Mm1kConfig(1.0, 0.0, 2)
    with pytest.raises(ConfigError):
        Mm1kConfig(-1.0, 1.0, 2)

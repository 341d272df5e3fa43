import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.stats import entropy

from qkdnet.errors import DomainError, EstimateError
from qkdnet.keyrate import (IMPROVEMENT_FACTORS, ImprovementScenario, KeyRateReport,
                            QberEstimate, RateEstimate, analyze, binary_entropy, pooled_qber,
                            project_scenario, qber, report_from_summary, secure_rate,
                            sifted_rate, stability_series)
from qkdnet.states import Outcome, joint_distribution, make_colored_noise_state
from qkdnet.timetag import AnalyzerMap, CoincidenceTable, TagStream

H, V, D, A = Outcome.H, Outcome.V, Outcome.D, Outcome.A

# reference columns: sifted, its 3-sigma bar, e_H, 3-sigma, e_D, 3-sigma, secure
TABLE = [
    (32.5, 0.7, 0.0235, 0.0051, 0.0215, 0.0048, 20.5),
    (29.4, 0.7, 0.0168, 0.0045, 0.0223, 0.0051, 19.7),
    (16.3, 0.5, 0.0472, 0.010, 0.0722, 0.012, 4.0),
]


def h_oracle(x):
    return float(entropy([x, 1 - x], base=2))


def table(**cells):
    c = np.zeros((4, 4), int)
    for k, v in cells.items():
        c[Outcome[k[0]], Outcome[k[1]]] = v
    return CoincidenceTable(c)


def test_qber_example():
    q = qber(table(HH=5, VV=5, HV=190, VH=200, DD=100, AA=100))
    assert q.e_h == pytest.approx(0.025)
    assert q.n_h == 400
    assert q.sigma_h == pytest.approx(math.sqrt(0.025 * 0.975 / 400))
    assert q.e_d == 0 and q.sigma_d == 0


def test_qber_empty_basis():
    with pytest.raises(EstimateError):
        qber(table(DD=3))
    with pytest.raises(EstimateError):
        qber(table(HV=3))


def test_qber_three_sigma_example():
    n = 8125
    assert 3 * math.sqrt(0.0235 * 0.9765 / n) == pytest.approx(0.0050, abs=2e-4)


def test_sifted_rate_examples():
    r = sifted_rate(table(HV=4000, VH=4125, DD=4000, AA=4125, HH=99, DA=7), 500)
    assert r.value == pytest.approx(32.5)
    assert r.sigma3 == pytest.approx(3 * math.sqrt(16250) / 500)
    assert r.sigma3 == pytest.approx(0.76, abs=0.01)
    assert sifted_rate(table(), 10).value == 0
    c = table(HV=100, DD=100)
    assert sifted_rate(c, 20).value == pytest.approx(sifted_rate(c, 10).value / 2)
    with pytest.raises(DomainError):
        sifted_rate(c, 0)


def test_binary_entropy():
    assert binary_entropy(0.5) == 1
    assert binary_entropy(0) == binary_entropy(1) == 0
    assert binary_entropy(0.0235) == pytest.approx(0.1607, abs=1e-4)
    assert binary_entropy(0.0235) == pytest.approx(h_oracle(0.0235), abs=1e-14)
    with pytest.raises(DomainError):
        binary_entropy(1.5)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_binary_entropy_concave_symmetric(x, y, t):
    assert binary_entropy(x) == pytest.approx(binary_entropy(1 - x), abs=1e-12)
    mid = binary_entropy(t * x + (1 - t) * y)
    assert mid >= t * binary_entropy(x) + (1 - t) * binary_entropy(y) - 1e-12


@pytest.mark.parametrize("row", TABLE)
def test_secure_rate_table_columns(row):
    s, sb, eh, ehb, ed, edb, expected = row
    rep = report_from_summary(s, eh, ehb, ed, edb, sb)
    direct = s * (1 - 0.5 * (h_oracle(eh + ehb) + h_oracle(ed + edb))
                  - 0.5 * 1.2 * (h_oracle(eh) + h_oracle(ed)))
    assert rep.secure.value == pytest.approx(direct, abs=1e-9)
    assert rep.secure.value == pytest.approx(expected, abs=0.3)


def test_secure_equals_sifted_without_errors():
    q = QberEstimate(0, 0, 0, 0, 100, 100)
    r = secure_rate(RateEstimate(12.5, 0.3), q)
    assert r.value == 12.5
    assert r.sigma3 == pytest.approx(0.3)


def test_secure_rate_threshold():
    r = secure_rate(30.0, QberEstimate(0.5, 0.01, 0.01, 0.01, 100, 100))
    assert r.value == 0 and r.below_threshold
    r = secure_rate(30.0, QberEstimate(0.2, 0.2, 0.01, 0.01, 100, 100))
    assert r.value == 0 and r.below_threshold and r.raw < 0
    with pytest.raises(DomainError):
        secure_rate(30.0, QberEstimate(0, 0, 0, 0, 1, 1), f_ec=0.9)


def test_secure_bar_first_order():
    # finite-difference check of the propagated bar
    s, sb, eh, ehb, ed, edb, _ = TABLE[0]
    q = QberEstimate(eh, ed, ehb / 3, edb / 3, 1, 1)

    def f(s_, eh_, ed_):
        return secure_rate(s_, QberEstimate(eh_, ed_, ehb / 3, edb / 3, 1, 1)).value

    d = 1e-7
    grads = [(f(s + d, eh, ed) - f(s - d, eh, ed)) / (2 * d),
             (f(s, eh + d, ed) - f(s, eh - d, ed)) / (2 * d),
             (f(s, eh, ed + d) - f(s, eh, ed - d)) / (2 * d)]
    sig = math.sqrt((grads[0] * sb / 3) ** 2 + (grads[1] * ehb / 3) ** 2 + (grads[2] * edb / 3) ** 2)
    assert secure_rate(RateEstimate(s, sb), q).sigma3 == pytest.approx(3 * sig, rel=1e-4)


qbers = st.floats(0.0, 0.11)
sigmas = st.floats(0.0, 0.01)


@settings(max_examples=200)
@given(qbers, qbers, sigmas, sigmas, st.floats(1.0, 2.0), st.floats(1e-4, 0.01), st.integers(0, 4))
def test_secure_rate_monotone(eh, ed, sh, sd, f, step, which):
    base = [eh, ed, sh, sd, f]
    bumped = list(base)
    bumped[which] += step
    r0 = secure_rate(30.0, QberEstimate(*base[:4], 1, 1), base[4]).value
    r1 = secure_rate(30.0, QberEstimate(*bumped[:4], 1, 1), bumped[4]).value
    assert r1 <= r0 + 1e-12
    assert r0 <= 30.0


def test_report_round_trip_and_table():
    rep = analyze(table(HV=8000, VH=8000, HH=200, VV=190, DD=8000, AA=8000, DA=180, AD=170), 500)
    d = rep.to_dict()
    back = KeyRateReport.from_dict(d)
    assert back.secure == rep.secure and back.qber == rep.qber
    text = rep.format_table("col")
    assert "Secure key rate" in text and "fair sampling" in text


def test_intrinsic_qber_from_enumerated_table():
    p = joint_distribution(make_colored_noise_state(0.9))
    q = qber(p * 1e12)
    assert q.e_h == pytest.approx(0.0, abs=1e-12)
    assert q.e_d == pytest.approx(0.05, abs=1e-12)


def test_improvement_factors():
    assert math.prod(IMPROVEMENT_FACTORS.values()) == 3600
    all_on = ImprovementScenario()
    p = project_scenario(20.5, all_on)
    assert p.per_channel == pytest.approx(73800)
    assert project_scenario(20.5, ImprovementScenario(False, False, False, False)).per_channel == 20.5
    agg = project_scenario(75e3, ImprovementScenario(False, False, False, False, channels=20))
    assert agg.aggregate == pytest.approx(1.5e6)
    assert ImprovementScenario.from_names(["dual", "rep"]).factor == 100
    with pytest.raises(DomainError):
        ImprovementScenario.from_names(["warp"])
    with pytest.raises(DomainError):
        ImprovementScenario(channels=0)
    with pytest.raises(DomainError):
        project_scenario(-1.0, all_on)


RATE = 81.6e6


def _stream_with_counts(per_window, window_pulses, n_windows):
    # one coincidence per pulse with the given (Alice, Bob) outcomes
    amap = AnalyzerMap()
    centers = (amap.centers() / 64e-12).astype(int)
    sync, off, party = [], [], []
    for w in range(n_windows):
        for k, (a, b) in enumerate(per_window(w)):
            s = w * window_pulses + k
            sync += [s, s]
            off += [centers[a], centers[b]]
            party += [0, 1]
    return TagStream.from_events(sync, off, party, RATE), amap


def test_stability_series_windows_and_gaps():
    pattern = lambda w: [] if w == 2 else [(H, V)] * 9 + [(H, H)] + [(D, D)] * 10
    s, amap = _stream_with_counts(pattern, 100, 4)
    series = stability_series(s, 100 / RATE, amap, duration_s=400 / RATE)
    assert len(series) == 4
    assert series[2].gap and not series[0].gap
    assert series[0].qber.e_h == pytest.approx(0.1)
    assert pooled_qber(series).n_h == 30


def test_stability_single_window_equals_whole_run():
    pattern = lambda w: [(H, V)] * 5 + [(V, V)] * (w + 1) + [(A, A)] * 4 + [(D, A)]
    s, amap = _stream_with_counts(pattern, 50, 3)
    single = stability_series(s, 1.0, amap)
    assert len(single) == 1
    assert single[0].qber == pooled_qber(stability_series(s, 50 / RATE, amap))


def test_stability_window_domain():
    with pytest.raises(DomainError):
        stability_series(TagStream.empty(RATE), 0)

"""Acceptance checks, one per criterion.

Each check returns ``(ok, detail)``; the pytest wrappers assert on ``ok`` and
record a PASS/FAIL line that is printed in the terminal summary. Run this
file directly to print the lines without pytest.
"""
import math
import sys
from dataclasses import replace

import numpy as np
import pytest

from qkdnet import config, network, scenario
from qkdnet.grid import (Frequency, band_from_nm, conjugacy_error_ghz, conjugate_of,
                         plan_channels, wavelength_to_frequency)
from qkdnet.keyrate import (ImprovementScenario, analyze, pooled_qber, project_scenario, qber,
                            report_from_summary, sifted_rate, stability_series)
from qkdnet.sim import analytic_rates, iter_blocks, simulate_run
from qkdnet.states import (Outcome, concurrence, joint_probability, make_colored_noise_state,
                           make_werner_state, tangle)
from qkdnet.timetag import CoincidenceTable, coincidence_table, decode, encode

RESULTS = []

# tolerances
TOL_SECURE = 0.3        # bits/s
TOL_SIFTED_BAR = 0.1    # bits/s
TOL_QBER_BAR = 0.1      # percentage points
TOL_STATE = 1e-9
TOL_INTRINSIC = 1e-12
N_SIGMA = 3.0
SIFTED_FACTOR = 1.5

PUMP = wavelength_to_frequency(777.45)
T_ACQ = 500.0

# reference columns: sifted, 3-sigma, e_H, 3-sigma, e_D, 3-sigma, secure
COLUMNS = [
    (32.5, 0.7, 0.0235, 0.0051, 0.0215, 0.0048, 20.5),
    (29.4, 0.7, 0.0168, 0.0045, 0.0223, 0.0051, 19.7),
    (16.3, 0.5, 0.0472, 0.010, 0.0722, 0.012, 4.0),
]
PAIRS_NM = [(1553.3, 1556.6), (1533.3, 1577.1), (1518.7, 1593.0)]


def record(num, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {num:>2} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def check_secure_rates():
    got = []
    for s, s3, eh, eh3, ed, ed3, target in COLUMNS:
        rep = report_from_summary(s, eh, eh3, ed, ed3, s3, T_ACQ, 1.2)
        got.append((rep.secure.value, target))
    ok = all(abs(v - t) <= TOL_SECURE for v, t in got)
    return ok, ", ".join(f"{v:.2f} (want {t}±{TOL_SECURE})" for v, t in got)


def check_error_bars():
    parts, ok = [], True
    for s, s3, eh, eh3, ed, ed3, _ in COLUMNS:
        n_sifted = s * T_ACQ
        bar = sifted_rate(np.array([[0, n_sifted / 2, 0, 0], [n_sifted / 2, 0, 0, 0],
                                    [0, 0, 0, 0], [0, 0, 0, 0]]), T_ACQ).sigma3
        n_basis = n_sifted / 2
        bh = 300 * math.sqrt(eh * (1 - eh) / n_basis)
        bd = 300 * math.sqrt(ed * (1 - ed) / n_basis)
        ok &= abs(bar - s3) <= TOL_SIFTED_BAR
        ok &= abs(bh - 100 * eh3) <= TOL_QBER_BAR and abs(bd - 100 * ed3) <= TOL_QBER_BAR
        parts.append(f"{bar:.2f}/{bh:.2f}%/{bd:.2f}% vs {s3}/{100 * eh3:.2f}%/{100 * ed3:.2f}%")
    return ok, "; ".join(parts)


def secure_bars():
    out = []
    for s, s3, eh, eh3, ed, ed3, _ in COLUMNS:
        out.append(report_from_summary(s, eh, eh3, ed, ed3, s3, T_ACQ, 1.2).secure.sigma3)
    return out


def check_capacity():
    lo, hi = band_from_nm(1509.9, 1599.9)
    p200 = plan_channels(PUMP, lo, hi, 200)
    p100 = plan_channels(PUMP, lo, hi, 100)
    worst = max(abs(conjugacy_error_ghz(p.signal, p.idler, PUMP))
                for p in p200.pairs + p100.pairs)
    ok = len(p200) >= 25 and len(p100) >= 2 * len(p200) and worst <= 100
    return ok, f"{len(p200)} pairs at 200 GHz, {len(p100)} at 100 GHz, max |dnu| {worst:.1f} GHz"


def check_conjugacy():
    eps = 200 / 2
    errs = []
    for s, i in PAIRS_NM:
        idl = conjugate_of(wavelength_to_frequency(s), PUMP)
        errs.append((idl.hz - wavelength_to_frequency(i).hz) / 1e9)
    ok = all(abs(e) <= eps for e in errs)
    return ok, ", ".join(f"{e:+.1f} GHz" for e in errs) + f" (eps {eps:.0f} GHz)"


def column1_physics():
    cfg = config.load(config.bundled("table1_col1.cfg"))
    ph = cfg.physics[cfg.links[0]]
    return (ph.source, replace(ph.alice, dead_time=0.0), replace(ph.bob, dead_time=0.0),
            ph.analyzer, cfg.run.seed)


def check_monte_carlo():
    src, alice, bob, amap, seed = column1_physics()
    tags = simulate_run(src, alice, bob, amap, T_ACQ, seed)
    r = analytic_rates(src, alice, bob, amap)
    na = int((tags.party == 0).sum())
    nb = int((tags.party == 1).sum())
    pulses = np.intersect1d(tags.select(party=0).sync, tags.select(party=1).sync).size
    z = [(n - e * T_ACQ) / math.sqrt(e * T_ACQ)
         for n, e in ((na, r.singles_a), (nb, r.singles_b), (pulses, r.pulse_coincidences))]
    sifted = analyze(coincidence_table(tags, tags, amap), T_ACQ).sifted.value
    ratio = sifted / 32.5
    ok = all(abs(x) <= N_SIGMA for x in z) and 1 / SIFTED_FACTOR <= ratio <= SIFTED_FACTOR
    return ok, (f"z(singles A, singles B, coincidences) = {z[0]:+.2f}, {z[1]:+.2f}, {z[2]:+.2f}; "
                f"sifted {sifted:.2f} bits/s ({ratio:.2f}x of 32.5)")


def check_state_metrics():
    worst = 0.0
    for p in np.linspace(0, 1, 201):
        worst = max(worst, abs(tangle(make_werner_state(p)) - max(0.0, (3 * p - 1) / 2) ** 2))
    for v in np.linspace(0, 1, 201):
        s = make_colored_noise_state(v)
        worst = max(worst, abs(tangle(s) - v * v), abs(concurrence(s) - v))
    return worst <= TOL_STATE, f"max deviation {worst:.1e} (tol {TOL_STATE:.0e})"


def enumerate_table(state):
    counts = np.zeros((4, 4))
    for a in Outcome:
        for b in Outcome:
            counts[a, b] = joint_probability(state, a, b)
    return CoincidenceTable(counts)


def check_intrinsic_qber():
    worst_h = worst_d = 0.0
    for v in np.linspace(0, 1, 101):
        q = qber(enumerate_table(make_colored_noise_state(v)))
        worst_h = max(worst_h, abs(q.e_h - (1 - v) / 2))
        worst_d = max(worst_d, abs(q.e_d - (1 - v) / 2))
    ok = max(worst_h, worst_d) <= TOL_INTRINSIC
    return ok, (f"max |e_H - (1-V)/2| {worst_h:.3g}, max |e_D - (1-V)/2| {worst_d:.3g} "
                f"(tol {TOL_INTRINSIC:.0e})")


def check_projection():
    one = project_scenario(20.5, ImprovementScenario())
    many = project_scenario(one.per_channel, ImprovementScenario(False, False, False, False, 20))
    ok = one.factor == 3600 and 73e3 <= one.per_channel <= 75e3 and many.aggregate >= 1.4e6
    return ok, (f"factor {one.factor:.0f}, {one.per_channel / 1e3:.1f} kbit/s per channel, "
                f"{many.aggregate / 1e6:.3f} Mbit/s over 20 channels")


def check_stability():
    cfg = config.load(config.bundled("fig4.cfg"))
    ph = cfg.physics[cfg.links[0]]
    run = cfg.run
    blocks = iter_blocks(ph.source, ph.alice, ph.bob, ph.analyzer, run.duration_s, run.seed,
                         0, run.block_pulses, run.workers)
    series = stability_series(blocks, run.window_s, ph.analyzer, run.duration_s)
    pooled = pooled_qber(series)
    worst = 0.0
    for w in series:
        if w.gap:
            return False, f"window {w.index} has no coincidences"
        for e, n, m in ((w.qber.e_h, w.qber.n_h, pooled.e_h), (w.qber.e_d, w.qber.n_d, pooled.e_d)):
            worst = max(worst, abs(e - m) / math.sqrt(m * (1 - m) / n))
    ok = len(series) == 14 and worst <= N_SIGMA
    return ok, (f"{len(series)} windows, pooled e_H {100 * pooled.e_h:.2f}% "
                f"e_D {100 * pooled.e_d:.2f}%, worst deviation {worst:.2f} sigma")


def check_suites():
    from hypothesis import given, settings
    from test_network import ops, run_ops, with_users
    from test_timetag import streams

    @settings(max_examples=300, deadline=None)
    @given(streams())
    def codec(s):
        assert decode(encode(s)) == s

    @settings(max_examples=300, deadline=None)
    @given(ops)
    def switch(seq):
        s, log = run_ops(seq)
        used = [l.pair_id for l in s.links]
        assert len(used) == len(set(used)) and set(used).isdisjoint(s.free_pairs)
        assert network.replay(with_users(10, 4), log) == s

    codec()
    switch()
    cfg = scenario.with_overrides(config.load(config.bundled("three_links.cfg")), duration_s=2.0)
    a = scenario.run_scenario(cfg, jobs=1).to_json(False)
    b = scenario.run_scenario(cfg, jobs=3).to_json(False)
    return a == b, "codec round-trip, switch invariants, seeded scenario determinism"


CHECKS = [
    (1, "secure rates", check_secure_rates),
    (2, "error bars", check_error_bars),
    (3, "channel capacity", check_capacity),
    (4, "reference pairs are conjugate", check_conjugacy),
    (5, "Monte Carlo vs analytic", check_monte_carlo),
    (6, "concurrence oracle", check_state_metrics),
    (7, "intrinsic QBER", check_intrinsic_qber),
    (8, "improvement projection", check_projection),
    (9, "QBER stability over 7000 s", check_stability),
    (10, "format and property suites", check_suites),
]


@pytest.mark.parametrize("num, name, fn", CHECKS, ids=[f"criterion_{c[0]}" for c in CHECKS])
def test_criterion(num, name, fn):
    ok, detail = fn()
    assert record(num, name, ok, detail), detail


def test_secure_rate_bars_reported():
    # the bar on the secure rate is not asserted; see README
    bars = secure_bars()
    print("secure-rate 3-sigma bars:", ", ".join(f"{b:.2f}" for b in bars))
    assert all(b > 0 for b in bars)


if __name__ == "__main__":
    sys.path.insert(0, str(__import__("pathlib").Path(__file__).parent))
    failed = 0
    for num, name, fn in CHECKS:
        ok, detail = fn()
        failed += not record(num, name, ok, detail)
    sys.exit(1 if failed else 0)

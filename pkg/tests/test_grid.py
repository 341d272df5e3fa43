from decimal import Decimal, getcontext

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from qkdnet.errors import ConfigError, DomainError
from qkdnet.grid import (GRID_ANCHOR_HZ, ChannelPlan, Frequency, GridChannel, band_from_nm,
                         conjugacy_error_ghz, conjugate_of, frequency_to_wavelength, is_conjugate,
                         loss_to_equivalent_km, nearest_channel, plan_channels,
                         wavelength_to_frequency)

getcontext().prec = 40
PUMP = wavelength_to_frequency(777.45)


def c_over(nm):
    # independent high-precision evaluation of c / lambda in THz
    return float(Decimal("299792.458") / Decimal(str(nm)))


def test_wavelength_to_frequency_examples():
    assert wavelength_to_frequency(1554.94).thz == pytest.approx(192.800, abs=5e-4)
    assert wavelength_to_frequency(777.45).thz == pytest.approx(385.610, abs=5e-4)
    assert wavelength_to_frequency(299792.458).thz == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("nm", [777.45, 1518.7, 1533.3, 1553.3, 1577.1, 1593.0])
def test_wavelength_matches_decimal_oracle(nm):
    assert wavelength_to_frequency(nm).thz == pytest.approx(c_over(nm), abs=1e-9)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_wavelength_domain(bad):
    with pytest.raises(DomainError):
        wavelength_to_frequency(bad)


def test_frequency_must_be_positive():
    with pytest.raises(DomainError):
        Frequency(0)


@given(st.floats(min_value=400.0, max_value=2000.0))
def test_round_trip_nm(nm):
    assert abs(frequency_to_wavelength(wavelength_to_frequency(nm)) - nm) < 1e-6


@given(st.integers(min_value=10**12, max_value=10**15))
def test_round_trip_relative(hz):
    f = Frequency(hz)
    back = wavelength_to_frequency(f.nm)
    assert abs(back.hz - hz) / hz < 1e-6


def test_itu_channel_28():
    ch = GridChannel(28)
    assert ch.center.thz == 192.8
    assert nearest_channel(wavelength_to_frequency(1554.94)) == ch
    assert ch.wavelength_nm == pytest.approx(1554.94, abs=0.01)


def test_grid_channel_validation():
    assert GridChannel(28.5, 50).center.thz == pytest.approx(192.85)
    with pytest.raises(DomainError):
        GridChannel(29, 200)
    with pytest.raises(DomainError):
        GridChannel(28.5, 100)
    with pytest.raises(ConfigError):
        GridChannel(28, 150)


def test_conjugate_of_table_column_2():
    sig = Frequency.from_thz(195.521)
    idl = conjugate_of(sig, PUMP)
    assert idl.thz == pytest.approx(190.089, abs=1e-3)
    assert idl.nm == pytest.approx(1577.1, abs=0.05)


def test_conjugate_of_table_column_1():
    idl = conjugate_of(Frequency.from_thz(193.004), PUMP)
    assert idl.thz == pytest.approx(192.606, abs=1e-3)
    near = nearest_channel(idl, 200)
    assert near.wavelength_nm == pytest.approx(1556.6, abs=0.05)


def test_conjugate_of_degenerate_point():
    half = Frequency(193_000_000_000_000)
    assert conjugate_of(half, Frequency(2 * half.hz)) == half


def test_conjugate_of_domain():
    with pytest.raises(DomainError):
        conjugate_of(Frequency.from_thz(400), PUMP)


def test_conjugacy_error_sign():
    s, i = GridChannel(30), GridChannel(26)
    err = conjugacy_error_ghz(s, i, PUMP)
    assert err == pytest.approx((s.center.hz + i.center.hz - PUMP.hz) / 1e9)
    assert is_conjugate(s, i, PUMP, abs(err)) and not is_conjugate(s, i, PUMP, abs(err) - 1)


def test_loss_to_equivalent_km():
    assert loss_to_equivalent_km(12, 0.2) == pytest.approx(60)
    assert loss_to_equivalent_km(0) == 0
    assert loss_to_equivalent_km(8, 0.2) == pytest.approx(40)
    with pytest.raises(DomainError):
        loss_to_equivalent_km(3, 0)
    with pytest.raises(DomainError):
        loss_to_equivalent_km(-1)


def _band(lo=1510.0, hi=1600.0):
    return band_from_nm(lo, hi)


def test_plan_200ghz_count():
    plan = plan_channels(PUMP, *_band(), spacing_ghz=200)
    assert len(plan) >= 25
    assert len(plan) == 27


def test_plan_100ghz_more_pairs():
    p200 = plan_channels(PUMP, *_band(), spacing_ghz=200)
    p100 = plan_channels(PUMP, *_band(), spacing_ghz=100)
    assert len(p100) > len(p200)
    assert len(p100) == 54


def test_plan_invalid_spacing():
    with pytest.raises(ConfigError):
        plan_channels(PUMP, *_band(), spacing_ghz=150)


def test_plan_empty_cases():
    # one-channel band far from the degenerate point
    lo, hi = Frequency.from_thz(195.95), Frequency.from_thz(196.05)
    assert len(plan_channels(PUMP, lo, hi, 100)) == 0
    # band excludes degeneracy
    lo, hi = Frequency.from_thz(194), Frequency.from_thz(196)
    assert len(plan_channels(PUMP, lo, hi, 100)) == 0


def test_plan_structure():
    plan = plan_channels(PUMP, *_band(), spacing_ghz=200)
    det = [p.detuning_ghz for p in plan.pairs]
    assert det == sorted(det)
    assert plan.pair_ids == tuple(range(1, len(plan) + 1))
    used = set()
    for p in plan.pairs:
        assert p.signal.center > p.idler.center
        assert abs(conjugacy_error_ghz(p.signal, p.idler, PUMP)) <= plan.eps_ghz
        assert plan.band_low <= p.idler.center and p.signal.center <= plan.band_high
        assert p.signal not in used and p.idler not in used
        used |= {p.signal, p.idler}


def test_plan_first_pair_is_table_column_1():
    p = plan_channels(PUMP, *_band(1509.9, 1599.9), spacing_ghz=200).pair(1)
    assert p.signal.wavelength_nm == pytest.approx(1553.3, abs=0.05)
    assert p.idler.wavelength_nm == pytest.approx(1556.6, abs=0.05)


def test_strict_itu_drops_short_wavelengths():
    full = plan_channels(PUMP, *_band(), 100)
    strict = plan_channels(PUMP, *_band(), 100, strict_itu=True)
    assert 0 < len(strict) < len(full)
    assert all(p.signal.wavelength_nm >= 1520.0 for p in strict.pairs)


def test_plan_serialization_round_trip():
    plan = plan_channels(PUMP, *_band(), 50)
    assert ChannelPlan.from_dict(plan.to_dict()) == plan
    lines = plan.to_csv().splitlines()
    assert lines[0] == "pair_id,signal_nm,idler_nm,signal_thz,idler_thz,detuning_ghz"
    assert len(lines) == len(plan) + 1


def brute_force_count(pump, lo, hi, spacing, eps):
    step = spacing * 10**9
    chans = [k for k in range(-300, 400) if lo.hz <= GRID_ANCHOR_HZ + k * step <= hi.hz]
    g = nx.Graph()
    for i, a in enumerate(chans):
        for b in chans[i + 1:]:
            if abs(2 * GRID_ANCHOR_HZ + (a + b) * step - pump.hz) <= eps * 1e9:
                g.add_edge(a, b)
    return len(nx.max_weight_matching(g, maxcardinality=True))


plan_inputs = st.tuples(
    st.integers(384_000, 388_000),
    st.integers(187_000, 192_500),
    st.integers(193_500, 199_000),
    st.sampled_from([50, 100, 200]),
    st.sampled_from([None, 0.0, 0.05, 0.5, 1.0, 1.5]),  # tolerance in units of spacing
)


@settings(max_examples=60, deadline=None)
@given(plan_inputs)
def test_plan_count_is_maximal(args):
    pump_ghz, lo_ghz, hi_ghz, spacing, eps = args
    pump, lo, hi = Frequency.from_ghz(pump_ghz), Frequency.from_ghz(lo_ghz), Frequency.from_ghz(hi_ghz)
    e = spacing / 2 if eps is None else eps * spacing
    plan = plan_channels(pump, lo, hi, spacing, e)
    assert len(plan) == brute_force_count(pump, lo, hi, spacing, e)
    for p in plan.pairs:
        assert abs(conjugacy_error_ghz(p.signal, p.idler, pump)) <= e + 1e-9


@settings(max_examples=40, deadline=None)
@given(plan_inputs)
def test_plan_monotone_in_spacing_and_band(args):
    pump_ghz, lo_ghz, hi_ghz, _, _ = args
    pump, lo, hi = Frequency.from_ghz(pump_ghz), Frequency.from_ghz(lo_ghz), Frequency.from_ghz(hi_ghz)
    counts = [len(plan_channels(pump, lo, hi, s)) for s in (50, 100, 200)]
    assert counts[0] >= counts[1] >= counts[2]
    wider = plan_channels(pump, Frequency.from_ghz(lo_ghz - 500), Frequency.from_ghz(hi_ghz + 500), 100)
    assert len(wider) >= counts[1]


def test_plan_deterministic():
    a = plan_channels(PUMP, *_band(), 100)
    b = plan_channels(PUMP, *_band(), 100)
    assert a == b and a.to_csv() == b.to_csv()

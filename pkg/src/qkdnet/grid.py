"""ITU DWDM grid arithmetic and frequency-conjugate channel planning.

Frequencies are held as integer hertz so that grid arithmetic is exact; the
ITU grid used here is ``190 THz + n * 100 GHz`` with half-integer ``n`` on the
50-GHz grid.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .errors import ConfigError, DomainError

#: Speed of light in nm * THz.
C_NM_THZ = 299792.458
_C_NM_HZ = 299_792_458 * 10**9  # nm * Hz

GRID_ANCHOR_HZ = 190 * 10**12
GRID_STEP_HZ = 50 * 10**9  # finest supported grid step
SPACINGS_GHZ = (50, 100, 200)

#: The ITU grid defines no DWDM channel below this wavelength.
ITU_MIN_WAVELENGTH_NM = 1520.0


@dataclass(frozen=True, order=True)
class Frequency:
    """Optical frequency stored as an integer number of hertz."""

    hz: int

    def __post_init__(self):
        if not isinstance(self.hz, int):
            object.__setattr__(self, "hz", int(round(self.hz)))
        if self.hz <= 0:
            raise DomainError(f"frequency must be positive, got {self.hz} Hz")

    @classmethod
    def from_thz(cls, thz: float) -> "Frequency":
        return cls(int(round(thz * 1e12)))

    @classmethod
    def from_ghz(cls, ghz: float) -> "Frequency":
        return cls(int(round(ghz * 1e9)))

    @classmethod
    def from_nm(cls, nm: float) -> "Frequency":
        return wavelength_to_frequency(nm)

    @property
    def thz(self) -> float:
        return self.hz / 1e12

    @property
    def ghz(self) -> float:
        return self.hz / 1e9

    @property
    def nm(self) -> float:
        return frequency_to_wavelength(self)

    def __repr__(self):
        return f"Frequency({self.thz:.6f} THz)"


def wavelength_to_frequency(wavelength_nm: float) -> Frequency:
    """Vacuum wavelength in nm to optical frequency."""
    if not wavelength_nm > 0:
        raise DomainError(f"wavelength must be positive, got {wavelength_nm!r} nm")
    return Frequency(int(round(_C_NM_HZ / wavelength_nm)))


def frequency_to_wavelength(freq: Frequency) -> float:
    """Optical frequency to vacuum wavelength in nm."""
    return _C_NM_HZ / freq.hz


@dataclass(frozen=True, order=True)
class GridChannel:
    """A channel on the ITU grid.

    ``index`` counts 100-GHz steps from 190 THz, so ITU channel 28 sits at
    192.8 THz. On the 50-GHz grid the index may be a half-integer (28.5).
    """

    index: float
    spacing_ghz: int = 100

    def __post_init__(self):
        if self.spacing_ghz not in SPACINGS_GHZ:
            raise ConfigError(f"channel spacing must be one of {SPACINGS_GHZ} GHz, got {self.spacing_ghz}")
        twice = self.index * 2
        if twice != int(twice):
            raise DomainError(f"channel index must be a multiple of 0.5, got {self.index}")
        twice = int(twice)
        step = self.spacing_ghz // 50
        if twice % step:
            raise DomainError(f"index {self.index} is not on the {self.spacing_ghz}-GHz grid")
        object.__setattr__(self, "index", twice // 2 if twice % 2 == 0 else twice / 2)

    @property
    def center(self) -> Frequency:
        return Frequency(GRID_ANCHOR_HZ + int(self.index * 2) * GRID_STEP_HZ)

    @property
    def wavelength_nm(self) -> float:
        return self.center.nm

    @property
    def label(self) -> str:
        return f"Ch{self.index}"


def nearest_channel(freq: Frequency, spacing_ghz: int = 100) -> GridChannel:
    """Grid channel whose center is closest to ``freq``."""
    if spacing_ghz not in SPACINGS_GHZ:
        raise ConfigError(f"channel spacing must be one of {SPACINGS_GHZ} GHz, got {spacing_ghz}")
    step_hz = spacing_ghz * 10**9
    k = round((freq.hz - GRID_ANCHOR_HZ) / step_hz)
    return GridChannel(k * spacing_ghz / 100, spacing_ghz)


def _as_frequency(ch) -> Frequency:
    if isinstance(ch, GridChannel):
        return ch.center
    if isinstance(ch, Frequency):
        return ch
    raise TypeError(f"expected GridChannel or Frequency, got {type(ch).__name__}")


def conjugate_of(channel, pump: Frequency) -> Frequency:
    """Frequency of the partner photon: ``pump - channel`` (energy conservation)."""
    nu = _as_frequency(channel)
    if pump.hz <= nu.hz:
        raise DomainError(f"pump {pump} must exceed channel frequency {nu}")
    return Frequency(pump.hz - nu.hz)


def conjugacy_error_ghz(signal, idler, pump: Frequency) -> float:
    """Signed mismatch ``nu_s + nu_i - nu_pump`` in GHz."""
    return (_as_frequency(signal).hz + _as_frequency(idler).hz - pump.hz) / 1e9


def is_conjugate(signal, idler, pump: Frequency, eps_ghz: float) -> bool:
    return abs(conjugacy_error_ghz(signal, idler, pump)) <= eps_ghz


@dataclass(frozen=True)
class ConjugatePair:
    pair_id: int
    signal: GridChannel
    idler: GridChannel
    detuning_ghz: float

    def row(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "signal_nm": round(self.signal.wavelength_nm, 4),
            "idler_nm": round(self.idler.wavelength_nm, 4),
            "signal_thz": self.signal.center.thz,
            "idler_thz": self.idler.center.thz,
            "detuning_ghz": self.detuning_ghz,
        }


@dataclass(frozen=True)
class ChannelPlan:
    pump: Frequency
    band_low: Frequency
    band_high: Frequency
    spacing_ghz: int
    eps_ghz: float
    pairs: tuple = field(default_factory=tuple)
    strict_itu: bool = False

    def __len__(self):
        return len(self.pairs)

    def pair(self, pair_id: int) -> ConjugatePair:
        for p in self.pairs:
            if p.pair_id == pair_id:
                return p
        raise KeyError(pair_id)

    @property
    def pair_ids(self) -> tuple:
        return tuple(p.pair_id for p in self.pairs)

    def rows(self) -> list:
        return [p.row() for p in self.pairs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "pump_hz": self.pump.hz,
            "band_low_hz": self.band_low.hz,
            "band_high_hz": self.band_high.hz,
            "spacing_ghz": self.spacing_ghz,
            "eps_ghz": self.eps_ghz,
            "strict_itu": self.strict_itu,
            "pairs": [
                {"pair_id": p.pair_id, "signal_index": p.signal.index,
                 "idler_index": p.idler.index, "detuning_ghz": p.detuning_ghz}
                for p in self.pairs
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelPlan":
        spacing = int(d["spacing_ghz"])
        pairs = tuple(
            ConjugatePair(int(p["pair_id"]), GridChannel(p["signal_index"], spacing),
                          GridChannel(p["idler_index"], spacing), float(p["detuning_ghz"]))
            for p in d["pairs"]
        )
        return cls(Frequency(int(d["pump_hz"])), Frequency(int(d["band_low_hz"])),
                   Frequency(int(d["band_high_hz"])), spacing, float(d["eps_ghz"]),
                   pairs, bool(d.get("strict_itu", False)))


CSV_COLUMNS = ("pair_id", "signal_nm", "idler_nm", "signal_thz", "idler_thz", "detuning_ghz")


def plan_channels(pump: Frequency, band_low: Frequency, band_high: Frequency,
                  spacing_ghz: int = 200, eps_ghz: float | None = None,
                  strict_itu: bool = False) -> ChannelPlan:
    """Carve ``[band_low, band_high]`` into disjoint frequency-conjugate pairs.

    Every grid channel whose center lies inside the band is a candidate. Two
    channels pair up when their frequencies sum to the pump within
    ``eps_ghz`` (default: half the spacing). Among the admissible grid sums
    the one yielding the most pairs is used, ties going to the sum closest to
    the pump. Pairs are returned in ascending detuning from degeneracy and
    numbered from 1.
    """
    if spacing_ghz not in SPACINGS_GHZ:
        raise ConfigError(f"channel spacing must be one of {SPACINGS_GHZ} GHz, got {spacing_ghz}")
    if eps_ghz is None:
        eps_ghz = spacing_ghz / 2
    if eps_ghz < 0:
        raise ConfigError(f"conjugacy tolerance must be non-negative, got {eps_ghz}")
    lo, hi = band_low.hz, band_high.hz
    if strict_itu:
        hi = min(hi, wavelength_to_frequency(ITU_MIN_WAVELENGTH_NM).hz)

    def empty():
        return ChannelPlan(pump, band_low, band_high, spacing_ghz, eps_ghz, (), strict_itu)

    # Degenerate point counted twice to stay in integers.
    if not (2 * lo < pump.hz < 2 * hi):
        return empty()

    step = spacing_ghz * 10**9
    kmin = -((GRID_ANCHOR_HZ - lo) // step)  # ceil((lo - anchor) / step)
    kmax = (hi - GRID_ANCHOR_HZ) // step
    if kmax < kmin:
        return empty()

    eps_hz = eps_ghz * 1e9
    # Channel sums are 2*anchor + m*step; enumerate the admissible m.
    m_lo = math.ceil((pump.hz - eps_hz - 2 * GRID_ANCHOR_HZ) / step)
    m_hi = math.floor((pump.hz + eps_hz - 2 * GRID_ANCHOR_HZ) / step)
    best = None
    for m in range(m_lo, m_hi + 1):
        # k_s > k_i, k_s + k_i = m, both in [kmin, kmax]
        ks_lo = max(m // 2 + 1, m - kmax)
        ks_hi = min(kmax, m - kmin)
        count = max(0, ks_hi - ks_lo + 1)
        key = (-count, abs(2 * GRID_ANCHOR_HZ + m * step - pump.hz), m)
        if best is None or key < best[0]:
            best = (key, m, ks_lo, ks_hi)
    if best is None or best[0][0] == 0:
        return empty()

    _, m, ks_lo, ks_hi = best
    half_pump = pump.hz / 2
    raw = []
    for ks in range(ks_lo, ks_hi + 1):
        sig = GridChannel(ks * spacing_ghz / 100, spacing_ghz)
        idl = GridChannel((m - ks) * spacing_ghz / 100, spacing_ghz)
        raw.append((abs(sig.center.hz - half_pump) / 1e9, sig, idl))
    raw.sort(key=lambda r: (r[0], r[1].center.hz))
    pairs = tuple(ConjugatePair(i + 1, s, d, det) for i, (det, s, d) in enumerate(raw))
    return ChannelPlan(pump, band_low, band_high, spacing_ghz, eps_ghz, pairs, strict_itu)


def band_from_nm(low_nm: float, high_nm: float) -> tuple:
    """Band edges given in wavelength; returns ``(low_freq, high_freq)``."""
    a, b = wavelength_to_frequency(low_nm), wavelength_to_frequency(high_nm)
    return (a, b) if a.hz < b.hz else (b, a)


def loss_to_equivalent_km(loss_db: float, rate_db_per_km: float = 0.2) -> float:
    """Fiber length producing ``loss_db`` at a linear attenuation rate."""
    if not rate_db_per_km > 0:
        raise DomainError(f"attenuation rate must be positive, got {rate_db_per_km}")
    if loss_db < 0:
        raise DomainError(f"loss must be non-negative, got {loss_db}")
    return loss_db / rate_db_per_km

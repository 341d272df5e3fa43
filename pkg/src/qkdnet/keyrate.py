"""BBM92 post-processing figures: QBER, sifted and secure key rates, projections.

The source emits Psi+, so H/V outcomes are anticorrelated (Bob flips his bit)
and D/A outcomes are correlated. Finite-size effects enter as binomial QBER
uncertainties; the privacy-amplification term uses the upper bound
``e + 3 sigma``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, EstimateError
from .states import Outcome
from .timetag import AnalyzerMap, CoincidenceTable, TagStream, bin_outcomes, coincidences

H, V, D, A = Outcome.H, Outcome.V, Outcome.D, Outcome.A

DEFAULT_F_EC = 1.2
SIGMA_LEVEL = 3.0

FAIR_SAMPLING_CAVEAT = (
    "Security of these rates assumes fair sampling by the detectors; "
    "detector side channels are not modeled."
)


@dataclass(frozen=True)
class QberEstimate:
    e_h: float
    e_d: float
    sigma_h: float
    sigma_d: float
    n_h: float
    n_d: float

    @property
    def upper_h(self) -> float:
        return self.e_h + SIGMA_LEVEL * self.sigma_h

    @property
    def upper_d(self) -> float:
        return self.e_d + SIGMA_LEVEL * self.sigma_d

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class RateEstimate:
    """A rate in bits/s with its 3-sigma uncertainty."""

    value: float
    sigma3: float = 0.0

    def to_dict(self) -> dict:
        return {"value": float(self.value), "sigma3": float(self.sigma3)}


@dataclass(frozen=True)
class SecureRate(RateEstimate):
    raw: float = 0.0
    below_threshold: bool = False

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(raw=float(self.raw), below_threshold=bool(self.below_threshold))
        return d


def _binomial_sigma(e: float, n: float) -> float:
    return math.sqrt(e * (1 - e) / n) if n > 0 else 0.0


def _counts(table) -> np.ndarray:
    if isinstance(table, CoincidenceTable):
        return np.asarray(table.counts, dtype=float)
    c = np.asarray(table, dtype=float)
    if c.shape != (4, 4):
        raise ValueError(f"coincidence table must be 4x4, got {c.shape}")
    return c


def basis_counts(table) -> dict:
    """Matched-basis totals and error counts."""
    c = _counts(table)
    return {
        "n_h": c[H, H] + c[V, V] + c[H, V] + c[V, H],
        "err_h": c[H, H] + c[V, V],
        "n_d": c[D, D] + c[A, A] + c[D, A] + c[A, D],
        "err_d": c[D, A] + c[A, D],
    }


def qber(table) -> QberEstimate:
    """QBER in each basis with binomial one-sigma uncertainties."""
    b = basis_counts(table)
    if b["n_h"] <= 0:
        raise EstimateError("no matched H/V coincidences; e_H is undefined")
    if b["n_d"] <= 0:
        raise EstimateError("no matched D/A coincidences; e_D is undefined")
    e_h = b["err_h"] / b["n_h"]
    e_d = b["err_d"] / b["n_d"]
    return QberEstimate(e_h, e_d, _binomial_sigma(e_h, b["n_h"]), _binomial_sigma(e_d, b["n_d"]),
                        b["n_h"], b["n_d"])


def sifted_rate(table, t_acq: float) -> RateEstimate:
    """Correct-outcome matched-basis coincidences per second, Poisson 3-sigma bar."""
    if not t_acq > 0:
        raise DomainError(f"acquisition time must be positive, got {t_acq}")
    c = _counts(table)
    num = c[H, V] + c[V, H] + c[D, D] + c[A, A]
    return RateEstimate(num / t_acq, SIGMA_LEVEL * math.sqrt(num) / t_acq)


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise DomainError(f"binary entropy needs 0 <= x <= 1, got {x}")
    if x == 0 or x == 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def _entropy_slope(x: float) -> float:
    if x <= 0 or x >= 0.5:
        return 0.0 if x >= 0.5 else math.inf
    return math.log2((1 - x) / x)


def secure_rate(sifted, q: QberEstimate, f_ec: float = DEFAULT_F_EC) -> SecureRate:
    """Asymptotic-form secure rate with a 3-sigma QBER bound for privacy amplification.

    ``sifted`` is a :class:`RateEstimate` (its bar is propagated) or a bare
    number. The uncertainty is propagated to first order in the sifted rate
    and both QBERs. A QBER at or above 1/2 yields zero key with
    ``below_threshold`` set, as does a negative raw rate.
    """
    if f_ec < 1:
        raise DomainError(f"error-correction inefficiency must be >= 1, got {f_ec}")
    if isinstance(sifted, RateEstimate):
        s, s_sigma = sifted.value, sifted.sigma3 / SIGMA_LEVEL
    else:
        s, s_sigma = float(sifted), 0.0
    if s < 0:
        raise DomainError(f"sifted rate must be non-negative, got {s}")
    if q.e_h >= 0.5 or q.e_d >= 0.5:
        return SecureRate(0.0, 0.0, raw=0.0, below_threshold=True)

    uh, ud = min(q.upper_h, 0.5), min(q.upper_d, 0.5)
    frac = (1 - 0.5 * (binary_entropy(uh) + binary_entropy(ud))
            - 0.5 * f_ec * (binary_entropy(q.e_h) + binary_entropy(q.e_d)))
    raw = s * frac
    if raw <= 0:
        return SecureRate(0.0, 0.0, raw=raw, below_threshold=True)

    def dfrac(e, u):
        if e == 0:
            return 0.0  # zero observed errors: slope undefined, sigma is 0 as well
        return -0.5 * _entropy_slope(u) - 0.5 * f_ec * _entropy_slope(e)

    var = ((frac * s_sigma) ** 2
           + (s * dfrac(q.e_h, uh) * q.sigma_h) ** 2
           + (s * dfrac(q.e_d, ud) * q.sigma_d) ** 2)
    return SecureRate(raw, SIGMA_LEVEL * math.sqrt(var), raw=raw)


@dataclass(frozen=True)
class KeyRateReport:
    sifted: RateEstimate
    qber: QberEstimate
    secure: SecureRate
    t_acq: float
    f_ec: float = DEFAULT_F_EC
    table: CoincidenceTable | None = None
    caveats: tuple = (FAIR_SAMPLING_CAVEAT,)

    def to_dict(self) -> dict:
        d = {
            "t_acq_s": float(self.t_acq),
            "f_ec": float(self.f_ec),
            "sifted_rate": self.sifted.to_dict(),
            "qber": self.qber.to_dict(),
            "secure_rate": self.secure.to_dict(),
            "caveats": list(self.caveats),
        }
        if self.table is not None:
            d["coincidences"] = self.table.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KeyRateReport":
        sec = d["secure_rate"]
        return cls(
            RateEstimate(d["sifted_rate"]["value"], d["sifted_rate"]["sigma3"]),
            QberEstimate(**d["qber"]),
            SecureRate(sec["value"], sec["sigma3"], sec.get("raw", sec["value"]),
                       sec.get("below_threshold", False)),
            d["t_acq_s"], d.get("f_ec", DEFAULT_F_EC), None,
            tuple(d.get("caveats", (FAIR_SAMPLING_CAVEAT,))),
        )

    def format_table(self, title: str = "") -> str:
        q = self.qber
        rows = [
            ("Sifted key rate (bits/s, +-3 sigma)", f"{self.sifted.value:.1f} +- {self.sifted.sigma3:.1f}"),
            ("QBER e_H (%, +-3 sigma)", f"{100 * q.e_h:.2f} +- {300 * q.sigma_h:.2f}"),
            ("QBER e_D (%, +-3 sigma)", f"{100 * q.e_d:.2f} +- {300 * q.sigma_d:.2f}"),
            ("Secure key rate (bits/s, +-3 sigma)", f"{self.secure.value:.1f} +- {self.secure.sigma3:.1f}"),
            ("Acquisition time (s)", f"{self.t_acq:g}"),
            ("Error-correction f", f"{self.f_ec:g}"),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [title] if title else []
        lines += [f"{name:<{width}}  {value}" for name, value in rows]
        if self.secure.below_threshold:
            lines.append("(secure rate clamped at zero: below threshold)")
        lines += [f"note: {c}" for c in self.caveats]
        return "\n".join(lines)


def analyze(table, t_acq: float, f_ec: float = DEFAULT_F_EC) -> KeyRateReport:
    q = qber(table)
    s = sifted_rate(table, t_acq)
    tab = table if isinstance(table, CoincidenceTable) else CoincidenceTable(np.asarray(table))
    return KeyRateReport(s, q, secure_rate(s, q, f_ec), t_acq, f_ec, tab)


def report_from_summary(sifted: float, e_h: float, e_h_bar3: float, e_d: float,
                          e_d_bar3: float, sifted_bar3: float = 0.0, t_acq: float = 500.0,
                          f_ec: float = DEFAULT_F_EC) -> KeyRateReport:
    """Key-rate report from already-summarized figures (QBER bars given at 3 sigma)."""
    n = sifted * t_acq / 2
    q = QberEstimate(e_h, e_d, e_h_bar3 / SIGMA_LEVEL, e_d_bar3 / SIGMA_LEVEL, n, n)
    s = RateEstimate(sifted, sifted_bar3)
    return KeyRateReport(s, q, secure_rate(s, q, f_ec), t_acq, f_ec)


# -- improvement scenarios ---------------------------------------------------

IMPROVEMENT_FACTORS = {
    "dual": 4.0,    # one detector per basis at each party
    "splice": 4.0,  # reduced splice and device losses
    "eff": 9.0,     # detector efficiency 20% -> 60% for both photons
    "rep": 25.0,    # 81.6 MHz -> 2 GHz pump
}


@dataclass(frozen=True)
class ImprovementScenario:
    dual_detectors: bool = True
    splice_loss: bool = True
    detector_efficiency: bool = True
    rep_rate: bool = True
    channels: int = 1

    def __post_init__(self):
        if self.channels < 1:
            raise DomainError(f"channel count must be >= 1, got {self.channels}")

    @classmethod
    def from_names(cls, names, channels: int = 1) -> "ImprovementScenario":
        names = {n.strip() for n in names if n.strip()}
        unknown = names - IMPROVEMENT_FACTORS.keys()
        if unknown:
            raise DomainError(f"unknown improvement factors: {sorted(unknown)}")
        return cls("dual" in names, "splice" in names, "eff" in names, "rep" in names, channels)

    @property
    def factor(self) -> float:
        f = 1.0
        for enabled, key in ((self.dual_detectors, "dual"), (self.splice_loss, "splice"),
                             (self.detector_efficiency, "eff"), (self.rep_rate, "rep")):
            if enabled:
                f *= IMPROVEMENT_FACTORS[key]
        return f


@dataclass(frozen=True)
class ScenarioProjection:
    base_rate: float
    factor: float
    per_channel: float
    channels: int
    aggregate: float

    def to_dict(self) -> dict:
        return asdict(self)


def project_scenario(base, scenario: ImprovementScenario) -> ScenarioProjection:
    rate = base.secure.value if isinstance(base, KeyRateReport) else float(base)
    if rate < 0:
        raise DomainError(f"base secure rate must be non-negative, got {rate}")
    per = rate * scenario.factor
    return ScenarioProjection(rate, scenario.factor, per, scenario.channels, per * scenario.channels)


# -- stability ---------------------------------------------------------------

@dataclass(frozen=True)
class WindowQber:
    index: int
    start_s: float
    stop_s: float
    table: CoincidenceTable = field(repr=False)
    qber: QberEstimate | None = None

    @property
    def gap(self) -> bool:
        return self.qber is None

    def to_dict(self) -> dict:
        d = {"index": self.index, "start_s": self.start_s, "stop_s": self.stop_s, "gap": self.gap}
        if self.qber is not None:
            q = self.qber
            d.update(e_h=q.e_h, e_d=q.e_d, sigma_h=q.sigma_h, sigma_d=q.sigma_d,
                     n_h=q.n_h, n_d=q.n_d)
        return d


def stability_series(chunks, window_s: float = 500.0, analyzer: AnalyzerMap | None = None,
                     duration_s: float | None = None) -> list:
    """QBER time series over consecutive acquisition windows.

    ``chunks`` is a :class:`TagStream` or an iterable of consecutive, sorted
    chunks of one run (e.g. :func:`qkdnet.sim.iter_blocks`). Windows span
    ``window_s`` seconds of sync pulses; a window longer than the run yields a
    single window. Windows without matched-basis coincidences are returned as
    gaps. Vertical bars are one sigma.
    """
    if not window_s > 0:
        raise DomainError(f"window must be positive, got {window_s}")
    analyzer = analyzer or AnalyzerMap()
    if isinstance(chunks, TagStream):
        chunks = [chunks]
    tables: dict = {}
    rate = None
    last_sync = -1
    per = None
    for chunk in chunks:
        if rate is None:
            rate = chunk.sync_rate_hz
            per = max(1, int(round(window_s * rate)))
        if len(chunk) == 0:
            continue
        last_sync = max(last_sync, int(chunk.sync.max()))
        widx = (chunk.sync // np.uint64(per)).astype(np.int64)
        for w in np.unique(widx):
            sub = chunk.select(sync_range=(int(w) * per, (int(w) + 1) * per))
            t = coincidences(bin_outcomes(sub, analyzer, 0), bin_outcomes(sub, analyzer, 1))
            tables[int(w)] = tables[int(w)] + t if int(w) in tables else t
    if rate is None:
        return []
    if duration_s is not None:
        total_pulses = int(math.floor(duration_s * rate))
    else:
        total_pulses = last_sync + 1
    n_windows = max(1, -(-total_pulses // per))
    out = []
    for w in range(n_windows):
        table = tables.get(w, CoincidenceTable())
        b = basis_counts(table)
        q = qber(table) if b["n_h"] > 0 and b["n_d"] > 0 else None
        stop = min((w + 1) * per, total_pulses) / rate
        out.append(WindowQber(w, w * per / rate, stop, table, q))
    return out


def pooled_qber(series) -> QberEstimate:
    total = CoincidenceTable()
    for w in series:
        total = total + w.table
    return qber(total)

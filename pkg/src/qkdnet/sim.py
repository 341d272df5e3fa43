"""Monte Carlo photon-pair distribution and detection.

A run is divided into fixed blocks of pump pulses. Each block draws its
events from an independent random stream seeded by ``(seed, stream_id,
block_index)`` through :class:`numpy.random.SeedSequence`, so output does not
depend on how blocks are scheduled. Only non-empty pulses are ever
materialized: per-block detection counts are Poisson draws (Poisson thinning
of the pair emission) and their pulse indices are drawn uniformly.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError
from .states import TwoQubitState, joint_distribution, make_psi_plus
from .timetag import MAX_SYNC, RESOLUTION_PS, AnalyzerMap, CoincidenceTable, TagStream

DEFAULT_REP_RATE = 81.6e6
DEFAULT_BLOCK_PULSES = 1 << 28


@dataclass(frozen=True)
class SourceParams:
    mu: float
    rep_rate: float = DEFAULT_REP_RATE
    state: TwoQubitState = field(default_factory=make_psi_plus)

    def validate(self, path="source"):
        if not self.rep_rate > 0:
            raise ConfigError(f"rep_rate must be positive, got {self.rep_rate}", f"{path}.rep_rate")
        if not self.mu >= 0:
            raise ConfigError(f"mu must be non-negative, got {self.mu}", f"{path}.mu")

    @property
    def period(self) -> float:
        return 1.0 / self.rep_rate


@dataclass(frozen=True)
class ArmParams:
    """One photon's path: lumped loss (incl. detector efficiency) and detector behaviour."""

    loss_db: float
    dark_rate: float = 0.0
    dead_time: float = 0.0
    jitter_sigma: float = 100e-12
    misalignment_deg: float = 0.0

    def validate(self, path="arm"):
        for name in ("loss_db", "dark_rate", "dead_time", "jitter_sigma"):
            v = getattr(self, name)
            if not v >= 0:
                raise ConfigError(f"{name} must be non-negative, got {v}", f"{path}.{name}")

    @property
    def transmission(self) -> float:
        return 10 ** (-self.loss_db / 10)

    @property
    def misalignment_rad(self) -> float:
        return math.radians(self.misalignment_deg)


def compose_loss_db(*parts_db: float) -> float:
    """Total loss of cascaded elements; dB values simply add."""
    return float(sum(parts_db))


def _window_fraction(sigma: float, width: float) -> float:
    """Probability that Gaussian jitter keeps an arrival inside its slot."""
    if sigma <= 0:
        return 1.0
    return math.erf(width / 2 / (sigma * math.sqrt(2)))


@dataclass(frozen=True)
class AnalyticRates:
    """Closed-form expectations (per second) for one link."""

    singles_a: float
    singles_b: float
    coincidences: float
    pulse_coincidences: float
    accidental_pulse_coincidences: float
    accidentals: np.ndarray
    live_a: float = 1.0
    live_b: float = 1.0


def analytic_rates(src: SourceParams, alice: ArmParams, bob: ArmParams,
                   analyzer: AnalyzerMap | None = None) -> AnalyticRates:
    """Expected singles and coincidence rates, without dead time.

    ``coincidences`` counts detected true pairs. ``pulse_coincidences`` is the
    exact rate of pulses in which both detectors register at least one event
    (true pairs, multi-pair accidentals and dark counts). ``accidentals[a, b]``
    estimates uncorrelated coincidences per second landing in slot pair
    ``(a, b)``.
    """
    analyzer = analyzer or AnalyzerMap()
    r, mu = src.rep_rate, src.mu
    pa, pb = alice.transmission, bob.transmission
    da, db = alice.dark_rate / r, bob.dark_rate / r
    singles_a = r * (mu * pa + da)
    singles_b = r * (mu * pb + db)
    true = r * mu * pa * pb
    p_none_a = math.exp(-(mu * pa + da))
    p_none_b = math.exp(-(mu * pb + db))
    p_none = math.exp(-(mu * (pa + pb - pa * pb) + da + db))
    pulse = r * (1 - p_none_a - p_none_b + p_none)
    true_pulses = r * (1 - math.exp(-mu * pa * pb))

    p = joint_distribution(src.state, alice.misalignment_rad, bob.misalignment_rad)
    wa = _window_fraction(alice.jitter_sigma, analyzer.slot_width)
    wb = _window_fraction(bob.jitter_sigma, analyzer.slot_width)
    dark_slot = analyzer.slot_width * r  # fraction of the period covered by one slot
    alpha = mu * pa * p.sum(axis=1) * wa + da * dark_slot
    beta = mu * pb * p.sum(axis=0) * wb + db * dark_slot
    acc = r * np.outer(alpha, beta)
    return AnalyticRates(singles_a, singles_b, true, pulse, pulse - true_pulses, acc)


def expected_table(src: SourceParams, alice: ArmParams, bob: ArmParams,
                   analyzer: AnalyzerMap | None, duration: float) -> CoincidenceTable:
    """Expected coincidence table (floating-point counts) for an acquisition.

    Dead time enters through the non-paralyzable live fraction ``1/(1+S*tau)``
    of each detector, treated as independent between the two parties; this
    is an approximation that ignores pulses with several clicks.
    """
    analyzer = analyzer or AnalyzerMap()
    rates = analytic_rates(src, alice, bob, analyzer)
    p = joint_distribution(src.state, alice.misalignment_rad, bob.misalignment_rad)
    wa = _window_fraction(alice.jitter_sigma, analyzer.slot_width)
    wb = _window_fraction(bob.jitter_sigma, analyzer.slot_width)
    live_a = 1 / (1 + rates.singles_a * alice.dead_time)
    live_b = 1 / (1 + rates.singles_b * bob.dead_time)
    per_s = (rates.coincidences * p * wa * wb + rates.accidentals) * live_a * live_b
    return CoincidenceTable(per_s * duration)


# -- Monte Carlo --------------------------------------------------------------

def _validate_run(src, alice, bob, analyzer, duration):
    src.validate()
    alice.validate("alice")
    bob.validate("bob")
    analyzer.validate(src.period)
    if not duration > 0:
        raise ConfigError(f"duration must be positive, got {duration}", "run.duration_s")
    n = int(math.floor(duration * src.rep_rate))
    if n - 1 > MAX_SYNC:
        raise ConfigError(f"{n} pulses overflow the 40-bit sync counter", "run.duration_s")
    return n


def block_rng(seed: int, stream_id: int, block: int) -> np.random.Generator:
    """Independent generator for one block of one link."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class _Raw:
    """Unfiltered, continuous-time events of one block for one party."""

    sync: np.ndarray
    offset: np.ndarray


class _BlockModel:
    def __init__(self, src, alice, bob, analyzer):
        self.src, self.alice, self.bob, self.analyzer = src, alice, bob, analyzer
        self.pa, self.pb = alice.transmission, bob.transmission
        p = joint_distribution(src.state, alice.misalignment_rad, bob.misalignment_rad)
        p = np.clip(p, 0, None)
        self.joint = (p / p.sum()).ravel()
        self.marg_a = self.joint.reshape(4, 4).sum(axis=1)
        self.marg_b = self.joint.reshape(4, 4).sum(axis=0)
        self.centers = analyzer.centers()
        self.period = src.period

    def generate(self, rng: np.random.Generator, start: int, n: int):
        mu, pa, pb, r = self.src.mu, self.pa, self.pb, self.src.rep_rate
        k_ab = rng.poisson(mu * pa * pb * n)
        k_a = rng.poisson(mu * pa * (1 - pb) * n)
        k_b = rng.poisson(mu * (1 - pa) * pb * n)
        k_da = rng.poisson(self.alice.dark_rate * n / r)
        k_db = rng.poisson(self.bob.dark_rate * n / r)

        sync_ab = start + rng.integers(0, n, size=k_ab)
        joint = rng.choice(16, size=k_ab, p=self.joint)
        sync_a = start + rng.integers(0, n, size=k_a)
        out_a = rng.choice(4, size=k_a, p=self.marg_a)
        sync_b = start + rng.integers(0, n, size=k_b)
        out_b = rng.choice(4, size=k_b, p=self.marg_b)
        sync_da = start + rng.integers(0, n, size=k_da)
        off_da = rng.uniform(0, self.period, size=k_da)
        sync_db = start + rng.integers(0, n, size=k_db)
        off_db = rng.uniform(0, self.period, size=k_db)

        oa = np.concatenate([joint // 4, out_a])
        ob = np.concatenate([joint % 4, out_b])
        ta = self.centers[oa] + rng.normal(0.0, 1.0, size=oa.size) * self.alice.jitter_sigma
        tb = self.centers[ob] + rng.normal(0.0, 1.0, size=ob.size) * self.bob.jitter_sigma
        a = _Raw(np.concatenate([sync_ab, sync_a, sync_da]), np.concatenate([ta, off_da]))
        b = _Raw(np.concatenate([sync_ab, sync_b, sync_db]), np.concatenate([tb, off_db]))
        return a, b


class _Detector:
    """Sorts, applies dead time (carried across blocks) and quantizes one party's events."""

    def __init__(self, dead_time: float, rep_rate: float, rate_millihz: int):
        self.dead_time = dead_time
        self.rep_rate = rep_rate
        self.last = -math.inf
        self.period = 1.0 / rep_rate
        self.max_units = -(-10**15 // (RESOLUTION_PS * rate_millihz)) - 1

    def process(self, raw: _Raw):
        off = np.clip(raw.offset, 0.0, np.nextafter(self.period, 0.0))
        order = np.lexsort((off, raw.sync))
        sync, off = raw.sync[order].astype(np.int64), off[order]
        if self.dead_time > 0 and sync.size:
            times = np.ascontiguousarray(sync / self.rep_rate + off)
            keep, self.last = kernels.dead_time_filter(times, self.dead_time, self.last)
            keep = np.asarray(keep, dtype=bool)
            sync, off = sync[keep], off[keep]
        units = np.minimum(np.floor(off / (RESOLUTION_PS * 1e-12)), self.max_units).astype(np.int64)
        return sync, units


def iter_blocks(src: SourceParams, alice: ArmParams, bob: ArmParams,
                analyzer: AnalyzerMap | None, duration: float, seed: int,
                stream_id: int = 0, block_pulses: int = DEFAULT_BLOCK_PULSES,
                workers: int = 1):
    """Yield the run as consecutive :class:`TagStream` chunks, one per pulse block."""
    analyzer = analyzer or AnalyzerMap()
    n_total = _validate_run(src, alice, bob, analyzer, duration)
    if block_pulses <= 0:
        raise ConfigError("block_pulses must be positive", "run.block_pulses")
    model = _BlockModel(src, alice, bob, analyzer)
    rate_millihz = int(round(src.rep_rate * 1000))
    det_a = _Detector(alice.dead_time, src.rep_rate, rate_millihz)
    det_b = _Detector(bob.dead_time, src.rep_rate, rate_millihz)
    n_blocks = -(-n_total // block_pulses)

    def gen(k):
        start = k * block_pulses
        return model.generate(block_rng(seed, stream_id, k), start, min(block_pulses, n_total - start))

    def finish(raw_pair):
        sa, ua = det_a.process(raw_pair[0])
        sb, ub = det_b.process(raw_pair[1])
        return TagStream.from_events(
            np.concatenate([sa, sb]), np.concatenate([ua, ub]),
            np.concatenate([np.zeros(sa.size, np.uint8), np.ones(sb.size, np.uint8)]),
            src.rep_rate,
        )

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            # generation is order-independent; dead-time filtering stays sequential
            for raw in pool.map(gen, range(n_blocks)):
                yield finish(raw)
    else:
        for k in range(n_blocks):
            yield finish(gen(k))


def simulate_run(src: SourceParams, alice: ArmParams, bob: ArmParams,
                 analyzer: AnalyzerMap | None = None, duration: float = 1.0, seed: int = 0,
                 stream_id: int = 0, block_pulses: int = DEFAULT_BLOCK_PULSES,
                 workers: int = 1) -> TagStream:
    """Simulate one link and return both parties' tags in a single sorted stream."""
    blocks = list(iter_blocks(src, alice, bob, analyzer, duration, seed, stream_id,
                              block_pulses, workers))
    if not blocks:
        return TagStream.empty(src.rep_rate)
    return TagStream.concatenate(blocks, assume_ordered=True)

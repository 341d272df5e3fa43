"""End-to-end scenario runs: plan -> route -> simulate -> analyze -> report."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import network
from .config import LinkPhysics, ScenarioConfig
from .errors import ConfigError, EstimateError, QKDNetError
from .grid import ChannelPlan, ConjugatePair, plan_channels
from .keyrate import FAIR_SAMPLING_CAVEAT, KeyRateReport, analyze, basis_counts, stability_series
from .network import LinkGrant, SwitchState
from .sim import analytic_rates, expected_table, iter_blocks
from .timetag import CoincidenceTable, Histogram2D, TagStream, histogram2d, write_tags

CAVEATS = (
    FAIR_SAMPLING_CAVEAT,
    "Pulses in which either party registered more than one in-slot click are dropped "
    "from the coincidence tables (see ambiguous_pulses).",
)


@dataclass
class LinkResult:
    pair: ConjugatePair
    user_a: str
    user_b: str
    physics: LinkPhysics
    analytic: KeyRateReport
    rates: object
    simulated: KeyRateReport | None = None
    table: CoincidenceTable | None = None
    series: list = field(default_factory=list)
    singles: tuple = (0, 0)
    pulse_coincidences: int = 0
    histogram: Histogram2D | None = None
    tags: TagStream | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        src, a, b = self.physics.source, self.physics.alice, self.physics.bob
        d = {
            "pair_id": self.pair.pair_id,
            "user_a": self.user_a,
            "user_b": self.user_b,
            "signal_nm": round(self.pair.signal.wavelength_nm, 4),
            "idler_nm": round(self.pair.idler.wavelength_nm, 4),
            "physics": {
                "mu": src.mu, "rep_rate_hz": src.rep_rate,
                "alice": {"loss_db": a.loss_db, "dark_rate_hz": a.dark_rate, "dead_time_s": a.dead_time,
                          "jitter_sigma_s": a.jitter_sigma, "misalignment_deg": a.misalignment_deg},
                "bob": {"loss_db": b.loss_db, "dark_rate_hz": b.dark_rate, "dead_time_s": b.dead_time,
                        "jitter_sigma_s": b.jitter_sigma, "misalignment_deg": b.misalignment_deg},
            },
            "analytic_rates": {
                "singles_a_hz": self.rates.singles_a, "singles_b_hz": self.rates.singles_b,
                "coincidences_hz": self.rates.coincidences,
                "pulse_coincidences_hz": self.rates.pulse_coincidences,
            },
            "analytic": self.analytic.to_dict(),
            "simulated": self.simulated.to_dict() if self.simulated else None,
            "counters": {
                "singles_a": int(self.singles[0]), "singles_b": int(self.singles[1]),
                "pulse_coincidences": int(self.pulse_coincidences),
                "ambiguous_pulses": int(self.table.ambiguous_pulses) if self.table else 0,
                "discarded_a": int(self.table.discarded_a) if self.table else 0,
                "discarded_b": int(self.table.discarded_b) if self.table else 0,
            },
            "qber_series": [w.to_dict() for w in self.series],
            "notes": list(self.notes),
        }
        return d


@dataclass
class RunReport:
    plan: ChannelPlan
    state: SwitchState
    links: list
    waitlisted: list
    seed: int
    duration_s: float
    config_path: str | None = None
    caveats: tuple = CAVEATS
    generated_at: str = ""

    def to_dict(self, include_timestamp: bool = True) -> dict:
        d = {
            "config": self.config_path,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "plan": {"n_pairs": len(self.plan), "spacing_ghz": self.plan.spacing_ghz,
                     "pump_thz": self.plan.pump.thz, "eps_ghz": self.plan.eps_ghz},
            "switch": self.state.to_dict(),
            "links": [l.to_dict() for l in self.links],
            "waitlisted": [{"user_a": w.user_a, "user_b": w.user_b} for w in self.waitlisted],
            "caveats": list(self.caveats),
        }
        if include_timestamp:
            d["generated_at"] = self.generated_at
        return d

    def to_json(self, include_timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(include_timestamp), indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def route(cfg: ScenarioConfig) -> tuple:
    """Plan channels, register users and request every configured link."""
    g = cfg.grid
    plan = plan_channels(g.pump, g.band_low, g.band_high, g.spacing_ghz, g.eps_ghz, g.strict_itu)
    state = network.new_state(plan)
    for u in cfg.users:
        state = network.register(state, u)
    grants, waitlisted = [], []
    for a, b in cfg.links:
        try:
            pref = cfg.preferences.get((a, b))
            policy = network.nearest_signal(pref) if pref else network.lowest_detuning
            state, result = network.connect(state, a, b, policy)
        except QKDNetError as exc:
            raise ConfigError(str(exc), f"network.links[{a}-{b}]") from exc
        (grants if isinstance(result, LinkGrant) else waitlisted).append(result)
    return plan, state, grants, waitlisted


def _simulate_link(res: LinkResult, cfg: ScenarioConfig, stream_id: int, keep_hist: bool,
                   keep_tags: bool):
    ph, run = res.physics, cfg.run
    counters = {"a": 0, "b": 0, "pulses": 0}
    hist = [None]
    tag_blocks = []

    def tap(blocks):
        for blk in blocks:
            counters["a"] += int(np.count_nonzero(blk.party == 0))
            counters["b"] += int(np.count_nonzero(blk.party == 1))
            sa = np.unique(blk.sync[blk.party == 0])
            sb = np.unique(blk.sync[blk.party == 1])
            counters["pulses"] += int(np.intersect1d(sa, sb, assume_unique=True).size)
            if keep_hist:
                h = histogram2d(blk, blk).counts
                hist[0] = h if hist[0] is None else hist[0] + h
            if keep_tags:
                tag_blocks.append(blk)
            yield blk

    blocks = iter_blocks(ph.source, ph.alice, ph.bob, ph.analyzer, run.duration_s, run.seed,
                         stream_id, run.block_pulses, run.workers)
    window = run.window_s or run.duration_s
    series = stability_series(tap(blocks), window, ph.analyzer, run.duration_s)
    total = CoincidenceTable()
    for w in series:
        total = total + w.table
    res.series = series
    res.table = total
    res.singles = (counters["a"], counters["b"])
    res.pulse_coincidences = counters["pulses"]
    if hist[0] is not None:
        res.histogram = Histogram2D(hist[0])
    if keep_tags and tag_blocks:
        res.tags = TagStream.concatenate(tag_blocks, assume_ordered=True)
    b = basis_counts(total)
    if b["n_h"] > 0 and b["n_d"] > 0:
        res.simulated = analyze(total, run.duration_s, run.f_ec)
    else:
        res.notes.append("no matched-basis coincidences in simulation; key rate undefined")


def run_link(cfg: ScenarioConfig, grant: LinkGrant, plan: ChannelPlan) -> LinkResult:
    ph = cfg.physics[(grant.user_a, grant.user_b)]
    where = f"link {grant.user_a}-{grant.user_b}"
    try:
        rates = analytic_rates(ph.source, ph.alice, ph.bob, ph.analyzer)
        exp = expected_table(ph.source, ph.alice, ph.bob, ph.analyzer, cfg.run.duration_s)
        try:
            analytic = analyze(exp, cfg.run.duration_s, cfg.run.f_ec)
        except EstimateError as exc:
            raise ConfigError(f"expected coincidences vanish: {exc}") from exc
        res = LinkResult(plan.pair(grant.pair_id), grant.user_a, grant.user_b, ph, analytic, rates)
        if cfg.run.simulate:
            _simulate_link(res, cfg, grant.pair_id, cfg.output.histogram, cfg.output.tags)
    except QKDNetError as exc:
        raise ConfigError(str(exc), where) from exc
    return res


def run_scenario(cfg: ScenarioConfig, jobs: int = 1) -> RunReport:
    """Run every granted link of a scenario.

    Each link simulates on its own random streams keyed by ``(seed, pair_id,
    block)``, so results do not depend on ``jobs`` or execution order.
    """
    plan, state, grants, waitlisted = route(cfg)
    if jobs > 1 and len(grants) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            links = list(pool.map(lambda g: run_link(cfg, g, plan), grants))
    else:
        links = [run_link(cfg, g, plan) for g in grants]
    links.sort(key=lambda l: l.pair.pair_id)
    return RunReport(plan, state, links, waitlisted, cfg.run.seed, cfg.run.duration_s,
                     cfg.source_path, CAVEATS,
                     datetime.now(timezone.utc).isoformat(timespec="seconds"))


def with_overrides(cfg: ScenarioConfig, seed=None, duration_s=None, simulate=None,
                   out_dir=None) -> ScenarioConfig:
    run = cfg.run
    if seed is not None:
        run = replace(run, seed=int(seed))
    if duration_s is not None:
        run = replace(run, duration_s=float(duration_s))
    if simulate is not None:
        run = replace(run, simulate=bool(simulate))
    out = cfg.output if out_dir is None else replace(cfg.output, out_dir=str(out_dir))
    return replace(cfg, run=run, output=out)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_outputs(report: RunReport, out_dir) -> list:
    """Write report.json plus CSV side outputs; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "report.json"
    p.write_text(report.to_json())
    written.append(p)
    p = out / "plan.csv"
    p.write_text(report.plan.to_csv())
    written.append(p)

    rows = []
    for l in report.links:
        sim = l.simulated
        an = l.analytic
        rows.append([
            l.pair.pair_id, l.user_a, l.user_b,
            round(l.pair.signal.wavelength_nm, 2), round(l.pair.idler.wavelength_nm, 2),
            *(_report_cells(sim) if sim else [""] * 8),
            an.sifted.value, an.secure.value, an.secure.sigma3,
        ])
    p = out / "links.csv"
    _write_csv(p, ["pair_id", "user_a", "user_b", "signal_nm", "idler_nm",
                   "sifted_bps", "sifted_3sigma", "e_h", "e_h_3sigma", "e_d", "e_d_3sigma",
                   "secure_bps", "secure_3sigma",
                   "analytic_sifted_bps", "analytic_secure_bps", "analytic_secure_3sigma"], rows)
    written.append(p)

    for l in report.links:
        if l.series:
            p = out / f"qber_series_pair{l.pair.pair_id}.csv"
            _write_csv(p, ["window", "start_s", "stop_s", "e_h", "sigma_h", "e_d", "sigma_d", "gap"],
                       [[w.index, w.start_s, w.stop_s,
                         *( [w.qber.e_h, w.qber.sigma_h, w.qber.e_d, w.qber.sigma_d] if w.qber else [""] * 4),
                         int(w.gap)] for w in l.series])
            written.append(p)
        if l.histogram is not None:
            p = out / f"histogram_pair{l.pair.pair_id}.csv"
            p.write_text(l.histogram.to_csv())
            written.append(p)
        if l.tags is not None:
            p = out / f"tags_pair{l.pair.pair_id}.qtt"
            write_tags(p, l.tags)
            written.append(p)
    return written


def _report_cells(r: KeyRateReport) -> list:
    q = r.qber
    return [r.sifted.value, r.sifted.sigma3, q.e_h, 3 * q.sigma_h, q.e_d, 3 * q.sigma_d,
            r.secure.value, r.secure.sigma3]

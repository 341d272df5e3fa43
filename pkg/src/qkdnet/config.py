"""Scenario configuration files (INI syntax) and their validation.

See FORMATS.md for the full key reference. Sections ``[source]``,
``[alice]``, ``[bob]``, ``[analyzer]`` hold default link physics; a
``[link <a>-<b>]`` section overrides them for one link with dotted keys such
as ``source.mu`` or ``bob.loss_db``. ``alice`` is the signal side of a link
(its first user) and ``bob`` the idler side.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, QKDNetError
from .grid import SPACINGS_GHZ, Frequency, band_from_nm, wavelength_to_frequency
from .sim import DEFAULT_BLOCK_PULSES, DEFAULT_REP_RATE, ArmParams, SourceParams
from .states import (TwoQubitState, load_state, make_colored_noise_state, make_psi_plus,
                     make_werner_state)
from .timetag import AnalyzerMap

DEFAULT_BAND_NM = (1510.0, 1600.0)


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class GridConfig:
    pump: Frequency
    band_low: Frequency
    band_high: Frequency
    spacing_ghz: int = 200
    eps_ghz: float | None = None
    strict_itu: bool = False


@dataclass(frozen=True)
class LinkPhysics:
    source: SourceParams
    alice: ArmParams
    bob: ArmParams
    analyzer: AnalyzerMap = field(default_factory=AnalyzerMap)


@dataclass(frozen=True)
class RunConfig:
    duration_s: float = 500.0
    seed: int = 0
    window_s: float | None = None
    block_pulses: int = DEFAULT_BLOCK_PULSES
    f_ec: float = 1.2
    simulate: bool = True
    workers: int = 1


@dataclass(frozen=True)
class OutputConfig:
    out_dir: str | None = None
    histogram: bool = True
    tags: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    grid: GridConfig
    users: tuple
    links: tuple  # ((user_a, user_b), ...) in request order
    physics: dict  # (user_a, user_b) -> LinkPhysics
    run: RunConfig
    preferences: dict = field(default_factory=dict)  # (user_a, user_b) -> signal_nm
    output: OutputConfig = field(default_factory=OutputConfig)
    source_path: str | None = None


class _Reader:
    """Typed access to a ConfigParser that records problems instead of raising."""

    def __init__(self, parser: configparser.ConfigParser, diagnostics: list):
        self.p = parser
        self.diag = diagnostics

    def raw(self, section, key, overrides=None, prefix=None):
        if overrides is not None and prefix is not None and f"{prefix}.{key}" in overrides:
            return overrides[f"{prefix}.{key}"]
        if self.p.has_option(section, key):
            return self.p.get(section, key)
        return None

    def bad(self, path, message):
        self.diag.append(Diagnostic(path, message))

    def number(self, section, key, default, cast=float, check=None, what="", overrides=None,
               prefix=None, path=None):
        path = path or f"{section}.{key}"
        text = self.raw(section, key, overrides, prefix)
        if text is None:
            return default
        try:
            if cast is int:
                try:
                    value = int(text.strip())
                except ValueError:
                    value = float(text)
                    if not value.is_integer():
                        raise
                    value = int(value)
            else:
                value = cast(text)
        except ValueError:
            self.bad(path, f"not a number: {text!r}")
            return default
        if check is not None and not check(value):
            self.bad(path, f"{what} (got {text.strip()})")
            return default
        return value

    def boolean(self, section, key, default):
        text = self.raw(section, key)
        if text is None:
            return default
        t = text.strip().lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        self.bad(f"{section}.{key}", f"not a boolean: {text!r}")
        return default


def read_parser(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc), str(path)) from exc
    return parser


def _parse_band(r: _Reader, text: str):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        r.bad("grid.band_nm", f"expected '<low>:<high>' in nm, got {text!r}")
        return None
    if not (0 < lo < hi):
        r.bad("grid.band_nm", f"band edges must satisfy 0 < low < high, got {text!r}")
        return None
    return lo, hi


def _grid(r: _Reader) -> GridConfig | None:
    pump_nm = r.number("grid", "pump_nm", 777.45, check=lambda v: v > 0, what="must be positive")
    band = DEFAULT_BAND_NM
    text = r.raw("grid", "band_nm")
    if text is not None:
        band = _parse_band(r, text) or DEFAULT_BAND_NM
    spacing = r.number("grid", "spacing_ghz", 200, cast=int, check=lambda v: v in SPACINGS_GHZ,
                       what=f"channel spacing must be one of {SPACINGS_GHZ} GHz")
    eps = r.number("grid", "eps_ghz", None, check=lambda v: v >= 0, what="must be non-negative")
    strict = r.boolean("grid", "strict_itu", False)
    lo, hi = band_from_nm(*band)
    return GridConfig(wavelength_to_frequency(pump_nm), lo, hi, spacing, eps, strict)


def _state(r: _Reader, overrides, base_dir: Path, where: str) -> TwoQubitState:
    kind = (r.raw("source", "state", overrides, "source") or "colored").strip().lower()
    try:
        if kind in ("colored", "colored_noise"):
            v = r.number("source", "visibility", 1.0, check=lambda v: 0 <= v <= 1,
                         what="visibility must lie in [0, 1]", overrides=overrides, prefix="source",
                         path=f"{where}.visibility")
            return make_colored_noise_state(v)
        if kind == "werner":
            p = r.number("source", "werner_p", 1.0, check=lambda v: 0 <= v <= 1,
                         what="Werner weight must lie in [0, 1]", overrides=overrides,
                         prefix="source", path=f"{where}.werner_p")
            return make_werner_state(p)
        if kind in ("psi_plus", "psi+"):
            return make_psi_plus()
        if kind == "file":
            name = r.raw("source", "state_file", overrides, "source")
            if name is None:
                r.bad(f"{where}.state_file", "state = file requires state_file")
                return make_psi_plus()
            return load_state(base_dir / name.strip())
    except (QKDNetError, OSError) as exc:
        r.bad(f"{where}.state", str(exc))
        return make_psi_plus()
    r.bad(f"{where}.state", f"unknown state model {kind!r} (colored, werner, psi_plus, file)")
    return make_psi_plus()


def _nonneg(v):
    return v >= 0


def _arm(r: _Reader, section: str, overrides, where: str) -> ArmParams:
    kw = dict(overrides=overrides, prefix=section)
    loss = r.number(section, "loss_db", None, check=_nonneg, what="must be non-negative",
                    path=f"{where}.loss_db", **kw)
    if loss is None:
        if r.raw(section, "loss_db", overrides, section) is None:
            r.bad(f"{where}.loss_db", "missing required key")
        loss = 0.0
    return ArmParams(
        loss_db=loss,
        dark_rate=r.number(section, "dark_rate_hz", 0.0, check=_nonneg, what="must be non-negative",
                           path=f"{where}.dark_rate_hz", **kw),
        dead_time=r.number(section, "dead_time_s", 0.0, check=_nonneg, what="must be non-negative",
                           path=f"{where}.dead_time_s", **kw),
        jitter_sigma=r.number(section, "jitter_sigma_s", 100e-12, check=_nonneg,
                              what="must be non-negative", path=f"{where}.jitter_sigma_s", **kw),
        misalignment_deg=r.number(section, "misalignment_deg", 0.0, path=f"{where}.misalignment_deg",
                                  **kw),
    )


def _analyzer(r: _Reader, overrides, where: str, period: float) -> AnalyzerMap:
    kw = dict(overrides=overrides, prefix="analyzer")
    offsets = AnalyzerMap().offsets
    text = r.raw("analyzer", "offsets_ns", overrides, "analyzer")
    if text is not None:
        try:
            offsets = tuple(float(x) * 1e-9 for x in text.split(","))
        except ValueError:
            r.bad(f"{where}.offsets_ns", f"expected comma-separated numbers, got {text!r}")
    width = r.number("analyzer", "slot_width_ns", 1.0, check=lambda v: v > 0, what="must be positive",
                     path=f"{where}.slot_width_ns", **kw) * 1e-9
    delay = r.number("analyzer", "delay_ns", 1.0, path=f"{where}.delay_ns", **kw) * 1e-9
    amap = AnalyzerMap(offsets, width, delay)
    try:
        amap.validate(period)
    except ConfigError as exc:
        r.bad(f"{where}", str(exc))
        return AnalyzerMap()
    return amap


def _physics(r: _Reader, overrides: dict, where: str, base_dir: Path) -> LinkPhysics:
    kw = dict(overrides=overrides, prefix="source")
    mu = r.number("source", "mu", None, check=_nonneg, what="must be non-negative",
                  path=f"{where}source.mu", **kw)
    if mu is None:
        if r.raw("source", "mu", overrides, "source") is None:
            r.bad(f"{where}source.mu", "missing required key")
        mu = 0.0
    rate = r.number("source", "rep_rate_hz", DEFAULT_REP_RATE, check=lambda v: v > 0,
                    what="must be positive", path=f"{where}source.rep_rate_hz", **kw)
    state = _state(r, overrides, base_dir, f"{where}source")
    src = SourceParams(mu, rate, state)
    return LinkPhysics(src, _arm(r, "alice", overrides, f"{where}alice"),
                       _arm(r, "bob", overrides, f"{where}bob"),
                       _analyzer(r, overrides, f"{where}analyzer", 1 / rate))


def _split_list(text):
    return [t.strip() for t in (text or "").replace("\n", ",").split(",") if t.strip()]


def parse(parser: configparser.ConfigParser, base_dir=".", source_path=None):
    """Return ``(ScenarioConfig | None, diagnostics)``."""
    diag: list = []
    r = _Reader(parser, diag)
    base_dir = Path(base_dir)
    grid = _grid(r)

    users = _split_list(r.raw("network", "users"))
    links = []
    for item in _split_list(r.raw("network", "links")):
        parts = item.split("-")
        if len(parts) != 2 or not all(parts):
            diag.append(Diagnostic("network.links", f"link {item!r} must look like 'a-b'"))
            continue
        links.append((parts[0], parts[1]))
    if len(set(users)) != len(users):
        diag.append(Diagnostic("network.users", "duplicate user names"))
    for a, b in links:
        for u in (a, b):
            if u not in users:
                diag.append(Diagnostic("network.links", f"link {a}-{b} names unknown user {u!r}"))
        if a == b:
            diag.append(Diagnostic("network.links", f"link {a}-{b} connects a user to itself"))
    if not users and parser.has_section("source"):
        # plain simulation config: a single implicit link
        users, links = ["alice", "bob"], [("alice", "bob")]

    physics = {}
    preferences = {}
    link_sections = {}
    for sec in parser.sections():
        if sec.startswith("link "):
            name = sec[5:].strip()
            link_sections[tuple(name.split("-", 1))] = sec
    for key in link_sections:
        if key not in links:
            diag.append(Diagnostic(f"[{link_sections[key]}]", "section names a link that is not requested"))
    if links and not parser.has_section("source") and not link_sections:
        diag.append(Diagnostic("source", "no link physics given"))
    for a, b in links:
        sec = link_sections.get((a, b))
        overrides = dict(parser.items(sec)) if sec else {}
        where = f"link {a}-{b}: " if sec else ""
        physics[(a, b)] = _physics(r, overrides, where, base_dir)
        if "signal_nm" in overrides:
            nm = r.number(sec, "signal_nm", None, check=lambda v: v > 0, what="must be positive")
            if nm is not None:
                preferences[(a, b)] = nm

    run = RunConfig(
        duration_s=r.number("run", "duration_s", 500.0, check=lambda v: v > 0, what="must be positive"),
        seed=r.number("run", "seed", 0, cast=int, check=_nonneg, what="must be a non-negative integer"),
        window_s=r.number("run", "window_s", None, check=lambda v: v > 0, what="must be positive"),
        block_pulses=r.number("run", "block_pulses", DEFAULT_BLOCK_PULSES, cast=int,
                              check=lambda v: v > 0, what="must be positive"),
        f_ec=r.number("run", "f_ec", 1.2, check=lambda v: v >= 1, what="must be >= 1"),
        simulate=r.boolean("run", "simulate", True),
        workers=r.number("run", "workers", 1, cast=int, check=lambda v: v >= 1, what="must be >= 1"),
    )
    output = OutputConfig(
        out_dir=r.raw("output", "out_dir"),
        histogram=r.boolean("output", "histogram", True),
        tags=r.boolean("output", "tags", False),
    )
    if diag:
        return None, diag
    return ScenarioConfig(grid, tuple(users), tuple(links), physics, run, preferences, output,
                          source_path), diag


def validate(path) -> list:
    """All diagnostics for a config file, without running anything."""
    try:
        parser = read_parser(path)
    except ConfigError as exc:
        return [Diagnostic(str(path), str(exc))]
    return parse(parser, Path(path).parent, str(path))[1]


def load(path) -> ScenarioConfig:
    parser = read_parser(path)
    cfg, diag = parse(parser, Path(path).parent, str(path))
    if diag:
        raise ConfigError("; ".join(str(d) for d in diag), str(path))
    return cfg


def bundled(name: str) -> Path:
    """Path of a configuration shipped with the package (e.g. ``table1_col1.cfg``)."""
    path = Path(__file__).parent / "data" / name
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


def bundled_names() -> list:
    return sorted(p.name for p in (Path(__file__).parent / "data").glob("*.cfg"))

"""Command-line interface: ``qkdnet <command> ...``.

Exit status is 0 on success, 1 when input is rejected (bad arguments,
invalid configuration, refused switch request) and 2 on runtime failure
(I/O, corrupt files, undefined estimates).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, config, network, scenario
from .errors import (ConfigError, DomainError, QKDNetError, RequestError, StateError,
                     ValidationError)
from .grid import SPACINGS_GHZ, band_from_nm, plan_channels, wavelength_to_frequency
from .keyrate import (ImprovementScenario, KeyRateReport, analyze, project_scenario,
                      stability_series)
from .network import SwitchState
from .sim import iter_blocks
from .states import load_state, make_colored_noise_state, make_werner_state, state_metrics
from .timetag import (PARTY_A, PARTY_B, AnalyzerMap, TagStream, coincidence_table,
                      histogram2d, read_tags, write_tags)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
_INVALID = (ConfigError, ValidationError, DomainError, RequestError, StateError)

DEFAULT_STATE_FILE = "qkdnet-state.json"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input validation failures, not runtime errors
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _band(text: str) -> tuple:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <low>:<high> in nm, got {text!r}")
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"band edges must satisfy 0 < low < high, got {text!r}")
    return lo, hi


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _emit(obj):
    print(json.dumps(obj, indent=2, default=scenario._json_default))


def _plan_args(p):
    p.add_argument("--pump-nm", type=float, default=777.45, help="pump wavelength (default 777.45)")
    p.add_argument("--band-nm", type=_band, default=(1510.0, 1600.0), metavar="LO:HI",
                   help="usable band in nm (default 1510:1600)")
    p.add_argument("--spacing-ghz", type=int, choices=SPACINGS_GHZ, default=200)
    p.add_argument("--eps-ghz", type=float, default=None,
                   help="conjugacy tolerance (default: half the spacing)")
    p.add_argument("--strict-itu", action="store_true",
                   help="drop channels outside the ITU C+L range")


def _make_plan(args):
    lo, hi = band_from_nm(*args.band_nm)
    return plan_channels(wavelength_to_frequency(args.pump_nm), lo, hi, args.spacing_ghz,
                         args.eps_ghz, args.strict_itu)


# -- grid --------------------------------------------------------------------

def cmd_grid_plan(args) -> int:
    plan = _make_plan(args)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.csv").write_text(plan.to_csv())
        (out / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2))
        print(f"wrote {len(plan)} pairs to {out}/plan.csv and plan.json")
    elif args.format == "json":
        _emit(plan.to_dict())
    else:
        sys.stdout.write(plan.to_csv())
    return EXIT_OK


# -- net ---------------------------------------------------------------------

def _load_switch(args, create: bool) -> SwitchState:
    path = Path(args.state)
    if path.exists():
        return SwitchState.from_json(path.read_text())
    if not create:
        raise StateError(f"no switch state at {path}; register a user first")
    return network.new_state(_make_plan(args))


def _save_switch(args, state: SwitchState):
    path = Path(args.state)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(state.to_json())
    tmp.replace(path)


def cmd_net(args) -> int:
    if args.net_cmd == "register":
        state = network.register(_load_switch(args, create=True), args.name)
        _save_switch(args, state)
        _emit({"registered": args.name, "users": [u.id for u in state.users]})
    elif args.net_cmd == "connect":
        state, result = network.connect(_load_switch(args, create=False), args.a, args.b)
        _save_switch(args, state)
        if isinstance(result, network.LinkGrant):
            _emit({"granted": {"pair_id": result.pair_id, "user_a": result.user_a,
                               "user_b": result.user_b, "signal_nm": round(result.signal_nm, 4),
                               "idler_nm": round(result.idler_nm, 4)}})
        else:
            _emit({"waitlisted": {"user_a": result.user_a, "user_b": result.user_b,
                                  "position": result.position}})
    elif args.net_cmd == "disconnect":
        state = network.disconnect(_load_switch(args, create=False), args.pair_id)
        _save_switch(args, state)
        _emit({"released": args.pair_id, "links": len(state.links),
               "waitlist_depth": len(state.waitlist)})
    else:
        st = network.status(_load_switch(args, create=False))
        if not args.full:
            st.pop("state")
        _emit(st)
    return EXIT_OK


# -- state -------------------------------------------------------------------

def cmd_state_metrics(args) -> int:
    if args.file:
        state = load_state(args.file)
    elif args.werner_p is not None:
        state = make_werner_state(args.werner_p)
    else:
        state = make_colored_noise_state(args.visibility)
    _emit(state_metrics(state))
    return EXIT_OK


# -- sim ---------------------------------------------------------------------

def _pick_link(cfg, name):
    if name is None:
        return cfg.links[0]
    a, _, b = name.partition("-")
    if (a, b) not in cfg.physics:
        raise ConfigError(f"no link {name!r} in config", cfg.source_path)
    return a, b


def cmd_sim_run(args) -> int:
    cfg = scenario.with_overrides(config.load(args.config), seed=args.seed,
                                  duration_s=args.duration)
    key = _pick_link(cfg, args.link)
    ph = cfg.physics[key]
    run = cfg.run
    blocks = list(iter_blocks(ph.source, ph.alice, ph.bob, ph.analyzer, run.duration_s, run.seed,
                              args.stream_id, run.block_pulses, run.workers))
    tags = (TagStream.concatenate(blocks, assume_ordered=True) if blocks
            else TagStream.empty(ph.source.rep_rate))
    write_tags(args.out, tags)
    _emit({"out": str(args.out), "events": len(tags),
           "events_a": int((tags.party == PARTY_A).sum()),
           "events_b": int((tags.party == PARTY_B).sum()),
           "duration_s": run.duration_s, "seed": run.seed, "link": "-".join(key)})
    return EXIT_OK


# -- keys --------------------------------------------------------------------

def _analyzer_from(args) -> AnalyzerMap:
    if getattr(args, "config", None):
        cfg = config.load(args.config)
        return cfg.physics[cfg.links[0]].analyzer
    return AnalyzerMap()


def _streams(args):
    a = read_tags(args.a)
    b = a if args.b is None or args.b == args.a else read_tags(args.b)
    return a, b


def cmd_keys_analyze(args) -> int:
    a, b = _streams(args)
    table = coincidence_table(a, b, _analyzer_from(args))
    report = analyze(table, args.t_acq, args.f_ec)
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2,
                                             default=scenario._json_default))
    if args.json:
        _emit(report.to_dict())
    else:
        print(report.format_table())
        print(f"ambiguous pulses dropped: {table.ambiguous_pulses}; "
              f"out-of-slot events: A {table.discarded_a}, B {table.discarded_b}")
    return EXIT_OK


def cmd_keys_histogram(args) -> int:
    a, b = _streams(args)
    h = histogram2d(a, b)
    text = h.to_csv(nonzero_only=args.nonzero)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} ({h.total} pulse pairs)")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_keys_stability(args) -> int:
    tags = read_tags(args.a)
    series = stability_series(tags, args.window, _analyzer_from(args), args.duration)
    _emit([w.to_dict() for w in series])
    return EXIT_OK


# -- scenario ----------------------------------------------------------------

def _base_reports(path) -> list:
    doc = json.loads(Path(path).read_text())
    if "links" in doc:  # run report
        out = []
        for link in doc["links"]:
            d = link.get("simulated") or link["analytic"]
            out.append((f"pair {link['pair_id']}", KeyRateReport.from_dict(d)))
        return out
    return [("base", KeyRateReport.from_dict(doc))]


def cmd_scenario_improve(args) -> int:
    scen = ImprovementScenario.from_names(args.factors.split(","), args.channels)
    if args.base_rate is not None:
        bases = [("base", args.base_rate)]
    elif args.base:
        bases = _base_reports(args.base)
    else:
        raise ConfigError("give --base <report.json> or --base-rate <bits/s>")
    rows = []
    for name, base in bases:
        p = project_scenario(base, scen)
        rows.append({"source": name, **p.to_dict()})
    _emit(rows)
    return EXIT_OK


# -- run ---------------------------------------------------------------------

def _config_path(text: str) -> Path:
    p = Path(text)
    if not p.exists() and text in config.bundled_names():
        return config.bundled(text)
    return p


def cmd_run(args) -> int:
    path = _config_path(args.config)
    diags = config.validate(path)
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return EXIT_INVALID
    if args.validate_only:
        print(f"{path}: ok")
        return EXIT_OK
    cfg = scenario.with_overrides(config.load(path), seed=args.seed, duration_s=args.duration,
                                  simulate=False if args.no_sim else None, out_dir=args.out_dir)
    report = scenario.run_scenario(cfg, jobs=args.jobs)
    out_dir = cfg.output.out_dir
    if out_dir:
        for p in scenario.write_outputs(report, out_dir):
            print(f"wrote {p}")
    else:
        print(report.to_json())
    for link in report.links:
        title = f"pair {link.pair.pair_id} ({link.user_a}-{link.user_b})"
        best = link.simulated or link.analytic
        kind = "simulated" if link.simulated else "analytic"
        print(best.format_table(f"{title}, {kind}"), file=sys.stderr)
    for w in report.waitlisted:
        print(f"waitlisted: {w.user_a}-{w.user_b}", file=sys.stderr)
    return EXIT_OK


def cmd_configs(args) -> int:
    for name in config.bundled_names():
        print(name)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkdnet", description="Entanglement-distribution QKD network toolkit.")
    parser.add_argument("--version", action="version", version=f"qkdnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("grid", help="DWDM channel planning").add_subparsers(
        dest="grid_cmd", required=True, parser_class=_Parser)
    p = g.add_parser("plan", help="list conjugate channel pairs")
    _plan_args(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out-dir", help="write plan.csv and plan.json here")
    p.set_defaults(func=cmd_grid_plan)

    n = sub.add_parser("net", help="switch allocation").add_subparsers(
        dest="net_cmd", required=True, parser_class=_Parser)
    for name, hlp in (("register", "add a user"), ("connect", "request a link"),
                      ("disconnect", "release a pair"), ("status", "show links")):
        p = n.add_parser(name, help=hlp)
        p.add_argument("--state", default=DEFAULT_STATE_FILE, help="switch-state JSON file")
        p.set_defaults(func=cmd_net)
        if name == "register":
            p.add_argument("name")
            _plan_args(p)
        elif name == "connect":
            p.add_argument("a")
            p.add_argument("b")
        elif name == "disconnect":
            p.add_argument("pair_id", type=int)
        else:
            p.add_argument("--full", action="store_true", help="include the full state document")

    s = sub.add_parser("state", help="two-qubit state metrics").add_subparsers(
        dest="state_cmd", required=True, parser_class=_Parser)
    p = s.add_parser("metrics")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--file", help="4x4 density matrix file")
    grp.add_argument("--visibility", type=float, default=1.0, help="colored-noise visibility")
    grp.add_argument("--werner-p", type=float, default=None)
    p.set_defaults(func=cmd_state_metrics)

    m = sub.add_parser("sim", help="Monte Carlo time tags").add_subparsers(
        dest="sim_cmd", required=True, parser_class=_Parser)
    p = m.add_parser("run")
    p.add_argument("--config", required=True, type=_config_path)
    p.add_argument("--out", required=True, help="output .qtt file")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--duration", type=float)
    p.add_argument("--link", help="link 'a-b' to simulate (default: first)")
    p.add_argument("--stream-id", type=int, default=0)
    p.set_defaults(func=cmd_sim_run)

    k = sub.add_parser("keys", help="key-rate analysis of time tags").add_subparsers(
        dest="keys_cmd", required=True, parser_class=_Parser)
    p = k.add_parser("analyze")
    p.add_argument("--a", required=True, help="tag file holding Alice's events")
    p.add_argument("--b", help="tag file holding Bob's events (default: same as --a)")
    p.add_argument("--t-acq", type=float, required=True, help="acquisition time in seconds")
    p.add_argument("--f-ec", type=float, default=1.2)
    p.add_argument("--config", type=_config_path, help="take the analyzer map from this config")
    p.add_argument("--json", action="store_true", help="print JSON instead of the table")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_keys_analyze)
    p = k.add_parser("histogram")
    p.add_argument("--a", required=True)
    p.add_argument("--b")
    p.add_argument("--out")
    p.add_argument("--nonzero", action="store_true", help="omit empty bins")
    p.set_defaults(func=cmd_keys_histogram)
    p = k.add_parser("stability")
    p.add_argument("--a", required=True, help="tag file holding both parties")
    p.add_argument("--window", type=float, default=500.0)
    p.add_argument("--duration", type=float)
    p.add_argument("--config", type=_config_path)
    p.set_defaults(func=cmd_keys_stability)

    c = sub.add_parser("scenario", help="rate projections").add_subparsers(
        dest="scenario_cmd", required=True, parser_class=_Parser)
    p = c.add_parser("improve")
    p.add_argument("--base", help="key-rate or run report JSON")
    p.add_argument("--base-rate", type=float, help="secure rate in bits/s")
    p.add_argument("--factors", default="dual,splice,eff,rep")
    p.add_argument("--channels", type=int, default=1)
    p.set_defaults(func=cmd_scenario_improve)

    p = sub.add_parser("run", help="end-to-end scenario from a config file")
    p.add_argument("--config", required=True, help="config file or bundled config name")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--duration", type=float)
    p.add_argument("--out-dir")
    p.add_argument("--jobs", type=int, default=1, help="links simulated concurrently")
    p.add_argument("--no-sim", action="store_true", help="analytic expectations only")
    p.add_argument("--validate-only", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("configs", help="list bundled configs")
    p.set_defaults(func=cmd_configs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (QKDNetError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

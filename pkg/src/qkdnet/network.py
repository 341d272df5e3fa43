"""User registry and wavelength-selective-switch allocation.

State transitions are pure functions returning a new :class:`SwitchState`;
callers that share a state must serialize updates themselves. Times are a
logical clock that advances by one on every successful transition unless an
explicit ``now`` is supplied.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable

from .errors import RequestError, BusyError, StateError
from .grid import ChannelPlan, ConjugatePair

SCHEMA = "qkdnet.switch-state"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class User:
    id: str
    name: str


@dataclass(frozen=True)
class Link:
    pair_id: int
    user_a: str
    user_b: str
    established_at: float


@dataclass(frozen=True)
class LinkGrant:
    """Signal channel routed to ``user_a``'s port, idler channel to ``user_b``'s."""

    pair_id: int
    user_a: str
    user_b: str
    signal_nm: float
    idler_nm: float


@dataclass(frozen=True)
class Waitlisted:
    user_a: str
    user_b: str
    position: int


def lowest_detuning(free: list) -> ConjugatePair:
    """Default assignment policy: the free pair closest to degeneracy."""
    return min(free, key=lambda p: (p.detuning_ghz, p.pair_id))


def nearest_signal(wavelength_nm: float) -> Callable:
    """Policy preferring the free pair whose signal channel is closest to ``wavelength_nm``."""
    def policy(free: list) -> ConjugatePair:
        return min(free, key=lambda p: (abs(p.signal.wavelength_nm - wavelength_nm), p.pair_id))
    return policy


@dataclass(frozen=True)
class SwitchState:
    plan: ChannelPlan
    users: tuple = ()
    links: tuple = ()
    waitlist: tuple = ()
    clock: float = 0

    @property
    def free_pairs(self) -> tuple:
        used = {l.pair_id for l in self.links}
        return tuple(p for p in self.plan.pair_ids if p not in used)

    def user(self, uid: str) -> User:
        for u in self.users:
            if u.id == uid:
                return u
        raise RequestError(f"unknown user {uid!r}")

    def link_of(self, uid: str):
        for l in self.links:
            if uid in (l.user_a, l.user_b):
                return l
        return None

    def check_invariants(self):
        seen_users, seen_pairs = set(), set()
        valid = set(self.plan.pair_ids)
        for l in self.links:
            if l.pair_id in seen_pairs or l.pair_id not in valid:
                raise StateError(f"pair {l.pair_id} double-granted or unknown")
            for u in (l.user_a, l.user_b):
                if u in seen_users:
                    raise StateError(f"user {u!r} holds more than one link")
                seen_users.add(u)
            seen_pairs.add(l.pair_id)
        if len({u.id for u in self.users}) != len(self.users):
            raise StateError("duplicate user ids")

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "version": SCHEMA_VERSION,
            "clock": self.clock,
            "plan": self.plan.to_dict(),
            "users": [{"id": u.id, "name": u.name} for u in self.users],
            "links": [{"pair_id": l.pair_id, "user_a": l.user_a, "user_b": l.user_b,
                       "established_at": l.established_at} for l in self.links],
            "free_pairs": list(self.free_pairs),
            "waitlist": [{"user_a": a, "user_b": b} for a, b in self.waitlist],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchState":
        if d.get("schema", SCHEMA) != SCHEMA:
            raise StateError(f"not a switch-state document: {d.get('schema')!r}")
        if int(d.get("version", 1)) > SCHEMA_VERSION:
            raise StateError(f"switch-state version {d['version']} is newer than supported")
        state = cls(
            ChannelPlan.from_dict(d["plan"]),
            tuple(User(u["id"], u.get("name", u["id"])) for u in d.get("users", [])),
            tuple(Link(int(l["pair_id"]), l["user_a"], l["user_b"], l.get("established_at", 0))
                  for l in d.get("links", [])),
            tuple((w["user_a"], w["user_b"]) for w in d.get("waitlist", [])),
            d.get("clock", 0),
        )
        state.check_invariants()
        return state

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SwitchState":
        return cls.from_dict(json.loads(text))


def new_state(plan: ChannelPlan) -> SwitchState:
    return SwitchState(plan)


def register(state: SwitchState, user_id: str, name: str | None = None) -> SwitchState:
    if not user_id:
        raise RequestError("user id must be non-empty")
    if any(u.id == user_id for u in state.users):
        raise RequestError(f"user {user_id!r} is already registered")
    return replace(state, users=state.users + (User(user_id, name or user_id),))


def _tick(state, now):
    return state.clock + 1 if now is None else now


def _grant(state: SwitchState, a: str, b: str, policy, now) -> tuple:
    free = [state.plan.pair(p) for p in state.free_pairs]
    pair = policy(free)
    t = _tick(state, now)
    links = tuple(sorted(state.links + (Link(pair.pair_id, a, b, t),), key=lambda l: l.pair_id))
    grant = LinkGrant(pair.pair_id, a, b, pair.signal.wavelength_nm, pair.idler.wavelength_nm)
    return replace(state, links=links, clock=t), grant


def connect(state: SwitchState, a: str, b: str, policy: Callable = lowest_detuning,
            now: float | None = None) -> tuple:
    """Request an entangled link between users ``a`` and ``b``.

    Returns ``(new_state, LinkGrant)`` when a pair is free, otherwise
    ``(new_state, Waitlisted)`` with the request queued.
    """
    if a == b:
        raise RequestError(f"user {a!r} cannot link to itself")
    state.user(a)
    state.user(b)
    for u in (a, b):
        if state.link_of(u) is not None:
            raise BusyError(f"user {u!r} already holds a link")
    if state.free_pairs:
        return _grant(state, a, b, policy, now)
    for pos, (x, y) in enumerate(state.waitlist):
        if {x, y} == {a, b}:
            return state, Waitlisted(x, y, pos)
    wl = state.waitlist + ((a, b),)
    return replace(state, waitlist=wl), Waitlisted(a, b, len(wl) - 1)


def _drain_waitlist(state: SwitchState, policy, now) -> SwitchState:
    """Grant queued requests in FIFO order, skipping any whose users are busy."""
    progress = True
    while progress and state.free_pairs and state.waitlist:
        progress = False
        for i, (a, b) in enumerate(state.waitlist):
            if state.link_of(a) is None and state.link_of(b) is None:
                state = replace(state, waitlist=state.waitlist[:i] + state.waitlist[i + 1:])
                state, _ = _grant(state, a, b, policy, now)
                progress = True
                break
    return state


def disconnect(state: SwitchState, pair_id: int, policy: Callable = lowest_detuning,
               now: float | None = None) -> SwitchState:
    """Release ``pair_id`` and hand it to the first eligible waitlisted request."""
    remaining = tuple(l for l in state.links if l.pair_id != pair_id)
    if len(remaining) == len(state.links):
        raise StateError(f"pair {pair_id} is not active")
    state = replace(state, links=remaining, clock=_tick(state, now))
    return _drain_waitlist(state, policy, now)


def status(state: SwitchState) -> dict:
    return {
        "links": [{"pair_id": l.pair_id, "user_a": l.user_a, "user_b": l.user_b,
                   "established_at": l.established_at} for l in state.links],
        "free_pairs": list(state.free_pairs),
        "n_links": len(state.links),
        "n_free": len(state.free_pairs),
        "waitlist_depth": len(state.waitlist),
        "state": state.to_dict(),
    }


def apply(state: SwitchState, op: dict) -> SwitchState:
    """Apply one logged operation (``{"op": "register"|"connect"|"disconnect", ...}``)."""
    kind = op["op"]
    if kind == "register":
        return register(state, op["user"], op.get("name"))
    if kind == "connect":
        return connect(state, op["a"], op["b"])[0]
    if kind == "disconnect":
        return disconnect(state, int(op["pair_id"]))
    raise RequestError(f"unknown operation {kind!r}")


def replay(state: SwitchState, ops) -> SwitchState:
    for op in ops:
        state = apply(state, op)
    return state

"""Deterministic simulator for op-based and state-based replicated executions.

Configurations are immutable; every step returns a new one. A replica keeps a
single set ``L`` of labels it has seen, across all objects, so a multi-object
run is the product of its objects and visibility can cross object borders.
Causal delivery is enforced per object only.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Optional

from . import opcrdt, statecrdt
from .model import (
    Apply, Deliver, History, Invoke, Label, OpId, Send, Timestamp, Trace, UnknownLabel,
)


class CausalityViolation(Exception):
    """A delivery that the causal-delivery discipline does not allow."""


class UnknownMessage(KeyError):
    pass


class DuplicateMessage(ValueError):
    pass


def is_state_based(kind: str) -> bool:
    return kind in statecrdt.SB_CRDTS


def _kind_table(kinds) -> dict:
    if isinstance(kinds, dict):
        return dict(kinds)
    return dict(kinds)


def _next_counter(labels, seen, obj, shared_ts) -> int:
    best = 0
    for op in seen:
        lab = labels[op]
        if lab.ts is not None and (shared_ts or lab.obj == obj):
            best = max(best, lab.ts.counter)
    return best + 1


# ---- op-based ---------------------------------------------------------------


@dataclass(frozen=True)
class OpConfig:
    """Global configuration: per-replica seen sets and states, vis, payload store."""

    kinds: dict
    L: tuple
    states: tuple  # one {obj: state} dict per replica, never mutated
    vis: frozenset = frozenset()
    payloads: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)  # OpId -> Label, in generation order
    seq: tuple = ()
    shared_ts: bool = False
    clock: dict = field(default_factory=dict)  # OpId -> highest counter in its causal past
    preds: dict = field(default_factory=dict)  # OpId -> what its origin had seen

    @staticmethod
    def initial(kinds, n: int, shared_ts: bool = False) -> "OpConfig":
        kinds = _kind_table(kinds)
        for kind in kinds.values():
            opcrdt.get(kind)
        init = {obj: opcrdt.get(k).initial() for obj, k in kinds.items()}
        return OpConfig(
            kinds, (frozenset(),) * n, tuple(dict(init) for _ in range(n)),
            seq=(0,) * n, shared_ts=shared_ts,
        )

    @property
    def n(self) -> int:
        return len(self.L)

    def state(self, r: int, obj: str):
        return self.states[r][obj]

    def src_order(self) -> list:
        return list(self.labels)

    def pending(self, r: int) -> list:
        """Updates not yet applied at ``r`` whose same-object causal past is."""
        out = []
        for op, lab in self.labels.items():
            if op in self.L[r] or self.payloads[op] is None:
                continue
            if all(p in self.L[r] for p in self._update_preds(op)):
                out.append(op)
        return out

    def _update_preds(self, op):
        obj = self.labels[op].obj
        return [
            a for a in self.preds[op]
            if self.labels[a].obj == obj and self.payloads[a] is not None
        ]


def _check_replica(cfg, r):
    if not 0 <= r < cfg.n:
        raise ValueError(f"replica {r} out of range (0..{cfg.n - 1})")


def step_operation(cfg: OpConfig, r: int, obj: str, method: str, args=()):
    """Run a generator at ``r`` and apply its effector there immediately."""
    _check_replica(cfg, r)
    if obj not in cfg.kinds:
        raise ValueError(f"undeclared object {obj!r}")
    crdt = opcrdt.get(cfg.kinds[obj])
    op = OpId(r, cfg.seq[r])
    seen = cfg.L[r]

    def next_ts():
        if cfg.shared_ts:
            # above everything in the causal past of what r has seen, any object
            return Timestamp(1 + max((cfg.clock[p] for p in seen), default=0), r)
        return Timestamp(_next_counter(cfg.labels, seen, obj, False), r)

    state = cfg.states[r][obj]
    ret, payload, ts = crdt.generate(state, method, tuple(args), op, next_ts)
    label = Label(obj, method, tuple(args), ret, op, ts)
    states = list(cfg.states)
    if payload is not None:
        states[r] = {**states[r], obj: crdt.effect(state, payload)}
    L = list(cfg.L)
    L[r] = seen | {op}
    seq = list(cfg.seq)
    seq[r] += 1
    new = replace(
        cfg,
        L=tuple(L),
        states=tuple(states),
        vis=cfg.vis | {(p, op) for p in seen},
        payloads={**cfg.payloads, op: payload},
        labels={**cfg.labels, op: label},
        seq=tuple(seq),
        clock={**cfg.clock, op: max([ts.counter if ts else 0] + [cfg.clock[p] for p in seen])},
        preds={**cfg.preds, op: seen},
    )
    return new, label


def step_effector(cfg: OpConfig, r: int, op: OpId) -> OpConfig:
    """Apply the effector of ``op`` at ``r``.

    Same-object queries in its causal past are delivered along with it; their
    effectors are the identity, so this only records that they were seen.
    """
    _check_replica(cfg, r)
    if op not in cfg.labels:
        raise UnknownLabel(str(op))
    if op in cfg.L[r]:
        raise CausalityViolation(f"{op} already applied at replica {r}")
    missing = [p for p in cfg._update_preds(op) if p not in cfg.L[r]]
    if missing:
        raise CausalityViolation(
            f"{op} delivered to replica {r} before {', '.join(map(str, sorted(missing)))}"
        )
    lab = cfg.labels[op]
    queries = {
        a for a in cfg.preds[op]
        if cfg.payloads[a] is None and cfg.labels[a].obj == lab.obj
    }
    payload = cfg.payloads[op]
    states = list(cfg.states)
    if payload is not None:
        crdt = opcrdt.get(cfg.kinds[lab.obj])
        states[r] = {**states[r], lab.obj: crdt.effect(states[r][lab.obj], payload)}
    L = list(cfg.L)
    L[r] = L[r] | {op} | queries
    return replace(cfg, L=tuple(L), states=tuple(states))


# ---- state-based -------------------------------------------------------------


@dataclass(frozen=True)
class Effect:
    """What an update did at its origin, kept for the property harness."""

    before: object
    arg: object
    after: object


@dataclass(frozen=True)
class SbConfig:
    kinds: dict
    L: tuple
    states: tuple
    vis: frozenset = frozenset()
    msgs: dict = field(default_factory=dict)  # mid -> (L snapshot, {obj: state})
    labels: dict = field(default_factory=dict)
    seq: tuple = ()
    effects: dict = field(default_factory=dict)  # OpId -> Effect

    @staticmethod
    def initial(kinds, n: int) -> "SbConfig":
        kinds = _kind_table(kinds)
        init = {obj: statecrdt.get(k).initial(n) for obj, k in kinds.items()}
        return SbConfig(kinds, (frozenset(),) * n, tuple(dict(init) for _ in range(n)),
                        seq=(0,) * n)

    @property
    def n(self) -> int:
        return len(self.L)

    def state(self, r: int, obj: str):
        return self.states[r][obj]

    def src_order(self) -> list:
        return list(self.labels)


def sb_step(cfg: SbConfig, event):
    """One OPERATION, GENERATE (Send) or APPLY step; returns ``(cfg', label-or-None)``."""
    _check_replica(cfg, event.replica)
    r = event.replica
    if isinstance(event, Invoke):
        if event.obj not in cfg.kinds:
            raise ValueError(f"undeclared object {event.obj!r}")
        kind = cfg.kinds[event.obj]
        op = OpId(r, cfg.seq[r])
        seen = cfg.L[r]

        def next_ts():
            return Timestamp(_next_counter(cfg.labels, seen, event.obj, False), r)

        before = cfg.states[r][event.obj]
        ret, after, arg = statecrdt.sb_do(
            kind, before, event.method, event.args, r, next_ts, n=cfg.n
        )
        label = Label(event.obj, event.method, tuple(event.args), ret, op,
                      statecrdt.arg_ts(arg))
        states = list(cfg.states)
        states[r] = {**states[r], event.obj: after}
        L = list(cfg.L)
        L[r] = seen | {op}
        seq = list(cfg.seq)
        seq[r] += 1
        effects = cfg.effects
        if arg is not None:
            effects = {**effects, op: Effect(before, arg, after)}
        new = replace(
            cfg, L=tuple(L), states=tuple(states), vis=cfg.vis | {(p, op) for p in seen},
            labels={**cfg.labels, op: label}, seq=tuple(seq), effects=effects,
        )
        return new, label
    if isinstance(event, Send):
        if event.mid in cfg.msgs:
            raise DuplicateMessage(f"message {event.mid} already exists")
        snap = (cfg.L[r], dict(cfg.states[r]))
        return replace(cfg, msgs={**cfg.msgs, event.mid: snap}), None
    if isinstance(event, Apply):
        if event.mid not in cfg.msgs:
            raise UnknownMessage(event.mid)
        ls, ss = cfg.msgs[event.mid]
        merged = {
            obj: statecrdt.sb_merge(cfg.kinds[obj], st, ss[obj])
            for obj, st in cfg.states[r].items()
        }
        states = list(cfg.states)
        states[r] = merged
        L = list(cfg.L)
        L[r] = L[r] | ls
        return replace(cfg, L=tuple(L), states=tuple(states)), None
    raise TypeError(f"not a state-based event: {event!r}")


# ---- running traces ------------------------------------------------------------


def extract_history(cfg) -> History:
    return History(tuple(cfg.labels.values()), cfg.vis)


def run_trace(trace: Trace, kinds=None, shared_ts: bool = False):
    """Replay a trace; returns the final configuration."""
    table = dict(trace.objects) if trace.objects else {}
    if kinds:
        table.update(_kind_table(kinds))
    if not table:
        raise ValueError("trace declares no objects and no CRDT kind was given")
    n = max(trace.n_replicas(), 1)
    state_based = {is_state_based(k) for k in table.values()}
    if len(state_based) > 1:
        raise ValueError("cannot mix op-based and state-based objects in one run")
    if state_based.pop():
        cfg = SbConfig.initial(table, n)
        for ev in trace.events:
            if isinstance(ev, Deliver):
                raise ValueError("dlv events only apply to op-based objects")
            cfg, _ = sb_step(cfg, ev)
        return cfg
    cfg = OpConfig.initial(table, n, shared_ts)
    for ev in trace.events:
        if isinstance(ev, Invoke):
            cfg, _ = step_operation(cfg, ev.replica, ev.obj, ev.method, ev.args)
        elif isinstance(ev, Deliver):
            cfg = step_effector(cfg, ev.replica, ev.id)
        else:
            raise ValueError("snd/app events only apply to state-based objects")
    return cfg


# ---- random workloads --------------------------------------------------------------


class _Fresh:
    """Deterministic supplier of never-used element names."""

    def __init__(self, prefix="e"):
        self.prefix = prefix
        self.count = 0

    def __call__(self):
        self.count += 1
        return f"{self.prefix}{self.count}"


def random_op_run(kinds, n: int, n_ops: int, rng: random.Random, shared_ts=False,
                  deliver_all=False, p_deliver=0.4, calls=None):
    """Random op-based run with ``n_ops`` invocations and random causal deliveries.

    With ``deliver_all`` every effector reaches every replica at the end and
    each replica then reads every object. ``calls`` can override the per-object
    method sampler with ``calls(obj, state, rng, fresh) -> (method, args)``.
    Returns ``(trace, cfg)``.
    """
    table = _kind_table(kinds)
    objs = sorted(table)
    cfg = OpConfig.initial(table, n, shared_ts)
    fresh = _Fresh()
    events = []
    done = 0
    while done < n_ops:
        deliverable = [(r, op) for r in range(n) for op in cfg.pending(r)]
        if deliverable and rng.random() < p_deliver:
            r, op = rng.choice(deliverable)
            cfg = step_effector(cfg, r, op)
            events.append(Deliver(r, op))
            continue
        r = rng.randrange(n)
        obj = rng.choice(objs)
        state = cfg.state(r, obj)
        if calls is not None:
            method, args = calls(obj, state, rng, fresh)
        else:
            method, args = opcrdt.get(table[obj]).sample_call(state, rng, fresh)
        cfg, _ = step_operation(cfg, r, obj, method, args)
        events.append(Invoke(r, obj, method, tuple(args)))
        done += 1
    if deliver_all:
        cfg, extra = deliver_everything(cfg)
        events.extend(extra)
        for r in range(n):
            for obj in objs:
                cfg, _ = step_operation(cfg, r, obj, "read", ())
                events.append(Invoke(r, obj, "read", ()))
    return Trace(tuple(events), tuple(sorted(table.items())), n), cfg


def deliver_everything(cfg: OpConfig):
    """Deliver every pending effector everywhere, in generation order."""
    events = []
    progress = True
    while progress:
        progress = False
        for r in range(cfg.n):
            for op in cfg.pending(r):
                cfg = step_effector(cfg, r, op)
                events.append(Deliver(r, op))
                progress = True
    return cfg, events


def random_sb_run(kinds, n: int, n_ops: int, rng: random.Random, deliver_all=False,
                  p_send=0.25, p_apply=0.3):
    """Random state-based run; messages may be applied repeatedly or never."""
    table = _kind_table(kinds)
    objs = sorted(table)
    cfg = SbConfig.initial(table, n)
    fresh = _Fresh()
    events = []
    done = 0
    mid = 0

    def step(ev):
        nonlocal cfg
        cfg, _ = sb_step(cfg, ev)
        events.append(ev)

    while done < n_ops:
        roll = rng.random()
        if roll < p_send:
            step(Send(rng.randrange(n), mid))
            mid += 1
        elif roll < p_send + p_apply and cfg.msgs:
            step(Apply(rng.randrange(n), rng.choice(sorted(cfg.msgs))))
        else:
            r = rng.randrange(n)
            obj = rng.choice(objs)
            crdt = statecrdt.get(table[obj])
            method, args = crdt.sample_call(cfg.state(r, obj), rng, fresh)
            step(Invoke(r, obj, method, tuple(args)))
            done += 1
    if deliver_all:
        finals = []
        for r in range(n):
            step(Send(r, mid))
            finals.append(mid)
            mid += 1
        for r in range(n):
            for m in finals:
                step(Apply(r, m))
        for r in range(n):
            for obj in objs:
                step(Invoke(r, obj, "read", ()))
    return Trace(tuple(events), tuple(sorted(table.items())), n), cfg


# ---- schedule enumeration ------------------------------------------------------------


def enumerate_schedules(kinds, program: dict, shared_ts=False, limit: Optional[int] = None):
    """All op-based executions of a client program, one per distinct history.

    ``program`` maps a replica to its list of ``(obj, method, args)`` calls.
    Effectors are only delivered to replicas that still have calls to make,
    since later deliveries cannot change any recorded label. Returns a list of
    ``(trace, cfg)`` pairs in a deterministic order.
    """
    table = _kind_table(kinds)
    n = max(program) + 1
    start = OpConfig.initial(table, n, shared_ts)
    seen_histories = set()
    out = []

    def key(cfg):
        labs = tuple(sorted((str(l), str(l.ts)) for l in cfg.labels.values()))
        return labs, tuple(sorted((str(a), str(b)) for a, b in cfg.vis))

    def dfs(cfg, pcs, events):
        if limit is not None and len(out) >= limit:
            return
        moves = []
        for r in sorted(program):
            if pcs[r] < len(program[r]):
                moves.append(("op", r))
                moves.extend(("dlv", r, op) for op in sorted(cfg.pending(r)))
        if not moves:
            k = key(cfg)
            if k not in seen_histories:
                seen_histories.add(k)
                out.append((Trace(tuple(events), tuple(sorted(table.items())), n), cfg))
            return
        for mv in moves:
            if mv[0] == "op":
                r = mv[1]
                obj, method, args = program[r][pcs[r]]
                nxt, _ = step_operation(cfg, r, obj, method, args)
                npcs = dict(pcs)
                npcs[r] += 1
                dfs(nxt, npcs, events + [Invoke(r, obj, method, tuple(args))])
            else:
                _, r, op = mv
                dfs(step_effector(cfg, r, op), pcs, events + [Deliver(r, op)])

    dfs(start, {r: 0 for r in program}, [])
    return out

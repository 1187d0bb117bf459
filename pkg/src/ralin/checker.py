"""Checking replicated histories against sequential specifications, plus the proof-obligation suites.

Histories are checked after query-update rewriting. A linearization is a
sequence of (rewritten) label ids. A linearization is valid when

1. it orders every vis edge forwards,
2. the spec accepts its update projection, and
3. every query is accepted after the updates it sees, in linearization order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from . import opcrdt, runtime, statecrdt
from .model import History, Timestamp, is_acyclic, transitive_closure, ts_less, ts_max
from .spec import (
    GAMMAS, NotRewritten, PerObjectGamma, SeqSpec, compose, get_gamma, get_spec,
    qu_rewrite, run_sequence,
)


class BoundExceeded(Exception):
    def __init__(self, count, bound):
        super().__init__(f"{count} labels exceed the exhaustive bound of {bound}")
        self.count = count
        self.bound = bound


class UnknownProp(ValueError):
    pass


DEFAULT_BOUND = 10


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    witness: Optional[tuple] = None
    item: Optional[int] = None  # first failing condition, 1..3
    label: object = None  # offending label id, if any
    reason: str = ""
    explored: int = 0
    witnesses: tuple = ()

    def __bool__(self):
        return self.accepted


def _check_rewritten(h: History, spec: SeqSpec):
    parts = getattr(spec, "components", None)
    for lab in h.labels:
        qu = parts[lab.obj].qu_methods if parts and lab.obj in parts else spec.qu_methods
        if lab.id.part == 0 and lab.method in qu:
            raise NotRewritten(f"{lab} must be split before checking against {spec.name}")


def validate_linearization(h: History, lin, spec: SeqSpec) -> Verdict:
    """Check one candidate linearization of an already rewritten history."""
    _check_rewritten(h, spec)
    ids = [getattr(x, "id", x) for x in lin]
    if sorted(ids) != h.ids():
        return Verdict(False, None, 1, None, "linearization is not a permutation of the labels")
    pos = {op: i for i, op in enumerate(ids)}
    for a, b in sorted(h.vis):
        if pos[a] > pos[b]:
            return Verdict(False, None, 1, b, f"{b} is ordered before {a}, which it sees")
    updates = [h[op] for op in ids if not spec.is_query(h[op])]
    if not run_sequence(spec, updates):
        return Verdict(False, None, 2, None, "update projection is rejected by the spec")
    for op in ids:
        lab = h[op]
        if not spec.is_query(lab):
            continue
        seen = h.preds(op)
        prefix = [u for u in updates if u.id in seen]
        if not run_sequence(spec, prefix + [lab]):
            return Verdict(False, None, 3, op, f"query {lab} is not explained by the updates it sees")
    return Verdict(True, tuple(ids))


def check_ra_exhaustive(h: History, spec: SeqSpec, gamma=None, bound: int = DEFAULT_BOUND,
                        all_witnesses: bool = False, rewritten: bool = False) -> Verdict:
    """Search every linearization of the rewritten history, depth first.

    Frontier candidates are tried in id order, so the first witness found is
    deterministic. Queries are placed as soon as they become minimal: a query
    changes no state and only needs its visible updates placed before it, so
    this loses no witness. ``all_witnesses`` turns that shortcut off and
    collects every valid order.
    """
    rh = h if rewritten else qu_rewrite(h, gamma or GAMMAS["identity"])
    _check_rewritten(rh, spec)
    if len(rh) > bound:
        raise BoundExceeded(len(rh), bound)
    ids = rh.ids()
    preds = {op: set(rh.preds(op)) for op in ids}
    is_q = {op: spec.is_query(rh[op]) for op in ids}
    query_cache = {}
    found = []
    stats = {"nodes": 0, "fail": {}}

    def query_ok(op, placed_updates):
        seen = preds[op]
        key = (op, tuple(u for u in placed_updates if u in seen))
        if key not in query_cache:
            seq = [rh[u] for u in key[1]] + [rh[op]]
            query_cache[key] = bool(run_sequence(spec, seq))
        return query_cache[key]

    def note_fail(item, op):
        stats["fail"].setdefault(item, op)

    def dfs(order, placed, upd_order, states):
        stats["nodes"] += 1
        if len(order) == len(ids):
            found.append(tuple(order))
            return not all_witnesses
        frontier = [op for op in ids if op not in placed and preds[op] <= placed]
        if not all_witnesses:
            qs = [op for op in frontier if is_q[op]]
            if qs:
                frontier = qs[:1]
        for op in frontier:
            if is_q[op]:
                if not query_ok(op, upd_order):
                    note_fail(3, op)
                    continue
                nxt_states, nxt_upd = states, upd_order
            else:
                nxt_states = {s2 for s in states for s2 in spec.step(s, rh[op])}
                if not nxt_states:
                    note_fail(2, op)
                    continue
                nxt_upd = upd_order + (op,)
            placed.add(op)
            order.append(op)
            done = dfs(order, placed, nxt_upd, nxt_states)
            order.pop()
            placed.discard(op)
            if done:
                return True
        return False

    if not is_acyclic(rh.vis):
        return Verdict(False, None, 1, None, "visibility is cyclic")
    dfs([], set(), (), {spec.initial})
    if found:
        return Verdict(True, found[0], explored=stats["nodes"],
                       witnesses=tuple(found) if all_witnesses else ())
    fails = stats["fail"]
    item = 3 if 3 in fails else 2
    op = fails.get(item)
    why = {3: f"query {op} cannot be explained in any linearization",
           2: "no linearization of the updates is accepted"}[item]
    return Verdict(False, None, item, op, why, explored=stats["nodes"])


# ---- constructive linearizations ---------------------------------------------------


def _expand(h: History, order, gamma):
    gamma = gamma or GAMMAS["identity"]
    return tuple(p.id for op in order for p in gamma(h[op]))


def build_execution_order_lin(order, h: History, gamma=None) -> tuple:
    """Labels in the order their generators ran; split pairs stay adjacent."""
    order = _src_order(order)
    return _expand(h, order, gamma)


def _src_order(order):
    if hasattr(order, "src_order"):
        return list(order.src_order())
    return list(order)


def assign_virtual_ts(h: History) -> dict:
    """Own timestamp if any, else the largest timestamp among what the label saw.

    The maximum is taken over the transitive past. For single-object histories
    vis is transitive and this is the same as the direct predecessors.
    """
    closure = transitive_closure(h.vis)
    past = {op: [] for op in h.ids()}
    for a, b in closure:
        past[b].append(a)
    out = {}
    for lab in h.labels:
        if lab.ts is not None:
            out[lab.id] = lab.ts
        else:
            out[lab.id] = ts_max(h[p].ts for p in past[lab.id])
    return out


def build_timestamp_order_lin(order, h: History, gamma=None) -> tuple:
    """Ascending virtual timestamp, ties broken by generator order."""
    order = _src_order(order)
    vts = assign_virtual_ts(h)
    index = {op: i for i, op in enumerate(order)}

    def key(op):
        t = vts[op]
        return ((-1, -1) if t is None else (t.counter, t.replica), index[op])

    return _expand(h, sorted(order, key=key), gamma)


def ts_order_consistent(h: History) -> bool:
    """Whether vis together with the (virtual) timestamp order is acyclic."""
    vts = assign_virtual_ts(h)
    edges = set(h.vis)
    ids = h.ids()
    for a in ids:
        for b in ids:
            if ts_less(vts[a], vts[b]):
                edges.add((a, b))
    return is_acyclic(edges)


def check_composition(h: History, specs: dict, gammas: Optional[dict] = None,
                      bound: int = DEFAULT_BOUND, all_witnesses: bool = False) -> Verdict:
    """Exhaustive check against the interleaving product of per-object specs."""
    spec = compose(specs)
    gamma = PerObjectGamma({o: (gammas or {}).get(o, GAMMAS["identity"]) for o in specs})
    return check_ra_exhaustive(h, spec, gamma, bound, all_witnesses=all_witnesses)


# ---- refinement abstractions ----------------------------------------------------------


def _abs_rga(state):
    return (opcrdt.ROOT,) + opcrdt.rga_traverse(state, include_tomb=True), frozenset(state.tomb)


def _abs_wooki(state):
    return (tuple(c.value for c in state.chars),
            frozenset(c.value for c in state.chars if not c.visible))


ABS = {
    "counter": lambda s: s.ctr,
    "lww": lambda s: s.value,
    "orset": lambda s: s.elems,
    "rga": _abs_rga,
    "rga-at": _abs_rga,
    "wooki": _abs_wooki,
}


def default_spec(kind: str):
    from .spec import DEFAULTS
    name, gamma = DEFAULTS[kind]
    return get_spec(name), get_gamma(gamma)


# ---- commutativity ------------------------------------------------------------------------


@dataclass
class Report:
    check: str
    kind: str
    samples: int = 0
    counterexamples: list = field(default_factory=list)
    skipped: int = 0

    @property
    def ok(self) -> bool:
        return not self.counterexamples and self.samples > 0

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "kind": self.kind,
            "samples": self.samples,
            "skipped": self.skipped,
            "ok": self.ok,
            "counterexamples": [str(c) for c in self.counterexamples[:20]],
        }


def _updates_past(cfg, op):
    return {p for p in cfg.preds[op] if cfg.payloads[p] is not None}


def _sample_base(cfg, crdt, obj, u1, u2, rng):
    """A state holding both pasts and a random causally closed extra, never seeing u1/u2."""
    need = _updates_past(cfg, u1) | _updates_past(cfg, u2)
    chosen = []
    have = set()
    for op in cfg.src_order():
        if op in (u1, u2) or cfg.payloads[op] is None or cfg.labels[op].obj != obj:
            continue
        past = _updates_past(cfg, op)
        if u1 in past or u2 in past or not past <= have:
            continue
        if op in need or rng.random() < 0.5:
            chosen.append(op)
            have.add(op)
    state = crdt.initial()
    for op in chosen:
        state = crdt.effect(state, cfg.payloads[op])
    return state


def check_commutativity(kind: str, n: int = 1000, seed: int = 0, replicas: int = 3,
                        ops: int = 8) -> Report:
    """Concurrent effectors from random runs, applied in both orders to a shared base."""
    rng = random.Random(seed)
    crdt = opcrdt.get(kind)
    rep = Report("commutativity", kind)
    attempts = 0
    while rep.samples < n and attempts < n * 50:
        attempts += 1
        _, cfg = runtime.random_op_run({"o": kind}, replicas, ops, rng, p_deliver=0.25)
        ups = [op for op in cfg.src_order() if cfg.payloads[op] is not None]
        pairs = [
            (a, b) for i, a in enumerate(ups) for b in ups[i + 1:]
            if a not in cfg.preds[b] and b not in cfg.preds[a]
        ]
        rng.shuffle(pairs)
        for u1, u2 in pairs[:4]:
            base = _sample_base(cfg, crdt, "o", u1, u2, rng)
            d1, d2 = cfg.payloads[u1], cfg.payloads[u2]
            s12 = crdt.effect(crdt.effect(base, d1), d2)
            s21 = crdt.effect(crdt.effect(base, d2), d1)
            rep.samples += 1
            if s12 != s21:
                rep.counterexamples.append((base, d1, d2))
    return rep


# ---- refinement ------------------------------------------------------------------------------


def check_refinement(kind: str, samples: int = 10000, seed: int = 0, mode: str = "plain",
                     spec: Optional[SeqSpec] = None, gamma=None, replicas: int = 3,
                     ops: int = 10) -> Report:
    """Every effector step must be simulated by the spec through the abstraction.

    In ``ts`` mode an effector whose timestamp is not above every timestamp
    already in the state is skipped (and counted as skipped). Queries, and the
    query halves of split labels, must be admitted at the abstract pre-state.
    """
    if mode not in ("plain", "ts"):
        raise ValueError(f"unknown refinement mode {mode!r}")
    crdt = opcrdt.get(kind)
    if spec is None:
        spec, default_gamma = default_spec(kind)
        gamma = gamma or default_gamma
    gamma = gamma or GAMMAS["identity"]
    abs_fn = ABS[kind]
    rng = random.Random(seed)
    rep = Report(f"refinement-{mode}", kind)

    def effector_step(before, payload, lab):
        upd = gamma(lab)[-1]
        if mode == "ts" and lab.ts is not None:
            if any(not ts_less(t, lab.ts) for t in crdt.state_ts(before)):
                rep.skipped += 1
                return
        after = crdt.effect(before, payload)
        rep.samples += 1
        if abs_fn(after) not in spec.step(abs_fn(before), upd):
            rep.counterexamples.append((before, payload, lab))

    while rep.samples < samples:
        cfg = runtime.OpConfig.initial({"o": kind}, replicas)
        fresh = runtime._Fresh()
        done = 0
        while done < ops:
            deliverable = [(r, op) for r in range(replicas) for op in cfg.pending(r)]
            if deliverable and rng.random() < 0.4:
                r, op = rng.choice(deliverable)
                effector_step(cfg.state(r, "o"), cfg.payloads[op], cfg.labels[op])
                cfg = runtime.step_effector(cfg, r, op)
                continue
            r = rng.randrange(replicas)
            before = cfg.state(r, "o")
            method, args = crdt.sample_call(before, rng, fresh)
            cfg, lab = runtime.step_operation(cfg, r, "o", method, args)
            done += 1
            parts = gamma(lab)
            payload = cfg.payloads[lab.id]
            if payload is None or len(parts) == 2:
                q = parts[0]
                rep.samples += 1
                if not spec.step(abs_fn(before), q):
                    rep.counterexamples.append((before, None, q))
            if payload is not None:
                effector_step(before, payload, lab)
    return rep


# ---- state-based properties --------------------------------------------------------------------

SB_PROPS = {
    "unique": ("P1-soundness", "Prop1", "Prop2", "Prop3", "Prop4", "Prop5"),
    "cumulative": ("Prop'1", "Prop'2", "Prop'3", "Prop4", "Prop5"),
    "idempotent": ("Prop'1", "Prop'2", "Prop'3", "Prop4", "Prop5", "Prop6"),
}
LATTICE_LAWS = ("merge-commutative", "merge-idempotent", "merge-associative")
ALL_PROPS = set(LATTICE_LAWS) | {p for ps in SB_PROPS.values() for p in ps}


def props_for(kind: str) -> tuple:
    return SB_PROPS[statecrdt.get(kind).effect_class] + LATTICE_LAWS


class _SbPool:
    """States, effects and concurrent pairs harvested from one random run."""

    def __init__(self, kind, rng, replicas, ops):
        self.kind = kind
        self.crdt = statecrdt.get(kind)
        self.n = replicas
        _, cfg = runtime.random_sb_run({"o": kind}, replicas, ops, rng)
        states = {cfg.state(r, "o") for r in range(replicas)}
        states |= {m[1]["o"] for m in cfg.msgs.values()}
        for eff in cfg.effects.values():
            states.add(eff.before)
            states.add(eff.after)
        self.states = sorted(states, key=repr)
        self.effects = [cfg.effects[op] for op in sorted(cfg.effects)]
        ids = sorted(cfg.effects)
        preds = {b: set() for b in cfg.labels}
        for a, b in cfg.vis:
            preds[b].add(a)
        self.concurrent = [
            (cfg.effects[a].arg, cfg.effects[b].arg)
            for i, a in enumerate(ids) for b in ids[i + 1:]
            if a not in preds[b] and b not in preds[a]
        ]
        self.initial = self.crdt.initial(replicas)

    def fresh_arg(self, s1, s2, rng):
        """Argument of a new update run on top of both states."""
        merged = self.crdt.merge(s1, s2)
        r = rng.randrange(self.n)
        method, args = self.crdt.sample_call(merged, rng, runtime._Fresh("f"))
        if method in self.crdt.queries:
            return None
        counter = 1 + max((t.counter for t in _sb_ts(merged)), default=0)
        _, _, arg = statecrdt.sb_do(
            self.kind, merged, method, args, r,
            lambda: Timestamp(counter, r), n=self.n,
        )
        return arg

    def arg(self, rng, s1=None, s2=None):
        if s1 is not None and rng.random() < 0.5:
            a = self.fresh_arg(s1, s2, rng)
            if a is not None:
                return a
        if not self.effects:
            return None
        return rng.choice(self.effects).arg


def _sb_ts(state):
    if isinstance(state, statecrdt.LwwElementSetState):
        return [t for _, t in state.A | state.R]
    return []


def check_sb_props(kind: str, prop: str, samples: int = 1000, seed: int = 0,
                   replicas: int = 3, ops: int = 8) -> Report:
    """Assert one law over sampled reachable states; hypotheses are filtered, not assumed."""
    if prop not in ALL_PROPS:
        raise UnknownProp(prop)
    crdt = statecrdt.get(kind)
    if prop not in props_for(kind):
        raise UnknownProp(f"{prop} does not apply to {crdt.effect_class} effectors")
    rng = random.Random(seed)
    rep = Report(prop, kind)
    apply, merge, hyp = crdt.apply_local, crdt.merge, crdt.hypothesis
    attempts = 0
    while rep.samples < samples:
        attempts += 1
        if attempts > samples * 400:
            break
        pool = _SbPool(kind, rng, replicas, ops)
        for _ in range(20):
            s1, s2, s3 = (rng.choice(pool.states) for _ in range(3))
            case = None
            if prop == "merge-commutative":
                case = (s1, s2), merge(s1, s2) == merge(s2, s1)
            elif prop == "merge-idempotent":
                case = (s1,), merge(s1, s1) == s1
            elif prop == "merge-associative":
                case = (s1, s2, s3), merge(merge(s1, s2), s3) == merge(s1, merge(s2, s3))
            elif prop == "P1-soundness":
                e = rng.choice(pool.effects) if pool.effects else None
                if e is not None:
                    case = (e.before, e.arg), hyp(e.before, e.arg)
            elif prop == "Prop1":
                if pool.concurrent:
                    x1, x2 = rng.choice(pool.concurrent)
                    case = (s1, x1, x2), apply(apply(s1, x1), x2) == apply(apply(s1, x2), x1)
            elif prop == "Prop'1":
                x1, x2 = pool.arg(rng), pool.arg(rng)
                if x1 is not None and x2 is not None:
                    case = (s1, x1, x2), apply(apply(s1, x1), x2) == apply(apply(s1, x2), x1)
            elif prop in ("Prop2", "Prop'2"):
                x = pool.arg(rng, s1, s2)
                if x is not None and hyp(s1, x) and hyp(s2, x):
                    case = (s1, s2, x), merge(s1, apply(s2, x)) == apply(merge(s1, s2), x)
            elif prop in ("Prop3", "Prop'3"):
                x = pool.arg(rng, s1, s2)
                if x is not None and (prop == "Prop'3" or (hyp(s1, x) and hyp(s2, x))):
                    case = (s1, s2, x), merge(apply(s1, x), apply(s2, x)) == apply(merge(s1, s2), x)
            elif prop == "Prop4":
                s0 = pool.initial
                case = (s1, s2), merge(s0, s0) == s0 and merge(s1, s2) == merge(s2, s1)
            elif prop == "Prop5":
                e = rng.choice(pool.effects) if pool.effects else None
                if e is not None:
                    case = (e.before, e.arg), apply(e.before, e.arg) == e.after
            elif prop == "Prop6":
                x = pool.arg(rng, s1, s2)
                if x is not None:
                    case = (s1, x), apply(apply(s1, x), x) == apply(s1, x)
            if case is None:
                rep.skipped += 1
                continue
            rep.samples += 1
            if not case[1]:
                rep.counterexamples.append(case[0])
            if rep.samples >= samples:
                break
    return rep


def check_sb_commutativity(kind: str, n: int = 1000, seed: int = 0) -> Report:
    """Local effectors commute: concurrent ones for unique ids, all of them otherwise."""
    prop = "Prop1" if statecrdt.get(kind).effect_class == "unique" else "Prop'1"
    rep = check_sb_props(kind, prop, n, seed)
    rep.check = "commutativity"
    return rep


# ---- convenience ---------------------------------------------------------------------------


def check_run(h: History, kind: str, spec=None, gamma=None, bound=DEFAULT_BOUND) -> Verdict:
    if spec is None:
        spec, default_gamma = default_spec(kind)
        gamma = gamma or default_gamma
    return check_ra_exhaustive(h, spec, gamma, bound)


def constructive_lin(order, h: History, kind: str, gamma=None) -> tuple:
    """The builder the theory prescribes for ``kind``."""
    if kind in ("rga", "rga-at", "lww"):
        return build_timestamp_order_lin(order, h, gamma)
    return build_execution_order_lin(order, h, gamma)

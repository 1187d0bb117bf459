"""Executable sequential specifications and query-update rewritings.

A specification is a labelled transition relation over hashable abstract
states. ``step`` returns the list of successor states, empty when the label is
not admitted. Most specifications are deterministic; Wooki and the local-index
list are relational and may return several successors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .model import History, Label, OpId
from .opcrdt import BEGIN, END, ROOT
from .statecrdt import vv_leq, vv_less


class MissingRewrite(Exception):
    """A label needs splitting but the rewriting has nothing to split it with."""


class NotRewritten(Exception):
    """A query-update label reached the checker without being split."""


@dataclass(frozen=True)
class SeqSpec:
    name: str
    initial: Any
    step_fn: Callable = field(repr=False)
    queries: frozenset = frozenset({"read"})
    qu_methods: frozenset = frozenset()  # methods that must be rewritten first
    relational: bool = False

    def step(self, state, label: Label) -> list:
        return self.step_fn(state, label)

    def is_query(self, label: Label) -> bool:
        return label.method in self.queries


def spec_step(spec: SeqSpec, state, label: Label) -> list:
    return spec.step(state, label)


def spec_accepts_sequence(spec: SeqSpec, seq) -> bool:
    """True iff some chain of transitions from the initial state consumes ``seq``."""
    states = {spec.initial}
    for lab in seq:
        states = {s2 for s in states for s2 in spec.step(s, lab)}
        if not states:
            return False
    return True


def run_sequence(spec: SeqSpec, seq, start=None) -> set:
    """Every state reachable by consuming ``seq``; empty if it is rejected."""
    states = {spec.initial if start is None else start}
    for lab in seq:
        states = {s2 for s in states for s2 in spec.step(s, lab)}
        if not states:
            break
    return states


def _one(state):
    return [state]


_NONE: list = []


# ---- counter / register / sets -------------------------------------------------


def _counter(state, lab):
    if lab.method == "inc":
        return _one(state + 1)
    if lab.method == "dec":
        return _one(state - 1)
    if lab.method == "read":
        return _one(state) if lab.ret == state else _NONE
    return _NONE


def _register(state, lab):
    if lab.method == "write":
        return _one(lab.args[0])
    if lab.method == "read":
        return _one(state) if lab.ret == state else _NONE
    return _NONE


def _set(state, lab):
    if lab.method == "add":
        return _one(state | {lab.args[0]})
    if lab.method == "remove":
        return _one(state - {lab.args[0]})
    if lab.method == "read":
        return _one(state) if lab.ret == state else _NONE
    return _NONE


def _orset(state, lab):
    m = lab.method
    if m == "add":
        if len(lab.args) != 2:
            return _NONE
        pair = (lab.args[0], lab.args[1])
        return _NONE if pair in state else _one(state | {pair})
    if m == "readIds":
        a = lab.args[0]
        return _one(state) if lab.ret == frozenset(p for p in state if p[0] == a) else _NONE
    if m == "remove":
        return _one(state - frozenset(lab.args[0]))
    if m == "read":
        return _one(state) if lab.ret == frozenset(a for a, _ in state) else _NONE
    return _NONE


def _mvreg(state, lab):
    if lab.method == "write":
        if len(lab.args) != 2:
            return _NONE
        a, vid = lab.args
        if any(vv_leq(vid, other) for _, other in state):
            return _NONE
        kept = frozenset(p for p in state if not vv_less(p[1], vid))
        return _one(kept | {(a, vid)})
    if lab.method == "read":
        return _one(state) if lab.ret == frozenset(a for a, _ in state) else _NONE
    return _NONE


# ---- lists ------------------------------------------------------------------------


def _visible(l, T, hide=(ROOT,)):
    return tuple(x for x in l if x not in T and x not in hide)


def _rga(state, lab):
    l, T = state
    m = lab.method
    if m == "addAfter":
        b, a = lab.args
        if b not in l or a in l:
            return _NONE
        i = l.index(b)
        return _one((l[:i + 1] + (a,) + l[i + 1:], T))
    if m == "remove":
        (b,) = lab.args
        if b not in l or b == ROOT:
            return _NONE
        return _one((l, T | {b}))
    if m == "read":
        return _one(state) if tuple(lab.ret) == _visible(l, T) else _NONE
    return _NONE


def _wooki(state, lab):
    l, T = state
    m = lab.method
    if m == "addBetween":
        a, b, c = lab.args
        if a not in l or c not in l or b in l or a == END or c == BEGIN:
            return _NONE
        pa, pc = l.index(a), l.index(c)
        if pa >= pc:
            return _NONE
        return [(l[:i] + (b,) + l[i:], T) for i in range(pa + 1, pc + 1)]
    if m == "remove":
        (a,) = lab.args
        if a not in l or a in (BEGIN, END):
            return _NONE
        return _one((l, T | {a}))
    if m == "read":
        return _one(state) if tuple(lab.ret) == _visible(l, T, (BEGIN, END)) else _NONE
    return _NONE


def _addat1(l, lab):
    m = lab.method
    if m == "addAt":
        a, k = lab.args
        if a in l:
            return _NONE
        if len(l) < k:
            return _one(l + (a,))
        return _one(l[:k] + (a,) + l[k:])
    if m == "remove":
        (a,) = lab.args
        if a not in l:
            return _NONE
        i = l.index(a)
        return _one(l[:i] + l[i + 1:])
    if m == "read":
        return _one(l) if tuple(lab.ret) == l else _NONE
    return _NONE


def _addat2(state, lab):
    l, T = state
    m = lab.method
    if m == "addAt":
        a, k = lab.args
        if a in l:
            return _NONE
        if len(_visible(l, T, ())) < k:
            return _one((l + (a,), T))
        out = []
        for i in range(len(l) + 1):
            if len(_visible(l[:i], T, ())) == k:
                out.append((l[:i] + (a,) + l[i:], T))
        return out
    if m == "remove":
        (a,) = lab.args
        return _one((l, T | {a})) if a in l else _NONE
    if m == "read":
        return _one(state) if tuple(lab.ret) == _visible(l, T, ()) else _NONE
    return _NONE


def is_subsequence(s, l) -> bool:
    it = iter(l)
    return all(x in it for x in s)


def _addat3(state, lab):
    l, T = state
    m = lab.method
    if m == "addAt":
        a, k = lab.args
        ret = tuple(lab.ret) if lab.ret is not None else None
        if ret is None or a in l or a not in ret:
            return _NONE
        i = ret.index(a)
        b = ret[i - 1] if i > 0 else ROOT
        if not is_subsequence(ret[:i] + ret[i + 1:], l[1:]) or b not in l:
            return _NONE
        prefix = i  # length of s1.b without the root
        if not (prefix == k or (i == len(ret) - 1 and prefix < k)):
            return _NONE
        j = l.index(b)
        return _one((l[:j + 1] + (a,) + l[j + 1:], T))
    if m == "remove":
        (a,) = lab.args
        s = tuple(lab.ret) if lab.ret is not None else ()
        if a not in l or a == ROOT or a in s or not is_subsequence(s, l[1:]):
            return _NONE
        return _one((l, T | {a}))
    if m == "read":
        return _one(state) if tuple(lab.ret) == _visible(l, T) else _NONE
    return _NONE


def _specs():
    lists = (ROOT,), frozenset()
    return {
        "counter": SeqSpec("counter", 0, _counter),
        "reg": SeqSpec("reg", None, _register),
        "set": SeqSpec("set", frozenset(), _set),
        "orset": SeqSpec("orset", frozenset(), _orset,
                         queries=frozenset({"read", "readIds"}),
                         qu_methods=frozenset({"remove"})),
        "mvreg": SeqSpec("mvreg", frozenset(), _mvreg),
        "rga": SeqSpec("rga", lists, _rga),
        "wooki": SeqSpec("wooki", ((BEGIN, END), frozenset()), _wooki, relational=True),
        "addat1": SeqSpec("addat1", (), _addat1),
        "addat2": SeqSpec("addat2", ((), frozenset()), _addat2, relational=True),
        "addat3": SeqSpec("addat3", lists, _addat3),
    }


SPECS = _specs()


def get_spec(name: str) -> SeqSpec:
    try:
        return SPECS[name]
    except KeyError:
        raise ValueError(f"unknown specification {name!r}") from None


# ---- composition ----------------------------------------------------------------


def compose(specs: dict) -> SeqSpec:
    """Interleaving product: one component state per object, steps routed by object."""
    objs = tuple(sorted(specs))
    index = {o: i for i, o in enumerate(objs)}

    def step(state, lab):
        i = index.get(lab.obj)
        if i is None:
            return _NONE
        return [state[:i] + (s,) + state[i + 1:] for s in specs[lab.obj].step(state[i], lab)]

    queries = frozenset().union(*(s.queries for s in specs.values()))
    qu = frozenset().union(*(s.qu_methods for s in specs.values()))
    name = "*".join(f"{o}:{specs[o].name}" for o in objs)
    spec = SeqSpec(name, tuple(specs[o].initial for o in objs), step, queries, qu,
                   any(s.relational for s in specs.values()))
    object.__setattr__(spec, "components", dict(specs))
    return spec


# ---- query-update rewritings ---------------------------------------------------------


@dataclass(frozen=True)
class Gamma:
    """Maps a label to one label, or to a (query, update) pair."""

    name: str
    rules: dict = field(default_factory=dict)  # method -> fn(label) -> tuple of labels

    def __call__(self, lab: Label) -> tuple:
        fn = self.rules.get(lab.method)
        return fn(lab) if fn else (lab,)


def _orset_add(lab):
    if lab.ret is None:
        raise MissingRewrite(f"add {lab.id} has no identifier to carry")
    return (Label(lab.obj, "add", (lab.args[0], lab.ret), None, lab.id, lab.ts),)


def _orset_remove(lab):
    if lab.ret is None:
        raise MissingRewrite(f"remove {lab.id} has no observed set")
    q = Label(lab.obj, "readIds", (lab.args[0],), lab.ret, OpId(lab.id.origin, lab.id.seq, 1), lab.ts)
    u = Label(lab.obj, "remove", (lab.ret,), None, OpId(lab.id.origin, lab.id.seq, 2), lab.ts)
    return (q, u)


def _mvr_write(lab):
    if lab.ret is None:
        raise MissingRewrite(f"write {lab.id} has no version vector")
    return (Label(lab.obj, "write", (lab.args[0], tuple(lab.ret)), None, lab.id, lab.ts),)


GAMMAS = {
    "identity": Gamma("identity"),
    "orset": Gamma("orset", {"add": _orset_add, "remove": _orset_remove}),
    "mvr": Gamma("mvr", {"write": _mvr_write}),
}


def get_gamma(name: str) -> Gamma:
    try:
        return GAMMAS[name]
    except KeyError:
        raise ValueError(f"unknown rewriting {name!r}") from None


class PerObjectGamma:
    """Applies a different rewriting to each object of a composed history."""

    def __init__(self, gammas: dict):
        self.gammas = dict(gammas)
        self.name = "+".join(f"{o}:{g.name}" for o, g in sorted(self.gammas.items()))

    def __call__(self, lab):
        g = self.gammas.get(lab.obj, GAMMAS["identity"])
        return g(lab)


def qu_rewrite(h: History, gamma) -> History:
    """Split query-updates; ``(l, l')`` in vis becomes ``(upd(l), qry(l'))``."""
    parts = {lab.id: gamma(lab) for lab in h.labels}
    labels = [x for ps in parts.values() for x in ps]
    vis = set()
    for ps in parts.values():
        if len(ps) == 2:
            vis.add((ps[0].id, ps[1].id))
    for a, b in h.vis:
        vis.add((parts[a][-1].id, parts[b][0].id))
    return History(tuple(labels), frozenset(vis))


# defaults used when a CRDT kind is checked without naming a spec
DEFAULTS = {
    "counter": ("counter", "identity"),
    "lww": ("reg", "identity"),
    "orset": ("orset", "orset"),
    "rga": ("rga", "identity"),
    "rga-at": ("addat3", "identity"),
    "wooki": ("wooki", "identity"),
    "pn": ("counter", "identity"),
    "mvr": ("mvreg", "mvr"),
    "twop": ("set", "identity"),
    "lwwset": ("set", "identity"),
}

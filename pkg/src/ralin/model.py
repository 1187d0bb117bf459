"""Value types shared by every module: timestamps, ids, labels, histories, traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Union


class UnknownLabel(KeyError):
    """Raised when a label id is not part of a history."""


@dataclass(frozen=True, order=True)
class Timestamp:
    """Lamport pair. Ordered by counter, then by replica index."""

    counter: int
    replica: int

    def __str__(self):
        return f"{self.counter}@{self.replica}"


# The minimal timestamp is represented by None throughout.
BOTTOM = None
TsOrBottom = Optional[Timestamp]


def ts_less(a: TsOrBottom, b: TsOrBottom) -> bool:
    """Strict order on timestamps with BOTTOM below everything."""
    if b is None:
        return False
    if a is None:
        return True
    return (a.counter, a.replica) < (b.counter, b.replica)


def ts_max(values: Iterable[TsOrBottom]) -> TsOrBottom:
    best = None
    for v in values:
        if ts_less(best, v):
            best = v
    return best


@dataclass(frozen=True, order=True)
class OpId:
    """Unique operation id: origin replica plus a per-replica sequence number.

    ``part`` is 0 for ordinary labels. A rewritten query-update becomes two
    labels sharing origin and seq, with part 1 (query half) and 2 (update half).
    """

    origin: int
    seq: int
    part: int = 0

    def __str__(self):
        suffix = {0: "", 1: "q", 2: "u"}[self.part]
        return f"{self.origin}.{self.seq}{suffix}"

    @property
    def base(self) -> "OpId":
        return OpId(self.origin, self.seq) if self.part else self

    @staticmethod
    def parse(text: str) -> "OpId":
        part = 0
        if text.endswith("q"):
            part, text = 1, text[:-1]
        elif text.endswith("u"):
            part, text = 2, text[:-1]
        origin, seq = text.split(".")
        return OpId(int(origin), int(seq), part)


@dataclass(frozen=True)
class Label:
    """One method invocation ``obj.method(args) => ret`` with id and timestamp."""

    obj: str
    method: str
    args: tuple
    ret: Any
    id: OpId
    ts: TsOrBottom = None

    def __str__(self):
        args = ",".join(_show(a) for a in self.args)
        text = f"{self.obj}.{self.method}({args})"
        if self.ret is not None:
            text += f"=>{_show(self.ret)}"
        return f"{text}#{self.id}"


def _show(value) -> str:
    if isinstance(value, tuple):
        return "[" + " ".join(_show(v) for v in value) + "]"
    if isinstance(value, frozenset):
        return "{" + " ".join(sorted(_show(v) for v in value)) + "}"
    return str(value)


Edge = tuple  # (OpId, OpId)


@dataclass(frozen=True)
class History:
    """Labels plus a visibility relation over their ids."""

    labels: tuple
    vis: frozenset = frozenset()
    _index: dict = field(default=None, compare=False, repr=False, hash=False)
    _preds: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        index = {lab.id: lab for lab in self.labels}
        if len(index) != len(self.labels):
            raise ValueError("duplicate label ids in history")
        for a, b in self.vis:
            if a not in index or b not in index:
                raise UnknownLabel(f"vis edge ({a},{b}) mentions an unknown label")
        object.__setattr__(self, "labels", tuple(sorted(self.labels, key=lambda x: x.id)))
        object.__setattr__(self, "vis", frozenset(self.vis))
        object.__setattr__(self, "_index", index)
        preds = {op: set() for op in index}
        for a, b in self.vis:
            preds[b].add(a)
        object.__setattr__(self, "_preds", {k: frozenset(v) for k, v in preds.items()})

    def __getitem__(self, op: OpId) -> Label:
        try:
            return self._index[op]
        except KeyError:
            raise UnknownLabel(str(op)) from None

    def __contains__(self, op) -> bool:
        return op in self._index

    def __len__(self):
        return len(self.labels)

    def ids(self):
        return [lab.id for lab in self.labels]

    def preds(self, op: OpId) -> frozenset:
        """Ids directly visible to ``op``."""
        try:
            return self._preds[op]
        except KeyError:
            raise UnknownLabel(str(op)) from None

    def project(self, obj: str) -> "History":
        labs = tuple(l for l in self.labels if l.obj == obj)
        keep = {l.id for l in labs}
        return History(labs, frozenset((a, b) for a, b in self.vis if a in keep and b in keep))

    def objects(self) -> list:
        return sorted({l.obj for l in self.labels})


def vis_downward_closure(h: History, label: Union[Label, OpId]) -> frozenset:
    """Labels ``l2`` with ``(l2, label)`` in vis. Not closed transitively."""
    op = label.id if isinstance(label, Label) else label
    return frozenset(h[p] for p in h.preds(op))


def is_strict_partial_order(vis: Iterable[Edge]) -> bool:
    edges = set(vis)
    if any(a == b for a, b in edges):
        return False
    succ = {}
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
    for a, b in edges:
        for c in succ.get(b, ()):
            if (a, c) not in edges:
                return False
    return True


def is_acyclic(vis: Iterable[Edge]) -> bool:
    succ = {}
    nodes = set()
    for a, b in vis:
        succ.setdefault(a, []).append(b)
        nodes.update((a, b))
    color = {}
    for start in nodes:
        if start in color:
            continue
        stack = [(start, iter(succ.get(start, ())))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color.get(nxt) == 1:
                return False
            elif nxt not in color:
                color[nxt] = 1
                stack.append((nxt, iter(succ.get(nxt, ()))))
    return True


def transitive_closure(vis: Iterable[Edge]) -> frozenset:
    succ = {}
    for a, b in vis:
        succ.setdefault(a, set()).add(b)
    out = set()
    for a in list(succ):
        seen = set()
        todo = list(succ[a])
        while todo:
            x = todo.pop()
            if x in seen:
                continue
            seen.add(x)
            todo.extend(succ.get(x, ()))
        out.update((a, x) for x in seen)
    return frozenset(out)


# ---- trace events ----------------------------------------------------------


@dataclass(frozen=True)
class Invoke:
    replica: int
    obj: str
    method: str
    args: tuple = ()


@dataclass(frozen=True)
class Deliver:
    replica: int
    id: OpId


@dataclass(frozen=True)
class Send:
    replica: int
    mid: int


@dataclass(frozen=True)
class Apply:
    replica: int
    mid: int


Event = Union[Invoke, Deliver, Send, Apply]


@dataclass(frozen=True)
class Trace:
    """Ordered events plus the object declarations they refer to."""

    events: tuple = ()
    objects: tuple = ()  # (name, crdt kind) pairs
    replicas: int = 0

    def src_order(self) -> list:
        """Ids of invocations, in the order their generators ran."""
        counts = {}
        order = []
        for ev in self.events:
            if isinstance(ev, Invoke):
                seq = counts.get(ev.replica, 0)
                counts[ev.replica] = seq + 1
                order.append(OpId(ev.replica, seq))
        return order

    def n_replicas(self) -> int:
        return max([self.replicas] + [ev.replica + 1 for ev in self.events])

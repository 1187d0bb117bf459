"""Operation-based CRDTs split into generators and effectors.

Every state and payload is an immutable value. A generator runs once at the
origin replica and returns ``(ret, payload, ts)``; the payload is then replayed
by ``effect`` on every replica, origin included.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Callable, Optional

from .model import OpId, Timestamp, ts_less

ROOT = "@"  # the list head every RGA starts with
BEGIN = "@begin"
END = "@end"


class PreconditionViolated(Exception):
    def __init__(self, method, reason):
        super().__init__(f"{method}: {reason}")
        self.method = method
        self.reason = reason


class BrokenCausality(Exception):
    """An effector referenced something its replica has not seen yet."""


# ---- payloads --------------------------------------------------------------


@dataclass(frozen=True)
class Inc:
    pass


@dataclass(frozen=True)
class Dec:
    pass


@dataclass(frozen=True)
class LwwWrite:
    value: Any
    ts: Timestamp


@dataclass(frozen=True)
class OrAdd:
    elem: Any
    k: OpId


@dataclass(frozen=True)
class OrRemove:
    pairs: frozenset


@dataclass(frozen=True)
class AddAfter:
    parent: Any
    ts: Timestamp
    elem: Any


@dataclass(frozen=True)
class RgaRemove:
    elem: Any


@dataclass(frozen=True)
class WChar:
    id: Optional[Timestamp]
    value: Any
    degree: int
    visible: bool = True


@dataclass(frozen=True)
class WookiAdd:
    w: WChar
    prev: Any
    next: Any


@dataclass(frozen=True)
class WookiRemove:
    value: Any


# ---- states ----------------------------------------------------------------


@dataclass(frozen=True)
class CounterState:
    ctr: int = 0


@dataclass(frozen=True)
class LwwRegisterState:
    value: Any = None
    ts: Optional[Timestamp] = None


@dataclass(frozen=True)
class OrSetState:
    elems: frozenset = frozenset()


@dataclass(frozen=True)
class RgaState:
    nodes: frozenset = frozenset()  # (parent, ts, elem)
    tomb: frozenset = frozenset()

    def elems(self):
        return {e for _, _, e in self.nodes}


@dataclass(frozen=True)
class WookiState:
    chars: tuple = (WChar(None, BEGIN, 0), WChar(None, END, 0))

    def pos(self, value) -> int:
        for i, c in enumerate(self.chars):
            if c.value == value:
                return i
        return -1


# ---- CRDT definitions --------------------------------------------------------

TsSupplier = Callable[[], Timestamp]


class OpCrdt:
    """Base class. Subclasses fill in the method tables."""

    kind = ""
    queries = frozenset()
    ts_methods = frozenset()
    weights: dict = {}

    def initial(self):
        raise NotImplementedError

    def generate(self, state, method, args, fresh: OpId, next_ts: TsSupplier):
        handler = getattr(self, "gen_" + method.replace("-", "_"), None)
        if handler is None:
            raise PreconditionViolated(method, f"unknown method for {self.kind}")
        return handler(state, tuple(args), fresh, next_ts)

    def effect(self, state, payload):
        raise NotImplementedError

    def state_ts(self, state) -> list:
        """Timestamps stored in a state."""
        return []

    def sample_call(self, state, rng, fresh: Callable[[], str]):
        """Pick a random invocation whose precondition holds at ``state``."""
        options = [m for m in self.weights if self._enabled(state, m)]
        method = rng.choices(options, weights=[self.weights[m] for m in options])[0]
        return method, self._sample_args(state, method, rng, fresh)

    def _enabled(self, state, method) -> bool:
        return True

    def _sample_args(self, state, method, rng, fresh):
        return ()


class Counter(OpCrdt):
    kind = "counter"
    queries = frozenset({"read"})
    weights = {"inc": 3, "dec": 2, "read": 2}

    def initial(self):
        return CounterState()

    def gen_inc(self, state, args, fresh, next_ts):
        return None, Inc(), None

    def gen_dec(self, state, args, fresh, next_ts):
        return None, Dec(), None

    def gen_read(self, state, args, fresh, next_ts):
        return state.ctr, None, None

    def effect(self, state, payload):
        if isinstance(payload, Inc):
            return CounterState(state.ctr + 1)
        if isinstance(payload, Dec):
            return CounterState(state.ctr - 1)
        raise TypeError(payload)


class LwwRegister(OpCrdt):
    kind = "lww"
    queries = frozenset({"read"})
    ts_methods = frozenset({"write"})
    weights = {"write": 3, "read": 2}
    domain = ("x", "y", "z")

    def initial(self):
        return LwwRegisterState()

    def gen_write(self, state, args, fresh, next_ts):
        if len(args) != 1:
            raise PreconditionViolated("write", "expects one argument")
        ts = next_ts()
        return None, LwwWrite(args[0], ts), ts

    def gen_read(self, state, args, fresh, next_ts):
        return state.value, None, None

    def effect(self, state, payload):
        if ts_less(state.ts, payload.ts):
            return LwwRegisterState(payload.value, payload.ts)
        return state

    def state_ts(self, state):
        return [state.ts] if state.ts is not None else []

    def _sample_args(self, state, method, rng, fresh):
        return (rng.choice(self.domain),) if method == "write" else ()


class OrSet(OpCrdt):
    kind = "orset"
    queries = frozenset({"read"})
    weights = {"add": 3, "remove": 2, "read": 2}
    domain = ("a", "b")

    def initial(self):
        return OrSetState()

    def gen_add(self, state, args, fresh, next_ts):
        (a,) = args
        return fresh, OrAdd(a, fresh), None

    def gen_remove(self, state, args, fresh, next_ts):
        (a,) = args
        pairs = frozenset(p for p in state.elems if p[0] == a)
        return pairs, OrRemove(pairs), None

    def gen_read(self, state, args, fresh, next_ts):
        return frozenset(a for a, _ in state.elems), None, None

    def effect(self, state, payload):
        if isinstance(payload, OrAdd):
            return OrSetState(state.elems | {(payload.elem, payload.k)})
        if isinstance(payload, OrRemove):
            return OrSetState(state.elems - payload.pairs)
        raise TypeError(payload)

    def _sample_args(self, state, method, rng, fresh):
        return (rng.choice(self.domain),) if method in ("add", "remove") else ()


def rga_traverse(state: RgaState, include_tomb: bool = False) -> tuple:
    """Pre-order walk from the root, later timestamps first among siblings."""
    children = {}
    for parent, ts, elem in state.nodes:
        children.setdefault(parent, []).append((ts, elem))
    for kids in children.values():
        kids.sort(reverse=True)
    out = []
    stack = [e for _, e in reversed(children.get(ROOT, []))]
    while stack:
        elem = stack.pop()
        if include_tomb or elem not in state.tomb:
            out.append(elem)
        stack.extend(e for _, e in reversed(children.get(elem, [])))
    return tuple(out)


class Rga(OpCrdt):
    """RGA with the addAfter interface, plus an index-based addAt."""

    kind = "rga"
    queries = frozenset({"read"})
    ts_methods = frozenset({"addAfter", "addAt"})
    weights = {"addAfter": 4, "remove": 2, "read": 2}

    def initial(self):
        return RgaState()

    def gen_addAfter(self, state, args, fresh, next_ts):
        a, b = args
        elems = state.elems()
        if not (a == ROOT or (a in elems and a not in state.tomb)):
            raise PreconditionViolated("addAfter", f"{a} is not in the list")
        if b == ROOT or b in elems:
            raise PreconditionViolated("addAfter", f"{b} is not fresh")
        ts = next_ts()
        return None, AddAfter(a, ts, b), ts

    def gen_remove(self, state, args, fresh, next_ts):
        (a,) = args
        if a == ROOT or a not in state.elems() or a in state.tomb:
            raise PreconditionViolated("remove", f"{a} is not in the list")
        return None, RgaRemove(a), None

    def gen_read(self, state, args, fresh, next_ts):
        return rga_traverse(state), None, None

    def gen_addAt(self, state, args, fresh, next_ts):
        a, k = args
        return rga_add_at(state, a, k, next_ts, returning=False)

    def effect(self, state, payload):
        if isinstance(payload, AddAfter):
            if payload.parent != ROOT and payload.parent not in state.elems():
                raise BrokenCausality(f"parent {payload.parent} missing")
            return RgaState(state.nodes | {(payload.parent, payload.ts, payload.elem)}, state.tomb)
        if isinstance(payload, RgaRemove):
            if payload.elem not in state.elems():
                raise BrokenCausality(f"{payload.elem} missing")
            return RgaState(state.nodes, state.tomb | {payload.elem})
        raise TypeError(payload)

    def state_ts(self, state):
        return [ts for _, ts, _ in state.nodes]

    def _enabled(self, state, method):
        if method == "remove":
            return bool(rga_traverse(state))
        return True

    def _sample_args(self, state, method, rng, fresh):
        visible = rga_traverse(state)
        if method == "addAfter":
            return (rng.choice((ROOT,) + visible), fresh())
        if method == "remove":
            return (rng.choice(visible),)
        if method == "addAt":
            return (fresh(), rng.randint(0, len(visible) + 1))
        return ()


class RgaAt(Rga):
    """RGA behind the index interface whose updates return the local list."""

    kind = "rga-at"
    weights = {"addAt": 4, "remove": 2, "read": 2}

    def gen_addAt(self, state, args, fresh, next_ts):
        a, k = args
        return rga_add_at(state, a, k, next_ts, returning=True)

    def gen_remove(self, state, args, fresh, next_ts):
        _, payload, _ = Rga.gen_remove(self, state, args, fresh, next_ts)
        return rga_traverse(self.effect(state, payload)), payload, None


def rga_add_at(state: RgaState, a, k: int, next_ts: TsSupplier, returning: bool = True):
    """Insert ``a`` at index ``k`` of the visible list by delegating to addAfter."""
    s = rga_traverse(state)
    if not s or k == 0:
        b = ROOT
    elif len(s) >= k:
        b = s[k - 1]
    else:
        b = s[-1]
    if a == ROOT or a in state.elems():
        raise PreconditionViolated("addAt", f"{a} is not fresh")
    ts = next_ts()
    payload = AddAfter(b, ts, a)
    ret = None
    if returning:
        ret = rga_traverse(_RGA.effect(state, payload))
    return ret, payload, ts


def wooki_integrate_ins(state: WookiState, w: WChar, w_p, w_n) -> WookiState:
    """Place ``w`` strictly between the characters valued ``w_p`` and ``w_n``."""
    chars = state.chars
    prev = w_p.value if isinstance(w_p, WChar) else w_p
    nxt = w_n.value if isinstance(w_n, WChar) else w_n
    while True:
        values = [c.value for c in chars]
        if prev not in values or nxt not in values:
            raise BrokenCausality(f"neighbours {prev}/{nxt} missing")
        ip, inx = values.index(prev), values.index(nxt)
        sub = chars[ip + 1:inx]
        if not sub:
            return WookiState(chars[:inx] + (w,) + chars[inx:])
        dmin = min(c.degree for c in sub)
        f = [c for c in sub if c.degree == dmin]
        if ts_less(w.id, f[0].id):
            nxt = f[0].value
            continue
        i = 0
        while i < len(f) - 1 and ts_less(f[i].id, w.id):
            i += 1
        if i == len(f) - 1 and ts_less(f[i].id, w.id):
            prev = f[i].value
        else:
            prev, nxt = f[i - 1].value, f[i].value


class Wooki(OpCrdt):
    kind = "wooki"
    queries = frozenset({"read"})
    ts_methods = frozenset({"addBetween"})
    weights = {"addBetween": 4, "remove": 2, "read": 2}

    def initial(self):
        return WookiState()

    def gen_addBetween(self, state, args, fresh, next_ts):
        a, b, c = args
        pa, pc = state.pos(a), state.pos(c)
        if c == BEGIN or a == END or b in (BEGIN, END):
            raise PreconditionViolated("addBetween", "sentinel misuse")
        if pa < 0 or pc < 0 or pc <= pa:
            raise PreconditionViolated("addBetween", f"{a} must precede {c}")
        if state.pos(b) >= 0:
            raise PreconditionViolated("addBetween", f"{b} is not fresh")
        ts = next_ts()
        degree = max(state.chars[pa].degree, state.chars[pc].degree) + 1
        return None, WookiAdd(WChar(ts, b, degree), a, c), ts

    def gen_remove(self, state, args, fresh, next_ts):
        (a,) = args
        if a in (BEGIN, END) or state.pos(a) < 0:
            raise PreconditionViolated("remove", f"{a} is not in the string")
        return None, WookiRemove(a), None

    def gen_read(self, state, args, fresh, next_ts):
        return wooki_values(state), None, None

    def effect(self, state, payload):
        if isinstance(payload, WookiAdd):
            return wooki_integrate_ins(state, payload.w, payload.prev, payload.next)
        if isinstance(payload, WookiRemove):
            p = state.pos(payload.value)
            if p < 0:
                raise BrokenCausality(f"{payload.value} missing")
            chars = list(state.chars)
            chars[p] = replace(chars[p], visible=False)
            return WookiState(tuple(chars))
        raise TypeError(payload)

    def state_ts(self, state):
        return [c.id for c in state.chars if c.id is not None]

    def _enabled(self, state, method):
        if method == "remove":
            return len(state.chars) > 2
        return True

    def _sample_args(self, state, method, rng, fresh):
        values = [c.value for c in state.chars]
        if method == "addBetween":
            i = rng.randrange(len(values) - 1)
            j = rng.randrange(i + 1, len(values))
            return (values[i], fresh(), values[j])
        if method == "remove":
            return (rng.choice(values[1:-1]),)
        return ()


def wooki_values(state: WookiState) -> tuple:
    return tuple(c.value for c in state.chars[1:-1] if c.visible)


_RGA = Rga()

CRDTS = {c.kind: c for c in (Counter(), LwwRegister(), OrSet(), _RGA, RgaAt(), Wooki())}


def get(kind: str) -> OpCrdt:
    try:
        return CRDTS[kind]
    except KeyError:
        raise ValueError(f"unknown op-based CRDT {kind!r}") from None


def apply_generator(kind, state, method, args, fresh_id: OpId, ts_supplier: TsSupplier):
    return get(kind).generate(state, method, args, fresh_id, ts_supplier)


def apply_effector(kind, state, payload):
    return get(kind).effect(state, payload)

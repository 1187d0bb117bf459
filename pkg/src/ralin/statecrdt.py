"""State-based CRDTs: PN-Counter, multi-value register, 2P-Set, LWW-element-set.

Besides ``do``/``merge``/``compare`` every CRDT exposes ``apply_local``, the
"local effector" view of an operation used by the merge/apply exchange laws,
and the side predicates those laws are conditioned on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .model import Timestamp, ts_less
from .opcrdt import PreconditionViolated


class ShapeMismatch(ValueError):
    """Two vector states built for different replica counts."""


# ---- states ----------------------------------------------------------------


@dataclass(frozen=True)
class PnCounterState:
    P: tuple
    N: tuple


@dataclass(frozen=True)
class MvRegisterState:
    S: frozenset = frozenset()  # (value, version vector)


@dataclass(frozen=True)
class TwoPSetState:
    A: frozenset = frozenset()
    R: frozenset = frozenset()


@dataclass(frozen=True)
class LwwElementSetState:
    A: frozenset = frozenset()  # (value, ts)
    R: frozenset = frozenset()


# ---- local effector arguments --------------------------------------------------


@dataclass(frozen=True)
class MvrWrite:
    a: Any
    V: tuple


@dataclass(frozen=True)
class LwwAdd:
    a: Any
    ts: Timestamp


@dataclass(frozen=True)
class LwwRem:
    a: Any
    ts: Timestamp


@dataclass(frozen=True)
class PnInc:
    r: int


@dataclass(frozen=True)
class PnDec:
    r: int


@dataclass(frozen=True)
class TwoPAdd:
    a: Any


@dataclass(frozen=True)
class TwoPRem:
    a: Any


# ---- version vectors -----------------------------------------------------------


def vv_leq(v, w) -> bool:
    if len(v) != len(w):
        raise ShapeMismatch(f"vectors of length {len(v)} and {len(w)}")
    return all(x <= y for x, y in zip(v, w))


def vv_less(v, w) -> bool:
    return vv_leq(v, w) and v != w


# ---- CRDTs -------------------------------------------------------------------


class SbCrdt:
    kind = ""
    queries = frozenset({"read"})
    ts_methods = frozenset()
    effect_class = ""  # "unique", "cumulative" or "idempotent"
    weights: dict = {}

    def initial(self, n: int):
        raise NotImplementedError

    def do(self, state, method, args, replica: int, next_ts: Callable[[], Timestamp]):
        """Run ``method`` at ``replica``; returns ``(ret, new_state, local_arg)``."""
        handler = getattr(self, "do_" + method, None)
        if handler is None:
            raise PreconditionViolated(method, f"unknown method for {self.kind}")
        return handler(state, tuple(args), replica, next_ts)

    def do_read(self, state, args, replica, next_ts):
        return self.read(state), state, None

    def read(self, state):
        raise NotImplementedError

    def merge(self, s1, s2):
        raise NotImplementedError

    def compare(self, s1, s2) -> bool:
        raise NotImplementedError

    def apply_local(self, state, arg):
        raise NotImplementedError

    def hypothesis(self, state, arg) -> bool:
        """P1 for uniquely identified effectors, P2 for the other two classes."""
        raise NotImplementedError

    def sample_call(self, state, rng, fresh):
        options = [m for m in self.weights if self._enabled(state, m)]
        method = rng.choices(options, weights=[self.weights[m] for m in options])[0]
        return method, self._sample_args(state, method, rng, fresh)

    def _enabled(self, state, method):
        return True

    def _sample_args(self, state, method, rng, fresh):
        return ()


class PnCounter(SbCrdt):
    kind = "pn"
    effect_class = "cumulative"
    weights = {"inc": 3, "dec": 2, "read": 2}

    def initial(self, n):
        return PnCounterState((0,) * n, (0,) * n)

    def do_inc(self, state, args, replica, next_ts):
        arg = PnInc(replica)
        return None, self.apply_local(state, arg), arg

    def do_dec(self, state, args, replica, next_ts):
        arg = PnDec(replica)
        return None, self.apply_local(state, arg), arg

    def read(self, state):
        return sum(state.P) - sum(state.N)

    def _check(self, s1, s2):
        if len(s1.P) != len(s2.P) or len(s1.N) != len(s2.N):
            raise ShapeMismatch("PN-Counter vectors differ in length")

    def merge(self, s1, s2):
        self._check(s1, s2)
        return PnCounterState(
            tuple(map(max, s1.P, s2.P)), tuple(map(max, s1.N, s2.N))
        )

    def compare(self, s1, s2):
        self._check(s1, s2)
        return vv_leq(s1.P, s2.P) and vv_leq(s1.N, s2.N)

    def apply_local(self, state, arg):
        if not 0 <= arg.r < len(state.P):
            raise ShapeMismatch(f"replica {arg.r} outside vector")
        if isinstance(arg, PnInc):
            P = list(state.P)
            P[arg.r] += 1
            return PnCounterState(tuple(P), state.N)
        N = list(state.N)
        N[arg.r] += 1
        return PnCounterState(state.P, tuple(N))

    def hypothesis(self, state, arg):
        vec = state.P if isinstance(arg, PnInc) else state.N
        return vec[arg.r] == 0


class MvRegister(SbCrdt):
    kind = "mvr"
    effect_class = "unique"
    weights = {"write": 3, "read": 2}
    domain = ("x", "y", "z")

    def initial(self, n):
        self_n = n  # kept for symmetry with the vector CRDTs
        del self_n
        return MvRegisterState()

    def do_write(self, state, args, replica, next_ts, n=None):
        (a,) = args
        width = n or self._width(state, replica)
        V = [0] * width
        for _, W in state.S:
            V = [max(x, y) for x, y in zip(V, W)]
        V[replica] += 1
        arg = MvrWrite(a, tuple(V))
        # the generated vector doubles as the return value so a rewriting can read it
        return arg.V, MvRegisterState(frozenset({(a, arg.V)})), arg

    def _width(self, state, replica):
        for _, W in state.S:
            return len(W)
        return getattr(self, "width", replica + 1)

    def read(self, state):
        return frozenset(a for a, _ in state.S)

    def merge(self, s1, s2):
        keep1 = {(a, V) for a, V in s1.S if not any(vv_less(V, W) for _, W in s2.S)}
        keep2 = {(a, V) for a, V in s2.S if not any(vv_less(V, W) for _, W in s1.S)}
        return MvRegisterState(frozenset(keep1 | keep2))

    def compare(self, s1, s2):
        return all(any(vv_leq(V, W) for _, W in s2.S) for _, V in s1.S)

    def apply_local(self, state, arg):
        kept = {(a, V) for a, V in state.S if not vv_less(V, arg.V)}
        return MvRegisterState(frozenset(kept | {(arg.a, arg.V)}))

    def hypothesis(self, state, arg):
        return not any(vv_less(arg.V, W) for _, W in state.S)

    def _sample_args(self, state, method, rng, fresh):
        return (rng.choice(self.domain),) if method == "write" else ()


class TwoPSet(SbCrdt):
    kind = "twop"
    effect_class = "idempotent"
    weights = {"add": 3, "remove": 2, "read": 2}

    def initial(self, n):
        return TwoPSetState()

    def do_add(self, state, args, replica, next_ts):
        arg = TwoPAdd(args[0])
        return None, self.apply_local(state, arg), arg

    def do_remove(self, state, args, replica, next_ts):
        (a,) = args
        if a not in state.A or a in state.R:
            raise PreconditionViolated("remove", f"{a} is not in the set")
        arg = TwoPRem(a)
        return None, self.apply_local(state, arg), arg

    def read(self, state):
        return frozenset(state.A - state.R)

    def merge(self, s1, s2):
        return TwoPSetState(s1.A | s2.A, s1.R | s2.R)

    def compare(self, s1, s2):
        return s1.A <= s2.A and s1.R <= s2.R

    def apply_local(self, state, arg):
        if isinstance(arg, TwoPAdd):
            return TwoPSetState(state.A | {arg.a}, state.R)
        return TwoPSetState(state.A, state.R | {arg.a})

    def hypothesis(self, state, arg):
        if isinstance(arg, TwoPAdd):
            return arg.a not in state.A
        return arg.a not in state.R

    def _enabled(self, state, method):
        return method != "remove" or bool(state.A - state.R)

    def _sample_args(self, state, method, rng, fresh):
        if method == "add":
            return (fresh(),)
        if method == "remove":
            return (rng.choice(sorted(state.A - state.R)),)
        return ()


class LwwElementSet(SbCrdt):
    kind = "lwwset"
    effect_class = "unique"
    ts_methods = frozenset({"add", "remove"})
    weights = {"add": 3, "remove": 2, "read": 2}
    domain = ("a", "b", "c")

    def initial(self, n):
        return LwwElementSetState()

    def do_add(self, state, args, replica, next_ts):
        arg = LwwAdd(args[0], next_ts())
        return None, self.apply_local(state, arg), arg

    def do_remove(self, state, args, replica, next_ts):
        arg = LwwRem(args[0], next_ts())
        return None, self.apply_local(state, arg), arg

    def read(self, state):
        return frozenset(
            b for b, tb in state.A
            if all(ts_less(t, tb) for c, t in state.R if c == b)
        )

    def merge(self, s1, s2):
        return LwwElementSetState(s1.A | s2.A, s1.R | s2.R)

    def compare(self, s1, s2):
        return s1.A <= s2.A and s1.R <= s2.R

    def apply_local(self, state, arg):
        if isinstance(arg, LwwAdd):
            return LwwElementSetState(state.A | {(arg.a, arg.ts)}, state.R)
        return LwwElementSetState(state.A, state.R | {(arg.a, arg.ts)})

    def hypothesis(self, state, arg):
        return not any(ts_less(arg.ts, t) for _, t in state.A | state.R)

    def _sample_args(self, state, method, rng, fresh):
        return (rng.choice(self.domain),) if method in ("add", "remove") else ()


def arg_ts(arg):
    """Timestamp carried by a local argument, if any."""
    return getattr(arg, "ts", None)


SB_CRDTS = {c.kind: c for c in (PnCounter(), MvRegister(), TwoPSet(), LwwElementSet())}


def get(kind: str) -> SbCrdt:
    try:
        return SB_CRDTS[kind]
    except KeyError:
        raise ValueError(f"unknown state-based CRDT {kind!r}") from None


def sb_do(kind, state, method, args, replica, next_ts=None, n=None):
    crdt = get(kind)
    if kind == "mvr":
        if method == "write":
            return crdt.do_write(state, tuple(args), replica, next_ts, n=n)
    return crdt.do(state, method, args, replica, next_ts)


def sb_merge(kind, s1, s2):
    return get(kind).merge(s1, s2)


def sb_compare(kind, s1, s2) -> bool:
    return get(kind).compare(s1, s2)


def sb_apply_local(kind, state, arg):
    return get(kind).apply_local(state, arg)

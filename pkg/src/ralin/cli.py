"""Command-line front end: trace and history files, scenarios, fuzzing, property reports.

Trace files hold one event per line::

    obj name=o crdt=rga
    op r=0 obj=o m=addAfter args=["@","a"]
    dlv r=1 id=0.0
    snd r=0 mid=0
    app r=1 mid=0

``#`` starts a comment. Exit codes: 0 pass, 1 rejected, 2 usage or input
error, 3 internal invariant breach.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import shlex
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import checker, opcrdt, runtime, statecrdt
from .model import (
    Apply, Deliver, History, Invoke, OpId, Send, Timestamp, Trace, UnknownLabel,
)
from .spec import DEFAULTS, MissingRewrite, NotRewritten, get_gamma, get_spec, qu_rewrite

EXIT_OK, EXIT_REJECTED, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class ParseError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


# ---- trace files ---------------------------------------------------------------------


_FIELDS = {
    "obj": ("name", "crdt"),
    "op": ("r", "obj", "m", "args"),
    "dlv": ("r", "id"),
    "snd": ("r", "mid"),
    "app": ("r", "mid"),
}


def _split_fields(lineno, rest):
    out = {}
    for tok in shlex.split(rest, posix=False):
        if "=" not in tok:
            raise ParseError(lineno, f"expected key=value, got {tok!r}")
        key, value = tok.split("=", 1)
        out[key] = value
    return out


def _to_args(value):
    if isinstance(value, list):
        return tuple(_to_args(v) for v in value)
    return value


def parse_trace_text(text: str) -> Trace:
    events, objects = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, _, rest = line.partition(" ")
        if kind not in _FIELDS:
            raise ParseError(lineno, f"unknown record {kind!r}")
        if kind == "op":
            # args is JSON and may contain spaces, so peel it off first
            head, sep, args_text = rest.partition("args=")
            fields = _split_fields(lineno, head)
            try:
                fields["args"] = json.loads(args_text) if sep else []
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"bad args: {exc}") from None
        else:
            fields = _split_fields(lineno, rest)
        required = [f for f in _FIELDS[kind] if f != "args"]
        missing = [f for f in required if f not in fields]
        if missing:
            raise ParseError(lineno, f"{kind} needs {', '.join(missing)}")
        try:
            if kind == "obj":
                objects.append((fields["name"], fields["crdt"]))
            elif kind == "op":
                if not isinstance(fields["args"], list):
                    raise ParseError(lineno, "args must be a JSON array")
                events.append(Invoke(int(fields["r"]), fields["obj"], fields["m"],
                                     _to_args(fields["args"])))
            elif kind == "dlv":
                events.append(Deliver(int(fields["r"]), OpId.parse(fields["id"])))
            elif kind == "snd":
                events.append(Send(int(fields["r"]), int(fields["mid"])))
            else:
                events.append(Apply(int(fields["r"]), int(fields["mid"])))
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(lineno, str(exc)) from None
    return Trace(tuple(events), tuple(objects))


def parse_trace(path) -> Trace:
    return parse_trace_text(Path(path).read_text())


def _json(value) -> str:
    return json.dumps(encode_value(value), separators=(",", ":"), sort_keys=True)


def serialize_trace(tr: Trace) -> str:
    lines = [f"obj name={name} crdt={kind}" for name, kind in tr.objects]
    for ev in tr.events:
        if isinstance(ev, Invoke):
            lines.append(f"op r={ev.replica} obj={ev.obj} m={ev.method} args={_json(list(ev.args))}")
        elif isinstance(ev, Deliver):
            lines.append(f"dlv r={ev.replica} id={ev.id}")
        elif isinstance(ev, Send):
            lines.append(f"snd r={ev.replica} mid={ev.mid}")
        else:
            lines.append(f"app r={ev.replica} mid={ev.mid}")
    return "\n".join(lines) + "\n"


# ---- history files -----------------------------------------------------------------------


def encode_value(value):
    """JSON-friendly canonical form; sets are sorted so output is stable."""
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, OpId):
        return f"#{value}"
    if isinstance(value, Timestamp):
        return str(value)
    if isinstance(value, (tuple, list)):
        return [encode_value(v) for v in value]
    if isinstance(value, (set, frozenset)):
        items = [encode_value(v) for v in value]
        return sorted(items, key=lambda x: json.dumps(x, sort_keys=True))
    return repr(value)


def serialize_history(h: History) -> str:
    lines = []
    for lab in h.labels:
        ts = "-" if lab.ts is None else str(lab.ts)
        lines.append(
            f"label id={lab.id} obj={lab.obj} m={lab.method} ts={ts} "
            f"args={_json(list(lab.args))} ret={_json(lab.ret)}"
        )
    for a, b in sorted(h.vis):
        lines.append(f"vis {a} {b}")
    return "\n".join(lines) + "\n"


# ---- scenarios ---------------------------------------------------------------------------------


def golden_dir() -> Path:
    env = os.environ.get("RALIN_GOLDEN_DIR")
    return Path(env) if env else Path(__file__).with_name("golden")


def scenario_path(name: str) -> Path:
    name = name[len("golden/"):] if name.startswith("golden/") else name
    path = golden_dir() / f"{name}.trace"
    if not path.exists():
        raise FileNotFoundError(f"no golden scenario {name!r} in {golden_dir()}")
    return path


def _load(args) -> tuple:
    """Returns ``(name, trace)`` from --scenario or --trace."""
    if args.scenario and args.trace:
        raise UsageError("give either --scenario or --trace, not both")
    if args.scenario:
        path = scenario_path(args.scenario)
    elif args.trace:
        path = Path(args.trace)
    else:
        raise UsageError("a --scenario or --trace is required")
    tr = parse_trace(path)
    if not tr.objects:
        if not args.crdt:
            raise UsageError("trace declares no objects; pass --crdt")
        kinds = _kinds_from_flag(args.crdt)
        if len(kinds) != 1:
            raise UsageError("an undeclared trace takes a single --crdt")
        kind = next(iter(kinds.values()))
        objs = sorted({ev.obj for ev in tr.events if isinstance(ev, Invoke)}) or ["o"]
        tr = Trace(tr.events, tuple((o, kind) for o in objs), tr.replicas)
    return path.stem, tr


class UsageError(ValueError):
    pass


def _write(out, name, text):
    if out is None:
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)


def _report_text(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


@dataclass
class RunConfig:
    """Everything a command needs; every field has a default."""

    kinds: dict = field(default_factory=dict)  # object name -> CRDT kind
    replicas: int = 3
    ops: int = 8
    runs: int = 100
    seed: int = 0
    spec: Optional[str] = None
    gamma: Optional[str] = None
    mode: str = "exhaustive"
    shared_ts: bool = False
    bound: int = checker.DEFAULT_BOUND
    out: Optional[str] = None

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        kinds = _kinds_from_flag(args.crdt) if args.crdt else {}
        return cls(kinds, args.replicas, args.ops, args.runs, args.seed, args.spec,
                   args.gamma, args.mode, args.shared_ts, args.bound, args.out)


def _specs_for(objects, cfg: RunConfig):
    specs, gammas = {}, {}
    for obj, kind in objects:
        spec_name, gamma_name = DEFAULTS[kind]
        specs[obj] = get_spec(cfg.spec or spec_name)
        gammas[obj] = get_gamma(cfg.gamma or gamma_name)
    return specs, gammas


def _verdict_dict(v: checker.Verdict) -> dict:
    return {
        "accepted": v.accepted,
        "witness": [str(x) for x in v.witness] if v.witness else None,
        "item": v.item,
        "label": str(v.label) if v.label is not None else None,
        "reason": v.reason,
    }


_TS_KINDS = {"rga", "rga-at", "lww", "lwwset"}


def check_trace(tr: Trace, cfg: RunConfig) -> tuple:
    """Replay, extract, check. Returns ``(accepted, history, report)``."""
    final = runtime.run_trace(tr, shared_ts=cfg.shared_ts)
    h = runtime.extract_history(final)
    specs, gammas = _specs_for(tr.objects, cfg)
    report = {"objects": [list(o) for o in tr.objects], "labels": len(h)}
    accepted = True
    if cfg.mode in ("exhaustive", "both"):
        if len(specs) == 1:
            (obj, spec), = specs.items()
            v = checker.check_ra_exhaustive(h, spec, gammas[obj], cfg.bound)
        else:
            v = checker.check_composition(h, specs, gammas, cfg.bound)
        report["exhaustive"] = _verdict_dict(v)
        accepted &= v.accepted
    if cfg.mode in ("constructive", "both"):
        gamma = checker.PerObjectGamma(gammas)
        spec = checker.compose(specs) if len(specs) > 1 else next(iter(specs.values()))
        by_ts = bool({k for _, k in tr.objects} & _TS_KINDS)
        if by_ts:
            lin = checker.build_timestamp_order_lin(final, h, gamma)
        else:
            lin = checker.build_execution_order_lin(final, h, gamma)
        v = checker.validate_linearization(qu_rewrite(h, gamma), lin, spec)
        report["constructive"] = dict(_verdict_dict(v), order="timestamp" if by_ts else "execution",
                                      linearization=[str(x) for x in lin])
        accepted &= v.accepted
    report["accepted"] = accepted
    return accepted, h, report


def run_scenario(cfg: RunConfig, tr: Trace, name: str = "run") -> tuple:
    """Check one trace and write ``<name>.history`` and ``<name>.report.json``.

    Returns ``(exit status, report)``.
    """
    accepted, h, report = check_trace(tr, cfg)
    _write(cfg.out, f"{name}.history", serialize_history(h))
    _write(cfg.out, f"{name}.report.json", _report_text(report))
    return (EXIT_OK if accepted else EXIT_REJECTED), report


# ---- subcommands ------------------------------------------------------------------------------


def cmd_run(args) -> int:
    name, tr = _load(args)
    final = runtime.run_trace(tr, shared_ts=args.shared_ts)
    text = serialize_history(runtime.extract_history(final))
    _write(args.out, f"{name}.history", text)
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    name, tr = _load(args)
    status, report = run_scenario(RunConfig.from_args(args), tr, name)
    print(f"{name}: {'accepted' if report['accepted'] else 'rejected'}")
    return status


def _kinds_from_flag(crdt: str) -> dict:
    names = [c.strip() for c in (crdt or "").split(",") if c.strip()]
    if not names:
        raise UsageError("--crdt is required")
    for k in names:
        if k not in DEFAULTS:
            raise UsageError(f"unknown CRDT kind {k!r}; known: {', '.join(sorted(DEFAULTS))}")
    if len(names) == 1:
        return {"o": names[0]}
    return {f"o{i + 1}": k for i, k in enumerate(names)}


def gen_workload(cfg: RunConfig, seed: int) -> Trace:
    """Random well-formed trace for ``cfg.kinds``, reproducible from ``seed``."""
    if not cfg.kinds:
        raise UsageError("no CRDT kinds configured")
    rng = random.Random(seed)
    if any(runtime.is_state_based(k) for k in cfg.kinds.values()):
        tr, _ = runtime.random_sb_run(cfg.kinds, cfg.replicas, cfg.ops, rng)
    else:
        tr, _ = runtime.random_op_run(cfg.kinds, cfg.replicas, cfg.ops, rng, shared_ts=cfg.shared_ts)
    return tr


def run_seed(cfg: RunConfig, i: int) -> int:
    return cfg.seed * 100003 + i


def cmd_fuzz(args) -> int:
    cfg = RunConfig.from_args(args)
    if not cfg.kinds:
        raise UsageError("--crdt is required")
    results, failures = [], 0
    for i in range(cfg.runs):
        tr = gen_workload(cfg, run_seed(cfg, i))
        accepted, h, rep = check_trace(tr, cfg)
        entry = {"run": i, "accepted": accepted, "labels": len(h)}
        for key in ("exhaustive", "constructive"):
            if key in rep:
                entry[key] = rep[key]["accepted"]
        if cfg.mode == "both" and entry["exhaustive"] != entry["constructive"]:
            entry["disagree"] = True
            accepted = False
        if len(cfg.kinds) > 1 and cfg.shared_ts:
            entry["ts_order_acyclic"] = checker.ts_order_consistent(h)
            accepted &= entry["ts_order_acyclic"]
        if not accepted:
            failures += 1
            _write(cfg.out, f"fail-{i}.trace", serialize_trace(tr))
        results.append(entry)
    report = {
        "crdt": args.crdt, "replicas": cfg.replicas, "ops": cfg.ops, "runs": cfg.runs,
        "seed": cfg.seed, "mode": cfg.mode, "shared_ts": cfg.shared_ts,
        "failures": failures, "results": results,
    }
    _write(cfg.out, "fuzz.report.json", _report_text(report))
    print(f"fuzz {args.crdt}: {cfg.runs - failures}/{cfg.runs} passed")
    return EXIT_OK if failures == 0 else EXIT_REJECTED


def cmd_props(args) -> int:
    cfg = RunConfig.from_args(args)
    if len(cfg.kinds) != 1:
        raise UsageError("props takes a single --crdt")
    kind = next(iter(cfg.kinds.values()))
    reports = []
    if runtime.is_state_based(kind):
        for prop in checker.props_for(kind):
            reports.append(checker.check_sb_props(kind, prop, cfg.runs, cfg.seed))
    else:
        reports.append(checker.check_commutativity(kind, cfg.runs, cfg.seed))
        mode = "ts" if kind in ("rga", "rga-at", "lww") else "plain"
        reports.append(checker.check_refinement(kind, cfg.runs, cfg.seed, mode))
    data = {"crdt": kind, "seed": cfg.seed, "samples": cfg.runs,
            "reports": [r.as_dict() for r in reports]}
    _write(cfg.out, f"props-{kind}.report.json", _report_text(data))
    for r in reports:
        print(f"{r.kind} {r.check}: {'ok' if r.ok else 'FAILED'} ({r.samples} samples)")
    return EXIT_OK if all(r.ok for r in reports) else EXIT_REJECTED


def program_of(tr: Trace) -> dict:
    """Per-replica call lists of a trace, deliveries dropped."""
    prog = {}
    for ev in tr.events:
        if isinstance(ev, Invoke):
            prog.setdefault(ev.replica, []).append((ev.obj, ev.method, ev.args))
    return prog


def cmd_explore(args) -> int:
    """Check every schedule of the client program the trace's invocations describe."""
    name, tr = _load(args)
    cfg = RunConfig.from_args(args)
    results, rejected = [], 0
    schedules = runtime.enumerate_schedules(dict(tr.objects), program_of(tr), cfg.shared_ts)
    for i, (sched, _) in enumerate(schedules):
        accepted, h, _ = check_trace(sched, cfg)
        reads = [f"{lab.id}:{_json(lab.ret)}" for lab in h.labels if lab.method == "read"]
        results.append({"schedule": i, "accepted": accepted, "reads": reads})
        rejected += not accepted
    report = {"scenario": name, "schedules": len(results), "rejected": rejected, "results": results}
    _write(cfg.out, f"{name}.explore.json", _report_text(report))
    print(f"{name}: {len(results) - rejected}/{len(results)} schedules accepted")
    return EXIT_OK if rejected == 0 else EXIT_REJECTED


# ---- argument parsing ---------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def convert_arg_line_to_args(self, line):
        line = line.split("#", 1)[0].strip()
        return shlex.split(line) if line else []


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, fromfile_prefix_chars="@")
    common.add_argument("--scenario", help="golden scenario name, e.g. fig5a")
    common.add_argument("--trace", help="path to a trace file")
    common.add_argument("--crdt", help="CRDT kind, or a comma list for several objects")
    common.add_argument("--replicas", type=int, default=3)
    common.add_argument("--ops", type=int, default=8)
    common.add_argument("--runs", type=int, default=100)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--spec", help="specification name (default: per CRDT)")
    common.add_argument("--gamma", help="query-update rewriting (default: per CRDT)")
    common.add_argument("--mode", choices=("exhaustive", "constructive", "both"), default="exhaustive")
    common.add_argument("--shared-ts", action="store_true", help="one timestamp source for all objects")
    common.add_argument("--bound", type=int, default=checker.DEFAULT_BOUND)
    common.add_argument("--out", help="directory for history and report files")

    parser = _Parser(prog="ralin", fromfile_prefix_chars="@",
                     description="Simulate replicated data types and check their histories.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, text in (
        ("run", cmd_run, "replay a trace and print its history"),
        ("check", cmd_check, "replay a trace and check its history"),
        ("fuzz", cmd_fuzz, "check many random runs"),
        ("props", cmd_props, "sample the commutativity, refinement or merge laws"),
        ("explore", cmd_explore, "check every schedule of a trace's client program"),
    ):
        p = sub.add_parser(name, parents=[common], help=text, fromfile_prefix_chars="@")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ParseError, FileNotFoundError, checker.BoundExceeded,
            opcrdt.PreconditionViolated, runtime.CausalityViolation, runtime.UnknownMessage,
            runtime.DuplicateMessage, UnknownLabel, NotRewritten, MissingRewrite,
            statecrdt.ShapeMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # anything else means the simulator or checker broke
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

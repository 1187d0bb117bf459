"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with its numbers.
Time limits and sample counts are fixed here and never relaxed.
"""

import filecmp
import random
import time

import pytest

from ralin import checker, cli, runtime
from ralin.spec import get_gamma, get_spec, qu_rewrite

from conftest import golden

OP_KINDS = ["counter", "orset", "wooki", "rga", "lww"]
SB_KINDS = ["pn", "mvr", "twop", "lwwset"]
TS_BUILT = {"rga", "lww", "rga-at"}
BOUND = 16


@pytest.fixture
def say(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    return emit


def test_01_crossed_set_discrimination(say):
    t0 = time.perf_counter()
    _, _, h = golden("fig5a")
    as_set = checker.check_ra_exhaustive(h, get_spec("set"), get_gamma("identity"), BOUND)
    as_orset = checker.check_ra_exhaustive(h, get_spec("orset"), get_gamma("orset"), BOUND)
    dt = time.perf_counter() - t0
    ok = not as_set.accepted and as_orset.accepted and dt < 1.0
    say(1, ok, f"set rejected={not as_set.accepted} orset accepted={as_orset.accepted} in {dt:.3f}s (limit 1s)")
    assert ok


def test_02_timestamp_order_needed(say):
    t0 = time.perf_counter()
    _, cfg, h = golden("fig9")
    rga = get_spec("rga")
    ts = {lab.args[1]: lab.ts for lab in h.labels if lab.method == "addAfter"}
    by_exec = checker.validate_linearization(h, checker.build_execution_order_lin(cfg, h), rga)
    by_ts = checker.validate_linearization(h, checker.build_timestamp_order_lin(cfg, h), rga)
    full = checker.check_ra_exhaustive(h, rga, bound=BOUND)
    dt = time.perf_counter() - t0
    ok = (ts["a"] < ts["b"] < ts["c"] and not by_exec.accepted and by_exec.item == 3
          and by_ts.accepted and full.accepted and dt < 1.0)
    say(2, ok, f"execution order fails item {by_exec.item}, timestamp order ok={by_ts.accepted}, "
               f"search ok={full.accepted} in {dt:.3f}s (limit 1s)")
    assert ok


def test_03_constructive_linearizations(say):
    t0 = time.perf_counter()
    failures = []
    for kind in OP_KINDS:
        spec, gamma = checker.default_spec(kind)
        for seed in range(500):
            rng = random.Random(f"c3-{kind}-{seed}")
            replicas, ops = rng.randint(1, 3), rng.randint(1, 8)
            _, cfg = runtime.random_op_run({"o": kind}, replicas, ops, rng)
            h = runtime.extract_history(cfg)
            lin = checker.constructive_lin(cfg, h, kind, gamma)
            built = checker.validate_linearization(qu_rewrite(h, gamma), lin, spec).accepted
            searched = checker.check_ra_exhaustive(h, spec, gamma, BOUND).accepted
            if not (built and searched):
                failures.append((kind, seed, built, searched))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 300
    say(3, ok, f"{500 * len(OP_KINDS)} traces, {len(failures)} failures in {dt:.1f}s (limit 300s)")
    assert ok, failures[:5]


def test_04_commutativity(say):
    reports = [checker.check_commutativity(k, 1000, seed=11) for k in OP_KINDS + ["rga-at"]]
    reports += [checker.check_sb_commutativity(k, 1000, seed=11) for k in SB_KINDS]
    bad = [r.kind for r in reports if not r.ok or r.samples < 1000]
    low = min(r.samples for r in reports)
    say(4, not bad, f"{len(reports)} CRDTs, min {low} samples, failing: {bad or 'none'}")
    assert not bad


def test_05_refinement(say):
    modes = {"orset": "plain", "counter": "plain", "wooki": "plain", "rga": "ts", "lww": "ts"}
    reports = [checker.check_refinement(k, 10000, seed=5, mode=m) for k, m in modes.items()]
    bad = [r.kind for r in reports if not r.ok or r.samples < 10000]
    low = min(r.samples for r in reports)
    say(5, not bad, f"{len(reports)} CRDTs, min {low} samples, failing: {bad or 'none'}")
    assert not bad


def test_06_composition(say):
    t0 = time.perf_counter()
    _, _, h6 = golden("fig6")
    orset, og = get_spec("orset"), get_gamma("orset")
    v6 = checker.check_composition(h6, {"o1": orset, "o2": orset}, {"o1": og, "o2": og},
                                   BOUND, all_witnesses=True)
    name = {h6[op].args[0]: op for op in h6.ids()}
    want = tuple(name[x] for x in "dabc")
    witness_found = v6.accepted and want in v6.witnesses

    _, _, h7 = golden("fig7")
    rga = get_spec("rga")
    v7 = checker.check_composition(h7, {"o1": rga, "o2": rga}, bound=BOUND)

    kinds = {"o1": "rga", "o2": "orset"}
    specs = {"o1": rga, "o2": orset}
    gammas = {"o2": og}
    bad = []
    for seed in range(200):
        _, cfg = runtime.random_op_run(kinds, 3, 8, random.Random(f"c6-{seed}"), shared_ts=True)
        h = runtime.extract_history(cfg)
        acc = checker.check_composition(h, specs, gammas, BOUND).accepted
        acyclic = checker.ts_order_consistent(h)
        if not (acc and acyclic):
            bad.append((seed, acc, acyclic))
    dt = time.perf_counter() - t0
    ok = witness_found and not v7.accepted and not bad and dt < 120
    say(6, ok, f"two sets witness found={witness_found}, two lists rejected={not v7.accepted}, "
               f"shared-clock runs failing={len(bad)}/200 in {dt:.1f}s (limit 120s)")
    assert ok, bad[:5]


def test_07_index_interface(say):
    t0 = time.perf_counter()
    _, _, h = golden("appC")
    ts = [lab.ts for lab in sorted((l for l in h.labels if l.ts), key=lambda l: l.args[0])]
    reads = {tuple(lab.ret) for lab in h.labels if lab.method == "read"}
    r1 = checker.check_ra_exhaustive(h, get_spec("addat1"), bound=BOUND)
    r2 = checker.check_ra_exhaustive(h, get_spec("addat2"), bound=BOUND)
    r3 = checker.check_ra_exhaustive(h, get_spec("addat3"), bound=BOUND)
    bad = []
    for seed in range(200):
        _, cfg = runtime.random_op_run({"o": "rga-at"}, 3, 8, random.Random(f"c7-{seed}"))
        if not checker.check_ra_exhaustive(runtime.extract_history(cfg), get_spec("addat3"),
                                           bound=BOUND).accepted:
            bad.append(seed)
    dt = time.perf_counter() - t0
    ok = (ts == sorted(ts) and len(ts) == 5 and reads == {tuple("dec")}
          and not r1.accepted and not r2.accepted and r3.accepted and not bad and dt < 60)
    say(7, ok, f"golden rejected by first={not r1.accepted} second={not r2.accepted}, "
               f"accepted by third={r3.accepted}; random failing={len(bad)}/200 in {dt:.1f}s (limit 60s)")
    assert ok, bad[:5]


def test_08_state_based_laws(say):
    expected = {
        "mvr": {"Prop1", "Prop2", "Prop3", "Prop4", "Prop5"},
        "lwwset": {"Prop1", "Prop2", "Prop3", "Prop4", "Prop5"},
        "pn": {"Prop'1", "Prop'2", "Prop'3", "Prop4", "Prop5"},
        "twop": {"Prop'1", "Prop'2", "Prop'3", "Prop4", "Prop5", "Prop6"},
    }
    bad, count = [], 0
    for kind, props in expected.items():
        laws = set(checker.props_for(kind))
        if not (props | set(checker.LATTICE_LAWS)) <= laws:
            bad.append((kind, "missing laws"))
        for prop in sorted(laws):
            rep = checker.check_sb_props(kind, prop, 1000, seed=8)
            count += 1
            if not rep.ok or rep.samples < 1000:
                bad.append((kind, prop))
    say(8, not bad, f"{count} (CRDT, law) pairs at 1000 samples, failing: {bad or 'none'}")
    assert not bad


def _final_reads(cfg, n):
    reads = {}
    for lab in cfg.labels.values():
        if lab.method == "read":
            reads.setdefault(lab.obj, []).append(lab.ret)
    return {obj: vals[-n:] for obj, vals in reads.items()}


def test_09_convergence(say):
    bad = []
    for kind in OP_KINDS + ["rga-at"] + SB_KINDS:
        for seed in range(200):
            rng = random.Random(f"c9-{kind}-{seed}")
            if runtime.is_state_based(kind):
                _, cfg = runtime.random_sb_run({"o": kind}, 3, 8, rng, deliver_all=True)
            else:
                _, cfg = runtime.random_op_run({"o": kind}, 3, 8, rng, deliver_all=True)
            for vals in _final_reads(cfg, 3).values():
                if len(vals) != 3 or len(set(vals)) != 1:
                    bad.append((kind, seed))
    say(9, not bad, f"{200 * 10} full-delivery runs, diverging: {len(bad)}")
    assert not bad


def test_10_client_reasoning(say):
    t0 = time.perf_counter()
    tr = cli.parse_trace(cli.scenario_path("sec33"))
    schedules = runtime.enumerate_schedules(dict(tr.objects), cli.program_of(tr))
    spec, gamma = get_spec("orset"), get_gamma("orset")
    violations, linearizations, saw_a = 0, 0, 0
    for _, cfg in schedules:
        h = runtime.extract_history(cfg)
        v = checker.check_ra_exhaustive(h, spec, gamma, BOUND, all_witnesses=True)
        reads = {lab.id.origin: lab.ret for lab in h.labels if lab.method == "read"}
        holds = "a" not in reads[0] or "a" in reads[1]
        saw_a += "a" in reads[0]
        linearizations += len(v.witnesses)
        if not v.accepted or not holds:
            violations += 1
    dt = time.perf_counter() - t0
    ok = schedules and not violations and saw_a and dt < 30
    say(10, ok, f"{len(schedules)} schedules, {linearizations} linearizations, "
                f"{saw_a} with a in X, {violations} violations in {dt:.1f}s (limit 30s)")
    assert ok


def test_11_determinism(say, tmp_path):
    commands = [["check", "--scenario", g, "--mode", "both", "--bound", str(BOUND)]
                for g in ("fig3", "fig5a", "fig6", "fig7", "fig9", "fig12", "appC", "sec33")]
    commands += [
        ["fuzz", "--crdt", "rga", "--runs", "50", "--seed", "7", "--mode", "both"],
        ["fuzz", "--crdt", "rga,orset", "--shared-ts", "--runs", "30", "--seed", "2", "--bound", "16"],
        ["fuzz", "--crdt", "mvr", "--runs", "30", "--seed", "4", "--bound", "16"],
        ["props", "--crdt", "pn", "--runs", "100", "--seed", "1"],
        ["props", "--crdt", "wooki", "--runs", "100", "--seed", "1"],
        ["explore", "--scenario", "sec33"],
    ]
    for run in ("a", "b"):
        for i, cmd in enumerate(commands):
            cli.main(cmd + ["--out", str(tmp_path / run / str(i))])
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    diff = [f for f in files if not filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)]
    ok = bool(files) and not diff
    say(11, ok, f"{len(files)} history/report files compared, {len(diff)} differ")
    assert ok, diff

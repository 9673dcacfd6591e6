"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one PASS/FAIL line and the terminal summary repeats them
all. Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import time

import numpy as np
import pytest
from conftest import record_verdict

from bth.blocksym import (GENERATORS, AddFlowIndex, AddState, antisymmetry_residual, block_bracket_residual,
                          bracket_target, hierarchy_commutativity_residual, richardson, symbol_flow_check,
                          SYMBOL_FLOWS, witt_residuals)
from bth.cli import (Recorder, RunConfig, integrator_study, run_verify, suite_gamma_exact, suite_lax_oracles,
                     suite_orlov_schulman, suite_roots, suite_waves, suite_zakharov_shabat, trace_drift)
from bth.coeff import PolyRing
from bth.dressing import random_lax, random_poly_lax
from bth.errors import BTHError
from bth.hierarchy import TimeConfig


def run(suite, cfg=None, **kw):
    cfg = cfg or RunConfig()
    rec = Recorder(cfg, suite.__name__)
    t0 = time.perf_counter()
    suite(cfg, rec, **kw)
    return rec.records, time.perf_counter() - t0


def verdict(number, checks, extra_ok=True, note=""):
    """``checks`` holds ``(label, value, limit, ok)``; ``limit`` is None for range tests."""
    failed = [c for c in checks if not c[3]]
    ratios = []
    for _, value, limit, _ in checks:
        if limit is None or not math.isfinite(value):
            continue
        ratios.append(value / limit if limit > 0 else (0.0 if value == 0 else math.inf))
    ok = not failed and extra_ok and bool(checks)
    detail = f"{len(checks) - len(failed)}/{len(checks)} checks"
    if ratios:
        detail += f", worst residual/tolerance {max(ratios):.2e}"
    if note:
        detail += f"; {note}"
    if failed:
        detail += "; failing: " + ", ".join(str(c[0]) for c in failed[:6])
        if len(failed) > 6:
            detail += f", ... ({len(failed)} total)"
    record_verdict(number, ok, detail)
    assert ok, detail


def from_records(records):
    out = []
    for r in records:
        limit = r.get("bound", r.get("limit", r["tolerance"]))
        out.append((f"{r['check']} {r['params']}", r["residual"], limit, r["pass"]))
    return out


def guarded(label, fn, tol):
    try:
        r = fn()
        return (label, r, tol, bool(r <= tol))
    except (BTHError, ValueError) as e:
        return (f"{label} [{type(e).__name__}]", float("nan"), tol, False)


def block_state(N, M, seed, D=14, tcfg=None):
    L = random_poly_lax(PolyRing(1, exact=False), N, M, np.random.default_rng(seed))
    return AddState.from_lax(L, D, TimeConfig({(1, 0): 0.3}) if tcfg is None else tcfg)


def test_criterion_01_exact_gamma_identities():
    records, seconds = run(suite_gamma_exact)
    checks = [(c[0], c[1], 0.0, c[3] and c[1] == 0.0) for c in from_records(records)]
    verdict(1, checks, seconds < 5, f"{seconds:.2f}s (limit 5s)")


def test_criterion_02_roots():
    records, seconds = run(suite_roots, RunConfig(P=31, D=12))
    assert len(records) == 18
    verdict(2, from_records(records), seconds < 10, f"{seconds:.2f}s (limit 10s)")


def test_criterion_03_reference_flows():
    records, _ = run(suite_lax_oracles)
    verdict(3, from_records(records))


def test_criterion_04_zero_curvature():
    records, _ = run(suite_zakharov_shabat, systems=((1, 1), (2, 1), (1, 2)))
    selfs = [r for r in records if r["params"]["A"] == r["params"]["B"]]
    assert selfs and all(r["residual"] == 0.0 for r in selfs)
    verdict(4, from_records(records))


def test_criterion_05_orlov_schulman():
    records, _ = run(suite_orlov_schulman, systems=((1, 1), (1, 2), (2, 1), (2, 2)))
    verdict(5, from_records(records))


def test_criterion_06_wave_functions():
    records, _ = run(suite_waves, systems=((1, 1), (1, 2), (2, 1), (2, 2)))
    verdict(6, from_records(records), note="bounds at |lambda| = 2 (L) and 1/2 (R), D = 12; decay 12 -> 16")


def test_criterion_07_block_algebra():
    t0 = time.perf_counter()
    st = block_state(1, 1, 30)
    checks = []
    for a in GENERATORS:
        for b in GENERATORS:
            if bracket_target(a, b) is None:
                continue
            for part in ("PL", "PR", "L"):
                checks.append(guarded(f"chain {a}x{b} on {part}",
                                      lambda: block_bracket_residual(st, a, b, parts=True)[part], 1e-7))
    for a, b in ((AddFlowIndex(1, 0), AddFlowIndex(1, 1)), (AddFlowIndex(0, 1), AddFlowIndex(1, 2)),
                 (AddFlowIndex(2, 1), AddFlowIndex(1, 2))):
        checks.append(guarded(f"antisymmetry {a}x{b}", lambda: antisymmetry_residual(st, a, b), 1e-9))
    for pair, v in witt_residuals(st, family="m").items():
        if isinstance(v, str):
            checks.append((f"witt d{pair}", float("nan"), 1e-7, False))
        else:
            checks.append((f"witt d{pair}", v, 1e-7, v <= 1e-7))
    flat = block_state(1, 1, 31, D=12, tcfg=TimeConfig())
    r = richardson(flat, (1, 0), (1, 1), 1e-3)
    checks.append(("fd richardson ratio", r["ratio"], None, 1.6 <= r["ratio"] <= 2.6))
    checks.append(("fd vs chain at h", r["residual_h"], 20e-3, r["residual_h"] <= 20e-3))
    seconds = time.perf_counter() - t0
    verdict(7, checks, seconds < 120, f"{seconds:.1f}s (limit 120s)")


def test_criterion_08_commutativity_with_hierarchy():
    checks = []
    for (N, M), seed in (((1, 1), 32), ((2, 1), 33)):
        st = block_state(N, M, seed, D=16)
        for idx in ((1, 0), (1, 1), (2, 1), (1, 2)):
            for gamma in range(-M + 1, N + 1):
                checks.append(guarded(f"{(N, M)} idx {idx} flow ({gamma},0)",
                                      lambda: hierarchy_commutativity_residual(st, idx, (gamma, 0)), 1e-7))
    verdict(8, checks)


def test_criterion_09_symbol_flows():
    st = block_state(1, 1, 32)
    checks = [guarded(which, lambda: symbol_flow_check(st, which), 1e-7) for which in SYMBOL_FLOWS]
    verdict(9, checks)


def test_criterion_10_integrator_and_full_run(tmp_path):
    cfg = RunConfig()
    L = random_lax(cfg.grid(), 1, 1, cfg.rng(40), cfg.modes, cfg.amplitude)
    ratio = integrator_study(L, (1, 0))
    checks = [("rk4 richardson", ratio, None, 12 <= ratio <= 20)]
    checks += [(f"trace drift k={k}", v, 1e-8, v <= 1e-8) for k, v in trace_drift(L, (1, 0)).items()]
    full = RunConfig(report=str(tmp_path / "report.jsonl"), summary=str(tmp_path / "summary.txt"))
    t0 = time.perf_counter()
    code = run_verify(full, jobs=1)
    seconds = time.perf_counter() - t0
    checks.append(("bth verify exit code", float(code), None, code == 0))
    checks.append(("bth verify seconds", seconds, 300.0, seconds < 300))
    verdict(10, checks, note=f"full run {seconds:.1f}s, exit {code}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

"""Command-line driver: ``bth verify``, ``bth evolve`` and ``bth roots``."""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from math import gcd

import numpy as np

from .coeff import LatticeGrid, PolyRing
from .diffop import dump, op_distance
from .dressing import consistent_pair, random_lax, random_poly_lax, root_lower, root_upper, verify_frac
from .errors import BandExhausted, BTHError, ConfigError, Divergence
from .hierarchy import (TimeConfig, field_distance, integrate, lax_rhs, residual_record, rhs_oracle_N1M2,
                        rhs_oracle_N2M1, toda_rhs, trace_functional, write_trajectory_csv, zs_residual)

SUITES = ("gamma-exact", "dressing", "roots", "lax-oracles", "zakharov-shabat", "orlov-schulman",
          "waves", "block-chain", "block-fd", "symbol-flows", "integrator")

DEFAULT_TOLERANCES = {
    "gamma-exact": 0.0,
    "dressing": 1e-8,
    "roots": 1e-10,
    "lax-oracle": 1e-9,
    "toda-oracle": 1e-12,
    "upper-lower-coincide": 1e-11,
    "zakharov-shabat": 1e-6,
    "orlov-schulman": 1e-9,
    "m-flow": 1e-6,
    "block-bracket": 1e-7,
    "antisymmetry": 1e-9,
    "bilinearity": 1e-9,
    "witt": 1e-7,
    "reduction": 1e-8,
    "commutativity": 1e-7,
    "symbol-flow": 1e-7,
    "trace-drift": 1e-8,
}


@dataclass
class RunConfig:
    """Everything a run depends on; serialised verbatim into reports."""

    N: int = 1
    M: int = 1
    P: int = 31
    epsilon: str = "1"
    D: int = 12
    seed: int = 20241017
    modes: int = 3
    amplitude: float = 0.2
    tcfg: dict = field(default_factory=lambda: {"1,0": 0.3})
    tolerances: dict = field(default_factory=dict)
    suites: list = field(default_factory=lambda: list(SUITES))
    report: str = "report.jsonl"
    summary: str = ""
    timing: bool = True

    @property
    def eps(self) -> Fraction:
        return Fraction(self.epsilon)

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def times(self) -> TimeConfig:
        vals = {}
        for k, v in self.tcfg.items():
            g, n = (int(s) for s in str(k).split(","))
            vals[(g, n)] = float(v)
        return TimeConfig(vals)

    def grid(self) -> LatticeGrid:
        return LatticeGrid(self.eps, self.P)

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed & (2 ** 64 - 1), salt])

    def validate(self):
        if self.N < 1 or self.M < 1:
            raise ConfigError(f"N and M must be positive (got N={self.N}, M={self.M})")
        if self.P % 2 == 0:
            raise ConfigError(f"P={self.P} must be odd")
        for name, v in (("N", self.N), ("M", self.M)):
            if gcd(self.P, v) != 1:
                raise ConfigError(f"P={self.P} must be coprime to {name}={v} (gcd {gcd(self.P, v)})")
        if self.eps <= 0:
            raise ConfigError("epsilon must be a positive rational")
        need = self.N + self.M + 4
        if self.D < need:
            raise ConfigError(f"D={self.D} is below the minimum margin {need} for (N,M)=({self.N},{self.M})")
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suites {unknown}; choose from {list(SUITES)}")
        bad = [k for k in self.tolerances if k not in DEFAULT_TOLERANCES]
        if bad:
            raise ConfigError(f"unknown tolerance names {bad}")
        self.times()


def _coerce(name: str, text: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown configuration key {name!r}")
    kind = kinds[name]
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    if kind in ("bool", bool):
        return text.lower() in ("1", "true", "yes")
    if kind in ("dict", "list", dict, list):
        return json.loads(text)
    return text


def load_config(path: str | None, overrides: list[str]) -> RunConfig:
    data = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    names = {f.name for f in fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    if len(overrides) % 2:
        raise ConfigError("overrides must come as --key value pairs")
    for key, value in zip(overrides[::2], overrides[1::2]):
        if not key.startswith("--"):
            raise ConfigError(f"expected --key, got {key!r}")
        data[key[2:].replace("-", "_")] = _coerce(key[2:].replace("-", "_"), value)
    if "epsilon" in data:
        data["epsilon"] = str(data["epsilon"])
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


class Recorder:
    def __init__(self, cfg: RunConfig, suite: str):
        self.cfg, self.suite, self.records = cfg, suite, []

    def add(self, check: str, params: dict, residual: float, tol_name: str, seconds=None, passed=None,
            **extra):
        rec = residual_record(check, params, residual, self.cfg.tol(tol_name),
                              seconds if self.cfg.timing else None, passed)
        rec["suite"] = self.suite
        rec.update(extra)
        self.records.append(rec)

    def fail(self, check: str, params: dict, tol_name: str, error: Exception, seconds=None):
        self.add(check, params, float("nan"), tol_name, seconds, passed=False,
                 error=f"{type(error).__name__}: {error}")


def _poly_state(cfg: RunConfig, N: int, M: int, salt: int, exact: bool = False, **kw):
    ring = PolyRing(cfg.eps, exact=exact)
    return random_poly_lax(ring, N, M, cfg.rng(salt), **kw)


def suite_gamma_exact(cfg: RunConfig, rec: Recorder):
    from .oschulman import verify_gamma_identities
    for N in range(1, 5):
        for M in range(1, 5):
            t0 = time.perf_counter()
            results = verify_gamma_identities(N, M, 2, cfg.eps)
            elapsed = time.perf_counter() - t0
            for name, ok in results.items():
                rec.add("gamma-identity", {"N": N, "M": M, "identity": name}, 0.0 if ok else 1.0,
                        "gamma-exact", elapsed)


def suite_dressing(cfg: RunConfig, rec: Recorder):
    for exact in (True, False):
        t0 = time.perf_counter()
        L = _poly_state(cfg, cfg.N, cfg.M, 11, exact=exact)
        pair = consistent_pair(L, cfg.D)
        rep = verify_frac(L, pair)
        for name, v in rep.as_dict().items():
            rec.add("dressing", {"N": cfg.N, "M": cfg.M, "D": cfg.D, "exact": exact, "quantity": name}, v,
                    "dressing", time.perf_counter() - t0)


def suite_roots(cfg: RunConfig, rec: Recorder):
    grid = cfg.grid()
    rng = cfg.rng(12)
    for N in (1, 2, 3):
        for M in (1, 2, 3):
            p = {"N": N, "M": M, "P": cfg.P, "D": cfg.D}
            t0 = time.perf_counter()
            if gcd(cfg.P, N) != 1 or gcd(cfg.P, M) != 1:
                continue
            L = random_lax(grid, N, M, rng, cfg.modes, cfg.amplitude)
            scale = max(1.0, max(c.norm() for c in L.op.coeffs.values()))
            up, lo = root_upper(L, cfg.D), root_lower(L, cfg.D)
            rec.add("root-upper", p, op_distance(up ** N, L.op) / scale, "roots", time.perf_counter() - t0)
            rec.add("root-lower", p, op_distance(lo ** M, L.op) / scale, "roots", time.perf_counter() - t0)


def _field_gap(d, oracle):
    zero = next(iter(oracle.values())) * 0
    return max((d.coeffs.get(j, zero) - v).norm() for j, v in oracle.items())


def suite_lax_oracles(cfg: RunConfig, rec: Recorder):
    grid = cfg.grid()
    rng = cfg.rng(13)
    D = cfg.D
    L = random_lax(grid, 1, 2, rng, cfg.modes, cfg.amplitude)
    for fl in ((1, 0), (-1, 0)):
        d = lax_rhs(L, fl, D)
        rec.add("lax-oracle", {"N": 1, "M": 2, "flow": list(fl)},
                _field_gap(d, rhs_oracle_N1M2(L.u(0), L.u(-1), L.u(-2), fl)), "lax-oracle")
    L = random_lax(grid, 2, 1, rng, cfg.modes, cfg.amplitude)
    for fl in ((2, 0), (1, 0)):
        d = lax_rhs(L, fl, D)
        rec.add("lax-oracle", {"N": 2, "M": 1, "flow": list(fl)},
                _field_gap(d, rhs_oracle_N2M1(L.u(1), L.u(0), L.u(-1), fl)), "lax-oracle")
    L = random_lax(grid, 1, 1, rng, cfg.modes, cfg.amplitude)
    rec.add("toda-oracle", {"N": 1, "M": 1, "flow": [1, 0]},
            _field_gap(lax_rhs(L, (1, 0), D), toda_rhs(L.u(0), L.u(-1))), "toda-oracle")
    for N, M in ((1, 1), (2, 1), (1, 2), (2, 2)):
        L = random_lax(grid, N, M, rng, cfg.modes, cfg.amplitude)
        gap = op_distance(lax_rhs(L, (1, 0), D), lax_rhs(L, (0, 0), D))
        rec.add("upper-lower-coincide", {"N": N, "M": M, "flows": [[1, 0], [0, 0]]}, gap,
                "upper-lower-coincide")


def _zs_pairs(N, M):
    flows = [(g, n) for n in (0, 1) for g in range(-M + 1, N + 1)]
    return [(a, b) for i, a in enumerate(flows) for b in flows[i:]]


def suite_zakharov_shabat(cfg: RunConfig, rec: Recorder, systems=((1, 1), (2, 1), (1, 2))):
    grid = cfg.grid()
    rng = cfg.rng(14)
    for N, M in systems:
        L = random_lax(grid, N, M, rng, cfg.modes, cfg.amplitude)
        for a, b in _zs_pairs(N, M):
            t0 = time.perf_counter()
            p = {"N": N, "M": M, "A": list(a), "B": list(b)}
            try:
                r = zs_residual(L, a, b, cfg.D)
                rec.add("zakharov-shabat", p, r, "zakharov-shabat", time.perf_counter() - t0,
                        passed=(r == 0.0) if a == b else None)
            except BTHError as e:
                rec.fail("zakharov-shabat", p, "zakharov-shabat", e)


def suite_orlov_schulman(cfg: RunConfig, rec: Recorder, systems=((1, 1), (1, 2), (2, 1), (2, 2))):
    from .oschulman import build_M, m_flow_residual, os_residuals
    for i, (N, M) in enumerate(systems):
        L = _poly_state(cfg, N, M, 15 + i)
        pair = consistent_pair(L, cfg.D)
        t0 = time.perf_counter()
        ctx = build_M(L, pair, cfg.times(), check=False)
        for name, v in os_residuals(ctx).items():
            rec.add("orlov-schulman", {"N": N, "M": M, "identity": name}, v, "orlov-schulman",
                    time.perf_counter() - t0)
        for fl in ((1, 0), (0, 0)):
            t0 = time.perf_counter()
            for name, v in m_flow_residual(ctx, fl).items():
                rec.add("m-flow", {"N": N, "M": M, "flow": list(fl), "operator": name}, v, "m-flow",
                        time.perf_counter() - t0)


WAVE_AMPLITUDE = Fraction(1, 8)
WAVE_LOWEST = Fraction(1, 16)


def wave_study(N, M, seed_rng, D_pair=(12, 16), tcfg=None, amplitude=WAVE_AMPLITUDE, lowest=WAVE_LOWEST,
               eps=Fraction(1)):
    """Residuals and bounds at the two depths plus the decay ratio, for both sides."""
    from .oschulman import build_M, build_wave, wave_residuals
    ring = PolyRing(eps, exact=False)
    L = random_poly_lax(ring, N, M, seed_rng, amplitude=amplitude, lowest=lowest)
    tcfg = tcfg if tcfg is not None else TimeConfig({(1, 0): 0.3, (0, 0): -0.2})
    out = {}
    for D in D_pair:
        pair = consistent_pair(L, D)
        ctx = build_M(L, pair, tcfg, check=False)
        for side, lam in (("L", 2.0), ("R", 0.5)):
            out[(side, D)] = wave_residuals(build_wave(ctx, lam, side), ctx)
    return out


def suite_waves(cfg: RunConfig, rec: Recorder, systems=((2, 1), (1, 1), (1, 2), (2, 2))):
    lo, hi = 12, 16
    for i, (N, M) in enumerate(systems):
        t0 = time.perf_counter()
        res = wave_study(N, M, cfg.rng(20 + i), (lo, hi), eps=cfg.eps)
        for side, deg in (("L", N), ("R", M)):
            for name, r in res[(side, lo)].items():
                rec.add("wave-bound", {"N": N, "M": M, "side": side, "D": lo, "equation": name},
                        r["residual"], "dressing", time.perf_counter() - t0,
                        passed=bool(r["residual"] <= r["bound"]), bound=r["bound"])
            a = res[(side, lo)]["L w = mu w"]["residual"]
            b = res[(side, hi)]["L w = mu w"]["residual"]
            limit = 3 * 0.5 ** ((hi - lo) / deg)
            ratio = b / a if a else 0.0
            rec.add("wave-decay", {"N": N, "M": M, "side": side, "D": [lo, hi]}, ratio, "dressing",
                    time.perf_counter() - t0, passed=bool(ratio <= limit), limit=limit)


def _block_state(cfg: RunConfig, N: int, M: int, salt: int, D: int | None = None, tcfg=None):
    from .blocksym import AddState
    L = _poly_state(cfg, N, M, salt)
    return AddState.from_lax(L, D or max(cfg.D, 14), cfg.times() if tcfg is None else tcfg)


def suite_block_chain(cfg: RunConfig, rec: Recorder):
    from .blocksym import (GENERATORS, AddFlowIndex, add_field, antisymmetry_residual, bilinearity_residual,
                           block_bracket_residual, bracket_target, structure_constant, witt_residuals)
    N, M = cfg.N, cfg.M
    st = _block_state(cfg, N, M, 30)
    base = {"N": N, "M": M, "D": st.depth}
    for a in GENERATORS:
        for b in GENERATORS:
            p = dict(base, A=str(a), B=str(b), constant=structure_constant(a, b),
                     target=str(bracket_target(a, b)))
            t0 = time.perf_counter()
            try:
                r = block_bracket_residual(st, a, b, parts=True)
                for part, v in r.items():
                    rec.add("block-bracket", dict(p, on=part), v, "block-bracket", time.perf_counter() - t0)
            except (BTHError, ValueError) as e:
                rec.fail("block-bracket", p, "block-bracket", e, time.perf_counter() - t0)
    for a, b in ((AddFlowIndex(1, 0), AddFlowIndex(1, 1)), (AddFlowIndex(0, 1), AddFlowIndex(1, 2))):
        rec.add("antisymmetry", dict(base, A=str(a), B=str(b)), antisymmetry_residual(st, a, b), "antisymmetry")
    rec.add("bilinearity", dict(base, A="(1,0)", B=["(1,1)", "(1,2)"]),
            bilinearity_residual(st, (1, 0), (1, 1), (1, 2)), "bilinearity")
    for family in ("m", "l"):
        for (x, y), v in witt_residuals(st, family=family).items():
            p = dict(base, family=family, labels=[x, y])
            if isinstance(v, str):
                rec.add("witt", p, float("nan"), "witt", passed=False, error=v)
            else:
                rec.add("witt", p, v, "witt")
    for m in range(3):
        for l in range(3):
            if m + l == 0:
                continue
            p = dict(base, idx=[m, l])
            try:
                f = add_field(st, (m, l))
                rec.add("reduction", p, op_distance(f.dL_left, f.dL_right, band=(-M, N)), "reduction")
            except BTHError as e:
                rec.fail("reduction", p, "reduction", e)


def suite_block_fd(cfg: RunConfig, rec: Recorder):
    from .blocksym import block_bracket_fd, richardson
    N, M = cfg.N, cfg.M
    # zero times keep the band of the evolved pair from shrinking
    st0 = _block_state(cfg, N, M, 31, D=cfg.D, tcfg=TimeConfig())
    h = 1e-3
    t0 = time.perf_counter()
    r = richardson(st0, (1, 0), (1, 1), h)
    p = {"N": N, "M": M, "D": st0.depth, "A": "(1,0)", "B": "(1,1)", "h": h}
    rec.add("fd-richardson", p, r["ratio"], "block-bracket", time.perf_counter() - t0,
            passed=bool(1.6 <= r["ratio"] <= 2.6), residual_h=r["residual_h"], residual_h2=r["residual_h2"])
    rec.add("fd-vs-chain", p, r["residual_h"], "block-bracket", passed=bool(r["residual_h"] <= 20 * h))
    t0 = time.perf_counter()
    same = block_bracket_fd(st0, (1, 1), (1, 1), h)
    rec.add("fd-self", dict(p, B="(1,1)", A="(1,1)"), same, "block-bracket", time.perf_counter() - t0,
            passed=bool(same <= 10 * h))


def suite_symbol_flows(cfg: RunConfig, rec: Recorder):
    from .blocksym import SYMBOL_FLOWS, AddState, hierarchy_commutativity_residual, symbol_flow_check
    N, M = cfg.N, cfg.M
    st = _block_state(cfg, N, M, 32)
    for which in SYMBOL_FLOWS:
        t0 = time.perf_counter()
        rec.add("symbol-flow", {"N": N, "M": M, "flow": which}, symbol_flow_check(st, which), "symbol-flow",
                time.perf_counter() - t0)
    triv = AddState.trivial(PolyRing(cfg.eps, exact=False), N, M, cfg.D, TimeConfig({(1, 0): 0.3}))
    rec.add("symbol-flow", {"N": N, "M": M, "flow": "L1,1", "state": "trivial"},
            symbol_flow_check(triv, "L1,1"), "symbol-flow")
    flows = [(g, 0) for g in range(-M + 1, N + 1)]
    for idx in ((1, 0), (1, 1), (2, 1), (1, 2)):
        for fl in flows:
            p = {"N": N, "M": M, "idx": list(idx), "flow": list(fl)}
            t0 = time.perf_counter()
            try:
                rec.add("commutativity", p, hierarchy_commutativity_residual(st, idx, fl), "commutativity",
                        time.perf_counter() - t0)
            except BTHError as e:
                rec.fail("commutativity", p, "commutativity", e)


def integrator_study(L, flow, T=1.0, dts=(0.1, 0.05, 0.025)):
    ends = [integrate(L, [(flow, T)], dt).states[-1] for dt in dts]
    return field_distance(ends[0], ends[1]) / field_distance(ends[1], ends[2])


def trace_drift(L, flow, T=1.0, dt=0.01, kmax=3):
    tr = integrate(L, [(flow, T)], dt)
    end = tr.states[-1]
    return {k: abs(trace_functional(end, k) - trace_functional(L, k)) / T for k in range(1, kmax + 1)}


def suite_integrator(cfg: RunConfig, rec: Recorder):
    L = random_lax(cfg.grid(), cfg.N, cfg.M, cfg.rng(40), cfg.modes, cfg.amplitude)
    flow = (1, 0)
    t0 = time.perf_counter()
    ratio = integrator_study(L, flow)
    rec.add("rk4-richardson", {"N": cfg.N, "M": cfg.M, "flow": list(flow), "dt": [0.1, 0.05, 0.025]}, ratio,
            "trace-drift", time.perf_counter() - t0, passed=bool(12 <= ratio <= 20))
    for k, v in trace_drift(L, flow).items():
        rec.add("trace-drift", {"N": cfg.N, "M": cfg.M, "flow": list(flow), "k": k}, v, "trace-drift")


SUITE_FUNCS = {
    "gamma-exact": suite_gamma_exact,
    "dressing": suite_dressing,
    "roots": suite_roots,
    "lax-oracles": suite_lax_oracles,
    "zakharov-shabat": suite_zakharov_shabat,
    "orlov-schulman": suite_orlov_schulman,
    "waves": suite_waves,
    "block-chain": suite_block_chain,
    "block-fd": suite_block_fd,
    "symbol-flows": suite_symbol_flows,
    "integrator": suite_integrator,
}


def run_suite(cfg: RunConfig, name: str) -> list:
    rec = Recorder(cfg, name)
    t0 = time.perf_counter()
    try:
        SUITE_FUNCS[name](cfg, rec)
    except (BTHError, ValueError, ArithmeticError) as e:
        rec.fail(name, {"N": cfg.N, "M": cfg.M}, "dressing", e, time.perf_counter() - t0)
    return rec.records


def _clean(rec):
    """JSON-safe copy: non-finite residuals become strings."""
    out = dict(rec)
    for k in ("residual", "ratio"):
        v = out.get(k)
        if isinstance(v, float) and not math.isfinite(v):
            out[k] = repr(v)
    return out


def run_verify(cfg: RunConfig, jobs: int = 1, stream=sys.stdout) -> int:
    names = list(dict.fromkeys(cfg.suites))
    if jobs > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run_suite, [cfg] * len(names), names))
    else:
        results = [run_suite(cfg, n) for n in names]
    records = [r for rs in results for r in rs]
    with open(cfg.report, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(_clean(r), sort_keys=True) + "\n")
    lines = []
    for n, rs in zip(names, results):
        bad = sum(not r["pass"] for r in rs)
        lines.append(f"{n:18s} {len(rs) - bad:4d}/{len(rs):<4d} {'ok' if not bad else 'FAIL'}")
        for r in rs:
            if not r["pass"]:
                lines.append(f"    {r['check']} {json.dumps(r['params'], sort_keys=True)} "
                             f"residual={r['residual']} {r.get('error', '')}".rstrip())
    text = "\n".join(lines) + "\n"
    stream.write(text)
    if cfg.summary:
        with open(cfg.summary, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0 if all(r["pass"] for r in records) else 1


def run_evolve(cfg: RunConfig, flows: list, T: float, dt: float, out: str, richardson: bool = False,
               stream=sys.stdout) -> int:
    L = random_lax(cfg.grid(), cfg.N, cfg.M, cfg.rng(50), cfg.modes, cfg.amplitude)
    plan = [(f, T) for f in flows]
    try:
        traj = integrate(L, plan, dt, cfg.D, samples_per_unit=10)
    except Divergence as e:
        stream.write(f"diverged at step {e.step}: {e}\n")
        return 1
    write_trajectory_csv(traj, out)
    end = traj.states[-1]
    total = T * len(flows)
    report = {"flows": [list(f) for f in flows], "T": T, "dt": dt, "sites": cfg.P,
              "trace_drift": {str(k): abs(trace_functional(end, k) - trace_functional(L, k)) / max(total, 1e-300)
                              for k in (1, 2, 3)}}
    if richardson:
        ends = [integrate(L, plan, h, cfg.D).states[-1] for h in (dt, dt / 2, dt / 4)]
        report["richardson_ratio"] = field_distance(ends[0], ends[1]) / field_distance(ends[1], ends[2])
    with open(out + ".json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    stream.write(json.dumps(report, sort_keys=True) + "\n")
    return 0


def run_roots(cfg: RunConfig, path: str, stream=sys.stdout) -> int:
    L = random_lax(cfg.grid(), cfg.N, cfg.M, cfg.rng(60), cfg.modes, cfg.amplitude)
    up, lo = root_upper(L, cfg.D), root_lower(L, cfg.D)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# upper root\n")
        dump(up, fh)
        fh.write("# lower root\n")
        dump(lo, fh)
    stream.write(json.dumps({"upper": op_distance(up ** cfg.N, L.op), "lower": op_distance(lo ** cfg.M, L.op)})
                 + "\n")
    return 0


def _flow_arg(text: str):
    try:
        g, n = (int(s) for s in text.split(","))
    except ValueError as e:
        raise ConfigError(f"flow must be 'gamma,n', got {text!r}") from e
    return (g, n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bth", description="Bigraded Toda verification driver.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--config")
    v.add_argument("--suite", action="append", choices=SUITES)
    v.add_argument("--jobs", type=int, default=1)
    e = sub.add_parser("evolve", help="integrate flows and write a trajectory CSV")
    e.add_argument("--config")
    e.add_argument("--flow", action="append", required=True)
    e.add_argument("--T", type=float, default=1.0)
    e.add_argument("--dt", type=float, default=1e-3)
    e.add_argument("--out", required=True)
    e.add_argument("--richardson", action="store_true")
    r = sub.add_parser("roots", help="dump the two fractional roots")
    r.add_argument("--config")
    r.add_argument("--dump-op", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        cfg = load_config(args.config, extra)
        if args.command == "verify":
            if args.suite:
                cfg.suites = args.suite
            if args.jobs < 1:
                raise ConfigError("--jobs must be at least 1")
            return run_verify(cfg, args.jobs)
        if args.command == "evolve":
            flows = [_flow_arg(f) for f in args.flow]
            for f in flows:
                if not -cfg.M + 1 <= f[0] <= cfg.N or f[1] < 0:
                    raise ConfigError(f"flow {f} outside the index set of (N,M)=({cfg.N},{cfg.M})")
            if args.dt <= 0 or args.T < 0:
                raise ConfigError("need dt > 0 and T >= 0")
            return run_evolve(cfg, flows, args.T, args.dt, args.out, args.richardson)
        return run_roots(cfg, args.dump_op)
    except ConfigError as e:
        sys.stderr.write(f"configuration error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

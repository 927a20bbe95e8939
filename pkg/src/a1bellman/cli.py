"""Batch experiment runner.

Every command writes ``results.csv`` (raw rows, first line ``# schema=v1``) and
``summary.json`` (``{check, value, threshold, pass}`` rows) into ``--out`` and exits
with status 1 if any check fails, 2 on a configuration error.  Parameters come
from the command defaults, then ``--config`` (either flat or under a key named
after the command), then explicit flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA = "v1"
log = logging.getLogger("a1bellman")


class ConfigError(ValueError):
    pass


@dataclass
class Run:
    command: str
    params: dict
    out: Path
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def row(self, **kw):
        self.rows.append(kw)

    def check(self, name: str, value, threshold, passed: bool):
        self.checks.append({"check": name, "value": _plain(value), "threshold": _plain(threshold),
                            "pass": bool(passed)})
        log.info("%s %s: value=%s threshold=%s", "PASS" if passed else "FAIL", name, value, threshold)

    @property
    def ok(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def write(self, runtime: float):
        self.out.mkdir(parents=True, exist_ok=True)
        cols = []
        for r in self.rows:
            cols += [k for k in r if k not in cols]
        with (self.out / "results.csv").open("w", newline="") as fh:
            fh.write(f"# schema={SCHEMA}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(cols)
            for r in self.rows:
                wr.writerow([_fmt(r.get(c, "")) for c in cols])
        doc = {"schema": SCHEMA, "command": self.command, "params": _plain(self.params),
               "seed": self.params.get("seed"), "runtime_s": round(runtime, 3),
               "pass": self.ok, "checks": self.checks}
        (self.out / "summary.json").write_text(json.dumps(doc, indent=1) + "\n")


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# --------------------------------------------------------------------------
# commands


def cmd_unweighted_dp(run: Run):
    from .unweighted import UnweightedDP, closed_form_B
    p = run.params
    dp = UnweightedDP(n_u=p["n_u"], n_z=p["n_z"], n_alpha=p["n_alpha"], n_beta=p["n_beta"])
    dp.run(p["k"])
    seq = []
    for k in range(p["k"] + 1):
        a = float(dp.value(1.0, 0.0, 2.0, k))
        b = float(dp.value(1.2, 1.2, 1.0, k))
        tol = dp.interpolation_tolerance(k)
        seq.append(a)
        run.row(k=k, N_1_0_2=a, N_12_12_1=b, tolerance=tol)
    tol = dp.interpolation_tolerance(p["k"])
    run.check("N_k(1,0,2) nondecreasing", float(np.min(np.diff(seq))) if len(seq) > 1 else 0.0,
              0.0, all(np.diff(seq) >= -1e-12))
    run.check("N_k(1,0,2) <= 0.75 + tol", max(seq), 0.75 + tol, max(seq) <= 0.75 + tol)
    if p["k"] >= 8:
        run.check("N_8(1,0,2) >= 0.60", seq[8], 0.60, seq[8] >= 0.60)
    grid = dp.to_value_grid(p["k"], resolution=p["resolution"])
    F, f, lam = grid.mesh()
    ok = np.isfinite(grid.values) & (np.abs(f) <= F) & (F > 0)
    excess = float(np.max(grid.values[ok] - closed_form_B(F[ok], f[ok], lam[ok])))
    run.check("N_k <= B + tol on grid", excess, tol, excess <= tol)
    grid.save(run.out, "grid")


def cmd_unweighted_verify(run: Run):
    from .unweighted import (UnweightedDP, biconcavity_defect, closed_form_B, closed_form_M,
                             main_inequality_defects, random_admissible_triples)
    p = run.params
    rng = np.random.default_rng(p["seed"])
    n = p["samples"]
    F = rng.uniform(0.01, 3.0, n)
    f = rng.uniform(-1, 1, n) * F
    lam = F + rng.uniform(1e-9, 5.0, n)
    B = closed_form_B(F, f, lam)
    run.check("B in [0,1] above obstacle", float(B.min()), 0.0, bool(np.all((B >= 0) & (B <= 1))))
    lam_o = F * rng.uniform(0.0, 1.0, n) * (1 - 1e-12)
    Bo = closed_form_B(F, f, lam_o)
    run.check("B = 1 below obstacle", float(np.max(np.abs(Bo - 1))), 0.0, bool(np.all(Bo == 1.0)))
    for sign, name in ((1.0, "mi1"), (-1.0, "mi2")):
        Ft, ft, lt, al, be, sg = random_admissible_triples(n, rng)
        d = main_inequality_defects(closed_form_B, Ft, ft, lt, al, be, np.full(n, sign))
        run.row(check=f"main inequality {name}", samples=n, min_defect=float(d.min()))
        run.check(f"main inequality {name} min", float(d.min()), -p["tol"], float(d.min()) >= -p["tol"])
    worst = 0.0
    for _ in range(p["biconcavity_samples"]):
        Fb = rng.uniform(0.2, 3.0)
        y1 = rng.uniform(-1.0, 4.0)
        y2 = y1 + rng.uniform(-0.9, 0.9) * Fb
        for plane in ("y1", "y2"):
            try:
                d = biconcavity_defect(closed_form_M, (Fb, y1, y2), rng.normal(size=2), plane)
            except ValueError:
                continue
            worst = max(worst, d)
    run.row(check="biconcavity", samples=p["biconcavity_samples"], max_second_difference=worst)
    run.check("bi-concavity second differences <= tol", worst, p["tol"], worst <= p["tol"])
    if p["k"] > 0:
        dp = UnweightedDP(n_u=p["n_u"], n_z=p["n_z"])
        dp.run(p["k"])
        seq = [float(dp.value(1.2, 1.2, 1.0, k)) for k in range(p["k"] + 1)]
        for k, v in enumerate(seq):
            run.row(check="obstacle sequence", k=k, N_12_12_1=v)
        inc = bool(np.all(np.diff(seq[2:]) > 0))
        run.check("N_k(1.2,1.2,1) strictly increasing k>=2", float(np.min(np.diff(seq[2:]))), 0.0, inc)
        run.check("N_k(1.2,1.2,1) final >= 0.9", seq[-1], 0.9, seq[-1] >= 0.9)


def cmd_weighted_dp(run: Run):
    from .weighted import WeightedDP
    p = run.params
    dp = WeightedDP(p["Q"], pattern=p["pattern"])
    dp.run(p["k"])
    for k in range(p["k"] + 1):
        run.row(k=k, N_max=float(np.max(dp.levels[k])), N_min=float(np.min(dp.levels[k])))
    tol = dp.interpolation_tolerance(p["k"]) if p["k"] > 0 else 0.0
    run.row(k=p["k"], tolerance=tol)
    grid = dp.to_value_grid(p["k"], alpha_max=p["alpha_max"], resolution=p["resolution"])
    grid.save(run.out, "grid")
    mono = all(np.all(dp.levels[k] >= dp.levels[k - 1]) for k in range(1, p["k"] + 1))
    run.check("N_k nondecreasing in k", float(p["k"]), 0.0, mono)


def cmd_weighted_verify(run: Run):
    from .unweighted import UnweightedDP
    from .weighted import (WeightedDP, compare_with_unweighted, finite_depth_defects,
                           grid_tolerance, monotone_in_m_defects, verify_weighted_obstacle)
    p = run.params
    rng = np.random.default_rng(p["seed"])
    k = p["k"]
    dpm = WeightedDP(p["Q"], pattern="dyadic").run(k)
    tol = dpm.interpolation_tolerance(k)
    d = finite_depth_defects(dpm, k, p["samples"], rng, "mi")
    run.row(check="mi", samples=int(d.size), min_defect=float(d.min()), tolerance=tol)
    run.check("main inequality (mi) defect >= -tol", float(d.min()), -tol, float(d.min()) >= -tol)
    d = monotone_in_m_defects(dpm, k, p["samples"], rng)
    run.row(check="monotone in m", samples=int(d.size), min_defect=float(d.min()), tolerance=tol)
    run.check("monotone in m defect >= -tol", float(d.min()), -tol, float(d.min()) >= -tol)
    dpi = WeightedDP(p["Q"], pattern="interval").run(k)
    tol_i = dpi.interpolation_tolerance(k)
    d = finite_depth_defects(dpi, k, p["samples"], rng, "3conc")
    run.row(check="3conc", samples=int(d.size), min_defect=float(d.min()), tolerance=tol_i)
    run.check("3conc defect >= -tol", float(d.min()), -tol_i, float(d.min()) >= -tol_i)
    for Q in p["obstacle_Qs"]:
        rep = verify_weighted_obstacle(Q)
        run.row(check="weighted obstacle", Q=Q, level_measure=rep.level_measure,
                mean_weight=rep.mean_weight, ratio=rep.ratio)
        run.check(f"weighted obstacle ratio Q={Q:g}", rep.ratio, 1 / 3, rep.passed)
    kc = p["compare_k"]
    if kc >= 0:
        udp = UnweightedDP(n_u=65, n_z=129).run(kc)
        wdp = WeightedDP(1.0, pattern="dyadic", n_s=129, n_b=1, n_u=65, n_a=33, n_g=1, n_t=33).run(kc)
        for j in range(kc + 1):
            diff = compare_with_unweighted(wdp, udp, j)
            # one-step errors accumulate: the Bellman step is 1-Lipschitz in sup norm
            tol_j = grid_tolerance(wdp, j) + udp.grid_tolerance(j) if j > 0 else 1e-12
            run.row(check="Q=1 consistency", k=j, sup_difference=diff, tolerance=tol_j)
            run.check(f"Q=1 weighted vs unweighted k={j}", diff, tol_j, diff <= tol_j)


def cmd_quadform(run: Run):
    from .weighted import WeightedDP, quadratic_form_sweep
    p = run.params
    dp = WeightedDP(p["Q"], pattern="interval").run(p["k"])
    tol = p["tol"] if p["tol"] is not None else dp.interpolation_tolerance(p["k"], quantile=0.99)
    grid = dp.to_value_grid(p["k"], alpha_max=p["alpha_max"], resolution=p["resolution"])
    grid = grid.smoothed(p["smoothing"])
    rep, samples = quadratic_form_sweep(grid, p["samples"], np.random.default_rng(p["seed"]), tol)
    for s in samples:
        run.row(alpha=s.point.alpha, beta=s.point.beta, gamma=s.point.gamma, K=s.K, L=s.L, N=s.N,
                satisfied=int(s.satisfied(tol)), conclusive=int(s.K > tol))
    run.check("conclusive samples", rep["conclusive"], 1, rep["conclusive"] >= 1)
    run.check("fraction satisfying K >= -tol, N >= L^2/4K - tol", rep["fraction"], p["fraction"],
              rep["conclusive"] > 0 and rep["fraction"] >= p["fraction"])


def _blowup_one(args):
    from .weighted import empirical_weak_norm_ratio
    Q, k, cand = args
    r = empirical_weak_norm_ratio(Q, k, candidates=cand)
    return Q, r.ratio, r.a1, r.dp_ratio


def cmd_blowup(run: Run):
    from .weighted import fit_log_growth
    p = run.params
    jobs = [(float(Q), p["k"], p["candidates"]) for Q in p["Qs"]]
    if p["workers"] > 1:
        with ProcessPoolExecutor(p["workers"]) as ex:
            res = list(ex.map(_blowup_one, jobs))
    else:
        res = [_blowup_one(j) for j in jobs]
    ratios = [r[1] for r in res]
    for Q, ratio, a1, dpr in res:
        run.row(Q=Q, k=p["k"], ratio=ratio, a1=a1, dp_ratio=dpr)
        run.check(f"witness A1 constant <= Q (Q={Q:g})", a1, Q, a1 <= Q * (1 + 1e-9))
    inc = bool(np.all(np.diff(ratios) > 0))
    run.check("monotone growth only: ratio strictly increasing in Q",
              float(np.min(np.diff(ratios))) if len(ratios) > 1 else 0.0, 0.0, inc)
    if len(ratios) >= 3:
        slope, ci = fit_log_growth([r[0] for r in res], ratios)
        run.row(fit="ratio ~ c log(Q)^p", p_hat=slope, ci_low=ci[0], ci_high=ci[1])


def cmd_bookkeeping(run: Run):
    from .weighted import bookkeeping_witness
    p = run.params
    Qs = 2.0 ** np.arange(1, p["log2_qmax"] + 1)
    for pv in p["p"]:
        rep = bookkeeping_witness(pv, Qs, p["c"], p["tau"], p["C"])
        for Q, v in zip(rep.Qs, rep.lhs):
            run.row(p=pv, Q=Q, lhs=v)
        run.row(p=pv, threshold=rep.threshold if rep.threshold is not None else "none",
                first_crossing=rep.first_crossing if rep.first_crossing is not None else "none",
                status=rep.status)
        exp = p["expect"].get(str(pv)) if isinstance(p["expect"], dict) else None
        run.check(f"bookkeeping p={pv:g} status={rep.status}",
                  rep.threshold if rep.threshold is not None else "none",
                  exp or "reported", exp is None or exp == rep.status)


def cmd_remodel(run: Run):
    from .remodel import (ProliferationSchedule, build_extremal_quadruple, distribution_distance,
                          hilbert_remodel_decomposition, red_interval_identity, remodel, w_doubling)
    p = run.params
    q = build_extremal_quadruple(p["Q"], p["depth"])
    for c in q.checks:
        run.row(check=f"quadruple {c.name}", value=c.value)
        run.check(f"quadruple {c.name}", c.value, c.threshold, c.passed)
    (run.out / "quadruple.json").parent.mkdir(parents=True, exist_ok=True)
    (run.out / "quadruple.json").write_text(json.dumps(q.to_json()) + "\n")
    base = tuple(p["schedule"])
    bumped = tuple(n + p["bump"] for n in base)
    dist = {}
    rng = np.random.default_rng(p["seed"])
    for sch in (base, bumped):
        r = remodel(q, ProliferationSchedule(sch), p["w_mode"])
        d = distribution_distance(r)
        red = red_interval_identity(r, rng=rng)
        wd = w_doubling(r, rng=rng)
        dist[sch] = d.weighted_distance
        tag = ",".join(map(str, sch))
        run.row(check="distribution", schedule=tag, value=d.weighted_distance,
                lebesgue=d.lebesgue_distance, payoff_model=d.payoff_model,
                payoff_remodeled=d.payoff_remodeled)
        run.row(check="red intervals", schedule=tag, value=red.mismatches,
                measure_level_set=red.measure_level_set, measure_red=red.measure_red)
        run.row(check="W doubling", schedule=tag, value=wd.constant)
        run.check(f"red-interval identity ({tag})", red.mismatches, 0, red.equal)
        run.check(f"W doubling <= {p['doubling_max']:g} ({tag})", wd.constant, p["doubling_max"],
                  wd.constant <= p["doubling_max"])
        gap = abs(d.payoff_remodeled - d.payoff_model)
        run.check(f"payoff transfer ({tag})", gap, d.payoff_gap_bound,
                  gap <= d.payoff_gap_bound + 1e-12)
    run.check("sup-CDF distance", dist[base], p["cdf_max"], dist[base] <= p["cdf_max"])
    ratio = dist[bumped] / dist[base] if dist[base] > 0 else float("nan")
    run.check("CDF distance halves (ratio in [0.25, 0.75])", ratio, 0.5, 0.25 <= ratio <= 0.75)
    prev = None
    for sch in p["hilbert_schedules"]:
        r = remodel(q, ProliferationSchedule(tuple(sch)), p["w_mode"])
        th = hilbert_remodel_decomposition(r, delta=p["theta_delta"])
        tag = ",".join(map(str, sch))
        run.row(check="theta", schedule=tag, M=th.M, value=th.theta_measure,
                payoff_measure=th.payoff_measure, payoff_bound=th.payoff_bound)
        run.check(f"pipeline payoff ({tag})", th.payoff_measure, th.payoff_bound,
                  th.payoff_measure >= th.payoff_bound)
        if prev is not None:
            run.check(f"measure |Theta|>delta shrinks ({tag})", th.theta_measure, prev,
                      th.theta_measure < prev)
        prev = th.theta_measure


def cmd_hilbert_xi(run: Run):
    from .hilbert import periodic_hilbert_transform, xi_report
    p = run.params
    rep = xi_report(p["M"], rng=np.random.default_rng(p["seed"]))
    run.row(M=rep.M, sign_agreement=rep.sign_agreement, zero_1=rep.zeros[0], zero_2=rep.zeros[1],
            mean_xi=rep.mean_xi, min_xi_away=rep.min_xi_away, skew_defect=rep.skew_defect)
    run.check("sign agreement", rep.sign_agreement, 0.99, rep.sign_agreement >= 0.99)
    for z, e in zip((0.25, 0.75), rep.zero_errors_cells):
        run.check(f"xi zero near {z} (cells)", e, 1.0, e <= 1.0)
    run.check("skew-symmetry defect", rep.skew_defect, 1e-8, rep.skew_defect <= 1e-8)
    f = np.random.default_rng(p["seed"]).standard_normal(p["kernel_M"])
    a = periodic_hilbert_transform(f).values
    b = periodic_hilbert_transform(f, method="kernel").values
    gap = float(np.max(np.abs(a - b)))
    run.check("fft and kernel routes agree", gap, 1e-8, gap <= 1e-8)


def cmd_lemma83(run: Run):
    from .lemma83 import lemma83_sweep
    p = run.params
    for m in p["m"]:
        th = np.full(m, 1 / math.sqrt(m))
        for r in lemma83_sweep(th, p["a"], p["samples"], p["delta"], seed=p["seed"] + m):
            run.row(seed=r.seed, samples=r.samples, m=m, a=r.a, delta=r.delta, estimate=r.estimate,
                    ci_low=r.ci_low, ci_high=r.ci_high)
            run.check(f"estimate - CI >= delta (m={m}, a={r.a:g})", r.estimate - r.half_width,
                      r.delta, r.passed)


COMMANDS = {
    "unweighted-dp": (cmd_unweighted_dp, dict(k=8, n_u=65, n_z=129, n_alpha=33, n_beta=33,
                                              resolution=65)),
    "unweighted-verify": (cmd_unweighted_verify, dict(samples=100_000, tol=1e-9,
                                                      biconcavity_samples=2000, k=8, n_u=65,
                                                      n_z=129)),
    "weighted-dp": (cmd_weighted_dp, dict(Q=8.0, pattern="dyadic", k=4, alpha_max=4.0,
                                          resolution=33)),
    "weighted-verify": (cmd_weighted_verify, dict(Q=8.0, k=6, samples=10_000,
                                                  obstacle_Qs=[4.0, 16.0, 64.0], compare_k=4)),
    "quadform": (cmd_quadform, dict(Q=8.0, k=6, alpha_max=3.0, resolution=49, smoothing=3,
                                    samples=400, tol=None, fraction=0.95)),
    "blowup": (cmd_blowup, dict(Qs=[2.0, 4.0, 8.0, 16.0, 32.0], k=4, candidates=16)),
    "bookkeeping": (cmd_bookkeeping, dict(p=[0.1, 0.5], c=1.0, tau=1.0, C=1.0, log2_qmax=60,
                                          expect={})),
    "remodel": (cmd_remodel, dict(Q=8.0, depth=3, schedule=[3, 5, 7], bump=2, w_mode="frozen",
                                  cdf_max=0.05, doubling_max=8.0, theta_delta=0.1,
                                  hilbert_schedules=[[1, 2, 3], [2, 3, 4]])),
    "hilbert-xi": (cmd_hilbert_xi, dict(M=2 ** 16, kernel_M=2 ** 12)),
    "lemma83": (cmd_lemma83, dict(m=[16, 64, 256], a=[-2.0, 0.0, 2.0], samples=1_000_000,
                                  delta=0.1)),
}

_LISTS = {"Qs": float, "obstacle_Qs": float, "schedule": int, "m": int, "a": float, "p": float}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="a1bellman", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, defaults) in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")
        for key, val in defaults.items():
            flag = "--" + key.replace("_", "-")
            if key in _LISTS:
                sp.add_argument(flag, type=_LISTS[key], nargs="+", default=None)
            elif isinstance(val, bool):
                sp.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"), default=None)
            elif isinstance(val, (int, float, str)) or val is None:
                kind = type(val) if val is not None else float
                sp.add_argument(flag, type=kind, default=None)
            else:
                sp.add_argument(flag, type=json.loads, default=None, help="JSON value")
    return ap


def resolve_params(command: str, args: argparse.Namespace) -> dict:
    defaults = COMMANDS[command][1]
    params = dict(defaults, seed=0, workers=1, out=f"out/{command}")
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        block = doc.get(command, doc) if isinstance(doc, dict) else None
        if not isinstance(block, dict):
            raise ConfigError("config must be a JSON object")
        for k, v in block.items():
            if k in COMMANDS:
                continue
            if k not in params:
                raise ConfigError(f"unknown parameter {k!r} for {command}")
            params[k] = v
    for k in params:
        v = getattr(args, k, None)
        if v is not None:
            params[k] = v
    if command == "lemma83" and isinstance(params["m"], int):
        params["m"] = [params["m"]]
    _validate(params)
    return params


def _validate(p: dict):
    for k, v in p.items():
        if ("tol" in k or k in ("delta", "cdf_max", "theta_delta")) and v is not None:
            if not isinstance(v, (int, float)) or v <= 0:
                raise ConfigError(f"tolerance {k} must be positive")
    for k in ("samples", "workers"):
        if k in p and (not isinstance(p[k], int) or p[k] < 1):
            raise ConfigError(f"{k} must be a positive integer")
    if p["seed"] < 0 or p["seed"] >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        params = resolve_params(args.command, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    run = Run(args.command, params, Path(params["out"]))
    t0 = time.perf_counter()
    try:
        COMMANDS[args.command][0](run)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    run.write(time.perf_counter() - t0)
    for c in run.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['check']}: {c['value']} (threshold {c['threshold']})")
    failed = [c["check"] for c in run.checks if not c["pass"]]
    if failed:
        print(f"failing invariant(s): {'; '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

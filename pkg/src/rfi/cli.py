"""Scenario runner and command-line entry point.

    rfi run <scenario> [--seed U64] [--out DIR] [--threads N]
    rfi verify <scenario> [--seed U64] [--threads N]
    rfi list

``<scenario>`` is a path to a scenario file or the name of a bundled one.
Exit codes: 0 all assertions pass, 1 an assertion failed, 2 configuration
error, 3 runtime or numeric error.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import integral_eq
from .chain import hitting_stats, run_ensemble
from .diagnostics import (
    classify_finite_infinite,
    empirical_rate,
    feasibility_probability,
    limit_distance_curve,
    wasserstein_curve,
)
from .errors import ConfigError, RFIError
from .merit import (
    disk_feasibility_closed,
    grad_closed_intervals,
    grad_closed_lines,
    kappa_closed_lines,
    kl_check,
    merit_closed_intervals,
    merit_closed_lines,
    merit_mc,
    rate_bound,
    regularity_constant,
)
from .sampling import TAG_AUX, RngStream
from .scenarios import (
    OPERATOR_TYPES,
    Scenario,
    builtin_header,
    builtin_names,
    compile_expression,
    eval_number,
    load_scenario,
    parse_bool,
    parse_vector,
    parse_vectors,
)

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

DIAG_COLUMNS = ["k", "mean_dist", "ratio", "feas_frac", "w1", "limit_dist"]


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str


@dataclass
class RunResult:
    status: int
    assertions: list
    report: str
    tables: dict = field(default_factory=dict)  # file name -> (header, rows)

    @property
    def failures(self) -> list:
        return [a for a in self.assertions if not a.passed]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def write_csv(path: Path, header: list, rows: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# ----------------------------------------------------------------------------
# closed-form hooks
# ----------------------------------------------------------------------------


def _closed_merit(s: Scenario):
    if s.closed_form == "lines":
        beta = s.closed_params["beta"]
        return (lambda x: merit_closed_lines(beta, x)), (lambda x: grad_closed_lines(beta, x))
    if s.closed_form == "intervals":
        eps = s.closed_params["eps"]
        return (lambda x: merit_closed_intervals(eps, x[0])), (lambda x: np.array([grad_closed_intervals(eps, x[0])]))
    return None, None


def _kappa_theory(s: Scenario) -> Optional[float]:
    d = s.diagnostics
    val = d.get("kappa_theory", "auto").strip()
    if val == "auto":
        return kappa_closed_lines(s.closed_params["beta"]) if s.closed_form == "lines" else None
    if val == "none":
        return None
    return eval_number(val)


def _probe_grid(spec: str, dim: int) -> list:
    spec = spec.strip()
    if spec.startswith("circle:"):
        n = int(eval_number(spec.split(":", 1)[1]))
        t = 2 * math.pi * np.arange(n) / n
        return list(np.stack([np.cos(t), np.sin(t)], axis=1))
    if spec.startswith("dyadic:"):
        # dyadic:base:J -> points base + 2^-j, j = 1..J (one-dimensional)
        _, base, J = spec.split(":")
        b = eval_number(base)
        return [np.array([b + 2.0**-j]) for j in range(1, int(eval_number(J)) + 1)]
    pts = parse_vectors(spec)
    if any(len(p) != dim for p in pts):
        raise ConfigError(f"probe points must have dimension {dim}")
    return pts


# ----------------------------------------------------------------------------
# running
# ----------------------------------------------------------------------------


def run_scenario(s: Scenario, seed: Optional[int] = None, threads: int = 1) -> RunResult:
    """Execute a scenario and collect tables, assertions and the report text."""
    seed = s.seed if seed is None else int(seed)
    d = s.diagnostics
    flag = lambda key: parse_bool(d.get(key, "false"))  # noqa: E731
    asserts: list = []
    lines = [f"scenario: {s.name}", f"source: {s.source}"]
    if s.description:
        lines.append(f"description: {s.description}")
    lines.append(f"seed: {seed}")
    tables: dict = {}

    if s.problem is not None:
        _run_chain(s, seed, threads, flag, asserts, lines, tables)
    if s.integral is not None:
        _run_integral(s, seed, asserts, lines, tables)

    lines.append("")
    lines.append("assertions:")
    for a in asserts:
        lines.append(f"  [{'PASS' if a.passed else 'FAIL'}] {a.name}: {a.detail}")
    if not asserts:
        lines.append("  (none enabled)")
    failed = [a for a in asserts if not a.passed]
    status = EXIT_ASSERT if failed else EXIT_OK
    lines.append(f"result: {'FAIL' if failed else 'PASS'} ({len(asserts) - len(failed)}/{len(asserts)} assertions passed)")
    return RunResult(status, asserts, "\n".join(lines) + "\n", tables)


def _run_chain(s, seed, threads, flag, asserts, lines, tables):
    d = s.diagnostics
    pb = s.problem
    C = pb.feasible_set
    need_points = s.retain_points or flag("wasserstein") or flag("limit_curve") or flag("expect_limit_projection")
    lines.append(f"family: {s.family_desc}")
    lines.append(f"feasible set: {C!r}")
    lines.append(f"alpha_bar: {pb.alpha_bar}")
    lines.append(f"K = {s.K}, M = {s.M}")

    ens = run_ensemble(pb, s.mu, s.K, s.M, seed, keep_points=need_points, workers=threads)
    md, ff = ens.mean_dist, ens.feas_frac
    lines.append(f"mean_dist[0] = {md[0]:.6g}, mean_dist[K] = {md[-1]:.6g}, feas_frac[K] = {ff[-1]:.6g}")

    hs = hitting_stats(ens)
    tables["ensemble.csv"] = (
        ["k", "mean_dist", "std_dist", "feas_frac", "frac_hit"],
        [[k, md[k], ens.dists[:, k].std(), ff[k], hs.fraction_hit[k]] for k in range(s.K + 1)],
    )

    ratio = [None] * (s.K + 1)
    for k in range(s.K):
        if md[k] > 1e-12:
            ratio[k] = md[k + 1] / md[k]
    w1 = [None] * (s.K + 1)
    lim = [None] * (s.K + 1)
    K_ref = int(eval_number(d["k_ref"])) if "k_ref" in d else s.K

    # theory
    kappa_th = _kappa_theory(s)
    r_th = None
    rt = d.get("r_theory", "auto").strip()
    if rt not in ("auto", "none"):
        r_th = eval_number(rt)
    elif rt == "auto" and kappa_th is not None:
        r_th = rate_bound(kappa_th, pb.alpha_bar)
    if kappa_th is not None:
        lines.append(f"kappa_theory = {kappa_th:.6g}")
        if s.closed_form == "lines" and d.get("kappa_theory", "auto").strip() == "auto":
            b = s.closed_params["beta"]
            lines.append(f"  (2 beta/(beta - sin beta) from direct integration of R; the form 4 beta/(beta - sin beta) gives {4 * b / (b - math.sin(b)):.6g})")
    if r_th is not None:
        lines.append(f"r_theory = {r_th:.6g}")

    if flag("rate"):
        if r_th is None:
            lines.append("rate: no theoretical rate (no rate claim)")
        else:
            curve = empirical_rate(ens, r_th)
            lines.append(f"rate: {len(curve.checked)} steps checked against r_theory, {len(curve.flagged)} flagged")
            chk = curve.ratios[np.isin(curve.steps, curve.checked)]
            if chk.size:
                lines.append(f"rate: max empirical ratio over checked steps = {chk.max():.6g}")
            err = dict(zip(curve.steps.tolist(), curve.errors.tolist()))
            tables["rate.csv"] = (
                ["k", "ratio", "ratio_err", "r_theory", "flagged"],
                [[int(k), r, err[int(k)], r_th, int(k in set(curve.flagged.tolist()))] for k, r in zip(curve.steps, curve.ratios)],
            )
            asserts.append(Assertion("rate", curve.passed, f"ratios <= r_theory + 3 err (flagged steps: {curve.flagged.tolist()})"))

    if flag("hitting"):
        mh = "n/a" if hs.n_hit == 0 else f"{hs.mean_hitting_time:.6g}"
        lines.append(f"hitting: {hs.n_hit}/{s.M} trajectories reached C, mean hitting time {mh}")

    if d.get("expect_class", "none").strip() != "none" or flag("hitting"):
        cl = classify_finite_infinite(ens)
        lines.append(f"classification: {cl.kind.value}" + (" (contradiction: a step was fully feasible)" if cl.contradiction else ""))
        want = d.get("expect_class", "none").strip()
        if want != "none":
            asserts.append(Assertion("classification", cl.kind.value == want and not cl.contradiction, f"got {cl.kind.value}, expected {want}"))

    if "expect_feas_frac" in d:
        law = compile_expression(d["expect_feas_frac"], "n")
        worst, ok = 0.0, True
        for n in range(1, s.K + 1):
            p = law(float(n))
            se = math.sqrt(max(p * (1 - p), 0.0) / s.M)
            dev = abs(ff[n] - p)
            good = dev <= 3 * se if se > 0 else dev == 0
            ok &= good
            worst = max(worst, dev / se if se > 0 else (0.0 if dev == 0 else math.inf))
        asserts.append(Assertion("feas_frac law", ok, f"P(X_n in C) = {d['expect_feas_frac']} for n=1..{s.K}, worst |z| = {worst:.3g}"))

    if flag("expect_constant_mean_dist"):
        dev = float(np.max(np.abs(md - md[0])))
        asserts.append(Assertion("constant mean_dist", dev <= 1e-9 * max(1.0, md[0]), f"mean_dist stays {md[0]:.6g} (max deviation {dev:.3g}); no rate claim"))

    if flag("monotone_mean_dist"):
        inc = float(np.max(np.diff(md), initial=0.0))
        asserts.append(Assertion("monotone mean_dist", inc <= 1e-12, f"largest increase {inc:.3g}"))

    if flag("expect_limit_projection"):
        tol = eval_number(d.get("limit_tolerance", "1e-6"))
        P0 = C.project_many(ens.points[:, 0, :])
        err = float(np.max(np.sqrt(((ens.points[:, -1, :] - P0) ** 2).sum(axis=1))))
        asserts.append(Assertion("limit is P_C x0", err <= tol, f"max |X_K - P_C X_0| = {err:.3g} (tol {tol:g})"))

    if flag("limit_curve"):
        lc = limit_distance_curve(ens, K_ref)
        for k in range(K_ref + 1):
            lim[k] = lc[k]
        excess = float(np.max(lc - 2 * md[: K_ref + 1]))
        asserts.append(Assertion("limit-proxy bound", excess <= 1e-9, f"mean |X_k - X_{K_ref}| <= 2 mean_dist[k] (max excess {excess:.3g})"))

    if flag("wasserstein"):
        wc = wasserstein_curve(ens, K_ref)
        for k in range(K_ref + 1):
            w1[k] = wc[k]
        lines.append(f"wasserstein: W1(law X_0, law X_{K_ref}) = {wc[0]:.6g}")
        if flag("limit_curve"):
            excess = float(np.max(wc - lc))
            asserts.append(Assertion("W1 coupling bound", excess <= 1e-12, f"W1 <= mean |X_k - X_{K_ref}| (max excess {excess:.3g})"))

    tables["diagnostics.csv"] = (DIAG_COLUMNS, [[k, md[k], ratio[k], ff[k], w1[k], lim[k]] for k in range(s.K + 1)])

    dim = s.mu.dim
    merit_eval, grad_eval = _closed_merit(s)
    N_aux = int(eval_number(d.get("feas_samples", "100000")))

    if "regularity_grid" in d:
        probes = _probe_grid(d["regularity_grid"], dim)
        if merit_eval is None:
            ctr = iter(range(1 << 62))
            merit_eval = lambda x: merit_mc(pb, x, N_aux, RngStream(seed, next(ctr), TAG_AUX))  # noqa: E731
            grad_eval = None
        rep = regularity_constant(pb, probes, merit_eval)
        lines.append(f"regularity: kappa_hat = {rep.kappa_hat:.6g} over {rep.n_probes} probes (argmax {np.round(rep.argmax, 6).tolist()})")
        lines.append(f"regularity: divergence flag = {rep.divergence_flag} (ratio after {rep.halvings} halvings: {rep.refined_kappa:.6g})")
        tables["regularity.csv"] = (
            [f"x{i}" for i in range(dim)] + ["dist", "ratio"],
            [list(p) + [C.dist(p), r] for p, r in zip(probes, rep.ratios)],
        )
        if parse_bool(d.get("expect_divergence", "false")):
            r = rep.ratios
            grow = float(np.min(r[1:] / r[:-1])) if len(r) > 1 else float("nan")
            lines.append(f"regularity: smallest growth factor between successive probes = {grow:.6g}")
            asserts.append(Assertion("regularity diverges", rep.divergence_flag, f"no finite kappa (divergence flag set, min growth {grow:.3g})"))
        elif kappa_th is not None:
            tol = eval_number(d.get("kappa_rel_tol", "0.005"))
            rel = abs(rep.kappa_hat - kappa_th) / kappa_th
            asserts.append(Assertion("kappa_hat", rel <= tol, f"kappa_hat {rep.kappa_hat:.6g} vs kappa_theory {kappa_th:.6g} (rel err {rel:.3g}, tol {tol:g})"))
        if "kl_radii" in d:
            kap = rep.kappa_hat * eval_number(d.get("kl_factor", "1"))
            npts = int(eval_number(d.get("kl_points", "16")))
            kl_probes = []
            for rad in parse_vector(d["kl_radii"]):
                t = 2 * math.pi * (np.arange(npts) + 0.5) / npts
                kl_probes += list(rad * np.stack([np.cos(t), np.sin(t)], axis=1)) if dim == 2 else [np.array([rad]), np.array([-rad])]
            kl = kl_check(pb, kl_probes, kap, merit_eval if grad_eval else None, grad_eval, N=N_aux, seed=seed)
            tables["kl.csv"] = ([f"x{i}" for i in range(dim)] + ["slack"], [list(p) + [sl] for p, sl in zip(kl_probes, kl.slack)])
            asserts.append(Assertion("KL inequality", kl.passed, f"R <= (kappa/4)|grad R|^2 with kappa = {kap:.6g} on {len(kl_probes)} probes (worst slack {kl.worst_slack:.3g})"))

    if "feas_probes" in d:
        probes = parse_vectors(d["feas_probes"])
        rows = []
        lines.append("feasibility probability:")
        lines.append("  probe                       p_hat      std_err    closed_form  z")
        all_ok = True
        for i, p in enumerate(probes):
            cf = disk_feasibility_closed(s.closed_params["rho"], float(np.linalg.norm(p))) if s.closed_form == "disks" else None
            rep = feasibility_probability(pb.family, p, N_aux, RngStream(seed, 1_000_000 + i, TAG_AUX), cf)
            z = rep.z_score
            rows.append(list(p) + [rep.p_hat, rep.std_error, cf, z if cf is not None else None])
            cfs = f"{cf:.6f}" if cf is not None else "-"
            lines.append(f"  {str(np.round(p, 6).tolist()):26s}  {rep.p_hat:.6f}  {rep.std_error:.2e}  {cfs:11s}  {z:.3g}")
            if cf is not None:
                all_ok &= abs(z) <= 3
        tables["feas_prob.csv"] = ([f"x{i}" for i in range(dim)] + ["p_hat", "std_error", "closed_form", "z"], rows)
        if s.closed_form == "disks":
            asserts.append(Assertion("feasibility probability", all_ok, "p_hat within 3 sigma of the closed form at every probe"))


def _run_integral(s, seed, asserts, lines, tables):
    job = s.integral
    iseed = job["seed"] if job["seed"] is not None else seed
    prob = integral_eq.build_problem(job["kernel"], job["rhs"], job["a"], job["b"], job["n"])
    lines.append(f"integral equation: kernel {job['kernel']}, rhs {job['rhs']}, [{job['a']:g}, {job['b']:g}], n = {job['n']}")
    lines.append(f"integral equation: {int(np.sum(~prob.usable))} unusable row(s) skipped, {job['iterations']} row projections")
    x, hist = integral_eq.solve_random_sweep(prob, np.zeros(prob.n), job["iterations"], iseed)
    tables["integral_solution.csv"] = (["node", "value"], [[t, v] for t, v in zip(prob.grid, x)])
    tables["integral_residuals.csv"] = (["iter", "sup_res", "l2_res"], [[k + 1, a, b] for k, (a, b) in enumerate(zip(hist.sup, hist.l2))])
    lines.append(f"integral equation: final residual sup = {hist.sup[-1]:.3g}, l2 = {hist.l2[-1]:.3g}")
    sm = hist.smoothed(100)
    if len(sm) > 1:
        lines.append(f"integral equation: {int(np.sum(np.diff(sm) > 0))}/{len(sm) - 1} increases of the 100-iteration smoothed residual")
    ls = integral_eq.least_squares_solution(prob)
    mask = prob.grid >= job["s_min"]
    lines.append(f"integral equation: least-squares oracle vs iterate, max gap on s >= {job['s_min']:g}: {np.max(np.abs(x - ls)[mask]):.3g}")
    if job["solution"] is not None:
        exact = integral_eq.SOLUTIONS[job["solution"]](prob.grid)
        err = float(np.max(np.abs(x - exact)[mask]))
        orc = float(np.max(np.abs(ls - exact)[mask]))
        lines.append(f"integral equation: least-squares oracle sup error {orc:.3g}")
        asserts.append(Assertion("integral solution", err <= job["sup_tol"], f"sup error {err:.4g} on s >= {job['s_min']:g} (tol {job['sup_tol']:g})"))


# ----------------------------------------------------------------------------
# listing
# ----------------------------------------------------------------------------


def list_builtin() -> str:
    out = ["operators:"]
    out += [f"  {k:12s} {v}" for k, v in OPERATOR_TYPES.items()]
    out.append("kernels:")
    out += [f"  {k:16s} {v.description}" for k, v in integral_eq.KERNELS.items()]
    out.append("scenarios:")
    out += [f"  {n:26s} {builtin_header(n)}" for n in builtin_names()]
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfi", description="Random function iteration scenario runner")
    sub = ap.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="run a scenario, write CSVs and report.txt")
    ver = sub.add_parser("verify", help="run a scenario's assertions without writing CSVs")
    for p in (run, ver):
        p.add_argument("scenario", help="scenario file or bundled scenario name")
        p.add_argument("--seed", type=int, default=None, help="base seed (unsigned 64-bit), overrides the file")
        p.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    run.add_argument("--out", default=None, help="output directory (default: the file's output key or out/<name>)")
    sub.add_parser("list", help="list operators, kernels and bundled scenarios")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "list":
        sys.stdout.write(list_builtin())
        return EXIT_OK
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        s = load_scenario(args.scenario)
        res = run_scenario(s, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RFIError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.cmd == "run":
        out = Path(args.out or s.output or Path("out") / s.name)
        out.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in res.tables.items():
            write_csv(out / name, header, rows)
        (out / "report.txt").write_text(res.report)
        print(f"wrote {len(res.tables)} CSV file(s) and report.txt to {out}")
    sys.stdout.write(res.report)
    if res.failures:
        print("failed assertions: " + ", ".join(a.name for a in res.failures), file=sys.stderr)
    return res.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

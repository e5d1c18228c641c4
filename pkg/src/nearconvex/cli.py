"""Command-line driver.

Runs are described by a YAML document; a few scalar flags override it.  Every
subcommand writes CSV files plus ``manifest.csv`` (config echo, derived
parameters, versions and seed) into the output directory.

Exit codes: 0 success, 2 configuration error, 3 algorithm failure,
4 verification failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import logging
import math
import os
import platform
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__, kernel
from . import objectives as ob
from . import problems
from .annealing import PlanOptions, anneal, make_plan, strand_rng, write_epoch_log
from .errors import ConfigurationError, InvalidInputError, NearConvexError
from .geometry import Ball, Box, ConvexBody, Polytope
from .hitrun import WalkParams, walk, write_trace
from .oned import SamplerParams
from .reference import (binned_tv, certify_beta_log_concave, gibbs_mean_gap, warm_start_bound,
                        warm_start_norm)
from .staged import DecayModel, critical_radius, staged_optimize, write_stage_log
from .stochastic import StochasticOracleConfig, noise_bound, stochastic_params, wrap_as_approx_convex

EXIT_OK, EXIT_CONFIG, EXIT_ALGORITHM, EXIT_VERIFY = 0, 2, 3, 4
DEFAULT_STEP_BUDGET = 10**7

log = logging.getLogger("nearconvex")


class VerificationFailure(Exception):
    pass


# ---------------------------------------------------------------- config parsing


def _get(d: dict, key: str, default=None, required: bool = False):
    if not isinstance(d, dict):
        raise ConfigurationError(f"expected a mapping around '{key}'")
    if key not in d:
        if required:
            raise ConfigurationError(f"missing required key '{key}'")
        return default
    return d[key]


def parse_body(section: dict, n: int | None = None) -> ConvexBody:
    kind = _get(section, "kind", required=True)
    if kind == "ball":
        center = _get(section, "center", None)
        if center is None:
            if n is None:
                raise ConfigurationError("ball needs a center or a problem dimension")
            center = [0.0] * n
        return Ball(center, float(_get(section, "radius", 1.0)))
    if kind == "box":
        if "lo" in section:
            return Box(section["lo"], _get(section, "hi", required=True))
        if n is None:
            raise ConfigurationError("box needs lo/hi or a problem dimension")
        return Box.cube(n, float(_get(section, "half_width", 1.0)))
    if kind == "polytope":
        return Polytope(_get(section, "A", required=True), _get(section, "b", required=True),
                        _get(section, "interior_point"), _get(section, "inner_radius"), _get(section, "outer_radius"))
    raise ConfigurationError(f"unknown body kind '{kind}'")


_BASE = {
    "quadratic": lambda n, s: ob.quadratic(n, s.get("center"), s.get("weight", 1.0)),
    "l1": lambda n, s: ob.l1(n, s.get("center"), s.get("weight", 1.0)),
    "linear": lambda n, s: ob.linear(n, _get(s, "coef", required=True), s.get("offset")),
    "constant": lambda n, s: ob.constant(n, float(s.get("value", 0.0))),
}
_PERT = {
    "sin_product": lambda n, s: ob.sin_product(n, float(_get(s, "amplitude", required=True)),
                                               float(s.get("freq", 1.0)), s.get("center")),
    "sin_sum": lambda n, s: ob.sin_sum(n, float(_get(s, "amplitude", required=True)),
                                       float(s.get("freq", 1.0)), s.get("center")),
    "sign_sin": lambda n, s: ob.sign_sin(n, float(_get(s, "amplitude", required=True)),
                                         float(s.get("freq", 1.0)), s.get("center")),
    "radial_poly": lambda n, s: ob.radial_poly(n, float(_get(s, "amplitude", required=True)),
                                               float(s.get("power", 1.0)), float(s.get("freq", 1.0)),
                                               s.get("center")),
    "radial_log": lambda n, s: ob.radial_log(n, float(_get(s, "amplitude", required=True)),
                                             float(s.get("scale", 1.0)), float(s.get("freq", 1.0)),
                                             s.get("center")),
}


def parse_objective(section: dict, n: int) -> tuple[ob.Objective, ob.Objective]:
    """Returns ``(F, f)``: the full objective and its convex base."""
    base = _get(section, "base", required=True)
    kind = _get(base, "kind", required=True)
    if kind not in _BASE:
        raise ConfigurationError(f"unknown base objective '{kind}'")
    f = _BASE[kind](n, base)
    F = f
    perts = _get(section, "perturbation")
    if perts:
        for p in perts if isinstance(perts, list) else [perts]:
            pk = _get(p, "kind", required=True)
            if pk == "none":
                continue
            if pk not in _PERT:
                raise ConfigurationError(f"unknown perturbation '{pk}'")
            F = F + _PERT[pk](n, p)
    return F, f


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as err:
        raise ConfigurationError(f"cannot read config: {err}") from err
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigurationError("config document must be a mapping")
    return cfg


def apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["output"] = args.out
    algo = cfg.setdefault("algorithm", {})
    for key in ("epsilon", "steps", "epochs", "strands"):
        v = getattr(args, key, None)
        if v is not None:
            algo[key] = v
    if getattr(args, "theory", False):
        algo["mode"] = "theory"
    if getattr(args, "samples", None) is not None:
        cfg.setdefault("sample1d", {})["samples"] = args.samples
    return cfg


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + " ".join(_fmt(x) for x in v) + "]"
    return str(v)


def write_kv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for k, v in rows:
            w.writerow([k, _fmt(v)])


def write_manifest(out: Path, command: str, cfg: dict, derived: dict) -> None:
    echo = {k: v for k, v in cfg.items() if k not in ("workers", "output")}
    rows = [("command", command), ("seed", cfg.get("seed", 0)),
            ("config", yaml.safe_dump(echo, sort_keys=True, default_flow_style=True).strip())]
    rows += [(f"derived.{k}", v) for k, v in sorted(derived.items())]
    rows += [("version.nearconvex", __version__), ("version.numpy", np.__version__),
             ("version.python", platform.python_version()), ("kernel", kernel.BACKEND)]
    write_kv(out / "manifest.csv", rows)


# ---------------------------------------------------------------- problem assembly


def _problem(cfg: dict):
    prob = _get(cfg, "problem", required=True)
    n = int(_get(prob, "dimension", required=True))
    body = parse_body(_get(prob, "body", {"kind": "ball"}), n)
    if body.dimension != n:
        raise ConfigurationError("body dimension does not match problem dimension")
    F, f = parse_objective(_get(prob, "objective", required=True), n)
    return n, body, F, f


def _plan_options(algo: dict) -> PlanOptions:
    return PlanOptions(mode=algo.get("mode", "practice"), steps=algo.get("steps"), epochs=algo.get("epochs"),
                       strands=algo.get("strands"), c_strand=float(algo.get("c_strand", 4.0)),
                       C_mix=float(algo.get("C_mix", 1.0)), gamma=float(algo.get("gamma", 0.1)),
                       burn_in_factor=int(algo.get("burn_in_factor", 100)), beta_cap=algo.get("beta_cap"))


def _guard_theory(plan, algo: dict) -> None:
    if plan.options.mode != "theory":
        return
    budget = int(algo.get("step_budget", DEFAULT_STEP_BUDGET))
    m = max(plan.steps) if plan.steps else 0
    print(f"theory-mode steps per epoch: m = {m}")
    if m > budget:
        raise ConfigurationError(f"theory-mode m = {m} exceeds the step budget {budget}; "
                                 "use practice mode (mode: practice) or set steps explicitly")


def _check_regime(F: ob.Objective, n: int, epsilon: float) -> None:
    amp = F.perturbation_bound()
    if math.isfinite(amp) and amp * n > epsilon * (1 + 1e-12):
        warnings.warn(f"perturbation bound {amp:.4g} times n exceeds epsilon {epsilon:.4g}; "
                      "the approximately convex regime is not satisfied", stacklevel=2)


# ---------------------------------------------------------------- subcommands


def run_sample1d(cfg: dict, out: Path, workers: int) -> dict:
    section = _get(cfg, "sample1d", required=True)
    seed = int(cfg.get("seed", 0))
    if "target" in section:
        name = section["target"]
        if name not in problems.TARGETS_1D:
            raise ConfigurationError(f"unknown 1-D target '{name}'")
        t = problems.TARGETS_1D[name]
        obj, beta, domain = t.objective, t.beta, t.domain
    else:
        obj, _ = parse_objective(_get(section, "objective", required=True), 1)
        beta = float(_get(section, "beta", required=True))
        domain = tuple(_get(section, "domain", (0.0, 1.0)))
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise ConfigurationError("domain needs lo < hi")
    size = int(section.get("samples", 10000))
    params = SamplerParams(float(section.get("eps_tilde", 1e-3)))
    params.check_beta(beta)
    target = ob.ObjectiveOracle(obj, 1).kernel_target(-1.0)
    draws, p, lp, e_lo, e_hi, init, queries, attempts, accepted = kernel.run_line(
        target, [0.0], [1.0], lo, hi, beta, params, size, np.random.default_rng(seed))
    with open(out / "samples.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample"])
        for v in draws:
            w.writerow([repr(float(v))])
    diag = [("samples", size), ("acceptance_rate", f"{accepted / attempts:.4f}"), ("attempts", attempts),
            ("evaluations", queries), ("init_evaluations", init), ("p", p), ("log_g_p", lp),
            ("e_lo", e_lo), ("e_hi", e_hi)]
    if section.get("tv", True):
        bins = int(section.get("bins", 100))
        tv = binned_tv(draws, lambda X: -obj.evaluate_many(X), (lo, hi), bins)
        diag.append(("tv", tv))
        diag.append(("tv_bound", 3.0 * math.exp(2.0 * beta) * params.eps_tilde))
    write_kv(out / "diagnostics.csv", diag)
    return {"beta": beta, "eps_tilde": params.eps_tilde}


def run_walk(cfg: dict, out: Path, workers: int) -> dict:
    n, body, F, _ = _problem(cfg)
    section = cfg.get("walk", {}) or {}
    seed = int(cfg.get("seed", 0))
    steps = int(section.get("steps", cfg.get("algorithm", {}).get("steps") or 1000))
    T = section.get("temperature")
    oracle = ob.ObjectiveOracle(F, n)
    target = None if T is None else oracle.kernel_target(-1.0 / float(T))
    beta = float(section.get("beta", 0.0))
    params = WalkParams(steps, None, SamplerParams(float(section.get("eps_tilde", 1e-4))), beta, record_trace=True)
    x0 = section.get("x0", body.interior_point.tolist())
    res = walk(target, body, x0, params, np.random.default_rng(seed))
    write_trace(out / "trace.csv", res)
    return {"steps": steps, "temperature": "uniform" if T is None else float(T), "beta": beta,
            "queries": res.oracle_queries}


def _anneal_common(cfg, out, workers, oracle, body, n, epsilon, rho, f, extra):
    algo = cfg.get("algorithm", {}) or {}
    plan = make_plan(n, epsilon, body, rho=rho, options=_plan_options(algo))
    _guard_theory(plan, algo)
    res = anneal(oracle, body, plan, int(cfg.get("seed", 0)), workers=workers)
    write_epoch_log(out / "epoch_log.csv", res.epoch_log)
    rows = [(f"x{k + 1}", v) for k, v in enumerate(res.best_point)]
    rows += [("F", res.best_value), ("f", float(f(res.best_point))), ("queries", res.queries),
             ("billed_queries", res.billed_queries)]
    write_kv(out / "best.csv", rows)
    derived = {"K": plan.epochs, "N": plan.strands, "m": list(plan.steps), "eps_tilde": list(plan.eps_tilde),
               "epsilon": epsilon, "rho": plan.rho, "T_final": plan.temperatures[-1]}
    derived.update(extra)
    return derived


def run_anneal(cfg: dict, out: Path, workers: int) -> dict:
    n, body, F, f = _problem(cfg)
    algo = cfg.get("algorithm", {}) or {}
    epsilon = float(_get(algo, "epsilon", required=True))
    rho = algo.get("rho")
    _check_regime(F, n, epsilon)
    oracle = ob.ObjectiveOracle(F, n, rho=epsilon / n if rho is None else float(rho))
    return _anneal_common(cfg, out, workers, oracle, body, n, epsilon, rho, f, {})


def run_stoch_opt(cfg: dict, out: Path, workers: int) -> dict:
    n, body, F, f = _problem(cfg)
    algo = cfg.get("algorithm", {}) or {}
    sto = _get(_get(cfg, "problem"), "oracle", required=True)
    if _get(sto, "kind", "stochastic") != "stochastic":
        raise ConfigurationError("stoch-opt needs a stochastic oracle")
    epsilon = float(_get(algo, "epsilon", required=True))
    sigma = float(_get(sto, "sigma", 1.0))
    delta = float(_get(sto, "delta", 0.1))
    L = float(_get(sto, "L", required=True))
    R = float(_get(sto, "R", body.outer_radius))
    sp = stochastic_params(n, epsilon, sigma, L, R, delta)
    scfg = StochasticOracleConfig(sigma, sp.alpha, sp.tau, int(sto.get("master_seed", cfg.get("seed", 0))),
                                  R, epsilon)
    oracle = wrap_as_approx_convex(F, scfg, n)
    extra = {"alpha": sp.alpha, "tau": sp.tau, "sigma": sigma, "delta": delta, "L": L, "R": R,
             "noise_bound": noise_bound(n, sigma, sp.tau, R, sp.alpha, delta)}
    return _anneal_common(cfg, out, workers, oracle, body, n, epsilon, oracle.rho, f, extra)


def run_staged(cfg: dict, out: Path, workers: int) -> dict:
    n, body, F, f = _problem(cfg)
    section = _get(cfg, "staged", required=True)
    model = DecayModel(_get(section, "kind", "polynomial"), float(_get(section, "alpha", required=True)),
                       float(section.get("C", 4.0)), c=float(section.get("c", 0.0)), p=float(section.get("p", 1.0)),
                       d=float(section.get("d", 1.0)))
    x0 = section.get("x0", body.interior_point.tolist())
    r0 = float(_get(section, "r0", required=True))
    eps_rel = float(section.get("epsilon_rel", 1.0))
    oracle = ob.ObjectiveOracle(F, n)
    algo = cfg.get("algorithm", {}) or {}
    res = staged_optimize(oracle, model, x0, r0, eps_rel, _plan_options(algo), int(cfg.get("seed", 0)),
                          body, float(section.get("epsilon_floor", 1e-6)), workers=workers)
    write_stage_log(out / "stage_log.csv", res.stage_log)
    rows = [(f"x{k + 1}", v) for k, v in enumerate(res.x)]
    rows += [("F", float(F(res.x))), ("f", float(f(res.x))), ("queries", res.queries),
             ("stages", len(res.stage_log)), ("reason", res.reason)]
    write_kv(out / "best.csv", rows)
    return {"r_star": critical_radius(model, n), "stages": len(res.stage_log)}


def _schedule(n_sched: int, epsilon: float) -> list:
    K = math.ceil(math.sqrt(n_sched) * math.log(n_sched / epsilon))
    q = 1.0 - 1.0 / math.sqrt(n_sched)
    T = [1.0]
    for _ in range(K):
        T.append(T[-1] * q)
    return T


def run_verify(cfg: dict, out: Path, workers: int) -> dict:
    section = cfg.get("verify", {}) or {}
    checks = section.get("checks", ["warm_start", "gibbs_gap", "certify"])
    names = section.get("targets", list(problems.VERIFICATION_TARGETS))
    n_sched = int(section.get("schedule_dimension", 9))
    epsilon = float(section.get("epsilon", 0.05))
    temps = [float(t) for t in section.get("temperatures", [1.0, 0.3, 0.1, 0.03])]
    seed = int(cfg.get("seed", 0))
    rows = []
    for name in names:
        if name not in problems.VERIFICATION_TARGETS:
            raise ConfigurationError(f"unknown verification target '{name}'")
        v = problems.VERIFICATION_TARGETS[name]
        dom = v.domain
        if "warm_start" in checks:
            T = _schedule(n_sched, epsilon)
            for i in range(len(T) - 1):
                w = warm_start_norm(v.F_vec, T[i], T[i + 1], dom, breaks=v.breaks)
                bound = warm_start_bound(v.beta, T[i])
                rows.append(("warm_start", name, T[i], w.ratio, bound, w.ratio + w.rel_error * w.ratio < bound))
        if "gibbs_gap" in checks:
            for T in temps:
                g = gibbs_mean_gap(v.f_vec, v.F_vec, T, dom, f_min=v.f_min, breaks=v.breaks)
                rows.append(("gibbs_gap", name, T, g.gap, g.bound, g.gap + 1e-6 < g.bound))
    if "certify" in checks:
        rng = np.random.default_rng(seed)
        for name, t in problems.TARGETS_1D.items():
            c = certify_beta_log_concave(t.log_g, t.domain, t.beta, int(section.get("trials", 10000)), rng)
            rows.append(("certify", name, t.beta, c.worst_margin, 0.0, c.passed))
    with open(out / "verify.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "target", "parameter", "value", "bound", "pass"])
        for r in rows:
            w.writerow([r[0], r[1], repr(float(r[2])), repr(float(r[3])), repr(float(r[4])), int(bool(r[5]))])
    failed = [r for r in rows if not r[5]]
    derived = {"checks": len(rows), "failed": len(failed), "schedule_dimension": n_sched, "epsilon": epsilon}
    if failed:
        write_manifest(out, "verify", cfg, derived)
        raise VerificationFailure(f"{len(failed)} of {len(rows)} checks failed, first: {failed[0][:2]}")
    return derived


COMMANDS = {
    "sample1d": run_sample1d,
    "walk": run_walk,
    "anneal": run_anneal,
    "stoch-opt": run_stoch_opt,
    "staged": run_staged,
    "verify": run_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nearconvex", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", help="YAML run description")
        p.add_argument("--out", "-o", help="output directory (overrides 'output')")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, default=None,
                       help="strand threads (default: logical cores)")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--strands", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--theory", action="store_true", help="theory-mode step counts")
        p.add_argument("--verbose", "-v", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args)
        out = Path(cfg.get("output", "nearconvex_out"))
        out.mkdir(parents=True, exist_ok=True)
        workers = args.workers if args.workers is not None else int(cfg.get("workers", os.cpu_count() or 1))
        derived = COMMANDS[args.command](cfg, out, max(1, workers))
        write_manifest(out, args.command, cfg, derived)
    except VerificationFailure as err:
        print(f"verification failed: {err}", file=sys.stderr)
        return EXIT_VERIFY
    except (ConfigurationError, InvalidInputError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NearConvexError as err:
        print(f"algorithm failure: {err}", file=sys.stderr)
        return EXIT_ALGORITHM
    except (TypeError, ValueError, KeyError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.command}: wrote results to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

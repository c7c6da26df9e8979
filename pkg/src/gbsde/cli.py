"""Command line interface: config-driven solves with reproducible artifacts.

Subcommands: solve, two-epoch, expect, simulate, verify, convergence. Every
run reads one INI config, writes artifacts under an output directory, and
records a manifest with the resolved configuration, library versions, and
the active kernel backend. Identical configs produce byte-identical
artifacts apart from the manifest timing block.

Exit codes: 0 success, 1 a verification or convergence check failed,
2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import _kernels as K
from . import bsde, expectation, exprlang, verify
from .core import (
    BudgetError,
    CFLError,
    DomainError,
    GBSDEError,
    Generator,
    Grids,
    NumericalError,
    Payoff,
    VolatilityBand,
    spot_check_lipschitz,
    worker_count,
)

__all__ = ["ConfigError", "load_config", "main"]


class ConfigError(GBSDEError):
    """Invalid or missing configuration."""


_SCHEMA: dict[str, dict[str, type]] = {
    "band": {"sigma_lo": float, "sigma_hi": float},
    "grid": {"t": float, "nx": int, "nt": int, "width_mult": float},
    "payoff": {
        "kind": str,
        "a": float,
        "b": float,
        "s": float,
        "strike": float,
        "lo": float,
        "mid": float,
        "hi": float,
        "scale": float,
        "expr": str,
        "lipschitz": float,
        "bound": float,
    },
    "generator": {"f": str, "g": str, "lipschitz": float},
    "two_epoch": {"t1": float, "psi": str, "lipschitz": float},
    "expect": {"expr": str, "times": str},
    "mc": {"n_paths": int, "seed": int, "controls": str, "chunk": int},
    "verify": {
        "alpha": float,
        "eps": float,
        "kappa_steps": int,
        "n_controls": int,
        "n_paths": int,
        "seed": int,
        "checks": str,
    },
    "output": {"directory": str, "path_limit": int, "family_limit": int},
    "convergence": {"levels": int},
}

_PAYOFF_PARAMS: dict[str, tuple[set[str], set[str]]] = {
    # kind -> (required keys, optional keys)
    "linear": ({"a"}, {"b"}),
    "square": (set(), {"s"}),
    "call": ({"strike"}, set()),
    "put": ({"strike"}, set()),
    "butterfly": ({"lo", "mid", "hi"}, {"scale"}),
    "expression": ({"expr", "lipschitz"}, {"bound"}),
}

_CHECK_NAMES = (
    "decreasing_K",
    "martingale_K",
    "lipschitz_value",
    "estimate_Y",
    "estimate_ZK",
    "stability_Y",
)


def load_config(path: str) -> dict:
    """Parse and validate an INI config into a nested dict.

    Unknown sections or keys are rejected; values are converted per the
    schema (the grid horizon key is T, matched case-insensitively).
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    out: dict = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _SCHEMA[section]
        vals: dict = {}
        for key, raw in cp.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            typ = schema[key]
            try:
                if typ is int:
                    vals[key] = int(raw)
                elif typ is float:
                    vals[key] = float(raw)
                else:
                    vals[key] = raw.strip()
            except ValueError:
                raise ConfigError(
                    f"key '{key}' in [{section}] must be {typ.__name__}, got {raw!r}"
                ) from None
        out[section] = vals
    if "band" not in out:
        raise ConfigError("config needs a [band] section with sigma_lo, sigma_hi")
    for req in ("sigma_lo", "sigma_hi"):
        if req not in out["band"]:
            raise ConfigError(f"[band] needs {req}")
    return out


def _build_band(cfg: dict) -> VolatilityBand:
    b = cfg["band"]
    try:
        return VolatilityBand(b["sigma_lo"], b["sigma_hi"])
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def _build_grids(cfg: dict, band: VolatilityBand) -> Grids:
    g = cfg.get("grid", {})
    try:
        return Grids.make(
            band,
            g.get("t", 1.0),
            g.get("nx", 401),
            nt=g.get("nt"),
            width_mult=g.get("width_mult", 6.0),
        )
    except (DomainError, CFLError) as exc:
        raise ConfigError(str(exc)) from None


def _build_payoff(cfg: dict) -> Payoff:
    p = cfg.get("payoff")
    if not p or "kind" not in p:
        raise ConfigError("this command needs a [payoff] section with a kind")
    kind = p["kind"]
    if kind not in _PAYOFF_PARAMS:
        raise ConfigError(
            f"unknown payoff kind {kind!r}; choose from "
            + ", ".join(sorted(_PAYOFF_PARAMS))
        )
    required, optional = _PAYOFF_PARAMS[kind]
    given = set(p) - {"kind"}
    missing = required - given
    if missing:
        raise ConfigError(f"payoff kind {kind!r} needs keys: {sorted(missing)}")
    extra = given - required - optional
    if extra:
        raise ConfigError(f"payoff kind {kind!r} does not take keys: {sorted(extra)}")
    try:
        if kind == "linear":
            return Payoff.linear(p["a"], p.get("b", 0.0))
        if kind == "square":
            return Payoff.square(p.get("s", 1.0))
        if kind == "call":
            return Payoff.call(p["strike"])
        if kind == "put":
            return Payoff.put(p["strike"])
        if kind == "butterfly":
            return Payoff.butterfly(p["lo"], p["mid"], p["hi"], p.get("scale", 1.0))
        return Payoff.from_expression(p["expr"], p["lipschitz"], p.get("bound"))
    except (DomainError, exprlang.ExpressionError) as exc:
        raise ConfigError(str(exc)) from None


def _build_generator(cfg: dict) -> Generator:
    g = cfg.get("generator")
    if not g:
        return Generator.zero()
    try:
        return Generator.from_expressions(
            g.get("f", "0"), g.get("g", "0"), g.get("lipschitz", 0.0)
        )
    except exprlang.ExpressionError as exc:
        raise ConfigError(str(exc)) from None


def _mc_params(cfg: dict) -> dict:
    m = cfg.get("mc", {})
    return {
        "n_paths": m.get("n_paths", 1024),
        "seed": m.get("seed", 12345),
        "controls": m.get("controls", "random:8"),
        "chunk": m.get("chunk", 2048),
    }


def _output_params(cfg: dict, override: str | None) -> dict:
    o = cfg.get("output", {})
    return {
        "directory": override or o.get("directory", "out"),
        "path_limit": o.get("path_limit", 128),
        "family_limit": o.get("family_limit", 8),
    }


def _parse_controls(
    spec: str, band: VolatilityBand, grids: Grids, seed: int, surfaces=None
):
    """Control list from a spec like 'random:8,constant:0.7,bangbang'."""
    controls: list = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if part.startswith("random:"):
            try:
                count = int(part.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad control spec {part!r}") from None
            controls.extend(
                expectation.random_controls(band, grids.nt, count, seed)
            )
        elif part.startswith("constant:"):
            try:
                level = float(part.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad control spec {part!r}") from None
            if not (band.sigma_lo <= level <= band.sigma_hi):
                raise ConfigError(f"constant control {level} leaves the band")
            controls.append(expectation.VolControl.constant(level, grids.nt))
        elif part == "bangbang":
            if surfaces is None:
                raise ConfigError(
                    "bangbang control needs a payoff surface (not available here)"
                )
            controls.append(
                expectation.AdaptiveCurvatureControl(surfaces.uxx, band)
            )
        else:
            raise ConfigError(f"bad control spec {part!r}")
    if not controls:
        raise ConfigError("control spec selected no controls")
    return controls


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_text(path: str, lines: list[str]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_long_surface(path: str, surface, colname: str = "u") -> None:
    g = surface.grids
    t, x = g.t, g.x
    lines = [f"t,x,{colname}"]
    vals = surface.values
    for k in range(g.nt + 1):
        tk = _fmt(t[k])
        row = vals[k]
        for j in range(g.nx):
            lines.append(f"{tk},{_fmt(x[j])},{_fmt(row[j])}")
    _write_text(path, lines)


def _write_paths_csv(path: str, bundle, limit: int) -> None:
    g = bundle.grids
    t = g.t
    n = min(bundle.n_paths, max(0, limit))
    lines = ["path,k,t,B,qv"]
    for i in range(n):
        pid = bundle.path_offset + i
        for k in range(g.nt + 1):
            lines.append(
                f"{pid},{k},{_fmt(t[k])},{_fmt(bundle.b[i, k])},{_fmt(bundle.qv[i, k])}"
            )
    _write_text(path, lines)


def _write_triple_csv(path: str, triple, limit: int) -> None:
    g = triple.bundle.grids
    t = g.t
    n = min(triple.bundle.n_paths, max(0, limit))
    lines = ["path,k,t,Y,Z,K"]
    for i in range(n):
        pid = triple.bundle.path_offset + i
        for k in range(g.nt + 1):
            lines.append(
                f"{pid},{k},{_fmt(t[k])},{_fmt(triple.y[i, k])},"
                f"{_fmt(triple.z[i, k])},{_fmt(triple.k[i, k])}"
            )
    _write_text(path, lines)


def _write_reports(path: str, reports: list) -> None:
    lines = [json.dumps(r.to_json(), sort_keys=True) for r in reports]
    _write_text(path, lines)


def _manifest(
    outdir: str,
    command: str,
    cfg: dict,
    artifacts: list[str],
    results: dict,
    started: float,
) -> None:
    doc = {
        "command": command,
        "config": cfg,
        "backend": K.backend_name(),
        "threads": worker_count(),
        "versions": {
            "gbsde": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "artifacts": sorted(artifacts),
        "results": results,
        "timing": {
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "elapsed_seconds": time.monotonic() - started,
        },
    }
    _write_text(
        os.path.join(outdir, "run_manifest.json"),
        [json.dumps(doc, indent=2, sort_keys=True)],
    )


def _cmd_solve(cfg: dict, out: dict) -> int:
    started = time.monotonic()
    band = _build_band(cfg)
    grids = _build_grids(cfg, band)
    payoff = _build_payoff(cfg)
    gen = _build_generator(cfg)
    surfaces = bsde.solve_markovian(payoff, gen, band, grids)
    y0 = surfaces.u.value_at(0.0, 0.0)
    outdir = out["directory"]
    artifacts = ["surfaces/u.csv"]
    _write_long_surface(os.path.join(outdir, "surfaces", "u.csv"), surfaces.u, "u")
    results: dict = {"y0": y0}
    if "mc" in cfg:
        mc = _mc_params(cfg)
        bb = expectation.AdaptiveCurvatureControl(surfaces.uxx, band)
        bundle = expectation.simulate_paths(
            bb, mc["n_paths"], mc["seed"], grids, band
        )
        triple = bsde.extract_triple(surfaces, bundle, gen, band)
        _write_paths_csv(
            os.path.join(outdir, "paths.csv"), bundle, out["path_limit"]
        )
        _write_triple_csv(
            os.path.join(outdir, "triple.csv"), triple, out["path_limit"]
        )
        artifacts += ["paths.csv", "triple.csv"]
        res = bsde.bsde_residual(triple, gen, payoff)
        results["max_residual"] = float(np.max(res))
        results["k_terminal_mean"] = float(np.mean(triple.k[:, -1]))
    _manifest(outdir, "solve", cfg, artifacts, results, started)
    print(f"Y0 = {_fmt(y0)}")
    print(f"wrote {len(artifacts) + 1} artifacts under {outdir}")
    return 0


def _cmd_two_epoch(cfg: dict, out: dict) -> int:
    started = time.monotonic()
    band = _build_band(cfg)
    grids = _build_grids(cfg, band)
    gen = _build_generator(cfg)
    te = cfg.get("two_epoch")
    if not te or "t1" not in te or "psi" not in te:
        raise ConfigError("two-epoch needs a [two_epoch] section with t1 and psi")
    try:
        expr = exprlang.parse_expression(te["psi"])
        exprlang.require_variables(expr, {"x", "y"})
    except exprlang.ExpressionError as exc:
        raise ConfigError(str(exc)) from None

    def psi(xv, yv):
        return exprlang.evaluate(expr, {"x": xv, "y": yv})

    problem = bsde.TwoEpochProblem(
        t1=te["t1"],
        psi=psi,
        gen=gen,
        band=band,
        grids=grids,
        lipschitz_const=te.get("lipschitz", 0.0),
    )
    sol = bsde.solve_two_epoch(problem)
    outdir = out["directory"]
    artifacts = ["surfaces/epoch0.csv", "surfaces/y_t1.csv"]
    _write_long_surface(
        os.path.join(outdir, "surfaces", "epoch0.csv"), sol.epoch0, "u"
    )
    lines = ["x,y_t1"]
    for j in range(grids.nx):
        lines.append(f"{_fmt(grids.x[j])},{_fmt(sol.y_t1[j])}")
    _write_text(os.path.join(outdir, "surfaces", "y_t1.csv"), lines)
    limit = min(out["family_limit"], grids.nx)
    if limit > 0:
        idx = np.unique(np.linspace(0, grids.nx - 1, limit).astype(np.int64))
        from .pde import write_surface_csv

        for i in idx:
            rel = os.path.join("surfaces", f"family_{int(i)}.csv")
            write_surface_csv(
                sol.family_member(int(i)), os.path.join(outdir, rel), wide=True
            )
            artifacts.append(rel)
    _manifest(
        outdir,
        "two-epoch",
        cfg,
        artifacts,
        {"y0": sol.y0, "t1": problem.t1},
        started,
    )
    print(f"Y0 = {_fmt(sol.y0)}")
    return 0


def _parse_expect(cfg: dict, grids: Grids) -> expectation.IncrementPayoff:
    ex = cfg.get("expect")
    if not ex or "expr" not in ex:
        raise ConfigError("expect needs an [expect] section with expr")
    raw = ex.get("times", "").strip()
    interior: list[float] = []
    if raw:
        try:
            interior = [float(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad times list {raw!r}") from None
    times = (0.0, *interior, grids.T)
    m = len(times) - 1
    var_order = ("x", "y", "z")
    if m > len(var_order):
        raise ConfigError("expect expressions support at most 3 increments")
    allowed = set(var_order[:m])
    try:
        expr = exprlang.parse_expression(ex["expr"])
        exprlang.require_variables(expr, allowed)
    except exprlang.ExpressionError as exc:
        raise ConfigError(str(exc)) from None

    def fn(*deltas):
        env = dict(zip(var_order, deltas))
        return exprlang.evaluate(expr, env)

    try:
        return expectation.IncrementPayoff.of(times, fn)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def _cmd_expect(cfg: dict, out: dict) -> int:
    started = time.monotonic()
    band = _build_band(cfg)
    grids = _build_grids(cfg, band)
    payoff = _parse_expect(cfg, grids)
    value = expectation.g_expectation(payoff, band, grids)
    results: dict = {"value": value, "m": payoff.m}
    if "mc" in cfg:
        mc = _mc_params(cfg)
        controls = _parse_controls(mc["controls"], band, grids, mc["seed"])
        stats = expectation.evaluate_controls(
            payoff, controls, band, grids, mc["n_paths"], mc["seed"], mc["chunk"]
        )
        best = max(s[0] for s in stats)
        results["mc_best_mean"] = best
        results["mc_controls"] = len(controls)
    outdir = out["directory"]
    _manifest(outdir, "expect", cfg, [], results, started)
    print(f"value = {_fmt(value)}")
    return 0


def _cmd_simulate(cfg: dict, out: dict) -> int:
    started = time.monotonic()
    band = _build_band(cfg)
    grids = _build_grids(cfg, band)
    mc = _mc_params(cfg)
    surfaces = None
    if "bangbang" in mc["controls"]:
        payoff = _build_payoff(cfg)
        gen = _build_generator(cfg)
        surfaces = bsde.solve_markovian(payoff, gen, band, grids)
    controls = _parse_controls(mc["controls"], band, grids, mc["seed"], surfaces)
    bundle = expectation.simulate_paths(
        controls[0], mc["n_paths"], mc["seed"], grids, band
    )
    outdir = out["directory"]
    _write_paths_csv(os.path.join(outdir, "paths.csv"), bundle, out["path_limit"])
    results = {
        "n_paths": bundle.n_paths,
        "control": bundle.control_desc,
        "qv_terminal_mean": float(np.mean(bundle.qv[:, -1])),
    }
    _manifest(outdir, "simulate", cfg, ["paths.csv"], results, started)
    print(f"simulated {bundle.n_paths} paths ({bundle.control_desc})")
    return 0


def _driver_sup(surfaces, gen: Generator, band: VolatilityBand) -> float:
    """Realized folded-driver magnitude sup |f| + sigma_hi^2 sup |g| along
    the computed surface."""
    g = surfaces.u.grids
    t = g.t
    worst = 0.0
    for k in range(g.nt + 1):
        fv = np.asarray(
            gen.f(float(t[k]), surfaces.u.values[k], surfaces.ux.values[k])
        )
        term = float(np.max(np.abs(fv)))
        if gen.has_g:
            gv = np.asarray(
                gen.g(float(t[k]), surfaces.u.values[k], surfaces.ux.values[k])
            )
            term += band.hi2 * float(np.max(np.abs(gv)))
        worst = max(worst, term)
    return worst


def _cmd_verify(cfg: dict, out: dict, only: str | None) -> int:
    started = time.monotonic()
    band = _build_band(cfg)
    grids = _build_grids(cfg, band)
    payoff = _build_payoff(cfg)
    gen = _build_generator(cfg)
    v = cfg.get("verify", {})
    alpha = v.get("alpha", 2.0)
    eps = v.get("eps", 0.0)
    kappa = v.get("kappa_steps", verify.DEFAULT_KAPPA_STEPS)
    n_controls = v.get("n_controls", 4)
    n_paths = v.get("n_paths", 256)
    seed = v.get("seed", 2025)
    spec = only if only is not None else v.get("checks", "all")
    if spec.strip() == "all":
        names = list(_CHECK_NAMES)
    else:
        names = [s.strip() for s in spec.split(",") if s.strip()]
        unknown = [n for n in names if n not in _CHECK_NAMES]
        if unknown:
            raise ConfigError(
                f"unknown checks {unknown}; choose from {list(_CHECK_NAMES)}"
            )

    surfaces = None
    reports = []
    for nm in names:
        if nm in ("decreasing_K", "martingale_K", "lipschitz_value") and surfaces is None:
            surfaces = bsde.solve_markovian(payoff, gen, band, grids)
        if nm == "decreasing_K":
            controls = expectation.random_controls(band, grids.nt, n_controls, seed)
            controls.append(
                expectation.AdaptiveCurvatureControl(surfaces.uxx, band)
            )
            triples = []
            for c in controls:
                bundle = expectation.simulate_paths(
                    c, min(n_paths, 512), seed, grids, band
                )
                triples.append(bsde.extract_triple(surfaces, bundle, gen, band))
            reports.append(verify.check_decreasing(triples))
        elif nm == "martingale_K":
            reports.append(
                verify.check_martingale_K(
                    payoff, gen, band, grids,
                    n_controls=n_controls, n_paths=n_paths, seed=seed,
                    kappa_steps=kappa,
                )
            )
        elif nm == "lipschitz_value":
            lphi = payoff.lipschitz_const
            if not math.isfinite(lphi):
                lphi = spot_check_lipschitz(payoff, grids.x)
            reports.append(
                verify.check_lipschitz(
                    surfaces.u,
                    lphi,
                    gen.lipschitz_const,
                    _driver_sup(surfaces, gen, band),
                    band,
                )
            )
        elif nm == "estimate_Y":
            reports.append(
                verify.check_estimate_Y(payoff, gen, band, grids, alpha, eps=eps)
            )
        elif nm == "estimate_ZK":
            reports.append(
                verify.check_estimate_ZK(
                    payoff, gen, band, grids, alpha, eps=eps,
                    n_controls=n_controls, n_paths=n_paths, seed=seed,
                    kappa_steps=kappa,
                )
            )
        elif nm == "stability_Y":
            gen_b = Generator(
                f=lambda t, y, z: np.asarray(gen.f(t, y, z)) + 0.25,
                g=gen.g,
                lipschitz_const=gen.lipschitz_const,
            )
            reports.append(
                verify.check_stability(
                    payoff, gen, payoff, gen_b, band, grids, alpha
                )
            )
    outdir = out["directory"]
    _write_reports(os.path.join(outdir, "reports.jsonl"), reports)
    passed = sum(1 for r in reports if r.passed)
    _manifest(
        outdir,
        "verify",
        cfg,
        ["reports.jsonl"],
        {"checks": len(reports), "passed": passed},
        started,
    )
    for r in reports:
        print(r.summary())
    print(f"{passed}/{len(reports)} checks passed")
    return 0 if passed == len(reports) else 1


def _cmd_convergence(cfg: dict, out: dict, levels_arg: int | None) -> int:
    started = time.monotonic()
    band = _build_band(cfg)
    grids = _build_grids(cfg, band)
    payoff = _build_payoff(cfg)
    gen = _build_generator(cfg)
    levels = levels_arg if levels_arg is not None else cfg.get(
        "convergence", {}
    ).get("levels", 3)
    if levels < 2:
        raise ConfigError("convergence needs at least 2 levels")
    mc = _mc_params(cfg)
    n_res = min(mc["n_paths"], 128)
    y0s: list[float] = []
    resids: list[float] = []
    metas: list[tuple[int, int]] = []
    for lev in range(levels):
        g = grids.refined(lev)
        surfaces = bsde.solve_markovian(payoff, gen, band, g)
        y0s.append(surfaces.u.value_at(0.0, 0.0))
        bb = expectation.AdaptiveCurvatureControl(surfaces.uxx, band)
        bundle = expectation.simulate_paths(bb, n_res, mc["seed"], g, band)
        triple = bsde.extract_triple(surfaces, bundle, gen, band)
        resids.append(float(np.max(bsde.bsde_residual(triple, gen, payoff))))
        metas.append((g.nx, g.nt))
    errs = [abs(y - y0s[-1]) for y in y0s[:-1]]
    tiny = 1e-12 * max(1.0, abs(y0s[-1]))
    orders: list[float] = []
    for e0, e1 in zip(errs, errs[1:]):
        if e0 > tiny and e1 > tiny:
            orders.append(math.log2(e0 / e1))
        else:
            orders.append(math.nan)
    lines = ["level,nx,nt,Y0,err,residual,order"]
    for lev in range(levels):
        err = _fmt(errs[lev]) if lev < len(errs) else "nan"
        order = (
            _fmt(orders[lev])
            if lev < len(orders) and math.isfinite(orders[lev])
            else "nan"
        )
        lines.append(
            f"{lev},{metas[lev][0]},{metas[lev][1]},{_fmt(y0s[lev])},"
            f"{err},{_fmt(resids[lev])},{order}"
        )
    outdir = out["directory"]
    _write_text(os.path.join(outdir, "convergence.csv"), lines)
    finite_orders = [o for o in orders if math.isfinite(o)]
    if all(e <= tiny for e in errs):
        ok = True
    else:
        ok = bool(finite_orders) and all(o > 0.25 for o in finite_orders)
    _manifest(
        outdir,
        "convergence",
        cfg,
        ["convergence.csv"],
        {"y0": y0s, "orders": orders, "converged": ok},
        started,
    )
    for line in lines:
        print(line)
    return 0 if ok else 1


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gbsde",
        description="Solvers for backward equations under volatility uncertainty",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve the terminal-value problem and export surfaces"),
        ("two-epoch", "compose the solve across an intermediate time"),
        ("expect", "sublinear expectation of an increment payoff"),
        ("simulate", "simulate paths under a volatility control"),
        ("verify", "run structural checks and write reports"),
        ("convergence", "grid-refinement study of the origin value"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("-c", "--config", required=True, help="INI config path")
        p.add_argument("-o", "--outdir", default=None, help="output directory")
        if name == "verify":
            p.add_argument(
                "--checks", default=None, help="comma-separated check names"
            )
        if name == "convergence":
            p.add_argument("--levels", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = _output_params(cfg, args.outdir)
        if args.command == "solve":
            return _cmd_solve(cfg, out)
        if args.command == "two-epoch":
            return _cmd_two_epoch(cfg, out)
        if args.command == "expect":
            return _cmd_expect(cfg, out)
        if args.command == "simulate":
            return _cmd_simulate(cfg, out)
        if args.command == "verify":
            return _cmd_verify(cfg, out, args.checks)
        return _cmd_convergence(cfg, out, args.levels)
    except (ConfigError, exprlang.ExpressionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CFLError, NumericalError, BudgetError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except GBSDEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

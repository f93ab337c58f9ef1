"""Command-line front end.

Exit codes: 0 success, 1 input/schema error, 2 a marginal pair fails validation
(convex order, dispersion, or separation for the upper bound).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .measures import (
    ConvexOrderError,
    DispersionError,
    Measure,
    MeasureError,
    convex_order_leq,
    decompose,
    load_measure,
)


class ValidationFailure(Exception):
    def __init__(self, payload: dict):
        self.payload = payload
        super().__init__(payload.get("message", ""))


@dataclass
class RunConfig:
    subcommand: str
    inputs: list[str]
    out: str | None = None
    fmt: str = "json"
    seed: int = 0
    tol_order: float = 1e-12
    tol_lagrangian: float = 1e-9
    tol_quad: float = 1e-12
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("tol_order", "tol_lagrangian", "tol_quad"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip float repr."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def render(result, fmt: str) -> str:
    """Dicts become JSON (or key,value CSV); strings are already rendered."""
    if isinstance(result, str):
        return result
    if fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["key", "value"])
        for k, v in sorted(_clean(result).items()):
            wr.writerow([k, json.dumps(v) if isinstance(v, (list, dict)) else (repr(v) if isinstance(v, float) else v)])
        return buf.getvalue()
    return dumps(result)


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_grid(spec: str) -> tuple[int, int]:
    parts = spec.lower().split("x")
    if len(parts) == 1:
        n = int(parts[0])
        return n, n
    return int(parts[0]), int(parts[1])


def _pair(cfg: RunConfig, mu: Measure, nu: Measure):
    try:
        return decompose(mu, nu, cfg.tol_order)
    except ConvexOrderError as exc:
        raise ValidationFailure(
            {"error": "convex_order", "violated_at": exc.witness, "message": f"convex_order violated_at {_fmt(exc.witness)}"}
        ) from exc
    except DispersionError as exc:
        raise ValidationFailure(
            {"error": "dispersion", "interval": list(exc.interval), "message": str(exc)}
        ) from exc


def _fmt(x: float) -> str:
    if math.isfinite(x) and x == int(x):
        return str(int(x))
    return repr(x)


# -- subcommands -------------------------------------------------------------


def cmd_check(cfg, mu, nu):
    from .potential import Potential
    from .upper_coupling import check_strengthened

    v = convex_order_leq(mu, nu, cfg.tol_order)
    if not v:
        raise ValidationFailure(
            {"error": "convex_order", "violated_at": v.witness, "message": f"convex_order violated_at {_fmt(v.witness)}"}
        )
    pair = _pair(cfg, mu, nu)
    out = {"convex_order": "holds", "dispersion": "ok", "kappa": pair.kappa, "identical": pair.identical}
    if not pair.identical:
        out.update({"E": [pair.a, pair.b], "gamma_a": pair.gamma_a})
        shape = Potential.from_pair(pair).shape_check()
        out["shape"] = "ok" if shape else f"violation at {shape.x!r}"
    sv = check_strengthened(pair)
    out["separated"] = "ok" if sv else sv.reason
    return out


def cmd_lower(cfg, mu, nu):
    from .lower_coupling import CouplingMap, bound_report, sample

    pair = _pair(cfg, mu, nu)
    grid = cfg.options.get("grid", 200)
    rep = bound_report(pair, grid)
    if cfg.options.get("curves") and not pair.identical:
        c = CouplingMap(pair)
        r = c.evaluate(c.u_grid)
        _emit(_csv(["u", "x", "P", "Q", "phi", "zeta", "w"], zip(r.u, r.x, r.P, r.Q, r.phi, r.zeta, r.w)), cfg.options["curves"])
    if cfg.options.get("sample"):
        c = CouplingMap(pair)
        xy = sample(c, cfg.seed, cfg.options["sample"])
        _emit(_csv(["x", "y"], xy), cfg.options.get("sample_out"))
    return rep.to_dict()


def cmd_upper(cfg, mu, nu):
    from .upper_coupling import (
        UpperCouplingMap,
        check_strengthened,
        jensen_bound,
        upper_pair,
        upper_price,
        upper_pushforward_cdf,
    )

    pair = upper_pair(mu, nu) if len(mu.merged_atoms) == 1 and not mu.cells else _pair(cfg, mu, nu)
    sv = check_strengthened(pair)
    if not sv:
        raise ValidationFailure({"error": "separation", "message": sv.reason})
    m = UpperCouplingMap(pair)
    price = upper_price(m, cfg.tol_quad)
    out = {"upper_price": price, "jensen_bound": jensen_bound(pair)}
    if not m.trivial:
        levels = (np.arange(200) + 0.5) / 200
        ys = nu.quantile_function.left(levels)
        ys = ys[np.isfinite(ys)]
        out["marginal_error"] = float(np.max(np.abs(upper_pushforward_cdf(m, ys) - nu.cdf(ys))))
        if cfg.options.get("curves"):
            r = m.evaluate(m.u_grid)
            _emit(_csv(["u", "x", "G", "H", "phi", "w"], zip(r.u, r.x, r.G, r.H, r.phi, r.w)), cfg.options["curves"])
    return out


def _grid_from(cfg, pair) -> np.ndarray:
    g = cfg.options.get("grid_range")
    if g:
        lo, hi, n = g
        return np.linspace(float(lo), float(hi), int(n))
    lo = max(min(pair.mu.support[0], pair.nu.support[0]) - 1.0, -10.0)
    hi = min(max(pair.mu.support[1], pair.nu.support[1]) + 1.0, 10.0)
    return np.linspace(lo, hi, 201)


def cmd_hedge(cfg, mu, nu):
    from .dual_hedge import build_hedge, verify_subhedge
    from .lower_coupling import CouplingMap

    pair = _pair(cfg, mu, nu)
    h = build_hedge(CouplingMap(pair))
    xs = _grid_from(cfg, pair)
    text = _csv(["x", "psi", "delta"], zip(xs, h.psi(xs), h.delta(xs)))
    lg = cfg.options.get("lagrangian_grid")
    if lg:
        cert = verify_subhedge(h, lg[0], lg[1], tol=cfg.tol_lagrangian)
        _emit(text, cfg.out)
        return _cert_dict(cert)
    return text


def _cert_dict(cert) -> dict:
    return {
        "min_lagrangian": cert.min_value,
        "argmin": list(cert.argmin),
        "max_abs_support": cert.max_abs_support,
        "passed": cert.passed,
        "window": list(cert.window),
    }


def cmd_verify(cfg, mu, nu):
    from .dual_hedge import build_hedge, verify_subhedge
    from .lower_coupling import CouplingMap

    pair = _pair(cfg, mu, nu)
    nx, ny = cfg.options.get("grid_xy", (500, 500))
    cert = verify_subhedge(build_hedge(CouplingMap(pair)), nx, ny, tol=cfg.tol_lagrangian)
    return _cert_dict(cert)


def cmd_sample(cfg, mu, nu):
    n = cfg.options.get("n", 1000)
    if cfg.options.get("upper"):
        from .upper_coupling import UpperCouplingMap, check_strengthened, sample_upper, upper_pair

        pair = upper_pair(mu, nu) if len(mu.merged_atoms) == 1 and not mu.cells else _pair(cfg, mu, nu)
        sv = check_strengthened(pair)
        if not sv:
            raise ValidationFailure({"error": "separation", "message": sv.reason})
        xy = sample_upper(UpperCouplingMap(pair), cfg.seed, n)
    else:
        from .lower_coupling import CouplingMap, sample

        xy = sample(CouplingMap(_pair(cfg, mu, nu)), cfg.seed, n)
    return _csv(["x", "y"], xy)


def cmd_curves(cfg, mu, nu):
    from .potential import Potential

    pot = Potential(mu, nu)
    g = cfg.options.get("grid_range")
    if g:
        xs = np.linspace(float(g[0]), float(g[1]), int(g[2]))
    else:
        lo = max(min(mu.support[0], nu.support[0]) - 1.0, -10.0)
        hi = min(max(mu.support[1], nu.support[1]) + 1.0, 10.0)
        xs = np.linspace(lo, hi, 201)
    return _csv(["x", "D", "D_left", "D_right"], zip(xs, pot.D(xs), pot.D_prime(xs, "left"), pot.D_prime(xs, "right")))


def cmd_oracle(cfg, mu, nu):
    from .oracle import InfeasibleError, oracle_price

    n = cfg.options.get("n", 120)
    try:
        res = oracle_price(mu, nu, n, cfg.options.get("sense", "min"), cfg.options.get("epsilon", 1e-12))
    except InfeasibleError as exc:
        raise ValidationFailure({"error": "infeasible", "family": exc.family, "message": str(exc)}) from exc
    return ({"value": res.value, "epsilon": res.epsilon, "n": n, "sense": cfg.options.get("sense", "min")})


def cmd_multi(cfg, measures):
    from .multiperiod import StepError, bound_sequence

    try:
        res = bound_sequence(measures)
    except StepError as exc:
        payload = {"error": "step", "step": exc.step, "message": str(exc)}
        if isinstance(exc.cause, ConvexOrderError):
            payload.update({"condition": "convex_order", "violated_at": exc.cause.witness})
        elif isinstance(exc.cause, DispersionError):
            payload.update({"condition": "dispersion", "interval": list(exc.cause.interval)})
        raise ValidationFailure(payload) from exc
    return ({"total": res.total, "steps": [{"step": i + 1, "price": p} for i, p in enumerate(res.prices)]})


_PAIR_COMMANDS = {
    "check": cmd_check,
    "lower": cmd_lower,
    "upper": cmd_upper,
    "hedge": cmd_hedge,
    "sample": cmd_sample,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "curves": cmd_curves,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    try:
        measures = [load_measure(p) for p in cfg.inputs]
    except (OSError, ValueError) as exc:
        sys.stderr.write(dumps({"error": "input", "message": str(exc)}))
        return 1
    try:
        if cfg.subcommand == "multi":
            if len(measures) < 2:
                sys.stderr.write(dumps({"error": "input", "message": "multi needs at least two measures"}))
                return 1
            text = cmd_multi(cfg, measures)
        else:
            if len(measures) != 2:
                sys.stderr.write(dumps({"error": "input", "message": "expected two measure files"}))
                return 1
            text = _PAIR_COMMANDS[cfg.subcommand](cfg, *measures)
    except ValidationFailure as exc:
        _emit(dumps(exc.payload), None)
        return 2
    except MeasureError as exc:
        _emit(dumps({"error": "validation", "message": str(exc)}), None)
        return 2
    out = cfg.out if not (cfg.subcommand == "hedge" and cfg.options.get("lagrangian_grid")) else None
    _emit(render(text, cfg.fmt), out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the main output here instead of stdout")
    common.add_argument("--format", dest="fmt", choices=["json", "csv"], default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol-order", type=float, default=1e-12, help="convex-order slack (default 1e-12)")
    common.add_argument("--tol-lagrangian", type=float, default=1e-9, help="subhedge certificate slack (default 1e-9)")
    common.add_argument("--tol-quad", type=float, default=1e-12, help="quadrature tolerance (default 1e-12)")

    p = argparse.ArgumentParser(prog="fwdstraddle", description="Robust bounds for forward-start straddles.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def pair_cmd(name, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.add_argument("mu")
        sp.add_argument("nu")
        return sp

    pair_cmd("check", "convex order, dispersion and separation checks")
    sp = pair_cmd("lower", "lower bound report")
    sp.add_argument("--curves", help="CSV of u, x, P, Q, phi, zeta, w")
    sp.add_argument("--sample", type=int, help="also draw this many (x, y) pairs")
    sp.add_argument("--sample-out", help="where to write the sample CSV")
    sp.add_argument("--grid", type=int, default=200, help="Lagrangian grid size per axis")
    sp = pair_cmd("upper", "upper bound report")
    sp.add_argument("--curves", help="CSV of u, x, G, H, phi, w")
    sp = pair_cmd("hedge", "tabulate psi and delta")
    sp.add_argument("--grid", nargs=3, metavar=("LO", "HI", "N"), dest="grid_range")
    sp.add_argument("--lagrangian-grid", nargs=2, type=int, metavar=("NX", "NY"))
    sp = pair_cmd("sample", "draw pairs from the optimal coupling")
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--upper", action="store_true", help="sample the maximal coupling instead")
    sp = pair_cmd("verify", "Lagrangian certificate on a grid")
    sp.add_argument("--grid", default="500x500", help="NXxNY")
    sp = pair_cmd("oracle", "discretized LP value")
    sp.add_argument("--n", type=int, default=120)
    sp.add_argument("--sense", choices=["min", "max"], default="min")
    sp.add_argument("--epsilon", type=float, default=1e-12)
    sp = pair_cmd("curves", "tabulate D and its one-sided derivatives")
    sp.add_argument("--grid", nargs=3, metavar=("LO", "HI", "N"), dest="grid_range")
    sp = sub.add_parser("multi", help="lower bound over a sequence of marginals", parents=[common])
    sp.add_argument("measures", nargs="+")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    opts = {}
    for key in ("curves", "sample", "sample_out", "grid_range", "n", "upper", "sense", "epsilon"):
        if getattr(ns, key, None) is not None:
            opts[key] = getattr(ns, key)
    if ns.subcommand == "lower":
        opts["grid"] = ns.grid
    if ns.subcommand == "verify":
        opts["grid_xy"] = _parse_grid(ns.grid)
    if getattr(ns, "lagrangian_grid", None):
        opts["lagrangian_grid"] = tuple(ns.lagrangian_grid)
    inputs = ns.measures if ns.subcommand == "multi" else [ns.mu, ns.nu]
    for k in ("grid_xy", "lagrangian_grid"):
        if k in opts and min(opts[k]) < 2:
            raise ValueError("grid sizes must be at least 2")
    return RunConfig(ns.subcommand, inputs, ns.out, ns.fmt or "json", ns.seed, ns.tol_order, ns.tol_lagrangian, ns.tol_quad, opts)


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ValueError as exc:
        sys.stderr.write(dumps({"error": "input", "message": str(exc)}))
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: validate, forward, invert, simulate, roundtrip, price-call.

Exit codes: 0 ok, 1 I/O or parse error, 2 validation or model condition,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .chain import (ChainModel, chain_put_price, discretize_speed_measure, generator_residuals,
                    hitting_convergence)
from .curves import ConvexCurve, PutCurveInput, read_quotes, validate_put_curve
from .duality import put_to_phi
from .errors import (CurveParseError, CurveStructureError, DegenerateCurveError, DomainError,
                     ForwardError, KStarInfiniteError, ModelError, NumericalError, PerpputError,
                     SmoothnessError)
from .extensions import call_to_psi, gbm_call, perpetual_call_price, recover_dividend
from .forward import VolCurve, fundamental_phi, perpetual_put_price
from .inverse import recover_volatility
from .scale import build_scale_system, build_speed_measure
from .simulate import martingale_diagnostic, mc_put_price, simulate_paths

log = logging.getLogger("perpput")

EXIT_OK, EXIT_IO, EXIT_MODEL, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "x0": None, "r": None, "grid_n": 2000, "paths": 0, "seed": 0, "horizon": None,
    "tol_abs": 1e-4, "tol_rel": 1e-4, "mode": "auto", "out_dir": None,
}
CONFIG_TYPES = {"x0": float, "r": float, "grid_n": int, "paths": int, "seed": int,
                "horizon": float, "tol_abs": float, "tol_rel": float, "mode": str, "out_dir": str}
MC_GRID_N = 100


class UsageError(PerpputError):
    """Missing or inconsistent command line settings."""


# ---------------------------------------------------------------------- configuration

def load_config(path: str | None) -> dict:
    """Read the [perpput] section of an INI file into typed values."""
    if path is None:
        return {}
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise CurveParseError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise CurveParseError(f"bad config {path}: {exc}") from exc
    if not cp.has_section("perpput"):
        return {}
    out = {}
    for key, value in cp.items("perpput"):
        if key not in CONFIG_TYPES:
            raise CurveParseError(f"unknown config key {key!r} in {path}")
        try:
            out[key] = CONFIG_TYPES[key](value)
        except ValueError:
            raise CurveParseError(f"config key {key!r}: bad value {value!r}") from None
    return out


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags (flags win)."""
    cfg = dict(DEFAULTS)
    cfg.update(load_config(getattr(args, "config", None)))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def config_hash(cfg: dict, extra: dict | None = None) -> str:
    # the output location does not change results, so it is left out
    data = {k: v for k, v in {**cfg, **(extra or {})}.items() if k != "out_dir"}
    blob = json.dumps(data, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join(missing))


# ---------------------------------------------------------------------- output helpers

@dataclass
class Writer:
    out_dir: Path | None
    header: list[str]

    def path(self, name: str) -> Path | None:
        if self.out_dir is None:
            return None
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def csv(self, name: str, columns, rows) -> None:
        p = self.path(name)
        fh = open(p, "w", newline="") if p is not None else sys.stdout
        try:
            for line in self.header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        finally:
            if p is not None:
                fh.close()

    def text(self, name: str, lines) -> None:
        body = "".join(f"# {h}\n" for h in self.header) + "".join(f"{l}\n" for l in lines)
        p = self.path(name)
        if p is None:
            sys.stdout.write(body)
        else:
            p.write_text(body)

    def json(self, name: str, obj) -> None:
        p = self.path(name)
        if p is not None:
            p.write_text(json.dumps({"meta": self.header, "data": obj}, indent=1, sort_keys=True,
                                    default=_json_default) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _json_default(o):
    if isinstance(o, np.ndarray):
        return [_json_default(v) if isinstance(v, float) and not math.isfinite(v) else v for v in o.tolist()]
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def _writer(cfg: dict, command: str, extra: dict | None = None) -> Writer:
    header = [f"perpput {__version__}", f"command: {command}", f"seed: {cfg['seed']}",
              f"config_hash: {config_hash(cfg, extra)}"]
    out = cfg.get("out_dir")
    return Writer(Path(out) if out else None, header)


# ---------------------------------------------------------------------- pipelines

@dataclass
class Inversion:
    mode: str
    curve: ConvexCurve
    quotes: PutCurveInput
    vol: VolCurve | None = None
    chain: ChainModel | None = None
    phi: ConvexCurve | None = None
    system: object = None
    speed: object = None


def _quotes(cfg: dict, path: str, interpolation: str) -> PutCurveInput:
    _need(cfg, "x0", "r")
    return PutCurveInput.from_csv(path, cfg["x0"], cfg["r"], interpolation)


def _check_valid(curve: ConvexCurve, x0: float, r: float) -> None:
    rep = validate_put_curve(curve, x0, r)
    if rep.degenerate:
        raise DegenerateCurveError(x0)
    if not rep.passed:
        raise CurveStructureError("input fails validation: " + "; ".join(rep.lines()[4:]))


def _chain_from_curve(curve: ConvexCurve, x0: float, r: float, n: int, extension: str):
    phi = put_to_phi(curve, x0)
    if extension == "auto":
        extension = "linear" if phi.linear[-1] else "power"
    system = build_scale_system(phi, x0, extension=extension)
    speed = build_speed_measure(system, r)
    chain = discretize_speed_measure(speed, system, n)
    return phi, system, speed, chain


def run_inversion(cfg: dict, path: str, interpolation: str | None = None,
                  extension: str = "auto") -> Inversion:
    mode = cfg["mode"]
    x0, r = cfg["x0"], cfg["r"]
    if mode not in ("auto", "regular", "irregular"):
        raise UsageError(f"unknown mode {mode!r}")
    if mode in ("auto", "regular"):
        q = _quotes(cfg, path, interpolation or "spline")
        try:
            curve = q.to_curve()
            _check_valid(curve, x0, r)
            vol = recover_volatility(curve, r, x0, rtol=cfg["tol_rel"])
            log.info("regular inversion: %d volatility samples", vol.x.size)
            return Inversion("regular", curve, q, vol=vol)
        except (SmoothnessError, CurveStructureError) as exc:
            if mode == "regular":
                raise
            log.info("auto mode: regular inversion not possible (%s); using irregular", exc)
    q = _quotes(cfg, path, interpolation or "linear")
    curve = q.to_curve()
    _check_valid(curve, x0, r)
    phi, system, speed, chain = _chain_from_curve(curve, x0, r, cfg["grid_n"], extension)
    return Inversion("irregular", curve, q, phi=phi, system=system, speed=speed, chain=chain)


def _model_chain(inv: Inversion, cfg: dict, n: int | None = None):
    if inv.chain is not None and n is None:
        return inv.chain
    _, _, _, chain = _chain_from_curve(inv.curve, cfg["x0"], cfg["r"], n or cfg["grid_n"], "auto")
    return chain


def _mc_chain(inv: Inversion, cfg: dict, chain: ChainModel | None = None) -> ChainModel:
    """Purely atomic chains are simulated as is; smooth ones on a coarse lattice."""
    chain = chain or _model_chain(inv, cfg)
    if math.isnan(chain.meta["delta"]):
        return chain
    return _model_chain(inv, cfg, MC_GRID_N)


def _provenance(exc: BaseException) -> str:
    """Innermost package module on the traceback."""
    mod, tb = "perpput", exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("perpput"):
            mod = name
        tb = tb.tb_next
    return mod


# ---------------------------------------------------------------------- commands

def cmd_validate(args, cfg) -> int:
    _need(cfg, "x0", "r")
    q = _quotes(cfg, args.input, args.interpolation or "linear")
    curve = q.to_curve()
    rep = validate_put_curve(curve, cfg["x0"], cfg["r"])
    lines = rep.lines()
    code = EXIT_OK
    if rep.degenerate:
        lines.append(str(DegenerateCurveError(cfg["x0"])))
        code = EXIT_MODEL
    elif math.isinf(rep.kstar):
        lines.append(str(KStarInfiniteError()))
        code = EXIT_MODEL
    elif not rep.passed:
        code = EXIT_MODEL
    _writer(cfg, "validate").text("report.txt", lines)
    return code


def _strike_list(args, default_hi: float) -> np.ndarray:
    if args.strikes:
        try:
            return np.array([float(s) for s in args.strikes.split(",")])
        except ValueError:
            raise CurveParseError(f"bad strike list {args.strikes!r}") from None
    hi = args.kmax if args.kmax is not None else default_hi
    return np.linspace(0.0, hi, args.n_strikes + 1)[1:]


def cmd_forward(args, cfg) -> int:
    _need(cfg, "x0", "r")
    if (args.sigma is None) == (args.vol is None):
        raise UsageError("give exactly one of --sigma or --vol")
    vol = VolCurve.constant(args.sigma) if args.sigma is not None else VolCurve.from_csv(args.vol)
    fs = fundamental_phi(vol, cfg["r"], cfg["x0"])
    k = _strike_list(args, 3.0 * cfg["x0"])
    prices = perpetual_put_price(fs, k)
    w = _writer(cfg, "forward", {"sigma": args.sigma, "vol": args.vol})
    w.csv("prices.csv", ["strike", "price"], zip(k, prices))
    log.info("K* = %r", fs.khat)
    return EXIT_OK


def cmd_invert(args, cfg) -> int:
    _need(cfg, "x0", "r")
    inv = run_inversion(cfg, args.input, args.interpolation, args.extension)
    w = _writer(cfg, "invert", {"input": Path(args.input).name})
    k = np.asarray(inv.quotes.strikes)
    p = np.asarray(inv.quotes.prices)
    lines = [f"mode: {inv.mode}"]
    if inv.mode == "regular":
        vol = inv.vol
        w.csv("sigma.csv", ["x", "sigma"], zip(vol.x, vol.sigma))
        fs = fundamental_phi(vol, cfg["r"], cfg["x0"])
        model = perpetual_put_price(fs, k)
        lines += [f"K*: {vol.meta['kstar']!r}", f"K_under: {vol.meta['k_under']!r}",
                  f"sigma above x0 (constant choice): {vol.meta['sigma_above']!r}",
                  f"sigma(x0-): {vol.meta['sigma_below_x0']!r}",
                  f"jump of sigma at x0: {vol.meta['jump_at_x0']!r}"]
        if args.dividend_sigma is not None:
            phi = put_to_phi(inv.curve, cfg["x0"])
            d = recover_dividend(phi, args.dividend_sigma, cfg["r"], x0=cfg["x0"], rtol=cfg["tol_rel"])
            w.csv("yield.csv", ["x", "q"], d.to_csv_rows())
            lines.append(f"convenience-yield points (q < 0): {int(np.sum(d.convenience))}")
    else:
        chain = inv.chain
        w.json("phi.json", inv.phi.to_dict())
        sysm = inv.system
        w.json("scale.json", {"s": sysm.s.to_dict(), "g": sysm.g.to_dict(), "f": sysm.f.to_dict(),
                              "x0": sysm.x0, "x_low": sysm.x_low, "s_low": sysm.s_low,
                              "s_high": sysm.s_high, "s_zero": sysm.s_zero, "s_inf": sysm.s_inf,
                              "gbar": sysm.gbar, "lower": sysm.lower, "upper": sysm.upper,
                              "extension": sysm.extension, "meta": sysm.meta})
        w.json("speed.json", inv.speed.to_dict(sysm))
        w.csv("chain.csv", ["scale", "price", "mass", "p_up", "hold", "kind"], chain.to_rows())
        model = np.array([chain_put_price(chain, K=float(K)) for K in k])
        lines += [f"boundaries: lower={sysm.lower} upper={sysm.upper} gbar={sysm.gbar!r}",
                  f"atoms (scale, mass, price): {list(inv.speed.atoms)}",
                  f"zero intervals: {list(inv.speed.zero_intervals)}",
                  f"chain states: {chain.n}"]
    err = np.abs(model - p)
    lines.append(f"round-trip max |model - input|: {float(err.max())!r}")
    w.text("summary.txt", lines)
    if cfg["out_dir"] is not None:
        for line in lines:
            print(line)
    return EXIT_OK


def _horizon(cfg: dict) -> float:
    return cfg["horizon"] if cfg["horizon"] is not None else 10.0 / cfg["r"]


def cmd_simulate(args, cfg) -> int:
    _need(cfg, "x0", "r")
    inv = run_inversion(cfg, args.input, args.interpolation, args.extension)
    n_paths = cfg["paths"] or 1000
    chain = _mc_chain(inv, cfg)
    T = _horizon(cfg)
    times = tuple(t for t in (0.5 / cfg["r"], 1.0 / cfg["r"], T) if t <= T)
    ens = simulate_paths(chain, cfg["r"], T, n_paths, cfg["seed"], observe=times,
                         record=not args.no_paths)
    w = _writer(cfg, "simulate", {"input": Path(args.input).name, "paths": n_paths})
    if not args.no_paths and w.out_dir is not None:
        ens.to_csv(w.path("paths.csv"), w.header)
    lines = [f"paths: {n_paths}", f"horizon: {T!r}", f"flags: {ens.flag_counts()}"]
    if chain.lower == "natural":
        lines.append(f"floor hitting discount: {chain.meta['floor_discount']!r}")
    for t in (0.0,) + times:
        m = martingale_diagnostic(ens, cfg["r"], cfg["x0"], t)
        lines.append(f"t={t!r} mean exp(-rt)X_t={m.mean!r} stderr={m.stderr!r} "
                     f"deviation={m.deviation:+.3f} stderr")
    w.text("diagnostics.txt", lines)
    return EXIT_OK


def cmd_roundtrip(args, cfg) -> int:
    _need(cfg, "x0", "r")
    inv = run_inversion(cfg, args.input, args.interpolation, args.extension)
    r, x0 = cfg["r"], cfg["x0"]
    exact_chain = _model_chain(inv, cfg)
    mc_chain = _mc_chain(inv, cfg, exact_chain)
    n_paths = cfg["paths"]
    T = _horizon(cfg)
    k = np.asarray(inv.quotes.strikes)
    p = np.asarray(inv.quotes.prices)
    rows = []
    for i, K in enumerate(k):
        model = chain_put_price(exact_chain, r, x0, float(K))
        if n_paths > 0:
            mc = mc_put_price(mc_chain, r, x0, float(K), n_paths, cfg["seed"] + i, horizon=T)
            rows.append((K, p[i], model, mc.estimate, mc.stderr, mc.exact))
        else:
            rows.append((K, p[i], model, "", "", ""))
    cols = ["strike", "input_price", "model_price", "mc_estimate", "mc_stderr", "mc_chain_exact"]
    w = _writer(cfg, "roundtrip", {"input": Path(args.input).name})
    w.csv("roundtrip.csv", cols, rows)
    err = float(max(abs(row[2] - row[1]) for row in rows))
    lines = [f"mode: {inv.mode}", f"chain states: {exact_chain.n}",
             f"max |model - input|: {err!r}",
             f"status: {'ok' if err <= cfg['tol_abs'] * x0 else 'exceeds tol_abs'}",
             f"max |generator residual| g: {float(np.max(np.abs(generator_residuals(exact_chain, 'g'))))!r}",
             f"max |generator residual| f: {float(np.max(np.abs(generator_residuals(exact_chain, 'f'))))!r}"]
    if exact_chain.lower == "natural":
        lines.append(f"floor hitting discount: {exact_chain.meta['floor_discount']!r}")
    if not math.isnan(exact_chain.meta["delta"]):
        lines.extend(_convergence_lines(inv, cfg))
    if n_paths > 0:
        z = [abs(row[3] - row[5]) / row[4] if row[4] else 0.0 for row in rows]
        lines.append(f"max MC deviation from chain value: {max(z):.3f} stderr")
        times = tuple(t for t in (0.25 / r, 0.5 / r, 1.0 / r) if t <= T)
        ens = simulate_paths(mc_chain, r, T, n_paths, cfg["seed"], observe=times, record=False)
        for t in times:
            m = martingale_diagnostic(ens, r, x0, t)
            lines.append(f"martingale t={t!r}: mean={m.mean!r} stderr={m.stderr!r} "
                         f"deviation={m.deviation:+.3f} stderr")
    w.text("roundtrip.txt", lines)
    if w.out_dir is not None:
        for line in lines:
            print(line)
    return EXIT_OK


def _convergence_lines(inv: Inversion, cfg: dict) -> list[str]:
    """Hitting transform of a price below x0 on refining lattices against the exact value."""
    x0 = cfg["x0"]
    _, system, speed, _ = _chain_from_curve(inv.curve, x0, cfg["r"], cfg["grid_n"], "auto")
    target = 0.5 * x0 if system.x_low < 0.5 * x0 else 0.5 * (system.x_low + x0)
    n = cfg["grid_n"]
    rows = hitting_convergence(speed, system, target, ns=(n // 8, n // 4, n // 2, n))
    out = [f"chain convergence: E[exp(-r H)] to price {target!r}, exact {float(system.phi(x0) / system.phi(target))!r}"]
    for i, (m, delta, v, err) in enumerate(rows):
        ratio = f" ratio={rows[i - 1][3] / err:.3f}" if i and err > 0 else ""
        out.append(f"  n={m} delta={delta:.6g} value={v!r} error={err:.3e}{ratio}")
    return out


def cmd_price_call(args, cfg) -> int:
    _need(cfg, "x0")
    x0 = cfg["x0"]
    w = _writer(cfg, "price-call", {"sigma": args.sigma, "q": args.q})
    if args.input:
        k, c = read_quotes(args.input)
        if k[0] > 0:
            k, c = [0.0] + k, [x0] + c
        C = ConvexCurve.from_points(k, c)
        psi = call_to_psi(C, x0)
        w.csv("psi.csv", ["x", "psi"], zip(psi.knots, psi.values))
        ks = _strike_list(args, float(k[-1]))
        prices = perpetual_call_price(psi, x0, ks)
    else:
        _need(cfg, "r")
        if args.sigma is None or args.q is None:
            raise UsageError("give --input, or both --sigma and --q")
        ks = _strike_list(args, 3.0 * x0)
        prices = gbm_call(args.sigma, cfg["r"], args.q, x0, ks)
    w.csv("calls.csv", ["strike", "price"], zip(np.atleast_1d(ks), np.atleast_1d(prices)))
    return EXIT_OK


# ---------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [perpput] section")
    common.add_argument("--x0", type=float, help="spot price")
    common.add_argument("--r", type=float, help="interest rate")
    common.add_argument("--out", dest="out_dir", help="output directory (default: stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--grid-n", dest="grid_n", type=int)
    common.add_argument("--tol-abs", dest="tol_abs", type=float)
    common.add_argument("--tol-rel", dest="tol_rel", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    quotes = argparse.ArgumentParser(add_help=False)
    quotes.add_argument("--input", required=True, help="CSV with header strike,price")
    quotes.add_argument("--interpolation", choices=("linear", "spline"))
    quotes.add_argument("--mode", choices=("auto", "regular", "irregular"))
    quotes.add_argument("--extension", choices=("auto", "power", "linear"), default="auto",
                        help="continuation of phi above x0 (irregular pipeline)")

    strikes = argparse.ArgumentParser(add_help=False)
    strikes.add_argument("--strikes", help="comma-separated strikes")
    strikes.add_argument("--kmax", type=float)
    strikes.add_argument("--n-strikes", type=int, default=50)

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--paths", type=int)
    mc.add_argument("--horizon", type=float)

    p = argparse.ArgumentParser(prog="perpput", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"perpput {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("validate", parents=[common, quotes], help="check a put quote file")
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("forward", parents=[common, strikes], help="price puts under a volatility")
    s.add_argument("--sigma", type=float, help="constant volatility")
    s.add_argument("--vol", help="CSV with header x,sigma")
    s.set_defaults(func=cmd_forward)
    s = sub.add_parser("invert", parents=[common, quotes], help="recover a model from put quotes")
    s.add_argument("--dividend-sigma", type=float, help="also recover q(x) under this volatility")
    s.set_defaults(func=cmd_invert)
    s = sub.add_parser("simulate", parents=[common, quotes, mc], help="simulate the recovered model")
    s.add_argument("--no-paths", action="store_true", help="skip the path CSV")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("roundtrip", parents=[common, quotes, mc], help="invert, price and simulate")
    s.set_defaults(func=cmd_roundtrip)
    s = sub.add_parser("price-call", parents=[common, strikes], help="perpetual call prices")
    s.add_argument("--input", help="call quotes CSV with header strike,price")
    s.add_argument("--sigma", type=float)
    s.add_argument("--q", type=float, help="dividend yield (closed form)")
    s.set_defaults(func=cmd_price_call)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        return args.func(args, cfg)
    except (CurveParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ForwardError, NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure in {_provenance(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PerpputError, ValueError) as exc:
        print(f"{type(exc).__name__} in {_provenance(exc)}: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``rbbchaos <command> [flags]``.

Exit codes: 0 on success, 1 when a flag or config value is invalid, 2 when a
numerical routine fails to converge or exceeds its truncation budget.
Values from ``--config`` (a JSON object keyed by long flag names) are
overridden by flags given on the command line.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Any, Callable

import numpy as np

from . import __version__, exact, io
from .acceptance import format_table, run_all
from .chaos import chaos_sweep
from .checks import convergence_to_equilibrium, exponential_moment_check, regime_demo
from .ensemble import balls_for_load, run_ensemble_rbb
from .pmf import Pmf, TruncationError
from .rng import RandomStream


class UsageError(Exception):
    """A command-line or config value failed validation."""

    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError("arguments", message)


# ---------------------------------------------------------------- flag specs

def _int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in str(text).replace(",", " ").split()]


FLAGS: dict[str, tuple[tuple[str, ...], dict]] = {
    "bins": (("--bins", "-L"), dict(type=int, help="number of bins")),
    "balls": (("--balls", "-N"), dict(type=int, help="number of balls")),
    "load": (("--load", "-r"), dict(type=float, help="balls per bin")),
    "rho": (("--rho",), dict(type=float, help="arrival rate")),
    "steps": (("--steps", "-T"), dict(type=int, help="time horizon")),
    "replicas": (("--replicas", "-R"), dict(type=int, help="independent replicas")),
    "seed": (("--seed",), dict(type=int, help="master seed")),
    "nmax": (("--nmax",), dict(type=int, help="truncation level")),
    "tol": (("--tol",), dict(type=float, help="numerical tolerance")),
    "delta": (("--delta",), dict(type=float, help="Chebyshev deviation")),
    "threads": (("--threads",), dict(type=int, help="worker threads (results do not depend on it)")),
    "zeta0": (("--zeta0",), dict(type=int, help="initial queue length")),
    "initializer": (("--initializer",), dict(help="multinomial, equal, poisson or explicit")),
    "initial": (("--initial",), dict(help="comma-separated occupancies or pmf masses")),
    "x": (("--x",), dict(type=_float_list, help="comma-separated evaluation points")),
}

# per command: default values for the flags it accepts (None = required or optional-without-default)
COMMANDS: dict[str, dict[str, Any]] = {
    "simulate-rbb": dict(bins=None, balls=None, load=None, steps=100, replicas=1, seed=0,
                         threads=1, initializer="multinomial", initial=None),
    "exact-stationary": dict(bins=None, balls=None, tol=1e-12),
    "md1-pmf": dict(rho=None, nmax=None, tol=1e-12),
    "md1-charfn": dict(rho=None, x=None),
    "nonlinear-evolve": dict(load=None, initial=None, steps=100, tol=1e-12),
    "chaos-sweep": dict(bins=[10, 100, 1000], load=0.5, steps=50, replicas=1000, seed=0,
                        delta=0.1, threads=1, initializer="multinomial"),
    "converge": dict(load=0.5, initial=None, steps=500, tol=1e-12),
    "drift-check": dict(rho=None, zeta0=0, steps=200),
    "regime-demo": dict(rho=None, steps=10_000, replicas=100, seed=0, zeta0=0, threads=1),
    "verify-all": dict(seed=42, threads=1),
}

COMMON = {"format": "csv", "output": None}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rbbchaos", description="Repeated balls-into-bins toolkit")
    parser.add_argument("--version", action="version", version=f"rbbchaos {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, params in COMMANDS.items():
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        for key in params:
            flags, kw = FLAGS[key]
            kw = dict(kw)
            if key == "bins" and name == "chaos-sweep":
                kw.update(type=int, nargs="+")
            p.add_argument(*flags, dest=key, **kw)
        p.add_argument("--format", choices=("csv", "json"), dest="format")
        p.add_argument("--output", "-o", dest="output", help="write here instead of stdout")
        p.add_argument("--config", dest="config", help="JSON file of flag values")
    return parser


def resolve(argv: list[str] | None) -> tuple[str, dict[str, Any]]:
    """Parse ``argv`` and merge defaults < config file < flags."""
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    config_path = ns.pop("config", None)
    from_file: dict[str, Any] = {}
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError("--config", str(exc)) from None
        if not isinstance(from_file, dict):
            raise UsageError("--config", "must hold a JSON object")
        from_file = {k.lstrip("-").replace("-", "_"): v for k, v in from_file.items()}
        allowed = set(COMMANDS[command]) | set(COMMON)
        unknown = sorted(set(from_file) - allowed)
        if unknown:
            raise UsageError("--config", f"keys not accepted by {command}: {', '.join(unknown)}")
    cfg = {**COMMON, **COMMANDS[command], **from_file, **ns}
    _validate(command, cfg)
    return command, cfg


# ---------------------------------------------------------------- validation

def _need(cfg, key):
    if cfg.get(key) is None:
        raise UsageError(FLAGS[key][0][0], "is required")
    return cfg[key]


def _check(ok: bool, key: str, message: str):
    if not ok:
        flag = FLAGS[key][0][0] if key in FLAGS else f"--{key}"
        raise UsageError(flag, message)


def _as_int(cfg, key):
    value = cfg.get(key)
    if value is None:
        return
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise UsageError(FLAGS[key][0][0], f"expected an integer, got {value!r}")
    cfg[key] = int(value)


def _as_float(cfg, key):
    value = cfg.get(key)
    if value is None:
        return
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise UsageError(FLAGS[key][0][0], f"expected a number, got {value!r}") from None
    _check(math.isfinite(value), key, "must be finite")
    cfg[key] = value


def _validate(command: str, cfg: dict) -> None:
    for key in ("balls", "steps", "replicas", "seed", "nmax", "threads", "zeta0"):
        _as_int(cfg, key)
    for key in ("load", "rho", "tol", "delta"):
        _as_float(cfg, key)
    if command == "chaos-sweep":
        bins = cfg["bins"]
        if isinstance(bins, (int, str)):
            bins = _int_list(str(bins))
        _check(len(bins) > 0 and all(int(b) >= 2 for b in bins), "bins", "need sizes >= 2")
        cfg["bins"] = [int(b) for b in bins]
    else:
        _as_int(cfg, "bins")
    if cfg.get("x") is not None and not isinstance(cfg["x"], list):
        cfg["x"] = _float_list(cfg["x"])

    _check(cfg["format"] in ("csv", "json"), "format", "must be csv or json")
    _check(cfg.get("steps") is None or cfg["steps"] >= 0, "steps", "must be >= 0")
    _check(cfg.get("replicas") is None or cfg["replicas"] >= 1, "replicas", "must be >= 1")
    _check(cfg.get("threads") is None or cfg["threads"] >= 1, "threads", "must be >= 1")
    _check(cfg.get("tol") is None or 0 < cfg["tol"] < 1, "tol", "must lie in (0, 1)")
    _check(cfg.get("delta") is None or cfg["delta"] > 0, "delta", "must be positive")
    _check(cfg.get("nmax") is None or cfg["nmax"] >= 0, "nmax", "must be >= 0")
    _check(cfg.get("zeta0") is None or cfg["zeta0"] >= 0, "zeta0", "must be >= 0")
    _check(cfg.get("load") is None or cfg["load"] >= 0, "load", "must be >= 0")
    _check(cfg.get("seed") is None or cfg["seed"] >= 0, "seed", "must be >= 0")

    if command in ("simulate-rbb", "exact-stationary"):
        if cfg.get("initial") is not None and command == "simulate-rbb":
            occ = _int_list(cfg["initial"]) if not isinstance(cfg["initial"], list) else cfg["initial"]
            _check(len(occ) > 0 and min(occ) >= 0, "initial", "occupancies must be nonnegative")
            cfg["initial"] = [int(v) for v in occ]
            cfg["bins"] = cfg.get("bins") or len(occ)
            _check(cfg["bins"] == len(occ), "bins", "disagrees with --initial")
            cfg["balls"] = sum(occ) if cfg.get("balls") is None else cfg["balls"]
            _check(cfg["balls"] == sum(occ), "balls", "disagrees with --initial")
        _check(_need(cfg, "bins") >= 1, "bins", "must be >= 1")
        if cfg.get("balls") is None and cfg.get("load") is not None:
            cfg["balls"] = balls_for_load(cfg["load"], cfg["bins"])
        _check(_need(cfg, "balls") >= 0, "balls", "must be >= 0")
        if command == "exact-stationary":
            _check(cfg["bins"] <= 10, "bins", "exact enumeration supports at most 10 bins")
            _check(exact.n_states(cfg["balls"], cfg["bins"]) <= 10**6, "balls",
                   "state space exceeds 10^6 configurations")
        if command == "simulate-rbb":
            _check(cfg["initializer"] in ("multinomial", "equal", "poisson"), "initializer",
                   "must be multinomial, equal or poisson")
    if command in ("md1-pmf", "md1-charfn"):
        rho = _need(cfg, "rho")
        _check(0 <= rho < 1, "rho", "stationary law exists only for rho in [0, 1)")
    if command == "md1-charfn":
        xs = _need(cfg, "x")
        _check(len(xs) > 0 and all(math.isfinite(v) for v in xs), "x", "need finite points")
    if command == "drift-check":
        _check(0 < _need(cfg, "rho") < 1, "rho", "must lie in (0, 1)")
    if command == "regime-demo":
        _check(_need(cfg, "rho") >= 0, "rho", "must be >= 0")
        _check(cfg["steps"] >= 1, "steps", "must be >= 1")
    if command in ("nonlinear-evolve", "converge"):
        if cfg.get("initial") is not None:
            masses = cfg["initial"]
            masses = _float_list(masses) if not isinstance(masses, list) else [float(m) for m in masses]
            _check(len(masses) > 0 and min(masses) >= 0 and sum(masses) > 0, "initial",
                   "masses must be nonnegative and not all zero")
            cfg["initial"] = masses
        elif command == "nonlinear-evolve":
            _check(cfg.get("load") is not None, "load", "give --load (Poisson start) or --initial")
    if command == "converge":
        _check(0 <= cfg["load"] < 1, "load", "convergence needs a load in [0, 1)")
        if cfg.get("initial") is not None:
            mean = Pmf.from_masses(cfg["initial"]).mean()
            _check(abs(mean - cfg["load"]) <= 1e-10, "initial",
                   f"mean {mean!r} differs from --load {cfg['load']!r}")
    if command == "chaos-sweep":
        _check(cfg["steps"] >= 0, "steps", "must be >= 0")
        _check(cfg["initializer"] in ("multinomial", "equal", "poisson"), "initializer",
               "must be multinomial, equal or poisson")


# ---------------------------------------------------------------- commands

Output = tuple[list[str], list[list[Any]], dict]  # csv header, csv rows, json payload


def _series(rows: list[tuple]) -> Output:
    header = ["t", "metric", "value", "stderr"]
    payload = {"series": [dict(zip(header, r)) for r in rows]}
    return header, [list(r) for r in rows], payload


def _initializer(kind: str, load: float) -> Any:
    if kind == "poisson":
        return {"kind": "iid", "poisson_mean": load}
    return kind


def cmd_simulate_rbb(cfg) -> Output:
    L, N, R = cfg["bins"], cfg["balls"], cfg["replicas"]
    init = ({"kind": "explicit", "occupancies": cfg["initial"]} if cfg.get("initial") is not None
            else _initializer(cfg["initializer"], N / L))
    res = run_ensemble_rbb(L, N, init, cfg["steps"], R, RandomStream(cfg["seed"]),
                           threads=cfg["threads"], track=min(L, 2))
    frac = res.occupied / L
    rows = []
    for st in res.stats:
        se = float(frac[:, st.t].std(ddof=1) / math.sqrt(R)) if R > 1 else None
        rows.append((st.t, "occupied_fraction", st.occupied_fraction, se))
        if L >= 2:
            p = st.pair_counts[1, 1] / R
            rows.append((st.t, "pair_positive", float(p), math.sqrt(p * (1 - p) / R) if R > 1 else None))
        q = 1 - st.marginal_counts[0] / R
        rows.append((st.t, "bin1_positive", float(q), math.sqrt(q * (1 - q) / R) if R > 1 else None))
    return _series(rows)


def cmd_exact_stationary(cfg) -> Output:
    chain = exact.build_chain(cfg["balls"], cfg["bins"])
    pi = exact.stationary_rbb(chain, tol=cfg["tol"])
    rows = [[io.state_key(s.as_tuple()), float(p)] for s, p in zip(chain.states, pi)]
    return ["state", "probability"], rows, {k: v for k, v in rows}


def cmd_md1_pmf(cfg) -> Output:
    pmf = exact.md1_stationary_pmf(cfg["rho"], cfg.get("nmax"), tol=cfg["tol"])
    rows = [[k, float(w)] for k, w in enumerate(pmf.weights)]
    return ["k", "probability"], rows, {"tail_bound": pmf.tail_bound,
                                        "pmf": [dict(k=k, probability=w) for k, w in rows]}


def cmd_md1_charfn(cfg) -> Output:
    rho = cfg["rho"]
    pmf = exact.md1_stationary_pmf(rho)
    rows = []
    for x in cfg["x"]:
        closed = exact.md1_char_fn(rho, x)
        rows.append([x, closed.real, closed.imag, abs(pmf.char_fn(x) - closed)])
    header = ["x", "re", "im", "pmf_discrepancy"]
    return header, rows, {"values": [dict(zip(header, r)) for r in rows]}


def _start_law(cfg) -> Pmf:
    if cfg.get("initial") is not None:
        return Pmf.from_masses(cfg["initial"])
    return Pmf.poisson(cfg["load"], tol=cfg["tol"])


def cmd_nonlinear_evolve(cfg) -> Output:
    laws = exact.nonlinear_pmf_evolve(_start_law(cfg), cfg["steps"], tol=cfg["tol"])
    rows = []
    for t, law in enumerate(laws):
        rows.append((t, "mean", law.mean(), None))
        rows.append((t, "prob_positive", law.prob_positive(), None))
        rows.append((t, "tail_bound", law.tail_bound, None))
    return _series(rows)


def cmd_converge(cfg) -> Output:
    r = cfg["load"]
    initial = Pmf.from_masses(cfg["initial"]) if cfg.get("initial") is not None \
        else Pmf.from_masses([1 - r, r])
    tv = convergence_to_equilibrium(r, initial, cfg["steps"])
    return _series([(t, "tv_to_equilibrium", d, None) for t, d in tv])


def cmd_chaos_sweep(cfg) -> Output:
    rep = chaos_sweep(cfg["bins"], cfg["load"], cfg["steps"], cfg["replicas"],
                      RandomStream(cfg["seed"]), delta=cfg["delta"],
                      initializer=_initializer(cfg["initializer"], cfg["load"]),
                      threads=cfg["threads"])
    rows = []
    for row in rep.rows():
        L = row["L"]
        rows.append((L, "gap", row["gap"], row["stderr"]))
        rows.append((L, "pair_prob", row["pair_prob"], None))
        rows.append((L, "rho_hat", row["rho_hat"], None))
        rows.append((L, "chebyshev_bound", row["bound"], None))
        rows.append((L, "marginal_tv", row["marginal_tv"], None))
    header = ["L", "metric", "value", "stderr"]
    payload = {"estimator": rep.estimator, "rows": rep.rows()}
    return header, [list(r) for r in rows], payload


def cmd_drift_check(cfg) -> Output:
    dc = exact.drift_constants(cfg["rho"])
    rows = []
    for row in exponential_moment_check(cfg["rho"], cfg["zeta0"], cfg["steps"]):
        rows.append((row.t, "moment", row.moment, None))
        rows.append((row.t, "bound", row.bound, None))
        rows.append((row.t, "envelope", row.envelope, None))
    header, body, payload = _series(rows)
    payload["constants"] = dict(lambda_star=dc.lambda_star, lambda_rho=dc.lambda_rho,
                                gamma=dc.gamma, C=dc.C, moment_constant=dc.moment_constant)
    return header, body, payload


def cmd_regime_demo(cfg) -> Output:
    s = regime_demo(cfg["rho"], cfg["steps"], cfg["replicas"], RandomStream(cfg["seed"]),
                    zeta0=cfg["zeta0"], threads=cfg["threads"])
    T = cfg["steps"]
    rows = [
        (T, "mean_final", s.mean_final, s.stderr_final if math.isfinite(s.stderr_final) else None),
        (T, "drift_prediction", s.drift_prediction, None),
        (T, "frac_zero", s.frac_zero, s.frac_zero_stderr),
    ]
    if s.pi0 is not None:
        rows.append((T, "pi0", s.pi0, None))
    rows.append((T, "max_state", s.excursions["max_state"], None))
    rows.append((T, "mean_return_time", s.excursions["mean_return_time"], None))
    header, body, payload = _series(rows)
    payload["verdict"] = s.verdict
    payload["excursions"] = s.excursions
    return header, body, payload


HANDLERS: dict[str, Callable[[dict], Output]] = {
    "simulate-rbb": cmd_simulate_rbb,
    "exact-stationary": cmd_exact_stationary,
    "md1-pmf": cmd_md1_pmf,
    "md1-charfn": cmd_md1_charfn,
    "nonlinear-evolve": cmd_nonlinear_evolve,
    "chaos-sweep": cmd_chaos_sweep,
    "converge": cmd_converge,
    "drift-check": cmd_drift_check,
    "regime-demo": cmd_regime_demo,
}


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _run(command: str, cfg: dict) -> int:
    if command == "verify-all":
        results = run_all(cfg["seed"], threads=cfg["threads"])
        table = format_table(results)
        if cfg["format"] == "json":
            meta = io.metadata(command, {k: v for k, v in cfg.items() if k != "output"})
            text = io.to_json(meta, {"criteria": [dict(number=r.number, name=r.name, passed=r.passed,
                                                       detail=r.detail) for r in results]})
            _emit(text, cfg["output"])
            if cfg["output"] is not None:
                print(table)
        else:
            print(table)
            if cfg["output"] is not None:
                _emit(table + "\n", cfg["output"])
        return 0 if all(r.passed for r in results) else 1

    header, rows, payload = HANDLERS[command](cfg)
    meta = io.metadata(command, {k: v for k, v in cfg.items() if k != "output"})
    text = io.to_csv(meta, header, rows) if cfg["format"] == "csv" else io.to_json(meta, payload)
    _emit(text, cfg["output"])
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        command, cfg = resolve(argv)
    except UsageError as exc:
        print(f"rbbchaos: error: {exc}", file=sys.stderr)
        return 1
    try:
        return _run(command, cfg)
    except exact.NonConvergenceError as exc:
        print(f"rbbchaos: numerical failure: {exc}; residual={exc.residual!r}", file=sys.stderr)
        return 2
    except TruncationError as exc:
        print(f"rbbchaos: numerical failure: {exc}; residual={exc.residual!r}", file=sys.stderr)
        return 2
    except (ValueError, exact.StateSpaceTooLarge) as exc:
        print(f"rbbchaos: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

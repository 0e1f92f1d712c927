"""Command-line front door: ``opphunt <command> [--config PATH] ...``.

Exit codes: 0 success, 2 validation failure, 3 refuted verdict.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from . import __version__
from ._kernels import derive_seed
from .engine import EngineError, GameParams, SimConfig, sample_play, simulate_batch
from .equilibrium import (DeviationFamily, EquilibriumError, best_markov_response,
                          extract_markov_eps_best_response, verify_mpe)
from .history import HistoryError, serialize, serialize_play, zeno_example_history
from .ordinal import parse as parse_ordinal
from .payoff import SCHEMA_VERSION, PayoffError, _jsonable, payoff_report
from .strategy import MarkovStrategy, Strategy, StrategyError, strategy_from_spec

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_REFUTED = 3

COMMANDS = ("simulate", "evaluate", "verify", "respond", "demo-zeno")
FORMATS = ("csv", "json")

_PARAM_ALIASES = {"lambda": "lam", "c": "cost", "v1": "v_finder", "v2": "v_other"}
_PARAM_FIELDS = ("r", "lam", "cost", "v_finder", "v_other", "cost1", "cost2")
_SIM_FIELDS = ("horizon", "budget", "replications", "master_seed", "cascade_steps", "workers")
_TOP_FIELDS = ("params", "strategies", "sim", "family", "epsilon", "format")
DEFAULT_STRATEGIES = {"player1": {"kind": "exponential", "mu": 1.0},
                      "player2": {"kind": "exponential", "mu": 1.0}}
DEFAULT_EPSILON = 1e-3


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the field or line."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(frozen=True)
class RunConfig:
    params: GameParams = field(default_factory=GameParams)
    strategies: Tuple[Dict[str, Any], Dict[str, Any]] = (DEFAULT_STRATEGIES["player1"],
                                                         DEFAULT_STRATEGIES["player2"])
    sim: SimConfig = field(default_factory=SimConfig)
    family: Optional[DeviationFamily] = None
    epsilon: float = DEFAULT_EPSILON
    format: str = "csv"

    def strategy(self, player: int) -> Strategy:
        return strategy_from_spec(self.strategies[player - 1])

    def deviation_family(self) -> DeviationFamily:
        return self.family or DeviationFamily.default(self.params.lam)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": asdict(self.params),
            "strategies": {"player1": self.strategies[0], "player2": self.strategies[1]},
            "sim": asdict(self.sim),
            "family": self.deviation_family().to_dict(),
            "epsilon": self.epsilon,
            "format": self.format,
        }

    def echo(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True)


def _number(where: str, v: Any, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        if isinstance(v, str) and v in ("inf", "Infinity"):
            return math.inf
        raise ConfigError(where, f"expected a number, got {v!r}")
    if integer:
        if float(v) != int(v):
            raise ConfigError(where, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _section(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected an object")
    return sec


def _params(sec: Dict[str, Any]) -> GameParams:
    vals: Dict[str, Any] = {}
    for key, v in sec.items():
        name = _PARAM_ALIASES.get(key, key)
        if name not in _PARAM_FIELDS:
            raise ConfigError(f"params.{key}", "unknown field")
        vals[name] = None if v is None and name in ("cost1", "cost2") else _number(f"params.{key}", v)
    checks = {"lam": lambda x: x > 0, "r": lambda x: x >= 0, "cost": lambda x: x >= 0,
              "cost1": lambda x: x is None or x >= 0, "cost2": lambda x: x is None or x >= 0}
    for name, ok in checks.items():
        if name in vals and not ok(vals[name]):
            key = next((k for k in sec if _PARAM_ALIASES.get(k, k) == name), name)
            raise ConfigError(f"params.{key}", f"invalid value {vals[name]!r}")
    try:
        return GameParams(**vals)
    except EngineError as exc:
        raise ConfigError("params", str(exc)) from exc


def _sim(sec: Dict[str, Any]) -> SimConfig:
    vals: Dict[str, Any] = {}
    for key, v in sec.items():
        if key not in _SIM_FIELDS:
            raise ConfigError(f"sim.{key}", "unknown field")
        if key == "cascade_steps" and v is None:
            vals[key] = None
            continue
        vals[key] = _number(f"sim.{key}", v, integer=key != "horizon")
    if "budget" in vals and vals["budget"] < 1:
        raise ConfigError("sim.budget", f"must be >= 1, got {vals['budget']}")
    try:
        return SimConfig(**vals)
    except EngineError as exc:
        raise ConfigError("sim", str(exc)) from exc


def _strategies(sec: Dict[str, Any]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    out = []
    for player in ("player1", "player2"):
        spec = sec.get(player, DEFAULT_STRATEGIES[player])
        if not isinstance(spec, dict):
            raise ConfigError(f"strategies.{player}", "expected an object")
        try:
            strategy_from_spec(spec)
        except (StrategyError, TypeError, ValueError) as exc:
            raise ConfigError(f"strategies.{player}", str(exc)) from exc
        out.append(spec)
    extra = set(sec) - {"player1", "player2"}
    if extra:
        raise ConfigError(f"strategies.{sorted(extra)[0]}", "unknown field")
    return out[0], out[1]


def _family(raw: Any, lam: float) -> Optional[DeviationFamily]:
    if raw is None or raw == "default":
        return None
    if not isinstance(raw, dict):
        raise ConfigError("family", "expected an object or \"default\"")
    base = DeviationFamily.default(lam).to_dict()
    unknown = set(raw) - set(base)
    if unknown:
        raise ConfigError(f"family.{sorted(unknown)[0]}", "unknown field")
    base.update(raw)
    try:
        return DeviationFamily(tuple(base["deterministic_grid"]), tuple(base["exponential_grid"]),
                               bool(base["include_never"]), tuple(tuple(x) for x in base["mixture_grid"]),
                               bool(base["refine"]))
    except (EquilibriumError, TypeError, ValueError) as exc:
        raise ConfigError("family", str(exc)) from exc


def config_from_dict(raw: Dict[str, Any]) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be an object")
    unknown = set(raw) - set(_TOP_FIELDS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    params = _params(_section(raw, "params"))
    strategies = _strategies(_section(raw, "strategies"))
    sim = _sim(_section(raw, "sim"))
    family = _family(raw.get("family"), params.lam)
    eps = _number("epsilon", raw.get("epsilon", DEFAULT_EPSILON))
    if not eps > 0:
        raise ConfigError("epsilon", f"must be > 0, got {eps}")
    fmt = raw.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError("format", f"expected one of {FORMATS}, got {fmt!r}")
    return RunConfig(params, strategies, sim, family, eps, fmt)


def load_config(path: Optional[str]) -> RunConfig:
    """Read a JSON config; missing sections take documented defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    return config_from_dict(raw)


# --------------------------------------------------------------------------
# commands


def _markov(cfg: RunConfig, player: int) -> MarkovStrategy:
    s = cfg.strategy(player)
    if not isinstance(s, MarkovStrategy):
        raise ConfigError(f"strategies.player{player}", f"command needs a Markov strategy, got {s.kind!r}")
    return s


def _emit(payload: Dict[str, Any], cfg: RunConfig) -> str:
    return json.dumps(_jsonable(dict(payload, config=cfg.to_dict())), indent=2, sort_keys=True) + "\n"


def _csv(header: Sequence[str], rows: List[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _spec_text(s: Strategy) -> str:
    return json.dumps(s.spec(), sort_keys=True)


def cmd_simulate(cfg: RunConfig, traces: Optional[str] = None) -> Tuple[int, str]:
    s1, s2 = cfg.strategy(1), cfg.strategy(2)
    stats = simulate_batch(s1, s2, cfg.params, cfg.sim)
    if traces:
        with open(traces, "w", encoding="utf-8") as fh:
            for i in range(min(10, cfg.sim.replications)):
                res = sample_play(s1, s2, cfg.params, cfg.sim, derive_seed(cfg.sim.master_seed, i))
                fh.write(serialize_play(res.play) + "\n")
    if cfg.format == "json":
        return EXIT_OK, _emit({"schema_version": SCHEMA_VERSION, "stats": stats.as_dict()}, cfg)
    return EXIT_OK, stats.CSV_HEADER + "\n" + stats.csv_row() + "\n"


REPORT_COLUMNS = ("player", "u_tilde", "p_tilde", "q_factor", "lambda_ratio", "fixed_point_value",
                  "method", "est_abs_error")


def cmd_evaluate(cfg: RunConfig) -> Tuple[int, str]:
    f1, f2 = _markov(cfg, 1).dist, _markov(cfg, 2).dist
    reps = [payoff_report(f1, f2, cfg.params, player=p) for p in (1, 2)]
    if cfg.format == "json":
        return EXIT_OK, _emit({"schema_version": SCHEMA_VERSION,
                               "players": [dict(asdict(r), player=i + 1) for i, r in enumerate(reps)]}, cfg)
    rows = [[i + 1] + [getattr(r, c) for c in REPORT_COLUMNS[1:]] for i, r in enumerate(reps)]
    return EXIT_OK, _csv(REPORT_COLUMNS, rows)


def cmd_verify(cfg: RunConfig) -> Tuple[int, str]:
    f1, f2 = _markov(cfg, 1).dist, _markov(cfg, 2).dist
    rep = verify_mpe(f1, f2, cfg.deviation_family(), cfg.params, cfg.epsilon)
    code = EXIT_OK if rep.confirmed else EXIT_REFUTED
    if cfg.format == "json":
        return code, _emit(rep.to_dict(), cfg)
    rows = [[i + 1, rep.candidate_values[i], _spec_text(d.strategy),
             d.value, d.gap, rep.verdict] for i, d in enumerate(rep.best_deviations)]
    return code, _csv(("player", "candidate_value", "best_deviation", "deviation_value", "gap", "verdict"), rows)


def cmd_respond(cfg: RunConfig) -> Tuple[int, str]:
    s1, f2 = cfg.strategy(1), _markov(cfg, 2).dist
    best, best_v = best_markov_response(f2, cfg.deviation_family(), cfg.params)
    ex = extract_markov_eps_best_response(s1, f2, cfg.params, cfg.sim)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "best_response": {"strategy": best.spec(), "value": best_v},
        "extraction": {"strategy": ex.strategy.spec(), "value": ex.value, "max_lambda": ex.max_lambda,
                       "h0": serialize(ex.h0), "histories_examined": ex.histories},
    }
    if cfg.format == "json":
        return EXIT_OK, _emit(payload, cfg)
    rows = [["best_response", _spec_text(best), best_v, ""],
            ["extraction", _spec_text(ex.strategy), ex.value, ex.max_lambda]]
    return EXIT_OK, _csv(("source", "strategy", "value", "max_lambda"), rows)


ZENO_TABLE_INDICES = ("1", "2", "3", "w", "w+1", "w+2", "w*2")
ZENO_PARTIAL_COUNTS = (10, 100, 1000, 10000)


def zeno_diagnosis(params: GameParams) -> Dict[str, Any]:
    """Partial sums of c*exp(-r*u_k) over the first cascade of the demo schedule.

    Terms tend to c*exp(-r*1) > 0, so the series diverges whenever c > 0.
    """
    from .history import FORMULAS
    form = FORMULAS["harmonic"]
    p = {"base": 0.0, "span": 1.0, "shift": 0.0}
    c, r = params.cost_of(1), params.r
    partial, total, n = [], [], 0
    acc = []
    for target in ZENO_PARTIAL_COUNTS:
        while n < target:
            n += 1
            acc.append(c * math.exp(-r * form.time(p, n)))
        partial.append({"terms": target, "sum": math.fsum(acc), "last_term": acc[-1]})
    limit_term = c * math.exp(-r * form.supremum(p))
    divergent = limit_term > 0
    return {"cost": c, "r": r, "partial_sums": partial, "term_limit": limit_term,
            "expected_cost": "divergent" if divergent else "finite"}


def cmd_demo_zeno(cfg: RunConfig) -> Tuple[int, str]:
    h = zeno_example_history()
    diag = zeno_diagnosis(cfg.params)
    times = [(a, h.time_at(parse_ordinal(a))) for a in ZENO_TABLE_INDICES]
    limits = [str(a) for a in h.limit_indices()]
    if cfg.format == "json":
        return EXIT_OK, _emit({"schema_version": SCHEMA_VERSION, "history": serialize(h),
                               "times": dict(times), "limit_indices": limits, "diagnosis": diag}, cfg)
    lines = [serialize(h).rstrip("\n"), "", "index,time"]
    lines += [f"{a},{t!r}" for a, t in times]
    lines += ["", "limit_indices," + ";".join(limits), "", "terms,partial_cost_sum,last_term"]
    lines += [f"{d['terms']},{d['sum']!r},{d['last_term']!r}" for d in diag["partial_sums"]]
    lines += ["", f"term_limit,{diag['term_limit']!r}", f"expected_cost,{diag['expected_cost']}"]
    return EXIT_OK, "\n".join(lines) + "\n"


def run_command(command: str, cfg: RunConfig, traces: Optional[str] = None) -> Tuple[int, str]:
    if command == "simulate":
        return cmd_simulate(cfg, traces)
    if command == "evaluate":
        return cmd_evaluate(cfg)
    if command == "verify":
        return cmd_verify(cfg)
    if command == "respond":
        return cmd_respond(cfg)
    if command == "demo-zeno":
        return cmd_demo_zeno(cfg)
    raise ConfigError("command", f"unknown command {command!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opphunt", description="Opportunity-hunting game toolkit.")
    ap.add_argument("--version", action="version", version=f"opphunt {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="override sim.master_seed")
    ap.add_argument("--replications", type=int, help="override sim.replications")
    ap.add_argument("--out", help="write the primary artifact here instead of stdout")
    ap.add_argument("--format", choices=FORMATS, help="override output format")
    ap.add_argument("--traces", help="simulate: also write the first 10 serialized plays here")
    ap.add_argument("--quiet", action="store_true", help="do not echo the effective config to stderr")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        sim = cfg.sim
        if args.seed is not None:
            sim = replace(sim, master_seed=args.seed)
        if args.replications is not None:
            if args.replications < 1:
                raise ConfigError("--replications", "must be >= 1")
            sim = replace(sim, replications=args.replications)
        cfg = replace(cfg, sim=sim, format=args.format or cfg.format)
        if not args.quiet:
            print("# effective config: " + cfg.echo(), file=sys.stderr)
        code, text = run_command(args.command, cfg, args.traces)
    except (ConfigError, EngineError, StrategyError, HistoryError, EquilibriumError) as exc:
        print(f"opphunt: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PayoffError as exc:
        print(f"opphunt: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())

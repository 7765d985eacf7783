"""Experiment runner: config parsing, dispatch, and JSON/CSV reports.

Config files are flat ``key = value`` lines; ``#`` starts a comment.  Exit
codes: 0 when every applicable bound passes, 1 when one fails, 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import attack, commitment, moments, prs
from .gap import GapReport
from .qmath import (
    ConfigurationError,
    NumericError,
    cap_qubits,
    haar_vector,
    read_dump,
    trace_norm,
    write_dump,
)

EXIT_OK = 0
EXIT_BOUND_FAILED = 1
EXIT_CONFIG = 2

INT_KEYS = ("m", "n", "s", "r", "c", "ell", "t", "lambda", "d", "samples", "seed", "trials",
            "bit", "order_seed")
STR_KEYS = ("experiment", "mode", "strategy", "dump")
KNOWN_KEYS = set(INT_KEYS) | set(STR_KEYS)

# per-experiment defaults; the key set is also the echo set
EXPERIMENTS: dict[str, dict[str, Any]] = {
    "moments": {"d": 4, "r": 2, "samples": 100_000},
    "harrow": {"d": 4, "r": 2, "mode": "exact", "samples": 100_000},
    "prs-gap": {"m": 4, "s": None, "r": 1, "mode": "exact", "samples": 10_000},
    "stretch": {"m": 4, "r": 2, "mode": "exact", "samples": 10_000},
    "split": {"m": 4, "r": 1, "samples": 10_000},
    "blocknorm": {"m": 2, "trials": 1000},
    "commit-hiding": {"lambda": 4, "s": 2, "t": 1, "c": 1},
    "commit-binding": {"lambda": 2, "s": 1, "c": 1, "strategy": "honest-flip"},
    "commit-extractor": {"lambda": 2, "s": 1, "c": 1, "strategy": "honest", "bit": 0},
    "attack": {"m": 3, "n": 2, "c": 2, "ell": 8, "trials": 200, "order_seed": 0},
    "concentration": {"d": 16, "m": 8, "samples": 100_000},
}


@dataclass
class ExperimentReport:
    experiment_id: str
    config_echo: dict[str, Any]
    seeds: list[int]
    metrics: dict[str, tuple[float, float | None]] = field(default_factory=dict)
    bounds: dict[str, tuple[float, bool, bool | None]] = field(default_factory=dict)
    wall_time_ms: int = 0
    artifact_paths: list[str] = field(default_factory=list)

    def add_metric(self, name: str, value, stderr=None) -> None:
        self.metrics[name] = (float(value), None if stderr is None else float(stderr))

    def add_bound(self, name: str, value, applicable: bool, passed: bool) -> None:
        applicable = bool(applicable)
        self.bounds[name] = (float(value), applicable, bool(passed) if applicable else None)

    def add_gap(self, prefix: str, gap: GapReport) -> None:
        self.add_metric(f"{prefix}distance", gap.lhs_distance, gap.mc_error)
        self.add_bound(gap.bound_id, gap.bound_value, gap.applicable, gap.passed)

    @property
    def exit_code(self) -> int:
        failed = any(app and not ok for _, app, ok in self.bounds.values())
        return EXIT_BOUND_FAILED if failed else EXIT_OK

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "config_echo": dict(self.config_echo),
            "seeds": list(self.seeds),
            "metrics": {k: {"value": v, "stderr": e} for k, (v, e) in self.metrics.items()},
            "bounds": {k: {"value": v, "applicable": a, "pass": p}
                       for k, (v, a, p) in self.bounds.items()},
            "wall_time_ms": self.wall_time_ms,
            "artifact_paths": list(self.artifact_paths),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(
            experiment_id=data["experiment_id"],
            config_echo=dict(data["config_echo"]),
            seeds=list(data["seeds"]),
            metrics={k: (v["value"], v["stderr"]) for k, v in data["metrics"].items()},
            bounds={k: (v["value"], v["applicable"], v["pass"]) for k, v in data["bounds"].items()},
            wall_time_ms=data["wall_time_ms"],
            artifact_paths=list(data["artifact_paths"]),
        )

    def metrics_json(self) -> str:
        """Canonical serialization of everything except timing (determinism checks)."""
        d = self.to_dict()
        d.pop("wall_time_ms")
        return json.dumps(d, sort_keys=True)


# ---------------------------------------------------------------------------
# Config


def _coerce(key: str, raw) -> Any:
    if key not in KNOWN_KEYS:
        raise ConfigurationError(f"unknown config key {key!r}; known keys: {sorted(KNOWN_KEYS)}")
    if raw is None:
        return None
    if key in STR_KEYS:
        return str(raw)
    if key == "s" and str(raw).strip().lower() == "asymptotic":
        return "asymptotic"
    if isinstance(raw, bool):
        raise ConfigurationError(f"{key} must be an integer, got {raw!r}")
    if isinstance(raw, (int, np.integer)):
        return int(raw)
    try:
        return int(str(raw).strip())
    except ValueError:
        raise ConfigurationError(f"{key} must be an integer, got {raw!r}")


def read_config_text(text: str) -> dict[str, Any]:
    """Key/value pairs of a config file, type-coerced but not default-resolved."""
    raw: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        value = value.strip().strip('"').strip("'")
        if key in raw:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = _coerce(key, value)
    return raw


def parse_config_text(text: str) -> dict[str, Any]:
    return resolve_config(read_config_text(text))


def _read_file(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    return p.read_text()


def parse_config(path) -> dict[str, Any]:
    """Read, validate and default-resolve a config file."""
    return parse_config_text(_read_file(path))


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigurationError(msg)


def _cap_check(qubits: float, what: str) -> None:
    cap = cap_qubits()
    _need(qubits <= cap, f"{what} needs {qubits:g} qubits, above the cap of {cap} qubits "
                         f"(override with CHRS_CAP_QUBITS)")


def resolve_config(raw: dict[str, Any]) -> dict[str, Any]:
    """Fill experiment defaults, resolve derived values and pre-check caps."""
    raw = {k: _coerce(k, v) for k, v in raw.items()}
    exp = raw.get("experiment")
    _need(exp in EXPERIMENTS, f"experiment must be one of {sorted(EXPERIMENTS)}, got {exp!r}")
    cfg: dict[str, Any] = {"experiment": exp}
    for key, default in EXPERIMENTS[exp].items():
        cfg[key] = raw.get(key, default)
    cfg["seed"] = raw.get("seed", 0)
    if raw.get("dump") is not None:
        cfg["dump"] = raw["dump"]
    if "mode" in cfg:
        cfg["mode"] = moments.normalize_mode(cfg["mode"])

    if exp == "prs-gap":
        if cfg["s"] == "asymptotic":
            cfg["s"] = prs.asymptotic_pad_width(cfg["m"])
        elif cfg["s"] is None:
            n = raw.get("n")
            cfg["s"] = n // 2 if n is not None else cfg["m"] // 2
    for key in ("m", "r", "d", "c", "ell", "trials", "lambda"):
        if key in cfg:
            _need(cfg[key] >= 1, f"{key} must be >= 1, got {cfg[key]}")
    if "samples" in cfg:
        _need(cfg["samples"] >= 2, f"samples must be >= 2, got {cfg['samples']}")

    if exp in ("moments", "harrow"):
        dim = cfg["d"] if exp == "moments" else cfg["d"] ** 2
        _cap_check(cfg["r"] * math.log2(dim), f"{exp} at d={cfg['d']}, r={cfg['r']}")
    elif exp in ("prs-gap", "stretch", "split"):
        _cap_check(cfg["m"] * cfg["r"], f"{exp} at m={cfg['m']}, r={cfg['r']} (m*r)")
        if exp == "prs-gap":
            _need(0 <= cfg["s"] <= cfg["m"], f"s must lie in [0, m], got s={cfg['s']}")
        if exp == "stretch":
            _need(cfg["m"] >= 2, "stretch needs m >= 2")
    elif exp == "blocknorm":
        _cap_check(cfg["m"], "blocknorm")
    elif exp.startswith("commit-"):
        lam = cfg["lambda"]
        if exp == "commit-hiding":
            _need(0 <= cfg["s"] <= lam, f"hiding needs 0 <= s <= lambda, got s={cfg['s']}")
            _cap_check(lam * (cfg["t"] + 1), f"hiding term at lambda={lam}, t={cfg['t']}")
        else:
            _need(0 <= 2 * cfg["s"] <= lam, f"commitment needs 0 <= 2s <= lambda, got s={cfg['s']}")
            cap = commitment.statevector_cap_qubits()
            _need(4 * lam * cfg["c"] <= cap,
                  f"reveal simulation needs {4 * lam * cfg['c']} qubits, above the cap of {cap}")
        if exp == "commit-extractor":
            _need(cfg["bit"] in (0, 1), f"bit must be 0 or 1, got {cfg['bit']}")
    elif exp == "attack":
        _cap_check(2 * cfg["m"] * cfg["c"], f"attack at m={cfg['m']}, c={cfg['c']} (2*m*c)")
        _need(0 <= cfg["n"] <= attack.MAX_KEY_BITS and cfg["n"] // 2 <= cfg["m"],
              f"attack needs 0 <= n <= {attack.MAX_KEY_BITS} and n/2 <= m")
    return cfg


def format_config(cfg: dict[str, Any]) -> str:
    """Flat text form of a resolved config; parses back to the same dict."""
    return "".join(f"{k} = {v}\n" for k, v in cfg.items() if v is not None)


# ---------------------------------------------------------------------------
# Experiments


def _dump(cfg, report: ExperimentReport, data) -> None:
    path = cfg.get("dump")
    if path:
        write_dump(path, data)
        report.artifact_paths.append(str(path))


def _run_moments(cfg, report, workers):
    d, r = cfg["d"], cfg["r"]
    avg = moments.mc_average(moments.haar_copies_sampler(d, r), cfg["samples"], cfg["seed"],
                             workers=workers)
    exact = moments.haar_moment_array(d, r)
    dist = trace_norm(np.asarray(avg.mean) - exact)
    report.add_metric("mc_distance", dist, avg.bootstrap_distance_error())
    report.add_metric("entrywise_stderr", avg.entrywise_stderr)
    report.add_bound("mc-tolerance", 0.05, True, dist <= 0.05)
    _dump(cfg, report, np.asarray(avg.mean))


def _run_harrow(cfg, report, workers):
    gap = moments.harrow_gap(cfg["d"], cfg["r"], cfg["mode"], cfg["samples"], cfg["seed"],
                             workers=workers)
    report.add_gap("", gap)
    if cfg.get("dump"):
        _dump(cfg, report, np.asarray(moments.phi_u_moment(cfg["d"], cfg["r"], cfg["mode"],
                                                           cfg["samples"], cfg["seed"])))


def _run_prs_gap(cfg, report, workers):
    spec = moments.EnsembleSpec(cfg["m"], 2 * cfg["s"], cfg["r"], cfg["mode"], cfg["samples"],
                                cfg["seed"])
    report.add_gap("", prs.prs_gap(spec, workers=workers))
    if cfg.get("dump"):
        _dump(cfg, report, np.asarray(prs.prs_ensemble_state(spec)))


def _run_stretch(cfg, report, workers):
    gap = prs.stretch_check(cfg["m"], cfg["r"], mode=cfg["mode"], samples=cfg["samples"],
                            seed=cfg["seed"], workers=workers)
    report.add_gap("", gap)
    report.add_metric("rhs_gap", gap.details["rhs_gap"])
    report.add_metric("margin", gap.margin)


def _run_split(cfg, report, workers):
    m, r = cfg["m"], cfg["r"]
    mean, gap = prs.half_split_moment(m, r, cfg["samples"], cfg["seed"], workers=workers)
    report.add_gap("split_moment_", gap)
    vals = prs.split_deviation_values(m, cfg["samples"], cfg["seed"])
    dev = float(np.mean(vals))
    report.add_metric("split_deviation", dev, float(np.std(vals, ddof=1) / np.sqrt(len(vals))))
    bound = prs.split_deviation_bound(m)
    report.add_bound("split-deviation-bound", bound, bound <= 2, dev <= bound)
    _dump(cfg, report, np.asarray(mean))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2


def _run_blocknorm(cfg, report, workers):
    dim = 2 ** cfg["m"]
    hyp = counter = 0
    worst = 0.0
    last = None
    for i in range(cfg["trials"]):
        a = random_hermitian(dim, moments.sample_rng(cfg["seed"], i, "blocknorm"))
        eps = max(prs.block_norms(a).values()) * (1 + 1e-9)
        h, concl = prs.block_norm_check(a, eps)
        hyp += h
        counter += h and not concl
        worst = max(worst, trace_norm(a) / eps)
        last = a
    report.add_metric("hypothesis_held", hyp)
    report.add_metric("counterexamples", counter)
    report.add_metric("max_norm_ratio", worst)
    report.add_bound("block-norm", 10.0, True, counter == 0 and worst < 10.0)
    _dump(cfg, report, last)


def _commit_params(cfg):
    return commitment.CommitmentParams(cfg["lambda"], cfg["s"], cfg["c"], cfg.get("t", 0))


def _strategy(cfg, instance):
    name = cfg["strategy"]
    if name.startswith("dump:"):
        return commitment.make_strategy(read_dump(name[5:]), instance, cfg.get("bit", 0))
    return commitment.make_strategy(name, instance, cfg.get("bit", 0))


def _run_commit_hiding(cfg, report, workers):
    params = _commit_params(cfg)
    gap = commitment.hiding_gap(params, commit_copies=cfg["c"], seed_set=[cfg["seed"]])
    report.add_gap("", gap)
    report.add_metric("per_copy_distance", gap.details["per_copy"])
    if cfg.get("dump"):
        inst = commitment.build_commit_states(params, cfg["seed"])
        _dump(cfg, report, np.asarray(inst.rho_0))


def _run_commit_binding(cfg, report, workers):
    params = _commit_params(cfg)
    inst = commitment.build_commit_states(params, cfg["seed"])
    strat = _strategy(cfg, inst)
    p0, p1, slack = commitment.binding_sum(strat, params, cfg["seed"])
    report.add_metric("p0", p0)
    report.add_metric("p1", p1)
    report.add_metric("slack", slack)
    report.add_metric("commit_overlap", inst.overlap())
    report.add_bound("slack-at-most-one", 1.0, True, slack <= 1.0 + 1e-9)
    _dump(cfg, report, strat.state)


def _run_commit_extractor(cfg, report, workers):
    params = _commit_params(cfg)
    inst = commitment.build_commit_states(params, cfg["seed"])
    strat = _strategy(cfg, inst)
    res = commitment.real_ideal_gap(strat, params, instance=inst, bit=cfg["bit"])
    ext = commitment.build_extractor(params, inst)
    eps = max(0.0, 1.0 - trace_norm(np.asarray(inst.rho_0) - np.asarray(inst.rho_1)))
    bound = 2 ** (-params.copies / 3) + math.sqrt(2 * eps)
    report.add_metric("real_ideal_gap", res.gap)
    report.add_metric("fail_probability", res.fail_probability)
    report.add_metric("accept_real", res.accept_real)
    report.add_metric("accept_ideal", res.accept_ideal)
    report.add_metric("rank_rho0", ext.rank0)
    report.add_bound("extractor-fail-bound", bound, bound <= 1.0, res.fail_probability <= bound)
    _dump(cfg, report, ext.pi0)


def _run_attack(cfg, report, workers):
    conf = attack.AttackConfig(cfg["m"], cfg["n"], cfg["c"], cfg["ell"], cfg["order_seed"],
                               cfg["trials"])
    rep = attack.run_attack(conf, cfg["seed"], workers=workers)
    for name, (value, err) in rep.metrics().items():
        report.add_metric(name, value, err)
    report.add_bound("or-case1-floor", rep.case1_floor, True,
                     rep.accept_rate_pseudorandom >= rep.case1_floor)
    report.add_bound("or-case2-ceiling", rep.case2_ceiling, rep.case2_applicable,
                     rep.accept_rate_haar <= rep.case2_ceiling)
    report.add_bound("attack-separation", 0.0, True,
                     rep.accept_rate_pseudorandom >= rep.accept_rate_haar - 1e-12)
    if cfg.get("dump"):
        _dump(cfg, report, rep.per_trial_pseudorandom - rep.per_trial_haar)


def _run_concentration(cfg, report, workers):
    d, m, n, seed = cfg["d"], cfg["m"], cfg["samples"], cfg["seed"]
    frac, se = attack.haar_overlap_tail_stats(d, n, seed)
    analytic = 0.5 ** (d - 1)
    report.add_metric("overlap_tail", frac, se)
    report.add_metric("overlap_tail_analytic", analytic)
    sigma = math.sqrt(analytic * (1 - analytic) / n)
    report.add_bound("overlap-tail-analytic", analytic, True, abs(frac - analytic) <= 3 * sigma)
    env = attack.overlap_tail_bound(d)
    report.add_bound("overlap-tail", env, env < 1.0, frac <= env)
    tail, bound = attack.levy_concentration_probe(m, n, seed)
    report.add_metric("levy_tail", tail)
    report.add_bound("levy", bound, bound < 1.0, tail <= bound)
    if cfg.get("dump"):
        _dump(cfg, report, haar_vector(d, seed))


_RUNNERS = {
    "moments": _run_moments,
    "harrow": _run_harrow,
    "prs-gap": _run_prs_gap,
    "stretch": _run_stretch,
    "split": _run_split,
    "blocknorm": _run_blocknorm,
    "commit-hiding": _run_commit_hiding,
    "commit-binding": _run_commit_binding,
    "commit-extractor": _run_commit_extractor,
    "attack": _run_attack,
    "concentration": _run_concentration,
}


def run_experiment(config: dict[str, Any], workers: int | None = None) -> ExperimentReport:
    """Run a resolved config; every random draw derives from ``config['seed']``."""
    cfg = resolve_config(config)
    report = ExperimentReport(experiment_id=cfg["experiment"], config_echo=dict(cfg),
                              seeds=[cfg["seed"]])
    start = time.perf_counter()
    _RUNNERS[cfg["experiment"]](cfg, report, workers)
    report.wall_time_ms = int(round((time.perf_counter() - start) * 1000))
    return report


CSV_COLUMNS = ("experiment_id", "name", "value", "stderr", "bound", "applicable", "pass")


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for name, (value, err) in report.metrics.items():
        writer.writerow([report.experiment_id, name, repr(value), "" if err is None else repr(err),
                         "", "", ""])
    for name, (value, app, ok) in report.bounds.items():
        writer.writerow([report.experiment_id, name, "", "", repr(value), str(app).lower(),
                         "" if ok is None else str(ok).lower()])
    return buf.getvalue()


def write_report(report: ExperimentReport, out_path, formats=("json",)) -> list[Path]:
    """Write ``out_path`` as JSON and/or CSV (CSV gets a ``.csv`` suffix if both)."""
    out = Path(out_path)
    written = []
    formats = tuple(formats)
    unknown = set(formats) - {"json", "csv"}
    if unknown:
        raise ConfigurationError(f"unknown report formats {sorted(unknown)}")
    if "json" in formats:
        out.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        written.append(out)
    if "csv" in formats:
        path = out if formats == ("csv",) else out.with_suffix(".csv")
        path.write_text(report_csv(report))
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Command line


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chrs", description="Numerical checks for Haar-state constructions.")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run the experiment named in a config file")
    run.add_argument("config")
    _common(run, with_params=False)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value file; flags override it")
        _common(p, with_params=True)
    return parser


def _common(p, with_params: bool) -> None:
    if with_params:
        for key in ("m", "n", "s", "r", "c", "ell", "t", "d", "samples", "seed", "trials", "bit",
                    "order-seed"):
            p.add_argument(f"--{key}", dest=key.replace("-", "_"), default=None)
        p.add_argument("--lambda", dest="lambda_", default=None)
        p.add_argument("--mode", choices=["exact", "mc"], default=None)
        p.add_argument("--strategy", default=None)
        p.add_argument("--dump", default=None, help="write the experiment's main matrix here")
    p.add_argument("--out", default=None, help="JSON report path (stdout if omitted)")
    p.add_argument("--csv", default=None, help="CSV report path")
    p.add_argument("--workers", type=int, default=None)


def _config_from_args(args) -> dict[str, Any]:
    if args.experiment == "run":
        return parse_config(args.config)
    raw: dict[str, Any] = {}
    if args.config:
        raw.update(read_config_text(_read_file(args.config)))
        named = raw.get("experiment", args.experiment)
        if named != args.experiment:
            raise ConfigurationError(
                f"config names experiment {named!r} but subcommand is {args.experiment!r}"
            )
    raw["experiment"] = args.experiment
    for key in INT_KEYS + ("mode", "strategy", "dump"):
        attr = "lambda_" if key == "lambda" else key
        value = getattr(args, attr, None)
        if value is not None:
            raw[key] = value
    return resolve_config(raw)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        report = run_experiment(cfg, workers=args.workers)
        if args.out:
            write_report(report, args.out, ("json",))
        else:
            print(json.dumps(report.to_dict(), indent=2))
        if args.csv:
            write_report(report, args.csv, ("csv",))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_BOUND_FAILED
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())

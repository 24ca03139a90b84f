"""Command-line experiment harness.

Subcommands: ``sweep``, ``chernoff``, ``simulate``, ``exponent``, ``selftest``.
A JSON config supplies defaults; command-line flags override it.

CSV columns for ``sweep`` (fixed order)::

    k, thresholds, C_discrete, lambda_star, C_system, pe_exact, pfa, pmd, pe_mc, mc_stderr

followed by ``chernoff_monotone: true|false`` and ``pe_monotone: true|false``
lines. JSON output carries ``"schema": 1``. Exit status is 0 on success, 1 on
any error, and 2 when ``--check`` is given and a monotonicity flag is false.
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
from scipy import special

from .divergence import (
    KLDirection,
    chernoff_continuous,
    chernoff_discrete,
    kl_continuous,
    kl_discrete,
)
from .errors import ModelError, NumericalError
from .fusion import (
    QuantizerMode,
    TandemSystem,
    exact_error,
    iid_error_exponent,
    monte_carlo_error,
    nested_uniform_specs,
    theorem3_experiment,
    unquantized_error,
)
from .models import ConditionalModel, cdf
from .quantize import (
    DiscreteCondPMF,
    Objective,
    cell_probabilities,
    optimize_thresholds,
    uniform_posterior_quantizer,
)

SCHEMA_VERSION = 1
SWEEP_COLUMNS = ["k", "thresholds", "C_discrete", "lambda_star", "C_system",
                 "pe_exact", "pfa", "pmd", "pe_mc", "mc_stderr"]
DEFAULT_MODEL = {"family": "gaussian_equal_variance", "params0": [0.0, 1.0], "params1": [1.0, 1.0]}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    node1: ConditionalModel = field(default_factory=lambda: ConditionalModel.from_dict(DEFAULT_MODEL))
    node2: ConditionalModel = field(default_factory=lambda: ConditionalModel.from_dict(DEFAULT_MODEL))
    prior1: float = 0.5
    k_list: list = field(default_factory=lambda: [2, 4, 8, 16])
    quantizer_mode: QuantizerMode = QuantizerMode.UNIFORM_NESTED
    mc_samples: int = 0
    seed: int = 0
    output_path: str | None = None
    output_format: str = "csv"
    k: int = 3
    n_max: int = 12

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown field")
        cfg = cls()
        for key, value in d.items():
            setattr(cfg, key, value)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name in ("node1", "node2"):
            value = getattr(self, name)
            if not isinstance(value, ConditionalModel):
                try:
                    setattr(self, name, ConditionalModel.from_dict(value))
                except (ModelError, AttributeError) as exc:
                    raise ConfigError(name, str(exc)) from None
        if not _is_number(self.prior1) or not 0.0 < self.prior1 < 1.0:
            raise ConfigError("prior1", f"must be a number in (0, 1), got {self.prior1!r}")
        ks = self.k_list
        if (not isinstance(ks, list) or not ks or not all(_is_int(v) and v >= 1 for v in ks)):
            raise ConfigError("k_list", f"must be a non-empty list of positive integers, got {ks!r}")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigError("k_list", "must be strictly ascending")
        try:
            self.quantizer_mode = QuantizerMode(self.quantizer_mode)
        except ValueError:
            raise ConfigError("quantizer_mode", f"unknown mode {self.quantizer_mode!r}") from None
        if self.quantizer_mode is QuantizerMode.UNIFORM_NESTED and any(b % a for a, b in zip(ks, ks[1:])):
            raise ConfigError("k_list", "uniform_nested mode needs each k to divide the next")
        if not _is_int(self.mc_samples) or self.mc_samples < 0:
            raise ConfigError("mc_samples", "must be a non-negative integer")
        if not _is_int(self.seed) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("output_format", "must be 'csv' or 'json'")
        if self.output_path is not None and not isinstance(self.output_path, str):
            raise ConfigError("output_path", "must be a string path")
        if not _is_int(self.k) or self.k < 1:
            raise ConfigError("k", "must be a positive integer")
        if not _is_int(self.n_max) or self.n_max < 1:
            raise ConfigError("n_max", "must be a positive integer")

    def to_dict(self) -> dict:
        return {
            "node1": self.node1.to_dict(), "node2": self.node2.to_dict(), "prior1": self.prior1,
            "k_list": list(self.k_list), "quantizer_mode": self.quantizer_mode.value,
            "mc_samples": self.mc_samples, "seed": self.seed,
        }


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def fmt(x) -> str:
    """Numbers at 12 significant digits; used for every numeric output cell."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _json_number(x):
    if x is None:
        return None
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return int(x)
    x = float(x)
    return float(f"{x:.12g}") if math.isfinite(x) else fmt(x)


def render(columns, rows, summary: dict, fmt_name: str, command: str, config: ExperimentConfig) -> str:
    if fmt_name == "json":
        doc = {
            "schema": SCHEMA_VERSION,
            "command": command,
            "config": config.to_dict(),
            "columns": columns,
            "rows": [{c: (v if isinstance(v, str) else _json_number(v)) for c, v in zip(columns, r)} for r in rows],
            **summary,
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    for key, value in summary.items():
        buf.write(f"{key}: {fmt(value) if not isinstance(value, str) else value}\n")
    return buf.getvalue()


def _emit(text: str, config: ExperimentConfig, out) -> None:
    if config.output_path:
        with open(config.output_path, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


def _sweep(config: ExperimentConfig, args, out) -> int:
    result = theorem3_experiment(
        config.node1, config.node2, config.prior1, config.k_list, config.quantizer_mode,
        mc_samples=config.mc_samples, seed=config.seed, record_failures=True,
    )
    rows = []
    for r in result.rows:
        thresholds = ";".join(fmt(t) for t in r.spec.thresholds) if r.spec else ""
        if r.failure:
            rows.append([r.k, thresholds, "error: " + r.failure] + [None] * 7)
            continue
        e = r.error
        rows.append([r.k, thresholds, r.chernoff.value, r.chernoff.lambda_star, r.system.value,
                     e.pe_exact, e.pfa, e.pmd, e.pe_mc if config.mc_samples else None,
                     e.mc_stderr if config.mc_samples else None])
    summary = {"chernoff_monotone": result.chernoff_monotone, "pe_monotone": result.pe_monotone}
    _emit(render(SWEEP_COLUMNS, rows, summary, config.output_format, "sweep", config), config, out)
    if config.output_path:
        for key, value in summary.items():
            out.write(f"{key}: {fmt(value)}\n")
    if any(r.failure for r in result.rows):
        return 1
    if args.check and not (result.chernoff_monotone and result.pe_monotone):
        return 2
    return 0


def _specs(config: ExperimentConfig):
    if config.quantizer_mode is QuantizerMode.UNIFORM_NESTED:
        return nested_uniform_specs(config.k_list)
    specs = []
    for k in config.k_list:
        if k == 1:
            specs.append(uniform_posterior_quantizer(1))
        else:
            ctx = TandemSystem(config.node1, config.node2, uniform_posterior_quantizer(k), config.prior1)
            specs.append(optimize_thresholds(config.node1, k, Objective.BAYES_ERROR, system=ctx).spec)
    return specs


def _chernoff(config: ExperimentConfig, args, out) -> int:
    columns = ["k", "thresholds", "C_discrete", "lambda_star", "KL_pq", "KL_qp"]
    rows = []
    for spec in _specs(config):
        pmf = cell_probabilities(config.node1, spec)
        c = chernoff_discrete(pmf)
        rows.append([spec.k, ";".join(fmt(t) for t in spec.thresholds), c.value, c.lambda_star,
                     kl_discrete(pmf, KLDirection.P_Q), kl_discrete(pmf, KLDirection.Q_P)])
    cc = chernoff_continuous(config.node1)
    summary = {
        "C_continuous": cc.value,
        "lambda_star_continuous": cc.lambda_star,
        "KL_continuous_pq": kl_continuous(config.node1, KLDirection.P_Q),
        "KL_continuous_qp": kl_continuous(config.node1, KLDirection.Q_P),
    }
    _emit(render(columns, rows, summary, config.output_format, "chernoff", config), config, out)
    return 0


def _simulate(config: ExperimentConfig, args, out) -> int:
    n = config.mc_samples or 100_000
    columns = ["k", "thresholds", "pe_mc", "mc_stderr", "mc_pfa", "mc_pmd", "n"]
    children = np.random.SeedSequence(config.seed).spawn(len(config.k_list))
    rows = []
    for spec, child in zip(_specs(config), children):
        system = TandemSystem(config.node1, config.node2, spec, config.prior1)
        r = monte_carlo_error(system, n, child, exact=False)
        rows.append([spec.k, ";".join(fmt(t) for t in spec.thresholds), r.pe_mc, r.mc_stderr, r.mc_pfa, r.mc_pmd, n])
    _emit(render(columns, rows, {}, config.output_format, "simulate", config), config, out)
    return 0


def _exponent(config: ExperimentConfig, args, out) -> int:
    pmf = cell_probabilities(config.node1, uniform_posterior_quantizer(config.k))
    c = chernoff_discrete(pmf).value
    table = iid_error_exponent(pmf, config.prior1, config.n_max)
    rows = [[r.n, r.pe, r.exponent, abs(r.exponent - c)] for r in table]
    summary = {"k": config.k, "C_discrete": c}
    _emit(render(["n", "pe", "exponent", "abs_gap_to_C"], rows, summary, config.output_format, "exponent", config),
          config, out)
    return 0


def selftest_checks():
    """Built-in oracle comparisons: (name, computed, expected, tolerance)."""
    g01 = ConditionalModel.gaussian(0.0, 1.0, 1.0)
    g02 = ConditionalModel.gaussian(0.0, 2.0, 1.0)
    flat = ConditionalModel.gaussian(0.0, 0.0, 1.0)
    sym = DiscreteCondPMF([0.9, 0.1], [0.1, 0.9])
    single = TandemSystem(g01, flat, uniform_posterior_quantizer(2), 0.5)
    return [
        ("normal cdf at 1.959964", float(cdf(g01, 0, 1.959964)), 0.975, 1e-6),
        ("chernoff N(0,1) vs N(1,1)", chernoff_continuous(g01).value, 0.125, 1e-6),
        ("chernoff N(0,1) vs N(2,1)", chernoff_continuous(g02).value, 0.5, 1e-6),
        ("kl N(1,1) || N(0,1)", kl_continuous(g01), 0.5, 1e-6),
        ("chernoff [.9,.1] vs [.1,.9]", chernoff_discrete(sym).value, -math.log(0.6), 1e-12),
        ("kl [.9,.1] || [.5,.5]", kl_discrete(DiscreteCondPMF([0.9, 0.1], [0.5, 0.5])),
         0.9 * math.log(1.8) + 0.1 * math.log(0.2), 1e-12),
        ("single-sensor Bayes error", exact_error(single).pe_exact, float(special.ndtr(-0.5)), 1e-12),
        ("two-sensor unquantized error", unquantized_error(g01, g01).pe_exact,
         float(special.ndtr(-math.sqrt(2) / 2)), 1e-12),
    ]


def _selftest(config: ExperimentConfig, args, out) -> int:
    ok = True
    for name, got, want, tol in selftest_checks():
        passed = abs(got - want) <= tol
        ok &= passed
        out.write(f"{'PASS' if passed else 'FAIL'} {name}: got {fmt(got)} expected {fmt(want)} tol {tol:g}\n")
    return 0 if ok else 1


COMMANDS = {"sweep": _sweep, "chernoff": _chernoff, "simulate": _simulate,
            "exponent": _exponent, "selftest": _selftest}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--check", action="store_true", help="exit 2 if a monotonicity flag is false")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", dest="output_format", choices=["csv", "json"])
    common.add_argument("--output", dest="output_path")
    common.add_argument("--k-list", help="comma-separated level counts, e.g. 2,4,8")
    common.add_argument("--mode", dest="quantizer_mode", choices=[m.value for m in QuantizerMode])
    common.add_argument("--mc-samples", type=int)
    common.add_argument("--prior1", type=float)
    common.add_argument("--k", type=int, help="level count for the exponent table")
    common.add_argument("--n-max", type=int)

    parser = _Parser(prog="tandemfusion", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("--config", str(exc)) from None
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
    overrides = {
        "seed": args.seed, "output_format": args.output_format, "output_path": args.output_path,
        "quantizer_mode": args.quantizer_mode, "mc_samples": args.mc_samples, "prior1": args.prior1,
        "k": args.k, "n_max": args.n_max,
    }
    if args.k_list is not None:
        try:
            overrides["k_list"] = [int(v) for v in args.k_list.split(",")]
        except ValueError:
            raise ConfigError("k_list", f"cannot parse {args.k_list!r}") from None
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_mapping(data)


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](config, args, out)
    except (ConfigError, ModelError, NumericalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

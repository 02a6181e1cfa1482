"""Command line entry point: ``equivmaps <command> --config <path> [--seed N] [--out <path>] [--format csv|json]``.

The config is a single JSON document; flags override its ``seed``, ``output``
and ``format`` fields.  Reports are a pure function of the config, the seed and
the pinned-constants version.  With ``--out`` set, a run manifest is written
next to the report as ``<out>.manifest.json``.

Exit codes: 0 pass, 1 config error, 2 assertion failure, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .constants import load_pinned_constants
from .density_models import InvalidDensityError, make_density
from .dyadic import besov_tail_profile
from .hellinger import QuadratureError
from .transforms import (
    CoefficientStack,
    CountPyramid,
    DitherStream,
    choose_k0,
    count_pyramid,
    default_k1,
    forward_map,
    gamma_sequence,
    inverse_map,
    make_rng,
    sample_poisson_process,
    simulate_white_noise,
)

__all__ = ["COMMANDS", "ConfigError", "ExperimentConfig", "RunManifest", "run", "main", "gamma_sequence"]

COMMANDS = (
    "transform", "invert", "simulate", "verify-thm3", "verify-thm4", "verify-thm5",
    "verify-tusnady", "verify-lemmas", "verify-rates", "besov",
)
EXIT_PASS, EXIT_CONFIG, EXIT_ASSERTION, EXIT_NUMERIC = 0, 1, 2, 3

UNIFORM = {"family": "uniform", "eps0": 1.0}
LINEAR = {"family": "linear", "params": {"a": 0.5, "b": 1.0}, "eps0": 0.5}
COSINE = {"family": "fourier", "params": {"coefficients": {"0": 1.0, "1": 0.1}}, "eps0": 0.7}
BUMP = {"family": "haar-bump", "params": {"k": 3, "l": 2, "amplitude": 0.3}, "eps0": 0.1}

DEFAULT_GRIDS = {
    "verify-thm3": {"densities": [UNIFORM, LINEAR, COSINE], "ns": [1024, 16384], "k0s": [2, 3, 4]},
    "verify-thm4": {"lambdas": [256, 1024, 4096, 16384], "offcenter_lambdas": [10, 100, 1000],
                    "offsets": [-2.0, -0.5, 0.0, 0.5, 2.0], "remark_lambdas": [1, 10, 100]},
    "verify-thm5": {"ms": [0, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024],
                    "ps": [0.4, 0.45, 0.49, 0.5, 0.51, 0.55, 0.6]},
    "verify-tusnady": {"ms": [64, 256, 1024]},
    "verify-lemmas": {"densities": [LINEAR, COSINE, BUMP], "lambdas": [0.1, 1, 10, 100]},
    "verify-rates": {"ns": [256, 1024, 4096, 16384]},
}


class ConfigError(ValueError):
    """The experiment config is malformed or inconsistent."""


@dataclass
class ExperimentConfig:
    command: str
    density: dict | None = None
    n: int | None = None
    k0: int | str | None = None
    k1: int | None = None
    seed: int = 0
    replicates: int = 1
    grids: dict = field(default_factory=dict)
    output: str | None = None
    format: str = "json"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an integer in [0, 2**64)")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("replicates must be a positive integer")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        if self.k0 is not None and self.k0 != "auto" and (not isinstance(self.k0, int) or self.k0 < 0):
            raise ConfigError("k0 must be a nonnegative integer or 'auto'")
        if self.k1 is not None and (not isinstance(self.k1, int) or self.k1 < 0):
            raise ConfigError("k1 must be a nonnegative integer")
        if isinstance(self.k0, int) and self.k1 is not None and self.k0 >= self.k1:
            raise ConfigError("need k0 < k1")
        if self.n is not None and (not isinstance(self.n, int) or self.n <= 0):
            raise ConfigError("n must be a positive integer")
        if not isinstance(self.grids, dict) or not isinstance(self.options, dict):
            raise ConfigError("grids and options must be JSON objects")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "command" not in d:
            raise ConfigError("config needs a 'command'")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def grid(self, key: str):
        if key in self.grids:
            return self.grids[key]
        try:
            return DEFAULT_GRIDS[self.command][key]
        except KeyError:
            raise ConfigError(f"{self.command} needs grids.{key}") from None

    def require(self, *names):
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"{self.command} needs {', '.join(missing)}")


@dataclass
class RunManifest:
    config: dict
    library_version: str
    constants_version: int
    wall_time: float
    suites: dict

    @property
    def passed(self) -> bool:
        return all(s["status"] != "fail" for s in self.suites.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


# -- helpers ---------------------------------------------------------------------------

def _density(spec):
    if spec is None:
        raise ConfigError("a density spec is required")
    try:
        return make_density(spec)
    except InvalidDensityError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_k0(config: ExperimentConfig, f, n) -> int:
    if config.k0 is None:
        raise ConfigError(f"{config.command} needs k0")
    if config.k0 != "auto":
        return config.k0
    family = [_density(s) for s in config.options.get("gamma_family", [config.density])]
    return choose_k0(n, gamma_sequence(family, int(config.options.get("gamma_k_max", 20))))


def _suite(passed) -> dict:
    if passed is None:
        return {"status": "skipped", "reason": "descriptive output only"}
    return {"status": "pass" if passed else "fail"}


def _report_text(reports, fmt: str) -> str:
    if fmt == "json":
        return json.dumps({r.name: r.to_dict() for r in reports}, indent=2, sort_keys=True) + "\n"
    return "\n".join(r.to_csv() for r in reports)


def _check_finite(reports):
    for r in reports:
        arr = np.array([[v for v in row if isinstance(v, (int, float, np.number))] for row in r.rows], dtype=float)
        if arr.size and np.any(np.isnan(arr)):
            raise FloatingPointError(f"report {r.name} contains NaN")


# -- commands ---------------------------------------------------------------------------

def _cmd_transform(config):
    config.require("n", "k0")
    f = _density(config.density)
    k0 = _resolve_k0(config, f, config.n)
    k1 = config.k1 if config.k1 is not None else default_k1(config.n)
    if k0 >= k1:
        raise ConfigError("need k0 < k1")
    sample = sample_poisson_process(f, config.n, make_rng(config.seed, "poisson", 0))
    pyramid = count_pyramid(sample, k0, k1)
    stack = forward_map(pyramid, DitherStream(config.seed), config.n)
    doc = {"pyramid": pyramid.to_dict(), "stack": stack.to_dict()}
    if config.format == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n", {"transform": _suite(None)}
    lines = ["level,index,kind,value"]
    lines.append("\n".join(f"{k0},{i},base,{v!r}" for i, v in enumerate(stack.base.tolist())))
    for k in range(k0 + 1, k1 + 1):
        lines.append("\n".join(f"{k},{i},detail,{v!r}" for i, v in enumerate(stack.details[k].tolist())))
    return "\n".join(lines) + "\n", {"transform": _suite(None)}


def _cmd_invert(config):
    path = config.options.get("input")
    if not path:
        raise ConfigError("invert needs options.input (a file written by transform)")
    try:
        doc = json.loads(Path(path).read_text())
        stack = CoefficientStack.from_dict(doc["stack"] if "stack" in doc else doc)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read coefficient stack from {path}: {exc}") from exc
    pyramid, flags = inverse_map(stack, return_flags=True)
    suites = {"invert": {"status": "pass" if flags.n_clamped == 0 else "fail", "n_clamped": flags.n_clamped,
                         "n_saturated": flags.n_saturated}}
    if "pyramid" in doc:
        same = pyramid == CountPyramid.from_dict(doc["pyramid"])
        suites["round-trip"] = _suite(same)
    if config.format == "json":
        return json.dumps({"pyramid": pyramid.to_dict()}, indent=2, sort_keys=True) + "\n", suites
    lines = ["level,index,count"]
    for k in range(pyramid.k0, pyramid.k1 + 1):
        lines.extend(f"{k},{i},{c}" for i, c in enumerate(pyramid.counts[k].tolist()))
    return "\n".join(lines) + "\n", suites


def _cmd_simulate(config):
    config.require("n")
    f = _density(config.density)
    experiment = config.options.get("experiment", "white-noise")
    if experiment == "white-noise":
        k1 = config.k1 if config.k1 is not None else default_k1(config.n)
        path = simulate_white_noise(f, config.n, k1, make_rng(config.seed, "white-noise", 0))
        if config.format == "json":
            return json.dumps(path.to_dict(), indent=2, sort_keys=True) + "\n", {"simulate": _suite(None)}
        t = np.arange(1, 2**k1 + 1) * 2.0**-k1
        rows = "\n".join(f"{a!r},{b!r}" for a, b in zip(t.tolist(), path.values().tolist()))
        return "t,value\n" + rows + "\n", {"simulate": _suite(None)}
    if experiment == "poisson":
        points = sample_poisson_process(f, config.n, make_rng(config.seed, "poisson", 0)).points
    elif experiment == "fixed":
        points = f.sample(config.n, make_rng(config.seed, "fixed-sample", config.n, 0))
    else:
        raise ConfigError("options.experiment must be 'white-noise', 'poisson' or 'fixed'")
    if config.format == "json":
        doc = {"experiment": experiment, "n": config.n, "points": points.tolist()}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n", {"simulate": _suite(None)}
    return "point\n" + "".join(f"{x!r}\n" for x in points.tolist()), {"simulate": _suite(None)}


def _cmd_verify_thm3(config, constants):
    from .metrics import BoundReport, decomposition_estimate, thm3_bound

    replicates = 8 if config.replicates == 1 else config.replicates
    rows = []
    for spec in config.grid("densities"):
        f = _density(spec)
        for n in config.grid("ns"):
            for k0 in config.grid("k0s"):
                est = decomposition_estimate(f, n, k0, config.k1, replicates=replicates, seed=config.seed)
                bound = thm3_bound(f, n, k0, constants=constants)
                rows.append([f.family, n, k0, est.base_term, est.detail_total, est.total, est.total_se,
                             bound["term1"], bound["term2"], bound["term3"], bound["total"], bound["total_pinned"]])
    report = BoundReport(
        "thm3", ["family", "n", "k0", "base_term", "detail_total", "surrogate_total", "surrogate_se",
                 "term1", "term2", "term3", "bound_unit", "bound_pinned"],
        rows, "surrogate_total", "bound_pinned",
        metadata={"seed": config.seed, "replicates": replicates, "constants_version": constants["version"]},
    )
    report.passed = bool(np.all(report.lhs <= report.rhs))
    return [report]


def _cmd_verify_thm4(config, constants):
    from .metrics import THM4_ASYMPTOTE, THM4_ASYMPTOTE_STATED, remark4_check, thm4_offcenter, thm4_sweep

    which = config.options.get("asymptote", "stated")
    if which not in ("stated", "corrected"):
        raise ConfigError("options.asymptote must be 'stated' or 'corrected'")
    target = THM4_ASYMPTOTE_STATED if which == "stated" else THM4_ASYMPTOTE
    sweep = thm4_sweep(config.grid("lambdas"))
    lam_h2 = sweep.column("lambda_hellinger_sq")
    dev = np.abs(lam_h2 - target)
    sweep.passed = bool(abs(lam_h2[-1] - target) <= 0.1 * target and np.all(np.diff(dev) < 0))
    sweep.metadata["asymptote_checked"] = which
    off = thm4_offcenter(config.grid("offcenter_lambdas"), config.grid("offsets"), constants["C"])
    remark = remark4_check(config.grid("remark_lambdas"))
    return [sweep, off, remark]


def _cmd_verify_thm5(config, constants):
    from .metrics import thm5_sweep

    return [thm5_sweep(config.grid("ms"), config.grid("ps"), pinned=constants["C1"])]


def _cmd_verify_tusnady(config, constants):
    from .metrics import tusnady_check

    return [tusnady_check(config.grid("ms"), constants)]


def _cmd_verify_lemmas(config, constants):
    from .metrics import lemma_checks

    reports = []
    max_level = int(config.options.get("max_level", 8))
    c = float(config.options.get("c", 2.0))
    specs = [config.density] if config.density is not None else config.grid("densities")
    for spec in specs:
        f = _density(spec)
        for r in lemma_checks(f, max_level=max_level, lambdas=config.grid("lambdas"), c=c).values():
            r.name = f"{f.family}:{r.name}"
            reports.append(r)
    return reports


def _cmd_verify_rates(config, constants):
    from .metrics import rate_check

    f = _density(config.density or LINEAR)
    family = [_density(s) for s in config.options.get("gamma_family", [f.to_spec()])]
    gamma = gamma_sequence(family, int(config.options.get("gamma_k_max", 20)))
    replicates = 200 if config.replicates == 1 else config.replicates
    modes = config.options.get("modes", ["fixed", "poisson"])
    return [rate_check(f, config.grid("ns"), gamma, replicates=replicates, seed=config.seed, mode=m) for m in modes]


def _cmd_besov(config, constants):
    from .metrics import BoundReport

    f = _density(config.density)
    alpha = float(config.options.get("alpha", 0.5))
    p = float(config.options.get("p", 2))
    q = float(config.options.get("q", 2))
    k_max = int(config.options.get("k_max", 20))
    profile = besov_tail_profile(f, alpha, p, q, k_max)
    gamma = gamma_sequence([f], k_max, p, q)
    rows = [[k, float(t), float(t) ** (1.0 / q), float(g)] for k, (t, g) in enumerate(zip(profile, gamma))]
    report = BoundReport("besov", ["k0", "tail_pow_q", "tail_norm", "gamma"], rows, "tail_pow_q", "tail_pow_q",
                         metadata={"alpha": alpha, "p": p, "q": q, "k_max": k_max})
    return [report]


_VERIFY = {
    "verify-thm3": _cmd_verify_thm3,
    "verify-thm4": _cmd_verify_thm4,
    "verify-thm5": _cmd_verify_thm5,
    "verify-tusnady": _cmd_verify_tusnady,
    "verify-lemmas": _cmd_verify_lemmas,
    "verify-rates": _cmd_verify_rates,
    "besov": _cmd_besov,
}
_PLAIN = {"transform": _cmd_transform, "invert": _cmd_invert, "simulate": _cmd_simulate}


def run(config: ExperimentConfig) -> tuple[str, RunManifest]:
    """Run one command; returns the report text and the manifest."""
    start = time.perf_counter()
    constants = load_pinned_constants()
    if config.command in _PLAIN:
        text, suites = _PLAIN[config.command](config)
    else:
        reports = _VERIFY[config.command](config, constants)
        _check_finite(reports)
        text = _report_text(reports, config.format)
        suites = {r.name: _suite(r.passed) for r in reports}
    manifest = RunManifest(config.to_dict(), __version__, constants["version"], time.perf_counter() - start, suites)
    return text, manifest


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="equivmaps", description="Equivalence maps between density, Poisson and white-noise experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--format", choices=("csv", "json"), help="override the config output format")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = json.loads(Path(args.config).read_text())
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw.setdefault("command", args.command)
        if raw["command"] != args.command:
            raise ConfigError(f"config is for {raw['command']!r}, not {args.command!r}")
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["output"] = args.out
        if args.format is not None:
            raw["format"] = args.format
        config = ExperimentConfig.from_dict(raw)
    except (OSError, json.JSONDecodeError, ConfigError, TypeError) as exc:
        print(f"equivmaps: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text, manifest = run(config)
    except (QuadratureError, FloatingPointError, OverflowError, ArithmeticError) as exc:
        print(f"equivmaps: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"equivmaps: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if config.output:
        out = Path(config.output)
        out.write_text(text)
        Path(str(out) + ".manifest.json").write_text(manifest.to_json())
    else:
        sys.stdout.write(text)
    for name, suite in manifest.suites.items():
        print(f"{name}: {suite['status']}", file=sys.stderr)
    return EXIT_PASS if manifest.passed else EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())

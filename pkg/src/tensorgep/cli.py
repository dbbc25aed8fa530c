"""Command-line front end: ``generate``, ``run``, ``batch`` and ``validate-config``.

A run configuration is a JSON document::

    {
      "data": {"generator": "maxwell", "params": {"n_points": 150}},
      "library": {"scalar_terminals": ["E_kE_k", "B_kB_k", "epsilon0", "mu0"], "rnc": true},
      "evolution": {"population_size": 1600, "max_generations": 2000, "seed": 1},
      "output": "runs/maxwell",
      "prune_threshold": 1e-3
    }

``data`` may instead name files: ``{"path": "data.csv", "schema": "schema.json"}``
(relative to the config file), optionally with ``"subsample": {"k": 25, "seed": 7}``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import benchmarks, report
from .data import Dataset, DataError, SchemaError, load_dataset, save_dataset, subsample
from .evolution import EvolutionConfig, EvolutionResult, evolve, write_log
from .genome import GenomeError, Library

log = logging.getLogger("tensorgep")


class ConfigError(ValueError):
    """Invalid run configuration; the message carries a file:line prefix when known."""


# -- configuration -------------------------------------------------------------

_DATA_KEYS = {"generator", "params", "path", "schema", "subsample", "resample"}
_LIBRARY_KEYS = {"tensor_terminals", "scalar_terminals", "tensor_functions", "scalar_functions", "rnc"}
_TOP_KEYS = {"data", "library", "evolution", "output", "prune_threshold"}


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


@dataclass
class RunConfig:
    data: dict
    library: dict = field(default_factory=dict)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    output: Path = Path("tensorgep-run")
    prune_threshold: float = report.PRUNE_REL
    base_dir: Path = Path(".")
    source: str = "<config>"
    text: str = ""

    # construction ------------------------------------------------------------

    @classmethod
    def from_file(cls, path) -> RunConfig:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        return cls.from_text(text, source=str(path), base_dir=path.parent)

    @classmethod
    def from_text(cls, text: str, source: str = "<config>", base_dir: Path = Path(".")) -> RunConfig:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}:1: the configuration must be a JSON object")

        def fail(key: str, msg: str):
            line = _line_of(text, key)
            raise ConfigError(f"{source}:{line}: {msg}" if line else f"{source}: {msg}")

        for k in raw:
            if k not in _TOP_KEYS:
                fail(k, f"unknown key {k!r}")
        data = raw.get("data")
        if not isinstance(data, dict):
            fail("data", "'data' must be an object naming a generator or a data file")
        for k in data:
            if k not in _DATA_KEYS:
                fail(k, f"unknown data key {k!r}")
        has_gen, has_file = "generator" in data, "path" in data
        if has_gen == has_file:
            fail("data", "'data' needs exactly one of 'generator' or 'path'")
        if has_gen and data["generator"] not in benchmarks.GENERATORS:
            fail("generator", f"unknown generator {data['generator']!r}; known: {', '.join(benchmarks.GENERATORS)}")
        if has_file and "schema" not in data:
            fail("path", "a data file needs a 'schema'")
        lib = raw.get("library", {})
        if not isinstance(lib, dict):
            fail("library", "'library' must be an object")
        for k in lib:
            if k not in _LIBRARY_KEYS:
                fail(k, f"unknown library key {k!r}")
        evo = raw.get("evolution", {})
        if not isinstance(evo, dict):
            fail("evolution", "'evolution' must be an object")
        if "rnc" in lib and "rnc" not in evo:
            evo = {**evo, "rnc": bool(lib["rnc"])}
        try:
            ecfg = EvolutionConfig.from_mapping(evo)
        except (TypeError, ValueError) as exc:
            bad = next((k for k in evo if k in str(exc)), "evolution")
            fail(bad, str(exc))
        prune = raw.get("prune_threshold", report.PRUNE_REL)
        if not isinstance(prune, (int, float)) or prune < 0:
            fail("prune_threshold", "'prune_threshold' must be a non-negative number")
        out = Path(raw.get("output", "tensorgep-run"))
        return cls(data, lib, ecfg, out if out.is_absolute() else base_dir / out, float(prune), base_dir,
                   source, text)

    # materialization ---------------------------------------------------------

    def _fail(self, key: str, msg: str):
        line = _line_of(self.text, key)
        raise ConfigError(f"{self.source}:{line}: {msg}" if line else f"{self.source}: {msg}")

    def dataset(self, resample_seed: int | None = None) -> Dataset:
        d = self.data
        try:
            if "generator" in d:
                ds = make_dataset(d["generator"], d.get("params", {}))
            else:
                base = self.base_dir
                ds = load_dataset(base / d["path"], base / d["schema"])
        except (TypeError, DataError, SchemaError, FileNotFoundError) as exc:
            self._fail("data", f"cannot build the dataset: {exc}")
        sub = d.get("subsample")
        if sub is not None:
            seed = resample_seed if (resample_seed is not None and d.get("resample", True)) else sub.get("seed", 0)
            try:
                ds = subsample(ds, sub["k"], seed)
            except (KeyError, ValueError) as exc:
                self._fail("subsample", f"bad subsample: {exc}")
        return ds

    def build_library(self, ds: Dataset) -> Library:
        lib = {k: v for k, v in self.library.items() if k != "rnc"}
        rnc = self.evolution.rnc
        try:
            if not lib and "generator" in self.data:
                return benchmarks.LIBRARIES[self.data["generator"]](ds, rnc=rnc)
            return Library.from_dataset(ds, rnc=rnc, **lib)
        except GenomeError as exc:
            msg = str(exc)
            key = next((k for k in ("tensor_terminals", "scalar_terminals", "tensor_functions", "scalar_functions")
                        if k in lib and k.replace("_", " ")[:-1] in msg), "library")
            self._fail(key, f"invalid library: {msg}")


def make_dataset(name: str, params: dict) -> Dataset:
    gen = benchmarks.GENERATORS[name]
    params = dict(params)
    if "noise" in params and not isinstance(params["noise"], benchmarks.NoiseSpec):
        params["noise"] = benchmarks.NoiseSpec(float(params.pop("noise")), int(params.pop("noise_seed", 0)))
    elif "noise_seed" in params:
        params["noise"] = benchmarks.NoiseSpec(0.0, int(params.pop("noise_seed")))
    if "t_range" in params:
        params["t_range"] = tuple(params["t_range"])
    return gen(**params)


# -- commands ------------------------------------------------------------------

def file_digest(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def cmd_generate(generator: str, params: dict, out) -> tuple[Path, Path, str]:
    if generator not in benchmarks.GENERATORS:
        raise ConfigError(f"unknown generator {generator!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ds = make_dataset(generator, params)
    data_path, schema_path = out / f"{generator}.csv", out / f"{generator}.schema.json"
    save_dataset(ds, data_path, schema_path)
    return data_path, schema_path, file_digest(data_path, schema_path)


@dataclass
class RunOutcome:
    result: EvolutionResult
    report: report.Report
    out: Path


def _metadata(started: float, finished: float, seed: int) -> dict:
    return {
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "seconds": round(finished - started, 3),
        "seed": seed,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def cmd_run(cfg: RunConfig, seed: int | None = None, out: Path | None = None,
            resample_seed: int | None = None, progress=None) -> RunOutcome:
    ecfg = cfg.evolution if seed is None else EvolutionConfig.from_mapping({**cfg.evolution.to_mapping(), "seed": seed})
    ds = cfg.dataset(resample_seed)
    library = cfg.build_library(ds)
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    res = evolve(ds, ecfg, library, callback=progress)
    t1 = time.time()
    rep = report.build_report(res.host, res.fit, ds, cfg.prune_threshold, res.generations, res.reached_threshold)
    write_log(res.history, out / "generations.tsv")
    (out / "report.txt").write_text(rep.to_text(), encoding="utf-8")
    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    (out / "metadata.json").write_text(json.dumps(_metadata(t0, t1, ecfg.seed), indent=2) + "\n", encoding="utf-8")
    return RunOutcome(res, rep, out)


def cmd_batch(cfg: RunConfig, n_runs: int, base_seed: int = 0, progress=None) -> dict:
    if n_runs < 1:
        raise ConfigError("n_runs must be at least 1")
    reports = []
    for k in range(n_runs):
        seed = base_seed + k
        outcome = cmd_run(cfg, seed=seed, out=cfg.output / f"run_{seed:04d}", resample_seed=seed)
        reports.append(outcome.report)
        if progress is not None:
            progress(seed, outcome)
    agg = report.aggregate(reports)
    agg["seeds"] = [base_seed, base_seed + n_runs - 1]
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "aggregate.json").write_text(json.dumps(agg, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    lhs = reports[0].target
    (cfg.output / "aggregate.txt").write_text(report.format_aggregate(agg, lhs), encoding="utf-8")
    return agg


def cmd_validate(cfg: RunConfig) -> str:
    ds = cfg.dataset()
    lib = cfg.build_library(ds)
    lines = [
        f"dataset: {ds.n_data} rows, n_dim={ds.n_dim}, target {ds.target.name} {ds.target.dim}",
        "tensor terminals: " + ", ".join(t.name for t in lib.tensor_terminals),
        "scalar terminals: " + ", ".join(t.name for t in lib.terminals("scalar")),
        "tensor functions: " + " ".join(f.name for f in lib.tensor_functions),
        "scalar functions: " + " ".join(f.name for f in lib.scalar_functions),
        f"population {cfg.evolution.population_size}, generations {cfg.evolution.max_generations}, "
        f"seed {cfg.evolution.seed}",
    ]
    return "\n".join(lines)


# -- argument parsing ------------------------------------------------------------

def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _non_negative(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {v}")
    return v


def _key_value(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tensorgep", description="Discover tensor equations from data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress every generation")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a benchmark dataset and its schema")
    g.add_argument("generator", choices=sorted(benchmarks.GENERATORS))
    g.add_argument("--points", type=_positive_int, help="sample count (maxwell, newtonian)")
    g.add_argument("--times", type=_positive_int, help="time instants (reynolds)")
    g.add_argument("--noise", type=_non_negative, help="relative Gaussian noise level")
    g.add_argument("--noise-seed", type=int)
    g.add_argument("--seed", type=int, help="sampling seed")
    g.add_argument("--incompressible", action="store_true", help="divergence-free field (newtonian)")
    g.add_argument("--set", type=_key_value, action="append", default=[], metavar="KEY=VALUE",
                   help="any other generator parameter")
    g.add_argument("--out", default=".", help="output directory")

    r = sub.add_parser("run", help="run discovery from a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")

    b = sub.add_parser("batch", help="repeat a run over consecutive seeds and aggregate")
    b.add_argument("config")
    b.add_argument("--runs", type=_positive_int, required=True)
    b.add_argument("--base-seed", type=int, default=0)

    v = sub.add_parser("validate-config", help="check a config without running")
    v.add_argument("config")
    return p


def _generator_params(args) -> dict:
    params: dict = dict(args.set)
    if args.points is not None:
        if args.generator == "reynolds":
            raise ConfigError("reynolds takes --times, not --points")
        params["n_points"] = args.points
    if args.times is not None:
        if args.generator != "reynolds":
            raise ConfigError(f"{args.generator} takes --points, not --times")
        params["n_times"] = args.times
    if args.noise is not None:
        params["noise"] = args.noise
    if args.noise_seed is not None:
        params["noise_seed"] = args.noise_seed
    if args.seed is not None:
        params["seed"] = args.seed
    if args.incompressible:
        params["compressible"] = False
    return params


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    def progress(rec):
        log.info("generation %d  best %.6g  dim-pass %.3f", rec.generation, rec.best_loss, rec.dim_pass_fraction)

    try:
        if args.command == "generate":
            data, schema, digest = cmd_generate(args.generator, _generator_params(args), args.out)
            print(data)
            print(schema)
            print(f"sha256 {digest}")
            return 0
        cfg = RunConfig.from_file(args.config)
        if args.command == "validate-config":
            print(cmd_validate(cfg))
            return 0
        if args.command == "run":
            outcome = cmd_run(cfg, seed=args.seed, out=Path(args.out) if args.out else None,
                              progress=progress if args.verbose else None)
            print(outcome.report.to_text(), end="")
            return 0 if outcome.result.reached_threshold else 1
        if args.command == "batch":
            agg = cmd_batch(cfg, args.runs, args.base_seed)
            print(report.format_aggregate(agg, agg.get("target", "y")), end="")
            return 0
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())

"""Experiment command line: run, sweep, verify, couple, emit.

Configs are single JSON documents with a schema version. A config names
instances (generator specs), algorithms, a horizon, and seeds; commands
turn that into batches, independence audits, or equivalence checks, and
write deterministic CSV/JSONL sinks plus a machine-readable failure
list. Exit status is 0 exactly when every verdict passes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

from . import agents, engine
from .agents import ALGORITHM_IDS, MODE_NO_PRIVACY, default_params
from .core import ConfigError, Instance, ValidationError
from .engine import RunConfig, SinkError, couple_check, run_batch
from .envgen import check_independence, instance_from_spec

SCHEMA_VERSION = 1
OUT_ENV_VAR = "DUOBANDIT_OUT"
DEFAULT_SEED_COUNT = 50

# Default grid for the couple command: small instances from each
# environment family, two horizons, five seeds.
DEFAULT_COUPLE_GRID = {
    "instances": [
        {
            "generator": "random_tabular",
            "params": {"n_machine": 3, "n_human": 4, "n_actions": 2},
            "env_seed": 0,
        },
        {
            "generator": "private_info_lb",
            "params": {"mu": [0.7, 0.6, 0.5, 0.4]},
        },
        {
            "generator": "conjecture",
            "params": {"n_policies": 3, "delta": 0.2},
            "env_seed": 0,
        },
    ],
    "horizons": [500, 2000],
    "seeds": [0, 1, 2, 3, 4],
    "tol": 1e-9,
}


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _require_int(obj, path: str, minimum: Optional[int] = None) -> int:
    if not isinstance(obj, int) or isinstance(obj, bool):
        _fail(path, f"expected an integer, got {obj!r}")
    if minimum is not None and obj < minimum:
        _fail(path, f"must be >= {minimum}, got {obj}")
    return obj


def _normalize_seeds(obj, path: str) -> tuple:
    if isinstance(obj, int) and not isinstance(obj, bool):
        if obj < 1:
            _fail(path, "seed count must be positive")
        return tuple(range(obj))
    if isinstance(obj, (list, tuple)):
        seeds = tuple(_require_int(s, f"{path}[{i}]") for i, s in enumerate(obj))
        if len(set(seeds)) != len(seeds):
            _fail(path, "seeds must be distinct")
        if not seeds:
            _fail(path, "need at least one seed")
        return seeds
    _fail(path, f"expected an integer count or a list, got {obj!r}")


def _normalize_algorithms(obj, path: str) -> tuple:
    if not isinstance(obj, (list, tuple)) or not obj:
        _fail(path, "expected a nonempty list")
    out = []
    for k, entry in enumerate(obj):
        here = f"{path}[{k}]"
        if isinstance(entry, str):
            algo_id, params = entry, None
        elif isinstance(entry, dict):
            unknown = set(entry) - {"id", "params"}
            if unknown:
                _fail(here, f"unknown keys {sorted(unknown)}")
            algo_id = entry.get("id")
            params = entry.get("params")
            if params is not None and not isinstance(params, dict):
                _fail(f"{here}.params", "expected an object")
        else:
            _fail(here, f"expected a string or object, got {entry!r}")
        if algo_id not in ALGORITHM_IDS:
            _fail(f"{here}.id", f"unknown algorithm {algo_id!r}")
        out.append((algo_id, dict(params) if params else None))
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description, normalized from a JSON document."""

    version: int
    horizon: int
    seeds: tuple
    instance_specs: tuple
    algorithms: tuple
    transcripts: bool = False
    out: Optional[str] = None
    jobs: int = 1
    sweep_horizons: tuple = ()
    couple: Optional[dict] = None
    instances: tuple = field(default=(), compare=False, repr=False)

    def canonical(self) -> dict:
        """JSON-ready dump; parse_config on it reproduces this config."""
        doc = {
            "version": self.version,
            "horizon": self.horizon,
            "seeds": list(self.seeds),
            "instances": [json.loads(json.dumps(s)) for s in self.instance_specs],
            "algorithms": [
                aid if params is None else {"id": aid, "params": params}
                for aid, params in self.algorithms
            ],
            "transcripts": self.transcripts,
            "jobs": self.jobs,
        }
        if self.out is not None:
            doc["out"] = self.out
        if self.sweep_horizons:
            doc["sweep"] = {"T": list(self.sweep_horizons)}
        if self.couple is not None:
            doc["couple"] = json.loads(json.dumps(self.couple))
        return doc

    def resolved_params(self, algo_id: str, inst: Instance) -> dict:
        """Effective per-cell parameters with theorem-formula defaults."""
        for aid, params in self.algorithms:
            if aid == algo_id:
                resolved = default_params(algo_id, inst, self.horizon)
                if params:
                    resolved.update(params)
                return resolved
        raise ConfigError(f"algorithm {algo_id!r} is not part of this config")


def _parse_document(doc: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    known = {
        "version",
        "horizon",
        "seeds",
        "instances",
        "algorithms",
        "transcripts",
        "out",
        "jobs",
        "sweep",
        "couple",
    }
    unknown = set(doc) - known
    if unknown:
        _fail(sorted(unknown)[0], "unknown config field")
    if "version" not in doc:
        _fail("version", "missing schema version")
    version = _require_int(doc["version"], "version")
    if version != SCHEMA_VERSION:
        _fail("version", f"unsupported schema version {version}")
    if "horizon" not in doc:
        _fail("horizon", "missing horizon")
    horizon = _require_int(doc["horizon"], "horizon", minimum=1)
    seeds = _normalize_seeds(doc.get("seeds", DEFAULT_SEED_COUNT), "seeds")
    algorithms = _normalize_algorithms(doc.get("algorithms"), "algorithms")

    raw_instances = doc.get("instances")
    if not isinstance(raw_instances, (list, tuple)) or not raw_instances:
        _fail("instances", "expected a nonempty list")
    specs = []
    instances = []
    for k, spec in enumerate(raw_instances):
        here = f"instances[{k}]"
        if isinstance(spec, str):
            path = os.path.join(base_dir, spec)
            try:
                with open(path) as fh:
                    spec = json.load(fh)
            except OSError as exc:
                _fail(here, f"cannot read instance spec file: {exc}")
            except json.JSONDecodeError as exc:
                _fail(here, f"instance spec file is not valid JSON: {exc}")
        if not isinstance(spec, dict):
            _fail(here, f"expected an object or filename, got {spec!r}")
        spec = json.loads(json.dumps(spec))
        expect = spec.pop("expect_independent", None)
        if expect is not None and not isinstance(expect, bool):
            _fail(f"{here}.expect_independent", "expected a boolean")
        try:
            inst = instance_from_spec(spec)
        except (ConfigError, ValidationError) as exc:
            _fail(here, str(exc))
        if expect is not None:
            spec["expect_independent"] = expect
        specs.append(spec)
        instances.append(inst)
    names = [inst.name for inst in instances]
    if len(set(names)) != len(names):
        _fail("instances", f"duplicate instance names: {sorted(names)}")

    for a_idx, (aid, _) in enumerate(algorithms):
        if agents.ALGORITHM_MODES[aid] != MODE_NO_PRIVACY:
            continue
        for k, inst in enumerate(instances):
            if not inst.shared_context:
                _fail(
                    f"algorithms[{a_idx}]",
                    f"{aid} needs shared contexts, but instances[{k}] "
                    f"({inst.name!r}) keeps them private",
                )

    sweep = doc.get("sweep")
    sweep_horizons: tuple = ()
    if sweep is not None:
        if not isinstance(sweep, dict) or set(sweep) != {"T"}:
            _fail("sweep", 'expected an object with a single "T" list')
        ts = sweep["T"]
        if not isinstance(ts, (list, tuple)) or not ts:
            _fail("sweep.T", "expected a nonempty list")
        sweep_horizons = tuple(
            _require_int(t, f"sweep.T[{i}]", minimum=1) for i, t in enumerate(ts)
        )

    couple = doc.get("couple")
    if couple is not None:
        if not isinstance(couple, dict):
            _fail("couple", "expected an object")
        unknown = set(couple) - {"instances", "horizons", "seeds", "tol"}
        if unknown:
            _fail(f"couple.{sorted(unknown)[0]}", "unknown field")
        couple = json.loads(json.dumps(couple))

    transcripts = doc.get("transcripts", False)
    if not isinstance(transcripts, bool):
        _fail("transcripts", "expected a boolean")
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        _fail("out", "expected a string")
    jobs = _require_int(doc.get("jobs", 1), "jobs", minimum=1)

    return ExperimentConfig(
        version=version,
        horizon=horizon,
        seeds=seeds,
        instance_specs=tuple(specs),
        algorithms=algorithms,
        transcripts=transcripts,
        out=out,
        jobs=jobs,
        sweep_horizons=sweep_horizons,
        couple=couple,
        instances=tuple(instances),
    )


def parse_config(source) -> ExperimentConfig:
    """Load and validate a config from a path, a dict, or a JSON string."""
    if isinstance(source, dict):
        return _parse_document(source)
    text = str(source)
    if os.path.exists(text):
        with open(text) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{text}: not valid JSON: {exc}") from exc
        return _parse_document(doc, base_dir=os.path.dirname(text) or ".")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file not found and not inline JSON: {text!r}") from exc
    return _parse_document(doc)


# --- command implementations --------------------------------------------------


def _failure(instance=None, algo=None, seed=None, round_=None, detail="") -> dict:
    return {
        "instance": instance,
        "algo": algo,
        "seed": seed,
        "round": round_,
        "detail": detail,
    }


def _write_json(path: str, obj) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        engine._mark_partial(path)
        raise SinkError(f"cannot write {path}: {exc}") from exc


def _finish(out_dir: str, failures: list) -> int:
    _write_json(os.path.join(out_dir, "failures.json"), failures)
    if failures:
        print(f"{len(failures)} failing verdict(s); see {out_dir}/failures.json")
        return 1
    print("all verdicts pass")
    return 0


def _batch_failures(summaries) -> list:
    out = []
    for rec in summaries:
        if rec["pass"] is False:
            out.append(
                _failure(
                    instance=rec["instance"],
                    algo=rec["algo"],
                    detail=(
                        f"mean final regret {rec['mean_final_regret']:.3f} exceeds "
                        f"{rec['bound_kind']} bound {rec['bound']:.3f}"
                    ),
                )
            )
    return out


def cmd_run(config: ExperimentConfig, out_dir: str, jobs: int) -> int:
    rc = RunConfig(
        instances=config.instances,
        algorithms=config.algorithms,
        horizon=config.horizon,
        seeds=config.seeds,
        out_dir=out_dir,
        write_transcripts=config.transcripts,
        jobs=jobs,
    )
    summaries = run_batch(rc)
    for rec in summaries:
        bound = "-" if rec["bound"] is None else f"{rec['bound']:.2f}"
        verdict = {True: "pass", False: "FAIL", None: "n/a"}[rec["pass"]]
        print(
            f"{rec['algo']:>12} {rec['instance']:<28} "
            f"regret {rec['mean_final_regret']:10.3f} ± {rec['ci95']:.3f} "
            f"bound {bound:>9} {verdict}"
        )
    return _finish(out_dir, _batch_failures(summaries))


def cmd_sweep(config: ExperimentConfig, out_dir: str, jobs: int) -> int:
    if not config.sweep_horizons:
        raise ConfigError('sweep: config has no sweep.T grid')
    failures = []
    rows = []
    for horizon in config.sweep_horizons:
        sub = os.path.join(out_dir, f"T{horizon}")
        rc = RunConfig(
            instances=config.instances,
            algorithms=config.algorithms,
            horizon=horizon,
            seeds=config.seeds,
            out_dir=sub,
            write_transcripts=config.transcripts,
            jobs=jobs,
        )
        summaries = run_batch(rc)
        failures.extend(_batch_failures(summaries))
        for rec in summaries:
            series = f"{rec['algo']}:{rec['instance']}"
            rows.append((horizon, series, rec["mean_final_regret"]))
            if rec["bound"] is not None:
                rows.append((horizon, series + ":bound", rec["bound"]))
        print(f"T={horizon}: {len(summaries)} cells done")
    path = os.path.join(out_dir, "sweep.csv")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "series", "value"))
            w.writerows(rows)
    except OSError as exc:
        engine._mark_partial(path)
        raise SinkError(f"cannot write {path}: {exc}") from exc
    return _finish(out_dir, failures)


def cmd_verify(config: ExperimentConfig, out_dir: str, tol: Optional[float]) -> int:
    failures = []
    results = []
    for spec, inst in zip(config.instance_specs, config.instances):
        expected = spec.get("expect_independent", True)
        report = check_independence(inst, tol=tol)
        ok = report.independent == expected
        results.append(
            {
                "instance": inst.name,
                "independent": report.independent,
                "expected_independent": expected,
                "worst_violation": report.worst_violation,
                "witness": list(report.witness) if report.witness else None,
                "tol": report.tol,
                "exact": report.exact,
                "pass": ok,
            }
        )
        state = "independent" if report.independent else "violated"
        print(
            f"{inst.name:<28} {state:<11} worst {report.worst_violation:.3e} "
            f"(tol {report.tol:.1e}, {'exact' if report.exact else 'monte carlo'})"
            + ("" if ok else "  UNEXPECTED")
        )
        if not ok:
            failures.append(
                _failure(
                    instance=inst.name,
                    detail=f"expected independent={expected}, "
                    f"measured {state} with worst violation {report.worst_violation}"
                    + (f" at pairs {report.witness}" if report.witness else ""),
                )
            )
    _write_json(os.path.join(out_dir, "verify.json"), results)
    return _finish(out_dir, failures)


def cmd_couple(config: Optional[ExperimentConfig], out_dir: str, tol: Optional[float]) -> int:
    grid = dict(DEFAULT_COUPLE_GRID)
    if config is not None and config.couple is not None:
        grid.update(config.couple)
    if tol is None:
        tol = float(grid.get("tol", 1e-9))
    instances = [instance_from_spec(s) for s in grid["instances"]]
    failures = []
    results = []
    for inst in instances:
        for horizon in grid["horizons"]:
            for seed in grid["seeds"]:
                report = couple_check(inst, horizon, seed, tol=tol)
                results.append(
                    {
                        "instance": inst.name,
                        "horizon": horizon,
                        "seed": seed,
                        "pass": report.passed,
                        "max_weight_divergence": report.max_weight_divergence,
                        "max_law_divergence": report.max_law_divergence,
                        "first_bad_round": report.first_bad_round,
                    }
                )
                if not report.passed:
                    failures.append(
                        _failure(
                            instance=inst.name,
                            algo="p2exp4/lifted_exp4",
                            seed=seed,
                            round_=report.first_bad_round,
                            detail=(
                                f"T={horizon}: weight divergence "
                                f"{report.max_weight_divergence:.3e}, law divergence "
                                f"{report.max_law_divergence:.3e} (tol {tol:.1e})"
                            ),
                        )
                    )
    worst_w = max(r["max_weight_divergence"] for r in results)
    worst_l = max(r["max_law_divergence"] for r in results)
    print(
        f"{len(results)} couple cells: worst weight divergence {worst_w:.3e}, "
        f"worst law divergence {worst_l:.3e} (tol {tol:.1e})"
    )
    _write_json(os.path.join(out_dir, "couple.json"), results)
    return _finish(out_dir, failures)


def cmd_emit(out_dir: str) -> int:
    """Fold transcripts into long-format plot data (t, series, value)."""
    transcripts = os.path.join(out_dir, "transcripts.csv")
    summary_path = os.path.join(out_dir, "summary.jsonl")
    if not os.path.exists(transcripts):
        raise ConfigError(f"emit: no transcripts at {transcripts} (run with transcripts on)")
    curves: dict = {}
    counts: dict = {}
    horizon = 0
    with open(transcripts, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["algo"], row["instance"])
            t = int(row["t"])
            horizon = max(horizon, t)
            if key not in curves:
                curves[key] = {}
                counts[key] = {}
            curves[key][t] = curves[key].get(t, 0.0) + float(row["cum_pseudo_regret"])
            counts[key][t] = counts[key].get(t, 0) + 1
    bounds = {}
    if os.path.exists(summary_path):
        with open(summary_path) as fh:
            for line in fh:
                rec = json.loads(line)
                if rec.get("bound") is not None:
                    bounds[(rec["algo"], rec["instance"])] = (
                        rec["bound_kind"],
                        rec["bound"],
                    )
    path = os.path.join(out_dir, "plotdata.csv")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "series", "value"))
            for key in sorted(curves):
                series = f"{key[0]}:{key[1]}"
                for t in sorted(curves[key]):
                    w.writerow((t, series, curves[key][t] / counts[key][t]))
                if key in bounds:
                    kind, bound = bounds[key]
                    scale = bound / math.sqrt(horizon)
                    for t in sorted(curves[key]):
                        w.writerow((t, f"{series}:bound", scale * math.sqrt(t)))
    except OSError as exc:
        engine._mark_partial(path)
        raise SinkError(f"cannot write {path}: {exc}") from exc
    print(f"plot data for {len(curves)} series written to {path}")
    return 0


# --- argument plumbing --------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duobandit",
        description="Two-player bandit experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("run", True),
        ("sweep", True),
        ("verify", True),
        ("couple", False),
        ("emit", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="config JSON path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seeds", default=None, help="seed count n, a:b range, or list")
        p.add_argument("--jobs", type=int, default=None, help="parallel episodes")
        p.add_argument("--tol", type=float, default=None, help="verdict tolerance")
    return parser


def _seeds_from_flag(text: str) -> tuple:
    if ":" in text:
        lo, hi = text.split(":", 1)
        seeds = tuple(range(int(lo), int(hi)))
    elif "," in text:
        seeds = tuple(int(s) for s in text.split(","))
    else:
        seeds = tuple(range(int(text)))
    if not seeds:
        raise ConfigError(f"--seeds {text!r} names no seeds")
    return seeds


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = None
        if args.config is not None:
            config = parse_config(args.config)
            if args.seeds is not None:
                config = dataclasses.replace(config, seeds=_seeds_from_flag(args.seeds))
        out_dir = args.out
        if out_dir is None and config is not None:
            out_dir = config.out
        if out_dir is None:
            out_dir = os.environ.get(OUT_ENV_VAR)
        if out_dir is None:
            out_dir = "out"
        os.makedirs(out_dir, exist_ok=True)
        jobs = args.jobs if args.jobs is not None else (config.jobs if config else 1)

        if args.command == "run":
            return cmd_run(config, out_dir, jobs)
        if args.command == "sweep":
            return cmd_sweep(config, out_dir, jobs)
        if args.command == "verify":
            return cmd_verify(config, out_dir, args.tol)
        if args.command == "couple":
            return cmd_couple(config, out_dir, args.tol)
        if args.command == "emit":
            return cmd_emit(out_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValidationError, SinkError, engine.ModeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

"""Command-line front end: ``kgrass {synth,extract,cluster,eval,bench}``.

Config files are JSON objects with up to three sections, ``scenario``,
``pipeline`` and ``bench``; each command reads the sections it needs and
rejects unknown ones. ``KGRASS__section__key=value`` environment variables
override config entries.

Exit codes: 0 success, 2 validation error, 3 numerical/runtime error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, dataio
from . import config as cfgmod
from . import pipeline as pl
from .errors import InputError, NumericalError, ValidationError
from .features import Scope, extract_all
from .metrics import evaluate
from .synth import GroundTruth, generate

log = logging.getLogger("kgrass")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
SECTIONS = ("scenario", "pipeline", "bench")


# --------------------------------------------------------------------------- helpers


def load_config(path: Optional[str], environ=None) -> dict:
    raw = {} if path is None else cfgmod.load_json(path)
    if not isinstance(raw, dict):
        raise ValidationError("config file must hold a JSON object")
    raw = cfgmod.apply_env_overrides(raw, environ)
    extra = sorted(set(raw) - set(SECTIONS))
    if extra:
        raise ValidationError(f"config: unknown section(s) {', '.join(extra)}")
    return raw


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ValidationError(f"config lacks a '{name}' section")
    return cfg[name]


def _pipeline(cfg: dict, mode: Optional[str] = None, known=None) -> pl.PipelineConfig:
    d = dict(_section(cfg, "pipeline"))
    if mode is not None:
        d["mode"] = mode
    pc = cfgmod.pipeline_from_dict(d)
    if known is not None:
        pc = dataclasses.replace(pc, known_states=known)
    return pc


def _load_partition(path) -> pl.StatePartition:
    d = cfgmod.load_json(path)
    if isinstance(d, dict) and "partition" in d:
        d = d["partition"]
    if not isinstance(d, dict) or "segments" not in d:
        raise ValidationError(f"{path}: no 'segments' found")
    return pl.StatePartition.from_dict({"segments": d["segments"]})


def _load_labels(path) -> np.ndarray:
    """Labels from a cluster output, a partition/truth file or a bare ``{"labels": [...]}``."""
    d = cfgmod.load_json(path)
    if isinstance(d, list):
        return np.asarray(d)
    if "labels" in d:
        return np.asarray(d["labels"])
    if "partition" in d:
        d = d["partition"]
    if "segments" in d:
        return pl.StatePartition.from_dict({"segments": d["segments"]}).sample_labels()
    raise ValidationError(f"{path}: no labels, partition or segments found")


def _labeling_out(lab) -> dict:
    items = [
        dataclasses.asdict(p) if dataclasses.is_dataclass(p) else p for p in lab.items
    ]
    return {"labels": [int(v) for v in lab.labels], "items": items,
            "diagnostics": [str(d) for d in lab.diagnostics]}


def result_to_dict(mode: pl.Mode, result) -> dict:
    if mode is pl.Mode.STATES:
        wl, part = result
        return {"mode": mode.value, "partition": part.as_dict(), "window_labels": _labeling_out(wl)}
    if mode is pl.Mode.COMMUNITIES:
        return {
            "mode": mode.value,
            "partition": result.partition.as_dict(),
            "communities": {str(s): lab.as_dict() for s, lab in result.node_labels.items()},
        }
    lab, part = result
    return {"mode": mode.value, "partition": part.as_dict(), "feature_labels": _labeling_out(lab)}


def score(mode: pl.Mode, result, truth: GroundTruth, config: pl.PipelineConfig) -> dict:
    if mode is pl.Mode.STATES:
        return pl.score_states(result[1], truth.sample_states())
    if mode is pl.Mode.COMMUNITIES:
        s = pl.score_communities(result, truth)
        return {"accuracy": s["accuracy"], "nmi": s["nmi"]}
    return pl.score_sequences(result[0], truth, config.per_node_window)


# --------------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    scenario = cfgmod.scenario_from_dict(_section(cfg, "scenario"), seed=args.seed)
    panel, truth = generate(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_panel_csv(panel, out / "panel.csv")
    dataio.write_json(truth.as_dict(), out / "truth.json")
    log.info("wrote %d x %d panel to %s", panel.n_nodes, panel.n_samples, out)
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = load_config(args.config)
    pc = _pipeline(cfg)
    panel = dataio.read_panel_csv(args.panel)
    if Scope(args.scope) is Scope.NETWORK:
        recs = extract_all(panel, pc.window, pc.kernel, full=True)
    else:
        recs = extract_all(panel, pc.per_node_window, pc.per_node_kernel, full=True)
    n = dataio.write_features_jsonl(recs, args.out)
    log.info("wrote %d feature records to %s", n, args.out)
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = load_config(args.config)
    known = _load_partition(args.known_states) if args.known_states else None
    pc = _pipeline(cfg, args.mode, known)
    panel = dataio.read_panel_csv(args.panel)
    result = pl.run(panel, pc)
    dataio.write_json(result_to_dict(pc.mode, result), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate(_load_labels(args.pred), _load_labels(args.truth))
    dataio.write_json(report.as_dict(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- bench


def run_trial(job: dict) -> dict:
    """Generate, cluster and score one (dataset, seed) pair; failures are recorded, not raised."""
    name, seed = job["dataset"], job["seed"]
    entry = {"dataset": name, "seed": seed}
    try:
        scenario = cfgmod.scenario_from_dict(job["scenario"], seed=seed)
        panel, truth = generate(scenario)
        known = pl.StatePartition(truth.segments) if job["known_states"] else None
        pc = _pipeline({"pipeline": job["pipeline"]}, job["mode"], known)
        result = pl.run(panel, pc)
        entry.update(status="ok", metrics=score(pc.mode, result, truth, pc),
                     output=result_to_dict(pc.mode, result))
    except Exception as exc:  # recorded per trial, aggregated over successes
        entry.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return entry


def aggregate(trials: list) -> dict:
    """Mean and std per (dataset, metric) over successful trials; std is 0 for one trial."""
    out: dict = {}
    for name in dict.fromkeys(t["dataset"] for t in trials):
        ok = [t for t in trials if t["dataset"] == name and t["status"] == "ok"]
        failed = sum(1 for t in trials if t["dataset"] == name and t["status"] != "ok")
        metrics: dict = {}
        for key in (ok[0]["metrics"] if ok else {}):
            vals = np.array([t["metrics"][key] for t in ok], dtype=float)
            std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
            metrics[key] = {"mean": float(vals.mean()), "std": std, "n": len(vals)}
        out[name] = {"metrics": metrics, "n_ok": len(ok), "n_failed": failed}
    return out


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    bench = dict(_section(cfg, "bench"))
    cfgmod._check_keys(bench, ("datasets", "mode", "known_states", "seeds"), "bench")
    if args.trials is not None and args.trials < 1:
        raise ValidationError("--trials must be >= 1")
    if args.seed is not None or args.trials is not None or "seeds" not in bench:
        base = 0 if args.seed is None else args.seed
        seeds = list(range(base, base + (args.trials or 1)))
    else:
        seeds = [int(s) for s in bench["seeds"]]
    mode = args.mode or bench.get("mode") or _section(cfg, "pipeline").get("mode", "states")
    datasets = bench.get("datasets")
    if not datasets:
        raise ValidationError("bench: 'datasets' must list at least one scenario")
    jobs = []
    for ds in datasets:
        cfgmod._check_keys(ds, ("name", "scenario"), "bench.datasets[]")
        for seed in seeds:
            jobs.append({
                "dataset": str(ds["name"]), "scenario": ds["scenario"], "seed": seed,
                "pipeline": _section(cfg, "pipeline"), "mode": mode,
                "known_states": bool(bench.get("known_states", False)),
            })
    _pipeline(cfg, mode)  # fail fast on a bad pipeline section
    threads = args.threads or os.cpu_count() or 1
    if threads == 1 or len(jobs) == 1:
        trials = [run_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(run_trial, jobs))
    for t in trials:
        if t["status"] != "ok":
            log.warning("trial %s seed %s failed: %s", t["dataset"], t["seed"], t["error"])
    manifest = {
        "tool_version": __version__,
        "config_hash": hashlib.sha256(cfgmod.canonical_json(cfg).encode()).hexdigest(),
        "mode": mode,
        "seeds": seeds,
        "trials": trials,
        "aggregate": aggregate(trials),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_json(manifest, out / "manifest.json")
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "metric", "mean", "std", "n"])
        for name, agg in manifest["aggregate"].items():
            for metric, v in agg["metrics"].items():
                w.writerow([name, metric, repr(v["mean"]), repr(v["std"]), v["n"]])
    return EXIT_OK


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kgrass", description=__doc__.split("\n")[0])
    p.add_argument("--verbose", "-v", action="count", default=0)
    p.add_argument("--version", action="version", version=f"kgrass {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="simulate a scenario into panel.csv + truth.json")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", help="dump Grassmannian features as JSONL")
    s.add_argument("panel")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--scope", choices=[x.value for x in Scope], default="network")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("cluster", help="run one clustering mode on a panel")
    s.add_argument("panel")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=[m.value for m in pl.Mode])
    s.add_argument("--known-states", help="partition or truth JSON; skips state estimation")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("eval", help="score predicted labels against truth")
    s.add_argument("pred")
    s.add_argument("truth")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="repeated generate/cluster/eval trials")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int, help="first seed; trials use seed, seed+1, ...")
    s.add_argument("--mode", choices=[m.value for m in pl.Mode])
    s.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ValidationError as exc:  # includes InputError and RangeError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

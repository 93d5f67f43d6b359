"""JSON configuration for pipelines, scenarios and benchmarks.

Every section mirrors a dataclass; unknown keys are rejected so that typos in
experiment grids fail loudly. Environment variables of the form
``KGRASS__section__key=value`` override entries before parsing (``value`` is
read as JSON when possible, otherwise kept as a string).
"""
from __future__ import annotations

import copy
import dataclasses
import json
import os
from typing import Any, Mapping, Optional

from . import kernels
from .errors import ValidationError
from .features import WindowConfig
from .gct import GctParams, LouvainBackend, SpectralBackend
from .pipeline import PipelineConfig, StatePartition
from .synth import ScenarioSpec, StateSpec, reference_dataset

__all__ = [
    "ENV_PREFIX",
    "apply_env_overrides",
    "load_json",
    "pipeline_from_dict",
    "pipeline_to_dict",
    "scenario_from_dict",
    "canonical_json",
]

ENV_PREFIX = "KGRASS__"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_json(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def apply_env_overrides(cfg: dict, environ: Optional[Mapping[str, str]] = None) -> dict:
    """Return a copy of ``cfg`` with ``KGRASS__a__b=v`` setting ``cfg["a"]["b"] = v``."""
    environ = os.environ if environ is None else environ
    out = copy.deepcopy(cfg)
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].split("__")
        if not all(path):
            raise ValidationError(f"malformed override variable {key}")
        try:
            value = json.loads(environ[key])
        except json.JSONDecodeError:
            value = environ[key]
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(f"{key} descends into a non-section value")
        node[path[-1]] = value
    return out


def _check_keys(d: Mapping, allowed, where: str) -> None:
    if not isinstance(d, Mapping):
        raise ValidationError(f"{where}: expected an object, got {type(d).__name__}")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ValidationError(f"{where}: unknown key(s) {', '.join(extra)}")


def _fields(cls) -> list[str]:
    return [f.name for f in dataclasses.fields(cls)]


def _build(cls, d: Mapping, where: str, **special):
    _check_keys(d, _fields(cls), where)
    kw = dict(d)
    kw.update({k: v for k, v in special.items() if k in d})
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


# --------------------------------------------------------------------------- pipeline


def _window_from_dict(d, where) -> WindowConfig:
    return _build(WindowConfig, d, where)


def _backend_from_dict(d, where):
    _check_keys(d, ("kind", "resolution", "k", "seed"), where)
    kind = d.get("kind", "louvain")
    rest = {k: v for k, v in d.items() if k != "kind"}
    if kind == "louvain":
        return _build(LouvainBackend, rest, where)
    if kind == "spectral":
        return _build(SpectralBackend, rest, where)
    raise ValidationError(f"{where}: unknown backend kind {kind!r}")


def _backend_to_dict(b) -> dict:
    if isinstance(b, LouvainBackend):
        return {"kind": "louvain", "resolution": b.resolution, "seed": b.seed}
    return {"kind": "spectral", "k": b.k, "seed": b.seed}


def _gct_from_dict(d, where) -> GctParams:
    backend = _backend_from_dict(d["backend"], f"{where}.backend") if "backend" in d else None
    return _build(GctParams, d, where, backend=backend)


def _gct_to_dict(g: GctParams) -> dict:
    d = dataclasses.asdict(g)
    d["affinity_support"] = g.affinity_support.value
    d["backend"] = _backend_to_dict(g.backend)
    return d


def _kernel(d, where):
    try:
        return kernels.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def pipeline_from_dict(d: Mapping) -> PipelineConfig:
    _check_keys(d, _fields(PipelineConfig), "pipeline")
    if "window" not in d:
        raise ValidationError("pipeline: missing required section 'window'")
    kw: dict = {"window": _window_from_dict(d["window"], "pipeline.window")}
    if "kernel" in d:
        kw["kernel"] = _kernel(d["kernel"], "pipeline.kernel")
    if "gct" in d:
        kw["gct"] = _gct_from_dict(d["gct"], "pipeline.gct")
    for key in ("mode", "min_segment_len"):
        if key in d:
            kw[key] = d[key]
    if d.get("known_states") is not None:
        kw["known_states"] = StatePartition.from_dict(d["known_states"])
    if d.get("node_window") is not None:
        kw["node_window"] = _window_from_dict(d["node_window"], "pipeline.node_window")
    if d.get("node_kernel") is not None:
        kw["node_kernel"] = _kernel(d["node_kernel"], "pipeline.node_kernel")
    if d.get("node_gct") is not None:
        kw["node_gct"] = _gct_from_dict(d["node_gct"], "pipeline.node_gct")
    return PipelineConfig(**kw)


def _window_to_dict(w: WindowConfig) -> dict:
    d = dataclasses.asdict(w)
    d["scope"] = w.scope.value
    return d


def pipeline_to_dict(c: PipelineConfig) -> dict:
    return {
        "window": _window_to_dict(c.window),
        "kernel": kernels.to_dict(c.kernel),
        "gct": _gct_to_dict(c.gct),
        "mode": c.mode.value,
        "min_segment_len": c.min_segment_len,
        "known_states": None if c.known_states is None else c.known_states.as_dict(),
        "node_window": None if c.node_window is None else _window_to_dict(c.node_window),
        "node_kernel": None if c.node_kernel is None else kernels.to_dict(c.node_kernel),
        "node_gct": None if c.node_gct is None else _gct_to_dict(c.node_gct),
    }


# --------------------------------------------------------------------------- scenarios


def scenario_from_dict(d: Mapping, seed: Optional[int] = None) -> ScenarioSpec:
    """Either a reference preset ``{"dataset": k, ...}`` or an explicit scenario.

    ``seed`` (when given) replaces the scenario seed; for explicit scenarios it
    also re-derives every state seed so that repeated trials differ.
    """
    if "dataset" in d:
        _check_keys(d, ("dataset", "duration", "blocks", "seed"), "scenario")
        s = d.get("seed", 0) if seed is None else seed
        return reference_dataset(int(d["dataset"]), seed=int(s), duration=int(d.get("duration", 150)),
                             blocks=d.get("blocks"))
    _check_keys(d, _fields(ScenarioSpec), "scenario")
    if "states" not in d or "node_count" not in d:
        raise ValidationError("scenario: 'node_count' and 'states' are required")
    states = []
    for k, sd in enumerate(d["states"]):
        sd = dict(sd)
        if "noise_sigma_db" in sd and sd["noise_sigma_db"] is None:
            sd["noise_sigma_db"] = float("-inf")
        if seed is not None:
            sd["seed"] = int(seed) * 1009 + k + 1
        states.append(_build(StateSpec, sd, f"scenario.states[{k}]"))
    kw = {k: v for k, v in d.items() if k != "states"}
    if seed is not None:
        kw["seed"] = int(seed)
    return _build(ScenarioSpec, {**kw, "states": states}, "scenario")

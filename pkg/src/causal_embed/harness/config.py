"""Experiment configuration files (YAML) with line-numbered diagnostics.

A config has a handful of top-level scalars and five sections::

    experiment: backdoor-dsprite
    seed: 0
    replications: 10
    workers: 1
    output_dir: runs/backdoor
    dgp:        {n, resolution, sprite, half_width, pixel_noise_std, graph, card,
                 concentration, scm_seed, path}
    stage1:     TrainConfig fields
    stage2:     Stage2Config fields
    estimation: {baseline, stage2_split, heldout_embedding}
    queries:    {parameters, grid, a_prime, points, mc_samples, oracle_seed}

Every field has a default; unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..dgp import SPRITE_KINDS
from ..discrete import GRAPHS, graph_parameters
from ..errors import ConfigError
from ..stage1 import TrainConfig
from ..stage2 import Stage2Config

KINDS = ("backdoor-dsprite", "frontdoor-dsprite", "discrete-toy", "csv-backdoor")


@dataclass
class DGPConfig:
    n: int = 5000
    resolution: int = 16
    sprite: str = "square"
    half_width: int | None = None
    pixel_noise_std: float = 0.1
    # discrete-toy
    graph: str = "backdoor"
    card: int = 2
    concentration: float = 2.0
    scm_seed: int = 0
    # csv-backdoor
    path: str | None = None


@dataclass
class EstimationConfig:
    # also run the untrained random-feature baseline
    baseline: bool = True
    # fit stage 1 and stage 2 on disjoint halves
    stage2_split: bool = False
    # hold out half the sample for the marginal embeddings
    heldout_embedding: bool = False


@dataclass
class QueryConfig:
    parameters: tuple[str, ...] | None = None
    # per-axis sprite latents; the query grid is their Cartesian square
    grid: tuple[float, ...] | None = None
    a_prime: tuple[float, ...] | None = None
    # explicit treatment vectors (csv-backdoor)
    points: tuple[tuple[float, ...], ...] | None = None
    mc_samples: int = 100_000
    oracle_seed: int = 0


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    replications: int = 1
    workers: int = 1
    output_dir: str = "runs/out"
    dgp: DGPConfig = field(default_factory=DGPConfig)
    stage1: TrainConfig = field(default_factory=TrainConfig)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    queries: QueryConfig = field(default_factory=QueryConfig)
    source: str = "<config>"

    def echo(self) -> dict:
        """Everything that can change results (no paths, no worker count)."""
        d = dataclasses.asdict(self)
        for k in ("output_dir", "workers", "source"):
            d.pop(k)
        return _jsonable(d)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


# field kinds: int, float, bool, str, opt_int, opt_float, opt_str, floats, ints, strs, points, dims
_TOP = {"experiment": "str", "seed": "int", "replications": "int", "workers": "int", "output_dir": "str"}
_SECTIONS = {
    "dgp": (DGPConfig, {
        "n": "int", "resolution": "int", "sprite": "str", "half_width": "opt_int",
        "pixel_noise_std": "float", "graph": "str", "card": "int", "concentration": "float",
        "scm_seed": "int", "path": "opt_str",
    }),
    "stage1": (TrainConfig, {
        "ridge_lambda": "opt_float", "step_size": "float", "beta1": "float", "beta2": "float",
        "eps": "float", "epochs": "int", "batch_size": "int", "feature_dim": "int",
        "tabular_hidden": "ints", "image_hidden": "ints", "image_threshold": "int",
        "output_activation": "str", "standardize": "bool", "feature_dims": "dims",
    }),
    "stage2": (Stage2Config, {
        "hidden": "ints", "step_size": "float", "beta1": "float", "beta2": "float", "eps": "float",
        "epochs": "int", "batch_size": "int", "weight_decay": "float", "standardize": "bool",
        "image_threshold": "int",
    }),
    "estimation": (EstimationConfig, {"baseline": "bool", "stage2_split": "bool", "heldout_embedding": "bool"}),
    "queries": (QueryConfig, {
        "parameters": "opt_strs", "grid": "opt_floats", "a_prime": "opt_floats", "points": "opt_points",
        "mc_samples": "int", "oracle_seed": "int",
    }),
}


class _Where:
    """Maps dotted field paths to 1-based source lines."""

    def __init__(self, source: str, node) -> None:
        self.source = source
        self.lines: dict[str, int] = {}
        if node is not None:
            self._walk(node, "")

    def _walk(self, node, prefix: str) -> None:
        self.lines.setdefault(prefix, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{prefix}.{k.value}" if prefix else str(k.value)
                self.lines[key] = k.start_mark.line + 1
                self._walk(v, key)

    def error(self, path: str, msg: str) -> ConfigError:
        probe = path
        while probe and probe not in self.lines:
            probe = probe.rpartition(".")[0]
        line = self.lines.get(probe)
        loc = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{loc}: {path or 'config'}: {msg}" if path else f"{loc}: {msg}")


def _coerce(kind: str, v, path: str, where: _Where):
    def bad(expected: str):
        return where.error(path, f"expected {expected}, got {v!r}")

    if kind.startswith("opt_"):
        return None if v is None else _coerce(kind[4:], v, path, where)
    if kind == "bool":
        if not isinstance(v, bool):
            raise bad("true or false")
        return v
    if kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            raise bad("an integer")
        return v
    if kind == "float":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise bad("a number")
        if not np.isfinite(v):
            raise bad("a finite number")
        return float(v)
    if kind == "str":
        if not isinstance(v, str):
            raise bad("a string")
        return v
    if kind in ("ints", "floats", "strs"):
        if not isinstance(v, list):
            raise bad("a list")
        return tuple(_coerce(kind[:-1], x, f"{path}[{i}]", where) for i, x in enumerate(v))
    if kind == "points":
        if not isinstance(v, list):
            raise bad("a list of treatment vectors")
        return tuple(
            _coerce("floats", x if isinstance(x, list) else [x], f"{path}[{i}]", where) for i, x in enumerate(v)
        )
    if kind == "dims":
        if not isinstance(v, dict):
            raise bad("a mapping of role to feature dimension")
        return {str(k): _coerce("int", x, f"{path}.{k}", where) for k, x in v.items()}
    raise AssertionError(kind)


def _section(name: str, raw, where: _Where):
    cls, schema = _SECTIONS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise where.error(name, "expected a mapping")
    kwargs = {}
    for k, v in raw.items():
        path = f"{name}.{k}"
        if k not in schema:
            raise where.error(path, f"unknown key (allowed: {', '.join(sorted(schema))})")
        kwargs[k] = _coerce(schema[k], v, path, where)
    try:
        return cls(**kwargs)
    except ValueError as e:
        msg = str(e)
        field_name = msg.split(" ", 1)[0]
        return_path = f"{name}.{field_name}" if field_name in schema else name
        raise where.error(return_path, msg) from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{loc}: malformed YAML: {getattr(e, 'problem', e)}") from None
    where = _Where(source, node)
    if not isinstance(raw, dict):
        raise where.error("", "top level must be a mapping")
    top = {}
    sections = {}
    for k, v in raw.items():
        if k in _TOP:
            top[k] = _coerce(_TOP[k], v, k, where)
        elif k in _SECTIONS:
            sections[k] = _section(k, v, where)
        else:
            allowed = sorted([*_TOP, *_SECTIONS])
            raise where.error(str(k), f"unknown key (allowed: {', '.join(allowed)})")
    if "experiment" not in top:
        raise where.error("", "missing required key 'experiment'")
    cfg = ExperimentConfig(**top, **sections, source=source)
    validate(cfg, where)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from None
    return parse_config(text, str(path))


def apply_overrides(cfg: ExperimentConfig, seed=None, replications=None, workers=None, out=None) -> ExperimentConfig:
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if replications is not None:
        changes["replications"] = replications
    if workers is not None:
        changes["workers"] = workers
    if out is not None:
        changes["output_dir"] = str(out)
    cfg = dataclasses.replace(cfg, **changes)
    validate(cfg, _Where("command line", None))
    return cfg


def default_parameters(cfg: ExperimentConfig) -> tuple[str, ...]:
    kind = cfg.experiment
    if kind == "backdoor-dsprite" or kind == "csv-backdoor":
        return ("ATE",)
    if kind == "frontdoor-dsprite":
        return ("ATT",)
    return graph_parameters(cfg.dgp.graph)


def default_grid(kind: str) -> tuple[float, ...]:
    if kind == "backdoor-dsprite":
        return (0.2, 0.5, 0.8)
    return tuple(float(v) for v in np.linspace(0.0, 1.0, 11))


def validate(cfg: ExperimentConfig, where: _Where) -> None:
    if cfg.experiment not in KINDS:
        raise where.error("experiment", f"must be one of {', '.join(KINDS)}, got {cfg.experiment!r}")
    if cfg.replications < 1:
        raise where.error("replications", f"must be >= 1, got {cfg.replications}")
    if cfg.workers < 1:
        raise where.error("workers", f"must be >= 1, got {cfg.workers}")
    if cfg.seed < 0:
        raise where.error("seed", f"must be non-negative, got {cfg.seed}")
    d, q = cfg.dgp, cfg.queries
    if d.n < 2:
        raise where.error("dgp.n", f"must be >= 2, got {d.n}")
    if d.sprite not in SPRITE_KINDS:
        raise where.error("dgp.sprite", f"must be one of {', '.join(SPRITE_KINDS)}")
    if d.graph not in GRAPHS:
        raise where.error("dgp.graph", f"must be one of {', '.join(GRAPHS)}")
    if d.card < 2:
        raise where.error("dgp.card", "must be >= 2")
    if cfg.experiment == "csv-backdoor" and not d.path:
        raise where.error("dgp.path", "csv-backdoor needs a data file")
    if cfg.stage1.output_activation not in ("identity", "ramp"):
        raise where.error("stage1.output_activation", "must be identity or ramp")
    if q.mc_samples < 10_000:
        raise where.error("queries.mc_samples", "must be >= 10000")
    allowed = {
        "backdoor-dsprite": ("ATE",),
        "frontdoor-dsprite": ("ATE", "ATT"),
        "csv-backdoor": ("ATE", "ATT"),
        "discrete-toy": graph_parameters(d.graph),
    }[cfg.experiment]
    for p in q.parameters or ():
        if p not in allowed:
            raise where.error("queries.parameters", f"{p!r} is not available for {cfg.experiment} (use {allowed})")
    if q.parameters is not None and not q.parameters:
        raise where.error("queries.parameters", "list of parameters is empty")
    if q.grid is not None and not q.grid:
        raise where.error("queries.grid", "query grid is empty")
    if cfg.experiment.endswith("dsprite") and q.grid is not None:
        if any(not 0.0 <= v <= 1.0 for v in q.grid):
            raise where.error("queries.grid", "latents must lie in [0, 1]")
    if cfg.experiment.endswith("dsprite"):
        if q.a_prime and (len(q.a_prime) != 2 or any(not 0.0 <= v <= 1.0 for v in q.a_prime)):
            raise where.error("queries.a_prime", "needs two latents (posX, posY) in [0, 1]")
    if cfg.experiment == "csv-backdoor":
        if not q.points:
            raise where.error("queries.points", "query grid is empty")
        if "ATT" in (q.parameters or ("ATE",)) and not q.a_prime:
            raise where.error("queries.a_prime", "ATT queries need a conditioning treatment")

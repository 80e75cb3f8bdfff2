"""Run configuration: one JSON file describing data, solver, and experiment.

Unknown keys anywhere in the document are hard errors, reported with their
key path, so typos never silently fall back to defaults.

Schema (defaults in parentheses):

    {
      "synth": {"num_devices", "clusters", "dim", "samples_per_device",
                "family" ("linear"), "sigma" (1.0), "corruption" (0.0)},
      "data_dir": "path",              # exactly one of synth / data_dir
      "solver": {"rho" (1.0), "lambda" (0.0), "kappa" (1.0),
                 "batch_size" (10), "iterations" (2000), "norm" ("l1"),
                 "variant" ("sgd_step"), "projection_radius" (null),
                 "lambda_policy" ("fixed" | "cv_first_rep")},
      "availability": {"mode" ("independent"), "p" (1.0), "known" (true)},
      "selection": {"alpha" (0.05), "candidates" ("graph" | "all_pairs")},
      "methods": [...],                # ("local","global","oracle",
                                       #  "fed_admm","fed_admm_es")
      "sweep": {"num_devices": [...], "samples_per_device": [...],
                "corruption": [...], "lambda": [...]},
      "replications" (1),
      "ingest": {"family", "dim", "sigma" (1.0), "min_samples" (1),
                 "train_fraction" (2/3), "repeats" (50)},
      "seed" (0),
      "out_dir" ("results")
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .datasets import ConfigError
from .models import FAMILIES
from .penalty import NORMS

__all__ = ["ConfigError", "RunConfig", "parse_config", "config_hash"]

METHODS = (
    "local",
    "global",
    "oracle",
    "fed_admm",
    "fed_admm_es",
    "fed_admm_local_es",
)
DEFAULT_METHODS = ("local", "global", "oracle", "fed_admm", "fed_admm_es")
LAMBDA_POLICIES = ("fixed", "cv_first_rep")
SWEEP_AXES = ("num_devices", "samples_per_device", "corruption", "lambda")


def _require_keys(block: dict, allowed: set[str], path: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{path}.{key}: unknown key")


def _get(block: dict, key: str, kind, default, path: str, required: bool = False):
    if key not in block:
        if required:
            raise ConfigError(f"{path}.{key}: missing required key")
        return default
    value = block[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


@dataclass(frozen=True)
class SynthBlock:
    num_devices: int
    clusters: int
    dim: int
    samples_per_device: int
    family: str = "linear"
    sigma: float = 1.0
    corruption: float = 0.0


@dataclass(frozen=True)
class SolverBlock:
    rho: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    batch_size: int = 10
    iterations: int = 2000
    norm: str = "l1"
    variant: str = "sgd_step"
    projection_radius: float = math.inf
    lambda_policy: str = "fixed"


@dataclass(frozen=True)
class AvailabilityBlock:
    mode: str = "independent"
    p: float | tuple[float, ...] = 1.0
    known: bool = True


@dataclass(frozen=True)
class SelectionBlock:
    alpha: float = 0.05
    candidates: str = "graph"


@dataclass(frozen=True)
class IngestBlock:
    family: str
    dim: int
    sigma: float = 1.0
    min_samples: int = 1
    train_fraction: float = 2.0 / 3.0
    repeats: int = 50


@dataclass(frozen=True)
class RunConfig:
    synth: SynthBlock | None
    data_dir: str | None
    solver: SolverBlock
    availability: AvailabilityBlock
    selection: SelectionBlock
    methods: tuple[str, ...]
    sweep: dict[str, tuple] = field(default_factory=dict)
    replications: int = 1
    ingest: IngestBlock | None = None
    seed: int = 0
    out_dir: str = "results"
    raw: dict = field(default_factory=dict, repr=False)


def _parse_synth(block: dict) -> SynthBlock:
    path = "synth"
    _require_keys(
        block,
        {"num_devices", "clusters", "dim", "samples_per_device", "family", "sigma", "corruption"},
        path,
    )
    synth = SynthBlock(
        num_devices=_get(block, "num_devices", int, None, path, required=True),
        clusters=_get(block, "clusters", int, None, path, required=True),
        dim=_get(block, "dim", int, None, path, required=True),
        samples_per_device=_get(block, "samples_per_device", int, None, path, required=True),
        family=_get(block, "family", str, "linear", path),
        sigma=_get(block, "sigma", float, 1.0, path),
        corruption=_get(block, "corruption", float, 0.0, path),
    )
    if synth.family not in FAMILIES:
        raise ConfigError(f"synth.family: unknown family {synth.family!r}")
    if not 0.0 <= synth.corruption <= 1.0:
        raise ConfigError(f"synth.corruption: must lie in [0, 1], got {synth.corruption}")
    if synth.clusters > synth.num_devices:
        raise ConfigError("synth.clusters: cannot exceed synth.num_devices")
    for key in ("num_devices", "clusters", "dim", "samples_per_device"):
        if getattr(synth, key) < 1:
            raise ConfigError(f"synth.{key}: must be >= 1")
    return synth


def _parse_solver(block: dict) -> SolverBlock:
    path = "solver"
    _require_keys(
        block,
        {"rho", "lambda", "kappa", "batch_size", "iterations", "norm", "variant",
         "projection_radius", "lambda_policy"},
        path,
    )
    radius = block.get("projection_radius")
    if radius is None:
        radius = math.inf
    elif isinstance(radius, (int, float)) and not isinstance(radius, bool):
        radius = float(radius)
    else:
        raise ConfigError("solver.projection_radius: expected number or null")
    solver = SolverBlock(
        rho=_get(block, "rho", float, 1.0, path),
        lam=_get(block, "lambda", float, 0.0, path),
        kappa=_get(block, "kappa", float, 1.0, path),
        batch_size=_get(block, "batch_size", int, 10, path),
        iterations=_get(block, "iterations", int, 2000, path),
        norm=_get(block, "norm", str, "l1", path),
        variant=_get(block, "variant", str, "sgd_step", path),
        projection_radius=radius,
        lambda_policy=_get(block, "lambda_policy", str, "fixed", path),
    )
    if solver.rho <= 0:
        raise ConfigError("solver.rho: must be positive")
    if solver.lam < 0:
        raise ConfigError("solver.lambda: must be nonnegative")
    if solver.kappa <= 0:
        raise ConfigError("solver.kappa: must be positive")
    if solver.batch_size < 1:
        raise ConfigError("solver.batch_size: must be >= 1")
    if solver.iterations < 1:
        raise ConfigError("solver.iterations: must be >= 1")
    if solver.norm not in NORMS:
        raise ConfigError(f"solver.norm: must be one of {NORMS}")
    if solver.variant not in ("sgd_step", "proximal_step"):
        raise ConfigError("solver.variant: must be sgd_step or proximal_step")
    if solver.lambda_policy not in LAMBDA_POLICIES:
        raise ConfigError(f"solver.lambda_policy: must be one of {LAMBDA_POLICIES}")
    return solver


def _parse_availability(block: dict) -> AvailabilityBlock:
    path = "availability"
    _require_keys(block, {"mode", "p", "known"}, path)
    p_value = block.get("p", 1.0)
    if isinstance(p_value, list):
        p_parsed: float | tuple[float, ...] = tuple(float(v) for v in p_value)
        values = p_parsed
    elif isinstance(p_value, (int, float)) and not isinstance(p_value, bool):
        p_parsed = float(p_value)
        values = (p_parsed,)
    else:
        raise ConfigError("availability.p: expected number or list of numbers")
    for v in values:
        if not 0.0 < v <= 1.0:
            raise ConfigError(f"availability.p: probabilities must lie in (0, 1], got {v}")
    avail = AvailabilityBlock(
        mode=_get(block, "mode", str, "independent", path),
        p=p_parsed,
        known=_get(block, "known", bool, True, path),
    )
    if avail.mode not in ("independent", "shared_coin"):
        raise ConfigError("availability.mode: must be independent or shared_coin")
    return avail


def _parse_selection(block: dict) -> SelectionBlock:
    path = "selection"
    _require_keys(block, {"alpha", "candidates"}, path)
    selection = SelectionBlock(
        alpha=_get(block, "alpha", float, 0.05, path),
        candidates=_get(block, "candidates", str, "graph", path),
    )
    if not 0.0 < selection.alpha < 1.0:
        raise ConfigError("selection.alpha: must lie in (0, 1)")
    if selection.candidates not in ("graph", "all_pairs"):
        raise ConfigError("selection.candidates: must be graph or all_pairs")
    return selection


def _parse_ingest(block: dict) -> IngestBlock:
    path = "ingest"
    _require_keys(
        block, {"family", "dim", "sigma", "min_samples", "train_fraction", "repeats"}, path
    )
    ingest = IngestBlock(
        family=_get(block, "family", str, None, path, required=True),
        dim=_get(block, "dim", int, None, path, required=True),
        sigma=_get(block, "sigma", float, 1.0, path),
        min_samples=_get(block, "min_samples", int, 1, path),
        train_fraction=_get(block, "train_fraction", float, 2.0 / 3.0, path),
        repeats=_get(block, "repeats", int, 50, path),
    )
    if ingest.family not in FAMILIES:
        raise ConfigError(f"ingest.family: unknown family {ingest.family!r}")
    if not 0.0 < ingest.train_fraction < 1.0:
        raise ConfigError("ingest.train_fraction: must lie in (0, 1)")
    return ingest


def _parse_sweep(block: dict) -> dict[str, tuple]:
    _require_keys(block, set(SWEEP_AXES), "sweep")
    sweep: dict[str, tuple] = {}
    for axis in SWEEP_AXES:
        if axis not in block:
            continue
        values = block[axis]
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{axis}: expected a nonempty list")
        sweep[axis] = tuple(values)
    if not sweep:
        raise ConfigError("sweep: at least one axis must be given")
    for value in sweep.get("corruption", ()):
        if not 0.0 <= float(value) <= 1.0:
            raise ConfigError(f"sweep.corruption: must lie in [0, 1], got {value}")
    return sweep


def parse_config_dict(doc: dict) -> RunConfig:
    _require_keys(
        doc,
        {"synth", "data_dir", "solver", "availability", "selection", "methods",
         "sweep", "replications", "ingest", "seed", "out_dir"},
        "config",
    )
    has_synth = "synth" in doc
    has_dir = "data_dir" in doc
    if has_synth == has_dir:
        raise ConfigError("config: exactly one of synth and data_dir must be given")
    synth = _parse_synth(doc["synth"]) if has_synth else None
    data_dir = _get(doc, "data_dir", str, None, "config") if has_dir else None

    methods = doc.get("methods", list(DEFAULT_METHODS))
    if not isinstance(methods, list) or not methods:
        raise ConfigError("config.methods: expected a nonempty list")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"config.methods: unknown method {m!r}")

    replications = _get(doc, "replications", int, 1, "config")
    if replications < 1:
        raise ConfigError("config.replications: must be >= 1")

    return RunConfig(
        synth=synth,
        data_dir=data_dir,
        solver=_parse_solver(doc.get("solver", {})),
        availability=_parse_availability(doc.get("availability", {})),
        selection=_parse_selection(doc.get("selection", {})),
        methods=tuple(methods),
        sweep=_parse_sweep(doc["sweep"]) if "sweep" in doc else {},
        replications=replications,
        ingest=_parse_ingest(doc["ingest"]) if "ingest" in doc else None,
        seed=_get(doc, "seed", int, 0, "config"),
        out_dir=_get(doc, "out_dir", str, "results", "config"),
        raw=doc,
    )


def parse_config(path) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config_dict(doc)


def config_hash(config: RunConfig) -> str:
    """Short stable digest of the configuration document.

    The output directory is excluded: where results land does not change
    what experiment they came from.
    """
    import hashlib

    doc = {k: v for k, v in config.raw.items() if k != "out_dir"}
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

"""Experiment configuration: YAML files with strict key checking.

A config file has these top-level keys::

    scenario:      # ScenarioConfig fields; geometry is a nested mapping
      kind: piecewise_time
      geometry: {num_elements: 15, spacing: 0.1715, wave_speed: 343, frequency: 1000}
      horizon: 5000
    beamformers:   # roster, run in order
      - kind: sliding_mpdr
        params: {K: 128}
      - kind: osb
        label: osb
        params: {C: 4.8, tau: 5}
    trials: 20
    base_seed: 0
    outputs: {dir: results, traces: true}
    btr: {beamformer: osb, grid: [0, 180, 2], block: 10}

Unknown keys anywhere are rejected with the offending path and line number.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .scenarios import ArrayGeometry, ConfigError, ScenarioConfig

DELTA_AUTO = "auto"

# kind -> (required params, optional params with defaults)
_PENALTY = ("C", "c_rel")
BEAMFORMER_KINDS: Dict[str, Tuple[Tuple[str, ...], Dict[str, Any]]] = {
    "cbf": ((), {}),
    "batch_capon": ((), {"delta": DELTA_AUTO}),
    "adaptive_mvdr": ((), {"delta": DELTA_AUTO}),
    "gsc": ((), {"delta": DELTA_AUTO}),
    "sliding_mpdr": (("K",), {"delta": DELTA_AUTO}),
    "omniscient": ((), {"delta": 0.0}),
    "bsb": (_PENALTY, {"delta": DELTA_AUTO}),
    "osb": (
        _PENALTY,
        {"delta": DELTA_AUTO, "tau": 5, "max_candidates": 64, "cost": "posterior"},
    ),
    "osrls": (_PENALTY, {"delta": DELTA_AUTO, "tau": 5, "max_candidates": 64}),
}


@dataclass(frozen=True)
class BeamformerSpec:
    """One roster entry. ``params`` holds every parameter with defaults filled in."""

    kind: str
    params: Dict[str, Any]
    label: str

    @classmethod
    def make(cls, kind: str, label: Optional[str] = None, **params) -> "BeamformerSpec":
        if kind not in BEAMFORMER_KINDS:
            raise ConfigError(f"unknown beamformer kind {kind!r}")
        required, optional = BEAMFORMER_KINDS[kind]
        unknown = set(params) - set(required) - set(optional)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {kind}: {sorted(unknown)}")
        if required == _PENALTY:
            given = [k for k in _PENALTY if k in params]
            if len(given) != 1:
                raise ConfigError(f"{kind} needs exactly one of C or c_rel")
        else:
            missing = [k for k in required if k not in params]
            if missing:
                raise ConfigError(f"{kind} is missing required parameter(s) {missing}")
        full = {**optional, **params}
        _check_params(kind, full)
        if label is None:
            label = f"{kind}_{full['K']}" if kind == "sliding_mpdr" else kind
        return cls(kind, full, str(label))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "label": self.label, "params": dict(self.params)}


def _check_params(kind: str, params: Dict[str, Any]) -> None:
    delta = params.get("delta")
    if delta is not None and delta != DELTA_AUTO:
        if not isinstance(delta, (int, float)) or isinstance(delta, bool) or delta < 0:
            raise ConfigError(f"delta must be 'auto' or a non-negative number, got {delta!r}")
        if delta == 0 and kind != "omniscient":
            raise ConfigError("delta must be positive for data-driven beamformers")
    for key in ("C", "c_rel"):
        if key in params and not (_is_number(params[key]) and params[key] >= 0):
            raise ConfigError(f"{key} must be a non-negative number")
    for key in ("K", "max_candidates"):
        if key in params and not (_is_int(params[key]) and params[key] >= 1):
            raise ConfigError(f"{key} must be a positive integer")
    if "tau" in params and not (_is_int(params["tau"]) and params["tau"] >= 0):
        raise ConfigError("tau must be a non-negative integer")
    if "cost" in params and params["cost"] not in ("posterior", "prior"):
        raise ConfigError("cost must be 'posterior' or 'prior'")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "results"
    traces: bool = True


@dataclass(frozen=True)
class BtrSpec:
    """Bearing-time record request: which roster entry, angle grid, time averaging."""

    beamformer: Optional[str] = None
    grid: Tuple[float, float, float] = (0.0, 180.0, 2.0)
    block: int = 10

    def angles(self) -> List[float]:
        start, stop, step = self.grid
        n = int(round((stop - start) / step)) + 1
        return [start + i * step for i in range(n)]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    beamformers: Tuple[BeamformerSpec, ...]
    trials: int = 20
    base_seed: int = 0
    outputs: OutputSpec = field(default_factory=OutputSpec)
    btr: BtrSpec = field(default_factory=BtrSpec)

    def __post_init__(self):
        object.__setattr__(self, "beamformers", tuple(self.beamformers))
        self.validate()

    def validate(self) -> None:
        if not _is_int(self.trials) or self.trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        if not _is_int(self.base_seed) or self.base_seed < 0:
            raise ConfigError("base_seed must be a non-negative integer")
        if not self.beamformers:
            raise ConfigError("beamformer roster is empty")
        labels = [b.label for b in self.beamformers]
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        if dupes:
            raise ConfigError(f"duplicate beamformer labels {dupes}")
        if self.btr.beamformer is not None and self.btr.beamformer not in labels:
            raise ConfigError(f"btr.beamformer {self.btr.beamformer!r} is not in the roster")
        start, stop, step = self.btr.grid
        if not (step > 0 and stop >= start):
            raise ConfigError("btr.grid must be [start, stop, step] with step > 0")
        if self.btr.block < 1:
            raise ConfigError("btr.block must be >= 1")

    def spec(self, label: str) -> BeamformerSpec:
        for b in self.beamformers:
            if b.label == label:
                return b
        raise ConfigError(f"no beamformer labelled {label!r}")

    def with_overrides(
        self,
        trials: Optional[int] = None,
        base_seed: Optional[int] = None,
        horizon: Optional[int] = None,
        out_dir: Optional[str] = None,
    ) -> "ExperimentConfig":
        cfg = self
        if trials is not None:
            cfg = dataclasses.replace(cfg, trials=trials)
        if base_seed is not None:
            cfg = dataclasses.replace(cfg, base_seed=base_seed)
        if horizon is not None:
            cfg = dataclasses.replace(cfg, scenario=cfg.scenario.with_overrides(horizon=horizon))
        if out_dir is not None:
            cfg = dataclasses.replace(cfg, outputs=dataclasses.replace(cfg.outputs, dir=out_dir))
        return cfg

    def to_dict(self) -> Dict[str, Any]:
        scen = dataclasses.asdict(self.scenario)
        scen = {k: list(v) if isinstance(v, tuple) else v for k, v in scen.items()}
        return {
            "scenario": scen,
            "beamformers": [b.to_dict() for b in self.beamformers],
            "trials": self.trials,
            "base_seed": self.base_seed,
            "outputs": dataclasses.asdict(self.outputs),
            "btr": {**dataclasses.asdict(self.btr), "grid": list(self.btr.grid)},
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class _Doc:
    """Plain data from a YAML document plus the source line of every node."""

    def __init__(self, text: str, source: str = "<config>"):
        self.source = source
        self.lines: Dict[Tuple, int] = {}
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            self.data = {} if node is None else self._walk(loader, node, ())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{source}: YAML syntax error: {exc}") from exc
        finally:
            loader.dispose()

    def _walk(self, loader, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for key_node, value_node in node.value:
                key = loader.construct_object(key_node)
                if key in out:
                    self.lines[path + (key,)] = key_node.start_mark.line + 1
                    raise self.error(path + (key,), "duplicate key")
                out[key] = self._walk(loader, value_node, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._walk(loader, v, path + (i,)) for i, v in enumerate(node.value)]
        return loader.construct_object(node)

    def where(self, path) -> str:
        path = tuple(path)
        name = ".".join(str(p) for p in path) or "<root>"
        while path and path not in self.lines:
            path = path[:-1]
        line = self.lines.get(path)
        return f"{self.source}: field {name}" + (f" (line {line})" if line else "")

    def error(self, path, message: str) -> ConfigError:
        return ConfigError(f"{self.where(path)}: {message}")


def _mapping(doc: _Doc, value, path, allowed, required=()) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise doc.error(path, "expected a mapping")
    for key in value:
        if key not in allowed:
            raise doc.error(tuple(path) + (key,), f"unknown key; allowed keys are {sorted(allowed)}")
    for key in required:
        if key not in value:
            raise doc.error(path, f"missing required key {key!r}")
    return value


def _build(doc: _Doc, path, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (ConfigError, TypeError, ValueError) as exc:
        raise doc.error(path, str(exc)) from exc


def _scenario(doc: _Doc, raw) -> ScenarioConfig:
    fields = {f.name for f in dataclasses.fields(ScenarioConfig)}
    raw = dict(_mapping(doc, raw, ("scenario",), fields, required=("kind",)))
    if "geometry" in raw:
        geo_fields = {f.name for f in dataclasses.fields(ArrayGeometry)}
        geo = _mapping(doc, raw["geometry"], ("scenario", "geometry"), geo_fields, geo_fields)
        raw["geometry"] = _build(doc, ("scenario", "geometry"), ArrayGeometry, **geo)
    for key, value in raw.items():
        if isinstance(value, list):
            raw[key] = tuple(value)
    for key in ("horizon", "pool_size", "n_active", "block_len", "jitter", "max_active", "seed"):
        if key in raw and not _is_int(raw[key]):
            raise doc.error(("scenario", key), "expected an integer")
    return _build(doc, ("scenario",), ScenarioConfig, **raw)


def _beamformer(doc: _Doc, raw, i: int) -> BeamformerSpec:
    path = ("beamformers", i)
    raw = _mapping(doc, raw, path, {"kind", "label", "params"}, required=("kind",))
    params = raw.get("params") or {}
    if not isinstance(params, dict):
        raise doc.error(path + ("params",), "expected a mapping")
    return _build(doc, path, BeamformerSpec.make, kind=raw["kind"], label=raw.get("label"), **params)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate an experiment config from YAML text."""
    doc = _Doc(text, source)
    top = {"scenario", "beamformers", "trials", "base_seed", "outputs", "btr"}
    data = _mapping(doc, doc.data, (), top, required=("scenario", "beamformers"))
    scenario = _scenario(doc, data["scenario"])
    roster = data["beamformers"]
    if not isinstance(roster, list):
        raise doc.error(("beamformers",), "expected a list")
    beamformers = [_beamformer(doc, b, i) for i, b in enumerate(roster)]
    outputs = _build(
        doc,
        ("outputs",),
        OutputSpec,
        **_mapping(doc, data.get("outputs", {}), ("outputs",), {"dir", "traces"}),
    )
    btr_raw = dict(_mapping(doc, data.get("btr", {}), ("btr",), {"beamformer", "grid", "block"}))
    if "grid" in btr_raw:
        grid = btr_raw["grid"]
        if not (isinstance(grid, list) and len(grid) == 3 and all(_is_number(g) for g in grid)):
            raise doc.error(("btr", "grid"), "expected [start, stop, step]")
        btr_raw["grid"] = tuple(float(g) for g in grid)
    btr = _build(doc, ("btr",), BtrSpec, **btr_raw)
    kwargs = {k: data[k] for k in ("trials", "base_seed") if k in data}
    return _build(
        doc,
        (),
        ExperimentConfig,
        scenario=scenario,
        beamformers=beamformers,
        outputs=outputs,
        btr=btr,
        **kwargs,
    )


def load_config(path) -> ExperimentConfig:
    """Read a YAML config file. IO failures propagate as ``OSError``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, str(path))

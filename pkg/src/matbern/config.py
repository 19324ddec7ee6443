"""Experiment configuration files (YAML or JSON) and their canonical form."""

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import ensembles
from .errors import ConfigError
from .kernelops import KernelSpec

KINDS = ("bound", "simulate", "compare", "kernel", "inequalities")
REGIMES = ("bounded", "subexp", "martingale", "vector_l2", "vector_linf")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_u64 = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}}
_grid = {
    "oneOf": [
        {"type": "array", "items": _num, "minItems": 1},
        {
            "type": "object",
            "properties": {"start": _num, "stop": _num, "points": _posint},
            "required": ["start", "stop", "points"],
            "additionalProperties": False,
        },
    ]
}


def _family(name, props, required):
    return {
        "type": "object",
        "properties": {"family": {"const": name}, **props},
        "required": ["family", *required],
        "additionalProperties": False,
    }


_random_bases = {
    "type": "object",
    "properties": {"d": _posint, "n": _posint, "seed": _u64, "decay": {"type": "number", "minimum": 0}},
    "required": ["d", "n"],
    "additionalProperties": False,
}
_B = {"oneOf": [_matrix, _num]}

ENSEMBLE_SCHEMA = {
    "oneOf": [
        {
            "allOf": [
                _family("FixedBasisRademacher", {"bases": {"type": "array"}, "random": _random_bases}, []),
                {"oneOf": [{"required": ["bases"]}, {"required": ["random"]}]},
            ]
        },
        _family("RankOneSphere", {"d": _posint, "n": _posint}, ["d", "n"]),
        {
            "allOf": [
                _family(
                    "FiniteSupport",
                    {
                        "atoms": {"type": "array"},
                        "probs": {"type": "array", "items": {"type": "number", "minimum": 0}},
                        "preset": {"enum": ["scalar_rademacher"]},
                        "n": _posint,
                    },
                    ["n"],
                ),
                {"oneOf": [{"required": ["atoms", "probs"]}, {"required": ["preset"]}]},
            ]
        },
        _family("SubExpScaled", {"B": _B, "d": _posint, "n": _posint}, ["B", "n"]),
        _family("MartingaleAdapted", {"B": _B, "d": _posint, "n": _posint}, ["B", "n"]),
        _family("SphereVectors", {"d": _posint, "n": _posint, "radius": _pos}, ["d", "n"]),
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "matbern experiment",
    "type": "object",
    "properties": {
        "kind": {"enum": list(KINDS)},
        "ensemble": ENSEMBLE_SCHEMA,
        "bound": {
            "type": "object",
            "properties": {
                "regime": {"enum": list(REGIMES)},
                "n": _posint,
                "d": _posint,
                "sigma2": {"type": "number", "minimum": 0},
                "U": _pos,
                "trace_var": {"type": "number", "minimum": 0},
                "EW_eigs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "sim": {
            "type": "object",
            "properties": {
                "t_grid": _grid,
                "trials": _posint,
                "seed": _u64,
                "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "exact": {"type": "boolean"},
                "sigma2_event": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "kernel": {
            "type": "object",
            "properties": {
                "spec": {
                    "type": "object",
                    "properties": {
                        "family": {"enum": ["gaussian", "polynomial"]},
                        "bandwidth": _pos,
                        "degree": _posint,
                        "offset": {"type": "number", "minimum": 0},
                        "low": {"type": "array", "items": _num, "minItems": 1},
                        "high": {"type": "array", "items": _num, "minItems": 1},
                    },
                    "additionalProperties": False,
                },
                "n": _posint,
                "m": {"type": "integer", "minimum": 2},
                "samples": _posint,
                "t_grid": _grid,
            },
            "required": ["n"],
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"path": {"type": "string"}, "format": {"enum": ["csv", "json"]}},
            "additionalProperties": False,
        },
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SIM_DEFAULTS = {"trials": 100_000, "seed": 0, "confidence": 0.99, "exact": False}
KERNEL_DEFAULTS = {"m": 4000, "samples": 2000}
OUTPUT_DEFAULTS = {"format": "csv"}


def expand_grid(g) -> tuple:
    if g is None:
        return None
    if isinstance(g, dict):
        return tuple(float(x) for x in np.linspace(g["start"], g["stop"], g["points"]))
    return tuple(float(x) for x in g)


def check_grid(grid):
    if grid is None:
        return
    if grid[0] <= 0 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("t_grid must be positive and strictly increasing")


def _canonical_ensemble(e: dict) -> dict:
    e = copy.deepcopy(e)
    fam = e["family"]
    if fam == "FixedBasisRademacher" and "random" in e:
        e["random"] = {"seed": 0, "decay": 0.0, **e["random"]}
        e["random"]["decay"] = float(e["random"]["decay"])
    if fam in ("SubExpScaled", "MartingaleAdapted") and not isinstance(e["B"], list):
        e["B"] = float(e["B"])
        e.setdefault("d", 1)
    if fam == "SphereVectors":
        e["radius"] = float(e.get("radius", 1.0))
    return e


def build_ensemble(e: dict) -> ensembles.EnsembleSpec:
    """Instantiate the ensemble described by a (validated) config section."""
    fam = e["family"]
    if fam == "FixedBasisRademacher" and "random" in e:
        r = e["random"]
        return ensembles.FixedBasisRademacher.random(r["d"], r["n"], r.get("seed", 0), r.get("decay", 0.0))
    if fam == "FiniteSupport" and "preset" in e:
        return ensembles.FiniteSupport.scalar_rademacher(e["n"])
    if fam in ("SubExpScaled", "MartingaleAdapted") and not isinstance(e["B"], list):
        B = float(e["B"]) * np.eye(e.get("d", 1))
        return ensembles.ensemble_from_dict({"family": fam, "B": B.tolist(), "n": e["n"]})
    return ensembles.ensemble_from_dict(e)


@dataclass
class ExperimentConfig:
    kind: str
    ensemble: dict = None
    bound: dict = None
    sim: dict = None
    kernel: dict = None
    output: dict = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key in ("ensemble", "bound", "sim", "kernel", "output"):
            val = getattr(self, key)
            if val is not None:
                out[key] = copy.deepcopy(val)
        return out

    @property
    def t_grid(self):
        return expand_grid((self.sim or {}).get("t_grid"))

    @property
    def kernel_t_grid(self):
        return expand_grid((self.kernel or {}).get("t_grid"))

    def build_ensemble(self):
        return build_ensemble(self.ensemble)

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in self.kernel["spec"].items()})


def parse(data: dict) -> ExperimentConfig:
    """Validate a raw mapping and return it in canonical form."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    kind = data["kind"]
    cfg = ExperimentConfig(kind)
    if "ensemble" in data:
        cfg.ensemble = _canonical_ensemble(data["ensemble"])
    elif kind in ("simulate", "compare"):
        raise ConfigError(f"kind {kind!r} needs an ensemble section")
    if "bound" in data or kind in ("bound", "compare"):
        cfg.bound = {"regime": "bounded", **copy.deepcopy(data.get("bound", {}))}
        if kind == "bound" and cfg.ensemble is None:
            need = {"n", "d", "sigma2", "U", "trace_var"}
            if cfg.bound["regime"] == "martingale":
                need = {"EW_eigs"}
            missing = need - set(cfg.bound)
            if missing:
                raise ConfigError(f"bound without ensemble needs {sorted(missing)}")
    if kind in ("bound", "simulate", "compare") or "sim" in data:
        cfg.sim = {**SIM_DEFAULTS, **copy.deepcopy(data.get("sim", {}))}
        check_grid(cfg.t_grid)
    if kind == "kernel":
        if "kernel" not in data:
            raise ConfigError("kind 'kernel' needs a kernel section")
    if "kernel" in data:
        k = {**KERNEL_DEFAULTS, **copy.deepcopy(data["kernel"])}
        try:
            k["spec"] = KernelSpec(**{a: tuple(v) if isinstance(v, list) else v for a, v in k.get("spec", {}).items()}).to_dict()
        except ValueError as exc:
            raise ConfigError(f"kernel: {exc}") from None
        cfg.kernel = k
        check_grid(cfg.kernel_t_grid)
    cfg.output = {**OUTPUT_DEFAULTS, **data.get("output", {})}
    if cfg.ensemble is not None:
        try:
            build_ensemble(cfg.ensemble)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"ensemble: {exc}") from None
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return parse(data)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return loads(text)


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical YAML text; ``loads(serialize(c))`` reproduces ``c``."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)


def schema_json() -> str:
    return json.dumps(SCHEMA, indent=2, sort_keys=True) + "\n"

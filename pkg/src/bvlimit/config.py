"""JSON run configuration: schema, parsing, matrix shorthands."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from .algebra import SpdMatrix
from .errors import ConfigError
from .flow import StepControl
from .potentials import Potential, build_potential

MATRIX_SPEC = {
    "oneOf": [
        {"type": "string"},  # "identity" or "scalar:<value>"
        {"type": "array"},
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["potential"],
    "properties": {
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["appendix", "quadratic", "custom-spline"]},
                "eta": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.1},
                "dim": {"type": "integer", "minimum": 1},
                "load": {"oneOf": [{"type": "array"}, {"const": "t"}]},
                "horizon": {"type": "array", "minItems": 2, "maxItems": 2},
                "knots": {"type": "array"},
                "values": {"type": "array"},
                "derivs": {"type": "array"},
                "second_derivs": {"type": "array"},
            },
        },
        "A": MATRIX_SPEC,
        "B": MATRIX_SPEC,
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "dynamics": {"enum": ["second-order", "first-order"]},
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rule": {"enum": ["appendix-scaled"]},
                "u0": {"type": "array", "items": {"type": "number"}},
                "v0": {"type": "array", "items": {"type": "number"}},
            },
        },
        "span": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}},
        "ctrl": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rtol": {"type": "number"},
                "atol": {"type": "number"},
                "max_step_factor": {"type": "number"},
                "checkpoints_per_unit": {"type": "integer"},
                "box_inflation": {"type": "number"},
            },
        },
        "seed": {"type": "integer"},
        "out": {"type": "string"},
        "limit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "agree_cap": {"type": "number"},
                "atom_fraction": {"type": "number"},
                "jump_threshold": {"type": "number"},
                "coarse_bins": {"type": "integer"},
                "stab_tol": {"type": "number"},
                "balance_tol": {"type": "number"},
            },
        },
        "cost": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_schedule": {"type": "array", "items": {"type": "number"}},
                "target_h": {"type": "number"},
                "maxiter": {"type": "integer"},
                "seed": {"type": "integer"},
            },
        },
    },
}


@dataclass
class RunConfig:
    potential: Potential
    A: Optional[SpdMatrix]
    B: SpdMatrix
    epsilons: tuple
    dynamics: str
    span: tuple
    ctrl: StepControl
    seed: int
    out: Optional[str]
    initial: dict
    limit_kwargs: dict = field(default_factory=dict)
    cost_kwargs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def initial_state(self, eps):
        if self.initial.get("rule") == "appendix-scaled":
            u0 = np.array([-(1.0 + eps) * np.sqrt(1.0 / 3.0)])
            v0 = np.array([1.0])
            return u0, v0
        u0 = self.initial.get("u0")
        if u0 is None:
            raise ConfigError("config lacks an initial state")
        v0 = self.initial.get("v0", [0.0] * self.potential.dim)
        return np.asarray(u0, dtype=float), np.asarray(v0, dtype=float)


def parse_matrix(spec, dim: int) -> SpdMatrix:
    if spec is None or spec == "identity":
        return SpdMatrix.identity(dim)
    if isinstance(spec, str):
        if spec.startswith("scalar:"):
            try:
                return SpdMatrix.scalar(dim, float(spec.split(":", 1)[1]))
            except ValueError as exc:
                raise ConfigError(f"bad scalar matrix spec {spec!r}") from exc
        raise ConfigError(f"unknown matrix shorthand {spec!r}")
    return SpdMatrix.from_entries(dim, np.asarray(spec, dtype=float))


def load_config(path_or_dict) -> RunConfig:
    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        with open(path_or_dict) as fh:
            raw = json.load(fh)
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message}") from exc
    try:
        pot = build_potential(raw["potential"])
    except Exception as exc:
        raise ConfigError(f"potential construction failed: {exc}") from exc
    dim = pot.dim
    dynamics = raw.get("dynamics", "second-order")
    A = parse_matrix(raw.get("A"), dim) if (dynamics == "second-order" or "A" in raw) else None
    B = parse_matrix(raw.get("B"), dim)
    if "epsilons" in raw:
        eps = tuple(raw["epsilons"])
    elif "epsilon" in raw:
        eps = (float(raw["epsilon"]),)
    else:
        raise ConfigError("config needs 'epsilon' or 'epsilons'")
    ctrl_kwargs = raw.get("ctrl", {})
    ctrl = StepControl(**ctrl_kwargs)
    return RunConfig(
        potential=pot,
        A=A,
        B=B,
        epsilons=eps,
        dynamics=dynamics,
        span=tuple(raw.get("span", pot.horizon)),
        ctrl=ctrl,
        seed=int(raw.get("seed", 0)),
        out=raw.get("out"),
        initial=raw.get("initial", {}),
        limit_kwargs=raw.get("limit", {}),
        cost_kwargs=raw.get("cost", {}),
        raw=raw,
    )

"""Run configuration: JSON schema, validation, and initial-data assembly.

Initial data is restricted to finite trigonometric polynomials: each channel
is a list of (amplitude, integer wave-vector, phase) terms evaluated as
amp * cos(2 pi sum_i k_i x_i / L_i + phase).  Integer wave-vectors make the
fields exactly periodic and analytically differentiable, which is what the
derived test oracles rely on.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from .diagnostics import ShiConstants
from .errors import ConfigError
from .flow import GAUGE_MODES, EuclideanState, ReducedState
from .forms import DifferentialForm, num_channels, sort_index
from .grids import GridSpec, MetricField, ScalarField
from .homogeneous import PRESETS, HomogeneousState
from .runner import FlowConfig

TRIG_TERMS = {
    "type": "array",
    "items": {
        "type": "array",
        "minItems": 3,
        "maxItems": 3,
        "prefixItems": [
            {"type": "number"},
            {"type": "array", "items": {"type": "integer"}},
            {"type": "number"},
        ],
    },
}

CHANNEL_MAP = {"type": "object", "additionalProperties": TRIG_TERMS}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["mode"],
    "properties": {
        "mode": {"enum": ["euclidean", "reduced", "ode", "verify"]},
        "p": {"type": "integer", "minimum": 0, "maximum": 10},
        "sigma": {"enum": [-1, 1]},
        "lambda_tilde": {"type": "number"},
        "allow_unnormalized_lambda": {"type": "boolean"},
        "kappa_hat": {"type": "number"},
        "flux_ansatz": {"enum": ["general", "beta_only", "psi_only"]},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["shape"],
            "properties": {
                "shape": {"type": "array", "items": {"type": "integer", "minimum": 4}},
                "lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["vacuum"]},
                "f": TRIG_TERMS,
                "metric": CHANNEL_MAP,
                "beta": CHANNEL_MAP,
                "psi": CHANNEL_MAP,
                "F": CHANNEL_MAP,
            },
        },
        "euclidean": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"form_degree": {"type": ["integer", "null"], "minimum": 0}},
        },
        "flow": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scheme": {"enum": ["euler", "rk4"]},
                "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "cfl": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "steps": {"type": ["integer", "null"], "minimum": 1},
                "gauge": {"enum": list(GAUGE_MODES)},
                "k_max": {"type": "number", "exclusiveMinimum": 0},
                "cadence": {"type": "integer", "minimum": 1},
                "max_halvings": {"type": "integer", "minimum": 0},
                "freeze_metric": {"type": "boolean"},
                "force_dt": {"type": "boolean"},
                "shi_order": {"type": "integer", "minimum": 0, "maximum": 3},
                "shi_constants": {"type": "object", "additionalProperties": {"type": "number"}},
                "shi_bound": {"type": ["number", "null"]},
                "record_level": {"enum": ["full", "light"]},
            },
        },
        "ode": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": list(PRESETS)},
                "action": {"enum": ["integrate", "newton"]},
                "s": {"type": "number", "exclusiveMinimum": 0},
                "f": {"type": "number"},
                "b": {"type": "number"},
                "c": {"type": "number"},
                "free": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "scheme": {"enum": ["euler", "rk4"]},
                "newton_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "diagnostics": {"type": "string"},
                "summary": {"type": "string"},
                "checkpoint": {"type": "string"},
                "trajectory": {"type": "string"},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "refine": {"type": "integer", "minimum": 2, "maximum": 4},
    },
}

FLOW_DEFAULTS = {
    "scheme": "rk4",
    "dt": None,
    "cfl": 0.5,
    "t_end": 1.0,
    "steps": None,
    "gauge": "deturck",
    "k_max": 1e6,
    "cadence": 10,
    "max_halvings": 20,
    "freeze_metric": False,
    "force_dt": False,
    "shi_order": 1,
    "shi_constants": {},
    "shi_bound": None,
    "record_level": "full",
}

ODE_DEFAULTS = {
    "preset": "pure_scalar",
    "action": "integrate",
    "s": 1.0,
    "f": 0.0,
    "b": 0.0,
    "c": 0.0,
    "free": ["kappa_hat", "lambda_tilde"],
    "dt": 1e-3,
    "t_end": 1.0,
    "scheme": "rk4",
    "newton_tol": 1e-12,
    "max_iter": 100,
}

OUTPUT_DEFAULTS = {
    "directory": ".",
    "diagnostics": "diagnostics.jsonl",
    "summary": "summary.json",
    "checkpoint": "checkpoint.wfc",
    "trajectory": "trajectory.csv",
}


@dataclass
class RunConfig:
    """Validated run configuration with every default resolved."""

    mode: str
    p: int | None = None
    sigma: int = 1
    lambda_tilde: float = 0.0
    allow_unnormalized_lambda: bool = False
    kappa_hat: float = 0.0
    flux_ansatz: str = "general"
    grid: dict | None = None
    initial: dict = field(default_factory=dict)
    euclidean: dict = field(default_factory=lambda: {"form_degree": None})
    flow: dict = field(default_factory=dict)
    ode: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0
    refine: int = 3

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config, resolving all defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if jsonschema is not None:
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            first = errors[0]
            path = ".".join(str(part) for part in first.absolute_path) or "<root>"
            raise ConfigError(first.message, path=path)
    cfg = RunConfig(mode=raw["mode"])
    for key in ("p", "sigma", "lambda_tilde", "allow_unnormalized_lambda", "kappa_hat",
                "flux_ansatz", "grid", "initial", "seed", "refine"):
        if key in raw:
            setattr(cfg, key, raw[key])
    cfg.flow = {**FLOW_DEFAULTS, **raw.get("flow", {})}
    cfg.ode = {**ODE_DEFAULTS, **raw.get("ode", {})}
    cfg.output = {**OUTPUT_DEFAULTS, **raw.get("output", {})}
    cfg.euclidean = {"form_degree": None, **raw.get("euclidean", {})}
    _semantic_checks(cfg)
    return cfg


def _semantic_checks(cfg: RunConfig) -> None:
    if cfg.mode in ("reduced", "ode") and cfg.p is None:
        raise ConfigError("p is required for reduced and ode modes", path="p")
    if cfg.mode in ("reduced", "euclidean") and cfg.grid is None:
        raise ConfigError("grid is required for grid modes", path="grid")
    if not cfg.allow_unnormalized_lambda and cfg.lambda_tilde not in (-1.0, 0.0, 1.0):
        raise ConfigError(
            "lambda_tilde is normalized to -1, 0 or +1; "
            "set allow_unnormalized_lambda to override",
            path="lambda_tilde",
        )
    if cfg.mode == "reduced":
        n = 10 - cfg.p
        if cfg.flux_ansatz == "psi_only" and n >= 8:
            raise ConfigError(
                f"a psi-only flux on a base of dimension {n} >= 8 does not stay closed "
                "along the flow (psi ^ psi sources the lost components); "
                "psi-only runs need base dimension <= 7",
                path="flux_ansatz",
            )
        shape = cfg.grid["shape"]
        if len(shape) != n:
            raise ConfigError(
                f"grid dimension {len(shape)} inconsistent with p={cfg.p} "
                f"(base dimension must be {n})",
                path="grid.shape",
            )
    if cfg.grid is not None and "lengths" in cfg.grid:
        if len(cfg.grid["lengths"]) != len(cfg.grid["shape"]):
            raise ConfigError("lengths and shape must have equal length", path="grid.lengths")
    if cfg.flow["dt"] is None and cfg.flow["cfl"] is None:
        raise ConfigError("either dt or cfl must be set", path="flow.dt")


# ---------------------------------------------------------------------------
# initial-data assembly
# ---------------------------------------------------------------------------

def trig_field(grid: GridSpec, terms: list) -> np.ndarray:
    """Evaluate a trigonometric polynomial: sum of amp cos(2 pi k.x/L + phase)."""
    coords = grid.coordinates()
    out = np.zeros(grid.shape)
    for amp, wave, phase in terms:
        if len(wave) != grid.n:
            raise ConfigError(f"wave-vector {wave} has wrong dimension", path="initial")
        angle = np.zeros(grid.shape)
        for i, (k, x, L) in enumerate(zip(wave, coords, grid.lengths)):
            angle += 2.0 * np.pi * k * x / L
        out += amp * np.cos(angle + phase)
    return out


def _parse_index_key(key: str) -> tuple[int, ...]:
    key = key.strip()
    if not key:
        return ()
    return tuple(int(tok) for tok in key.split(","))


def build_metric(grid: GridSpec, channels: dict | None) -> MetricField:
    entries = np.zeros(grid.shape + (grid.n, grid.n)) + np.eye(grid.n)
    for key, terms in (channels or {}).items():
        idx = _parse_index_key(key)
        if len(idx) != 2:
            raise ConfigError(f"metric channel {key!r} must name an index pair", path="initial.metric")
        i, j = idx
        values = trig_field(grid, terms)
        entries[..., i, j] += values
        if i != j:
            entries[..., j, i] += values
    return MetricField(grid, entries)


def build_form(grid: GridSpec, degree: int, channels: dict | None) -> DifferentialForm:
    form = DifferentialForm.zero(grid, degree)
    for key, terms in (channels or {}).items():
        idx = _parse_index_key(key)
        canonical, sign = sort_index(idx)
        if sign == 0 or len(idx) != degree:
            raise ConfigError(f"channel {key!r} is not a degree-{degree} multi-index",
                              path="initial")
        from .forms import channel_table

        form.comps[channel_table(grid.n, degree)[canonical]] += sign * trig_field(grid, terms)
    return form


def build_reduced_state(cfg: RunConfig) -> ReducedState:
    grid = GridSpec(tuple(cfg.grid["shape"]),
                    tuple(cfg.grid.get("lengths", [1.0] * len(cfg.grid["shape"]))))
    n = grid.n
    p = cfg.p
    initial = cfg.initial
    ghat = build_metric(grid, initial.get("metric"))
    f = ScalarField(grid, trig_field(grid, initial.get("f", [])))
    beta = psi = None
    if 3 - p >= 0 and cfg.flux_ansatz != "psi_only":
        beta = build_form(grid, 3 - p, initial.get("beta"))
    if n >= 4 and cfg.flux_ansatz != "beta_only":
        psi = build_form(grid, 4, initial.get("psi"))
    return ReducedState.build(ghat, f, p, cfg.sigma, cfg.lambda_tilde, beta=beta, psi=psi)


def build_euclidean_state(cfg: RunConfig) -> EuclideanState:
    grid = GridSpec(tuple(cfg.grid["shape"]),
                    tuple(cfg.grid.get("lengths", [1.0] * len(cfg.grid["shape"]))))
    degree = cfg.euclidean.get("form_degree")
    if degree is None:
        degree = min(4, grid.n)
    if degree > grid.n:
        raise ConfigError(f"form degree {degree} exceeds grid dimension {grid.n}",
                          path="euclidean.form_degree")
    g = build_metric(grid, cfg.initial.get("metric"))
    F = build_form(grid, degree, cfg.initial.get("F"))
    return EuclideanState(g, F)


def build_homogeneous_state(cfg: RunConfig) -> HomogeneousState:
    ode = cfg.ode
    return HomogeneousState(
        p=cfg.p,
        sigma=cfg.sigma,
        lambda_tilde=cfg.lambda_tilde,
        kappa_hat=cfg.kappa_hat,
        s=ode["s"],
        f=ode["f"],
        b=ode["b"],
        c=ode["c"],
        preset=ode["preset"],
    )


def build_flow_config(cfg: RunConfig) -> FlowConfig:
    flow = cfg.flow
    return FlowConfig(
        scheme=flow["scheme"],
        dt=flow["dt"],
        cfl=flow["cfl"] if flow["dt"] is None else None,
        t_end=flow["t_end"],
        steps=flow["steps"],
        gauge=flow["gauge"],
        k_max=flow["k_max"],
        cadence=flow["cadence"],
        max_halvings=flow["max_halvings"],
        freeze_metric=flow["freeze_metric"],
        force_dt=flow["force_dt"],
        shi_order=flow["shi_order"],
        shi_constants=ShiConstants.from_dict(flow["shi_constants"]),
        shi_bound=flow["shi_bound"],
        record_level=flow["record_level"],
    )

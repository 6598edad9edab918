"""Experiment configuration: YAML loading with line tracking, schema validation, defaults."""
from __future__ import annotations

import copy
import json
import re
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from ..errors import ConfigError

KINDS = ("check-algebra", "laminate", "solve", "greens", "embed", "milgrom", "bfe-check")


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-9`` style numbers as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                    |\.[0-9_]+(?:[eE][-+][0-9]+)?
                    |[-+]?\.(?:inf|Inf|INF)
                    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def _construct(node, loader, path, lines):
    """Build Python data from a YAML node, recording the source line of every path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for kn, vn in node.value:
            key = loader.construct_object(kn, deep=True)
            if not isinstance(key, str):
                raise ConfigError(f"mapping keys must be strings, got {key!r}", kn.start_mark.line + 1)
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", kn.start_mark.line + 1)
            out[key] = _construct(vn, loader, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, loader, path + (i,), lines) for i, v in enumerate(node.value)]
    return loader.construct_object(node, deep=True)


def load_yaml(text: str):
    """Return ``(data, lines)`` where ``lines`` maps key paths to 1-based source lines."""
    loader = _Loader(text)
    try:
        node = loader.get_single_node()
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", mark.line + 1 if mark else None) from None
    finally:
        loader.dispose()
    if node is None:
        raise ConfigError("empty configuration", 1)
    lines = {}
    return _construct(node, _Loader(""), (), lines), lines


def schema() -> dict:
    return json.loads(resources.files("xrel.cli").joinpath("schema.json").read_text())


def _line_for(path, lines):
    path = tuple(path)
    while path not in lines and path:
        path = path[:-1]
    return lines.get(path)


def validate(data, lines) -> None:
    v = jsonschema.Draft202012Validator(schema())
    errs = sorted(v.iter_errors(data), key=lambda e: (_line_for(e.absolute_path, lines) or 0, list(e.absolute_path)))
    if errs:
        e = errs[0]
        path = tuple(e.absolute_path)
        if e.validator == "additionalProperties" and isinstance(e.instance, dict):
            # anchor on the first unexpected key rather than its parent mapping
            extra = [k for k in e.instance if k not in e.schema.get("properties", {})]
            if extra:
                path = path + (min(extra, key=lambda k: lines.get(path + (k,), 0)),)
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}", _line_for(path, lines))


# defaults ---------------------------------------------------------------

SOLVER_DEFAULTS = {"tol": 1e-9, "max_iters": 500, "lambda_schedule": [0.25, 0.5, 0.75, 1.0], "damping": 1.0,
                   "fallback_damping": 0.5}

EXPERIMENT_DEFAULTS = {
    "check-algebra": {"n_directions": 100, "closure_tol": 1e-12, "prod3": [1.0, 2.0, 3.0, 4.0, 5.0],
                      "source_tol": 1e-12, "coercivity": {"n_samples": 20, "n_lambda": 101, "floor_factor": 0.5,
                                                          "amplitude": 0.8}},
    "laminate": {"n_random": 50, "det_tol": 1e-10, "classical_tol": 1e-12, "amplitude": 0.8,
                 "classical": {"La": [[2.0, 0.0], [0.0, 0.5]], "Lb": [[0.5, 0.0], [0.0, 2.0]], "f": 0.5,
                               "normal": [1.0, 0.0], "expected": [[0.8, 0.0], [0.0, 1.25]]},
                 "trajectory": {"angles": [0.0, 0.7853981633974483], "n_fractions": 21},
                 "sigma0_sweep": [0.5, 1.0, 2.0]},
    "solve": {"contrast": 8.0, "smoothness": 4.0, "source_smoothness": 4.0, "membership_tol": 1e-6,
              "invariant_factor": 10.0, "n_basis_changes": 5, "e_form_max_iters": 5000,
              "series": {"lambda": 0.1, "order": 6, "tol": 1e-6, "member_tol": 1e-10}},
    "greens": {"contrast": 8.0, "smoothness": 6.0, "width": 3.0, "exclusion_factor": 5.0, "kernel_tol": 1e-5,
               "center": None, "refine": True, "S0": None,
               "adjoint": {"x0": None, "x1": None, "tol": 1e-5},
               "reciprocity": {"radius": 12.0, "factor": 10.0}},
    "embed": {"radius_fraction": 0.25, "L1": [[1.5, 0.0], [0.0, 0.6666666666666666]], "contrast": 8.0,
              "smoothness": 4.0, "taper_width": 4.0, "source_offset": [2.0, 0.0], "S0": [[1.0, 0.5], [-0.5, 1.0]],
              "width": 3.0, "interior_tol": 1e-5, "flux_tol": 1e-4, "negative_margin": 1000.0, "quad_order": 4},
    "milgrom": {"m": 2, "radius_fraction": 0.4375, "block": 8, "mode": 0, "ratio_tol": 1e-8, "angle_tol": 1e-8,
                "spd_condition": 10.0, "congruence_check": True},
    "bfe-check": {"radius_fraction": 0.25, "L1": [[1.5, 0.0], [0.0, 0.6666666666666666]], "contrast": 8.0,
                  "smoothness": 4.0, "taper_width": 4.0, "source_offset": [2.0, 0.0],
                  "S0": [[1.0, 0.5], [-0.5, 1.0]], "width": 3.0, "tol": 1e-4, "trivial_tol": 1e-12,
                  "quad_order": 4, "root_scale": 1.0, "constant_value": None},
}


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(data: dict) -> dict:
    """Fill every default so the resolved config is self-describing."""
    cfg = {"seed": data.get("seed", 0)}
    cfg["spec"] = _merge({"d": 2, "m": 1}, data.get("spec", {}))
    man = data.get("manifold", {"builtin": "dykhne"})
    if man.get("builtin", "dykhne") == "dykhne":
        cfg["manifold"] = _merge({"builtin": "dykhne", "sigma0": 1.0}, man)
    else:
        cfg["manifold"] = _merge({"builtin": "none", "M": {"kind": "sphere_average", "order": None, "n0": None,
                                                          "matrix": None}, "K": None}, man)
    d = cfg["spec"]["d"]
    cfg["grid"] = _merge({"sizes": [64] * d, "lengths": None}, data.get("grid", {}))
    if cfg["grid"]["lengths"] is None:
        cfg["grid"]["lengths"] = [float(n) for n in cfg["grid"]["sizes"]]
    cfg["solver"] = _merge(SOLVER_DEFAULTS, data.get("solver", {}))
    exp = data["experiment"]
    cfg["experiment"] = _merge({"kind": exp["kind"], **EXPERIMENT_DEFAULTS[exp["kind"]]}, exp)
    _fill_derived(cfg)
    return cfg


def _fill_derived(cfg: dict) -> None:
    """Defaults that depend on the grid or the tensor space."""
    e = cfg["experiment"]
    sizes = cfg["grid"]["sizes"]
    d, m = cfg["spec"]["d"], cfg["spec"]["m"]
    q = d * m
    if e["kind"] == "greens":
        if e["center"] is None:
            e["center"] = [0.5 * n for n in sizes]
        if e["S0"] is None:
            e["S0"] = [[1.0 if i == j else 0.0 for j in range(q)] for i in range(q)]
        if e["adjoint"]["x0"] is None:
            e["adjoint"]["x0"] = [0.3125 * n for n in sizes]
        if e["adjoint"]["x1"] is None:
            e["adjoint"]["x1"] = [f * n for f, n in zip((0.625, 0.703125, 0.5625), sizes)]
    if e["kind"] == "bfe-check" and e["constant_value"] is None:
        e["constant_value"] = [1.0] * (2 * m * q)


def _preset_dir():
    return resources.files("xrel.cli").joinpath("presets")


def preset_names() -> list:
    return sorted(p.name[:-5] for p in _preset_dir().iterdir() if p.name.endswith(".yaml"))


def read_config_text(ref: str):
    """Config text and base directory for a path or a built-in preset name."""
    p = Path(ref)
    if p.is_file():
        return p.read_text(), p.resolve().parent
    if ref in preset_names():
        return _preset_dir().joinpath(ref + ".yaml").read_text(), None
    raise ConfigError(f"no such config file or preset: {ref}")


def load_config(ref: str, kind: str | None = None, seed: int | None = None):
    """Load, validate and resolve a config. Returns ``(resolved, base_dir)``."""
    text, base = read_config_text(ref)
    data, lines = load_yaml(text)
    validate(data, lines)
    if kind is not None and data["experiment"]["kind"] != kind:
        raise ConfigError(f"experiment kind {data['experiment']['kind']!r} does not match subcommand {kind!r}",
                          lines.get(("experiment", "kind")))
    cfg = resolve(data)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg, base


def dump_resolved(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None, width=100)

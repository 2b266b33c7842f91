"""YAML scenario files <-> :class:`ScenarioConfig`.

Every key is optional; omitted keys take the benchmark defaults. Errors name
the offending key as a dotted path and, when the key came from a file, its
line number.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .attacks import SpoofAttack
from .errors import ConfigurationError, FormationError, InvalidTopologyError
from .experiment import DetectionConfig, FormationConfig, GraphConfig, ScenarioConfig
from .mitigation import HallucinationParams, MitigationConfig

_TOP_KEYS = {
    "graph", "formation", "dt", "steps", "attacks", "detection",
    "mitigation", "init", "trials", "seed", "methods",
}


class ConfigError(ConfigurationError):
    def __init__(self, message, field=None, line=None):
        where = ""
        if field:
            where += f"{field}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message, field)
        self.line = line


def _line_index(node, prefix="", out=None) -> dict[str, int]:
    """Dotted key path -> 1-based line number, from a composed YAML node tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[path] = key_node.start_mark.line + 1
            _line_index(value_node, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for idx, item in enumerate(node.value):
            path = f"{prefix}[{idx}]"
            out[path] = item.start_mark.line + 1
            _line_index(item, path, out)
    return out


class _Reader:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines

    def error(self, message, field):
        line = self.lines.get(field)
        if line is None and field:
            # fall back to the nearest enclosing key that has a position
            parent = field
            while line is None and ("." in parent or "[" in parent):
                parent = parent.rsplit(".", 1)[0] if "." in parent else parent.rsplit("[", 1)[0]
                line = self.lines.get(parent)
        return ConfigError(message, field, line)

    def section(self, data, field, allowed):
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise self.error("expected a mapping", field)
        unknown = set(data) - set(allowed)
        if unknown:
            bad = sorted(unknown)[0]
            raise self.error(f"unknown key; expected one of {sorted(allowed)}", f"{field}.{bad}" if field else bad)
        return data

    def number(self, data, key, field, default, kind=float):
        if key not in data:
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {value!r}", field)
        if kind is int:
            if float(value) != int(value):
                raise self.error(f"expected an integer, got {value!r}", field)
            return int(value)
        return float(value)

    def vector(self, value, field):
        if not isinstance(value, (list, tuple)) or not value:
            raise self.error("expected a non-empty list of numbers", field)
        out = []
        for idx, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise self.error(f"expected a number, got {v!r}", f"{field}[{idx}]")
            out.append(float(v))
        return tuple(out)


def config_from_dict(data: Optional[dict], lines: Optional[dict[str, int]] = None) -> ScenarioConfig:
    r = _Reader(lines or {})
    data = r.section(data, "", _TOP_KEYS)
    base = ScenarioConfig()

    gd = r.section(data.get("graph"), "graph", {"kind", "n_nodes", "edges"})
    edges = None
    if "edges" in gd:
        if not isinstance(gd["edges"], list):
            raise r.error("expected a list of [i, j] pairs", "graph.edges")
        edges = []
        for idx, e in enumerate(gd["edges"]):
            if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e)):
                raise r.error("edge must be a pair of integer node indices", f"graph.edges[{idx}]")
            edges.append((min(e), max(e)))
        edges = tuple(sorted(edges))
    graph = GraphConfig(
        kind=str(gd.get("kind", "explicit" if edges else base.graph.kind)),
        n_nodes=r.number(gd, "n_nodes", "graph.n_nodes", base.graph.n_nodes, int),
        edges=edges,
    )

    fd = r.section(data.get("formation"), "formation", {"radius", "dim", "positions"})
    positions = None
    if "positions" in fd:
        if not isinstance(fd["positions"], list):
            raise r.error("expected a list of points", "formation.positions")
        positions = tuple(r.vector(pt, f"formation.positions[{i}]") for i, pt in enumerate(fd["positions"]))
    formation = FormationConfig(
        radius=r.number(fd, "radius", "formation.radius", base.formation.radius),
        dim=r.number(fd, "dim", "formation.dim", base.formation.dim, int),
        positions=positions,
    )

    attacks = base.attacks
    if "attacks" in data:
        raw = data["attacks"] or []
        if not isinstance(raw, list):
            raise r.error("expected a list of attacks", "attacks")
        attacks = []
        for idx, a in enumerate(raw):
            f = f"attacks[{idx}]"
            a = r.section(a, f, {"type", "target", "offset", "start_step", "end_step"})
            if a.get("type", "spoof") != "spoof":
                raise r.error(f"unsupported attack type {a['type']!r}; only 'spoof' is available", f"{f}.type")
            for required in ("target", "offset"):
                if required not in a:
                    raise r.error("missing required field", f"{f}.{required}")
            end = a.get("end_step")
            try:
                attacks.append(
                    SpoofAttack(
                        target=r.number(a, "target", f"{f}.target", None, int),
                        offset=r.vector(a["offset"], f"{f}.offset"),
                        start_step=r.number(a, "start_step", f"{f}.start_step", 0, int),
                        end_step=None if end is None else r.number(a, "end_step", f"{f}.end_step", None, int),
                    )
                )
            except ConfigError:
                raise
            except ConfigurationError as exc:
                raise r.error(str(exc), f"{f}.{exc.field}" if exc.field else f) from None
        attacks = tuple(attacks)

    dd = r.section(data.get("detection"), "detection", {"kappa", "window", "noise_std", "floor"})
    detection = DetectionConfig(
        kappa=r.number(dd, "kappa", "detection.kappa", base.detection.kappa),
        window=r.number(dd, "window", "detection.window", base.detection.window, int),
        noise_std=r.number(dd, "noise_std", "detection.noise_std", base.detection.noise_std),
        floor=r.number(dd, "floor", "detection.floor", base.detection.floor),
    )

    md = r.section(data.get("mitigation"), "mitigation", {"method", "sosh", "wmsr_F", "huber_c"})
    sd = r.section(md.get("sosh"), "mitigation.sosh", {"gamma", "M", "hessians"})
    bm = base.mitigation
    try:
        mitigation = MitigationConfig(
            method=str(md.get("method", bm.method)),
            sosh=HallucinationParams(
                gamma=r.number(sd, "gamma", "mitigation.sosh.gamma", bm.sosh.gamma),
                M=r.number(sd, "M", "mitigation.sosh.M", bm.sosh.M),
                hessians=sd.get("hessians"),
            ),
            wmsr_F=r.number(md, "wmsr_F", "mitigation.wmsr_F", bm.wmsr_F, int),
            huber_c=r.number(md, "huber_c", "mitigation.huber_c", bm.huber_c),
        )
    except ConfigError:
        raise
    except (ConfigurationError, ValueError) as exc:
        raise r.error(str(exc), getattr(exc, "field", None) or "mitigation") from None

    idat = r.section(data.get("init"), "init", {"low", "high"})
    dim = len(positions[0]) if positions else formation.dim

    def corner(key, default):
        if key not in idat:
            return tuple(default) if len(default) == dim else (default[0],) * dim
        v = idat[key]
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return (float(v),) * dim
        return r.vector(v, f"init.{key}")

    methods = base.methods
    if "methods" in data:
        if not isinstance(data["methods"], list) or not data["methods"]:
            raise r.error("expected a non-empty list of method names", "methods")
        methods = tuple(str(m) for m in data["methods"])

    cfg = ScenarioConfig(
        graph=graph,
        formation=formation,
        dt=r.number(data, "dt", "dt", base.dt),
        steps=r.number(data, "steps", "steps", base.steps, int),
        attacks=attacks,
        detection=detection,
        mitigation=mitigation,
        init_low=corner("low", base.init_low),
        init_high=corner("high", base.init_high),
        trials=r.number(data, "trials", "trials", base.trials, int),
        base_seed=r.number(data, "seed", "seed", base.base_seed, int),
        methods=methods,
    )
    try:
        cfg.validate()
    except ConfigError:
        raise
    except ConfigurationError as exc:
        raise r.error(str(exc), exc.field) from None
    except InvalidTopologyError as exc:
        raise r.error(str(exc), "graph") from None
    except FormationError as exc:
        raise r.error(str(exc), "formation") from None
    return cfg


def load_config(path, overrides: Optional[dict[str, Any]] = None) -> ScenarioConfig:
    """Read a YAML scenario, then apply ``overrides`` (``seed``, ``trials``)."""
    text = Path(path).read_text()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(str(exc.problem), line=mark.line + 1 if mark else None) from None
    lines = _line_index(node) if node is not None else {}
    cfg = config_from_dict(data, lines)
    return apply_overrides(cfg, overrides or {})


def apply_overrides(cfg: ScenarioConfig, overrides: dict[str, Any]) -> ScenarioConfig:
    changes = {}
    if overrides.get("seed") is not None:
        changes["base_seed"] = int(overrides["seed"])
    if overrides.get("trials") is not None:
        changes["trials"] = int(overrides["trials"])
    cfg = replace(cfg, **changes)
    cfg.validate()
    return cfg


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Fully resolved, YAML-safe representation (all defaults expanded)."""
    graph = {"kind": cfg.graph.kind, "n_nodes": cfg.graph.n_nodes}
    if cfg.graph.edges is not None:
        graph["edges"] = [list(e) for e in cfg.graph.edges]
    formation = {"radius": cfg.formation.radius, "dim": cfg.formation.dim}
    if cfg.formation.positions is not None:
        formation["positions"] = [list(p) for p in cfg.formation.positions]
    sosh = {"gamma": cfg.mitigation.sosh.gamma, "M": cfg.mitigation.sosh.M}
    if cfg.mitigation.sosh.hessians is not None:
        sosh["hessians"] = [[list(row) for row in h] for h in cfg.mitigation.sosh.hessians]
    return {
        "graph": graph,
        "formation": formation,
        "dt": cfg.dt,
        "steps": cfg.steps,
        "attacks": [
            {"type": "spoof", "target": a.target, "offset": list(a.offset), "start_step": a.start_step, "end_step": a.end_step}
            for a in cfg.attacks
        ],
        "detection": {
            "kappa": cfg.detection.kappa,
            "window": cfg.detection.window,
            "noise_std": cfg.detection.noise_std,
            "floor": cfg.detection.floor,
        },
        "mitigation": {
            "method": cfg.mitigation.method,
            "sosh": sosh,
            "wmsr_F": cfg.mitigation.wmsr_F,
            "huber_c": cfg.mitigation.huber_c,
        },
        "init": {"low": list(cfg.init_low), "high": list(cfg.init_high)},
        "trials": cfg.trials,
        "seed": cfg.base_seed,
        "methods": list(cfg.methods),
    }


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)

"""INI-style configuration files and run manifests.

Sections and keys mirror the config dataclasses::

    [synth]            SynthConfig fields
    [forest]           ForestConfig fields (prediction model)
    [dav]              repeats, seed
    [dav.forest]       ForestConfig for the adversarial classifier (defaults to [forest])
    [experiment]       ExperimentConfig scalar fields, grid_path

A manifest is JSON whose ``"config"`` entry holds the same section mapping,
so either file can be passed wherever a config is accepted.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from pathlib import Path

from . import __version__
from .dav import DavConfig
from .exceptions import ConfigError
from .experiment import ExperimentConfig
from .forest import ForestConfig
from .synth import SynthConfig

Sections = dict[str, dict[str, str]]

KNOWN_SECTIONS = ("synth", "forest", "dav", "dav.forest", "experiment")


def read_sections(path) -> Sections:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    if path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        cfg = data.get("config", data)
        return _check_sections({s: {k: str(v) for k, v in kv.items()} for s, kv in cfg.items()})
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise ConfigError(f"cannot parse {path}: {err}") from None
    return _check_sections({s: dict(cp[s]) for s in cp.sections()})


def _check_sections(sections: Sections) -> Sections:
    unknown = sorted(set(sections) - set(KNOWN_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown} (expected some of {list(KNOWN_SECTIONS)})")
    return sections


def _convert(cls, name, raw: str, default, section_name: str):
    raw = raw.strip()
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    try:
        if isinstance(default, bool) or ftype == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            items = [s for s in (p.strip() for p in raw.split(",")) if s]
            conv = float if any(isinstance(x, float) for x in default) else int
            return tuple(conv(s) for s in items)
        if raw.lower() in ("none", ""):
            if default is None or "Optional" in str(ftype):
                return None
            raise ValueError(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, int) or "int" in str(ftype):
            return int(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value {raw!r}", f"{section_name}.{name}") from None


def build_dataclass(cls, section: dict[str, str], section_name: str, base=None, skip=()):
    base = base if base is not None else cls()
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"unknown key (expected one of {sorted(set(known) - set(skip))})",
                              f"{section_name}.{key}")
        kwargs[key] = _convert(cls, key, raw, getattr(base, key), section_name)
    try:
        return dataclasses.replace(base, **kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err), section_name) from None


def synth_config(sections: Sections) -> SynthConfig:
    return build_dataclass(SynthConfig, sections.get("synth", {}), "synth")


def experiment_config(sections: Sections) -> ExperimentConfig:
    base = ExperimentConfig()
    forest = build_dataclass(ForestConfig, sections.get("forest", {}), "forest", base.forest)
    dav_forest = build_dataclass(ForestConfig, sections.get("dav.forest", {}), "dav.forest", forest)
    dav = build_dataclass(DavConfig, sections.get("dav", {}), "dav", DavConfig(forest=dav_forest),
                          skip=("forest",))
    synth = synth_config(sections)
    exp = sections.get("experiment", {})
    cfg = build_dataclass(ExperimentConfig, exp, "experiment",
                          dataclasses.replace(base, forest=forest, dav=dav, synth=synth),
                          skip=("synth", "forest", "dav"))
    return cfg


def _plain(v):
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def _section_of(obj, skip=()) -> dict[str, str]:
    return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name not in skip}


def experiment_sections(cfg: ExperimentConfig) -> Sections:
    """Fully resolved section mapping that :func:`experiment_config` maps back to ``cfg``."""
    return {
        "experiment": _section_of(cfg, skip=("synth", "forest", "dav")),
        "synth": _section_of(cfg.synth),
        "forest": _section_of(cfg.forest),
        "dav": _section_of(cfg.dav, skip=("forest",)),
        "dav.forest": _section_of(cfg.dav.forest),
    }


def synth_sections(cfg: SynthConfig) -> Sections:
    return {"synth": _section_of(cfg)}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, sections: Sections, seeds: dict, inputs=(), outputs=()) -> Path:
    """JSON record of what produced a set of outputs; reusable as ``--config``."""
    path = Path(path)
    base = path.parent
    manifest = {
        "tool": "geoeval",
        "version": __version__,
        "command": command,
        "config": sections,
        "seeds": seeds,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).relative_to(base).as_posix() if Path(p).is_relative_to(base) else str(p):
                    sha256_file(p) for p in outputs},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path

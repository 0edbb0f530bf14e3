"""INI-style configuration for dataset recipes and experiments.

Recipe files::

    [dataset]
    preset = smoke          # optional starting point
    num_tests = 20
    seed = 0
    crop_len = 16
    crop_count = 6

    [radar]
    frames = 64

    [class stroll]          # any [class ...] sections replace the preset's
    torso_velocity = 0.4, 0.8
    limb_osc_amplitude = 0.02, 0.05
    limb_osc_freq = 0.8, 1.2

Experiment files::

    [experiment]
    manifest = data/manifest.tsv
    model = open3d          # or baseline2d
    seed = 0
    output = report

    [train]
    epochs = 30

    [model]
    hidden = 128
    stages = 1 3 1 16 1, 4 3 2 24 2, 4 5 2 40 2   # expansion kernel stride channels repeats

Relative paths resolve against the config file's directory.
"""
from __future__ import annotations

import configparser
from dataclasses import fields, replace
from pathlib import Path
from typing import Iterable

from . import rdp
from .harness.crossval import ExperimentConfig
from .harness.training import TrainConfig
from .model import DEFAULT_BRANCH, DEFAULT_HIDDEN, BranchSpec, StageSpec
from .radar_sim import ClassProfile, DatasetRecipe, RadarParams, SceneConfig, preset


class ConfigError(ValueError):
    pass


def read_config(path=None, overrides: Iterable[str] = ()) -> configparser.ConfigParser:
    """Parse ``path`` (may be None) and apply ``section.key=value`` overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().rpartition(".")
        if not sep or not dot or not section:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value.strip())
    return cp


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        vals = _floats(value)
        if len(vals) != 2:
            raise ConfigError(f"expected a 'low, high' pair, got {value!r}")
        return tuple(type(like[0])(v) for v in vals)
    return value


def _section_kwargs(cp, section: str, template) -> dict:
    known = {f.name: getattr(template, f.name) for f in fields(template)}
    out = {}
    for key, value in cp.items(section):
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        try:
            out[key] = _coerce(value, known[key])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return out


_PROFILE_TEMPLATE = ClassProfile("template", (0.0, 0.0), (0.0, 0.0), (0.0, 0.0))


def recipe_from_config(cp: configparser.ConfigParser) -> DatasetRecipe:
    ds = cp["dataset"] if cp.has_section("dataset") else {}
    base = preset(ds.get("preset", "smoke"))
    try:
        params = replace(base.params, **(_section_kwargs(cp, "radar", base.params)
                                         if cp.has_section("radar") else {}))
        classes = []
        for section in cp.sections():
            if section.startswith("class "):
                kwargs = _section_kwargs(cp, section, _PROFILE_TEMPLATE)
                kwargs.setdefault("name", section[len("class "):].strip())
                classes.append(ClassProfile(**kwargs))
        scene_config = SceneConfig(tuple(classes)) if classes else base.scene_config
        rdp_opts = rdp.RdpOptions(
            window=_coerce(ds.get("window", "true"), True),
            clutter_filter=_coerce(ds.get("clutter_filter", "false"), True),
        )
        return DatasetRecipe(
            scene_config=scene_config,
            num_tests=int(ds.get("num_tests", base.num_tests)),
            params=params,
            crop_len=int(ds.get("crop_len", base.crop_len)),
            crop_count=int(ds.get("crop_count", base.crop_count)),
            seed=int(ds.get("seed", base.seed)),
            rdp_options=rdp_opts,
            write_spectrograms=_coerce(ds.get("write_spectrograms", "true"), True),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid recipe: {exc}") from exc


def parse_stages(text: str) -> tuple[StageSpec, ...]:
    stages = []
    for chunk in text.split(","):
        vals = [int(v) for v in chunk.split()]
        if len(vals) != 5:
            raise ConfigError(f"stage {chunk!r} needs 'expansion kernel stride channels repeats'")
        stages.append(StageSpec(*vals))
    return tuple(stages)


def format_stages(stages) -> str:
    return ", ".join(f"{s.expansion} {s.kernel} {s.stride} {s.channels} {s.repeats}"
                     for s in stages)


def branch_spec_from_config(cp) -> tuple[BranchSpec, int]:
    if not cp.has_section("model"):
        return DEFAULT_BRANCH, DEFAULT_HIDDEN
    m = cp["model"]
    unknown = set(m) - {"hidden", "stem_channels", "se_reduction", "stages"}
    if unknown:
        raise ConfigError(f"unknown keys in [model]: {sorted(unknown)}")
    spec = BranchSpec(
        stem_channels=int(m.get("stem_channels", DEFAULT_BRANCH.stem_channels)),
        stages=parse_stages(m["stages"]) if "stages" in m else DEFAULT_BRANCH.stages,
        se_reduction=int(m.get("se_reduction", DEFAULT_BRANCH.se_reduction)),
    )
    return spec, int(m.get("hidden", DEFAULT_HIDDEN))


def train_config_from_config(cp) -> TrainConfig:
    base = TrainConfig()
    if not cp.has_section("train"):
        return base
    kwargs = {}
    for key, value in cp.items("train"):
        if key == "lr_decay_every":
            kwargs[key] = None if value.strip().lower() in ("", "none", "auto") else int(value)
        elif key in {f.name for f in fields(base)}:
            kwargs[key] = _coerce(value, getattr(base, key))
        else:
            raise ConfigError(f"unknown key {key!r} in [train]")
    return replace(base, **kwargs)


def experiment_from_config(cp, base_dir=".") -> ExperimentConfig:
    if not cp.has_section("experiment") or "manifest" not in cp["experiment"]:
        raise ConfigError("experiment config needs [experiment] manifest = ...")
    ex = cp["experiment"]
    base_dir = Path(base_dir)
    spec, hidden = branch_spec_from_config(cp)
    output = ex.get("output")
    return ExperimentConfig(
        manifest_path=base_dir / ex["manifest"],
        model_kind=ex.get("model", "open3d"),
        branch_spec=spec,
        hidden=hidden,
        train=train_config_from_config(cp),
        seed=int(ex.get("seed", 0)),
        output_dir=(base_dir / output) if output else None,
    )

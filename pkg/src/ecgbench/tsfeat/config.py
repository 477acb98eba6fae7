"""TOML feature-grid configuration."""

from __future__ import annotations

import itertools
import sys
from importlib import resources
from pathlib import Path

from ..errors import SpecError
from .catalog import SCHEMAS, FeatureSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_VERSION = 1
DEFAULT_CONFIG = "features_v1.toml"


def specs_from_mapping(doc: dict) -> list[FeatureSpec]:
    """Expand a parsed config document into an ordered spec list.

    Each ``[[feature]]`` entry names a ``group`` plus either ``grid`` (the
    cartesian product of per-parameter lists, taken in schema order) or
    ``params`` (an explicit list of parameter tables). Duplicates are dropped.
    """
    version = doc.get("version")
    if version != CONFIG_VERSION:
        raise SpecError(f"unsupported feature config version {version!r}")
    entries = doc.get("feature", [])
    if not isinstance(entries, list) or not entries:
        raise SpecError("feature config lists no [[feature]] entries")
    specs: list[FeatureSpec] = []
    seen = set()
    for entry in entries:
        group = entry.get("group")
        if group not in SCHEMAS:
            raise SpecError(f"unknown feature group {group!r}")
        names = [p[0] for p in SCHEMAS[group]]
        if "grid" in entry and "params" in entry:
            raise SpecError(f"{group}: give either grid or params, not both")
        if "params" in entry:
            combos = [dict(p) for p in entry["params"]]
        else:
            grid = entry.get("grid", {})
            if set(grid) != set(names):
                raise SpecError(f"{group} grid must cover exactly {names}")
            lists = [grid[n] if isinstance(grid[n], list) else [grid[n]] for n in names]
            combos = [dict(zip(names, values)) for values in itertools.product(*lists)]
        for combo in combos:
            spec = FeatureSpec.make(group, **combo)
            if spec not in seen:
                seen.add(spec)
                specs.append(spec)
    return specs


def load_config(path: str | Path | None = None) -> list[FeatureSpec]:
    """Specs from a TOML file, or the packaged default grid when ``path`` is None."""
    if path is None:
        text = resources.files("ecgbench.data").joinpath(DEFAULT_CONFIG).read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"invalid feature config: {exc}") from exc
    return specs_from_mapping(doc)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(v)


def dump_config(specs: list[FeatureSpec]) -> str:
    """Explicit-params TOML for ``specs``; ``load_config`` reads it back unchanged."""
    out = [f"version = {CONFIG_VERSION}"]
    for spec in specs:
        out.append("")
        out.append("[[feature]]")
        out.append(f'group = "{spec.group}"')
        body = ", ".join(f"{k} = {_toml_value(v)}" for k, v in spec.params)
        out.append(f"params = [{{ {body} }}]" if body else "params = [{}]")
    return "\n".join(out) + "\n"

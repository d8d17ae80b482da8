"""Object and texture catalog for the tabletop world.

The catalog is the closed vocabulary every other module resolves names
against: scene sampling, captions, abstraction prompts, and the policy
encoders all index into it. Capped at 48 object kinds and 17 textures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

MAX_KINDS = 48
MAX_TEXTURES = 17


class CatalogError(ValueError):
    """Raised for malformed catalogs or unknown catalog names."""


@dataclass(frozen=True)
class ObjectKind:
    id: int
    name: str


@dataclass(frozen=True)
class TextureKind:
    id: int
    name: str
    display_color: tuple[int, int, int]


@dataclass(frozen=True)
class Catalog:
    kinds: tuple[ObjectKind, ...]
    textures: tuple[TextureKind, ...]

    def __post_init__(self):
        if len(self.kinds) > MAX_KINDS:
            raise CatalogError(f"catalog has {len(self.kinds)} kinds, cap is {MAX_KINDS}")
        if len(self.textures) > MAX_TEXTURES:
            raise CatalogError(
                f"catalog has {len(self.textures)} textures, cap is {MAX_TEXTURES}"
            )
        kind_names = [k.name for k in self.kinds]
        texture_names = [t.name for t in self.textures]
        if len(set(kind_names)) != len(kind_names):
            raise CatalogError("duplicate kind names in catalog")
        if len(set(texture_names)) != len(texture_names):
            raise CatalogError("duplicate texture names in catalog")

    @property
    def kind_names(self) -> tuple[str, ...]:
        return tuple(k.name for k in self.kinds)

    @property
    def texture_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.textures)

    def kind_id(self, name: str) -> int:
        for k in self.kinds:
            if k.name == name:
                return k.id
        raise CatalogError(f"unknown object kind: {name!r}")

    def texture_id(self, name: str) -> int:
        for t in self.textures:
            if t.name == name:
                return t.id
        raise CatalogError(f"unknown texture: {name!r}")

    def texture_color(self, name: str) -> tuple[int, int, int]:
        for t in self.textures:
            if t.name == name:
                return t.display_color
        raise CatalogError(f"unknown texture: {name!r}")

    def has_kind(self, name: str) -> bool:
        return name in self.kind_names

    def has_texture(self, name: str) -> bool:
        return name in self.texture_names

    def kinds_except(self, excluded: set[str]) -> frozenset[str]:
        """Expand an ALL-minus-exclusions kind set against the catalog."""
        unknown = excluded - set(self.kind_names)
        if unknown:
            raise CatalogError(f"unknown kinds in exclusion list: {sorted(unknown)}")
        return frozenset(n for n in self.kind_names if n not in excluded)


def load_catalog(path: str | Path | None = None) -> Catalog:
    """Load a catalog from JSON; defaults to the packaged catalog."""
    if path is None:
        data = json.loads(
            resources.files("plga").joinpath("fixtures/catalog.json").read_text("utf-8")
        )
    else:
        data = json.loads(Path(path).read_text("utf-8"))
    kinds = tuple(ObjectKind(id=k["id"], name=k["name"]) for k in data["kinds"])
    textures = tuple(
        TextureKind(id=t["id"], name=t["name"], display_color=tuple(t["display_color"]))
        for t in data["textures"]
    )
    return Catalog(kinds=kinds, textures=textures)


_DEFAULT: Catalog | None = None


def default_catalog() -> Catalog:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_catalog()
    return _DEFAULT

"""Invertible state captioner.

caption() turns a scene into a textual feature set ("texture kind"
strings); instantiate() is the inverse restricted to a concrete scene:
it keeps the objects whose features survive an abstraction and renders
them as a binary cell mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, default_catalog
from .world import Scene

CAPTION_SEPARATOR = " "


class CaptionResolutionError(ValueError):
    """A kept feature set references names outside the catalog."""


@dataclass(frozen=True)
class FeatureSet:
    """Textual features of a scene, or an abstraction thereof.

    textures=None means "any texture" (the abstraction judged texture
    irrelevant); an explicit set restricts retention to those textures.
    """

    kinds: frozenset[str]
    textures: frozenset[str] | None
    object_captions: tuple[str, ...] = ()

    @property
    def all_textures(self) -> bool:
        return self.textures is None

    def to_dict(self) -> dict:
        return {
            "kinds": sorted(self.kinds),
            "textures": "ALL" if self.textures is None else sorted(self.textures),
            "object_captions": list(self.object_captions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSet":
        textures = data["textures"]
        return cls(
            kinds=frozenset(data["kinds"]),
            textures=None if textures == "ALL" else frozenset(textures),
            object_captions=tuple(data.get("object_captions", ())),
        )


@dataclass(frozen=True)
class AbstractState:
    """Binary mask over the grid plus the retained object uids."""

    mask: np.ndarray  # (H, W) int8
    kept_uids: frozenset[int]
    source_scene_id: str

    def to_dict(self) -> dict:
        return {
            "mask": self.mask.tolist(),
            "kept_uids": sorted(self.kept_uids),
            "source_scene_id": self.source_scene_id,
        }


def object_caption(kind: str, texture: str) -> str:
    return f"{texture}{CAPTION_SEPARATOR}{kind}"


def caption(scene: Scene) -> FeatureSet:
    """One "texture kind" caption per object; kinds/textures are the unions."""
    captions = tuple(object_caption(o.kind, o.texture) for o in scene.objects)
    return FeatureSet(
        kinds=frozenset(o.kind for o in scene.objects),
        textures=frozenset(o.texture for o in scene.objects),
        object_captions=captions,
    )


def instantiate(scene: Scene, kept: FeatureSet, catalog: Catalog | None = None) -> AbstractState:
    """Mask the scene down to objects whose kind and texture are kept."""
    catalog = catalog or default_catalog()
    unknown_kinds = sorted(k for k in kept.kinds if not catalog.has_kind(k))
    unknown_textures = (
        [] if kept.textures is None else sorted(t for t in kept.textures if not catalog.has_texture(t))
    )
    if unknown_kinds or unknown_textures:
        raise CaptionResolutionError(
            f"unknown names in kept feature set: kinds={unknown_kinds} textures={unknown_textures}"
        )
    w, h = scene.grid_dims
    mask = np.zeros((h, w), dtype=np.int8)
    kept_uids = set()
    for obj in scene.objects:
        if obj.kind in kept.kinds and (kept.textures is None or obj.texture in kept.textures):
            mask[obj.cell[0], obj.cell[1]] = 1
            kept_uids.add(obj.uid)
    return AbstractState(mask=mask, kept_uids=frozenset(kept_uids), source_scene_id=scene.scene_id)

"""Task- and preference-conditioned state abstraction.

For each kind and texture present in a scene's caption, ask the LM
whether the candidate is task-relevant (optionally conditioned on an
inferred preference), assemble the yes-answers into a kept feature set,
and instantiate it against the scene as a binary mask.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .captioner import AbstractState, FeatureSet, caption, instantiate
from .catalog import Catalog, default_catalog
from .gateway import (
    ChatExchange,
    GatewayError,
    LmBackendConfig,
    complete,
    parse_yes_no,
)
from .prompts import GROUP_OBJECT_COLOR, GROUP_OBJECT_TYPE, render_abstraction_prompt
from .world import Scene


class AbstractionError(RuntimeError):
    """A feature query failed; carries the transcript gathered so far."""

    def __init__(self, message: str, exchanges: list[ChatExchange]):
        super().__init__(message)
        self.exchanges = exchanges


@dataclass
class AbstractionQueryResult:
    utterance: str
    preference: str | None
    kept_kinds: frozenset[str]
    kept_textures: frozenset[str] | None  # None = texture judged irrelevant
    feature_set: FeatureSet
    state: AbstractState
    exchanges: list[ChatExchange] = field(default_factory=list)
    cache_hits: int = 0


class Abstractor:
    """Feature-query engine with a per-(utterance, preference, group,
    candidate) response cache shared across scenes."""

    def __init__(
        self,
        backend: LmBackendConfig,
        catalog: Catalog | None = None,
        cache_path: str | Path | None = None,
    ):
        self.backend = backend
        self.catalog = catalog or default_catalog()
        self.cache_path = Path(cache_path) if cache_path else None
        self._cache: dict[tuple[str, str | None, str, str], bool] = {}
        self._lock = threading.Lock()
        if self.cache_path and self.cache_path.exists():
            for key_text, value in json.loads(self.cache_path.read_text("utf-8")).items():
                utterance, preference, group, candidate = json.loads(key_text)
                self._cache[(utterance, preference, group, candidate)] = bool(value)

    def abstract(
        self, scene: Scene, utterance: str, preference: str | None = None
    ) -> AbstractionQueryResult:
        scene_caption = caption(scene)
        exchanges: list[ChatExchange] = []
        cache_hits = 0
        kept_kinds: set[str] = set()
        kept_textures: set[str] = set()
        texture_candidates = sorted(scene_caption.textures or ())
        for group, candidates in (
            (GROUP_OBJECT_TYPE, sorted(scene_caption.kinds)),
            (GROUP_OBJECT_COLOR, texture_candidates),
        ):
            for candidate in candidates:
                keep, hit = self._query(utterance, preference, group, candidate, exchanges)
                cache_hits += hit
                if keep:
                    (kept_kinds if group == GROUP_OBJECT_TYPE else kept_textures).add(candidate)

        # All evaluated textures accepted means texture carries no signal
        # for this rule; record that as the unrestricted marker so kept
        # sets compare equal across scenes with different inventories.
        textures: frozenset[str] | None
        if len(kept_textures) == len(texture_candidates):
            textures = None
        else:
            textures = frozenset(kept_textures)
        feature_set = FeatureSet(
            kinds=frozenset(kept_kinds),
            textures=textures,
            object_captions=tuple(
                c
                for c, obj in zip(scene_caption.object_captions, scene.objects)
                if obj.kind in kept_kinds and (textures is None or obj.texture in textures)
            ),
        )
        state = instantiate(scene, feature_set, self.catalog)
        return AbstractionQueryResult(
            utterance=utterance,
            preference=preference,
            kept_kinds=feature_set.kinds,
            kept_textures=feature_set.textures,
            feature_set=feature_set,
            state=state,
            exchanges=exchanges,
            cache_hits=cache_hits,
        )

    def _query(
        self,
        utterance: str,
        preference: str | None,
        group: str,
        candidate: str,
        exchanges: list[ChatExchange],
    ) -> tuple[bool, int]:
        key = (utterance, preference, group, candidate)
        with self._lock:
            if key in self._cache:
                return self._cache[key], 1
        system, user = render_abstraction_prompt(
            utterance, preference, group, candidate, self.catalog
        )
        try:
            exchange = complete(self.backend, system, user)
            exchanges.append(exchange)
            keep = parse_yes_no(exchange.reply)
        except (GatewayError, ValueError) as exc:
            raise AbstractionError(
                f"feature query failed for {group} {candidate!r}: {exc}", exchanges
            ) from exc
        with self._lock:
            self._cache[key] = keep
            if self.cache_path:
                self._persist_locked()
        return keep, 0

    def _persist_locked(self) -> None:
        data = {
            json.dumps(list(key)): value for key, value in sorted(self._cache.items())
        }
        self.cache_path.write_text(json.dumps(data, indent=0, sort_keys=True), "utf-8")


_SHARED: dict[LmBackendConfig, Abstractor] = {}
_SHARED_LOCK = threading.Lock()


def shared_abstractor(backend: LmBackendConfig, catalog: Catalog | None = None) -> Abstractor:
    """One cache-sharing Abstractor per backend config."""
    with _SHARED_LOCK:
        inst = _SHARED.get(backend)
        if inst is None:
            inst = Abstractor(backend, catalog)
            _SHARED[backend] = inst
        return inst


def reset_abstractor_cache() -> None:
    with _SHARED_LOCK:
        _SHARED.clear()


def lga_abstract(
    scene: Scene, utterance: str, backend: LmBackendConfig
) -> tuple[FeatureSet, AbstractState]:
    """Language-only abstraction: per-feature relevance with no preference."""
    result = shared_abstractor(backend).abstract(scene, utterance, None)
    return result.feature_set, result.state


def plga_abstract(
    scene: Scene, utterance: str, preference: str, backend: LmBackendConfig
) -> tuple[FeatureSet, AbstractState]:
    """Preference-conditioned abstraction; the preference must be non-empty."""
    if not preference:
        raise ValueError("plga_abstract requires a non-empty preference")
    result = shared_abstractor(backend).abstract(scene, utterance, preference)
    return result.feature_set, result.state


def feature_sets_equal(a: FeatureSet, b: FeatureSet) -> bool:
    """Equality of the abstraction rule itself (kinds + textures), not of
    masks, which differ whenever object positions do."""
    return a.kinds == b.kinds and a.textures == b.textures

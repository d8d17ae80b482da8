"""Prompt rendering for the two LM query families.

Templates are frozen byte-for-byte (golden-tested): any edit here
invalidates recorded cassettes and the scripted backend's prompt
parsing, so change them only together with the goldens.
"""

from __future__ import annotations

from .captioner import FeatureSet
from .catalog import Catalog, default_catalog

GROUP_OBJECT_TYPE = "object type"
GROUP_OBJECT_COLOR = "object color"
GROUPS = (GROUP_OBJECT_TYPE, GROUP_OBJECT_COLOR)

PREFERENCE_MARKER = "There are two scenes."
ANSWER_MARKER = "Final answer:"

PREFERENCE_SYSTEM_TEMPLATE = """There are two scenes. The user takes a different trajectory in the first scene vs. the second.

The first and second scene both have the following features:
{scene_intersection}
The first and second scene differ on the following:
First scene-
{scene1_difference}
Second scene-
{scene2_difference}

What are the most likely high-level preferences to have caused the difference in the user's behavior and why? The user took different trajectories in the two scenes. Please give a list of brief preferences (with only one reason) and assign a confidence score to each answer, in the format [["answer", score], ["answer", score], ...]. Please ensure all scores sum up to 1."""

PREFERENCE_USER_TEMPLATE = """The task given to the user was: "{utterance}"."""

ABSTRACTION_SYSTEM_TEMPLATE = """You are interfacing with a robotics environment that has a robotic arm learning to manipulate objects based on some linguistic command (e.g. "pick up the red bowl"). At each interaction, the researcher will specify the command that you need to teach the robot. In order to teach the robot, you will need to help design the training distribution by specifying what properties task-relevant objects can have based on the given command. Objects in this environment have two properties: object type, object color. Any object type can be paired with any color, but an object can only take on exactly one object type and exactly one color.
Object types:
{object_list}
Object colors:
{object_colors}"""

ABSTRACTION_USER_TEMPLATE = """The command is "{rule}". In an instantiation of the environment that contains only some subset of the object types and colors, could the target object have {group} "{candidate}"? Think step-by-step and then finish with a new line that says "Final answer:" followed by "yes" or "no"."""

PREFERENCE_CLAUSE = "; preference: "


class PromptError(ValueError):
    """Unrenderable prompt (unknown candidate, bad group)."""


def _caption_block(captions: set[str]) -> str:
    return "\n".join(sorted(captions))


def render_preference_prompt(
    caption_a: FeatureSet, caption_b: FeatureSet, utterance: str
) -> tuple[str, str]:
    """Fill the preference-query template from two scene captions."""
    set_a = set(caption_a.object_captions)
    set_b = set(caption_b.object_captions)
    system = PREFERENCE_SYSTEM_TEMPLATE.format(
        scene_intersection=_caption_block(set_a & set_b),
        scene1_difference=_caption_block(set_a - set_b),
        scene2_difference=_caption_block(set_b - set_a),
    )
    user = PREFERENCE_USER_TEMPLATE.format(utterance=utterance)
    return system, user


def abstraction_rule(utterance: str, preference: str | None) -> str:
    """The {rule} slot: the utterance, with the preference suffixed when present."""
    if preference:
        return f"{utterance}{PREFERENCE_CLAUSE}{preference}"
    return utterance


def render_abstraction_prompt(
    utterance: str,
    preference: str | None,
    group: str,
    candidate: str,
    catalog: Catalog | None = None,
) -> tuple[str, str]:
    """Fill the per-feature abstraction query for one candidate."""
    catalog = catalog or default_catalog()
    if group not in GROUPS:
        raise PromptError(f"unknown feature group {group!r}")
    if group == GROUP_OBJECT_TYPE and not catalog.has_kind(candidate):
        raise PromptError(f"candidate {candidate!r} is not a catalog object type")
    if group == GROUP_OBJECT_COLOR and not catalog.has_texture(candidate):
        raise PromptError(f"candidate {candidate!r} is not a catalog color")
    system = ABSTRACTION_SYSTEM_TEMPLATE.format(
        object_list=", ".join(catalog.kind_names),
        object_colors=", ".join(catalog.texture_names),
    )
    user = ABSTRACTION_USER_TEMPLATE.format(
        rule=abstraction_rule(utterance, preference), group=group, candidate=candidate
    )
    return system, user

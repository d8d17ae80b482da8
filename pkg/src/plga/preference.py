"""Preference inference over demonstration pairs.

Detects behavior changes the utterance cannot explain (distance above
kappa with equal language-only abstractions), queries the LM for
candidate hidden preferences with normalized probabilities, and either
takes the argmax (confident) or asks the human (entropy at or above
epsilon).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Protocol, Sequence

import numpy as np

from .abstraction import feature_sets_equal, shared_abstractor
from .captioner import caption
from .gateway import LmBackendConfig, complete, parse_preference_reply
from .prompts import render_preference_prompt
from .util import stable_seed
from .world import Trajectory, trajectory_distance

PROBABILITY_TOLERANCE = 1e-6


class PreferenceDomainError(ValueError):
    """Probabilities outside the simplex."""


class NeedsHumanError(RuntimeError):
    """Active resolution reached without a bound human port."""


class NoDeltaPairError(RuntimeError):
    """A pipeline needed a behavior-change pair but none was found."""


def entropy(probs: Sequence[float]) -> float:
    """Shannon entropy in nats with 0*ln(0) = 0."""
    probs = list(probs)
    if any(p < -PROBABILITY_TOLERANCE for p in probs):
        raise PreferenceDomainError(f"negative probability in {probs}")
    total = sum(probs)
    if abs(total - 1.0) > PROBABILITY_TOLERANCE:
        raise PreferenceDomainError(f"probabilities sum to {total}, expected 1")
    return -sum(p * math.log(p) for p in probs if p > 0.0)


@dataclass(frozen=True)
class PreferenceHypothesis:
    text: str
    probability: float


@dataclass(frozen=True)
class TrajectoryPair:
    tau: Trajectory
    tau_prime: Trajectory
    distance: float
    lga_equal: bool


@dataclass(frozen=True)
class DeltaCheckResult:
    pair: TrajectoryPair
    delta: bool

    def to_dict(self) -> dict:
        return {
            "scene_a": self.pair.tau.initial.scene_id,
            "scene_b": self.pair.tau_prime.initial.scene_id,
            "distance": self.pair.distance,
            "lga_equal": self.pair.lga_equal,
            "delta": self.delta,
        }


@dataclass(frozen=True)
class PreferenceDistribution:
    hypotheses: tuple[PreferenceHypothesis, ...]
    entropy: float
    source_pair: DeltaCheckResult | None = None
    exchange: object = field(default=None, compare=False, repr=False)

    @classmethod
    def from_pairs(
        cls,
        pairs: Sequence[tuple[str, float]],
        source_pair: DeltaCheckResult | None = None,
        exchange=None,
    ) -> "PreferenceDistribution":
        probs = [p for _, p in pairs]
        return cls(
            hypotheses=tuple(PreferenceHypothesis(text=t, probability=p) for t, p in pairs),
            entropy=entropy(probs),
            source_pair=source_pair,
            exchange=exchange,
        )

    def argmax_text(self) -> str:
        # Ties break toward the earliest hypothesis, i.e. the LM's own ranking.
        best = max(range(len(self.hypotheses)), key=lambda i: (self.hypotheses[i].probability, -i))
        return self.hypotheses[best].text

    def to_dict(self) -> dict:
        return {
            "hypotheses": [[h.text, h.probability] for h in self.hypotheses],
            "entropy": self.entropy,
        }


@dataclass(frozen=True)
class PreferenceResolution:
    theta_hat: str
    mode: str  # passive | active
    distribution: PreferenceDistribution
    human_answer_raw: str | None = None

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "mode": self.mode,
            "distribution": self.distribution.to_dict(),
            "human_answer_raw": self.human_answer_raw,
        }


class HumanQueryPort(Protocol):
    """Blocking contract the pipeline suspends on in active mode."""

    def ask(self, distribution: PreferenceDistribution, context: str) -> str: ...


class ScriptedHumanPort:
    """Canned answers for tests and non-interactive runs."""

    def __init__(self, answers: Sequence[str]):
        self._answers = list(answers)
        self.asked: list[PreferenceDistribution] = []

    def ask(self, distribution: PreferenceDistribution, context: str) -> str:
        self.asked.append(distribution)
        if not self._answers:
            raise NeedsHumanError("scripted human port ran out of answers")
        return self._answers.pop(0)


def find_delta_pairs(
    dataset: Sequence[Trajectory],
    utterance: str,
    kappa: float,
    n_samples: int,
    backend: LmBackendConfig,
    rng_seed: int,
) -> list[DeltaCheckResult]:
    """Sample unordered trajectory pairs and flag unexplained behavior
    changes: distance above kappa with equal language-only kept sets."""
    if len(dataset) < 2:
        raise ValueError("need at least two trajectories to compare")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    all_pairs = list(combinations(range(len(dataset)), 2))
    rng = np.random.default_rng(stable_seed("delta-pairs", utterance, rng_seed))
    order = rng.permutation(len(all_pairs))
    chosen = [all_pairs[i] for i in order[: min(n_samples, len(all_pairs))]]
    abstractor = shared_abstractor(backend)
    results = []
    for i, j in chosen:
        tau, tau_prime = dataset[i], dataset[j]
        distance = trajectory_distance(tau, tau_prime)
        fs_a = abstractor.abstract(tau.initial, utterance).feature_set
        fs_b = abstractor.abstract(tau_prime.initial, utterance).feature_set
        lga_equal = feature_sets_equal(fs_a, fs_b)
        pair = TrajectoryPair(tau=tau, tau_prime=tau_prime, distance=distance, lga_equal=lga_equal)
        results.append(DeltaCheckResult(pair=pair, delta=bool(distance > kappa and lga_equal)))
    return results


def query_preferences(
    pair: DeltaCheckResult, utterance: str, backend: LmBackendConfig
) -> PreferenceDistribution:
    """Ask the LM which hidden preferences explain a behavior change."""
    if not pair.delta:
        raise ValueError("query_preferences requires a pair with delta=1")
    caption_a = caption(pair.pair.tau.initial)
    caption_b = caption(pair.pair.tau_prime.initial)
    system, user = render_preference_prompt(caption_a, caption_b, utterance)
    exchange = complete(backend, system, user)
    pairs = parse_preference_reply(exchange.reply)
    return PreferenceDistribution.from_pairs(pairs, source_pair=pair, exchange=exchange)


def resolve(
    dist: PreferenceDistribution,
    epsilon: float,
    human: HumanQueryPort | None,
) -> PreferenceResolution:
    """Argmax below the entropy gate; otherwise ask the human directly."""
    if dist.entropy < epsilon:
        return PreferenceResolution(
            theta_hat=dist.argmax_text(), mode="passive", distribution=dist
        )
    if human is None:
        raise NeedsHumanError(
            f"entropy {dist.entropy:.4f} >= epsilon {epsilon}; a human port is required"
        )
    context = "The assistant is unsure which preference explains the behavior change."
    answer = human.ask(dist, context)
    return PreferenceResolution(
        theta_hat=answer, mode="active", distribution=dist, human_answer_raw=answer
    )

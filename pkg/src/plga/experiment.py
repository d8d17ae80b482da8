"""End-to-end experiment harness.

Loads scenario fixtures, generates oracle demonstration datasets, runs
the four pipelines (GCBC, LGA, passive PLGA, active PLGA), evaluates
policies against the oracle on held-out scenes, and tabulates the
entropy probe across scenarios.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import gateway
from .abstraction import shared_abstractor
from .catalog import Catalog, default_catalog
from .gateway import LmBackendConfig
from .policy import (
    EncodedExample,
    PolicyModel,
    TrainConfig,
    encode_abstract,
    encode_gcbc,
    predict,
    train,
)
from .preference import (
    HumanQueryPort,
    NoDeltaPairError,
    PreferenceResolution,
    ScriptedHumanPort,
    find_delta_pairs,
    query_preferences,
    resolve,
)
from .util import canonical_json, sha256_hex, stable_seed
from .world import (
    GenerationError,
    ObjectPool,
    PreferenceProfile,
    Scene,
    TaskSpec,
    Trajectory,
    flatten_action,
    oracle_demo,
    sample_scene,
)

METHODS = ("gcbc", "lga", "plga_passive", "plga_active")

DEFAULTS = {
    "kappa": 0.2,
    "epsilon": 1.0,
    "alpha": 0.1,
    "n_present": 10,
    "n_absent": 10,
    "n_test": 5,
    "n_pair_samples": 40,
}

TRAIN_CONFIG = TrainConfig(learning_rate=0.05, epochs=2000, hidden_dims=(64, 64))


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# scenario fixtures


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    section: str  # generic | ambiguous
    family: str
    utterance: str
    true_distribution: dict
    profile: PreferenceProfile
    task_train: TaskSpec
    task_test: TaskSpec
    human_answer: str | None = None
    kappa: float = DEFAULTS["kappa"]
    epsilon: float = DEFAULTS["epsilon"]
    alpha: float = DEFAULTS["alpha"]
    n_present: int = DEFAULTS["n_present"]
    n_absent: int = DEFAULTS["n_absent"]
    n_test: int = DEFAULTS["n_test"]
    n_pair_samples: int = DEFAULTS["n_pair_samples"]


def _resolve_pool(data: dict | None, split: str) -> ObjectPool | None:
    if data is None:
        return None
    if "kinds" not in data:  # {"train": {...}, "test": {...}} form
        data = data[split]
    kinds = data["kinds"]
    textures = data["textures"]
    if isinstance(kinds, dict):
        kinds = kinds[split]
    if isinstance(textures, dict):
        textures = textures[split]
    return ObjectPool(kinds=tuple(kinds), textures=tuple(textures))


def _resolve_kind_set(value, catalog: Catalog) -> frozenset[str]:
    if isinstance(value, dict):
        return catalog.kinds_except(set(value["all_except"]))
    return frozenset(value)


def _resolve_texture_set(value, catalog: Catalog) -> frozenset[str] | None:
    if value == "ALL" or value is None:
        return None
    return frozenset(value)


def load_profile(data: dict, catalog: Catalog | None = None) -> PreferenceProfile:
    catalog = catalog or default_catalog()
    return PreferenceProfile(
        name=data["name"],
        allowed_kinds=_resolve_kind_set(data["allowed_kinds"], catalog),
        allowed_textures=_resolve_texture_set(data.get("allowed_textures", "ALL"), catalog),
        avoid_kinds=frozenset(data.get("avoid_kinds", ())),
        avoid_requires_texture_match=data.get("avoid_requires_texture_match", True),
    )


def _build_task(data: dict, split: str) -> TaskSpec:
    held = data.get("held")
    goal = data.get("goal") or {}
    return TaskSpec(
        id=data["id"],
        family=data["family"],
        utterance=data["utterance"],
        target=_resolve_pool(data["target"], split),
        trigger=_resolve_pool(data.get("trigger"), split),
        absent_trigger=_resolve_pool(data.get("absent_trigger"), split),
        distractor=_resolve_pool(data["distractor"], split),
        companion_kind=data.get("companion_kind"),
        held=(held["kind"], held["texture"]) if held else None,
        goal_kind=goal.get("kind"),
        goal_texture=goal.get("texture"),
    )


def load_spec(path: str | Path, catalog: Catalog | None = None) -> ExperimentSpec:
    data = json.loads(Path(path).read_text("utf-8"))
    return spec_from_dict(data, catalog)


def spec_from_dict(data: dict, catalog: Catalog | None = None) -> ExperimentSpec:
    catalog = catalog or default_catalog()
    overrides = {k: data[k] for k in DEFAULTS if k in data}
    spec = ExperimentSpec(
        id=data["id"],
        section=data.get("section", "generic"),
        family=data["family"],
        utterance=data["utterance"],
        true_distribution=data["true_distribution"],
        profile=load_profile(data["profile"], catalog),
        task_train=_build_task(data, "train"),
        task_test=_build_task(data, "test"),
        human_answer=data.get("human_answer"),
        **overrides,
    )
    validate_true_distribution(spec, catalog)
    return spec


def validate_true_distribution(spec: ExperimentSpec, catalog: Catalog | None = None) -> None:
    """Every name in a scenario's true distribution must resolve."""
    catalog = catalog or default_catalog()
    objects = spec.true_distribution["objects"]
    if isinstance(objects, dict):
        objects = objects["all_except"]
    for name in objects:
        catalog.kind_id(name)
    textures = spec.true_distribution["textures"]
    if textures != "ALL":
        for name in textures:
            catalog.texture_id(name)


def builtin_scenario_ids() -> list[str]:
    base = resources.files("plga").joinpath("fixtures/scenarios")
    return sorted(p.name[: -len(".json")] for p in base.iterdir() if p.name.endswith(".json"))


def load_builtin_spec(spec_id: str, catalog: Catalog | None = None) -> ExperimentSpec:
    base = resources.files("plga").joinpath("fixtures/scenarios")
    entry = base.joinpath(f"{spec_id}.json")
    if not entry.is_file():
        raise ExperimentError(f"unknown scenario {spec_id!r}; known: {builtin_scenario_ids()}")
    return spec_from_dict(json.loads(entry.read_text("utf-8")), catalog)


def builtin_rules_path() -> str:
    return str(resources.files("plga").joinpath("fixtures/rules.json"))


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DemoRecord:
    scene: Scene
    trajectory: Trajectory
    utterance: str

    def to_dict(self) -> dict:
        return {
            "scene": self.scene.to_dict(),
            "trajectory": self.trajectory.to_dict(),
            "utterance": self.utterance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DemoRecord":
        return cls(
            scene=Scene.from_dict(data["scene"]),
            trajectory=Trajectory.from_dict(data["trajectory"]),
            utterance=data["utterance"],
        )


@dataclass
class DemoDataset:
    demos: list[DemoRecord]
    metadata: dict

    @property
    def trajectories(self) -> list[Trajectory]:
        return [d.trajectory for d in self.demos]

    def to_jsonl(self) -> str:
        lines = [canonical_json({"metadata": self.metadata})]
        lines += [canonical_json(d.to_dict()) for d in self.demos]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "DemoDataset":
        lines = [line for line in text.splitlines() if line.strip()]
        metadata = json.loads(lines[0])["metadata"]
        demos = [DemoRecord.from_dict(json.loads(line)) for line in lines[1:]]
        return cls(demos=demos, metadata=metadata)

    def content_hash(self) -> str:
        return sha256_hex(self.to_jsonl())


def generate_dataset(spec: ExperimentSpec, seed: int, catalog: Catalog | None = None) -> DemoDataset:
    """n_present + n_absent oracle demos on the training distribution."""
    catalog = catalog or default_catalog()
    demos: list[DemoRecord] = []
    for present, count in ((True, spec.n_present), (False, spec.n_absent)):
        for i in range(count):
            record = None
            last_error: Exception | None = None
            for retry in range(5):
                scene_seed = stable_seed("demo", spec.id, seed, present, i, retry)
                try:
                    scene = sample_scene(spec.task_train, spec.profile, present, scene_seed, catalog)
                    traj = oracle_demo(scene, spec.task_train, spec.profile)
                    record = DemoRecord(scene=scene, trajectory=traj, utterance=spec.utterance)
                    break
                except GenerationError as exc:
                    last_error = exc
            if record is None:
                raise GenerationError(
                    f"could not generate demo {i} (present={present}) for {spec.id}: {last_error}"
                )
            demos.append(record)
    return DemoDataset(demos=demos, metadata={"spec_id": spec.id, "seed": seed})


# ---------------------------------------------------------------------------
# trained policies


@dataclass
class TrainedPolicy:
    """A trained model plus the state encoder it was trained with.

    LGA/PLGA policies re-run the abstraction on every new scene (cached
    feature queries make this cheap); GCBC encodes raw state + language.
    """

    model: PolicyModel
    method: str
    spec: ExperimentSpec
    backend: LmBackendConfig | None
    resolution: PreferenceResolution | None = None

    def encode(self, scene: Scene) -> np.ndarray:
        if self.method == "gcbc":
            return encode_gcbc(scene, self.spec.utterance)
        abstractor = shared_abstractor(self.backend)
        preference = self.resolution.theta_hat if self.resolution else None
        result = abstractor.abstract(scene, self.spec.utterance, preference)
        return encode_abstract(result.state)

    def predict_params(self, scene: Scene) -> np.ndarray:
        return predict(self.model, self.encode(scene), clamp=True)


class OraclePolicy:
    """Cheating baseline: replays the oracle demonstrator at eval time."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec

    def predict_params(self, scene: Scene) -> np.ndarray:
        demo = oracle_demo(scene, self.spec.task_test, self.spec.profile)
        return flatten_action(demo.actions[0])


def infer_preference(
    spec: ExperimentSpec,
    dataset: DemoDataset,
    method: str,
    backend: LmBackendConfig,
    human: HumanQueryPort | None,
    log: dict,
) -> PreferenceResolution | None:
    """Behavior-change detection and preference resolution (PLGA methods
    only; GCBC/LGA return None and issue no preference queries)."""
    if method not in ("plga_passive", "plga_active"):
        return None
    seed = dataset.metadata.get("seed", 0)
    delta_results = find_delta_pairs(
        dataset.trajectories,
        spec.utterance,
        spec.kappa,
        spec.n_pair_samples,
        backend,
        rng_seed=seed,
    )
    log["delta_pairs"] = [r.to_dict() for r in delta_results]
    first = next((r for r in delta_results if r.delta), None)
    if first is None:
        raise NoDeltaPairError(
            f"no behavior-change pair found for {spec.id} (seed {seed}); "
            "the dataset does not exhibit an unexplained change"
        )
    distribution = query_preferences(first, spec.utterance, backend)
    if distribution.exchange is not None:
        log["preference_transcript"] = distribution.exchange.to_dict()
    if method == "plga_passive":
        # Passive always takes the LM's best estimate, entropy ignored.
        resolution = PreferenceResolution(
            theta_hat=distribution.argmax_text(),
            mode="passive",
            distribution=distribution,
        )
    else:
        resolution = resolve(distribution, spec.epsilon, human)
    log["resolution"] = resolution.to_dict()
    return resolution


def train_policy(
    spec: ExperimentSpec,
    dataset: DemoDataset,
    method: str,
    backend: LmBackendConfig,
    resolution: PreferenceResolution | None,
    log: dict | None = None,
) -> TrainedPolicy:
    """Encode the demos for the method and fit the behavioral-cloning MLP."""
    examples = []
    target_tag = method if method in ("gcbc", "lga") else "plga"
    abstractor = shared_abstractor(backend) if method != "gcbc" else None
    transcripts: list[dict] = []
    for demo in dataset.demos:
        if method == "gcbc":
            x = encode_gcbc(demo.scene, demo.utterance)
        else:
            preference = resolution.theta_hat if resolution else None
            result = abstractor.abstract(demo.scene, demo.utterance, preference)
            transcripts.extend(e.to_dict() for e in result.exchanges)
            x = encode_abstract(result.state)
        examples.append(
            EncodedExample(
                input=x,
                target=flatten_action(demo.trajectory.actions[0]),
                variant_tag=target_tag,
            )
        )
    seed = dataset.metadata.get("seed", 0)
    cfg = replace(TRAIN_CONFIG, seed=stable_seed("train", spec.id, method, seed) % 2**31)
    model = train(examples, cfg)
    if log is not None and transcripts:
        log["abstraction_transcripts"] = transcripts
    return TrainedPolicy(
        model=model,
        method=method,
        spec=spec,
        backend=None if method == "gcbc" else backend,
        resolution=resolution,
    )


def run_pipeline(
    spec: ExperimentSpec,
    dataset: DemoDataset,
    method: str,
    backend: LmBackendConfig,
    human: HumanQueryPort | None = None,
) -> tuple[TrainedPolicy, dict]:
    """Train one policy variant and log every LM interaction."""
    if method not in METHODS:
        raise ExperimentError(f"unknown method {method!r}; expected one of {METHODS}")
    counts_before = gateway.exchange_counts()
    seed = dataset.metadata.get("seed", 0)
    log: dict = {"spec_id": spec.id, "method": method, "seed": seed}
    resolution = infer_preference(spec, dataset, method, backend, human, log)
    policy = train_policy(spec, dataset, method, backend, resolution, log)
    log["final_loss"] = policy.model.final_loss
    log["loss_curve"] = [float(v) for v in policy.model.loss_history]
    counts_after = gateway.exchange_counts()
    log["lm_exchanges"] = counts_after["total"] - counts_before["total"]
    log["preference_exchanges"] = counts_after["preference"] - counts_before["preference"]
    log["abstraction_exchanges"] = counts_after["abstraction"] - counts_before["abstraction"]
    return policy, log


def evaluate(policy, spec: ExperimentSpec, seed: int, catalog: Catalog | None = None) -> float:
    """Success rate over n_test held-out scenes from the full test
    distribution; a rollout succeeds when every predicted action point
    lies within alpha of the oracle's corresponding point."""
    catalog = catalog or default_catalog()
    successes = 0
    for i in range(spec.n_test):
        present = i % 2 == 0  # alternate trigger-present and trigger-absent states
        scene = sample_scene(
            spec.task_test, spec.profile, present, stable_seed("eval", spec.id, seed, i), catalog
        )
        oracle_traj = oracle_demo(scene, spec.task_test, spec.profile)
        target = flatten_action(oracle_traj.actions[0]).reshape(-1, 2)
        pred = np.asarray(policy.predict_params(scene)).reshape(-1, 2)
        if pred.shape != target.shape:
            raise ExperimentError(
                f"policy output shape {pred.shape} does not match oracle {target.shape}"
            )
        distances = np.linalg.norm(pred - target, axis=1)
        successes += bool(np.all(distances <= spec.alpha))
    return successes / spec.n_test


# ---------------------------------------------------------------------------
# reports


@dataclass
class MethodResult:
    spec_id: str
    method: str
    per_seed: dict[int, float]
    resolutions: list[dict]
    lm_exchanges: int
    preference_exchanges: int

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.per_seed.values())))

    @property
    def stderr(self) -> float:
        rates = list(self.per_seed.values())
        if len(rates) < 2:
            return 0.0
        return float(np.std(rates, ddof=1) / np.sqrt(len(rates)))

    def to_dict(self, include_telemetry: bool = True) -> dict:
        data = {
            "spec_id": self.spec_id,
            "method": self.method,
            "success_mean": round(self.mean, 10),
            "success_stderr": round(self.stderr, 10),
            "per_seed": {str(k): v for k, v in sorted(self.per_seed.items())},
            "resolutions": self.resolutions,
        }
        if include_telemetry:
            # raw completion counts depend on cache warmth; keep them out
            # of the reproducibility surface
            data["lm_exchanges"] = self.lm_exchanges
            data["preference_exchanges"] = self.preference_exchanges
        return data


@dataclass
class EvalReport:
    results: list[MethodResult]
    entropies: list[dict] = field(default_factory=list)
    timing_s: float = 0.0

    def method_mean(self, method: str) -> float:
        rows = [r for r in self.results if r.method == method]
        if not rows:
            raise ExperimentError(f"no results for method {method!r}")
        return float(np.mean([rate for r in rows for rate in r.per_seed.values()]))

    def result_for(self, spec_id: str, method: str) -> MethodResult:
        for r in self.results:
            if r.spec_id == spec_id and r.method == method:
                return r
        raise ExperimentError(f"no result for ({spec_id}, {method})")

    def to_dict(self, include_timing: bool = True, include_telemetry: bool = True) -> dict:
        data = {
            "results": [
                r.to_dict(include_telemetry)
                for r in sorted(self.results, key=lambda r: (r.spec_id, r.method))
            ],
            "entropies": self.entropies,
        }
        if include_timing:
            data["timing_s"] = self.timing_s
        return data

    def canonical_bytes(self) -> bytes:
        """Reproducibility surface: timing and raw exchange telemetry
        excluded (both vary with wall clock / cache warmth), keys sorted."""
        return canonical_json(
            self.to_dict(include_timing=False, include_telemetry=False)
        ).encode("utf-8")

    def to_csv(self) -> str:
        lines = ["spec_id,method,success_mean,success_stderr"]
        for r in sorted(self.results, key=lambda r: (r.spec_id, r.method)):
            lines.append(f"{r.spec_id},{r.method},{r.mean:.4f},{r.stderr:.4f}")
        return "\n".join(lines) + "\n"


def run_matrix(
    specs: list[ExperimentSpec],
    methods: list[str],
    seeds: list[int],
    backend: LmBackendConfig,
    human: HumanQueryPort | None = None,
) -> EvalReport:
    """Run (spec, method, seed) combinations and aggregate a report.

    plga_active runs default to the scenario's scripted human answer
    unless a port is supplied.
    """
    started = time.perf_counter()
    results = []
    run_logs = []
    for spec in specs:
        for method in methods:
            per_seed: dict[int, float] = {}
            resolutions = []
            lm_total = 0
            pref_total = 0
            for seed in seeds:
                dataset = generate_dataset(spec, seed)
                port = human
                if port is None and method == "plga_active" and spec.human_answer:
                    port = ScriptedHumanPort([spec.human_answer])
                policy, log = run_pipeline(spec, dataset, method, backend, port)
                per_seed[seed] = evaluate(policy, spec, seed)
                if "resolution" in log:
                    resolutions.append(log["resolution"])
                lm_total += log["lm_exchanges"]
                pref_total += log["preference_exchanges"]
                run_logs.append(log)
            results.append(
                MethodResult(
                    spec_id=spec.id,
                    method=method,
                    per_seed=per_seed,
                    resolutions=resolutions,
                    lm_exchanges=lm_total,
                    preference_exchanges=pref_total,
                )
            )
    report = EvalReport(results=results, timing_s=time.perf_counter() - started)
    report.run_logs = run_logs  # audit trail, not part of the canonical report
    return report


def entropy_probe(
    specs: list[ExperimentSpec], backend: LmBackendConfig, seed: int = 0
) -> list[dict]:
    """Preference-distribution entropy per scenario from its first
    behavior-change pair."""
    rows = []
    for spec in specs:
        dataset = generate_dataset(spec, seed)
        deltas = find_delta_pairs(
            dataset.trajectories, spec.utterance, spec.kappa, spec.n_pair_samples, backend, seed
        )
        first = next((r for r in deltas if r.delta), None)
        if first is None:
            raise NoDeltaPairError(f"entropy probe: no behavior-change pair for {spec.id}")
        dist = query_preferences(first, spec.utterance, backend)
        rows.append(
            {
                "spec_id": spec.id,
                "section": spec.section,
                "entropy": dist.entropy,
                "n_hypotheses": len(dist.hypotheses),
            }
        )
    return rows

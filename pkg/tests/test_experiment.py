import numpy as np
import pytest

from plga.experiment import (
    DEFAULTS,
    ExperimentError,
    OraclePolicy,
    builtin_scenario_ids,
    entropy_probe,
    evaluate,
    generate_dataset,
    load_builtin_spec,
    run_matrix,
    run_pipeline,
)
from plga.preference import NeedsHumanError, NoDeltaPairError, ScriptedHumanPort
from plga.world import sample_scene


def test_dataset_counts_and_roles(hot_spec):
    dataset = generate_dataset(hot_spec, 3)
    assert len(dataset.demos) == hot_spec.n_present + hot_spec.n_absent == 20
    present = [d for d in dataset.demos if d.scene.scene_id.endswith("present")]
    absent = [d for d in dataset.demos if d.scene.scene_id.endswith("absent")]
    assert len(present) == 10 and len(absent) == 10
    # detours only in feature-present demos
    for d in present:
        action = d.trajectory.actions[0]
        mid_y = (action.start[1] + action.end[1]) / 2
        assert action.via[1] != mid_y
    for d in absent:
        action = d.trajectory.actions[0]
        assert action.via[1] == (action.start[1] + action.end[1]) / 2


def test_gcbc_run_issues_zero_lm_calls(ripe_spec, scripted_backend):
    dataset = generate_dataset(ripe_spec, 1)
    _, log = run_pipeline(ripe_spec, dataset, "gcbc", scripted_backend)
    assert log["lm_exchanges"] == 0


def test_lga_run_issues_no_preference_calls(ripe_spec, scripted_backend):
    dataset = generate_dataset(ripe_spec, 1)
    _, log = run_pipeline(ripe_spec, dataset, "lga", scripted_backend)
    assert log["preference_exchanges"] == 0
    assert log["abstraction_exchanges"] > 0


def test_plga_passive_resolves_stove_theta(hot_spec, scripted_backend):
    dataset = generate_dataset(hot_spec, 1)
    policy, log = run_pipeline(hot_spec, dataset, "plga_passive", scripted_backend)
    assert log["resolution"]["theta_hat"] == "user avoids hot objects"
    assert log["resolution"]["mode"] == "passive"
    assert log["preference_transcript"]["reply"]
    assert policy.resolution.theta_hat == "user avoids hot objects"


def test_plga_active_uniform_rule_invokes_human(scripted_backend):
    spec = load_builtin_spec("pick_favorite_food")
    dataset = generate_dataset(spec, 1)
    port = ScriptedHumanPort(["my favorite food is peaches"])
    _, log = run_pipeline(spec, dataset, "plga_active", scripted_backend, human=port)
    assert len(port.asked) == 1
    assert log["resolution"]["mode"] == "active"
    assert log["resolution"]["theta_hat"] == "my favorite food is peaches"


def test_plga_active_confident_rule_skips_human(hot_spec, scripted_backend):
    dataset = generate_dataset(hot_spec, 1)
    port = ScriptedHumanPort(["should never be asked"])
    _, log = run_pipeline(hot_spec, dataset, "plga_active", scripted_backend, human=port)
    assert port.asked == []
    assert log["resolution"]["mode"] == "passive"


def test_plga_active_needs_human(scripted_backend):
    spec = load_builtin_spec("pick_favorite_food")
    dataset = generate_dataset(spec, 1)
    with pytest.raises(NeedsHumanError):
        run_pipeline(spec, dataset, "plga_active", scripted_backend, human=None)


def test_no_delta_pair_surfaces(ripe_spec, scripted_backend):
    dataset = generate_dataset(ripe_spec, 1)
    # all demos replaced by one identical demo -> no behavior change
    clone = dataset.demos[0]
    dataset.demos = [clone] * 6
    with pytest.raises(NoDeltaPairError):
        run_pipeline(ripe_spec, dataset, "plga_passive", scripted_backend)


def test_unknown_method_rejected(ripe_spec, scripted_backend):
    dataset = generate_dataset(ripe_spec, 1)
    with pytest.raises(ExperimentError):
        run_pipeline(ripe_spec, dataset, "bc", scripted_backend)


def test_oracle_policy_scores_perfectly(ripe_spec):
    assert evaluate(OraclePolicy(ripe_spec), ripe_spec, seed=9) == 1.0


def test_constant_zero_policy_scores_zero(ripe_spec):
    class ZeroPolicy:
        def predict_params(self, scene):
            return np.zeros(2)

    assert evaluate(ZeroPolicy(), ripe_spec, seed=9) == 0.0


def test_eval_scenes_disjoint_from_training(ripe_spec):
    dataset = generate_dataset(ripe_spec, 4)
    train_ids = {d.scene.scene_id for d in dataset.demos}
    eval_ids = set()
    for i in range(ripe_spec.n_test):
        from plga.util import stable_seed

        scene = sample_scene(
            ripe_spec.task_test, ripe_spec.profile, i % 2 == 0, stable_seed("eval", ripe_spec.id, 4, i)
        )
        eval_ids.add(scene.scene_id)
    assert not (train_ids & eval_ids)


def test_report_reproducible_bytes(ripe_spec, scripted_backend):
    seeds = [1, 2]
    a = run_matrix([ripe_spec], ["gcbc", "plga_passive"], seeds, scripted_backend)
    b = run_matrix([ripe_spec], ["gcbc", "plga_passive"], seeds, scripted_backend)
    assert a.canonical_bytes() == b.canonical_bytes()
    assert a.timing_s > 0  # timing measured but excluded from the canonical surface


def test_report_csv_and_lookup(ripe_spec, scripted_backend):
    report = run_matrix([ripe_spec], ["gcbc"], [1], scripted_backend)
    csv = report.to_csv()
    assert csv.splitlines()[0] == "spec_id,method,success_mean,success_stderr"
    assert "pick_ripe,gcbc" in csv
    assert report.result_for("pick_ripe", "gcbc").per_seed[1] >= 0.0
    with pytest.raises(ExperimentError):
        report.result_for("pick_ripe", "lga")


def test_plga_beats_lga_on_ripe(ripe_spec, scripted_backend):
    seeds = [1, 2, 3]
    report = run_matrix([ripe_spec], ["lga", "plga_passive"], seeds, scripted_backend)
    assert report.method_mean("plga_passive") >= report.method_mean("lga")


def test_entropy_probe_rows_straddle_threshold(scripted_backend):
    specs = [load_builtin_spec(s) for s in ("sweep_hot", "pick_favorite_food")]
    rows = entropy_probe(specs, scripted_backend)
    assert len(rows) == 2
    by_id = {r["spec_id"]: r for r in rows}
    assert by_id["sweep_hot"]["entropy"] == pytest.approx(0.6109, abs=1e-3)
    assert by_id["sweep_hot"]["entropy"] < 1.0
    assert by_id["pick_favorite_food"]["entropy"] == pytest.approx(np.log(5), abs=1e-9)
    assert by_id["pick_favorite_food"]["entropy"] > 1.0


def test_all_builtin_scenarios_cover_both_sections():
    sections = {load_builtin_spec(s).section for s in builtin_scenario_ids()}
    assert sections == {"generic", "ambiguous"}
    assert len(builtin_scenario_ids()) == 12


def test_defaults_pinned():
    assert DEFAULTS["kappa"] == 0.2
    assert DEFAULTS["epsilon"] == 1.0
    assert DEFAULTS["alpha"] == 0.1
    assert DEFAULTS["n_present"] == 10
    assert DEFAULTS["n_absent"] == 10
    assert DEFAULTS["n_test"] == 5

import io
import json
import sys

from plga.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_NEEDS_HUMAN, EXIT_OK, build_parser, main
from plga.experiment import builtin_rules_path
from plga.util import sha256_hex

BACKEND = "scripted:" + builtin_rules_path()


def run_cli(*argv):
    return main(list(argv))


def test_demos_writes_dataset_and_is_deterministic(tmp_path):
    out = tmp_path / "demos.jsonl"
    assert run_cli("demos", "--spec", "sweep_hot", "--seed", "7", "--out", str(out)) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 21  # metadata line + 20 demos
    first_hash = sha256_hex(out.read_text())
    out2 = tmp_path / "demos2.jsonl"
    run_cli("demos", "--spec", "sweep_hot", "--seed", "7", "--out", str(out2))
    assert sha256_hex(out2.read_text()) == first_hash


def test_demos_missing_spec_exits_2(tmp_path):
    out = tmp_path / "x.jsonl"
    assert run_cli("demos", "--spec", "no_such_scenario", "--seed", "1", "--out", str(out)) == EXIT_CONFIG


def test_run_gcbc_zero_lm_calls(tmp_path):
    report_path = tmp_path / "report.json"
    code = run_cli(
        "run", "--spec", "pick_ripe", "--method", "gcbc", "--seeds", "1",
        "--backend", BACKEND, "--out", str(report_path),
    )
    assert code == EXIT_OK
    report = json.loads(report_path.read_text())
    assert report["results"][0]["lm_exchanges"] == 0


def test_run_plga_passive_reports_theta(tmp_path):
    report_path = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    code = run_cli(
        "run", "--spec", "sweep_hot", "--method", "plga_passive", "--seeds", "1",
        "--backend", BACKEND, "--out", str(report_path), "--csv", str(csv_path),
        "--dump-transcripts", str(tmp_path / "transcripts"),
    )
    assert code == EXIT_OK
    report = json.loads(report_path.read_text())
    resolution = report["results"][0]["resolutions"][0]
    assert resolution["theta_hat"] == "user avoids hot objects"
    assert "spec_id,method" in csv_path.read_text()
    runs = (tmp_path / "transcripts" / "runs.jsonl").read_text().splitlines()
    assert runs
    log = json.loads(runs[0])
    assert log["preference_transcript"]["reply"]
    assert log["abstraction_transcripts"]
    curves = list((tmp_path / "transcripts").glob("curve_*.csv"))
    assert curves and curves[0].read_text().startswith("epoch,loss")


def test_run_plga_active_reads_stdin(tmp_path, monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO("my favorite food is peaches\n"))
    report_path = tmp_path / "report.json"
    code = run_cli(
        "run", "--spec", "pick_favorite_food", "--method", "plga_active", "--seeds", "1",
        "--backend", BACKEND, "--out", str(report_path),
    )
    assert code == EXIT_OK
    report = json.loads(report_path.read_text())
    resolution = report["results"][0]["resolutions"][0]
    assert resolution["theta_hat"] == "my favorite food is peaches"
    assert resolution["mode"] == "active"


def test_run_plga_active_without_stdin_exits_3(tmp_path, monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO(""))
    code = run_cli(
        "run", "--spec", "pick_favorite_food", "--method", "plga_active", "--seeds", "1",
        "--backend", BACKEND,
    )
    assert code == EXIT_NEEDS_HUMAN


def test_run_on_existing_dataset(tmp_path):
    demos = tmp_path / "demos.jsonl"
    run_cli("demos", "--spec", "pick_ripe", "--seed", "3", "--out", str(demos))
    report_path = tmp_path / "report.json"
    code = run_cli(
        "run", "--spec", "pick_ripe", "--dataset", str(demos), "--method", "plga_passive",
        "--backend", BACKEND, "--out", str(report_path),
    )
    assert code == EXIT_OK
    report = json.loads(report_path.read_text())
    assert report["results"][0]["per_seed"] == {"3": 1.0}


def test_probe_csv_straddles_threshold(tmp_path, capsys):
    out = tmp_path / "probe.csv"
    code = run_cli(
        "probe", "--specs", "sweep_hot,pick_favorite_food", "--backend", BACKEND,
        "--format", "csv", "--out", str(out),
    )
    assert code == EXIT_OK
    rows = out.read_text().splitlines()
    assert rows[0] == "spec_id,section,entropy,n_hypotheses"
    assert len(rows) == 3
    values = {line.split(",")[0]: float(line.split(",")[2]) for line in rows[1:]}
    assert values["sweep_hot"] < 1.0 < values["pick_favorite_food"]


def test_probe_table_row_count(capsys):
    code = run_cli("probe", "--specs", "sweep_hot,sweep_sweepable", "--backend", BACKEND)
    assert code == EXIT_OK
    printed = capsys.readouterr().out.splitlines()
    assert len(printed) == 3  # header + 2 rows


def test_abstract_command(capsys):
    code = run_cli(
        "abstract", "--spec", "pick_ripe", "--feature-present",
        "--preference", "the user prefers ripe tomatoes", "--backend", BACKEND,
    )
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "kept kinds: ['tomato']" in out
    assert "kept textures: ['red']" in out  # candidates are scene-restricted
    assert "#" in out  # mask render


def test_masks_dump_writes_ascii_and_ppm(tmp_path):
    code = run_cli(
        "masks-dump", "--spec", "sweep_hot", "--backend", BACKEND, "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    txt = (tmp_path / "sweep_hot_lga.txt").read_text()
    assert set(txt) <= set("#o.\n")
    ppm = (tmp_path / "sweep_hot_lga.ppm").read_text()
    assert ppm.startswith("P3\n12 12\n255\n")


def test_unknown_backend_uri_exits_2():
    assert run_cli("run", "--spec", "pick_ripe", "--backend", "weird") == EXIT_CONFIG


def test_replay_miss_exits_4(tmp_path):
    cassette = tmp_path / "empty.jsonl"
    cassette.write_text("")
    code = run_cli(
        "run", "--spec", "pick_ripe", "--method", "lga", "--seeds", "1",
        "--backend", f"replay:{cassette}",
    )
    assert code == EXIT_BACKEND


def test_config_file_with_unknown_key_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"backend": BACKEND, "bogus": 1}))
    assert run_cli("--config", str(cfg), "probe", "--specs", "sweep_hot") == EXIT_CONFIG


def test_config_file_supplies_backend(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"backend": BACKEND, "seeds": "1"}))
    report_path = tmp_path / "report.json"
    code = run_cli(
        "--config", str(cfg), "run", "--spec", "pick_ripe", "--method", "gcbc",
        "--out", str(report_path),
    )
    assert code == EXIT_OK


def test_serve_bad_port_exits_2():
    assert run_cli("serve", "--port", "-1", "--backend", BACKEND) == EXIT_CONFIG


EXPECTED_FLAGS = {
    "demos": ["--spec", "--seed", "--out"],
    "run": ["--spec", "--dataset", "--method", "--backend", "--seeds", "--out", "--csv", "--dump-transcripts"],
    "probe": ["--specs", "--backend", "--seed", "--format", "--out"],
    "abstract": ["--spec", "--seed", "--preference", "--feature-present", "--backend"],
    "masks-dump": ["--spec", "--seed", "--preference", "--backend", "--out"],
    "serve": ["--port", "--host", "--backend", "--state-dir", "--ui-dir"],
}


def test_help_enumerates_every_flag():
    parser = build_parser()
    sub_actions = next(
        a for a in parser._actions if isinstance(a, type(parser._subparsers._group_actions[0]))
    )
    for command, flags in EXPECTED_FLAGS.items():
        help_text = sub_actions.choices[command].format_help()
        for flag in flags:
            assert flag in help_text, f"{command} help is missing {flag}"
    top = parser.format_help()
    assert "--config" in top
    for command in EXPECTED_FLAGS:
        assert command in top

import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from plga.captioner import caption
from plga.gateway import (
    ConfigError,
    LmBackendConfig,
    ParseError,
    ReplayMissError,
    ScriptedRuleError,
    TransportError,
    complete,
    parse_preference_reply,
    parse_yes_no,
    prompt_hash,
)
from plga.prompts import (
    PromptError,
    render_abstraction_prompt,
    render_preference_prompt,
)
from plga.world import Scene, SceneObject, cell_center


def scene_of(*specs, scene_id="gw"):
    objects = tuple(
        SceneObject(uid=i + 1, kind=k, texture=t, center=cell_center(cell), cell=cell)
        for i, (k, t, cell) in enumerate(specs)
    )
    return Scene(scene_id=scene_id, objects=objects)


GOLDEN_A = scene_of(
    ("food", "green", (10, 1)),
    ("sink", "gray", (10, 10)),
    ("stove", "red", (10, 5)),
    ("flower", "yellow", (2, 2)),
    scene_id="golden-a",
)
GOLDEN_B = scene_of(
    ("food", "green", (10, 1)),
    ("sink", "gray", (10, 10)),
    ("stove", "black", (10, 5)),
    ("book", "blue", (2, 5)),
    scene_id="golden-b",
)


def golden(name):
    return open(f"tests/golden/{name}", encoding="utf-8").read()


# ---------------------------------------------------------------------------
# prompt rendering


def test_preference_prompt_matches_golden():
    system, user = render_preference_prompt(
        caption(GOLDEN_A), caption(GOLDEN_B), "Sweep the food into the sink."
    )
    assert system == golden("preference_system.txt")
    assert user == golden("preference_user.txt")


def test_preference_prompt_identical_captions_empty_differences():
    system, _ = render_preference_prompt(caption(GOLDEN_A), caption(GOLDEN_A), "x")
    assert "First scene-\n\nSecond scene-\n\n" in system


def test_preference_prompt_two_object_diff():
    fs_a, fs_b = caption(GOLDEN_A), caption(GOLDEN_B)
    system, _ = render_preference_prompt(fs_a, fs_b, "x")
    only_a = set(fs_a.object_captions) - set(fs_b.object_captions)
    only_b = set(fs_b.object_captions) - set(fs_a.object_captions)
    assert only_a == {"red stove", "yellow flower"}
    first_block = system.split("First scene-\n")[1].split("\nSecond scene-")[0]
    second_block = system.split("Second scene-\n")[1].split("\n\nWhat are")[0]
    assert set(first_block.splitlines()) == only_a
    assert set(second_block.splitlines()) == only_b


def test_abstraction_prompt_matches_golden():
    system, user = render_abstraction_prompt("Bring me a tomato.", None, "object type", "tomato")
    assert system == golden("abstraction_system.txt")
    assert user == golden("abstraction_user_plain.txt")


def test_abstraction_prompt_with_preference_matches_golden():
    _, user = render_abstraction_prompt(
        "Bring me a tomato.", "the user prefers ripe tomatoes", "object color", "dark red"
    )
    assert user == golden("abstraction_user_preference.txt")


def test_abstraction_prompt_unknown_candidate():
    with pytest.raises(PromptError):
        render_abstraction_prompt("Bring me a tomato.", None, "object type", "unicorn")
    with pytest.raises(PromptError):
        render_abstraction_prompt("Bring me a tomato.", None, "object shape", "tomato")


# ---------------------------------------------------------------------------
# parsers


def test_parse_preference_reply_plain():
    pairs = parse_preference_reply('[["avoid hot objects", 0.6], ["prefers red", 0.4]]')
    assert pairs == [("avoid hot objects", 0.6), ("prefers red", 0.4)]


def test_parse_preference_reply_renormalizes():
    pairs = parse_preference_reply('[["a", 2], ["b", 2]]')
    assert pairs == [("a", 0.5), ("b", 0.5)]


@pytest.mark.parametrize(
    "wrapper",
    [
        "Sure! Here is my ranking:\n{body}\nHope that helps.",
        "Reasoning [step by step], I conclude {body}",
        "{body}",
        "prefix text () {body} [trailing",
    ],
)
def test_parse_preference_reply_with_prose(wrapper):
    body = '[["user avoids hot objects", 0.7], ["user avoids red objects", 0.3]]'
    direct = parse_preference_reply(body)
    wrapped = parse_preference_reply(wrapper.format(body=body))
    assert wrapped == direct


def test_parse_preference_reply_order_preserved_and_sum_one():
    reply = '[["c", 0.5], ["a", 0.3], ["b", 0.2]]'
    pairs = parse_preference_reply(reply)
    assert [t for t, _ in pairs] == ["c", "a", "b"]
    assert sum(p for _, p in pairs) == pytest.approx(1.0, abs=1e-9)


def test_parse_preference_reply_failure_carries_raw():
    with pytest.raises(ParseError) as err:
        parse_preference_reply("no list here")
    assert "no list here" in str(err.value)


def test_parse_yes_no_variants():
    assert parse_yes_no("...step by step...\nFinal answer: yes") is True
    assert parse_yes_no("Final answer: No.") is False
    assert parse_yes_no("final ANSWER:   YES") is True
    # last marker wins
    assert parse_yes_no("Final answer: no\n...wait...\nFinal answer: yes") is True


def test_parse_yes_no_requires_marker():
    with pytest.raises(ParseError):
        parse_yes_no("I think yes")
    with pytest.raises(ParseError):
        parse_yes_no("Final answer: maybe")


# ---------------------------------------------------------------------------
# scripted backend


def test_scripted_abstraction_rule_hit(scripted_backend):
    system, user = render_abstraction_prompt("Bring me a tomato.", None, "object type", "tomato")
    exchange = complete(scripted_backend, system, user)
    assert exchange.backend_tag == "scripted"
    assert parse_yes_no(exchange.reply) is True
    system, user = render_abstraction_prompt("Bring me a tomato.", None, "object type", "flower")
    assert parse_yes_no(complete(scripted_backend, system, user).reply) is False


def test_scripted_rules_total_over_catalog(scripted_backend, catalog):
    # every catalog candidate yields a parseable yes/no for a fixture rule
    for group, names in (
        ("object type", catalog.kind_names),
        ("object color", catalog.texture_names),
    ):
        for name in names:
            system, user = render_abstraction_prompt("Put down my mug.", None, group, name)
            parse_yes_no(complete(scripted_backend, system, user).reply)


def test_scripted_preference_rule_disambiguated_by_difference(scripted_backend):
    system, user = render_preference_prompt(
        caption(GOLDEN_A), caption(GOLDEN_B), "Sweep the food into the sink."
    )
    exchange = complete(scripted_backend, system, user)
    pairs = parse_preference_reply(exchange.reply)
    assert pairs[0] == ("user avoids hot objects", 0.7)

    knife_scene = scene_of(
        ("pepper", "green", (10, 1)),
        ("sink", "gray", (10, 10)),
        ("knife", "silver", (10, 5)),
        scene_id="knife",
    )
    no_knife = scene_of(
        ("pepper", "green", (10, 1)), ("sink", "gray", (10, 10)), scene_id="no-knife"
    )
    system, user = render_preference_prompt(
        caption(knife_scene), caption(no_knife), "Sweep the food into the sink."
    )
    pairs = parse_preference_reply(complete(scripted_backend, system, user).reply)
    assert pairs[0][0] == "the user avoids sharp objects"


def test_scripted_unmatched_preference_is_error(scripted_backend):
    system, user = render_preference_prompt(
        caption(GOLDEN_A), caption(GOLDEN_B), "Do a backflip."
    )
    with pytest.raises(ScriptedRuleError):
        complete(scripted_backend, system, user)


def test_scripted_duplicate_rules_rejected(tmp_path):
    rules = {
        "abstraction": [
            {"utterance": "x", "preference": None, "group": "object type", "answers": {}},
            {"utterance": "x", "preference": None, "group": "object type", "answers": {}},
        ]
    }
    path = tmp_path / "dup.json"
    path.write_text(json.dumps(rules))
    from plga.gateway import ScriptedBackend

    with pytest.raises(ScriptedRuleError):
        ScriptedBackend(path)


# ---------------------------------------------------------------------------
# replay backend


def test_replay_identity_and_miss(tmp_path):
    system, user = ("There are two scenes. S", "U")
    cassette = tmp_path / "cassette.jsonl"
    cassette.write_text(
        json.dumps(
            {"prompt_hash": prompt_hash(system, user), "system": system, "user": user, "reply": "canned"}
        )
        + "\n"
    )
    config = LmBackendConfig(mode="replay", cassette_path=str(cassette))
    assert complete(config, system, user).reply == "canned"
    with pytest.raises(ReplayMissError):
        complete(config, system, "other")


def test_replay_performs_no_network_io(tmp_path, monkeypatch):
    cassette = tmp_path / "cassette.jsonl"
    cassette.write_text(
        json.dumps({"prompt_hash": prompt_hash("s", "u"), "system": "s", "user": "u", "reply": "r"})
        + "\n"
    )

    def explode(*args, **kwargs):
        raise AssertionError("socket opened during replay")

    monkeypatch.setattr(socket, "socket", explode)
    monkeypatch.setattr(socket, "create_connection", explode)
    config = LmBackendConfig(mode="replay", cassette_path=str(cassette))
    assert complete(config, "s", "u").reply == "r"


# ---------------------------------------------------------------------------
# live backend against a local stub


class _StubHandler(BaseHTTPRequestHandler):
    fail_first = True
    always_fail = False
    requests_seen = 0

    def do_POST(self):
        cls = type(self)
        cls.requests_seen += 1
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        if cls.always_fail or (cls.fail_first and cls.requests_seen == 1):
            self.send_response(500)
            self.end_headers()
            return
        reply = {
            "choices": [
                {"message": {"content": f"echo:{body['messages'][1]['content'][:8]}"}}
            ]
        }
        payload = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    _StubHandler.requests_seen = 0
    _StubHandler.fail_first = True
    _StubHandler.always_fail = False
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_live_backend_retries_then_succeeds(stub_server, tmp_path, monkeypatch):
    monkeypatch.setenv("PLGA_API_KEY", "test-key")
    cassette = tmp_path / "rec.jsonl"
    config = LmBackendConfig(
        mode="live",
        base_url=stub_server,
        model_name="stub-model",
        max_retries=2,
        cassette_path=str(cassette),
    )
    exchange = complete(config, "system text", "user text")
    assert exchange.reply == "echo:user tex"
    assert _StubHandler.requests_seen == 2  # one 500, one success
    # recorded cassette replays byte-identically
    replay = LmBackendConfig(mode="replay", cassette_path=str(cassette))
    assert complete(replay, "system text", "user text").reply == exchange.reply


def test_live_backend_exhausts_retries(stub_server, monkeypatch):
    monkeypatch.setenv("PLGA_API_KEY", "test-key")
    _StubHandler.always_fail = True
    config = LmBackendConfig(mode="live", base_url=stub_server, model_name="m", max_retries=1)
    with pytest.raises(TransportError):
        complete(config, "s", "u")
    assert _StubHandler.requests_seen == 2  # initial try + one retry


def test_live_requires_api_key(stub_server, monkeypatch):
    monkeypatch.delenv("PLGA_API_KEY", raising=False)
    config = LmBackendConfig(mode="live", base_url=stub_server, model_name="m")
    with pytest.raises(ConfigError):
        complete(config, "s", "u")


def test_config_validation():
    with pytest.raises(ConfigError):
        LmBackendConfig(mode="live")
    with pytest.raises(ConfigError):
        LmBackendConfig(mode="scripted")
    with pytest.raises(ConfigError):
        LmBackendConfig(mode="weird", rules_path="x")
    with pytest.raises(ConfigError):
        LmBackendConfig.from_uri("scripted")


def test_nonempty_prompt_contract(scripted_backend):
    with pytest.raises(ConfigError):
        complete(scripted_backend, "", "user")

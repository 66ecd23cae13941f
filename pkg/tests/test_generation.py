from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from narrative_enrich.errors import BackendError, CapabilityError, ConfigError
from narrative_enrich.generation import (
    ChatSession,
    GenerationParams,
    HTTPChatBackend,
    ProbeRule,
    ScriptedBackend,
    ScriptRule,
    TokenChoiceProbe,
)


class TestChatSession:
    def test_append_only_roles(self):
        session = ChatSession()
        session.user("hello")
        session.assistant("hi")
        assert [m.role for m in session.messages] == ["user", "assistant"]

    def test_assistant_cannot_open(self):
        session = ChatSession()
        with pytest.raises(ValueError):
            session.assistant("hi")

    def test_unknown_role(self):
        session = ChatSession()
        with pytest.raises(ValueError):
            session.add("tool", "x")

    def test_messages_view_is_immutable(self):
        session = ChatSession()
        session.user("a")
        view = session.messages
        session.user("b")
        assert len(view) == 1
        assert len(session.messages) == 2

    def test_fingerprint_tracks_history(self):
        session = ChatSession()
        session.user("a")
        before = session.fingerprint()
        session.assistant("b")
        assert session.fingerprint() != before


class TestGenerationParams:
    def test_defaults(self):
        params = GenerationParams()
        assert (params.max_new_tokens, params.temperature, params.top_p, params.sample) == (
            250,
            0.7,
            0.9,
            True,
        )
        assert params.seed is None

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_new_tokens": 0},
            {"temperature": -0.1},
            {"top_p": 0.0},
            {"top_p": 1.5},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            GenerationParams(**kwargs)


class TestTokenChoiceProbe:
    def test_needs_two_candidates(self):
        with pytest.raises(ValueError):
            TokenChoiceProbe("p", ("yes",))


def _session(*user_turns):
    session = ChatSession()
    for i, text in enumerate(user_turns):
        session.user(text)
        if i < len(user_turns) - 1:
            session.assistant(f"reply {i}")
    return session


class TestScriptedBackend:
    def test_rule_mapping(self):
        backend = ScriptedBackend([ScriptRule("most relevant", "Document 1")])
        session = _session("which is the most relevant chunk?")
        assert backend.complete(session, GenerationParams()) == "Document 1"

    def test_match_applies_to_newest_message_only(self):
        backend = ScriptedBackend(
            [
                ScriptRule("first instruction", "one"),
                ScriptRule("second instruction", "two"),
            ]
        )
        session = _session("first instruction", "second instruction")
        assert backend.complete(session, GenerationParams()) == "two"

    def test_context_discriminates(self):
        backend = ScriptedBackend(
            [
                ScriptRule("summarize", "about cats", context="cats"),
                ScriptRule("summarize", "about dogs", context="dogs"),
            ]
        )
        session = _session("all about dogs", "summarize")
        assert backend.complete(session, GenerationParams()) == "about dogs"

    def test_regex_rules(self):
        backend = ScriptedBackend([ScriptRule(r"Document \d+", "found", regex=True)])
        session = _session("see Document 42 please")
        assert backend.complete(session, GenerationParams()) == "found"

    def test_no_match_is_error(self):
        backend = ScriptedBackend([ScriptRule("nope", "x")])
        with pytest.raises(BackendError):
            backend.complete(_session("other"), GenerationParams())

    def test_empty_session_rejected(self):
        backend = ScriptedBackend([ScriptRule("a", "b")])
        with pytest.raises(ValueError):
            backend.complete(ChatSession(), GenerationParams())

    def test_trailing_assistant_rejected(self):
        backend = ScriptedBackend([ScriptRule("a", "b")])
        session = ChatSession()
        session.user("a")
        session.assistant("done")
        with pytest.raises(ValueError):
            backend.complete(session, GenerationParams())

    def test_deterministic_and_pure(self):
        backend = ScriptedBackend([ScriptRule("q", "a")], seed=7)
        session = _session("q")
        before = session.fingerprint()
        outputs = {backend.complete(session, GenerationParams()) for _ in range(5)}
        assert outputs == {"a"}
        assert session.fingerprint() == before

    def test_call_counter(self):
        backend = ScriptedBackend([ScriptRule("q", "a")])
        session = _session("q")
        for _ in range(3):
            backend.complete(session, GenerationParams())
        assert backend.calls == 3

    def test_probe_values(self):
        backend = ScriptedBackend(
            [], probe_rules=[ProbeRule("continuation", (0.8, 0.2))]
        )
        assert backend.supports_probabilities
        probe = TokenChoiceProbe("is this a continuation?", ("yes", "no"))
        assert backend.token_probabilities(probe) == [0.8, 0.2]

    def test_probe_value_count_mismatch(self):
        backend = ScriptedBackend([], probe_rules=[ProbeRule("x", (0.8,))])
        with pytest.raises(BackendError):
            backend.token_probabilities(TokenChoiceProbe("x", ("yes", "no")))

    def test_no_probe_rules_means_unsupported(self):
        backend = ScriptedBackend([ScriptRule("a", "b")])
        assert not backend.supports_probabilities
        with pytest.raises(CapabilityError):
            backend.token_probabilities(TokenChoiceProbe("x", ("yes", "no")))

    def test_from_file_yaml(self, tmp_path):
        path = tmp_path / "rules.yaml"
        path.write_text(
            json.dumps(
                {
                    "rules": [
                        {"match": "hello", "response": "world"},
                        {"match": "re.\\d+", "response": "num", "regex": True},
                    ],
                    "probes": [{"match": "cont", "values": [0.7, 0.3]}],
                }
            ),
            encoding="utf-8",
        )
        backend = ScriptedBackend.from_file(path)
        assert backend.complete(_session("hello"), GenerationParams()) == "world"
        assert backend.token_probabilities(
            TokenChoiceProbe("cont?", ("yes", "no"))
        ) == [0.7, 0.3]

    def test_from_file_bare_list(self, tmp_path):
        path = tmp_path / "rules.yaml"
        path.write_text('- {match: "hi", response: "there"}\n', encoding="utf-8")
        backend = ScriptedBackend.from_file(path)
        assert backend.complete(_session("hi"), GenerationParams()) == "there"


class _ChatHandler(BaseHTTPRequestHandler):
    fail_mode = None
    seen: list[dict] = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        type(self).seen.append(payload)
        if type(self).fail_mode == "http500":
            self.send_response(500)
            self.end_headers()
            return
        if type(self).fail_mode == "empty":
            body = json.dumps({"text": "  "}).encode()
        elif type(self).fail_mode == "malformed":
            body = b"{"
        else:
            last = payload["messages"][-1]["content"]
            body = json.dumps({"text": f"echo: {last}"}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def chat_server():
    _ChatHandler.fail_mode = None
    _ChatHandler.seen = []
    server = HTTPServer(("127.0.0.1", 0), _ChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/chat"
    server.shutdown()


class TestHTTPChatBackend:
    def test_wire_contract(self, chat_server):
        backend = HTTPChatBackend(chat_server, model="test-model")
        session = _session("question?")
        params = GenerationParams(max_new_tokens=99, temperature=0.5, top_p=0.8)
        out = backend.complete(session, params)
        assert out == "echo: question?"
        payload = _ChatHandler.seen[-1]
        assert payload == {
            "model": "test-model",
            "messages": [{"role": "user", "content": "question?"}],
            "max_tokens": 99,
            "temperature": 0.5,
            "top_p": 0.8,
        }

    def test_http_error(self, chat_server):
        _ChatHandler.fail_mode = "http500"
        backend = HTTPChatBackend(chat_server, model="m")
        with pytest.raises(BackendError):
            backend.complete(_session("q"), GenerationParams())

    def test_empty_completion_is_error(self, chat_server):
        _ChatHandler.fail_mode = "empty"
        backend = HTTPChatBackend(chat_server, model="m")
        with pytest.raises(BackendError):
            backend.complete(_session("q"), GenerationParams())

    def test_malformed_payload_is_error(self, chat_server):
        _ChatHandler.fail_mode = "malformed"
        backend = HTTPChatBackend(chat_server, model="m")
        with pytest.raises(BackendError):
            backend.complete(_session("q"), GenerationParams())

    def test_unreachable_leaves_session_unchanged(self):
        backend = HTTPChatBackend("http://127.0.0.1:9/none", model="m", timeout=0.2)
        session = _session("q")
        before = session.fingerprint()
        with pytest.raises(BackendError):
            backend.complete(session, GenerationParams())
        assert session.fingerprint() == before

    def test_probabilities_unsupported(self, chat_server):
        backend = HTTPChatBackend(chat_server, model="m")
        with pytest.raises(CapabilityError):
            backend.token_probabilities(TokenChoiceProbe("x", ("yes", "no")))

    def test_from_env(self, chat_server, monkeypatch):
        monkeypatch.setenv("NARRATIVE_ENRICH_LLM_URL", chat_server)
        monkeypatch.setenv("NARRATIVE_ENRICH_LLM_MODEL", "env-model")
        backend = HTTPChatBackend.from_env()
        backend.complete(_session("q"), GenerationParams())
        assert _ChatHandler.seen[-1]["model"] == "env-model"

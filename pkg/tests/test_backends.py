"""Scorer interfaces, the deterministic stub, PVI math, and the wire client."""

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaineval.backends import (
    BackendError,
    NliJudgment,
    PviTrainingExample,
    RemoteScorerClient,
    StubScorerTable,
    concat_conditioning,
    conditional_pvi,
    emit_pvi_training_data,
    pvi,
)
from chaineval.chains import Rcu, ReasoningChain, Step


class TestNliJudgment:
    def test_simplex_ok(self):
        NliJudgment(entail=0.7, neutral=0.2, contradict=0.1)

    def test_sum_must_be_one(self):
        with pytest.raises(ValueError, match="sum"):
            NliJudgment(entail=0.7, neutral=0.2, contradict=0.2)

    def test_range_checked(self):
        with pytest.raises(ValueError, match="out of range"):
            NliJudgment(entail=1.2, neutral=-0.1, contradict=-0.1)


class TestStubTable:
    def test_lookup_and_fallback(self):
        table = StubScorerTable()
        table.set_nli("p", "h", 0.9, 0.05, 0.05)
        assert table.score("p", "h").entail == 0.9
        assert table.score("p", "other") == table.default_nli
        table.set_logprob("c", "t", -2.5)
        assert table.logprob("c", "t") == -2.5
        assert table.logprob("c", "other") == table.default_logprob

    def test_determinism_across_instances(self):
        payload = {
            "nli_entries": [
                {"premise": "p", "hypothesis": "h", "entail": 0.8, "neutral": 0.1, "contradict": 0.1}
            ],
            "logprob_entries": [{"conditioning": "c", "target": "t", "logprob_bits": -1.5}],
            "defaults": {"nli": {"entail": 0.1, "neutral": 0.8, "contradict": 0.1}, "logprob_bits": -6},
        }
        a, b = StubScorerTable.from_json(payload), StubScorerTable.from_json(payload)
        for _ in range(3):
            assert a.score("p", "h") == b.score("p", "h")
            assert a.logprob("c", "t") == b.logprob("c", "t")
            assert a.logprob("x", "y") == b.logprob("x", "y")

    def test_token_prob_and_total_bits_entries(self):
        table = StubScorerTable.from_json(
            {
                "logprob_entries": [
                    {"conditioning": "a", "target": "t", "token_prob": 0.25},
                    {"conditioning": "b", "target": "one two three four", "total_logprob_bits": -8.0},
                ]
            }
        )
        assert table.logprob("a", "t") == math.log2(0.25)
        assert table.logprob("b", "one two three four") == -2.0

    def test_bad_logprob_entry_rejected(self):
        with pytest.raises(ValueError, match="logprob entry"):
            StubScorerTable.from_json(
                {"logprob_entries": [{"conditioning": "a", "target": "t", "prob": 0.5}]}
            )

    def test_file_round_trip(self, tmp_path):
        table = StubScorerTable()
        table.set_nli("p", "h", 0.9, 0.05, 0.05)
        table.set_token_prob("c", "t", 0.5)
        path = tmp_path / "table.json"
        table.dump(path)
        loaded = StubScorerTable.from_file(path)
        assert loaded.score("p", "h") == table.score("p", "h")
        assert loaded.logprob("c", "t") == table.logprob("c", "t")

    def test_score_batch_matches_mapped_calls(self):
        table = StubScorerTable()
        table.set_nli("p", "h", 0.9, 0.05, 0.05)
        pairs = [("p", "h"), ("x", "y")]
        assert table.score_batch(pairs) == [table.score(p, h) for p, h in pairs]


class TestPvi:
    def test_identical_models_empty_conditioning_is_zero(self):
        table = StubScorerTable()
        assert pvi("", "y text", table, table) == 0.0

    def test_one_bit_gain(self):
        # prior 0.25/token, conditioned 0.5/token -> exactly one bit
        table = StubScorerTable()
        table.set_token_prob("", "the answer", 0.25)
        table.set_token_prob("x info", "the answer", 0.5)
        assert pvi("x info", "the answer", table, table) == pytest.approx(1.0)

    def test_negative_when_conditioning_hurts(self):
        table = StubScorerTable()
        table.set_token_prob("", "the answer", 0.5)
        table.set_token_prob("noise", "the answer", 0.3)
        assert pvi("noise", "the answer", table, table) < 0

    def test_empty_target_rejected(self):
        table = StubScorerTable()
        with pytest.raises(ValueError, match="non-empty"):
            pvi("x", "", table, table)

    def test_backend_failure_identifies_pair(self):
        class Broken:
            max_in_flight = 0

            def logprob(self, conditioning, target):
                raise RuntimeError("down")

        with pytest.raises(BackendError, match="x=.*y="):
            pvi("xx", "yy", Broken(), Broken())


class TestConditionalPvi:
    def test_zero_when_nothing_changes(self):
        table = StubScorerTable()
        table.set_logprob("z ctx", "ans", -3.0)
        table.set_logprob("z ctx rep", "ans", -3.0)
        assert conditional_pvi("rep", "ans", "z ctx", table, table) == 0.0

    def test_one_bit_lift(self):
        table = StubScorerTable()
        table.set_token_prob("z", "ans", 0.25)
        table.set_token_prob("z x", "ans", 0.5)
        assert conditional_pvi("x", "ans", "z", table, table) == pytest.approx(1.0)

    def test_empty_conditioning_reduces_to_plain(self):
        table = StubScorerTable()
        table.set_logprob("", "ans", -5.0)
        table.set_logprob("x", "ans", -4.0)
        assert conditional_pvi("x", "ans", "", table, table) == pvi("x", "ans", table, table)

    @settings(max_examples=40, deadline=None)
    @given(
        st.floats(-12, -1, allow_nan=False),
        st.floats(-12, -1, allow_nan=False),
    )
    def test_shared_model_identity(self, prior_bits, cond_bits):
        table = StubScorerTable()
        table.set_logprob("z", "y", prior_bits)
        table.set_logprob("z x", "y", cond_bits)
        got = conditional_pvi("x", "y", "z", table, table)
        assert got == table.logprob("z x", "y") - table.logprob("z", "y")


def test_concat_conditioning_single_space():
    assert concat_conditioning("", "x") == "x"
    assert concat_conditioning("z", "") == "z"
    assert concat_conditioning("z", "x") == "z x"


# --- training data emission ------------------------------------------------


def _segmented_chain(n_steps=2):
    steps = []
    for i in range(1, n_steps + 1):
        steps.append(
            Step(
                index=i,
                text=f"p{i} a and p{i} b, so c{i}.",
                rcus=(
                    Rcu(f"p{i} a", "premise"),
                    Rcu(f"p{i} b", "premise"),
                    Rcu(f"c{i}", "conclusion"),
                ),
            )
        )
    return ReasoningChain(
        id="train1", context=("ctx.",), steps=tuple(steps), predicted_answer="the answer."
    )


def test_intra_family_two_examples_per_step():
    examples = emit_pvi_training_data([_segmented_chain(2)], "intra")
    assert len(examples) == 4
    g = [e for e in examples if e.model_role == "g"]
    g_prime = [e for e in examples if e.model_role == "g_prime"]
    assert len(g) == len(g_prime) == 2
    assert g[0].input_text == "p1 a and p1 b, so "
    assert g[0].target_text == "c1"
    assert all(e.input_text == "So, " for e in g_prime)


def test_intra_family_unsegmented_names_chain():
    chain = ReasoningChain(
        id="bad9", context=(), steps=(Step(index=1, text="s."),), predicted_answer="a"
    )
    with pytest.raises(ValueError, match="bad9"):
        emit_pvi_training_data([chain], "intra")


def test_intra_family_skips_g_for_premise_free_steps():
    step = Step(index=1, text="c only.", rcus=(Rcu("c only", "conclusion"),))
    chain = ReasoningChain(id="t", context=(), steps=(step,), predicted_answer="a")
    examples = emit_pvi_training_data([chain], "intra")
    assert [e.model_role for e in examples] == ["g_prime"]


def test_info_gain_family_one_example_per_step():
    chain = ReasoningChain(
        id="t",
        context=(),
        steps=tuple(Step(index=i, text=f"s{i}.") for i in range(1, 4)),
        predicted_answer="final answer.",
    )
    examples = emit_pvi_training_data([chain], "info_gain")
    assert len(examples) == 3
    assert all(e.target_text == "final answer." for e in examples)
    assert examples[0].input_text == "s1."
    assert examples[2].input_text == "s1. s2. s3."
    assert all(e.model_role == "g" for e in examples)


def test_unknown_family_rejected():
    with pytest.raises(ValueError, match="family"):
        emit_pvi_training_data([], "inter")


# --- wire protocol -----------------------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    table = None
    seen = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        request = json.loads(self.rfile.read(length))
        type(self).seen.append(request)
        if request["op"] == "nli":
            j = self.table.score(request["premise"], request["hypothesis"])
            body = {"entail": j.entail, "neutral": j.neutral, "contradict": j.contradict}
        elif request["op"] == "logprob":
            body = {"logprob_bits": self.table.logprob(request["conditioning"], request["target"])}
        else:
            self.send_response(400)
            self.end_headers()
            return
        payload = json.dumps(body).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    table = StubScorerTable()
    table.set_nli("a premise", "a hypothesis", 0.85, 0.1, 0.05)
    table.set_logprob("cond", "target", -3.25)
    _StubHandler.table = table
    _StubHandler.seen = []
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_remote_client_speaks_the_wire_format(stub_server):
    client = RemoteScorerClient(stub_server)
    judgment = client.score("a premise", "a hypothesis")
    assert judgment == NliJudgment(entail=0.85, neutral=0.1, contradict=0.05)
    assert client.logprob("cond", "target") == -3.25
    assert _StubHandler.seen[0] == {
        "op": "nli",
        "premise": "a premise",
        "hypothesis": "a hypothesis",
    }
    assert _StubHandler.seen[1] == {
        "op": "logprob",
        "conditioning": "cond",
        "target": "target",
    }


def test_remote_client_wraps_connection_errors():
    client = RemoteScorerClient("http://127.0.0.1:1/none", timeout=0.2)
    with pytest.raises(BackendError, match="scorer server"):
        client.score("p", "h")


def test_training_example_fields():
    example = PviTrainingExample(
        input_text="So, ", target_text="c", model_role="g_prime", metric_family="intra"
    )
    assert example.model_role == "g_prime"

"""Per-step metric semantics against hand-built stub tables."""

import dataclasses
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaineval.backends import BackendError, StubScorerTable
from chaineval.chains import Diagnostics, Rcu, ReasoningChain, Step
from chaineval.metrics import (
    MetricConfig,
    info_gain,
    inter_correct,
    intra_correct_entail,
    intra_correct_no_contr,
    intra_correct_pvi,
    prior_information,
    window_gain,
    window_texts,
)


def seg_step(index, premises, conclusion, text=None):
    rcus = tuple(Rcu(p, "premise") for p in premises) + (Rcu(conclusion, "conclusion"),)
    return Step(index=index, text=text or f"{' and '.join(premises) or conclusion}, so {conclusion}.", rcus=rcus)


def chain_of(steps, context=(), answer="the answer."):
    return ReasoningChain(
        id="c", context=tuple(context), steps=tuple(steps), predicted_answer=answer
    )


class TestIntraViews:
    def test_entail_reads_stub(self):
        table = StubScorerTable()
        table.set_nli("p1 and p2", "c", 0.95, 0.03, 0.02)
        step = seg_step(1, ["p1", "p2"], "c")
        assert intra_correct_entail(step, table) == 0.95

    def test_entail_is_strict_about_neutral(self):
        table = StubScorerTable()
        table.set_nli("p", "unrelated claim", 0.05, 0.9, 0.05)
        step = seg_step(1, ["p"], "unrelated claim")
        assert intra_correct_entail(step, table) == 0.05

    def test_empty_premises_policy(self):
        table = StubScorerTable()
        step = seg_step(1, [], "c")
        diagnostics = Diagnostics()
        assert intra_correct_entail(step, table, MetricConfig(), diagnostics) == 1.0
        assert diagnostics.empty_premise_steps == 1
        strict = MetricConfig(empty_premise_policy="zero")
        assert intra_correct_entail(step, table, strict) == 0.0

    def test_pvi_positive_when_supported(self):
        table = StubScorerTable()
        table.set_token_prob("", "c", 0.3)
        table.set_token_prob("c", "c", 0.9)
        step = seg_step(1, ["c"], "c")
        assert intra_correct_pvi(step, table, table) > 0

    def test_pvi_zero_for_premise_free_step(self):
        table = StubScorerTable()
        step = seg_step(1, [], "c")
        assert intra_correct_pvi(step, table, table, MetricConfig(empty_premise_policy="zero")) == 0.0
        assert intra_correct_pvi(step, table, table) == 0.0

    def test_pvi_negative_for_unsupported_conclusion(self):
        table = StubScorerTable()
        table.set_token_prob("", "weird claim", 0.4)
        table.set_token_prob("p", "weird claim", 0.1)
        step = seg_step(1, ["p"], "weird claim")
        assert intra_correct_pvi(step, table, table) < 0

    def test_no_contr_flags_negation_only(self):
        table = StubScorerTable()
        table.set_nli("p", "not p", 0.01, 0.02, 0.97)
        table.set_nli("p", "unrelated", 0.05, 0.9, 0.05)
        assert intra_correct_no_contr(seg_step(1, ["p"], "not p"), table) == pytest.approx(0.03)
        # blind to hallucination: unrelated conclusions pass
        assert intra_correct_no_contr(seg_step(1, ["p"], "unrelated"), table) == pytest.approx(0.95)
        assert intra_correct_no_contr(seg_step(1, [], "c"), table) == 1.0

    def test_unsegmented_step_errors(self):
        table = StubScorerTable()
        with pytest.raises(ValueError, match="not segmented"):
            intra_correct_entail(Step(index=1, text="raw."), table)


class TestInterCorrect:
    def test_vacuous_when_no_prior_information(self):
        chain = chain_of([seg_step(1, ["p"], "c1")])
        table = StubScorerTable()
        assert inter_correct(chain, 1, table) == 1.0

    def test_pairwise_max_over_candidates(self):
        table = StubScorerTable(
            default_nli=dataclasses.replace(StubScorerTable().default_nli)
        )
        table.set_nli("c1", "c2", 0.03, 0.05, 0.92)
        chain = chain_of([seg_step(1, ["p1"], "c1"), seg_step(2, ["p2"], "c2")])
        assert inter_correct(chain, 2, table) == pytest.approx(0.08)

    def test_window_excludes_old_contradictions(self):
        table = StubScorerTable()
        table.set_nli("c1", "c4", 0.03, 0.05, 0.92)
        steps = [seg_step(i, [f"p{i}"], f"c{i}") for i in range(1, 5)]
        chain = chain_of(steps)
        narrow = MetricConfig(k_inter=1)
        wide = MetricConfig(k_inter="all")
        default_contr = table.default_nli.contradict
        assert inter_correct(chain, 4, table, narrow) == pytest.approx(1 - default_contr)
        assert inter_correct(chain, 4, table, wide) == pytest.approx(0.08)

    def test_context_is_never_windowed(self):
        table = StubScorerTable()
        table.set_nli("ctx fact", "c3", 0.02, 0.03, 0.95)
        steps = [seg_step(i, [f"p{i}"], f"c{i}") for i in range(1, 4)]
        chain = chain_of(steps, context=["ctx fact"])
        assert inter_correct(chain, 3, table, MetricConfig(k_inter=1)) == pytest.approx(0.05)

    def test_concat_view_single_call(self):
        table = StubScorerTable()
        table.set_nli("ctx. c1", "c2", 0.1, 0.1, 0.8)
        chain = chain_of([seg_step(1, ["p1"], "c1"), seg_step(2, ["p2"], "c2")], context=["ctx."])
        cfg = MetricConfig(inter_view="no_contr_concat")
        assert inter_correct(chain, 2, table, cfg) == pytest.approx(0.2)

    def test_entail_view_uses_prior_conclusions_only(self):
        table = StubScorerTable()
        table.set_nli("c1", "c2", 0.77, 0.13, 0.10)
        chain = chain_of([seg_step(1, ["p1"], "c1"), seg_step(2, ["p2"], "c2")], context=["ctx."])
        cfg = MetricConfig(inter_view="entail")
        assert inter_correct(chain, 2, table, cfg) == pytest.approx(0.77)
        assert inter_correct(chain, 1, table, cfg) == 1.0

    def test_pvi_view_requires_scorers(self):
        chain = chain_of([seg_step(1, ["p1"], "c1"), seg_step(2, ["p2"], "c2")])
        cfg = MetricConfig(inter_view="pvi")
        with pytest.raises(BackendError, match="pvi"):
            inter_correct(chain, 2, None, cfg)
        table = StubScorerTable()
        table.set_token_prob("", "c2", 0.25)
        table.set_token_prob("c1", "c2", 0.5)
        assert inter_correct(chain, 2, None, cfg, g=table, g_prime=table) == pytest.approx(1.0)

    def test_include_premises_flag_adds_candidates(self):
        table = StubScorerTable()
        table.set_nli("p1", "c2", 0.01, 0.01, 0.98)
        chain = chain_of([seg_step(1, ["p1"], "c1"), seg_step(2, ["p2"], "c2")])
        base = MetricConfig()
        with_premises = MetricConfig(include_premises_in_inter=True)
        assert inter_correct(chain, 2, table, base) == pytest.approx(1 - table.default_nli.contradict)
        assert inter_correct(chain, 2, table, with_premises) == pytest.approx(0.02)

    def test_prior_information_order(self):
        chain = chain_of(
            [seg_step(1, ["p1"], "c1"), seg_step(2, ["p2"], "c2"), seg_step(3, ["p3"], "c3")],
            context=["x1", "x2"],
        )
        assert prior_information(chain, 3) == ["x1", "x2", "c1", "c2"]
        cfg = MetricConfig(include_premises_in_inter=True)
        assert prior_information(chain, 3, cfg) == ["x1", "x2", "p1", "c1", "p2", "c2"]

    def test_out_of_range_step(self):
        chain = chain_of([seg_step(1, ["p"], "c")])
        table = StubScorerTable()
        with pytest.raises(IndexError):
            inter_correct(chain, 2, table)

    def test_monotone_in_candidate_set(self):
        rng = random.Random(11)
        for _ in range(50):
            n = rng.randint(2, 6)
            table = StubScorerTable()
            steps = [seg_step(i, [f"p{i}"], f"c{i}") for i in range(1, n + 1)]
            chain = chain_of(steps)
            for j in range(1, n):
                contr = round(rng.uniform(0, 0.9), 3)
                table.set_nli(f"c{j}", f"c{n}", 0.02, 0.98 - contr, contr)
            wide = inter_correct(chain, n, table, MetricConfig(k_inter="all"))
            for k in range(1, n):
                narrow = inter_correct(chain, n, table, MetricConfig(k_inter=k))
                assert wide <= narrow + 1e-12

    def test_window_all_equals_n_minus_one(self):
        rng = random.Random(13)
        table = StubScorerTable()
        n = 5
        steps = [seg_step(i, [f"p{i}"], f"c{i}") for i in range(1, n + 1)]
        chain = chain_of(steps, context=["x"])
        for j in range(1, n):
            contr = round(rng.uniform(0, 0.9), 3)
            table.set_nli(f"c{j}", f"c{n}", 0.02, 0.98 - contr, contr)
        assert inter_correct(chain, n, table, MetricConfig(k_inter="all")) == inter_correct(
            chain, n, table, MetricConfig(k_inter=n - 1)
        )


class TestInfoGain:
    def chain(self):
        return chain_of(
            [Step(index=1, text="s1."), Step(index=2, text="s2."), Step(index=3, text="s2.")],
            answer="ans.",
        )

    def test_zero_for_repetition(self):
        table = StubScorerTable()
        table.set_logprob("s1. s2.", "ans.", -3.0)
        table.set_logprob("s1. s2. s2.", "ans.", -3.0)
        assert info_gain(self.chain(), 3, table, table, MetricConfig(k_info="all")) == 0.0

    def test_one_bit_lift(self):
        table = StubScorerTable()
        table.set_token_prob("s1.", "ans.", 0.25)
        table.set_token_prob("s1. s2.", "ans.", 0.5)
        assert info_gain(self.chain(), 2, table, table, MetricConfig(k_info="all")) == pytest.approx(1.0)

    def test_negative_for_distracting_step(self):
        table = StubScorerTable()
        table.set_token_prob("s1.", "ans.", 0.5)
        table.set_token_prob("s1. s2.", "ans.", 0.4)
        assert info_gain(self.chain(), 2, table, table, MetricConfig(k_info="all")) < 0

    def test_missing_answer_errors(self):
        chain = dataclasses.replace(self.chain(), predicted_answer="")
        table = StubScorerTable()
        with pytest.raises(ValueError, match="predicted answer"):
            info_gain(chain, 1, table, table)

    def test_window_two_conditions_on_last_two_steps(self):
        steps = [Step(index=i, text=f"s{i}.") for i in range(1, 5)]
        chain = chain_of(steps, answer="a.")
        assert window_texts(chain, 4, 2) == ("s2. s3.", "s4.")
        assert window_texts(chain, 4, "all") == ("s1. s2. s3.", "s4.")
        assert window_texts(chain, 1, 2) == ("", "s1.")

    def test_window_all_equals_n_minus_one(self):
        steps = [Step(index=i, text=f"s{i}.") for i in range(1, 5)]
        chain = chain_of(steps, answer="a.")
        rng = random.Random(3)
        table = StubScorerTable()
        for i in range(5):
            prefix = " ".join(f"s{j}." for j in range(1, i + 1))
            table.set_logprob(prefix, "a.", round(rng.uniform(-9, -1), 3))
        all_cfg = MetricConfig(k_info="all")
        nm1_cfg = MetricConfig(k_info=3)
        for i in range(1, 5):
            assert info_gain(chain, i, table, table, all_cfg) == info_gain(
                chain, i, table, table, nm1_cfg
            )

    def test_window_gain_bounds(self):
        chain = self.chain()
        table = StubScorerTable()
        with pytest.raises(IndexError):
            window_gain(chain, 2, 3, table, table)


class TestMetricConfig:
    def test_defaults(self):
        cfg = MetricConfig()
        assert cfg.inter_view == "no_contr_pairwise"
        assert cfg.k_inter == "all"
        assert cfg.k_info == 2
        assert cfg.info_backend == "pvi"
        assert cfg.include_premises_in_inter is False

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"intra_view": "strict"},
            {"inter_view": "contrast"},
            {"info_backend": "mlm"},
            {"k_inter": 0},
            {"k_info": -2},
            {"k_inter": "some"},
            {"empty_premise_policy": "skip"},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            MetricConfig(**kwargs)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0, 1, allow_nan=False),
    st.floats(0, 1, allow_nan=False),
)
def test_strictness_entail_mass_only(entail_raw, neutral_raw):
    # normalize to the simplex, then check the entail view never exceeds
    # the non-neutral, non-contradict mass
    total = entail_raw + neutral_raw + 1.0
    entail, neutral = entail_raw / total, neutral_raw / total
    contradict = 1.0 - entail - neutral
    table = StubScorerTable()
    table.set_nli("p", "c", entail, neutral, contradict)
    step = seg_step(1, ["p"], "c")
    value = intra_correct_entail(step, table)
    assert value <= 1.0 - (neutral + contradict) + 1e-6
    assert value == pytest.approx(entail)

from __future__ import annotations

import random

import pytest

from conceptquiz.cost import (
    CostParams,
    cost_direct_money,
    cost_direct_tokens,
    cost_savaal_money,
    cost_summary_money,
    cost_summary_tokens,
    crossover_n,
    load_price_presets,
    params_from_preset,
    parity_batch_size,
    reconcile,
)
from conceptquiz.errors import NoCrossover
from conceptquiz.llm import TokenUsage

PARAMS = CostParams(input_per_token=2.5e-6, output_per_token=1e-5)


# --- token-unit models ---

def test_direct_tokens_single_batch():
    assert cost_direct_tokens(20, 10_000, 20, 100) == 12_000


def test_direct_tokens_batches_are_linear():
    one = cost_direct_tokens(20, 10_000, 20, 100)
    two = cost_direct_tokens(40, 10_000, 20, 100)
    # Doubling N doubles both the document term and the output term.
    assert two - one == 10_000 + 20 * 100


def test_direct_tokens_worked_example():
    # Independent arithmetic: 5 batches of 35,000 + 100 questions x 100 tokens.
    assert cost_direct_tokens(100, 35_000, 20, 100) == 5 * 35_000 + 100 * 100 == 185_000


def test_summary_tokens_degenerates_to_direct():
    direct = cost_direct_tokens(60, 10_000, 20, 100)
    summary = cost_summary_tokens(60, 10_000, 20, 100, fixed_tokens=0)
    assert direct == summary


def test_summary_tokens_worked_example():
    assert cost_summary_tokens(100, 2_000, 20, 100, fixed_tokens=5_000) == 25_000


def test_direct_minus_summary_grows_without_bound():
    # With a cheaper per-batch term, the gap keeps widening as N grows.
    gaps = [
        cost_direct_tokens(n, 30_000, 20, 100, exact=True)
        - cost_summary_tokens(n, 3_000, 20, 100, fixed_tokens=44_400, exact=True)
        for n in (10, 100, 1_000, 10_000)
    ]
    assert gaps == sorted(gaps)
    assert gaps[-1] > gaps[0] * 100


# --- money models ---

def test_direct_money_worked_example():
    assert cost_direct_money(100, 35_000, PARAMS) == pytest.approx(0.5375)


def test_direct_money_cached_equals_uncached_for_single_batch():
    assert cost_direct_money(20, 35_000, PARAMS, cached=True) == pytest.approx(
        cost_direct_money(20, 35_000, PARAMS, cached=False)
    )


def test_direct_money_cached_two_batches_input_spend():
    cached = cost_direct_money(40, 35_000, PARAMS, cached=True)
    output_spend = 2 * 100 * 20 * 1e-5
    input_spend = cached - output_spend
    assert input_spend == pytest.approx(1.5 * 2.5e-6 * 35_000)


def test_savaal_money_worked_example():
    assert cost_savaal_money(100, 35_000, PARAMS) == pytest.approx(0.2295)


def test_savaal_money_fixed_cost_at_zero_questions():
    assert cost_savaal_money(0, 35_000, PARAMS) == pytest.approx(1.48 * 2.5e-6 * 35_000)


def test_savaal_money_marginal_cost_is_output_only():
    base = cost_savaal_money(50, 35_000, PARAMS)
    assert cost_savaal_money(100, 35_000, PARAMS) - base == pytest.approx(50 * 100 * 1e-5)


def test_token_and_money_direct_models_agree_at_unit_prices():
    unit = CostParams(input_per_token=1.0, output_per_token=1.0)
    rng = random.Random(0)
    for _ in range(200):
        batches = rng.randint(1, 10)
        n = batches * unit.batch_direct  # whole batches: the models coincide
        d = rng.randint(1_000, 80_000)
        tokens = cost_direct_tokens(n, d, unit.batch_direct, unit.out_tokens_per_question)
        money = cost_direct_money(n, d, unit)
        assert tokens == pytest.approx(money)


# --- crossover ---

def test_uncached_crossover_is_ratio_times_batch():
    assert crossover_n(PARAMS) == pytest.approx(29.6, abs=1e-9)


def test_cached_crossover_closed_form():
    assert crossover_n(PARAMS, cached=True) == pytest.approx(39.2, abs=1e-9)


def test_parity_batch_size_at_100():
    parity = parity_batch_size(100, PARAMS)
    assert parity == pytest.approx(100 / 1.48)
    assert int(parity) == 67


def test_no_crossover_when_extraction_dominates():
    cheap_direct = CostParams(
        input_per_token=2.5e-6,
        output_per_token=1e-5,
        extraction_ratio=0.4,
        cache_discount=0.5,
    )
    with pytest.raises(NoCrossover):
        crossover_n(cheap_direct, cached=True)
    # Uncached always crosses for positive ratios.
    assert crossover_n(cheap_direct) == pytest.approx(8.0)


def test_crossover_verified_against_cost_curves():
    # The closed form should bracket the sign change of the continuous models.
    for cached in (False, True):
        n_star = crossover_n(PARAMS, cached=cached)
        lo, hi = int(n_star) - 1, int(n_star) + 2
        d = 40_000

        def diff(n):
            batches = n / PARAMS.batch_direct
            input_pass = PARAMS.input_per_token * d
            out = PARAMS.out_tokens_per_question * n * PARAMS.output_per_token
            if cached:
                direct = input_pass + (batches - 1) * PARAMS.cache_discount * input_pass + out
            else:
                direct = batches * input_pass + out
            return direct - cost_savaal_money(n, d, PARAMS)

        assert diff(lo) < 0 < diff(hi)


def test_direct_minus_summary_monotone_on_random_draws():
    rng = random.Random(1234)
    for _ in range(500):
        d = rng.randint(5_000, 100_000)
        b = rng.randint(1, 40)
        b_s = rng.randint(1, 40)
        d_s = rng.randint(100, 20_000)
        if d_s / b_s >= d / b:
            continue
        q = rng.randint(10, 300)
        f = rng.uniform(0, 3) * d
        n1 = rng.randint(1, 500)
        n2 = n1 + rng.randint(1, 500)
        gap1 = cost_direct_tokens(n1, d, b, q, exact=True) - cost_summary_tokens(
            n1, d_s, b_s, q, fixed_tokens=f, exact=True
        )
        gap2 = cost_direct_tokens(n2, d, b, q, exact=True) - cost_summary_tokens(
            n2, d_s, b_s, q, fixed_tokens=f, exact=True
        )
        assert gap2 > gap1


# --- reconcile ---

def test_reconcile_single_entry():
    report = reconcile([TokenUsage(1000, 200, 0, "generate")], PARAMS)
    assert report.actual_cost == pytest.approx(0.0045)
    assert report.by_stage == {"generate": pytest.approx(0.0045)}


def test_reconcile_empty_ledger_is_zero():
    report = reconcile([], PARAMS)
    assert report.actual_cost == 0.0
    assert report.by_stage == {}


def test_reconcile_fully_cached_prompt_halves_input_spend():
    full = reconcile([TokenUsage(1000, 0, 0, "generate")], PARAMS).actual_cost
    cached = reconcile([TokenUsage(1000, 0, 1000, "generate")], PARAMS).actual_cost
    assert cached == pytest.approx(full / 2)


def test_reconcile_groups_by_stage():
    entries = [
        TokenUsage(100, 10, 0, "map"),
        TokenUsage(100, 10, 0, "map"),
        TokenUsage(500, 40, 0, "generate"),
    ]
    report = reconcile(entries, PARAMS)
    assert set(report.by_stage) == {"map", "generate"}
    assert report.actual_cost == pytest.approx(sum(report.by_stage.values()))


# --- params / presets ---

def test_params_reject_nonpositive_values():
    with pytest.raises(ValueError):
        CostParams(input_per_token=0, output_per_token=1e-5)
    with pytest.raises(ValueError):
        CostParams(input_per_token=1e-6, output_per_token=1e-5, cache_discount=1.5)


def test_packaged_preset_loads():
    presets = load_price_presets()
    assert "2025-02-reference" in presets
    params = params_from_preset()
    assert params.input_per_token == pytest.approx(2.5e-6)
    assert params.output_per_token == pytest.approx(1e-5)
    assert params.cache_discount == pytest.approx(0.5)


def test_unknown_preset_raises_key_error():
    with pytest.raises(KeyError):
        params_from_preset("no-such-preset")

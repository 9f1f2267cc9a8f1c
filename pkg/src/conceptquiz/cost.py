"""Closed-form token and money cost models, crossover solver, reconciliation.

Two families of estimates: token-unit models (document passes plus output
tokens) and money models built from per-token prices. The concept pipeline
pays a one-time extraction cost proportional to document size
(``extraction_ratio`` input passes) and a per-question output cost; the
whole-document baseline pays a full document pass per batch, discounted on
later batches when prompt caching applies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import NoCrossover
from .llm import TokenUsage

DEFAULT_PRESET = "2025-02-reference"


@dataclass(frozen=True)
class CostParams:
    input_per_token: float
    output_per_token: float
    batch_direct: int = 20
    batch_summary: int = 20
    out_tokens_per_question: int = 100
    extraction_ratio: float = 1.48
    cache_discount: float = 0.5

    def __post_init__(self) -> None:
        values = (
            self.input_per_token,
            self.output_per_token,
            self.batch_direct,
            self.batch_summary,
            self.out_tokens_per_question,
            self.extraction_ratio,
            self.cache_discount,
        )
        if any(v <= 0 for v in values):
            raise ValueError("all cost parameters must be positive")
        if self.cache_discount > 1:
            raise ValueError("cache_discount cannot exceed 1")


@dataclass(frozen=True)
class CostReport:
    method: str
    n: int
    doc_tokens: int
    summary_tokens: int | None
    modeled_cost: float
    actual_cost: float | None = None
    by_stage: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.modeled_cost < 0:
            raise ValueError("modeled_cost must be non-negative")


def _batches(n: int, batch: int, exact: bool) -> float:
    return n / batch if exact else -(-n // batch)


def cost_direct_tokens(
    n: int, doc_tokens: int, batch: int, out_per_question: int, exact: bool = False
) -> float:
    """Token cost of whole-document prompting: one document pass per batch.

    ``exact`` evaluates n/batch as a real for the asymptotic form; the
    default rounds up to whole batches.
    """
    if min(n, doc_tokens, batch, out_per_question) <= 0:
        raise ValueError("all inputs must be positive")
    return _batches(n, batch, exact) * doc_tokens + n * out_per_question


def cost_summary_tokens(
    n: int,
    summary_tokens: int,
    batch: int,
    out_per_question: int,
    fixed_tokens: float,
    exact: bool = False,
) -> float:
    """Token cost of summary-context prompting plus the one-time summary cost."""
    if min(n, summary_tokens, batch, out_per_question) <= 0 or fixed_tokens < 0:
        raise ValueError("inputs must be positive (fixed cost non-negative)")
    return fixed_tokens + _batches(n, batch, exact) * summary_tokens + n * out_per_question


def cost_direct_money(n: int, doc_tokens: int, p: CostParams, cached: bool = False) -> float:
    """Money cost of the direct baseline: per batch, a full document of input
    plus ~out_tokens_per_question * batch of output.

    With caching, batches after the first pay ``cache_discount`` on input.
    """
    if n <= 0 or doc_tokens <= 0:
        raise ValueError("n and doc_tokens must be positive")
    batches = -(-n // p.batch_direct)
    input_pass = p.input_per_token * doc_tokens
    output_per_batch = p.out_tokens_per_question * p.batch_direct * p.output_per_token
    if not cached:
        return batches * (input_pass + output_per_batch)
    input_spend = input_pass + (batches - 1) * p.cache_discount * input_pass
    return input_spend + batches * output_per_batch


def cost_savaal_money(n: int, doc_tokens: int, p: CostParams) -> float:
    """Money cost of the concept pipeline: a fixed extraction cost of
    ``extraction_ratio`` document passes plus per-question output."""
    if n < 0 or doc_tokens <= 0:
        raise ValueError("doc_tokens must be positive and n non-negative")
    fixed = p.extraction_ratio * p.input_per_token * doc_tokens
    return fixed + p.out_tokens_per_question * n * p.output_per_token


def cost_summary_money(
    n: int, summary_tokens: int, doc_tokens: int, p: CostParams
) -> float:
    """Money cost of the summary baseline: summary generation modeled at the
    same fixed extraction cost, then a summary pass per batch."""
    if min(n, summary_tokens, doc_tokens) <= 0:
        raise ValueError("all inputs must be positive")
    fixed = p.extraction_ratio * p.input_per_token * doc_tokens
    batches = -(-n // p.batch_summary)
    return (
        fixed
        + batches * p.input_per_token * summary_tokens
        + n * p.out_tokens_per_question * p.output_per_token
    )


def crossover_n(p: CostParams, cached: bool = False) -> float:
    """Question count at which the pipeline becomes cheaper than direct.

    Closed form from the continuous cost models (document size cancels):
    uncached N* = extraction_ratio * batch; cached
    N* = batch * (extraction_ratio - (1 - discount)) / discount.
    """
    if not cached:
        n_star = p.extraction_ratio * p.batch_direct
    else:
        n_star = p.batch_direct * (p.extraction_ratio - (1 - p.cache_discount)) / p.cache_discount
    if n_star <= 0:
        raise NoCrossover(
            "direct prompting is cheaper at every N for these parameters"
        )
    return n_star


def parity_batch_size(n: int, p: CostParams) -> float:
    """Batch size direct would need for cost parity with the pipeline at n."""
    if n <= 0:
        raise ValueError("n must be positive")
    return n / p.extraction_ratio


def reconcile(
    ledger: list[TokenUsage] | tuple[TokenUsage, ...],
    p: CostParams,
    method: str = "ledger",
    n: int = 0,
    doc_tokens: int = 0,
    summary_tokens: int | None = None,
    modeled_cost: float = 0.0,
) -> CostReport:
    """Price an actual run from its token ledger, grouped per stage tag.

    Cached prompt tokens are charged at ``cache_discount`` of the input
    price; everything else at full price.
    """
    by_stage: dict[str, float] = {}
    total = 0.0
    for entry in ledger:
        uncached = entry.prompt_tokens - entry.cached_prompt_tokens
        cost = (
            p.input_per_token * uncached
            + p.cache_discount * p.input_per_token * entry.cached_prompt_tokens
            + p.output_per_token * entry.completion_tokens
        )
        tag = entry.stage_tag or "untagged"
        by_stage[tag] = by_stage.get(tag, 0.0) + cost
        total += cost
    return CostReport(
        method=method,
        n=n,
        doc_tokens=doc_tokens,
        summary_tokens=summary_tokens,
        modeled_cost=modeled_cost,
        actual_cost=total,
        by_stage=dict(sorted(by_stage.items())),
    )


def load_price_presets(path: str | Path | None = None) -> dict[str, dict]:
    """Price presets from a JSON file; defaults to the packaged preset file."""
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
    else:
        raw = (
            resources.files("conceptquiz").joinpath("data/price_presets.json").read_text("utf-8")
        )
    return json.loads(raw)


def params_from_preset(
    name: str = DEFAULT_PRESET, path: str | Path | None = None, **overrides
) -> CostParams:
    presets = load_price_presets(path)
    if name not in presets:
        raise KeyError(
            f"unknown price preset {name!r}; available: {', '.join(sorted(presets))}"
        )
    preset = presets[name]
    kwargs = {
        "input_per_token": preset["input_per_token"],
        "output_per_token": preset["output_per_token"],
        "cache_discount": preset.get("cache_discount", 0.5),
    }
    kwargs.update(overrides)
    return CostParams(**kwargs)

"""Command-line surface: generate quizzes, judge them, model costs, take a quiz.

Exit codes are stable: 0 success, 1 runtime failure, 2 usage error.
Configuration precedence is flags > environment variables > config file >
built-in defaults (env vars: LLM_API_KEY, LLM_BASE_URL, GROBID_URL).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import cost as costmod
from . import judge as judgemod
from . import pipeline
from .concepts import DEFAULT_MODEL
from .errors import ConceptQuizError
from .generation import CHOICE_LETTERS, METHODS, Quiz, load_quiz, write_quiz
from .ingest import estimate_tokens, parse_structured_document, sectionize_plaintext
from .llm import LLMClient, OpenAIBackend, TokenUsage, UsageLedger
from .mockllm import MockBackend
from .retrieval import HTTPEmbedder, HashEmbedder

logger = logging.getLogger(__name__)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _resolve(flag_value, env_var: str | None, config: dict, key: str, default=None):
    if flag_value is not None:
        return flag_value
    if env_var and os.environ.get(env_var):
        return os.environ[env_var]
    if key in config:
        return config[key]
    return default


def _make_client(args, config: dict) -> LLMClient:
    if getattr(args, "mock", None):
        backend = MockBackend.from_file(args.mock)
    else:
        backend = OpenAIBackend(
            base_url=_resolve(getattr(args, "base_url", None), "LLM_BASE_URL", config, "base_url"),
            api_key=_resolve(None, "LLM_API_KEY", config, "api_key"),
        )
    return LLMClient(backend, concurrency_cap=getattr(args, "concurrency", 8))


def _ledger_path(out: Path, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    if out.suffix == ".json":
        return out.with_suffix(".ledger.json")
    return Path(str(out) + ".ledger.json")


def _write_ledger(path: Path, ledger: UsageLedger, meta: dict) -> None:
    totals = ledger.totals()
    payload = dict(meta)
    payload["entries"] = [
        {
            "stage_tag": e.stage_tag,
            "prompt_tokens": e.prompt_tokens,
            "completion_tokens": e.completion_tokens,
            "cached_prompt_tokens": e.cached_prompt_tokens,
        }
        for e in ledger.entries()
    ]
    payload["totals"] = {
        "prompt_tokens": totals.prompt_tokens,
        "completion_tokens": totals.completion_tokens,
        "cached_prompt_tokens": totals.cached_prompt_tokens,
    }
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_ledger_file(path: str | Path) -> tuple[dict, list[TokenUsage]]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = [
        TokenUsage(
            prompt_tokens=e["prompt_tokens"],
            completion_tokens=e["completion_tokens"],
            cached_prompt_tokens=e.get("cached_prompt_tokens", 0),
            stage_tag=e.get("stage_tag", ""),
        )
        for e in data.get("entries", [])
    ]
    meta = {k: v for k, v in data.items() if k not in ("entries", "totals")}
    return meta, entries


# --- generate ---

def _ingest_input(args, config: dict):
    path = Path(args.input)
    if not path.exists():
        raise ConceptQuizError(f"input file not found: {path}")
    if path.suffix.lower() == ".pdf":
        grobid = _resolve(getattr(args, "grobid_url", None), "GROBID_URL", config, "grobid_url")
        if not grobid:
            raise ConceptQuizError("PDF input needs a structure service (set GROBID_URL)")
        return parse_structured_document(path.read_bytes(), grobid, filename=path.name)
    text = path.read_text(encoding="utf-8")
    title = args.title or path.stem
    return sectionize_plaintext(text, title=title)


def cmd_generate(args) -> int:
    config = _load_config(args.config)
    doc = _ingest_input(args, config)
    client = _make_client(args, config)
    embedder = (
        HTTPEmbedder(model=args.embed_model or "text-embedding-3-small")
        if args.embedder == "http"
        else HashEmbedder()
    )
    cfg = pipeline.RunConfig(
        method=args.method,
        n=args.num_questions,
        k=args.k,
        batch_b=args.batch,
        seed=args.seed,
        refine=args.refine,
        model=_resolve(args.model, None, config, "model", DEFAULT_MODEL),
        context_window_tokens=args.context_window,
        concurrency_cap=args.concurrency,
        embedder_mode=args.mode,
    )
    quiz = pipeline.run(doc, cfg, client, embedder)

    out = Path(args.out)
    write_quiz(quiz, out)
    ledger_out = _ledger_path(out, args.ledger_out)
    _write_ledger(
        ledger_out,
        client.ledger,
        {
            "doc_id": doc.id,
            "method": cfg.method,
            "n": cfg.n,
            "model": cfg.model,
            "doc_tokens": doc.token_estimate,
        },
    )

    totals = quiz.usage_totals
    print(f"wrote {len(quiz.questions)} questions ({cfg.method}) to {out}")
    print(f"ledger: {ledger_out}")
    print(
        f"tokens: prompt={totals.prompt_tokens} completion={totals.completion_tokens} "
        f"cached={totals.cached_prompt_tokens}"
    )
    return 0


# --- judge ---

def cmd_judge(args) -> int:
    config = _load_config(args.config)
    try:
        quiz = load_quiz(args.quiz)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.metrics:
        metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
        unknown = [m for m in metrics if m not in judgemod.METRICS]
        if unknown:
            print(
                f"error: unknown metrics {', '.join(unknown)}; "
                f"choose from {', '.join(judgemod.METRICS)}",
                file=sys.stderr,
            )
            return 2
    else:
        metrics = judgemod.METRICS

    client = _make_client(args, config)
    model = _resolve(args.model, None, config, "model", DEFAULT_MODEL)
    tasks = [(q, metric) for q in quiz.questions for metric in metrics]
    with ThreadPoolExecutor(max_workers=client.concurrency_cap) as pool:
        scores = list(
            pool.map(lambda t: judgemod.judge_question(client, t[0], t[1], model=model), tasks)
        )
    agg = judgemod.aggregate(scores)

    payload = {
        "scores": [
            {
                "question_id": s.question_id,
                "metric": s.metric,
                "score": s.score,
                "label": s.label,
            }
            for s in scores
        ],
        "aggregate": {
            metric: {
                "counts": dist.counts,
                "fractions": dist.fractions,
                "negative_fraction": dist.negative_fraction,
            }
            for metric, dist in agg.items()
        },
    }
    Path(args.out).write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

    header = f"{'metric':<16}" + "".join(f"{label:>20}" for label in judgemod.LABELS) + f"{'negative':>10}"
    print(header)
    for metric, dist in agg.items():
        row = f"{metric:<16}" + "".join(
            f"{dist.fractions[label]:>19.0%} " for label in judgemod.LABELS
        )
        print(row + f"{dist.negative_fraction:>9.0%}")
    print(f"wrote scores for {len(quiz.questions)} questions to {args.out}")
    return 0


# --- cost-report ---

def cmd_cost(args) -> int:
    try:
        params = costmod.params_from_preset(
            args.preset,
            path=args.prices,
            batch_direct=args.batch,
            batch_summary=args.summary_batch,
            out_tokens_per_question=args.out_per_question,
            extraction_ratio=args.extraction_ratio,
        )
    except (KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    doc_tokens = args.doc_tokens
    summary_tokens = args.summary_tokens or max(1, doc_tokens // 10)

    actual_meta: dict = {}
    actual_cost: float | None = None
    if args.ledger:
        meta, entries = load_ledger_file(args.ledger)
        report = costmod.reconcile(entries, params)
        actual_meta = meta
        actual_cost = report.actual_cost

    rows: list[tuple[str, int, float, float | None]] = []
    for n in range(args.n_step, args.n_max + 1, args.n_step):
        rows.append(("direct", n, costmod.cost_direct_money(n, doc_tokens, params), None))
        rows.append(
            ("direct_cached", n, costmod.cost_direct_money(n, doc_tokens, params, cached=True), None)
        )
        rows.append(("savaal", n, costmod.cost_savaal_money(n, doc_tokens, params), None))
        rows.append(
            ("summary", n, costmod.cost_summary_money(n, summary_tokens, doc_tokens, params), None)
        )
    if actual_cost is not None:
        matched = False
        for i, (method, n, modeled, _) in enumerate(rows):
            if method == actual_meta.get("method") and n == actual_meta.get("n"):
                rows[i] = (method, n, modeled, actual_cost)
                matched = True
        if not matched:
            rows.append((str(actual_meta.get("method", "ledger")), int(actual_meta.get("n", 0)), 0.0, actual_cost))

    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["method", "N", "modeled_cost", "actual_cost"])
        for method, n, modeled, actual in rows:
            writer.writerow(
                [method, n, f"{modeled:.6f}", "" if actual is None else f"{actual:.6f}"]
            )
        crossover = costmod.crossover_n(params)
        out.write(
            f"# crossover uncached: N*={crossover:.6g} "
            f"(batch={params.batch_direct}, extraction_ratio={params.extraction_ratio})\n"
        )
        crossover_cached = costmod.crossover_n(params, cached=True)
        out.write(
            f"# crossover cached: N*={crossover_cached:.6g} "
            f"(discount={params.cache_discount})\n"
        )
        if args.parity_at:
            parity = costmod.parity_batch_size(args.parity_at, params)
            out.write(
                f"# parity batch size at N={args.parity_at}: "
                f"b={parity:.6g} (~{int(parity)})\n"
            )
        if actual_cost is not None:
            out.write(
                f"# actual cost from ledger {args.ledger}: {actual_cost:.6f}\n"
            )
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# --- quiz session ---

def cmd_quiz(args) -> int:
    try:
        quiz = load_quiz(args.quiz)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    order = list(quiz.questions)
    if args.shuffle_questions:
        random.Random(args.seed).shuffle(order)

    answers: list[dict] = []
    correct_count = 0
    interrupted = False
    for i, q in enumerate(order, start=1):
        print(f"\nQuestion {i}/{len(order)}: {q.stem}")
        for letter, choice in zip(CHOICE_LETTERS, q.choices):
            print(f"  {letter}. {choice}")
        chosen_index = None
        while chosen_index is None:
            try:
                raw = input("Your answer [A-D]: ")
            except EOFError:
                interrupted = True
                break
            picked = raw.strip().upper().rstrip(".)")
            if picked in CHOICE_LETTERS:
                chosen_index = CHOICE_LETTERS.index(picked)
            else:
                print("Please answer A, B, C, or D.")
        if interrupted:
            break
        is_correct = chosen_index == q.correct_index
        correct_count += is_correct
        print(
            ("Correct!" if is_correct else "Incorrect.")
            + f" Answer: {CHOICE_LETTERS[q.correct_index]}. {q.correct_text}"
        )
        answers.append(
            {"question_id": q.id, "chosen_index": chosen_index, "correct": is_correct}
        )

    score_fraction = correct_count / len(answers) if answers else 0.0
    session = {
        "quiz_id": quiz.doc_id,
        "answers": answers,
        "score_fraction": score_fraction,
    }
    out = Path(args.out) if args.out else Path(str(Path(args.quiz).with_suffix("")) + ".session.json")
    out.write_text(json.dumps(session, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"\nScore: {correct_count}/{len(answers)} ({score_fraction:.2f})")
    print(f"session saved to {out}")
    return 0


# --- parser ---

def _add_llm_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--mock", help="scripted mock fixture file (hermetic runs)")
    sub.add_argument("--model", help=f"chat model name (default {DEFAULT_MODEL})")
    sub.add_argument("--base-url", dest="base_url", help="chat-completions base URL")
    sub.add_argument("--concurrency", type=int, default=8, help="max in-flight LLM calls")
    sub.add_argument("--config", help="JSON config file (lowest-precedence settings)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptquiz",
        description="Concept-driven multiple-choice quiz generation and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a quiz from a document")
    gen.add_argument("--input", required=True, help="source document (.md/.txt/.pdf)")
    gen.add_argument("--method", choices=METHODS, default="savaal")
    gen.add_argument("-n", "--num-questions", type=int, default=20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="quiz.json", help="quiz JSON output path")
    gen.add_argument("--ledger-out", dest="ledger_out", help="token ledger output path")
    gen.add_argument("--k", type=int, default=3, help="passages retrieved per idea")
    gen.add_argument("--batch", type=int, default=20, help="questions per direct batch")
    gen.add_argument("--refine", action="store_true", help="enable distractor refinement")
    gen.add_argument("--embedder", choices=("hash", "http"), default="hash")
    gen.add_argument("--embed-model", dest="embed_model", help="embeddings model (http)")
    gen.add_argument(
        "--mode", choices=("cosine", "late_interaction"), default="cosine",
        help="retrieval scoring mode",
    )
    gen.add_argument("--context-window", type=int, default=128_000)
    gen.add_argument("--title", help="document title override (plaintext inputs)")
    gen.add_argument("--grobid-url", dest="grobid_url", help="structure service URL for PDFs")
    _add_llm_flags(gen)
    gen.set_defaults(func=cmd_generate)

    jdg = sub.add_parser("judge", help="score a quiz file on the AI-judge rubrics")
    jdg.add_argument("--quiz", required=True, help="quiz JSON file")
    jdg.add_argument("--out", default="scores.json", help="scores JSON output path")
    jdg.add_argument("--metrics", help="comma-separated metric subset")
    _add_llm_flags(jdg)
    jdg.set_defaults(func=cmd_judge)

    cst = sub.add_parser("cost-report", help="modeled cost sweep and crossover summary")
    cst.add_argument("--preset", default=costmod.DEFAULT_PRESET, help="price preset name")
    cst.add_argument("--prices", help="custom price presets JSON file")
    cst.add_argument("--doc-tokens", dest="doc_tokens", type=int, default=35_000)
    cst.add_argument("--summary-tokens", dest="summary_tokens", type=int)
    cst.add_argument("--batch", type=int, default=20, help="direct batch size b")
    cst.add_argument("--summary-batch", dest="summary_batch", type=int, default=20)
    cst.add_argument("--out-per-question", dest="out_per_question", type=int, default=100)
    cst.add_argument(
        "--extraction-ratio", dest="extraction_ratio", type=float, default=1.48,
        help="extraction cost as document-input passes",
    )
    cst.add_argument("--n-max", dest="n_max", type=int, default=100)
    cst.add_argument("--n-step", dest="n_step", type=int, default=10)
    cst.add_argument("--parity-at", dest="parity_at", type=int)
    cst.add_argument("--ledger", help="reconcile an actual run ledger file")
    cst.add_argument("--out", help="write CSV here instead of stdout")
    cst.set_defaults(func=cmd_cost)

    qz = sub.add_parser("quiz", help="take a quiz interactively in the terminal")
    qz.add_argument("--quiz", required=True, help="quiz JSON file")
    qz.add_argument("--shuffle-questions", action="store_true")
    qz.add_argument("--seed", type=int, default=0)
    qz.add_argument("--out", help="session result JSON path")
    qz.set_defaults(func=cmd_quiz)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("CONCEPTQUIZ_LOG", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConceptQuizError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

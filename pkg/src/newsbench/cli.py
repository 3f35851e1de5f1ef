"""Command line entry point.

Subcommands cover the full pipeline: harvest, generate, validate, package,
index, retrieve-eval, eval, cost-report.  Every invocation writes a machine
readable run manifest with the resolved configuration and exit status, so a
run can be replayed exactly.  Option precedence: flags > environment
(NEWSBENCH_<OPTION>) > --config file > built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import yaml

from . import corpus_store, feed_ingest, qa_factory, qa_validator, versioning
from .errors import NewsbenchError, UsageError
from .eval_harness import EvalConfig, run_eval
from .io_utils import atomic_write_text, canonical_json, read_jsonl, write_jsonl
from .llm_gateway import (
    Gateway,
    HttpChatTransport,
    ModelSpec,
    PriceTable,
    TranscriptTransport,
)
from .readers import BUILTIN_READERS, builtin_reader
from .retrieval import (
    KERNEL_BACKEND,
    build_bm25,
    build_dense,
    load_index,
    query_bm25,
    query_dense,
    save_index,
    score_retrieval,
)
from .retrieval.dense import EmbedClient

logger = logging.getLogger(__name__)

ENV_PREFIX = "NEWSBENCH_"


def _utc(value: str) -> datetime:
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _load_config_file(path):
    if not path:
        return {}
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise UsageError(f"--config {path}: expected a mapping")
    return raw


def _resolve(args, cfg: dict, name: str, default=None):
    """flags > env > config file > default; records nothing itself."""
    flag = getattr(args, name.replace("-", "_"), None)
    if flag is not None:
        return flag
    env = os.environ.get(ENV_PREFIX + name.replace("-", "_").upper())
    if env is not None:
        return env
    if name in cfg:
        return cfg[name]
    return default


def _price_table(args, cfg) -> PriceTable:
    path = _resolve(args, cfg, "price-table")
    return PriceTable.load(path) if path else PriceTable.default()


def _model_spec(args, cfg, snapshot=None) -> tuple:
    """Build (ModelSpec, transport) from --model/--provider/--transcript.

    Built-in reader names (mock-perfect, mock-abstain, mock-context) need the
    snapshot they will answer about.
    """
    model_id = _resolve(args, cfg, "model")
    if not model_id:
        raise UsageError("--model is required")
    provider = _resolve(args, cfg, "provider")
    transcript = _resolve(args, cfg, "transcript")
    if model_id in BUILTIN_READERS:
        if snapshot is None:
            raise UsageError(f"{model_id} is only valid for eval")
        provider = "mock"
        transport = builtin_reader(model_id, snapshot)
    elif transcript:
        provider = "mock"
        transport = TranscriptTransport.from_file(transcript)
    else:
        if provider == "mock":
            raise UsageError("mock provider needs --transcript (or a builtin mock-* target)")
        provider = provider or "openai-compatible"
        transport = HttpChatTransport(base_url=_resolve(args, cfg, "base-url"))
    spec = ModelSpec(
        provider=provider,
        model_id=model_id,
        temperature=float(_resolve(args, cfg, "temperature", 0.0)),
        top_p=float(_resolve(args, cfg, "top-p", 1.0)),
        max_tokens=int(_resolve(args, cfg, "max-tokens", 1024)),
    )
    return spec, transport


def _load_articles(from_path: str) -> list:
    """--from accepts a day file, a ROOT/DATE shorthand, or a .jsonl path."""
    path = Path(from_path)
    if path.suffix != ".jsonl":
        candidate = path.with_suffix(".jsonl")
        if candidate.exists():
            path = candidate
    if not path.exists():
        raise UsageError(f"--from {from_path}: no such article file")
    return [feed_ingest.Article.from_dict(d) for d in read_jsonl(path)]


def _write_ledger(out_base: Path, gateway: Gateway) -> Path:
    ledger_path = out_base.parent / (out_base.stem + ".ledger.json")
    atomic_write_text(ledger_path, canonical_json(gateway.ledger_report()) + "\n")
    return ledger_path


# --- subcommand handlers -----------------------------------------------------


def cmd_harvest(args, cfg, manifest) -> int:
    registry_path = _resolve(args, cfg, "registry")
    corpus_root = _resolve(args, cfg, "corpus-root")
    if not registry_path or not corpus_root:
        raise UsageError("harvest needs --registry and --corpus-root")
    window_end = _utc(args.window_end) if args.window_end else datetime.now(timezone.utc)
    window_hours = int(_resolve(args, cfg, "window-hours", 24))
    transport = None
    if args.fixtures:
        transport = feed_ingest.fixture_transport(args.fixtures)
    else:
        transport = feed_ingest.http_transport(
            timeout=float(_resolve(args, cfg, "timeout", feed_ingest.DEFAULT_TIMEOUT)),
            user_agent=_resolve(args, cfg, "user-agent", feed_ingest.DEFAULT_USER_AGENT),
        )
    registry = feed_ingest.load_registry(registry_path)
    result = feed_ingest.harvest(
        registry,
        window_end=window_end,
        window_hours=window_hours,
        transport=transport,
        max_parallel=int(_resolve(args, cfg, "max-parallel", feed_ingest.DEFAULT_MAX_PARALLEL)),
        min_body_chars=int(_resolve(args, cfg, "min-body-chars", feed_ingest.MIN_BODY_CHARS)),
    )
    store = corpus_store.CorpusStore(corpus_root)
    handle = store.persist_day(result.articles, window_end.date())
    print(f"harvested {len(result.articles)} articles into {handle.path}")
    for report in result.reports:
        if report.error:
            print(f"  source {report.source}: FAILED ({report.error})")
        elif report.dropped:
            print(f"  source {report.source}: kept {report.fetched}, dropped {len(report.dropped)}")
    manifest["outputs"] = [str(handle.path)]
    manifest["resolved"].update(
        {
            "registry": str(registry_path),
            "corpus_root": str(corpus_root),
            "window_end": window_end.isoformat(),
            "window_hours": window_hours,
            "fixtures": args.fixtures,
            "articles": len(result.articles),
            "source_failures": result.failures,
        }
    )
    return 0


def cmd_generate(args, cfg, manifest) -> int:
    articles = _load_articles(args.from_path)
    model, transport = _model_spec(args, cfg)
    gateway = Gateway(transport=transport, prices=_price_table(args, cfg))
    generated_at = (
        _utc(args.generated_at)
        if args.generated_at
        else max((a.published_at for a in articles), default=datetime.now(timezone.utc))
    )
    max_per_source = int(args.max_articles_per_source) if args.max_articles_per_source else None
    outcome = qa_factory.generate_for_corpus(
        articles,
        model,
        gateway,
        generated_at=generated_at,
        max_articles_per_source=max_per_source,
        max_parallel=int(_resolve(args, cfg, "max-parallel", 4)),
    )
    out = Path(args.out)
    write_jsonl(out, (i.to_dict() for i in outcome.items))
    ledger_path = _write_ledger(out, gateway)
    print(
        f"generated {len(outcome.items)} candidate items from {outcome.attempted} articles "
        f"({len(outcome.failures)} article failures)"
    )
    manifest["outputs"] = [str(out), str(ledger_path)]
    manifest["resolved"].update(
        {
            "from": args.from_path,
            "model": model.model_id,
            "generated_at": generated_at.isoformat(),
            "max_articles_per_source": max_per_source,
            "items_generated": len(outcome.items),
            "article_failures": outcome.failures,
            "seed": args.seed,
        }
    )
    return 0


def cmd_validate(args, cfg, manifest) -> int:
    articles = _load_articles(args.from_path)
    items = [qa_factory.McqItem.from_dict(d) for d in read_jsonl(args.items)]
    model, transport = _model_spec(args, cfg)
    gateway = Gateway(transport=transport, prices=_price_table(args, cfg))
    kept, verdicts = qa_validator.validate_batch(
        items,
        {a.id: a for a in articles},
        model,
        gateway,
        max_parallel=int(_resolve(args, cfg, "max-parallel", 4)),
    )
    out_kept = Path(args.out_kept)
    write_jsonl(out_kept, (i.to_dict() for i in kept))
    write_jsonl(args.out_verdicts, (v.to_dict() for v in verdicts))
    ledger_path = _write_ledger(out_kept, gateway)
    print(f"kept {len(kept)}/{len(items)} items")
    manifest["outputs"] = [str(out_kept), str(args.out_verdicts), str(ledger_path)]
    manifest["resolved"].update({"items_in": len(items), "items_kept": len(kept)})
    return 0


def cmd_package(args, cfg, manifest) -> int:
    articles = _load_articles(args.from_path)
    items = [qa_factory.McqItem.from_dict(d) for d in read_jsonl(args.items)]
    model_id = _resolve(args, cfg, "model")
    if not model_id:
        raise UsageError("--model is required (it is recorded in the signature)")
    model = ModelSpec(
        provider="mock" if args.transcript or model_id in BUILTIN_READERS else "openai-compatible",
        model_id=model_id,
        temperature=float(_resolve(args, cfg, "temperature", 0.0)),
        top_p=float(_resolve(args, cfg, "top-p", 1.0)),
        max_tokens=int(_resolve(args, cfg, "max-tokens", 1024)),
    )
    generated_at = (
        _utc(args.generated_at)
        if args.generated_at
        else max((i.generated_at for i in items), default=datetime.now(timezone.utc))
    )
    extra = {}
    if args.max_articles_per_source:
        extra["max_articles_per_source"] = str(args.max_articles_per_source)
    for kv in args.param or []:
        if "=" not in kv:
            raise UsageError(f"--param {kv!r}: expected key=value")
        key, value = kv.split("=", 1)
        extra[key] = value
    rng = random.Random(args.seed) if args.seed is not None else random.Random()
    sig = versioning.mint_signature(model, generated_at, extra_params=extra, rng=rng)

    by_id = {a.id: a for a in articles}
    open_ended = []
    for item in items:
        article = by_id.get(item.article_id)
        if article is None:
            continue  # caught by package() below
        oe = qa_factory.derive_open_ended(item, article)
        if oe is not None:
            open_ended.append(oe)
    snapshot = versioning.package(
        items,
        open_ended,
        articles,
        sig,
        items_generated=args.items_generated,
    )
    out_dir = versioning.write_snapshot(snapshot, args.out_root)
    print(f"signature: {versioning.render(sig)}")
    print(f"snapshot:  {out_dir}")
    print(f"stats:     {canonical_json(snapshot.stats)}")
    manifest["outputs"] = [str(out_dir)]
    manifest["dataset_signature"] = versioning.render(sig)
    manifest["resolved"].update({"stats": snapshot.stats, "seed": args.seed})
    return 0


def cmd_index(args, cfg, manifest) -> int:
    store = corpus_store.CorpusStore(_resolve(args, cfg, "corpus-root"))
    as_of = _utc(args.as_of)
    corpus = store.slice(as_of, int(args.window_days))
    index = build_bm25(corpus, k1=float(args.k1), b=float(args.b))
    save_index(index, args.out)
    print(
        f"bm25 index over {index.n_docs} docs ({len(index.postings)} terms, "
        f"kernel backend: {KERNEL_BACKEND}) -> {args.out}"
    )
    manifest["outputs"] = [str(args.out)]
    manifest["resolved"].update(
        {"as_of": as_of.isoformat(), "window_days": args.window_days, "k1": args.k1, "b": args.b}
    )
    return 0


def _parse_ks(raw: str) -> list:
    try:
        ks = sorted({int(part) for part in raw.split(",") if part.strip()})
    except ValueError as exc:
        raise UsageError(f"--k {raw!r}: expected comma-separated integers") from exc
    if not ks or any(k < 1 for k in ks):
        raise UsageError(f"--k {raw!r}: values must be >= 1")
    return ks


def cmd_retrieve_eval(args, cfg, manifest) -> int:
    snapshot = versioning.read_snapshot(args.snapshot)
    ks = _parse_ks(args.k)
    store = corpus_store.CorpusStore(_resolve(args, cfg, "corpus-root"))
    as_of = _utc(args.as_of) if args.as_of else snapshot.signature.generated_at
    corpus = store.slice(as_of, int(args.window_days))
    k_max = max(ks)

    retriever = args.retriever
    if retriever == "bm25":
        index = load_index(args.index) if args.index else build_bm25(corpus)
        runner = lambda item: query_bm25(index, item.question, k_max, query_id=item.item_id)
    else:
        embed_url = _resolve(args, cfg, "embed-url")
        if not embed_url:
            raise UsageError(f"{retriever} needs --embed-url")
        client = EmbedClient(embed_url)
        mode = "single" if retriever == "dense-single" else "late"
        index = build_dense(corpus, client, mode=mode)
        runner = lambda item: query_dense(index, item.question, k_max, client, query_id=item.item_id)

    runs = [runner(item) for item in snapshot.items]
    gold = {item.item_id: item.article_id for item in snapshot.items}
    metrics = score_retrieval(runs, gold, ks)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(out_dir / "runs.jsonl", (r.to_dict() for r in runs))
    atomic_write_text(out_dir / "metrics.json", canonical_json(metrics.to_dict()) + "\n")

    window_label = f"{args.window_days}-day"
    header = "".join(f"  top-{k:<4}" for k in ks)
    print(f"retrieval over {window_label} corpus ({corpus.articles and len(corpus.articles) or 0} docs), "
          f"{metrics.n_queries} queries")
    print(f"{'retriever':<14}{header}")
    print(f"{retriever + ' hit':<14}" + "".join(f"  {metrics.hit_at_k[k] * 100:6.2f}" for k in ks))
    print(f"{retriever + ' mrr':<14}" + "".join(f"  {metrics.mrr_at_k[k]:6.2f}" for k in ks))
    manifest["outputs"] = [str(out_dir / "runs.jsonl"), str(out_dir / "metrics.json")]
    manifest["resolved"].update(
        {
            "as_of": as_of.isoformat(),
            "window_days": args.window_days,
            "retriever": retriever,
            "ks": ks,
            "corpus_docs": len(corpus.articles),
        }
    )
    return 0


def cmd_eval(args, cfg, manifest) -> int:
    snapshot = versioning.read_snapshot(args.snapshot)
    target_id = _resolve(args, cfg, "target")
    if not target_id:
        raise UsageError("--target is required")
    args.model = target_id  # reuse the model/transport resolver
    model, transport = _model_spec(args, cfg, snapshot=snapshot)
    gateway = Gateway(transport=transport, prices=_price_table(args, cfg))

    config = EvalConfig(
        setting=args.setting,
        target=model,
        format=args.format,
        seed=int(args.seed or 0),
        retriever=args.retriever,
        k=int(args.k) if args.k else None,
        window_days=int(args.window_days) if args.window_days else None,
        context_char_budget=int(args.context_char_budget) if args.context_char_budget else None,
    )

    retrieval_pool = None
    index = None
    embed_client = None
    if config.setting == "retrieval":
        corpus_root = _resolve(args, cfg, "corpus-root")
        if not corpus_root:
            raise UsageError("retrieval eval needs --corpus-root")
        as_of = _utc(args.as_of) if args.as_of else snapshot.signature.generated_at
        corpus = corpus_store.CorpusStore(corpus_root).slice(as_of, config.window_days)
        retrieval_pool = corpus.articles
        if config.retriever == "bm25":
            index = build_bm25(corpus)
        else:
            embed_url = _resolve(args, cfg, "embed-url")
            if not embed_url:
                raise UsageError(f"{config.retriever} needs --embed-url")
            embed_client = EmbedClient(embed_url)
            mode = "single" if config.retriever == "dense-single" else "late"
            index = build_dense(corpus, embed_client, mode=mode)
        manifest["resolved"]["as_of"] = as_of.isoformat()

    records, summary = run_eval(
        snapshot,
        config,
        gateway,
        retrieval_pool=retrieval_pool,
        index=index,
        embed_client=embed_client,
        max_parallel=int(_resolve(args, cfg, "max-parallel", 4)),
    )

    sig = versioning.render(snapshot.signature)
    out_dir = Path(args.out_dir) / sig / config.config_hash()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(out_dir / "records.jsonl", (r.to_dict() for r in records))
    atomic_write_text(out_dir / "summary.json", canonical_json(summary.to_dict()) + "\n")

    print(f"setting={config.setting} format={config.format} target={model.model_id}")
    print(f"n={summary.n} (of {summary.n_total}) accuracy={summary.accuracy * 100:.2f}%")
    if summary.failure_modes:
        print("failures: " + ", ".join(f"{k}={v}" for k, v in sorted(summary.failure_modes.items())))
    print(f"results -> {out_dir}")
    manifest["outputs"] = [str(out_dir / "records.jsonl"), str(out_dir / "summary.json")]
    manifest["dataset_signature"] = sig
    manifest["resolved"].update({"config": config.to_dict(), "accuracy": summary.accuracy})
    return 0


def cmd_cost_report(args, cfg, manifest) -> int:
    totals: dict = {}
    grand = {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0, "cost_usd": 0.0}
    for path in args.ledger:
        report = json.loads(Path(path).read_text(encoding="utf-8"))
        for model_id, row in report.get("models", {}).items():
            agg = totals.setdefault(
                model_id, {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0, "cost_usd": 0.0}
            )
            for key in agg:
                agg[key] += row[key]
        for key in grand:
            grand[key] += report.get("total", {}).get(key, 0)
    print(f"{'model':<32}{'calls':>8}{'prompt tok':>12}{'compl tok':>12}{'cost usd':>12}")
    for model_id in sorted(totals):
        row = totals[model_id]
        print(
            f"{model_id:<32}{row['calls']:>8}{row['prompt_tokens']:>12}"
            f"{row['completion_tokens']:>12}{row['cost_usd']:>12.4f}"
        )
    print(
        f"{'TOTAL':<32}{grand['calls']:>8}{grand['prompt_tokens']:>12}"
        f"{grand['completion_tokens']:>12}{grand['cost_usd']:>12.4f}"
    )
    if args.project_items and grand["calls"]:
        per_call = grand["cost_usd"] / grand["calls"]
        projected = per_call * int(args.project_items)
        print(
            f"projected cost for {args.project_items} calls at observed averages: "
            f"${projected:.2f}"
        )
        manifest["resolved"]["projected_cost_usd"] = projected
    manifest["resolved"]["total"] = grand
    return 0


# --- parser / dispatch ---------------------------------------------------------


def _add_model_args(sub, with_target=False):
    if with_target:
        sub.add_argument("--target", help="model id, mock-perfect/abstain/context, or with --transcript")
    else:
        sub.add_argument("--model", help="model id (recorded in outputs)")
    sub.add_argument("--provider", choices=["openai-compatible", "mock"])
    sub.add_argument("--transcript", help="scripted transcript JSON for the mock provider")
    sub.add_argument("--temperature", type=float)
    sub.add_argument("--top-p", dest="top_p", type=float)
    sub.add_argument("--max-tokens", dest="max_tokens", type=int)
    sub.add_argument("--base-url", dest="base_url")
    sub.add_argument("--price-table", dest="price_table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newsbench",
        description="news-to-QA benchmark pipeline, retrieval indices, and evaluation harness",
    )
    parser.add_argument("--config", help="YAML config file (lowest precedence)")
    parser.add_argument("--manifest", default="run_manifest.json", help="where to write the run manifest")
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("harvest", help="fetch feeds and persist a corpus day")
    p.add_argument("--registry")
    p.add_argument("--corpus-root", dest="corpus_root")
    p.add_argument("--window-end", dest="window_end", help="ISO timestamp; default now (UTC)")
    p.add_argument("--window-hours", dest="window_hours", type=int)
    p.add_argument("--fixtures", help="directory of saved feed XML (offline transport)")
    p.add_argument("--timeout", type=float)
    p.add_argument("--user-agent", dest="user_agent")
    p.add_argument("--max-parallel", dest="max_parallel", type=int)
    p.add_argument("--min-body-chars", dest="min_body_chars", type=int)
    p.set_defaults(handler=cmd_harvest)

    p = commands.add_parser("generate", help="generate candidate MCQ items from articles")
    p.add_argument("--from", dest="from_path", required=True, help="day file, ROOT/DATE, or .jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--generated-at", dest="generated_at", help="ISO timestamp recorded on items")
    p.add_argument("--max-articles-per-source", dest="max_articles_per_source", type=int)
    p.add_argument("--max-parallel", dest="max_parallel", type=int)
    _add_model_args(p)
    p.set_defaults(handler=cmd_generate)

    p = commands.add_parser("validate", help="run the validation agent over candidate items")
    p.add_argument("--items", required=True)
    p.add_argument("--from", dest="from_path", required=True)
    p.add_argument("--out-kept", dest="out_kept", required=True)
    p.add_argument("--out-verdicts", dest="out_verdicts", required=True)
    p.add_argument("--max-parallel", dest="max_parallel", type=int)
    _add_model_args(p)
    p.set_defaults(handler=cmd_validate)

    p = commands.add_parser("package", help="mint a signature and write the snapshot directory")
    p.add_argument("--items", required=True, help="kept items JSONL")
    p.add_argument("--from", dest="from_path", required=True)
    p.add_argument("--out-root", dest="out_root", required=True)
    p.add_argument("--seed", type=int, help="seed for the signature nonce (omit for live randomness)")
    p.add_argument("--generated-at", dest="generated_at")
    p.add_argument("--items-generated", dest="items_generated", type=int)
    p.add_argument("--max-articles-per-source", dest="max_articles_per_source", type=int,
                   help="recorded in the signature when the generate step used this cap")
    p.add_argument("--param", action="append", help="extra signature parameter key=value")
    _add_model_args(p)
    p.set_defaults(handler=cmd_package)

    p = commands.add_parser("index", help="build and persist a BM25 index over a corpus slice")
    p.add_argument("--corpus-root", dest="corpus_root", required=True)
    p.add_argument("--as-of", dest="as_of", required=True)
    p.add_argument("--window-days", dest="window_days", type=int, required=True)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_index)

    p = commands.add_parser("retrieve-eval", help="score a retriever against a snapshot's gold articles")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--corpus-root", dest="corpus_root")
    p.add_argument("--as-of", dest="as_of", help="default: snapshot generation time")
    p.add_argument("--window-days", dest="window_days", type=int, required=True)
    p.add_argument("--retriever", choices=["bm25", "dense-single", "dense-late"], required=True)
    p.add_argument("--k", default="1,3,5,10", help="comma-separated cutoffs")
    p.add_argument("--index", help="prebuilt BM25 index file (else built from the slice)")
    p.add_argument("--embed-url", dest="embed_url")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(handler=cmd_retrieve_eval)

    p = commands.add_parser("eval", help="evaluate a target model on a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--setting", choices=["no-context", "oracle", "retrieval"], required=True)
    p.add_argument("--format", choices=["mcq", "open-ended"], default="mcq")
    p.add_argument("--seed", type=int)
    p.add_argument("--retriever", choices=["bm25", "dense-single", "dense-late"])
    p.add_argument("--k", type=int)
    p.add_argument("--window-days", dest="window_days", type=int)
    p.add_argument("--corpus-root", dest="corpus_root")
    p.add_argument("--as-of", dest="as_of")
    p.add_argument("--embed-url", dest="embed_url")
    p.add_argument("--context-char-budget", dest="context_char_budget", type=int)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--max-parallel", dest="max_parallel", type=int)
    _add_model_args(p, with_target=True)
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("cost-report", help="merge ledgers and print per-model spend")
    p.add_argument("--ledger", nargs="+", required=True, help="ledger JSON files from prior runs")
    p.add_argument("--project-items", dest="project_items", type=int, help="project cost to N calls")
    p.set_defaults(handler=cmd_cost_report)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    manifest = {
        "command": args.command,
        "argv": list(argv),
        "started_at": datetime.now(timezone.utc).isoformat(),
        "resolved": {},
        "outputs": [],
        "dataset_signature": None,
        "exit_status": None,
        "wall_clock_s": None,
    }
    started = time.monotonic()
    try:
        cfg = _load_config_file(args.config)
        code = args.handler(args, cfg, manifest)
    except NewsbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.exit_code
    except Exception as exc:  # unexpected; still record the manifest
        logger.exception("unexpected failure")
        print(f"unexpected error: {exc}", file=sys.stderr)
        code = 1
    manifest["exit_status"] = code
    manifest["wall_clock_s"] = round(time.monotonic() - started, 3)
    try:
        atomic_write_text(args.manifest, json.dumps(manifest, indent=1, default=str) + "\n")
    except OSError as exc:
        print(f"warning: could not write manifest: {exc}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

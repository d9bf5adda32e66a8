"""Command-line interface.

Verbs mirror the pipeline stages (ingest, mask, keywords, define, embed,
salience, sentences, certainty, report) plus `run` for a full configured
pipeline. Provider credentials come from the environment only:
EMBED_API_KEY / EMBED_BASE_URL, CHAT_API_KEY / CHAT_BASE_URL,
CERTAINTY_API_KEY / CERTAINTY_BASE_URL. `--mock-providers` swaps in the
deterministic offline providers.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import certainty as certainty_mod
from . import criteria as criteria_mod
from . import features as features_mod
from . import mask as mask_mod
from .corpus import (
    Corpus,
    DocState,
    ingest_corpus,
    ingest_raw_dir,
    save_corpus,
    segment_sentences,
    strip_metadata,
)
from .embed import Embedder, EmbeddingCache, HttpEmbeddingProvider, MockEmbeddingProvider
from .errors import ConfigError, RigourkitError
from .pipeline import (
    PipelineConfig,
    emit_reports,
    read_sentence_labels,
    run_pipeline,
)
from .salience import class_separation, search_salient_sets


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cache-dir", type=Path, default=None)
    parser.add_argument("--mock-providers", action="store_true")
    parser.add_argument("--mock-dim", type=int, default=512)


def _cache_root(args) -> Path:
    return Path(args.cache_dir) if args.cache_dir else Path(".rigourkit-cache")


def _embedder(args) -> Embedder:
    cache = EmbeddingCache(_cache_root(args) / "embeddings.jsonl")
    if args.mock_providers:
        return Embedder(MockEmbeddingProvider(dim=args.mock_dim), cache)
    base_url = os.environ.get("EMBED_BASE_URL")
    if not base_url:
        raise ConfigError("EMBED_BASE_URL is required (or pass --mock-providers)")
    provider = HttpEmbeddingProvider(
        base_url=base_url,
        model=getattr(args, "model", "embed-default"),
        api_key=os.environ.get("EMBED_API_KEY"),
        instruction_aware=getattr(args, "instruction_aware", False),
    )
    return Embedder(provider, cache)


def _chat_provider(args):
    if args.mock_providers:
        return criteria_mod.MockChatProvider()
    base_url = os.environ.get("CHAT_BASE_URL")
    if not base_url:
        raise ConfigError("CHAT_BASE_URL is required (or pass --mock-providers)")
    return criteria_mod.HttpChatProvider(
        base_url=base_url,
        model=os.environ.get("CHAT_MODEL", "chat-default"),
        api_key=os.environ.get("CHAT_API_KEY"),
    )


def _load_registry(path: Path | None):
    return criteria_mod.load_registry(path) if path else criteria_mod.default_registry()


def cmd_ingest(args) -> int:
    if args.raw_dir:
        corpus = ingest_raw_dir(args.raw_dir)
    else:
        corpus = ingest_corpus(args.jsonl)
    documents = []
    for doc in corpus.documents:
        if doc.state is DocState.RAW:
            doc = strip_metadata(doc, () if args.assume_stripped else None)
        documents.append(doc)
    save_corpus(Corpus(documents), args.out)
    print(f"ingested {len(documents)} documents -> {args.out}")
    return 0


def cmd_mask(args) -> int:
    corpus = ingest_corpus(args.corpus)
    masked, audit = mask_mod.mask_corpus(corpus, _embedder(args), k=args.k, scope=args.scope)
    save_corpus(masked, args.out)
    if args.audit:
        with Path(args.audit).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["doc_id", "keyword", "score"])
            for doc_id in sorted(audit):
                for keyword in audit[doc_id]:
                    writer.writerow([doc_id, keyword.surface, repr(keyword.score)])
    print(f"masked {len(masked)} documents -> {args.out}")
    return 0


def cmd_keywords(args) -> int:
    corpus = ingest_corpus(args.corpus)
    if args.predictions:
        corpus = corpus.with_labels(features_mod.load_label_predictions(args.predictions))
    labels = corpus.labels()
    if any(label is None for label in labels):
        raise ConfigError("corpus is unlabeled; pass --predictions")
    matrix = features_mod.build_feature_matrix(corpus, binarize=True, min_df=args.min_df)
    mi = features_mod.mutual_information(matrix, labels)
    if args.full_vocab_lr:
        model = features_mod.fit_logistic_regression(matrix, labels, l2_lambda=args.l2)
        positive, negative = features_mod.rank_rigour_keywords(
            model, mi, percentile=args.percentile, top_k=args.top_k
        )
    else:
        selected = features_mod.select_percentile(mi, args.percentile)
        model = features_mod.fit_logistic_regression(matrix.restrict(selected), labels, l2_lambda=args.l2)
        positive, negative = features_mod.rank_rigour_keywords(
            model, mi[selected], percentile=100.0, top_k=args.top_k
        )
    if args.allowlist:
        allowed = {
            line.strip()
            for line in Path(args.allowlist).read_text(encoding="utf-8").splitlines()
            if line.strip()
        }
        positive = [k for k in positive if k.token in allowed]
        negative = [k for k in negative if k.token in allowed]
    with Path(args.out).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["token", "mi_score", "coefficient", "class"])
        for k in positive + negative:
            writer.writerow([k.token, repr(k.mi_score), repr(k.coefficient), k.label.value])
    print(f"wrote {len(positive)} positive / {len(negative)} negative keywords -> {args.out}")
    return 0


def cmd_define(args) -> int:
    keywords = list(args.keyword or [])
    if args.keywords_file:
        keywords.extend(
            line.strip()
            for line in Path(args.keywords_file).read_text(encoding="utf-8").splitlines()
            if line.strip()
        )
    if not keywords:
        raise ConfigError("no keywords given; use --keyword or --keywords-file")
    provider = _chat_provider(args)
    cache = criteria_mod.DefinitionCache(_cache_root(args) / "definitions.json")
    criteria = [criteria_mod.generate_definition(k, provider, cache) for k in keywords]
    if args.review:
        payload = [{"name": c.name, "definition": c.definition} for c in criteria]
        Path(args.proposals).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
        print(f"wrote {len(criteria)} definition proposals for review -> {args.proposals}")
        return 0
    registry = criteria_mod.CriteriaRegistry(criteria)
    criteria_mod.save_registry(registry, args.out_registry)
    print(f"wrote registry of {len(registry)} criteria -> {args.out_registry}")
    return 0


def cmd_embed(args) -> int:
    corpus = ingest_corpus(args.corpus)
    embedder = _embedder(args)
    for doc in corpus.documents:
        embedder.embed_document(doc.text)
    print(f"embedded {len(corpus)} documents into cache {_cache_root(args)}")
    return 0


def cmd_salience(args) -> int:
    corpus = ingest_corpus(args.corpus)
    if args.predictions:
        corpus = corpus.with_labels(features_mod.load_label_predictions(args.predictions))
    registry = _load_registry(args.registry)
    results = search_salient_sets(
        corpus,
        registry,
        _embedder(args),
        mode=args.mode,
        top_m=args.top,
        p_threshold=args.p_threshold,
    )
    with Path(args.out).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bitmask", "criteria_names", "mode", "tau", "p_value"])
        for r in results:
            writer.writerow(
                [r.criteria_set.bitmask, "|".join(r.names(registry)), r.mode, repr(r.tau), repr(r.p_value)]
            )
    if results and args.best_out:
        best = results[0]
        separation = class_separation(corpus.labels(), best.similarities)
        payload = {
            "bitmask": best.criteria_set.bitmask,
            "criteria": best.names(registry),
            "mode": best.mode,
            "tau": best.tau,
            "p_value": best.p_value,
            "similarities": [
                {"id": doc.id, "label": doc.label.value, "similarity": float(s)}
                for doc, s in zip(corpus.documents, best.similarities)
            ],
            "summary": {
                "mean_four_star": separation.mean_positive,
                "mean_non_four_star": separation.mean_negative,
                "gap": separation.gap,
                "standardized_gap": separation.standardized_gap,
            },
        }
        Path(args.best_out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
    top_names = "|".join(results[0].names(registry)) if results else "none"
    print(f"evaluated criteria sets; best: {top_names} -> {args.out}")
    return 0


def cmd_sentences(args) -> int:
    corpus = ingest_corpus(args.corpus)
    if args.predictions:
        corpus = corpus.with_labels(features_mod.load_label_predictions(args.predictions))
    registry = _load_registry(args.registry)
    doc_labels = {d.id: d.label for d in corpus.documents if d.label is not None}
    sentences = []
    for doc in corpus.documents:
        sentences.extend(segment_sentences(doc.text, doc_id=doc.id))
    labels = certainty_mod.label_sentences(
        sentences, registry, _embedder(args), threshold=args.threshold, doc_labels=doc_labels
    )
    with Path(args.out).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["doc_id", "index", "criterion", "similarity", "doc_label"])
        for l in labels:
            writer.writerow(
                [l.sentence.doc_id, l.sentence.index, l.criterion, repr(l.similarity), l.doc_label.value]
            )
    print(f"labeled {len(labels)} of {len(sentences)} sentences -> {args.out}")
    return 0


def cmd_certainty(args) -> int:
    corpus = ingest_corpus(args.corpus)
    labels = read_sentence_labels(args.labels, corpus)
    if args.criteria_intersection:
        criterion_sets = [[l.criterion for l in labels]]
        for other in args.criteria_intersection:
            with Path(other).open("r", encoding="utf-8", newline="") as handle:
                criterion_sets.append([row["criterion"] for row in csv.DictReader(handle)])
        shared = certainty_mod.intersect_criteria(*criterion_sets)
        labels = certainty_mod.filter_labels_to_criteria(labels, shared)
    predictions = certainty_mod.load_certainty_predictions(args.predictions)
    breakdown = certainty_mod.aggregate_certainty(labels, predictions)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for polarity in certainty_mod.POLARITIES:
        grid = breakdown.grid(polarity)
        with (out_dir / f"certainty_{polarity}.csv").open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["criterion"] + [a.capitalize() for a in certainty_mod.ASPECTS])
            for criterion in sorted(grid):
                writer.writerow(
                    [criterion]
                    + [
                        "NA" if grid[criterion].get(a) is None else repr(grid[criterion][a])
                        for a in certainty_mod.ASPECTS
                    ]
                )
    print(f"aggregated certainty for {len(breakdown.criteria())} criteria -> {out_dir}")
    return 0


def cmd_report(args) -> int:
    outputs = emit_reports(args.run_dir)
    for name in sorted(outputs):
        print(f"{name}: {outputs[name]}")
    return 0


def cmd_run(args) -> int:
    config = PipelineConfig.from_file(args.config)
    if args.mock_providers:
        config.mock_providers = True
    if args.cache_dir is not None:
        config.cache_dir = Path(args.cache_dir)
    manifest = run_pipeline(config, force=args.force)
    for record in manifest.stages:
        print(f"{record.name}: {record.status}")
    print(f"manifest -> {config.run_dir / 'manifest.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rigourkit", description="Rigour criteria mining and salience analysis."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read a JSONL corpus or raw text directory")
    p.add_argument("--jsonl", type=Path)
    p.add_argument("--raw-dir", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--assume-stripped", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("mask", help="mask per-document topic keywords")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--scope", choices=["document", "corpus"], default="document")
    p.add_argument("--audit", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("keywords", help="rank rigour keywords by MI and coefficient")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--percentile", type=float, default=10.0)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--min-df", type=int, default=5)
    p.add_argument("--l2", type=float, default=1e-2)
    p.add_argument("--full-vocab-lr", action="store_true")
    p.add_argument("--predictions", type=Path)
    p.add_argument("--allowlist", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_keywords)

    p = sub.add_parser("define", help="generate criterion definitions")
    p.add_argument("--keyword", action="append")
    p.add_argument("--keywords-file", type=Path)
    p.add_argument("--out-registry", type=Path, default=Path("registry.json"))
    p.add_argument("--review", action="store_true")
    p.add_argument("--proposals", type=Path, default=Path("definition_proposals.json"))
    _add_common(p)
    p.set_defaults(func=cmd_define)

    p = sub.add_parser("embed", help="warm the document embedding cache")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--model", default="embed-default")
    _add_common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("salience", help="search criteria subsets by rank correlation")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--registry", type=Path)
    p.add_argument("--mode", choices=["appended", "summed_individual"], default="appended")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--p-threshold", type=float, default=1e-4)
    p.add_argument("--out", type=Path, default=Path("salience.csv"))
    p.add_argument("--best-out", type=Path)
    p.add_argument("--predictions", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_salience)

    p = sub.add_parser("sentences", help="label sentences with their nearest criterion")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--registry", type=Path)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", type=Path, default=Path("sentence_labels.csv"))
    p.add_argument("--predictions", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_sentences)

    p = sub.add_parser("certainty", help="aggregate certainty-aspect differences")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("certainty_out"))
    p.add_argument("--criteria-intersection", nargs=2, type=Path, metavar=("RUN_A", "RUN_B"))
    _add_common(p)
    p.set_defaults(func=cmd_certainty)

    p = sub.add_parser("report", help="emit report files from a run directory")
    p.add_argument("--run-dir", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the configured pipeline")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RigourkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Pipeline orchestration: configuration, stage scheduling, run manifests
and report emission.

Stages run in dependency order (ingest, mask, keywords, define, embed,
salience, sentences, certainty, report), each reading and writing files
inside a run directory. With mock providers and a fixed seed the whole run
is byte-reproducible; the manifest records a digest for every artifact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import certainty as certainty_mod
from . import criteria as criteria_mod
from . import features as features_mod
from . import mask as mask_mod
from .corpus import (
    Corpus,
    DocState,
    RigourLabel,
    ingest_corpus,
    ingest_raw_dir,
    save_corpus,
    segment_sentences,
    strip_metadata,
)
from .embed import Embedder, EmbeddingCache, HttpEmbeddingProvider, MockEmbeddingProvider
from .errors import ConfigError, MissingStageOutput, StageError
from .salience import class_separation, search_salient_sets

STAGE_ORDER = (
    "ingest",
    "mask",
    "keywords",
    "define",
    "embed",
    "salience",
    "sentences",
    "certainty",
    "report",
)

REPORT_FILES = (
    "keywords_chart.csv",
    "best_set_report.json",
    "criteria_membership.csv",
    "certainty_certain.csv",
    "certainty_uncertain.csv",
    "distribution_summary.json",
)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class PipelineConfig:
    run_dir: Path
    corpus_path: Path | None = None
    raw_dir: Path | None = None
    stages: tuple[str, ...] = STAGE_ORDER
    seed: int = 0
    mock_providers: bool = False
    cache_dir: Path | None = None
    assume_stripped: bool = False
    strip_patterns: tuple[str, ...] | None = None

    mask_k: int = 10
    mask_scope: str = "document"
    mask_enabled: bool = True

    min_df: int = 5
    percentile: float = 10.0
    top_k: int = 100
    l2_lambda: float = 1e-2
    max_iters: int = 2000
    tol: float = 1e-6
    full_vocab_lr: bool = False
    predictions_path: Path | None = None
    allowlist_path: Path | None = None

    registry_path: Path | None = None
    generate_definitions: bool = False
    generate_top_n: int = 16

    embed_model: str = "mock"
    embed_dim: int = 512
    embed_instruction_aware: bool = False
    embed_use_masked: bool = False

    salience_mode: str = "appended"
    salience_top_m: int = 20
    salience_p_threshold: float | None = 1e-4

    certainty_threshold: float = 0.5
    certainty_predictions_path: Path | None = None
    intersection_label_files: tuple[Path, ...] = ()

    def __post_init__(self):
        self.run_dir = Path(self.run_dir)
        unknown = [s for s in self.stages if s not in STAGE_ORDER]
        if unknown:
            raise ConfigError(f"unknown stages {unknown}")
        if self.corpus_path is None and self.raw_dir is None:
            raise ConfigError("config needs corpus_path or raw_dir")
        if self.mask_scope not in ("document", "corpus"):
            raise ConfigError(f"unknown mask scope {self.mask_scope!r}")
        if not 0 < self.percentile <= 100:
            raise ConfigError("percentile must be in (0, 100]")
        if not 0 < self.certainty_threshold <= 1:
            raise ConfigError("certainty threshold must be in (0, 1]")
        if self.cache_dir is None:
            self.cache_dir = self.run_dir / "cache"
        self.cache_dir = Path(self.cache_dir)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "PipelineConfig":
        def path_or_none(value):
            if value is None:
                return None
            p = Path(value)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            return p

        known_sections = {"run_dir", "corpus", "stages", "seed", "providers", "mask",
                          "features", "criteria", "embed", "salience", "certainty"}
        unknown = set(raw) - known_sections
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        corpus = raw.get("corpus", {})
        providers = raw.get("providers", {})
        mask_cfg = raw.get("mask", {})
        feat = raw.get("features", {})
        crit = raw.get("criteria", {})
        emb = raw.get("embed", {})
        sal = raw.get("salience", {})
        cert = raw.get("certainty", {})
        if "run_dir" not in raw:
            raise ConfigError("config needs run_dir")
        try:
            return cls(
                run_dir=path_or_none(raw["run_dir"]),
                corpus_path=path_or_none(corpus.get("path")),
                raw_dir=path_or_none(corpus.get("raw_dir")),
                assume_stripped=bool(corpus.get("assume_stripped", False)),
                strip_patterns=tuple(corpus["strip_patterns"]) if "strip_patterns" in corpus else None,
                stages=tuple(raw.get("stages", STAGE_ORDER)),
                seed=int(raw.get("seed", 0)),
                mock_providers=bool(providers.get("mock", False)),
                cache_dir=path_or_none(providers.get("cache_dir")),
                mask_k=int(mask_cfg.get("k", 10)),
                mask_scope=mask_cfg.get("scope", "document"),
                mask_enabled=bool(mask_cfg.get("enabled", True)),
                min_df=int(feat.get("min_df", 5)),
                percentile=float(feat.get("percentile", 10.0)),
                top_k=int(feat.get("top_k", 100)),
                l2_lambda=float(feat.get("l2_lambda", 1e-2)),
                max_iters=int(feat.get("max_iters", 2000)),
                tol=float(feat.get("tol", 1e-6)),
                full_vocab_lr=bool(feat.get("full_vocab_lr", False)),
                predictions_path=path_or_none(feat.get("predictions_path")),
                allowlist_path=path_or_none(feat.get("allowlist_path")),
                registry_path=path_or_none(crit.get("registry_path")),
                generate_definitions=bool(crit.get("generate", False)),
                generate_top_n=int(crit.get("generate_top_n", 16)),
                embed_model=emb.get("model", "mock"),
                embed_dim=int(emb.get("dim", 512)),
                embed_instruction_aware=bool(emb.get("instruction_aware", False)),
                embed_use_masked=bool(emb.get("use_masked", False)),
                salience_mode=sal.get("mode", "appended"),
                salience_top_m=int(sal.get("top_m", 20)),
                salience_p_threshold=(
                    None if sal.get("p_threshold", 1e-4) is None else float(sal.get("p_threshold", 1e-4))
                ),
                certainty_threshold=float(cert.get("threshold", 0.5)),
                certainty_predictions_path=path_or_none(cert.get("predictions_path")),
                intersection_label_files=tuple(
                    path_or_none(p) for p in cert.get("intersection_label_files", [])
                ),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            try:
                import tomllib  # type: ignore[import-not-found]
            except ModuleNotFoundError:
                import tomli as tomllib  # type: ignore[no-redef]
            raw = tomllib.loads(text)
        else:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    def snapshot(self) -> dict:
        data = asdict(self)
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(data.items())}


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

def _require_env(name: str) -> str:
    value = os.environ.get(name)
    if not value:
        raise ConfigError(f"environment variable {name} is required for live providers")
    return value


def build_embedder(config: PipelineConfig) -> Embedder:
    cache = EmbeddingCache(config.cache_dir / "embeddings.jsonl")
    if config.mock_providers:
        provider = MockEmbeddingProvider(dim=config.embed_dim)
    else:
        provider = HttpEmbeddingProvider(
            base_url=_require_env("EMBED_BASE_URL"),
            model=config.embed_model,
            api_key=os.environ.get("EMBED_API_KEY"),
            instruction_aware=config.embed_instruction_aware,
        )
    return Embedder(provider, cache)


def build_chat_provider(config: PipelineConfig):
    if config.mock_providers:
        return criteria_mod.MockChatProvider()
    return criteria_mod.HttpChatProvider(
        base_url=_require_env("CHAT_BASE_URL"),
        model=os.environ.get("CHAT_MODEL", "chat-default"),
        api_key=os.environ.get("CHAT_API_KEY"),
    )


def build_certainty_provider(config: PipelineConfig):
    if config.mock_providers:
        return certainty_mod.MockCertaintyProvider()
    return certainty_mod.HttpCertaintyProvider(
        base_url=_require_env("CERTAINTY_BASE_URL"),
        api_key=os.environ.get("CERTAINTY_API_KEY"),
    )


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class StageRecord:
    name: str
    status: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    started: float = 0.0
    finished: float = 0.0


@dataclass
class RunManifest:
    config: dict
    providers: dict
    stages: list[StageRecord] = field(default_factory=list)

    def stage(self, name: str) -> StageRecord:
        for record in self.stages:
            if record.name == name:
                return record
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "providers": self.providers,
            "stages": [asdict(s) for s in self.stages],
        }

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Stage helpers
# ---------------------------------------------------------------------------

def _load_corpus_with_labels(config: PipelineConfig, path: Path) -> Corpus:
    corpus = ingest_corpus(path)
    if config.predictions_path is not None:
        corpus = corpus.with_labels(features_mod.load_label_predictions(config.predictions_path))
    return corpus


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _float(x: float) -> float:
    return float(x)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_ingest(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    if config.raw_dir is not None:
        corpus = ingest_raw_dir(config.raw_dir)
    else:
        corpus = ingest_corpus(config.corpus_path)
    patterns = () if config.assume_stripped else config.strip_patterns
    documents = []
    for doc in corpus.documents:
        if doc.state is DocState.RAW:
            doc = strip_metadata(doc, patterns)
        documents.append(doc)
    out = config.run_dir / "corpus.jsonl"
    save_corpus(Corpus(documents), out)
    return {"corpus": out}


def stage_mask(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    corpus = ingest_corpus(config.run_dir / "corpus.jsonl")
    audit_rows: list[list] = []
    if config.mask_enabled:
        masked, audit = mask_mod.mask_corpus(
            corpus, ctx["embedder"], k=config.mask_k, scope=config.mask_scope
        )
        for doc_id in sorted(audit):
            for keyword in audit[doc_id]:
                audit_rows.append([doc_id, keyword.surface, repr(keyword.score)])
    else:
        masked = corpus
    out = config.run_dir / "masked.jsonl"
    save_corpus(masked, out)
    audit_path = config.run_dir / "keyword_audit.csv"
    _write_csv(audit_path, ["doc_id", "keyword", "score"], audit_rows)
    return {"masked": out, "audit": audit_path}


def stage_keywords(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    corpus = _load_corpus_with_labels(config, config.run_dir / "masked.jsonl")
    labels = corpus.labels()
    if any(label is None for label in labels):
        raise ConfigError("keywords stage needs labels: label the corpus or set features.predictions_path")
    matrix = features_mod.build_feature_matrix(corpus, binarize=True, min_df=config.min_df)
    mi = features_mod.mutual_information(matrix, labels)
    fit = lambda m: features_mod.fit_logistic_regression(
        m, labels, l2_lambda=config.l2_lambda, max_iters=config.max_iters, tol=config.tol
    )
    if config.full_vocab_lr:
        model = fit(matrix)
        positive, negative = features_mod.rank_rigour_keywords(
            model, mi, percentile=config.percentile, top_k=config.top_k
        )
    else:
        selected = features_mod.select_percentile(mi, config.percentile)
        model = fit(matrix.restrict(selected))
        positive, negative = features_mod.rank_rigour_keywords(
            model, mi[selected], percentile=100.0, top_k=config.top_k
        )
    if config.allowlist_path is not None:
        allowed = {
            line.strip()
            for line in Path(config.allowlist_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        }
        positive = [k for k in positive if k.token in allowed]
        negative = [k for k in negative if k.token in allowed]

    rows = [
        [k.token, repr(k.mi_score), repr(k.coefficient), k.label.value]
        for k in positive + negative
    ]
    out = config.run_dir / "keywords.csv"
    _write_csv(out, ["token", "mi_score", "coefficient", "class"], rows)
    meta = config.run_dir / "classifier_meta.json"
    _write_json(
        meta,
        {
            "n_features": len(model.vocabulary),
            "iterations": model.iterations,
            "final_loss": model.final_loss,
            "l2_lambda": model.l2_lambda,
        },
    )
    return {"keywords": out, "classifier_meta": meta}


def stage_define(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    out = config.run_dir / "registry.json"
    if config.generate_definitions:
        keywords: list[str] = []
        with (config.run_dir / "keywords.csv").open("r", encoding="utf-8", newline="") as handle:
            for row in csv.DictReader(handle):
                if row["class"] == RigourLabel.FOUR_STAR.value:
                    keywords.append(row["token"])
                if len(keywords) >= config.generate_top_n:
                    break
        cache = criteria_mod.DefinitionCache(config.cache_dir / "definitions.json")
        registry = criteria_mod.generate_definitions(keywords, ctx["chat_provider"], cache)
    elif config.registry_path is not None:
        registry = criteria_mod.load_registry(config.registry_path)
    else:
        registry = criteria_mod.default_registry()
    criteria_mod.save_registry(registry, out)
    return {"registry": out}


def _salience_corpus_path(config: PipelineConfig) -> Path:
    return config.run_dir / ("masked.jsonl" if config.embed_use_masked else "corpus.jsonl")


def stage_embed(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    corpus = ingest_corpus(_salience_corpus_path(config))
    embedder: Embedder = ctx["embedder"]
    from .embed import MODE_DOCUMENT, cache_key

    index = {}
    for doc in corpus.documents:
        embedder.embed_document(doc.text)
        index[doc.id] = cache_key(embedder.provider_id, MODE_DOCUMENT, None, doc.text)
    out = config.run_dir / "embed_index.json"
    _write_json(out, index)
    return {"embed_index": out}


def stage_salience(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    corpus = _load_corpus_with_labels(config, _salience_corpus_path(config))
    registry = criteria_mod.load_registry(config.run_dir / "registry.json")
    results = search_salient_sets(
        corpus,
        registry,
        ctx["embedder"],
        mode=config.salience_mode,
        top_m=config.salience_top_m,
        p_threshold=config.salience_p_threshold,
    )
    if not results:
        raise ConfigError("no criteria set passed the significance threshold")
    rows = [
        [r.criteria_set.bitmask, "|".join(r.names(registry)), r.mode, repr(r.tau), repr(r.p_value)]
        for r in results
    ]
    out_csv = config.run_dir / "salience.csv"
    _write_csv(out_csv, ["bitmask", "criteria_names", "mode", "tau", "p_value"], rows)

    best = results[0]
    separation = class_separation(corpus.labels(), best.similarities)
    best_payload = {
        "bitmask": best.criteria_set.bitmask,
        "criteria": best.names(registry),
        "mode": best.mode,
        "tau": _float(best.tau),
        "p_value": _float(best.p_value),
        "similarities": [
            {"id": doc.id, "label": doc.label.value, "similarity": _float(s)}
            for doc, s in zip(corpus.documents, best.similarities)
        ],
        "summary": {
            "mean_four_star": separation.mean_positive,
            "mean_non_four_star": separation.mean_negative,
            "gap": separation.gap,
            "standardized_gap": separation.standardized_gap,
        },
    }
    out_json = config.run_dir / "best_set.json"
    _write_json(out_json, best_payload)
    return {"salience": out_csv, "best_set": out_json}


def stage_sentences(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    corpus = _load_corpus_with_labels(config, config.run_dir / "corpus.jsonl")
    registry = criteria_mod.load_registry(config.run_dir / "registry.json")
    doc_labels = {d.id: d.label for d in corpus.documents if d.label is not None}
    sentences = []
    for doc in corpus.documents:
        sentences.extend(segment_sentences(doc.text, doc_id=doc.id))
    labels = certainty_mod.label_sentences(
        sentences, registry, ctx["embedder"], threshold=config.certainty_threshold,
        doc_labels=doc_labels,
    )
    rows = [
        [l.sentence.doc_id, l.sentence.index, l.criterion, repr(l.similarity), l.doc_label.value]
        for l in labels
    ]
    out = config.run_dir / "sentence_labels.csv"
    _write_csv(out, ["doc_id", "index", "criterion", "similarity", "doc_label"], rows)
    return {"sentence_labels": out}


def read_sentence_labels(path: Path, corpus: Corpus) -> list[certainty_mod.SentenceLabel]:
    by_doc: dict[str, list] = {}
    labels = []
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            doc_id = row["doc_id"]
            if doc_id not in by_doc:
                by_doc[doc_id] = segment_sentences(corpus.by_id(doc_id).text, doc_id=doc_id)
            sentence = by_doc[doc_id][int(row["index"])]
            labels.append(
                certainty_mod.SentenceLabel(
                    sentence=sentence,
                    criterion=row["criterion"],
                    similarity=float(row["similarity"]),
                    doc_label=RigourLabel.parse(row["doc_label"]),
                )
            )
    return labels


def stage_certainty(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    corpus = _load_corpus_with_labels(config, config.run_dir / "corpus.jsonl")
    labels = read_sentence_labels(config.run_dir / "sentence_labels.csv", corpus)

    if config.intersection_label_files:
        criterion_sets = [[l.criterion for l in labels]]
        for other in config.intersection_label_files:
            with Path(other).open("r", encoding="utf-8", newline="") as handle:
                criterion_sets.append([row["criterion"] for row in csv.DictReader(handle)])
        shared = certainty_mod.intersect_criteria(*criterion_sets)
        labels = certainty_mod.filter_labels_to_criteria(labels, shared)

    if config.certainty_predictions_path is not None:
        predictions = certainty_mod.load_certainty_predictions(config.certainty_predictions_path)
    else:
        provider = ctx["certainty_provider"]
        predictions = provider.predict([l.sentence for l in labels])
    predictions_out = config.run_dir / "certainty_predictions.jsonl"
    certainty_mod.save_certainty_predictions(predictions, predictions_out)

    breakdown = certainty_mod.aggregate_certainty(labels, predictions)
    payload = {
        "sentence_counts": dict(sorted(breakdown.sentence_counts.items())),
        "cells": [
            {
                "criterion": c.criterion,
                "aspect": c.aspect,
                "polarity": c.polarity,
                "diff": None if c.diff is None else _float(c.diff),
                "n_four_star": c.n_four_star,
                "n_non_four_star": c.n_non_four_star,
                "missing_class": c.missing_class,
            }
            for c in breakdown.cells
        ],
    }
    out = config.run_dir / "certainty_breakdown.json"
    _write_json(out, payload)
    return {"certainty_breakdown": out, "certainty_predictions": predictions_out}


def stage_report(config: PipelineConfig, ctx: dict) -> dict[str, Path]:
    return emit_reports(config.run_dir)


def emit_reports(run_dir: str | Path) -> dict[str, Path]:
    """Serialize the plot-ready report files from earlier stage outputs."""
    run_dir = Path(run_dir)
    report_dir = run_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {}

    keywords_path = run_dir / "keywords.csv"
    if not keywords_path.exists():
        raise MissingStageOutput("keywords", keywords_path)
    with keywords_path.open("r", encoding="utf-8", newline="") as handle:
        keyword_rows = list(csv.DictReader(handle))
    chart_rows = [
        [row["token"], row["mi_score"], row["coefficient"], row["class"]]
        for row in keyword_rows
    ]
    chart = report_dir / "keywords_chart.csv"
    _write_csv(chart, ["token", "mi_score", "coefficient", "class"], chart_rows)
    outputs["keywords_chart"] = chart

    best_path = run_dir / "best_set.json"
    if not best_path.exists():
        raise MissingStageOutput("salience", best_path)
    best = json.loads(best_path.read_text(encoding="utf-8"))
    report_best = report_dir / "best_set_report.json"
    _write_json(report_best, best)
    outputs["best_set_report"] = report_best

    sims = [entry["similarity"] for entry in best["similarities"]]
    labels = [RigourLabel.parse(entry["label"]) for entry in best["similarities"]]
    separation = class_separation(labels, sims)
    summary = report_dir / "distribution_summary.json"
    _write_json(
        summary,
        {
            "criteria": best["criteria"],
            "mode": best["mode"],
            "tau": best["tau"],
            "p_value": best["p_value"],
            "mean_four_star": separation.mean_positive,
            "mean_non_four_star": separation.mean_negative,
            "gap": separation.gap,
            "standardized_gap": separation.standardized_gap,
        },
    )
    outputs["distribution_summary"] = summary

    salience_path = run_dir / "salience.csv"
    if not salience_path.exists():
        raise MissingStageOutput("salience", salience_path)
    registry = criteria_mod.load_registry(run_dir / "registry.json")
    with salience_path.open("r", encoding="utf-8", newline="") as handle:
        salience_rows = list(csv.DictReader(handle))
    header = ["criterion"] + [f"set_{i + 1}" for i in range(len(salience_rows))]
    matrix_rows = []
    member_lists = [set(row["criteria_names"].split("|")) for row in salience_rows]
    for criterion in registry.names():
        cells = ["✓" if criterion in members else "–" for members in member_lists]
        matrix_rows.append([criterion] + cells)
    membership = report_dir / "criteria_membership.csv"
    _write_csv(membership, header, matrix_rows)
    outputs["criteria_membership"] = membership

    breakdown_path = run_dir / "certainty_breakdown.json"
    if not breakdown_path.exists():
        raise MissingStageOutput("certainty", breakdown_path)
    breakdown = json.loads(breakdown_path.read_text(encoding="utf-8"))
    for polarity in certainty_mod.POLARITIES:
        rows = {}
        for cell in breakdown["cells"]:
            if cell["polarity"] != polarity:
                continue
            rows.setdefault(cell["criterion"], {})[cell["aspect"]] = cell["diff"]
        table = []
        for criterion in sorted(rows):
            table.append(
                [criterion]
                + [
                    "NA" if rows[criterion].get(a) is None else repr(rows[criterion][a])
                    for a in certainty_mod.ASPECTS
                ]
            )
        grid = report_dir / f"certainty_{polarity}.csv"
        _write_csv(grid, ["criterion"] + [a.capitalize() for a in certainty_mod.ASPECTS], table)
        outputs[f"certainty_{polarity}"] = grid

    return outputs


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "mask": stage_mask,
    "keywords": stage_keywords,
    "define": stage_define,
    "embed": stage_embed,
    "salience": stage_salience,
    "sentences": stage_sentences,
    "certainty": stage_certainty,
    "report": stage_report,
}


def stage_dependencies(config: PipelineConfig) -> dict[str, tuple[str, ...]]:
    return {
        "ingest": (),
        "mask": ("ingest",),
        "keywords": ("mask",),
        "define": ("keywords",) if config.generate_definitions else (),
        "embed": ("mask",) if config.embed_use_masked else ("ingest",),
        "salience": ("embed", "define"),
        "sentences": ("ingest", "define"),
        "certainty": ("sentences",),
        "report": ("keywords", "salience", "certainty"),
    }


def plan_stages(config: PipelineConfig) -> list[str]:
    """Requested stages plus their transitive dependencies, in run order."""
    deps = stage_dependencies(config)
    wanted: set[str] = set()

    def visit(stage: str) -> None:
        if stage in wanted:
            return
        for dep in deps[stage]:
            visit(dep)
        wanted.add(stage)

    for stage in config.stages:
        visit(stage)
    return [s for s in STAGE_ORDER if s in wanted]


_STAGE_OUTPUT_FILES = {
    "ingest": ("corpus.jsonl",),
    "mask": ("masked.jsonl", "keyword_audit.csv"),
    "keywords": ("keywords.csv", "classifier_meta.json"),
    "define": ("registry.json",),
    "embed": ("embed_index.json",),
    "salience": ("salience.csv", "best_set.json"),
    "sentences": ("sentence_labels.csv",),
    "certainty": ("certainty_breakdown.json", "certainty_predictions.jsonl"),
    "report": tuple(f"report/{name}" for name in REPORT_FILES),
}


def run_pipeline(config: PipelineConfig, force: bool = False) -> RunManifest:
    """Execute the configured stages; completed stages are skipped on rerun."""
    config.run_dir.mkdir(parents=True, exist_ok=True)
    ctx = {
        "embedder": build_embedder(config),
        "chat_provider": build_chat_provider(config) if config.generate_definitions else None,
        "certainty_provider": (
            build_certainty_provider(config)
            if config.certainty_predictions_path is None
            else None
        ),
    }
    providers = {"embedding": ctx["embedder"].provider_id}
    if ctx["chat_provider"] is not None:
        providers["chat"] = ctx["chat_provider"].model_id
    if ctx["certainty_provider"] is not None:
        providers["certainty"] = ctx["certainty_provider"].provider_id

    manifest = RunManifest(config=config.snapshot(), providers=providers)
    input_digests: dict[str, str] = {}
    for path in (config.corpus_path, config.registry_path):
        if path is not None and Path(path).exists():
            input_digests[str(path)] = file_digest(path)

    for stage in plan_stages(config):
        record = StageRecord(name=stage, status="ran", inputs=dict(input_digests))
        record.started = time.time()
        expected = [config.run_dir / rel for rel in _STAGE_OUTPUT_FILES[stage]]
        if not force and expected and all(p.exists() for p in expected):
            record.status = "cached"
        else:
            try:
                STAGE_FUNCS[stage](config, ctx)
            except Exception as exc:
                record.status = "failed"
                record.finished = time.time()
                manifest.stages.append(record)
                manifest.save(config.run_dir / "manifest.json")
                raise StageError(stage, exc) from exc
        record.finished = time.time()
        record.outputs = {
            str(p.relative_to(config.run_dir)): file_digest(p) for p in expected if p.exists()
        }
        manifest.stages.append(record)
        manifest.save(config.run_dir / "manifest.json")
    return manifest

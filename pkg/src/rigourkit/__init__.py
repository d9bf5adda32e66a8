"""Rigour criteria mining and salience analysis for scientific writing."""

from .corpus import (
    Corpus,
    DocState,
    Document,
    RigourLabel,
    Sentence,
    extract_sections,
    ingest_corpus,
    ingest_raw_dir,
    save_corpus,
    segment_sentences,
    split_corpus,
    strip_metadata,
)
from .criteria import (
    Criterion,
    CriteriaRegistry,
    default_registry,
    generate_definition,
    load_registry,
    save_registry,
)
from .embed import (
    Embedder,
    EmbeddingCache,
    EmbeddingVector,
    MockEmbeddingProvider,
    cosine_similarity,
    embed_document,
    embed_query,
)
from .features import (
    ClassifierModel,
    FeatureMatrix,
    KeywordFeature,
    build_feature_matrix,
    evaluate_classifier,
    fit_logistic_regression,
    mutual_information,
    rank_rigour_keywords,
    select_percentile,
)
from .mask import TopicKeyword, extract_topic_keywords, mask_corpus, mask_document
from .salience import (
    CriteriaSet,
    KendallResult,
    SalienceResult,
    build_query,
    class_separation,
    enumerate_criteria_sets,
    kendall_tau,
    score_documents,
    search_salient_sets,
)
from .certainty import (
    CertaintyBreakdown,
    CertaintyPrediction,
    SentenceLabel,
    aggregate_certainty,
    label_sentences,
)

__version__ = "0.1.0"

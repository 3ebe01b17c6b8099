"""Title-thumbnail congruity scoring and mismatch detection for news corpora."""

from .datagen import CONGRUENT, INCONGRUENT, GenerationConfig, PairSample
from .ingest import ArticleRecord, CorpusFilter, load_corpus, save_corpus
from .scoring import ScoredPair, clip_score, cosine_similarity, score_corpus
from .store import EmbeddingClient, EmbeddingStore, read_store, write_store

__version__ = "0.1.0"

__all__ = [
    "ArticleRecord",
    "CorpusFilter",
    "CONGRUENT",
    "INCONGRUENT",
    "EmbeddingClient",
    "EmbeddingStore",
    "GenerationConfig",
    "PairSample",
    "ScoredPair",
    "clip_score",
    "cosine_similarity",
    "load_corpus",
    "read_store",
    "save_corpus",
    "score_corpus",
    "write_store",
    "__version__",
]

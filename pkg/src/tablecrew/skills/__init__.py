from .bank import SkillBank, append_skill
from .embedding import EmbeddingProvider, HashedNgramEmbedding
from .fusion import rrf_fuse
from .lexical import CorpusStats, bm25_score, tokenize
from .model import Skill, parse_skill_document, render_skill_document
from .resolver import (
    ResolveConfig,
    SkillCreator,
    create_skill,
    evolve_skill,
    repair_skill,
    resolve_skill,
)

__all__ = [
    "SkillBank",
    "append_skill",
    "EmbeddingProvider",
    "HashedNgramEmbedding",
    "rrf_fuse",
    "CorpusStats",
    "bm25_score",
    "tokenize",
    "Skill",
    "parse_skill_document",
    "render_skill_document",
    "ResolveConfig",
    "SkillCreator",
    "create_skill",
    "evolve_skill",
    "repair_skill",
    "resolve_skill",
]

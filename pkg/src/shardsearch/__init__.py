"""Keyword-based code-context retrieval for code completion.

Revisions of a repository are indexed into immutable trigram shards, query
terms are mined from the diff around a completion point, a fixed ladder of
query formulations is tried against a search service until one returns
results, and the hits are packed into a token-budgeted context bundle.
"""

from .errors import (
    AdapterFailure,
    ClientUnreachable,
    CorruptShard,
    DuplicatePath,
    EmptyIdentity,
    MissingFile,
    ParseError,
    ShardSearchError,
    UnsupportedLanguage,
    VersionMismatch,
)
from .symbols import Language, SymbolEntry, SymbolKind, extract_symbols
from .trigrams import extract_trigrams
from .query import CompiledQuery, parse_query, plan_trigrams, render_query
from .shard import (
    FileRecord,
    SearchResult,
    Shard,
    ShardMeta,
    build_shard,
    score_match,
    search_shard,
)
from .storage import read_shard, write_shard

__version__ = "0.1.0"

__all__ = [
    "AdapterFailure",
    "ClientUnreachable",
    "CompiledQuery",
    "CorruptShard",
    "DuplicatePath",
    "EmptyIdentity",
    "FileRecord",
    "Language",
    "MissingFile",
    "ParseError",
    "SearchResult",
    "Shard",
    "ShardMeta",
    "ShardSearchError",
    "SymbolEntry",
    "SymbolKind",
    "UnsupportedLanguage",
    "VersionMismatch",
    "build_shard",
    "extract_symbols",
    "extract_trigrams",
    "parse_query",
    "plan_trigrams",
    "read_shard",
    "render_query",
    "score_match",
    "search_shard",
    "write_shard",
]

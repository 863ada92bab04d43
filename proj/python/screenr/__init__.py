"""Chain-of-thought title/abstract screening for scoping reviews."""

from ._core import (
    AggregateScore,
    Backend,
    ConfusionMatrix,
    Conversation,
    Message,
    Method,
    Rates,
    ReviewScore,
    Role,
    ScreeningResult,
    ScreenrError,
    ScriptedBackend,
    Source,
    Verdict,
    aggregate,
    build_review_description,
    cohen_kappa,
    confusion,
    content_hash,
    ingest_sources,
    parse_transcript,
    parse_verdict,
    render_transcript,
    report,
    run_cli,
    sample_sources,
    screen_source,
    screen_sources,
    stats,
    try_parse_verdict,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

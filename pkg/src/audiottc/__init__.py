"""audiottc: test-time-compute harness for auditory-cognition evaluation."""

__version__ = "0.1.0"

from .trials import (  # noqa: F401
    CanonicalAnswer,
    MatchRule,
    PromptBundle,
    SuffixPolicy,
    TaskKind,
    Trial,
    apply_cot,
    build_base_prompt,
    canonicalize_answer,
    score_answer,
)

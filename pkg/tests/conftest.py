import pytest

from audiottc.synth import load_corpus, make_demo_corpus
from audiottc.trials import TaskKind, Trial

CORPUS_RATE = 8000  # low rate keeps bulk synthesis tests fast


@pytest.fixture(scope="session")
def demo_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = make_demo_corpus(root, seed=11, sample_rate=CORPUS_RATE, digit_ms=160.0)
    return load_corpus(manifest, session_rate=CORPUS_RATE)


@pytest.fixture(scope="session")
def demo_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus_manifest")
    return make_demo_corpus(root, seed=11, sample_rate=CORPUS_RATE, digit_ms=160.0)


def make_trial(
    trial_id="t1",
    task_kind=TaskKind.TASK3_OVERLAP,
    pre="Focus on FEMALE.",
    question="Which digit has NOT been mentioned by female?",
    options=("4", "6", "8", "9"),
    ground_truth=3,
    metadata=None,
):
    return Trial(
        id=trial_id,
        task_kind=task_kind,
        pre_instruction=pre,
        question=question,
        options=list(options),
        ground_truth=ground_truth,
        metadata=metadata or {},
    )

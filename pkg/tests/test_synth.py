"""Corpus loading, question generation, and trial synthesis."""

import json
import math

import numpy as np
import pytest

from audiottc.synth import (
    Corpus,
    QuestionKind,
    QuestionTemplate,
    SynthError,
    SynthParams,
    TrialContent,
    generate_question,
    load_corpus,
    rebuild_layers,
    synthesize_trial,
)
from audiottc.trials import TaskKind
from conftest import CORPUS_RATE
from gt_checker import check_trial

PARAMS = SynthParams(sequence_length=6, gap_ms=120.0, snr_db=5.0, session_rate=CORPUS_RATE)


# -- corpus -------------------------------------------------------------------


def test_demo_corpus_loads(demo_corpus):
    assert len(demo_corpus.digit_clips(0, "male")) == 1
    assert len(demo_corpus.event_labels()) == 6
    assert demo_corpus.noise_clips()
    demo_corpus.check_digit_coverage()


def test_missing_file_names_path(tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"clips": [{"path": "ghost.wav", "kind": "noise"}]}))
    with pytest.raises(SynthError, match="ghost.wav"):
        load_corpus(manifest)


def test_incomplete_digit_coverage_lists_pairs(demo_corpus):
    partial = Corpus(
        clips=[c for c in demo_corpus.clips if not (c.gender == "female" and c.digit == 9)],
        session_rate=demo_corpus.session_rate,
    )
    with pytest.raises(SynthError, match="female/9"):
        partial.check_digit_coverage()


def test_csv_manifest(tmp_path, demo_manifest):
    corpus_dir = demo_manifest.parent
    rows = json.loads(demo_manifest.read_text())["clips"]
    lines = ["path,kind,event,category,digit,gender,noise"]
    for r in rows:
        lines.append(
            ",".join(
                str(r.get(k, "")) if r.get(k) is not None else ""
                for k in ("path", "kind", "event", "category", "digit", "gender", "noise")
            )
        )
    csv_path = corpus_dir / "manifest.csv"
    csv_path.write_text("\n".join(lines))
    corpus = load_corpus(csv_path, session_rate=CORPUS_RATE)
    assert len(corpus.clips) == len(rows)
    corpus.check_digit_coverage()


# -- question generation ------------------------------------------------------


def test_not_mentioned_matches_paper_shape():
    content = TrialContent(female_digits=[4, 6, 8, 4, 6, 8], male_digits=[1, 2, 3, 4, 5, 6])
    rng = np.random.default_rng(0)
    q = generate_question(QuestionTemplate(QuestionKind.NOT_MENTIONED, "female"), content, rng)
    assert q.question == "Which digit has NOT been mentioned by female?"
    assert len(q.options) == 4
    correct = q.options[q.ground_truth]
    assert int(correct) not in {4, 6, 8}
    assert all(int(o) in {4, 6, 8} for i, o in enumerate(q.options) if i != q.ground_truth)


def test_sum_last_two_uses_other_pair_sums():
    content = TrialContent(male_digits=[1, 3, 5, 9, 6, 2], female_digits=[0, 0, 0, 0, 0, 0])
    rng = np.random.default_rng(1)
    q = generate_question(QuestionTemplate(QuestionKind.SUM_LAST_TWO, "male"), content, rng)
    assert q.question == "What is the sum of the last two digits spoken by the male?"
    assert q.options[q.ground_truth] == "8"
    other_sums = {"4", "8", "14", "15"}  # sums of adjacent pairs 1+3, 3+5, 5+9, 9+6
    for i, option in enumerate(q.options):
        if i != q.ground_truth:
            assert option in other_sums - {"8"}


def test_last_two_digits_option_shape():
    content = TrialContent(male_digits=[4, 1, 0, 9, 6, 2])
    rng = np.random.default_rng(2)
    q = generate_question(QuestionTemplate(QuestionKind.LAST_TWO_DIGITS, "male"), content, rng)
    assert q.question == "What is the LAST TWO digits spoken by male?"
    assert q.options[q.ground_truth] == "6,2"
    assert len(q.options) == 2


def test_order_last_three_verifier_example_shape():
    content = TrialContent(female_digits=[2, 3, 4, 6, 7, 9], male_digits=[5, 0, 1, 8, 9, 1])
    rng = np.random.default_rng(3)
    q = generate_question(QuestionTemplate(QuestionKind.ORDER_LAST_THREE, "female"), content, rng)
    assert q.question == "What is the order of last three digits spoken by female?"
    assert q.options[q.ground_truth] == "6,7,9"
    assert len(set(q.options)) == 4


def test_event_presence_yes_and_no():
    content = TrialContent(
        events_present=["dog barking"], event_pool=["dog barking", "cat meowing"]
    )
    seen = set()
    for seed in range(30):
        q = generate_question(
            QuestionTemplate(QuestionKind.EVENT_PRESENCE), content, np.random.default_rng(seed)
        )
        assert q.options == ["Yes", "No"]
        if q.queried_event == "dog barking":
            assert q.options[q.ground_truth] == "Yes"
        else:
            assert q.options[q.ground_truth] == "No"
        seen.add(q.options[q.ground_truth])
    assert seen == {"Yes", "No"}


def test_distractor_shortage_raises():
    content = TrialContent(male_digits=[1, 1, 1, 1, 1, 1])
    rng = np.random.default_rng(0)
    with pytest.raises(SynthError):
        # only spoken digit is 1 -> cannot build 3 spoken-digit distractors
        generate_question(QuestionTemplate(QuestionKind.NOT_MENTIONED, "male"), content, rng)


def test_option_position_unbiased():
    # correct-answer position should be ~uniform across 1000 generations
    counts = np.zeros(4)
    n = 1000
    for seed in range(n):
        rng = np.random.default_rng(seed)
        digits = [int(d) for d in rng.integers(0, 10, size=6)]
        content = TrialContent(male_digits=digits, female_digits=[0, 1, 2, 3, 4, 5])
        q = generate_question(QuestionTemplate(QuestionKind.LAST_DIGIT, "male"), content, rng)
        counts[q.ground_truth] += 1
    p = 1 / 4
    sigma = math.sqrt(p * (1 - p) / n)
    for freq in counts / n:
        assert abs(freq - p) <= 3 * sigma


# -- trial synthesis -----------------------------------------------------------


def test_synthesis_is_deterministic(demo_corpus):
    t1 = synthesize_trial(
        demo_corpus, TaskKind.TASK3_OVERLAP, QuestionTemplate(QuestionKind.SUM_LAST_TWO), PARAMS, 42
    )
    t2 = synthesize_trial(
        demo_corpus, TaskKind.TASK3_OVERLAP, QuestionTemplate(QuestionKind.SUM_LAST_TWO), PARAMS, 42
    )
    assert np.array_equal(t1.audio.samples, t2.audio.samples)
    assert t1.question == t2.question
    assert t1.options == t2.options
    assert t1.ground_truth == t2.ground_truth


def test_task3_onsets_sample_aligned(demo_corpus):
    trial = synthesize_trial(
        demo_corpus, TaskKind.TASK3_OVERLAP, QuestionTemplate(QuestionKind.ORDER_LAST_THREE), PARAMS, 7
    )
    onsets = trial.metadata["digit_onsets"]
    assert onsets["male"] == onsets["female"]
    male_layers = [l for l in trial.metadata["mix_plan"]["layers"] if l["role"] == "speech_male"]
    female_layers = [l for l in trial.metadata["mix_plan"]["layers"] if l["role"] == "speech_female"]
    assert [l["onset"] for l in male_layers] == [l["onset"] for l in female_layers]


def test_task2_snr_from_rebuilt_layers(demo_corpus):
    from audiottc.audio import measure_snr_db

    trial = synthesize_trial(
        demo_corpus,
        TaskKind.TASK2_SPEECH,
        QuestionTemplate(QuestionKind.LAST_DIGIT),
        PARAMS,
        13,
    )
    fg, bg = rebuild_layers(demo_corpus, trial)
    assert bg is not None
    assert measure_snr_db(fg, bg) == pytest.approx(5.0, abs=0.1)


def test_no_noise_sentinel(demo_corpus):
    params = SynthParams(sequence_length=6, gap_ms=120.0, snr_db=math.inf, session_rate=CORPUS_RATE)
    trial = synthesize_trial(
        demo_corpus, TaskKind.TASK2_SPEECH, QuestionTemplate(QuestionKind.LAST_DIGIT), params, 5
    )
    assert trial.metadata["snr_db"] is None
    assert all(l["role"] != "noise" for l in trial.metadata["mix_plan"]["layers"])


def test_task1_structure(demo_corpus):
    trial = synthesize_trial(
        demo_corpus, TaskKind.TASK1_EVENT, QuestionTemplate(QuestionKind.EVENT_PRESENCE), PARAMS, 21
    )
    assert trial.task_kind is TaskKind.TASK1_EVENT
    assert 2 <= len(trial.metadata["events_present"]) <= 4
    assert trial.pre_instruction in ("Focus on ANIMAL sound.", "Focus on HOUSEHOLD sound.")
    assert trial.question.startswith("Did you hear the ")
    check_trial(trial)


def test_ground_truth_recomputation_sample(demo_corpus):
    templates = {
        TaskKind.TASK1_EVENT: [QuestionKind.EVENT_PRESENCE],
        TaskKind.TASK2_SPEECH: [QuestionKind.LAST_DIGIT, QuestionKind.LAST_TWO_DIGITS],
        TaskKind.TASK3_OVERLAP: [
            QuestionKind.SUM_LAST_TWO,
            QuestionKind.NOT_MENTIONED,
            QuestionKind.ORDER_LAST_THREE,
        ],
    }
    n = 0
    for task, kinds in templates.items():
        for i in range(25):
            trial = synthesize_trial(
                demo_corpus, task, QuestionTemplate(kinds[i % len(kinds)]), PARAMS, 1000 + i
            )
            check_trial(trial)
            n += 1
    assert n == 75


def test_incompatible_template_rejected(demo_corpus):
    with pytest.raises(SynthError, match="incompatible"):
        synthesize_trial(
            demo_corpus, TaskKind.TASK1_EVENT, QuestionTemplate(QuestionKind.SUM_LAST_TWO), PARAMS, 0
        )


def test_audio_peak_limited(demo_corpus):
    trial = synthesize_trial(
        demo_corpus, TaskKind.TASK3_OVERLAP, QuestionTemplate(QuestionKind.NOT_MENTIONED), PARAMS, 3
    )
    assert np.max(np.abs(trial.audio.samples)) <= 1.0

"""Independent ground-truth recomputation from trial metadata.

Deliberately re-derives the correct answer from the persisted sequences
without touching the question-generation code, so generator bugs cannot
hide behind their own bookkeeping.
"""

from audiottc.trials import Trial


def expected_answer(trial: Trial) -> str:
    meta = trial.metadata
    template = meta["template"]
    if template == "event_presence":
        return "Yes" if meta["queried_event"] in meta["events_present"] else "No"
    gender = meta["target_gender"]
    seq = meta[f"{gender}_digits"]
    if template == "last_digit":
        return str(seq[-1])
    if template == "last_two_digits":
        return f"{seq[-2]},{seq[-1]}"
    if template == "sum_last_two":
        return str(seq[-2] + seq[-1])
    if template == "not_mentioned":
        unspoken = [o for o in trial.options if int(o) not in set(seq)]
        assert len(unspoken) == 1, f"NOT-mentioned options must contain exactly one unspoken digit: {trial.options} vs {seq}"
        return unspoken[0]
    if template == "order_last_three":
        return ",".join(str(d) for d in seq[-3:])
    raise AssertionError(f"unknown template {template}")


def check_trial(trial: Trial) -> None:
    assert trial.options[trial.ground_truth] == expected_answer(trial), trial.id

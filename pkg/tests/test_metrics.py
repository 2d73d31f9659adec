import math

import pytest
from hypothesis import given, strategies as st

from torqueflow.metrics import (
    ErrorFlags,
    MetricsError,
    MethodSummary,
    classify_errors,
    invert_tlx,
    radar,
    score_sus,
    score_tlx,
)
from torqueflow.scene import Scenario, ScenarioStep
from torqueflow.session import EventKind, Method, SessionEvent


def make_scenario():
    return Scenario("s", (
        ScenarioStep("g", "a", 300),
        ScenarioStep("g", "b", 300),
        ScenarioStep("g", "c", 500),
    ))


class LogBuilder:
    def __init__(self, method, scenario_id="s"):
        self.events = [SessionEvent(0, EventKind.SESSION_START, {
            "session_id": "t", "method": method.value,
            "scenario_id": scenario_id, "n_steps": 3})]
        self.manual = []

    def episode(self, part, site, target, peak=None, reached=True):
        ts = self.events[-1].ts_ms + 10
        self.events.append(SessionEvent(ts, EventKind.TORQUE_APPLIED, {
            "part_id": part, "site_id": site, "target_cnm": target,
            "peak_cnm": peak if peak is not None else target, "reached": reached}))
        return self

    def validated(self, idx, part, site, target):
        ts = self.events[-1].ts_ms + 10
        self.events.append(SessionEvent(ts, EventKind.STEP_VALIDATED, {
            "step_index": idx, "part_id": part, "site_id": site,
            "target_cnm": target, "peak_cnm": target}))
        return self

    def log(self, part, site, torque):
        ts = self.events[-1].ts_ms + 10
        entry = {"part_id": part, "site_id": site, "torque_cnm": torque}
        self.manual.append(entry)
        self.events.append(SessionEvent(ts, EventKind.MANUAL_LOG_ENTRY, entry))
        return self

    def done(self, duration=60.0, aborted=False):
        ts = self.events[-1].ts_ms + 10
        kind = EventKind.SESSION_ABORTED if aborted else EventKind.SESSION_END
        payload = {"duration_s": duration}
        if aborted:
            payload = {"reason": "x", "duration_s": duration}
        self.events.append(SessionEvent(ts, kind, payload))
        return self


def test_clean_conventional_log_classifies_clean():
    b = LogBuilder(Method.CONVENTIONAL)
    for part, site, t in [("g", "a", 300), ("g", "b", 300), ("g", "c", 500)]:
        b.episode(part, site, t).log(part, site, t)
    b.done()
    assert classify_errors(b.events, b.manual, make_scenario()) == ErrorFlags()


def test_out_of_order_completion_flags_wrong_order():
    b = LogBuilder(Method.CONVENTIONAL)
    b.episode("g", "a", 300).log("g", "a", 300)
    b.episode("g", "c", 500).log("g", "c", 500)  # step 3 before step 2
    b.episode("g", "b", 300).log("g", "b", 300)
    b.done()
    flags = classify_errors(b.events, b.manual, make_scenario())
    assert flags.wrong_order and not flags.wrong_screw and not flags.stale_torque


def test_off_scenario_episode_flags_wrong_screw():
    b = LogBuilder(Method.CONVENTIONAL)
    b.episode("g", "a", 300).log("g", "a", 300)
    b.episode("g", "zz", 300).log("g", "b", 300)  # wrong hole, logged as b
    b.episode("g", "c", 500).log("g", "c", 500)
    b.done()
    flags = classify_errors(b.events, b.manual, make_scenario())
    assert flags.wrong_screw and not flags.wrong_order and not flags.stale_torque


def test_stale_target_flags_stale_torque():
    b = LogBuilder(Method.CONVENTIONAL)
    b.episode("g", "a", 300).log("g", "a", 300)
    b.episode("g", "b", 300).log("g", "b", 300)
    b.episode("g", "c", 300, peak=300).log("g", "c", 500)  # forgot 300 -> 500
    b.done()
    flags = classify_errors(b.events, b.manual, make_scenario())
    assert flags.stale_torque and not flags.wrong_order and not flags.wrong_screw


def test_unreached_episodes_are_not_completions():
    b = LogBuilder(Method.CONVENTIONAL)
    b.episode("g", "c", 500, peak=120, reached=False)  # aborted pull on c first
    b.episode("g", "a", 300).log("g", "a", 300)
    b.episode("g", "b", 300).log("g", "b", 300)
    b.episode("g", "c", 500).log("g", "c", 500)
    b.done()
    assert classify_errors(b.events, b.manual, make_scenario()) == ErrorFlags()


def test_guided_log_never_flags_order_or_screw():
    b = LogBuilder(Method.AR_GUIDED)
    b.validated(0, "g", "a", 300)
    # stray reached episode on a later site with a stale target
    b.episode("g", "c", 300, peak=300)
    b.validated(1, "g", "b", 300)
    b.validated(2, "g", "c", 500)
    b.done()
    flags = classify_errors(b.events, [], make_scenario())
    assert not flags.wrong_order and not flags.wrong_screw
    assert flags.stale_torque  # the stray stale episode still counts


def test_aborted_log_refused():
    b = LogBuilder(Method.CONVENTIONAL).episode("g", "a", 300).done(aborted=True)
    with pytest.raises(MetricsError, match="aborted"):
        classify_errors(b.events, [], make_scenario())


def test_scenario_mismatch_refused():
    b = LogBuilder(Method.CONVENTIONAL, scenario_id="other").done()
    with pytest.raises(MetricsError, match="scenario"):
        classify_errors(b.events, [], make_scenario())


# -- questionnaire scoring ------------------------------------------------


def test_sus_best_case_scores_100():
    items = [5, 1, 5, 1, 5, 1, 5, 1, 5, 1]
    assert score_sus(items) == 100.0


def test_sus_all_threes_scores_50():
    assert score_sus([3] * 10) == 50.0


def test_sus_worst_case_scores_0():
    assert score_sus([1, 5, 1, 5, 1, 5, 1, 5, 1, 5]) == 0.0


def test_sus_range_validation():
    with pytest.raises(MetricsError):
        score_sus([0] + [3] * 9)
    with pytest.raises(MetricsError):
        score_sus([3] * 9)


@given(st.lists(st.integers(1, 5), min_size=10, max_size=10),
       st.integers(0, 9))
def test_sus_monotone_in_each_item(items, idx):
    base = score_sus(items)
    bumped = list(items)
    if idx % 2 == 0:
        if bumped[idx] == 5:
            return
        bumped[idx] += 1     # better agreement with a positive statement
    else:
        if bumped[idx] == 1:
            return
        bumped[idx] -= 1     # less agreement with a negative statement
    assert score_sus(bumped) >= base
    assert 0.0 <= score_sus(bumped) <= 100.0


def test_tlx_examples():
    assert score_tlx([1] * 6) == 1.0
    assert score_tlx([5] * 6) == 5.0
    assert score_tlx([20] * 6) == 20.0
    with pytest.raises(MetricsError):
        score_tlx([0, 5, 5, 5, 5, 5])


@given(st.lists(st.integers(1, 20), min_size=6, max_size=6))
def test_tlx_range_and_inversion_monotone(items):
    raw = score_tlx(items)
    assert 1.0 <= raw <= 20.0
    inv = invert_tlx(raw)
    assert 0.0 <= inv <= 100.0
    assert invert_tlx(raw + 0.5) < inv  # strictly decreasing


def test_invert_tlx_anchors():
    assert invert_tlx(1.0) == 100.0
    assert invert_tlx(20.0) == 0.0


# -- radar ----------------------------------------------------------------


def summary(method, n, errs, mean_t, sus=None, tlx=None):
    return MethodSummary(method, n, errs, mean_t, sus, tlx)


def test_radar_efficiency_oracle():
    summaries = {
        Method.CONVENTIONAL: summary(Method.CONVENTIONAL, 34, 23, 623.0, 73.1, 7.0),
        Method.AR_GUIDED: summary(Method.AR_GUIDED, 34, 0, 339.0, 74.4, 5.1),
    }
    times = [623.0] * 33 + [300.0] + [339.0] * 34
    axes = radar(summaries, times)
    assert math.isclose(axes["conventional"]["efficiency"], 100.0 * 300 / 623,
                        abs_tol=1e-12)
    assert math.isclose(axes["ar_guided"]["efficiency"], 100.0 * 300 / 339,
                        abs_tol=1e-12)
    assert axes["ar_guided"]["reliability"] == 100.0
    assert math.isclose(axes["conventional"]["reliability"], 100.0 * 11 / 34,
                        abs_tol=1e-12)
    assert round(axes["conventional"]["reliability"], 1) == 32.4


def test_radar_requires_sessions():
    with pytest.raises(MetricsError):
        radar({Method.AR_GUIDED: summary(Method.AR_GUIDED, 0, 0, 1.0)}, [1.0])
    with pytest.raises(MetricsError):
        radar({}, [])


def test_aggregate_study_permutation_invariant(tmp_path):
    """Renaming (re-ordering) the session directories changes nothing."""
    import shutil
    from torqueflow.metrics import aggregate_study
    from torqueflow.scene import build_bench_scene
    from torqueflow.study import calibrated_study_path

    src = calibrated_study_path()
    names = sorted(p.name for p in src.iterdir())[:8]
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    for i, name in enumerate(names):
        shutil.copytree(src / name, a_dir / f"{i:02d}-{name}")
        shutil.copytree(src / name, b_dir / f"{len(names) - i:02d}-{name}")
    scene = build_bench_scene()
    a = aggregate_study(a_dir, scene)
    b = aggregate_study(b_dir, scene)
    assert a.summaries == b.summaries
    assert {m: sorted(t) for m, t in a.times.items()} == \
        {m: sorted(t) for m, t in b.times.items()}

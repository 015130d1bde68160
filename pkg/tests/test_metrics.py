import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surt.datagen import MixtureSample
from surt.metrics import (ChannelEpStats, EpReport, edit_distance,
                          ep_statistics, leakage_mu_correlation, leakage_probe,
                          mu_histogram, score_recognition, WerReport,
                          write_reports)

EOS = 17

tokens = st.lists(st.integers(min_value=1, max_value=5), max_size=6)


def make_sample(sid, y1, y2, t1, t2, T=20, span1=None, span2=None):
    return MixtureSample(
        id=sid, x=np.zeros((T, 4), dtype=np.float32),
        y1=y1 + [EOS], y2=y2 + [EOS], t_eos1=t1, t_eos2=t2,
        delay=5, overlap_ratio=0.3,
        span1=span1 or (3, t1), span2=span2 or (8, t2), speakers=(1, 2))


def decodes(entries):
    out = {}
    for sid, ch, toks, t_hat in entries:
        out[(sid, ch)] = {"id": sid, "channel": ch, "tokens": toks,
                          "emission_frames": [], "t_hat_eos": t_hat,
                          "no_ep_flag": t_hat is None}
    return out


# -- edit distance -----------------------------------------------------


def test_edit_distance_identity():
    assert edit_distance([1, 2, 3], [1, 2, 3]) == (0, 0, 0)


def test_edit_distance_empty_hyp_is_all_deletions():
    assert edit_distance([1, 2, 3], []) == (0, 3, 0)


def test_edit_distance_single_deletion_matches_dp_table():
    # full DP audit for ref=[a,b,c], hyp=[a,c]
    ref, hyp = [1, 2, 3], [1, 3]
    want = np.zeros((4, 3), dtype=int)
    want[:, 0] = range(4)
    want[0, :] = range(3)
    for i in range(1, 4):
        for j in range(1, 3):
            want[i, j] = min(want[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]),
                             want[i, j - 1] + 1, want[i - 1, j] + 1)
    assert want[3, 2] == 1
    assert edit_distance(ref, hyp) == (0, 1, 0)


def test_edit_distance_prefers_substitution_on_ties():
    s, d, i = edit_distance([1], [2])
    assert (s, d, i) == (1, 0, 0)


@given(tokens, tokens)
@settings(max_examples=50, deadline=None)
def test_edit_distance_total_is_symmetric(a, b):
    sa, da, ia = edit_distance(a, b)
    sb, db, ib = edit_distance(b, a)
    assert sa + da + ia == sb + db + ib
    assert da == ib and ia == db  # deletions and insertions swap roles


@given(tokens, tokens, tokens)
@settings(max_examples=50, deadline=None)
def test_edit_distance_triangle_inequality(a, b, c):
    d = lambda x, y: sum(edit_distance(x, y))
    assert d(a, c) <= d(a, b) + d(b, c)


# -- recognition scoring -----------------------------------------------


def test_perfect_hypotheses_score_zero_under_both_rules():
    s = make_sample("a", [1, 2], [3, 4], 10, 15)
    d = decodes([("a", 1, [1, 2], 10), ("a", 2, [3, 4], 15)])
    for rule in ("heat", "best-perm"):
        assert score_recognition([s], d, EOS, rule).ter == 0.0


def test_best_perm_never_worse_than_heat():
    rng = np.random.default_rng(0)
    samples, d = [], {}
    for i in range(20):
        y1 = [int(v) for v in rng.integers(1, 6, size=3)]
        y2 = [int(v) for v in rng.integers(1, 6, size=3)]
        s = make_sample(str(i), y1, y2, 10, 15)
        samples.append(s)
        h1 = [int(v) for v in rng.integers(1, 6, size=rng.integers(0, 5))]
        h2 = [int(v) for v in rng.integers(1, 6, size=rng.integers(0, 5))]
        d.update(decodes([(str(i), 1, h1, None), (str(i), 2, h2, None)]))
    heat = score_recognition(samples, d, EOS, "heat").ter
    best = score_recognition(samples, d, EOS, "best-perm").ter
    assert best <= heat


def test_swapped_channels_punished_by_heat_only():
    s = make_sample("a", [1, 2, 3], [4, 5], 10, 15)
    d = decodes([("a", 1, [4, 5], 10), ("a", 2, [1, 2, 3], 15)])
    heat = score_recognition([s], d, EOS, "heat")
    best = score_recognition([s], d, EOS, "best-perm")
    assert best.ter == 0.0
    assert heat.ter > 0.5


def test_eos_stripped_before_comparison():
    s = make_sample("a", [1, 2], [3], 10, 15)
    d = decodes([("a", 1, [1, 2, EOS], 10), ("a", 2, [3], 15)])
    assert score_recognition([s], d, EOS, "heat").ter == 0.0


def test_unknown_rule_rejected():
    with pytest.raises(ValueError, match="rule"):
        score_recognition([], {}, EOS, "oracle")


# -- endpoint statistics -----------------------------------------------


def test_mu_sign_convention():
    s = make_sample("a", [1], [2], 10, 12)
    d = decodes([("a", 1, [1], 12), ("a", 2, [2], 9)])
    rep = ep_statistics([s], d)
    assert rep.channels[1].mu == [2]   # delayed
    assert rep.channels[2].mu == [-3]  # premature
    assert rep.channels[1].delayed == 1
    assert rep.channels[2].premature == 1


def test_recall_counting_example():
    st_ = ChannelEpStats(1, mu=[-2, 4, 6, 10], no_ep=0)
    assert st_.recall(5) == 0.5
    assert st_.recall(7) == 0.75
    assert st_.recall(9) == 0.75


def test_no_ep_counts_as_miss_at_every_threshold():
    st_ = ChannelEpStats(1, mu=[0, 1], no_ep=2)
    assert st_.recall(5) == 0.5
    assert st_.recall(1000) == 0.5
    assert st_.total == 4


def test_recall_monotone_in_threshold_property():
    rng = np.random.default_rng(1)
    for _ in range(20):
        mus = [int(v) for v in rng.integers(-30, 30, size=rng.integers(1, 20))]
        st_ = ChannelEpStats(1, mu=mus, no_ep=int(rng.integers(0, 4)))
        values = [st_.recall(th) for th in range(0, 40, 3)]
        assert all(a <= b for a, b in zip(values, values[1:]))
        bound = 1 - st_.no_ep / st_.total
        assert all(v <= bound + 1e-12 for v in values)


def test_count_partition_and_histogram_total():
    s1 = make_sample("a", [1], [2], 10, 12)
    s2 = make_sample("b", [1], [2], 8, 14)
    d = decodes([("a", 1, [], 10), ("a", 2, [], 15),
                 ("b", 1, [], None), ("b", 2, [], 10)])
    rep = ep_statistics([s1, s2], d)
    for ch in (1, 2):
        st_ = rep.channels[ch]
        assert st_.delayed + st_.premature + st_.exact + st_.no_ep == 2
    hist = mu_histogram(rep)
    assert sum(c for _, _, c in hist) == sum(len(rep.channels[ch].mu) for ch in (1, 2))


def test_report_dict_has_frame_rate_note():
    rep = ep_statistics([], {}, thresholds=(5, 7, 9), frame_rate=25)
    d = rep.as_dict()
    assert d["frame_rate_hz"] == 25
    assert "200 ms" in d["note"]


# -- leakage -----------------------------------------------------------


def test_leakage_zero_for_perfect_separation():
    s = make_sample("a", [1], [2], 6, 16, T=20, span1=(3, 6), span2=(10, 16))
    h1 = np.zeros((20, 4))
    h1[2:6] = 1.0  # only in own-speaker frames
    h2 = np.zeros((20, 4))
    h2[9:16] = 1.0
    out = leakage_probe(s, h1, h2)
    assert out["channel1"] == 0.0
    assert out["channel2"] == 0.0


def test_leakage_symmetric_half_mask():
    # both channels carry identical content: channel energy in other-only
    # frames equals that region's share of the total energy
    s = make_sample("a", [1], [2], 6, 16, T=20, span1=(3, 6), span2=(10, 16))
    h = np.ones((20, 4))
    out = leakage_probe(s, 0.5 * h, 0.5 * h)
    only2 = 7 / 20  # frames 10..16
    only1 = 4 / 20  # frames 3..6
    assert out["channel1"] == pytest.approx(only2)
    assert out["channel2"] == pytest.approx(only1)


def test_leakage_mu_correlation_sign():
    leaks = [0.0, 0.1, 0.3, 0.6, 0.9]
    mus = [0, 1, 4, 9, 20]
    assert leakage_mu_correlation(leaks, mus) > 0.8
    assert leakage_mu_correlation([0.5] * 5, mus) == 0.0


# -- report files ------------------------------------------------------


def test_write_reports_files(tmp_path):
    s = make_sample("a", [1, 2], [3], 10, 15)
    d = decodes([("a", 1, [1, 2], 11), ("a", 2, [3], None)])
    wer = [score_recognition([s], d, EOS, r) for r in ("heat", "best-perm")]
    ep = ep_statistics([s], d)
    paths = write_reports(tmp_path, wer, ep)
    recall_lines = open(paths["recall"]).read().strip().splitlines()
    assert recall_lines[0] == "threshold,channel,recall"
    assert len(recall_lines) == 1 + 6  # 3 thresholds x 2 channels
    import json
    summary = json.load(open(paths["summary"]))
    assert "heat" in summary["recognition"]
    assert summary["endpoint"]["channels"]["1"]["detected"] == 1

"""Recognition accuracy and endpoint-detection quality reports."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

DEFAULT_THRESHOLDS = (5, 7, 9)


def edit_distance(ref, hyp):
    """Levenshtein alignment with unit costs; returns (S, D, I).

    Tie-breaking is deterministic: substitution is preferred over
    insertion, insertion over deletion, when costs are equal.
    """
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            ins = dist[i, j - 1] + 1
            dele = dist[i - 1, j] + 1
            dist[i, j] = min(sub, ins, dele)
    s = d = ins_count = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                s += 1
            i -= 1
            j -= 1
        elif j > 0 and dist[i, j] == dist[i, j - 1] + 1:
            ins_count += 1
            j -= 1
        else:
            d += 1
            i -= 1
    return s, d, ins_count


@dataclass
class WerReport:
    rule: str
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_len: int = 0

    @property
    def ter(self):
        if self.ref_len == 0:
            return 0.0
        return (self.substitutions + self.deletions + self.insertions) / self.ref_len

    def add(self, s, d, i, ref_len):
        self.substitutions += s
        self.deletions += d
        self.insertions += i
        self.ref_len += ref_len

    def as_dict(self):
        return {
            "rule": self.rule,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_len": self.ref_len,
            "ter": self.ter,
        }


def _strip_eos(tokens, eos_id):
    return [t for t in tokens if t != eos_id]


def pair_errors(refs, hyps, eos_id):
    """Edit-distance counts for a fixed (ref1->hyp1, ref2->hyp2) pairing."""
    total = []
    for ref, hyp in zip(refs, hyps):
        total.append(edit_distance(_strip_eos(ref, eos_id), _strip_eos(hyp, eos_id)))
    return total


def score_recognition(samples, decodes_by_id, eos_id, rule):
    """Aggregate token error rate over the dataset.

    rule="heat": channel 1 scored against the first-spoken reference.
    rule="best-perm": per-sample permutation minimizing total errors.
    """
    if rule not in ("heat", "best-perm"):
        raise ValueError(f"unknown scoring rule {rule!r}")
    report = WerReport(rule)
    for s in samples:
        hyp1 = decodes_by_id[(s.id, 1)]["tokens"]
        hyp2 = decodes_by_id[(s.id, 2)]["tokens"]
        direct = pair_errors([s.y1, s.y2], [hyp1, hyp2], eos_id)
        chosen = direct
        if rule == "best-perm":
            swapped = pair_errors([s.y1, s.y2], [hyp2, hyp1], eos_id)
            if sum(sum(e) for e in swapped) < sum(sum(e) for e in direct):
                chosen = swapped
        for (sub, dele, ins), ref in zip(chosen, (s.y1, s.y2)):
            report.add(sub, dele, ins, len(_strip_eos(ref, eos_id)))
    return report


@dataclass
class ChannelEpStats:
    channel: int
    mu: list = field(default_factory=list)  # per detected endpoint
    no_ep: int = 0

    @property
    def total(self):
        return len(self.mu) + self.no_ep

    @property
    def delayed(self):
        return sum(1 for m in self.mu if m > 0)

    @property
    def premature(self):
        return sum(1 for m in self.mu if m < 0)

    @property
    def exact(self):
        return sum(1 for m in self.mu if m == 0)

    def recall(self, threshold):
        """Detections with |mu| <= threshold over all utterances; no-EP
        cases count as misses."""
        if self.total == 0:
            return 0.0
        return sum(1 for m in self.mu if abs(m) <= threshold) / self.total

    def median_mu(self):
        return float(np.median(self.mu)) if self.mu else None


@dataclass
class EpReport:
    channels: dict
    thresholds: tuple = DEFAULT_THRESHOLDS
    frame_rate: int = 25

    def recall_table(self):
        rows = []
        for ch in sorted(self.channels):
            for th in self.thresholds:
                rows.append((th, ch, self.channels[ch].recall(th)))
        return rows

    def as_dict(self):
        out = {
            "thresholds": list(self.thresholds),
            "frame_rate_hz": self.frame_rate,
            "frame_ms": 1000.0 / self.frame_rate,
            "note": f"at {self.frame_rate} Hz, 5 frames = {5000 // self.frame_rate} ms",
            "channels": {},
        }
        for ch, st in sorted(self.channels.items()):
            out["channels"][str(ch)] = {
                "detected": len(st.mu),
                "no_ep": st.no_ep,
                "delayed": st.delayed,
                "premature": st.premature,
                "exact": st.exact,
                "median_mu": st.median_mu(),
                "recall": {str(th): st.recall(th) for th in self.thresholds},
            }
        return out


def ep_statistics(samples, decodes_by_id, thresholds=DEFAULT_THRESHOLDS,
                  frame_rate=25) -> EpReport:
    """Per-channel endpoint stats: mu = predicted - true endpoint frame."""
    channels = {1: ChannelEpStats(1), 2: ChannelEpStats(2)}
    for s in samples:
        truth = {1: s.t_eos1, 2: s.t_eos2}
        for ch in (1, 2):
            rec = decodes_by_id[(s.id, ch)]
            if rec["t_hat_eos"] is None:
                channels[ch].no_ep += 1
            else:
                channels[ch].mu.append(int(rec["t_hat_eos"]) - truth[ch])
    return EpReport(channels=channels, thresholds=tuple(thresholds),
                    frame_rate=frame_rate)


def mu_histogram(report: EpReport):
    """Unit-width histogram rows (channel, mu, count)."""
    rows = []
    for ch, st in sorted(report.channels.items()):
        values, counts = np.unique(np.asarray(st.mu, dtype=np.int64), return_counts=True)
        for v, c in zip(values, counts):
            rows.append((ch, int(v), int(c)))
    return rows


def leakage_probe(sample, h1, h2):
    """Fraction of each channel's energy in frames where only the *other*
    speaker is active. Requires synthetic samples with source spans."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    T = h1.shape[0]
    act1 = np.zeros(T, dtype=bool)
    act2 = np.zeros(T, dtype=bool)
    act1[sample.span1[0] - 1:sample.span1[1]] = True
    act2[sample.span2[0] - 1:sample.span2[1]] = True
    only2 = act2 & ~act1
    only1 = act1 & ~act2

    def frac(h, mask):
        total = float(np.sum(h * h))
        if total == 0:
            return 0.0
        return float(np.sum(h[mask] * h[mask])) / total

    leak1 = frac(h1, only2)
    leak2 = frac(h2, only1)
    return {"channel1": leak1, "channel2": leak2, "mean": 0.5 * (leak1 + leak2)}


def leakage_mu_correlation(leakages, mus):
    """Pearson correlation between leakage scores and max(0, mu)."""
    x = np.asarray(leakages, dtype=np.float64)
    y = np.maximum(0.0, np.asarray(mus, dtype=np.float64))
    if len(x) < 2 or np.std(x) == 0 or np.std(y) == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def write_reports(out_dir, wer_reports, ep_report: EpReport):
    """Emit recall CSV, mu histogram CSV, and a structured summary."""
    os.makedirs(out_dir, exist_ok=True)
    recall_path = os.path.join(out_dir, "recall.csv")
    with open(recall_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "channel", "recall"])
        for th, ch, r in ep_report.recall_table():
            w.writerow([th, ch, f"{r:.6f}"])
    hist_path = os.path.join(out_dir, "ep_histogram.csv")
    with open(hist_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["channel", "mu", "count"])
        for row in mu_histogram(ep_report):
            w.writerow(row)
    summary = {
        "recognition": {r.rule: r.as_dict() for r in wer_reports},
        "endpoint": ep_report.as_dict(),
    }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, sort_keys=True, indent=1)
        f.write("\n")
    return {"recall": recall_path, "histogram": hist_path, "summary": summary_path}

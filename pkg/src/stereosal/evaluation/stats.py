"""Aggregate statistics over per-video metric tables."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .metrics import HIGHER_IS_BETTER, METRICS

RANK_METRICS = ("sAUC", "KLD", "NSS")


def mean_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of the Student-t confidence interval (nan below 2 values)."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return math.nan, math.nan
    m = float(v.mean())
    if v.size < 2:
        return m, math.nan
    half = sps.t.ppf(0.5 + level / 2, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size)
    return m, float(half)


def ttest_p(a, b) -> float:
    """Two-sample Student t-test p-value; identical samples give 1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a, b = a[np.isfinite(a)], b[np.isfinite(b)]
    if a.size < 2 or b.size < 2:
        return math.nan
    if np.array_equal(np.sort(a), np.sort(b)):
        return 1.0
    with warnings.catch_warnings():
        # nearly constant samples trigger a precision warning; the p-value is still usable
        warnings.simplefilter("ignore", RuntimeWarning)
        res = sps.ttest_ind(a, b, equal_var=True)
    p = float(res.pvalue)
    if math.isnan(p):  # both samples constant
        return 1.0 if a.mean() == b.mean() else 0.0
    return p


def average_ranks(means: dict[str, dict[str, float]], metrics=RANK_METRICS) -> dict[str, float]:
    """Mean over ``metrics`` of each model's rank (1 = best, ties averaged)."""
    models = list(means)
    if not models:
        return {}
    per_metric = []
    for m in metrics:
        vals = np.array([means[k].get(m, math.nan) for k in models], dtype=np.float64)
        key = -vals if HIGHER_IS_BETTER[m] else vals
        key = np.where(np.isfinite(key), key, np.inf)
        per_metric.append(sps.rankdata(key, method="average"))
    r = np.mean(per_metric, axis=0)
    return {k: float(v) for k, v in zip(models, r)}


@dataclass
class MetricReport:
    per_video: dict  # model -> metric -> list over videos
    videos: list
    means: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)
    pvalues: dict = field(default_factory=dict)  # metric -> (model_a, model_b) -> p
    ranks: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def models(self) -> list[str]:
        return list(self.per_video)

    def rows(self):
        for model in self.models:
            row = {"model": model}
            for m in METRICS:
                row[m] = self.means[model][m]
                row[f"{m}_ci95"] = self.ci[model][m]
            row["avg_rank"] = self.ranks.get(model, math.nan)
            yield row

    def to_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        rows = list(self.rows())
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})

    def pvalue_rows(self):
        for metric, table in self.pvalues.items():
            for (a, b), p in table.items():
                yield {"metric": metric, "model_a": a, "model_b": b, "p_value": p}

    def format_table(self) -> str:
        head = f"{'Model':<18}" + "".join(f"{m:>16}" for m in METRICS) + f"{'Avg rank':>10}"
        lines = [head, "-" * len(head)]
        for r in self.rows():
            cells = []
            for m in METRICS:
                v, c = r[m], r[f"{m}_ci95"]
                cells.append(f"{v:>8.4f}±{c:<7.4f}" if np.isfinite(c) else f"{v:>8.4f}{'':8}")
            lines.append(f"{r['model']:<18}" + "".join(cells) + f"{r['avg_rank']:>10.2f}")
        return "\n".join(lines)


def build_report(per_video: dict, videos, extras=None) -> MetricReport:
    """``per_video[model][metric]`` holds one value per video (same order as ``videos``)."""
    rep = MetricReport({k: {m: list(v.get(m, [])) for m in METRICS} for k, v in per_video.items()},
                       list(videos), extras=dict(extras or {}))
    for model, table in rep.per_video.items():
        rep.means[model], rep.ci[model] = {}, {}
        for m in METRICS:
            rep.means[model][m], rep.ci[model][m] = mean_ci(table[m])
    for m in METRICS:
        rep.pvalues[m] = {}
        models = rep.models
        for i, a in enumerate(models):
            for b in models[i + 1 :]:
                rep.pvalues[m][(a, b)] = ttest_p(rep.per_video[a][m], rep.per_video[b][m])
    rep.ranks = average_ranks(rep.means)
    return rep

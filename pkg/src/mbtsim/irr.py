"""Inter-rater reliability for ordinal (1-4) grades.

Items are (scenario, competency) pairs and columns are raters. Missing
grades are NaN: Spearman uses pairwise deletion, Kendall's W and the ICCs
use listwise deletion.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import os
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

GRADES = (1, 2, 3, 4)
SCORES_HEADER = ("scenario_id", "rater_id", "competency", "grade", "candidate_class")
STATISTICS = ("W", "rho", "icc_consistency", "icc_agreement")
PERCENTILES = (1, 5, 25, 50, 75, 95, 99)


class UndefinedStatistic(ValueError):
    """Statistic has no value on this data (constant vector, no variance, ...)."""


class ScoresFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None, path: str | None = None):
        self.row = row
        where = f"{path}: " if path else ""
        where += f"row {row}: " if row is not None else ""
        super().__init__(where + message)


@dataclass
class RaterScoreMatrix:
    items: list            # (scenario_id, competency)
    raters: list
    scores: np.ndarray     # items x raters, NaN = missing
    item_class: list = field(default_factory=list)  # candidate class per item ("" if unknown)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.shape != (len(self.items), len(self.raters)):
            raise ValueError("scores shape does not match items x raters")
        if len(self.raters) < 2 or len(self.items) < 2:
            raise ValueError("need at least 2 raters and 2 items")
        ok = np.isnan(self.scores) | np.isin(self.scores, GRADES)
        if not ok.all():
            raise ValueError("grades must be integers in 1..4")
        if not self.item_class:
            self.item_class = [""] * len(self.items)

    @classmethod
    def from_array(cls, scores, items=None, raters=None) -> "RaterScoreMatrix":
        a = np.asarray(scores, dtype=float)
        items = items or [(f"S{i + 1:02d}", "Safety") for i in range(a.shape[0])]
        raters = raters or [f"R{j + 1}" for j in range(a.shape[1])]
        return cls(list(items), list(raters), a)

    def complete(self) -> np.ndarray:
        """Listwise deletion: items graded by every rater."""
        keep = ~np.isnan(self.scores).any(axis=1)
        out = self.scores[keep]
        if out.shape[0] < 2:
            raise UndefinedStatistic("fewer than 2 complete items after listwise deletion")
        return out

    def complete_items(self) -> list:
        keep = ~np.isnan(self.scores).any(axis=1)
        return [it for it, k in zip(self.items, keep) if k]


# --- statistics ---------------------------------------------------------------------

def spearman_pair(x, y) -> float:
    """Pearson correlation of mid-ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("need two equal-length vectors of length >= 2")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0:
        raise UndefinedStatistic("correlation undefined for a constant vector")
    return float(np.clip(float(rx @ ry) / den, -1.0, 1.0))


def _pairwise_mean(Y: np.ndarray) -> tuple[float, int]:
    vals, skipped = [], 0
    for i, j in itertools.combinations(range(Y.shape[1]), 2):
        both = ~np.isnan(Y[:, i]) & ~np.isnan(Y[:, j])
        if both.sum() < 2:
            skipped += 1
            continue
        try:
            vals.append(spearman_pair(Y[both, i], Y[both, j]))
        except UndefinedStatistic:
            skipped += 1
    if not vals:
        raise UndefinedStatistic("no rater pair has a defined correlation")
    return float(np.mean(vals)), skipped


def mean_spearman(m: RaterScoreMatrix, per_scenario: bool = False) -> float:
    """Mean pairwise Spearman rho over pooled items, or averaged per scenario."""
    if not per_scenario:
        rho, skipped = _pairwise_mean(m.scores)
        if skipped:
            warnings.warn(f"{skipped} rater pair(s) skipped: correlation undefined", stacklevel=2)
        return rho
    by_scn: dict = {}
    for idx, (scn, _) in enumerate(m.items):
        by_scn.setdefault(scn, []).append(idx)
    vals = []
    for rows in by_scn.values():
        try:
            vals.append(_pairwise_mean(m.scores[rows])[0])
        except UndefinedStatistic:
            continue
    if not vals:
        raise UndefinedStatistic("no scenario has a defined mean correlation")
    return float(np.mean(vals))


def _tie_term(Y: np.ndarray) -> float:
    T = 0.0
    for j in range(Y.shape[1]):
        _, counts = np.unique(Y[:, j], return_counts=True)
        T += float(np.sum(counts ** 3 - counts))
    return T


def kendall_w(m: RaterScoreMatrix | np.ndarray) -> float:
    Y = m.complete() if isinstance(m, RaterScoreMatrix) else np.asarray(m, dtype=float)
    n, k = Y.shape
    if n < 2 or k < 2:
        raise UndefinedStatistic("need at least 2 items and 2 raters")
    R = rankdata(Y, axis=0).sum(axis=1)
    S = float(np.sum((R - R.mean()) ** 2))
    den = k * k * (n ** 3 - n) - k * _tie_term(Y)
    if den <= 0:
        raise UndefinedStatistic("every rater gave a constant grade")
    return float(12.0 * S / den)


def _anova(Y: np.ndarray):
    n, k = Y.shape
    gm = Y.mean()
    ss_rows = k * float(np.sum((Y.mean(axis=1) - gm) ** 2))
    ss_cols = n * float(np.sum((Y.mean(axis=0) - gm) ** 2))
    ss_tot = float(np.sum((Y - gm) ** 2))
    ss_err = max(ss_tot - ss_rows - ss_cols, 0.0)
    return ss_rows / (n - 1), ss_cols / (k - 1), ss_err / ((n - 1) * (k - 1))


def icc(m: RaterScoreMatrix | np.ndarray, variant: str = "consistency") -> float:
    """Two-way single-score ICC: (C,1) for 'consistency', (A,1) for 'agreement'."""
    Y = m.complete() if isinstance(m, RaterScoreMatrix) else np.asarray(m, dtype=float)
    n, k = Y.shape
    msr, msc, mse = _anova(Y)
    if msr <= 0:
        raise UndefinedStatistic("no between-item variance")
    v = variant.lower()
    if v in ("consistency", "c", "icc_consistency"):
        return float((msr - mse) / (msr + (k - 1) * mse))
    if v in ("agreement", "a", "icc_agreement"):
        return float((msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n))
    raise ValueError(f"unknown ICC variant {variant!r}")


# --- permutation null -------------------------------------------------------------

def _batch_stat(P: np.ndarray, statistic: str, tie_term: float) -> np.ndarray:
    """Statistic for a stack of complete matrices P (B, n, k); NaN where undefined."""
    B, n, k = P.shape
    if statistic == "W":
        R = rankdata(P, axis=1).sum(axis=2)
        S = np.sum((R - R.mean(axis=1, keepdims=True)) ** 2, axis=1)
        den = k * k * (n ** 3 - n) - k * tie_term
        return 12.0 * S / den if den > 0 else np.full(B, np.nan)
    if statistic == "rho":
        Rk = rankdata(P, axis=1)
        Rk = Rk - Rk.mean(axis=1, keepdims=True)
        norm = np.sqrt(np.sum(Rk ** 2, axis=1))  # (B, k)
        C = np.einsum("bni,bnj->bij", Rk, Rk)
        iu = np.triu_indices(k, 1)
        num = C[:, iu[0], iu[1]]
        den = norm[:, iu[0]] * norm[:, iu[1]]
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(den > 0, num / den, np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmean(r, axis=1)
    gm = P.mean(axis=(1, 2), keepdims=True)
    rm = P.mean(axis=2)
    cm = P.mean(axis=1)
    ss_rows = k * np.sum((rm - gm[:, :, 0]) ** 2, axis=1)
    ss_cols = n * np.sum((cm - gm[:, 0, :]) ** 2, axis=1)
    ss_tot = np.sum((P - gm) ** 2, axis=(1, 2))
    ss_err = np.maximum(ss_tot - ss_rows - ss_cols, 0.0)
    msr, msc, mse = ss_rows / (n - 1), ss_cols / (k - 1), ss_err / ((n - 1) * (k - 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        if statistic == "icc_consistency":
            out = (msr - mse) / (msr + (k - 1) * mse)
        elif statistic == "icc_agreement":
            out = (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)
        else:
            raise ValueError(f"unknown statistic {statistic!r}; expected one of {STATISTICS}")
    return np.where(msr > 0, out, np.nan)


def statistic_value(m: RaterScoreMatrix, statistic: str) -> float:
    Y = m.complete()
    v = _batch_stat(Y[None], statistic, _tie_term(Y))[0]
    if not np.isfinite(v):
        raise UndefinedStatistic(f"{statistic} undefined on the observed data")
    return float(v)


def _blocks(m: RaterScoreMatrix, block: str) -> list[np.ndarray]:
    items = m.complete_items()
    if block == "all":
        return [np.arange(len(items))]
    pos = 1 if block == "competency" else 0 if block == "scenario" else None
    if pos is None:
        raise ValueError("block must be 'competency', 'scenario' or 'all'")
    groups: dict = {}
    for i, it in enumerate(items):
        groups.setdefault(it[pos], []).append(i)
    return [np.asarray(v) for v in groups.values()]


@dataclass(frozen=True)
class PermutationResult:
    statistic: str
    observed: float
    null: np.ndarray
    p_value: float

    def percentiles(self) -> dict:
        return {str(q): float(np.percentile(self.null, q)) for q in PERCENTILES}


def permutation_test(m: RaterScoreMatrix, statistic: str = "W", n_perm: int = 10_000, seed: int = 0,
                     block: str = "competency", batch: int = 500) -> PermutationResult:
    """Null distribution by shuffling each rater's grades within blocks of items.

    The default block is the competency: each rater's grades are shuffled
    across scenarios within each competency, which keeps every rater's grade
    distribution while breaking the alignment between raters.
    """
    if n_perm < 100:
        raise ValueError("n_perm must be >= 100")
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}; expected one of {STATISTICS}")
    Y = m.complete()
    observed = statistic_value(m, statistic)
    tie = _tie_term(Y)
    blocks = _blocks(m, block)
    n, k = Y.shape
    rng = np.random.default_rng(seed)
    null = np.empty(n_perm)
    got, attempts = 0, 0
    while got < n_perm and attempts < 10 * n_perm:
        b = min(batch, n_perm - got)
        attempts += b
        P = np.empty((b, n, k))
        for idx in blocks:
            keys = rng.random((b, len(idx), k))
            order = np.argsort(keys, axis=1)
            P[:, idx, :] = np.take_along_axis(np.broadcast_to(Y[idx], (b, len(idx), k)), order, axis=1)
        vals = _batch_stat(P, statistic, tie)
        vals = vals[np.isfinite(vals)]
        take = min(len(vals), n_perm - got)
        null[got:got + take] = vals[:take]
        got += take
    null = null[:got]
    if got == 0:
        raise UndefinedStatistic("statistic undefined on every permutation")
    p = (1 + int(np.sum(null >= observed - 1e-12))) / (1 + got)
    return PermutationResult(statistic, observed, null, float(p))


# --- consensus deviations -------------------------------------------------------

def modal_consensus(grades) -> tuple[int, bool]:
    """Modal grade (ties go to the lower grade) and whether a tie occurred."""
    vals = [int(g) for g in grades if not (isinstance(g, float) and math.isnan(g))]
    if not vals:
        raise UndefinedStatistic("no grades")
    c = Counter(vals)
    top = max(c.values())
    modes = sorted(g for g, n in c.items() if n == top)
    return modes[0], len(modes) > 1


def deviation_histogram(m: RaterScoreMatrix) -> dict:
    by_comp: dict = {}
    by_class: dict = {}
    ties = []
    total = 0
    for i, (scn, comp) in enumerate(m.items):
        row = m.scores[i]
        if np.isnan(row).all():
            continue
        cons, tie = modal_consensus(row)
        if tie:
            ties.append([scn, comp])
        for g in row[~np.isnan(row)]:
            d = str(int(g) - cons)
            by_comp.setdefault(comp, {}).setdefault(d, 0)
            by_comp[comp][d] += 1
            cls = m.item_class[i] or "unlabelled"
            by_class.setdefault(cls, {}).setdefault(d, 0)
            by_class[cls][d] += 1
            total += 1
    order = lambda h: {k: h[k] for k in sorted(h, key=int)}  # noqa: E731
    return {"tie_rule": "lower", "by_competency": {c: order(h) for c, h in sorted(by_comp.items())},
            "by_class": {c: order(h) for c, h in sorted(by_class.items())},
            "ties": ties, "total": total}


# --- synthetic panels --------------------------------------------------------------

def planted_panel(n_raters: int = 7, n_items: int = 19, sigma: float = 0.8, seed: int = 0,
                  competency: str = "Safety") -> RaterScoreMatrix:
    """Synthetic panel: latent item grade plus rater noise, rounded and clamped to 1..4."""
    rng = np.random.default_rng(seed)
    q = rng.integers(1, 5, size=n_items).astype(float)
    S = np.clip(np.rint(q[:, None] + rng.normal(0.0, sigma, size=(n_items, n_raters))), 1, 4)
    items = [(f"SYN{i + 1:02d}", competency) for i in range(n_items)]
    return RaterScoreMatrix(items, [f"R{j + 1}" for j in range(n_raters)], S,
                            ["synthetic"] * n_items)


def expected_rho(sigma: float, n_raters: int = 7, n_items: int = 19, seeds: Sequence[int] = range(50)) -> float:
    vals = []
    for s in seeds:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                vals.append(mean_spearman(planted_panel(n_raters, n_items, sigma, s)))
            except UndefinedStatistic:
                continue
    return float(np.mean(vals))


def calibrate_sigma(target: float = 0.59, n_raters: int = 7, n_items: int = 19,
                    seeds: Sequence[int] = range(50), lo: float = 0.05, hi: float = 3.0,
                    tol: float = 1e-3) -> float:
    """Noise level whose expected mean rho matches `target` (bisection; rho falls with sigma)."""
    f_lo = expected_rho(lo, n_raters, n_items, seeds) - target
    f_hi = expected_rho(hi, n_raters, n_items, seeds) - target
    if f_lo < 0 or f_hi > 0:
        raise ValueError(f"target {target} not bracketed by sigma in [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if expected_rho(mid, n_raters, n_items, seeds) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- files and report -----------------------------------------------------------

def loads_scores_csv(text: str, path: str | None = None) -> RaterScoreMatrix:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ScoresFormatError("empty scores file", 1, path) from None
    if tuple(header[:4]) != SCORES_HEADER[:4] or len(header) not in (4, 5):
        raise ScoresFormatError(f"header must be {','.join(SCORES_HEADER)}", 1, path)
    items, raters, cells, classes = [], [], {}, {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ScoresFormatError(f"expected {len(header)} fields, got {len(row)}", row_no, path)
        scn, rater, comp, grade = (c.strip() for c in row[:4])
        cls = row[4].strip() if len(row) > 4 else ""
        try:
            g = int(grade)
        except ValueError:
            raise ScoresFormatError(f"grade {grade!r} is not an integer", row_no, path) from None
        if g not in GRADES:
            raise ScoresFormatError(f"grade {g} outside 1..4", row_no, path)
        item = (scn, comp)
        if item not in classes:
            items.append(item)
            classes[item] = cls
        if rater not in raters:
            raters.append(rater)
        if (item, rater) in cells:
            raise ScoresFormatError(f"duplicate grade for {scn}/{comp} by {rater}", row_no, path)
        cells[(item, rater)] = g
    if len(raters) < 2:
        raise ScoresFormatError("need at least 2 raters", None, path)
    if len(items) < 2:
        raise ScoresFormatError("need at least 2 items", None, path)
    S = np.full((len(items), len(raters)), np.nan)
    ri = {r: j for j, r in enumerate(raters)}
    ii = {it: i for i, it in enumerate(items)}
    for (item, rater), g in cells.items():
        S[ii[item], ri[rater]] = g
    return RaterScoreMatrix(items, raters, S, [classes[it] for it in items])


def load_scores_csv(path: str | os.PathLike) -> RaterScoreMatrix:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScoresFormatError(f"cannot read scores: {exc.strerror}", None, str(path)) from None
    return loads_scores_csv(text, str(path))


def dumps_scores_csv(m: RaterScoreMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORES_HEADER)
    for i, (scn, comp) in enumerate(m.items):
        for j, r in enumerate(m.raters):
            g = m.scores[i, j]
            if not np.isnan(g):
                w.writerow((scn, r, comp, int(g), m.item_class[i]))
    return buf.getvalue()


def _safe(fn, *a, **kw):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return fn(*a, **kw)
    except UndefinedStatistic:
        return None


def irr_report(m: RaterScoreMatrix, n_perm: int = 10_000, seed: int = 0, statistic: str = "W",
               block: str = "competency", per_scenario: bool = False, null_bins: int = 50) -> dict:
    report = {
        "version": 1,
        "n_raters": len(m.raters),
        "n_items": len(m.items),
        "n_complete_items": int((~np.isnan(m.scores).any(axis=1)).sum()),
        "mean_spearman_rho": _safe(mean_spearman, m, per_scenario),
        "spearman_mode": "per_scenario" if per_scenario else "pooled",
        "kendall_w": _safe(kendall_w, m),
        "icc_consistency": _safe(icc, m, "consistency"),
        "icc_agreement": _safe(icc, m, "agreement"),
        "deviation_histogram": deviation_histogram(m),
    }
    if n_perm > 0:
        res = permutation_test(m, statistic, n_perm, seed, block)
        counts, edges = np.histogram(res.null, bins=null_bins)
        report["permutation"] = {
            "statistic": statistic, "block": block, "observed": res.observed,
            "n_perm": int(len(res.null)), "seed": seed, "p_value": res.p_value,
            "null_percentiles": res.percentiles(),
            "null_histogram": {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]},
        }
    return report

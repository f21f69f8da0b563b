"""Replicated simulation studies: detection rates and pooled DepthGram points.

Rates per replicate
-------------------
DepthGram rule, per outlier type ``k``: the share of observations of
effective type ``k`` that are flagged.  ``p_f`` is the share of effective
typical observations that are flagged.  A type with no members in a
replicate (every type when ``c = 0``) scores NaN and is left out of means.

Marginal screen: counted over (observation, dimension) pairs.  Magnitude
``p_c`` is the share of magnitude-contaminated pairs flagged by the
functional boxplot; shape ``p_c`` the share of shape-contaminated pairs
flagged by the outliergram.  Each ``p_f`` is the share of pairs not
contaminated by any type that the corresponding screen flags.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import VARIANTS, analyze
from .formats import fmt_float
from .synth import OUTLIER_TYPES, ModelConfig, SyntheticSource

DEPTHGRAM_METRICS = ("pc_magnitude", "pc_shape", "pc_joint", "pf")
MARGINAL_METRICS = ("marginal_pc_magnitude", "marginal_pf_magnitude",
                    "marginal_pc_shape", "marginal_pf_shape")


def replicate_seed(seed, c_index, rep):
    """Seed of replicate `rep` at grid position `c_index`; distinct for every pair."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, c_index, rep])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _share(flags, mask):
    total = int(mask.sum())
    return float(flags[mask].sum()) / total if total else float("nan")


def score_depthgram(outliers, truth):
    flagged = np.zeros(truth.config.n, dtype=bool)
    flagged[list(outliers)] = True
    types = truth.types
    out = {f"pc_{k}": _share(flagged, types == k) for k in OUTLIER_TYPES}
    out["pf"] = _share(flagged, types == "typical")
    return out


def score_marginal(flags, truth):
    clean = ~truth.contamination_mask()
    return {
        "marginal_pc_magnitude": _share(flags.magnitude, truth.contamination_mask("magnitude")),
        "marginal_pf_magnitude": _share(flags.magnitude, clean),
        "marginal_pc_shape": _share(flags.shape, truth.contamination_mask("shape")),
        "marginal_pf_shape": _share(flags.shape, clean),
    }


@dataclass
class StudyConfig:
    model: int
    p: int = 50
    c_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    replicates: int = 200
    seed: int = 0
    n: int = 100
    N: int = 100
    F: float = 1.5
    marginal: bool = True
    threads: int = 1
    keep_points: bool = True


@dataclass
class StudySummary:
    config: StudyConfig
    rows: list = field(default_factory=list)  # one dict per c: mean/std of each metric
    replicates: list = field(default_factory=list)  # one dict per (c, rep)
    points: list = field(default_factory=list)  # pooled DepthGram points

    def row(self, c):
        for r in self.rows:
            if r["c"] == c:
                return r
        raise KeyError(f"no configuration with c={c}")

    def to_dict(self):
        cfg = self.config
        return {"model": cfg.model, "n": cfg.n, "p": cfg.p, "N": cfg.N, "F": cfg.F,
                "replicates": cfg.replicates, "seed": cfg.seed,
                "c_grid": list(cfg.c_grid), "summary": self.rows}

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "summary.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True, allow_nan=True)
            fh.write("\n")
        if self.rows:
            with open(out / "summary.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
                w.writeheader()
                w.writerows({k: fmt_float(v) if isinstance(v, float) else v
                             for k, v in r.items()} for r in self.rows)
        if self.replicates:
            with open(out / "replicates.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(self.replicates[0]))
                w.writeheader()
                w.writerows({k: fmt_float(v) if isinstance(v, float) else v
                             for k, v in r.items()} for r in self.replicates)
        if self.points:
            with open(out / "points.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["c", "replicate", "observation", "class", "variant", "dg1", "dg2"])
                for pt in self.points:
                    w.writerow([fmt_float(pt[0]), pt[1], pt[2], pt[3], pt[4],
                                fmt_float(pt[5]), fmt_float(pt[6])])
        return out


def _summarize(c, reps, metrics):
    row = {"c": c}
    for k in metrics:
        vals = np.array([r[k] for r in reps], dtype=np.float64)
        ok = vals[~np.isnan(vals)]
        row[f"{k}_mean"] = float(ok.mean()) if ok.size else float("nan")
        row[f"{k}_std"] = float(ok.std(ddof=1)) if ok.size > 1 else (0.0 if ok.size else float("nan"))
    return row


def run_study(config, progress=None):
    """Simulate and analyze every (c, replicate) pair and aggregate the rates.

    `progress`, if given, is called as ``progress(c, rep)`` after each replicate.
    """
    summary = StudySummary(config)
    metrics = DEPTHGRAM_METRICS + (MARGINAL_METRICS if config.marginal else ())
    for ci, c in enumerate(config.c_grid):
        reps = []
        for rep in range(config.replicates):
            mc = ModelConfig(config.model, n=config.n, p=config.p, N=config.N, c=float(c),
                             seed=replicate_seed(config.seed, ci, rep))
            src = SyntheticSource(mc)
            report = analyze(src, F=config.F, run_marginal=config.marginal,
                             threads=config.threads)
            scores = score_depthgram(report.outliers, src.truth)
            if config.marginal:
                scores.update(score_marginal(report.marginal, src.truth))
            reps.append(scores)
            summary.replicates.append({"c": float(c), "replicate": rep + 1, **scores})
            if config.keep_points:
                types = src.truth.types
                for v in VARIANTS:
                    pts = report.depthgrams[v].points
                    for i in range(mc.n):
                        summary.points.append((float(c), rep + 1, i + 1, str(types[i]), v,
                                               float(pts[i, 0]), float(pts[i, 1])))
            if progress is not None:
                progress(c, rep)
        summary.rows.append(_summarize(float(c), reps, metrics))
    return summary

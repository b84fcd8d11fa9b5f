"""Cross-validated link prediction, ROC curves and the AUC table."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import FoldAssignment, assign_folds, mask_fold
from .mcmc import SamplerConfig, posterior_predictive_mean, run_chain

log = logging.getLogger(__name__)

__all__ = [
    "PredictionMatrix",
    "RocCurve",
    "fold_seed",
    "cross_validate",
    "roc_curve",
    "auc_score",
    "auc_table",
    "write_auc_table",
    "read_auc_table",
    "write_predictions",
    "write_roc",
]


@dataclass
class PredictionMatrix:
    """Out-of-sample predictive means, one per dyad.

    ``truth`` is the event "y above the lowest observed level"; ``scored``
    marks dyads that were held out in some fold.
    """

    yhat: np.ndarray
    folds: FoldAssignment
    truth: np.ndarray
    scored: np.ndarray


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def fold_seed(seed, s):
    """Seed of fold ``s``; depends only on the global seed and the fold index."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(s),))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _fit_fold(args):
    Y, X, kind, K, config, prior, folds, s = args
    train = mask_fold(Y, folds, s)
    cfg = replace(config, seed=fold_seed(config.seed, s))
    trace = run_chain(train, X, kind, K, cfg, prior)
    members = folds.members(s)
    log.info("fold %d/%d (%s, K=%d) done", s, folds.F, kind, K)
    return s, posterior_predictive_mean(trace, members), trace.acceptance_rate


def cross_validate(Y, X, kind, K, F=5, config=None, prior=None, jobs=1, folds=None):
    """F-fold cross-validated predictions of the event ``y > lowest level``.

    Each fold's chain sees only the other folds' values; held-out values
    are never passed to the sampler.  Results do not depend on ``jobs``.
    """
    config = SamplerConfig() if config is None else config
    folds = assign_folds(Y, F, config.seed) if folds is None else folds
    tasks = [(Y, X, kind, K, config, prior, folds, s) for s in range(1, folds.F + 1)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_fit_fold, tasks))
    else:
        results = [_fit_fold(t) for t in tasks]
    yhat = np.full(Y.n_dyads, np.nan)
    for s, pred, _ in sorted(results, key=lambda r: r[0]):
        yhat[folds.members(s)] = pred
    lowest = Y.value_levels[0]
    return PredictionMatrix(yhat, folds, Y.values > lowest, folds.fold > 0)


def auc_score(scores, truth):
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    return roc_curve(scores, truth).auc


def roc_curve(scores, truth=None):
    """ROC points (one per distinct score) and trapezoidal AUC."""
    if isinstance(scores, PredictionMatrix):
        pred = scores
        scores, truth = pred.yhat[pred.scored], pred.truth[pred.scored]
    scores = np.asarray(scores, float)
    truth = np.asarray(truth, bool)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positive and negative cases")
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(t)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, auc)


def auc_table(datasets, models=("dist", "class", "eigen"), Ks=(3, 5, 10), F=5,
              config=None, jobs=1):
    """Cross-validated AUC for every dataset x model x K.

    ``datasets`` maps a name to a Sociomatrix or to ``(Sociomatrix, covariates)``.
    Returns ``{(name, model, K): auc}``.
    """
    out = {}
    for name, d in datasets.items():
        Y, X = d if isinstance(d, tuple) else (d, None)
        for model in models:
            for K in Ks:
                pred = cross_validate(Y, X, model, K, F, config, jobs=jobs)
                out[(name, model, K)] = roc_curve(pred).auc
                log.info("%s %s K=%d AUC=%.3f", name, model, K, out[(name, model, K)])
    return out


def write_auc_table(table, path):
    """CSV with one row per K and one column per dataset/model; 2 decimals."""
    names = list(dict.fromkeys(k[0] for k in table))
    models = list(dict.fromkeys(k[1] for k in table))
    Ks = sorted({k[2] for k in table})
    cols = [(d, m) for d in names for m in models if any((d, m, K) in table for K in Ks)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K"] + [f"{d}/{m}" for d, m in cols])
        for K in Ks:
            row = [K]
            for d, m in cols:
                v = table.get((d, m, K))
                row.append("" if v is None else f"{v:.2f}")
            w.writerow(row)


def read_auc_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = [tuple(c.split("/", 1)) for c in rows[0][1:]]
    out = {}
    for row in rows[1:]:
        K = int(row[0])
        for (d, m), v in zip(cols, row[1:]):
            if v != "":
                out[(d, m, K)] = float(v)
    return out


def write_predictions(Y, pred, path):
    """``i, j, fold, truth, yhat`` for every held-out dyad."""
    iu, ju = Y.pairs()
    with open(path, "w", newline="") as fh:
        fh.write("i\tj\tfold\ttruth\tyhat\n")
        for k in np.flatnonzero(pred.scored):
            fh.write(f"{Y.labels[iu[k]]}\t{Y.labels[ju[k]]}\t{pred.folds.fold[k]}\t"
                     f"{int(pred.truth[k])}\t{float(pred.yhat[k])!r}\n")


def write_roc(roc, path):
    with open(path, "w", newline="") as fh:
        fh.write("fpr\ttpr\n")
        for f, t in zip(roc.fpr, roc.tpr):
            fh.write(f"{float(f)!r}\t{float(t)!r}\n")

"""Test metrics and machine-readable run reports.

Report schema (JSON object, ``format == "dlvkl-report"``, ``version == 1``):

``run``
    Free-form metadata: ``config`` (model settings), ``schedule``,
    ``seed``, ``data`` description.
``metrics``
    ``rmse`` (null for classification), ``nll``, ``accuracy`` (null for
    regression), ``n_test``.
``trace``
    List of ``[iteration, elbo]`` pairs.
``wall_time``
    Training time in seconds.

The trace is also written as CSV with header ``iteration,elbo``; each row is
the integer iteration and ``repr`` of the float ELBO, ``\\n`` terminated.
"""

import json
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from . import rng as rngmod

REPORT_FORMAT = "dlvkl-report"
REPORT_VERSION = 1
LOG_2PI = np.log(2 * np.pi)


class Metrics(NamedTuple):
    rmse: Optional[float]
    nll: float
    accuracy: Optional[float]
    n_test: int

    def to_dict(self):
        return self._asdict()


def mixture_nll(Y, comp_means, comp_vars):
    """Mean negative log density of ``Y`` under equal-weight Gaussian mixtures.

    ``comp_means``/``comp_vars`` are ``s x n x d``; output dimensions are
    independent within a component.
    """
    Y = np.asarray(Y, dtype=float)
    logp = -0.5 * np.sum(LOG_2PI + np.log(comp_vars) + (Y[None] - comp_means) ** 2 / comp_vars, axis=-1)
    s = comp_means.shape[0]
    return float(-np.mean(logsumexp(logp, axis=0) - np.log(s)))


def evaluate(ms, test, s=None, rng=None):
    """RMSE/NLL (regression) or accuracy/NLL (classification) on ``test``.

    ``test`` must already be standardized with the training statistics;
    metrics are reported in that standardized space.
    """
    Y = np.asarray(test.Y, dtype=float)
    if rng is None:
        rng = rngmod.stream(ms.config.seed, "predict")
    pred = ms.predict(test.X, s=s, rng=rng)
    n = Y.shape[0]
    if pred.probs is None:
        rmse = float(np.sqrt(np.mean((pred.mean - Y) ** 2)))
        return Metrics(rmse, mixture_nll(Y, pred.comp_means, pred.comp_vars), None, n)
    labels = Y[:, 0].astype(int)
    p_true = np.clip(pred.probs[np.arange(n), labels], 1e-300, None)
    acc = float(np.mean(np.argmax(pred.probs, axis=1) == labels))
    return Metrics(None, float(-np.mean(np.log(p_true))), acc, n)


def write_trace_csv(trace, path):
    with Path(path).open("w", newline="") as fh:
        fh.write("iteration,elbo\n")
        for it, elbo in trace.rows():
            fh.write(f"{int(it)},{float(elbo)!r}\n")


def read_trace_csv(path):
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != "iteration,elbo":
        raise ValueError(f"{path} is not a trace file")
    return [(int(a), float(b)) for a, b in (r.split(",") for r in rows[1:])]


def write_report(run, metrics, trace, path, trace_path=None):
    """Write the JSON report to ``path`` and the trace CSV next to it.

    Returns the paths written as ``(report_path, trace_path)``.
    """
    path = Path(path)
    trace_path = path.with_name("trace.csv") if trace_path is None else Path(trace_path)
    doc = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "run": run,
        "metrics": metrics.to_dict() if metrics is not None else None,
        "trace": [[it, elbo] for it, elbo in trace.rows()],
        "wall_time": trace.wall_time,
    }
    path.write_text(json.dumps(doc, indent=1, default=_jsonable) + "\n")
    write_trace_csv(trace, trace_path)
    return path, trace_path


def read_report(path):
    """Parse a report; ``metrics`` comes back as :class:`Metrics`."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path} is not a report file")
    if doc.get("metrics") is not None:
        doc["metrics"] = Metrics(**doc["metrics"])
    return doc


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")

"""Scripted toy experiments behind ``dlvkl reproduce``.

Each case trains a handful of models on a toy data set, writes every run
to its own sub-directory (``model.json``, ``report.json``, ``trace.csv``)
and adds CSV files for plotting:

``grid.csv``
    Regression cases: ``x,z,mean,var`` on an even grid over the input
    range (standardized units; ``z`` is the noise-free latent code).
    Classification: ``x0,x1,p1`` on a 2-D grid.
``latent.csv``
    Classification cases: ``z0,z1,label`` for the training points.

``summary.json`` collects the metrics plus case-specific diagnostics.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .cli import RunConfig, run_training
from .errors import UnknownCase

BETAS = (1.0, 1e-1, 1e-2, 1e-4)
FLOW_GRID = ((1.0, 1), (1.0, 15), (15.0, 10), (15.0, 50))


def _runs(case):
    if case == "fig2":
        return "step", [
            ("dlvkl-iid", dict(variant="dlvkl", prior="iid", beta=1.0)),
            ("dlvkl-sde", dict(variant="dlvkl", prior="sde", beta=1.0)),
            ("dlvkl-beta", dict(variant="dlvkl", prior="sde", beta=1e-2)),
            ("dlvkl-nsde", dict(variant="dlvkl-nsde", prior="sde", beta=1e-2)),
        ]
    if case == "prop1":
        return "step", [
            ("dlvkl-iid", dict(variant="dlvkl", prior="iid", beta=1.0)),
            ("dlvkl-sde", dict(variant="dlvkl", prior="sde", beta=1.0)),
        ]
    if case == "fig3":
        return "classify2d", [(f"beta-{b:g}", dict(variant="dlvkl-nsde", beta=b)) for b in BETAS]
    if case == "beta-sweep":
        return "step", [(f"beta-{b:g}", dict(variant="dlvkl-nsde", beta=b)) for b in BETAS]
    if case == "flow-sweep":
        return "step", [(f"T{T:g}-L{L}", dict(variant="dlvkl-nsde", T=T, L=L)) for T, L in FLOW_GRID]
    raise UnknownCase(f"unknown case {case!r}")


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v) for v in row])


def latent_eigen_ratio(Z):
    """Largest over smallest eigenvalue of the sample covariance of ``Z``."""
    ev = np.linalg.eigvalsh(np.cov(np.asarray(Z, dtype=float).T))
    return float(ev[-1] / max(ev[0], 1e-300))


def run_case(case, out_dir, seed=0, iterations=None, log=print):
    """Run every configuration of ``case``; returns the summary dict."""
    toy, runs = _runs(case)
    out_dir = Path(out_dir)
    summary = {"case": case, "seed": seed, "runs": {}}
    for name, overrides in runs:
        model = dict(overrides, seed=seed)
        schedule = {} if iterations is None else {"iterations": iterations}
        run = RunConfig(toy=toy, model=model, schedule=schedule)
        run.validate()
        run_dir = out_dir / name
        ms, metrics, _ = run_training(run, run_dir, log=lambda msg: log(f"[{case}/{name}] {msg}"))
        entry = {"metrics": metrics.to_dict(), "overrides": overrides}
        train, _ = run.load_data()
        if toy == "step":
            grid = np.linspace(train.X.min() - 0.2, train.X.max() + 0.2, 201)[:, None]
            pred = ms.predict(grid)
            z = ms.latent_mean(grid)
            _write_csv(run_dir / "grid.csv", ["x", "z", "mean", "var"], np.c_[grid, z[:, :1], pred.mean, pred.var])
        else:
            g = np.linspace(-2.5, 2.5, 41)
            gx, gy = np.meshgrid(g, g)
            pts = np.c_[gx.ravel(), gy.ravel()]
            pred = ms.predict(pts)
            _write_csv(run_dir / "grid.csv", ["x0", "x1", "p1"], np.c_[pts, pred.probs[:, 1]])
            z = ms.latent_mean(train.X)
            _write_csv(run_dir / "latent.csv", ["z0", "z1", "label"], np.c_[z, train.Y[:, 0]])
            entry["latent_eigen_ratio"] = latent_eigen_ratio(z)
        if ms.config.has_latent_kl:
            rep = ms.collapse_diagnostic(train.X)
            entry["collapse"] = {"kl_z": rep.kl_z, "mean_spread": rep.mean_spread, "collapsed": rep.collapsed}
        summary["runs"][name] = entry
    if case == "fig3":
        ratios = [summary["runs"][f"beta-{b:g}"]["latent_eigen_ratio"] for b in BETAS]
        summary["eigen_ratio_increasing"] = bool(np.all(np.diff(ratios) > 0))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return summary

"""Command-line entry points.

``dlvkl train``
    Train one model on a CSV file or a toy generator and write
    ``model.json``, ``report.json`` and ``trace.csv`` to the output directory.
``dlvkl reproduce CASE``
    Run a scripted set of toy experiments (``fig2``, ``fig3``, ``prop1``,
    ``beta-sweep``, ``flow-sweep``) and write one sub-directory per run plus
    ``summary.json``.

A config file holds flat ``key = value`` lines (``#`` starts a comment);
keys are the model, schedule and run fields listed by ``--help``. Flags
override the file. The output directory defaults to ``$DLVKL_OUT`` or
``runs``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import data as datamod
from .errors import (
    ConfigError,
    EmptyDataset,
    FactorizationFailure,
    InvalidLabel,
    NonFiniteGradient,
    NonFiniteLoss,
    ParseError,
    SchemaMismatch,
    UnknownCase,
)
from .model import ModelConfig, ModelState
from .report import evaluate, write_report
from .train import TrainSchedule, fit

OUT_ENV = "DLVKL_OUT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SMALL_DATA = 2000  # below this many rows: beta = 1 and 3000 iterations
TOYS = ("step", "classify2d")
CASES = ("fig2", "fig3", "prop1", "beta-sweep", "flow-sweep")


@dataclass
class RunConfig:
    """Everything one training run needs.

    ``model`` and ``schedule`` hold overrides of :class:`ModelConfig` and
    :class:`TrainSchedule` fields; unset fields get data-dependent defaults
    in :meth:`resolve`.
    """

    data: str = None
    toy: str = None
    out: str = None
    n_outputs: int = 1
    test_frac: float = 0.1
    toy_n: int = None
    toy_test_n: int = 200
    toy_noise: float = 0.0
    model: dict = None
    schedule: dict = None

    RUN_KEYS = ("data", "toy", "out", "n_outputs", "test_frac", "toy_n", "toy_test_n", "toy_noise")

    @classmethod
    def from_flat(cls, flat):
        """Split a flat ``{key: value}`` mapping into run, model and schedule parts."""
        model_keys = {f.name: f for f in fields(ModelConfig)}
        sched_keys = {f.name: f for f in fields(TrainSchedule)}
        run, model, sched = {}, {}, {}
        for key, val in flat.items():
            if key in cls.RUN_KEYS:
                run[key] = val
            elif key in model_keys or key in sched_keys:
                if key in model_keys:
                    model[key] = val
                if key in sched_keys:
                    sched[key] = val
            else:
                raise ConfigError("unknown configuration key", key)
        cfg = cls(**run, model=model, schedule=sched)
        cfg.validate()
        return cfg

    def validate(self):
        if (self.data is None) == (self.toy is None):
            raise ConfigError("give exactly one of a data file or a toy generator", "data")
        if self.toy is not None and self.toy not in TOYS:
            raise ConfigError(f"must be one of {TOYS}", "toy")
        if not 0 < self.test_frac < 1:
            raise ConfigError("must lie strictly between 0 and 1", "test_frac")

    def load_data(self):
        """Standardized ``(train, test)`` data sets."""
        seed = int(self.model.get("seed", 0))
        if self.toy == "step":
            n = self.toy_n or 50
            train_raw = datamod.toy_step(n, seed, self.toy_noise)
            test_raw = datamod.toy_step(self.toy_test_n, seed + 1_000_003, self.toy_noise)
        elif self.toy == "classify2d":
            n = self.toy_n or 200
            train_raw = datamod.toy_classify2d(n, seed)
            test_raw = datamod.toy_classify2d(self.toy_test_n, seed + 1_000_003)
        else:
            task = self.model.get("task", "regression")
            full = datamod.load_table(self.data, self.n_outputs, task)
            train_raw, test_raw = datamod.split(full, self.test_frac, seed)
        train, stats = datamod.standardize(train_raw)
        return train, datamod.apply_stats(test_raw, stats)

    def resolve(self, train):
        """Concrete model config and schedule, filling data-size dependent defaults."""
        n = train.n
        model = dict(self.model)
        sched = dict(self.schedule)
        model.setdefault("task", train.task)
        model["d_x"] = train.d_x
        model["d_y"] = train.d_y
        if train.task == "multiclass":
            model.setdefault("num_classes", train.num_classes)
        if self.toy is not None:
            model.setdefault("m", 20)
            model.setdefault("lengthscale_init", 1.0)
            model.setdefault("beta", 1e-2)
            sched.setdefault("batch_size", min(64, n))
            sched.setdefault("iterations", 5000)
        else:
            model.setdefault("beta", 1.0 if n < SMALL_DATA else 1e-2)
            sched.setdefault("iterations", 3000 if n < SMALL_DATA else 20000)
        model.setdefault("m", min(100, n))
        sched.setdefault("seed", model.get("seed", 0))
        return ModelConfig(**model), TrainSchedule(**sched)


def parse_config_file(path):
    """Read flat ``key = value`` lines into a dict of typed values."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", None)
        key, val = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = _coerce(key, val)
    return out


_FIELD_TYPES = {
    **{f.name: f.type for f in fields(ModelConfig)},
    **{f.name: f.type for f in fields(TrainSchedule)},
    **{f.name: f.type for f in fields(RunConfig)},
}


def _coerce(key, text):
    kind = _FIELD_TYPES.get(key.replace("-", "_"), "str")
    kind = kind if isinstance(kind, str) else kind.__name__
    if text.lower() in ("none", "null", ""):
        return None
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
    except ValueError:
        raise ConfigError(f"cannot read {text!r} as {kind}", key) from None
    return text


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p):
    g = p.add_argument_group("run")
    g.add_argument("--config", help="flat key=value config file; flags override it")
    g.add_argument("--data", help="CSV with a header row; outputs are the trailing columns")
    g.add_argument("--toy", choices=TOYS, help="use a toy generator instead of --data")
    g.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs)")
    g.add_argument("--seed", type=int, help="seed for split, initialization, minibatches and noise (default: 0)")
    g.add_argument("--n-outputs", type=int, help="number of trailing output columns in --data (default: 1)")
    g.add_argument("--test-frac", type=float, help="held-out fraction for --data (default: 0.1)")
    g = p.add_argument_group("model")
    g.add_argument("--variant", choices=("svgp", "dkl", "dlvkl", "dlvkl-nsde"), help="model variant (default: dlvkl-nsde)")
    g.add_argument("--task", choices=("regression", "binary", "multiclass"), help="task of --data (default: regression)")
    g.add_argument(
        "--beta", type=float, help="latent KL weight (default: 1 below 2000 rows, else 1e-2; toys 1e-2)"
    )
    g.add_argument("--flow-time", type=float, help="flow time T (default: 1.0)")
    g.add_argument("--flow-steps", type=int, help="Euler steps L (default: 10)")
    g.add_argument("--prior", choices=("iid", "sde", "hybrid"), help="latent prior (default: sde)")
    g.add_argument("--m", type=int, help="inducing points (default: 100; toys 20)")
    g.add_argument("--d-z", type=int, help="latent width (default: input width)")
    g.add_argument("--s-predict", type=int, help="posterior draws when predicting (default: 10)")
    g = p.add_argument_group("optimization")
    g.add_argument(
        "--iterations", type=int, help="Adam iterations (default: 3000 below 2000 rows, else 20000; toys 5000)"
    )
    g.add_argument("--batch-size", type=int, help="minibatch size (default: 256; toys min(64, n))")
    g.add_argument("--learning-rate", type=float, help="Adam step size (default: 5e-3)")
    g.add_argument("--eval-every", type=int, help="trace interval in iterations (default: 50)")


_FLAG_KEYS = {
    "data": "data",
    "toy": "toy",
    "seed": "seed",
    "n_outputs": "n_outputs",
    "test_frac": "test_frac",
    "variant": "variant",
    "task": "task",
    "beta": "beta",
    "flow_time": "T",
    "flow_steps": "L",
    "prior": "prior",
    "m": "m",
    "d_z": "d_z",
    "s_predict": "s_predict",
    "iterations": "iterations",
    "batch_size": "batch_size",
    "learning_rate": "learning_rate",
    "eval_every": "eval_every",
}


def build_parser():
    p = _Parser(prog="dlvkl", description="Deep latent-variable kernel learning.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    t = sub.add_parser("train", help="train one model and write model, report and trace")
    _add_run_flags(t)
    r = sub.add_parser("reproduce", help="run a scripted toy experiment")
    r.add_argument("case", help=f"one of {', '.join(CASES)}")
    r.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs)")
    r.add_argument("--seed", type=int, default=0, help="seed for every run in the case")
    r.add_argument("--iterations", type=int, help="override the iteration count of every run")
    return p


def _flat_from_args(args):
    flat = parse_config_file(args.config) if args.config else {}
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            flat[key] = val
    # a data source given on the command line replaces one from the file
    if args.data is not None:
        flat.pop("toy", None)
    if args.toy is not None:
        flat.pop("data", None)
    return flat


def _default_out(out):
    return Path(out or os.environ.get(OUT_ENV) or "runs")


def run_training(run, out_dir, log=print):
    """Train according to ``run`` and write outputs into ``out_dir``.

    Returns ``(model_state, metrics, report_path)``.
    """
    train, test = run.load_data()
    cfg, sched = run.resolve(train)
    ms = ModelState.create(cfg, train.X)
    fitted, trace = fit(ms, train.X, train.Y, sched)
    metrics = evaluate(fitted, test)
    out_dir.mkdir(parents=True, exist_ok=True)
    fitted.save(out_dir / "model.json")
    meta = {
        "config": cfg.to_dict(),
        "schedule": vars(sched),
        "seed": sched.seed,
        "data": run.data if run.data is not None else f"toy:{run.toy}",
        "n_train": train.n,
        "n_test": test.n,
        "n_rejected": train.n_rejected,
        "warnings": train.stats.warnings,
    }
    report_path, _ = write_report(meta, metrics, trace, out_dir / "report.json")
    log(f"{cfg.variant}: " + ", ".join(f"{k}={v:.4f}" for k, v in metrics.to_dict().items() if isinstance(v, float)))
    return fitted, metrics, report_path


def cmd_train(args):
    run = RunConfig.from_flat(_flat_from_args(args))
    if run.data is not None and not Path(run.data).is_file():
        raise FileNotFoundError(run.data)
    out = _default_out(args.out or run.out)
    _, _, path = run_training(run, out)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_reproduce(args):
    from .reproduce import run_case

    if args.case not in CASES:
        raise UnknownCase(f"unknown case {args.case!r}; choose from {', '.join(CASES)}")
    out = _default_out(args.out) / args.case
    summary = run_case(args.case, out, seed=args.seed, iterations=args.iterations)
    print(json.dumps(summary, indent=1, default=_num))
    return EXIT_OK


def _num(x):
    if isinstance(x, (np.generic,)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(type(x).__name__)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"train": cmd_train, "reproduce": cmd_reproduce}[args.command]
    try:
        return handler(args)
    except (ConfigError, UnknownCase) as exc:
        print(f"dlvkl: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"dlvkl: data file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except (ParseError, SchemaMismatch, EmptyDataset, InvalidLabel) as exc:
        print(f"dlvkl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLoss, NonFiniteGradient, FactorizationFailure) as exc:
        print(f"dlvkl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

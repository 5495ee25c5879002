"""Model variants, their evidence lower bounds, prediction and diagnostics.

Four variants share one sparse GP head:

``svgp``
    GP directly on the inputs.
``dkl``
    Deterministic MLP encoder ``z = Linear(MLP(x))`` in front of the GP.
``dlvkl``
    Gaussian amortized encoder ``q(z|x)``; the latent KL is analytic.
``dlvkl-nsde``
    Latent codes produced by a neural SDE flow; the latent KL is a
    mixture-based Monte Carlo estimate.

All objectives are written against a parameter mapping so they can be
evaluated on plain arrays or differentiated through the autodiff tape.
"""

import json
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from . import rng as rngmod
from .autodiff import ops, value
from .errors import ConfigError, NonFiniteLoss
from .gradengine import NoiseBundle, ParamSet
from .kernel import KernelParams
from .latent import (
    IID,
    PRIOR_KINDS,
    EncoderParams,
    Projection,
    encode_gaussian,
    gaussian_kl_diag,
    prior_mean_projection,
)
from .likelihood import BERNOULLI, CATEGORICAL, GAUSSIAN, Likelihood, expected_log_lik, predictive
from .nsde import FlowParams, FlowTrajectory, kl_z_terms, sample_flow
from .svgp import (
    SparseGPState,
    build_q_chols,
    init_inducing,
    kl_u,
    kl_u_whitened,
    kmm_factor,
    qf_moments,
    qf_moments_whitened,
)

VARIANTS = ("svgp", "dkl", "dlvkl", "dlvkl-nsde")
TASKS = ("regression", "binary", "multiclass", "unsupervised")
FLOW_INPUTS = ("projection", "encoder")
MODEL_FORMAT = "dlvkl-model"
MODEL_VERSION = 1

COLLAPSE_KL = 1e-3
COLLAPSE_SPREAD = 1e-3


@dataclass
class ModelConfig:
    """Architecture and prior settings for one model.

    ``d_z`` defaults to ``d_x``; ``L`` defaults to 10 for ``dlvkl-nsde``
    and is fixed to 1 for ``dlvkl``. ``d_y`` is the observed output width
    (1 for classification, whose latent width comes from ``num_classes``).
    With ``whiten`` the ``q.*`` parameters describe ``q(v)`` where
    ``u = L_m v``, so the zero-mean identity initialization is the prior.
    """

    variant: str = "dlvkl-nsde"
    task: str = "regression"
    d_x: int = 1
    d_z: int = None
    d_y: int = 1
    m: int = 100
    beta: float = 1e-2
    T: float = 1.0
    L: int = None
    s_predict: int = 10
    prior: str = "sde"
    num_classes: int = 2
    mc_train: int = 8
    mc_eval: int = 64
    hidden_width: int = None
    n_layers: int = 3
    lengthscale_init: float = None
    signal_variance_init: float = 1.0
    noise_variance_init: float = 0.1
    nu0_init: float = None
    flow_input: str = "projection"
    whiten: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"must be one of {VARIANTS}, got {self.variant!r}", "variant")
        if self.task not in TASKS:
            raise ConfigError(f"must be one of {TASKS}, got {self.task!r}", "task")
        if self.prior not in PRIOR_KINDS:
            raise ConfigError(f"must be one of {PRIOR_KINDS}, got {self.prior!r}", "prior")
        if self.flow_input not in FLOW_INPUTS:
            raise ConfigError(f"must be one of {FLOW_INPUTS}", "flow_input")
        if self.task == "unsupervised":
            self.d_x = self.d_y
        if self.d_z is None or self.variant == "svgp":
            if self.variant == "svgp" and self.d_z not in (None, self.d_x):
                raise ConfigError("svgp works on the inputs directly, so d_z must equal d_x", "d_z")
            self.d_z = self.d_x
        if self.L is None:
            self.L = 1 if self.variant == "dlvkl" else 10
        if self.variant == "dlvkl" and self.L != 1:
            raise ConfigError("dlvkl is the single-step case; L must be 1", "L")
        if self.variant == "dlvkl-nsde" and self.flow_input == "projection" and self.d_z < 1:
            raise ConfigError("latent width must be positive", "d_z")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("must lie in [0, 1]", "beta")
        for name in ("d_x", "d_z", "d_y", "m", "L", "s_predict", "mc_train", "mc_eval", "n_layers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("must be a positive count", name)
        if self.T <= 0:
            raise ConfigError("flow time must be positive", "T")
        if self.task == "multiclass" and self.num_classes < 2:
            raise ConfigError("need at least two classes", "num_classes")

    @property
    def likelihood_kind(self):
        return {"binary": BERNOULLI, "multiclass": CATEGORICAL}.get(self.task, GAUSSIAN)

    @property
    def d_f(self):
        """Number of latent GP outputs."""
        if self.task == "binary":
            return 1
        if self.task == "multiclass":
            return self.num_classes
        return self.d_y

    @property
    def has_latent_kl(self):
        return self.variant in ("dlvkl", "dlvkl-nsde")

    @property
    def uses_encoder(self):
        return self.variant in ("dkl", "dlvkl") or (
            self.variant == "dlvkl-nsde" and self.flow_input == "encoder"
        )

    @property
    def nu0_default(self):
        return 0.01 / self.T if self.nu0_init is None else self.nu0_init

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", sorted(unknown)[0])
        return cls(**d)


def init_params(cfg, X, rng):
    """Initial parameters for ``cfg`` given (standardized) training inputs ``X``."""
    p = {}
    ls = cfg.lengthscale_init if cfg.lengthscale_init is not None else 0.1 * np.sqrt(cfg.d_z)
    kp = KernelParams.init(cfg.d_z, ls, cfg.signal_variance_init)
    p["kern.log_ls"] = kp.log_lengthscales
    p["kern.log_sf2"] = kp.log_signal_variance
    if cfg.likelihood_kind == GAUSSIAN:
        p["lik.log_noise"] = np.full(cfg.d_f, np.log(cfg.noise_variance_init))
    m = cfg.m
    p["ind.x"] = init_inducing(X, m, rng)
    p["q.mu"] = np.zeros((m, cfg.d_f))
    p["q.offdiag"] = np.zeros((cfg.d_f, m * (m - 1) // 2))
    p["q.logdiag"] = np.zeros((cfg.d_f, m))
    width = cfg.hidden_width
    if cfg.uses_encoder:
        p.update(
            EncoderParams.init(
                rng, cfg.d_x, cfg.d_z, width, cfg.n_layers, var_head=cfg.variant != "dkl"
            )
        )
    if cfg.variant == "dlvkl-nsde":
        p.update(FlowParams.init(rng, cfg.d_z, cfg.L, cfg.T, width, cfg.n_layers, nu0=cfg.nu0_default))
    elif cfg.variant == "dlvkl" and cfg.prior != IID:
        p["prior.log_nu0"] = np.array([np.log(cfg.nu0_default)])
    return ParamSet(p)


class PredictiveSummary(NamedTuple):
    """Predictions at test points.

    ``comp_means``/``comp_vars`` (``s x n x d``) are the per-draw Gaussian
    predictive components, noise included; ``mean``/``var`` are the mixture
    moments. ``probs`` (``n x k``) is set for classification.
    """

    mean: np.ndarray
    var: np.ndarray
    comp_means: np.ndarray
    comp_vars: np.ndarray
    probs: np.ndarray = None


class CollapseReport(NamedTuple):
    kl_z: float
    mean_spread: float

    @property
    def collapsed(self):
        return self.kl_z < COLLAPSE_KL and self.mean_spread < COLLAPSE_SPREAD


class _Views:
    """Structured views over a flat parameter mapping for one config."""

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.p = params
        self.kernel = KernelParams(params["kern.log_ls"], params["kern.log_sf2"])
        self.lik = Likelihood(
            cfg.likelihood_kind,
            params.get("lik.log_noise"),
            cfg.mc_train,
            cfg.num_classes,
        )
        self.chols = build_q_chols(params["q.offdiag"], params["q.logdiag"])
        self.encoder = (
            EncoderParams(params, cfg.n_layers, var_head=cfg.variant != "dkl") if cfg.uses_encoder else None
        )
        self.flow = (
            FlowParams(params, cfg.T, cfg.L, cfg.n_layers) if cfg.variant == "dlvkl-nsde" else None
        )

    def sgp(self):
        return SparseGPState(self.p["ind.x"], self.p["q.mu"], self.chols, self.kernel)

    def moments(self, Z, Zt, Lm):
        if self.cfg.whiten:
            return qf_moments_whitened(self.kernel, self.p["q.mu"], self.chols, Z, Zt, Lm)
        return qf_moments(self.sgp(), Z, Zt, Lm)

    def kl_u(self, Lm):
        if self.cfg.whiten:
            return kl_u_whitened(self.p["q.mu"], self.chols)
        return kl_u(self.sgp(), Lm=Lm)

    @property
    def log_nu0(self):
        if self.flow is not None:
            return self.flow.log_nu0
        return self.p.get("prior.log_nu0")


def _tile(X, s):
    return X if s == 1 else np.tile(X, (s, 1))


class ModelState:
    """Configuration, trainable parameters and the fitted prior projection."""

    def __init__(self, config, params, projection):
        self.config = config
        self.params = params
        self.projection = projection

    @classmethod
    def create(cls, config, X_train, rng=None):
        """Fresh model; ``X_train`` seeds the inducing inputs and the projection."""
        X_train = np.asarray(X_train, dtype=float)
        if rng is None:
            rng = rngmod.stream(config.seed, "init")
        params = init_params(config, X_train, rng)
        return cls(config, params, Projection.fit(X_train, config.d_z))

    def copy(self):
        return ModelState(self.config, self.params.copy(), self.projection)

    def with_params(self, params):
        return ModelState(self.config, params, self.projection)

    # -- latent codes -------------------------------------------------------

    def noise_shapes(self, n, s=1, lik_samples=None):
        """Shapes of the standard-normal draws one ELBO or prediction pass needs."""
        cfg = self.config
        shapes = {}
        if cfg.variant == "dlvkl" or (cfg.variant == "dlvkl-nsde" and cfg.flow_input == "encoder"):
            shapes["encoder"] = (s * n, cfg.d_z)
        if cfg.variant == "dlvkl-nsde":
            shapes["flow"] = (cfg.L, s * n, cfg.d_z)
        if cfg.likelihood_kind != GAUSSIAN:
            mc = cfg.mc_train if lik_samples is None else lik_samples
            shapes["lik"] = (mc, s * n, cfg.d_f)
        return shapes

    def _prior(self, views, X):
        cfg = self.config
        if cfg.prior == IID:
            return 0.0, 1.0
        mean = prior_mean_projection(self.projection, X)
        return mean, ops.exp(views.log_nu0) * cfg.T

    def _latent(self, views, X, noise, s=1, with_kl=True):
        """Latent codes for ``s`` stacked copies of ``X`` and per-point KL terms.

        Returns ``(Z, kl, Ztilde)`` with ``Z`` of shape ``(s*n, d_z)``,
        ``kl`` a length-``n`` array (or None) and ``Ztilde`` the latent
        inducing positions.
        """
        cfg = self.config
        ind = views.p["ind.x"]
        Xs = _tile(X, s)
        if cfg.variant == "svgp":
            return Xs, None, ind
        if cfg.variant == "dkl":
            enc = views.encoder
            return enc.mean(Xs), None, enc.mean(ind)
        if cfg.variant == "dlvkl":
            mu, nu = encode_gaussian(views.encoder, Xs)
            Z = mu + ops.sqrt(nu) * noise["encoder"]
            kl = None
            if with_kl and cfg.beta > 0:
                pm, pv = self._prior(views, X)
                kl = gaussian_kl_diag(mu, nu, _tile(pm, s) if np.ndim(pm) else pm, pv)
                if s > 1:
                    kl = ops.mean(ops.reshape(kl, (s, -1)), axis=0)
            return Z, kl, views.encoder.mean(ind)
        # dlvkl-nsde
        if cfg.flow_input == "encoder":
            mu, nu = encode_gaussian(views.encoder, Xs)
            Z0 = mu + ops.sqrt(nu) * noise["encoder"]
            Zt0 = views.encoder.mean(ind)
        else:
            Z0 = prior_mean_projection(self.projection, Xs)
            Zt0 = _project_inducing(self.projection, ind)
        # one pass over data and inducing rows; the inducing rows get zero
        # noise, so they follow the drift path exactly
        rows = value(Z0).shape[0]
        eps = noise["flow"]
        eps = np.concatenate([eps, np.zeros((eps.shape[0], value(Zt0).shape[0], eps.shape[2]))], axis=1)
        joint = sample_flow(views.flow, ops.concatenate([Z0, Zt0], axis=0), eps)
        traj = FlowTrajectory(
            [joint.final[:rows]], [joint.step_means[-1][:rows]], [joint.step_vars[-1][:rows]]
        )
        kl = None
        if with_kl and cfg.beta > 0:
            pm, pv = self._prior(views, X)
            kl = kl_z_terms(traj, s, pm, pv)
        return traj.final, kl, joint.final[rows:]

    # -- objective ----------------------------------------------------------

    def objective(self, params, X, Y, noise, n_total=None):
        """Evidence lower bound on a batch, as a function of ``params``.

        The likelihood and latent-KL terms are rescaled by
        ``n_total / batch_size``; the inducing KL enters once.
        """
        cfg = self.config
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        n_total = n if n_total is None else n_total
        views = _Views(cfg, params)
        Z, kl, Zt = self._latent(views, X, noise)
        Lm = kmm_factor(views.kernel, Zt)
        mu, var = views.moments(Z, Zt, Lm)
        ell = expected_log_lik(views.lik, Y, mu, var, noise.get("lik") if noise else None)
        scale = n_total / n
        total = scale * ell - views.kl_u(Lm)
        if kl is not None:
            total = total - cfg.beta * scale * ops.sum(kl)
        return total

    def elbo(self, X, Y, noise, n_total=None):
        """Evidence lower bound at the current parameters (a float)."""
        val = float(value(self.objective(dict(self.params), X, Y, noise, n_total)))
        if not np.isfinite(val):
            raise NonFiniteLoss(f"ELBO evaluated to {val}")
        return val

    def draw_noise(self, rng, n, s=1, lik_samples=None):
        return NoiseBundle.draw(rng, self.noise_shapes(n, s, lik_samples))

    # -- prediction ---------------------------------------------------------

    def predict(self, Xstar, s=None, noise=None, rng=None, common_noise=False, chunk=2048):
        """Predictive summary averaged over ``s`` latent draws.

        Deterministic variants (``svgp``, ``dkl``) use a single draw. With
        ``common_noise`` every test point shares the same standard-normal
        draws, so predictions differ across points only through the inputs.
        """
        cfg = self.config
        Xstar = np.asarray(Xstar, dtype=float)
        s = cfg.s_predict if s is None else s
        if cfg.variant in ("svgp", "dkl"):
            s = 1
        if rng is None:
            rng = rngmod.stream(cfg.seed, "predict")
        if noise is None:
            noise = self._prediction_noise(rng, Xstar.shape[0], s, common_noise)
        parts = []
        for lo in range(0, Xstar.shape[0], chunk):
            hi = min(lo + chunk, Xstar.shape[0])
            sub = NoiseBundle({k: _slice_noise(v, lo, hi, s, Xstar.shape[0]) for k, v in noise.draws.items()})
            parts.append(self._predict_block(Xstar[lo:hi], s, sub))
        if len(parts) == 1:
            return parts[0]
        cat = lambda i, axis: np.concatenate([p[i] for p in parts], axis=axis)
        probs = cat(4, 0) if parts[0].probs is not None else None
        return PredictiveSummary(cat(0, 0), cat(1, 0), cat(2, 1), cat(3, 1), probs)

    def _prediction_noise(self, rng, n, s, common):
        shapes = self.noise_shapes(1 if common else n, s, self.config.mc_eval)
        bundle = NoiseBundle.draw(rng, shapes)
        if not common:
            return bundle
        out = {}
        for k, v in bundle.draws.items():
            axis = 0 if v.ndim == 2 else 1
            out[k] = np.repeat(v, n, axis=axis)
        return NoiseBundle(out)

    def _predict_block(self, X, s, noise):
        cfg = self.config
        n = X.shape[0]
        views = _Views(cfg, dict(self.params))
        Z, _, Zt = self._latent(views, X, noise, s=s, with_kl=False)
        mu, var = views.moments(Z, Zt, kmm_factor(views.kernel, Zt))
        mu = np.asarray(mu).reshape(s, n, cfg.d_f)
        var = np.asarray(var).reshape(s, n, cfg.d_f)
        if cfg.likelihood_kind == GAUSSIAN:
            noise_var = np.exp(np.asarray(self.params["lik.log_noise"]))
            comp_vars = var + noise_var
            mean = mu.mean(axis=0)
            total = comp_vars.mean(axis=0) + (mu**2).mean(axis=0) - mean**2
            return PredictiveSummary(mean, np.maximum(total, 0.0), mu, comp_vars)
        lik = Likelihood(cfg.likelihood_kind, None, cfg.mc_eval, cfg.num_classes)
        probs = predictive(lik, mu.reshape(s * n, -1), var.reshape(s * n, -1), noise["lik"])
        probs = probs.reshape(s, n, -1).mean(axis=0)
        return PredictiveSummary(mu.mean(axis=0), var.mean(axis=0), mu, var, probs)

    # -- diagnostics --------------------------------------------------------

    def latent_mean(self, X):
        """Noise-free latent codes (encoder mean, or the flow's drift path)."""
        cfg = self.config
        X = np.asarray(X, dtype=float)
        views = _Views(cfg, dict(self.params))
        if cfg.variant == "svgp":
            return X
        if cfg.variant in ("dkl", "dlvkl"):
            return np.asarray(views.encoder.mean(X))
        Z0 = views.encoder.mean(X) if cfg.flow_input == "encoder" else prior_mean_projection(self.projection, X)
        return np.asarray(sample_flow(views.flow, Z0, None).final)

    def kl_z_per_point(self, X, s=256, rng=None):
        """Average latent KL per point (analytic for ``dlvkl``, MC for the flow)."""
        cfg = self.config
        X = np.asarray(X, dtype=float)
        if not cfg.has_latent_kl:
            return 0.0
        views = _Views(cfg, dict(self.params))
        if cfg.variant == "dlvkl":
            mu, nu = encode_gaussian(views.encoder, X)
            pm, pv = self._prior(views, X)
            return float(np.mean(gaussian_kl_diag(mu, nu, pm, pv)))
        if rng is None:
            rng = rngmod.stream(cfg.seed, "kl-estimate")
        noise = NoiseBundle.draw(rng, self.noise_shapes(X.shape[0], s, 1))
        traj = _trajectory(self, views, X, noise, s)
        pm, pv = self._prior(views, X)
        return float(np.mean(kl_z_terms(traj, s, pm, pv)))

    def collapse_diagnostic(self, X_probe, s=None, rng=None):
        """Latent KL per point and spread of predictive means over probe inputs.

        Predictions use common random numbers across probe points, so a
        posterior that ignores its input yields identical predictions.
        """
        X_probe = np.asarray(X_probe, dtype=float)
        if X_probe.shape[0] < 10:
            raise ValueError("collapse diagnostic needs at least 10 probe points")
        if rng is None:
            rng = rngmod.stream(self.config.seed, "collapse")
        pred = self.predict(X_probe, s=s, rng=rng, common_noise=True)
        centre = pred.probs if pred.probs is not None else pred.mean
        spread = float(np.max(np.std(centre, axis=0)))
        return CollapseReport(self.kl_z_per_point(X_probe, rng=rng), spread)

    # -- persistence --------------------------------------------------------

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "projection": self.projection.to_dict(),
            "params": {
                name: {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}
                for name, arr in self.params.items()
            },
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a model file (format={d.get('format')!r})")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model file version {d.get('version')!r}")
        params = ParamSet(
            {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["params"].items()}
        )
        return cls(ModelConfig.from_dict(d["config"]), params, Projection.from_dict(d["projection"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _project_inducing(projection, ind):
    if projection.kind == "identity":
        return ind
    if projection.kind == "zeropad":
        n = value(ind).shape[0]
        return ops.concatenate([ind, np.zeros((n, projection.d_z - projection.d_x))], axis=1)
    return ops.matmul(ind - projection.center, projection.components)


def _slice_noise(v, lo, hi, s, n):
    """Rows ``lo:hi`` of every sample block in sample-major noise."""
    if v.ndim == 2:
        return v.reshape(s, n, -1)[:, lo:hi].reshape(-1, v.shape[-1])
    return v.reshape(v.shape[0], s, n, -1)[:, :, lo:hi].reshape(v.shape[0], -1, v.shape[-1])


def _trajectory(ms, views, X, noise, s):
    cfg = ms.config
    Xs = _tile(X, s)
    if cfg.flow_input == "encoder":
        mu, nu = encode_gaussian(views.encoder, Xs)
        Z0 = mu + np.sqrt(nu) * noise["encoder"]
    else:
        Z0 = prior_mean_projection(ms.projection, Xs)
    return sample_flow(views.flow, Z0, noise["flow"])


def elbo(ms, X, Y, noise, n_total=None):
    """Evidence lower bound of ``ms`` on the batch ``(X, Y)``."""
    return ms.elbo(X, Y, noise, n_total)


def predict(ms, Xstar, s=None, noise=None, rng=None):
    return ms.predict(Xstar, s=s, noise=noise, rng=rng)


def collapse_diagnostic(ms, X_probe, s=None, rng=None):
    return ms.collapse_diagnostic(X_probe, s=s, rng=rng)

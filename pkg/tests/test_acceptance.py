"""End-to-end acceptance checks.

Each test prints one ``[PASS]``/``[FAIL]`` line with the measured quantity
and the threshold. The Boston check runs only when a local CSV is found
(``$DLVKL_BOSTON_CSV`` or ``boston.csv`` in the working directory).
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from dlvkl.cli import RunConfig, main, run_training
from dlvkl.gradengine import NoiseBundle
from dlvkl.kernel import KernelParams
from dlvkl.latent import gaussian_kl_diag
from dlvkl.model import ModelConfig, ModelState
from dlvkl.nsde import ConstantDiffusionFlow, FlowParams, kl_z_terms, sample_flow
from dlvkl.svgp import exact_log_marginal
from dlvkl.train import TrainSchedule, fit

from conftest import model_fd


@pytest.fixture
def verdict(capsys):
    def emit(number, name, ok, detail):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        with capsys.disabled():
            print(f"\n[{status}] criterion {number} ({name}): {detail}")
        return ok

    return emit


def _quiet(msg):
    pass


def _toy_run(tmp_path, name, **model):
    run = RunConfig(toy="step", model=model, schedule={})
    run.validate()
    ms, metrics, _ = run_training(run, tmp_path / name, log=_quiet)
    return ms, metrics, run


# objectives covered by the gradient check: (label, config, labels?)
OBJECTIVES = [
    ("svgp", dict(variant="svgp"), False),
    ("dlvkl", dict(variant="dlvkl", prior="sde", beta=1.0), False),
    ("dlvkl unsupervised", dict(variant="dlvkl", task="unsupervised", d_y=3, prior="iid", beta=1.0), False),
    ("dlvkl-nsde", dict(variant="dlvkl-nsde", L=3, beta=1.0), False),
    ("dlvkl-nsde hybrid", dict(variant="dlvkl-nsde", L=3, beta=0.1), False),
    ("dkl", dict(variant="dkl"), False),
    ("dlvkl-nsde binary", dict(variant="dlvkl-nsde", L=2, beta=0.5, task="binary", mc_train=4), True),
]


class TestAcceptance:
    def test_1_gradient_correctness(self, verdict):
        start = time.perf_counter()
        worst, worst_rel, failures = 0.0, 0.0, []
        for label, kw, labels in OBJECTIVES:
            for seed in range(3):
                cfg = ModelConfig(d_x=3, m=4, **kw)
                excess, rel = model_fd(cfg, 8, seed, eps=1e-4, task_labels=labels)
                worst, worst_rel = max(worst, excess), max(worst_rel, rel)
                if excess > 1.0:
                    failures.append(f"{label}/seed{seed}")
        elapsed = time.perf_counter() - start
        ok = not failures and elapsed < 60
        verdict(
            1,
            "gradient correctness",
            ok,
            f"max |a-n|/(1e-4*max(|a|,|n|)+1e-9) = {worst:.3f} (<= 1), plain relative max {worst_rel:.2e}, "
            f"{len(OBJECTIVES)} objectives x 3 seeds in {elapsed:.1f}s (< 60s) {failures or ''}",
        )
        assert ok

    def test_2_bound_property(self, verdict):
        start = time.perf_counter()
        r = np.random.default_rng(0)
        X = np.sort(r.uniform(-3, 3, (20, 1)), axis=0)
        Y = np.sin(X) + 0.1 * r.standard_normal((20, 1))
        ms = ModelState.create(ModelConfig(variant="svgp", m=20, lengthscale_init=0.7), X)
        p = ms.params.copy()
        p["ind.x"] = X.copy()
        ms = ms.with_params(p)
        sched = TrainSchedule(iterations=2000, batch_size=20, learning_rate=0.01)
        fitted, _ = fit(ms, X, Y, sched, trainable=["q.mu", "q.offdiag", "q.logdiag"])
        bound = fitted.elbo(X, Y, None)
        kern = KernelParams(p["kern.log_ls"], p["kern.log_sf2"])
        exact = exact_log_marginal(kern, np.exp(p["lik.log_noise"]), X, Y)
        elapsed = time.perf_counter() - start
        gap = exact - bound
        ok = bound <= exact + 1e-6 and gap < 0.05 * 20 and elapsed < 30
        verdict(2, "bound property", ok, f"ELBO {bound:.6f}, exact {exact:.6f}, gap {gap:.2e} (< 1.0), {elapsed:.1f}s")
        assert ok

    def test_3_sde_prior_moments(self, verdict):
        start = time.perf_counter()
        nu0, T, s, d = 0.3, 1.0, 10_000, 2
        flow = ConstantDiffusionFlow(nu0, T=T, L=10)
        z0 = np.tile([0.5, -1.0], (s, 1))
        noise = np.random.default_rng(0).standard_normal((10, s, d))
        zL = sample_flow(flow, z0, noise).final
        mean_err = np.abs(zL.mean(axis=0) - z0[0])
        var_err = np.abs(zL.var(axis=0) / (nu0 * T) - 1)
        elapsed = time.perf_counter() - start
        tol = 3 * np.sqrt(nu0 * T / s)
        ok = bool(np.all(mean_err <= tol) and np.all(var_err <= 0.05) and elapsed < 10)
        verdict(
            3, "SDE prior moments", ok,
            f"mean error {mean_err.max():.4f} (<= {tol:.4f}), variance error {var_err.max():.2%} (<= 5%), {elapsed:.1f}s",
        )
        assert ok

    def test_4_kl_estimator(self, verdict):
        start = time.perf_counter()
        s, d, errs = 10_000, 2, []
        for c in range(5):
            r = np.random.default_rng(100 + c)
            fp = FlowParams(FlowParams.init(r, d, L=1, T=1.0, nu0=r.uniform(0.2, 1.0)), T=1.0, L=1)
            z0 = r.standard_normal((1, d))
            pm, pv = r.standard_normal((1, d)), r.uniform(0.3, 1.5)
            traj = sample_flow(fp, np.repeat(z0, s, axis=0), r.standard_normal((1, s, d)))
            est = float(kl_z_terms(traj, s, pm, pv)[0])
            exact = float(gaussian_kl_diag(traj.step_means[0][:1], traj.step_vars[0][:1], pm, pv)[0])
            errs.append(abs(est - exact) / exact)
        elapsed = time.perf_counter() - start
        ok = max(errs) <= 0.02 and elapsed < 30
        verdict(4, "KL estimator", ok, f"relative errors {np.round(errs, 4).tolist()} (<= 0.02), {elapsed:.1f}s")
        assert ok

    def test_5_posterior_collapse(self, verdict, tmp_path):
        start = time.perf_counter()
        iid, _, run = _toy_run(tmp_path, "iid", variant="dlvkl", prior="iid", beta=1.0)
        sde, met_sde, _ = _toy_run(tmp_path, "sde", variant="dlvkl", prior="sde", beta=1.0)
        train, _ = run.load_data()
        rep_iid, rep_sde = iid.collapse_diagnostic(train.X), sde.collapse_diagnostic(train.X)
        elapsed = time.perf_counter() - start
        ok = rep_iid.collapsed and not rep_sde.collapsed and met_sde.rmse < 0.5 and elapsed < 180
        verdict(
            5, "posterior collapse", ok,
            f"iid kl_z {rep_iid.kl_z:.2e} spread {rep_iid.mean_spread:.2e} collapsed={rep_iid.collapsed}; "
            f"sde kl_z {rep_sde.kl_z:.2e} spread {rep_sde.mean_spread:.2e} collapsed={rep_sde.collapsed} "
            f"RMSE {met_sde.rmse:.3f} (< 0.5), {elapsed:.1f}s",
        )
        assert ok

    def test_6_toy_step_superiority(self, verdict, tmp_path):
        start = time.perf_counter()
        svgp, nsde = [], []
        for seed in range(5):
            svgp.append(_toy_run(tmp_path, f"svgp{seed}", variant="svgp", seed=seed)[1].rmse)
            nsde.append(
                _toy_run(tmp_path, f"nsde{seed}", variant="dlvkl-nsde", beta=1e-2, T=1.0, L=10, seed=seed)[1].rmse
            )
        elapsed = time.perf_counter() - start
        ok = np.median(nsde) < np.median(svgp) and elapsed < 300
        verdict(
            6, "toy step superiority", ok,
            f"median RMSE nsde {np.median(nsde):.4f} vs svgp {np.median(svgp):.4f}; "
            f"nsde {np.round(nsde, 3).tolist()} svgp {np.round(svgp, 3).tolist()}, {elapsed:.1f}s",
        )
        assert ok

    def test_7_boston(self, verdict, tmp_path):
        path = Path(os.environ.get("DLVKL_BOSTON_CSV", "boston.csv"))
        if not path.is_file():
            verdict(7, "boston", None, f"no local CSV at {path} (set DLVKL_BOSTON_CSV)")
            pytest.skip(f"boston CSV not found at {path}")
        start = time.perf_counter()
        rmse = {"svgp": [], "dlvkl-nsde": []}
        for seed in range(10):
            for variant in rmse:
                model = dict(variant=variant, seed=seed)
                if variant == "dlvkl-nsde":
                    model["beta"] = 1.0
                run = RunConfig(data=str(path), model=model, schedule={})
                run.validate()
                rmse[variant].append(run_training(run, tmp_path / f"{variant}{seed}", log=_quiet)[1].rmse)
        elapsed = time.perf_counter() - start
        m_svgp, m_nsde = np.mean(rmse["svgp"]), np.mean(rmse["dlvkl-nsde"])
        ok_svgp = abs(m_svgp - 0.3766) <= 2 * 0.0696
        ok_nsde = abs(m_nsde - 0.3476) <= 2 * 0.0745
        ok = ok_svgp and ok_nsde and elapsed < 1200
        verdict(7, "boston", ok, f"svgp {m_svgp:.4f} (0.3766 +- 0.1392), nsde {m_nsde:.4f} (0.3476 +- 0.1490), {elapsed:.0f}s")
        assert ok

    def test_8_beta_limit(self, verdict):
        start = time.perf_counter()
        r = np.random.default_rng(3)
        X, Y = r.standard_normal((8, 2)), r.standard_normal((8, 1))
        base = dict(d_x=2, m=4, hidden_width=6)
        dkl = ModelState.create(ModelConfig(variant="dkl", **base), X, rng=np.random.default_rng(0))
        cfg = ModelConfig(variant="dlvkl-nsde", flow_input="encoder", beta=0.0, L=3, **base)
        nsde = ModelState.create(cfg, X, rng=np.random.default_rng(0))
        p = nsde.params.copy()
        for k in dkl.params:
            p[k] = dkl.params[k] + 0.1 * r.standard_normal(dkl.params[k].shape)
        shared = {k: p[k] for k in dkl.params}
        p["enc.bvar"] = np.full_like(p["enc.bvar"], -1e3)  # softplus underflows: zero variance
        p["enc.Wvar"] = np.zeros_like(p["enc.Wvar"])
        p["flow.log_nu0"] = np.array([-1e3])  # zero diffusion
        p["flow.Wd"] = np.zeros_like(p["flow.Wd"])  # no drift: the flow is the identity
        p["flow.bd"] = np.zeros_like(p["flow.bd"])
        gaps = []
        for batch in range(3):
            idx = np.random.default_rng(batch).choice(8, 5, replace=False)
            noise = nsde.draw_noise(np.random.default_rng(10 + batch), 5)
            a = float(nsde.objective(dict(p), X[idx], Y[idx], noise, n_total=8))
            b = float(dkl.objective(shared, X[idx], Y[idx], NoiseBundle({}), n_total=8))
            gaps.append(abs(a - b))
        elapsed = time.perf_counter() - start
        ok = max(gaps) <= 1e-10 and elapsed < 10
        verdict(8, "beta-limit equivalence", ok, f"max |ELBO_nsde - ELBO_dkl| = {max(gaps):.2e} (<= 1e-10), {elapsed:.2f}s")
        assert ok

    def test_9_cli_determinism(self, verdict, tmp_path):
        start = time.perf_counter()
        args = ["train", "--toy", "step", "--variant", "dlvkl-nsde", "--seed", "3", "--iterations", "300"]
        codes = [main(args + ["--out", str(tmp_path / name)]) for name in ("a", "b")]
        a, b = ((tmp_path / name / "trace.csv").read_bytes() for name in ("a", "b"))
        elapsed = time.perf_counter() - start
        ok = codes == [0, 0] and a == b and len(a) > 0 and elapsed < 60
        verdict(9, "CLI determinism", ok, f"exit codes {codes}, traces identical={a == b} ({len(a)} bytes), {elapsed:.1f}s")
        assert ok

import json
import math

import numpy as np
import pytest

import hsbnn

TINY = """
[run]
scenes = MLS-1200
nontarget_ratio = 1
components = 4
threads = 1

[scene]
height = 16
width = 16
n_discs = 6
radius_min = 1.5
radius_max = 3.0
supersample = 8

[model]
hidden = 3

[hmc]
chains = 2
iterations = 40
warmup = 20
leapfrog_steps = 6

[vi]
epochs = 30
draws = 40

[eval]
probe_pixels = 4
caps = 0.5, 1.0
"""


def test_scene_shapes_and_abundance_range():
    s = hsbnn.simulate_scene("SAS-1430", height=12, width=10, n_discs=4, seed=1)
    assert s["spectra"].shape == (12, 10, len(s["wavelengths"]))
    assert s["abundance"].shape == (12, 10)
    assert s["abundance"].min() >= 0 and s["abundance"].max() <= 1
    assert s["name"] == "SAS-1430"


def test_bad_scene_name_is_config_error():
    with pytest.raises(hsbnn.ConfigError):
        hsbnn.simulate_scene("nowhere")


def test_fpca_eigenvalues_match_weighted_covariance():
    s = hsbnn.simulate_scene(height=16, width=16, n_discs=4, seed=2)
    lam = np.asarray(s["wavelengths"])
    x = s["spectra"].reshape(-1, lam.size).astype(np.float64)
    basis = hsbnn.fit_fpca(x, lam)
    w = np.asarray(basis.quad_weights)
    c = np.cov(x, rowvar=False)
    sw = np.sqrt(w)
    ref = np.sort(np.linalg.eigvalsh(sw[:, None] * c * sw[None, :]))[::-1]
    got = np.asarray(basis.eigenvalues)
    assert np.allclose(got[:5], ref[:5], rtol=1e-8)
    scores = basis.project(x, 3)
    assert scores.shape == (x.shape[0], 3)
    assert 0 < basis.explained_variance(3) <= 1


def test_model_gradient_matches_finite_differences():
    m = hsbnn.Model([3, 2, 1], prior_sd=2.0)
    rng = np.random.default_rng(0)
    theta = rng.normal(size=m.num_params)
    x = rng.normal(size=(6, 3))
    y = (rng.random(6) < 0.5).astype(float)
    _, g = m.log_posterior(theta, x, y)
    h = 1e-6
    for j in range(m.num_params):
        e = np.zeros_like(theta)
        e[j] = h
        fd = (m.log_posterior(theta + e, x, y)[0] - m.log_posterior(theta - e, x, y)[0]) / (2 * h)
        assert abs(fd - g[j]) < 1e-5 * max(1.0, abs(g[j]))


def test_hmc_on_python_gaussian():
    def logp(t):
        return -0.5 * float(t @ t), -t

    s = hsbnn.hmc_sample(logp, 2, chains=2, iterations=600, warmup=200, leapfrog_steps=8, seed=3)
    d = s["draws"]
    assert d.shape == (800, 2)
    assert np.all(np.abs(d.mean(axis=0)) < 0.25)
    assert np.all(np.abs(d.var(axis=0) - 1) < 0.3)
    c0 = d[np.asarray(s["chain_id"]) == 0, 0]
    c1 = d[np.asarray(s["chain_id"]) == 1, 0]
    assert hsbnn.split_rhat([list(c0), list(c1)]) < 1.1


def test_python_exception_in_density_propagates():
    def bad(t):
        raise KeyError("boom")

    with pytest.raises(KeyError):
        hsbnn.hmc_sample(bad, 1, chains=1, iterations=4, warmup=2, leapfrog_steps=1, step_size=0.1)


def test_vi_fit_and_predictive_uq():
    m = hsbnn.Model([2, 3, 1], prior_sd=3.0)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(60, 2))
    y = (x[:, 0] > 0).astype(float)
    fit = hsbnn.fit_vi_bnn(m, x, y, epochs=200, learning_rate=0.02, seed=5)
    assert fit["train_loss"][-1] < fit["train_loss"][0]
    draws = hsbnn.draw_from_vi(fit["mu"], fit["rho"], 100, seed=6)
    p = hsbnn.predictive_matrix(m, draws, x)
    assert p.shape == (100, 60)
    assert np.all((p >= 0) & (p <= 1))


def test_interval_and_membership():
    lo, hi = hsbnn.credible_interval([i / 100 for i in range(101)], 0.2)
    assert lo == pytest.approx(0.1) and hi == pytest.approx(0.9)
    s = hsbnn.summarize([0.95] * 90 + [0.5] * 10)
    assert s["hc"] and not s["lc"]
    s = hsbnn.summarize([0.05] * 50 + [0.95] * 50)
    assert s["lc"] and not s["hc"]
    with pytest.raises(hsbnn.ConfigError):
        hsbnn.summarize([0.5], lower=0.9, upper=0.1)


def test_roc_and_pd():
    r = hsbnn.roc_curve([0.9, 0.8, 0.3, 0.1], [True, True, False, False])
    assert r["auc"] == 1.0
    assert r["far"][0] == 0 and r["far"][-1] == 1
    d = hsbnn.pd_at_far([0.9, 0.8, 0.3, 0.1], [0.5, 1.0, 0.0, 0.0], far_level=1.0)
    assert d["threshold"] == -math.inf
    assert len(d["pd"]) == 10


def test_tiny_pipeline(tmp_path):
    m = hsbnn.run_pipeline(TINY, tmp_path / "run", seed=1)
    assert m["status"] == "ok"
    saved = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert {f["path"] for f in saved["files"]} == {f["path"] for f in m["files"]}
    assert (tmp_path / "run" / "auc.csv").exists()


def test_config_errors():
    with pytest.raises(hsbnn.ConfigError):
        hsbnn.parse_config("[bogus]\nx = 1\n")
    assert hsbnn.parse_config("[run]\nseed = 4\n")["seed"] == 4

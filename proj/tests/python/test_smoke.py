import math

import numpy as np
import pytest

import oukit


def truth(horizon=1.0, sigma=0.5):
    return oukit.OUParams(theta=3.0, mu=0.5, sigma=sigma, x0=0.0, horizon=horizon)


def test_simulate_shape_and_determinism():
    a = oukit.simulate(truth(), n_steps=100, n_paths=4, seed=7)
    b = oukit.simulate(truth(), n_steps=100, n_paths=4, seed=7)
    assert a.values.shape == (4, 101)
    assert a.dt == pytest.approx(0.01)
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[:, 0] == 0.0)


def test_noiseless_path_matches_analytic_mean():
    p = truth(sigma=0.0)
    ps = oukit.simulate(p, n_steps=50, n_paths=2, seed=1)
    expected = [oukit.analytic_mean(p, k * ps.dt) for k in range(51)]
    assert np.allclose(ps.values[0], expected, rtol=1e-12, atol=1e-14)


def test_invalid_params_raise():
    with pytest.raises(oukit.InvalidArgument, match="theta"):
        oukit.simulate(oukit.OUParams(theta=-1.0), n_steps=10, n_paths=1, seed=0)
    assert issubclass(oukit.InvalidArgument, oukit.OukitError)


def test_ols_noiseless_inversion():
    ps = oukit.simulate(oukit.OUParams(3.0, 0.5, 0.0, 0.0, 5.0), n_steps=1000, n_paths=3, seed=2)
    r = oukit.estimate_ols(ps)
    assert r.method == "OLS"
    assert abs(r.theta_hat - 3.0) < 1e-8
    assert abs(r.mu_hat - 0.5) < 1e-8
    assert abs(r.sigma_hat) < 1e-8


def test_pathset_from_numpy_and_csv_round_trip():
    ps = oukit.simulate(truth(), n_steps=20, n_paths=3, seed=3)
    again = oukit.PathSet(ps.values, ps.dt)
    assert np.array_equal(again.values, ps.values)
    parsed = oukit.PathSet.from_csv(ps.to_csv())
    assert np.array_equal(parsed.values, ps.values)


def test_kalman_filter_and_mle():
    y = np.array([0.1, 0.3, 0.2, 0.4, 0.35])
    run = oukit.kalman_filter(y, alpha=0.1, beta=0.8, var_eta=0.05, var_eps=0.01, init_mean=0.0, init_var=0.1)
    assert run["filtered_mean"].shape == (5,)
    assert math.isfinite(run["loglik"])
    ps = oukit.simulate(truth(), n_steps=200, n_paths=20, seed=4)
    r = oukit.kalman_mle(ps, obs_noise="fixed:0")
    assert r.method == "Kalman"
    assert r.loglik >= r.diagnostics["start_loglik"]
    with pytest.raises(oukit.InvalidArgument):
        oukit.kalman_mle(ps, obs_noise="sometimes")


def test_featurize_train_predict(tmp_path):
    feats = oukit.featurize(np.linspace(0.0, 1.0, 11), dt=0.1, feature_len=5)
    assert feats.shape == (6,)
    assert feats[-1] == pytest.approx(0.25)

    cfg = oukit.TrainConfig()
    cfg.n_train, cfg.n_val = 64, 16
    cfg.feature_len = 20
    cfg.step_choices = [50, 100]
    cfg.hidden = [8]
    cfg.epochs = 2
    cfg.seed = 5
    res = oukit.train(cfg)
    assert [h[0] for h in res.history] == [0, 1, 2]
    assert res.model.layer_dims == [21, 8, 3]

    path = tmp_path / "m.ckpt"
    res.model.save(path)
    loaded = oukit.MLPModel.load(path)
    ps = oukit.simulate(truth(), n_steps=100, n_paths=5, seed=6)
    a = oukit.predict_params(res.model, ps)
    b = oukit.predict_params(loaded, ps)
    assert (a.mu_hat, a.theta_hat, a.sigma_hat) == (b.mu_hat, b.theta_hat, b.sigma_hat)
    assert a.theta_hat > 0 and a.sigma_hat >= 0


def test_run_grid_small():
    grid = oukit.ExperimentGrid.default()
    assert len(grid.cells) == 8
    grid.set_cells([10], [100], [1.0, 5.0])
    grid.replicates = 2
    grid.methods = ["ols", "kalman"]
    res = oukit.run_grid(grid, seed=9)
    assert len(res.rows) == 2 * 2 * 2
    assert [a.method for a in res.aggregate] == ["OLS", "Kalman"]
    assert res == oukit.run_grid(grid, seed=9)
    assert res.to_csv().startswith("paths,n_steps,horizon,replicate,method")
    assert res.error_plot_svg().startswith("<svg")
    with pytest.raises(oukit.InvalidArgument):
        grid.methods = ["nn"]
        oukit.run_grid(grid, seed=1)

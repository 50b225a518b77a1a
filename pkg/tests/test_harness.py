import numpy as np
import pytest

from airfed.clustering import dump_assignments
from airfed.config import ExperimentConfig, load_config_file, make_config
from airfed.harness import (Experiment, run_experiment, run_sweep,
                            write_metrics_csv, write_summary_json)


def _quad_cfg(**kw):
    base = dict(devices=8, clusters=2, rounds=5, batch=20, model="quadratic",
                dim=4, train_samples=60, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def _blob_cfg(**kw):
    base = dict(devices=10, clusters=2, rounds=4, batch=10, classes=5, dim=4,
                train_samples=400, test_samples=100, seed=7)
    base.update(kw)
    return ExperimentConfig(**base)


def test_deterministic_metrics_rerun(tmp_path):
    cfg = _blob_cfg()
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_metrics_csv(pa, a)
    write_metrics_csv(pb, b)
    assert pa.read_bytes() == pb.read_bytes()


def test_zero_rounds_reports_initial_model():
    res = run_experiment(_blob_cfg(rounds=0))
    assert len(res.metrics) == 1
    assert res.metrics[0].round == 0
    assert res.metrics[0].loss == pytest.approx(np.log(5), rel=1e-6)


def test_metrics_row_count_matches_rounds():
    res = run_experiment(_blob_cfg(rounds=6))
    assert len(res.metrics) == 6
    assert [m.round for m in res.metrics] == list(range(1, 7))


def test_conservation_subordinate_count():
    cfg = _blob_cfg(rounds=3)
    exp = Experiment(cfg)
    res = exp.run()
    for _, assignment in res.assignments:
        n_subs = sum(assignment.subordinates(n).size
                     for n in range(assignment.n_clusters))
        assert n_subs == cfg.devices - cfg.clusters
        for n in range(assignment.n_clusters):
            assert assignment.leads[n] not in assignment.subordinates(n)


def test_static_scheme_assignment_frozen():
    res = run_experiment(_blob_cfg(scheme="static", rounds=3))
    first = res.assignments[0][1]
    for _, assignment in res.assignments[1:]:
        assert [tuple(c) for c in assignment.clusters] == \
            [tuple(c) for c in first.clusters]
        assert assignment.leads == first.leads


def test_all_schemes_run_and_are_finite():
    for scheme in ("proposed", "static", "similarity", "maxpower", "direct", "mse"):
        res = run_experiment(_blob_cfg(scheme=scheme, rounds=2))
        for m in res.metrics:
            assert np.isfinite(m.loss) and np.isfinite(m.bias_sq)
            assert 0.0 <= m.acc <= 1.0


def test_direct_noiseless_ample_matches_centralized_descent():
    # full batches, no receiver noise, huge budgets: the direct scheme's
    # trajectory must coincide with plain full-gradient descent
    cfg = _quad_cfg(scheme="direct", batch=0, noise_dbm=-1000.0, power_w=1e9,
                    rounds=6, lr=0.002, solver_max_iter=500, solver_tol=1e-14)
    exp = Experiment(cfg)
    X = exp.train.inputs
    y = exp.train_targets
    model = exp.model
    w = exp.params.copy()
    res = exp.run()
    for _ in range(cfg.rounds):
        w = w - cfg.lr * model.grad(w, X, y)
    np.testing.assert_allclose(res.params, w, atol=1e-9)


def test_direct_single_device_is_its_own_lead():
    # one device transmitting for itself over a clean ample channel follows
    # exactly the descent it would run locally
    cfg = _quad_cfg(devices=1, clusters=1, scheme="direct", batch=0,
                    noise_dbm=-1000.0, power_w=1e9, rounds=4, lr=0.003,
                    solver_max_iter=500, solver_tol=1e-14)
    exp = Experiment(cfg)
    X, y = exp.train.inputs, exp.train_targets
    model = exp.model
    w = exp.params.copy()
    res = exp.run()
    for _ in range(cfg.rounds):
        w = w - cfg.lr * model.grad(w, X, y)
    np.testing.assert_allclose(res.params, w, atol=1e-9)


def test_proposed_noiseless_differs_only_by_lead_omission():
    cfg = _quad_cfg(scheme="proposed", batch=0, noise_dbm=-1000.0, power_w=1e9,
                    rounds=1, lr=0.002, solver_max_iter=400, solver_tol=1e-14)
    exp = Experiment(cfg)
    X, y = exp.train.inputs, exp.train_targets
    model = exp.model
    w0 = exp.params.copy()
    res = exp.run()
    grads = np.stack([model.grad(w0, X, y)] * cfg.devices)
    mean = grads.mean()
    _, assignment = res.assignments[0]
    omitted = np.zeros(model.n_params)
    for lead in assignment.leads:
        omitted += grads[lead] - mean
    ideal_step = w0 - cfg.lr * grads.mean(axis=0)
    expected = ideal_step + cfg.lr * omitted / cfg.devices
    np.testing.assert_allclose(res.params, expected, atol=1e-6)


def test_maxpower_budgets_hit_exactly():
    from airfed import aircomp, power
    from airfed.channel import sample_channels
    cfg = _blob_cfg(scheme="maxpower")
    exp = Experiment(cfg)
    grads = exp._device_gradients()
    stats = aircomp.compute_stats(grads)
    imps = exp._importances()
    assignment = exp._assignment(1, imps, grads)
    chan = sample_channels(exp.geometry, assignment, cfg.omega0, cfg.kappa,
                           cfg.noise_w, cfg.noise_w, exp.streams["channels"])
    budgets = aircomp.PowerBudgets.uniform(chan, cfg.power_w)
    coeffs = power.learning_coefficients(1.0, stats.var, exp.model.n_params,
                                         cfg.devices, exp.lr, exp.lipschitz)
    alloc = power.max_power_allocation(chan, budgets, coeffs)
    np.testing.assert_array_equal(alloc.alpha, budgets.sub_pmax)
    np.testing.assert_allclose(aircomp.lead_transmit_power(alloc, chan),
                               budgets.lead_pmax, rtol=1e-12)


def test_assignments_csv(tmp_path):
    res = run_experiment(_blob_cfg(rounds=2))
    out = tmp_path / "assign.csv"
    dump_assignments(out, res.assignments)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "round,device,cluster,is_lead"
    assert len(lines) == 1 + 2 * 10  # two rounds, all devices listed


def test_summary_json(tmp_path):
    res = run_experiment(_blob_cfg(rounds=2))
    out = tmp_path / "summary.json"
    write_summary_json(out, res)
    import json
    payload = json.loads(out.read_text())
    assert payload["scheme"] == "proposed"
    assert 0.0 <= payload["final_accuracy"] <= 1.0


def test_sweep_modes_return_expected_values():
    cfg = _blob_cfg(rounds=1)
    rows = run_sweep(cfg, "clusters", values=(2, 3))
    assert [v for v, _ in rows] == [2.0, 3.0]
    rows = run_sweep(cfg, "power", values=(0.1, 0.2))
    assert [v for v, _ in rows] == [0.1, 0.2]


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("devices=12\nclusters=3\nlr=0.01  # comment\nscheme=maxpower\n")
    values = load_config_file(path)
    cfg = make_config(values, seed=5)
    assert cfg.devices == 12 and cfg.clusters == 3
    assert cfg.lr == 0.01 and cfg.scheme == "maxpower"
    assert cfg.seed == 5
    # flag overrides file
    cfg2 = make_config(values, scheme="direct")
    assert cfg2.scheme == "direct"


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("warp_speed=9\n")
    with pytest.raises(KeyError):
        load_config_file(path)


def test_mlp_model_end_to_end():
    res = run_experiment(_blob_cfg(model="mlp", rounds=2))
    assert len(res.metrics) == 2
    assert all(np.isfinite(m.loss) for m in res.metrics)
    assert all(0.0 <= m.acc <= 1.0 for m in res.metrics)


def test_idx_data_end_to_end(tmp_path):
    from airfed.data import write_idx_images, write_idx_labels
    rng = np.random.default_rng(0)
    images = rng.random((200, 9))
    labels = np.tile(np.arange(10), 20)
    write_idx_images(tmp_path / "train-images-idx3-ubyte", images, 3, 3)
    write_idx_labels(tmp_path / "train-labels-idx1-ubyte", labels)
    write_idx_images(tmp_path / "t10k-images.idx3-ubyte", images[:50], 3, 3)
    write_idx_labels(tmp_path / "t10k-labels.idx1-ubyte", labels[:50])
    cfg = ExperimentConfig(devices=10, clusters=2, rounds=2, batch=5,
                           idx_dir=str(tmp_path), seed=0)
    res = run_experiment(cfg)
    assert len(res.metrics) == 2
    assert all(np.isfinite(m.loss) for m in res.metrics)


def test_quadratic_mode_tracks_bound_inputs():
    res = run_experiment(_quad_cfg(rounds=4))
    assert res.lipschitz_exact is not None
    assert res.optimal_loss is not None
    assert len(res.delta_sq_per_round) == 4
    assert len(res.grad_sq_norms) == 4
    # bound column is populated and finite in quadratic mode
    assert all(np.isfinite(m.bound) for m in res.metrics)

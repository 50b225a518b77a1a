"""Experiment orchestration: end-to-end training rounds, baseline schemes,
seeding, and metrics emission.

One master seed derives independent per-purpose streams (data, partition,
geometry, model init, per-device batching, channel fading, channel noise), so
a config reruns to a byte-identical metrics CSV.

Schemes
-------
proposed    dynamic distance+importance clustering, gap-driven power control
static      geometry-only clustering fixed after round 1, same power control
similarity  per-round gradient cosine-similarity clustering, same power control
maxpower    proposed clustering, full transmit power, optimized de-noising only
direct      single hop: every device transmits to the receiver itself
mse         proposed clustering, power control minimizing plain symbol MSE
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aircomp, clustering, power
from .aircomp import PowerBudgets
from .channel import Geometry, sample_channels, sample_ring_geometry
from .clustering import ClusterAssignment
from .config import ExperimentConfig
from .convergence import contraction_factor
from .data import (Dataset, make_blobs, make_isotropic_regression, partition_data,
                   read_idx)
from .model import SoftmaxRegression, build_model, global_update, local_gradient


def _stacked_softmax_grads(model: SoftmaxRegression, params: np.ndarray,
                           X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-device softmax gradients for a (K, batch, d) input stack."""
    k, m_b, _ = X.shape
    W, b = model._unpack(params)
    logits = np.einsum("kbd,dc->kbc", X, W) + b
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    delta = e / e.sum(axis=-1, keepdims=True)
    delta[np.arange(k)[:, None], np.arange(m_b)[None, :], y] -= 1.0
    g_w = np.einsum("kbd,kbc->kdc", X, delta) / m_b
    g_b = delta.mean(axis=1)
    return np.concatenate([g_w.reshape(k, -1), g_b], axis=1)


METRICS_HEADER = ("round", "loss", "acc", "bias_sq", "mse", "objective", "bound")

_STREAMS = ("data", "partition", "geometry", "init", "batching", "channels", "noise")


def _make_streams(seed: int, n_devices: int) -> dict:
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(_STREAMS))
    streams = {name: np.random.default_rng(child)
               for name, child in zip(_STREAMS, children)}
    streams["batching"] = [np.random.default_rng(child)
                           for child in children[_STREAMS.index("batching")].spawn(n_devices)]
    return streams


@dataclass
class RoundMetrics:
    round: int
    loss: float
    acc: float
    bias_sq: float
    mse: float
    objective: float
    bound: float

    def row(self) -> list:
        return [self.round, repr(float(self.loss)), repr(float(self.acc)),
                repr(float(self.bias_sq)), repr(float(self.mse)),
                repr(float(self.objective)), repr(float(self.bound))]


@dataclass
class TrainResult:
    config: ExperimentConfig
    metrics: list[RoundMetrics]
    params: np.ndarray
    assignments: list[tuple[int, ClusterAssignment]] = field(default_factory=list)
    traces: list[tuple[int, power.SolverTrace]] = field(default_factory=list)
    # populated in quadratic mode, where the optimum is known in closed form
    lipschitz_exact: float | None = None
    optimal_loss: float | None = None
    initial_loss: float | None = None
    delta_sq_per_round: list[float] = field(default_factory=list)
    grad_sq_norms: list[float] = field(default_factory=list)
    losses_before_update: list[float] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        accs = [m.acc for m in self.metrics[-10:]]
        return float(np.mean(accs)) if accs else 0.0

    def loss_array(self) -> np.ndarray:
        return np.array([m.loss for m in self.metrics])

    def acc_array(self) -> np.ndarray:
        return np.array([m.acc for m in self.metrics])

    def bias_sq_array(self) -> np.ndarray:
        return np.array([m.bias_sq for m in self.metrics])

    def mse_array(self) -> np.ndarray:
        return np.array([m.mse for m in self.metrics])


def _load_idx_pair(idx_dir: str, stem: str) -> tuple[np.ndarray, np.ndarray]:
    base = Path(idx_dir)
    images = labels = None
    for name in (f"{stem}-images-idx3-ubyte", f"{stem}-images.idx3-ubyte"):
        if (base / name).exists():
            images = read_idx(base / name)
    for name in (f"{stem}-labels-idx1-ubyte", f"{stem}-labels.idx1-ubyte"):
        if (base / name).exists():
            labels = read_idx(base / name)
    if images is None or labels is None:
        raise FileNotFoundError(f"IDX pair for {stem!r} not found in {idx_dir}")
    return images, labels


class Experiment:
    """Owns the data, geometry, model parameters, and per-purpose RNG streams
    for one training run; rounds are strictly sequential."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.streams = _make_streams(cfg.seed, cfg.devices)
        self._setup_data()
        self._setup_geometry()
        self._setup_model()
        self._cached_assignment: ClusterAssignment | None = None
        self._delta_sq_round1: float | None = None
        self._bound_acc: float | None = None

    # ---------------------------------------------------------------- setup

    def _setup_data(self):
        cfg = self.cfg
        rng = self.streams["data"]
        self.quadratic = cfg.model == "quadratic"
        if self.quadratic:
            X, y = make_isotropic_regression(cfg.train_samples, cfg.dim,
                                             cfg.lipschitz, 1.0, rng)
            # every device draws mini-batches from the shared pool, which is
            # what makes the per-device gradients unbiased for the global loss
            shards = [np.arange(cfg.train_samples) for _ in range(cfg.devices)]
            self.train = Dataset(inputs=X, labels=np.zeros(len(y), dtype=np.int64),
                                 shards=shards)
            self.train_targets = y
            self.test_inputs = self.test_labels = None
            return
        if cfg.idx_dir:
            X, y = _load_idx_pair(cfg.idx_dir, "train")
            self.test_inputs, self.test_labels = _load_idx_pair(cfg.idx_dir, "t10k")
            n_classes = int(y.max()) + 1
        else:
            X, y, centers = make_blobs(cfg.classes, cfg.dim, cfg.spread,
                                       cfg.train_samples, rng)
            tx, ty, _ = make_blobs(cfg.classes, cfg.dim, cfg.spread,
                                   cfg.test_samples, rng, centers=centers)
            self.test_inputs, self.test_labels = tx, ty
            n_classes = cfg.classes
        shards = partition_data(y, cfg.devices, cfg.partition_mode,
                                self.streams["partition"])
        self.train = Dataset(inputs=X, labels=y, shards=shards)
        self.train.validate(n_classes)
        self.train_targets = None
        self.n_classes = n_classes

    def _setup_geometry(self):
        cfg = self.cfg
        self.geometry: Geometry = sample_ring_geometry(
            cfg.devices, cfg.ring_inner_m, cfg.ring_outer_m, self.streams["geometry"])
        self.dist = clustering.pairwise_distances(self.geometry.device_positions)
        self.dist_to_ps = self.geometry.distance_to_ps()
        n_classes = getattr(self, "n_classes", max(self.cfg.classes, 2))
        rho_default, rho2_scale = clustering.scale_defaults(self.dist, n_classes)
        self.rho = cfg.rho if cfg.rho is not None else rho_default
        # positive default keeps high-importance devices out of the lead role
        # (the lead's own gradient never reaches the receiver)
        self.rho2 = cfg.rho2 if cfg.rho2 is not None else rho2_scale

    def _setup_model(self):
        cfg = self.cfg
        if self.quadratic:
            self.model = build_model("quadratic", cfg.dim, 1)
            X = self.train.inputs
            self.lipschitz = self.model.smoothness(X)
            _, self.optimal_loss = self.model.optimum(X, self.train_targets)
        else:
            self.model = build_model(cfg.model, self.train.inputs.shape[1],
                                     self.n_classes, cfg.hidden_width)
            self.lipschitz = cfg.lipschitz
            self.optimal_loss = None
        self.lr = cfg.effective_lr(self.lipschitz)
        self.params = self.model.init_params(self.streams["init"])
        self.eta = None
        if self.lr < 1.0 / (2.0 * self.lipschitz):
            self.eta = contraction_factor(self.lipschitz, self.lr)

    # ---------------------------------------------------------- device side

    def _shard_xy(self, k: int):
        idx = self.train.shards[k]
        if self.quadratic:
            return self.train.inputs[idx], self.train_targets[idx]
        return self.train.inputs[idx], self.train.labels[idx]

    def _device_gradients(self) -> np.ndarray:
        cfg = self.cfg
        fast = isinstance(self.model, SoftmaxRegression)
        if fast:
            sizes = {idx.size for idx in self.train.shards}
            fast = len(sizes) == 1
        if not fast:
            grads = np.empty((cfg.devices, self.model.n_params))
            for k in range(cfg.devices):
                X, y = self._shard_xy(k)
                m_b = X.shape[0] if cfg.batch <= 0 else cfg.batch  # <=0: full batch
                grads[k] = local_gradient(self.model, self.params, X, y, m_b,
                                          self.streams["batching"][k])
            return grads
        # equal-size softmax shards: draw per-device batches, then evaluate all
        # device gradients in one stacked pass
        shard_size = self.train.shards[0].size
        m_b = shard_size if cfg.batch <= 0 else cfg.batch
        if m_b > shard_size:
            raise ValueError("batch exceeds shard")
        rows = []
        for k in range(cfg.devices):
            shard = self.train.shards[k]
            if m_b == shard_size:
                rows.append(shard)
            else:
                picks = self.streams["batching"][k].choice(shard_size, size=m_b,
                                                           replace=False)
                rows.append(shard[picks])
        batch_idx = np.stack(rows)
        return _stacked_softmax_grads(self.model, self.params,
                                      self.train.inputs[batch_idx],
                                      self.train.labels[batch_idx])

    def _train_probs(self, params: np.ndarray) -> np.ndarray:
        # one pooled forward serves both the loss after a round's update and
        # the importance scores at the start of the next round
        cached = getattr(self, "_proba_cache", None)
        if cached is not None and cached[0] is params:
            return cached[1]
        p = np.clip(self.model.predict_proba(params, self.train.inputs), 1e-12, 1.0)
        self._proba_cache = (params, p)
        return p

    def _importances(self) -> np.ndarray:
        if self.quadratic:
            return np.zeros(self.cfg.devices)
        p = self._train_probs(self.params)
        per_sample = -np.sum(p * np.log(p), axis=1)
        return np.array([per_sample[idx].mean() for idx in self.train.shards])

    def _global_loss(self, params: np.ndarray) -> float:
        if self.quadratic:
            r = self.train.inputs @ params - self.train_targets
            per_sample = 0.5 * r ** 2
        else:
            p = self._train_probs(params)
            per_sample = -np.log(p[np.arange(len(self.train.labels)),
                                   self.train.labels])
        return float(np.mean([per_sample[idx].mean() for idx in self.train.shards]))

    def _test_accuracy(self, params: np.ndarray) -> float:
        if self.quadratic or self.test_inputs is None:
            return 0.0
        p = self.model.predict_proba(params, self.test_inputs)
        return float(np.mean(p.argmax(axis=1) == self.test_labels))

    def _global_grad_sq(self) -> float:
        X = self.train.inputs
        g = self.model.grad(self.params, X, self.train_targets)
        return float(g @ g)

    def _pool_grad_variance(self) -> float:
        """Sum over elements of the per-sample gradient population variance,
        with the without-replacement correction for the configured batch."""
        X, y = (self.train.inputs,
                self.train_targets if self.quadratic else self.train.labels)
        per_sample = self.model.per_sample_grads(self.params, X, y)
        n = per_sample.shape[0]
        m_b = n if self.cfg.batch <= 0 else min(self.cfg.batch, n)
        fpc = (n - m_b) / (n - 1) if n > 1 else 0.0
        return float(per_sample.var(axis=0).sum() * fpc)

    def _delta_sq_estimate(self) -> float:
        """One-shot variance-floor estimate: worst device's mean per-element
        sample-gradient variance, scaled by the model dimension."""
        worst = 0.0
        for k in range(self.cfg.devices):
            X, y = self._shard_xy(k)
            per_sample = self.model.per_sample_grads(self.params, X, y)
            worst = max(worst, float(per_sample.var(axis=0).mean()))
        return worst * self.model.n_params

    # ------------------------------------------------------------ clustering

    def _assignment(self, round_index: int, importances: np.ndarray,
                    gradients: np.ndarray) -> ClusterAssignment:
        cfg = self.cfg
        scheme = cfg.scheme
        if scheme == "direct":
            if self._cached_assignment is None:
                self._cached_assignment = ClusterAssignment(
                    clusters=[np.array([k]) for k in range(cfg.devices)],
                    leads=list(range(cfg.devices)), direct=True)
            return self._cached_assignment
        if scheme == "static":
            if self._cached_assignment is None:
                zeros = np.zeros(cfg.devices)
                groups = clustering.cluster(self.dist, zeros, cfg.clusters, 0.0)
                leads = clustering.select_leads(groups, self.dist, self.dist_to_ps,
                                                zeros, cfg.rho1, 0.0)
                self._cached_assignment = ClusterAssignment(
                    clusters=groups, leads=leads, round_index=round_index)
            return self._cached_assignment
        if scheme == "similarity":
            groups = clustering.similarity_clusters(gradients, cfg.clusters)
            leads = clustering.select_leads(groups, self.dist, self.dist_to_ps,
                                            importances, cfg.rho1, self.rho2)
            return ClusterAssignment(clusters=groups, leads=leads,
                                     round_index=round_index)
        # proposed clustering, shared by the maxpower and mse baselines
        fresh = (self._cached_assignment is None
                 or (round_index - 1) % cfg.recluster_period == 0)
        if fresh:
            groups = clustering.cluster(self.dist, importances, cfg.clusters,
                                        self.rho)
            leads = clustering.select_leads(groups, self.dist, self.dist_to_ps,
                                            importances, cfg.rho1, self.rho2)
            self._cached_assignment = ClusterAssignment(
                clusters=groups, leads=leads, round_index=round_index)
        return self._cached_assignment

    # ---------------------------------------------------------------- rounds

    def run_round(self, round_index: int
                  ) -> tuple[RoundMetrics, ClusterAssignment, power.SolverTrace | None]:
        cfg = self.cfg
        grads = self._device_gradients()
        stats = aircomp.compute_stats(grads)
        importances = self._importances()
        assignment = self._assignment(round_index, importances, grads)

        if self.quadratic:
            self.losses_snapshot = (self._global_loss(self.params),
                                    self._global_grad_sq(),
                                    self._pool_grad_variance())

        if stats.var <= 0.0:
            # all gradients are constant vectors; the plain average is exact
            # and nothing needs to be transmitted
            estimate = np.full(self.model.n_params, stats.mean)
            bias_sq = mse = objective = 0.0
            trace = None
        else:
            chan = sample_channels(self.geometry, assignment, cfg.omega0, cfg.kappa,
                                   cfg.noise_w, cfg.noise_w, self.streams["channels"])
            centered_sq = float(((grads - stats.mean) ** 2).sum())
            if cfg.scheme == "mse":
                coeffs = power.symbol_mse_coefficients(
                    centered_sq, stats.var, self.model.n_params, cfg.devices)
            else:
                coeffs = power.learning_coefficients(
                    centered_sq, stats.var, self.model.n_params, cfg.devices,
                    self.lr, self.lipschitz)
            if cfg.scheme == "direct":
                budgets = PowerBudgets(sub_pmax=np.empty(0),
                                       lead_pmax=np.full(cfg.devices, cfg.power_w))
                alloc, trace = power.solve_direct(chan, budgets, coeffs,
                                                  cfg.solver_max_iter, cfg.solver_tol)
                outcome = aircomp.direct_round(grads, stats, chan, alloc, budgets,
                                               self.streams["noise"])
                objective = trace.objective_per_iter[-1]
            else:
                budgets = PowerBudgets.uniform(chan, cfg.power_w)
                if cfg.scheme == "maxpower":
                    alloc = power.max_power_allocation(chan, budgets, coeffs)
                    trace = None
                    objective = power.objective_f(alloc, chan, coeffs)
                else:
                    alloc, trace = power.alternating_minimize(
                        chan, budgets, coeffs, cfg.solver_max_iter, cfg.solver_tol)
                    objective = trace.objective_per_iter[-1]
                outcome = aircomp.two_tier_round(grads, stats, chan, alloc, budgets,
                                                 self.streams["noise"])
            bias_sq, mse = aircomp.analytic_error_moments(
                grads, stats, chan, alloc, direct=cfg.scheme == "direct")
            estimate = outcome.estimated_gradient

        self.params = global_update(self.params, estimate, self.lr)
        bound = self._bound_update(bias_sq, mse)
        return RoundMetrics(round=round_index,
                            loss=self._global_loss(self.params),
                            acc=self._test_accuracy(self.params),
                            bias_sq=bias_sq, mse=mse, objective=float(objective),
                            bound=bound), assignment, trace

    def _bound_update(self, bias_sq: float, mse: float) -> float:
        """Running prefix of the optimality-gap bound; the unknown-initial-gap
        term is only included in quadratic mode where the optimum is exact."""
        if self.eta is None:
            return float("nan")
        if self._bound_acc is None:
            if self._delta_sq_round1 is None:
                self._delta_sq_round1 = self._delta_sq_estimate()
            init_gap = 0.0
            if self.quadratic:
                init_gap = self.initial_loss - self.optimal_loss
            self._bound_acc = init_gap
        if self.cfg.batch > 0:
            variance_term = (self.lipschitz * self.lr ** 2 * self._delta_sq_round1
                             / self.cfg.batch)
        else:
            variance_term = 0.0  # full batch: no sampling noise
        error_term = 0.5 * self.lr * bias_sq + self.lipschitz * self.lr ** 2 * mse
        self._bound_acc = self.eta * self._bound_acc + variance_term + error_term
        return self._bound_acc

    def run(self) -> TrainResult:
        cfg = self.cfg
        self.initial_loss = self._global_loss(self.params)
        result = TrainResult(config=cfg, metrics=[], params=self.params,
                             lipschitz_exact=self.lipschitz if self.quadratic else None,
                             optimal_loss=self.optimal_loss,
                             initial_loss=self.initial_loss)
        if cfg.rounds == 0:
            result.metrics.append(RoundMetrics(
                round=0, loss=self.initial_loss,
                acc=self._test_accuracy(self.params),
                bias_sq=0.0, mse=0.0, objective=0.0, bound=float("nan")))
            return result
        for t in range(1, cfg.rounds + 1):
            metrics, assignment, trace = self.run_round(t)
            result.metrics.append(metrics)
            result.assignments.append((t, assignment))
            if trace is not None:
                result.traces.append((t, trace))
            if self.quadratic:
                loss_before, grad_sq, pool_var = self.losses_snapshot
                result.losses_before_update.append(loss_before)
                result.grad_sq_norms.append(grad_sq)
                result.delta_sq_per_round.append(pool_var)
        result.params = self.params
        return result


def run_experiment(cfg: ExperimentConfig) -> TrainResult:
    return Experiment(cfg).run()


def write_metrics_csv(path, result: TrainResult):
    lines = [",".join(METRICS_HEADER)]
    for m in result.metrics:
        lines.append(",".join(str(v) for v in m.row()))
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_json(path, result: TrainResult):
    payload = {
        "scheme": result.config.scheme,
        "seed": result.config.seed,
        "rounds": result.config.rounds,
        "final_accuracy": result.final_accuracy,
        "final_loss": result.metrics[-1].loss if result.metrics else None,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


CLUSTER_SWEEP = (2, 4, 6, 8, 10)
POWER_SWEEP = (0.05, 0.1, 0.2, 0.5, 1.0)


def run_sweep(cfg: ExperimentConfig, sweep: str, values=None) -> list[tuple[float, TrainResult]]:
    """Rerun the configured experiment across cluster counts or power budgets."""
    if sweep == "clusters":
        values = values if values is not None else CLUSTER_SWEEP
        out = []
        for n in values:
            swept = _replace_config(cfg, clusters=int(n))
            out.append((float(n), run_experiment(swept)))
        return out
    if sweep == "power":
        values = values if values is not None else POWER_SWEEP
        out = []
        for p in values:
            swept = _replace_config(cfg, power_w=float(p))
            out.append((float(p), run_experiment(swept)))
        return out
    raise ValueError(f"unknown sweep {sweep!r}")


def _replace_config(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    from dataclasses import asdict
    values = asdict(cfg)
    values.update(kw)
    return ExperimentConfig(**values)


def write_sweep_csv(path, rows: list[tuple[float, TrainResult]], label: str):
    lines = [f"{label},final_accuracy,final_loss"]
    for value, result in rows:
        lines.append(f"{repr(float(value))},{repr(result.final_accuracy)},"
                     f"{repr(float(result.metrics[-1].loss))}")
    Path(path).write_text("\n".join(lines) + "\n")

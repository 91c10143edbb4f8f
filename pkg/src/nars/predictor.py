"""Two-headed accuracy predictor with hand-rolled, exactly-checked gradients.

The network is a small MLP: an architecture encoder (arch_dim -> width,
ReLU), a proxy head (width -> 2) predicting normalized flops/params used
only for pretraining, and an accuracy path where the encoder output is
concatenated with the recipe slots, passed through one hidden layer
(ReLU) and a scalar head.  With arch_dim == 0 (recipe-only search) the
encoder and proxy head are absent and the hidden layer consumes the
recipe slots directly.

Training is plain mini-batch SGD with momentum; gradients are written out
by hand so they can be verified against finite differences to double
precision (see gradient_check).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._util import derive_seed
from .correlation import spearman
from .encoding import check_matrix
from .errors import CheckpointError, ShapeError, UndefinedCorrelationError

CHECKPOINT_VERSION = 1


def huber(pred, target):
    """Robust loss 0.5*r^2 for |r| < 1 else |r| - 0.5, and d(loss)/d(pred).

    Vectorized; the derivative is clipped to +-1 outside the quadratic zone.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    r = p - t
    a = np.abs(r)
    quad = a < 1.0
    loss = np.where(quad, 0.5 * r * r, a - 0.5)
    grad = np.where(quad, r, np.sign(r))
    if np.isscalar(pred) and np.isscalar(target):
        return float(loss), float(grad)
    return loss, grad


@dataclass(frozen=True)
class FitReport:
    train_mse: float
    val_mse: float | None
    val_rank_correlation: float | None
    epochs_run: int
    loss_trace: tuple[float, ...]
    pretrained: bool = False


@dataclass(frozen=True)
class GradientCheckReport:
    max_rel_error: float
    checked: int
    skipped_kink: bool = False


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


class TwoHeadPredictor(BaseEstimator):
    """Accuracy predictor over encoded architecture+recipe vectors.

    Estimator-style surface: ``pretrain`` fits the encoder/proxy head on
    architecture statistics, ``fit`` runs the two-phase accuracy training
    (hidden+head with frozen encoder, then everything at a reduced rate),
    ``predict`` scores full vectors and ``predict_proxy`` returns the
    normalized statistic estimates.
    """

    def __init__(self, arch_dim: int, recipe_dim: int, width: int = 24,
                 learning_rate: float = 0.05, phase2_lr_scale: float = 0.1,
                 momentum: float = 0.9, batch_size: int = 16,
                 phase_epochs: int = 50, pretrain_epochs: int = 100,
                 fit_l2: float = 3e-3,
                 layout_fingerprint: str = "", seed: int = 0):
        if arch_dim < 0 or recipe_dim <= 0:
            raise ValueError("arch_dim must be >= 0 and recipe_dim > 0")
        self.arch_dim = arch_dim
        self.recipe_dim = recipe_dim
        self.width = width
        self.learning_rate = learning_rate
        self.phase2_lr_scale = phase2_lr_scale
        self.momentum = momentum
        self.batch_size = batch_size
        self.phase_epochs = phase_epochs
        self.pretrain_epochs = pretrain_epochs
        self.fit_l2 = fit_l2
        self.layout_fingerprint = layout_fingerprint
        self.seed = seed
        self._init_weights()

    # -- weights ----------------------------------------------------------

    @property
    def has_encoder(self) -> bool:
        return self.arch_dim > 0

    def _init_weights(self) -> None:
        """Glorot-uniform weights U(-s, s), s = sqrt(6/(fan_in+fan_out)); zero biases."""
        rng = np.random.default_rng(self.seed)

        def glorot(n_in, n_out):
            s = np.sqrt(6.0 / (n_in + n_out))
            return rng.uniform(-s, s, size=(n_in, n_out))

        w = self.width
        self.weights: dict[str, np.ndarray] = {}
        if self.has_encoder:
            self.weights["w_enc"] = glorot(self.arch_dim, w)
            self.weights["b_enc"] = np.zeros(w)
            self.weights["w_prox"] = glorot(w, 2)
            self.weights["b_prox"] = np.zeros(2)
            hid_in = w + self.recipe_dim
        else:
            hid_in = self.recipe_dim
        self.weights["w_hid"] = glorot(hid_in, w)
        self.weights["b_hid"] = np.zeros(w)
        self.weights["w_acc"] = glorot(w, 1)
        self.weights["b_acc"] = np.zeros(1)
        # Proxy-target normalization, set by pretrain().
        self.norm_: dict[str, float] | None = None
        self.pretrained_ = False

    def zero_weights(self) -> None:
        """Test hook: affine layers become pure biases."""
        for k in self.weights:
            self.weights[k] = np.zeros_like(self.weights[k])

    # -- forward ----------------------------------------------------------

    def _split(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return X[:, :self.arch_dim], X[:, self.arch_dim:]

    def _encode(self, Xa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pre = Xa @ self.weights["w_enc"] + self.weights["b_enc"]
        return pre, _relu(pre)

    def predict_proxy(self, X_arch) -> np.ndarray:
        """(n, 2) normalized [flops, params] estimates for arch-prefix rows."""
        if not self.has_encoder:
            raise ShapeError("recipe-only predictor has no proxy head")
        Xa = check_matrix(X_arch, self.arch_dim, "arch prefix")
        _, enc = self._encode(Xa)
        return enc @ self.weights["w_prox"] + self.weights["b_prox"]

    def predict(self, X) -> np.ndarray:
        """Predicted accuracy scores for full encoded vectors, shape (n,)."""
        X = check_matrix(X, self.arch_dim + self.recipe_dim, "encoded vector")
        Xa, Xr = self._split(X)
        if self.has_encoder:
            _, enc = self._encode(Xa)
            joint = np.hstack([enc, Xr])
        else:
            joint = Xr
        hid = _relu(joint @ self.weights["w_hid"] + self.weights["b_hid"])
        return (hid @ self.weights["w_acc"] + self.weights["b_acc"]).ravel()

    def predict_one(self, x) -> float:
        return float(self.predict(np.asarray(x).reshape(1, -1))[0])

    # -- gradients --------------------------------------------------------

    def accuracy_loss_grads(self, X: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Mean Huber loss of the accuracy head and its weight gradients."""
        n = X.shape[0]
        Xa, Xr = self._split(X)
        if self.has_encoder:
            enc_pre, enc = self._encode(Xa)
            joint = np.hstack([enc, Xr])
        else:
            joint = Xr
        hid_pre = joint @ self.weights["w_hid"] + self.weights["b_hid"]
        hid = _relu(hid_pre)
        score = (hid @ self.weights["w_acc"] + self.weights["b_acc"]).ravel()
        losses, dscore = huber(score, y)
        dscore = (dscore / n).reshape(-1, 1)

        grads = {
            "w_acc": hid.T @ dscore,
            "b_acc": dscore.sum(axis=0),
        }
        dhid = (dscore @ self.weights["w_acc"].T) * (hid_pre > 0)
        grads["w_hid"] = joint.T @ dhid
        grads["b_hid"] = dhid.sum(axis=0)
        if self.has_encoder:
            djoint = dhid @ self.weights["w_hid"].T
            denc = djoint[:, :self.width] * (enc_pre > 0)
            grads["w_enc"] = Xa.T @ denc
            grads["b_enc"] = denc.sum(axis=0)
        return float(losses.mean()), grads

    def _proxy_loss_grads(self, Xa: np.ndarray, T: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Huber loss summed over the two proxy targets, averaged over the batch."""
        n = Xa.shape[0]
        enc_pre, enc = self._encode(Xa)
        out = enc @ self.weights["w_prox"] + self.weights["b_prox"]
        losses, dout = huber(out, T)
        dout = dout / n
        grads = {
            "w_prox": enc.T @ dout,
            "b_prox": dout.sum(axis=0),
        }
        denc = (dout @ self.weights["w_prox"].T) * (enc_pre > 0)
        grads["w_enc"] = Xa.T @ denc
        grads["b_enc"] = denc.sum(axis=0)
        return float(losses.sum(axis=1).mean()), grads

    # -- training ---------------------------------------------------------

    def _sgd_epochs(self, X, targets, loss_grads, names, epochs, lr, rng, l2=0.0):
        """Mini-batch SGD+momentum over `epochs`; returns per-epoch mean losses.

        `l2` adds weight decay to the weight matrices (never biases); it
        lives here rather than in the loss so gradient_check still verifies
        the pure loss gradient.
        """
        n = X.shape[0]
        velocity = {k: np.zeros_like(self.weights[k]) for k in names}
        trace = []
        for _ in range(epochs):
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                loss, grads = loss_grads(X[idx], targets[idx])
                losses.append(loss)
                for k in names:
                    g = grads[k]
                    if l2 and k.startswith("w_"):
                        g = g + l2 * self.weights[k]
                    velocity[k] = self.momentum * velocity[k] + g
                    self.weights[k] -= lr * velocity[k]
            trace.append(float(np.mean(losses)))
        return trace

    def pretrain(self, X_arch, flops, params, split: float = 0.8,
                 epochs: int | None = None, seed: int | None = None) -> FitReport:
        """Fit encoder + proxy head on raw architecture statistics.

        Targets are min-max normalized over the supplied pool and the
        constants are stored on the net so later queries stay consistent.
        Stops early once the best validation MSE has not improved by 1e-6
        for 10 epochs.
        """
        if not self.has_encoder:
            raise ShapeError("recipe-only predictor cannot be pretrained")
        Xa = check_matrix(X_arch, self.arch_dim, "arch prefix")
        if Xa.shape[0] == 0:
            raise ValueError("empty pretraining pool")
        fl = np.asarray(flops, dtype=np.float64)
        pa = np.asarray(params, dtype=np.float64)
        epochs = self.pretrain_epochs if epochs is None else epochs
        seed = derive_seed(self.seed, "pretrain") if seed is None else seed

        self.norm_ = {
            "flops_min": float(fl.min()), "flops_max": float(fl.max()),
            "params_min": float(pa.min()), "params_max": float(pa.max()),
        }
        T = np.stack([self._normalize(fl, "flops"), self._normalize(pa, "params")], axis=1)

        rng = np.random.default_rng(seed)
        order = rng.permutation(Xa.shape[0])
        n_train = max(1, int(round(split * Xa.shape[0])))
        tr, va = order[:n_train], order[n_train:]

        names = ["w_enc", "b_enc", "w_prox", "b_prox"]
        velocity = {k: np.zeros_like(self.weights[k]) for k in names}
        trace: list[float] = []
        val_hist: list[float] = []
        for epoch in range(epochs):
            ep_order = rng.permutation(tr)
            losses = []
            for start in range(0, len(tr), self.batch_size):
                idx = ep_order[start:start + self.batch_size]
                loss, grads = self._proxy_loss_grads(Xa[idx], T[idx])
                losses.append(loss)
                for k in names:
                    velocity[k] = self.momentum * velocity[k] + grads[k]
                    self.weights[k] -= self.learning_rate * velocity[k]
            trace.append(float(np.mean(losses)))
            val_hist.append(self._proxy_mse(Xa[va], T[va]) if len(va) else self._proxy_mse(Xa[tr], T[tr]))
            if len(val_hist) > 10 and min(val_hist[-10:]) > min(val_hist[:-10]) - 1e-6:
                break

        self.pretrained_ = True
        val_idx = va if len(va) else tr
        return FitReport(
            train_mse=self._proxy_mse(Xa[tr], T[tr]),
            val_mse=self._proxy_mse(Xa[val_idx], T[val_idx]),
            val_rank_correlation=self._proxy_rank_corr(Xa[val_idx], T[val_idx]),
            epochs_run=len(trace),
            loss_trace=tuple(trace),
            pretrained=True,
        )

    def fit(self, X, y, X_val=None, y_val=None, seed: int | None = None) -> "FitReport":
        """Two-phase accuracy training on labeled (vector, accuracy) pairs.

        Phase 1 trains the hidden layer and accuracy head with the encoder
        frozen; phase 2 trains everything at learning_rate * phase2_lr_scale.
        """
        X = check_matrix(X, self.arch_dim + self.recipe_dim, "encoded vector")
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] == 0:
            raise ValueError("empty training set")
        seed = derive_seed(self.seed, "fit") if seed is None else seed
        rng = np.random.default_rng(seed)

        head_names = ["w_hid", "b_hid", "w_acc", "b_acc"]
        all_names = head_names + (["w_enc", "b_enc"] if self.has_encoder else [])
        trace = self._sgd_epochs(X, y, self.accuracy_loss_grads, head_names,
                                 self.phase_epochs, self.learning_rate, rng, l2=self.fit_l2)
        trace += self._sgd_epochs(X, y, self.accuracy_loss_grads, all_names,
                                  self.phase_epochs, self.learning_rate * self.phase2_lr_scale, rng,
                                  l2=self.fit_l2)

        val_mse = val_rho = None
        if X_val is not None:
            pv = self.predict(X_val)
            yv = np.asarray(y_val, dtype=np.float64)
            val_mse = float(np.mean((pv - yv) ** 2))
            try:
                val_rho = spearman(pv, yv)
            except UndefinedCorrelationError:
                val_rho = None
        return FitReport(
            train_mse=float(np.mean((self.predict(X) - y) ** 2)),
            val_mse=val_mse,
            val_rank_correlation=val_rho,
            epochs_run=len(trace),
            loss_trace=tuple(trace),
            pretrained=self.pretrained_,
        )

    # -- helpers ----------------------------------------------------------

    def _normalize(self, values: np.ndarray, which: str) -> np.ndarray:
        lo, hi = self.norm_[f"{which}_min"], self.norm_[f"{which}_max"]
        span = hi - lo
        if span == 0:
            return np.zeros_like(values)
        return (values - lo) / span

    def normalize_costs(self, flops, params) -> np.ndarray:
        """Normalize raw cost pairs with the stored pretraining constants."""
        if self.norm_ is None:
            raise ValueError("predictor has no stored normalization (pretrain first)")
        fl = np.asarray(flops, dtype=np.float64)
        pa = np.asarray(params, dtype=np.float64)
        return np.stack([self._normalize(fl, "flops"), self._normalize(pa, "params")], axis=1)

    def _proxy_mse(self, Xa: np.ndarray, T: np.ndarray) -> float:
        pred = self.predict_proxy(Xa)
        return float(np.mean((pred - T) ** 2))

    def _proxy_rank_corr(self, Xa: np.ndarray, T: np.ndarray) -> float | None:
        if Xa.shape[0] < 2:
            return None
        try:
            return spearman(self.predict_proxy(Xa)[:, 0], T[:, 0])
        except UndefinedCorrelationError:
            return None

    def clone_weights(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.weights.items()}

    def restore_weights(self, snapshot: dict[str, np.ndarray]) -> None:
        self.weights = {k: v.copy() for k, v in snapshot.items()}

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "params": {
                "arch_dim": self.arch_dim, "recipe_dim": self.recipe_dim, "width": self.width,
                "learning_rate": self.learning_rate, "phase2_lr_scale": self.phase2_lr_scale,
                "momentum": self.momentum, "batch_size": self.batch_size,
                "phase_epochs": self.phase_epochs, "pretrain_epochs": self.pretrain_epochs,
                "fit_l2": self.fit_l2,
                "layout_fingerprint": self.layout_fingerprint, "seed": self.seed,
            },
            "weights": {k: v.tolist() for k, v in self.weights.items()},
            "norm": self.norm_,
            "pretrained": self.pretrained_,
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path: str | Path, expect_layout: str | None = None) -> "TwoHeadPredictor":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise CheckpointError(f"cannot read predictor checkpoint {path}: {e}") from e
        if payload.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {payload.get('version')!r}")
        if expect_layout is not None and payload["params"]["layout_fingerprint"] != expect_layout:
            raise CheckpointError("encoding layout fingerprint mismatch")
        net = cls(**payload["params"])
        net.weights = {k: np.asarray(v, dtype=np.float64) for k, v in payload["weights"].items()}
        net.norm_ = payload["norm"]
        net.pretrained_ = payload["pretrained"]
        return net


def gradient_check(net: TwoHeadPredictor, vector, target: float,
                   step: float = 1e-5) -> GradientCheckReport:
    """Compare analytic accuracy-loss gradients against central differences.

    Skips (with a flag) when the residual sits inside the Huber kink
    neighborhood |pred - target| in (1 - 1e-4, 1 + 1e-4), where the loss is
    not differentiable.
    """
    x = np.asarray(vector, dtype=np.float64).reshape(1, -1)
    y = np.asarray([target], dtype=np.float64)

    residual = abs(net.predict_one(x) - target)
    if 1.0 - 1e-4 < residual < 1.0 + 1e-4:
        return GradientCheckReport(max_rel_error=float("nan"), checked=0, skipped_kink=True)

    _, grads = net.accuracy_loss_grads(x, y)
    worst = 0.0
    checked = 0
    for name in net.weights:
        w = net.weights[name]
        g = grads.get(name)
        flat = w.reshape(-1)
        analytic = np.zeros_like(flat) if g is None else g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up, _ = huber(net.predict_one(x), target)
            flat[i] = orig - step
            down, _ = huber(net.predict_one(x), target)
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            rel = abs(analytic[i] - numeric) / max(abs(analytic[i]) + abs(numeric), 1e-6)
            worst = max(worst, rel)
            checked += 1
    return GradientCheckReport(max_rel_error=worst, checked=checked)

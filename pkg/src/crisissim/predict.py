"""Severity forecasting with per-step uncertainty and 90% intervals.

A feed-forward net maps a 32-dimensional incident descriptor to a 6-step
forecast: one mean and one log-variance per step. Training minimizes the
Gaussian negative log-likelihood; variances are floored at 1e-6 by clamping
the log-variance, which also makes constant-target datasets safe. Intervals
use the 1.645 normal quantile (90% two-sided).

Input layout (version 1):
    0..3    category one-hot (wildfire, severe storm, hurricane, flood)
    4       current severity / 10
    5..6    lat / 90, lon / 180
    7..10   sin/cos day-of-year, sin/cos hour-of-day
    11..18  trailing 8 severity observations / 10 (oldest first)
    19..24  weather covariates, normalized
    25..28  engaged-resource fraction per type
    29..31  reserved, zero
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_array, check_is_fitted, check_random_state
from .nn import MLP, Adam

__all__ = [
    "INPUT_DIM",
    "HORIZON",
    "VAR_FLOOR",
    "Z90",
    "INPUT_LAYOUT_VERSION",
    "PredOutput",
    "ForecastConfig",
    "build_input",
    "validate_input",
    "nll_from_outputs",
    "nll_loss_and_grad",
    "SeverityForecaster",
]

INPUT_DIM = 32
HORIZON = 6
VAR_FLOOR = 1e-6
Z90 = 1.645  # two-sided 90% normal quantile
INPUT_LAYOUT_VERSION = 1

_LOG_FLOOR = math.log(VAR_FLOOR)


@dataclass(frozen=True)
class PredOutput:
    mean: tuple[float, ...]
    variance: tuple[float, ...]

    def __post_init__(self):
        if len(self.mean) != len(self.variance):
            raise ValueError("mean/variance length mismatch")
        if any(v < VAR_FLOOR - 1e-15 for v in self.variance):
            raise ValueError("variance below floor")

    @property
    def ci90(self) -> tuple[tuple[float, float], ...]:
        return tuple(
            (m - Z90 * math.sqrt(v), m + Z90 * math.sqrt(v))
            for m, v in zip(self.mean, self.variance))

    def covers(self, step: int, value: float) -> bool:
        lo, hi = self.ci90[step]
        return lo <= value <= hi


def build_input(category_idx: int, severity: float, lat: float, lon: float,
                day_of_year: float, hour: float,
                trailing: list[float] | None = None,
                weather: list[float] | None = None,
                engaged: list[float] | None = None) -> np.ndarray:
    v = np.zeros(INPUT_DIM)
    if not (0 <= category_idx < 4):
        raise ValueError(f"category index {category_idx} out of range")
    v[category_idx] = 1.0
    v[4] = severity / 10.0
    v[5] = lat / 90.0
    v[6] = lon / 180.0
    v[7] = math.sin(2 * math.pi * day_of_year / 365.25)
    v[8] = math.cos(2 * math.pi * day_of_year / 365.25)
    v[9] = math.sin(2 * math.pi * hour / 24.0)
    v[10] = math.cos(2 * math.pi * hour / 24.0)
    trailing = list(trailing or [])[-8:]
    trailing = [severity] * (8 - len(trailing)) + trailing
    v[11:19] = np.array(trailing) / 10.0
    if weather is not None:
        v[19:19 + min(6, len(weather))] = np.asarray(weather)[:6]
    if engaged is not None:
        v[25:25 + min(4, len(engaged))] = np.asarray(engaged)[:4]
    return v


def validate_input(x: np.ndarray) -> None:
    x = np.asarray(x)
    if x.shape[-1] != INPUT_DIM:
        raise ValueError(f"expected {INPUT_DIM} dims, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    one_hot = np.atleast_2d(x)[:, :4]
    if not np.allclose(one_hot.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("category one-hot block must sum to 1")
    if np.any(np.atleast_2d(x)[:, 29:] != 0.0):
        raise ValueError("reserved dims must be zero")


def _split_heads(out: np.ndarray, horizon: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(means, clamped log-variances, clamp mask) from raw net output."""
    mu = out[:, :horizon]
    lv_raw = out[:, horizon:]
    lv = np.maximum(lv_raw, _LOG_FLOOR)
    return mu, lv, (lv_raw > _LOG_FLOOR)


def nll_from_outputs(mu: np.ndarray, var: np.ndarray, y: np.ndarray) -> float:
    """Mean Gaussian NLL of targets y (n, H) under per-step (mu, var)."""
    var = np.maximum(var, VAR_FLOOR)
    terms = 0.5 * np.log(2 * math.pi * var) + (y - mu) ** 2 / (2 * var)
    return float(terms.sum(axis=1).mean())


def nll_loss_and_grad(net: MLP, x: np.ndarray, y: np.ndarray
                      ) -> tuple[float, np.ndarray]:
    """Mean NLL over the batch and its gradient wrt the flat net parameters."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite targets")
    horizon = y.shape[1]
    out, cache = net.forward(x)
    if out.shape[1] != 2 * horizon:
        raise ValueError(f"net outputs {out.shape[1]} values, need {2 * horizon}")
    mu, lv, live = _split_heads(out, horizon)
    var = np.exp(lv)
    n = x.shape[0]
    resid = y - mu
    loss = float((0.5 * np.log(2 * math.pi * var) + resid ** 2 / (2 * var)).sum(axis=1).mean())
    if not math.isfinite(loss):
        raise FloatingPointError("non-finite forecast loss")

    grad_out = np.zeros_like(out)
    grad_out[:, :horizon] = -resid / var / n
    grad_out[:, horizon:] = (0.5 - resid ** 2 / (2 * var)) * live / n
    gw, gb, _ = net.backward(cache, grad_out)
    return loss, MLP.flatten_grads(gw, gb)


@dataclass(frozen=True)
class ForecastConfig:
    hidden: tuple[int, int] = (64, 64)
    learning_rate: float = 5e-3
    batch_size: int = 32
    max_epochs: int = 400
    patience: int = 20
    val_frac: float = 0.2


class SeverityForecaster(BaseEstimator):
    """Probabilistic multi-step forecaster (fit/predict, seeded)."""

    CHECKPOINT_VERSION = 1

    def __init__(self, input_dim: int = INPUT_DIM, horizon: int = HORIZON,
                 config: ForecastConfig = ForecastConfig(), seed: int = 0):
        self.input_dim = input_dim
        self.horizon = horizon
        self.config = config
        self.seed = seed
        self.net_: MLP | None = None

    def fit(self, X, Y) -> "SeverityForecaster":
        x = check_array(X, name="X")
        y = check_array(Y, name="Y")
        if x.shape[0] != y.shape[0]:
            raise ValueError("X and Y row counts differ")
        if x.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        if y.shape[1] != self.horizon:
            raise ValueError(f"targets must have {self.horizon} columns")
        cfg = self.config
        rng = check_random_state(self.seed)
        net = MLP((self.input_dim, *cfg.hidden, 2 * self.horizon), rng, out_scale=0.1)
        opt = Adam(lr=cfg.learning_rate)

        order = rng.permutation(x.shape[0])
        n_val = max(1, int(round(x.shape[0] * cfg.val_frac)))
        idx_val, idx_train = order[:n_val], order[n_val:]
        if idx_train.size == 0:
            idx_train = idx_val

        best_nll = math.inf
        best_params = net.get_flat()
        stale = 0
        history = []
        for _ in range(cfg.max_epochs):
            perm = rng.permutation(idx_train)
            for start in range(0, len(perm), cfg.batch_size):
                batch = perm[start:start + cfg.batch_size]
                _, grads = nll_loss_and_grad(net, x[batch], y[batch])
                net.set_flat(opt.step(net.get_flat(), grads))
            val_nll, _ = nll_loss_and_grad(net, x[idx_val], y[idx_val])
            history.append(val_nll)
            if val_nll < best_nll - 1e-12:
                best_nll = val_nll
                best_params = net.get_flat()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        net.set_flat(best_params)
        self.net_ = net
        self.val_nll_ = best_nll
        self.val_history_ = history
        return self

    def forecast(self, x: np.ndarray) -> PredOutput:
        """Pure single-input forecast with validated input invariants."""
        check_is_fitted(self, "net_")
        validate_input(x)
        mu, var = self._raw(np.atleast_2d(x))
        return PredOutput(tuple(float(m) for m in mu[0]),
                          tuple(float(v) for v in var[0]))

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """(means, variances) arrays for a batch; rows follow X."""
        check_is_fitted(self, "net_")
        return self._raw(check_array(X))

    def _raw(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out, _ = self.net_.forward(np.asarray(x, dtype=np.float64))
        mu, lv, _ = _split_heads(out, self.horizon)
        return mu, np.maximum(np.exp(lv), VAR_FLOOR)

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self, "net_")
        np.savez_compressed(
            path,
            version=np.array([self.CHECKPOINT_VERSION]),
            sizes=np.array(self.net_.sizes),
            params=self.net_.get_flat(),
            config=np.frombuffer(json.dumps({
                "input_dim": self.input_dim, "horizon": self.horizon,
            }).encode(), dtype=np.uint8),
        )

    @classmethod
    def load(cls, path) -> "SeverityForecaster":
        data = np.load(path, allow_pickle=False)
        if int(data["version"][0]) != cls.CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data['version'][0]}")
        meta = json.loads(bytes(data["config"]).decode())
        fc = cls(input_dim=meta["input_dim"], horizon=meta["horizon"])
        sizes = tuple(int(s) for s in data["sizes"])
        net = MLP(sizes, np.random.default_rng(0))
        net.set_flat(data["params"])
        fc.net_ = net
        return fc

"""Graph-augmented LSTM forecaster trained with truncated BPTT.

Each node runs an LSTM over its own lagged observations. Before the linear
read-out, the node's hidden state is shifted by the mean of its neighbors'
hidden states from the previous step::

    h_out[i, t] = h[i, t] + mean_{j in N(i)} h[j, t-1]
    y_hat[i, t] = V . h_out[i, t] + c

Only the raw ``h`` is carried to the next step, so influence travels one hop
per step. With augmentation disabled ``h_out = h`` and nodes are independent.

Gate blocks in ``W``, ``U`` and ``b`` are ordered input, forget, candidate,
output (``GATE_ORDER``).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from glad.core import ForecastSet, NormalizationParams, Panel, SeededRng
from glad.graph import Graph, NeighborTable, build_neighbor_table

log = logging.getLogger(__name__)

GATE_ORDER = "ifgo"
CHECKPOINT_VERSION = 1


class NumericError(FloatingPointError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(eq=False)
class LstmParams:
    """LSTM weights plus the linear read-out.

    Shared parameters have shapes ``W (4H, D)``, ``U (4H, H)``, ``b (4H,)``,
    ``V (H,)``, ``c ()``; per-node parameters add a leading node axis.
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    V: np.ndarray
    c: np.ndarray

    NAMES = ("W", "U", "b", "V", "c")

    @property
    def hidden_size(self) -> int:
        return self.U.shape[-1]

    @property
    def per_node(self) -> bool:
        return self.U.ndim == 3

    def arrays(self) -> list:
        return [getattr(self, k) for k in self.NAMES]

    def copy(self) -> "LstmParams":
        return LstmParams(*(a.copy() for a in self.arrays()))

    def node(self, i: int) -> "LstmParams":
        """Parameters a single node sees, in shared layout."""
        if not self.per_node:
            return self
        return LstmParams(*(a[i] for a in self.arrays()))


def init_params(hidden_size: int, seed: int, n_nodes: Optional[int] = None, input_size: int = 1) -> LstmParams:
    """Xavier-uniform weights, zero biases except forget gate +1.

    ``n_nodes`` given means per-node parameters.
    """
    rng = SeededRng(seed)
    H, D = hidden_size, input_size
    lead = () if n_nodes is None else (n_nodes,)

    def xavier(fan_out, fan_in):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=lead + (fan_out, fan_in))

    W = xavier(4 * H, D)
    U = xavier(4 * H, H)
    b = np.zeros(lead + (4 * H,))
    b[..., H:2 * H] = 1.0
    V = xavier(1, H)[..., 0, :]
    c = np.zeros(lead)
    return LstmParams(W, U, b, V, c)


@dataclass(eq=False)
class GraphLstmModel:
    params: LstmParams
    table: NeighborTable
    augment: bool = True

    @property
    def n_nodes(self) -> int:
        return len(self.table.neighbors)

    @property
    def hidden_size(self) -> int:
        return self.params.hidden_size

    def with_graph(self, graph: Graph) -> "GraphLstmModel":
        return replace(self, table=build_neighbor_table(graph))


def make_model(graph: Graph, hidden_size: int = 32, seed: int = 0, augment: bool = True,
               per_node: bool = False) -> GraphLstmModel:
    params = init_params(hidden_size, seed, graph.n_nodes if per_node else None)
    return GraphLstmModel(params, build_neighbor_table(graph), augment)


@dataclass
class TrainConfig:
    """Optimization settings. None of these are prescribed by the method itself."""

    epochs: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    window: int = 64
    batch_windows: int = 8
    burn_in: int = 8
    clip_norm: float = 5.0
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        for k in ("epochs", "learning_rate", "window", "batch_windows", "clip_norm", "patience"):
            if not getattr(self, k) > 0:
                raise ValueError(f"TrainConfig.{k} must be positive")
        if not 0 <= self.burn_in < self.window:
            raise ValueError("TrainConfig.burn_in must lie in [0, window)")


# -- forward / backward -------------------------------------------------------

def _affine(A, x, exact):
    """``A @ x`` over the last axis for shared ``(K, M)`` or per-node ``(n, K, M)`` A.

    ``exact`` reduces with an explicit sum so that every output row is computed
    identically regardless of how many rows are batched together.
    """
    if exact:
        return (x[..., None, :] * A).sum(axis=-1)
    if A.ndim == 2:
        return x @ A.T
    return np.einsum("...nm,nkm->...nk", x, A)


def _readout(V, h, exact):
    if exact:
        return (h * V).sum(axis=-1)
    if V.ndim == 1:
        return h @ V
    return np.einsum("...nh,nh->...n", h, V)


def lstm_cell_forward(params: LstmParams, x, h_prev, c_prev, exact=True, step=None):
    """One LSTM step. Returns ``(h, c, cache)``; ``x`` has trailing size D."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite input at time step {step}")
    H = params.hidden_size
    z = _affine(params.W, x, exact) + _affine(params.U, h_prev, exact) + params.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, g, o, tc)


def _forward(model: GraphLstmModel, inputs, h0=None, c0=None, exact=True, keep_cache=False):
    """Run the recurrence over ``inputs`` of shape ``(..., n, L)``.

    Returns predictions ``(..., n, L)`` where column t forecasts the value that
    follows ``inputs[..., t]``, the final ``(h, c)`` and optionally the caches.
    """
    p = model.params
    lead = inputs.shape[:-1]
    H = p.hidden_size
    h = np.zeros(lead + (H,)) if h0 is None else h0
    c = np.zeros(lead + (H,)) if c0 is None else c0
    M = model.table.mean_matrix() if model.augment else None
    L = inputs.shape[-1]
    preds = np.empty(inputs.shape)
    caches = []
    for t in range(L):
        h_new, c, cache = lstm_cell_forward(p, inputs[..., t:t + 1], h, c, exact, step=t)
        hout = h_new + M @ h if M is not None else h_new
        preds[..., t] = _readout(p.V, hout, exact) + p.c
        if keep_cache:
            caches.append(cache + (hout,))
        h = h_new
    return preds, (h, c), caches


def graph_forward(model: GraphLstmModel, window, state=None):
    """Forecasts for a panel window of shape ``(n_nodes, L)``.

    ``forecasts[:, t]`` is the one-step forecast of the value after
    ``window[:, t]``. ``state`` is an optional ``(h, c)`` pair to resume from.
    """
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] != model.n_nodes:
        raise ValueError(f"window shape {window.shape} does not match {model.n_nodes} nodes")
    h0, c0 = state if state is not None else (None, None)
    preds, final, _ = _forward(model, window, h0, c0, exact=True)
    return preds, final


def loss_and_grads(model: GraphLstmModel, inputs, targets, weights):
    """Weighted MSE over ``(..., n, L)`` arrays and its BPTT gradient.

    ``weights`` are 0/1 loss masks; the loss is their weighted mean.
    """
    p = model.params
    preds, _, caches = _forward(model, inputs, exact=False, keep_cache=True)
    total = weights.sum()
    if total == 0:
        return 0.0, [np.zeros_like(a) for a in p.arrays()]
    err = preds - targets
    loss = float((weights * err * err).sum() / total)
    dy = 2.0 * weights * err / total

    H = p.hidden_size
    per_node = p.per_node
    # shared params reduce over every leading axis including the node axis
    red = tuple(range(inputs.ndim - 2 if per_node else inputs.ndim - 1))
    M = model.table.mean_matrix() if model.augment else None

    gW, gU, gb, gV, gc = (np.zeros_like(a) for a in p.arrays())
    lead = inputs.shape[:-1]
    dh_next = np.zeros(lead + (H,))
    dc_next = np.zeros(lead + (H,))
    dh_aug = np.zeros(lead + (H,))
    for t in range(inputs.shape[-1] - 1, -1, -1):
        x, h_prev, c_prev, i, f, g, o, tc, hout = caches[t]
        dyt = dy[..., t]
        gV += (dyt[..., None] * hout).sum(axis=red)
        gc += dyt.sum(axis=red)
        dhout = dyt[..., None] * p.V
        dh = dhout + dh_next + dh_aug
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            dh * tc * o * (1.0 - o),
        ], axis=-1)
        gW += (dz[..., :, None] * x[..., None, :]).sum(axis=red)
        gU += (dz[..., :, None] * h_prev[..., None, :]).sum(axis=red)
        gb += dz.sum(axis=red)
        if per_node:
            dh_next = np.einsum("...nk,nkh->...nh", dz, p.U)
        else:
            dh_next = dz @ p.U
        dc_next = dc * f
        dh_aug = M.T @ dhout if M is not None else 0.0
    return loss, [gW, gU, gb, gV, gc]


# -- training -------------------------------------------------------------------

@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1


class Adam:
    def __init__(self, params: LstmParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: LstmParams, grads):
        cfg = self.cfg
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        lr = cfg.learning_rate * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k, (name, g) in enumerate(zip(LstmParams.NAMES, grads)):
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            setattr(params, name, getattr(params, name) - lr * self.m[k] / (np.sqrt(self.v[k]) + cfg.adam_eps))


def clip_grads(grads, max_norm):
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads, norm


def loss_weights(panel: Panel) -> np.ndarray:
    """1 where a target may enter the loss: observed and not labeled anomalous."""
    return (panel.mask & ~panel.label_matrix()).astype(float)


def evaluation_mse(model: GraphLstmModel, panel: Panel, eval_range: range) -> float:
    fc = forecast_one_step(model, panel, eval_range, exact=False)
    y = panel.filled_values()[:, eval_range.start:eval_range.stop]
    w = loss_weights(panel)[:, eval_range.start:eval_range.stop]
    if w.sum() == 0:
        return float("nan")
    return float((w * (fc.values - y) ** 2).sum() / w.sum())


def train(model: GraphLstmModel, panel: Panel, train_range: range, cfg: TrainConfig,
          val_range: Optional[range] = None) -> tuple[GraphLstmModel, TrainHistory]:
    """Fit by Adam on random-offset windows of the training range.

    Windows of ``cfg.window`` steps start from zero state; the first
    ``cfg.burn_in`` positions of each window are excluded from the loss.
    With ``val_range``, training stops after ``cfg.patience`` epochs without
    validation improvement and the best parameters are restored.
    """
    L = cfg.window
    if len(train_range) < L + 1:
        raise ValueError(f"training range of {len(train_range)} steps shorter than window + 1 = {L + 1}")
    values = panel.filled_values()[:, train_range.start:train_range.stop]
    weights = loss_weights(panel)[:, train_range.start:train_range.stop]
    rng = SeededRng(cfg.seed)
    params = model.params.copy()
    model = replace(model, params=params)
    opt = Adam(params, cfg)
    history = TrainHistory()
    best = (math.inf, params.copy())
    stale = 0
    n_steps = values.shape[1]
    for epoch in range(cfg.epochs):
        offset = int(rng.integers(0, L))
        starts = np.arange(offset, n_steps - L, L)
        if starts.size == 0:
            starts = np.array([0])
        starts = rng.permutation(starts)
        epoch_loss, epoch_w = 0.0, 0.0
        for k in range(0, starts.size, cfg.batch_windows):
            idx = starts[k:k + cfg.batch_windows, None] + np.arange(L + 1)
            win = np.moveaxis(values[:, idx], 0, 1)  # (B, n, L+1)
            w = np.moveaxis(weights[:, idx[:, 1:]], 0, 1).copy()
            w[..., :cfg.burn_in] = 0.0
            loss, grads = loss_and_grads(model, win[..., :-1], win[..., 1:], w)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
            grads, _ = clip_grads(grads, cfg.clip_norm)
            opt.step(params, grads)
            epoch_loss += loss * w.sum()
            epoch_w += w.sum()
        history.train_loss.append(epoch_loss / max(epoch_w, 1.0))
        if val_range is not None:
            vl = evaluation_mse(model, panel, val_range)
            if not math.isfinite(vl):
                raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
            history.val_loss.append(vl)
            if vl < best[0]:
                best = (vl, params.copy())
                history.best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        log.debug("epoch %d train %.5f", epoch, history.train_loss[-1])
    if val_range is not None:
        model = replace(model, params=best[1])
    else:
        history.best_epoch = len(history.train_loss) - 1
    return model, history


def forecast_one_step(model: GraphLstmModel, panel: Panel, eval_range: range, exact: bool = True) -> ForecastSet:
    """Teacher-forced one-step forecasts for ``eval_range``.

    The recurrence is warmed up from time 0, so the forecast at t only sees
    observations before t.
    """
    if eval_range.start < 1:
        raise ValueError("evaluation must start at t >= 1 (one step of history needed)")
    if panel.n_nodes != model.n_nodes:
        raise ValueError(f"panel has {panel.n_nodes} nodes, model {model.n_nodes}")
    values = panel.filled_values()
    preds, _, _ = _forward(model, values[:, :eval_range.stop - 1], exact=exact)
    return ForecastSet(eval_range.start, preds[:, eval_range.start - 1:])


# -- checkpoints ----------------------------------------------------------------

def save_checkpoint(path, model: GraphLstmModel, norm: Optional[NormalizationParams] = None,
                    config: Optional[dict] = None):
    """Write an ``.npz`` checkpoint with a versioned header."""
    header = {
        "format": "glad-graph-lstm",
        "version": CHECKPOINT_VERSION,
        "gate_order": GATE_ORDER,
        "hidden_size": model.hidden_size,
        "n_nodes": model.n_nodes,
        "per_node": model.params.per_node,
        "augment": model.augment,
        "neighbors": [list(nb) for nb in model.table.neighbors],
        "config": config or {},
    }
    arrays = {f"param_{k}": getattr(model.params, k) for k in LstmParams.NAMES}
    if norm is not None:
        arrays["norm_mean"] = norm.mean
        arrays["norm_std"] = norm.std
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path):
    """Returns ``(model, norm_params_or_None, config)``."""
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != "glad-graph-lstm" or header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint header in {path}")
        if header["gate_order"] != GATE_ORDER:
            raise ValueError(f"checkpoint gate order {header['gate_order']!r} != {GATE_ORDER!r}")
        params = LstmParams(*(z[f"param_{k}"] for k in LstmParams.NAMES))
        norm = NormalizationParams(z["norm_mean"], z["norm_std"]) if "norm_mean" in z else None
    nbrs = tuple(tuple(nb) for nb in header["neighbors"])
    table = NeighborTable(nbrs, np.array([len(nb) for nb in nbrs], dtype=int))
    return GraphLstmModel(params, table, header["augment"]), norm, header["config"]


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)

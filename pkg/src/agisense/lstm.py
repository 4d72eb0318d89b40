"""Single-layer LSTM sequence classifier, trained by backpropagation through time.

Nine unrolled timesteps (one per pre-event window) of a 256-unit layer feed
a sigmoid output head.  Gradients are exact BPTT on the mean binary
cross-entropy; training uses Adam with shuffled mini-batches and early
stopping on the validation weighted F1.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .metrics import TrainLog, weighted_f1

MODEL_SCHEMA = "agisense-lstm/1"

# Normalized features span [0, 100]; the gates want order-1 inputs.
INPUT_SCALE = 0.01

GATES = ("i", "f", "o", "g")


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class LstmHyperparams:
    hidden_size: int = 256
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


class LstmParams:
    """Gate weights for one LSTM layer plus the sigmoid output head.

    Internally the four gates (input, forget, output, candidate) are stacked
    into single arrays; the per-gate matrices are exposed as views.
    """

    def __init__(self, n_inputs: int, hidden_size: int,
                 W: np.ndarray, U: np.ndarray, b: np.ndarray,
                 w_out: np.ndarray, b_out: float):
        H = hidden_size
        if W.shape != (4 * H, n_inputs) or U.shape != (4 * H, H) or b.shape != (4 * H,):
            raise ValueError("stacked gate parameter shapes are inconsistent")
        if w_out.shape != (H,):
            raise ValueError("output weight shape mismatch")
        self.n_inputs = n_inputs
        self.hidden_size = H
        self.W = W
        self.U = U
        self.b = b
        self.w_out = w_out
        self.b_out = float(b_out)

    def _gate(self, arr: np.ndarray, name: str) -> np.ndarray:
        k = GATES.index(name)
        H = self.hidden_size
        return arr[k * H:(k + 1) * H]

    def __getattr__(self, name: str):
        # W_i, U_f, b_g, ... resolve to views into the stacked arrays.
        if len(name) == 3 and name[1] == "_" and name[2] in GATES:
            base = {"W": "W", "U": "U", "b": "b"}.get(name[0])
            if base is not None:
                return self._gate(getattr(self, base), name[2])
        raise AttributeError(name)

    def copy(self) -> "LstmParams":
        return LstmParams(self.n_inputs, self.hidden_size, self.W.copy(),
                          self.U.copy(), self.b.copy(), self.w_out.copy(), self.b_out)

    def check_finite(self):
        for arr in (self.W, self.U, self.b, self.w_out):
            if not np.all(np.isfinite(arr)):
                raise DivergenceError("non-finite parameter value")
        if not np.isfinite(self.b_out):
            raise DivergenceError("non-finite parameter value")


def init_params(n_inputs: int, hidden_size: int, seed: int) -> LstmParams:
    """Glorot-uniform gate weights, zero biases except forget-gate bias of 1."""
    rng = np.random.default_rng(seed)
    H = hidden_size

    def glorot(fan_in, fan_out, shape):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    W = np.vstack([glorot(n_inputs, H, (H, n_inputs)) for _ in GATES])
    U = np.vstack([glorot(H, H, (H, H)) for _ in GATES])
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0  # forget gate
    w_out = glorot(H, 1, (H,))
    return LstmParams(n_inputs, H, W, U, b, w_out, 0.0)


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_forward(params: LstmParams, seqs: np.ndarray, want_cache: bool = False):
    """Run the recurrence over a batch of sequences.

    ``seqs`` is (batch, steps, n_inputs) or a single (steps, n_inputs)
    sequence.  Returns probabilities (and the activation cache when asked).
    """
    seqs = np.asarray(seqs, dtype=float)
    single = seqs.ndim == 2
    if single:
        seqs = seqs[None]
    B, T, D = seqs.shape
    if D != params.n_inputs:
        raise ValueError(f"sequence width {D} != model inputs {params.n_inputs}")
    H = params.hidden_size
    x = seqs * INPUT_SCALE

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = {"x": x, "i": [], "f": [], "o": [], "g": [],
             "c": [], "tanh_c": [], "h_prev": [], "c_prev": []} if want_cache else None
    for t in range(T):
        a = x[:, t, :] @ params.W.T + h @ params.U.T + params.b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H:2 * H])
        o = _sigmoid(a[:, 2 * H:3 * H])
        g = np.tanh(a[:, 3 * H:])
        if want_cache:
            cache["h_prev"].append(h)
            cache["c_prev"].append(c)
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        if want_cache:
            for key, val in (("i", i), ("f", f), ("o", o), ("g", g),
                             ("c", c), ("tanh_c", tanh_c)):
                cache[key].append(val)

    z = h @ params.w_out + params.b_out
    p = _sigmoid(z)
    if want_cache:
        cache["h_last"] = h
        cache["z"] = z
        cache["p"] = p
    if single:
        p = p[0]
    return (p, cache) if want_cache else p


def bce_loss(params: LstmParams, seqs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy, computed stably from the raw output."""
    seqs = np.atleast_3d(np.asarray(seqs, dtype=float))
    labels = np.asarray(labels, dtype=float)
    p, cache = lstm_forward(params, seqs, want_cache=True)
    z = cache["z"]
    return float(np.mean(np.logaddexp(0.0, z) - labels * z))


def lstm_gradients(
    params: LstmParams, seqs: np.ndarray, labels: np.ndarray
) -> tuple[dict[str, np.ndarray], float]:
    """Exact gradients of the mean BCE over the batch, via BPTT."""
    seqs = np.asarray(seqs, dtype=float)
    if seqs.ndim == 2:
        seqs = seqs[None]
    labels = np.asarray(labels, dtype=float).reshape(-1)
    B, T, _ = seqs.shape
    H = params.hidden_size

    p, cache = lstm_forward(params, seqs, want_cache=True)
    z = cache["z"]
    loss = float(np.mean(np.logaddexp(0.0, z) - labels * z))
    if not np.isfinite(loss):
        raise DivergenceError("non-finite training loss")

    dW = np.zeros_like(params.W)
    dU = np.zeros_like(params.U)
    db = np.zeros_like(params.b)

    dz = (p - labels) / B
    dw_out = cache["h_last"].T @ dz
    db_out = float(np.sum(dz))

    dh = dz[:, None] * params.w_out[None, :]
    dc = np.zeros((B, H))
    x = cache["x"]
    for t in range(T - 1, -1, -1):
        i, f, o, g = (cache[k][t] for k in ("i", "f", "o", "g"))
        tanh_c = cache["tanh_c"][t]
        c_prev = cache["c_prev"][t]
        h_prev = cache["h_prev"][t]

        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c ** 2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev

        da = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g ** 2)],
            axis=1,
        )
        dW += da.T @ x[:, t, :]
        dU += da.T @ h_prev
        db += da.sum(axis=0)

        dh = da @ params.U
        dc = dc * f

    grads = {"W": dW, "U": dU, "b": db, "w_out": dw_out, "b_out": np.array(db_out)}
    return grads, loss


class _Adam:
    def __init__(self, params: LstmParams, hp: LstmHyperparams):
        self.hp = hp
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in self._tensors(params).items()}
        self.v = {k: np.zeros_like(v) for k, v in self.m.items()}

    @staticmethod
    def _tensors(params: LstmParams) -> dict[str, np.ndarray]:
        return {"W": params.W, "U": params.U, "b": params.b,
                "w_out": params.w_out, "b_out": np.array(params.b_out)}

    def step(self, params: LstmParams, grads: dict[str, np.ndarray]):
        hp = self.hp
        self.t += 1
        b1t = 1.0 - hp.adam_beta1 ** self.t
        b2t = 1.0 - hp.adam_beta2 ** self.t
        for key in ("W", "U", "b", "w_out", "b_out"):
            gval = grads[key]
            self.m[key] = hp.adam_beta1 * self.m[key] + (1 - hp.adam_beta1) * gval
            self.v[key] = hp.adam_beta2 * self.v[key] + (1 - hp.adam_beta2) * gval ** 2
            update = hp.learning_rate * (self.m[key] / b1t) / (np.sqrt(self.v[key] / b2t) + hp.adam_eps)
            if key == "b_out":
                params.b_out -= float(update)
            else:
                getattr(params, key)[...] -= update


def fit_lstm(
    train: tuple[np.ndarray, np.ndarray],
    valid: tuple[np.ndarray, np.ndarray] | None,
    hp: LstmHyperparams = LstmHyperparams(),
    seed: int = 0,
) -> tuple[LstmParams, TrainLog]:
    """Train with Adam and early stopping on validation weighted F1.

    With ``valid=None`` the model trains for exactly ``max_epochs`` epochs
    (used to refit at a stopping point selected elsewhere).  Returns the
    parameters from the best epoch and the per-epoch log.
    """
    X, y = train
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")

    rng = np.random.default_rng(seed)
    params = init_params(X.shape[2], hp.hidden_size, seed=int(rng.integers(2 ** 31)))
    adam = _Adam(params, hp)
    log = TrainLog()

    best_params = params.copy()
    best_metric = -np.inf
    best_epoch = 0
    since_best = 0

    n = len(y)
    for epoch in range(1, hp.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, hp.batch_size):
            idx = order[lo:lo + hp.batch_size]
            try:
                grads, loss = lstm_gradients(params, X[idx], y[idx])
            except DivergenceError:
                raise DivergenceError(f"training diverged at epoch {epoch}") from None
            adam.step(params, grads)
            loss_sum += loss * len(idx)
        params.check_finite()
        log.train_loss.append(loss_sum / n)

        if valid is not None:
            preds = (lstm_forward(params, valid[0]) >= 0.5).astype(int)
            fw = weighted_f1(valid[1], preds)
            log.val_metric.append(fw)
            if fw > best_metric:
                best_metric = fw
                best_params = params.copy()
                best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if since_best > hp.patience:
                    break

    if valid is None:
        best_params, best_epoch = params, hp.max_epochs
    log.chosen = best_epoch
    return best_params, log


# ---------------------------------------------------------------------------
# JSON bundle

def save_lstm(model: LstmParams, path: str | Path, hp: LstmHyperparams | None = None,
              feature_layout: dict | None = None, norm_stats: dict | None = None,
              seed: int | None = None) -> None:
    bundle = {
        "schema": MODEL_SCHEMA,
        "kind": "lstm",
        "n_inputs": model.n_inputs,
        "hidden_size": model.hidden_size,
        "input_scale": INPUT_SCALE,
        "weights": {
            "W": model.W.tolist(),
            "U": model.U.tolist(),
            "b": model.b.tolist(),
            "w_out": model.w_out.tolist(),
            "b_out": model.b_out,
        },
        "hyperparams": asdict(hp) if hp else None,
        "feature_layout": feature_layout,
        "norm_stats": norm_stats,
        "seed": seed,
    }
    with open(path, "w") as fh:
        json.dump(bundle, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_lstm(path: str | Path) -> LstmParams:
    with open(path) as fh:
        bundle = json.load(fh)
    if bundle.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"{path}: not a {MODEL_SCHEMA} bundle")
    w = bundle["weights"]
    return LstmParams(
        n_inputs=bundle["n_inputs"],
        hidden_size=bundle["hidden_size"],
        W=np.array(w["W"]),
        U=np.array(w["U"]),
        b=np.array(w["b"]),
        w_out=np.array(w["w_out"]),
        b_out=w["b_out"],
    )

"""Small fully connected network with hand-derived gradients.

Architecture: an input affine lift to the hidden width, `depth` residual
blocks (normalize, affine, smooth gating nonlinearity, identity skip), and
an affine head. The skip is applied exactly on the hidden blocks, where
input and output widths match, never on the head. Everything is plain
numpy in float64; the backward pass is derived by hand and checked against
finite differences in the test suite.

Training uses Adam with a reduce-on-plateau schedule on the epoch-mean
training loss and the early-stopping rules of the experiment protocol.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError

_GELU_C0 = 0.7978845608028654  # sqrt(2 / pi)
_GELU_C1 = 0.044715
_LN_EPS = 1e-12


def gelu(u: np.ndarray) -> np.ndarray:
    z = _GELU_C0 * (u + _GELU_C1 * u ** 3)
    return 0.5 * u * (1.0 + np.tanh(z))


def gelu_grad(u: np.ndarray) -> np.ndarray:
    z = _GELU_C0 * (u + _GELU_C1 * u ** 3)
    t = np.tanh(z)
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_C0 * (
        1.0 + 3.0 * _GELU_C1 * u ** 2)


@dataclass(eq=False)
class MlpModel:
    input_dim: int
    output_dim: int
    width: int
    depth: int
    params: dict[str, np.ndarray]

    def param_names(self) -> list[str]:
        names = ["w_in", "b_in"]
        for t in range(self.depth):
            names += [f"ln_g{t}", f"ln_b{t}", f"w{t}", f"b{t}"]
        names += ["w_out", "b_out"]
        return names


def init_mlp(input_dim: int, output_dim: int, width: int, depth: int = 3,
             seed: int = 0) -> MlpModel:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, unit norm gains."""
    if min(input_dim, output_dim, width, depth) < 1:
        raise InvalidInputError("all model dimensions must be >= 1")
    rng = np.random.default_rng(seed)

    def u(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params: dict[str, np.ndarray] = {}
    params["w_in"] = u((width, input_dim), input_dim)
    params["b_in"] = np.zeros(width)
    for t in range(depth):
        params[f"ln_g{t}"] = np.ones(width)
        params[f"ln_b{t}"] = np.zeros(width)
        params[f"w{t}"] = u((width, width), width)
        params[f"b{t}"] = np.zeros(width)
    params["w_out"] = u((output_dim, width), width)
    params["b_out"] = np.zeros(output_dim)
    return MlpModel(input_dim, output_dim, width, depth, params)


def mlp_forward(model: MlpModel, X: np.ndarray, want_cache: bool = False):
    """Batched forward pass. X has shape (n, input_dim)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InvalidInputError(
            f"input must have shape (n, {model.input_dim}), got {X.shape}")
    p = model.params
    h = X @ p["w_in"].T + p["b_in"]
    cache = {"X": X, "h_in": []} if want_cache else None
    for t in range(model.depth):
        mu = np.mean(h, axis=1, keepdims=True)
        hc = h - mu
        sig = np.sqrt(np.mean(hc * hc, axis=1, keepdims=True) + _LN_EPS)
        zn = hc / sig
        a = zn * p[f"ln_g{t}"] + p[f"ln_b{t}"]
        u = a @ p[f"w{t}"].T + p[f"b{t}"]
        if want_cache:
            cache["h_in"].append((zn, sig, a, u))
        h = h + gelu(u)
    y = h @ p["w_out"].T + p["b_out"]
    if want_cache:
        cache["h_out"] = h
        return y, cache
    return y


def mlp_backward(model: MlpModel, cache: dict, dY: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given dY = dL/d(output)."""
    p = model.params
    grads: dict[str, np.ndarray] = {}
    grads["w_out"] = dY.T @ cache["h_out"]
    grads["b_out"] = dY.sum(axis=0)
    dh = dY @ p["w_out"]
    for t in reversed(range(model.depth)):
        zn, sig, a, u = cache["h_in"][t]
        du = dh * gelu_grad(u)
        grads[f"w{t}"] = du.T @ a
        grads[f"b{t}"] = du.sum(axis=0)
        da = du @ p[f"w{t}"]
        grads[f"ln_g{t}"] = (da * zn).sum(axis=0)
        grads[f"ln_b{t}"] = da.sum(axis=0)
        dzn = da * p[f"ln_g{t}"]
        mean_dzn = np.mean(dzn, axis=1, keepdims=True)
        mean_dzn_zn = np.mean(dzn * zn, axis=1, keepdims=True)
        dh = dh + (dzn - mean_dzn - zn * mean_dzn_zn) / sig
    grads["w_in"] = dh.T @ cache["X"]
    grads["b_in"] = dh.sum(axis=0)
    return grads


def mse_loss_and_grad(Y: np.ndarray, T: np.ndarray):
    diff = Y - T
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def adam_init(model: MlpModel) -> AdamState:
    zeros = {k: np.zeros_like(v) for k, v in model.params.items()}
    return AdamState(m=zeros, v={k: np.zeros_like(v) for k, v in model.params.items()})


def adam_step(model: MlpModel, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One Adam update in place. First step moves each parameter by about
    -lr * sign(gradient)."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        model.params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    plateau_factor: float = 0.1
    plateau_patience: int = 30
    plateau_threshold: float = 1e-4
    min_lr: float = 1e-9
    eval_every: int = 25
    max_epochs: int = 2000
    batch_size: int = 256
    stall_checks: int = 5
    stall_rel_improve: float = 0.01
    loss_floor: float = 1e-5


@dataclass
class TrainResult:
    model: MlpModel
    stop_reason: str
    epochs: int
    final_loss: float
    history: dict = field(default_factory=dict)


def normalized_mse(model: MlpModel, X: np.ndarray, T: np.ndarray,
                   task_ids: np.ndarray | None = None) -> float:
    """Relative squared error scaled by 1e4.

    Per-sample ratio ||y_hat - y||^2 / (||y||^2 + 1e-12); averaged over
    samples, or per task first and then over tasks when task_ids are given.
    """
    Y = mlp_forward(model, X)
    T = np.asarray(T, dtype=float)
    err = np.sum((Y - T) ** 2, axis=1)
    den = np.sum(T * T, axis=1) + 1e-12
    ratio = err / den
    if task_ids is None:
        return 1e4 * float(np.mean(ratio))
    task_ids = np.asarray(task_ids)
    groups = np.unique(task_ids)
    per_task = [float(np.mean(ratio[task_ids == g])) for g in groups]
    return 1e4 * float(np.mean(per_task))


def train(model: MlpModel, X: np.ndarray, T: np.ndarray, config: TrainConfig,
          seed: int = 0, eval_sets: dict | None = None) -> TrainResult:
    """Minibatch Adam training with plateau schedule and early stopping.

    eval_sets maps a name to (X, T, task_ids or None); each is scored with
    normalized_mse every eval_every epochs and recorded in the history.
    Stop reasons: "loss-floor" (epoch loss below the floor), "lr-floor"
    (plateau reduction would cross min_lr), "plateau-stall" (relative train
    improvement below stall_rel_improve for stall_checks consecutive
    checkpoints), "epoch-cap". Raises TrainingDivergedError on a non-finite
    loss.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    if X.shape[0] != T.shape[0] or X.shape[0] == 0:
        raise InvalidInputError("training inputs and targets must align and be nonempty")
    rng = np.random.default_rng(seed)
    state = adam_init(model)
    lr = config.learning_rate
    n = X.shape[0]
    history: dict = {"epoch": [], "train_loss": [], "lr": [],
                     "evals": {name: [] for name in (eval_sets or {})}}
    best_loss = np.inf
    plateau_bad = 0
    check_best = np.inf
    stall_count = 0
    stop_reason = "epoch-cap"
    epoch = 0
    epoch_loss = np.inf

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            Y, cache = mlp_forward(model, X[idx], want_cache=True)
            loss, dY = mse_loss_and_grad(Y, T[idx])
            grads = mlp_backward(model, cache, dY)
            adam_step(model, grads, state, lr)
            total += loss * idx.size
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"non-finite training loss at epoch {epoch}", epoch=epoch)

        if epoch_loss < best_loss * (1.0 - config.plateau_threshold):
            best_loss = epoch_loss
            plateau_bad = 0
        else:
            plateau_bad += 1
            if plateau_bad > config.plateau_patience:
                new_lr = lr * config.plateau_factor
                plateau_bad = 0
                if new_lr < config.min_lr:
                    stop_reason = "lr-floor"
                    break
                lr = new_lr

        if epoch_loss < config.loss_floor:
            stop_reason = "loss-floor"
            break

        if epoch % config.eval_every == 0:
            history["epoch"].append(epoch)
            history["train_loss"].append(epoch_loss)
            history["lr"].append(lr)
            for name, (EX, ET, tids) in (eval_sets or {}).items():
                history["evals"][name].append(normalized_mse(model, EX, ET, tids))
            if epoch_loss > check_best * (1.0 - config.stall_rel_improve):
                stall_count += 1
                if stall_count >= config.stall_checks:
                    stop_reason = "plateau-stall"
                    break
            else:
                stall_count = 0
            check_best = min(check_best, epoch_loss)

    history["epoch"].append(epoch)
    history["train_loss"].append(epoch_loss)
    history["lr"].append(lr)
    for name, (EX, ET, tids) in (eval_sets or {}).items():
        history["evals"][name].append(normalized_mse(model, EX, ET, tids))
    return TrainResult(model=model, stop_reason=stop_reason, epochs=epoch,
                       final_loss=float(epoch_loss), history=history)


# Checkpoint layout (little endian throughout):
#   bytes 0..7    magic b"CMLP0001"
#   bytes 8..39   four uint64: input_dim, output_dim, width, depth
#   bytes 40..    parameter arrays as row-major float64, concatenated in
#                 MlpModel.param_names() order, no padding
# A sidecar written next to the binary (same path + ".json") carries the
# training config and history so a checkpoint is self-describing.
CHECKPOINT_MAGIC = b"CMLP0001"


def save_checkpoint(model: MlpModel, path: str, config=None, history=None) -> None:
    """Write model weights to `path` and a JSON sidecar to `path`.json."""
    dims = np.array([model.input_dim, model.output_dim, model.width, model.depth],
                    dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(dims.tobytes())
        for name in model.param_names():
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    if is_dataclass(config):
        config = asdict(config)
    sidecar = {
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "width": model.width,
        "depth": model.depth,
        "config": config,
        "history": history,
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[MlpModel, dict]:
    """Read a checkpoint written by save_checkpoint.

    Returns the rebuilt model and the sidecar dict ({} when the sidecar
    file is missing). Raises InvalidInputError on a bad magic or when the
    payload size disagrees with the header dims.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"not a model checkpoint: {path}")
    dims = np.frombuffer(blob, dtype="<u8", count=4, offset=8)
    input_dim, output_dim, width, depth = (int(v) for v in dims)
    model = MlpModel(input_dim, output_dim, width, depth, {})
    shapes = {"w_in": (width, input_dim), "b_in": (width,),
              "w_out": (output_dim, width), "b_out": (output_dim,)}
    for t in range(depth):
        shapes[f"ln_g{t}"] = (width,)
        shapes[f"ln_b{t}"] = (width,)
        shapes[f"w{t}"] = (width, width)
        shapes[f"b{t}"] = (width,)
    offset = 40
    for name in model.param_names():
        shape = shapes[name]
        count = int(np.prod(shape))
        if offset + count * 8 > len(blob):
            raise InvalidInputError(f"checkpoint truncated at parameter {name}")
        flat = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        model.params[name] = flat.reshape(shape).copy()
        offset += count * 8
    if offset != len(blob):
        raise InvalidInputError("checkpoint has trailing bytes after parameters")
    sidecar: dict = {}
    try:
        with open(path + ".json") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError:
        pass
    return model, sidecar

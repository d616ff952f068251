"""Feed-forward Gaussian-head network with exact analytic gradients.

The network maps a normalized (observation, action) input to a mean and a
bounded log-variance per predicted state dimension. Parameters live in one
flat float64 vector with per-layer views, which keeps the Adam update, the
finite-difference checker, and serialization trivial. No autodiff anywhere:
`loss_and_grad` backpropagates the Gaussian NLL by hand, including the
soft-bound transform on the log-variance head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# The lower bound must sit below the residual variance the networks reach on
# these deterministic dynamics (~5e-6), or every predictive variance saturates
# at a constant floor and ensemble disagreement disappears from the
# particle-variance signal.
LV_MIN = -14.0
LV_MAX = 4.0

MODEL_MAGIC = "#ugcem-model-v1"


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)), overflow-safe."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bound_logvar(raw: np.ndarray) -> np.ndarray:
    """Squash a raw log-variance into the open interval (LV_MIN, LV_MAX)."""
    lv = LV_MAX - softplus(LV_MAX - raw)
    return LV_MIN + softplus(lv - LV_MIN)


def bound_logvar_grad(raw: np.ndarray) -> np.ndarray:
    """d bound_logvar / d raw."""
    lv1 = LV_MAX - softplus(LV_MAX - raw)
    return sigmoid(LV_MAX - raw) * sigmoid(lv1 - LV_MIN)


@dataclass(frozen=True)
class MlpSpec:
    """Architecture: `in_dim` inputs, ReLU hidden stack, 2*state_dim linear outputs."""

    in_dim: int
    state_dim: int
    hidden: tuple[int, ...] = (200, 200, 200)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, 2 * self.state_dim)

    @property
    def n_params(self) -> int:
        dims = self.layer_dims
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


@dataclass
class MlpParams:
    """Flat float64 parameter vector plus per-layer (W, b) views into it."""

    spec: MlpSpec
    flat: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if self.flat.shape != (self.spec.n_params,):
            raise ValueError("flat vector does not match architecture")
        self.layers = _views(self.spec, self.flat)

    def copy(self) -> "MlpParams":
        return MlpParams(spec=self.spec, flat=self.flat.copy())

    def __reduce__(self):
        # rebuild the layer views instead of pickling them
        return (MlpParams, (self.spec, self.flat))


def _views(spec: MlpSpec, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    dims = spec.layer_dims
    layers = []
    off = 0
    for i in range(len(dims) - 1):
        d_in, d_out = dims[i], dims[i + 1]
        w = flat[off : off + d_in * d_out].reshape(d_in, d_out)
        off += d_in * d_out
        b = flat[off : off + d_out]
        off += d_out
        layers.append((w, b))
    return layers


def _truncated_normal(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    """Zero-mean normal with the given scale, redrawn beyond two sigma."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * scale


def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """He-style init: weights ~ truncated normal with scale sqrt(2/fan_in), biases 0."""
    params = MlpParams(spec=spec, flat=np.zeros(spec.n_params))
    for w, b in params.layers:
        w[...] = _truncated_normal(rng, w.shape, np.sqrt(2.0 / w.shape[0]))
        b[...] = 0.0
    return params


def zeros_params(spec: MlpSpec) -> MlpParams:
    return MlpParams(spec=spec, flat=np.zeros(spec.n_params))


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run the network; accepts a single input (in_dim,) or a batch (B, in_dim).

    Returns (mean, logvar), each of trailing dimension state_dim, with the
    logvar already squashed into (LV_MIN, LV_MAX).
    """
    x = np.asarray(x)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != params.spec.in_dim:
        raise ValueError(f"input dimension {h.shape[1]} != {params.spec.in_dim}")
    for w, b in params.layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = params.layers[-1]
    out = h @ w + b
    s = params.spec.state_dim
    mean, logvar = out[:, :s], bound_logvar(out[:, s:])
    if single:
        return mean[0], logvar[0]
    return mean, logvar


def nll_loss(mean: np.ndarray, logvar: np.ndarray, target: np.ndarray) -> float:
    """Gaussian negative log-likelihood per state dimension, constant term dropped.

    L = mean_i [ (target_i - mean_i)^2 * exp(-logvar_i) + logvar_i ] / 2.
    Batched inputs (B, dim) return the mean over the batch.
    """
    mean, logvar, target = np.atleast_2d(mean, logvar, target)
    if not mean.shape == logvar.shape == target.shape:
        raise ValueError("shape mismatch")
    r = target - mean
    per = ((r * r * np.exp(-logvar) + logvar) / 2.0).mean(axis=1)
    return float(per.mean())


def loss_and_grad(
    params: MlpParams, x: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    """NLL and its exact gradient w.r.t. the flat parameter vector.

    For batches the loss is the mean of per-sample losses, so the gradient is
    the mean of per-sample gradients.
    """
    x = np.atleast_2d(np.asarray(x))
    target = np.atleast_2d(np.asarray(target))
    n, s = target.shape
    if s != params.spec.state_dim:
        raise ValueError("target dimension mismatch")

    # forward, keeping pre-activations
    acts = [x]
    pres = []
    h = x
    for w, b in params.layers[:-1]:
        z = h @ w + b
        pres.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    w_last, b_last = params.layers[-1]
    out = h @ w_last + b_last
    raw_lv = out[:, s:]
    mean = out[:, :s]
    logvar = bound_logvar(raw_lv)

    r = target - mean
    inv_var = np.exp(-logvar)
    loss = float((((r * r * inv_var + logvar) / 2.0).mean(axis=1)).mean())

    # dL/d(out) with the 1/(n*s) batch-and-dimension averaging folded in
    scale = 1.0 / (n * s)
    d_mean = -r * inv_var * scale
    d_lv = (1.0 - r * r * inv_var) * (0.5 * scale)
    d_out = np.concatenate([d_mean, d_lv * bound_logvar_grad(raw_lv)], axis=1)

    grad = np.zeros_like(params.flat)
    g_layers = _views(params.spec, grad)

    delta = d_out
    for i in range(len(params.layers) - 1, -1, -1):
        gw, gb = g_layers[i]
        gw[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.layers[i][0].T) * (pres[i - 1] > 0.0)
    return loss, grad


def backward(params: MlpParams, x: np.ndarray, target: np.ndarray) -> np.ndarray:
    return loss_and_grad(params, x, target)[1]


@dataclass
class AdamState:
    """Adam moments plus decoupled weight decay, defaults per the training recipe."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-5

    @classmethod
    def for_params(cls, params: MlpParams, **kwargs) -> "AdamState":
        return cls(m=np.zeros_like(params.flat), v=np.zeros_like(params.flat), **kwargs)


def adam_step(params: MlpParams, grad: np.ndarray, state: AdamState) -> None:
    """In-place bias-corrected Adam update with decoupled weight decay.

    The decay shrinks parameters by lr*wd before the Adam delta is applied.
    """
    if grad.shape != params.flat.shape:
        raise ValueError("gradient shape mismatch")
    p = params.flat
    if state.weight_decay:
        p -= state.lr * state.weight_decay * p
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def grad_check(
    params: MlpParams,
    x: np.ndarray,
    target: np.ndarray,
    h: float = 1e-5,
    max_coords: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central finite-difference gradients.

    All coordinates are checked when the parameter count is at most
    `max_coords`; larger networks check a random subset of that size (seeded
    generator, so repeated calls agree).
    """
    _, grad = loss_and_grad(params, x, target)
    n = params.flat.size
    if n <= max_coords:
        coords = np.arange(n)
    else:
        coords = (rng or np.random.default_rng(0)).choice(n, size=max_coords, replace=False)
    work = params.copy()
    worst = 0.0
    for c in coords:
        orig = work.flat[c]
        work.flat[c] = orig + h
        lp = nll_loss(*forward(work, x), target)
        work.flat[c] = orig - h
        lm = nll_loss(*forward(work, x), target)
        work.flat[c] = orig
        fd = (lp - lm) / (2.0 * h)
        err = abs(fd - grad[c]) / max(abs(fd), abs(grad[c]), 1e-6)
        worst = max(worst, err)
    return worst


def params_to_lines(params: MlpParams) -> list[str]:
    """Serialize to text: magic + layer dims + one csv line per layer tensor."""
    dims = ",".join(str(d) for d in params.spec.layer_dims)
    lines = [f"{MODEL_MAGIC} layers={dims}"]
    for w, b in params.layers:
        lines.append(",".join(format(v, ".17g") for v in w.ravel()))
        lines.append(",".join(format(v, ".17g") for v in b))
    return lines


def params_from_lines(lines: list[str]) -> tuple[MlpParams, int]:
    """Parse a serialized parameter block; returns (params, lines consumed)."""
    header = lines[0].split()
    if len(header) != 2 or header[0] != MODEL_MAGIC or not header[1].startswith("layers="):
        raise ValueError(f"malformed model header: {lines[0]!r}")
    dims = tuple(int(d) for d in header[1][len("layers=") :].split(","))
    if len(dims) < 2 or dims[-1] % 2 != 0:
        raise ValueError("malformed layer dims")
    spec = MlpSpec(in_dim=dims[0], state_dim=dims[-1] // 2, hidden=dims[1:-1])
    params = zeros_params(spec)
    idx = 1
    for w, b in params.layers:
        w[...] = np.array([float(v) for v in lines[idx].split(",")]).reshape(w.shape)
        b[...] = np.array([float(v) for v in lines[idx + 1].split(",")])
        idx += 2
    return params, idx

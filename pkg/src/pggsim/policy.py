"""Policy network and optimizer.

A small fully connected network maps the 5-bit local state (own strategy plus
the four von Neumann neighbours, order self/N/S/W/E) to action probabilities
over {defect, cooperate}: three ReLU hidden layers, then a softmax over two
logits. Forward, reverse-mode backward, the Adam update, and the step learning
rate schedule are written out explicitly against numpy so every floating point
operation is pinned down; there is no autodiff framework underneath.

Probabilities that feed logs or likelihood ratios are clamped into
[1e-7, 1 - 1e-7]. Sampling uses the clamped value too, so a stored behaviour
probability is always consistent with the distribution the action was drawn
from. The clamp is a hard clip: a saturated probability contributes no
gradient.

Because inputs are binary 5-vectors there are only 32 distinct states; batch
helpers operate on (n, 5) matrices so callers can evaluate all 32 once per
update instead of once per agent.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

INPUT_DIM = 5
N_ACTIONS = 2
PROB_CLAMP = 1e-7
DEFAULT_HIDDEN = (64, 64, 64)

CHECKPOINT_MAGIC = b"PGGM"
CHECKPOINT_VERSION = 1

# All 32 possible local states as rows, indexed by the 5-bit state number
# with bit layout (self, N, S, W, E) from high to low.
STATE_VECTORS = np.array(
    [[(i >> 4) & 1, (i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(32)],
    dtype=np.float64,
)

__all__ = [
    "INPUT_DIM",
    "N_ACTIONS",
    "PROB_CLAMP",
    "DEFAULT_HIDDEN",
    "STATE_VECTORS",
    "MlpParams",
    "ForwardCache",
    "AdamState",
    "LrSchedule",
    "encode_state",
    "forward",
    "forward_batch",
    "backward",
    "backward_batch",
    "make_grads",
    "adam_step",
    "effective_lr",
    "kl_two_point",
    "clamp_prob",
    "save_params",
    "load_params",
]


@dataclass
class MlpParams:
    """Weights and biases of the four fully connected layers.

    weights[k] has shape (fan_out, fan_in); biases[k] has shape (fan_out,).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, hidden: tuple[int, int, int] = DEFAULT_HIDDEN, rng: np.random.Generator | None = None) -> "MlpParams":
        """Uniform(-b, b) weights with b = sqrt(6 / (fan_in + fan_out)), zero biases."""
        if rng is None:
            rng = np.random.default_rng(0)
        dims = (INPUT_DIM, *hidden, N_ACTIONS)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    def arrays(self) -> list[np.ndarray]:
        """Parameter tensors in checkpoint order (W1, b1, ..., W4, b4)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class ForwardCache:
    """Everything the backward pass needs from one batched forward pass."""

    inputs: np.ndarray          # (n, 5)
    pre: list[np.ndarray]       # pre-activations of the three hidden layers
    post: list[np.ndarray]      # post-ReLU activations of the three hidden layers
    logits: np.ndarray          # (n, 2)
    probs: np.ndarray           # (n, 2) softmax output


def encode_state(grid: np.ndarray, idx: tuple[int, int]) -> np.ndarray:
    """Network input for the agent at ``idx``: (self, N, S, W, E) as floats."""
    x, y = idx
    L = grid.shape[0]
    return np.array(
        [
            grid[x, y],
            grid[(x - 1) % L, y],
            grid[(x + 1) % L, y],
            grid[x, (y - 1) % L],
            grid[x, (y + 1) % L],
        ],
        dtype=np.float64,
    )


def forward_batch(params: MlpParams, x: np.ndarray) -> ForwardCache:
    """Forward pass for a batch of state vectors, shape (n, 5)."""
    h = x
    pre, post = [], []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ w.T + b
        h = np.maximum(z, 0.0)
        pre.append(z)
        post.append(h)
    logits = h @ params.weights[-1].T + params.biases[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return ForwardCache(inputs=x, pre=pre, post=post, logits=logits, probs=probs)


def forward(params: MlpParams, x: np.ndarray) -> ForwardCache:
    """Forward pass for a single 5-dim state vector."""
    if x.shape != (INPUT_DIM,):
        raise ValueError(f"state vector must have shape ({INPUT_DIM},), got {x.shape}")
    return forward_batch(params, np.asarray(x, dtype=np.float64)[None, :])


def make_grads(params: MlpParams) -> list[np.ndarray]:
    """Zero gradient accumulator shaped like ``params.arrays()``."""
    return [np.zeros_like(a) for a in params.arrays()]


def backward_batch(params: MlpParams, cache: ForwardCache, dlogits: np.ndarray) -> list[np.ndarray]:
    """Exact reverse-mode gradients given d(loss)/d(logits) for the batch.

    ReLU passes gradient only where the pre-activation is strictly positive.
    Returns tensors in ``arrays()`` order.
    """
    if dlogits.shape != cache.logits.shape:
        raise ValueError(f"upstream gradient shape {dlogits.shape} does not match logits {cache.logits.shape}")
    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(params.weights))
    d = dlogits
    acts = [cache.inputs, *cache.post]
    for k in range(len(params.weights) - 1, -1, -1):
        grads[2 * k] = d.T @ acts[k]
        grads[2 * k + 1] = d.sum(axis=0)
        if k > 0:
            d = (d @ params.weights[k]) * (cache.pre[k - 1] > 0.0)
    return grads


def backward(params: MlpParams, cache: ForwardCache, dlogits: np.ndarray, grads: list[np.ndarray]) -> list[np.ndarray]:
    """Accumulate gradients for one sample into ``grads`` and return it."""
    d = np.asarray(dlogits, dtype=np.float64)
    if d.shape == (N_ACTIONS,):
        d = d[None, :]
    contrib = backward_batch(params, cache, d)
    for acc, g in zip(grads, contrib):
        acc += g
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators and step counter for Adam."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        return cls(m=make_grads(params), v=make_grads(params))


def adam_step(params: MlpParams, grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place.

    Refuses non-finite gradients before touching any state, so a failed step
    leaves parameters and moments unchanged.
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient passed to adam_step")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for arr, g, m, v in zip(params.arrays(), grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    """Step decay: the rate halves every ``halve_period`` epochs."""

    base_lr: float
    halve_period: int

    def __post_init__(self):
        if self.base_lr <= 0.0:
            raise ValueError(f"base learning rate must be > 0, got {self.base_lr}")
        if self.halve_period < 1:
            raise ValueError(f"halve period must be >= 1, got {self.halve_period}")


def effective_lr(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return schedule.base_lr * 0.5 ** (epoch // schedule.halve_period)


def clamp_prob(p):
    """Clip probabilities into [1e-7, 1 - 1e-7]."""
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def kl_two_point(p, q):
    """KL divergence between two Bernoulli distributions given P(action=1).

    Both probabilities are clamped before evaluation. Accepts scalars or
    arrays.
    """
    pc = clamp_prob(p)
    qc = clamp_prob(q)
    out = pc * np.log(pc / qc) + (1.0 - pc) * np.log((1.0 - pc) / (1.0 - qc))
    if np.isscalar(p) or np.ndim(out) == 0:
        return float(out)
    return out


def save_params(params: MlpParams, path) -> None:
    """Write a checkpoint: 16-byte header, then float64 little-endian tensors.

    Header: magic "PGGM", format version u32, the three hidden widths as u16
    each, two zero pad bytes. Tensors follow flat in (W1, b1, ..., W4, b4)
    order, row-major.
    """
    hidden = params.hidden
    if len(hidden) != 3:
        raise ValueError(f"checkpoint format stores exactly 3 hidden widths, got {len(hidden)}")
    header = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION) + struct.pack("<HHH", *hidden) + b"\x00\x00"
    with open(path, "wb") as f:
        f.write(header)
        for arr in params.arrays():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> MlpParams:
    """Read a checkpoint written by ``save_params``."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise ValueError("checkpoint truncated: missing header")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic: {blob[:4]!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {version}")
    hidden = struct.unpack("<HHH", blob[8:14])
    dims = (INPUT_DIM, *hidden, N_ACTIONS)
    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes.append((fan_out, fan_in))
        shapes.append((fan_out,))
    expected = 16 + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(blob) != expected:
        raise ValueError(f"checkpoint size {len(blob)} does not match header (expected {expected})")
    offset = 16
    tensors = []
    for shape in shapes:
        count = int(np.prod(shape))
        tensors.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy())
        offset += 8 * count
    return MlpParams(weights=tensors[0::2], biases=tensors[1::2])

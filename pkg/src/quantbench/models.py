"""Hand-written LSTM forecasters with exact backpropagation through time.

Four architectures share one cell implementation:

``vanilla``
    A stack of LSTM layers; each layer passes its full hidden sequence to
    the next and a dense head reads the top layer's last time step.
``bidirectional``
    Two stacks, one over the window and one over the time-reversed window;
    their final top hidden states are concatenated before the head.
``two_path``
    Two independently initialised stacks over the same window, merged the
    same way as ``bidirectional``.
``seq2seq``
    An encoder stack reads the window and the head emits the first forecast
    from its last hidden state.  A decoder stack seeded with the encoder's
    final (h, c) per layer then unrolls the remaining horizon steps, taking
    the previous forecast (or, under teacher forcing, the previous true
    value) as its one-dimensional input.  With ``horizon == 1`` the model
    reduces exactly to ``vanilla``.

Gate blocks are stored side by side in the order input, forget, output,
candidate: ``W`` is F_in×4U, ``R`` is U×4U and ``b`` is 1×4U.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import linalg as la

ARCHITECTURES = ("vanilla", "bidirectional", "seq2seq", "two_path")
GATES = ("input", "forget", "output", "candidate")

MAGIC = b"QBNN"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    architecture: str = "vanilla"
    layers: int = 4
    units: int = 50
    dropout_rate: float = 0.2
    window: int = 30
    horizon: int = 1
    features: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        for name in ("layers", "units", "window", "horizon", "features"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate!r}")

    @property
    def n_stacks(self) -> int:
        return 1 if self.architecture == "vanilla" else 2

    @property
    def head_inputs(self) -> int:
        return 2 * self.units if self.architecture in ("bidirectional", "two_path") else self.units

    @property
    def head_outputs(self) -> int:
        return 1 if self.architecture == "seq2seq" else self.horizon

    def stack_input_sizes(self) -> list[int]:
        if self.architecture == "seq2seq":
            return [self.features, 1]
        return [self.features] * self.n_stacks

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown ModelSpec key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class LstmCellParams:
    W: np.ndarray
    R: np.ndarray
    b: np.ndarray

    @property
    def units(self) -> int:
        return self.R.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views of ``(W_g, R_g, b_g)`` for one gate."""
        k, u = GATES.index(name), self.units
        sl = slice(k * u, (k + 1) * u)
        return self.W[:, sl], self.R[:, sl], self.b[:, sl]

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.R, self.b]

    @classmethod
    def zeros(cls, n_in: int, units: int) -> LstmCellParams:
        return cls(la.zeros(n_in, 4 * units), la.zeros(units, 4 * units), la.zeros(1, 4 * units))


@dataclass
class ModelParams:
    stacks: list[list[LstmCellParams]]
    W_out: np.ndarray
    b_out: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        """Every trainable matrix, in the fixed serialization order."""
        out = [a for stack in self.stacks for cell in stack for a in cell.arrays()]
        return out + [self.W_out, self.b_out]

    def zeros_like(self) -> ModelParams:
        return ModelParams(
            [[LstmCellParams(*(np.zeros_like(a) for a in c.arrays())) for c in s] for s in self.stacks],
            np.zeros_like(self.W_out),
            np.zeros_like(self.b_out),
        )

    def copy(self) -> ModelParams:
        return ModelParams(
            [[LstmCellParams(*(a.copy() for a in c.arrays())) for c in s] for s in self.stacks],
            self.W_out.copy(),
            self.b_out.copy(),
        )

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def init_params(spec: ModelSpec, rng: np.random.Generator | None = None) -> ModelParams:
    """Glorot-uniform weights per gate matrix, zero biases, forget bias 1."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    u = spec.units
    stacks = []
    for n_in in spec.stack_input_sizes():
        stack = []
        for layer in range(spec.layers):
            fan_in = n_in if layer == 0 else u
            cell = LstmCellParams.zeros(fan_in, u)
            for name in GATES:
                w, r, _ = cell.gate(name)
                w[...] = _glorot(rng, fan_in, u)
                r[...] = _glorot(rng, u, u)
            cell.gate("forget")[2][...] = 1.0
            stack.append(cell)
        stacks.append(stack)
    w_out = _glorot(rng, spec.head_inputs, spec.head_outputs)
    return ModelParams(stacks, w_out, la.zeros(1, spec.head_outputs))


# -- single cell ---------------------------------------------------------------

@dataclass
class CellCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    z: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_cell_step(x_t, h_prev, c_prev, p: LstmCellParams):
    """One LSTM step over a batch of rows.

    Returns ``(h, c, cache)`` where ``cache`` holds every intermediate the
    backward pass needs.
    """
    u = p.units
    if h_prev.shape[1] != u or c_prev.shape != h_prev.shape:
        raise la.ShapeError(f"state shapes {h_prev.shape}/{c_prev.shape} do not match {u} units")
    z = la.add_row(la.add(la.matmul(x_t, p.W), la.matmul(h_prev, p.R)), p.b)
    i = la.sigmoid(z[:, :u])
    f = la.sigmoid(z[:, u:2 * u])
    o = la.sigmoid(z[:, 2 * u:3 * u])
    g = la.tanh_act(z[:, 3 * u:])
    c = f * c_prev + i * g
    tanh_c = la.tanh_act(c)
    h = o * tanh_c
    return h, c, CellCache(x_t, h_prev, c_prev, z, i, f, o, g, c, tanh_c)


def lstm_cell_backward(dh, dc, cache: CellCache, p: LstmCellParams, grad: LstmCellParams):
    """Backpropagate one step; accumulates into ``grad`` and returns
    ``(dx, dh_prev, dc_prev)``."""
    dc_total = dc + dh * cache.o * la.tanh_grad(cache.tanh_c)
    dz = np.concatenate([
        dc_total * cache.g * la.sigmoid_grad(cache.i),
        dc_total * cache.c_prev * la.sigmoid_grad(cache.f),
        dh * cache.tanh_c * la.sigmoid_grad(cache.o),
        dc_total * cache.i * la.tanh_grad(cache.g),
    ], axis=1)
    grad.W += cache.x.T @ dz
    grad.R += cache.h_prev.T @ dz
    grad.b += dz.sum(axis=0, keepdims=True)
    return dz @ p.W.T, dz @ p.R.T, dc_total * cache.f


# -- stacks --------------------------------------------------------------------

def _stack_step(x, states, stack, masks):
    """Advance every layer of ``stack`` by one time step.

    ``masks`` is None or an L×N×U array of inverted-dropout multipliers
    applied to each layer's output before it feeds the layer above.
    """
    inp = x
    new_states, caches = [], []
    for layer, p in enumerate(stack):
        h, c, cache = lstm_cell_step(inp, states[layer][0], states[layer][1], p)
        new_states.append((h, c))
        caches.append(cache)
        inp = h * masks[layer] if masks is not None else h
    return inp, new_states, caches


def _stack_step_backward(d_top, d_states, caches, stack, masks, grads):
    d_in = d_top
    new_d_states = [None] * len(stack)
    for layer in reversed(range(len(stack))):
        dh_out = d_in * masks[layer] if masks is not None else d_in
        dh = dh_out + d_states[layer][0]
        dx, dh_prev, dc_prev = lstm_cell_backward(dh, d_states[layer][1], caches[layer],
                                                  stack[layer], grads[layer])
        new_d_states[layer] = (dh_prev, dc_prev)
        d_in = dx
    return d_in, new_d_states


def _zero_states(stack, n):
    return [(la.zeros(n, p.units), la.zeros(n, p.units)) for p in stack]


def _draw_masks(rng, rate, steps, layers, n, units):
    if rng is None:
        return None
    keep = rng.random((steps, layers, n, units)) >= rate
    return keep / (1.0 - rate)


@dataclass
class _SeqCache:
    steps: list
    masks: np.ndarray | None


def _run_sequence(seq, stack, states, masks):
    """Run ``stack`` over an N×T×F sequence; returns final top output,
    final per-layer states and the per-step caches."""
    step_caches = []
    top = None
    for t in range(seq.shape[1]):
        top, states, caches = _stack_step(seq[:, t, :], states, stack,
                                          None if masks is None else masks[t])
        step_caches.append(caches)
    return top, states, _SeqCache(step_caches, masks)


def _run_sequence_backward(d_top_last, d_states, cache: _SeqCache, stack, grads):
    n = d_top_last.shape[0]
    steps = cache.steps
    zeros_top = np.zeros_like(d_top_last)
    for t in reversed(range(len(steps))):
        d_top = d_top_last if t == len(steps) - 1 else zeros_top
        masks = None if cache.masks is None else cache.masks[t]
        _, d_states = _stack_step_backward(d_top, d_states, steps[t], stack, masks, grads)
    return d_states


@dataclass
class ForwardCache:
    architecture: str
    n: int
    stacks: list = field(default_factory=list)
    head_input: np.ndarray | None = None
    decoder_steps: list = field(default_factory=list)
    decoder_masks: np.ndarray | None = None
    decoder_tops: list = field(default_factory=list)
    free_running: bool = True


def _check_batch(spec: ModelSpec, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 2 and spec.features == 1:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[1:] != (spec.window, spec.features):
        raise la.ShapeError(
            f"batch shape {x.shape} does not match (N, {spec.window}, {spec.features})"
        )
    return x


def forward(spec: ModelSpec, params: ModelParams, inputs, mode: str = "eval",
            rng: np.random.Generator | None = None, targets=None,
            teacher_forcing: bool = False):
    """Predict an N×H matrix from an N×W×F batch.

    In ``train`` mode dropout masks are drawn from ``rng`` (required when
    ``dropout_rate > 0``).  Teacher forcing only affects ``seq2seq`` and only
    applies in train mode with ``targets`` given.
    """
    if spec.architecture not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {spec.architecture!r}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _check_batch(spec, inputs)
    n = x.shape[0]
    use_dropout = mode == "train" and spec.dropout_rate > 0
    if use_dropout and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    drop_rng = rng if use_dropout else None
    L, U, rate = spec.layers, spec.units, spec.dropout_rate
    cache = ForwardCache(spec.architecture, n)

    if spec.architecture == "seq2seq":
        enc, dec = params.stacks
        masks = _draw_masks(drop_rng, rate, spec.window, L, n, U)
        top, states, seq_cache = _run_sequence(x, enc, _zero_states(enc, n), masks)
        cache.stacks.append(seq_cache)
        cache.head_input = top
        preds = [la.add_row(la.matmul(top, params.W_out), params.b_out)]
        forced = mode == "train" and teacher_forcing and targets is not None
        if forced:
            targets = np.asarray(targets, dtype=np.float64).reshape(n, spec.horizon)
        cache.free_running = not forced
        cache.decoder_masks = _draw_masks(drop_rng, rate, spec.horizon - 1, L, n, U)
        for k in range(1, spec.horizon):
            u = targets[:, k - 1:k] if forced else preds[-1]
            dm = None if cache.decoder_masks is None else cache.decoder_masks[k - 1]
            top, states, step_caches = _stack_step(u, states, dec, dm)
            cache.decoder_steps.append(step_caches)
            cache.decoder_tops.append(top)
            preds.append(la.add_row(la.matmul(top, params.W_out), params.b_out))
        return np.hstack(preds), cache

    if spec.architecture == "vanilla":
        seqs = [x]
    elif spec.architecture == "bidirectional":
        seqs = [x, x[:, ::-1, :]]
    else:
        seqs = [x, x]
    tops = []
    for stack, seq in zip(params.stacks, seqs):
        masks = _draw_masks(drop_rng, rate, spec.window, L, n, U)
        top, _, seq_cache = _run_sequence(seq, stack, _zero_states(stack, n), masks)
        cache.stacks.append(seq_cache)
        tops.append(top)
    head_in = tops[0] if len(tops) == 1 else la.concat_cols(*tops)
    cache.head_input = head_in
    return la.add_row(la.matmul(head_in, params.W_out), params.b_out), cache


def final_hidden_states(spec: ModelSpec, params: ModelParams, inputs) -> list[np.ndarray]:
    """Eval-mode final top-layer hidden state of each stack (encoder only for seq2seq)."""
    x = _check_batch(spec, inputs)
    seqs = {"vanilla": [x], "bidirectional": [x, x[:, ::-1, :]],
            "two_path": [x, x], "seq2seq": [x]}[spec.architecture]
    out = []
    for stack, seq in zip(params.stacks, seqs):
        top, _, _ = _run_sequence(seq, stack, _zero_states(stack, x.shape[0]), None)
        out.append(top)
    return out


def backward(spec: ModelSpec, params: ModelParams, cache: ForwardCache, loss_grad,
             fault_gate: str | None = None) -> ModelParams:
    """Gradients of the loss w.r.t. every parameter, given dLoss/dPredictions.

    ``fault_gate`` zeroes one gate's gradients; it exists only so the
    gradient checker's sensitivity can be tested.
    """
    if cache.architecture != spec.architecture:
        raise ValueError(f"cache is for {cache.architecture!r}, spec is {spec.architecture!r}")
    dy = np.asarray(loss_grad, dtype=np.float64)
    if dy.shape != (cache.n, spec.horizon):
        raise la.ShapeError(f"loss_grad shape {dy.shape} != {(cache.n, spec.horizon)}")
    grads = params.zeros_like()
    n, U = cache.n, spec.units

    if spec.architecture == "seq2seq":
        enc, dec = params.stacks
        d_states = [(la.zeros(n, U), la.zeros(n, U)) for _ in dec]
        feedback = np.zeros_like(dy)
        for k in reversed(range(1, spec.horizon)):
            dy_k = dy[:, k:k + 1] + feedback[:, k:k + 1]
            top = cache.decoder_tops[k - 1]
            grads.W_out += top.T @ dy_k
            grads.b_out += dy_k.sum(axis=0, keepdims=True)
            masks = None if cache.decoder_masks is None else cache.decoder_masks[k - 1]
            d_u, d_states = _stack_step_backward(dy_k @ params.W_out.T, d_states,
                                                 cache.decoder_steps[k - 1], dec, masks,
                                                 grads.stacks[1])
            if cache.free_running:
                feedback[:, k - 1:k] += d_u
        dy_0 = dy[:, 0:1] + feedback[:, 0:1]
        grads.W_out += cache.head_input.T @ dy_0
        grads.b_out += dy_0.sum(axis=0, keepdims=True)
        _run_sequence_backward(dy_0 @ params.W_out.T, d_states, cache.stacks[0], enc,
                               grads.stacks[0])
    else:
        grads.W_out += cache.head_input.T @ dy
        grads.b_out += dy.sum(axis=0, keepdims=True)
        d_head = dy @ params.W_out.T
        for s, (stack, seq_cache) in enumerate(zip(params.stacks, cache.stacks)):
            d_top = d_head[:, s * U:(s + 1) * U]
            _run_sequence_backward(d_top, [(la.zeros(n, U), la.zeros(n, U)) for _ in stack],
                                   seq_cache, stack, grads.stacks[s])

    if fault_gate is not None:
        for stack in grads.stacks:
            for cell in stack:
                for a in cell.gate(fault_gate):
                    a[...] = 0.0
    return grads


def predict(spec: ModelSpec, params: ModelParams, inputs) -> np.ndarray:
    return forward(spec, params, inputs, mode="eval")[0]


# -- persistence ---------------------------------------------------------------

def save_params(path, spec: ModelSpec, params: ModelParams) -> None:
    """Write ``QBNN`` binary: magic, version, JSON spec, then each matrix as
    (rows, cols) followed by row-major little-endian float64 data."""
    spec_bytes = json.dumps(spec.to_dict(), sort_keys=True).encode("utf-8")
    arrays = params.arrays()
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(spec_bytes)))
        fh.write(spec_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for a in arrays:
            fh.write(struct.pack("<II", *a.shape))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_params(path) -> tuple[ModelSpec, ModelParams]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a QBNN parameter file")
    version, spec_len = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    pos = 12
    spec = ModelSpec.from_dict(json.loads(raw[pos:pos + spec_len].decode("utf-8")))
    pos += spec_len
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    params = init_params(spec, np.random.default_rng(0))
    targets = params.arrays()
    if count != len(targets):
        raise ValueError(f"{path}: expected {len(targets)} matrices, found {count}")
    for dest in targets:
        rows, cols = struct.unpack_from("<II", raw, pos)
        pos += 8
        if (rows, cols) != dest.shape:
            raise ValueError(f"{path}: matrix shape {(rows, cols)} != expected {dest.shape}")
        nbytes = rows * cols * 8
        dest[...] = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols)
        pos += nbytes
    if pos != len(raw):
        raise ValueError(f"{path}: trailing bytes")
    return spec, params

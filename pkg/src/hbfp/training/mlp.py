"""A small MLP with hand-written backprop where every GEMM can run in BFP.

Forward ``z = x @ W.T + b``; backward ``dW = dz.T @ x`` and ``dx = dz @ W``.
When a layer has a :class:`QuantConfig`, all three products go through
:func:`bfp_matmul`, which blocks both operands along the reduction axis.
Biases, activations, softmax and the optimizer stay in FP32.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import QuantConfig
from ..kernels import bfp_matmul, op_count
from .schedule import layer_role

__all__ = ["Layer", "MlpModel", "init_mlp", "forward", "backward",
           "softmax_cross_entropy", "layer_macs"]


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"  # "relu" | "none"


@dataclass
class MlpModel:
    layers: list[Layer] = field(default_factory=list)

    @property
    def roles(self) -> list[str]:
        n = len(self.layers)
        return [layer_role(i, n) for i in range(n)]

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [l.weights.shape[0] for l in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for l in self.layers:
            out += [l.weights, l.bias]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "MlpModel":
        it = iter(params)
        return MlpModel([Layer(next(it), next(it), l.activation) for l in self.layers])

    def copy(self) -> "MlpModel":
        return self.with_params([p.copy() for p in self.params()])

    def astype(self, dtype) -> "MlpModel":
        return self.with_params([p.astype(dtype) for p in self.params()])


def init_mlp(sizes: Sequence[int], rng: np.random.Generator) -> MlpModel:
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases."""
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        act = "none" if i == len(sizes) - 2 else "relu"
        layers.append(Layer(w.astype(np.float32), np.zeros(fan_out, np.float32), act))
    return MlpModel(layers)


def _mm(a: np.ndarray, b: np.ndarray, cfg: Optional[QuantConfig]) -> np.ndarray:
    if cfg is None:
        return a @ b
    return bfp_matmul(a, b, cfg)


def forward(model: MlpModel, x: np.ndarray, cfgs: Sequence[Optional[QuantConfig]]):
    """Return ``(logits, cache)``; ``cache`` holds each layer's input and pre-activation."""
    cache = []
    h = x
    for layer, cfg in zip(model.layers, cfgs):
        z = _mm(h, layer.weights.T, cfg) + layer.bias
        cache.append((h, z))
        h = np.maximum(z, 0) if layer.activation == "relu" else z
    return h, cache


def softmax_cross_entropy(logits: np.ndarray, y: np.ndarray):
    """Mean cross-entropy loss and its gradient with respect to the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = len(y)
    logp = shifted[np.arange(n), y] - np.log(exp.sum(axis=1))
    loss = -float(np.mean(logp))
    grad = probs
    grad[np.arange(n), y] -= 1
    return loss, grad / n


def backward(model: MlpModel, cache, grad_logits: np.ndarray,
             cfgs: Sequence[Optional[QuantConfig]], quantize_dw: bool = True):
    """Gradients ``[(dW, db), ...]`` per layer.

    ``quantize_dw=False`` keeps the weight-gradient GEMM in FP32.
    """
    grads = [None] * len(model.layers)
    g = grad_logits
    for i in range(len(model.layers) - 1, -1, -1):
        layer, cfg = model.layers[i], cfgs[i]
        h, z = cache[i]
        if layer.activation == "relu":
            g = g * (z > 0)
        dw = _mm(g.T, h, cfg if quantize_dw else None)
        db = g.sum(axis=0)
        grads[i] = (dw, db)
        if i > 0:
            g = _mm(g, layer.weights, cfg)
    return grads


def layer_macs(model: MlpModel, batch: int) -> list[int]:
    """Training MACs of one step per layer: forward, dW and (except layer 0) dX."""
    out = []
    for i, layer in enumerate(model.layers):
        o, n = layer.weights.shape
        macs = op_count((batch, n), (n, o)) + op_count((o, batch), (batch, n))
        if i > 0:
            macs += op_count((batch, o), (o, n))
        out.append(macs)
    return out

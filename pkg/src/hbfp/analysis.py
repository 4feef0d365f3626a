"""Distribution distance and loss-landscape tools.

``wasserstein_1d`` is the earth mover's distance between two equal-size
empirical distributions with cost ``|x - y|``; in one dimension the optimal
coupling matches sorted samples, giving ``mean(|sort(P) - sort(Q)|)``.

Loss landscapes use filter-normalized random directions: two Gaussian
directions, each row rescaled to the norm of the matching weight row, and the
loss sampled on ``theta + a*d1 + b*d2``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Blocking, QuantConfig, as_tensor, fake_quantize

__all__ = [
    "wasserstein_1d",
    "wasserstein_oracle",
    "quantization_distance",
    "random_directions",
    "LandscapeGrid",
    "landscape",
]


def _samples(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("empty distribution")
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite value")
    return p


def wasserstein_1d(p, q) -> float:
    p, q = _samples(p), _samples(q)
    if p.size != q.size:
        raise ValueError(f"sample count mismatch: {p.size} vs {q.size}")
    return float(np.mean(np.abs(np.sort(p) - np.sort(q))))


@functools.lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)


def wasserstein_oracle(p, q) -> float:
    """Brute-force minimum over all permutation couplings (``n <= 8``).

    For equal-mass empirical measures the optimal coupling can be taken to be
    a permutation (Birkhoff), so this enumerates the transport plans exactly.
    """
    p, q = _samples(p), _samples(q)
    n = p.size
    if q.size != n:
        raise ValueError(f"sample count mismatch: {n} vs {q.size}")
    if n > 8:
        raise ValueError("oracle limited to n <= 8")
    costs = np.abs(p[None, :] - q[_permutations(n)]).sum(axis=1) / n
    return float(costs.min())


def quantization_distance(x, cfg: QuantConfig, blocking: Blocking = Blocking()) -> float:
    """Wasserstein distance between ``x`` and its BFP quantization."""
    x = as_tensor(x)
    return wasserstein_1d(x, fake_quantize(x, cfg, blocking))


def _normalize_rows(d: np.ndarray, w: np.ndarray) -> np.ndarray:
    rows_d = d.reshape(d.shape[0], -1)
    rows_w = w.reshape(w.shape[0], -1)
    nd = np.linalg.norm(rows_d, axis=1, keepdims=True)
    nw = np.linalg.norm(rows_w, axis=1, keepdims=True)
    scale = np.divide(nw, nd, out=np.zeros_like(nd), where=nd > 0)
    return (rows_d * scale).reshape(d.shape)


def random_directions(params: Sequence[np.ndarray], seed: int):
    """Two filter-normalized Gaussian directions shaped like ``params``.

    Weight tensors (ndim >= 2) are normalized per output row/filter; vectors
    such as biases get a zero direction.
    """
    rng = np.random.default_rng(seed)
    dirs = []
    for _ in range(2):
        d = []
        for w in params:
            w = np.asarray(w, dtype=np.float64)
            if w.ndim < 2:
                d.append(np.zeros_like(w))
                continue
            d.append(_normalize_rows(rng.standard_normal(w.shape), w))
        dirs.append(d)
    return dirs[0], dirs[1]


@dataclass
class LandscapeGrid:
    """Loss values around trained parameters.

    ``losses`` has shape ``(len(alphas), len(betas))``, or
    ``(len(alphas), 1)`` for a one-direction slice. The raw loss is stored;
    :meth:`values` applies the log transform when ``log_scale`` is set.
    """

    alphas: np.ndarray
    betas: Optional[np.ndarray]
    losses: np.ndarray
    directions_seed: int
    log_scale: bool = True

    @property
    def center(self) -> float:
        i = len(self.alphas) // 2
        j = 0 if self.betas is None else len(self.betas) // 2
        return float(self.losses[i, j])

    def values(self) -> np.ndarray:
        if not self.log_scale:
            return self.losses
        with np.errstate(divide="ignore"):
            return np.log(self.losses)

    def rows(self):
        """``(alpha, beta, loss)`` triples in row-major order."""
        vals = self.values()
        betas = [0.0] if self.betas is None else self.betas
        for i, a in enumerate(self.alphas):
            for j, b in enumerate(betas):
                yield float(a), float(b), float(vals[i, j])


def _lattice(lo: float, hi: float, steps: int) -> np.ndarray:
    pts = np.linspace(lo, hi, steps)
    if lo < 0 < hi:
        pts[np.argmin(np.abs(pts))] = 0.0
    return pts


def landscape(params: Sequence[np.ndarray], loss_fn: Callable[[list], float],
              range_: tuple[float, float] = (-1.0, 1.0), steps: Optional[int] = None,
              mode: str = "slice", seed: int = 0, log_scale: bool = True) -> LandscapeGrid:
    """Evaluate ``loss_fn`` on a line or plane through ``params``.

    ``steps`` defaults to 51 for a slice and 25 per axis for a grid. It
    must be odd so the unperturbed parameters sit on the lattice;
    that point is evaluated on the untouched arrays, so the center equals the
    model's own loss exactly. Non-finite losses are recorded as ``+inf``.
    """
    if steps is None:
        steps = 51 if mode == "slice" else 25
    if steps < 1 or steps % 2 == 0:
        raise ValueError("steps must be a positive odd number")
    if mode not in ("slice", "grid"):
        raise ValueError("mode must be 'slice' or 'grid'")
    lo, hi = range_
    if not lo < 0 < hi:
        raise ValueError("range must contain 0")
    params = [np.asarray(p) for p in params]
    d1, d2 = random_directions(params, seed)
    alphas = _lattice(lo, hi, steps)
    betas = _lattice(lo, hi, steps) if mode == "grid" else None

    def at(a: float, b: float) -> float:
        if a == 0.0 and b == 0.0:
            probe = params
        else:
            probe = [(p + a * u + b * v).astype(p.dtype) for p, u, v in zip(params, d1, d2)]
        try:
            loss = float(loss_fn(probe))
        except (ValueError, FloatingPointError, OverflowError):
            return math.inf
        return loss if math.isfinite(loss) else math.inf

    cols = [0.0] if betas is None else betas
    losses = np.array([[at(a, b) for b in cols] for a in alphas], dtype=np.float64)
    return LandscapeGrid(alphas, betas, losses, seed, log_scale)

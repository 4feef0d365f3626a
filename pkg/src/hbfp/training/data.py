"""Synthetic desk-scale classification datasets.

All generators are deterministic in ``seed`` and class balanced: every split
holds ``n // K`` or ``n // K + 1`` samples of each of the ``K`` classes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..io import load_hbt

__all__ = ["DatasetSpec", "make_dataset", "DIGIT_GLYPHS"]


@dataclass(frozen=True)
class DatasetSpec:
    """Defaults give the desk benchmark: two interleaved 2.5-turn spirals."""

    kind: str = "spirals"  # spirals | gaussians | digits | hbt
    n_train: int = 2048
    n_val: int = 4096  # one sample moves accuracy by ~0.024 points
    classes: int = 2
    dim: int = 2
    noise: float = 0.03
    turns: float = 2.5
    x_path: Optional[str] = None
    y_path: Optional[str] = None
    val_fraction: float = 0.25

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(**d)


def _balanced_labels(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    y = np.arange(n) % k
    return rng.permutation(y)


def _spirals(n: int, spec: DatasetSpec, rng: np.random.Generator):
    k = spec.classes
    y = _balanced_labels(n, k, rng)
    t = np.sqrt(rng.uniform(0.0, 1.0, n))  # uniform density along the arm
    angle = 2 * np.pi * spec.turns * t + 2 * np.pi * y / k
    r = t
    x = np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)
    x += spec.noise * rng.standard_normal(x.shape)
    return x, y


def _gaussians(n: int, spec: DatasetSpec, rng: np.random.Generator, centers: np.ndarray):
    y = _balanced_labels(n, spec.classes, rng)
    x = centers[y] + (spec.noise or 1.0) * rng.standard_normal((n, spec.dim))
    return x, y


DIGIT_GLYPHS = [
    ["..####..", ".#....#.", ".#...##.", ".#..#.#.", ".#.#..#.", ".##...#.", ".#....#.", "..####.."],
    ["...##...", "..###...", ".#.##...", "...##...", "...##...", "...##...", "...##...", ".######."],
    ["..####..", ".#....#.", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".######."],
    ["..####..", ".#....#.", "......#.", "...###..", "......#.", "......#.", ".#....#.", "..####.."],
    [".....#..", "....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..", ".....#.."],
    [".######.", ".#......", ".#......", ".#####..", "......#.", "......#.", ".#....#.", "..####.."],
    ["...###..", "..#.....", ".#......", ".#####..", ".#....#.", ".#....#.", ".#....#.", "..####.."],
    [".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....", "...#...."],
    ["..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.", ".#....#.", "..####.."],
    ["..####..", ".#....#.", ".#....#.", ".#....#.", "..#####.", "......#.", ".....#..", "..###..."],
]


def _glyph_array() -> np.ndarray:
    return np.array([[[c == "#" for c in row] for row in g] for g in DIGIT_GLYPHS], dtype=np.float64)


def _digits(n: int, spec: DatasetSpec, rng: np.random.Generator):
    k = min(spec.classes, 10)
    glyphs = _glyph_array()[:k]
    y = _balanced_labels(n, k, rng)
    imgs = glyphs[y]
    shifts = rng.integers(-1, 2, size=(n, 2))
    for axis in (0, 1):
        for s in (-1, 1):
            sel = shifts[:, axis] == s
            imgs[sel] = np.roll(imgs[sel], s, axis=axis + 1)
    # Stroke intensity varies per sample; pixel noise on top.
    imgs *= rng.uniform(0.5, 1.5, size=(n, 1, 1))
    imgs += (spec.noise or 0.3) * rng.standard_normal(imgs.shape)
    return imgs.reshape(n, 64), y


def _from_hbt(spec: DatasetSpec, rng: np.random.Generator):
    x = load_hbt(spec.x_path)
    y = load_hbt(spec.y_path)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise ValueError("expected x of shape (n, d) and y of shape (n,)")
    if not np.all(y == np.round(y)) or y.min(initial=0) < 0:
        raise ValueError("labels must be non-negative integers")
    y = y.astype(np.int64)
    order = rng.permutation(len(x))
    n_val = int(round(spec.val_fraction * len(x)))
    va, tr = order[:n_val], order[n_val:]
    return x[tr], y[tr], x[va], y[va]


def make_dataset(spec: DatasetSpec, seed: int):
    """Return ``(x_train, y_train, x_val, y_val)`` with float32 features."""
    rng = np.random.default_rng([seed, 0xDA7A])
    if spec.kind == "hbt":
        xt, yt, xv, yv = _from_hbt(spec, rng)
    elif spec.kind in ("spirals", "gaussians", "digits"):
        if spec.kind == "spirals":
            gen = lambda n: _spirals(n, spec, rng)  # noqa: E731
        elif spec.kind == "gaussians":
            centers = 3.0 * rng.standard_normal((spec.classes, spec.dim))
            gen = lambda n: _gaussians(n, spec, rng, centers)  # noqa: E731
        else:
            gen = lambda n: _digits(n, spec, rng)  # noqa: E731
        xt, yt = gen(spec.n_train)
        xv, yv = gen(spec.n_val)
    else:
        raise ValueError(f"unknown dataset kind {spec.kind!r}")
    return (np.asarray(xt, np.float32), np.asarray(yt, np.int64),
            np.asarray(xv, np.float32), np.asarray(yv, np.int64))

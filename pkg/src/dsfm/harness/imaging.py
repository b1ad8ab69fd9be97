"""Segmentation energies from raster images.

Pixels are numbered row-major (``id = row * W + col``).  The energy has a
unary term per pixel, an edge-cut term per 8-neighbour pair, optionally a
square term per non-overlapping 2x2 tile and region terms grown by BFS.
"""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..core import DecomposableInstance, InputError
from ..potentials import EdgeCutPotential, RegionPotential, SquarePotential, UnaryPotential

# offsets (drow, dcol) covering every 8-neighbour pair once
NEIGHBOUR_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Binary PPM (P6) or PGM (P5) as a float array ``(H, W, channels)`` in ``[0, 1]``."""
    try:
        with Image.open(path) as im:
            if im.format not in ("PPM", "PGM"):
                raise InputError(f"{path}: expected a binary PPM/PGM image, got {im.format}")
            if im.mode not in ("RGB", "L"):
                raise InputError(f"{path}: expected 8-bit samples, got mode {im.mode}")
            arr = np.asarray(im, dtype=float) / 255.0
    except FileNotFoundError:
        raise InputError(f"no such image: {path}") from None
    except OSError as err:
        raise InputError(f"{path}: cannot decode image ({err})") from None
    return arr[:, :, None] if arr.ndim == 2 else arr


def write_image(pixels: np.ndarray, path: str | os.PathLike) -> None:
    """Save ``(H, W)`` or ``(H, W, 3)`` values in ``[0, 1]`` as PGM/PPM."""
    data = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    Image.fromarray(data).save(path, format="PPM")


@dataclass
class ImageParams:
    lambda_pair: float = 1.0
    lambda_square: float = 0.0
    unary_scale: float = 1.0
    regions: int = 0
    region_size: tuple[int, int] = (50, 300)
    foreground: tuple[float, ...] | None = None
    background: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lambda_pair < 0 or self.lambda_square < 0:
            raise InputError("potential weights must be non-negative")
        if self.regions < 0 or not 1 <= self.region_size[0] <= self.region_size[1]:
            raise InputError("bad region parameters")


def neighbour_pairs(H: int, W: int) -> np.ndarray:
    """All 8-neighbour pairs ``(id_a, id_b)`` as an ``(m, 2)`` array."""
    ids = np.arange(H * W).reshape(H, W)
    pairs = []
    for dr, dc in NEIGHBOUR_OFFSETS:
        r0, r1 = 0, H - dr
        c0, c1 = max(0, -dc), W - max(0, dc)
        a = ids[r0:r1, c0:c1]
        b = ids[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        pairs.append(np.stack([a.ravel(), b.ravel()], axis=1))
    return np.concatenate(pairs)


def square_tiles(H: int, W: int) -> np.ndarray:
    """Non-overlapping 2x2 tiles, ids ordered top-left, top-right, bottom-left, bottom-right."""
    ids = np.arange(H * W).reshape(H, W)
    h, w = H // 2 * 2, W // 2 * 2
    tl = ids[0:h:2, 0:w:2].ravel()
    return np.stack([tl, tl + 1, tl + W, tl + W + 1], axis=1)


def grid_counts(W: int, H: int, regions: int = 0) -> dict:
    """Potential counts for a ``W x H`` image."""
    pixels = W * H
    edges = H * (W - 1) + W * (H - 1) + 2 * (W - 1) * (H - 1)
    squares = (W // 2) * (H // 2)
    return {
        "pixels": pixels,
        "edges": edges,
        "squares": squares,
        "r_mincut": pixels + edges,
        "r_small_cliques": pixels + edges + squares,
        "r_large_cliques": pixels + edges + squares + regions,
    }


def _default_colours(flat: np.ndarray):
    lum = flat.mean(axis=1)
    cut = np.median(lum)
    hi, lo = flat[lum > cut], flat[lum <= cut]
    fg = hi.mean(axis=0) if hi.size else flat.mean(axis=0)
    bg = lo.mean(axis=0) if lo.size else flat.mean(axis=0)
    return fg, bg


def grow_regions(H: int, W: int, count: int, size: tuple[int, int], rng: np.random.Generator) -> list[list[int]]:
    """Disjoint 4-connected regions grown by BFS from random seed pixels."""
    owner = np.full(H * W, -1)
    regions = []
    attempts = 0
    while len(regions) < count and attempts < 20 * count + 100:
        attempts += 1
        seed = int(rng.integers(H * W))
        if owner[seed] >= 0:
            continue
        target = int(rng.integers(size[0], size[1] + 1))
        members = [seed]
        owner[seed] = len(regions)
        queue = deque([seed])
        while queue and len(members) < target:
            p = queue.popleft()
            r, c = divmod(p, W)
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                q = rr * W + cc
                if 0 <= rr < H and 0 <= cc < W and owner[q] < 0 and len(members) < target:
                    owner[q] = len(regions)
                    members.append(q)
                    queue.append(q)
        if len(members) < max(2, size[0]):
            owner[members] = -1
            continue
        regions.append(sorted(members))
    return regions


def image_to_instance(image: np.ndarray, params: ImageParams | None = None) -> DecomposableInstance:
    """Build the segmentation energy of an ``(H, W)`` or ``(H, W, C)`` image in ``[0, 1]``.

    Edge weights are ``lambda_pair * exp(-beta * d^2)`` with ``beta`` the
    inverse of twice the mean squared colour difference over neighbour pairs
    (``beta = 0`` for a constant image).  The unary term of pixel ``p`` is
    ``unary_scale * (||v_p - fg||^2 - ||v_p - bg||^2)``.
    """
    params = params or ImageParams()
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    H, W = img.shape[:2]
    if H < 2 or W < 2:
        raise InputError("image must be at least 2x2")
    flat = img.reshape(H * W, -1)
    fg, bg = _default_colours(flat)
    if params.foreground is not None:
        fg = np.broadcast_to(np.asarray(params.foreground, dtype=float), fg.shape)
    if params.background is not None:
        bg = np.broadcast_to(np.asarray(params.background, dtype=float), bg.shape)

    pots = []
    delta = params.unary_scale * (((flat - fg) ** 2).sum(axis=1) - ((flat - bg) ** 2).sum(axis=1))
    pots += [UnaryPotential(p, 0.0, d) for p, d in enumerate(delta)]

    pairs = neighbour_pairs(H, W)
    d2 = ((flat[pairs[:, 0]] - flat[pairs[:, 1]]) ** 2).sum(axis=1)
    mean = d2.mean()
    beta = 1.0 / (2.0 * mean) if mean > 0 else 0.0
    weights = params.lambda_pair * np.exp(-beta * d2)
    pots += [EdgeCutPotential(int(a), int(b), w) for (a, b), w in zip(pairs, weights)]

    if params.lambda_square > 0:
        pots += [SquarePotential(t.tolist(), params.lambda_square) for t in square_tiles(H, W)]
    if params.regions:
        rng = np.random.default_rng(params.seed)
        pots += [RegionPotential(reg) for reg in grow_regions(H, W, params.regions, params.region_size, rng)]
    return DecomposableInstance(H * W, pots)

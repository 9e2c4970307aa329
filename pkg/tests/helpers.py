"""Shared synthetic-data builders for the test suite."""

import json
import os

import numpy as np

from motionscore.imageio import Image, save_image


def make_texture(h, w, rng):
    """Band-limited random texture in [0, 1].

    Multi-octave smoothed noise: each pass runs a [1,2,1]/4 kernel along
    both axes (wrap-around boundaries), blended at decreasing weights so
    the result keeps gradient structure at several scales.
    """
    big = rng.random((h, w))
    for reps, weight in ((4, 1.0), (2, 0.5), (1, 0.25)):
        sm = big.copy()
        for _ in range(reps):
            for ax in (0, 1):
                sm = 0.25 * np.roll(sm, 1, ax) + 0.5 * sm + 0.25 * np.roll(sm, -1, ax)
        big = sm if weight == 1.0 else big * (1 - weight) + sm * weight
    big -= big.min()
    big /= big.max()
    return big


def shifted_pair(h, w, dx, dy, rng):
    """Texture pair (a, b) where the true flow a -> b is exactly (dx, dy).

    Both frames are crops of one oversized texture; b is sampled with
    bilinear interpolation at positions displaced by (-dx, -dy), which
    makes content at (x, y) in a appear at (x + dx, y + dy) in b.
    """
    margin = int(np.ceil(max(abs(dx), abs(dy)))) + 4
    big = make_texture(h + 2 * margin, w + 2 * margin, rng)
    a = big[margin:margin + h, margin:margin + w]
    ys, xs = np.mgrid[0:h, 0:w]
    sx = np.clip(xs + margin - dx, 0, w + 2 * margin - 1.001)
    sy = np.clip(ys + margin - dy, 0, h + 2 * margin - 1.001)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx = sx - x0
    fy = sy - y0
    b = (
        big[y0, x0] * (1 - fx) * (1 - fy)
        + big[y0, x0 + 1] * fx * (1 - fy)
        + big[y0 + 1, x0] * (1 - fx) * fy
        + big[y0 + 1, x0 + 1] * fx * fy
    )
    return a, b


def save_gray(path, arr):
    h, w = arr.shape
    save_image(Image(width=w, height=h, channels=1, data=arr[:, :, None]), path)


def write_triplet_corpus(dirpath, n, dx, dy, size=48, seed=0, models=("good", "bad")):
    """Write n shifted triplets plus per-model outputs and a manifest.

    Model "good" copies gt; model "bad" copies the input. Returns the
    manifest path.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(dirpath, exist_ok=True)
    lines = []
    for i in range(n):
        a, gt = shifted_pair(size, size, dx, dy, rng)
        base = os.path.join(dirpath, f"e{i:03d}")
        save_gray(base + "_in.png", a)
        save_gray(base + "_gt.png", gt)
        outputs = {}
        for model in models:
            path = base + f"_{model}.png"
            save_gray(path, gt if model == "good" else a)
            outputs[model] = path
        lines.append(
            {
                "id": f"e{i:03d}",
                "category": "pose",
                "instruction": "shift the subject",
                "input_path": base + "_in.png",
                "gt_path": base + "_gt.png",
                "outputs": outputs,
            }
        )
    manifest = os.path.join(dirpath, "manifest.jsonl")
    with open(manifest, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")
    return manifest


def random_flow_arrays(h, w, rng, scale=3.0):
    u = scale * rng.standard_normal((h, w)).astype(np.float32)
    v = scale * rng.standard_normal((h, w)).astype(np.float32)
    return u, v

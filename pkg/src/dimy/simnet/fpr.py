"""Monte Carlo false-positive curve for Bloom filters of a given size."""

from __future__ import annotations

import numpy as np

from ..bloom import BloomFilter, BloomParams, fpr_estimate, positions
from .rng import named_rng

ITEM_LEN = 32


def default_points(n_max: int, steps: int = 10) -> list[int]:
    pts = {0, n_max, *(round(n_max * i / steps) for i in range(1, steps))}
    if 1000 < n_max:
        pts.add(1000)
    return sorted(pts)


def fpr_experiment(m: int = 800_000, k: int = 3, n_max: int = 21_000,
                   trials: int = 1_000_000, points: list[int] | None = None,
                   seed: int = 0) -> list[dict]:
    """Insert up to ``n_max`` random items, probing ``trials`` non-members at each point.

    The same probe set is reused for every point, so the empirical curve is
    monotone in ``n`` by construction.
    """
    params = BloomParams(m, k)
    points = sorted(set(points)) if points is not None else default_points(n_max)
    if points and (points[0] < 0 or points[-1] > n_max):
        raise ValueError("points must lie in [0, n_max]")
    rng = named_rng(seed, "fpr", m, k)
    members = [rng.randbytes(ITEM_LEN) for _ in range(n_max)]
    member_set = set(members)
    probes = []
    while len(probes) < trials:
        item = rng.randbytes(ITEM_LEN)
        if item not in member_set:
            probes.append(item)
    probe_pos = np.array([positions(p, params) for p in probes], dtype=np.int64)
    probe_pos = probe_pos.reshape(len(probes), k)

    bf = BloomFilter(params)
    curve = []
    inserted = 0
    for n in points:
        for item in members[inserted:n]:
            bf.insert(item)
        inserted = n
        bits = np.unpackbits(np.frombuffer(bf.body(), dtype=np.uint8), bitorder="little")
        positives = int(bits[probe_pos].all(axis=1).sum()) if trials else 0
        curve.append({
            "n": n,
            "probes": trials,
            "positives": positives,
            "empirical": positives / trials if trials else 0.0,
            "predicted": fpr_estimate(params, n),
        })
    return curve

"""Seeded generators for MNIG mixtures, including the two simulation designs."""

import json
from dataclasses import dataclass

import numpy as np

from .distributions import ComponentParams, sample_mnig

__all__ = ["MixtureSpec", "generate", "load_spec", "sim1_spec", "sim2_spec"]


@dataclass(frozen=True)
class MixtureSpec:
    """Component parameters paired with the number of draws from each."""

    components: tuple

    def __post_init__(self):
        comps = tuple((p, int(n)) for p, n in self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        d = comps[0][0].dim
        for p, n in comps:
            if not isinstance(p, ComponentParams):
                raise TypeError("components must hold ComponentParams")
            if p.dim != d:
                raise ValueError("components have inconsistent dimensions")
            if n < 1:
                raise ValueError("component sizes must be >= 1")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return self.components[0][0].dim

    @property
    def size(self):
        return sum(n for _, n in self.components)

    @property
    def params(self):
        return [p for p, _ in self.components]


def generate(spec, seed):
    """
    Draw every component's rows in order and return ``(data, truth)``.

    ``truth`` holds zero-based component indices.
    """
    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for g, (p, n) in enumerate(spec.components):
        x, _ = sample_mnig(p, rng, size=n)
        blocks.append(x)
        labels.append(np.full(n, g, dtype=int))
    return np.vstack(blocks), np.concatenate(labels)


def sim1_spec():
    """Four skewed components in two dimensions, 650 rows."""
    rows = [
        (1.2, [-2, -10], [0.1, 0.2], [[1.2, 0], [0, 1.2]], 200),
        (0.8, [-10, -10], [-0.2, -0.2], [[1, 0.4], [0.4, 1]], 180),
        (0.6, [-12, 2], [0.2, -0.25], [[2, 1], [1, 1]], 150),
        (1.0, [2, 2], [-0.2, 0.2], [[1.2, -0.2], [-0.2, 1]], 120),
    ]
    return MixtureSpec(tuple((ComponentParams(m, b, g, s), n) for g, m, b, s, n in rows))


def sim2_spec():
    """Three components in four dimensions, 500 rows."""
    rows = [
        (0.6, [9, -6, -5, 9], [0, 0, -0.5, -0.5], np.eye(4), 100),
        (0.9, [7, 5, 0, -7], [0.2, 0.2, 0.2, 0.2],
         [[2, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 0], [1, 0, 0, 1]], 200),
        (1.2, [-3, -2, 7, 3], [0, 0, 0, 0],
         [[6, -2, 3, -1], [-2, 1, -1, 0], [3, -1, 4, -1], [-1, 0, -1, 2]], 200),
    ]
    return MixtureSpec(tuple((ComponentParams(m, b, g, s), n) for g, m, b, s, n in rows))


def load_spec(path):
    """
    Read a mixture from JSON.

    The file holds ``{"components": [{"gamma": .., "mu": [..], "beta": [..],
    "sigma": [[..]], "n": ..}, ...]}``.

    Raises
    ------
    ValueError
        With the offending component index when a field is missing or invalid.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"spec is not valid JSON: {exc}") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("components"), list):
        raise ValueError("spec must be an object with a 'components' list")
    comps = []
    for k, c in enumerate(raw["components"]):
        missing = {"gamma", "mu", "beta", "sigma", "n"} - set(c)
        if missing:
            raise ValueError(f"component {k}: missing fields {sorted(missing)}")
        try:
            comps.append((ComponentParams(c["mu"], c["beta"], c["gamma"], c["sigma"]), int(c["n"])))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"component {k}: {exc}") from None
    return MixtureSpec(tuple(comps))

"""Bundled synthetic region-wise example data.

``regions_outcome.csv`` is a 200 x 112 matrix of CBF-like regional means
and ``regions_design.csv`` holds ``age``, ``sex`` and a binary ``group``
covariate. The group effect is injected at :data:`SIGNAL_REGIONS` only.
Regenerate with ``python -m pbj.datasets``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .io import load_matrix, save_matrix

N_SUBJECTS = 200
N_REGIONS = 112
SIGNAL_REGIONS = (7, 42, 90)
GROUP_EFFECT = 0.8  # in noise standard deviations
SEED = 20190501


def make_regions(seed=SEED):
    """Generate ``(Y, X, region_labels, design_labels)``."""
    rng = np.random.default_rng(seed)
    n, V = N_SUBJECTS, N_REGIONS
    age = rng.uniform(8, 21, n)
    sex = (rng.permutation(n) < n // 2).astype(float)
    group = (rng.permutation(n) < n // 2).astype(float)

    # shared global factor plus AR(1) neighbourhood correlation
    rho = 0.6
    e = rng.standard_normal((n, V))
    noise = np.empty_like(e)
    noise[:, 0] = e[:, 0]
    for j in range(1, V):
        noise[:, j] = rho * noise[:, j - 1] + np.sqrt(1 - rho**2) * e[:, j]
    noise = 0.8 * noise + 0.6 * rng.standard_normal((n, 1))
    sd = rng.uniform(6, 12, V)
    base = rng.uniform(45, 75, V)
    age_slope = rng.normal(-0.8, 0.3, V)
    Y = base + age_slope * (age - 14)[:, None] + 3.0 * sex[:, None] + sd * noise
    Y[:, list(SIGNAL_REGIONS)] += GROUP_EFFECT * sd[list(SIGNAL_REGIONS)] * group[:, None]
    X = np.column_stack([age, sex, group])
    return Y, X, [f"region{j:03d}" for j in range(V)], ["age", "sex", "group"]


def data_path(name):
    return resources.files("pbj").joinpath("data", name)


def load_regions():
    """Bundled ``(Y, region_labels, X, design_labels)``."""
    with resources.as_file(data_path("regions_outcome.csv")) as p:
        Y, ylab = load_matrix(p)
    with resources.as_file(data_path("regions_design.csv")) as p:
        X, xlab = load_matrix(p)
    return Y, ylab, X, xlab


def write_regions(directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    Y, X, ylab, xlab = make_regions()
    save_matrix(directory / "regions_outcome.csv", Y, ylab)
    save_matrix(directory / "regions_design.csv", X, xlab)


if __name__ == "__main__":
    write_regions(Path(__file__).parent / "data")

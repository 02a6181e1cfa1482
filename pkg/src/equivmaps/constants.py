"""Pinned values for the universal constants of the bounds.

The constants are only known to exist, so each one is pinned as the supremum of
the relevant ratio over a fixed pilot grid.  ``C`` carries a safety factor of 2
because it has to cover every ``lambda``, not just the grid.  ``D1`` and ``D2``
follow from ``D`` through the algebra that splits the detail terms.  :func:`pilot_run` recomputes
them; the shipped ``data/pinned_constants.json`` is its output.
"""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .couplings import Gaussian, PoissonRootDensity
from .hellinger import hellinger_sq

__all__ = ["PINNED_VERSION", "THM5_MS", "THM5_PS", "TUSNADY_MS", "pilot_run", "write_pinned_constants", "load_pinned_constants"]

PINNED_VERSION = 1
THM4_LAMBDAS = [2.0**e for e in range(-6, 15)]
THM5_MS = [0, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024]
THM5_PS = [0.4, 0.45, 0.49, 0.5, 0.51, 0.55, 0.6]
TUSNADY_MS = [64, 256, 1024]


def pilot_run() -> dict:
    """Recompute every pinned constant; deterministic (no randomness is involved)."""
    from .metrics import thm5_d_ratios, thm5_sweep, tusnady_check

    lam_h2 = [lam * hellinger_sq(PoissonRootDensity(lam), Gaussian(2.0 * math.sqrt(lam))) for lam in THM4_LAMBDAS]
    C = 2.0 * max(lam_h2)
    D = float(np.max(thm5_d_ratios(THM5_MS, THM5_PS)))
    C1 = thm5_sweep(THM5_MS, THM5_PS, quadrature=False).ratio_sup
    tus = tusnady_check(TUSNADY_MS)
    return {
        "version": PINNED_VERSION,
        "C": C,
        "D": D,
        "D1": 3.0 * D / 8.0 + 2.0,
        "D2": D / 9.0 + 8.0 / 3.0,
        "C0": tus.ratio_sup,
        "C1": C1,
        "C2": tus.metadata["midpoint_ratio_sup"],
        "grids": {
            "thm4_lambdas": THM4_LAMBDAS,
            "thm5_ms": THM5_MS,
            "thm5_ps": THM5_PS,
            "tusnady_ms": TUSNADY_MS,
        },
    }


def write_pinned_constants(path=None) -> Path:
    if path is None:
        path = Path(__file__).parent / "data" / "pinned_constants.json"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(pilot_run(), indent=2, sort_keys=True) + "\n")
    return path


def load_pinned_constants() -> dict:
    text = resources.files("equivmaps").joinpath("data/pinned_constants.json").read_text()
    data = json.loads(text)
    if data.get("version") != PINNED_VERSION:
        raise RuntimeError(f"pinned constants have version {data.get('version')!r}, expected {PINNED_VERSION}")
    return data

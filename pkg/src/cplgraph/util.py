"""Shared plumbing: error types and deterministic seed derivation."""

from __future__ import annotations

import numpy as np


class ConfigError(Exception):
    """Invalid configuration or command line usage (CLI exit code 1)."""


class DataError(Exception):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class NumericalError(Exception):
    """Non-finite values or divergence during computation (CLI exit code 3)."""


def derive_seed(*parts: int) -> int:
    """Mix integer parts into a stable 32-bit seed.

    Goes through numpy's SeedSequence so the result does not depend on the
    process hash seed or the platform.
    """
    if any(int(p) < 0 for p in parts):
        raise ValueError("seed parts must be non-negative")
    seq = np.random.SeedSequence([int(p) for p in parts])
    return int(seq.generate_state(1)[0])

"""Shared plumbing: errors, seeding, rounding, atomic file output."""

import math
import os
import tempfile

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration or parameters (CLI exit code 2)."""


class CapacityError(RuntimeError):
    """Requested computation exceeds an enforced resource cap (CLI exit code 3)."""


class NumericalError(RuntimeError):
    """Numerical failure: integrator violation, non-finite values (CLI exit code 4)."""


def block_sizes_from_fractions(n, fractions):
    """Split n vertices into blocks by largest-remainder rounding.

    Deterministic: ties in fractional part go to the lower block index.
    Returns an int64 array with sum exactly n.
    """
    frac = np.asarray(fractions, dtype=np.float64)
    quota = n * frac
    base = np.floor(quota).astype(np.int64)
    short = n - int(base.sum())
    if short > 0:
        remainder = quota - base
        # stable sort on -remainder: equal remainders keep index order
        order = np.argsort(-remainder, kind="stable")
        base[order[:short]] += 1
    return base


def block_offsets(sizes):
    """Start index of each block when vertices are laid out block by block."""
    return np.concatenate(([0], np.cumsum(sizes)[:-1]))


def seed_sequence(master_seed, *path):
    """Child seed stream for a labelled point in the experiment hierarchy.

    Entropy is the tuple (master_seed, *path), so streams for distinct paths
    are independent and reproducible regardless of execution order.
    """
    entropy = (int(master_seed),) + tuple(int(p) for p in path)
    return np.random.SeedSequence(entropy)


def rng_from(master_seed, *path):
    """PCG64 generator for a labelled child stream."""
    return np.random.default_rng(seed_sequence(master_seed, *path))


def kernel_seed(master_seed, *path):
    """64-bit seed for compiled kernels, derived from the same hierarchy."""
    return int(seed_sequence(master_seed, *path).generate_state(1, np.uint64)[0])


def fmt_real(x):
    """Render a float with 17 significant digits ('.' decimal, no locale)."""
    return format(float(x), ".17g")


def fsum_mean(values):
    """Order-independent mean via exact compensated summation."""
    values = list(values)
    return math.fsum(values) / len(values)


def atomic_write_text(path, text):
    """Write text to path atomically (temp file in same dir + rename)."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

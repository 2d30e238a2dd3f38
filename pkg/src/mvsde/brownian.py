"""Seeded Brownian increments on a uniform grid, with exact coarsening.

Reproducibility contract
------------------------
The increment for (particle ``i``, step ``k``, component ``r``) is a pure
function of ``(seed, i, k, r)``.  Each (seed, particle, chunk-of-steps) pair
owns a private Philox-4x64 counter stream; the 64-bit word at the fixed
in-stream position ``(k mod chunk) * m + r`` is mapped through the inverse
normal CDF,

    u = (word >> 11 + 0.5) * 2**-53,    z = ndtri(u),

and scaled by ``sqrt(T / n_fine)``.  No rejection sampling is involved, so a
value never depends on generation order, chunking, thread count, or on how
many particles or steps the surrounding grid has.  Bitwise reproducibility is
per build (fixed numpy/scipy versions); the mapping above is part of this
module's contract.

Coarsening never re-sums previously coarsened values: every grid keeps a
handle on the root fine stream and derives its increments by one grouped
ascending-order sum over root increments.  ``coarsen(coarsen(g, a), b)``
therefore runs the exact same floating-point reduction as
``coarsen(g, a * b)`` and the results are bitwise identical.

Grids whose root stream holds at most ``2**26`` values are materialized in
memory; larger grids regenerate chunks from the counter stream on demand.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_KEY_CONST = 0x9E3779B97F4A7C15  # fixed second Philox key word
CHUNK_STEPS = 4096  # root steps per counter chunk, fixed for all grids
_MATERIALIZE_LIMIT = 1 << 26  # max root values kept in memory

# purpose tags keep the increment, initial-normal and initial-uniform
# streams of one seed disjoint in counter space
_TAG_INCREMENTS = 0
_TAG_INIT_NORMAL = 1
_TAG_INIT_UNIFORM = 2


def derive_seed(seed: int, index: int) -> int:
    """Derive a decorrelated child seed (splitmix64 finalizer)."""
    z = (int(seed) + 0x9E3779B97F4A7C15 * (int(index) + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _stream_words(seed, tag, particle, chunk, n_words):
    """First `n_words` of the Philox stream keyed by (seed, tag, particle, chunk)."""
    bg = np.random.Philox(
        counter=[0, chunk, particle, tag], key=[int(seed) & _MASK64, _KEY_CONST]
    )
    return bg.random_raw(n_words)


def _words_to_uniform(raw):
    # one word per double; strictly inside (0, 1) so ndtri stays finite
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


class PathGrid:
    """Brownian increments for N particles on a uniform mesh of [0, T].

    A grid with ``factor > 1`` is a coarsened view: it exposes
    ``n_fine // factor`` steps, each the ascending-order sum of ``factor``
    consecutive root increments.  All views of one root stream share the
    same seed and the same underlying paths.
    """

    def __init__(self, seed, n_fine, T, N, m, factor=1, root=None):
        self.seed = int(seed)
        self.n_fine = int(n_fine)
        self.T = float(T)
        self.N = int(N)
        self.m = int(m)
        self.factor = int(factor)
        self._root = root

    @property
    def n_steps(self) -> int:
        """Number of steps of this (possibly coarsened) grid."""
        return self.n_fine // self.factor

    @property
    def h(self) -> float:
        """Step size of this grid."""
        return self.T * self.factor / self.n_fine

    @property
    def h_fine(self) -> float:
        return self.T / self.n_fine

    def _root_block(self, k0, k1):
        """Root increments for root steps [k0, k1), shape (N, k1-k0, m)."""
        if self._root is not None:
            return self._root[:, k0:k1, :]
        scale = np.sqrt(self.T / self.n_fine)
        out = np.empty((self.N, k1 - k0, self.m))
        first, last = k0 // CHUNK_STEPS, (k1 - 1) // CHUNK_STEPS
        for c in range(first, last + 1):
            lo = max(k0, c * CHUNK_STEPS)
            hi = min(k1, (c + 1) * CHUNK_STEPS)
            w0 = (lo - c * CHUNK_STEPS) * self.m
            w1 = (hi - c * CHUNK_STEPS) * self.m
            raw = np.empty((self.N, w1 - w0), dtype=np.uint64)
            for i in range(self.N):
                raw[i] = _stream_words(self.seed, _TAG_INCREMENTS, i, c, w1)[w0:]
            z = ndtri(_words_to_uniform(raw))
            out[:, lo - k0 : hi - k0, :] = z.reshape(self.N, hi - lo, self.m) * scale
        return out

    def increments_block(self, k0, k1):
        """Increments of THIS grid for its steps [k0, k1), shape (N, k1-k0, m).

        Coarse increments are grouped sums of root increments, accumulated in
        ascending root-step order.
        """
        if not 0 <= k0 <= k1 <= self.n_steps:
            raise ValueError(f"step range [{k0}, {k1}) outside [0, {self.n_steps}]")
        f = self.factor
        fine = self._root_block(k0 * f, k1 * f)
        if f == 1:
            return fine
        grouped = fine.reshape(self.N, k1 - k0, f, self.m)
        out = grouped[:, :, 0, :].copy()
        for j in range(1, f):
            out += grouped[:, :, j, :]
        return out

    def step_increments(self, k):
        """Increments for single step k, shape (N, m)."""
        return self.increments_block(k, k + 1)[:, 0, :]


def generate(seed, n_fine, T, N, m, materialize=None) -> PathGrid:
    """Create a new root path grid of Normal(0, T/n_fine) increments.

    ``materialize`` overrides the default memory policy (root streams up to
    2**26 values are kept in memory, larger ones are regenerated on demand).
    """
    if int(n_fine) < 1:
        raise ValueError("n_fine must be a positive integer")
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if int(N) < 1 or int(m) < 1:
        raise ValueError("N and m must be positive integers")
    grid = PathGrid(seed, n_fine, T, N, m)
    if materialize is None:
        materialize = int(N) * int(n_fine) * int(m) <= _MATERIALIZE_LIMIT
    if materialize:
        root = grid._root_block(0, grid.n_fine).copy()
        root.flags.writeable = False
        grid._root = root
    return grid


def coarsen(grid: PathGrid, factor: int) -> PathGrid:
    """View of `grid` with `factor` consecutive steps merged into one.

    `factor` must divide the grid's current step count.  The coarse grid
    shares the root stream, so repeated coarsening composes exactly.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("coarsening factor must be a positive integer")
    if grid.n_steps % factor != 0:
        raise ValueError(
            f"factor {factor} does not divide the {grid.n_steps}-step grid"
        )
    return PathGrid(
        grid.seed,
        grid.n_fine,
        grid.T,
        grid.N,
        grid.m,
        factor=grid.factor * factor,
        root=grid._root,
    )


class InitStream:
    """Deterministic draw source handed to a model's initial sampler.

    Streams are keyed by (seed, purpose, particle), disjoint from the
    increment streams of the same seed, so initial data and Brownian paths
    are independent.
    """

    def __init__(self, seed, N, d):
        self.seed = int(seed)
        self.N = int(N)
        self.d = int(d)

    @property
    def shape(self):
        return (self.N, self.d)

    def _block(self, tag):
        raw = np.empty((self.N, self.d), dtype=np.uint64)
        for i in range(self.N):
            raw[i] = _stream_words(self.seed, tag, i, 0, self.d)
        return _words_to_uniform(raw)

    def normals(self):
        """Standard normal block of shape (N, d)."""
        return ndtri(self._block(_TAG_INIT_NORMAL))

    def uniforms(self):
        """Uniform(0, 1) block of shape (N, d)."""
        return self._block(_TAG_INIT_UNIFORM)

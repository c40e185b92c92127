"""Canonical state space for the environment seen from the tagged particle.

States are occupancy patterns of K-1 indistinguishable particles on the
punctured torus (the tagged particle is pinned at the origin and excluded).
The space is enumerated in lexicographic order of the sorted occupied-site
index lists, which matches ``itertools.combinations`` order; ranks are
computed with exact integer binomial tables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    OutOfRangeError,
    SiteIsOriginError,
    SizeCapError,
    TargetIsOriginError,
    TargetOccupiedError,
    WrongCountError,
)

#: refuse to materialize per-state tables beyond this many states
DEFAULT_MAX_STATES = 500_000


@dataclass(frozen=True)
class Configuration:
    """Occupancy pattern: bit i set <=> environment site i occupied."""

    bits: int
    k: int

    @property
    def occupied_indices(self):
        return tuple(_iter_bits(self.bits))

    def occupied(self, index):
        return (self.bits >> index) & 1 == 1


def _iter_bits(bits):
    while bits:
        low = bits & -bits
        yield low.bit_length() - 1
        bits ^= low


class StateSpace:
    """All configurations of K-1 particles on the environment sites.

    Parameters
    ----------
    geometry : TorusGeometry
    K : int
        Total particle count including the tagged one; 1 <= K <= (2N)^d.
    """

    def __init__(self, geometry, K):
        M = geometry.n_env_sites
        if not 1 <= K <= geometry.n_sites:
            raise WrongCountError(
                f"K = {K} outside [1, {geometry.n_sites}] for side "
                f"{geometry.side}^({geometry.dimension})"
            )
        self.geometry = geometry
        self.K = int(K)
        self.k = self.K - 1          # environment particles
        self.M = M                   # environment sites
        self.size = math.comb(M, self.k)
        self.alpha = (self.K - 1) / (geometry.n_sites - 1)
        # C[n][r] for 0 <= n <= M, 0 <= r <= k+1, exact integers
        self._C = [[math.comb(n, r) for r in range(self.k + 2)]
                   for n in range(M + 1)]
        self._bitmasks = None

    def __repr__(self):
        return (f"StateSpace(d={self.geometry.dimension}, N={self.geometry.N}, "
                f"K={self.K}, size={self.size})")

    # -- ranking ------------------------------------------------------------

    def rank(self, config):
        """Lexicographic rank of a configuration."""
        if config.k != self.k or config.bits.bit_count() != self.k:
            raise WrongCountError(
                f"configuration has {config.bits.bit_count()} particles, "
                f"space expects {self.k}"
            )
        if config.bits >> self.M:
            raise OutOfRangeError("configuration occupies sites beyond the torus")
        return self.rank_bits(config.bits)

    def rank_bits(self, bits):
        """Rank an occupancy bitmask (no validation; assembly fast path)."""
        C, M, k = self._C, self.M, self.k
        r = 0
        prev = -1
        i = 0
        while bits:
            low = bits & -bits
            s = low.bit_length() - 1
            bits ^= low
            j = k - i
            r += C[M - 1 - prev][j] - C[M - s][j]
            prev = s
            i += 1
        return r

    def unrank(self, rank):
        """Configuration at a given lexicographic rank."""
        if not 0 <= rank < self.size:
            raise OutOfRangeError(f"rank {rank} outside [0, {self.size})")
        C, M, k = self._C, self.M, self.k
        bits = 0
        s = 0
        r = rank
        for i in range(k):
            remaining = k - 1 - i
            while True:
                here = C[M - 1 - s][remaining]
                if r < here:
                    break
                r -= here
                s += 1
            bits |= 1 << s
            s += 1
        return Configuration(bits, k)

    def states(self):
        """Iterate configurations in rank order."""
        for occ in itertools.combinations(range(self.M), self.k):
            bits = 0
            for i in occ:
                bits |= 1 << i
            yield Configuration(bits, self.k)

    def bitmasks(self):
        """List of occupancy bitmasks indexed by rank (cached)."""
        if self._bitmasks is None:
            if self.size > DEFAULT_MAX_STATES:
                raise SizeCapError(
                    f"{self.size} states exceed cap {DEFAULT_MAX_STATES}"
                )
            self._bitmasks = [c.bits for c in self.states()]
        return self._bitmasks

    def config_from_sites(self, sites):
        """Configuration occupying the given canonical sites."""
        bits = 0
        for s in sites:
            i = self.geometry.env_index(s)
            if (bits >> i) & 1:
                raise TargetOccupiedError(f"site {s} listed twice")
            bits |= 1 << i
        if bits.bit_count() != self.k:
            raise WrongCountError(
                f"{bits.bit_count()} sites given, space expects {self.k}"
            )
        return Configuration(bits, self.k)

    # -- moves --------------------------------------------------------------

    def exchange(self, config, x, y):
        """Swap the occupancies of environment sites x and y."""
        gx, gy = self.geometry.wrap(x), self.geometry.wrap(y)
        if gx == self.geometry.origin or gy == self.geometry.origin:
            raise SiteIsOriginError(f"exchange touches the origin: {x}, {y}")
        ix, iy = self.geometry.env_index(gx), self.geometry.env_index(gy)
        if ix == iy:
            return config
        bits = config.bits
        bx, by = (bits >> ix) & 1, (bits >> iy) & 1
        if bx != by:
            bits ^= (1 << ix) | (1 << iy)
        return Configuration(bits, config.k)

    def shift(self, config, z):
        """Re-center after a tagged jump by displacement z.

        The jump target wrap(z) must be a vacant environment site. Every
        occupied site y moves to wrap(y - z); the vacated seat wrap(-z)
        ends up empty, preserving the particle count.
        """
        geo = self.geometry
        target = geo.wrap(z)
        if target == geo.origin:
            raise TargetIsOriginError(f"displacement {z} wraps onto the origin")
        it = geo.env_index(target)
        if (config.bits >> it) & 1:
            raise TargetOccupiedError(f"jump target {target} is occupied")
        bits = 0
        for i in _iter_bits(config.bits):
            y = geo.env_sites[i]
            moved = geo.wrap(tuple(a - b for a, b in zip(y, target)))
            bits |= 1 << geo.env_index(moved)
        return Configuration(bits, config.k)

    # -- observable support ---------------------------------------------------

    def site_occupancy(self, site_indices):
        """Occupancy indicators, shape (size, len(site_indices)), uint8."""
        masks = self.bitmasks()
        out = np.zeros((self.size, len(site_indices)), dtype=np.uint8)
        for j, idx in enumerate(site_indices):
            bit = 1 << idx
            col = out[:, j]
            for r, b in enumerate(masks):
                if b & bit:
                    col[r] = 1
        return out

    def inside_counts(self, mask):
        """Per-state particle count inside the site set given as a bitmask."""
        return np.fromiter(
            ((b & mask).bit_count() for b in self.bitmasks()),
            dtype=np.int64,
            count=self.size,
        )

"""Markov generators on the ranked state space, stored sparsely.

Operators keep only strictly positive off-diagonal rates; the diagonal is
always the negative row sum, so row sums vanish identically. The reference
measure is uniform on the state space, and all inner products are taken
with the flat weight 1/size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NotConnectedError, NotMeanZeroError, NotStationaryError, SizeCapError
from .statespace import _iter_bits

DEFAULT_MAX_STATES = 500_000
DEFAULT_MAX_NNZ = 50_000_000

#: absolute tolerance for the mean-zero flag on observables
MEAN_ZERO_TOL = 1e-12


def inner(f, g):
    """Inner product under the uniform measure: (f . g) / size."""
    f = np.asarray(getattr(f, "values", f), dtype=float)
    g = np.asarray(getattr(g, "values", g), dtype=float)
    return float(f @ g) / f.size


def center(f):
    """Subtract the flat mean."""
    f = np.asarray(getattr(f, "values", f), dtype=float)
    return f - f.mean()


@dataclass
class ObservableVector:
    """Function on the state space, indexed by rank.

    ``mean_zero=True`` asserts that the flat mean vanishes (within
    ``MEAN_ZERO_TOL``); constructors that center explicitly set it.
    """

    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.mean_zero:
            m = abs(float(self.values.mean())) if self.values.size else 0.0
            scale = max(1.0, float(np.max(np.abs(self.values), initial=0.0)))
            if m > MEAN_ZERO_TOL * scale:
                raise NotMeanZeroError(f"mean {m:.3e} exceeds {MEAN_ZERO_TOL}")

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)


class SparseOperator:
    """Generator matrix: positive off-diagonal rates, diagonal = -row sum."""

    def __init__(self, size, offdiag):
        off = sp.csr_matrix(offdiag, shape=(size, size), copy=True)
        off.sum_duplicates()
        off.eliminate_zeros()
        if off.nnz and off.data.min() < 0.0:
            raise ValueError("off-diagonal rates must be nonnegative")
        if off.diagonal().any():
            raise ValueError("off-diagonal storage must not carry diagonal entries")
        off.sort_indices()
        self.size = size
        self._off = off
        self.diag = -np.asarray(off.sum(axis=1)).ravel()

    @property
    def nnz(self):
        """Stored entries including the implied diagonal."""
        return self._off.nnz + self.size

    @property
    def offdiag(self):
        return self._off

    def matvec(self, f):
        f = np.asarray(getattr(f, "values", f), dtype=float)
        return self._off @ f + self.diag * f

    def to_csr(self):
        """Full matrix including the diagonal."""
        return (self._off + sp.diags(self.diag, format="csr")).tocsr()

    def to_dense(self):
        a = self._off.toarray()
        a[np.diag_indices_from(a)] += self.diag
        return a

    def rows(self):
        """Yield (row, target indices, rates) over off-diagonal entries."""
        off = self._off
        for i in range(self.size):
            lo, hi = off.indptr[i], off.indptr[i + 1]
            yield i, off.indices[lo:hi], off.data[lo:hi]

    def max_exit_rate(self):
        return float(np.max(-self.diag, initial=0.0))

    def is_symmetric(self, tol=1e-13):
        d = self._off - self._off.T
        scale = max(1.0, self.max_exit_rate())
        return (abs(d).max() if d.nnz else 0.0) <= tol * scale

    def __add__(self, other):
        if self.size != other.size:
            raise ValueError("operator sizes differ")
        return SparseOperator(self.size, self._off + other._off)

    def __repr__(self):
        return f"SparseOperator(size={self.size}, nnz={self.nnz})"


def _check_caps(n_states, n_entries, max_states, max_nnz):
    if n_states > max_states:
        raise SizeCapError(f"{n_states} states exceed cap {max_states}")
    if n_entries > max_nnz:
        raise SizeCapError(f"{n_entries} nonzeros exceed cap {max_nnz}")


def _env_targets(space, kernel):
    """env_targets[zi][i]: env index of site_i + z_zi, or -1 if the origin."""
    geo = space.geometry
    table = []
    for z, _ in kernel.entries:
        row = np.empty(space.M, dtype=np.int64)
        for i, site in enumerate(geo.env_sites):
            t = geo.wrap(tuple(a + b for a, b in zip(site, z)))
            row[i] = -1 if t == geo.origin else geo.env_index(t)
        table.append(row)
    return table


def _shift_perms(space, kernel):
    """For each kernel entry z: target env index of wrap(z), and the
    permutation mapping occupied index i to the index of wrap(site_i - z)
    (-1 on the jump target itself, which is vacant on valid input)."""
    geo = space.geometry
    out = []
    for z, _ in kernel.entries:
        target = geo.wrap(z)
        ti = geo.env_index(target)        # never the origin when 2N > 2R
        perm = np.empty(space.M, dtype=np.int64)
        for i, site in enumerate(geo.env_sites):
            moved = geo.wrap(tuple(a - b for a, b in zip(site, target)))
            perm[i] = -1 if moved == geo.origin else geo.env_index(moved)
        out.append((ti, perm))
    return out


def assemble_environment(space, kernel, max_states=DEFAULT_MAX_STATES,
                         max_nnz=DEFAULT_MAX_NNZ):
    """Generator of the environment exchanges around the pinned origin.

    For each state and each occupied site x with p(z) > 0, the particle may
    move to y = wrap(x + z) when y is a vacant environment site (never the
    origin). Transitions landing on the same target accumulate.
    """
    space.geometry.require_kernel_fits(kernel)
    _check_caps(space.size, 0, max_states, max_nnz)
    probs = [p for _, p in kernel.entries]
    targets = _env_targets(space, kernel)
    rows, cols, vals = [], [], []
    for r, bits in enumerate(space.bitmasks()):
        for i in _iter_bits(bits):
            for zi, p in enumerate(probs):
                t = targets[zi][i]
                if t < 0 or (bits >> t) & 1:
                    continue
                rows.append(r)
                cols.append(space.rank_bits(bits ^ (1 << i) | (1 << int(t))))
                vals.append(p)
        _check_caps(space.size, len(vals), max_states, max_nnz)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(space.size, space.size))
    return SparseOperator(space.size, off)


def assemble_tagged(space, kernel, max_states=DEFAULT_MAX_STATES,
                    max_nnz=DEFAULT_MAX_NNZ):
    """Generator of the tagged-particle jumps (environment re-centering).

    A jump by z is enabled when wrap(z) is vacant; the state moves to the
    shifted configuration. Jumps that map a state to itself contribute
    nothing to the generator and are dropped.
    """
    space.geometry.require_kernel_fits(kernel)
    _check_caps(space.size, 0, max_states, max_nnz)
    shifts = _shift_perms(space, kernel)
    probs = [p for _, p in kernel.entries]
    rows, cols, vals = [], [], []
    for r, bits in enumerate(space.bitmasks()):
        for zi, p in enumerate(probs):
            ti, perm = shifts[zi]
            if (bits >> ti) & 1:
                continue
            new_bits = 0
            for i in _iter_bits(bits):
                new_bits |= 1 << int(perm[i])
            if new_bits == bits:
                continue
            rows.append(r)
            cols.append(space.rank_bits(new_bits))
            vals.append(p)
        _check_caps(space.size, len(vals), max_states, max_nnz)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(space.size, space.size))
    return SparseOperator(space.size, off)


def full_generator(space, kernel, max_states=DEFAULT_MAX_STATES,
                   max_nnz=DEFAULT_MAX_NNZ):
    """Environment part plus tagged part."""
    env = assemble_environment(space, kernel, max_states, max_nnz)
    tag = assemble_tagged(space, kernel, max_states, max_nnz)
    return env + tag


def adjoint(op):
    """Adjoint under the uniform measure, in generator form.

    The off-diagonal pattern is transposed and the diagonal recomputed as
    the negative row sum. For measure-preserving operators this is the
    plain matrix transpose.
    """
    return SparseOperator(op.size, op.offdiag.T.tocsr())


def symmetric_part(op):
    """(op + adjoint(op)) / 2; equals assembly from the symmetrized kernel."""
    return SparseOperator(op.size, 0.5 * (op.offdiag + op.offdiag.T))


def dirichlet_form(op, f):
    """Quadratic form <f, -op f> under the uniform measure."""
    f = np.asarray(getattr(f, "values", f), dtype=float)
    return -inner(f, op.matvec(f))


def check_stationarity(op, tol=1e-10):
    """Verify the uniform measure is invariant: column sums of the full
    matrix vanish within tol * (max row exit rate)."""
    colsums = np.asarray(op.offdiag.sum(axis=0)).ravel() + op.diag
    scale = max(op.max_exit_rate(), 1e-300)
    worst = float(np.max(np.abs(colsums), initial=0.0))
    if worst > tol * scale:
        raise NotStationaryError(
            f"max |column sum| = {worst:.3e} exceeds {tol:.1e} * {scale:.3e}"
        )


def check_ergodicity(op):
    """Verify the transition graph is connected (weak connectivity)."""
    if op.size <= 1:
        return
    n, _ = connected_components(op.offdiag, directed=False)
    if n != 1:
        raise NotConnectedError(
            f"transition graph splits into {n} components", n_components=n
        )


def write_operator(op, path):
    """Dump the full matrix as text: header, then 1-based `row col rate`
    triples with 17 significant digits (diagonal included)."""
    full = op.to_csr()
    full.sort_indices()
    coo = full.tocoo()
    with open(path, "w", newline="\n") as fh:
        fh.write(f"%%sparse-generator {op.size} {op.size} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")

"""Self-diffusion of the tagged particle, computed exactly via linear algebra.

The quadratic form in a direction a splits into a free-walk term
(1 - density) * sum_z (a.z)^2 p(z) and a correction involving one linear
solve against the full generator: with v_a, w_a the centered local drift
observables, the correction inner product is 2 <w_a, (-L)^{-1} v_a>. The
overall sign convention of the correction is configurable; the default is
the one validated by the Monte Carlo arbiter and the symmetric-kernel
upper bound.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BlockTooLargeError,
    NonPositiveDError,
    OutOfRangeError,
    SupportTooLargeError,
)
from .generator import (
    ObservableVector,
    assemble_environment,
    center,
    full_generator,
    inner,
)
from .kernel import TorusGeometry, symmetrize
from .sobolev import solve_general
from .statespace import StateSpace

#: correction sign validated by arbitrate_sign on the calibration systems
DEFAULT_CORRECTION_SIGN = -1

#: largest block (site count) that conditional_expectation will enumerate
MAX_BLOCK_SITES = 24


@dataclass
class DirectionResult:
    a: np.ndarray
    free_term: float
    correction: float          # signed term actually added: D = free + correction
    D: float
    D_plus: float              # value under sign = +1
    D_minus: float             # value under sign = -1
    residual: float
    iterations: int
    method: str


@dataclass
class DiffusionReport:
    dimension: int
    N: int
    K: int
    alpha: float
    sign: int
    solver_tolerance: float
    directions: list = field(default_factory=list)
    matrix: np.ndarray | None = None
    min_eigenvalue: float | None = None
    wall_time_s: float = 0.0


@dataclass
class SweepReport:
    alpha: float
    N_list: list
    reports: list                  # DiffusionReport per N
    diffs: list                    # max-abs successive matrix differences
    verdict: str                   # "plateau" | "no-plateau" | "insufficient"
    rtol: float


@dataclass
class MultiscaleReport:
    scales: list
    increment_variances: list      # <(g_n - g_{n-1})^2>, n = 1..n_max
    second_moments: list           # <g_n^2> per scale
    fitted_exponent: float | None


@dataclass
class ConvergenceReport:
    N_list: list
    K_list: list
    values: list
    diffs: list


def free_term(kernel, a, alpha):
    """(1 - alpha) * sum_z (a . z)^2 p(z)."""
    a = np.asarray(a, dtype=float)
    s = math.fsum(p * float(np.dot(a, z)) ** 2 for z, p in kernel.entries)
    return (1.0 - alpha) * s


def local_drift_functions(space, kernel, a, alpha=None):
    """Centered drift observables (v_a, w_a) on the state space.

    v_a reads the occupancy at the jump targets z, w_a at the mirrored
    sites -z:  v_a = sum_z (z.a) p(z) (alpha - eta(z)). The alpha offset
    drops out after centering, so any alpha gives the same vectors; the
    canonical density is used by default.
    """
    geo = space.geometry
    geo.require_kernel_fits(kernel)
    a = np.asarray(a, dtype=float)
    if alpha is None:
        alpha = space.alpha
    coef = [float(np.dot(a, z)) * p for z, p in kernel.entries]
    idx_v = [geo.env_index(z) for z, _ in kernel.entries]
    idx_w = [geo.env_index(tuple(-c for c in z)) for z, _ in kernel.entries]
    occ_v = space.site_occupancy(idx_v).astype(float)
    occ_w = space.site_occupancy(idx_w).astype(float)
    v = np.zeros(space.size)
    w = np.zeros(space.size)
    for j, c in enumerate(coef):
        v += c * (alpha - occ_v[:, j])
        w += c * (alpha - occ_w[:, j])
    return (ObservableVector(center(v), mean_zero=True),
            ObservableVector(center(w), mean_zero=True))


def _direction_result(space, kernel, a, op, sign, tol, method):
    a = np.asarray(a, dtype=float)
    free = free_term(kernel, a, space.alpha)
    if space.size == 1:
        return DirectionResult(a, free, 0.0, free, free, free, 0.0, 0,
                               "degenerate")
    v, w = local_drift_functions(space, kernel, a)
    rep = solve_general(op, v.values, tol=tol, method=method)
    raw = 2.0 * inner(w.values, rep.solution.values)
    d_plus = free - raw
    d_minus = free + raw
    d_val = free - sign * raw
    if d_val < -1e-9 * max(1.0, abs(free)):
        raise NonPositiveDError(
            f"a^t D a = {d_val!r} < 0 along a = {a.tolist()} "
            f"(sign convention {sign:+d})"
        )
    return DirectionResult(a, free, -sign * raw, d_val, d_plus, d_minus,
                           rep.relative_residual, rep.iterations, rep.method)


def compute_D(space, kernel, a, sign=None, tol=1e-10, method="auto",
              operator=None):
    """Diffusion form a^t D a for one direction.

    Returns a DiffusionReport with a single DirectionResult; both sign
    conventions are always recorded.
    """
    sign = _check_sign(sign)
    t0 = time.perf_counter()
    op = operator
    if op is None and space.size > 1:
        op = full_generator(space, kernel)
    res = _direction_result(space, kernel, a, op, sign, tol, method)
    return DiffusionReport(
        dimension=space.geometry.dimension,
        N=space.geometry.N,
        K=space.K,
        alpha=space.alpha,
        sign=sign,
        solver_tolerance=tol,
        directions=[res],
        wall_time_s=time.perf_counter() - t0,
    )


def compute_D_matrix(space, kernel, sign=None, tol=1e-10, method="auto",
                     operator=None):
    """Full d x d diffusion matrix via polarization.

    Evaluates the form on the coordinate directions and their pairwise
    sums; off-diagonals come from D_ij = (Q(e_i + e_j) - Q_ii - Q_jj) / 2.
    The result must be positive semidefinite within 1e-9.
    """
    sign = _check_sign(sign)
    t0 = time.perf_counter()
    d = space.geometry.dimension
    op = operator
    if op is None and space.size > 1:
        op = full_generator(space, kernel)
    eye = np.eye(d)
    directions = [eye[i] for i in range(d)]
    pairs = list(itertools.combinations(range(d), 2))
    directions += [eye[i] + eye[j] for i, j in pairs]
    results = [_direction_result(space, kernel, a, op, sign, tol, method)
               for a in directions]
    mat = np.zeros((d, d))
    for i in range(d):
        mat[i, i] = results[i].D
    for idx, (i, j) in enumerate(pairs):
        off = 0.5 * (results[d + idx].D - mat[i, i] - mat[j, j])
        mat[i, j] = mat[j, i] = off
    evals = np.linalg.eigvalsh(mat)
    if evals[0] < -1e-9 * max(1.0, float(np.trace(mat))):
        raise NonPositiveDError(
            f"D matrix has eigenvalue {evals[0]!r} < 0 "
            f"(sign convention {sign:+d})"
        )
    return DiffusionReport(
        dimension=d,
        N=space.geometry.N,
        K=space.K,
        alpha=space.alpha,
        sign=sign,
        solver_tolerance=tol,
        directions=results,
        matrix=mat,
        min_eigenvalue=float(evals[0]),
        wall_time_s=time.perf_counter() - t0,
    )


def _check_sign(sign):
    if sign is None:
        return DEFAULT_CORRECTION_SIGN
    if sign not in (+1, -1):
        raise OutOfRangeError(f"correction sign must be +1 or -1, got {sign}")
    return int(sign)


def choose_K(alpha, geometry):
    """Particle count closest to alpha * (2N)^d, clamped to [1, (2N)^d].

    Rounding is half-away-from-zero so the choice does not depend on the
    platform's banker's rounding.
    """
    if not 0.0 <= alpha <= 1.0:
        raise OutOfRangeError(f"density must lie in [0, 1], got {alpha}")
    k = int(math.floor(alpha * geometry.n_sites + 0.5))
    return min(max(k, 1), geometry.n_sites)


def sweep(kernel, alpha, N_list, sign=None, rtol=0.05, tol=1e-10,
          method="auto"):
    """Diffusion matrices along increasing N at (approximately) fixed
    density; flags a plateau when the last successive change is below
    rtol relative to the final matrix scale."""
    if len(N_list) < 1:
        raise OutOfRangeError("sweep needs at least one N")
    reports = []
    for N in N_list:
        geo = TorusGeometry(kernel.dimension, N)
        geo.require_kernel_fits(kernel)
        space = StateSpace(geo, choose_K(alpha, geo))
        reports.append(compute_D_matrix(space, kernel, sign=sign, tol=tol,
                                        method=method))
    diffs = []
    for prev, cur in zip(reports, reports[1:]):
        diffs.append(float(np.max(np.abs(cur.matrix - prev.matrix))))
    if len(reports) < 2:
        verdict = "insufficient"
    else:
        scale = max(float(np.max(np.abs(reports[-1].matrix))), 1e-300)
        verdict = "plateau" if diffs[-1] <= rtol * scale else "no-plateau"
    return SweepReport(alpha, list(N_list), reports, diffs, verdict, rtol)


# -- block averaging ---------------------------------------------------------

def block_env_indices(geometry, l):
    """Environment-site indices of the block {-l+1, ..., l}^d minus origin."""
    if l < 1:
        raise OutOfRangeError(f"block scale must be >= 1, got {l}")
    if l > geometry.N:
        raise SupportTooLargeError(
            f"block of scale {l} does not fit a torus with N = {geometry.N}"
        )
    rng = range(-l + 1, l + 1)
    sites = [s for s in itertools.product(rng, repeat=geometry.dimension)
             if s != geometry.origin]
    return [geometry.env_index(s) for s in sites]


def conditional_expectation(space, v, l):
    """Project an observable supported on the block of scale l onto the
    particle count inside that block.

    Under the exchangeable canonical measure, conditioning on the count j
    and the outside configuration makes the inside arrangement uniform,
    so the projection is the plain average of v over all C(m, j)
    arrangements, evaluated by exact enumeration. The caller promises
    supp(v) lies inside the block; arrangement values are then read off at
    a canonical completion (leftover particles parked on the first sites
    outside the block).
    """
    vvals = np.asarray(getattr(v, "values", v), dtype=float)
    inside = block_env_indices(space.geometry, l)
    m_in = len(inside)
    if m_in > MAX_BLOCK_SITES:
        raise SupportTooLargeError(
            f"block has {m_in} sites, cap is {MAX_BLOCK_SITES}"
        )
    inside_mask = 0
    for i in inside:
        inside_mask |= 1 << i
    outside = [i for i in range(space.M) if not (inside_mask >> i) & 1]
    k = space.k
    avg = {}
    for j in range(0, min(k, m_in) + 1):
        rem = k - j
        if rem > len(outside):
            continue
        filler = 0
        for i in outside[:rem]:
            filler |= 1 << i
        total = 0.0
        n_arr = math.comb(m_in, j)
        for combo in itertools.combinations(inside, j):
            bits = filler
            for i in combo:
                bits |= 1 << i
            total += vvals[space.rank_bits(bits)]
        avg[j] = total / n_arr
    counts = space.inside_counts(inside_mask)
    out = np.array([avg[int(c)] for c in counts])
    return ObservableVector(out)


def multiscale_diagnostic(space, v, l, q, n_max):
    """Variance of block-average increments across dyadic-like scales.

    Computes g_n, the conditional expectation of v at scale l * q^n, and
    reports <(g_n - g_{n-1})^2> for n = 1..n_max together with <g_n^2>
    and a log-log slope fitted to the increment variances.
    """
    if q < 2:
        raise OutOfRangeError(f"scale factor must be >= 2, got {q}")
    if n_max < 1:
        raise OutOfRangeError(f"n_max must be >= 1, got {n_max}")
    scales = [l * q ** n for n in range(n_max + 1)]
    if scales[-1] > space.geometry.N:
        raise BlockTooLargeError(
            f"scale {scales[-1]} does not fit a torus with N = "
            f"{space.geometry.N}"
        )
    gs = [conditional_expectation(space, v, s).values for s in scales]
    second = [inner(g, g) for g in gs]
    incr = [inner(gs[n] - gs[n - 1], gs[n] - gs[n - 1])
            for n in range(1, n_max + 1)]
    exponent = None
    if n_max >= 2 and all(x > 0.0 for x in incr):
        logs = np.log(np.asarray(scales[1:], dtype=float))
        exponent = float(np.polyfit(logs, np.log(incr), 1)[0])
    return MultiscaleReport(scales, incr, second, exponent)


# -- observables and per-N diagnostics ---------------------------------------

def occupancy_observable(space, site):
    """eta(site) - alpha, centered exactly."""
    idx = space.geometry.env_index(site)
    occ = space.site_occupancy([idx]).astype(float)[:, 0]
    return ObservableVector(center(occ), mean_zero=True)


def occupancy_difference_observable(space, site_a, site_b):
    """eta(a) - eta(b); mean-zero by exchangeability."""
    ia = space.geometry.env_index(site_a)
    ib = space.geometry.env_index(site_b)
    occ = space.site_occupancy([ia, ib]).astype(float)
    return ObservableVector(center(occ[:, 0] - occ[:, 1]), mean_zero=True)


def hminus1_convergence_diagnostic(kernel, alpha, recipe, N_list, tol=1e-10):
    """Dual norm of a centered observable against the symmetrized
    environment generator, tracked along increasing N at fixed density.

    ``recipe`` maps a StateSpace to the observable for that torus.
    """
    from .generator import check_ergodicity
    from .sobolev import hminus1_norm

    sym_kernel = symmetrize(kernel)
    values, Ks = [], []
    for N in N_list:
        geo = TorusGeometry(kernel.dimension, N)
        geo.require_kernel_fits(kernel)
        K = choose_K(alpha, geo)
        space = StateSpace(geo, K)
        vbar = center(recipe(space))
        if space.size == 1 or not np.any(vbar):
            values.append(0.0)
        else:
            s0 = assemble_environment(space, sym_kernel)
            check_ergodicity(s0)
            values.append(hminus1_norm(s0, vbar, tol=tol))
        Ks.append(K)
    diffs = [abs(b - a) for a, b in zip(values, values[1:])]
    return ConvergenceReport(list(N_list), Ks, values, diffs)


def approximation_residual_diagnostic(kernel, alpha, recipe, N_list,
                                      basis_scale=1, tol=1e-10):
    """Residual of the best local approximation h ~ (-L) g along N.

    For each N the target h = recipe(space) is approximated over the span
    of centered single-site occupancies on the block of scale
    ``basis_scale``; the fit residual is measured in the dual norm of the
    symmetrized environment generator.
    """
    from .sobolev import approximation_residual

    sym_kernel = symmetrize(kernel)
    values, Ks = [], []
    for N in N_list:
        geo = TorusGeometry(kernel.dimension, N)
        geo.require_kernel_fits(kernel)
        K = choose_K(alpha, geo)
        space = StateSpace(geo, K)
        h = center(recipe(space))
        if space.size == 1 or not np.any(h):
            values.append(0.0)
            Ks.append(K)
            continue
        op = full_generator(space, kernel)
        s0 = assemble_environment(space, sym_kernel)
        basis = [occupancy_observable(space, space.geometry.env_sites[i]).values
                 for i in block_env_indices(space.geometry, basis_scale)]
        resid, _ = approximation_residual(op, h, basis, weight_op=s0, tol=tol)
        values.append(resid)
        Ks.append(K)
    diffs = [abs(b - a) for a, b in zip(values, values[1:])]
    return ConvergenceReport(list(N_list), Ks, values, diffs)

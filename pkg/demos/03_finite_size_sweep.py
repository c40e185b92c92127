"""Finite-size behaviour of the tagged-particle diffusion coefficient.

Fixing the density at alpha = 1/2 and growing the torus, D decreases
monotonically: a larger torus gives the environment more room to obstruct
the walker, and the successive differences shrink as the values head
toward a thermodynamic limit.  In 2d the nearest-neighbour kernel is
invariant under the lattice rotations, so the D matrix must be a multiple
of the identity on every finite torus.
"""

from sepdiff import StateSpace, TorusGeometry, build_kernel, compute_D_matrix, sweep

nn1 = build_kernel(1, [((1,), "1/2"), ((-1,), "1/2")])

rep = sweep(nn1, 0.5, [2, 3, 4, 5], tol=1e-11)
print("1d symmetric nn, alpha = 1/2")
print(f"{'side':>6s} {'K':>4s} {'D':>18s} {'diff from previous':>20s}")
prev = None
for r in rep.reports:
    d = r.directions[0].D
    diff = "" if prev is None else f"{prev - d:20.12f}"
    print(f"{2 * r.N:6d} {r.K:4d} {d:18.12f} {diff:>20s}")
    prev = d
print(f"verdict at rtol {rep.rtol}: {rep.verdict}")

# 2d isotropy: the kernel respects the square-lattice symmetries, so no
# direction is special and off-diagonal terms must vanish.
nn2 = build_kernel(2, [((1, 0), 0.25), ((-1, 0), 0.25),
                       ((0, 1), 0.25), ((0, -1), 0.25)])
print("\n2d nearest neighbour, torus 4x4, K = 4")
mat = compute_D_matrix(StateSpace(TorusGeometry(2, 2), 4), nn2).matrix
for row in mat:
    print("   ", "  ".join(f"{x:+.12f}" for x in row))
assert abs(mat[0, 0] - mat[1, 1]) < 1e-10
assert abs(mat[0, 1]) < 1e-10 and abs(mat[1, 0]) < 1e-10
print("isotropic to 1e-10")

"""Monopole gravity: moments, opening-angle walk, direct-sum oracle."""

import numpy as np
import pytest

from octask.amr import gravity
from octask.amr.grid import SubGrid
from octask.amr.tree import N, TreeStructure, children_of
from octask.spaces import Serial, TaskPoolSpace


def _random_tree(rng, refine_octants=3):
    lvl1 = children_of((0, 0, 0, 0))
    leaves = list(lvl1[refine_octants:])
    for k in lvl1[:refine_octants]:
        leaves.extend(children_of(k))
    st = TreeStructure(2.0, leaves)
    rho = {k: rng.uniform(0.1, 1.0, (N, N, N)) for k in st.leaves}
    return st, rho


def test_moments_match_cell_sums(rng):
    st, rho = _random_tree(rng)
    flat = gravity.build_flat_tree(st, rho.__getitem__)
    assert flat.mass[0] == pytest.approx(flat.cmass.sum(), rel=1e-13)
    # parent mass equals the sum of child masses at every level
    for i, key in enumerate(flat.node_keys):
        fc = flat.first_child[i]
        if fc < 0:
            continue
        kid_sum = sum(flat.mass[fc + c] for c in range(8))
        assert flat.mass[i] == pytest.approx(kid_sum, rel=1e-12)
        com = np.array([flat.comx[i], flat.comy[i], flat.comz[i]])
        weighted = sum(flat.mass[fc + c] * np.array([flat.comx[fc + c],
                                                     flat.comy[fc + c],
                                                     flat.comz[fc + c]])
                       for c in range(8)) / flat.mass[i]
        assert np.allclose(com, weighted, rtol=1e-12)


def test_point_mass_far_field_is_minus_one_over_r():
    st = TreeStructure(2.0, [(0, 0, 0, 0)])
    g = SubGrid((0, 0, 0, 0), st)
    h = g.cell_width
    g.rho[3, 4, 5] = 1.0 / h ** 3  # unit point mass at one cell center
    flat = gravity.build_flat_tree(st, lambda k: g.rho)
    src = np.array([g.x[3, 4, 5], g.y[3, 4, 5], g.z[3, 4, 5]])
    far = np.array([250.0, -180.0, 420.0])
    phi = gravity.walk_positions(flat, *(np.array([c]) for c in far), 0.5)
    expected = -1.0 / np.linalg.norm(far - src)
    assert abs(phi[0] - expected) < 1e-12


def test_theta_zero_matches_direct_sum_bit_near(rng):
    st, rho = _random_tree(rng, refine_octants=0)  # 8 leaves
    flat = gravity.build_flat_tree(st, rho.__getitem__)
    direct = gravity.direct_potential_all(flat)
    walked = np.empty_like(direct)
    for key in st.leaves:
        o = flat.leaf_offset[key]
        walked[o:o + N ** 3] = gravity.walk_positions(
            flat, flat.cx[o:o + N ** 3], flat.cy[o:o + N ** 3],
            flat.cz[o:o + N ** 3], 0.0, o)
    rel = np.max(np.abs(walked - direct) / np.abs(direct))
    assert rel <= 1e-12


def test_opening_angle_error_small_and_monotone(rng):
    st, rho = _random_tree(rng)
    flat = gravity.build_flat_tree(st, rho.__getitem__)
    direct = gravity.direct_potential_all(flat)
    errs = []
    for theta in (0.8, 0.5, 0.25, 0.0):
        walked = np.empty_like(direct)
        for key in st.leaves:
            o = flat.leaf_offset[key]
            walked[o:o + N ** 3] = gravity.walk_positions(
                flat, flat.cx[o:o + N ** 3], flat.cy[o:o + N ** 3],
                flat.cz[o:o + N ** 3], theta, o)
        errs.append(np.max(np.abs(walked - direct) / np.abs(direct)))
    assert errs[1] < 0.01
    assert errs[0] > errs[1] > errs[2] > errs[3]


def test_solve_leaf_ghost_potential_matches_neighbor_interior(rng):
    st = TreeStructure(2.0, children_of((0, 0, 0, 0)))
    grids = {k: SubGrid(k, st) for k in st.leaves}
    for g in grids.values():
        g.rho[:] = rng.uniform(0.1, 1.0, (N, N, N))
    flat = gravity.build_flat_tree(st, lambda k: grids[k].rho)
    for g in grids.values():
        gravity.solve_leaf(flat, st, g, 0.5)
    left = grids[(1, 0, 0, 0)]
    right = grids[(1, 1, 0, 0)]
    # the +x ghost plane of the left leaf is the -x interior plane of the
    # right leaf: identical positions walk to identical values
    assert (left.phi_e[N + 1, 1:N + 1, 1:N + 1] == right.phi[0]).all()
    # reflecting wall: even extension of the interior potential
    assert (left.phi_e[0, 1:N + 1, 1:N + 1] == left.phi[0]).all()
    # interior copy in place
    assert (left.phi_e[1:N + 1, 1:N + 1, 1:N + 1] == left.phi).all()


def test_solve_leaf_execspace_split_is_bitwise_identical(rng, pool2):
    st, rho = _random_tree(rng, refine_octants=1)
    grids = {k: SubGrid(k, st) for k in st.leaves}
    for k, g in grids.items():
        g.rho[:] = rho[k]
    flat = gravity.build_flat_tree(st, rho.__getitem__)
    key = st.leaves[0]
    a = SubGrid(key, st)
    a.rho[:] = rho[key]
    b = SubGrid(key, st)
    b.rho[:] = rho[key]
    gravity.solve_leaf(flat, st, a, 0.5)
    gravity.solve_leaf(flat, st, b, 0.5, space=TaskPoolSpace(3, pool2))
    assert (a.phi == b.phi).all()
    assert (a.phi_e == b.phi_e).all()
    c = SubGrid(key, st)
    c.rho[:] = rho[key]
    gravity.solve_leaf(flat, st, c, 0.5, space=Serial())
    assert (a.phi == c.phi).all()


def test_negative_theta_rejected(rng):
    st, rho = _random_tree(rng, refine_octants=0)
    flat = gravity.build_flat_tree(st, rho.__getitem__)
    g = SubGrid(st.leaves[0], st)
    with pytest.raises(ValueError):
        gravity.solve_leaf(flat, st, g, -1.0)


def test_zero_density_tree_is_all_zero_potential():
    st = TreeStructure(2.0, children_of((0, 0, 0, 0)))
    zeros = {k: np.zeros((N, N, N)) for k in st.leaves}
    flat = gravity.build_flat_tree(st, zeros.__getitem__)
    g = SubGrid(st.leaves[0], st)
    gravity.solve_leaf(flat, st, g, 0.5)
    assert (g.phi == 0.0).all()

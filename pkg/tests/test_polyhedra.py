"""Geometry engine tests: membership, active sets, projection, cone decomposition."""

import numpy as np
import pytest

from sweepctrl.polyhedra import (
    ConeDecomposition,
    Polyhedron,
    active_set,
    check_licq,
    contains,
    decompose_normal,
    project,
)


def halfspace_projection_oracle(a, c, y):
    """KKT oracle for a single halfspace {x : <a,x> <= c}: x = y - max(0, <a,y>-c)/||a||^2 * a."""
    a = np.asarray(a, float)
    y = np.asarray(y, float)
    viol = a @ y - c
    if viol <= 0.0:
        return y
    return y - (viol / (a @ a)) * a


def pedestrian_set(n=2, R=3.0):
    """Order-gap halfspaces x^j - x^{j+1} <= -2R."""
    rows = np.zeros((n - 1, n))
    for j in range(n - 1):
        rows[j, j] = 1.0
        rows[j, j + 1] = -1.0
    return Polyhedron(rows, np.full(n - 1, -2.0 * R))


def robot_set(n=2, R=6.0):
    """Paired-sum halfspaces in R^{2n}: (+1,+1) on agent j, (-1,-1) on agent j+1."""
    rows = np.zeros((n - 1, 2 * n))
    for j in range(n - 1):
        rows[j, 2 * j : 2 * j + 2] = 1.0
        rows[j, 2 * j + 2 : 2 * j + 4] = -1.0
    return Polyhedron(rows, np.full(n - 1, -2.0 * R))


class TestContains:
    def test_two_agent_start_point(self):
        C = pedestrian_set()
        assert contains(C, np.array([-60.0, -48.0]), 1e-9)

    def test_origin_violates_gap(self):
        C = pedestrian_set()
        assert not contains(C, np.array([0.0, 0.0]), 1e-9)

    def test_boundary_point_counts_as_inside(self):
        C = pedestrian_set()
        # <(1,-1), (-3,3)> = -6 exactly.
        assert contains(C, np.array([-3.0, 3.0]), 1e-9)

    def test_dimension_mismatch(self):
        C = pedestrian_set()
        with pytest.raises(ValueError):
            contains(C, np.array([1.0, 2.0, 3.0]))


class TestActiveSet:
    def test_single_active_row(self):
        C = pedestrian_set()
        assert active_set(C, np.array([-3.0, 3.0]), 1e-9).tolist() == [0]

    def test_interior_empty(self):
        C = pedestrian_set()
        assert active_set(C, np.array([-60.0, -48.0]), 1e-9).size == 0

    def test_both_rows_active_three_agents(self):
        # Both paired sums exactly -12: gaps of 6 per coordinate.
        C = robot_set(n=3, R=6.0)
        x = np.array([0.0, 0.0, 6.0, 6.0, 12.0, 12.0])
        assert active_set(C, x, 1e-9).tolist() == [0, 1]

    def test_outside_point_rejected(self):
        C = pedestrian_set()
        with pytest.raises(ValueError, match="outside"):
            active_set(C, np.array([0.0, 0.0]), 1e-9)


class TestProject:
    def test_interior_fixed_point(self):
        C = pedestrian_set()
        y = np.array([-60.0, -48.0])
        assert np.allclose(project(C, y), y)

    def test_scalar_halfspace_clamp(self):
        P = Polyhedron(np.array([[1.0]]), np.array([1.0]))
        assert project(P, np.array([3.0])) == pytest.approx(1.0)

    def test_single_row_matches_kkt_oracle(self):
        C = pedestrian_set()
        y = np.array([-10.0, -10.0])
        expected = halfspace_projection_oracle([1.0, -1.0], -6.0, y)
        assert np.allclose(expected, [-13.0, -7.0])
        assert np.allclose(project(C, y), expected, atol=1e-12)


class TestDecomposeNormal:
    def test_zero_vector(self):
        C = pedestrian_set()
        dec = decompose_normal(C, np.array([-3.0, 3.0]), np.zeros(2))
        assert dec.residual == pytest.approx(0.0, abs=1e-12)
        assert all(abs(v) < 1e-12 for v in dec.coefficients.values())

    def test_recovers_contact_multiplier(self):
        C = pedestrian_set()
        v = 5.4 * np.array([1.0, -1.0])
        dec = decompose_normal(C, np.array([-3.0, 3.0]), v)
        assert dec.coefficients[0] == pytest.approx(5.4, abs=1e-12)
        assert dec.residual == pytest.approx(0.0, abs=1e-12)

    def test_interior_reports_full_residual(self):
        C = pedestrian_set()
        v = np.array([2.0, 1.0])
        dec = decompose_normal(C, np.array([-60.0, -48.0]), v)
        assert dec.coefficients == {}
        assert dec.residual == pytest.approx(np.linalg.norm(v))


class TestLicq:
    def test_empty_active_set(self):
        C = pedestrian_set()
        assert check_licq(C, np.array([-60.0, -48.0]))

    def test_independent_rows(self):
        C = pedestrian_set(n=3)
        x = np.array([-12.0, -6.0, 0.0])  # both gaps exactly 6
        assert check_licq(C, x)

    def test_duplicated_normal_fails(self):
        P = Polyhedron(np.array([[1.0, -1.0], [1.0, -1.0]]), np.array([-6.0, -6.0]))
        assert not check_licq(P, np.array([-3.0, 3.0]))


def random_instance(rng, max_dim=8, max_rows=7):
    """Random nonempty polyhedron with 0 strictly inside, plus a sampler for interior points."""
    n = int(rng.integers(2, max_dim + 1))
    s = int(rng.integers(1, max_rows + 1))
    A = rng.standard_normal((s, n))
    c = np.abs(rng.standard_normal(s)) + 0.1
    poly = Polyhedron(A, c)

    def sample_inside():
        d = rng.standard_normal(n)
        Ad = A @ d
        pos = Ad > 1e-12
        tmax = np.min(c[pos] / Ad[pos]) if np.any(pos) else 10.0
        return float(rng.uniform(0.0, 0.99)) * min(tmax, 10.0) * d

    return poly, sample_inside


class TestProjectionProperties:
    TOL = 1e-9

    def test_idempotence_feasibility_and_vi(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            poly, sample_inside = random_instance(rng)
            y = rng.standard_normal(poly.dim) * 5.0
            x = project(poly, y, self.TOL)
            assert contains(poly, x, 10 * self.TOL)
            x2 = project(poly, x, self.TOL)
            assert np.linalg.norm(x2 - x) <= 10 * self.TOL
            # Variational inequality against interior samples.
            for _ in range(20):
                z = sample_inside()
                assert (y - x) @ (z - x) <= self.TOL * max(1.0, np.linalg.norm(z - x))

    def test_nonexpansiveness(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            poly, _ = random_instance(rng)
            y1 = rng.standard_normal(poly.dim) * 5.0
            y2 = rng.standard_normal(poly.dim) * 5.0
            d = np.linalg.norm(project(poly, y1) - project(poly, y2))
            assert d <= np.linalg.norm(y1 - y2) + 10 * self.TOL

    def test_decomposition_recovers_random_cone_vectors(self):
        rng = np.random.default_rng(13)
        hits = 0
        while hits < 100:
            poly, _ = random_instance(rng)
            # Put a point on the face of row 0 and check LICQ there.
            a0 = poly.normals[0]
            x = poly.offsets[0] * a0 / (a0 @ a0)
            if not contains(poly, x, 1e-9):
                continue
            act = active_set(poly, x, 1e-9)
            if not check_licq(poly, x):
                continue
            eta = rng.uniform(0.0, 3.0, size=act.size)
            v = poly.normals[act].T @ eta
            dec = decompose_normal(poly, x, v)
            got = np.array([dec.coefficients.get(int(j), 0.0) for j in act])
            assert np.linalg.norm(got - eta) < 1e-8
            assert dec.residual < 1e-8
            hits += 1

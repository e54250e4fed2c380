"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines.
"""

import dataclasses
import time

import numpy as np
import pytest

from sweepctrl.models import bundled_scenario, verify_set_representation
from sweepctrl.optimality import StepFunction, verify_certificate
from sweepctrl.optimizer import solve_discrete, solve_reduced
from sweepctrl.polyhedra import Polyhedron, contains, project
from sweepctrl.sweeping import ControlSignal, Mesh, cost, recover_eta, simulate

SQRT2 = np.sqrt(2.0)


def _report(criterion: str, passed: bool) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'}", flush=True)


@pytest.fixture(scope="module")
def solutions():
    return {
        "robot2": solve_reduced(bundled_scenario("robot2.scn")),
        "ped2": solve_reduced(bundled_scenario("pedestrian2.scn")),
        "ped3": solve_reduced(bundled_scenario("pedestrian3.scn")),
    }


def test_criterion_1_robot_reduced_solution():
    ok = False
    try:
        t0 = time.perf_counter()
        sol = solve_reduced(bundled_scenario("robot2.scn"))
        runtime = time.perf_counter() - t0
        assert sol.control == pytest.approx([-3.37, -1.68], abs=0.01)
        assert sol.report["t1"] == pytest.approx(3.11, abs=0.01)
        assert sol.report["eta1"] == pytest.approx(2.97, abs=0.01)
        assert sol.cost == pytest.approx(36.0, abs=0.5)
        a, b, c = sol.reduced_cost
        assert a == pytest.approx(441.0, rel=0.005)
        assert b == pytest.approx(1484.92, rel=0.005)
        assert c == pytest.approx(1286.0, rel=0.005)
        assert runtime < 1.0
        ok = True
    finally:
        _report("1 (robot reduced solution)", ok)


def test_criterion_2_robot_certificate(solutions):
    ok = False
    try:
        sol = solutions["robot2"]
        rep = verify_certificate(sol.scenario, sol.path, sol.control, sol.certificate, tol=0.05)
        assert rep.passed
        assert np.allclose(sol.report["q"], [0.0, 1.59, 0.0, 2.38], atol=0.05)
        assert np.allclose(sol.report["p_T"], [-7.17, -7.17, 7.25, 7.25], atol=0.05)
        assert np.allclose(sol.report["gamma_from_contact"], [-7.17, -8.76, 7.25, 4.87], atol=0.05)
        ok = True
    finally:
        _report("2 (robot certificate verifies)", ok)


def test_criterion_3_two_pedestrians(solutions):
    ok = False
    try:
        sol = solutions["ped2"]
        assert sol.control[1] == 1.8  # closed form 3240/1800 exactly
        assert sol.report["t1"] == pytest.approx(0.5556, abs=1e-3)
        assert sol.report["eta_t1"] == pytest.approx(5.4, abs=1e-9)
        assert np.allclose(sol.report["q"], [0.225, 0.9], atol=1e-9)
        assert np.allclose(sol.report["p_T"], [-2.4, 2.4], atol=1e-9)
        assert np.allclose(sol.report["gamma_from_contact"], [-2.6, 1.5], atol=0.03)
        assert np.allclose(sol.report["terminal_state"], [-3.0, 3.0], atol=1e-6)
        ok = True
    finally:
        _report("3 (two-pedestrian reduced solution)", ok)


def test_criterion_4_three_pedestrians(solutions):
    ok = False
    try:
        sol = solutions["ped3"]
        assert np.allclose(sol.control, [2.0, 2.0, 2.0])
        schedule = dict((j, t) for t, j in sol.contact_schedule)
        assert schedule[0] == 0.6  # front pair, exactly
        assert schedule[1] == 0.0  # rear pair from the start
        assert np.allclose(
            sol.report["post_contact_slopes"], [28 / 3, 22 / 3, 34 / 3], atol=1e-9
        )
        assert np.allclose(sol.report["p_T"], [-20 / 3, 92 / 15, -262 / 15], atol=1e-9)
        assert np.allclose(sol.report["gamma"], [-23 / 3, -13 / 15, -457 / 15], atol=1e-9)
        assert len(sol.rejected_cases) == 1 and "s2*u2" in sol.rejected_cases[0]
        ok = True
    finally:
        _report("4 (three-pedestrian reduced solution)", ok)


def test_criterion_5_discrete_convergence(solutions):
    ok = False
    try:
        t0 = time.perf_counter()
        floor = 1e-9  # the worked scenarios are exactly integrable; see ledger
        for key, vmax in (("robot2", 10.2), ("ped2", 14.4), ("ped3", 16.0)):
            sol = solutions[key]
            scn = sol.scenario
            target = sol.simulation_path.terminal
            errors = []
            for m in (6, 8, 10, 12, 14):
                mesh = Mesh(scn.horizon, m)
                traj = simulate(scn, ControlSignal.constant(mesh, sol.control))
                err = float(np.linalg.norm(traj.terminal - target))
                assert err <= 5.0 * mesh.h * vmax, (key, m, err)
                errors.append(err)
            assert all(
                errors[i + 1] < max(errors[i], floor) for i in range(len(errors) - 1)
            ), (key, errors)
        # Direct search reaches the reduced optimum on the two scenarios whose
        # published control minimizes the cost.
        for key, budget in (("robot2", 400), ("ped2", 400)):
            sol = solutions[key]
            found = solve_discrete(sol.scenario, m=10, budget=budget)
            assert abs(found.cost - sol.cost) <= 0.02 * sol.cost, (key, found.cost)
        # The three-pedestrian control is extremal but not cost-minimizing
        # (ledger); check the discrete cost at the reference control instead.
        sol = solutions["ped3"]
        traj = simulate(sol.scenario, ControlSignal.constant(Mesh(6.0, 10), sol.control))
        assert abs(cost(traj) - sol.cost) <= 0.02 * sol.cost
        runtime = time.perf_counter() - t0
        assert runtime < 30.0
        ok = True
    finally:
        _report("5 (discrete convergence and direct search)", ok)


def test_criterion_6_property_suites():
    ok = False
    try:
        rng = np.random.default_rng(2024)
        tol = 1e-9
        # Projection properties over 10^4 random instances (n <= 8, s <= 7).
        for _ in range(10_000):
            n = int(rng.integers(2, 9))
            s = int(rng.integers(1, 8))
            A = rng.standard_normal((s, n))
            c = np.abs(rng.standard_normal(s)) + 0.1
            poly = Polyhedron(A, c)
            y = rng.standard_normal(n) * 5.0
            x = project(poly, y, tol)
            assert contains(poly, x, 10 * tol)
            assert np.linalg.norm(project(poly, x, tol) - x) <= 10 * tol
            y2 = rng.standard_normal(n) * 5.0
            x2 = project(poly, y2, tol)
            assert np.linalg.norm(x - x2) <= np.linalg.norm(y - y2) + 10 * tol
            # Variational inequality against 100 interior points.
            D = rng.standard_normal((100, n))
            AD = D @ A.T
            with np.errstate(divide="ignore"):
                steps = np.where(AD > 1e-12, c[None, :] / AD, np.inf)
            tmax = np.minimum(np.min(steps, axis=1), 10.0)
            Z = D * (rng.uniform(0.0, 0.99, size=100) * tmax)[:, None]
            vi = (Z - x) @ (y - x)
            assert np.max(vi) <= tol

        # Multiplier recovery on simulate-produced trajectories.
        cases = [
            ("robot2.scn", np.array([2.0, 1.0]) * (-25.0 * SQRT2 / 21.0)),
            ("pedestrian2.scn", np.array([1.8, 1.8])),
            ("pedestrian3.scn", np.array([2.0, 2.0, 2.0])),
        ]
        for name, u_const in cases:
            scn = bundled_scenario(name)
            u = ControlSignal.constant(Mesh(scn.horizon, 10), u_const)
            traj = simulate(scn, u)
            prof = recover_eta(scn, traj, u)
            assert prof.max_residual() < 1e-6, name
        scn = bundled_scenario("pedestrian3.scn")
        for _ in range(20):
            u_const = rng.uniform(-2.0, 2.0, size=3)
            u = ControlSignal.constant(Mesh(6.0, 9), u_const)
            traj = simulate(scn, u)
            prof = recover_eta(scn, traj, u)
            assert prof.max_residual() < 1e-6
            # Complementarity as a primal fact: eta vanishes off contact.
            for k in range(u.mesh.intervals):
                inactive = np.setdiff1d(np.arange(2), scn.contact_rows(traj.nodes[k + 1]))
                assert np.all(prof.values[k, inactive] == 0.0)

        # Sweeping-set representation agreement on 10^3 ordered samples.
        report = verify_set_representation(bundled_scenario("robot2.scn"), 1000, seed=7)
        assert report.disagreements == 0
        ok = True
    finally:
        _report("6 (property suites)", ok)


def _corruptions(cert):
    """All single-field 0.1 corruptions of a certificate."""
    out = [("lambda", dataclasses.replace(cert, lam=cert.lam + 0.1))]
    ev = cert.eta.values.copy()
    ev[-1, 0] += 0.1
    out.append(("eta-arc", dataclasses.replace(cert, eta=StepFunction(cert.eta.times, ev))))
    et = cert.eta_terminal.copy()
    et[0] += 0.1
    out.append(("eta-terminal", dataclasses.replace(cert, eta_terminal=et)))
    pv = cert.p.values.copy()
    pv[:, 0] += 0.1
    out.append(("p", dataclasses.replace(cert, p=StepFunction(cert.p.times, pv))))
    qv = cert.q.values.copy()
    qv[0, 0] += 0.1
    out.append(("q", dataclasses.replace(cert, q=StepFunction(cert.q.times, qv))))
    t0, v0 = cert.gamma_atoms[0]
    atoms_val = ((t0, v0 + np.array([0.1] + [0.0] * (len(v0) - 1))),) + cert.gamma_atoms[1:]
    out.append(("gamma-value", dataclasses.replace(cert, gamma_atoms=atoms_val)))
    atoms_t = ((t0 - 0.1, v0),) + cert.gamma_atoms[1:]
    out.append(("gamma-time", dataclasses.replace(cert, gamma_atoms=atoms_t)))
    return out


def test_criterion_7_closed_loop(solutions):
    ok = False
    try:
        for key in ("robot2", "ped2", "ped3"):
            sol = solutions[key]
            rep = verify_certificate(
                sol.scenario, sol.path, sol.control, sol.certificate, tol=sol.recommended_tol
            )
            assert rep.passed, key
            for label, bad in _corruptions(sol.certificate):
                try:
                    rep_bad = verify_certificate(
                        sol.scenario, sol.path, sol.control, bad, tol=sol.recommended_tol
                    )
                except ValueError:
                    continue  # corruption rejected at construction: still a failure
                assert not rep_bad.passed, (key, label)
        ok = True
    finally:
        _report("7 (closed-loop certificates with corruption sensitivity)", ok)

"""Necessary-condition residual checks against hand-built worked certificates."""

import dataclasses

import numpy as np
import pytest

from sweepctrl.models import bundled_scenario
from sweepctrl.optimality import (
    DualCertificate,
    PiecewisePath,
    StepFunction,
    certificate_from_dict,
    certificate_to_dict,
    check_adjoint,
    check_complementarity,
    check_maximization,
    check_measure_link,
    check_nonatomicity,
    check_nontriviality,
    check_primal,
    check_transversality,
    verify_certificate,
)

T1_PED2 = 5.0 / 9.0


def ped2():
    return bundled_scenario("pedestrian2.scn")


def ped3():
    return bundled_scenario("pedestrian3.scn")


def ped2_path():
    """Two-phase optimal path: free to the contact point, then locked at (9, 9)."""
    x_t1 = np.array([-60.0, -48.0]) + T1_PED2 * np.array([14.4, 3.6])
    return PiecewisePath(
        np.array([0.0, T1_PED2, 6.0]),
        np.array([[-60.0, -48.0], x_t1, [-3.0, 3.0]]),
    )


def ped2_certificate():
    """Hand-built dual data for the two-pedestrian optimum.

    Pre-contact q from the maximization convention psi = u; arc q on the
    constraint surface (q1 - q2 = -6) and neutral for the segment direction
    (8 q1 + 2 q2 = 0); p from transversality; atoms carry the q jumps.
    """
    q_pre = np.array([0.225, 0.9])
    q_arc = np.array([-1.2, 4.8])
    p = np.array([-2.4, 2.4])
    return DualCertificate(
        lam=1.0,
        eta=StepFunction(np.array([0.0, T1_PED2, 6.0]), np.array([[0.0], [5.4]])),
        eta_terminal=np.array([5.4]),
        p=StepFunction.constant(6.0, p),
        q=StepFunction(np.array([0.0, T1_PED2, 6.0]), np.array([q_pre, q_arc])),
        gamma_atoms=((T1_PED2, q_arc - q_pre), (6.0, p - q_arc)),
    )


def ped3_path():
    """Consistent three-pedestrian path: (16, 6, 6) then the locked train at 28/3."""
    x0 = np.array([-60.0, -48.0, -42.0])
    x_t1 = x0 + 0.6 * np.array([16.0, 6.0, 6.0])
    x_T = x_t1 + 5.4 * np.full(3, 28.0 / 3.0)
    return PiecewisePath(np.array([0.0, 0.6, 6.0]), np.array([x0, x_t1, x_T]))


def ped3_certificate():
    q = np.array([1.0, 7.0, 13.0])
    x_T = ped3_path().terminal
    eta_T = np.array([20.0 / 3.0, 16.0 / 3.0])
    rows = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    p = -(x_T + rows.T @ eta_T)
    return DualCertificate(
        lam=1.0,
        eta=StepFunction(
            np.array([0.0, 0.6, 6.0]), np.array([[0.0, 2.0], [20.0 / 3.0, 16.0 / 3.0]])
        ),
        eta_terminal=eta_T,
        p=StepFunction.constant(6.0, p),
        q=StepFunction.constant(6.0, q),
        gamma_atoms=((6.0, p - q),),
    )


class TestPrimal:
    def test_free_motion_zero(self):
        scn = ped2()
        path = PiecewisePath(
            np.array([0.0, 6.0]), np.array([[-60.0, -48.0], [-60.0 + 6 * 1.6, -48.0 + 6 * 0.4]])
        )
        cert = dataclasses.replace(
            ped2_certificate(),
            eta=StepFunction.constant(6.0, np.zeros(1)),
            eta_terminal=np.zeros(1),
        )
        r = check_primal(scn, path, np.array([0.2, 0.2]), cert)
        assert r < 1e-12

    def test_worked_two_pedestrian_certificate(self):
        r = check_primal(ped2(), ped2_path(), np.array([1.8, 1.8]), ped2_certificate())
        assert r < 1e-6

    def test_unit_eta_corruption_costs_sqrt2(self):
        cert = ped2_certificate()
        bad_vals = cert.eta.values.copy()
        bad_vals[0, 0] += 1.0
        bad = dataclasses.replace(cert, eta=StepFunction(cert.eta.times, bad_vals))
        r = check_primal(ped2(), ped2_path(), np.array([1.8, 1.8]), bad)
        assert r == pytest.approx(np.sqrt(2.0), abs=1e-9)


class TestComplementarity:
    def test_worked_certificates_clean(self):
        r2, r3 = check_complementarity(ped2(), ped2_path(), ped2_certificate())
        assert r2 < 1e-9 and r3 < 1e-9
        r2, r3 = check_complementarity(ped3(), ped3_path(), ped3_certificate())
        assert r2 < 1e-9 and r3 < 1e-9

    def test_dual_surface_is_pinned_where_eta_positive(self):
        # q on the arc satisfies q1 - q2 = -6 = c; shifting it off the
        # surface shows up weighted by eta.
        cert = ped2_certificate()
        q_vals = cert.q.values.copy()
        q_vals[1] += np.array([1.0, 0.0])
        bad = dataclasses.replace(cert, q=StepFunction(cert.q.times, q_vals))
        _, r3 = check_complementarity(ped2(), ped2_path(), bad)
        assert r3 == pytest.approx(5.4 * 1.0, abs=1e-9)

    def test_eta_on_inactive_interval_flagged(self):
        cert = ped2_certificate()
        vals = cert.eta.values.copy()
        vals[0, 0] = 2.0  # strictly inside during the free phase
        bad = dataclasses.replace(cert, eta=StepFunction(cert.eta.times, vals))
        r2, _ = check_complementarity(ped2(), ped2_path(), bad)
        assert r2 > 1.0


class TestAdjointAndMeasure:
    def test_constant_p_zero_residual(self):
        assert check_adjoint(ped2(), ped2_certificate()) == 0.0

    def test_drifting_p_flagged(self):
        cert = ped2_certificate()
        p = StepFunction(
            np.array([0.0, 3.0, 6.0]), np.array([[-2.4, 2.4], [-2.0, 2.4]])
        )
        assert check_adjoint(ped2(), dataclasses.replace(cert, p=p)) == pytest.approx(0.4)

    def test_measure_link_exact_on_worked_certificates(self):
        assert check_measure_link(ped2_certificate()) < 1e-12
        assert check_measure_link(ped3_certificate()) < 1e-12

    def test_single_atom_against_paper_rounding(self):
        # Certificate variant with the whole tail mass in one contact-time
        # atom rounded to a single decimal: the link still closes within 0.03.
        q_pre = np.array([0.225, 0.9])
        p = np.array([-2.4, 2.4])
        cert = DualCertificate(
            lam=1.0,
            eta=StepFunction(np.array([0.0, T1_PED2, 6.0]), np.array([[0.0], [5.4]])),
            eta_terminal=np.array([5.4]),
            p=StepFunction.constant(6.0, p),
            q=StepFunction(np.array([0.0, T1_PED2, 6.0]), np.array([q_pre, p])),
            gamma_atoms=((T1_PED2, np.array([-2.6, 1.5])),),
        )
        assert check_measure_link(cert) < 0.03

    def test_dropping_the_atom_leaves_the_gap(self):
        cert = ped2_certificate()
        # Dropping the terminal atom leaves the defect ||p - q_arc|| on the
        # whole contact arc; dropping everything leaves ||p - q_pre|| at 0.
        bad_tail = dataclasses.replace(cert, gamma_atoms=cert.gamma_atoms[:1])
        expect_arc = np.linalg.norm(np.array([-2.4, 2.4]) - np.array([-1.2, 4.8]))
        assert check_measure_link(bad_tail) == pytest.approx(expect_arc)
        bad_all = dataclasses.replace(cert, gamma_atoms=())
        expect0 = np.linalg.norm(np.array([-2.4, 2.4]) - np.array([0.225, 0.9]))
        assert check_measure_link(bad_all) == pytest.approx(expect0)


class TestMaximization:
    def test_zero_psi_any_control(self):
        cert = dataclasses.replace(
            ped2_certificate(), q=StepFunction.constant(6.0, np.zeros(2))
        )
        r = check_maximization(ped2(), cert, np.array([-1.0, -1.0]), ped2_path())
        assert r == 0.0

    def test_worked_segment_maximizer(self):
        r = check_maximization(ped2(), ped2_certificate(), np.array([1.8, 1.8]), ped2_path())
        assert r < 1e-12

    def test_worked_box_maximizer(self):
        r = check_maximization(ped3(), ped3_certificate(), np.array([2.0, 2.0, 2.0]), ped3_path())
        assert r < 1e-12

    def test_vertex_enumeration_matches_dense_grid(self):
        rng = np.random.default_rng(23)
        scn = ped3()
        U = scn.control_set
        grid_axes = [np.linspace(lo, hi, 21) for lo, hi in zip(U.lo, U.hi)]
        mesh = np.meshgrid(*grid_axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        for _ in range(50):
            psi = rng.standard_normal(3) * 5.0
            best, _ = U.maximize_linear(psi)
            dense = float(np.max(pts @ psi))
            assert best >= dense - 1e-9
            assert best - dense < 1e-6 + 0.0  # vertex max equals grid max at the corners


class TestTransversality:
    def test_trivial_configuration(self):
        scn = ped2()
        path = PiecewisePath(np.array([0.0, 6.0]), np.array([[-60.0, -48.0], [0.0, 0.0]]))
        cert = dataclasses.replace(
            ped2_certificate(),
            p=StepFunction.constant(6.0, np.zeros(2)),
            eta_terminal=np.zeros(1),
        )
        r7, r8 = check_transversality(scn, path, cert)
        assert r7 == 0.0 and r8 == 0.0

    def test_worked_two_pedestrian_endpoint(self):
        r7, r8 = check_transversality(ped2(), ped2_path(), ped2_certificate())
        assert r7 < 1e-12 and r8 < 1e-12

    def test_three_pedestrian_published_p(self):
        # The published endpoint data: printed trajectory with the carried
        # standing multiplier, p(T) = (-20/3, 92/15, -262/15).
        x0 = np.array([-60.0, -48.0, -42.0])
        x_t1 = x0 + 0.6 * np.array([16.0, 6.0, 6.0])
        slopes = np.array([28.0 / 3.0, 22.0 / 3.0, 34.0 / 3.0])
        printed = PiecewisePath(
            np.array([0.0, 0.6, 6.0]), np.array([x0, x_t1, x_t1 + 5.4 * slopes])
        )
        cert = dataclasses.replace(
            ped3_certificate(),
            p=StepFunction.constant(6.0, np.array([-20.0 / 3.0, 92.0 / 15.0, -262.0 / 15.0])),
        )
        r7, _ = check_transversality(ped3(), printed, cert)
        assert r7 < 1e-9


class TestNontrivialityAndAtoms:
    def test_nontriviality(self):
        assert check_nontriviality(ped2_certificate())
        zero = DualCertificate(
            lam=0.0,
            eta=StepFunction.constant(6.0, np.zeros(1)),
            eta_terminal=np.zeros(1),
            p=StepFunction.constant(6.0, np.zeros(2)),
            q=StepFunction.constant(6.0, np.zeros(2)),
            gamma_atoms=(),
        )
        assert not check_nontriviality(zero)
        lam0 = dataclasses.replace(ped2_certificate(), lam=0.0)
        assert check_nontriviality(lam0)  # q(0) = (0.225, 0.9) keeps it nontrivial

    def test_atom_at_contact_time_allowed(self):
        assert check_nonatomicity(ped2_certificate(), ped2_path(), ped2()) == 0

    def test_interior_atom_flagged(self):
        cert = ped2_certificate()
        bad = dataclasses.replace(
            cert, gamma_atoms=cert.gamma_atoms + ((0.25, np.array([0.1, 0.0])),)
        )
        assert check_nonatomicity(bad, ped2_path(), ped2()) == 1

    def test_no_atoms_fine(self):
        cert = dataclasses.replace(ped2_certificate(), gamma_atoms=())
        assert check_nonatomicity(cert, ped2_path(), ped2()) == 0


class TestVerifyCertificate:
    def test_worked_certificates_pass(self):
        rep2 = verify_certificate(ped2(), ped2_path(), np.array([1.8, 1.8]), ped2_certificate())
        assert rep2.passed
        rep3 = verify_certificate(
            ped3(), ped3_path(), np.array([2.0, 2.0, 2.0]), ped3_certificate(), tol=1e-6
        )
        assert rep3.passed

    def test_zeroed_certificate_fails_nontriviality(self):
        zero = DualCertificate(
            lam=0.0,
            eta=StepFunction.constant(6.0, np.zeros(1)),
            eta_terminal=np.zeros(1),
            p=StepFunction.constant(6.0, np.zeros(2)),
            q=StepFunction.constant(6.0, np.zeros(2)),
            gamma_atoms=(),
        )
        rep = verify_certificate(ped2(), ped2_path(), np.array([0.0, 0.0]), zero)
        assert not rep.passed
        assert not rep.entry("9-nontriviality").passed

    def test_perturbation_sensitivity(self):
        # A 0.1 bump in any single certificate component moves some residual
        # by an amount on the order of the bump.
        base = ped2_certificate()
        path = ped2_path()
        u = np.array([1.8, 1.8])
        scn = ped2()

        def worst(cert):
            rep = verify_certificate(scn, path, u, cert)
            return max(
                e.residual for e in rep.entries if e.condition not in ("9-nontriviality",)
            )

        assert worst(base) < 1e-9
        variants = []
        variants.append(dataclasses.replace(base, lam=base.lam + 0.1))
        ev = base.eta.values.copy(); ev[1, 0] += 0.1
        variants.append(dataclasses.replace(base, eta=StepFunction(base.eta.times, ev)))
        variants.append(dataclasses.replace(base, eta_terminal=base.eta_terminal + 0.1))
        pv = base.p.values + np.array([0.1, 0.0])
        variants.append(dataclasses.replace(base, p=StepFunction(base.p.times, pv)))
        qv = base.q.values.copy(); qv[0] += np.array([0.1, 0.0])
        variants.append(dataclasses.replace(base, q=StepFunction(base.q.times, qv)))
        t0, v0 = base.gamma_atoms[0]
        variants.append(
            dataclasses.replace(base, gamma_atoms=((t0, v0 + np.array([0.1, 0.0])), base.gamma_atoms[1]))
        )
        variants.append(
            dataclasses.replace(base, gamma_atoms=((t0 + 0.1, v0), base.gamma_atoms[1]))
        )
        for cert in variants:
            assert worst(cert) > 0.01

    def test_report_text_format(self):
        rep = verify_certificate(ped2(), ped2_path(), np.array([1.8, 1.8]), ped2_certificate())
        text = rep.to_text()
        assert "1-primal" in text and "overall: PASS" in text
        assert text.count("PASS") >= 10


class TestSerialization:
    def test_round_trip(self):
        cert = ped2_certificate()
        back = certificate_from_dict(certificate_to_dict(cert))
        assert back.lam == cert.lam
        assert np.allclose(back.q.values, cert.q.values)
        assert np.allclose(back.eta.times, cert.eta.times)
        assert len(back.gamma_atoms) == 2
        rep = verify_certificate(ped2(), ped2_path(), np.array([1.8, 1.8]), back)
        assert rep.passed

import json
import math

import numpy as np
import pytest

from qpqsim import attacks, planner
from qpqsim.attacks import (
    AttackReport,
    alice_individual_usd,
    bob_conclusiveness_attack,
    conclusive_branch_weights,
    fig_data,
    helstrom_guess,
    joint_usd_bound,
    parity_mixtures,
    usd_povm,
)
from qpqsim.errors import CapacityError, DomainError
from qpqsim.qubits import CarrierLabel, carrier_state, trace_distance

THETAS = np.linspace(0.05, math.pi / 2 - 0.05, 20)


# --- USD POVM -------------------------------------------------------------------


def test_usd_povm_completeness_and_unambiguity():
    for theta in (0.1, 0.284, 0.7, 1.3):
        povm = usd_povm(theta)
        total = povm.e0 + povm.e1 + povm.e_fail
        assert np.max(np.abs(total - np.eye(2))) < 1e-10
        zero = carrier_state(CarrierLabel.K0, theta)
        primed = carrier_state(CarrierLabel.K0P, theta)
        p_e0_z, p_e1_z, p_fail_z = povm.outcome_probabilities(zero)
        p_e0_p, p_e1_p, p_fail_p = povm.outcome_probabilities(primed)
        assert abs(p_e1_z) < 1e-10  # never names |0'> on input |0>
        assert abs(p_e0_p) < 1e-10
        assert p_e0_z == pytest.approx(1 - math.cos(theta), abs=1e-10)
        assert p_e1_p == pytest.approx(1 - math.cos(theta), abs=1e-10)
        assert p_fail_z == pytest.approx(math.cos(theta), abs=1e-10)
        assert p_fail_p == pytest.approx(math.cos(theta), abs=1e-10)


def test_usd_povm_success_probability_values():
    assert usd_povm(0.284).success_probability == pytest.approx(0.04005, abs=5e-5)
    assert usd_povm(math.pi / 2 - 1e-6).success_probability == pytest.approx(1.0, abs=1e-5)


def test_usd_povm_elements_are_psd():
    for theta in (0.1, 0.5, 1.2):
        povm = usd_povm(theta)
        for element in (povm.e0, povm.e1, povm.e_fail):
            assert np.linalg.eigvalsh(element).min() >= -1e-10


# --- individual USD attack -------------------------------------------------------


def test_individual_usd_worked_example():
    report = alice_individual_usd(
        50000, 0.284, 3, trials=334000, rng=np.random.default_rng(1)
    )
    assert report.analytic == pytest.approx(3.21, abs=0.01)
    assert abs(report.estimate - report.analytic) <= 4 * report.sigma
    assert report.extra["wrong_identifications"] == 0
    # honest projective strategy lands lower
    honest = planner.expected_known_bits(
        50000, planner.conclusive_probability(0.284), 3
    )
    assert honest == pytest.approx(3.02, abs=0.01)
    assert report.analytic > honest


def test_individual_usd_limit_reads_everything():
    theta = math.pi / 2 - 1e-4
    report = alice_individual_usd(1000, theta, 1, trials=20000, rng=np.random.default_rng(2))
    assert report.analytic == pytest.approx(1000, rel=1e-3)
    assert report.estimate == pytest.approx(1000, rel=0.01)


def test_individual_usd_unambiguity_is_exact():
    report = alice_individual_usd(100, 0.9, 2, trials=10 ** 6, rng=np.random.default_rng(3))
    assert report.extra["wrong_identifications"] == 0


# --- parity mixtures and joint bounds ----------------------------------------------


def test_parity_mixtures_single_qubit_classes():
    pair = parity_mixtures(0.61, 1)
    even = carrier_state(CarrierLabel.K0, 0.61).density()
    odd = carrier_state(CarrierLabel.K0P, 0.61).density()
    assert np.allclose(pair.rho_even.entries, even.entries, atol=1e-12)
    assert np.allclose(pair.rho_odd.entries, odd.entries, atol=1e-12)


def test_parity_mixtures_structure():
    pair = parity_mixtures(math.pi / 4, 2)
    for rho in (pair.rho_even, pair.rho_odd):
        assert rho.dim == 4
        assert np.trace(rho.entries).real == pytest.approx(1.0, abs=1e-12)
        ev = np.linalg.eigvalsh(rho.entries)
        assert np.count_nonzero(ev > 1e-9) == 2  # two pure components


def test_parity_mixtures_capacity():
    with pytest.raises(CapacityError):
        parity_mixtures(0.5, 11)
    with pytest.raises(CapacityError):
        parity_mixtures(0.5, 0)


def test_trace_distance_of_parity_pair_matches_power_law():
    pair = parity_mixtures(math.pi / 4, 3)
    d = trace_distance(pair.rho_even, pair.rho_odd)
    assert d == pytest.approx(math.sin(math.pi / 4) ** 3, abs=1e-9)
    assert d == pytest.approx(0.35355, abs=5e-5)


def test_helstrom_guess_values_and_limits():
    assert helstrom_guess(math.pi / 4, 1) == pytest.approx(0.85355, abs=5e-5)
    assert helstrom_guess(0.05, 12) == pytest.approx(0.5, abs=1e-9)
    assert helstrom_guess(math.pi / 2 - 1e-9, 1) == pytest.approx(1.0, abs=1e-8)


def test_helstrom_cross_check_against_trace_distance():
    for k in range(1, 9):
        for theta in THETAS:
            pair = parity_mixtures(theta, k)
            viaD = 0.5 + 0.5 * trace_distance(pair.rho_even, pair.rho_odd)
            assert abs(helstrom_guess(theta, k) - viaD) < 1e-9


def test_joint_usd_bound_reduces_to_single_photon():
    for theta in THETAS:
        assert abs(joint_usd_bound(theta, 1) - (1 - math.cos(theta))) < 1e-9


def test_joint_usd_bound_shape_over_k():
    # Mathematically the bound is non-increasing in k, strictly decreasing
    # from k to k+2, and equal for the (2m-1, 2m) pairs; adjacent-step
    # strictness is below eigensolver noise, so assert the robust shape.
    for theta in (0.2, math.pi / 4):
        bounds = [joint_usd_bound(theta, k) for k in range(1, 9)]
        for a, b in zip(bounds, bounds[1:]):
            assert b <= a + 1e-8
        for a, b in zip(bounds, bounds[2:]):
            assert b < a - 1e-6 * a  # genuine decline every two steps


def test_joint_usd_bound_dominates_independent_attacks():
    for theta in (0.2, 0.5, math.pi / 4, 1.1):
        for k in range(1, 7):
            assert joint_usd_bound(theta, k) >= (1 - math.cos(theta)) ** k - 1e-9


def test_attack_metrics_nondecreasing_in_theta():
    grid = np.linspace(0.1, math.pi / 2 - 0.1, 12)
    for k in (1, 2, 3):
        helstrom = [helstrom_guess(t, k) for t in grid]
        assert all(b >= a for a, b in zip(helstrom, helstrom[1:]))
        joint = [joint_usd_bound(t, k) for t in grid]
        assert all(b >= a - 1e-9 for a, b in zip(joint, joint[1:]))
    individual = [1 - math.cos(t) for t in grid]
    assert all(b >= a for a, b in zip(individual, individual[1:]))


# --- sender-side conclusiveness attack ----------------------------------------------


def test_bob_attack_conclusive_rate():
    report = bob_conclusiveness_attack(
        math.pi / 4, True, trials=10 ** 5, rng=np.random.default_rng(4)
    )
    assert report.analytic == pytest.approx(math.cos(math.pi / 8) ** 2, abs=1e-12)
    assert abs(report.estimate - report.analytic) <= 4 * report.sigma


def test_bob_attack_inconclusive_rate():
    report = bob_conclusiveness_attack(
        math.pi / 4, False, trials=10 ** 5, rng=np.random.default_rng(5)
    )
    assert report.analytic == pytest.approx(math.sin(math.pi / 8) ** 2, abs=1e-12)
    assert abs(report.estimate - report.analytic) <= 4 * report.sigma


def test_bob_attack_learns_nothing_about_bit_value():
    # analytic: both conclusive branches carry equal Born weight
    for theta in (0.3, math.pi / 4, 1.2):
        weights = conclusive_branch_weights(theta, want_conclusive=True)
        assert weights[0] == pytest.approx(weights[1], abs=1e-12)
        assert weights[0] + weights[1] == pytest.approx(
            math.cos(theta / 2) ** 2, abs=1e-12
        )
    # statistical: inferred bit is uniform given conclusive
    report = bob_conclusiveness_attack(
        math.pi / 4, True, trials=2 * 10 ** 5, rng=np.random.default_rng(6)
    )
    hits = report.extra["conclusive_count"]
    ones = report.extra["inferred_ones"]
    sigma = math.sqrt(0.25 / hits)
    assert abs(ones / hits - 0.5) <= 4 * sigma


def test_bob_attack_steers_more_than_honest_rate():
    # conclusiveness steering beats the honest p = sin^2/2 for small theta
    for theta in (0.3, 0.6):
        p_honest = planner.conclusive_probability(theta)
        assert math.cos(theta / 2) ** 2 > p_honest


# --- figure data ----------------------------------------------------------------------


def test_fig3_series_values_and_ordering():
    grid = np.append(np.linspace(0.01, 1.56, 156), math.pi / 4)
    doc = fig_data("F3", theta_grid=grid)
    by_label = {s["label"]: s for s in doc["series"]}
    usd = by_label["usd"]
    projective = by_label["projective"]
    assert usd["y"][-1] == pytest.approx(0.2929, abs=5e-5)
    assert projective["y"][-1] == pytest.approx(0.25, abs=1e-12)
    assert np.all(usd["y"] >= projective["y"] - 1e-12)


def test_fig4_series_shapes():
    doc = fig_data("F4", n_items=50000)
    labels = [s["label"] for s in doc["series"]]
    assert any("theta=0.785" in lab for lab in labels)
    assert any(lab.startswith("expected_bits") for lab in labels)
    for series in doc["series"]:
        if series["label"].startswith("theta="):
            y = series["y"]
            assert all(b <= a + 1e-8 for a, b in zip(y, y[1:]))


def test_fig5_reference_value():
    doc = fig_data("F5")
    ref = [s for s in doc["series"] if s["label"] == "reference_pi_over_4"][0]
    assert ref["y"][0] == pytest.approx(0.85355, abs=5e-5)


def test_fig_data_rejects_unknown():
    with pytest.raises(DomainError):
        fig_data("F9")


# --- report serialization ---------------------------------------------------------------


def test_attack_report_serialization():
    report = AttackReport(
        kind="demo",
        analytic=0.5,
        estimate=0.49,
        sigma=0.01,
        trials=100,
        params={"theta": 0.3},
        extra={"note": 1},
    )
    doc = json.loads(report.to_json())
    assert doc["kind"] == "demo"
    assert doc["params"]["theta"] == 0.3
    csv = report.to_csv()
    assert csv.splitlines()[0] == "field,value"
    assert "params.theta,0.3" in csv
    assert "note,1" in csv

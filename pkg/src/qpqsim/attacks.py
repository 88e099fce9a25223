"""Dishonest-party models: receiver-side attacks on database secrecy and
the sender-side conclusiveness attack on user privacy.

A dishonest receiver can store photons and measure after the letter
announcement: unambiguous discrimination of the announced pair succeeds
with probability 1 - cos(theta) per photon, and joint strategies on the k
photons behind one final-key bit are bounded by the Helstrom guessing
probability 1/2 + sin^k(theta)/2 or the parity-pair USD bound 1 - F. A
dishonest sender substitutes half-angle states to bias the receiver's
conclusiveness, at the price of losing the bit value entirely.
"""

import io
import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ._kernels import conclusiveness_trials, usd_trials
from .errors import CapacityError, DomainError
from .qubits import (
    AttackLabel,
    Basis,
    CarrierLabel,
    DensityMatrix,
    attack_state,
    basis_states,
    carrier_state,
    fidelity,
)

MAX_JOINT_QUBITS = 10
DEFAULT_TRIALS = 10 ** 6


def _check_theta(theta):
    if not 0.0 < theta < math.pi / 2:
        raise DomainError(f"theta must lie in (0, pi/2), got {theta}")


def _check_k(substrings):
    if not 1 <= substrings <= MAX_JOINT_QUBITS:
        raise CapacityError(
            f"joint constructions are capped at {MAX_JOINT_QUBITS} qubits, got {substrings}"
        )


@dataclass(frozen=True)
class UsdPovm:
    """Optimal equal-prior unambiguous discrimination of {|0>, |0'>}.

    e0 fires only on |0>, e1 only on |0'>, e_fail absorbs the rest;
    success probability on either input is 1 - cos(theta).
    """

    e0: np.ndarray
    e1: np.ndarray
    e_fail: np.ndarray
    success_probability: float

    def outcome_probabilities(self, state):
        """Born weights (p_e0, p_e1, p_fail) for a given input state."""
        rho = np.outer(state.amps, state.amps.conj())
        return tuple(
            float(np.trace(e @ rho).real) for e in (self.e0, self.e1, self.e_fail)
        )


def usd_povm(theta):
    _check_theta(theta)
    cos = math.cos(theta)
    # each conclusive element projects on the vector orthogonal to the
    # *other* candidate, scaled so both inputs succeed with 1 - cos(theta)
    scale = 1.0 / (1.0 + cos)
    k1p = carrier_state(CarrierLabel.K1P, theta).amps  # orthogonal to |0'>
    k1 = carrier_state(CarrierLabel.K1, theta).amps    # orthogonal to |0>
    e0 = scale * np.outer(k1p, k1p.conj())
    e1 = scale * np.outer(k1, k1.conj())
    e_fail = np.eye(2, dtype=complex) - e0 - e1
    return UsdPovm(e0=e0, e1=e1, e_fail=e_fail, success_probability=1.0 - cos)


@dataclass(frozen=True)
class ParityPair:
    """Uniform mixtures over the even- and odd-parity k-fold products of
    the announced letter pair (unprimed for bit 0, primed for bit 1)."""

    rho_even: DensityMatrix
    rho_odd: DensityMatrix


def parity_mixtures(theta, substrings):
    _check_theta(theta)
    _check_k(substrings)
    zero = carrier_state(CarrierLabel.K0, theta)
    one = carrier_state(CarrierLabel.K0P, theta)
    dim = 2 ** substrings
    even = np.zeros((dim, dim), dtype=complex)
    odd = np.zeros((dim, dim), dtype=complex)
    for bits in product((0, 1), repeat=substrings):
        amps = np.array([1.0], dtype=complex)
        for b in bits:
            amps = np.kron(amps, (zero if b == 0 else one).amps)
        proj = np.outer(amps, amps.conj())
        if sum(bits) % 2 == 0:
            even += proj
        else:
            odd += proj
    norm = 2.0 ** (substrings - 1)
    return ParityPair(
        rho_even=DensityMatrix(even / norm),
        rho_odd=DensityMatrix(odd / norm),
    )


def helstrom_guess(theta, substrings):
    """Best minimum-error guess of one final-key bit from its k photons:
    1/2 + sin^k(theta)/2, i.e. 1/2 + (trace distance of the parity pair)/2."""
    _check_theta(theta)
    if substrings < 1:
        raise DomainError("substring count must be >= 1")
    return 0.5 + 0.5 * math.sin(theta) ** substrings


def joint_usd_bound(theta, substrings):
    """Upper bound on unambiguously reading one final-key bit from its k
    photons: 1 - F(rho_even, rho_odd). Equals 1 - cos(theta) at k = 1."""
    pair = parity_mixtures(theta, substrings)
    return 1.0 - fidelity(pair.rho_even, pair.rho_odd)


# --- Monte Carlo realizations -------------------------------------------------


@dataclass
class AttackReport:
    kind: str
    analytic: float
    estimate: float
    sigma: float
    trials: int
    params: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        doc = {
            "kind": self.kind,
            "analytic": self.analytic,
            "estimate": self.estimate,
            "sigma": self.sigma,
            "trials": self.trials,
            "params": self.params,
        }
        doc.update(self.extra)
        return doc

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("field,value\n")
        for key, value in sorted(self.to_dict().items()):
            if isinstance(value, dict):
                for sub, v in sorted(value.items()):
                    buf.write(f"{key}.{sub},{v}\n")
            else:
                buf.write(f"{key},{value}\n")
        return buf.getvalue()


def alice_individual_usd(n_items, theta, substrings, trials=DEFAULT_TRIALS, rng=None):
    """Store-and-discriminate attack, one photon at a time.

    Analytic expectation of known final bits: N (1 - cos theta)^k. The
    Monte Carlo draws the true letter-pair member per raw bit, samples the
    discriminator's three outcomes at their Born weights, and counts final
    positions whose k contributors all succeeded. Wrong identifications
    are tallied; unambiguity demands exactly zero.
    """
    if n_items < 1 or substrings < 1 or trials < 1:
        raise DomainError("n_items, substrings and trials must all be >= 1")
    _check_theta(theta)
    rng = rng if rng is not None else np.random.default_rng(0)
    povm = usd_povm(theta)

    # Born weights per true bit value: rows (bit 0 -> |0>, bit 1 -> |0'>)
    p_e0_0, p_e1_0, _ = povm.outcome_probabilities(carrier_state(CarrierLabel.K0, theta))
    p_e0_1, p_e1_1, _ = povm.outcome_probabilities(carrier_state(CarrierLabel.K0P, theta))
    p_right = np.array([p_e0_0, p_e1_1])
    p_wrong = np.array([p_e1_0, p_e0_1])

    raw_bits = trials * substrings
    truth = (rng.random(raw_bits) >= 0.5).astype(np.uint8)
    codes = usd_trials(rng.random(raw_bits), truth, p_wrong, p_right)
    wrong = int(np.count_nonzero(codes == 2))
    success = (codes == 1).reshape(trials, substrings)
    all_known = np.all(success, axis=1)
    q_hat = float(np.count_nonzero(all_known) / trials)
    sigma_q = math.sqrt(max(q_hat * (1.0 - q_hat), 1e-300) / trials)

    analytic = n_items * (1.0 - math.cos(theta)) ** substrings
    return AttackReport(
        kind="individual_usd",
        analytic=analytic,
        estimate=n_items * q_hat,
        sigma=n_items * sigma_q,
        trials=trials,
        params={"theta": theta, "substrings": substrings, "n_items": n_items},
        extra={
            "per_photon_success": povm.success_probability,
            "wrong_identifications": wrong,
        },
    )


def bob_conclusiveness_attack(theta, want_conclusive, trials=DEFAULT_TRIALS, rng=None):
    """Sender-side attack steering the receiver's conclusiveness.

    The sender transmits a half-angle state and announces the letter that
    makes a conclusive result as likely as possible (probability
    cos^2(theta/2)) or as unlikely as possible (sin^2(theta/2)). The
    receiver's honest measurement and sift are simulated; the conditional
    distribution of her inferred bit is reported, and is uniform: the
    attack trades all bit-value knowledge for conclusiveness knowledge.
    """
    _check_theta(theta)
    if trials < 1:
        raise DomainError("trials must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)

    # P(outcome 0 | attack state, basis): both half-angle states are
    # symmetric between the two conclusive branches.
    p0_attack = np.empty((2, 2), dtype=np.float64)
    for a in AttackLabel:
        psi = attack_state(a, theta)
        for basis in Basis:
            b0, _ = basis_states(basis, theta)
            p0_attack[a, basis] = abs(b0.overlap(psi)) ** 2

    conclusive, bits = conclusiveness_trials(
        rng.random((trials, 3)), p0_attack, bool(want_conclusive)
    )
    hits = int(np.count_nonzero(conclusive))
    rate = hits / trials
    sigma = math.sqrt(max(rate * (1.0 - rate), 1e-300) / trials)
    ones = int(np.count_nonzero(bits[conclusive]))

    half = theta / 2.0
    analytic = math.cos(half) ** 2 if want_conclusive else math.sin(half) ** 2
    return AttackReport(
        kind="conclusiveness",
        analytic=analytic,
        estimate=rate,
        sigma=sigma,
        trials=trials,
        params={"theta": theta, "want_conclusive": bool(want_conclusive)},
        extra={
            "conclusive_count": hits,
            "inferred_ones": ones,
            "inferred_one_fraction": ones / hits if hits else None,
        },
    )


def conclusive_branch_weights(theta, want_conclusive=True):
    """Born weights of the two conclusive branches under the sender attack;
    equal weights mean the inferred bit carries no information."""
    _check_theta(theta)
    psi = attack_state(AttackLabel.A0PP, theta)
    announce = 1 if want_conclusive else 0
    weights = {}
    for basis in Basis:
        states = basis_states(basis, theta)
        for outcome in (0, 1):
            if outcome == announce:
                continue  # inconclusive branch
            bit = 1 if basis is Basis.B else 0
            weights[bit] = 0.5 * abs(states[outcome].overlap(psi)) ** 2
    return weights


# --- figure series -------------------------------------------------------------


def fig_data(which, theta_grid=None, substring_range=None, theta_set=None, n_items=None):
    """Plot-ready series for the security figures.

    F3: per-photon success of unambiguous discrimination (1 - cos theta)
    against the honest projective rate (sin^2 theta / 2).
    F4: joint parity-USD bound versus substring count for several theta,
    plus the expected known-final-bit count when n_items is given.
    F5: the steered conclusiveness probability cos^2(theta/2) with the
    symmetric-case (theta = pi/4) reference value.
    """
    if which == "F3":
        grid = theta_grid if theta_grid is not None else np.linspace(0.01, 1.56, 156)
        return {
            "figure": "F3",
            "x_name": "theta",
            "series": [
                {"label": "usd", "x": grid, "y": 1.0 - np.cos(grid)},
                {"label": "projective", "x": grid, "y": np.sin(grid) ** 2 / 2.0},
            ],
        }
    if which == "F4":
        thetas = theta_set if theta_set is not None else (0.2, 0.25, 0.3, math.pi / 4)
        ks = substring_range if substring_range is not None else range(1, 9)
        ks = np.array(list(ks))
        series = []
        for theta in thetas:
            bounds = np.array([joint_usd_bound(theta, int(k)) for k in ks])
            series.append({"label": f"theta={theta:.3f}", "x": ks, "y": bounds})
            if n_items is not None:
                series.append(
                    {
                        "label": f"expected_bits theta={theta:.3f} N={n_items}",
                        "x": ks,
                        "y": n_items * bounds,
                    }
                )
        return {"figure": "F4", "x_name": "substrings", "series": series}
    if which == "F5":
        grid = theta_grid if theta_grid is not None else np.linspace(0.01, 1.56, 156)
        return {
            "figure": "F5",
            "x_name": "theta",
            "series": [
                {"label": "p_conclusive", "x": grid, "y": np.cos(grid / 2.0) ** 2},
                {
                    "label": "reference_pi_over_4",
                    "x": np.array([math.pi / 4]),
                    "y": np.array([math.cos(math.pi / 8) ** 2]),
                },
            ],
        }
    raise DomainError(f"unknown figure {which!r}; expected F3, F4 or F5")


def _csv_num(value):
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def series_to_csv(doc):
    """Flatten a figure document into x,y[,label] CSV rows."""
    buf = io.StringIO()
    buf.write("label,x,y\n")
    for series in doc["series"]:
        for x, y in zip(series["x"], series["y"]):
            buf.write(f"{series['label']},{_csv_num(x)},{_csv_num(y)}\n")
    return buf.getvalue()


def series_to_json(doc):
    out = {
        "figure": doc["figure"],
        "x_name": doc.get("x_name"),
        "series": [
            {
                "label": s["label"],
                "x": [float(v) for v in s["x"]],
                "y": [float(v) for v in s["y"]],
            }
            for s in doc["series"]
        ],
    }
    return json.dumps(out, sort_keys=True)

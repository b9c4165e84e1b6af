"""Participant-adversary scenarios and their success/detection statistics.

Every scenario replays the real protocol and injects one dishonest
behavior: withholding an X outcome, lying about it, or swapping the atom in
transit for a prepared one. Success always means the assigned receiver's
recovered state matches the secret exactly (fidelity >= 1 - 1e-9); partial
information does not count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Literal, Sequence

import numpy as np

from .protocol import (
    CORRECTIONS,
    RECOVERY_FID_TOL,
    CorrectionTable,
    PartyLayout,
    SecretAmplitudes,
    derive_correction_table,
    interact_pairs,
    prepare_initial,
    run_distribution,
)
from .rng import stream
from .states import (
    PureState,
    fidelity_up_to_phase,
    format_outcome,
    haar_random_state,
    sample_measurement,
)

ScenarioKind = Literal[
    "honest",
    "assigned_with_cooperation",
    "assigned_without_cooperation",
    "lie_about_x",
    "intercept_resend",
]

SCENARIO_KINDS = ("honest", "assigned_with_cooperation", "assigned_without_cooperation",
                  "lie_about_x", "intercept_resend")
SUBSTITUTE_POLICIES = ("ground", "mixed", "random_pure")
CHECK_SCENARIOS = ("honest", "lie_about_x", "intercept_resend")


@dataclass(frozen=True)
class SecurityScenario:
    """One adversary strategy. The adversary is always a user, never the dealer."""

    kind: ScenarioKind
    adversary: int = 1
    receiver: int | None = None  # assigned receiver (user id); kind-dependent default
    substitute_policy: str = "ground"  # intercept_resend only

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind: {self.kind!r}")
        if self.substitute_policy not in SUBSTITUTE_POLICIES:
            raise ValueError(f"unknown substitute policy: {self.substitute_policy!r}")

    def resolve_receiver(self, layout: PartyLayout) -> int:
        """Assigned receiver user; defaults to the adversary for the assigned
        scenarios and to the last honest user otherwise."""
        if not 1 <= self.adversary <= layout.n_users:
            raise ValueError(f"adversary must be a user in 1..{layout.n_users}")
        if self.receiver is not None:
            if not 1 <= self.receiver <= layout.n_users:
                raise ValueError(f"receiver must be a user in 1..{layout.n_users}")
            return self.receiver
        if self.kind in ("assigned_with_cooperation", "assigned_without_cooperation"):
            return self.adversary
        if self.kind == "honest":
            return layout.n_users
        return self.victim(layout)

    def victim(self, layout: PartyLayout) -> int:
        """Whose atom gets intercepted: the last user other than the adversary."""
        return layout.n_users if self.adversary != layout.n_users else layout.n_users - 1


@dataclass
class SecurityReport:
    scenario: str
    adversary: int
    receiver: int
    substitute_policy: str | None
    trials: int
    success_rate: float
    mean_fidelity: float
    detection_rate: float
    ci_low: float
    ci_high: float
    seed: int
    trial_details: list[dict] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"scenario": self.scenario, "adversary": self.adversary,
               "receiver": self.receiver, "trials": self.trials,
               "success_rate": self.success_rate, "mean_fidelity": self.mean_fidelity,
               "detection_rate": self.detection_rate,
               "ci": [self.ci_low, self.ci_high], "seed": self.seed}
        if self.substitute_policy is not None:
            out["substitute_policy"] = self.substitute_policy
        return out


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a binomial rate."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return center - half, center + half


@lru_cache(maxsize=32)
def _cached_table(layout: PartyLayout, receiver_atom: int) -> CorrectionTable:
    return derive_correction_table(layout, receiver_atom=receiver_atom)


def _substitute_state(policy: str, label, rng: np.random.Generator) -> PureState:
    if policy == "ground":
        return PureState((2,), (label,), np.array([1, 0], dtype=complex))
    if policy == "mixed":
        # maximally mixed, realized as an even ensemble over |g>, |e>
        idx = int(rng.integers(2))
        amps = np.zeros(2, dtype=complex)
        amps[idx] = 1.0
        return PureState((2,), (label,), amps)
    if policy == "random_pure":
        return haar_random_state((label,), rng)
    raise ValueError(f"unknown substitute policy: {policy!r}")


def _measure_non_receivers(residual: PureState, receiver_atom: int,
                           rng: np.random.Generator):
    """Sequential X measurement of every non-receiver atom (ascending)."""
    chars: dict[int, str] = {}
    state = residual
    for atom in [a for a in residual.labels if a != receiver_atom]:
        record, state = sample_measurement(state, (atom,), "X", rng)
        chars[atom] = record.outcome
    return chars, state  # state is now the receiver's single qubit


def _apply_correction(vec: PureState, pauli: str, receiver_atom: int) -> PureState:
    return PureState((2,), (receiver_atom,), CORRECTIONS[pauli] @ vec.amplitudes)


def _one_round(scenario: SecurityScenario, layout: PartyLayout,
               secret: SecretAmplitudes, rng: np.random.Generator) -> dict:
    """Run the protocol once with the adversary's strategy; report fidelity.

    The attack never touches the dealer's stage, so the sampled dealer
    outcome and its probability come straight from the honest distribution.
    """
    receiver_user = scenario.resolve_receiver(layout)
    receiver_atom = layout.user_atom(receiver_user)
    adversary_atom = layout.user_atom(scenario.adversary)
    table = _cached_table(layout, receiver_atom)
    target = secret.as_state(receiver_atom)

    branch = run_distribution(prepare_initial(secret, layout), layout,
                              mode="sampled", rng=rng)
    detail: dict = {"alice_outcome": branch.outcome, "alice_prob": branch.probability}

    if scenario.kind in ("honest", "assigned_with_cooperation"):
        chars, vec = _measure_non_receivers(branch.residual, receiver_atom, rng)
        x = "".join(chars[a] for a in sorted(chars))
        recovered = _apply_correction(vec, table.lookup(branch.outcome, x), receiver_atom)

    elif scenario.kind == "assigned_without_cooperation":
        # everyone measures, nobody tells: the receiver guesses each withheld
        # outcome uniformly (the two X outcomes are equiprobable)
        chars, vec = _measure_non_receivers(branch.residual, receiver_atom, rng)
        actual = "".join(chars[a] for a in sorted(chars))
        guess = "".join("+-"[int(rng.integers(2))] for _ in actual)
        detail.update(actual_x=actual, guessed_x=guess)
        recovered = _apply_correction(vec, table.lookup(branch.outcome, guess), receiver_atom)

    elif scenario.kind == "lie_about_x":
        if receiver_user == scenario.adversary:
            raise ValueError("lie_about_x needs an honest receiver")
        chars, vec = _measure_non_receivers(branch.residual, receiver_atom, rng)
        actual = "".join(chars[a] for a in sorted(chars))
        flipped = dict(chars)
        flipped[adversary_atom] = "+" if chars[adversary_atom] == "-" else "-"
        announced = "".join(flipped[a] for a in sorted(flipped))
        detail.update(actual_x=actual, announced_x=announced)
        recovered = _apply_correction(vec, table.lookup(branch.outcome, announced),
                                      receiver_atom)

    elif scenario.kind == "intercept_resend":
        victim_user = scenario.victim(layout)
        victim_atom = layout.user_atom(victim_user)
        detail.update(victim=victim_user)
        if receiver_user == scenario.adversary:
            # the adversary holds both his own atom and the stolen one, so he
            # completes the recovery privately on genuine atoms
            chars, vec = _measure_non_receivers(branch.residual, receiver_atom, rng)
            x = "".join(chars[a] for a in sorted(chars))
            recovered = _apply_correction(vec, table.lookup(branch.outcome, x), receiver_atom)
        else:
            # genuine atoms all get X-measured (the stolen one privately by
            # the adversary); the victim's announced outcome comes from the
            # substituted atom instead
            chars, vec = _measure_non_receivers(branch.residual, receiver_atom, rng)
            fake = _substitute_state(scenario.substitute_policy, victim_atom, rng)
            announced = dict(chars)
            if victim_user != receiver_user:
                fake_rec, _ = sample_measurement(fake, (victim_atom,), "X", rng)
                announced[victim_atom] = fake_rec.outcome
            x = "".join(announced[a] for a in sorted(announced))
            pauli = table.lookup(branch.outcome, x)
            held = fake if victim_user == receiver_user else vec
            recovered = _apply_correction(held, pauli, receiver_atom)

    else:  # pragma: no cover - guarded by SecurityScenario validation
        raise ValueError(f"unknown scenario kind: {scenario.kind!r}")

    fid = fidelity_up_to_phase(recovered, target)
    detail["fidelity"] = fid
    detail["success"] = fid >= 1.0 - RECOVERY_FID_TOL
    return detail


def _check_flag(scenario: SecurityScenario, layout: PartyLayout,
                secret: SecretAmplitudes, rng: np.random.Generator) -> bool:
    """One check round: the dealer uses a known secret and the receiver
    measures in the {secret, orthogonal} basis; a mismatch flags the round."""
    detail = _one_round(scenario, layout, secret, rng)
    p_mismatch = 1.0 - detail["fidelity"]
    if p_mismatch < RECOVERY_FID_TOL:
        return False  # exact recovery never mismatches
    return bool(rng.random() < p_mismatch)


def simulate_scenario(scenario: SecurityScenario,
                      secret_sampler: Callable[[np.random.Generator], SecretAmplitudes] | None = None,
                      trials: int = 1000, seed: int = 0,
                      layout: PartyLayout | None = None,
                      keep_trials: bool = False) -> SecurityReport:
    """Monte Carlo estimate of the scenario's success/fidelity statistics.

    Detection is measured only for the scenarios that define check rounds
    (honest, lie_about_x, intercept_resend); one check round with a freshly
    sampled known secret runs per trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    layout = layout or PartyLayout(2)
    sampler = secret_sampler or SecretAmplitudes.haar
    receiver_user = scenario.resolve_receiver(layout)

    details = []
    successes = 0
    fid_sum = 0.0
    flagged = 0
    runs_checks = scenario.kind in CHECK_SCENARIOS
    for k in range(trials):
        rng = stream(seed, "trial", k)
        detail = _one_round(scenario, layout, sampler(rng), rng)
        successes += detail["success"]
        fid_sum += detail["fidelity"]
        if runs_checks:
            check_rng = stream(seed, "check", k)
            flagged += _check_flag(scenario, layout, sampler(check_rng), check_rng)
        if keep_trials:
            details.append(detail)

    ci_low, ci_high = wilson_interval(successes, trials)
    return SecurityReport(
        scenario=scenario.kind, adversary=scenario.adversary, receiver=receiver_user,
        substitute_policy=scenario.substitute_policy if scenario.kind == "intercept_resend" else None,
        trials=trials, success_rate=successes / trials, mean_fidelity=fid_sum / trials,
        detection_rate=(flagged / trials) if runs_checks else 0.0,
        ci_low=ci_low, ci_high=ci_high, seed=seed,
        trial_details=details if keep_trials else None)


def run_check_rounds(scenario: SecurityScenario, known_secrets: Sequence[SecretAmplitudes],
                     rounds: int, seed: int, layout: PartyLayout | None = None) -> float:
    """Fraction of public check rounds that flag the scenario."""
    if scenario.kind not in CHECK_SCENARIOS:
        raise ValueError(f"check rounds are defined for {CHECK_SCENARIOS}, "
                         f"not {scenario.kind!r}")
    if not known_secrets:
        raise ValueError("need at least one known secret")
    layout = layout or PartyLayout(2)
    flagged = 0
    for k in range(rounds):
        rng = stream(seed, "check", k)
        flagged += _check_flag(scenario, layout, known_secrets[k % len(known_secrets)], rng)
    return flagged / rounds

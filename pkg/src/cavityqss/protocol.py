"""Three-party and n-party secret-state distribution.

One dealer (Alice) holds 3n atoms: the secret qubit, n-1 GHZ triples, and
one Bell pair, chained so that pairwise cavity interactions plus a Z
measurement of all cavity atoms swap the secret onto the n distributed
atoms. The n users then cooperate: every non-receiver measures in the X
basis, and the receiver applies a single-qubit correction looked up from an
exhaustively derived table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cavity import InteractionSchedule, effective_unitary
from .rng import stream
from .states import (
    ATOL_CHECK,
    PROB_FLOOR,
    PureState,
    SIGMA_X,
    SIGMA_Z,
    bell_state,
    fidelity_up_to_phase,
    format_outcome,
    ghz_state,
    project,
    qubit_state,
    sample_measurement,
    tensor,
)

RECOVERY_FID_TOL = 1e-9

# Single-qubit corrections, (g, e) index order. The first four are tried
# first so even-length interaction chains always resolve to plain Paulis.
# Chains with an odd number of cavity pairs leave a quarter-turn relative
# phase on the residual, which no Pauli removes; S = diag(i, 1) (S^2 = Z)
# and its X composites cover those branches.
CORRECTIONS = {
    "I": np.eye(2, dtype=complex),
    "Z": SIGMA_Z.copy(),
    "X": SIGMA_X.copy(),
    "XZ": SIGMA_X @ SIGMA_Z,
    "S": np.array([[1j, 0], [0, 1]], dtype=complex),
    "SD": np.array([[-1j, 0], [0, 1]], dtype=complex),
    "SX": SIGMA_X @ np.array([[1j, 0], [0, 1]], dtype=complex),
    "SDX": SIGMA_X @ np.array([[-1j, 0], [0, 1]], dtype=complex),
}
CANDIDATE_ORDER = ("I", "Z", "X", "XZ", "S", "SD", "SX", "SDX")

_TABLE_SECRET_SEED = 715517  # fixed so table derivation is bit-reproducible


class CorrectionTableError(RuntimeError):
    """Raised when table derivation or lookup cannot complete."""


@dataclass(frozen=True)
class SecretAmplitudes:
    """The unknown qubit alpha|e> + beta|g>, with |alpha|^2 + |beta|^2 = 1."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"|alpha|^2 + |beta|^2 = {norm!r}, expected 1")

    @classmethod
    def haar(cls, rng: np.random.Generator) -> "SecretAmplitudes":
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        v /= np.linalg.norm(v)
        return cls(complex(v[0]), complex(v[1]))

    def as_state(self, label) -> PureState:
        return qubit_state(self.alpha, self.beta, label)


@dataclass(frozen=True)
class PartyLayout:
    """Atom bookkeeping for one dealer and n_users receivers.

    Atoms are labeled 1..3n. Cavity pairs (1,2), (3,5), (6,8), ...,
    (3n-3, 3n-1) are measured by the dealer; atoms 4, 7, ..., 3n-2 and 3n
    are distributed, one per user. n_users = 2 is the three-party case.
    """

    n_users: int

    def __post_init__(self):
        if self.n_users < 2:
            raise ValueError(f"need at least 2 users, got {self.n_users}")
        atoms = set(range(1, self.atom_count + 1))
        flat = [a for p in self.cavity_pairs for a in p] + list(self.distributed_atoms)
        if len(flat) != len(atoms) or set(flat) != atoms:
            raise ValueError("cavity pairs and distributed atoms do not partition the register")

    @property
    def atom_count(self) -> int:
        return 3 * self.n_users

    @property
    def cavity_pairs(self) -> tuple[tuple[int, int], ...]:
        return ((1, 2),) + tuple((3 * k - 3, 3 * k - 1) for k in range(2, self.n_users + 1))

    @property
    def measured_atoms(self) -> tuple[int, ...]:
        return tuple(sorted(a for p in self.cavity_pairs for a in p))

    @property
    def distributed_atoms(self) -> tuple[int, ...]:
        return tuple(3 * k - 2 for k in range(2, self.n_users + 1)) + (3 * self.n_users,)

    @property
    def ghz_triples(self) -> tuple[tuple[int, int, int], ...]:
        return tuple((3 * k - 4, 3 * k - 3, 3 * k - 2) for k in range(2, self.n_users + 1))

    @property
    def bell_pair(self) -> tuple[int, int]:
        return (3 * self.n_users - 1, 3 * self.n_users)

    def user_atom(self, user: int) -> int:
        if not 1 <= user <= self.n_users:
            raise ValueError(f"user must be in 1..{self.n_users}, got {user}")
        return self.distributed_atoms[user - 1]

    def atom_user(self, atom: int) -> int:
        try:
            return self.distributed_atoms.index(atom) + 1
        except ValueError:
            raise ValueError(f"atom {atom} is not a distributed atom") from None

    @property
    def default_receiver_atom(self) -> int:
        return self.distributed_atoms[-1]


@dataclass(frozen=True)
class Branch:
    """One dealer-measurement branch: outcome, probability, leftover state."""

    outcome: str
    probability: float
    residual: PureState | None


@dataclass(frozen=True)
class RecoveryBranch:
    x_outcomes: str
    probability: float
    pauli: str
    recovered: PureState
    fidelity: float


@dataclass(frozen=True)
class BranchResult:
    """One fully resolved (dealer outcome, X outcomes) protocol branch."""

    alice_outcome: str
    x_outcomes: str
    probability: float  # joint probability of both measurement outcomes
    pauli: str
    fidelity: float


@dataclass(frozen=True)
class CorrectionTable:
    """Map from (dealer outcome, non-receiver X outcomes) to the receiver's
    single-qubit correction."""

    n_users: int
    receiver_atom: int
    entries: dict[tuple[str, str], str]

    @property
    def expected_size(self) -> int:
        return 2 ** (2 * self.n_users) * 2 ** (self.n_users - 1)

    def lookup(self, alice_outcome: str, x_outcomes: str) -> str:
        try:
            return self.entries[(alice_outcome, x_outcomes)]
        except KeyError:
            raise CorrectionTableError(
                f"no correction entry for ({alice_outcome!r}, {x_outcomes!r})") from None

    def to_dict(self) -> dict:
        rows = [{"alice": a, "x": x, "pauli": p}
                for (a, x), p in sorted(self.entries.items())]
        return {"n_users": self.n_users, "receiver_atom": self.receiver_atom, "entries": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"


@dataclass
class ProtocolTranscript:
    """Ordered event log of one protocol run."""

    n_users: int
    receiver_atom: int
    lambda_t: float
    omega_t: float
    mode: str                 # "exhaustive" or "sampled"
    seed: int | None
    events: list[dict] = field(default_factory=list)

    def log(self, event: str, **payload) -> None:
        self.events.append({"event": event, **payload})

    def recovery_fidelities(self) -> list[float]:
        return [ev["fidelity"] for ev in self.events if "fidelity" in ev]

    def branch_probabilities(self) -> list[float]:
        return [ev["prob"] for ev in self.events if ev["event"] == "branch"]

    def to_jsonl_lines(self, trial: int) -> list[str]:
        return [json.dumps({"trial": trial, **ev}, separators=(",", ":"))
                for ev in self.events]


# ---------------------------------------------------------------------------
# preparation and distribution

def prepare_initial(secret: SecretAmplitudes, layout: PartyLayout) -> PureState:
    """Secret qubit on atom 1, GHZ triples, Bell pair on the last two atoms."""
    parts = [secret.as_state(1)]
    parts.extend(ghz_state(*triple) for triple in layout.ghz_triples)
    parts.append(bell_state(*layout.bell_pair))
    return tensor(parts)


def interact_pairs(state: PureState, layout: PartyLayout,
                   schedule: InteractionSchedule) -> PureState:
    """Apply the pair gate to every cavity pair (order-independent)."""
    u = effective_unitary(schedule)
    t = state.tensor_view()
    for pair in layout.cavity_pairs:
        axes = [state.axis(a) for a in pair]
        rest = [i for i in range(state.n_sites) if i not in axes]
        t = np.transpose(t, axes + rest)
        shape = t.shape
        t = (u @ t.reshape(4, -1)).reshape(shape)
        t = np.transpose(t, np.argsort(axes + rest))
    return PureState(state.dims, state.labels, t.reshape(-1))


def _enumerate_branches(state: PureState, sites: Sequence[int]) -> list[Branch]:
    """All Z outcomes of `sites` at once, with renormalized residuals."""
    axes = [state.axis(s) for s in sites]
    rest = [i for i in range(state.n_sites) if i not in axes]
    rows = np.transpose(state.tensor_view(), axes + rest).reshape(2 ** len(axes), -1)
    probs = (np.abs(rows) ** 2).sum(axis=1)
    dims = tuple(state.dims[i] for i in rest)
    labels = tuple(state.labels[i] for i in rest)
    out = []
    for idx in range(rows.shape[0]):
        p = float(probs[idx])
        outcome = format_outcome(idx, len(axes), "Z")
        if p < PROB_FLOOR:
            out.append(Branch(outcome, 0.0, None))
        else:
            out.append(Branch(outcome, p, PureState(dims, labels, rows[idx] / math.sqrt(p))))
    return out


def run_distribution(state: PureState, layout: PartyLayout,
                     schedule: InteractionSchedule | None = None,
                     mode: str = "exhaustive",
                     rng: np.random.Generator | None = None):
    """Pair interactions followed by the dealer's Z measurement.

    Exhaustive mode returns every outcome branch; sampled mode draws one
    branch from the Born distribution.
    """
    schedule = schedule or InteractionSchedule.canonical()
    if abs(state.norm - 1.0) > ATOL_CHECK:
        raise ValueError(f"input state is not normalized (norm {state.norm!r})")
    expected = tuple(range(1, layout.atom_count + 1))
    if state.labels != expected:
        raise ValueError(f"state register {state.labels} does not match layout atoms {expected}")
    post = interact_pairs(state, layout, schedule)
    if mode == "exhaustive":
        return _enumerate_branches(post, layout.measured_atoms)
    if mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an rng")
        record, collapsed = sample_measurement(post, layout.measured_atoms, "Z", rng)
        return Branch(record.outcome, record.probability, collapsed)
    raise ValueError(f"unknown mode: {mode!r}")


# ---------------------------------------------------------------------------
# correction table

def _all_x_outcomes(n: int) -> list[str]:
    return [format_outcome(i, n, "X") for i in range(2 ** n)]


def _receiver_branches(residual: PureState, receiver_atom: int):
    """X-measure every non-receiver; yield (x string, prob, receiver vector)."""
    non_receivers = [a for a in residual.labels if a != receiver_atom]
    if not non_receivers:
        yield "", 1.0, residual
        return
    for x in _all_x_outcomes(len(non_receivers)):
        p, collapsed = project(residual, non_receivers, "X", x)
        if collapsed is None:
            continue
        yield x, p, collapsed


def derive_correction_table(layout: PartyLayout,
                            schedule: InteractionSchedule | None = None,
                            receiver_atom: int | None = None) -> CorrectionTable:
    """Brute-force the correction for every (dealer outcome, X outcomes) pair.

    Each candidate is accepted only if it restores two independent reference
    secrets to fidelity 1 (up to global phase); candidates are tried in a
    fixed order so the result is deterministic. Derivation fails loudly if
    any branch has no single-qubit correction, since that signals a model
    bug rather than a recoverable condition.
    """
    schedule = schedule or InteractionSchedule.canonical()
    if not schedule.is_canonical:
        raise ValueError("correction tables are defined at the canonical schedule "
                         "(lambda_t = pi/4, omega_t = pi)")
    receiver_atom = layout.default_receiver_atom if receiver_atom is None else receiver_atom
    if receiver_atom not in layout.distributed_atoms:
        raise ValueError(f"receiver atom {receiver_atom} is not a distributed atom")

    rng = stream(_TABLE_SECRET_SEED, "correction-table")
    secrets = [SecretAmplitudes.haar(rng) for _ in range(2)]
    # per secret: {(alice, x) -> receiver vector}
    residuals: list[dict[tuple[str, str], PureState]] = []
    for secret in secrets:
        branches = run_distribution(prepare_initial(secret, layout), layout, schedule)
        per = {}
        for br in branches:
            if br.residual is None:
                continue
            for x, _, vec in _receiver_branches(br.residual, receiver_atom):
                per[(br.outcome, x)] = vec
        residuals.append(per)

    targets = [s.as_state(receiver_atom) for s in secrets]
    entries: dict[tuple[str, str], str] = {}
    for key in residuals[0]:
        chosen = None
        for label in CANDIDATE_ORDER:
            mat = CORRECTIONS[label]
            ok = True
            for per, target in zip(residuals, targets):
                candidate = PureState((2,), (receiver_atom,), mat @ per[key].amplitudes)
                if fidelity_up_to_phase(candidate, target) < 1.0 - RECOVERY_FID_TOL:
                    ok = False
                    break
            if ok:
                chosen = label
                break
        if chosen is None:
            raise CorrectionTableError(
                f"no single-qubit correction recovers branch {key}; the residual is not of "
                "the expected two-component form")
        entries[key] = chosen

    table = CorrectionTable(layout.n_users, receiver_atom, entries)
    if len(entries) != table.expected_size:
        raise CorrectionTableError(
            f"table has {len(entries)} entries, expected {table.expected_size}")
    return table


# ---------------------------------------------------------------------------
# recovery

def run_recovery(residual: PureState, alice_outcome: str, receiver_atom: int,
                 table: CorrectionTable, secret: SecretAmplitudes,
                 mode: str = "sampled", rng: np.random.Generator | None = None):
    """X-measure the non-receivers, apply the table's correction, and score
    the receiver's state against the original secret."""
    if table.receiver_atom != receiver_atom:
        raise CorrectionTableError(
            f"table was derived for receiver atom {table.receiver_atom}, not {receiver_atom}")
    target = secret.as_state(receiver_atom)
    non_receivers = [a for a in residual.labels if a != receiver_atom]

    def finish(x: str, prob: float, vec: PureState) -> RecoveryBranch:
        pauli = table.lookup(alice_outcome, x)
        recovered = PureState((2,), (receiver_atom,), CORRECTIONS[pauli] @ vec.amplitudes)
        return RecoveryBranch(x, prob, pauli, recovered,
                              fidelity_up_to_phase(recovered, target))

    if mode == "exhaustive":
        return [finish(x, p, vec) for x, p, vec in _receiver_branches(residual, receiver_atom)]
    if mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an rng")
        if not non_receivers:
            return finish("", 1.0, residual)
        record, collapsed = sample_measurement(residual, non_receivers, "X", rng)
        return finish(record.outcome, record.probability, collapsed)
    raise ValueError(f"unknown mode: {mode!r}")


def run_exhaustive(secret: SecretAmplitudes, layout: PartyLayout,
                   receiver_atom: int | None = None,
                   schedule: InteractionSchedule | None = None,
                   table: CorrectionTable | None = None) -> list[BranchResult]:
    """Every (dealer outcome, X outcomes) branch with its joint probability."""
    schedule = schedule or InteractionSchedule.canonical()
    receiver_atom = layout.default_receiver_atom if receiver_atom is None else receiver_atom
    table = table or derive_correction_table(layout, receiver_atom=receiver_atom)
    target = secret.as_state(receiver_atom)
    results = []
    for br in run_distribution(prepare_initial(secret, layout), layout, schedule):
        if br.residual is None:
            continue
        for x, p_x, vec in _receiver_branches(br.residual, receiver_atom):
            pauli = table.lookup(br.outcome, x)
            recovered = PureState((2,), (receiver_atom,), CORRECTIONS[pauli] @ vec.amplitudes)
            results.append(BranchResult(br.outcome, x, br.probability * p_x, pauli,
                                        fidelity_up_to_phase(recovered, target)))
    return results


def run_full_trial(secret: SecretAmplitudes, layout: PartyLayout,
                   receiver_atom: int | None = None, seed: int = 0,
                   schedule: InteractionSchedule | None = None,
                   table: CorrectionTable | None = None,
                   trial: int = 0) -> ProtocolTranscript:
    """One sampled end-to-end run with a full event log.

    Trial k of one seed always draws from the stream keyed (seed, k),
    independent of how many other trials run or in what order.
    """
    schedule = schedule or InteractionSchedule.canonical()
    receiver_atom = layout.default_receiver_atom if receiver_atom is None else receiver_atom
    table = table or derive_correction_table(layout, receiver_atom=receiver_atom)
    rng = stream(seed, "protocol-trial", trial)
    transcript = ProtocolTranscript(layout.n_users, receiver_atom,
                                    schedule.lambda_t, schedule.omega_t, "sampled", seed)

    state = prepare_initial(secret, layout)
    transcript.log("prepare", atoms=list(state.labels))
    state = interact_pairs(state, layout, schedule)
    for pair in layout.cavity_pairs:
        transcript.log("interact", pair=list(pair))

    record, residual = sample_measurement(state, layout.measured_atoms, "Z", rng)
    transcript.log("alice_measure", sites=list(record.sites), outcome=record.outcome,
                   prob=record.probability)
    transcript.log("announce", sender="alice", message=record.outcome)

    x_chars = []
    for atom in (a for a in layout.distributed_atoms if a != receiver_atom):
        user = layout.atom_user(atom)
        x_rec, residual = sample_measurement(residual, (atom,), "X", rng)
        x_chars.append(x_rec.outcome)
        transcript.log("x_measure", user=user, site=atom, outcome=x_rec.outcome,
                       prob=x_rec.probability)
        transcript.log("announce", sender=f"user{user}", message=x_rec.outcome)

    x_outcomes = "".join(x_chars)
    pauli = table.lookup(record.outcome, x_outcomes)
    recovered = PureState((2,), (receiver_atom,), CORRECTIONS[pauli] @ residual.amplitudes)
    fid = fidelity_up_to_phase(recovered, secret.as_state(receiver_atom))
    receiver_user = layout.atom_user(receiver_atom)
    transcript.log("correct", user=receiver_user, site=receiver_atom, pauli=pauli)
    transcript.log("recover", user=receiver_user, fidelity=fid)
    return transcript

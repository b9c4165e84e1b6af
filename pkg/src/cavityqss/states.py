"""Dense pure-state linear algebra over labeled registers.

A register mixes two-level atoms (integer labels) with truncated bosonic
modes (string labels). Amplitudes are stored big-endian over the canonical
label order -- the site with the smallest label varies slowest -- with
ground at index 0 and excited at index 1. States are treated as immutable:
every operation returns a fresh value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

Label = Union[int, str]

ATOL_CHECK = 1e-10    # validation checks (unitarity, trace, hermiticity)
ATOL_ALGEBRA = 1e-12  # algebraic identities
PROB_FLOOR = 1e-14    # below this a measurement branch is impossible

GROUND = "g"   # basis index 0
EXCITED = "e"  # basis index 1

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
# Convention: sigma_z keeps |e> and negates |g>, so
# sigma_z (a|e> + b|g>) = a|e> - b|g>.
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
# X eigenvectors as (g, e) amplitude pairs: |X+-> = (|e> +- |g>)/sqrt(2)
_X_VECTORS = {
    "+": np.array([_INV_SQRT2, _INV_SQRT2], dtype=complex),
    "-": np.array([-_INV_SQRT2, _INV_SQRT2], dtype=complex),
}
_Z_VECTORS = {
    GROUND: np.array([1, 0], dtype=complex),
    EXCITED: np.array([0, 1], dtype=complex),
}
OUTCOME_CHARS = {"Z": (GROUND, EXCITED), "X": ("+", "-")}


def _label_key(label: Label):
    # atoms (ints) sort before mode tags (strings)
    return (0, label, "") if isinstance(label, int) else (1, 0, str(label))


def _canonical_order(labels: Sequence[Label]) -> list[int]:
    return sorted(range(len(labels)), key=lambda i: _label_key(labels[i]))


@dataclass
class PureState:
    """Normalized amplitude vector over a labeled register.

    Construction canonicalizes the site order, so two states over the same
    labels are always directly comparable.
    """

    dims: tuple[int, ...]
    labels: tuple[Label, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(self.labels)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if len(dims) != len(labels):
            raise ValueError(f"{len(dims)} dims for {len(labels)} labels")
        seen: set[Label] = set()
        for lab in labels:
            if lab in seen:
                raise ValueError(f"duplicate site label: {lab!r}")
            seen.add(lab)
        expect = int(np.prod(dims)) if dims else 1
        if amps.size != expect:
            raise ValueError(f"amplitude vector has length {amps.size}, register needs {expect}")
        order = _canonical_order(labels)
        if order != list(range(len(labels))):
            amps = np.ascontiguousarray(np.transpose(amps.reshape(dims), order)).reshape(-1)
            dims = tuple(dims[i] for i in order)
            labels = tuple(labels[i] for i in order)
        self.dims, self.labels, self.amplitudes = dims, labels, amps

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def axis(self, label: Label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown site label: {label!r}") from None

    def normalized(self) -> "PureState":
        n = self.norm
        if n < PROB_FLOOR:
            raise ValueError("cannot normalize a zero state")
        return PureState(self.dims, self.labels, self.amplitudes / n)

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)


@dataclass(frozen=True)
class MeasurementRecord:
    """One projective measurement: which sites, which basis, what came out."""

    sites: tuple[Label, ...]
    basis: str           # "Z" or "X"
    outcome: str         # one char per site: g/e for Z, +/- for X
    probability: float

    def __post_init__(self):
        if len(self.outcome) != len(self.sites):
            raise ValueError("outcome length does not match measured sites")
        if not -ATOL_CHECK <= self.probability <= 1.0 + ATOL_CHECK:
            raise ValueError(f"probability {self.probability} outside [0, 1]")


@dataclass
class DensityMatrix:
    """Hermitian, unit-trace matrix over a labeled register."""

    dims: tuple[int, ...]
    labels: tuple[Label, ...]
    matrix: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(self.labels)
        mat = np.asarray(self.matrix, dtype=complex)
        dim = int(np.prod(dims)) if dims else 1
        if mat.shape != (dim, dim):
            raise ValueError(f"matrix shape {mat.shape} does not match register dimension {dim}")
        order = _canonical_order(labels)
        if order != list(range(len(labels))):
            n = len(dims)
            t = mat.reshape(dims + dims)
            t = np.transpose(t, list(order) + [n + i for i in order])
            mat = np.ascontiguousarray(t).reshape(dim, dim)
            dims = tuple(dims[i] for i in order)
            labels = tuple(labels[i] for i in order)
        herm = float(np.max(np.abs(mat - mat.conj().T))) if dim else 0.0
        if herm > ATOL_CHECK:
            raise ValueError(f"matrix is not Hermitian: max |rho - rho^†| = {herm:.3e}")
        tr = complex(np.trace(mat))
        if abs(tr - 1.0) > ATOL_CHECK:
            raise ValueError(f"trace is {tr:.12g}, expected 1")
        self.dims, self.labels, self.matrix = dims, labels, mat

    def pure_overlap(self, state: PureState) -> float:
        """<psi|rho|psi> for a pure state over the same register."""
        if state.dims != self.dims or state.labels != self.labels:
            raise ValueError("register mismatch between density matrix and state")
        v = state.amplitudes
        return float(np.real(np.vdot(v, self.matrix @ v)))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


# ---------------------------------------------------------------------------
# constructors

def qubit_state(alpha: complex, beta: complex, label: Label) -> PureState:
    """Single qubit alpha|e> + beta|g> (stored as (g, e) = (beta, alpha))."""
    return PureState((2,), (label,), np.array([beta, alpha], dtype=complex))


def basis_qubit(char: str, label: Label) -> PureState:
    return PureState((2,), (label,), _Z_VECTORS[char].copy())


def bell_state(a: Label, b: Label) -> PureState:
    """(|ee> + |gg>)/sqrt(2) on two atoms."""
    amps = np.zeros(4, dtype=complex)
    amps[0] = amps[3] = _INV_SQRT2
    return PureState((2, 2), (a, b), amps)


def ghz_state(a: Label, b: Label, c: Label) -> PureState:
    """(|eee> + |ggg>)/sqrt(2) on three atoms."""
    amps = np.zeros(8, dtype=complex)
    amps[0] = amps[7] = _INV_SQRT2
    return PureState((2, 2, 2), (a, b, c), amps)


def fock_vacuum(label: Label, cutoff: int) -> PureState:
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[0] = 1.0
    return PureState((cutoff + 1,), (label,), amps)


def haar_random_state(labels: Sequence[Label], rng: np.random.Generator,
                      dims: Sequence[int] | None = None) -> PureState:
    dims = tuple(dims) if dims is not None else (2,) * len(labels)
    n = int(np.prod(dims))
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return PureState(dims, tuple(labels), v / np.linalg.norm(v))


# ---------------------------------------------------------------------------
# operations

def tensor(states: Iterable[PureState]) -> PureState:
    """Tensor product of disjointly labeled states, reindexed to the
    canonical (ascending-label) order."""
    states = list(states)
    if not states:
        raise ValueError("tensor needs at least one state")
    seen: set[Label] = set()
    for s in states:
        for lab in s.labels:
            if lab in seen:
                raise ValueError(f"duplicate site label: {lab!r}")
            seen.add(lab)
    amps = states[0].amplitudes
    for s in states[1:]:
        amps = np.kron(amps, s.amplitudes)
    dims = tuple(d for s in states for d in s.dims)
    labels = tuple(lab for s in states for lab in s.labels)
    return PureState(dims, labels, amps)


def apply_unitary(state: PureState, u: np.ndarray, targets: Sequence[Label]) -> PureState:
    """Apply a unitary on the subspace of `targets` (in the given order)."""
    u = np.asarray(u, dtype=complex)
    targets = list(targets)
    axes = [state.axis(t) for t in targets]
    d = int(np.prod([state.dims[a] for a in axes]))
    if u.shape != (d, d):
        raise ValueError(f"matrix shape {u.shape} does not match target dimension {d}")
    dev = float(np.max(np.abs(u.conj().T @ u - np.eye(d))))
    if dev > ATOL_CHECK:
        raise ValueError(f"matrix is not unitary: max |u^† u - I| = {dev:.3e}")
    rest = [i for i in range(state.n_sites) if i not in axes]
    t = np.transpose(state.tensor_view(), axes + rest)
    shape = t.shape
    t = (u @ t.reshape(d, -1)).reshape(shape)
    t = np.transpose(t, np.argsort(axes + rest))
    return PureState(state.dims, state.labels, t.reshape(-1))


def _outcome_vectors(basis: str) -> dict[str, np.ndarray]:
    basis = basis.upper()
    if basis == "Z":
        return _Z_VECTORS
    if basis == "X":
        return _X_VECTORS
    raise ValueError(f"unknown measurement basis: {basis!r}")


def project(state: PureState, sites: Sequence[Label], basis: str,
            outcome: str) -> tuple[float, PureState | None]:
    """Project onto a joint outcome; returns (probability, collapsed state).

    The collapsed state is renormalized with the measured sites removed from
    the register. An impossible outcome returns (0.0, None).
    """
    sites = tuple(sites)
    if len(outcome) != len(sites):
        raise ValueError(f"outcome {outcome!r} has {len(outcome)} chars for {len(sites)} sites")
    vecs = _outcome_vectors(basis)
    axes = [state.axis(s) for s in sites]
    for s, ax in zip(sites, axes):
        if state.dims[ax] != 2:
            raise ValueError(f"projective outcome chars only apply to qubit sites, not {s!r}")
    t = state.tensor_view()
    for ax, ch in sorted(zip(axes, outcome), reverse=True):
        if ch not in vecs:
            raise ValueError(f"invalid {basis}-basis outcome char {ch!r}")
        t = np.tensordot(np.conj(vecs[ch]), t, axes=([0], [ax]))
    prob = float(np.real(np.vdot(t, t)))
    if prob < PROB_FLOOR:
        return 0.0, None
    keep = [i for i in range(state.n_sites) if i not in axes]
    collapsed = PureState(tuple(state.dims[i] for i in keep),
                          tuple(state.labels[i] for i in keep),
                          (t / np.sqrt(prob)).reshape(-1))
    return prob, collapsed


def born_distribution(state: PureState, sites: Sequence[Label], basis: str) -> np.ndarray:
    """Joint outcome probabilities, big-endian over the given site order."""
    vecs = _outcome_vectors(basis)
    sites = tuple(sites)
    axes = [state.axis(s) for s in sites]
    t = state.tensor_view()
    if basis.upper() == "X":
        # rotate measured axes so that index 0 <-> "+", 1 <-> "-"
        rot = np.stack([np.conj(vecs["+"]), np.conj(vecs["-"])])
        for ax in axes:
            t = np.moveaxis(np.tensordot(rot, t, axes=([1], [ax])), 0, ax)
    rest = [i for i in range(state.n_sites) if i not in axes]
    p = np.transpose(np.abs(t) ** 2, axes + rest).reshape(2 ** len(axes), -1)
    return p.sum(axis=1)


def format_outcome(index: int, n_sites: int, basis: str) -> str:
    chars = OUTCOME_CHARS[basis.upper()]
    return "".join(chars[(index >> (n_sites - 1 - i)) & 1] for i in range(n_sites))


def parse_outcome(outcome: str, basis: str) -> int:
    chars = OUTCOME_CHARS[basis.upper()]
    idx = 0
    for ch in outcome:
        idx = (idx << 1) | chars.index(ch)
    return idx


def sample_measurement(state: PureState, sites: Sequence[Label], basis: str,
                       rng: np.random.Generator) -> tuple[MeasurementRecord, PureState | None]:
    """Draw one outcome from the Born distribution and collapse."""
    sites = tuple(sites)
    probs = np.clip(born_distribution(state, sites, basis), 0.0, None)
    probs = probs / probs.sum()
    idx = int(rng.choice(probs.size, p=probs))
    outcome = format_outcome(idx, len(sites), basis)
    prob, collapsed = project(state, sites, basis, outcome)
    return MeasurementRecord(sites, basis.upper(), outcome, prob), collapsed


def fidelity_up_to_phase(a: PureState, b: PureState) -> float:
    """|<a|b>|^2; equals 1 iff the states match up to a global phase."""
    if a.dims != b.dims or a.labels != b.labels:
        raise ValueError(f"register mismatch: {a.labels}/{a.dims} vs {b.labels}/{b.dims}")
    return float(np.abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def partial_trace(obj: PureState | DensityMatrix, keep: Sequence[Label]) -> DensityMatrix:
    """Reduced density matrix over the `keep` labels."""
    keep = tuple(keep)
    if not keep:
        raise ValueError("keep set must be non-empty")
    if isinstance(obj, PureState):
        axes = sorted(obj.axis(l) for l in keep)
        rest = [i for i in range(obj.n_sites) if i not in axes]
        t = np.transpose(obj.tensor_view(), axes + rest)
        k = int(np.prod([obj.dims[i] for i in axes]))
        m = t.reshape(k, -1)
        return DensityMatrix(tuple(obj.dims[i] for i in axes),
                             tuple(obj.labels[i] for i in axes), m @ m.conj().T)
    if isinstance(obj, DensityMatrix):
        n = len(obj.dims)
        axes = sorted(_dm_axis(obj, l) for l in keep)
        rest = [i for i in range(n) if i not in axes]
        t = obj.matrix.reshape(obj.dims + obj.dims)
        perm = axes + rest + [n + i for i in axes] + [n + i for i in rest]
        k = int(np.prod([obj.dims[i] for i in axes]))
        r = int(np.prod([obj.dims[i] for i in rest])) if rest else 1
        t = np.transpose(t, perm).reshape(k, r, k, r)
        reduced = np.einsum("arbr->ab", t)
        return DensityMatrix(tuple(obj.dims[i] for i in axes),
                             tuple(obj.labels[i] for i in axes), reduced)
    raise TypeError(f"partial_trace expects PureState or DensityMatrix, got {type(obj).__name__}")


def _dm_axis(dm: DensityMatrix, label: Label) -> int:
    try:
        return dm.labels.index(label)
    except ValueError:
        raise ValueError(f"unknown site label: {label!r}") from None

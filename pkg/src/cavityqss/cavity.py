"""Driven two-atom/cavity dynamics.

Two models of the same interaction: the exact rotating-frame Hamiltonian on
a truncated Fock space, and the strong-driving/large-detuning effective
two-atom gate. `validate_effective` quantifies how fast the gap between
them closes as detuning and drive grow.

The rotating frame is chosen at the (equal) atomic transition and drive
frequencies, which removes all explicit time dependence:

    H_rot = -delta a^† a
            + sum_j [ g (a^† S_j^- + a S_j^†) + Omega (S_j^† + S_j^-) ]

with delta = omega0 - omega1 > 0. The effective pair generator reduces on
two atoms to lam * (I + sx (x) sx) with lam = g^2 / (2 delta), preceded by a
local drive factor exp(-i Omega t sx) per atom. At drive angle
Omega t = pi the drive factor is +I on the pair, so only the exchange part
acts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .rng import stream
from .states import (
    ATOL_ALGEBRA,
    ATOL_CHECK,
    PureState,
    SIGMA_X,
    fock_vacuum,
    haar_random_state,
    partial_trace,
    tensor,
)

LEAK_TOL = 1e-6  # flagged truncation leak; advises raising the Fock cutoff

CAVITY_LABEL = "cav"

_I2 = np.eye(2, dtype=complex)
_I4 = np.eye(4, dtype=complex)

# atomic ladder operators in (g, e) index order
S_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
S_PLUS = S_MINUS.conj().T                            # |e><g|


@dataclass(frozen=True)
class CavityParams:
    """Physical parameters of one atom-pair/cavity interaction system."""

    g: float              # atom-cavity coupling
    delta: float          # detuning omega0 - omega1
    omega_rabi: float     # classical drive Rabi frequency
    omega0: float         # atomic transition frequency
    omega1: float         # cavity frequency
    omega2: float         # drive frequency (always equal to omega0)
    fock_cutoff: int = 8

    def __post_init__(self):
        if self.omega0 != self.omega2:
            raise ValueError("atomic transition and drive frequencies must be equal")
        if abs(self.delta - (self.omega0 - self.omega1)) > ATOL_CHECK * max(1.0, abs(self.omega0)):
            raise ValueError("delta must equal omega0 - omega1")
        if self.delta <= 0:
            raise ValueError("detuning must be positive (flip_detuning builds the other sign)")
        if self.g <= 0 or self.omega_rabi <= 0:
            raise ValueError("g and omega_rabi must be positive")
        if self.fock_cutoff < 2:
            raise ValueError(f"fock_cutoff must be >= 2, got {self.fock_cutoff}")

    @classmethod
    def from_ratios(cls, delta_over_g: float, omega_over_delta: float,
                    g: float = 1.0, fock_cutoff: int = 8) -> "CavityParams":
        delta = delta_over_g * g
        omega0 = 100.0 * delta  # arbitrary reference; only delta enters H_rot
        return cls(g=g, delta=delta, omega_rabi=omega_over_delta * delta,
                   omega0=omega0, omega1=omega0 - delta, omega2=omega0,
                   fock_cutoff=fock_cutoff)

    @property
    def lam(self) -> float:
        """Effective exchange rate g^2 / (2 delta)."""
        return self.g ** 2 / (2.0 * self.delta)


def flip_detuning(params: CavityParams) -> "NegativeDetuningParams":
    """Sensitivity-check variant with delta < 0 (lam < 0)."""
    return NegativeDetuningParams(params)


class NegativeDetuningParams:
    """Wrapper exposing the opposite detuning sign for sensitivity studies."""

    def __init__(self, base: CavityParams):
        self.g = base.g
        self.delta = -base.delta
        self.omega_rabi = base.omega_rabi
        self.omega0 = base.omega0
        self.omega1 = base.omega0 + base.delta
        self.omega2 = base.omega2
        self.fock_cutoff = base.fock_cutoff

    @property
    def lam(self) -> float:
        return self.g ** 2 / (2.0 * self.delta)


@dataclass(frozen=True)
class InteractionSchedule:
    """Dimensionless interaction angles, optionally bound to a real time."""

    lambda_t: float          # exchange angle lam * t
    omega_t: float           # drive angle Omega * t
    t: float | None = None   # physical time when bound to parameters

    CANONICAL_LAMBDA_T = math.pi / 4.0
    CANONICAL_OMEGA_T = math.pi

    @classmethod
    def canonical(cls) -> "InteractionSchedule":
        """The protocol's working point: lam t = pi/4, Omega t = pi."""
        return cls(cls.CANONICAL_LAMBDA_T, cls.CANONICAL_OMEGA_T)

    @classmethod
    def from_params(cls, params: CavityParams,
                    lambda_t: float = math.pi / 4.0) -> "InteractionSchedule":
        t = lambda_t / params.lam
        return cls(lambda_t, params.omega_rabi * t, t)

    @property
    def is_canonical(self) -> bool:
        return (abs(self.lambda_t - self.CANONICAL_LAMBDA_T) <= ATOL_ALGEBRA
                and abs(self.omega_t - self.CANONICAL_OMEGA_T) <= ATOL_ALGEBRA)

    def check_binding(self, params: CavityParams) -> None:
        """Verify lambda_t = lam*t and omega_t = Omega*t for the bound time."""
        if self.t is None:
            raise ValueError("schedule is not bound to a physical time")
        scale = max(1.0, abs(self.lambda_t), abs(self.omega_t))
        if (abs(self.lambda_t - params.lam * self.t) > ATOL_ALGEBRA * scale
                or abs(self.omega_t - params.omega_rabi * self.t) > ATOL_ALGEBRA * scale):
            raise ValueError("schedule angles are inconsistent with the bound parameters")


def drive_factor(omega_t: float) -> np.ndarray:
    """exp(-i omega_t sx) per atom, on the two-atom space."""
    one = math.cos(omega_t) * _I2 - 1j * math.sin(omega_t) * SIGMA_X
    return np.kron(one, one)


def exchange_factor(lambda_t: float) -> np.ndarray:
    """exp(-i lambda_t (I + sx (x) sx)) on the two-atom space."""
    sxsx = np.kron(SIGMA_X, SIGMA_X)
    return np.exp(-1j * lambda_t) * (math.cos(lambda_t) * _I4 - 1j * math.sin(lambda_t) * sxsx)


def effective_unitary(schedule: InteractionSchedule) -> np.ndarray:
    """4x4 pair gate: drive factor times exchange factor."""
    return drive_factor(schedule.omega_t) @ exchange_factor(schedule.lambda_t)


def _embed(op: np.ndarray, slot: int, n_atoms: int, n_fock: int) -> np.ndarray:
    """Place a single-site operator at `slot` of (atom_1 .. atom_n, cavity)."""
    mats = [_I2] * n_atoms + [np.eye(n_fock, dtype=complex)]
    mats[slot] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def full_hamiltonian(params: CavityParams | NegativeDetuningParams,
                     n_atoms: int = 2) -> np.ndarray:
    """Rotating-frame Hamiltonian on (atoms (x) Fock), Hermitian by construction.

    The boson operators are truncated at the Fock cutoff: elements that would
    leave the retained space are dropped, and `full_evolution` reports the
    population stuck at the top level as a leak metric.
    """
    n_fock = params.fock_cutoff + 1
    a = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), k=1).astype(complex)
    number = np.diag(np.arange(n_fock, dtype=float)).astype(complex)
    h = -params.delta * _embed(number, n_atoms, n_atoms, n_fock)
    for j in range(n_atoms):
        up = _embed(S_PLUS, j, n_atoms, n_fock)
        down = _embed(S_MINUS, j, n_atoms, n_fock)
        a_full = _embed(a, n_atoms, n_atoms, n_fock)
        h = h + params.g * (a_full.conj().T @ down + a_full @ up)
        h = h + params.omega_rabi * (up + down)
    return h


@lru_cache(maxsize=16)
def _eigensystem(params: CavityParams, n_atoms: int = 2):
    w, v = np.linalg.eigh(full_hamiltonian(params, n_atoms))
    return w, v


@dataclass
class EvolutionResult:
    state: PureState
    leak: float  # population at the top retained Fock level

    @property
    def leak_flagged(self) -> bool:
        return self.leak > LEAK_TOL


def full_evolution(params: CavityParams, t: float, initial: PureState) -> EvolutionResult:
    """Evolve an (atoms + cavity) state under the exact model.

    Protocol runs start from the cavity vacuum, but any photon content is
    accepted so that evolutions compose (t/2 twice equals t).
    """
    n_fock = params.fock_cutoff + 1
    if initial.dims[-1] != n_fock or any(d != 2 for d in initial.dims[:-1]):
        raise ValueError("initial register must be qubit atoms plus one cavity mode of the "
                         f"configured cutoff, got dims {initial.dims}")
    n_atoms = len(initial.dims) - 1
    w, v = _eigensystem(params, n_atoms)
    evolved = v @ (np.exp(-1j * w * t) * (v.conj().T @ initial.amplitudes))
    leak = float((np.abs(evolved.reshape(-1, n_fock)[:, -1]) ** 2).sum())
    return EvolutionResult(PureState(initial.dims, initial.labels, evolved), leak)


# ---------------------------------------------------------------------------
# effective-model validation

@dataclass(frozen=True)
class ValidationPoint:
    delta_over_g: float
    omega_over_delta: float
    fock_cutoff: int
    deviation: float  # 1 - mean fidelity of reduced atoms vs effective state
    leak: float       # worst truncation leak seen at this point

    def to_dict(self) -> dict:
        return {"delta_over_g": self.delta_over_g, "omega_over_delta": self.omega_over_delta,
                "fock_cutoff": self.fock_cutoff, "deviation": self.deviation, "leak": self.leak}


@dataclass(frozen=True)
class ValidationReport:
    points: tuple[ValidationPoint, ...]
    samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"ladder": [p.to_dict() for p in self.points],
                "samples": self.samples, "seed": self.seed}


DEFAULT_LADDER = ((5.0, 5.0), (10.0, 10.0), (20.0, 20.0))


def validate_effective(ladder=DEFAULT_LADDER, fock_cutoff: int = 8,
                       samples: int = 50, seed: int = 0) -> ValidationReport:
    """Monte Carlo gap between the exact model and the effective gate.

    For each (delta/g, Omega/delta) point, Haar-random two-atom states with
    the cavity in vacuum evolve for t = (pi/4)/lam under both models; the
    deviation is one minus the mean overlap of the reduced atomic state with
    the effective prediction. Sample k of point i always draws from the
    stream keyed (i, k), so reports are reproducible for a fixed seed.
    """
    ladder = tuple((float(d), float(o)) for d, o in ladder)
    if not ladder:
        raise ValueError("ladder must be non-empty")
    if samples < 10:
        raise ValueError("at least 10 samples are required")
    points = []
    for i, (d_over_g, o_over_d) in enumerate(ladder):
        params = CavityParams.from_ratios(d_over_g, o_over_d, fock_cutoff=fock_cutoff)
        schedule = InteractionSchedule.from_params(params)
        u_eff = effective_unitary(schedule)
        devs = np.empty(samples)
        worst_leak = 0.0
        for k in range(samples):
            rng = stream(seed, i, k)
            atoms = haar_random_state((1, 2), rng)
            initial = tensor([atoms, fock_vacuum(CAVITY_LABEL, fock_cutoff)])
            result = full_evolution(params, schedule.t, initial)
            rho = partial_trace(result.state, keep=(1, 2))
            target = PureState((2, 2), (1, 2), u_eff @ atoms.amplitudes)
            devs[k] = 1.0 - rho.pure_overlap(target)
            worst_leak = max(worst_leak, result.leak)
        points.append(ValidationPoint(d_over_g, o_over_d, fock_cutoff,
                                      float(devs.mean()), worst_leak))
    return ValidationReport(tuple(points), samples, seed)

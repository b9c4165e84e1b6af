"""Independent brute-force constructions used as oracles.

Everything here is built from raw index arithmetic and generic matrix
exponentials, deliberately avoiding the package's own tensor/measurement
machinery, so agreement is a real cross-check rather than a tautology.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

G = np.array([1, 0], dtype=complex)  # ground, index 0
E = np.array([0, 1], dtype=complex)  # excited, index 1

I2 = np.eye(2, dtype=complex)
S_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
S_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)   # |e><g|


def kron_chain(vecs):
    out = np.array([1.0 + 0j])
    for v in vecs:
        out = np.kron(out, v)
    return out


def pair_generators():
    """Drive and exchange generators at unit rates, built literally from the
    ladder operators: per-atom identity projectors plus the ordered double
    sum of pair-excitation and flip-flop terms with Hermitian conjugates."""
    on = {1: lambda m: np.kron(m, I2), 2: lambda m: np.kron(I2, m)}
    ident_sum = sum(on[j](np.outer(E, E.conj()) + np.outer(G, G.conj())) for j in (1, 2))
    pair_sum = np.zeros((4, 4), dtype=complex)
    for j, k in ((1, 2), (2, 1)):
        term = on[j](S_PLUS) @ on[k](S_PLUS) + on[j](S_PLUS) @ on[k](S_MINUS)
        pair_sum = pair_sum + term + term.conj().T
    exchange = 0.5 * (ident_sum + pair_sum)      # times lam
    drive = sum(on[j](S_PLUS + S_MINUS) for j in (1, 2))  # times Omega
    return drive, exchange


def pair_gate_expm(lambda_t=np.pi / 4, omega_t=np.pi):
    """Two-atom gate via generic matrix exponentials of the literal generators."""
    drive, exchange = pair_generators()
    return expm(-1j * omega_t * drive) @ expm(-1j * lambda_t * exchange)


def embed_two_atom_gate(u4, pair, n_atoms):
    """Expand a 4x4 gate on atoms `pair` (1-based) to the full register by
    explicit basis-index bookkeeping (big-endian, atom 1 slowest)."""
    dim = 2 ** n_atoms
    full = np.zeros((dim, dim), dtype=complex)
    i, j = pair
    for col in range(dim):
        bits = [(col >> (n_atoms - 1 - q)) & 1 for q in range(n_atoms)]
        small_col = (bits[i - 1] << 1) | bits[j - 1]
        for small_row in range(4):
            amp = u4[small_row, small_col]
            if amp == 0:
                continue
            nb = list(bits)
            nb[i - 1] = small_row >> 1
            nb[j - 1] = small_row & 1
            row = 0
            for bit in nb:
                row = (row << 1) | bit
            full[row, col] += amp
    return full


def layout_pairs(n_users):
    return [(1, 2)] + [(3 * k - 3, 3 * k - 1) for k in range(2, n_users + 1)]


def layout_distributed(n_users):
    return [3 * k - 2 for k in range(2, n_users + 1)] + [3 * n_users]


def brute_prepare(alpha, beta, n_users):
    """Initial register straight from sequential Kronecker products."""
    secret = beta * G + alpha * E
    ghz = np.zeros(8, dtype=complex)
    ghz[0b000] = ghz[0b111] = 1 / np.sqrt(2)
    bell = np.zeros(4, dtype=complex)
    bell[0b00] = bell[0b11] = 1 / np.sqrt(2)
    return kron_chain([secret] + [ghz] * (n_users - 1) + [bell])


def brute_post_interaction(alpha, beta, n_users, u4=None):
    psi = brute_prepare(alpha, beta, n_users)
    u4 = pair_gate_expm() if u4 is None else u4
    n_atoms = 3 * n_users
    for pair in layout_pairs(n_users):
        psi = embed_two_atom_gate(u4, pair, n_atoms) @ psi
    return psi


def brute_branches(psi, n_users):
    """Dealer-measurement branches by direct index selection.

    Returns {outcome bits string over measured atoms (ascending, 'g'/'e')
    -> (probability, unnormalized residual over distributed atoms)}.
    """
    n_atoms = 3 * n_users
    measured = sorted(a for p in layout_pairs(n_users) for a in p)
    distributed = layout_distributed(n_users)
    out = {}
    for idx, amp in enumerate(psi):
        bits = [(idx >> (n_atoms - 1 - q)) & 1 for q in range(n_atoms)]
        key = "".join("ge"[bits[a - 1]] for a in measured)
        sub = 0
        for a in distributed:
            sub = (sub << 1) | bits[a - 1]
        vec = out.setdefault(key, np.zeros(2 ** len(distributed), dtype=complex))
        vec[sub] += amp
    return {k: (float(np.vdot(v, v).real), v) for k, v in out.items()}


def random_unitary(dim, rng):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(m)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def overlap_fidelity(u, v):
    return float(abs(np.vdot(u, v)) ** 2 / (np.vdot(u, u).real * np.vdot(v, v).real))

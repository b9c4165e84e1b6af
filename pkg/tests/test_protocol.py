"""Protocol tests: preparation, distribution, correction table, recovery."""

import numpy as np
import pytest

from cavityqss.cavity import InteractionSchedule
from cavityqss.protocol import (
    CANDIDATE_ORDER,
    CORRECTIONS,
    CorrectionTable,
    CorrectionTableError,
    PartyLayout,
    SecretAmplitudes,
    derive_correction_table,
    interact_pairs,
    prepare_initial,
    run_distribution,
    run_exhaustive,
    run_full_trial,
    run_recovery,
)
from cavityqss.states import (
    PureState,
    fidelity_up_to_phase,
    partial_trace,
    project,
    qubit_state,
)

from oracle_utils import (
    brute_branches,
    brute_post_interaction,
    brute_prepare,
    overlap_fidelity,
)

ALPHA, BETA = 0.6, 0.8


def _secrets(n, seed=20):
    rng = np.random.default_rng(seed)
    return [SecretAmplitudes.haar(rng) for _ in range(n)]


class TestLayout:
    def test_three_party_instance(self):
        lay = PartyLayout(2)
        assert lay.cavity_pairs == ((1, 2), (3, 5))
        assert lay.measured_atoms == (1, 2, 3, 5)
        assert lay.distributed_atoms == (4, 6)
        assert lay.ghz_triples == ((2, 3, 4),)
        assert lay.bell_pair == (5, 6)
        assert lay.user_atom(1) == 4 and lay.user_atom(2) == 6

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_partition(self, n):
        lay = PartyLayout(n)
        flat = [a for p in lay.cavity_pairs for a in p] + list(lay.distributed_atoms)
        assert sorted(flat) == list(range(1, 3 * n + 1))

    def test_minimum_users(self):
        with pytest.raises(ValueError, match="at least 2"):
            PartyLayout(1)


class TestPrepare:
    def test_pure_excited_secret(self):
        s = prepare_initial(SecretAmplitudes(1, 0), PartyLayout(2))
        nz = s.amplitudes[np.abs(s.amplitudes) > 1e-15]
        assert len(nz) == 4
        np.testing.assert_allclose(np.abs(nz), 0.5, atol=1e-12)

    def test_generic_three_party(self):
        s = prepare_initial(SecretAmplitudes(ALPHA, BETA), PartyLayout(2))
        np.testing.assert_allclose(s.amplitudes, brute_prepare(ALPHA, BETA, 2), atol=1e-14)
        assert np.count_nonzero(np.abs(s.amplitudes) > 1e-15) == 8

    @pytest.mark.parametrize("n", [3, 4])
    def test_multi_party_against_kron_oracle(self, n):
        secret = _secrets(1, seed=n)[0]
        s = prepare_initial(secret, PartyLayout(n))
        assert s.labels == tuple(range(1, 3 * n + 1))
        np.testing.assert_allclose(s.amplitudes, brute_prepare(secret.alpha, secret.beta, n),
                                   atol=1e-14)

    def test_secret_normalization_enforced(self):
        with pytest.raises(ValueError, match="expected 1"):
            SecretAmplitudes(0.6, 0.7)


class TestDistribution:
    def test_post_selected_branch(self):
        lay = PartyLayout(2)
        branches = {b.outcome: b for b in
                    run_distribution(prepare_initial(SecretAmplitudes(ALPHA, BETA), lay), lay)}
        br = branches["eeee"]
        assert br.probability == pytest.approx(1 / 16, abs=1e-10)
        target = PureState((2, 2), (4, 6), [-BETA, 0, 0, ALPHA])  # a|ee> - b|gg>
        assert fidelity_up_to_phase(br.residual, target) == pytest.approx(1.0, abs=1e-10)
        # all-ground outcome lands in the same correction class (global sign)
        assert fidelity_up_to_phase(branches["gggg"].residual, target) == \
            pytest.approx(1.0, abs=1e-10)

    def test_all_outcomes_uniform(self):
        lay = PartyLayout(2)
        for secret in _secrets(20):
            branches = run_distribution(prepare_initial(secret, lay), lay)
            assert len(branches) == 16
            for b in branches:
                assert b.probability == pytest.approx(1 / 16, abs=1e-10)

    def test_matches_brute_force_expansion(self):
        lay = PartyLayout(2)
        branches = run_distribution(prepare_initial(SecretAmplitudes(ALPHA, BETA), lay), lay)
        oracle = brute_branches(brute_post_interaction(ALPHA, BETA, 2), 2)
        for b in branches:
            prob, raw = oracle[b.outcome]
            assert b.probability == pytest.approx(prob, abs=1e-12)
            assert overlap_fidelity(b.residual.amplitudes, raw) == pytest.approx(1.0, abs=1e-12)

    def test_exhaustive_consistent_with_project(self):
        lay = PartyLayout(2)
        state = interact_pairs(prepare_initial(SecretAmplitudes(ALPHA, BETA), lay), lay,
                               InteractionSchedule.canonical())
        for b in run_distribution(prepare_initial(SecretAmplitudes(ALPHA, BETA), lay), lay):
            prob, collapsed = project(state, lay.measured_atoms, "Z", b.outcome)
            assert b.probability == pytest.approx(prob, abs=1e-12)
            np.testing.assert_allclose(b.residual.amplitudes, collapsed.amplitudes, atol=1e-12)

    def test_sampled_branch(self):
        lay = PartyLayout(2)
        rng = np.random.default_rng(0)
        b = run_distribution(prepare_initial(SecretAmplitudes(ALPHA, BETA), lay), lay,
                             mode="sampled", rng=rng)
        assert b.probability == pytest.approx(1 / 16, abs=1e-10)
        assert b.residual.labels == (4, 6)

    def test_rejects_unnormalized_input(self):
        lay = PartyLayout(2)
        state = prepare_initial(SecretAmplitudes(ALPHA, BETA), lay)
        bad = PureState(state.dims, state.labels, state.amplitudes * 1.01)
        with pytest.raises(ValueError, match="not normalized"):
            run_distribution(bad, lay)

    def test_completeness_and_order_independence(self):
        for n in (2, 3):
            lay = PartyLayout(n)
            secret = _secrets(1, seed=50 + n)[0]
            branches = run_distribution(prepare_initial(secret, lay), lay)
            assert sum(b.probability for b in branches) == pytest.approx(1.0, abs=1e-10)
            # permuting the pair interactions changes nothing
            state = prepare_initial(secret, lay)
            forward = interact_pairs(state, lay, InteractionSchedule.canonical())
            from cavityqss.cavity import effective_unitary
            from cavityqss.states import apply_unitary
            u = effective_unitary(InteractionSchedule.canonical())
            backward = state
            for pair in reversed(lay.cavity_pairs):
                backward = apply_unitary(backward, u, pair)
            np.testing.assert_allclose(forward.amplitudes, backward.amplitudes, atol=1e-12)


class TestCorrectionTable:
    def test_three_party_table(self):
        table = derive_correction_table(PartyLayout(2))
        assert len(table.entries) == 32 == table.expected_size
        assert table.lookup("eeee", "+") == "Z"
        assert table.lookup("eeee", "-") == "I"
        # even-length chains stay within the plain Pauli alphabet
        assert set(table.entries.values()) <= {"I", "Z", "X", "XZ"}

    def test_every_entry_recovers(self):
        lay = PartyLayout(2)
        table = derive_correction_table(lay)
        for secret in _secrets(20):
            for r in run_exhaustive(secret, lay, table=table):
                assert r.fidelity >= 1 - 1e-9

    def test_three_users_needs_quarter_turns(self):
        table = derive_correction_table(PartyLayout(3))
        assert len(table.entries) == 256 == table.expected_size
        assert set(table.entries.values()) <= {"S", "SD", "SX", "SDX"}
        lay = PartyLayout(3)
        for secret in _secrets(3, seed=31):
            results = run_exhaustive(secret, lay, table=table)
            assert min(r.fidelity for r in results) >= 1 - 1e-9
            assert sum(r.probability for r in results) == pytest.approx(1.0, abs=1e-10)

    def test_requires_canonical_schedule(self):
        with pytest.raises(ValueError, match="canonical"):
            derive_correction_table(PartyLayout(2), InteractionSchedule(0.5, np.pi))

    def test_deterministic(self):
        a = derive_correction_table(PartyLayout(2))
        b = derive_correction_table(PartyLayout(2))
        assert a.to_json() == b.to_json()

    def test_missing_entry_is_hard_failure(self):
        table = derive_correction_table(PartyLayout(2))
        with pytest.raises(CorrectionTableError, match="no correction entry"):
            table.lookup("eeee", "?")

    def test_receiver_mismatch_rejected(self):
        lay = PartyLayout(2)
        table = derive_correction_table(lay, receiver_atom=6)
        residual = PureState((2, 2), (4, 6), [-BETA, 0, 0, ALPHA])
        with pytest.raises(CorrectionTableError, match="receiver atom"):
            run_recovery(residual, "eeee", 4, table, SecretAmplitudes(ALPHA, BETA))


def _predicted_correction(layout, alice_outcome, x_outcomes, receiver_atom):
    """Closed-form conjecture for the table entry, from the chain structure.

    Component A of the residual fixes the secret bit to atom 1's outcome;
    each later pair either matches its outcome (chain value propagates) or
    flips (complement propagates, one factor -i). The relative phase between
    the two components is (-i)^(2f - n) times the product of all
    non-receiver X signs.
    """
    char = dict(zip(layout.measured_atoms, alice_outcome))
    flip = {"g": "e", "e": "g"}
    chain = char[1]
    values = {}
    flips = 0
    for k, (a, b) in enumerate(layout.cavity_pairs):
        if k > 0:
            if chain == char[a]:
                chain = char[b]
            else:
                flips += 1
                chain = flip[char[b]]
        else:
            chain = char[b]
        values[layout.distributed_atoms[k]] = chain
    non_receivers = [a for a in layout.distributed_atoms if a != receiver_atom]
    signs = dict(zip(non_receivers, x_outcomes))
    sign_product = np.prod([1 if signs[a] == "+" else -1 for a in non_receivers]) \
        if non_receivers else 1
    phase = (-1j) ** (2 * flips - layout.n_users) * sign_product
    if char[1] == "e":
        w, rel = values[receiver_atom], np.conj(phase)
    else:
        w, rel = flip[values[receiver_atom]], phase
    phase_op = {1: "I", -1: "Z", 1j: "SD", -1j: "S"}[complex(np.round(rel.real), np.round(rel.imag))]
    if w == "e":
        return phase_op
    return {"I": "X", "Z": "XZ", "SD": "SDX", "S": "SX"}[phase_op]


class TestClosedFormRule:
    """The conjectured parity rule must reproduce the oracle-built table."""

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_rule_matches_table(self, n):
        lay = PartyLayout(n)
        table = derive_correction_table(lay)
        for (alice, x), pauli in table.entries.items():
            assert _predicted_correction(lay, alice, x, lay.default_receiver_atom) == pauli


class TestRecovery:
    def test_paper_chain_entry(self):
        lay = PartyLayout(2)
        table = derive_correction_table(lay)
        residual = PureState((2, 2), (4, 6), [-BETA, 0, 0, ALPHA])
        branches = run_recovery(residual, "eeee", 6, table, SecretAmplitudes(ALPHA, BETA),
                                mode="exhaustive")
        by_x = {b.x_outcomes: b for b in branches}
        assert by_x["+"].pauli == "Z" and by_x["-"].pauli == "I"
        for b in branches:
            assert b.fidelity == pytest.approx(1.0, abs=1e-10)
            assert b.probability == pytest.approx(0.5, abs=1e-10)

    def test_receiver_role_symmetry(self):
        # assigning the other user works just as well, for every branch
        lay = PartyLayout(2)
        table = derive_correction_table(lay, receiver_atom=4)
        for secret in _secrets(5, seed=77):
            results = run_exhaustive(secret, lay, receiver_atom=4, table=table)
            assert min(r.fidelity for r in results) >= 1 - 1e-9

    def test_skipping_correction_costs_fidelity(self):
        # on the (eeee, X+) branch the uncorrected state scores (|a|^2-|b|^2)^2
        lay = PartyLayout(2)
        for secret in _secrets(5, seed=78):
            state = prepare_initial(secret, lay)
            branches = {b.outcome: b for b in run_distribution(state, lay)}
            _, vec = project(branches["eeee"].residual, (4,), "X", "+")
            got = fidelity_up_to_phase(vec, secret.as_state(6))
            want = (abs(secret.alpha) ** 2 - abs(secret.beta) ** 2) ** 2
            assert got == pytest.approx(want, abs=1e-10)
        balanced = SecretAmplitudes(1 / np.sqrt(2), 1 / np.sqrt(2))
        state = prepare_initial(balanced, lay)
        branches = {b.outcome: b for b in run_distribution(state, lay)}
        _, vec = project(branches["eeee"].residual, (4,), "X", "+")
        assert fidelity_up_to_phase(vec, balanced.as_state(6)) == pytest.approx(0.0, abs=1e-10)


class TestFullTrial:
    def test_any_seed_recovers(self):
        lay = PartyLayout(2)
        table = derive_correction_table(lay)
        for seed in range(10):
            tr = run_full_trial(_secrets(1, seed=seed)[0], lay, seed=seed, table=table)
            assert tr.recovery_fidelities()[-1] >= 1 - 1e-9

    def test_fixed_seed_is_bit_identical(self):
        lay = PartyLayout(2)
        secret = _secrets(1)[0]
        a = run_full_trial(secret, lay, seed=5)
        b = run_full_trial(secret, lay, seed=5)
        assert a.to_jsonl_lines(0) == b.to_jsonl_lines(0)

    def test_event_order(self):
        tr = run_full_trial(_secrets(1)[0], PartyLayout(2), seed=1)
        kinds = [e["event"] for e in tr.events]
        assert kinds == ["prepare", "interact", "interact", "alice_measure", "announce",
                         "x_measure", "announce", "correct", "recover"]
        alice = next(e for e in tr.events if e["event"] == "alice_measure")
        assert alice["sites"] == [1, 2, 3, 5]
        assert alice["prob"] == pytest.approx(1 / 16, abs=1e-10)

    def test_perturbed_schedule_degrades_fidelity(self):
        lay = PartyLayout(2)
        table = derive_correction_table(lay)
        schedule = InteractionSchedule(np.pi / 4 + 0.05, np.pi)
        secret = _secrets(1, seed=3)[0]
        results = run_exhaustive(secret, lay, schedule=schedule, table=table)
        fids = [r.fidelity for r in results]
        assert min(fids) < 1 - 1e-9
        mean = sum(r.probability * r.fidelity for r in results) / sum(r.probability for r in results)
        assert mean < 1 - 1e-6


class TestInformationLeakage:
    def test_phase_no_signaling(self):
        # before any announcement the receiver's reduced state cannot depend
        # on the secret's phase
        lay = PartyLayout(2)
        rng = np.random.default_rng(90)
        for _ in range(10):
            v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            a, b = v / np.linalg.norm(v)
            rhos = []
            for secret in (SecretAmplitudes(a, b), SecretAmplitudes(a, -b)):
                state = interact_pairs(prepare_initial(secret, lay), lay,
                                       InteractionSchedule.canonical())
                rhos.append(partial_trace(state, keep=(6,)).matrix)
            np.testing.assert_allclose(rhos[0], rhos[1], atol=1e-10)

    def test_amplitude_leak_in_marginals(self):
        # after the dealer's announcement each user's Z marginal carries
        # {|a|^2, |b|^2}; checked against the brute-force residual
        lay = PartyLayout(2)
        secret = SecretAmplitudes(ALPHA, BETA)
        oracle = brute_branches(brute_post_interaction(ALPHA, BETA, 2), 2)
        for br in run_distribution(prepare_initial(secret, lay), lay):
            _, raw = oracle[br.outcome]
            raw = raw / np.linalg.norm(raw)
            for pos, atom in enumerate((4, 6)):
                got = np.diagonal(partial_trace(br.residual, keep=(atom,)).matrix).real
                marg = np.abs(raw.reshape(2, 2)) ** 2
                want = marg.sum(axis=1 - pos)
                np.testing.assert_allclose(sorted(got), sorted((ALPHA ** 2, BETA ** 2)),
                                           atol=1e-10)
                np.testing.assert_allclose(got, want, atol=1e-12)

import json
from itertools import permutations

import numpy as np
import pytest

from qtpc.attack import (
    AttackWeights,
    alice_fidelity_across_j,
    attack_all_inputs,
    compute_vj,
    honest_bob_alice_information,
    nine_out_of_ten,
    overlap_of,
    partition_attack,
    per_input_overlaps,
    random_unitary_overlaps,
    sequential_attack,
    step_two_fidelity,
    synthesize_cheat_unitary,
    two_sided_xor_attack,
    verify_rotation,
)
from qtpc.harness import fit_bound
from qtpc.layout import Register, TensorLayout
from qtpc.linalg import UnitaryMatrix, fidelity, unitarity_error
from qtpc.protocol import (
    FunctionTable,
    Protocol,
    alice_epr_reduced_state,
    delta_of,
    embed_operator,
    epsilon_of,
    honest_run,
)
from qtpc.zoo import (
    add_noise,
    make_ideal_one_sided,
    make_oblivious_id,
    make_one_out_of_two_ot,
    make_two_sided_xor,
    scramble_bob,
)

S2 = 1 / np.sqrt(2)


def oid(n):
    return make_ideal_one_sided(make_oblivious_id(n))


def ot1():
    return make_ideal_one_sided(make_one_out_of_two_ot(1))


# --- weights ---

def test_attack_weights():
    w = AttackWeights.from_partition(5, [[0, 1, 2], [4]])
    np.testing.assert_allclose(w.weights, [1 / 6, 1 / 6, 1 / 6, 0, 0.5])
    assert w.support() == (0, 1, 2, 4)
    with pytest.raises(ValueError):
        AttackWeights(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        AttackWeights(np.full(3, 1 / 3), partition=([0, 1], [1, 2]))
    with pytest.raises(ValueError):
        AttackWeights(np.full(3, 1 / 3), partition=([0, 1], [2]))


# --- compute_vj ---

def test_compute_vj_examples():
    lay = TensorLayout((Register("a_in", 2, "alice"), Register("b_in", 2, "bob"), Register("b_out", 2, "bob")))
    ident = Protocol(lay, FunctionTable(np.zeros((2, 2), dtype=int), 2), UnitaryMatrix.identity(8))
    v = compute_vj(ident, 1).data
    full = lay.extend(front=[Register("dice_a", 2, "dice")])
    expect = np.zeros(16)
    for i in range(2):
        expect[full.basis_index({"dice_a": i, "a_in": i, "b_in": 1})] = S2
    np.testing.assert_allclose(v, expect)
    v = compute_vj(ident, 0, [1.0, 0.0]).data
    expect = np.zeros(16)
    expect[full.basis_index({"b_in": 0})] = 1
    np.testing.assert_allclose(v, expect)
    single = make_ideal_one_sided(FunctionTable([[1, 0]], 2))
    np.testing.assert_allclose(compute_vj(single, 1).data, honest_run(single, 0, 1).data)
    with pytest.raises(IndexError):
        compute_vj(ident, 2)


# --- cheat unitary ---

def test_cheat_unitary_ideal_oblivious_id():
    p = oid(2)
    u = synthesize_cheat_unitary(p, 0, 1)
    assert u.achieved_overlap == pytest.approx(1.0, abs=1e-9)
    assert u.matrix.dim == p.bob_layout.total_dim
    bob = embed_operator(u.matrix.data, p.layout, p.bob_registers)
    for i in range(2):
        moved = bob @ honest_run(p, i, 0).data
        assert abs(np.vdot(honest_run(p, i, 1).data, moved)) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        synthesize_cheat_unitary(p, 1, 1)


def test_cheat_unitary_constant_table_relabels_j():
    p = make_ideal_one_sided(FunctionTable(np.full((3, 3), 1), 2))
    u = synthesize_cheat_unitary(p, 0, 2)
    assert u.achieved_overlap == pytest.approx(1.0, abs=1e-9)
    bl = p.bob_layout
    src = bl.basis_index({"b_in": 0, "b_out": 1})
    dst = bl.basis_index({"b_in": 2, "b_out": 1})
    assert abs(u.matrix.data[dst, src]) == pytest.approx(1.0, abs=1e-9)


def test_cheat_unitary_is_unitary_with_null_completion():
    # ideal protocols leave most of Bob's space unreachable, so the completion matters
    for p in (oid(4), ot1(), make_ideal_one_sided(FunctionTable([[0, 1, 2], [2, 2, 0]], 3))):
        for a, b in permutations(range(p.m), 2):
            u = synthesize_cheat_unitary(p, a, b)
            assert unitarity_error(u.matrix.data) < 1e-9
            assert overlap_of(p, a, b, u.matrix.data) == pytest.approx(u.achieved_overlap, abs=1e-9)


def test_uhlmann_equality_noisy(rng):
    base = oid(3)
    for tl, tm in [(0.1, 0.0), (0.3, 0.2), (0.7, 0.4)]:
        q = scramble_bob(add_noise(base, tl, tm), rng)
        for a, b in [(0, 1), (2, 0)]:
            u = synthesize_cheat_unitary(q, a, b)
            f = fidelity(alice_epr_reduced_state(q, a), alice_epr_reduced_state(q, b))
            assert u.achieved_overlap == pytest.approx(f, abs=1e-8)


def test_uhlmann_with_weights():
    q = add_noise(oid(3), 0.4, 0.1)
    w = [0.5, 0.3, 0.2]
    u = synthesize_cheat_unitary(q, 0, 1, w)
    f = fidelity(alice_epr_reduced_state(q, 0, w), alice_epr_reduced_state(q, 1, w))
    assert u.achieved_overlap == pytest.approx(f, abs=1e-8)


def test_random_unitaries_never_beat_cheat(rng):
    q = add_noise(oid(2), 0.3, 0.2)
    u = synthesize_cheat_unitary(q, 0, 1)
    rnd = random_unitary_overlaps(q, 0, 1, 1000, rng)
    assert rnd.max() <= u.achieved_overlap + 1e-9
    # perturbations near the optimum also do no better
    from scipy.linalg import expm

    d = u.matrix.dim
    for _ in range(50):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        k = expm(1e-3j * (g + g.conj().T))
        assert overlap_of(q, 0, 1, k @ u.matrix.data) <= u.achieved_overlap + 1e-9


def test_cheat_unitary_is_local(rng):
    q = add_noise(oid(2), 0.2, 0.1)
    u = synthesize_cheat_unitary(q, 0, 1)
    full = q.layout.extend(front=[Register("dice_a", q.n, "dice")])
    v = embed_operator(u.matrix.data, full, q.bob_registers)
    da = ("dice_a",) + q.alice_registers
    dim = full.dim_of(da)
    for k in range(dim):
        x = np.zeros((dim, dim))
        x[k, (k + 1) % dim] = 1.0
        big = embed_operator(x, full, da)
        assert np.abs(v @ big - big @ v).max() < 1e-12


# --- verify_rotation ---

def test_verify_rotation_ideal():
    for p in (oid(8), ot1(), make_ideal_one_sided(make_one_out_of_two_ot(2))):
        for a, b in [(0, 1), (1, 0)]:
            assert verify_rotation(synthesize_cheat_unitary(p, a, b), p).min() >= 1 - 1e-9


def test_verify_rotation_single_input():
    q = add_noise(make_ideal_one_sided(FunctionTable([[0, 1]], 2)), 0.3, 0.2)
    u = synthesize_cheat_unitary(q, 0, 1)
    f = verify_rotation(u, q)
    assert f.shape == (1,)
    # the Bob-side fidelity dominates the overlap of any two purifications
    assert f[0] >= u.achieved_overlap - 1e-9


def test_verify_rotation_dimension_mismatch():
    u = synthesize_cheat_unitary(oid(2), 0, 1)
    with pytest.raises(ValueError):
        verify_rotation(u, oid(3))


def test_nine_out_of_ten_on_noise_grid():
    base = oid(4)
    for tl in (0.05, 0.15, 0.3):
        q = add_noise(base, tl, 0.1)
        d = delta_of(q)
        u = synthesize_cheat_unitary(q, 0, 1)
        ov = per_input_overlaps(u, q)
        assert ov.mean() >= u.achieved_overlap - 1e-12
        res = nine_out_of_ten(ov, d)
        assert res["applicable"] and res["passed"]
    assert nine_out_of_ten([1.0, 1.0], 0.0) == {"applicable": False, "mean_overlap": 1.0, "fraction": 1.0, "passed": True}
    # a skewed distribution: Markov still holds when the premise does
    ov = np.array([1.0] * 9 + [0.5])
    res = nine_out_of_ten(ov, 0.06)
    assert res["applicable"] and res["fraction"] >= 0.9
    with pytest.raises(ValueError):
        nine_out_of_ten(ov, 0.1, typical_fraction=1.0)


# --- sequential attack ---

def test_sequential_attack_ot():
    rep = sequential_attack(ot1(), 1, (0, 1))
    assert rep.recovered_row == {0: 0, 1: 1}
    assert rep.success and rep.success_probability == pytest.approx(1.0, abs=1e-9)
    assert [s.j for s in rep.steps] == [0, 1]
    json.dumps(rep.to_dict())


def test_sequential_attack_constant_learns_nothing():
    p = make_ideal_one_sided(FunctionTable(np.full((3, 2), 1), 2))
    rep = sequential_attack(p, 2)
    assert rep.success and rep.info_bits == pytest.approx(0.0, abs=1e-12)


def test_sequential_attack_oblivious_id_full_information():
    reps = attack_all_inputs(oid(4))
    for i, r in enumerate(reps):
        assert r.success and r.deterministic()
        assert [r.recovered_row[j] for j in range(4)] == [int(i == j) for j in range(4)]
        assert r.info_bits == pytest.approx(2.0, abs=1e-6)
        assert r.min_step_fidelity() >= 1 - 1e-9
        assert r.delta == pytest.approx(0.0, abs=1e-9) and r.epsilon == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("conditioned", [True, False])
def test_sequential_attack_modes_and_orders(conditioned):
    p = make_ideal_one_sided(FunctionTable([[0, 1, 2], [2, 2, 0], [1, 0, 0]], 3))
    for order in [(2, 0, 1), (1, 2)]:
        for r in attack_all_inputs(p, order, conditioned=conditioned):
            assert r.success and r.deterministic()
            assert r.j_order == order


def test_sequential_attack_rejects_bad_orders():
    p = oid(3)
    for order in [(), (0, 0), (0, 3)]:
        with pytest.raises(ValueError):
            sequential_attack(p, 0, order)
    with pytest.raises(IndexError):
        sequential_attack(p, 5)


def test_sequential_attack_noisy_and_ties():
    base = oid(2)
    q = add_noise(base, 0.2, 0.3)
    for r in attack_all_inputs(q):
        assert r.success
        assert 0 < r.success_probability < 1
        assert sum(r.transcripts.values()) == pytest.approx(1.0, abs=1e-9)
        assert 0 < r.info_bits <= 1 + 1e-9


def test_recovered_row_tie_goes_to_smaller_label():
    # reference writes i into b_out; the real protocol then Hadamards b_out
    lay = TensorLayout((Register("a_in", 2, "alice"), Register("b_in", 1, "bob"), Register("b_out", 2, "bob")))
    table = FunctionTable([[0], [1]], 2)
    cnot = np.eye(4)[[0, 1, 3, 2]]
    ref = Protocol(lay, table, UnitaryMatrix(cnot))
    had = np.kron(np.eye(2), np.array([[1, 1], [1, -1]]) * S2)
    p = Protocol(lay, table, UnitaryMatrix(had @ cnot), reference=ref)
    r = sequential_attack(p, 1)
    assert r.transcripts == pytest.approx({(0,): 0.5, (1,): 0.5})
    assert r.ties == [0] and r.recovered_row[0] == 0 and not r.success


def test_step_two_fidelity_matches_product():
    q = add_noise(oid(4), 0.1, 0.15)
    f = step_two_fidelity(q, 0, 1)
    d, e = delta_of(q), epsilon_of(q, 0)
    assert f.min() >= 1 - 4 * d - e - 1e-9
    assert f.min() == pytest.approx((1 - d) * (1 - e), abs=1e-9)


def test_degradation_constants_stable():
    base = oid(3)
    rows = []
    for tl in (0.03, 0.08, 0.13):
        for tm in (0.03, 0.08, 0.13):
            q = add_noise(base, tl, tm)
            f = step_two_fidelity(q, 0, 1)
            rows.append({"n": 3, "delta": delta_of(q), "epsilon": epsilon_of(q, 0), "step2_fidelity": f.min()})
    c1, c2, res = fit_bound(rows)
    assert c1 > 0 and c2 > 0 and res < 0.05
    for sub in (rows[:6], rows[3:], rows[::2]):
        s1, s2, _ = fit_bound(sub)
        assert 0.5 * c1 <= s1 <= 1.5 * c1
        assert 0.5 * c2 <= s2 <= 1.5 * c2


# --- partition attack ---

def test_partition_attack_oblivious_id_three():
    rep = partition_attack(oid(3), 0, 1)
    by_value = {b["value"]: b for b in rep.extra["branches"]}
    b0 = by_value[0]
    assert b0["members"] == [1, 2] and b0["partition"] == [[2], [1]]
    assert b0["discrimination_probability"] > 0.99
    assert by_value[1]["no_gain"]
    assert rep.success
    json.dumps(rep.to_dict())


def test_partition_attack_no_gain():
    p = make_ideal_one_sided(FunctionTable([[0, 1], [0, 1], [1, 0]], 2))
    rep = partition_attack(p, 0, 1)
    assert all(b["no_gain"] for b in rep.extra["branches"])
    with pytest.raises(ValueError):
        partition_attack(make_ideal_one_sided(FunctionTable([[0], [1]], 2)), 0, 0)


def test_partition_attack_degrades_with_leak():
    base = oid(4)
    probs = []
    for tl in (0.0, 0.1, 0.2, 0.3):
        rep = partition_attack(add_noise(base, tl, 0.0), 0, 1)
        probs.append(min(b["discrimination_probability"] for b in rep.extra["branches"] if not b["no_gain"]))
    assert probs[0] > 0.99
    assert all(b < a for a, b in zip(probs, probs[1:]))


# --- two-sided ---

def test_two_sided_oblivious_id():
    p2 = make_two_sided_xor(make_oblivious_id(2))
    rep = two_sided_xor_attack(p2)
    assert rep.extra["alice_fidelity_fixed_input"] == pytest.approx(1.0, abs=1e-9)
    assert rep.extra["alice_fidelity_epr"] == pytest.approx(1.0, abs=1e-9)
    assert rep.extra["honest_bob_alice_info_bits"] == pytest.approx(0.0, abs=1e-9)
    assert rep.success


def test_two_sided_ot_recovers_rows():
    p2 = make_two_sided_xor(make_one_out_of_two_ot(1))
    rep = two_sided_xor_attack(p2, conditioned=False)
    assert rep.success and rep.success_probability == pytest.approx(1.0, abs=1e-9)
    for i, run in enumerate(rep.extra["runs"]):
        assert [run.recovered_row[j] for j in range(2)] == p2.table.values[i].tolist()


def test_two_sided_without_dice_reveals_j():
    # honest r: Alice's output register tracks f(i, j) XOR r, and with a fixed r it depends on j
    p2 = make_two_sided_xor(make_oblivious_id(2))
    fids = alice_fidelity_across_j(p2, bob_dice=False)
    assert fids["fixed_input"] < 1e-9
    assert honest_bob_alice_information(p2) == pytest.approx(0.0, abs=1e-12)


def test_two_sided_rejects_one_sided():
    with pytest.raises(ValueError):
        two_sided_xor_attack(oid(2))

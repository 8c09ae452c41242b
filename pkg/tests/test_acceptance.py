"""Acceptance suite: one test per criterion, named ``test_criterion_NN_*``.

A summary with one PASS/FAIL line per criterion is printed at the end of the
pytest run (see conftest.py). Run alone with ``pytest tests/test_acceptance.py``.
"""
import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from qtpc.attack import (
    alice_fidelity_across_j,
    attack_all_inputs,
    partition_attack,
    random_unitary_overlaps,
    synthesize_cheat_unitary,
    two_sided_xor_attack,
    verify_rotation,
)
from qtpc.harness import ExperimentConfig, run_experiment
from qtpc.layout import TensorLayout
from qtpc.linalg import (
    StateVector,
    fidelity,
    partial_trace,
    purify,
    reduce_pure,
    schmidt_decompose,
)
from qtpc.protocol import FunctionTable, alice_epr_reduced_state
from qtpc.zoo import (
    add_noise,
    ideal_dim,
    make_ideal_one_sided,
    make_oblivious_id,
    make_one_out_of_two_ot,
    make_two_sided_xor,
    noisy_dim,
    scramble_bob,
)

from conftest import random_density, random_state

TOL = 1e-9
EXHAUSTIVE_LIMIT = 256   # p^(n*m) at or below this: enumerate every table
SAMPLES_PER_SHAPE = 64   # otherwise: this many seeded random tables


def _tables():
    rng = np.random.default_rng(1)
    out = []
    for n, m, p in itertools.product(range(1, 5), range(1, 5), range(1, 4)):
        if p ** (n * m) <= EXHAUSTIVE_LIMIT:
            rows = itertools.product(range(p), repeat=n * m)
        else:
            rows = (rng.integers(0, p, n * m) for _ in range(SAMPLES_PER_SHAPE))
        out += [FunctionTable(np.reshape(r, (n, m)), p) for r in rows]
    return out


@pytest.fixture(scope="module")
def ideal_zoo():
    protos = [make_ideal_one_sided(t) for t in _tables()]
    protos += [make_ideal_one_sided(make_oblivious_id(n)) for n in range(2, 9)]
    protos += [make_ideal_one_sided(make_one_out_of_two_ot(k)) for k in (1, 2)]
    return protos


@pytest.fixture(scope="module")
def ideal_attacks(ideal_zoo):
    start = time.perf_counter()
    reports = [attack_all_inputs(p) for p in ideal_zoo]
    return reports, time.perf_counter() - start


def test_criterion_01_sequential_attack_ideal(ideal_zoo, ideal_attacks, record_property):
    reports, elapsed = ideal_attacks
    bad = [(p.name, r.i) for p, rs in zip(ideal_zoo, reports) for r in rs
           if not (r.success and r.deterministic(TOL))]
    record_property("detail", f"{len(ideal_zoo)} protocols, {len(bad)} failures, {elapsed:.1f}s")
    assert not bad, bad[:5]
    assert elapsed < 60


def test_criterion_02_verify_rotation(ideal_zoo, record_property):
    worst = 1.0
    for p in ideal_zoo:
        for j1, j2 in itertools.permutations(range(p.m), 2):
            worst = min(worst, verify_rotation(synthesize_cheat_unitary(p, j1, j2), p).min())
    record_property("detail", f"min per-i fidelity {worst:.12f}")
    assert worst >= 1 - TOL


def test_criterion_03_step_fidelity(ideal_attacks, record_property):
    worst = min(r.min_step_fidelity() for rs in ideal_attacks[0] for r in rs)
    record_property("detail", f"min pre/post fidelity {worst:.12f}")
    assert worst >= 1 - TOL


def test_criterion_04_alice_epr_states(ideal_zoo, record_property):
    worst = 1.0
    for p in ideal_zoo:
        states = [alice_epr_reduced_state(p, j) for j in range(p.m)]
        for a, b in itertools.combinations(states, 2):
            worst = min(worst, fidelity(a, b))
    record_property("detail", f"min fidelity {worst:.12f}")
    assert worst >= 1 - TOL


def _noisy_instances(count=50):
    rng = np.random.default_rng(5)
    out = []
    while len(out) < count:
        n, m, p = rng.integers(2, 5), rng.integers(2, 4), rng.integers(2, 4)
        table = FunctionTable(rng.integers(0, p, (n, m)), int(p))
        if noisy_dim(ideal_dim(table), m) > 1024:
            continue
        base = make_ideal_one_sided(table)
        leak, meas = rng.uniform(0, 0.6, 2)
        proto = scramble_bob(add_noise(base, leak, meas), rng)
        j1, j2 = rng.choice(m, 2, replace=False)
        out.append((proto, int(j1), int(j2)))
    return out


def test_criterion_05_optimal_overlap(record_property):
    rng = np.random.default_rng(55)
    worst_gap, worst_excess = 0.0, -np.inf
    for proto, j1, j2 in _noisy_instances():
        u = synthesize_cheat_unitary(proto, j1, j2)
        f = fidelity(alice_epr_reduced_state(proto, j1), alice_epr_reduced_state(proto, j2))
        worst_gap = max(worst_gap, abs(u.achieved_overlap - f))
        rnd = random_unitary_overlaps(proto, j1, j2, 1000, rng)
        worst_excess = max(worst_excess, rnd.max() - u.achieved_overlap)
    record_property("detail", f"max |overlap - F| {worst_gap:.2e}, max random excess {worst_excess:.3f}")
    assert worst_gap <= 1e-8
    assert worst_excess <= TOL


@pytest.fixture(scope="module")
def noise_grid():
    grid = [float(x) for x in np.linspace(0.02, 0.2, 5)]
    cfg = ExperimentConfig.from_dict({
        "protocol": {"family": "noisy", "base_family": "oblivious-id", "n": 4},
        "sweep": {"theta_leak": grid, "theta_meas": grid},
    })
    return run_experiment(cfg)


def test_criterion_06_fit_bound(noise_grid, record_property):
    fit = noise_grid["fit"]
    rows = noise_grid["aggregates"]
    smallest = min(rows, key=lambda r: (r["theta_leak"], r["theta_meas"]))
    record_property("detail", f"c1={fit['c1']:.4f} c2={fit['c2']:.4f} residual={fit['residual']:.2e} "
                              f"F2(smallest)={smallest['step2_fidelity']:.6f}")
    assert fit["c1"] > 0 and fit["c2"] > 0
    assert fit["residual"] < 0.05
    assert smallest["step2_fidelity"] > 0.99


def test_criterion_07_nine_out_of_ten(noise_grid, record_property):
    checked, failed = 0, 0
    for row in noise_grid["aggregates"]:
        ov, delta = np.array(row["per_input_overlaps"]), row["delta"]
        # ties at exactly 1 - delta count as premise met (see nine_out_of_ten)
        if delta > 0 and ov.mean() >= 1 - delta - 1e-12:
            checked += 1
            failed += np.mean(ov > 1 - 10 * delta) < 0.9
    record_property("detail", f"{checked} grid points meet the premise, {failed} violate")
    assert checked > 0 and failed == 0


def test_criterion_08_partition_attack(record_property):
    worst = 1.0
    for n in range(3, 9):
        p = make_ideal_one_sided(make_oblivious_id(n))
        for j1, j2 in itertools.permutations(range(n), 2):
            rep = partition_attack(p, j1, j2)
            for b in rep.extra["branches"]:
                if not b["no_gain"]:
                    worst = min(worst, b["discrimination_probability"])
    curves = {}
    for n in (3, 4):
        base = make_ideal_one_sided(make_oblivious_id(n))
        curves[n] = [min(b["discrimination_probability"]
                         for b in partition_attack(add_noise(base, t, 0.0), 0, 1).extra["branches"]
                         if not b["no_gain"])
                     for t in (0.0, 0.15, 0.3, 0.45)]
    record_property("detail", f"min ideal probability {worst:.12f}; degradation "
                              + ", ".join(f"n={n}: " + "/".join(f"{x:.4f}" for x in c) for n, c in curves.items()))
    assert worst >= 0.99
    for c in curves.values():
        assert all(b <= a + 1e-9 for a, b in zip(c, c[1:]))
        assert c[-1] < c[0]
        # no jumps between neighbouring grid points
        assert max(abs(np.diff(c))) < 0.25


def test_criterion_09_two_sided(record_property):
    lines = []
    for name, table in [("oblivious-id-2", make_oblivious_id(2)), ("ot-1", make_one_out_of_two_ot(1))]:
        p2 = make_two_sided_xor(table)
        rep = two_sided_xor_attack(p2)
        runs = rep.extra["runs"]
        fid = rep.extra["alice_fidelity_epr"]
        fixed = alice_fidelity_across_j(p2)["fixed_input"]
        info = rep.extra["honest_bob_alice_info_bits"]
        lines.append(f"{name}: F={min(fid, fixed):.12f} info={info:.1e}")
        assert fid >= 1 - TOL and fixed >= 1 - TOL
        for r in runs:
            assert r.success and r.deterministic(TOL)
            assert r.recovered_row == {j: table(r.i, j) for j in range(table.m)}
        assert abs(info) <= TOL
    record_property("detail", "; ".join(lines))


def test_criterion_10_ot_and_oblivious_id(record_property):
    ot = attack_all_inputs(make_ideal_one_sided(make_one_out_of_two_ot(1)))
    for r in ot:
        m0, m1 = divmod(r.i, 2)
        assert r.recovered_row == {0: m0, 1: m1}
    oid = attack_all_inputs(make_ideal_one_sided(make_oblivious_id(8)))
    record_property("detail", f"OT pairs recovered {sum(r.success for r in ot)}/4, "
                              f"oblivious-id n=8 bits {oid[0].info_bits:.9f}")
    assert oid[0].info_bits == pytest.approx(3.0, abs=1e-6)


def test_criterion_11_linear_algebra_invariants(record_property):
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    shapes = [(a, b) for a in range(1, 9) for b in range(1, 9) if a * b <= 64]
    for k in range(200):
        da, db = shapes[k % len(shapes)]
        lay = TensorLayout.of(("a", da), ("b", db))
        psi = StateVector(random_state(rng, da * db))
        # Schmidt: coefficients squared are the reduced spectra on both sides
        sf = schmidt_decompose(psi, lay, {"a"})
        np.testing.assert_allclose(sf.reconstruct().data, psi.data, atol=1e-9)
        for keep in ({"a"}, {"b"}):
            ev = np.linalg.eigvalsh(reduce_pure(psi, lay, keep).data)[::-1][: sf.rank]
            np.testing.assert_allclose(ev, sf.coefficients ** 2, atol=1e-9)
        # partial trace against an explicit einsum
        rho = random_density(rng, da * db)
        t = rho.reshape(da, db, da, db)
        np.testing.assert_allclose(partial_trace(rho, lay, {"a"}).data, np.einsum("ibjb->ij", t), atol=1e-12)
        np.testing.assert_allclose(partial_trace(rho, lay, {"b"}).data, np.einsum("aiaj->ij", t), atol=1e-12)
        # fidelity: symmetric, bounded, pure-state formula
        d = int(rng.integers(1, 65))
        r1, r2 = random_density(rng, d), random_density(rng, d)
        f12 = fidelity(r1, r2)
        assert -TOL <= f12 <= 1 + TOL and abs(f12 - fidelity(r2, r1)) <= TOL
        assert fidelity(r1, r1) >= 1 - 1e-8
        u, v = random_state(rng, d), random_state(rng, d)
        assert fidelity(np.outer(u, u.conj()), np.outer(v, v.conj())) == pytest.approx(abs(np.vdot(u, v)), abs=1e-8)
        # purification reduces back to the input
        ds = int(rng.integers(1, 9))
        r3 = random_density(rng, ds, rank=int(rng.integers(1, ds + 1)))
        pl = TensorLayout.of(("s", ds), ("e", ds))
        np.testing.assert_allclose(partial_trace(purify(r3).density(), pl, {"s"}).data, r3, atol=1e-9)
    elapsed = time.perf_counter() - start
    record_property("detail", f"200 instances per property in {elapsed:.1f}s")
    assert elapsed < 30


def test_criterion_12_reproducible_reports(tmp_path, record_property):
    cfg = {
        "protocol": {"family": "noisy", "base_family": "oblivious-id", "n": 3},
        "sweep": {"theta_leak": [0.05, 0.1], "theta_meas": [0.05, 0.1]},
        "attack": {"random_unitaries": 50},
        "seed": 7,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    blobs = []
    for k in range(2):
        out = tmp_path / f"report{k}.json"
        subprocess.run([sys.executable, "-m", "qtpc", "run", "--config", str(path), "--out", str(out)], check=True)
        blobs.append(out.read_bytes())
    record_property("detail", f"{len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}")
    assert blobs[0] == blobs[1]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))

"""Bob's cheating strategies.

Bob runs the protocol with one input, reads the function value, rotates his
own registers so that the joint state looks like a run with another input,
reads again, and so on.  The rotation is the Bob-local unitary that best maps
the dice-entangled global state for one input onto the one for the next;
when Alice's dice-side states coincide it maps them exactly.

Per-input joint states are handled as bipartite matrices ``M`` with rows on
Alice's side and columns on Bob's side: a Bob operator ``K`` acts as
``M @ K.T`` and Bob's reduced state is ``M.T @ M.conj()``.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .linalg import TOL_IDENTITY, DensityMatrix, StateVector, UnitaryMatrix, fidelity, partial_trace
from .protocol import (
    REJECT,
    Measurement,
    Protocol,
    build_f_measurement,
    check_weights,
    delta_of,
    epsilon_of,
    mutual_information,
)

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AttackWeights:
    """Amplitude-squared weights of Alice's dice over her inputs.

    With a partition, every set carries the same total weight, spread
    uniformly inside the set.
    """

    weights: np.ndarray
    partition: Optional[tuple] = None

    def __post_init__(self):
        w = check_weights(self.weights, np.asarray(self.weights).size)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if self.partition is not None:
            sets = tuple(tuple(sorted(int(i) for i in s)) for s in self.partition)
            flat = [i for s in sets for i in s]
            if any(not s for s in sets) or len(flat) != len(set(flat)):
                raise ValueError("partition sets must be nonempty and disjoint")
            expect = np.zeros_like(w)
            for s in sets:
                expect[list(s)] = 1.0 / (len(sets) * len(s))
            if np.max(np.abs(expect - w)) > TOL_IDENTITY:
                raise ValueError("weights do not match the equal-set-weight partition")
            object.__setattr__(self, "partition", sets)

    @classmethod
    def uniform(cls, n: int) -> "AttackWeights":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def on(cls, n: int, members) -> "AttackWeights":
        members = sorted(set(members))
        w = np.zeros(n)
        w[members] = 1.0 / len(members)
        return cls(w)

    @classmethod
    def from_partition(cls, n: int, sets) -> "AttackWeights":
        w = np.zeros(n)
        for s in sets:
            w[list(s)] = 1.0 / (len(sets) * len(s))
        return cls(w, tuple(sets))

    @property
    def n(self) -> int:
        return self.weights.size

    def support(self) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(self.weights > 0))


@dataclass(frozen=True, eq=False)
class CheatUnitary:
    matrix: UnitaryMatrix
    j_from: int
    j_to: int
    achieved_overlap: float
    weights: AttackWeights


@dataclass
class AttackStep:
    j: int
    label: object
    probability: float        # joint probability of the branch up to and including this outcome
    conditional: float        # probability of this outcome given the branch so far
    fidelity: float           # Bob-side fidelity between pre- and post-measurement states
    history: tuple            # labels observed before this step


@dataclass
class AttackReport:
    i: Optional[int]
    j_order: tuple
    steps: list = field(default_factory=list)
    transcripts: dict = field(default_factory=dict)
    recovered_row: dict = field(default_factory=dict)
    ties: list = field(default_factory=list)
    success: bool = False
    success_probability: float = 0.0
    info_bits: float = 0.0
    delta: Optional[float] = None
    epsilon: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def deterministic(self, tol: float = 1e-9) -> bool:
        return all(s.conditional >= 1 - tol for s in self.steps)

    def min_step_fidelity(self) -> float:
        """Worst pre/post fidelity over every branch, however unlikely."""
        return min((s.fidelity for s in self.steps), default=1.0)

    def expected_step_fidelity(self) -> float:
        """Per j, the outcome-averaged pre/post fidelity; minimum over j."""
        by_j = {}
        for s in self.steps:
            tot, acc = by_j.get(s.j, (0.0, 0.0))
            by_j[s.j] = (tot + s.probability, acc + s.probability * s.fidelity)
        return min((acc / tot for tot, acc in by_j.values() if tot > 0), default=1.0)

    def to_dict(self) -> dict:
        label = lambda x: x if isinstance(x, str) else int(x)  # noqa: E731
        return {
            "i": self.i,
            "j_order": list(self.j_order),
            "steps": [
                {"j": s.j, "label": label(s.label), "probability": s.probability,
                 "conditional": s.conditional, "fidelity": s.fidelity,
                 "history": [label(x) for x in s.history]}
                for s in self.steps
            ],
            "transcripts": [
                {"labels": [label(x) for x in k], "probability": v}
                for k, v in sorted(self.transcripts.items(), key=lambda kv: repr(kv[0]))
            ],
            "recovered_row": {str(j): (None if v is None else label(v)) for j, v in self.recovered_row.items()},
            "ties": list(self.ties),
            "success": self.success,
            "success_probability": self.success_probability,
            "info_bits": self.info_bits,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "extra": self.extra,
        }


class _Frame:
    """Per-protocol attack context with caches for measurements and cheat unitaries.

    With ``bob_dice`` Bob feeds (1/sqrt(P)) sum_r |r>_b_r |r>_dice_b into the
    random-input register, keeping the dice register (appended last on his side).
    """

    def __init__(self, p: Protocol, bob_dice: bool = False):
        if bob_dice and p.bob_random_register is None:
            raise ValueError("protocol has no random input register to entangle")
        self.p = p
        self.r_values = p.random_values if bob_dice else 1
        self.bob_dice = bob_dice
        self._meas = {}
        self._cheat = {}
        self._states = {}

    def state(self, i: int, j: int) -> np.ndarray:
        key = (i, j)
        if key not in self._states:
            p = self.p
            if self.bob_dice:
                mats = p.split(p.output_vectors([(i, j, r) for r in range(self.r_values)]))
                m = np.moveaxis(mats, 0, -1).reshape(mats.shape[1], -1) / np.sqrt(self.r_values)
            else:
                m = p.split(p.output_vectors([(i, j, 0)]))[0]
            self._states[key] = m
        return self._states[key]

    def epr(self, j: int, weights: np.ndarray) -> np.ndarray:
        blocks = np.stack([np.sqrt(w) * self.state(i, j) for i, w in enumerate(weights)])
        return blocks.reshape(-1, blocks.shape[2])

    def measurement(self, j: int) -> Measurement:
        if j not in self._meas:
            self._meas[j] = build_f_measurement(self.p, j).extended(self.r_values)
        return self._meas[j]

    def cheat(self, j1: int, j2: int, w: AttackWeights) -> CheatUnitary:
        key = (j1, j2, w.weights.tobytes(), w.partition)
        if key not in self._cheat:
            self._cheat[key] = _synthesize(self.epr(j1, w.weights), self.epr(j2, w.weights), j1, j2, w)
        return self._cheat[key]


def _polar(a: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(a)
    return u @ vh


def _synthesize(v1: np.ndarray, v2: np.ndarray, j1: int, j2: int, w: AttackWeights) -> CheatUnitary:
    # maximize |tr(C V^T)| with C = V2^dagger V1; optimum V^T = X W^dagger for C = W S X^dagger
    c = v2.conj().T @ v1
    wl, s, xh = np.linalg.svd(c)
    r = int(np.count_nonzero(s > RANK_TOL))
    v = np.conj(wl[:, :r] @ xh[:r])
    if r < c.shape[0]:
        # unitary completion between the null complements, as close to the identity as possible
        q_dom = xh[r:].T
        q_rng = np.conj(wl[:, r:])
        v = v + q_rng @ _polar(q_rng.conj().T @ q_dom) @ q_dom.conj().T
    overlap = float(abs(np.trace(c @ v.T)))
    return CheatUnitary(UnitaryMatrix(v, validate=False), j1, j2, min(1.0, overlap), w)


def _weights(p: Protocol, w) -> AttackWeights:
    if w is None:
        return AttackWeights.uniform(p.n)
    if isinstance(w, AttackWeights):
        if w.n != p.n:
            raise ValueError(f"weights cover {w.n} inputs, protocol has {p.n}")
        return w
    return AttackWeights(np.asarray(w, dtype=float))


def compute_vj(p: Protocol, j: int, w=None):
    """|v_j> = sum_i sqrt(w_i) |i>_D (x) U(|i>_A |j,0>_B) as a flat vector.

    Register order: dice, then the protocol layout.
    """
    w = _weights(p, w)
    p._check(0, j)
    vecs = p.output_vectors([(i, j, 0) for i in range(p.n)])
    return StateVector((np.sqrt(w.weights)[:, None] * vecs).reshape(-1), validate=False)


def synthesize_cheat_unitary(p: Protocol, j1: int, j2: int, w=None, *, bob_dice: bool = False) -> CheatUnitary:
    """Bob-local unitary maximizing |<v_j2| (I (x) V) |v_j1>| over his registers."""
    if j1 == j2:
        raise ValueError("j1 and j2 must differ")
    p._check(0, j1)
    p._check(0, j2)
    return _Frame(p, bob_dice).cheat(j1, j2, _weights(p, w))


def _bob_state(m: np.ndarray) -> np.ndarray:
    return m.T @ m.conj()


def _bob_fidelity(m1: np.ndarray, m2: np.ndarray) -> float:
    # both Bob states are reductions of pure states, and the matrices themselves are
    # purifications: F = || conj(M1) M2^T ||_1, an (Alice dim)-sized problem
    sv = np.linalg.svd(m1.conj() @ m2.T, compute_uv=False)
    return float(min(1.0, sv.sum()))


def per_input_overlaps(u: CheatUnitary, p: Protocol, *, bob_dice: bool = False) -> np.ndarray:
    """|<v_{i,j_to}| (I (x) V) |v_{i,j_from}>| for every i."""
    f = _Frame(p, bob_dice)
    vt = u.matrix.data.T
    return np.array([abs(np.vdot(f.state(i, u.j_to), f.state(i, u.j_from) @ vt)) for i in range(p.n)])


def verify_rotation(u: CheatUnitary, p: Protocol, w=None, *, bob_dice: bool = False) -> np.ndarray:
    """F(V rho^{i,j_from} V^dagger, rho^{i,j_to}) for every i."""
    f = _Frame(p, bob_dice)
    v = u.matrix.data
    if v.shape[0] != f.state(0, u.j_from).shape[1]:
        raise ValueError("cheat unitary does not act on this protocol's Bob registers")
    out = []
    for i in range(p.n):
        rho1 = _bob_state(f.state(i, u.j_from))
        out.append(fidelity(v @ rho1 @ v.conj().T, _bob_state(f.state(i, u.j_to))))
    return np.array(out)


def step_two_fidelity(p: Protocol, j1: int, j2: int, u: Optional[CheatUnitary] = None) -> np.ndarray:
    """F(V E(rho^{i,j1}) V^dagger, rho^{i,j2}) per i, E being Bob's non-selective f-measurement at j1."""
    u = u or synthesize_cheat_unitary(p, j1, j2)
    f = _Frame(p)
    meas = f.measurement(j1)
    v = u.matrix.data
    out = []
    for i in range(p.n):
        post = meas.channel(_bob_state(f.state(i, j1))).data
        out.append(fidelity(v @ post @ v.conj().T, _bob_state(f.state(i, j2))))
    return np.array(out)


def _consistent(p: Protocol, j_order, labels) -> list:
    return [
        i for i in range(p.n)
        if all(lab == REJECT or p.table(i, j) == lab for j, lab in zip(j_order, labels))
    ]


def _conditioned_weights(p: Protocol, base: AttackWeights, members: list) -> AttackWeights:
    if not members:
        return base
    w = np.zeros(p.n)
    w[members] = base.weights[members]
    if w.sum() <= 0:
        return AttackWeights.on(p.n, members)
    if len(members) == p.n and base.partition is not None:
        return base
    return AttackWeights(w / w.sum())


def _run(frame: _Frame, i: int, j_order: tuple, w: AttackWeights, conditioned: bool) -> AttackReport:
    p = frame.p
    branches = [(1.0, frame.state(i, j_order[0]), ())]
    steps = []
    for k, j in enumerate(j_order):
        meas = frame.measurement(j)
        nxt = j_order[k + 1] if k + 1 < len(j_order) else None
        grown = []
        for prob, m, hist in branches:
            for label, kraus in zip(meas.labels, meas.kraus):
                post = m @ kraus.T
                q = float(np.vdot(post, post).real)
                if q < 1e-14:
                    continue
                post = post / np.sqrt(q)
                steps.append(AttackStep(j, label, prob * q, q, _bob_fidelity(m, post), hist))
                labels = hist + (label,)
                if nxt is not None:
                    cw = _conditioned_weights(p, w, _consistent(p, j_order, labels)) if conditioned else w
                    post = post @ frame.cheat(j, nxt, cw).matrix.data.T
                grown.append((prob * q, post, labels))
        branches = grown

    report = AttackReport(i, tuple(j_order), steps)
    for prob, _, labels in branches:
        report.transcripts[labels] = report.transcripts.get(labels, 0.0) + prob
    truth = tuple(p.table(i, j) for j in j_order)
    report.success_probability = report.transcripts.get(truth, 0.0)
    for k, j in enumerate(j_order):
        marginal = {}
        for labels, prob in report.transcripts.items():
            if labels[k] != REJECT:
                marginal[labels[k]] = marginal.get(labels[k], 0.0) + prob
        if not marginal:
            report.recovered_row[j] = None
            continue
        best = max(marginal.values())
        winners = sorted(lab for lab, pr in marginal.items() if pr >= best - 1e-12)
        if len(winners) > 1:
            report.ties.append(j)
        report.recovered_row[j] = winners[0]
    report.success = all(report.recovered_row[j] == p.table(i, j) for j in j_order)
    return report


def _information(reports: list) -> float:
    prior = np.full(len(reports), 1.0 / len(reports))
    return mutual_information(prior, [r.transcripts for r in reports])


def _check_order(p: Protocol, j_order) -> tuple:
    j_order = tuple(range(p.m)) if j_order is None else tuple(int(j) for j in j_order)
    if not j_order or len(set(j_order)) != len(j_order) or any(not 0 <= j < p.m for j in j_order):
        raise ValueError(f"invalid j order {j_order}")
    return j_order


def attack_all_inputs(p: Protocol, j_order=None, w=None, *, conditioned: bool = True,
                      inputs=None, leakage: bool = True, bob_dice: bool = False) -> list:
    """Run the sequential attack against every Alice input (or ``inputs``).

    ``info_bits`` on each report is the mutual information between Alice's
    input (uniform over the inputs run) and Bob's transcript.
    """
    j_order = _check_order(p, j_order)
    w = _weights(p, w)
    frame = _Frame(p, bob_dice)
    inputs = range(p.n) if inputs is None else inputs
    reports = [_run(frame, int(i), j_order, w, conditioned) for i in inputs]
    info = _information(reports)
    delta = delta_of(p) if leakage and p.m >= 2 and not bob_dice else None
    eps = max(epsilon_of(p, j, frame.measurement(j)) for j in j_order) if leakage and not bob_dice else None
    for r in reports:
        r.info_bits, r.delta, r.epsilon = info, delta, eps
    return reports


def sequential_attack(p: Protocol, i: int, j_order=None, w=None, *, conditioned: bool = True) -> AttackReport:
    """Measure f at j_order[0], rotate to j_order[1], measure, ... against honest input i.

    ``conditioned`` lets each rotation depend on the values read so far.
    """
    p._check(i, 0)
    return attack_all_inputs(p, j_order, w, conditioned=conditioned)[i]


def partition_attack(p: Protocol, j1: int, j2: int) -> AttackReport:
    """For each value c read at j1, try to learn which S_k = {i : f(i, j2) = k} of S = {i : f(i, j1) = c} holds i.

    Alice's dice weights give every S_k the same total weight.
    """
    if p.m < 2:
        raise ValueError("partition attack needs m >= 2")
    if j1 == j2:
        raise ValueError("j1 and j2 must differ")
    frame = _Frame(p)
    meas1, meas2 = frame.measurement(j1), frame.measurement(j2)
    kraus1 = dict(zip(meas1.labels, meas1.kraus))
    kraus2 = dict(zip(meas2.labels, meas2.kraus))
    branches = []
    for c in sorted({p.table(i, j1) for i in range(p.n)}):
        s = [i for i in range(p.n) if p.table(i, j1) == c]
        values = sorted({p.table(i, j2) for i in s})
        entry = {"value": c, "members": s}
        if len(values) == 1:
            entry.update(no_gain=True)
            branches.append(entry)
            continue
        sets = [[i for i in s if p.table(i, j2) == k] for k in values]
        w = AttackWeights.from_partition(p.n, sets)
        u = frame.cheat(j1, j2, w)
        per_i = {}
        for i in s:
            m = frame.state(i, j1) @ kraus1[c].T
            q = float(np.vdot(m, m).real)
            if q < 1e-14:
                per_i[i] = 0.0
                continue
            m = (m / np.sqrt(q)) @ u.matrix.data.T
            hit = m @ kraus2[p.table(i, j2)].T
            per_i[i] = float(np.vdot(hit, hit).real)
        prob = float(np.mean([np.mean([per_i[i] for i in st]) for st in sets]))
        entry.update(
            no_gain=False, partition=sets, achieved_overlap=u.achieved_overlap,
            discrimination_probability=prob, min_probability=min(per_i.values()),
            per_input={str(i): v for i, v in per_i.items()},
        )
        branches.append(entry)
    report = AttackReport(None, (j1, j2))
    report.extra["branches"] = branches
    gainful = [b for b in branches if not b["no_gain"]]
    report.success = all(b["discrimination_probability"] > 1.0 / len(b["partition"]) for b in gainful)
    report.delta = delta_of(p)
    report.epsilon = max(epsilon_of(p, j1, frame.measurement(j1)), epsilon_of(p, j2, frame.measurement(j2)))
    return report


def alice_fidelity_across_j(p: Protocol, *, bob_dice: bool = True) -> dict:
    """Minimum fidelity of Alice's states across pairs of Bob inputs.

    ``fixed_input``: honest Alice with a definite i (minimum over i).
    ``epr``: Alice's dice-entangled state, uniform over i.
    """
    f = _Frame(p, bob_dice)
    pairs = list(combinations(range(p.m), 2))
    fixed = 1.0
    for i in range(p.n):
        rhos = [f.state(i, j) @ f.state(i, j).conj().T for j in range(p.m)]
        for a, b in pairs:
            fixed = min(fixed, fidelity(rhos[a], rhos[b]))
    uniform = np.full(p.n, 1.0 / p.n)
    eprs = [f.epr(j, uniform) @ f.epr(j, uniform).conj().T for j in range(p.m)]
    epr = min((fidelity(eprs[a], eprs[b]) for a, b in pairs), default=1.0)
    return {"fixed_input": fixed, "epr": epr}


def honest_bob_alice_information(p: Protocol) -> float:
    """Largest, over Alice's inputs i, information her output register carries about f(i, j).

    Bob is honest: j uniform, r uniform and classical.
    """
    if p.alice_output_register is None or p.bob_random_register is None:
        raise ValueError("protocol has no Alice output / Bob random register")
    out_reg = p.alice_output_register
    alice = p.layout.sub(p.alice_registers)
    worst = 0.0
    for i in range(p.n):
        by_value = {}
        for j in range(p.m):
            dist = 0.0
            for r in range(p.random_values):
                m = p.split(p.output_vectors([(i, j, r)]))[0]
                rho = DensityMatrix(m @ m.conj().T, validate=False)
                dist = dist + np.real(np.diag(partial_trace(rho, alice, [out_reg]).data))
            by_value.setdefault(p.table(i, j), []).append(dist / p.random_values)
        prior = np.array([len(v) for v in by_value.values()], dtype=float) / p.m
        cond = np.array([np.mean(v, axis=0) for v in by_value.values()])
        cond = np.clip(cond, 0.0, None)
        cond /= cond.sum(axis=1, keepdims=True)
        worst = max(worst, mutual_information(prior, cond))
    return worst


def two_sided_xor_attack(p2: Protocol, *, conditioned: bool = True) -> AttackReport:
    """Bob entangles r with a private dice, checks that Alice's state no longer depends on j,
    then runs the sequential attack over all j for every i."""
    if p2.family != "two-sided-xor" or p2.bob_random_register is None or p2.alice_output_register is None:
        raise ValueError("expected a protocol built by make_two_sided_xor")
    fids = alice_fidelity_across_j(p2, bob_dice=True)
    runs = attack_all_inputs(p2, None, conditioned=conditioned, leakage=False, bob_dice=True)
    report = AttackReport(None, tuple(range(p2.m)))
    report.success = all(r.success for r in runs)
    report.success_probability = float(np.mean([r.success_probability for r in runs]))
    report.info_bits = runs[0].info_bits
    report.extra.update(
        alice_fidelity_fixed_input=fids["fixed_input"],
        alice_fidelity_epr=fids["epr"],
        honest_bob_alice_info_bits=honest_bob_alice_information(p2),
        runs=runs,
    )
    return report


def overlap_of(p: Protocol, j1: int, j2: int, v: np.ndarray, w=None) -> float:
    """|<v_j2| (I (x) V) |v_j1>| for an arbitrary matrix V on Bob's registers."""
    w = _weights(p, w)
    f = _Frame(p)
    c = f.epr(j2, w.weights).conj().T @ f.epr(j1, w.weights)
    v = np.asarray(v)
    if v.shape != c.shape:
        raise ValueError(f"operator shape {v.shape} does not match Bob's dim {c.shape[0]}")
    return float(abs(np.trace(c @ v.T)))


def random_unitary_overlaps(p: Protocol, j1: int, j2: int, count: int, rng, w=None) -> np.ndarray:
    """Overlaps reached by ``count`` Haar-random unitaries on Bob's registers."""
    from scipy.stats import unitary_group

    w = _weights(p, w)
    f = _Frame(p)
    c = f.epr(j2, w.weights).conj().T @ f.epr(j1, w.weights)
    vs = unitary_group.rvs(c.shape[0], size=count, random_state=rng).reshape(count, *c.shape)
    # tr(C V^T) = sum_ab C_ab V_ba
    return np.abs(np.einsum("ab,kba->k", c, vs))


def nine_out_of_ten(overlaps, delta: float, typical_fraction: float = 0.1) -> dict:
    """Markov check: if the mean overlap is at least 1 - delta then at least 1 - t of
    the inputs have overlap > 1 - delta / t, t being ``typical_fraction``.

    The non-strict premise still implies the conclusion and keeps the check
    meaningful when every overlap sits exactly at 1 - delta.
    """
    if not 0 < typical_fraction < 1:
        raise ValueError("typical_fraction must lie in (0, 1)")
    ov = np.asarray(overlaps, dtype=float)
    mean = float(ov.mean())
    applicable = bool(delta > 0 and mean >= 1 - delta - 1e-12)
    frac = float(np.mean(ov > 1 - delta / typical_fraction)) if delta > 0 else 1.0
    return {
        "applicable": applicable,
        "mean_overlap": mean,
        "fraction": frac,
        "passed": (not applicable) or frac >= 1 - typical_fraction,
    }

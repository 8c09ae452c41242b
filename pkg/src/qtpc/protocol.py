"""Two-party computations as one global unitary over named registers.

Honest runs, the reduced states each party holds, Bob's measurement of the
function value, and the leakage figures delta (how well a dice-entangling
Alice can tell Bob's inputs apart) and epsilon (how much Bob's measurement
disturbs his own state).
"""

from dataclasses import dataclass, field
from itertools import combinations
from math import prod
from typing import Optional, Sequence

import numpy as np

from .layout import TensorLayout
from .linalg import (
    TOL_CONSTRUCT,
    TOL_IDENTITY,
    DensityMatrix,
    StateVector,
    UnitaryMatrix,
    fidelity,
    psd_sqrt,
)

REJECT = "reject"
SUPPORT_OVERLAP_TOL = 1e-8
DICE_A = "dice_a"
DICE_B = "dice_b"


@dataclass(frozen=True, eq=False)
class FunctionTable:
    """The prescribed f(i, j) in {0..p-1}, for i < n (Alice) and j < m (Bob)."""

    values: np.ndarray
    p: int

    def __post_init__(self):
        v = np.array(self.values, dtype=np.int64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"table must be a nonempty n x m array, got shape {v.shape}")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if v.min() < 0 or v.max() >= self.p:
            raise ValueError(f"table entries must lie in [0, {self.p})")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_rows(cls, rows, p: Optional[int] = None) -> "FunctionTable":
        v = np.asarray(rows, dtype=np.int64)
        return cls(v, int(v.max()) + 1 if p is None else p)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def __call__(self, i: int, j: int) -> int:
        return int(self.values[i, j])

    def row_classes(self) -> np.ndarray:
        """Index of each i's row among the distinct rows, in first-seen order."""
        seen = {}
        out = np.empty(self.n, dtype=np.int64)
        for i, row in enumerate(map(tuple, self.values)):
            out[i] = seen.setdefault(row, len(seen))
        return out

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "p": self.p, "table": self.values.reshape(-1).tolist()}


@dataclass(frozen=True, eq=False)
class Protocol:
    layout: TensorLayout
    table: FunctionTable
    unitary: UnitaryMatrix
    alice_input_register: str = "a_in"
    bob_input_register: str = "b_in"
    bob_output_register: str = "b_out"
    noise: tuple = (0.0, 0.0)
    alice_output_register: Optional[str] = None
    bob_random_register: Optional[str] = None
    reference: Optional["Protocol"] = None
    family: str = "custom"
    name: str = ""

    def __post_init__(self):
        lay = self.layout
        if not lay.owned_by("alice") or not lay.owned_by("bob"):
            raise ValueError("protocol layout needs alice-owned and bob-owned registers")
        if set(lay.owned_by("alice", "bob")) != set(lay.names):
            raise ValueError("protocol registers must all be owned by alice or bob")
        if self.unitary.dim != lay.total_dim:
            raise ValueError(f"unitary dim {self.unitary.dim} != layout dim {lay.total_dim}")
        checks = [
            (self.alice_input_register, "alice", self.table.n),
            (self.bob_input_register, "bob", self.table.m),
            (self.bob_output_register, "bob", self.table.p),
        ]
        if self.alice_output_register is not None:
            checks.append((self.alice_output_register, "alice", self.table.p))
        if self.bob_random_register is not None:
            checks.append((self.bob_random_register, "bob", 1))
        for name, owner, need in checks:
            reg = lay.register(name)
            if reg.owner != owner:
                raise ValueError(f"register {name!r} must be owned by {owner}")
            if reg.dim < need:
                raise ValueError(f"register {name!r} has dim {reg.dim} < {need}")
        tl, tm = self.noise
        if not (0 <= tl <= np.pi / 2 and 0 <= tm <= np.pi / 2):
            raise ValueError(f"noise angles {self.noise} outside [0, pi/2]")

    @property
    def n(self) -> int:
        return self.table.n

    @property
    def m(self) -> int:
        return self.table.m

    @property
    def alice_registers(self) -> tuple:
        return self.layout.owned_by("alice")

    @property
    def bob_registers(self) -> tuple:
        return self.layout.owned_by("bob")

    @property
    def bob_layout(self) -> TensorLayout:
        return self.layout.sub(self.bob_registers)

    @property
    def random_values(self) -> int:
        """Number of values of Bob's private random input (1 if none)."""
        if self.bob_random_register is None:
            return 1
        return self.table.p

    def basis_index(self, i: int, j: int, r: int = 0) -> int:
        self._check(i, j)
        values = {self.alice_input_register: i, self.bob_input_register: j}
        if self.bob_random_register is not None:
            values[self.bob_random_register] = r
        elif r:
            raise ValueError("protocol has no random register")
        return self.layout.basis_index(values)

    def _check(self, i, j):
        if not 0 <= i < self.n:
            raise IndexError(f"alice input {i} out of range [0, {self.n})")
        if not 0 <= j < self.m:
            raise IndexError(f"bob input {j} out of range [0, {self.m})")

    def output_vectors(self, inputs: Sequence[tuple]) -> np.ndarray:
        """Rows U|i>|j, r, 0...> for each (i, j, r) in ``inputs``."""
        idx = [self.basis_index(*x) for x in inputs]
        return self.unitary.data[:, idx].T

    def split(self, vecs: np.ndarray) -> np.ndarray:
        """Stack of flat protocol vectors -> array (k, alice dim, bob dim)."""
        vecs = np.atleast_2d(vecs)
        k = vecs.shape[0]
        lay = self.layout
        names = lay.names
        a_ax = [1 + q for q, nm in enumerate(names) if lay.register(nm).owner == "alice"]
        b_ax = [1 + q for q, nm in enumerate(names) if lay.register(nm).owner == "bob"]
        t = vecs.reshape((k,) + lay.dims).transpose([0] + a_ax + b_ax)
        da = prod(lay.dims[q - 1] for q in a_ax)
        return t.reshape(k, da, -1)


def honest_run(p: Protocol, i: int, j: int, r: int = 0) -> StateVector:
    """|v_ij> = U(|i>_A (x) |j, 0>_B); ``r`` is Bob's random input when the protocol has one."""
    return StateVector(p.output_vectors([(i, j, r)])[0], validate=False)


def bob_reduced_state(p: Protocol, i: int, j: int, r: int = 0) -> DensityMatrix:
    m = p.split(p.output_vectors([(i, j, r)]))[0]
    return DensityMatrix(m.T @ m.conj(), validate=False)


def check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got {w.shape[0]}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > TOL_IDENTITY:
        raise ValueError("weights must be nonnegative and sum to 1")
    return w


def epr_matrix(p: Protocol, j: int, weights=None) -> np.ndarray:
    """Bipartite matrix of sum_i sqrt(w_i)|i>_D U(|i>_A|j,0>_B): rows (dice, alice), cols bob."""
    w = np.full(p.n, 1.0 / p.n) if weights is None else check_weights(weights, p.n)
    blocks = p.split(p.output_vectors([(i, j, 0) for i in range(p.n)]))
    blocks = blocks * np.sqrt(w)[:, None, None]
    return blocks.reshape(-1, blocks.shape[2])


def alice_epr_reduced_state(p: Protocol, j: int, weights=None) -> DensityMatrix:
    """Alice's state on dice (x) her registers after the dice-entangling attack with Bob input j."""
    p._check(0, j)
    mat = epr_matrix(p, j, weights)
    return DensityMatrix(mat @ mat.conj().T, validate=False)


def delta_of(p: Protocol) -> float:
    """1 - min over pairs j1 < j2 of the fidelity of Alice's dice-attack states."""
    if p.m < 2:
        raise ValueError("delta needs at least two Bob inputs")
    states = [alice_epr_reduced_state(p, j) for j in range(p.m)]
    worst = min(fidelity(states[a], states[b]) for a, b in combinations(range(p.m), 2))
    return max(0.0, 1.0 - worst)


@dataclass(frozen=True, eq=False)
class Measurement:
    """Labelled measurement operators on Bob's registers.

    ``outcomes`` holds (label, effect) pairs; for a projective measurement
    the effects are orthogonal projectors.
    """

    outcomes: tuple
    projective: bool = True
    kraus: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not self.outcomes:
            raise ValueError("measurement needs at least one outcome")
        dim = self.outcomes[0][1].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for label, e in self.outcomes:
            if e.shape != (dim, dim):
                raise ValueError("measurement operators differ in shape")
            if np.linalg.norm(e - e.conj().T) > TOL_IDENTITY:
                raise ValueError(f"operator for {label!r} is not Hermitian")
            if np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0] < -TOL_CONSTRUCT:
                raise ValueError(f"operator for {label!r} is not PSD")
            total += e
        if np.linalg.norm(total - np.eye(dim)) > TOL_IDENTITY:
            raise ValueError("measurement operators do not sum to the identity")
        if not self.kraus:
            ks = tuple(e if self.projective else psd_sqrt(e) for _, e in self.outcomes)
            object.__setattr__(self, "kraus", ks)

    @property
    def dim(self) -> int:
        return self.outcomes[0][1].shape[0]

    @property
    def labels(self) -> tuple:
        return tuple(label for label, _ in self.outcomes)

    def effect(self, label):
        for lab, e in self.outcomes:
            if lab == label:
                return e
        raise KeyError(label)

    def channel(self, rho) -> DensityMatrix:
        """Non-selective action: sum_k K rho K^dagger."""
        r = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
        out = sum(k @ r @ k.conj().T for k in self.kraus)
        return DensityMatrix(out, validate=False)

    def extended(self, extra_dim: int) -> "Measurement":
        """Same measurement with an untouched register of ``extra_dim`` appended."""
        if extra_dim == 1:
            return self
        eye = np.eye(extra_dim)
        return Measurement(
            tuple((lab, np.kron(e, eye)) for lab, e in self.outcomes),
            self.projective,
            tuple(np.kron(k, eye) for k in self.kraus),
        )


def measure(state, meas: Measurement) -> list:
    """Outcome list of (label, probability, post-measurement state or None)."""
    r = state.data if isinstance(state, DensityMatrix) else np.asarray(state)
    if r.shape != (meas.dim, meas.dim):
        raise ValueError(f"state dim {r.shape[0]} != measurement dim {meas.dim}")
    out = []
    for (label, _), k in zip(meas.outcomes, meas.kraus):
        post = k @ r @ k.conj().T
        prob = float(np.trace(post).real)
        if prob > 1e-15:
            out.append((label, prob, DensityMatrix(post / prob, validate=False)))
        else:
            out.append((label, max(prob, 0.0), None))
    return out


def _orthonormal_span(vectors: np.ndarray, tol: float = TOL_CONSTRUCT) -> np.ndarray:
    if vectors.size == 0:
        return vectors
    u, s, _ = np.linalg.svd(vectors, full_matrices=False)
    return u[:, s > tol * max(1.0, s[0])]


def _complement_projector(dim: int, projectors) -> np.ndarray:
    rest = np.eye(dim, dtype=complex) - sum(projectors)
    return 0.5 * (rest + rest.conj().T)


def embed_operator(op: np.ndarray, layout: TensorLayout, names: Sequence[str]) -> np.ndarray:
    """Lift an operator on registers ``names`` (layout order) to the whole layout."""
    names = [n for n in layout.names if n in set(names)]
    rest = [n for n in layout.names if n not in set(names)]
    if not rest:
        return op
    full = np.kron(op, np.eye(layout.dim_of(rest)))
    order = names + rest
    axes = [order.index(n) for n in layout.names]
    dims = [layout.register(n).dim for n in order]
    nreg = len(order)
    t = full.reshape(dims * 2).transpose(axes + [nreg + a for a in axes])
    return t.reshape(full.shape)


def _support_basis(ref: Protocol, i: int, j: int) -> np.ndarray:
    mats = ref.split(ref.output_vectors([(i, j, r) for r in range(ref.random_values)]))
    return np.concatenate([mm.T for mm in mats], axis=1)


def build_f_measurement(p: Protocol, j: int, *, on_overlap: str = "raise") -> Measurement:
    """Bob's measurement of f(i, j) on his registers.

    For each value c the projector onto the span of the supports of Bob's
    states {rho^{i,j} : f(i, j) = c} in the noiseless reference protocol; the
    orthogonal complement is the reject outcome.  Registers that the
    reference lacks (noise ancillas) are left untouched.  When supports of
    different values overlap, ``on_overlap="pgm"`` falls back to the
    pretty-good measurement of the class-averaged states.
    """
    ref = p.reference or p
    p._check(0, j)
    labels = sorted({ref.table(i, j) for i in range(ref.n)})
    bases = {}
    for c in labels:
        vecs = np.concatenate([_support_basis(ref, i, j) for i in range(ref.n) if ref.table(i, j) == c], axis=1)
        bases[c] = _orthonormal_span(vecs)
    overlap = max(
        (np.linalg.norm(bases[a].conj().T @ bases[b], 2) for a, b in combinations(labels, 2)),
        default=0.0,
    )
    dim = ref.bob_layout.total_dim
    if overlap > SUPPORT_OVERLAP_TOL:
        if on_overlap != "pgm":
            raise ValueError(
                f"supports of distinct values overlap ({overlap:.3g}) for j={j}; "
                "the reference protocol does not reveal f unambiguously"
            )
        states = []
        for c in labels:
            members = [i for i in range(ref.n) if ref.table(i, j) == c]
            rho = sum(bob_reduced_state(ref, i, j).data for i in members) / len(members)
            states.append((len(members) / ref.n, DensityMatrix(rho, validate=False)))
        pgm = build_pgm(states)
        outcomes = [(labels[k] if isinstance(k, int) else k, e) for k, e in pgm.outcomes]
        meas = Measurement(tuple(outcomes), projective=False)
    else:
        projs = [(c, bases[c] @ bases[c].conj().T) for c in labels]
        rest = _complement_projector(dim, [pr for _, pr in projs])
        if np.linalg.norm(rest) > TOL_CONSTRUCT:
            projs.append((REJECT, rest))
        meas = Measurement(tuple(projs), projective=True)
    if ref is p:
        return meas
    return _embed_measurement(meas, p, ref)



def _embed_measurement(meas: Measurement, p: Protocol, ref: Protocol) -> Measurement:
    for name in ref.bob_registers:
        if name not in p.layout or p.layout.register(name).dim != ref.layout.register(name).dim:
            raise ValueError(f"reference register {name!r} missing from protocol")
    bl = p.bob_layout
    lift = lambda e: embed_operator(e, bl, ref.bob_registers)  # noqa: E731
    return Measurement(
        tuple((lab, lift(e)) for lab, e in meas.outcomes),
        meas.projective,
        tuple(lift(k) for k in meas.kraus),
    )


def build_pgm(states) -> Measurement:
    """Pretty-good measurement for weighted states [(w_k, rho_k), ...].

    E_k = S^-1/2 w_k rho_k S^-1/2 with S = sum_k w_k rho_k, inverse taken on
    the support of S; whatever is left of the identity becomes ``reject``.
    """
    if not states:
        raise ValueError("need at least one state")
    ws = np.array([w for w, _ in states], dtype=float)
    rhos = [r.data if isinstance(r, DensityMatrix) else np.asarray(r, dtype=complex) for _, r in states]
    if np.any(ws <= 0) or abs(ws.sum() - 1.0) > TOL_IDENTITY:
        raise ValueError("weights must be positive and sum to 1")
    if len({r.shape for r in rhos}) != 1:
        raise ValueError("states differ in dimension")
    s = sum(w * r for w, r in zip(ws, rhos))
    s_inv_half = psd_sqrt(s, power=-0.5)
    effects = []
    for k, (w, r) in enumerate(zip(ws, rhos)):
        e = s_inv_half @ (w * r) @ s_inv_half
        effects.append((k, 0.5 * (e + e.conj().T)))
    rest = _complement_projector(s.shape[0], [e for _, e in effects])
    if np.linalg.norm(rest) > TOL_CONSTRUCT:
        effects.append((REJECT, rest))
    projective = all(np.linalg.norm(e @ e - e) < TOL_IDENTITY for _, e in effects)
    return Measurement(tuple(effects), projective=projective)


def epsilon_of(p: Protocol, j: int, meas: Optional[Measurement] = None) -> float:
    """1 - min_i F(rho^{i,j}, E(rho^{i,j})) for Bob's f-measurement channel E."""
    meas = meas or build_f_measurement(p, j)
    worst = 1.0
    for i in range(p.n):
        rho = bob_reduced_state(p, i, j)
        worst = min(worst, fidelity(rho, meas.channel(rho)))
    return max(0.0, 1.0 - worst)


def _entropy(dist: np.ndarray) -> float:
    d = dist[dist > 0]
    return float(-(d * np.log2(d)).sum())


def mutual_information(prior, conditional) -> float:
    """I(I; O) in bits from p(i) and the per-i outcome distributions.

    ``conditional`` is either an (n, k) array or a list of {outcome: prob} dicts.
    """
    prior = np.asarray(prior, dtype=float).reshape(-1)
    if isinstance(conditional, np.ndarray) or (len(conditional) and not isinstance(conditional[0], dict)):
        cond = np.asarray(conditional, dtype=float)
    else:
        keys = sorted({k for d in conditional for k in d}, key=repr)
        cond = np.array([[d.get(k, 0.0) for k in keys] for d in conditional], dtype=float)
    if cond.ndim != 2 or cond.shape[0] != prior.size:
        raise ValueError("conditional must have one distribution per prior entry")
    if np.any(prior < 0) or abs(prior.sum() - 1.0) > TOL_IDENTITY:
        raise ValueError("prior is not normalized")
    if np.any(cond < 0) or np.any(np.abs(cond.sum(axis=1) - 1.0) > TOL_IDENTITY):
        raise ValueError("conditional distributions are not normalized")
    joint_out = prior @ cond
    h_cond = sum(pi * _entropy(row) for pi, row in zip(prior, cond))
    return max(0.0, _entropy(joint_out) - h_cond)

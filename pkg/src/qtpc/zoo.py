"""Concrete protocols: ideal one-sided computations, oblivious transfer,
oblivious identification, the XOR two-sided reduction and a noisy family.

Register conventions (all zoo protocols):

    a_in   alice  dim n    Alice's input i
    b_in   bob    dim m    Bob's input j
    b_out  bob    dim p    value written for Bob
    b_row  bob    dim R    which distinct row of the table i has

The ideal construction writes both f(i, j) and the row class of i into Bob's
registers and never touches Alice's.  Writing the row class is what makes
Alice's dice-entangled state independent of j for every table: with b_out
alone the coherence between i and i' survives exactly when
f(i, j) == f(i', j), which generally depends on j.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.stats import unitary_group

from .layout import Register, TensorLayout
from .linalg import UnitaryMatrix
from .protocol import FunctionTable, Protocol, embed_operator

FAMILIES = ("ideal", "ot", "oblivious-id", "two-sided-xor", "noisy")
DEFAULT_DIM_CAP = 4096


@dataclass(frozen=True)
class ZooFamily:
    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown family {self.kind!r}; expected one of {FAMILIES}")
        prm = self.params
        if self.kind == "ot" and int(prm.get("k", 1)) < 1:
            raise ValueError("ot needs k >= 1")
        if self.kind == "oblivious-id" and int(prm.get("n", 2)) < 2:
            raise ValueError("oblivious-id needs n >= 2")
        for key in ("theta_leak", "theta_meas"):
            if key in prm and not 0 <= float(prm[key]) <= np.pi / 2:
                raise ValueError(f"{key} must lie in [0, pi/2]")


def _permutation(layout: TensorLayout, fn) -> UnitaryMatrix:
    """Unitary of the basis permutation ``fn(values: dict of index arrays) -> dict``."""
    dim = layout.total_dim
    grids = np.unravel_index(np.arange(dim), layout.dims)
    src = dict(zip(layout.names, grids))
    dst = fn(dict(src))
    target = np.ravel_multi_index([dst[n] for n in layout.names], layout.dims)
    if np.unique(target).size != dim:
        raise AssertionError("register map is not a permutation")
    u = np.zeros((dim, dim), dtype=complex)
    u[target, np.arange(dim)] = 1.0
    return UnitaryMatrix(u, validate=False)


def ideal_dim(table: FunctionTable) -> int:
    return table.n * table.m * table.p * int(table.row_classes().max() + 1)


def make_ideal_one_sided(table: FunctionTable, *, name: str = "") -> Protocol:
    """U |i>_A |j, 0, 0>_B = |i>_A |j, f(i,j), row(i)>_B, Alice's registers untouched."""
    rows = table.row_classes()
    n_rows = int(rows.max() + 1)
    layout = TensorLayout((
        Register("a_in", table.n, "alice"),
        Register("b_in", table.m, "bob"),
        Register("b_out", table.p, "bob"),
        Register("b_row", n_rows, "bob"),
    ))
    vals = table.values

    def step(v):
        a, j = v["a_in"], v["b_in"]
        v["b_out"] = (v["b_out"] + vals[a, j]) % table.p
        v["b_row"] = (v["b_row"] + rows[a]) % n_rows
        return v

    return Protocol(layout, table, _permutation(layout, step), family="ideal", name=name or "ideal")


def make_one_out_of_two_ot(k: int, *, dim_cap: int = DEFAULT_DIM_CAP) -> FunctionTable:
    """Alice holds (m0, m1) encoded as i = m0 * 2**k + m1; Bob's bit j selects m_j."""
    if k < 1:
        raise ValueError("k must be >= 1")
    size = 2 ** k
    dim = 2 * size ** 5  # n * m * p * rows with n = rows = 4**k
    if dim > dim_cap:
        raise ValueError(f"one-out-of-two OT with k={k} needs dim {dim} > cap {dim_cap}")
    i = np.arange(size * size)
    return FunctionTable(np.stack([i // size, i % size], axis=1), size)


def make_oblivious_id(n: int) -> FunctionTable:
    """Password equality: f(i, j) = 1 iff i == j."""
    if n < 2:
        raise ValueError("oblivious identification needs n >= 2")
    return FunctionTable(np.eye(n, dtype=np.int64), 2)


def make_two_sided_xor(table: FunctionTable, *, name: str = "") -> Protocol:
    """Both parties receive F(i, j, r) = f(i, j) XOR r; r is Bob's extra input.

    Bob's registers additionally hold r (``b_r``) and the row class of i.
    """
    p = table.p
    if p & (p - 1):
        raise ValueError(f"p = {p} is not a power of two")
    rows = table.row_classes()
    n_rows = int(rows.max() + 1)
    layout = TensorLayout((
        Register("a_in", table.n, "alice"),
        Register("a_out", p, "alice"),
        Register("b_in", table.m, "bob"),
        Register("b_r", p, "bob"),
        Register("b_out", p, "bob"),
        Register("b_row", n_rows, "bob"),
    ))
    vals = table.values

    def step(v):
        big_f = vals[v["a_in"], v["b_in"]] ^ v["b_r"]
        v["a_out"] = v["a_out"] ^ big_f
        v["b_out"] = v["b_out"] ^ big_f
        v["b_row"] = (v["b_row"] + rows[v["a_in"]]) % n_rows
        return v

    return Protocol(
        layout, table, _permutation(layout, step),
        alice_output_register="a_out", bob_random_register="b_r",
        family="two-sided-xor", name=name or "two-sided-xor",
    )


def _givens(layout: TensorLayout, x_idx: np.ndarray, y_idx: np.ndarray, theta: float) -> sp.csr_matrix:
    """Rotation by theta in each plane span{|x_k>, |y_k>}: |x> -> cos|x> + sin|y>."""
    dim = layout.total_dim
    c, s = np.cos(theta), np.sin(theta)
    untouched = np.setdiff1d(np.arange(dim), np.concatenate([x_idx, y_idx]))
    rows = np.concatenate([untouched, x_idx, y_idx, x_idx, y_idx])
    cols = np.concatenate([untouched, x_idx, x_idx, y_idx, y_idx])
    data = np.concatenate([
        np.ones(untouched.size), np.full(x_idx.size, c), np.full(x_idx.size, s),
        np.full(x_idx.size, -s), np.full(x_idx.size, c),
    ]).astype(complex)
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


def noisy_dim(base_dim: int, m: int) -> int:
    return base_dim * (m + 1) * 4


def add_noise(p: Protocol, theta_leak: float, theta_meas: float, *, dim_cap: int = DEFAULT_DIM_CAP) -> Protocol:
    """Compose a protocol with two coherent imperfections.

    Leak: an Alice ancilla ``a_leak`` (dim m+1, blank 0) and a Bob flag
    ``b_flag``; for each j, |j>_b_in |0>_a_leak |0>_flag rotates by
    ``theta_leak`` towards |j>_b_in |j+1>_a_leak |1>_flag.  At pi/2 Alice's
    ancilla records j perfectly.

    Blur: a Bob ancilla ``b_blur``; |c>_b_out |0> rotates by ``theta_meas``
    towards |c+1 mod p>_b_out |1>, so Bob's reading of the output disturbs it.

    The noise-free base protocol is kept as ``reference``.
    """
    if not (0 <= theta_leak <= np.pi / 2 and 0 <= theta_meas <= np.pi / 2):
        raise ValueError("noise angles must lie in [0, pi/2]")
    base = p.reference or p
    m, out_dim = base.m, base.layout.register(base.bob_output_register).dim
    if noisy_dim(base.layout.total_dim, m) > dim_cap:
        raise ValueError(f"noisy protocol needs dim {noisy_dim(base.layout.total_dim, m)} > cap {dim_cap}")
    layout = base.layout.extend(
        Register("a_leak", m + 1, "alice"),
        Register("b_flag", 2, "bob"),
        Register("b_blur", 2, "bob"),
    )
    dim = layout.total_dim
    v = dict(zip(layout.names, np.unravel_index(np.arange(dim), layout.dims)))
    flat = lambda d: np.ravel_multi_index([d[n] for n in layout.names], layout.dims)  # noqa: E731

    sel = (v["a_leak"] == 0) & (v["b_flag"] == 0)
    src = {k: a[sel] for k, a in v.items()}
    dst = dict(src, a_leak=src[base.bob_input_register] + 1, b_flag=np.ones_like(src["b_flag"]))
    leak = _givens(layout, flat(src), flat(dst), theta_leak)

    sel = v["b_blur"] == 0
    src = {k: a[sel] for k, a in v.items()}
    out = base.bob_output_register
    dst = dict(src, **{out: (src[out] + 1) % out_dim, "b_blur": np.ones_like(src["b_blur"])})
    blur = _givens(layout, flat(src), flat(dst), theta_meas)

    lifted = sp.kron(sp.csr_matrix(base.unitary.data), sp.identity(dim // base.layout.total_dim), format="csr")
    u = (blur @ leak @ lifted).toarray()
    return replace(
        base, layout=layout, unitary=UnitaryMatrix(u, validate=False),
        noise=(float(theta_leak), float(theta_meas)), reference=base,
        family="noisy", name=f"noisy({base.name})",
    )


def scramble_bob(p: Protocol, rng: np.random.Generator) -> Protocol:
    """Follow the protocol by one Haar-random unitary on the base protocol's Bob registers.

    The reference protocol gets the same unitary, so Bob's measurement stays
    well defined; noise ancillas are left alone.
    """
    base = p.reference or p
    bob = base.bob_registers
    v = unitary_group.rvs(base.layout.dim_of(bob), random_state=rng)

    def apply(q: Protocol) -> np.ndarray:
        return embed_operator(v, q.layout, bob) @ q.unitary.data

    new_base = replace(base, unitary=UnitaryMatrix(apply(base), validate=False), name=f"scrambled({base.name})")
    if p.reference is None:
        return new_base
    return replace(p, unitary=UnitaryMatrix(apply(p), validate=False), reference=new_base)


def protocol_dim(family: str, *, n: int = 0, m: int = 0, p: int = 0, k: int = 0,
                 rows: int = 0, base_family: str = "") -> int:
    """Global dimension a zoo protocol will have, computed before building it."""
    if family == "oblivious-id":
        return n * n * 2 * n
    if family == "ot":
        return 2 * (2 ** k) ** 5
    if family == "ideal":
        return n * m * p * rows
    if family == "two-sided-xor":
        return n * p * m * p * p * rows
    raise ValueError(f"no closed-form dimension for family {family!r}")

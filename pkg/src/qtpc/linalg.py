"""Dense complex linear algebra for small quantum systems.

States, density matrices and unitaries are thin immutable wrappers around
numpy arrays that check their defining invariants on construction.  All
operations are pure functions.
"""

import numpy as np

from .layout import TensorLayout

TOL_CONSTRUCT = 1e-10
TOL_IDENTITY = 1e-9
TOL_RECON = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class StateVector:
    """Unit vector in C^dim."""

    __slots__ = ("data",)

    def __init__(self, amplitudes, *, validate: bool = True):
        a = np.array(amplitudes, dtype=complex).reshape(-1)
        if validate:
            norm = np.linalg.norm(a)
            if abs(norm - 1.0) > TOL_CONSTRUCT:
                raise ValueError(f"state vector norm {norm!r} is not 1")
        self.data = _frozen(a)

    @classmethod
    def basis(cls, dim: int, index: int) -> "StateVector":
        a = np.zeros(dim, dtype=complex)
        a[index] = 1.0
        return cls(a)

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        a = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(a / np.linalg.norm(a))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.data, self.data.conj()))

    def __repr__(self):
        return f"StateVector(dim={self.dim})"


class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix."""

    __slots__ = ("data",)

    def __init__(self, entries, *, validate: bool = True):
        a = np.array(entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {a.shape}")
        if validate:
            if np.max(np.abs(a - a.conj().T), initial=0.0) > TOL_CONSTRUCT:
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(a).real
            if abs(tr - 1.0) > TOL_CONSTRUCT:
                raise ValueError(f"density matrix trace {tr!r} is not 1")
            lo = np.linalg.eigvalsh(0.5 * (a + a.conj().T))[0]
            if lo < -TOL_CONSTRUCT:
                raise ValueError(f"density matrix has negative eigenvalue {lo!r}")
        self.data = _frozen(a)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.data, self.data)))

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


class UnitaryMatrix:
    """Square matrix with U^dagger U = I."""

    __slots__ = ("data",)

    def __init__(self, entries, *, validate: bool = True):
        a = np.array(entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"unitary must be square, got shape {a.shape}")
        if validate:
            err = unitarity_error(a)
            if err > TOL_IDENTITY:
                raise ValueError(f"matrix is not unitary (error {err:.3g})")
        self.data = _frozen(a)

    @classmethod
    def identity(cls, dim: int) -> "UnitaryMatrix":
        return cls(np.eye(dim, dtype=complex), validate=False)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def __repr__(self):
        return f"UnitaryMatrix(dim={self.dim})"


def unitarity_error(u: np.ndarray) -> float:
    u = np.asarray(u)
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))


def _raw(x) -> np.ndarray:
    return x.data if isinstance(x, (StateVector, DensityMatrix, UnitaryMatrix)) else np.asarray(x)


def tensor(a, b):
    """Kronecker product of two objects of the same kind, ``a`` most significant."""
    if type(a) is not type(b):
        raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")
    if not isinstance(a, (StateVector, DensityMatrix, UnitaryMatrix)):
        raise TypeError(f"unsupported operand {type(a).__name__}")
    return type(a)(np.kron(a.data, b.data), validate=False)


def partial_trace(rho, layout: TensorLayout, keep) -> DensityMatrix:
    """Reduced density matrix on ``keep`` (registers in layout order)."""
    r = _raw(rho)
    keep = set(keep)
    if not keep:
        raise ValueError("keep must be nonempty")
    for name in keep:
        layout.index(name)
    d = layout.total_dim
    if r.shape != (d, d):
        raise ValueError(f"matrix of shape {r.shape} does not match layout dim {d}")
    kax = [k for k, n in enumerate(layout.names) if n in keep]
    tax = [k for k, n in enumerate(layout.names) if n not in keep]
    dk = layout.dim_of(layout.names[k] for k in kax)
    nreg = len(layout)
    t = r.reshape(layout.dims * 2)
    t = t.transpose(kax + tax + [nreg + k for k in kax] + [nreg + k for k in tax])
    t = t.reshape(dk, d // dk, dk, d // dk)
    return DensityMatrix(np.einsum("ajbj->ab", t), validate=False)


def reduce_pure(psi, layout: TensorLayout, keep) -> DensityMatrix:
    """Reduced density matrix of a pure state, without forming |psi><psi|."""
    m = layout.split(_raw(psi), keep)
    return DensityMatrix(m @ m.conj().T, validate=False)


def eigh(h):
    """Eigenvalues (descending) and orthonormal eigenvector columns of a Hermitian matrix."""
    h = _raw(h)
    if np.linalg.norm(h - h.conj().T) > TOL_IDENTITY:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return w[::-1].copy(), v[:, ::-1].copy()


def svd(m):
    """Full singular value decomposition ``m = u @ diag(s) @ vh``, s descending."""
    m = _raw(m)
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"SVD failed for matrix of shape {m.shape}: {exc}") from exc
    return u, s, vh


def psd_sqrt(a, *, power: float = 0.5) -> np.ndarray:
    """Spectral ``a**power`` of a PSD matrix; ``power < 0`` acts on the support only.

    Eigenvalues in (-1e-10, numerical floor] are treated as exact zeros.
    """
    w, v = eigh(a)
    if w.size and w[-1] < -TOL_CONSTRUCT:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w[-1]!r})")
    floor = 64 * np.finfo(float).eps * max(1.0, float(w[0]) if w.size else 1.0)
    keep = w > floor
    f = np.zeros_like(w)
    f[keep] = w[keep] ** power
    return (v * f) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Fidelity in the amplitude convention: max |<psi|psi'>| over purifications.

    Evaluated as the trace norm of sqrt(rho) sqrt(sigma), i.e. the sum of the
    square roots of the eigenvalues of sqrt(rho) sigma sqrt(rho).
    """
    r, s = _raw(rho), _raw(sigma)
    if r.shape != s.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {s.shape}")
    sv = np.linalg.svd(psd_sqrt(r) @ psd_sqrt(s), compute_uv=False)
    return float(min(1.0, max(0.0, sv.sum())))


def trace_distance(rho, sigma) -> float:
    r, s = _raw(rho), _raw(sigma)
    if r.shape != s.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {s.shape}")
    d = r - s
    w = np.linalg.eigvalsh(0.5 * (d + d.conj().T))
    return float(min(1.0, 0.5 * np.abs(w).sum()))


def purify(rho) -> StateVector:
    """Canonical purification sum_k sqrt(l_k) |e_k> (x) |k> on dim d**2."""
    r = _raw(rho)
    w, v = eigh(r)
    if w.size and w[-1] < -TOL_CONSTRUCT:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w[-1]!r})")
    amp = v * np.sqrt(np.clip(w, 0.0, None))
    return StateVector(amp.reshape(-1), validate=False)


class SchmidtForm:
    """Schmidt decomposition across (cut | complement) of a layout.

    ``left_vectors`` and ``right_vectors`` hold the factors as columns, each
    factor in the layout order of its own registers.
    """

    def __init__(self, coefficients, left_vectors, right_vectors, layout: TensorLayout, cut):
        self.coefficients = _frozen(np.asarray(coefficients, dtype=float))
        self.left_vectors = _frozen(np.asarray(left_vectors, dtype=complex))
        self.right_vectors = _frozen(np.asarray(right_vectors, dtype=complex))
        self.layout = layout
        self.cut = frozenset(cut)

    @property
    def rank(self) -> int:
        return int(self.coefficients.size)

    def reconstruct(self) -> StateVector:
        m = (self.left_vectors * self.coefficients) @ self.right_vectors.T
        return StateVector(self.layout.merge(m, self.cut), validate=False)


def schmidt_decompose(psi, layout: TensorLayout, cut, *, tol: float = TOL_CONSTRUCT) -> SchmidtForm:
    cut = set(cut)
    if not cut or cut >= set(layout.names):
        raise ValueError("cut must be a proper nonempty subset of the layout registers")
    m = layout.split(_raw(psi), cut)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    r = int(np.count_nonzero(s > tol))
    return SchmidtForm(s[:r], u[:, :r], vh[:r].T, layout, cut)

"""Dense linear-algebra kernel: states, operators, tensor structure and Haar sampling.

Tensor order convention: subsystem 0 is the most significant factor of every
index, so ``kron(A, B)[i_A * dim_B + i_B]`` and "the first s qubits" of a
register are always subsystems ``0..s-1``.

All functions accept plain numpy arrays as well as the wrapper types defined
here; the wrappers exist to validate invariants at construction time.
"""
from __future__ import annotations

import itertools
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STRUCT_TOL = 1e-9
EXACT_TOL = 1e-12
DEFAULT_CAP_QUBITS = 13
CAP_ENV = "CHRS_CAP_QUBITS"
MAX_SYM_COPIES = 4

DUMP_MAGIC = b"CHRS"
DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sIQ")


class ConfigurationError(ValueError):
    """Raised for invalid parameters, layouts or exceeded dimension caps."""


class NumericError(ArithmeticError):
    """Raised when an operator violates a structural numeric invariant."""


def cap_qubits() -> int:
    """Joint-system cap in qubits (``CHRS_CAP_QUBITS`` overrides the default 13)."""
    raw = os.environ.get(CAP_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_CAP_QUBITS
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{CAP_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigurationError(f"{CAP_ENV} must be positive, got {value}")
    return value


def check_dim_cap(dim: int, what: str = "operator") -> None:
    cap = cap_qubits()
    if dim > 2**cap:
        raise ConfigurationError(
            f"{what} dimension {dim} exceeds the cap of 2^{cap} = {2**cap} "
            f"(set {CAP_ENV} to raise it)"
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def hermiticity_error(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(mat - mat.conj().T)))


def _is_psd(mat: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    # Cholesky of M + tol*I succeeds iff min eigenvalue > -tol (up to round-off);
    # far cheaper than a full eigendecomposition at dim 4096.
    shifted = mat + tol * np.eye(mat.shape[0], dtype=mat.dtype)
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError:
        return bool(np.linalg.eigvalsh(mat)[0] >= -tol)
    return True


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True, eq=False)
class StateVector:
    """A normalized pure state."""

    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes)
        if v.ndim != 1 or v.size == 0:
            raise ConfigurationError("state vector must be a non-empty 1-d array")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > STRUCT_TOL:
            raise NumericError(f"state vector norm is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", _frozen(v))

    @classmethod
    def normalized(cls, v) -> "StateVector":
        v = np.asarray(v, dtype=complex)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise NumericError("cannot normalize the zero vector")
        return cls(v / norm)

    @property
    def dim(self) -> int:
        return int(self.amplitudes.shape[0])

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian PSD operator. ``trace_mass < 1`` marks a sub-normalized state."""

    matrix: np.ndarray
    trace_mass: float | None = None
    tol: float = field(default=STRUCT_TOL, repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
            raise ConfigurationError(f"density matrix must be square, got shape {mat.shape}")
        herm = hermiticity_error(mat)
        if herm > self.tol:
            raise NumericError(f"density matrix is not Hermitian (max deviation {herm:.3e})")
        if not _is_psd(mat, self.tol):
            raise NumericError("density matrix is not positive semidefinite")
        tr = float(np.trace(mat).real)
        mass = 1.0 if self.trace_mass is None else float(self.trace_mass)
        if abs(tr - mass) > self.tol:
            raise NumericError(f"trace {tr!r} does not match declared trace mass {mass!r}")
        object.__setattr__(self, "matrix", _frozen(mat))
        object.__setattr__(self, "trace_mass", mass)

    @classmethod
    def from_array(cls, mat, tol: float = STRUCT_TOL) -> "DensityMatrix":
        """Wrap ``mat`` declaring whatever trace it has."""
        mat = np.asarray(mat)
        return cls(mat, trace_mass=float(np.trace(mat).real), tol=tol)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def subnormalized(self) -> bool:
        return self.trace_mass < 1.0 - self.tol

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True, eq=False)
class HermitianOp:
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ConfigurationError(f"operator must be square, got shape {mat.shape}")
        herm = hermiticity_error(mat)
        if herm > STRUCT_TOL:
            raise NumericError(f"operator is not Hermitian (max deviation {herm:.3e})")
        object.__setattr__(self, "matrix", _frozen(mat))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered subsystem structure; subsystem 0 is the most significant factor."""

    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(label), int(dim)) for label, dim in self.subsystems)
        if not subs:
            raise ConfigurationError("layout needs at least one subsystem")
        labels = [label for label, _ in subs]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"layout labels must be unique: {labels}")
        for label, dim in subs:
            if dim < 1:
                raise ConfigurationError(f"subsystem {label!r} has non-positive dim {dim}")
        object.__setattr__(self, "subsystems", subs)

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "RegisterLayout":
        return cls(tuple(pairs))

    @classmethod
    def qubits(cls, n: int, prefix: str = "q") -> "RegisterLayout":
        return cls(tuple((f"{prefix}{i}", 2) for i in range(n)))

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.subsystems]

    @property
    def dims(self) -> list[int]:
        return [dim for _, dim in self.subsystems]

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigurationError(f"unknown register label {label!r}; layout has {self.labels}")

    def __add__(self, other: "RegisterLayout") -> "RegisterLayout":
        return RegisterLayout(self.subsystems + other.subsystems)


# ---------------------------------------------------------------------------
# Operations


def kron(a, b) -> np.ndarray:
    """Tensor product with ``a`` as the more significant factor."""
    return np.kron(np.asarray(a), np.asarray(b))


def kron_all(factors: Iterable) -> np.ndarray:
    out = np.ones((1,))
    first = True
    for f in factors:
        f = np.asarray(f)
        out = f if first else np.kron(out, f)
        first = False
    if first:
        raise ConfigurationError("kron_all needs at least one factor")
    return out


def partial_trace_array(mat: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep`` (indices, kept in layout order)."""
    dims = [int(d) for d in dims]
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    traced = [i for i in range(n) if i not in keep]
    dk = math.prod(dims[i] for i in keep)
    dt = math.prod(dims[i] for i in traced)
    t = np.asarray(mat).reshape(dims + dims)
    perm = keep + traced + [n + i for i in keep] + [n + i for i in traced]
    t = t.transpose(perm).reshape(dk, dt, dk, dt)
    return np.einsum("ijkj->ik", t)


def partial_trace(rho, layout: RegisterLayout, keep: Iterable[str]):
    """Reduced operator on the ``keep`` registers (in layout order).

    Returns a :class:`DensityMatrix` when given one, a plain array otherwise.
    """
    keep = list(keep)
    if not keep:
        raise ConfigurationError("partial_trace needs at least one register to keep")
    mat = np.asarray(rho)
    if mat.shape != (layout.dim, layout.dim):
        raise ConfigurationError(
            f"layout dim {layout.dim} does not match operator shape {mat.shape}"
        )
    idx = [layout.index(label) for label in keep]
    out = partial_trace_array(mat, layout.dims, idx)
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(out, trace_mass=rho.trace_mass)
    return out


def trace_norm(h, floor: float = STRUCT_TOL) -> float:
    """Sum of absolute eigenvalues of a Hermitian operator.

    Eigenvalues with magnitude at most ``floor`` are treated as exact zeros so
    that round-off in exactly cancelling differences does not accumulate.
    """
    mat = np.asarray(h)
    herm = hermiticity_error(mat)
    if herm > STRUCT_TOL:
        raise NumericError(f"trace_norm needs a Hermitian operator (max deviation {herm:.3e})")
    mat = (mat + mat.conj().T) / 2
    ev = np.linalg.eigvalsh(mat)
    ev = np.where(np.abs(ev) <= floor, 0.0, ev)
    return float(np.sum(np.abs(ev)))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _ginibre_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)


def haar_vector(dim: int, seed) -> np.ndarray:
    """Array form of :func:`haar_state`."""
    if dim < 1:
        raise ConfigurationError(f"dim must be >= 1, got {dim}")
    v = _ginibre_vector(dim, as_rng(seed))
    return v / np.linalg.norm(v)


def haar_state(dim: int, seed) -> StateVector:
    """Haar-random pure state: normalized complex Gaussian vector."""
    return StateVector(haar_vector(dim, seed))


def haar_unitary(dim: int, seed) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with the R-diagonal phase fix."""
    if dim < 1:
        raise ConfigurationError(f"dim must be >= 1, got {dim}")
    rng = as_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    phases = diag / np.abs(diag)
    return q * phases[np.newaxis, :]


def copy_permutation_indices(d: int, r: int, perm: Sequence[int]) -> np.ndarray:
    """Index map of the operator permuting ``r`` copies of ``C^d``.

    ``V_perm`` sends the basis state with copy-values ``(i_0, ..., i_{r-1})`` to
    the one whose copy ``perm[j]`` holds ``i_j``; the returned array ``p``
    satisfies ``V_perm @ x == x[p]``.
    """
    idx = np.arange(d**r).reshape((d,) * r)
    # out[..., position perm[j] ...] = in[..., position j ...]
    inv = np.argsort(perm)
    return idx.transpose(inv).ravel()


def permutation_operator(d: int, r: int, perm: Sequence[int]) -> np.ndarray:
    p = copy_permutation_indices(d, r, perm)
    n = d**r
    v = np.zeros((n, n))
    v[np.arange(n), p] = 1.0
    return v


def sym_projector_array(d: int, r: int) -> np.ndarray:
    if r < 1 or d < 1:
        raise ConfigurationError(f"need d >= 1 and r >= 1, got d={d}, r={r}")
    if r > MAX_SYM_COPIES:
        raise ConfigurationError(
            f"permutation construction is capped at r <= {MAX_SYM_COPIES} copies, got r={r}"
        )
    check_dim_cap(d**r, "symmetric projector")
    n = d**r
    proj = np.zeros((n, n))
    rows = np.arange(n)
    for perm in itertools.permutations(range(r)):
        proj[rows, copy_permutation_indices(d, r, perm)] += 1.0
    proj /= math.factorial(r)
    return proj


def sym_projector(d: int, r: int) -> HermitianOp:
    """Projector onto the symmetric subspace of ``(C^d)^{⊗r}``: average of copy permutations."""
    return HermitianOp(sym_projector_array(d, r))


def max_entangled(d: int) -> StateVector:
    """``(1/√d) Σ_i |ii⟩`` on ``C^d ⊗ C^d``."""
    if d < 1:
        raise ConfigurationError(f"d must be >= 1, got {d}")
    v = np.zeros(d * d)
    v[np.arange(d) * (d + 1)] = 1.0 / np.sqrt(d)
    return StateVector(v)


def is_projector(p: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    p = np.asarray(p)
    return hermiticity_error(p) <= tol and float(np.max(np.abs(p @ p - p), initial=0.0)) <= tol


def lueders_update(rho, projector) -> tuple[float, DensityMatrix]:
    """Outcome probability ``tr(PρP)`` and the un-renormalized post state ``PρP``."""
    p = np.asarray(projector)
    mat = np.asarray(rho)
    if p.shape != mat.shape:
        raise ConfigurationError(f"projector shape {p.shape} != state shape {mat.shape}")
    if not is_projector(p):
        raise NumericError("lueders_update needs an orthogonal projector (P² = P = P†)")
    post = p @ mat @ p.conj().T
    post = (post + post.conj().T) / 2
    prob = float(np.trace(post).real)
    return prob, DensityMatrix(post, trace_mass=prob)


# ---------------------------------------------------------------------------
# Matrix dump format: "CHRS" | u32 version | u64 dim | row-major (re, im) float64 LE


def write_dump(path, data) -> Path:
    """Write a vector (``dim`` entries) or square matrix (``dim²`` entries).

    At ``dim = 1`` the two shapes share a payload and read back as a vector.
    """
    a = np.asarray(data)
    if a.ndim == 2 and a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"only square matrices can be dumped, got {a.shape}")
    if a.ndim not in (1, 2):
        raise ConfigurationError(f"dump expects a vector or matrix, got ndim={a.ndim}")
    dim = a.shape[0]
    a = a.astype(complex)
    payload = np.empty(a.shape + (2,), dtype="<f8")
    payload[..., 0] = a.real
    payload[..., 1] = a.imag
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_DUMP_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, dim))
        fh.write(payload.tobytes(order="C"))
    return path


def read_dump(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise ConfigurationError(f"{path}: file too short for a CHRS dump header")
    magic, version, dim = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ConfigurationError(f"{path}: bad magic {magic!r}")
    if version != DUMP_VERSION:
        raise ConfigurationError(f"{path}: unsupported dump version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size)
    if body.size == 2 * dim:
        shape = (dim,)
    elif body.size == 2 * dim * dim:
        shape = (dim, dim)
    else:
        raise ConfigurationError(
            f"{path}: payload of {body.size // 2} entries fits neither dim {dim} nor dim²"
        )
    pairs = body.reshape(shape + (2,))
    return pairs[..., 0] + 1j * pairs[..., 1]

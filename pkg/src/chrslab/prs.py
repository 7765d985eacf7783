"""Pad-keyed single-copy pseudorandom state constructions and their averaged channels.

The key ``k = (a, b)`` of pad width ``s`` acts as ``U_k = X^a Z^b ⊗ I`` on the
leading ``s`` qubits of an ``m``-qubit register.  Bit strings are stored as
integers with qubit 0 as the most significant bit.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gap import GapReport, make_report
from .moments import (
    EXACT,
    MC,
    EnsembleSpec,
    copies_vector,
    haar_moment_array,
    mc_average,
    mc_gap,
    mc_values,
    normalize_mode,
)
from .qmath import (
    ConfigurationError,
    DensityMatrix,
    HermitianOp,
    check_dim_cap,
    haar_vector,
    trace_norm,
)

PAULI_I = np.eye(2)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Y = np.array([[0.0, -1j], [1j, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
PAULIS = (PAULI_I, PAULI_X, PAULI_Y, PAULI_Z)

ASYMPTOTIC_PAD_FRACTION = 0.45


def _bits_to_int(bits, s: int) -> int:
    if isinstance(bits, (int, np.integer)):
        value = int(bits)
    else:
        bits = list(bits)
        if len(bits) != s:
            raise ConfigurationError(f"bit string has length {len(bits)}, expected {s}")
        value = 0
        for bit in bits:
            if bit not in (0, 1):
                raise ConfigurationError(f"bits must be 0/1, got {bit!r}")
            value = (value << 1) | int(bit)
    if not 0 <= value < 2**s:
        raise ConfigurationError(f"bit string {value} does not fit in {s} bits")
    return value


@dataclass(frozen=True)
class PauliKey:
    m: int
    s: int
    a: int
    b: int

    def __post_init__(self):
        if not 0 <= self.s <= self.m:
            raise ConfigurationError(f"pad width s={self.s} must lie in [0, m={self.m}]")
        object.__setattr__(self, "a", _bits_to_int(self.a, self.s))
        object.__setattr__(self, "b", _bits_to_int(self.b, self.s))

    @property
    def n(self) -> int:
        return 2 * self.s

    @classmethod
    def all_keys(cls, m: int, s: int) -> list["PauliKey"]:
        return [cls(m, s, a, b) for a in range(2**s) for b in range(2**s)]

    @classmethod
    def random(cls, m: int, s: int, rng: np.random.Generator) -> "PauliKey":
        a, b = rng.integers(0, 2**s, size=2)
        return cls(m, s, int(a), int(b))


def _popcount_parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    parity = np.zeros_like(x)
    while np.any(x):
        parity ^= x & 1
        x >>= 1
    return parity


def qotp_apply(key: PauliKey, vec: np.ndarray) -> np.ndarray:
    """Apply ``U_k`` to the leading ``m`` qubits of a vector without building the matrix.

    ``vec`` may carry further trailing factors (e.g. extra copies).
    """
    v = np.asarray(vec)
    pad = 2**key.s
    if v.shape[0] % pad:
        raise ConfigurationError(f"vector length {v.shape[0]} is not a multiple of 2^s = {pad}")
    blocks = v.reshape(pad, -1)
    y = np.arange(pad)
    src = y ^ key.a
    # X^a Z^b |x> = (-1)^{b.x} |x xor a>
    signs = 1 - 2 * _popcount_parity(src & key.b)
    return (signs[:, None] * blocks[src]).reshape(v.shape)


def qotp_unitary(key: PauliKey) -> np.ndarray:
    """The ``2^m``-dimensional matrix of ``X^a Z^b ⊗ I``."""
    check_dim_cap(2**key.m, "QOTP unitary")
    return qotp_apply(key, np.eye(2**key.m))


def qotp_unitary_kron(key: PauliKey) -> np.ndarray:
    """Same matrix composed qubit by qubit (oracle for :func:`qotp_unitary`)."""
    factors = []
    for q in range(key.s):
        shift = key.s - 1 - q
        ai = (key.a >> shift) & 1
        bi = (key.b >> shift) & 1
        factors.append(np.linalg.matrix_power(PAULI_X, ai) @ np.linalg.matrix_power(PAULI_Z, bi))
    out = np.eye(1)
    for f in factors:
        out = np.kron(out, f)
    return np.kron(out, np.eye(2 ** (key.m - key.s)))


def pauli_twirl(rho) -> np.ndarray:
    """``E_P P ρ P†`` over all Pauli strings: ``tr(ρ)/2^s · I``."""
    mat = np.asarray(rho)
    dim = mat.shape[0]
    s = int(round(math.log2(dim)))
    if 2**s != dim:
        raise ConfigurationError(f"pauli_twirl needs a qubit register, got dim {dim}")
    return np.trace(mat) / dim * np.eye(dim)


def pauli_twirl_bruteforce(rho) -> np.ndarray:
    """Explicit average over all ``4^s`` Pauli conjugations."""
    mat = np.asarray(rho, dtype=complex)
    dim = mat.shape[0]
    s = int(round(math.log2(dim)))
    out = np.zeros_like(mat)
    for combo in itertools.product(PAULIS, repeat=s):
        p = np.eye(1)
        for f in combo:
            p = np.kron(p, f)
        out += p @ mat @ p.conj().T
    return out / 4**s


def pad_twirl_array(mat: np.ndarray, s: int) -> np.ndarray:
    """``I/2^s ⊗ Tr_{first s qubits}(ρ)`` for any operator with the pad leading."""
    mat = np.asarray(mat)
    pad = 2**s
    dim = mat.shape[0]
    if dim % pad:
        raise ConfigurationError(f"dimension {dim} is not divisible by 2^s = {pad}")
    rest = dim // pad
    reduced = np.einsum("ijik->jk", mat.reshape(pad, rest, pad, rest))
    return np.kron(np.eye(pad) / pad, reduced)


def pad_twirl_channel(rho, s: int):
    """Key-averaged pad channel ``E_k U_k ρ U_k†`` in closed form.

    Accepts a :class:`DensityMatrix` (returned as one) or a plain array.
    """
    out = pad_twirl_array(np.asarray(rho), s)
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(out, trace_mass=rho.trace_mass)
    return out


def pad_twirl_by_keys(rho, m: int, s: int) -> np.ndarray:
    """Explicit average over all ``2^{2s}`` keys (oracle for :func:`pad_twirl_channel`).

    ``rho`` may act on ``m`` qubits followed by further factors.
    """
    mat = np.asarray(rho, dtype=complex)
    out = np.zeros_like(mat)
    keys = PauliKey.all_keys(m, s)
    for key in keys:
        left = qotp_apply(key, mat)
        out += qotp_apply(key, left.conj().T).conj().T
    return out / len(keys)


def asymptotic_pad_width(m: int) -> int:
    """Desk-scale rounding of the asymptotic pad fraction: ``max(1, floor(0.45 m))``."""
    return max(1, math.floor(ASYMPTOTIC_PAD_FRACTION * m))


# ---------------------------------------------------------------------------
# Ensembles


def prs_sampler(m: int, s: int, r: int):
    def sample(rng):
        psi = haar_vector(2**m, rng)
        key = PauliKey.random(m, s, rng)
        first = qotp_apply(key, psi)
        return np.kron(first, copies_vector(psi, r - 1)) if r > 1 else first

    return sample


def prs_ensemble_array(m: int, s: int, r: int) -> np.ndarray:
    check_dim_cap(2 ** (m * r), "ensemble state")
    return pad_twirl_array(haar_moment_array(2**m, r), s)


def prs_ensemble_state(spec: EnsembleSpec, workers: int | None = None) -> DensityMatrix:
    """``E_k E_ψ U_kψU_k† ⊗ ψ^{⊗(r-1)}`` for the pad ensemble described by ``spec``."""
    if spec.mode == MC:
        return mc_average(prs_sampler(spec.m, spec.s, spec.r), spec.samples, spec.seed,
                          workers=workers).mean
    return DensityMatrix(prs_ensemble_array(spec.m, spec.s, spec.r))


def ideal_ensemble_array(m: int, r: int) -> np.ndarray:
    check_dim_cap(2 ** (m * r), "ensemble state")
    return np.kron(np.eye(2**m) / 2**m, haar_moment_array(2**m, r - 1))


def ideal_ensemble_state(m: int, r: int) -> DensityMatrix:
    """``I/2^m ⊗ E_ψ ψ^{⊗(r-1)}``."""
    return DensityMatrix(ideal_ensemble_array(m, r))


def half_pad_bound(m: int, r: int) -> float:
    return 2 * r * r / 2 ** (m / 2)


def pad_fraction_bound(m: int, r: int) -> float:
    return (2 * r * r + 800 * r * m * math.sqrt(m)) * 5 ** (0.1 * m) / 2 ** (0.45 * m)


def prs_bound(m: int, s: int, r: int) -> tuple[float, str, bool]:
    """(bound value, bound id, preconditions met) for pad width ``s``."""
    if m % 2 == 0 and 2 * s >= m:
        # more padding than half only shrinks the gap (data processing)
        return half_pad_bound(m, r), "half-pad-bound", r <= 2 ** (m // 2)
    n = 2 * s
    return pad_fraction_bound(m, r), "pad-fraction-bound", 0.9 * m <= n < m


def prs_gap(spec: EnsembleSpec, workers: int | None = None) -> GapReport:
    """Trace distance between the pad ensemble and the ideal ensemble, with its bound."""
    m, s, r = spec.m, spec.s, spec.r
    bound, bound_id, pre = prs_bound(m, s, r)
    ideal = ideal_ensemble_array(m, r)
    details = {"m": m, "s": s, "r": r}
    if spec.mode == MC:
        avg = mc_average(prs_sampler(m, s, r), spec.samples, spec.seed, workers=workers)
        return mc_gap(avg, ideal, bound, bound_id, pre, details)
    dist = trace_norm(prs_ensemble_array(m, s, r) - ideal)
    return make_report(dist, bound, bound_id, preconditions=pre, details=details)


# ---------------------------------------------------------------------------
# Split states and block norms


def half_split_bound(m: int, r: int) -> float:
    return 80 * r * math.sqrt(m) / 2 ** (m / 2)


def split_sampler(m: int, r: int):
    half = 2 ** (m - 1)

    def sample(rng):
        psi1 = haar_vector(half, rng)
        psi2 = haar_vector(half, rng)
        return copies_vector(np.concatenate([psi1, psi2]) / np.sqrt(2), r)

    return sample


def half_split_moment(m: int, r: int, samples: int = 10_000, seed: int = 0,
                      workers: int | None = None) -> tuple[DensityMatrix, GapReport]:
    """MC moment of ``(|0⟩ψ_1 + |1⟩ψ_2)/√2`` against the Haar moment at ``2^m``."""
    if m < 1:
        raise ConfigurationError(f"m must be >= 1, got {m}")
    check_dim_cap(2 ** (m * r), "split moment")
    avg = mc_average(split_sampler(m, r), samples, seed, workers=workers)
    report = mc_gap(avg, haar_moment_array(2**m, r), half_split_bound(m, r), "split-bound",
                    details={"m": m, "r": r})
    return avg.mean, report


def split_distance(psi: np.ndarray) -> float:
    """``∥ψ − F(ψ)∥`` where ``F`` rebalances the first-qubit branches to weight 1/2 each."""
    psi = np.asarray(psi)
    half = psi.shape[0] // 2
    alpha = np.linalg.norm(psi[:half])
    beta = np.linalg.norm(psi[half:])
    overlap = (alpha + beta) / np.sqrt(2)
    return float(2 * np.sqrt(max(0.0, 1.0 - overlap**2)))


def split_deviation_values(m: int, samples: int, seed: int) -> np.ndarray:
    return mc_values(lambda rng: split_distance(haar_vector(2**m, rng)), samples, seed, "split")


def split_deviation(m: int, samples: int = 10_000, seed: int = 0) -> float:
    """MC estimate of ``E_ψ ∥ψ − F(ψ)∥`` over Haar ψ on ``m`` qubits."""
    return float(np.mean(split_deviation_values(m, samples, seed)))


def split_deviation_bound(m: int) -> float:
    return 80 * math.sqrt(m) / 2 ** (m / 2)


_PROBE_STATES = {
    "0": np.array([1.0, 0.0]),
    "1": np.array([0.0, 1.0]),
    "+": np.array([1.0, 1.0]) / np.sqrt(2),
    "+i": np.array([1.0, 1j]) / np.sqrt(2),
}


def block_norms(a) -> dict[str, float]:
    """Trace norms of ``⟨a|₁ A |a⟩₁`` for the first-qubit probes 0, 1, +, +i."""
    mat = np.asarray(a)
    dim = mat.shape[0]
    if dim % 2:
        raise ConfigurationError(f"first subsystem must be a qubit, got dim {dim}")
    rest = dim // 2
    blocks = mat.reshape(2, rest, 2, rest)
    out = {}
    for label, vec in _PROBE_STATES.items():
        sub = np.einsum("i,ijkl,k->jl", vec.conj(), blocks, vec)
        out[label] = trace_norm(sub)
    return out


def block_norm_check(a, eps: float) -> tuple[bool, bool]:
    """(all four block norms < eps, ∥A∥ < 10 eps)."""
    HermitianOp(np.asarray(a))
    norms = block_norms(a)
    hypothesis = all(v < eps for v in norms.values())
    conclusion = trace_norm(a) < 10 * eps
    return hypothesis, conclusion


# ---------------------------------------------------------------------------
# Stretching


def stretch_bound_term(m: int, r: int) -> float:
    return 800 * r * math.sqrt(m) / 2 ** (m / 2)


def default_family(m: int) -> list[np.ndarray]:
    """QOTP on ``ceil((m-1)/2)`` leading qubits of an ``(m-1)``-qubit register."""
    inner = m - 1
    s = math.ceil(inner / 2)
    return [qotp_unitary(k) for k in PauliKey.all_keys(inner, s)]


def _as_family(family, m: int) -> list[np.ndarray]:
    if family is None:
        return default_family(m)
    if callable(family) and not isinstance(family, (list, tuple)):
        raise ConfigurationError("family must be a finite sequence of unitaries")
    mats = [np.asarray(u) for u in family]
    if not mats:
        raise ConfigurationError("family must contain at least one unitary")
    want = 2 ** (m - 1)
    for u in mats:
        if u.shape != (want, want):
            raise ConfigurationError(f"family unitaries must be {want}x{want}, got {u.shape}")
    return mats


def _family_average(mat: np.ndarray, unitaries: Sequence[np.ndarray], lead: int) -> np.ndarray:
    """``E_k (V_k ⊗ I) M (V_k ⊗ I)†`` with ``V_k`` acting on the leading ``lead`` dims."""
    dim = mat.shape[0]
    rest = dim // lead
    t = mat.reshape(lead, rest, lead, rest)
    out = np.zeros(t.shape, dtype=complex)
    for v in unitaries:
        out += np.einsum("ai,ijkl,bk->ajbl", v, t, v.conj(), optimize=True)
    out = (out / len(unitaries)).reshape(dim, dim)
    return out.real if np.allclose(out.imag, 0.0, atol=0.0) else out


def _family_gap(q: int, r: int, unitaries: Sequence[np.ndarray], widen: bool) -> float:
    """Gap on ``q`` qubits; ``widen`` applies ``I_2 ⊗ V_k`` (family on the last q-1 qubits)."""
    check_dim_cap(2 ** (q * r), "stretch ensemble")
    moment = haar_moment_array(2**q, r)
    ops = [np.kron(np.eye(2), v) for v in unitaries] if widen else list(unitaries)
    lhs = _family_average(moment, ops, 2**q)
    return trace_norm(lhs - ideal_ensemble_array(q, r))


def stretch_sampler(m: int, r: int, ops: Sequence[np.ndarray]):
    def sample(rng):
        psi = haar_vector(2**m, rng)
        v = ops[int(rng.integers(0, len(ops)))]
        first = v @ psi
        return np.kron(first, copies_vector(psi, r - 1)) if r > 1 else first

    return sample


def stretch_check(m: int, r: int, family=None, mode: str = EXACT, samples: int = 10_000,
                  seed: int = 0, workers: int | None = None) -> GapReport:
    """Check that stretching a family from ``m-1`` to ``m`` qubits keeps the gap controlled.

    LHS uses ``ψ`` on ``m`` qubits with ``I ⊗ V_k`` on copy 1; the right side is
    5 times the same gap on ``m-1`` qubits plus the additive term.
    """
    mode = normalize_mode(mode)
    if m < 2:
        raise ConfigurationError(f"stretching needs m >= 2, got {m}")
    unitaries = _as_family(family, m)
    rhs_gap = _family_gap(m - 1, r, unitaries, widen=False)
    term = stretch_bound_term(m, r)
    bound = 5 * rhs_gap + term
    details = {"m": m, "r": r, "rhs_gap": rhs_gap, "additive_term": term,
               "family_size": len(unitaries)}
    if mode == MC:
        ops = [np.kron(np.eye(2), v) for v in unitaries]
        avg = mc_average(stretch_sampler(m, r, ops), samples, seed, workers=workers)
        return mc_gap(avg, ideal_ensemble_array(m, r), bound, "stretch-bound", True, details)
    lhs = _family_gap(m, r, unitaries, widen=True)
    # the bound is checked even when it exceeds 2; applicability follows the distance cap
    return make_report(lhs, bound, "stretch-bound", details=details)

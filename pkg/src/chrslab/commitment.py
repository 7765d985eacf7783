"""Swap-test bit commitment built from the pad-keyed construction.

Registers: each commitment copy is a pair ``(R, C)`` of ``lam`` qubits.  The
committer to 0 holds ``(1/2^s) Σ_{a,b} |a b 0…⟩_R ⊗ X^aZ^b|ψ⟩_C``; the committer
to 1 holds the maximally entangled state on ``(R, C)``.  A sender state for
``c`` parallel copies is laid out as ``(C_1..C_c, R_1..R_c[, W])``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gap import GapReport, make_report
from .moments import haar_moment_array
from .prs import PauliKey, ideal_ensemble_array, prs_bound, qotp_apply, qotp_unitary
from .qmath import (
    STRUCT_TOL,
    ConfigurationError,
    DensityMatrix,
    NumericError,
    RegisterLayout,
    StateVector,
    cap_qubits,
    check_dim_cap,
    haar_vector,
    max_entangled,
    partial_trace_array,
    trace_norm,
)

BOT = "bot"  # the extractor's "undecided" outcome


def statevector_cap_qubits() -> int:
    """Pure-state simulations may use ``2*cap - 2`` qubits (24 at the default cap)."""
    return 2 * cap_qubits() - 2


def _check_statevector(qubits: float, what: str) -> None:
    cap = statevector_cap_qubits()
    if qubits > cap:
        raise ConfigurationError(
            f"{what} needs {qubits:g} qubits, above the statevector cap of {cap} "
            f"(twice CHRS_CAP_QUBITS minus 2)"
        )


@dataclass(frozen=True)
class CommitmentParams:
    lam: int
    s: int = 1
    copies: int = 1
    t: int = 0

    def __post_init__(self):
        if self.lam < 1:
            raise ConfigurationError(f"lambda must be >= 1, got {self.lam}")
        if not 0 <= self.s <= self.lam:
            raise ConfigurationError(f"pad width s={self.s} must satisfy 0 <= s <= lambda={self.lam}")
        if self.copies < 1:
            raise ConfigurationError(f"copies must be >= 1, got {self.copies}")
        if self.t < 0:
            raise ConfigurationError(f"t must be >= 0, got {self.t}")

    @property
    def dim(self) -> int:
        return 2**self.lam


@dataclass(frozen=True, eq=False)
class CommitmentInstance:
    params: CommitmentParams
    psi: StateVector
    psi_tilde_0: StateVector  # on (R, C)
    psi_tilde_1: StateVector  # on (R, C)
    rho_0: DensityMatrix
    rho_1: DensityMatrix

    def psi_tilde(self, bit: int) -> np.ndarray:
        if bit not in (0, 1):
            raise ConfigurationError(f"commitment bit must be 0 or 1, got {bit!r}")
        return np.asarray(self.psi_tilde_0 if bit == 0 else self.psi_tilde_1)

    def overlap(self) -> float:
        """``|⟨ψ̃_0|ψ̃_1⟩|²``."""
        return float(abs(np.vdot(self.psi_tilde(0), self.psi_tilde(1))) ** 2)


def build_commit_states(params: CommitmentParams, seed) -> CommitmentInstance:
    """Sample ψ and build both normalized commitment states and their C marginals."""
    lam, s = params.lam, params.s
    if 2 * s > lam:
        raise ConfigurationError(
            f"pad width s={s} needs 2s <= lambda={lam}: the key (a, b) is written "
            "into the lambda-qubit R register"
        )
    dim = 2**lam
    check_dim_cap(dim * dim, "commitment state")
    psi = haar_vector(dim, seed)
    tilde0 = np.zeros((dim, dim), dtype=complex)  # [R, C]
    shift = lam - 2 * s
    for key in PauliKey.all_keys(lam, s):
        r_index = ((key.a << s) | key.b) << shift
        tilde0[r_index] = qotp_apply(key, psi)
    tilde0 /= 2**s
    tilde0 = tilde0.reshape(-1)
    tilde1 = np.asarray(max_entangled(dim))
    rho0 = partial_trace_array(np.outer(tilde0, tilde0.conj()), [dim, dim], [1])
    rho1 = partial_trace_array(np.outer(tilde1, tilde1.conj()), [dim, dim], [1])
    return CommitmentInstance(
        params=params,
        psi=StateVector(psi),
        psi_tilde_0=StateVector(tilde0),
        psi_tilde_1=StateVector(tilde1.astype(complex)),
        rho_0=DensityMatrix((rho0 + rho0.conj().T) / 2),
        rho_1=DensityMatrix(rho1),
    )


# ---------------------------------------------------------------------------
# Hiding


def _key_average(moment: np.ndarray, lam: int, s: int) -> np.ndarray:
    """Average of ``(U_k ⊗ I) M (U_k ⊗ I)†`` by explicit matrices over all keys."""
    rest = moment.shape[0] // 2**lam
    out = np.zeros(moment.shape, dtype=complex)
    keys = PauliKey.all_keys(lam, s)
    for key in keys:
        u = np.kron(qotp_unitary(key), np.eye(rest))
        out += u @ moment @ u.conj().T
    return out / len(keys)


def hiding_gap(params: CommitmentParams, commit_copies: int = 1, seed_set=(0,)) -> GapReport:
    """``commit_copies * ∥E_ψ[ρ_0 ⊗ ψ^{⊗t}] − E_ψ[ρ_1 ⊗ ψ^{⊗t}]∥`` with the ensemble bound.

    Both averages are exact (the ψ average is a symmetric-projector moment), so
    ``seed_set`` only tags the report.
    """
    lam, s, t = params.lam, params.s, params.t
    if commit_copies < 1:
        raise ConfigurationError(f"commit_copies must be >= 1, got {commit_copies}")
    check_dim_cap(2 ** (lam * (t + 1)), "hiding term")
    committed = _key_average(haar_moment_array(2**lam, t + 1), lam, s)
    committed = (committed + committed.conj().T) / 2
    if np.allclose(committed.imag, 0.0, atol=0.0):
        committed = committed.real
    reference = np.kron(np.eye(2**lam) / 2**lam, haar_moment_array(2**lam, t))
    per_copy = trace_norm(committed - reference)
    bound, bound_id, pre = prs_bound(lam, s, t + 1)
    return make_report(
        commit_copies * per_copy,
        commit_copies * bound,
        bound_id,
        preconditions=pre,
        details={"lam": lam, "s": s, "t": t, "commit_copies": commit_copies,
                 "per_copy": per_copy, "seeds": list(seed_set)},
    )


# ---------------------------------------------------------------------------
# Swap tests


def _part_dims(layout) -> list[int]:
    if isinstance(layout, RegisterLayout):
        return layout.dims
    return [int(d) for d in layout]


def multi_swap_accept(rho, sigma, layout) -> float:
    """Probability that pairwise swap tests between parts ``A_i`` and ``B_i`` all pass.

    Closed form ``2^{-c} Σ_S tr(ρ_S σ_S)``; ``ρ`` may be sub-normalized.
    """
    dims = _part_dims(layout)
    a = np.asarray(rho)
    b = np.asarray(sigma)
    total = math.prod(dims)
    if a.shape != (total, total) or b.shape != (total, total):
        raise ConfigurationError(
            f"part dims {dims} need {total}x{total} operators, got {a.shape} and {b.shape}"
        )
    c = len(dims)
    acc = 0.0
    for size in range(c + 1):
        for subset in itertools.combinations(range(c), size):
            if subset:
                ra = partial_trace_array(a, dims, subset)
                rb = partial_trace_array(b, dims, subset)
                acc += float(np.real(np.sum(ra * rb.T)))
            else:
                acc += float(np.real(np.trace(a) * np.trace(b)))
    return acc / 2**c


def _swap_perm(c: int, dims: Sequence[int], i: int) -> np.ndarray:
    """Index permutation swapping part ``A_i`` with ``B_i`` on ``A_1..A_c B_1..B_c``."""
    shape = list(dims) + list(dims)
    idx = np.arange(math.prod(shape)).reshape(shape)
    axes = list(range(2 * c))
    axes[i], axes[c + i] = axes[c + i], axes[i]
    return idx.transpose(axes).ravel()


def swap_test_circuit_accept(rho, sigma, layout) -> float:
    """Ancilla-based swap-test circuit (H, controlled-SWAP, H per pair), all outcomes 0."""
    dims = _part_dims(layout)
    c = len(dims)
    joint = np.kron(np.asarray(rho), np.asarray(sigma))
    dim = joint.shape[0]
    check_dim_cap(dim * 2**c, "swap-test circuit")
    anc0 = np.zeros((2**c, 2**c))
    anc0[0, 0] = 1.0
    state = np.kron(anc0, joint).astype(complex)
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    hall = np.eye(1)
    for _ in range(c):
        hall = np.kron(hall, h)
    hfull = np.kron(hall, np.eye(dim))
    state = hfull @ state @ hfull.T
    for i in range(c):
        perm = _swap_perm(c, dims, i)
        swap = np.eye(dim)[perm]
        proj1 = np.zeros((2, 2))
        proj1[1, 1] = 1.0
        ctrl1 = np.kron(np.kron(np.eye(2**i), proj1), np.eye(2 ** (c - i - 1)))
        cswap = np.kron(np.eye(2**c) - ctrl1, np.eye(dim)) + np.kron(ctrl1, swap)
        state = cswap @ state @ cswap.T
    state = hfull @ state @ hfull.T
    return float(np.real(np.trace(state[:dim, :dim])))


def sender_copies(vec_rc: np.ndarray, lam: int, c: int) -> np.ndarray:
    """``ψ̃^{⊗c}`` (each given on ``(R, C)``) rearranged to ``(C_1..C_c, R_1..R_c)``."""
    dim = 2**lam
    per = np.asarray(vec_rc).reshape(dim, dim)  # [R, C]
    out = np.ones(())
    for _ in range(c):
        out = np.multiply.outer(out, per)
    # axes: R_1, C_1, R_2, C_2, ... -> C_1..C_c, R_1..R_c
    axes = [2 * i + 1 for i in range(c)] + [2 * i for i in range(c)]
    return out.transpose(axes).reshape(-1)


def _swap_project(tensor: np.ndarray, c: int) -> np.ndarray:
    """Apply ``Π_i (I + SWAP_i)/2`` pairing sender ``(C_i, R_i)`` with receiver ``(C'_i, R'_i)``.

    ``tensor`` axes: ``C_1..C_c, R_1..R_c, W, C'_1..C'_c, R'_1..R'_c``.
    """
    base = 2 * c + 1
    for i in range(c):
        axes = list(range(tensor.ndim))
        for a, b in ((i, base + i), (c + i, base + c + i)):
            axes[a], axes[b] = axes[b], axes[a]
        tensor = (tensor + tensor.transpose(axes)) / 2
    return tensor


def _reveal_tensor(sender: np.ndarray, receiver: np.ndarray, lam: int, c: int) -> tuple[np.ndarray, int]:
    dim = 2**lam
    base = dim ** (2 * c)
    if sender.shape[0] % base:
        raise ConfigurationError(
            f"sender state length {sender.shape[0]} is not a multiple of 2^(2*lam*c) = {base}"
        )
    wdim = sender.shape[0] // base
    _check_statevector(math.log2(sender.shape[0] * receiver.shape[0]), "reveal simulation")
    joint = np.multiply.outer(sender, receiver)
    shape = [dim] * (2 * c) + [wdim] + [dim] * (2 * c)
    return joint.reshape(shape), wdim


def simulate_reveal(sender_state, b: int, params: CommitmentParams, seed=None,
                    instance: CommitmentInstance | None = None) -> float:
    """Exact probability that the receiver accepts a reveal of ``b``.

    The receiver prepares fresh ``ψ̃_b`` copies and swap-tests each
    ``(C_i, R_i)`` against them; acceptance is ``∥P_b v∥²`` on the joint vector.
    """
    if instance is None:
        instance = build_commit_states(params, seed)
    lam, c = params.lam, params.copies
    sender = np.asarray(sender_state, dtype=complex).reshape(-1)
    norm = np.linalg.norm(sender)
    if norm > 1 + STRUCT_TOL:
        raise NumericError(f"sender state has norm {norm!r} > 1")
    receiver = sender_copies(instance.psi_tilde(b), lam, c)
    tensor, _ = _reveal_tensor(sender, receiver, lam, c)
    projected = _swap_project(tensor, c)
    return float(np.vdot(projected, projected).real)


# ---------------------------------------------------------------------------
# Committer strategies and sum-binding


@dataclass(frozen=True, eq=False)
class CommitterStrategy:
    """A commit-phase state on ``(C_1..C_c, R_1..R_c, W)`` plus the bit it claims."""

    name: str
    state: np.ndarray
    bit: int = 0
    work_dim: int = 1


def make_strategy(name, instance: CommitmentInstance, bit: int = 0) -> CommitterStrategy:
    """Built-in strategies: ``honest`` (commit to ``bit``), ``honest-flip`` (commit to 0),
    ``superposition`` (equal superposition of both commitments, entangled with a
    work qubit), or an explicit state vector on ``(C.., R.., W)``."""
    lam, c = instance.params.lam, instance.params.copies
    if not isinstance(name, str):
        vec = np.asarray(name, dtype=complex).reshape(-1)
        base = 2 ** (2 * lam * c)
        if vec.shape[0] % base:
            raise ConfigurationError(f"custom state length {vec.shape[0]} not a multiple of {base}")
        vec = np.asarray(StateVector.normalized(vec))
        return CommitterStrategy("custom", vec, bit, vec.shape[0] // base)
    if name == "honest":
        return CommitterStrategy(name, sender_copies(instance.psi_tilde(bit), lam, c), bit)
    if name == "honest-flip":
        return CommitterStrategy(name, sender_copies(instance.psi_tilde(0), lam, c), bit)
    if name == "superposition":
        zero = sender_copies(instance.psi_tilde(0), lam, c)
        one = sender_copies(instance.psi_tilde(1), lam, c)
        vec = np.stack([zero, one], axis=1).reshape(-1) / np.sqrt(2)
        return CommitterStrategy(name, vec, bit, 2)
    raise ConfigurationError(
        f"unknown strategy {name!r}; expected honest, honest-flip, superposition or a state"
    )


def binding_sum(strategy, params: CommitmentParams, seed) -> tuple[float, float, float]:
    """Acceptance of reveals of 0 and of 1 from one commit-phase state, and ``p0 + p1 − 1``."""
    instance = build_commit_states(params, seed)
    strat = strategy if isinstance(strategy, CommitterStrategy) else make_strategy(strategy, instance)
    p0 = simulate_reveal(strat.state, 0, params, instance=instance)
    p1 = simulate_reveal(strat.state, 1, params, instance=instance)
    return p0, p1, p0 + p1 - 1.0


# ---------------------------------------------------------------------------
# Extractor and Real/Ideal experiments


@dataclass(frozen=True, eq=False)
class Extractor:
    """Per-copy measurement ``{Π_0, Π_1, Π_⊥}`` on C and the 2/3-majority aggregate."""

    pi0: np.ndarray
    pi1: np.ndarray
    pi_bot: np.ndarray
    copies: int
    rank0: int = field(default=0)

    def aggregate(self, outcomes: Sequence) -> object:
        c = len(outcomes)
        for bit in (0, 1):
            if sum(1 for o in outcomes if o == bit) > 2 * c / 3:
                return bit
        return BOT

    def projector(self, outcome) -> np.ndarray:
        """Coarse-grained projector ``Π̃_outcome`` on ``C_1..C_c``."""
        per = {0: self.pi0, 1: self.pi1, BOT: self.pi_bot}
        dim = self.pi0.shape[0]
        out = np.zeros((dim**self.copies,) * 2, dtype=complex)
        for combo in itertools.product((0, 1, BOT), repeat=self.copies):
            if self.aggregate(combo) != outcome:
                continue
            term = np.ones((1, 1))
            for o in combo:
                term = np.kron(term, per[o])
            out += term
        return out


def build_extractor(params: CommitmentParams, instance: CommitmentInstance | None = None,
                    seed=None) -> Extractor:
    """``Π_0`` = support of ``ρ_0``, ``Π_1`` = its complement, ``Π_⊥`` = 0."""
    if instance is None:
        instance = build_commit_states(params, seed)
    evals, evecs = np.linalg.eigh(np.asarray(instance.rho_0))
    support = evecs[:, evals > STRUCT_TOL]
    pi0 = support @ support.conj().T
    dim = pi0.shape[0]
    pi1 = np.eye(dim) - pi0
    return Extractor(pi0=pi0, pi1=pi1, pi_bot=np.zeros((dim, dim)), copies=params.copies,
                     rank0=int(support.shape[1]))


@dataclass(frozen=True)
class RealIdealResult:
    gap: float
    fail_probability: float
    accept_real: float
    accept_ideal: float
    bit: int


def _work_marginal(tensor: np.ndarray, wdim: int, c: int) -> np.ndarray:
    """Reduced operator on W of a joint tensor with W at axis ``2c``."""
    moved = np.moveaxis(tensor, 2 * c, -1).reshape(-1, wdim)
    return moved.T @ moved.conj()


def real_ideal_gap(committer_strategy, params: CommitmentParams, seed=None, bit: int | None = None,
                   instance: CommitmentInstance | None = None) -> RealIdealResult:
    """Distance between the Real and Ideal experiment outputs for one committer.

    Real: the receiver measures ``(P_b, I − P_b)``.  Ideal: the extractor first
    measures ``Π̃_b`` versus the rest; acceptance with a mismatched extraction is
    ``fail``.  The returned gap is
    ``∥τ_real^b − τ_ideal^b∥ + ∥τ_real^⊥ − τ_ideal^⊥∥ + tr τ_fail``
    over the committer's work register.
    """
    if instance is None:
        instance = build_commit_states(params, seed)
    strat = committer_strategy
    if not isinstance(strat, CommitterStrategy):
        strat = make_strategy(strat, instance, 0 if bit is None else bit)
    b = strat.bit if bit is None else bit
    lam, c = params.lam, params.copies
    extractor = build_extractor(params, instance)
    receiver = sender_copies(instance.psi_tilde(b), lam, c)
    tensor, wdim = _reveal_tensor(np.asarray(strat.state, dtype=complex), receiver, lam, c)
    shape = tensor.shape

    accepted_real = _swap_project(tensor, c)
    pi_b = extractor.projector(b)
    cdim = pi_b.shape[0]
    flat = tensor.reshape(cdim, -1)
    extracted = (pi_b @ flat).reshape(shape)
    other = tensor - extracted
    accepted_ideal = _swap_project(extracted, c)
    failed = _swap_project(other, c)

    total = _work_marginal(tensor, wdim, c)
    tau_real_b = _work_marginal(accepted_real, wdim, c)
    tau_ideal_b = _work_marginal(accepted_ideal, wdim, c)
    tau_fail = _work_marginal(failed, wdim, c)
    tau_real_bot = total - tau_real_b
    tau_ideal_bot = total - tau_ideal_b - tau_fail
    fail = float(np.trace(tau_fail).real)
    gap = trace_norm(tau_real_b - tau_ideal_b) + trace_norm(tau_real_bot - tau_ideal_bot) + fail
    return RealIdealResult(
        gap=gap,
        fail_probability=fail,
        accept_real=float(np.trace(tau_real_b).real),
        accept_ideal=float(np.trace(tau_ideal_b).real),
        bit=b,
    )

"""Exact and Monte Carlo ensemble averages over Haar states and unitaries.

Monte Carlo determinism: sample ``i`` of a run seeded with ``seed`` draws from
its own generator, seeded by a 64-bit hash of ``(seed, i)``.  Samples are
accumulated in a fixed partition of contiguous blocks whose boundaries depend
only on the sample count, and block sums are combined in block order, so the
mean is bit-identical for any number of workers.
"""
from __future__ import annotations

import hashlib
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gap import GapReport, make_report
from .qmath import (
    ConfigurationError,
    DensityMatrix,
    cap_qubits,
    check_dim_cap,
    haar_unitary,
    haar_vector,
    max_entangled,
    partial_trace_array,
    sym_projector_array,
    trace_norm,
)

MC_HERMITICITY_TOL = 1e-6
MAX_BLOCKS = 32
CHUNK = 256
BOOTSTRAP_RESAMPLES = 200

EXACT = "exact"
MC = "mc"
_MODE_ALIASES = {
    "exact": EXACT,
    "exact-symmetric": EXACT,
    "mc": MC,
    "monte-carlo": MC,
}

_U64 = (1 << 64) - 1


def normalize_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[str(mode).lower()]
    except KeyError:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {sorted(_MODE_ALIASES)}")


def sample_seed(seed: int, index: int, stream: str = "") -> int:
    """Stable 64-bit hash of ``(seed, index)`` (plus an optional stream tag)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<QQ", int(seed) & _U64, int(index) & _U64))
    if stream:
        h.update(stream.encode())
    return int.from_bytes(h.digest(), "little")


def sample_rng(seed: int, index: int, stream: str = "") -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(sample_seed(seed, index, stream)))


def block_bounds(samples: int) -> list[tuple[int, int]]:
    nblocks = min(samples, MAX_BLOCKS)
    edges = [(samples * i) // nblocks for i in range(nblocks + 1)]
    return [(edges[i], edges[i + 1]) for i in range(nblocks)]


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of a pad-keyed ensemble: ``m`` state qubits, ``n`` key bits, ``r`` copies."""

    m: int
    n: int
    r: int
    mode: str = EXACT
    samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        if self.m < 1 or self.r < 1 or self.n < 0:
            raise ConfigurationError(f"need m >= 1, r >= 1, n >= 0; got m={self.m} r={self.r} n={self.n}")
        if self.s > self.m:
            raise ConfigurationError(f"pad width n/2 = {self.s} exceeds m = {self.m}")
        if self.mode == EXACT and self.r * self.m > cap_qubits():
            raise ConfigurationError(
                f"exact mode needs r*m <= {cap_qubits()} qubits, got r*m = {self.r * self.m}"
            )
        if self.mode == MC and self.samples < 2:
            raise ConfigurationError(f"monte-carlo mode needs samples >= 2, got {self.samples}")

    @property
    def s(self) -> int:
        # an odd key length loses its last bit: the pad uses n // 2 qubits
        return self.n // 2


@dataclass(frozen=True)
class MCAverage:
    mean: DensityMatrix
    samples: int
    entrywise_stderr: float
    seed: int
    stderr_matrix: np.ndarray = field(repr=False)
    block_means: np.ndarray = field(repr=False)
    block_counts: np.ndarray = field(repr=False)

    def bootstrap_distance_error(self, resamples: int = BOOTSTRAP_RESAMPLES) -> float:
        """RMS trace-norm deviation of bootstrap means (over blocks) from the mean."""
        return bootstrap_trace_error(self.block_means, self.block_counts, self.seed, resamples)


def bootstrap_trace_error(block_means, block_counts, seed, resamples=BOOTSTRAP_RESAMPLES) -> float:
    nb = block_means.shape[0]
    if nb < 2:
        return 0.0
    counts = np.asarray(block_counts, dtype=float)
    sums = block_means * counts[:, None, None]
    mean = sums.sum(axis=0) / counts.sum()
    rng = sample_rng(seed, 0, "bootstrap")
    acc = 0.0
    for _ in range(resamples):
        pick = rng.integers(0, nb, size=nb)
        boot = sums[pick].sum(axis=0) / counts[pick].sum()
        acc += trace_norm(boot - mean) ** 2
    return math.sqrt(acc / resamples)


# ---------------------------------------------------------------------------
# Exact moments


def haar_moment_array(d: int, r: int) -> np.ndarray:
    if r == 0:
        return np.ones((1, 1))
    return sym_projector_array(d, r) / math.comb(d + r - 1, r)


def haar_moment(d: int, r: int) -> DensityMatrix:
    """``E_ψ ψ^{⊗r}`` over Haar ψ in dimension ``d``: the normalized symmetric projector."""
    return DensityMatrix(haar_moment_array(d, r))


def _twirl_two_copies(x: np.ndarray, d: int, rest: int) -> np.ndarray:
    """``E_U (U⊗U⊗I) X (U⊗U⊗I)†`` for X on ``C^d ⊗ C^d ⊗ C^rest``.

    Schur's lemma on the symmetric and antisymmetric irreps of the twirled pair.
    """
    sym = sym_projector_array(d, 2)
    anti = np.eye(d * d) - sym
    dsym = d * (d + 1) // 2
    danti = d * (d - 1) // 2
    out = np.zeros_like(x)
    for proj, dim in ((sym, dsym), (anti, danti)):
        if dim == 0:
            continue
        proj_full = np.kron(proj, np.eye(rest))
        reduced = partial_trace_array(proj_full @ x, [d * d, rest], [1])
        out = out + np.kron(proj / dim, reduced)
    return out


def _regroup(x: np.ndarray, dims: list[int], perm: list[int]) -> np.ndarray:
    n = len(dims)
    total = math.prod(dims)
    t = x.reshape(dims + dims).transpose(perm + [n + p for p in perm])
    return t.reshape(total, total)


def phi_u_vector(u: np.ndarray) -> np.ndarray:
    """``(U⊗I)|Φ_d⟩`` as a vector: amplitude of ``|j,i⟩`` is ``U[j,i]/√d``."""
    d = u.shape[0]
    return u.reshape(-1) / np.sqrt(d)


def copies_vector(v: np.ndarray, r: int) -> np.ndarray:
    out = v
    for _ in range(r - 1):
        out = np.kron(out, v)
    return out


def phi_u_moment(d: int, r: int, mode: str = EXACT, samples: int = 100_000, seed: int = 0,
                 workers: int | None = None) -> DensityMatrix:
    """``E_U φ_U^{⊗r}`` with ``φ_U = (U⊗I)|Φ_d⟩``, on dimension ``d^{2r}``.

    Exact mode supports ``r <= 2``; Monte Carlo mode any ``r``.
    """
    mode = normalize_mode(mode)
    if d < 1 or r < 1:
        raise ConfigurationError(f"need d >= 1 and r >= 1, got d={d}, r={r}")
    check_dim_cap(d ** (2 * r), "phi_U moment")
    if mode == MC:
        return mc_average(phi_u_sampler(d, r), samples, seed, workers=workers).mean
    if r == 1:
        return DensityMatrix(np.eye(d * d) / (d * d))
    if r != 2:
        raise ConfigurationError(
            f"exact phi_U moment is implemented for r <= 2 only (got r={r}); use mode='mc'"
        )
    phi = np.asarray(max_entangled(d))
    x = np.outer(np.kron(phi, phi), np.kron(phi, phi))
    # registers A1 B1 A2 B2 -> A1 A2 B1 B2, twirl the A pair, then back
    dims = [d, d, d, d]
    grouped = _regroup(x, dims, [0, 2, 1, 3])
    twirled = _twirl_two_copies(grouped, d, d * d)
    back = _regroup(twirled, dims, [0, 2, 1, 3])
    return DensityMatrix((back + back.T) / 2)


def phi_u_sampler(d: int, r: int):
    def sample(rng):
        return copies_vector(phi_u_vector(haar_unitary(d, rng)), r)

    return sample


def haar_copies_sampler(d: int, r: int):
    def sample(rng):
        return copies_vector(haar_vector(d, rng), r)

    return sample


# ---------------------------------------------------------------------------
# Monte Carlo


def _accumulate_block(sampler, seed: int, lo: int, hi: int):
    total = None
    for start in range(lo, hi, CHUNK):
        stop = min(start + CHUNK, hi)
        outs = [np.asarray(sampler(sample_rng(seed, i))) for i in range(start, stop)]
        if outs[0].ndim == 1:
            vecs = np.stack(outs)
            part = vecs.T @ vecs.conj()
        else:
            part = np.sum(np.stack(outs), axis=0)
        total = part if total is None else total + part
    return total


def mc_average(sampler: Callable[[np.random.Generator], np.ndarray], samples: int, seed: int,
               workers: int | None = None) -> MCAverage:
    """Mean of ``sampler(rng_i)`` over ``samples`` per-index seeded generators.

    The sampler returns either a pure-state vector ``v`` (contributing ``vv†``) or
    a density matrix.
    """
    if samples < 2:
        raise ConfigurationError(f"mc_average needs samples >= 2, got {samples}")
    blocks = block_bounds(samples)
    if workers is None or workers <= 1:
        sums = [_accumulate_block(sampler, seed, lo, hi) for lo, hi in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(lambda b: _accumulate_block(sampler, seed, *b), blocks))
    counts = np.array([hi - lo for lo, hi in blocks])
    total = sums[0].copy()
    for part in sums[1:]:
        total = total + part
    mean = total / samples
    block_means = np.stack([s / c for s, c in zip(sums, counts)])
    if len(blocks) > 1:
        stderr = np.std(block_means, axis=0, ddof=1) / np.sqrt(len(blocks))
    else:
        stderr = np.zeros(mean.shape)
    if np.allclose(mean.imag, 0.0, atol=0.0):
        mean = mean.real
        block_means = block_means.real
    return MCAverage(
        mean=DensityMatrix(mean, tol=MC_HERMITICITY_TOL),
        samples=samples,
        entrywise_stderr=float(np.max(stderr)),
        seed=seed,
        stderr_matrix=stderr,
        block_means=block_means,
        block_counts=counts,
    )


def mc_values(fn: Callable[[np.random.Generator], float], samples: int, seed: int,
              stream: str = "") -> np.ndarray:
    """Per-sample scalar values in index order, under the same seeding contract."""
    if samples < 1:
        raise ConfigurationError(f"samples must be positive, got {samples}")
    return np.array([fn(sample_rng(seed, i, stream)) for i in range(samples)], dtype=float)


def mc_gap(avg: MCAverage, exact: np.ndarray, bound: float, bound_id: str,
           preconditions: bool = True, details=None) -> GapReport:
    dist = trace_norm(np.asarray(avg.mean) - exact)
    err = avg.bootstrap_distance_error()
    det = {"samples": avg.samples, "entrywise_stderr": avg.entrywise_stderr}
    det.update(details or {})
    return make_report(dist, bound, bound_id, mode=MC, mc_error=err,
                       preconditions=preconditions, details=det)


def harrow_gap(d: int, r: int, mode: str = EXACT, samples: int = 100_000, seed: int = 0,
               workers: int | None = None) -> GapReport:
    """Distance between the Haar moment at ``d²`` and the ``φ_U`` moment, against ``r²/d``."""
    mode = normalize_mode(mode)
    bound = r * r / d
    pre = r * r <= d
    haar = haar_moment_array(d * d, r)
    if mode == MC:
        avg = mc_average(phi_u_sampler(d, r), samples, seed, workers=workers)
        return mc_gap(avg, haar, bound, "harrow-bound", pre, {"d": d, "r": r})
    phi = np.asarray(phi_u_moment(d, r, EXACT))
    return make_report(trace_norm(haar - phi), bound, "harrow-bound", preconditions=pre,
                       details={"d": d, "r": r})

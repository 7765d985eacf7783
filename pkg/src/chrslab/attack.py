"""Multi-copy distinguishing attack on pad-keyed states, plus Haar concentration probes.

Register layout for the attack: ``c`` pairs ``(cand_i, ref_i)``, each an
``m``-qubit register, ordered ``cand_1, ref_1, cand_2, ref_2, ...``.  The key-k
test rotates each reference copy by ``U_k`` and projects the pair onto its
symmetric subspace; ``ell`` logical repetitions cycle over the ``c`` pairs.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .moments import mc_values, sample_rng, sample_seed
from .prs import PauliKey, qotp_unitary
from .qmath import (
    ConfigurationError,
    HermitianOp,
    check_dim_cap,
    haar_vector,
)

PRUNE_THRESHOLD = 1e-12
MAX_KEY_BITS = 6


class AttackTarget(Protocol):
    """Plug-in target: an enumerable key set and a per-key unitary on one register."""

    def keys(self) -> Sequence: ...

    def unitary(self, key) -> np.ndarray: ...


class QotpTarget:
    """The in-repo pad-keyed family on ``m`` qubits with ``n`` key bits (pad width ``n // 2``)."""

    def __init__(self, m: int, n: int):
        if n < 0 or n // 2 > m:
            raise ConfigurationError(f"key length n={n} needs 0 <= n/2 <= m={m}")
        self.m = m
        self.n = n
        self.s = n // 2
        self._keys = PauliKey.all_keys(m, self.s)
        self._cache: dict = {}

    def keys(self) -> list[PauliKey]:
        return list(self._keys)

    def unitary(self, key: PauliKey) -> np.ndarray:
        u = self._cache.get(key)
        if u is None:
            u = qotp_unitary(key)
            self._cache[key] = u
        return u


@dataclass(frozen=True)
class AttackConfig:
    m: int
    n: int
    c: int = 1
    ell: int = 1
    order_seed: int = 0
    trials: int = 100

    def __post_init__(self):
        if self.m < 1 or self.c < 1:
            raise ConfigurationError(f"need m >= 1 and c >= 1, got m={self.m}, c={self.c}")
        if self.ell < 1:
            raise ConfigurationError(f"ell must be >= 1, got {self.ell}")
        if not 0 <= self.n <= MAX_KEY_BITS:
            raise ConfigurationError(f"key bits n must lie in [0, {MAX_KEY_BITS}], got {self.n}")
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        check_dim_cap(2 ** (2 * self.m * self.c), "attack register")

    @property
    def effective_repetitions(self) -> int:
        # cycling over c pairs: repeats of a pair are idempotent
        return min(self.ell, self.c)


@dataclass(frozen=True)
class AttackReport:
    accept_rate_pseudorandom: float
    stderr_pseudorandom: float
    accept_rate_haar: float
    stderr_haar: float
    advantage: float
    case1_floor: float
    case2_ceiling: float
    case2_ceiling_effective: float
    case2_ceiling_measured: float
    case2_applicable: bool
    min_trial_difference: float
    per_trial_pseudorandom: np.ndarray = field(repr=False)
    per_trial_haar: np.ndarray = field(repr=False)

    def metrics(self) -> dict[str, tuple[float, float | None]]:
        return {
            "accept_rate_pseudorandom": (self.accept_rate_pseudorandom, self.stderr_pseudorandom),
            "accept_rate_haar": (self.accept_rate_haar, self.stderr_haar),
            "advantage": (self.advantage, math.hypot(self.stderr_pseudorandom, self.stderr_haar)),
            "min_trial_difference": (self.min_trial_difference, None),
            "case2_ceiling_measured": (self.case2_ceiling_measured, None),
            "case2_ceiling_effective": (self.case2_ceiling_effective, None),
        }


# ---------------------------------------------------------------------------
# Projectors


def _apply_on_axis(tensor: np.ndarray, op: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(op, tensor, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def _pair_project(tensor: np.ndarray, u: np.ndarray, pair: int) -> np.ndarray:
    """``(U†)_ref Π_sym (U)_ref`` on pair ``pair`` of a tensor with axes ``cand_1, ref_1, ...``."""
    cand, ref = 2 * pair, 2 * pair + 1
    rotated = _apply_on_axis(tensor, u, ref)
    axes = list(range(tensor.ndim))
    axes[cand], axes[ref] = axes[ref], axes[cand]
    sym = (rotated + rotated.transpose(axes)) / 2
    return _apply_on_axis(sym, u.conj().T, ref)


def apply_key_projector(vec: np.ndarray, u: np.ndarray, config: AttackConfig) -> np.ndarray:
    """``Π_k v`` for a vector (or a matrix whose rows index the register) without building ``Π_k``."""
    dim = 2**config.m
    arr = np.asarray(vec)
    trailing = arr.shape[1:]
    tensor = arr.reshape([dim] * (2 * config.c) + list(trailing))
    for rep in range(config.ell):
        pair = rep % config.c
        if rep >= config.c:
            break  # remaining repetitions revisit pairs and act as the identity on the range
        tensor = _pair_project(tensor, u, pair)
    return tensor.reshape(arr.shape)


def attack_projector(k, config: AttackConfig, target: AttackTarget | None = None) -> HermitianOp:
    """The key-``k`` projector as an explicit operator on all ``2c`` registers."""
    target = target or QotpTarget(config.m, config.n)
    dim = 2 ** (2 * config.m * config.c)
    u = target.unitary(k)
    mat = apply_key_projector(np.eye(dim, dtype=complex), u, config)
    return HermitianOp((mat + mat.conj().T) / 2)


# ---------------------------------------------------------------------------
# Sequential OR test


def key_order(n_keys: int, order_seed: int, trial: int = 0) -> np.ndarray:
    return sample_rng(order_seed, trial, "key-order").permutation(n_keys)


def sequential_or_test(rho, config: AttackConfig, target: AttackTarget | None = None,
                       order=None, trial: int = 0,
                       threshold: float = PRUNE_THRESHOLD) -> tuple[float, np.ndarray]:
    """Measure ``{Π_k, I − Π_k}`` key by key (random order) and accept on the first success.

    ``rho`` is a pure vector or a density matrix.  Returns the exact acceptance
    probability and the sub-normalized state of the all-reject branch.
    Branches whose mass falls below ``threshold`` are dropped.
    """
    target = target or QotpTarget(config.m, config.n)
    keys = list(target.keys())
    if order is None:
        order = key_order(len(keys), config.order_seed, trial)
    state = np.asarray(rho, dtype=complex)
    is_vector = state.ndim == 1
    mass = float(np.vdot(state, state).real) if is_vector else float(np.trace(state).real)
    accept = 0.0
    for idx in order:
        if mass < threshold:
            break
        u = target.unitary(keys[idx])
        if is_vector:
            hit = apply_key_projector(state, u, config)
            p = float(np.vdot(hit, hit).real)
            state = state - hit
        else:
            left = apply_key_projector(state, u, config)
            both = apply_key_projector(left.conj().T, u, config).conj().T
            p = float(np.trace(both).real)
            # (I-P) rho (I-P) = rho - P rho - rho P + P rho P
            state = state - left - left.conj().T + both
        accept += p
        mass = mass - p
    return accept, state


# ---------------------------------------------------------------------------
# Attack experiment


def _pair_state(cand: np.ndarray, ref: np.ndarray, c: int) -> np.ndarray:
    pair = np.kron(cand, ref)
    out = pair
    for _ in range(c - 1):
        out = np.kron(out, pair)
    return out


def _trial(config: AttackConfig, target: AttackTarget, seed: int, index: int):
    rng = sample_rng(seed, index, "attack-trial")
    dim = 2**config.m
    keys = list(target.keys())
    psi = haar_vector(dim, rng)
    k_index = int(rng.integers(0, len(keys)))
    phi = haar_vector(dim, rng)
    u_true = target.unitary(keys[k_index])
    order = key_order(len(keys), config.order_seed ^ sample_seed(seed, 0, "order"), index)
    pr_state = _pair_state(u_true @ psi, psi, config.c)
    rnd_state = _pair_state(phi, psi, config.c)
    p_pr, _ = sequential_or_test(pr_state, config, target, order=order)
    p_rnd, _ = sequential_or_test(rnd_state, config, target, order=order)
    hit = apply_key_projector(pr_state, u_true, config)
    eps = 1.0 - float(np.vdot(hit, hit).real)
    delta = 0.0
    for key in keys:
        h = apply_key_projector(rnd_state, target.unitary(key), config)
        delta = max(delta, float(np.vdot(h, h).real))
    return p_pr, p_rnd, eps, delta


def run_attack(config: AttackConfig, seed: int = 0, target: AttackTarget | None = None,
               workers: int | None = None) -> AttackReport:
    """Exact per-trial acceptance of the OR test on pseudorandom vs Haar candidates.

    Trials sample ``(ψ, k, φ)`` and a key order from per-trial seeds, so the
    aggregate does not depend on the number of workers.
    """
    target = target or QotpTarget(config.m, config.n)
    n_keys = len(list(target.keys()))

    def one(i):
        return _trial(config, target, seed, i)

    if workers is None or workers <= 1:
        rows = [one(i) for i in range(config.trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(config.trials)))
    arr = np.array(rows, dtype=float)
    pr, rnd, eps, delta = arr.T
    t = config.trials
    se = (lambda x: float(np.std(x, ddof=1) / np.sqrt(t)) if t > 1 else 0.0)
    eps_mean = float(np.mean(eps))
    nominal = 4 * n_keys * 0.75**config.ell
    return AttackReport(
        accept_rate_pseudorandom=float(np.mean(pr)),
        stderr_pseudorandom=se(pr),
        accept_rate_haar=float(np.mean(rnd)),
        stderr_haar=se(rnd),
        advantage=float(np.mean(pr) - np.mean(rnd)),
        case1_floor=(1 - eps_mean) ** 2 / 7,
        case2_ceiling=nominal,
        case2_ceiling_effective=4 * n_keys * 0.75**config.effective_repetitions,
        case2_ceiling_measured=float(np.mean(4 * n_keys * delta)),
        case2_applicable=nominal <= 1.0,
        min_trial_difference=float(np.min(pr - rnd)),
        per_trial_pseudorandom=pr,
        per_trial_haar=rnd,
    )


# ---------------------------------------------------------------------------
# Concentration statistics


def overlap_tail_bound(d: int) -> float:
    return 8 * math.exp(-d / 600)


def haar_overlap_tail_stats(d: int, samples: int, seed: int) -> tuple[float, float]:
    """(fraction with ``|⟨ψ|e_0⟩|² ≥ 1/2``, its binomial standard error)."""
    if d < 1:
        raise ConfigurationError(f"d must be >= 1, got {d}")
    vals = mc_values(lambda rng: float(abs(haar_vector(d, rng)[0]) ** 2 >= 0.5), samples, seed,
                     "overlap")
    frac = float(np.mean(vals))
    return frac, math.sqrt(max(frac * (1 - frac), 0.0) / samples)


def haar_overlap_tail(d: int, samples: int = 100_000, seed: int = 0) -> float:
    """Empirical ``Pr[|⟨ψ|ψ_0⟩|² ≥ 1/2]`` against a fixed reference state."""
    return haar_overlap_tail_stats(d, samples, seed)[0]


def levy_delta(m: int) -> float:
    return 18 * math.sqrt(m) / 2 ** (m / 2)


def levy_bound(m: int, delta: float | None = None) -> float:
    delta = levy_delta(m) if delta is None else delta
    return 4 * math.exp(-(2**m) * delta**2 / (18 * math.pi**3))


def first_qubit_weights(m: int, samples: int, seed: int) -> np.ndarray:
    half = 2 ** (m - 1)
    return mc_values(lambda rng: float(np.sum(np.abs(haar_vector(2**m, rng)[:half]) ** 2)),
                     samples, seed, "levy")


def levy_concentration_probe(m: int, samples: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Empirical ``Pr[|f − 1/2| ≥ δ]`` for ``f = ∥⟨0_1|ψ⟩∥²`` and the concentration bound."""
    if m < 1:
        raise ConfigurationError(f"m must be >= 1, got {m}")
    f = first_qubit_weights(m, samples, seed)
    tail = float(np.mean(np.abs(f - 0.5) >= levy_delta(m)))
    return tail, levy_bound(m)

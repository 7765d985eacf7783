import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chrslab.qmath import (
    ConfigurationError,
    DensityMatrix,
    HermitianOp,
    NumericError,
    RegisterLayout,
    StateVector,
    haar_state,
    haar_unitary,
    is_projector,
    kron,
    lueders_update,
    max_entangled,
    partial_trace,
    partial_trace_array,
    permutation_operator,
    read_dump,
    sym_projector,
    trace_norm,
    write_dump,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
SETTINGS = settings(max_examples=30, deadline=None)


def random_density(dim, rng, rank=None):
    rank = rank or dim
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim, rng):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2


def naive_partial_trace(rho, dims, keep):
    """Loop-based reference: sum over matching traced indices."""
    n = len(dims)
    kept_dims = [dims[i] for i in keep]
    dk = math.prod(kept_dims)
    out = np.zeros((dk, dk), dtype=complex)
    for row in np.ndindex(*dims):
        for col in np.ndindex(*dims):
            if any(row[i] != col[i] for i in range(n) if i not in keep):
                continue
            r = np.ravel_multi_index([row[i] for i in keep], kept_dims)
            c = np.ravel_multi_index([col[i] for i in keep], kept_dims)
            out[r, c] += rho[np.ravel_multi_index(row, dims), np.ravel_multi_index(col, dims)]
    return out


class TestTypes:
    def test_state_vector_rejects_unnormalized(self):
        with pytest.raises(NumericError):
            StateVector(np.array([1.0, 1.0]))

    def test_state_vector_normalized_constructor(self):
        v = StateVector.normalized([3.0, 4.0])
        assert np.allclose(np.asarray(v), [0.6, 0.8])

    def test_density_rejects_non_hermitian(self):
        with pytest.raises(NumericError):
            DensityMatrix(np.array([[0.5, 1.0], [0.0, 0.5]]))

    def test_density_rejects_negative(self):
        with pytest.raises(NumericError):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_density_trace_mass(self):
        rho = DensityMatrix(np.diag([0.25, 0.25]), trace_mass=0.5)
        assert rho.subnormalized
        with pytest.raises(NumericError):
            DensityMatrix(np.diag([0.25, 0.25]))

    def test_layout_unique_labels(self):
        with pytest.raises(ConfigurationError):
            RegisterLayout.of(("A", 2), ("A", 2))
        assert RegisterLayout.of(("A", 2), ("B", 3)).dim == 6

    def test_hermitian_op_rejects(self):
        with pytest.raises(NumericError):
            HermitianOp(np.array([[0, 1j], [1j, 0]]))


class TestKron:
    def test_identity(self):
        assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_basis(self):
        assert np.array_equal(kron([1, 0], [0, 1]), [0, 1, 0, 0])

    def test_x_z_hand_expansion(self):
        x = np.array([[0, 1], [1, 0]])
        z = np.array([[1, 0], [0, -1]])
        expected = np.array([
            [0, 0, 1, 0],
            [0, 0, 0, -1],
            [1, 0, 0, 0],
            [0, -1, 0, 0],
        ])
        assert np.array_equal(kron(x, z), expected)


class TestPartialTrace:
    def test_bell_marginal(self):
        phi = np.asarray(max_entangled(2))
        layout = RegisterLayout.of(("L", 2), ("R", 2))
        out = partial_trace(DensityMatrix(np.outer(phi, phi)), layout, {"L"})
        assert np.allclose(np.asarray(out), np.eye(2) / 2, atol=1e-12)

    def test_product_factorizes(self):
        rng = np.random.default_rng(3)
        rho, sigma = random_density(2, rng), random_density(3, rng)
        layout = RegisterLayout.of(("A", 2), ("B", 3))
        out = partial_trace(np.kron(rho, sigma), layout, ["A"])
        assert np.allclose(out, rho, atol=1e-12)

    def test_against_loop_oracle(self):
        psi = np.asarray(haar_state(8, 11))
        rho = np.outer(psi, psi.conj())
        for keep in ([2], [0, 2], [1]):
            fast = partial_trace_array(rho, [2, 2, 2], keep)
            assert np.max(np.abs(fast - naive_partial_trace(rho, [2, 2, 2], keep))) <= 1e-12

    def test_unknown_label(self):
        layout = RegisterLayout.of(("A", 2), ("B", 2))
        with pytest.raises(ConfigurationError):
            partial_trace(np.eye(4) / 4, layout, ["C"])

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            partial_trace(np.eye(4) / 4, RegisterLayout.of(("A", 2), ("B", 3)), ["A"])

    @SETTINGS
    @given(seeds)
    def test_composes(self, seed):
        rng = np.random.default_rng(seed)
        dims = [2, 3, 2]
        rho = random_density(12, rng)
        layout = RegisterLayout.of(("A", 2), ("B", 3), ("C", 2))
        once = partial_trace(rho, layout, ["B"])
        step = partial_trace(rho, layout, ["B", "C"])
        twice = partial_trace(step, RegisterLayout.of(("B", 3), ("C", 2)), ["B"])
        assert np.max(np.abs(once - twice)) <= 1e-12
        assert abs(np.trace(once) - 1) <= 1e-12
        assert dims == layout.dims


class TestTraceNorm:
    def test_pauli_z(self):
        assert trace_norm(np.diag([1.0, -1.0])) == pytest.approx(2.0)

    def test_zero_difference(self):
        rho = random_density(4, np.random.default_rng(0))
        assert trace_norm(rho - rho) == 0.0

    def test_zero_vs_plus(self):
        zero = np.diag([1.0, 0.0])
        plus = np.full((2, 2), 0.5)
        assert trace_norm(zero - plus) == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_rejects_non_hermitian(self):
        with pytest.raises(NumericError):
            trace_norm(np.array([[0.0, 1.0], [0.0, 0.0]]))

    @SETTINGS
    @given(seeds, st.floats(min_value=-3, max_value=3, allow_nan=False))
    def test_is_a_norm(self, seed, scale):
        rng = np.random.default_rng(seed)
        a, b = random_hermitian(4, rng), random_hermitian(4, rng)
        assert trace_norm(a + b) <= trace_norm(a) + trace_norm(b) + 1e-9
        assert trace_norm(scale * a) == pytest.approx(abs(scale) * trace_norm(a), rel=1e-9, abs=1e-8)


class TestHaar:
    def test_state_determinism(self):
        assert np.array_equal(np.asarray(haar_state(8, 5)), np.asarray(haar_state(8, 5)))

    def test_state_first_moment(self):
        n = 10_000
        acc = np.zeros((4, 4), dtype=complex)
        for i in range(n):
            v = np.asarray(haar_state(4, i))
            acc += np.outer(v, v.conj())
        # entrywise std of |v_i|^2 at d=4 is about 0.19; 5 sigma allowance
        assert np.max(np.abs(acc / n - np.eye(4) / 4)) < 5 * 0.2 / math.sqrt(n)

    def test_basis_weight(self):
        w = np.mean([abs(np.asarray(haar_state(8, i))[0]) ** 2 for i in range(5000)])
        assert w == pytest.approx(1 / 8, abs=0.01)

    def test_unitary(self):
        u = haar_unitary(5, 0)
        assert np.max(np.abs(u.conj().T @ u - np.eye(5))) <= 1e-9
        assert np.array_equal(u, haar_unitary(5, 0))

    def test_unitary_twirl(self):
        acc = np.zeros((2, 2), dtype=complex)
        n = 10_000
        for i in range(n):
            u = haar_unitary(2, i)
            acc += np.outer(u[:, 0], u[:, 0].conj())
        assert np.max(np.abs(acc / n - np.eye(2) / 2)) < 0.02

    def test_invariance_second_moment(self):
        v = haar_unitary(3, 99)
        n = 4000
        a = np.zeros((9, 9), dtype=complex)
        b = np.zeros((9, 9), dtype=complex)
        for i in range(n):
            psi = np.asarray(haar_state(3, i))
            x = np.kron(psi, psi)
            y = np.kron(v @ psi, v @ psi)
            a += np.outer(x, x.conj())
            b += np.outer(y, y.conj())
        assert trace_norm((a - b) / n) < 0.15


class TestSymProjector:
    def test_r1(self):
        assert np.allclose(np.asarray(sym_projector(3, 1)), np.eye(3))

    def test_two_qubits(self):
        singlet = np.array([0, 1, -1, 0]) / math.sqrt(2)
        p = np.asarray(sym_projector(2, 2))
        assert np.allclose(p, np.eye(4) - np.outer(singlet, singlet), atol=1e-12)
        assert round(np.trace(p)) == 3

    @pytest.mark.parametrize("d,r", [(2, 3), (3, 2), (2, 4), (3, 3)])
    def test_rank_and_projector(self, d, r):
        p = np.asarray(sym_projector(d, r))
        assert np.trace(p) == pytest.approx(math.comb(d + r - 1, r))
        assert np.max(np.abs(p @ p - p)) <= 1e-12
        assert np.max(np.abs(p - p.T)) <= 1e-12

    def test_rejects_large_r(self):
        with pytest.raises(ConfigurationError):
            sym_projector(2, 5)

    def test_cap(self, monkeypatch):
        monkeypatch.setenv("CHRS_CAP_QUBITS", "3")
        with pytest.raises(ConfigurationError, match="cap"):
            sym_projector(2, 4)

    def test_permutation_operator_moves_copies(self):
        # V_(1 0) on |0>|1> is |1>|0>
        v = permutation_operator(2, 2, [1, 0])
        assert np.array_equal(v @ np.array([0, 1, 0, 0]), [0, 0, 1, 0])

    @SETTINGS
    @given(seeds)
    def test_commutes_with_tensor_powers(self, seed):
        u = haar_unitary(2, seed)
        uu = np.kron(np.kron(u, u), u)
        p = np.asarray(sym_projector(2, 3))
        assert np.max(np.abs(uu @ p - p @ uu)) <= 1e-9


class TestMaxEntangled:
    def test_amplitudes(self):
        assert np.allclose(np.asarray(max_entangled(2)), [1 / math.sqrt(2), 0, 0, 1 / math.sqrt(2)])

    def test_marginal(self):
        phi = np.asarray(max_entangled(3))
        assert np.allclose(partial_trace_array(np.outer(phi, phi), [3, 3], [0]), np.eye(3) / 3)


class TestLueders:
    def test_identity(self):
        rho = random_density(2, np.random.default_rng(1))
        p, post = lueders_update(rho, np.eye(2))
        assert p == pytest.approx(1.0)
        assert np.allclose(np.asarray(post), rho)

    def test_zero_on_plus(self):
        plus = np.full((2, 2), 0.5)
        p, post = lueders_update(plus, np.diag([1.0, 0.0]))
        assert p == pytest.approx(0.5)
        assert np.allclose(np.asarray(post), np.diag([0.5, 0.0]))
        assert post.subnormalized

    def test_rejects_non_projector(self):
        with pytest.raises(NumericError):
            lueders_update(np.eye(2) / 2, np.diag([0.5, 1.0]))

    @SETTINGS
    @given(seeds)
    def test_repeat_is_idempotent(self, seed):
        rng = np.random.default_rng(seed)
        rho = random_density(4, rng)
        q, _ = np.linalg.qr(rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2)))
        proj = q @ q.conj().T
        assert is_projector(proj)
        p1, post1 = lueders_update(rho, proj)
        p2, post2 = lueders_update(post1, proj)
        assert p1 == pytest.approx(p2, abs=1e-12)
        assert np.allclose(np.asarray(post1), np.asarray(post2), atol=1e-12)


class TestDump:
    @SETTINGS
    @given(seed=seeds, dim=st.integers(min_value=2, max_value=6), as_vector=st.booleans())
    def test_round_trip(self, tmp_path_factory, seed, dim, as_vector):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        if not as_vector:
            data = np.outer(data, rng.standard_normal(dim))
        path = tmp_path_factory.mktemp("dump") / "x.bin"
        write_dump(path, data)
        back = read_dump(path)
        assert back.shape == data.shape
        assert np.array_equal(back, data)

    def test_header_layout(self, tmp_path):
        path = write_dump(tmp_path / "m.bin", np.array([[1 + 2j]]))
        raw = path.read_bytes()
        assert raw[:4] == b"CHRS"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:16], "little") == 1
        assert np.frombuffer(raw[16:], "<f8").tolist() == [1.0, 2.0]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(ConfigurationError):
            read_dump(path)

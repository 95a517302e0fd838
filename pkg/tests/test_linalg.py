import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simsec.linalg import (
    DimensionError,
    NumericalError,
    SeededRng,
    cmatrix,
    cvector,
    hermitian_eig,
    matmul,
    psd_sqrt,
    sample_cn,
)


def _rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _matmul_loops(a, b):
    """Independent triple-loop product used as the reference."""
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.complex128)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0 + 0.0j
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def test_matmul_against_loop_oracle():
    rng = np.random.default_rng(7)
    a = _rand_complex(rng, 3, 4)
    b = _rand_complex(rng, 4, 2)
    got = matmul(a, b)
    ref = _matmul_loops(a, b)
    assert np.max(np.abs(got - ref)) < 1e-12


def test_matmul_identity_and_permutation_exact():
    rng = np.random.default_rng(8)
    x = _rand_complex(rng, 5, 5)
    eye = np.eye(5, dtype=np.complex128)
    assert np.array_equal(matmul(eye, x), x)
    p = eye[[3, 0, 4, 1, 2]]
    assert np.array_equal(matmul(p, x), x[[3, 0, 4, 1, 2]])


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_cvector_cmatrix_validation():
    with pytest.raises(DimensionError):
        cvector(np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        cmatrix(np.zeros(3))
    with pytest.raises(NumericalError):
        cvector(np.array([1.0, np.nan]))
    with pytest.raises(NumericalError):
        cmatrix(np.array([[1.0, np.inf], [0.0, 1.0]]))


def test_eig_diagonal():
    dec = hermitian_eig(np.diag([3.0, 1.0]).astype(complex))
    assert np.allclose(dec.values, [3.0, 1.0])
    # eigenvectors of a diagonal matrix are the axes, up to phase
    assert np.allclose(np.abs(dec.vectors), np.eye(2))


def test_eig_two_by_two_closed_form():
    # [[2, 1], [1, 2]] has eigenvalues 3 and 1 with (1, 1) and (1, -1) axes
    dec = hermitian_eig(np.array([[2.0, 1.0], [1.0, 2.0]], dtype=complex))
    assert np.allclose(dec.values, [3.0, 1.0], atol=1e-12)
    v0 = dec.vectors[:, 0]
    v1 = dec.vectors[:, 1]
    assert abs(abs(v0 @ np.array([1, 1]) / np.sqrt(2)) - 1.0) < 1e-12
    assert abs(abs(v1 @ np.array([1, -1]) / np.sqrt(2)) - 1.0) < 1e-12


def test_eig_rejects_non_hermitian():
    with pytest.raises(NumericalError):
        hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))


def test_eig_reconstructs():
    rng = np.random.default_rng(11)
    b = _rand_complex(rng, 6, 6)
    a = b @ b.conj().T
    dec = hermitian_eig(a)
    assert np.linalg.norm(dec.reconstruct() - a) / np.linalg.norm(a) < 1e-12


def test_quarter_wavelength_line_correlation_is_psd():
    # sinc correlation of a 4-element line at quarter-wavelength spacing:
    # entries sinc(k/2) for lag k, a valid covariance, so eigenvalues >= 0
    lags = np.abs(np.arange(4)[:, None] - np.arange(4)[None, :])
    r = np.sinc(lags / 2.0)
    dec = hermitian_eig(r.astype(complex))
    assert dec.values[-1] >= -1e-10
    s = psd_sqrt(r)
    assert np.linalg.norm(s @ s.conj().T - r) < 1e-9


def test_psd_sqrt_exact_cases():
    assert np.allclose(psd_sqrt(np.eye(3)), np.eye(3), atol=1e-14)
    s = psd_sqrt(np.diag([4.0, 0.0]))
    assert np.allclose(s, np.diag([2.0, 0.0]), atol=1e-12)


def test_psd_sqrt_reconstruction_and_hermitian_output():
    rng = np.random.default_rng(12)
    b = _rand_complex(rng, 16, 16)
    a = b @ b.conj().T
    s = psd_sqrt(a)
    assert np.linalg.norm(s @ s.conj().T - a) / np.linalg.norm(a) < 1e-9
    assert np.linalg.norm(s - s.conj().T) < 1e-9 * np.linalg.norm(s)
    assert hermitian_eig(s).values[-1] >= -1e-9


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NumericalError):
        psd_sqrt(np.diag([1.0, -1.0]))


def test_rng_reproducible_and_stream_distinct():
    base = SeededRng(123)
    a1 = base.split("channel", 0).generator.random(100)
    a2 = base.split("channel", 0).generator.random(100)
    assert np.array_equal(a1, a2)

    streams = [
        base.split("channel", 0),
        base.split("channel", 1),
        base.split("noise", 0),
        base.split(0, "channel"),
        base.split(1),
        base.split("1"),
    ]
    draws = [s.generator.random(100) for s in streams]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


def test_rng_seed_changes_draws():
    a = SeededRng(1).split("x").generator.random(50)
    b = SeededRng(2).split("x").generator.random(50)
    assert not np.array_equal(a, b)


def test_sample_cn_moments():
    z = sample_cn(SeededRng(42).split("mc"), 1_000_000)
    power = np.mean(np.abs(z) ** 2)
    assert 0.99 < power < 1.01
    assert abs(np.mean(z)) < 5e-3
    # circular symmetry: pseudo-variance E[z^2] vanishes
    assert abs(np.mean(z**2)) < 0.01


def test_sample_cn_rejects_bad_n():
    with pytest.raises(ValueError):
        sample_cn(SeededRng(0), 0)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**31 - 1),
    st.integers(min_value=1, max_value=6),
)
def test_matmul_associative(seed, n):
    rng = np.random.default_rng(seed)
    a = _rand_complex(rng, n, n)
    b = _rand_complex(rng, n, n)
    c = _rand_complex(rng, n, n)
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    scale = max(np.max(np.abs(left)), 1.0)
    assert np.max(np.abs(left - right)) / scale < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=8))
def test_psd_sqrt_roundtrip_property(seed, n):
    rng = np.random.default_rng(seed)
    b = _rand_complex(rng, n, n)
    a = b @ b.conj().T + 1e-9 * np.eye(n)
    s = psd_sqrt(a)
    assert np.linalg.norm(s @ s.conj().T - a) / np.linalg.norm(a) < 1e-9

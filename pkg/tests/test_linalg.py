import numpy as np
import pytest
from numpy.testing import assert_allclose

import critflow as cf
from critflow.linalg import Spectrum, is_degenerate, min_pivot


def _np_spectrum(m) -> Spectrum:
    return Spectrum.of(np.linalg.eigvals(np.asarray(m, dtype=float)))


def test_eigenvalues_2x2_closed_form():
    # characteristic polynomial t^2 + 3t + 2 = 0 -> roots -2, -1
    spec = cf.eigenvalues([[0.0, 1.0], [-2.0, -3.0]])
    assert spec.values == ((-2 + 0j), (-1 + 0j))


def test_eigenvalues_identity():
    spec = cf.eigenvalues(np.eye(3))
    assert spec.values == ((1 + 0j), (1 + 0j), (1 + 0j))


def test_eigenvalue_1x1():
    # df/dx of the quadratic acceleration field at its zero, A = 1
    assert cf.eigenvalues([[-2.0]]).values == ((-2 + 0j),)


def test_eigenvalues_complex_pair():
    spec = cf.eigenvalues([[0.0, 1.0], [-1.0, 0.0]])
    assert spec.values == ((0 - 1j), (0 + 1j))


def test_eigenvalues_match_numpy_on_random_matrices():
    rng = np.random.default_rng(42)
    for n in (1, 2, 3, 4, 5, 6, 7, 8):
        for _ in range(25):
            m = rng.uniform(-3, 3, size=(n, n))
            ours = cf.eigenvalues(m)
            ref = _np_spectrum(m)
            scale = max(1.0, ref.moduli_scale())
            assert cf.spectrum_distance(ours, ref) < 1e-8 * scale


def test_eigenvalues_trace_and_det_consistency():
    rng = np.random.default_rng(7)
    for n in (2, 3, 4, 5, 6):
        for _ in range(20):
            m = rng.uniform(-2, 2, size=(n, n))
            vals = cf.eigenvalues(m).values
            tr = sum(vals)
            det = np.prod(np.array(vals))
            assert abs(tr.real - np.trace(m)) < 1e-8 * max(1.0, np.linalg.norm(m))
            assert abs(tr.imag) < 1e-8 * max(1.0, np.linalg.norm(m))
            ref_det = np.linalg.det(m)
            assert abs(det - ref_det) <= 1e-7 * max(1.0, abs(ref_det))


def test_real_spectra_closed_under_conjugation():
    rng = np.random.default_rng(3)
    for _ in range(50):
        m = rng.uniform(-2, 2, size=(5, 5))
        vals = list(cf.eigenvalues(m).values)
        for v in vals:
            partner = min(vals, key=lambda w: abs(w - v.conjugate()))
            assert abs(partner - v.conjugate()) < 1e-9 * max(1.0, abs(v))


def test_similarity_invariance():
    # the exact mechanism behind spectrum preservation under conjugation
    rng = np.random.default_rng(11)
    for _ in range(40):
        n = int(rng.integers(2, 5))
        a = rng.uniform(-2, 2, size=(n, n))
        while True:
            p = rng.uniform(-1, 1, size=(n, n))
            if abs(np.linalg.det(p)) > 0.1:
                break
        sim = p @ a @ np.linalg.inv(p)
        assert cf.spectrum_distance(cf.eigenvalues(a), cf.eigenvalues(sim)) < 1e-6


def test_eigenvalues_near_defective_does_not_crash():
    q, _ = np.linalg.qr(np.random.default_rng(5).uniform(-1, 1, size=(3, 3)))
    jordan = np.array([[2.0, 1.0, 0.0], [0.0, 2.0, 1.0], [0.0, 0.0, 2.0]])
    m = q @ jordan @ q.T
    ours = cf.eigenvalues(m)
    assert cf.spectrum_distance(ours, _np_spectrum(m)) < 1e-4


def test_eigen_nonconvergence_reports_iterations():
    # zero sweeps allowed forces the cap on any matrix needing iteration
    m = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    with pytest.raises(cf.EigenConvergenceError) as exc:
        cf.eigenvalues(m, _sweep_cap=0)
    assert exc.value.iterations == 1
    assert exc.value.matrix.shape == (3, 3)


def test_solve_linear_identity_and_diagonal():
    assert_allclose(cf.solve_linear(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    assert_allclose(cf.solve_linear([[2.0, 0.0], [0.0, 4.0]], [2.0, 8.0]), [1.0, 2.0])


def test_solve_linear_singular():
    with pytest.raises(cf.SingularMatrixError):
        cf.solve_linear([[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0])
    with pytest.raises(cf.SingularMatrixError):
        cf.solve_linear(np.zeros((2, 2)), [0.0, 0.0])


def test_solve_linear_residual_bound_on_random_systems():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        m = rng.uniform(-5, 5, size=(n, n)) + 2.0 * np.eye(n)
        rhs = rng.uniform(-5, 5, size=n)
        x = cf.solve_linear(m, rhs)
        residual = np.linalg.norm(m @ x - rhs)
        bound = 1e-10 * (np.linalg.norm(m) * np.linalg.norm(x) + np.linalg.norm(rhs))
        assert residual <= bound
        assert_allclose(x, np.linalg.solve(m, rhs), rtol=1e-8, atol=1e-10)


def test_spectrum_distance_cases():
    a = Spectrum.of([-2.0, -1.0])
    b = Spectrum.of([-1.0, -2.0])
    assert cf.spectrum_distance(a, b) == 0.0
    assert cf.spectrum_distance(Spectrum.of([4.0]), Spectrum.of([4.0])) == 0.0
    assert cf.spectrum_distance(Spectrum.of([0.0]), Spectrum.of([1.0])) == 1.0
    with pytest.raises(ValueError):
        cf.spectrum_distance(Spectrum.of([1.0]), Spectrum.of([1.0, 2.0]))


def test_spectrum_distance_avoids_greedy_trap():
    # optimal matching must beat the naive pairing
    a = Spectrum.of([0.0, 10.0])
    b = Spectrum.of([1.0, 9.5])
    assert cf.spectrum_distance(a, b) == pytest.approx(1.0)


def test_spectrum_sorted_and_finite():
    s = Spectrum.of([3.0, -1.0, complex(0, 2), complex(0, -2)])
    assert s.values == ((-1 + 0j), (0 - 2j), (0 + 2j), (3 + 0j))


def test_min_pivot_and_degeneracy():
    assert min_pivot(np.zeros((2, 2))) == 0.0
    assert is_degenerate(np.zeros((3, 3)))
    assert not is_degenerate(np.eye(3))
    assert is_degenerate([[1.0, 1.0], [1.0, 1.0]])

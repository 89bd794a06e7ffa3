import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def centered_dft_matrix(n):
    """Dense centered orthonormal DFT: entry (k, j) = exp(-2pi i (k-c)(j-c)/n)/sqrt(n)."""
    c = n // 2
    k = np.arange(n) - c
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def dense_encoding_matrix(mask_weights, coils):
    """Materialized A = M F S for row-major flattened images."""
    h, w = mask_weights.shape
    f2 = np.kron(centered_dft_matrix(h), centered_dft_matrix(w))
    blocks = [mask_weights.ravel()[:, None] * f2 * s.ravel()[None, :] for s in coils]
    return np.vstack(blocks)


def planted_kspace(rng, weights, n_coils, h, w, kr=5, kc=5):
    """R = 2: even columns random, odd column j from the even columns around j - 1.

    Written with explicit loops, independently of the library's vectorized gather.
    """
    k = np.zeros((n_coils, h, w), dtype=complex)
    k[:, :, 0::2] = crandn(rng, n_coils, h, (w + 1) // 2)
    padded = np.zeros((n_coils, h + kr, w + 4 * kc), dtype=complex)
    padded[:, kr // 2 : kr // 2 + h, 2 * kc : 2 * kc + w] = k
    for j in range(1, w, 2):
        for r in range(h):
            feats = []
            for c in range(n_coils):
                for dr in range(-(kr // 2), kr - kr // 2):
                    for t in range(-((kc - 1) // 2), kc // 2 + 1):
                        feats.append(padded[c, r + dr + kr // 2, j - 1 + 2 * t + 2 * kc])
            k[:, r, j] = weights @ np.array(feats)
    return k


# acceptance criterion -> summary line, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

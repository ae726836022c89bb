"""Dense complex Hermitian helpers used by the SDP pipeline.

Hermitian matrices are plain ``numpy`` arrays; every constructor in the
package passes them through :func:`hermitian` so that floating-point drift
never reaches the solver.
"""

from __future__ import annotations

import numpy as np

PSD_TOL = 1e-9


def hermitian(a) -> np.ndarray:
    """Return ``(a + a^H) / 2`` as a complex array."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.conj().T)


def outer(v) -> np.ndarray:
    """Rank-one Gram ``v v^H``."""
    v = np.asarray(v, dtype=complex).ravel()
    return np.outer(v, v.conj())


def trace_product(a, b) -> float:
    """``Tr(AB)`` for Hermitian ``A``, ``B``.

    The imaginary residue is checked against ``1e-10 * |A| |B|`` and then
    discarded.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    # Tr(AB) = sum_ij A_ij B_ji
    t = np.sum(a * b.T)
    scale = max(np.linalg.norm(a) * np.linalg.norm(b), 1e-300)
    if abs(t.imag) > 1e-10 * scale:
        raise ValueError(f"trace product has imaginary part {t.imag:.3e}; inputs not Hermitian")
    return float(t.real)


def embed(h) -> np.ndarray:
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``."""
    h = np.asarray(h)
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def unembed(x) -> np.ndarray:
    """Map a real symmetric ``2n x 2n`` matrix back to complex Hermitian.

    This is the adjoint-consistent projection: for any real ``X``,
    ``Tr(C unembed(X)) = Tr(embed(C) X) / 2``, and PSD input gives PSD output.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0] // 2
    re = 0.5 * (x[:n, :n] + x[n:, n:])
    im = 0.5 * (x[n:, :n] - x[:n, n:])
    return hermitian(re + 1j * im)


def is_psd(h, tol: float = PSD_TOL) -> bool:
    """True iff the smallest eigenvalue is ``>= -tol * max(|H|_2, tiny)``."""
    h = np.asarray(h)
    w = np.linalg.eigvalsh(h)
    scale = max(np.max(np.abs(w)), np.finfo(float).tiny)
    return bool(w[0] >= -tol * scale)


def principal_component(h, tol: float = PSD_TOL) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and a unit eigenvector of a PSD matrix."""
    h = np.asarray(h)
    w, u = np.linalg.eigh(h)
    scale = max(np.max(np.abs(w)), np.finfo(float).tiny)
    if w[0] < -tol * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    return float(w[-1]), u[:, -1]


def eig_ratio(h) -> float:
    """``lambda_2 / lambda_1`` of a PSD matrix (0 for rank one or zero)."""
    w = np.linalg.eigvalsh(np.asarray(h))[::-1]
    if w.size < 2 or w[0] <= 0:
        return 0.0
    return float(max(w[1], 0.0) / w[0])

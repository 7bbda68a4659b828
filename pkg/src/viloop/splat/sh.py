"""Real spherical-harmonics color basis, degrees 0-3, 3DGS storage convention.

Coefficients are stored per Gaussian as a (16, 3) array: 16 basis functions by
3 color channels. Decoded color is 0.5 + sum(c_k * Y_k(dir)), clamped to [0, 1].
"""

from __future__ import annotations

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)

NUM_COEFFS = 16  # degree 3: 1 + 3 + 5 + 7


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Evaluate the 16 basis functions at unit directions (..., 3) -> (..., 16)."""
    dirs = np.asarray(dirs, dtype=float)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    out = np.empty(dirs.shape[:-1] + (NUM_COEFFS,), dtype=float)
    out[..., 0] = SH_C0
    out[..., 1] = -SH_C1 * y
    out[..., 2] = SH_C1 * z
    out[..., 3] = -SH_C1 * x
    out[..., 4] = SH_C2[0] * xy
    out[..., 5] = SH_C2[1] * yz
    out[..., 6] = SH_C2[2] * (2.0 * zz - xx - yy)
    out[..., 7] = SH_C2[3] * xz
    out[..., 8] = SH_C2[4] * (xx - yy)
    out[..., 9] = SH_C3[0] * y * (3.0 * xx - yy)
    out[..., 10] = SH_C3[1] * xy * z
    out[..., 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    out[..., 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    out[..., 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    out[..., 14] = SH_C3[5] * z * (xx - yy)
    out[..., 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def evaluate_sh(sh: np.ndarray, view_dir) -> np.ndarray:
    """Decode one coefficient set (16, 3) at a unit view direction -> RGB in [0, 1]."""
    view_dir = np.asarray(view_dir, dtype=float)
    n = np.linalg.norm(view_dir)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"view_dir must be unit length, |v| = {n:.8f}")
    sh = np.asarray(sh, dtype=float)
    if sh.shape != (NUM_COEFFS, 3):
        raise ValueError(f"sh must have shape (16, 3), got {sh.shape}")
    color = 0.5 + sh_basis(view_dir) @ sh
    return np.clip(color, 0.0, 1.0)


def evaluate_sh_batch(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Decode (N, 16, 3) coefficient sets at per-Gaussian unit dirs (N, 3)."""
    basis = sh_basis(dirs)  # (N, 16)
    color = 0.5 + np.einsum("nk,nkc->nc", basis, sh)
    return np.clip(color, 0.0, 1.0)


def rgb_to_dc(rgb) -> np.ndarray:
    """DC coefficient that decodes to the requested view-independent color."""
    return (np.asarray(rgb, dtype=float) - 0.5) / SH_C0


def dc_to_rgb(dc) -> np.ndarray:
    return np.asarray(dc, dtype=float) * SH_C0 + 0.5

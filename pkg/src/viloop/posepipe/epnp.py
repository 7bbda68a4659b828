"""EPnP: camera pose from 2D-3D point correspondences.

The object points are expressed as barycentric combinations of four control
points (centroid plus scaled principal axes); the projection equations then
become a linear system whose nullspace contains the camera-frame control
points. Candidate nullspace combinations for dimensions 1-3 are scored, each
refined by Gauss-Newton on the pairwise control-point distances, and the pose
is recovered by closed-form point-set alignment. Near-planar point sets
collapse to a three-control-point variant.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from viloop.geometry import Pose, Rotation

PLANARITY_RATIO = 1e-6
GN_MAX_ITERS = 10
GN_STEP_TOL = 1e-8
BEHIND_CAMERA_PENALTY = 1e6  # px, large finite so candidate ranking still works


def reprojection_rms(pose: Pose, points3d, points2d, intrinsics) -> float:
    """Root-mean-square pixel error of pose (object frame -> camera frame).

    Points that land at or behind the camera plane contribute a fixed large
    penalty instead of failing.
    """
    points3d = np.asarray(points3d, dtype=float)
    points2d = np.asarray(points2d, dtype=float)
    pc = points3d @ pose.rotation.matrix.T + pose.position
    err2 = np.empty(len(pc))
    behind = pc[:, 2] <= 0
    err2[behind] = BEHIND_CAMERA_PENALTY ** 2
    front = ~behind
    if np.any(front):
        z = pc[front, 2]
        u = intrinsics.fx * pc[front, 0] / z + intrinsics.cx
        v = intrinsics.fy * pc[front, 1] / z + intrinsics.cy
        d = np.column_stack([u, v]) - points2d[front]
        err2[front] = np.einsum("ij,ij->i", d, d)
    return float(np.sqrt(err2.mean()))


def _control_points(points3d):
    """Centroid plus principal-axis control points; 3 of them when planar."""
    c0 = points3d.mean(axis=0)
    centered = points3d - c0
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    planar = svals[-1] < PLANARITY_RATIO * svals[0]
    n_ctrl = 3 if planar else 4
    ctrl = np.empty((n_ctrl, 3))
    ctrl[0] = c0
    for k in range(n_ctrl - 1):
        ctrl[k + 1] = c0 + math.sqrt(svals[k] ** 2 / len(points3d)) * vt[k]
    return ctrl, planar


def _barycentric(points3d, ctrl):
    basis = (ctrl[1:] - ctrl[0]).T               # 3 x (n_ctrl-1)
    rel = (points3d - ctrl[0]).T                 # 3 x n
    coef, *_ = np.linalg.lstsq(basis, rel, rcond=None)
    alphas = np.empty((len(points3d), len(ctrl)))
    alphas[:, 1:] = coef.T
    alphas[:, 0] = 1.0 - coef.sum(axis=0)
    return alphas


def _build_m(alphas, points2d, intrinsics):
    n, n_ctrl = alphas.shape
    m = np.zeros((2 * n, 3 * n_ctrl))
    u = points2d[:, 0]
    v = points2d[:, 1]
    for j in range(n_ctrl):
        a = alphas[:, j]
        m[0::2, 3 * j] = a * intrinsics.fx
        m[0::2, 3 * j + 2] = a * (intrinsics.cx - u)
        m[1::2, 3 * j + 1] = a * intrinsics.fy
        m[1::2, 3 * j + 2] = a * (intrinsics.cy - v)
    return m


def _pair_indices(n_ctrl):
    return list(itertools.combinations(range(n_ctrl), 2))


def _distance_system(vs, pairs):
    """Quadratic monomial matrix L: rows = control pairs, cols = beta_i*beta_j."""
    n_v = vs.shape[0]
    dv = np.stack([[vs[k, 3 * a:3 * a + 3] - vs[k, 3 * b:3 * b + 3]
                    for a, b in pairs] for k in range(n_v)])  # (n_v, n_pairs, 3)
    cols = []
    for i in range(n_v):
        for j in range(i, n_v):
            dot = np.einsum("pk,pk->p", dv[i], dv[j])
            cols.append(dot if i == j else 2.0 * dot)
    return np.column_stack(cols), dv


def _monomial_index(n_v):
    idx = {}
    k = 0
    for i in range(n_v):
        for j in range(i, n_v):
            idx[(i, j)] = k
            k += 1
    return idx


def _betas_from_approx(l_mat, rho, n_v, dim):
    """Linearized seed for the Gauss-Newton refinement, nullspace dim 1-3."""
    idx = _monomial_index(n_v)
    betas = np.zeros(n_v)
    if dim == 1:
        col = l_mat[:, idx[(0, 0)]]
        b2 = float(col @ rho) / float(col @ col)
        betas[0] = math.sqrt(abs(b2))
    elif dim == 2:
        cols = [idx[(0, 0)], idx[(0, 1)], idx[(1, 1)]]
        sol, *_ = np.linalg.lstsq(l_mat[:, cols], rho, rcond=None)
        betas[0] = math.sqrt(abs(sol[0]))
        betas[1] = math.copysign(math.sqrt(abs(sol[2])), sol[1] * sol[0]) \
            if betas[0] > 0 else math.sqrt(abs(sol[2]))
    else:
        cols = [idx[(0, 0)], idx[(0, 1)], idx[(1, 1)], idx[(0, 2)], idx[(1, 2)]]
        sol, *_ = np.linalg.lstsq(l_mat[:, cols], rho, rcond=None)
        betas[0] = math.sqrt(abs(sol[0]))
        betas[1] = math.copysign(math.sqrt(abs(sol[2])), sol[1] * sol[0])
        if betas[0] > 0:
            betas[2] = sol[3] / betas[0]
    return betas


def _gauss_newton(l_mat, rho, betas, n_v):
    idx = _monomial_index(n_v)
    for _ in range(GN_MAX_ITERS):
        jac = np.zeros((len(rho), n_v))
        resid = rho.copy()
        for (i, j), k in idx.items():
            col = l_mat[:, k]
            if i == j:
                resid -= col * betas[i] * betas[i]
                jac[:, i] += 2.0 * col * betas[i]
            else:
                resid -= col * betas[i] * betas[j]
                jac[:, i] += col * betas[j]
                jac[:, j] += col * betas[i]
        step, *_ = np.linalg.lstsq(jac, resid, rcond=None)
        betas = betas + step
        if np.max(np.abs(step)) < GN_STEP_TOL:
            break
    return betas


def _procrustes(points_cam, points_world):
    """Closed-form alignment: R, t with p_cam = R @ p_world + t, det(R) = +1."""
    cc = points_cam.mean(axis=0)
    cw = points_world.mean(axis=0)
    h = (points_cam - cc).T @ (points_world - cw)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    t = cc - r @ cw
    return r, t


def epnp_solve(points3d, points2d, intrinsics) -> tuple[Pose, float]:
    """Solve for the pose mapping object-frame points into the camera frame.

    Returns (pose, reprojection_rms). Raises ValueError on fewer than 4
    correspondences, collinear geometry, or when no candidate yields a
    proper finite pose.
    """
    points3d = np.asarray(points3d, dtype=float)
    points2d = np.asarray(points2d, dtype=float)
    if points3d.ndim != 2 or points3d.shape[1] != 3 or len(points3d) != len(points2d):
        raise ValueError("expected matched (n,3) object points and (n,2) pixels")
    n = len(points3d)
    if n < 4:
        raise ValueError(f"EPnP needs at least 4 correspondences, got {n}")

    ctrl, planar = _control_points(points3d)
    centered_rank = np.linalg.matrix_rank(points3d - points3d.mean(axis=0),
                                          tol=1e-9 * max(1.0, np.abs(points3d).max()))
    if centered_rank < 2:
        raise ValueError("object points are collinear; pose is unobservable")

    alphas = _barycentric(points3d, ctrl)
    m = _build_m(alphas, points2d, intrinsics)
    _, evecs = np.linalg.eigh(m.T @ m)
    n_ctrl = len(ctrl)
    n_v = 3 if planar else 4
    vs = evecs[:, :n_v].T  # ascending eigenvalues: vs[0] spans the nullspace

    pairs = _pair_indices(n_ctrl)
    l_mat, _ = _distance_system(vs, pairs)
    rho = np.array([float((ctrl[a] - ctrl[b]) @ (ctrl[a] - ctrl[b]))
                    for a, b in pairs])

    best = None
    dims = (1, 2) if planar else (1, 2, 3)
    for dim in dims:
        betas = _betas_from_approx(l_mat, rho, n_v, dim)
        betas = _gauss_newton(l_mat, rho, betas, n_v)
        ccs = (betas @ vs).reshape(n_ctrl, 3)
        pcs = alphas @ ccs
        # the nullspace vector is defined up to sign; points must be in front
        if pcs[:, 2].sum() < 0:
            pcs = -pcs
        if not np.all(np.isfinite(pcs)):
            continue
        r, t = _procrustes(pcs, points3d)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            continue
        pose = Pose(t, Rotation.from_matrix(r))
        rms = reprojection_rms(pose, points3d, points2d, intrinsics)
        if best is None or rms < best[1]:
            best = (pose, rms)
    if best is None:
        raise ValueError("EPnP found no valid pose candidate (degenerate geometry)")
    return best

"""Camera pose recovery from ellipse-ellipsoid correspondences.

Solvers: single-pair camera position given the orientation (closed-form
depth initialization from the area ratio, then damped least squares on the
conic residual), full two-pair pose (icosahedral rotation grid scored
through the single-pair solver, then joint 6-dof refinement), local pose
refinement over any number of pairs, and a seeded RANSAC over label-based
association hypotheses.

All residuals are Frobenius differences of unit-normalized point conics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousSolution,
    BehindCamera,
    DegenerateConfiguration,
    ElliposeError,
    NoConvergence,
    NoValidPose,
)
from .geometry import (
    CameraModel,
    Conic,
    Ellipse,
    Ellipsoid,
    Pose,
    axis_angle_to_matrix,
    canonicalize,
    conic_to_ellipse,
    ellipse_to_conic,
    ellipsoid_to_dual_quadric,
    normalize_symmetric,
    rotation_z,
)
from .metrics import ellipse_iou, rotation_distance
from .reconstruction import EllipsoidCloud


@dataclass(frozen=True, eq=False)
class Correspondence:
    ellipse: Ellipse
    ellipsoid: Ellipsoid
    label: str

    def __post_init__(self):
        object.__setattr__(self, "ellipse", canonicalize(self.ellipse))


@dataclass(frozen=True, eq=False)
class PoseEstimate:
    pose: Pose
    inliers: tuple
    score: float  # mean inlier ellipse IoU

    def __post_init__(self):
        if not self.inliers:
            raise ValueError("a pose estimate needs at least one inlier")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


@dataclass(frozen=True, eq=False)
class RansacOptions:
    """mode 'orientation_known' requires ``rotation`` (world->camera R)."""

    mode: str = "orientation_known"
    iterations: int = 20
    inlier_iou_threshold: float = 0.75
    seed: int = 0
    rotation: np.ndarray | None = None
    refine_orientation: bool = True
    iou_grid: int = 128  # grid resolution for hypothesis scoring

    def __post_init__(self):
        if self.mode not in ("orientation_known", "full"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.inlier_iou_threshold < 1.0:
            raise ValueError("inlier threshold must be in (0, 1)")
        if self.mode == "orientation_known":
            if self.rotation is None:
                raise ValueError("orientation_known mode needs a rotation")
            object.__setattr__(self, "rotation", np.asarray(self.rotation, float))


@dataclass(frozen=True, eq=False)
class RefineResult:
    pose: Pose
    converged: bool
    costs: tuple  # initial cost followed by the cost after each accepted step


# ---------------------------------------------------------------------------
# Residual machinery
# ---------------------------------------------------------------------------


class _PairData:
    """Pose-independent data of one correspondence.

    Residuals are evaluated on conics in intrinsics-normalized image
    coordinates: pixel-frame conic entries span several orders of magnitude
    and would numerically crush the shape information after unit-Frobenius
    scaling.
    """

    __slots__ = (
        "Qd", "M_det", "center_w", "area_det", "max_axis", "ellipse",
        "ax_sq", "rot_w", "det_center_n", "major_norm",
    )

    def __init__(self, corr: Correspondence, K: np.ndarray):
        self.Qd = ellipsoid_to_dual_quadric(corr.ellipsoid).Q
        M_pix = ellipse_to_conic(corr.ellipse).M
        self.M_det = normalize_symmetric(K.T @ M_pix @ K)
        self.center_w = corr.ellipsoid.center
        self.area_det = _conic_area(self.M_det)
        self.max_axis = corr.ellipsoid.max_axis
        self.ellipse = corr.ellipse
        self.ax_sq = corr.ellipsoid.axes
        self.rot_w = corr.ellipsoid.rotation
        h = np.linalg.solve(K, np.array([corr.ellipse.center[0], corr.ellipse.center[1], 1.0]))
        self.det_center_n = h[:2] / h[2]
        f = 0.5 * (K[0, 0] + K[1, 1])
        self.major_norm = float(corr.ellipse.axes[0]) / f


def _projected_conic(R, t, pair: _PairData):
    """Point conic of the pair's quadric in normalized image coordinates,
    unit-Frobenius scaled, or None when the projection is invalid.

    Hand-rolled symmetric 3x3 adjugate (the inverse up to scale, which the
    normalization absorbs): this sits inside every optimizer residual, so
    LAPACK call overhead matters.
    """
    depth = R[2] @ pair.center_w + t[2]
    if depth <= 0.0:
        return None
    P = np.empty((3, 4))
    P[:, :3] = R
    P[:, 3] = t
    Cd = P @ pair.Qd @ P.T
    a, b, c = Cd[0, 0], Cd[0, 1], Cd[0, 2]
    d, e, f = Cd[1, 1], Cd[1, 2], Cd[2, 2]
    m00 = d * f - e * e
    m01 = c * e - b * f
    m02 = b * e - c * d
    m11 = a * f - c * c
    m12 = b * c - a * e
    m22 = a * d - b * b
    det = a * m00 + b * m01 + c * m02
    scale = max(abs(a), abs(b), abs(c), abs(d), abs(e), abs(f))
    if scale <= 0.0 or abs(det) < 1e-14 * scale**3:
        return None
    norm = math.sqrt(
        m00 * m00 + m11 * m11 + m22 * m22 + 2.0 * (m01 * m01 + m02 * m02 + m12 * m12)
    )
    if norm < 1e-300:
        return None
    s = 1.0 / norm
    for v in (m00, m01, m02, m11, m12, m22):
        if abs(v) * s > 1e-12:
            if v < 0.0:
                s = -s
            break
    return np.array(
        [
            [m00 * s, m01 * s, m02 * s],
            [m01 * s, m11 * s, m12 * s],
            [m02 * s, m12 * s, m22 * s],
        ]
    )


def _conic_area(M):
    """Area enclosed by an ellipse-signature point conic, or None."""
    A = M[:2, :2]
    detA = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if detA <= 0.0:
        return None
    if A[0, 0] + A[1, 1] < 0.0:
        M = -M
        A = -A
    center = np.linalg.solve(A, -M[:2, 2])
    k = float(M[:2, 2] @ center) + M[2, 2]
    if k >= 0.0:
        return None
    return math.pi * (-k) / math.sqrt(detA)


def _outline_geometry(M, pair):
    """(center offset to the detection, enclosed area) of an ellipse-
    signature conic in normalized image coordinates, or None."""
    a, b, c = M[0, 0], M[0, 1], M[0, 2]
    d, e = M[1, 1], M[1, 2]
    det2 = a * d - b * b
    if det2 <= 0.0:
        return None
    cx = (e * b - c * d) / det2
    cy = (b * c - a * e) / det2
    k = c * cx + e * cy + M[2, 2]  # conic value at the center
    if k >= 0.0:
        return None
    dx = cx - pair.det_center_n[0]
    dy = cy - pair.det_center_n[1]
    return math.sqrt(dx * dx + dy * dy), math.pi * (-k) / math.sqrt(det2)


def _residual(R, t, pairs, caps=None):
    """Stacked conic residual; ``caps`` (one entry per pair, None = free)
    tethers each projected outline to its detection in center and area.

    The guarded form keeps local refinement on real-ellipse outlines near
    the detections: the raw algebraic metric admits hyperbola outlines and
    spurious minima with the object slid far off or away along the ray.
    """
    chunks = []
    for i, pair in enumerate(pairs):
        M = _projected_conic(R, t, pair)
        if M is None:
            return None
        if caps is not None and caps[i] is not None:
            geo = _outline_geometry(M, pair)
            if geo is None:
                return None
            off_cap, area_lo, area_hi = caps[i]
            if geo[0] > off_cap or not area_lo <= geo[1] <= area_hi:
                return None
        chunks.append((M - pair.M_det).ravel())
    return np.concatenate(chunks)


def _tether_caps(R, t, pairs):
    """Per-pair tether for guarded refinement, sized from the start point
    so a valid start always stays feasible."""
    caps = []
    for pair in pairs:
        M = _projected_conic(R, t, pair)
        geo = None if M is None else _outline_geometry(M, pair)
        if geo is None or pair.area_det is None:
            caps.append(None)  # start invalid for this pair: leave it free
            continue
        off0, area0 = geo
        ratio0 = area0 / pair.area_det
        caps.append(
            (
                max(0.75 * pair.major_norm, 1.3 * off0, 0.01),
                pair.area_det * min(0.5, 0.5 * ratio0),
                pair.area_det * max(2.0, 2.0 * ratio0),
            )
        )
    return caps


class _LMResult:
    __slots__ = ("x", "costs", "converged", "grad_norm")

    def __init__(self, x, costs, converged, grad_norm):
        self.x = x
        self.costs = costs
        self.converged = converged
        self.grad_norm = grad_norm


def _levenberg_marquardt(fun, x0, scales, *, max_iter=50, grad_tol=1e-10, step_tol=1e-13):
    """Damped least squares with a numeric Jacobian; cost is monotone
    non-increasing because only strictly valid downhill steps are taken."""
    x = np.array(x0, float)
    r = fun(x)
    if r is None:
        raise NoConvergence("invalid starting point for refinement")
    cost = float(r @ r)
    costs = [cost]
    lam = 1e-3
    converged = False
    grad_norm = math.inf
    for _ in range(max_iter):
        J = _num_jacobian(fun, x, r, scales)
        g = J.T @ r
        grad_norm = float(np.linalg.norm(g))
        if grad_norm < grad_tol:
            converged = True
            break
        A = J.T @ J
        D = np.diag(np.maximum(np.diag(A), 1e-12))
        stepped = False
        while lam < 1e12:
            try:
                delta = np.linalg.solve(A + lam * D, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            rt = fun(x + delta)
            if rt is not None:
                ct = float(rt @ rt)
                if ct <= cost:
                    x = x + delta
                    r, cost = rt, ct
                    costs.append(cost)
                    lam = max(lam * 0.3, 1e-12)
                    stepped = True
                    if float(np.linalg.norm(delta)) < step_tol * (1.0 + float(np.linalg.norm(x))):
                        converged = True
                    break
            lam *= 4.0
        if not stepped:
            # no damping level yields a downhill step: treat a tiny gradient
            # as a numerical stationary point
            converged = grad_norm < 1e-6
            break
        if converged:
            break
    return _LMResult(x, costs, converged, grad_norm)


def _num_jacobian(fun, x, r0, scales):
    J = np.empty((r0.size, x.size))
    for i in range(x.size):
        h = scales[i]
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        rp, rm = fun(xp), fun(xm)
        if rp is not None and rm is not None:
            J[:, i] = (rp - rm) / (2.0 * h)
        elif rp is not None:
            J[:, i] = (rp - r0) / h
        elif rm is not None:
            J[:, i] = (r0 - rm) / h
        else:
            J[:, i] = 0.0
    return J


# ---------------------------------------------------------------------------
# Single-pair position
# ---------------------------------------------------------------------------


def _initial_position(K, R, pair: _PairData):
    """Closed-form placement on the detection's back-projection ray at the
    depth that equates projected and detected areas.

    Returns (t0, lam_min); raises BehindCamera when the detected size would
    force the ellipsoid across the principal plane.
    """
    if pair.area_det is None or pair.area_det <= 0.0:
        raise BehindCamera("detected conic encloses no area")
    e = pair.ellipse
    ray = np.linalg.solve(K, np.array([e.center[0], e.center[1], 1.0]))
    vhat = ray / np.linalg.norm(ray)
    # ellipsoid support along the camera z axis bounds the closest valid depth
    z_row = (R @ pair.rot_w)[2]
    support_z = math.sqrt(float(np.sum((pair.ax_sq * z_row) ** 2)))
    lam_min = 1.05 * support_z / vhat[2]
    lam_ref = max(20.0 * pair.max_axis, 2.0 * lam_min)
    t_ref = lam_ref * vhat - R @ pair.center_w
    M_ref = _projected_conic(R, t_ref, pair)
    area_ref = _conic_area(M_ref) if M_ref is not None else None
    if area_ref is None or area_ref <= 0.0:
        raise BehindCamera("reference projection is invalid")
    lam0 = lam_ref * math.sqrt(area_ref / pair.area_det)
    if lam0 < 0.5 * lam_min:
        raise BehindCamera(
            "detected ellipse size implies the object crosses the principal plane"
        )
    lam0 = max(lam0, lam_min)
    return lam0 * vhat - R @ pair.center_w, lam_min


def position_from_pair(
    corr: Correspondence, R, cam: CameraModel, *, max_iter: int = 50
) -> np.ndarray:
    """Camera translation from one pair under a known orientation.

    The ellipsoid center is first placed on the back-projection ray of the
    detected center at the area-equating depth, then the three position
    coordinates are refined by damped least squares on the normalized-conic
    residual (gradient norm below 1e-12 or ``max_iter`` iterations).
    """
    R = np.asarray(R, float)
    pair = _PairData(corr, cam.K)
    t0, _ = _initial_position(cam.K, R, pair)
    caps = _tether_caps(R, t0, (pair,))

    def fun(t):
        return _residual(R, t, (pair,), caps)

    scale = max(1.0, float(np.linalg.norm(t0)))
    res = _levenberg_marquardt(
        fun, t0, np.full(3, 1e-6 * scale), max_iter=max_iter, grad_tol=1e-12
    )
    # a stalled refinement leaves the closed-form placement, which is the
    # legitimate area/ray solution for detections no outline can match
    return res.x


# ---------------------------------------------------------------------------
# Two-pair full pose
# ---------------------------------------------------------------------------


def _icosphere_directions() -> np.ndarray:
    """42 near-uniform directions: icosahedron vertices plus edge midpoints."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    v = []
    for a in (-1.0, 1.0):
        for b in (-phi, phi):
            v += [(a, b, 0.0), (0.0, a, b), (b, 0.0, a)]
    v = np.array(v)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
    d2[d2 < 1e-12] = np.inf
    dmin = d2.min()
    mids = []
    for i in range(len(v)):
        for j in range(i + 1, len(v)):
            if d2[i, j] < dmin * 1.001:
                m = v[i] + v[j]
                mids.append(m / np.linalg.norm(m))
    return np.vstack([v, mids])


def _rotation_with_forward(u: np.ndarray) -> np.ndarray:
    """World->camera rotation whose optical axis is the world direction u."""
    h = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(h, u)
    x /= np.linalg.norm(x)
    y = np.cross(u, x)
    return np.stack([x, y, u])


_N_ROLLS = 8
_STAGE_B_KEEP = 24
_STAGE_C_KEEP = 6


def pose_from_two_pairs(
    c1: Correspondence, c2: Correspondence, cam: CameraModel
) -> Pose:
    """Full 6-dof pose from two correspondences.

    The rotation is searched over 42 icosahedral viewing directions times 8
    rolls; each start is scored by solving the position on one pair and
    measuring the conic residual on both, the best starts are polished by a
    joint 6-dof damped least-squares refinement, and distinct minima with
    costs within 1% of each other raise AmbiguousSolution carrying both
    candidates.
    """
    sep = float(np.linalg.norm(c1.ellipsoid.center - c2.ellipsoid.center))
    scale = max(c1.ellipsoid.max_axis, c2.ellipsoid.max_axis, 1e-12)
    if sep < 1e-9 * max(scale, 1.0):
        raise DegenerateConfiguration("ellipsoid centers coincide")
    K = cam.K
    pairs = (_PairData(c1, K), _PairData(c2, K))

    starts = []
    rolls = [2.0 * math.pi * k / _N_ROLLS for k in range(_N_ROLLS)]
    for u in _icosphere_directions():
        base = _rotation_with_forward(u)
        for roll in rolls:
            starts.append(rotation_z(roll) @ base)

    # stage A: closed-form position from either pair, residual on both
    scored = []
    for R in starts:
        for anchor in (0, 1):
            try:
                t0, _ = _initial_position(K, R, pairs[anchor])
            except BehindCamera:
                continue
            r = _residual(R, t0, pairs)
            if r is None:
                continue
            scored.append((float(r @ r), R, t0))
    if not scored:
        raise NoConvergence("no rotation start produced a valid projection")
    scored.sort(key=lambda s: s[0])

    # stage B: short joint refinement to make the ranking trustworthy
    # (position-only polish is not discriminative enough: a wrong rotation
    # can reach a similar cost to a nearly-right one)
    stage_b = []
    for cost, R, t0 in scored[:_STAGE_B_KEEP]:
        res = _refine_raw(R, t0, pairs, max_iter=8, grad_tol=1e-12, guarded=False)
        stage_b.append(
            (res.costs[-1], axis_angle_to_matrix(res.x[:3]) @ R, t0 + res.x[3:])
        )
    stage_b.sort(key=lambda s: s[0])

    # stage C: full joint 6-dof refinement of the leading candidates
    candidates = []
    for cost, R0, t0 in stage_b[:_STAGE_C_KEEP]:
        res = _refine_raw(R0, t0, pairs, max_iter=60, grad_tol=1e-12, guarded=False)
        R = axis_angle_to_matrix(res.x[:3]) @ R0
        candidates.append((res.costs[-1], R, t0 + res.x[3:]))
    candidates.sort(key=lambda s: s[0])

    # cluster distinct poses, best first
    clusters = []
    for cost, R, t in candidates:
        for cc, cR, ct in clusters:
            if rotation_distance(R, cR) + np.linalg.norm(t - ct) / (
                1.0 + float(np.linalg.norm(ct))
            ) < 0.05:
                break
        else:
            clusters.append((cost, R, t))
    best = clusters[0]
    if len(clusters) > 1 and clusters[1][0] - best[0] <= 0.01 * best[0] + 1e-10:
        raise AmbiguousSolution(
            "two distinct pose minima fit the pairs equally well",
            candidates=(Pose(best[1], best[2]), Pose(clusters[1][1], clusters[1][2])),
        )
    return Pose(best[1], best[2])


def _refine_raw(R0, t0, pairs, *, max_iter=50, grad_tol=1e-12, rotation_fixed=False,
                guarded=True):
    """Joint LM over (axis-angle increment, translation offset)."""
    caps = _tether_caps(R0, t0, pairs) if guarded else None
    if rotation_fixed:
        def fun(x):
            return _residual(R0, t0 + x, pairs, caps)

        scales = np.full(3, 1e-6 * max(1.0, float(np.linalg.norm(t0))))
        return _levenberg_marquardt(fun, np.zeros(3), scales, max_iter=max_iter, grad_tol=grad_tol)

    def fun(x):
        R = axis_angle_to_matrix(x[:3]) @ R0
        return _residual(R, t0 + x[3:], pairs, caps)

    scales = np.concatenate(
        [np.full(3, 1e-7), np.full(3, 1e-6 * max(1.0, float(np.linalg.norm(t0))))]
    )
    return _levenberg_marquardt(fun, np.zeros(6), scales, max_iter=max_iter, grad_tol=grad_tol)


def refine_pose(
    p0: Pose,
    correspondences,
    cam: CameraModel,
    *,
    max_iter: int = 50,
    rotation_fixed: bool = False,
) -> RefineResult:
    """Local minimization of the summed conic residual from ``p0``.

    Never raises on stagnation: the best iterate is returned with
    ``converged`` False.  Cost history is monotone non-increasing.
    """
    correspondences = list(correspondences)
    if not correspondences:
        raise ValueError("refinement needs at least one correspondence")
    pairs = tuple(_PairData(c, cam.K) for c in correspondences)
    try:
        res = _refine_raw(
            p0.R, p0.t, pairs, max_iter=max_iter, rotation_fixed=rotation_fixed
        )
    except NoConvergence:
        return RefineResult(p0, False, ())
    if rotation_fixed:
        pose = Pose(p0.R, p0.t + res.x)
    else:
        pose = Pose(axis_angle_to_matrix(res.x[:3]) @ p0.R, p0.t + res.x[3:])
    if len(res.costs) == 1:
        pose = p0  # no accepted step: return the input bit-for-bit
    return RefineResult(pose, res.converged, tuple(res.costs))


# ---------------------------------------------------------------------------
# Associations and RANSAC
# ---------------------------------------------------------------------------


def _associations_with_indices(detections, cloud: EllipsoidCloud):
    out = []
    for d_idx, (label, ellipse) in enumerate(detections):
        for o_idx, (obj_label, ellipsoid) in enumerate(cloud.entries):
            if label == obj_label:
                out.append((Correspondence(ellipse, ellipsoid, label), d_idx, o_idx))
    return out


def enumerate_associations(detections, cloud: EllipsoidCloud):
    """All label-compatible (detection, object) pairings.

    ``detections`` is a sequence of (label, Ellipse).  Objects of the same
    class multiply the hypotheses, not the solver complexity.
    """
    return [c for c, _, _ in _associations_with_indices(detections, cloud)]


def ransac_iterations(inlier_fraction: float, minimal_set: int, confidence: float = 0.99) -> int:
    """Draws needed to hit an all-inlier sample at the given confidence."""
    if not 0.0 < inlier_fraction <= 1.0:
        raise ValueError("inlier fraction must be in (0, 1]")
    if inlier_fraction >= 1.0:
        return 1
    w = inlier_fraction**minimal_set
    return max(1, math.ceil(math.log(1.0 - confidence) / math.log(1.0 - w)))


def ransac_pose(detections, cloud: EllipsoidCloud, cam: CameraModel, opts: RansacOptions) -> PoseEstimate:
    """Seeded RANSAC over association hypotheses.

    Minimal sets never reuse a detection or an object; hypotheses are scored
    by the ellipse IoU between detections and reprojections, the best
    hypothesis by (inlier count, mean inlier IoU, draw order) is polished
    with :func:`refine_pose` on its inliers, and consensus is re-evaluated
    on the refined pose.  Deterministic for fixed inputs and seed.
    """
    assoc = _associations_with_indices(detections, cloud)
    corrs = [c for c, _, _ in assoc]
    min_set = 1 if opts.mode == "orientation_known" else 2
    if len(corrs) < min_set:
        raise NoValidPose(f"{len(corrs)} correspondences, need {min_set}")
    pairs = [_PairData(c, cam.K) for c in corrs]
    rng = np.random.default_rng(np.random.SeedSequence(int(opts.seed)))
    best = None  # (count, score, -draw_idx, pose, inliers)

    for draw_idx in range(opts.iterations):
        sample = _draw_minimal_set(rng, assoc, min_set)
        if sample is None:
            continue
        try:
            if opts.mode == "orientation_known":
                t = position_from_pair(corrs[sample[0]], opts.rotation, cam, max_iter=25)
                hypotheses = [Pose(opts.rotation, t)]
            else:
                hypotheses = [pose_from_two_pairs(corrs[sample[0]], corrs[sample[1]], cam)]
        except AmbiguousSolution as exc:
            hypotheses = list(exc.candidates)
        except ElliposeError:
            continue
        for pose in hypotheses:
            inliers, score = _consensus(pose, cam, corrs, pairs, opts)
            if len(inliers) < min_set:
                continue
            key = (len(inliers), score, -draw_idx)
            if best is None or key > best[0]:
                best = (key, pose, inliers)
    if best is None:
        raise NoValidPose("no hypothesis reached the minimal inlier count")

    key, pose, inliers = best
    score = key[1]
    # final polish, re-run while the consensus set keeps growing; the local
    # refinement minimizes an algebraic cost whose optimum can drift
    # geometrically under detection shape mismatch, so a refined pose only
    # replaces the incumbent when it does not hurt the consensus objective.
    # A single inlier leaves the rotation free to spin while tracking its
    # pair, so orientation refinement needs at least two.
    for _ in range(4):
        rotation_fixed = not opts.refine_orientation or len(inliers) < 2
        refined = refine_pose(
            pose, [corrs[i] for i in inliers], cam, rotation_fixed=rotation_fixed
        )
        inliers2, score2 = _consensus(refined.pose, cam, corrs, pairs, opts)
        if (len(inliers2), score2) < (len(inliers), score):
            break
        grew = len(inliers2) > len(inliers)
        pose, inliers, score = refined.pose, inliers2, score2
        if not grew:
            break
    return PoseEstimate(pose, inliers, score)


def _draw_minimal_set(rng, assoc, min_set):
    n = len(assoc)
    if min_set == 1:
        return (int(rng.integers(n)),)
    for _ in range(50):
        i, j = int(rng.integers(n)), int(rng.integers(n))
        if i == j:
            continue
        _, di, oi = assoc[i]
        _, dj, oj = assoc[j]
        if di != dj and oi != oj:
            return (i, j)
    return None


def _consensus(pose: Pose, cam: CameraModel, corrs, pairs, opts: RansacOptions):
    Kinv = np.linalg.inv(cam.K)
    inliers = []
    total = 0.0
    for i, (corr, pair) in enumerate(zip(corrs, pairs)):
        M = _projected_conic(pose.R, pose.t, pair)
        if M is None:
            continue
        try:
            proj = conic_to_ellipse(Conic(Kinv.T @ M @ Kinv))
        except ElliposeError:
            continue
        iou = ellipse_iou(corr.ellipse, proj, grid=opts.iou_grid)
        if iou >= opts.inlier_iou_threshold:
            inliers.append(i)
            total += iou
    score = total / len(inliers) if inliers else 0.0
    return tuple(inliers), score

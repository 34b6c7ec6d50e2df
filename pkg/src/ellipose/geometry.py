"""Exact algebra of ellipses, conics, ellipsoids, dual quadrics and their
perspective projection, plus the image/crop frame transforms.

All types are immutable value objects and every operation is a pure
function, so everything here is safe to share across threads.

Conventions:
  * a point conic M satisfies x^T M x = 0 for homogeneous boundary points;
  * matrices defined up to scale are stored with unit Frobenius norm and
    the first non-zero upper-triangular entry positive;
  * ellipse angles are measured from the horizontal image axis to the
    major axis and live in (-pi/2, pi/2];
  * a world point X maps to the camera frame as R @ X + t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, NotAnEllipse, NotAnEllipsoid, SingularTransform

# Relative axis difference under which an ellipse is treated as a circle
# and its angle pinned to 0 (canonicalization tie-break).
CIRCLE_TIE_TOL = 1e-9

_SIGN_TOL = 1e-12


def _freeze(values, shape) -> np.ndarray:
    a = np.array(values, dtype=float)
    if a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("values must be finite")
    a.setflags(write=False)
    return a


def normalize_symmetric(M: np.ndarray) -> np.ndarray:
    """Scale a symmetric matrix to unit Frobenius norm with the sign fixed
    by the first non-zero upper-triangular entry (row-major scan)."""
    M = 0.5 * (M + M.T)
    n = np.linalg.norm(M)
    if not np.isfinite(n) or n < 1e-300:
        raise ValueError("cannot normalize a zero matrix")
    M = M / n
    vals = M[np.triu_indices(M.shape[0])]
    nz = np.flatnonzero(np.abs(vals) > _SIGN_TOL)
    if nz.size and vals[nz[0]] < 0:
        M = -M
    return M


def rot2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle_to_matrix(w: np.ndarray) -> np.ndarray:
    """Rodrigues map: rotation vector (axis * angle) to a rotation matrix."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        K = np.array(
            [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
        )
        return np.eye(3) + K  # first-order term is exact enough below 1e-12
    axis = w / theta
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def wrap_angle_half_pi(theta: float) -> float:
    """Wrap an angle into (-pi/2, pi/2] modulo the pi-periodicity of ellipses."""
    t = (theta + 0.5 * math.pi) % math.pi - 0.5 * math.pi
    if t <= -0.5 * math.pi:
        t = 0.5 * math.pi
    return t


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Ellipse:
    """Ellipse as (center, semi-axes, major-axis angle) in pixels/radians.

    Construction only requires positive axes; use :func:`canonicalize` to
    obtain the unique a >= b, angle in (-pi/2, pi/2] representative.
    """

    center: np.ndarray
    axes: np.ndarray
    angle: float

    def __post_init__(self):
        center = _freeze(self.center, (2,))
        axes = _freeze(self.axes, (2,))
        if not (axes[0] > 0.0 and axes[1] > 0.0):
            raise ValueError("ellipse semi-axes must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "angle", float(self.angle))

    @property
    def area(self) -> float:
        return math.pi * float(self.axes[0] * self.axes[1])

    def boundary_points(self, n: int = 64) -> np.ndarray:
        """(n, 2) points of the parametric boundary."""
        t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        local = np.stack([self.axes[0] * np.cos(t), self.axes[1] * np.sin(t)])
        return (rot2d(self.angle) @ local).T + self.center

    def contains(self, points: np.ndarray, slack: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the (slightly inflated) ellipse."""
        d = np.atleast_2d(points) - self.center
        local = d @ rot2d(self.angle)  # equals R^T applied to rows
        q = (local[:, 0] / self.axes[0]) ** 2 + (local[:, 1] / self.axes[1]) ** 2
        return q <= 1.0 + slack


@dataclass(frozen=True, eq=False)
class Conic:
    """Homogeneous 3x3 symmetric point-conic matrix, stored normalized."""

    M: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.shape != (3, 3):
            raise ValueError("conic matrix must be 3x3")
        if not np.allclose(M, M.T, atol=1e-8 * max(1.0, float(np.abs(M).max()))):
            raise ValueError("conic matrix must be symmetric")
        M = normalize_symmetric(M)
        M.setflags(write=False)
        object.__setattr__(self, "M", M)


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Ellipsoid as (center, semi-axis lengths, world-frame rotation)."""

    center: np.ndarray
    axes: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        center = _freeze(self.center, (3,))
        axes = _freeze(self.axes, (3,))
        rotation = _freeze(self.rotation, (3, 3))
        if not np.all(axes > 0.0):
            raise ValueError("ellipsoid semi-axes must be positive")
        _check_rotation(rotation)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "rotation", rotation)

    @property
    def max_axis(self) -> float:
        return float(self.axes.max())

    def shape_matrix(self) -> np.ndarray:
        """R diag(a^2, b^2, c^2) R^T; frame-free description of the shape."""
        return self.rotation @ np.diag(self.axes**2) @ self.rotation.T


@dataclass(frozen=True, eq=False)
class DualQuadric:
    """Homogeneous 4x4 symmetric dual-quadric matrix, stored normalized."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (4, 4):
            raise ValueError("dual quadric matrix must be 4x4")
        if not np.allclose(Q, Q.T, atol=1e-8 * max(1.0, float(np.abs(Q).max()))):
            raise ValueError("dual quadric matrix must be symmetric")
        Q = normalize_symmetric(Q)
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole intrinsics (pixels) plus image size."""

    K: np.ndarray
    image_size: np.ndarray

    def __post_init__(self):
        K = _freeze(self.K, (3, 3))
        size = _freeze(self.image_size, (2,))
        if abs(K[2, 2] - 1.0) > 1e-12 or abs(K[1, 0]) > 1e-12 \
                or abs(K[2, 0]) > 1e-12 or abs(K[2, 1]) > 1e-12:
            raise ValueError("K must be upper-triangular with K[2,2] = 1")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "image_size", size)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid world-to-camera transform: X_cam = R @ X_world + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = _freeze(self.R, (3, 3))
        t = _freeze(self.t, (3,))
        _check_rotation(R)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @property
    def matrix(self) -> np.ndarray:
        """3x4 [R | t]."""
        return np.column_stack([self.R, self.t])

    @property
    def camera_center(self) -> np.ndarray:
        return -self.R.T @ self.t


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned pixel box with min < max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = _freeze(self.min, (2,))
        hi = _freeze(self.max, (2,))
        if not np.all(lo < hi):
            raise ValueError("box min must be strictly below max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def size(self) -> np.ndarray:
        return self.max - self.min


@dataclass(frozen=True, eq=False)
class FrameTransform:
    """Invertible pixel-to-pixel homography."""

    H: np.ndarray

    def __post_init__(self):
        H = _freeze(self.H, (3, 3))
        scale = float(np.abs(H).max())
        if abs(np.linalg.det(H)) <= 1e-12 * scale**3:
            raise SingularTransform("homography is numerically singular")
        object.__setattr__(self, "H", H)

    def inverse(self) -> "FrameTransform":
        return FrameTransform(np.linalg.inv(self.H))

    def __matmul__(self, other: "FrameTransform") -> "FrameTransform":
        """Composition with matrix semantics: (A @ B)(x) = A(B(x))."""
        return FrameTransform(self.H @ other.H)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) or (2,) points through the homography."""
        p = np.atleast_2d(points)
        h = np.column_stack([p, np.ones(len(p))]) @ self.H.T
        out = h[:, :2] / h[:, 2:3]
        return out[0] if np.ndim(points) == 1 else out


def _check_rotation(R: np.ndarray) -> None:
    if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-8:
        raise ValueError("matrix is not orthonormal")
    if np.linalg.det(R) < 0.0:
        raise ValueError("rotation must have determinant +1")


# ---------------------------------------------------------------------------
# Ellipse <-> conic
# ---------------------------------------------------------------------------


def ellipse_to_conic(e: Ellipse) -> Conic:
    """Point-conic matrix of an ellipse: boundary points satisfy x^T M x = 0."""
    R = rot2d(e.angle)
    A = R @ np.diag(1.0 / e.axes**2) @ R.T
    c = e.center
    M = np.empty((3, 3))
    M[:2, :2] = A
    M[:2, 2] = M[2, :2] = -A @ c
    M[2, 2] = float(c @ A @ c) - 1.0
    return Conic(M)


def conic_to_ellipse(C: Conic) -> Ellipse:
    """Canonical ellipse of a point conic.

    Raises NotAnEllipse when the signature is hyperbolic, parabolic or
    degenerate (the usual symptom of a bad homography transfer or of a
    quadric crossing the principal plane).
    """
    M = C.M
    A = M[:2, :2]
    evals = np.linalg.eigvalsh(A)
    scale = float(np.abs(evals).max())
    if scale <= 0.0 or float(np.abs(evals).min()) <= 1e-12 * scale:
        raise NotAnEllipse("conic is parabolic or degenerate")
    if evals[0] * evals[1] < 0.0:
        raise NotAnEllipse("conic is a hyperbola")
    if evals[0] < 0.0:  # make the leading block positive definite
        M = -M
        A = -A
    center = np.linalg.solve(A, -M[:2, 2])
    k = float(M[:2, 2] @ center) + M[2, 2]  # conic value at the center
    if k >= 0.0:
        raise NotAnEllipse("conic has no real bounded point set")
    lam, V = np.linalg.eigh(A)
    axes = np.sqrt(-k / lam)  # ascending lam -> axes already sorted a >= b
    angle = math.atan2(V[1, 0], V[0, 0])
    return canonicalize(Ellipse(center, axes, angle))


def canonicalize(e: Ellipse) -> Ellipse:
    """Unique representative: a >= b, angle in (-pi/2, pi/2], circles at 0."""
    a, b = float(e.axes[0]), float(e.axes[1])
    angle = e.angle
    if a < b:
        a, b = b, a
        angle += 0.5 * math.pi
    if abs(a - b) <= CIRCLE_TIE_TOL * a:
        angle = 0.0
    else:
        angle = wrap_angle_half_pi(angle)
    return Ellipse(e.center, (a, b), angle)


# ---------------------------------------------------------------------------
# Ellipsoid <-> dual quadric, projection
# ---------------------------------------------------------------------------


def ellipsoid_to_dual_quadric(E: Ellipsoid) -> DualQuadric:
    """Q = Z diag(a^2, b^2, c^2, -1) Z^T with Z the rigid ellipsoid frame."""
    Z = np.eye(4)
    Z[:3, :3] = E.rotation
    Z[:3, 3] = E.center
    D = np.diag(np.append(E.axes**2, -1.0))
    return DualQuadric(Z @ D @ Z.T)


def dual_quadric_to_ellipsoid(Q: DualQuadric) -> Ellipsoid:
    """Decompose a dual quadric; raises NotAnEllipsoid on a bad signature."""
    q = Q.Q
    if abs(q[3, 3]) < 1e-12:  # Q is unit-Frobenius normalized
        raise NotAnEllipsoid("quadric center is at infinity")
    q = q / q[3, 3]
    center = q[:3, 3].copy()
    S = np.outer(center, center) - q[:3, :3]  # R diag(axes^2) R^T
    evals, evecs = np.linalg.eigh(S)
    if evals[0] <= 1e-12 * abs(evals[-1]) or evals[-1] <= 0.0:
        raise NotAnEllipsoid("quadric does not have ellipsoid signature")
    order = np.argsort(evals)[::-1]  # axes sorted descending, like ellipses
    evals = evals[order]
    R = evecs[:, order]
    if np.linalg.det(R) < 0.0:
        R = R.copy()
        R[:, 2] = -R[:, 2]
    return Ellipsoid(center, np.sqrt(evals), R)


def project_ellipsoid(E: Ellipsoid, pose: Pose, cam: CameraModel) -> Ellipse:
    """Exact perspective outline of an ellipsoid, as a canonical ellipse.

    The dual quadric projects linearly: C* = P Q* P^T with P = K [R | t];
    the returned ellipse is the point form of C*.  Raises BehindCamera when
    the ellipsoid center has non-positive depth and NotAnEllipse when the
    quadric crosses the principal plane (outline degenerates to a
    hyperbola).
    """
    depth = float(pose.R[2] @ E.center + pose.t[2])
    if depth <= 0.0:
        raise BehindCamera(f"ellipsoid center depth {depth:.3g} <= 0")
    P = cam.K @ pose.matrix
    M = _point_conic_of_projection(P, ellipsoid_to_dual_quadric(E).Q)
    return conic_to_ellipse(Conic(M))


def _point_conic_of_projection(P: np.ndarray, Qdual: np.ndarray) -> np.ndarray:
    """Normalized point conic of a dual quadric under projection P (3x4)."""
    Cd = P @ Qdual @ P.T
    det = np.linalg.det(Cd)
    scale = float(np.abs(Cd).max())
    if scale <= 0.0 or abs(det) < 1e-14 * scale**3:
        raise NotAnEllipse("projected dual conic is degenerate")
    M = np.linalg.inv(Cd)
    return normalize_symmetric(M)


# ---------------------------------------------------------------------------
# Boxes, crops and plane transforms
# ---------------------------------------------------------------------------


def inscribed_ellipse(b: Box) -> Ellipse:
    """Axis-aligned ellipse inscribed in a box (the detection baseline)."""
    half = 0.5 * b.size
    return canonicalize(Ellipse(b.center, half, 0.0))


def bbox_of_ellipse(e: Ellipse) -> Box:
    """Tight axis-aligned bounding box of an ellipse."""
    a2, b2 = float(e.axes[0]) ** 2, float(e.axes[1]) ** 2
    c2, s2 = math.cos(e.angle) ** 2, math.sin(e.angle) ** 2
    half = np.array([math.sqrt(a2 * c2 + b2 * s2), math.sqrt(a2 * s2 + b2 * c2)])
    return Box(e.center - half, e.center + half)


def transform_conic(C: Conic, T: FrameTransform) -> Conic:
    """Push a point conic through a homography: C' = H^-T C H^-1."""
    try:
        Hinv = np.linalg.inv(T.H)
    except np.linalg.LinAlgError as exc:
        raise SingularTransform(str(exc)) from exc
    return Conic(Hinv.T @ C.M @ Hinv)


def transform_ellipse(e: Ellipse, T: FrameTransform) -> Ellipse:
    """Map an ellipse through a homography, returning the canonical result."""
    return conic_to_ellipse(transform_conic(ellipse_to_conic(e), T))


def crop_transform(b: Box, out_size: float) -> FrameTransform:
    """Similarity mapping the square completion of a box onto [0, out_size]^2.

    The shorter box side is expanded symmetrically about the box center, so
    aspect ratio is preserved; the transform goes image -> crop and its
    inverse is obtained with ``.inverse()``.
    """
    if out_size <= 0:
        raise ValueError("out_size must be positive")
    side = float(b.size.max())
    s = out_size / side
    cx, cy = b.center
    H = np.array(
        [
            [s, 0.0, 0.5 * out_size - s * cx],
            [0.0, s, 0.5 * out_size - s * cy],
            [0.0, 0.0, 1.0],
        ]
    )
    return FrameTransform(H)


def conic_distance(C1: Conic, C2: Conic) -> float:
    """Frobenius distance between normalized conics, sign-ambiguity safe."""
    d = float(np.linalg.norm(C1.M - C2.M))
    return min(d, float(np.linalg.norm(C1.M + C2.M)))

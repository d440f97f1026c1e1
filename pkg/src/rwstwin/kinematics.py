"""Forward kinematics, geometric Jacobian, and damped least-squares inverse
kinematics for a 6-DOF serial arm described by a standard DH table.

Units: millimetres for positions, radians for angles. Quaternions are
w-first and unit-norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

N_JOINTS = 6


class KinematicsError(ValueError):
    """Invalid kinematics input (non-finite joints, bad table, ...)."""


class SingularJacobianError(RuntimeError):
    """Raised by the undamped Newton step when the Jacobian cannot be inverted."""


class NumericFailure(RuntimeError):
    """A solver iterate produced non-finite values."""

    def __init__(self, message: str, iterate: np.ndarray | None = None):
        super().__init__(message)
        self.iterate = iterate


@dataclass(frozen=True)
class DhTable:
    """Standard DH parameters plus joint limits for a 6-axis arm.

    Each row is (theta_offset [rad], d [mm], a [mm], alpha [rad]).
    """

    rows: tuple[tuple[float, float, float, float], ...]
    joint_limits: tuple[tuple[float, float], ...]
    joint_speed_limits: tuple[float, ...]

    def __post_init__(self):
        if len(self.rows) != N_JOINTS:
            raise KinematicsError(f"DH table needs {N_JOINTS} rows, got {len(self.rows)}")
        if len(self.joint_limits) != N_JOINTS or len(self.joint_speed_limits) != N_JOINTS:
            raise KinematicsError("joint limits must have 6 entries")
        for i, (lo, hi) in enumerate(self.joint_limits):
            if not lo < hi:
                raise KinematicsError(f"joint {i + 1}: limit min must be < max")
        if any(s <= 0 for s in self.joint_speed_limits):
            raise KinematicsError("joint speed limits must be > 0")

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lo = np.array([l for l, _ in self.joint_limits])
        hi = np.array([h for _, h in self.joint_limits])
        return np.clip(q, lo, hi)

    def within_limits(self, q: np.ndarray, tol: float = 1e-12) -> bool:
        return all(lo - tol <= qi <= hi + tol
                   for qi, (lo, hi) in zip(q, self.joint_limits))


def irb120_table() -> DhTable:
    """Shipped default: ABB IRB120 standard DH table.

    Home pose oracle: TCP at (374.0, 0.0, 630.0) mm with tool z along base x.
    """
    return DhTable(
        rows=(
            (0.0, 290.0, 0.0, -math.pi / 2),
            (-math.pi / 2, 0.0, 270.0, 0.0),
            (0.0, 0.0, 70.0, -math.pi / 2),
            (0.0, 302.0, 0.0, math.pi / 2),
            (0.0, 0.0, 0.0, -math.pi / 2),
            (math.pi, 72.0, 0.0, 0.0),
        ),
        joint_limits=(
            (math.radians(-165), math.radians(165)),
            (math.radians(-110), math.radians(110)),
            (math.radians(-110), math.radians(70)),
            (math.radians(-160), math.radians(160)),
            (math.radians(-120), math.radians(120)),
            (math.radians(-400), math.radians(400)),
        ),
        joint_speed_limits=(
            math.radians(250), math.radians(250), math.radians(250),
            math.radians(320), math.radians(320), math.radians(420),
        ),
    )


# --------------------------------------------------------------------------
# Quaternion helpers (w-first)

def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z), w >= 0."""
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def axis_angle_from_matrix(R: np.ndarray) -> np.ndarray:
    """Rotation matrix -> axis-angle vector (axis * angle, rad)."""
    cos_t = (np.trace(R) - 1.0) / 2.0
    cos_t = min(1.0, max(-1.0, cos_t))
    theta = math.acos(cos_t)
    if theta < 1e-12:
        return np.zeros(3)
    if theta > math.pi - 1e-6:
        # near pi: extract axis from the symmetric part
        B = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(B), 0.0))
        # fix signs from off-diagonal terms
        i = int(np.argmax(axis))
        for j in range(3):
            if j != i and B[i, j] < 0:
                axis[j] = -axis[j]
        n = np.linalg.norm(axis)
        if n < 1e-12:
            return np.zeros(3)
        return axis / n * theta
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return v / (2.0 * math.sin(theta)) * theta


@dataclass(frozen=True)
class Pose:
    """TCP position (mm) and orientation as a w-first unit quaternion."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        quat = np.asarray(self.orientation, dtype=float)
        if pos.shape != (3,) or quat.shape != (4,):
            raise KinematicsError("Pose needs a 3-vector position and 4-vector quaternion")
        n = np.linalg.norm(quat)
        if abs(n - 1.0) > 1e-6:
            raise KinematicsError(f"quaternion norm {n} not unit")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quat / n)

    def rotation_matrix(self) -> np.ndarray:
        return matrix_from_quat(self.orientation)


def _dh_transform(theta: float, d: float, a: float, alpha: float) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def _check_q(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (N_JOINTS,) or not np.all(np.isfinite(q)):
        raise KinematicsError(f"joint vector must be 6 finite values, got {q!r}")
    return q


def link_transforms(dh: DhTable, q: np.ndarray) -> list[np.ndarray]:
    """Cumulative base->frame_i homogeneous transforms, i = 1..6."""
    q = _check_q(q)
    out = []
    T = np.eye(4)
    for qi, (off, d, a, alpha) in zip(q, dh.rows):
        T = T @ _dh_transform(qi + off, d, a, alpha)
        out.append(T.copy())
    return out


def forward_kinematics(dh: DhTable, q: np.ndarray) -> Pose:
    """TCP pose as the composition of the six DH link transforms."""
    T = link_transforms(dh, q)[-1]
    return Pose(position=T[:3, 3], orientation=quat_from_matrix(T[:3, :3]))


def jacobian(dh: DhTable, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian: rows 1-3 map joint rates to TCP linear velocity
    (mm/s), rows 4-6 to angular velocity (rad/s). All joints revolute.
    """
    q = _check_q(q)
    frames = link_transforms(dh, q)
    p_tcp = frames[-1][:3, 3]
    J = np.zeros((6, N_JOINTS))
    z_prev = np.array([0.0, 0.0, 1.0])
    o_prev = np.zeros(3)
    for i in range(N_JOINTS):
        if i > 0:
            z_prev = frames[i - 1][:3, 2]
            o_prev = frames[i - 1][:3, 3]
        J[:3, i] = np.cross(z_prev, p_tcp - o_prev)
        J[3:, i] = z_prev
    return J


def task_residual(target: Pose, current: Pose) -> np.ndarray:
    """6-vector task error: position difference (mm) stacked on the
    axis-angle of the relative rotation target * current^-1 (rad).
    """
    e = np.empty(6)
    e[:3] = target.position - current.position
    R_rel = target.rotation_matrix() @ current.rotation_matrix().T
    e[3:] = axis_angle_from_matrix(R_rel)
    return e


# --------------------------------------------------------------------------
# IK problem / result

@dataclass(frozen=True)
class IkProblem:
    target: Pose
    seed: np.ndarray
    weights_task: np.ndarray = field(
        default_factory=lambda: np.diag([1.0, 1.0, 1.0, 100.0, 100.0, 100.0]))
    damping_bias: float = 1e-3
    learning_rate: float = 1.0
    tol_pos: float = 0.01
    tol_orient: float = 1e-3
    max_iters: int = 200

    def __post_init__(self):
        object.__setattr__(self, "seed", _check_q(self.seed))
        W = np.asarray(self.weights_task, dtype=float)
        if W.shape != (6, 6) or np.any(np.diag(W) <= 0):
            raise KinematicsError("weights_task must be 6x6 with positive diagonal")
        object.__setattr__(self, "weights_task", W)
        if self.damping_bias <= 0:
            raise KinematicsError("damping_bias must be > 0")
        if not 0 < self.learning_rate <= 1:
            raise KinematicsError("learning_rate must be in (0, 1]")
        if self.tol_pos <= 0 or self.tol_orient <= 0:
            raise KinematicsError("tolerances must be > 0")
        if self.max_iters < 1:
            raise KinematicsError("max_iters must be >= 1")


@dataclass
class IkIterate:
    q: np.ndarray
    residual_norm: float
    objective: float


@dataclass
class IkResult:
    solution: np.ndarray
    converged: bool
    iterations: int
    pos_err: float
    orient_err: float
    trace: list[IkIterate]


def _damping_matrix(e: np.ndarray, problem: IkProblem) -> np.ndarray:
    # error-proportional damping: w_N = 1/2 e^T W_E e + bias, uniform diagonal
    w = 0.5 * float(e @ problem.weights_task @ e) + problem.damping_bias
    return w * np.eye(N_JOINTS)


def ik_step_lm(dh: DhTable, q_k: np.ndarray, problem: IkProblem) -> np.ndarray:
    """One damped Gauss-Newton update q_{k+1} = q_k + alpha H^-1 g with
    H = J^T W_E J + W_N and g = J^T W_E e. H is positive definite by
    construction, so the solve cannot fail.
    """
    q_k = _check_q(q_k)
    e = task_residual(problem.target, forward_kinematics(dh, q_k))
    J = jacobian(dh, q_k)
    W_E = problem.weights_task
    H = J.T @ W_E @ J + _damping_matrix(e, problem)
    g = J.T @ W_E @ e
    dq = problem.learning_rate * np.linalg.solve(H, g)
    q_next = q_k + dq
    if not np.all(np.isfinite(q_next)):
        raise NumericFailure("LM step produced non-finite joints", iterate=q_k)
    return q_next


def ik_step_newton(dh: DhTable, q_k: np.ndarray, problem: IkProblem) -> np.ndarray:
    """Undamped Newton update q_{k+1} = q_k + alpha J^-1 e. Fails at
    singular configurations; kept as the contrast to ik_step_lm.
    """
    q_k = _check_q(q_k)
    e = task_residual(problem.target, forward_kinematics(dh, q_k))
    J = jacobian(dh, q_k)
    # reject near-singular J explicitly; np.linalg.solve can silently
    # return garbage at cond ~ 1/eps
    if np.linalg.cond(J) > 1e12:
        raise SingularJacobianError("Jacobian is singular at this configuration")
    try:
        dq = problem.learning_rate * np.linalg.solve(J, e)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobianError(str(exc)) from exc
    q_next = q_k + dq
    if not np.all(np.isfinite(q_next)):
        raise NumericFailure("Newton step produced non-finite joints", iterate=q_k)
    return q_next


def _errors(e: np.ndarray) -> tuple[float, float]:
    return float(np.linalg.norm(e[:3])), float(np.linalg.norm(e[3:]))


def solve_ik(dh: DhTable, problem: IkProblem) -> IkResult:
    """Iterate ik_step_lm from the seed until both tolerances are met or
    max_iters is exhausted. Iterates are clamped to joint limits. Returns
    the best iterate with converged=False when the budget runs out.
    """
    W_E = problem.weights_task
    q = dh.clamp(problem.seed.copy())
    trace: list[IkIterate] = []
    best_q, best_norm = q, math.inf

    for it in range(problem.max_iters + 1):
        e = task_residual(problem.target, forward_kinematics(dh, q))
        pos_err, orient_err = _errors(e)
        norm = float(np.linalg.norm(e))
        # objective of the damped quadratic model at the step taken from
        # this iterate; at the final iterate no step is taken, so it is
        # the undamped value 1/2 e^T W_E e
        objective = 0.5 * float(e @ W_E @ e)
        trace.append(IkIterate(q=q.copy(), residual_norm=norm, objective=objective))
        if not math.isfinite(norm):
            raise NumericFailure("non-finite residual", iterate=q)
        if norm < best_norm:
            best_q, best_norm = q.copy(), norm
        if pos_err <= problem.tol_pos and orient_err <= problem.tol_orient:
            return IkResult(solution=q, converged=True, iterations=it,
                            pos_err=pos_err, orient_err=orient_err, trace=trace)
        if it == problem.max_iters:
            break
        q_next = dh.clamp(ik_step_lm(dh, q, problem))
        # clamping can break the descent guarantee of the exact LM
        # minimizer; backtrack along the clamped step until the damped
        # model objective is no worse than staying put
        dq = q_next - q
        J = jacobian(dh, q)
        W_N = _damping_matrix(e, problem)

        def model(step):
            r = e - J @ step
            return 0.5 * float(r @ W_E @ r) + 0.5 * float(step @ W_N @ step)

        t = 1.0
        while model(t * dq) > objective and t > 1e-8:
            t *= 0.5
        if t <= 1e-8:
            # no feasible descent along the clamped direction: stall here
            # and let the iteration budget expire (converged=False)
            continue
        q = q + t * dq

    e = task_residual(problem.target, forward_kinematics(dh, best_q))
    pos_err, orient_err = _errors(e)
    return IkResult(solution=best_q, converged=False, iterations=problem.max_iters,
                    pos_err=pos_err, orient_err=orient_err, trace=trace)

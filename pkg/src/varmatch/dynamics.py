"""Group actions and Hamiltonian geodesic equations for discrete varifolds.

Deformations are flows of velocity fields in the RKHS with scalar kernel
``K(x, y) = h(|x - y|^2) I``. Three dynamical systems are implemented:

``NormalizedState``
    positions and unit directions are transported, weights stay constant.
``PushforwardReducedState``
    state ``(x_i, u_i)`` with ``u_i = r_i d_i``; weights follow ``|D phi . d|``.
``PushforwardFullState``
    the unreduced pushforward system on ``(x_i, d_i, r_i)`` with the extra
    scalar momentum ``p3_i``. Mostly useful to check the reduction.

Every optimal velocity field has the form::

    v(y) = sum_k h(|x_k - y|^2) alpha_k + 2 h'(|x_k - y|^2) <x_k - y, beta_k> gamma_k

for per-particle "sources" ``(alpha, beta, gamma)`` that depend on the action
model; ``_sources`` builds them and ``_field`` evaluates ``v`` and its first
two derivatives.

States are flattened as ``[q, p]`` with canonically paired blocks, so the
symplectic matrix acts by swapping halves.
"""

import threading
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import h_all

ACTIONS = ("normalized", "pushforward")
TRANSPORTS = ("tangent", "normal")

DIRECTION_DRIFT_WARN = 1e-6
MASS_COLLAPSE_RATIO = 1e-10
COMPAT_TOL = 1e-8
NORMAL_COND_MAX = 1e12
# directions of an exported state are renormalized when their drift stays below this
OUTPUT_UNIT_TOL = 1e-3


class IntegrationError(ArithmeticError):
    """Raised when a geodesic integration has to be aborted."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class ActionModel:
    action: str = "normalized"
    transport: str = "tangent"

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"action must be one of {ACTIONS}, got {self.action!r}")
        if self.transport not in TRANSPORTS:
            raise ValueError(f"transport must be one of {TRANSPORTS}, got {self.transport!r}")

    @property
    def tangent(self):
        return self.transport == "tangent"


def _arr(a, shape=None):
    a = np.array(a, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    return a


@dataclass(frozen=True, eq=False)
class NormalizedState:
    x: np.ndarray
    d: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        x = _arr(self.x)
        for name in ("x", "d", "p1", "p2"):
            object.__setattr__(self, name, _arr(getattr(self, name), x.shape))
        object.__setattr__(self, "r", _arr(self.r, (x.shape[0],)))

    def to_vector(self):
        return np.concatenate([self.x.ravel(), self.d.ravel(), self.p1.ravel(), self.p2.ravel()])

    def with_vector(self, z):
        x, d, p1, p2 = np.asarray(z).reshape(4, *self.x.shape)
        return NormalizedState(x, d, p1, p2, self.r)

    @property
    def momenta(self):
        return np.stack([self.p1, self.p2])


@dataclass(frozen=True, eq=False)
class PushforwardReducedState:
    x: np.ndarray
    u: np.ndarray
    p1: np.ndarray
    p2: np.ndarray

    def __post_init__(self):
        x = _arr(self.x)
        for name in ("x", "u", "p1", "p2"):
            object.__setattr__(self, name, _arr(getattr(self, name), x.shape))

    def to_vector(self):
        return np.concatenate([self.x.ravel(), self.u.ravel(), self.p1.ravel(), self.p2.ravel()])

    def with_vector(self, z):
        x, u, p1, p2 = np.asarray(z).reshape(4, *self.x.shape)
        return PushforwardReducedState(x, u, p1, p2)

    @property
    def momenta(self):
        return np.stack([self.p1, self.p2])

    @property
    def d(self):
        return self.u / np.linalg.norm(self.u, axis=1)[:, None]

    @property
    def r(self):
        return np.linalg.norm(self.u, axis=1)


@dataclass(frozen=True, eq=False)
class PushforwardFullState:
    x: np.ndarray
    d: np.ndarray
    r: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray

    def __post_init__(self):
        x = _arr(self.x)
        P = x.shape[0]
        for name in ("x", "d", "p1", "p2"):
            object.__setattr__(self, name, _arr(getattr(self, name), x.shape))
        object.__setattr__(self, "r", _arr(self.r, (P,)))
        object.__setattr__(self, "p3", _arr(self.p3, (P,)))

    def to_vector(self):
        return np.concatenate(
            [self.x.ravel(), self.d.ravel(), self.r, self.p1.ravel(), self.p2.ravel(), self.p3]
        )

    def with_vector(self, z):
        P, n = self.x.shape
        m = P * n
        z = np.asarray(z)
        x, d = z[:m].reshape(P, n), z[m : 2 * m].reshape(P, n)
        r = z[2 * m : 2 * m + P]
        o = 2 * m + P
        p1, p2 = z[o : o + m].reshape(P, n), z[o + m : o + 2 * m].reshape(P, n)
        return PushforwardFullState(x, d, r, p1, p2, z[o + 2 * m :])


@dataclass(eq=False)
class Trajectory:
    """RK4 samples at ``times`` (uniform on [0, 1]) with ``H_r`` at each node."""

    times: np.ndarray
    states: list
    hamiltonian_values: np.ndarray
    stages: list | None = field(default=None, repr=False)

    @property
    def final(self):
        return self.states[-1]

    @property
    def steps(self):
        return len(self.times) - 1


# ---------------------------------------------------------------- fields


def _project(d, w):
    """``P_{d^perp} w`` row-wise."""
    return w - np.sum(d * w, axis=1)[:, None] * d


def _sources(model, state):
    """``(centers, alpha, beta, gamma)`` of the optimal velocity field."""
    if isinstance(state, NormalizedState):
        a = _project(state.d, state.p2)
        e = state.d
    elif isinstance(state, PushforwardReducedState):
        a, e = state.p2, state.u
    elif isinstance(state, PushforwardFullState):
        a = _project(state.d, state.p2) + (state.p3 * state.r)[:, None] * state.d
        e = state.d
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")
    if model.tangent:
        return state.x, state.p1, e, a
    return state.x, state.p1, a, -e


def _field(centers, alpha, beta, gamma, K, y, order=0):
    """Velocity ``v(y)`` and optionally ``Dv`` (M,n,n) and ``D2v`` (M,n,n,n).

    ``Dv[m, j, l] = d v_j / d y_l`` and ``D2v[m, j, l, q] = d2 v_j / dy_l dy_q``.
    """
    w = centers[None, :, :] - y[:, None, :]
    s = np.einsum("mkn,mkn->mk", w, w)
    h0, h1, h2, h3 = h_all(K, s)
    wb = np.einsum("mkn,kn->mk", w, beta)
    v = h0 @ alpha + (2.0 * h1 * wb) @ gamma
    if order == 0:
        return v
    # Dv = sum_k -2h' alpha w^T - gamma (4h'' <w,beta> w + 2h' beta)^T
    row = -(4.0 * h2 * wb)[:, :, None] * w - 2.0 * h1[:, :, None] * beta[None, :, :]
    Dv = np.einsum("mk,kj,mkl->mjl", -2.0 * h1, alpha, w) + np.einsum("kj,mkl->mjl", gamma, row)
    if order == 1:
        return v, Dv
    n = y.shape[1]
    eye = np.eye(n)
    ww = np.einsum("mkl,mkq->mklq", w, w)
    a_part = 4.0 * h2[:, :, None, None] * ww + 2.0 * h1[:, :, None, None] * eye
    wbeta = np.einsum("mkl,kq->mklq", w, beta)
    g_part = (
        (8.0 * h3 * wb)[:, :, None, None] * ww
        + 4.0 * h2[:, :, None, None] * (wbeta + wbeta.transpose(0, 1, 3, 2))
        + (4.0 * h2 * wb)[:, :, None, None] * eye
    )
    D2v = np.einsum("kj,mklq->mjlq", alpha, a_part) + np.einsum("kj,mklq->mjlq", gamma, g_part)
    return v, Dv, D2v


def velocity_field(model, state, K, x, order=0):
    """Optimal velocity field of ``state`` evaluated at points ``x`` (M, n) or (n,)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    out = _field(*_sources(model, state), K, pts, order)
    if single:
        return out[0] if order == 0 else tuple(o[0] for o in out)
    return out


# ---------------------------------------------------------------- Hamiltonian


def _transport(model, Dv):
    return Dv if model.tangent else -np.transpose(Dv, (0, 2, 1))


def _dual_pairs(state):
    """Momentum ``c_i`` paired with ``T(Dv) e_i`` in the Hamiltonian."""
    if isinstance(state, NormalizedState):
        return _project(state.d, state.p2), state.d
    if isinstance(state, PushforwardReducedState):
        return state.p2, state.u
    a = _project(state.d, state.p2) + (state.p3 * state.r)[:, None] * state.d
    return a, state.d


def hamiltonian(model, state, K):
    """Reduced Hamiltonian ``H_r = 1/2 (p | xi_q v)`` at the optimal field (matrix-free)."""
    v, Dv = _field(*_sources(model, state), K, state.x, 1)
    c, e = _dual_pairs(state)
    Te = np.einsum("ijl,il->ij", _transport(model, Dv), e)
    return 0.5 * float(np.sum(state.p1 * v) + np.sum(c * Te))


def _scalar_blocks(state, K):
    """Blocks ``H``, ``A``, ``B`` of the kernel matrix for tangent transport."""
    x = state.x
    e = state.d if isinstance(state, NormalizedState) else state.u
    w = x[None, :, :] - x[:, None, :]  # w[i, k] = x_k - x_i
    s = np.einsum("ikn,ikn->ik", w, w)
    h0, h1, h2, _ = h_all(K, s)
    w_ek = np.einsum("ikn,kn->ik", w, e)
    w_ei = np.einsum("ikn,in->ik", w, e)
    H = h0
    A = 2.0 * h1 * w_ek
    B = -(4.0 * h2 * w_ei * w_ek + 2.0 * h1 * (e @ e.T))
    return H, A, B


def kernel_matrix(model, state, K):
    """Explicit matrix ``K_q`` with ``H_r = 1/2 p^T K_q p`` for ``p = [p1, p2]`` flattened.

    Tangent transport uses the Kronecker block structure; normal transport
    assembles columns from the (linear in ``p``) position/direction velocities.
    Only meant for small particle counts.
    """
    P, n = state.x.shape
    if P > 512:
        raise ValueError("explicit kernel matrix assembly is limited to 512 particles")
    if isinstance(state, PushforwardFullState):
        raise TypeError("kernel_matrix supports the normalized and reduced pushforward states")
    if model.tangent:
        H, A, B = _scalar_blocks(state, K)
        M = np.block([[H, A], [A.T, B]])
        Kq = np.kron(M, np.eye(n))
        if isinstance(state, NormalizedState):
            proj = np.zeros((P * n, P * n))
            for i, di in enumerate(state.d):
                proj[i * n : (i + 1) * n, i * n : (i + 1) * n] = np.eye(n) - np.outer(di, di)
            Pi = np.block([[np.eye(P * n), np.zeros((P * n, P * n))], [np.zeros((P * n, P * n)), proj]])
            Kq = Pi.T @ Kq @ Pi
        return Kq
    m = 2 * P * n
    q = state.to_vector()[:m]
    cols = []
    for j in range(m):
        p = np.zeros(m)
        p[j] = 1.0
        cols.append(_rhs_generic(model, state.with_vector(np.concatenate([q, p])), K)[:m])
    return np.column_stack(cols)


# ---------------------------------------------------------------- right-hand sides


def _rhs_generic(model, state, K):
    """Forward equations assembled from ``v``, ``Dv`` and ``D2v`` at the particles."""
    srcs = _sources(model, state)
    v, Dv, D2v = _field(*srcs, K, state.x, 2)
    c, e = _dual_pairs(state)
    T = _transport(model, Dv)
    TT = np.transpose(T, (0, 2, 1))
    # gradient in y of <c_i, T(Dv(y)) e_i>
    if model.tangent:
        G = np.einsum("ij,il,ijlq->iq", c, e, D2v)
    else:
        G = -np.einsum("ij,il,ijlq->iq", e, c, D2v)
    p1dot = -np.einsum("ijl,ij->il", Dv, state.p1) - G
    Te = np.einsum("ijl,il->ij", T, e)
    if isinstance(state, PushforwardReducedState):
        p2dot = -np.einsum("ijl,ij->il", T, state.p2)
        return np.concatenate([v.ravel(), Te.ravel(), p1dot.ravel(), p2dot.ravel()])
    d, p2 = state.d, state.p2
    dTe = np.sum(d * Te, axis=1)
    ddot = Te - dTe[:, None] * d
    TTd = np.einsum("ijl,ij->il", T, d)
    Ttp2 = np.einsum("ijl,ij->il", T, p2)
    dp2 = np.sum(d * p2, axis=1)
    if isinstance(state, NormalizedState):
        p2dot = -Ttp2 + dTe[:, None] * p2 + dp2[:, None] * (Te + TTd)
        return np.concatenate([v.ravel(), ddot.ravel(), p1dot.ravel(), p2dot.ravel()])
    rp3 = state.r * state.p3
    rdot = state.r * dTe
    p2dot = -Ttp2 + (dp2 - rp3)[:, None] * (Te + TTd) + dTe[:, None] * p2
    p3dot = -state.p3 * dTe
    return np.concatenate(
        [v.ravel(), ddot.ravel(), rdot, p1dot.ravel(), p2dot.ravel(), p3dot]
    )


def _rhs_closed_form(state, K):
    """Reduced Hamiltonian equations for tangent transport, written term by term.

    With ``w = x_k - x_i`` and ``f_ki = f(|x_k - x_i|^2)``. For the normalized
    action ``e = d`` and ``a = P_{d^perp} p2``; for the reduced pushforward
    action ``e = u`` and ``a = p2``.
    """
    normalized = isinstance(state, NormalizedState)
    e = state.d if normalized else state.u
    return _closed_form_arrays(normalized, state.x, e, state.p1, state.p2, K)


class _Workspace:
    """Reusable (P, P) scratch matrices; fresh large temporaries dominate the cost otherwise."""

    NAMES = (
        "s", "wek", "wei", "t", "u", "h0", "H1", "H2", "H3", "e_ki", "p1_ki",
        "ak_p1i", "p1k_ai", "a_ki", "H2wek", "H2wei", "acc", "c1", "c2",
    )

    def __init__(self, P):
        for name in self.NAMES:
            setattr(self, name, np.empty((P, P)))


def _thread_workspaces(P):
    local = threading.local()

    def get():
        ws = getattr(local, "ws", None)
        if ws is None:
            ws = local.ws = _Workspace(P)
        return ws

    return get


def _closed_form_arrays(normalized, x, e, p1, p2, K, ws=None):
    # All pair quantities are (P, P) matrices indexed [i, k]. Sums of the
    # form sum_k c_ik (x_k - x_i) are evaluated as c @ x - rowsum(c) x.
    a = _project(e, p2) if normalized else p2
    n = x.shape[1]
    if ws is None:
        ws = _Workspace(x.shape[0])
    mul = np.multiply
    s, wek, wei, t, u = ws.s, ws.wek, ws.wei, ws.t, ws.u
    for c in range(n):
        np.subtract(x[None, :, c], x[:, None, c], out=t)  # x_kc - x_ic
        if c == 0:
            mul(t, t, out=s)
            mul(t, e[None, :, c], out=wek)  # <x_k - x_i, e_k>
            mul(t, e[:, None, c], out=wei)  # <x_k - x_i, e_i>
        else:
            s += mul(t, t, out=u)
            wek += mul(t, e[None, :, c], out=u)
            wei += mul(t, e[:, None, c], out=u)
    k1 = -1.0 / K.sigma_v**2
    h0 = np.exp(mul(s, k1, out=ws.h0), out=ws.h0)
    H1 = mul(h0, 2.0 * k1, out=ws.H1)  # 2 h'
    H2 = mul(h0, 4.0 * k1 * k1, out=ws.H2)  # 4 h''
    H3 = mul(h0, 8.0 * k1**3, out=ws.H3)  # 8 h'''
    e_ki = np.matmul(e, e.T, out=ws.e_ki)
    p1_ki = np.matmul(p1, p1.T, out=ws.p1_ki)  # <p1_k, p1_i>, symmetric
    ak_p1i = np.matmul(p1, a.T, out=ws.ak_p1i)  # [i, k] = <a_k, p1_i>
    p1k_ai = np.matmul(a, p1.T, out=ws.p1k_ai)  # [i, k] = <p1_k, a_i>
    a_ki = np.matmul(a, a.T, out=ws.a_ki)
    H2_wek = mul(H2, wek, out=ws.H2wek)
    H2_wei = mul(H2, wei, out=ws.H2wei)

    xdot = h0 @ p1 + mul(H1, wek, out=t) @ a
    bracket = mul(H2_wek, wei, out=ws.acc)
    bracket += mul(H1, e_ki, out=t)
    edot = -(mul(H1, wei, out=t) @ p1) - bracket @ a

    c_ei = mul(H1, p1k_ai, out=ws.c1)
    c_ei += mul(H2_wek, a_ki, out=t)
    cw = mul(H1, p1_ki, out=ws.acc)
    cw += mul(H2_wek, ak_p1i, out=t)
    cw -= mul(H2_wei, p1k_ai, out=t)
    mul(H3, wek, out=t)
    t *= wei
    t += mul(H2, e_ki, out=u)
    t *= a_ki
    cw -= t
    c_ek = mul(H1, ak_p1i, out=ws.c2)
    c_ek -= mul(H2_wei, a_ki, out=t)

    def along_w(c):
        return c @ x - np.sum(c, axis=1)[:, None] * x

    p1dot = along_w(cw) + c_ek @ e - np.sum(c_ei, axis=1)[:, None] * e
    minus_DvT_a = along_w(c_ei) + mul(H1, a_ki, out=t) @ e
    if not normalized:
        return np.concatenate([xdot.ravel(), edot.ravel(), p1dot.ravel(), minus_DvT_a.ravel()])
    d_p2 = np.sum(e * p2, axis=1)
    d_edot = np.sum(e * edot, axis=1)
    p2dot = minus_DvT_a + d_p2[:, None] * edot + d_edot[:, None] * p2
    ddot = _project(e, edot)
    return np.concatenate([xdot.ravel(), ddot.ravel(), p1dot.ravel(), p2dot.ravel()])


def forward_rhs(model, state, K, route="auto"):
    """Time derivative of ``state`` along the Hamiltonian flow, as a state of the same type.

    ``route="closed"`` evaluates the reduced equations written in kernel sums
    (tangent transport, normalized or reduced pushforward only).
    ``route="generic"`` assembles the equations from the velocity field and
    its first two derivatives, and handles every model. ``"auto"`` picks the
    closed form when available.
    """
    return state.with_vector(_rhs_vector(model, state, K, route))


def _closed_form_ok(model, state):
    return model.tangent and not isinstance(state, PushforwardFullState)


def _rhs_vector(model, state, K, route="auto"):
    if route == "auto":
        route = "closed" if _closed_form_ok(model, state) else "generic"
    if route == "closed":
        if not _closed_form_ok(model, state):
            raise ValueError("closed-form equations exist only for tangent transport of reduced states")
        return _rhs_closed_form(state, K)
    if route == "generic":
        return _rhs_generic(model, state, K)
    raise ValueError(f"unknown route {route!r}")


def rhs_function(model, template_state, K, route="auto"):
    """Vector field ``z -> dz/dt`` on flattened states shaped like ``template_state``."""

    if route in ("auto", "closed") and _closed_form_ok(model, template_state):
        normalized = isinstance(template_state, NormalizedState)
        P, n = template_state.x.shape
        workspace = _thread_workspaces(P)

        def f_closed(z):
            x, e, p1, p2 = z.reshape(4, P, n)
            return _closed_form_arrays(normalized, x, e, p1, p2, K, workspace())

        return f_closed

    def f(z):
        return _rhs_vector(model, template_state.with_vector(z), K, route)

    return f


# ---------------------------------------------------------------- integration


def rk4(f, z0, steps, keep_stages=False, check=None):
    """Classical RK4 on [0, 1] with ``steps`` uniform steps.

    Returns the node values and, with ``keep_stages``, the four stage points
    of every step (needed by the discrete adjoint sweep).
    """
    if steps < 1:
        raise ValueError("need at least one RK4 step")
    h = 1.0 / steps
    z = np.array(z0, dtype=float)
    nodes = [z]
    stages = [] if keep_stages else None
    for n in range(steps):
        y1 = z
        k1 = f(y1)
        y2 = z + 0.5 * h * k1
        k2 = f(y2)
        y3 = z + 0.5 * h * k2
        k3 = f(y3)
        y4 = z + h * k3
        k4 = f(y4)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise IntegrationError("non-finite state", step=n + 1)
        if check is not None:
            check(z, n + 1)
        nodes.append(z)
        if keep_stages:
            stages.append((y1, y2, y3, y4))
    return nodes, stages


def _make_check(state):
    if isinstance(state, PushforwardReducedState):
        u0 = np.linalg.norm(state.u, axis=1)
        P, n = state.x.shape

        def check(z, step):
            u = z[P * n : 2 * P * n].reshape(P, n)
            norms = np.linalg.norm(u, axis=1)
            if np.any(norms < MASS_COLLAPSE_RATIO * u0):
                i = int(np.argmin(norms / np.maximum(u0, 1e-300)))
                raise IntegrationError(f"mass collapse of particle {i} (|u| = {norms[i]:.3e})", step)

        return check
    return None


def integrate(model, initial_state, K, steps=20, keep_stages=False, route="auto"):
    """Shoot the geodesic from ``initial_state`` with RK4 over [0, 1]."""
    f = rhs_function(model, initial_state, K, route)
    nodes, stages = rk4(f, initial_state.to_vector(), steps, keep_stages, _make_check(initial_state))
    states = [initial_state.with_vector(z) for z in nodes]
    with np.errstate(over="ignore", invalid="ignore"):
        ham = np.array([hamiltonian(model, s, K) for s in states])
    bad = np.flatnonzero(~np.isfinite(ham))
    if bad.size:
        raise IntegrationError("Hamiltonian is not finite; increase the number of steps", int(bad[0]))
    if not isinstance(initial_state, PushforwardReducedState):
        drift = max(float(np.max(np.abs(np.linalg.norm(s.d, axis=1) - 1.0), initial=0.0)) for s in states)
        if drift > DIRECTION_DRIFT_WARN:
            warnings.warn(
                f"direction norms drifted by {drift:.2e}; increase the number of steps",
                RuntimeWarning,
                stacklevel=2,
            )
    return Trajectory(np.linspace(0.0, 1.0, steps + 1), states, ham, stages)


# ---------------------------------------------------------------- conversions


def reduce_full_state(full, tol=COMPAT_TOL):
    """Map a compatible full pushforward state to the reduced ``(x, u, p1, p2)`` state."""
    dp2 = np.sum(full.p2 * full.d, axis=1)
    rp3 = full.r * full.p3
    gap = np.abs(dp2 - rp3)
    if np.any(gap > tol * np.maximum(1.0, np.abs(rp3))):
        i = int(np.argmax(gap))
        raise ValueError(f"particle {i} violates <p2, d> = r p3 (gap {gap[i]:.3e})")
    u = full.r[:, None] * full.d
    p2 = (_project(full.d, full.p2) + rp3[:, None] * full.d) / full.r[:, None]
    return PushforwardReducedState(full.x, u, full.p1, p2)


def expand_reduced_state(red):
    """Inverse of ``reduce_full_state``: ``(x, u/|u|, |u|, p1, |u| p2, <p2, u/|u|>)``."""
    r = np.linalg.norm(red.u, axis=1)
    d = red.u / r[:, None]
    return PushforwardFullState(
        red.x, d, r, red.p1, r[:, None] * red.p2, np.sum(red.p2 * d, axis=1)
    )


def initial_state(model, mu, p1=None, p2=None):
    """Geodesic initial condition for template ``mu`` and momenta (zeros by default)."""
    P, n = mu.x.shape
    p1 = np.zeros((P, n)) if p1 is None else np.asarray(p1, dtype=float).reshape(P, n)
    p2 = np.zeros((P, n)) if p2 is None else np.asarray(p2, dtype=float).reshape(P, n)
    if model.action == "normalized":
        return NormalizedState(mu.x, mu.d, p1, p2, mu.r)
    return PushforwardReducedState(mu.x, mu.r[:, None] * mu.d, p1, p2)


def state_varifold_arrays(state):
    """``(x, d, r)`` carried by a state (directions as stored, not renormalized)."""
    if isinstance(state, PushforwardReducedState):
        r = np.linalg.norm(state.u, axis=1)
        return state.x, state.u / r[:, None], r
    return state.x, state.d, state.r


def state_to_varifold(state):
    from .varifold import DiscreteVarifold

    x, d, r = state_varifold_arrays(state)
    return DiscreteVarifold(x, d, r, unit_tol=OUTPUT_UNIT_TOL, check_distinct=False)


def with_passive_points(model, state, points):
    """Append zero-momentum tracer particles; they follow ``v`` without changing it."""
    pts = np.asarray(points, dtype=float)
    M, n = pts.shape
    z = np.zeros((M, n))
    e = np.zeros((M, n))
    e[:, 0] = 1.0
    if isinstance(state, NormalizedState):
        return NormalizedState(
            np.vstack([state.x, pts]), np.vstack([state.d, e]),
            np.vstack([state.p1, z]), np.vstack([state.p2, z]),
            np.concatenate([state.r, np.ones(M)]),
        )
    if isinstance(state, PushforwardReducedState):
        return PushforwardReducedState(
            np.vstack([state.x, pts]), np.vstack([state.u, e]),
            np.vstack([state.p1, z]), np.vstack([state.p2, z]),
        )
    return replace(
        state,
        x=np.vstack([state.x, pts]), d=np.vstack([state.d, e]),
        r=np.concatenate([state.r, np.ones(M)]),
        p1=np.vstack([state.p1, z]), p2=np.vstack([state.p2, z]),
        p3=np.concatenate([state.p3, np.zeros(M)]),
    )


# ---------------------------------------------------------------- group action


def apply_action(model, mu, phi_x, jacobians):
    """Act on ``mu`` with a diffeomorphism sampled at its Diracs.

    ``phi_x`` holds ``phi(x_i)`` (P, n) and ``jacobians`` holds ``D_{x_i} phi``
    (P, n, n). Tangent directions are mapped by the Jacobian, normal
    directions by its inverse transpose; the pushforward action multiplies
    weights by the norm of the mapped direction.
    """
    from .varifold import DiscreteVarifold

    phi_x = np.asarray(phi_x, dtype=float).reshape(mu.x.shape)
    J = np.asarray(jacobians, dtype=float).reshape(len(mu), mu.dimension, mu.dimension)
    if model.tangent:
        mapped = np.einsum("ijk,ik->ij", J, mu.d)
    else:
        cond = np.linalg.cond(J) if len(mu) else np.zeros(0)
        if np.any(~np.isfinite(cond) | (cond > NORMAL_COND_MAX)):
            i = int(np.argmax(~np.isfinite(cond) | (cond > NORMAL_COND_MAX)))
            raise ValueError(f"Jacobian at dirac {i} is singular (condition {cond[i]:.3e})")
        mapped = np.linalg.solve(np.transpose(J, (0, 2, 1)), mu.d[:, :, None])[:, :, 0]
    norms = np.linalg.norm(mapped, axis=1)
    r = mu.r * norms if model.action == "pushforward" else mu.r
    return DiscreteVarifold(phi_x, mapped / norms[:, None], r, check_distinct=False)

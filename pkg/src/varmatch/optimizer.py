"""Geodesic shooting registration of discrete varifolds.

The energy of initial momenta ``p0 = (p1, p2)`` (array of shape (2, P, n)) is

    E(p0) = H_r(p0, q0) + lambda * |mu(1) - target|^2

where ``mu(1)`` is the varifold carried by the endpoint of the geodesic.
Its gradient is ``K_q0 p0 + lambda * p~(0)`` where ``p~(0)`` comes from a
backward adjoint sweep through the RK4 steps.

The adjoint needs vector-Jacobian products of the forward vector field ``F``.
``F = J grad H_r`` is an exact Hamiltonian field, so
``dF^T lam = J dF (J lam)`` and one central difference of ``F`` along ``J lam``
gives each product.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .dynamics import (
    ActionModel,
    NormalizedState,
    Trajectory,
    hamiltonian,
    initial_state,
    integrate,
    rhs_function,
    rk4,
    state_to_varifold,
    _make_check,
)
from .fidelity import FidelityConfig, distance_arrays, gradient_arrays, pushforward_gradient_arrays
from .kernels import DeformationKernel

FD_REL_EPS = 1e-6
LADDER = (-2, -1, 0, 1, 2)
SHRINK = 4.0
STALL_WINDOW = 10
# a block whose gradient is this small relative to the whole is left out of the search
INACTIVE_BLOCK = 1e-10


@dataclass
class RegistrationProblem:
    template: object
    target: object
    model: ActionModel = field(default_factory=ActionModel)
    fidelity: FidelityConfig = field(default_factory=FidelityConfig)
    deformation: DeformationKernel = field(default_factory=DeformationKernel)
    lam: float = 1.0
    steps: int = 20
    max_iter: int = 500
    tol_grad: float = 1e-6
    tol_energy: float = 1e-8
    init_step: float = 0.1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.template.dimension != self.target.dimension:
            raise ValueError(
                f"template dimension {self.template.dimension} != target dimension {self.target.dimension}"
            )
        if self.steps < 1 or self.max_iter < 0:
            raise ValueError("steps must be >= 1 and max_iter >= 0")

    @property
    def momentum_shape(self):
        return (2, len(self.template), self.template.dimension)


@dataclass
class RegistrationResult:
    p0: np.ndarray
    energy_history: list
    final_trajectory: Trajectory
    deformed: object
    status: str
    iterations: int

    @property
    def energy(self):
        return self.energy_history[-1]["energy"]

    @property
    def fidelity(self):
        return self.energy_history[-1]["fidelity"]


def _J(w, m):
    return np.concatenate([w[m:], -w[:m]])


def _vjp(f, z, lam, m):
    """``dF(z)^T lam`` from one central difference along ``J lam``."""
    probe = _J(lam, m)
    scale = float(np.max(np.abs(probe)))
    if scale == 0.0:
        return np.zeros_like(lam)
    eps = FD_REL_EPS * max(1.0, float(np.max(np.abs(z))))
    direction = probe / scale
    dF = (f(z + eps * direction) - f(z - eps * direction)) * (scale / (2.0 * eps))
    return _J(dF, m)


class _Shooter:
    """Forward and adjoint machinery for one problem."""

    def __init__(self, prob):
        self.prob = prob
        self.model = prob.model
        self.K = prob.deformation
        self.cfg = prob.fidelity
        self.base = initial_state(prob.model, prob.template)
        self.f = rhs_function(prob.model, self.base, prob.deformation)
        P, n = prob.template.x.shape
        self.P, self.n = P, n
        self.m = 2 * P * n
        self.q0 = self.base.to_vector()[: self.m]
        tg = prob.target
        self.target_arrays = (tg.x, tg.d, tg.r)

    def z0(self, p0):
        return np.concatenate([self.q0, np.asarray(p0, dtype=float).reshape(-1)])

    def state(self, p0):
        return self.base.with_vector(self.z0(p0))

    def _final_arrays(self, z1):
        q = z1[: self.m].reshape(2, self.P, self.n)
        return q[0], q[1]

    def fidelity(self, z1):
        x, e = self._final_arrays(z1)
        if isinstance(self.base, NormalizedState):
            d, r = e, self.base.r
        else:
            r = np.linalg.norm(e, axis=1)
            d = e / r[:, None]
        return distance_arrays(self.cfg, x, d, r, *self.target_arrays)

    def fidelity_gradient(self, z1):
        x, e = self._final_arrays(z1)
        if isinstance(self.base, NormalizedState):
            gx, ge, _ = gradient_arrays(self.cfg, x, e, self.base.r, *self.target_arrays)
        else:
            gx, ge = pushforward_gradient_arrays(self.cfg, x, e, *self.target_arrays)
        return np.concatenate([gx.ravel(), ge.ravel()])

    def shoot(self, p0, keep_stages=False):
        z0 = self.z0(p0)
        return rk4(self.f, z0, self.prob.steps, keep_stages, _make_check(self.base))

    def energy(self, p0):
        z0 = self.z0(p0)
        reg = hamiltonian(self.model, self.base.with_vector(z0), self.K)
        nodes, _ = self.shoot(p0)
        fid = self.fidelity(nodes[-1])
        return reg + self.prob.lam * fid, reg, fid

    def adjoint(self, p0, nodes=None, stages=None):
        if stages is None:
            nodes, stages = self.shoot(p0, keep_stages=True)
        m = self.m
        lam = np.concatenate([self.fidelity_gradient(nodes[-1]), np.zeros(m)])
        h = 1.0 / self.prob.steps
        f = self.f
        for y1, y2, y3, y4 in reversed(stages):
            bk1 = (h / 6.0) * lam
            bk2 = (h / 3.0) * lam
            bk3 = (h / 3.0) * lam
            bk4 = (h / 6.0) * lam
            bz = lam.copy()
            by4 = _vjp(f, y4, bk4, m)
            bz += by4
            bk3 = bk3 + h * by4
            by3 = _vjp(f, y3, bk3, m)
            bz += by3
            bk2 = bk2 + 0.5 * h * by3
            by2 = _vjp(f, y2, bk2, m)
            bz += by2
            bk1 = bk1 + 0.5 * h * by2
            bz += _vjp(f, y1, bk1, m)
            lam = bz
            if not np.all(np.isfinite(lam)):
                raise ArithmeticError("non-finite adjoint state")
        return lam[m:].reshape(2, self.P, self.n)

    def energy_and_gradient(self, p0):
        z0 = self.z0(p0)
        reg = hamiltonian(self.model, self.base.with_vector(z0), self.K)
        nodes, stages = self.shoot(p0, keep_stages=True)
        fid = self.fidelity(nodes[-1])
        ptilde = self.adjoint(p0, nodes, stages)
        kq_p = self.f(z0)[: self.m].reshape(2, self.P, self.n)
        grad = kq_p + self.prob.lam * ptilde
        return (reg + self.prob.lam * fid, reg, fid), grad


def _zeros(prob):
    return np.zeros(prob.momentum_shape)


def _as_p0(prob, p0):
    if p0 is None:
        return _zeros(prob)
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != prob.momentum_shape:
        raise ValueError(f"p0 has shape {p0.shape}, expected {prob.momentum_shape}")
    return p0


def energy(prob, p0=None):
    """``(total, H_r(p0, q0), fidelity)`` for initial momenta ``p0``."""
    return _Shooter(prob).energy(_as_p0(prob, p0))


def adjoint_gradient(prob, p0=None):
    """Gradient of the fidelity of the geodesic endpoint with respect to ``p0``."""
    return _Shooter(prob).adjoint(_as_p0(prob, p0))


def grad_energy(prob, p0=None):
    """Gradient of the registration energy with respect to ``p0``."""
    return _Shooter(prob).energy_and_gradient(_as_p0(prob, p0))[1]


def _record(it, e, steps, accepted):
    return {
        "iteration": it,
        "energy": e[0],
        "regularization": e[1],
        "fidelity": e[2],
        "step_spatial": steps[0],
        "step_directional": steps[1],
        "accepted": accepted,
    }


def register(prob, p0_init=None):
    """Gradient descent on the initial momenta with a per-block step search.

    Each iteration tries the 5 x 5 grid of step pairs ``(s1 2^i, s2 2^j)``,
    ``i, j`` in -2..2, around the last accepted pair ``(s1, s2)``; ``s1``
    scales the spatial block of the gradient and ``s2`` the directional one.
    The lowest energy wins (ties go to the smaller pair). When no candidate
    improves the energy, both steps are divided by 4. A block whose gradient
    is negligible next to the other keeps its step and is not searched.
    """
    sh = _Shooter(prob)
    p0 = _as_p0(prob, p0_init).copy()
    start = p0.copy()
    cur, grad = sh.energy_and_gradient(p0)
    history = [_record(0, cur, (0.0, 0.0), True)]
    steps = None
    status = "max-iter"
    accepted_any = False
    it = 0
    while True:
        gnorm = float(np.linalg.norm(grad))
        if gnorm < prob.tol_grad:
            status = "converged-gradient"
            break
        if it >= prob.max_iter:
            break
        if (
            it >= STALL_WINDOW
            and history[it - STALL_WINDOW]["energy"] - cur[0]
            < prob.tol_energy * max(abs(history[it - STALL_WINDOW]["energy"]), 1e-300)
        ):
            status = "converged-energy" if accepted_any else "no-descent"
            break
        it += 1
        bnorm = [float(np.linalg.norm(grad[b])) for b in (0, 1)]
        active = [n > INACTIVE_BLOCK * gnorm for n in bnorm]
        if steps is None:
            steps = tuple(prob.init_step / (n if a else gnorm) for n, a in zip(bnorm, active))
        ladders = [LADDER if a else (0,) for a in active]
        cands = sorted(
            (steps[0] * 2.0**i, steps[1] * 2.0**j) for i in ladders[0] for j in ladders[1]
        )
        # rounding noise in an inactive block must not move p0
        grad = np.stack([grad[b] if active[b] else np.zeros_like(grad[b]) for b in (0, 1)])

        def trial(pair):
            p = p0 - np.stack([pair[0] * grad[0], pair[1] * grad[1]])
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    return sh.energy(p)
            except ArithmeticError:
                return (math.inf, math.inf, math.inf)

        energies = ordered_map(trial, cands)
        best = min(range(len(cands)), key=lambda k: (energies[k][0], k))
        if energies[best][0] < cur[0]:
            steps = cands[best]
            p0 = p0 - np.stack([steps[0] * grad[0], steps[1] * grad[1]])
            cur, grad = sh.energy_and_gradient(p0)
            accepted_any = True
            history.append(_record(it, cur, steps, True))
        else:
            steps = (steps[0] / SHRINK, steps[1] / SHRINK)
            history.append(_record(it, cur, steps, False))
    if not accepted_any and it > 0:
        status = "no-descent"
        p0 = start
    traj = integrate(prob.model, sh.state(p0), prob.deformation, prob.steps)
    return RegistrationResult(
        p0=p0,
        energy_history=history,
        final_trajectory=traj,
        deformed=state_to_varifold(traj.final),
        status=status,
        iterations=it,
    )

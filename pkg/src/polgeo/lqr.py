"""LQR cost, gradients, Hessian-vector products, the DARE oracle, Hewer's
quasi-Newton iteration, and certified gradient-descent drivers.

Cost: J(K) = 1/2 tr(P_K Sigma) = 1/2 tr((Q + K^T R K) Y_K) with
P_K = L(A_cl^T, Q + K^T R K) and Y_K = L(A_cl, Sigma).
"""

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InfeasibleError, InternalInvariantError, StalledError
from .lyapunov import dlyap, dlyap_diff
from .numerics import solve_linear, spectral_norm, spectral_radius
from .policy_core import StaticGain, closed_loop_static, is_stabilizing_static, stability_certificate

MAX_BACKTRACKS = 30


def backtrack(feasible, cost, J_ref, eta0):
    """Halve eta until the candidate is feasible and strictly decreases the
    cost. If 30 halvings never find a strict decrease (the decrement is below
    round-off near a minimizer), retry once accepting non-increase within
    round-off slack. Returns (eta, accepted)."""
    eta = eta0
    for _ in range(MAX_BACKTRACKS + 1):
        if feasible(eta) and cost(eta) < J_ref:
            return eta, True
        eta *= 0.5
    eta = eta0
    slack = 1e-14 * (1.0 + abs(J_ref))
    for _ in range(MAX_BACKTRACKS + 1):
        if feasible(eta) and cost(eta) <= J_ref + slack:
            return eta, True
        eta *= 0.5
    return eta, False


@dataclass(frozen=True)
class LqrEval:
    J: float
    P_K: np.ndarray
    Y_K: np.ndarray
    A_cl: np.ndarray


@dataclass(frozen=True)
class IterTrace:
    iter: int
    J: float
    grad_norm: float
    step: float
    rho: float


def write_trace_jsonl(path, trace):
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(asdict(rec)) + "\n")


def _require_certified(K):
    if not K.certified:
        raise InfeasibleError("operation requires a certified stabilizing gain")


def lqr_eval(plant, K):
    """Both Lyapunov solves; the two cost forms agree by the trace identity."""
    _require_certified(K)
    Acl = closed_loop_static(plant, K.K)
    mid = plant.Q + K.K.T @ plant.R @ K.K
    P = dlyap(Acl.T, mid).P
    Y = dlyap(Acl, plant.Sigma).P
    J = 0.5 * float(np.trace(P @ plant.Sigma))
    J_dual = 0.5 * float(np.trace(mid @ Y))
    if abs(J - J_dual) > 1e-9 * (1.0 + abs(J)):
        raise InternalInvariantError("lqr_eval: dual cost expressions disagree")
    return LqrEval(J=J, P_K=P, Y_K=Y, A_cl=Acl)


def lqr_grad_riemannian(plant, K, ev=None):
    """grad J(K) = R K + B^T P_K A_cl (gradient in the Lyapunov metric)."""
    ev = ev if ev is not None else lqr_eval(plant, K)
    return plant.R @ K.K + plant.B.T @ ev.P_K @ ev.A_cl


def lqr_grad_euclidean(plant, K, ev=None):
    ev = ev if ev is not None else lqr_eval(plant, K)
    return lqr_grad_riemannian(plant, K, ev) @ ev.Y_K


def s_map(plant, K, V, ev=None):
    """S_K(V) = L(A_cl^T, V^T grad + grad^T V): the derivative of K -> P_K along V."""
    ev = ev if ev is not None else lqr_eval(plant, K)
    g = lqr_grad_riemannian(plant, K, ev)
    V = np.asarray(V, dtype=float)
    return dlyap(ev.A_cl.T, V.T @ g + g.T @ V).P


def lqr_hvp_pseudo(plant, K, V, ev=None):
    """Pseudo-Euclidean Hessian-vector product:
    (R + B^T P_K B) V + B^T S_K(V) A_cl, the derivative of K -> grad J(K)."""
    ev = ev if ev is not None else lqr_eval(plant, K)
    V = np.asarray(V, dtype=float)
    S = s_map(plant, K, V, ev)
    return (plant.R + plant.B.T @ ev.P_K @ plant.B) @ V + plant.B.T @ S @ ev.A_cl


def lqr_hvp_euclidean(plant, K, V, ev=None):
    """Full chain-rule derivative of the Euclidean gradient grad*Y_K along V."""
    ev = ev if ev is not None else lqr_eval(plant, K)
    V = np.asarray(V, dtype=float)
    g = lqr_grad_riemannian(plant, K, ev)
    dY = dlyap_diff(ev.A_cl, plant.Sigma, plant.B @ V, np.zeros((plant.n, plant.n)))
    return lqr_hvp_pseudo(plant, K, V, ev) @ ev.Y_K + g @ dY


def dare_solve(plant, tol=1e-12, max_iter=100_000):
    """Fixed-point Riccati iteration from P0 = Q; returns (P*, K*)."""
    A, B, Q, R = plant.A, plant.B, plant.Q, plant.R
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        gain = solve_linear(R + BtP @ B, BtP @ A)
        Pn = Q + A.T @ P @ A - A.T @ P @ B @ gain
        if np.linalg.norm(Pn - P) <= tol * (1.0 + np.linalg.norm(Pn)):
            P = Pn
            break
        P = Pn
    else:
        raise InfeasibleError("dare_solve: no convergence; (A,B) stabilizability suspect")
    BtP = B.T @ P
    Kstar = -solve_linear(R + BtP @ B, BtP @ A)
    return P, StaticGain.certify(plant, Kstar)


def hewer_step(plant, K):
    """K+ = -(R + B^T P_K B)^-1 B^T P_K A; unit step certified by re-verification."""
    ev = lqr_eval(plant, K)
    BtP = plant.B.T @ ev.P_K
    Knew = -solve_linear(plant.R + BtP @ plant.B, BtP @ plant.A)
    return StaticGain.certify(plant, Knew)


@dataclass(frozen=True)
class FixedStep:
    eta: float | None = None


@dataclass(frozen=True)
class CertificateStep:
    cap: float = 1.0


def _descent_direction(plant, K, ev, direction):
    g = lqr_grad_riemannian(plant, K, ev)
    if direction == "riemannian":
        return -g, float(np.linalg.norm(g))
    if direction == "euclidean":
        ge = g @ ev.Y_K
        return -ge, float(np.linalg.norm(ge))
    if direction == "pseudo_newton":
        # Hewer's quasi-Newton operator (R + B^T P_K B), positive definite.
        V = -solve_linear(plant.R + plant.B.T @ ev.P_K @ plant.B, g)
        return V, float(np.linalg.norm(g))
    raise ValueError(f"unknown direction {direction!r}")


def _initial_eta(plant, K, V, step_rule):
    if isinstance(step_rule, CertificateStep):
        eta = min(step_rule.cap, stability_certificate(plant, K, V))
        return eta if np.isfinite(eta) else step_rule.cap
    eta = step_rule.eta
    if eta is None:
        eta = 1e-3 / spectral_norm(plant.R)
    return eta


def gd_run(plant, K0, direction="euclidean", step_rule=CertificateStep(),
           tol=1e-8, max_iter=1000):
    """Certified descent driver.

    Every iterate is certified stabilizing; the step is halved (up to 30
    times) until the candidate both stays stabilizing and decreases J.
    Terminates when the gradient norm falls below tol.
    """
    _require_certified(K0)
    K = K0
    trace = []
    for it in range(max_iter + 1):
        ev = lqr_eval(plant, K)
        V, gnorm = _descent_direction(plant, K, ev, direction)
        rho = spectral_radius(ev.A_cl)
        if gnorm <= tol or it == max_iter:
            trace.append(IterTrace(iter=it, J=ev.J, grad_norm=gnorm, step=0.0, rho=rho))
            break
        eta0 = _initial_eta(plant, K, V, step_rule)
        eta, accepted = backtrack(
            lambda e: is_stabilizing_static(plant, K.K + e * V),
            lambda e: lqr_eval(plant, StaticGain(K.K + e * V, True)).J,
            ev.J, eta0)
        if not accepted:
            trace.append(IterTrace(iter=it, J=ev.J, grad_norm=gnorm, step=0.0, rho=rho))
            raise StalledError("gd_run: 30 failed backtracks", trace)
        trace.append(IterTrace(iter=it, J=ev.J, grad_norm=gnorm, step=eta, rho=rho))
        K = StaticGain(K=K.K + eta * V, certified=True)
    return K, trace

"""
Optimizador de trayectorias iLQR para la masa puntual.

Dinámica (doble integrador, Euler explícito):
    p_{t+1} = p_t + v_t dt
    v_{t+1} = v_t + u_t dt

Costo: J(tau) = w^T Phi(tau), con Phi de featurizer.integrate_features.
El paso hacia atrás usa las hessianas de Gauss-Newton de las características
y regularización de Levenberg sobre Q_uu; el paso hacia adelante hace
búsqueda en línea con retroceso sobre el término de avance.
"""
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from django.conf import settings
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .domain import (
    ConfigurationError,
    NumericalError,
    State,
    Trajectory,
    as_array,
    trajectory_cost,
)
from .featurizer import integrate_features, trajectory_derivatives

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    cost_tolerance: float = 1e-9
    initial_regularization: float = 1e-6
    regularization_growth: float = 10.0
    regularization_shrink: float = 2.0
    min_regularization: float = 1e-9
    max_regularization: float = 1e9
    line_search_steps: int = 10
    line_search_shrink: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations debe ser >= 1")
        if self.line_search_steps < 1:
            raise ConfigurationError("line_search_steps debe ser >= 1")
        for entry in ['cost_tolerance', 'initial_regularization', 'min_regularization', 'max_regularization']:
            if not getattr(self, entry) > 0:
                raise ConfigurationError(f"{entry} debe ser positivo")
        if not self.regularization_growth > 1 or not self.regularization_shrink > 1:
            raise ConfigurationError("Los factores de regularización deben ser > 1")
        if not 0 < self.line_search_shrink < 1:
            raise ConfigurationError("line_search_shrink debe estar en (0, 1)")

    @classmethod
    def from_settings(cls, **overrides):
        values = dict(settings.MOIRL['SOLVER'])
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass(frozen=True, eq=False)
class SolveResult:
    trajectory: Trajectory
    converged: bool
    final_cost: float
    iterations_used: int
    cost_history: List[float] = field(default_factory=list)


def linearize(dt):
    """Matrices A, B (constantes) del doble integrador discretizado."""
    A = np.eye(4)
    A[:2, 2:] = dt * np.eye(2)
    B = np.zeros((4, 2))
    B[2:, :] = dt * np.eye(2)
    return A, B


def step_dynamics(x, u, dt):
    if not dt > 0:
        raise ConfigurationError(f"dt debe ser positivo, se recibió {dt}")
    state = np.asarray(getattr(x, 'as_vector', lambda: x)(), dtype=float)
    force = np.asarray(getattr(u, 'force', u), dtype=float)
    position, velocity = state[:2], state[2:]
    next_state = np.concatenate([position + velocity * dt, velocity + force * dt])
    return State.from_vector(next_state) if isinstance(x, State) else next_state


def _simulate(x0, controls, dt):
    states = np.empty((controls.shape[0] + 1, 4))
    states[0] = x0
    for t, u in enumerate(controls):
        states[t + 1] = step_dynamics(states[t], u, dt)
    return states


def rollout(x0, controls, env):
    """Aplica step_dynamics sobre toda la secuencia de controles."""
    controls = np.array([getattr(u, 'force', u) for u in controls], dtype=float).reshape(-1, 2)
    if controls.shape[0] != env.horizon_T:
        raise ConfigurationError(
            f"Se esperaban {env.horizon_T} controles, se recibieron {controls.shape[0]}"
        )
    x0 = np.asarray(getattr(x0, 'as_vector', lambda: x0)(), dtype=float)
    return Trajectory(_simulate(x0, controls, env.dt), controls, env.dt)


class ILQRSolver:
    """
    Resuelve min_u w^T Phi(tau) para unos pesos fijos.
    """

    def __init__(self, env, w, cfg=None):
        self.env = env
        self.cfg = cfg or SolverConfig()
        self.w = as_array(w)
        self.stage_w, self.terminal_w = env.split_weights(self.w)
        if np.any(self.w < 0):
            raise ConfigurationError("Los pesos deben ser no negativos")
        self.A, self.B = linearize(env.dt)

    def cost(self, trajectory):
        return trajectory_cost(self.w, integrate_features(trajectory, self.env))

    def _cost_or_inf(self, trajectory):
        try:
            return self.cost(trajectory)
        except NumericalError:
            return np.inf

    def _backward_pass(self, trajectory, regularization):
        derivs = trajectory_derivatives(trajectory.states, trajectory.controls, self.env)
        dt = self.env.dt
        A, B = self.A, self.B

        # contracción con los pesos; el costo de etapa se escala por dt
        lx = dt * np.einsum('k,tki->ti', self.stage_w, derivs.stage_gradient_x)
        lu = dt * np.einsum('k,tki->ti', self.stage_w, derivs.stage_gradient_u)
        lxx = dt * np.einsum('k,tkij->tij', self.stage_w, derivs.stage_hessian_xx)
        luu = dt * np.einsum('k,tkij->tij', self.stage_w, derivs.stage_hessian_uu)

        Vx = self.terminal_w @ derivs.terminal_gradient_x
        Vxx = np.einsum('k,kij->ij', self.terminal_w, derivs.terminal_hessian_xx)

        horizon = trajectory.horizon
        k_ff = np.zeros((horizon, 2))
        K_fb = np.zeros((horizon, 2, 4))
        expected_linear, expected_quadratic = 0.0, 0.0
        eye_u = np.eye(2)

        for t in reversed(range(horizon)):
            Qx = lx[t] + A.T @ Vx
            Qu = lu[t] + B.T @ Vx
            Qxx = lxx[t] + A.T @ Vxx @ A
            Quu = luu[t] + B.T @ Vxx @ B
            Qux = B.T @ Vxx @ A

            try:
                factor = cho_factor(Quu + regularization * eye_u)
            except LinAlgError:
                return None
            k = -cho_solve(factor, Qu)
            K = -cho_solve(factor, Qux)
            k_ff[t], K_fb[t] = k, K

            expected_linear += k @ Qu
            expected_quadratic += 0.5 * k @ Quu @ k

            Vx = Qx + K.T @ Quu @ k + K.T @ Qu + Qux.T @ k
            Vxx = Qxx + K.T @ Quu @ K + K.T @ Qux + Qux.T @ K
            Vxx = 0.5 * (Vxx + Vxx.T)

        return k_ff, K_fb, expected_linear, expected_quadratic

    def _forward_pass(self, trajectory, k_ff, K_fb, alpha):
        dt = self.env.dt
        states = np.empty_like(trajectory.states)
        controls = np.empty_like(trajectory.controls)
        states[0] = trajectory.states[0]
        for t in range(trajectory.horizon):
            controls[t] = (
                trajectory.controls[t]
                + alpha * k_ff[t]
                + K_fb[t] @ (states[t] - trajectory.states[t])
            )
            states[t + 1] = step_dynamics(states[t], controls[t], dt)
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(controls))):
            return None
        return Trajectory(states, controls, dt)

    def solve(self, x0, warm_start=None):
        cfg = self.cfg
        env = self.env
        x0 = np.asarray(getattr(x0, 'as_vector', lambda: x0)(), dtype=float)
        if warm_start is not None:
            controls = np.array(warm_start.controls, dtype=float)
        else:
            controls = np.zeros((env.horizon_T, 2))
        if not np.all(np.isfinite(x0)) or not np.all(np.isfinite(controls)):
            raise NumericalError("Estado inicial o controles iniciales no finitos")
        trajectory = rollout(x0, controls, env)

        cost = self._cost_or_inf(trajectory)
        if not np.isfinite(cost):
            raise NumericalError(
                f"Costo no finito en la trayectoria inicial (pesos={self.w.tolist()})"
            )

        history = [cost]
        regularization = cfg.initial_regularization
        converged = False
        iterations = 0

        while iterations < cfg.max_iterations:
            iterations += 1
            backward = self._backward_pass(trajectory, regularization)
            if backward is None:
                regularization *= cfg.regularization_growth
                if regularization > cfg.max_regularization:
                    logger.debug("iLQR: regularización máxima alcanzada en el paso hacia atrás")
                    break
                continue
            k_ff, K_fb, expected_linear, expected_quadratic = backward

            # reducción esperada con alpha = 1
            if -(expected_linear + expected_quadratic) <= cfg.cost_tolerance * max(abs(cost), 1e-12):
                converged = True
                break

            alpha = 1.0
            accepted = None
            for _ in range(cfg.line_search_steps):
                candidate = self._forward_pass(trajectory, k_ff, K_fb, alpha)
                if candidate is not None:
                    candidate_cost = self._cost_or_inf(candidate)
                    if candidate_cost < cost:
                        accepted = (candidate, candidate_cost)
                        break
                alpha *= cfg.line_search_shrink

            if accepted is None:
                regularization *= cfg.regularization_growth
                if regularization > cfg.max_regularization:
                    logger.debug("iLQR: sin descenso con regularización máxima")
                    break
                continue

            candidate, candidate_cost = accepted
            relative_decrease = (cost - candidate_cost) / max(abs(cost), 1e-12)
            trajectory, cost = candidate, candidate_cost
            history.append(cost)
            regularization = max(cfg.min_regularization, regularization / cfg.regularization_shrink)
            if relative_decrease < cfg.cost_tolerance:
                converged = True
                break

        logger.debug(
            f"iLQR terminó: costo={cost:.6g}, iteraciones={iterations}, convergió={converged}"
        )
        return SolveResult(
            trajectory=trajectory,
            converged=converged,
            final_cost=cost,
            iterations_used=iterations,
            cost_history=history,
        )


def solve(env, w, x0=None, warm_start=None, cfg=None):
    """
    OC(w): trayectoria localmente óptima para el costo w^T Phi desde x0
    (por defecto env.start).
    """
    x0 = env.start if x0 is None else x0
    return ILQRSolver(env, w, cfg).solve(x0, warm_start=warm_start)

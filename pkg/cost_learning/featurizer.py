"""
Características de etapa y terminales para la masa puntual en 2D.

Orden de características (ver EnvironmentSpec.feature_layout):
    etapa:    G, XReg, UReg, Obs_1..Obs_n
    terminal: G, XReg, Obs_1..Obs_n

    G      = ||p - goal||^2 + ||v||^2
    XReg   = ||x||^2            (estado completo [px, py, vx, vy])
    UReg   = ||u||^2
    Obs_i  = max(0, l_i - (||p - O_i|| - r_i))^2

Las hessianas son aproximaciones de Gauss-Newton (semidefinidas positivas).
"""
from dataclasses import dataclass

import numpy as np

from .domain import ConfigurationError, FeatureVector, as_array


@dataclass(frozen=True, eq=False)
class FeatureDerivatives:
    """Derivadas por característica; la primera dimensión recorre las características."""
    stage_gradient_x: np.ndarray   # (Ks, 4)
    stage_gradient_u: np.ndarray   # (Ks, 2)
    stage_hessian_xx: np.ndarray   # (Ks, 4, 4)
    stage_hessian_uu: np.ndarray   # (Ks, 2, 2)
    terminal_gradient_x: np.ndarray  # (Kt, 4)
    terminal_hessian_xx: np.ndarray  # (Kt, 4, 4)


@dataclass(frozen=True, eq=False)
class TrajectoryDerivatives:
    """Derivadas apiladas en el tiempo; las de etapa cubren t = 0..T-1."""
    stage_gradient_x: np.ndarray   # (T, Ks, 4)
    stage_gradient_u: np.ndarray   # (T, Ks, 2)
    stage_hessian_xx: np.ndarray   # (T, Ks, 4, 4)
    stage_hessian_uu: np.ndarray   # (T, Ks, 2, 2)
    terminal_gradient_x: np.ndarray  # (Kt, 4)
    terminal_hessian_xx: np.ndarray  # (Kt, 4, 4)


def _obstacle_arrays(env):
    if not env.obstacles:
        return np.zeros((0, 2)), np.zeros(0), np.zeros(0)
    centers = np.array([obstacle.center for obstacle in env.obstacles])
    radii = np.array([obstacle.radius for obstacle in env.obstacles])
    margins = np.array([obstacle.activation_margin for obstacle in env.obstacles])
    return centers, radii, margins


def _obstacle_terms(positions, env):
    """
    Penetración en el margen de activación a = max(0, l - (d - r)) y la
    normal unitaria (p - O)/d para cada par (punto, obstáculo).
    """
    centers, radii, margins = _obstacle_arrays(env)
    offsets = positions[:, None, :] - centers[None, :, :]
    distances = np.linalg.norm(offsets, axis=-1)
    penetration = np.maximum(0.0, margins[None, :] - (distances - radii[None, :]))
    with np.errstate(invalid='ignore', divide='ignore'):
        normals = np.where(distances[..., None] > 0, offsets / distances[..., None], 0.0)
    return penetration, normals


def _state_terms(states, env):
    """Columnas G, XReg y Obs_i evaluadas en cada fila de states."""
    positions, velocities = states[:, :2], states[:, 2:]
    goal_term = np.sum((positions - env.goal) ** 2, axis=1) + np.sum(velocities ** 2, axis=1)
    state_reg = np.sum(states ** 2, axis=1)
    penetration, _ = _obstacle_terms(positions, env)
    return goal_term, state_reg, penetration ** 2


def _stage_matrix(states, controls, env):
    goal_term, state_reg, obstacle_terms = _state_terms(states, env)
    control_reg = np.sum(controls ** 2, axis=1)
    return np.column_stack([goal_term, state_reg, control_reg, obstacle_terms])


def _terminal_row(state, env):
    goal_term, state_reg, obstacle_terms = _state_terms(state[None, :], env)
    return np.concatenate([goal_term, state_reg, obstacle_terms[0]])


def stage_features(x, u, env):
    """φ_s(x, u) en el orden del layout de etapa."""
    x = np.asarray(getattr(x, 'as_vector', lambda: x)(), dtype=float)
    u = np.asarray(getattr(u, 'force', u), dtype=float)
    return _stage_matrix(x[None, :], u[None, :], env)[0]


def terminal_features(x, env):
    """φ_T(x): las mismas características sin UReg."""
    x = np.asarray(getattr(x, 'as_vector', lambda: x)(), dtype=float)
    return _terminal_row(x, env)


def _check_horizon(tau, env):
    if tau.horizon != env.horizon_T:
        raise ConfigurationError(
            f"La trayectoria tiene horizonte {tau.horizon} pero el entorno espera {env.horizon_T}"
        )


def stage_feature_matrix(tau, env):
    """Características de etapa por paso, forma (T, Ks)."""
    _check_horizon(tau, env)
    return _stage_matrix(tau.states[:-1], tau.controls, env)


def truncated_features(tau, d, env):
    """
    Características integradas desde t = d hasta T-1 más las terminales.
    """
    _check_horizon(tau, env)
    if int(d) != d or not 0 <= d <= tau.horizon:
        raise ConfigurationError(f"El índice de truncamiento d={d} está fuera de [0, {tau.horizon}]")
    stage = _stage_matrix(tau.states[d:-1], tau.controls[d:], env).sum(axis=0) * tau.dt
    terminal = _terminal_row(tau.states[-1], env)
    return FeatureVector(np.concatenate([stage, terminal]), names=env.feature_layout)


def integrate_features(tau, env):
    return truncated_features(tau, 0, env)


def subsample_grid(T, N):
    """Índices de truncamiento equidistantes d_k = round(k T / N), k = 0..N-1."""
    if N < 1 or N > T:
        raise ConfigurationError(f"Se requiere 1 <= N <= T, se recibió N={N}, T={T}")
    # redondeo al más cercano con empates hacia arriba
    return [int(np.floor(k * T / N + 0.5)) for k in range(N)]


def theta_coefficient(d, T):
    return (T - d + 1) / (T + 1)


def _derivative_blocks(states, controls, env):
    n_steps = states.shape[0]
    n_obs = env.n_obstacles
    positions, velocities = states[:, :2], states[:, 2:]
    penetration, normals = _obstacle_terms(positions, env)
    eye2 = np.eye(2)

    # gradientes de las características que dependen solo del estado
    grad_goal = np.concatenate([2.0 * (positions - env.goal), 2.0 * velocities], axis=1)
    grad_reg = 2.0 * states
    grad_obs = np.zeros((n_steps, n_obs, 4))
    grad_obs[:, :, :2] = -2.0 * penetration[..., None] * normals

    hess_quadratic = np.broadcast_to(2.0 * np.eye(4), (n_steps, 4, 4))
    hess_obs = np.zeros((n_steps, n_obs, 4, 4))
    active = (penetration > 0)[..., None, None]
    hess_obs[:, :, :2, :2] = np.where(active, 2.0 * normals[..., :, None] * normals[..., None, :], 0.0)

    grad_x = np.concatenate([grad_goal[:, None], grad_reg[:, None], grad_obs], axis=1)
    hess_xx = np.concatenate([hess_quadratic[:, None], hess_quadratic[:, None], hess_obs], axis=1)

    if controls is None:
        return grad_x, hess_xx

    zeros_x = np.zeros((n_steps, 1, 4))
    stage_grad_x = np.concatenate([grad_x[:, :2], zeros_x, grad_x[:, 2:]], axis=1)
    stage_hess_xx = np.concatenate([hess_xx[:, :2], np.zeros((n_steps, 1, 4, 4)), hess_xx[:, 2:]], axis=1)

    stage_grad_u = np.zeros((n_steps, 3 + n_obs, 2))
    stage_grad_u[:, 2] = 2.0 * controls
    stage_hess_uu = np.zeros((n_steps, 3 + n_obs, 2, 2))
    stage_hess_uu[:, 2] = 2.0 * eye2
    return stage_grad_x, stage_grad_u, stage_hess_xx, stage_hess_uu


def feature_derivatives(x, u, env):
    """
    Gradientes analíticos y hessianas de Gauss-Newton de cada característica
    en un punto (x, u). El gradiente de Obs_i es cero fuera del margen.
    """
    x = np.asarray(getattr(x, 'as_vector', lambda: x)(), dtype=float)
    u = np.asarray(getattr(u, 'force', u), dtype=float)
    grad_x, grad_u, hess_xx, hess_uu = _derivative_blocks(x[None, :], u[None, :], env)
    term_grad_x, term_hess_xx = _derivative_blocks(x[None, :], None, env)
    return FeatureDerivatives(
        stage_gradient_x=grad_x[0],
        stage_gradient_u=grad_u[0],
        stage_hessian_xx=hess_xx[0],
        stage_hessian_uu=hess_uu[0],
        terminal_gradient_x=term_grad_x[0],
        terminal_hessian_xx=term_hess_xx[0],
    )


def trajectory_derivatives(states, controls, env):
    """Versión apilada en el tiempo de feature_derivatives para el paso hacia atrás del iLQR."""
    states = as_array(states)
    controls = as_array(controls)
    grad_x, grad_u, hess_xx, hess_uu = _derivative_blocks(states[:-1], controls, env)
    term_grad_x, term_hess_xx = _derivative_blocks(states[-1:], None, env)
    return TrajectoryDerivatives(
        stage_gradient_x=grad_x,
        stage_gradient_u=grad_u,
        stage_hessian_xx=hess_xx,
        stage_hessian_uu=hess_uu,
        terminal_gradient_x=term_grad_x[0],
        terminal_hessian_xx=term_hess_xx[0],
    )

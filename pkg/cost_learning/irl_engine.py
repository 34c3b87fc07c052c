"""
Aprendizaje iterativo de pesos de costo con entropía máxima.

Cada iteración:
  1. construye el conjunto de datos con las últimas L trayectorias muestreadas,
     sus versiones truncadas y los pesos gamma_i = exp(-w^T (Phi_i - Phi*)),
  2. encuentra una dirección dw minimizando la log-verosimilitud negativa con
     red elástica (gradiente proximal con proyección a la caja factible),
  3. acepta un tamaño de paso alpha resolviendo OC(w + alpha dw) y comparando
     las funciones de mérito m1 (condiciones de Wolfe) y m2 (descenso simple);
     alpha se divide por 4 hasta 10 intentos.
"""
import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional

import numpy as np
from django.conf import settings
from scipy.special import logsumexp, softmax

from . import oc_solver
from .domain import (
    ConfigurationError,
    NumericalError,
    WeightVector,
    as_array,
    negative_log_likelihood,
    trajectory_cost,
)
from .featurizer import integrate_features, subsample_grid, theta_coefficient, truncated_features

logger = logging.getLogger(__name__)

GAMMA_MIN = 1e-30
GAMMA_MAX = 1e30


class TerminationReason(str, Enum):
    STEP_SEARCH_EXHAUSTED = 'step_search_exhausted'
    M2_BELOW_TOL = 'm2_below_tol'
    MAX_ITERATIONS = 'max_iterations'


@dataclass(frozen=True)
class IRLConfig:
    window_L: int = 1
    subsamples_N: int = 20
    lambda_l1: float = 1e-6
    beta_l2: float = 1e-2
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    alpha_shrink: float = 0.25
    max_step_trials: int = 10
    w_init_value: float = 0.01
    weight_upper_bound: Optional[float] = None
    max_outer_iterations: int = 100
    m2_convergence_tol: float = 1e-3
    inner_max_iterations: int = 500
    inner_step_tol: float = 1e-8
    box_epsilon: float = 1e-9
    step_acceptance: bool = True
    warm_start: bool = False

    def __post_init__(self):
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ConfigurationError("Se requiere 0 < wolfe_c1 < wolfe_c2 < 1")
        if not 0 < self.alpha_shrink < 1:
            raise ConfigurationError("alpha_shrink debe estar en (0, 1)")
        if self.window_L < 1:
            raise ConfigurationError("window_L debe ser >= 1")
        if self.subsamples_N < 1:
            raise ConfigurationError("subsamples_N debe ser >= 1")
        if self.max_step_trials < 1 or self.max_outer_iterations < 1 or self.inner_max_iterations < 1:
            raise ConfigurationError("Los límites de iteraciones deben ser >= 1")
        if self.lambda_l1 < 0 or self.beta_l2 < 0:
            raise ConfigurationError("lambda_l1 y beta_l2 deben ser no negativos")
        if not self.w_init_value > 0:
            raise ConfigurationError("w_init_value debe ser positivo")
        if self.weight_upper_bound is not None and not self.weight_upper_bound >= self.w_init_value:
            raise ConfigurationError("weight_upper_bound debe ser >= w_init_value")
        if not self.m2_convergence_tol > 0 or not self.inner_step_tol > 0 or not self.box_epsilon > 0:
            raise ConfigurationError("Las tolerancias deben ser positivas")

    @classmethod
    def from_settings(cls, **overrides):
        values = dict(settings.MOIRL['IRL'])
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass(frozen=True, eq=False)
class SampleFeatures:
    """Trayectoria muestreada con sus características completas y truncadas."""
    trajectory: object
    full: np.ndarray          # (K,)
    truncated: np.ndarray     # (D, K), fila 0 = completa


@dataclass(frozen=True, eq=False)
class IRLDataset:
    delta_phi: np.ndarray     # (M, D, K): Phi_{i,d} - Phi*_d
    gamma: np.ndarray         # (M,)
    theta: np.ndarray         # (D,)
    phi_star: np.ndarray      # (D, K)
    truncations: tuple = ()

    def __post_init__(self):
        if self.delta_phi.ndim != 3 or self.delta_phi.shape[0] == 0:
            raise ConfigurationError("El conjunto de datos está vacío")
        if self.gamma.shape != (self.delta_phi.shape[0],) or self.theta.shape != (self.delta_phi.shape[1],):
            raise ConfigurationError("Dimensiones inconsistentes en el conjunto de datos")
        if np.any(self.gamma <= 0):
            raise ConfigurationError("Todos los gamma deben ser positivos")
        if np.any(self.theta <= 0) or np.any(self.theta > 1):
            raise ConfigurationError("theta debe estar en (0, 1]")

    @property
    def feature_count(self):
        return self.delta_phi.shape[2]


class TrajectoryWindow:
    """Ventana móvil con las últimas L trayectorias muestreadas."""

    def __init__(self, env, window_L, grid):
        self.env = env
        self.grid = list(grid)
        self._samples = deque(maxlen=window_L)

    def featurize(self, trajectory):
        truncated = np.array([truncated_features(trajectory, d, self.env).values for d in self.grid])
        return SampleFeatures(trajectory=trajectory, full=truncated[0], truncated=truncated)

    def append(self, trajectory):
        sample = self.featurize(trajectory)
        self._samples.append(sample)
        return sample

    def __len__(self):
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)


@dataclass(frozen=True, eq=False)
class StepOutcome:
    accepted: bool
    weights: Optional[np.ndarray] = None
    solve_result: Optional[object] = None
    m1: float = np.inf
    m2: float = np.inf
    alpha: float = 0.0
    trials: int = 0
    branch: Optional[str] = None

    @property
    def trajectory(self):
        return None if self.solve_result is None else self.solve_result.trajectory


@dataclass
class IterationRecord:
    iteration: int
    weights: np.ndarray
    alpha: float
    m1: float
    m2: float
    traj_deviation: float
    cost_gap_learned_w: float
    cost_gap_true_w: Optional[float]
    wallclock_s: float
    demo_probability: float
    samples_used: int
    branch: Optional[str] = None


@dataclass
class IRLResult:
    final_weights: WeightVector
    iteration_log: List[IterationRecord]
    termination_reason: Optional[TerminationReason]
    samples: List[object] = field(default_factory=list)
    final_trajectory: Optional[object] = None

    @property
    def final_m2(self):
        return self.iteration_log[-1].m2 if self.iteration_log else np.inf

    @property
    def outer_iterations(self):
        return self.iteration_log[-1].iteration if self.iteration_log else 0


def compute_gamma(w, phi_i, phi_star):
    """gamma_i = exp(-w^T (Phi_i - Phi*)), acotado a [1e-30, 1e30]."""
    w, phi_i, phi_star = as_array(w), as_array(phi_i), as_array(phi_star)
    if not (w.shape == phi_i.shape == phi_star.shape):
        raise ConfigurationError("Dimensiones incompatibles al calcular gamma")
    exponent = -float(w @ (phi_i - phi_star))
    return float(np.exp(np.clip(exponent, np.log(GAMMA_MIN), np.log(GAMMA_MAX))))


def build_dataset(window, star_truncated, w, grid, T):
    """
    Construye el conjunto de datos a partir de la ventana. gamma_i usa las
    características completas y se comparte entre todos los truncamientos.
    """
    star_truncated = np.asarray(star_truncated, dtype=float)
    samples = list(window)
    delta_phi = np.array([sample.truncated - star_truncated for sample in samples])
    gamma = np.array([compute_gamma(w, sample.full, star_truncated[0]) for sample in samples])
    theta = np.array([theta_coefficient(d, T) for d in grid])
    return IRLDataset(
        delta_phi=delta_phi,
        gamma=gamma,
        theta=theta,
        phi_star=star_truncated,
        truncations=tuple(grid),
    )


def _check_step_vector(dw, dataset):
    dw = np.asarray(dw, dtype=float)
    if dw.shape != (dataset.feature_count,):
        raise ConfigurationError(
            f"dw debe tener {dataset.feature_count} componentes, se recibieron {dw.shape}"
        )
    return dw


def _augmented_exponents(dw, dataset):
    """Exponentes [0, log gamma_i - dw^T dPhi_{i,d}] por truncamiento, forma (D, 1 + M)."""
    exponents = np.log(dataset.gamma)[:, None] - dataset.delta_phi @ dw
    return np.column_stack([np.zeros(exponents.shape[1]), exponents.T])


def smooth_objective(dw, dataset, beta_l2):
    dw = _check_step_vector(dw, dataset)
    log_terms = logsumexp(_augmented_exponents(dw, dataset), axis=1)
    return float(dataset.theta @ log_terms + 0.5 * beta_l2 * dw @ dw)


def nll_objective(dw, dataset, lambda_l1, beta_l2):
    """
    sum_d theta_d log(1 + sum_i gamma_i exp(-dw^T dPhi_{i,d}))
        + lambda ||dw||_1 + beta/2 ||dw||^2
    """
    dw = _check_step_vector(dw, dataset)
    return smooth_objective(dw, dataset, beta_l2) + lambda_l1 * float(np.abs(dw).sum())


def nll_gradient(dw, dataset, lambda_l1, beta_l2):
    """Gradiente de la parte suave; el término L1 lo maneja el operador proximal."""
    dw = _check_step_vector(dw, dataset)
    weights = softmax(_augmented_exponents(dw, dataset), axis=1)[:, 1:]   # (D, M)
    data_term = -np.einsum('d,dm,mdk->k', dataset.theta, weights, dataset.delta_phi)
    return data_term + beta_l2 * dw


def step_box(w, cfg):
    """Caja factible para dw: dw >= -w + eps y, con cotas, dw <= ub - w."""
    w = as_array(w)
    lower = -w + cfg.box_epsilon
    if cfg.weight_upper_bound is None:
        upper = np.full_like(w, np.inf)
    else:
        upper = cfg.weight_upper_bound - w
    return lower, np.maximum(upper, lower)


def _prox(v, threshold, lower, upper):
    # umbral suave seguido de recorte: prox exacto de lambda|x| + I[lower, upper]
    shrunk = np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)
    return np.clip(shrunk, lower, upper)


def solve_step_direction(w, dataset, cfg):
    """
    Gradiente proximal con retroceso sobre la constante de Lipschitz.
    Cada iterado queda dentro de la caja factible.
    """
    lam, beta = cfg.lambda_l1, cfg.beta_l2
    lower, upper = step_box(w, cfg)
    dw = np.clip(np.zeros(dataset.feature_count), lower, upper)

    def total(x):
        value = nll_objective(x, dataset, lam, beta)
        if not np.isfinite(value):
            raise NumericalError("Objetivo no finito al buscar la dirección de paso")
        return value

    start_value = total(np.zeros(dataset.feature_count))
    f_value = smooth_objective(dw, dataset, beta)
    lipschitz = 1.0

    for iteration in range(cfg.inner_max_iterations):
        grad = nll_gradient(dw, dataset, lam, beta)
        while True:
            candidate = _prox(dw - grad / lipschitz, lam / lipschitz, lower, upper)
            step = candidate - dw
            candidate_value = smooth_objective(candidate, dataset, beta)
            if not np.isfinite(candidate_value):
                raise NumericalError("Objetivo no finito al buscar la dirección de paso")
            bound = f_value + grad @ step + 0.5 * lipschitz * step @ step
            if candidate_value <= bound + 1e-15 * abs(bound) or lipschitz > 1e20:
                break
            lipschitz *= 2.0
        dw, f_value = candidate, candidate_value
        if np.linalg.norm(step) < cfg.inner_step_tol:
            break
        lipschitz = max(lipschitz / 2.0, 1e-12)

    if total(dw) > start_value:
        # el retroceso no garantizó descenso por redondeo; dw = 0 es factible
        dw = np.clip(np.zeros(dataset.feature_count), lower, upper)
    logger.debug(f"Dirección de paso tras {iteration + 1} iteraciones internas: |dw|={np.linalg.norm(dw):.3e}")
    return dw


def merit_m1(w, phi_star, phi_tilde):
    """1/2 (w^T Phi* - w^T Phi~)^2"""
    gap = trajectory_cost(w, phi_star) - trajectory_cost(w, phi_tilde)
    return 0.5 * gap ** 2


def merit_m2(phi_star, phi_tilde):
    """||Phi* - Phi~||_2"""
    phi_star, phi_tilde = as_array(phi_star), as_array(phi_tilde)
    if phi_star.shape != phi_tilde.shape:
        raise ConfigurationError("Dimensiones incompatibles en m2")
    return float(np.linalg.norm(phi_star - phi_tilde))


def _m1_directional_derivative(w, phi_star, phi_tilde, dw):
    # Phi~ se mantiene fijo (aproximación de envolvente)
    gap = as_array(phi_star) - as_array(phi_tilde)
    return float((as_array(w) @ gap) * (gap @ dw))


def accept_step(w, dw, phi_star, prev_m1, prev_m2, env, oc_cfg, cfg,
                phi_tilde_prev, warm_start=None, x0=None, oracle=oc_solver.solve):
    """
    Búsqueda del tamaño de paso. Empieza en alpha = 1 y en cada intento
    resuelve OC(w + alpha dw) (desde controles nulos salvo warm_start); acepta
    si m1 cumple Armijo y curvatura sin alejar a Phi~ de Phi* (m2 <= prev_m2),
    o si m2 baja estrictamente respecto del valor aceptado anterior.

    Armijo parte de prev_m1; g0 y la curvatura se evalúan con Phi~ fijo en
    la trayectoria aceptada anterior.
    """
    w, dw = as_array(w), np.asarray(dw, dtype=float)
    phi_star = as_array(phi_star)
    phi_tilde_prev = as_array(phi_tilde_prev)
    g0 = _m1_directional_derivative(w, phi_star, phi_tilde_prev, dw)

    alpha = 1.0
    for trial in range(1, cfg.max_step_trials + 1):
        candidate_w = w + alpha * dw
        if cfg.weight_upper_bound is not None:
            candidate_w = np.minimum(candidate_w, cfg.weight_upper_bound)
        try:
            result = oracle(env, candidate_w, x0=x0, warm_start=warm_start, cfg=oc_cfg)
            phi_tilde = as_array(integrate_features(result.trajectory, env))
        except NumericalError as error:
            logger.warning(f"OC falló en el intento {trial} (alpha={alpha:g}): {error}")
            alpha *= cfg.alpha_shrink
            continue

        m1 = merit_m1(candidate_w, phi_star, phi_tilde)
        m2 = merit_m2(phi_star, phi_tilde)

        if not cfg.step_acceptance:
            return StepOutcome(True, candidate_w, result, m1, m2, alpha, trial, 'forced')

        if g0 < 0 and m2 <= prev_m2:
            g_alpha = _m1_directional_derivative(candidate_w, phi_star, phi_tilde_prev, dw)
            armijo = m1 <= prev_m1 + cfg.wolfe_c1 * alpha * g0
            curvature = abs(g_alpha) <= cfg.wolfe_c2 * abs(g0)
            if armijo and curvature:
                return StepOutcome(True, candidate_w, result, m1, m2, alpha, trial, 'wolfe')
        if m2 < prev_m2:
            return StepOutcome(True, candidate_w, result, m1, m2, alpha, trial, 'merit')

        logger.debug(f"Intento {trial} rechazado: alpha={alpha:g}, m1={m1:.4g}, m2={m2:.4g}")
        alpha *= cfg.alpha_shrink

    return StepOutcome(False, trials=cfg.max_step_trials)


def _trajectory_deviation(trajectory, tau_star):
    return float(np.linalg.norm(trajectory.states - tau_star.states))


class MOIRL:
    """
    Ejecuta el ciclo completo de aprendizaje para una demostración.
    """

    def __init__(self, env, cfg=None, oc_cfg=None, true_weights=None, oracle=oc_solver.solve):
        self.env = env
        self.cfg = cfg or IRLConfig()
        self.oc_cfg = oc_cfg or oc_solver.SolverConfig()
        self.true_weights = None if true_weights is None else as_array(true_weights)
        self.oracle = oracle
        if self.cfg.subsamples_N > env.horizon_T:
            raise ConfigurationError(
                f"subsamples_N={self.cfg.subsamples_N} excede el horizonte T={env.horizon_T}"
            )
        self.grid = subsample_grid(env.horizon_T, self.cfg.subsamples_N)

    def _record(self, iteration, w, trajectory, window, m1, m2, alpha, branch, started):
        phi_tilde = as_array(integrate_features(trajectory, self.env))
        true_gap = None
        if self.true_weights is not None:
            true_gap = abs(trajectory_cost(self.true_weights, self.phi_star) - trajectory_cost(self.true_weights, phi_tilde))
        others = [sample.full for sample in window]
        return IterationRecord(
            iteration=iteration,
            weights=np.array(w),
            alpha=alpha,
            m1=m1,
            m2=m2,
            traj_deviation=_trajectory_deviation(trajectory, self.tau_star),
            cost_gap_learned_w=abs(trajectory_cost(w, self.phi_star) - trajectory_cost(w, phi_tilde)),
            cost_gap_true_w=true_gap,
            wallclock_s=time.perf_counter() - started,
            demo_probability=float(np.exp(-negative_log_likelihood(w, self.phi_star, others))),
            samples_used=len(window),
            branch=branch,
        )

    def _check_feasible(self, w):
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise NumericalError(f"Pesos fuera del conjunto factible: {w.tolist()}")
        bound = self.cfg.weight_upper_bound
        if bound is not None and np.any(w > bound):
            raise NumericalError(f"Pesos por encima de la cota {bound}: {w.tolist()}")

    def run(self, tau_star):
        env, cfg = self.env, self.cfg
        started = time.perf_counter()
        self.tau_star = tau_star
        window = TrajectoryWindow(env, cfg.window_L, self.grid)
        star_truncated = window.featurize(tau_star).truncated
        self.phi_star = star_truncated[0]
        x0 = tau_star.states[0]

        w = np.full(env.feature_count, cfg.w_init_value)
        try:
            initial = self.oracle(env, w, x0=x0, cfg=self.oc_cfg)
        except NumericalError as error:
            raise NumericalError(f"OC falló en la inicialización: {error}") from error

        trajectory = initial.trajectory
        window.append(trajectory)
        samples = [trajectory]
        phi_tilde = window.featurize(trajectory).full
        m1 = merit_m1(w, self.phi_star, phi_tilde)
        m2 = merit_m2(self.phi_star, phi_tilde)
        log = [self._record(0, w, trajectory, window, m1, m2, 0.0, None, started)]
        logger.info(f"Inicio: m1={m1:.6g}, m2={m2:.6g}")

        def partial(reason):
            return IRLResult(
                final_weights=WeightVector(w, names=env.feature_layout),
                iteration_log=log,
                termination_reason=reason,
                samples=samples,
                final_trajectory=trajectory,
            )

        reason = TerminationReason.MAX_ITERATIONS
        try:
            for iteration in range(1, cfg.max_outer_iterations + 1):
                if m2 < cfg.m2_convergence_tol:
                    reason = TerminationReason.M2_BELOW_TOL
                    break

                dataset = build_dataset(window, star_truncated, w, self.grid, env.horizon_T)
                dw = solve_step_direction(w, dataset, cfg)
                outcome = accept_step(
                    w, dw, self.phi_star, m1, m2, env, self.oc_cfg, cfg,
                    phi_tilde_prev=phi_tilde, warm_start=trajectory if cfg.warm_start else None,
                    x0=x0, oracle=self.oracle,
                )
                if not outcome.accepted:
                    reason = TerminationReason.STEP_SEARCH_EXHAUSTED
                    logger.info(f"Iteración {iteration}: no se encontró un paso aceptable")
                    break

                w = outcome.weights
                self._check_feasible(w)
                trajectory = outcome.trajectory
                phi_tilde = window.append(trajectory).full
                samples.append(trajectory)
                m1, m2 = outcome.m1, outcome.m2
                log.append(self._record(iteration, w, trajectory, window, m1, m2, outcome.alpha, outcome.branch, started))
                logger.info(
                    f"Iteración {iteration}: alpha={outcome.alpha:g} ({outcome.branch}), m1={m1:.6g}, m2={m2:.6g}"
                )
            else:
                if m2 < cfg.m2_convergence_tol:
                    reason = TerminationReason.M2_BELOW_TOL
        except NumericalError as error:
            error.partial_result = partial(None)
            raise

        logger.info(f"Aprendizaje terminado ({reason.value}) tras {log[-1].iteration} iteraciones")
        return partial(reason)


def run(tau_star, env, cfg=None, oc_cfg=None, true_weights=None, oracle=oc_solver.solve):
    return MOIRL(env, cfg, oc_cfg, true_weights=true_weights, oracle=oracle).run(tau_star)


def disable_features(cfg, step_acceptance=True, regularization=True, subsampling=True):
    """Variante de la configuración para los estudios de ablación."""
    changes = {}
    if not step_acceptance:
        changes['step_acceptance'] = False
    if not regularization:
        changes.update(lambda_l1=0.0, beta_l2=0.0)
    if not subsampling:
        changes['subsamples_N'] = 1
    return replace(cfg, **changes)

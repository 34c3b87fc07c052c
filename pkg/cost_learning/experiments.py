"""
Entornos de masa puntual (pm1, pm2, pm3), generación de demostraciones,
evaluación de generalización desde otros puntos de inicio y ablaciones.
"""
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings
from joblib import Parallel, delayed

from . import irl_engine, oc_solver
from .domain import (
    ConfigurationError,
    CostLearningError,
    DemonstrationError,
    EnvironmentSpec,
    State,
    WeightVector,
    as_array,
    trajectory_cost,
)
from .featurizer import integrate_features
from .persistence import load_environment

logger = logging.getLogger(__name__)

PRESET_NAMES = ('pm1', 'pm2', 'pm3')


@dataclass(frozen=True, eq=False)
class ExperimentPreset:
    name: str
    environment: EnvironmentSpec
    ground_truth_weights: WeightVector
    alternative_starts: Tuple[State, ...]
    goal_tolerance: float = 0.05
    version: int = 1

    def __post_init__(self):
        weights = dict(zip(self.environment.feature_layout, self.ground_truth_weights.values))
        required = [name for name in weights if name.endswith('_G') or '_Obs_' in name]
        not_positive = [name for name in required if not weights[name] > 0]
        if not_positive:
            raise ConfigurationError(f"Los pesos verdaderos deben ser positivos en: {', '.join(not_positive)}")
        for index, start in enumerate(self.alternative_starts):
            if inside_obstacle(start.position, self.environment):
                raise ConfigurationError(f"alternative_starts[{index}] está dentro de un obstáculo")


@dataclass(frozen=True)
class StartOutcome:
    label: str
    start_position: Tuple[float, float]
    solved: bool
    reached_goal: bool
    collided: bool
    cost_under_w_star: Optional[float]
    cost_under_learned_w: Optional[float]
    error: Optional[str] = None

    @property
    def success(self):
        return self.solved and self.reached_goal and not self.collided


@dataclass
class EvaluationReport:
    preset: str
    outcomes: List[StartOutcome]
    demo_cost_under_w_star: float
    cost_ratio: Optional[float]
    wallclock_s: float

    @property
    def success_count(self):
        return sum(1 for outcome in self.outcomes if outcome.success)

    @property
    def alternative_success_count(self):
        return sum(1 for outcome in self.outcomes[1:] if outcome.success)

    def as_dict(self):
        return {
            'preset': self.preset,
            'cost_ratio': self.cost_ratio,
            'demo_cost_under_w_star': self.demo_cost_under_w_star,
            'success_count': self.success_count,
            'alternative_success_count': self.alternative_success_count,
            'wallclock_s': self.wallclock_s,
            'outcomes': [
                {
                    'label': outcome.label,
                    'start_position': list(outcome.start_position),
                    'solved': outcome.solved,
                    'reached_goal': outcome.reached_goal,
                    'collided': outcome.collided,
                    'cost_under_w_star': outcome.cost_under_w_star,
                    'cost_under_learned_w': outcome.cost_under_learned_w,
                    'error': outcome.error,
                }
                for outcome in self.outcomes
            ],
        }


@dataclass(frozen=True)
class AblationVariant:
    label: str
    step_acceptance: bool
    regularization: bool
    subsampling: bool


ABLATION_VARIANTS = (
    AblationVariant('a', step_acceptance=False, regularization=False, subsampling=False),
    AblationVariant('b', step_acceptance=False, regularization=False, subsampling=True),
    AblationVariant('c', step_acceptance=True, regularization=False, subsampling=True),
    AblationVariant('d', step_acceptance=False, regularization=True, subsampling=True),
    AblationVariant('e', step_acceptance=True, regularization=True, subsampling=True),
)


@dataclass
class AblationOutcome:
    variant: AblationVariant
    result: irl_engine.IRLResult
    report: EvaluationReport

    @property
    def label(self):
        return self.variant.label

    @property
    def final_m2(self):
        return self.result.final_m2


def inside_obstacle(position, env):
    position = np.asarray(position, dtype=float)
    return any(np.linalg.norm(position - obstacle.center) < obstacle.radius for obstacle in env.obstacles)


def segment_intersects_obstacle(start, goal, obstacle):
    """True si el segmento start-goal toca el disco del obstáculo."""
    start, goal = np.asarray(start, dtype=float), np.asarray(goal, dtype=float)
    direction = goal - start
    length_sq = direction @ direction
    s = 0.0 if length_sq == 0 else np.clip((obstacle.center - start) @ direction / length_sq, 0.0, 1.0)
    closest = start + s * direction
    return bool(np.linalg.norm(obstacle.center - closest) <= obstacle.radius)


def collision_check(tau, env):
    """True si algún estado queda estrictamente dentro de un disco."""
    positions = tau.positions
    for obstacle in env.obstacles:
        if np.any(np.linalg.norm(positions - obstacle.center, axis=1) < obstacle.radius):
            return True
    return False


def reached_goal(tau, env, tolerance):
    return bool(np.linalg.norm(tau.positions[-1] - env.goal) <= tolerance)


def preset_from_file(path, ground_truth_weights=None):
    env, weights, data = load_environment(path)
    if ground_truth_weights is not None:
        weights = ground_truth_weights
    if weights is None:
        raise ConfigurationError(f"El preset {path} no define pesos verdaderos")
    starts = tuple(State(item['position'], item['velocity']) for item in data['alternative_starts'])
    return ExperimentPreset(
        name=env.name or Path(path).stem,
        environment=env,
        ground_truth_weights=weights,
        alternative_starts=starts,
        goal_tolerance=data['goal_tolerance'],
        version=data['version'],
    )


def make_preset(name):
    if name not in PRESET_NAMES:
        raise ConfigurationError(f"Preset desconocido: {name}. Opciones: {', '.join(PRESET_NAMES)}")
    return preset_from_file(Path(settings.MOIRL['PRESETS_DIR']) / f"{name}.json")


def generate_demonstration(preset, oc_cfg=None):
    """
    Demostración: OC bajo los pesos verdaderos. Debe llegar a la meta sin
    colisiones; si no, el preset necesita ajustarse.
    """
    env = preset.environment
    result = oc_solver.solve(env, preset.ground_truth_weights, cfg=oc_cfg)
    tau = result.trajectory
    distance = float(np.linalg.norm(tau.positions[-1] - env.goal))
    if distance > preset.goal_tolerance:
        raise DemonstrationError(
            f"La demostración de {preset.name} termina a {distance:.4f} m de la meta "
            f"(tolerancia {preset.goal_tolerance} m)"
        )
    if collision_check(tau, env):
        raise DemonstrationError(f"La demostración de {preset.name} atraviesa un obstáculo")
    logger.info(f"Demostración de {preset.name}: costo={result.final_cost:.6g}, iteraciones={result.iterations_used}")
    return tau


def _evaluate_start(label, start, w_learned, w_star, env, goal_tolerance, oc_cfg):
    try:
        result = oc_solver.solve(env, w_learned, x0=start, cfg=oc_cfg)
    except CostLearningError as error:
        return StartOutcome(label, tuple(start.position.tolist()), False, False, False, None, None, str(error))
    tau = result.trajectory
    phi = integrate_features(tau, env)
    return StartOutcome(
        label=label,
        start_position=tuple(start.position.tolist()),
        solved=True,
        reached_goal=reached_goal(tau, env, goal_tolerance),
        collided=collision_check(tau, env),
        cost_under_w_star=trajectory_cost(w_star, phi),
        cost_under_learned_w=trajectory_cost(w_learned, phi),
    )


def evaluate_generalization(w_learned, preset, oc_cfg=None, tau_star=None, n_jobs=1):
    """
    Resuelve OC con los pesos aprendidos desde el inicio original y desde cada
    inicio alternativo. Las fallas de OC se registran por inicio.
    """
    started = time.perf_counter()
    env = preset.environment
    w_star = as_array(preset.ground_truth_weights)
    w_learned = as_array(w_learned)
    if tau_star is None:
        tau_star = generate_demonstration(preset, oc_cfg)
    demo_cost = trajectory_cost(w_star, integrate_features(tau_star, env))

    starts = [('original', env.start)] + [
        (f"alt_{index + 1}", start) for index, start in enumerate(preset.alternative_starts)
    ]
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate_start)(label, start, w_learned, w_star, env, preset.goal_tolerance, oc_cfg)
        for label, start in starts
    )

    original = outcomes[0]
    ratio = None
    if original.solved and demo_cost > 0:
        ratio = original.cost_under_w_star / demo_cost
    report = EvaluationReport(
        preset=preset.name,
        outcomes=list(outcomes),
        demo_cost_under_w_star=demo_cost,
        cost_ratio=ratio,
        wallclock_s=time.perf_counter() - started,
    )
    logger.info(f"Evaluación de {preset.name}: razón={ratio}, éxitos={report.success_count}/{len(outcomes)}")
    return report


def run_ablation(preset, cfg_base=None, oc_cfg=None, variants=ABLATION_VARIANTS, tau_star=None, n_jobs=1):
    """
    Ejecuta el aprendizaje una vez por variante (a-e) y evalúa cada resultado.
    """
    if preset.environment.n_obstacles < 4:
        raise ConfigurationError("La ablación requiere un preset con al menos 4 obstáculos")
    cfg_base = cfg_base or irl_engine.IRLConfig()
    if tau_star is None:
        tau_star = generate_demonstration(preset, oc_cfg)

    outcomes = []
    for variant in variants:
        cfg = irl_engine.disable_features(
            cfg_base,
            step_acceptance=variant.step_acceptance,
            regularization=variant.regularization,
            subsampling=variant.subsampling,
        )
        logger.info(f"Ablación {variant.label}: {variant}")
        result = irl_engine.run(
            tau_star, preset.environment, cfg, oc_cfg, true_weights=preset.ground_truth_weights
        )
        report = evaluate_generalization(result.final_weights, preset, oc_cfg, tau_star=tau_star, n_jobs=n_jobs)
        outcomes.append(AblationOutcome(variant, result, report))
    return outcomes


def rank_ablation(outcomes):
    """Ordena por M2 final; los empates conservan el orden de etiqueta."""
    return sorted(outcomes, key=lambda outcome: outcome.final_m2)

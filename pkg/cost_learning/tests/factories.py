from pathlib import Path

import numpy as np
from django.conf import settings

from cost_learning.domain import EnvironmentSpec, ObstacleSpec, State, Trajectory, WeightVector


def quadratic_env(horizon_T=30, dt=0.05, goal=(1.0, 0.0)):
    """Entorno sin obstáculos: el costo es cuadrático y el iLQR coincide con LQR."""
    return EnvironmentSpec(goal=goal, start=State.at_rest((0.0, 0.0)), horizon_T=horizon_T, dt=dt, name='quadratic')


def obstacle_env(horizon_T=30, dt=0.05):
    return EnvironmentSpec(
        goal=(1.0, 0.0),
        start=State.at_rest((0.0, 0.0)),
        obstacles=(ObstacleSpec((0.5, 0.06), 0.15, 0.1), ObstacleSpec((0.2, 0.6), 0.2, 0.1)),
        horizon_T=horizon_T,
        dt=dt,
        name='two-obstacles',
    )


def weights(env, **values):
    mapping = {name: 0.0 for name in env.feature_layout}
    mapping.update(values)
    return WeightVector.from_mapping(env.feature_layout, mapping)


def random_trajectory(env, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    states = rng.normal(scale=scale, size=(env.horizon_T + 1, 4))
    controls = rng.normal(scale=scale, size=(env.horizon_T, 2))
    return Trajectory(states, controls, env.dt)


def preset_path(name):
    return Path(settings.MOIRL['PRESETS_DIR']) / f"{name}.json"

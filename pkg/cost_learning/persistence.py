"""
Lectura y escritura de archivos: entornos y pesos en JSON, trayectorias y
métricas en CSV. Todas las escrituras son atómicas (temporal + os.replace).
"""
import io
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from .domain import ConfigurationError, Trajectory
from .serializers import EnvironmentFileSerializer, WeightsFileSerializer, validate_or_raise

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
TRAJECTORY_COLUMNS = ['t', 'time_s', 'px', 'py', 'vx', 'vy', 'ux', 'uy']
SAMPLE_COLUMNS = ['sample', 't', 'px', 'py', 'vx', 'vy', 'ux', 'uy']
METRICS_COLUMNS = [
    'iteration',
    'alpha',
    'M1',
    'M2',
    'traj_deviation',
    'cost_gap_learned_w',
    'cost_gap_true_w',
    'wallclock_s',
]


def atomic_write_text(path, content):
    path = Path(path)
    handle = tempfile.NamedTemporaryFile(
        'w', dir=path.parent, prefix=f".{path.name}.", suffix='.tmp', delete=False, encoding='utf-8', newline=''
    )
    try:
        with handle:
            handle.write(content)
        os.replace(handle.name, path)
        logger.debug(f"Archivo escrito: {path}")
    except BaseException:
        if os.path.exists(handle.name):
            os.unlink(handle.name)
        raise
    return path


def write_json(path, payload):
    return atomic_write_text(path, json.dumps(payload, indent=2, ensure_ascii=False) + '\n')


def read_json(path):
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Error al parsear {path}: {str(e)}")


def write_frame(path, frame):
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return atomic_write_text(path, buffer.getvalue())


def load_environment(path):
    """Devuelve (EnvironmentSpec, pesos verdaderos o None, datos validados)."""
    serializer = validate_or_raise(EnvironmentFileSerializer, read_json(path))
    env = serializer.build_environment()
    return env, serializer.build_weights(env), serializer.validated_data


def load_weights(path, env):
    payload = read_json(path)
    if isinstance(payload, dict) and 'weights' not in payload:
        payload = {'weights': payload}
    return validate_or_raise(WeightsFileSerializer, payload).build_weights(env)


def write_weights(path, weights, extra=None):
    payload = {'feature_layout': list(weights.names or []), 'weights': weights.as_dict()}
    payload.update(extra or {})
    return write_json(path, payload)


def trajectory_frame(trajectory):
    T = trajectory.horizon
    controls = np.vstack([trajectory.controls, np.full((1, 2), np.nan)])
    frame = pd.DataFrame(
        np.column_stack([trajectory.states, controls]),
        columns=['px', 'py', 'vx', 'vy', 'ux', 'uy'],
    )
    frame.insert(0, 'time_s', np.arange(T + 1) * trajectory.dt)
    frame.insert(0, 't', np.arange(T + 1))
    return frame[TRAJECTORY_COLUMNS]


def write_trajectory(path, trajectory):
    return write_frame(path, trajectory_frame(trajectory))


def read_trajectory(path):
    try:
        frame = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ConfigurationError(f"Error al parsear la trayectoria {path}: {str(e)}")
    missing = [column for column in TRAJECTORY_COLUMNS if column not in frame.columns]
    if missing:
        raise ConfigurationError(f"Faltan columnas en {path}: {', '.join(missing)}")
    if len(frame) < 2:
        raise ConfigurationError(f"La trayectoria {path} necesita al menos dos filas")
    states = frame[['px', 'py', 'vx', 'vy']].to_numpy(dtype=float)
    controls = frame[['ux', 'uy']].to_numpy(dtype=float)[:-1]
    times = frame['time_s'].to_numpy(dtype=float)
    dt = float(times[1] - times[0])
    return Trajectory(states, controls, dt)


def write_samples(path, trajectories):
    frames = []
    for index, trajectory in enumerate(trajectories):
        frame = trajectory_frame(trajectory).drop(columns=['time_s'])
        frame.insert(0, 'sample', index)
        frames.append(frame)
    return write_frame(path, pd.concat(frames, ignore_index=True)[SAMPLE_COLUMNS])


def metrics_frame(iteration_log):
    rows = [
        {
            'iteration': record.iteration,
            'alpha': record.alpha,
            'M1': record.m1,
            'M2': record.m2,
            'traj_deviation': record.traj_deviation,
            'cost_gap_learned_w': record.cost_gap_learned_w,
            'cost_gap_true_w': record.cost_gap_true_w,
            'wallclock_s': record.wallclock_s,
        }
        for record in iteration_log
    ]
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def write_metrics(path, iteration_log):
    return write_frame(path, metrics_frame(iteration_log))

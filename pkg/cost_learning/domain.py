"""
Tipos de dominio compartidos y primitivas de costo/probabilidad.

El costo de una trayectoria es lineal en las características integradas:
C(tau, w) = w^T Phi(tau). La probabilidad de la demostración se evalúa
contra un conjunto finito de trayectorias (función de partición aproximada).
"""
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp


class CostLearningError(Exception):
    """Error base del paquete."""


class ConfigurationError(CostLearningError, ValueError):
    """Entrada inválida: dimensiones, rangos o archivos mal formados."""


class NumericalError(CostLearningError, ArithmeticError):
    """Se encontró un valor no finito durante un cálculo."""


class DemonstrationError(CostLearningError):
    """La demostración generada no cumple los predicados del preset."""


def _frozen_array(values, name, shape=None):
    array = np.array(values, dtype=float)
    if shape is not None and array.shape != shape:
        raise ConfigurationError(f"{name} debe tener forma {shape}, se recibió {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ConfigurationError(f"{name} contiene valores no finitos")
    array.flags.writeable = False
    return array


def as_array(values):
    """Acepta FeatureVector, WeightVector o cualquier secuencia numérica."""
    return np.asarray(getattr(values, 'values', values), dtype=float)


@dataclass(frozen=True, eq=False)
class State:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'position', _frozen_array(self.position, 'position', (2,)))
        object.__setattr__(self, 'velocity', _frozen_array(self.velocity, 'velocity', (2,)))

    def as_vector(self):
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(position=x[:2], velocity=x[2:4])

    @classmethod
    def at_rest(cls, position):
        return cls(position=position, velocity=(0.0, 0.0))


@dataclass(frozen=True, eq=False)
class Control:
    force: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'force', _frozen_array(self.force, 'force', (2,)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Trayectoria de horizonte fijo.

    states tiene forma (T+1, 4) con filas [px, py, vx, vy] y controls tiene
    forma (T, 2).
    """
    states: np.ndarray
    controls: np.ndarray
    dt: float

    def __post_init__(self):
        states = _frozen_array(self.states, 'states')
        controls = _frozen_array(self.controls, 'controls')
        if states.ndim != 2 or states.shape[1] != 4:
            raise ConfigurationError(f"states debe tener forma (T+1, 4), se recibió {states.shape}")
        if controls.ndim != 2 or controls.shape[1] != 2:
            raise ConfigurationError(f"controls debe tener forma (T, 2), se recibió {controls.shape}")
        if states.shape[0] != controls.shape[0] + 1:
            raise ConfigurationError(
                f"Se esperaban {controls.shape[0] + 1} estados para {controls.shape[0]} controles, "
                f"se recibieron {states.shape[0]}"
            )
        if not self.dt > 0:
            raise ConfigurationError(f"dt debe ser positivo, se recibió {self.dt}")
        object.__setattr__(self, 'states', states)
        object.__setattr__(self, 'controls', controls)
        object.__setattr__(self, 'dt', float(self.dt))

    @property
    def horizon(self):
        return self.controls.shape[0]

    @property
    def positions(self):
        return self.states[:, :2]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        values = _frozen_array(self.values, 'values')
        if values.ndim != 1:
            raise ConfigurationError("FeatureVector debe ser unidimensional")
        if np.any(values < 0):
            raise ConfigurationError("Todas las características deben ser no negativas")
        if self.names is not None and len(self.names) != values.size:
            raise ConfigurationError(f"Se esperaban {values.size} nombres, se recibieron {len(self.names)}")
        object.__setattr__(self, 'values', values)
        if self.names is not None:
            object.__setattr__(self, 'names', tuple(self.names))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class WeightVector:
    values: np.ndarray
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        values = _frozen_array(self.values, 'values')
        if values.ndim != 1:
            raise ConfigurationError("WeightVector debe ser unidimensional")
        if np.any(values < 0):
            raise ConfigurationError("Los pesos deben ser no negativos (w >= 0)")
        if self.names is not None and len(self.names) != values.size:
            raise ConfigurationError(f"Se esperaban {values.size} nombres, se recibieron {len(self.names)}")
        object.__setattr__(self, 'values', values)
        if self.names is not None:
            object.__setattr__(self, 'names', tuple(self.names))

    def __len__(self):
        return self.values.size

    def as_dict(self):
        names = self.names or tuple(f"w_{k}" for k in range(self.values.size))
        return {name: float(value) for name, value in zip(names, self.values)}

    @classmethod
    def from_mapping(cls, layout: Sequence[str], mapping: Mapping[str, float]):
        missing = [name for name in layout if name not in mapping]
        if missing:
            raise ConfigurationError(f"Faltan pesos para: {', '.join(missing)}")
        unknown = sorted(set(mapping) - set(layout))
        if unknown:
            raise ConfigurationError(f"Pesos desconocidos: {', '.join(unknown)}")
        return cls(values=[mapping[name] for name in layout], names=tuple(layout))


@dataclass(frozen=True, eq=False)
class ObstacleSpec:
    center: np.ndarray
    radius: float
    activation_margin: float

    def __post_init__(self):
        object.__setattr__(self, 'center', _frozen_array(self.center, 'center', (2,)))
        if not self.radius > 0:
            raise ConfigurationError(f"radius debe ser positivo, se recibió {self.radius}")
        if not self.activation_margin > 0:
            raise ConfigurationError(f"margin debe ser positivo, se recibió {self.activation_margin}")
        object.__setattr__(self, 'radius', float(self.radius))
        object.__setattr__(self, 'activation_margin', float(self.activation_margin))


STAGE_BASE_FEATURES = ('G', 'XReg', 'UReg')
TERMINAL_BASE_FEATURES = ('G', 'XReg')


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    goal: np.ndarray
    start: State
    obstacles: Tuple[ObstacleSpec, ...] = ()
    horizon_T: int = 30
    dt: float = 0.05
    name: str = ''
    feature_layout: Tuple[str, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'goal', _frozen_array(self.goal, 'goal', (2,)))
        object.__setattr__(self, 'obstacles', tuple(self.obstacles))
        if int(self.horizon_T) != self.horizon_T or self.horizon_T < 2:
            raise ConfigurationError(f"horizon_T debe ser un entero >= 2, se recibió {self.horizon_T}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt debe ser positivo, se recibió {self.dt}")
        object.__setattr__(self, 'horizon_T', int(self.horizon_T))
        object.__setattr__(self, 'dt', float(self.dt))
        obstacle_names = tuple(f"Obs_{i + 1}" for i in range(len(self.obstacles)))
        layout = tuple(f"stage_{name}" for name in STAGE_BASE_FEATURES + obstacle_names)
        layout += tuple(f"terminal_{name}" for name in TERMINAL_BASE_FEATURES + obstacle_names)
        object.__setattr__(self, 'feature_layout', layout)

    @property
    def n_obstacles(self):
        return len(self.obstacles)

    @property
    def stage_feature_count(self):
        return len(STAGE_BASE_FEATURES) + self.n_obstacles

    @property
    def terminal_feature_count(self):
        return len(TERMINAL_BASE_FEATURES) + self.n_obstacles

    @property
    def feature_count(self):
        return self.stage_feature_count + self.terminal_feature_count

    def split_weights(self, w):
        """Separa un vector de pesos en sus bloques de etapa y terminal."""
        w = as_array(w)
        if w.size != self.feature_count:
            raise ConfigurationError(f"Se esperaban {self.feature_count} pesos, se recibieron {w.size}")
        return w[:self.stage_feature_count], w[self.stage_feature_count:]


def trajectory_cost(w, phi):
    """
    Costo lineal w^T Phi.
    """
    w, phi = as_array(w), as_array(phi)
    if w.shape != phi.shape:
        raise ConfigurationError(f"Dimensiones incompatibles: pesos {w.shape}, características {phi.shape}")
    cost = float(w @ phi)
    if not np.isfinite(cost):
        raise NumericalError("El costo de la trayectoria no es finito")
    return cost


def _log_demo_probability(w, phi_star, others):
    w = as_array(w)
    if w.size == 0:
        raise ConfigurationError("El vector de pesos está vacío")
    star_cost = trajectory_cost(w, phi_star)
    exponents = np.array([-star_cost] + [-trajectory_cost(w, phi) for phi in others])
    return exponents[0] - logsumexp(exponents)


def demo_probability(w, phi_star, others=()):
    """
    Probabilidad de la demostración frente a un conjunto finito de trayectorias.

    Usa log-sum-exp (resta del exponente máximo) para que costos del orden de
    1e4 no produzcan underflow.
    """
    return float(np.exp(_log_demo_probability(w, phi_star, others)))


def negative_log_likelihood(w, phi_star, others=()):
    return float(-_log_demo_probability(w, phi_star, others))

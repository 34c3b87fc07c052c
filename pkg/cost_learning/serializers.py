from rest_framework import serializers

from .domain import ConfigurationError, EnvironmentSpec, ObstacleSpec, State, WeightVector


def _pair(**kwargs):
    return serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, **kwargs)


class ObstacleSerializer(serializers.Serializer):
    center = _pair()
    radius = serializers.FloatField(min_value=0.0)
    margin = serializers.FloatField(min_value=0.0)

    def validate(self, attrs):
        for key in ('radius', 'margin'):
            if attrs[key] <= 0:
                raise serializers.ValidationError({key: 'Debe ser mayor que cero.'})
        return attrs


class StartSerializer(serializers.Serializer):
    position = _pair()
    velocity = _pair(required=False, default=[0.0, 0.0])


class EnvironmentFileSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=255, required=False, default='')
    version = serializers.IntegerField(required=False, default=1)
    goal = _pair()
    start_position = _pair()
    start_velocity = _pair(required=False, default=[0.0, 0.0])
    dt = serializers.FloatField(min_value=0.0)
    horizon_T = serializers.IntegerField(min_value=2)
    obstacles = ObstacleSerializer(many=True, required=False, default=list)
    weights = serializers.DictField(child=serializers.FloatField(min_value=0.0), required=False)
    alternative_starts = StartSerializer(many=True, required=False, default=list)
    goal_tolerance = serializers.FloatField(min_value=0.0, required=False, default=0.05)

    def validate_dt(self, value):
        if value <= 0:
            raise serializers.ValidationError('Debe ser mayor que cero.')
        return value

    def build_environment(self):
        data = self.validated_data
        return EnvironmentSpec(
            goal=data['goal'],
            start=State(data['start_position'], data['start_velocity']),
            obstacles=tuple(
                ObstacleSpec(item['center'], item['radius'], item['margin']) for item in data['obstacles']
            ),
            horizon_T=data['horizon_T'],
            dt=data['dt'],
            name=data['name'],
        )

    def build_weights(self, env):
        if 'weights' not in self.validated_data:
            return None
        return WeightVector.from_mapping(env.feature_layout, self.validated_data['weights'])


class WeightsFileSerializer(serializers.Serializer):
    weights = serializers.DictField(child=serializers.FloatField(min_value=0.0))

    def build_weights(self, env):
        return WeightVector.from_mapping(env.feature_layout, self.validated_data['weights'])


def flatten_errors(errors, prefix=''):
    """Convierte los errores anidados de DRF en líneas 'campo.ruta: mensaje'."""
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            path = f"{prefix}.{key}" if prefix else str(key)
            lines.extend(flatten_errors(value, path))
    elif isinstance(errors, list):
        for index, value in enumerate(errors):
            if isinstance(value, (dict, list)):
                lines.extend(flatten_errors(value, f"{prefix}[{index}]"))
            else:
                lines.append(f"{prefix}: {value}")
    else:
        lines.append(f"{prefix}: {errors}")
    return lines


def validate_or_raise(serializer_class, data):
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise ConfigurationError('; '.join(flatten_errors(serializer.errors)))
    return serializer

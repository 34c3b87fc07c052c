import logging
from pathlib import Path

from django.utils import timezone

from cost_learning.domain import ConfigurationError
from cost_learning.experiments import ExperimentPreset, generate_demonstration
from cost_learning.persistence import load_environment, load_weights, write_trajectory
from cost_learning.runs import (
    RunCommand,
    add_solver_arguments,
    config_snapshot,
    output_directory,
    record_manifest,
    solver_config_from_options,
)

logger = logging.getLogger(__name__)


class Command(RunCommand):
    help = 'Genera la demostración resolviendo OC con los pesos verdaderos'

    def add_arguments(self, parser):
        parser.add_argument('env_file')
        parser.add_argument('out_trajectory_file')
        parser.add_argument('--weights', dest='weights_file', default=None,
                            help='Archivo de pesos; por defecto el bloque weights del entorno')
        add_solver_arguments(parser)

    def run(self, *args, **options):
        started_at = timezone.now()
        env, weights, data = load_environment(options['env_file'])
        if options['weights_file']:
            weights = load_weights(options['weights_file'], env)
        if weights is None:
            raise ConfigurationError('weights: no se proporcionaron pesos verdaderos')

        oc_cfg = solver_config_from_options(options)
        preset = ExperimentPreset(
            name=env.name or Path(options['env_file']).stem,
            environment=env,
            ground_truth_weights=weights,
            alternative_starts=(),
            goal_tolerance=data['goal_tolerance'],
        )
        logger.info(f"Generando demostración para {preset.name}")
        trajectory = generate_demonstration(preset, oc_cfg)

        out_path = Path(options['out_trajectory_file'])
        output_directory(out_path.parent)
        write_trajectory(out_path, trajectory)
        record_manifest(
            out_path.parent, 'demo', preset.name,
            config_snapshot(solver=oc_cfg, weights=weights.as_dict()),
            started_at, '', {'trajectory': out_path},
        )
        self.stdout.write(self.style.SUCCESS(f"Demostración escrita en {out_path} ({trajectory.horizon + 1} estados)"))

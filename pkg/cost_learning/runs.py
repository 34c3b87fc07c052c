"""
Piezas comunes de los comandos: códigos de salida, banderas del
aprendizaje y manifiesto de cada ejecución.
"""
import logging
import traceback
from dataclasses import asdict
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError
from django.utils import timezone

from .domain import ConfigurationError, DemonstrationError, NumericalError
from .irl_engine import IRLConfig, disable_features
from .models import RunManifest
from .oc_solver import SolverConfig
from .persistence import write_json

logger = logging.getLogger(__name__)

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class RunCommand(BaseCommand):
    """
    Traduce las excepciones del dominio a códigos de salida:
    1 E/S, 2 configuración, 3 falla numérica.
    """

    def handle(self, *args, **options):
        try:
            return self.run(*args, **options)
        except CommandError:
            raise
        except NumericalError as e:
            self.on_numerical_error(e, options)
            logger.error(f"Falla numérica: {str(e)}")
            raise CommandError(f"Falla numérica: {str(e)}", returncode=EXIT_NUMERIC)
        except (ConfigurationError, DemonstrationError) as e:
            logger.error(f"Configuración inválida: {str(e)}")
            raise CommandError(f"Configuración inválida: {str(e)}", returncode=EXIT_CONFIG)
        except OSError as e:
            logger.error(f"Error de E/S: {str(e)}")
            logger.debug(f"Traceback: {traceback.format_exc()}")
            raise CommandError(f"Error de E/S: {str(e)}", returncode=EXIT_IO)

    def run(self, *args, **options):
        raise NotImplementedError

    def on_numerical_error(self, error, options):
        pass


def output_directory(path):
    directory = Path(path) if path else Path(settings.MOIRL['OUTPUT_DIR'])
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def add_solver_arguments(parser):
    parser.add_argument('--solver-max-iterations', type=int, default=None)


def add_irl_arguments(parser):
    defaults = settings.MOIRL['IRL']
    parser.add_argument('--window', type=int, default=defaults['window_L'], help='Ventana móvil L')
    parser.add_argument('--subsamples', type=int, default=defaults['subsamples_N'], help='Sub-muestras N')
    parser.add_argument('--lambda', dest='lambda_l1', type=float, default=defaults['lambda_l1'])
    parser.add_argument('--beta', dest='beta_l2', type=float, default=defaults['beta_l2'])
    parser.add_argument('--bounded-weights', action='store_true', help='Restringe 0 <= w <= 1')
    parser.add_argument('--disable-step-acceptance', action='store_true')
    parser.add_argument('--disable-regularization', action='store_true')
    parser.add_argument('--disable-subsampling', action='store_true')
    parser.add_argument('--max-iterations', type=int, default=defaults['max_outer_iterations'])
    parser.add_argument('--m2-tol', type=float, default=defaults['m2_convergence_tol'])
    add_solver_arguments(parser)


def irl_config_from_options(options):
    cfg = IRLConfig.from_settings(
        window_L=options['window'],
        subsamples_N=options['subsamples'],
        lambda_l1=options['lambda_l1'],
        beta_l2=options['beta_l2'],
        weight_upper_bound=1.0 if options['bounded_weights'] else None,
        max_outer_iterations=options['max_iterations'],
        m2_convergence_tol=options['m2_tol'],
    )
    return disable_features(
        cfg,
        step_acceptance=not options['disable_step_acceptance'],
        regularization=not options['disable_regularization'],
        subsampling=not options['disable_subsampling'],
    )


def solver_config_from_options(options):
    return SolverConfig.from_settings(max_iterations=options.get('solver_max_iterations'))


def config_snapshot(**configs):
    snapshot = {}
    for key, value in configs.items():
        snapshot[key] = asdict(value) if hasattr(value, '__dataclass_fields__') else value
    return snapshot


def record_manifest(out_dir, command, preset_name, config, started_at, termination_reason, output_paths):
    """
    Escribe manifest.json y guarda el registro en la base de datos. Si la base
    no está disponible se continúa sin guardar.
    """
    finished_at = timezone.now()
    payload = {
        'command': command,
        'preset_name': preset_name,
        'tool_version': settings.MOIRL['VERSION'],
        'config': config,
        'started_at': started_at.isoformat(),
        'finished_at': finished_at.isoformat(),
        'termination_reason': termination_reason or '',
        'output_paths': {key: str(value) for key, value in output_paths.items()},
    }
    path = write_json(Path(out_dir) / 'manifest.json', payload)
    try:
        manifest = RunManifest.objects.create(
            command=command,
            preset_name=preset_name,
            tool_version=settings.MOIRL['VERSION'],
            config=config,
            started_at=started_at,
            finished_at=finished_at,
            termination_reason=termination_reason or '',
            output_paths=payload['output_paths'],
        )
        logger.info(f"Manifiesto guardado con ID: {manifest.id}")
    except DatabaseError as db_error:
        logger.warning(f"Error al guardar en BD: {str(db_error)}")
    return path

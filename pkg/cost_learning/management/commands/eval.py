import logging
from pathlib import Path

import pandas as pd
from django.conf import settings
from django.utils import timezone

from cost_learning.domain import ConfigurationError
from cost_learning.experiments import evaluate_generalization, preset_from_file
from cost_learning.persistence import atomic_write_text, load_environment, load_weights, read_trajectory, write_json
from cost_learning.runs import (
    RunCommand,
    add_solver_arguments,
    config_snapshot,
    output_directory,
    record_manifest,
    solver_config_from_options,
)

logger = logging.getLogger(__name__)


def report_table(report):
    """Tabla legible: una fila por punto de inicio."""
    frame = pd.DataFrame([
        {
            'start': outcome.label,
            'position': f"({outcome.start_position[0]:.3f}, {outcome.start_position[1]:.3f})",
            'cost_w_star': outcome.cost_under_w_star,
            'cost_learned_w': outcome.cost_under_learned_w,
            'reached_goal': outcome.reached_goal,
            'collided': outcome.collided,
        }
        for outcome in report.outcomes
    ])
    ratio = 'n/a' if report.cost_ratio is None else f"{report.cost_ratio:.6f}"
    return (
        f"Preset: {report.preset}\n"
        f"Costo de la demostración (w*): {report.demo_cost_under_w_star:.6g}\n"
        f"Razón w*^T Phi_aprendido / w*^T Phi*: {ratio}\n"
        f"Éxitos: {report.success_count}/{len(report.outcomes)}\n\n"
        f"{frame.to_string(index=False)}\n"
    )


class Command(RunCommand):
    help = 'Evalúa los pesos aprendidos desde el inicio original y los inicios alternativos'

    def add_arguments(self, parser):
        parser.add_argument('env_file')
        parser.add_argument('weights_file')
        parser.add_argument('truth_weights_file', nargs='?', default=None,
                            help='Pesos verdaderos; por defecto el bloque weights del entorno')
        parser.add_argument('--demo', dest='demo_file', default=None,
                            help='Demostración existente; si no se da se regenera')
        parser.add_argument('--out-dir', default=None)
        parser.add_argument('--n-jobs', type=int, default=settings.MOIRL['N_JOBS'])
        add_solver_arguments(parser)

    def run(self, *args, **options):
        started_at = timezone.now()
        truth = None
        if options['truth_weights_file']:
            env, _, _ = load_environment(options['env_file'])
            truth = load_weights(options['truth_weights_file'], env)
        preset = preset_from_file(options['env_file'], ground_truth_weights=truth)
        env = preset.environment
        learned = load_weights(options['weights_file'], env)
        tau_star = read_trajectory(options['demo_file']) if options['demo_file'] else None
        if tau_star is not None and tau_star.horizon != env.horizon_T:
            raise ConfigurationError('La demostración no coincide con el horizonte del entorno')
        oc_cfg = solver_config_from_options(options)
        out_dir = output_directory(options['out_dir'])

        report = evaluate_generalization(learned, preset, oc_cfg, tau_star=tau_star, n_jobs=options['n_jobs'])
        table = report_table(report)
        logger.info(f"Escribiendo reporte en {out_dir}")
        outputs = {
            'report': write_json(out_dir / 'report.json', report.as_dict()),
            'table': atomic_write_text(out_dir / 'report.txt', table),
        }
        record_manifest(
            out_dir, 'eval', preset.name,
            config_snapshot(solver=oc_cfg, weights_file=str(Path(options['weights_file']))),
            started_at, '', outputs,
        )
        self.stdout.write(table)

import logging

from django.conf import settings
from django.utils import timezone

from cost_learning.experiments import preset_from_file, rank_ablation, run_ablation
from cost_learning.persistence import read_trajectory, write_json, write_metrics
from cost_learning.runs import (
    RunCommand,
    add_irl_arguments,
    config_snapshot,
    irl_config_from_options,
    output_directory,
    record_manifest,
    solver_config_from_options,
)

logger = logging.getLogger(__name__)


class Command(RunCommand):
    help = 'Ejecuta las cinco variantes de ablación (a-e) y resume su desempeño'

    def add_arguments(self, parser):
        parser.add_argument('env_file')
        parser.add_argument('demo_file')
        parser.add_argument('--out-dir', default=None)
        parser.add_argument('--n-jobs', type=int, default=settings.MOIRL['N_JOBS'])
        add_irl_arguments(parser)

    def run(self, *args, **options):
        started_at = timezone.now()
        preset = preset_from_file(options['env_file'])
        tau_star = read_trajectory(options['demo_file'])
        cfg = irl_config_from_options(options)
        oc_cfg = solver_config_from_options(options)
        out_dir = output_directory(options['out_dir'])

        outcomes = run_ablation(preset, cfg, oc_cfg, tau_star=tau_star, n_jobs=options['n_jobs'])

        outputs = {}
        for outcome in outcomes:
            outputs[f"metrics_{outcome.label}"] = write_metrics(
                out_dir / f"metrics_{outcome.label}.csv", outcome.result.iteration_log
            )
        summary = {
            'preset': preset.name,
            'ranking': [
                {
                    'label': outcome.label,
                    'step_acceptance': outcome.variant.step_acceptance,
                    'regularization': outcome.variant.regularization,
                    'subsampling': outcome.variant.subsampling,
                    'final_m2': outcome.final_m2,
                    'outer_iterations': outcome.result.outer_iterations,
                    'termination_reason': outcome.result.termination_reason.value,
                    'cost_ratio': outcome.report.cost_ratio,
                    'success_count': outcome.report.success_count,
                    'final_weights': outcome.result.final_weights.as_dict(),
                }
                for outcome in rank_ablation(outcomes)
            ],
        }
        outputs['summary'] = write_json(out_dir / 'summary.json', summary)
        logger.info(f"Ablación de {preset.name}: mejor variante {summary['ranking'][0]['label']}")
        record_manifest(out_dir, 'ablate', preset.name, config_snapshot(irl=cfg, solver=oc_cfg), started_at, '', outputs)
        for row in summary['ranking']:
            self.stdout.write(f"{row['label']}: M2={row['final_m2']:.6g}, éxitos={row['success_count']}")

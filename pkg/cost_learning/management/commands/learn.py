import logging

from django.utils import timezone

from cost_learning import irl_engine
from cost_learning.persistence import (
    load_environment,
    load_weights,
    read_trajectory,
    write_metrics,
    write_samples,
    write_weights,
)
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
    help = 'Aprende los pesos del costo a partir de una demostración'

    def add_arguments(self, parser):
        parser.add_argument('env_file')
        parser.add_argument('demo_file')
        parser.add_argument('--out-dir', default=None)
        parser.add_argument('--truth-weights', default=None,
                            help='Pesos verdaderos para la métrica cost_gap_true_w')
        add_irl_arguments(parser)

    def persist(self, result, out_dir, env, options, cfg, oc_cfg, started_at):
        reason = result.termination_reason.value if result.termination_reason else 'numerical_failure'
        outputs = {
            'weights': write_weights(out_dir / 'weights.json', result.final_weights, {'termination_reason': reason}),
            'metrics': write_metrics(out_dir / 'metrics.csv', result.iteration_log),
            'samples': write_samples(out_dir / 'samples.csv', result.samples),
        }
        config = config_snapshot(
            irl=cfg, solver=oc_cfg, env_file=str(options['env_file']), demo_file=str(options['demo_file'])
        )
        record_manifest(out_dir, 'learn', env.name, config, started_at, reason, outputs)
        return outputs

    def on_numerical_error(self, error, options):
        partial = getattr(error, 'partial_result', None)
        context = getattr(self, '_context', None)
        if partial is None or context is None:
            return
        logger.warning("Se conservan las iteraciones válidas previas a la falla numérica")
        self.persist(partial, **context)

    def run(self, *args, **options):
        started_at = timezone.now()
        self._context = None
        env, truth, _ = load_environment(options['env_file'])
        if options['truth_weights']:
            truth = load_weights(options['truth_weights'], env)
        tau_star = read_trajectory(options['demo_file'])
        cfg = irl_config_from_options(options)
        oc_cfg = solver_config_from_options(options)
        out_dir = output_directory(options['out_dir'])

        self._context = dict(
            out_dir=out_dir, env=env, options=options, cfg=cfg, oc_cfg=oc_cfg, started_at=started_at
        )
        result = irl_engine.run(tau_star, env, cfg, oc_cfg, true_weights=truth)

        outputs = self.persist(result, **self._context)
        self.stdout.write(self.style.SUCCESS(
            f"Aprendizaje terminado ({result.termination_reason.value}) tras "
            f"{result.outer_iterations} iteraciones; pesos en {outputs['weights']}"
        ))

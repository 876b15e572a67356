import logging
from concurrent.futures import ThreadPoolExecutor

from motion import conf
from motion.exceptions import BadConfig, MotionError
from motion.formats import load_motion, motion_from_file, write_json
from motion.models import EvaluationRun
from motion.pipeline import evaluate_motions

from ._base import MotionCommand

logger = logging.getLogger(__name__)


def _evaluate_pair(input_path, reference_path, segment_len):
    try:
        pred = motion_from_file(load_motion(input_path), input_path)
        gt = motion_from_file(load_motion(reference_path), reference_path)
        return gt.n_frames, evaluate_motions(pred, gt, segment_len).to_dict()
    except MotionError as exc:
        raise type(exc)(f"{input_path} vs {reference_path}: {exc}") from exc


class Command(MotionCommand):
    help = "Compute the metric suite for one or more predicted motions against references"

    def add_arguments(self, parser):
        parser.add_argument('--input', action='append', required=True,
                            help="Predicted world motion; repeat for several pairs")
        parser.add_argument('--reference', action='append', required=True,
                            help="Ground-truth motion; one per --input, in the same order")
        parser.add_argument('--output', help="Report JSON (default: stdout)")
        parser.add_argument('--segment-len', type=int)
        parser.add_argument('--workers', type=int)
        parser.add_argument('--save', action='store_true', help="Store each report as an EvaluationRun")
        parser.add_argument('--format', choices=['json'], default='json')

    def run(self, **options):
        inputs, references = options['input'], options['reference']
        if len(inputs) != len(references):
            raise BadConfig(f"got {len(inputs)} --input files but {len(references)} --reference files")
        segment_len = options['segment_len'] if options['segment_len'] is not None else conf.segment_len()
        if segment_len < 2:
            raise BadConfig(f"--segment-len must be at least 2, got {segment_len}")
        workers = options['workers'] if options['workers'] is not None else conf.eval_workers()
        workers = max(1, min(workers, len(inputs)))

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_pair, inputs, references, [segment_len] * len(inputs)))
        logger.info("Evaluated %d pair(s) on %d worker(s)", len(results), workers)

        if options['save']:
            for input_path, reference_path, (n_frames, report) in zip(inputs, references, results):
                run = EvaluationRun.record(report, n_frames, label=input_path, reference_label=reference_path)
                logger.info("Stored evaluation run %d", run.id)

        if len(results) == 1:
            document = results[0][1]
        else:
            document = [
                {'input': i, 'reference': r, 'report': report}
                for i, r, (_, report) in zip(inputs, references, results)
            ]
        if options['output']:
            write_json(options['output'], document)
        else:
            self.emit(document)

from motion import conf
from motion.formats import load_ik_request, write_json
from motion.pipeline import solve_ik

from ._base import MotionCommand


class Command(MotionCommand):
    help = "Solve a single-frame inverse kinematics problem with cyclic coordinate descent"

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help="IK request JSON (skeleton, pose, joint targets)")
        parser.add_argument('--output', help="Result JSON (default: stdout)")
        parser.add_argument('--max-iter', type=int)
        parser.add_argument('--tol', type=float)
        parser.add_argument('--format', choices=['json'], default='json')

    def run(self, **options):
        request = load_ik_request(options['input'])
        result = solve_ik(
            request,
            max_iter=options['max_iter'] if options['max_iter'] is not None else int(conf.get('IK_MAX_ITER')),
            tol=options['tol'] if options['tol'] is not None else float(conf.get('IK_TOL')),
            max_step=float(conf.get('IK_MAX_STEP')),
            source=options['input'],
        )
        if options['output']:
            write_json(options['output'], result)
        else:
            self.emit(result)

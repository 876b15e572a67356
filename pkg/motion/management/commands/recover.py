from motion import conf
from motion.formats import (
    load_camera,
    load_motion,
    load_prediction,
    motion_from_file,
    motion_to_file,
    save_motion,
    write_csv,
)
from motion.pipeline import recover_motion, recovery_curves, refine_motion

from ._base import MotionCommand


class Command(MotionCommand):
    help = "Roll per-frame GV predictions and a camera track out into a world motion"

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help="Prediction file")
        parser.add_argument('--camera', required=True, help="Camera file")
        parser.add_argument('--output', required=True, help="World motion file to write")
        parser.add_argument('--renorm-every', type=int, help="Frames between re-orthonormalisations")
        parser.add_argument('--curve', help="CSV of gravity tilt and orientation error against time")
        parser.add_argument('--reference', help="Ground-truth motion for the error columns of --curve")
        parser.add_argument('--refine', action='store_true',
                            help="Apply stationary-joint post-processing to the recovered motion")

    def run(self, **options):
        renorm = options['renorm_every'] if options['renorm_every'] is not None else conf.renorm_every()
        prediction = load_prediction(options['input'])
        camera = load_camera(options['camera'])
        recovery = recover_motion(prediction, camera, renorm, source=options['input'])
        motion = refine_motion(recovery.motion, conf.postprocess_config(), postprocess=options['refine'])
        save_motion(options['output'], motion_to_file(motion))

        if options['curve']:
            reference = None
            if options['reference']:
                reference = motion_from_file(load_motion(options['reference']), options['reference'])
            write_csv(options['curve'], recovery_curves(recovery, reference))
        self.stdout.write(self.style.SUCCESS(
            f"Recovered {recovery.motion.n_frames} frames into {options['output']}"
        ))

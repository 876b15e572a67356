from dataclasses import replace

from motion import conf
from motion.exceptions import BadConfig
from motion.formats import load_motion, motion_from_file, motion_to_file, save_motion
from motion.pipeline import refine_motion

from ._base import MotionCommand


class Command(MotionCommand):
    help = "Pin likely-stationary joints: root refinement, target smoothing and per-frame IK"

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help="World motion with stationary logits")
        parser.add_argument('--output', required=True)
        parser.add_argument('--contact-threshold', type=float)
        parser.add_argument('--ik-max-iter', type=int)
        parser.add_argument('--skip-translation', action='store_true', help="Keep the root translation as given")
        parser.add_argument('--skip-ik', action='store_true', help="Keep the local rotations as given")

    def run(self, **options):
        params = conf.postprocess_config()
        if options['contact_threshold'] is not None:
            if not 0.0 < options['contact_threshold'] < 1.0:
                raise BadConfig(f"--contact-threshold must lie strictly between 0 and 1, got {options['contact_threshold']}")
            params = replace(params, contact_threshold=options['contact_threshold'])
        if options['ik_max_iter'] is not None:
            params = replace(params, ik_max_iter=options['ik_max_iter'])
        params = replace(params, refine_translation=not options['skip_translation'], solve_ik=not options['skip_ik'])

        motion = motion_from_file(load_motion(options['input']), options['input'])
        refined = refine_motion(motion, params)
        save_motion(options['output'], motion_to_file(refined))
        self.stdout.write(self.style.SUCCESS(f"Refined {refined.n_frames} frames into {options['output']}"))

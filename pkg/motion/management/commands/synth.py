from pathlib import Path

from motion.formats import save_camera, save_motion, save_prediction, write_json
from motion.pipeline import synth_files
from motion.synth import CAMERA_MODES, SynthConfig, synth_sequence

from ._base import MotionCommand, read_config


class Command(MotionCommand):
    help = "Generate a synthetic walk: ground-truth motion, camera track and exact predictions"

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--config', help="JSON file with synth config fields")
        parser.add_argument('--output', required=True, help="Output directory")
        parser.add_argument('--length', type=int, help="Frames (overrides --config)")
        parser.add_argument('--camera-mode', choices=CAMERA_MODES)
        parser.add_argument('--skeleton')
        parser.add_argument('--tilt-deg', type=float, help="Std of tilt noise on relative camera rotations")
        parser.add_argument('--yaw-deg', type=float, help="Std of yaw noise on relative camera rotations")
        parser.add_argument('--keypoint-sigma', type=float)

    def run(self, **options):
        data = read_config(options['config'])
        for flag, key in (('length', 'length'), ('camera_mode', 'camera_mode'), ('skeleton', 'skeleton')):
            if options[flag] is not None:
                data[key] = options[flag]
        noise = dict(data.get('noise', {}))
        for flag, key in (('tilt_deg', 'r_delta_tilt_deg'), ('yaw_deg', 'r_delta_yaw_deg'),
                          ('keypoint_sigma', 'keypoint_sigma')):
            if options[flag] is not None:
                noise[key] = options[flag]
        data['noise'] = noise
        config = SynthConfig.from_dict(data)

        bundle = synth_sequence(options['seed'], config)
        motion_file, camera_file, prediction_file = synth_files(bundle)

        out = Path(options['output'])
        out.mkdir(parents=True, exist_ok=True)
        save_motion(out / 'motion.json', motion_file)
        save_camera(out / 'camera.json', camera_file)
        save_prediction(out / 'prediction.json', prediction_file)
        write_json(out / 'synth_config.json', {'seed': options['seed'], 'config': config.to_dict()})
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {bundle.n_frames} frames ({config.camera_mode} camera, seed {options['seed']}) to {out}"
        ))

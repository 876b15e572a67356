from motion import conf
from motion.formats import write_json
from motion.pipeline import attention_checksums

from ._base import MotionCommand, read_config


class Command(MotionCommand):
    help = "Run the seeded banded-attention transformer and print output checksums"

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--length', type=int, default=64, help="Number of frames fed through the model")
        parser.add_argument('--train-len', type=int, help="Attention window L")
        parser.add_argument('--config', help="JSON file with model config fields")
        parser.add_argument('--output', help="Write the checksums here instead of stdout")
        parser.add_argument('--format', choices=['json'], default='json')

    def run(self, **options):
        overrides = read_config(options['config'])
        if options['train_len'] is not None:
            overrides['train_len'] = options['train_len']
        config = conf.model_config(**overrides)
        checksums = attention_checksums(config, seed=options['seed'], length=options['length'])
        if options['output']:
            write_json(options['output'], checksums)
        else:
            self.emit(checksums)

"""
Shared plumbing for the motion management commands.

Domain errors exit with status 2 and I/O errors with status 3; in both cases
the message is printed to stderr without a traceback.
"""
import json
import logging

from django.core.management.base import BaseCommand, CommandError

from motion.exceptions import MotionError, BadConfig

logger = logging.getLogger(__name__)

VALIDATION_EXIT = 2
IO_EXIT = 3


class MotionCommand(BaseCommand):
    """BaseCommand whose handle() delegates to run() with error translation"""

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except MotionError as exc:
            raise CommandError(str(exc), returncode=VALIDATION_EXIT) from exc
        except OSError as exc:
            name = getattr(exc, 'filename', None)
            message = f"{name}: {exc.strerror}" if name and exc.strerror else str(exc)
            raise CommandError(message, returncode=IO_EXIT) from exc

    def run(self, **options):
        raise NotImplementedError

    def emit(self, data):
        """Print a JSON document to stdout"""
        self.stdout.write(json.dumps(data, indent=2))


def read_config(path, flag='--config'):
    """JSON object from a --config style flag, or an empty dict when unset"""
    if not path:
        return {}
    with open(path, encoding='utf-8') as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadConfig(f"{flag} {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise BadConfig(f"{flag} {path}: expected a JSON object")
    return data

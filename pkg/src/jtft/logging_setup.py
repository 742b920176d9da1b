import logging
import sys
from logging.handlers import RotatingFileHandler

from jtft import constants

_FORMAT = "%(asctime)s %(levelname)-8s [%(name)s] %(message)s"


def setup_logging(verbose: bool = False) -> None:
    """Configure rotating file logger plus a stderr handler for jtft."""
    root = logging.getLogger("jtft")
    root.setLevel(logging.DEBUG)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    constants.LOG_DIR.mkdir(parents=True, exist_ok=True)
    file_handler = RotatingFileHandler(
        constants.LOG_FILE,
        maxBytes=constants.MAX_LOG_SIZE,
        backupCount=constants.LOG_BACKUP_COUNT,
    )
    file_handler.setFormatter(logging.Formatter(_FORMAT))
    root.addHandler(file_handler)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.DEBUG if verbose else logging.INFO)
    console.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root.addHandler(console)

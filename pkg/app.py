import logging
import sys

from controller.cli_controller import CliController

# Set logging level to info
logging.basicConfig(level=logging.INFO)

if __name__ == "__main__":
    sys.exit(CliController().dispatch())

from shared.constants import *
from shared.types import *
from shared.exceptions import *
from shared.config import RunConfig, load_config, parse_config_text, parse_blocks
from shared.log import get_logger, configure_logging

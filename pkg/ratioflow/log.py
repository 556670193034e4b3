import os
import logging
import logging.config

from dotenv import load_dotenv  # type: ignore


load_dotenv()


LOG_LEVEL = os.getenv("RATIOFLOW_LOG", "WARNING").upper()
LOG_FORMAT = os.getenv("RATIOFLOW_LOG_FORMAT", "text").lower()


DEFAULT_LOGGING_CONFIG = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s - %(name)s - ' + \
                      '%(filename)s -  %(levelname)s - %(message)s',
        },
        'json': {
            '()': 'pythonjsonlogger.jsonlogger.JsonFormatter',
            'format': '%(asctime)s %(name)s %(filename)s ' + \
                      '%(levelname)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'json' if LOG_FORMAT == 'json' else 'standard',
            'level': LOG_LEVEL,
        },
    },
    'loggers': {
        'ratioflow': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

logging.config.dictConfig(DEFAULT_LOGGING_CONFIG)

logger = logging.getLogger("ratioflow")


def set_level(level: str):
    """
    Change the level of the package logger and its console handler.

    Args:
        level (str): A standard logging level name, e.g. "INFO".
    """
    level = level.upper()
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)

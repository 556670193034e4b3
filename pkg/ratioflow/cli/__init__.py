from .app import app, exit_code
from .config import RunConfig, resolve_run_config

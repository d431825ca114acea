from .console import info, success, warn, error, set_quiet
from .files import create_dest_dir_if_not_exists, hash_file, write_json, read_json
from .strings import to_snake_case, parse_grid

from .artifacts import RunManifest, dump_paths_hdf5, read_csv, write_csv, write_json
from .config import RunConfig, load_config, parse_config

import os
import yaml
from os.path import join, dirname

from dotenv import load_dotenv

load_dotenv(join(dirname(dirname(__file__)), '.env'))


def load_config(file_path):
    with open(file_path, 'r') as file:
        return yaml.safe_load(file)


def _flatten(sections: dict) -> dict:
    flat = {}
    for values in sections.values():
        flat.update(values)
    return flat


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "0").strip().lower() in ("1", "true", "yes", "on")


class Config:
    NUMERICS_FILE = join(dirname(__file__), 'numerics.yaml')
    NUMERICS = _flatten(load_config(NUMERICS_FILE))

    THREADS = max(1, int(os.environ.get("RATING_FORGE_THREADS", 1)))
    DEBUG = _env_flag("RATING_FORGE_DEBUG")

    DIR_RESULTS = os.environ.get("RATING_FORGE_RESULTS", join(dirname(dirname(__file__)), 'results'))
    DIR_DATA_TEST = join(dirname(dirname(__file__)), 'data_test')

    # Fixed CSV layouts of the exported tables
    SCHEME_COLUMNS = ["theta", "q", "segment_kind"]
    ALLOCATION_COLUMNS = ["theta", "q", "w", "D"]
    CONDITION_COLUMNS = ["id", "holds", "margin", "witness"]
    BEST_RESPONSE_COLUMNS = ["theta", "q"]
    SEPARATION_COLUMNS = ["theta", "q", "w", "J"]
    FEE_COLUMNS = ["theta", "q", "w", "sigma"]
    REVEAL_POINTS = 65

    @staticmethod
    def numeric(name: str):
        return Config.NUMERICS[name]


cf = Config()
if __name__ == '__main__':
    print(cf.NUMERICS)
    print(cf.THREADS, cf.DIR_RESULTS)

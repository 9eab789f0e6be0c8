import json
import os
import hashlib
import numpy as np


def check_create_folder(file_path):
    folder_path = os.path.dirname(file_path)
    if folder_path and not os.path.exists(folder_path):
        os.makedirs(folder_path)


def save_json(file_path, data):
    check_create_folder(file_path)
    with open(file_path, "w") as write_file:
        json.dump(data, write_file, ensure_ascii=False, sort_keys=True,
                  indent=2)
        write_file.write('\n')


def load_json(path):
    with open(path, "r") as read_file:
        in_data = json.load(read_file)

    return in_data


def int_hash_of_str(text:str):
    return int(hashlib.md5(text.encode('utf-8')).hexdigest()[:8], 16)


def derive_seed(master_seed: int, purpose: str) -> int:
    '''
    Sub-seed for one consumer of randomness. Distinct purposes
    never share a random stream.

    Parameters
    ----------
    master_seed:
        experiment-wide seed
    purpose:
        name of the consumer, i.e. ``'split'``, ``'stream'``, ``'learner'``
    '''
    return int_hash_of_str('{}:{}'.format(int(master_seed), purpose))


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


def load_config():
    _base_dir = os.path.expanduser('~')
    _ml_continual_dir = os.path.join(_base_dir, '.ml_continual')
    _config_path = os.path.join(_ml_continual_dir, 'config.json')
    config = load_json(_config_path)
    return config

import os
import json

_base_dir = os.path.expanduser('~')
_ml_continual_dir = os.path.join(_base_dir, '.ml_continual')
_config_path = os.path.join(_ml_continual_dir, 'config.json')

if not os.path.exists(_ml_continual_dir):
    try:
        os.makedirs(_ml_continual_dir)
    except OSError:
        pass

if not os.path.exists(_config_path):
    _config = {
        "data_path":os.path.join(_ml_continual_dir, 'data'),
        "out_path":os.path.join(_ml_continual_dir, 'out'),
    }

    try:
        with open(_config_path, 'w') as f:
            f.write(json.dumps(_config, indent=4))
    except IOError:
        pass

from pathlib import Path

import numpy as np
import pytest

from climlag.fixtures import synthetic_panel, write_fixture

LIGHT_CONFIG = """\
# reduced grids so end-to-end runs finish in seconds
division = Dhaka
division = Barishal
data_dir = {data}
output_dir = {out}
seed = 7
sarimax_order = (0,1,1)(1,0,0,12)
sarimax_order = (1,1,0)(1,0,0,12)
mlp_hidden = 8
mlp_lr = 0.01
mlp_l2 = 0.001
mlp_max_iterations = 300
gbt_rounds = 20
gbt_eta = 0.3
gbt_depth = 2
gbt_lambda = 1
"""


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def panel():
    return synthetic_panel("Dhaka", seed=3)


@pytest.fixture
def data_dir(tmp_path) -> Path:
    d = tmp_path / "data"
    write_fixture(d)
    return d


@pytest.fixture
def light_config(tmp_path, data_dir) -> Path:
    path = tmp_path / "light.cfg"
    path.write_text(LIGHT_CONFIG.format(data=data_dir, out=tmp_path / "out"), encoding="utf-8")
    return path

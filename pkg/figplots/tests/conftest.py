"""Fixtures generate real CSVs by invoking the simulator CLI, so the plot
scripts are tested against the exact file contract they consume."""

import subprocess
import sys
from pathlib import Path

import pytest

CFG_TRAJECTORY = """
F = 2
B = 0.1
M = 1.0
K = 1e-4
n_steps = 150
seed = 3
"""

CFG_SWEEP = """
F_values = 1, 5, 25
mode = fixed-mk
M = 0.0
K = 0.0
B = 0.1
n_trajectories = 3
seed = 13
"""

CFG_QFI = """
F = 2
B = 0.1
M = 1.0
K = 1e-4
n_steps = 200
n_trajectories = 6
seed = 7
"""


def run_dpmag(*args):
    proc = subprocess.run(["dpmag", *args], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def csv_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("dpmag_outputs")
    (root / "trajectory.cfg").write_text(CFG_TRAJECTORY)
    (root / "sweep.cfg").write_text(CFG_SWEEP)
    (root / "qfi.cfg").write_text(CFG_QFI)

    tdir = root / "traj"
    run_dpmag("trajectory", "--config", str(root / "trajectory.cfg"),
              "--out", str(tdir))
    tdir0 = root / "traj_k0"
    run_dpmag("trajectory", "--config", str(root / "trajectory.cfg"),
              "--out", str(tdir0), "--K", "0.0")

    sdir = root / "sweep"
    run_dpmag("sweep", "--config", str(root / "sweep.cfg"), "--out", str(sdir))
    fdir = root / "fit"
    run_dpmag("fit", "--input", str(sdir / "sweep.csv"), "--out", str(fdir))

    qdir = root / "qfi"
    run_dpmag("qfi", "--config", str(root / "qfi.cfg"), "--out", str(qdir))
    return root

"""Bring your own matrices: Matrix Market input through the command line.

Writes a Wathen-pattern sparse A and a dense negative semidefinite B to .mtx
files. Then it runs ``stiefelqn compare`` on a config that points at them.
Paths in the config are resolved relative to the config file.

Run:  python demos/05_matrix_market_input.py
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import yaml

from stiefelqn.kernels import write_matrix_market
from stiefelqn.models.eig import make_eig_wathen_like

prob = make_eig_wathen_like(2, p=6, seed=0)
with tempfile.TemporaryDirectory() as d:
    d = Path(d)
    write_matrix_market(d / "A.mtx", prob.A, comment="Wathen-pattern mass matrix")
    write_matrix_market(d / "B.mtx", prob.B, comment="dense negative semidefinite part")
    cfg = {"problem": {"kind": "eig_mm", "A": "A.mtx", "B": "B.mtx", "p": 6},
           "solvers": ["asqn", "ace", "lobpcg"], "output": "table"}
    (d / "run.yaml").write_text(yaml.safe_dump(cfg))
    print(f"n = {prob.n}, nnz(A) = {prob.A.nnz}")
    code = subprocess.call([sys.executable, "-m", "stiefelqn", "compare", "--config", str(d / "run.yaml")])
    sys.exit(code)

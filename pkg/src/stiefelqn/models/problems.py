"""Build model instances from a problem-definition mapping."""

from dataclasses import dataclass
from pathlib import Path

from ..kernels import read_matrix_market
from .eig import EigProblem, eig_objective, make_eig_from_matrices, make_eig_random, make_eig_wathen_like
from .fock import FockTensor, hf_objective, make_fock_tensor
from .ks import KsModel, ks_objective, make_ks1d

PROBLEM_KINDS = ("eig_random", "eig_wathen", "eig_mm", "ks1d", "hf_synth")

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(PROBLEM_KINDS)},
        "n": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 1},
        "s": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "A": {"type": "string"},
        "B": {"type": "string"},
        "xc": {"enum": ["none", "simple"]},
        "n_proj": {"type": "integer", "minimum": 0, "maximum": 2},
        "rank": {"type": "integer", "minimum": 1},
        "scale": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "eig_mm"}}}, "then": {"required": ["A", "B", "p"]}},
        {"if": {"properties": {"kind": {"const": "eig_random"}}}, "then": {"required": ["n", "p"]}},
        {"if": {"properties": {"kind": {"const": "eig_wathen"}}}, "then": {"required": ["s"]}},
    ],
}


@dataclass
class ProblemInstance:
    kind: str
    eig: EigProblem = None
    ks: KsModel = None
    fock: FockTensor = None
    seed: int = 0

    @property
    def family(self):
        return {"eig_random": "eig", "eig_wathen": "eig", "eig_mm": "eig",
                "ks1d": "ks", "hf_synth": "hf"}[self.kind]

    @property
    def counter(self):
        return self.eig.counter if self.eig is not None else self.ks.counter

    def objective(self, split=None):
        if self.family == "eig":
            return eig_objective(self.eig)
        if self.family == "ks":
            return ks_objective(self.ks, split or "kinetic")
        return hf_objective(self.ks, self.fock, split or "ks_exact")

    def initial_point(self):
        if self.eig is not None:
            return self.eig.initial_point(self.seed)
        return self.ks.initial_point(self.seed)

    def expensive_label(self):
        return {"eig": "BV", "ks": "HV", "hf": "VV"}[self.family]


def build_problem(desc, base_dir=None, seed=None):
    """Instantiate the problem described by ``desc`` (already schema-checked).

    ``seed`` overrides the seed in the desc. Matrix Market paths are resolved
    relative to ``base_dir``.
    """
    kind = desc["kind"]
    seed = int(desc.get("seed", 0) if seed is None else seed)
    if kind == "eig_random":
        return ProblemInstance(kind, eig=make_eig_random(desc["n"], desc["p"], seed), seed=seed)
    if kind == "eig_wathen":
        return ProblemInstance(kind, eig=make_eig_wathen_like(desc["s"], desc.get("p", 10), seed),
                               seed=seed)
    if kind == "eig_mm":
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        A = read_matrix_market(base / desc["A"], dense=False)
        B = read_matrix_market(base / desc["B"], dense=True)
        return ProblemInstance(kind, eig=make_eig_from_matrices(A, B, desc["p"]), seed=seed)
    n, p = desc.get("n", 64), desc.get("p", 4)
    ks = make_ks1d(n, p, seed=seed, xc=desc.get("xc", "simple"), n_proj=desc.get("n_proj", 2))
    if kind == "ks1d":
        return ProblemInstance(kind, ks=ks, seed=seed)
    T = make_fock_tensor(n, rank=desc.get("rank", 8), seed=seed, scale=desc.get("scale", 0.5))
    return ProblemInstance(kind, ks=ks, fock=T, seed=seed)

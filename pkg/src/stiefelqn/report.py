"""Solver report record shared by the inner solvers and the outer drivers."""

from dataclasses import asdict, dataclass, field, fields

STATUSES = ("converged", "max_iter", "stagnated_then_refined", "failed")


@dataclass
class SolveReport:
    """What a solve did, in a form that survives a JSON round trip.

    ``f_history`` and ``gradnorm_history`` hold one entry for the starting
    point plus one per outer iteration (the value at the iterate kept after
    that iteration). ``accepted_flags``, ``ratios`` and ``taus`` hold one entry
    per outer iteration; ``taus`` has a leading entry for the initial value.
    """

    solver: str = ""
    status: str = "max_iter"
    outer_iterations: int = 0
    inner_iterations: list = field(default_factory=list)
    f_history: list = field(default_factory=list)
    gradnorm_history: list = field(default_factory=list)
    accepted_flags: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    cheap_applies: int = 0
    expensive_applies: int = 0
    refinements: int = 0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def fval(self):
        return self.f_history[-1] if self.f_history else float("nan")

    @property
    def gradnorm(self):
        return self.gradnorm_history[-1] if self.gradnorm_history else float("nan")

    @property
    def inner_avg(self):
        if not self.inner_iterations:
            return 0.0
        return sum(self.inner_iterations) / len(self.inner_iterations)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

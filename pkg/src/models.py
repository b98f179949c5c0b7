import math
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sparse
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.sparse.csgraph import connected_components

from src.errors import MarkedPointOffGrid

ArrayModel = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def frozen_array(values, dtype=float) -> np.ndarray:
    """Copy into a read-only numpy array"""
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


# Forms and measures
class DirichletForm(BaseModel):
    """Finite symmetric Markov chain: conductances, killing and reference masses.

    Edges are stored once per unordered pair (x < y), so the energy is
    E(u,u) = sum_edges w (u(x) - u(y))^2 + sum_x k(x) u(x)^2.
    """
    model_config = ArrayModel

    n: int
    edge_x: np.ndarray
    edge_y: np.ndarray
    edge_w: np.ndarray
    killing: np.ndarray
    mass: np.ndarray
    labels: Optional[np.ndarray] = None
    irreducible: bool = True

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.killing.shape != (self.n,) or self.mass.shape != (self.n,):
            raise ValueError("killing and mass must have one entry per state")
        if not (self.edge_x.shape == self.edge_y.shape == self.edge_w.shape):
            raise ValueError("edge arrays must have equal length")
        if self.labels is not None and self.labels.shape != (self.n,):
            raise ValueError("labels must have one entry per state")
        return self

    def conductance_matrix(self) -> sparse.csr_matrix:
        w = sparse.coo_matrix((self.edge_w, (self.edge_x, self.edge_y)), shape=(self.n, self.n))
        return (w + w.T).tocsr()

    def energy_matrix(self) -> sparse.csr_matrix:
        """Symmetric matrix A with E(u,u) = u^T A u"""
        w = self.conductance_matrix()
        degree = np.asarray(w.sum(axis=1)).ravel()
        return (sparse.diags(degree + self.killing) - w).tocsr()

    def generator(self) -> sparse.csr_matrix:
        """L = -diag(1/m) A, the m-symmetric generator"""
        return (-sparse.diags(1.0 / self.mass) @ self.energy_matrix()).tocsr()

    def energy(self, u) -> float:
        u = np.asarray(u, dtype=float)
        diff = u[self.edge_x] - u[self.edge_y]
        return float(np.sum(self.edge_w * diff ** 2) + np.sum(self.killing * u ** 2))

    def components(self) -> Tuple[int, np.ndarray]:
        return connected_components(self.conductance_matrix(), directed=False)

    @property
    def is_transient(self) -> bool:
        """Every connected component carries some killing"""
        count, labels = self.components()
        killed = np.bincount(labels, weights=self.killing, minlength=count)
        return bool(np.all(killed > 0))


class Grid1D(BaseModel):
    model_config = ArrayModel

    left: float
    right: float
    h: float
    requested_h: float
    boundary: Tuple[str, str]
    nodes: np.ndarray
    kind: Literal["interval", "radial"] = "interval"
    dimension: Optional[int] = None

    def index_of(self, x: float) -> int:
        """Index of the node sitting at coordinate x"""
        idx = int(np.argmin(np.abs(self.nodes - x)))
        if not math.isclose(self.nodes[idx], x, rel_tol=1e-9, abs_tol=1e-9 * self.h):
            raise MarkedPointOffGrid(f"no grid node at {x} (h={self.h})")
        return idx


class MeasureSource(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["atom", "density", "vector"]
    sign: Literal["plus", "minus"]
    location: Optional[float] = None
    weight: Optional[float] = None


class SignedMeasure(BaseModel):
    """mu = mu+ - mu-, both parts kept as given (see canonical() for Jordan form)"""
    model_config = ArrayModel

    plus: np.ndarray
    minus: np.ndarray
    provenance: List[MeasureSource] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_parts(self):
        if self.plus.shape != self.minus.shape:
            raise ValueError("plus and minus parts must have the same length")
        if np.any(self.plus < 0) or np.any(self.minus < 0):
            raise ValueError("measure parts must be nonnegative")
        return self

    @classmethod
    def zero(cls, n: int) -> "SignedMeasure":
        return cls(plus=frozen_array(np.zeros(n)), minus=frozen_array(np.zeros(n)))

    @classmethod
    def from_parts(cls, plus, minus=None) -> "SignedMeasure":
        plus = np.asarray(plus, dtype=float)
        minus = np.zeros_like(plus) if minus is None else np.asarray(minus, dtype=float)
        return cls(plus=frozen_array(plus), minus=frozen_array(minus),
                   provenance=[MeasureSource(kind="vector", sign="plus"),
                               MeasureSource(kind="vector", sign="minus")])

    @property
    def n(self) -> int:
        return self.plus.shape[0]

    @property
    def net(self) -> np.ndarray:
        return self.plus - self.minus

    def canonical(self) -> "SignedMeasure":
        """Jordan decomposition: min(mu+(x), mu-(x)) = 0 at every state"""
        net = self.net
        return SignedMeasure(plus=frozen_array(np.maximum(net, 0.0)),
                             minus=frozen_array(np.maximum(-net, 0.0)),
                             provenance=list(self.provenance))

    def scaled(self, plus: float = 1.0, minus: float = 1.0) -> "SignedMeasure":
        return SignedMeasure(plus=frozen_array(plus * self.plus),
                             minus=frozen_array(minus * self.minus),
                             provenance=list(self.provenance))

    def positive_part(self) -> "SignedMeasure":
        return SignedMeasure(plus=self.plus, minus=frozen_array(np.zeros(self.n)),
                             provenance=[s for s in self.provenance if s.sign == "plus"])

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        return SignedMeasure(plus=frozen_array(self.plus + other.plus),
                             minus=frozen_array(self.minus + other.minus),
                             provenance=self.provenance + other.provenance)

    def __neg__(self) -> "SignedMeasure":
        flipped = [s.model_copy(update={"sign": "minus" if s.sign == "plus" else "plus"})
                   for s in self.provenance]
        return SignedMeasure(plus=self.minus, minus=self.plus, provenance=flipped)

    def __sub__(self, other: "SignedMeasure") -> "SignedMeasure":
        return self + (-other)


class SchrodingerForm(BaseModel):
    """E^mu(u,u) = E(u,u) + sum_x u(x)^2 (mu+(x) - mu-(x))"""
    model_config = ArrayModel

    form: DirichletForm
    mu: SignedMeasure

    @model_validator(mode="after")
    def _check_sizes(self):
        if self.mu.n != self.form.n:
            raise ValueError("measure and form live on different state spaces")
        return self

    def matrix(self, part: Literal["full", "plus"] = "full") -> sparse.csr_matrix:
        potential = self.mu.plus if part == "plus" else self.mu.net
        return (self.form.energy_matrix() + sparse.diags(potential)).tocsr()

    def energy(self, u, part: Literal["full", "plus"] = "full") -> float:
        u = np.asarray(u, dtype=float)
        potential = self.mu.plus if part == "plus" else self.mu.net
        return self.form.energy(u) + float(np.sum(potential * u ** 2))

    def generator(self) -> sparse.csr_matrix:
        """L - M_{mu/m}"""
        return (-sparse.diags(1.0 / self.form.mass) @ self.matrix()).tocsr()


# Results
class SpectralResult(BaseModel):
    model_config = ArrayModel

    value: float
    minimizer: np.ndarray
    normalization: Literal["mu_minus", "mass"]
    residual: float
    iterations: int = 0
    method: str = "schur"


class GaugeReport(BaseModel):
    """gauge is None when the gauge is infinite; spectral_radius stays meaningful"""
    model_config = ArrayModel

    gauge: Optional[np.ndarray]
    spectral_radius: float
    gaugeable: bool
    sup_gauge: float


class AssumptionAReport(BaseModel):
    model_config = ArrayModel

    h_limit: np.ndarray
    holds: bool
    method: str = "spectral"
    iterations: int = 0


class BoundaryClassTable(BaseModel):
    model_config = ArrayModel

    states: np.ndarray
    coordinates: np.ndarray
    laplace_exit: np.ndarray
    survival: np.ndarray
    epsilons: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"state": self.states, "x": self.coordinates,
                              "laplace_exit": self.laplace_exit})
        for j, eps in enumerate(self.epsilons):
            frame[f"survival_eps_{eps:g}"] = self.survival[:, j]
        return frame


class PrincipleVerdict(BaseModel):
    model_config = ArrayModel

    property: Literal["MP", "L", "A", "MP_DUAL"]
    holds: bool
    witness: Optional[np.ndarray] = None
    certificate: str
    lambda_context: Optional[float] = None
    theorem_applicable: bool = True
    lp_optimum: Optional[float] = None


# Monte Carlo
class Atom(BaseModel):
    model_config = ConfigDict(frozen=True)

    location: float
    weight: float = Field(gt=0)
    sign: Literal["plus", "minus"] = "plus"


class ContinuumProblem1D(BaseModel):
    """Killed diffusion on an interval (generator 1/2 d^2/dx^2) or the radial
    part of 1/2 Laplacian in R^d, with density potentials and atoms.

    Densities V+ and V- are per unit reference measure (Lebesgue for intervals,
    s_d r^{d-1} dr for radial problems), so A^{V m}_t = int_0^t V(X_s) ds.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    domain: Literal["interval", "radial"] = "interval"
    left: float
    right: float
    dimension: int = 1
    v_plus: Optional[Callable[[np.ndarray], np.ndarray]] = None
    v_minus: Optional[Callable[[np.ndarray], np.ndarray]] = None
    atoms: List[Atom] = Field(default_factory=list)
    boundary: Tuple[Literal["absorb", "reflect"], Literal["absorb", "reflect"]] = ("reflect", "reflect")
    delta: float = Field(gt=0)
    epsilon: float = Field(gt=0)
    bridge_correction: bool = True

    @model_validator(mode="after")
    def _check_domain(self):
        if not self.left < self.right:
            raise ValueError("left must be smaller than right")
        for atom in self.atoms:
            if not self.left < atom.location < self.right:
                raise ValueError(f"atom at {atom.location} is not interior to the domain")
        if self.domain == "radial" and self.dimension < 2:
            raise ValueError("radial problems need dimension >= 2")
        if self.domain == "radial" and not self.left > 0:
            raise ValueError("radial problems need r_min > 0")
        return self

    def drift(self, x: np.ndarray) -> np.ndarray:
        if self.domain == "radial":
            return (self.dimension - 1) / (2.0 * x)
        return np.zeros_like(x)

    def reference_density(self, x) -> np.ndarray:
        if self.domain == "radial":
            return unit_sphere_area(self.dimension) * np.asarray(x, dtype=float) ** (self.dimension - 1)
        return np.ones_like(np.asarray(x, dtype=float))


class PathEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    stderr: float
    n_paths: int
    seed: int
    delta: float
    epsilon: float
    horizon: Optional[float] = None


class GaugeLadder(BaseModel):
    """Truncated gauge E^{mu+}[exp(A^{mu-}_{zeta ^ T})] and the survival part
    E^{mu+}[exp(A^{mu-}_T); T < zeta] along increasing horizons T"""
    model_config = ConfigDict(frozen=True)

    gauge: List[PathEstimate]
    survival: List[PathEstimate]

    @property
    def horizons(self) -> List[float]:
        return [e.horizon for e in self.gauge]

    def growth_rate(self) -> float:
        """Least-squares slope of log(gauge) against T over the upper half of the ladder"""
        tail = self.gauge[len(self.gauge) // 2:]
        if len(tail) < 2:
            return 0.0
        t = np.array([e.horizon for e in tail])
        y = np.log(np.maximum([e.value for e in tail], 1e-300))
        return float(np.polyfit(t, y, 1)[0])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"horizon": self.horizons,
                             "gauge": [e.value for e in self.gauge],
                             "gauge_stderr": [e.stderr for e in self.gauge],
                             "survival": [e.value for e in self.survival],
                             "survival_stderr": [e.stderr for e in self.survival]})


# Experiments
ExperimentName = Literal["remark_example", "threshold_scan", "sphere_example", "random_suite",
                         "mc_validation", "boundary_diag", "custom_chain"]


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    experiment: ExperimentName
    label: str
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    output: Optional[str] = None


class ExperimentReport(BaseModel):
    """One experiment's result table plus the metadata written ahead of it"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    experiment: str
    label: str
    frame: pd.DataFrame
    metadata: Dict[str, Any] = Field(default_factory=dict)


def unit_sphere_area(d: int) -> float:
    """Surface area s_d of the unit sphere in R^d"""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)

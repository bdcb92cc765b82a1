"""NV ground-state spin physics: orientation geometry, Hamiltonian, transition frequencies.

All frequencies are in Hz and fields in tesla. The functions are vectorized over
leading axes of the field argument so the synthesizer can evaluate a whole
time series at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .constants import GAMMA_E, D_NOMINAL
from .errors import InputError

_S2 = np.sqrt(2.0 / 3.0)
_S1 = np.sqrt(1.0 / 3.0)


class Orientation(enum.Enum):
    """The four NV symmetry axes, in canonical (lambda, chi, phi, kappa) order."""

    LAMBDA = "lambda"
    CHI = "chi"
    PHI = "phi"
    KAPPA = "kappa"

    @property
    def axis(self) -> np.ndarray:
        return _AXES[self].copy()

    @property
    def index(self) -> int:
        return ORIENTATIONS.index(self)

    @classmethod
    def parse(cls, value) -> "Orientation":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"l": "lambda", "c": "chi", "p": "phi", "varphi": "phi", "k": "kappa"}
        return cls(aliases.get(key, key))


_AXES = {
    Orientation.KAPPA: np.array([_S2, 0.0, _S1]),
    Orientation.LAMBDA: np.array([0.0, -_S2, -_S1]),
    Orientation.PHI: np.array([0.0, _S2, -_S1]),
    Orientation.CHI: np.array([-_S2, 0.0, _S1]),
}

ORIENTATIONS = (Orientation.LAMBDA, Orientation.CHI, Orientation.PHI, Orientation.KAPPA)

#: Rows are the unit axes in canonical order.
AXES = np.array([_AXES[o] for o in ORIENTATIONS])


class Branch(enum.Enum):
    """Lower (-) or upper (+) frequency transition of an orientation."""

    MINUS = "-"
    PLUS = "+"

    @property
    def sign(self) -> int:
        return 1 if self is Branch.PLUS else -1

    @classmethod
    def parse(cls, value) -> "Branch":
        if isinstance(value, cls):
            return value
        return cls({"minus": "-", "plus": "+", "-1": "-", "1": "+", "+1": "+"}.get(str(value), str(value)))


@dataclass(frozen=True)
class Line:
    """One addressed ODMR line."""

    orientation: Orientation
    branch: Branch

    @classmethod
    def parse(cls, value) -> "Line":
        if isinstance(value, Line):
            return value
        o, b = value
        return cls(Orientation.parse(o), Branch.parse(b))

    def __str__(self):
        return f"{self.orientation.value}{self.branch.value}"


#: (lambda-, chi-, phi+, kappa+), the lines addressed in the demonstration.
DEFAULT_ADDRESSED = (
    Line(Orientation.LAMBDA, Branch.MINUS),
    Line(Orientation.CHI, Branch.MINUS),
    Line(Orientation.PHI, Branch.PLUS),
    Line(Orientation.KAPPA, Branch.PLUS),
)

#: Order of the eight line centers in a measured spectrum at the demonstration bias.
LINE_ORDER = (
    Line(Orientation.KAPPA, Branch.MINUS),
    Line(Orientation.LAMBDA, Branch.MINUS),
    Line(Orientation.PHI, Branch.MINUS),
    Line(Orientation.CHI, Branch.MINUS),
    Line(Orientation.CHI, Branch.PLUS),
    Line(Orientation.PHI, Branch.PLUS),
    Line(Orientation.LAMBDA, Branch.PLUS),
    Line(Orientation.KAPPA, Branch.PLUS),
)


@dataclass(frozen=True)
class PhysicalConstants:
    gyromagnetic_over_h: float = GAMMA_E


@dataclass(frozen=True)
class HamiltonianParams:
    """Static Hamiltonian parameters.

    ``strain_mz`` is ordered (lambda, chi, phi, kappa).
    """

    bias_field: np.ndarray
    zfs_d: float = D_NOMINAL
    strain_mz: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        b = np.asarray(self.bias_field, dtype=float).reshape(3)
        mz = np.asarray(self.strain_mz, dtype=float).reshape(4)
        object.__setattr__(self, "bias_field", b)
        object.__setattr__(self, "strain_mz", mz)
        object.__setattr__(self, "zfs_d", float(self.zfs_d))
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(mz)) and np.isfinite(self.zfs_d)):
            raise InputError("Hamiltonian parameters must be finite")
        if self.zfs_d <= 0:
            raise InputError(f"zfs_d must be positive, got {self.zfs_d}")
        if np.linalg.norm(b) >= 0.1:
            raise InputError("bias field outside model validity (|B| < 0.1 T)")

    @property
    def splittings(self) -> np.ndarray:
        """Per-orientation D + Mz (Hz)."""
        return self.zfs_d + self.strain_mz

    def with_field(self, bias_field) -> "HamiltonianParams":
        return HamiltonianParams(bias_field, self.zfs_d, self.strain_mz)

    def to_dict(self) -> dict:
        return {
            "bias_field_t": self.bias_field.tolist(),
            "zfs_d_hz": self.zfs_d,
            "strain_mz_hz": self.strain_mz.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HamiltonianParams":
        return cls(d["bias_field_t"], d.get("zfs_d_hz", D_NOMINAL), d.get("strain_mz_hz", [0.0] * 4))


@dataclass(frozen=True)
class TransitionSet:
    """Transition frequencies for all four orientations.

    ``lower`` and ``upper`` are in canonical orientation order.
    """

    lower: np.ndarray
    upper: np.ndarray

    def line(self, line: Line) -> float:
        i = line.orientation.index
        return float(self.upper[i] if line.branch is Branch.PLUS else self.lower[i])

    def select(self, lines) -> np.ndarray:
        return np.array([self.line(Line.parse(l)) for l in lines])

    @property
    def frequencies(self) -> np.ndarray:
        """Eight frequencies in spectrum order (kappa-, lambda-, ..., kappa+)."""
        return self.select(LINE_ORDER)


def transverse_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame x and y unit vectors for an NV axis.

    x is the lab z direction projected perpendicular to the axis.
    """
    axis = np.asarray(axis, dtype=float)
    z = np.array([0.0, 0.0, 1.0])
    x = z - (z @ axis) * axis
    x /= np.linalg.norm(x)
    return x, np.cross(axis, x)


def body_frame_field(lab_field, orient) -> np.ndarray:
    """Express a lab-frame field in the NV body frame (z along the NV axis)."""
    n = Orientation.parse(orient).axis
    x, y = transverse_basis(n)
    lab_field = np.asarray(lab_field, dtype=float)
    return np.stack([lab_field @ x, lab_field @ y, lab_field @ n], axis=-1)


def spin1_operators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dimensionless spin-1 matrices in the (|+1>, |0>, |-1>) basis."""
    r = 1.0 / np.sqrt(2.0)
    sx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]], dtype=complex)
    sy = np.array([[0, -1j * r, 0], [1j * r, 0, -1j * r], [0, 1j * r, 0]])
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


def hamiltonian(body_field, splitting: float, gamma: float = GAMMA_E) -> np.ndarray:
    """H/h in Hz for one orientation: (D + Mz) Sz^2 + gamma B.S."""
    sx, sy, sz = spin1_operators()
    bx, by, bz = np.asarray(body_field, dtype=float)
    return splitting * (sz @ sz) + gamma * (bx * sx + by * sy + bz * sz)


def nv_eigenvalues(u, w2, splitting):
    """Sorted eigenvalues (Hz) of (D + Mz) Sz^2 + gamma B.S for one orientation.

    ``u`` is gamma * B_parallel and ``w2`` is (gamma * B_perp)^2, both in Hz
    units, so the result cannot depend on the transverse basis. The
    characteristic polynomial is

        lam^3 - 2 Dp lam^2 + (Dp^2 - u^2 - w2) lam + w2 Dp = 0.

    The trigonometric cubic formula locates all three roots; the isolated one
    (largest gap to its neighbour) is polished by Newton steps and the close
    pair is recovered from the deflated quadratic. Below the level
    anticrossing the lowest root is isolated and the pair comes from its
    discriminant 4 g^2 + 4 Dp r - 3 r^2, which has no cancellation as the
    field goes to zero. Near the anticrossing the top root is isolated and
    the pair comes from its sum 2 Dp - r and product -w2 Dp / r.
    """
    u = np.asarray(u, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    dp = np.broadcast_to(np.asarray(splitting, dtype=float), np.broadcast(u, w2).shape)
    g2 = u * u + w2
    a = -2.0 * dp
    b = (dp - u) * (dp + u) - w2  # factored: exact as |u| -> Dp
    c = w2 * dp

    # Depressed cubic t^3 + P t + Q with lam = t - a/3.
    shift = -a / 3.0
    P = b - a * a / 3.0
    Q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    m = np.sqrt(np.maximum(-P / 3.0, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        arg = np.where(m > 0, 3.0 * Q / (2.0 * P * m), 0.0)
    theta = np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0
    trig = np.sort(
        np.stack([shift + 2.0 * m * np.cos(theta - 2.0 * np.pi * k / 3.0) for k in range(3)], axis=-1), axis=-1
    )
    low_isolated = (trig[..., 1] - trig[..., 0]) >= (trig[..., 2] - trig[..., 1])
    r = np.where(low_isolated, trig[..., 0], trig[..., 2])

    for _ in range(3):
        f = ((r + a) * r + b) * r + c
        fp = (3.0 * r + 2.0 * a) * r + b
        with np.errstate(invalid="ignore", divide="ignore"):
            step = np.where(fp != 0, f / fp, 0.0)
        r = r - np.where(np.abs(step) < 1e-3 * np.maximum(dp, np.sqrt(g2)), step, 0.0)

    total = 2.0 * dp - r
    # lowest root isolated
    root = np.sqrt(np.maximum(4.0 * g2 + 4.0 * dp * r - 3.0 * r * r, 0.0))
    lo_pair = (0.5 * (total - root), 0.5 * (total + root))
    # top root isolated: x^2 - total x + prod = 0, solved without cancellation
    with np.errstate(invalid="ignore", divide="ignore"):
        prod = np.where(r != 0, -c / r, 0.0)
        sq = np.sqrt(np.maximum(total * total - 4.0 * prod, 0.0))
        big = 0.5 * (total + np.where(total >= 0, sq, -sq))
        small = np.where(big != 0, prod / big, 0.0)
    hi_pair = (np.minimum(big, small), np.maximum(big, small))
    return np.where(
        low_isolated[..., None],
        np.stack([r, lo_pair[0], lo_pair[1]], axis=-1),
        np.stack([hi_pair[0], hi_pair[1], r], axis=-1),
    )


def _orientation_eigenvalues(lab_field, splitting, axis, gamma):
    bz = lab_field @ axis
    perp2 = np.maximum(np.sum(lab_field * lab_field, axis=-1) - bz * bz, 0.0)
    return nv_eigenvalues(gamma * bz, gamma * gamma * perp2, splitting)


def transition_pairs(lab_field, splittings, gamma: float = GAMMA_E):
    """Vectorized (lower, upper) transition frequencies.

    ``lab_field`` has shape (..., 3); returns two arrays of shape (..., 4)
    in canonical orientation order.
    """
    lab_field = np.asarray(lab_field, dtype=float)
    splittings = np.asarray(splittings, dtype=float)
    lower, upper = [], []
    for i, o in enumerate(ORIENTATIONS):
        ev = _orientation_eigenvalues(lab_field, splittings[i], _AXES[o], gamma)
        lower.append(ev[..., 1] - ev[..., 0])
        upper.append(ev[..., 2] - ev[..., 0])
    return np.stack(lower, axis=-1), np.stack(upper, axis=-1)


def transition_frequencies(params: HamiltonianParams, gamma: float = GAMMA_E) -> TransitionSet:
    """Transition frequencies of all four orientations at ``params``."""
    if not np.isfinite(gamma):
        raise InputError("gamma must be finite")
    lower, upper = transition_pairs(params.bias_field, params.splittings, gamma)
    return TransitionSet(lower, upper)


def line_frequencies(lab_field, splittings, lines, gamma: float = GAMMA_E) -> np.ndarray:
    """Frequencies of selected lines for fields of shape (..., 3) -> (..., len(lines))."""
    lower, upper = transition_pairs(lab_field, splittings, gamma)
    cols = []
    for line in lines:
        line = Line.parse(line)
        src = upper if line.branch is Branch.PLUS else lower
        cols.append(src[..., line.orientation.index])
    return np.stack(cols, axis=-1)

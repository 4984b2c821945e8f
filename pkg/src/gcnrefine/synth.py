"""Synthetic phantoms and a stand-in for an MC-dropout segmentation model.

The simulated model is a logistic function of the signed distance to a
corrupted version of the ground-truth boundary. Error blobs add (polarity
+1) or carve out (polarity -1) regions of that boundary and are predicted
with a wider logistic, so injected mistakes come out uncertain while the
deep interior and far background stay confident.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .uncertainty import StochasticPassSet, expectation, save_passes
from .volume import Volume, binarize, binary_volume, largest_component, save_volume


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple = (48, 48, 48)
    center: tuple | None = None
    radii: tuple = (14.0, 12.0, 10.0)
    roughness: float = 0.1
    interior_mean: float = 1.0
    exterior_mean: float = 0.0
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        center = self.center if self.center is not None else tuple((d - 1) / 2 for d in dims)
        object.__setattr__(self, "center", tuple(float(c) for c in center))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if len(self.center) != 3 or len(self.radii) != 3 or min(self.radii) <= 0:
            raise ValueError("center and radii need three components, radii positive")
        if self.roughness < 0 or self.roughness >= 1:
            raise ValueError("roughness must lie in [0, 1)")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        reach = np.array(self.radii) * (1 + self.roughness)
        c = np.array(self.center)
        if np.any(c - reach < 0) or np.any(c + reach > np.array(dims) - 1):
            raise ValueError("organ does not fit inside the volume")


@dataclass(frozen=True)
class ErrorBlob:
    center: tuple
    radius: float
    polarity: int  # +1 false positive, -1 false negative

    def __post_init__(self):
        if self.polarity not in (1, -1):
            raise ValueError("blob polarity must be +1 or -1")
        if self.radius <= 0:
            raise ValueError("blob radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class SimSpec:
    T: int = 20
    boundary_softness: float = 0.5
    blob_softness: float = 4.0
    error_blobs: tuple = field(default_factory=tuple)
    pass_noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.boundary_softness <= 0 or self.blob_softness <= 0:
            raise ValueError("softness must be positive")
        if self.pass_noise_std < 0:
            raise ValueError("pass_noise_std must be non-negative")
        blobs = tuple(b if isinstance(b, ErrorBlob) else ErrorBlob(**b) for b in self.error_blobs)
        object.__setattr__(self, "error_blobs", blobs)


def _grid(dims):
    return np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")


def ellipsoid_mask(dims, center, radii) -> np.ndarray:
    x, y, z = _grid(dims)
    r2 = sum(((g - c) / r) ** 2 for g, c, r in zip((x, y, z), center, radii))
    return r2 <= 1.0


def _roughness_field(u, rng, n_terms=4):
    """Smooth random function of the unit direction ``u`` with values in [-1, 1]."""
    freqs = rng.normal(size=(n_terms, 3)) * 2.0
    phases = rng.uniform(0, 2 * np.pi, size=n_terms)
    f = sum(np.cos(np.tensordot(u, w, axes=([0], [0])) + ph) for w, ph in zip(freqs, phases))
    return f / n_terms


def make_phantom(spec: PhantomSpec) -> tuple[Volume, Volume]:
    """Intensity volume and ground-truth mask of a rough ellipsoidal organ."""
    rng = np.random.default_rng(spec.seed)
    x, y, z = _grid(spec.dims)
    rel = [(g - c) / r for g, c, r in zip((x, y, z), spec.center, spec.radii)]
    rho = np.sqrt(sum(q * q for q in rel))
    u = np.stack(rel) / np.maximum(rho, 1e-12)
    bound = 1.0 + spec.roughness * _roughness_field(u, rng)
    gt = largest_component(binary_volume(rho <= bound))

    mean = np.where(gt.mask(), spec.interior_mean, spec.exterior_mean)
    v = mean + spec.noise_std * rng.standard_normal(spec.dims)
    return Volume(v, kind="intensity"), gt


def signed_distance(mask: np.ndarray) -> np.ndarray:
    """Approximate signed distance to the mask boundary, positive inside."""
    if mask.all() or not mask.any():
        big = float(sum(mask.shape))
        return np.full(mask.shape, big if mask.all() else -big)
    d_in = ndimage.distance_transform_edt(mask)
    d_out = ndimage.distance_transform_edt(~mask)
    return np.where(mask, d_in - 0.5, -(d_out - 0.5))


def corrupt(gt: Volume, blobs) -> tuple[np.ndarray, np.ndarray]:
    """Corrupted foreground and the union of blob regions."""
    m = gt.mask().copy()
    region = np.zeros_like(m)
    for b in blobs:
        ball = ellipsoid_mask(gt.dims, b.center, (b.radius,) * 3)
        region |= ball
        if b.polarity > 0:
            m |= ball
        else:
            m &= ~ball
    return m, region


def simulate_passes(gt: Volume, spec: SimSpec) -> tuple[StochasticPassSet, Volume]:
    rng = np.random.default_rng(spec.seed)
    target, region = corrupt(gt, spec.error_blobs)
    sd = signed_distance(target)
    # blob regions get a wider logistic than the true boundary
    region = ndimage.binary_dilation(region, iterations=1)
    softness = np.where(region, spec.blob_softness, spec.boundary_softness)
    base = sd / softness
    passes = []
    for _ in range(spec.T):
        z = base + spec.pass_noise_std * rng.standard_normal(gt.dims)
        p = 1.0 / (1.0 + np.exp(-z))
        passes.append(Volume(p.astype(np.float32), kind="probability"))
    ps = StochasticPassSet(passes)
    return ps, binarize(expectation(ps), 0.5)


def default_blobs(gt: Volume, radius: float = 6.0, seed: int = 0) -> tuple[ErrorBlob, ErrorBlob]:
    """One false-positive blob just outside and one false-negative blob just
    inside the organ boundary, at random directions."""
    rng = np.random.default_rng(seed)
    m = gt.mask()
    sd = signed_distance(m)
    com = np.array(ndimage.center_of_mass(m))
    blobs = []
    dirs = rng.normal(size=(2, 3))
    dirs[1] = -dirs[0] + 0.5 * rng.normal(size=3)  # roughly opposite sides
    for polarity, d in zip((1, -1), dirs):
        d = d / np.linalg.norm(d)
        # walk outward from the centre of mass until reaching the boundary
        t = 0.0
        while True:
            p = np.round(com + t * d).astype(int)
            if np.any(p < 0) or np.any(p >= gt.dims) or not m[tuple(p)]:
                break
            t += 0.5
        offset = 0.5 * radius if polarity > 0 else -0.5 * radius
        c = com + (t + offset) * d
        blobs.append(ErrorBlob(tuple(c), radius, polarity))
    return tuple(blobs)


# ---------------------------------------------------------- case directory


def write_case(directory, spec: PhantomSpec, sim: SimSpec) -> dict:
    """Generate a phantom case and write the full case directory layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    v, gt = make_phantom(spec)
    passes, y = simulate_passes(gt, sim)
    save_volume(v, directory / "volume.f32")
    save_volume(gt, directory / "gt.u8")
    save_volume(y, directory / "prediction.u8")
    save_passes(passes, directory)
    echo = {"phantom": asdict(spec), "sim": asdict(sim)}
    with open(directory / "spec.json", "w") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return echo


def specs_from_dict(d: dict) -> tuple[PhantomSpec, SimSpec]:
    """Parse a case spec; ``sim.error_blobs = "auto"`` places one FP and one FN blob."""
    phantom = PhantomSpec(**d.get("phantom", {}))
    sim_d = dict(d.get("sim", {}))
    blobs = sim_d.get("error_blobs", ())
    if isinstance(blobs, dict) and blobs.get("auto"):
        _, gt = make_phantom(phantom)
        sim_d["error_blobs"] = default_blobs(gt, float(blobs.get("radius", 6.0)), int(blobs.get("seed", 0)))
    elif blobs == "auto":
        _, gt = make_phantom(phantom)
        sim_d["error_blobs"] = default_blobs(gt)
    return phantom, SimSpec(**sim_d)

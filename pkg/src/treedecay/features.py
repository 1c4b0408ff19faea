"""Handcrafted image features for the forest classifier.

The global vector concatenates Haralick texture (13), an HSV color histogram
(bins**3) and log-compressed Hu moments (7).  HOG and Harris summaries are
available as optional blocks for importance ranking.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

HARALICK_NAMES = (
    "asm", "contrast", "correlation", "sum_of_squares_variance", "idm", "sum_average",
    "sum_variance", "sum_entropy", "entropy", "difference_variance", "difference_entropy",
    "imc1", "imc2",
)
BLOCK_ORDER = ("haralick", "hsv", "hu", "hog", "harris")
REQUIRED_BLOCKS = ("haralick", "hsv", "hu")
# unit offsets (dx, dy) for 0, 45, 90 and 135 degrees; rows grow downwards
DIRECTIONS = ((1, 0), (1, -1), (0, -1), (-1, -1))


def _pixels(image):
    return getattr(image, "pixels", image)


def to_gray(image) -> np.ndarray:
    """Mean of the three channels."""
    px = np.asarray(_pixels(image), dtype=np.float64)
    return px.mean(axis=2)


# -- Hu moments -----------------------------------------------------------------

def central_moments(gray) -> dict:
    """Central moments mu_pq for p + q <= 3 about the intensity centroid."""
    g = np.asarray(gray, dtype=np.float64)
    m00 = g.sum()
    if m00 <= 0:
        raise ValueError("image has zero mass")
    rows, cols = np.indices(g.shape, dtype=np.float64)
    xc = (cols * g).sum() / m00
    yc = (rows * g).sum() / m00
    x = cols - xc
    y = rows - yc
    mu = {}
    for p in range(4):
        for q in range(4 - p):
            mu[p, q] = (x ** p * y ** q * g).sum()
    mu[0, 0] = m00
    return mu


def hu_invariants(gray) -> np.ndarray:
    """The seven Hu invariants from scale-normalized central moments."""
    mu = central_moments(gray)
    m00 = mu[0, 0]
    eta = {k: v / m00 ** (1 + (k[0] + k[1]) / 2) for k, v in mu.items()}
    n20, n02, n11 = eta[2, 0], eta[0, 2], eta[1, 1]
    n30, n03, n21, n12 = eta[3, 0], eta[0, 3], eta[2, 1], eta[1, 2]
    a, b = n30 + n12, n21 + n03
    return np.array([
        n20 + n02,
        (n20 - n02) ** 2 + 4 * n11 ** 2,
        (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2,
        a ** 2 + b ** 2,
        (n30 - 3 * n12) * a * (a ** 2 - 3 * b ** 2) + (3 * n21 - n03) * b * (3 * a ** 2 - b ** 2),
        (n20 - n02) * (a ** 2 - b ** 2) + 4 * n11 * a * b,
        (3 * n21 - n03) * a * (a ** 2 - 3 * b ** 2) - (n30 - 3 * n12) * b * (3 * a ** 2 - b ** 2),
    ])


def hu_moments(gray) -> np.ndarray:
    """Hu invariants compressed as ``sign(phi) * log10(|phi| + 1e-30)``."""
    phi = hu_invariants(gray)
    return np.sign(phi) * np.log10(np.abs(phi) + 1e-30)


# -- GLCM / Haralick ---------------------------------------------------------

def quantize(gray, levels: int) -> np.ndarray:
    g = np.asarray(gray, dtype=np.float64)
    return np.clip(np.floor(g * levels), 0, levels - 1).astype(np.int64)


def glcm(gray, levels: int = 16, offset=(1, 0)) -> np.ndarray:
    """Symmetric, normalized co-occurrence matrix at pixel offset ``(dx, dy)``."""
    if levels < 2:
        raise ValueError("levels must be at least 2")
    q = quantize(gray, levels)
    dx, dy = offset
    h, w = q.shape
    if abs(dx) >= w or abs(dy) >= h:
        raise ValueError(f"image {w}x{h} is smaller than offset {offset}")
    src = q[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    dst = q[max(0, dy):h - max(0, -dy), max(0, dx):w - max(0, -dx)]
    counts = np.bincount((src * levels + dst).ravel(), minlength=levels * levels)
    m = counts.reshape(levels, levels).astype(np.float64)
    m = m + m.T
    return m / m.sum()


def _entropy(p):
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def haralick_from_glcm(p) -> np.ndarray:
    """Thirteen Haralick statistics of one normalized GLCM (log base 2)."""
    g = p.shape[0]
    i, j = np.indices(p.shape, dtype=np.float64)
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    levels = np.arange(g, dtype=np.float64)
    ux, uy = (levels * px).sum(), (levels * py).sum()
    vx = ((levels - ux) ** 2 * px).sum()
    vy = ((levels - uy) ** 2 * py).sum()

    psum = np.bincount((i + j).astype(np.int64).ravel(), weights=p.ravel(), minlength=2 * g - 1)
    pdiff = np.bincount(np.abs(i - j).astype(np.int64).ravel(), weights=p.ravel(), minlength=g)
    ks = np.arange(2 * g - 1, dtype=np.float64)
    kd = np.arange(g, dtype=np.float64)

    asm = (p ** 2).sum()
    contrast = (kd ** 2 * pdiff).sum()
    sd = np.sqrt(vx * vy)
    correlation = ((i * j * p).sum() - ux * uy) / sd if sd > 0 else 0.0
    ss_variance = ((i - ux) ** 2 * p).sum()
    idm = (p / (1.0 + (i - j) ** 2)).sum()
    sum_avg = (ks * psum).sum()
    sum_var = ((ks - sum_avg) ** 2 * psum).sum()
    sum_ent = _entropy(psum)
    ent = _entropy(p)
    diff_mean = (kd * pdiff).sum()
    diff_var = ((kd - diff_mean) ** 2 * pdiff).sum()
    diff_ent = _entropy(pdiff)

    hx, hy = _entropy(px), _entropy(py)
    outer = np.outer(px, py)
    nz = p > 0
    hxy1 = float(-(p[nz] * np.log2(outer[nz])).sum())
    onz = outer > 0
    hxy2 = float(-(outer[onz] * np.log2(outer[onz])).sum())
    denom = max(hx, hy)
    imc1 = (ent - hxy1) / denom if denom > 0 else 0.0
    imc2 = float(np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * (hxy2 - ent)))))
    return np.array([asm, contrast, correlation, ss_variance, idm, sum_avg, sum_var, sum_ent,
                     ent, diff_var, diff_ent, imc1, imc2])


def haralick_features(image, levels: int = 16) -> np.ndarray:
    """Haralick statistics averaged over the four unit-distance directions."""
    px = _pixels(image)
    gray = to_gray(px) if np.ndim(px) == 3 else np.asarray(px, dtype=np.float64)
    if gray.shape[0] < 2 or gray.shape[1] < 2:
        raise ValueError("image must be at least 2x2")
    return np.mean([haralick_from_glcm(glcm(gray, levels, d)) for d in DIRECTIONS], axis=0)


# -- color -----------------------------------------------------------------------

def rgb_to_hsv(rgb) -> np.ndarray:
    """Standard conversion; H in degrees [0, 360), S and V in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    safe = np.where(c > 0, c, 1.0)
    h = np.where(v == r, ((g - b) / safe) % 6.0,
                 np.where(v == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(c > 0, h * 60.0, 0.0) % 360.0
    return np.stack([h, s, v], axis=-1)


def hsv_histogram(image, bins: int = 8) -> np.ndarray:
    """L1-normalized joint HSV histogram of the non-background (V > 0) pixels.

    Channels are read as an RGB triple in (nir, r, g) order.  Bin index is
    ``(h_bin * bins + s_bin) * bins + v_bin``.  An all-background image gives
    the zero vector.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    hsv = rgb_to_hsv(np.asarray(_pixels(image)).reshape(-1, 3))
    hsv = hsv[hsv[:, 2] > 0]
    hist = np.zeros(bins ** 3)
    if not len(hsv):
        return hist
    hb = np.minimum((hsv[:, 0] / 360.0 * bins).astype(np.int64), bins - 1)
    sb = np.minimum((hsv[:, 1] * bins).astype(np.int64), bins - 1)
    vb = np.minimum((hsv[:, 2] * bins).astype(np.int64), bins - 1)
    hist += np.bincount((hb * bins + sb) * bins + vb, minlength=bins ** 3)
    return hist / hist.sum()


# -- optional blocks --------------------------------------------------------

def _central_gradients(gray):
    g = np.asarray(gray, dtype=np.float64)
    gx = np.zeros_like(g)
    gy = np.zeros_like(g)
    gx[:, 1:-1] = g[:, 2:] - g[:, :-2]
    gy[1:-1, :] = g[2:, :] - g[:-2, :]
    return gx, gy


def hog_descriptor(image, cell=8, block=2, nbins=9, eps=1e-5) -> np.ndarray:
    """HOG with unsigned orientation bins, hard binning and L2 block norms."""
    px = _pixels(image)
    gray = to_gray(px) if np.ndim(px) == 3 else np.asarray(px, dtype=np.float64)
    gx, gy = _central_gradients(gray)
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    b = np.minimum((ang / (180.0 / nbins)).astype(np.int64), nbins - 1)
    ch, cw = gray.shape[0] // cell, gray.shape[1] // cell
    if ch < block or cw < block:
        return np.zeros(0)
    mag = mag[:ch * cell, :cw * cell]
    b = b[:ch * cell, :cw * cell]
    cell_id = (np.arange(ch * cell)[:, None] // cell) * cw + np.arange(cw * cell)[None, :] // cell
    hist = np.bincount((cell_id * nbins + b).ravel(), weights=mag.ravel(),
                       minlength=ch * cw * nbins).reshape(ch, cw, nbins)
    out = []
    for r in range(ch - block + 1):
        for c in range(cw - block + 1):
            v = hist[r:r + block, c:c + block].ravel()
            out.append(v / np.sqrt((v ** 2).sum() + eps ** 2))
    return np.concatenate(out)


def harris_response(gray, k=0.04) -> np.ndarray:
    gx, gy = _central_gradients(gray)
    win = np.ones((3, 3))
    sxx = ndimage.correlate(gx * gx, win, mode="constant")
    syy = ndimage.correlate(gy * gy, win, mode="constant")
    sxy = ndimage.correlate(gx * gy, win, mode="constant")
    return sxx * syy - sxy ** 2 - k * (sxx + syy) ** 2


def harris_summary(image, k=0.04, rel_threshold=0.01) -> np.ndarray:
    """(corner count, mean positive response, max response).

    Corners are pixels equal to the maximum of their 3x3 neighborhood with a
    response above ``rel_threshold`` times the image maximum.
    """
    px = _pixels(image)
    gray = to_gray(px) if np.ndim(px) == 3 else np.asarray(px, dtype=np.float64)
    resp = harris_response(gray, k)
    top = resp.max()
    if top <= 0:
        return np.zeros(3)
    peaks = (resp == ndimage.maximum_filter(resp, size=3, mode="constant", cval=-np.inf))
    peaks &= resp > rel_threshold * top
    pos = resp[resp > 0]
    return np.array([float(peaks.sum()), float(pos.mean()), float(top)])


# -- assembly -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Named feature blocks in the fixed order haralick, hsv, hu[, hog, harris]."""

    blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        names = list(self.blocks)
        if names[:3] != list(REQUIRED_BLOCKS):
            raise ValueError(f"blocks must start with {REQUIRED_BLOCKS}, got {tuple(names)}")
        expected = [b for b in BLOCK_ORDER if b in self.blocks]
        if names != expected:
            raise ValueError(f"blocks out of order: {tuple(names)}")
        if len(self.blocks["haralick"]) != 13 or len(self.blocks["hu"]) != 7:
            raise ValueError("haralick needs 13 values and hu 7")
        if "harris" in self.blocks and len(self.blocks["harris"]) != 3:
            raise ValueError("harris needs 3 values")
        for name, v in self.blocks.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite values in block {name}")

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([np.asarray(v, dtype=np.float64) for v in self.blocks.values()])

    @property
    def names(self) -> list[str]:
        return feature_names({k: len(v) for k, v in self.blocks.items()})

    def __len__(self):
        return sum(len(v) for v in self.blocks.values())


def feature_names(block_sizes: dict) -> list[str]:
    names = []
    for block, size in block_sizes.items():
        if block == "haralick":
            names += [f"haralick_{n}" for n in HARALICK_NAMES]
        else:
            width = len(str(size - 1))
            names += [f"{block}_{i:0{max(width, 1)}d}" for i in range(size)]
    return names


def block_of(name: str) -> str:
    return name.split("_", 1)[0]


def global_feature_vector(image, levels=16, hsv_bins=8, include_optional=False) -> FeatureVector:
    """Haralick || HSV || Hu (|| HOG || Harris when ``include_optional``)."""
    px = np.asarray(_pixels(image), dtype=np.float64)
    gray = to_gray(px)
    hu = hu_moments(gray) if gray.sum() > 0 else np.zeros(7)
    blocks = {"haralick": haralick_features(gray, levels),
              "hsv": hsv_histogram(px, hsv_bins),
              "hu": hu}
    if include_optional:
        blocks["hog"] = hog_descriptor(gray)
        blocks["harris"] = harris_summary(gray)
    return FeatureVector(blocks)


class ViewFeatureExtractor(BaseEstimator, TransformerMixin):
    """Map (n, height, width, 3) view images to global feature vectors."""

    def __init__(self, levels=16, hsv_bins=8, include_optional=False):
        self.levels = levels
        self.hsv_bins = hsv_bins
        self.include_optional = include_optional

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        rows = [global_feature_vector(img, self.levels, self.hsv_bins, self.include_optional).values
                for img in X]
        return np.array(rows).reshape(len(rows), -1)

    def get_feature_names_out(self, input_features=None):
        sizes = {"haralick": 13, "hsv": self.hsv_bins ** 3, "hu": 7}
        if self.include_optional:
            raise ValueError("optional block sizes depend on the image size; "
                             "use FeatureVector.names")
        return np.array(feature_names(sizes), dtype=object)


# -- PCA ----------------------------------------------------------------------

def pca_2d(vectors):
    """Project onto the two leading principal components.

    Returns ``(components, projected, explained_variance)``: components is
    (2, d) with orthonormal rows whose largest-magnitude entry is positive,
    projected is (n, 2) for the mean-centered data, and the variances are the
    two largest eigenvalues of the sample covariance (ddof = 1) in descending
    order.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need at least 2 vectors of dimension >= 2")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (len(x) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:2]
    evals, comps = evals[order], evecs[:, order].T
    if evals[0] <= 0:
        raise ValueError("data has zero variance")
    for k in range(2):
        if comps[k, np.argmax(np.abs(comps[k]))] < 0:
            comps[k] = -comps[k]
    return comps, centered @ comps.T, np.maximum(evals, 0.0)


def feature_csv(rows, names) -> str:
    """``rows`` of (sample id, tree id, azimuth, label, values)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "tree_id", "azimuth", "label"] + list(names))
    for sample_id, tree_id, az, label, values in rows:
        w.writerow([sample_id, tree_id, int(az), "" if label is None else label]
                   + [repr(float(v)) for v in values])
    return buf.getvalue()

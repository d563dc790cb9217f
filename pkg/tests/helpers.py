"""Oracles and synthetic tasks shared by the unit and acceptance suites."""
import math

import numpy as np
from scipy import ndimage
from scipy.optimize import linprog

from stereosal.fusion import FeatureStack, predict_map, sample_training
from stereosal.forest import ForestParams, train_forest
from stereosal.imaging import normalize01


def smooth_field(rng, shape=(48, 48), sigma=3.0):
    return normalize01(ndimage.gaussian_filter(rng.random(shape), sigma))


def nonlinear_fusion_trial(seed: int, shape=(48, 48), n_frames: int = 4):
    """Forest vs average fusion when the target is the product of two maps.

    Returns ``(pcc_forest, pcc_average)`` on a held-out frame.
    """
    rng = np.random.default_rng(seed)
    names = ("a", "b")

    def frame(i):
        a, b = smooth_field(rng, shape), smooth_field(rng, shape)
        return FeatureStack(str(i), names, np.stack([a, b])), a * b

    train = [frame(i) for i in range(n_frames)]
    ts = sample_training({"v": train}, n_frames, 1500, seed, names)
    model = train_forest(ts.X, ts.y, names, ForestParams(seed=seed))
    stack, target = frame(n_frames)
    pred = predict_map(model, stack)
    avg = stack.maps.mean(axis=0)
    pcc = lambda m: float(np.corrcoef(m.ravel(), target.ravel())[0, 1])
    return pcc(pred), pcc(avg)


def brute_center_surround(b, fovea, lab):
    h, w = b.shape
    per_pixel = np.zeros_like(b)
    for i in range(h):
        for j in range(w):
            s = 0.0
            for (dy, dx), wt in zip(fovea.offsets, fovea.weights):
                if dy == 0 and dx == 0:
                    continue
                yy, xx = np.clip(i + dy, 0, h - 1), np.clip(j + dx, 0, w - 1)
                s += abs(b[i, j] - b[yy, xx]) * wt
            per_pixel[i, j] = s
    out = np.zeros_like(b)
    for k in range(lab.k):
        m = lab.labels == k
        out[m] = per_pixel[m].mean()
    return out


def lp_emd(p, q):
    """Transportation LP solved directly: the oracle for the fast solver."""
    p, q = p.ravel() / p.sum(), q.ravel() / q.sum()
    n = p.size
    side = int(round(math.sqrt(n)))
    yy, xx = np.divmod(np.arange(n), side)
    cost = np.hypot(yy[:, None] - yy[None, :], xx[:, None] - xx[None, :])
    a_eq = []
    for i in range(n):
        row = np.zeros((n, n))
        row[i, :] = 1
        a_eq.append(row.ravel())
    for j in range(n):
        col = np.zeros((n, n))
        col[:, j] = 1
        a_eq.append(col.ravel())
    res = linprog(cost.ravel(), A_eq=np.array(a_eq), b_eq=np.concatenate([p, q]), bounds=(0, None),
                  method="highs-ds")
    assert res.success
    return res.fun


def centre_biased_points(rng, n, shape, spread=0.12):
    h, w = shape
    x = np.clip(rng.normal((w - 1) / 2, spread * w, n), 0, w - 1)
    y = np.clip(rng.normal((h - 1) / 2, spread * h, n), 0, h - 1)
    return np.stack([x, y], 1)


def signal_task(seed, n=5000, p=24, signal=3):
    r = np.random.default_rng(seed)
    X = r.random((n, p))
    return X, X[:, signal].copy()

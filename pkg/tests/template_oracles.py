import numpy as np


def brute_mei(masks, tau):
    """Pixel-by-pixel: was the pixel active in any of the last tau masks?"""
    t_len, h, w = masks.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = float(any(masks[t, y, x] for t in range(t_len - tau, t_len)))
    return out


def brute_mhi(masks, tau, decay):
    t_len, h, w = masks.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            val = 0.0
            for t in range(t_len):
                val = float(tau) if masks[t, y, x] else max(0.0, val - decay)
            out[y, x] = val
    return out


def random_masks(seed, shape=(10, 8, 8), p=0.3):
    return np.random.default_rng(seed).random(shape) < p

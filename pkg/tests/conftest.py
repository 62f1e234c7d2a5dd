import numpy as np

FD_STEP = 1e-6


def numeric_grad(f, arr: np.ndarray, h: float = FD_STEP, coords=None) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. ``arr`` (perturbed in place).

    With ``coords`` only those flat indices are evaluated; the rest stay zero.
    """
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size) if coords is None else coords:
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def rel_error(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def away_from_zero(rng, shape, margin=0.05):
    """Gaussian samples pushed at least ``margin`` away from 0 (keeps ReLU off its kink)."""
    x = rng.standard_normal(shape)
    return np.where(x >= 0, x + margin, x - margin)

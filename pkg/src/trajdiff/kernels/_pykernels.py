"""Pure-Python reference implementations of the numeric kernels."""
import math

import numpy as np


def displacement_errors(pred, truth):
    """Pointwise Euclidean distances, (..., N, 2) -> (..., N)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return np.hypot(pred[..., 0] - truth[..., 0], pred[..., 1] - truth[..., 1])


def _project(path, arc, x, y, start, reach):
    best_d, best_s, best_j = math.inf, 0.0, start
    for j in range(start, path.shape[0] - 1):
        if j > start and arc[j] > reach:
            break
        ax, ay = path[j, 0], path[j, 1]
        sx, sy = path[j + 1, 0] - ax, path[j + 1, 1] - ay
        seg2 = sx * sx + sy * sy
        u = 0.0 if seg2 == 0.0 else min(1.0, max(0.0, ((x - ax) * sx + (y - ay) * sy) / seg2))
        px, py = ax + u * sx - x, ay + u * sy - y
        d = px * px + py * py
        if d < best_d:
            best_d, best_s, best_j = d, arc[j] + u * math.sqrt(seg2), j
    return best_s, best_j


def _unicycle(x, y, psi, v, c, dt):
    k1x, k1y, k1p = v * math.cos(psi), v * math.sin(psi), v * c
    x2, y2, p2 = x + dt * k1x, y + dt * k1y, psi + dt * k1p
    k2x, k2y, k2p = v * math.cos(p2), v * math.sin(p2), v * c
    return x + 0.5 * dt * (k1x + k2x), y + 0.5 * dt * (k1y + k2y), psi + 0.5 * dt * (k1p + k2p)


def pursuit_rollout(refs, init, dt, base, gain, exponent):
    """Track each reference (A, N, 2) from ``init`` (A, 3) = (x, y, psi).

    Returns (positions (A, N, 2), curvatures (A, N)).
    """
    refs = np.asarray(refs, dtype=np.float64)
    init = np.asarray(init, dtype=np.float64)
    n_agents, n = refs.shape[0], refs.shape[1]
    out = np.empty((n_agents, n, 2))
    curv = np.empty((n_agents, n))
    for a in range(n_agents):
        x, y, psi = init[a]
        path = np.empty((n + 1, 2))
        path[0] = (x, y)
        path[1:] = refs[a]
        arc = np.zeros(n + 1)
        for i in range(n):
            arc[i + 1] = arc[i] + math.hypot(path[i + 1, 0] - path[i, 0], path[i + 1, 1] - path[i, 1])
        seg, s_proj = 0, 0.0
        for k in range(n):
            v = (arc[k + 1] - arc[k]) / dt
            look = base + gain * abs(v)
            # bounded search so self-intersecting references do not skip ahead
            s_proj, seg = _project(path, arc, x, y, seg, s_proj + 2.0 * look + abs(v) * dt)
            target = n
            for i in range(n + 1):
                if arc[i] >= s_proj + look:
                    target = i
                    break
            dx, dy = path[target, 0] - x, path[target, 1] - y
            if dx * dx + dy * dy < 1e-24:
                c = 0.0
            else:
                c = 2.0 * (-dx * math.sin(psi) + dy * math.cos(psi)) / look ** exponent
            x, y, psi = _unicycle(x, y, psi, v, c, dt)
            out[a, k] = (x, y)
            curv[a, k] = c
    return out, curv

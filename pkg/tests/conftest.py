import numpy as np
import pytest
import torch

from trajdiff.batching import FeatureStats, collate
from trajdiff.predictor import DiffusionPredictor, ModelConfig
from trajdiff.scene import generate_synthetic_scenes


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def straight_scenes():
    return generate_synthetic_scenes("straight_lane_change", 8, 3)


@pytest.fixture(scope="session")
def roundabout_scenes():
    return generate_synthetic_scenes("circular_roundabout", 6, 5)


def make_model(samples, profile="highway", dtype=torch.float32, seed=0, **kw):
    torch.manual_seed(seed)
    stats = FeatureStats.fit(samples)
    cfg = ModelConfig(profile=profile, **{"hidden": 16, "lane_hidden": 16, "attn_heads": 2, **kw})
    return DiffusionPredictor(cfg, stats).to(dtype)


def make_batch(samples, model, dtype=torch.float32):
    return collate(samples, model.stats, dtype)


def random_xt(batch, seed=0):
    g = torch.Generator().manual_seed(seed)
    return batch.anchor.unsqueeze(1) + torch.randn(batch.future.shape, generator=g, dtype=batch.dtype)


def rigid(points, angle, shift):
    c, s = np.cos(angle), np.sin(angle)
    return np.asarray(points) @ np.array([[c, s], [-s, c]]) + np.asarray(shift)


def permute_batch(batch, perm):
    """Reorder the agents of a collated batch; ``perm[i]`` is the old index of new agent i."""
    from dataclasses import replace
    perm = torch.as_tensor(perm)
    inv = torch.empty_like(perm)
    inv[perm] = torch.arange(len(perm))
    edges = [(inv[ei], ea) for ei, ea in batch.hist_edges]
    out = replace(
        batch,
        hist_feat=batch.hist_feat[:, perm],
        hist_present=batch.hist_present[:, perm],
        hist_edges=edges,
        anchor=batch.anchor[perm],
        init_vel=batch.init_vel[perm],
        classes=batch.classes[perm],
        sample_index=batch.sample_index[perm],
        future=batch.future[perm],
        target_mask=batch.target_mask[perm],
    )
    if batch.lane_env is not None:
        n_env = batch.lane_env.shape[0]
        ei = batch.lane_edge_index.clone()
        is_agent = ei >= n_env
        ei[is_agent] = inv[ei[is_agent] - n_env] + n_env
        out = replace(out, lane_edge_index=ei, lane_nbr=batch.lane_nbr[perm])
    return out


ACCEPTANCE = []


class _Criterion:
    def __init__(self, number, title, budget, spent=0.0):
        # ``spent``: seconds already used by shared setup counted against the budget
        self.number, self.title, self.budget, self.spent = number, title, budget, spent

    def __enter__(self):
        import time
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time
        elapsed = time.perf_counter() - self._t0 + self.spent
        over = elapsed > self.budget
        ok = exc_type is None and not over
        note = "" if exc_type is None else f"  ({exc_type.__name__}: {str(exc).splitlines()[0][:100]})"
        if exc_type is None and over:
            note = "  (over time budget)"
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.number:>2}: {self.title} ({elapsed:.1f}s / {self.budget:.0f}s){note}"
        ACCEPTANCE.append((self.number, line))
        print(line, flush=True)
        if exc_type is None and over:
            raise AssertionError(f"criterion {self.number} took {elapsed:.1f}s, budget {self.budget}s")
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)

"""Shared fixture builders for the test suite.

Planted fixtures use orthogonal one-hot class directions so that the
exact affinity values (0 off-block, 1 on-block) are known in closed form
regardless of the exponent.
"""

import numpy as np

from specseg.affinity import AffinityGraph
from specseg.tensorio import FeatureMap


def orthogonal_fm(layout: np.ndarray, dim: int = 0, noise: float = 0.0,
                  seed: int = 0) -> FeatureMap:
    """Feature map whose patches point along one axis per layout class."""
    layout = np.asarray(layout, dtype=np.int64)
    classes = int(layout.max()) + 1
    if dim == 0:
        dim = max(classes, 4)
    assert dim >= classes
    h, w = layout.shape
    data = np.zeros((h, w, dim), dtype=np.float64)
    for c in range(classes):
        data[layout == c, c] = 1.0
    if noise:
        rng = np.random.default_rng(seed)
        data = data + noise * rng.normal(size=data.shape)
    return FeatureMap(data.astype(np.float32))


def block_layout(h: int, w: int, blocks: int) -> np.ndarray:
    """Split the width into `blocks` contiguous vertical stripes."""
    layout = np.zeros((h, w), dtype=np.int64)
    bounds = (np.arange(blocks + 1) * w) // blocks
    for c in range(blocks):
        layout[:, bounds[c]:bounds[c + 1]] = c
    return layout


def random_fm(h: int, w: int, dim: int, seed: int = 0) -> FeatureMap:
    rng = np.random.default_rng(seed)
    return FeatureMap(rng.normal(size=(h, w, dim)).astype(np.float32))


def random_affinity_graph(n: int, seed: int = 0) -> AffinityGraph:
    """Random symmetric graph with weights in (0, 1], unit self-loops."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.05, 1.0, size=(n, n))
    w = (w + w.T) * 0.5
    np.fill_diagonal(w, 1.0)
    return AffinityGraph(weights=w, degrees=w.sum(axis=1),
                         node_ids=np.arange(n, dtype=np.int64))


def pytest_terminal_summary(terminalreporter):
    """Replay the acceptance verdicts after the run so the gate's one-line
    pass/fail record survives pytest's capture of passing tests."""
    import sys

    mod = sys.modules.get("test_acceptance")
    passed = list(getattr(mod, "_VERDICTS", ())) if mod else []
    failed = [r.nodeid.split("::")[-1]
              for r in terminalreporter.stats.get("failed", ())
              if "test_acceptance" in r.nodeid]
    if not passed and not failed:
        return
    terminalreporter.section("acceptance gate")
    for line in passed:
        terminalreporter.write_line(line)
    for name in failed:
        terminalreporter.write_line(f"[FAIL] {name}")

import numpy as np
import pytest

from mobicast import data as dt
from mobicast import train as tr


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """Relative error with a floor that absorbs finite-difference noise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum.reduce([np.abs(a), np.abs(b), np.full(a.shape, floor)])
    return float((np.abs(a - b) / denom).max())


def central_diff(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function over every entry of x."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


@pytest.fixture(scope="session")
def tiny_panel() -> dt.PanelDataset:
    """Small, fast synthetic world shared by data/model/train tests."""
    return dt.synth_generate(dt.SynthConfig(n_regions=4, days=80, seed=5))


@pytest.fixture(scope="session")
def tiny_fit(tiny_panel):
    """A cheap trained model (small dims, few epochs) for wiring-level tests."""
    from mobicast import model as md

    cfg = tr.TrainConfig(epochs=8, window=7, seed=1)
    mcfg = md.ModelConfig(
        n_regions=tiny_panel.n_regions,
        window=7,
        gcn_dims=(8, 8),
        hidden_case=8,
        hidden_mob=8,
        attn_dim=4,
        adj_hidden=(8, 8),
        dec_hidden=8,
    )
    return tr.fit(tiny_panel, cfg, mcfg)

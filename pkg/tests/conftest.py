import numpy as np
import pytest
import torch

from alise.encoder import Alise, EncoderConfig

TOY = EncoderConfig(in_channels=3, d_model=8, n_q=2, unet_depth=1, n_layers=1, n_head=2, d_hidden=16)


def fd_grad(fn, tensor, idx, step=1e-4):
    """Central finite differences of scalar ``fn()`` w.r.t. ``tensor.flatten()[idx]``."""
    flat = tensor.data.view(-1)
    out = []
    for i in idx:
        old = flat[i].item()
        flat[i] = old + step
        up = fn().item()
        flat[i] = old - step
        down = fn().item()
        flat[i] = old
        out.append((up - down) / (2 * step))
    return np.array(out)


def check_grad(fn, tensors, max_entries=12, seed=0, rtol=1e-3, atol=1e-8):
    """Compare autograd with finite differences on up to ``max_entries`` entries per tensor.

    Tensors whose sampled gradient is zero by construction (both norms below
    ``atol``) are compared absolutely instead of relatively.
    """
    rng = np.random.default_rng(seed)
    for t in tensors:
        if t.grad is not None:
            t.grad = None
    fn().backward()
    worst = 0.0
    for t in tensors:
        n = t.numel()
        idx = rng.choice(n, min(n, max_entries), replace=False)
        analytic = t.grad.view(-1)[idx].numpy()
        numeric = fd_grad(fn, t, idx)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        if scale < atol:
            continue
        err = np.linalg.norm(analytic - numeric) / scale
        worst = max(worst, err)
        assert err <= rtol, f"relative gradient error {err:.2e} on tensor of shape {tuple(t.shape)}"
    return worst


@pytest.fixture
def toy_encoder():
    torch.manual_seed(0)
    model = Alise(TOY).double()
    with torch.no_grad():
        # larger queries so the projector softmax is far from uniform
        model.projector.queries.normal_(0, 0.5)
        model.projector.q_proj.weight.normal_(0, 0.5)
    return model


@pytest.fixture
def toy_batch():
    g = torch.Generator().manual_seed(1)
    x = torch.randn(2, 6, 3, 4, 4, generator=g, dtype=torch.float64)
    delta = torch.tensor([[1200, 1210, 1225, 1250, 1300, 1320], [1500, 1503, 1530, 1544, 1580, 1600]])
    return x, delta


# -- acceptance reporting -----------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def accept():
    """``accept(n, title, ok, detail)`` records one criterion line for the summary."""

    def record(n, title, ok, detail=""):
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

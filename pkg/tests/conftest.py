import numpy as np
import pytest
import torch


def central_difference(fn, tensor: torch.Tensor, indices, eps: float = 1e-6) -> np.ndarray:
    """Central-difference derivative of scalar ``fn()`` w.r.t. ``tensor.view(-1)[i]``."""
    flat = tensor.data.view(-1)
    out = np.empty(len(indices))
    with torch.no_grad():
        for k, i in enumerate(indices):
            orig = flat[i].item()
            flat[i] = orig + eps
            plus = fn().item()
            flat[i] = orig - eps
            minus = fn().item()
            flat[i] = orig
            out[k] = (plus - minus) / (2 * eps)
    return out


def relative_error(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-300))


@pytest.fixture
def float64():
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)


TINY_MODEL = dict(channels=4, pyramid_levels=1, wt_levels=1, n1=1, n2=1, low_width=8, mask_width=8)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    from lpwtnet.channel import ArrayGeometry, ClusterConfig
    from lpwtnet.scf import GeneratorConfig, GridSpec, generate_dataset
    config = GeneratorConfig(grid=GridSpec(8.0, 8), array=ArrayGeometry(2, 2), clusters=ClusterConfig(2), slots=16)
    return generate_dataset(tmp_path_factory.mktemp("data") / "tiny", config, count=20, seed=0)


# acceptance verdicts, printed together at the end of the session
VERDICTS: dict = {}


def record_verdict(number: int, ok: bool, detail: str):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    VERDICTS[number] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])

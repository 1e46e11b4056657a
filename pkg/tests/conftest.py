import numpy as np
import pytest

from ris_icsc.beamforming import update_decoders_and_weights, update_radar_rxs
from ris_icsc.channel import realize_scenario
from ris_icsc.config import config_from_dict, load_config
from ris_icsc.metrics import BeamformingState


def small_config(seed=0, **overrides):
    doc = {"K": 2, "M": 4, "N": 2, "L": 8, "d": 2}
    doc.update(overrides)
    return config_from_dict(doc, seed=seed)


def random_state(ch, cfg, rng, power_fraction=1.0):
    """Random precoders at a fraction of the budget, random phases, fitted filters."""
    K, N, d = ch.K, ch.N, cfg.d
    F = rng.standard_normal((K, N, d)) + 1j * rng.standard_normal((K, N, d))
    for k in range(K):
        F[k] *= np.sqrt(power_fraction * cfg.power_budget[k]) / np.linalg.norm(F[k])
    state = BeamformingState(
        f_c=F,
        w_c=np.zeros((K, ch.M, d), dtype=complex),
        w_s=np.ones((K, N), dtype=complex) / np.sqrt(N),
        theta=rng.uniform(0.0, 2 * np.pi, ch.L),
        d_weight=np.tile(np.eye(d, dtype=complex), (K, 1, 1)),
        frac_delta=np.ones(K),
        frac_lambda=np.zeros(K),
    )
    return update_radar_rxs(ch, update_decoders_and_weights(ch, state, cfg), cfg)


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("RIS_ICSC_SEED", raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_cfg():
    return load_config()


@pytest.fixture(scope="session")
def default_channels(default_cfg):
    return realize_scenario(default_cfg)


def scalar_setup(h=1.0, g=1.0, f=1.0, noise=1.0, bandwidth=1.0):
    """K=1, M=N=d=1, no RIS: every quantity is a scalar."""
    from ris_icsc.channel import ChannelSet
    from ris_icsc.config import Geometry, SystemConfig

    cfg = SystemConfig(K=1, M=1, N=1, L=0, d=1, bandwidth_hz=bandwidth, noise_comm=noise, noise_sense=noise,
                       power_budget=(abs(f) ** 2 + 1.0,), weights=(1.0,), task_bits=(1000,),
                       cycles_per_bit=(500.0,), local_cpu=(1e8,), sinr_threshold_linear=1.0,
                       geometry=Geometry(ues=((250.0, 50.0),), targets=((270.0, 50.0),)))
    ch = ChannelSet(h_bu=np.full((1, 1, 1), h, dtype=complex), h_r=np.zeros((1, 0), dtype=complex),
                    h_ru=np.zeros((1, 0, 1), dtype=complex), h_uu=np.zeros((1, 1, 1, 1), dtype=complex),
                    g_target=np.full((1, 1, 1), g, dtype=complex), target_angle=np.zeros(1),
                    target_gain=np.full(1, g, dtype=complex))
    state = BeamformingState(f_c=np.full((1, 1, 1), f, dtype=complex), w_c=np.zeros((1, 1, 1), dtype=complex),
                             w_s=np.ones((1, 1), dtype=complex), theta=np.zeros(0),
                             d_weight=np.ones((1, 1, 1), dtype=complex), frac_delta=np.ones(1),
                             frac_lambda=np.zeros(1))
    return ch, cfg, state


# One "CRITERION n: PASS|FAIL ..." line per acceptance check, echoed in the summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(n: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

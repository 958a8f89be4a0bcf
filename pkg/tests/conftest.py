import numpy as np
import pytest

from facefill.data.clip import OcclusionMask, VideoClip, headset_mask
from facefill.data.synthetic import SyntheticFaceSpec, generate_synthetic_clip, synthetic_dataset
from facefill.morphable import build_toy_model
from facefill.training import TrainConfig, Trainer


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_clip(rng):
    return VideoClip(rng.uniform(0.0, 1.0, (4, 16, 16, 3)))


@pytest.fixture
def band_mask():
    mask = np.zeros((16, 16))
    mask[4:9, 3:13] = 1.0
    return OcclusionMask(mask)


@pytest.fixture(scope="session")
def toy_model():
    return build_toy_model(seed=0)


@pytest.fixture(scope="session")
def static_face():
    """One rendered 128x128 frame of the resting face plus its landmarks."""
    spec = SyntheticFaceSpec().static()
    clip, points = generate_synthetic_clip(spec, 1, seed=3, height=128, width=128)
    return spec, clip, points


@pytest.fixture(scope="session")
def tiny_dataset():
    """One 4-frame 64x64 synthetic clip with mask, reference, landmarks."""
    return synthetic_dataset(1, 4, 64, 64, seed=5)


@pytest.fixture
def small_headset_mask():
    return headset_mask(16, 16)


def micro_train_config(**overrides):
    base = dict(frame_size=32, clip_len=2, stage1_epochs=2, stage2_epochs=1,
                geometry_warmup_epochs=2, seed=1)
    base.update(overrides)
    return TrainConfig.desk(**base)


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory):
    """One fully trained micro run shared by integration-flavored tests:
    (config, dataset, manifest, out_dir)."""
    dataset = synthetic_dataset(2, 2, 32, 32, seed=7)
    out = tmp_path_factory.mktemp("micro-run")
    config = micro_train_config()
    manifest = Trainer(config, dataset, out).train()
    return config, dataset, manifest, out


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Re-emit the acceptance criterion PASS/FAIL lines, which default
    stdout capture would otherwise hide for passing tests."""
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            for name, text in getattr(report, "sections", []):
                if "stdout" in name:
                    lines += [line for line in text.splitlines()
                              if line.startswith("[ACCEPTANCE")]
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

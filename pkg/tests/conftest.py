import wave

import numpy as np
import pytest


def write_pcm(path, samples, rate=16000, channels=1, width=2):
    """Write raw integer samples; ``samples`` is (n,) or (n, channels)."""
    data = np.asarray(samples)
    dtype = {1: "u1", 2: "<i2", 4: "<i4"}[width]
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(data.astype(dtype).tobytes())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and (rep.when == "call" or outcome == "skipped"):
                lines.append((props["criterion"], outcome.upper()[:4], props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit, status, detail in sorted(lines):
            terminalreporter.write_line(f"{status:4}  {crit}  {detail}")

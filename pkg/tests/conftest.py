import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ringtrace.chaingen import GenConfig, generate_chain  # noqa: E402


@functools.lru_cache(maxsize=None)
def cached_chain(**kwargs):
    dist = kwargs.pop("dist", None)
    if dist is not None:
        kwargs["mixin_count_distribution"] = dict(dist)
    return generate_chain(GenConfig(**kwargs))


@pytest.fixture(scope="session")
def small_chain():
    """About 1500 inputs with 0 to 4 mixins under the uniform policy."""
    return cached_chain(num_blocks=600, txs_per_block=2.5, dist=((0, 0.3), (1, 0.2), (2, 0.2), (4, 0.3)), seed=11)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, text = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {text}")

"""Shared fixtures: channel analyses and a session-wide DP cache.

The stopping-time DPs behind the bound curves are content-addressed, so one
on-disk cache shared across the whole session lets the converse tests, the
CLI tests, and the acceptance sweep reuse each other's lattices.
"""

from pathlib import Path

import pytest

from vlsfbc.channel import analyze, load_channel, make_bsc, replicate

CHANNEL_DIR = Path(__file__).resolve().parent.parent / "channels"


@pytest.fixture(scope="session")
def dp_cache(tmp_path_factory):
    return str(tmp_path_factory.mktemp("dpcache"))


@pytest.fixture(scope="session")
def bsc011():
    return make_bsc(0.11)


@pytest.fixture(scope="session")
def an_bsc(bsc011):
    """analyze() of the K-fold replicated BSC(0.11), memoized per K."""
    cache = {}

    def get(K):
        if K not in cache:
            cache[K] = analyze(replicate(bsc011, K, name=f"bsc011_k{K}"))
        return cache[K]

    return get


@pytest.fixture(scope="session")
def an_k1(an_bsc):
    return an_bsc(1)


@pytest.fixture(scope="session")
def an_k2(an_bsc):
    return an_bsc(2)


@pytest.fixture(scope="session")
def an_fig3():
    # two-block common-output pair with flips (0.01, 0.40) / (0.15, 0.10)
    return analyze(load_channel(str(CHANNEL_DIR / "asym_pair.json")))


@pytest.fixture(scope="session")
def an_fig3_cond():
    ch = load_channel(str(CHANNEL_DIR / "asym_pair.json"))
    return analyze(ch, dispersion_convention="conditional")

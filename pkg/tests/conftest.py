import pytest

from latticelock.kicks import SidebandReadout


@pytest.fixture(scope="session")
def cold_readout():
    """Shared sideband readout table for nbar=0.4 at the default Lamb-Dicke factor."""
    return SidebandReadout(nbar=0.4, eta=0.21)

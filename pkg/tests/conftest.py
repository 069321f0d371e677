import struct

import numpy as np
import pytest

NIFTI_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4,
               np.dtype(np.float32): 16, np.dtype(np.float64): 64}


def write_nifti(path, data, pixdim=(1.0, 1.0, 1.0), dim0=None):
    """Minimal single-file NIfTI-1 writer used to build test fixtures."""
    data = np.asarray(data)
    hdr = bytearray(352)
    struct.pack_into("<i", hdr, 0, 348)
    dims = [dim0 if dim0 is not None else data.ndim] + list(data.shape) + [1] * (7 - data.ndim)
    struct.pack_into("<8h", hdr, 40, *dims)
    struct.pack_into("<h", hdr, 70, NIFTI_CODES[data.dtype])
    struct.pack_into("<h", hdr, 72, data.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *pixdim, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<f", hdr, 112, 1.0)
    hdr[344:348] = b"n+1\x00"
    with open(path, "wb") as fh:
        fh.write(bytes(hdr))
        fh.write(data.astype(data.dtype.newbyteorder("<")).tobytes(order="F"))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # expose each phase's report to fixtures (request.node.rep_call)
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)

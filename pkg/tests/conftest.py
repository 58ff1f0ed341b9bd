import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from eolsr.olsr import NeighborTuple, TwoHopTuple  # noqa: E402


def as_tuples(reach, degree=None, heard=()):
    """Turn an oracle neighborhood into OLSR neighbor and 2-hop tuples."""
    neighbors = [
        NeighborTuple(n, True, 10_000, degree=(degree or {}).get(n, len(reach[n]) + 1))
        for n in sorted(reach)
    ]
    neighbors += [NeighborTuple(n, False, 10_000) for n in heard]
    two_hop = [TwoHopTuple(n, t, 10_000) for n in sorted(reach) for t in sorted(reach[n])]
    return neighbors, two_hop


# criterion -> (passed, detail); filled by test_acceptance, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")

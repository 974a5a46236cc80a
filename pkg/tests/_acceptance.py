"""Shared record of acceptance-criterion outcomes, printed at session end."""
RESULTS = []


def record(number, name, passed, detail, seconds, limit):
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    line = f"criterion {number:>2} {status} {name}: {detail} [{seconds:.1f} s, limit {limit:g} s]"
    RESULTS.append(line)
    return line

import math

from hypothesis import HealthCheck, settings

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
GOLDEN_EXPR = "(sqrt(5)-1)/2"
FIBONACCI = [(1, 2), (2, 3), (3, 5), (5, 8), (8, 13), (13, 21), (21, 34), (34, 55),
             (55, 89), (89, 144), (144, 233)]

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])

import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    import sys

    for module in list(sys.modules.values()):
        lines = getattr(module, "ACCEPTANCE_LINES", None)
        if lines:
            terminalreporter.section("acceptance criteria")
            for line in sorted(lines, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
                terminalreporter.write_line(line)
            return

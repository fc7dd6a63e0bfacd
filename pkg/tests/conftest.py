import pytest

from tilesim.client import Client
from tilesim.medium import Position, World
from tilesim.server import ApiApp, TileServer
from tilesim.tag import Tag
from tilesim.transport import LocalTransport


class Stack:
    """A world, a provider and helpers to populate them with phones and tags."""

    def __init__(self, seed=0, **server_kwargs):
        self.world = World(seed)
        self.server = TileServer(clock=lambda: self.world.now, rng=self.world.rng_for("server"), **server_kwargs)
        self.transport = LocalTransport(ApiApp(self.server))

    def phone(self, name, position=(0.0, 0.0), register=True, **kw):
        client = Client(self.world, name, self.transport, Position(*position), **kw)
        if register:
            client.register(f"{name}@example.com", f"pw-{name}")
        return client

    def tag(self, name, position=(0.0, 0.0), **kw):
        tag = Tag(self.world, name, self.server.vendors["TILE"], position=Position(*position), **kw)
        self.world.medium.register(tag)
        return tag

    def owned_tag(self, owner, name, **kw):
        tag = self.tag(name, (owner.position.x, owner.position.y), **kw)
        owner.activate_tag(tag, name)
        return tag


@pytest.fixture
def stack():
    return Stack(seed=1)


@pytest.fixture
def make_stack():
    return Stack


# -- acceptance reporting: one line per criterion at the end of the run

_criteria: list[tuple[int, str, str, float]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = marker.args
        _criteria.append((number, title, "PASS" if report.passed else "FAIL", report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    merged: dict[int, list] = {}
    for number, title, status, duration in _criteria:
        entry = merged.setdefault(number, [title, 0, 0, 0.0])
        entry[1] += 1
        entry[2] += status == "FAIL"
        entry[3] += duration
    terminalreporter.section("acceptance criteria")
    for number, (title, cases, failed, duration) in sorted(merged.items()):
        status = "FAIL" if failed else "PASS"
        detail = f"{cases - failed}/{cases} cases, " if cases > 1 else ""
        terminalreporter.write_line(f"criterion {number:2d}  {status}  {title} ({detail}{duration:.2f} s)")

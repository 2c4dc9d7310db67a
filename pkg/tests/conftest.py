import pytest

from hyperrec.dataset import Catalog, CatalogEntry, Dataset, InteractionTable, TagTable, generate_synthetic

# desk-scale fixture shared by the end-to-end tests
DESK = dict(n_users=50, n_tracks=500, n_artists=30, n_albums=60, n_tags=50, seed=0, n_genres=10)


@pytest.fixture(scope="session")
def desk_dataset() -> Dataset:
    return Dataset(*generate_synthetic(**DESK))


@pytest.fixture
def tiny_dataset() -> Dataset:
    """Two users, four tracks, two artists, one album."""
    interactions = InteractionTable.from_rows([
        ("u1", "t1", 3), ("u1", "t2", 1),
        ("u2", "t2", 2), ("u2", "t3", 2), ("u2", "t4", 4),
    ])
    catalog = Catalog({
        "t1": CatalogEntry("a1", "al1"),
        "t2": CatalogEntry("a1", "al1"),
        "t3": CatalogEntry("a2", None),
        "t4": CatalogEntry("a2", None),
    })
    tags = TagTable.from_rows([
        ("t1", "rock", 2), ("t1", "jazz", 2),
        ("t3", "rock", 5),
    ])
    return Dataset(interactions, catalog, tags)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def report_criterion(request):
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""
    def record(label, ok: bool, detail: str) -> bool:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        return ok
    return record

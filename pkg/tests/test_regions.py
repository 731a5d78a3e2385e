import math

import numpy as np
import pytest

from gcsflight import planner, urllc
from gcsflight.channel import BaseStation, snr, snr_radial
from gcsflight.regions import (
    SINK,
    SOURCE,
    Airspace,
    FeasibleDisk,
    IntersectionGraph,
    build_disks,
    build_graph,
    coverage_radius,
    reachable,
)

from conftest import table_channel


@pytest.fixture(scope="module")
def airspace():
    return Airspace(0.0, 5000.0, 0.0, 5000.0, 300.0)


@pytest.fixture(scope="module")
def params():
    return table_channel()


@pytest.fixture(scope="module")
def gamma_table():
    return urllc.gamma_min(planner.default_urllc())


def disk(bs_id, x, y, r):
    return FeasibleDisk(bs_id=bs_id, center=(x, y), radius_m=r)


class TestCoverageRadius:
    def test_absurd_threshold_gives_no_disk(self, airspace, params):
        bs = BaseStation(0, 2500, 2500, 100)
        assert coverage_radius(bs, airspace, params, 1e30) is None

    def test_threshold_at_center_snr_degenerates(self, airspace, params):
        bs = BaseStation(0, 2500, 2500, 100)
        at_center = snr((2500, 2500, 300), bs, params)
        assert coverage_radius(bs, airspace, params, at_center) is None

    def test_brute_force_oracle(self, airspace, params, gamma_table):
        bs = BaseStation(0, 2500, 2500, 100.0)
        rho = coverage_radius(bs, airspace, params, gamma_table)
        # 0.01 m brute-force scan, fully vectorized, as the reference
        grid = np.arange(0.0, 8000.0, 0.01)
        prof = snr_radial(grid, bs.z_m, airspace.altitude_m, params)
        feasible = np.nonzero(prof < gamma_table)[0]
        oracle = grid[feasible[0] - 1]
        assert rho == pytest.approx(oracle, abs=0.1)

    def test_all_radii_feasible_inside(self, airspace, params, gamma_table):
        bs = BaseStation(0, 1000, 1000, 57.0)
        rho = coverage_radius(bs, airspace, params, gamma_table)
        rs = np.linspace(0, rho - 1e-3, 500)
        assert np.all(snr_radial(rs, bs.z_m, airspace.altitude_m, params) >= gamma_table)

    def test_gamma_min_must_be_positive(self, airspace, params):
        with pytest.raises(ValueError):
            coverage_radius(BaseStation(0, 0, 0, 100), airspace, params, 0.0)


class TestBuildDisks:
    def test_full_scenario_disks_recheck(self, gamma_table):
        sc = planner.generate_scenario(seed=0, num_bs=30)
        disks = build_disks(sc, gamma_table)
        assert len(disks) == 30
        by_id = {bs.id: bs for bs in sc.stations}
        for d in disks:
            bs = by_id[d.bs_id]
            edge_point = (d.center[0] + d.radius_m, d.center[1], 300.0)
            assert snr(edge_point, bs, sc.channel) >= gamma_table * (1 - 1e-9)
            assert d.center == bs.ground_xy

    def test_sampled_interior_feasibility(self, gamma_table):
        sc = planner.generate_scenario(seed=3, num_bs=4)
        disks = build_disks(sc, gamma_table)
        rng = np.random.default_rng(0)
        by_id = {bs.id: bs for bs in sc.stations}
        for d in disks:
            angles = rng.uniform(0, 2 * math.pi, 1000)
            radii = (d.radius_m - 1e-3) * np.sqrt(rng.uniform(0, 1, 1000))
            for a, r in zip(angles[:50], radii[:50]):
                p = (d.center[0] + r * math.cos(a), d.center[1] + r * math.sin(a), 300.0)
                assert snr(p, by_id[d.bs_id], sc.channel) >= gamma_table * (1 - 1e-9)

    def test_dropped_when_infeasible(self):
        sc = planner.generate_scenario(seed=1, num_bs=3)
        # a rate requirement high enough that no BS covers anything
        hard = urllc.UrllcParams(180e3, 1e-3, 1e-3, 1e-5, 40.0)
        assert build_disks(sc, urllc.gamma_min(hard)) == []


class TestBuildGraph:
    def test_overlap_edge(self):
        g = build_graph([disk(1, 0, 0, 2), disk(2, 3, 0, 2)], (0, 0), (3, 0))
        assert (1, 2) in g.edges and (2, 1) in g.edges

    def test_disjoint_disks(self):
        g = build_graph([disk(1, 0, 0, 2), disk(2, 5, 0, 2)], (0, 0), (5, 0))
        assert (1, 2) not in g.edges and (2, 1) not in g.edges

    def test_tangency_counts(self):
        g = build_graph([disk(1, 0, 0, 2), disk(2, 4, 0, 2)], (0, 0), (4, 0))
        assert (1, 2) in g.edges and (2, 1) in g.edges

    def test_endpoint_inclusion(self):
        g = build_graph([disk(1, 0, 0, 2)], (0, 0), (5, 0))
        assert (SOURCE, 1) in g.edges
        assert all(e[1] != SINK for e in g.edges)
        assert not reachable(g)

    def test_source_only_outgoing_sink_only_incoming(self):
        g = build_graph([disk(1, 0, 0, 3), disk(2, 2, 0, 3)], (0, 0), (2, 0))
        assert all(e[0] != SINK and e[1] != SOURCE for e in g.edges)
        assert all(e[0] == SOURCE or isinstance(e[0], int) for e in g.edges)

    def test_internal_edges_symmetric(self):
        sc = planner.generate_scenario(seed=2, num_bs=10)
        disks = build_disks(sc)
        g = build_graph(disks, sc.start[:2], sc.goal[:2])
        internal = {(u, v) for u, v in g.edges if isinstance(u, int) and isinstance(v, int)}
        assert all((v, u) in internal for u, v in internal)

    def test_deterministic(self):
        sc = planner.generate_scenario(seed=5, num_bs=8)
        disks = build_disks(sc)
        g1 = build_graph(disks, sc.start[:2], sc.goal[:2])
        g2 = build_graph(disks, sc.start[:2], sc.goal[:2])
        assert g1.edges == g2.edges and g1.vertices == g2.vertices

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            build_graph([disk(1, 0, 0, 1), disk(1, 1, 1, 1)], (0, 0), (1, 1))


def closure_reachable(graph: IntersectionGraph) -> bool:
    """Floyd-Warshall transitive closure as the reachability oracle."""
    nodes = [SOURCE, *graph.vertices, SINK]
    idx = {v: i for i, v in enumerate(nodes)}
    n = len(nodes)
    reach = np.zeros((n, n), dtype=bool)
    for u, v in graph.edges:
        reach[idx[u], idx[v]] = True
    for k in range(n):
        reach |= np.outer(reach[:, k], reach[k, :])
    return bool(reach[idx[SOURCE], idx[SINK]])


class TestReachable:
    def test_chain(self):
        g = build_graph([disk(1, 0, 0, 2)], (0, 0), (1, 0))
        assert reachable(g)

    def test_no_sink_edge(self):
        g = build_graph([disk(1, 0, 0, 2)], (0, 0), (50, 0))
        assert not reachable(g)

    def test_matches_transitive_closure(self):
        for seed in range(8):
            sc = planner.generate_scenario(
                seed=seed, num_bs=30, channel=table_channel(5e-3)
            )
            disks = build_disks(sc)
            g = build_graph(disks, sc.start[:2], sc.goal[:2])
            assert reachable(g) == closure_reachable(g)


class TestAirspace:
    def test_validation(self):
        with pytest.raises(ValueError):
            Airspace(0, 0, 0, 1, 300)
        with pytest.raises(ValueError):
            Airspace(0, 1, 0, 1, 0)

    def test_contains(self, airspace):
        assert airspace.contains_xy(0, 0)
        assert airspace.contains_xy(5000, 5000)
        assert not airspace.contains_xy(-1, 0)

    def test_zero_radius_disk_rejected(self):
        with pytest.raises(ValueError):
            FeasibleDisk(bs_id=0, center=(0, 0), radius_m=0.0)

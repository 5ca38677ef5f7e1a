import gzip
import struct

import numpy as np
import pytest

from haarscat.datasets import (
    Dataset,
    find_mnist,
    grid_graph,
    load_idx,
    project_to_sphere,
    random_rotation,
    read_idx,
    read_points_csv,
    read_signals_csv,
    scramble,
    sphere_sample,
    stratified_split,
    synthetic_smooth,
    total_variation,
    unscramble,
    write_idx,
    write_points_csv,
    write_signals_csv,
)
from haarscat.multires import random_multires
from haarscat.scattering import transform


def write_pair(tmp_path, images, labels):
    write_idx(tmp_path / "img", images)
    write_idx(tmp_path / "lab", labels)
    return tmp_path / "img", tmp_path / "lab"


class TestIdx:
    def test_round_trip_bytes(self, tmp_path, rng):
        images = rng.integers(0, 256, (5, 28, 28), dtype=np.uint8)
        write_idx(tmp_path / "a", images)
        magic, back = read_idx(tmp_path / "a")
        assert magic == 0x803
        np.testing.assert_array_equal(back, images)
        write_idx(tmp_path / "b", back)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_header_layout(self, tmp_path):
        write_idx(tmp_path / "lab", np.array([3, 1], dtype=np.uint8))
        data = (tmp_path / "lab").read_bytes()
        assert struct.unpack(">II", data[:8]) == (0x801, 2)
        assert data[8:] == bytes([3, 1])

    def test_gzip(self, tmp_path):
        write_idx(tmp_path / "x.gz", np.arange(6, dtype=np.uint8))
        with gzip.open(tmp_path / "x.gz") as fh:
            assert fh.read()[:4] == b"\x00\x00\x08\x01"
        assert read_idx(tmp_path / "x.gz")[1].tolist() == list(range(6))

    def test_load_scales_and_pads(self, tmp_path):
        images = np.zeros((2, 28, 28), dtype=np.uint8)
        images[0, 0, 0] = 255
        images[1, 27, 27] = 51
        ds = load_idx(*write_pair(tmp_path, images, np.array([4, 9], dtype=np.uint8)))
        assert ds.signals.shape == (2, 1024)
        assert ds.signals[0, 0] == 1.0
        assert ds.signals[1, 27 * 32 + 27] == pytest.approx(0.2)
        assert ds.labels.tolist() == [4, 9]
        assert ds.geometry.vertex_count == 1024

    def test_padding_never_active(self, tmp_path, rng):
        images = rng.integers(1, 256, (3, 28, 28), dtype=np.uint8)
        ds = load_idx(*write_pair(tmp_path, images, np.zeros(3, dtype=np.uint8)))
        assert len(ds.active_vertices) == 784
        assert all(v % 32 < 28 and v // 32 < 28 for v in ds.active_vertices)

    def test_errors(self, tmp_path):
        (tmp_path / "empty").write_bytes(b"")
        with pytest.raises(ValueError):
            read_idx(tmp_path / "empty")
        (tmp_path / "bad").write_bytes(b"\x01\x00\x08\x01" + b"\0" * 8)
        with pytest.raises(ValueError, match="magic"):
            read_idx(tmp_path / "bad")
        write_idx(tmp_path / "short", np.zeros((4, 2, 2), dtype=np.uint8))
        (tmp_path / "short").write_bytes((tmp_path / "short").read_bytes()[:-3])
        with pytest.raises(ValueError, match="truncated"):
            read_idx(tmp_path / "short")
        images, labels = write_pair(tmp_path, np.zeros((3, 28, 28), np.uint8), np.zeros(2, np.uint8))
        with pytest.raises(ValueError, match="labels"):
            load_idx(images, labels)
        with pytest.raises(ValueError, match="magic"):
            load_idx(labels, images)
        with pytest.raises(FileNotFoundError):
            find_mnist(tmp_path)

    def test_find_mnist(self, tmp_path):
        write_idx(tmp_path / "t10k-images-idx3-ubyte.gz", np.zeros((1, 28, 28), np.uint8))
        write_idx(tmp_path / "t10k-labels-idx1-ubyte.gz", np.zeros(1, np.uint8))
        images, labels = find_mnist(tmp_path, "t10k")
        assert load_idx(images, labels).signals.shape == (1, 1024)


class TestMnistSubset:
    def test_header_and_range(self, mnist):
        assert mnist.signals.shape[1] == 1024
        assert mnist.signals.min() == 0.0 and mnist.signals.max() == 1.0
        assert set(np.unique(mnist.labels).tolist()) == set(range(10))

    def test_split(self, mnist):
        tr, te = stratified_split(mnist.labels, 200, 100, seed=0)
        assert len(tr) == 2000 and len(te) == 1000
        assert not set(tr) & set(te)
        assert np.all(np.bincount(mnist.labels[te]) == 100)


class TestScramble:
    def make(self, rng):
        x = rng.standard_normal((6, 16))
        x[:, 5] = 0
        return Dataset(x, np.arange(6), grid_graph(4, 4))

    def test_unscramble(self, rng):
        ds = self.make(rng)
        sc = scramble(ds, 3)
        assert not np.array_equal(sc.signals, ds.signals)
        back = unscramble(sc)
        np.testing.assert_array_equal(back.signals, ds.signals)
        assert back.geometry == ds.geometry
        np.testing.assert_array_equal(back.active_vertices, ds.active_vertices)

    def test_deterministic(self, rng):
        ds = self.make(rng)
        np.testing.assert_array_equal(scramble(ds, 9).permutation, scramble(ds, 9).permutation)

    def test_geometry_follows(self, rng):
        ds = self.make(rng)
        sc = scramble(ds, 1)
        p = sc.permutation
        for a, b in sc.geometry.edges:
            assert ds.geometry.has_edge(int(p[a]), int(p[b]))
        assert 5 not in p[sc.active_vertices]

    def test_composes(self, rng):
        ds = self.make(rng)
        twice = scramble(scramble(ds, 1), 2)
        np.testing.assert_array_equal(twice.signals, ds.signals[:, twice.permutation])

    def test_scattering_equivariance(self, rng):
        ds = self.make(rng)
        sc = scramble(ds, 4)
        m = random_multires(16, 4, rng)
        mp = m.permuted(sc.permutation)
        plain, scrambled = transform(ds.signals, m), transform(sc.signals, mp)
        np.testing.assert_array_equal(plain[0][:, sc.permutation], scrambled[0])
        for a, b in zip(plain[1:], scrambled[1:]):
            np.testing.assert_array_equal(a, b)


class TestGrid:
    def test_degrees(self):
        g = grid_graph(2, 2)
        assert len(g.edges) == 6
        g = grid_graph(4, 4)
        assert g.degree(5) == 8
        assert g.degree(0) == 3 and g.degree(15) == 3
        assert g.degree(1) == 5

    def test_invalid(self):
        with pytest.raises(ValueError):
            grid_graph(0, 3)


class TestSphere:
    def test_unit_points(self):
        cloud = sphere_sample(200, 0.3, seed=0)
        np.testing.assert_allclose(np.linalg.norm(cloud.points, axis=1), 1.0)
        assert sphere_sample(200, 0.3, seed=0).graph == cloud.graph

    def test_threshold_extremes(self):
        assert len(sphere_sample(30, np.pi, 0).graph.edges) == 30 * 29 // 2
        assert len(sphere_sample(30, 1e-9, 0).graph.edges) == 0

    def test_edges_by_geodesic(self):
        cloud = sphere_sample(100, 0.5, 1)
        ang = np.arccos(np.clip(cloud.points @ cloud.points.T, -1, 1))
        for a in range(100):
            for b in range(a + 1, 100):
                assert cloud.graph.has_edge(a, b) == (ang[a, b] < 0.5)

    def test_mean_degree_d4096(self):
        deg = sphere_sample(4096, 0.1, seed=0).mean_degree()
        assert 5 <= deg <= 12

    def test_invalid(self):
        with pytest.raises(ValueError):
            sphere_sample(10, 0.0, 0)

    def test_points_csv(self, tmp_path):
        cloud = sphere_sample(50, 0.4, 2)
        write_points_csv(tmp_path / "p.csv", cloud)
        back = read_points_csv(tmp_path / "p.csv", 0.4)
        np.testing.assert_array_equal(back.points, cloud.points)
        assert back.graph == cloud.graph


class TestSynthetic:
    def test_no_smoothing_is_noise(self):
        g = grid_graph(4, 4)
        ds = synthetic_smooth(g, 5, seed=2, smoothing_steps=0)
        np.testing.assert_array_equal(ds.signals, np.random.default_rng(2).standard_normal((5, 16)))

    def test_many_steps_nearly_constant(self):
        ds = synthetic_smooth(grid_graph(4, 4), 5, 0, 400)
        assert np.all(np.ptp(ds.signals, axis=1) < 1e-6)

    def test_tv_decreases(self):
        g = grid_graph(8, 8)
        tv = [total_variation(synthetic_smooth(g, 20, 1, s).signals, g).mean() for s in range(8)]
        assert all(a > b for a, b in zip(tv, tv[1:]))

    def test_signals_csv(self, tmp_path, rng):
        ds = Dataset(rng.standard_normal((4, 8)), np.array([0, 1, 1, 0]))
        write_signals_csv(tmp_path / "s.csv", ds)
        back = read_signals_csv(tmp_path / "s.csv", labeled=True)
        np.testing.assert_array_equal(back.signals, ds.signals)
        np.testing.assert_array_equal(back.labels, ds.labels)


def blob_image(size=28, sigma=3.0):
    y, x = np.mgrid[:size, :size] - (size - 1) / 2
    return np.exp(-(x ** 2 + y ** 2) / (2 * sigma ** 2))


class TestProjection:
    cloud = sphere_sample(4096, 0.1, seed=0)

    def test_deterministic(self):
        img = blob_image()
        a = project_to_sphere(img, self.cloud, np.eye(3))
        np.testing.assert_array_equal(a, project_to_sphere(img, self.cloud, np.eye(3)))

    def test_energy_preserved(self):
        img = blob_image()
        for seed in range(3):
            s = project_to_sphere(img, self.cloud, random_rotation(seed))
            assert np.sum(s ** 2) == pytest.approx(np.sum(img ** 2), rel=0.1)

    def test_two_rotations(self):
        img = blob_image()
        a = project_to_sphere(img, self.cloud, random_rotation(1), half_width=0.5)
        b = project_to_sphere(img, self.cloud, random_rotation(2), half_width=0.5)
        assert not np.allclose(a, b)
        assert np.sum(a ** 2) == pytest.approx(np.sum(b ** 2), rel=0.1)

    def test_small_rotation(self):
        R = random_rotation(0, angle_std=0.05)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.norm(R - np.eye(3)) < 0.5

    def test_rejects_non_orthogonal(self):
        with pytest.raises(ValueError):
            project_to_sphere(blob_image(), self.cloud, 2 * np.eye(3))

import struct

import numpy as np
import pytest

from usar import io
from usar.encoder import init_params
from usar.scenes import Measurement, Scene

from conftest import random_unit_model


def test_forward_model_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    F = random_unit_model(rng, 7, 5)
    path = tmp_path / "f.bin"
    io.write_forward_model(path, F)
    G = io.read_forward_model(path)
    assert G.entries.tobytes() == F.entries.tobytes() and G.kappa == F.kappa
    raw = path.read_bytes()
    assert raw[:4] == b"USAR" and len(raw) == struct.calcsize("<4sIQQd") + 7 * 5 * 16
    magic, version, N, M, kappa = struct.unpack_from("<4sIQQd", raw)
    assert (version, N, M, kappa) == (1, 7, 5, 1.0)
    re, im = struct.unpack_from("<dd", raw, struct.calcsize("<4sIQQd"))
    assert complex(re, im) == F.entries[0, 0]


def test_bad_magic_and_truncation(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ValueError, match="magic"):
        io.read_forward_model(p)
    rng = np.random.default_rng(1)
    io.write_forward_model(p, random_unit_model(rng, 3, 3))
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(ValueError, match="truncated"):
        io.read_forward_model(p)


@pytest.mark.parametrize("penalty", ["l1", "l0"])
def test_checkpoint_round_trip(tmp_path, penalty):
    rng = np.random.default_rng(2)
    F = random_unit_model(rng, 6, 4)
    p = init_params(F, 0.01, 30.0, penalty, 8)
    path = tmp_path / "ck.bin"
    io.write_checkpoint(path, p)
    q = io.read_checkpoint(path)
    assert q.Q.tobytes() == p.Q.tobytes()
    assert q.F.entries.tobytes() == p.F.entries.tobytes()
    assert (q.tau, q.alpha, q.lam, q.penalty, q.layers) == (p.tau, p.alpha, p.lam,
                                                             p.penalty, p.layers)


def test_measurement_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    d = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    for m in (Measurement(d, 50.0, 17), Measurement(d)):
        path = tmp_path / "m.bin"
        io.write_measurement(path, m)
        r = io.read_measurement(path)
        assert r.data.tobytes() == m.data.tobytes()
        assert (r.snr_db, r.seed) == (m.snr_db, m.seed)


def test_scene_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    s = Scene(rng.uniform(size=12), (3, 4))
    io.write_scene(tmp_path / "s.txt", s)
    assert io.read_scene(tmp_path / "s.txt") == s
    (tmp_path / "bad.txt").write_text("2 2\n0 1 0\n")
    with pytest.raises(ValueError):
        io.read_scene(tmp_path / "bad.txt")


def test_export_image(tmp_path):
    rng = np.random.default_rng(5)
    img = rng.uniform(size=(3, 5))
    img[1, 2] = 1.0
    pgm, csv_path = io.export_image(img.ravel(), (3, 5), tmp_path / "im.pgm")
    assert pgm.endswith("im.pgm") and csv_path.endswith("im.csv")
    levels = io.read_pgm(pgm)
    assert levels.shape == (3, 5) and levels.max() == 65535
    assert np.array_equal(levels, np.round(img * 65535))
    assert np.array_equal(io.read_image_csv(csv_path), img)
    pgm0, _ = io.export_image(np.zeros(6), (2, 3), tmp_path / "zero")
    assert not io.read_pgm(pgm0).any()

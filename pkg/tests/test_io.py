import math
import os

import numpy as np
import pytest

from conftest import crandn
from tlmri import io, kspace
from tlmri.errors import ConfigError, FormatError, ValidationError
from tlmri.recon import ObjectiveBreakdown, ReconConfig, TraceRow
from tlmri.transforms import init_union


def f32_complex(rng, *shape):
    # values exactly representable in float32 so round trips are bit-exact
    return crandn(rng, *shape).astype(np.complex64).astype(np.complex128)


def test_image_roundtrip_bit_exact(tmp_path, rng):
    x = f32_complex(rng, 5, 7)
    p = tmp_path / "x.cplx"
    io.save_image(p, x)
    y = io.load_image(p)
    assert y.shape == (5, 7)
    assert y.tobytes() == x.tobytes()
    io.save_image(tmp_path / "y.cplx", y)
    assert (tmp_path / "y.cplx").read_bytes() == p.read_bytes()


def test_image_layout(tmp_path):
    x = np.array([[1 + 2j, 3], [4, 5 - 6j]])
    p = tmp_path / "x.cplx"
    io.save_image(p, x)
    assert open(io.header_path(p)).read().split() == ["2", "2"]
    raw = p.read_bytes()
    assert len(raw) == 32
    np.testing.assert_array_equal(np.frombuffer(raw, "<f4"), [1, 2, 3, 0, 4, 0, 5, -6])


def test_image_size_mismatch(tmp_path, rng):
    p = tmp_path / "x.cplx"
    io.save_image(p, f32_complex(rng, 3, 3))
    with open(io.header_path(p), "w") as f:
        f.write("4 3\n")
    with pytest.raises(FormatError):
        io.load_image(p)
    with pytest.raises(FormatError):
        io.load_image(tmp_path / "missing.cplx")


def test_zero_image_pgm(tmp_path):
    p = tmp_path / "z.pgm"
    io.save_magnitude_pgm(p, np.zeros((3, 4)))
    values, maxval = io.read_pgm(p)
    assert maxval == 255 and values.shape == (3, 4) and not values.any()


def test_pgm_linear_scaling(tmp_path):
    p = tmp_path / "m.pgm"
    io.save_magnitude_pgm(p, np.array([[0, 0.5j], [1.0, -0.25]]))
    values, _ = io.read_pgm(p)
    np.testing.assert_array_equal(values, [[0, 128], [255, 64]])


def test_mask_roundtrip(tmp_path):
    mask = kspace.make_random2d_mask(9, 13, 3, seed=2)
    p = tmp_path / "m.pgm"
    io.save_mask(p, mask)
    assert p.read_text().startswith("P2\n13 9\n1\n")
    np.testing.assert_array_equal(io.load_mask(p), mask)


def test_mask_rejects_bad_maxval(tmp_path):
    p = tmp_path / "m.pgm"
    p.write_text("P2\n2 1\n255\n0 255\n")
    with pytest.raises(FormatError):
        io.load_mask(p)


def test_kspace_roundtrip(tmp_path, rng):
    mask = kspace.make_random2d_mask(8, 6, 2, seed=0)
    y = f32_complex(rng, int(mask.sum()))
    data = kspace.KSpaceData(y, mask, noise_sigma=0.01, seed=4)
    p = tmp_path / "y.ks"
    io.save_kspace(p, data)
    fields = open(io.header_path(p)).read().split()
    assert fields[:3] == ["6", "8", str(data.m)]
    back = io.load_kspace(p, mask)
    assert back.y.tobytes() == y.tobytes()
    assert back.noise_sigma == 0.01 and back.seed == 4
    other = kspace.make_random2d_mask(8, 6, 2, seed=1)
    if other.sum() != mask.sum():
        with pytest.raises(FormatError):
            io.load_kspace(p, other)
    with pytest.raises(FormatError):
        io.load_kspace(p, np.ones((6, 8), bool))


def test_transform_roundtrip(tmp_path, rng):
    Ws = [W.astype(np.complex64).astype(np.complex128) for W in init_union(2, 3, seed=0)]
    Ws[1] = Ws[1] + 1j * f32_complex(rng, 4, 4).real.astype(np.float32)
    p = tmp_path / "w.tr"
    io.save_transforms(p, Ws, "unitary")
    assert open(io.header_path(p)).read().split() == ["4", "3", "unitary"]
    back, mode = io.load_transforms(p)
    assert mode == "unitary"
    for a, b in zip(Ws, back):
        assert a.tobytes() == b.tobytes()
    raw = np.frombuffer(p.read_bytes(), "<f4")
    assert raw[0] == np.float32(Ws[0][0, 0].real) and raw[2] == np.float32(Ws[0][1, 0].real)


def test_config_parsing():
    cfg = io.parse_config("# comment\nscheme=unite\ntau0=0.2\nK=3\nwraparound=false\nnu = 1e4\n")
    assert cfg.scheme == "unite" and cfg.K == 3 and cfg.tau0 == 0.2 and cfg.nu == 1e4
    assert cfg.wraparound is False
    assert io.parse_config(io.format_config(cfg)) == cfg


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("scheme=ut\ntau0=0.1\nbogus=1\n", "bogus"),
        ("scheme=unite\ntau0=0.1\n", "'K'"),
        ("scheme=strollr\ntau0=0.1\n", "'theta'"),
        ("tau0=0.1\n", "'scheme'"),
        ("scheme=ut\n", "'tau0'"),
        ("scheme=ut\ntau0=abc\n", "tau0"),
        ("scheme=ut\ntau0=0.1\ntau0=0.2\n", "duplicate"),
        ("scheme=ut\ntau0\n", "key=value"),
    ],
)
def test_config_errors_name_the_problem(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        io.parse_config(text)


def test_shipped_configs_parse():
    import tlmri

    folder = os.path.join(os.path.dirname(tlmri.__file__), "configs")
    names = sorted(f for f in os.listdir(folder) if f.endswith(".cfg"))
    assert {n[:-4] for n in names} == {"baseline_p1", "stl", "ut", "unite", "frist", "strollr"}
    for n in names:
        assert io.load_config(os.path.join(folder, n)).scheme == n[:-4]


def test_trace_csv(tmp_path):
    obj = ObjectiveBreakdown(fidelity=1.5, sparse_resid=0.1, l0=2.0, lowrank_resid=0.25, rank=0.5, reg_transform=0.0)
    rows = [TraceRow(0, 0.3, obj, math.nan), TraceRow(1, 0.1 + 0.2, obj, 21.5)]
    p = tmp_path / "t.csv"
    io.write_trace(p, rows)
    lines = p.read_text().splitlines()
    assert lines[0] == "iter,tau,fidelity,sparse_resid,l0,rank,reg_transform,total,psnr"
    back = io.read_trace(p)
    assert back[1]["tau"] == 0.1 + 0.2
    assert back[0]["rank"] == 0.75
    assert back[1]["total"] == obj.total
    assert math.isnan(back[0]["psnr"])


def test_dataset_descriptor(tmp_path, rng):
    x = f32_complex(rng, 8, 8)
    mask = kspace.make_random2d_mask(8, 8, 2, seed=0)
    io.save_image(tmp_path / "gt", x)
    io.save_mask(tmp_path / "m.pgm", mask)
    io.save_kspace(tmp_path / "y", kspace.simulate_measurements(x, mask, 0.02, seed=5))
    d = io.DatasetDescriptor(str(tmp_path / "m.pgm"), str(tmp_path / "y"), str(tmp_path / "gt"))
    d.validate()
    assert (d.width, d.height, d.noise_sigma, d.seed) == (8, 8, 0.02, 5)
    io.save_image(tmp_path / "gt", f32_complex(rng, 4, 8))
    with pytest.raises(ValidationError):
        d.validate()
    with pytest.raises(ValidationError):
        io.DatasetDescriptor(str(tmp_path / "nope.pgm"), str(tmp_path / "y")).validate()


def test_run_report_flags_identical_images():
    r = io.RunReport("ut", {}, math.inf, 20.0, 1.0)
    assert r.identical_images
    d = r.to_dict()
    assert d["psnr"] == "inf" and d["identical_images"] is True
    assert not io.RunReport("ut", {}, 30.0, 20.0, 1.0).identical_images


def test_config_roundtrip_defaults():
    assert io.parse_config(io.format_config(ReconConfig())) == ReconConfig()

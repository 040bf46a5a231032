import numpy as np
import pytest

from conftest import random_transform
from spinenav import fileio
from spinenav.errors import ValidationError
from spinenav.geometry import RigidTransform


def test_pose_csv_round_trip_is_byte_identical(rng):
    poses = [random_transform(rng, 500.0) for _ in range(10)]
    text = fileio.poses_to_csv(poses)
    back = fileio.poses_from_csv(text)
    assert fileio.poses_to_csv(back) == text
    for a, b in zip(poses, back):
        assert a.rotation_error(b) < 1e-10
        assert np.array_equal(a.translation, b.translation)


def test_pose_file_round_trip(tmp_path, rng):
    path = tmp_path / "p.csv"
    fileio.write_poses(path, [random_transform(rng) for _ in range(4)])
    first = path.read_bytes()
    fileio.write_poses(path, fileio.read_poses(path))
    assert path.read_bytes() == first


def test_pose_csv_validation():
    with pytest.raises(ValidationError):
        fileio.poses_from_csv("")
    with pytest.raises(ValidationError):
        fileio.poses_from_csv("a,b\n1,2\n")
    with pytest.raises(ValidationError):
        fileio.poses_from_csv("qw,qx,qy,qz,tx,ty,tz\n2,0,0,0,0,0,0\n")
    with pytest.raises(ValidationError):
        fileio.poses_from_csv("qw,qx,qy,qz,tx,ty,tz\n1,0,0,0,0,0\n")
    with pytest.raises(ValidationError):
        fileio.poses_from_csv("qw,qx,qy,qz,tx,ty,tz\n1,0,0,0,0,0,x\n")


def test_slightly_unnormalized_quaternion_is_accepted():
    (p,) = fileio.poses_from_csv("qw,qx,qy,qz,tx,ty,tz\n1.0005,0,0,0,1,2,3\n")
    assert p.allclose(RigidTransform.from_translation([1, 2, 3]), 1e-12)


@pytest.mark.parametrize("suffix", [".ply", ".csv"])
def test_point_file_round_trip(tmp_path, rng, suffix):
    pts = rng.normal(size=(50, 3)) * 100
    path = tmp_path / f"cloud{suffix}"
    fileio.write_points(path, pts)
    first = path.read_bytes()
    back = fileio.read_points(path)
    assert np.array_equal(back, pts)
    fileio.write_points(path, back)
    assert path.read_bytes() == first


def test_ply_with_extra_properties():
    text = "\n".join(
        [
            "ply",
            "format ascii 1.0",
            "element vertex 2",
            "property float nx",
            "property float x",
            "property float y",
            "property float z",
            "element face 0",
            "property list uchar int vertex_indices",
            "end_header",
            "9 1 2 3",
            "9 4 5 6",
        ]
    )
    assert fileio.ply_to_points(text).tolist() == [[1, 2, 3], [4, 5, 6]]


def test_ply_validation():
    with pytest.raises(ValidationError):
        fileio.ply_to_points("not ply")
    with pytest.raises(ValidationError):
        fileio.ply_to_points("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(ValidationError):
        fileio.ply_to_points("ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\n"
                             "property double z\nend_header\n1 2 3\n")


def test_unknown_point_extension(tmp_path):
    with pytest.raises(ValidationError):
        fileio.write_points(tmp_path / "x.xyz", np.zeros((1, 3)))


def test_picks_round_trip(rng):
    src, dst = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    d = fileio.picks_to_dict(src, dst)
    s2, d2 = fileio.parse_picks(d)
    assert np.array_equal(s2, src) and np.array_equal(d2, dst)
    assert fileio.picks_to_dict(s2, d2) == d
    with pytest.raises(ValidationError):
        fileio.parse_picks({"src": [[0, 0, 0]], "dst": [[0, 0, 0]]})
    with pytest.raises(ValidationError):
        fileio.parse_picks({"src": [[0, 0, 0]] * 3})


def test_json_round_trip(tmp_path):
    path = tmp_path / "x.json"
    fileio.write_json(path, {"b": [1.5, 2], "a": {"c": None}})
    first = path.read_bytes()
    fileio.write_json(path, fileio.read_json(path))
    assert path.read_bytes() == first
    path.write_text("{broken")
    with pytest.raises(ValidationError):
        fileio.read_json(path)

import io

import numpy as np
import pytest
from PIL import Image

import adpm
from adpm_exporter.export import (
    ConfigurationError,
    ExporterError,
    ExportJob,
    export_conv_features,
    export_manifest,
)
from adpm_exporter.cli import main as cli_main
from adpm_exporter.models import tiny_cnn

FIVE_LAYERS = tuple((f"conv{i}", f"conv{i}") for i in range(1, 6))


def write_images(root, per_class=1, classes=("forest", "harbor"), size=32, corrupt=()):
    rng = np.random.default_rng(7)
    for cls in classes:
        class_dir = root / cls
        class_dir.mkdir(parents=True)
        for i in range(per_class):
            pixels = rng.integers(0, 255, size=(size, size, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(class_dir / f"{cls}{i}.png")
    for rel in corrupt:
        (root / rel).write_bytes(b"not an image at all")
    return root


def make_job(tmp_path, scales=(16, 24), layers=FIVE_LAYERS, **img_kwargs):
    images = write_images(tmp_path / "images", **img_kwargs)
    return ExportJob(image_dir=images, scales=scales, layers=layers, out_dir=tmp_path / "ws")


def test_export_counts(tmp_path):
    job = make_job(tmp_path)  # 2 images x 2 scales x 5 layers
    manifest_path = export_conv_features(job, tiny_cnn())
    tensor_files = sorted((tmp_path / "ws" / "tensors").glob("*.adpm"))
    assert len(tensor_files) == 2 * 2 * 5 == 20
    manifest = adpm.load_manifest(manifest_path)
    assert len(manifest.records) == 4
    assert manifest.layer_names == tuple(n for n, _ in FIVE_LAYERS)


def test_unknown_layer_is_configuration_error(tmp_path):
    job = make_job(tmp_path, layers=(("conv9", "conv9"),))
    with pytest.raises(ConfigurationError, match="conv9"):
        export_conv_features(job, tiny_cnn())


def test_acceptance_criterion_12_roundtrip(tmp_path):
    """Exported workspaces load in the main package and every tensor file
    survives a read/rewrite cycle bit-exactly."""
    job = make_job(tmp_path, per_class=2)  # 4 images x 2 scales x 5 layers
    manifest_path = export_conv_features(job, tiny_cnn())

    manifest = adpm.load_manifest(manifest_path)  # raises on any validation error
    assert len(manifest.records) == 8

    checked = 0
    for tensor_path in sorted((tmp_path / "ws" / "tensors").glob("*.adpm")):
        original = tensor_path.read_bytes()
        fmap = adpm.read_tensor_file(tensor_path)
        buffer = io.BytesIO()
        adpm.write_tensor(fmap, buffer)
        assert buffer.getvalue() == original, tensor_path.name
        checked += 1
    assert checked == 40
    print(f"[acceptance] criterion 12 PASS  exporter workspace round-trips {checked} tensors bit-exactly")


def test_per_scale_shapes_consistent(tmp_path):
    job = make_job(tmp_path, per_class=2)
    manifest = adpm.load_manifest(export_conv_features(job, tiny_cnn()))
    by_scale = {}
    for record in manifest.records:
        shapes = tuple((m.height, m.width, m.channels) for m in record.layer_maps)
        by_scale.setdefault(record.scale_tag, set()).add(shapes)
    assert set(by_scale) == {"16", "24"}
    for shapes in by_scale.values():
        assert len(shapes) == 1
    # conv3..conv5 sit behind a stride-2 pool: half the warp size
    shape16 = next(iter(by_scale["16"]))
    assert shape16[0][:2] == (16, 16)
    assert shape16[2][:2] == (8, 8)


def test_undecodable_image_skipped_with_warning(tmp_path):
    job = make_job(tmp_path, corrupt=("forest/broken.png",))
    with pytest.warns(UserWarning, match="broken"):
        manifest_path = export_conv_features(job, tiny_cnn())
    manifest = adpm.load_manifest(manifest_path)
    assert len(manifest.records) == 4  # the two good images at two scales


def test_export_is_deterministic(tmp_path):
    job_a = make_job(tmp_path / "a")
    job_b = make_job(tmp_path / "b")
    export_conv_features(job_a, tiny_cnn(seed=3))
    export_conv_features(job_b, tiny_cnn(seed=3))
    files_a = sorted((tmp_path / "a" / "ws").rglob("*.adpm"))
    files_b = sorted((tmp_path / "b" / "ws").rglob("*.adpm"))
    assert [f.name for f in files_a] == [f.name for f in files_b]
    for fa, fb in zip(files_a, files_b):
        assert fa.read_bytes() == fb.read_bytes()


def test_export_manifest_rejects_zero_records(tmp_path):
    with pytest.raises(ExporterError):
        export_manifest([], tmp_path, num_classes=2, layer_names=["conv1"])


def test_manifest_records_capture_taps(tmp_path):
    job = make_job(tmp_path)
    manifest = adpm.load_manifest(export_conv_features(job, tiny_cnn()))
    assert any("capture taps" in c for c in manifest.comments)
    assert any("forest=0" in c for c in manifest.comments)


def test_job_validation():
    with pytest.raises(ConfigurationError):
        ExportJob(image_dir=".", scales=(), layers=(("c", "c"),), out_dir="x")
    with pytest.raises(ConfigurationError):
        ExportJob(image_dir=".", scales=(-2,), layers=(("c", "c"),), out_dir="x")
    with pytest.raises(ConfigurationError):
        ExportJob(image_dir=".", scales=(8,), layers=(), out_dir="x")


def test_cli_end_to_end(tmp_path, capsys):
    write_images(tmp_path / "images")
    code = cli_main(
        [
            "--images", str(tmp_path / "images"),
            "--out", str(tmp_path / "ws"),
            "--model", "builtin:tiny",
            "--scale", "16",
            "--layer", "conv1=conv1",
            "--layer", "conv5=conv5",
            "--note", "taps are pre-activation conv outputs",
        ]
    )
    assert code == 0
    manifest_path = tmp_path / "ws" / "export.manifest"
    assert manifest_path.is_file()
    manifest = adpm.load_manifest(manifest_path)
    assert manifest.layer_names == ("conv1", "conv5")
    assert any("pre-activation" in c for c in manifest.comments)


def test_cli_bad_layer_exit_code(tmp_path):
    write_images(tmp_path / "images")
    code = cli_main(
        [
            "--images", str(tmp_path / "images"),
            "--out", str(tmp_path / "ws"),
            "--model", "builtin:tiny",
            "--scale", "16",
            "--layer", "conv9=conv9",
        ]
    )
    assert code == 2

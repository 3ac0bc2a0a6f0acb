import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofmtlab.errors import CorruptWeightsError, FormatError, IncompatibleWeightsError, SpecError
from ofmtlab.models import (
    MAGIC,
    PRESETS,
    ModelSpec,
    ModelWeights,
    build_c3d,
    build_lenet2d,
    build_model,
    expected_parameter_count,
    load_model,
    load_weights,
    preset,
    read_weight_file,
    save_weights,
    spec_path,
)
from ofmtlab.tensor import Conv, Dense, MaxPool

# Parameter totals worked out by hand from the layer recipes:
# lenet-full = (32*9+32) + (64*32*25+64) + (64*13*13*1024+1024) + (1024*10+10)
FROZEN_COUNTS = {
    "c3d-desk": 115_978,
    "c3d-full": 11_480_074,
    "lenet-desk": 698_346,
    "lenet-full": 11_138_442,
}


def conv_channels(model):
    return [layer.params.weights.shape[0] for layer in model if isinstance(layer, Conv)]


def dense_units(model):
    return [layer.params.weights.shape[0] for layer in model if isinstance(layer, Dense)]


class TestArchitecture:
    def test_c3d_temporal_ladder(self):
        m = build_c3d(preset("c3d-full"))
        pooled = [s for layer, s in zip(m, m.shapes()) if isinstance(layer, MaxPool)]
        assert [s[1] for s in pooled] == [16, 8, 4, 2, 1]
        assert [s[2] for s in pooled] == [56, 28, 14, 7, 3]

    def test_c3d_full_channels(self):
        m = build_c3d(preset("c3d-full"))
        assert conv_channels(m) == [64, 128, 256, 256, 256]
        assert dense_units(m) == [2048, 1024, 10]

    def test_c3d_eighth_scale(self):
        m = build_c3d(preset("c3d-desk"))
        assert conv_channels(m) == [8, 16, 32, 32, 32]
        assert dense_units(m) == [256, 128, 10]

    def test_c3d_pool_sizes(self):
        pools = [layer.window for layer in build_c3d(preset("c3d-desk")) if isinstance(layer, MaxPool)]
        assert pools == [(1, 2, 2)] + [(2, 2, 2)] * 4

    def test_c3d_rejects_short_clips(self):
        with pytest.raises(SpecError, match="temporal"):
            build_c3d(ModelSpec("C3D", (3, 8, 32, 32), 0.125))
        with pytest.raises(SpecError, match="spatial"):
            build_c3d(ModelSpec("C3D", (3, 16, 16, 16), 0.125))

    def test_lenet_feature_maps(self):
        m = build_lenet2d(preset("lenet-full"))
        spatial = [s[1] for s in m.shapes() if len(s) == 3]
        assert spatial == [62, 62, 31, 27, 27, 13]
        assert conv_channels(m) == [32, 64]
        assert dense_units(m) == [1024, 10]

    def test_lenet_too_small(self):
        with pytest.raises(SpecError):
            build_lenet2d(ModelSpec("LeNet2D", (1, 12, 12)))

    def test_rgb_or_gray_c3d(self):
        m = build_c3d(ModelSpec("C3D", (1, 16, 32, 32), 0.125))
        assert m.forward(np.zeros((2, 1, 16, 32, 32), np.float32)).shape == (2, 10)

    @pytest.mark.parametrize("name", sorted(FROZEN_COUNTS))
    def test_parameter_counts(self, name):
        spec = preset(name)
        model = build_model(spec)
        assert model.parameter_count() == FROZEN_COUNTS[name]
        assert expected_parameter_count(spec) == FROZEN_COUNTS[name]

    @given(st.sampled_from([1 / 8, 1 / 4, 0.3, 1 / 2]), st.integers(2, 12))
    @settings(max_examples=10, deadline=None)
    def test_count_formula_matches_built_model(self, mult, classes):
        for kind, shape in (("C3D", (2, 16, 32, 32)), ("LeNet2D", (1, 40, 36))):
            spec = ModelSpec(kind, shape, mult, classes)
            built = build_model(spec)
            by_shape = sum(math.prod(t.shape) for t in built.tensors())
            assert expected_parameter_count(spec) == built.parameter_count() == by_shape

    @pytest.mark.parametrize("name", ["c3d-desk", "lenet-desk"])
    def test_softmax_outputs_and_eval_determinism(self, name):
        spec = preset(name)
        m = build_model(spec, seed=4)
        x = np.random.default_rng(0).random((3, *spec.input_shape), dtype=np.float32)
        p1, p2 = m.predict_proba(x), m.predict_proba(x)
        np.testing.assert_allclose(p1.sum(1), 1.0, atol=1e-6)
        np.testing.assert_array_equal(p1, p2)

    def test_invalid_specs(self):
        with pytest.raises(SpecError):
            ModelSpec("C3D", (3, 16, 32, 32), 0.0)
        with pytest.raises(SpecError):
            ModelSpec("C3D", (3, 16, 32, 32), 1.5)
        with pytest.raises(SpecError):
            ModelSpec("LeNet2D", (1, 64, 64), num_classes=1)
        with pytest.raises(SpecError):
            ModelSpec("RNN", (1, 64, 64))
        with pytest.raises(SpecError):
            preset("nope")

    def test_tiny_multiplier_keeps_one_channel(self):
        m = build_model(ModelSpec("LeNet2D", (1, 32, 32), 0.001))
        assert conv_channels(m) == [1, 1]


class TestWeights:
    def test_roundtrip_is_bit_exact(self, tmp_path):
        m = build_model(preset("c3d-desk"), seed=9)
        path = save_weights(ModelWeights.from_model(m), tmp_path / "c3d.bin")
        assert spec_path(path).exists()
        loaded = load_model(path)
        for a, b in zip(m.tensors(), loaded.tensors()):
            assert a.data.tobytes() == b.data.tobytes()

    def test_layout(self, tmp_path):
        m = build_model(ModelSpec("LeNet2D", (1, 20, 20), 0.1, 3))
        path = save_weights(ModelWeights.from_model(m), tmp_path / "w.bin")
        buf = path.read_bytes()
        assert buf[:4] == MAGIC
        version, count = np.frombuffer(buf[4:12], "<u4")
        assert version == 1 and count == 8
        name_len = int(np.frombuffer(buf[12:16], "<u4")[0])
        assert buf[16 : 16 + name_len] == b"conv1.weight"
        names = [n for n, _ in read_weight_file(path)]
        assert names[:2] == ["conv1.weight", "conv1.bias"] and names[-1] == "fc4.bias"

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FormatError, match="magic"):
            read_weight_file(p)

    def test_truncated_file(self, tmp_path):
        m = build_model(preset("lenet-desk"))
        path = save_weights(ModelWeights.from_model(m), tmp_path / "w.bin")
        data = path.read_bytes()
        for cut in (10, 40, len(data) - 3):
            path.write_bytes(data[:cut])
            with pytest.raises(CorruptWeightsError):
                read_weight_file(path)

    def test_trailing_bytes(self, tmp_path):
        m = build_model(ModelSpec("LeNet2D", (1, 20, 20), 0.1))
        path = save_weights(ModelWeights.from_model(m), tmp_path / "w.bin")
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(CorruptWeightsError):
            read_weight_file(path)

    def test_wrong_multiplier_names_first_layer(self, tmp_path):
        m = build_model(preset("c3d-desk"))
        path = save_weights(ModelWeights.from_model(m), tmp_path / "w.bin")
        with pytest.raises(IncompatibleWeightsError, match="conv1"):
            load_weights(path, preset("c3d-desk", width_multiplier=0.25))

    def test_fingerprint_mismatch(self, tmp_path):
        spec = preset("lenet-desk")
        m = build_model(spec)
        path = save_weights(ModelWeights.from_model(m), tmp_path / "w.bin")
        # Same shapes, different dropout: shapes pass, fingerprint does not.
        with pytest.raises(IncompatibleWeightsError, match="fingerprint"):
            load_weights(path, preset("lenet-desk", dropout_rate=0.5))

    def test_sidecar_is_json_spec(self, tmp_path):
        spec = preset("lenet-desk")
        path = save_weights(ModelWeights.from_model(build_model(spec)), tmp_path / "w.bin")
        meta = json.loads(spec_path(path).read_text())
        assert ModelSpec.from_dict(meta["spec"]) == spec
        assert meta["fingerprint"] == spec.fingerprint()

    def test_missing_sidecar_needs_spec(self, tmp_path):
        spec = preset("lenet-desk")
        path = save_weights(ModelWeights.from_model(build_model(spec)), tmp_path / "w.bin")
        spec_path(path).unlink()
        with pytest.raises(FormatError):
            load_model(path)
        assert load_model(path, spec).spec == spec

    def test_transfer_evaluation_on_new_data(self, tmp_path):
        spec = preset("lenet-desk")
        trained = build_model(spec, seed=1)
        path = save_weights(ModelWeights.from_model(trained), tmp_path / "w.bin")
        other = np.random.default_rng(5).random((4, *spec.input_shape), dtype=np.float32)
        np.testing.assert_array_equal(load_model(path).predict_proba(other), trained.predict_proba(other))

    def test_presets_are_valid(self):
        for name, spec in PRESETS.items():
            assert spec == ModelSpec.from_dict(spec.to_dict()), name

import numpy as np
import pytest
import torch

from provtrace.embednet import (
    EmbedConfig,
    EmbeddingNet,
    build_network,
    count_parameters,
    embed_patches,
    layer_parameter_counts,
    load_checkpoint,
    patches_to_tensor,
    save_checkpoint,
)
from provtrace.errors import InvalidArchitectureError, ShapeError

# reported per-row trainable parameter counts for the default layout
EXPECTED_LAYER_COUNTS = [11_712, 166_080, 401_792, 819_968, 1_181_184, 4_719_616, 2_048, 262_400]


@pytest.fixture(scope="module")
def net():
    return build_network(seed=0)


class TestArchitecture:
    def test_spatial_trace(self):
        assert EmbedConfig().spatial_trace() == [72, 36, 42, 21, 25, 12, 14, 7, 7, 3]

    def test_total_parameter_count(self, net):
        assert count_parameters(net) == 7_564_800

    def test_per_layer_counts(self, net):
        assert layer_parameter_counts(net) == EXPECTED_LAYER_COUNTS

    def test_layer_counts_sum_to_total(self, net):
        assert sum(layer_parameter_counts(net)) == count_parameters(net)

    def test_conv1_closed_form(self):
        assert 32 * (3 * 11 * 11 + 1) + 2 * 32 == EXPECTED_LAYER_COUNTS[0]

    def test_input_32_rejected(self):
        with pytest.raises(InvalidArchitectureError):
            build_network(EmbedConfig(input_size=32))

    def test_tiny_input_underflows(self):
        with pytest.raises(InvalidArchitectureError):
            EmbedConfig(input_size=1, conv_blocks=((8, 11, 0),)).spatial_trace()

    def test_seeded_init_reproducible(self):
        a = build_network(seed=5)
        b = build_network(seed=5)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_different_seeds_differ(self):
        a = build_network(seed=5)
        b = build_network(seed=6)
        assert any(not torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters()))


class TestForward:
    def test_output_shape_and_unit_norm(self, net):
        rng = np.random.default_rng(0)
        patches = rng.integers(0, 256, size=(6, 64, 64, 3), dtype=np.uint8)
        emb = embed_patches(net, patches)
        assert emb.shape == (6, 256)
        assert np.allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-5)

    def test_identical_patches_identical_embeddings(self, net):
        rng = np.random.default_rng(1)
        patch = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        emb = embed_patches(net, np.stack([patch, patch]))
        assert np.array_equal(emb[0], emb[1])

    def test_batch_composition_invariance(self, net):
        rng = np.random.default_rng(2)
        patches = rng.integers(0, 256, size=(32, 64, 64, 3), dtype=np.uint8)
        single = embed_patches(net, patches[:1])
        batched = embed_patches(net, patches, batch_size=32)
        assert np.allclose(single[0], batched[0], atol=1e-5)

    def test_wrong_spatial_shape_rejected(self, net):
        net.eval()
        with pytest.raises(ShapeError):
            net(torch.zeros(1, 3, 32, 32))

    def test_wrong_channel_count_rejected(self, net):
        net.eval()
        with pytest.raises(ShapeError):
            net(torch.zeros(1, 1, 64, 64))

    def test_empty_batch(self, net):
        emb = embed_patches(net, np.zeros((0, 64, 64, 3), dtype=np.uint8))
        assert emb.shape == (0, 256)

    def test_intermediate_spatial_sizes(self, net):
        # forward hook audit of the Table-style trace on a real input
        sizes = []

        def hook(_module, _inp, out):
            sizes.append(out.shape[-1])

        handles = [m.register_forward_hook(hook) for m in net.features if isinstance(m, (torch.nn.Conv2d, torch.nn.MaxPool2d))]
        net.eval()
        with torch.no_grad():
            net(torch.zeros(1, 3, 64, 64))
        for h in handles:
            h.remove()
        assert sizes == [72, 36, 42, 21, 25, 12, 14, 7, 7, 3]


class TestTensorConversion:
    def test_scaling_and_layout(self):
        patches = np.zeros((2, 64, 64, 3), dtype=np.uint8)
        patches[0, 0, 0] = (255, 0, 51)
        t = patches_to_tensor(patches)
        assert t.shape == (2, 3, 64, 64)
        assert t[0, 0, 0, 0] == pytest.approx(1.0)
        assert t[0, 2, 0, 0] == pytest.approx(51 / 255)

    def test_wrong_dtype_rejected(self):
        with pytest.raises(ShapeError):
            patches_to_tensor(np.zeros((2, 64, 64, 3), dtype=np.float32))


class TestCheckpoint:
    def test_round_trip_preserves_weights_and_extra(self, tmp_path, net):
        opt = torch.optim.SGD(net.parameters(), lr=0.01, momentum=0.9, nesterov=True)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, net, optimizer=opt, extra={"epoch": 3})
        restored, payload = load_checkpoint(path)
        assert payload["extra"]["epoch"] == 3
        assert payload["optimizer"] is not None
        for pa, pb in zip(net.parameters(), restored.parameters()):
            assert torch.equal(pa, pb)

    def test_restored_network_same_outputs(self, tmp_path, net):
        rng = np.random.default_rng(3)
        patches = rng.integers(0, 256, size=(4, 64, 64, 3), dtype=np.uint8)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, net)
        restored, _ = load_checkpoint(path)
        assert np.array_equal(embed_patches(net, patches), embed_patches(restored, patches))

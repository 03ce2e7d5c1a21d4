"""Patch embedding network: five conv/batch-norm/pool blocks and two fully
connected layers mapping a 64x64 RGB patch to a unit-norm 256-d descriptor.

Patches are fed as float tensors in [0, 1] without any high-pass prefiltering.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .errors import InvalidArchitectureError, ShapeError

DEFAULT_CONV_BLOCKS = ((32, 11, 9), (64, 9, 7), (128, 7, 5), (256, 5, 3), (512, 3, 1))


@dataclass(frozen=True)
class EmbedConfig:
    """Network hyperparameters. Defaults reproduce the reference layout
    (7,564,800 trainable parameters for 64x64 inputs)."""

    input_size: int = 64
    conv_blocks: tuple = DEFAULT_CONV_BLOCKS
    fc_in: int = 4608
    fc_hidden: int = 1024
    embed_dim: int = 256

    def spatial_trace(self):
        """Feature map side length after each conv and each pool."""
        size = self.input_size
        trace = []
        for _, kernel, padding in self.conv_blocks:
            size = size + 2 * padding - kernel + 1
            if size < 1:
                raise InvalidArchitectureError(
                    f"feature map underflows at kernel {kernel} (padded input smaller than kernel)"
                )
            trace.append(size)
            size = size // 2
            if size < 1:
                raise InvalidArchitectureError("pooling collapses the feature map to zero")
            trace.append(size)
        return trace

    def flatten_dim(self) -> int:
        return self.conv_blocks[-1][0] * self.spatial_trace()[-1] ** 2

    def validate(self) -> None:
        flat = self.flatten_dim()
        if flat != self.fc_in:
            raise InvalidArchitectureError(
                f"input {self.input_size} flattens to {flat} features, fc1 expects {self.fc_in}"
            )


class EmbeddingNet(nn.Module):
    def __init__(self, config: EmbedConfig):
        super().__init__()
        config.validate()
        self.config = config
        layers = []
        in_ch = 3
        for out_ch, kernel, padding in config.conv_blocks:
            layers += [
                nn.Conv2d(in_ch, out_ch, kernel, padding=padding),
                nn.BatchNorm2d(out_ch),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(2),
            ]
            in_ch = out_ch
        self.features = nn.Sequential(*layers)
        self.fc1 = nn.Linear(config.fc_in, config.fc_hidden)
        self.bn_fc = nn.BatchNorm1d(config.fc_hidden)
        # no activation between the fully connected layers
        self.fc2 = nn.Linear(config.fc_hidden, config.embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s = self.config.input_size
        if x.ndim != 4 or tuple(x.shape[1:]) != (3, s, s):
            raise ShapeError(f"expected (N, 3, {s}, {s}) input, got {tuple(x.shape)}")
        z = self.features(x).flatten(1)
        z = self.fc2(self.bn_fc(self.fc1(z)))
        return nn.functional.normalize(z, dim=1)


def build_network(config: EmbedConfig | None = None, seed: int = 0) -> EmbeddingNet:
    """Construct the network with seeded fan-in-scaled random init."""
    config = config or EmbedConfig()
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return EmbeddingNet(config)


def count_parameters(network: nn.Module) -> int:
    return sum(p.numel() for p in network.parameters() if p.requires_grad)


def layer_parameter_counts(network: EmbeddingNet):
    """Trainable parameters per reported row: one entry per conv block
    (conv + its batch norm), then fc1, the 1-d batch norm, and fc2."""
    counts = []
    modules = list(network.features)
    for i in range(0, len(modules), 4):
        conv, bn = modules[i], modules[i + 1]
        counts.append(count_parameters(conv) + count_parameters(bn))
    counts.append(count_parameters(network.fc1))
    counts.append(count_parameters(network.bn_fc))
    counts.append(count_parameters(network.fc2))
    return counts


def patches_to_tensor(patches: np.ndarray) -> torch.Tensor:
    """uint8 (N, S, S, 3) patches to a float32 (N, 3, S, S) tensor in [0, 1]."""
    patches = np.asarray(patches)
    if patches.ndim != 4 or patches.shape[-1] != 3 or patches.dtype != np.uint8:
        raise ShapeError(f"expected uint8 (N, S, S, 3) patches, got {patches.shape} {patches.dtype}")
    return torch.from_numpy(patches.astype(np.float32) / 255.0).permute(0, 3, 1, 2).contiguous()


def embed_patches(network: EmbeddingNet, patches: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Evaluation-mode embeddings for a uint8 patch array, as (N, 256) float32."""
    network.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(patches), batch_size):
            batch = patches_to_tensor(patches[start : start + batch_size])
            out.append(network(batch).numpy())
    if not out:
        return np.zeros((0, network.config.embed_dim), dtype=np.float32)
    return np.concatenate(out)


def save_checkpoint(path, network: EmbeddingNet, optimizer=None, extra: dict | None = None) -> None:
    payload = {
        "config": asdict(network.config),
        "model": network.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path):
    """Rebuild the saved network; returns (network, payload) where payload
    keeps the optimizer state and extras for training resume."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    config_dict = dict(payload["config"])
    config_dict["conv_blocks"] = tuple(tuple(b) for b in config_dict["conv_blocks"])
    network = EmbeddingNet(EmbedConfig(**config_dict))
    network.load_state_dict(payload["model"])
    return network, payload

"""Model loading helpers.

The exporter is model-agnostic: it hooks whatever module names the user
asks for. Specs:

    factory:<module>:<callable>   import and call, e.g. factory:mypkg.nets:build
    script:<path>                 torch.jit.load
    torchvision:<name>[:weights]  torchvision.models.get_model(weights=None),
                                  optionally loading a local state-dict file
    builtin:tiny                  a small seeded 5-conv network for smoke tests
"""

from __future__ import annotations

import importlib

import torch
from torch import nn

from .export import ConfigurationError


class TinyConvNet(nn.Module):
    """Five convolutions with one mid-network pooling stage; random but seeded."""

    def __init__(self, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.conv1 = nn.Conv2d(3, 4, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(4, 4, kernel_size=3, padding=1)
        self.pool = nn.MaxPool2d(2)
        self.conv3 = nn.Conv2d(4, 6, kernel_size=3, padding=1)
        self.conv4 = nn.Conv2d(6, 6, kernel_size=3, padding=1)
        self.conv5 = nn.Conv2d(6, 8, kernel_size=3, padding=1)

    def forward(self, x):
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        x = self.pool(x)
        x = torch.relu(self.conv3(x))
        x = torch.relu(self.conv4(x))
        x = torch.relu(self.conv5(x))
        return x


def tiny_cnn(seed: int = 0) -> nn.Module:
    return TinyConvNet(seed=seed)


def load_model(spec: str) -> nn.Module:
    kind, _, rest = spec.partition(":")
    if kind == "builtin":
        if rest != "tiny":
            raise ConfigurationError(f"unknown builtin model {rest!r}")
        return tiny_cnn()
    if kind == "script":
        if not rest:
            raise ConfigurationError("script: needs a path")
        return torch.jit.load(rest, map_location="cpu")
    if kind == "factory":
        module_name, _, attr = rest.rpartition(":")
        if not module_name or not attr:
            raise ConfigurationError("factory: needs <module>:<callable>")
        module = importlib.import_module(module_name)
        return getattr(module, attr)()
    if kind == "torchvision":
        name, _, weights_path = rest.partition(":")
        from torchvision import models as tv_models

        model = tv_models.get_model(name, weights=None)
        if weights_path:
            state = torch.load(weights_path, map_location="cpu")
            model.load_state_dict(state)
        return model
    raise ConfigurationError(f"unknown model spec {spec!r} (use builtin:/script:/factory:/torchvision:)")

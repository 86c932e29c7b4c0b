"""Export TorchScript modules consumed by the Rust crates.

    python scripts/export_torchscript.py fixtures OUT_DIR
        Tiny randomly initialised modules used by the test suite.

    python scripts/export_torchscript.py backbones OUT_DIR [--weights]
        torchvision classifiers with the classification layer removed, for
        `affgan classify --backbone-dir OUT_DIR`. Input: RGB in [0, 1];
        ImageNet normalisation happens inside the module. Pretrained weights
        need network access (or a populated torch hub cache).

    python scripts/export_torchscript.py inception OUT_DIR
        torchvision Inception-v3 as a metrics extractor: [-1, 1] input at
        299px, returns (pool features [n, 2048], logits [n, 1000]).
"""

import argparse
import pathlib

import torch
from torch import nn


class TinyBackbone(nn.Module):
    def __init__(self, dim=16):
        super().__init__()
        self.conv = nn.Conv2d(3, dim, 3, stride=2, padding=1)
        self.bn = nn.BatchNorm2d(dim)

    def forward(self, x):
        return torch.relu(self.bn(self.conv(x))).mean(dim=(2, 3))


class TinyExtractor(nn.Module):
    def __init__(self, dim=32, classes=10):
        super().__init__()
        self.conv = nn.Conv2d(3, dim, 3, stride=2, padding=1)
        self.fc = nn.Linear(dim, classes)

    def forward(self, x):
        f = torch.tanh(self.conv(x)).mean(dim=(2, 3))
        return f, self.fc(f)


class FeaturesOnly(nn.Module):
    def __init__(self, dim=24):
        super().__init__()
        self.conv = nn.Conv2d(3, dim, 3, padding=1)

    def forward(self, x):
        return self.conv(x).amax(dim=(2, 3))


class Normalised(nn.Module):
    def __init__(self, body):
        super().__init__()
        self.body = body
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x):
        return torch.flatten(self.body((x - self.mean) / self.std), 1)


def fixtures(out):
    torch.manual_seed(0)
    torch.jit.script(TinyBackbone()).save(str(out / "tiny_backbone.pt"))
    torch.jit.script(TinyExtractor().eval()).save(str(out / "tiny_extractor.pt"))
    torch.jit.script(FeaturesOnly().eval()).save(str(out / "features_only.pt"))


def backbones(out, weights):
    import torchvision.models as tv

    def strip(model, attr):
        setattr(model, attr, nn.Identity())
        return model

    w = "DEFAULT" if weights else None
    models = {
        "resnet18": lambda: strip(tv.resnet18(weights=w), "fc"),
        "resnet152": lambda: strip(tv.resnet152(weights=w), "fc"),
        "efficientnet_b7": lambda: strip(tv.efficientnet_b7(weights=w), "classifier"),
    }
    for name, make in models.items():
        torch.jit.script(Normalised(make())).save(str(out / f"{name}.pt"))
    vgg = tv.vgg19(weights=w)
    vgg.classifier = nn.Sequential(*list(vgg.classifier.children())[:-1])
    torch.jit.script(Normalised(vgg)).save(str(out / "vgg19.pt"))


class InceptionFeatures(nn.Module):
    def __init__(self, net):
        super().__init__()
        self.net = net
        self.fc = net.fc
        net.fc = nn.Identity()

    def forward(self, x):
        # [-1, 1] -> ImageNet normalisation the torchvision weights expect.
        x = (x + 1.0) / 2.0
        mean = torch.tensor([0.485, 0.456, 0.406], device=x.device).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225], device=x.device).view(1, 3, 1, 1)
        f = self.net((x - mean) / std)
        return f, self.fc(f)


def inception(out):
    import torchvision.models as tv

    net = tv.inception_v3(weights="DEFAULT", aux_logits=True).eval()
    net.aux_logits = False
    net.AuxLogits = None
    torch.jit.script(InceptionFeatures(net).eval()).save(str(out / "inception_v3.pt"))


def main():
    p = argparse.ArgumentParser()
    p.add_argument("what", choices=["fixtures", "backbones", "inception"])
    p.add_argument("out", type=pathlib.Path)
    p.add_argument("--weights", action="store_true")
    a = p.parse_args()
    a.out.mkdir(parents=True, exist_ok=True)
    if a.what == "fixtures":
        fixtures(a.out)
    elif a.what == "backbones":
        backbones(a.out, a.weights)
    else:
        inception(a.out)


if __name__ == "__main__":
    main()

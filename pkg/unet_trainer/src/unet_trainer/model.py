"""Small 2D U-Net (3 pooling levels) with Monte-Carlo dropout in the
bottleneck, predicting the six phantom classes per pixel.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .data import NUM_CLASSES


class DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    """Input (N, 1, H, W) with H, W divisible by 8; output (N, 6, H, W).

    The forward pass feeds the encoder the raw window-normalized slice plus
    a contrast-stretched copy of the phantom-material intensity band, so the
    small HU steps between rods stay resolvable.
    """

    # phantom materials span roughly -100..400 HU, i.e. this slice of the
    # [0, 1] full-window normalization
    _BAND_LO = (-100.0 + 1024.0) / 4095.0
    _BAND_HI = (400.0 + 1024.0) / 4095.0

    def __init__(self, base_channels: int = 16, dropout: float = 0.15):
        super().__init__()
        c = base_channels
        self.enc1 = DoubleConv(2, c)
        self.enc2 = DoubleConv(c, 2 * c)
        self.enc3 = DoubleConv(2 * c, 4 * c)
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = nn.Sequential(DoubleConv(4 * c, 8 * c), nn.Dropout2d(dropout))
        self.up3 = nn.ConvTranspose2d(8 * c, 4 * c, 2, stride=2)
        self.dec3 = DoubleConv(8 * c, 4 * c)
        self.up2 = nn.ConvTranspose2d(4 * c, 2 * c, 2, stride=2)
        self.dec2 = DoubleConv(4 * c, 2 * c)
        self.up1 = nn.ConvTranspose2d(2 * c, c, 2, stride=2)
        self.dec1 = DoubleConv(2 * c, c)
        self.head = nn.Conv2d(c, NUM_CLASSES, 1)

    def forward(self, x):
        stretched = torch.clamp((x - self._BAND_LO) / (self._BAND_HI - self._BAND_LO), 0.0, 1.0)
        e1 = self.enc1(torch.cat([x, stretched], dim=1))
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        b = self.bottleneck(self.pool(e3))
        d3 = self.dec3(torch.cat([self.up3(b), e3], dim=1))
        d2 = self.dec2(torch.cat([self.up2(d3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.head(d1)


def enable_mc_dropout(model: nn.Module) -> None:
    """Switch only dropout layers to training mode for stochastic passes."""
    for module in model.modules():
        if isinstance(module, (nn.Dropout, nn.Dropout2d)):
            module.train()

"""Synthetic waveforms for segmentation tests."""
import numpy as np

SR = 16_000


def tone(seconds, freq=440.0, amp=0.5, sr=SR):
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t)


def silence(seconds, sr=SR):
    return np.zeros(int(round(seconds * sr)))


def two_bursts(sr=SR):
    """1 s silence, 2 s tone, 150 ms silence, 2 s tone, 1 s silence."""
    return np.concatenate([silence(1.0, sr), tone(2.0, sr=sr), silence(0.15, sr), tone(2.0, sr=sr), silence(1.0, sr)])


def short_burst(sr=SR):
    return np.concatenate([silence(1.0, sr), tone(0.5, sr=sr), silence(1.0, sr)])

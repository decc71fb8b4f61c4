"""Per-request network time over emulated WAN links.

Transfers are counted in round trips: a slow-start doubling model gives
the base count, loss adds retransmission rounds, and each round trip is
charged one sampled link delay (netem sits on one egress direction).
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

from .scenario import WanParams


@dataclass(frozen=True)
class TransferModelParams:
    mss_bytes: int = 1460
    init_window_segs: int = 10
    handshake_rounds: int = 0
    max_retries_per_round: int = 5
    # gateway -> worker connections are pooled, so their window is already open
    warm_window_segs: int = 1024

    def __post_init__(self):
        if self.mss_bytes <= 0 or self.init_window_segs <= 0 or self.warm_window_segs <= 0:
            raise ValueError("mss_bytes, init_window_segs and warm_window_segs must be > 0")
        if self.handshake_rounds < 0 or self.max_retries_per_round < 0:
            raise ValueError("handshake_rounds and max_retries_per_round must be >= 0")

    def internal(self) -> "TransferModelParams":
        return replace(self, init_window_segs=self.warm_window_segs, handshake_rounds=0)


class RngStream:
    """Named, seeded random stream. Same (seed, label) -> same sequence."""

    __slots__ = ("seed", "label", "_rng")

    def __init__(self, seed: int, label: str):
        self.seed = seed
        self.label = label
        self._rng = random.Random(f"{seed & 0xFFFFFFFFFFFFFFFF}:{label}")

    def gauss(self, mu: float, sigma: float) -> float:
        return self._rng.gauss(mu, sigma)

    def random(self) -> float:
        return self._rng.random()

    def uniform(self, a: float, b: float) -> float:
        return self._rng.uniform(a, b)


@dataclass
class NetStreams:
    ext_delay: RngStream
    int_delay: RngStream
    loss: RngStream

    @classmethod
    def from_seed(cls, seed: int) -> "NetStreams":
        return cls(RngStream(seed, "ext-delay"), RngStream(seed, "int-delay"), RngStream(seed, "loss"))


def sample_delay(link: WanParams, rng: RngStream) -> float:
    """One-way added delay: normal(latency, jitter) clamped at zero."""
    if link.jitter_ms == 0:
        return link.latency_ms
    d = rng.gauss(link.latency_ms, link.jitter_ms)
    return d if d > 0 else 0.0


def _segments(nbytes: int, mss: int) -> int:
    return -(-nbytes // mss)


def rounds_for(nbytes: int, params: TransferModelParams = TransferModelParams()) -> int:
    """Round trips to move ``nbytes`` when the window doubles from the initial window."""
    if nbytes < 0:
        raise ValueError("nbytes must be >= 0")
    segs = _segments(nbytes, params.mss_bytes)
    iw = params.init_window_segs
    if segs <= iw:
        return 1
    # smallest k with iw * 2**k >= segs
    q = -(-segs // iw)
    return 1 + (q - 1).bit_length()


def _retries(k: int, p: float, cap: int, rng: RngStream) -> int:
    extra = 0
    while extra < cap:
        if rng.random() >= 1.0 - (1.0 - p) ** k:
            break
        extra += 1
        k = max(1, round(k * p))
    return extra


def transfer_rounds_with_loss(nbytes: int, link: WanParams, params: TransferModelParams,
                              rng: RngStream) -> int:
    base = rounds_for(nbytes, params)
    p = link.loss_pct / 100.0
    if p == 0:
        return base
    segs = max(1, _segments(nbytes, params.mss_bytes))
    cap = params.max_retries_per_round
    window = params.init_window_segs
    total = base
    for _ in range(base):
        total += _retries(min(window, segs), p, cap, rng)
        window *= 2
    return total


def link_time_split(link: WanParams, req_bytes: int, resp_bytes: int, params: TransferModelParams,
                    delay_rng: RngStream, loss_rng: RngStream) -> tuple[float, float]:
    """(forward, backward) time on one link.

    The round trip carrying the last request flight and the first response
    flight is split evenly between the two directions.
    """
    if link.is_zero:
        return 0.0, 0.0
    rq = transfer_rounds_with_loss(req_bytes, link, params, loss_rng)
    rs = transfer_rounds_with_loss(resp_bytes, link, params, loss_rng)
    pivot = params.handshake_rounds + rq
    fwd = 0.0
    for _ in range(pivot - 1):
        fwd += sample_delay(link, delay_rng)
    half = sample_delay(link, delay_rng) / 2
    back = half
    for _ in range(rs - 1):
        back += sample_delay(link, delay_rng)
    return fwd + half, back


def network_time_split(ext: WanParams, int_hops: Sequence[WanParams], req_bytes: int, resp_bytes: int,
                       params: TransferModelParams, rng: NetStreams) -> tuple[float, float]:
    fwd, back = link_time_split(ext, req_bytes, resp_bytes, params, rng.ext_delay, rng.loss)
    inner = params.internal()
    for hop in int_hops:
        f, b = link_time_split(hop, req_bytes, resp_bytes, inner, rng.int_delay, rng.loss)
        fwd += f
        back += b
    return fwd, back


def request_network_time(ext: WanParams, int_hops: Sequence[WanParams], req_bytes: int, resp_bytes: int,
                         params: TransferModelParams, rng: NetStreams) -> float:
    """Total network time for one request through the gateway.

    The external (tester -> gateway) leg runs a fresh connection from the
    initial window; internal hops ride warm pooled connections.
    """
    fwd, back = network_time_split(ext, int_hops, req_bytes, resp_bytes, params, rng)
    return fwd + back


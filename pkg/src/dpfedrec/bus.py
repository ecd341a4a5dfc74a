"""In-process message bus standing in for the network between participants."""

from __future__ import annotations

import struct
import threading
from collections import defaultdict, deque


class BusError(RuntimeError):
    pass


class UnknownParticipant(BusError):
    pass


class EmptyChannel(BusError):
    pass


def frame(blob: bytes) -> bytes:
    return struct.pack(">I", len(blob)) + blob


def unframe(data: bytes) -> bytes:
    if len(data) < 4:
        raise BusError("truncated frame")
    (n,) = struct.unpack_from(">I", data)
    if len(data) != 4 + n:
        raise BusError(f"frame announces {n} bytes, carries {len(data) - 4}")
    return data[4:]


class MessageBus:
    """Per-channel FIFO delivery of length-prefixed frames.

    Every frame is tallied by channel and by a free-form ``kind`` tag so the
    communication cost of each protocol phase can be reported.
    """

    def __init__(self, participants=()):
        self._participants: set[int] = set()
        self._queues: dict[tuple[int, int], deque[bytes]] = defaultdict(deque)
        self._lock = threading.Lock()
        self.bytes_by_channel: dict[tuple[int, int], int] = defaultdict(int)
        self.bytes_by_kind: dict[str, int] = defaultdict(int)
        self.messages = 0
        for p in participants:
            self.register(p)

    def register(self, participant: int) -> None:
        with self._lock:
            self._participants.add(participant)

    def _check(self, *who: int) -> None:
        for p in who:
            if p not in self._participants:
                raise UnknownParticipant(f"participant {p} is not registered")

    def send(self, sender: int, recipient: int, blob: bytes, kind: str = "data") -> None:
        data = frame(bytes(blob))
        with self._lock:
            self._check(sender, recipient)
            self._queues[(sender, recipient)].append(data)
            self.bytes_by_channel[(sender, recipient)] += len(data)
            self.bytes_by_kind[kind] += len(data)
            self.messages += 1

    def recv(self, recipient: int, sender: int) -> bytes:
        with self._lock:
            self._check(sender, recipient)
            q = self._queues[(sender, recipient)]
            if not q:
                raise EmptyChannel(f"nothing pending from {sender} to {recipient}")
            data = q.popleft()
        return unframe(data)

    def pending(self, recipient: int, sender: int) -> int:
        with self._lock:
            return len(self._queues[(sender, recipient)])

    def total_bytes(self, *kinds: str) -> int:
        if not kinds:
            return sum(self.bytes_by_kind.values())
        return sum(self.bytes_by_kind.get(k, 0) for k in kinds)


class TaggedChannel:
    """View of a bus that stamps every message with one ``kind`` tag."""

    def __init__(self, bus: MessageBus, kind: str):
        self.bus, self.kind = bus, kind

    def send(self, sender: int, recipient: int, blob: bytes) -> None:
        self.bus.send(sender, recipient, blob, kind=self.kind)

    def recv(self, recipient: int, sender: int) -> bytes:
        return self.bus.recv(recipient, sender)

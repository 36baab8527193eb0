"""Run a third-party detector as a child process.

Protocol: the parent writes one ``timestamp,value`` line per record to the
child's stdin and waits for exactly one ``score`` line on its stdout.
"""

from __future__ import annotations

import os
import selectors
import shlex
import subprocess
import time

from ..corpus import TimeRecord, format_timestamp
from .base import AnomalyDetector, DetectorError

DEFAULT_TIMEOUT = 60.0


class ExternalDetector(AnomalyDetector):

    def __init__(self, command: str, timeout: float = DEFAULT_TIMEOUT):
        self.command = command
        self.timeout = timeout
        self._proc = None
        self._buf = b""

    @property
    def name(self):
        return f"external:{self.command}"

    def initialize(self, n_records, probation, min_value=None, max_value=None):
        super().initialize(n_records, probation)
        self.close()
        try:
            self._proc = subprocess.Popen(shlex.split(self.command), stdin=subprocess.PIPE,
                                          stdout=subprocess.PIPE, stderr=subprocess.DEVNULL)
        except OSError as exc:
            raise DetectorError(f"cannot start {self.command!r}: {exc}") from exc
        self._buf = b""

    def _readline(self) -> bytes:
        deadline = time.monotonic() + self.timeout
        fd = self._proc.stdout.fileno()
        with selectors.DefaultSelector() as sel:
            sel.register(fd, selectors.EVENT_READ)
            while b"\n" not in self._buf:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not sel.select(remaining):
                    raise DetectorError(f"{self.name}: timed out after {self.timeout} s")
                chunk = os.read(fd, 65536)
                if not chunk:
                    raise DetectorError(f"{self.name}: child exited (code {self._proc.poll()})")
                self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def step(self, record: TimeRecord) -> float:
        if self._proc is None:
            raise DetectorError(f"{self.name}: not initialized")
        try:
            self._proc.stdin.write(f"{format_timestamp(record.timestamp)},{record.value!r}\n".encode())
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise DetectorError(f"{self.name}: child exited ({exc})") from exc
        line = self._readline().decode(errors="replace").strip()
        try:
            score = float(line)
        except ValueError:
            raise DetectorError(f"{self.name}: malformed reply {line!r}") from None
        if not 0.0 <= score <= 1.0:
            raise DetectorError(f"{self.name}: score out of range: {score!r}")
        return score

    def close(self):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        for pipe in (proc.stdin, proc.stdout):
            try:
                pipe.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

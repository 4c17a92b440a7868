"""Newline-delimited JSON wire protocol for out-of-process providers.

One JSON object per line. The client opens with a handshake
    {"op": "hello", "vocab_size": V, "vocab_hash": "<hex64>"}  ->  {"ok": true}
then issues one step request per decoding step
    {"op": "step", "utt": "<id>", "history": [ids]}  ->  {"logits": [V floats]}
Floats are serialized in shortest round-trip decimal form (plain json),
so a served built-in provider decodes bit-identically to in-process use.
Endpoints are either "host:port" strings or argv lists for a subprocess
bridged over stdin/stdout.
"""

from __future__ import annotations

import json
import select
import socket
import subprocess
import sys
import threading

import numpy as np

from .core import Vocabulary
from .errors import ConfigurationError, ProviderIOError
from .providers import UtteranceContext


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ProviderIOError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(timeout)
        self._reader = self._sock.makefile("rb")

    def round_trip(self, payload: dict) -> dict:
        try:
            self._sock.sendall((json.dumps(payload) + "\n").encode("utf-8"))
            line = self._reader.readline()
        except OSError as exc:
            raise ProviderIOError(f"transport failure: {exc}") from exc
        if not line:
            raise ProviderIOError("connection closed by provider")
        return _parse_line(line)

    def close(self):
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass


class _ProcTransport:
    def __init__(self, command: list[str], timeout: float):
        self._timeout = timeout
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=False,
            )
        except OSError as exc:
            raise ProviderIOError(f"cannot start {command!r}: {exc}") from exc

    def round_trip(self, payload: dict) -> dict:
        proc = self._proc
        if proc.poll() is not None:
            raise ProviderIOError("provider subprocess has exited")
        try:
            proc.stdin.write((json.dumps(payload) + "\n").encode("utf-8"))
            proc.stdin.flush()
        except OSError as exc:
            raise ProviderIOError(f"transport failure: {exc}") from exc
        line = bytearray()
        while True:
            ready, _, _ = select.select([proc.stdout], [], [], self._timeout)
            if not ready:
                raise ProviderIOError(f"provider timed out after {self._timeout}s")
            chunk = proc.stdout.read1(4096)
            if not chunk:
                raise ProviderIOError("provider subprocess closed its output")
            line.extend(chunk)
            if b"\n" in chunk:
                break
        return _parse_line(bytes(line).split(b"\n", 1)[0])

    def close(self):
        self._proc.terminate()
        try:
            self._proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self._proc.kill()


def _parse_line(line: bytes) -> dict:
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProviderIOError(f"malformed response line: {exc}") from exc
    if not isinstance(msg, dict):
        raise ProviderIOError(f"expected a JSON object, got {type(msg).__name__}")
    return msg


class ExternalProvider:
    """Client side of the wire protocol; validates every response."""

    def __init__(self, transport, vocab: Vocabulary):
        self.vocab = vocab
        self._transport = transport
        self._lock = threading.Lock()
        reply = self._request(
            {"op": "hello", "vocab_size": vocab.size, "vocab_hash": vocab.content_hash()}
        )
        if reply.get("ok") is not True:
            self.close()
            raise ConfigurationError(
                f"provider refused handshake: {reply.get('error', reply)!r}"
            )

    def _request(self, payload: dict) -> dict:
        with self._lock:
            return self._transport.round_trip(payload)

    def next_logits(self, history, ctx: UtteranceContext) -> np.ndarray:
        reply = self._request(
            {"op": "step", "utt": ctx.utt_id, "history": [int(i) for i in history]}
        )
        if "logits" not in reply:
            raise ProviderIOError(f"step reply carries no logits: {reply!r}")
        logits = np.asarray(reply["logits"], dtype=np.float64)
        if logits.ndim != 1 or logits.size != self.vocab.size:
            raise ProviderIOError(
                f"expected {self.vocab.size} logits, got shape {logits.shape}"
            )
        if not np.all(np.isfinite(logits)):
            raise ProviderIOError("provider returned non-finite logits")
        return logits

    def close(self):
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect_external(endpoint, vocab: Vocabulary, timeout: float = 5.0) -> ExternalProvider:
    """Connect to "host:port" or spawn an argv-list subprocess endpoint."""
    if isinstance(endpoint, (list, tuple)):
        transport = _ProcTransport([str(c) for c in endpoint], timeout)
    else:
        host, _, port = str(endpoint).rpartition(":")
        if not host or not port.isdigit():
            raise ConfigurationError(f"endpoint must be host:port or argv list, got {endpoint!r}")
        transport = _TcpTransport(host, int(port), timeout)
    return ExternalProvider(transport, vocab)


def _handle_request(msg: dict, provider, contexts: dict[str, UtteranceContext]) -> dict:
    op = msg.get("op")
    if op == "hello":
        if msg.get("vocab_size") != provider.vocab.size:
            return {"ok": False, "error": "vocab_size mismatch"}
        if msg.get("vocab_hash") != provider.vocab.content_hash():
            return {"ok": False, "error": "vocab_hash mismatch"}
        return {"ok": True}
    if op == "step":
        ctx = contexts.get(msg.get("utt"))
        if ctx is None:
            return {"error": f"unknown utterance {msg.get('utt')!r}"}
        history = tuple(int(i) for i in msg.get("history", []))
        logits = provider.next_logits(history, ctx)
        return {"logits": [float(x) for x in logits]}
    return {"error": f"unknown op {op!r}"}


class ProviderServer:
    """Serve a built-in provider over TCP, one thread per connection."""

    def __init__(self, provider, contexts: dict[str, UtteranceContext],
                 host: str = "127.0.0.1", port: int = 0):
        self._provider = provider
        self._contexts = contexts
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen()
        self._stopping = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    @property
    def address(self) -> str:
        host, port = self._sock.getsockname()
        return f"{host}:{port}"

    def start(self) -> "ProviderServer":
        self._thread.start()
        return self

    def _accept_loop(self):
        while not self._stopping.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_connection, args=(conn,), daemon=True).start()

    def _serve_connection(self, conn: socket.socket):
        with conn, conn.makefile("rb") as reader:
            for line in reader:
                if not line.strip():
                    continue
                try:
                    msg = _parse_line(line)
                    reply = _handle_request(msg, self._provider, self._contexts)
                except Exception as exc:  # keep serving other connections
                    reply = {"error": str(exc)}
                try:
                    conn.sendall((json.dumps(reply) + "\n").encode("utf-8"))
                except OSError:
                    return
                if reply.get("ok") is False:
                    return

    def stop(self):
        self._stopping.set()
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def stdio_serve(provider, contexts: dict[str, UtteranceContext],
                stdin=None, stdout=None):
    """Serve over stdin/stdout; the loop ends at EOF or a failed handshake."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    for line in stdin:
        if not line.strip():
            continue
        try:
            reply = _handle_request(_parse_line(line), provider, contexts)
        except Exception as exc:
            reply = {"error": str(exc)}
        stdout.write((json.dumps(reply) + "\n").encode("utf-8"))
        stdout.flush()
        if reply.get("ok") is False:
            return

"""Request/response plumbing between clients and the API, in-process or over HTTP."""

from __future__ import annotations

import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable


@dataclass(frozen=True)
class Request:
    method: str
    path: str
    headers: dict = field(default_factory=dict)
    body: str = ""


@dataclass(frozen=True)
class Response:
    status: int
    body: str = ""


@dataclass(frozen=True)
class Exchange:
    """One request/response pair as it crossed the wire."""

    sender: str
    request: Request
    response: Response


class LocalTransport:
    """Hands requests straight to an in-process handler and keeps a wire capture."""

    def __init__(self, handler: Callable[[Request], Response]):
        self.handler = handler
        self.capture: list[Exchange] = []

    def send(self, sender: str, request: Request) -> Response:
        response = self.handler(request)
        self.capture.append(Exchange(sender, request, response))
        return response

    def exchanges(self, sender: str | None = None, path_prefix: str = "", method: str | None = None) -> list[Exchange]:
        return [
            ex
            for ex in self.capture
            if (sender is None or ex.sender == sender)
            and ex.request.path.startswith(path_prefix)
            and (method is None or ex.request.method == method)
        ]


class HttpTransport(LocalTransport):
    """Talks to a running ``tilesim serve`` instance."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        super().__init__(self._http)

    def _http(self, request: Request) -> Response:
        data = request.body.encode() if request.body else None
        headers = {"Content-Type": "application/json", **request.headers}
        req = urllib.request.Request(self.base_url + request.path, data=data, headers=headers, method=request.method)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return Response(resp.status, resp.read().decode())
        except urllib.error.HTTPError as err:
            return Response(err.code, err.read().decode())
